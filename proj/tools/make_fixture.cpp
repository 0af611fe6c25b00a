// Writes the synthetic storefront clickstream used by the end-to-end tests.

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

const std::array<const char*, 5> kCategories{"Apparel", "Bags", "Drinkware", "Office", "Lifestyle"};
const std::array<const char*, 4> kItems{"Classic", "Eco", "Premium", "Mini"};

// 2017-01-01, 2017-02-01, 2017-03-01, 2017-04-01 UTC.
const std::array<std::int64_t, 4> kMonths{1483228800000, 1485907200000, 1488326400000, 1491004800000};

struct Gen {
  std::mt19937_64 rng;
  double u() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(u() * static_cast<double>(n)); }
};

enum class Kind { kHome, kSearch, kList, kDetail, kCart, kCheckout, kPurchase, kEnd };

struct State {
  Kind kind;
  std::size_t category = 0;
  std::size_t item = 0;
};

json event_of(const State& s) {
  const std::string product = std::string(kItems[s.item]) + " " + kCategories[s.category];
  switch (s.kind) {
    case Kind::kHome:
      return {{"actionType", "Home page view"}};
    case Kind::kSearch:
      return {{"actionType", "Search results"}};
    case Kind::kList:
      return {{"actionType", "Click through of product lists"}, {"category", kCategories[s.category]}};
    case Kind::kDetail:
      return {{"actionType", "Product detail views"}, {"category", kCategories[s.category]}, {"productName", product}};
    case Kind::kCart:
      return {{"actionType", "Add product(s) to cart"}, {"category", kCategories[s.category]}, {"productName", product}};
    case Kind::kCheckout:
      return {{"actionType", "Check out"}};
    case Kind::kPurchase:
      return {{"actionType", "Completed purchase"}};
    case Kind::kEnd:
      break;
  }
  return nullptr;
}

// Popular categories and items come first.
std::size_t skewed(Gen& g, std::size_t n) {
  const double x = g.u();
  return std::min(n - 1, static_cast<std::size_t>(static_cast<double>(n) * x * x));
}

State next(Gen& g, const State& s) {
  const double x = g.u();
  State t = s;
  switch (s.kind) {
    case Kind::kHome:
      if (x < 0.6) return {Kind::kList, skewed(g, kCategories.size()), 0};
      if (x < 0.8) return {Kind::kSearch};
      return {Kind::kEnd};
    case Kind::kSearch:
      if (x < 0.7) return {Kind::kDetail, skewed(g, kCategories.size()), skewed(g, kItems.size())};
      return {Kind::kEnd};
    case Kind::kList:
      if (x < 0.6) return {Kind::kDetail, s.category, skewed(g, kItems.size())};
      if (x < 0.75) return {Kind::kList, g.pick(kCategories.size()), 0};
      return {Kind::kEnd};
    case Kind::kDetail:
      if (x < 0.25) return {Kind::kCart, s.category, s.item};
      if (x < 0.55) {
        t.item = g.pick(kItems.size());
        return t;
      }
      if (x < 0.7) return {Kind::kList, s.category, 0};
      return {Kind::kEnd};
    case Kind::kCart:
      if (x < 0.5) return {Kind::kCheckout};
      if (x < 0.8) return {Kind::kDetail, g.pick(kCategories.size()), g.pick(kItems.size())};
      return {Kind::kEnd};
    case Kind::kCheckout:
      if (x < 0.6) return {Kind::kPurchase};
      return {Kind::kEnd};
    case Kind::kPurchase:
      if (x < 0.1) return {Kind::kHome};
      return {Kind::kEnd};
    case Kind::kEnd:
      break;
  }
  return {Kind::kEnd};
}

State first(Gen& g) {
  const double x = g.u();
  if (x < 0.5) return {Kind::kHome};
  if (x < 0.8) return {Kind::kList, skewed(g, kCategories.size()), 0};
  return {Kind::kDetail, skewed(g, kCategories.size()), skewed(g, kItems.size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic storefront clickstream"};
  std::size_t per_month = 500;
  std::uint64_t seed = 7;
  std::string output;
  app.add_option("--sessions-per-month", per_month, "Sessions in each of the three months");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--output", output, "Output file; standard output when absent");
  CLI11_PARSE(app, argc, argv);

  std::ofstream file;
  if (!output.empty()) file.open(output, std::ios::binary);
  std::ostream& out = output.empty() ? std::cout : file;

  Gen g{std::mt19937_64(seed)};
  const json segment{{"browser", "Chrome"}, {"country", "United States"}, {"source", "google"}};
  std::size_t counter = 0;
  for (std::size_t month = 0; month < 3; ++month) {
    const auto span = kMonths[month + 1] - kMonths[month] - 3'600'000;
    for (std::size_t s = 0; s < per_month; ++s) {
      char id[32];
      std::snprintf(id, sizeof id, "m%zu-s%04zu", month + 1, s);
      std::int64_t ts = kMonths[month] + static_cast<std::int64_t>(g.u() * static_cast<double>(span));
      State st = first(g);
      for (int step = 0; step < 40 && st.kind != Kind::kEnd; ++step) {
        out << json{{"sessionId", id}, {"ts", ts}, {"segment", segment}, {"event", event_of(st)}}.dump() << '\n';
        ts += 15'000 + static_cast<std::int64_t>(g.pick(60'000));
        st = next(g, st);
      }
      // Two malformed lines exercise the lenient parser.
      if (++counter == 3) out << "{\"sessionId\": \"\", \"ts\": 1}\n";
      if (counter == 7) out << "not json\n";
    }
  }
  return 0;
}
