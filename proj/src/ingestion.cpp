#include "cxsim/ingestion.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "cxsim/error.hpp"
#include "cxsim/json.hpp"

namespace cxsim::ingestion {
namespace {

using nlohmann::json;

constexpr std::string_view kSegmentPrefix = "segment.";
constexpr std::string_view kEventPrefix = "event.";
constexpr std::array<std::string_view, 3> kRequiredSegmentKeys = {"country", "browser", "source"};

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

std::optional<std::int64_t> json_int(const json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d)) return static_cast<std::int64_t>(d);
    return std::nullopt;
  }
  if (v.is_string()) return parse_int(v.get_ref<const std::string&>());
  return std::nullopt;
}

// GA360 exports mix numbers and strings for the same column.
std::optional<std::string> json_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return v.dump();
  return std::nullopt;
}

bool fail(std::string* reason, std::string message) {
  if (reason) *reason = std::move(message);
  return false;
}

bool add_string_fields(const json& obj, std::string_view what, Descriptor& out,
                       std::string* reason) {
  if (!obj.is_object()) return fail(reason, std::string(what) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (key.empty()) return fail(reason, std::string(what) + " has an empty key");
    if (!value.is_string()) {
      return fail(reason, std::string(what) + "." + key + " must be a string");
    }
    out.set(key, value.get<std::string>());
  }
  return true;
}

std::optional<LogRecord> parse_native(const json& doc, std::string* reason) {
  LogRecord rec;
  auto sid = doc.find("sessionId");
  if (sid == doc.end() || !sid->is_string() || sid->get_ref<const std::string&>().empty()) {
    fail(reason, "missing or empty sessionId");
    return std::nullopt;
  }
  rec.session_id = sid->get<std::string>();

  auto ts = doc.find("ts");
  if (ts == doc.end()) {
    fail(reason, "missing ts");
    return std::nullopt;
  }
  auto ts_value = json_int(*ts);
  if (!ts_value) {
    fail(reason, "ts is not an integer epoch-millisecond value");
    return std::nullopt;
  }
  rec.timestamp_ms = *ts_value;

  for (const auto& [key, value] : doc.items()) {
    if (key == "sessionId" || key == "ts") continue;
    if (key == "segment") {
      if (!add_string_fields(value, "segment", rec.segment, reason)) return std::nullopt;
    } else if (key == "event") {
      if (!add_string_fields(value, "event", rec.event, reason)) return std::nullopt;
    } else if (key.starts_with(kSegmentPrefix) || key.starts_with(kEventPrefix)) {
      const bool is_segment = key.starts_with(kSegmentPrefix);
      const std::string field =
          key.substr(is_segment ? kSegmentPrefix.size() : kEventPrefix.size());
      if (field.empty() || !value.is_string()) {
        fail(reason, key + " must be a non-empty field name with a string value");
        return std::nullopt;
      }
      (is_segment ? rec.segment : rec.event).set(field, value.get<std::string>());
    } else {
      fail(reason, "unknown key '" + key + "'");
      return std::nullopt;
    }
  }
  for (auto key : kRequiredSegmentKeys) {
    if (!rec.segment.contains(key)) {
      fail(reason, "missing segment." + std::string(key));
      return std::nullopt;
    }
  }
  return rec;
}

std::string format_price_micros(std::int64_t micros) {
  std::array<char, 48> buf{};
  std::snprintf(buf.data(), buf.size(), "$%.2f", static_cast<double>(micros) / 1e6);
  return buf.data();
}

std::optional<LogRecord> parse_ga360(const json& doc, std::string* reason) {
  auto text_of = [&](std::string_view column) -> std::optional<std::string> {
    auto it = doc.find(column);
    if (it == doc.end() || it->is_null()) return std::nullopt;
    return json_text(*it);
  };

  LogRecord rec;
  auto visitor = text_of("fullVisitorId");
  auto visit = text_of("visitId");
  if (!visitor || !visit || visitor->empty() || visit->empty()) {
    fail(reason, "missing fullVisitorId or visitId");
    return std::nullopt;
  }
  rec.session_id = *visitor + "-" + *visit;

  auto start = doc.find("visitStartTime");
  auto offset = doc.find("hits.time");
  std::optional<std::int64_t> start_s = start != doc.end() ? json_int(*start) : std::nullopt;
  std::optional<std::int64_t> offset_ms = offset != doc.end() ? json_int(*offset) : std::int64_t{0};
  if (!start_s || !offset_ms) {
    fail(reason, "visitStartTime/hits.time not parseable");
    return std::nullopt;
  }
  rec.timestamp_ms = *start_s * 1000 + *offset_ms;

  static const std::array<std::pair<std::string_view, std::string_view>, 3> kSegmentColumns = {{
      {"geoNetwork.country", "country"},
      {"device.browser", "browser"},
      {"trafficSource.source", "source"},
  }};
  for (const auto& [column, field] : kSegmentColumns) {
    auto value = text_of(column);
    if (!value) {
      fail(reason, "missing " + std::string(column));
      return std::nullopt;
    }
    rec.segment.set(std::string(field), *value);
  }

  if (auto action = text_of("hits.eCommerceAction.action_type")) {
    rec.event.set("actionType", ga360_action_name(*action));
  }
  static const std::array<std::pair<std::string_view, std::string_view>, 4> kEventColumns = {{
      {"hits.page.pageTitle", "pageTitle"},
      {"hits.page.pagePath", "pagePath"},
      {"hits.product.v2ProductName", "productName"},
      {"hits.promotion.promoName", "campaignTitle"},
  }};
  for (const auto& [column, field] : kEventColumns) {
    if (auto value = text_of(column); value && !value->empty()) {
      rec.event.set(std::string(field), *value);
    }
  }
  if (auto it = doc.find("hits.product.localProductPrice"); it != doc.end() && !it->is_null()) {
    auto micros = json_int(*it);
    if (!micros) {
      fail(reason, "hits.product.localProductPrice is not an integer micro amount");
      return std::nullopt;
    }
    rec.event.set("localProductPrice", format_price_micros(*micros));
  }
  if (rec.event.empty()) {
    fail(reason, "hit carries no event fields");
    return std::nullopt;
  }
  return rec;
}

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  const std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(y)),
                                        std::chrono::month(m), std::chrono::day(d)};
  if (!ymd.ok()) throw Error(ErrorKind::kInvalidArgument, "invalid calendar date");
  return std::chrono::sys_days(ymd).time_since_epoch().count();
}

}  // namespace

std::string ga360_action_name(std::string_view code) {
  static const std::map<std::string_view, std::string_view> kNames = {
      {"0", "Unknown"},
      {"1", "Click through of product lists"},
      {"2", "Product detail views"},
      {"3", "Add product(s) to cart"},
      {"4", "Remove product(s) from cart"},
      {"5", "Check out"},
      {"6", "Completed purchase"},
      {"7", "Refund of purchase"},
      {"8", "Checkout options"},
  };
  auto it = kNames.find(code);
  return it == kNames.end() ? std::string(code) : std::string(it->second);
}

std::optional<LogRecord> parse_line(std::string_view line, LogFormat format,
                                    std::string* reason) {
  json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    fail(reason, "not valid JSON");
    return std::nullopt;
  }
  if (!doc.is_object()) {
    fail(reason, "record must be a JSON object");
    return std::nullopt;
  }
  return format == LogFormat::kNative ? parse_native(doc, reason) : parse_ga360(doc, reason);
}

ParseResult parse_log(std::istream& in, LogFormat format, bool strict) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::string reason;
    if (auto rec = parse_line(line, format, &reason)) {
      result.records.push_back(std::move(*rec));
      continue;
    }
    if (strict) {
      throw Error(ErrorKind::kMalformedRecord,
                  "line " + std::to_string(line_no) + ": " + reason);
    }
    result.errors.push_back({line_no, std::move(reason)});
  }
  return result;
}

SessionizeResult sessionize(const std::vector<LogRecord>& records,
                            const SessionizeOptions& options) {
  std::map<std::string_view, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[records[i].session_id].push_back(i);
  }

  SessionizeResult result;
  result.sessions.reserve(groups.size());
  for (auto& [session_id, indices] : groups) {
    // Ties on timestamp are broken by full record content so the result does
    // not depend on input order.
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      const auto& ra = records[a];
      const auto& rb = records[b];
      if (ra.timestamp_ms != rb.timestamp_ms) return ra.timestamp_ms < rb.timestamp_ms;
      const auto ca = canonicalize(ra.event);
      const auto cb = canonicalize(rb.event);
      if (ca != cb) return ca < cb;
      return canonicalize(ra.segment) < canonicalize(rb.segment);
    });

    SessionRecord session;
    session.session_id = std::string(session_id);
    session.segment = records[indices.front()].segment;
    for (std::size_t idx : indices) {
      const auto& rec = records[idx];
      if (rec.segment != session.segment) {
        const bool seen = std::any_of(
            result.conflicts.begin(), result.conflicts.end(), [&](const ConflictingSegment& c) {
              return c.session_id == session.session_id && c.ignored == rec.segment;
            });
        if (!seen) result.conflicts.push_back({session.session_id, session.segment, rec.segment});
      }
      if (options.dedupe_consecutive && !session.events.empty() &&
          session.events.back().descriptor == rec.event) {
        continue;
      }
      session.events.push_back({rec.timestamp_ms, rec.event});
    }
    result.sessions.push_back(std::move(session));
  }
  return result;
}

void TemporalSplit::validate() const {
  for (const auto* w : {&train, &validation, &test}) {
    if (w->start_ms >= w->end_ms) {
      throw Error(ErrorKind::kInvalidArgument, "time window must satisfy start < end");
    }
  }
  if (train.end_ms > validation.start_ms || validation.end_ms > test.start_ms) {
    throw Error(ErrorKind::kInvalidArgument,
                "windows must be ordered train < validation < test without overlap");
  }
}

Partition partition(const std::vector<SessionRecord>& sessions, const TemporalSplit& split) {
  split.validate();
  Partition out;
  for (const auto& session : sessions) {
    if (session.events.empty()) {
      ++out.dropped;
      continue;
    }
    const std::int64_t t = session.events.front().timestamp_ms;
    if (split.train.contains(t)) {
      out.train.push_back(session);
    } else if (split.validation.contains(t)) {
      out.validation.push_back(session);
    } else if (split.test.contains(t)) {
      out.test.push_back(session);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

void write_sessions(std::ostream& out, const std::vector<SessionRecord>& sessions) {
  for (const auto& s : sessions) out << json(s).dump() << '\n';
}

std::vector<SessionRecord> read_sessions(std::istream& in) {
  std::vector<SessionRecord> sessions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(ErrorKind::kFormat, "sessions line " + std::to_string(line_no) + ": invalid JSON");
    }
    sessions.push_back(doc.get<SessionRecord>());
  }
  return sessions;
}

std::int64_t parse_time_ms(std::string_view text) {
  if (auto v = parse_int(text)) return *v;
  // YYYY-MM-DD
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    auto y = parse_int(text.substr(0, 4));
    auto m = parse_int(text.substr(5, 2));
    auto d = parse_int(text.substr(8, 2));
    if (y && m && d && *m >= 1 && *m <= 12 && *d >= 1 && *d <= 31) {
      return days_from_civil(*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d)) *
             86'400'000;
    }
  }
  throw Error(ErrorKind::kInvalidArgument,
              "time must be epoch milliseconds or YYYY-MM-DD: '" + std::string(text) + "'");
}

}  // namespace cxsim::ingestion
