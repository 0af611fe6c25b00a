#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "cxsim/error.hpp"
#include "cxsim/ingestion.hpp"

using namespace cxsim;
using namespace cxsim::ingestion;

namespace {

std::string line(const std::string& sid, std::int64_t ts, const std::string& action,
                 const std::string& country = "United States") {
  return R"j({"sessionId": ")j" + sid + R"j(", "ts": )j" + std::to_string(ts) +
         R"j(, "segment": {"country": ")j" + country +
         R"j(", "browser": "Chrome", "source": "(direct)"}, "event": {"actionType": ")j" + action +
         R"j("}})j";
}

LogRecord record(const std::string& sid, std::int64_t ts, const std::string& action) {
  std::string reason;
  auto r = parse_line(line(sid, ts, action), LogFormat::kNative, &reason);
  REQUIRE_MESSAGE(r.has_value(), reason);
  return *r;
}

std::vector<std::string> actions(const SessionRecord& s) {
  std::vector<std::string> out;
  for (const auto& e : s.events) out.emplace_back(*e.descriptor.get("actionType"));
  return out;
}

}  // namespace

TEST_CASE("parse a valid native line") {
  auto rec = record("s1", 1470009600000, "Product detail views");
  CHECK(rec.session_id == "s1");
  CHECK(rec.timestamp_ms == 1470009600000);
  CHECK(*rec.segment.get("country") == "United States");
  CHECK(*rec.segment.get("browser") == "Chrome");
  CHECK(*rec.event.get("actionType") == "Product detail views");
}

TEST_CASE("dotted flat keys are accepted") {
  std::string reason;
  auto rec = parse_line(
      R"j({"sessionId":"s","ts":"5","segment.country":"JP","segment.browser":"Safari","segment.source":"google","event.pageTitle":"Home"})j",
      LogFormat::kNative, &reason);
  REQUIRE_MESSAGE(rec.has_value(), reason);
  CHECK(rec->timestamp_ms == 5);
  CHECK(*rec->event.get("pageTitle") == "Home");
  CHECK(*rec->segment.get("country") == "JP");
}

TEST_CASE("malformed lines are collected with line numbers") {
  std::stringstream in;
  in << line("s1", 1, "A") << "\n"
     << R"j({"ts": 2, "segment": {"country":"x","browser":"y","source":"z"}, "event": {}})j" << "\n"
     << "\n"
     << "not json\n"
     << R"j({"sessionId":"s2","ts":"yesterday","segment":{"country":"x","browser":"y","source":"z"},"event":{}})j"
     << "\n";
  auto result = parse_log(in);
  CHECK(result.records.size() == 1);
  REQUIRE(result.errors.size() == 3);
  CHECK(result.errors[0].line_no == 2);
  CHECK(result.errors[0].reason.find("sessionId") != std::string::npos);
  CHECK(result.errors[1].line_no == 4);
  CHECK(result.errors[2].line_no == 5);
}

TEST_CASE("strict mode stops at the first malformed line") {
  std::stringstream in;
  in << line("s1", 1, "A") << "\n{\"sessionId\": \"\"}\n";
  try {
    parse_log(in, LogFormat::kNative, true);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMalformedRecord);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("empty input yields nothing") {
  std::stringstream in;
  auto result = parse_log(in);
  CHECK(result.records.empty());
  CHECK(result.errors.empty());
}

TEST_CASE("missing segment field is malformed") {
  std::string reason;
  auto r = parse_line(R"j({"sessionId":"s","ts":1,"segment":{"country":"x","browser":"y"},"event":{"a":"b"}})j",
                      LogFormat::kNative, &reason);
  CHECK_FALSE(r.has_value());
  CHECK(reason == "missing segment.source");
}

TEST_CASE("GA360 columns map onto the native schema") {
  std::string reason;
  auto rec = parse_line(
      R"j({"fullVisitorId":"123","visitId":456,"visitStartTime":1470009600,"hits.time":1500,)j"
      R"j("geoNetwork.country":"United States","device.browser":"Chrome","trafficSource.source":"(direct)",)j"
      R"j("hits.eCommerceAction.action_type":"2","hits.page.pageTitle":"Office","hits.page.pagePath":"/store.html/quickview",)j"
      R"j("hits.product.v2ProductName":"Colored Pencil Set","hits.product.localProductPrice":3990000})j",
      LogFormat::kGa360, &reason);
  REQUIRE_MESSAGE(rec.has_value(), reason);
  CHECK(rec->session_id == "123-456");
  CHECK(rec->timestamp_ms == 1470009601500);
  CHECK(*rec->event.get("actionType") == "Product detail views");
  CHECK(*rec->event.get("localProductPrice") == "$3.99");
  CHECK(*rec->event.get("productName") == "Colored Pencil Set");
  CHECK(*rec->segment.get("source") == "(direct)");
  CHECK(ga360_action_name("6") == "Completed purchase");
  CHECK(ga360_action_name("42") == "42");
}

TEST_CASE("sessionize groups and time-orders shuffled records") {
  // Hand-constructed: s1 = A@10, B@20, C@30; s2 = D@5, E@15, F@25.
  std::vector<LogRecord> recs = {record("s2", 25, "F"), record("s1", 20, "B"), record("s2", 5, "D"),
                                 record("s1", 30, "C"), record("s1", 10, "A"), record("s2", 15, "E")};
  auto result = sessionize(recs);
  REQUIRE(result.sessions.size() == 2);
  CHECK(result.sessions[0].session_id == "s1");
  CHECK(actions(result.sessions[0]) == std::vector<std::string>{"A", "B", "C"});
  CHECK(actions(result.sessions[1]) == std::vector<std::string>{"D", "E", "F"});
  CHECK(result.conflicts.empty());
}

TEST_CASE("a single record is a one-event session") {
  auto result = sessionize({record("only", 1, "A")});
  REQUIRE(result.sessions.size() == 1);
  CHECK(result.sessions[0].events.size() == 1);
}

TEST_CASE("a session split across the stream is merged") {
  std::vector<LogRecord> recs = {record("s1", 1, "A"), record("s2", 2, "X"), record("s1", 3, "B")};
  auto result = sessionize(recs);
  REQUIRE(result.sessions.size() == 2);
  CHECK(actions(result.sessions[0]) == std::vector<std::string>{"A", "B"});
}

TEST_CASE("conflicting segments keep the earliest record's segment") {
  std::vector<LogRecord> recs = {record("s1", 2, "B"), record("s1", 1, "A")};
  recs[0].segment.set("country", "Japan");
  auto result = sessionize(recs);
  REQUIRE(result.conflicts.size() == 1);
  CHECK(*result.sessions[0].segment.get("country") == "United States");
  CHECK(*result.conflicts[0].ignored.get("country") == "Japan");
}

TEST_CASE("consecutive duplicates are kept unless deduped") {
  std::vector<LogRecord> recs = {record("s", 1, "A"), record("s", 2, "A"), record("s", 3, "B"),
                                 record("s", 4, "A")};
  CHECK(sessionize(recs).sessions[0].events.size() == 4);
  auto deduped = sessionize(recs, {.dedupe_consecutive = true});
  CHECK(actions(deduped.sessions[0]) == std::vector<std::string>{"A", "B", "A"});
}

TEST_CASE("sessionize is permutation invariant (property)") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LogRecord> recs;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      recs.push_back(record("s" + std::to_string(rng() % 5), static_cast<std::int64_t>(rng() % 10),
                            "E" + std::to_string(rng() % 4)));
      if (rng() % 4 == 0) recs.back().segment.set("browser", "Firefox");
    }
    auto expected = sessionize(recs);
    std::shuffle(recs.begin(), recs.end(), rng);
    auto got = sessionize(recs);
    REQUIRE(got.sessions == expected.sessions);
  }
}

TEST_CASE("partition assigns by first event and counts drops") {
  TemporalSplit split{{0, 100}, {100, 200}, {200, 300}};
  auto s = [](std::string id, std::vector<std::int64_t> ts) {
    SessionRecord r;
    r.session_id = std::move(id);
    for (auto t : ts) r.events.push_back({t, Descriptor{{"a", "b"}}});
    return r;
  };
  std::vector<SessionRecord> sessions = {s("train", {10, 20}), s("straddle", {150, 250}),
                                         s("test", {299}), s("before", {-5}), s("after", {300})};
  auto p = partition(sessions, split);
  CHECK(p.train.size() == 1);
  REQUIRE(p.validation.size() == 1);
  CHECK(p.validation[0].session_id == "straddle");
  CHECK(p.test.size() == 1);
  CHECK(p.dropped == 2);
  CHECK(p.train.size() + p.validation.size() + p.test.size() + p.dropped == sessions.size());
}

TEST_CASE("temporal split validation") {
  CHECK_THROWS_AS(partition({}, TemporalSplit{{0, 100}, {50, 200}, {200, 300}}), Error);
  CHECK_THROWS_AS(partition({}, TemporalSplit{{0, 0}, {0, 200}, {200, 300}}), Error);
}

TEST_CASE("time parsing") {
  CHECK(parse_time_ms("1470009600000") == 1470009600000);
  CHECK(parse_time_ms("2016-08-01") == 1470009600000);
  CHECK_THROWS_AS(parse_time_ms("2016-13-01"), Error);
  CHECK_THROWS_AS(parse_time_ms("August"), Error);
}

TEST_CASE("sessions file round trip") {
  auto sessions = sessionize({record("s1", 1, "A"), record("s1", 2, "B"), record("s2", 3, "C")}).sessions;
  std::stringstream buf;
  write_sessions(buf, sessions);
  CHECK(read_sessions(buf) == sessions);
}
