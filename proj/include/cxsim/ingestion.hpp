#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cxsim/event_model.hpp"

namespace cxsim::ingestion {

struct LogRecord {
  std::string session_id;
  std::int64_t timestamp_ms = 0;
  SegmentKey segment;
  EventDescriptor event;

  bool operator==(const LogRecord&) const = default;
};

struct MalformedRecord {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
};

struct ParseResult {
  std::vector<LogRecord> records;
  std::vector<MalformedRecord> errors;
};

enum class LogFormat {
  kNative,  // docs/log-schema.md
  kGa360,   // flattened GA360 export columns, see the mapping table in the same doc
};

// Parses one record. Returns the failure reason instead of throwing.
std::optional<LogRecord> parse_line(std::string_view line, LogFormat format,
                                    std::string* reason = nullptr);

// Blank lines are skipped. With `strict`, the first malformed line throws
// Error(kMalformedRecord); otherwise malformed lines are collected.
ParseResult parse_log(std::istream& in, LogFormat format = LogFormat::kNative,
                      bool strict = false);

// GA360 eCommerceAction.action_type code to its display name.
std::string ga360_action_name(std::string_view code);

struct SessionizeOptions {
  bool dedupe_consecutive = false;
};

struct ConflictingSegment {
  std::string session_id;
  SegmentKey kept;
  SegmentKey ignored;
};

struct SessionizeResult {
  std::vector<SessionRecord> sessions;  // ordered by session_id
  std::vector<ConflictingSegment> conflicts;
};

// Groups by session_id and orders events by (timestamp, input position). The
// segment comes from the earliest record of a session.
SessionizeResult sessionize(const std::vector<LogRecord>& records,
                            const SessionizeOptions& options = {});

struct TimeWindow {
  std::int64_t start_ms = 0;  // inclusive
  std::int64_t end_ms = 0;    // exclusive

  bool contains(std::int64_t t) const { return t >= start_ms && t < end_ms; }
};

struct TemporalSplit {
  TimeWindow train;
  TimeWindow validation;
  TimeWindow test;

  // Throws Error(kInvalidArgument) unless each window is non-empty and
  // train < validation < test without overlap.
  void validate() const;
};

struct Partition {
  std::vector<SessionRecord> train;
  std::vector<SessionRecord> validation;
  std::vector<SessionRecord> test;
  std::size_t dropped = 0;
};

// Assigns each session by the timestamp of its first event.
Partition partition(const std::vector<SessionRecord>& sessions,
                    const TemporalSplit& split);

// Sessions file: one JSON SessionRecord per line.
void write_sessions(std::ostream& out, const std::vector<SessionRecord>& sessions);
std::vector<SessionRecord> read_sessions(std::istream& in);

// Accepts epoch milliseconds or an ISO date (YYYY-MM-DD, UTC midnight).
std::int64_t parse_time_ms(std::string_view text);

}  // namespace cxsim::ingestion
