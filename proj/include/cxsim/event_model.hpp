#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cxsim {

// Flat, single-valued attribute map. std::map keeps keys sorted, which is the
// order the canonical text uses.
class Descriptor {
 public:
  using Entries = std::map<std::string, std::string, std::less<>>;

  Descriptor() = default;
  explicit Descriptor(Entries entries);
  Descriptor(std::initializer_list<Entries::value_type> entries);

  // Throws Error(kInvalidArgument) on an empty key.
  void set(std::string key, std::string value);
  std::optional<std::string_view> get(std::string_view key) const;
  bool contains(std::string_view key) const { return entries_.contains(key); }

  const Entries& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const Descriptor&) const = default;

 private:
  Entries entries_;
};

using EventDescriptor = Descriptor;
using SegmentKey = Descriptor;

// Optional set of field names that define event identity. Empty means every
// field present participates.
using FieldWhitelist = std::set<std::string, std::less<>>;

// `{"a": "1", "b": "2"}`; see docs/canonical-text.md for the escaping rules.
std::string canonicalize(const Descriptor& descriptor);
std::string canonicalize(const Descriptor& descriptor,
                         const FieldWhitelist& whitelist);

// Drops fields outside a non-empty whitelist.
Descriptor restrict_fields(const Descriptor& descriptor,
                           const FieldWhitelist& whitelist);

// First 128 bits of SHA-256 over the canonical text, lowercase hex.
class NodeId {
 public:
  NodeId() = default;
  // Accepts a 32-character lowercase hex digest; throws Error(kFormat).
  static NodeId from_hex(std::string_view hex);

  const std::string& hex() const { return hex_; }
  bool empty() const { return hex_.empty(); }

  auto operator<=>(const NodeId&) const = default;

 private:
  explicit NodeId(std::string hex) : hex_(std::move(hex)) {}
  friend NodeId node_id(std::string_view canonical_text);

  std::string hex_;
};

NodeId node_id(std::string_view canonical_text);

inline constexpr std::string_view kSessionStartText = "session start";
inline constexpr std::string_view kSessionEndText = "session end";

const NodeId& session_start_id();
const NodeId& session_end_id();

struct EventNode {
  NodeId id;
  std::string canonical_text;
  EventDescriptor descriptor;
  bool is_sentinel = false;

  static EventNode from_descriptor(EventDescriptor descriptor,
                                   const FieldWhitelist& whitelist = {});
  static EventNode session_start();
  static EventNode session_end();

  bool operator==(const EventNode&) const = default;
};

struct TimedEvent {
  std::int64_t timestamp_ms = 0;
  EventDescriptor descriptor;

  bool operator==(const TimedEvent&) const = default;
};

struct SessionRecord {
  std::string session_id;
  SegmentKey segment;
  std::vector<TimedEvent> events;

  bool operator==(const SessionRecord&) const = default;
};

}  // namespace cxsim

template <>
struct std::hash<cxsim::NodeId> {
  std::size_t operator()(const cxsim::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.hex());
  }
};
