#include "cxsim/event_model.hpp"

#include <array>
#include <cstdio>

#include "cxsim/digest.hpp"
#include "cxsim/error.hpp"

namespace cxsim {
namespace {

void append_quoted(std::string& out, std::string_view text) {
  out.push_back('"');
  for (const char ch : text) {
    const auto byte = static_cast<unsigned char>(ch);
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (byte < 0x20 || byte == 0x7f) {
          std::array<char, 7> buf{};
          std::snprintf(buf.data(), buf.size(), "\\u%04x", byte);
          out += buf.data();
        } else {
          out.push_back(ch);
        }
    }
  }
  out.push_back('"');
}

bool is_lower_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
}

}  // namespace

Descriptor::Descriptor(Entries entries) {
  for (auto& [key, value] : entries) set(key, std::move(value));
}

Descriptor::Descriptor(std::initializer_list<Entries::value_type> entries) {
  for (const auto& [key, value] : entries) set(key, value);
}

void Descriptor::set(std::string key, std::string value) {
  if (key.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "descriptor keys must be non-empty");
  }
  entries_.insert_or_assign(std::move(key), std::move(value));
}

std::optional<std::string_view> Descriptor::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return std::string_view(it->second);
}

Descriptor restrict_fields(const Descriptor& descriptor,
                           const FieldWhitelist& whitelist) {
  if (whitelist.empty()) return descriptor;
  Descriptor out;
  for (const auto& [key, value] : descriptor.entries()) {
    if (whitelist.contains(key)) out.set(key, value);
  }
  return out;
}

std::string canonicalize(const Descriptor& descriptor) {
  std::string out = "{";
  bool first = true;
  for (const auto& [key, value] : descriptor.entries()) {
    if (!first) out += ", ";
    first = false;
    append_quoted(out, key);
    out += ": ";
    append_quoted(out, value);
  }
  out += "}";
  return out;
}

std::string canonicalize(const Descriptor& descriptor,
                         const FieldWhitelist& whitelist) {
  return canonicalize(restrict_fields(descriptor, whitelist));
}

NodeId NodeId::from_hex(std::string_view hex) {
  if (hex.size() != 32) {
    throw Error(ErrorKind::kFormat, "node id must be 32 hex characters");
  }
  for (char c : hex) {
    if (!is_lower_hex(c)) {
      throw Error(ErrorKind::kFormat, "node id must be lowercase hex");
    }
  }
  return NodeId(std::string(hex));
}

NodeId node_id(std::string_view canonical_text) {
  return NodeId(sha256_hex(canonical_text).substr(0, 32));
}

const NodeId& session_start_id() {
  static const NodeId id = node_id(kSessionStartText);
  return id;
}

const NodeId& session_end_id() {
  static const NodeId id = node_id(kSessionEndText);
  return id;
}

EventNode EventNode::from_descriptor(EventDescriptor descriptor,
                                     const FieldWhitelist& whitelist) {
  EventNode node;
  node.descriptor = restrict_fields(descriptor, whitelist);
  node.canonical_text = canonicalize(node.descriptor);
  node.id = node_id(node.canonical_text);
  return node;
}

EventNode EventNode::session_start() {
  return {session_start_id(), std::string(kSessionStartText), {}, true};
}

EventNode EventNode::session_end() {
  return {session_end_id(), std::string(kSessionEndText), {}, true};
}

}  // namespace cxsim
