#include "cxsim/json.hpp"

#include "cxsim/error.hpp"

namespace cxsim {

void to_json(nlohmann::json& j, const Descriptor& d) {
  j = nlohmann::json::object();
  for (const auto& [key, value] : d.entries()) j[key] = value;
}

void from_json(const nlohmann::json& j, Descriptor& d) {
  if (!j.is_object()) throw Error(ErrorKind::kFormat, "descriptor must be a JSON object");
  Descriptor out;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) {
      throw Error(ErrorKind::kFormat, "descriptor field '" + key + "' must be a string");
    }
    if (key.empty()) throw Error(ErrorKind::kFormat, "descriptor keys must be non-empty");
    out.set(key, value.get<std::string>());
  }
  d = std::move(out);
}

void to_json(nlohmann::json& j, const SessionRecord& s) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : s.events) {
    events.push_back({{"ts", e.timestamp_ms}, {"event", e.descriptor}});
  }
  j = {{"sessionId", s.session_id}, {"segment", s.segment}, {"events", std::move(events)}};
}

void from_json(const nlohmann::json& j, SessionRecord& s) {
  try {
    SessionRecord out;
    out.session_id = j.at("sessionId").get<std::string>();
    out.segment = j.at("segment").get<SegmentKey>();
    for (const auto& e : j.at("events")) {
      out.events.push_back({e.at("ts").get<std::int64_t>(), e.at("event").get<EventDescriptor>()});
    }
    if (out.session_id.empty() || out.events.empty()) {
      throw Error(ErrorKind::kFormat, "session record needs a sessionId and at least one event");
    }
    s = std::move(out);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::kFormat, std::string("bad session record: ") + ex.what());
  }
}

}  // namespace cxsim
