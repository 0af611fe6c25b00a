#pragma once

#include <json.hpp>

#include "cxsim/event_model.hpp"

namespace cxsim {

void to_json(nlohmann::json& j, const Descriptor& d);
// Requires a flat object of string values; throws Error(kFormat).
void from_json(const nlohmann::json& j, Descriptor& d);

void to_json(nlohmann::json& j, const SessionRecord& s);
void from_json(const nlohmann::json& j, SessionRecord& s);

}  // namespace cxsim
