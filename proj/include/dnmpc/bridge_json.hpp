#pragma once

// JSON form of grid states and controls: two-element integer arrays.

#include <nlohmann/json.hpp>

#include "dnmpc/bridge_world.hpp"

namespace dnmpc::bridge {

inline void to_json(nlohmann::ordered_json& j, const GridState& s) { j = {s.x1, s.x2}; }
inline void from_json(const nlohmann::ordered_json& j, GridState& s) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("grid state must be [x1, x2]");
  s = {j[0].get<int>(), j[1].get<int>()};
}
inline void to_json(nlohmann::ordered_json& j, const GridControl& u) { j = {u.dx, u.dy}; }
inline void from_json(const nlohmann::ordered_json& j, GridControl& u) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("grid control must be [dx, dy]");
  u = {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace dnmpc::bridge
