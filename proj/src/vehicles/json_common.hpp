#pragma once

#include "trajopt/vehicles.hpp"

namespace trajopt::vehicles {

std::vector<Ellipsoid> obstacles_from_json(const nlohmann::json& j, const std::string& ptr);
nlohmann::json obstacles_to_json(const std::vector<Ellipsoid>& obs);

} // namespace trajopt::vehicles
