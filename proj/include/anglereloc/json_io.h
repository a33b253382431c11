#pragma once

#include <initializer_list>
#include <string>

#include "anglereloc/dataset.h"
#include "anglereloc/geometry.h"
#include "anglereloc/losses.h"
#include "anglereloc/ransac_pnp.h"
#include "anglereloc/regressor.h"
#include "json.hpp"

namespace anglereloc {

using nlohmann::json;

json Vec3ToJson(const Vec3& v);
Vec3 JsonToVec3(const json& j);
json PoseToJson(const PoseSE3& pose);
PoseSE3 JsonToPose(const json& j);

// Throws ConfigError naming the first key of `j` outside `allowed`.
void CheckKeys(const json& j, std::initializer_list<const char*> allowed,
               const std::string& context);

// from_json overlays the keys present in `j` onto the existing values, so a
// partial object keeps the defaults (or earlier settings) for missing keys.
void to_json(json& j, const DatasetConfig& c);
void from_json(const json& j, DatasetConfig& c);
void to_json(json& j, const LossConfig& c);
void from_json(const json& j, LossConfig& c);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const RansacConfig& c);
void from_json(const json& j, RansacConfig& c);

}  // namespace anglereloc
