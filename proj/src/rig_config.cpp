// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/rig_config.hpp>

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace pe3d {

namespace {

using nlohmann::json;

[[noreturn]] void fail(ErrorCode code, const std::string& path, const std::string& what) {
  throw Error(code, path + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) fail(ErrorCode::kParse, path + "." + key, "missing field");
  return obj.at(key);
}

std::vector<double> numbers(const json& arr, std::size_t n, const std::string& path) {
  if (!arr.is_array() || arr.size() != n) {
    fail(ErrorCode::kParse, path, "expected an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!arr[i].is_number()) fail(ErrorCode::kParse, path + "[" + std::to_string(i) + "]", "not a number");
    out.push_back(arr[i].get<double>());
  }
  return out;
}

Mat3 mat3(const std::vector<double>& v) {
  Mat3 m;
  m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return m;
}

int positive_int(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() <= 0) fail(ErrorCode::kParse, path, "expected a positive integer");
  return j.get<int>();
}

}  // namespace

Rig parse_rig(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, "$", e.what());
  }
  Rig rig;
  const json& cams = require(doc, "cameras", "$");
  if (!cams.is_array()) fail(ErrorCode::kParse, "cameras", "expected an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string path = "cameras[" + std::to_string(i) + "]";
    const json& c = cams[i];
    std::string name = c.contains("name") && c["name"].is_string() ? c["name"].get<std::string>()
                                                                    : "cam" + std::to_string(i);
    const int width = positive_int(require(c, "width", path), path + ".width");
    const int height = positive_int(require(c, "height", path), path + ".height");
    const Mat3 K = mat3(numbers(require(c, "K", path), 9, path + ".K"));
    const Mat3 R = mat3(numbers(require(c, "R", path), 9, path + ".R"));
    const auto t = numbers(require(c, "T", path), 3, path + ".T");
    try {
      rig.cameras.emplace_back(K, R, Vec3(t[0], t[1], t[2]), width, height, name);
    } catch (const Error& e) {
      const char* field = e.code() == ErrorCode::kInvalidRotation ? ".R"
                          : e.code() == ErrorCode::kNonInvertibleIntrinsics ? ".K"
                                                                           : "";
      throw Error(e.code(), path + field + ": " + e.what());
    }
  }
  if (doc.contains("region")) {
    const json& r = doc["region"];
    const auto x = numbers(require(r, "x", "region"), 2, "region.x");
    const auto y = numbers(require(r, "y", "region"), 2, "region.y");
    const auto z = numbers(require(r, "z", "region"), 2, "region.z");
    rig.region = PerceptionRegion{x[0], x[1], y[0], y[1], z[0], z[1]};
    try {
      rig.region.validate();
    } catch (const Error& e) {
      throw Error(e.code(), std::string("region: ") + e.what());
    }
  }
  return rig;
}

Rig load_rig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open rig file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rig(ss.str());
}

std::string rig_to_json(const Rig& rig) {
  json doc;
  doc["cameras"] = json::array();
  for (const auto& cam : rig.cameras) {
    json c;
    c["name"] = cam.name();
    c["width"] = cam.width();
    c["height"] = cam.height();
    std::vector<double> K, R;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) {
        K.push_back(cam.intrinsics()(r, k));
        R.push_back(cam.rotation()(r, k));
      }
    }
    c["K"] = K;
    c["R"] = R;
    c["T"] = {cam.translation().x(), cam.translation().y(), cam.translation().z()};
    doc["cameras"].push_back(c);
  }
  const auto& g = rig.region;
  doc["region"] = {{"x", {g.x_min, g.x_max}}, {"y", {g.y_min, g.y_max}}, {"z", {g.z_min, g.z_max}}};
  return doc.dump(2);
}

}  // namespace pe3d
