#include <fstream>
#include <istream>
#include <ostream>

#include "ba/io.hpp"
#include "json.hpp"

namespace ba {

using nlohmann::json;

namespace {

constexpr int kNativeVersion = 1;

const char* layout_name(CameraLayout layout) {
  return layout == CameraLayout::Bal9 ? "bal9" : "full15";
}

CameraLayout parse_layout(const std::string& name) {
  if (name == "bal9") return CameraLayout::Bal9;
  if (name == "full15") return CameraLayout::Full15;
  throw ParseError(0, "unknown camera layout '" + name + "'");
}

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError(0, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void write_native(std::ostream& out, const Problem& problem) {
  json doc;
  doc["format"] = "ba-native";
  doc["version"] = kNativeVersion;
  doc["layout"] = layout_name(problem.layout());
  json cameras = json::array();
  for (const auto& c : problem.cameras()) {
    cameras.push_back({
        {"rotation", {c.pose.rotation.x(), c.pose.rotation.y(), c.pose.rotation.z()}},
        {"translation", {c.pose.translation.x(), c.pose.translation.y(), c.pose.translation.z()}},
        {"intrinsics",
         {{"fx", c.intrinsics.fx},
          {"fy", c.intrinsics.fy},
          {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},
          {"skew", c.intrinsics.skew}}},
        {"distortion",
         {{"k1", c.distortion.k1},
          {"k2", c.distortion.k2},
          {"k3", c.distortion.k3},
          {"p1", c.distortion.p1},
          {"p2", c.distortion.p2}}},
    });
  }
  doc["cameras"] = std::move(cameras);
  json points = json::array();
  for (const auto& p : problem.points()) points.push_back({p.x(), p.y(), p.z()});
  doc["points"] = std::move(points);
  json observations = json::array();
  for (int k = 0; k < problem.num_observations(); ++k) {
    const Observation& o = problem.observations()[k];
    const WeightMatrix& w = problem.weights()[k];
    observations.push_back({{"camera", o.camera},
                            {"point", o.point},
                            {"pixel", {o.pixel.x(), o.pixel.y()}},
                            {"weight", {{w(0, 0), w(0, 1)}, {w(1, 0), w(1, 1)}}}});
  }
  doc["observations"] = std::move(observations);
  out << doc.dump(1) << '\n';
}

Problem parse_native(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, e.what());
  }
  try {
    if (doc.value("format", "") != "ba-native") throw ParseError(0, "not a ba-native document");
    if (doc.value("version", 0) != kNativeVersion) throw ParseError(0, "unsupported version");
    const CameraLayout layout = parse_layout(doc.at("layout").get<std::string>());

    CameraVector cameras;
    for (const json& c : doc.at("cameras")) {
      CameraParams<double> cam;
      cam.layout = layout;
      cam.pose.rotation = vec3(c.at("rotation"));
      cam.pose.translation = vec3(c.at("translation"));
      const json& k = c.at("intrinsics");
      cam.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(),
                        k.at("cx").get<double>(), k.at("cy").get<double>(),
                        k.value("skew", 0.0)};
      const json& d = c.at("distortion");
      cam.distortion = {d.value("k1", 0.0), d.value("k2", 0.0), d.value("k3", 0.0),
                        d.value("p1", 0.0), d.value("p2", 0.0)};
      cameras.push_back(cam);
    }
    PointVector points;
    for (const json& p : doc.at("points")) points.push_back(vec3(p));

    std::vector<Observation> observations;
    std::vector<WeightMatrix> weights;
    for (const json& o : doc.at("observations")) {
      Observation obs;
      obs.camera = o.at("camera").get<int>();
      obs.point = o.at("point").get<int>();
      obs.pixel = {o.at("pixel").at(0).get<double>(), o.at("pixel").at(1).get<double>()};
      observations.push_back(obs);
      WeightMatrix w = WeightMatrix::Identity();
      if (o.contains("weight")) {
        const json& wj = o.at("weight");
        w << wj.at(0).at(0).get<double>(), wj.at(0).at(1).get<double>(),
            wj.at(1).at(0).get<double>(), wj.at(1).at(1).get<double>();
      }
      weights.push_back(w);
    }
    return Problem(layout, std::move(cameras), std::move(points), std::move(observations),
                   std::move(weights));
  } catch (const json::exception& e) {
    throw ParseError(0, e.what());
  }
}

Problem read_native_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_native(in);
}

}  // namespace ba
