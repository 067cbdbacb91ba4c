#include "hfr/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hfr/errors.hpp"

namespace hfr {

using nlohmann::json;

std::vector<const SampleRecord*> Manifest::split_samples(const std::string& split) const {
  std::vector<const SampleRecord*> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(&s);
  return out;
}

namespace {

json capture_to_json(const CaptureRecord& c) {
  return json{{"light", c.light},
              {"intensity", c.intensity},
              {"expression", c.expression},
              {"noise", c.noise},
              {"depth_range_px", c.depth_range_px}};
}

CaptureRecord capture_from_json(const json& j) {
  CaptureRecord c;
  c.light = j.at("light").get<std::array<double, 3>>();
  c.intensity = j.at("intensity").get<double>();
  c.expression = j.at("expression").get<double>();
  c.noise = j.at("noise").get<double>();
  c.depth_range_px = j.at("depth_range_px").get<double>();
  return c;
}

}  // namespace

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_manifest: cannot open " + path);
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("read_manifest: " + path + ":" + std::to_string(lineno) +
                    ": " + e.what());
    }
    SampleRecord s;
    s.color_path = j.at("color_path").get<std::string>();
    s.depth_path = j.at("depth_path").get<std::string>();
    s.landmarks_path = j.at("landmarks_path").get<std::string>();
    s.identity = j.at("identity").get<int>();
    s.split = j.at("split").get<std::string>();
    s.capture = capture_from_json(j.at("capture"));
    m.samples.push_back(std::move(s));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("write_manifest: cannot open " + path);
  for (const auto& s : manifest.samples) {
    json j{{"color_path", s.color_path},
           {"depth_path", s.depth_path},
           {"landmarks_path", s.landmarks_path},
           {"identity", s.identity},
           {"split", s.split},
           {"capture", capture_to_json(s.capture)}};
    out << j.dump() << "\n";
  }
}

std::string resolve_path(const std::string& manifest_path, const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute()) return rel;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

}  // namespace hfr
