#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "hfr/manifest.hpp"
#include "hfr/synth.hpp"

using namespace hfr;

namespace {

std::string fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("generate_identity is deterministic in the seed") {
  IdentityParams a = generate_identity(123);
  IdentityParams b = generate_identity(123);
  CHECK(a.as_vector() == b.as_vector());
  IdentityParams c = generate_identity(124);
  CHECK(a.as_vector() != c.as_vector());
}

TEST_CASE("100 identity seeds give pairwise distinct parameters") {
  std::vector<std::vector<double>> params;
  for (std::uint64_t s = 0; s < 100; ++s)
    params.push_back(generate_identity(s).as_vector());
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = i + 1; j < params.size(); ++j)
      CHECK(params[i] != params[j]);
}

TEST_CASE("neutral frontal noiseless depth is bilaterally symmetric") {
  IdentityParams id = generate_identity(7);
  CaptureParams cap;  // frontal light, zero expression, zero noise
  RenderResult r = render_pair(id, cap, 160);
  // symmetry is about the face center column
  double cx = (160.0 - 1.0) / 2.0 + id.center_x_px;
  for (std::size_t y = 0; y < 160; ++y)
    for (std::size_t x = 0; x < 160; ++x) {
      double mx = 2.0 * cx - static_cast<double>(x);
      if (mx < 0 || std::abs(mx - std::round(mx)) > 1e-9) continue;
      auto xm = static_cast<std::size_t>(std::llround(mx));
      if (xm >= 160) continue;
      CHECK(std::abs(r.depth.values.at2(y, x) - r.depth.values.at2(y, xm)) <= 1e-6f);
      CHECK(r.depth.mask.at2(y, x) == r.depth.mask.at2(y, xm));
    }
}

TEST_CASE("depth is invariant to lighting, color is not") {
  IdentityParams id = generate_identity(9);
  CaptureParams a, b;
  a.expression = b.expression = 0.37;
  a.light = {0.0, 0.0, 1.0};
  b.light = {0.4, 0.2, std::sqrt(1.0 - 0.16 - 0.04)};
  a.intensity = 1.0;
  b.intensity = 0.85;
  RenderResult ra = render_pair(id, a, 160);
  RenderResult rb = render_pair(id, b, 160);
  CHECK(ra.depth.values.vec() == rb.depth.values.vec());  // bitwise
  CHECK(ra.depth.mask.vec() == rb.depth.mask.vec());
  CHECK(ra.color.vec() != rb.color.vec());
}

TEST_CASE("re-shading the emitted depth reproduces the color image") {
  IdentityParams id = generate_identity(11);
  CaptureParams cap;
  cap.expression = 0.5;
  cap.light = {0.25, -0.1, std::sqrt(1.0 - 0.0625 - 0.01)};
  cap.intensity = 0.9;
  cap.noise = 0.0;
  const std::size_t n = 160;
  RenderResult r = render_pair(id, cap, n);
  REQUIRE(r.depth_range_px > 0.0);

  const double ambient = 0.25;
  std::size_t checked = 0;
  for (std::size_t y = 1; y + 1 < n; ++y) {
    for (std::size_t x = 1; x + 1 < n; ++x) {
      bool interior = true;  // full 8-neighborhood observed
      for (int dy = -1; dy <= 1 && interior; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (!r.depth.observed(y + dy, x + dx)) { interior = false; break; }
      if (!interior) continue;
      auto z = [&](std::size_t yy, std::size_t xx) {
        return static_cast<double>(r.depth.values.at2(yy, xx)) * r.depth_range_px;
      };
      double gx = 0.5 * (z(y, x + 1) - z(y, x - 1));
      double gy = 0.5 * (z(y + 1, x) - z(y - 1, x));
      double inv = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
      double ndotl = (-gx * cap.light[0] - gy * cap.light[1] + cap.light[2]) * inv;
      double shade = ambient + (1.0 - ambient) * cap.intensity * std::max(0.0, ndotl);
      for (std::size_t c = 0; c < 3; ++c) {
        double want = std::clamp(double(r.albedo.at3(c, y, x)) * shade, 0.0, 1.0);
        CHECK(std::abs(want - double(r.color.at3(c, y, x))) < 2e-3);
      }
      ++checked;
    }
  }
  CHECK(checked > 5000);
}

TEST_CASE("landmarks agree between color and depth and eye centers are distinct") {
  IdentityParams id = generate_identity(13);
  RenderResult r = render_pair(id, CaptureParams{}, 192);
  // one landmark set serves both images of the pair by construction
  Landmark l = r.landmarks.left_eye_center();
  Landmark rt = r.landmarks.right_eye_center();
  CHECK(std::hypot(rt.x - l.x, rt.y - l.y) > 10.0);
  for (const auto& p : r.landmarks.points) {
    CHECK(p.x >= 0.0);
    CHECK(p.x < 192.0);
    CHECK(p.y >= 0.0);
    CHECK(p.y < 192.0);
  }
}

TEST_CASE("build_dataset splits 20 identities 14/2/4 and writes 200 files per kind") {
  SynthConfig cfg;
  cfg.num_ids = 20;
  cfg.samples_per_id = 10;
  cfg.split = {0.7, 0.1, 0.2};
  cfg.seed = 5;
  cfg.canvas = 96;  // keep the test fast
  std::string dir = fresh_dir("hfr_synth_split");
  Manifest m = build_dataset(cfg, dir);
  REQUIRE(m.samples.size() == 200);

  std::map<std::string, std::set<int>> ids_by_split;
  for (const auto& s : m.samples) ids_by_split[s.split].insert(s.identity);
  CHECK(ids_by_split["train"].size() == 14);
  CHECK(ids_by_split["val"].size() == 2);
  CHECK(ids_by_split["test"].size() == 4);

  // identity-disjoint: no identity appears in two splits
  for (const auto& [split_a, set_a] : ids_by_split)
    for (const auto& [split_b, set_b] : ids_by_split) {
      if (split_a == split_b) continue;
      for (int id : set_a) CHECK(set_b.count(id) == 0);
    }

  std::size_t colors = 0, depths = 0, lms = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::string name = e.path().filename();
    if (name.find("_color.png") != std::string::npos) ++colors;
    if (name.find("_depth.png") != std::string::npos) ++depths;
    if (name.find("_lm.txt") != std::string::npos) ++lms;
  }
  CHECK(colors == 200);
  CHECK(depths == 200);
  CHECK(lms == 200);
}

TEST_CASE("same seed gives a byte-identical manifest") {
  SynthConfig cfg;
  cfg.num_ids = 4;
  cfg.samples_per_id = 3;
  cfg.split = {0.5, 0.25, 0.25};
  cfg.seed = 77;
  cfg.canvas = 96;
  std::string d1 = fresh_dir("hfr_synth_rep1");
  std::string d2 = fresh_dir("hfr_synth_rep2");
  build_dataset(cfg, d1);
  build_dataset(cfg, d2);
  CHECK(slurp(d1 + "/manifest.jsonl") == slurp(d2 + "/manifest.jsonl"));
  CHECK(slurp(d1 + "/id000_s00_color.png") == slurp(d2 + "/id000_s00_color.png"));
  CHECK(slurp(d1 + "/id003_s02_depth.png") == slurp(d2 + "/id003_s02_depth.png"));
}

TEST_CASE("build_dataset validates its inputs") {
  SynthConfig cfg;
  cfg.num_ids = 2;
  cfg.split = {0.5, 0.3, 0.2};  // 0.3 and 0.2 of 2 identities round to zero
  std::string dir = fresh_dir("hfr_synth_bad");
  CHECK_THROWS_AS(build_dataset(cfg, dir), InvalidInputError);
  cfg.split = {0.5, 0.4, 0.2};  // sums to 1.1
  CHECK_THROWS_AS(build_dataset(cfg, dir), InvalidInputError);
  cfg.split = {0.7, 0.1, 0.2};
  cfg.num_ids = 0;
  CHECK_THROWS_AS(build_dataset(cfg, dir), InvalidInputError);
}

TEST_CASE("manifest records carry the depth scale for downstream use") {
  SynthConfig cfg;
  cfg.num_ids = 2;
  cfg.samples_per_id = 2;
  cfg.split = {0.5, 0.0, 0.5};
  cfg.canvas = 96;
  std::string dir = fresh_dir("hfr_synth_scale");
  Manifest m = build_dataset(cfg, dir);
  for (const auto& s : m.samples) CHECK(s.capture.depth_range_px > 1.0);
  Manifest back = read_manifest(dir + "/manifest.jsonl");
  REQUIRE(back.samples.size() == m.samples.size());
  CHECK(back.samples[0].capture.depth_range_px ==
        doctest::Approx(m.samples[0].capture.depth_range_px));
}
