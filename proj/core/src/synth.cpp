#include "hfr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "hfr/errors.hpp"
#include "hfr/png_io.hpp"
#include "hfr/rng.hpp"

namespace hfr {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEyeU = 0.48;   // eye center in face coordinates
constexpr double kEyeV = -0.25;
constexpr double kAmbient = 0.25;

// Universal expression deformation field, scaled by CaptureParams.expression.
// Symmetric by construction, so neutral and expressive depths both mirror.
const SurfaceBump kExpressionField[] = {
    {0.0, 0.70, 0.18, 0.22, -6.0, false},   // jaw drop
    {0.26, 0.55, 0.10, 0.07, 2.5, true},    // mouth corners widen
    {0.32, -0.46, 0.14, 0.06, 2.0, true},   // brow raise
};

double bump_eval(const SurfaceBump& b, double u, double v) {
  auto g = [&](double cu) {
    double du = (u - cu) / b.sigma_u;
    double dv = (v - b.v) / b.sigma_v;
    return std::exp(-0.5 * (du * du + dv * dv));
  };
  double s = g(b.u);
  if (b.mirrored) s += g(-b.u);
  return b.amp * s;
}

std::array<std::array<double, 2>, 68> canonical_anchors(double nose_w, double mouth_w,
                                                        double brow_shift) {
  std::array<std::array<double, 2>, 68> a{};
  for (int i = 0; i <= 16; ++i) {  // jaw
    double t = static_cast<double>(i) / 16.0;
    a[i] = {-0.92 * std::cos(kPi * t),
            -0.05 + 1.03 * std::pow(std::sin(kPi * t), 0.9)};
  }
  for (int i = 0; i < 5; ++i) {  // brows
    double s = static_cast<double>(i) / 4.0;
    double arc = -0.04 * std::sin(kPi * s);
    a[17 + i] = {-0.55 + 0.40 * s, -0.45 + arc + brow_shift};
    a[22 + i] = {0.15 + 0.40 * s, -0.45 - 0.04 * std::sin(kPi * (1.0 - s)) + brow_shift};
  }
  for (int i = 0; i < 4; ++i)  // nose bridge
    a[27 + i] = {0.0, -0.25 + 0.45 * static_cast<double>(i) / 3.0};
  for (int i = 0; i < 5; ++i)  // nostril row
    a[31 + i] = {nose_w * (-0.16 + 0.08 * i), 0.28};
  for (int i = 0; i < 6; ++i) {  // eye contours, hexagons about the centers
    double ang = kPi - static_cast<double>(i) * (kPi / 3.0);
    a[36 + i] = {-kEyeU + 0.10 * std::cos(ang), kEyeV - 0.05 * std::sin(ang)};
    a[42 + i] = {kEyeU + 0.10 * std::cos(ang), kEyeV - 0.05 * std::sin(ang)};
  }
  for (int i = 0; i < 12; ++i) {  // outer lip
    double ang = kPi - static_cast<double>(i) * (2.0 * kPi / 12.0);
    a[48 + i] = {mouth_w * 0.22 * std::cos(ang), 0.55 + 0.10 * std::sin(ang)};
  }
  for (int i = 0; i < 8; ++i) {  // inner lip
    double ang = kPi - static_cast<double>(i) * (2.0 * kPi / 8.0);
    a[60 + i] = {mouth_w * 0.13 * std::cos(ang), 0.55 + 0.045 * std::sin(ang)};
  }
  return a;
}

}  // namespace

std::vector<double> IdentityParams::as_vector() const {
  std::vector<double> v{radius_x_px, radius_y_px, center_x_px, center_y_px,
                        dome_amp_px, albedo[0], albedo[1], albedo[2],
                        lip_darken, brow_darken};
  for (const auto& b : bumps) {
    v.push_back(b.u);
    v.push_back(b.v);
    v.push_back(b.sigma_u);
    v.push_back(b.sigma_v);
    v.push_back(b.amp);
  }
  for (const auto& p : anchors) {
    v.push_back(p[0]);
    v.push_back(p[1]);
  }
  return v;
}

IdentityParams generate_identity(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "identity-params"));
  IdentityParams id;
  id.seed = seed;
  id.radius_x_px = rng.uniform(50.0, 62.0);
  id.radius_y_px = id.radius_x_px * rng.uniform(1.00, 1.18);
  // center offsets quantized to half pixels so the bilateral symmetry of the
  // surface lands exactly on the pixel grid
  id.center_x_px = std::round(rng.uniform(-6.0, 6.0) * 2.0) / 2.0;
  id.center_y_px = std::round(rng.uniform(-6.0, 6.0) * 2.0) / 2.0;
  id.dome_amp_px = rng.uniform(30.0, 44.0);

  id.bumps.push_back({0.0, rng.uniform(0.0, 0.1), rng.uniform(0.07, 0.11),
                      rng.uniform(0.22, 0.30), rng.uniform(7.0, 13.0), false});  // nose ridge
  id.bumps.push_back({0.0, rng.uniform(0.22, 0.30), rng.uniform(0.07, 0.10),
                      rng.uniform(0.07, 0.10), rng.uniform(3.0, 7.0), false});   // nose tip
  id.bumps.push_back({rng.uniform(0.28, 0.36), rng.uniform(-0.50, -0.42),
                      rng.uniform(0.12, 0.18), rng.uniform(0.05, 0.08),
                      rng.uniform(1.5, 4.5), true});                             // brow ridge
  id.bumps.push_back({rng.uniform(0.38, 0.50), rng.uniform(0.10, 0.22),
                      rng.uniform(0.16, 0.24), rng.uniform(0.16, 0.24),
                      rng.uniform(1.0, 5.0), true});                             // cheekbones
  id.bumps.push_back({0.0, rng.uniform(0.60, 0.72), rng.uniform(0.10, 0.16),
                      rng.uniform(0.10, 0.16), rng.uniform(1.5, 5.0), false});   // chin
  for (int i = 0; i < 5; ++i)  // fine detail at mixed scales
    id.bumps.push_back({rng.uniform(0.05, 0.70), rng.uniform(-0.60, 0.70),
                        rng.uniform(0.05, 0.14), rng.uniform(0.05, 0.14),
                        rng.uniform(-1.8, 1.8), true});

  id.albedo[0] = rng.uniform(0.55, 0.85);
  id.albedo[1] = id.albedo[0] * rng.uniform(0.72, 0.88);
  id.albedo[2] = id.albedo[1] * rng.uniform(0.70, 0.90);
  id.lip_darken = rng.uniform(0.15, 0.35);
  id.brow_darken = rng.uniform(0.25, 0.45);

  id.anchors = canonical_anchors(rng.uniform(0.85, 1.15), rng.uniform(0.90, 1.10),
                                 rng.uniform(-0.03, 0.03));
  return id;
}

CaptureParams sample_capture(std::uint64_t dataset_seed, int identity_index,
                             int sample_index, double noise_level) {
  Rng rng(derive_seed(dataset_seed, "capture:" + std::to_string(identity_index) +
                                        ":" + std::to_string(sample_index)));
  CaptureParams cap;
  double az = rng.uniform(0.0, 2.0 * kPi);
  double polar = rng.uniform(0.0, 0.55);
  cap.light = {std::sin(polar) * std::cos(az), std::sin(polar) * std::sin(az),
               std::cos(polar)};
  cap.intensity = rng.uniform(0.75, 1.10);
  cap.expression = rng.uniform(0.0, 1.0);
  cap.noise = noise_level;
  cap.noise_seed = rng.next_u64();
  return cap;
}

RenderResult render_pair(const IdentityParams& id, const CaptureParams& cap,
                         std::size_t canvas) {
  const std::size_t n = canvas;
  const double cx = (static_cast<double>(n) - 1.0) / 2.0 + id.center_x_px;
  const double cy = (static_cast<double>(n) - 1.0) / 2.0 + id.center_y_px;

  // Height field in pixel units; 0 outside the face ellipse. Identity and
  // expression bumps taper toward the rim so the surface stays continuous.
  Tensor<double> height({n, n});
  Tensor<std::uint8_t> inside({n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double u = (static_cast<double>(x) - cx) / id.radius_x_px;
      double v = (static_cast<double>(y) - cy) / id.radius_y_px;
      double r2 = u * u + v * v;
      if (r2 > 1.0) continue;
      inside.at2(y, x) = 1;
      double features = 0.0;
      for (const auto& b : id.bumps) features += bump_eval(b, u, v);
      for (const auto& b : kExpressionField)
        features += cap.expression * bump_eval(b, u, v);
      height.at2(y, x) = id.dome_amp_px * std::sqrt(1.0 - r2) + (1.0 - r2) * features;
    }
  }

  RenderResult out;
  out.label = id.label;

  // Depth: affine rescale of the observed heights to [0,1].
  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (std::size_t i = 0; i < height.numel(); ++i) {
    if (!inside[i]) continue;
    zmin = std::min(zmin, height[i]);
    zmax = std::max(zmax, height[i]);
  }
  const double range = zmax - zmin;
  out.depth_range_px = range;
  out.depth = RangeImage(n, n);
  for (std::size_t i = 0; i < height.numel(); ++i) {
    if (!inside[i]) continue;
    out.depth.mask[i] = 1;
    out.depth.values[i] =
        range > 0.0 ? static_cast<float>((height[i] - zmin) / range) : 0.0f;
  }

  // Albedo: skin tone with darker brows and reddened lips.
  out.albedo = Tensor<float>({3, n, n});
  auto region = [&](double u, double v, double cu, double cvv, double su, double sv) {
    double du = (u - cu) / su, dv = (v - cvv) / sv;
    double g = std::exp(-0.5 * (du * du + dv * dv));
    du = (u + cu) / su;
    g += std::exp(-0.5 * (du * du + dv * dv));
    return g;
  };
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      if (!inside.at2(y, x)) continue;
      double u = (static_cast<double>(x) - cx) / id.radius_x_px;
      double v = (static_cast<double>(y) - cy) / id.radius_y_px;
      double lips = std::exp(-0.5 * ((u / 0.24) * (u / 0.24) +
                                     ((v - 0.55) / 0.11) * ((v - 0.55) / 0.11)));
      double brows = region(u, v, 0.32, -0.46, 0.16, 0.05);
      double eyes = region(u, v, kEyeU, kEyeV, 0.11, 0.06);
      double dark = std::clamp(id.brow_darken * (brows + eyes), 0.0, 0.8);
      out.albedo.at3(0, y, x) = static_cast<float>(id.albedo[0] * (1.0 - 0.3 * dark));
      out.albedo.at3(1, y, x) = static_cast<float>(
          id.albedo[1] * (1.0 - dark) * (1.0 - id.lip_darken * lips));
      out.albedo.at3(2, y, x) = static_cast<float>(
          id.albedo[2] * (1.0 - dark) * (1.0 - id.lip_darken * lips));
    }
  }

  // Lambertian shading from the same height field.
  out.color = ColorImage({3, n, n});
  Rng noise_rng(cap.noise_seed);
  const double lnorm = std::sqrt(cap.light[0] * cap.light[0] +
                                 cap.light[1] * cap.light[1] +
                                 cap.light[2] * cap.light[2]);
  const double lx = cap.light[0] / lnorm, ly = cap.light[1] / lnorm,
               lz = cap.light[2] / lnorm;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double shade = 0.0;
      if (inside.at2(y, x)) {
        double zxm = x > 0 ? height.at2(y, x - 1) : 0.0;
        double zxp = x + 1 < n ? height.at2(y, x + 1) : 0.0;
        double zym = y > 0 ? height.at2(y - 1, x) : 0.0;
        double zyp = y + 1 < n ? height.at2(y + 1, x) : 0.0;
        double gx = 0.5 * (zxp - zxm), gy = 0.5 * (zyp - zym);
        double inv = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
        double ndotl = (-gx * lx - gy * ly + lz) * inv;
        shade = kAmbient + (1.0 - kAmbient) * cap.intensity * std::max(0.0, ndotl);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        double val = out.albedo.at3(c, y, x) * shade;
        if (cap.noise > 0.0) val += cap.noise * noise_rng.normal();
        out.color.at3(c, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }

  for (std::size_t i = 0; i < 68; ++i)
    out.landmarks.points[i] = {cx + id.anchors[i][0] * id.radius_x_px,
                               cy + id.anchors[i][1] * id.radius_y_px};
  return out;
}

Manifest build_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  if (cfg.num_ids < 1 || cfg.samples_per_id < 1)
    throw InvalidInputError("build_dataset: need at least one identity and sample");
  double fsum = cfg.split[0] + cfg.split[1] + cfg.split[2];
  if (std::abs(fsum - 1.0) > 1e-9 || cfg.split[0] < 0 || cfg.split[1] < 0 ||
      cfg.split[2] < 0)
    throw InvalidInputError("build_dataset: split fractions must be >= 0 and sum to 1");

  // Largest-remainder apportionment of identities to splits.
  std::array<int, 3> counts;
  std::array<double, 3> rem;
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    double exact = cfg.split[k] * cfg.num_ids;
    counts[k] = static_cast<int>(std::floor(exact));
    rem[k] = exact - counts[k];
    assigned += counts[k];
  }
  while (assigned < cfg.num_ids) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (rem[k] > rem[best]) best = k;
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  for (int k = 0; k < 3; ++k)
    if (cfg.split[k] > 0.0 && counts[k] == 0)
      throw InvalidInputError("build_dataset: too few identities for requested split");

  std::filesystem::create_directories(out_dir);

  Manifest manifest;
  const char* split_names[3] = {"train", "val", "test"};
  for (int i = 0; i < cfg.num_ids; ++i) {
    int split_idx = i < counts[0] ? 0 : (i < counts[0] + counts[1] ? 1 : 2);
    IdentityParams id = generate_identity(derive_seed(cfg.seed, "identity:" + std::to_string(i)));
    id.label = i;
    for (int s = 0; s < cfg.samples_per_id; ++s) {
      CaptureParams cap = sample_capture(cfg.seed, i, s, cfg.noise);
      RenderResult r = render_pair(id, cap, cfg.canvas);

      char stem[64];
      std::snprintf(stem, sizeof stem, "id%03d_s%02d", i, s);
      SampleRecord rec;
      rec.color_path = std::string(stem) + "_color.png";
      rec.depth_path = std::string(stem) + "_depth.png";
      rec.landmarks_path = std::string(stem) + "_lm.txt";
      rec.identity = i;
      rec.split = split_names[split_idx];
      rec.capture.light = cap.light;
      rec.capture.intensity = cap.intensity;
      rec.capture.expression = cap.expression;
      rec.capture.noise = cap.noise;
      rec.capture.depth_range_px = r.depth_range_px;

      auto dir = std::filesystem::path(out_dir);
      write_png_rgb8((dir / rec.color_path).string(), r.color);
      write_png_gray16((dir / rec.depth_path).string(), r.depth);
      write_landmarks((dir / rec.landmarks_path).string(), r.landmarks);
      manifest.samples.push_back(std::move(rec));
    }
  }
  write_manifest((std::filesystem::path(out_dir) / "manifest.jsonl").string(), manifest);
  return manifest;
}

}  // namespace hfr
