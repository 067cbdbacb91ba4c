#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hfr/image.hpp"
#include "hfr/manifest.hpp"
#include "hfr/range_pipeline.hpp"

namespace hfr {

// One symmetric gaussian bump pair on the face surface, in face coordinates
// (u horizontal, v vertical, both roughly [-1,1] inside the ellipse).
struct SurfaceBump {
  double u = 0.0, v = 0.0;
  double sigma_u = 0.1, sigma_v = 0.1;
  double amp = 0.0;  // pixel units of height
  bool mirrored = true;  // also applied at -u
};

// Seed-derived parameters of one synthetic identity: ellipsoidal base plus
// bump fields at several spatial scales, albedo, and the 68 canonical
// landmark anchors in face coordinates.
struct IdentityParams {
  std::uint64_t seed = 0;
  int label = -1;  // assigned by build_dataset

  double radius_x_px = 52.0;   // face half-axes on the raw canvas
  double radius_y_px = 58.0;
  double center_x_px = 0.0;    // offset from canvas center
  double center_y_px = 0.0;
  double dome_amp_px = 36.0;   // height of the ellipsoidal base

  std::vector<SurfaceBump> bumps;          // nose/brow/cheek/chin + detail
  std::array<double, 3> albedo{0.7, 0.6, 0.5};
  double lip_darken = 0.25;
  double brow_darken = 0.35;

  std::array<std::array<double, 2>, 68> anchors;  // (u, v) per landmark

  // Flat parameter vector, used by tests to compare identities.
  std::vector<double> as_vector() const;
};

struct CaptureParams {
  std::array<double, 3> light{0.0, 0.0, 1.0};  // unit vector toward the camera side
  double intensity = 1.0;        // in [0.7, 1.15]
  double expression = 0.0;       // deformation magnitude in [0, 1]
  double noise = 0.0;            // gaussian sigma added to color channels
  std::uint64_t noise_seed = 0;  // color-noise stream
};

struct RenderResult {
  ColorImage color;      // {3,H,W}
  RangeImage depth;      // height field, rescaled min->0 max->1 over the face
  LandmarkSet landmarks; // identical pixel coordinates for color and depth
  int label = -1;
  double depth_range_px = 0.0;   // peak-to-peak height before rescaling
  Tensor<float> albedo;  // {3,H,W}; exposed for shading verification
};

IdentityParams generate_identity(std::uint64_t seed);

// Lambertian rendering of the identity surface: the emitted depth is the
// surface height field on the pixel grid and the color image is shaded from
// the same surface, so the two are in one-to-one pixel correspondence.
RenderResult render_pair(const IdentityParams& id, const CaptureParams& cap,
                         std::size_t canvas = 192);

// Draws per-sample capture conditions for (identity index, sample index),
// deterministically from the dataset seed.
CaptureParams sample_capture(std::uint64_t dataset_seed, int identity_index,
                             int sample_index, double noise_level);

struct SynthConfig {
  int num_ids = 20;
  int samples_per_id = 10;
  std::array<double, 3> split{0.7, 0.1, 0.2};  // train/val/test, identity-disjoint
  std::uint64_t seed = 7;
  std::size_t canvas = 192;
  double noise = 0.01;
};

// Renders the full corpus under out_dir and writes manifest.jsonl there.
// Generation is a pure function of (config, seed): same input, same bytes.
Manifest build_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace hfr
