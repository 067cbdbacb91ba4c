#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hfr/image.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

// Raw 3D face scan, coordinates in millimeters, optional per-point color.
struct PointCloud {
  std::vector<std::array<double, 3>> points;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty or points.size()
};

// Orthographic projection grid. Pixel (row r, col c) collects points with
// x in [origin_x + c*pitch, origin_x + (c+1)*pitch), y likewise; the camera
// looks along -z, so larger z is nearer to it.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pitch = 1.0;
  std::size_t height = 128;
  std::size_t width = 128;
};

// Z-buffer projection: each pixel keeps the nearest-to-camera (max z) point
// that lands in it, then observed depths are rescaled min->0, max->1.
RangeImage project_to_range(const PointCloud& cloud, const GridSpec& grid);

// Iteratively assigns every unobserved pixel inside face_region the mean of
// its observed 8-neighbors (Jacobi sweeps: values written in one iteration
// are used only from the next one). Pixels observed on input are unchanged.
RangeImage fill_holes(const RangeImage& img, const Tensor<std::uint8_t>& face_region);

struct Landmark {
  double x = 0.0;
  double y = 0.0;
};

// The 68-point scheme: 0-16 jaw, 17-26 brows, 27-35 nose, 36-41 and 42-47
// eye contours, 48-67 mouth.
struct LandmarkSet {
  static constexpr std::size_t kCount = 68;
  std::array<Landmark, kCount> points;

  // Eye centers are the means of the two 6-point eye contours; "left" is the
  // one with smaller image x.
  Landmark left_eye_center() const;
  Landmark right_eye_center() const;
};

LandmarkSet read_landmarks(const std::string& path);
void write_landmarks(const std::string& path, const LandmarkSet& lm);

// Similarity transform dst = scale * R(angle) * (src - pivot) + offset.
struct SimilarityTransform {
  double scale = 1.0;
  double angle = 0.0;  // radians, applied as eye-line leveling only
  double pivot_x = 0.0, pivot_y = 0.0;
  double offset_x = 0.0, offset_y = 0.0;

  Landmark apply(const Landmark& p) const;
  Landmark invert(const Landmark& p) const;
};

struct CropGeometry {
  std::size_t out_size = 128;
  double target_iod_px = 50.0;
  double eye_row = 48.0;
};

// Places the eye centers horizontally symmetric about the vertical midline,
// at geometry.eye_row, with the requested inter-ocular pixel distance.
SimilarityTransform compute_alignment(const LandmarkSet& lm, const CropGeometry& geometry);

ColorImage warp_color(const ColorImage& img, const SimilarityTransform& t, std::size_t out_size);
// Mask-aware warp: bilinear over observed pixels only; an output pixel is
// observed when at least half of its interpolation weight is.
RangeImage warp_range(const RangeImage& img, const SimilarityTransform& t, std::size_t out_size);
LandmarkSet transform_landmarks(const LandmarkSet& lm, const SimilarityTransform& t);

// Face interior for hole filling: convex hull of the transformed landmarks
// plus the jaw contour mirrored above the eye line (the 68-point scheme has
// no forehead points).
Tensor<std::uint8_t> face_region_mask(const LandmarkSet& lm, std::size_t h, std::size_t w);

// Per-channel means over the training split (3 values for color, 1 for depth).
struct ChannelStats {
  std::vector<float> mean;
};

// out[c] = in[c] - mean[c], batch layout NCHW. The subtraction happens in the
// tensor's own precision; with float-valued inputs and means promoted to a
// double batch it is exactly invertible.
template <typename T>
Tensor<T> normalize_batch(const Tensor<T>& batch, const ChannelStats& stats) {
  if (batch.ndim() != 4)
    throw ShapeError("normalize_batch: expected NCHW, got " + batch.shape_str());
  if (batch.dim(1) != stats.mean.size())
    throw InvalidInputError("normalize_batch: stats have " +
                            std::to_string(stats.mean.size()) +
                            " channels, batch has " +
                            std::to_string(batch.dim(1)));
  Tensor<T> out = batch;
  const std::size_t plane = batch.dim(2) * batch.dim(3);
  for (std::size_t n = 0; n < batch.dim(0); ++n)
    for (std::size_t c = 0; c < batch.dim(1); ++c) {
      T m = static_cast<T>(stats.mean[c]);
      T* p = out.data() + (n * batch.dim(1) + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] -= m;
    }
  return out;
}

template <typename T>
Tensor<T> denormalize_batch(const Tensor<T>& batch, const ChannelStats& stats) {
  ChannelStats neg;
  neg.mean.reserve(stats.mean.size());
  for (float m : stats.mean) neg.mean.push_back(-m);
  return normalize_batch(batch, neg);
}

// Mean per channel over a set of CHW images, accumulated in double.
ChannelStats compute_channel_stats(const std::vector<const Tensor<float>*>& images);

}  // namespace hfr

#include "hfr/manifest.hpp"

namespace hfr {

struct PreprocessResult {
  Manifest manifest;        // processed records, same order as the input
  ChannelStats color_stats; // training split means
  ChannelStats depth_stats;
};

// Full dataset pass: align color and depth of each pair with the identical
// eye-based similarity transform, fill depth holes inside the face region,
// write the cropped pairs plus transformed landmarks under out_dir, and
// compute training-split channel means.
PreprocessResult preprocess_dataset(const std::string& manifest_path,
                                    const std::string& out_dir,
                                    const CropGeometry& geometry);

}  // namespace hfr
