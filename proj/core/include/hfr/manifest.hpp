#pragma once

#include <array>
#include <string>
#include <vector>

namespace hfr {

// Per-sample acquisition conditions. depth_range_px is derived by the
// renderer (peak-to-peak height in pixel units before [0,1] normalization)
// and lets consumers undo the per-image depth rescale.
struct CaptureRecord {
  std::array<double, 3> light{0.0, 0.0, 1.0};
  double intensity = 1.0;
  double expression = 0.0;
  double noise = 0.0;
  double depth_range_px = 0.0;
};

struct SampleRecord {
  std::string color_path;      // relative to the manifest directory
  std::string depth_path;
  std::string landmarks_path;
  int identity = -1;
  std::string split;           // train | val | test
  CaptureRecord capture;
};

struct Manifest {
  std::vector<SampleRecord> samples;

  std::vector<const SampleRecord*> split_samples(const std::string& split) const;
};

// JSON-lines, one record per sample, keys in lexicographic order so that
// identical content means identical bytes.
Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

// Joins the manifest directory with a record-relative path.
std::string resolve_path(const std::string& manifest_path, const std::string& rel);

}  // namespace hfr
