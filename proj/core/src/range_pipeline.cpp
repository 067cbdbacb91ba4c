#include "hfr/range_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <filesystem>

#include "hfr/png_io.hpp"

namespace hfr {

RangeImage project_to_range(const PointCloud& cloud, const GridSpec& grid) {
  if (cloud.points.empty())
    throw InvalidInputError("project_to_range: empty point cloud");
  if (grid.height == 0 || grid.width == 0)
    throw InvalidInputError("project_to_range: degenerate grid");
  if (grid.pitch <= 0.0)
    throw InvalidInputError("project_to_range: pitch must be > 0");

  const double kInf = std::numeric_limits<double>::infinity();
  Tensor<double> zbuf = Tensor<double>::full({grid.height, grid.width}, -kInf);
  RangeImage out(grid.height, grid.width);

  for (const auto& p : cloud.points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
      throw InvalidInputError("project_to_range: non-finite point coordinate");
    double cx = std::floor((p[0] - grid.origin_x) / grid.pitch);
    double cy = std::floor((p[1] - grid.origin_y) / grid.pitch);
    if (cx < 0 || cy < 0 || cx >= static_cast<double>(grid.width) ||
        cy >= static_cast<double>(grid.height))
      continue;
    auto x = static_cast<std::size_t>(cx);
    auto y = static_cast<std::size_t>(cy);
    if (p[2] > zbuf.at2(y, x)) zbuf.at2(y, x) = p[2];
    out.mask.at2(y, x) = 1;
  }

  double zmin = kInf, zmax = -kInf;
  for (std::size_t i = 0; i < zbuf.numel(); ++i) {
    if (out.mask[i] == 0) continue;
    zmin = std::min(zmin, zbuf[i]);
    zmax = std::max(zmax, zbuf[i]);
  }
  // min == max collapses every observed pixel to 0 by the min->0 rule.
  const double range = zmax - zmin;
  for (std::size_t i = 0; i < zbuf.numel(); ++i) {
    if (out.mask[i] == 0) continue;
    out.values[i] = range > 0.0 ? static_cast<float>((zbuf[i] - zmin) / range) : 0.0f;
  }
  return out;
}

RangeImage fill_holes(const RangeImage& img, const Tensor<std::uint8_t>& face_region) {
  check_same_shape(img.mask, face_region, "fill_holes");
  const std::size_t h = img.height(), w = img.width();

  bool any_observed = false, any_hole = false;
  for (std::size_t i = 0; i < face_region.numel(); ++i) {
    if (face_region[i] == 0) continue;
    (img.mask[i] ? any_observed : any_hole) = true;
  }
  if (!any_hole) return img;
  if (!any_observed)
    throw DegenerateError("fill_holes: face region has no observed pixels");

  RangeImage cur = img;
  bool progress = true;
  std::size_t holes = 1;
  while (holes > 0) {
    if (!progress)
      throw DegenerateError("fill_holes: unreachable holes in face region");
    RangeImage next = cur;
    progress = false;
    holes = 0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (face_region.at2(y, x) == 0 || cur.observed(y, x)) continue;
        double sum = 0.0;
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
            if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) ||
                nx >= static_cast<long>(w))
              continue;
            if (!cur.observed(ny, nx)) continue;
            sum += cur.values.at2(ny, nx);
            ++count;
          }
        }
        if (count > 0) {
          next.values.at2(y, x) = static_cast<float>(sum / count);
          next.mask.at2(y, x) = 1;
          progress = true;
        } else {
          ++holes;
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

Landmark LandmarkSet::left_eye_center() const {
  double ax = 0, ay = 0, bx = 0, by = 0;
  for (std::size_t i = 36; i < 42; ++i) { ax += points[i].x; ay += points[i].y; }
  for (std::size_t i = 42; i < 48; ++i) { bx += points[i].x; by += points[i].y; }
  ax /= 6; ay /= 6; bx /= 6; by /= 6;
  return ax <= bx ? Landmark{ax, ay} : Landmark{bx, by};
}

Landmark LandmarkSet::right_eye_center() const {
  double ax = 0, ay = 0, bx = 0, by = 0;
  for (std::size_t i = 36; i < 42; ++i) { ax += points[i].x; ay += points[i].y; }
  for (std::size_t i = 42; i < 48; ++i) { bx += points[i].x; by += points[i].y; }
  ax /= 6; ay /= 6; bx /= 6; by /= 6;
  return ax <= bx ? Landmark{bx, by} : Landmark{ax, ay};
}

LandmarkSet read_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_landmarks: cannot open " + path);
  LandmarkSet lm;
  for (std::size_t i = 0; i < LandmarkSet::kCount; ++i) {
    if (!(in >> lm.points[i].x >> lm.points[i].y))
      throw IoError("read_landmarks: " + path + ": expected 68 'x y' lines");
  }
  return lm;
}

void write_landmarks(const std::string& path, const LandmarkSet& lm) {
  std::ofstream out(path);
  if (!out) throw IoError("write_landmarks: cannot open " + path);
  out.precision(17);
  for (const auto& p : lm.points) out << p.x << " " << p.y << "\n";
}

Landmark SimilarityTransform::apply(const Landmark& p) const {
  double dx = p.x - pivot_x, dy = p.y - pivot_y;
  double c = std::cos(angle), s = std::sin(angle);
  return {scale * (c * dx - s * dy) + offset_x,
          scale * (s * dx + c * dy) + offset_y};
}

Landmark SimilarityTransform::invert(const Landmark& p) const {
  double dx = (p.x - offset_x) / scale, dy = (p.y - offset_y) / scale;
  double c = std::cos(-angle), s = std::sin(-angle);
  return {c * dx - s * dy + pivot_x, s * dx + c * dy + pivot_y};
}

SimilarityTransform compute_alignment(const LandmarkSet& lm, const CropGeometry& geometry) {
  if (geometry.target_iod_px <= 0.0 ||
      geometry.target_iod_px >= static_cast<double>(geometry.out_size))
    throw InvalidInputError("compute_alignment: target iod outside (0, out_size)");
  Landmark l = lm.left_eye_center();
  Landmark r = lm.right_eye_center();
  double vx = r.x - l.x, vy = r.y - l.y;
  double iod = std::hypot(vx, vy);
  if (iod == 0.0)
    throw DegenerateError("compute_alignment: coincident eye centers");

  SimilarityTransform t;
  t.scale = geometry.target_iod_px / iod;
  t.angle = -std::atan2(vy, vx);  // level the eye line, nothing more
  t.pivot_x = 0.5 * (l.x + r.x);
  t.pivot_y = 0.5 * (l.y + r.y);
  t.offset_x = (static_cast<double>(geometry.out_size) - 1.0) / 2.0;
  t.offset_y = geometry.eye_row;
  return t;
}

namespace {

struct BilinearWeights {
  long x0, y0;
  double fx, fy;
};

BilinearWeights bilinear_at(const Landmark& src) {
  BilinearWeights b;
  b.x0 = static_cast<long>(std::floor(src.x));
  b.y0 = static_cast<long>(std::floor(src.y));
  b.fx = src.x - static_cast<double>(b.x0);
  b.fy = src.y - static_cast<double>(b.y0);
  return b;
}

}  // namespace

ColorImage warp_color(const ColorImage& img, const SimilarityTransform& t, std::size_t out_size) {
  if (img.ndim() != 3) throw ShapeError("warp_color: expected CHW");
  const std::size_t ch = img.dim(0);
  const long h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
  ColorImage out({ch, out_size, out_size});
  for (std::size_t y = 0; y < out_size; ++y) {
    for (std::size_t x = 0; x < out_size; ++x) {
      Landmark src = t.invert({static_cast<double>(x), static_cast<double>(y)});
      BilinearWeights b = bilinear_at(src);
      double wgt[4] = {(1 - b.fx) * (1 - b.fy), b.fx * (1 - b.fy),
                       (1 - b.fx) * b.fy, b.fx * b.fy};
      long xs[4] = {b.x0, b.x0 + 1, b.x0, b.x0 + 1};
      long ys[4] = {b.y0, b.y0, b.y0 + 1, b.y0 + 1};
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (xs[k] < 0 || ys[k] < 0 || xs[k] >= w || ys[k] >= h) continue;
          acc += wgt[k] * static_cast<double>(img.at3(c, ys[k], xs[k]));
        }
        out.at3(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

RangeImage warp_range(const RangeImage& img, const SimilarityTransform& t, std::size_t out_size) {
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  RangeImage out(out_size, out_size);
  for (std::size_t y = 0; y < out_size; ++y) {
    for (std::size_t x = 0; x < out_size; ++x) {
      Landmark src = t.invert({static_cast<double>(x), static_cast<double>(y)});
      BilinearWeights b = bilinear_at(src);
      double wgt[4] = {(1 - b.fx) * (1 - b.fy), b.fx * (1 - b.fy),
                       (1 - b.fx) * b.fy, b.fx * b.fy};
      long xs[4] = {b.x0, b.x0 + 1, b.x0, b.x0 + 1};
      long ys[4] = {b.y0, b.y0, b.y0 + 1, b.y0 + 1};
      double acc = 0.0, cover = 0.0;
      for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || ys[k] < 0 || xs[k] >= w || ys[k] >= h) continue;
        if (!img.observed(ys[k], xs[k])) continue;
        acc += wgt[k] * static_cast<double>(img.values.at2(ys[k], xs[k]));
        cover += wgt[k];
      }
      if (cover >= 0.5) {
        out.values.at2(y, x) = static_cast<float>(acc / cover);
        out.mask.at2(y, x) = 1;
      }
    }
  }
  return out;
}

LandmarkSet transform_landmarks(const LandmarkSet& lm, const SimilarityTransform& t) {
  LandmarkSet out;
  for (std::size_t i = 0; i < LandmarkSet::kCount; ++i)
    out.points[i] = t.apply(lm.points[i]);
  return out;
}

namespace {

// Andrew monotone chain; returns hull in counterclockwise order.
std::vector<Landmark> convex_hull(std::vector<Landmark> pts) {
  std::sort(pts.begin(), pts.end(), [](const Landmark& a, const Landmark& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  auto cross = [](const Landmark& o, const Landmark& a, const Landmark& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Landmark> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t0 = k + 1; i-- > 0;) {
    while (k >= t0 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);
  return hull;
}

}  // namespace

Tensor<std::uint8_t> face_region_mask(const LandmarkSet& lm, std::size_t h, std::size_t w) {
  Landmark l = lm.left_eye_center(), r = lm.right_eye_center();
  double eye_y = 0.5 * (l.y + r.y);

  std::vector<Landmark> pts(lm.points.begin(), lm.points.end());
  for (std::size_t i = 0; i <= 16; ++i) {
    const Landmark& jaw = lm.points[i];
    pts.push_back({jaw.x, 2.0 * eye_y - jaw.y});  // synthesize forehead
  }
  std::vector<Landmark> hull = convex_hull(std::move(pts));
  if (hull.size() < 3)
    throw DegenerateError("face_region_mask: collinear landmarks");

  Tensor<std::uint8_t> region({h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // even-odd rule at pixel center
      double px = static_cast<double>(x), py = static_cast<double>(y);
      bool inside = false;
      for (std::size_t i = 0, j = hull.size() - 1; i < hull.size(); j = i++) {
        const Landmark& a = hull[i];
        const Landmark& b = hull[j];
        if ((a.y > py) != (b.y > py) &&
            px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x)
          inside = !inside;
      }
      region.at2(y, x) = inside ? 1 : 0;
    }
  }
  return region;
}

PreprocessResult preprocess_dataset(const std::string& manifest_path,
                                    const std::string& out_dir,
                                    const CropGeometry& geometry) {
  namespace fs = std::filesystem;
  Manifest input = read_manifest(manifest_path);
  if (input.samples.empty())
    throw InvalidInputError("preprocess: empty manifest " + manifest_path);
  fs::create_directories(out_dir);

  PreprocessResult result;
  std::vector<Tensor<float>> train_colors;
  std::vector<Tensor<float>> train_depths;

  for (const auto& rec : input.samples) {
    ColorImage color = read_png_rgb8(resolve_path(manifest_path, rec.color_path));
    RangeImage depth = read_png_gray16(resolve_path(manifest_path, rec.depth_path));
    LandmarkSet lm = read_landmarks(resolve_path(manifest_path, rec.landmarks_path));

    SimilarityTransform t = compute_alignment(lm, geometry);
    ColorImage color_out = warp_color(color, t, geometry.out_size);
    RangeImage depth_out = warp_range(depth, t, geometry.out_size);
    LandmarkSet lm_out = transform_landmarks(lm, t);

    Tensor<std::uint8_t> region =
        face_region_mask(lm_out, geometry.out_size, geometry.out_size);
    depth_out = fill_holes(depth_out, region);

    SampleRecord out_rec = rec;  // same relative names, new directory
    write_png_rgb8((fs::path(out_dir) / out_rec.color_path).string(), color_out);
    write_png_gray16((fs::path(out_dir) / out_rec.depth_path).string(), depth_out);
    write_landmarks((fs::path(out_dir) / out_rec.landmarks_path).string(), lm_out);
    result.manifest.samples.push_back(out_rec);

    if (rec.split == "train") {
      train_colors.push_back(color_out);
      Tensor<float> d({1, depth_out.height(), depth_out.width()});
      std::copy(depth_out.values.data(),
                depth_out.values.data() + depth_out.values.numel(), d.data());
      train_depths.push_back(std::move(d));
    }
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), result.manifest);

  if (train_colors.empty())
    throw InvalidInputError("preprocess: manifest has no training split");
  std::vector<const Tensor<float>*> cp, dp;
  for (const auto& t : train_colors) cp.push_back(&t);
  for (const auto& t : train_depths) dp.push_back(&t);
  result.color_stats = compute_channel_stats(cp);
  result.depth_stats = compute_channel_stats(dp);
  return result;
}

ChannelStats compute_channel_stats(const std::vector<const Tensor<float>*>& images) {
  if (images.empty())
    throw InvalidInputError("compute_channel_stats: no images");
  const std::size_t ch = images.front()->dim(0);
  std::vector<double> sum(ch, 0.0);
  std::vector<double> count(ch, 0.0);
  for (const auto* img : images) {
    if (img->ndim() != 3 || img->dim(0) != ch)
      throw ShapeError("compute_channel_stats: inconsistent image shapes");
    const std::size_t plane = img->dim(1) * img->dim(2);
    for (std::size_t c = 0; c < ch; ++c) {
      const float* p = img->data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) sum[c] += p[i];
      count[c] += static_cast<double>(plane);
    }
  }
  ChannelStats stats;
  for (std::size_t c = 0; c < ch; ++c)
    stats.mean.push_back(static_cast<float>(sum[c] / count[c]));
  return stats;
}

}  // namespace hfr
