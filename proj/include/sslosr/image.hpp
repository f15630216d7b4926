#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "sslosr/eval.hpp"
#include "sslosr/nets.hpp"
#include "sslosr/train.hpp"

namespace sslosr {

// 8-bit RGB raster, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;

  unsigned char* px(int x, int y) {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  const unsigned char* px(int x, int y) const {
    return rgb.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

// Binary portable pixmap (P6). View with any image tool or convert via
// e.g. ImageMagick.
inline void write_ppm(const std::string& path, const Raster& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "P6\n" << r.width << " " << r.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(r.rgb.data()),
           static_cast<std::streamsize>(r.rgb.size()));
  if (!os) throw io_error("write failed: " + path);
}

namespace detail {

inline unsigned char to_byte_unit(double v) {  // [-1,1] -> [0,255]
  const double t = std::clamp((v + 1.0) * 127.5, 0.0, 255.0);
  return static_cast<unsigned char>(std::lround(t));
}

inline std::array<unsigned char, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  auto to8 = [&](double t) {
    return static_cast<unsigned char>(
        std::lround(std::clamp((t + m) * 255.0, 0.0, 255.0)));
  };
  return {to8(r), to8(g), to8(b)};
}

// Per-sample pixel geometry: images render as CxHxW, anything else as a
// 1-row grayscale strip.
struct CellGeom {
  int c = 1, h = 1, w = 1;
};

inline CellGeom cell_geom(const std::vector<std::size_t>& shape) {
  if (shape.size() == 3 && (shape[0] == 1 || shape[0] == 3)) {
    return {static_cast<int>(shape[0]), static_cast<int>(shape[1]),
            static_cast<int>(shape[2])};
  }
  std::size_t flat = 1;
  for (auto s : shape) flat *= s;
  return {1, 1, static_cast<int>(flat)};
}

}  // namespace detail

// rows x cols grid of generator outputs, mapped from [-1,1] to [0,255].
// Deterministic under seed.
inline Raster render_sample_grid(const TrainState& st, int rows, int cols,
                                 std::uint64_t seed) {
  if (!uses_generator(st.cfg.kind)) {
    throw argument_error("render_sample_grid: model has no generator");
  }
  if (rows < 1 || cols < 1) {
    throw argument_error("render_sample_grid: rows and cols must be >= 1");
  }
  Rng rng(seed);
  Mat z = sample_noise(rng, static_cast<Eigen::Index>(rows) * cols,
                       st.cfg.arch.noise_dim);
  Mat samples = generator_forward(st.cfg.arch, st.generator, z);

  const auto geom = detail::cell_geom(st.cfg.arch.input_shape);
  Raster out;
  out.width = cols * geom.w;
  out.height = rows * geom.h;
  out.rgb.assign(static_cast<std::size_t>(out.width) * out.height * 3, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Eigen::Index s = static_cast<Eigen::Index>(r) * cols + c;
      for (int y = 0; y < geom.h; ++y) {
        for (int x = 0; x < geom.w; ++x) {
          unsigned char* px = out.px(c * geom.w + x, r * geom.h + y);
          for (int ch = 0; ch < 3; ++ch) {
            const int src_ch = geom.c == 3 ? ch : 0;
            px[ch] = detail::to_byte_unit(
                samples(s, (src_ch * geom.h + y) * geom.w + x));
          }
        }
      }
    }
  }
  return out;
}

inline void emit_sample_grid(const TrainState& st, int rows, int cols,
                             std::uint64_t seed, const std::string& path) {
  write_ppm(path, render_sample_grid(st, rows, cols, seed));
}

// Known-score field of a 2D-input classifier over a rectangle: hue encodes
// the predicted category, intensity the known score.
struct ScoreMap {
  int resolution = 0;
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  std::vector<double> intensity;  // row-major, resolution^2, known scores
  std::vector<int> label;         // predicted labels, 1-based
  Raster raster;

  double intensity_at(double x, double y) const {
    const int ix = std::clamp(
        static_cast<int>((x - x_min) / (x_max - x_min) * resolution), 0,
        resolution - 1);
    const int iy = std::clamp(
        static_cast<int>((y - y_min) / (y_max - y_min) * resolution), 0,
        resolution - 1);
    return intensity[static_cast<std::size_t>(iy) * resolution + ix];
  }
};

inline ScoreMap render_score_map(const TrainState& st, double x_min,
                                 double x_max, double y_min, double y_max,
                                 int resolution,
                                 ScorerKind scorer = ScorerKind::primary) {
  if (st.cfg.arch.input_dim() != 2) {
    throw argument_error("render_score_map: classifier input must be 2D");
  }
  if (resolution < 1 || !(x_max > x_min) || !(y_max > y_min)) {
    throw argument_error("render_score_map: bad region or resolution");
  }
  ScoreMap map;
  map.resolution = resolution;
  map.x_min = x_min;
  map.x_max = x_max;
  map.y_min = y_min;
  map.y_max = y_max;
  map.intensity.resize(static_cast<std::size_t>(resolution) * resolution);
  map.label.resize(map.intensity.size());
  map.raster.width = map.raster.height = resolution;
  map.raster.rgb.assign(map.intensity.size() * 3, 0);

  const int k = st.cfg.arch.k;
  Mat grid(static_cast<Eigen::Index>(resolution) * resolution, 2);
  for (int iy = 0; iy < resolution; ++iy) {
    const double y = y_min + (y_max - y_min) * (iy + 0.5) / resolution;
    for (int ix = 0; ix < resolution; ++ix) {
      const double x = x_min + (x_max - x_min) * (ix + 0.5) / resolution;
      grid(static_cast<Eigen::Index>(iy) * resolution + ix, 0) = x;
      grid(static_cast<Eigen::Index>(iy) * resolution + ix, 1) = y;
    }
  }
  auto scored = score_batch(st, grid, scorer);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    map.intensity[i] = scored[i].known_score;
    map.label[i] = scored[i].predicted_label;
    const double hue =
        static_cast<double>(scored[i].predicted_label - 1) / std::max(k, 1);
    const double v = std::clamp(scored[i].known_score, 0.0, 1.0);
    auto rgb = detail::hsv_to_rgb(hue, 0.85, v);
    map.raster.rgb[3 * i + 0] = rgb[0];
    map.raster.rgb[3 * i + 1] = rgb[1];
    map.raster.rgb[3 * i + 2] = rgb[2];
  }
  return map;
}

inline void emit_score_map(const TrainState& st, double x_min, double x_max,
                           double y_min, double y_max, int resolution,
                           const std::string& path,
                           ScorerKind scorer = ScorerKind::primary) {
  write_ppm(path, render_score_map(st, x_min, x_max, y_min, y_max, resolution,
                                   scorer)
                      .raster);
}

}  // namespace sslosr
