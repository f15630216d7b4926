#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sslosr/error.hpp"
#include "sslosr/tensor_io.hpp"

namespace sslosr {

// A labelled sample pool. Samples are stored flattened row-major, one row per
// sample; `shape` is the per-sample shape ({2} for the 2D domain, {3,32,32}
// for CIFAR-style images). Labels are contiguous in 1..k_total().
struct Dataset {
  std::string name;
  std::vector<std::size_t> shape;
  Eigen::MatrixXd samples;
  std::vector<int> labels;
  std::vector<std::string> category_names;

  std::size_t n() const { return static_cast<std::size_t>(samples.rows()); }

  std::size_t sample_dim() const {
    std::size_t d = 1;
    for (auto s : shape) d *= s;
    return d;
  }

  int k_total() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l);
    return k;
  }

  void validate() const {
    if (labels.size() != n()) {
      throw argument_error("Dataset " + name + ": " +
                           std::to_string(labels.size()) + " labels for " +
                           std::to_string(n()) + " samples");
    }
    if (n() > 0 && static_cast<std::size_t>(samples.cols()) != sample_dim()) {
      throw argument_error("Dataset " + name + ": sample width " +
                           std::to_string(samples.cols()) +
                           " does not match shape product " +
                           std::to_string(sample_dim()));
    }
    const int k = k_total();
    for (int l : labels) {
      if (l < 1 || l > k) {
        throw argument_error("Dataset " + name + ": label " +
                             std::to_string(l) + " outside 1.." +
                             std::to_string(k));
      }
    }
  }
};

enum class DataFormat { cifar_binary, idx, raw_tensor };

inline DataFormat parse_data_format(const std::string& s) {
  if (s == "cifar-binary") return DataFormat::cifar_binary;
  if (s == "idx") return DataFormat::idx;
  if (s == "raw-tensor") return DataFormat::raw_tensor;
  throw argument_error("unknown dataset format: " + s);
}

namespace detail {

// Remaps arbitrary integer labels to contiguous 1..K, ascending by value.
inline std::vector<int> remap_labels(const std::vector<std::int64_t>& raw) {
  std::map<std::int64_t, int> order;
  for (auto v : raw) order[v] = 0;
  int next = 1;
  for (auto& [v, idx] : order) idx = next++;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = order[raw[i]];
  return out;
}

inline std::vector<std::string> default_category_names(int k) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) names.push_back("class-" + std::to_string(i));
  return names;
}

inline double scale_u8(double v) { return v / 127.5 - 1.0; }

inline std::uint32_t read_be_u32(std::istream& is, std::size_t& offset,
                                 const std::string& path) {
  unsigned char b[4];
  read_exact(is, b, 4, offset, path);
  offset += 4;
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

struct IdxTensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // converted, unscaled
  bool was_u8 = false;
};

inline IdxTensor read_idx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::size_t offset = 0;
  unsigned char magic[4];
  read_exact(is, magic, 4, offset, path);
  offset += 4;
  if (magic[0] != 0 || magic[1] != 0) {
    throw format_error(path + ": unknown magic (expected IDX header)");
  }
  const unsigned char type = magic[2];
  const unsigned char rank = magic[3];
  IdxTensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) d = read_be_u32(is, offset, path);
  std::size_t count = 1;
  for (auto d : t.dims) count *= d;
  if (rank == 0) count = 0;
  t.data.resize(count);
  switch (type) {
    case 0x08: {  // unsigned byte
      std::vector<unsigned char> buf(count);
      read_exact(is, buf.data(), count, offset, path);
      for (std::size_t i = 0; i < count; ++i) t.data[i] = buf[i];
      t.was_u8 = true;
      break;
    }
    case 0x0D: {  // big-endian float32
      for (std::size_t i = 0; i < count; ++i) {
        unsigned char b[4];
        read_exact(is, b, 4, offset, path);
        offset += 4;
        std::uint32_t u = (std::uint32_t(b[0]) << 24) |
                          (std::uint32_t(b[1]) << 16) |
                          (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
        float f;
        std::memcpy(&f, &u, 4);
        t.data[i] = f;
      }
      break;
    }
    default:
      throw format_error(path + ": unsupported IDX element type 0x" +
                         std::to_string(type));
  }
  return t;
}

// train-images-idx3-ubyte -> train-labels-idx1-ubyte (MNIST convention).
inline std::string idx_labels_companion(const std::string& path) {
  std::string p = path;
  auto replace = [&](const std::string& from, const std::string& to) {
    auto pos = p.find(from);
    if (pos != std::string::npos) p.replace(pos, from.size(), to);
  };
  replace("images", "labels");
  replace("idx3", "idx1");
  return p;
}

}  // namespace detail

// Loads a dataset from disk. Pixel conventions: unsigned-byte payloads are
// scaled to [-1, 1]; float payloads are taken as already normalized.
//
// cifar-binary: 3073-byte records (1 label byte + 3x32x32 pixel bytes).
// idx: big-endian IDX images; labels come from the MNIST-style companion
//      file (images->labels, idx3->idx1) when it exists, else all samples
//      get label 1.
// raw-tensor: SSLT tensor with dims [N, ...]; labels come from
//      "<path>.labels" (rank-1 SSLT) when it exists, else all label 1.
inline Dataset load_dataset(const std::string& path, DataFormat format) {
  Dataset ds;
  ds.name = std::filesystem::path(path).stem().string();

  switch (format) {
    case DataFormat::cifar_binary: {
      std::ifstream is(path, std::ios::binary);
      if (!is) throw io_error("cannot open: " + path);
      std::string bytes((std::istreambuf_iterator<char>(is)),
                        std::istreambuf_iterator<char>());
      constexpr std::size_t kRecord = 3073;
      if (bytes.size() % kRecord != 0) {
        throw format_error(path + ": truncated at byte offset " +
                           std::to_string(bytes.size() -
                                          bytes.size() % kRecord) +
                           " (records are 3073 bytes)");
      }
      const std::size_t n = bytes.size() / kRecord;
      ds.shape = {3, 32, 32};
      ds.samples.resize(static_cast<Eigen::Index>(n), 3072);
      std::vector<std::int64_t> raw_labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec =
            reinterpret_cast<const unsigned char*>(bytes.data()) + i * kRecord;
        raw_labels[i] = rec[0];
        for (std::size_t j = 0; j < 3072; ++j) {
          ds.samples(static_cast<Eigen::Index>(i),
                     static_cast<Eigen::Index>(j)) =
              detail::scale_u8(rec[1 + j]);
        }
      }
      ds.labels = detail::remap_labels(raw_labels);
      break;
    }
    case DataFormat::idx: {
      detail::IdxTensor imgs = detail::read_idx(path);
      if (imgs.dims.empty()) throw format_error(path + ": rank-0 IDX tensor");
      const std::size_t n = imgs.dims[0];
      ds.shape.assign(imgs.dims.begin() + 1, imgs.dims.end());
      if (ds.shape.empty()) ds.shape = {1};
      const std::size_t dim = ds.sample_dim();
      ds.samples.resize(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
          double v = imgs.data[i * dim + j];
          ds.samples(static_cast<Eigen::Index>(i),
                     static_cast<Eigen::Index>(j)) =
              imgs.was_u8 ? detail::scale_u8(v) : v;
        }
      }
      const std::string labels_path = detail::idx_labels_companion(path);
      if (labels_path != path && std::filesystem::exists(labels_path)) {
        detail::IdxTensor lab = detail::read_idx(labels_path);
        if (lab.data.size() != n) {
          throw format_error(labels_path + ": label count " +
                             std::to_string(lab.data.size()) +
                             " does not match sample count " +
                             std::to_string(n));
        }
        std::vector<std::int64_t> raw(n);
        for (std::size_t i = 0; i < n; ++i) {
          raw[i] = static_cast<std::int64_t>(lab.data[i]);
        }
        ds.labels = detail::remap_labels(raw);
      } else {
        ds.labels.assign(n, 1);
      }
      break;
    }
    case DataFormat::raw_tensor: {
      RawTensor t = read_raw_tensor(path);
      if (t.dims.empty()) throw format_error(path + ": rank-0 tensor");
      const std::size_t n = t.dims[0];
      ds.shape.assign(t.dims.begin() + 1, t.dims.end());
      if (ds.shape.empty()) ds.shape = {1};
      const std::size_t dim = ds.sample_dim();
      auto data = t.as_f64();
      ds.samples.resize(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
          double v = data[i * dim + j];
          ds.samples(static_cast<Eigen::Index>(i),
                     static_cast<Eigen::Index>(j)) =
              t.dtype == Dtype::u8 ? detail::scale_u8(v) : v;
        }
      }
      const std::string labels_path = path + ".labels";
      if (std::filesystem::exists(labels_path)) {
        RawTensor lt = read_raw_tensor(labels_path);
        auto raw = lt.as_i64();
        if (raw.size() != n) {
          throw format_error(labels_path + ": label count " +
                             std::to_string(raw.size()) +
                             " does not match sample count " +
                             std::to_string(n));
        }
        ds.labels = detail::remap_labels(raw);
      } else {
        ds.labels.assign(n, 1);
      }
      break;
    }
  }

  ds.category_names = detail::default_category_names(std::max(ds.k_total(), 1));
  ds.validate();
  return ds;
}

// Adapts samples to a target shape: center-crop, then nearest-neighbour
// resize; single channel replicates to three, three average to one.
// Non-image shapes (rank != 3) must already match.
inline Dataset reshape_like(const Dataset& src,
                            const std::vector<std::size_t>& target_shape) {
  if (src.shape == target_shape) return src;
  auto as_chw = [](const std::vector<std::size_t>& s)
      -> std::array<std::size_t, 3> {
    if (s.size() == 3) return {s[0], s[1], s[2]};
    if (s.size() == 2) return {1, s[0], s[1]};
    throw argument_error("reshape_like: only image shapes can be adapted");
  };
  auto [sc, sh, sw] = as_chw(src.shape);
  auto [tc, th, tw] = as_chw(target_shape);
  if (tc != sc && !((sc == 1 && tc == 3) || (sc == 3 && tc == 1))) {
    throw argument_error("reshape_like: unsupported channel conversion");
  }

  // Center-crop to the target aspect ratio, then nearest-neighbour resize.
  std::size_t crop_h = sh, crop_w = sw;
  if (th * sw > tw * sh) {
    crop_w = std::max<std::size_t>(1, sh * tw / th);
  } else if (th * sw < tw * sh) {
    crop_h = std::max<std::size_t>(1, sw * th / tw);
  }
  const std::size_t off_h = (sh - crop_h) / 2;
  const std::size_t off_w = (sw - crop_w) / 2;

  Dataset out;
  out.name = src.name;
  out.shape = target_shape;
  out.labels = src.labels;
  out.category_names = src.category_names;
  out.samples.resize(src.samples.rows(),
                     static_cast<Eigen::Index>(tc * th * tw));
  for (Eigen::Index i = 0; i < src.samples.rows(); ++i) {
    for (std::size_t c = 0; c < tc; ++c) {
      for (std::size_t y = 0; y < th; ++y) {
        const std::size_t sy = off_h + y * crop_h / th;
        for (std::size_t x = 0; x < tw; ++x) {
          const std::size_t sx = off_w + x * crop_w / tw;
          double v;
          if (sc == tc || sc == 1) {
            const std::size_t cs = sc == 1 ? 0 : c;
            v = src.samples(i, static_cast<Eigen::Index>(
                                   (cs * sh + sy) * sw + sx));
          } else {  // 3 -> 1: channel mean
            v = 0;
            for (std::size_t cc = 0; cc < 3; ++cc) {
              v += src.samples(i, static_cast<Eigen::Index>(
                                      (cc * sh + sy) * sw + sx));
            }
            v /= 3.0;
          }
          out.samples(i, static_cast<Eigen::Index>((c * th + y) * tw + x)) = v;
        }
      }
    }
  }
  return out;
}

}  // namespace sslosr
