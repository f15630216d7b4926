#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sslosr/error.hpp"

// Binary tensor formats.
//
// Raw tensor ("SSLT"), little-endian:
//   [4B magic "SSLT"][u32 dtype][u32 rank][u64 dims[rank]][row-major payload]
// dtype codes: 1 = float64, 2 = float32, 3 = uint8, 4 = int64.
//
// Named-array container ("SSLC"), little-endian:
//   [4B magic "SSLC"][u32 version][u64 meta_len][meta JSON (UTF-8)]
//   [one SSLT block per array, in meta["arrays"] order]
//   [u64 FNV-1a checksum of all preceding bytes]
namespace sslosr {

enum class Dtype : std::uint32_t { f64 = 1, f32 = 2, u8 = 3, i64 = 4 };

inline std::size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f64: return 8;
    case Dtype::f32: return 4;
    case Dtype::u8: return 1;
    case Dtype::i64: return 8;
  }
  throw format_error("unknown dtype code " +
                     std::to_string(static_cast<std::uint32_t>(d)));
}

struct RawTensor {
  Dtype dtype = Dtype::f64;
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> payload;  // row-major, little-endian

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return dims.empty() ? 0 : n;
  }

  std::vector<double> as_f64() const {
    std::vector<double> out(count());
    const unsigned char* p = payload.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      switch (dtype) {
        case Dtype::f64: {
          double v;
          std::memcpy(&v, p + 8 * i, 8);
          out[i] = v;
          break;
        }
        case Dtype::f32: {
          float v;
          std::memcpy(&v, p + 4 * i, 4);
          out[i] = v;
          break;
        }
        case Dtype::u8: out[i] = static_cast<double>(p[i]); break;
        case Dtype::i64: {
          std::int64_t v;
          std::memcpy(&v, p + 8 * i, 8);
          out[i] = static_cast<double>(v);
          break;
        }
      }
    }
    return out;
  }

  std::vector<std::int64_t> as_i64() const {
    std::vector<std::int64_t> out(count());
    const unsigned char* p = payload.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      switch (dtype) {
        case Dtype::i64: {
          std::int64_t v;
          std::memcpy(&v, p + 8 * i, 8);
          out[i] = v;
          break;
        }
        case Dtype::u8: out[i] = p[i]; break;
        case Dtype::f64: {
          double v;
          std::memcpy(&v, p + 8 * i, 8);
          out[i] = static_cast<std::int64_t>(v);
          break;
        }
        case Dtype::f32: {
          float v;
          std::memcpy(&v, p + 4 * i, 4);
          out[i] = static_cast<std::int64_t>(v);
          break;
        }
      }
    }
    return out;
  }
};

inline RawTensor make_f64_tensor(std::vector<std::uint64_t> dims,
                                 const std::vector<double>& data) {
  RawTensor t;
  t.dtype = Dtype::f64;
  t.dims = std::move(dims);
  t.payload.resize(data.size() * 8);
  std::memcpy(t.payload.data(), data.data(), t.payload.size());
  return t;
}

inline RawTensor make_u8_tensor(std::vector<std::uint64_t> dims,
                                const std::vector<unsigned char>& data) {
  RawTensor t;
  t.dtype = Dtype::u8;
  t.dims = std::move(dims);
  t.payload = data;
  return t;
}

inline RawTensor make_i64_tensor(std::vector<std::uint64_t> dims,
                                 const std::vector<std::int64_t>& data) {
  RawTensor t;
  t.dtype = Dtype::i64;
  t.dims = std::move(dims);
  t.payload.resize(data.size() * 8);
  std::memcpy(t.payload.data(), data.data(), t.payload.size());
  return t;
}

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  write_bytes(os, &v, sizeof(T));  // assumes little-endian host
}

// Reads exactly n bytes or throws a format error naming the byte offset
// where the stream ran out.
inline void read_exact(std::istream& is, void* p, std::size_t n,
                       std::size_t offset, const std::string& path) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw format_error(path + ": truncated at byte offset " +
                       std::to_string(offset +
                                      static_cast<std::size_t>(is.gcount())));
  }
}

template <typename T>
T read_le(std::istream& is, std::size_t& offset, const std::string& path) {
  T v;
  read_exact(is, &v, sizeof(T), offset, path);
  offset += sizeof(T);
  return v;
}

inline std::uint64_t fnv1a(const unsigned char* p, std::size_t n,
                           std::uint64_t h = 14695981039346656037ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

inline void write_raw_tensor_stream(std::ostream& os, const RawTensor& t) {
  detail::write_bytes(os, "SSLT", 4);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dtype));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::write_le<std::uint64_t>(os, d);
  detail::write_bytes(os, t.payload.data(), t.payload.size());
}

inline RawTensor read_raw_tensor_stream(std::istream& is, std::size_t& offset,
                                        const std::string& path) {
  char magic[4];
  detail::read_exact(is, magic, 4, offset, path);
  offset += 4;
  if (std::memcmp(magic, "SSLT", 4) != 0) {
    throw format_error(path + ": unknown magic (expected SSLT)");
  }
  RawTensor t;
  auto code = detail::read_le<std::uint32_t>(is, offset, path);
  if (code < 1 || code > 4) {
    throw format_error(path + ": unknown dtype code " + std::to_string(code));
  }
  t.dtype = static_cast<Dtype>(code);
  auto rank = detail::read_le<std::uint32_t>(is, offset, path);
  if (rank > 16) throw format_error(path + ": implausible rank");
  t.dims.resize(rank);
  for (auto& d : t.dims) d = detail::read_le<std::uint64_t>(is, offset, path);
  t.payload.resize(t.count() * dtype_size(t.dtype));
  detail::read_exact(is, t.payload.data(), t.payload.size(), offset, path);
  offset += t.payload.size();
  return t;
}

inline void write_raw_tensor(const std::string& path, const RawTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  write_raw_tensor_stream(os, t);
  if (!os) throw io_error("write failed: " + path);
}

inline RawTensor read_raw_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::size_t offset = 0;
  return read_raw_tensor_stream(is, offset, path);
}

// ---------------------------------------------------------------------------
// Named-array container
// ---------------------------------------------------------------------------

struct ArrayStore {
  nlohmann::json meta;  // free-form; "arrays" key is maintained on save
  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays;

  const Eigen::MatrixXd& at(const std::string& name) const {
    for (const auto& [n, m] : arrays) {
      if (n == name) return m;
    }
    throw argument_error("ArrayStore: no array named " + name);
  }

  bool has(const std::string& name) const {
    for (const auto& [n, m] : arrays) {
      if (n == name) return true;
    }
    return false;
  }
};

inline void save_array_store(const std::string& path, ArrayStore store) {
  store.meta["arrays"] = nlohmann::json::array();
  for (const auto& [name, m] : store.arrays) store.meta["arrays"].push_back(name);

  std::string meta_str = store.meta.dump();
  std::ostringstream body;
  detail::write_bytes(body, "SSLC", 4);
  detail::write_le<std::uint32_t>(body, 1u);
  detail::write_le<std::uint64_t>(body, meta_str.size());
  detail::write_bytes(body, meta_str.data(), meta_str.size());
  for (const auto& [name, m] : store.arrays) {
    std::vector<double> rowmajor(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        rowmajor[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
      }
    }
    write_raw_tensor_stream(
        body, make_f64_tensor({static_cast<std::uint64_t>(m.rows()),
                               static_cast<std::uint64_t>(m.cols())},
                              rowmajor));
  }
  std::string bytes = body.str();
  std::uint64_t sum = detail::fnv1a(
      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());

  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  detail::write_bytes(os, bytes.data(), bytes.size());
  detail::write_le<std::uint64_t>(os, sum);
  if (!os) throw io_error("write failed: " + path);
}

inline ArrayStore load_array_store(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + 4 + 4 + 8) {
    throw format_error(path + ": too short for a container file");
  }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  std::uint64_t sum = detail::fnv1a(
      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 8);
  if (stored != sum) {
    throw integrity_error(path + ": checksum mismatch (corrupt file)");
  }

  std::istringstream body(bytes.substr(0, bytes.size() - 8));
  std::size_t offset = 0;
  char magic[4];
  detail::read_exact(body, magic, 4, offset, path);
  offset += 4;
  if (std::memcmp(magic, "SSLC", 4) != 0) {
    throw format_error(path + ": unknown magic (expected SSLC)");
  }
  auto version = detail::read_le<std::uint32_t>(body, offset, path);
  if (version != 1) {
    throw format_error(path + ": unsupported container version " +
                       std::to_string(version));
  }
  auto meta_len = detail::read_le<std::uint64_t>(body, offset, path);
  std::string meta_str(meta_len, '\0');
  detail::read_exact(body, meta_str.data(), meta_len, offset, path);
  offset += meta_len;

  ArrayStore store;
  store.meta = nlohmann::json::parse(meta_str);
  for (const auto& name : store.meta.at("arrays")) {
    RawTensor t = read_raw_tensor_stream(body, offset, path);
    if (t.dims.size() != 2 || t.dtype != Dtype::f64) {
      throw format_error(path + ": container arrays must be rank-2 float64");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]),
                      static_cast<Eigen::Index>(t.dims[1]));
    auto data = t.as_f64();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = data[static_cast<std::size_t>(i * m.cols() + j)];
      }
    }
    store.arrays.emplace_back(name.get<std::string>(), std::move(m));
  }
  return store;
}

}  // namespace sslosr
