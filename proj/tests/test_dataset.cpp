#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sslosr/dataset.hpp"

using namespace sslosr;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()),
           static_cast<std::streamsize>(b.size()));
}

// Big-endian IDX writer, the byte-level reference for the loader tests.
std::vector<unsigned char> idx_header(unsigned char type,
                                      const std::vector<std::uint32_t>& dims) {
  std::vector<unsigned char> b{0, 0, type,
                               static_cast<unsigned char>(dims.size())};
  for (auto d : dims) {
    b.push_back(static_cast<unsigned char>(d >> 24));
    b.push_back(static_cast<unsigned char>(d >> 16));
    b.push_back(static_cast<unsigned char>(d >> 8));
    b.push_back(static_cast<unsigned char>(d));
  }
  return b;
}

}  // namespace

TEST_CASE("cifar binary batch loads with scaled pixels and 1-based labels") {
  // Three 3073-byte records with known pixel patterns.
  std::vector<unsigned char> bytes;
  for (int rec = 0; rec < 3; ++rec) {
    bytes.push_back(static_cast<unsigned char>(rec * 4));  // labels 0, 4, 8
    for (int p = 0; p < 3072; ++p) {
      bytes.push_back(static_cast<unsigned char>((rec + p) % 256));
    }
  }
  const auto path = tmp_path("cifar_test.bin");
  write_bytes(path, bytes);

  Dataset ds = load_dataset(path, DataFormat::cifar_binary);
  REQUIRE(ds.n() == 3);
  REQUIRE(ds.shape == std::vector<std::size_t>{3, 32, 32});
  REQUIRE(ds.labels == std::vector<int>{1, 2, 3});  // remapped contiguous
  // Byte-level oracle: pixel j of record r is (r + j) % 256, scaled.
  for (int rec = 0; rec < 3; ++rec) {
    for (int j : {0, 1, 1000, 3071}) {
      const double expect = ((rec + j) % 256) / 127.5 - 1.0;
      REQUIRE(ds.samples(rec, j) == expect);
    }
  }
  REQUIRE(ds.samples.minCoeff() >= -1.0);
  REQUIRE(ds.samples.maxCoeff() <= 1.0);
}

TEST_CASE("cifar batch of 10000 records") {
  std::vector<unsigned char> bytes(10000 * 3073, 0);
  for (std::size_t r = 0; r < 10000; ++r) bytes[r * 3073] = r % 10;
  const auto path = tmp_path("cifar_10k.bin");
  write_bytes(path, bytes);
  Dataset ds = load_dataset(path, DataFormat::cifar_binary);
  REQUIRE(ds.n() == 10000);
  REQUIRE(ds.shape == std::vector<std::size_t>{3, 32, 32});
  REQUIRE(ds.k_total() == 10);
}

TEST_CASE("truncated cifar file names the offset") {
  std::vector<unsigned char> bytes(3073 + 100, 0);
  const auto path = tmp_path("cifar_cut.bin");
  write_bytes(path, bytes);
  try {
    load_dataset(path, DataFormat::cifar_binary);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    REQUIRE(std::string(e.what()).find("3073") != std::string::npos);
  }
}

TEST_CASE("idx single zero image with label file") {
  // One 28x28 zero image; spec example: every pixel scales to -1.0.
  auto img = idx_header(0x08, {1, 28, 28});
  img.resize(img.size() + 28 * 28, 0);
  const auto img_path = tmp_path("t10-images-idx3-ubyte");
  write_bytes(img_path, img);

  auto lab = idx_header(0x08, {1});
  lab.push_back(1);
  write_bytes(tmp_path("t10-labels-idx1-ubyte"), lab);

  Dataset ds = load_dataset(img_path, DataFormat::idx);
  REQUIRE(ds.n() == 1);
  REQUIRE(ds.shape == std::vector<std::size_t>{28, 28});
  REQUIRE(ds.labels == std::vector<int>{1});
  for (int j = 0; j < 28 * 28; ++j) REQUIRE(ds.samples(0, j) == -1.0);
}

TEST_CASE("idx without a companion labels file defaults to one category") {
  auto img = idx_header(0x08, {2, 2, 2});
  img.resize(img.size() + 8, 255);
  const auto path = tmp_path("lonely.idx");
  write_bytes(path, img);
  Dataset ds = load_dataset(path, DataFormat::idx);
  REQUIRE(ds.labels == std::vector<int>{1, 1});
  REQUIRE(ds.samples(0, 0) == 1.0);  // 255 scales to +1
}

TEST_CASE("idx bad magic and truncation") {
  write_bytes(tmp_path("bad.idx"), {9, 9, 8, 1});
  REQUIRE_THROWS_AS(load_dataset(tmp_path("bad.idx"), DataFormat::idx),
                    format_error);

  auto img = idx_header(0x08, {4, 10});
  img.resize(img.size() + 13);  // needs 40 payload bytes
  write_bytes(tmp_path("cut.idx"), img);
  REQUIRE_THROWS_AS(load_dataset(tmp_path("cut.idx"), DataFormat::idx),
                    format_error);
}

TEST_CASE("empty raw tensor gives an empty dataset without error") {
  const auto path = tmp_path("empty.sslt");
  write_raw_tensor(path, make_f64_tensor({0, 2}, {}));
  Dataset ds = load_dataset(path, DataFormat::raw_tensor);
  REQUIRE(ds.n() == 0);
  REQUIRE(ds.shape == std::vector<std::size_t>{2});
}

TEST_CASE("raw tensor with labels companion, float payload passes through") {
  const auto path = tmp_path("raw.sslt");
  write_raw_tensor(path, make_f64_tensor({3, 2}, {0.1, -0.2, 0.3, 0.4,
                                                  -0.5, 0.6}));
  write_raw_tensor(path + ".labels", make_i64_tensor({3}, {7, 3, 7}));
  Dataset ds = load_dataset(path, DataFormat::raw_tensor);
  REQUIRE(ds.n() == 3);
  REQUIRE(ds.labels == std::vector<int>{2, 1, 2});  // 3 -> 1, 7 -> 2
  REQUIRE(ds.samples(0, 0) == 0.1);                 // unscaled
  REQUIRE(ds.samples(2, 1) == 0.6);
}

TEST_CASE("raw tensor u8 payload is pixel-scaled") {
  const auto path = tmp_path("raw_u8.sslt");
  write_raw_tensor(path, make_u8_tensor({2, 2}, {0, 255, 51, 204}));
  Dataset ds = load_dataset(path, DataFormat::raw_tensor);
  REQUIRE(ds.samples(0, 0) == -1.0);
  REQUIRE(ds.samples(0, 1) == 1.0);
  REQUIRE_THAT(ds.samples(1, 0), Catch::Matchers::WithinAbs(-0.6, 1e-12));
}

TEST_CASE("reshape_like center-crops and nearest-neighbour resizes") {
  Dataset src;
  src.name = "src";
  src.shape = {1, 4, 4};
  src.samples.resize(1, 16);
  for (int i = 0; i < 16; ++i) src.samples(0, i) = i;
  src.labels = {1};
  src.category_names = {"class-1"};

  SECTION("downscale 4x4 -> 2x2") {
    Dataset out = reshape_like(src, {1, 2, 2});
    REQUIRE(out.samples.cols() == 4);
    // NN resize picks rows/cols 0 and 2
    REQUIRE(out.samples(0, 0) == 0);
    REQUIRE(out.samples(0, 1) == 2);
    REQUIRE(out.samples(0, 2) == 8);
    REQUIRE(out.samples(0, 3) == 10);
  }
  SECTION("1 -> 3 channels replicates") {
    Dataset out = reshape_like(src, {3, 4, 4});
    REQUIRE(out.samples.cols() == 48);
    REQUIRE(out.samples(0, 0) == out.samples(0, 16));
    REQUIRE(out.samples(0, 5) == out.samples(0, 37));
  }
  SECTION("3 -> 1 channels averages") {
    Dataset rgb;
    rgb.shape = {3, 1, 1};
    rgb.samples.resize(1, 3);
    rgb.samples << 0.0, 0.3, 0.9;
    rgb.labels = {1};
    Dataset out = reshape_like(rgb, {1, 1, 1});
    REQUIRE_THAT(out.samples(0, 0), Catch::Matchers::WithinAbs(0.4, 1e-12));
  }
  SECTION("non-image shape mismatch is an error") {
    Dataset vec;
    vec.shape = {2};
    vec.samples.resize(1, 2);
    vec.labels = {1};
    REQUIRE_THROWS_AS(reshape_like(vec, {3}), argument_error);
  }
}

TEST_CASE("dataset validation catches bad label ranges") {
  Dataset ds;
  ds.name = "bad";
  ds.shape = {2};
  ds.samples.resize(2, 2);
  ds.samples.setZero();
  ds.labels = {0, 1};
  REQUIRE_THROWS_AS(ds.validate(), argument_error);
  ds.labels = {1};
  REQUIRE_THROWS_AS(ds.validate(), argument_error);
}
