#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sslosr/tensor_io.hpp"

using namespace sslosr;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("raw tensor f64 round-trip is bit exact") {
  const auto path = tmp_path("t_f64.sslt");
  std::vector<double> data{1.0, -2.5, 3.14159265358979, 0.0, 1e-300, -1e300};
  write_raw_tensor(path, make_f64_tensor({2, 3}, data));
  RawTensor t = read_raw_tensor(path);
  REQUIRE(t.dtype == Dtype::f64);
  REQUIRE(t.dims == std::vector<std::uint64_t>{2, 3});
  REQUIRE(t.as_f64() == data);
}

TEST_CASE("raw tensor u8 and i64 round-trips") {
  const auto p8 = tmp_path("t_u8.sslt");
  write_raw_tensor(p8, make_u8_tensor({4}, {0, 127, 128, 255}));
  auto t8 = read_raw_tensor(p8);
  REQUIRE(t8.as_i64() == std::vector<std::int64_t>{0, 127, 128, 255});

  const auto p64 = tmp_path("t_i64.sslt");
  write_raw_tensor(p64, make_i64_tensor({3}, {-5, 0, 1234567890123}));
  auto t64 = read_raw_tensor(p64);
  REQUIRE(t64.as_i64() == std::vector<std::int64_t>{-5, 0, 1234567890123});
}

TEST_CASE("empty tensor is fine") {
  const auto path = tmp_path("t_empty.sslt");
  write_raw_tensor(path, make_f64_tensor({0, 2}, {}));
  auto t = read_raw_tensor(path);
  REQUIRE(t.count() == 0);
  REQUIRE(t.dims[0] == 0);
}

TEST_CASE("unknown magic is an unsupported-format error") {
  const auto path = tmp_path("t_magic.bin");
  std::ofstream os(path, std::ios::binary);
  os << "NOPE1234567890";
  os.close();
  REQUIRE_THROWS_AS(read_raw_tensor(path), format_error);
  REQUIRE_THROWS_WITH(read_raw_tensor(path),
                      Catch::Matchers::ContainsSubstring("magic"));
}

TEST_CASE("truncated tensor names the byte offset") {
  const auto full = tmp_path("t_full.sslt");
  std::vector<double> data(10, 1.5);
  write_raw_tensor(full, make_f64_tensor({10}, data));
  std::ifstream is(full, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  const auto cut = tmp_path("t_cut.sslt");
  std::ofstream os(cut, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 24));
  os.close();
  try {
    read_raw_tensor(cut);
    FAIL("expected format_error");
  } catch (const format_error& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("byte offset") != std::string::npos);
    // header is 4 + 4 + 4 + 8 = 20 bytes; payload cut at 80 - 24 = 56
    REQUIRE(msg.find(std::to_string(bytes.size() - 24)) != std::string::npos);
  }
}

TEST_CASE("array store round-trip with metadata") {
  const auto path = tmp_path("t_store.sslc");
  ArrayStore store;
  store.meta["note"] = "hello";
  Eigen::MatrixXd a(2, 2), b(1, 3);
  a << 1, 2, 3, 4;
  b << -1, 0.5, 9;
  store.arrays.emplace_back("a", a);
  store.arrays.emplace_back("nested/b", b);
  save_array_store(path, store);

  ArrayStore in = load_array_store(path);
  REQUIRE(in.meta.at("note") == "hello");
  REQUIRE(in.arrays.size() == 2);
  REQUIRE(in.arrays[0].first == "a");
  REQUIRE(in.at("a") == a);
  REQUIRE(in.at("nested/b") == b);
  REQUIRE(in.has("nested/b"));
  REQUIRE(!in.has("missing"));
}

TEST_CASE("corrupt store fails its checksum") {
  const auto path = tmp_path("t_corrupt.sslc");
  ArrayStore store;
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(3, 3, 7.0);
  store.arrays.emplace_back("a", a);
  save_array_store(path, store);

  // Flip one payload byte.
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(60);
  char c;
  f.seekg(60);
  f.get(c);
  f.seekp(60);
  f.put(static_cast<char>(c ^ 0x40));
  f.close();
  REQUIRE_THROWS_AS(load_array_store(path), integrity_error);
}
