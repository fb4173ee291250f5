#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flowsr/checkpoint.hpp"
#include "flowsr/image_io.hpp"

using namespace flowsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("flowsr_test_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit-exact") {
  TempDir tmp;
  RngStream rng(21, 1);
  ParamStore<float> ps;
  ps.set("flow/layer00/phi/w0", Tensorf::randn(Shape{4, 3}, rng));
  ps.set("flow/layer00/phi/b0", Tensorf::randn(Shape{4}, rng));
  ps.set("ddpm/out/w", Tensorf::randn(Shape{2, 2, 3, 3}, rng));
  ps.set("__opt__/adam_t", Tensorf(Shape{1}, 17.0f));
  ps.set_version(42);

  CheckpointMeta meta;
  meta.meta["tool"] = "flowsr";
  meta.hyper["flow.layers"] = "8";
  meta.hyper["problem.scale"] = "4";

  std::string p1 = tmp.file("a.ckpt");
  save_checkpoint(p1, ps, meta);

  CheckpointMeta meta2;
  ParamStore<float> loaded = load_checkpoint<float>(p1, &meta2);
  CHECK(loaded.size() == ps.size());
  CHECK(loaded.version() == 42);
  CHECK(meta2.hyper.at("flow.layers") == "8");
  for (const auto& [path, t] : ps) {
    REQUIRE(loaded.has(path));
    const auto& lt = loaded.at(path);
    REQUIRE(lt.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(lt[i] == t[i]);
  }

  // save -> load -> save: byte-identical files
  std::string p2 = tmp.file("b.ckpt");
  save_checkpoint(p2, loaded, meta2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("checkpoint rejects unknown versions and corruption") {
  TempDir tmp;
  ParamStore<float> ps;
  ps.set("w", Tensorf(Shape{2}, {1.0f, 2.0f}));
  std::string p = tmp.file("c.ckpt");
  save_checkpoint(p, ps, CheckpointMeta{});

  // bump the version byte
  std::string bytes = slurp(p);
  bytes[8] = 9;
  {
    std::ofstream f(tmp.file("bad_version.ckpt"), std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.file("bad_version.ckpt")), Error);

  // wrong magic
  std::string bad = slurp(p);
  bad[0] = 'X';
  {
    std::ofstream f(tmp.file("bad_magic.ckpt"), std::ios::binary);
    f.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.file("bad_magic.ckpt")), Error);

  // truncated payload
  {
    std::ofstream f(tmp.file("short.ckpt"), std::ios::binary);
    f.write(slurp(p).data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.file("short.ckpt")), Error);

  // trailing garbage
  {
    std::ofstream f(tmp.file("long.ckpt"), std::ios::binary);
    std::string full = slurp(p) + "zz";
    f.write(full.data(), static_cast<std::streamsize>(full.size()));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(tmp.file("long.ckpt")), Error);

  // dtype mismatch: the f32 file cannot load as f64
  CHECK_THROWS_AS(load_checkpoint<double>(p), Error);
}

TEST_CASE("png roundtrip preserves pixels for gray and rgb") {
  TempDir tmp;
  RngStream rng(22, 1);
  for (int channels : {1, 3}) {
    Image8 im = Image8::make(channels, 9, 13);
    for (auto& px : im.pixels) px = static_cast<std::uint8_t>(rng.below(256));
    std::string p = tmp.file("img" + std::to_string(channels) + ".png");
    write_png(p, im);
    Image8 back = read_png(p);
    REQUIRE(back.channels == channels);
    REQUIRE(back.height == 9);
    REQUIRE(back.width == 13);
    CHECK(back.pixels == im.pixels);
  }
}

TEST_CASE("png read failure raises io error") {
  CHECK_THROWS_AS(read_png("/nonexistent/nowhere.png"), Error);
}
