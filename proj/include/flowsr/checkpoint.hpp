#pragma once

// Self-describing checkpoint container. Layout (all integers little-endian,
// strings are u32 length + raw bytes; full byte map in docs/formats.md):
//
//   magic   "FSRCKPT\n" (8 bytes)
//   u32     format version (currently 1)
//   u32     metadata entry count, then key/value string pairs
//   u32     hyperparameter entry count, then key/value string pairs
//   u64     parameter store version tag
//   u32     parameter count
//   per parameter, sorted by path:
//     string path, u8 dtype (0 = f32, 1 = f64), u32 ndim, i64 dims[ndim],
//     payload (numel * dtype size, little-endian)
//
// Loaders reject unknown magic, versions, dtypes, truncated files and
// trailing bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "flowsr/params.hpp"

namespace flowsr {

inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'R', 'C', 'K', 'P', 'T', '\n'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::map<std::string, std::string> meta;   // creation metadata
  std::map<std::string, std::string> hyper;  // hyperparameter map
};

namespace ckpt_detail {

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

inline void wr_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void wr_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  wr_bytes(os, b, 4);
}

inline void wr_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  wr_bytes(os, b, 8);
}

inline void wr_str(std::ostream& os, const std::string& s) {
  wr_u32(os, static_cast<std::uint32_t>(s.size()));
  wr_bytes(os, s.data(), s.size());
}

inline void rd_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    fail_io(std::string("checkpoint truncated while reading ") + what);
}

inline std::uint32_t rd_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  rd_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t rd_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  rd_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline std::string rd_str(std::istream& is, const char* what) {
  std::uint32_t n = rd_u32(is, what);
  if (n > (1u << 20)) fail_io("checkpoint string length implausible");
  std::string s(n, '\0');
  if (n) rd_bytes(is, s.data(), n, what);
  return s;
}

template <class T>
constexpr std::uint8_t dtype_tag() {
  if constexpr (sizeof(T) == 4) return 0;
  else return 1;
}

template <class T>
void wr_payload(std::ostream& os, const Tensor<T>& t) {
  if constexpr (std::endian::native == std::endian::little) {
    wr_bytes(os, t.data(), t.numel() * sizeof(T));
  } else {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      T v = t[i];
      unsigned char b[sizeof(T)];
      std::memcpy(b, &v, sizeof(T));
      for (std::size_t j = sizeof(T); j-- > 0;) os.put(static_cast<char>(b[j]));
    }
  }
}

template <class T>
void rd_payload(std::istream& is, Tensor<T>& t) {
  if constexpr (std::endian::native == std::endian::little) {
    rd_bytes(is, t.data(), t.numel() * sizeof(T), "tensor payload");
  } else {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      unsigned char b[sizeof(T)];
      for (std::size_t j = sizeof(T); j-- > 0;) {
        int c = is.get();
        if (c == EOF) fail_io("checkpoint truncated while reading tensor payload");
        b[j] = static_cast<unsigned char>(c);
      }
      std::memcpy(&t[i], b, sizeof(T));
    }
  }
}

inline void wr_kv(std::ostream& os, const std::map<std::string, std::string>& kv) {
  wr_u32(os, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    wr_str(os, k);
    wr_str(os, v);
  }
}

inline std::map<std::string, std::string> rd_kv(std::istream& is, const char* what) {
  std::map<std::string, std::string> kv;
  std::uint32_t n = rd_u32(is, what);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = rd_str(is, what);
    kv[k] = rd_str(is, what);
  }
  return kv;
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params,
                     const CheckpointMeta& meta) {
  namespace d = ckpt_detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) fail_io("cannot open checkpoint for writing: " + path);
  d::wr_bytes(os, kCheckpointMagic, 8);
  d::wr_u32(os, kCheckpointVersion);
  d::wr_kv(os, meta.meta);
  d::wr_kv(os, meta.hyper);
  d::wr_u64(os, params.version());
  d::wr_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [p, t] : params) {
    d::wr_str(os, p);
    os.put(static_cast<char>(d::dtype_tag<T>()));
    d::wr_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int dim : t.shape()) d::wr_u64(os, static_cast<std::uint64_t>(dim));
    d::wr_payload(os, t);
  }
  if (!os) fail_io("write failed for checkpoint: " + path);
}

template <class T>
ParamStore<T> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr) {
  namespace d = ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_io("cannot open checkpoint: " + path);
  char magic[8];
  d::rd_bytes(is, magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    fail_io("not a checkpoint file (bad magic): " + path);
  std::uint32_t version = d::rd_u32(is, "version");
  if (version != kCheckpointVersion)
    fail_io("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  CheckpointMeta meta;
  meta.meta = d::rd_kv(is, "metadata");
  meta.hyper = d::rd_kv(is, "hyperparameters");
  ParamStore<T> params;
  params.set_version(d::rd_u64(is, "store version"));
  std::uint32_t count = d::rd_u32(is, "parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string p = d::rd_str(is, "parameter path");
    int tag = is.get();
    if (tag == EOF) fail_io("checkpoint truncated at dtype tag");
    if (tag != 0 && tag != 1)
      fail_io("unknown dtype tag " + std::to_string(tag) + " for " + p);
    if (tag != d::dtype_tag<T>())
      fail_io("checkpoint dtype mismatch for " + p + " (file has " +
              (tag == 0 ? "f32" : "f64") + ")");
    std::uint32_t ndim = d::rd_u32(is, "ndim");
    if (ndim > 8) fail_io("checkpoint rank implausible for " + p);
    Shape shape(ndim);
    for (auto& dim : shape) {
      std::uint64_t v = d::rd_u64(is, "dim");
      if (v == 0 || v > (1ull << 31)) fail_io("checkpoint dim implausible for " + p);
      dim = static_cast<int>(v);
    }
    Tensor<T> t(shape);
    d::rd_payload(is, t);
    params.set(p, std::move(t));
  }
  if (is.peek() != EOF) fail_io("trailing bytes after checkpoint payload: " + path);
  if (meta_out) *meta_out = std::move(meta);
  return params;
}

}  // namespace flowsr
