#pragma once

#include "licaf/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Netpbm images. Silhouettes are binary P5 PGM with maxval 1, depth frames are
// P6 PPM with maxval 255. Loaders return the raw bytes; normalization to
// [0,1] happens at batch assembly (value / maxval).
// ---------------------------------------------------------------------------

struct PnmImage {
  int width = 0;
  int height = 0;
  int maxval = 0;
  int channels = 0;               // 1 for PGM, 3 for PPM
  std::vector<uint8_t> bytes;     // row-major, interleaved channels
};

namespace detail {

inline int pnm_next_int(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw std::runtime_error("pnm: truncated header in " + path);
  int v = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw std::runtime_error("pnm: bad header token in " + path);
  return v;
}

}  // namespace detail

inline void write_pnm(const std::string& path, const PnmImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pnm: cannot write " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n"
      << img.maxval << "\n";
  out.write(reinterpret_cast<const char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()));
  if (!out) throw std::runtime_error("pnm: short write to " + path);
}

inline PnmImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pnm: cannot open " + path);
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6'))
    throw std::runtime_error("pnm: " + path + " is not a binary PGM/PPM");
  PnmImage img;
  img.channels = (kind == '6') ? 3 : 1;
  img.width = detail::pnm_next_int(in, path);
  img.height = detail::pnm_next_int(in, path);
  img.maxval = detail::pnm_next_int(in, path);
  if (img.maxval <= 0 || img.maxval > 255)
    throw std::runtime_error("pnm: unsupported maxval in " + path);
  size_t n = static_cast<size_t>(img.width) * img.height * img.channels;
  img.bytes.resize(n);
  in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw std::runtime_error("pnm: truncated pixel data in " + path);
  return img;
}

// ---------------------------------------------------------------------------
// Checkpoint container: a flat map from parameter name to array. Binary
// layout (all integers little-endian):
//   magic "LCAF", u32 version, u32 entry count, then per entry:
//   u32 name_len, name bytes, u8 dtype (4 = f32, 8 = f64), u8 ndim,
//   u32 dims[ndim], raw element bytes.
// Entries are written in name order, so identical parameter maps produce
// byte-identical files.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor<S>>& arrays) {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8, "f32/f64 only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write("LCAF", 4);
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    detail::put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(sizeof(S)));
    out.put(static_cast<char>(t.ndim()));
    for (int a = 0; a < t.ndim(); ++a) detail::put_u32(out, static_cast<uint32_t>(t.dim(a)));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(S)));
  }
  if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

/// Loads a checkpoint, converting element type to S if the stored dtype
/// differs.
template <class S>
std::map<std::string, Tensor<S>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "LCAF", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = detail::get_u32(in, path);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version in " + path);
  uint32_t count = detail::get_u32(in, path);
  std::map<std::string, Tensor<S>> arrays;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = detail::get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    int dtype = in.get();
    int ndim = in.get();
    if (!in || (dtype != 4 && dtype != 8) || ndim < 0 || ndim > 8)
      throw std::runtime_error("checkpoint: corrupt entry header in " + path);
    std::vector<long> dims(static_cast<size_t>(ndim));
    for (auto& d : dims) d = static_cast<long>(detail::get_u32(in, path));
    Tensor<S> t(dims);
    if (dtype == static_cast<int>(sizeof(S))) {
      in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(S)));
    } else if (dtype == 4) {
      std::vector<float> tmp(static_cast<size_t>(t.numel()));
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 4));
      for (long j = 0; j < t.numel(); ++j) t[j] = static_cast<S>(tmp[static_cast<size_t>(j)]);
    } else {
      std::vector<double> tmp(static_cast<size_t>(t.numel()));
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 8));
      for (long j = 0; j < t.numel(); ++j) t[j] = static_cast<S>(tmp[static_cast<size_t>(j)]);
    }
    if (!in) throw std::runtime_error("checkpoint: truncated data in " + path);
    arrays.emplace(std::move(name), std::move(t));
  }
  return arrays;
}

// ---------------------------------------------------------------------------
// Dataset manifest: one tab-separated row per sequence,
//   subject_id <TAB> seq_path <TAB> condition <TAB> T_L <TAB> T_C
// seq_path is relative to the dataset root.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  int subject_id = 0;
  std::string seq_path;
  std::string condition;
  int t_l = 0;
  int t_c = 0;
};

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  for (const auto& e : entries)
    out << e.subject_id << "\t" << e.seq_path << "\t" << e.condition << "\t" << e.t_l << "\t" << e.t_c << "\n";
  if (!out) throw std::runtime_error("manifest: short write to " + path);
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string sid, tl, tc;
    if (!std::getline(ss, sid, '\t') || !std::getline(ss, e.seq_path, '\t') ||
        !std::getline(ss, e.condition, '\t') || !std::getline(ss, tl, '\t') || !std::getline(ss, tc))
      throw std::runtime_error("manifest: malformed line " + std::to_string(lineno) + " in " + path);
    e.subject_id = std::stoi(sid);
    e.t_l = std::stoi(tl);
    e.t_c = std::stoi(tc);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace licaf
