#pragma once

#include "licaf/io.hpp"
#include "licaf/rng.hpp"
#include "licaf/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace licaf {

// ---------------------------------------------------------------------------
// Subject templates. limb_lengths are unitless body proportions
// [torso, thigh, shin, upper arm, forearm, head radius]; pairwise L2 distance
// between subjects is kept >= 0.05 so identities stay separable.
// ---------------------------------------------------------------------------

struct SubjectTemplate {
  int subject_id = 0;
  std::array<double, 6> limb_lengths{};
  double gait_frequency = 0.1;  // cycles per silhouette frame
  double phase_offset = 0.0;    // radians
  double body_width = 0.08;     // torso half-width as a height fraction
};

inline constexpr double kMinLimbDistance = 0.05;

namespace detail {

inline SubjectTemplate sample_template(Rng& rng, int subject_id) {
  static constexpr std::array<double, 6> base = {0.30, 0.23, 0.21, 0.15, 0.13, 0.075};
  SubjectTemplate t;
  t.subject_id = subject_id;
  for (size_t i = 0; i < base.size(); ++i) t.limb_lengths[i] = base[i] * rng.uniform(0.8, 1.2);
  t.gait_frequency = rng.uniform(0.02, 0.2);
  t.phase_offset = rng.uniform(0.0, 2.0 * M_PI);
  t.body_width = rng.uniform(0.06, 0.12);
  return t;
}

inline double limb_distance(const SubjectTemplate& a, const SubjectTemplate& b) {
  double s = 0;
  for (size_t i = 0; i < a.limb_lengths.size(); ++i) {
    const double d = a.limb_lengths[i] - b.limb_lengths[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Deterministic template stream for ids 0..count-1; each template is
/// resampled until it is at least kMinLimbDistance away from all earlier ones.
inline std::vector<SubjectTemplate> generate_subjects(uint64_t seed, int count) {
  Rng rng(seed, 0x735562u);
  std::vector<SubjectTemplate> out;
  out.reserve(static_cast<size_t>(count));
  for (int id = 0; id < count; ++id) {
    SubjectTemplate t;
    for (;;) {
      t = detail::sample_template(rng, id);
      bool ok = true;
      for (const auto& prev : out)
        if (detail::limb_distance(t, prev) < kMinLimbDistance) {
          ok = false;
          break;
        }
      if (ok) break;
    }
    out.push_back(t);
  }
  return out;
}

inline SubjectTemplate generate_subject(uint64_t seed, int subject_id) {
  return generate_subjects(seed, subject_id + 1).back();
}

// ---------------------------------------------------------------------------
// Point cloud projection: pinhole model with a z-buffer. Depth is min-max
// normalized over the frame's projectable points and encoded bright-is-near:
// round(255 * (1 - d)) on all three channels; empty pixels stay 0.
// ---------------------------------------------------------------------------

struct PointCloudFrame {
  std::vector<std::array<double, 3>> points;  // (x, y, z) sensor-centered, z forward
};

inline Tensor<uint8_t> project_pointcloud_to_depth(const PointCloudFrame& frame, int width, int height,
                                                   double focal) {
  if (focal <= 0) throw std::invalid_argument("project_pointcloud_to_depth: focal must be positive");
  double zmin = 0, zmax = 0;
  bool any = false;
  for (const auto& pt : frame.points) {
    if (pt[2] <= 0) continue;
    if (!any) {
      zmin = zmax = pt[2];
      any = true;
    } else {
      zmin = std::min(zmin, pt[2]);
      zmax = std::max(zmax, pt[2]);
    }
  }
  if (!any) throw std::runtime_error("project_pointcloud_to_depth: no projectable points");
  std::vector<double> zbuf(static_cast<size_t>(width) * height, std::numeric_limits<double>::infinity());
  for (const auto& pt : frame.points) {
    if (pt[2] <= 0) continue;
    const long u = static_cast<long>(std::floor(focal * pt[0] / pt[2] + width / 2.0));
    const long v = static_cast<long>(std::floor(focal * pt[1] / pt[2] + height / 2.0));
    if (u < 0 || u >= width || v < 0 || v >= height) continue;
    double& z = zbuf[static_cast<size_t>(v) * width + u];
    if (pt[2] < z) z = pt[2];
  }
  Tensor<uint8_t> img({3, height, width});
  const double span = zmax - zmin;
  for (long v = 0; v < height; ++v)
    for (long u = 0; u < width; ++u) {
      const double z = zbuf[static_cast<size_t>(v) * width + u];
      if (!std::isfinite(z)) continue;
      const double d = span > 0 ? (z - zmin) / span : 0.0;
      const auto val = static_cast<uint8_t>(std::lround(255.0 * (1.0 - d)));
      img.at(0L, v, u) = val;
      img.at(1L, v, u) = val;
      img.at(2L, v, u) = val;
    }
  return img;
}

// ---------------------------------------------------------------------------
// Articulated 2-D figure renderer. Pixel coordinates: x right, y down; the
// hip is pinned so the figure never leaves the canvas.
// ---------------------------------------------------------------------------

namespace detail {

struct Pt {
  double x, y;
};

inline void draw_capsule(Tensor<uint8_t>& mask, Pt a, Pt b, double r) {
  const long h = mask.dim(0), w = mask.dim(1);
  const long x0 = std::max(0L, static_cast<long>(std::floor(std::min(a.x, b.x) - r)));
  const long x1 = std::min(w - 1, static_cast<long>(std::ceil(std::max(a.x, b.x) + r)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(std::min(a.y, b.y) - r)));
  const long y1 = std::min(h - 1, static_cast<long>(std::ceil(std::max(a.y, b.y) + r)));
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const double px = x - a.x, py = y - a.y;
      double t = len2 > 0 ? (px * dx + py * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double qx = px - t * dx, qy = py - t * dy;
      if (qx * qx + qy * qy <= r * r) mask.at(y, x) = 1;
    }
}

struct Skeleton {
  // Segments as (endpoint pair, radius); the head is a degenerate segment.
  struct Limb {
    Pt a, b;
    double r;
    double z_offset;  // depth offset in meters for the pseudo-LiDAR cloud
  };
  std::vector<Limb> limbs;
};

/// Joint positions at gait angle theta, in pixels for an hw x hw canvas.
inline Skeleton pose_skeleton(const SubjectTemplate& tpl, double theta, int hw) {
  const double s = 0.72 * hw;
  const double cx = hw / 2.0;
  const double hip_y = 0.59 * hw;
  const auto& L = tpl.limb_lengths;
  Skeleton sk;
  const Pt hip{cx, hip_y};
  const Pt neck{cx, hip_y - L[0] * s};
  sk.limbs.push_back({hip, neck, tpl.body_width * s, 0.0});
  const Pt head_c{cx, neck.y - L[5] * s};
  sk.limbs.push_back({head_c, head_c, L[5] * s, 0.02});
  for (int side = 0; side < 2; ++side) {
    const double zoff = side == 0 ? 0.10 : -0.10;
    const double phase = theta + (side == 0 ? 0.0 : M_PI);
    // Leg: thigh swings about the hip, the shin adds a smooth knee bend.
    const double swing = 0.5 * std::sin(phase);
    const double bend = 0.45 * (1.0 - std::cos(phase)) / 2.0;
    const Pt knee{hip.x + L[1] * s * std::sin(swing), hip.y + L[1] * s * std::cos(swing)};
    const double shin_ang = swing - bend;
    const Pt foot{knee.x + L[2] * s * std::sin(shin_ang), knee.y + L[2] * s * std::cos(shin_ang)};
    sk.limbs.push_back({hip, knee, 1.4, zoff});
    sk.limbs.push_back({knee, foot, 1.4, zoff});
    // Arm: counter-swings relative to the same-side leg.
    const double aswing = 0.35 * std::sin(phase + M_PI);
    const Pt elbow{neck.x + L[3] * s * std::sin(aswing), neck.y + L[3] * s * std::cos(aswing)};
    const double fore_ang = aswing + 0.25;
    const Pt wrist{elbow.x + L[4] * s * std::sin(fore_ang), elbow.y + L[4] * s * std::cos(fore_ang)};
    sk.limbs.push_back({neck, elbow, 1.4, zoff});
    sk.limbs.push_back({elbow, wrist, 1.4, zoff});
  }
  return sk;
}

/// Fixed blob attached at the hip for the carrying condition.
inline Skeleton::Limb bag_limb(int hw) {
  const double cx = hw / 2.0;
  const double hip_y = 0.59 * hw;
  const Pt c{cx + 0.16 * hw, hip_y + 0.03 * hw};
  return {c, c, 0.07 * hw, 0.15};
}

inline constexpr double kSceneZ = 3.0;

/// Converts the posed skeleton into a sensor-centered cloud: pixel offsets
/// become meters at range kSceneZ (plus per-limb offsets), densified with
/// small perpendicular side lines so projected limbs are more than 1px wide.
inline PointCloudFrame skeleton_to_cloud(const Skeleton& sk, int hw, double focal) {
  const double ppm = focal / kSceneZ;
  const double cx = hw / 2.0, cy = hw / 2.0;
  PointCloudFrame cloud;
  for (const auto& limb : sk.limbs) {
    const double len = std::hypot(limb.b.x - limb.a.x, limb.b.y - limb.a.y);
    const double z = kSceneZ + limb.z_offset;
    if (len < 1e-9) {
      // Disc: concentric rings.
      for (double rr : {limb.r, limb.r * 0.6, limb.r * 0.25}) {
        for (int i = 0; i < 18; ++i) {
          const double ang = 2.0 * M_PI * i / 18;
          const double px = limb.a.x + rr * std::cos(ang), py = limb.a.y + rr * std::sin(ang);
          cloud.points.push_back({(px - cx) / ppm * (z / kSceneZ), (py - cy) / ppm * (z / kSceneZ), z});
        }
      }
      cloud.points.push_back({(limb.a.x - cx) / ppm * (z / kSceneZ), (limb.a.y - cy) / ppm * (z / kSceneZ), z});
      continue;
    }
    const int nsamp = std::max(2, static_cast<int>(std::ceil(2.0 * len)));
    const double nx = -(limb.b.y - limb.a.y) / len, ny = (limb.b.x - limb.a.x) / len;
    for (int i = 0; i <= nsamp; ++i) {
      const double t = static_cast<double>(i) / nsamp;
      const double px = limb.a.x + t * (limb.b.x - limb.a.x);
      const double py = limb.a.y + t * (limb.b.y - limb.a.y);
      for (double off : {-1.0, 0.0, 1.0}) {
        const double qx = px + off * nx, qy = py + off * ny;
        // Invert the pinhole map so the point projects back to (qx, qy).
        cloud.points.push_back({(qx - cx) / ppm * (z / kSceneZ), (qy - cy) / ppm * (z / kSceneZ), z});
      }
    }
  }
  return cloud;
}

inline const std::vector<std::string> kValidConditions = {"normal", "bag", "carrying", "occlusion", "night"};

inline void check_condition(const std::string& condition) {
  for (const auto& c : kValidConditions)
    if (condition == c) return;
  std::string valid;
  for (const auto& c : kValidConditions) valid += (valid.empty() ? "" : ", ") + c;
  throw std::invalid_argument("unknown condition '" + condition + "' (valid: " + valid + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One rendered two-modality sequence, raw 8-bit.
// ---------------------------------------------------------------------------

struct ModalSequencePair {
  Tensor<uint8_t> silhouettes;  // [T_C, H, W], values {0, 1}
  Tensor<uint8_t> depths;       // [T_L, 3, H, W]
  int subject_id = 0;
  std::string condition;

  long t_c() const { return silhouettes.dim(0); }
  long t_l() const { return depths.dim(0); }
};

inline constexpr int kOcclusionBandLo = 28;
inline constexpr int kOcclusionBandHi = 40;

/// Renders T_C = 3*T_L silhouettes and T_L depth frames (every 3rd phase).
/// start_phase is in gait cycles; rng_seed drives noise-type conditions only.
inline ModalSequencePair render_sequence(const SubjectTemplate& tpl, const std::string& condition, int t_l,
                                         double start_phase, uint64_t rng_seed, int hw = 64) {
  detail::check_condition(condition);
  if (t_l < 1) throw std::invalid_argument("render_sequence: T_L must be >= 1");
  const int t_c = 3 * t_l;
  const double focal = 2.0 * hw;
  const bool bag = condition == "bag" || condition == "carrying";
  const bool occl = condition == "occlusion";
  const bool night = condition == "night";
  ModalSequencePair out;
  out.subject_id = tpl.subject_id;
  out.condition = condition;
  out.silhouettes = Tensor<uint8_t>({t_c, hw, hw});
  out.depths = Tensor<uint8_t>({t_l, 3, hw, hw});
  Rng noise(rng_seed, 0x4e4f49u);
  for (int t = 0; t < t_c; ++t) {
    const double theta = tpl.phase_offset + 2.0 * M_PI * (start_phase + t * tpl.gait_frequency);
    detail::Skeleton sk = detail::pose_skeleton(tpl, theta, hw);
    if (bag) sk.limbs.push_back(detail::bag_limb(hw));
    Tensor<uint8_t> frame({hw, hw});
    for (const auto& limb : sk.limbs) detail::draw_capsule(frame, limb.a, limb.b, limb.r);
    if (night)
      for (long i = 0; i < frame.numel(); ++i)
        if (noise.uniform() < 0.03) frame[i] ^= 1;
    if (occl)
      for (int y = kOcclusionBandLo; y < kOcclusionBandHi && y < hw; ++y)
        for (int x = 0; x < hw; ++x) frame.at(y, x) = 0;
    bool fg = false;
    for (long i = 0; i < frame.numel() && !fg; ++i) fg = frame[i] != 0;
    if (!fg) frame.at(hw / 2, hw / 2) = 1;  // keep the >=1 foreground pixel guarantee
    std::copy(frame.data(), frame.data() + frame.numel(), out.silhouettes.data() + t * hw * hw);
    if (t % 3 == 0) {
      PointCloudFrame cloud = detail::skeleton_to_cloud(sk, hw, focal);
      Tensor<uint8_t> depth = project_pointcloud_to_depth(cloud, hw, hw, focal);
      if (occl)
        for (int ch = 0; ch < 3; ++ch)
          for (int y = kOcclusionBandLo; y < kOcclusionBandHi && y < hw; ++y)
            for (int x = 0; x < hw; ++x) depth.at(ch, y, x) = 0;
      std::copy(depth.data(), depth.data() + depth.numel(), out.depths.data() + (t / 3) * 3 * hw * hw);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset persistence. Layout:
//   root/<subject %03d>/<seq>-<condition>/sils/NNN.pgm   (P5, maxval 1)
//   root/<subject %03d>/<seq>-<condition>/depth/NNN.ppm  (P6, maxval 255)
// plus root/manifest.tsv.
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string root;
  int num_subjects = 8;
  int seqs_per_subject = 4;
  std::vector<std::string> conditions = {"normal", "bag", "occlusion", "night"};
  int t_l = 7;
  int hw = 64;
  uint64_t seed = 0;
};

namespace detail {

inline std::string zero3(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", v);
  return buf;
}

}  // namespace detail

inline void write_sequence_dir(const std::string& dir, const ModalSequencePair& seq) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir + "/sils", ec);
  fs::create_directories(dir + "/depth", ec);
  if (ec) throw std::runtime_error("write_dataset: cannot create " + dir + ": " + ec.message());
  const int hw = static_cast<int>(seq.silhouettes.dim(1));
  for (long t = 0; t < seq.t_c(); ++t) {
    PnmImage img;
    img.width = hw;
    img.height = hw;
    img.maxval = 1;
    img.channels = 1;
    img.bytes.assign(seq.silhouettes.data() + t * hw * hw, seq.silhouettes.data() + (t + 1) * hw * hw);
    write_pnm(dir + "/sils/" + detail::zero3(static_cast<int>(t)) + ".pgm", img);
  }
  for (long t = 0; t < seq.t_l(); ++t) {
    PnmImage img;
    img.width = hw;
    img.height = hw;
    img.maxval = 255;
    img.channels = 3;
    img.bytes.resize(static_cast<size_t>(hw) * hw * 3);
    // planar [3, H, W] -> interleaved rows
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x)
        for (int ch = 0; ch < 3; ++ch)
          img.bytes[(static_cast<size_t>(y) * hw + x) * 3 + ch] = seq.depths.at(t, static_cast<long>(ch), y, x);
    write_pnm(dir + "/depth/" + detail::zero3(static_cast<int>(t)) + ".ppm", img);
  }
}

inline std::vector<ManifestEntry> write_dataset(const DatasetSpec& spec) {
  for (const auto& c : spec.conditions) detail::check_condition(c);
  auto subjects = generate_subjects(spec.seed, spec.num_subjects);
  std::vector<ManifestEntry> entries;
  for (int sid = 0; sid < spec.num_subjects; ++sid) {
    for (int j = 0; j < spec.seqs_per_subject; ++j) {
      const std::string& cond = spec.conditions[static_cast<size_t>(j) % spec.conditions.size()];
      const uint64_t mix = splitmix64(spec.seed ^ splitmix64((static_cast<uint64_t>(sid) << 20) | j));
      Rng phase_rng(mix, 0x504853u);
      ModalSequencePair seq =
          render_sequence(subjects[static_cast<size_t>(sid)], cond, spec.t_l, phase_rng.uniform(), mix, spec.hw);
      const std::string rel = detail::zero3(sid) + "/" + std::to_string(j) + "-" + cond;
      write_sequence_dir(spec.root + "/" + rel, seq);
      ManifestEntry e;
      e.subject_id = sid;
      e.seq_path = rel;
      e.condition = cond;
      e.t_l = spec.t_l;
      e.t_c = 3 * spec.t_l;
      entries.push_back(std::move(e));
    }
  }
  write_manifest(spec.root + "/manifest.tsv", entries);
  return entries;
}

// ---------------------------------------------------------------------------
// Loading. Pixel values are normalized to [0, 1] (value / maxval) here, never
// at write time, so files round-trip bit-exactly.
// ---------------------------------------------------------------------------

template <class S>
struct LoadedSequence {
  Tensor<S> sils;    // [T_C, H, W]
  Tensor<S> depths;  // [T_L, 3, H, W]
};

template <class S>
LoadedSequence<S> read_sequence(const std::string& root, const ManifestEntry& e) {
  LoadedSequence<S> seq;
  for (int t = 0; t < e.t_c; ++t) {
    PnmImage img = read_pnm(root + "/" + e.seq_path + "/sils/" + detail::zero3(t) + ".pgm");
    if (t == 0) seq.sils = Tensor<S>({e.t_c, img.height, img.width});
    const S inv = S(1) / static_cast<S>(img.maxval);
    S* dst = seq.sils.data() + static_cast<long>(t) * img.height * img.width;
    for (size_t i = 0; i < img.bytes.size(); ++i) dst[i] = static_cast<S>(img.bytes[i]) * inv;
  }
  for (int t = 0; t < e.t_l; ++t) {
    PnmImage img = read_pnm(root + "/" + e.seq_path + "/depth/" + detail::zero3(t) + ".ppm");
    if (t == 0) seq.depths = Tensor<S>({e.t_l, 3, img.height, img.width});
    const S inv = S(1) / static_cast<S>(img.maxval);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int ch = 0; ch < 3; ++ch)
          seq.depths.at(static_cast<long>(t), static_cast<long>(ch), static_cast<long>(y), static_cast<long>(x)) =
              static_cast<S>(img.bytes[(static_cast<size_t>(y) * img.width + x) * 3 + ch]) * inv;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Batch-all sampling: p distinct subjects, k sequences each (with replacement
// only when a subject has fewer than k sequences), one temporally aligned
// window per pick. Short sequences loop cyclically; the silhouette window
// always starts at 3x the depth window start.
// ---------------------------------------------------------------------------

template <class S>
struct ModalBatch {
  Tensor<S> silhouettes;  // [N, 1, 3*t_l, H, W]
  Tensor<S> depths;       // [N, 3, t_l, H, W]
  std::vector<int> labels;
};

template <class S>
ModalBatch<S> sample_batch(const std::string& root, const std::vector<ManifestEntry>& manifest, long p, long k,
                           long t_l, Rng& rng) {
  std::map<int, std::vector<const ManifestEntry*>> by_subject;
  for (const auto& e : manifest) by_subject[e.subject_id].push_back(&e);
  if (static_cast<long>(by_subject.size()) < p)
    throw std::invalid_argument("sample_batch: need " + std::to_string(p) + " subjects, manifest has " +
                                std::to_string(by_subject.size()));
  std::vector<int> ids;
  ids.reserve(by_subject.size());
  for (const auto& [id, _] : by_subject) ids.push_back(id);
  rng.shuffle(ids);
  ids.resize(static_cast<size_t>(p));

  std::map<std::string, LoadedSequence<S>> cache;
  const long n = p * k;
  const long t_c = 3 * t_l;
  ModalBatch<S> batch;
  batch.labels.reserve(static_cast<size_t>(n));
  long row = 0;
  for (int sid : ids) {
    const auto& seqs = by_subject[sid];
    std::vector<long> picks;
    if (static_cast<long>(seqs.size()) >= k) {
      std::vector<long> idx(seqs.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<long>(i);
      rng.shuffle(idx);
      picks.assign(idx.begin(), idx.begin() + k);
    } else {
      for (long i = 0; i < k; ++i) picks.push_back(rng.uniform_int(static_cast<long>(seqs.size())));
    }
    for (long pick : picks) {
      const ManifestEntry& e = *seqs[static_cast<size_t>(pick)];
      auto it = cache.find(e.seq_path);
      if (it == cache.end()) it = cache.emplace(e.seq_path, read_sequence<S>(root, e)).first;
      const LoadedSequence<S>& seq = it->second;
      const long t_seq = e.t_l;
      long start;
      bool wrap;
      if (t_seq >= t_l) {
        start = rng.uniform_int(t_seq - t_l + 1);
        wrap = false;
      } else {
        start = rng.uniform_int(t_seq);
        wrap = true;
      }
      const long hw_h = seq.sils.dim(1), hw_w = seq.sils.dim(2);
      if (batch.silhouettes.empty()) {
        batch.silhouettes = Tensor<S>({n, 1, t_c, hw_h, hw_w});
        batch.depths = Tensor<S>({n, 3, t_l, hw_h, hw_w});
      }
      const long plane = hw_h * hw_w;
      for (long j = 0; j < t_c; ++j) {
        const long src_t = wrap ? (3 * start + j) % (3 * t_seq) : 3 * start + j;
        std::copy(seq.sils.data() + src_t * plane, seq.sils.data() + (src_t + 1) * plane,
                  batch.silhouettes.data() + (row * t_c + j) * plane);
      }
      for (long i = 0; i < t_l; ++i) {
        const long src_t = wrap ? (start + i) % t_seq : start + i;
        for (long ch = 0; ch < 3; ++ch)
          std::copy(seq.depths.data() + (src_t * 3 + ch) * plane, seq.depths.data() + (src_t * 3 + ch + 1) * plane,
                    batch.depths.data() + ((row * 3 + ch) * t_l + i) * plane);
      }
      batch.labels.push_back(sid);
      ++row;
    }
  }
  return batch;
}

}  // namespace licaf
