#pragma once

#include "licaf/config.hpp"
#include "licaf/datagen.hpp"
#include "licaf/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace licaf {

template <class S>
struct SeqEmbedding {
  int subject_id = 0;
  std::string condition;
  std::string seq_path;
  Tensor<S> emb;  // [C, P]
};

/// Embeds full sequences one at a time in eval mode (no windowing).
template <class S>
std::vector<SeqEmbedding<S>> embed_sequences(LicafNet<S>& net, const std::string& root,
                                             const std::vector<ManifestEntry>& entries) {
  std::vector<SeqEmbedding<S>> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    LoadedSequence<S> seq = read_sequence<S>(root, e);
    const long h = seq.sils.dim(1), w = seq.sils.dim(2);
    Tensor<S> sils({1, 1, seq.sils.dim(0), h, w});
    std::copy(seq.sils.data(), seq.sils.data() + seq.sils.numel(), sils.data());
    Tensor<S> depths({1, 3, seq.depths.dim(0), h, w});
    // [T,3,H,W] -> [3,T,H,W]
    const long plane = h * w;
    for (long t = 0; t < seq.depths.dim(0); ++t)
      for (long ch = 0; ch < 3; ++ch)
        std::copy(seq.depths.data() + (t * 3 + ch) * plane, seq.depths.data() + (t * 3 + ch + 1) * plane,
                  depths.data() + (ch * seq.depths.dim(0) + t) * plane);
    Tensor<S> emb = net.forward(sils, depths, false);
    SeqEmbedding<S> se;
    se.subject_id = e.subject_id;
    se.condition = e.condition;
    se.seq_path = e.seq_path;
    se.emb = Tensor<S>({emb.dim(1), emb.dim(2)});
    std::copy(emb.data(), emb.data() + emb.numel(), se.emb.data());
    out.push_back(std::move(se));
  }
  return out;
}

/// Gallery: each subject's first normal-condition sequence, or its first
/// sequence if it has none. Probes: everything else.
inline std::pair<std::vector<size_t>, std::vector<size_t>> split_gallery_probe(
    const std::vector<ManifestEntry>& entries) {
  std::map<int, size_t> gallery_of;
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    auto it = gallery_of.find(e.subject_id);
    if (it == gallery_of.end()) {
      gallery_of[e.subject_id] = i;
    } else if (entries[it->second].condition != "normal" && e.condition == "normal") {
      it->second = i;
    }
  }
  std::vector<size_t> gallery, probes;
  for (const auto& [_, idx] : gallery_of) gallery.push_back(idx);
  std::sort(gallery.begin(), gallery.end());
  for (size_t i = 0; i < entries.size(); ++i)
    if (std::find(gallery.begin(), gallery.end(), i) == gallery.end()) probes.push_back(i);
  return {gallery, probes};
}

/// Mean over parts of the per-part Euclidean distance.
template <class S>
double embedding_distance(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("embedding_distance: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  const long c = a.dim(0), p = a.dim(1);
  double total = 0;
  for (long j = 0; j < p; ++j) {
    double s = 0;
    for (long i = 0; i < c; ++i) {
      const double d = static_cast<double>(a.at(i, j)) - static_cast<double>(b.at(i, j));
      s += d * d;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(p);
}

struct EvalBucket {
  long n = 0;
  long hit1 = 0;
  long hit5 = 0;
  double rank1() const { return n > 0 ? static_cast<double>(hit1) / n : 0.0; }
  double rank5() const { return n > 0 ? static_cast<double>(hit5) / n : 0.0; }
};

struct EvalReport {
  std::map<std::string, EvalBucket> by_condition;
  EvalBucket overall;
  long excluded = 0;  // probes whose subject has no gallery entry

  std::string human_table() const {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s %7s %8s %8s\n", "condition", "probes", "rank-1", "rank-5");
    out += buf;
    auto row = [&](const std::string& name, const EvalBucket& b) {
      std::snprintf(buf, sizeof(buf), "%-12s %7ld %7.1f%% %7.1f%%\n", name.c_str(), b.n, 100.0 * b.rank1(),
                    100.0 * b.rank5());
      out += buf;
    };
    for (const auto& [cond, b] : by_condition) row(cond, b);
    row("overall", overall);
    std::snprintf(buf, sizeof(buf), "excluded probes: %ld\n", excluded);
    out += buf;
    return out;
  }

  std::string csv() const {
    std::string out = "condition,probes,rank1,rank5\n";
    char buf[128];
    auto row = [&](const std::string& name, const EvalBucket& b) {
      std::snprintf(buf, sizeof(buf), "%s,%ld,%.12g,%.12g\n", name.c_str(), b.n, b.rank1(), b.rank5());
      out += buf;
    };
    for (const auto& [cond, b] : by_condition) row(cond, b);
    row("overall", overall);
    std::snprintf(buf, sizeof(buf), "excluded,%ld,,\n", excluded);
    out += buf;
    return out;
  }
};

/// Rank-1/rank-5 retrieval. Ties in distance break toward the lower gallery
/// index so the result is deterministic.
template <class S>
EvalReport evaluate_retrieval(const std::vector<SeqEmbedding<S>>& gallery, const std::vector<SeqEmbedding<S>>& probes) {
  if (gallery.empty()) throw std::invalid_argument("evaluate_retrieval: empty gallery");
  EvalReport rep;
  std::map<int, bool> in_gallery;
  for (const auto& g : gallery) in_gallery[g.subject_id] = true;
  for (const auto& probe : probes) {
    if (!in_gallery.count(probe.subject_id)) {
      ++rep.excluded;
      continue;
    }
    std::vector<std::pair<double, size_t>> order;
    order.reserve(gallery.size());
    for (size_t gi = 0; gi < gallery.size(); ++gi)
      order.emplace_back(embedding_distance(probe.emb, gallery[gi].emb), gi);
    std::sort(order.begin(), order.end());
    const size_t top = std::min<size_t>(5, order.size());
    bool h1 = gallery[order[0].second].subject_id == probe.subject_id;
    bool h5 = false;
    for (size_t r = 0; r < top && !h5; ++r) h5 = gallery[order[r].second].subject_id == probe.subject_id;
    EvalBucket& b = rep.by_condition[probe.condition];
    ++b.n;
    ++rep.overall.n;
    if (h1) {
      ++b.hit1;
      ++rep.overall.hit1;
    }
    if (h5) {
      ++b.hit5;
      ++rep.overall.hit5;
    }
  }
  return rep;
}

/// Rebuilds the network from the checkpoint's .cfg sibling, embeds every
/// manifest sequence, and scores gallery-vs-probe retrieval.
template <class S = float>
EvalReport evaluate_checkpoint(const std::string& checkpoint, const std::string& data_root,
                               const std::string& manifest_path = "") {
  Config cfg = Config::from_file(checkpoint + ".cfg");
  NetConfig nc = NetConfig::from(cfg);
  LicafNet<S> net(nc);
  net.load(checkpoint);
  const std::string mpath = manifest_path.empty() ? data_root + "/manifest.tsv" : manifest_path;
  auto manifest = read_manifest(mpath);
  if (manifest.empty()) throw std::runtime_error("evaluate_checkpoint: empty manifest " + mpath);
  auto [gal_idx, probe_idx] = split_gallery_probe(manifest);
  std::vector<ManifestEntry> gal_entries, probe_entries;
  for (size_t i : gal_idx) gal_entries.push_back(manifest[i]);
  for (size_t i : probe_idx) probe_entries.push_back(manifest[i]);
  auto gal = embed_sequences(net, data_root, gal_entries);
  auto probes = embed_sequences(net, data_root, probe_entries);
  return evaluate_retrieval(gal, probes);
}

}  // namespace licaf
