// Fusion head, both loss terms, the assembled network, and the optimizer /
// learning-rate schedule, checked against loop oracles and hand-worked cases.
#include "licaf/network.hpp"
#include "licaf/optim.hpp"
#include "licaf/rng.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>

using namespace licaf;

namespace {

void fill_normal(Tensor<double>& t, Rng& rng, double stdev = 1.0) {
  for (long i = 0; i < t.numel(); ++i) t[i] = stdev * rng.normal();
}

void fill_normal_f(Tensor<float>& t, Rng& rng, double stdev = 1.0) {
  for (long i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(stdev * rng.normal());
}

std::map<std::string, Tensor<double>*> param_map(std::vector<nn::ParamRef<double>>& params) {
  std::map<std::string, Tensor<double>*> m;
  for (auto& p : params) m[p.name] = p.value;
  return m;
}

std::string temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("licaf_pipeline_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

// ------------------------------ fusion head --------------------------------

TEST_CASE("fusion head matches the per-part linear oracle") {
  FusionHead<double> head(4, 3);
  Rng rng(30, 0);
  head.init(rng);
  std::vector<nn::ParamRef<double>> params;
  head.collect("f", params);
  auto m = param_map(params);
  fill_normal(*m.at("f.fc_l.bias"), rng, 0.3);
  fill_normal(*m.at("f.fc_c.bias"), rng, 0.3);
  Tensor<double> cls_l({2, 4, 5}), cls_c({2, 4, 5});
  fill_normal(cls_l, rng);
  fill_normal(cls_c, rng);
  Tensor<double> got = head.forward(cls_l, cls_c, false);
  REQUIRE(got.shape() == std::vector<long>({2, 6, 5}));
  Tensor<double> want = oracle::fuse(cls_l, cls_c, *m.at("f.fc_l.weight"), *m.at("f.fc_l.bias"),
                                     *m.at("f.fc_c.weight"), *m.at("f.fc_c.bias"));
  REQUIRE(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("fusion head keeps each modality in its own channel half") {
  FusionHead<double> head(3, 2);
  Rng rng(31, 0);
  head.init(rng);
  std::vector<nn::ParamRef<double>> params;
  head.collect("f", params);
  auto m = param_map(params);
  m.at("f.fc_c.weight")->zero();
  m.at("f.fc_c.bias")->fill(0.25);
  Tensor<double> cls_l({1, 3, 2}), cls_c({1, 3, 2});
  fill_normal(cls_l, rng);
  fill_normal(cls_c, rng);
  Tensor<double> emb = head.forward(cls_l, cls_c, false);
  // Channels [out, 2*out) come from the camera branch: bias only here.
  for (long p = 0; p < 2; ++p) {
    REQUIRE(emb.at(0L, 2L, p) == 0.25);
    REQUIRE(emb.at(0L, 3L, p) == 0.25);
    REQUIRE(emb.at(0L, 0L, p) != 0.25);
  }
}

// ----------------------------- triplet loss ---------------------------------

TEST_CASE("triplet loss of fully coincident embeddings is the margin") {
  Tensor<double> emb({4, 3, 2});
  emb.fill(0.7);
  TripletLoss<double> tri(0.2);
  const double loss = tri.forward(emb, {0, 0, 1, 1}, false);
  REQUIRE_THAT(loss, Catch::Matchers::WithinAbs(0.2, 1e-15));
}

TEST_CASE("triplet loss vanishes once classes are separated beyond the margin") {
  Tensor<double> emb({4, 2, 1});
  // Two tight clusters 10 apart along the first channel.
  const double xs[4] = {0.0, 0.01, 10.0, 10.01};
  const int labels[4] = {0, 0, 1, 1};
  for (long n = 0; n < 4; ++n) {
    emb.at(n, 0L, 0L) = xs[n];
    emb.at(n, 1L, 0L) = 0.0;
  }
  TripletLoss<double> tri(0.2);
  REQUIRE(tri.forward(emb, {labels, labels + 4}, false) == 0.0);
}

TEST_CASE("triplet loss requires at least two classes") {
  Tensor<double> emb({3, 2, 1});
  emb.fill(1.0);
  TripletLoss<double> tri(0.2);
  REQUIRE_THROWS_WITH(tri.forward(emb, {5, 5, 5}, false), Catch::Matchers::ContainsSubstring("fewer than 2 classes"));
}

TEST_CASE("triplet loss matches the exhaustive-triple oracle") {
  Tensor<double> emb({6, 4, 3});
  Rng rng(32, 0);
  fill_normal(emb, rng);
  const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  TripletLoss<double> tri(0.2);
  const double got = tri.forward(emb, labels, false);
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(oracle::triplet(emb, labels, 0.2), 1e-12));
}

TEST_CASE("triplet loss is invariant to batch permutation, translation, and rotation") {
  Tensor<double> emb({6, 4, 2});
  Rng rng(33, 0);
  fill_normal(emb, rng);
  const std::vector<int> labels = {0, 0, 1, 1, 2, 2};
  TripletLoss<double> tri(0.2);
  const double base = tri.forward(emb, labels, false);
  REQUIRE(base > 0.0);

  // Batch permutation.
  const long perm[6] = {4, 2, 0, 5, 1, 3};
  Tensor<double> pemb(emb.shape());
  std::vector<int> plabels(6);
  for (long n = 0; n < 6; ++n) {
    plabels[static_cast<size_t>(perm[n])] = labels[static_cast<size_t>(n)];
    for (long c = 0; c < 4; ++c)
      for (long p = 0; p < 2; ++p) pemb.at(perm[n], c, p) = emb.at(n, c, p);
  }
  REQUIRE_THAT(tri.forward(pemb, plabels, false), Catch::Matchers::WithinAbs(base, 1e-9));

  // Channel-space translation (same shift for every sample and part).
  Tensor<double> temb = emb;
  const double shift[4] = {1.3, -0.4, 2.2, 0.9};
  for (long n = 0; n < 6; ++n)
    for (long c = 0; c < 4; ++c)
      for (long p = 0; p < 2; ++p) temb.at(n, c, p) += shift[c];
  REQUIRE_THAT(tri.forward(temb, labels, false), Catch::Matchers::WithinAbs(base, 1e-9));

  // Channel-space rotation: orthogonalize a random 4x4 by Gram-Schmidt.
  double q[4][4];
  for (auto& row : q)
    for (double& v : row) v = rng.normal();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0;
      for (int k = 0; k < 4; ++k) dot += q[i][k] * q[j][k];
      for (int k = 0; k < 4; ++k) q[i][k] -= dot * q[j][k];
    }
    double norm = 0;
    for (int k = 0; k < 4; ++k) norm += q[i][k] * q[i][k];
    norm = std::sqrt(norm);
    for (int k = 0; k < 4; ++k) q[i][k] /= norm;
  }
  Tensor<double> remb(emb.shape());
  for (long n = 0; n < 6; ++n)
    for (long p = 0; p < 2; ++p)
      for (int i = 0; i < 4; ++i) {
        double v = 0;
        for (int k = 0; k < 4; ++k) v += q[i][k] * emb.at(n, static_cast<long>(k), p);
        remb.at(n, static_cast<long>(i), p) = v;
      }
  REQUIRE_THAT(tri.forward(remb, labels, false), Catch::Matchers::WithinAbs(base, 1e-6));
}

// ----------------------------- cross entropy --------------------------------

TEST_CASE("cross entropy at zero-initialized classifiers is ln num_classes") {
  PartClassifiers<double> cls(4, 5, 3);  // weights start zero, bias zero
  Tensor<double> emb({2, 4, 3});
  Rng rng(34, 0);
  fill_normal(emb, rng);
  const double loss = cls.forward(emb, {1, 4}, false);
  REQUIRE_THAT(loss, Catch::Matchers::WithinAbs(std::log(5.0), 1e-9));
}

TEST_CASE("cross entropy vanishes when the true logit dominates") {
  PartClassifiers<double> cls(3, 2, 2);
  std::vector<nn::ParamRef<double>> params;
  cls.collect("c", params);
  auto m = param_map(params);
  (*m.at("c.part0.bias"))[0] = 1e6;
  (*m.at("c.part1.bias"))[0] = 1e6;
  Tensor<double> emb({1, 3, 2});
  Rng rng(35, 0);
  fill_normal(emb, rng, 0.1);
  REQUIRE(cls.forward(emb, {0}, false) < 1e-6);
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  PartClassifiers<double> cls(3, 3, 1);
  Tensor<double> emb({2, 3, 1});
  emb.fill(0.1);
  REQUIRE_THROWS_WITH(cls.forward(emb, {0, 7}, false), Catch::Matchers::ContainsSubstring("outside [0, 3)"));
}

TEST_CASE("cross entropy matches the per-part softmax oracle") {
  PartClassifiers<double> cls(5, 3, 2);
  Rng rng(36, 0);
  cls.init(rng);
  std::vector<nn::ParamRef<double>> params;
  cls.collect("c", params);
  auto m = param_map(params);
  fill_normal(*m.at("c.part0.bias"), rng, 0.2);
  fill_normal(*m.at("c.part1.bias"), rng, 0.2);
  Tensor<double> emb({4, 5, 2});
  fill_normal(emb, rng);
  const std::vector<int> labels = {2, 0, 1, 2};
  std::vector<Tensor<double>> ws = {*m.at("c.part0.weight"), *m.at("c.part1.weight")};
  std::vector<Tensor<double>> bs = {*m.at("c.part0.bias"), *m.at("c.part1.bias")};
  const double got = cls.forward(emb, labels, false);
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(oracle::cross_entropy(emb, labels, ws, bs), 1e-12));
}

// ------------------------------ whole network -------------------------------

namespace {

NetConfig tiny_net_config() {
  NetConfig nc;
  nc.width = 16;
  nc.embed = 8;
  nc.input_hw = 16;
  nc.hpp_bins = {1, 2};
  nc.num_classes = 4;
  nc.heads = 2;
  nc.ictm_layers = 1;
  return nc;
}

}  // namespace

TEST_CASE("network embedding has two embed-widths of channels and one column per part") {
  NetConfig nc = tiny_net_config();
  LicafNet<float> net(nc);
  net.init(7);
  Rng rng(37, 0);
  Tensor<float> sils({4, 1, 6, 16, 16}), depths({4, 3, 2, 16, 16});
  fill_normal_f(sils, rng);
  fill_normal_f(depths, rng);
  Tensor<float> emb = net.forward(sils, depths, true);
  REQUIRE(emb.shape() == std::vector<long>({4, 16, 3}));
  REQUIRE(all_finite(emb));

  LossParts<float> parts = net.loss(emb, {0, 0, 1, 1});
  REQUIRE(std::isfinite(static_cast<double>(parts.total)));
  REQUIRE_THAT(static_cast<double>(parts.total),
               Catch::Matchers::WithinAbs(static_cast<double>(parts.tri) + static_cast<double>(parts.ce), 1e-6));

  net.zero_grads();
  net.backward();
  double gnorm = 0;
  for (auto& p : net.params())
    if (p.grad)
      for (long i = 0; i < p.grad->numel(); ++i) gnorm += static_cast<double>((*p.grad)[i]) * ((*p.grad)[i]);
  REQUIRE(std::isfinite(gnorm));
  REQUIRE(gnorm > 0.0);
}

TEST_CASE("loss weights scale the two terms independently") {
  NetConfig nc = tiny_net_config();
  nc.tri_weight = 2.0;
  nc.ce_weight = 0.5;
  LicafNet<float> net(nc);
  net.init(8);
  Rng rng(38, 0);
  Tensor<float> sils({4, 1, 3, 16, 16}), depths({4, 3, 1, 16, 16});
  fill_normal_f(sils, rng);
  fill_normal_f(depths, rng);
  Tensor<float> emb = net.forward(sils, depths, true);
  LossParts<float> parts = net.loss(emb, {0, 1, 2, 3});
  REQUIRE_THAT(static_cast<double>(parts.total),
               Catch::Matchers::WithinAbs(2.0 * parts.tri + 0.5 * parts.ce, 1e-5));
}

TEST_CASE("a reloaded checkpoint reproduces the embedding bit for bit") {
  NetConfig nc = tiny_net_config();
  const std::string dir = temp_dir("ckpt");
  Rng rng(39, 0);
  Tensor<float> sils({2, 1, 3, 16, 16}), depths({2, 3, 1, 16, 16});
  fill_normal_f(sils, rng);
  fill_normal_f(depths, rng);

  LicafNet<float> net(nc);
  net.init(11);
  // One training step so running statistics move off their init values.
  Tensor<float> emb0 = net.forward(sils, depths, true);
  net.loss(emb0, {0, 1});
  net.zero_grads();
  net.backward();
  Sgd<float> opt(net.params(), 0.01, 0.9, 5e-4, {});
  opt.step(1);
  Tensor<float> want = net.forward(sils, depths, false);
  net.save(dir + "/net.lcaf");

  LicafNet<float> other(nc);
  other.init(999);  // different init, fully overwritten by load
  other.load(dir + "/net.lcaf");
  Tensor<float> got = other.forward(sils, depths, false);
  REQUIRE(bitwise_equal(got, want));
  std::filesystem::remove_all(dir);
}

TEST_CASE("loading a checkpoint from a different architecture is an error") {
  NetConfig nc = tiny_net_config();
  const std::string dir = temp_dir("ckpt_mismatch");
  LicafNet<float> net(nc);
  net.init(1);
  net.save(dir + "/net.lcaf");

  NetConfig wider = nc;
  wider.embed = 12;
  LicafNet<float> other(wider);
  other.init(1);
  REQUIRE_THROWS(other.load(dir + "/net.lcaf"));
  std::filesystem::remove_all(dir);
}

// ------------------------- optimizer and schedule ---------------------------

TEST_CASE("sgd follows the momentum and weight-decay recurrence") {
  Tensor<double> w({2}), g({2});
  w[0] = 1.0;
  w[1] = -2.0;
  g[0] = 0.5;
  g[1] = 0.1;
  std::vector<nn::ParamRef<double>> params = {{"w", &w, &g, true}};
  Sgd<double> opt(params, 0.1, 0.9, 0.0, {});
  opt.step(1);
  // v = g; w -= lr * v
  REQUIRE_THAT(w[0], Catch::Matchers::WithinAbs(0.95, 1e-15));
  REQUIRE_THAT(w[1], Catch::Matchers::WithinAbs(-2.01, 1e-15));
  opt.step(2);
  // v = 0.9 * g + g = 0.95 (resp. 0.19)
  REQUIRE_THAT(w[0], Catch::Matchers::WithinAbs(0.95 - 0.1 * 0.95, 1e-15));
  REQUIRE_THAT(w[1], Catch::Matchers::WithinAbs(-2.01 - 0.1 * 0.19, 1e-15));
}

TEST_CASE("sgd folds weight decay into the gradient") {
  Tensor<double> w({1}), g({1});
  w[0] = 1.0;
  g[0] = 0.5;
  std::vector<nn::ParamRef<double>> params = {{"w", &w, &g, true}};
  Sgd<double> opt(params, 0.1, 0.0, 0.1, {});
  opt.step(1);
  // v = g + wd * w = 0.6; w = 1 - 0.1 * 0.6
  REQUIRE_THAT(w[0], Catch::Matchers::WithinAbs(0.94, 1e-15));
}

TEST_CASE("sgd never touches non-trainable state") {
  Tensor<double> w({1}), stat({1});
  w[0] = 1.0;
  stat[0] = 5.0;
  Tensor<double> g({1});
  g[0] = 1.0;
  std::vector<nn::ParamRef<double>> params = {{"w", &w, &g, true}, {"stat", &stat, nullptr, false}};
  Sgd<double> opt(params, 0.1, 0.9, 0.0, {});
  opt.step(1);
  opt.step(2);
  REQUIRE(stat[0] == 5.0);
  REQUIRE(w[0] != 1.0);
}

TEST_CASE("the step schedule decimates the rate at each milestone") {
  const std::vector<long> ms = {10, 15};
  REQUIRE(lr_at(0.1, ms, 1) == 0.1);
  REQUIRE(lr_at(0.1, ms, 9) == 0.1);
  REQUIRE(lr_at(0.1, ms, 10) == 0.1 * 0.1);
  REQUIRE(lr_at(0.1, ms, 14) == 0.1 * 0.1);
  REQUIRE(lr_at(0.1, ms, 15) == 0.1 * 0.1 * 0.1);
  REQUIRE(lr_at(0.1, ms, 1000) == 0.1 * 0.1 * 0.1);

  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  REQUIRE(fmt(lr_at(0.1, ms, 5)) == "0.1");
  REQUIRE(fmt(lr_at(0.1, ms, 12)) == "0.01");
  REQUIRE(fmt(lr_at(0.1, ms, 20)) == "0.001");
}
