// Channel attention (Γ, attention kernel, strategy wiring, blending) and
// temporal cross-attention (multi-head blocks, layer strategies, class
// tokens), verified against loop oracles and exact invariants.
#include "licaf/acca.hpp"
#include "licaf/ictm.hpp"
#include "licaf/rng.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

using namespace licaf;

namespace {

void fill_normal(Tensor<double>& t, Rng& rng, double stdev = 1.0) {
  for (long i = 0; i < t.numel(); ++i) t[i] = stdev * rng.normal();
}

std::map<std::string, Tensor<double>*> param_map(std::vector<nn::ParamRef<double>>& params) {
  std::map<std::string, Tensor<double>*> m;
  for (auto& p : params) m[p.name] = p.value;
  return m;
}

}  // namespace

// ------------------------------- Γ ----------------------------------------

TEST_CASE("gamma of a constant field through an identity map is the constant") {
  Gamma<double> g(3);
  std::vector<nn::ParamRef<double>> params;
  g.collect("g", params);
  auto m = param_map(params);
  Tensor<double>& w = *m.at("g.fc.weight");
  w.zero();
  for (long i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  Tensor<double> fm({2, 3, 4, 3, 3});
  fm.fill(0.6);
  Tensor<double> d = g.forward(fm, false);
  REQUIRE(d.shape() == std::vector<long>({2, 3}));
  for (long i = 0; i < d.numel(); ++i) REQUIRE_THAT(d[i], Catch::Matchers::WithinAbs(0.6, 1e-12));
}

TEST_CASE("gamma rectifies all-negative linear outputs to zero") {
  Gamma<double> g(4);
  std::vector<nn::ParamRef<double>> params;
  g.collect("g", params);
  auto m = param_map(params);
  m.at("g.fc.weight")->zero();
  m.at("g.fc.bias")->fill(-2.0);
  Tensor<double> fm({1, 4, 2, 3, 3});
  Rng rng(1, 0);
  fill_normal(fm, rng);
  Tensor<double> d = g.forward(fm, false);
  for (long i = 0; i < d.numel(); ++i) REQUIRE(d[i] == 0.0);
}

TEST_CASE("gamma matches the pooling + linear + clamp oracle") {
  Gamma<double> g(4);
  Rng rng(2, 0);
  g.init(rng);
  std::vector<nn::ParamRef<double>> params;
  g.collect("g", params);
  auto m = param_map(params);
  fill_normal(*m.at("g.fc.bias"), rng, 0.3);
  Tensor<double> fm({1, 4, 2, 3, 3});
  fill_normal(fm, rng);
  Tensor<double> got = g.forward(fm, false);
  Tensor<double> want = oracle::gamma(fm, *m.at("g.fc.weight"), *m.at("g.fc.bias"));
  REQUIRE(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("gamma is exactly invariant to temporal permutation") {
  Gamma<double> g(3);
  Rng rng(3, 0);
  g.init(rng);
  Tensor<double> fm({2, 3, 4, 2, 2});
  fill_normal(fm, rng);
  Tensor<double> fp(fm.shape());
  const long perm[4] = {3, 1, 0, 2};
  for (long n = 0; n < 2; ++n)
    for (long c = 0; c < 3; ++c)
      for (long t = 0; t < 4; ++t)
        for (long i = 0; i < 4; ++i)
          fp[((n * 3 + c) * 4 + perm[t]) * 4 + i] = fm[((n * 3 + c) * 4 + t) * 4 + i];
  REQUIRE(bitwise_equal(g.forward(fm, false), g.forward(fp, false)));
}

// ------------------------- channel attention -------------------------------

TEST_CASE("channel attention with uniform descriptors broadcasts the channel mean") {
  Tensor<double> guide({1, 4}), tdesc({1, 4});
  guide.fill(0.8);
  tdesc.fill(1.3);
  Tensor<double> fm({1, 4, 2, 2, 2});
  Rng rng(4, 0);
  fill_normal(fm, rng);
  Tensor<double> out = channel_attention(guide, tdesc, fm);
  for (long k = 0; k < 8; ++k) {
    double mean = 0;
    for (long c = 0; c < 4; ++c) mean += fm[c * 8 + k];
    mean /= 4.0;
    for (long c = 0; c < 4; ++c) REQUIRE_THAT(out[c * 8 + k], Catch::Matchers::WithinAbs(mean, 1e-12));
  }
}

TEST_CASE("channel attention with one channel is the identity") {
  Tensor<double> guide({2, 1}), tdesc({2, 1});
  guide[0] = 0.3;
  guide[1] = 2.0;
  tdesc[0] = 1.0;
  tdesc[1] = 0.1;
  Tensor<double> fm({2, 1, 3, 2, 2});
  Rng rng(5, 0);
  fill_normal(fm, rng);
  Tensor<double> out = channel_attention(guide, tdesc, fm);
  REQUIRE(max_abs_diff(out, fm) < 1e-15);
}

TEST_CASE("channel attention matches the outer-product softmax oracle") {
  Tensor<double> guide({2, 3}), tdesc({2, 3});
  Rng rng(6, 0);
  fill_normal(guide, rng);
  fill_normal(tdesc, rng);
  Tensor<double> fm({2, 3, 2, 2, 2});
  fill_normal(fm, rng);
  Tensor<double> got = channel_attention(guide, tdesc, fm);
  Tensor<double> want = oracle::channel_attention(guide, tdesc, fm);
  REQUIRE(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("attention rows are nonnegative and sum to one") {
  ChannelAttention<double> ca;
  Tensor<double> guide({3, 5}), tdesc({3, 5}), fm({3, 5, 2, 2, 2});
  Rng rng(7, 0);
  fill_normal(guide, rng, 2.0);
  fill_normal(tdesc, rng, 2.0);
  fill_normal(fm, rng);
  ca.forward(guide, tdesc, fm, true);
  const Tensor<double>& probs = ca.probs();  // [N, C, C]
  for (long n = 0; n < 3; ++n)
    for (long i = 0; i < 5; ++i) {
      double sum = 0;
      for (long j = 0; j < 5; ++j) {
        REQUIRE(probs.at(n, i, j) >= 0.0);
        sum += probs.at(n, i, j);
      }
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
}

TEST_CASE("channel attention is scale covariant in the value path") {
  Tensor<double> guide({1, 4}), tdesc({1, 4}), fm({1, 4, 2, 3, 3});
  Rng rng(8, 0);
  fill_normal(guide, rng);
  fill_normal(tdesc, rng);
  fill_normal(fm, rng);
  const double c = -2.7;
  Tensor<double> scaled(fm.shape());
  for (long i = 0; i < fm.numel(); ++i) scaled[i] = c * fm[i];
  Tensor<double> a = channel_attention(guide, tdesc, scaled);
  Tensor<double> b = channel_attention(guide, tdesc, fm);
  for (long i = 0; i < a.numel(); ++i) REQUIRE_THAT(a[i], Catch::Matchers::WithinAbs(c * b[i], 1e-12));
}

// ------------------------------- ACCA --------------------------------------

TEST_CASE("acca simultaneous with uniform descriptors mean-broadcasts both modalities") {
  Acca<double> acca(4, Strategy::kSimultaneous);
  std::vector<nn::ParamRef<double>> params;
  acca.collect("a", params);
  auto m = param_map(params);
  // Zero maps with positive bias make every Γ descriptor a positive constant.
  for (const char* slot : {"gamma_l_guide", "gamma_l_target", "gamma_c_guide", "gamma_c_target"}) {
    m.at(std::string("a.") + slot + ".fc.weight")->zero();
    m.at(std::string("a.") + slot + ".fc.bias")->fill(0.5);
  }
  Tensor<double> f_l({2, 4, 2, 2, 2}), f_c({2, 4, 3, 2, 2});
  Rng rng(9, 0);
  fill_normal(f_l, rng);
  fill_normal(f_c, rng);
  auto [e_l, e_c] = acca.forward(f_l, f_c, false);
  auto check_mean_broadcast = [](const Tensor<double>& e, const Tensor<double>& f) {
    const long n = f.dim(0), c = f.dim(1), rest = f.numel() / (f.dim(0) * f.dim(1));
    for (long ni = 0; ni < n; ++ni)
      for (long k = 0; k < rest; ++k) {
        double mean = 0;
        for (long ci = 0; ci < c; ++ci) mean += f[(ni * c + ci) * rest + k];
        mean /= static_cast<double>(c);
        for (long ci = 0; ci < c; ++ci)
          REQUIRE_THAT(e[(ni * c + ci) * rest + k], Catch::Matchers::WithinAbs(mean, 1e-12));
      }
  };
  check_mean_broadcast(e_l, f_l);
  check_mean_broadcast(e_c, f_c);
}

TEST_CASE("acca single-direction strategies pass the unmodeled stream through bitwise") {
  Rng rng(10, 0);
  Tensor<double> f_l({1, 3, 2, 2, 2}), f_c({1, 3, 4, 2, 2});
  fill_normal(f_l, rng);
  fill_normal(f_c, rng);

  Acca<double> lc(3, Strategy::kLcOnly);
  lc.init(rng);
  auto [lc_el, lc_ec] = lc.forward(f_l, f_c, false);
  REQUIRE(bitwise_equal(lc_ec, f_c));
  REQUIRE_FALSE(bitwise_equal(lc_el, f_l));

  Acca<double> cl(3, Strategy::kClOnly);
  cl.init(rng);
  auto [cl_el, cl_ec] = cl.forward(f_l, f_c, false);
  REQUIRE(bitwise_equal(cl_el, f_l));
  REQUIRE_FALSE(bitwise_equal(cl_ec, f_c));
}

TEST_CASE("acca default strategy composes the two attention equations in order") {
  Acca<double> acca(3, kAccaDefaultStrategy);  // L<-C, then C<-F(L<-C)
  Rng rng(11, 0);
  acca.init(rng);
  std::vector<nn::ParamRef<double>> params;
  acca.collect("a", params);
  auto m = param_map(params);
  for (const char* slot : {"gamma_l_guide", "gamma_l_target", "gamma_c_guide", "gamma_c_target"})
    fill_normal(*m.at(std::string("a.") + slot + ".fc.bias"), rng, 0.2);

  Tensor<double> f_l({2, 3, 2, 2, 2}), f_c({2, 3, 3, 2, 2});
  fill_normal(f_l, rng);
  fill_normal(f_c, rng);
  auto [e_l, e_c] = acca.forward(f_l, f_c, false);

  auto gam = [&](const char* slot, const Tensor<double>& x) {
    return oracle::gamma(x, *m.at(std::string("a.") + slot + ".fc.weight"),
                         *m.at(std::string("a.") + slot + ".fc.bias"));
  };
  Tensor<double> want_el = oracle::channel_attention(gam("gamma_l_guide", f_c), gam("gamma_l_target", f_l), f_l);
  Tensor<double> want_ec =
      oracle::channel_attention(gam("gamma_c_guide", want_el), gam("gamma_c_target", f_c), f_c);
  REQUIRE(max_abs_diff(e_l, want_el) < 1e-12);
  REQUIRE(max_abs_diff(e_c, want_ec) < 1e-12);
}

TEST_CASE("blend and pool matches hpp of the weighted sum") {
  BlendPool<double> blend({1, 2});
  Tensor<double> f({1, 2, 2, 4, 4}), e({1, 2, 2, 4, 4});
  Rng rng(12, 0);
  fill_normal(f, rng);
  fill_normal(e, rng);

  Tensor<double> w0({1});
  w0[0] = 0.0;
  REQUIRE(max_abs_diff(blend.forward(f, e, w0, false), hpp(e, {1, 2})) < 1e-15);

  Tensor<double> w1({1});
  w1[0] = 1.0;
  Tensor<double> zero(e.shape());
  REQUIRE(max_abs_diff(blend.forward(f, zero, w1, false), hpp(f, {1, 2})) < 1e-15);

  Tensor<double> wr({1});
  wr[0] = -0.7;
  Tensor<double> mix(f.shape());
  for (long i = 0; i < mix.numel(); ++i) mix[i] = wr[0] * f[i] + e[i];
  REQUIRE(max_abs_diff(blend.forward(f, e, wr, false), oracle::hpp(mix, {1, 2})) < 1e-12);
}

TEST_CASE("blend and pool rejects mismatched shapes") {
  BlendPool<double> blend({1, 2});
  Tensor<double> f({1, 2, 2, 4, 4}), e({1, 2, 3, 4, 4}), w({1});
  REQUIRE_THROWS(blend.forward(f, e, w, false));
}

// --------------------------- class tokens ----------------------------------

TEST_CASE("attach prepends one broadcast token frame per modality") {
  Ictm<float> ictm(512, 16, 0, kIctmDefaultStrategy, false);
  Rng rng(13, 0);
  ictm.init(rng);
  Tensor<float> s_l({2, 512, 7, 31}), s_c({2, 512, 21, 31});
  for (long i = 0; i < s_l.numel(); ++i) s_l[i] = static_cast<float>(rng.normal());
  for (long i = 0; i < s_c.numel(); ++i) s_c[i] = static_cast<float>(rng.normal());
  auto [a_l, a_c] = ictm.attach(s_l, s_c);
  REQUIRE(a_l.shape() == std::vector<long>({2, 512, 8, 31}));
  REQUIRE(a_c.shape() == std::vector<long>({2, 512, 22, 31}));
  for (long n = 0; n < 2; ++n)
    for (long c = 0; c < 512; ++c)
      for (long p = 0; p < 31; ++p) {
        REQUIRE(a_l.at(n, c, 0L, p) == ictm.token_l()[c]);
        REQUIRE(a_c.at(n, c, 0L, p) == ictm.token_c()[c]);
      }
  // Time slices 1.. are the original sequences.
  for (long n = 0; n < 2; ++n)
    for (long c = 0; c < 512; ++c)
      for (long t = 0; t < 7; ++t)
        for (long p = 0; p < 31; ++p) REQUIRE(a_l.at(n, c, t + 1, p) == s_l.at(n, c, t, p));
}

// -------------------------- cross attention --------------------------------

TEST_CASE("cross attention with a single key returns that value's projection everywhere") {
  Mha<double> mha(6, 2);
  Rng rng(14, 0);
  mha.init(rng);
  std::vector<nn::ParamRef<double>> params;
  mha.collect("m", params);
  auto m = param_map(params);
  Tensor<double> q({1, 6, 3, 2}), kv({1, 6, 1, 2});
  fill_normal(q, rng);
  fill_normal(kv, rng);
  Tensor<double> out = cross_attention(mha, q, kv, kv);
  REQUIRE(out.shape() == std::vector<long>({1, 6, 3, 2}));
  // Expected: W_o (W_v x + b_v) + b_o, independent of the query.
  for (long p = 0; p < 2; ++p) {
    std::vector<double> v(6);
    for (long o = 0; o < 6; ++o) {
      double z = (*m.at("m.wv.bias"))[o];
      for (long i = 0; i < 6; ++i) z += kv.at(0L, i, 0L, p) * m.at("m.wv.weight")->at(o, i);
      v[static_cast<size_t>(o)] = z;
    }
    for (long t = 0; t < 3; ++t)
      for (long o = 0; o < 6; ++o) {
        double want = (*m.at("m.wo.bias"))[o];
        for (long i = 0; i < 6; ++i) want += v[static_cast<size_t>(i)] * m.at("m.wo.weight")->at(o, i);
        REQUIRE_THAT(out.at(0L, o, t, p), Catch::Matchers::WithinAbs(want, 1e-10));
      }
  }
}

TEST_CASE("cross attention maps identical query rows to identical output rows") {
  Mha<double> mha(4, 2);
  Rng rng(15, 0);
  mha.init(rng);
  Tensor<double> q({1, 4, 3, 1}), kv({1, 4, 5, 1});
  fill_normal(kv, rng);
  for (long c = 0; c < 4; ++c) {
    const double v = rng.normal();
    for (long t = 0; t < 3; ++t) q.at(0L, c, t, 0L) = v;
  }
  Tensor<double> out = cross_attention(mha, q, kv, kv);
  for (long c = 0; c < 4; ++c)
    for (long t = 1; t < 3; ++t) REQUIRE(out.at(0L, c, t, 0L) == out.at(0L, c, 0L, 0L));
}

TEST_CASE("cross attention matches the scaled-dot-product oracle") {
  Mha<double> mha(4, 1);
  Rng rng(16, 0);
  mha.init(rng);
  std::vector<nn::ParamRef<double>> params;
  mha.collect("m", params);
  auto m = param_map(params);
  for (const char* b : {"m.wq.bias", "m.wk.bias", "m.wv.bias", "m.wo.bias"}) fill_normal(*m.at(b), rng, 0.2);
  Tensor<double> q({1, 4, 2, 1}), k({1, 4, 3, 1});
  fill_normal(q, rng);
  fill_normal(k, rng);
  Tensor<double> got = cross_attention(mha, q, k, k);
  Tensor<double> want =
      oracle::mha(q, k, k, *m.at("m.wq.weight"), *m.at("m.wq.bias"), *m.at("m.wk.weight"), *m.at("m.wk.bias"),
                  *m.at("m.wv.weight"), *m.at("m.wv.bias"), *m.at("m.wo.weight"), *m.at("m.wo.bias"), 1);
  REQUIRE(max_abs_diff(got, want) < 1e-12);

  // And with two heads on a wider toy.
  Mha<double> mha2(8, 2);
  mha2.init(rng);
  params.clear();
  mha2.collect("m", params);
  m = param_map(params);
  Tensor<double> q2({2, 8, 3, 2}), k2({2, 8, 4, 2});
  fill_normal(q2, rng);
  fill_normal(k2, rng);
  Tensor<double> got2 = cross_attention(mha2, q2, k2, k2);
  Tensor<double> want2 =
      oracle::mha(q2, k2, k2, *m.at("m.wq.weight"), *m.at("m.wq.bias"), *m.at("m.wk.weight"), *m.at("m.wk.bias"),
                  *m.at("m.wv.weight"), *m.at("m.wv.bias"), *m.at("m.wo.weight"), *m.at("m.wo.bias"), 2);
  REQUIRE(max_abs_diff(got2, want2) < 1e-12);
}

TEST_CASE("cross attention is invariant to joint key/value permutation") {
  Mha<double> mha(6, 3);
  Rng rng(17, 0);
  mha.init(rng);
  Tensor<double> q({1, 6, 2, 2}), kv({1, 6, 4, 2});
  fill_normal(q, rng);
  fill_normal(kv, rng);
  const long perm[4] = {2, 3, 1, 0};
  Tensor<double> kvp(kv.shape());
  for (long c = 0; c < 6; ++c)
    for (long t = 0; t < 4; ++t)
      for (long p = 0; p < 2; ++p) kvp.at(0L, c, perm[t], p) = kv.at(0L, c, t, p);
  Tensor<double> a = cross_attention(mha, q, kv, kv);
  Tensor<double> b = cross_attention(mha, q, kvp, kvp);
  REQUIRE(max_abs_diff(a, b) < 1e-6);
}

TEST_CASE("cross attention never mixes parts") {
  Mha<double> mha(4, 2);
  Rng rng(18, 0);
  mha.init(rng);
  Tensor<double> q({1, 4, 2, 3}), kv({1, 4, 3, 3});
  fill_normal(q, rng);
  fill_normal(kv, rng);
  Tensor<double> base = cross_attention(mha, q, kv, kv);
  Tensor<double> kv2 = kv;
  for (long c = 0; c < 4; ++c)
    for (long t = 0; t < 3; ++t) kv2.at(0L, c, t, 1L) += rng.normal();
  Tensor<double> after = cross_attention(mha, q, kv2, kv2);
  for (long c = 0; c < 4; ++c)
    for (long t = 0; t < 2; ++t) {
      REQUIRE(after.at(0L, c, t, 0L) == base.at(0L, c, t, 0L));
      REQUIRE(after.at(0L, c, t, 2L) == base.at(0L, c, t, 2L));
      REQUIRE(after.at(0L, c, t, 1L) != base.at(0L, c, t, 1L));
    }
}

TEST_CASE("cross attention rejects channels not divisible by heads") {
  REQUIRE_THROWS_WITH(Mha<double>(6, 4), Catch::Matchers::ContainsSubstring("divisible"));
}

// ------------------------------ ICTM layer ---------------------------------

namespace {

// Expected (T_L_out, T_C_out) given inputs with T_L=8, T_C=22 (tokens included).
struct ShapeCase {
  Strategy strategy;
  bool q_is_target;
  long t_l_out, t_c_out;
};

const ShapeCase kShapeTable[] = {
    // Literal reading: Q = the guiding stream, outputs take the query length.
    {Strategy::kClThenLc, false, 8, 8},
    {Strategy::kLcThenCl, false, 22, 22},
    {Strategy::kSimultaneous, false, 22, 8},
    {Strategy::kClOnly, false, 8, 8},
    {Strategy::kLcOnly, false, 22, 22},
    // Conventional reading: Q = the modeled stream, lengths are preserved.
    {Strategy::kClThenLc, true, 8, 22},
    {Strategy::kLcThenCl, true, 8, 22},
    {Strategy::kSimultaneous, true, 8, 22},
    {Strategy::kClOnly, true, 8, 22},
    {Strategy::kLcOnly, true, 8, 22},
};

}  // namespace

TEST_CASE("ictm layer shape trace covers all five strategies in both query conventions") {
  Rng rng(19, 0);
  Tensor<double> l_in({1, 8, 8, 3}), c_in({1, 8, 22, 3});
  fill_normal(l_in, rng);
  fill_normal(c_in, rng);
  for (const auto& sc : kShapeTable) {
    CAPTURE(strategy_key(sc.strategy), sc.q_is_target);
    IctmLayer<double> layer(8, 2, sc.strategy, sc.q_is_target);
    layer.init(rng);
    auto [l_out, c_out] = layer.forward(l_in, c_in, false);
    REQUIRE(l_out.shape() == std::vector<long>({1, 8, sc.t_l_out, 3}));
    REQUIRE(c_out.shape() == std::vector<long>({1, 8, sc.t_c_out, 3}));
  }
}

TEST_CASE("ictm layer default mode collapses both streams to the lidar length") {
  IctmLayer<float> layer(512, 16, kIctmDefaultStrategy, false);
  Rng rng(20, 0);
  layer.init(rng);
  Tensor<float> l_in({1, 512, 8, 31}), c_in({1, 512, 22, 31});
  for (long i = 0; i < l_in.numel(); ++i) l_in[i] = static_cast<float>(rng.normal());
  for (long i = 0; i < c_in.numel(); ++i) c_in[i] = static_cast<float>(rng.normal());
  auto [l_out, c_out] = layer.forward(l_in, c_in, false);
  REQUIRE(l_out.shape() == std::vector<long>({1, 512, 8, 31}));
  REQUIRE(c_out.shape() == std::vector<long>({1, 512, 8, 31}));
}

TEST_CASE("ictm layer simultaneous mode swaps the streams' lengths") {
  IctmLayer<float> layer(512, 16, Strategy::kSimultaneous, false);
  Rng rng(21, 0);
  layer.init(rng);
  Tensor<float> l_in({1, 512, 8, 31}), c_in({1, 512, 22, 31});
  for (long i = 0; i < l_in.numel(); ++i) l_in[i] = static_cast<float>(rng.normal());
  for (long i = 0; i < c_in.numel(); ++i) c_in[i] = static_cast<float>(rng.normal());
  auto [l_out, c_out] = layer.forward(l_in, c_in, false);
  REQUIRE(l_out.shape() == std::vector<long>({1, 512, 22, 31}));
  REQUIRE(c_out.shape() == std::vector<long>({1, 512, 8, 31}));
}

TEST_CASE("ictm layer single-direction strategies pass the other stream through bitwise") {
  Rng rng(22, 0);
  Tensor<double> l_in({1, 6, 3, 2}), c_in({1, 6, 5, 2});
  fill_normal(l_in, rng);
  fill_normal(c_in, rng);

  IctmLayer<double> lc(6, 2, Strategy::kLcOnly, false);
  lc.init(rng);
  auto [lc_l, lc_c] = lc.forward(l_in, c_in, false);
  REQUIRE(bitwise_equal(lc_c, c_in));
  REQUIRE_FALSE(bitwise_equal(lc_l, l_in));

  IctmLayer<double> cl(6, 2, Strategy::kClOnly, false);
  cl.init(rng);
  auto [cl_l, cl_c] = cl.forward(l_in, c_in, false);
  REQUIRE(bitwise_equal(cl_l, l_in));
  REQUIRE_FALSE(bitwise_equal(cl_c, c_in));
}

// ----------------------------- ICTM stack ----------------------------------

TEST_CASE("ictm returns one class token vector per part") {
  Ictm<double> ictm(8, 2, 2, kIctmDefaultStrategy, false);
  Rng rng(23, 0);
  ictm.init(rng);
  Tensor<double> s_l({2, 8, 4, 3}), s_c({2, 8, 12, 3});
  fill_normal(s_l, rng);
  fill_normal(s_c, rng);
  auto [cls_l, cls_c] = ictm.forward(s_l, s_c, false);
  REQUIRE(cls_l.shape() == std::vector<long>({2, 8, 3}));
  REQUIRE(cls_c.shape() == std::vector<long>({2, 8, 3}));
  REQUIRE(all_finite(cls_l));
  REQUIRE(all_finite(cls_c));
}

TEST_CASE("ictm with an empty layer stack returns the learned tokens") {
  Ictm<double> ictm(5, 1, 0, kIctmDefaultStrategy, false);
  Rng rng(24, 0);
  ictm.init(rng);
  Tensor<double> s_l({2, 5, 3, 4}), s_c({2, 5, 9, 4});
  fill_normal(s_l, rng);
  fill_normal(s_c, rng);
  auto [cls_l, cls_c] = ictm.forward(s_l, s_c, false);
  for (long n = 0; n < 2; ++n)
    for (long c = 0; c < 5; ++c)
      for (long p = 0; p < 4; ++p) {
        REQUIRE(cls_l.at(n, c, p) == ictm.token_l()[c]);
        REQUIRE(cls_c.at(n, c, p) == ictm.token_c()[c]);
      }
}

TEST_CASE("ictm handles single-frame inputs") {
  Ictm<double> ictm(6, 2, 2, kIctmDefaultStrategy, false);
  Rng rng(25, 0);
  ictm.init(rng);
  Tensor<double> s_l({1, 6, 1, 2}), s_c({1, 6, 3, 2});
  fill_normal(s_l, rng);
  fill_normal(s_c, rng);
  auto [cls_l, cls_c] = ictm.forward(s_l, s_c, false);
  REQUIRE(cls_l.shape() == std::vector<long>({1, 6, 2}));
  REQUIRE(all_finite(cls_l));
  REQUIRE(all_finite(cls_c));
}

TEST_CASE("temporal max pooling is the ictm bypass") {
  TemporalMaxPool<double> tmp;
  Tensor<double> x({1, 2, 3, 2});
  const double vals[12] = {1, 2, 5, 4, 3, 6, -1, 0, -2, 1, -3, 2};
  for (long i = 0; i < 12; ++i) x[i] = vals[i];
  Tensor<double> y = tmp.forward(x, false);
  REQUIRE(y.shape() == std::vector<long>({1, 2, 2}));
  REQUIRE(y.at(0L, 0L, 0L) == 5.0);
  REQUIRE(y.at(0L, 0L, 1L) == 6.0);
  REQUIRE(y.at(0L, 1L, 0L) == -1.0);
  REQUIRE(y.at(0L, 1L, 1L) == 2.0);
}
