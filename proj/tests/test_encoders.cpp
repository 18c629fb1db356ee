#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dialoglab/encoders.hpp"
#include "dialoglab/params.hpp"
#include "dialoglab/rng.hpp"
#include "dialoglab/tensor.hpp"

using namespace dialoglab;

namespace {

std::mt19937_64 g(1234);

Tensor rnd(std::vector<int> shape) {
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& x : v) x = u(g);
  return Tensor(shape, std::move(v));
}

GruParams zero_gru(int d_in, int d_h) {
  GruParams p;
  p.w_z = Tensor::zeros({d_h, d_in});
  p.u_z = Tensor::zeros({d_h, d_h});
  p.b_z = Tensor::zeros({d_h});
  p.w_r = Tensor::zeros({d_h, d_in});
  p.u_r = Tensor::zeros({d_h, d_h});
  p.b_r = Tensor::zeros({d_h});
  p.w_h = Tensor::zeros({d_h, d_in});
  p.u_h = Tensor::zeros({d_h, d_h});
  p.b_h = Tensor::zeros({d_h});
  return p;
}

GruParams rnd_gru(int d_in, int d_h) {
  GruParams p;
  p.w_z = rnd({d_h, d_in});
  p.u_z = rnd({d_h, d_h});
  p.b_z = rnd({d_h});
  p.w_r = rnd({d_h, d_in});
  p.u_r = rnd({d_h, d_h});
  p.b_r = rnd({d_h});
  p.w_h = rnd({d_h, d_in});
  p.u_h = rnd({d_h, d_h});
  p.b_h = rnd({d_h});
  return p;
}

}  // namespace

TEST_CASE("gru_step with all-zero parameters halves the state") {
  GruParams p = zero_gru(3, 4);
  Tensor h = rnd({4});
  Tensor next = gru_step(rnd({3}), h, p);
  for (int i = 0; i < 4; ++i) CHECK(next.at(i) == doctest::Approx(0.5 * h.at(i)).epsilon(1e-14));
}

TEST_CASE("large negative update-gate bias keeps the state") {
  GruParams p = rnd_gru(3, 4);
  for (double& v : p.w_z.data()) v = 0.0;
  for (double& v : p.u_z.data()) v = 0.0;
  for (double& v : p.b_z.data()) v = -40.0;  // z = sigmoid(-40) ~ 0
  Tensor h = rnd({4});
  Tensor next = gru_step(rnd({3}), h, p);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(next.at(i) - h.at(i)) < 1e-6);
}

TEST_CASE("gru_step matches an extended-precision recurrence oracle") {
  int d_in = 3, d_h = 2;
  GruParams p = rnd_gru(d_in, d_h);
  Tensor x = rnd({d_in}), h = rnd({d_h});
  Tensor next = gru_step(x, h, p);

  auto gemv = [&](const Tensor& w, const Tensor& v, int rows, int cols, int r) {
    long double acc = 0;
    for (int c = 0; c < cols; ++c) acc += (long double)w.at(r, c) * (long double)v.at(c);
    return acc;
  };
  for (int i = 0; i < d_h; ++i) {
    long double z = 1.0L / (1.0L + std::exp(-(gemv(p.w_z, x, d_h, d_in, i) +
                                              gemv(p.u_z, h, d_h, d_h, i) +
                                              (long double)p.b_z.at(i))));
    long double r = 1.0L / (1.0L + std::exp(-(gemv(p.w_r, x, d_h, d_in, i) +
                                              gemv(p.u_r, h, d_h, d_h, i) +
                                              (long double)p.b_r.at(i))));
    // candidate needs the full reset vector, recompute per column
    long double pre = gemv(p.w_h, x, d_h, d_in, i) + (long double)p.b_h.at(i);
    for (int c = 0; c < d_h; ++c) {
      long double rc = 1.0L / (1.0L + std::exp(-(gemv(p.w_r, x, d_h, d_in, c) +
                                                 gemv(p.u_r, h, d_h, d_h, c) +
                                                 (long double)p.b_r.at(c))));
      pre += (long double)p.u_h.at(i, c) * rc * (long double)h.at(c);
    }
    long double hc = std::tanh(pre);
    long double want = (1.0L - z) * (long double)h.at(i) + z * hc;
    CHECK(next.at(i) == doctest::Approx((double)want).epsilon(1e-12));
  }
}

TEST_CASE("gru_step rejects mismatched shapes") {
  GruParams p = rnd_gru(3, 4);
  try {
    gru_step(rnd({2}), rnd({4}), p);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == "dimension");
  }
  CHECK_THROWS_AS(gru_step(rnd({3}), rnd({5}), p), Error);
}

TEST_CASE("bidirectional encoder: length-1 input, shapes, empty input") {
  RngPool rng(7);
  ParamStore store(&rng);
  BiGruEncoder enc(store, "utt", 5, 6, 2);
  DropoutSpec eval;

  EncoderOutput one = enc.encode({rnd({5})}, eval);
  CHECK(one.states.dim(0) == 1);
  CHECK(one.states.dim(1) == 6);
  for (int i = 0; i < 6; ++i) CHECK(one.final.at(i) == one.states.at(0, i));

  EncoderOutput three = enc.encode({rnd({5}), rnd({5}), rnd({5})}, eval);
  CHECK(three.states.dim(0) == 3);
  CHECK(three.states.dim(1) == 6);

  CHECK_THROWS_AS(enc.encode({}, eval), Error);
}

TEST_CASE("bidirectional encoder at width 512 produces [L x 512] states") {
  RngPool rng(11);
  ParamStore store(&rng);
  BiGruEncoder enc(store, "utt", 32, 512, 2);
  DropoutSpec eval;
  EncoderOutput out = enc.encode({rnd({32}), rnd({32})}, eval);
  CHECK(out.states.dim(0) == 2);
  CHECK(out.states.dim(1) == 512);
  CHECK(out.final.dim(0) == 512);
}

TEST_CASE("palindrome input with tied directions matches a two-sweep oracle") {
  RngPool rng(21);
  ParamStore store(&rng);
  int d_in = 4, d_h = 5;
  BiGruEncoder enc(store, "utt", d_in, d_h, 1);

  // tie the backward cell to the forward one
  for (const char* leaf : {"w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"}) {
    Tensor fwd = store.all().at(std::string("utt.fwd.l0.") + leaf);
    Tensor bwd = store.all().at(std::string("utt.bwd.l0.") + leaf);
    bwd.data() = fwd.data();
  }
  GruParams cell;
  cell.w_z = store.all().at("utt.fwd.l0.w_z");
  cell.u_z = store.all().at("utt.fwd.l0.u_z");
  cell.b_z = store.all().at("utt.fwd.l0.b_z");
  cell.w_r = store.all().at("utt.fwd.l0.w_r");
  cell.u_r = store.all().at("utt.fwd.l0.u_r");
  cell.b_r = store.all().at("utt.fwd.l0.b_r");
  cell.w_h = store.all().at("utt.fwd.l0.w_h");
  cell.u_h = store.all().at("utt.fwd.l0.u_h");
  cell.b_h = store.all().at("utt.fwd.l0.b_h");
  Tensor w_proj = store.all().at("utt.w_proj");
  Tensor b_proj = store.all().at("utt.b_proj");

  Tensor a = rnd({d_in}), b = rnd({d_in});
  std::vector<Tensor> palindrome = {a, b, a};  // reversal leaves it unchanged

  DropoutSpec eval;
  EncoderOutput out = enc.encode(palindrome, eval);

  // manual single sweep; with tied cells the backward sweep is identical
  std::vector<Tensor> f;
  Tensor h = Tensor::zeros({d_h});
  for (const Tensor& x : palindrome) {
    h = gru_step(x, h, cell);
    f.push_back(h);
  }
  int n = 3;
  for (int j = 0; j < n; ++j) {
    Tensor want =
        ops::add(ops::matvec(w_proj, ops::concat({f[j], f[n - 1 - j]})), b_proj);
    for (int i = 0; i < d_h; ++i)
      CHECK(out.states.at(j, i) == doctest::Approx(want.at(i)).epsilon(1e-13));
  }
  Tensor want_final =
      ops::add(ops::matvec(w_proj, ops::concat({f.back(), f.back()})), b_proj);
  for (int i = 0; i < d_h; ++i)
    CHECK(out.final.at(i) == doctest::Approx(want_final.at(i)).epsilon(1e-13));
}

TEST_CASE("encode_context equals chained gru_step calls") {
  RngPool rng(31);
  ParamStore store(&rng);
  int d = 4;
  GruStack ctx(store, "ctx", d, d, 1);
  DropoutSpec eval;

  Tensor u0 = rnd({d});
  EncoderOutput single = encode_context({u0}, ctx, eval);
  Tensor want0 = gru_step(u0, Tensor::zeros({d}), ctx.cells()[0]);
  CHECK(single.states.dim(0) == 1);
  for (int i = 0; i < d; ++i) CHECK(single.final.at(i) == want0.at(i));

  std::vector<Tensor> us = {rnd({d}), rnd({d}), rnd({d})};
  EncoderOutput out = encode_context(us, ctx, eval);
  Tensor h = Tensor::zeros({d});
  for (int j = 0; j < 3; ++j) {
    h = gru_step(us[j], h, ctx.cells()[0]);
    for (int i = 0; i < d; ++i) CHECK(out.states.at(j, i) == h.at(i));
  }
  for (int i = 0; i < d; ++i) CHECK(out.final.at(i) == h.at(i));

  CHECK_THROWS_AS(encode_context({}, ctx, eval), Error);
}

TEST_CASE("self-attention context encoder: shapes and single-block oracle") {
  RngPool rng(41);
  ParamStore store(&rng);
  SelfAttnEncoder enc(store, "sa", 4, 2, 1);

  Tensor one = enc.encode(rnd({1, 4}));
  CHECK(one.dim(0) == 1);
  CHECK(one.dim(1) == 4);
  for (int i = 0; i < 4; ++i) CHECK(std::isfinite(one.at(0, i)));

  // one block over m=2 equals a direct multi_head_self_attend on x + positions
  MultiHeadParams block;
  block.w_q = store.all().at("sa.block0.w_q");
  block.w_k = store.all().at("sa.block0.w_k");
  block.w_v = store.all().at("sa.block0.w_v");
  block.w_o = store.all().at("sa.block0.w_o");
  block.b_q = store.all().at("sa.block0.b_q");
  block.b_k = store.all().at("sa.block0.b_k");
  block.b_v = store.all().at("sa.block0.b_v");
  block.b_o = store.all().at("sa.block0.b_o");
  block.ln_gamma = store.all().at("sa.block0.ln_gamma");
  block.ln_beta = store.all().at("sa.block0.ln_beta");

  Tensor x = rnd({2, 4});
  Tensor got = enc.encode(x);
  Tensor want =
      multi_head_self_attend(ops::add(x, sinusoidal_positions(2, 4)), 2, block).output;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) CHECK(got.at(r, c) == want.at(r, c));

  CHECK_THROWS_AS(SelfAttnEncoder(store, "bad", 4, 3, 1), Error);
}

TEST_CASE("stacked self-attention applies blocks in order") {
  RngPool rng(43);
  ParamStore store(&rng);
  SelfAttnEncoder enc(store, "sa", 4, 2, 3);
  Tensor x = rnd({3, 4});
  Tensor h = ops::add(x, sinusoidal_positions(3, 4));
  for (int l = 0; l < 3; ++l) {
    std::string p = "sa.block" + std::to_string(l);
    MultiHeadParams b;
    b.w_q = store.all().at(p + ".w_q");
    b.w_k = store.all().at(p + ".w_k");
    b.w_v = store.all().at(p + ".w_v");
    b.w_o = store.all().at(p + ".w_o");
    b.b_q = store.all().at(p + ".b_q");
    b.b_k = store.all().at(p + ".b_k");
    b.b_v = store.all().at(p + ".b_v");
    b.b_o = store.all().at(p + ".b_o");
    b.ln_gamma = store.all().at(p + ".ln_gamma");
    b.ln_beta = store.all().at(p + ".ln_beta");
    h = multi_head_self_attend(h, 2, b).output;
  }
  Tensor got = enc.encode(x);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) CHECK(got.at(r, c) == h.at(r, c));
}

TEST_CASE("encoders are deterministic in evaluation mode") {
  RngPool rng(51);
  ParamStore store(&rng);
  BiGruEncoder enc(store, "utt", 4, 5, 2);
  DropoutSpec eval;
  std::vector<Tensor> in = {rnd({4}), rnd({4}), rnd({4})};
  EncoderOutput a = enc.encode(in, eval);
  EncoderOutput b = enc.encode(in, eval);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 5; ++i) CHECK(a.states.at(j, i) == b.states.at(j, i));
}

TEST_CASE("dropout between stacked layers is seeded and vanishes at evaluation") {
  RngPool rng(61);
  ParamStore store(&rng);
  GruStack stack(store, "s", 4, 4, 2);
  std::vector<Tensor> in = {rnd({4}), rnd({4})};

  DropoutSpec eval;
  RngPool d1(5), d2(5), d3(6);
  DropoutSpec train1{0.5, &d1, true}, train2{0.5, &d2, true}, train3{0.5, &d3, true};
  EncoderOutput a = stack.run(in, {}, train1);
  EncoderOutput b = stack.run(in, {}, train2);
  EncoderOutput c = stack.run(in, {}, train3);
  bool same_seed_same = true, diff_seed_diff = false;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 4; ++i) {
      if (a.states.at(j, i) != b.states.at(j, i)) same_seed_same = false;
      if (a.states.at(j, i) != c.states.at(j, i)) diff_seed_diff = true;
    }
  CHECK(same_seed_same);
  CHECK(diff_seed_diff);

  // with p set but training off, dropout is the identity
  RngPool d4(5);
  DropoutSpec off{0.5, &d4, false};
  EncoderOutput plain = stack.run(in, {}, eval);
  EncoderOutput offed = stack.run(in, {}, off);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 4; ++i) CHECK(plain.states.at(j, i) == offed.states.at(j, i));
}

TEST_CASE("end-to-end encode passes grad_check") {
  RngPool rng(71);
  ParamStore store(&rng);
  int d_in = 3, d_h = 4;
  BiGruEncoder utt(store, "utt", d_in, d_h, 1);
  GruStack ctx(store, "ctx", d_h, d_h, 1);
  DropoutSpec eval;

  // two utterances of three tokens each, rows of one input matrix
  double err = grad_check(
      [&](const Tensor& t) {
        std::vector<Tensor> reprs;
        for (int u = 0; u < 2; ++u) {
          std::vector<Tensor> toks;
          for (int j = 0; j < 3; ++j) toks.push_back(ops::row(t, u * 3 + j));
          reprs.push_back(utt.encode(toks, eval).final);
        }
        Tensor f = encode_context(reprs, ctx, eval).final;
        return ops::sum(ops::mul(f, f));
      },
      rnd({6, d_in}), 1e-5);
  CHECK(err < 1e-4);
}
