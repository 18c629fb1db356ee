#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "dialoglab/attention.hpp"
#include "dialoglab/encoders.hpp"
#include "dialoglab/model.hpp"
#include "dialoglab/params.hpp"
#include "dialoglab/tensor.hpp"

using namespace dialoglab;

namespace {

Tensor rnd_vec(RngPool& rng, int d) {
  Tensor t = Tensor::zeros({d}, false);
  for (double& v : t.data()) v = rng.uniform("bench", -1.0, 1.0);
  return t;
}

Tensor rnd_mat(RngPool& rng, int r, int c) {
  Tensor t = Tensor::zeros({r, c}, false);
  for (double& v : t.data()) v = rng.uniform("bench", -1.0, 1.0);
  return t;
}

void bm_gru_step(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  RngPool rng(1);
  ParamStore store(&rng);
  GruParams p = GruParams::create(store, "g", d, d);
  Tensor x = rnd_vec(rng, d), h = rnd_vec(rng, d);
  for (auto _ : state) benchmark::DoNotOptimize(gru_step(x, h, p));
}
BENCHMARK(bm_gru_step)->Arg(128)->Arg(256)->Arg(512);

void bm_bigru_utterance(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  RngPool rng(2);
  ParamStore store(&rng);
  BiGruEncoder enc(store, "utt", d, d, 2);
  std::vector<Tensor> inputs;
  for (int i = 0; i < 20; ++i) inputs.push_back(rnd_vec(rng, d));
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(inputs, {}));
}
BENCHMARK(bm_bigru_utterance)->Arg(128)->Arg(256);

void bm_additive_attention(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  RngPool rng(3);
  ParamStore store(&rng);
  AdditiveAttentionParams p;
  p.w_query = store.param("a.w_query", {d, d});
  p.w_key = store.param("a.w_key", {d, d});
  p.v = store.param("a.v", {d});
  Tensor q = rnd_vec(rng, d);
  Tensor keys = rnd_mat(rng, 10, d);
  for (auto _ : state) benchmark::DoNotOptimize(additive_attend(q, keys, keys, p));
}
BENCHMARK(bm_additive_attention)->Arg(128)->Arg(256)->Arg(512);

void bm_multi_head_self_attention(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  RngPool rng(4);
  ParamStore store(&rng);
  MultiHeadParams p;
  p.w_q = store.param("m.w_q", {d, d});
  p.w_k = store.param("m.w_k", {d, d});
  p.w_v = store.param("m.w_v", {d, d});
  p.w_o = store.param("m.w_o", {d, d});
  p.b_q = store.const_param("m.b_q", {d}, 0.0);
  p.b_k = store.const_param("m.b_k", {d}, 0.0);
  p.b_v = store.const_param("m.b_v", {d}, 0.0);
  p.b_o = store.const_param("m.b_o", {d}, 0.0);
  p.ln_gamma = store.const_param("m.ln_gamma", {d}, 1.0);
  p.ln_beta = store.const_param("m.ln_beta", {d}, 0.0);
  Tensor x = rnd_mat(rng, 12, d);
  for (auto _ : state) benchmark::DoNotOptimize(multi_head_self_attend(x, 8, p));
}
BENCHMARK(bm_multi_head_self_attention)->Arg(128)->Arg(256)->Arg(512);

Dialog bench_dialog() {
  Dialog d;
  for (int t = 0; t < 3; ++t) {
    Utterance u;
    for (int i = 0; i < 8; ++i) u.tokens.push_back("w" + std::to_string(5 + (t * 8 + i) % 40));
    d.context.push_back(u);
  }
  for (int i = 0; i < 6; ++i) d.response.tokens.push_back("w" + std::to_string(10 + i));
  return d;
}

Vocabulary bench_vocab() {
  Vocabulary v;
  for (int i = Vocabulary::kNumReserved; i < 50; ++i) v.add("w" + std::to_string(i));
  return v;
}

ModelConfig bench_config(Architecture arch, int vocab_size) {
  ModelConfig c = ModelConfig::for_architecture(arch);
  c.hidden = 128;
  c.embed = 64;
  c.d_model = 128;
  c.dropout = 0.0;
  c.latent_dim = 32;
  c.vocab_size = vocab_size;
  return c;
}

void bm_model_forward(benchmark::State& state, Architecture arch) {
  Vocabulary vocab = bench_vocab();
  DialogModel model(bench_config(arch, vocab.size()), 5);
  Dialog d = bench_dialog();
  std::vector<int> teacher = vocab.encode(d.response.tokens);
  teacher.push_back(Vocabulary::kEos);
  for (auto _ : state)
    benchmark::DoNotOptimize(model.forward(d, vocab, teacher, /*training=*/false));
}
BENCHMARK_CAPTURE(bm_model_forward, hred, Architecture::Hred);
BENCHMARK_CAPTURE(bm_model_forward, hran, Architecture::Hran);
BENCHMARK_CAPTURE(bm_model_forward, recosa_wa, Architecture::ReCoSaWA);

void bm_model_train_step(benchmark::State& state) {
  Vocabulary vocab = bench_vocab();
  DialogModel model(bench_config(Architecture::Hred, vocab.size()), 6);
  Dialog d = bench_dialog();
  std::vector<int> teacher = vocab.encode(d.response.tokens);
  teacher.push_back(Vocabulary::kEos);
  for (auto _ : state) {
    model.params().zero_grads();
    GradTape tape;
    ForwardResult fr = model.forward(d, vocab, teacher, /*training=*/true);
    Tensor l = loss(fr.logits, teacher, Vocabulary::kPad, fr.aux_loss, 0.0);
    tape.backward(l);
    benchmark::DoNotOptimize(l.item());
  }
}
BENCHMARK(bm_model_train_step);

}  // namespace

BENCHMARK_MAIN();
