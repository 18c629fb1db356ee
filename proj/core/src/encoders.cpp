#include "dialoglab/encoders.hpp"

#include <algorithm>

namespace dialoglab {

GruParams GruParams::create(ParamStore& store, const std::string& prefix, int d_in, int d_h) {
  GruParams p;
  p.w_z = store.param(prefix + ".w_z", {d_h, d_in});
  p.u_z = store.param(prefix + ".u_z", {d_h, d_h});
  p.b_z = store.const_param(prefix + ".b_z", {d_h}, 0.0);
  p.w_r = store.param(prefix + ".w_r", {d_h, d_in});
  p.u_r = store.param(prefix + ".u_r", {d_h, d_h});
  p.b_r = store.const_param(prefix + ".b_r", {d_h}, 0.0);
  p.w_h = store.param(prefix + ".w_h", {d_h, d_in});
  p.u_h = store.param(prefix + ".u_h", {d_h, d_h});
  p.b_h = store.const_param(prefix + ".b_h", {d_h}, 0.0);
  return p;
}

Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& params) {
  if (x.ndim() != 1 || h.ndim() != 1 || params.w_z.dim(1) != x.dim(0) ||
      params.u_z.dim(1) != h.dim(0))
    throw dimension_error("gru_step input/state shape mismatch");
  using namespace ops;
  Tensor z = sigmoid(add(add(matvec(params.w_z, x), matvec(params.u_z, h)), params.b_z));
  Tensor r = sigmoid(add(add(matvec(params.w_r, x), matvec(params.u_r, h)), params.b_r));
  Tensor hc = tanh_(add(add(matvec(params.w_h, x), matvec(params.u_h, mul(r, h))), params.b_h));
  Tensor keep = affine(z, -1.0, 1.0);  // 1 - z
  return add(mul(keep, h), mul(z, hc));
}

GruStack::GruStack(ParamStore& store, const std::string& prefix, int d_in, int d_h, int layers) {
  d_h_ = d_h;
  for (int l = 0; l < layers; ++l) {
    int in = (l == 0) ? d_in : d_h;
    cells_.push_back(GruParams::create(store, prefix + ".l" + std::to_string(l), in, d_h));
  }
}

std::vector<Tensor> GruStack::run_steps(const std::vector<Tensor>& inputs,
                                        std::vector<Tensor>& states,
                                        const DropoutSpec& dropout) const {
  std::vector<Tensor> top;
  top.reserve(inputs.size());
  for (const Tensor& input : inputs) {
    Tensor x = input;
    for (size_t l = 0; l < cells_.size(); ++l) {
      if (l > 0 && dropout.p > 0.0 && dropout.rng)
        x = ops::dropout(x, dropout.p, *dropout.rng, "dropout.stack", dropout.training);
      states[l] = gru_step(x, states[l], cells_[l]);
      x = states[l];
    }
    top.push_back(x);
  }
  return top;
}

EncoderOutput GruStack::run(const std::vector<Tensor>& inputs, const std::vector<Tensor>& init,
                            const DropoutSpec& dropout) const {
  if (inputs.empty()) throw validation_error("GruStack: empty input sequence");
  std::vector<Tensor> states = init;
  if (states.empty())
    for (size_t l = 0; l < cells_.size(); ++l) states.push_back(Tensor::zeros({d_h_}));
  std::vector<Tensor> top = run_steps(inputs, states, dropout);
  EncoderOutput out;
  out.states = ops::stack_rows(top);
  out.final = top.back();
  return out;
}

BiGruEncoder::BiGruEncoder(ParamStore& store, const std::string& prefix, int d_in, int d_h,
                           int layers)
    : forward_(store, prefix + ".fwd", d_in, d_h, layers),
      backward_(store, prefix + ".bwd", d_in, d_h, layers) {
  w_proj_ = store.param(prefix + ".w_proj", {d_h, 2 * d_h});
  b_proj_ = store.const_param(prefix + ".b_proj", {d_h}, 0.0);
}

EncoderOutput BiGruEncoder::encode(const std::vector<Tensor>& inputs,
                                   const DropoutSpec& dropout) const {
  if (inputs.empty()) throw validation_error("encode_utterance: empty token sequence");
  EncoderOutput fwd = forward_.run(inputs, {}, dropout);
  std::vector<Tensor> reversed(inputs.rbegin(), inputs.rend());
  EncoderOutput bwd = backward_.run(reversed, {}, dropout);

  int n = static_cast<int>(inputs.size());
  std::vector<Tensor> projected;
  projected.reserve(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    Tensor both = ops::concat({ops::row(fwd.states, j), ops::row(bwd.states, n - 1 - j)});
    projected.push_back(ops::add(ops::matvec(w_proj_, both), b_proj_));
  }
  EncoderOutput out;
  out.states = ops::stack_rows(projected);
  // Final = projection of the two directional finals.
  out.final = ops::add(ops::matvec(w_proj_, ops::concat({fwd.final, bwd.final})), b_proj_);
  return out;
}

EncoderOutput encode_context(const std::vector<Tensor>& utterance_reprs, const GruStack& gru,
                             const DropoutSpec& dropout) {
  if (utterance_reprs.empty()) throw validation_error("encode_context: no utterances");
  return gru.run(utterance_reprs, {}, dropout);
}

SelfAttnEncoder::SelfAttnEncoder(ParamStore& store, const std::string& prefix, int d_model,
                                 int heads, int layers)
    : heads_(heads) {
  if (heads < 1 || d_model % heads != 0)
    throw config_error("d_model " + std::to_string(d_model) + " not divisible by " +
                       std::to_string(heads) + " heads");
  for (int l = 0; l < layers; ++l) {
    std::string p = prefix + ".block" + std::to_string(l);
    MultiHeadParams b;
    b.w_q = store.param(p + ".w_q", {d_model, d_model});
    b.w_k = store.param(p + ".w_k", {d_model, d_model});
    b.w_v = store.param(p + ".w_v", {d_model, d_model});
    b.w_o = store.param(p + ".w_o", {d_model, d_model});
    b.b_q = store.const_param(p + ".b_q", {d_model}, 0.0);
    b.b_k = store.const_param(p + ".b_k", {d_model}, 0.0);
    b.b_v = store.const_param(p + ".b_v", {d_model}, 0.0);
    b.b_o = store.const_param(p + ".b_o", {d_model}, 0.0);
    b.ln_gamma = store.const_param(p + ".ln_gamma", {d_model}, 1.0);
    b.ln_beta = store.const_param(p + ".ln_beta", {d_model}, 0.0);
    blocks_.push_back(b);
  }
}

Tensor SelfAttnEncoder::encode(const Tensor& x) const {
  Tensor h = ops::add(x, sinusoidal_positions(x.dim(0), x.dim(1)));
  for (const MultiHeadParams& block : blocks_)
    h = multi_head_self_attend(h, heads_, block).output;
  return h;
}

}  // namespace dialoglab
