#pragma once

#include <string>
#include <vector>

#include "dialoglab/attention.hpp"
#include "dialoglab/params.hpp"
#include "dialoglab/tensor.hpp"

namespace dialoglab {

struct GruParams {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;

  static GruParams create(ParamStore& store, const std::string& prefix, int d_in, int d_h);
};

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br)
// hc = tanh(Wh x + Uh (r*h) + bh); h' = (1-z)*h + z*hc
Tensor gru_step(const Tensor& x, const Tensor& h, const GruParams& params);

struct EncoderOutput {
  Tensor states;  // [L x d]
  Tensor final;   // [d]
};

struct DropoutSpec {
  double p = 0.0;
  RngPool* rng = nullptr;
  bool training = false;
};

// Unidirectional multi-layer GRU sweep; dropout between stacked layers.
class GruStack {
 public:
  GruStack() = default;
  GruStack(ParamStore& store, const std::string& prefix, int d_in, int d_h, int layers);

  // inputs: sequence of [d_in] vectors; init: per-layer initial states (may be empty -> zeros)
  EncoderOutput run(const std::vector<Tensor>& inputs, const std::vector<Tensor>& init,
                    const DropoutSpec& dropout) const;
  std::vector<Tensor> run_steps(const std::vector<Tensor>& inputs, std::vector<Tensor>& states,
                                const DropoutSpec& dropout) const;

  int hidden() const { return d_h_; }
  int layers() const { return static_cast<int>(cells_.size()); }
  const std::vector<GruParams>& cells() const { return cells_; }

 private:
  std::vector<GruParams> cells_;
  int d_h_ = 0;
};

// Stacked bidirectional utterance encoder; per-step forward/backward states
// are concatenated and projected back to d_h.
class BiGruEncoder {
 public:
  BiGruEncoder() = default;
  BiGruEncoder(ParamStore& store, const std::string& prefix, int d_in, int d_h, int layers);

  EncoderOutput encode(const std::vector<Tensor>& inputs, const DropoutSpec& dropout) const;

 private:
  GruStack forward_;
  GruStack backward_;
  Tensor w_proj_, b_proj_;
};

EncoderOutput encode_context(const std::vector<Tensor>& utterance_reprs, const GruStack& gru,
                             const DropoutSpec& dropout);

// Stack of multi-head self-attention blocks with sinusoidal positions at the input.
class SelfAttnEncoder {
 public:
  SelfAttnEncoder() = default;
  SelfAttnEncoder(ParamStore& store, const std::string& prefix, int d_model, int heads,
                  int layers);

  Tensor encode(const Tensor& x) const;  // [m x d_model] -> [m x d_model]

  int heads() const { return heads_; }

 private:
  std::vector<MultiHeadParams> blocks_;
  int heads_ = 0;
};

}  // namespace dialoglab
