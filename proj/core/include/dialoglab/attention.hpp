#pragma once

#include <functional>
#include <vector>

#include "dialoglab/tensor.hpp"

namespace dialoglab {

struct AttentionOutput {
  Tensor weights;  // probability vector over keys
  Tensor context;  // weighted sum of values
};

// e_j = v . tanh(Wq q + Wk k_j)
struct AdditiveAttentionParams {
  Tensor w_query;  // [d_a x d_q]
  Tensor w_key;    // [d_a x d_k]
  Tensor v;        // [d_a]
};

struct MultiHeadParams {
  Tensor w_q, w_k, w_v, w_o;  // [d_model x d_model]
  Tensor b_q, b_k, b_v, b_o;  // [d_model]
  Tensor ln_gamma, ln_beta;   // [d_model]
};

AttentionOutput additive_attend(const Tensor& query, const Tensor& keys,
                                const Tensor& values, const AdditiveAttentionParams& params);

// Runs m context vectors {c_ij} through the caller's context encoder and
// attends over its states {H_ij}.
using ContextEncoderFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct HierarchicalOutput {
  std::vector<Tensor> word_weights;  // one weight vector per utterance
  Tensor utterance_weights;
  Tensor context;  // final c_i
};

HierarchicalOutput hierarchical_context(const Tensor& decoder_state,
                                        const std::vector<Tensor>& word_states,
                                        const ContextEncoderFn& context_encoder,
                                        const AdditiveAttentionParams& word_params,
                                        const AdditiveAttentionParams& utterance_params);

// Cosine relevance of each utterance to the query plus a self-weight of 1
// for the query, clamped at 0 and sum-normalized (uniform fallback).
// Returns m+1 weights, the query's weight last.
Tensor wseq_weights(const Tensor& query_repr, const std::vector<Tensor>& utterance_reprs);

struct DshredParams {
  AdditiveAttentionParams dynamic_attn;
  AdditiveAttentionParams static_attn;
  Tensor w_fuse;  // [d x 2d]
  Tensor b_fuse;  // [d]
};

struct DshredOutput {
  Tensor dynamic_weights;
  Tensor static_weights;
  Tensor context;
};

DshredOutput dshred_context(const Tensor& decoder_state, const Tensor& context_states,
                            const Tensor& last_utterance_state, const DshredParams& params);

Tensor sinusoidal_positions(int n, int d_model);

struct MultiHeadOutput {
  Tensor output;                     // [n x d_model]
  std::vector<Tensor> head_weights;  // per-head [n x n] attention rows
};

// Scaled dot-product self-attention with residual + layer norm. Position
// encodings are the caller's concern (added once at the stack input).
MultiHeadOutput multi_head_self_attend(const Tensor& x, int heads, const MultiHeadParams& params);

}  // namespace dialoglab
