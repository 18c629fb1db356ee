#include "dialoglab/attention.hpp"

#include <cmath>

namespace dialoglab {

AttentionOutput additive_attend(const Tensor& query, const Tensor& keys,
                                const Tensor& values, const AdditiveAttentionParams& params) {
  if (keys.ndim() != 2 || keys.dim(0) < 1)
    throw dimension_error("additive_attend requires at least one key");
  if (values.ndim() != 2 || values.dim(0) != keys.dim(0))
    throw dimension_error("additive_attend: key/value count mismatch");
  int k = keys.dim(0);
  Tensor wq = ops::matvec(params.w_query, query);  // [d_a]
  std::vector<Tensor> scores;
  scores.reserve(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) {
    Tensor wk = ops::matvec(params.w_key, ops::row(keys, j));
    scores.push_back(ops::dot(params.v, ops::tanh_(ops::add(wq, wk))));
  }
  Tensor e = ops::concat(scores);
  Tensor w = ops::softmax(e);
  // c = sum_k w_k v_k  ==  w^T V
  Tensor context = ops::matvec(ops::transpose(values), w);
  return {w, context};
}

HierarchicalOutput hierarchical_context(const Tensor& decoder_state,
                                        const std::vector<Tensor>& word_states,
                                        const ContextEncoderFn& context_encoder,
                                        const AdditiveAttentionParams& word_params,
                                        const AdditiveAttentionParams& utterance_params) {
  if (word_states.empty()) throw dimension_error("hierarchical_context with no utterances");
  HierarchicalOutput out;
  std::vector<Tensor> utterance_vectors;
  for (const Tensor& states : word_states) {
    AttentionOutput word = additive_attend(decoder_state, states, states, word_params);
    out.word_weights.push_back(word.weights);
    utterance_vectors.push_back(word.context);
  }
  Tensor encoded = context_encoder(utterance_vectors);  // [m x d]
  AttentionOutput utt = additive_attend(decoder_state, encoded, encoded, utterance_params);
  out.utterance_weights = utt.weights;
  out.context = utt.context;
  return out;
}

namespace {

// cos(a, b) with the zero-norm convention: either norm 0 -> constant 0.
Tensor safe_cosine(const Tensor& a, const Tensor& b) {
  double na = 0.0, nb = 0.0;
  for (double v : a.data()) na += v * v;
  for (double v : b.data()) nb += v * v;
  if (na == 0.0 || nb == 0.0) return Tensor::scalar(0.0);
  Tensor denom = ops::sqrt_(ops::mul(ops::dot(a, a), ops::dot(b, b)));
  return ops::div(ops::dot(a, b), denom);
}

}  // namespace

Tensor wseq_weights(const Tensor& query_repr, const std::vector<Tensor>& utterance_reprs) {
  std::vector<Tensor> raw;
  raw.reserve(utterance_reprs.size() + 1);
  for (const Tensor& u : utterance_reprs) raw.push_back(ops::relu(safe_cosine(query_repr, u)));
  raw.push_back(Tensor::scalar(1.0));  // the query weights itself fully
  Tensor r = ops::concat(raw);
  double total = 0.0;
  for (double v : r.data()) total += v;
  if (total == 0.0)
    return Tensor::full({static_cast<int>(r.size())}, 1.0 / static_cast<double>(r.size()));
  Tensor s = ops::sum(r);
  std::vector<Tensor> rep(r.size(), s);
  return ops::div(r, ops::concat(rep));
}

DshredOutput dshred_context(const Tensor& decoder_state, const Tensor& context_states,
                            const Tensor& last_utterance_state, const DshredParams& params) {
  AttentionOutput dynamic =
      additive_attend(decoder_state, context_states, context_states, params.dynamic_attn);
  AttentionOutput static_ =
      additive_attend(last_utterance_state, context_states, context_states, params.static_attn);
  Tensor fused = ops::concat({dynamic.context, static_.context});
  Tensor context = ops::add(ops::matvec(params.w_fuse, fused), params.b_fuse);
  return {dynamic.weights, static_.weights, context};
}

Tensor sinusoidal_positions(int n, int d_model) {
  Tensor pos = Tensor::zeros({n, d_model});
  for (int p = 0; p < n; ++p)
    for (int i = 0; i < d_model; ++i) {
      double angle = p / std::pow(10000.0, 2.0 * (i / 2) / d_model);
      pos.at(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pos;
}

MultiHeadOutput multi_head_self_attend(const Tensor& x, int heads, const MultiHeadParams& params) {
  if (x.ndim() != 2) throw dimension_error("multi_head_self_attend requires [n x d_model]");
  int d_model = x.dim(1);
  if (heads < 1 || d_model % heads != 0)
    throw config_error("d_model " + std::to_string(d_model) + " not divisible by " +
                       std::to_string(heads) + " heads");
  int dk = d_model / heads;
  Tensor q = ops::add_rowvec(ops::matmul(x, params.w_q), params.b_q);
  Tensor k = ops::add_rowvec(ops::matmul(x, params.w_k), params.b_k);
  Tensor v = ops::add_rowvec(ops::matmul(x, params.w_v), params.b_v);

  MultiHeadOutput out;
  std::vector<Tensor> head_contexts;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = ops::col_slice(q, h * dk, (h + 1) * dk);
    Tensor kh = ops::col_slice(k, h * dk, (h + 1) * dk);
    Tensor vh = ops::col_slice(v, h * dk, (h + 1) * dk);
    Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), 1.0 / std::sqrt(dk));
    Tensor weights = ops::softmax_rows(scores);
    out.head_weights.push_back(weights);
    head_contexts.push_back(ops::matmul(weights, vh));
  }
  Tensor merged = ops::concat_cols(head_contexts);
  Tensor projected = ops::add_rowvec(ops::matmul(merged, params.w_o), params.b_o);
  Tensor residual = ops::add(x, projected);
  out.output = ops::layer_norm_rows(residual, params.ln_gamma, params.ln_beta);
  return out;
}

}  // namespace dialoglab
