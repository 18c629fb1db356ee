#include "dialoglab/model.hpp"

#include <algorithm>
#include <cmath>

namespace dialoglab {

const std::vector<std::pair<Architecture, std::string>>& architecture_names() {
  static const std::vector<std::pair<Architecture, std::string>> names = {
      {Architecture::Seq2SeqAttn, "seq2seq_attn"},
      {Architecture::Seq2SeqTrs, "seq2seq_trs"},
      {Architecture::Hred, "hred"},
      {Architecture::WSeq, "wseq"},
      {Architecture::Vhred, "vhred"},
      {Architecture::Dshred, "dshred"},
      {Architecture::ReCoSa, "recosa"},
      {Architecture::Hran, "hran"},
      {Architecture::HredWA, "hred_wa"},
      {Architecture::WSeqWA, "wseq_wa"},
      {Architecture::DshredWA, "dshred_wa"},
      {Architecture::ReCoSaWA, "recosa_wa"},
  };
  return names;
}

std::string to_string(Architecture arch) {
  for (const auto& [a, n] : architecture_names())
    if (a == arch) return n;
  throw config_error("unknown architecture enum value");
}

Architecture architecture_from_string(const std::string& name) {
  for (const auto& [a, n] : architecture_names())
    if (n == name) return a;
  std::string valid;
  for (const auto& [a, n] : architecture_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw config_error("unknown architecture '" + name + "'; valid: " + valid);
}

bool is_hierarchical(Architecture arch) {
  return arch != Architecture::Seq2SeqAttn && arch != Architecture::Seq2SeqTrs;
}

bool has_word_attention(Architecture arch) {
  switch (arch) {
    case Architecture::Hran:
    case Architecture::HredWA:
    case Architecture::WSeqWA:
    case Architecture::DshredWA:
    case Architecture::ReCoSaWA:
      return true;
    default:
      return false;
  }
}

void ModelConfig::validate() const {
  if (architecture == Architecture::Vhred && word_attention)
    throw config_error("VHRED admits no word-level attention (latent variable mechanism)");
  if (word_attention && !is_hierarchical(architecture))
    throw config_error("word-level attention needs a turn-structured context; " +
                       to_string(architecture) + " flattens it");
  bool needs_selfattn = architecture == Architecture::Seq2SeqTrs ||
                        architecture == Architecture::ReCoSa ||
                        architecture == Architecture::ReCoSaWA;
  if (needs_selfattn && d_model != hidden)
    throw config_error("d_model must equal hidden when self-attention feeds the GRU decoder");
  if (needs_selfattn && d_model % heads != 0)
    throw config_error("d_model not divisible by heads");
  if (hidden < 1 || embed < 1 || vocab_size <= Vocabulary::kNumReserved)
    throw config_error("invalid model dimensions");
  if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0,1)");
  if (max_decode_len < 1) throw config_error("max_decode_len must be >= 1");
}

ModelConfig ModelConfig::for_architecture(Architecture arch) {
  ModelConfig cfg;
  cfg.architecture = arch;
  cfg.word_attention = has_word_attention(arch);
  return cfg;
}

namespace {

Architecture base_family(Architecture arch) {
  switch (arch) {
    case Architecture::Hran:
    case Architecture::HredWA:
      return Architecture::Hred;
    case Architecture::WSeqWA:
      return Architecture::WSeq;
    case Architecture::DshredWA:
      return Architecture::Dshred;
    case Architecture::ReCoSaWA:
      return Architecture::ReCoSa;
    default:
      return arch;
  }
}

std::vector<Tensor> matrix_rows(const Tensor& m) {
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(m.dim(0)));
  for (int i = 0; i < m.dim(0); ++i) rows.push_back(ops::row(m, i));
  return rows;
}

}  // namespace

DialogModel::DialogModel(const ModelConfig& config, uint64_t seed) : config_(config) {
  rng_ = std::make_unique<RngPool>(seed);
  store_ = std::make_unique<ParamStore>(rng_.get());
  ParamStore& s = *store_;
  int h = config_.hidden, e = config_.embed, v = config_.vocab_size;

  embed_enc_ = s.param("embed.enc", {v, e});
  embed_dec_ = s.param("embed.dec", {v, e});
  utterance_encoder_ = BiGruEncoder(s, "utt_enc", e, h, config_.utterance_layers);
  decoder_ = GruStack(s, "decoder", e + h, h, config_.decoder_layers);

  word_attn_.w_query = s.param("word_attn.w_query", {h, h});
  word_attn_.w_key = s.param("word_attn.w_key", {h, h});
  word_attn_.v = s.param("word_attn.v", {h});
  utterance_attn_.w_query = s.param("utt_attn.w_query", {h, h});
  utterance_attn_.w_key = s.param("utt_attn.w_key", {h, h});
  utterance_attn_.v = s.param("utt_attn.v", {h});

  Architecture family = base_family(config_.architecture);
  if (is_hierarchical(config_.architecture) && family != Architecture::ReCoSa &&
      family != Architecture::WSeq)
    context_encoder_ = GruStack(s, "ctx_enc", h, h, config_.context_layers);
  if (family == Architecture::ReCoSa || config_.architecture == Architecture::Seq2SeqTrs)
    selfattn_encoder_ = SelfAttnEncoder(s, "selfattn", config_.d_model, config_.heads,
                                        config_.transformer_layers);
  if (family == Architecture::Dshred) {
    dshred_.dynamic_attn.w_query = s.param("dshred.dyn.w_query", {h, h});
    dshred_.dynamic_attn.w_key = s.param("dshred.dyn.w_key", {h, h});
    dshred_.dynamic_attn.v = s.param("dshred.dyn.v", {h});
    dshred_.static_attn.w_query = s.param("dshred.sta.w_query", {h, h});
    dshred_.static_attn.w_key = s.param("dshred.sta.w_key", {h, h});
    dshred_.static_attn.v = s.param("dshred.sta.v", {h});
    dshred_.w_fuse = s.param("dshred.w_fuse", {h, 2 * h});
    dshred_.b_fuse = s.const_param("dshred.b_fuse", {h}, 0.0);
  }
  if (config_.architecture == Architecture::Vhred) {
    int l = config_.latent_dim;
    w_post_h_ = s.param("latent.w_post_h", {h, 2 * h});
    b_post_h_ = s.const_param("latent.b_post_h", {h}, 0.0);
    w_mu_ = s.param("latent.w_mu", {l, h});
    b_mu_ = s.const_param("latent.b_mu", {l}, 0.0);
    w_logvar_ = s.param("latent.w_logvar", {l, h});
    b_logvar_ = s.const_param("latent.b_logvar", {l}, 0.0);
    w_lat_ = s.param("latent.w_fuse", {h, h + l});
    b_lat_ = s.const_param("latent.b_fuse", {h}, 0.0);
  }
  for (int l = 0; l < config_.decoder_layers; ++l) {
    init_w_.push_back(s.param("dec_init.w" + std::to_string(l), {h, h}));
    init_b_.push_back(s.const_param("dec_init.b" + std::to_string(l), {h}, 0.0));
  }
  w_out_ = s.param("out.w", {v, h});
  b_out_ = s.const_param("out.b", {v}, 0.0);
}

struct DialogModel::Encoded {
  std::vector<Tensor> word_states;  // per utterance (hier) or unused (non-hier)
  std::vector<Tensor> reprs;        // plain utterance representations (hier)
  Tensor flat_states;               // non-hier attention keys
  Tensor init_base;
  DropoutSpec dropout;

  // Decode-loop state shared by teacher forcing and greedy generation.
  Tensor ctx_states;    // fixed keys / WSeq trace weights for the non-WA paths
  Tensor wseq_context;  // WSeq without WA: one mixture serves every step
  Tensor z;             // VHRED latent sample
  Tensor kl;            // VHRED KL term
  std::vector<Tensor> dec_states;
};

DialogModel::Encoded DialogModel::encode(const Dialog& dialog, const Vocabulary& vocab,
                                         bool training) const {
  if (dialog.context.empty()) throw validation_error("dialog has an empty context");
  Encoded enc;
  enc.kl = Tensor::scalar(0.0);
  enc.dropout = DropoutSpec{config_.dropout, rng_.get(), training};
  Architecture arch = config_.architecture;
  if (!is_hierarchical(arch)) {
    std::vector<int> ids = flatten(dialog, vocab);
    Tensor embedded = ops::embedding_lookup(embed_enc_, ids);
    if (config_.dropout > 0.0)
      embedded = ops::dropout(embedded, config_.dropout, *rng_, "dropout.embed", training);
    EncoderOutput out = utterance_encoder_.encode(matrix_rows(embedded), enc.dropout);
    if (arch == Architecture::Seq2SeqTrs) {
      enc.flat_states = selfattn_encoder_.encode(out.states);
      enc.init_base = ops::row(enc.flat_states, enc.flat_states.dim(0) - 1);
    } else {
      enc.flat_states = out.states;
      enc.init_base = out.final;
    }
    return enc;
  }

  for (const Utterance& u : dialog.context) {
    std::vector<int> ids = vocab.encode(u.tokens);
    Tensor embedded = ops::embedding_lookup(embed_enc_, ids);
    if (config_.dropout > 0.0)
      embedded = ops::dropout(embedded, config_.dropout, *rng_, "dropout.embed", training);
    EncoderOutput out = utterance_encoder_.encode(matrix_rows(embedded), enc.dropout);
    enc.word_states.push_back(out.states);
    enc.reprs.push_back(out.final);
  }

  switch (base_family(arch)) {
    case Architecture::Hred:
    case Architecture::Vhred:
    case Architecture::Dshred:
      enc.init_base = context_encoder_.run(enc.reprs, {}, enc.dropout).final;
      break;
    case Architecture::WSeq:
      enc.init_base = enc.reprs.back();
      break;
    case Architecture::ReCoSa: {
      Tensor encoded = selfattn_encoder_.encode(ops::stack_rows(enc.reprs));
      enc.init_base = ops::row(encoded, encoded.dim(0) - 1);
      break;
    }
    default:
      throw config_error("unexpected architecture family");
  }
  return enc;
}

std::vector<Tensor> DialogModel::decoder_init(const Encoded& enc) const {
  std::vector<Tensor> states;
  for (int l = 0; l < config_.decoder_layers; ++l)
    states.push_back(ops::tanh_(
        ops::add(ops::matvec(init_w_[static_cast<size_t>(l)], enc.init_base),
                 init_b_[static_cast<size_t>(l)])));
  return states;
}

void DialogModel::prepare_decode(Encoded& enc, const Vocabulary& vocab,
                                 const std::vector<int>* posterior_response, bool training) {
  Architecture arch = config_.architecture;
  Architecture family = base_family(arch);
  bool wa = config_.word_attention;

  if (arch == Architecture::Vhred) {
    if (posterior_response) {
      Tensor resp_emb = ops::embedding_lookup(embed_enc_, *posterior_response);
      Tensor resp_repr = utterance_encoder_.encode(matrix_rows(resp_emb), enc.dropout).final;
      Tensor hpost = ops::tanh_(ops::add(
          ops::matvec(w_post_h_, ops::concat({enc.init_base, resp_repr})), b_post_h_));
      Tensor mu = ops::add(ops::matvec(w_mu_, hpost), b_mu_);
      Tensor logvar = ops::add(ops::matvec(w_logvar_, hpost), b_logvar_);
      Tensor eps = Tensor::zeros({config_.latent_dim});
      for (double& e : eps.data()) e = rng_->normal("latent");
      Tensor sigma = ops::exp_(ops::scale(logvar, 0.5));
      enc.z = ops::add(mu, ops::mul(sigma, eps));
      // KL(N(mu, sigma^2) || N(0, I)) = 0.5 sum(exp(lv) + mu^2 - 1 - lv)
      Tensor inner = ops::sub(ops::add(ops::exp_(logvar), ops::mul(mu, mu)),
                              ops::affine(logvar, 1.0, 1.0));
      enc.kl = ops::scale(ops::sum(inner), 0.5);
    } else {
      // Generation draws from the prior N(0, I).
      Tensor eps = Tensor::zeros({config_.latent_dim});
      for (double& e : eps.data()) e = rng_->normal("latent");
      enc.z = eps;
      enc.kl = Tensor::scalar(0.0);
    }
  }

  if (!is_hierarchical(arch)) {
    enc.ctx_states = enc.flat_states;
  } else if (!wa) {
    switch (family) {
      case Architecture::Hred:
      case Architecture::Vhred:
      case Architecture::Dshred:
        enc.ctx_states = context_encoder_.run(enc.reprs, {}, enc.dropout).states;
        break;
      case Architecture::WSeq: {
        std::vector<Tensor> others(enc.reprs.begin(), enc.reprs.end() - 1);
        Tensor w = wseq_weights(enc.reprs.back(), others);
        std::vector<Tensor> values = others;
        values.push_back(enc.reprs.back());
        enc.wseq_context = ops::matvec(ops::transpose(ops::stack_rows(values)), w);
        enc.ctx_states = w;
        break;
      }
      case Architecture::ReCoSa:
        enc.ctx_states = selfattn_encoder_.encode(ops::stack_rows(enc.reprs));
        break;
      default:
        break;
    }
  }
  enc.dec_states = decoder_init(enc);
  (void)vocab;
  (void)training;
}

Tensor DialogModel::context_vector(Encoded& enc, const Tensor& s, StepAttention& trace) {
  Architecture arch = config_.architecture;
  Architecture family = base_family(arch);
  bool wa = config_.word_attention;

  if (!is_hierarchical(arch)) {
    AttentionOutput att = additive_attend(s, enc.ctx_states, enc.ctx_states, utterance_attn_);
    trace.utterance_weights = att.weights.data();
    return att.context;
  }
  std::vector<Tensor> reprs;
  if (wa) {
    for (const Tensor& states : enc.word_states) {
      AttentionOutput word = additive_attend(s, states, states, word_attn_);
      trace.word_weights.push_back(word.weights.data());
      reprs.push_back(word.context);
    }
  } else {
    reprs = enc.reprs;
  }
  switch (family) {
    case Architecture::Hred:
    case Architecture::Vhred: {
      Tensor states = wa ? context_encoder_.run(reprs, {}, enc.dropout).states : enc.ctx_states;
      AttentionOutput att = additive_attend(s, states, states, utterance_attn_);
      trace.utterance_weights = att.weights.data();
      return att.context;
    }
    case Architecture::WSeq: {
      if (!wa) {
        trace.utterance_weights = enc.ctx_states.data();
        return enc.wseq_context;
      }
      std::vector<Tensor> others(reprs.begin(), reprs.end() - 1);
      Tensor w = wseq_weights(reprs.back(), others);
      trace.utterance_weights = w.data();
      std::vector<Tensor> values = others;
      values.push_back(reprs.back());
      return ops::matvec(ops::transpose(ops::stack_rows(values)), w);
    }
    case Architecture::Dshred: {
      Tensor states = wa ? context_encoder_.run(reprs, {}, enc.dropout).states : enc.ctx_states;
      DshredOutput out = dshred_context(s, states, reprs.back(), dshred_);
      trace.utterance_weights = out.dynamic_weights.data();
      return out.context;
    }
    case Architecture::ReCoSa: {
      Tensor states = wa ? selfattn_encoder_.encode(ops::stack_rows(reprs)) : enc.ctx_states;
      AttentionOutput att = additive_attend(s, states, states, utterance_attn_);
      trace.utterance_weights = att.weights.data();
      return att.context;
    }
    default:
      throw config_error("unexpected architecture family");
  }
}

Tensor DialogModel::decode_step(Encoded& enc, int prev_token, bool training,
                                StepAttention& trace) {
  Tensor c = context_vector(enc, enc.dec_states.back(), trace);
  if (config_.architecture == Architecture::Vhred)
    c = ops::tanh_(ops::add(ops::matvec(w_lat_, ops::concat({c, enc.z})), b_lat_));
  Tensor emb = ops::row(ops::embedding_lookup(embed_dec_, {prev_token}), 0);
  if (config_.dropout > 0.0)
    emb = ops::dropout(emb, config_.dropout, *rng_, "dropout.embed", training);
  Tensor x = ops::concat({emb, c});
  Tensor top = decoder_.run_steps({x}, enc.dec_states, enc.dropout).back();
  return ops::add(ops::matvec(w_out_, top), b_out_);
}

ForwardResult DialogModel::forward(const Dialog& dialog, const Vocabulary& vocab,
                                   const std::vector<int>& teacher_tokens, bool training) {
  if (teacher_tokens.empty()) throw validation_error("forward: empty teacher sequence");
  Encoded enc = encode(dialog, vocab, training);
  prepare_decode(enc, vocab, &teacher_tokens, training);

  ForwardResult result;
  std::vector<Tensor> step_logits;
  int prev_token = Vocabulary::kSos;
  for (size_t t = 0; t < teacher_tokens.size(); ++t) {
    StepAttention trace;
    step_logits.push_back(decode_step(enc, prev_token, training, trace));
    result.attention.push_back(std::move(trace));
    prev_token = teacher_tokens[t];
  }
  result.logits = ops::stack_rows(step_logits);
  result.aux_loss = enc.kl;
  return result;
}

DecodeTrace DialogModel::generate(const Dialog& dialog, const Vocabulary& vocab, int max_len) {
  if (max_len < 1) throw config_error("max_len must be >= 1");
  Encoded enc = encode(dialog, vocab, /*training=*/false);
  prepare_decode(enc, vocab, nullptr, /*training=*/false);

  DecodeTrace out;
  int prev_token = Vocabulary::kSos;
  for (int step = 0; step < max_len; ++step) {
    StepAttention trace;
    Tensor logits = decode_step(enc, prev_token, /*training=*/false, trace);
    int best = 0;
    for (int i = 1; i < logits.dim(0); ++i)
      if (logits.at(i) > logits.at(best)) best = i;  // ties keep the lowest id
    Tensor probs = ops::softmax(logits);
    out.tokens.push_back(best);
    out.log_probs.push_back(std::log(std::max(probs.at(best), 1e-300)));
    out.attention.push_back(std::move(trace));
    prev_token = best;
    if (best == Vocabulary::kEos) break;
  }
  return out;
}

Tensor loss(const Tensor& logits, const std::vector<int>& targets, int pad_id,
            const Tensor& kl_term, double kl_weight) {
  Tensor ce = ops::cross_entropy_mean(logits, targets, pad_id);
  if (kl_weight == 0.0) return ce;
  return ops::add(ce, ops::scale(kl_term, kl_weight));
}

double model_grad_check(DialogModel& model, const Dialog& dialog, const Vocabulary& vocab,
                        const std::vector<int>& teacher, int samples_per_param,
                        double h, uint64_t seed) {
  auto snap = model.rng().snapshot();
  auto eval = [&]() {
    model.rng().restore(snap);
    ForwardResult fr = model.forward(dialog, vocab, teacher, /*training=*/false);
    return loss(fr.logits, teacher, Vocabulary::kPad, fr.aux_loss, 1.0).item();
  };

  model.params().zero_grads();
  {
    GradTape tape;
    model.rng().restore(snap);
    ForwardResult fr = model.forward(dialog, vocab, teacher, /*training=*/false);
    Tensor l = loss(fr.logits, teacher, Vocabulary::kPad, fr.aux_loss, 1.0);
    tape.backward(l);
  }

  std::mt19937_64 pick(splitmix64(seed ^ fnv1a("model_grad_check")));
  double worst = 0.0;
  for (auto& [name, t] : model.params().all()) {
    size_t n = t.size();
    size_t samples = std::min(static_cast<size_t>(samples_per_param), n);
    for (size_t s = 0; s < samples; ++s) {
      size_t i = (samples == n) ? s : pick() % n;
      double orig = t.at(static_cast<int>(i));
      t.at(static_cast<int>(i)) = orig + h;
      double fp = eval();
      t.at(static_cast<int>(i)) = orig - h;
      double fm = eval();
      t.at(static_cast<int>(i)) = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = t.grad_at(static_cast<int>(i));
      // Floor the denominator above the finite-difference noise level
      // (~eps*|loss|/h), so near-zero gradients do not read as failures.
      double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
      worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
  }
  model.rng().restore(snap);
  return worst;
}

}  // namespace dialoglab
