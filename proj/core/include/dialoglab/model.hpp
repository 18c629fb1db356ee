#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dialoglab/attention.hpp"
#include "dialoglab/corpus.hpp"
#include "dialoglab/encoders.hpp"
#include "dialoglab/params.hpp"
#include "dialoglab/tensor.hpp"

namespace dialoglab {

enum class Architecture {
  Seq2SeqAttn,
  Seq2SeqTrs,
  Hred,
  WSeq,
  Vhred,
  Dshred,
  ReCoSa,
  Hran,
  HredWA,
  WSeqWA,
  DshredWA,
  ReCoSaWA,
};

const std::vector<std::pair<Architecture, std::string>>& architecture_names();
std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);
bool is_hierarchical(Architecture arch);
bool has_word_attention(Architecture arch);

struct ModelConfig {
  Architecture architecture = Architecture::Hred;
  bool word_attention = false;  // forced true for HRAN and the +WA variants
  int hidden = 512;
  int embed = 256;
  int utterance_layers = 2;
  bool bidirectional = true;
  int context_layers = 1;
  int decoder_layers = 2;
  int heads = 8;
  int d_model = 512;
  int transformer_layers = 3;
  double dropout = 0.3;
  int latent_dim = 64;
  int max_decode_len = 30;
  int vocab_size = 0;

  void validate() const;
  static ModelConfig for_architecture(Architecture arch);
};

// Attention record for one decoding step; exported by the heatmap command.
struct StepAttention {
  std::vector<std::vector<double>> word_weights;  // per-utterance, empty unless +WA
  std::vector<double> utterance_weights;          // utterance- or token-level weights
};

struct ForwardResult {
  Tensor logits;    // [T x V]
  Tensor aux_loss;  // KL term for VHRED, 0 otherwise
  std::vector<StepAttention> attention;
};

struct DecodeTrace {
  std::vector<int> tokens;
  std::vector<double> log_probs;
  std::vector<StepAttention> attention;
};

class DialogModel {
 public:
  DialogModel(const ModelConfig& config, uint64_t seed);

  // teacher_tokens drive the decoder inputs (SOS + teacher_tokens[:-1]).
  ForwardResult forward(const Dialog& dialog, const Vocabulary& vocab,
                        const std::vector<int>& teacher_tokens, bool training);

  DecodeTrace generate(const Dialog& dialog, const Vocabulary& vocab, int max_len);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  RngPool& rng() { return *rng_; }

 private:
  struct Encoded;
  Encoded encode(const Dialog& dialog, const Vocabulary& vocab, bool training) const;
  std::vector<Tensor> decoder_init(const Encoded& enc) const;
  void prepare_decode(Encoded& enc, const Vocabulary& vocab,
                      const std::vector<int>* posterior_response, bool training);
  Tensor context_vector(Encoded& enc, const Tensor& s, StepAttention& trace);
  Tensor decode_step(Encoded& enc, int prev_token, bool training, StepAttention& trace);

  ModelConfig config_;
  std::unique_ptr<RngPool> rng_;
  std::unique_ptr<ParamStore> store_;

  Tensor embed_enc_, embed_dec_;
  BiGruEncoder utterance_encoder_;
  GruStack context_encoder_;
  SelfAttnEncoder selfattn_encoder_;
  GruStack decoder_;
  AdditiveAttentionParams word_attn_;
  AdditiveAttentionParams utterance_attn_;
  DshredParams dshred_;
  std::vector<Tensor> init_w_, init_b_;
  Tensor w_out_, b_out_;
  // VHRED latent machinery
  Tensor w_post_h_, b_post_h_, w_mu_, b_mu_, w_logvar_, b_logvar_, w_lat_, b_lat_;
};

Tensor loss(const Tensor& logits, const std::vector<int>& targets, int pad_id,
            const Tensor& kl_term, double kl_weight);

// End-to-end finite-difference check of d(loss)/d(params). Samples up to
// samples_per_param coordinates from every parameter tensor and returns the
// worst relative error against central differences with step h. RNG streams
// are replayed so stochastic paths (latent sampling) stay fixed.
double model_grad_check(DialogModel& model, const Dialog& dialog, const Vocabulary& vocab,
                        const std::vector<int>& teacher, int samples_per_param,
                        double h, uint64_t seed);

}  // namespace dialoglab
