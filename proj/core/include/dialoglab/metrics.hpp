#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dialoglab/corpus.hpp"
#include "dialoglab/params.hpp"
#include "dialoglab/rng.hpp"

namespace dialoglab {

// Static word vectors with an idf table. Vectors come from a text file
// ("token v1 v2 ... vd" per line) or from a seeded hash, so the same token
// always maps to the same vector.
class EmbeddingProvider {
 public:
  static EmbeddingProvider seeded(int dimension, uint64_t seed);
  static EmbeddingProvider from_file(const std::string& path);

  int dimension() const { return dimension_; }
  std::vector<double> lookup(const std::string& token) const;
  double idf(const std::string& token) const;
  bool has_idf() const { return !idf_.empty(); }

  // idf(t) = ln((1+N)/(1+df(t))) + 1 over reference sentences.
  void build_idf(const std::vector<std::vector<std::string>>& references);
  void set_idf(std::map<std::string, double> table) { idf_ = std::move(table); }

 private:
  int dimension_ = 0;
  uint64_t seed_ = 0;
  bool hashed_ = false;
  std::map<std::string, std::vector<double>> table_;
  std::vector<double> unk_;
  std::map<std::string, double> idf_;
};

using TokenList = std::vector<std::string>;

double distinct_n(const std::vector<TokenList>& responses, int n);
double embedding_average(const TokenList& hyp, const TokenList& ref,
                         const EmbeddingProvider& provider);
double vector_extrema(const TokenList& hyp, const TokenList& ref,
                      const EmbeddingProvider& provider);
double greedy_matching(const TokenList& hyp, const TokenList& ref,
                       const EmbeddingProvider& provider);
double greedy_idf_f1(const TokenList& hyp, const TokenList& ref,
                     const EmbeddingProvider& provider);

// Feed-forward scorer over pooled context/response embeddings, trained
// with a margin ranking loss against sampled negatives.
class LearnedScorer {
 public:
  LearnedScorer() = default;
  LearnedScorer(int embed_dim, int hidden, uint64_t seed);

  double score(const TokenList& context_tokens, const TokenList& response,
               const EmbeddingProvider& provider) const;

  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  int embed_dim() const { return embed_dim_; }
  int hidden() const { return hidden_; }

  Tensor score_tensor(const std::vector<double>& ctx_vec,
                      const std::vector<double>& resp_vec) const;

 private:
  int embed_dim_ = 0;
  int hidden_ = 0;
  std::shared_ptr<RngPool> rng_;
  std::shared_ptr<ParamStore> store_;
  Tensor w1_, b1_, w2_, b2_;
};

struct ScorerTrainOptions {
  int epochs = 30;
  double lr = 1e-3;
  double margin = 0.5;
  int hidden = 32;
  double holdout_fraction = 0.2;
};

struct ScorerTrainResult {
  LearnedScorer scorer;
  double holdout_auc = 0.0;
};

ScorerTrainResult train_unreferenced(const Corpus& corpus, const EmbeddingProvider& provider,
                                     uint64_t seed, const ScorerTrainOptions& opts = {});

struct MetricReport {
  double dist1 = 0.0;
  double dist2 = 0.0;
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  double greedy_idf_f1 = 0.0;
  double learned_score = 0.0;
  bool has_learned = false;
};

MetricReport evaluate(const std::vector<TokenList>& model_outputs,
                      const std::vector<TokenList>& references,
                      const std::vector<TokenList>& contexts,
                      const EmbeddingProvider& provider, const LearnedScorer* scorer);

std::string metric_report_json(const MetricReport& report);
// Aligned-column text row; columns ordered as the standard report header.
std::string metric_report_header();
std::string metric_report_row(const std::string& name, const MetricReport& report);

}  // namespace dialoglab
