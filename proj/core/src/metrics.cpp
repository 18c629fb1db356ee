#include "dialoglab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dialoglab/training.hpp"

namespace dialoglab {

namespace {

std::vector<double> hashed_vector(const std::string& token, uint64_t seed, int dim) {
  std::mt19937_64 gen(splitmix64(seed ^ fnv1a(token)));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(dim));
  for (double& x : v) x = n(gen);
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<double> mean_vector(const TokenList& tokens, const EmbeddingProvider& provider) {
  std::vector<double> mean(static_cast<size_t>(provider.dimension()), 0.0);
  for (const auto& t : tokens) {
    std::vector<double> v = provider.lookup(t);
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  for (double& x : mean) x /= static_cast<double>(tokens.size());
  return mean;
}

void require_non_empty(const TokenList& hyp, const TokenList& ref) {
  if (hyp.empty() || ref.empty())
    throw validation_error("embedding metric on an empty sentence");
}

}  // namespace

EmbeddingProvider EmbeddingProvider::seeded(int dimension, uint64_t seed) {
  if (dimension < 1) throw config_error("embedding dimension must be >= 1");
  EmbeddingProvider p;
  p.dimension_ = dimension;
  p.seed_ = seed;
  p.hashed_ = true;
  p.unk_ = hashed_vector("<unk>", seed, dimension);
  return p;
}

EmbeddingProvider EmbeddingProvider::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open embedding file: " + path);
  EmbeddingProvider p;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string token;
    is >> token;
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    if (v.empty())
      throw parse_error("embedding file line " + std::to_string(line_no) + ": no values");
    if (p.dimension_ == 0)
      p.dimension_ = static_cast<int>(v.size());
    else if (static_cast<int>(v.size()) != p.dimension_)
      throw parse_error("embedding file line " + std::to_string(line_no) +
                        ": inconsistent dimension");
    p.table_[token] = std::move(v);
  }
  if (p.table_.empty()) throw validation_error("embedding file is empty: " + path);
  auto unk = p.table_.find("<unk>");
  p.unk_ = unk != p.table_.end() ? unk->second
                                 : std::vector<double>(static_cast<size_t>(p.dimension_), 0.0);
  return p;
}

std::vector<double> EmbeddingProvider::lookup(const std::string& token) const {
  if (hashed_) return hashed_vector(token, seed_, dimension_);
  auto it = table_.find(token);
  return it != table_.end() ? it->second : unk_;
}

double EmbeddingProvider::idf(const std::string& token) const {
  auto it = idf_.find(token);
  return it != idf_.end() ? it->second : 0.0;
}

void EmbeddingProvider::build_idf(const std::vector<std::vector<std::string>>& references) {
  idf_.clear();
  std::map<std::string, long long> df;
  for (const auto& sentence : references) {
    std::set<std::string> seen(sentence.begin(), sentence.end());
    for (const auto& t : seen) ++df[t];
  }
  double n = static_cast<double>(references.size());
  for (const auto& [t, count] : df)
    idf_[t] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
}

double distinct_n(const std::vector<TokenList>& responses, int n) {
  if (n < 1) throw config_error("distinct_n order must be >= 1");
  std::set<std::vector<std::string>> distinct;
  long long total = 0;
  for (const TokenList& r : responses) {
    if (static_cast<int>(r.size()) < n) continue;
    for (size_t i = 0; i + static_cast<size_t>(n) <= r.size(); ++i) {
      distinct.insert(std::vector<std::string>(r.begin() + static_cast<long>(i),
                                               r.begin() + static_cast<long>(i) + n));
      ++total;
    }
  }
  if (total == 0) throw validation_error("no " + std::to_string(n) + "-grams in responses");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double embedding_average(const TokenList& hyp, const TokenList& ref,
                         const EmbeddingProvider& provider) {
  require_non_empty(hyp, ref);
  return cosine(mean_vector(hyp, provider), mean_vector(ref, provider));
}

namespace {

// Per-dimension value with the largest magnitude; ties go to the positive.
std::vector<double> extrema_vector(const TokenList& tokens, const EmbeddingProvider& provider) {
  std::vector<double> ext(static_cast<size_t>(provider.dimension()), 0.0);
  bool first = true;
  for (const auto& t : tokens) {
    std::vector<double> v = provider.lookup(t);
    for (size_t i = 0; i < ext.size(); ++i) {
      if (first || std::abs(v[i]) > std::abs(ext[i]) ||
          (std::abs(v[i]) == std::abs(ext[i]) && v[i] > ext[i]))
        ext[i] = v[i];
    }
    first = false;
  }
  return ext;
}

double greedy_direction(const TokenList& from, const TokenList& to,
                        const EmbeddingProvider& provider) {
  double total = 0.0;
  for (const auto& f : from) {
    std::vector<double> fv = provider.lookup(f);
    double best = -1.0;
    for (const auto& t : to) best = std::max(best, cosine(fv, provider.lookup(t)));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

double greedy_idf_direction(const TokenList& from, const TokenList& to,
                            const EmbeddingProvider& provider, bool uniform) {
  double total = 0.0, weight_sum = 0.0;
  for (const auto& f : from) {
    std::vector<double> fv = provider.lookup(f);
    double best = -1.0;
    for (const auto& t : to) best = std::max(best, cosine(fv, provider.lookup(t)));
    double w = uniform ? 1.0 : provider.idf(f);
    total += w * (1.0 + best) / 2.0;  // rescale cosine to [0,1]
    weight_sum += w;
  }
  return weight_sum == 0.0 ? 0.0 : total / weight_sum;
}

}  // namespace

double vector_extrema(const TokenList& hyp, const TokenList& ref,
                      const EmbeddingProvider& provider) {
  require_non_empty(hyp, ref);
  return cosine(extrema_vector(hyp, provider), extrema_vector(ref, provider));
}

double greedy_matching(const TokenList& hyp, const TokenList& ref,
                       const EmbeddingProvider& provider) {
  require_non_empty(hyp, ref);
  return 0.5 * (greedy_direction(hyp, ref, provider) + greedy_direction(ref, hyp, provider));
}

double greedy_idf_f1(const TokenList& hyp, const TokenList& ref,
                     const EmbeddingProvider& provider) {
  require_non_empty(hyp, ref);
  double total_idf = 0.0;
  for (const auto& t : hyp) total_idf += provider.idf(t);
  for (const auto& t : ref) total_idf += provider.idf(t);
  bool uniform = total_idf == 0.0;
  double precision = greedy_idf_direction(hyp, ref, provider, uniform);
  double recall = greedy_idf_direction(ref, hyp, provider, uniform);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

LearnedScorer::LearnedScorer(int embed_dim, int hidden, uint64_t seed)
    : embed_dim_(embed_dim), hidden_(hidden) {
  rng_ = std::make_shared<RngPool>(seed);
  store_ = std::make_shared<ParamStore>(rng_.get());
  w1_ = store_->param("scorer.w1", {hidden, 2 * embed_dim});
  b1_ = store_->const_param("scorer.b1", {hidden}, 0.0);
  w2_ = store_->param("scorer.w2", {1, hidden});
  b2_ = store_->const_param("scorer.b2", {1}, 0.0);
}

Tensor LearnedScorer::score_tensor(const std::vector<double>& ctx_vec,
                                   const std::vector<double>& resp_vec) const {
  std::vector<double> joined = ctx_vec;
  joined.insert(joined.end(), resp_vec.begin(), resp_vec.end());
  Tensor x({2 * embed_dim_}, joined);
  Tensor h = ops::tanh_(ops::add(ops::matvec(w1_, x), b1_));
  return ops::sigmoid(ops::add(ops::matvec(w2_, h), b2_));
}

double LearnedScorer::score(const TokenList& context_tokens, const TokenList& response,
                            const EmbeddingProvider& provider) const {
  if (context_tokens.empty() || response.empty())
    throw validation_error("learned scorer on an empty sentence");
  return score_tensor(mean_vector(context_tokens, provider), mean_vector(response, provider))
      .item();
}

namespace {

TokenList flatten_context(const Dialog& d) {
  TokenList out;
  for (const Utterance& u : d.context) out.insert(out.end(), u.tokens.begin(), u.tokens.end());
  return out;
}

double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) return 0.0;
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace

ScorerTrainResult train_unreferenced(const Corpus& corpus, const EmbeddingProvider& provider,
                                     uint64_t seed, const ScorerTrainOptions& opts) {
  size_t n = corpus.dialogs.size();
  if (n < 2) throw validation_error("negative sampling needs at least 2 dialogs");

  RngPool rng(seed);
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.stream("split"));
  size_t holdout = std::min(n - 2, static_cast<size_t>(static_cast<double>(n) * opts.holdout_fraction));
  std::vector<size_t> test(idx.begin(), idx.begin() + static_cast<long>(holdout));
  std::vector<size_t> train_idx(idx.begin() + static_cast<long>(holdout), idx.end());

  std::vector<std::vector<double>> ctx_vecs(n), resp_vecs(n);
  for (size_t i = 0; i < n; ++i) {
    ctx_vecs[i] = mean_vector(flatten_context(corpus.dialogs[i]), provider);
    resp_vecs[i] = mean_vector(corpus.dialogs[i].response.tokens, provider);
  }

  ScorerTrainResult result;
  result.scorer = LearnedScorer(provider.dimension(), opts.hidden, splitmix64(seed));
  AdamState adam;
  auto negative_of = [&](size_t i, std::string_view stream) {
    std::uniform_int_distribution<size_t> pick(0, n - 2);
    size_t j = pick(rng.stream(stream));
    return j >= i ? j + 1 : j;
  };

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng.stream("shuffle"));
    for (size_t i : train_idx) {
      size_t j = negative_of(i, "neg");
      result.scorer.params().zero_grads();
      GradTape tape;
      Tensor s_pos = result.scorer.score_tensor(ctx_vecs[i], resp_vecs[i]);
      Tensor s_neg = result.scorer.score_tensor(ctx_vecs[i], resp_vecs[j]);
      // margin ranking: max(0, margin - s_pos + s_neg)
      Tensor l = ops::relu(ops::affine(ops::sub(s_pos, s_neg), -1.0, opts.margin));
      tape.backward(l);
      optimizer_step(result.scorer.params(), adam, opts.lr, 0.0);
    }
  }

  std::vector<double> pos_scores, neg_scores;
  const auto& eval_set = test.empty() ? train_idx : test;
  for (size_t i : eval_set) {
    size_t j = negative_of(i, "neg.eval");
    pos_scores.push_back(
        result.scorer.score_tensor(ctx_vecs[i], resp_vecs[i]).item());
    neg_scores.push_back(
        result.scorer.score_tensor(ctx_vecs[i], resp_vecs[j]).item());
  }
  result.holdout_auc = auc(pos_scores, neg_scores);
  return result;
}

MetricReport evaluate(const std::vector<TokenList>& model_outputs,
                      const std::vector<TokenList>& references,
                      const std::vector<TokenList>& contexts,
                      const EmbeddingProvider& provider, const LearnedScorer* scorer) {
  if (model_outputs.size() != references.size() ||
      (scorer && contexts.size() != model_outputs.size()))
    throw validation_error("evaluate: misaligned output/reference/context lists");
  if (model_outputs.empty()) throw validation_error("evaluate: empty sample list");

  MetricReport report;
  report.dist1 = distinct_n(model_outputs, 1);
  report.dist2 = distinct_n(model_outputs, 2);
  double avg = 0.0, ext = 0.0, gre = 0.0, idf = 0.0, lrn = 0.0;
  for (size_t i = 0; i < model_outputs.size(); ++i) {
    avg += embedding_average(model_outputs[i], references[i], provider);
    ext += vector_extrema(model_outputs[i], references[i], provider);
    gre += greedy_matching(model_outputs[i], references[i], provider);
    idf += greedy_idf_f1(model_outputs[i], references[i], provider);
    if (scorer) lrn += scorer->score(contexts[i], model_outputs[i], provider);
  }
  double count = static_cast<double>(model_outputs.size());
  report.average = avg / count;
  report.extrema = ext / count;
  report.greedy = gre / count;
  report.greedy_idf_f1 = idf / count;
  if (scorer) {
    report.learned_score = lrn / count;
    report.has_learned = true;
  }
  return report;
}

std::string metric_report_json(const MetricReport& report) {
  nlohmann::json j;
  j["dist1"] = report.dist1;
  j["dist2"] = report.dist2;
  j["average"] = report.average;
  j["extrema"] = report.extrema;
  j["greedy"] = report.greedy;
  j["greedy_idf_f1"] = report.greedy_idf_f1;
  if (report.has_learned) j["learned"] = report.learned_score;
  return j.dump(2);
}

std::string metric_report_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %8s %10s %8s", "Model", "Dist-1",
                "Dist-2", "Average", "Extrema", "Greedy", "G-idf-F1", "Learned");
  return buf;
}

std::string metric_report_row(const std::string& name, const MetricReport& report) {
  char buf[200];
  if (report.has_learned)
    std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %8.2f %8.2f %8.2f %10.2f %8.2f",
                  name.c_str(), 100 * report.dist1, 100 * report.dist2, 100 * report.average,
                  100 * report.extrema, 100 * report.greedy, 100 * report.greedy_idf_f1,
                  100 * report.learned_score);
  else
    std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %8.2f %8.2f %8.2f %10.2f %8s",
                  name.c_str(), 100 * report.dist1, 100 * report.dist2, 100 * report.average,
                  100 * report.extrema, 100 * report.greedy, 100 * report.greedy_idf_f1, "-");
  return buf;
}

}  // namespace dialoglab
