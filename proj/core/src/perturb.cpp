#include "dialoglab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace dialoglab {

const std::vector<std::pair<PerturbationKind, std::string>>& perturbation_names() {
  static const std::vector<std::pair<PerturbationKind, std::string>> names = {
      {PerturbationKind::Shuffle, "shuffle"},
      {PerturbationKind::Reverse, "reverse"},
      {PerturbationKind::DropFirst, "drop_first"},
      {PerturbationKind::DropLast, "drop_last"},
      {PerturbationKind::Truncate, "truncate"},
      {PerturbationKind::WordShuffle, "word_shuffle"},
      {PerturbationKind::WordReverse, "word_reverse"},
      {PerturbationKind::WordDrop, "word_drop"},
      {PerturbationKind::NounDrop, "noun_drop"},
      {PerturbationKind::VerbDrop, "verb_drop"},
  };
  return names;
}

std::string to_string(PerturbationKind kind) {
  for (const auto& [k, n] : perturbation_names())
    if (k == kind) return n;
  throw config_error("unknown perturbation enum value");
}

PerturbationKind perturbation_from_string(const std::string& name) {
  for (const auto& [k, n] : perturbation_names())
    if (n == name) return k;
  std::string valid;
  for (const auto& [k, n] : perturbation_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw config_error("unknown perturbation '" + name + "'; valid: " + valid);
}

std::vector<PerturbationKind> all_perturbations() {
  std::vector<PerturbationKind> kinds;
  for (const auto& [k, n] : perturbation_names()) kinds.push_back(k);
  return kinds;
}

namespace {

void permute_utterance(Utterance& u, const std::vector<size_t>& order) {
  Utterance out;
  out.speaker = u.speaker;
  for (size_t i : order) {
    out.tokens.push_back(u.tokens[i]);
    if (u.has_pos()) out.pos_tags.push_back(u.pos_tags[i]);
  }
  u = std::move(out);
}

void keep_indices(Utterance& u, const std::vector<size_t>& keep) {
  permute_utterance(u, keep);
}

void require_pos(const Dialog& d, PerturbationKind kind) {
  for (const Utterance& u : d.context)
    if (!u.has_pos())
      throw annotation_error(to_string(kind) + " requires POS tags on every context utterance");
}

void drop_tag(Utterance& u, PosTag tag) {
  std::vector<size_t> keep;
  for (size_t i = 0; i < u.tokens.size(); ++i)
    if (u.pos_tags[i] != tag) keep.push_back(i);
  if (keep.empty()) keep.push_back(0);  // always leave one token standing
  keep_indices(u, keep);
}

}  // namespace

Dialog perturb(const Dialog& dialog, PerturbationKind kind, RngPool& rng,
               const PerturbOptions& opts) {
  Dialog out = dialog;
  auto& ctx = out.context;
  switch (kind) {
    case PerturbationKind::Shuffle:
      std::shuffle(ctx.begin(), ctx.end(), rng.stream("perturb.shuffle"));
      break;
    case PerturbationKind::Reverse:
      std::reverse(ctx.begin(), ctx.end());
      break;
    case PerturbationKind::DropFirst:
      if (ctx.size() >= 2) ctx.erase(ctx.begin());
      break;
    case PerturbationKind::DropLast:
      if (ctx.size() >= 2) ctx.pop_back();
      break;
    case PerturbationKind::Truncate: {
      size_t k = static_cast<size_t>(std::max(1, opts.truncate_k));
      if (ctx.size() > k) ctx.erase(ctx.begin(), ctx.end() - static_cast<long>(k));
      break;
    }
    case PerturbationKind::WordShuffle:
      for (Utterance& u : ctx) {
        std::vector<size_t> order(u.tokens.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.stream("perturb.word_shuffle"));
        permute_utterance(u, order);
      }
      break;
    case PerturbationKind::WordReverse:
      for (Utterance& u : ctx) {
        std::vector<size_t> order(u.tokens.size());
        std::iota(order.begin(), order.end(), 0);
        std::reverse(order.begin(), order.end());
        permute_utterance(u, order);
      }
      break;
    case PerturbationKind::WordDrop:
      for (Utterance& u : ctx) {
        size_t len = u.tokens.size();
        size_t drop = static_cast<size_t>(std::floor(opts.word_drop_ratio * static_cast<double>(len)));
        drop = std::min(drop, len - 1);  // survivor guarantee
        if (drop == 0) continue;
        std::vector<size_t> order(len);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.stream("perturb.word_drop"));
        std::vector<size_t> keep(order.begin() + static_cast<long>(drop), order.end());
        std::sort(keep.begin(), keep.end());
        keep_indices(u, keep);
      }
      break;
    case PerturbationKind::NounDrop:
      require_pos(dialog, kind);
      for (Utterance& u : ctx) drop_tag(u, PosTag::Noun);
      break;
    case PerturbationKind::VerbDrop:
      require_pos(dialog, kind);
      for (Utterance& u : ctx) drop_tag(u, PosTag::Verb);
      break;
  }
  return out;
}

namespace {

TokenList flatten_context_tokens(const Dialog& d) {
  TokenList out;
  for (const Utterance& u : d.context) out.insert(out.end(), u.tokens.begin(), u.tokens.end());
  return out;
}

std::map<std::string, double> report_fields(const MetricReport& r) {
  std::map<std::string, double> f = {
      {"dist1", r.dist1},          {"dist2", r.dist2},
      {"average", r.average},      {"extrema", r.extrema},
      {"greedy", r.greedy},        {"greedy_idf_f1", r.greedy_idf_f1},
  };
  if (r.has_learned) f["learned"] = r.learned_score;
  return f;
}

std::map<std::string, double> evaluate_set(const ResponderFn& responder,
                                           const std::vector<Dialog>& dialogs,
                                           const EmbeddingProvider& provider,
                                           const LearnedScorer* scorer) {
  std::vector<TokenList> outputs, references, contexts;
  for (const Dialog& d : dialogs) {
    outputs.push_back(responder(d));
    references.push_back(d.response.tokens);
    contexts.push_back(flatten_context_tokens(d));
  }
  return report_fields(evaluate(outputs, references, contexts, provider, scorer));
}

}  // namespace

PerturbationReport perturbation_suite(const ResponderFn& responder, const Corpus& corpus,
                                      const EmbeddingProvider& provider,
                                      const LearnedScorer* scorer,
                                      const std::vector<PerturbationKind>& kinds,
                                      uint64_t seed, const PerturbOptions& opts) {
  if (corpus.dialogs.empty()) throw validation_error("perturbation suite on an empty corpus");
  PerturbationReport report;
  report.baseline = evaluate_set(responder, corpus.dialogs, provider, scorer);

  for (PerturbationKind kind : kinds) {
    // Each kind gets its own stream so kinds do not perturb each other.
    RngPool rng(splitmix64(seed ^ fnv1a(to_string(kind))));
    std::vector<Dialog> perturbed;
    perturbed.reserve(corpus.dialogs.size());
    for (const Dialog& d : corpus.dialogs) perturbed.push_back(perturb(d, kind, rng, opts));
    auto scores = evaluate_set(responder, perturbed, provider, scorer);
    for (const auto& [metric, value] : scores)
      report.perturbed[metric][to_string(kind)] = value;
  }

  for (const auto& [metric, by_kind] : report.perturbed) {
    double delta = 0.0;
    for (const auto& [kind, value] : by_kind) delta += value - report.baseline.at(metric);
    report.average_decrease[metric] = delta / static_cast<double>(by_kind.size());
  }
  return report;
}

std::string perturbation_report_json(const PerturbationReport& report) {
  nlohmann::json j;
  j["baseline"] = report.baseline;
  j["perturbed"] = report.perturbed;
  j["average_decrease"] = report.average_decrease;
  return j.dump(2);
}

std::string perturbation_report_table(
    const std::vector<std::pair<std::string, PerturbationReport>>& models,
    const std::string& metric) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-16s %18s  %s", "Model",
                ("avg-decrease(" + metric + ")").c_str(), "vs-base");
  os << buf << "\n";
  auto base_of = [&](const std::string& name) -> const PerturbationReport* {
    if (name.size() < 4 || name.substr(name.size() - 3) != "_wa") return nullptr;
    std::string base = name.substr(0, name.size() - 3);
    if (base == "hran") base = "hred";
    for (const auto& [n, r] : models)
      if (n == base) return &r;
    return nullptr;
  };
  for (const auto& [name, r] : models) {
    double dec = r.average_decrease.count(metric) ? r.average_decrease.at(metric) : 0.0;
    std::string marker;
    if (const PerturbationReport* base = base_of(name)) {
      double bdec = base->average_decrease.count(metric) ? base->average_decrease.at(metric) : 0.0;
      marker = dec < bdec ? "^" : (dec > bdec ? "v" : "~");  // more decrease = better context use
    }
    std::snprintf(buf, sizeof buf, "%-16s %18.2f  %s", name.c_str(), 100 * dec, marker.c_str());
    os << buf << "\n";
  }
  return os.str();
}

}  // namespace dialoglab
