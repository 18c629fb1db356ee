#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialoglab/corpus.hpp"
#include "dialoglab/metrics.hpp"
#include "dialoglab/rng.hpp"

namespace dialoglab {

enum class PerturbationKind {
  Shuffle,
  Reverse,
  DropFirst,
  DropLast,
  Truncate,
  WordShuffle,
  WordReverse,
  WordDrop,
  NounDrop,
  VerbDrop,
};

const std::vector<std::pair<PerturbationKind, std::string>>& perturbation_names();
std::string to_string(PerturbationKind kind);
PerturbationKind perturbation_from_string(const std::string& name);
std::vector<PerturbationKind> all_perturbations();

struct PerturbOptions {
  int truncate_k = 1;
  double word_drop_ratio = 0.3;
};

// Context-only transformation; the response is never touched.
Dialog perturb(const Dialog& dialog, PerturbationKind kind, RngPool& rng,
               const PerturbOptions& opts = {});

using ResponderFn = std::function<TokenList(const Dialog&)>;

struct PerturbationReport {
  // metric name -> baseline score
  std::map<std::string, double> baseline;
  // metric name -> (perturbation name -> score)
  std::map<std::string, std::map<std::string, double>> perturbed;
  // metric name -> mean of (perturbed - baseline) over the requested kinds
  std::map<std::string, double> average_decrease;
};

PerturbationReport perturbation_suite(const ResponderFn& responder, const Corpus& corpus,
                                      const EmbeddingProvider& provider,
                                      const LearnedScorer* scorer,
                                      const std::vector<PerturbationKind>& kinds,
                                      uint64_t seed, const PerturbOptions& opts = {});

std::string perturbation_report_json(const PerturbationReport& report);
std::string perturbation_report_table(
    const std::vector<std::pair<std::string, PerturbationReport>>& models,
    const std::string& metric);

}  // namespace dialoglab
