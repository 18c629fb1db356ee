#pragma once

#include <memory>
#include <string>

#include "dialoglab/corpus.hpp"
#include "dialoglab/model.hpp"

namespace dialoglab {

// Versioned JSON container: model config, seed, vocabulary and every named
// parameter tensor. Doubles are serialized with shortest-round-trip
// formatting, so a save/load cycle reproduces the exact f64 bits.
void save_checkpoint(const std::string& path, const DialogModel& model,
                     const Vocabulary& vocab, uint64_t seed);

struct LoadedModel {
  std::unique_ptr<DialogModel> model;
  Vocabulary vocab;
  uint64_t seed = 0;
};

LoadedModel load_checkpoint(const std::string& path);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace dialoglab
