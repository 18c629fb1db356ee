#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dialoglab/corpus.hpp"
#include "dialoglab/model.hpp"
#include "dialoglab/params.hpp"

namespace dialoglab {

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay = 0.5;
  int patience = 10;  // of LR decay
  double clip_norm = 3.0;
  double weight_decay = 1e-6;
  int epochs = 100;
  uint64_t seed = 30;
  int batch_size = 8;
  int kl_anneal_steps = 5000;
  int early_stop_patience = 20;
  double valid_fraction = 0.1;

  void validate() const;
};

// Adam with decoupled weight decay; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> moments;
  long step = 0;
};

void optimizer_step(ParamStore& params, AdamState& state, double lr, double weight_decay);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm; returns the factor applied.
double clip_gradients(ParamStore& params, double max_norm);

double global_grad_norm(const ParamStore& params);

class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double decay, int patience)
      : lr_(lr), decay_(decay), patience_(patience) {}

  // Feed one validation loss per epoch; returns the lr for the next epoch.
  double observe(double valid_loss);
  double lr() const { return lr_; }

 private:
  double lr_, decay_;
  int patience_;
  int bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// Replays a full validation-loss history through a fresh schedule.
double plateau_schedule(const std::vector<double>& history, double lr, double decay,
                        int patience);

// Linear KL warm-up: min(1, step/anneal_steps).
double kl_weight(long step, long anneal_steps);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double lr = 0.0;
  double kl_weight = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_valid = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
};

struct Split {
  std::vector<size_t> train, valid;
};

Split split_corpus(size_t n, double valid_fraction, RngPool& rng);

// Teacher-forced epoch loop with clipping, plateau decay and early
// stopping; the model ends up holding the best-validation parameters.
TrainLog train(DialogModel& model, const Corpus& corpus, const Vocabulary& vocab,
               const TrainConfig& config, bool verbose = false);

std::string train_log_csv(const TrainLog& log);
std::string train_log_json(const TrainLog& log);

}  // namespace dialoglab
