#include "dialoglab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace dialoglab {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
constexpr double kImprovementTol = 1e-6;
}  // namespace

void TrainConfig::validate() const {
  if (lr <= 0.0) throw config_error("lr must be positive");
  if (lr_decay <= 0.0 || lr_decay >= 1.0) throw config_error("lr_decay must be in (0,1)");
  if (patience < 1) throw config_error("patience must be >= 1");
  if (clip_norm <= 0.0) throw config_error("clip_norm must be positive");
  if (epochs < 1) throw config_error("epochs must be >= 1");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (kl_anneal_steps < 1) throw config_error("kl_anneal_steps must be >= 1");
  if (early_stop_patience < 1) throw config_error("early_stop_patience must be >= 1");
  if (valid_fraction < 0.0 || valid_fraction >= 1.0)
    throw config_error("valid_fraction must be in [0,1)");
}

void optimizer_step(ParamStore& params, AdamState& state, double lr, double weight_decay) {
  bool any_grad = false;
  for (const auto& [name, t] : params.all())
    if (t.has_grad()) any_grad = true;
  if (!any_grad) throw contract_error("optimizer_step before any backward pass");

  state.step += 1;
  double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [name, t] : params.all()) {
    auto& mom = state.moments[name];
    if (mom.m.size() != t.size()) {
      mom.m.assign(t.size(), 0.0);
      mom.v.assign(t.size(), 0.0);
    }
    for (size_t i = 0; i < t.size(); ++i) {
      double g = t.grad_at(static_cast<int>(i));
      mom.m[i] = kBeta1 * mom.m[i] + (1.0 - kBeta1) * g;
      mom.v[i] = kBeta2 * mom.v[i] + (1.0 - kBeta2) * g * g;
      double mhat = mom.m[i] / bc1;
      double vhat = mom.v[i] / bc2;
      double& p = t.data()[i];
      p -= lr * mhat / (std::sqrt(vhat) + kEps);
      p -= lr * weight_decay * p;  // decoupled decay
    }
  }
}

double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.all())
    for (size_t i = 0; i < t.size(); ++i) {
      double g = t.grad_at(static_cast<int>(i));
      sq += g * g;
    }
  return std::sqrt(sq);
}

double clip_gradients(ParamStore& params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  double factor = max_norm / norm;
  for (auto& [name, t] : params.all()) {
    if (!t.has_grad()) continue;
    auto& grad = t.impl()->grad;
    for (double& g : grad) g *= factor;
  }
  return factor;
}

double PlateauSchedule::observe(double valid_loss) {
  if (valid_loss < best_ - kImprovementTol) {
    best_ = valid_loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ >= patience_) {
      lr_ *= decay_;
      bad_epochs_ = 0;
    }
  }
  return lr_;
}

double plateau_schedule(const std::vector<double>& history, double lr, double decay,
                        int patience) {
  if (history.empty()) throw validation_error("plateau_schedule: empty history");
  PlateauSchedule sched(lr, decay, patience);
  for (double v : history) sched.observe(v);
  return sched.lr();
}

double kl_weight(long step, long anneal_steps) {
  if (anneal_steps < 1) throw config_error("kl_anneal_steps must be >= 1");
  if (step <= 0) return 0.0;
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(anneal_steps));
}

Split split_corpus(size_t n, double valid_fraction, RngPool& rng) {
  if (n == 0) throw validation_error("cannot split an empty corpus");
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng.stream("split"));
  size_t valid_count = static_cast<size_t>(static_cast<double>(n) * valid_fraction);
  Split split;
  split.valid.assign(idx.begin(), idx.begin() + static_cast<long>(valid_count));
  split.train.assign(idx.begin() + static_cast<long>(valid_count), idx.end());
  if (split.train.empty()) throw validation_error("train split is empty");
  // Desk-scale corpora can be too small for a held-out split.
  if (split.valid.empty()) split.valid = split.train;
  return split;
}

namespace {

std::vector<int> teacher_tokens(const Dialog& d, const Vocabulary& vocab) {
  std::vector<int> ids = vocab.encode(d.response.tokens);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::map<std::string, std::vector<double>> snapshot(const ParamStore& params) {
  std::map<std::string, std::vector<double>> snap;
  for (const auto& [name, t] : params.all()) snap[name] = t.data();
  return snap;
}

void restore(ParamStore& params, const std::map<std::string, std::vector<double>>& snap) {
  for (auto& [name, t] : params.all()) t.data() = snap.at(name);
}

}  // namespace

TrainLog train(DialogModel& model, const Corpus& corpus, const Vocabulary& vocab,
               const TrainConfig& config, bool verbose) {
  config.validate();
  if (corpus.dialogs.empty()) throw validation_error("train on an empty corpus");

  RngPool rng(config.seed);
  Split split = split_corpus(corpus.dialogs.size(), config.valid_fraction, rng);
  bool variational = model.config().architecture == Architecture::Vhred;

  AdamState adam;
  PlateauSchedule sched(config.lr, config.lr_decay, config.patience);
  TrainLog log;
  std::map<std::string, std::vector<double>> best_params = snapshot(model.params());
  int epochs_since_best = 0;
  double lr = config.lr;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::shuffle(split.train.begin(), split.train.end(), rng.stream("shuffle"));

    double klw = variational ? kl_weight(adam.step, config.kl_anneal_steps) : 0.0;
    double train_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < split.train.size(); start += config.batch_size) {
      size_t end = std::min(split.train.size(), start + config.batch_size);
      model.params().zero_grads();
      klw = variational ? kl_weight(adam.step, config.kl_anneal_steps) : 0.0;
      for (size_t b = start; b < end; ++b) {
        const Dialog& d = corpus.dialogs[split.train[b]];
        std::vector<int> teacher = teacher_tokens(d, vocab);
        GradTape tape;
        ForwardResult fr = model.forward(d, vocab, teacher, /*training=*/true);
        Tensor l = loss(fr.logits, teacher, Vocabulary::kPad, fr.aux_loss, klw);
        Tensor scaled = ops::scale(l, 1.0 / static_cast<double>(end - start));
        tape.backward(scaled);
        train_loss += l.item();
        ++seen;
      }
      clip_gradients(model.params(), config.clip_norm);
      optimizer_step(model.params(), adam, lr, config.weight_decay);
    }
    train_loss /= static_cast<double>(seen);

    double valid_loss = 0.0;
    for (size_t i : split.valid) {
      const Dialog& d = corpus.dialogs[i];
      std::vector<int> teacher = teacher_tokens(d, vocab);
      ForwardResult fr = model.forward(d, vocab, teacher, /*training=*/false);
      valid_loss += loss(fr.logits, teacher, Vocabulary::kPad, fr.aux_loss, klw).item();
    }
    valid_loss /= static_cast<double>(split.valid.size());

    EpochLog el;
    el.epoch = epoch;
    el.train_loss = train_loss;
    el.valid_loss = valid_loss;
    el.lr = lr;
    el.kl_weight = klw;
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(el);
    if (verbose)
      std::fprintf(stderr, "epoch %d train %.4f valid %.4f lr %g\n", epoch, train_loss,
                   valid_loss, lr);

    if (valid_loss < log.best_valid - kImprovementTol) {
      log.best_valid = valid_loss;
      log.best_epoch = epoch;
      best_params = snapshot(model.params());
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    lr = sched.observe(valid_loss);
    if (epochs_since_best >= config.early_stop_patience) {
      log.early_stopped = true;
      break;
    }
  }

  restore(model.params(), best_params);
  return log;
}

std::string train_log_csv(const TrainLog& log) {
  std::ostringstream os;
  os << "epoch,train_loss,valid_loss,lr,kl_weight\n";
  char buf[160];
  for (const EpochLog& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                  e.valid_loss, e.lr, e.kl_weight);
    os << buf;
  }
  return os.str();
}

std::string train_log_json(const TrainLog& log) {
  nlohmann::json j;
  j["best_epoch"] = log.best_epoch;
  j["best_valid"] = log.best_valid;
  j["early_stopped"] = log.early_stopped;
  j["epochs"] = nlohmann::json::array();
  for (const EpochLog& e : log.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"valid_loss", e.valid_loss},
                           {"lr", e.lr},
                           {"kl_weight", e.kl_weight},
                           {"seconds", e.seconds}});
  }
  return j.dump(2);
}

}  // namespace dialoglab
