// dialoglab command-line harness: train / generate / evaluate / compare /
// perturb / heatmap / stats / gradcheck.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dialoglab/checkpoint.hpp"
#include "dialoglab/corpus.hpp"
#include "dialoglab/error.hpp"
#include "dialoglab/metrics.hpp"
#include "dialoglab/model.hpp"
#include "dialoglab/perturb.hpp"
#include "dialoglab/training.hpp"

namespace fs = std::filesystem;
using namespace dialoglab;

namespace {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string corpus_path;
  std::string embeddings_path;  // empty: seeded hash vectors
  std::string out = "run";
  int vocab_max = 10000;
  int min_freq = 1;
  int embed_dim = 128;
  int max_len = 30;
  bool lowercase = true;
  int max_turns = 0;
  bool scorer = true;

  void apply(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
};

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw config_error("key '" + key + "' expects a boolean, got '" + value + "'");
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' expects an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "' expects a number, got '" + value + "'");
  }
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "architecture" || key == "arch") {
    model.architecture = architecture_from_string(value);
    model.word_attention = has_word_attention(model.architecture);
  } else if (key == "word_attention") model.word_attention = parse_bool(key, value);
  else if (key == "hidden") model.hidden = parse_int(key, value);
  else if (key == "embed") model.embed = parse_int(key, value);
  else if (key == "utterance_layers") model.utterance_layers = parse_int(key, value);
  else if (key == "bidirectional") model.bidirectional = parse_bool(key, value);
  else if (key == "context_layers") model.context_layers = parse_int(key, value);
  else if (key == "decoder_layers") model.decoder_layers = parse_int(key, value);
  else if (key == "heads") model.heads = parse_int(key, value);
  else if (key == "d_model") model.d_model = parse_int(key, value);
  else if (key == "transformer_layers") model.transformer_layers = parse_int(key, value);
  else if (key == "dropout") model.dropout = parse_double(key, value);
  else if (key == "latent_dim") model.latent_dim = parse_int(key, value);
  else if (key == "max_decode_len") model.max_decode_len = parse_int(key, value);
  else if (key == "lr") train.lr = parse_double(key, value);
  else if (key == "lr_decay") train.lr_decay = parse_double(key, value);
  else if (key == "patience") train.patience = parse_int(key, value);
  else if (key == "clip_norm") train.clip_norm = parse_double(key, value);
  else if (key == "weight_decay") train.weight_decay = parse_double(key, value);
  else if (key == "epochs") train.epochs = parse_int(key, value);
  else if (key == "seed") train.seed = static_cast<uint64_t>(std::stoull(value));
  else if (key == "batch_size") train.batch_size = parse_int(key, value);
  else if (key == "kl_anneal_steps") train.kl_anneal_steps = parse_int(key, value);
  else if (key == "early_stop_patience") train.early_stop_patience = parse_int(key, value);
  else if (key == "valid_fraction") train.valid_fraction = parse_double(key, value);
  else if (key == "corpus") corpus_path = value;
  else if (key == "embeddings") embeddings_path = value;
  else if (key == "out") out = value;
  else if (key == "vocab_max") vocab_max = parse_int(key, value);
  else if (key == "min_freq") min_freq = parse_int(key, value);
  else if (key == "embed_dim") embed_dim = parse_int(key, value);
  else if (key == "max_len") max_len = parse_int(key, value);
  else if (key == "lowercase") lowercase = parse_bool(key, value);
  else if (key == "max_turns") max_turns = parse_int(key, value);
  else if (key == "scorer") scorer = parse_bool(key, value);
  else throw config_error("unknown configuration key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot read config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t h = line.find('#');
    if (h != std::string::npos) line.erase(h);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw parse_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      size_t x = s.find_first_not_of(" \t");
      size_t y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_env_seed(RunConfig& cfg) {
  if (const char* env = std::getenv("DIALOGLAB_SEED"))
    cfg.train.seed = static_cast<uint64_t>(std::strtoull(env, nullptr, 10));
}

void apply_sets(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    size_t eq = s.find('=');
    if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + s + "'");
    cfg.apply(s.substr(0, eq), s.substr(eq + 1));
  }
}

// Every artifact a command produces is listed here and flushed to
// <out>/manifest.json at the end.
class Manifest {
 public:
  Manifest(std::string out_dir, std::string command)
      : dir_(std::move(out_dir)), command_(std::move(command)) {
    fs::create_directories(dir_);
  }

  std::string path(const std::string& relative) {
    files_.push_back(relative);
    fs::path p = fs::path(dir_) / relative;
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void write_text(const std::string& relative, const std::string& content) {
    std::string p = path(relative);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw io_error("cannot write '" + p + "'");
    os << content;
  }

  void flush() {
    nlohmann::json j{{"command", command_}, {"files", files_}};
    std::ofstream os(fs::path(dir_) / "manifest.json", std::ios::binary);
    if (!os) throw io_error("cannot write manifest in '" + dir_ + "'");
    os << j.dump(2) << "\n";
  }

 private:
  std::string dir_, command_;
  std::vector<std::string> files_;
};

Corpus load(const RunConfig& cfg) {
  if (cfg.corpus_path.empty()) throw config_error("no corpus given (set corpus=... or --corpus)");
  LoadOptions opts;
  opts.lowercase = cfg.lowercase;
  opts.max_turns = cfg.max_turns;
  opts.max_len = cfg.max_len;
  return load_corpus(cfg.corpus_path, opts);
}

EmbeddingProvider make_provider(const RunConfig& cfg, uint64_t seed) {
  if (!cfg.embeddings_path.empty()) return EmbeddingProvider::from_file(cfg.embeddings_path);
  return EmbeddingProvider::seeded(cfg.embed_dim, seed);
}

// Generated ids -> plain tokens: strip the trailing EOS and any control ids.
TokenList ids_to_tokens(const std::vector<int>& ids, const Vocabulary& vocab) {
  TokenList out;
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kSos) continue;
    out.push_back(vocab.token(id));
  }
  // an immediate EOS would leave nothing for the metrics to chew on
  if (out.empty()) out.push_back(vocab.token(Vocabulary::kUnk));
  return out;
}

TokenList flat_context(const Dialog& d) {
  TokenList out;
  for (const Utterance& u : d.context) out.insert(out.end(), u.tokens.begin(), u.tokens.end());
  return out;
}

struct EvalInputs {
  std::vector<TokenList> outputs, references, contexts;
};

EvalInputs generate_all(DialogModel& model, const Vocabulary& vocab, const Corpus& corpus,
                        int max_len) {
  EvalInputs in;
  for (const Dialog& d : corpus.dialogs) {
    DecodeTrace t = model.generate(d, vocab, max_len);
    in.outputs.push_back(ids_to_tokens(t.tokens, vocab));
    in.references.push_back(d.response.tokens);
    in.contexts.push_back(flat_context(d));
  }
  return in;
}

MetricReport evaluate_checkpoint(LoadedModel& lm, const Corpus& corpus, const RunConfig& cfg,
                                 EmbeddingProvider& provider, const LearnedScorer* scorer) {
  EvalInputs in = generate_all(*lm.model, lm.vocab, corpus, cfg.max_len);
  return evaluate(in.outputs, in.references, in.contexts, provider, scorer);
}

// Comparison table: best value per column marked '*', second best '+',
// first-listed wins ties.
std::string compare_table(const std::vector<std::string>& names,
                          const std::vector<MetricReport>& reports) {
  struct Col {
    const char* label;
    double MetricReport::*field;
  };
  std::vector<Col> cols = {
      {"Dist-1", &MetricReport::dist1},     {"Dist-2", &MetricReport::dist2},
      {"Average", &MetricReport::average},  {"Extrema", &MetricReport::extrema},
      {"Greedy", &MetricReport::greedy},    {"G-idf-F1", &MetricReport::greedy_idf_f1},
  };
  bool learned = !reports.empty() && reports.front().has_learned;
  if (learned) cols.push_back({"Learned", &MetricReport::learned_score});

  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-16s", "Model");
  os << buf;
  for (const Col& c : cols) {
    std::snprintf(buf, sizeof buf, " %10s", c.label);
    os << buf;
  }
  os << "\n";

  std::vector<std::vector<std::string>> marks(reports.size(),
                                              std::vector<std::string>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) {
    size_t best = 0, second = reports.size();
    for (size_t r = 1; r < reports.size(); ++r)
      if (reports[r].*cols[c].field > reports[best].*cols[c].field) best = r;
    for (size_t r = 0; r < reports.size(); ++r) {
      if (r == best) continue;
      if (second == reports.size() ||
          reports[r].*cols[c].field > reports[second].*cols[c].field)
        second = r;
    }
    marks[best][c] = "*";
    if (second < reports.size()) marks[second][c] = "+";
  }
  for (size_t r = 0; r < reports.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-16s", names[r].c_str());
    os << buf;
    for (size_t c = 0; c < cols.size(); ++c) {
      std::snprintf(buf, sizeof buf, " %9.2f%s", 100 * (reports[r].*cols[c].field),
                    marks[r][c].empty() ? " " : marks[r][c].c_str());
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

nlohmann::json trace_to_json(const DecodeTrace& trace, const Vocabulary& vocab) {
  nlohmann::json steps = nlohmann::json::array();
  for (const StepAttention& a : trace.attention)
    steps.push_back({{"word_weights", a.word_weights},
                     {"utterance_weights", a.utterance_weights}});
  TokenList tokens;  // raw decode, EOS and all; no metric placeholder here
  for (int id : trace.tokens) tokens.push_back(vocab.token(id));
  return nlohmann::json{{"tokens", tokens},
                        {"token_ids", trace.tokens},
                        {"log_probs", trace.log_probs},
                        {"steps", steps}};
}

int cmd_train(const RunConfig& cfg) {
  cfg.train.validate();
  Corpus corpus = load(cfg);
  Vocabulary vocab = build_vocab(corpus, cfg.vocab_max, cfg.min_freq);
  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  mcfg.validate();

  DialogModel model(mcfg, cfg.train.seed);
  TrainLog log = train(model, corpus, vocab, cfg.train, /*verbose=*/true);

  std::string arch = to_string(mcfg.architecture);
  Manifest manifest(cfg.out, "train");
  save_checkpoint(manifest.path(arch + "/best.ckpt"), model, vocab, cfg.train.seed);
  manifest.write_text(arch + "/train_log.csv", train_log_csv(log));
  manifest.write_text(arch + "/train_log.json", train_log_json(log));
  manifest.flush();
  std::cout << "trained " << arch << ": best epoch " << log.best_epoch << ", valid loss "
            << log.best_valid << (log.early_stopped ? " (early stop)" : "") << "\n";
  return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& ckpt_path, int limit) {
  LoadedModel lm = load_checkpoint(ckpt_path);
  Corpus corpus = load(cfg);
  Manifest manifest(cfg.out, "generate");
  std::ostringstream lines;
  int n = 0;
  for (const Dialog& d : corpus.dialogs) {
    if (limit > 0 && n >= limit) break;
    DecodeTrace t = lm.model->generate(d, lm.vocab, cfg.max_len);
    nlohmann::json j;
    nlohmann::json ctx = nlohmann::json::array();
    for (const Utterance& u : d.context) ctx.push_back(u.tokens);
    j["context"] = ctx;
    j["reference"] = d.response.tokens;
    j["output"] = ids_to_tokens(t.tokens, lm.vocab);
    j["log_probs"] = t.log_probs;
    lines << j.dump() << "\n";
    ++n;
  }
  manifest.write_text("generations.jsonl", lines.str());
  manifest.flush();
  std::cout << "wrote " << n << " generations\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& ckpt_path) {
  LoadedModel lm = load_checkpoint(ckpt_path);
  Corpus corpus = load(cfg);
  EmbeddingProvider provider = make_provider(cfg, cfg.train.seed);
  EvalInputs in = generate_all(*lm.model, lm.vocab, corpus, cfg.max_len);
  provider.build_idf(in.references);

  std::optional<LearnedScorer> scorer;
  if (cfg.scorer) {
    ScorerTrainResult r = train_unreferenced(corpus, provider, cfg.train.seed);
    scorer = std::move(r.scorer);
    std::cerr << "scorer holdout AUC: " << r.holdout_auc << "\n";
  }
  MetricReport report = evaluate(in.outputs, in.references, in.contexts, provider,
                                 scorer ? &*scorer : nullptr);

  Manifest manifest(cfg.out, "evaluate");
  manifest.write_text("metrics.json", metric_report_json(report) + "\n");
  std::string table = metric_report_header() + "\n" +
                      metric_report_row(to_string(lm.model->config().architecture), report) +
                      "\n";
  manifest.write_text("metrics.txt", table);
  manifest.flush();
  std::cout << table;
  return 0;
}

int cmd_compare(const RunConfig& cfg, const std::vector<std::string>& ckpt_paths) {
  if (ckpt_paths.size() < 2) throw validation_error("compare needs at least 2 checkpoints");
  std::vector<LoadedModel> models;
  for (const std::string& p : ckpt_paths) models.push_back(load_checkpoint(p));
  for (size_t i = 1; i < models.size(); ++i)
    if (models[i].vocab.tokens() != models[0].vocab.tokens())
      throw compat_error("checkpoint '" + ckpt_paths[i] +
                         "' uses a different vocabulary than '" + ckpt_paths[0] + "'");

  Corpus corpus = load(cfg);
  EmbeddingProvider provider = make_provider(cfg, cfg.train.seed);
  std::vector<TokenList> refs;
  for (const Dialog& d : corpus.dialogs) refs.push_back(d.response.tokens);
  provider.build_idf(refs);

  std::optional<LearnedScorer> scorer;
  if (cfg.scorer) scorer = train_unreferenced(corpus, provider, cfg.train.seed).scorer;

  std::vector<std::string> names;
  std::vector<MetricReport> reports;
  for (LoadedModel& lm : models) {
    names.push_back(to_string(lm.model->config().architecture));
    reports.push_back(
        evaluate_checkpoint(lm, corpus, cfg, provider, scorer ? &*scorer : nullptr));
  }

  std::string table = compare_table(names, reports);
  nlohmann::json j = nlohmann::json::array();
  for (size_t i = 0; i < names.size(); ++i)
    j.push_back({{"model", names[i]},
                 {"metrics", nlohmann::json::parse(metric_report_json(reports[i]))}});

  Manifest manifest(cfg.out, "compare");
  manifest.write_text("compare.txt", table);
  manifest.write_text("compare.json", j.dump(2) + "\n");
  manifest.flush();
  std::cout << table;
  return 0;
}

int cmd_perturb(const RunConfig& cfg, const std::string& ckpt_path,
                const std::vector<std::string>& kind_names, const PerturbOptions& popts,
                const std::string& table_metric) {
  LoadedModel lm = load_checkpoint(ckpt_path);
  Corpus corpus = load(cfg);

  std::vector<PerturbationKind> kinds;
  if (kind_names.empty() || (kind_names.size() == 1 && kind_names[0] == "all"))
    kinds = all_perturbations();
  else
    for (const std::string& n : kind_names) kinds.push_back(perturbation_from_string(n));

  EmbeddingProvider provider = make_provider(cfg, cfg.train.seed);
  std::vector<TokenList> refs;
  for (const Dialog& d : corpus.dialogs) refs.push_back(d.response.tokens);
  provider.build_idf(refs);

  std::optional<LearnedScorer> scorer;
  if (cfg.scorer) scorer = train_unreferenced(corpus, provider, cfg.train.seed).scorer;

  ResponderFn responder = [&](const Dialog& d) {
    return ids_to_tokens(lm.model->generate(d, lm.vocab, cfg.max_len).tokens, lm.vocab);
  };
  PerturbationReport report = perturbation_suite(responder, corpus, provider,
                                                 scorer ? &*scorer : nullptr, kinds,
                                                 cfg.train.seed, popts);

  std::string name = to_string(lm.model->config().architecture);
  std::string table = perturbation_report_table({{name, report}}, table_metric);
  Manifest manifest(cfg.out, "perturb");
  manifest.write_text("perturb.json", perturbation_report_json(report) + "\n");
  manifest.write_text("perturb.txt", table);
  manifest.flush();
  std::cout << table;
  return 0;
}

int cmd_heatmap(const RunConfig& cfg, const std::string& ckpt_path,
                const std::string& dialog_path, int index) {
  LoadedModel lm = load_checkpoint(ckpt_path);
  RunConfig dcfg = cfg;
  dcfg.corpus_path = dialog_path;
  Corpus corpus = load(dcfg);
  if (index < 0 || index >= static_cast<int>(corpus.dialogs.size()))
    throw validation_error("dialog index " + std::to_string(index) + " out of range (corpus has " +
                           std::to_string(corpus.dialogs.size()) + " dialogs)");

  DecodeTrace trace = lm.model->generate(corpus.dialogs[static_cast<size_t>(index)], lm.vocab,
                                         cfg.max_len);
  std::string json = trace_to_json(trace, lm.vocab).dump(2) + "\n";
  Manifest manifest(cfg.out, "heatmap");
  manifest.write_text("heatmap.json", json);
  manifest.flush();
  std::cout << json;
  return 0;
}

int cmd_stats(const RunConfig& cfg) {
  Corpus corpus = load(cfg);
  Vocabulary vocab = build_vocab(corpus, cfg.vocab_max, cfg.min_freq);
  CorpusStats s = stats(corpus, vocab.size());

  nlohmann::json j{{"dialogs", corpus.dialogs.size()}, {"max_turns", s.max_turns},
                   {"avg_turns", s.avg_turns},         {"min_turns", s.min_turns},
                   {"max_len", s.max_len},             {"avg_len", s.avg_len},
                   {"min_len", s.min_len},             {"vocab_size", s.vocab_size}};
  std::ostringstream os;
  os << "dialogs:    " << corpus.dialogs.size() << "\n";
  os << "turns:      max " << s.max_turns << ", avg " << s.avg_turns << ", min " << s.min_turns
     << "\n";
  os << "utt length: max " << s.max_len << ", avg " << s.avg_len << ", min " << s.min_len << "\n";
  os << "vocab:      " << s.vocab_size << "\n";

  Manifest manifest(cfg.out, "stats");
  manifest.write_text("stats.json", j.dump(2) + "\n");
  manifest.flush();
  std::cout << os.str();
  return 0;
}

Dialog random_dialog(std::mt19937_64& rng, const Vocabulary& vocab, int turns, int len) {
  std::uniform_int_distribution<int> tok(Vocabulary::kNumReserved, vocab.size() - 1);
  Dialog d;
  for (int t = 0; t < turns; ++t) {
    Utterance u;
    for (int i = 0; i < len; ++i) u.tokens.push_back(vocab.token(tok(rng)));
    d.context.push_back(u);
  }
  for (int i = 0; i < len; ++i) d.response.tokens.push_back(vocab.token(tok(rng)));
  return d;
}

int cmd_gradcheck(const std::string& arch_name, int hidden, int embed, int vocab_size,
                  int samples, uint64_t seed, double tolerance) {
  Vocabulary vocab;
  for (int i = Vocabulary::kNumReserved; i < vocab_size; ++i)
    vocab.add("w" + std::to_string(i));

  std::vector<Architecture> archs;
  if (arch_name == "all")
    for (const auto& [a, n] : architecture_names()) archs.push_back(a);
  else
    archs.push_back(architecture_from_string(arch_name));

  std::mt19937_64 rng(splitmix64(seed ^ fnv1a("gradcheck.dialog")));
  bool ok = true;
  for (Architecture arch : archs) {
    ModelConfig mc = ModelConfig::for_architecture(arch);
    mc.hidden = hidden;
    mc.embed = embed;
    mc.d_model = hidden;
    mc.heads = 2;
    mc.utterance_layers = 1;
    mc.transformer_layers = 2;
    mc.latent_dim = 4;
    mc.dropout = 0.0;
    mc.vocab_size = vocab.size();
    mc.validate();

    DialogModel model(mc, seed);
    Dialog d = random_dialog(rng, vocab, /*turns=*/2, /*len=*/4);
    std::vector<int> teacher = vocab.encode(d.response.tokens);
    teacher.push_back(Vocabulary::kEos);
    double err = model_grad_check(model, d, vocab, teacher, samples, 1e-5, seed);
    bool pass = err < tolerance;
    ok = ok && pass;
    std::printf("%-16s max rel err %.3e  %s\n", to_string(arch).c_str(), err,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale dialog generation laboratory"};
  app.require_subcommand(1);

  std::string config_path, arch, checkpoint, dialog_path, table_metric = "greedy_idf_f1";
  std::vector<std::string> sets, checkpoints, kinds;
  std::optional<std::string> corpus_opt, out_opt, embeddings_opt;
  std::optional<uint64_t> seed_opt;
  std::optional<int> epochs_opt, batch_opt, max_len_opt, vocab_max_opt, embed_dim_opt;
  bool no_scorer = false;
  int limit = 0, index = 0;
  PerturbOptions popts;
  int gc_hidden = 8, gc_embed = 6, gc_vocab = 20, gc_samples = 8;
  uint64_t gc_seed = 30;
  double gc_tol = 1e-3;
  std::string gc_arch = "all";

  auto add_common = [&](CLI::App* cmd, bool with_arch = false) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--set", sets, "override a config key (key=value)");
    cmd->add_option("--corpus", corpus_opt, "corpus jsonl path");
    cmd->add_option("--out", out_opt, "output directory");
    cmd->add_option("--seed", seed_opt, "random seed");
    cmd->add_option("--max-len", max_len_opt, "max tokens per utterance / decode");
    if (with_arch) cmd->add_option("--arch", arch, "architecture name");
  };
  auto add_metric_opts = [&](CLI::App* cmd) {
    cmd->add_option("--embeddings", embeddings_opt, "word vector file (token v1 ... vd)");
    cmd->add_option("--embed-dim", embed_dim_opt, "seeded embedding dimension");
    cmd->add_flag("--no-scorer", no_scorer, "skip the learned unreferenced metric");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model, write a checkpoint");
  add_common(train_cmd, /*with_arch=*/true);
  train_cmd->add_option("--epochs", epochs_opt, "epoch count");
  train_cmd->add_option("--batch-size", batch_opt, "batch size");
  train_cmd->add_option("--vocab-max", vocab_max_opt, "vocabulary budget");

  CLI::App* gen_cmd = app.add_subcommand("generate", "greedy-decode a corpus");
  add_common(gen_cmd);
  gen_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  gen_cmd->add_option("--limit", limit, "stop after N dialogs (0 = all)");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "automatic metrics for one model");
  add_common(eval_cmd);
  add_metric_opts(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  CLI::App* cmp_cmd = app.add_subcommand("compare", "metric table across checkpoints");
  add_common(cmp_cmd);
  add_metric_opts(cmp_cmd);
  cmp_cmd->add_option("--checkpoints", checkpoints, "checkpoint paths")->required();

  CLI::App* pert_cmd = app.add_subcommand("perturb", "context perturbation sensitivity");
  add_common(pert_cmd);
  add_metric_opts(pert_cmd);
  pert_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  pert_cmd->add_option("--kinds", kinds, "perturbation names or 'all'");
  pert_cmd->add_option("--truncate-k", popts.truncate_k, "utterances kept by truncate");
  pert_cmd->add_option("--word-drop-ratio", popts.word_drop_ratio, "word drop fraction");
  pert_cmd->add_option("--metric", table_metric, "metric shown in the text table");

  CLI::App* heat_cmd = app.add_subcommand("heatmap", "attention weights per decode step");
  add_common(heat_cmd);
  heat_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  heat_cmd->add_option("--dialog", dialog_path, "dialog jsonl file")->required();
  heat_cmd->add_option("--index", index, "dialog index in the file");

  CLI::App* stats_cmd = app.add_subcommand("stats", "corpus statistics");
  add_common(stats_cmd);
  stats_cmd->add_option("--vocab-max", vocab_max_opt, "vocabulary budget");

  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc_cmd->add_option("--arch", gc_arch, "architecture name or 'all'");
  gc_cmd->add_option("--hidden", gc_hidden, "hidden size");
  gc_cmd->add_option("--embed", gc_embed, "embedding size");
  gc_cmd->add_option("--vocab", gc_vocab, "vocabulary size");
  gc_cmd->add_option("--samples", gc_samples, "coordinates sampled per parameter");
  gc_cmd->add_option("--seed", gc_seed, "random seed");
  gc_cmd->add_option("--tolerance", gc_tol, "max relative error allowed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gc_cmd->parsed())
      return cmd_gradcheck(gc_arch, gc_hidden, gc_embed, gc_vocab, gc_samples, gc_seed, gc_tol);

    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    apply_env_seed(cfg);
    // explicit flags win over file and environment
    if (!arch.empty()) cfg.apply("arch", arch);
    if (corpus_opt) cfg.corpus_path = *corpus_opt;
    if (out_opt) cfg.out = *out_opt;
    if (seed_opt) cfg.train.seed = *seed_opt;
    if (max_len_opt) cfg.max_len = *max_len_opt;
    if (epochs_opt) cfg.train.epochs = *epochs_opt;
    if (batch_opt) cfg.train.batch_size = *batch_opt;
    if (vocab_max_opt) cfg.vocab_max = *vocab_max_opt;
    if (embed_dim_opt) cfg.embed_dim = *embed_dim_opt;
    if (embeddings_opt) cfg.embeddings_path = *embeddings_opt;
    if (no_scorer) cfg.scorer = false;
    apply_sets(cfg, sets);

    if (train_cmd->parsed()) return cmd_train(cfg);
    if (gen_cmd->parsed()) return cmd_generate(cfg, checkpoint, limit);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, checkpoint);
    if (cmp_cmd->parsed()) return cmd_compare(cfg, checkpoints);
    if (pert_cmd->parsed()) return cmd_perturb(cfg, checkpoint, kinds, popts, table_metric);
    if (heat_cmd->parsed()) return cmd_heatmap(cfg, checkpoint, dialog_path, index);
    if (stats_cmd->parsed()) return cmd_stats(cfg);
  } catch (const Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
