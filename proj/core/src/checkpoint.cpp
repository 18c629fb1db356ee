#include "dialoglab/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace dialoglab {

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"architecture", to_string(c.architecture)},
      {"word_attention", c.word_attention},
      {"hidden", c.hidden},
      {"embed", c.embed},
      {"utterance_layers", c.utterance_layers},
      {"bidirectional", c.bidirectional},
      {"context_layers", c.context_layers},
      {"decoder_layers", c.decoder_layers},
      {"heads", c.heads},
      {"d_model", c.d_model},
      {"transformer_layers", c.transformer_layers},
      {"dropout", c.dropout},
      {"latent_dim", c.latent_dim},
      {"max_decode_len", c.max_decode_len},
      {"vocab_size", c.vocab_size},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    c.word_attention = j.at("word_attention").get<bool>();
    c.hidden = j.at("hidden").get<int>();
    c.embed = j.at("embed").get<int>();
    c.utterance_layers = j.at("utterance_layers").get<int>();
    c.bidirectional = j.at("bidirectional").get<bool>();
    c.context_layers = j.at("context_layers").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.transformer_layers = j.at("transformer_layers").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.max_decode_len = j.at("max_decode_len").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("bad model config: ") + e.what());
  }
  return c;
}

}  // namespace

std::string model_config_json(const ModelConfig& config) {
  return config_to_json(config).dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw parse_error("model config is not valid JSON");
  return config_from_json(j);
}

void save_checkpoint(const std::string& path, const DialogModel& model,
                     const Vocabulary& vocab, uint64_t seed) {
  nlohmann::json j;
  j["format"] = "dialoglab-checkpoint";
  j["version"] = kFormatVersion;
  j["seed"] = seed;
  j["config"] = config_to_json(model.config());
  nlohmann::json v = nlohmann::json::object();
  v["tokens"] = vocab.tokens();
  nlohmann::json freqs = nlohmann::json::object();
  for (const auto& [tok, count] : vocab.frequencies()) freqs[tok] = count;
  v["frequencies"] = freqs;
  j["vocab"] = v;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : model.params().all()) {
    params[name] = nlohmann::json{{"shape", t.shape()}, {"data", t.data()}};
  }
  j["params"] = params;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write checkpoint '" + path + "'");
  os << j.dump() << "\n";
  if (!os) throw io_error("short write on checkpoint '" + path + "'");
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot read checkpoint '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw parse_error("checkpoint '" + path + "' is not valid JSON");
  if (j.value("format", "") != "dialoglab-checkpoint")
    throw compat_error("'" + path + "' is not a dialoglab checkpoint");
  int version = j.value("version", -1);
  if (version != kFormatVersion)
    throw compat_error("unsupported checkpoint version " + std::to_string(version));

  LoadedModel out;
  out.seed = j.value("seed", static_cast<uint64_t>(0));
  ModelConfig config = config_from_json(j.at("config"));

  const auto& v = j.at("vocab");
  auto tokens = v.at("tokens").get<std::vector<std::string>>();
  if (static_cast<int>(tokens.size()) < Vocabulary::kNumReserved)
    throw compat_error("checkpoint vocabulary is missing the reserved tokens");
  for (int i = Vocabulary::kNumReserved; i < static_cast<int>(tokens.size()); ++i)
    out.vocab.add(tokens[i]);
  if (v.contains("frequencies"))
    for (const auto& [tok, count] : v.at("frequencies").items())
      out.vocab.note_frequency(tok, count.get<long long>());
  if (out.vocab.size() != config.vocab_size)
    throw compat_error("checkpoint vocabulary size " + std::to_string(out.vocab.size()) +
                       " does not match config vocab_size " +
                       std::to_string(config.vocab_size));

  out.model = std::make_unique<DialogModel>(config, out.seed);

  auto& live = out.model->params().all();
  const auto& stored = j.at("params");
  for (auto& [name, t] : live) {
    if (!stored.contains(name))
      throw compat_error("checkpoint is missing parameter '" + name + "'");
    const auto& p = stored.at(name);
    auto shape = p.at("shape").get<Shape>();
    if (shape != t.shape())
      throw compat_error("parameter '" + name + "' has a mismatched shape in the checkpoint");
    auto data = p.at("data").get<std::vector<double>>();
    if (data.size() != t.data().size())
      throw compat_error("parameter '" + name + "' has a mismatched length in the checkpoint");
    t.data() = std::move(data);
  }
  for (const auto& [name, p] : stored.items())
    if (!live.count(name))
      throw compat_error("checkpoint has an unexpected parameter '" + name + "'");
  return out;
}

}  // namespace dialoglab
