#include "dialoglab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace dialoglab {

namespace {

using nlohmann::json;

const std::vector<std::string> kReserved = {"<pad>", "<sos>", "<eos>", "<unk>", "<sep>"};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

PosTag parse_tag(const std::string& t, int line_no) {
  if (t == "N") return PosTag::Noun;
  if (t == "V") return PosTag::Verb;
  if (t == "O") return PosTag::Other;
  throw parse_error("line " + std::to_string(line_no) + ": unknown POS tag '" + t + "'");
}

Utterance make_utterance(const std::string& text, const LoadOptions& opts, int line_no) {
  Utterance u;
  u.tokens = split_ws(opts.lowercase ? lower(text) : text);
  if (u.tokens.empty())
    throw validation_error("line " + std::to_string(line_no) + ": empty utterance");
  if (opts.max_len > 0 && static_cast<int>(u.tokens.size()) > opts.max_len) {
    u.tokens.resize(static_cast<size_t>(opts.max_len));
    if (!u.pos_tags.empty()) u.pos_tags.resize(static_cast<size_t>(opts.max_len));
  }
  return u;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : kReserved) {
    token_to_id_[t] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(t);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw lookup_error("token id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

long long Vocabulary::frequency(const std::string& token) const {
  auto it = freq_.find(token);
  return it == freq_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::add(const std::string& token) {
  if (token_to_id_.count(token)) return;
  token_to_id_[token] = static_cast<int>(id_to_token_.size());
  id_to_token_.push_back(token);
}

Corpus parse_corpus_jsonl(const std::string& text, const LoadOptions& opts) {
  Corpus corpus;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw parse_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("context") || !rec.contains("response"))
      throw parse_error("line " + std::to_string(line_no) +
                        ": record must have \"context\" and \"response\"");

    Dialog d;
    std::vector<Utterance> raw_context;
    for (const auto& u : rec.at("context")) {
      if (!u.is_string()) throw parse_error("line " + std::to_string(line_no) + ": context entries must be strings");
      raw_context.push_back(make_utterance(u.get<std::string>(), opts, line_no));
    }
    if (raw_context.empty())
      throw validation_error("line " + std::to_string(line_no) + ": empty context");
    d.response = make_utterance(rec.at("response").get<std::string>(), opts, line_no);

    if (rec.contains("pos")) {
      const auto& pos = rec.at("pos");
      if (!pos.is_array() || pos.size() != raw_context.size() + 1)
        throw parse_error("line " + std::to_string(line_no) +
                          ": \"pos\" must hold one tag array per context utterance plus response");
      for (size_t i = 0; i < raw_context.size(); ++i) {
        std::vector<PosTag> tags;
        for (const auto& t : pos[i]) tags.push_back(parse_tag(t.get<std::string>(), line_no));
        if (opts.max_len > 0 && static_cast<int>(tags.size()) > opts.max_len)
          tags.resize(static_cast<size_t>(opts.max_len));
        if (tags.size() != raw_context[i].tokens.size())
          throw parse_error("line " + std::to_string(line_no) + ": POS tags not parallel to tokens");
        raw_context[i].pos_tags = std::move(tags);
      }
      std::vector<PosTag> rtags;
      for (const auto& t : pos.back()) rtags.push_back(parse_tag(t.get<std::string>(), line_no));
      if (opts.max_len > 0 && static_cast<int>(rtags.size()) > opts.max_len)
        rtags.resize(static_cast<size_t>(opts.max_len));
      if (rtags.size() != d.response.tokens.size())
        throw parse_error("line " + std::to_string(line_no) + ": POS tags not parallel to response");
      d.response.pos_tags = rtags;
      d.response_pos = std::move(rtags);
    }

    // Persona sentences go at the forefront of the context.
    if (rec.contains("persona")) {
      for (const auto& p : rec.at("persona"))
        d.context.push_back(make_utterance(p.get<std::string>(), opts, line_no));
    }
    for (auto& u : raw_context) d.context.push_back(std::move(u));

    if (opts.max_turns > 0 && static_cast<int>(d.context.size()) > opts.max_turns)
      d.context.erase(d.context.begin(),
                      d.context.end() - static_cast<long>(opts.max_turns));
    corpus.dialogs.push_back(std::move(d));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus_jsonl(buf.str(), opts);
}

Vocabulary build_vocab(const Corpus& corpus, int max_size, int min_freq) {
  if (max_size <= Vocabulary::kNumReserved)
    throw config_error("vocab max_size must exceed the " +
                       std::to_string(Vocabulary::kNumReserved) + " reserved tokens");
  std::map<std::string, long long> freq;
  for (const Dialog& d : corpus.dialogs) {
    for (const Utterance& u : d.context)
      for (const auto& t : u.tokens) ++freq[t];
    for (const auto& t : d.response.tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [tok, count] : ranked) {
    if (count < min_freq) break;
    if (vocab.size() >= max_size) break;
    vocab.add(tok);
    vocab.note_frequency(tok, count);
  }
  return vocab;
}

std::vector<int> flatten(const Dialog& dialog, const Vocabulary& vocab) {
  std::vector<int> out;
  for (size_t i = 0; i < dialog.context.size(); ++i) {
    if (i) out.push_back(Vocabulary::kSep);
    for (const auto& t : dialog.context[i].tokens) out.push_back(vocab.id(t));
  }
  return out;
}

CorpusStats stats(const Corpus& corpus, int vocab_size) {
  if (corpus.dialogs.empty()) throw validation_error("stats of an empty corpus");
  CorpusStats s;
  long long turn_sum = 0, len_sum = 0, utt_count = 0;
  s.min_turns = std::numeric_limits<int>::max();
  s.min_len = std::numeric_limits<int>::max();
  for (const Dialog& d : corpus.dialogs) {
    int turns = static_cast<int>(d.context.size());
    s.max_turns = std::max(s.max_turns, turns);
    s.min_turns = std::min(s.min_turns, turns);
    turn_sum += turns;
    for (const Utterance& u : d.context) {
      int len = static_cast<int>(u.tokens.size());
      s.max_len = std::max(s.max_len, len);
      s.min_len = std::min(s.min_len, len);
      len_sum += len;
      ++utt_count;
    }
  }
  s.avg_turns = static_cast<double>(turn_sum) / static_cast<double>(corpus.dialogs.size());
  s.avg_len = static_cast<double>(len_sum) / static_cast<double>(utt_count);
  s.vocab_size = vocab_size;
  return s;
}

}  // namespace dialoglab
