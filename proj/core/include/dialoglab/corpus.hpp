#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialoglab/error.hpp"

namespace dialoglab {

enum class PosTag { Noun, Verb, Other };

struct Utterance {
  std::vector<std::string> tokens;
  std::vector<PosTag> pos_tags;  // empty or parallel to tokens
  std::string speaker;

  bool has_pos() const { return !pos_tags.empty(); }
};

struct Dialog {
  std::vector<Utterance> context;  // persona already folded in at load time
  Utterance response;
  std::vector<PosTag> response_pos;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;
  static constexpr int kNumReserved = 5;

  Vocabulary();

  int id(const std::string& token) const;  // UNK for out-of-vocabulary
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  long long frequency(const std::string& token) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void add(const std::string& token);  // used by build_vocab

  std::vector<std::string> tokens() const { return id_to_token_; }
  void note_frequency(const std::string& token, long long count) { freq_[token] = count; }
  const std::map<std::string, long long>& frequencies() const { return freq_; }

 private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::map<std::string, long long> freq_;
};

struct Corpus {
  std::vector<Dialog> dialogs;
};

struct CorpusStats {
  int max_turns = 0;
  double avg_turns = 0.0;
  int min_turns = 0;
  int max_len = 0;
  double avg_len = 0.0;
  int min_len = 0;
  int vocab_size = 0;
};

struct LoadOptions {
  bool lowercase = true;
  int max_turns = 0;  // 0 = unlimited; otherwise keep the most recent turns
  int max_len = 0;    // 0 = unlimited; otherwise keep the first max_len tokens
};

Corpus load_corpus(const std::string& path, const LoadOptions& opts = {});
Corpus parse_corpus_jsonl(const std::string& text, const LoadOptions& opts = {});

Vocabulary build_vocab(const Corpus& corpus, int max_size, int min_freq = 1);

// u1 + SEP + u2 + SEP + ... + um, no trailing SEP.
std::vector<int> flatten(const Dialog& dialog, const Vocabulary& vocab);

CorpusStats stats(const Corpus& corpus, int vocab_size = 0);

}  // namespace dialoglab
