#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dialoglab/metrics.hpp"

using namespace dialoglab;

namespace {

// independent long-double helpers for the oracles
long double lcos(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += (long double)a[i] * b[i];
    na += (long double)a[i] * a[i];
    nb += (long double)b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

std::vector<double> lmean(const std::vector<std::string>& toks, const EmbeddingProvider& p) {
  std::vector<double> m(static_cast<size_t>(p.dimension()), 0.0);
  for (const auto& t : toks) {
    auto v = p.lookup(t);
    for (size_t i = 0; i < m.size(); ++i) m[i] += v[i];
  }
  for (double& x : m) x /= static_cast<double>(toks.size());
  return m;
}

std::vector<double> lextrema(const std::vector<std::string>& toks, const EmbeddingProvider& p) {
  std::vector<double> e;
  for (const auto& t : toks) {
    auto v = p.lookup(t);
    if (e.empty()) {
      e = v;
      continue;
    }
    for (size_t i = 0; i < e.size(); ++i)
      if (std::abs(v[i]) > std::abs(e[i]) || (std::abs(v[i]) == std::abs(e[i]) && v[i] > e[i]))
        e[i] = v[i];
  }
  return e;
}

long double lgreedy_dir(const TokenList& from, const TokenList& to,
                        const EmbeddingProvider& p) {
  long double total = 0;
  for (const auto& f : from) {
    long double best = -1;
    for (const auto& t : to) best = std::max(best, lcos(p.lookup(f), p.lookup(t)));
    total += best;
  }
  return total / static_cast<long double>(from.size());
}

std::string write_embed_file(const std::string& body) {
  std::string path = "/tmp/test_metrics_embed.txt";
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("distinct n-gram ratio: analytic cases and a brute-force sweep") {
  CHECK(distinct_n({{"a", "a", "a"}}, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(distinct_n({{"a", "b"}, {"c", "d"}}, 2) == 1.0);

  // order of responses is irrelevant and the ratio never exceeds 1
  std::mt19937_64 g(5);
  std::uniform_int_distribution<int> len(1, 6), tok(0, 7);
  std::vector<TokenList> responses;
  for (int i = 0; i < 50; ++i) {
    TokenList r;
    int L = len(g);
    for (int j = 0; j < L; ++j) r.push_back("t" + std::to_string(tok(g)));
    responses.push_back(r);
  }
  for (int n = 1; n <= 2; ++n) {
    std::set<std::vector<std::string>> seen;
    long long total = 0;
    for (const TokenList& r : responses)
      for (size_t i = 0; i + n <= r.size(); ++i) {
        seen.insert({r.begin() + static_cast<long>(i), r.begin() + static_cast<long>(i) + n});
        ++total;
      }
    double want = static_cast<double>(seen.size()) / static_cast<double>(total);
    CHECK(distinct_n(responses, n) == doctest::Approx(want).epsilon(1e-15));
    CHECK(distinct_n(responses, n) <= 1.0);
    std::vector<TokenList> shuffled = responses;
    std::shuffle(shuffled.begin(), shuffled.end(), g);
    CHECK(distinct_n(shuffled, n) == distinct_n(responses, n));
  }

  CHECK_THROWS_AS(distinct_n({{"a"}, {"b"}}, 2), Error);
}

TEST_CASE("embedding average on controlled vectors") {
  std::string path = write_embed_file(
      "p 1 0\n"
      "q -1 0\n"
      "r 0 1\n");
  EmbeddingProvider p = EmbeddingProvider::from_file(path);
  CHECK(embedding_average({"p", "r"}, {"p", "r"}, p) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(embedding_average({"p"}, {"q"}, p) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(embedding_average({"p"}, {"r"}, p) == doctest::Approx(0.0).epsilon(1e-15));

  // unknown tokens hit the zero UNK vector; a zero mean scores 0 by definition
  CHECK(embedding_average({"nope"}, {"p"}, p) == 0.0);
  CHECK_THROWS_AS(embedding_average({}, {"p"}, p), Error);
}

TEST_CASE("vector extrema: reduction cases and a signed-extrema scan") {
  std::string path = write_embed_file(
      "a 2 -1\n"
      "b -2 3\n"
      "c 1 -3\n");
  EmbeddingProvider p = EmbeddingProvider::from_file(path);
  CHECK(vector_extrema({"a", "b"}, {"a", "b"}, p) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(vector_extrema({"a"}, {"b"}, p) ==
        doctest::Approx((double)lcos(p.lookup("a"), p.lookup("b"))).epsilon(1e-14));

  // |2| vs |-2| in dim 0 ties to the positive; dim 1 ties between 3 and -3 too
  std::vector<double> e = lextrema({"a", "b", "c"}, p);
  CHECK(e[0] == 2.0);
  CHECK(e[1] == 3.0);
  double want = (double)lcos(e, lextrema({"b", "c"}, p));
  CHECK(vector_extrema({"a", "b", "c"}, {"b", "c"}, p) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("greedy matching: symmetrized double-loop oracle") {
  EmbeddingProvider p = EmbeddingProvider::seeded(8, 17);
  TokenList hyp = {"sun", "bright"};
  TokenList ref = {"the", "sun", "shines"};
  double want = 0.5 * (double)(lgreedy_dir(hyp, ref, p) + lgreedy_dir(ref, hyp, p));
  CHECK(greedy_matching(hyp, ref, p) == doctest::Approx(want).epsilon(1e-14));
  CHECK(greedy_matching(hyp, ref, p) == greedy_matching(ref, hyp, p));
  CHECK(greedy_matching(ref, ref, p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("idf-weighted greedy F1: identity, orthogonal, weighted oracle") {
  std::string path = write_embed_file(
      "a 1 0\n"
      "b 0 1\n"
      "c 1 1\n");
  EmbeddingProvider p = EmbeddingProvider::from_file(path);

  p.set_idf({});
  CHECK(greedy_idf_f1({"a", "c"}, {"a", "c"}, p) == doctest::Approx(1.0).epsilon(1e-12));
  // orthogonal disjoint tokens: cosine 0 rescales to 0.5 in both directions
  CHECK(greedy_idf_f1({"a"}, {"b"}, p) == doctest::Approx(0.5).epsilon(1e-14));

  // weighted three-token case against a hand-rolled weighted double loop
  p.set_idf({{"a", 2.0}, {"b", 0.5}, {"c", 1.0}});
  TokenList hyp = {"a", "b"};
  TokenList ref = {"b", "c"};
  auto dir = [&](const TokenList& from, const TokenList& to) {
    long double total = 0, wsum = 0;
    for (const auto& f : from) {
      long double best = -1;
      for (const auto& t : to) best = std::max(best, lcos(p.lookup(f), p.lookup(t)));
      long double w = p.idf(f);
      total += w * (1.0L + best) / 2.0L;
      wsum += w;
    }
    return total / wsum;
  };
  long double prec = dir(hyp, ref), rec = dir(ref, hyp);
  double want = (double)(2.0L * prec * rec / (prec + rec));
  CHECK(greedy_idf_f1(hyp, ref, p) == doctest::Approx(want).epsilon(1e-14));

  // an all-zero idf table falls back to uniform weights
  p.set_idf({{"a", 0.0}, {"b", 0.0}});
  double uniform = greedy_idf_f1(hyp, ref, p);
  p.set_idf({{"a", 3.0}, {"b", 3.0}, {"c", 3.0}});
  CHECK(uniform == doctest::Approx(greedy_idf_f1(hyp, ref, p)).epsilon(1e-14));
}

TEST_CASE("idf table follows the smoothed document-frequency formula") {
  EmbeddingProvider p = EmbeddingProvider::seeded(4, 1);
  p.build_idf({{"a", "b"}, {"a"}, {"c", "a"}});
  CHECK(p.idf("a") == doctest::Approx(std::log(4.0 / 4.0) + 1.0).epsilon(1e-14));
  CHECK(p.idf("b") == doctest::Approx(std::log(4.0 / 2.0) + 1.0).epsilon(1e-14));
  CHECK(p.idf("never") == 0.0);
  CHECK(p.has_idf());
}

TEST_CASE("100 random pairs match extended-precision oracles") {
  EmbeddingProvider p = EmbeddingProvider::seeded(12, 99);
  std::mt19937_64 g(42);
  std::uniform_int_distribution<int> len(1, 7), tok(0, 30);
  auto sentence = [&] {
    TokenList s;
    int L = len(g);
    for (int i = 0; i < L; ++i) s.push_back("w" + std::to_string(tok(g)));
    return s;
  };
  std::map<std::string, double> idf;
  for (int i = 0; i <= 30; ++i) idf["w" + std::to_string(i)] = 0.5 + 0.1 * i;
  p.set_idf(idf);

  for (int trial = 0; trial < 100; ++trial) {
    TokenList hyp = sentence(), ref = sentence();

    double avg_want = (double)lcos(lmean(hyp, p), lmean(ref, p));
    CHECK(std::abs(embedding_average(hyp, ref, p) - avg_want) < 1e-9);

    double ext_want = (double)lcos(lextrema(hyp, p), lextrema(ref, p));
    CHECK(std::abs(vector_extrema(hyp, ref, p) - ext_want) < 1e-9);

    double gre_want = 0.5 * (double)(lgreedy_dir(hyp, ref, p) + lgreedy_dir(ref, hyp, p));
    CHECK(std::abs(greedy_matching(hyp, ref, p) - gre_want) < 1e-9);

    auto dir = [&](const TokenList& from, const TokenList& to) {
      long double total = 0, wsum = 0;
      for (const auto& f : from) {
        long double best = -1;
        for (const auto& t : to) best = std::max(best, lcos(p.lookup(f), p.lookup(t)));
        total += (long double)p.idf(f) * (1.0L + best) / 2.0L;
        wsum += p.idf(f);
      }
      return total / wsum;
    };
    long double prec = dir(hyp, ref), rec = dir(ref, hyp);
    double f1_want = (double)(2.0L * prec * rec / (prec + rec));
    CHECK(std::abs(greedy_idf_f1(hyp, ref, p) - f1_want) < 1e-9);
  }
}

TEST_CASE("learned scorer: range, separable corpus AUC, pairwise ranking") {
  // responses share a topic token with their context, so true pairs are separable
  std::string text;
  for (int i = 0; i < 500; ++i) {
    std::string kw = "topic" + std::to_string(i % 10);
    text += R"({"context": [")" + kw + R"( filler one", "filler two"], "response": ")" + kw +
            " reply tail\"}\n";
  }
  Corpus corpus = parse_corpus_jsonl(text);
  EmbeddingProvider p = EmbeddingProvider::seeded(16, 7);

  // untrained scorer already squashes into [0,1]
  LearnedScorer raw(16, 32, 3);
  for (int i = 0; i < 5; ++i) {
    double s = raw.score({"topic1", "filler"}, corpus.dialogs[i].response.tokens, p);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }

  ScorerTrainResult r = train_unreferenced(corpus, p, 11);
  CHECK(r.holdout_auc >= 0.9);

  int wins = 0, total = 0;
  for (size_t i = 0; i < corpus.dialogs.size(); ++i) {
    TokenList ctx;
    for (const Utterance& u : corpus.dialogs[i].context)
      ctx.insert(ctx.end(), u.tokens.begin(), u.tokens.end());
    size_t j = (i + 5) % corpus.dialogs.size();  // different topic bucket
    double pos = r.scorer.score(ctx, corpus.dialogs[i].response.tokens, p);
    double neg = r.scorer.score(ctx, corpus.dialogs[j].response.tokens, p);
    CHECK(pos >= 0.0);
    CHECK(pos <= 1.0);
    if (pos > neg) ++wins;
    ++total;
  }
  CHECK(wins >= (total * 9) / 10);

  Corpus too_small = parse_corpus_jsonl(R"({"context": ["a"], "response": "b"})");
  CHECK_THROWS_AS(train_unreferenced(too_small, p, 1), Error);
}

TEST_CASE("evaluate: perfect outputs, composition, misalignment") {
  EmbeddingProvider p = EmbeddingProvider::seeded(8, 21);
  std::vector<TokenList> refs = {{"hello", "there"}, {"nice", "day", "today"}, {"bye"}};
  p.build_idf(refs);

  MetricReport perfect = evaluate(refs, refs, refs, p, nullptr);
  CHECK(perfect.average == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.extrema == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.greedy == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(perfect.greedy_idf_f1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(!perfect.has_learned);

  // a 10-sample set composes the per-metric means
  std::mt19937_64 g(8);
  std::uniform_int_distribution<int> len(1, 5), tok(0, 20);
  auto sentence = [&] {
    TokenList s;
    int L = len(g);
    for (int i = 0; i < L; ++i) s.push_back("v" + std::to_string(tok(g)));
    return s;
  };
  std::vector<TokenList> outs, golds;
  for (int i = 0; i < 10; ++i) {
    outs.push_back(sentence());
    golds.push_back(sentence());
  }
  p.build_idf(golds);
  MetricReport rep = evaluate(outs, golds, golds, p, nullptr);
  double avg = 0, ext = 0, gre = 0, idf = 0;
  for (int i = 0; i < 10; ++i) {
    avg += embedding_average(outs[i], golds[i], p);
    ext += vector_extrema(outs[i], golds[i], p);
    gre += greedy_matching(outs[i], golds[i], p);
    idf += greedy_idf_f1(outs[i], golds[i], p);
  }
  CHECK(rep.average == doctest::Approx(avg / 10).epsilon(1e-14));
  CHECK(rep.extrema == doctest::Approx(ext / 10).epsilon(1e-14));
  CHECK(rep.greedy == doctest::Approx(gre / 10).epsilon(1e-14));
  CHECK(rep.greedy_idf_f1 == doctest::Approx(idf / 10).epsilon(1e-14));
  CHECK(rep.dist1 == doctest::Approx(distinct_n(outs, 1)).epsilon(1e-15));
  CHECK(rep.dist2 == doctest::Approx(distinct_n(outs, 2)).epsilon(1e-15));

  CHECK_THROWS_AS(evaluate(outs, refs, outs, p, nullptr), Error);
  CHECK_THROWS_AS(evaluate({}, {}, {}, p, nullptr), Error);
}

TEST_CASE("report serialization: header columns, percent rows, json round trip") {
  MetricReport r;
  r.dist1 = 0.0267;
  r.dist2 = 0.1371;
  r.average = 0.7;
  r.extrema = 0.5;
  r.greedy = 0.6;
  r.greedy_idf_f1 = 0.8;
  r.learned_score = 0.9;
  r.has_learned = true;

  std::string header = metric_report_header();
  for (const char* col :
       {"Model", "Dist-1", "Dist-2", "Average", "Extrema", "Greedy", "G-idf-F1", "Learned"})
    CHECK(header.find(col) != std::string::npos);

  std::string row = metric_report_row("hred", r);
  CHECK(row.find("hred") == 0);
  CHECK(row.find("2.67") != std::string::npos);   // dist values reported as percentages
  CHECK(row.find("13.71") != std::string::npos);
  CHECK(row.find("90.00") != std::string::npos);

  r.has_learned = false;
  std::string norow = metric_report_row("hred", r);
  CHECK(norow.find(" -") != std::string::npos);

  nlohmann::json j = nlohmann::json::parse(metric_report_json(r));
  CHECK(j["dist1"] == 0.0267);
  CHECK(j["greedy_idf_f1"] == 0.8);
  CHECK(!j.contains("learned"));
  r.has_learned = true;
  nlohmann::json j2 = nlohmann::json::parse(metric_report_json(r));
  CHECK(j2["learned"] == 0.9);
}

TEST_CASE("embedding providers: determinism, file parsing, error paths") {
  EmbeddingProvider a = EmbeddingProvider::seeded(6, 5);
  EmbeddingProvider b = EmbeddingProvider::seeded(6, 5);
  CHECK(a.lookup("word") == b.lookup("word"));
  CHECK(a.lookup("word") != a.lookup("other"));
  CHECK(static_cast<int>(a.lookup("word").size()) == 6);

  std::string path = write_embed_file(
      "cat 1 2 3\n"
      "dog 4 5 6\n"
      "<unk> 0.5 0.5 0.5\n");
  EmbeddingProvider f = EmbeddingProvider::from_file(path);
  CHECK(f.dimension() == 3);
  CHECK(f.lookup("cat") == std::vector<double>{1, 2, 3});
  CHECK(f.lookup("missing") == std::vector<double>{0.5, 0.5, 0.5});

  CHECK_THROWS_AS(EmbeddingProvider::from_file("/tmp/does_not_exist_embed.txt"), Error);
  std::string badpath = write_embed_file("cat 1 2\ndog 1 2 3\n");
  CHECK_THROWS_AS(EmbeddingProvider::from_file(badpath), Error);
  CHECK_THROWS_AS(EmbeddingProvider::seeded(0, 1), Error);
}
