/* dialogen - hierarchical latent-variable dialogue models.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dialogen/evaluation.hpp"
#include "dialogen/rng.hpp"

using namespace dialogen;

TEST_SUITE_BEGIN("evaluation");

namespace {

EmbeddingTable toy_table() {
  EmbeddingTable t;
  t.insert("a", {1.0, 0.0});
  t.insert("b", {0.0, 1.0});
  t.insert("c", {1.0, 0.0});
  t.insert("d", {-1.0, 0.0});
  t.insert("p", {1.0, -3.0});
  t.insert("q", {2.0, 1.0});
  return t;
}

}  // namespace

TEST_CASE("embedding_average hand cases") {
  EmbeddingTable t = toy_table();
  Words same{"a", "b"};
  CHECK(*embedding_average(same, same, t) == doctest::Approx(1.0).epsilon(1e-15));

  // Orthogonal single words.
  CHECK(*embedding_average({"a"}, {"b"}, t) == doctest::Approx(0.0).epsilon(1e-15));

  // {a b} vs {c}: cos((0.5, 0.5), (1, 0)) = 1/sqrt(2).
  CHECK(*embedding_average({"a", "b"}, {"c"}, t) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  // No in-vocabulary words: missing, never zero.
  CHECK_FALSE(embedding_average({"zzz"}, {"a"}, t).has_value());
  CHECK(embedding_average({"zzz", "a"}, {"a"}, t).has_value());
}

TEST_CASE("embedding_extrema hand cases") {
  EmbeddingTable t = toy_table();
  // Words (1,-3) and (2,1): extrema (2,-3), sign preserved.
  Words pq{"p", "q"};
  // Against itself: 1.0.
  CHECK(*embedding_extrema(pq, pq, t) == doctest::Approx(1.0).epsilon(1e-15));

  // Against a reference holding exactly (2,-3): cosine 1.
  EmbeddingTable t2 = toy_table();
  t2.insert("x", {2.0, -3.0});
  CHECK(*embedding_extrema(pq, {"x"}, t2) == doctest::Approx(1.0).epsilon(1e-12));

  // One-word texts reduce to embedding_average.
  CHECK(*embedding_extrema({"a"}, {"b"}, t) ==
        doctest::Approx(*embedding_average({"a"}, {"b"}, t)).epsilon(1e-15));
}

TEST_CASE("embedding_greedy matches an exhaustive alignment oracle") {
  EmbeddingTable t = toy_table();
  Words same{"a", "b"};
  CHECK(embedding_greedy(same, same, t)->value == doctest::Approx(1.0).epsilon(1e-15));

  // One-word response present in the reference: forward direction 1.0.
  auto g = embedding_greedy({"a"}, {"a", "b"}, t);
  CHECK(g->response_to_reference == doctest::Approx(1.0).epsilon(1e-15));

  // 2x2 brute-force alignment: for each word the best cosine to the other
  // side, each direction averaged, then direction-symmetrized.
  Words resp{"p", "q"};
  Words ref{"a", "b"};
  auto cosv = [&](const char* x, const char* y) {
    const auto& vx = *t.find(x);
    const auto& vy = *t.find(y);
    const double num = vx[0] * vy[0] + vx[1] * vy[1];
    return num / (std::hypot(vx[0], vx[1]) * std::hypot(vy[0], vy[1]));
  };
  const double fwd =
      0.5 * (std::max(cosv("p", "a"), cosv("p", "b")) + std::max(cosv("q", "a"), cosv("q", "b")));
  const double bwd =
      0.5 * (std::max(cosv("a", "p"), cosv("a", "q")) + std::max(cosv("b", "p"), cosv("b", "q")));
  auto score = embedding_greedy(resp, ref, t);
  CHECK(score->response_to_reference == doctest::Approx(fwd).epsilon(1e-12));
  CHECK(score->reference_to_response == doctest::Approx(bwd).epsilon(1e-12));
  CHECK(score->value == doctest::Approx(0.5 * (fwd + bwd)).epsilon(1e-12));
}

TEST_CASE("embedding metrics are symmetric and order-invariant") {
  EmbeddingTable t = toy_table();
  Words r1{"p", "a", "b"};
  Words r2{"q", "c"};
  CHECK(*embedding_average(r1, r2, t) == doctest::Approx(*embedding_average(r2, r1, t)));
  CHECK(*embedding_extrema(r1, r2, t) == doctest::Approx(*embedding_extrema(r2, r1, t)));
  CHECK(embedding_greedy(r1, r2, t)->value ==
        doctest::Approx(embedding_greedy(r2, r1, t)->value));

  Words shuffled{"b", "p", "a"};
  CHECK(*embedding_average(r1, r2, t) == doctest::Approx(*embedding_average(shuffled, r2, t)));
  CHECK(*embedding_extrema(r1, r2, t) == doctest::Approx(*embedding_extrema(shuffled, r2, t)));
  CHECK(embedding_greedy(r1, r2, t)->value ==
        doctest::Approx(embedding_greedy(shuffled, r2, t)->value));

  // Range check over random pairs.
  Rng rng(4);
  std::vector<std::string> lexicon{"a", "b", "c", "d", "p", "q"};
  for (int trial = 0; trial < 20; ++trial) {
    Words x, y;
    for (int i = 0; i <= static_cast<int>(rng.below(3)); ++i)
      x.push_back(lexicon[rng.below(lexicon.size())]);
    for (int i = 0; i <= static_cast<int>(rng.below(3)); ++i)
      y.push_back(lexicon[rng.below(lexicon.size())]);
    for (auto v : {*embedding_average(x, y, t), *embedding_extrema(x, y, t),
                   embedding_greedy(x, y, t)->value}) {
      CHECK(v >= -1.0 - 1e-12);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("embedding table text format") {
  EmbeddingTable t = EmbeddingTable::from_text("2 3\nfoo 1 0 0.5\nbar -1 2.25 0\n");
  CHECK(t.dim() == 3);
  CHECK(t.size() == 2);
  CHECK((*t.find("bar"))[1] == 2.25);
  CHECK(t.find("baz") == nullptr);
  CHECK_THROWS_AS(EmbeddingTable::from_text("2 3\nfoo 1 0 0.5\n"), std::runtime_error);
  CHECK_THROWS_AS(EmbeddingTable::from_text("1 3\nfoo 1 0\n"), std::runtime_error);
  CHECK_THROWS_AS(EmbeddingTable::from_text(""), std::runtime_error);
}

TEST_CASE("response_stats: uniform and MLE unigram cases") {
  // Uniform unigram over two words: 1 bit per word.
  UnigramModel uniform = UnigramModel::from_corpus_text("a b\n");
  const Words resp[] = {{"a", "b"}};
  ResponseStats s = response_stats(resp, uniform);
  CHECK(s.mean_length == 2.0);
  CHECK(s.mean_word_entropy == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.mean_utterance_entropy == doctest::Approx(2.0).epsilon(1e-15));

  // Corpus "a a a b": H_U("a b") = -log2(3/4) - log2(1/4).
  UnigramModel skewed = UnigramModel::from_corpus_text("a a a b\n");
  ResponseStats s2 = response_stats(resp, skewed);
  CHECK(s2.mean_utterance_entropy == doctest::Approx(2.41504).epsilon(1e-5));
  CHECK(s2.mean_word_entropy ==
        doctest::Approx(s2.mean_utterance_entropy / 2.0).epsilon(1e-12));

  // Empty response set is an error, not zeros.
  CHECK_THROWS_AS(response_stats(std::span<const Words>{}, uniform), std::invalid_argument);

  // Zero-probability token names itself.
  const Words bad[] = {{"zzz"}};
  CHECK_THROWS_WITH_AS(response_stats(bad, uniform), doctest::Contains("zzz"),
                       std::invalid_argument);

  // The separator token is not part of the unigram distribution.
  UnigramModel with_sep = UnigramModel::from_corpus_text("a </u> b\n");
  CHECK_FALSE(with_sep.has("</u>"));
}

TEST_CASE("preference_ci hand cases and scaling") {
  PreferenceCi degenerate = preference_ci({10, 0, 0});
  CHECK(degenerate.wins.percent == 100.0);
  CHECK(degenerate.wins.margin == 0.0);

  PreferenceCi even = preference_ci({50, 30, 20});
  CHECK(even.wins.percent + even.losses.percent + even.ties.percent ==
        doctest::Approx(100.0).epsilon(1e-12));

  PreferenceCi half = preference_ci({50, 25, 25});
  CHECK(half.wins.percent == 50.0);
  CHECK(half.wins.margin == doctest::Approx(1.645 * std::sqrt(0.25 / 100.0) * 100.0)
                                .epsilon(1e-12));
  CHECK(half.wins.margin == doctest::Approx(8.225).epsilon(1e-12));

  // Margins shrink as 1/sqrt(n).
  PreferenceCi big = preference_ci({200, 100, 100});
  CHECK(half.wins.margin / big.wins.margin == doctest::Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(preference_ci({0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(preference_ci({1, 0, 0}, 0.5), std::invalid_argument);
  CHECK(preference_ci({1, 1, 0}, 0.95).z == 1.960);
}

TEST_CASE("tfidf retrieval: self-match, singleton, hand-computed, ties") {
  std::vector<std::pair<Words, std::string>> pool = {
      {{"install", "ubuntu", "disk"}, "use the installer"},
      {{"wifi", "driver", "broken"}, "check lspci"},
      {{"disk", "full", "cleanup"}, "apt clean"},
  };
  TfidfIndex index(pool);

  // Identical query context returns its own response.
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto r = index.retrieve(pool[i].first);
    CHECK(r.index == static_cast<int>(i));
    CHECK(r.response == pool[i].second);
    CHECK_FALSE(r.degenerate);
  }

  // Hand-computed: "disk cleanup" shares two terms with entry 2, one with 0.
  auto r = index.retrieve({"disk", "cleanup"});
  CHECK(r.index == 2);

  // Unknown terms: degenerate, entry 0.
  auto deg = index.retrieve({"unseen", "words"});
  CHECK(deg.degenerate);
  CHECK(deg.index == 0);

  // Single-entry pool returns its response regardless of the query.
  TfidfIndex single({{{"hello", "there"}, "hi"}});
  CHECK(single.retrieve({"whatever"}).response == "hi");
  CHECK(single.retrieve({"hello"}).response == "hi");

  // Ties break to the lowest index: two identical contexts.
  TfidfIndex tied({{{"same", "context"}, "first"}, {{"same", "context"}, "second"}});
  CHECK(tied.retrieve({"same", "context"}).response == "first");

  CHECK_THROWS_AS(TfidfIndex({}), std::invalid_argument);
}

TEST_CASE("tfidf uses smoothed idf with raw term frequency") {
  // Discriminative terms dominate ubiquitous ones: "shared" appears
  // everywhere, "rare" in one entry only.
  std::vector<std::pair<Words, std::string>> pool = {
      {{"shared", "rare"}, "wanted"},
      {{"shared", "shared", "shared"}, "frequent"},
      {{"shared", "other"}, "other"},
  };
  TfidfIndex index(pool);
  CHECK(index.retrieve({"rare"}).response == "wanted");
  // A query of only the shared term maximizes cosine with the pure-"shared"
  // document despite raw tf differences (cosine normalizes lengths).
  CHECK(index.retrieve({"shared"}).response == "frequent");
}

TEST_CASE("metric report aggregates and preserves missing entries") {
  EmbeddingTable t = toy_table();
  UnigramModel unigram = UnigramModel::from_corpus_text("a a b zzz\n");
  std::vector<Words> responses{{"a", "b"}, {"zzz"}};
  std::vector<Words> references{{"a", "b"}, {"a"}};
  MetricSelection select;
  select.average = true;
  select.greedy = true;
  select.extrema = true;
  select.stats = true;

  MetricReport report = evaluate_responses(responses, references, &t, &unigram, select);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.columns.size() == 1 + 3 + 1 + 1 + 3);
  // Second row's embedding columns are missing (OOV-only response).
  CHECK(report.rows[1][1] == "");
  // Aggregate mean of the average column covers the defined rows only.
  CHECK(report.aggregate[1] == "1.000000");
  const std::string tsv = report.to_tsv();
  CHECK(tsv.find("average") != std::string::npos);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);  // oov + header + 2 rows + aggregate
  // OOV rate over all tokens of both sides: one "zzz" among 6 tokens.
  CHECK(report.embedding_oov_rate == doctest::Approx(1.0 / 6.0));

  CHECK_THROWS_AS(evaluate_responses(responses, std::vector<Words>{{"a"}}, &t, &unigram, select),
                  std::invalid_argument);
}

TEST_SUITE_END();
