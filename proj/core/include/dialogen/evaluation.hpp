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

#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dialogen {

using Words = std::vector<std::string>;

/// Word vectors in the word2vec text convention: a "<count> <dim>" header
/// line, then one "word v1 ... v_dim" line per entry. Out-of-vocabulary
/// words are skipped by the metrics (not zero vectors); callers can report
/// the miss rate.
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::string& path);
  static EmbeddingTable from_text(const std::string& text);

  const std::vector<double>* find(const std::string& word) const;
  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

  void insert(const std::string& word, std::vector<double> vec);

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
  int dim_ = 0;
};

/// Cosine similarity of the two texts' mean word vectors. Empty when a text
/// has no in-vocabulary word (reported missing, never coerced to 0).
std::optional<double> embedding_average(const Words& response, const Words& reference,
                                        const EmbeddingTable& table);

/// Cosine similarity of the per-dimension extrema vectors (for each
/// dimension, the value of largest absolute value across the text's words,
/// sign preserved).
std::optional<double> embedding_extrema(const Words& response, const Words& reference,
                                        const EmbeddingTable& table);

/// Greedy word alignment: for each word of one text, the maximal cosine to
/// any word of the other, averaged. The headline value averages the two
/// directions; each one-directional score is also reported.
struct GreedyScore {
  double value = 0.0;                  // symmetrized
  double response_to_reference = 0.0;
  double reference_to_response = 0.0;
};
std::optional<GreedyScore> embedding_greedy(const Words& response, const Words& reference,
                                            const EmbeddingTable& table);

/// Maximum-likelihood unigram distribution of a training corpus (corpus
/// file text; utterance separators are not words).
class UnigramModel {
 public:
  static UnigramModel from_corpus_text(const std::string& text);
  static UnigramModel from_counts(const std::unordered_map<std::string, long long>& counts);

  /// Probability of a word, falling back to the "<unk>" entry when absent.
  /// Throws (naming the token) when neither is present.
  double prob_of(const std::string& word) const;
  bool has(const std::string& word) const { return prob_.count(word) > 0; }
  std::size_t size() const { return prob_.size(); }

 private:
  std::unordered_map<std::string, double> prob_;
};

/// Per-response-set statistics: mean token count |U|, mean word entropy
/// H_w (bits per word) and mean utterance entropy H_U (bits), both under
/// the unigram model: H_U = -sum_w log2 p(w), H_w = H_U / |U|.
struct ResponseStats {
  double mean_length = 0.0;
  double mean_word_entropy = 0.0;
  double mean_utterance_entropy = 0.0;
};
ResponseStats response_stats(std::span<const Words> responses, const UnigramModel& unigram);

struct PreferenceCounts {
  long long wins = 0;
  long long losses = 0;
  long long ties = 0;
  long long total() const { return wins + losses + ties; }
};

/// Category share in percent with a normal-approximation margin
/// z * sqrt(p(1-p)/n) * 100.
struct CategoryShare {
  double percent = 0.0;
  double margin = 0.0;
};
struct PreferenceCi {
  CategoryShare wins, losses, ties;
  double z = 0.0;
};

/// Mean preferences with confidence margins. Supported levels: 0.90
/// (z=1.645), 0.95 (z=1.960), 0.99 (z=2.576).
PreferenceCi preference_ci(const PreferenceCounts& counts, double level = 0.90);

/// TF-IDF retrieval over a pool of (context, response) pairs: raw term
/// frequency, smoothed idf log((1+N)/(1+df)) + 1, cosine similarity, ties
/// broken by lowest pool index.
class TfidfIndex {
 public:
  explicit TfidfIndex(const std::vector<std::pair<Words, std::string>>& pool);

  struct Result {
    std::string response;
    int index = 0;
    /// Query shared no terms with the vocabulary; entry 0 returned.
    bool degenerate = false;
  };
  Result retrieve(const Words& context) const;

 private:
  std::vector<std::string> responses_;
  std::unordered_map<std::string, int> term_ids_;
  std::vector<double> idf_;
  std::vector<std::unordered_map<int, double>> pool_vectors_;  // tf-idf, by term id
  std::vector<double> pool_norms_;
};

/// Tab-separated metric report: one row per response plus an aggregate row.
/// When embedding metrics ran, a leading comment line carries the fraction
/// of tokens the embedding table did not cover.
struct MetricReport {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> aggregate;
  double embedding_oov_rate = -1.0;  // < 0: no embedding metrics ran
  std::string to_tsv() const;
};

struct MetricSelection {
  bool average = false;
  bool greedy = false;
  bool extrema = false;
  bool stats = false;
};

MetricReport evaluate_responses(std::span<const Words> responses,
                                std::span<const Words> references,
                                const EmbeddingTable* table, const UnigramModel* unigram,
                                const MetricSelection& select);

}  // namespace dialogen
