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

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dialogen/rng.hpp"

namespace dialogen {

/// Token ids with four fixed reserved entries. Raw corpus tokens matching a
/// reserved name are not counted as vocabulary; "<unk>" in raw text maps to
/// the unknown id (it is the designed out-of-vocabulary pathway), the other
/// reserved names map to unknown as well, so reserved ids never enter a
/// dialogue from raw text content.
class Vocabulary {
 public:
  static constexpr int kPad = 0;   // "<pad>"
  static constexpr int kUnk = 1;   // "<unk>"
  static constexpr int kSou = 2;   // "<s>"  start of utterance
  static constexpr int kEou = 3;   // "</s>" end of utterance
  static constexpr int kReserved = 4;

  Vocabulary();

  /// Id for a raw token, mapping out-of-vocabulary tokens to kUnk.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  /// Append a non-reserved token; returns its id. Throws on duplicates or
  /// reserved names.
  int add(const std::string& token);

  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// One conversation: a nonempty list of utterances, each stored as token
/// ids beginning with kSou and ending with kEou.
struct Dialogue {
  std::vector<std::vector<int>> utterances;

  /// Tokens that contribute to the likelihood: everything except the
  /// leading start-of-utterance markers.
  int scored_tokens() const;
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  int total_scored_tokens() const;
};

struct LoadedCorpus {
  Corpus corpus;
  Vocabulary vocab;
  /// Fraction of raw token occurrences mapped to the unknown id.
  double oov_rate = 0.0;
};

/// Corpus file format: UTF-8, one dialogue per line, utterances separated by
/// the literal token "</u>", whitespace tokenization (input is expected to
/// be pre-tokenized). The vocabulary keeps the vocab_limit most frequent
/// tokens (ties broken lexicographically); everything else maps to <unk>.
/// vocab_limit <= 0 keeps every token.
LoadedCorpus load_corpus(const std::string& path, int vocab_limit = 0);

/// Parse corpus text against an existing vocabulary (validation/test sets,
/// generation contexts).
Corpus parse_corpus_text(const std::string& text, const Vocabulary& vocab);
Corpus load_corpus_with_vocab(const std::string& path, const Vocabulary& vocab);

/// Inverse of parsing, modulo whitespace normalization: tokens joined by
/// single spaces, utterances joined by " </u> ", one dialogue per line.
std::string serialize_corpus(const Corpus& corpus, const Vocabulary& vocab);
std::string serialize_dialogue(const Dialogue& d, const Vocabulary& vocab);

/// One training batch. `dialogue_indices` point into the source corpus;
/// `padded_tokens` is the flattened per-dialogue token stream padded with
/// kPad to the longest stream in the batch, with `scored_mask` marking the
/// positions that contribute to the loss (padding never does).
struct Batch {
  std::vector<int> dialogue_indices;
  std::vector<std::vector<int>> padded_tokens;
  std::vector<std::vector<bool>> scored_mask;
  int scored_token_count = 0;
};

/// Deterministic shuffled batch stream; dialogues are reshuffled every
/// epoch from the stream seed. `max_unroll` is carried to the trainer,
/// which cuts gradient segments at that length.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, int batch_size, int max_unroll, std::uint64_t seed);

  Batch next();
  int batch_size() const { return batch_size_; }
  int max_unroll() const { return max_unroll_; }
  int batches_per_epoch() const;

 private:
  void reshuffle();

  const Corpus* corpus_;
  int batch_size_;
  int max_unroll_;
  std::uint64_t seed_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
};

/// Specification for the synthetic hierarchical corpus: dialogues follow a
/// sticky Markov chain over topics with disjoint per-topic vocabularies;
/// each utterance samples its words uniformly from the topic vocabulary.
struct SyntheticSpec {
  int topics = 4;
  int words_per_topic = 6;
  double stickiness = 0.6;  // P(stay on the current topic)
  int utterance_len_min = 4;
  int utterance_len_max = 8;
  int turns_min = 3;
  int turns_max = 5;
  int dialogue_count = 2000;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  /// Raw corpus text in the corpus file format.
  std::string corpus_text;
  /// One line per dialogue: space-separated topic indices.
  std::string labels_text;
};

/// Topic word i of topic t is "t<t>w<i>".
SyntheticCorpus synthesize_corpus(const SyntheticSpec& spec);

}  // namespace dialogen
