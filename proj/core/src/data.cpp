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

#include "dialogen/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dialogen {

namespace {

constexpr const char* kReservedNames[] = {"<pad>", "<unk>", "<s>", "</s>"};
constexpr const char* kUtteranceSeparator = "</u>";

bool is_reserved_name(const std::string& token) {
  for (const char* name : kReservedNames)
    if (token == name) return true;
  return false;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

/// Raw utterances of a corpus line (no markers, no separator tokens).
std::vector<std::vector<std::string>> split_line(const std::string& line, int line_number) {
  std::vector<std::vector<std::string>> utterances;
  std::vector<std::string> current;
  for (std::string& tok : split_ws(line)) {
    if (tok == kUtteranceSeparator) {
      if (current.empty())
        throw std::runtime_error("corpus line " + std::to_string(line_number) +
                                 ": empty utterance");
      utterances.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(tok));
    }
  }
  if (current.empty())
    throw std::runtime_error("corpus line " + std::to_string(line_number) +
                             ": empty utterance");
  utterances.push_back(std::move(current));
  return utterances;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* name : kReservedNames) {
    token_to_id_.emplace(name, static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(name);
  }
}

int Vocabulary::id_of(const std::string& token) const {
  // Raw reserved names never produce their own id from content positions.
  if (is_reserved_name(token)) return kUnk;
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("token id " + std::to_string(id) + " out of range (vocab size " +
                            std::to_string(size()) + ")");
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return !is_reserved_name(token) && token_to_id_.count(token) > 0;
}

int Vocabulary::add(const std::string& token) {
  if (is_reserved_name(token))
    throw std::invalid_argument("cannot add reserved token '" + token + "'");
  if (token_to_id_.count(token))
    throw std::invalid_argument("duplicate vocabulary token '" + token + "'");
  const int id = size();
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Dialogue::scored_tokens() const {
  int n = 0;
  for (const auto& u : utterances) n += static_cast<int>(u.size()) - 1;
  return n;
}

int Corpus::total_scored_tokens() const {
  int n = 0;
  for (const auto& d : dialogues) n += d.scored_tokens();
  return n;
}

LoadedCorpus load_corpus(const std::string& path, int vocab_limit) {
  const std::string text = read_file(path);

  // First pass: raw utterances and token frequencies.
  std::vector<std::vector<std::vector<std::string>>> raw;
  std::map<std::string, long long> freq;  // ordered map: lexicographic ties for free
  std::istringstream lines(text);
  std::string line;
  int line_number = 0;
  long long total_tokens = 0;
  while (std::getline(lines, line)) {
    ++line_number;
    if (line.empty()) {
      throw std::runtime_error("corpus line " + std::to_string(line_number) + ": empty dialogue");
    }
    auto utterances = split_line(line, line_number);
    for (const auto& utt : utterances)
      for (const auto& tok : utt) {
        if (!is_reserved_name(tok)) ++freq[tok];
        ++total_tokens;
      }
    raw.push_back(std::move(utterances));
  }
  if (raw.empty()) throw std::runtime_error("corpus file is empty: " + path);

  // Rank by descending frequency, ties broken lexicographically.
  std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  LoadedCorpus out;
  const std::size_t keep = vocab_limit <= 0
                               ? ranked.size()
                               : std::min<std::size_t>(static_cast<std::size_t>(vocab_limit),
                                                       ranked.size());
  for (std::size_t i = 0; i < keep; ++i) out.vocab.add(ranked[i].first);

  long long unk_count = 0;
  for (const auto& utterances : raw) {
    Dialogue d;
    for (const auto& utt : utterances) {
      std::vector<int> ids;
      ids.reserve(utt.size() + 2);
      ids.push_back(Vocabulary::kSou);
      for (const auto& tok : utt) {
        const int id = out.vocab.id_of(tok);
        if (id == Vocabulary::kUnk) ++unk_count;
        ids.push_back(id);
      }
      ids.push_back(Vocabulary::kEou);
      d.utterances.push_back(std::move(ids));
    }
    out.corpus.dialogues.push_back(std::move(d));
  }
  out.oov_rate = total_tokens == 0 ? 0.0 : static_cast<double>(unk_count) / total_tokens;
  return out;
}

Corpus parse_corpus_text(const std::string& text, const Vocabulary& vocab) {
  Corpus corpus;
  std::istringstream lines(text);
  std::string line;
  int line_number = 0;
  while (std::getline(lines, line)) {
    ++line_number;
    if (line.empty())
      throw std::runtime_error("corpus line " + std::to_string(line_number) + ": empty dialogue");
    Dialogue d;
    for (const auto& utt : split_line(line, line_number)) {
      std::vector<int> ids;
      ids.reserve(utt.size() + 2);
      ids.push_back(Vocabulary::kSou);
      for (const auto& tok : utt) ids.push_back(vocab.id_of(tok));
      ids.push_back(Vocabulary::kEou);
      d.utterances.push_back(std::move(ids));
    }
    corpus.dialogues.push_back(std::move(d));
  }
  if (corpus.dialogues.empty()) throw std::runtime_error("corpus text is empty");
  return corpus;
}

Corpus load_corpus_with_vocab(const std::string& path, const Vocabulary& vocab) {
  return parse_corpus_text(read_file(path), vocab);
}

std::string serialize_dialogue(const Dialogue& d, const Vocabulary& vocab) {
  std::ostringstream os;
  bool first_utt = true;
  for (const auto& utt : d.utterances) {
    if (!first_utt) os << " " << kUtteranceSeparator << " ";
    first_utt = false;
    bool first_tok = true;
    for (std::size_t i = 1; i + 1 < utt.size(); ++i) {
      if (!first_tok) os << " ";
      first_tok = false;
      os << vocab.token_of(utt[i]);
    }
  }
  return os.str();
}

std::string serialize_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  std::ostringstream os;
  for (const auto& d : corpus.dialogues) os << serialize_dialogue(d, vocab) << "\n";
  return os.str();
}

BatchStream::BatchStream(const Corpus& corpus, int batch_size, int max_unroll, std::uint64_t seed)
    : corpus_(&corpus), batch_size_(batch_size), max_unroll_(max_unroll), seed_(seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (corpus.dialogues.empty()) throw std::invalid_argument("batching an empty corpus");
  order_.resize(corpus.dialogues.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  reshuffle();
}

int BatchStream::batches_per_epoch() const {
  return static_cast<int>((order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
                          static_cast<std::size_t>(batch_size_));
}

void BatchStream::reshuffle() {
  Rng rng = Rng(seed_).split("batch-shuffle").split(epoch_);
  // Fisher-Yates
  for (std::size_t i = order_.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  Batch b;
  while (cursor_ < order_.size() &&
         b.dialogue_indices.size() < static_cast<std::size_t>(batch_size_)) {
    b.dialogue_indices.push_back(order_[cursor_++]);
  }

  // Flattened streams padded to the longest in the batch.
  std::size_t longest = 0;
  std::vector<std::vector<int>> streams;
  std::vector<std::vector<bool>> masks;
  for (int idx : b.dialogue_indices) {
    const Dialogue& d = corpus_->dialogues[static_cast<std::size_t>(idx)];
    std::vector<int> stream;
    std::vector<bool> mask;
    for (const auto& utt : d.utterances)
      for (std::size_t i = 0; i < utt.size(); ++i) {
        stream.push_back(utt[i]);
        mask.push_back(i > 0);  // start-of-utterance markers are inputs only
      }
    longest = std::max(longest, stream.size());
    streams.push_back(std::move(stream));
    masks.push_back(std::move(mask));
  }
  for (std::size_t k = 0; k < streams.size(); ++k) {
    streams[k].resize(longest, Vocabulary::kPad);
    masks[k].resize(longest, false);
    for (bool m : masks[k]) b.scored_token_count += m ? 1 : 0;
  }
  b.padded_tokens = std::move(streams);
  b.scored_mask = std::move(masks);
  return b;
}

SyntheticCorpus synthesize_corpus(const SyntheticSpec& spec) {
  if (spec.topics < 2) throw std::invalid_argument("synthetic corpus needs >= 2 topics");
  if (spec.words_per_topic < 1) throw std::invalid_argument("words_per_topic must be >= 1");
  if (spec.stickiness < 0.0 || spec.stickiness > 1.0)
    throw std::invalid_argument("stickiness must lie in [0, 1]");
  if (spec.utterance_len_min < 1 || spec.utterance_len_max < spec.utterance_len_min)
    throw std::invalid_argument("bad utterance length range");
  if (spec.turns_min < 1 || spec.turns_max < spec.turns_min)
    throw std::invalid_argument("bad turns range");
  if (spec.dialogue_count < 1) throw std::invalid_argument("dialogue_count must be >= 1");

  Rng rng = Rng(spec.seed).split("synthesize");
  std::ostringstream corpus_os, labels_os;
  for (int d = 0; d < spec.dialogue_count; ++d) {
    const int turns =
        spec.turns_min + static_cast<int>(rng.below(
                             static_cast<std::uint64_t>(spec.turns_max - spec.turns_min + 1)));
    int topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.topics)));
    for (int t = 0; t < turns; ++t) {
      if (t > 0) {
        // Stay with probability `stickiness`, otherwise redraw uniformly
        // over all topics (so stickiness 0 is a fully uniform chain).
        if (!rng.bernoulli(spec.stickiness))
          topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.topics)));
        corpus_os << " </u> ";
        labels_os << " ";
      }
      const int len = spec.utterance_len_min +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(
                          spec.utterance_len_max - spec.utterance_len_min + 1)));
      for (int w = 0; w < len; ++w) {
        if (w > 0) corpus_os << " ";
        const int word = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.words_per_topic)));
        corpus_os << "t" << topic << "w" << word;
      }
      labels_os << topic;
    }
    corpus_os << "\n";
    labels_os << "\n";
  }
  return {corpus_os.str(), labels_os.str()};
}

}  // namespace dialogen
