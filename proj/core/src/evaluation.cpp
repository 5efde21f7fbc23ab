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

#include "dialogen/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dialogen {

namespace {

constexpr const char* kUtteranceSeparator = "</u>";

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::optional<double> cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot(a, b) / (na * nb);
}

std::vector<const std::vector<double>*> known_vectors(const Words& text,
                                                      const EmbeddingTable& table) {
  std::vector<const std::vector<double>*> out;
  for (const std::string& w : text) {
    const auto* v = table.find(w);
    if (v) out.push_back(v);
  }
  return out;
}

}  // namespace

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return from_text(os.str());
}

EmbeddingTable EmbeddingTable::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("empty embedding file");
  std::istringstream hs(header);
  long long count = 0;
  int dim = 0;
  if (!(hs >> count >> dim) || count < 0 || dim < 1)
    throw std::runtime_error("bad embedding header (expected '<count> <dim>'): " + header);

  EmbeddingTable table;
  table.dim_ = dim;
  std::string line;
  long long seen = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vec(static_cast<std::size_t>(dim));
    for (double& v : vec)
      if (!(ls >> v)) throw std::runtime_error("embedding row for '" + word + "' is too short");
    table.vectors_[word] = std::move(vec);
    ++seen;
  }
  if (seen != count)
    throw std::runtime_error("embedding file declares " + std::to_string(count) +
                             " rows but contains " + std::to_string(seen));
  return table;
}

const std::vector<double>* EmbeddingTable::find(const std::string& word) const {
  auto it = vectors_.find(word);
  return it == vectors_.end() ? nullptr : &it->second;
}

void EmbeddingTable::insert(const std::string& word, std::vector<double> vec) {
  if (dim_ == 0) dim_ = static_cast<int>(vec.size());
  if (static_cast<int>(vec.size()) != dim_)
    throw std::invalid_argument("embedding dimension mismatch for '" + word + "'");
  vectors_[word] = std::move(vec);
}

std::optional<double> embedding_average(const Words& response, const Words& reference,
                                        const EmbeddingTable& table) {
  auto mean_vector = [&](const Words& text) -> std::optional<std::vector<double>> {
    auto vecs = known_vectors(text, table);
    if (vecs.empty()) return std::nullopt;
    std::vector<double> mean(static_cast<std::size_t>(table.dim()), 0.0);
    for (const auto* v : vecs)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*v)[i];
    for (double& x : mean) x /= static_cast<double>(vecs.size());
    return mean;
  };
  auto a = mean_vector(response);
  auto b = mean_vector(reference);
  if (!a || !b) return std::nullopt;
  return cosine(*a, *b);
}

std::optional<double> embedding_extrema(const Words& response, const Words& reference,
                                        const EmbeddingTable& table) {
  auto extrema_vector = [&](const Words& text) -> std::optional<std::vector<double>> {
    auto vecs = known_vectors(text, table);
    if (vecs.empty()) return std::nullopt;
    std::vector<double> ext(static_cast<std::size_t>(table.dim()), 0.0);
    bool first = true;
    for (const auto* v : vecs) {
      for (std::size_t i = 0; i < ext.size(); ++i)
        if (first || std::abs((*v)[i]) > std::abs(ext[i])) ext[i] = (*v)[i];
      first = false;
    }
    return ext;
  };
  auto a = extrema_vector(response);
  auto b = extrema_vector(reference);
  if (!a || !b) return std::nullopt;
  return cosine(*a, *b);
}

std::optional<GreedyScore> embedding_greedy(const Words& response, const Words& reference,
                                            const EmbeddingTable& table) {
  auto one_direction = [&](const Words& from, const Words& to) -> std::optional<double> {
    auto from_vecs = known_vectors(from, table);
    auto to_vecs = known_vectors(to, table);
    if (from_vecs.empty() || to_vecs.empty()) return std::nullopt;
    double total = 0.0;
    for (const auto* f : from_vecs) {
      double best = -1.0;
      for (const auto* t : to_vecs) {
        const auto c = cosine(*f, *t);
        if (c && *c > best) best = *c;
      }
      total += best;
    }
    return total / static_cast<double>(from_vecs.size());
  };
  auto fwd = one_direction(response, reference);
  auto bwd = one_direction(reference, response);
  if (!fwd || !bwd) return std::nullopt;
  GreedyScore s;
  s.response_to_reference = *fwd;
  s.reference_to_response = *bwd;
  s.value = 0.5 * (*fwd + *bwd);
  return s;
}

UnigramModel UnigramModel::from_corpus_text(const std::string& text) {
  std::unordered_map<std::string, long long> counts;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok)
    if (tok != kUtteranceSeparator) ++counts[tok];
  return from_counts(counts);
}

UnigramModel UnigramModel::from_counts(const std::unordered_map<std::string, long long>& counts) {
  long long total = 0;
  for (const auto& [w, c] : counts) {
    if (c < 0) throw std::invalid_argument("negative unigram count for '" + w + "'");
    total += c;
  }
  if (total == 0) throw std::invalid_argument("unigram model needs a nonempty corpus");
  UnigramModel m;
  for (const auto& [w, c] : counts)
    if (c > 0) m.prob_[w] = static_cast<double>(c) / static_cast<double>(total);
  return m;
}

double UnigramModel::prob_of(const std::string& word) const {
  auto it = prob_.find(word);
  if (it != prob_.end()) return it->second;
  it = prob_.find("<unk>");
  if (it != prob_.end()) return it->second;
  throw std::invalid_argument("token '" + word + "' has zero probability under the unigram model");
}

ResponseStats response_stats(std::span<const Words> responses, const UnigramModel& unigram) {
  if (responses.empty())
    throw std::invalid_argument("response_stats requires a nonempty response set");
  double len_sum = 0.0, hw_sum = 0.0, hu_sum = 0.0;
  for (const Words& r : responses) {
    if (r.empty()) throw std::invalid_argument("response_stats: empty response");
    double hu = 0.0;
    for (const std::string& w : r) hu += -std::log2(unigram.prob_of(w));
    len_sum += static_cast<double>(r.size());
    hu_sum += hu;
    hw_sum += hu / static_cast<double>(r.size());
  }
  const double n = static_cast<double>(responses.size());
  return {len_sum / n, hw_sum / n, hu_sum / n};
}

PreferenceCi preference_ci(const PreferenceCounts& counts, double level) {
  const long long n = counts.total();
  if (n <= 0) throw std::invalid_argument("preference_ci requires at least one judgement");
  if (counts.wins < 0 || counts.losses < 0 || counts.ties < 0)
    throw std::invalid_argument("preference counts must be nonnegative");

  double z = 0.0;
  if (level == 0.90) z = 1.645;
  else if (level == 0.95) z = 1.960;
  else if (level == 0.99) z = 2.576;
  else
    throw std::invalid_argument("unsupported confidence level (use 0.90, 0.95 or 0.99)");

  auto share = [&](long long c) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    CategoryShare s;
    s.percent = 100.0 * p;
    s.margin = 100.0 * z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return s;
  };
  PreferenceCi ci;
  ci.wins = share(counts.wins);
  ci.losses = share(counts.losses);
  ci.ties = share(counts.ties);
  ci.z = z;
  return ci;
}

TfidfIndex::TfidfIndex(const std::vector<std::pair<Words, std::string>>& pool) {
  if (pool.empty()) throw std::invalid_argument("tfidf pool must be nonempty");
  const int n_docs = static_cast<int>(pool.size());

  // Document frequencies over the pool contexts.
  std::vector<std::unordered_map<int, double>> tf(pool.size());
  std::unordered_map<int, int> df;
  for (std::size_t d = 0; d < pool.size(); ++d) {
    responses_.push_back(pool[d].second);
    for (const std::string& w : pool[d].first) {
      auto [it, inserted] = term_ids_.try_emplace(w, static_cast<int>(term_ids_.size()));
      tf[d][it->second] += 1.0;
    }
    for (const auto& [term, cnt] : tf[d]) df[term] += 1;
  }
  idf_.resize(term_ids_.size());
  for (const auto& [term, docs] : df)
    idf_[static_cast<std::size_t>(term)] =
        std::log((1.0 + n_docs) / (1.0 + docs)) + 1.0;

  pool_vectors_.resize(pool.size());
  pool_norms_.resize(pool.size());
  for (std::size_t d = 0; d < pool.size(); ++d) {
    double sq = 0.0;
    for (const auto& [term, cnt] : tf[d]) {
      const double w = cnt * idf_[static_cast<std::size_t>(term)];
      pool_vectors_[d][term] = w;
      sq += w * w;
    }
    pool_norms_[d] = std::sqrt(sq);
  }
}

TfidfIndex::Result TfidfIndex::retrieve(const Words& context) const {
  std::unordered_map<int, double> qtf;
  for (const std::string& w : context) {
    auto it = term_ids_.find(w);
    if (it != term_ids_.end()) qtf[it->second] += 1.0;
  }
  if (qtf.empty()) return {responses_[0], 0, true};

  double qsq = 0.0;
  for (auto& [term, cnt] : qtf) {
    cnt *= idf_[static_cast<std::size_t>(term)];
    qsq += cnt * cnt;
  }
  const double qnorm = std::sqrt(qsq);

  int best = 0;
  double best_sim = -1.0;
  for (std::size_t d = 0; d < pool_vectors_.size(); ++d) {
    double s = 0.0;
    for (const auto& [term, w] : qtf) {
      auto it = pool_vectors_[d].find(term);
      if (it != pool_vectors_[d].end()) s += w * it->second;
    }
    const double denom = qnorm * pool_norms_[d];
    const double sim = denom == 0.0 ? 0.0 : s / denom;
    if (sim > best_sim) {  // strict: ties keep the lowest index
      best_sim = sim;
      best = static_cast<int>(d);
    }
  }
  return {responses_[static_cast<std::size_t>(best)], best, false};
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string MetricReport::to_tsv() const {
  std::ostringstream os;
  if (embedding_oov_rate >= 0.0) os << "# embedding_oov_rate\t" << fmt(embedding_oov_rate) << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "\t" : "") << columns[i];
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "\t" : "") << row[i];
    os << "\n";
  }
  for (std::size_t i = 0; i < aggregate.size(); ++i) os << (i ? "\t" : "") << aggregate[i];
  os << "\n";
  return os.str();
}

MetricReport evaluate_responses(std::span<const Words> responses,
                                std::span<const Words> references,
                                const EmbeddingTable* table, const UnigramModel* unigram,
                                const MetricSelection& select) {
  if (responses.size() != references.size())
    throw std::invalid_argument("responses and references must align line-by-line (" +
                                std::to_string(responses.size()) + " vs " +
                                std::to_string(references.size()) + ")");
  if ((select.average || select.greedy || select.extrema) && !table)
    throw std::invalid_argument("embedding metrics require an embedding table");
  if (select.stats && !unigram)
    throw std::invalid_argument("response statistics require a unigram model");

  MetricReport report;
  report.columns = {"id"};
  if (select.average) report.columns.push_back("average");
  if (select.greedy) {
    report.columns.push_back("greedy");
    report.columns.push_back("greedy_resp_to_ref");
    report.columns.push_back("greedy_ref_to_resp");
  }
  if (select.extrema) report.columns.push_back("extrema");
  if (select.stats) {
    report.columns.push_back("length");
    report.columns.push_back("word_entropy");
    report.columns.push_back("utterance_entropy");
  }

  struct Mean {
    double sum = 0.0;
    long long n = 0;
    void add(double v) { sum += v; ++n; }
    std::string str() const { return n == 0 ? std::string("") : fmt(sum / static_cast<double>(n)); }
  };
  std::vector<Mean> means(report.columns.size());

  if (table) {
    long long total = 0, missing = 0;
    auto count = [&](const Words& text) {
      for (const std::string& w : text) {
        ++total;
        if (!table->find(w)) ++missing;
      }
    };
    for (const Words& r : responses) count(r);
    for (const Words& r : references) count(r);
    report.embedding_oov_rate =
        total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
  }

  for (std::size_t i = 0; i < responses.size(); ++i) {
    std::vector<std::string> row;
    row.push_back(std::to_string(i));
    std::size_t col = 1;
    auto push = [&](std::optional<double> v) {
      if (v) {
        row.push_back(fmt(*v));
        means[col].add(*v);
      } else {
        row.push_back("");
      }
      ++col;
    };
    if (select.average) push(embedding_average(responses[i], references[i], *table));
    if (select.greedy) {
      auto g = embedding_greedy(responses[i], references[i], *table);
      push(g ? std::optional<double>(g->value) : std::nullopt);
      push(g ? std::optional<double>(g->response_to_reference) : std::nullopt);
      push(g ? std::optional<double>(g->reference_to_response) : std::nullopt);
    }
    if (select.extrema) push(embedding_extrema(responses[i], references[i], *table));
    if (select.stats) {
      const Words single[] = {responses[i]};
      ResponseStats s = response_stats(single, *unigram);
      push(s.mean_length);
      push(s.mean_word_entropy);
      push(s.mean_utterance_entropy);
    }
    report.rows.push_back(std::move(row));
  }

  report.aggregate.push_back("mean");
  for (std::size_t c = 1; c < report.columns.size(); ++c)
    report.aggregate.push_back(means[c].str());
  return report;
}

}  // namespace dialogen
