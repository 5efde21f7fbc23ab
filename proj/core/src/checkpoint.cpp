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

#include "dialogen/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dialogen {

namespace {

constexpr const char* kMagic = "dialogen-checkpoint v1";

std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::runtime_error("checkpoint: bad float literal '" + s + "'");
  return v;
}

}  // namespace

std::string checkpoint_to_string(const ModelBundle& model, const Rng& rng) {
  const ModelConfig& c = model.config;
  std::ostringstream os;
  os << kMagic << "\n";
  os << "kind " << to_string(c.kind) << "\n";
  os << "vocab_size " << c.vocab_size << "\n";
  os << "embedding_size " << c.embedding_size << "\n";
  os << "encoder_size " << c.encoder_size << "\n";
  os << "bidirectional_encoder " << (c.bidirectional_encoder ? 1 : 0) << "\n";
  os << "context_size " << c.context_size << "\n";
  os << "decoder_size " << c.decoder_size << "\n";
  os << "gate_size " << c.gate_size << "\n";
  os << "latent_size " << c.latent_size << "\n";
  os << "encoder_cell " << to_string(c.encoder_cell) << "\n";
  os << "context_cell " << to_string(c.context_cell) << "\n";
  os << "decoder_cell " << to_string(c.decoder_cell) << "\n";
  os << "gating " << to_string(c.gating) << "\n";
  os << "carry_encoder_state " << (c.carry_encoder_state ? 1 : 0) << "\n";
  os << "posterior_two_layer " << (c.posterior_two_layer ? 1 : 0) << "\n";
  os << "covariance_scale " << hex_double(c.covariance_scale) << "\n";
  os << "rng " << rng.key() << " " << rng.counter() << "\n";

  const auto& tokens = model.vocab.tokens();
  os << "vocab " << tokens.size() - Vocabulary::kReserved << "\n";
  for (std::size_t i = Vocabulary::kReserved; i < tokens.size(); ++i) os << tokens[i] << "\n";

  for (const NamedParam& p : model.parameters()) {
    os << "param " << p.name << " " << p.value.rank();
    for (int s : p.value.shape()) os << " " << s;
    os << "\n";
    bool first = true;
    for (double v : p.value.values()) {
      if (!first) os << " ";
      first = false;
      os << hex_double(v);
    }
    os << "\n";
  }
  os << "end\n";
  return os.str();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMagic)
    throw std::runtime_error("not a dialogen checkpoint (bad magic)");

  ModelConfig c;
  std::uint64_t rng_key = 0, rng_counter = 0;
  int vocab_extra = -1;
  Vocabulary vocab;

  auto next_fields = [&](const std::string& l) {
    std::istringstream fs(l);
    std::vector<std::string> fields;
    std::string f;
    while (fs >> f) fields.push_back(f);
    return fields;
  };

  // Header section up to and including the vocab block.
  while (std::getline(is, line)) {
    auto fields = next_fields(line);
    if (fields.empty()) throw std::runtime_error("checkpoint: unexpected blank line in header");
    const std::string& key = fields[0];
    auto want = [&](std::size_t n) {
      if (fields.size() != n + 1)
        throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
    };
    if (key == "kind") { want(1); c.kind = model_kind_from_string(fields[1]); }
    else if (key == "vocab_size") { want(1); c.vocab_size = std::stoi(fields[1]); }
    else if (key == "embedding_size") { want(1); c.embedding_size = std::stoi(fields[1]); }
    else if (key == "encoder_size") { want(1); c.encoder_size = std::stoi(fields[1]); }
    else if (key == "bidirectional_encoder") { want(1); c.bidirectional_encoder = fields[1] == "1"; }
    else if (key == "context_size") { want(1); c.context_size = std::stoi(fields[1]); }
    else if (key == "decoder_size") { want(1); c.decoder_size = std::stoi(fields[1]); }
    else if (key == "gate_size") { want(1); c.gate_size = std::stoi(fields[1]); }
    else if (key == "latent_size") { want(1); c.latent_size = std::stoi(fields[1]); }
    else if (key == "encoder_cell") { want(1); c.encoder_cell = cell_kind_from_string(fields[1]); }
    else if (key == "context_cell") { want(1); c.context_cell = cell_kind_from_string(fields[1]); }
    else if (key == "decoder_cell") { want(1); c.decoder_cell = cell_kind_from_string(fields[1]); }
    else if (key == "gating") { want(1); c.gating = gating_kind_from_string(fields[1]); }
    else if (key == "carry_encoder_state") { want(1); c.carry_encoder_state = fields[1] == "1"; }
    else if (key == "posterior_two_layer") { want(1); c.posterior_two_layer = fields[1] == "1"; }
    else if (key == "covariance_scale") { want(1); c.covariance_scale = parse_double(fields[1]); }
    else if (key == "rng") {
      want(2);
      rng_key = std::stoull(fields[1]);
      rng_counter = std::stoull(fields[2]);
    } else if (key == "vocab") {
      want(1);
      vocab_extra = std::stoi(fields[1]);
      break;
    } else {
      throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
    }
  }
  if (vocab_extra < 0) throw std::runtime_error("checkpoint: missing vocab section");
  for (int i = 0; i < vocab_extra; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated vocab section");
    vocab.add(line);
  }
  if (vocab.size() != c.vocab_size)
    throw std::runtime_error("checkpoint: vocabulary size does not match vocab_size");

  Checkpoint cp;
  Rng build_rng(0);  // placeholder init; every parameter is overwritten below
  cp.model = build_model(c, vocab, build_rng);
  cp.rng = Rng::restore(rng_key, rng_counter);

  std::unordered_map<std::string, Tensor> by_name;
  for (const NamedParam& p : cp.model.parameters()) by_name.emplace(p.name, p.value);
  std::size_t loaded = 0;

  while (std::getline(is, line)) {
    if (line == "end") {
      if (loaded != by_name.size())
        throw std::runtime_error("checkpoint: missing parameters (" + std::to_string(loaded) +
                                 " of " + std::to_string(by_name.size()) + ")");
      return cp;
    }
    auto fields = next_fields(line);
    if (fields.size() < 3 || fields[0] != "param")
      throw std::runtime_error("checkpoint: expected param line, got '" + line + "'");
    const std::string& name = fields[1];
    const int rank = std::stoi(fields[2]);
    if (static_cast<int>(fields.size()) != 3 + rank)
      throw std::runtime_error("checkpoint: malformed param line '" + line + "'");
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(std::stoi(fields[3 + static_cast<std::size_t>(i)]));

    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    if (it->second.shape() != shape)
      throw std::runtime_error("checkpoint: shape mismatch for parameter '" + name + "'");

    if (!std::getline(is, line))
      throw std::runtime_error("checkpoint: truncated values for '" + name + "'");
    std::istringstream vs(line);
    std::string tok;
    std::size_t i = 0;
    auto values = it->second.values();
    while (vs >> tok) {
      if (i >= values.size())
        throw std::runtime_error("checkpoint: too many values for '" + name + "'");
      values[i++] = parse_double(tok);
    }
    if (i != values.size())
      throw std::runtime_error("checkpoint: too few values for '" + name + "'");
    ++loaded;
  }
  throw std::runtime_error("checkpoint: missing end marker");
}

void save_checkpoint(const std::string& path, const ModelBundle& model, const Rng& rng) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_string(model, rng);
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return checkpoint_from_string(os.str());
}

}  // namespace dialogen
