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

#include "dialogen/presets.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dialogen {

namespace {

/// Twitter-scale training settings: the higher learning rate and the larger
/// mini-batch of the two supported options.
void twitter_training(TrainConfig& t) {
  t.learning_rate = 0.0002;
  t.batch_size = 80;
  t.clip_threshold = 1.0;
  t.validate_every = 5000;
  t.patience = 5;
  t.max_batches = 500000;
  t.max_unroll = 80;
}

void ubuntu_training(TrainConfig& t) {
  t.learning_rate = 0.0001;
  t.batch_size = 40;
  t.clip_threshold = 1.0;
  t.validate_every = 5000;
  t.patience = 5;
  t.max_batches = 500000;
  t.max_unroll = 80;
}

/// Twitter architecture: bidirectional GRU encoder (1000 units per
/// direction), 1000-unit context and decoder, 400-dimensional embeddings,
/// elementwise-product gating, encoder state carried between utterances.
void twitter_sizes(ModelConfig& m) {
  m.embedding_size = 400;
  m.encoder_size = 1000;
  m.bidirectional_encoder = true;
  m.context_size = 1000;
  m.decoder_size = 1000;
  m.gate_size = 1000;
  m.gating = GatingKind::ElemProd;
  m.carry_encoder_state = true;
}

/// Ubuntu architecture: 500-unit GRU encoder, 1000-unit context, 500-unit
/// decoder, 300-dimensional embeddings, dense tanh gating.
void ubuntu_sizes(ModelConfig& m) {
  m.embedding_size = 300;
  m.encoder_size = 500;
  m.bidirectional_encoder = false;
  m.context_size = 1000;
  m.decoder_size = 500;
  m.gate_size = 500;
  m.gating = GatingKind::Dense;
  m.carry_encoder_state = false;
}

Preset make(const std::string& name) {
  Preset p;
  p.name = name;
  p.vocab_limit = 20000;
  p.beam_width = 5;

  if (name == "twitter-hred") {
    p.model.kind = ModelKind::Hred;
    twitter_sizes(p.model);
    twitter_training(p.train);
  } else if (name == "twitter-vhred") {
    p.model.kind = ModelKind::Vhred;
    twitter_sizes(p.model);
    p.model.latent_size = 100;
    twitter_training(p.train);
    p.train.kl_ramp_batches = 60000;
    p.train.word_drop_rate = 0.25;
  } else if (name == "ubuntu-hred") {
    p.model.kind = ModelKind::Hred;
    ubuntu_sizes(p.model);
    ubuntu_training(p.train);
  } else if (name == "ubuntu-vhred") {
    p.model.kind = ModelKind::Vhred;
    ubuntu_sizes(p.model);
    p.model.latent_size = 100;
    ubuntu_training(p.train);
    p.train.kl_ramp_batches = 75000;
    p.train.word_drop_rate = 0.25;
  } else if (name == "lstm-baseline") {
    p.model.kind = ModelKind::Rnnlm;
    p.model.decoder_cell = CellKind::Lstm;
    p.model.decoder_size = 2000;
    p.model.embedding_size = 400;
    twitter_training(p.train);
  } else if (name == "toy") {
    p.model.kind = ModelKind::Vhred;
    p.model.embedding_size = 16;
    p.model.encoder_size = 24;
    p.model.context_size = 24;
    p.model.decoder_size = 24;
    p.model.gate_size = 24;
    p.model.latent_size = 4;
    p.vocab_limit = 0;
    p.train.learning_rate = 0.002;
    p.train.batch_size = 5;
    p.train.clip_threshold = 1.0;
    p.train.kl_ramp_batches = 250;
    p.train.word_drop_rate = 0.25;
    p.train.validate_every = 100;
    p.train.patience = 5;
    p.train.max_batches = 400;
    p.train.max_unroll = 80;
  } else {
    std::ostringstream os;
    os << "unknown preset '" << name << "'; available:";
    for (const std::string& n : preset_names()) os << " " << n;
    throw std::invalid_argument(os.str());
  }
  return p;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string Preset::describe() const {
  std::ostringstream os;
  os << "preset=" << name << "\n";
  os << "kind=" << to_string(model.kind) << "\n";
  os << "embedding_size=" << model.embedding_size << "\n";
  os << "encoder_size=" << model.encoder_size << "\n";
  os << "bidirectional_encoder=" << (model.bidirectional_encoder ? 1 : 0) << "\n";
  os << "context_size=" << model.context_size << "\n";
  os << "decoder_size=" << model.decoder_size << "\n";
  os << "gate_size=" << model.gate_size << "\n";
  os << "latent_size=" << model.latent_size << "\n";
  os << "encoder_cell=" << to_string(model.encoder_cell) << "\n";
  os << "context_cell=" << to_string(model.context_cell) << "\n";
  os << "decoder_cell=" << to_string(model.decoder_cell) << "\n";
  os << "gating=" << to_string(model.gating) << "\n";
  os << "carry_encoder_state=" << (model.carry_encoder_state ? 1 : 0) << "\n";
  os << "posterior_two_layer=" << (model.posterior_two_layer ? 1 : 0) << "\n";
  os << "covariance_scale=" << fmt_double(model.covariance_scale) << "\n";
  os << "learning_rate=" << fmt_double(train.learning_rate) << "\n";
  os << "batch_size=" << train.batch_size << "\n";
  os << "clip_threshold=" << fmt_double(train.clip_threshold) << "\n";
  os << "kl_ramp_batches=" << train.kl_ramp_batches << "\n";
  os << "word_drop_rate=" << fmt_double(train.word_drop_rate) << "\n";
  os << "validate_every=" << train.validate_every << "\n";
  os << "patience=" << train.patience << "\n";
  os << "max_batches=" << train.max_batches << "\n";
  os << "max_unroll=" << train.max_unroll << "\n";
  os << "beam_width=" << beam_width << "\n";
  os << "vocab_limit=" << vocab_limit << "\n";
  return os.str();
}

std::string Preset::checksum() const {
  const std::uint64_t h = Rng::hash(describe());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

Preset preset(const std::string& name) { return make(name); }

std::vector<std::string> preset_names() {
  return {"twitter-vhred", "ubuntu-vhred", "twitter-hred", "ubuntu-hred", "lstm-baseline", "toy"};
}

}  // namespace dialogen
