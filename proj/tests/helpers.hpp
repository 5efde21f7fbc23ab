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

#include <string>
#include <vector>

#include "dialogen/data.hpp"
#include "dialogen/model.hpp"
#include "dialogen/rng.hpp"

namespace dialogen::test {

inline Vocabulary make_vocab(int extra_words) {
  Vocabulary v;
  for (int i = 0; i < extra_words; ++i) v.add("w" + std::to_string(i));
  return v;
}

inline void zero_all_params(const ModelBundle& m) {
  for (const NamedParam& p : m.parameters())
    for (double& x : const_cast<Tensor&>(p.value).values()) x = 0.0;
}

inline ModelConfig tiny_config(ModelKind kind, int vocab_size, int hidden = 4, int d_z = 2,
                               int emb = 3) {
  ModelConfig c;
  c.kind = kind;
  c.vocab_size = vocab_size;
  c.embedding_size = emb;
  c.encoder_size = hidden;
  c.context_size = hidden;
  c.decoder_size = hidden;
  c.gate_size = hidden;
  c.latent_size = kind == ModelKind::Vhred ? d_z : 0;
  return c;
}

/// Random dialogue over the non-reserved vocabulary, marker-wrapped.
inline Dialogue random_dialogue(Rng& rng, int vocab_size, int utterances, int min_len = 1,
                                int max_len = 4) {
  Dialogue d;
  for (int u = 0; u < utterances; ++u) {
    std::vector<int> utt{Vocabulary::kSou};
    const int len = min_len + static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(max_len - min_len + 1)));
    for (int i = 0; i < len; ++i)
      utt.push_back(Vocabulary::kReserved +
                    static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(vocab_size - Vocabulary::kReserved))));
    utt.push_back(Vocabulary::kEou);
    d.utterances.push_back(std::move(utt));
  }
  return d;
}

}  // namespace dialogen::test
