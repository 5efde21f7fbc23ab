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

#include "dialogen/model.hpp"
#include "dialogen/rng.hpp"

namespace dialogen {

/// Versioned text checkpoint: architecture descriptor, vocabulary, RNG
/// state and named parameter arrays. Values are written as C hexadecimal
/// float literals, so a save/load cycle is bit-exact.
struct Checkpoint {
  ModelBundle model;
  Rng rng = Rng(0);
};

void save_checkpoint(const std::string& path, const ModelBundle& model, const Rng& rng);
Checkpoint load_checkpoint(const std::string& path);

std::string checkpoint_to_string(const ModelBundle& model, const Rng& rng);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace dialogen
