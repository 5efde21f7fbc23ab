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

#include "dialogen/model.hpp"
#include "dialogen/training.hpp"

namespace dialogen {

/// Immutable named configuration bundle. The full-scale presets pin the
/// reference architecture sizes and training settings; `toy` is sized to
/// train in under a minute on one core.
struct Preset {
  std::string name;
  ModelConfig model;  // vocab_size filled in when a corpus is loaded
  TrainConfig train;
  int beam_width = 5;
  int vocab_limit = 0;  // 0: keep the whole training vocabulary

  /// Flat key=value serialization (one per line); the checksum is FNV-1a
  /// over this text and is printed at startup so silent preset drift is
  /// visible.
  std::string describe() const;
  std::string checksum() const;
};

Preset preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace dialogen
