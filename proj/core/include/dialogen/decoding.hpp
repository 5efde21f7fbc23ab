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
#include <span>
#include <string>
#include <vector>

#include "dialogen/model.hpp"

namespace dialogen {

enum class LatentMode { PriorSample, PriorMean };

LatentMode latent_mode_from_string(const std::string& s);
std::string to_string(LatentMode m);

struct DecodeConfig {
  int beam_width = 5;
  int max_tokens = 30;
  LatentMode latent_mode = LatentMode::PriorSample;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BeamHypothesis {
  std::vector<int> tokens;    // generated tokens; ends with </s> iff finished
  double log_prob = 0.0;      // summed token log-probabilities
  std::vector<double> state;  // decoder state values
  bool finished = false;

  /// Length-normalized score: summed log-probability divided by the token
  /// count (the end token included).
  double normalized() const {
    return log_prob / static_cast<double>(tokens.size());
  }
};

struct BeamResult {
  std::vector<int> tokens;
  double normalized_score = 0.0;
  /// Set when no hypothesis finished within max_tokens; `tokens` is then
  /// the best unfinished hypothesis.
  bool truncated = false;
};

/// Frozen conditioning for generating one response: the decoder start
/// state, and for hierarchical models the context output (plus, for VHRED,
/// one latent draw; z is drawn once per response).
struct GenerationState {
  std::vector<double> decoder_state;
  std::vector<double> ctx_out;  // empty for RNNLM
  std::vector<double> z;        // empty unless VHRED
};
GenerationState prepare_generation(const ModelBundle& m, const Dialogue& context,
                                   LatentMode mode, Rng& rng);

/// One decoder step on plain values; returns the new state and the full
/// log-softmax over the vocabulary.
struct GenerationStep {
  std::vector<double> state;
  std::vector<double> log_probs;
};
GenerationStep generation_step(const ModelBundle& m, const GenerationState& gen,
                               const std::vector<double>& state, int input_token);

/// Length-normalized beam search. Partial hypotheses are ranked by summed
/// log-probability while expanding; hypotheses retire to a finished pool on
/// emitting the end-of-utterance token; the final ranking divides the sum
/// by the token count, with ties broken by shorter length and then
/// lexicographic token ids. Padding and start-of-utterance tokens are never
/// candidates. Expansion stops once no unfinished hypothesis could still
/// beat the worst retired score (using sum / max_tokens as the upper bound
/// on any continuation's normalized score).
BeamResult beam_search(const ModelBundle& m, const Dialogue& context, const DecodeConfig& cfg);

/// Ancestral sampling from the temperature-scaled softmax until
/// end-of-utterance or max_tokens.
std::vector<int> sample_response(const ModelBundle& m, const Dialogue& context,
                                 double temperature, std::uint64_t seed, int max_tokens = 30);

/// Draw one candidate index from temperature-scaled log-probabilities
/// restricted to `candidates`.
int sample_from_log_probs(std::span<const double> log_probs, std::span<const int> candidates,
                          double temperature, Rng& rng);

/// Generate n_turns consecutive responses, appending each to the context
/// before the next; VHRED draws a fresh prior sample every turn.
std::vector<std::vector<int>> rollout(const ModelBundle& m, const Dialogue& context, int n_turns,
                                      const DecodeConfig& cfg);

/// Response tokens as an utterance with start/end markers (a truncated
/// response receives the closing marker), for appending to a dialogue.
std::vector<int> as_utterance(std::span<const int> response_tokens);

}  // namespace dialogen
