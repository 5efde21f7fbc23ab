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
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dialogen/data.hpp"
#include "dialogen/model.hpp"

namespace dialogen {

/// Adam moment accumulators, one slot per parameter in the model's stable
/// parameter order.
struct AdamState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(std::span<const NamedParam> params);
};

/// One bias-corrected Adam update from the gradients currently stored on
/// the parameters. Increments s.step.
void adam_step(std::span<const NamedParam> params, AdamState& s, double learning_rate);

/// Rescale all gradients so their global L2 norm does not exceed the
/// threshold; no-op when it already does not. Returns the pre-clip norm.
double clip_gradients(std::span<const NamedParam> params, double threshold);

/// Linear KL annealing weight min(1, batch_index / ramp); a ramp of 0 means
/// a constant weight of 1.
double kl_anneal_weight(long long batch_index, long long ramp);

struct TrainConfig {
  double learning_rate = 0.002;
  int batch_size = 5;
  double clip_threshold = 1.0;
  long long kl_ramp_batches = 0;
  double word_drop_rate = 0.0;
  long long validate_every = 100;
  int patience = 5;  // validation rounds without improvement before stopping
  long long max_batches = 500;
  /// Gradient segments are cut after this many scored tokens (truncated
  /// backpropagation); states carry across cuts as constants.
  int max_unroll = 80;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EarlyStopState {
  double best_bound = -std::numeric_limits<double>::infinity();
  int rounds_since_improvement = 0;
  long long batches_since_improvement = 0;
  bool stopped = false;

  /// Feed one validation bound (higher is better); returns true when it
  /// improved on the best so far.
  bool observe(double bound, int patience);
};

/// One line per training batch. `seconds` is measured wall time and is the
/// only non-reproducible column.
struct BatchLogRow {
  long long batch = 0;
  double bound = 0.0;           // mean variational bound per scored token
  double reconstruction = 0.0;  // mean NLL per scored token
  double kl = 0.0;              // mean KL per target utterance (0 for non-latent models)
  double kl_weight = 1.0;
  double grad_norm = 0.0;  // pre-clip global norm
  double seconds = 0.0;
};

struct ValidationEvent {
  long long batch = 0;
  double bound_per_token = 0.0;
  double bound_per_utterance = 0.0;
  double mc_bound_per_token = 0.0;
  bool improved = false;
};

struct TrainLog {
  std::vector<BatchLogRow> rows;
  std::vector<ValidationEvent> validations;
};

struct TrainResult {
  TrainLog log;
  /// Checkpoint text of the parameters with the best validation bound.
  std::string best_checkpoint;
  long long best_batch = -1;
  double best_bound = -std::numeric_limits<double>::infinity();
  long long batches_run = 0;
  bool stopped_early = false;
};

/// Bound statistics over a corpus. The deterministic variant evaluates the
/// latent at the posterior mean; the Monte-Carlo variant averages
/// `mc_samples` reparameterized draws (both reported). Non-latent models
/// score identically under both.
struct ValidationResult {
  double bound_per_token = 0.0;
  double bound_per_utterance = 0.0;
  double mc_bound_per_token = 0.0;
  double mc_bound_per_utterance = 0.0;
  double mean_kl_per_utterance = 0.0;  // deterministic variant
  int mc_samples = 0;
};
ValidationResult validate(const ModelBundle& model, const Corpus& corpus,
                          double kl_weight = 1.0, int mc_samples = 10,
                          std::uint64_t seed = 0);

/// Mini-batch training loop: truncated-backpropagation gradients, gradient
/// clipping, Adam, KL annealing and word dropout for VHRED, periodic
/// validation with patience-based early stopping. The model is trained in
/// place (final parameters); the best-validation parameters are returned as
/// a checkpoint string. `on_row`, when given, observes every log row as it
/// is produced. Aborts with a diagnostic naming the batch when the loss
/// goes non-finite.
TrainResult train(ModelBundle& model, const Corpus& corpus, const Corpus& valid_corpus,
                  const TrainConfig& cfg,
                  const std::function<void(const BatchLogRow&)>& on_row = nullptr);

/// Per-dialogue statistics of one gradient accumulation pass (exposed for
/// tests; `train` drives it).
struct DialogueGradStats {
  double reconstruction_sum = 0.0;
  double kl_sum = 0.0;
  int target_utterances = 0;
  int scored_tokens = 0;
};
DialogueGradStats accumulate_dialogue_gradients(const ModelBundle& model, const Dialogue& d,
                                                double kl_weight, double word_drop_rate,
                                                int max_unroll, Rng rng);

}  // namespace dialogen
