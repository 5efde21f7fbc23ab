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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dialogen/data.hpp"
#include "dialogen/latent.hpp"
#include "dialogen/rnn.hpp"
#include "dialogen/tensor.hpp"

namespace dialogen {

enum class ModelKind { Rnnlm, Hred, Vhred };
enum class GatingKind { Dense, ElemProd };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);
GatingKind gating_kind_from_string(const std::string& s);
std::string to_string(GatingKind k);

/// Architecture descriptor. Together with a vocabulary this determines
/// every parameter shape.
struct ModelConfig {
  ModelKind kind = ModelKind::Hred;
  int vocab_size = 0;
  int embedding_size = 16;
  int encoder_size = 32;
  bool bidirectional_encoder = false;
  int context_size = 32;
  int decoder_size = 32;
  /// Width of the context-to-decoder conditioning vector.
  int gate_size = 32;
  /// Latent dimensionality d_z (VHRED only).
  int latent_size = 0;
  CellKind encoder_cell = CellKind::Gru;
  CellKind context_cell = CellKind::Gru;
  CellKind decoder_cell = CellKind::Gru;
  GatingKind gating = GatingKind::Dense;
  /// Start each utterance's encoder from the final encoder state of the
  /// previous utterance instead of zeros.
  bool carry_encoder_state = false;
  /// The default prior/posterior networks use two tanh layers;
  /// the single-layer variant is available behind this flag.
  bool posterior_two_layer = true;
  double covariance_scale = 0.1;

  int encoder_output_size() const {
    return bidirectional_encoder ? 2 * encoder_size : encoder_size;
  }
  int decoder_input_size() const;
  void validate() const;
};

/// Context-to-decoder gating network.
///   Dense:    g = tanh(w * ctx + b), fixed per utterance.
///   ElemProd: g_t = tanh(w * ((m * dec_hidden_prev + m_b) * ctx) + b),
///             recomputed every decoder step.
struct GatingParams {
  GatingKind kind = GatingKind::Dense;
  Tensor w, b;
  Tensor m, m_b;  // ElemProd only
  void append_params(std::vector<NamedParam>& out, const std::string& prefix) const;
};

/// Parameter set plus architecture for one of the three models. Read-only
/// during scoring/decoding; training mutates it from a single thread.
struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;

  Tensor embedding;  // vocab_size x embedding_size
  RnnCell encoder_fwd;
  RnnCell encoder_bwd;  // bidirectional only
  RnnCell context;
  RnnCell decoder;
  GatingParams gate;
  Tensor out_w, out_b;  // vocab_size x decoder_size, vocab_size
  LatentNet prior, posterior;  // VHRED only

  /// Stable-ordered named parameter list (optimizer and checkpoint order).
  std::vector<NamedParam> parameters() const;
  void zero_grads() const;
};

ModelBundle build_model(const ModelConfig& config, const Vocabulary& vocab, Rng& rng);

std::vector<int> flatten_dialogue(const Dialogue& d);

/// RNNLM negative log-likelihood of a token sequence:
/// -sum_{m=2..M} log P(w_m | w_1..w_{m-1}). The first token is treated as
/// given context and excluded from the sum (every utterance starts with the
/// mandatory start symbol, so no separate unigram term is needed).
struct RnnlmScore {
  Tensor nll;                     // graph scalar
  std::vector<double> per_token;  // scored-token terms, length M-1
  int scored = 0;
};
RnnlmScore rnnlm_nll(Tape& tape, const ModelBundle& m, std::span<const int> tokens);

/// HRED teacher-forced scoring: the encoder consumes utterance n, the
/// context state updates once per utterance, and the decoder for utterance
/// n+1 conditions on the gated context output. Requires >= 2 utterances.
struct HredScore {
  Tensor total;                       // graph scalar, sum of utterance NLLs
  std::vector<Tensor> per_utterance;  // graph nodes per target utterance
  int scored = 0;
};
HredScore hred_forward(Tape& tape, const ModelBundle& m, const Dialogue& d);

/// Per-utterance terms of the variational lower bound.
/// `reconstruction` holds per-target-utterance decoder NLLs (>= 0) and `kl`
/// the KL divergences posterior-to-prior; the bound itself is
///   sum_n (-reconstruction_n - kl_weight * kl_n),
/// i.e. reconstruction log-likelihood minus weighted KL.
struct ElboBreakdown {
  std::vector<double> reconstruction;
  std::vector<double> kl;
  double kl_weight = 1.0;
  double bound = 0.0;
};
double combine_bound(std::span<const double> reconstruction, std::span<const double> kl,
                     double kl_weight);

struct VhredElbo {
  /// Graph scalar sum_n (reconstruction_n + kl_weight * kl_n); minimizing
  /// it maximizes the bound.
  Tensor objective;
  ElboBreakdown breakdown;
  int scored = 0;
};

/// Variational lower bound of a dialogue under a VHRED bundle. For each
/// target utterance, z is drawn from the approximate posterior by
/// reparameterization with the supplied standard-normal noise (one vector
/// of length d_z per target utterance; an empty span means zero noise, so
/// z equals the posterior mean). `drop_masks` mark decoder input positions
/// replaced by the unknown-token embedding (empty span: no dropout).
VhredElbo vhred_elbo(Tape& tape, const ModelBundle& m, const Dialogue& d, double kl_weight,
                     std::span<const std::vector<double>> noise,
                     std::span<const std::vector<bool>> drop_masks);

/// Plain-value conditioning of each target utterance: the context output
/// the decoder (and the prior) condition on, and the encoder summary of the
/// target utterance itself (the posterior's extra input).
struct UtteranceContext {
  std::vector<double> ctx_out;
  std::vector<double> target_encoding;
};
std::vector<UtteranceContext> dialogue_contexts(const ModelBundle& m, const Dialogue& d);

/// Decoder NLL of one utterance given fixed conditioning values; no graph.
/// `z` may be empty for HRED-style decoding of a VHRED with ignored latent.
double decoder_nll_plain(const ModelBundle& m, std::span<const int> utterance,
                         std::span<const double> ctx_out, std::span<const double> z,
                         const std::vector<bool>* drop_mask = nullptr);

/// Teacher-forced decoder pass over positions [start_pos, start_pos +
/// max_steps) of an utterance: position t is predicted from input token
/// t-1 (replaced by the unknown embedding where drop_mask marks it), the
/// gated context output and, when given, the latent z. Building block for
/// both whole-dialogue scoring and truncated-backpropagation chunks.
struct DecodeSpan {
  Tensor nll;    // summed over the span
  Tensor state;  // decoder state after the span
  int next_pos = 0;
  int scored = 0;
};
DecodeSpan decode_utterance_span(Tape& tape, const ModelBundle& m,
                                 std::span<const int> utterance, const Tensor* ctx_out,
                                 const Tensor* z, const std::vector<bool>* drop_mask,
                                 const Tensor& state_in, int start_pos, int max_steps);

/// Copy every parameter whose name and shape match from src to dst.
/// Returns the number of parameters copied.
int copy_matching_params(ModelBundle& dst, const ModelBundle& src);

/// Build a VHRED sharing an HRED's architecture, with encoder, context,
/// decoder, gating, embedding and output parameters copied from the source
/// and the decoder's latent-block input columns set to zero, so the fresh
/// VHRED reproduces the source HRED's reconstruction terms exactly. The
/// prior/posterior networks are freshly initialized.
ModelBundle vhred_from_hred(const ModelBundle& hred, int latent_size, Rng& rng,
                            bool posterior_two_layer = true, double covariance_scale = 0.1);

/// Zero the decoder input-weight columns that read the latent block.
void zero_decoder_latent_weights(ModelBundle& vhred);

}  // namespace dialogen
