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

#include "dialogen/rng.hpp"
#include "dialogen/tensor.hpp"

namespace dialogen {

struct NamedParam {
  std::string name;
  Tensor value;
};

/// GRU gate parameters. Original GRU convention: with update gate z,
/// reset gate r and candidate hb,
///   z  = sigmoid(Wz x + Uz h + bz)
///   r  = sigmoid(Wr x + Ur h + br)
///   hb = tanh(Wc x + Uc (r * h) + bc)
///   h' = z * h + (1 - z) * hb
/// so the new state is a convex combination of the previous state and a
/// tanh candidate.
struct GruParams {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
  int input_size = 0;
  int hidden_size = 0;
};

/// LSTM parameters; the recurrent state is the concatenation [hidden; cell]
/// handled as one vector of length 2 * hidden_size.
struct LstmParams {
  Tensor w_input, u_input, b_input;
  Tensor w_forget, u_forget, b_forget;
  Tensor w_output, u_output, b_output;
  Tensor w_cand, u_cand, b_cand;
  int input_size = 0;
  int hidden_size = 0;
};

/// One GRU update. h_prev has length p.hidden_size, x length p.input_size.
Tensor gru_step(Tape& tape, const GruParams& p, const Tensor& h_prev, const Tensor& x);

/// One LSTM update on the concatenated [hidden; cell] state.
Tensor lstm_step(Tape& tape, const LstmParams& p, const Tensor& state_prev, const Tensor& x);

enum class CellKind { Gru, Lstm };

CellKind cell_kind_from_string(const std::string& s);
std::string to_string(CellKind k);

/// A recurrent cell of either kind behind one stepping interface.
/// Immutable after construction; shared read-only across tapes.
struct RnnCell {
  CellKind kind = CellKind::Gru;
  GruParams gru;
  LstmParams lstm;

  int input_size() const { return kind == CellKind::Gru ? gru.input_size : lstm.input_size; }
  int hidden_size() const { return kind == CellKind::Gru ? gru.hidden_size : lstm.hidden_size; }
  /// Full recurrent state width: hidden for GRU, 2 * hidden for LSTM.
  int state_size() const { return kind == CellKind::Gru ? hidden_size() : 2 * hidden_size(); }

  Tensor step(Tape& tape, const Tensor& state, const Tensor& x) const;
  /// The externally visible output of a state (the hidden part for LSTM).
  Tensor output_of(Tape& tape, const Tensor& state) const;
  Tensor zero_state() const { return Tensor::zeros({state_size()}); }

  void append_params(std::vector<NamedParam>& out, const std::string& prefix) const;
};

/// Orthogonal recurrent matrices, scaled-uniform input matrices, zero
/// biases; LSTM forget-gate bias 1.0.
GruParams init_gru(Rng& rng, int input_size, int hidden_size);
LstmParams init_lstm(Rng& rng, int input_size, int hidden_size);
RnnCell init_cell(CellKind kind, Rng& rng, int input_size, int hidden_size);

struct EncoderOutput {
  /// The encoding downstream consumes: final hidden output, or the
  /// concatenation of the two directions' final outputs.
  Tensor final;
  /// Per-position outputs, length == input length. For the bidirectional
  /// case entry t is [forward_t ; backward_t].
  std::vector<Tensor> step_outputs;
  /// Full final recurrent states per direction (for state carry-over).
  std::vector<Tensor> final_states;
};

/// Left fold of cell steps over a nonempty input sequence.
/// initial_state, when given, must match cell.state_size().
EncoderOutput encode_sequence(Tape& tape, const RnnCell& cell,
                              std::span<const Tensor> inputs,
                              const std::optional<Tensor>& initial_state = std::nullopt);

/// Independent forward and backward passes; final = [fwd_final ; bwd_final].
EncoderOutput encode_bidirectional(Tape& tape, const RnnCell& forward, const RnnCell& backward,
                                   std::span<const Tensor> inputs,
                                   const std::optional<Tensor>& initial_fwd = std::nullopt,
                                   const std::optional<Tensor>& initial_bwd = std::nullopt);

/// Fill a tensor with scaled-uniform (Glorot) values.
void glorot_fill(Tensor& t, Rng& rng, int fan_in, int fan_out);
/// Fill a square rank-2 tensor with a random orthogonal matrix.
void orthogonal_fill(Tensor& t, Rng& rng);
/// Fill with zero-mean normal draws of the given standard deviation.
void normal_fill(Tensor& t, Rng& rng, double stddev);

}  // namespace dialogen
