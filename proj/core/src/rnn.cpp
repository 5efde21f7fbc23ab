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

#include "dialogen/rnn.hpp"

#include <cmath>
#include <stdexcept>

namespace dialogen {

Tensor gru_step(Tape& tape, const GruParams& p, const Tensor& h_prev, const Tensor& x) {
  if (h_prev.size() != p.hidden_size)
    throw std::invalid_argument("gru_step state size " + h_prev.shape_string() +
                                " does not match hidden size " + std::to_string(p.hidden_size));
  if (x.size() != p.input_size)
    throw std::invalid_argument("gru_step input size " + x.shape_string() +
                                " does not match input size " + std::to_string(p.input_size));

  Tensor z = tape.sigmoid(tape.add(tape.add(tape.matmul(p.w_update, x),
                                            tape.matmul(p.u_update, h_prev)),
                                   p.b_update));
  Tensor r = tape.sigmoid(tape.add(tape.add(tape.matmul(p.w_reset, x),
                                            tape.matmul(p.u_reset, h_prev)),
                                   p.b_reset));
  Tensor cand = tape.tanh(tape.add(tape.add(tape.matmul(p.w_cand, x),
                                            tape.matmul(p.u_cand, tape.mul(r, h_prev))),
                                   p.b_cand));
  Tensor keep = tape.mul(z, h_prev);
  Tensor one_minus_z = tape.add_scalar(tape.scale(z, -1.0), 1.0);
  return tape.add(keep, tape.mul(one_minus_z, cand));
}

Tensor lstm_step(Tape& tape, const LstmParams& p, const Tensor& state_prev, const Tensor& x) {
  if (state_prev.size() != 2 * p.hidden_size)
    throw std::invalid_argument("lstm_step state size " + state_prev.shape_string() +
                                " does not match 2 * hidden size " +
                                std::to_string(2 * p.hidden_size));
  if (x.size() != p.input_size)
    throw std::invalid_argument("lstm_step input size " + x.shape_string() +
                                " does not match input size " + std::to_string(p.input_size));

  Tensor h = tape.slice(state_prev, 0, p.hidden_size);
  Tensor c = tape.slice(state_prev, p.hidden_size, 2 * p.hidden_size);

  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    return tape.add(tape.add(tape.matmul(w, x), tape.matmul(u, h)), b);
  };
  Tensor in_gate = tape.sigmoid(gate(p.w_input, p.u_input, p.b_input));
  Tensor forget_gate = tape.sigmoid(gate(p.w_forget, p.u_forget, p.b_forget));
  Tensor out_gate = tape.sigmoid(gate(p.w_output, p.u_output, p.b_output));
  Tensor cand = tape.tanh(gate(p.w_cand, p.u_cand, p.b_cand));

  Tensor c_next = tape.add(tape.mul(forget_gate, c), tape.mul(in_gate, cand));
  Tensor h_next = tape.mul(out_gate, tape.tanh(c_next));
  return tape.concat(h_next, c_next);
}

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "gru") return CellKind::Gru;
  if (s == "lstm") return CellKind::Lstm;
  throw std::invalid_argument("unknown cell kind '" + s + "' (expected gru or lstm)");
}

std::string to_string(CellKind k) { return k == CellKind::Gru ? "gru" : "lstm"; }

Tensor RnnCell::step(Tape& tape, const Tensor& state, const Tensor& x) const {
  return kind == CellKind::Gru ? gru_step(tape, gru, state, x)
                               : lstm_step(tape, lstm, state, x);
}

Tensor RnnCell::output_of(Tape& tape, const Tensor& state) const {
  if (kind == CellKind::Gru) return state;
  return tape.slice(state, 0, hidden_size());
}

void RnnCell::append_params(std::vector<NamedParam>& out, const std::string& prefix) const {
  if (kind == CellKind::Gru) {
    out.push_back({prefix + ".w_update", gru.w_update});
    out.push_back({prefix + ".u_update", gru.u_update});
    out.push_back({prefix + ".b_update", gru.b_update});
    out.push_back({prefix + ".w_reset", gru.w_reset});
    out.push_back({prefix + ".u_reset", gru.u_reset});
    out.push_back({prefix + ".b_reset", gru.b_reset});
    out.push_back({prefix + ".w_cand", gru.w_cand});
    out.push_back({prefix + ".u_cand", gru.u_cand});
    out.push_back({prefix + ".b_cand", gru.b_cand});
  } else {
    out.push_back({prefix + ".w_input", lstm.w_input});
    out.push_back({prefix + ".u_input", lstm.u_input});
    out.push_back({prefix + ".b_input", lstm.b_input});
    out.push_back({prefix + ".w_forget", lstm.w_forget});
    out.push_back({prefix + ".u_forget", lstm.u_forget});
    out.push_back({prefix + ".b_forget", lstm.b_forget});
    out.push_back({prefix + ".w_output", lstm.w_output});
    out.push_back({prefix + ".u_output", lstm.u_output});
    out.push_back({prefix + ".b_output", lstm.b_output});
    out.push_back({prefix + ".w_cand", lstm.w_cand});
    out.push_back({prefix + ".u_cand", lstm.u_cand});
    out.push_back({prefix + ".b_cand", lstm.b_cand});
  }
}

void glorot_fill(Tensor& t, Rng& rng, int fan_in, int fan_out) {
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-s, s);
}

void normal_fill(Tensor& t, Rng& rng, double stddev) {
  for (double& v : t.values()) v = rng.normal() * stddev;
}

void orthogonal_fill(Tensor& t, Rng& rng) {
  const int n = t.rows();
  if (t.cols() != n) throw std::invalid_argument("orthogonal_fill needs a square matrix");
  // Random normal matrix, then modified Gram-Schmidt on the rows.
  std::vector<std::vector<double>> rowsv(static_cast<std::size_t>(n),
                                         std::vector<double>(static_cast<std::size_t>(n)));
  for (auto& r : rowsv)
    for (double& v : r) v = rng.normal();
  for (int i = 0; i < n; ++i) {
    auto& ri = rowsv[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j) {
      const auto& rj = rowsv[static_cast<std::size_t>(j)];
      double dot = 0.0;
      for (int k = 0; k < n; ++k) dot += ri[static_cast<std::size_t>(k)] * rj[static_cast<std::size_t>(k)];
      for (int k = 0; k < n; ++k) ri[static_cast<std::size_t>(k)] -= dot * rj[static_cast<std::size_t>(k)];
    }
    double norm = 0.0;
    for (double v : ri) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      // Degenerate draw; retry this row from fresh noise.
      for (double& v : ri) v = rng.normal();
      --i;
      continue;
    }
    for (double& v : ri) v /= norm;
  }
  double* out = t.values().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i) * n + j] = rowsv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
}

namespace {

Tensor input_matrix(Rng& rng, int hidden, int input) {
  Tensor t = Tensor::zeros({hidden, input}, true);
  glorot_fill(t, rng, input, hidden);
  return t;
}

Tensor recurrent_matrix(Rng& rng, int hidden) {
  Tensor t = Tensor::zeros({hidden, hidden}, true);
  orthogonal_fill(t, rng);
  return t;
}

}  // namespace

GruParams init_gru(Rng& rng, int input_size, int hidden_size) {
  GruParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_update = input_matrix(rng, hidden_size, input_size);
  p.u_update = recurrent_matrix(rng, hidden_size);
  p.b_update = Tensor::zeros({hidden_size}, true);
  p.w_reset = input_matrix(rng, hidden_size, input_size);
  p.u_reset = recurrent_matrix(rng, hidden_size);
  p.b_reset = Tensor::zeros({hidden_size}, true);
  p.w_cand = input_matrix(rng, hidden_size, input_size);
  p.u_cand = recurrent_matrix(rng, hidden_size);
  p.b_cand = Tensor::zeros({hidden_size}, true);
  return p;
}

LstmParams init_lstm(Rng& rng, int input_size, int hidden_size) {
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_input = input_matrix(rng, hidden_size, input_size);
  p.u_input = recurrent_matrix(rng, hidden_size);
  p.b_input = Tensor::zeros({hidden_size}, true);
  p.w_forget = input_matrix(rng, hidden_size, input_size);
  p.u_forget = recurrent_matrix(rng, hidden_size);
  p.b_forget = Tensor::full({hidden_size}, 1.0, true);
  p.w_output = input_matrix(rng, hidden_size, input_size);
  p.u_output = recurrent_matrix(rng, hidden_size);
  p.b_output = Tensor::zeros({hidden_size}, true);
  p.w_cand = input_matrix(rng, hidden_size, input_size);
  p.u_cand = recurrent_matrix(rng, hidden_size);
  p.b_cand = Tensor::zeros({hidden_size}, true);
  return p;
}

RnnCell init_cell(CellKind kind, Rng& rng, int input_size, int hidden_size) {
  RnnCell cell;
  cell.kind = kind;
  if (kind == CellKind::Gru)
    cell.gru = init_gru(rng, input_size, hidden_size);
  else
    cell.lstm = init_lstm(rng, input_size, hidden_size);
  return cell;
}

EncoderOutput encode_sequence(Tape& tape, const RnnCell& cell,
                              std::span<const Tensor> inputs,
                              const std::optional<Tensor>& initial_state) {
  if (inputs.empty()) throw std::invalid_argument("encode_sequence on an empty sequence");
  Tensor state = initial_state ? *initial_state : cell.zero_state();
  if (state.size() != cell.state_size())
    throw std::invalid_argument("encoder initial state size " + state.shape_string() +
                                " does not match cell state size " +
                                std::to_string(cell.state_size()));
  EncoderOutput out;
  out.step_outputs.reserve(inputs.size());
  for (const Tensor& x : inputs) {
    state = cell.step(tape, state, x);
    out.step_outputs.push_back(cell.output_of(tape, state));
  }
  out.final = out.step_outputs.back();
  out.final_states = {state};
  return out;
}

EncoderOutput encode_bidirectional(Tape& tape, const RnnCell& forward, const RnnCell& backward,
                                   std::span<const Tensor> inputs,
                                   const std::optional<Tensor>& initial_fwd,
                                   const std::optional<Tensor>& initial_bwd) {
  if (inputs.empty()) throw std::invalid_argument("encode_sequence on an empty sequence");
  const std::size_t n = inputs.size();

  Tensor fstate = initial_fwd ? *initial_fwd : forward.zero_state();
  std::vector<Tensor> fwd_out;
  fwd_out.reserve(n);
  for (const Tensor& x : inputs) {
    fstate = forward.step(tape, fstate, x);
    fwd_out.push_back(forward.output_of(tape, fstate));
  }

  Tensor bstate = initial_bwd ? *initial_bwd : backward.zero_state();
  std::vector<Tensor> bwd_out(n);
  for (std::size_t i = n; i-- > 0;) {
    bstate = backward.step(tape, bstate, inputs[i]);
    bwd_out[i] = backward.output_of(tape, bstate);
  }

  EncoderOutput out;
  out.step_outputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.step_outputs.push_back(tape.concat(fwd_out[i], bwd_out[i]));
  out.final = tape.concat(fwd_out.back(), bwd_out.front());
  out.final_states = {fstate, bstate};
  return out;
}

}  // namespace dialogen
