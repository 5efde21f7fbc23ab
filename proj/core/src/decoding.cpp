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

#include "dialogen/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dialogen/latent.hpp"

namespace dialogen {

LatentMode latent_mode_from_string(const std::string& s) {
  if (s == "prior_sample") return LatentMode::PriorSample;
  if (s == "prior_mean") return LatentMode::PriorMean;
  throw std::invalid_argument("unknown latent mode '" + s +
                              "' (expected prior_sample or prior_mean)");
}

std::string to_string(LatentMode m) {
  return m == LatentMode::PriorSample ? "prior_sample" : "prior_mean";
}

void DecodeConfig::validate() const {
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
}

namespace {

std::vector<double> values_of(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

/// Context summary for hierarchical models: encode every history utterance
/// and fold the context cell over the encodings.
std::vector<double> context_output_values(const ModelBundle& m, const Dialogue& history) {
  Tape tape(false);
  Tensor ctx_state = m.context.zero_state();
  std::vector<Tensor> carried;
  for (std::size_t n = 0; n < history.utterances.size(); ++n) {
    std::vector<Tensor> inputs;
    inputs.reserve(history.utterances[n].size());
    for (int tok : history.utterances[n]) inputs.push_back(tape.row(m.embedding, tok));
    EncoderOutput enc;
    if (m.config.bidirectional_encoder) {
      std::optional<Tensor> f, b;
      if (m.config.carry_encoder_state && n > 0) {
        f = carried[0];
        b = carried[1];
      }
      enc = encode_bidirectional(tape, m.encoder_fwd, m.encoder_bwd, inputs, f, b);
    } else {
      std::optional<Tensor> init;
      if (m.config.carry_encoder_state && n > 0) init = carried[0];
      enc = encode_sequence(tape, m.encoder_fwd, inputs, init);
    }
    carried = enc.final_states;
    ctx_state = m.context.step(tape, ctx_state, enc.final);
  }
  return values_of(m.context.output_of(tape, ctx_state));
}

bool is_candidate(int token) { return token != Vocabulary::kPad && token != Vocabulary::kSou; }

struct Comparator {
  /// Final ranking: normalized score descending, then shorter hypotheses,
  /// then lexicographic token order.
  bool better(const BeamHypothesis& a, const BeamHypothesis& b) const {
    const double na = a.normalized();
    const double nb = b.normalized();
    if (na != nb) return na > nb;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  }
};

}  // namespace

GenerationState prepare_generation(const ModelBundle& m, const Dialogue& context,
                                   LatentMode mode, Rng& rng) {
  if (context.utterances.empty())
    throw std::invalid_argument("generation requires a nonempty context");

  GenerationState gen;
  if (m.config.kind == ModelKind::Rnnlm) {
    // Prime the cell over the flattened context.
    Tape tape(false);
    Tensor state = m.decoder.zero_state();
    for (int tok : flatten_dialogue(context)) {
      state = m.decoder.step(tape, state, tape.row(m.embedding, tok));
    }
    gen.decoder_state = values_of(state);
    return gen;
  }

  gen.ctx_out = context_output_values(m, context);
  gen.decoder_state.assign(static_cast<std::size_t>(m.decoder.state_size()), 0.0);
  if (m.config.kind == ModelKind::Vhred) {
    DiagGaussian prior = prior_of(gen.ctx_out, m.prior);
    if (mode == LatentMode::PriorMean) {
      gen.z = prior.mean;
    } else {
      std::vector<double> noise(prior.mean.size());
      for (double& x : noise) x = rng.normal();
      gen.z = reparam_sample(prior, noise);
    }
  }
  return gen;
}

GenerationStep generation_step(const ModelBundle& m, const GenerationState& gen,
                               const std::vector<double>& state, int input_token) {
  Tape tape(false);
  Tensor st = Tensor::vec(state);
  Tensor emb = tape.row(m.embedding, input_token);
  Tensor input = emb;
  if (!gen.ctx_out.empty()) {
    Tensor ctx = Tensor::vec(gen.ctx_out);
    Tensor g;
    if (m.gate.kind == GatingKind::Dense) {
      g = tape.tanh(tape.add(tape.matmul(m.gate.w, ctx), m.gate.b));
    } else {
      Tensor probe = tape.add(tape.matmul(m.gate.m, m.decoder.output_of(tape, st)), m.gate.m_b);
      g = tape.tanh(tape.add(tape.matmul(m.gate.w, tape.mul(probe, ctx)), m.gate.b));
    }
    if (!gen.z.empty())
      input = tape.concat(emb, g, Tensor::vec(gen.z));
    else
      input = tape.concat(emb, g);
  }
  Tensor next = m.decoder.step(tape, st, input);
  Tensor logits = tape.add(tape.matmul(m.out_w, m.decoder.output_of(tape, next)), m.out_b);

  GenerationStep out;
  out.state = values_of(next);
  out.log_probs = Tape::log_softmax(logits.values());
  return out;
}

BeamResult beam_search(const ModelBundle& m, const Dialogue& context, const DecodeConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).split("beam-latent");
  GenerationState gen = prepare_generation(m, context, cfg.latent_mode, rng);

  std::vector<BeamHypothesis> live(1);
  live[0].state = gen.decoder_state;
  std::vector<BeamHypothesis> retired;
  const Comparator cmp;

  for (int round = 0; round < cfg.max_tokens && !live.empty(); ++round) {
    std::vector<BeamHypothesis> expanded;
    for (const BeamHypothesis& hyp : live) {
      const int input = hyp.tokens.empty() ? Vocabulary::kSou : hyp.tokens.back();
      GenerationStep step = generation_step(m, gen, hyp.state, input);
      for (int tok = 0; tok < static_cast<int>(step.log_probs.size()); ++tok) {
        if (!is_candidate(tok)) continue;
        BeamHypothesis child;
        child.tokens = hyp.tokens;
        child.tokens.push_back(tok);
        child.log_prob = hyp.log_prob + step.log_probs[static_cast<std::size_t>(tok)];
        child.finished = tok == Vocabulary::kEou;
        if (!child.finished) child.state = step.state;
        expanded.push_back(std::move(child));
      }
    }

    // Keep the beam_width best children by summed log-probability (finished
    // ones compete for slots, ties resolved deterministically by length and
    // then token order), then retire the finished survivors.
    std::sort(expanded.begin(), expanded.end(),
              [](const BeamHypothesis& a, const BeamHypothesis& b) {
                if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
                return a.tokens < b.tokens;
              });
    if (static_cast<int>(expanded.size()) > cfg.beam_width) expanded.resize(cfg.beam_width);
    live.clear();
    for (BeamHypothesis& h : expanded) {
      if (h.finished)
        retired.push_back(std::move(h));
      else
        live.push_back(std::move(h));
    }

    if (!retired.empty() && !live.empty()) {
      double worst_retired = retired.front().normalized();
      for (const BeamHypothesis& h : retired) worst_retired = std::min(worst_retired, h.normalized());
      // sum/max_tokens bounds any continuation's normalized score from above
      // (log-probabilities are negative and lengths only grow).
      double best_possible = -std::numeric_limits<double>::infinity();
      for (const BeamHypothesis& h : live)
        best_possible = std::max(best_possible, h.log_prob / cfg.max_tokens);
      if (best_possible <= worst_retired) break;
    }
  }

  BeamResult result;
  const std::vector<BeamHypothesis>* pool = retired.empty() ? &live : &retired;
  result.truncated = retired.empty();
  if (pool->empty()) throw std::logic_error("beam search produced no hypotheses");
  const BeamHypothesis* best = &(*pool)[0];
  for (const BeamHypothesis& h : *pool)
    if (cmp.better(h, *best)) best = &h;
  result.tokens = best->tokens;
  result.normalized_score = best->normalized();
  return result;
}

int sample_from_log_probs(std::span<const double> log_probs, std::span<const int> candidates,
                          double temperature, Rng& rng) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  if (candidates.empty()) throw std::invalid_argument("no candidates to sample from");
  double mx = -std::numeric_limits<double>::infinity();
  for (int c : candidates) mx = std::max(mx, log_probs[static_cast<std::size_t>(c)]);
  std::vector<double> w(candidates.size());
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    w[i] = std::exp((log_probs[static_cast<std::size_t>(candidates[i])] - mx) / temperature);
    total += w[i];
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    acc += w[i];
    if (u < acc) return candidates[i];
  }
  return candidates.back();
}

std::vector<int> sample_response(const ModelBundle& m, const Dialogue& context,
                                 double temperature, std::uint64_t seed, int max_tokens) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  Rng rng = Rng(seed).split("sample");
  Rng z_rng = rng.split("latent");
  GenerationState gen = prepare_generation(m, context, LatentMode::PriorSample, z_rng);

  std::vector<int> candidates;
  for (int tok = 0; tok < m.config.vocab_size; ++tok)
    if (is_candidate(tok)) candidates.push_back(tok);

  std::vector<int> out;
  std::vector<double> state = gen.decoder_state;
  int input = Vocabulary::kSou;
  Rng draw_rng = rng.split("draws");
  for (int t = 0; t < max_tokens; ++t) {
    GenerationStep step = generation_step(m, gen, state, input);
    const int tok = sample_from_log_probs(step.log_probs, candidates, temperature, draw_rng);
    out.push_back(tok);
    if (tok == Vocabulary::kEou) break;
    state = step.state;
    input = tok;
  }
  return out;
}

std::vector<int> as_utterance(std::span<const int> response_tokens) {
  std::vector<int> utt;
  utt.reserve(response_tokens.size() + 2);
  utt.push_back(Vocabulary::kSou);
  utt.insert(utt.end(), response_tokens.begin(), response_tokens.end());
  if (utt.back() != Vocabulary::kEou) utt.push_back(Vocabulary::kEou);
  return utt;
}

std::vector<std::vector<int>> rollout(const ModelBundle& m, const Dialogue& context, int n_turns,
                                      const DecodeConfig& cfg) {
  if (n_turns < 1) throw std::invalid_argument("rollout needs n_turns >= 1");
  std::vector<std::vector<int>> responses;
  Dialogue history = context;
  for (int turn = 0; turn < n_turns; ++turn) {
    DecodeConfig turn_cfg = cfg;
    turn_cfg.seed = Rng(cfg.seed).split("rollout-turn").split(static_cast<std::uint64_t>(turn)).key();
    BeamResult r = beam_search(m, history, turn_cfg);
    responses.push_back(r.tokens);
    history.utterances.push_back(as_utterance(r.tokens));
  }
  return responses;
}

}  // namespace dialogen
