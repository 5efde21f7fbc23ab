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

#include "dialogen/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "dialogen/checkpoint.hpp"
#include "dialogen/latent.hpp"

namespace dialogen {

AdamState AdamState::for_params(std::span<const NamedParam> params) {
  AdamState s;
  s.slots.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(params[i].value.size());
    s.slots[i].m.assign(n, 0.0);
    s.slots[i].v.assign(n, 0.0);
  }
  return s;
}

void adam_step(std::span<const NamedParam> params, AdamState& s, double learning_rate) {
  if (learning_rate <= 0.0) throw std::invalid_argument("adam_step requires a positive rate");
  if (s.slots.size() != params.size())
    throw std::invalid_argument("adam state does not match parameter count");
  s.step += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].value;
    auto& slot = s.slots[i];
    if (slot.m.size() != static_cast<std::size_t>(p.size()))
      throw std::invalid_argument("adam slot shape does not match parameter " + params[i].name);
    auto values = p.values();
    auto grad = p.grad();
    for (std::size_t j = 0; j < slot.m.size(); ++j) {
      const double g = grad[j];
      slot.m[j] = s.beta1 * slot.m[j] + (1.0 - s.beta1) * g;
      slot.v[j] = s.beta2 * slot.v[j] + (1.0 - s.beta2) * g * g;
      const double mhat = slot.m[j] / bc1;
      const double vhat = slot.v[j] / bc2;
      values[j] -= learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
    }
  }
}

double clip_gradients(std::span<const NamedParam> params, double threshold) {
  if (threshold <= 0.0) throw std::invalid_argument("clip threshold must be positive");
  double sq = 0.0;
  for (const NamedParam& p : params)
    for (double g : p.value.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > threshold) {
    const double scale = threshold / norm;
    for (const NamedParam& p : params)
      for (double& g : const_cast<Tensor&>(p.value).grad()) g *= scale;
  }
  return norm;
}

double kl_anneal_weight(long long batch_index, long long ramp) {
  if (batch_index < 0) throw std::invalid_argument("batch_index must be nonnegative");
  if (ramp <= 0) return 1.0;
  if (batch_index >= ramp) return 1.0;
  return static_cast<double>(batch_index) / static_cast<double>(ramp);
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (clip_threshold <= 0.0) throw std::invalid_argument("clip_threshold must be positive");
  if (kl_ramp_batches < 0) throw std::invalid_argument("kl_ramp_batches must be >= 0");
  if (word_drop_rate < 0.0 || word_drop_rate >= 1.0)
    throw std::invalid_argument("word_drop_rate must lie in [0, 1)");
  if (validate_every <= 0) throw std::invalid_argument("validate_every must be positive");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (max_batches < 1) throw std::invalid_argument("max_batches must be >= 1");
  if (max_unroll < 1) throw std::invalid_argument("max_unroll must be >= 1");
}

bool EarlyStopState::observe(double bound, int patience) {
  const bool improved = bound > best_bound;
  if (improved) {
    best_bound = bound;
    rounds_since_improvement = 0;
    batches_since_improvement = 0;
  } else {
    ++rounds_since_improvement;
    if (rounds_since_improvement >= patience) stopped = true;
  }
  return improved;
}

namespace {

Tensor constant_vec(std::span<const double> v) {
  return Tensor::vec({v.begin(), v.end()});
}

std::vector<double> values_of(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

/// Gradient pass over an RNNLM dialogue: the flattened token stream is cut
/// into chunks of at most max_unroll scored tokens; the cell state crosses
/// chunk boundaries as a constant.
DialogueGradStats rnnlm_gradients(const ModelBundle& m, const Dialogue& d, int max_unroll) {
  const std::vector<int> tokens = flatten_dialogue(d);
  DialogueGradStats stats;
  stats.target_utterances = static_cast<int>(d.utterances.size());

  std::vector<double> state_values(static_cast<std::size_t>(m.decoder.state_size()), 0.0);
  std::size_t pos = 1;
  while (pos < tokens.size()) {
    const std::size_t end = std::min(tokens.size(), pos + static_cast<std::size_t>(max_unroll));
    Tape tape;
    Tensor state = constant_vec(state_values);
    Tensor nll;
    for (std::size_t t = pos; t < end; ++t) {
      Tensor emb = tape.row(m.embedding, tokens[t - 1]);
      state = m.decoder.step(tape, state, emb);
      Tensor logits = tape.add(tape.matmul(m.out_w, m.decoder.output_of(tape, state)), m.out_b);
      Tensor term = tape.softmax_xent(logits, tokens[t]);
      nll = nll.defined() ? tape.add(nll, term) : term;
      ++stats.scored_tokens;
    }
    stats.reconstruction_sum += nll.item();
    tape.backward(nll);
    state_values = values_of(state);
    pos = end;
  }
  return stats;
}

struct HierCarry {
  std::vector<double> ctx_state;
  std::vector<double> prev_enc_out;                // encoder output of utterance t0-1
  std::vector<std::vector<double>> enc_chain;      // final encoder states per direction
  bool have_prev = false;
};

/// Gradient pass over one HRED/VHRED dialogue with truncated
/// backpropagation. Segments are cut at utterance boundaries once they
/// reach max_unroll scored tokens; an utterance longer than max_unroll is
/// decoded in chunks with its decoder state crossing chunk boundaries as a
/// constant. All carried states are detached values.
DialogueGradStats hier_gradients(const ModelBundle& m, const Dialogue& d, double kl_weight,
                                 double word_drop_rate, int max_unroll, Rng& rng) {
  const bool latent = m.config.kind == ModelKind::Vhred;
  const std::size_t n_utt = d.utterances.size();
  if (n_utt < 2) throw std::invalid_argument("training dialogue needs at least two utterances");

  // Plan: consecutive target utterances per segment, bounded by max_unroll
  // scored tokens; oversized targets get their own segment.
  std::vector<std::vector<std::size_t>> segments;
  {
    std::vector<std::size_t> current;
    int budget = 0;
    for (std::size_t t = 1; t < n_utt; ++t) {
      const int scored = static_cast<int>(d.utterances[t].size()) - 1;
      if (scored > max_unroll) {
        if (!current.empty()) segments.push_back(std::move(current));
        current.clear();
        segments.push_back({t});
        budget = 0;
        continue;
      }
      if (budget + scored > max_unroll && !current.empty()) {
        segments.push_back(std::move(current));
        current.clear();
        budget = 0;
      }
      current.push_back(t);
      budget += scored;
    }
    if (!current.empty()) segments.push_back(std::move(current));
  }

  DialogueGradStats stats;
  HierCarry carry;
  carry.ctx_state.assign(static_cast<std::size_t>(m.context.state_size()), 0.0);

  for (const auto& segment : segments) {
    Tape tape;
    Tensor ctx_state = constant_vec(carry.ctx_state);
    Tensor pending_enc;                  // context input for the next step
    std::vector<Tensor> chain_states;    // encoder carry chain
    if (carry.have_prev) {
      pending_enc = constant_vec(carry.prev_enc_out);
      for (const auto& s : carry.enc_chain) chain_states.push_back(constant_vec(s));
    }

    auto encode_utt = [&](std::size_t idx) {
      std::vector<Tensor> inputs;
      inputs.reserve(d.utterances[idx].size());
      for (int tok : d.utterances[idx]) inputs.push_back(tape.row(m.embedding, tok));
      if (m.config.bidirectional_encoder) {
        std::optional<Tensor> f, b;
        if (m.config.carry_encoder_state && !chain_states.empty()) {
          f = chain_states[0];
          b = chain_states[1];
        }
        return encode_bidirectional(tape, m.encoder_fwd, m.encoder_bwd, inputs, f, b);
      }
      std::optional<Tensor> init;
      if (m.config.carry_encoder_state && !chain_states.empty()) init = chain_states[0];
      return encode_sequence(tape, m.encoder_fwd, inputs, init);
    };

    if (!carry.have_prev) {
      EncoderOutput enc0 = encode_utt(0);
      pending_enc = enc0.final;
      chain_states = enc0.final_states;
    }

    Tensor objective;
    bool swept = false;
    for (std::size_t t : segment) {
      ctx_state = m.context.step(tape, ctx_state, pending_enc);
      Tensor ctx_out = m.context.output_of(tape, ctx_state);

      EncoderOutput enc_t = encode_utt(t);

      Tensor z;
      if (latent) {
        GaussianNodes prior_g = m.prior.forward(tape, ctx_out);
        GaussianNodes post_g = m.posterior.forward(tape, tape.concat(ctx_out, enc_t.final));
        const int d_z = m.config.latent_size;
        std::vector<double> noise(static_cast<std::size_t>(d_z));
        Rng noise_rng = rng.split("noise").split(t);
        for (double& x : noise) x = noise_rng.normal();
        z = reparam_sample_node(tape, post_g, Tensor::vec(noise));
        Tensor kl = gaussian_kl_node(tape, post_g, prior_g);
        stats.kl_sum += kl.item();
        objective = objective.defined() ? tape.add(objective, tape.scale(kl, kl_weight))
                                        : tape.scale(kl, kl_weight);
      }

      const std::span<const int> utt = d.utterances[t];
      const int scored = static_cast<int>(utt.size()) - 1;
      std::vector<bool> mask;
      if (latent && word_drop_rate > 0.0) {
        Rng drop_rng = rng.split("word-drop").split(t);
        mask = word_drop_mask(scored, word_drop_rate, drop_rng);
      }

      if (scored <= max_unroll) {
        DecodeSpan span = decode_utterance_span(tape, m, utt, &ctx_out,
                                                z.defined() ? &z : nullptr,
                                                mask.empty() ? nullptr : &mask,
                                                m.decoder.zero_state(), 1, scored);
        stats.reconstruction_sum += span.nll.item();
        stats.scored_tokens += scored;
        objective = objective.defined() ? tape.add(objective, span.nll) : span.nll;
      } else {
        // Oversized target (alone in its segment): first chunk in this tape,
        // further chunks on fresh tapes with detached conditioning.
        DecodeSpan span = decode_utterance_span(tape, m, utt, &ctx_out,
                                                z.defined() ? &z : nullptr,
                                                mask.empty() ? nullptr : &mask,
                                                m.decoder.zero_state(), 1, max_unroll);
        stats.reconstruction_sum += span.nll.item();
        stats.scored_tokens += max_unroll;
        objective = objective.defined() ? tape.add(objective, span.nll) : span.nll;

        // Close this tape before chunking on. Oversized targets are always
        // alone in their segment, so this ends the segment.
        carry.ctx_state = values_of(ctx_state);
        carry.prev_enc_out = values_of(enc_t.final);
        carry.enc_chain.clear();
        for (const Tensor& s : enc_t.final_states) carry.enc_chain.push_back(values_of(s));
        carry.have_prev = true;
        const std::vector<double> ctx_vals = values_of(ctx_out);
        const std::vector<double> z_vals = z.defined() ? values_of(z) : std::vector<double>();
        std::vector<double> dec_state = values_of(span.state);
        int pos = span.next_pos;
        tape.backward(objective);

        while (pos < static_cast<int>(utt.size())) {
          Tape chunk_tape;
          Tensor ctx_c = constant_vec(ctx_vals);
          std::optional<Tensor> z_c;
          if (!z_vals.empty()) z_c = constant_vec(z_vals);
          DecodeSpan chunk = decode_utterance_span(
              chunk_tape, m, utt, &ctx_c, z_c ? &*z_c : nullptr,
              mask.empty() ? nullptr : &mask, constant_vec(dec_state), pos, max_unroll);
          stats.reconstruction_sum += chunk.nll.item();
          stats.scored_tokens += chunk.next_pos - pos;
          chunk_tape.backward(chunk.nll);
          dec_state = values_of(chunk.state);
          pos = chunk.next_pos;
        }
        ++stats.target_utterances;
        swept = true;
        break;
      }
      ++stats.target_utterances;
      pending_enc = enc_t.final;
      chain_states = enc_t.final_states;
    }

    if (!swept) {
      tape.backward(objective);
      carry.ctx_state = values_of(ctx_state);
      carry.prev_enc_out = values_of(pending_enc);
      carry.enc_chain.clear();
      for (const Tensor& s : chain_states) carry.enc_chain.push_back(values_of(s));
      carry.have_prev = true;
    }
  }
  return stats;
}

}  // namespace

DialogueGradStats accumulate_dialogue_gradients(const ModelBundle& model, const Dialogue& d,
                                                double kl_weight, double word_drop_rate,
                                                int max_unroll, Rng rng) {
  if (model.config.kind == ModelKind::Rnnlm) return rnnlm_gradients(model, d, max_unroll);
  return hier_gradients(model, d, kl_weight, word_drop_rate, max_unroll, rng);
}

ValidationResult validate(const ModelBundle& model, const Corpus& corpus, double kl_weight,
                          int mc_samples, std::uint64_t seed) {
  if (corpus.dialogues.empty()) throw std::invalid_argument("validate on an empty corpus");
  ValidationResult r;
  r.mc_samples = mc_samples;
  double det_bound = 0.0, mc_bound = 0.0, kl_total = 0.0;
  long long tokens = 0, utterances = 0;

  Rng base = Rng(seed).split("validate");
  for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
    const Dialogue& d = corpus.dialogues[di];
    switch (model.config.kind) {
      case ModelKind::Rnnlm: {
        Tape tape(false);
        RnnlmScore s = rnnlm_nll(tape, model, flatten_dialogue(d));
        det_bound += -s.nll.item();
        mc_bound += -s.nll.item();
        tokens += s.scored;
        utterances += static_cast<long long>(d.utterances.size());
        break;
      }
      case ModelKind::Hred: {
        Tape tape(false);
        HredScore s = hred_forward(tape, model, d);
        det_bound += -s.total.item();
        mc_bound += -s.total.item();
        tokens += s.scored;
        utterances += static_cast<long long>(d.utterances.size()) - 1;
        break;
      }
      case ModelKind::Vhred: {
        Tape tape(false);
        VhredElbo det = vhred_elbo(tape, model, d, kl_weight, {}, {});
        det_bound += det.breakdown.bound;
        for (double k : det.breakdown.kl) kl_total += k;
        tokens += det.scored;
        const std::size_t targets = d.utterances.size() - 1;
        utterances += static_cast<long long>(targets);

        Rng mc_rng = base.split(di);
        double acc = 0.0;
        for (int s = 0; s < mc_samples; ++s) {
          std::vector<std::vector<double>> noise(targets);
          for (auto& nv : noise) {
            nv.resize(static_cast<std::size_t>(model.config.latent_size));
            for (double& x : nv) x = mc_rng.normal();
          }
          Tape mc_tape(false);
          acc += vhred_elbo(mc_tape, model, d, kl_weight, noise, {}).breakdown.bound;
        }
        mc_bound += acc / mc_samples;
        break;
      }
    }
  }
  r.bound_per_token = det_bound / static_cast<double>(tokens);
  r.bound_per_utterance = det_bound / static_cast<double>(utterances);
  r.mc_bound_per_token = mc_bound / static_cast<double>(tokens);
  r.mc_bound_per_utterance = mc_bound / static_cast<double>(utterances);
  r.mean_kl_per_utterance =
      model.config.kind == ModelKind::Vhred ? kl_total / static_cast<double>(utterances) : 0.0;
  return r;
}

TrainResult train(ModelBundle& model, const Corpus& corpus, const Corpus& valid_corpus,
                  const TrainConfig& cfg, const std::function<void(const BatchLogRow&)>& on_row) {
  cfg.validate();
  if (corpus.dialogues.empty() || valid_corpus.dialogues.empty())
    throw std::invalid_argument("train requires nonempty training and validation corpora");

  const std::vector<NamedParam> params = model.parameters();
  AdamState adam = AdamState::for_params(params);
  BatchStream stream(corpus, cfg.batch_size, cfg.max_unroll, cfg.seed);
  EarlyStopState early;
  TrainResult result;
  Rng base(cfg.seed);

  const bool latent = model.config.kind == ModelKind::Vhred;

  for (long long batch = 0; batch < cfg.max_batches; ++batch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double w = latent ? kl_anneal_weight(batch, cfg.kl_ramp_batches) : 1.0;
    Batch b = stream.next();

    model.zero_grads();
    double recon_sum = 0.0, kl_sum = 0.0;
    long long scored = 0, targets = 0;
    for (std::size_t slot = 0; slot < b.dialogue_indices.size(); ++slot) {
      const Dialogue& d =
          corpus.dialogues[static_cast<std::size_t>(b.dialogue_indices[slot])];
      Rng drng = base.split("dialogue").split(static_cast<std::uint64_t>(batch)).split(slot);
      DialogueGradStats s = accumulate_dialogue_gradients(
          model, d, w, latent ? cfg.word_drop_rate : 0.0, cfg.max_unroll, drng);
      recon_sum += s.reconstruction_sum;
      kl_sum += s.kl_sum;
      scored += s.scored_tokens;
      targets += s.target_utterances;
    }

    if (!std::isfinite(recon_sum) || !std::isfinite(kl_sum))
      throw std::runtime_error("training aborted at batch " + std::to_string(batch) +
                               ": non-finite loss (reconstruction=" + std::to_string(recon_sum) +
                               ", kl=" + std::to_string(kl_sum) + ")");

    // Mean-per-dialogue objective.
    const double inv = 1.0 / static_cast<double>(b.dialogue_indices.size());
    for (const NamedParam& p : params)
      for (double& g : const_cast<Tensor&>(p.value).grad()) g *= inv;

    const double pre_norm = clip_gradients(params, cfg.clip_threshold);
    adam_step(params, adam, cfg.learning_rate);

    BatchLogRow row;
    row.batch = batch;
    row.reconstruction = recon_sum / static_cast<double>(scored);
    row.kl = targets > 0 && latent ? kl_sum / static_cast<double>(targets) : 0.0;
    row.bound = (-recon_sum - w * kl_sum) / static_cast<double>(scored);
    row.kl_weight = latent ? w : 1.0;
    row.grad_norm = pre_norm;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.rows.push_back(row);
    if (on_row) on_row(row);
    ++early.batches_since_improvement;
    result.batches_run = batch + 1;

    if ((batch + 1) % cfg.validate_every == 0) {
      ValidationResult v = validate(model, valid_corpus, 1.0, 10,
                                    Rng(cfg.seed).split("valid-mc").split(batch).key());
      const bool improved = early.observe(v.bound_per_token, cfg.patience);
      if (improved) {
        result.best_checkpoint = checkpoint_to_string(
            model, Rng(cfg.seed).split("checkpoint").split(batch));
        result.best_batch = batch;
        result.best_bound = v.bound_per_token;
      }
      ValidationEvent ev;
      ev.batch = batch;
      ev.bound_per_token = v.bound_per_token;
      ev.bound_per_utterance = v.bound_per_utterance;
      ev.mc_bound_per_token = v.mc_bound_per_token;
      ev.improved = improved;
      result.log.validations.push_back(ev);
      if (early.stopped) {
        result.stopped_early = true;
        break;
      }
    }
  }

  if (result.best_checkpoint.empty()) {
    // Run ended before the first validation round; score the final model so
    // the best checkpoint is meaningful.
    ValidationResult v = validate(model, valid_corpus, 1.0, 10,
                                  Rng(cfg.seed).split("valid-mc").split(result.batches_run).key());
    result.best_checkpoint =
        checkpoint_to_string(model, Rng(cfg.seed).split("checkpoint").split(result.batches_run));
    result.best_batch = result.batches_run - 1;
    result.best_bound = v.bound_per_token;
  }
  return result;
}

}  // namespace dialogen
