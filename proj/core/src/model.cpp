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

#include "dialogen/model.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace dialogen {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "rnnlm") return ModelKind::Rnnlm;
  if (s == "hred") return ModelKind::Hred;
  if (s == "vhred") return ModelKind::Vhred;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected rnnlm, hred or vhred)");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Rnnlm: return "rnnlm";
    case ModelKind::Hred: return "hred";
    case ModelKind::Vhred: return "vhred";
  }
  return "?";
}

GatingKind gating_kind_from_string(const std::string& s) {
  if (s == "dense") return GatingKind::Dense;
  if (s == "elemprod") return GatingKind::ElemProd;
  throw std::invalid_argument("unknown gating kind '" + s + "' (expected dense or elemprod)");
}

std::string to_string(GatingKind k) { return k == GatingKind::Dense ? "dense" : "elemprod"; }

int ModelConfig::decoder_input_size() const {
  if (kind == ModelKind::Rnnlm) return embedding_size;
  int n = embedding_size + gate_size;
  if (kind == ModelKind::Vhred) n += latent_size;
  return n;
}

void ModelConfig::validate() const {
  if (vocab_size < Vocabulary::kReserved)
    throw std::invalid_argument("vocab_size must cover the reserved tokens");
  if (embedding_size < 1 || decoder_size < 1)
    throw std::invalid_argument("embedding and decoder sizes must be positive");
  if (kind != ModelKind::Rnnlm) {
    if (encoder_size < 1 || context_size < 1 || gate_size < 1)
      throw std::invalid_argument("encoder, context and gate sizes must be positive");
  }
  if (kind == ModelKind::Vhred && latent_size < 1)
    throw std::invalid_argument("VHRED requires latent_size >= 1");
  if (covariance_scale <= 0.0)
    throw std::invalid_argument("covariance_scale must be positive");
}

void GatingParams::append_params(std::vector<NamedParam>& out, const std::string& prefix) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
  if (kind == GatingKind::ElemProd) {
    out.push_back({prefix + ".m", m});
    out.push_back({prefix + ".m_b", m_b});
  }
}

std::vector<NamedParam> ModelBundle::parameters() const {
  std::vector<NamedParam> out;
  out.push_back({"embedding", embedding});
  if (config.kind != ModelKind::Rnnlm) {
    encoder_fwd.append_params(out, "encoder_fwd");
    if (config.bidirectional_encoder) encoder_bwd.append_params(out, "encoder_bwd");
    context.append_params(out, "context");
  }
  decoder.append_params(out, "decoder");
  if (config.kind != ModelKind::Rnnlm) gate.append_params(out, "gate");
  out.push_back({"out_w", out_w});
  out.push_back({"out_b", out_b});
  if (config.kind == ModelKind::Vhred) {
    prior.append_params(out, "prior");
    posterior.append_params(out, "posterior");
  }
  return out;
}

void ModelBundle::zero_grads() const {
  for (const NamedParam& p : parameters()) const_cast<Tensor&>(p.value).zero_grad();
}

ModelBundle build_model(const ModelConfig& config, const Vocabulary& vocab, Rng& rng) {
  ModelConfig cfg = config;
  cfg.vocab_size = vocab.size();
  cfg.validate();

  ModelBundle m;
  m.config = cfg;
  m.vocab = vocab;

  Rng r_emb = rng.split("embedding");
  m.embedding = Tensor::zeros({cfg.vocab_size, cfg.embedding_size}, true);
  glorot_fill(m.embedding, r_emb, cfg.embedding_size, cfg.vocab_size);

  if (cfg.kind != ModelKind::Rnnlm) {
    Rng r_enc = rng.split("encoder_fwd");
    m.encoder_fwd = init_cell(cfg.encoder_cell, r_enc, cfg.embedding_size, cfg.encoder_size);
    if (cfg.bidirectional_encoder) {
      Rng r_bwd = rng.split("encoder_bwd");
      m.encoder_bwd = init_cell(cfg.encoder_cell, r_bwd, cfg.embedding_size, cfg.encoder_size);
    }
    Rng r_ctx = rng.split("context");
    m.context = init_cell(cfg.context_cell, r_ctx, cfg.encoder_output_size(), cfg.context_size);

    Rng r_gate = rng.split("gate");
    m.gate.kind = cfg.gating;
    m.gate.w = Tensor::zeros({cfg.gate_size, cfg.context_size}, true);
    glorot_fill(m.gate.w, r_gate, cfg.context_size, cfg.gate_size);
    m.gate.b = Tensor::zeros({cfg.gate_size}, true);
    if (cfg.gating == GatingKind::ElemProd) {
      m.gate.m = Tensor::zeros({cfg.context_size, cfg.decoder_size}, true);
      glorot_fill(m.gate.m, r_gate, cfg.decoder_size, cfg.context_size);
      m.gate.m_b = Tensor::zeros({cfg.context_size}, true);
    }
  }

  Rng r_dec = rng.split("decoder");
  m.decoder = init_cell(cfg.decoder_cell, r_dec, cfg.decoder_input_size(), cfg.decoder_size);

  Rng r_out = rng.split("output");
  m.out_w = Tensor::zeros({cfg.vocab_size, cfg.decoder_size}, true);
  glorot_fill(m.out_w, r_out, cfg.decoder_size, cfg.vocab_size);
  m.out_b = Tensor::zeros({cfg.vocab_size}, true);

  if (cfg.kind == ModelKind::Vhred) {
    Rng r_prior = rng.split("prior");
    m.prior = init_latent_net(r_prior, cfg.context_size, cfg.latent_size, cfg.covariance_scale,
                              true);
    Rng r_post = rng.split("posterior");
    m.posterior = init_latent_net(r_post, cfg.context_size + cfg.encoder_output_size(),
                                  cfg.latent_size, cfg.covariance_scale, cfg.posterior_two_layer);
  }
  return m;
}

std::vector<int> flatten_dialogue(const Dialogue& d) {
  std::vector<int> out;
  for (const auto& u : d.utterances) out.insert(out.end(), u.begin(), u.end());
  return out;
}

namespace {

void check_token_range(const ModelBundle& m, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 0 || t >= m.config.vocab_size)
      throw std::out_of_range("token id " + std::to_string(t) +
                              " out of vocabulary (size " +
                              std::to_string(m.config.vocab_size) + ")");
}

std::vector<Tensor> embed_tokens(Tape& tape, const ModelBundle& m, std::span<const int> tokens) {
  std::vector<Tensor> out;
  out.reserve(tokens.size());
  for (int t : tokens) out.push_back(tape.row(m.embedding, t));
  return out;
}

EncoderOutput run_encoder(Tape& tape, const ModelBundle& m, std::span<const int> utterance,
                          const std::vector<Tensor>* carried_states) {
  std::vector<Tensor> inputs = embed_tokens(tape, m, utterance);
  if (m.config.bidirectional_encoder) {
    std::optional<Tensor> f, b;
    if (carried_states) {
      f = (*carried_states)[0];
      b = (*carried_states)[1];
    }
    return encode_bidirectional(tape, m.encoder_fwd, m.encoder_bwd, inputs, f, b);
  }
  std::optional<Tensor> init;
  if (carried_states) init = (*carried_states)[0];
  return encode_sequence(tape, m.encoder_fwd, inputs, init);
}

/// Encode the first `count` utterances along one encoder chain. With state
/// carry-over enabled each utterance starts from the previous utterance's
/// final encoder state, so a given utterance has a single encoding that
/// serves both as context input and as the posterior's target summary.
std::vector<EncoderOutput> encode_utterances(Tape& tape, const ModelBundle& m, const Dialogue& d,
                                             std::size_t count) {
  std::vector<EncoderOutput> encs;
  encs.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::vector<Tensor>* carried =
        m.config.carry_encoder_state && n > 0 ? &encs[n - 1].final_states : nullptr;
    encs.push_back(run_encoder(tape, m, d.utterances[n], carried));
  }
  return encs;
}

Tensor gate_vector(Tape& tape, const ModelBundle& m, const Tensor& ctx_out,
                   const Tensor& dec_hidden_prev) {
  if (m.gate.kind == GatingKind::Dense)
    return tape.tanh(tape.add(tape.matmul(m.gate.w, ctx_out), m.gate.b));
  Tensor probe = tape.add(tape.matmul(m.gate.m, dec_hidden_prev), m.gate.m_b);
  return tape.tanh(tape.add(tape.matmul(m.gate.w, tape.mul(probe, ctx_out)), m.gate.b));
}

struct DecodedUtterance {
  Tensor nll;
  int scored = 0;
};

/// Teacher-forced decoder pass over one whole utterance.
DecodedUtterance decode_utterance(Tape& tape, const ModelBundle& m,
                                  std::span<const int> utterance, const Tensor* ctx_out,
                                  const Tensor* z, const std::vector<bool>* drop_mask) {
  if (utterance.size() < 2)
    throw std::invalid_argument("decoder needs an utterance with at least one scored token");
  DecodeSpan span = decode_utterance_span(tape, m, utterance, ctx_out, z, drop_mask,
                                          m.decoder.zero_state(), 1,
                                          static_cast<int>(utterance.size()) - 1);
  return {span.nll, span.scored};
}

}  // namespace

DecodeSpan decode_utterance_span(Tape& tape, const ModelBundle& m,
                                 std::span<const int> utterance, const Tensor* ctx_out,
                                 const Tensor* z, const std::vector<bool>* drop_mask,
                                 const Tensor& state_in, int start_pos, int max_steps) {
  if (start_pos < 1 || start_pos >= static_cast<int>(utterance.size()))
    throw std::invalid_argument("decode span start position out of range");
  if (max_steps < 1) throw std::invalid_argument("decode span needs at least one step");
  if (drop_mask && drop_mask->size() + 1 != utterance.size())
    throw std::invalid_argument("drop mask length does not match utterance");

  const int end = std::min(static_cast<int>(utterance.size()), start_pos + max_steps);
  Tensor state = state_in;
  Tensor dense_gate;  // fixed per utterance when the gate ignores the decoder state

  DecodeSpan out;
  for (int t = start_pos; t < end; ++t) {
    const bool dropped = drop_mask && (*drop_mask)[static_cast<std::size_t>(t - 1)];
    Tensor emb = tape.row(m.embedding,
                          dropped ? Vocabulary::kUnk : utterance[static_cast<std::size_t>(t - 1)]);
    Tensor input = emb;
    if (ctx_out) {
      Tensor g;
      if (m.gate.kind == GatingKind::Dense) {
        if (!dense_gate.defined()) dense_gate = gate_vector(tape, m, *ctx_out, Tensor());
        g = dense_gate;
      } else {
        g = gate_vector(tape, m, *ctx_out, m.decoder.output_of(tape, state));
      }
      input = z ? tape.concat(emb, g, *z) : tape.concat(emb, g);
    }
    state = m.decoder.step(tape, state, input);
    Tensor logits = tape.add(tape.matmul(m.out_w, m.decoder.output_of(tape, state)), m.out_b);
    Tensor term = tape.softmax_xent(logits, utterance[static_cast<std::size_t>(t)]);
    out.nll = out.nll.defined() ? tape.add(out.nll, term) : term;
    ++out.scored;
  }
  out.state = state;
  out.next_pos = end;
  return out;
}

RnnlmScore rnnlm_nll(Tape& tape, const ModelBundle& m, std::span<const int> tokens) {
  if (m.config.kind != ModelKind::Rnnlm)
    throw std::invalid_argument("rnnlm_nll requires an RNNLM bundle");
  if (tokens.size() < 2)
    throw std::invalid_argument("rnnlm_nll needs a sequence of at least two tokens");
  check_token_range(m, tokens);

  RnnlmScore score;
  Tensor state = m.decoder.zero_state();
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    Tensor emb = tape.row(m.embedding, tokens[t - 1]);
    state = m.decoder.step(tape, state, emb);
    Tensor logits = tape.add(tape.matmul(m.out_w, m.decoder.output_of(tape, state)), m.out_b);
    Tensor term = tape.softmax_xent(logits, tokens[t]);
    score.per_token.push_back(term.item());
    score.nll = score.nll.defined() ? tape.add(score.nll, term) : term;
  }
  score.scored = static_cast<int>(tokens.size()) - 1;
  return score;
}

HredScore hred_forward(Tape& tape, const ModelBundle& m, const Dialogue& d) {
  if (m.config.kind == ModelKind::Rnnlm)
    throw std::invalid_argument("hred_forward requires an HRED or VHRED bundle");
  if (d.utterances.size() < 2)
    throw std::invalid_argument("hred_forward needs at least two utterances");
  for (const auto& u : d.utterances) {
    if (u.size() < 2) throw std::invalid_argument("hred_forward: empty utterance");
    check_token_range(m, u);
  }

  HredScore score;
  std::vector<EncoderOutput> encs = encode_utterances(tape, m, d, d.utterances.size() - 1);
  Tensor ctx_state = m.context.zero_state();
  for (std::size_t n = 0; n + 1 < d.utterances.size(); ++n) {
    ctx_state = m.context.step(tape, ctx_state, encs[n].final);
    Tensor ctx_out = m.context.output_of(tape, ctx_state);

    DecodedUtterance dec = decode_utterance(tape, m, d.utterances[n + 1], &ctx_out,
                                            nullptr, nullptr);
    score.per_utterance.push_back(dec.nll);
    score.scored += dec.scored;
    score.total = score.total.defined() ? tape.add(score.total, dec.nll) : dec.nll;
  }
  return score;
}

double combine_bound(std::span<const double> reconstruction, std::span<const double> kl,
                     double kl_weight) {
  double bound = 0.0;
  for (std::size_t i = 0; i < reconstruction.size(); ++i)
    bound += -reconstruction[i] - kl_weight * kl[i];
  return bound;
}

VhredElbo vhred_elbo(Tape& tape, const ModelBundle& m, const Dialogue& d, double kl_weight,
                     std::span<const std::vector<double>> noise,
                     std::span<const std::vector<bool>> drop_masks) {
  if (m.config.kind != ModelKind::Vhred)
    throw std::invalid_argument("vhred_elbo requires a VHRED bundle");
  if (kl_weight < 0.0 || kl_weight > 1.0)
    throw std::invalid_argument("kl_weight must lie in [0, 1]");
  if (d.utterances.size() < 2)
    throw std::invalid_argument("vhred_elbo needs at least two utterances");
  const std::size_t targets = d.utterances.size() - 1;
  if (!noise.empty() && noise.size() != targets)
    throw std::invalid_argument("vhred_elbo expects one noise vector per target utterance");
  if (!drop_masks.empty() && drop_masks.size() != targets)
    throw std::invalid_argument("vhred_elbo expects one drop mask per target utterance");
  for (const auto& u : d.utterances) {
    if (u.size() < 2) throw std::invalid_argument("vhred_elbo: empty utterance");
    check_token_range(m, u);
  }

  VhredElbo out;
  out.breakdown.kl_weight = kl_weight;
  const int d_z = m.config.latent_size;

  std::vector<EncoderOutput> encs = encode_utterances(tape, m, d, d.utterances.size());
  Tensor ctx_state = m.context.zero_state();
  for (std::size_t n = 0; n < targets; ++n) {
    ctx_state = m.context.step(tape, ctx_state, encs[n].final);
    Tensor ctx_out = m.context.output_of(tape, ctx_state);

    GaussianNodes prior_g = m.prior.forward(tape, ctx_out);
    GaussianNodes post_g = m.posterior.forward(tape, tape.concat(ctx_out, encs[n + 1].final));

    Tensor eps = noise.empty() ? Tensor::zeros({d_z}) : Tensor::vec(noise[n]);
    if (eps.size() != d_z)
      throw std::invalid_argument("vhred_elbo noise vector has length " +
                                  std::to_string(eps.size()) + ", expected " +
                                  std::to_string(d_z));
    Tensor z = reparam_sample_node(tape, post_g, eps);
    Tensor kl = gaussian_kl_node(tape, post_g, prior_g);

    const std::vector<bool>* mask = drop_masks.empty() ? nullptr : &drop_masks[n];
    if (mask && mask->size() + 1 != d.utterances[n + 1].size())
      throw std::invalid_argument("vhred_elbo drop mask length does not match utterance");
    DecodedUtterance dec = decode_utterance(tape, m, d.utterances[n + 1], &ctx_out, &z, mask);

    out.breakdown.reconstruction.push_back(dec.nll.item());
    out.breakdown.kl.push_back(kl.item());
    out.scored += dec.scored;

    Tensor term = tape.add(dec.nll, tape.scale(kl, kl_weight));
    out.objective = out.objective.defined() ? tape.add(out.objective, term) : term;
  }
  out.breakdown.bound =
      combine_bound(out.breakdown.reconstruction, out.breakdown.kl, kl_weight);
  return out;
}

std::vector<UtteranceContext> dialogue_contexts(const ModelBundle& m, const Dialogue& d) {
  if (d.utterances.size() < 2)
    throw std::invalid_argument("dialogue_contexts needs at least two utterances");
  Tape tape(false);
  std::vector<UtteranceContext> out;
  std::vector<EncoderOutput> encs = encode_utterances(tape, m, d, d.utterances.size());
  Tensor ctx_state = m.context.zero_state();
  for (std::size_t n = 0; n + 1 < d.utterances.size(); ++n) {
    ctx_state = m.context.step(tape, ctx_state, encs[n].final);
    Tensor ctx_out = m.context.output_of(tape, ctx_state);
    out.push_back({{ctx_out.values().begin(), ctx_out.values().end()},
                   {encs[n + 1].final.values().begin(), encs[n + 1].final.values().end()}});
  }
  return out;
}

double decoder_nll_plain(const ModelBundle& m, std::span<const int> utterance,
                         std::span<const double> ctx_out, std::span<const double> z,
                         const std::vector<bool>* drop_mask) {
  Tape tape(false);
  Tensor ctx = Tensor::vec({ctx_out.begin(), ctx_out.end()});
  std::optional<Tensor> zt;
  if (!z.empty()) zt = Tensor::vec({z.begin(), z.end()});
  DecodedUtterance dec =
      decode_utterance(tape, m, utterance, &ctx, zt ? &*zt : nullptr, drop_mask);
  return dec.nll.item();
}

int copy_matching_params(ModelBundle& dst, const ModelBundle& src) {
  std::unordered_map<std::string, Tensor> by_name;
  for (const NamedParam& p : src.parameters()) by_name.emplace(p.name, p.value);
  int copied = 0;
  for (NamedParam& p : dst.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end() || it->second.shape() != p.value.shape()) continue;
    std::copy(it->second.values().begin(), it->second.values().end(), p.value.values().begin());
    ++copied;
  }
  return copied;
}

namespace {

/// Input-weight matrices of a cell, whose columns index the input vector.
std::vector<Tensor> cell_input_weights(RnnCell& cell) {
  if (cell.kind == CellKind::Gru)
    return {cell.gru.w_update, cell.gru.w_reset, cell.gru.w_cand};
  return {cell.lstm.w_input, cell.lstm.w_forget, cell.lstm.w_output, cell.lstm.w_cand};
}

}  // namespace

void zero_decoder_latent_weights(ModelBundle& vhred) {
  if (vhred.config.kind != ModelKind::Vhred)
    throw std::invalid_argument("zero_decoder_latent_weights requires a VHRED bundle");
  const int begin = vhred.config.embedding_size + vhred.config.gate_size;
  const int end = begin + vhred.config.latent_size;
  for (Tensor w : cell_input_weights(vhred.decoder)) {
    double* v = w.values().data();
    const int cols = w.cols();
    for (int r = 0; r < w.rows(); ++r)
      for (int c = begin; c < end; ++c) v[static_cast<std::size_t>(r) * cols + c] = 0.0;
  }
}

ModelBundle vhred_from_hred(const ModelBundle& hred, int latent_size, Rng& rng,
                            bool posterior_two_layer, double covariance_scale) {
  if (hred.config.kind != ModelKind::Hred)
    throw std::invalid_argument("vhred_from_hred requires an HRED source bundle");
  ModelConfig cfg = hred.config;
  cfg.kind = ModelKind::Vhred;
  cfg.latent_size = latent_size;
  cfg.posterior_two_layer = posterior_two_layer;
  cfg.covariance_scale = covariance_scale;
  ModelBundle vhred = build_model(cfg, hred.vocab, rng);

  // Names match for everything except the decoder input weights, whose
  // width grew by the latent block.
  copy_matching_params(vhred, hred);

  std::vector<Tensor> dst_w = cell_input_weights(vhred.decoder);
  std::vector<Tensor> src_w = cell_input_weights(const_cast<ModelBundle&>(hred).decoder);
  const int narrow = hred.config.decoder_input_size();
  for (std::size_t k = 0; k < dst_w.size(); ++k) {
    const int rows = dst_w[k].rows();
    const int wide = dst_w[k].cols();
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < narrow; ++c)
        dst_w[k].values()[static_cast<std::size_t>(r) * wide + c] =
            src_w[k].values()[static_cast<std::size_t>(r) * narrow + c];
      for (int c = narrow; c < wide; ++c)
        dst_w[k].values()[static_cast<std::size_t>(r) * wide + c] = 0.0;
    }
  }
  return vhred;
}

}  // namespace dialogen
