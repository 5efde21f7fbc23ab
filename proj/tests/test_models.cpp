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

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dialogen/latent.hpp"
#include "dialogen/model.hpp"
#include "helpers.hpp"

using namespace dialogen;
using namespace dialogen::test;

TEST_SUITE_BEGIN("models");

TEST_CASE("rnnlm: uniform predictions under a zero-parameter model") {
  Vocabulary vocab;  // reserved tokens only, V = 4
  Rng rng(1);
  ModelBundle m = build_model(tiny_config(ModelKind::Rnnlm, 4), vocab, rng);
  zero_all_params(m);

  std::vector<int> tokens{2, 3, 2, 3, 2, 3};  // 5 scored tokens
  Tape tape(false);
  RnnlmScore s = rnnlm_nll(tape, m, tokens);
  CHECK(s.scored == 5);
  CHECK(s.nll.item() == doctest::Approx(5.0 * std::log(4.0)).epsilon(1e-14));
  CHECK(s.per_token.size() == 5);

  CHECK_THROWS_AS(rnnlm_nll(tape, m, std::vector<int>{2}), std::invalid_argument);
  CHECK_THROWS_AS(rnnlm_nll(tape, m, std::vector<int>{2, 9}), std::out_of_range);
}

TEST_CASE("rnnlm: probabilities never exceed one") {
  Vocabulary vocab = make_vocab(3);
  Rng rng(4);
  ModelBundle m = build_model(tiny_config(ModelKind::Rnnlm, vocab.size()), vocab, rng);
  Rng drng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Dialogue d = random_dialogue(drng, vocab.size(), 2);
    Tape tape(false);
    RnnlmScore s = rnnlm_nll(tape, m, flatten_dialogue(d));
    CHECK(std::exp(-s.nll.item()) <= 1.0 + 1e-12);
    CHECK(s.nll.item() >= 0.0);
  }
}

TEST_CASE("rnnlm: hand-set weights match a long-double chain-rule oracle") {
  Vocabulary vocab = make_vocab(2);  // V = 6, content ids 4 and 5
  ModelConfig cfg = tiny_config(ModelKind::Rnnlm, vocab.size(), /*hidden=*/2, 0, /*emb=*/2);
  Rng rng(2);
  ModelBundle m = build_model(cfg, vocab, rng);

  // Small hand-set values: embedding rows i -> (0.1*i, -0.05*i), GRU weights
  // banded, output projection alternating.
  for (int r = 0; r < 6; ++r) {
    m.embedding.values()[static_cast<std::size_t>(r) * 2] = 0.1 * r;
    m.embedding.values()[static_cast<std::size_t>(r) * 2 + 1] = -0.05 * r;
  }
  auto band = [](Tensor t, double base) {
    for (int r = 0; r < t.rows(); ++r)
      for (int c = 0; c < t.cols(); ++c)
        t.values()[static_cast<std::size_t>(r) * t.cols() + c] = base * (r == c ? 1.0 : 0.5);
  };
  band(m.decoder.gru.w_update, 0.3);
  band(m.decoder.gru.u_update, -0.2);
  band(m.decoder.gru.w_reset, 0.1);
  band(m.decoder.gru.u_reset, 0.4);
  band(m.decoder.gru.w_cand, -0.5);
  band(m.decoder.gru.u_cand, 0.25);
  for (Tensor b : {m.decoder.gru.b_update, m.decoder.gru.b_reset, m.decoder.gru.b_cand})
    for (double& v : b.values()) v = 0.05;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 2; ++c)
      m.out_w.values()[static_cast<std::size_t>(r) * 2 + c] = ((r + c) % 2 ? -0.2 : 0.3);
  for (double& v : m.out_b.values()) v = 0.01;

  const std::vector<int> tokens{Vocabulary::kSou, 4, 5, 4, Vocabulary::kEou};

  // Oracle: the same equations evaluated in long double.
  auto sigl = [](long double x) { return 1.0L / (1.0L + expl(-x)); };
  long double h[2] = {0.0L, 0.0L};
  long double nll = 0.0L;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const int tok = tokens[t - 1];
    long double x[2] = {0.1L * tok, -0.05L * tok};
    auto gate = [&](long double base_w, long double base_u, long double bias, int i,
                    const long double hh[2]) {
      long double wx = base_w * (x[i] + 0.5L * x[1 - i]);
      long double uh = base_u * (hh[i] + 0.5L * hh[1 - i]);
      return wx + uh + bias;
    };
    long double z[2], r[2], cand[2], hn[2];
    for (int i = 0; i < 2; ++i) z[i] = sigl(gate(0.3L, -0.2L, 0.05L, i, h));
    for (int i = 0; i < 2; ++i) r[i] = sigl(gate(0.1L, 0.4L, 0.05L, i, h));
    long double rh[2] = {r[0] * h[0], r[1] * h[1]};
    for (int i = 0; i < 2; ++i) cand[i] = tanhl(gate(-0.5L, 0.25L, 0.05L, i, rh));
    for (int i = 0; i < 2; ++i) hn[i] = z[i] * h[i] + (1.0L - z[i]) * cand[i];
    h[0] = hn[0];
    h[1] = hn[1];

    long double logits[6], mx = -1e30L;
    for (int vtok = 0; vtok < 6; ++vtok) {
      long double l = 0.01L;
      for (int c = 0; c < 2; ++c) l += ((vtok + c) % 2 ? -0.2L : 0.3L) * h[c];
      logits[vtok] = l;
      if (l > mx) mx = l;
    }
    long double zsum = 0.0L;
    for (int vtok = 0; vtok < 6; ++vtok) zsum += expl(logits[vtok] - mx);
    nll += logl(zsum) + mx - logits[tokens[t]];
  }

  Tape tape(false);
  RnnlmScore s = rnnlm_nll(tape, m, tokens);
  CHECK(s.nll.item() == doctest::Approx(static_cast<double>(nll)).epsilon(1e-13));
}

TEST_CASE("hred: uniform target NLL under a zero-parameter model") {
  Vocabulary vocab = make_vocab(2);
  Rng rng(3);
  ModelBundle m = build_model(tiny_config(ModelKind::Hred, vocab.size()), vocab, rng);
  zero_all_params(m);

  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 4, 3}};  // target has 3 scored tokens
  Tape tape(false);
  HredScore s = hred_forward(tape, m, d);
  CHECK(s.scored == 3);
  CHECK(s.total.item() == doctest::Approx(3.0 * std::log(6.0)).epsilon(1e-13));

  Dialogue single;
  single.utterances = {{2, 4, 3}};
  CHECK_THROWS_AS(hred_forward(tape, m, single), std::invalid_argument);
  Dialogue empty_utt;
  empty_utt.utterances = {{2, 3}, {2}};
  CHECK_THROWS_AS(hred_forward(tape, m, empty_utt), std::invalid_argument);
}

TEST_CASE("hred: permuting context changes the score of a nontrivial model") {
  Vocabulary vocab = make_vocab(4);
  Rng rng(9);
  ModelBundle m = build_model(tiny_config(ModelKind::Hred, vocab.size(), 6), vocab, rng);

  Dialogue d;
  d.utterances = {{2, 4, 5, 3}, {2, 6, 3}, {2, 7, 7, 3}};
  Dialogue swapped = d;
  std::swap(swapped.utterances[0], swapped.utterances[1]);

  Tape tape(false);
  const double a = hred_forward(tape, m, d).total.item();
  const double b = hred_forward(tape, m, swapped).total.item();
  CHECK(a != b);
}

TEST_CASE("hred: equals a manual per-utterance rollout") {
  Vocabulary vocab = make_vocab(3);
  Rng rng(12);
  ModelBundle m = build_model(tiny_config(ModelKind::Hred, vocab.size(), 5), vocab, rng);

  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 6, 3}, {2, 6, 3}};

  Tape tape(false);
  HredScore s = hred_forward(tape, m, d);
  CHECK(s.per_utterance.size() == 2);

  // Manual rollout from the public primitives.
  Tape manual(false);
  auto embed = [&](std::span<const int> utt) {
    std::vector<Tensor> inputs;
    for (int tok : utt) inputs.push_back(manual.row(m.embedding, tok));
    return inputs;
  };
  Tensor ctx_state = m.context.zero_state();
  double total = 0.0;
  for (std::size_t n = 0; n + 1 < d.utterances.size(); ++n) {
    auto inputs = embed(d.utterances[n]);
    EncoderOutput enc = encode_sequence(manual, m.encoder_fwd, inputs);
    ctx_state = m.context.step(manual, ctx_state, enc.final);
    Tensor ctx_out = m.context.output_of(manual, ctx_state);
    DecodeSpan span = decode_utterance_span(
        manual, m, d.utterances[n + 1], &ctx_out, nullptr, nullptr, m.decoder.zero_state(), 1,
        static_cast<int>(d.utterances[n + 1].size()) - 1);
    CHECK(span.nll.item() ==
          doctest::Approx(s.per_utterance[n].item()).epsilon(1e-14));
    total += span.nll.item();
  }
  CHECK(total == doctest::Approx(s.total.item()).epsilon(1e-14));
}

namespace {

ModelBundle make_vhred(int vocab_words, int hidden, int d_z, std::uint64_t seed) {
  Vocabulary vocab = make_vocab(vocab_words);
  Rng rng(seed);
  return build_model(tiny_config(ModelKind::Vhred, vocab.size(), hidden, d_z), vocab, rng);
}

}  // namespace

TEST_CASE("vhred elbo: kl_weight 0 reduces to the reconstruction objective") {
  ModelBundle m = make_vhred(3, 4, 2, 21);
  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 6, 3}};

  Tape tape(false);
  VhredElbo e = vhred_elbo(tape, m, d, 0.0, {}, {});
  double recon = 0.0;
  for (double r : e.breakdown.reconstruction) recon += r;
  CHECK(e.objective.item() == doctest::Approx(recon).epsilon(1e-14));
  CHECK(e.breakdown.bound == doctest::Approx(-recon).epsilon(1e-14));
  for (double k : e.breakdown.kl) CHECK(k >= 0.0);

  CHECK_THROWS_AS(vhred_elbo(tape, m, d, 1.5, {}, {}), std::invalid_argument);
  CHECK_THROWS_AS(vhred_elbo(tape, m, d, -0.1, {}, {}), std::invalid_argument);
}

TEST_CASE("vhred elbo: kl vanishes when the posterior net mirrors the prior net") {
  ModelBundle m = make_vhred(3, 4, 2, 22);
  // Copy prior weights into the posterior and cut its encoder columns, so
  // both nets compute identical distributions from the context alone.
  const int ctx = m.config.context_size;
  const int post_in = m.posterior.input_size;
  for (int r = 0; r < m.posterior.l1_w.rows(); ++r)
    for (int c = 0; c < post_in; ++c)
      m.posterior.l1_w.values()[static_cast<std::size_t>(r) * post_in + c] =
          c < ctx ? m.prior.l1_w.at(r, c) : 0.0;
  for (auto [dst, src] :
       {std::pair{m.posterior.l1_b, m.prior.l1_b}, std::pair{m.posterior.l2_w, m.prior.l2_w},
        std::pair{m.posterior.l2_b, m.prior.l2_b}, std::pair{m.posterior.mu_w, m.prior.mu_w},
        std::pair{m.posterior.mu_b, m.prior.mu_b},
        std::pair{m.posterior.sigma_w, m.prior.sigma_w},
        std::pair{m.posterior.sigma_b, m.prior.sigma_b}}) {
    std::copy(src.values().begin(), src.values().end(), dst.values().begin());
  }

  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 6, 3}, {2, 6, 3}};
  Tape tape(false);
  VhredElbo e = vhred_elbo(tape, m, d, 1.0, {}, {});
  for (double k : e.breakdown.kl) CHECK(k == 0.0);
}

TEST_CASE("vhred with zeroed latent weights reproduces hred exactly") {
  Vocabulary vocab = make_vocab(4);
  Rng rng(31);
  ModelBundle hred = build_model(tiny_config(ModelKind::Hred, vocab.size(), 5), vocab, rng);
  Rng vrng(32);
  ModelBundle vhred = vhred_from_hred(hred, 3, vrng);

  Rng drng(33);
  for (int trial = 0; trial < 5; ++trial) {
    Dialogue d = random_dialogue(drng, vocab.size(), 2 + static_cast<int>(drng.below(3)));
    Tape t1(false), t2(false);
    HredScore hs = hred_forward(t1, hred, d);
    VhredElbo ve = vhred_elbo(t2, vhred, d, 1.0, {}, {});
    REQUIRE(hs.per_utterance.size() == ve.breakdown.reconstruction.size());
    for (std::size_t i = 0; i < hs.per_utterance.size(); ++i)
      CHECK(std::abs(hs.per_utterance[i].item() - ve.breakdown.reconstruction[i]) < 1e-9);
  }
}

TEST_CASE("vhred elbo gradients pass the finite-difference check") {
  // 2 utterances, hidden 4, d_z 2, vocab 6, frozen noise and masks.
  ModelBundle m = make_vhred(2, 4, 2, 41);
  Dialogue d;
  d.utterances = {{2, 4, 5, 3}, {2, 5, 4, 5, 3}};

  std::vector<std::vector<double>> noise{{0.37, -1.2}};
  std::vector<std::vector<bool>> masks{{false, true, false, false}};

  auto f = [&](Tape& t) { return vhred_elbo(t, m, d, 1.0, noise, masks).objective; };
  std::vector<Tensor> params;
  for (const NamedParam& p : m.parameters()) params.push_back(p.value);
  CHECK(grad_check(f, params, 1e-4) < 1e-4);
}

TEST_CASE("shifting the posterior mean off the prior raises kl and lowers the bound") {
  ModelBundle m = make_vhred(3, 4, 2, 99);
  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 6, 3}};
  auto ctxs = dialogue_contexts(m, d);
  DiagGaussian prior = prior_of(ctxs[0].ctx_out, m.prior);
  DiagGaussian post = posterior_of(ctxs[0].ctx_out, ctxs[0].target_encoding, m.posterior);

  // Hold z fixed so the reconstruction term is unchanged: the bound moves
  // only through the kl term.
  const std::vector<double> z = post.mean;
  const double recon = decoder_nll_plain(m, d.utterances[1], ctxs[0].ctx_out, z);
  const double kl_before = gaussian_kl(post, prior);

  DiagGaussian shifted = post;
  for (std::size_t i = 0; i < shifted.mean.size(); ++i)
    shifted.mean[i] += shifted.mean[i] >= prior.mean[i] ? 0.5 : -0.5;
  const double kl_after = gaussian_kl(shifted, prior);
  CHECK(kl_after > kl_before);

  const double recon_arr[] = {recon};
  const double kl_b[] = {kl_before};
  const double kl_a[] = {kl_after};
  CHECK(combine_bound(recon_arr, kl_a, 1.0) < combine_bound(recon_arr, kl_b, 1.0));
}

TEST_CASE("combine_bound is monotone: larger kl lowers the bound") {
  std::vector<double> recon{2.0, 3.0};
  std::vector<double> kl{0.5, 0.25};
  const double base = combine_bound(recon, kl, 1.0);
  for (std::size_t i = 0; i < kl.size(); ++i) {
    auto bumped = kl;
    bumped[i] += 0.1;
    CHECK(combine_bound(recon, bumped, 1.0) < base);
  }
  CHECK(combine_bound(recon, kl, 0.0) == doctest::Approx(-5.0));
}

TEST_CASE("word dropout changes the reconstruction but not the kl") {
  ModelBundle m = make_vhred(4, 4, 2, 55);
  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 6, 7, 3}};
  std::vector<std::vector<double>> noise{{0.1, 0.2}};
  std::vector<std::vector<bool>> keep{{false, false, false, false}};
  std::vector<std::vector<bool>> drop{{false, true, true, false}};

  Tape t1(false), t2(false);
  VhredElbo a = vhred_elbo(t1, m, d, 1.0, noise, keep);
  VhredElbo b = vhred_elbo(t2, m, d, 1.0, noise, drop);
  CHECK(a.breakdown.reconstruction[0] != b.breakdown.reconstruction[0]);
  CHECK(a.breakdown.kl[0] == b.breakdown.kl[0]);
}

TEST_CASE("reparameterized z responds to the supplied noise") {
  ModelBundle m = make_vhred(3, 4, 2, 60);
  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 3}};
  Tape t1(false), t2(false);
  VhredElbo a = vhred_elbo(t1, m, d, 1.0, std::vector<std::vector<double>>{{0.0, 0.0}}, {});
  VhredElbo b = vhred_elbo(t2, m, d, 1.0, std::vector<std::vector<double>>{{2.0, -2.0}}, {});
  CHECK(a.breakdown.reconstruction[0] != b.breakdown.reconstruction[0]);
  CHECK(a.breakdown.kl[0] == b.breakdown.kl[0]);  // kl is analytic, not sampled
}

TEST_CASE("dialogue_contexts matches the graph forward") {
  ModelBundle m = make_vhred(3, 4, 2, 71);
  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 3}, {2, 4, 5, 3}};
  auto ctxs = dialogue_contexts(m, d);
  REQUIRE(ctxs.size() == 2);

  // The deterministic ELBO recomputed from plain conditioning values agrees
  // with the graph ELBO.
  Tape tape(false);
  VhredElbo e = vhred_elbo(tape, m, d, 1.0, {}, {});
  for (std::size_t n = 0; n < ctxs.size(); ++n) {
    DiagGaussian post = posterior_of(ctxs[n].ctx_out, ctxs[n].target_encoding, m.posterior);
    const double recon =
        decoder_nll_plain(m, d.utterances[n + 1], ctxs[n].ctx_out, post.mean);
    CHECK(recon == doctest::Approx(e.breakdown.reconstruction[n]).epsilon(1e-12));
    DiagGaussian prior = prior_of(ctxs[n].ctx_out, m.prior);
    CHECK(gaussian_kl(post, prior) == doctest::Approx(e.breakdown.kl[n]).epsilon(1e-12));
  }
}

TEST_CASE("elemprod gating model scores and differentiates") {
  Vocabulary vocab = make_vocab(2);
  ModelConfig cfg = tiny_config(ModelKind::Hred, vocab.size(), 3);
  cfg.gating = GatingKind::ElemProd;
  cfg.bidirectional_encoder = true;
  cfg.carry_encoder_state = true;
  Rng rng(81);
  ModelBundle m = build_model(cfg, vocab, rng);

  Dialogue d;
  d.utterances = {{2, 4, 3}, {2, 5, 3}, {2, 4, 3}};
  auto f = [&](Tape& t) { return hred_forward(t, m, d).total; };
  std::vector<Tensor> params;
  for (const NamedParam& p : m.parameters()) params.push_back(p.value);
  CHECK(grad_check(f, params, 1e-4) < 1e-4);
}

TEST_SUITE_END();
