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
#include "dialogen/rng.hpp"

using namespace dialogen;

TEST_SUITE_BEGIN("latent");

namespace {

/// Independent evaluation of the prior/posterior network equations on
/// plain doubles (second implementation used as an oracle).
DiagGaussian latent_oracle(const LatentNet& net, const std::vector<double>& input) {
  auto matvec = [](const Tensor& w, const std::vector<double>& x) {
    std::vector<double> y(static_cast<std::size_t>(w.rows()), 0.0);
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c)
        y[static_cast<std::size_t>(r)] += w.at(r, c) * x[static_cast<std::size_t>(c)];
    return y;
  };
  std::vector<double> h = matvec(net.l1_w, input);
  for (std::size_t i = 0; i < h.size(); ++i)
    h[i] = std::tanh(h[i] + net.l1_b.at(static_cast<int>(i)));
  if (net.two_layer) {
    std::vector<double> h2 = matvec(net.l2_w, h);
    for (std::size_t i = 0; i < h2.size(); ++i)
      h2[i] = std::tanh(h2[i] + net.l2_b.at(static_cast<int>(i)));
    h = h2;
  }
  DiagGaussian g;
  auto mu = matvec(net.mu_w, h);
  auto sg = matvec(net.sigma_w, h);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    g.mean.push_back(mu[i] + net.mu_b.at(static_cast<int>(i)));
    const double pre = sg[i] + net.sigma_b.at(static_cast<int>(i));
    g.var.push_back(net.covariance_scale * std::log1p(std::exp(pre)));
  }
  return g;
}

}  // namespace

TEST_CASE("all-zero net gives zero mean and scaled softplus(0) variance") {
  Rng rng(1);
  LatentNet net = init_latent_net(rng, 4, 3, 0.1, true);
  for (Tensor t : {net.l1_w, net.l1_b, net.l2_w, net.l2_b, net.mu_w, net.mu_b, net.sigma_w,
                   net.sigma_b})
    for (double& v : t.values()) v = 0.0;

  DiagGaussian g = prior_of(std::vector<double>{0.5, -1.0, 2.0, 0.0}, net);
  for (double m : g.mean) CHECK(m == 0.0);
  for (double v : g.var) CHECK(v == doctest::Approx(0.1 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("variance is strictly positive for any parameters") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Rng r = rng.split(trial);
    LatentNet net = init_latent_net(r, 3, 2, 0.1, true);
    for (Tensor t : {net.sigma_w, net.sigma_b})
      for (double& v : t.values()) v = r.uniform(-50, 50);
    std::vector<double> input{r.uniform(-5, 5), r.uniform(-5, 5), r.uniform(-5, 5)};
    for (double v : prior_of(input, net).var) CHECK(v > 0.0);
  }
}

TEST_CASE("random net matches the independent equation oracle") {
  Rng rng(7);
  LatentNet net = init_latent_net(rng, 5, 3, 0.1, true);
  Rng vr(8);
  for (const NamedParam& p : [&] {
         std::vector<NamedParam> ps;
         net.append_params(ps, "net");
         return ps;
       }())
    for (double& v : const_cast<Tensor&>(p.value).values()) v = vr.uniform(-1.5, 1.5);

  std::vector<double> input{0.4, -0.9, 1.2, 0.0, -0.3};
  DiagGaussian got = net.forward_plain(input);
  DiagGaussian expected = latent_oracle(net, input);
  for (int i = 0; i < 3; ++i) {
    CHECK(got.mean[static_cast<std::size_t>(i)] ==
          doctest::Approx(expected.mean[static_cast<std::size_t>(i)]).epsilon(1e-12));
    CHECK(got.var[static_cast<std::size_t>(i)] ==
          doctest::Approx(expected.var[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }

  // Single-layer variant skips the second tanh layer.
  LatentNet one = net;
  one.two_layer = false;
  DiagGaussian got1 = one.forward_plain(input);
  DiagGaussian exp1 = latent_oracle(one, input);
  CHECK(got1.mean[0] == doctest::Approx(exp1.mean[0]).epsilon(1e-12));
}

TEST_CASE("posterior depends on the next utterance and collapses when blocked") {
  Rng rng(10);
  LatentNet net = init_latent_net(rng, 6, 2, 0.1, true);
  Rng vr(11);
  {
    std::vector<NamedParam> ps;
    net.append_params(ps, "net");
    for (const NamedParam& p : ps)
      for (double& v : const_cast<Tensor&>(p.value).values()) v = vr.uniform(-1, 1);
  }
  std::vector<double> ctx{0.2, -0.5, 0.9};
  std::vector<double> enc_a{1.0, 0.0, -1.0};
  std::vector<double> enc_b{-0.7, 0.3, 0.4};
  DiagGaussian qa = posterior_of(ctx, enc_a, net);
  DiagGaussian qb = posterior_of(ctx, enc_b, net);
  bool any_diff = false;
  for (std::size_t i = 0; i < qa.mean.size(); ++i)
    if (qa.mean[i] != qb.mean[i]) any_diff = true;
  CHECK(any_diff);

  // Zero the columns that read the encoding: the posterior ignores it.
  for (int r = 0; r < net.l1_w.rows(); ++r)
    for (int c = 3; c < 6; ++c)
      net.l1_w.values()[static_cast<std::size_t>(r) * 6 + c] = 0.0;
  DiagGaussian qa2 = posterior_of(ctx, enc_a, net);
  DiagGaussian qb2 = posterior_of(ctx, enc_b, net);
  for (std::size_t i = 0; i < qa2.mean.size(); ++i) {
    CHECK(qa2.mean[i] == qb2.mean[i]);
    CHECK(qa2.var[i] == qb2.var[i]);
  }
}

TEST_CASE("gaussian_kl closed-form cases") {
  DiagGaussian p{{0.0}, {1.0}};
  DiagGaussian q{{1.0}, {1.0}};
  CHECK(gaussian_kl(q, p) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gaussian_kl(p, p) == 0.0);

  DiagGaussian bad{{0.0}, {0.0}};
  CHECK_THROWS_AS(gaussian_kl(bad, p), std::invalid_argument);
  DiagGaussian two{{0.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(gaussian_kl(two, p), std::invalid_argument);
}

TEST_CASE("gaussian_kl is nonnegative, zero only at equality") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    DiagGaussian q, p;
    for (int i = 0; i < 4; ++i) {
      q.mean.push_back(rng.uniform(-2, 2));
      q.var.push_back(std::exp(rng.uniform(-2, 2)));
      p.mean.push_back(rng.uniform(-2, 2));
      p.var.push_back(std::exp(rng.uniform(-2, 2)));
    }
    CHECK(gaussian_kl(q, p) >= 0.0);
    CHECK(gaussian_kl(q, q) == 0.0);
  }
}

TEST_CASE("gaussian_kl matches a Monte-Carlo estimate") {
  // Smaller-scale version of the acceptance oracle: E_q[log q - log p].
  Rng rng(123);
  DiagGaussian q, p;
  for (int i = 0; i < 3; ++i) {
    q.mean.push_back(rng.uniform(-1, 1));
    q.var.push_back(std::exp(rng.uniform(-1, 1)));
    p.mean.push_back(rng.uniform(-1, 1));
    p.var.push_back(std::exp(rng.uniform(-1, 1)));
  }
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  Rng draw(99);
  for (int s = 0; s < n; ++s) {
    double term = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double eps = draw.normal();
      const double z = q.mean[static_cast<std::size_t>(i)] +
                       std::sqrt(q.var[static_cast<std::size_t>(i)]) * eps;
      const double dq = z - q.mean[static_cast<std::size_t>(i)];
      const double dp = z - p.mean[static_cast<std::size_t>(i)];
      const double logq = -0.5 * std::log(2 * M_PI * q.var[static_cast<std::size_t>(i)]) -
                          dq * dq / (2 * q.var[static_cast<std::size_t>(i)]);
      const double logp = -0.5 * std::log(2 * M_PI * p.var[static_cast<std::size_t>(i)]) -
                          dp * dp / (2 * p.var[static_cast<std::size_t>(i)]);
      term += logq - logp;
    }
    sum += term;
    sumsq += term * term;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  CHECK(std::abs(gaussian_kl(q, p) - mean) < 3 * se);
}

TEST_CASE("reparameterized sampling") {
  DiagGaussian g{{1.0, -2.0}, {4.0, 0.25}};
  auto z0 = reparam_sample(g, std::vector<double>{0.0, 0.0});
  CHECK(z0[0] == 1.0);
  CHECK(z0[1] == -2.0);

  DiagGaussian unit{{0.0, 0.0}, {1.0, 1.0}};
  auto ze = reparam_sample(unit, std::vector<double>{1.0, 0.0});
  CHECK(ze[0] == 1.0);
  CHECK(ze[1] == 0.0);

  CHECK_THROWS_AS(reparam_sample(g, std::vector<double>{0.0}), std::invalid_argument);

  // Law of large numbers: the sample mean approaches g.mean.
  const int n = 100000;
  Rng rng(5);
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += reparam_sample(g, std::vector<double>{rng.normal(), rng.normal()})[0];
  CHECK(std::abs(acc / n - g.mean[0]) < 4.0 * std::sqrt(g.var[0] / n));
}

TEST_CASE("reparameterization is differentiable with noise fixed") {
  Tensor mean = Tensor::vec({0.3, -0.6}, true);
  Tensor pre_var = Tensor::vec({0.5, 1.5}, true);
  Tensor noise = Tensor::vec({0.7, -1.1});
  auto f = [&](Tape& t) {
    GaussianNodes g{mean, t.softplus(pre_var)};
    Tensor z = reparam_sample_node(t, g, noise);
    return t.sum(t.mul(z, z));
  };
  const Tensor params[] = {mean, pre_var};
  CHECK(grad_check(f, params, 1e-4) < 1e-6);
}

TEST_CASE("word drop mask: rate 0, concentration, determinism") {
  auto none = word_drop_mask(50, 0.0, 7ULL);
  for (bool b : none) CHECK_FALSE(b);

  const int n = 100000;
  auto mask = word_drop_mask(n, 0.25, 7ULL);
  int dropped = 0;
  for (bool b : mask) dropped += b ? 1 : 0;
  const double frac = static_cast<double>(dropped) / n;
  CHECK(frac > 0.24);
  CHECK(frac < 0.26);

  CHECK(word_drop_mask(64, 0.25, 9ULL) == word_drop_mask(64, 0.25, 9ULL));
  CHECK_THROWS_AS(word_drop_mask(4, 1.0, 1ULL), std::invalid_argument);
}

TEST_SUITE_END();
