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

#include "dialogen/rnn.hpp"
#include "dialogen/rng.hpp"
#include "dialogen/tensor.hpp"

namespace dialogen {

/// Diagonal Gaussian over the latent space: a mean and a per-dimension
/// variance (the diagonal of the covariance matrix).
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> var;
  int dim() const { return static_cast<int>(mean.size()); }
};

/// The same distribution as graph nodes, for differentiable paths.
struct GaussianNodes {
  Tensor mean;
  Tensor var;
};

/// Feed-forward network producing a diagonal Gaussian from a conditioning
/// vector:
///   hb   = tanh(l2_w * tanh(l1_w * x + l1_b) + l2_b)     (l2 skipped when
///                                                          two_layer is off)
///   mean = mu_w * hb + mu_b
///   var  = covariance_scale * softplus(sigma_w * hb + sigma_b)
/// The covariance scale is applied on every forward pass.
struct LatentNet {
  Tensor l1_w, l1_b;
  Tensor l2_w, l2_b;
  Tensor mu_w, mu_b;
  Tensor sigma_w, sigma_b;
  double covariance_scale = 0.1;
  bool two_layer = true;
  int input_size = 0;
  int latent_size = 0;

  GaussianNodes forward(Tape& tape, const Tensor& input) const;
  DiagGaussian forward_plain(std::span<const double> input) const;
  void append_params(std::vector<NamedParam>& out, const std::string& prefix) const;
};

/// Weights drawn from a zero-mean normal with variance 0.01, zero biases.
LatentNet init_latent_net(Rng& rng, int input_size, int latent_size,
                          double covariance_scale = 0.1, bool two_layer = true);

/// Prior over the next utterance's latent, conditioned on the context state.
DiagGaussian prior_of(std::span<const double> ctx_state, const LatentNet& net);

/// Approximate posterior, conditioned on [context state ; encoding of the
/// next utterance].
DiagGaussian posterior_of(std::span<const double> ctx_state,
                          std::span<const double> next_utt_encoding, const LatentNet& net);

/// KL(q || p) between diagonal Gaussians:
///   sum_i 0.5 * (log(p.var_i / q.var_i)
///                + (q.var_i + (q.mean_i - p.mean_i)^2) / p.var_i - 1)
/// Always >= 0; throws on nonpositive variances or dimension mismatch.
double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p);

/// Differentiable KL between Gaussian node pairs (same formula).
Tensor gaussian_kl_node(Tape& tape, const GaussianNodes& q, const GaussianNodes& p);

/// Reparameterized sample z = mean + sqrt(var) * noise, with the noise held
/// fixed so gradients flow through mean and variance.
std::vector<double> reparam_sample(const DiagGaussian& g, std::span<const double> noise);
Tensor reparam_sample_node(Tape& tape, const GaussianNodes& g, const Tensor& noise);

/// Decoder-input dropout mask: entry t is true when input token t is to be
/// replaced by the unknown-token embedding. Deterministic given the seed;
/// target-side tokens are never masked.
std::vector<bool> word_drop_mask(int length, double rate, std::uint64_t seed);
std::vector<bool> word_drop_mask(int length, double rate, Rng& rng);

}  // namespace dialogen
