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

#include "dialogen/latent.hpp"

#include <cmath>
#include <stdexcept>

namespace dialogen {

GaussianNodes LatentNet::forward(Tape& tape, const Tensor& input) const {
  if (input.size() != input_size)
    throw std::invalid_argument("latent net input " + input.shape_string() +
                                " does not match expected size " + std::to_string(input_size));
  Tensor h = tape.tanh(tape.add(tape.matmul(l1_w, input), l1_b));
  if (two_layer) h = tape.tanh(tape.add(tape.matmul(l2_w, h), l2_b));
  Tensor mean = tape.add(tape.matmul(mu_w, h), mu_b);
  Tensor var = tape.scale(tape.softplus(tape.add(tape.matmul(sigma_w, h), sigma_b)),
                          covariance_scale);
  return {mean, var};
}

DiagGaussian LatentNet::forward_plain(std::span<const double> input) const {
  Tape tape(false);
  Tensor x = Tensor::vec({input.begin(), input.end()});
  GaussianNodes g = forward(tape, x);
  return {{g.mean.values().begin(), g.mean.values().end()},
          {g.var.values().begin(), g.var.values().end()}};
}

void LatentNet::append_params(std::vector<NamedParam>& out, const std::string& prefix) const {
  out.push_back({prefix + ".l1_w", l1_w});
  out.push_back({prefix + ".l1_b", l1_b});
  if (two_layer) {
    out.push_back({prefix + ".l2_w", l2_w});
    out.push_back({prefix + ".l2_b", l2_b});
  }
  out.push_back({prefix + ".mu_w", mu_w});
  out.push_back({prefix + ".mu_b", mu_b});
  out.push_back({prefix + ".sigma_w", sigma_w});
  out.push_back({prefix + ".sigma_b", sigma_b});
}

LatentNet init_latent_net(Rng& rng, int input_size, int latent_size, double covariance_scale,
                          bool two_layer) {
  LatentNet net;
  net.input_size = input_size;
  net.latent_size = latent_size;
  net.covariance_scale = covariance_scale;
  net.two_layer = two_layer;
  const double stddev = 0.1;  // variance 0.01
  auto mat = [&](int rows, int cols) {
    Tensor t = Tensor::zeros({rows, cols}, true);
    normal_fill(t, rng, stddev);
    return t;
  };
  net.l1_w = mat(latent_size, input_size);
  net.l1_b = Tensor::zeros({latent_size}, true);
  if (two_layer) {
    net.l2_w = mat(latent_size, latent_size);
    net.l2_b = Tensor::zeros({latent_size}, true);
  }
  net.mu_w = mat(latent_size, latent_size);
  net.mu_b = Tensor::zeros({latent_size}, true);
  net.sigma_w = mat(latent_size, latent_size);
  net.sigma_b = Tensor::zeros({latent_size}, true);
  return net;
}

DiagGaussian prior_of(std::span<const double> ctx_state, const LatentNet& net) {
  return net.forward_plain(ctx_state);
}

DiagGaussian posterior_of(std::span<const double> ctx_state,
                          std::span<const double> next_utt_encoding, const LatentNet& net) {
  std::vector<double> joined;
  joined.reserve(ctx_state.size() + next_utt_encoding.size());
  joined.insert(joined.end(), ctx_state.begin(), ctx_state.end());
  joined.insert(joined.end(), next_utt_encoding.begin(), next_utt_encoding.end());
  return net.forward_plain(joined);
}

double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim())
    throw std::invalid_argument("gaussian_kl dimension mismatch: " + std::to_string(q.dim()) +
                                " vs " + std::to_string(p.dim()));
  double kl = 0.0;
  for (int i = 0; i < q.dim(); ++i) {
    const double qv = q.var[static_cast<std::size_t>(i)];
    const double pv = p.var[static_cast<std::size_t>(i)];
    if (qv <= 0.0 || pv <= 0.0)
      throw std::invalid_argument("gaussian_kl requires strictly positive variances");
    const double dm = q.mean[static_cast<std::size_t>(i)] - p.mean[static_cast<std::size_t>(i)];
    kl += 0.5 * (std::log(pv / qv) + (qv + dm * dm) / pv - 1.0);
  }
  return kl;
}

Tensor gaussian_kl_node(Tape& tape, const GaussianNodes& q, const GaussianNodes& p) {
  for (double v : q.var.values())
    if (v <= 0.0) throw std::invalid_argument("gaussian_kl requires strictly positive variances");
  for (double v : p.var.values())
    if (v <= 0.0) throw std::invalid_argument("gaussian_kl requires strictly positive variances");
  Tensor log_ratio = tape.sub(tape.log(p.var), tape.log(q.var));
  Tensor dm = tape.sub(q.mean, p.mean);
  Tensor quad = tape.div(tape.add(q.var, tape.mul(dm, dm)), p.var);
  Tensor per_dim = tape.add_scalar(tape.add(log_ratio, quad), -1.0);
  return tape.scale(tape.sum(per_dim), 0.5);
}

std::vector<double> reparam_sample(const DiagGaussian& g, std::span<const double> noise) {
  if (static_cast<int>(noise.size()) != g.dim())
    throw std::invalid_argument("reparam_sample noise length " + std::to_string(noise.size()) +
                                " does not match latent dimension " + std::to_string(g.dim()));
  std::vector<double> z(noise.size());
  for (std::size_t i = 0; i < noise.size(); ++i)
    z[i] = g.mean[i] + std::sqrt(g.var[i]) * noise[i];
  return z;
}

Tensor reparam_sample_node(Tape& tape, const GaussianNodes& g, const Tensor& noise) {
  return tape.add(g.mean, tape.mul(tape.sqrt(g.var), noise));
}

std::vector<bool> word_drop_mask(int length, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("word drop rate must lie in [0, 1)");
  std::vector<bool> mask(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) mask[static_cast<std::size_t>(i)] = rng.bernoulli(rate);
  return mask;
}

std::vector<bool> word_drop_mask(int length, double rate, std::uint64_t seed) {
  Rng rng = Rng(seed).split("word-drop");
  return word_drop_mask(length, rate, rng);
}

}  // namespace dialogen
