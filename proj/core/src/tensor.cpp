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

#include "dialogen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dialogen {

namespace {

int product(const Shape& shape) {
  int n = 1;
  for (int s : shape) {
    if (s <= 0) throw std::invalid_argument("tensor shape entries must be positive");
    n *= s;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + " shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

double stable_softplus(double x) {
  double v;
  if (x > 30.0) {
    v = x + std::log1p(std::exp(-x));
  } else if (x < -30.0) {
    v = std::exp(x);
  } else {
    v = std::log1p(std::exp(x));
  }
  // exp underflows to zero somewhere below -745; keep the output strictly
  // positive for every finite input.
  return std::max(v, std::numeric_limits<double>::denorm_min());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto d = std::make_shared<detail::TensorData>();
  const int n = product(shape);
  d->shape = std::move(shape);
  d->values.assign(static_cast<std::size_t>(n), 0.0);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(static_cast<std::size_t>(n), 0.0);
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.d_->values.begin(), t.d_->values.end(), value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  const int n = product(shape);
  if (static_cast<std::size_t>(n) != values.size())
    throw std::invalid_argument("tensor value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(static_cast<std::size_t>(n), 0.0);
  return Tensor(std::move(d));
}

Tensor Tensor::vec(std::vector<double> values, bool requires_grad) {
  Shape shape{static_cast<int>(values.size())};
  return from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

int Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows() on tensor of shape " + shape_string());
  return d_->shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols() on tensor of shape " + shape_string());
  return d_->shape[1];
}

std::span<double> Tensor::grad() {
  if (!d_->requires_grad) throw std::logic_error("grad() on tensor without requires_grad");
  return d_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!d_->requires_grad) throw std::logic_error("grad() on tensor without requires_grad");
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_string());
  return d_->values[0];
}

double Tensor::at(int i) const {
  if (rank() != 1) throw std::invalid_argument("at(i) on tensor of shape " + shape_string());
  return d_->values[static_cast<std::size_t>(i)];
}

double Tensor::at(int r, int c) const {
  if (rank() != 2) throw std::invalid_argument("at(r,c) on tensor of shape " + shape_string());
  return d_->values[static_cast<std::size_t>(r) * d_->shape[1] + c];
}

std::string Tensor::shape_string() const { return shape_str(d_->shape); }

Tensor Tape::make_output(Shape shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), recording_ && requires_grad);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2))
    shape_error("matmul", a.shape(), b.shape());
  const int m = a.shape()[0];
  const int k = a.shape()[1];
  const bool vec = b.rank() == 1;
  const int bk = b.shape()[0];
  const int n = vec ? 1 : b.shape()[1];
  if (bk != k) shape_error("matmul", a.shape(), b.shape());

  Tensor out = make_output(vec ? Shape{m} : Shape{m, n},
                           a.requires_grad() || b.requires_grad());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (int i = 0; i < m; ++i) {
    const double* arow = av + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += arow[t] * bv[static_cast<std::size_t>(t) * n + j];
      ov[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }

  if (out.requires_grad()) {
    const bool ga = track(a);
    const bool gb = track(b);
    record([a, b, out, m, n, k, ga, gb] {
      const double* og = out.grad().data();
      if (ga) {
        double* agr = const_cast<Tensor&>(a).grad().data();
        const double* bv2 = b.values().data();
        for (int i = 0; i < m; ++i)
          for (int t = 0; t < k; ++t) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
              acc += og[static_cast<std::size_t>(i) * n + j] * bv2[static_cast<std::size_t>(t) * n + j];
            agr[static_cast<std::size_t>(i) * k + t] += acc;
          }
      }
      if (gb) {
        double* bgr = const_cast<Tensor&>(b).grad().data();
        const double* av2 = a.values().data();
        for (int t = 0; t < k; ++t)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i)
              acc += av2[static_cast<std::size_t>(i) * k + t] * og[static_cast<std::size_t>(i) * n + j];
            bgr[static_cast<std::size_t>(t) * n + j] += acc;
          }
      }
    });
  }
  return out;
}

namespace {
void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + " shape mismatch: " + a.shape_string() +
                                " vs " + b.shape_string());
}
}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (out.requires_grad()) {
    const bool ga = track(a), gb = track(b);
    record([a, b, out, n, ga, gb] {
      const double* og = out.grad().data();
      if (ga) {
        double* g = const_cast<Tensor&>(a).grad().data();
        for (int i = 0; i < n; ++i) g[i] += og[i];
      }
      if (gb) {
        double* g = const_cast<Tensor&>(b).grad().data();
        for (int i = 0; i < n; ++i) g[i] += og[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (out.requires_grad()) {
    const bool ga = track(a), gb = track(b);
    record([a, b, out, n, ga, gb] {
      const double* og = out.grad().data();
      if (ga) {
        double* g = const_cast<Tensor&>(a).grad().data();
        for (int i = 0; i < n; ++i) g[i] += og[i];
      }
      if (gb) {
        double* g = const_cast<Tensor&>(b).grad().data();
        for (int i = 0; i < n; ++i) g[i] -= og[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (out.requires_grad()) {
    const bool ga = track(a), gb = track(b);
    record([a, b, out, n, ga, gb] {
      const double* og = out.grad().data();
      if (ga) {
        double* g = const_cast<Tensor&>(a).grad().data();
        const double* bv = b.values().data();
        for (int i = 0; i < n; ++i) g[i] += og[i] * bv[i];
      }
      if (gb) {
        double* g = const_cast<Tensor&>(b).grad().data();
        const double* av = a.values().data();
        for (int i = 0; i < n; ++i) g[i] += og[i] * av[i];
      }
    });
  }
  return out;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = a.values()[i] / b.values()[i];
  if (out.requires_grad()) {
    const bool ga = track(a), gb = track(b);
    record([a, b, out, n, ga, gb] {
      const double* og = out.grad().data();
      const double* bv = b.values().data();
      if (ga) {
        double* g = const_cast<Tensor&>(a).grad().data();
        for (int i = 0; i < n; ++i) g[i] += og[i] / bv[i];
      }
      if (gb) {
        double* g = const_cast<Tensor&>(b).grad().data();
        const double* av = a.values().data();
        for (int i = 0; i < n; ++i) g[i] -= og[i] * av[i] / (bv[i] * bv[i]);
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = a.values()[i] * c;
  if (out.requires_grad()) {
    record([a, out, n, c] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      for (int i = 0; i < n; ++i) g[i] += og[i] * c;
    });
  }
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = a.values()[i] + c;
  if (out.requires_grad()) {
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      for (int i = 0; i < n; ++i) g[i] += og[i];
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = std::tanh(a.values()[i]);
  if (out.requires_grad()) {
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      const double* ov = out.values().data();
      for (int i = 0; i < n; ++i) g[i] += og[i] * (1.0 - ov[i] * ov[i]);
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = stable_sigmoid(a.values()[i]);
  if (out.requires_grad()) {
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      const double* ov = out.values().data();
      for (int i = 0; i < n; ++i) g[i] += og[i] * ov[i] * (1.0 - ov[i]);
    });
  }
  return out;
}

Tensor Tape::softplus(const Tensor& a) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = stable_softplus(a.values()[i]);
  if (out.requires_grad()) {
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      const double* av = a.values().data();
      for (int i = 0; i < n; ++i) g[i] += og[i] * stable_sigmoid(av[i]);
    });
  }
  return out;
}

Tensor Tape::activation(ActKind kind, const Tensor& a) {
  switch (kind) {
    case ActKind::Tanh: return tanh(a);
    case ActKind::Sigmoid: return sigmoid(a);
    case ActKind::Softplus: return softplus(a);
  }
  throw std::logic_error("unknown activation kind");
}

Tensor Tape::log(const Tensor& a) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = std::log(a.values()[i]);
  if (out.requires_grad()) {
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      const double* av = a.values().data();
      for (int i = 0; i < n; ++i) g[i] += og[i] / av[i];
    });
  }
  return out;
}

Tensor Tape::sqrt(const Tensor& a) {
  Tensor out = make_output(a.shape(), a.requires_grad());
  const int n = a.size();
  for (int i = 0; i < n; ++i) out.values()[i] = std::sqrt(a.values()[i]);
  if (out.requires_grad()) {
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      const double* ov = out.values().data();
      for (int i = 0; i < n; ++i) g[i] += og[i] * 0.5 / ov[i];
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  Tensor out = make_output({1}, a.requires_grad());
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out.values()[0] = acc;
  if (out.requires_grad()) {
    const int n = a.size();
    record([a, out, n] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double og = out.grad()[0];
      for (int i = 0; i < n; ++i) g[i] += og;
    });
  }
  return out;
}

Tensor Tape::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 1)
      throw std::invalid_argument("concat expects rank-1 parts, got " + p.shape_string());
    total += p.size();
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output({total}, rg);
  int off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(out.values().data() + off, p.values().data(),
                static_cast<std::size_t>(p.size()) * sizeof(double));
    off += p.size();
  }
  if (out.requires_grad()) {
    std::vector<Tensor> owned(parts.begin(), parts.end());
    std::vector<bool> tracked;
    tracked.reserve(owned.size());
    for (const Tensor& p : owned) tracked.push_back(track(p));
    record([owned = std::move(owned), tracked = std::move(tracked), out] {
      const double* og = out.grad().data();
      int off2 = 0;
      for (std::size_t k = 0; k < owned.size(); ++k) {
        const int n = owned[k].size();
        if (tracked[k]) {
          double* g = const_cast<Tensor&>(owned[k]).grad().data();
          for (int i = 0; i < n; ++i) g[i] += og[off2 + i];
        }
        off2 += n;
      }
    });
  }
  return out;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts, 2));
}

Tensor Tape::concat(const Tensor& a, const Tensor& b, const Tensor& c) {
  const Tensor parts[] = {a, b, c};
  return concat(std::span<const Tensor>(parts, 3));
}

Tensor Tape::slice(const Tensor& a, int begin, int end) {
  if (a.rank() != 1) throw std::invalid_argument("slice expects rank-1, got " + a.shape_string());
  if (begin < 0 || end > a.size() || begin >= end)
    throw std::invalid_argument("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") out of range for " + a.shape_string());
  Tensor out = make_output({end - begin}, a.requires_grad());
  std::memcpy(out.values().data(), a.values().data() + begin,
              static_cast<std::size_t>(end - begin) * sizeof(double));
  if (out.requires_grad()) {
    record([a, out, begin] {
      double* g = const_cast<Tensor&>(a).grad().data();
      const double* og = out.grad().data();
      const int n = out.size();
      for (int i = 0; i < n; ++i) g[begin + i] += og[i];
    });
  }
  return out;
}

Tensor Tape::row(const Tensor& matrix, int r) {
  if (matrix.rank() != 2)
    throw std::invalid_argument("row expects rank-2, got " + matrix.shape_string());
  if (r < 0 || r >= matrix.rows())
    throw std::out_of_range("row " + std::to_string(r) + " out of range for " +
                            matrix.shape_string());
  const int n = matrix.cols();
  Tensor out = make_output({n}, matrix.requires_grad());
  std::memcpy(out.values().data(), matrix.values().data() + static_cast<std::size_t>(r) * n,
              static_cast<std::size_t>(n) * sizeof(double));
  if (out.requires_grad()) {
    record([matrix, out, r, n] {
      double* g = const_cast<Tensor&>(matrix).grad().data() + static_cast<std::size_t>(r) * n;
      const double* og = out.grad().data();
      for (int i = 0; i < n; ++i) g[i] += og[i];
    });
  }
  return out;
}

Tensor Tape::softmax_xent(const Tensor& logits, int target) {
  if (logits.rank() != 1)
    throw std::invalid_argument("softmax_xent expects rank-1 logits, got " +
                                logits.shape_string());
  const int v = logits.size();
  if (target < 0 || target >= v)
    throw std::out_of_range("softmax_xent target " + std::to_string(target) +
                            " out of range for vocabulary of size " + std::to_string(v));
  const double* lv = logits.values().data();
  double mx = lv[0];
  for (int i = 1; i < v; ++i) mx = std::max(mx, lv[i]);
  double z = 0.0;
  for (int i = 0; i < v; ++i) z += std::exp(lv[i] - mx);
  const double logz = std::log(z) + mx;

  Tensor out = make_output({1}, logits.requires_grad());
  out.values()[0] = logz - lv[target];

  if (out.requires_grad()) {
    std::vector<double> p(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) p[static_cast<std::size_t>(i)] = std::exp(lv[i] - logz);
    record([logits, out, target, v, p = std::move(p)] {
      double* g = const_cast<Tensor&>(logits).grad().data();
      const double og = out.grad()[0];
      for (int i = 0; i < v; ++i) g[i] += og * p[static_cast<std::size_t>(i)];
      g[target] -= og;
    });
  }
  return out;
}

std::vector<double> Tape::log_softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double logz = std::log(z) + mx;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - logz;
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + loss.shape_string());
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (swept_) throw std::logic_error("backward may run once per tape");
  swept_ = true;
  if (!loss.requires_grad()) return;  // constant graph, nothing to do
  const_cast<Tensor&>(loss).grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

double grad_check(const std::function<Tensor(Tape&)>& f,
                  std::span<const Tensor> params, double eps) {
  if (eps < 1e-6 || eps > 1e-3)
    throw std::invalid_argument("grad_check eps must lie in [1e-6, 1e-3]");

  const auto value_of = [&f]() {
    Tape t(false);
    return f(t).item();
  };

  const double v0 = value_of();
  const double v1 = value_of();
  if (std::memcmp(&v0, &v1, sizeof(double)) != 0)
    throw std::runtime_error("grad_check requires a deterministic objective");

  // Analytic pass.
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape t;
    Tensor loss = f(t);
    t.backward(loss);
    for (const Tensor& p : params)
      analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (int i = 0; i < p.size(); ++i) {
      const double original = p.values()[i];
      p.values()[i] = original + eps;
      const double up = value_of();
      p.values()[i] = original - eps;
      const double down = value_of();
      p.values()[i] = original;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][static_cast<std::size_t>(i)];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace dialogen
