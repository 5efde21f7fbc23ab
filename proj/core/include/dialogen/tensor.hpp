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

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dialogen {

using Shape = std::vector<int>;

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // same length as values when requires_grad
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major tensor of doubles. Copying a Tensor copies the handle,
/// not the storage; parameters stay shared between the model, the
/// optimizer and any number of tapes. Only rank-1 and rank-2 shapes are
/// used by the models.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor vec(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int size() const { return static_cast<int>(d_->values.size()); }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only

  std::span<double> values() { return d_->values; }
  std::span<const double> values() const { return d_->values; }
  std::span<double> grad();
  std::span<const double> grad() const;

  bool requires_grad() const { return d_->requires_grad; }
  void zero_grad();

  double item() const;            // scalar only
  double at(int i) const;         // rank-1
  double at(int r, int c) const;  // rank-2

  /// Identity of the underlying storage; two handles to the same
  /// parameter compare equal.
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  std::string shape_string() const;

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> d_;
};

enum class ActKind { Tanh, Sigmoid, Softplus };

/// Overflow-safe scalar softplus; strictly positive for every finite input.
double stable_softplus(double x);
double stable_sigmoid(double x);

/// Define-by-run gradient tape. Operations compute values immediately and,
/// when the tape is recording and an input requires gradients, push a
/// backward rule. Inputs always precede the node that consumes them, so one
/// reverse sweep visits each node exactly once. A tape lives for a single
/// forward/backward pass and is rebuilt from scratch each training step.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// (m x k)(k x n) -> (m x n), or (m x k)(k) -> (m).
  Tensor matmul(const Tensor& a, const Tensor& b);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
  Tensor div(const Tensor& a, const Tensor& b);  // elementwise
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);

  Tensor tanh(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor softplus(const Tensor& a);
  Tensor activation(ActKind kind, const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor sqrt(const Tensor& a);

  Tensor sum(const Tensor& a);  // -> scalar
  Tensor concat(std::span<const Tensor> parts);  // rank-1 parts
  Tensor concat(const Tensor& a, const Tensor& b);
  Tensor concat(const Tensor& a, const Tensor& b, const Tensor& c);
  Tensor slice(const Tensor& a, int begin, int end);  // rank-1, [begin, end)
  Tensor row(const Tensor& matrix, int r);  // embedding lookup

  /// Cross entropy of a categorical softmax: -log softmax(logits)[target],
  /// computed with max subtraction. Backward rule: softmax(logits) - onehot.
  Tensor softmax_xent(const Tensor& logits, int target);

  /// Log-softmax values of a rank-1 logits vector (no graph node; helper
  /// for decoding paths).
  static std::vector<double> log_softmax(std::span<const double> logits);

  /// Reverse sweep from a scalar loss. Gradients of every tensor that
  /// requires them are accumulated with +=, so shared parameters collect
  /// contributions from every use. May be called once per tape.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }
  bool recording() const { return recording_; }

 private:
  Tensor make_output(Shape shape, bool requires_grad);
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  bool track(const Tensor& t) const {
    return recording_ && t.requires_grad();
  }

  std::vector<std::function<void()>> nodes_;
  bool recording_;
  bool swept_ = false;
};

/// Central finite-difference check of reverse-mode gradients.
///
/// `f` rebuilds the loss graph on the given tape from the current parameter
/// values; it must be deterministic (any noise or dropout frozen outside).
/// Returns max over parameter entries of |a - n| / max(1e-8, |a| + |n|)
/// where `a` is the analytic and `n` the numeric derivative at eps.
/// eps must lie in [1e-6, 1e-3]. Throws if f is not deterministic.
double grad_check(const std::function<Tensor(Tape&)>& f,
                  std::span<const Tensor> params, double eps);

}  // namespace dialogen
