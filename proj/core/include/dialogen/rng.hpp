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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dialogen {

/// Splittable counter-based PRNG. Every random decision in the project
/// derives from one 64-bit seed through this generator, so runs are
/// reproducible from (seed, config, corpus) alone and ports to other
/// languages can replay logs exactly.
///
/// Construction (all arithmetic mod 2^64):
///   mix(x):      the SplitMix64 finalizer
///                x += 0x9E3779B97F4A7C15
///                x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
///                x = (x ^ (x >> 27)) * 0x94D049BB133111EB
///                return x ^ (x >> 31)
///   key(seed):   mix(seed)
///   draw i:      mix(key + (i+1) * 0x9E3779B97F4A7C15), i = 0, 1, ...
///   split(s):    child key = mix(key ^ mix(s ^ 0x632BE59BD9B4E019))
///   uniform:     ((draw >> 11) + 0.5) * 2^-53           -> (0, 1)
///   normal:      Box-Muller on two uniforms; the second value of each
///                pair is cached and returned by the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed)) {}

  /// Independent child stream; a given (parent, stream) pair always
  /// yields the same child.
  Rng split(std::uint64_t stream) const {
    Rng child(0);
    child.key_ = mix(key_ ^ mix(stream ^ 0x632BE59BD9B4E019ULL));
    child.counter_ = 0;
    child.has_cached_normal_ = false;
    return child;
  }

  /// Child stream named by a label, for readable call sites.
  Rng split(std::string_view label) const { return split(hash(label)); }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform draw in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n); n must be positive. Uses rejection-free modulo of a
  /// 64-bit draw, bias is negligible for the n used here (n << 2^64).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    return next_u64() % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
  }

  /// Serializable state, stored in checkpoints.
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  static Rng restore(std::uint64_t key, std::uint64_t counter) {
    Rng r(0);
    r.key_ = key;
    r.counter_ = counter;
    r.has_cached_normal_ = false;
    return r;
  }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  /// FNV-1a, used to derive stream ids from labels.
  static std::uint64_t hash(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace dialogen
