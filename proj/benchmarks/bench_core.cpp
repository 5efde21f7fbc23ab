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

#include <benchmark/benchmark.h>

#include "dialogen/decoding.hpp"
#include "dialogen/latent.hpp"
#include "dialogen/model.hpp"
#include "dialogen/training.hpp"

namespace {

using namespace dialogen;

Vocabulary bench_vocab(int words) {
  Vocabulary v;
  for (int i = 0; i < words; ++i) v.add("w" + std::to_string(i));
  return v;
}

ModelConfig bench_config(ModelKind kind, int vocab, int hidden, int d_z) {
  ModelConfig c;
  c.kind = kind;
  c.vocab_size = vocab;
  c.embedding_size = 16;
  c.encoder_size = hidden;
  c.context_size = hidden;
  c.decoder_size = hidden;
  c.gate_size = hidden;
  c.latent_size = kind == ModelKind::Vhred ? d_z : 0;
  return c;
}

Dialogue bench_dialogue(int utterances, int length, int vocab) {
  Rng rng(7);
  Dialogue d;
  for (int u = 0; u < utterances; ++u) {
    std::vector<int> utt{Vocabulary::kSou};
    for (int i = 0; i < length; ++i)
      utt.push_back(Vocabulary::kReserved +
                    static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(vocab - Vocabulary::kReserved))));
    utt.push_back(Vocabulary::kEou);
    d.utterances.push_back(std::move(utt));
  }
  return d;
}

void BM_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor a = Tensor::zeros({n, n});
  Tensor x = Tensor::zeros({n});
  for (double& v : a.values()) v = rng.uniform(-1, 1);
  for (double& v : x.values()) v = rng.uniform(-1, 1);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(tape.matmul(a, x));
  }
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(128)->Arg(512);

void BM_gru_step(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0));
  Rng rng(2);
  RnnCell cell = init_cell(CellKind::Gru, rng, 16, hidden);
  Tensor x = Tensor::zeros({16});
  Tensor h = Tensor::zeros({hidden});
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(cell.step(tape, h, x));
  }
}
BENCHMARK(BM_gru_step)->Arg(32)->Arg(128)->Arg(512);

void BM_vhred_elbo_forward(benchmark::State& state) {
  Vocabulary vocab = bench_vocab(60);
  Rng rng(3);
  ModelBundle m = build_model(bench_config(ModelKind::Vhred, vocab.size(), 32, 4), vocab, rng);
  Dialogue d = bench_dialogue(4, 6, vocab.size());
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(vhred_elbo(tape, m, d, 1.0, {}, {}).breakdown.bound);
  }
}
BENCHMARK(BM_vhred_elbo_forward);

void BM_vhred_gradient_step(benchmark::State& state) {
  Vocabulary vocab = bench_vocab(60);
  Rng rng(4);
  ModelBundle m = build_model(bench_config(ModelKind::Vhred, vocab.size(), 32, 4), vocab, rng);
  Dialogue d = bench_dialogue(4, 6, vocab.size());
  for (auto _ : state) {
    m.zero_grads();
    benchmark::DoNotOptimize(
        accumulate_dialogue_gradients(m, d, 1.0, 0.25, 80, Rng(9)).reconstruction_sum);
  }
}
BENCHMARK(BM_vhred_gradient_step);

void BM_beam_search(benchmark::State& state) {
  Vocabulary vocab = bench_vocab(60);
  Rng rng(5);
  ModelBundle m = build_model(bench_config(ModelKind::Hred, vocab.size(), 32, 0), vocab, rng);
  Dialogue ctx = bench_dialogue(2, 6, vocab.size());
  DecodeConfig cfg;
  cfg.beam_width = static_cast<int>(state.range(0));
  cfg.max_tokens = 20;
  for (auto _ : state) {
    benchmark::DoNotOptimize(beam_search(m, ctx, cfg).normalized_score);
  }
}
BENCHMARK(BM_beam_search)->Arg(1)->Arg(5)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
