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

#include "dialogen/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dialogen/checkpoint.hpp"
#include "dialogen/data.hpp"
#include "dialogen/decoding.hpp"
#include "dialogen/evaluation.hpp"
#include "dialogen/model.hpp"
#include "dialogen/presets.hpp"
#include "dialogen/tensor.hpp"
#include "dialogen/training.hpp"

namespace dialogen::cli {

namespace fs = std::filesystem;

namespace {

/// --out is resolved against DIALOGEN_RUN_ROOT when relative.
fs::path resolve_run_dir(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("DIALOGEN_RUN_ROOT")) return fs::path(root) / p;
  return p;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// Apply one flat key=value override to a preset. Keys mirror
/// Preset::describe().
void apply_override(Preset& p, const std::string& key, const std::string& value) {
  auto as_int = [&] { return std::stoll(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_bool = [&] { return value == "1" || value == "true"; };
  if (key == "preset") return;  // informational line in snapshots
  else if (key == "kind") p.model.kind = model_kind_from_string(value);
  else if (key == "embedding_size") p.model.embedding_size = static_cast<int>(as_int());
  else if (key == "encoder_size") p.model.encoder_size = static_cast<int>(as_int());
  else if (key == "bidirectional_encoder") p.model.bidirectional_encoder = as_bool();
  else if (key == "context_size") p.model.context_size = static_cast<int>(as_int());
  else if (key == "decoder_size") p.model.decoder_size = static_cast<int>(as_int());
  else if (key == "gate_size") p.model.gate_size = static_cast<int>(as_int());
  else if (key == "latent_size") p.model.latent_size = static_cast<int>(as_int());
  else if (key == "encoder_cell") p.model.encoder_cell = cell_kind_from_string(value);
  else if (key == "context_cell") p.model.context_cell = cell_kind_from_string(value);
  else if (key == "decoder_cell") p.model.decoder_cell = cell_kind_from_string(value);
  else if (key == "gating") p.model.gating = gating_kind_from_string(value);
  else if (key == "carry_encoder_state") p.model.carry_encoder_state = as_bool();
  else if (key == "posterior_two_layer") p.model.posterior_two_layer = as_bool();
  else if (key == "covariance_scale") p.model.covariance_scale = as_double();
  else if (key == "learning_rate") p.train.learning_rate = as_double();
  else if (key == "batch_size") p.train.batch_size = static_cast<int>(as_int());
  else if (key == "clip_threshold") p.train.clip_threshold = as_double();
  else if (key == "kl_ramp_batches") p.train.kl_ramp_batches = as_int();
  else if (key == "word_drop_rate") p.train.word_drop_rate = as_double();
  else if (key == "validate_every") p.train.validate_every = as_int();
  else if (key == "patience") p.train.patience = static_cast<int>(as_int());
  else if (key == "max_batches") p.train.max_batches = as_int();
  else if (key == "max_unroll") p.train.max_unroll = static_cast<int>(as_int());
  else if (key == "seed") p.train.seed = std::stoull(value);
  else if (key == "beam_width") p.beam_width = static_cast<int>(as_int());
  else if (key == "vocab_limit") p.vocab_limit = static_cast<int>(as_int());
  else throw std::runtime_error("unknown config key '" + key + "'");
}

void apply_config_file(Preset& p, const std::string& path) {
  std::istringstream is(read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    apply_override(p, line.substr(0, eq), line.substr(eq + 1));
  }
}

std::string snapshot_text(const Preset& p, const std::string& corpus,
                          const std::string& valid) {
  std::ostringstream os;
  os << p.describe();
  os << "seed=" << p.train.seed << "\n";
  os << "# corpus=" << corpus << "\n";
  os << "# valid=" << valid << "\n";
  return os.str();
}

std::vector<Words> read_token_lines(const fs::path& path) {
  std::istringstream is(read_file(path));
  std::vector<Words> out;
  std::string line;
  while (std::getline(is, line)) {
    Words words;
    std::istringstream ls(line);
    std::string w;
    while (ls >> w) words.push_back(w);
    out.push_back(std::move(words));
  }
  return out;
}

std::string tokens_to_text(std::span<const int> tokens, const Vocabulary& vocab) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == Vocabulary::kEou && i + 1 == tokens.size()) break;
    if (!first) os << " ";
    first = false;
    os << vocab.token_of(tokens[i]);
  }
  return os.str();
}

int cmd_train(const std::string& preset_name, const std::string& config_file,
              const std::vector<std::string>& overrides, const std::string& corpus_path,
              const std::string& valid_path, const std::string& out_dir,
              const std::string& init_from) {
  Preset p = preset(preset_name);
  // Checksum of the pristine preset, before any config-file or flag
  // overrides, so silent preset drift is visible across runs.
  std::cout << "preset " << p.name << " checksum " << p.checksum() << "\n";
  if (!config_file.empty()) apply_config_file(p, config_file);
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + ov);
    apply_override(p, ov.substr(0, eq), ov.substr(eq + 1));
  }

  const fs::path run_dir = resolve_run_dir(out_dir);
  fs::create_directories(run_dir);

  // Warm starts reuse the checkpoint's vocabulary so token ids line up;
  // otherwise the vocabulary is built from the training corpus.
  Corpus corpus, valid;
  ModelBundle model;
  if (!init_from.empty()) {
    Checkpoint src = load_checkpoint(init_from);
    corpus = load_corpus_with_vocab(corpus_path, src.model.vocab);
    valid = valid_path.empty() ? corpus : load_corpus_with_vocab(valid_path, src.model.vocab);
    if (src.model.config.kind == ModelKind::Hred && p.model.kind == ModelKind::Vhred) {
      Rng warm_rng = Rng(p.train.seed).split("warm-start");
      model = vhred_from_hred(src.model, p.model.latent_size, warm_rng,
                              p.model.posterior_two_layer, p.model.covariance_scale);
    } else if (src.model.config.kind == p.model.kind) {
      model = src.model;  // resume training from the checkpoint
    } else {
      throw std::runtime_error("cannot initialize " + to_string(p.model.kind) +
                               " from a " + to_string(src.model.config.kind) + " checkpoint");
    }
  } else {
    LoadedCorpus loaded = load_corpus(corpus_path, p.vocab_limit);
    corpus = std::move(loaded.corpus);
    valid = valid_path.empty() ? corpus : load_corpus_with_vocab(valid_path, loaded.vocab);
    Rng init_rng = Rng(p.train.seed).split("init");
    model = build_model(p.model, loaded.vocab, init_rng);
  }
  const std::string valid_name = valid_path.empty() ? corpus_path : valid_path;
  write_file(run_dir / "config.txt", snapshot_text(p, corpus_path, valid_name));

  std::ofstream log(run_dir / "train.log", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write train.log");
  log << "# batch\tbound\treconstruction\tkl\tkl_weight\tgrad_norm\tseconds\n";
  auto on_row = [&](const BatchLogRow& r) {
    log << r.batch << "\t" << fmt(r.bound) << "\t" << fmt(r.reconstruction) << "\t"
        << fmt(r.kl) << "\t" << fmt(r.kl_weight) << "\t" << fmt(r.grad_norm) << "\t"
        << fmt(r.seconds) << "\n";
  };

  TrainResult result = train(model, corpus, valid, p.train, on_row);
  log.close();

  std::ofstream vlog(run_dir / "valid.log", std::ios::binary);
  vlog << "# batch\tbound_per_token\tbound_per_utterance\tmc_bound_per_token\timproved\n";
  for (const ValidationEvent& ev : result.log.validations)
    vlog << ev.batch << "\t" << fmt(ev.bound_per_token) << "\t" << fmt(ev.bound_per_utterance)
         << "\t" << fmt(ev.mc_bound_per_token) << "\t" << (ev.improved ? 1 : 0) << "\n";
  vlog.close();

  write_file(run_dir / "best.ckpt", result.best_checkpoint);
  save_checkpoint((run_dir / "final.ckpt").string(), model,
                  Rng(p.train.seed).split("final"));

  std::cout << "trained " << result.batches_run << " batches"
            << (result.stopped_early ? " (early stop)" : "") << ", best validation bound/token "
            << fmt(result.best_bound) << " at batch " << result.best_batch << "\n";
  std::cout << "run directory: " << run_dir.string() << "\n";
  return 0;
}

int cmd_generate(const std::string& checkpoint_path, const std::string& context_path,
                 const std::string& out_path, int n_turns, int beam, int max_tokens,
                 const std::string& latent_mode, std::uint64_t seed) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  Corpus contexts = load_corpus_with_vocab(context_path, cp.model.vocab);

  DecodeConfig cfg;
  cfg.beam_width = beam;
  cfg.max_tokens = max_tokens;
  cfg.latent_mode = latent_mode_from_string(latent_mode);

  std::ostringstream os;
  for (std::size_t i = 0; i < contexts.dialogues.size(); ++i) {
    DecodeConfig line_cfg = cfg;
    line_cfg.seed = Rng(seed).split("context-line").split(i).key();
    std::vector<std::vector<int>> turns = rollout(cp.model, contexts.dialogues[i], n_turns,
                                                  line_cfg);
    for (std::size_t t = 0; t < turns.size(); ++t) {
      if (t) os << " </u> ";
      os << tokens_to_text(turns[t], cp.model.vocab);
    }
    os << "\n";
  }

  if (out_path.empty() || out_path == "-")
    std::cout << os.str();
  else
    write_file(out_path, os.str());
  return 0;
}

int cmd_evaluate(const std::string& responses_path, const std::string& references_path,
                 const std::string& embeddings_path, const std::string& metrics_csv,
                 const std::string& unigram_corpus, long long wins, long long losses,
                 long long ties, double level, const std::string& out_path) {
  MetricSelection select;
  bool want_ci = false;
  {
    std::istringstream ms(metrics_csv);
    std::string item;
    while (std::getline(ms, item, ',')) {
      if (item == "avg") select.average = true;
      else if (item == "greedy") select.greedy = true;
      else if (item == "extrema") select.extrema = true;
      else if (item == "stats") select.stats = true;
      else if (item == "ci") want_ci = true;
      else throw std::runtime_error("unknown metric '" + item +
                                    "' (expected avg, greedy, extrema, stats, ci)");
    }
  }

  std::ostringstream out;
  const bool need_rows = select.average || select.greedy || select.extrema || select.stats;
  if (need_rows) {
    if (responses_path.empty() || references_path.empty())
      throw std::runtime_error("metrics require --responses and --references");
    std::vector<Words> responses = read_token_lines(responses_path);
    std::vector<Words> references = read_token_lines(references_path);

    std::optional<EmbeddingTable> table;
    if (select.average || select.greedy || select.extrema) {
      if (embeddings_path.empty())
        throw std::runtime_error("embedding metrics require --embeddings");
      table = EmbeddingTable::load(embeddings_path);
    }
    std::optional<UnigramModel> unigram;
    if (select.stats) {
      if (unigram_corpus.empty())
        throw std::runtime_error("stats require --unigram-corpus (the training corpus)");
      unigram = UnigramModel::from_corpus_text(read_file(unigram_corpus));
    }
    MetricReport report = evaluate_responses(responses, references,
                                             table ? &*table : nullptr,
                                             unigram ? &*unigram : nullptr, select);
    out << report.to_tsv();
  }

  if (want_ci) {
    PreferenceCi ci = preference_ci({wins, losses, ties}, level);
    out << "preference\twins\t" << fmt(ci.wins.percent) << "\t+-\t" << fmt(ci.wins.margin)
        << "\n";
    out << "preference\tlosses\t" << fmt(ci.losses.percent) << "\t+-\t" << fmt(ci.losses.margin)
        << "\n";
    out << "preference\tties\t" << fmt(ci.ties.percent) << "\t+-\t" << fmt(ci.ties.margin)
        << "\n";
  }

  if (out_path.empty() || out_path == "-")
    std::cout << out.str();
  else
    write_file(out_path, out.str());
  return 0;
}

int cmd_gradcheck(const std::string& preset_name, double eps, std::uint64_t seed) {
  Preset p = preset(preset_name);
  std::cout << "preset " << p.name << " checksum " << p.checksum() << "\n";

  // Finite differences over the full objective need small sizes; keep the
  // preset's graph structure (kind, cells, gating, layers) and shrink.
  ModelConfig cfg = p.model;
  cfg.embedding_size = 3;
  cfg.encoder_size = 4;
  cfg.context_size = 4;
  cfg.decoder_size = 4;
  cfg.gate_size = 4;
  if (cfg.kind == ModelKind::Vhred) cfg.latent_size = 2;

  Vocabulary vocab;
  vocab.add("a");
  vocab.add("b");
  Rng rng = Rng(seed).split("gradcheck");
  ModelBundle model = build_model(cfg, vocab, rng);

  Dialogue d;
  d.utterances = {{Vocabulary::kSou, 4, 5, Vocabulary::kEou},
                  {Vocabulary::kSou, 5, 4, 5, Vocabulary::kEou}};

  const std::size_t targets = d.utterances.size() - 1;
  std::vector<std::vector<double>> noise(targets);
  Rng noise_rng = rng.split("noise");
  for (auto& nv : noise) {
    nv.resize(static_cast<std::size_t>(std::max(1, cfg.latent_size)));
    for (double& x : nv) x = noise_rng.normal();
  }
  std::vector<std::vector<bool>> masks;
  Rng mask_rng = rng.split("mask");
  for (const auto& u : d.utterances)
    if (&u != &d.utterances.front())
      masks.push_back(word_drop_mask(static_cast<int>(u.size()) - 1, 0.25, mask_rng));

  std::vector<NamedParam> named = model.parameters();
  std::vector<Tensor> params;
  for (const NamedParam& np : named) params.push_back(np.value);

  auto objective = [&](Tape& tape) -> Tensor {
    switch (model.config.kind) {
      case ModelKind::Rnnlm:
        return rnnlm_nll(tape, model, flatten_dialogue(d)).nll;
      case ModelKind::Hred:
        return hred_forward(tape, model, d).total;
      case ModelKind::Vhred:
        return vhred_elbo(tape, model, d, 1.0, noise, masks).objective;
    }
    throw std::logic_error("unreachable");
  };

  const double worst = grad_check(objective, params, eps);
  std::cout << "max relative discrepancy: " << fmt(worst) << " (eps " << fmt(eps) << ", "
            << params.size() << " parameter tensors)\n";
  if (worst >= 1e-3) {
    std::cerr << "gradcheck FAILED: discrepancy " << fmt(worst) << " >= 1e-3\n";
    return 1;
  }
  return 0;
}

int cmd_synthesize(int topics, int words_per_topic, double stickiness, int dialogues,
                   int len_min, int len_max, int turns_min, int turns_max, std::uint64_t seed,
                   const std::string& out_path) {
  SyntheticSpec spec;
  spec.topics = topics;
  spec.words_per_topic = words_per_topic;
  spec.stickiness = stickiness;
  spec.dialogue_count = dialogues;
  spec.utterance_len_min = len_min;
  spec.utterance_len_max = len_max;
  spec.turns_min = turns_min;
  spec.turns_max = turns_max;
  spec.seed = seed;

  SyntheticCorpus corpus = synthesize_corpus(spec);
  write_file(out_path, corpus.corpus_text);
  write_file(out_path + ".labels", corpus.labels_text);
  std::cout << "wrote " << dialogues << " dialogues to " << out_path << " (labels: " << out_path
            << ".labels)\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"dialogen: hierarchical latent-variable dialogue models"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus");
  std::string preset_name = "toy", config_file, corpus_path, valid_path, out_dir = "run",
              init_from;
  std::vector<std::string> overrides;
  train_cmd->add_option("--preset", preset_name, "Configuration preset");
  train_cmd->add_option("--config", config_file, "key=value config file (overrides the preset)");
  train_cmd->add_option("--set", overrides,
                        "key=value overrides (applied after --config; highest precedence)");
  train_cmd->add_option("--corpus", corpus_path, "Training corpus file")->required();
  train_cmd->add_option("--valid", valid_path, "Validation corpus (defaults to --corpus)");
  train_cmd->add_option("--out", out_dir,
                        "Run directory (relative paths resolve under $DIALOGEN_RUN_ROOT)");
  train_cmd->add_option("--init-from", init_from,
                        "Checkpoint to initialize from (an HRED checkpoint warm-starts a VHRED)");
  std::optional<std::uint64_t> seed_flag;
  train_cmd->add_option("--seed", seed_flag, "Training seed (overrides preset/config)");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate responses for a context file");
  std::string ckpt_path, context_path, gen_out;
  int n_turns = 1, beam = 5, max_tokens = 30;
  std::string latent_mode = "prior_sample";
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  gen_cmd->add_option("--context-file", context_path, "Dialogue contexts, one per line")
      ->required();
  gen_cmd->add_option("--out", gen_out, "Response file ('-' for stdout)");
  gen_cmd->add_option("--n-turns", n_turns, "Consecutive responses per context");
  gen_cmd->add_option("--beam", beam, "Beam width");
  gen_cmd->add_option("--max-tokens", max_tokens, "Maximum response length");
  gen_cmd->add_option("--latent-mode", latent_mode, "prior_sample or prior_mean");
  gen_cmd->add_option("--seed", gen_seed, "Decoding seed");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Automatic response metrics");
  std::string resp_path, ref_path, emb_path, metrics = "avg,greedy,extrema", unigram_corpus,
              eval_out;
  long long wins = 0, losses = 0, ties = 0;
  double level = 0.90;
  eval_cmd->add_option("--responses", resp_path, "Model responses, one per line");
  eval_cmd->add_option("--references", ref_path, "Reference responses, one per line");
  eval_cmd->add_option("--embeddings", emb_path, "word2vec-format text embeddings");
  eval_cmd->add_option("--metrics", metrics, "Comma list of avg,greedy,extrema,stats,ci");
  eval_cmd->add_option("--unigram-corpus", unigram_corpus, "Training corpus for stats");
  eval_cmd->add_option("--wins", wins, "Preference wins (ci)");
  eval_cmd->add_option("--losses", losses, "Preference losses (ci)");
  eval_cmd->add_option("--ties", ties, "Preference ties (ci)");
  eval_cmd->add_option("--level", level, "Confidence level (0.90, 0.95, 0.99)");
  eval_cmd->add_option("--out", eval_out, "Report file ('-' for stdout)");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck",
                                      "Finite-difference check of the training gradients");
  std::string grad_preset = "toy";
  double eps = 1e-4;
  std::uint64_t grad_seed = 7;
  grad_cmd->add_option("--preset", grad_preset, "Preset whose graph structure to check");
  grad_cmd->add_option("--eps", eps, "Finite-difference step");
  grad_cmd->add_option("--seed", grad_seed, "Parameter/noise seed");

  // synthesize
  auto* syn_cmd = app.add_subcommand("synthesize", "Generate a synthetic topical corpus");
  int topics = 4, words_per_topic = 6, dialogues = 2000;
  double stickiness = 0.6;
  int len_min = 4, len_max = 8, turns_min = 3, turns_max = 5;
  std::uint64_t syn_seed = 1;
  std::string syn_out = "synthetic.txt";
  syn_cmd->add_option("--topics", topics, "Number of topics (>= 2)");
  syn_cmd->add_option("--words-per-topic", words_per_topic, "Disjoint words per topic");
  syn_cmd->add_option("--stickiness", stickiness, "P(stay on topic) in [0, 1]");
  syn_cmd->add_option("--dialogues", dialogues, "Number of dialogues");
  syn_cmd->add_option("--len-min", len_min, "Minimum utterance length");
  syn_cmd->add_option("--len-max", len_max, "Maximum utterance length");
  syn_cmd->add_option("--turns-min", turns_min, "Minimum utterances per dialogue");
  syn_cmd->add_option("--turns-max", turns_max, "Maximum utterances per dialogue");
  syn_cmd->add_option("--seed", syn_seed, "Generator seed");
  syn_cmd->add_option("--out", syn_out, "Corpus output path (labels at <out>.labels)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints the message and usage text
    return code == 0 ? 0 : 2;     // 0 for --help, 2 for bad flags
  }

  try {
    if (train_cmd->parsed()) {
      if (seed_flag) overrides.push_back("seed=" + std::to_string(*seed_flag));
      return cmd_train(preset_name, config_file, overrides, corpus_path, valid_path, out_dir,
                       init_from);
    }
    if (gen_cmd->parsed())
      return cmd_generate(ckpt_path, context_path, gen_out, n_turns, beam, max_tokens,
                          latent_mode, gen_seed);
    if (eval_cmd->parsed())
      return cmd_evaluate(resp_path, ref_path, emb_path, metrics, unigram_corpus, wins, losses,
                          ties, level, eval_out);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad_preset, eps, grad_seed);
    if (syn_cmd->parsed())
      return cmd_synthesize(topics, words_per_topic, stickiness, dialogues, len_min, len_max,
                            turns_min, turns_max, syn_seed, syn_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 2;
}

}  // namespace dialogen::cli
