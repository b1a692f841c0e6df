#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>

#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "interconnect/analysis.hpp"
#include "interconnect/checkpoint.hpp"
#include "interconnect/config.hpp"
#include "interconnect/diagnostics.hpp"
#include "interconnect/evaluate.hpp"
#include "interconnect/figures.hpp"
#include "interconnect/training.hpp"

namespace interconnect::cli {

namespace fs = std::filesystem;

namespace {

// Training and evaluation run in float32; gradient checks in float64.
using Scalar = float;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t jobs = 1;
};

struct Session {
  Globals globals;
  std::ostream& out;
  std::shared_ptr<spdlog::logger> log;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  c.train.seed = c.seed;
  c.pretrain.seed = mix_keys(c.seed, hash_name("pretrain"));
  return c;
}

std::uint64_t model_seed(const RunConfig& c) { return mix_keys(c.seed, hash_name("model")); }

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::vector<Sample> load_split(const RunConfig& c, const fs::path& data_dir, Split split, std::size_t jobs,
                               spdlog::logger& log) {
  const fs::path file = data_dir / (std::string(to_string(split)) + ".jsonl");
  if (fs::exists(file)) {
    log.info("reading {}", file.string());
    return read_corpus(file);
  }
  const std::size_t n = split == Split::Train ? c.train_samples : split == Split::Dev ? c.dev_samples : c.test_samples;
  log.info("{} not found; generating {} {} samples from the config", file.string(), n, to_string(split));
  return generate_corpus(c.task, n, split, jobs);
}

// The TaskSpec a corpus was generated with: the spec.json sidecar when there
// is one, the config's otherwise.
TaskSpec corpus_task(const RunConfig& c, const fs::path& corpus_file) {
  const fs::path sidecar = corpus_file.parent_path() / "spec.json";
  TaskSpec task = c.task;
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("task")) throw ConfigError(sidecar.string() + " is not a corpus spec");
    overlay(j["task"], task);
  }
  return task;
}

// gen-data ------------------------------------------------------------------

struct GenDataOptions {
  std::optional<std::size_t> train_samples, dev_samples, test_samples, samples_per_token, vocab;
  std::optional<std::uint64_t> task_seed;
  std::optional<double> noise;
};

int cmd_gen_data(Session& s, const GenDataOptions& o) {
  RunConfig c = resolve_config(s.globals);
  if (o.train_samples) c.train_samples = *o.train_samples;
  if (o.dev_samples) c.dev_samples = *o.dev_samples;
  if (o.test_samples) c.test_samples = *o.test_samples;
  if (o.samples_per_token) c.task.samples_per_token = *o.samples_per_token;
  if (o.vocab) c.task.source_vocab = *o.vocab;
  if (o.task_seed) c.task.seed = *o.task_seed;
  if (o.noise) c.task.noise_std = *o.noise;
  c.validate();

  const fs::path dir = ensure_dir(s.globals.out);
  const std::pair<Split, std::size_t> splits[] = {
      {Split::Train, c.train_samples}, {Split::Dev, c.dev_samples}, {Split::Test, c.test_samples}};
  nlohmann::json sidecar;
  sidecar["task"] = c.task;
  for (const auto& [split, n] : splits) {
    const auto corpus = generate_corpus(c.task, n, split, s.globals.jobs);
    const fs::path file = dir / (std::string(to_string(split)) + ".jsonl");
    write_corpus(file, corpus);
    sidecar["samples"][to_string(split)] = n;
    s.out << fmt::format("wrote {} ({} samples)\n", file.string(), n);
  }
  write_text(dir / "spec.json", sidecar.dump(2) + "\n");
  return kOk;
}

// train ---------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::optional<std::string> mode, freeze, resume;
  std::optional<std::size_t> steps, batch, accumulation, pretrain_steps;
  std::optional<double> lr, dropout, smoothing;
  bool inject_nan = false;
};

int cmd_train(Session& s, const TrainOptions& o) {
  RunConfig c = resolve_config(s.globals);
  if (o.mode) c.model.connector.mode = connector_mode_from_string(*o.mode);
  if (o.freeze) c.strategy = freeze_strategy_from_string(*o.freeze);
  if (o.steps) c.schedule.total_steps = *o.steps;
  if (o.batch) c.train.batch_size = *o.batch;
  if (o.accumulation) c.train.accumulation = *o.accumulation;
  if (o.pretrain_steps) c.pretrain.steps = *o.pretrain_steps;
  if (o.lr) c.schedule.base_lr = *o.lr;
  if (o.dropout) c.train.dropout = *o.dropout;
  if (o.smoothing) c.train.label_smoothing = *o.smoothing;
  if (c.preset != ModelPreset::Desk) throw ConfigError("the paper-shape preset is for parameter counting only");
  c.validate();

  const fs::path dir = ensure_dir(s.globals.out);
  save_run_config(dir / "run_config.json", c);
  const auto corpus = load_split(c, o.data.empty() ? fs::path(c.data_dir) : fs::path(o.data), Split::Train,
                                 s.globals.jobs, *s.log);
  if (corpus.empty()) throw ConfigError("training corpus is empty");

  std::optional<Checkpoint<Scalar>> resume;
  if (o.resume) resume = load_checkpoint<Scalar>(*o.resume);
  SpeechTranslator<Scalar> model = resume ? resume->build_model() : SpeechTranslator<Scalar>(c.model, model_seed(c));
  if (o.inject_nan) {
    Tensor<Scalar> embedding = model.params().get("decoder.embedding");  // shares storage
    embedding[0] = std::numeric_limits<Scalar>::quiet_NaN();
  }

  if (!resume && c.pretrain.steps > 0) {
    s.log->info("denoising warm-up of the encoder for {} steps", c.pretrain.steps);
    const auto losses = pretrain_encoder_denoising(model, corpus, c.pretrain);
    s.log->info("warm-up loss {:.4f} -> {:.4f}", losses.front(), losses.back());
  }

  Trainer<Scalar> trainer(model, corpus, c.train, c.strategy, c.schedule);
  if (resume) resume->restore_into(trainer);
  const auto logs = trainer.run_until(c.schedule.total_steps, [&](const StepLog& l) {
    if (l.step % 50 == 0) s.log->info("step {} loss {:.4f} lr {:.3g} |g| {:.3f}", l.step, l.loss, l.lr, l.grad_norm);
  });
  write_train_log(dir / "train_log.csv", logs);
  save_checkpoint(dir / "checkpoint", trainer, resume ? resume->model_seed : model_seed(c));
  s.out << fmt::format("trained {} steps ({} mode, {} strategy)\n", trainer.step_index(),
                       to_string(c.model.connector.mode), to_string(c.strategy));
  if (!logs.empty()) s.out << fmt::format("final loss {:.6f}\n", logs.back().loss);
  s.out << fmt::format("checkpoint {}\n", (dir / "checkpoint").string());
  return kOk;
}

// eval ----------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint, corpus;
  std::optional<std::size_t> beam, max_len;
  bool oracle = false;
};

int cmd_eval(Session& s, const EvalOptions& o) {
  const RunConfig c = resolve_config(s.globals);
  const fs::path corpus_file = o.corpus.empty() ? fs::path(c.data_dir) / "test.jsonl" : fs::path(o.corpus);
  std::vector<Sample> corpus;
  if (fs::exists(corpus_file)) {
    corpus = read_corpus(corpus_file);
  } else if (o.corpus.empty()) {
    s.log->info("{} not found; generating the test split from the config", corpus_file.string());
    corpus = generate_corpus(c.task, c.test_samples, Split::Test, s.globals.jobs);
  } else {
    throw IoError("corpus " + corpus_file.string() + " does not exist");
  }
  if (corpus.empty()) throw ConfigError("evaluation corpus is empty");

  std::vector<BleuRow> rows;
  if (o.oracle) {
    const TaskSpec task = corpus_task(c, corpus_file);
    for (const auto& sample : corpus) {
      if (sample.source.empty()) throw ConfigError("oracle scoring needs latent source ids in the corpus");
    }
    rows = bleu_by_direction(corpus, oracle_hypotheses(task, corpus));
  } else {
    if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --oracle)");
    const auto ck = load_checkpoint<Scalar>(o.checkpoint);
    const auto model = ck.build_model();
    const SearchMode mode = o.beam && *o.beam > 1 ? SearchMode::beam(*o.beam) : SearchMode::greedy();
    rows = evaluate_bleu(model, corpus, o.max_len.value_or(c.max_decode_len), mode, s.globals.jobs).rows;
  }
  const fs::path dir = ensure_dir(s.globals.out);
  write_bleu_csv(dir / "bleu.csv", rows);
  s.out << "direction,bleu,n_sentences\n";
  for (const auto& r : rows) s.out << fmt::format("{},{:.2f},{}\n", r.direction, r.bleu, r.n_sentences);
  return kOk;
}

// gradcheck -----------------------------------------------------------------

struct GradCheckCliOptions {
  std::vector<std::string> freeze;
  std::size_t coords = 3;
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t samples = 2;
  bool inject_fault = false;
};

int cmd_gradcheck(Session& s, const GradCheckCliOptions& o) {
  RunConfig c = resolve_config(s.globals);
  if (c.preset != ModelPreset::Desk) throw ConfigError("gradcheck runs on the desk preset only");
  c.validate();
  std::vector<FreezeStrategy> strategies;
  for (const auto& name : o.freeze) {
    if (name == "all") {
      strategies.assign(std::begin(kAllFreezeStrategies), std::end(kAllFreezeStrategies));
    } else {
      strategies.push_back(freeze_strategy_from_string(name));
    }
  }
  if (strategies.empty()) strategies.assign(std::begin(kAllFreezeStrategies), std::end(kAllFreezeStrategies));

  GradCheckOptions opts;
  opts.step = o.step;
  opts.tolerance = o.tolerance;
  opts.max_coords_per_tensor = o.coords;
  opts.seed = c.seed;

  testing::set_layer_weight_grad_fault(o.inject_fault);
  std::vector<StrategyGradCheck> results;
  try {
    results = model_gradcheck(c.model, c.task, strategies, opts, model_seed(c), o.samples, c.train.label_smoothing);
  } catch (...) {
    testing::set_layer_weight_grad_fault(false);
    throw;
  }
  testing::set_layer_weight_grad_fault(false);

  const fs::path dir = ensure_dir(s.globals.out);
  CsvTable table{{"strategy", "parameter", "checked", "nonsmooth", "max_rel_error", "analytic", "numeric", "passed"}, {}};
  bool all_passed = true;
  double worst = 0.0;
  for (const auto& r : results) {
    for (const auto& e : r.report.entries) {
      table.rows.push_back({to_string(r.strategy), e.name, std::to_string(e.checked), std::to_string(e.nonsmooth),
                            format_number(e.max_rel_error), format_number(e.worst_analytic),
                            format_number(e.worst_numeric), e.passed ? "1" : "0"});
      if (!e.passed) s.log->error("{} / {}: max relative error {:.3e}", to_string(r.strategy), e.name, e.max_rel_error);
    }
    worst = std::max(worst, r.report.max_rel_error);
    all_passed = all_passed && r.report.passed();
    s.out << fmt::format("{}: {} trainable tensors, max rel err {:.3e} {}\n", to_string(r.strategy),
                         r.report.entries.size(), r.report.max_rel_error, r.report.passed() ? "PASS" : "FAIL");
  }
  write_csv(dir / "gradcheck.csv", table);
  s.out << fmt::format("overall max rel err {:.3e} (tolerance {:.1e}): {}\n", worst, o.tolerance,
                       all_passed ? "PASS" : "FAIL");
  return all_passed ? kOk : kCheckFailed;
}

// count-params --------------------------------------------------------------

struct CountOptions {
  std::optional<std::string> preset, mode;
};

int cmd_count_params(Session& s, const CountOptions& o) {
  RunConfig c = resolve_config(s.globals);
  if (o.preset) {
    c.preset = model_preset_from_string(*o.preset);
    c.model = preset_model(c.preset);
  }
  if (o.mode) c.model.connector.mode = connector_mode_from_string(*o.mode);
  c.model.validate();
  const auto report = count_params(c.model);
  const auto& enc = c.model.encoder;
  const fs::path dir = ensure_dir(s.globals.out);
  write_params_csv(dir / "params.csv", report);

  s.out << fmt::format("preset {} ({} connector)\n", to_string(c.preset), to_string(c.model.connector.mode));
  s.out << fmt::format("{:<14}{:>14}", "component", "total");
  for (auto st : kAllFreezeStrategies) s.out << fmt::format("{:>19}", std::string("trainable/") + to_string(st));
  s.out << '\n';
  auto print = [&](const ComponentCount& row) {
    s.out << fmt::format("{:<14}{:>14}", row.component, row.total);
    for (const auto& st : row.strategies) s.out << fmt::format("{:>19}", st.trainable);
    s.out << '\n';
  };
  for (const auto& row : report.components) print(row);
  print(report.totals);
  s.out << fmt::format("connector delta (inter - final): {} = L + 2d with L={}, d={}\n", connector_delta(c.model),
                       enc.total_layers(), enc.dim);
  s.out << fmt::format("one encoder block (d={}, f={}): {}\n", enc.dim, enc.ffn_dim,
                       transformer_block_params(enc.dim, enc.ffn_dim));
  return kOk;
}

// analyze -------------------------------------------------------------------

struct AnalyzeOptions {
  std::vector<std::string> checkpoints, labels, bleu;
};

double mean_bleu(const fs::path& csv) {
  const auto t = read_csv(csv);
  if (t.rows.empty()) throw ConfigError(csv.string() + " has no BLEU rows");
  const std::size_t col = t.column("bleu");
  double sum = 0.0;
  for (const auto& r : t.rows) sum += std::stod(r[col]);
  return sum / static_cast<double>(t.rows.size());
}

int cmd_analyze(Session& s, const AnalyzeOptions& o) {
  if (o.checkpoints.empty()) throw ConfigError("analyze needs at least one checkpoint");
  if (!o.labels.empty() && o.labels.size() != o.checkpoints.size()) {
    throw ConfigError("--labels needs one label per checkpoint");
  }
  if (!o.bleu.empty() && o.bleu.size() != o.checkpoints.size()) {
    throw ConfigError("--bleu needs one BLEU CSV per checkpoint");
  }
  FigureInputs inputs;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i) {
    const std::string label = o.labels.empty() ? fs::path(o.checkpoints[i]).filename().string() : o.labels[i];
    const auto ck = load_checkpoint<Scalar>(o.checkpoints[i]);
    if (i == 0) inputs.params = count_params(ck.model_config);
    if (!o.bleu.empty()) {
      inputs.param_bleu.push_back({label, layout_numel(model_layout(ck.model_config)), mean_bleu(o.bleu[i])});
    }
    const auto model = ck.build_model();
    if (model.layer_weights() == nullptr) {
      s.log->warn("{} uses the final-layer connector; no layer weights to report", label);
      continue;
    }
    inputs.weights.push_back(make_weight_report(label, model));
  }
  const auto result = emit_figures(inputs, s.globals.out);
  for (const auto& f : result.files) s.out << "wrote " << f.string() << '\n';
  for (std::size_t i = 0; i < result.cosine.size(); ++i) {
    s.out << fmt::format("cosine({}, {}) = {:.6f}\n", inputs.weights[i + 1].label, inputs.weights[0].label,
                         result.cosine[i]);
  }
  if (inputs.params) {
    const auto& first = load_checkpoint<Scalar>(o.checkpoints.front()).model_config;
    s.out << fmt::format("connector delta (inter - final): {}\n", connector_delta(first));
  }
  return kOk;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("interconnect", sink);
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("INTERCONNECT_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    logger->set_level(spdlog::level::err);
  } else if (level == "info") {
    logger->set_level(spdlog::level::info);
  } else if (level == "debug") {
    logger->set_level(spdlog::level::debug);
  } else {
    throw ConfigError("INTERCONNECT_LOG must be error, info or debug (got '" + level + "')");
  }
  return logger;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::shared_ptr<spdlog::logger> log;
  try {
    log = make_logger(err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  CLI::App app{"Inter-connection speech translation toolkit", "interconnect"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads for data generation and evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic train/dev/test corpora");
  gen_cmd->add_option("--train-samples", gen.train_samples);
  gen_cmd->add_option("--dev-samples", gen.dev_samples);
  gen_cmd->add_option("--test-samples", gen.test_samples);
  gen_cmd->add_option("--samples-per-token", gen.samples_per_token);
  gen_cmd->add_option("--vocab", gen.vocab, "Source vocabulary size");
  gen_cmd->add_option("--task-seed", gen.task_seed);
  gen_cmd->add_option("--noise", gen.noise, "Waveform noise stddev");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint plus log");
  train_cmd->add_option("--data", train.data, "Corpus directory (default: config data_dir)");
  train_cmd->add_option("--mode", train.mode, "Connector: final | inter");
  train_cmd->add_option("--freeze", train.freeze, "Strategy: encoder | lna | full");
  train_cmd->add_option("--steps", train.steps, "Total optimizer steps");
  train_cmd->add_option("--lr", train.lr, "Base learning rate");
  train_cmd->add_option("--batch", train.batch, "Sentences per micro-batch");
  train_cmd->add_option("--accum", train.accumulation, "Micro-batches per step");
  train_cmd->add_option("--pretrain-steps", train.pretrain_steps, "Denoising warm-up steps for the encoder");
  train_cmd->add_option("--dropout", train.dropout);
  train_cmd->add_option("--label-smoothing", train.smoothing);
  train_cmd->add_option("--resume", train.resume, "Checkpoint directory to resume from");
  train_cmd->add_flag("--inject-nan", train.inject_nan)->group("");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Decode a corpus and report BLEU per direction");
  eval_cmd->add_option("--checkpoint", eval.checkpoint);
  eval_cmd->add_option("--corpus", eval.corpus, "JSONL corpus (default: <data_dir>/test.jsonl)");
  eval_cmd->add_option("--beam", eval.beam, "Beam size (1 = greedy)");
  eval_cmd->add_option("--max-len", eval.max_len, "Maximum decoded tokens");
  eval_cmd->add_flag("--oracle", eval.oracle, "Score the direction rules applied to the latent source");

  GradCheckCliOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every trainable parameter");
  gc_cmd->add_option("--freeze", gc.freeze, "Strategies to check (repeatable; default all)");
  gc_cmd->add_option("--coords", gc.coords, "Sampled coordinates per tensor (0 = all)")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance)->capture_default_str();
  gc_cmd->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
  gc_cmd->add_option("--samples", gc.samples, "Sentences in the checked batch")->capture_default_str();
  gc_cmd->add_flag("--inject-grad-fault", gc.inject_fault)->group("");

  CountOptions count;
  auto* count_cmd = app.add_subcommand("count-params", "Exact parameter accounting per component and strategy");
  count_cmd->add_option("--preset", count.preset, "desk | paper-shape");
  count_cmd->add_option("--mode", count.mode, "Connector: final | inter");

  AnalyzeOptions analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Layer-weight figures, diffs, cosine and parameter tables");
  analyze_cmd->add_option("checkpoints", analyze.checkpoints, "Checkpoint directories; the first is the reference")
      ->required();
  analyze_cmd->add_option("--labels", analyze.labels);
  analyze_cmd->add_option("--bleu", analyze.bleu, "BLEU CSV per checkpoint for the size/BLEU figure");

  std::vector<std::string> argv_storage{"interconnect"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kConfigError;
  }

  Session session{g, out, log};
  try {
    if (*gen_cmd) return cmd_gen_data(session, gen);
    if (*train_cmd) return cmd_train(session, train);
    if (*eval_cmd) return cmd_eval(session, eval);
    if (*gc_cmd) return cmd_gradcheck(session, gc);
    if (*count_cmd) return cmd_count_params(session, count);
    if (*analyze_cmd) return cmd_analyze(session, analyze);
  } catch (const NumericError& e) {
    log->error("{}", e.what());
    return kDiverged;
  } catch (const ConfigError& e) {
    log->error("configuration error: {}", e.what());
    return kConfigError;
  } catch (const IoError& e) {
    log->error("{}", e.what());
    return kConfigError;
  } catch (const CheckpointError& e) {
    log->error("checkpoint ({}): {}", to_string(e.kind()), e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return kCheckFailed;
  }
  return kConfigError;
}

}  // namespace interconnect::cli
