#include "kws/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "kws/checkpoint.hpp"
#include "kws/dataset.hpp"
#include "kws/gradcheck.hpp"
#include "kws/run_config.hpp"
#include "kws/toygen.hpp"
#include "kws/trainer.hpp"

namespace kws::cli {
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& workspace, const fs::path& p) { return p.is_absolute() ? p : workspace / p; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

// Config file, then dedicated flags, then --set overrides.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;  // key -> flag value
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* sub) {
    sub->add_option("--config", file, "key=value run configuration file");
    sub->add_option("--set", sets, "Override one config key (key=value); repeatable");
  }

  void flag(CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    const RunConfig defaults;
    auto* opt = sub->add_option(name, values[key], help);
    opt->default_str(run_config_get(defaults, key));
    options[key] = opt;
  }

  RunConfig resolve(const fs::path& workspace) const {
    RunConfig c = file.empty() ? RunConfig{} : load_run_config(cli::resolve(workspace, file));
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) run_config_set(c, key, values.at(key));
    }
    for (const auto& s : sets) run_config_assign(c, s);
    c.validate();
    return c;
  }
};

LabelMap workspace_labels(const fs::path& ws) {
  std::ifstream in(ws / "labels.txt");
  if (!in) return LabelMap{};
  std::vector<std::string> words;
  std::string w;
  while (std::getline(in, w)) {
    if (!w.empty()) words.push_back(w);
  }
  return LabelMap(words);
}

Dataset workspace_manifest(const fs::path& ws) {
  const auto path = ws / "manifest.tsv";
  if (!fs::exists(path)) throw DataError("no manifest at " + path.string() + "; run `prepare` first");
  return read_manifest(path, workspace_labels(ws));
}

std::vector<Utterance> split_audio(const Dataset& ds, Split s) {
  std::vector<Utterance> out;
  for (const auto* r : ds.in_split(s)) out.push_back({r->id, load_record_audio(*r)});
  return out;
}

std::vector<LabeledExample> features_of(const fs::path& ws, Split s) {
  const auto stem = ws / "features" / split_name(s);
  if (!fs::exists(fs::path(stem).concat(".kws"))) {
    throw DataError("no feature archive for split " + std::string(split_name(s)) + " under " + ws.string());
  }
  return read_feature_archive(stem);
}

std::vector<FeaturePair> pairs_for(const std::vector<Utterance>& utts, const RunConfig& c) {
  std::vector<FeaturePair> out;
  for (const auto& u : utts) {
    auto rng = pair_rng(c.train.seed, u.id);
    out.push_back(make_pair(u.audio, c.augment, rng, c.frontend));
  }
  return out;
}

class MetricsLog {
 public:
  MetricsLog(const fs::path& path, std::ostream& err, std::size_t total)
      : out_(path, std::ios::binary), err_(err), every_(std::max<std::size_t>(1, total / 20)) {
    if (!out_) throw DataError("cannot write " + path.string());
    write_log_header(out_);
  }

  void operator()(const StepLog& row) {
    write_log_row(out_, row);
    out_.flush();
    if (row.step % every_ == 0) {
      err_ << "step " << row.step << " l_ce=" << row.loss.l_ce << " l_ul=" << row.loss.l_ul << " ("
           << std::lround(row.wall_ms) << " ms)\n";
    }
  }

 private:
  std::ofstream out_;
  std::ostream& err_;
  std::size_t every_;
};

// ---- subcommands ----

struct ToygenArgs {
  std::string out, dir = "corpus", words = "yes,no,up,down";
  std::size_t clips_per_word = 50, noise_files = 2;
  double noise_seconds = 5.0;
  std::uint64_t seed = 0;
};

int cmd_toygen(const ToygenArgs& a, std::ostream& out) {
  ToyCorpusSpec spec;
  spec.words = split_list(a.words);
  spec.clips_per_word = a.clips_per_word;
  spec.noise_files = a.noise_files;
  spec.noise_seconds = a.noise_seconds;
  spec.seed = a.seed;
  const auto root = resolve(a.out, a.dir);
  const auto s = generate_toy_corpus(root, spec);
  out << "wrote " << s.clips << " clips and " << s.noise_files << " noise files to " << root.string() << "\n";
  return 0;
}

struct PrepareArgs {
  std::string out, data_root, noise_root, words;
  bool no_corrupt = false;
  std::uint64_t seed = 0;
  double snr_min = 0.0, snr_max = 20.0, silence = 0.1;
  ConfigFlags config;
};

int cmd_prepare(const PrepareArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path ws = a.out;
  const auto cfg = a.config.resolve(ws);
  const LabelMap labels = a.words.empty() ? LabelMap{} : LabelMap(split_list(a.words));
  ScanOptions scan;
  scan.seed = a.seed;
  scan.silence_per_labeled = a.silence;
  auto ds = scan_dataset(resolve(ws, a.data_root), labels, scan);

  std::vector<AudioBuffer> noises;
  if (!a.no_corrupt) {
    if (a.noise_root.empty()) {
      throw DataError("noise corruption is enabled but no --noise-root was given (pass --no-corrupt to skip it)");
    }
    noises = load_noise_dir(resolve(ws, a.noise_root));
  }
  const CorruptOptions corrupt_opts{a.seed, a.snr_min, a.snr_max};

  std::map<Split, std::vector<LabeledExample>> archives;
  Dataset materialized;
  materialized.labels = labels;
  std::size_t clamped = 0;
  for (const auto& r : ds.records) {
    auto audio = load_record_audio(r);
    if (!noises.empty() && r.label != labels.silence_id()) audio = corrupt(audio, r.id, noises, corrupt_opts);
    const auto wav = encode_wav(audio);
    clamped += wav.clamped;
    const fs::path rel = fs::path("audio") / (r.id + ".wav");
    fs::create_directories((ws / rel).parent_path());
    std::ofstream f(ws / rel, std::ios::binary);
    f.write(reinterpret_cast<const char*>(wav.bytes.data()), static_cast<std::streamsize>(wav.bytes.size()));
    if (!f) throw DataError("cannot write " + (ws / rel).string());
    // Features come from the stored PCM so later stages see identical input.
    const auto stored = read_wav(wav.bytes);
    archives[r.split].push_back({r.id, canvas_features(stored, cfg.augment, cfg.frontend), r.label});
    materialized.records.push_back({r.id, rel, std::nullopt, r.label, r.split});
  }
  fs::create_directories(ws / "features");
  for (auto s : {Split::train, Split::dev, Split::eval}) write_feature_archive(ws / "features" / split_name(s), archives[s]);
  write_manifest(ws / "manifest.tsv", materialized);
  std::string words;
  for (const auto& w : labels.words()) words += w + "\n";
  write_text(ws / "labels.txt", words);
  write_text(ws / "prepare.config", serialize_run_config(cfg));

  const auto counts = materialized.split_counts();
  out << "records=" << materialized.records.size() << " train=" << counts[0] << " dev=" << counts[1]
      << " eval=" << counts[2] << "\n";
  if (clamped) err << "clamped " << clamped << " samples while writing corrupted audio\n";
  return 0;
}

struct AugmentArgs {
  std::string in, out;
  double speed = 1.0, volume = 1.0;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  const auto audio = read_wav_file(a.in);
  const auto y = volume_perturb(speed_perturb(audio, a.speed), a.volume);
  const auto clamped = write_wav_file(a.out, y);
  out << "wrote " << y.size() << " samples (" << y.seconds() << " s) to " << a.out << "\n";
  if (clamped) err << "clamped " << clamped << " samples to [-1, 1]\n";
  return 0;
}

struct TrainArgs {
  std::string out, run, from, unlabeled_root, steps_list = "0,5000,10000,20000,30000";
  std::optional<std::size_t> finetune_steps;
  bool track_train = false;
  ConfigFlags config;
};

std::vector<Utterance> pretrain_corpus(const TrainArgs& a, const fs::path& ws, std::ostream& err) {
  if (!a.unlabeled_root.empty()) {
    const auto corpus = segment_unlabeled(resolve(ws, a.unlabeled_root));
    if (corpus.skipped_files) err << "skipped " << corpus.skipped_files << " files shorter than one second\n";
    std::vector<Utterance> out;
    for (const auto& s : corpus.segments) out.push_back({s.id(), load_segment(s)});
    return out;
  }
  return split_audio(workspace_manifest(ws), Split::train);
}

int cmd_pretrain(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path ws = a.out;
  auto cfg = a.config.resolve(ws);
  cfg.train.stage = Stage::pretrain;
  const auto run_dir = ws / a.run;
  fs::create_directories(run_dir);
  write_text(run_dir / "config.txt", serialize_run_config(cfg));

  const auto corpus = pretrain_corpus(a, ws, err);
  std::vector<FeaturePair> held_out;
  if (a.unlabeled_root.empty() && cfg.train.objective == Objective::proposed) {
    held_out = pairs_for(split_audio(workspace_manifest(ws), Split::dev), cfg);
  }

  MetricsLog log(run_dir / "metrics.tsv", err, cfg.train.steps);
  std::optional<KwsParams> initial;
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& row) { log(row); };
  hooks.on_snapshot = [&](std::size_t step, const KwsParams& p) {
    if (step == 0) initial = p.clone();
  };
  hooks.checkpoint_dir = run_dir / "checkpoints";
  const auto result = pretrain(cfg.train, cfg.model, corpus, cfg.augment, cfg.frontend, hooks);
  save_checkpoint(result.checkpoint, run_dir / "checkpoint.kws");

  std::ostringstream summary;
  summary << std::setprecision(9) << "objective\t" << objective_name(cfg.train.objective) << "\nsteps\t"
          << result.checkpoint.step << "\ninitial_loss\t" << result.initial_loss << "\nfinal_loss\t"
          << result.final_loss << "\nfinal_ebn_std\t" << result.final_ebn_std << "\n";
  if (!held_out.empty()) {
    summary << "heldout_distance_before\t" << mean_pair_distance(*initial, held_out) << "\nheldout_distance_after\t"
            << mean_pair_distance(result.checkpoint.params, held_out) << "\n";
  }
  write_text(run_dir / "summary.tsv", summary.str());
  out << summary.str();
  return 0;
}

int cmd_finetune(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path ws = a.out;
  auto cfg = a.config.resolve(ws);
  if (a.track_train) cfg.train.track_train_accuracy = true;
  KwsParams start;
  if (a.from.empty()) {
    cfg.train.stage = Stage::supervised;
    start = initial_params(cfg.model, cfg.train.seed, Heads::classify);
  } else {
    cfg.train.stage = Stage::finetune;
    const auto ckpt = load_checkpoint(resolve(ws, a.from), cfg.model);
    start = finetune_start(ckpt.params, cfg.train.seed);
  }
  const auto run_dir = ws / a.run;
  fs::create_directories(run_dir);
  write_text(run_dir / "config.txt", serialize_run_config(cfg));

  const auto train = features_of(ws, Split::train);
  std::vector<LabeledExample> dev;
  if (fs::exists(ws / "features" / "dev.kws")) dev = features_of(ws, Split::dev);

  MetricsLog log(run_dir / "metrics.tsv", err, cfg.train.steps);
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& row) { log(row); };
  hooks.checkpoint_dir = run_dir / "checkpoints";
  const auto result = train_supervised(cfg.train, std::move(start), train, dev.empty() ? nullptr : &dev, hooks);
  save_checkpoint(result.checkpoint, run_dir / "checkpoint.kws");

  std::ofstream evals(run_dir / "evals.tsv", std::ios::binary);
  evals << "step\ttrain_accuracy\tdev_accuracy\n";
  for (const auto& e : result.evals) {
    evals << e.step << '\t' << (e.train_accuracy ? std::to_string(*e.train_accuracy) : "NA") << '\t'
          << (e.dev_accuracy ? std::to_string(*e.dev_accuracy) : "NA") << '\n';
  }
  out << "stage=" << stage_name(cfg.train.stage) << " steps=" << result.steps_run;
  if (!result.evals.empty()) {
    const auto& last = result.evals.back();
    if (last.dev_accuracy) out << " dev_accuracy=" << *last.dev_accuracy;
    if (last.train_accuracy) out << " train_accuracy=" << *last.train_accuracy;
  }
  out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string out, ckpt = "finetune/checkpoint.kws", split = "eval";
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path ws = a.out;
  const auto split = parse_split(a.split);
  const auto ckpt_path = resolve(ws, a.ckpt);
  const auto ckpt = load_checkpoint(ckpt_path);
  if (!ckpt.params.project) throw DataError(ckpt_path.string() + " has no project head; fine-tune it first");
  const auto m = evaluate(ckpt.params, features_of(ws, split));
  const auto labels = workspace_labels(ws);
  out << "accuracy=" << std::fixed << std::setprecision(2) << 100.0 * m.accuracy() << "\n";
  err << m.table(labels);
  std::ofstream conf(ckpt_path.parent_path() / ("confusion_" + a.split + ".tsv"), std::ios::binary);
  conf << "truth\\pred";
  for (std::size_t j = 0; j < m.n_classes(); ++j) conf << '\t' << labels.name(j);
  conf << '\n';
  for (std::size_t i = 0; i < m.n_classes(); ++i) {
    conf << labels.name(i);
    for (std::size_t j = 0; j < m.n_classes(); ++j) conf << '\t' << m.count(i, j);
    conf << '\n';
  }
  return 0;
}

int cmd_sweep(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path ws = a.out;
  auto cfg = a.config.resolve(ws);
  std::vector<std::size_t> steps;
  for (const auto& s : split_list(a.steps_list)) {
    try {
      steps.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ParameterError("bad pretrain step count '" + s + "'");
    }
  }
  TrainConfig pre = cfg.train;
  pre.stage = Stage::pretrain;
  TrainConfig fine = cfg.train;
  fine.stage = Stage::finetune;
  if (a.finetune_steps) fine.steps = *a.finetune_steps;

  const auto run_dir = ws / a.run;
  fs::create_directories(run_dir);
  write_text(run_dir / "config.txt", serialize_run_config(cfg));
  const auto corpus = pretrain_corpus(a, ws, err);
  const auto rows = sweep_pretrain_steps(pre, fine, cfg.model, steps, corpus, features_of(ws, Split::train),
                                         features_of(ws, Split::dev), cfg.augment, cfg.frontend);
  std::ostringstream report;
  write_sweep_report(report, rows);
  write_text(run_dir / "report.tsv", report.str());
  out << report.str();
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t shapes = 5;
  bool no_full_size = false;
  double tolerance = 1e-3;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  GradSuiteOptions opts;
  opts.seed = a.seed;
  opts.shapes_per_case = a.shapes;
  opts.full_size = !a.no_full_size;
  opts.check.tolerance = a.tolerance;
  std::size_t failed = 0;
  const auto results = gradient_suite(opts);
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " " << r.shape << " checked=" << r.checked
        << " max_rel_error=" << r.max_rel_error << "\n";
    failed += !r.passed;
  }
  out << results.size() - failed << "/" << results.size() << " gradient checks passed\n";
  return failed ? 1 : 0;
}

void add_train_flags(CLI::App* sub, TrainArgs& a) {
  a.config.attach(sub);
  a.config.flag(sub, "--steps", "train.steps", "Optimizer steps");
  a.config.flag(sub, "--batch-size", "train.batch_size", "Examples per step");
  a.config.flag(sub, "--seed", "train.seed", "Seed for initialization, batching and dropout");
  a.config.flag(sub, "--lr", "train.lr", "Adam learning rate");
  a.config.flag(sub, "--eval-every", "train.eval_every", "Steps between dev evaluations");
  a.config.flag(sub, "--checkpoint-every", "train.checkpoint_every", "Steps between checkpoints");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Keyword spotting with augmentation-based unsupervised pre-training", "kws"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  ToygenArgs toygen;
  auto* c_toygen = app.add_subcommand("toygen", "Synthesize a tone/chirp keyword corpus");
  c_toygen->add_option("--out", toygen.out, "Workspace directory")->required();
  c_toygen->add_option("--dir", toygen.dir, "Corpus directory inside the workspace");
  c_toygen->add_option("--words", toygen.words, "Comma-separated keyword folders");
  c_toygen->add_option("--clips-per-word", toygen.clips_per_word, "Clips per keyword");
  c_toygen->add_option("--noise-files", toygen.noise_files, "Background noise files");
  c_toygen->add_option("--noise-seconds", toygen.noise_seconds, "Length of each noise file");
  c_toygen->add_option("--seed", toygen.seed, "Generator seed");

  PrepareArgs prepare;
  auto* c_prepare = app.add_subcommand("prepare", "Scan, split, corrupt and featurize a word-folder corpus");
  c_prepare->add_option("--out", prepare.out, "Workspace directory")->required();
  c_prepare->add_option("--data-root", prepare.data_root, "Corpus root with one folder per word")->required();
  c_prepare->add_option("--noise-root", prepare.noise_root, "Folder of noise WAVs used for corruption");
  c_prepare->add_flag("--no-corrupt", prepare.no_corrupt, "Skip noise corruption");
  c_prepare->add_option("--seed", prepare.seed, "Seed for silence crops and corruption");
  c_prepare->add_option("--snr-min", prepare.snr_min, "Lowest corruption SNR in dB");
  c_prepare->add_option("--snr-max", prepare.snr_max, "Highest corruption SNR in dB");
  c_prepare->add_option("--silence-fraction", prepare.silence, "Silence clips per labeled clip");
  c_prepare->add_option("--words", prepare.words, "Comma-separated target words (default: the ten commands)");
  prepare.config.attach(c_prepare);

  AugmentArgs augment;
  auto* c_augment = app.add_subcommand("augment", "Write a speed/volume perturbed copy of a WAV");
  c_augment->add_option("--in", augment.in, "Input WAV")->required();
  c_augment->add_option("--out", augment.out, "Output WAV")->required();
  c_augment->add_option("--speed", augment.speed, "Speed ratio (output length is input length / speed)");
  c_augment->add_option("--volume", augment.volume, "Amplitude ratio");

  TrainArgs pre;
  pre.run = "pretrain";
  auto* c_pretrain = app.add_subcommand("pretrain", "Unsupervised pre-training");
  c_pretrain->add_option("--out", pre.out, "Workspace directory")->required();
  c_pretrain->add_option("--run", pre.run, "Run directory inside the workspace");
  c_pretrain->add_option("--unlabeled-root", pre.unlabeled_root,
                         "Long-form WAVs cut into 1 s segments (default: train split audio)");
  add_train_flags(c_pretrain, pre);
  pre.config.flag(c_pretrain, "--objective", "train.objective", "proposed, apc or mpc");

  TrainArgs fine;
  fine.run = "finetune";
  auto* c_finetune = app.add_subcommand("finetune", "Supervised training, optionally from a pre-trained checkpoint");
  c_finetune->add_option("--out", fine.out, "Workspace directory")->required();
  c_finetune->add_option("--run", fine.run, "Run directory inside the workspace");
  c_finetune->add_option("--from", fine.from, "Pre-trained checkpoint (omit to train from scratch)");
  c_finetune->add_flag("--track-train-accuracy", fine.track_train, "Also measure train accuracy at evaluations");
  add_train_flags(c_finetune, fine);

  EvaluateArgs eval;
  auto* c_evaluate = app.add_subcommand("evaluate", "Accuracy and confusion matrix of a checkpoint");
  c_evaluate->add_option("--out", eval.out, "Workspace directory")->required();
  c_evaluate->add_option("--ckpt", eval.ckpt, "Checkpoint to evaluate");
  c_evaluate->add_option("--split", eval.split, "train, dev or eval");

  TrainArgs sweep;
  sweep.run = "sweep";
  auto* c_sweep = app.add_subcommand("sweep", "Fine-tune after several pre-training step counts");
  c_sweep->add_option("--out", sweep.out, "Workspace directory")->required();
  c_sweep->add_option("--run", sweep.run, "Run directory inside the workspace");
  c_sweep->add_option("--pretrain-steps", sweep.steps_list, "Comma-separated pre-training step counts");
  c_sweep->add_option("--finetune-steps", sweep.finetune_steps, "Fine-tuning steps per row (default: --steps)");
  c_sweep->add_option("--unlabeled-root", sweep.unlabeled_root, "Long-form WAVs for pre-training");
  add_train_flags(c_sweep, sweep);
  sweep.config.flag(c_sweep, "--objective", "train.objective", "proposed, apc or mpc");

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operation");
  c_grad->add_option("--seed", grad.seed, "Seed for shapes and values");
  c_grad->add_option("--shapes", grad.shapes, "Random shapes per case");
  c_grad->add_option("--tolerance", grad.tolerance, "Largest accepted relative error");
  c_grad->add_flag("--no-full-size", grad.no_full_size, "Skip the sampled full-size network checks");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_toygen->parsed()) return cmd_toygen(toygen, out);
    if (c_prepare->parsed()) return cmd_prepare(prepare, out, err);
    if (c_augment->parsed()) return cmd_augment(augment, out, err);
    if (c_pretrain->parsed()) return cmd_pretrain(pre, out, err);
    if (c_finetune->parsed()) return cmd_finetune(fine, out, err);
    if (c_evaluate->parsed()) return cmd_evaluate(eval, out, err);
    if (c_sweep->parsed()) return cmd_sweep(sweep, out, err);
    if (c_grad->parsed()) return cmd_gradcheck(grad, out);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace kws::cli
