// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance <work-dir>
//        acceptance --split-dump <file>   (child mode for the cross-process split check)

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kws/augment.hpp"
#include "kws/checkpoint.hpp"
#include "kws/commands.hpp"
#include "kws/dataset.hpp"
#include "kws/gradcheck.hpp"
#include "kws/model.hpp"
#include "kws/objectives.hpp"
#include "kws/tape.hpp"
#include "kws/toygen.hpp"
#include "kws/trainer.hpp"

using namespace kws;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

constexpr std::size_t kSplitIds = 10000;

std::string split_id(std::size_t i) { return "w/spk" + std::to_string(i * 7919 + 13) + "_nohash_0"; }

std::string split_tags() {
  std::string s;
  s.reserve(kSplitIds);
  for (std::size_t i = 0; i < kSplitIds; ++i) s += "tde"[static_cast<int>(split_for(split_id(i)))];
  return s;
}

AudioBuffer sine(double hz, std::size_t n, double amp) {
  AudioBuffer a;
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) a.samples[i] = static_cast<float>(amp * std::sin(2 * M_PI * hz * i / kSampleRate));
  return a;
}

AudioBuffer noise(std::size_t n, std::uint64_t seed, double scale) {
  Rng rng(seed);
  AudioBuffer a;
  a.samples.resize(n);
  for (auto& s : a.samples) s = static_cast<float>(scale * rng.normal());
  return a;
}

std::size_t crossings(const std::vector<float>& s) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < s.size(); ++i) n += (s[i - 1] < 0) != (s[i] < 0);
  return n;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// ---- criteria ----

void gradient_suite_check() {
  const auto t0 = Clock::now();
  const auto results = gradient_suite();
  const double secs = seconds_since(t0);
  std::map<std::string, std::size_t> per_case;
  std::size_t failed = 0;
  double worst = 0;
  for (const auto& r : results) {
    if (r.name.find("(full size)") == std::string::npos) ++per_case[r.name];
    failed += !r.passed;
    worst = std::max(worst, r.max_rel_error);
  }
  std::size_t min_shapes = results.size();
  for (const auto& [name, n] : per_case) min_shapes = std::min(min_shapes, n);
  bool losses = true;
  for (const char* l : {"L_ce", "L_sim", "L_x", "L_ul"}) losses = losses && per_case[l] >= 5;
  report("gradient suite", failed == 0 && min_shapes >= 5 && losses && secs < 60,
         std::to_string(results.size()) + " checks over " + std::to_string(per_case.size()) +
             " cases, min shapes/case " + std::to_string(min_shapes) + ", failed " + std::to_string(failed) +
             ", worst rel err " + fmt(worst) + ", " + fmt(secs, 3) + " s");
}

void shape_chain_check() {
  Rng rng(1);
  const auto p = init_params<float>(ModelConfig{}, rng);
  FeatureMatrix x(98, 40);
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-12, 2));
  const auto t = forward_bottleneck(p, x);
  const bool ok = t.conv_maps[0].shape() == Shape{32, 20, 49} && t.conv_maps[1].shape() == Shape{32, 10, 25} &&
                  t.e_cnn.shape() == Shape{25, 320} && t.e_feat.shape() == Shape{640} &&
                  t.e_bn.shape() == Shape{800} && classify(p, t.e_bn).shape() == Shape{12} &&
                  reconstruct(p, t.e_bn).shape() == Shape{40};
  report("shape chain", ok,
         shape_str(t.conv_maps[0].shape()) + " -> " + shape_str(t.conv_maps[1].shape()) + " -> " +
             shape_str(t.e_cnn.shape()) + " -> " + shape_str(t.e_feat.shape()) + " -> " + shape_str(t.e_bn.shape()) +
             " -> {" + shape_str(classify(p, t.e_bn).shape()) + ", " + shape_str(reconstruct(p, t.e_bn).shape()) + "}");
}

void loss_identity_check() {
  const double ce = ce_loss(Tensor({12}), 0).item();
  const bool ce_ok = std::abs(ce - std::log(12.0)) <= 1e-6;

  Rng init(2);
  const auto p = params_cast<double>(init_params<float>(ModelConfig{}, init));
  Rng rng(3);
  Tensor64 x({98, 40});
  for (auto& v : x.mutable_values()) v = rng.uniform(-12, 2);
  double grad_max = 0, sim = -1;
  {
    Tape64 tape;
    TapeScope<double> scope(tape);
    const auto a = forward_bottleneck(p, x).e_bn;
    const auto b = forward_bottleneck(p, x).e_bn;
    const auto loss = sim_loss(a, b);
    sim = loss.item();
    tape.backward(loss);
  }
  for (const auto& n : p.named())
    if (n.tensor.has_grad())
      for (double g : n.tensor.grad()) grad_max = std::max(grad_max, std::abs(g));

  const LossWeights w;
  double decomp_err = 0;
  for (int i = 0; i < 100; ++i) {
    const double s = rng.uniform(0, 5), l1 = rng.uniform(0, 50), l2 = rng.uniform(0, 50);
    const UnsupervisedTerms<double> t{Tensor64::scalar(s), Tensor64::scalar(l1), Tensor64::scalar(l2)};
    decomp_err = std::max(decomp_err, std::abs(unsup_loss(t, w).item() - (0.9 * s + 0.05 * l1 + 0.05 * l2)));
  }
  const bool ok = ce_ok && sim == 0.0 && decomp_err <= 1e-12 && grad_max <= 1e-6 && w.similarity == 0.9 &&
                  w.recon == 0.05 && w.recon_aug == 0.05;
  report("loss identities", ok,
         "CE(uniform)-ln12=" + fmt(ce - std::log(12.0)) + ", L_sim(identity)=" + fmt(sim) +
             ", max |L_ul - (0.9,0.05,0.05) sum|=" + fmt(decomp_err) + ", max |grad sim(identity)|=" + fmt(grad_max));
}

void augmentation_check() {
  Rng rng(4);
  const auto a = noise(16000, 5, 0.2);
  double rms_err = 0;
  for (int i = 0; i < 50; ++i) {
    const double l = rng.uniform(0.5, 1.5);
    rms_err = std::max(rms_err, std::abs(rms(volume_perturb(a, l).samples) / rms(a.samples) - l));
  }
  double len_err = 0, zcr_err = 0;
  const auto tone = sine(440, 16000, 0.5);
  for (int i = 0; i < 50; ++i) {
    const double l = rng.uniform(0.8, 1.2);
    const auto y = speed_perturb(tone, l);
    len_err = std::max(len_err, std::abs(static_cast<double>(y.size()) - 16000 / l));
    const double rate = static_cast<double>(crossings(y.samples)) / y.size();
    const double base = static_cast<double>(crossings(tone.samples)) / tone.size();
    zcr_err = std::max(zcr_err, std::abs(rate / base - l) / l);
  }
  double shift_err = 0;
  const double floor = std::log(FrontendConfig{}.log_floor);
  for (int i = 0; i < 10; ++i) {
    const double l = rng.uniform(0.5, 1.5);
    const auto pr = make_pair(a, AugmentSpec{}, PairRatios{1.0, l});
    for (std::size_t k = 0; k < pr.original.values().size(); ++k) {
      const double o = pr.original.values()[k], g = pr.augmented.values()[k];
      if (o > floor + std::abs(2 * std::log(l)) + 1e-3 && g > floor + 1e-3)
        shift_err = std::max(shift_err, std::abs(g - o - 2 * std::log(l)));
    }
  }
  report("augmentation properties", rms_err <= 1e-6 && len_err <= 1 && zcr_err <= 0.02 && shift_err <= 1e-4,
         "RMS ratio err " + fmt(rms_err) + ", length err " + fmt(len_err) + " samples, ZCR rel err " + fmt(zcr_err) +
             ", log-mel shift err " + fmt(shift_err));
}

void snr_check() {
  Rng rng(6);
  const auto n = noise(48000, 7, 0.3);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto speech = sine(150 + 37 * i, 16000, rng.uniform(0.05, 0.8));
    const double snr = rng.uniform(0, 20);
    const auto mix = mix_at_snr(speech, n, snr, rng);
    const auto seg = noise_segment(n, mix.noise_offset, speech.size());
    std::vector<float> scaled(seg.size());
    for (std::size_t k = 0; k < seg.size(); ++k) scaled[k] = static_cast<float>(mix.gain * seg[k]);
    worst = std::max(worst, std::abs(10 * std::log10(mean_power(speech.samples) / mean_power(scaled)) - snr));
  }
  report("SNR mixing", worst <= 0.01, "max |recovered - requested| over 100 draws = " + fmt(worst) + " dB");
}

void mpc_check() {
  Rng rng(8);
  std::size_t frames = 0, chosen = 0, zero = 0, swap = 0, same = 0;
  while (frames < 100000) {
    FeatureMatrix x(123, 40);
    const auto m = mpc_mask(x, rng);
    frames += 123;
    chosen += m.plan.chosen();
    for (auto a : m.plan.actions) {
      zero += a == MaskAction::zero;
      swap += a == MaskAction::swap;
      same += a == MaskAction::unchanged;
    }
  }
  const double c = static_cast<double>(chosen) / frames, z = static_cast<double>(zero) / chosen,
               s = static_cast<double>(swap) / chosen, u = static_cast<double>(same) / chosen;
  report("MPC statistics",
         std::abs(c - 0.15) <= 0.01 && std::abs(z - 0.8) <= 0.02 && std::abs(s - 0.1) <= 0.02 && std::abs(u - 0.1) <= 0.02,
         std::to_string(frames) + " frames: chosen " + fmt(c) + ", zero/swap/unchanged " + fmt(z) + "/" + fmt(s) + "/" +
             fmt(u));
}

void split_check(const std::string& self) {
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < kSplitIds; ++i) ++counts[static_cast<int>(split_for(split_id(i)))];
  const auto mine = split_tags();
  const fs::path dump = fs::temp_directory_path() / ("kws_split_" + std::to_string(fnv1a64(self)) + ".txt");
  const std::string cmd = "\"" + self + "\" --split-dump \"" + dump.string() + "\"";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(dump);
  std::string theirs((std::istreambuf_iterator<char>(in)), {});
  fs::remove(dump);
  const double tr = counts[0] / 100.0, dv = counts[1] / 100.0, ev = counts[2] / 100.0;
  const bool ok = rc == 0 && theirs == mine && std::abs(tr - 80) <= 3 && std::abs(dv - 10) <= 3 && std::abs(ev - 10) <= 3;
  report("split determinism", ok,
         "10^4 ids -> " + fmt(tr) + "/" + fmt(dv) + "/" + fmt(ev) + " %, second process " +
             (theirs == mine ? "identical" : "DIFFERENT"));
}

// ---- toy end-to-end ----

struct Toy {
  fs::path ws;
  std::vector<LabeledExample> train, dev;
  std::vector<Utterance> train_audio, dev_audio;
};

Toy build_toy(const fs::path& work) {
  Toy t;
  t.ws = work / "toy";
  fs::remove_all(t.ws);
  std::ostringstream out, err;
  const auto ws = t.ws.string();
  if (cli::run({"toygen", "--out", ws, "--seed", "3"}, out, err) != 0 ||
      cli::run({"prepare", "--out", ws, "--data-root", "corpus", "--noise-root", "corpus/_background_noise_", "--seed", "3"},
               out, err) != 0) {
    throw std::runtime_error("toy workspace setup failed: " + err.str());
  }
  t.train = read_feature_archive(t.ws / "features" / "train");
  t.dev = read_feature_archive(t.ws / "features" / "dev");
  const auto ds = read_manifest(t.ws / "manifest.tsv");
  for (const auto* r : ds.in_split(Split::train)) t.train_audio.push_back({r->id, load_record_audio(*r)});
  for (const auto* r : ds.in_split(Split::dev)) t.dev_audio.push_back({r->id, load_record_audio(*r)});
  std::cout << "toy corpus: " << ds.records.size() << " clips, train " << t.train.size() << ", dev " << t.dev.size()
            << std::endl;
  return t;
}

void supervised_check(const Toy& toy) {
  TrainConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 8;
  cfg.adam.lr = 1e-4;
  cfg.seed = 5;
  cfg.eval_every = 10;
  cfg.checkpoint_every = 100000;
  cfg.track_train_accuracy = true;
  cfg.stop_at_train_accuracy = 0.95;
  const auto t0 = Clock::now();
  const auto res = train_supervised(cfg, initial_params(ModelConfig{}, cfg.seed, Heads::classify), toy.train);
  const double secs = seconds_since(t0);
  const double acc = evaluate(res.checkpoint.params, toy.train).accuracy();
  report("toy supervised training", acc >= 0.95 && res.steps_run <= 300 && secs < 300,
         "train accuracy " + fmt(acc) + " after " + std::to_string(res.steps_run) + " steps in " + fmt(secs, 3) + " s");
}

struct PretrainOutcome {
  Checkpoint checkpoint;
  KwsParams initial;
};

PretrainOutcome pretrain_check(const Toy& toy, const fs::path& work) {
  TrainConfig cfg;
  cfg.stage = Stage::pretrain;
  cfg.steps = 200;
  cfg.batch_size = 8;
  cfg.seed = 5;
  cfg.checkpoint_every = 100000;
  PretrainOutcome out;
  TrainHooks hooks;
  hooks.on_snapshot = [&](std::size_t step, const KwsParams& p) {
    if (step == 0) out.initial = p.clone();
  };
  const auto t0 = Clock::now();
  const auto res = pretrain(cfg, ModelConfig{}, toy.train_audio, {}, {}, hooks);
  const double secs = seconds_since(t0);
  const double ratio = res.final_loss / res.initial_loss;
  report("toy pretraining", ratio < 0.5 && res.final_ebn_std > 1e-3,
         "L_ul " + fmt(res.initial_loss) + " -> " + fmt(res.final_loss) + " (ratio " + fmt(ratio) + "), final E_bn std " +
             fmt(res.final_ebn_std) + ", " + fmt(secs, 3) + " s");

  std::vector<FeaturePair> held_out;
  for (const auto& u : toy.dev_audio) {
    auto rng = pair_rng(cfg.seed + 1000, u.id);
    auto pair = make_pair(u.audio, AugmentSpec{}, rng);
    if (pair.ratios.speed != 1.0 || pair.ratios.volume != 1.0) held_out.push_back(std::move(pair));
  }
  const double before = mean_pair_distance(out.initial, held_out);
  const double after = mean_pair_distance(res.checkpoint.params, held_out);
  report("held-out pair distance", after < before,
         std::to_string(held_out.size()) + " dev pairs: mean sim_loss " + fmt(before) + " before, " + fmt(after) + " after");
  out.checkpoint = res.checkpoint;
  save_checkpoint(out.checkpoint, work / "pretrain.kws");
  return out;
}

void finetune_contract_check(const fs::path& work) {
  const auto loaded = load_checkpoint(work / "pretrain.kws", ModelConfig{});
  const std::uint64_t seed = 9;
  const auto ft = finetune_start(loaded.params, seed);
  std::map<std::string, Tensor> before, after;
  for (const auto& n : loaded.params.named()) before.emplace(n.name, n.tensor);
  for (const auto& n : ft.named()) after.emplace(n.name, n.tensor);
  std::size_t encoder = 0, encoder_equal = 0;
  for (const auto& [name, t] : before) {
    if (name.starts_with("reconstruct") || name.starts_with("project")) continue;
    ++encoder;
    const auto it = after.find(name);
    encoder_equal += it != after.end() && bit_equal(it->second, t);
  }
  const auto fresh = fresh_project_head(ModelConfig{}, seed);
  const bool head_fresh = ft.project && bit_equal(ft.project->weight, fresh.weight) && bit_equal(ft.project->bias, fresh.bias);
  const bool recon_dropped = !ft.reconstruct && after.count("reconstruct.weight") == 0;
  const bool inventory = after.size() == encoder + 2;
  report("fine-tune contract", encoder == encoder_equal && head_fresh && recon_dropped && inventory && !loaded.params.project,
         std::to_string(encoder_equal) + "/" + std::to_string(encoder) + " encoder tensors bit-equal, project head " +
             (head_fresh ? "freshly initialized" : "NOT fresh") + ", reconstruct head " +
             (recon_dropped ? "dropped" : "PRESENT") + ", " + std::to_string(after.size()) + " tensors after load");
}

void checkpoint_check(const Toy& toy, const fs::path& work) {
  auto params = initial_params(ModelConfig{}, 21, Heads::classify | Heads::reconstruct);
  Checkpoint c;
  c.params = params;
  c.step = 7;
  save_checkpoint(c, work / "roundtrip.kws");
  const auto back = load_checkpoint(work / "roundtrip.kws", ModelConfig{});
  bool exact = true;
  for (std::size_t i = 0; i < std::min<std::size_t>(toy.dev.size(), 10); ++i) {
    const auto a = forward_bottleneck(params, toy.dev[i].features).e_bn;
    const auto b = forward_bottleneck(back.params, toy.dev[i].features).e_bn;
    exact = exact && bit_equal(classify(params, a), classify(back.params, b)) &&
            bit_equal(reconstruct(params, a), reconstruct(back.params, b));
  }
  auto bytes = read_file_bytes(work / "roundtrip.kws");
  std::size_t rejected = 0;
  const std::vector<std::size_t> positions{10, bytes.size() / 3, bytes.size() / 2, bytes.size() - 9};
  for (std::size_t pos : positions) {
    auto bad = bytes;
    bad[pos] ^= 0x40;
    {
      std::ofstream f(work / "corrupt.kws", std::ios::binary);
      f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
    }
    try {
      load_checkpoint(work / "corrupt.kws");
    } catch (const LoadError&) {
      ++rejected;
    }
  }
  report("checkpoint round-trip", exact && rejected == positions.size(),
         std::string("forward after reload ") + (exact ? "bit-exact" : "DIFFERS") + ", " + std::to_string(rejected) + "/" +
             std::to_string(positions.size()) + " corrupted files rejected");
}

void sweep_check(const Toy& toy) {
  std::ostringstream out, err;
  const auto t0 = Clock::now();
  const int rc = cli::run({"sweep", "--out", toy.ws.string(), "--pretrain-steps", "0,100,200", "--finetune-steps", "100",
                           "--batch-size", "8", "--lr", "1e-4", "--seed", "5", "--eval-every", "10"},
                          out, err);
  const double secs = seconds_since(t0);
  std::ifstream in(toy.ws / "sweep" / "report.tsv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  report("sweep protocol", rc == 0 && lines.size() == 4, std::to_string(lines.size() ? lines.size() - 1 : 0) +
                                                            " report rows in " + fmt(secs, 3) + " s (trend reported only)");
  for (const auto& l : lines) std::cout << "  | " << l << "\n";
  if (rc != 0) std::cout << err.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 3 && std::string(argv[1]) == "--split-dump") {
    std::ofstream(argv[2]) << split_tags();
    return 0;
  }
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "kws_acceptance";
  fs::create_directories(work);
  const auto t0 = Clock::now();
  try {
    gradient_suite_check();
    shape_chain_check();
    loss_identity_check();
    augmentation_check();
    snr_check();
    mpc_check();
    split_check(fs::absolute(argv[0]).string());
    const auto toy = build_toy(work);
    supervised_check(toy);
    pretrain_check(toy, work);
    finetune_contract_check(work);
    checkpoint_check(toy, work);
    sweep_check(toy);
  } catch (const std::exception& e) {
    report("acceptance run", false, std::string("aborted: ") + e.what());
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << failures << " failing) in " << fmt(seconds_since(t0), 4)
            << " s" << std::endl;
  return failures ? 1 : 0;
}
