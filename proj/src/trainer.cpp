#include "kws/trainer.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>

namespace kws {
namespace o = ops;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void require_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + what + " at step " + std::to_string(step));
  }
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0) return cfg.adam.lr;
  return cfg.adam.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
}

void zero_grads(const std::vector<NamedTensor<float>>& named) {
  for (const auto& p : named) p.tensor.zero_grad();
}

Checkpoint snapshot(const KwsParams& params, Stage stage, std::size_t step, const Adam* adam) {
  Checkpoint c;
  c.stage = stage;
  c.step = step;
  c.params = params.clone();
  if (adam) c.optimizer = OptimizerState{adam->steps(), adam->moments()};
  return c;
}

void save_numbered(const TrainHooks& hooks, const Checkpoint& c) {
  if (!hooks.checkpoint_dir) return;
  std::filesystem::create_directories(*hooks.checkpoint_dir);
  save_checkpoint(c, *hooks.checkpoint_dir / ("step_" + std::to_string(c.step) + ".kws"));
}

// On a numeric abort the optimizer has not touched the parameters, so they are
// the last good state.
[[noreturn]] void abort_numeric(const TrainHooks& hooks, const KwsParams& params, Stage stage, std::size_t step,
                                const Adam& adam, const NumericError& e) {
  if (hooks.checkpoint_dir) {
    std::filesystem::create_directories(*hooks.checkpoint_dir);
    save_checkpoint(snapshot(params, stage, step, &adam), *hooks.checkpoint_dir / "last_good.kws");
  }
  throw NumericError(std::string(e.what()) + " (last good state is from step " + std::to_string(step) + ")");
}

class PlateauDetector {
 public:
  PlateauDetector(std::size_t window, double tol) : window_(window), tol_(tol) {}

  bool push(double loss) {
    if (window_ == 0) return false;
    history_.push_back(loss);
    if (history_.size() < 2 * window_) return false;
    double prev = 0.0, cur = 0.0;
    const auto n = history_.size();
    for (std::size_t i = n - 2 * window_; i < n - window_; ++i) prev += history_[i];
    for (std::size_t i = n - window_; i < n; ++i) cur += history_[i];
    return std::abs(prev) > 0 && (prev - cur) / std::abs(prev) < tol_;
  }

 private:
  std::size_t window_;
  double tol_;
  std::vector<double> history_;
};

struct PairTerms {
  Tensor loss;
  double sim = 0, x = 0, x_aug = 0;
  Tensor e_bn, e_bn_aug;
};

PairTerms proposed_terms(const KwsParams& params, const FeaturePair& pair, const LossWeights& w,
                         const ForwardOptions& opts) {
  const auto x = features_tensor<float>(pair.original);
  const auto x_aug = features_tensor<float>(pair.augmented);
  const auto a = forward_bottleneck(params, x, opts);
  const auto b = forward_bottleneck(params, x_aug, opts);
  UnsupervisedTerms<float> terms{sim_loss(a.e_bn, b.e_bn), recon_loss(x, reconstruct(params, a.e_bn)),
                                 recon_loss(x_aug, reconstruct(params, b.e_bn))};
  PairTerms out{unsup_loss(terms, w), terms.sim.item(), terms.x.item(), terms.x_aug.item(), a.e_bn, b.e_bn};
  return out;
}

Tensor frame_objective(const TrainConfig& cfg, const KwsParams& params, const FeatureMatrix& x, Rng& mask_rng,
                       const ForwardOptions& opts, MaskPlan* plan_out) {
  const auto target = features_tensor<float>(x);
  if (cfg.objective == Objective::apc) {
    const auto e_tran = encode(params, target, opts);
    return apc_loss(target, frame_predictions(params, e_tran, x.frames()), cfg.apc_shift);
  }
  auto masked = mpc_mask(x, mask_rng, cfg.mask);
  const auto e_tran = encode(params, features_tensor<float>(masked.features), opts);
  auto loss = mpc_loss(frame_predictions(params, e_tran, x.frames()), target, masked.plan);
  if (plan_out) *plan_out = std::move(masked.plan);
  return loss;
}

Heads pretrain_heads(Objective o) { return o == Objective::proposed ? Heads::reconstruct : Heads::frame; }

}  // namespace

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::proposed:
      return "proposed";
    case Objective::apc:
      return "apc";
    case Objective::mpc:
      return "mpc";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  if (s == "proposed") return Objective::proposed;
  if (s == "apc") return Objective::apc;
  if (s == "mpc") return Objective::mpc;
  throw ParameterError("unknown objective '" + s + "' (expected proposed, apc or mpc)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ParameterError("batch_size must be at least 1");
  if (eval_every == 0) throw ParameterError("eval_every must be at least 1");
  if (checkpoint_every == 0) throw ParameterError("checkpoint_every must be at least 1");
  if (apc_shift == 0) throw ParameterError("apc_shift must be at least 1");
  if (!(adam.lr > 0)) throw ParameterError("learning rate must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ParameterError("adam betas must lie in [0, 1)");
  }
  if (!(mask.chosen_fraction >= 0 && mask.chosen_fraction <= 1 && mask.zero_fraction >= 0 &&
        mask.swap_fraction >= 0 && mask.zero_fraction + mask.swap_fraction <= 1)) {
    throw ParameterError("mask fractions must lie in [0, 1] with zero + swap <= 1");
  }
  if (!(target_accuracy >= 0 && target_accuracy <= 1)) throw ParameterError("target_accuracy must lie in [0, 1]");
  weights.validate();
}

KwsParams initial_params(const ModelConfig& model, std::uint64_t seed, Heads heads) {
  Rng rng(derive_seed(seed, "init"));
  auto p = init_params<float>(model, rng, Heads::none);
  if (has(heads, Heads::classify)) p.project = fresh_project_head(model, seed);
  if (has(heads, Heads::reconstruct)) {
    Rng r(derive_seed(seed, "head/reconstruct"));
    p.reconstruct = init_head<float>(model, Heads::reconstruct, r);
  }
  if (has(heads, Heads::frame)) {
    Rng r(derive_seed(seed, "head/frame"));
    p.frame_head = init_head<float>(model, Heads::frame, r);
  }
  return p;
}

Dense<float> fresh_project_head(const ModelConfig& model, std::uint64_t seed) {
  Rng r(derive_seed(seed, "head/project"));
  return init_head<float>(model, Heads::classify, r);
}

KwsParams finetune_start(const KwsParams& pretrained, std::uint64_t seed) {
  auto p = pretrained.clone();
  p.reconstruct.reset();
  p.frame_head.reset();
  p.project = fresh_project_head(p.config, seed);
  return p;
}

double corpus_objective(const TrainConfig& cfg, const KwsParams& params, const std::vector<FeaturePair>& pairs,
                        double* ebn_std) {
  if (pairs.empty()) throw DataError("objective over an empty corpus");
  NoTapeScope<float> no_tape;
  double total = 0.0;
  std::vector<float> bn;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (cfg.objective == Objective::proposed) {
      const auto t = proposed_terms(params, pairs[i], cfg.weights, {});
      total += t.loss.item();
      bn.insert(bn.end(), t.e_bn.values().begin(), t.e_bn.values().end());
      bn.insert(bn.end(), t.e_bn_aug.values().begin(), t.e_bn_aug.values().end());
    } else {
      Rng mask_rng(derive_seed(cfg.seed, "mask-eval/" + std::to_string(i)));
      total += frame_objective(cfg, params, pairs[i].original, mask_rng, {}, nullptr).item();
    }
  }
  if (ebn_std) *ebn_std = entry_std(bn);
  return total / static_cast<double>(pairs.size());
}

double mean_pair_distance(const KwsParams& params, const std::vector<FeaturePair>& pairs) {
  if (pairs.empty()) throw DataError("pair distance over an empty set");
  NoTapeScope<float> no_tape;
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto a = forward_bottleneck(params, p.original);
    const auto b = forward_bottleneck(params, p.augmented);
    total += sim_loss(a.e_bn, b.e_bn).item();
  }
  return total / static_cast<double>(pairs.size());
}

PretrainResult pretrain(const TrainConfig& cfg, const ModelConfig& model, const std::vector<Utterance>& corpus,
                        const AugmentSpec& augment, const FrontendConfig& frontend, const TrainHooks& hooks) {
  cfg.validate();
  model.validate();
  if (corpus.empty()) throw DataError("pretraining corpus is empty");
  auto params = initial_params(model, cfg.seed, pretrain_heads(cfg.objective));
  Adam adam(cfg.adam);
  PairBatches batches(corpus, augment, frontend, cfg.batch_size, cfg.seed);

  std::vector<FeaturePair> all;
  all.reserve(batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) all.push_back(batches.pair(i));

  PretrainResult result;
  result.initial_loss = corpus_objective(cfg, params, all, &result.final_ebn_std);
  if (hooks.on_snapshot) hooks.on_snapshot(0, params);

  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  Rng mask_rng(derive_seed(cfg.seed, "mask"));
  const auto named = params.named();
  std::vector<NamedTensor<float>> update(named.begin(), named.end());
  PlateauDetector plateau(cfg.plateau_window, cfg.plateau_tolerance);
  const ForwardOptions train_opts{true, &dropout_rng};

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto t0 = Clock::now();
    const auto batch = batches.next();
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    zero_grads(named);
    StepLog row;
    row.step = step;
    std::vector<float> bn;
    try {
      for (const auto* pair : batch) {
        Tape tape;
        TapeScope<float> scope(tape);
        Tensor loss;
        if (cfg.objective == Objective::proposed) {
          auto t = proposed_terms(params, *pair, cfg.weights, train_opts);
          row.loss.l_sim += t.sim * inv_b;
          row.loss.l_x += t.x * inv_b;
          row.loss.l_x_aug += t.x_aug * inv_b;
          bn.insert(bn.end(), t.e_bn.values().begin(), t.e_bn.values().end());
          bn.insert(bn.end(), t.e_bn_aug.values().begin(), t.e_bn_aug.values().end());
          loss = t.loss;
        } else {
          MaskPlan plan;
          loss = frame_objective(cfg, params, pair->original, mask_rng, train_opts, &plan);
          for (auto a : plan.actions) {
            row.mask_zero += a == MaskAction::zero;
            row.mask_swap += a == MaskAction::swap;
            row.mask_unchanged += a == MaskAction::unchanged;
          }
          row.mask_chosen += plan.chosen();
        }
        require_finite(loss.item(), "pretraining loss", step);
        row.loss.l_ul += loss.item() * inv_b;
        tape.backward(o::scale(loss, inv_b));
      }
      const double lr = lr_at(cfg, step);
      adam.set_lr(lr);
      adam.step(update);
      row.lr = lr;
    } catch (const NumericError& e) {
      abort_numeric(hooks, params, Stage::pretrain, step - 1, adam, e);
    }
    row.ebn_std = entry_std(bn);
    row.wall_ms = ms_since(t0);
    result.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (hooks.on_snapshot) hooks.on_snapshot(step, params);
    if (step % cfg.checkpoint_every == 0) save_numbered(hooks, snapshot(params, Stage::pretrain, step, &adam));
    if (plateau.push(row.loss.l_ul)) break;
  }
  const std::size_t done = result.log.empty() ? 0 : result.log.back().step;
  result.final_loss = corpus_objective(cfg, params, all, &result.final_ebn_std);
  result.checkpoint = snapshot(params, Stage::pretrain, done, &adam);
  return result;
}

Metrics evaluate(const KwsParams& params, const std::vector<LabeledExample>& examples) {
  if (examples.empty()) throw DataError("evaluation split is empty");
  NoTapeScope<float> no_tape;
  Metrics m(params.config.n_classes);
  for (const auto& ex : examples) {
    const auto trace = forward_bottleneck(params, ex.features);
    m.add(ex.label, argmax(classify(params, trace.e_bn).values()));
  }
  return m;
}

SupervisedResult train_supervised(const TrainConfig& cfg, KwsParams start, const std::vector<LabeledExample>& train,
                                  const std::vector<LabeledExample>* dev, const TrainHooks& hooks) {
  cfg.validate();
  if (!start.project) throw ContractError("supervised training needs a project head");
  if (train.empty()) throw DataError("training split is empty");
  KwsParams params = std::move(start);
  Adam adam(cfg.adam);
  SupervisedBatches batches(train, params.config.n_classes - 2, cfg.batch_size, derive_seed(cfg.seed, "batches"),
                            BalanceOptions{cfg.unknown_fraction});
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  const ForwardOptions train_opts{true, &dropout_rng};
  const auto named = params.named();
  std::vector<NamedTensor<float>> update(named.begin(), named.end());
  PlateauDetector plateau(cfg.plateau_window, cfg.plateau_tolerance);
  const bool have_dev = dev && !dev->empty();

  SupervisedResult result;
  if (hooks.on_snapshot) hooks.on_snapshot(0, params);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto t0 = Clock::now();
    const auto batch = batches.next();
    const float inv_b = 1.0f / static_cast<float>(batch.items.size());
    zero_grads(named);
    StepLog row;
    row.step = step;
    try {
      for (const auto* ex : batch.items) {
        Tape tape;
        TapeScope<float> scope(tape);
        const auto trace = forward_bottleneck(params, features_tensor<float>(ex->features), train_opts);
        const auto loss = ce_loss(classify(params, trace.e_bn), ex->label);
        require_finite(loss.item(), "cross-entropy", step);
        row.loss.l_ce += loss.item() * inv_b;
        tape.backward(o::scale(loss, inv_b));
      }
      const double lr = lr_at(cfg, step);
      adam.set_lr(lr);
      adam.step(update);
      row.lr = lr;
    } catch (const NumericError& e) {
      abort_numeric(hooks, params, cfg.stage, step - 1, adam, e);
    }
    row.wall_ms = ms_since(t0);
    result.log.push_back(row);
    result.steps_run = step;
    if (hooks.on_step) hooks.on_step(row);
    if (hooks.on_snapshot) hooks.on_snapshot(step, params);
    if (step % cfg.checkpoint_every == 0) save_numbered(hooks, snapshot(params, cfg.stage, step, &adam));

    const bool stop_plateau = plateau.push(row.loss.l_ce);
    if (step % cfg.eval_every == 0 || step == cfg.steps || stop_plateau) {
      EvalPoint ep;
      ep.step = step;
      if (have_dev) ep.dev_accuracy = evaluate(params, *dev).accuracy();
      if (cfg.track_train_accuracy || !have_dev) ep.train_accuracy = evaluate(params, train).accuracy();
      const double watched = have_dev ? *ep.dev_accuracy : *ep.train_accuracy;
      if (!result.steps_to_target && watched >= cfg.target_accuracy) result.steps_to_target = step;
      result.evals.push_back(ep);
      if (cfg.stop_at_train_accuracy > 0 && ep.train_accuracy && *ep.train_accuracy >= cfg.stop_at_train_accuracy) {
        break;
      }
    }
    if (stop_plateau) break;
  }
  result.checkpoint = snapshot(params, cfg.stage, result.steps_run, &adam);
  return result;
}

std::vector<SweepRow> sweep_pretrain_steps(const TrainConfig& pretrain_cfg, const TrainConfig& finetune_cfg,
                                           const ModelConfig& model, std::vector<std::size_t> steps_list,
                                           const std::vector<Utterance>& corpus,
                                           const std::vector<LabeledExample>& train,
                                           const std::vector<LabeledExample>& dev, const AugmentSpec& augment,
                                           const FrontendConfig& frontend) {
  if (steps_list.empty()) throw ParameterError("sweep needs at least one pretraining step count");
  std::sort(steps_list.begin(), steps_list.end());
  steps_list.erase(std::unique(steps_list.begin(), steps_list.end()), steps_list.end());
  TrainConfig cfg = pretrain_cfg;
  cfg.steps = steps_list.back();
  cfg.plateau_window = 0;
  std::map<std::size_t, KwsParams> snapshots;
  TrainHooks hooks;
  hooks.on_snapshot = [&](std::size_t step, const KwsParams& p) {
    if (std::binary_search(steps_list.begin(), steps_list.end(), step)) snapshots.emplace(step, p.clone());
  };
  pretrain(cfg, model, corpus, augment, frontend, hooks);

  std::vector<SweepRow> rows;
  for (std::size_t steps : steps_list) {
    const auto it = snapshots.find(steps);
    if (it == snapshots.end()) throw ContractError("sweep: no snapshot at step " + std::to_string(steps));
    const auto res = train_supervised(finetune_cfg, finetune_start(it->second, finetune_cfg.seed), train, &dev);
    SweepRow row;
    row.pretrain_steps = steps;
    row.dev_accuracy = evaluate(res.checkpoint.params, dev).accuracy();
    row.steps_to_target = res.steps_to_target;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_report(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "pretrain_steps\tdev_accuracy\tsteps_to_target_accuracy\n";
  for (const auto& r : rows) {
    out << r.pretrain_steps << '\t' << std::fixed << std::setprecision(4) << r.dev_accuracy << '\t';
    out.unsetf(std::ios::floatfield);
    if (r.steps_to_target) {
      out << *r.steps_to_target;
    } else {
      out << "NA";
    }
    out << '\n';
  }
}

}  // namespace kws
