#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kws/adam.hpp"
#include "kws/augment.hpp"
#include "kws/checkpoint.hpp"
#include "kws/dataset.hpp"
#include "kws/metrics.hpp"
#include "kws/model.hpp"
#include "kws/objectives.hpp"

namespace kws {

enum class Objective { proposed, apc, mpc };

const char* objective_name(Objective o);
Objective parse_objective(const std::string& s);

struct TrainConfig {
  Stage stage = Stage::supervised;
  std::size_t steps = 30000;
  std::size_t batch_size = 200;
  AdamConfig adam;
  std::size_t warmup_steps = 0;  // linear learning-rate warmup; 0 keeps it constant
  std::uint64_t seed = 0;
  LossWeights weights;
  std::size_t eval_every = 1000;
  std::size_t checkpoint_every = 1000;
  Objective objective = Objective::proposed;
  std::size_t apc_shift = 3;
  MaskConfig mask;
  double unknown_fraction = 0.1;
  /// Loss plateau stop: relative improvement of the windowed mean loss below
  /// plateau_tolerance. A window of 0 disables it.
  std::size_t plateau_window = 0;
  double plateau_tolerance = 1e-4;
  /// Accuracy used for steps-to-target reporting.
  double target_accuracy = 0.9;
  /// Also measure train-split accuracy at evaluation points.
  bool track_train_accuracy = false;
  /// Stop supervised training once the tracked train accuracy reaches this; 0 disables.
  double stop_at_train_accuracy = 0.0;

  void validate() const;
};

/// Deterministic initial network. Encoder tensors depend only on the seed, so a
/// from-scratch run and a zero-step pretrain share them.
KwsParams initial_params(const ModelConfig& model, std::uint64_t seed, Heads heads);
/// Fresh project head drawn from the seed.
Dense<float> fresh_project_head(const ModelConfig& model, std::uint64_t seed);

/// Fine-tuning start point: reconstruct and frame heads dropped, project head
/// freshly initialized, every other tensor copied bit-exactly.
KwsParams finetune_start(const KwsParams& pretrained, std::uint64_t seed);

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  /// Called after `step` updates (and once before the first, with step 0).
  std::function<void(std::size_t step, const KwsParams&)> on_snapshot;
  /// Periodic and last-good checkpoints go here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
  /// Objective over the whole corpus in evaluation mode, before and after.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double final_ebn_std = 0.0;
};

/// Unsupervised pre-training on waveforms (labels are ignored).
PretrainResult pretrain(const TrainConfig& cfg, const ModelConfig& model, const std::vector<Utterance>& corpus,
                        const AugmentSpec& augment = {}, const FrontendConfig& frontend = {},
                        const TrainHooks& hooks = {});

struct EvalPoint {
  std::size_t step = 0;
  std::optional<double> train_accuracy;
  std::optional<double> dev_accuracy;
};

struct SupervisedResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
  std::vector<EvalPoint> evals;
  /// First evaluation step at which dev (or, without dev data, train)
  /// accuracy reached the target.
  std::optional<std::size_t> steps_to_target;
  std::size_t steps_run = 0;
};

/// Cross-entropy training of every parameter. `start` must carry a project head.
SupervisedResult train_supervised(const TrainConfig& cfg, KwsParams start, const std::vector<LabeledExample>& train,
                                  const std::vector<LabeledExample>* dev = nullptr, const TrainHooks& hooks = {});

/// Argmax classification without dropout.
Metrics evaluate(const KwsParams& params, const std::vector<LabeledExample>& examples);

/// Mean sim_loss between the two members of each pair, evaluation mode.
double mean_pair_distance(const KwsParams& params, const std::vector<FeaturePair>& pairs);

/// Mean objective over a corpus in evaluation mode (L_ul, APC or MPC loss).
double corpus_objective(const TrainConfig& cfg, const KwsParams& params, const std::vector<FeaturePair>& pairs,
                        double* ebn_std = nullptr);

struct SweepRow {
  std::size_t pretrain_steps = 0;
  double dev_accuracy = 0.0;
  std::optional<std::size_t> steps_to_target;
};

/// Pretrains once to the largest step count, snapshotting at each requested
/// count, then fine-tunes every snapshot with `finetune`.
std::vector<SweepRow> sweep_pretrain_steps(const TrainConfig& pretrain_cfg, const TrainConfig& finetune_cfg,
                                           const ModelConfig& model, std::vector<std::size_t> steps_list,
                                           const std::vector<Utterance>& corpus,
                                           const std::vector<LabeledExample>& train,
                                           const std::vector<LabeledExample>& dev, const AugmentSpec& augment = {},
                                           const FrontendConfig& frontend = {});

void write_sweep_report(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace kws
