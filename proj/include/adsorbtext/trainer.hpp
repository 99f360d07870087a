#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adsorbtext/encoder.hpp"
#include "adsorbtext/featurizer.hpp"
#include "adsorbtext/tokenizer.hpp"

namespace adsorbtext {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

inline constexpr std::size_t kLrGroups = 3;

/// Grouped layer-wise learning rates: embeddings and the lower third of the
/// blocks train at base_lr, the middle third at 1.75x, the upper third and
/// the heads at 3.5x.
struct LrGroupPlan {
  double base_lr = 1e-6;
  std::array<double, kLrGroups> factors{1.0, 1.75, 3.5};

  /// depth as in NamedParameter: -1 embeddings, n_layers heads.
  std::size_t group_of(int depth, std::size_t n_layers) const;
  double lr(std::size_t group) const { return base_lr * factors.at(group); }
  std::array<double, kLrGroups> effective_lrs() const;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// One decoupled-weight-decay Adam update of a single tensor. `step` is the
/// 1-based step count used for bias correction.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> first_moment,
                  std::span<double> second_moment, std::uint64_t step, double lr, const AdamWHyper& hyper);

class AdamW {
 public:
  AdamW(const EncoderModel& model, LrGroupPlan plan, AdamWHyper hyper = {}, double max_grad_norm = 0.0);

  /// Applies one step to every parameter using its accumulated gradient.
  /// Throws NonFiniteGradient, leaving parameters untouched, if any gradient
  /// is NaN/Inf. `lr_scale` multiplies every group rate (warmup). Returns the
  /// effective per-group learning rates used.
  std::array<double, kLrGroups> step(EncoderModel& model, double lr_scale = 1.0);

  std::uint64_t step_count() const { return step_; }
  const LrGroupPlan& plan() const { return plan_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  LrGroupPlan plan_;
  AdamWHyper hyper_;
  double max_grad_norm_;
  std::uint64_t step_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_, v_;
};

enum class Objective { regression_mae, mlm };

struct TrainRunConfig {
  std::size_t batch_size = 12;
  std::size_t max_epochs = 50;
  std::size_t early_stopping_patience = 5;
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;
  Objective objective = Objective::regression_mae;
  LrGroupPlan lr_plan;
  AdamWHyper adamw;
  double max_grad_norm = 0.0;  // 0 disables clipping
  double mask_rate = kDefaultMaskRate;
  bool mlm_tied = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_metric = 0.0;  // MAE (eV) or MLM cross-entropy
  std::optional<double> val_mae;
  std::array<double, kLrGroups> lrs{};
  double wall_seconds = 0.0;
  std::size_t skipped_batches = 0;
};

struct History {
  std::vector<EpochRecord> epochs;
  /// Effective group learning rates of every optimizer step.
  std::vector<std::array<double, kLrGroups>> step_lrs;
  std::vector<std::string> warnings;

  /// Line-delimited records {epoch, split, metric, value}.
  std::string to_jsonl(bool include_wall_time = true) const;
};

struct RegressionResult {
  EncoderModel best_model;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  History history;
};

struct LabeledSequences {
  std::vector<TokenSequence> seqs;
  std::vector<double> labels;
};

/// Encodes samples with the model's max_positions. Throws Error for an unlabeled sample.
LabeledSequences encode_labeled(const std::vector<SerializedSample>& samples, const Vocabulary& vocab,
                                std::size_t max_positions);

/// MAE finetuning with per-epoch validation, best-checkpoint retention and
/// early stopping after `early_stopping_patience` epochs without a strictly
/// smaller validation MAE. `model` is left at its final-epoch weights.
RegressionResult train_regression(EncoderModel& model, const LabeledSequences& train, const LabeledSequences& val,
                                  const TrainRunConfig& config);
RegressionResult train_regression(EncoderModel& model, const Vocabulary& vocab,
                                  const std::vector<SerializedSample>& train,
                                  const std::vector<SerializedSample>& val, const TrainRunConfig& config);

std::vector<double> predict_all(const EncoderModel& model, const std::vector<TokenSequence>& seqs);
double mean_absolute_error(std::span<const double> predictions, std::span<const double> labels);

/// Mean cross-entropy over positions where selected[i] != 0. Labels at other
/// positions are never read.
tensor::Tensor mlm_loss(const EncoderModel& model, tensor::Tape& tape, const TokenSequence& input,
                        std::span<const int> labels, std::span<const std::uint8_t> selected,
                        const ForwardOptions& options = {});

/// Seed of the dynamic mask drawn for `sample` in `epoch` (1-based) of pretraining.
std::uint64_t pretraining_mask_seed(std::uint64_t seed, std::size_t epoch, std::size_t sample);

struct PretrainResult {
  History history;
};

/// Masked-language-model pretraining with dynamic masking re-drawn every
/// epoch. Attaches an MLM head when absent. Batches without any selected
/// position are skipped with a warning. Throws Error when the corpus is
/// shorter than one batch.
PretrainResult pretrain_mlm(EncoderModel& model, const Vocabulary& vocab, const std::vector<std::string>& corpus,
                            const TrainRunConfig& config);

struct MaskedAccuracy {
  std::size_t masked_positions = 0;
  double accuracy = 0.0;
  /// Accuracy of always predicting the corpus' most frequent regular token.
  double majority_baseline = 0.0;
};
MaskedAccuracy masked_token_accuracy(const EncoderModel& model, const Vocabulary& vocab,
                                     const std::vector<std::string>& corpus, double rate, std::uint64_t seed);

}  // namespace adsorbtext
