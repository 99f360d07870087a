#include "adsorbtext/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

namespace adsorbtext {

using tensor::Tape;
using tensor::Tensor;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::uint64_t pretraining_mask_seed(std::uint64_t seed, std::size_t epoch, std::size_t sample) {
  return derive_seed(seed, epoch, sample);
}

std::size_t LrGroupPlan::group_of(int depth, std::size_t n_layers) const {
  if (depth < 0) return 0;
  if (n_layers == 0 || static_cast<std::size_t>(depth) >= n_layers) return kLrGroups - 1;
  return std::min<std::size_t>(kLrGroups - 1, kLrGroups * static_cast<std::size_t>(depth) / n_layers);
}

std::array<double, kLrGroups> LrGroupPlan::effective_lrs() const {
  std::array<double, kLrGroups> out{};
  for (std::size_t g = 0; g < kLrGroups; ++g) out[g] = lr(g);
  return out;
}

void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, const AdamWHyper& h) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw Error("adamw_update: size mismatch");
  if (step == 0) throw Error("adamw_update: step is 1-based");
  double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] *= 1.0 - lr * h.weight_decay;
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    double m_hat = m[i] / bc1;
    double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

AdamW::AdamW(const EncoderModel& model, LrGroupPlan plan, AdamWHyper hyper, double max_grad_norm)
    : plan_(plan), hyper_(hyper), max_grad_norm_(max_grad_norm) {
  for (const auto& p : model.parameters()) {
    names_.push_back(p.name);
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

std::array<double, kLrGroups> AdamW::step(EncoderModel& model, double lr_scale) {
  auto params = model.parameters();
  if (params.size() != names_.size()) throw Error("optimizer: model parameter set changed since construction");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != names_[i]) throw Error("optimizer: parameter order changed at '" + params[i].name + "'");
    for (double g : params[i].tensor.grad_or_empty()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in '" + params[i].name + "'");
      sq += g * g;
    }
  }
  double clip = 1.0;
  if (max_grad_norm_ > 0.0) {
    double norm = std::sqrt(sq);
    if (norm > max_grad_norm_) clip = max_grad_norm_ / (norm + 1e-12);
  }
  ++step_;
  const std::size_t n_layers = model.config().n_layers;
  std::vector<double> scaled;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto g = p.tensor.grad_or_empty();
    if (g.empty()) continue;
    std::span<const double> use = g;
    if (clip != 1.0) {
      scaled.assign(g.begin(), g.end());
      for (double& x : scaled) x *= clip;
      use = scaled;
    }
    double lr = lr_scale * plan_.lr(plan_.group_of(p.depth, n_layers));
    adamw_update(p.tensor.values(), use, m_[i], v_[i], step_, lr, hyper_);
  }
  auto lrs = plan_.effective_lrs();
  for (double& x : lrs) x *= lr_scale;
  return lrs;
}

void TrainRunConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (max_epochs == 0) throw ValidationError("max_epochs must be positive");
  if (early_stopping_patience == 0) throw ValidationError("early_stopping_patience must be >= 1");
  if (!(lr_plan.base_lr >= 0.0) || !std::isfinite(lr_plan.base_lr))
    throw ValidationError("base learning rate must be finite and >= 0");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ValidationError("mask_rate must lie in (0, 1)");
  if (max_grad_norm < 0.0) throw ValidationError("max_grad_norm must be >= 0");
}

std::string History::to_jsonl(bool include_wall_time) const {
  std::string out;
  auto line = [&](std::size_t epoch, const char* split, const std::string& metric, double value) {
    nlohmann::json j = {{"epoch", epoch}, {"split", split}, {"metric", metric}, {"value", value}};
    out += j.dump();
    out += '\n';
  };
  for (const auto& e : epochs) {
    line(e.epoch, "train", "loss", e.train_metric);
    if (e.val_mae) line(e.epoch, "val", "mae", *e.val_mae);
    for (std::size_t g = 0; g < kLrGroups; ++g) line(e.epoch, "run", "lr_group" + std::to_string(g), e.lrs[g]);
    if (e.skipped_batches) line(e.epoch, "run", "skipped_batches", static_cast<double>(e.skipped_batches));
    if (include_wall_time) line(e.epoch, "run", "wall_seconds", e.wall_seconds);
  }
  return out;
}

LabeledSequences encode_labeled(const std::vector<SerializedSample>& samples, const Vocabulary& vocab,
                                std::size_t max_positions) {
  LabeledSequences out;
  out.seqs.reserve(samples.size());
  out.labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.energy_ev) throw Error("sample '" + s.system_id + "' has no energy label");
    out.seqs.push_back(encode(s.text, vocab, max_positions));
    out.labels.push_back(*s.energy_ev);
  }
  return out;
}

double mean_absolute_error(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw Error("mean_absolute_error: size mismatch");
  if (predictions.empty()) throw Error("mean_absolute_error: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += std::abs(predictions[i] - labels[i]);
  return s / static_cast<double>(labels.size());
}

std::vector<double> predict_all(const EncoderModel& model, const std::vector<TokenSequence>& seqs) {
  std::vector<double> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(predict_energy(model, s));
  return out;
}

RegressionResult train_regression(EncoderModel& model, const LabeledSequences& train, const LabeledSequences& val,
                                  const TrainRunConfig& config) {
  config.validate();
  if (train.seqs.empty()) throw Error("training set is empty");
  if (val.seqs.empty()) throw Error("validation set is empty");
  if (train.seqs.size() != train.labels.size() || val.seqs.size() != val.labels.size())
    throw Error("sequence/label count mismatch");

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));
  AdamW optimizer(model, config.lr_plan, config.adamw, config.max_grad_norm);

  RegressionResult result;
  result.best_val_mae = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t since_improvement = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::array<double, kLrGroups> lrs{};
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      Tape tape;
      ForwardOptions opts;
      opts.training = true;
      opts.rng = &dropout_rng;
      std::vector<Tensor> preds;
      std::vector<double> targets;
      for (std::size_t k = b0; k < b1; ++k) {
        preds.push_back(forward(model, tape, train.seqs[order[k]], opts).energy);
        targets.push_back(train.labels[order[k]]);
      }
      Tensor pred = tensor::concat_rows(tape, preds);
      Tensor loss = tensor::l1_loss(tape, pred, targets);
      model.zero_grad();
      tape.backward(loss);
      double scale = 1.0;
      if (optimizer.step_count() < config.warmup_steps)
        scale = static_cast<double>(optimizer.step_count() + 1) / static_cast<double>(config.warmup_steps + 1);
      lrs = optimizer.step(model, scale);
      result.history.step_lrs.push_back(lrs);
      loss_sum += loss.item() * static_cast<double>(b1 - b0);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_metric = loss_sum / static_cast<double>(order.size());
    rec.lrs = lrs;
    double val_mae = mean_absolute_error(predict_all(model, val.seqs), val.labels);
    rec.val_mae = val_mae;
    rec.wall_seconds = seconds_since(start);
    result.history.epochs.push_back(rec);

    if (val_mae < result.best_val_mae) {
      result.best_val_mae = val_mae;
      result.best_epoch = epoch;
      result.best_model = model.clone();
      since_improvement = 0;
    } else if (++since_improvement >= config.early_stopping_patience) {
      break;
    }
  }
  return result;
}

RegressionResult train_regression(EncoderModel& model, const Vocabulary& vocab,
                                  const std::vector<SerializedSample>& train,
                                  const std::vector<SerializedSample>& val, const TrainRunConfig& config) {
  auto max_pos = model.config().max_positions;
  return train_regression(model, encode_labeled(train, vocab, max_pos), encode_labeled(val, vocab, max_pos), config);
}

namespace {

struct MlmExample {
  TokenSequence input;
  std::vector<int> labels;
  std::vector<std::uint8_t> selected;
};

MlmExample to_example(const MaskedSequence& m) {
  MlmExample ex{m.seq, std::vector<int>(m.seq.ids.size(), Vocabulary::kPad),
                std::vector<std::uint8_t>(m.seq.ids.size(), 0)};
  for (auto [pos, id] : m.labels) {
    ex.labels[pos] = id;
    ex.selected[pos] = 1;
  }
  return ex;
}

// Gathers hidden rows at selected positions and appends their targets.
void gather_selected(Tape& tape, const Tensor& hidden, std::span<const int> labels,
                     std::span<const std::uint8_t> selected, std::vector<Tensor>& rows, std::vector<int>& targets) {
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (!selected[i]) continue;
    if (i >= hidden.rows()) throw Error("selected position " + std::to_string(i) + " is padding");
    rows.push_back(tensor::slice_rows(tape, hidden, i, 1));
    targets.push_back(labels[i]);
  }
}

}  // namespace

Tensor mlm_loss(const EncoderModel& model, Tape& tape, const TokenSequence& input, std::span<const int> labels,
                std::span<const std::uint8_t> selected, const ForwardOptions& options) {
  if (labels.size() != input.ids.size() || selected.size() != input.ids.size())
    throw Error("mlm_loss: labels/selection length differs from the input");
  auto fr = forward(model, tape, input, options);
  std::vector<Tensor> rows;
  std::vector<int> targets;
  gather_selected(tape, fr.hidden, labels, selected, rows, targets);
  if (rows.empty()) throw Error("mlm_loss: no selected positions");
  Tensor logits = mlm_logits(model, tape, tensor::concat_rows(tape, rows));
  return tensor::cross_entropy(tape, logits, targets);
}

PretrainResult pretrain_mlm(EncoderModel& model, const Vocabulary& vocab, const std::vector<std::string>& corpus,
                            const TrainRunConfig& config) {
  config.validate();
  if (corpus.size() < config.batch_size)
    throw Error("pretraining corpus has " + std::to_string(corpus.size()) + " samples, fewer than one batch of " +
                std::to_string(config.batch_size));
  if (model.config().vocab_size != vocab.size())
    throw Error("model vocab_size " + std::to_string(model.config().vocab_size) + " != vocabulary size " +
                std::to_string(vocab.size()));
  if (!model.has_mlm_head()) model.attach_mlm_head(config.mlm_tied, derive_seed(config.seed, 3));

  std::vector<TokenSequence> seqs;
  seqs.reserve(corpus.size());
  for (const auto& text : corpus) seqs.push_back(encode(text, vocab, model.config().max_positions));

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));
  AdamW optimizer(model, config.lr_plan, config.adamw, config.max_grad_norm);
  PretrainResult result;
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      Tape tape;
      ForwardOptions opts;
      opts.training = true;
      opts.rng = &dropout_rng;
      std::vector<Tensor> rows;
      std::vector<int> targets;
      for (std::size_t k = b0; k < b1; ++k) {
        auto ex = to_example(dynamic_mask(seqs[order[k]], vocab, config.mask_rate,
                                          pretraining_mask_seed(config.seed, epoch, order[k])));
        bool any = std::any_of(ex.selected.begin(), ex.selected.end(), [](auto s) { return s != 0; });
        if (!any) continue;
        auto fr = forward(model, tape, ex.input, opts);
        gather_selected(tape, fr.hidden, ex.labels, ex.selected, rows, targets);
      }
      if (rows.empty()) {
        ++rec.skipped_batches;
        result.history.warnings.push_back("epoch " + std::to_string(epoch) + ": batch at " + std::to_string(b0) +
                                          " has no masked positions; skipped");
        continue;
      }
      Tensor logits = mlm_logits(model, tape, tensor::concat_rows(tape, rows));
      Tensor loss = tensor::cross_entropy(tape, logits, targets);
      model.zero_grad();
      tape.backward(loss);
      rec.lrs = optimizer.step(model);
      result.history.step_lrs.push_back(rec.lrs);
      loss_sum += loss.item();
      ++loss_batches;
    }
    rec.train_metric = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    rec.wall_seconds = seconds_since(start);
    result.history.epochs.push_back(rec);
  }
  return result;
}

MaskedAccuracy masked_token_accuracy(const EncoderModel& model, const Vocabulary& vocab,
                                     const std::vector<std::string>& corpus, double rate, std::uint64_t seed) {
  if (!model.has_mlm_head()) throw Error("masked_token_accuracy: model has no MLM head");
  std::vector<TokenSequence> seqs;
  std::map<int, std::size_t> freq;
  for (const auto& text : corpus) {
    seqs.push_back(encode(text, vocab, model.config().max_positions));
    const auto& s = seqs.back();
    for (std::size_t i = 0; i < s.real_length(); ++i)
      if (!Vocabulary::is_special(s.ids[i])) ++freq[s.ids[i]];
  }
  int majority = Vocabulary::kUnk;
  std::size_t best = 0;
  for (auto [id, n] : freq)
    if (n > best) best = n, majority = id;

  MaskedAccuracy out;
  std::size_t correct = 0, baseline = 0;
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    auto ex = to_example(dynamic_mask(seqs[k], vocab, rate, derive_seed(seed, 0x5eed, k)));
    Tape tape = Tape::inference();
    auto fr = forward(model, tape, ex.input);
    std::vector<Tensor> rows;
    std::vector<int> targets;
    gather_selected(tape, fr.hidden, ex.labels, ex.selected, rows, targets);
    if (rows.empty()) continue;
    Tensor logits = mlm_logits(model, tape, tensor::concat_rows(tape, rows));
    for (std::size_t r = 0; r < targets.size(); ++r) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits(r, c) > logits(r, arg)) arg = c;
      correct += static_cast<int>(arg) == targets[r];
      baseline += targets[r] == majority;
    }
    out.masked_positions += targets.size();
  }
  if (out.masked_positions) {
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.masked_positions);
    out.majority_baseline = static_cast<double>(baseline) / static_cast<double>(out.masked_positions);
  }
  return out;
}

}  // namespace adsorbtext
