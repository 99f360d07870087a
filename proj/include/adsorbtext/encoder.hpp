#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "adsorbtext/io.hpp"
#include "adsorbtext/tensor.hpp"
#include "adsorbtext/tokenizer.hpp"

namespace adsorbtext {

enum class HeadActivation { tanh, gelu };
enum class NormStyle { post, pre };

struct EncoderConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t hidden_size = 64;
  std::size_t ffn_size = 256;
  std::size_t max_positions = kDefaultMaxPositions;
  std::size_t vocab_size = 0;
  double dropout_rate = 0.1;
  HeadActivation head_activation = HeadActivation::tanh;
  NormStyle norm_style = NormStyle::post;
  tensor::GeluKind gelu = tensor::GeluKind::tanh_approx;
  double layer_norm_eps = 1e-5;
  double init_std = 0.02;

  /// Throws ValidationError when hidden_size is not divisible by n_heads etc.
  void validate() const;
  std::size_t head_dim() const { return hidden_size / n_heads; }

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

struct NamedParameter {
  std::string name;
  tensor::Tensor tensor;
  /// -1 for embeddings, 0..n_layers-1 for encoder blocks, n_layers for heads.
  int depth = 0;
};

struct EncoderLayer {
  tensor::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  tensor::Tensor ln1_gain, ln1_bias;
  tensor::Tensor w1, b1, w2, b2;
  tensor::Tensor ln2_gain, ln2_bias;
};

/// Token + learned positional embeddings, a stack of self-attention blocks
/// and a first-token regression head (dense -> activation -> dense to 1).
/// An MLM head (dense -> gelu -> norm -> vocabulary projection) can be attached
/// for pretraining; the projection is either tied to the token embedding or
/// its own matrix.
class EncoderModel {
 public:
  EncoderModel() = default;
  /// All parameters zero (layer-norm gains included).
  explicit EncoderModel(EncoderConfig config);
  /// Weights ~ N(0, init_std), layer-norm gains 1, biases 0.
  static EncoderModel initialized(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  void attach_mlm_head(bool tied, std::uint64_t seed);
  void detach_mlm_head();
  bool has_mlm_head() const { return mlm_dense_w_.defined(); }
  bool mlm_tied() const { return has_mlm_head() && !mlm_decoder_w_.defined(); }
  void reinitialize_regression_head(std::uint64_t seed);

  /// Stable order; defines the checkpoint blob layout.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  /// Deep copy with independent storage.
  EncoderModel clone() const;
  void zero_grad();

  // Parameter tensors, exposed for the forward pass and tests.
  tensor::Tensor token_embedding, position_embedding;
  std::vector<EncoderLayer> layers;
  tensor::Tensor final_ln_gain, final_ln_bias;  // pre-norm only
  tensor::Tensor head_dense_w, head_dense_b, head_out_w, head_out_b;

  const tensor::Tensor& mlm_dense_w() const { return mlm_dense_w_; }
  const tensor::Tensor& mlm_dense_b() const { return mlm_dense_b_; }
  const tensor::Tensor& mlm_ln_gain() const { return mlm_ln_gain_; }
  const tensor::Tensor& mlm_ln_bias() const { return mlm_ln_bias_; }
  const tensor::Tensor& mlm_decoder_w() const { return mlm_decoder_w_; }
  const tensor::Tensor& mlm_decoder_b() const { return mlm_decoder_b_; }

 private:
  EncoderConfig config_;
  tensor::Tensor mlm_dense_w_, mlm_dense_b_, mlm_ln_gain_, mlm_ln_bias_, mlm_decoder_w_, mlm_decoder_b_;
};

/// weights[layer][head] is an L x L row-major matrix; row i holds the
/// attention paid by position i to every position j.
struct AttentionRecord {
  std::size_t length = 0;
  std::size_t n_heads = 0;
  std::vector<std::vector<std::vector<double>>> weights;

  double at(std::size_t layer, std::size_t head, std::size_t i, std::size_t j) const {
    return weights[layer][head][i * length + j];
  }
};

struct ForwardOptions {
  bool capture_attention = false;
  /// Enables dropout; requires rng.
  bool training = false;
  std::mt19937_64* rng = nullptr;
  /// Run only the non-padded prefix. Outputs at real positions are identical
  /// either way because padded keys are masked.
  bool trim_padding = true;
};

struct ForwardResult {
  tensor::Tensor hidden;  // L x hidden, final layer output
  tensor::Tensor pooled;  // 1 x hidden, position 0
  tensor::Tensor energy;  // 1 x 1
  std::optional<AttentionRecord> attention;
};

struct AttentionOutput {
  tensor::Tensor output;
  tensor::Tensor weights;  // before dropout
};

/// softmax(Q K^T / sqrt(d) with masked keys at -inf) V.
AttentionOutput scaled_dot_attention(tensor::Tape& tape, const tensor::Tensor& q, const tensor::Tensor& k,
                                     const tensor::Tensor& v, std::span<const std::uint8_t> key_keep = {},
                                     double dropout_rate = 0.0, std::mt19937_64* rng = nullptr);

/// Throws Error when an id is >= vocab_size or the sequence exceeds max_positions.
ForwardResult forward(const EncoderModel& model, tensor::Tape& tape, const TokenSequence& seq,
                      const ForwardOptions& options = {});

/// Vocabulary logits (rows x vocab) for the given hidden states; requires an MLM head.
tensor::Tensor mlm_logits(const EncoderModel& model, tensor::Tape& tape, const tensor::Tensor& hidden);

/// Inference-mode energy prediction.
double predict_energy(const EncoderModel& model, const TokenSequence& seq);

// Checkpoints: a directory holding manifest.json and params.bin (little-endian
// float64 tensors in parameters() order).

struct CheckpointManifest {
  int format_version = 1;
  EncoderConfig config;
  std::string vocab_hash;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  bool mlm_head = false;
  bool mlm_tied = true;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const EncoderModel& model, const std::filesystem::path& dir, const std::string& vocab_hash,
                     std::uint64_t step, std::uint64_t seed);

struct LoadedCheckpoint {
  EncoderModel model;
  CheckpointManifest manifest;
  std::vector<std::string> warnings;
};

/// Throws CheckpointError on version mismatch or corruption. A vocabulary
/// hash that differs from `expected_vocab_hash` only adds a warning.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const std::optional<std::string>& expected_vocab_hash = std::nullopt);

}  // namespace adsorbtext
