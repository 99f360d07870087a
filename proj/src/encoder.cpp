#include "adsorbtext/encoder.hpp"

#include <cmath>

namespace adsorbtext {

using tensor::Tape;
using tensor::Tensor;
namespace ops = tensor;

namespace {

std::string_view to_string(HeadActivation a) { return a == HeadActivation::tanh ? "tanh" : "gelu"; }
std::string_view to_string(NormStyle n) { return n == NormStyle::post ? "post" : "pre"; }
std::string_view to_string(tensor::GeluKind g) { return g == tensor::GeluKind::tanh_approx ? "tanh" : "erf"; }

Tensor param(std::vector<std::size_t> shape) { return Tensor::zeros(std::move(shape), true); }

void fill_normal(Tensor& t, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  for (auto& v : t.values()) v = dist(rng);
}

void fill_constant(Tensor& t, double c) {
  for (auto& v : t.values()) v = c;
}

}  // namespace

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("encoder config: " + what); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (hidden_size < 2 || hidden_size % n_heads != 0) fail("hidden_size must be divisible by n_heads");
  if (ffn_size < 1) fail("ffn_size must be >= 1");
  if (max_positions < 2) fail("max_positions must be >= 2");
  if (vocab_size < static_cast<std::size_t>(Vocabulary::kSpecialCount)) fail("vocab_size smaller than special set");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"n_layers", n_layers},
          {"n_heads", n_heads},
          {"hidden_size", hidden_size},
          {"ffn_size", ffn_size},
          {"max_positions", max_positions},
          {"vocab_size", vocab_size},
          {"dropout_rate", dropout_rate},
          {"head_activation", std::string(to_string(head_activation))},
          {"norm_style", std::string(to_string(norm_style))},
          {"gelu", std::string(to_string(gelu))},
          {"layer_norm_eps", layer_norm_eps},
          {"init_std", init_std}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.ffn_size = j.value("ffn_size", c.ffn_size);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  c.init_std = j.value("init_std", c.init_std);
  auto act = j.value("head_activation", std::string("tanh"));
  if (act != "tanh" && act != "gelu") throw ValidationError("encoder config: unknown head_activation " + act);
  c.head_activation = act == "tanh" ? HeadActivation::tanh : HeadActivation::gelu;
  auto norm = j.value("norm_style", std::string("post"));
  if (norm != "post" && norm != "pre") throw ValidationError("encoder config: unknown norm_style " + norm);
  c.norm_style = norm == "post" ? NormStyle::post : NormStyle::pre;
  auto gelu = j.value("gelu", std::string("tanh"));
  if (gelu != "tanh" && gelu != "erf") throw ValidationError("encoder config: unknown gelu " + gelu);
  c.gelu = gelu == "tanh" ? tensor::GeluKind::tanh_approx : tensor::GeluKind::erf_exact;
  return c;
}

EncoderModel::EncoderModel(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t h = config_.hidden_size, f = config_.ffn_size;
  token_embedding = param({config_.vocab_size, h});
  position_embedding = param({config_.max_positions, h});
  layers.resize(config_.n_layers);
  for (auto& l : layers) {
    l.wq = param({h, h}), l.bq = param({h});
    l.wk = param({h, h}), l.bk = param({h});
    l.wv = param({h, h}), l.bv = param({h});
    l.wo = param({h, h}), l.bo = param({h});
    l.ln1_gain = param({h}), l.ln1_bias = param({h});
    l.w1 = param({h, f}), l.b1 = param({f});
    l.w2 = param({f, h}), l.b2 = param({h});
    l.ln2_gain = param({h}), l.ln2_bias = param({h});
  }
  if (config_.norm_style == NormStyle::pre) {
    final_ln_gain = param({h});
    final_ln_bias = param({h});
  }
  head_dense_w = param({h, h});
  head_dense_b = param({h});
  head_out_w = param({h, 1});
  head_out_b = param({1});
}

EncoderModel EncoderModel::initialized(EncoderConfig config, std::uint64_t seed) {
  EncoderModel m(std::move(config));
  std::mt19937_64 rng(seed);
  const double s = m.config_.init_std;
  fill_normal(m.token_embedding, s, rng);
  fill_normal(m.position_embedding, s, rng);
  for (auto& l : m.layers) {
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2}) fill_normal(*w, s, rng);
    fill_constant(l.ln1_gain, 1.0);
    fill_constant(l.ln2_gain, 1.0);
  }
  if (m.final_ln_gain.defined()) fill_constant(m.final_ln_gain, 1.0);
  m.reinitialize_regression_head(rng());
  return m;
}

void EncoderModel::reinitialize_regression_head(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  fill_normal(head_dense_w, config_.init_std, rng);
  fill_constant(head_dense_b, 0.0);
  fill_normal(head_out_w, config_.init_std, rng);
  fill_constant(head_out_b, 0.0);
}

void EncoderModel::attach_mlm_head(bool tied, std::uint64_t seed) {
  const std::size_t h = config_.hidden_size;
  std::mt19937_64 rng(seed);
  mlm_dense_w_ = param({h, h});
  fill_normal(mlm_dense_w_, config_.init_std, rng);
  mlm_dense_b_ = param({h});
  mlm_ln_gain_ = param({h});
  fill_constant(mlm_ln_gain_, 1.0);
  mlm_ln_bias_ = param({h});
  mlm_decoder_w_ = Tensor();
  if (!tied) {
    mlm_decoder_w_ = param({config_.vocab_size, h});
    fill_normal(mlm_decoder_w_, config_.init_std, rng);
  }
  mlm_decoder_b_ = param({config_.vocab_size});
}

void EncoderModel::detach_mlm_head() {
  mlm_dense_w_ = mlm_dense_b_ = mlm_ln_gain_ = mlm_ln_bias_ = mlm_decoder_w_ = mlm_decoder_b_ = Tensor();
}

std::vector<NamedParameter> EncoderModel::parameters() const {
  std::vector<NamedParameter> out;
  out.push_back({"embeddings.token", token_embedding, -1});
  out.push_back({"embeddings.position", position_embedding, -1});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const int d = static_cast<int>(i);
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "attn.wq", l.wq, d});
    out.push_back({p + "attn.bq", l.bq, d});
    out.push_back({p + "attn.wk", l.wk, d});
    out.push_back({p + "attn.bk", l.bk, d});
    out.push_back({p + "attn.wv", l.wv, d});
    out.push_back({p + "attn.bv", l.bv, d});
    out.push_back({p + "attn.wo", l.wo, d});
    out.push_back({p + "attn.bo", l.bo, d});
    out.push_back({p + "ln1.gain", l.ln1_gain, d});
    out.push_back({p + "ln1.bias", l.ln1_bias, d});
    out.push_back({p + "ffn.w1", l.w1, d});
    out.push_back({p + "ffn.b1", l.b1, d});
    out.push_back({p + "ffn.w2", l.w2, d});
    out.push_back({p + "ffn.b2", l.b2, d});
    out.push_back({p + "ln2.gain", l.ln2_gain, d});
    out.push_back({p + "ln2.bias", l.ln2_bias, d});
  }
  const int top = static_cast<int>(layers.size());
  if (final_ln_gain.defined()) {
    out.push_back({"final_ln.gain", final_ln_gain, top - 1});
    out.push_back({"final_ln.bias", final_ln_bias, top - 1});
  }
  out.push_back({"head.dense.w", head_dense_w, top});
  out.push_back({"head.dense.b", head_dense_b, top});
  out.push_back({"head.out.w", head_out_w, top});
  out.push_back({"head.out.b", head_out_b, top});
  if (has_mlm_head()) {
    out.push_back({"mlm.dense.w", mlm_dense_w_, top});
    out.push_back({"mlm.dense.b", mlm_dense_b_, top});
    out.push_back({"mlm.ln.gain", mlm_ln_gain_, top});
    out.push_back({"mlm.ln.bias", mlm_ln_bias_, top});
    if (mlm_decoder_w_.defined()) out.push_back({"mlm.decoder.w", mlm_decoder_w_, top});
    out.push_back({"mlm.decoder.b", mlm_decoder_b_, top});
  }
  return out;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

EncoderModel EncoderModel::clone() const {
  EncoderModel m = *this;
  auto deep = [](Tensor& t) {
    if (t.defined()) t = t.clone();
  };
  deep(m.token_embedding);
  deep(m.position_embedding);
  for (auto& l : m.layers)
    for (auto* t : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gain, &l.ln1_bias, &l.w1,
                    &l.b1, &l.w2, &l.b2, &l.ln2_gain, &l.ln2_bias})
      deep(*t);
  for (auto* t : {&m.final_ln_gain, &m.final_ln_bias, &m.head_dense_w, &m.head_dense_b, &m.head_out_w,
                  &m.head_out_b, &m.mlm_dense_w_, &m.mlm_dense_b_, &m.mlm_ln_gain_, &m.mlm_ln_bias_,
                  &m.mlm_decoder_w_, &m.mlm_decoder_b_})
    deep(*t);
  return m;
}

void EncoderModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

AttentionOutput scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_keep, double dropout_rate,
                                     std::mt19937_64* rng) {
  if (q.cols() != k.cols() || k.rows() != v.rows())
    throw Error("scaled_dot_attention: shape mismatch");
  auto scores = ops::scale(tape, ops::matmul_nt(tape, q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!key_keep.empty()) scores = ops::mask_columns(tape, scores, key_keep);
  auto weights = ops::softmax(tape, scores, 1);
  auto dropped = ops::dropout(tape, weights, dropout_rate, rng);
  return {ops::matmul(tape, dropped, v), weights};
}

namespace {

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_bias(tape, ops::matmul(tape, x, w), b);
}

struct LayerContext {
  Tape& tape;
  const EncoderConfig& cfg;
  std::span<const std::uint8_t> key_keep;
  double dropout;
  std::mt19937_64* rng;
};

Tensor self_attention(LayerContext& ctx, const EncoderLayer& l, const Tensor& x,
                      std::vector<std::vector<double>>* capture) {
  auto& tape = ctx.tape;
  auto q = linear(tape, x, l.wq, l.bq);
  auto k = linear(tape, x, l.wk, l.bk);
  auto v = linear(tape, x, l.wv, l.bv);
  const std::size_t dh = ctx.cfg.head_dim();
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < ctx.cfg.n_heads; ++h) {
    auto out = scaled_dot_attention(tape, ops::slice_cols(tape, q, h * dh, dh), ops::slice_cols(tape, k, h * dh, dh),
                                    ops::slice_cols(tape, v, h * dh, dh), ctx.key_keep, ctx.dropout, ctx.rng);
    if (capture) capture->emplace_back(out.weights.values().begin(), out.weights.values().end());
    heads.push_back(std::move(out.output));
  }
  auto merged = heads.size() == 1 ? heads.front() : ops::concat_cols(tape, heads);
  return linear(tape, merged, l.wo, l.bo);
}

Tensor feed_forward(LayerContext& ctx, const EncoderLayer& l, const Tensor& x) {
  auto& tape = ctx.tape;
  auto hidden = ops::gelu(tape, linear(tape, x, l.w1, l.b1), ctx.cfg.gelu);
  return ops::dropout(tape, linear(tape, hidden, l.w2, l.b2), ctx.dropout, ctx.rng);
}

}  // namespace

ForwardResult forward(const EncoderModel& model, Tape& tape, const TokenSequence& seq, const ForwardOptions& options) {
  const auto& cfg = model.config();
  if (seq.ids.size() > cfg.max_positions)
    throw Error("forward: sequence length " + std::to_string(seq.ids.size()) + " exceeds max_positions");
  if (seq.attention_mask.size() != seq.ids.size()) throw Error("forward: attention mask length mismatch");
  if (options.training && cfg.dropout_rate > 0.0 && !options.rng) throw Error("forward: training mode needs an rng");
  for (int id : seq.ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw Error("forward: token id " + std::to_string(id) + " out of range for vocabulary of " +
                  std::to_string(cfg.vocab_size));

  std::size_t length = seq.ids.size();
  if (options.trim_padding) {
    length = 0;
    for (std::size_t i = 0; i < seq.attention_mask.size(); ++i)
      if (seq.attention_mask[i]) length = i + 1;
    if (length == 0) throw Error("forward: empty sequence");
  }
  std::span<const int> ids(seq.ids.data(), length);
  std::span<const std::uint8_t> keep(seq.attention_mask.data(), length);
  bool any_masked = false;
  for (auto k : keep) any_masked |= (k == 0);

  std::vector<int> positions(length);
  for (std::size_t i = 0; i < length; ++i) positions[i] = static_cast<int>(i);

  const bool dropout_on = options.training && options.rng != nullptr && cfg.dropout_rate > 0.0;
  LayerContext ctx{tape, cfg, any_masked ? keep : std::span<const std::uint8_t>{},
                   dropout_on ? cfg.dropout_rate : 0.0, dropout_on ? options.rng : nullptr};

  ForwardResult result;
  if (options.capture_attention) {
    result.attention = AttentionRecord{length, cfg.n_heads, {}};
    result.attention->weights.resize(cfg.n_layers);
  }

  auto x = ops::add(tape, ops::embedding(tape, model.token_embedding, ids),
                    ops::embedding(tape, model.position_embedding, positions));
  const double eps = cfg.layer_norm_eps;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const auto& l = model.layers[li];
    auto* capture = options.capture_attention ? &result.attention->weights[li] : nullptr;
    if (cfg.norm_style == NormStyle::post) {
      x = ops::layer_norm(tape, ops::add(tape, x, self_attention(ctx, l, x, capture)), l.ln1_gain, l.ln1_bias, eps);
      x = ops::layer_norm(tape, ops::add(tape, x, feed_forward(ctx, l, x)), l.ln2_gain, l.ln2_bias, eps);
    } else {
      auto a = ops::layer_norm(tape, x, l.ln1_gain, l.ln1_bias, eps);
      x = ops::add(tape, x, self_attention(ctx, l, a, capture));
      auto b = ops::layer_norm(tape, x, l.ln2_gain, l.ln2_bias, eps);
      x = ops::add(tape, x, feed_forward(ctx, l, b));
    }
  }
  if (cfg.norm_style == NormStyle::pre) x = ops::layer_norm(tape, x, model.final_ln_gain, model.final_ln_bias, eps);

  result.hidden = x;
  result.pooled = ops::slice_rows(tape, x, 0, 1);
  auto h = linear(tape, result.pooled, model.head_dense_w, model.head_dense_b);
  h = cfg.head_activation == HeadActivation::tanh ? ops::tanh(tape, h) : ops::gelu(tape, h, cfg.gelu);
  result.energy = linear(tape, h, model.head_out_w, model.head_out_b);
  return result;
}

Tensor mlm_logits(const EncoderModel& model, Tape& tape, const Tensor& hidden) {
  if (!model.has_mlm_head()) throw Error("mlm_logits: model has no MLM head");
  const auto& cfg = model.config();
  auto h = ops::gelu(tape, linear(tape, hidden, model.mlm_dense_w(), model.mlm_dense_b()), cfg.gelu);
  h = ops::layer_norm(tape, h, model.mlm_ln_gain(), model.mlm_ln_bias(), cfg.layer_norm_eps);
  const auto& decoder = model.mlm_tied() ? model.token_embedding : model.mlm_decoder_w();
  return ops::add_bias(tape, ops::matmul_nt(tape, h, decoder), model.mlm_decoder_b());
}

double predict_energy(const EncoderModel& model, const TokenSequence& seq) {
  auto tape = Tape::inference();
  return forward(model, tape, seq).energy.item();
}

}  // namespace adsorbtext
