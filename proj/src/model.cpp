#include "kws/model.hpp"

#include <cmath>

#include "kws/errors.hpp"

namespace kws {

namespace o = ops;

void ModelConfig::validate() const {
  for (std::size_t v : {n_conv, conv_channels, conv_kernel, conv_stride, n_attn, d_model, n_heads, d_ff,
                        select_frames, d_bottleneck, n_classes, d_feat, d_recon}) {
    if (v == 0) throw ParameterError("model config: every extent must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ParameterError("model config: d_model " + std::to_string(d_model) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  if (conv_channels * reduced(d_feat) != d_model) {
    throw ParameterError("model config: conv_channels x reduced d_feat = " +
                         std::to_string(conv_channels * reduced(d_feat)) + " must equal d_model " +
                         std::to_string(d_model));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("model config: dropout must lie in [0, 1)");
}

std::size_t ModelConfig::reduced(std::size_t n) const {
  for (std::size_t i = 0; i < n_conv; ++i) n = (n + conv_stride - 1) / conv_stride;
  return n;
}

std::size_t ModelConfig::time_stride() const {
  std::size_t s = 1;
  for (std::size_t i = 0; i < n_conv; ++i) s *= conv_stride;
  return s;
}

std::size_t ModelConfig::min_input_frames() const {
  std::size_t t = 1;
  while (reduced(t) < select_frames) ++t;
  return t;
}

namespace {

template <typename T>
BasicTensor<T> uniform_tensor(Shape shape, double limit, Rng& rng) {
  BasicTensor<T> t(std::move(shape), true);
  for (auto& v : t.mutable_values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
BasicTensor<T> constant(Shape shape, T value, bool trainable = true) {
  auto t = BasicTensor<T>::full(std::move(shape), value);
  t.set_requires_grad(trainable);
  return t;
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
Dense<T> init_dense(std::size_t in, std::size_t out, Rng& rng) {
  return {uniform_tensor<T>({in, out}, glorot(in, out), rng), constant<T>({out}, T(0.1))};
}

template <typename T>
void push_dense(std::vector<NamedTensor<T>>& out, const std::string& prefix, const Dense<T>& d) {
  out.push_back({prefix + ".weight", d.weight});
  out.push_back({prefix + ".bias", d.bias});
}

template <typename T>
Dense<T> clone_dense(const Dense<T>& d) {
  return {d.weight.clone(), d.bias.clone()};
}

template <typename To>
Dense<To> cast_dense(const Dense<float>& d) {
  return {tensor_cast<To>(d.weight), tensor_cast<To>(d.bias)};
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const Dense<T>& d) {
  return o::add_bias(o::matmul(x, d.weight), d.bias);
}

template <typename T>
BasicTensor<T> maybe_dropout(const BasicTensor<T>& x, double rate, const ForwardOptions& opts) {
  if (!opts.training || rate == 0.0) return x;
  if (opts.rng == nullptr) throw ContractError("forward: training with dropout needs an rng");
  return o::dropout(x, rate, *opts.rng);
}

std::size_t dense_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

std::size_t parameter_count(const ModelConfig& cfg, Heads heads) {
  std::size_t n = 0;
  std::size_t c_in = 1;
  const std::size_t k2 = cfg.conv_kernel * cfg.conv_kernel;
  for (std::size_t i = 0; i < cfg.n_conv; ++i) {
    n += cfg.conv_channels * c_in * k2 + cfg.conv_channels;
    c_in = cfg.conv_channels;
  }
  const std::size_t per_attn = 4 * dense_count(cfg.d_model, cfg.d_model) + dense_count(cfg.d_model, cfg.d_ff) +
                               dense_count(cfg.d_ff, cfg.d_model) + 4 * cfg.d_model;
  n += cfg.n_attn * per_attn;
  n += dense_count(cfg.select_frames * cfg.d_model, cfg.d_bottleneck);
  if (has(heads, Heads::classify)) n += dense_count(cfg.d_bottleneck, cfg.n_classes);
  if (has(heads, Heads::reconstruct)) n += dense_count(cfg.d_bottleneck, cfg.d_recon);
  if (has(heads, Heads::frame)) n += dense_count(cfg.d_model, cfg.time_stride() * cfg.d_feat);
  return n;
}

template <typename T>
Dense<T> init_head(const ModelConfig& cfg, Heads head, Rng& rng) {
  switch (head) {
    case Heads::classify:
      return init_dense<T>(cfg.d_bottleneck, cfg.n_classes, rng);
    case Heads::reconstruct:
      return init_dense<T>(cfg.d_bottleneck, cfg.d_recon, rng);
    case Heads::frame:
      return init_dense<T>(cfg.d_model, cfg.time_stride() * cfg.d_feat, rng);
    default:
      throw ParameterError("init_head: expected exactly one head");
  }
}

template <typename T>
BasicKwsParams<T> init_params(const ModelConfig& cfg, Rng& rng, Heads heads) {
  cfg.validate();
  BasicKwsParams<T> p;
  p.config = cfg;
  std::size_t c_in = 1;
  const std::size_t k = cfg.conv_kernel;
  for (std::size_t i = 0; i < cfg.n_conv; ++i) {
    const double limit = glorot(c_in * k * k, cfg.conv_channels * k * k);
    p.conv.push_back({uniform_tensor<T>({cfg.conv_channels, c_in, k, k}, limit, rng),
                      constant<T>({cfg.conv_channels}, T(0.1))});
    c_in = cfg.conv_channels;
  }
  for (std::size_t i = 0; i < cfg.n_attn; ++i) {
    AttentionLayer<T> a;
    a.query = init_dense<T>(cfg.d_model, cfg.d_model, rng);
    a.key = init_dense<T>(cfg.d_model, cfg.d_model, rng);
    a.value = init_dense<T>(cfg.d_model, cfg.d_model, rng);
    a.output = init_dense<T>(cfg.d_model, cfg.d_model, rng);
    a.ff_in = init_dense<T>(cfg.d_model, cfg.d_ff, rng);
    a.ff_out = init_dense<T>(cfg.d_ff, cfg.d_model, rng);
    a.norm1_gain = constant<T>({cfg.d_model}, T(1));
    a.norm1_shift = constant<T>({cfg.d_model}, T(0));
    a.norm2_gain = constant<T>({cfg.d_model}, T(1));
    a.norm2_shift = constant<T>({cfg.d_model}, T(0));
    p.attn.push_back(std::move(a));
  }
  p.bottleneck = init_dense<T>(cfg.select_frames * cfg.d_model, cfg.d_bottleneck, rng);
  if (has(heads, Heads::classify)) p.project = init_head<T>(cfg, Heads::classify, rng);
  if (has(heads, Heads::reconstruct)) p.reconstruct = init_head<T>(cfg, Heads::reconstruct, rng);
  if (has(heads, Heads::frame)) p.frame_head = init_head<T>(cfg, Heads::frame, rng);
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> BasicKwsParams<T>::named() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i);
    out.push_back({prefix + ".kernel", conv[i].kernel});
    out.push_back({prefix + ".bias", conv[i].bias});
  }
  for (std::size_t i = 0; i < attn.size(); ++i) {
    const std::string prefix = "attn" + std::to_string(i);
    const auto& a = attn[i];
    push_dense(out, prefix + ".query", a.query);
    push_dense(out, prefix + ".key", a.key);
    push_dense(out, prefix + ".value", a.value);
    push_dense(out, prefix + ".output", a.output);
    push_dense(out, prefix + ".ff_in", a.ff_in);
    push_dense(out, prefix + ".ff_out", a.ff_out);
    out.push_back({prefix + ".norm1.gain", a.norm1_gain});
    out.push_back({prefix + ".norm1.shift", a.norm1_shift});
    out.push_back({prefix + ".norm2.gain", a.norm2_gain});
    out.push_back({prefix + ".norm2.shift", a.norm2_shift});
  }
  push_dense(out, "bottleneck", bottleneck);
  if (project) push_dense(out, "project", *project);
  if (reconstruct) push_dense(out, "reconstruct", *reconstruct);
  if (frame_head) push_dense(out, "frame_head", *frame_head);
  return out;
}

template <typename T>
std::size_t BasicKwsParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named()) n += p.tensor.numel();
  return n;
}

template <typename T>
BasicKwsParams<T> BasicKwsParams<T>::clone() const {
  BasicKwsParams<T> c;
  c.config = config;
  for (const auto& l : conv) c.conv.push_back({l.kernel.clone(), l.bias.clone()});
  for (const auto& a : attn) {
    AttentionLayer<T> b;
    b.query = clone_dense(a.query);
    b.key = clone_dense(a.key);
    b.value = clone_dense(a.value);
    b.output = clone_dense(a.output);
    b.ff_in = clone_dense(a.ff_in);
    b.ff_out = clone_dense(a.ff_out);
    b.norm1_gain = a.norm1_gain.clone();
    b.norm1_shift = a.norm1_shift.clone();
    b.norm2_gain = a.norm2_gain.clone();
    b.norm2_shift = a.norm2_shift.clone();
    c.attn.push_back(std::move(b));
  }
  c.bottleneck = clone_dense(bottleneck);
  if (project) c.project = clone_dense(*project);
  if (reconstruct) c.reconstruct = clone_dense(*reconstruct);
  if (frame_head) c.frame_head = clone_dense(*frame_head);
  return c;
}

template <typename T>
BasicKwsParams<T> params_cast(const BasicKwsParams<float>& p) {
  BasicKwsParams<T> c;
  c.config = p.config;
  for (const auto& l : p.conv) c.conv.push_back({tensor_cast<T>(l.kernel), tensor_cast<T>(l.bias)});
  for (const auto& a : p.attn) {
    AttentionLayer<T> b;
    b.query = cast_dense<T>(a.query);
    b.key = cast_dense<T>(a.key);
    b.value = cast_dense<T>(a.value);
    b.output = cast_dense<T>(a.output);
    b.ff_in = cast_dense<T>(a.ff_in);
    b.ff_out = cast_dense<T>(a.ff_out);
    b.norm1_gain = tensor_cast<T>(a.norm1_gain);
    b.norm1_shift = tensor_cast<T>(a.norm1_shift);
    b.norm2_gain = tensor_cast<T>(a.norm2_gain);
    b.norm2_shift = tensor_cast<T>(a.norm2_shift);
    c.attn.push_back(std::move(b));
  }
  c.bottleneck = cast_dense<T>(p.bottleneck);
  if (p.project) c.project = cast_dense<T>(*p.project);
  if (p.reconstruct) c.reconstruct = cast_dense<T>(*p.reconstruct);
  if (p.frame_head) c.frame_head = cast_dense<T>(*p.frame_head);
  return c;
}

template <typename T>
BasicTensor<T> positional_encoding(std::size_t length, std::size_t width) {
  BasicTensor<T> table({length, width});
  auto v = table.mutable_values();
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(width));
      v[pos * width + i] = static_cast<T>(std::sin(static_cast<double>(pos) * freq));
      if (i + 1 < width) v[pos * width + i + 1] = static_cast<T>(std::cos(static_cast<double>(pos) * freq));
    }
  }
  return table;
}

template <typename T>
BasicTensor<T> attention_layer(const BasicTensor<T>& x, const AttentionLayer<T>& layer, std::size_t n_heads,
                               double dropout_rate, const ForwardOptions& opts,
                               std::vector<BasicTensor<T>>* weights) {
  if (x.rank() != 2) throw ShapeError("attention_layer: expected [T x d_model], got " + shape_str(x.shape()));
  const std::size_t width = x.dim(1);
  if (n_heads == 0 || width % n_heads != 0) {
    throw ShapeError("attention_layer: width " + std::to_string(width) + " not divisible by heads");
  }
  const std::size_t head_dim = width / n_heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  const auto q = dense(x, layer.query);
  const auto k = dense(x, layer.key);
  const auto v = dense(x, layer.value);
  std::vector<BasicTensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    const auto qh = o::slice(q, 1, lo, hi);
    const auto kh = o::slice(k, 1, lo, hi);
    const auto vh = o::slice(v, 1, lo, hi);
    const auto att = o::softmax(o::scale(o::matmul(qh, o::transpose(kh)), inv_sqrt));
    if (weights) weights->push_back(att);
    heads.push_back(o::matmul(att, vh));
  }
  const auto attended = dense(n_heads == 1 ? heads.front() : o::concat(heads, 1), layer.output);
  const auto h1 = o::layer_norm(o::add(x, maybe_dropout(attended, dropout_rate, opts)), layer.norm1_gain,
                                layer.norm1_shift);
  const auto ff = dense(o::relu(dense(h1, layer.ff_in)), layer.ff_out);
  return o::layer_norm(o::add(h1, maybe_dropout(ff, dropout_rate, opts)), layer.norm2_gain, layer.norm2_shift);
}

template <typename T>
BasicTensor<T> features_tensor(const FeatureMatrix& x) {
  std::vector<T> values(x.values().begin(), x.values().end());
  return BasicTensor<T>({x.frames(), x.bins()}, std::move(values));
}

template <typename T>
BasicTensor<T> encode(const BasicKwsParams<T>& params, const BasicTensor<T>& features, const ForwardOptions& opts,
                      BasicForwardTrace<T>* trace) {
  const auto& cfg = params.config;
  if (features.rank() != 2 || features.dim(1) != cfg.d_feat) {
    throw ShapeError("encode: expected [T x " + std::to_string(cfg.d_feat) + "] features, got " +
                     shape_str(features.shape()));
  }
  const std::size_t frames = features.dim(0);
  if (frames < cfg.min_input_frames()) {
    throw TooShortError("encode: " + std::to_string(frames) + " frames is too short; at least " +
                        std::to_string(cfg.min_input_frames()) + " input frames are needed to select " +
                        std::to_string(cfg.select_frames) + " encoder frames");
  }
  // [T x F] -> image [1 x F x T]: mel bins are rows, time is columns.
  auto h = o::reshape(o::transpose(features), {1, cfg.d_feat, frames});
  const o::Conv2dGeometry geom{cfg.conv_stride, cfg.conv_stride};
  for (const auto& layer : params.conv) {
    h = o::relu(o::conv2d(h, layer.kernel, layer.bias, geom));
    if (trace) trace->conv_maps.push_back(h);
  }
  // [C x F' x T'] -> [C*F' x T'] -> [T' x C*F'] with feature index c*F' + f.
  const std::size_t steps = h.dim(2);
  auto seq = o::transpose(o::reshape(h, {h.dim(0) * h.dim(1), steps}));
  if (cfg.positional_encoding) seq = o::add(seq, positional_encoding<T>(steps, cfg.d_model));
  if (trace) trace->e_cnn = seq;
  for (const auto& layer : params.attn) {
    seq = attention_layer(seq, layer, cfg.n_heads, cfg.dropout, opts, trace ? &trace->attention : nullptr);
  }
  if (trace) trace->e_tran = seq;
  return seq;
}

template <typename T>
BasicForwardTrace<T> forward_bottleneck(const BasicKwsParams<T>& params, const BasicTensor<T>& features,
                                        const ForwardOptions& opts) {
  const auto& cfg = params.config;
  BasicForwardTrace<T> trace;
  const auto e_tran = encode(params, features, opts, &trace);
  const std::size_t steps = e_tran.dim(0);
  const auto last = o::slice(e_tran, 0, steps - cfg.select_frames, steps);
  const std::size_t feat_dim = cfg.select_frames * cfg.d_model;
  trace.e_feat = o::reshape(last, {feat_dim});
  const auto bn = o::relu(dense(o::reshape(last, {1, feat_dim}), params.bottleneck));
  trace.e_bn = o::reshape(bn, {cfg.d_bottleneck});
  return trace;
}

ForwardTrace forward_bottleneck(const KwsParams& params, const FeatureMatrix& x, const ForwardOptions& opts) {
  return forward_bottleneck(params, features_tensor<float>(x), opts);
}

Tensor forward_batch(const KwsParams& params, const std::vector<FeatureMatrix>& batch, const ForwardOptions& opts) {
  if (batch.empty()) throw ShapeError("forward_batch: empty batch");
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (const auto& x : batch) {
    rows.push_back(o::reshape(forward_bottleneck(params, x, opts).e_bn, {1, params.config.d_bottleneck}));
  }
  return o::concat(rows, 0);
}

template <typename T>
BasicTensor<T> classify(const BasicKwsParams<T>& params, const BasicTensor<T>& e_bn) {
  if (!params.project) throw ContractError("classify: network has no project head");
  if (e_bn.numel() != params.config.d_bottleneck) {
    throw ShapeError("classify: expected " + std::to_string(params.config.d_bottleneck) + "-dim input, got " +
                     shape_str(e_bn.shape()));
  }
  const auto y = dense(o::reshape(e_bn, {1, params.config.d_bottleneck}), *params.project);
  return o::reshape(y, {params.config.n_classes});
}

template <typename T>
BasicTensor<T> reconstruct(const BasicKwsParams<T>& params, const BasicTensor<T>& e_bn) {
  if (!params.reconstruct) throw ContractError("reconstruct: network has no reconstruct head");
  if (e_bn.numel() != params.config.d_bottleneck) {
    throw ShapeError("reconstruct: expected " + std::to_string(params.config.d_bottleneck) +
                     "-dim input, got " + shape_str(e_bn.shape()));
  }
  const auto y = dense(o::reshape(e_bn, {1, params.config.d_bottleneck}), *params.reconstruct);
  return o::reshape(y, {params.config.d_recon});
}

template <typename T>
BasicTensor<T> frame_predictions(const BasicKwsParams<T>& params, const BasicTensor<T>& e_tran,
                                 std::size_t frames) {
  if (!params.frame_head) throw ContractError("frame_predictions: network has no frame head");
  const auto& cfg = params.config;
  const std::size_t stride = cfg.time_stride();
  const std::size_t steps = e_tran.dim(0);
  if (frames > steps * stride) throw ShapeError("frame_predictions: more frames than the encoder covers");
  const auto blocks = dense(e_tran, *params.frame_head);  // [T' x stride*F]
  const auto rows = o::reshape(blocks, {steps * stride, cfg.d_feat});
  return frames == steps * stride ? rows : o::slice(rows, 0, 0, frames);
}

#define KWS_INSTANTIATE(T)                                                                                  \
  template struct BasicKwsParams<T>;                                                                        \
  template BasicKwsParams<T> init_params<T>(const ModelConfig&, Rng&, Heads);                              \
  template Dense<T> init_head<T>(const ModelConfig&, Heads, Rng&);                                         \
  template BasicTensor<T> positional_encoding<T>(std::size_t, std::size_t);                                \
  template BasicKwsParams<T> params_cast<T>(const BasicKwsParams<float>&);                                 \
  template BasicTensor<T> attention_layer<T>(const BasicTensor<T>&, const AttentionLayer<T>&, std::size_t, \
                                             double, const ForwardOptions&, std::vector<BasicTensor<T>>*); \
  template BasicTensor<T> features_tensor<T>(const FeatureMatrix&);                                        \
  template BasicTensor<T> encode<T>(const BasicKwsParams<T>&, const BasicTensor<T>&, const ForwardOptions&, \
                                    BasicForwardTrace<T>*);                                                 \
  template BasicForwardTrace<T> forward_bottleneck<T>(const BasicKwsParams<T>&, const BasicTensor<T>&,      \
                                                      const ForwardOptions&);                               \
  template BasicTensor<T> classify<T>(const BasicKwsParams<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> reconstruct<T>(const BasicKwsParams<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> frame_predictions<T>(const BasicKwsParams<T>&, const BasicTensor<T>&, std::size_t);

KWS_INSTANTIATE(float)
KWS_INSTANTIATE(double)

#undef KWS_INSTANTIATE

}  // namespace kws
