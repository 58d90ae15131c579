#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "kws/frontend.hpp"
#include "kws/ops.hpp"
#include "kws/random.hpp"
#include "kws/tensor.hpp"

namespace kws {

/// Layer configuration. Defaults are the reference network: two 3x3/stride-2
/// conv layers with 32 channels, two 320-wide 4-head attention layers with a
/// 1024 feedforward, the last 2 frames selected, an 800-unit bottleneck, a
/// 12-way project head and a 40-dim reconstruct head.
struct ModelConfig {
  std::size_t n_conv = 2;
  std::size_t conv_channels = 32;
  std::size_t conv_kernel = 3;
  std::size_t conv_stride = 2;
  std::size_t n_attn = 2;
  std::size_t d_model = 320;
  std::size_t n_heads = 4;
  std::size_t d_ff = 1024;
  std::size_t select_frames = 2;
  std::size_t d_bottleneck = 800;
  std::size_t n_classes = 12;
  std::size_t d_feat = 40;
  std::size_t d_recon = 40;
  double dropout = 0.1;
  bool positional_encoding = true;

  /// Throws ParameterError when channels x reduced mel bins != d_model,
  /// heads do not divide d_model, or any extent is zero.
  void validate() const;
  /// Extent after the conv stack along an axis of input length n.
  std::size_t reduced(std::size_t n) const;
  /// Input frames between consecutive encoder frames.
  std::size_t time_stride() const;
  /// Fewest input frames whose encoded sequence holds select_frames rows.
  std::size_t min_input_frames() const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ConvLayer {
  BasicTensor<T> kernel;  // C_out x C_in x k x k
  BasicTensor<T> bias;    // C_out
};

/// Weights are stored input-major ([in x out]) so layers compute x . W + b.
template <typename T>
struct Dense {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
struct AttentionLayer {
  Dense<T> query, key, value, output;
  Dense<T> ff_in, ff_out;
  BasicTensor<T> norm1_gain, norm1_shift;
  BasicTensor<T> norm2_gain, norm2_shift;
};

enum class Heads : unsigned {
  none = 0,
  classify = 1u << 0,     // project layer (logits)
  reconstruct = 1u << 1,  // average-feature regression
  frame = 1u << 2,        // per-frame predictor used by APC/MPC
};
constexpr Heads operator|(Heads a, Heads b) {
  return static_cast<Heads>(static_cast<unsigned>(a) | static_cast<unsigned>(b));
}
constexpr bool has(Heads set, Heads h) { return (static_cast<unsigned>(set) & static_cast<unsigned>(h)) != 0; }

template <typename T>
struct BasicKwsParams {
  ModelConfig config;
  std::vector<ConvLayer<T>> conv;
  std::vector<AttentionLayer<T>> attn;
  Dense<T> bottleneck;
  std::optional<Dense<T>> project;
  std::optional<Dense<T>> reconstruct;
  std::optional<Dense<T>> frame_head;

  /// Trainable tensors with stable names, in a fixed order.
  std::vector<NamedTensor<T>> named() const;
  std::size_t parameter_count() const;
  /// Deep copy.
  BasicKwsParams clone() const;
};

using KwsParams = BasicKwsParams<float>;
using KwsParams64 = BasicKwsParams<double>;

/// Glorot-uniform weights, biases 0.1, layer-norm gains 1 and shifts 0.
template <typename T>
BasicKwsParams<T> init_params(const ModelConfig& cfg, Rng& rng,
                              Heads heads = Heads::classify | Heads::reconstruct);
/// Freshly initialized head of the given kind for an existing network.
template <typename T>
Dense<T> init_head(const ModelConfig& cfg, Heads head, Rng& rng);

/// Analytic trainable-parameter count for a config and head set.
std::size_t parameter_count(const ModelConfig& cfg, Heads heads);

/// Sinusoidal positional table [length x width].
template <typename T>
BasicTensor<T> positional_encoding(std::size_t length, std::size_t width);

template <typename T>
BasicKwsParams<T> params_cast(const BasicKwsParams<float>& p);

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

template <typename T>
struct BasicForwardTrace {
  std::vector<BasicTensor<T>> conv_maps;  // C x H x W after each conv+ReLU
  BasicTensor<T> e_cnn;                   // T' x d_model
  BasicTensor<T> e_tran;                  // T' x d_model
  BasicTensor<T> e_feat;                  // [select_frames * d_model]
  BasicTensor<T> e_bn;                    // [d_bottleneck]
  std::vector<BasicTensor<T>> attention;  // per layer and head: T' x T' weights
};

using ForwardTrace = BasicForwardTrace<float>;

/// Post-norm transformer encoder layer with full bidirectional attention.
/// Appends each head's attention weights to `weights` when given.
template <typename T>
BasicTensor<T> attention_layer(const BasicTensor<T>& x, const AttentionLayer<T>& layer, std::size_t n_heads,
                               double dropout_rate = 0.0, const ForwardOptions& opts = {},
                               std::vector<BasicTensor<T>>* weights = nullptr);

/// Feature matrix [T x d_feat] as a tensor.
template <typename T>
BasicTensor<T> features_tensor(const FeatureMatrix& x);

/// Conv stack -> attention stack; returns E_tran [T' x d_model].
template <typename T>
BasicTensor<T> encode(const BasicKwsParams<T>& params, const BasicTensor<T>& features,
                      const ForwardOptions& opts = {}, BasicForwardTrace<T>* trace = nullptr);

/// Full path to the bottleneck. `features` is [T x d_feat].
template <typename T>
BasicForwardTrace<T> forward_bottleneck(const BasicKwsParams<T>& params, const BasicTensor<T>& features,
                                        const ForwardOptions& opts = {});
ForwardTrace forward_bottleneck(const KwsParams& params, const FeatureMatrix& x, const ForwardOptions& opts = {});

/// Stacked bottlenecks [B x d_bottleneck], one forward per item.
Tensor forward_batch(const KwsParams& params, const std::vector<FeatureMatrix>& batch,
                     const ForwardOptions& opts = {});

/// Logits [n_classes]; softmax is left to the loss / inference.
template <typename T>
BasicTensor<T> classify(const BasicKwsParams<T>& params, const BasicTensor<T>& e_bn);

/// Average-feature prediction [d_recon], linear output.
template <typename T>
BasicTensor<T> reconstruct(const BasicKwsParams<T>& params, const BasicTensor<T>& e_bn);

/// Per-input-frame predictions [frames x d_feat] from the frame head. Encoder
/// row j predicts the time_stride() input frames of its block.
template <typename T>
BasicTensor<T> frame_predictions(const BasicKwsParams<T>& params, const BasicTensor<T>& e_tran,
                                 std::size_t frames);

}  // namespace kws
