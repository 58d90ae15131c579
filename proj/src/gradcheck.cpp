#include "kws/gradcheck.hpp"

#include <cmath>

#include "kws/model.hpp"
#include "kws/objectives.hpp"
#include "kws/ops.hpp"
#include "kws/random.hpp"
#include "kws/tape.hpp"

namespace kws {
namespace o = ops;

GradCheckResult check_gradient(const std::string& name, const std::function<Tensor64()>& loss,
                               const std::vector<NamedTensor<double>>& wrt, const GradCheckOptions& opts) {
  GradCheckResult res;
  res.name = name;
  for (const auto& w : wrt) {
    if (!res.shape.empty()) res.shape += " ";
    res.shape += shape_str(w.tensor.shape());
    w.tensor.set_requires_grad(true);
    w.tensor.zero_grad();
  }
  {
    Tape64 tape;
    TapeScope<double> scope(tape);
    tape.backward(loss());
  }
  NoTapeScope<double> no_tape;
  Rng rng(opts.seed);
  for (auto w : wrt) {
    const std::vector<double> analytic(w.tensor.grad().begin(), w.tensor.grad().end());
    std::vector<std::size_t> entries;
    const std::size_t n = w.tensor.numel();
    if (opts.max_entries == 0 || opts.max_entries >= n) {
      for (std::size_t i = 0; i < n; ++i) entries.push_back(i);
    } else {
      for (std::size_t k = 0; k < opts.max_entries; ++k) entries.push_back(rng.below(n));
    }
    auto values = w.tensor.mutable_values();
    for (std::size_t i : entries) {
      const double keep = values[i];
      values[i] = keep + opts.step;
      const double up = loss().item();
      values[i] = keep - opts.step;
      const double down = loss().item();
      values[i] = keep;
      const double numeric = (up - down) / (2 * opts.step);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.checked;
    }
  }
  res.passed = std::isfinite(res.max_rel_error) && res.max_rel_error <= opts.tolerance;
  return res;
}

namespace {

// Values bounded away from zero so kinked primitives are smooth at +-h.
Tensor64 random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, double gap = 0.05) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.mutable_values()) {
    do {
      v = rng.uniform(lo, hi);
    } while (std::abs(v) < gap);
  }
  return t;
}

std::size_t pick_size(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes a distinct amount.
Tensor64 project(const Tensor64& out, const Tensor64& weights) { return o::sum_all(o::mul(out, weights)); }

using Builder = std::function<Tensor64(const std::vector<Tensor64>&)>;

GradCheckResult check_op(const std::string& name, std::vector<Tensor64> inputs, const Builder& build, Rng& rng,
                         const GradCheckOptions& opts) {
  Tensor64 weights;
  {
    NoTapeScope<double> no_tape;
    weights = random_tensor(build(inputs).shape(), rng);
  }
  std::vector<NamedTensor<double>> wrt;
  for (std::size_t i = 0; i < inputs.size(); ++i) wrt.push_back({"in" + std::to_string(i), inputs[i]});
  auto res = check_gradient(name, [&] { return project(build(inputs), weights); }, wrt, opts);
  return res;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_feat = 8;
  c.d_recon = 8;
  c.conv_channels = 4;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.d_bottleneck = 12;
  c.n_classes = 3;
  c.dropout = 0.0;
  return c;
}

void model_cases(std::vector<GradCheckResult>& out, const ModelConfig& cfg, std::size_t frames, Rng& rng,
                 const GradCheckOptions& opts, const std::string& tag) {
  Rng init(rng.next());
  const auto p32 = init_params<float>(cfg, init, Heads::classify | Heads::reconstruct | Heads::frame);
  auto p = params_cast<double>(p32);
  const auto x = random_tensor({frames, cfg.d_feat}, rng, -3.0, 1.0, 0.0);
  const auto x_aug = random_tensor({frames, cfg.d_feat}, rng, -3.0, 1.0, 0.0);
  const std::size_t label = rng.below(cfg.n_classes);
  auto wrt = p.named();
  wrt.push_back({"x", x});
  wrt.push_back({"x_aug", x_aug});
  const LossWeights w;

  auto e_bn = [&](const Tensor64& in) { return forward_bottleneck(p, in).e_bn; };
  out.push_back(check_gradient(
      "L_ce" + tag, [&] { return ce_loss(classify(p, e_bn(x)), label); }, wrt, opts));
  out.push_back(check_gradient("L_sim" + tag, [&] { return sim_loss(e_bn(x), e_bn(x_aug)); }, wrt, opts));
  out.push_back(check_gradient(
      "L_x" + tag, [&] { return recon_loss(x, reconstruct(p, e_bn(x))); }, wrt, opts));
  out.push_back(check_gradient(
      "L_ul" + tag,
      [&] {
        const auto a = e_bn(x), b = e_bn(x_aug);
        return unsup_loss(UnsupervisedTerms<double>{sim_loss(a, b), recon_loss(x, reconstruct(p, a)),
                                                    recon_loss(x_aug, reconstruct(p, b))},
                          w);
      },
      wrt, opts));
  out.push_back(check_gradient(
      "L_apc" + tag, [&] { return apc_loss(x, frame_predictions(p, encode(p, x), frames), 3); }, wrt, opts));
  FeatureMatrix fm(frames, cfg.d_feat, std::vector<float>(x.values().begin(), x.values().end()));
  Rng mask_rng(rng.next());
  MaskConfig mc;
  mc.chosen_fraction = 0.3;
  const auto masked = mpc_mask(fm, mask_rng, mc);
  const auto xm = features_tensor<double>(masked.features);
  out.push_back(check_gradient(
      "L_mpc" + tag, [&] { return mpc_loss(frame_predictions(p, encode(p, xm), frames), x, masked.plan); }, wrt,
      opts));
}

}  // namespace

std::vector<GradCheckResult> gradient_suite(const GradSuiteOptions& so) {
  std::vector<GradCheckResult> out;
  Rng rng(so.seed);
  const auto& opts = so.check;
  for (std::size_t s = 0; s < so.shapes_per_case; ++s) {
    const std::size_t m = pick_size(rng, 1, 5), k = pick_size(rng, 1, 5), n = pick_size(rng, 2, 6);
    const Shape mn{m, n};
    out.push_back(check_op("matmul", {random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                           [](const auto& in) { return o::matmul(in[0], in[1]); }, rng, opts));
    out.push_back(check_op("add", {random_tensor(mn, rng), random_tensor(mn, rng)},
                           [](const auto& in) { return o::add(in[0], in[1]); }, rng, opts));
    out.push_back(check_op("sub", {random_tensor(mn, rng), random_tensor(mn, rng)},
                           [](const auto& in) { return o::sub(in[0], in[1]); }, rng, opts));
    out.push_back(check_op("mul", {random_tensor(mn, rng), random_tensor(mn, rng)},
                           [](const auto& in) { return o::mul(in[0], in[1]); }, rng, opts));
    const double factor = rng.uniform(-2.0, 2.0);
    out.push_back(check_op("scale", {random_tensor(mn, rng)},
                           [factor](const auto& in) { return o::scale(in[0], factor); }, rng, opts));
    out.push_back(check_op("add_bias", {random_tensor(mn, rng), random_tensor({n}, rng)},
                           [](const auto& in) { return o::add_bias(in[0], in[1]); }, rng, opts));
    out.push_back(check_op("relu", {random_tensor(mn, rng)}, [](const auto& in) { return o::relu(in[0]); }, rng,
                           opts));
    out.push_back(check_op("log", {random_tensor(mn, rng, 0.2, 3.0)}, [](const auto& in) { return o::log(in[0]); },
                           rng, opts));
    out.push_back(check_op("square", {random_tensor(mn, rng)}, [](const auto& in) { return o::square(in[0]); },
                           rng, opts));
    out.push_back(check_op("abs", {random_tensor(mn, rng)}, [](const auto& in) { return o::abs(in[0]); }, rng,
                           opts));
    out.push_back(check_op("softmax", {random_tensor(mn, rng, -3, 3)},
                           [](const auto& in) { return o::softmax(in[0]); }, rng, opts));
    out.push_back(check_op("log_softmax", {random_tensor(mn, rng, -3, 3)},
                           [](const auto& in) { return o::log_softmax(in[0]); }, rng, opts));
    const std::size_t axis = rng.below(2);
    Shape other = mn;
    other[axis] = pick_size(rng, 1, 4);
    out.push_back(check_op("concat", {random_tensor(mn, rng), random_tensor(other, rng)},
                           [axis](const auto& in) { return o::concat(in, axis); }, rng, opts));
    out.push_back(check_op("reshape", {random_tensor(mn, rng)},
                           [m, n](const auto& in) { return o::reshape(in[0], {n, m}); }, rng, opts));
    out.push_back(check_op("transpose", {random_tensor(mn, rng)},
                           [](const auto& in) { return o::transpose(in[0]); }, rng, opts));
    const std::size_t lo = rng.below(n - 1), hi = lo + 1 + rng.below(n - lo - 1 + 1);
    out.push_back(check_op("slice", {random_tensor(mn, rng)},
                           [lo, hi](const auto& in) { return o::slice(in[0], 1, lo, std::min(hi, in[0].dim(1))); },
                           rng, opts));
    out.push_back(check_op("mean", {random_tensor(mn, rng)},
                           [axis](const auto& in) { return o::mean(in[0], axis); }, rng, opts));
    out.push_back(check_op("mean_all", {random_tensor(mn, rng)}, [](const auto& in) { return o::mean_all(in[0]); },
                           rng, opts));
    out.push_back(check_op("sum_all", {random_tensor(mn, rng)}, [](const auto& in) { return o::sum_all(in[0]); },
                           rng, opts));
    const std::size_t idx = rng.below(m * n);
    out.push_back(check_op("pick", {random_tensor(mn, rng)},
                           [idx](const auto& in) { return o::pick(in[0], idx); }, rng, opts));
    out.push_back(check_op("layer_norm", {random_tensor(mn, rng, -2, 2), random_tensor({n}, rng),
                                          random_tensor({n}, rng)},
                           [](const auto& in) { return o::layer_norm(in[0], in[1], in[2]); }, rng, opts));

    const std::size_t cin = pick_size(rng, 1, 3), cout = pick_size(rng, 1, 3), kh = pick_size(rng, 1, 3);
    const std::size_t h = pick_size(rng, 3, 8), wd = pick_size(rng, 3, 8);
    const o::Conv2dGeometry geom{pick_size(rng, 1, 2), pick_size(rng, 1, 2)};
    out.push_back(check_op("conv2d", {random_tensor({cin, h, wd}, rng), random_tensor({cout, cin, kh, kh}, rng),
                                      random_tensor({cout}, rng)},
                           [geom](const auto& in) { return o::conv2d(in[0], in[1], in[2], geom); }, rng, opts));
    const std::uint64_t drop_seed = rng.next();
    out.push_back(check_op("dropout", {random_tensor(mn, rng)},
                           [drop_seed](const auto& in) {
                             Rng r(drop_seed);
                             return o::dropout(in[0], 0.3, r);
                           },
                           rng, opts));

    // One attention layer with random weights.
    const std::size_t heads = pick_size(rng, 1, 2), width = heads * pick_size(rng, 2, 3), ff = pick_size(rng, 3, 6);
    const std::size_t steps = pick_size(rng, 2, 5);
    auto dense = [&](std::size_t i, std::size_t o_) {
      return Dense<double>{random_tensor({i, o_}, rng, -0.8, 0.8), random_tensor({o_}, rng, -0.2, 0.2)};
    };
    AttentionLayer<double> layer{dense(width, width), dense(width, width), dense(width, width),
                                 dense(width, width), dense(width, ff),    dense(ff, width),
                                 random_tensor({width}, rng, 0.5, 1.5),    random_tensor({width}, rng),
                                 random_tensor({width}, rng, 0.5, 1.5),    random_tensor({width}, rng)};
    std::vector<Tensor64> att_in{random_tensor({steps, width}, rng)};
    for (const auto* d : {&layer.query, &layer.key, &layer.value, &layer.output, &layer.ff_in, &layer.ff_out}) {
      att_in.push_back(d->weight);
      att_in.push_back(d->bias);
    }
    for (const auto& t : {layer.norm1_gain, layer.norm1_shift, layer.norm2_gain, layer.norm2_shift}) att_in.push_back(t);
    out.push_back(check_op("attention_layer", att_in,
                           [&layer, heads](const auto& in) { return attention_layer(in[0], layer, heads); }, rng,
                           opts));

    const auto cfg = small_config();
    const std::size_t frames = cfg.min_input_frames() + rng.below(12);
    model_cases(out, cfg, frames, rng, opts, "");
  }
  if (so.full_size) {
    GradCheckOptions sampled = opts;
    sampled.max_entries = 3;
    model_cases(out, ModelConfig{}, 24, rng, sampled, " (full size)");
  }
  return out;
}

}  // namespace kws
