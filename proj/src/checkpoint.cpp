#include "kws/checkpoint.hpp"

#include <cmath>
#include <set>

namespace kws {
namespace {

std::vector<float> split_u64(std::uint64_t v) {
  // Three 24-bit limbs: each is exactly representable in a float.
  return {static_cast<float>(v >> 48), static_cast<float>((v >> 24) & 0xffffff), static_cast<float>(v & 0xffffff)};
}

std::uint64_t join_u64(const std::vector<float>& v) {
  if (v.size() != 3) throw LoadError("checkpoint: malformed integer field");
  return (static_cast<std::uint64_t>(v[0]) << 48) | (static_cast<std::uint64_t>(v[1]) << 24) |
         static_cast<std::uint64_t>(v[2]);
}

std::vector<float> encode_config(const ModelConfig& c) {
  return {static_cast<float>(c.n_conv),        static_cast<float>(c.conv_channels), static_cast<float>(c.conv_kernel),
          static_cast<float>(c.conv_stride),   static_cast<float>(c.n_attn),        static_cast<float>(c.d_model),
          static_cast<float>(c.n_heads),       static_cast<float>(c.d_ff),          static_cast<float>(c.select_frames),
          static_cast<float>(c.d_bottleneck),  static_cast<float>(c.n_classes),     static_cast<float>(c.d_feat),
          static_cast<float>(c.d_recon),       static_cast<float>(c.dropout),       c.positional_encoding ? 1.0f : 0.0f};
}

ModelConfig decode_config(const std::vector<float>& v) {
  if (v.size() != 15) throw LoadError("checkpoint: meta.config has " + std::to_string(v.size()) + " fields");
  auto z = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  ModelConfig c;
  c.n_conv = z(0);
  c.conv_channels = z(1);
  c.conv_kernel = z(2);
  c.conv_stride = z(3);
  c.n_attn = z(4);
  c.d_model = z(5);
  c.n_heads = z(6);
  c.d_ff = z(7);
  c.select_frames = z(8);
  c.d_bottleneck = z(9);
  c.n_classes = z(10);
  c.d_feat = z(11);
  c.d_recon = z(12);
  c.dropout = static_cast<double>(v[13]);
  c.positional_encoding = v[14] != 0.0f;
  return c;
}

bool same_layout(const ModelConfig& a, const ModelConfig& b) {
  ModelConfig x = a, y = b;
  x.dropout = y.dropout = 0.0;
  return x == y;
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::pretrain:
      return "pretrain";
    case Stage::finetune:
      return "finetune";
    case Stage::supervised:
      return "supervised";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::pretrain;
  if (s == "finetune") return Stage::finetune;
  if (s == "supervised") return Stage::supervised;
  throw ParameterError("unknown stage '" + s + "'");
}

Container to_container(const Checkpoint& ckpt) {
  Container c;
  c.entries.push_back({"meta.config", {15}, encode_config(ckpt.params.config)});
  c.entries.push_back({"meta.stage", {1}, {static_cast<float>(static_cast<int>(ckpt.stage))}});
  c.entries.push_back({"meta.step", {3}, split_u64(ckpt.step)});
  const auto named = ckpt.params.named();
  for (const auto& p : named) {
    c.entries.push_back({p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
  }
  if (ckpt.optimizer) {
    c.entries.push_back({"adam.t", {3}, split_u64(ckpt.optimizer->t)});
    for (const auto& [name, mom] : ckpt.optimizer->moments) {
      c.entries.push_back({"adam.m." + name, {mom.m.size()}, mom.m});
      c.entries.push_back({"adam.v." + name, {mom.v.size()}, mom.v});
    }
  }
  return c;
}

Checkpoint from_container(const Container& c, const std::optional<ModelConfig>& expected) {
  auto need = [&](const std::string& name) -> const ContainerEntry& {
    const auto* e = c.find(name);
    if (!e) throw LoadError("checkpoint: missing tensor " + name);
    return *e;
  };
  Checkpoint ckpt;
  const ModelConfig stored = decode_config(need("meta.config").values);
  if (expected && !same_layout(stored, *expected)) {
    throw LoadError("checkpoint: stored model config does not match the requested one");
  }
  const auto stage_code = static_cast<int>(need("meta.stage").values.at(0));
  if (stage_code < 0 || stage_code > 2) throw LoadError("checkpoint: bad stage code");
  ckpt.stage = static_cast<Stage>(stage_code);
  ckpt.step = join_u64(need("meta.step").values);

  Heads heads = Heads::none;
  if (c.find("project.weight")) heads = heads | Heads::classify;
  if (c.find("reconstruct.weight")) heads = heads | Heads::reconstruct;
  if (c.find("frame_head.weight")) heads = heads | Heads::frame;
  ModelConfig cfg = expected ? *expected : stored;
  Rng scratch(0);
  ckpt.params = init_params<float>(cfg, scratch, heads);
  std::set<std::string> consumed = {"meta.config", "meta.stage", "meta.step"};
  for (auto& p : ckpt.params.named()) {
    const auto& e = need(p.name);
    if (e.shape != p.tensor.shape()) {
      throw LoadError("checkpoint: tensor " + p.name + " has shape " + shape_str(e.shape) + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), p.tensor.mutable_values().begin());
    consumed.insert(p.name);
  }
  if (const auto* t = c.find("adam.t")) {
    OptimizerState st;
    st.t = join_u64(t->values);
    consumed.insert("adam.t");
    for (const auto& p : ckpt.params.named()) {
      const auto* m = c.find("adam.m." + p.name);
      const auto* v = c.find("adam.v." + p.name);
      if (!m || !v) continue;
      if (m->values.size() != p.tensor.numel() || v->values.size() != p.tensor.numel()) {
        throw LoadError("checkpoint: optimizer state for " + p.name + " has the wrong size");
      }
      st.moments[p.name] = {m->values, v->values};
      consumed.insert(m->name);
      consumed.insert(v->name);
    }
    ckpt.optimizer = std::move(st);
  }
  for (const auto& e : c.entries) {
    if (!consumed.count(e.name)) throw LoadError("checkpoint: unexpected tensor " + e.name);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_container_file(path, to_container(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  const auto c = read_container_file(path);
  try {
    return from_container(c, expected);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace kws
