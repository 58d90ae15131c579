#include "kws/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace kws {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ParameterError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParameterError("bad value '" + std::string(v) + "' for " + std::string(key) + " (expected true or false)");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Access>
Field size_field(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return std::to_string(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, std::string_view v) { access(c) = parse_number<std::size_t>(key, v); }};
}

template <typename Access>
Field double_field(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return format_double(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, std::string_view v) { access(c) = parse_number<double>(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"frontend.sample_rate", [](const RunConfig& c) { return std::to_string(c.frontend.sample_rate); },
                 [](RunConfig& c, std::string_view v) {
                   c.frontend.sample_rate = parse_number<std::uint32_t>("frontend.sample_rate", v);
                 }});
    f.push_back(size_field("frontend.window", [](RunConfig& c) -> auto& { return c.frontend.window; }));
    f.push_back(size_field("frontend.hop", [](RunConfig& c) -> auto& { return c.frontend.hop; }));
    f.push_back(size_field("frontend.fft_size", [](RunConfig& c) -> auto& { return c.frontend.fft_size; }));
    f.push_back(size_field("frontend.n_mels", [](RunConfig& c) -> auto& { return c.frontend.n_mels; }));
    f.push_back(double_field("frontend.f_min", [](RunConfig& c) -> auto& { return c.frontend.f_min; }));
    f.push_back(double_field("frontend.f_max", [](RunConfig& c) -> auto& { return c.frontend.f_max; }));
    f.push_back(double_field("frontend.log_floor", [](RunConfig& c) -> auto& { return c.frontend.log_floor; }));

    f.push_back(double_field("augment.speed_min", [](RunConfig& c) -> auto& { return c.augment.speed.lo; }));
    f.push_back(double_field("augment.speed_max", [](RunConfig& c) -> auto& { return c.augment.speed.hi; }));
    f.push_back(double_field("augment.volume_min", [](RunConfig& c) -> auto& { return c.augment.volume.lo; }));
    f.push_back(double_field("augment.volume_max", [](RunConfig& c) -> auto& { return c.augment.volume.hi; }));
    f.push_back(double_field("augment.canvas_seconds", [](RunConfig& c) -> auto& { return c.augment.canvas_seconds; }));

    f.push_back(size_field("model.n_conv", [](RunConfig& c) -> auto& { return c.model.n_conv; }));
    f.push_back(size_field("model.conv_channels", [](RunConfig& c) -> auto& { return c.model.conv_channels; }));
    f.push_back(size_field("model.conv_kernel", [](RunConfig& c) -> auto& { return c.model.conv_kernel; }));
    f.push_back(size_field("model.conv_stride", [](RunConfig& c) -> auto& { return c.model.conv_stride; }));
    f.push_back(size_field("model.n_attn", [](RunConfig& c) -> auto& { return c.model.n_attn; }));
    f.push_back(size_field("model.d_model", [](RunConfig& c) -> auto& { return c.model.d_model; }));
    f.push_back(size_field("model.n_heads", [](RunConfig& c) -> auto& { return c.model.n_heads; }));
    f.push_back(size_field("model.d_ff", [](RunConfig& c) -> auto& { return c.model.d_ff; }));
    f.push_back(size_field("model.select_frames", [](RunConfig& c) -> auto& { return c.model.select_frames; }));
    f.push_back(size_field("model.d_bottleneck", [](RunConfig& c) -> auto& { return c.model.d_bottleneck; }));
    f.push_back(size_field("model.n_classes", [](RunConfig& c) -> auto& { return c.model.n_classes; }));
    f.push_back(size_field("model.d_feat", [](RunConfig& c) -> auto& { return c.model.d_feat; }));
    f.push_back(size_field("model.d_recon", [](RunConfig& c) -> auto& { return c.model.d_recon; }));
    f.push_back(double_field("model.dropout", [](RunConfig& c) -> auto& { return c.model.dropout; }));
    f.push_back({"model.positional_encoding",
                 [](const RunConfig& c) { return std::string(c.model.positional_encoding ? "true" : "false"); },
                 [](RunConfig& c, std::string_view v) {
                   c.model.positional_encoding = parse_bool("model.positional_encoding", v);
                 }});

    f.push_back({"train.stage", [](const RunConfig& c) { return std::string(stage_name(c.train.stage)); },
                 [](RunConfig& c, std::string_view v) { c.train.stage = parse_stage(std::string(v)); }});
    f.push_back(size_field("train.steps", [](RunConfig& c) -> auto& { return c.train.steps; }));
    f.push_back(size_field("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    f.push_back(double_field("train.lr", [](RunConfig& c) -> auto& { return c.train.adam.lr; }));
    f.push_back(double_field("train.beta1", [](RunConfig& c) -> auto& { return c.train.adam.beta1; }));
    f.push_back(double_field("train.beta2", [](RunConfig& c) -> auto& { return c.train.adam.beta2; }));
    f.push_back(double_field("train.eps", [](RunConfig& c) -> auto& { return c.train.adam.eps; }));
    f.push_back(size_field("train.warmup_steps", [](RunConfig& c) -> auto& { return c.train.warmup_steps; }));
    f.push_back({"train.seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
                 [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>("train.seed", v); }});
    f.push_back(size_field("train.eval_every", [](RunConfig& c) -> auto& { return c.train.eval_every; }));
    f.push_back(size_field("train.checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; }));
    f.push_back({"train.objective", [](const RunConfig& c) { return std::string(objective_name(c.train.objective)); },
                 [](RunConfig& c, std::string_view v) { c.train.objective = parse_objective(std::string(v)); }});
    f.push_back(size_field("train.apc_shift", [](RunConfig& c) -> auto& { return c.train.apc_shift; }));
    f.push_back(double_field("train.mask_fraction", [](RunConfig& c) -> auto& { return c.train.mask.chosen_fraction; }));
    f.push_back(double_field("train.mask_zero", [](RunConfig& c) -> auto& { return c.train.mask.zero_fraction; }));
    f.push_back(double_field("train.mask_swap", [](RunConfig& c) -> auto& { return c.train.mask.swap_fraction; }));
    f.push_back(double_field("train.unknown_fraction", [](RunConfig& c) -> auto& { return c.train.unknown_fraction; }));
    f.push_back(size_field("train.plateau_window", [](RunConfig& c) -> auto& { return c.train.plateau_window; }));
    f.push_back(
        double_field("train.plateau_tolerance", [](RunConfig& c) -> auto& { return c.train.plateau_tolerance; }));
    f.push_back(double_field("train.target_accuracy", [](RunConfig& c) -> auto& { return c.train.target_accuracy; }));
    f.push_back({"train.track_train_accuracy",
                 [](const RunConfig& c) { return std::string(c.train.track_train_accuracy ? "true" : "false"); },
                 [](RunConfig& c, std::string_view v) {
                   c.train.track_train_accuracy = parse_bool("train.track_train_accuracy", v);
                 }});
    f.push_back(double_field("train.stop_at_train_accuracy",
                             [](RunConfig& c) -> auto& { return c.train.stop_at_train_accuracy; }));

    f.push_back(double_field("loss.similarity", [](RunConfig& c) -> auto& { return c.train.weights.similarity; }));
    f.push_back(double_field("loss.recon", [](RunConfig& c) -> auto& { return c.train.weights.recon; }));
    f.push_back(double_field("loss.recon_aug", [](RunConfig& c) -> auto& { return c.train.weights.recon_aug; }));
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ParameterError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::validate() const {
  frontend.validate();
  augment.validate();
  model.validate();
  train.validate();
  if (model.d_feat != frontend.n_mels) {
    throw ParameterError("model.d_feat (" + std::to_string(model.d_feat) + ") must equal frontend.n_mels (" +
                         std::to_string(frontend.n_mels) + ")");
  }
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string run_config_get(const RunConfig& c, std::string_view key) { return find_field(key).get(c); }

void run_config_set(RunConfig& c, std::string_view key, std::string_view value) {
  find_field(trim(key)).set(c, trim(value));
}

void run_config_assign(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ParameterError("expected key=value, got '" + std::string(assignment) + "'");
  }
  run_config_set(c, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig parse_run_config(std::string_view text, const std::string& origin) {
  RunConfig c;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      run_config_assign(c, line);
    } catch (const ParameterError& e) {
      throw ParameterError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

std::string serialize_run_config(const RunConfig& c) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto s = f.key.substr(0, f.key.find('.'));
    if (s != section) {
      if (!section.empty()) out += '\n';
      out += "# " + s + "\n";
      section = s;
    }
    out += f.key + " = " + f.get(c) + "\n";
  }
  return out;
}

}  // namespace kws
