#include "semu/config.hpp"

#include "semu/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace semu {

namespace {

using ordered_json = nlohmann::ordered_json;

// Strict reader over one JSON object: every key must be consumed exactly once,
// leftovers raise ConfigError with the dotted path.
class Section {
 public:
  Section(const ordered_json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object())
      throw ConfigError("config field '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) {
    return obj_.contains(key);
  }

  const ordered_json& raw(const std::string& key) {
    used_.insert(key);
    return obj_.at(key);
  }

  std::string dotted(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double get_double(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number())
      throw ConfigError("config field '" + dotted(key) + "' must be a number");
    return v.get<double>();
  }

  std::size_t get_uint(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError("config field '" + dotted(key) +
                        "' must be a nonnegative integer");
    return v.get<std::size_t>();
  }

  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) {
    return static_cast<std::uint64_t>(get_uint(key, static_cast<std::size_t>(fallback)));
  }

  int get_int(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError("config field '" + dotted(key) + "' must be an integer");
    return v.get<int>();
  }

  bool get_bool(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean())
      throw ConfigError("config field '" + dotted(key) + "' must be a boolean");
    return v.get<bool>();
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_string())
      throw ConfigError("config field '" + dotted(key) + "' must be a string");
    return v.get<std::string>();
  }

  std::vector<std::size_t> get_uint_list(const std::string& key,
                                         std::vector<std::size_t> fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_array())
      throw ConfigError("config field '" + dotted(key) + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0))
        throw ConfigError("config field '" + dotted(key) +
                          "' must hold nonnegative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  void finish() {
    for (const auto& [key, value] : obj_.items()) {
      (void)value;
      if (!used_.count(key))
        throw ConfigError("config has unknown field '" + dotted(key) + "'");
    }
  }

 private:
  const ordered_json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

RunConfig::Task task_from_string(const std::string& s) {
  if (s == "classification") return RunConfig::Task::classification;
  if (s == "diffusion") return RunConfig::Task::diffusion;
  throw ConfigError("config field 'task' must be classification or diffusion, got '" +
                    s + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (model.hidden.empty())
    throw ConfigError("config field 'model.hidden' must name at least one layer width");
  for (std::size_t w : model.hidden)
    if (w == 0) throw ConfigError("config field 'model.hidden' widths must be positive");
  if (blobs.num_classes < 2)
    throw ConfigError("config field 'dataset.num_classes' must be at least 2");
  if (forget.kind == ForgetKind::random_fraction &&
      !(forget.fraction > 0.0 && forget.fraction < 1.0))
    throw ConfigError("config field 'forget.fraction' must lie in (0, 1)");
  if (forget.class_label < 0)
    throw ConfigError("config field 'forget.forget_class' must be nonnegative");
  if (task == Task::diffusion && forget.kind != ForgetKind::class_wise)
    throw ConfigError("diffusion runs forget a class: set forget.kind to class_wise");
  if (accum_batch_size == 0)
    throw ConfigError("config field 'semu.accum_batch_size' must be positive");
  // the diffusion noise net is always three dense layers
  std::size_t layers = task == Task::diffusion ? 3 : model.hidden.size() + 1;
  semu.validate(layers);
}

RunConfig parse_run_config(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  Section root(doc, "");

  if (!root.has("task"))
    throw ConfigError("config missing required field 'task'");
  cfg.task = task_from_string(root.get_string("task", ""));
  const bool diffusion = cfg.task == RunConfig::Task::diffusion;

  if (diffusion) {
    cfg.train.epochs = 60;
    cfg.train.batch_size = 64;
  }

  if (root.has("model")) {
    if (diffusion)
      throw ConfigError(
          "config has a 'model' section but task is diffusion (use diffusion.hidden)");
    Section s(root.raw("model"), "model");
    cfg.model.hidden = s.get_uint_list("hidden", cfg.model.hidden);
    s.finish();
  }

  if (root.has("dataset")) {
    Section s(root.raw("dataset"), "dataset");
    if (diffusion) {
      cfg.mixture.per_class = s.get_uint("per_class", cfg.mixture.per_class);
      cfg.mixture.radius = s.get_double("radius", cfg.mixture.radius);
      cfg.mixture.sigma = s.get_double("sigma", cfg.mixture.sigma);
    } else {
      cfg.blobs.num_classes = s.get_uint("num_classes", cfg.blobs.num_classes);
      cfg.blobs.per_class = s.get_uint("per_class", cfg.blobs.per_class);
      cfg.blobs.dim = s.get_uint("dim", cfg.blobs.dim);
      cfg.blobs.separation = s.get_double("separation", cfg.blobs.separation);
      cfg.blobs.sigma = s.get_double("sigma", cfg.blobs.sigma);
    }
    s.finish();
  }

  if (root.has("forget")) {
    Section s(root.raw("forget"), "forget");
    if (s.has("kind")) {
      try {
        cfg.forget.kind = forget_kind_from_string(s.get_string("kind", ""));
      } catch (const ConfigError&) {
        throw ConfigError(
            "config field 'forget.kind' must be random_fraction or class_wise");
      }
    } else if (diffusion) {
      cfg.forget.kind = ForgetKind::class_wise;
    }
    cfg.forget.fraction = s.get_double("fraction", cfg.forget.fraction);
    cfg.forget.class_label = s.get_int("forget_class", cfg.forget.class_label);
    s.finish();
  } else if (diffusion) {
    cfg.forget.kind = ForgetKind::class_wise;
  }

  if (root.has("train")) {
    Section s(root.raw("train"), "train");
    cfg.train.epochs = s.get_uint("epochs", cfg.train.epochs);
    cfg.train.lr = s.get_double("lr", cfg.train.lr);
    cfg.train.momentum = s.get_double("momentum", cfg.train.momentum);
    cfg.train.batch_size = s.get_uint("batch_size", cfg.train.batch_size);
    s.finish();
  }

  if (root.has("semu")) {
    Section s(root.raw("semu"), "semu");
    cfg.semu.gamma_default = s.get_double("gamma", cfg.semu.gamma_default);
    if (s.has("gamma_overrides")) {
      const auto& ov = s.raw("gamma_overrides");
      if (!ov.is_object())
        throw ConfigError("config field 'semu.gamma_overrides' must be an object");
      for (const auto& [key, value] : ov.items()) {
        std::size_t layer = 0;
        try {
          layer = static_cast<std::size_t>(std::stoul(key));
        } catch (const std::exception&) {
          throw ConfigError("config field 'semu.gamma_overrides' keys must be "
                            "layer indices, got '" + key + "'");
        }
        if (!value.is_number())
          throw ConfigError("config field 'semu.gamma_overrides." + key +
                            "' must be a number");
        cfg.semu.gamma_overrides[layer] = value.get<double>();
      }
    }
    cfg.semu.use_perp_projection =
        s.get_bool("use_perp_projection", cfg.semu.use_perp_projection);
    std::string red = s.get_string(
        "reduction", cfg.semu.grad_reduction == SemuConfig::Reduction::sum ? "sum"
                                                                           : "mean");
    if (red == "sum")
      cfg.semu.grad_reduction = SemuConfig::Reduction::sum;
    else if (red == "mean")
      cfg.semu.grad_reduction = SemuConfig::Reduction::mean;
    else
      throw ConfigError("config field 'semu.reduction' must be sum or mean");
    cfg.semu.r_max = s.get_uint("r_max", cfg.semu.r_max);
    cfg.accum_batch_size = s.get_uint("accum_batch_size", cfg.accum_batch_size);
    s.finish();
  }

  if (root.has("unlearn")) {
    Section s(root.raw("unlearn"), "unlearn");
    if (s.has("mode")) {
      try {
        cfg.unlearn.mode = unlearn_mode_from_string(s.get_string("mode", ""));
      } catch (const ConfigError&) {
        throw ConfigError("config field 'unlearn.mode' must be forget_only, "
                          "with_remain or with_subset");
      }
    }
    cfg.unlearn.epochs = s.get_uint("epochs", cfg.unlearn.epochs);
    cfg.unlearn.lr = s.get_double("lr", cfg.unlearn.lr);
    cfg.unlearn.momentum = s.get_double("momentum", cfg.unlearn.momentum);
    cfg.unlearn.batch_size = s.get_uint("batch_size", cfg.unlearn.batch_size);
    cfg.unlearn.alpha = s.get_double("alpha", cfg.unlearn.alpha);
    cfg.unlearn.subset_fraction =
        s.get_double("subset_fraction", cfg.unlearn.subset_fraction);
    s.finish();
  }

  if (root.has("diffusion")) {
    if (!diffusion)
      throw ConfigError("config has a 'diffusion' section but task is classification");
    Section s(root.raw("diffusion"), "diffusion");
    cfg.diffusion.timesteps = s.get_uint("timesteps", cfg.diffusion.timesteps);
    cfg.diffusion.beta_start = s.get_double("beta_start", cfg.diffusion.beta_start);
    cfg.diffusion.beta_end = s.get_double("beta_end", cfg.diffusion.beta_end);
    cfg.diffusion.hidden = s.get_uint("hidden", cfg.diffusion.hidden);
    cfg.diffusion.embed_dim = s.get_uint("embed_dim", cfg.diffusion.embed_dim);
    cfg.diffusion.cond_drop_prob =
        s.get_double("cond_drop_prob", cfg.diffusion.cond_drop_prob);
    cfg.diffusion.iterations = s.get_uint("iterations", cfg.diffusion.iterations);
    cfg.diffusion.batch_size = s.get_uint("batch_size", cfg.diffusion.batch_size);
    cfg.diffusion.beta_remain = s.get_double("beta_remain", cfg.diffusion.beta_remain);
    cfg.diffusion.guidance_w = s.get_double("guidance_w", cfg.diffusion.guidance_w);
    cfg.diffusion.fixed_relabel =
        s.get_bool("fixed_relabel", cfg.diffusion.fixed_relabel);
    cfg.diffusion.both_branches =
        s.get_bool("both_branches", cfg.diffusion.both_branches);
    cfg.diffusion.eval_samples = s.get_uint("eval_samples", cfg.diffusion.eval_samples);
    if (s.has("oracle")) {
      Section o(s.raw("oracle"), "diffusion.oracle");
      cfg.diffusion.oracle.hidden = o.get_uint("hidden", cfg.diffusion.oracle.hidden);
      cfg.diffusion.oracle.epochs = o.get_uint("epochs", cfg.diffusion.oracle.epochs);
      cfg.diffusion.oracle.lr = o.get_double("lr", cfg.diffusion.oracle.lr);
      cfg.diffusion.oracle.momentum =
          o.get_double("momentum", cfg.diffusion.oracle.momentum);
      cfg.diffusion.oracle.batch_size =
          o.get_uint("batch_size", cfg.diffusion.oracle.batch_size);
      o.finish();
    }
    s.finish();
  }

  if (root.has("eval")) {
    Section s(root.raw("eval"), "eval");
    cfg.eval.mia_seed = s.get_seed("mia_seed", cfg.eval.mia_seed);
    cfg.eval.label = s.get_string("label", cfg.eval.label);
    s.finish();
  }

  if (root.has("seeds")) {
    Section s(root.raw("seeds"), "seeds");
    cfg.seeds.model_seed = s.get_seed("model_seed", cfg.seeds.model_seed);
    cfg.seeds.data_seed = s.get_seed("data_seed", cfg.seeds.data_seed);
    cfg.seeds.unlearn_seed = s.get_seed("unlearn_seed", cfg.seeds.unlearn_seed);
    std::vector<std::size_t> sweep =
        s.get_uint_list("unlearn_seeds", std::vector<std::size_t>{});
    cfg.seeds.unlearn_seeds.assign(sweep.begin(), sweep.end());
    s.finish();
  }

  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

void apply_override(std::string& json_text, const std::string& dotted_assignment) {
  auto eq = dotted_assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects dotted.path=value, got '" + dotted_assignment + "'");
  std::string path = dotted_assignment.substr(0, eq);
  std::string value_text = dotted_assignment.substr(eq + 1);

  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");

  ordered_json value;
  try {
    value = ordered_json::parse(value_text);
  } catch (const std::exception&) {
    value = value_text;  // bare words read as strings
  }

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty())
      throw ConfigError("--set path '" + path + "' has an empty segment");
    parts.push_back(part);
  }

  ordered_json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = ordered_json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object())
      throw ConfigError("--set path '" + path + "' crosses a non-object value at '" +
                        parts[i] + "'");
  }
  (*node)[parts.back()] = value;
  json_text = doc.dump(2) + "\n";
}

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  std::string text = "{}";
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  for (const std::string& s : sets) apply_override(text, s);
  return parse_run_config(text);
}

}  // namespace semu
