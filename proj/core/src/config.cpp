#include "adareg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "adareg/error.hpp"

namespace adareg {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] void type_error(const std::string& key, const std::string& expected) {
  throw ValidationError(key + ": expected " + expected);
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) type_error(key, "a number");
  return v.get<double>();
}

std::uint64_t get_uint(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && std::floor(d) == d && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  type_error(key, "a non-negative integer");
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) type_error(key, "true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) type_error(key, "a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_size_list(const json& v, const std::string& key) {
  if (!v.is_array()) type_error(key, "an array of non-negative integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(get_uint(v[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

// Visits each key of an object, rejecting unknown ones.
void for_each_key(const json& obj, const std::string& prefix,
                  const std::map<std::string, std::function<void(const json&, const std::string&)>>& handlers) {
  if (!obj.is_object()) type_error(prefix.empty() ? "config" : prefix, "an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string key = join(prefix, it.key());
    const auto h = handlers.find(it.key());
    if (h == handlers.end()) throw ValidationError(key + ": unknown key");
    h->second(it.value(), key);
  }
}

ordered_json feature_to_json(const FeatureSpec& f) {
  ordered_json j;
  j["cardinality"] = f.cardinality;
  j["zipf_exponent"] = f.zipf_exponent;
  j["teacher_scale"] = f.teacher_scale;
  return j;
}

FeatureSpec feature_from_json(const json& j, const std::string& prefix) {
  FeatureSpec f;
  for_each_key(j, prefix, {
      {"cardinality", [&](const json& v, const std::string& k) {
         const auto c = get_uint(v, k);
         if (c > UINT32_MAX - 1) throw ValidationError(k + ": too large");
         f.cardinality = static_cast<std::uint32_t>(c);
       }},
      {"zipf_exponent", [&](const json& v, const std::string& k) { f.zipf_exponent = get_double(v, k); }},
      {"teacher_scale", [&](const json& v, const std::string& k) { f.teacher_scale = get_double(v, k); }},
  });
  return f;
}

}  // namespace

ArchConfig ArchSettings::resolve(std::size_t num_features) const {
  ArchConfig a;
  a.hidden_layers = hidden_layers;
  a.use_bias = use_bias;
  if (embedding_dims.empty()) {
    a.embedding_dims.assign(num_features, embedding_dim);
  } else {
    if (embedding_dims.size() != num_features)
      throw ValidationError("arch.embedding_dims: expected " + std::to_string(num_features) +
                            " entries, got " + std::to_string(embedding_dims.size()));
    a.embedding_dims = embedding_dims;
  }
  return a;
}

void ExperimentConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs: must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size: must be >= 1");
  if (eval_batch_size < 1) throw ValidationError("eval_batch_size: must be >= 1");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ValidationError("split_fraction: must lie in (0, 1)");
  if (selection.split == SelectionSplit::validation &&
      !(selection.validation_fraction > 0.0 && selection.validation_fraction < 1.0))
    throw ValidationError("selection.validation_fraction: must lie in (0, 1)");
  if (arch.embedding_dim < 1 && arch.embedding_dims.empty())
    throw ValidationError("arch.embedding_dim: must be >= 1");
  for (auto h : arch.hidden_layers)
    if (h < 1) throw ValidationError("arch.hidden_layers: widths must be >= 1");
  if (data.source == DataSource::synthetic) data.synthetic.validate();
  if (data.source == DataSource::csv && data.csv_path.empty())
    throw ValidationError("data.csv_path: required when data.source is csv");
  if (data.filter && !(data.filter->ratio >= 0.0 && data.filter->ratio <= 1.0))
    throw ValidationError("data.filter.ratio: must lie in [0, 1]");
  optimizer.validate();
}

ordered_json to_json(const OptimizerConfig& o) {
  ordered_json j;
  j["family"] = std::string(to_string(o.family));
  j["learning_rate"] = o.learning_rate;
  j["alpha"] = o.alpha;
  j["weight_decay"] = o.weight_decay;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["epsilon"] = o.epsilon;
  j["meda_enabled"] = o.meda_enabled;
  j["update_mode"] = std::string(to_string(o.update_mode));
  return j;
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  ordered_json data;
  data["source"] = c.data.source == DataSource::synthetic ? "synthetic" : "csv";
  ordered_json synth;
  synth["num_samples"] = c.data.synthetic.num_samples;
  synth["label_noise"] = c.data.synthetic.label_noise;
  synth["teacher_bias"] = c.data.synthetic.teacher_bias;
  synth["teacher_seed"] = c.data.synthetic.teacher_seed;
  synth["data_seed"] = c.data.synthetic.data_seed;
  synth["features"] = ordered_json::array();
  for (const auto& f : c.data.synthetic.features) synth["features"].push_back(feature_to_json(f));
  data["synthetic"] = synth;
  data["csv_path"] = c.data.csv_path;
  data["has_header"] = c.data.has_header;
  ordered_json filter;
  filter["enabled"] = c.data.filter.has_value();
  filter["feature_index"] = c.data.filter ? c.data.filter->feature_index : 0;
  filter["ratio"] = c.data.filter ? c.data.filter->ratio : 1.0;
  data["filter"] = filter;
  j["data"] = data;

  j["split_fraction"] = c.split_fraction;
  ordered_json arch;
  arch["hidden_layers"] = c.arch.hidden_layers;
  arch["embedding_dim"] = c.arch.embedding_dim;
  arch["embedding_dims"] = c.arch.embedding_dims;
  arch["use_bias"] = c.arch.use_bias;
  j["arch"] = arch;
  j["optimizer"] = to_json(c.optimizer);
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["eval_every"] = c.eval_every;
  j["eval_batch_size"] = c.eval_batch_size;
  j["eval_train"] = c.eval_train;
  j["step_diagnostics"] = c.step_diagnostics;
  j["seeds"] = {{"init", c.seeds.init}, {"shuffle", c.seeds.shuffle}};
  ordered_json sel;
  sel["split"] = c.selection.split == SelectionSplit::test ? "test" : "validation";
  sel["validation_fraction"] = c.selection.validation_fraction;
  j["selection"] = sel;
  j["output_dir"] = c.output_dir;
  return j;
}

OptimizerConfig optimizer_from_json(const json& j, const OptimizerConfig& base) {
  OptimizerConfig o = base;
  for_each_key(j, "optimizer", {
      {"family", [&](const json& v, const std::string& k) {
         const auto f = parse_family(get_string(v, k));
         if (!f) throw ValidationError(k + ": unknown family '" + v.get<std::string>() + "'");
         o.family = *f;
       }},
      {"learning_rate", [&](const json& v, const std::string& k) { o.learning_rate = get_double(v, k); }},
      {"alpha", [&](const json& v, const std::string& k) { o.alpha = get_double(v, k); }},
      {"weight_decay", [&](const json& v, const std::string& k) { o.weight_decay = get_double(v, k); }},
      {"beta1", [&](const json& v, const std::string& k) { o.beta1 = get_double(v, k); }},
      {"beta2", [&](const json& v, const std::string& k) { o.beta2 = get_double(v, k); }},
      {"epsilon", [&](const json& v, const std::string& k) { o.epsilon = get_double(v, k); }},
      {"meda_enabled", [&](const json& v, const std::string& k) { o.meda_enabled = get_bool(v, k); }},
      {"update_mode", [&](const json& v, const std::string& k) {
         const auto m = parse_update_mode(get_string(v, k));
         if (!m) throw ValidationError(k + ": expected lazy or dense_faithful");
         o.update_mode = *m;
       }},
  });
  return o;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  bool filter_enabled = false;
  FilterConfig filter;

  auto parse_synth = [&](const json& v, const std::string& prefix) {
    auto& s = c.data.synthetic;
    for_each_key(v, prefix, {
        {"num_samples", [&](const json& x, const std::string& k) { s.num_samples = get_uint(x, k); }},
        {"label_noise", [&](const json& x, const std::string& k) { s.label_noise = get_double(x, k); }},
        {"teacher_bias", [&](const json& x, const std::string& k) { s.teacher_bias = get_double(x, k); }},
        {"teacher_seed", [&](const json& x, const std::string& k) { s.teacher_seed = get_uint(x, k); }},
        {"data_seed", [&](const json& x, const std::string& k) { s.data_seed = get_uint(x, k); }},
        {"features", [&](const json& x, const std::string& k) {
           if (!x.is_array()) type_error(k, "an array of feature objects");
           s.features.clear();
           for (std::size_t i = 0; i < x.size(); ++i)
             s.features.push_back(feature_from_json(x[i], k + "[" + std::to_string(i) + "]"));
         }},
    });
  };

  auto parse_data = [&](const json& v, const std::string& prefix) {
    for_each_key(v, prefix, {
        {"source", [&](const json& x, const std::string& k) {
           const auto s = get_string(x, k);
           if (s == "synthetic") c.data.source = DataSource::synthetic;
           else if (s == "csv") c.data.source = DataSource::csv;
           else throw ValidationError(k + ": expected synthetic or csv");
         }},
        {"synthetic", parse_synth},
        {"csv_path", [&](const json& x, const std::string& k) { c.data.csv_path = get_string(x, k); }},
        {"has_header", [&](const json& x, const std::string& k) { c.data.has_header = get_bool(x, k); }},
        {"filter", [&](const json& x, const std::string& k) {
           for_each_key(x, k, {
               {"enabled", [&](const json& y, const std::string& kk) { filter_enabled = get_bool(y, kk); }},
               {"feature_index", [&](const json& y, const std::string& kk) { filter.feature_index = get_uint(y, kk); }},
               {"ratio", [&](const json& y, const std::string& kk) { filter.ratio = get_double(y, kk); }},
           });
         }},
    });
  };

  for_each_key(j, "", {
      {"data", parse_data},
      {"split_fraction", [&](const json& v, const std::string& k) { c.split_fraction = get_double(v, k); }},
      {"arch", [&](const json& v, const std::string& prefix) {
         for_each_key(v, prefix, {
             {"hidden_layers", [&](const json& x, const std::string& k) { c.arch.hidden_layers = get_size_list(x, k); }},
             {"embedding_dim", [&](const json& x, const std::string& k) { c.arch.embedding_dim = get_uint(x, k); }},
             {"embedding_dims", [&](const json& x, const std::string& k) { c.arch.embedding_dims = get_size_list(x, k); }},
             {"use_bias", [&](const json& x, const std::string& k) { c.arch.use_bias = get_bool(x, k); }},
         });
       }},
      {"optimizer", [&](const json& v, const std::string&) { c.optimizer = optimizer_from_json(v, c.optimizer); }},
      {"epochs", [&](const json& v, const std::string& k) { c.epochs = get_uint(v, k); }},
      {"batch_size", [&](const json& v, const std::string& k) { c.batch_size = get_uint(v, k); }},
      {"eval_every", [&](const json& v, const std::string& k) { c.eval_every = get_uint(v, k); }},
      {"eval_batch_size", [&](const json& v, const std::string& k) { c.eval_batch_size = get_uint(v, k); }},
      {"eval_train", [&](const json& v, const std::string& k) { c.eval_train = get_bool(v, k); }},
      {"step_diagnostics", [&](const json& v, const std::string& k) { c.step_diagnostics = get_bool(v, k); }},
      {"seeds", [&](const json& v, const std::string& prefix) {
         for_each_key(v, prefix, {
             {"init", [&](const json& x, const std::string& k) { c.seeds.init = get_uint(x, k); }},
             {"shuffle", [&](const json& x, const std::string& k) { c.seeds.shuffle = get_uint(x, k); }},
         });
       }},
      {"selection", [&](const json& v, const std::string& prefix) {
         for_each_key(v, prefix, {
             {"split", [&](const json& x, const std::string& k) {
                const auto s = get_string(x, k);
                if (s == "test") c.selection.split = SelectionSplit::test;
                else if (s == "validation") c.selection.split = SelectionSplit::validation;
                else throw ValidationError(k + ": expected test or validation");
              }},
             {"validation_fraction", [&](const json& x, const std::string& k) { c.selection.validation_fraction = get_double(x, k); }},
         });
       }},
      {"output_dir", [&](const json& v, const std::string& k) { c.output_dir = get_string(v, k); }},
  });
  if (filter_enabled) c.data.filter = filter;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string() + ": cannot open config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return config_from_json(j);
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& overrides) {
  json j = json::parse(to_json(cfg).dump());
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError("override '" + ov + "': expected key=value");
    const std::string key = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);

    json* node = &j;
    std::size_t pos = 0;
    while (true) {
      const auto dot = key.find('.', pos);
      const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (!node->is_object() || !node->contains(part)) throw ValidationError(key + ": unknown key");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      pos = dot + 1;
    }

    const char* first = value.data();
    const char* last = value.data() + value.size();
    if (node->is_boolean()) {
      if (value == "true") *node = true;
      else if (value == "false") *node = false;
      else type_error(key, "true or false, got '" + value + "'");
    } else if (node->is_number_integer()) {
      std::uint64_t x = 0;
      const auto [ptr, ec] = std::from_chars(first, last, x);
      if (value.empty() || ec != std::errc() || ptr != last)
        throw ValidationError(key + ": expected a non-negative integer, got '" + value + "'");
      *node = x;
    } else if (node->is_number()) {
      double x = 0;
      const auto [ptr, ec] = std::from_chars(first, last, x);
      if (value.empty() || ec != std::errc() || ptr != last)
        throw ValidationError(key + ": expected a number, got '" + value + "'");
      *node = x;
    } else if (node->is_string()) {
      *node = value;
    } else {
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::parse_error&) {
        throw ValidationError(key + ": expected JSON " + (node->is_array() ? "array" : "object") +
                              ", got '" + value + "'");
      }
      if (parsed.type() != node->type())
        throw ValidationError(key + ": expected JSON " + (node->is_array() ? "array" : "object"));
      *node = std::move(parsed);
    }
  }
  return config_from_json(j);
}

}  // namespace adareg
