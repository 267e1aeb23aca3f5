#include "fedsophia/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedsophia/errors.hpp"

namespace fedsophia {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops a trailing `# comment`, ignoring '#' inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return key.find("..") == std::string_view::npos;
}

double as_double(const ConfigEntry& e, const std::string& key) {
  const std::string_view v = trim(e.value);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + e.value + "'", e.line);
  }
  return out;
}

std::uint64_t as_u64(const ConfigEntry& e, const std::string& key) {
  const std::string_view v = trim(e.value);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + e.value + "'", e.line);
  }
  return out;
}

std::size_t as_size(const ConfigEntry& e, const std::string& key) {
  return static_cast<std::size_t>(as_u64(e, key));
}

bool as_bool(const ConfigEntry& e, const std::string& key) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + e.value + "'", e.line);
}

std::string as_string(const ConfigEntry& e, const std::string& key) {
  const std::string& v = e.value;
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  // Bare words are accepted for enum-like values.
  if (!v.empty() && v.find_first_of(" \t\"[]") == std::string::npos) return v;
  throw ConfigError(key + ": expected a string, got '" + v + "'", e.line);
}

std::vector<std::size_t> as_size_list(const ConfigEntry& e, const std::string& key) {
  const std::string& v = e.value;
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError(key + ": expected an array like [784, 32, 10]", e.line);
  }
  std::vector<std::size_t> out;
  std::stringstream items(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(items, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(as_size({std::string(trim(item)), e.line}, key));
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const ConfigEntry&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"algorithm",
       [](auto& c, const auto& e, const auto& k) {
         try {
           c.training.algorithm = parse_algorithm(as_string(e, k));
         } catch (const ConfigError& err) {
           throw ConfigError(err.what(), e.line);
         }
       }},
      {"rounds", [](auto& c, const auto& e, const auto& k) { c.training.rounds = as_size(e, k); }},
      {"seed", [](auto& c, const auto& e, const auto& k) { c.training.seed = as_u64(e, k); }},
      {"workers",
       [](auto& c, const auto& e, const auto& k) { c.training.workers = as_size(e, k); }},
      {"out", [](auto& c, const auto& e, const auto& k) { c.out_dir = as_string(e, k); }},

      {"model.layers",
       [](auto& c, const auto& e, const auto& k) { c.model.layer_sizes = as_size_list(e, k); }},

      {"data.source",
       [](auto& c, const auto& e, const auto& k) {
         const std::string s = as_string(e, k);
         if (s == "synthetic") {
           c.data.kind = DataSource::Kind::kSynthetic;
         } else if (s == "idx") {
           c.data.kind = DataSource::Kind::kIdx;
         } else {
           throw ConfigError(k + ": expected synthetic or idx, got '" + s + "'", e.line);
         }
       }},
      {"data.images", [](auto& c, const auto& e, const auto& k) { c.data.images = as_string(e, k); }},
      {"data.labels", [](auto& c, const auto& e, const auto& k) { c.data.labels = as_string(e, k); }},
      {"data.limit", [](auto& c, const auto& e, const auto& k) { c.data.limit = as_size(e, k); }},
      {"data.classes", [](auto& c, const auto& e, const auto& k) { c.data.classes = as_size(e, k); }},
      {"data.per_class",
       [](auto& c, const auto& e, const auto& k) { c.data.per_class = as_size(e, k); }},
      {"data.dim", [](auto& c, const auto& e, const auto& k) { c.data.dim = as_size(e, k); }},
      {"data.spread",
       [](auto& c, const auto& e, const auto& k) { c.data.spread = as_double(e, k); }},

      {"data.separation",
       [](auto& c, const auto& e, const auto& k) { c.data.separation = as_double(e, k); }},

      {"partition.devices",
       [](auto& c, const auto& e, const auto& k) { c.partition.device_count = as_size(e, k); }},
      {"partition.scheme",
       [](auto& c, const auto& e, const auto& k) {
         const std::string s = as_string(e, k);
         if (s == "iid") {
           c.partition.scheme = PartitionScheme::kIid;
         } else if (s == "label-shard") {
           c.partition.scheme = PartitionScheme::kLabelShard;
         } else {
           throw ConfigError(k + ": expected iid or label-shard, got '" + s + "'", e.line);
         }
       }},
      {"partition.shards_per_device",
       [](auto& c, const auto& e, const auto& k) { c.partition.shards_per_device = as_size(e, k); }},
      {"partition.train_fraction",
       [](auto& c, const auto& e, const auto& k) { c.partition.train_fraction = as_double(e, k); }},

      {"train.learning_rate",
       [](auto& c, const auto& e, const auto& k) {
         c.training.sophia.learning_rate = as_double(e, k);
       }},
      {"train.local_iters",
       [](auto& c, const auto& e, const auto& k) { c.training.sophia.local_iters = as_size(e, k); }},
      {"train.batch_size",
       [](auto& c, const auto& e, const auto& k) { c.training.sophia.batch_size = as_size(e, k); }},

      {"sophia.weight_decay",
       [](auto& c, const auto& e, const auto& k) {
         c.training.sophia.weight_decay = as_double(e, k);
       }},
      {"sophia.beta1",
       [](auto& c, const auto& e, const auto& k) { c.training.sophia.beta1 = as_double(e, k); }},
      {"sophia.beta2",
       [](auto& c, const auto& e, const auto& k) { c.training.sophia.beta2 = as_double(e, k); }},
      {"sophia.epsilon",
       [](auto& c, const auto& e, const auto& k) { c.training.sophia.epsilon = as_double(e, k); }},
      {"sophia.rho",
       [](auto& c, const auto& e, const auto& k) {
         c.training.sophia.clip_radius = as_double(e, k);
       }},
      {"sophia.tau",
       [](auto& c, const auto& e, const auto& k) {
         c.training.sophia.hessian_interval = as_size(e, k);
       }},
      {"sophia.reset_each_round",
       [](auto& c, const auto& e, const auto& k) {
         c.training.sophia.reset_state_each_round = as_bool(e, k);
       }},

      {"done.alpha",
       [](auto& c, const auto& e, const auto& k) { c.training.done.alpha = as_double(e, k); }},
      {"done.richardson_iters",
       [](auto& c, const auto& e, const auto& k) {
         c.training.done.richardson_iters = as_size(e, k);
       }},
      {"done.step_size",
       [](auto& c, const auto& e, const auto& k) { c.training.done.step_size = as_double(e, k); }},

      {"channel.tx_power_w",
       [](auto& c, const auto& e, const auto& k) {
         c.training.channel.tx_power_w = as_double(e, k);
       }},
      {"channel.bandwidth_hz",
       [](auto& c, const auto& e, const auto& k) {
         c.training.channel.bandwidth_hz = as_double(e, k);
       }},
      {"channel.noise_psd",
       [](auto& c, const auto& e, const auto& k) {
         c.training.channel.noise_psd_w_per_hz = as_double(e, k);
       }},
      {"channel.distance_m",
       [](auto& c, const auto& e, const auto& k) {
         c.training.channel.distance_m = as_double(e, k);
       }},

      {"energy.joules_per_flop",
       [](auto& c, const auto& e, const auto& k) {
         c.training.energy.joules_per_flop = as_double(e, k);
       }},
      {"energy.joules_per_iteration",
       [](auto& c, const auto& e, const auto& k) {
         c.training.energy.joules_per_iteration = as_double(e, k);
       }},
      {"energy.carbon_kg_per_mj",
       [](auto& c, const auto& e, const auto& k) {
         c.training.energy.carbon_kg_per_mj = as_double(e, k);
       }},
  };
  return table;
}

int line_of(const ConfigEntries& entries, const std::string& key) {
  const auto it = entries.find(key);
  return it == entries.end() ? 0 : it->second.line;
}

}  // namespace

bool is_known_key(std::string_view key) { return setters().contains(std::string(key)); }

std::string canonical_key(std::string_view key) {
  if (key == "eta" || key == "train.eta") return "train.learning_rate";
  if (key == "J" || key == "train.J") return "train.local_iters";
  return std::string(key);
}

ConfigEntries parse_config_entries(std::string_view text) {
  ConfigEntries entries;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) {
        throw ConfigError("invalid section name '" + std::string(name) + "'", line_no);
      }
      section = std::string(name);
    } else {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("expected 'key = value', got '" + std::string(line) + "'", line_no);
      }
      const std::string_view key = trim(line.substr(0, eq));
      const std::string_view value = trim(line.substr(eq + 1));
      if (!valid_key(key)) throw ConfigError("invalid key '" + std::string(key) + "'", line_no);
      if (value.empty()) throw ConfigError("missing value for '" + std::string(key) + "'", line_no);
      const std::string full =
          canonical_key(section.empty() ? std::string(key) : section + "." + std::string(key));
      if (entries.contains(full)) {
        throw ConfigError("duplicate key '" + full + "' (first set on line " +
                              std::to_string(entries.at(full).line) + ")",
                          line_no);
      }
      entries.emplace(full, ConfigEntry{std::string(value), line_no});
    }
    if (end == text.size()) break;
  }
  return entries;
}

ExperimentConfig build_config(const ConfigEntries& entries) {
  ExperimentConfig cfg;
  for (const auto& [key, entry] : entries) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown key '" + key + "'", entry.line);
    it->second(cfg, entry, key);
    // Defaults are valid and the field checks are independent, so the first
    // failure after applying an entry belongs to that entry.
    try {
      cfg.model.validate();
      cfg.training.validate();
      cfg.partition.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what(), entry.line);
    }
  }

  auto checked = [&](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), line_of(entries, key));
    } catch (const Error& e) {
      throw ConfigError(e.what(), line_of(entries, key));
    }
  };
  if (cfg.data.kind == DataSource::Kind::kIdx) {
    for (const auto& [key, path] :
         {std::pair{std::string("data.images"), cfg.data.images},
          std::pair{std::string("data.labels"), cfg.data.labels}}) {
      if (path.empty()) throw ConfigError(key + " is required for idx data", 0);
      if (!std::filesystem::exists(path)) {
        throw ConfigError(key + ": file not found: " + path.string(), line_of(entries, key));
      }
    }
  } else {
    checked("data.classes", [&] {
      if (cfg.data.classes < 2) throw ConfigError("data.classes must be >= 2");
      if (cfg.data.per_class < 1) throw ConfigError("data.per_class must be >= 1");
      if (cfg.data.dim < (cfg.data.classes + 1) / 2) {
        throw ConfigError("data.dim too small for the class count");
      }
      if (!(cfg.data.spread >= 0.0)) throw ConfigError("data.spread must be >= 0");
      if (!(cfg.data.separation > 0.0)) throw ConfigError("data.separation must be > 0");
    });
    if (cfg.model.layer_sizes.front() != cfg.data.dim) {
      throw ConfigError("model input width " + std::to_string(cfg.model.layer_sizes.front()) +
                            " != data.dim " + std::to_string(cfg.data.dim),
                        line_of(entries, "model.layers"));
    }
    if (cfg.model.layer_sizes.back() != cfg.data.classes) {
      throw ConfigError("model output width " + std::to_string(cfg.model.layer_sizes.back()) +
                            " != data.classes " + std::to_string(cfg.data.classes),
                        line_of(entries, "model.layers"));
    }
  }
  return cfg;
}

ExperimentConfig parse_config(std::string_view text) {
  return build_config(parse_config_entries(text));
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
  const TrainingConfig& t = cfg.training;
  nlohmann::ordered_json j;
  j["algorithm"] = std::string(algorithm_name(t.algorithm));
  j["rounds"] = t.rounds;
  j["seed"] = t.seed;
  j["workers"] = t.workers;
  j["out"] = cfg.out_dir.string();
  j["model"]["layers"] = cfg.model.layer_sizes;
  j["model"]["param_count"] = cfg.model.param_count();
  if (cfg.data.kind == DataSource::Kind::kIdx) {
    j["data"] = {{"source", "idx"},
                 {"images", cfg.data.images.string()},
                 {"labels", cfg.data.labels.string()},
                 {"limit", cfg.data.limit}};
  } else {
    j["data"] = {{"source", "synthetic"},
                 {"classes", cfg.data.classes},
                 {"per_class", cfg.data.per_class},
                 {"dim", cfg.data.dim},
                 {"spread", cfg.data.spread},
                 {"separation", cfg.data.separation}};
  }
  j["partition"] = {
      {"devices", cfg.partition.device_count},
      {"scheme", cfg.partition.scheme == PartitionScheme::kIid ? "iid" : "label-shard"},
      {"shards_per_device", cfg.partition.shards_per_device},
      {"train_fraction", cfg.partition.train_fraction}};
  j["train"] = {{"learning_rate", t.sophia.learning_rate},
                {"local_iters", t.sophia.local_iters},
                {"batch_size", t.sophia.batch_size}};
  j["sophia"] = {{"weight_decay", t.sophia.weight_decay},
                 {"beta1", t.sophia.beta1},
                 {"beta2", t.sophia.beta2},
                 {"epsilon", t.sophia.epsilon},
                 {"rho", t.sophia.clip_radius},
                 {"tau", t.sophia.hessian_interval},
                 {"reset_each_round", t.sophia.reset_state_each_round}};
  j["done"] = {{"alpha", t.done.alpha},
               {"richardson_iters", t.done.richardson_iters},
               {"step_size", t.done.step_size}};
  j["channel"] = {{"tx_power_w", t.channel.tx_power_w},
                  {"bandwidth_hz", t.channel.bandwidth_hz},
                  {"noise_psd", t.channel.noise_psd_w_per_hz},
                  {"distance_m", t.channel.distance_m}};
  j["energy"] = {{"joules_per_flop", t.energy.joules_per_flop},
                 {"joules_per_iteration", t.energy.joules_per_iteration
                                              ? nlohmann::ordered_json(*t.energy.joules_per_iteration)
                                              : nlohmann::ordered_json(nullptr)},
                 {"carbon_kg_per_mj", t.energy.carbon_kg_per_mj}};
  return j;
}

}  // namespace fedsophia
