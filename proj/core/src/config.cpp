#include "fw/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "fw/omniglot.hpp"

namespace fw {

const char* to_string(DataKind k) {
  switch (k) {
    case DataKind::Omniglot: return "omniglot";
    case DataKind::SynthOrthogonal: return "synth_orthogonal";
    case DataKind::SynthCluster: return "synth_cluster";
    case DataKind::SavedVectors: return "saved_vectors";
  }
  return "?";
}

DataKind data_kind_from_string(const std::string& s) {
  if (s == "omniglot") return DataKind::Omniglot;
  if (s == "synth_orthogonal") return DataKind::SynthOrthogonal;
  if (s == "synth_cluster") return DataKind::SynthCluster;
  if (s == "saved_vectors") return DataKind::SavedVectors;
  throw ConfigError("unknown data kind '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, int line,
                            const char* want) {
  throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                    "' needs a " + want + " value, got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v, int line) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, line, "non-negative integer");
  return out;
}

int parse_i32(const std::string& key, const std::string& v, int line) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, line, "integer");
  return out;
}

double parse_f64(const std::string& key, const std::string& v, int line) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, line, "number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, line, "boolean (true/false)");
}

std::string fmt_f64(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("config: cannot format double");
  return std::string(buf, p);
}

struct KeyDef {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, int)> set;
};

#define FW_KEY_STR(name, field)                                             \
  {name, [](const RunConfig& c) { return c.field; },                        \
   [](RunConfig& c, const std::string& v, int) { c.field = v; }}
#define FW_KEY_U64(name, field)                                             \
  {name, [](const RunConfig& c) { return std::to_string(c.field); },        \
   [](RunConfig& c, const std::string& v, int l) { c.field = parse_u64(name, v, l); }}
#define FW_KEY_I32(name, field)                                             \
  {name, [](const RunConfig& c) { return std::to_string(c.field); },        \
   [](RunConfig& c, const std::string& v, int l) { c.field = parse_i32(name, v, l); }}
#define FW_KEY_F64(name, field)                                             \
  {name, [](const RunConfig& c) { return fmt_f64(c.field); },               \
   [](RunConfig& c, const std::string& v, int l) { c.field = parse_f64(name, v, l); }}
#define FW_KEY_BOOL(name, field)                                            \
  {name, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
   [](RunConfig& c, const std::string& v, int l) { c.field = parse_bool(name, v, l); }}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      FW_KEY_BOOL("data.augment_rotations", data.augment_rotations),
      FW_KEY_U64("data.classes", data.classes),
      FW_KEY_U64("data.dim", data.dim),
      FW_KEY_STR("data.kind", data.kind),
      FW_KEY_U64("data.per_class", data.per_class),
      FW_KEY_U64("data.resize", data.resize),
      FW_KEY_STR("data.root", data.root),
      FW_KEY_F64("data.scale", data.scale),
      FW_KEY_U64("data.seed", data.seed),
      FW_KEY_F64("data.separation", data.separation),
      FW_KEY_F64("data.sigma", data.sigma),
      FW_KEY_U64("data.split_seed", data.split_seed),
      FW_KEY_U64("data.split_test", data.split_test),
      FW_KEY_U64("data.split_train", data.split_train),
      FW_KEY_U64("data.split_val", data.split_val),
      FW_KEY_U64("data.train_classes", data.train_classes),
      FW_KEY_U64("data.val_classes", data.val_classes),
      FW_KEY_STR("model.binding", model.binding),
      FW_KEY_U64("model.d_l", model.d_l),
      FW_KEY_STR("model.encoder", model.encoder),
      FW_KEY_F64("model.eta", model.eta),
      FW_KEY_U64("model.filters", model.filters),
      FW_KEY_I32("model.k_shot", model.k_shot),
      FW_KEY_F64("model.leaky_slope", model.leaky_slope),
      FW_KEY_U64("model.mlp_width", model.mlp_width),
      FW_KEY_I32("model.n_way", model.n_way),
      FW_KEY_F64("model.noise_halfwidth", model.noise_halfwidth),
      FW_KEY_STR("model.placement", model.placement),
      FW_KEY_BOOL("model.train_eta", model.train_eta),
      FW_KEY_BOOL("model.train_projector", model.train_projector),
      FW_KEY_BOOL("model.truncate_through_rule", model.truncate_through_rule),
      FW_KEY_F64("train.adam_alpha", train.adam_alpha),
      FW_KEY_F64("train.adam_beta1", train.adam_beta1),
      FW_KEY_F64("train.adam_beta2", train.adam_beta2),
      FW_KEY_F64("train.adam_epsilon", train.adam_epsilon),
      FW_KEY_U64("train.episodes", train.episodes),
      FW_KEY_U64("train.eval_episodes", train.eval_episodes),
      FW_KEY_U64("train.eval_every", train.eval_every),
      FW_KEY_U64("train.meta_batch", train.meta_batch),
      FW_KEY_I32("train.n_query", train.n_query),
      FW_KEY_STR("train.out", train.out),
      FW_KEY_U64("train.seed", train.seed),
      FW_KEY_BOOL("train.timings", train.timings),
  };
  return table;
}

#undef FW_KEY_STR
#undef FW_KEY_U64
#undef FW_KEY_I32
#undef FW_KEY_F64
#undef FW_KEY_BOOL

const KeyDef* find_key(const std::string& key) {
  for (const auto& def : key_table()) {
    if (key == def.key) return &def;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line;
    const std::string l = trim(raw);
    if (l.empty() || l[0] == '#') continue;
    const std::size_t eq = l.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line) +
                        ": expected 'key = value', got '" + l + "'");
    }
    const std::string key = trim(l.substr(0, eq));
    const std::string value = trim(l.substr(eq + 1));
    const KeyDef* def = find_key(key);
    if (!def) {
      throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError("config line " + std::to_string(line) + ": duplicate key '" + key + "'");
    }
    seen.push_back(key);
    def->set(cfg, value, line);
  }
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& def : key_table()) {
    out += def.key;
    out += " = ";
    out += def.get(*this);
    out += '\n';
  }
  return out;
}

void RunConfig::validate() const {
  model_spec().validate();
  const DataKind kind = data_kind_from_string(data.kind);
  if (train.n_query < 1) throw ConfigError("train.n_query must be at least 1");
  if (train.meta_batch < 1) throw ConfigError("train.meta_batch must be at least 1");
  if (!(train.adam_alpha >= 0.0)) throw ConfigError("train.adam_alpha must be non-negative");
  if (!(train.adam_beta1 >= 0.0 && train.adam_beta1 < 1.0)) {
    throw ConfigError("train.adam_beta1 must lie in [0,1)");
  }
  if (!(train.adam_beta2 >= 0.0 && train.adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta2 must lie in [0,1)");
  }
  if (!(train.adam_epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
  switch (kind) {
    case DataKind::Omniglot:
      if (data.resize == 0) throw ConfigError("data.resize must be positive");
      if (data.train_classes == 0) throw ConfigError("data.train_classes must be positive");
      break;
    case DataKind::SynthOrthogonal:
      if (data.classes > data.dim) {
        throw ConfigError("data.classes must not exceed data.dim for orthogonal prototypes");
      }
      [[fallthrough]];
    case DataKind::SynthCluster: {
      if (data.classes == 0 || data.dim == 0 || data.per_class == 0) {
        throw ConfigError("synthetic data needs positive classes, dim and per_class");
      }
      const std::uint64_t need =
          static_cast<std::uint64_t>(model.k_shot) + static_cast<std::uint64_t>(train.n_query);
      if (data.per_class < need) {
        throw ConfigError("data.per_class = " + std::to_string(data.per_class) +
                          " cannot cover k_shot + n_query = " + std::to_string(need));
      }
      const std::uint64_t req = data.split_train + data.split_val + data.split_test;
      if (req > data.classes) {
        throw ConfigError("data.split_* sum to " + std::to_string(req) + " but only " +
                          std::to_string(data.classes) + " classes exist");
      }
      break;
    }
    case DataKind::SavedVectors:
      break;  // everything depends on the file, checked at load
  }
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec ms;
  ms.encoder = encoder_from_string(model.encoder);
  ms.binding = binding_from_string(model.binding);
  ms.placement = placement_from_string(model.placement);
  ms.truncate_through_rule = model.truncate_through_rule;
  ms.n_way = model.n_way;
  ms.k_shot = model.k_shot;
  ms.d_l = model.d_l;
  ms.filters = model.filters;
  ms.mlp_width = model.mlp_width;
  ms.leaky_slope = model.leaky_slope;
  ms.noise_halfwidth = model.noise_halfwidth;
  ms.eta = model.eta;
  ms.train_eta = model.train_eta;
  ms.train_projector = model.train_projector;
  ms.seed = train.seed;
  return ms;
}

AdamConfig RunConfig::adam_config() const {
  return AdamConfig{train.adam_alpha, train.adam_beta1, train.adam_beta2, train.adam_epsilon};
}

TrainRunOptions RunConfig::train_options() const {
  TrainRunOptions o;
  o.episodes = train.episodes;
  o.eval_every = train.eval_every;
  o.eval_episodes = train.eval_episodes;
  o.n_query = train.n_query;
  o.meta_batch = train.meta_batch;
  o.adam = adam_config();
  o.seed = train.seed;
  o.timings = train.timings;
  o.config_text = canonical_text();
  return o;
}

Shape RunConfig::input_shape() const {
  switch (data_kind_from_string(data.kind)) {
    case DataKind::Omniglot:
      return Shape{1, data.resize, data.resize};
    case DataKind::SynthOrthogonal:
    case DataKind::SynthCluster:
    case DataKind::SavedVectors:
      // for saved vectors this is the declared dimension; the loaded file is
      // authoritative and build_data's shape wins where a dataset exists
      return Shape{data.dim};
  }
  throw ConfigError("unknown data kind");
}

namespace {

std::string resolve_root(const RunConfig& cfg) {
  if (!cfg.data.root.empty()) return cfg.data.root;
  if (const char* env = std::getenv(kDataRootEnvVar); env && *env) return env;
  throw ConfigError("data.root is empty and " + std::string(kDataRootEnvVar) + " is not set");
}

ClassSplit vector_split(std::size_t n_classes, const RunConfig& cfg) {
  std::uint64_t tr = cfg.data.split_train, va = cfg.data.split_val, te = cfg.data.split_test;
  if (tr == 0 && va == 0 && te == 0) {
    va = std::max<std::uint64_t>(1, n_classes / 5);
    te = std::max<std::uint64_t>(1, n_classes / 5);
    if (va + te >= n_classes) {
      throw ConfigError("dataset has only " + std::to_string(n_classes) +
                        " classes, too few to split");
    }
    tr = n_classes - va - te;
  }
  return split_classes(n_classes, tr, va, te, cfg.data.split_seed);
}

}  // namespace

DataBundle build_data(const RunConfig& cfg) {
  cfg.validate();
  switch (data_kind_from_string(cfg.data.kind)) {
    case DataKind::Omniglot: {
      OmniglotOptions opt;
      opt.resize = cfg.data.resize;
      opt.augment_rotations = cfg.data.augment_rotations;
      opt.split_seed = cfg.data.split_seed;
      opt.train_classes = cfg.data.train_classes;
      opt.val_classes = cfg.data.val_classes;
      OmniglotData od = load_omniglot(resolve_root(cfg), opt);
      return DataBundle{std::move(od.data), std::move(od.split)};
    }
    case DataKind::SynthOrthogonal: {
      Dataset d = make_orthogonal_prototypes(cfg.data.classes, cfg.data.dim, cfg.data.per_class,
                                             cfg.data.sigma, cfg.data.scale, cfg.data.seed);
      ClassSplit s = vector_split(d.num_classes(), cfg);
      return DataBundle{std::move(d), std::move(s)};
    }
    case DataKind::SynthCluster: {
      Dataset d = make_cluster_prototypes(cfg.data.classes, cfg.data.dim, cfg.data.per_class,
                                          cfg.data.separation, cfg.data.sigma, cfg.data.seed);
      ClassSplit s = vector_split(d.num_classes(), cfg);
      return DataBundle{std::move(d), std::move(s)};
    }
    case DataKind::SavedVectors: {
      Dataset d = load_dataset(resolve_root(cfg));
      ClassSplit s = vector_split(d.num_classes(), cfg);
      return DataBundle{std::move(d), std::move(s)};
    }
  }
  throw ConfigError("unknown data kind");
}

}  // namespace fw
