#include "app/config.h"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "fedbook/errors.h"
#include "fedbook/text_format.h"

namespace app {

using fedbook::ConfigError;

std::string ToString(DataSource source) {
  return source == DataSource::kSynth ? "synth" : "files";
}

DataSource ParseDataSource(const std::string& text) {
  if (text == "synth") return DataSource::kSynth;
  if (text == "files") return DataSource::kFiles;
  throw ConfigError("unknown data source '" + text + "'");
}

namespace {

std::uint64_t Derive(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

std::uint64_t RunConfig::data_seed() const { return Derive(seed, 1); }
std::uint64_t RunConfig::federation_seed() const { return Derive(seed, 2); }
std::uint64_t RunConfig::finetune_seed() const { return Derive(seed, 3); }

void RunConfig::Validate() const {
  model.Validate();
  federation.Validate();
  if (clients == 0) throw ConfigError("federation.clients must be >= 1");
  if (task.level != data.level) {
    throw ConfigError("task.level (" + fedbook::ToString(task.level) +
                      ") must match data.level (" + fedbook::ToString(data.level) + ")");
  }
  task.Validate(data.level == fedbook::LabelLevel::kGraph && data.multilabel);
  if (data.multilabel && data.level != fedbook::LabelLevel::kGraph) {
    throw ConfigError("data.multilabel requires graph-level labels");
  }
  if (finetune.lr < 0.0) throw ConfigError("finetune.lr must be >= 0");
  if (finetune.grid_search && finetune.lr_grid.empty()) {
    throw ConfigError("finetune.grid_search needs a non-empty finetune.lr_grid");
  }
  if (data.source == DataSource::kSynth) {
    if (data.domains == 0) throw ConfigError("data.domains must be >= 1");
    if (clients < data.domains) throw ConfigError("need at least one client per domain");
    if (data.classes < 2) throw ConfigError("data.classes must be >= 2");
    const std::size_t want_edge_dim = data.edge_features ? model.feature_dim : 0;
    if (model.edge_feature_dim != want_edge_dim) {
      throw ConfigError("model.edge_feature_dim must be " + std::to_string(want_edge_dim) +
                        " for this data configuration");
    }
  } else if (data.dataset_dir.empty() || !std::filesystem::is_directory(data.dataset_dir)) {
    throw ConfigError("data.dataset_dir '" + data.dataset_dir + "' is not a directory");
  }
}

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
T ParseNumber(const std::string& text, const std::string& name) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("cannot parse '" + text + "' for " + name);
  }
  return value;
}

bool ParseBool(const std::string& text, const std::string& name) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("cannot parse '" + text + "' as a boolean for " + name);
}

template <typename T>
Field Number(std::string section, std::string key, T& ref) {
  const std::string name = section + "." + key;
  return Field{section, key,
               [&ref] {
                 if constexpr (std::is_floating_point_v<T>) return fedbook::FormatDouble(ref);
                 else return std::to_string(ref);
               },
               [&ref, name](const std::string& s) { ref = ParseNumber<T>(s, name); }};
}

Field Boolean(std::string section, std::string key, bool& ref) {
  const std::string name = section + "." + key;
  return Field{section, key, [&ref] { return std::string(ref ? "true" : "false"); },
               [&ref, name](const std::string& s) { ref = ParseBool(s, name); }};
}

Field Text(std::string section, std::string key, std::string& ref) {
  return Field{section, key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

template <typename T, typename Show, typename Read>
Field Enum(std::string section, std::string key, T& ref, Show show, Read read) {
  return Field{section, key, [&ref, show] { return show(ref); },
               [&ref, read](const std::string& s) { ref = read(s); }};
}

Field DoubleList(std::string section, std::string key, std::vector<double>& ref) {
  const std::string name = section + "." + key;
  return Field{section, key,
               [&ref] {
                 std::string out;
                 for (std::size_t i = 0; i < ref.size(); ++i)
                   out += (i ? "," : "") + fedbook::FormatDouble(ref[i]);
                 return out;
               },
               [&ref, name](const std::string& s) {
                 ref.clear();
                 std::stringstream ss(s);
                 std::string item;
                 while (std::getline(ss, item, ',')) ref.push_back(ParseNumber<double>(item, name));
               }};
}

std::vector<Field> Fields(RunConfig& c) {
  auto& m = c.model;
  auto& f = c.federation;
  auto& o = c.federation.train.optimizer;
  auto& d = c.data;
  auto& t = c.task;
  auto& ft = c.finetune;
  auto level_show = [](fedbook::LabelLevel l) { return fedbook::ToString(l); };
  auto kind_show = [](fedbook::OptimizerKind k) { return fedbook::ToString(k); };
  return {
      Number("model", "feature_dim", m.feature_dim),
      Number("model", "edge_feature_dim", m.edge_feature_dim),
      Number("model", "hidden_dim", m.hidden_dim),
      Number("model", "heads", m.heads),
      Number("model", "tokens", m.tokens),
      Number("model", "mask_ratio", m.mask_ratio),
      Number("model", "gamma", m.gamma),
      Number("federation", "clients", c.clients),
      Number("federation", "phase1_rounds", f.phase1_rounds),
      Number("federation", "phase2_rounds", f.phase2_rounds),
      Number("federation", "local_epochs", f.train.epochs),
      Number("federation", "batch_size", f.train.batch_size),
      Enum("federation", "scheme", f.scheme, [](fedbook::Scheme s) { return fedbook::ToString(s); },
           fedbook::ParseScheme),
      Number("federation", "lambda", f.lambda),
      Boolean("federation", "parallel_clients", f.parallel_clients),
      Enum("optimizer", "kind", o.kind, kind_show, fedbook::ParseOptimizerKind),
      Number("optimizer", "lr", o.lr),
      Number("optimizer", "beta1", o.beta1),
      Number("optimizer", "beta2", o.beta2),
      Number("optimizer", "epsilon", o.epsilon),
      Enum("data", "source", d.source, [](DataSource s) { return ToString(s); }, ParseDataSource),
      Text("data", "dataset_dir", d.dataset_dir),
      Text("data", "input", d.input),
      Number("data", "domains", d.domains),
      Number("data", "classes", d.classes),
      Number("data", "nodes_per_client", d.nodes_per_client),
      Number("data", "graphs_per_client", d.graphs_per_client),
      Enum("data", "level", d.level, level_show, fedbook::ParseLabelLevel),
      Boolean("data", "edge_features", d.edge_features),
      Boolean("data", "multilabel", d.multilabel),
      Number("data", "intra_edge_prob", d.intra_edge_prob),
      Number("data", "inter_edge_prob", d.inter_edge_prob),
      Number("data", "noise_std", d.noise_std),
      Number("data", "prototype_scale", d.prototype_scale),
      Number("data", "center_scale", d.center_scale),
      Enum("task", "level", t.level, level_show, fedbook::ParseLabelLevel),
      Enum("task", "metric", t.metric, [](fedbook::Metric x) { return fedbook::ToString(x); },
           fedbook::ParseMetric),
      Number("task", "train_fraction", t.train_fraction),
      Number("task", "val_fraction", t.val_fraction),
      Number("task", "few_shot_k", t.few_shot_k),
      Number("finetune", "epochs", ft.epochs),
      Number("finetune", "lr", ft.lr),
      Enum("finetune", "optimizer", ft.optimizer, kind_show, fedbook::ParseOptimizerKind),
      Boolean("finetune", "grid_search", ft.grid_search),
      DoubleList("finetune", "lr_grid", ft.lr_grid),
      Number("run", "seed", c.seed),
      Text("run", "out_dir", c.out_dir),
      Text("run", "run_id", c.run_id),
  };
}

}  // namespace

RunConfig ParseRunConfig(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig config;
  auto fields = Fields(config);
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) {
      throw ConfigError("config key '" + section + "' must sit inside a section");
    }
    for (const auto& [key, value] : entries) {
      auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) {
        return f.section == section && f.key == key;
      });
      if (it == fields.end()) throw ConfigError("unknown config key " + section + "." + key);
      it->set(value.data());
    }
  }
  return config;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return ParseRunConfig(in);
}

std::string SerializeRunConfig(const RunConfig& config) {
  RunConfig copy = config;
  std::string out, section;
  for (const Field& f : Fields(copy)) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

}  // namespace app
