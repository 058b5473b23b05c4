#pragma once

// Experiment configuration: one JSON document with dataset, learner, al,
// strategy and seeds sections. Parse errors carry the dotted field path so a
// bad config is diagnosable without reading source code.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oal/alcore.hpp"
#include "oal/dataset.hpp"
#include "oal/dmr.hpp"
#include "oal/heuristics.hpp"
#include "oal/learner.hpp"
#include "oal/sasearch.hpp"

namespace oal {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const std::string& path,
                                           const char* key) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key + ": missing required field");
  return *it;
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& path, const char* key) {
  try {
    return require_field(j, path, key).get<T>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

template <typename T>
T get_field_or(const nlohmann::json& j, const std::string& path, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get_field<T>(j, path, key);
}

}  // namespace detail

struct DatasetSection {
  std::string source;  // synthetic | idx | csv
  SyntheticSpec synthetic;
  uint64_t generator_seed = 1;
  std::filesystem::path images_path;
  std::filesystem::path labels_path;
  std::filesystem::path csv_path;
  size_t max_examples = 0;  // idx only; 0 keeps everything
  uint64_t subsample_seed = 0;
  SplitSpec split;
};

struct BinSection {
  BinKind kind = BinKind::label;
  uint32_t num_bins = 2;
  uint64_t seed = 0;
  uint32_t pca_dims = 2;
  uint32_t feature = 0;
};

struct StrategySection {
  std::string type;  // heuristic | sa | dmr
  AcquisitionStrategy heuristic;
  SAConfig sa;
  std::string dmr_wrapper;  // idmr | odmr
  AcquisitionStrategy dmr_base;
  BinSection bins;
  OdmrVariant odmr;
};

struct AnalysisTargetSection {
  std::string name;
  LearnerSpec learner;
  TrainConfig train_config;
};

struct ExperimentConfig {
  DatasetSection dataset;
  LearnerSpec learner;
  TrainConfig train_config;
  ALConfig al;
  Metric metric = Metric::accuracy;
  StrategySection strategy;
  std::vector<uint64_t> xi_seeds;
  uint64_t zeta = 0;
  uint64_t search_seed = 0;
  std::string output_dir = "runs";
  std::vector<AnalysisTargetSection> transfer_targets;
  uint32_t baseline_orders = 5;
  nlohmann::json snapshot;  // the parsed document, persisted with every run
};

namespace detail {

inline LearnerSpec parse_learner_spec(const nlohmann::json& j, const std::string& path) {
  LearnerSpec spec;
  const std::string family = get_field<std::string>(j, path, "family");
  try {
    spec.family = learner_family_from_string(family);
  } catch (const std::exception&) {
    throw ConfigError(path + ".family: unknown family '" + family + "'");
  }
  spec.hidden_sizes = get_field_or<std::vector<uint32_t>>(j, path, "hidden_sizes", {});
  spec.dropout_rate = get_field_or<double>(j, path, "dropout_rate", 0.0);
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

inline TrainConfig parse_train_config(const nlohmann::json& j, const std::string& path,
                                      uint32_t default_batch) {
  TrainConfig cfg;
  cfg.batch_size = default_batch;
  cfg.max_epochs = get_field_or<uint32_t>(j, path, "max_epochs", cfg.max_epochs);
  cfg.patience = get_field_or<uint32_t>(j, path, "patience", cfg.patience);
  cfg.learning_rate = get_field_or<double>(j, path, "learning_rate", cfg.learning_rate);
  cfg.batch_size = get_field_or<uint32_t>(j, path, "batch_size", cfg.batch_size);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

inline AcquisitionStrategy parse_strategy_kind(const nlohmann::json& j, const std::string& path) {
  AcquisitionStrategy strategy;
  const std::string kind = get_field<std::string>(j, path, "kind");
  try {
    strategy.kind = strategy_kind_from_string(kind);
  } catch (const std::exception&) {
    throw ConfigError(path + ".kind: unknown strategy '" + kind + "'");
  }
  strategy.mc_samples = get_field_or<uint32_t>(j, path, "mc_samples", strategy.mc_samples);
  return strategy;
}

}  // namespace detail

// Parses and validates a configuration document. `base_dir` anchors relative
// dataset paths (normally the config file's directory); referenced files
// must exist at load time.
inline ExperimentConfig parse_config(const nlohmann::json& doc,
                                     const std::filesystem::path& base_dir = ".") {
  using detail::get_field;
  using detail::get_field_or;
  using detail::require_field;

  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig config;
  config.snapshot = doc;

  // dataset
  {
    const auto& d = require_field(doc, "config", "dataset");
    const std::string path = "dataset";
    config.dataset.source = get_field<std::string>(d, path, "source");
    if (config.dataset.source == "synthetic") {
      config.dataset.synthetic.num_classes = get_field<uint32_t>(d, path, "num_classes");
      config.dataset.synthetic.feature_dim = get_field<uint32_t>(d, path, "feature_dim");
      config.dataset.synthetic.count = get_field<size_t>(d, path, "count");
      config.dataset.synthetic.class_priors =
          get_field_or<std::vector<double>>(d, path, "class_priors", {});
      config.dataset.synthetic.cluster_means =
          get_field_or<std::vector<std::vector<double>>>(d, path, "cluster_means", {});
      config.dataset.synthetic.cluster_scales =
          get_field_or<std::vector<double>>(d, path, "cluster_scales", {});
      config.dataset.generator_seed = get_field_or<uint64_t>(d, path, "generator_seed", 1);
    } else if (config.dataset.source == "idx") {
      config.dataset.images_path = base_dir / get_field<std::string>(d, path, "images");
      config.dataset.labels_path = base_dir / get_field<std::string>(d, path, "labels");
      config.dataset.max_examples = get_field_or<size_t>(d, path, "max_examples", 0);
      config.dataset.subsample_seed = get_field_or<uint64_t>(d, path, "subsample_seed", 0);
      for (const auto& file : {config.dataset.images_path, config.dataset.labels_path})
        if (!std::filesystem::exists(file))
          throw ConfigError(path + ": referenced file does not exist: " + file.string());
    } else if (config.dataset.source == "csv") {
      config.dataset.csv_path = base_dir / get_field<std::string>(d, path, "path");
      if (!std::filesystem::exists(config.dataset.csv_path))
        throw ConfigError(path + ": referenced file does not exist: " +
                          config.dataset.csv_path.string());
    } else {
      throw ConfigError(path + ".source: must be synthetic, idx or csv");
    }

    const auto& s = require_field(d, path, "splits");
    const std::string spath = path + ".splits";
    config.dataset.split.pool = get_field<size_t>(s, spath, "pool");
    config.dataset.split.warm = get_field<size_t>(s, spath, "warm");
    config.dataset.split.modelsel = get_field<size_t>(s, spath, "modelsel");
    config.dataset.split.val = get_field<size_t>(s, spath, "val");
    config.dataset.split.test = get_field<size_t>(s, spath, "test");
    config.dataset.split.shuffle_seed = get_field_or<uint64_t>(s, spath, "shuffle_seed", 0);
  }

  // al (parsed before learner so the trainer's default batch size is B)
  {
    const auto& a = require_field(doc, "config", "al");
    config.al.B = detail::get_field<uint32_t>(a, "al", "B");
    config.al.K = detail::get_field<uint32_t>(a, "al", "K");
    if (config.al.B == 0 || config.al.K == 0) throw ConfigError("al: B and K must be >= 1");
    if (static_cast<size_t>(config.al.B) * config.al.K > config.dataset.split.pool)
      throw ConfigError("al: B*K exceeds the pool size");
    const std::string metric = get_field_or<std::string>(a, "al", "metric", "accuracy");
    try {
      config.metric = metric_from_string(metric);
    } catch (const std::exception&) {
      throw ConfigError("al.metric: unknown metric '" + metric + "'");
    }
  }

  // learner
  {
    const auto& l = require_field(doc, "config", "learner");
    config.learner = detail::parse_learner_spec(l, "learner");
    config.train_config = detail::parse_train_config(
        get_field_or<nlohmann::json>(l, "learner", "train", nlohmann::json::object()),
        "learner.train", config.al.B);
  }

  // seeds
  {
    const auto& s = require_field(doc, "config", "seeds");
    config.xi_seeds = get_field<std::vector<uint64_t>>(s, "seeds", "xi");
    if (config.xi_seeds.empty()) throw ConfigError("seeds.xi: seed list must be non-empty");
    config.zeta = get_field_or<uint64_t>(s, "seeds", "zeta", 0);
    config.search_seed = get_field_or<uint64_t>(s, "seeds", "search_seed", 0);
  }

  // strategy
  {
    const auto& s = require_field(doc, "config", "strategy");
    const std::string path = "strategy";
    config.strategy.type = get_field<std::string>(s, path, "type");
    if (config.strategy.type == "heuristic") {
      config.strategy.heuristic = detail::parse_strategy_kind(s, path);
      config.strategy.heuristic.zeta = config.zeta;
      try {
        config.strategy.heuristic.validate();
      } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
      }
    } else if (config.strategy.type == "sa") {
      config.strategy.sa.anneal_steps =
          get_field_or<uint64_t>(s, path, "anneal_steps", config.strategy.sa.anneal_steps);
      config.strategy.sa.greedy_steps =
          get_field_or<uint64_t>(s, path, "greedy_steps", config.strategy.sa.greedy_steps);
      config.strategy.sa.gamma = get_field_or<double>(s, path, "gamma", config.strategy.sa.gamma);
      config.strategy.sa.search_seed = config.search_seed;
      try {
        config.strategy.sa.validate();
      } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
      }
    } else if (config.strategy.type == "dmr") {
      config.strategy.dmr_wrapper = get_field<std::string>(s, path, "wrapper");
      if (config.strategy.dmr_wrapper != "idmr" && config.strategy.dmr_wrapper != "odmr")
        throw ConfigError(path + ".wrapper: must be idmr or odmr");
      config.strategy.dmr_base =
          detail::parse_strategy_kind(require_field(s, path, "base"), path + ".base");
      config.strategy.dmr_base.zeta = config.zeta;
      try {
        config.strategy.dmr_base.validate();
      } catch (const std::exception& e) {
        throw ConfigError(path + ".base: " + e.what());
      }
      if (config.strategy.dmr_wrapper == "idmr") {
        const auto& b = require_field(s, path, "bins");
        const std::string bpath = path + ".bins";
        const std::string kind = get_field<std::string>(b, bpath, "kind");
        try {
          config.strategy.bins.kind = bin_kind_from_string(kind);
        } catch (const std::exception&) {
          throw ConfigError(bpath + ".kind: unknown bin kind '" + kind + "'");
        }
        config.strategy.bins.num_bins = get_field_or<uint32_t>(b, bpath, "num_bins", 2);
        config.strategy.bins.seed = get_field_or<uint64_t>(b, bpath, "seed", 0);
        config.strategy.bins.pca_dims = get_field_or<uint32_t>(b, bpath, "pca_dims", 2);
        config.strategy.bins.feature = get_field_or<uint32_t>(b, bpath, "feature", 0);
        if (config.strategy.bins.num_bins == 0)
          throw ConfigError(bpath + ".num_bins: must be >= 1");
      } else {
        const auto o = get_field_or<nlohmann::json>(s, path, "odmr", nlohmann::json::object());
        const std::string opath = path + ".odmr";
        const std::string ref = get_field_or<std::string>(o, opath, "reference", "accessible");
        if (ref == "accessible")
          config.strategy.odmr.reference = OdmrReference::accessible;
        else if (ref == "test")
          config.strategy.odmr.reference = OdmrReference::test;
        else
          throw ConfigError(opath + ".reference: must be accessible or test");
        const std::string labels = get_field_or<std::string>(o, opath, "labels", "predicted");
        if (labels == "predicted")
          config.strategy.odmr.labels = OdmrLabels::predicted;
        else if (labels == "groundtruth")
          config.strategy.odmr.labels = OdmrLabels::groundtruth;
        else
          throw ConfigError(opath + ".labels: must be predicted or groundtruth");
      }
    } else {
      throw ConfigError(path + ".type: must be heuristic, sa or dmr");
    }
  }

  config.output_dir = get_field_or<std::string>(doc, "config", "output_dir", "runs");

  // optional analysis section (transfer targets, baseline order count)
  if (doc.contains("analysis")) {
    const auto& a = doc.at("analysis");
    config.baseline_orders = get_field_or<uint32_t>(a, "analysis", "baseline_orders", 5);
    if (a.contains("targets")) {
      const auto& targets = a.at("targets");
      if (!targets.is_array()) throw ConfigError("analysis.targets: expected an array");
      for (size_t i = 0; i < targets.size(); ++i) {
        const std::string tpath = "analysis.targets[" + std::to_string(i) + "]";
        AnalysisTargetSection target;
        target.name = get_field<std::string>(targets[i], tpath, "name");
        target.learner = detail::parse_learner_spec(require_field(targets[i], tpath, "learner"),
                                                    tpath + ".learner");
        target.train_config = detail::parse_train_config(
            get_field_or<nlohmann::json>(targets[i], tpath, "train", nlohmann::json::object()),
            tpath + ".train", config.al.B);
        config.transfer_targets.push_back(std::move(target));
      }
    }
  }

  return config;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config: " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, file.parent_path().empty() ? "." : file.parent_path());
}

// Builds the dataset the config describes. Synthetic generation, IDX and CSV
// ingestion are all deterministic given the section contents.
inline Dataset materialize_dataset(const DatasetSection& section) {
  if (section.source == "synthetic")
    return generate_synthetic(section.synthetic, section.generator_seed);
  if (section.source == "idx")
    return load_idx(section.images_path, section.labels_path, section.max_examples,
                    section.subsample_seed);
  return load_csv(section.csv_path);
}

}  // namespace oal
