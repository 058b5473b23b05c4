#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "oal/config.hpp"

using namespace oal;
namespace fs = std::filesystem;

namespace {

// Minimal document that passes validation; tests mutate single fields.
nlohmann::json base_doc() {
  return nlohmann::json{
      {"dataset",
       {{"source", "synthetic"},
        {"num_classes", 2},
        {"feature_dim", 3},
        {"count", 80},
        {"generator_seed", 7},
        {"splits",
         {{"pool", 30}, {"warm", 6}, {"modelsel", 4}, {"val", 20}, {"test", 20},
          {"shuffle_seed", 1}}}}},
      {"al", {{"B", 3}, {"K", 4}}},
      {"learner", {{"family", "logistic"}}},
      {"seeds", {{"xi", {1, 2, 3}}, {"zeta", 11}, {"search_seed", 21}}},
      {"strategy", {{"type", "heuristic"}, {"kind", "random"}}}};
}

std::string error_of(const nlohmann::json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config parses with defaults") {
  const ExperimentConfig config = parse_config(base_doc());
  CHECK(config.dataset.source == "synthetic");
  CHECK(config.al.B == 3);
  CHECK(config.al.K == 4);
  CHECK(config.metric == Metric::accuracy);  // default
  CHECK(config.learner.family == LearnerFamily::logistic);
  CHECK(config.train_config.batch_size == 3);  // defaults to B
  CHECK(config.xi_seeds == std::vector<uint64_t>{1, 2, 3});
  CHECK(config.zeta == 11);
  CHECK(config.search_seed == 21);
  CHECK(config.output_dir == "runs");
  CHECK(config.transfer_targets.empty());
  CHECK(config.snapshot == base_doc());
}

TEST_CASE("seeds are injected into the strategy") {
  SECTION("heuristic receives zeta") {
    const ExperimentConfig config = parse_config(base_doc());
    CHECK(config.strategy.heuristic.kind == StrategyKind::random);
    CHECK(config.strategy.heuristic.zeta == 11);
  }
  SECTION("sa receives search_seed") {
    auto doc = base_doc();
    doc["strategy"] = {{"type", "sa"}, {"anneal_steps", 50}, {"greedy_steps", 10}};
    const ExperimentConfig config = parse_config(doc);
    CHECK(config.strategy.sa.anneal_steps == 50);
    CHECK(config.strategy.sa.greedy_steps == 10);
    CHECK(config.strategy.sa.gamma == 0.1);  // default
    CHECK(config.strategy.sa.search_seed == 21);
  }
  SECTION("dmr base receives zeta") {
    auto doc = base_doc();
    doc["strategy"] = {{"type", "dmr"},
                       {"wrapper", "idmr"},
                       {"base", {{"kind", "max_entropy"}}},
                       {"bins", {{"kind", "feature_quantile"}, {"num_bins", 5}, {"feature", 2}}}};
    const ExperimentConfig config = parse_config(doc);
    CHECK(config.strategy.dmr_wrapper == "idmr");
    CHECK(config.strategy.dmr_base.kind == StrategyKind::max_entropy);
    CHECK(config.strategy.dmr_base.zeta == 11);
    CHECK(config.strategy.bins.kind == BinKind::feature_quantile);
    CHECK(config.strategy.bins.num_bins == 5);
    CHECK(config.strategy.bins.feature == 2);
    CHECK(config.strategy.bins.pca_dims == 2);  // default
  }
}

TEST_CASE("odmr variant strings parse") {
  auto doc = base_doc();
  doc["strategy"] = {{"type", "dmr"},
                     {"wrapper", "odmr"},
                     {"base", {{"kind", "random"}}},
                     {"odmr", {{"reference", "test"}, {"labels", "groundtruth"}}}};
  const ExperimentConfig config = parse_config(doc);
  CHECK(config.strategy.odmr.reference == OdmrReference::test);
  CHECK(config.strategy.odmr.labels == OdmrLabels::groundtruth);

  doc["strategy"].erase("odmr");  // both fields default
  const ExperimentConfig defaulted = parse_config(doc);
  CHECK(defaulted.strategy.odmr.reference == OdmrReference::accessible);
  CHECK(defaulted.strategy.odmr.labels == OdmrLabels::predicted);
}

TEST_CASE("diagnostics carry dotted field paths") {
  auto doc = base_doc();

  SECTION("missing dataset source") {
    doc["dataset"].erase("source");
    CHECK(error_of(doc).find("dataset.source") != std::string::npos);
  }
  SECTION("unknown dataset source") {
    doc["dataset"]["source"] = "parquet";
    CHECK(error_of(doc).find("dataset.source") != std::string::npos);
  }
  SECTION("missing split field") {
    doc["dataset"]["splits"].erase("val");
    CHECK(error_of(doc).find("dataset.splits.val") != std::string::npos);
  }
  SECTION("wrong field type") {
    doc["al"]["B"] = "three";
    CHECK(error_of(doc).find("al.B") != std::string::npos);
  }
  SECTION("unknown metric") {
    doc["al"]["metric"] = "auroc";
    CHECK(error_of(doc).find("al.metric") != std::string::npos);
  }
  SECTION("unknown learner family") {
    doc["learner"]["family"] = "transformer";
    CHECK(error_of(doc).find("learner.family") != std::string::npos);
  }
  SECTION("logistic rejects hidden sizes") {
    doc["learner"]["hidden_sizes"] = {8};
    CHECK(error_of(doc).find("learner") != std::string::npos);
  }
  SECTION("unknown strategy type") {
    doc["strategy"]["type"] = "bandit";
    CHECK(error_of(doc).find("strategy.type") != std::string::npos);
  }
  SECTION("unknown heuristic kind") {
    doc["strategy"]["kind"] = "coreset";
    CHECK(error_of(doc).find("strategy.kind") != std::string::npos);
  }
  SECTION("unknown dmr base kind") {
    doc["strategy"] = {{"type", "dmr"},
                       {"wrapper", "idmr"},
                       {"base", {{"kind", "coreset"}}},
                       {"bins", {{"kind", "label"}}}};
    CHECK(error_of(doc).find("strategy.base.kind") != std::string::npos);
  }
  SECTION("unknown bin kind") {
    doc["strategy"] = {{"type", "dmr"},
                       {"wrapper", "idmr"},
                       {"base", {{"kind", "random"}}},
                       {"bins", {{"kind", "grid"}}}};
    CHECK(error_of(doc).find("strategy.bins.kind") != std::string::npos);
  }
  SECTION("unknown odmr reference") {
    doc["strategy"] = {{"type", "dmr"},
                       {"wrapper", "odmr"},
                       {"base", {{"kind", "random"}}},
                       {"odmr", {{"reference", "oracle"}}}};
    CHECK(error_of(doc).find("strategy.odmr.reference") != std::string::npos);
  }
  SECTION("empty seed list") {
    doc["seeds"]["xi"] = nlohmann::json::array();
    CHECK(error_of(doc).find("seeds.xi") != std::string::npos);
  }
  SECTION("bald without enough samples") {
    doc["strategy"] = {{"type", "heuristic"}, {"kind", "bald"}, {"mc_samples", 1}};
    CHECK(error_of(doc).find("strategy") != std::string::npos);
  }
}

TEST_CASE("budget must fit the pool") {
  auto doc = base_doc();
  doc["al"]["B"] = 8;
  doc["al"]["K"] = 4;  // 32 > pool of 30
  CHECK(error_of(doc).find("pool") != std::string::npos);

  doc["al"]["K"] = 0;
  CHECK(error_of(doc).find("al") != std::string::npos);
}

TEST_CASE("synthetic config materializes a dataset") {
  const ExperimentConfig config = parse_config(base_doc());
  const Dataset dataset = materialize_dataset(config.dataset);
  CHECK(dataset.size() == 80);
  CHECK(dataset.num_classes == 2);
  CHECK(dataset.feature_dim == 3);
  const Splits splits = make_splits(dataset, config.dataset.split);
  CHECK(splits.pool.size() == 30);
  CHECK(splits.test.size() == 20);
}

TEST_CASE("csv paths resolve against the config directory") {
  const fs::path dir = fs::temp_directory_path() / "oal-config-test";
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "points.csv");
    csv << "label,f0,f1\n";
    for (int i = 0; i < 12; ++i)
      csv << i % 2 << "," << (i % 2 ? 1.5 : -1.5) << "," << i * 0.25 << "\n";
  }
  nlohmann::json doc = base_doc();
  doc["dataset"] = {{"source", "csv"},
                    {"path", "points.csv"},
                    {"splits",
                     {{"pool", 4}, {"warm", 2}, {"modelsel", 2}, {"val", 2}, {"test", 2},
                      {"shuffle_seed", 1}}}};
  doc["al"] = {{"B", 2}, {"K", 2}};
  {
    std::ofstream out(dir / "exp.json");
    out << doc.dump(2);
  }

  const ExperimentConfig config = load_config(dir / "exp.json");
  const Dataset dataset = materialize_dataset(config.dataset);
  CHECK(dataset.size() == 12);
  CHECK(dataset.num_classes == 2);
  CHECK(dataset.feature_dim == 2);

  SECTION("missing file fails at load time") {
    doc["dataset"]["path"] = "absent.csv";
    std::ofstream out(dir / "bad.json");
    out << doc.dump(2);
    out.close();
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  }
  fs::remove_all(dir);
}

TEST_CASE("analysis section is optional and typed") {
  auto doc = base_doc();
  doc["analysis"] = {{"baseline_orders", 7},
                     {"targets",
                      {{{"name", "logistic"}, {"learner", {{"family", "logistic"}}}},
                       {{"name", "mlp"},
                        {"learner", {{"family", "mlp"}, {"hidden_sizes", {16, 8}}}},
                        {"train", {{"max_epochs", 40}}}}}}};
  const ExperimentConfig config = parse_config(doc);
  CHECK(config.baseline_orders == 7);
  REQUIRE(config.transfer_targets.size() == 2);
  CHECK(config.transfer_targets[0].name == "logistic");
  CHECK(config.transfer_targets[1].learner.family == LearnerFamily::mlp);
  CHECK(config.transfer_targets[1].learner.hidden_sizes == std::vector<uint32_t>{16, 8});
  CHECK(config.transfer_targets[1].train_config.max_epochs == 40);
  CHECK(config.transfer_targets[1].train_config.batch_size == 3);  // inherits B

  SECTION("target without a name is rejected") {
    doc["analysis"]["targets"][0].erase("name");
    CHECK(error_of(doc).find("analysis.targets[0]") != std::string::npos);
  }
}

TEST_CASE("config files load and bad JSON is a config error") {
  const fs::path dir = fs::temp_directory_path() / "oal-config-load";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "exp.json");
    out << base_doc().dump(2);
  }
  const ExperimentConfig config = load_config(dir / "exp.json");
  CHECK(config.al.K == 4);

  {
    std::ofstream out(dir / "broken.json");
    out << "{not json";
  }
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  fs::remove_all(dir);
}
