// oracle-al: config-driven experiment runner. Subcommands cover the whole
// pipeline: annealing search per training seed, heuristic and DMR order
// construction, order evaluation, the seed-mismatch and transfer matrices,
// order overlap, distribution traces, report emission and cache
// administration. Every run writes a fresh timestamped directory with a
// config snapshot and a content-hash manifest.
//
// Exit codes: 0 success, 2 configuration error, 3 missing prerequisite
// artifact, 4 runtime failure.

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oal/analysis.hpp"
#include "oal/config.hpp"
#include "oal/dmr.hpp"
#include "oal/io.hpp"
#include "oal/report.hpp"
#include "oal/sasearch.hpp"

namespace {

using namespace oal;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string cache_dir;
  unsigned jobs = 0;
};

// Loaded config plus the materialized data. Commands keep the session in
// scope and build EvalContext views on demand (context() points into the
// session's own dataset/splits, so the session must outlive them).
struct Session {
  ExperimentConfig config;
  Dataset dataset;
  Splits splits;
  std::unique_ptr<TrainingCache> cache;
  unsigned jobs = 1;

  EvalContext context() const {
    return EvalContext{&dataset, &splits, config.learner, config.train_config, config.metric};
  }
};

std::string resolve_cache_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("ORACLE_AL_CACHE");
  return env ? env : "";
}

Session open_session(const CommonOpts& opts) {
  if (opts.config_path.empty()) throw ConfigError("--config is required for this subcommand");
  Session session;
  session.config = load_config(opts.config_path);
  try {
    session.dataset = materialize_dataset(session.config.dataset);
    session.splits = make_splits(session.dataset, session.config.dataset.split);
  } catch (const std::invalid_argument& e) {
    // precondition failures here trace back to config values, not runtime state
    throw ConfigError(e.what());
  }
  const std::string cache_dir = resolve_cache_dir(opts.cache_dir);
  session.cache = cache_dir.empty() ? std::make_unique<TrainingCache>()
                                    : std::make_unique<TrainingCache>(cache_dir);
  session.jobs = resolve_jobs(opts.jobs);
  return session;
}

fs::path output_root(const CommonOpts& opts, const Session* session) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (session) return session->config.output_dir;
  return "runs";
}

void write_config_snapshot(const fs::path& run_dir, const nlohmann::json& snapshot,
                           Manifest& manifest) {
  write_text(run_dir / "config.json", snapshot.dump(2) + "\n");
  manifest.add_output(run_dir, "config.json");
}

Order load_order_file(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("order file not found: " + path.string());
  return order_from_json(nlohmann::json::parse(read_text(path)));
}

std::string xi_tag(uint64_t xi) { return "xi" + std::to_string(xi); }

void write_record_artifacts(const fs::path& run_dir, const std::string& tag,
                            const QualityRecord& record, Manifest& manifest) {
  const std::string record_rel = "records/record-" + tag + ".json";
  write_text(run_dir / record_rel, record_to_json(record).dump(2) + "\n");
  manifest.add_output(run_dir, record_rel);

  const std::vector<std::string> names{"val", "test"};
  const std::vector<PerformanceCurve> curves{record.curve_val, record.curve_test};
  const std::string curve_rel = "curves/curve-" + tag + ".csv";
  write_text(run_dir / curve_rel, curves_to_csv(names, curves));
  manifest.add_output(run_dir, curve_rel);
}

// ---------------------------------------------------------------- search --

struct SearchOpts {
  CommonOpts common;
  std::string resume_dir;
  uint64_t checkpoint_every = 200;
};

// Trace lines recorded past the checkpoint (flushed but not yet
// checkpointed when the process stopped) are dropped; the chain replays
// deterministically from the checkpointed state.
std::vector<std::string> load_trace_upto(const fs::path& trace_file, uint64_t step) {
  std::vector<std::string> lines;
  if (!fs::exists(trace_file)) return lines;
  std::ifstream in(trace_file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("step").get<uint64_t>() > step) break;
    lines.push_back(line);
  }
  return lines;
}

int run_search(const SearchOpts& opts) {
  CommonOpts common = opts.common;
  const bool resuming = !opts.resume_dir.empty();
  fs::path run_dir;
  nlohmann::json snapshot;

  if (resuming) {
    run_dir = opts.resume_dir;
    const fs::path snap_file = run_dir / "config.json";
    if (!fs::exists(snap_file))
      throw MissingArtifact("resume directory has no config snapshot: " + snap_file.string());
    snapshot = nlohmann::json::parse(read_text(snap_file));
    if (!common.config_path.empty() &&
        nlohmann::json::parse(read_text(common.config_path)) != snapshot)
      throw ConfigError("--config disagrees with the resumed run's config snapshot");
    if (common.config_path.empty()) {
      // parse the snapshot directly; dataset paths resolve against the run dir
      common.config_path = snap_file.string();
    }
  }

  Session session = open_session(common);
  if (session.config.strategy.type != "sa")
    throw ConfigError("strategy.type: the search subcommand requires type=sa");

  Manifest manifest;
  if (!resuming) {
    run_dir = create_run_dir(output_root(common, &session), "search", session.config.snapshot);
    write_config_snapshot(run_dir, session.config.snapshot, manifest);
  } else {
    manifest.add_output(run_dir, "config.json");
  }
  for (const char* sub : {"orders", "records", "traces", "checkpoints", "curves"})
    fs::create_directories(run_dir / sub);

  OrderEvaluator evaluator(session.context(), session.cache.get(), session.jobs);
  nlohmann::json summary;
  summary["seeds"] = nlohmann::json::array();

  for (uint64_t xi : session.config.xi_seeds) {
    SAConfig sa = session.config.strategy.sa;
    // one independent chain per training seed
    sa.search_seed = seed_combine(session.config.search_seed, xi);
    const auto objective = validation_quality_objective(evaluator, xi);

    const std::string tag = xi_tag(xi);
    const fs::path trace_file = run_dir / "traces" / ("trace-" + tag + ".jsonl");
    const fs::path checkpoint_file = run_dir / "checkpoints" / ("state-" + tag + ".json");

    std::unique_ptr<SaSearcher> searcher;
    if (resuming && fs::exists(checkpoint_file)) {
      const SearchState state =
          state_from_json(nlohmann::json::parse(read_text(checkpoint_file)));
      const auto kept = load_trace_upto(trace_file, state.step);
      std::string rewritten;
      for (const auto& line : kept) {
        rewritten += line;
        rewritten += '\n';
      }
      write_text(trace_file, rewritten);
      searcher = std::make_unique<SaSearcher>(sa, session.splits.pool, state, objective);
    } else {
      searcher = std::make_unique<SaSearcher>(sa, session.splits.pool, session.config.al,
                                              objective);
      write_text(trace_file, "");
      write_text(checkpoint_file, state_to_json(searcher->state()).dump() + "\n");
    }

    std::string pending;
    uint64_t since_flush = 0;
    auto flush = [&]() {
      if (!pending.empty()) {
        std::ofstream out(trace_file, std::ios::binary | std::ios::app);
        out << pending;
        pending.clear();
      }
      write_text(checkpoint_file, state_to_json(searcher->state()).dump() + "\n");
      since_flush = 0;
    };

    while (!searcher->done()) {
      const SearchStep step = searcher->step();
      pending += step_to_json(step).dump();
      pending += '\n';
      if (++since_flush >= opts.checkpoint_every) flush();
    }
    flush();

    const SearchState& state = searcher->state();
    const std::string order_rel = "orders/sigma-" + tag + ".json";
    write_text(run_dir / order_rel, order_to_json(state.best).dump(2) + "\n");
    manifest.add_output(run_dir, order_rel);
    manifest.add_output(run_dir, "traces/trace-" + tag + ".jsonl");
    manifest.add_output(run_dir, "checkpoints/state-" + tag + ".json");

    const QualityRecord record = evaluator.evaluate(state.best, xi, true);
    write_record_artifacts(run_dir, tag, record, manifest);

    nlohmann::json entry;
    entry["xi"] = xi;
    entry["chain_seed"] = sa.search_seed;
    entry["q0"] = state.q0;
    entry["q_best"] = state.q_best;
    entry["q_val"] = record.q_val;
    entry["q_test"] = record.q_test;
    entry["steps"] = state.step;
    summary["seeds"].push_back(entry);
  }

  summary["trainings_run"] = evaluator.trainings_run();
  summary["prefixes_reused"] = evaluator.prefixes_reused();
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  manifest.add_output(run_dir, "summary.json");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- heuristic --

int run_heuristic(const CommonOpts& opts) {
  Session session = open_session(opts);
  const StrategySection& strategy = session.config.strategy;
  if (strategy.type != "heuristic" && strategy.type != "dmr")
    throw ConfigError("strategy.type: the heuristic subcommand requires type=heuristic or dmr");

  const fs::path run_dir =
      create_run_dir(output_root(opts, &session), "heuristic", session.config.snapshot);
  Manifest manifest;
  write_config_snapshot(run_dir, session.config.snapshot, manifest);
  for (const char* sub : {"orders", "records", "curves"}) fs::create_directories(run_dir / sub);

  // Bins and references depend only on the splits, never on xi.
  std::optional<BinFn> bins;
  std::optional<BinDistribution> d_ref;
  if (strategy.type == "dmr" && strategy.dmr_wrapper == "idmr") {
    std::vector<uint32_t> accessible;
    accessible.insert(accessible.end(), session.splits.warm.begin(), session.splits.warm.end());
    accessible.insert(accessible.end(), session.splits.pool.begin(), session.splits.pool.end());
    accessible.insert(accessible.end(), session.splits.modelsel.begin(),
                      session.splits.modelsel.end());
    std::sort(accessible.begin(), accessible.end());
    bins = fit_bins(session.dataset, accessible, strategy.bins.kind, strategy.bins.num_bins,
                    strategy.bins.seed, strategy.bins.pca_dims, strategy.bins.feature);
    d_ref = idmr_reference(session.dataset, session.splits, *bins);
    write_text(run_dir / "bins.json", bins->to_json().dump(2) + "\n");
    manifest.add_output(run_dir, "bins.json");
  } else if (strategy.type == "dmr") {
    d_ref = odmr_reference(session.dataset, session.splits, strategy.odmr);
  }

  OrderEvaluator evaluator(session.context(), session.cache.get(), session.jobs);
  nlohmann::json summary;
  summary["seeds"] = nlohmann::json::array();

  for (uint64_t xi : session.config.xi_seeds) {
    AcquisitionTask task;
    task.dataset = &session.dataset;
    task.splits = &session.splits;
    task.learner = session.config.learner;
    task.train_config = session.config.train_config;
    task.metric = session.config.metric;
    task.config = session.config.al;
    task.xi = xi;

    Order order;
    if (strategy.type == "heuristic")
      order = run_acquisition(strategy.heuristic, task);
    else if (strategy.dmr_wrapper == "idmr")
      order = run_idmr(strategy.dmr_base, task, *bins, *d_ref);
    else
      order = run_odmr(strategy.dmr_base, task, strategy.odmr, *d_ref);

    const std::string tag = xi_tag(xi);
    const std::string order_rel = "orders/order-" + tag + ".json";
    write_text(run_dir / order_rel, order_to_json(order).dump(2) + "\n");
    manifest.add_output(run_dir, order_rel);

    const QualityRecord record = evaluator.evaluate(order, xi, true);
    write_record_artifacts(run_dir, tag, record, manifest);

    nlohmann::json entry;
    entry["xi"] = xi;
    entry["q_val"] = record.q_val;
    entry["q_test"] = record.q_test;
    summary["seeds"].push_back(entry);
  }

  summary["trainings_run"] = evaluator.trainings_run();
  summary["prefixes_reused"] = evaluator.prefixes_reused();
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  manifest.add_output(run_dir, "summary.json");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------- evaluate --

int run_evaluate(const CommonOpts& opts, const std::string& order_path) {
  Session session = open_session(opts);
  const Order order = load_order_file(order_path);
  order.validate(session.splits.pool);

  const fs::path run_dir =
      create_run_dir(output_root(opts, &session), "evaluate", session.config.snapshot);
  Manifest manifest;
  write_config_snapshot(run_dir, session.config.snapshot, manifest);
  for (const char* sub : {"records", "curves"}) fs::create_directories(run_dir / sub);
  manifest.add_input("order", order_path);

  OrderEvaluator evaluator(session.context(), session.cache.get(), session.jobs);
  std::vector<QualityRecord> records;
  for (uint64_t xi : session.config.xi_seeds) {
    records.push_back(evaluator.evaluate(order, xi, true));
    write_record_artifacts(run_dir, xi_tag(xi), records.back(), manifest);
  }
  write_text(run_dir / "records.jsonl", records_to_jsonl(records));
  manifest.add_output(run_dir, "records.jsonl");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------- matrix subcommands --

void write_matrix_artifacts(const fs::path& run_dir, const QualityMatrix& matrix,
                            Manifest& manifest) {
  write_text(run_dir / "matrix.csv", matrix_to_csv(matrix));
  write_text(run_dir / "matrix_gaps.csv", matrix_to_csv(matrix, true));
  write_text(run_dir / "matrix.svg", svg::matrix_heat(matrix));
  manifest.add_output(run_dir, "matrix.csv");
  manifest.add_output(run_dir, "matrix_gaps.csv");
  manifest.add_output(run_dir, "matrix.svg");
}

int run_seed_matrix(const CommonOpts& opts, const std::string& from_dir) {
  Session session = open_session(opts);
  Manifest manifest;
  std::vector<Order> orders;
  for (uint64_t xi : session.config.xi_seeds) {
    const fs::path order_file =
        fs::path(from_dir) / "orders" / ("sigma-" + xi_tag(xi) + ".json");
    orders.push_back(load_order_file(order_file));
    manifest.add_input("orders/sigma-" + xi_tag(xi) + ".json", order_file);
  }

  const fs::path run_dir =
      create_run_dir(output_root(opts, &session), "seed-matrix", session.config.snapshot);
  write_config_snapshot(run_dir, session.config.snapshot, manifest);

  OrderEvaluator evaluator(session.context(), session.cache.get(), session.jobs);
  const QualityMatrix matrix =
      seed_mismatch_matrix(evaluator, orders, session.config.xi_seeds);
  write_matrix_artifacts(run_dir, matrix, manifest);

  nlohmann::json summary;
  summary["mean_diagonal"] = matrix.mean_diagonal();
  if (session.config.xi_seeds.size() > 1)
    summary["mean_off_diagonal"] = matrix.mean_off_diagonal();
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  manifest.add_output(run_dir, "summary.json");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

int run_transfer(const CommonOpts& opts, const std::vector<std::string>& order_specs) {
  Session session = open_session(opts);
  if (session.config.transfer_targets.empty())
    throw ConfigError("analysis.targets: the transfer subcommand needs at least one target");
  if (order_specs.empty())
    throw ConfigError("transfer: pass at least one --order NAME=PATH source");

  Manifest manifest;
  std::vector<std::string> names;
  std::vector<Order> orders;
  for (const std::string& spec : order_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("transfer: --order expects NAME=PATH, got '" + spec + "'");
    names.push_back(spec.substr(0, eq));
    const fs::path path = spec.substr(eq + 1);
    orders.push_back(load_order_file(path));
    manifest.add_input("order:" + names.back(), path);
  }

  const fs::path run_dir =
      create_run_dir(output_root(opts, &session), "transfer", session.config.snapshot);
  write_config_snapshot(run_dir, session.config.snapshot, manifest);

  std::vector<TransferTarget> targets;
  for (const auto& t : session.config.transfer_targets)
    targets.push_back({t.name, t.learner, t.train_config});

  const QualityMatrix matrix = transfer_matrix(
      session.dataset, session.splits, session.config.metric, targets, names, orders,
      session.config.xi_seeds.front(), session.cache.get(), session.jobs, session.config.zeta,
      session.config.baseline_orders);
  write_matrix_artifacts(run_dir, matrix, manifest);

  nlohmann::json summary;
  summary["baseline"] = matrix.baseline;
  bool all_above_baseline = true;
  for (size_t r = 0; r < matrix.rows(); ++r)
    for (size_t c = 0; c < matrix.cols(); ++c)
      all_above_baseline = all_above_baseline && matrix.gap_at(r, c) >= 0.0;
  summary["all_cells_above_baseline"] = all_above_baseline;
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  manifest.add_output(run_dir, "summary.json");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------ overlap and trace --

int run_overlap(const CommonOpts& opts, const std::string& path_a, const std::string& path_b) {
  const Order a = load_order_file(path_a);
  const Order b = load_order_file(path_b);
  const OverlapReport report = order_overlap(a, b);

  nlohmann::json snapshot;
  snapshot["subcommand"] = "overlap";
  snapshot["order_a"] = path_a;
  snapshot["order_b"] = path_b;
  const fs::path run_dir = create_run_dir(output_root(opts, nullptr), "overlap", snapshot);
  Manifest manifest;
  manifest.add_input("order_a", path_a);
  manifest.add_input("order_b", path_b);
  write_text(run_dir / "overlap.csv", overlap_to_csv(report));
  manifest.add_output(run_dir, "overlap.csv");

  nlohmann::json summary;
  summary["shared_count"] = report.shared_count;
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  manifest.add_output(run_dir, "summary.json");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

int run_trace(const CommonOpts& opts, const std::string& order_path) {
  Session session = open_session(opts);
  const Order order = load_order_file(order_path);
  order.validate(session.splits.pool);

  // Input-space bins when the config describes IDMR; label bins otherwise.
  BinFn bins;
  const StrategySection& strategy = session.config.strategy;
  if (strategy.type == "dmr" && strategy.dmr_wrapper == "idmr") {
    std::vector<uint32_t> accessible;
    accessible.insert(accessible.end(), session.splits.warm.begin(), session.splits.warm.end());
    accessible.insert(accessible.end(), session.splits.pool.begin(), session.splits.pool.end());
    accessible.insert(accessible.end(), session.splits.modelsel.begin(),
                      session.splits.modelsel.end());
    std::sort(accessible.begin(), accessible.end());
    bins = fit_bins(session.dataset, accessible, strategy.bins.kind, strategy.bins.num_bins,
                    strategy.bins.seed, strategy.bins.pca_dims, strategy.bins.feature);
  } else {
    bins = fit_bins(session.dataset, {}, BinKind::label, session.dataset.num_classes, 0);
  }

  const DistributionTrace trace = distribution_trace(session.dataset, order, session.splits, bins);

  const fs::path run_dir =
      create_run_dir(output_root(opts, &session), "trace", session.config.snapshot);
  Manifest manifest;
  write_config_snapshot(run_dir, session.config.snapshot, manifest);
  manifest.add_input("order", order_path);
  write_text(run_dir / "trace.csv", trace_to_csv(trace));
  write_text(run_dir / "trace.svg", svg::distribution_bars(trace));
  manifest.add_output(run_dir, "trace.csv");
  manifest.add_output(run_dir, "trace.svg");

  nlohmann::json summary;
  summary["deviation_from_test"] = trace_deviation(trace);
  write_text(run_dir / "summary.json", summary.dump(2) + "\n");
  manifest.add_output(run_dir, "summary.json");
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- report --

int run_report(const CommonOpts& opts, const std::vector<std::string>& record_files) {
  std::vector<QualityRecord> records;
  std::vector<std::string> names;
  Manifest manifest;
  for (const std::string& file : record_files) {
    if (!fs::exists(file)) throw MissingArtifact("records file not found: " + file);
    manifest.add_input(file, file);
    std::ifstream in(file);
    std::string line;
    size_t i = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      records.push_back(record_from_json(nlohmann::json::parse(line)));
      names.push_back(fs::path(file).stem().string() + "[" + std::to_string(i++) + "]");
    }
  }

  nlohmann::json snapshot;
  snapshot["subcommand"] = "report";
  snapshot["records"] = record_files;
  const fs::path run_dir = create_run_dir(output_root(opts, nullptr), "report", snapshot);

  std::vector<PerformanceCurve> val_curves, test_curves;
  for (const auto& record : records) {
    val_curves.push_back(record.curve_val);
    test_curves.push_back(record.curve_test);
  }
  write_text(run_dir / "curves_val.csv", curves_to_csv(names, val_curves));
  write_text(run_dir / "curves_test.csv", curves_to_csv(names, test_curves));
  write_text(run_dir / "curves.svg", svg::curves(names, test_curves));
  write_text(run_dir / "records.jsonl", records_to_jsonl(records));
  for (const char* rel : {"curves_val.csv", "curves_test.csv", "curves.svg", "records.jsonl"})
    manifest.add_output(run_dir, rel);
  manifest.write(run_dir);
  std::cout << run_dir.string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- cache --

struct ParsedCacheKey {
  std::string ds_fp;
  std::string spec;
  std::string cfg;
  std::string metric;
  uint64_t xi = 0;
  std::vector<uint32_t> labeled;
  std::string eval_id;
};

std::optional<ParsedCacheKey> parse_cache_key(const std::string& key) {
  ParsedCacheKey parsed;
  const std::string markers[] = {"ds=", ";spec{", "};cfg{", "};metric=", ";xi=", ";labeled=",
                                 ";eval="};
  size_t pos[7];
  size_t search_from = 0;
  for (int i = 0; i < 7; ++i) {
    pos[i] = key.find(markers[i], search_from);
    if (pos[i] == std::string::npos) return std::nullopt;
    search_from = pos[i] + markers[i].size();
  }
  if (pos[0] != 0) return std::nullopt;
  parsed.ds_fp = key.substr(3, pos[1] - 3);
  parsed.spec = key.substr(pos[1] + 6, pos[2] - pos[1] - 6);
  parsed.cfg = key.substr(pos[2] + 6, pos[3] - pos[2] - 6);
  parsed.metric = key.substr(pos[3] + 9, pos[4] - pos[3] - 9);
  try {
    parsed.xi = std::stoull(key.substr(pos[4] + 4, pos[5] - pos[4] - 4));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  const std::string labeled = key.substr(pos[5] + 9, pos[6] - pos[5] - 9);
  size_t start = 0;
  while (start < labeled.size()) {
    const size_t comma = labeled.find(',', start);
    if (comma == std::string::npos) return std::nullopt;  // entries are comma-terminated
    try {
      parsed.labeled.push_back(static_cast<uint32_t>(std::stoul(labeled.substr(start, comma - start))));
    } catch (const std::exception&) {
      return std::nullopt;
    }
    start = comma + 1;
  }
  parsed.eval_id = key.substr(pos[6] + 6);
  return parsed;
}

fs::path require_cache_dir(const std::string& flag) {
  const std::string dir = resolve_cache_dir(flag);
  if (dir.empty())
    throw ConfigError("cache: pass --cache DIR or set ORACLE_AL_CACHE");
  if (!fs::exists(dir)) throw MissingArtifact("cache directory does not exist: " + dir);
  return dir;
}

std::vector<fs::path> cache_entries(const fs::path& dir) {
  std::vector<fs::path> entries;
  for (const auto& item : fs::directory_iterator(dir))
    if (item.is_regular_file() && item.path().extension() == ".json")
      entries.push_back(item.path());
  std::sort(entries.begin(), entries.end());
  return entries;
}

int run_cache_stats(const std::string& cache_flag) {
  const fs::path dir = require_cache_dir(cache_flag);
  nlohmann::json out;
  out["directory"] = dir.string();
  out["entries"] = cache_entries(dir).size();
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int run_cache_clear(const std::string& cache_flag) {
  const fs::path dir = require_cache_dir(cache_flag);
  const auto entries = cache_entries(dir);
  for (const auto& entry : entries) fs::remove(entry);
  nlohmann::json out;
  out["removed"] = entries.size();
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

// Recomputes a deterministic 1% sample (every 100th entry of the sorted
// listing, at least one) and compares bit patterns. Entries fitted to a
// different dataset/learner/trainer than the config describes are counted
// as skipped, not failures.
int run_cache_verify(const CommonOpts& opts) {
  const fs::path dir = require_cache_dir(opts.cache_dir);
  Session session = open_session(opts);
  const std::string ds_fp = session.dataset.fingerprint();
  const std::string spec_canonical = session.config.learner.canonical();
  const std::string cfg_canonical = session.config.train_config.canonical();
  const std::string metric_name = to_string(session.config.metric);

  const auto entries = cache_entries(dir);
  uint64_t checked = 0, matched = 0, mismatched = 0, skipped = 0, unreadable = 0;
  for (size_t i = 0; i < entries.size(); i += 100) {
    nlohmann::json entry;
    try {
      entry = nlohmann::json::parse(read_text(entries[i]));
    } catch (const std::exception&) {
      ++unreadable;
      continue;
    }
    const auto parsed = parse_cache_key(entry.value("key", ""));
    if (!parsed) {
      ++unreadable;
      continue;
    }
    if (parsed->ds_fp != ds_fp || parsed->spec != spec_canonical ||
        parsed->cfg != cfg_canonical || parsed->metric != metric_name ||
        (parsed->eval_id != "V" && parsed->eval_id != "T")) {
      ++skipped;
      continue;
    }
    ++checked;
    const Model model =
        train(session.config.learner, session.dataset, parsed->labeled, session.splits.modelsel,
              session.config.train_config, session.config.metric, parsed->xi);
    const auto& eval_set = parsed->eval_id == "V" ? session.splits.val : session.splits.test;
    const double score =
        evaluate(model, session.dataset, eval_set, session.config.metric);
    uint64_t bits;
    std::memcpy(&bits, &score, sizeof(bits));
    if (hex64(bits) == entry.value("score_hex", "")) {
      ++matched;
    } else {
      ++mismatched;
      std::cerr << "cache: mismatch in " << entries[i].filename().string() << "\n";
    }
  }

  nlohmann::json out;
  out["entries"] = entries.size();
  out["checked"] = checked;
  out["matched"] = matched;
  out["mismatched"] = mismatched;
  out["skipped"] = skipped;
  out["unreadable"] = unreadable;
  std::cout << out.dump(2) << "\n";
  return mismatched == 0 ? kExitOk : kExitRuntime;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* config = cmd->add_option("--config", opts.config_path, "experiment config file");
  if (config_required) config->required();
  cmd->add_option("--out", opts.out_dir, "output root (default: config output_dir)");
  cmd->add_option("--cache", opts.cache_dir, "training cache directory (default: ORACLE_AL_CACHE)");
  cmd->add_option("--jobs", opts.jobs, "parallel trainings (default: ORACLE_AL_JOBS or cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"order-oracle active learning experiment runner"};
  app.require_subcommand(1);

  SearchOpts search_opts;
  auto* search_cmd = app.add_subcommand("search", "annealing order search, one chain per seed");
  add_common(search_cmd, search_opts.common, false);
  search_cmd->add_option("--resume", search_opts.resume_dir, "continue an interrupted search run");
  search_cmd->add_option("--checkpoint-every", search_opts.checkpoint_every,
                         "steps between checkpoints");

  CommonOpts heuristic_opts;
  auto* heuristic_cmd =
      app.add_subcommand("heuristic", "build an order from the configured strategy");
  add_common(heuristic_cmd, heuristic_opts);

  CommonOpts evaluate_opts;
  std::string evaluate_order;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "quality record for a stored order");
  add_common(evaluate_cmd, evaluate_opts);
  evaluate_cmd->add_option("--order", evaluate_order, "order JSON file")->required();

  CommonOpts seed_matrix_opts;
  std::string seed_matrix_from;
  auto* seed_matrix_cmd =
      app.add_subcommand("seed-matrix", "seed-mismatch quality matrix from a search run");
  add_common(seed_matrix_cmd, seed_matrix_opts);
  seed_matrix_cmd->add_option("--from", seed_matrix_from, "search run directory")->required();

  CommonOpts transfer_opts;
  std::vector<std::string> transfer_orders;
  auto* transfer_cmd =
      app.add_subcommand("transfer", "architecture transfer matrix with a random baseline");
  add_common(transfer_cmd, transfer_opts);
  transfer_cmd->add_option("--order", transfer_orders, "source order as NAME=PATH (repeatable)");

  CommonOpts overlap_opts;
  std::string overlap_a, overlap_b;
  auto* overlap_cmd = app.add_subcommand("overlap", "shared points between two orders");
  add_common(overlap_cmd, overlap_opts, false);
  overlap_cmd->add_option("--order-a", overlap_a, "first order JSON file")->required();
  overlap_cmd->add_option("--order-b", overlap_b, "second order JSON file")->required();

  CommonOpts trace_opts;
  std::string trace_order;
  auto* trace_cmd = app.add_subcommand("trace", "label/bin distribution trace of an order");
  add_common(trace_cmd, trace_opts);
  trace_cmd->add_option("--order", trace_order, "order JSON file")->required();

  CommonOpts report_opts;
  std::vector<std::string> report_records;
  auto* report_cmd = app.add_subcommand("report", "curve CSVs and SVG from record files");
  add_common(report_cmd, report_opts, false);
  report_cmd->add_option("--records", report_records, "records.jsonl files (repeatable)");

  CommonOpts cache_opts;
  auto* cache_cmd = app.add_subcommand("cache", "training-cache administration");
  cache_cmd->require_subcommand(1);
  auto* cache_stats_cmd = cache_cmd->add_subcommand("stats", "entry count");
  auto* cache_clear_cmd = cache_cmd->add_subcommand("clear", "remove all entries");
  auto* cache_verify_cmd =
      cache_cmd->add_subcommand("verify", "recompute a 1% sample and compare bits");
  for (auto* sub : {cache_stats_cmd, cache_clear_cmd})
    sub->add_option("--cache", cache_opts.cache_dir, "cache directory");
  add_common(cache_verify_cmd, cache_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*search_cmd) return run_search(search_opts);
    if (*heuristic_cmd) return run_heuristic(heuristic_opts);
    if (*evaluate_cmd) return run_evaluate(evaluate_opts, evaluate_order);
    if (*seed_matrix_cmd) return run_seed_matrix(seed_matrix_opts, seed_matrix_from);
    if (*transfer_cmd) return run_transfer(transfer_opts, transfer_orders);
    if (*overlap_cmd) return run_overlap(overlap_opts, overlap_a, overlap_b);
    if (*trace_cmd) return run_trace(trace_opts, trace_order);
    if (*report_cmd) return run_report(report_opts, report_records);
    if (*cache_stats_cmd) return run_cache_stats(cache_opts.cache_dir);
    if (*cache_clear_cmd) return run_cache_clear(cache_opts.cache_dir);
    if (*cache_verify_cmd) return run_cache_verify(cache_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
