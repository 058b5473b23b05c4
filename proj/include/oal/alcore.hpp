#pragma once

// Acquisition orders, labeled prefixes, performance curves, xi-quality, and
// a prefix-cached order evaluator. An order is a partial permutation of K*B
// distinct pool indices; its labeled prefix at iteration k is the warm-start
// set plus the first k*B entries. Quality is the mean of tau(k) over
// k = 1..K; tau(0) is recorded for plots only.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "oal/dataset.hpp"
#include "oal/hash.hpp"
#include "oal/learner.hpp"
#include "oal/parallel.hpp"
#include "oal/rng.hpp"

namespace oal {

struct ALConfig {
  uint32_t B = 1;
  uint32_t K = 1;

  void validate(size_t pool_size) const {
    if (B == 0 || K == 0) throw std::invalid_argument("alconfig: B and K must be >= 1");
    if (static_cast<size_t>(B) * K > pool_size)
      throw std::invalid_argument("alconfig: B*K exceeds pool size");
  }
  size_t total() const { return static_cast<size_t>(B) * K; }
};

struct Order {
  std::vector<uint32_t> indices;  // length K*B, all distinct, all in the pool
  ALConfig config;

  void validate(std::span<const uint32_t> pool) const {
    config.validate(pool.size());
    if (indices.size() != config.total())
      throw std::invalid_argument("order: index count must equal K*B");
    std::unordered_set<uint32_t> pool_set(pool.begin(), pool.end());
    std::unordered_set<uint32_t> seen;
    for (uint32_t idx : indices) {
      if (!pool_set.count(idx)) throw std::invalid_argument("order: index outside the pool");
      if (!seen.insert(idx).second) throw std::invalid_argument("order: duplicate index");
    }
  }

  std::span<const uint32_t> batch(uint32_t k) const {  // k in [0, K)
    return {indices.data() + static_cast<size_t>(k) * config.B, config.B};
  }
};

// Seeded shuffle of the full pool truncated to the first K*B entries; also
// the initializer sigma(0) of the annealing search.
inline Order random_order(std::span<const uint32_t> pool, const ALConfig& config, Rng& rng) {
  config.validate(pool.size());
  std::vector<uint32_t> shuffled(pool.begin(), pool.end());
  rng.shuffle(shuffled);
  shuffled.resize(config.total());
  return Order{std::move(shuffled), config};
}

inline nlohmann::json order_to_json(const Order& order) {
  return {{"config", {{"B", order.config.B}, {"K", order.config.K}}},
          {"indices", order.indices}};
}

inline Order order_from_json(const nlohmann::json& j) {
  Order order;
  order.config.B = j.at("config").at("B").get<uint32_t>();
  order.config.K = j.at("config").at("K").get<uint32_t>();
  order.indices = j.at("indices").get<std::vector<uint32_t>>();
  if (order.indices.size() != order.config.total())
    throw std::runtime_error("order: index count must equal K*B");
  return order;
}

// D^L_k = D^L_0 union the first k*B order entries, returned sorted.
inline std::vector<uint32_t> labeled_prefix(const Order& order, uint32_t k, const Splits& splits) {
  if (k > order.config.K) throw std::invalid_argument("labeled_prefix: k exceeds K");
  std::vector<uint32_t> labeled(splits.warm.begin(), splits.warm.end());
  labeled.insert(labeled.end(), order.indices.begin(),
                 order.indices.begin() + static_cast<size_t>(k) * order.config.B);
  std::sort(labeled.begin(), labeled.end());
  return labeled;
}

struct PerformanceCurve {
  std::vector<double> values;          // tau(k) for k = 1..K
  std::optional<double> tau0;          // warm-start score, plots only

  uint32_t K() const { return static_cast<uint32_t>(values.size()); }
};

inline double quality(const PerformanceCurve& curve) {
  if (curve.values.empty()) throw std::invalid_argument("quality: empty curve");
  double sum = 0.0;
  for (double v : curve.values) sum += v;
  return sum / static_cast<double>(curve.values.size());
}

struct QualityRecord {
  Order order;
  uint64_t xi = 0;
  PerformanceCurve curve_val;
  PerformanceCurve curve_test;
  double q_val = 0.0;
  double q_test = 0.0;
};

inline nlohmann::json record_to_json(const QualityRecord& record) {
  nlohmann::json j;
  j["order"] = order_to_json(record.order);
  j["xi"] = record.xi;
  j["curve_val"] = record.curve_val.values;
  j["curve_test"] = record.curve_test.values;
  if (record.curve_val.tau0) j["tau0_val"] = *record.curve_val.tau0;
  if (record.curve_test.tau0) j["tau0_test"] = *record.curve_test.tau0;
  j["q_val"] = record.q_val;
  j["q_test"] = record.q_test;
  return j;
}

inline QualityRecord record_from_json(const nlohmann::json& j) {
  QualityRecord record;
  record.order = order_from_json(j.at("order"));
  record.xi = j.at("xi").get<uint64_t>();
  record.curve_val.values = j.at("curve_val").get<std::vector<double>>();
  record.curve_test.values = j.at("curve_test").get<std::vector<double>>();
  if (j.contains("tau0_val")) record.curve_val.tau0 = j.at("tau0_val").get<double>();
  if (j.contains("tau0_test")) record.curve_test.tau0 = j.at("tau0_test").get<double>();
  record.q_val = j.at("q_val").get<double>();
  record.q_test = j.at("q_test").get<double>();
  return record;
}

// `k,score` rows; the optional k=0 row carries the warm-start score.
inline std::string curve_to_csv(const PerformanceCurve& curve) {
  std::string out = "k,score\n";
  if (curve.tau0) out += "0," + fmt_double(*curve.tau0) + "\n";
  for (uint32_t k = 0; k < curve.values.size(); ++k)
    out += std::to_string(k + 1) + "," + fmt_double(curve.values[k]) + "\n";
  return out;
}

// Everything a training run depends on, minus the labeled set.
struct EvalContext {
  const Dataset* dataset = nullptr;
  const Splits* splits = nullptr;
  LearnerSpec learner;
  TrainConfig train_config;
  Metric metric = Metric::accuracy;
};

// Memoizes evaluation scores of finished trainings. The full canonical key
// (dataset fingerprint, learner spec, train config, metric, xi, sorted
// labeled indices, eval-set id) is stored alongside each score; a disk entry
// whose recorded key disagrees with the request is evicted, never used.
// Thread-safe; concurrent inserts of the same key are value-identical by
// construction, so last-write-wins is sound.
class TrainingCache {
 public:
  TrainingCache() = default;

  explicit TrainingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
  }

  static std::string make_key(const EvalContext& ctx, uint64_t xi,
                              std::span<const uint32_t> sorted_labeled,
                              const std::string& eval_id) {
    std::string key = "ds=" + ctx.dataset->fingerprint() + ";spec{" + ctx.learner.canonical() +
                      "};cfg{" + ctx.train_config.canonical() + "};metric=" +
                      to_string(ctx.metric) + ";xi=" + std::to_string(xi) + ";labeled=";
    for (uint32_t idx : sorted_labeled) {
      key += std::to_string(idx);
      key += ',';
    }
    key += ";eval=" + eval_id;
    return key;
  }

  std::optional<double> lookup(const std::string& key) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = memory_.find(key);
      if (it != memory_.end()) {
        ++hits_;
        return it->second;
      }
    }
    if (dir_) {
      auto from_disk = load_disk(key);
      if (from_disk) {
        std::lock_guard<std::mutex> lock(mutex_);
        memory_[key] = *from_disk;
        ++hits_;
        return from_disk;
      }
    }
    std::lock_guard<std::mutex> lock(mutex_);
    ++misses_;
    return std::nullopt;
  }

  void insert(const std::string& key, double score) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      memory_[key] = score;
      ++inserts_;
    }
    if (dir_) store_disk(key, score);
  }

  struct Stats {
    uint64_t hits = 0;
    uint64_t misses = 0;
    uint64_t inserts = 0;
    uint64_t evictions = 0;
    size_t memory_entries = 0;
  };

  Stats stats() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return {hits_, misses_, inserts_, evictions_, memory_.size()};
  }

  const std::optional<std::filesystem::path>& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& key) const {
    return *dir_ / (content_hash(key) + ".json");
  }

  std::optional<double> load_disk(const std::string& key) {
    const auto path = entry_path(key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
      nlohmann::json j = nlohmann::json::parse(in);
      if (j.at("key").get<std::string>() != key) {
        evict(path);
        return std::nullopt;
      }
      const uint64_t bits = std::stoull(j.at("score_hex").get<std::string>(), nullptr, 16);
      double score;
      std::memcpy(&score, &bits, sizeof(score));
      return score;
    } catch (const std::exception&) {
      evict(path);
      return std::nullopt;
    }
  }

  void store_disk(const std::string& key, double score) {
    uint64_t bits;
    std::memcpy(&bits, &score, sizeof(bits));
    nlohmann::json j;
    j["key"] = key;
    j["score_hex"] = hex64(bits);
    j["score"] = score;
    const auto path = entry_path(key);
    const auto tmp = path.string() + ".tmp." + std::to_string(
        static_cast<unsigned long long>(reinterpret_cast<uintptr_t>(&bits)));
    {
      std::ofstream out(tmp);
      out << j.dump() << "\n";
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }

  void evict(const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    std::lock_guard<std::mutex> lock(mutex_);
    ++evictions_;
  }

  mutable std::mutex mutex_;
  std::unordered_map<std::string, double> memory_;
  std::optional<std::filesystem::path> dir_;
  uint64_t hits_ = 0;
  uint64_t misses_ = 0;
  uint64_t inserts_ = 0;
  uint64_t evictions_ = 0;
};

// Trains one labeled prefix and scores it on validation and test. Both
// scores come from the same trained model; the cache stores them under
// separate eval ids.
struct PrefixScores {
  double val = 0.0;
  double test = 0.0;
};

// Evaluates orders, reusing cached prefix scores where the labeled set (as a
// set: intra-batch position is immaterial) has been trained before. The K
// trainings of a curve are independent and may run in parallel.
class OrderEvaluator {
 public:
  OrderEvaluator(EvalContext ctx, TrainingCache* cache = nullptr, unsigned jobs = 1)
      : ctx_(std::move(ctx)), cache_(cache), jobs_(jobs) {}

  QualityRecord evaluate(const Order& order, uint64_t xi, bool with_tau0 = false) {
    const uint32_t K = order.config.K;
    QualityRecord record;
    record.order = order;
    record.xi = xi;
    record.curve_val.values.assign(K, 0.0);
    record.curve_test.values.assign(K, 0.0);

    // slot 0 is the optional warm-start model, slots 1..K the curve points
    std::vector<PrefixScores> scores(K + 1);
    std::vector<char> wanted(K + 1, 1);
    wanted[0] = with_tau0 ? 1 : 0;
    parallel_for(K + 1, jobs_, [&](size_t k) {
      if (!wanted[k]) return;
      scores[k] = prefix_scores(order, static_cast<uint32_t>(k), xi);
    });

    if (with_tau0) {
      record.curve_val.tau0 = scores[0].val;
      record.curve_test.tau0 = scores[0].test;
    }
    for (uint32_t k = 1; k <= K; ++k) {
      record.curve_val.values[k - 1] = scores[k].val;
      record.curve_test.values[k - 1] = scores[k].test;
    }
    record.q_val = quality(record.curve_val);
    record.q_test = quality(record.curve_test);
    return record;
  }

  PrefixScores prefix_scores(const Order& order, uint32_t k, uint64_t xi) {
    const auto labeled = labeled_prefix(order, k, *ctx_.splits);
    std::string key_val, key_test;
    if (cache_) {
      key_val = TrainingCache::make_key(ctx_, xi, labeled, "V");
      key_test = TrainingCache::make_key(ctx_, xi, labeled, "T");
      const auto hit_val = cache_->lookup(key_val);
      const auto hit_test = cache_->lookup(key_test);
      if (hit_val && hit_test) {
        reused_.fetch_add(1, std::memory_order_relaxed);
        return {*hit_val, *hit_test};
      }
    }
    const Model model = train(ctx_.learner, *ctx_.dataset, labeled, ctx_.splits->modelsel,
                              ctx_.train_config, ctx_.metric, xi);
    trainings_.fetch_add(1, std::memory_order_relaxed);
    PrefixScores out;
    out.val = evaluate_metric(model, ctx_.splits->val);
    out.test = evaluate_metric(model, ctx_.splits->test);
    if (cache_) {
      cache_->insert(key_val, out.val);
      cache_->insert(key_test, out.test);
    }
    return out;
  }

  uint64_t trainings_run() const { return trainings_.load(); }
  uint64_t prefixes_reused() const { return reused_.load(); }
  const EvalContext& context() const { return ctx_; }

 private:
  double evaluate_metric(const Model& model, std::span<const uint32_t> index_set) {
    return oal::evaluate(model, *ctx_.dataset, index_set, ctx_.metric);
  }

  EvalContext ctx_;
  TrainingCache* cache_;
  unsigned jobs_;
  std::atomic<uint64_t> trainings_{0};
  std::atomic<uint64_t> reused_{0};
};

// Uncached single-set curve, kept as the plain reference path.
inline PerformanceCurve performance_curve(const Order& order, uint64_t xi, const Dataset& dataset,
                                          const Splits& splits,
                                          std::span<const uint32_t> eval_set,
                                          const LearnerSpec& learner,
                                          const TrainConfig& train_config, Metric metric,
                                          bool with_tau0 = false, unsigned jobs = 1) {
  const uint32_t K = order.config.K;
  PerformanceCurve curve;
  curve.values.assign(K, 0.0);
  double tau0 = 0.0;
  parallel_for(K + 1, jobs, [&](size_t k) {
    if (k == 0 && !with_tau0) return;
    const auto labeled = labeled_prefix(order, static_cast<uint32_t>(k), splits);
    const Model model =
        train(learner, dataset, labeled, splits.modelsel, train_config, metric, xi);
    const double score = evaluate(model, dataset, eval_set, metric);
    if (k == 0)
      tau0 = score;
    else
      curve.values[k - 1] = score;
  });
  if (with_tau0) curve.tau0 = tau0;
  return curve;
}

inline QualityRecord evaluate_order(const Order& order, uint64_t xi, const EvalContext& ctx,
                                    TrainingCache* cache = nullptr, bool with_tau0 = false,
                                    unsigned jobs = 1) {
  OrderEvaluator evaluator(ctx, cache, jobs);
  return evaluator.evaluate(order, xi, with_tau0);
}

}  // namespace oal
