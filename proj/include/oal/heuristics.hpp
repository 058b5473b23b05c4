#pragma once

// Baseline acquisition strategies (random, max-entropy, BALD) and the AL
// loop that turns a strategy into an Order. Training stochasticity stays in
// xi; all strategy randomness comes from zeta, so (strategy, zeta) -> Order
// is deterministic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "oal/alcore.hpp"
#include "oal/dataset.hpp"
#include "oal/learner.hpp"
#include "oal/rng.hpp"

namespace oal {

enum class StrategyKind { random, max_entropy, bald };

inline std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::random: return "random";
    case StrategyKind::max_entropy: return "max_entropy";
    case StrategyKind::bald: return "bald";
  }
  return "?";
}

inline StrategyKind strategy_kind_from_string(const std::string& name) {
  if (name == "random") return StrategyKind::random;
  if (name == "max_entropy") return StrategyKind::max_entropy;
  if (name == "bald") return StrategyKind::bald;
  throw std::invalid_argument("unknown strategy kind '" + name + "'");
}

struct AcquisitionStrategy {
  StrategyKind kind = StrategyKind::random;
  uint32_t mc_samples = 10;  // bald only
  uint64_t zeta = 0;

  void validate() const {
    if (kind == StrategyKind::bald && mc_samples < 2)
      throw std::invalid_argument("strategy: bald needs mc_samples >= 2");
  }
  bool needs_model() const { return kind != StrategyKind::random; }
};

// H(p) in nats, with 0 ln 0 = 0.
inline double entropy_score(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument("entropy: negative probability");
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

// MC mutual information H(mean p) - mean H(p), clamped at 0 against
// floating-point negatives.
inline double bald_score(const std::vector<std::vector<double>>& mc) {
  if (mc.size() < 2) throw std::invalid_argument("bald: need at least 2 MC samples");
  const size_t dim = mc.front().size();
  // identical samples mean zero disagreement exactly; averaging them would
  // leave ~1e-16 residue
  if (std::all_of(mc.begin() + 1, mc.end(), [&](const auto& p) { return p == mc.front(); }))
    return 0.0;
  std::vector<double> mean(dim, 0.0);
  double mean_entropy = 0.0;
  for (const auto& p : mc) {
    if (p.size() != dim) throw std::invalid_argument("bald: sample length mismatch");
    for (size_t c = 0; c < dim; ++c) mean[c] += p[c];
    mean_entropy += entropy_score(p);
  }
  for (double& v : mean) v /= static_cast<double>(mc.size());
  mean_entropy /= static_cast<double>(mc.size());
  return std::max(0.0, entropy_score(mean) - mean_entropy);
}

// Top-B by score, ties broken toward the lower pool index. The (index,
// score) pairs may arrive in any iteration order.
inline std::vector<uint32_t> select_batch(std::vector<std::pair<uint32_t, double>> scores,
                                          uint32_t B) {
  if (scores.size() < B) throw std::invalid_argument("select_batch: fewer scores than B");
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<uint32_t> batch;
  batch.reserve(B);
  for (uint32_t i = 0; i < B; ++i) batch.push_back(scores[i].first);
  return batch;
}

// Scores every candidate under the iteration's model. BALD seeds its MC
// masks per point from (zeta, iteration, index) so scores do not depend on
// the order candidates are visited in.
inline std::vector<std::pair<uint32_t, double>> strategy_scores(
    const AcquisitionStrategy& strategy, const Model& model, const Dataset& dataset,
    std::span<const uint32_t> candidates, uint32_t iteration) {
  std::vector<std::pair<uint32_t, double>> scores;
  scores.reserve(candidates.size());
  for (uint32_t idx : candidates) {
    double score = 0.0;
    if (strategy.kind == StrategyKind::max_entropy) {
      score = entropy_score(predict_probs(model, dataset.row(idx)));
    } else if (strategy.kind == StrategyKind::bald) {
      const uint64_t point_seed = seed_combine(seed_combine(strategy.zeta, iteration), idx);
      score = bald_score(predict_proba(model, dataset.row(idx), strategy.mc_samples, point_seed));
    } else {
      throw std::invalid_argument("strategy_scores: random strategy has no scores");
    }
    scores.emplace_back(idx, score);
  }
  return scores;
}

// Picks a single point from `candidates` (ascending). Random consumes one
// next_below draw; scoring strategies take the argmax with the ascending
// tie-break. This is the primitive the distribution-matching wrappers call
// on bin slices; a full batch from it coincides with top-B selection because
// the model is fixed within an iteration.
inline uint32_t pick_one(const AcquisitionStrategy& strategy, const Model* model,
                         const Dataset& dataset, std::span<const uint32_t> candidates,
                         uint32_t iteration, Rng& zeta_rng) {
  if (candidates.empty()) throw std::invalid_argument("pick_one: no candidates");
  if (strategy.kind == StrategyKind::random)
    return candidates[zeta_rng.next_below(candidates.size())];
  return select_batch(strategy_scores(strategy, *model, dataset, candidates, iteration), 1)[0];
}

// Everything one acquisition episode needs besides the strategy.
struct AcquisitionTask {
  const Dataset* dataset = nullptr;
  const Splits* splits = nullptr;
  LearnerSpec learner;
  TrainConfig train_config;
  Metric metric = Metric::accuracy;
  ALConfig config;
  uint64_t xi = 0;
};

// K iterations of: train theta_k on D^L_k under xi (when the selector wants
// a model), pick a batch from the remaining pool, label it. `pick_batch`
// receives the model (null without one), the sorted labeled set, the sorted
// remaining pool, and k; it must return B distinct remaining indices.
template <typename PickBatch>
Order run_acquisition_loop(const AcquisitionTask& task, bool needs_model, PickBatch&& pick_batch) {
  task.config.validate(task.splits->pool.size());
  Order order;
  order.config = task.config;
  order.indices.reserve(task.config.total());

  std::vector<uint32_t> labeled(task.splits->warm.begin(), task.splits->warm.end());
  std::vector<uint32_t> remaining(task.splits->pool.begin(), task.splits->pool.end());
  std::sort(labeled.begin(), labeled.end());
  std::sort(remaining.begin(), remaining.end());

  for (uint32_t k = 0; k < task.config.K; ++k) {
    Model model;
    if (needs_model)
      model = train(task.learner, *task.dataset, labeled, task.splits->modelsel,
                    task.train_config, task.metric, task.xi);
    const std::vector<uint32_t> batch =
        pick_batch(needs_model ? &model : nullptr, labeled, remaining, k);
    if (batch.size() != task.config.B)
      throw std::logic_error("acquisition: selector returned a wrong-sized batch");
    for (uint32_t idx : batch) {
      const auto it = std::lower_bound(remaining.begin(), remaining.end(), idx);
      if (it == remaining.end() || *it != idx)
        throw std::logic_error("acquisition: selector picked an unavailable index");
      remaining.erase(it);
      labeled.insert(std::lower_bound(labeled.begin(), labeled.end(), idx), idx);
      order.indices.push_back(idx);
    }
  }
  return order;
}

inline Order run_acquisition(const AcquisitionStrategy& strategy, const AcquisitionTask& task) {
  strategy.validate();
  Rng zeta_rng(strategy.zeta);
  return run_acquisition_loop(
      task, strategy.needs_model(),
      [&](const Model* model, const std::vector<uint32_t>&, std::vector<uint32_t>& remaining,
          uint32_t k) {
        std::vector<uint32_t> batch;
        if (strategy.kind == StrategyKind::random) {
          // B sequential draws without replacement from the ascending list
          std::vector<uint32_t> candidates = remaining;
          for (uint32_t j = 0; j < task.config.B; ++j) {
            const size_t at = zeta_rng.next_below(candidates.size());
            batch.push_back(candidates[at]);
            candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(at));
          }
        } else {
          batch = select_batch(strategy_scores(strategy, *model, *task.dataset, remaining, k),
                               task.config.B);
        }
        return batch;
      });
}

}  // namespace oal
