#pragma once

// Behavioral analyses over persisted orders: seed-mismatch and architecture
// transfer matrices, order overlap, label/bin distribution traces, and the
// crossing-curves illustration. Everything here is derived from orders plus
// evaluate_order; no training logic of its own.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "oal/alcore.hpp"
#include "oal/dmr.hpp"

namespace oal {

// Rows are evaluation targets (training seed or architecture), columns are
// order sources. `gaps` shares the cell layout: for seed-mismatch it is the
// row diagonal minus the cell, for transfer the cell minus the row's random
// baseline.
struct QualityMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<double> cells;  // row-major
  std::vector<double> gaps;
  std::vector<double> baseline;  // per row; empty unless a baseline was computed

  size_t rows() const { return row_labels.size(); }
  size_t cols() const { return col_labels.size(); }
  double at(size_t r, size_t c) const { return cells[r * cols() + c]; }
  double gap_at(size_t r, size_t c) const { return gaps[r * cols() + c]; }

  double mean_diagonal() const {
    double sum = 0.0;
    const size_t n = std::min(rows(), cols());
    for (size_t i = 0; i < n; ++i) sum += at(i, i);
    return sum / static_cast<double>(n);
  }

  double mean_off_diagonal() const {
    double sum = 0.0;
    size_t count = 0;
    for (size_t r = 0; r < rows(); ++r)
      for (size_t c = 0; c < cols(); ++c)
        if (r != c) {
          sum += at(r, c);
          ++count;
        }
    if (count == 0) throw std::logic_error("matrix: no off-diagonal cells");
    return sum / static_cast<double>(count);
  }
};

// M[i][j] = q_T of the order searched under seed j, retrained under seed i.
// The gap per cell is the row's self-match quality minus the cell; the
// diagonal gap is 0 by definition.
inline QualityMatrix seed_mismatch_matrix(OrderEvaluator& evaluator,
                                          std::span<const Order> orders,
                                          std::span<const uint64_t> seeds) {
  if (orders.size() != seeds.size())
    throw std::invalid_argument("seed-mismatch: need exactly one order per seed");
  if (orders.empty()) throw std::invalid_argument("seed-mismatch: empty seed list");

  QualityMatrix m;
  for (uint64_t seed : seeds) {
    m.row_labels.push_back("xi=" + std::to_string(seed));
    m.col_labels.push_back("sigma(xi=" + std::to_string(seed) + ")");
  }
  const size_t n = seeds.size();
  m.cells.assign(n * n, 0.0);
  m.gaps.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      m.cells[i * n + j] = evaluator.evaluate(orders[j], seeds[i]).q_test;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) m.gaps[i * n + j] = m.cells[i * n + i] - m.cells[i * n + j];
  return m;
}

// One evaluation target of the transfer analysis: same data and splits,
// different learner.
struct TransferTarget {
  std::string name;
  LearnerSpec learner;
  TrainConfig train_config;
};

// M[target][source] = q_T of the source architecture's order retrained under
// the target architecture. Each row also carries a random baseline: the mean
// q_T over `baseline_orders` ζ-seeded random orders (the same orders for
// every row, so rows are paired). Gap per cell = cell - row baseline.
inline QualityMatrix transfer_matrix(const Dataset& dataset, const Splits& splits, Metric metric,
                                     std::span<const TransferTarget> targets,
                                     std::span<const std::string> source_names,
                                     std::span<const Order> source_orders, uint64_t xi,
                                     TrainingCache* cache = nullptr, unsigned jobs = 1,
                                     uint64_t baseline_zeta = 0, uint32_t baseline_orders = 5) {
  if (source_names.size() != source_orders.size())
    throw std::invalid_argument("transfer: need exactly one order per source");
  if (targets.empty() || source_orders.empty())
    throw std::invalid_argument("transfer: empty target or source list");
  for (const Order& order : source_orders)
    if (order.config.B != source_orders[0].config.B || order.config.K != source_orders[0].config.K)
      throw std::invalid_argument("transfer: orders disagree on the acquisition config");

  Rng baseline_rng(baseline_zeta);
  std::vector<Order> random_orders;
  for (uint32_t i = 0; i < baseline_orders; ++i)
    random_orders.push_back(random_order(splits.pool, source_orders[0].config, baseline_rng));

  QualityMatrix m;
  for (const auto& name : source_names) m.col_labels.push_back(name);
  const size_t cols = source_orders.size();
  m.cells.assign(targets.size() * cols, 0.0);
  m.gaps.assign(targets.size() * cols, 0.0);

  for (size_t r = 0; r < targets.size(); ++r) {
    m.row_labels.push_back(targets[r].name);
    EvalContext ctx{&dataset, &splits, targets[r].learner, targets[r].train_config, metric};
    OrderEvaluator evaluator(ctx, cache, jobs);
    double baseline_sum = 0.0;
    for (const Order& order : random_orders)
      baseline_sum += evaluator.evaluate(order, xi).q_test;
    const double baseline = baseline_sum / static_cast<double>(random_orders.size());
    m.baseline.push_back(baseline);
    for (size_t c = 0; c < cols; ++c) {
      m.cells[r * cols + c] = evaluator.evaluate(source_orders[c], xi).q_test;
      m.gaps[r * cols + c] = m.cells[r * cols + c] - baseline;
    }
  }
  return m;
}

struct RankPair {
  uint32_t index = 0;   // pool index shared by both orders
  uint32_t rank_a = 0;  // 1-based position in order a
  uint32_t rank_b = 0;
};

struct OverlapReport {
  uint32_t shared_count = 0;
  std::vector<RankPair> pairs;  // sorted by rank_a
};

inline OverlapReport order_overlap(const Order& a, const Order& b) {
  if (a.config.B != b.config.B || a.config.K != b.config.K)
    throw std::invalid_argument("overlap: orders disagree on the acquisition config");
  OverlapReport report;
  for (uint32_t pos_a = 0; pos_a < a.indices.size(); ++pos_a) {
    const auto it = std::find(b.indices.begin(), b.indices.end(), a.indices[pos_a]);
    if (it == b.indices.end()) continue;
    const auto pos_b = static_cast<uint32_t>(it - b.indices.begin());
    report.pairs.push_back({a.indices[pos_a], pos_a + 1, pos_b + 1});
  }
  report.shared_count = static_cast<uint32_t>(report.pairs.size());
  return report;
}

// Cumulative bin (or label) composition of D^L_k for k = 0..K, next to the
// reference distribution of D^T. Row k sums to |D^L_0| + kB.
struct DistributionTrace {
  std::vector<std::vector<uint64_t>> counts_by_k;  // K+1 rows
  std::vector<uint64_t> reference_counts;          // over D^T
  std::vector<double> reference_freqs;
};

inline DistributionTrace distribution_trace(const Dataset& dataset, const Order& order,
                                            const Splits& splits, const BinFn& bins) {
  DistributionTrace trace;
  std::vector<uint64_t> counts(bins.num_bins, 0);
  for (uint32_t idx : splits.warm) ++counts[bins.bin_of(dataset, idx)];
  trace.counts_by_k.push_back(counts);
  for (uint32_t k = 1; k <= order.config.K; ++k) {
    for (uint32_t idx : order.batch(k - 1)) ++counts[bins.bin_of(dataset, idx)];
    trace.counts_by_k.push_back(counts);
  }
  const auto reference = bin_distribution(dataset, splits.test, bins);
  trace.reference_counts = reference.counts;
  trace.reference_freqs = reference.freqs;
  return trace;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: length mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

// Distance of the final labeled composition from the test reference.
inline double trace_deviation(const DistributionTrace& trace) {
  const auto& last = trace.counts_by_k.back();
  uint64_t total = 0;
  for (uint64_t c : last) total += c;
  std::vector<double> freqs(last.size(), 0.0);
  if (total > 0)
    for (size_t b = 0; b < last.size(); ++b)
      freqs[b] = static_cast<double>(last[b]) / static_cast<double>(total);
  return total_variation(freqs, trace.reference_freqs);
}

// A pair of curves crosses when each strictly dominates the other somewhere:
// curve a is strictly higher at iteration k_a_above and strictly lower at
// k_b_above (1-based). Weak dominance never counts.
struct CrossingReport {
  bool found = false;
  size_t order_a = 0;
  size_t order_b = 0;
  uint32_t k_a_above = 0;
  uint32_t k_b_above = 0;
};

inline CrossingReport find_crossing(std::span<const PerformanceCurve> curves) {
  CrossingReport report;
  for (size_t a = 0; a < curves.size(); ++a) {
    for (size_t b = a + 1; b < curves.size(); ++b) {
      uint32_t above = 0;
      uint32_t below = 0;
      const size_t K = std::min(curves[a].values.size(), curves[b].values.size());
      for (size_t k = 0; k < K; ++k) {
        if (curves[a].values[k] > curves[b].values[k] && above == 0)
          above = static_cast<uint32_t>(k + 1);
        if (curves[a].values[k] < curves[b].values[k] && below == 0)
          below = static_cast<uint32_t>(k + 1);
      }
      if (above != 0 && below != 0) {
        report.found = true;
        report.order_a = a;
        report.order_b = b;
        report.k_a_above = above;
        report.k_b_above = below;
        return report;
      }
    }
  }
  return report;
}

// Draws n ζ-seeded random orders, evaluates their test curves under ξ, and
// scans for the first strictly-crossing pair. The scanned orders and curves
// are returned for persistence so the finding stays auditable.
inline CrossingReport crossing_curves_demo(OrderEvaluator& evaluator, const ALConfig& config,
                                           uint64_t xi, uint64_t zeta, size_t n_orders,
                                           std::vector<Order>* orders_out = nullptr,
                                           std::vector<PerformanceCurve>* curves_out = nullptr) {
  if (n_orders < 2) throw std::invalid_argument("crossing: need at least 2 orders");
  Rng rng(zeta);
  std::vector<Order> orders;
  std::vector<PerformanceCurve> curves;
  for (size_t i = 0; i < n_orders; ++i) {
    orders.push_back(random_order(evaluator.context().splits->pool, config, rng));
    curves.push_back(evaluator.evaluate(orders.back(), xi).curve_test);
  }
  const CrossingReport report = find_crossing(curves);
  if (orders_out) *orders_out = std::move(orders);
  if (curves_out) *curves_out = std::move(curves);
  return report;
}

}  // namespace oal
