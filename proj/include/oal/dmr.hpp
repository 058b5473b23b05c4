#pragma once

// Distribution-matching regularization. A BinFn partitions the input space
// (k-means on a PCA projection, quantile cuts on one feature) or the label
// space (identity on class index). IDMR restricts each selection to the bin
// with the largest deficit of the current labeled distribution against a
// reference distribution; ODMR does the same in label space with add-1
// smoothed reference frequencies and sequentially revealed annotations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oal/dataset.hpp"
#include "oal/heuristics.hpp"
#include "oal/learner.hpp"
#include "oal/rng.hpp"

namespace oal {

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues and eigenvectors (as rows), sorted by eigenvalue
// descending; each vector's largest-magnitude component is made positive so
// the decomposition is sign-deterministic.
inline void jacobi_eigen_symmetric(std::vector<double> a, size_t n,
                                   std::vector<double>& eigenvalues,
                                   std::vector<std::vector<double>>& eigenvectors) {
  std::vector<double> v(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-24) break;
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (size_t i = 0; i < n; ++i) {
          const double aip = a[i * n + p];
          const double aiq = a[i * n + q];
          a[i * n + p] = c * aip - s * aiq;
          a[i * n + q] = s * aip + c * aiq;
        }
        for (size_t i = 0; i < n; ++i) {
          const double api = a[p * n + i];
          const double aqi = a[q * n + i];
          a[p * n + i] = c * api - s * aqi;
          a[q * n + i] = s * api + c * aqi;
        }
        for (size_t i = 0; i < n; ++i) {
          const double vip = v[i * n + p];
          const double viq = v[i * n + q];
          v[i * n + p] = c * vip - s * viq;
          v[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<double> diag(n);
  for (size_t i = 0; i < n; ++i) diag[i] = a[i * n + i];
  std::stable_sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return diag[x] > diag[y]; });

  eigenvalues.assign(n, 0.0);
  eigenvectors.assign(n, std::vector<double>(n, 0.0));
  for (size_t r = 0; r < n; ++r) {
    eigenvalues[r] = diag[idx[r]];
    for (size_t i = 0; i < n; ++i) eigenvectors[r][i] = v[i * n + idx[r]];
    size_t arg = 0;
    for (size_t i = 1; i < n; ++i)
      if (std::abs(eigenvectors[r][i]) > std::abs(eigenvectors[r][arg])) arg = i;
    if (eigenvectors[r][arg] < 0.0)
      for (double& x : eigenvectors[r]) x = -x;
  }
}

}  // namespace detail

enum class BinKind { kmeans_pca, feature_quantile, label };

inline std::string to_string(BinKind kind) {
  switch (kind) {
    case BinKind::kmeans_pca: return "kmeans_pca";
    case BinKind::feature_quantile: return "feature_quantile";
    case BinKind::label: return "label";
  }
  return "?";
}

inline BinKind bin_kind_from_string(const std::string& name) {
  if (name == "kmeans_pca") return BinKind::kmeans_pca;
  if (name == "feature_quantile") return BinKind::feature_quantile;
  if (name == "label") return BinKind::label;
  throw std::invalid_argument("unknown bin kind '" + name + "'");
}

// Total assignment: every point lands in exactly one bin (nearest centroid /
// cut interval), including points far outside the fitted region.
struct BinFn {
  BinKind kind = BinKind::label;
  uint32_t num_bins = 2;
  // kmeans_pca
  std::vector<double> center;                    // feature mean used before projection
  std::vector<std::vector<double>> projection;   // principal axes, rows of length d
  std::vector<std::vector<double>> centroids;    // num_bins rows in projected space
  // feature_quantile
  uint32_t feature = 0;
  std::vector<double> cuts;                      // num_bins - 1 ascending

  std::vector<double> project(std::span<const double> x) const {
    std::vector<double> y(projection.size(), 0.0);
    for (size_t p = 0; p < projection.size(); ++p)
      for (size_t i = 0; i < x.size(); ++i) y[p] += projection[p][i] * (x[i] - center[i]);
    return y;
  }

  uint32_t assign_input(std::span<const double> x) const {
    if (kind == BinKind::feature_quantile) {
      const double v = x[feature];
      uint32_t bin = 0;
      while (bin < cuts.size() && v >= cuts[bin]) ++bin;
      return bin;
    }
    if (kind != BinKind::kmeans_pca)
      throw std::logic_error("bin: label binning has no input-space assignment");
    const auto y = project(x);
    uint32_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (uint32_t c = 0; c < centroids.size(); ++c) {
      double dist = 0.0;
      for (size_t p = 0; p < y.size(); ++p) {
        const double diff = y[p] - centroids[c][p];
        dist += diff * diff;
      }
      if (dist < best_dist) {  // ties keep the lower centroid id
        best_dist = dist;
        best = c;
      }
    }
    return best;
  }

  uint32_t bin_of(const Dataset& dataset, uint32_t idx) const {
    if (kind == BinKind::label) return dataset.labels[idx];
    return assign_input(dataset.row(idx));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["num_bins"] = num_bins;
    j["center"] = center;
    j["projection"] = projection;
    j["centroids"] = centroids;
    j["feature"] = feature;
    j["cuts"] = cuts;
    return j;
  }

  static BinFn from_json(const nlohmann::json& j) {
    BinFn fn;
    fn.kind = bin_kind_from_string(j.at("kind").get<std::string>());
    fn.num_bins = j.at("num_bins").get<uint32_t>();
    fn.center = j.at("center").get<std::vector<double>>();
    fn.projection = j.at("projection").get<std::vector<std::vector<double>>>();
    fn.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    fn.feature = j.at("feature").get<uint32_t>();
    fn.cuts = j.at("cuts").get<std::vector<double>>();
    return fn;
  }
};

// Fits the binning function on the accessible inputs (warm + pool +
// model-selection features; that union never changes during a run, so the
// fit happens once). num_bins = 1 is a degenerate pass-through used by
// neutrality tests. pca_dims caps the projection rank for kmeans_pca.
inline BinFn fit_bins(const Dataset& dataset, std::span<const uint32_t> indices, BinKind kind,
                      uint32_t num_bins, uint64_t seed, uint32_t pca_dims = 2,
                      uint32_t feature = 0) {
  if (num_bins == 0) throw std::invalid_argument("bins: num_bins must be >= 1");
  if (feature >= dataset.feature_dim) throw std::invalid_argument("bins: feature out of range");
  BinFn fn;
  fn.kind = kind;
  fn.num_bins = num_bins;
  fn.feature = feature;

  if (kind == BinKind::label) {
    fn.num_bins = dataset.num_classes;
    return fn;
  }
  if (indices.size() < num_bins)
    throw std::invalid_argument("bins: fewer points than bins");

  if (kind == BinKind::feature_quantile) {
    std::vector<double> values;
    values.reserve(indices.size());
    for (uint32_t idx : indices) values.push_back(dataset.row(idx)[fn.feature]);
    std::sort(values.begin(), values.end());
    for (uint32_t b = 1; b < num_bins; ++b)
      fn.cuts.push_back(values[values.size() * b / num_bins]);
    return fn;
  }

  // kmeans_pca: center, project onto the top principal axes, then seeded
  // k-means++ with Lloyd refinement (<= 100 iterations, empty clusters keep
  // their previous centroid, assignment ties go to the lower centroid id)
  const size_t n = indices.size();
  const uint32_t d = dataset.feature_dim;
  fn.center.assign(d, 0.0);
  for (uint32_t idx : indices)
    for (uint32_t i = 0; i < d; ++i) fn.center[i] += dataset.row(idx)[i];
  for (double& c : fn.center) c /= static_cast<double>(n);

  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (uint32_t idx : indices) {
    const auto row = dataset.row(idx);
    for (uint32_t i = 0; i < d; ++i)
      for (uint32_t j = i; j < d; ++j)
        cov[static_cast<size_t>(i) * d + j] += (row[i] - fn.center[i]) * (row[j] - fn.center[j]);
  }
  for (uint32_t i = 0; i < d; ++i)
    for (uint32_t j = i; j < d; ++j) {
      cov[static_cast<size_t>(i) * d + j] /= static_cast<double>(n);
      cov[static_cast<size_t>(j) * d + i] = cov[static_cast<size_t>(i) * d + j];
    }

  std::vector<double> eigenvalues;
  std::vector<std::vector<double>> eigenvectors;
  detail::jacobi_eigen_symmetric(std::move(cov), d, eigenvalues, eigenvectors);
  const uint32_t p = std::min(pca_dims, d);
  fn.projection.assign(eigenvectors.begin(), eigenvectors.begin() + p);

  std::vector<std::vector<double>> points;
  points.reserve(n);
  for (uint32_t idx : indices) points.push_back(fn.project(dataset.row(idx)));

  auto sqdist = [p](const std::vector<double>& a, const std::vector<double>& b) {
    double dist = 0.0;
    for (uint32_t i = 0; i < p; ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
    return dist;
  };

  Rng rng(seed);
  fn.centroids.clear();
  fn.centroids.push_back(points[rng.next_below(n)]);
  std::vector<double> nearest(n);
  while (fn.centroids.size() < num_bins) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : fn.centroids) best = std::min(best, sqdist(points[i], c));
      nearest[i] = best;
      total += best;
    }
    size_t chosen;
    if (total > 0.0) {
      const double target = rng.next_double() * total;  // D^2 sampling
      double acc = 0.0;
      chosen = n - 1;
      for (size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (target < acc) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = rng.next_below(n);  // all points coincide with a centroid
    }
    fn.centroids.push_back(points[chosen]);
  }

  std::vector<uint32_t> assignment(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      uint32_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (uint32_t c = 0; c < fn.centroids.size(); ++c) {
        const double dist = sqdist(points[i], fn.centroids[c]);
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    for (uint32_t c = 0; c < fn.centroids.size(); ++c) {
      std::vector<double> sum(p, 0.0);
      size_t count = 0;
      for (size_t i = 0; i < n; ++i) {
        if (assignment[i] != c) continue;
        for (uint32_t q = 0; q < p; ++q) sum[q] += points[i][q];
        ++count;
      }
      if (count == 0) continue;
      for (uint32_t q = 0; q < p; ++q) fn.centroids[c][q] = sum[q] / static_cast<double>(count);
    }
  }
  return fn;
}

struct BinDistribution {
  std::vector<uint64_t> counts;
  std::vector<double> freqs;  // sums to 1; all-zero counts normalize to uniform
};

inline BinDistribution distribution_from_counts(std::vector<uint64_t> counts) {
  BinDistribution dist;
  uint64_t total = 0;
  for (uint64_t c : counts) total += c;
  dist.freqs.assign(counts.size(), 1.0 / static_cast<double>(counts.size()));
  if (total > 0)
    for (size_t b = 0; b < counts.size(); ++b)
      dist.freqs[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
  dist.counts = std::move(counts);
  return dist;
}

inline BinDistribution bin_distribution(const Dataset& dataset,
                                        std::span<const uint32_t> index_set, const BinFn& fn) {
  std::vector<uint64_t> counts(fn.num_bins, 0);
  for (uint32_t idx : index_set) ++counts[fn.bin_of(dataset, idx)];
  return distribution_from_counts(std::move(counts));
}

// Add-1 smoothed label frequencies: (count_l + 1) / (N + C).
inline BinDistribution smoothed_label_distribution(const Dataset& dataset,
                                                   std::span<const uint32_t> index_set) {
  BinDistribution dist;
  dist.counts.assign(dataset.num_classes, 0);
  for (uint32_t idx : index_set) ++dist.counts[dataset.labels[idx]];
  const double denom = static_cast<double>(index_set.size() + dataset.num_classes);
  dist.freqs.resize(dataset.num_classes);
  for (uint32_t c = 0; c < dataset.num_classes; ++c)
    dist.freqs[c] = static_cast<double>(dist.counts[c] + 1) / denom;
  return dist;
}

// Bins ordered by deficit (d_cur - d_ref ascending, ties toward the lower
// id); the selector walks this ranking until it finds a non-empty slice.
inline std::vector<uint32_t> deficit_ranking(std::span<const double> cur_freqs,
                                             std::span<const double> ref_freqs) {
  std::vector<uint32_t> bins(cur_freqs.size());
  for (uint32_t b = 0; b < bins.size(); ++b) bins[b] = b;
  std::stable_sort(bins.begin(), bins.end(), [&](uint32_t x, uint32_t y) {
    return cur_freqs[x] - ref_freqs[x] < cur_freqs[y] - ref_freqs[y];
  });
  return bins;
}

// One IDMR selection (Alg.-2 step): restrict the pool to the
// maximum-deficit bin of the current labeled-input distribution (counts
// include within-batch pending picks) and let the base strategy pick there.
inline uint32_t idmr_acquire(const AcquisitionStrategy& base, const Model* model,
                             const Dataset& dataset, std::span<const uint32_t> remaining,
                             uint32_t iteration, Rng& zeta_rng, const BinFn& bins,
                             const BinDistribution& d_ref,
                             std::span<const uint64_t> cur_counts) {
  if (remaining.empty()) throw std::invalid_argument("idmr: empty pool");
  const auto d_cur = distribution_from_counts({cur_counts.begin(), cur_counts.end()});
  for (uint32_t b : deficit_ranking(d_cur.freqs, d_ref.freqs)) {
    std::vector<uint32_t> slice;
    for (uint32_t idx : remaining)
      if (bins.bin_of(dataset, idx) == b) slice.push_back(idx);
    if (slice.empty()) continue;
    return pick_one(base, model, dataset, slice, iteration, zeta_rng);
  }
  throw std::logic_error("idmr: no non-empty bin");  // unreachable: pool is non-empty
}

enum class OdmrReference { accessible, test };
enum class OdmrLabels { predicted, groundtruth };

struct OdmrVariant {
  OdmrReference reference = OdmrReference::accessible;
  OdmrLabels labels = OdmrLabels::predicted;
};

inline std::string to_string(const OdmrVariant& v) {
  return std::string(v.reference == OdmrReference::accessible ? "accessible" : "test") + "+" +
         (v.labels == OdmrLabels::predicted ? "predicted" : "groundtruth");
}

// One ODMR selection (Alg.-3 step): the deficit is computed in label space
// from true labels revealed so far (unsmoothed), the pool is sliced by
// predicted or ground-truth label per variant.
inline uint32_t odmr_acquire(const AcquisitionStrategy& base, const Model* model,
                             const Dataset& dataset, std::span<const uint32_t> remaining,
                             uint32_t iteration, Rng& zeta_rng, const OdmrVariant& variant,
                             const BinDistribution& d_ref,
                             std::span<const uint64_t> cur_label_counts) {
  if (remaining.empty()) throw std::invalid_argument("odmr: empty pool");
  if (variant.labels == OdmrLabels::predicted && model == nullptr)
    throw std::invalid_argument("odmr: predicted-label slicing needs a model");
  const auto d_cur = distribution_from_counts({cur_label_counts.begin(), cur_label_counts.end()});
  for (uint32_t l : deficit_ranking(d_cur.freqs, d_ref.freqs)) {
    std::vector<uint32_t> slice;
    for (uint32_t idx : remaining) {
      const uint32_t label = variant.labels == OdmrLabels::groundtruth
                                 ? dataset.labels[idx]
                                 : argmax_class(predict_probs(*model, dataset.row(idx)));
      if (label == l) slice.push_back(idx);
    }
    if (slice.empty()) continue;
    return pick_one(base, model, dataset, slice, iteration, zeta_rng);
  }
  throw std::logic_error("odmr: no non-empty label slice");
}

// Reference input distribution for IDMR: the accessible inputs, which stay
// fixed over a run (labeling moves points between labeled and pool but the
// union is invariant).
inline BinDistribution idmr_reference(const Dataset& dataset, const Splits& splits,
                                      const BinFn& bins) {
  std::vector<uint32_t> accessible;
  accessible.insert(accessible.end(), splits.warm.begin(), splits.warm.end());
  accessible.insert(accessible.end(), splits.pool.begin(), splits.pool.end());
  accessible.insert(accessible.end(), splits.modelsel.begin(), splits.modelsel.end());
  return bin_distribution(dataset, accessible, bins);
}

inline BinDistribution odmr_reference(const Dataset& dataset, const Splits& splits,
                                      const OdmrVariant& variant) {
  if (variant.reference == OdmrReference::test)
    return smoothed_label_distribution(dataset, splits.test);
  std::vector<uint32_t> accessible;
  accessible.insert(accessible.end(), splits.warm.begin(), splits.warm.end());
  accessible.insert(accessible.end(), splits.modelsel.begin(), splits.modelsel.end());
  return smoothed_label_distribution(dataset, accessible);
}

// Full IDMR episode: the AL loop with per-point bin-restricted selection.
inline Order run_idmr(const AcquisitionStrategy& base, const AcquisitionTask& task,
                      const BinFn& bins, const BinDistribution& d_ref) {
  base.validate();
  Rng zeta_rng(base.zeta);
  std::vector<uint64_t> counts(bins.num_bins, 0);
  for (uint32_t idx : task.splits->warm) ++counts[bins.bin_of(*task.dataset, idx)];

  return run_acquisition_loop(
      task, base.needs_model(),
      [&](const Model* model, const std::vector<uint32_t>&, std::vector<uint32_t>& remaining,
          uint32_t k) {
        std::vector<uint32_t> batch;
        std::vector<uint32_t> candidates = remaining;
        for (uint32_t j = 0; j < task.config.B; ++j) {
          const uint32_t pick = idmr_acquire(base, model, *task.dataset, candidates, k, zeta_rng,
                                             bins, d_ref, counts);
          ++counts[bins.bin_of(*task.dataset, pick)];
          batch.push_back(pick);
          candidates.erase(std::find(candidates.begin(), candidates.end(), pick));
        }
        return batch;
      });
}

// Full ODMR episode. The true label of each pick joins the deficit counts
// immediately (annotations are sequential, not batched).
inline Order run_odmr(const AcquisitionStrategy& base, const AcquisitionTask& task,
                      const OdmrVariant& variant, const BinDistribution& d_ref) {
  base.validate();
  Rng zeta_rng(base.zeta);
  std::vector<uint64_t> counts(task.dataset->num_classes, 0);
  for (uint32_t idx : task.splits->warm) ++counts[task.dataset->labels[idx]];

  const bool needs_model = base.needs_model() || variant.labels == OdmrLabels::predicted;
  return run_acquisition_loop(
      task, needs_model,
      [&](const Model* model, const std::vector<uint32_t>&, std::vector<uint32_t>& remaining,
          uint32_t k) {
        std::vector<uint32_t> batch;
        std::vector<uint32_t> candidates = remaining;
        for (uint32_t j = 0; j < task.config.B; ++j) {
          const uint32_t pick = odmr_acquire(base, model, *task.dataset, candidates, k, zeta_rng,
                                             variant, d_ref, counts);
          ++counts[task.dataset->labels[pick]];  // annotator reveals the truth
          batch.push_back(pick);
          candidates.erase(std::find(candidates.begin(), candidates.end(), pick));
        }
        return batch;
      });
}

}  // namespace oal
