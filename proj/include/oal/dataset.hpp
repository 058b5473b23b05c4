#pragma once

// Dataset construction (synthetic Gaussian mixtures, IDX and CSV ingestion)
// and the deterministic five-way split into pool / warm-start / model
// selection / validation / test sets.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oal/hash.hpp"
#include "oal/rng.hpp"

namespace oal {

struct Example {
  std::span<const double> features;
  uint32_t label;
};

// Features are stored row-major as 64-bit reals; training has to be
// bit-reproducible, so no narrowing anywhere on the data path.
struct Dataset {
  std::vector<double> features;  // size() * feature_dim, row-major
  std::vector<uint32_t> labels;
  uint32_t num_classes = 0;
  uint32_t feature_dim = 0;
  std::string provenance;

  size_t size() const { return labels.size(); }

  std::span<const double> row(size_t i) const {
    return {features.data() + i * feature_dim, feature_dim};
  }
  Example example(size_t i) const { return {row(i), labels[i]}; }

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("dataset: num_classes must be >= 2");
    if (feature_dim == 0) throw std::invalid_argument("dataset: feature_dim must be positive");
    if (features.size() != labels.size() * feature_dim)
      throw std::invalid_argument("dataset: feature array size mismatch");
    for (uint32_t label : labels)
      if (label >= num_classes) throw std::invalid_argument("dataset: label out of range");
  }

  std::string fingerprint() const {
    Fnv1a64 a(0xcbf29ce484222325ULL);
    Fnv1a64 b(0x6c62272e07bb0142ULL);
    for (Fnv1a64* h : {&a, &b}) {
      h->update_pod(num_classes);
      h->update_pod(feature_dim);
      for (double v : features) h->update_pod(v);
      for (uint32_t v : labels) h->update_pod(v);
    }
    return hex64(a.digest()) + hex64(b.digest());
  }
};

struct SyntheticSpec {
  uint32_t num_classes = 2;
  uint32_t feature_dim = 2;
  std::vector<double> class_priors;               // empty -> uniform
  std::vector<std::vector<double>> cluster_means; // empty -> canonical placement
  std::vector<double> cluster_scales;             // empty -> all 1.0
  size_t count = 0;
};

namespace detail {

// Canonical default means: class c sits at distance 4*(1 + c/d) along axis c%d.
inline std::vector<std::vector<double>> default_means(uint32_t num_classes, uint32_t dim) {
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim, 0.0));
  for (uint32_t c = 0; c < num_classes; ++c)
    means[c][c % dim] = 4.0 * (1.0 + static_cast<double>(c / dim));
  return means;
}

}  // namespace detail

// Seeded Gaussian mixture, one isotropic component per class. Identical
// (spec, seed) yields bit-identical datasets.
inline Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.num_classes < 2) throw std::invalid_argument("synthetic: need at least 2 classes");
  if (spec.feature_dim == 0) throw std::invalid_argument("synthetic: feature_dim must be positive");
  if (spec.count == 0) throw std::invalid_argument("synthetic: count must be >= 1");

  std::vector<double> priors = spec.class_priors;
  if (priors.empty()) {
    priors.assign(spec.num_classes, 1.0 / spec.num_classes);
  } else {
    if (priors.size() != spec.num_classes)
      throw std::invalid_argument("synthetic: class_priors size must equal num_classes");
    double sum = 0.0;
    for (double p : priors) {
      if (p < 0.0) throw std::invalid_argument("synthetic: negative class prior");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("synthetic: class_priors must sum to 1");
  }

  auto means = spec.cluster_means.empty()
                   ? detail::default_means(spec.num_classes, spec.feature_dim)
                   : spec.cluster_means;
  if (means.size() != spec.num_classes)
    throw std::invalid_argument("synthetic: cluster_means size must equal num_classes");
  for (const auto& m : means)
    if (m.size() != spec.feature_dim)
      throw std::invalid_argument("synthetic: cluster mean dimension mismatch");

  std::vector<double> scales = spec.cluster_scales;
  if (scales.empty()) scales.assign(spec.num_classes, 1.0);
  if (scales.size() != spec.num_classes)
    throw std::invalid_argument("synthetic: cluster_scales size must equal num_classes");

  std::vector<double> cumulative(spec.num_classes, 0.0);
  double acc = 0.0;
  for (uint32_t c = 0; c < spec.num_classes; ++c) {
    acc += priors[c];
    cumulative[c] = acc;
  }
  cumulative.back() = 1.0;  // guard against rounding in the inverse-CDF draw

  Dataset out;
  out.num_classes = spec.num_classes;
  out.feature_dim = spec.feature_dim;
  out.provenance = "synthetic(seed=" + std::to_string(seed) + ")";
  out.features.reserve(spec.count * spec.feature_dim);
  out.labels.reserve(spec.count);

  Rng rng(seed);
  for (size_t i = 0; i < spec.count; ++i) {
    const double u = rng.next_double();
    uint32_t cls = 0;
    while (cls + 1 < spec.num_classes && u >= cumulative[cls]) ++cls;
    out.labels.push_back(cls);
    for (uint32_t d = 0; d < spec.feature_dim; ++d)
      out.features.push_back(means[cls][d] + scales[cls] * rng.next_normal());
  }
  return out;
}

namespace detail {

inline uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4))
    throw std::runtime_error(std::string("idx: truncated file while reading ") + what);
  return (static_cast<uint32_t>(bytes[0]) << 24) | (static_cast<uint32_t>(bytes[1]) << 16) |
         (static_cast<uint32_t>(bytes[2]) << 8) | static_cast<uint32_t>(bytes[3]);
}

}  // namespace detail

// IDX ingestion (the MNIST family layout: big-endian headers, unsigned-byte
// payload). Pixels are scaled to [0,1]; images flatten row-major. When
// max_examples > 0 caps the load, a seeded shuffle picks which examples
// survive, keeping subsets deterministic.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        size_t max_examples = 0, uint64_t subsample_seed = 0) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("idx: cannot open " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("idx: cannot open " + labels_path);

  const uint32_t image_magic = detail::read_be_u32(images, "image magic");
  if (image_magic != 0x00000803)
    throw std::runtime_error("idx: bad image magic (expected 0x00000803)");
  const uint32_t label_magic = detail::read_be_u32(labels, "label magic");
  if (label_magic != 0x00000801)
    throw std::runtime_error("idx: bad label magic (expected 0x00000801)");

  const uint32_t image_count = detail::read_be_u32(images, "image count");
  const uint32_t rows = detail::read_be_u32(images, "row count");
  const uint32_t cols = detail::read_be_u32(images, "column count");
  const uint32_t label_count = detail::read_be_u32(labels, "label count");
  if (image_count != label_count)
    throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(image_count) +
                             " vs " + std::to_string(label_count) + ")");

  const size_t pixels = static_cast<size_t>(rows) * cols;
  std::vector<unsigned char> image_bytes(static_cast<size_t>(image_count) * pixels);
  if (!images.read(reinterpret_cast<char*>(image_bytes.data()),
                   static_cast<std::streamsize>(image_bytes.size())))
    throw std::runtime_error("idx: truncated image payload");
  std::vector<unsigned char> label_bytes(image_count);
  if (!labels.read(reinterpret_cast<char*>(label_bytes.data()),
                   static_cast<std::streamsize>(label_bytes.size())))
    throw std::runtime_error("idx: truncated label payload");

  std::vector<uint32_t> keep(image_count);
  std::iota(keep.begin(), keep.end(), 0u);
  if (max_examples > 0 && max_examples < keep.size()) {
    Rng rng(subsample_seed);
    rng.shuffle(keep);
    keep.resize(max_examples);
  }

  Dataset out;
  out.feature_dim = static_cast<uint32_t>(pixels);
  out.provenance = "idx(" + images_path + ")";
  out.features.reserve(keep.size() * pixels);
  out.labels.reserve(keep.size());
  uint32_t max_label = 0;
  for (uint32_t idx : keep) {
    const unsigned char* px = image_bytes.data() + static_cast<size_t>(idx) * pixels;
    for (size_t p = 0; p < pixels; ++p) out.features.push_back(px[p] / 255.0);
    out.labels.push_back(label_bytes[idx]);
    max_label = std::max(max_label, static_cast<uint32_t>(label_bytes[idx]));
  }
  out.num_classes = std::max(2u, max_label + 1);
  return out;
}

// CSV ingestion, header row `label,f0,f1,...`.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.empty() || header[0] != "label")
    throw std::runtime_error("csv: header must start with 'label'");
  for (size_t i = 1; i < header.size(); ++i)
    if (header[i] != "f" + std::to_string(i - 1))
      throw std::runtime_error("csv: expected header column f" + std::to_string(i - 1) +
                               ", got '" + header[i] + "'");
  if (header.size() < 2) throw std::runtime_error("csv: no feature columns");

  Dataset out;
  out.feature_dim = static_cast<uint32_t>(header.size() - 1);
  out.provenance = "csv(" + path + ")";
  uint32_t max_label = 0;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      size_t pos = 0;
      double value;
      try {
        value = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw std::runtime_error("csv: bad number at line " + std::to_string(line_no));
      }
      if (pos != cell.size())
        throw std::runtime_error("csv: bad number at line " + std::to_string(line_no));
      if (col == 0) {
        if (value < 0 || value != std::floor(value))
          throw std::runtime_error("csv: label must be a non-negative integer at line " +
                                   std::to_string(line_no));
        out.labels.push_back(static_cast<uint32_t>(value));
        max_label = std::max(max_label, out.labels.back());
      } else {
        out.features.push_back(value);
      }
      ++col;
    }
    if (col != header.size())
      throw std::runtime_error("csv: wrong column count at line " + std::to_string(line_no));
  }
  if (out.labels.empty()) throw std::runtime_error("csv: no data rows");
  out.num_classes = std::max(2u, max_label + 1);
  return out;
}

struct SplitSpec {
  size_t pool = 0;
  size_t warm = 0;
  size_t modelsel = 0;
  size_t val = 0;
  size_t test = 0;
  uint64_t shuffle_seed = 0;

  size_t total() const { return pool + warm + modelsel + val + test; }
};

struct Splits {
  std::vector<uint32_t> pool;
  std::vector<uint32_t> warm;
  std::vector<uint32_t> modelsel;
  std::vector<uint32_t> val;
  std::vector<uint32_t> test;
};

// One seeded shuffle of all indices, cut into consecutive segments in the
// fixed order pool, warm, modelsel, val, test. Not label-stratified; indices
// beyond the requested sizes are discarded. Each returned set is sorted.
inline Splits make_splits(const Dataset& dataset, const SplitSpec& spec) {
  if (spec.total() > dataset.size())
    throw std::invalid_argument("splits: requested sizes exceed dataset size");

  std::vector<uint32_t> indices(dataset.size());
  std::iota(indices.begin(), indices.end(), 0u);
  Rng rng(spec.shuffle_seed);
  rng.shuffle(indices);

  Splits out;
  size_t offset = 0;
  auto cut = [&](size_t count) {
    std::vector<uint32_t> seg(indices.begin() + static_cast<std::ptrdiff_t>(offset),
                              indices.begin() + static_cast<std::ptrdiff_t>(offset + count));
    offset += count;
    std::sort(seg.begin(), seg.end());
    return seg;
  };
  out.pool = cut(spec.pool);
  out.warm = cut(spec.warm);
  out.modelsel = cut(spec.modelsel);
  out.val = cut(spec.val);
  out.test = cut(spec.test);
  return out;
}

}  // namespace oal
