#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <vector>

#include "oal/dataset.hpp"

using namespace oal;

namespace {

// Minimal IDX pair on disk for the ingestion tests.
void write_be_u32(std::ofstream& out, uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                    uint32_t count, uint32_t rows, uint32_t cols, uint32_t label_count) {
  std::ofstream images(images_path, std::ios::binary);
  write_be_u32(images, 0x00000803);
  write_be_u32(images, count);
  write_be_u32(images, rows);
  write_be_u32(images, cols);
  for (uint32_t i = 0; i < count; ++i)
    for (uint32_t p = 0; p < rows * cols; ++p)
      images.put(static_cast<char>((i + p) % 256));

  std::ofstream labels(labels_path, std::ios::binary);
  write_be_u32(labels, 0x00000801);
  write_be_u32(labels, label_count);
  for (uint32_t i = 0; i < label_count; ++i) labels.put(static_cast<char>(i % 10));
}

}  // namespace

TEST_CASE("degenerate prior puts every example in class 0") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = 2;
  spec.class_priors = {1.0, 0.0};
  spec.count = 10;
  const Dataset ds = generate_synthetic(spec, 7);
  REQUIRE(ds.size() == 10);
  for (uint32_t label : ds.labels) CHECK(label == 0);
}

TEST_CASE("synthetic generation is byte-identical across runs") {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.feature_dim = 2;
  spec.count = 300;
  const Dataset a = generate_synthetic(spec, 1);
  const Dataset b = generate_synthetic(spec, 1);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.fingerprint() == b.fingerprint());
  const Dataset c = generate_synthetic(spec, 2);
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("skewed prior lands in the binomial interval") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = 2;
  spec.class_priors = {0.9, 0.1};
  spec.count = 1000;
  const Dataset ds = generate_synthetic(spec, 3);
  const auto ones = std::count(ds.labels.begin(), ds.labels.end(), 1u);
  // ~4.2 sigma around the binomial mean 100 (sigma ~ 9.49)
  CHECK(ones >= 60);
  CHECK(ones <= 140);
}

TEST_CASE("synthetic rejects malformed specs") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.feature_dim = 2;
  spec.count = 5;
  spec.class_priors = {0.7, 0.2};  // sums to 0.9
  CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
  spec.class_priors = {0.5, 0.5};
  spec.count = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
}

TEST_CASE("idx ingestion reads a valid pair") {
  write_idx_pair("probe_images.idx", "probe_labels.idx", 10, 28, 28, 10);
  const Dataset ds = load_idx("probe_images.idx", "probe_labels.idx");
  CHECK(ds.size() == 10);
  CHECK(ds.feature_dim == 784);
  // first image, pixel 0 has byte 0; image 1 pixel 254 has byte 255
  CHECK(ds.features[0] == 0.0);
  CHECK(ds.features[1 * 784 + 254] == 1.0);
  ds.validate();
  std::remove("probe_images.idx");
  std::remove("probe_labels.idx");
}

TEST_CASE("idx ingestion rejects count mismatch") {
  write_idx_pair("probe_images.idx", "probe_labels.idx", 10, 4, 4, 9);
  CHECK_THROWS_WITH(load_idx("probe_images.idx", "probe_labels.idx"),
                    Catch::Matchers::ContainsSubstring("count mismatch"));
  std::remove("probe_images.idx");
  std::remove("probe_labels.idx");
}

TEST_CASE("idx subsampling is deterministic and capped") {
  write_idx_pair("probe_images.idx", "probe_labels.idx", 50, 4, 4, 50);
  const Dataset a = load_idx("probe_images.idx", "probe_labels.idx", 20, 5);
  const Dataset b = load_idx("probe_images.idx", "probe_labels.idx", 20, 5);
  CHECK(a.size() == 20);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  std::remove("probe_images.idx");
  std::remove("probe_labels.idx");
}

TEST_CASE("csv ingestion parses the documented header layout") {
  {
    std::ofstream out("probe.csv");
    out << "label,f0,f1\n";
    out << "0,1.5,-2\n";
    out << "2,0,0.25\n";
  }
  const Dataset ds = load_csv("probe.csv");
  CHECK(ds.size() == 2);
  CHECK(ds.feature_dim == 2);
  CHECK(ds.num_classes == 3);
  CHECK(ds.features == std::vector<double>{1.5, -2.0, 0.0, 0.25});
  CHECK(ds.labels == std::vector<uint32_t>{0, 2});
  std::remove("probe.csv");
}

TEST_CASE("csv ingestion rejects bad headers and rows") {
  {
    std::ofstream out("probe.csv");
    out << "label,f0,f1\n0,1.0\n";
  }
  CHECK_THROWS_WITH(load_csv("probe.csv"), Catch::Matchers::ContainsSubstring("column count"));
  {
    std::ofstream out("probe.csv");
    out << "f0,label\n";
  }
  CHECK_THROWS_WITH(load_csv("probe.csv"), Catch::Matchers::ContainsSubstring("header"));
  std::remove("probe.csv");
}

TEST_CASE("large split sizes come out exact and disjoint") {
  SyntheticSpec sspec;
  sspec.num_classes = 10;
  sspec.feature_dim = 3;
  sspec.count = 10200;
  const Dataset ds = generate_synthetic(sspec, 11);
  const SplitSpec spec{2000, 50, 150, 4000, 4000, 99};
  const Splits splits = make_splits(ds, spec);
  CHECK(splits.pool.size() == 2000);
  CHECK(splits.warm.size() == 50);
  CHECK(splits.modelsel.size() == 150);
  CHECK(splits.val.size() == 4000);
  CHECK(splits.test.size() == 4000);

  std::set<uint32_t> all;
  size_t total = 0;
  for (const auto* seg : {&splits.pool, &splits.warm, &splits.modelsel, &splits.val, &splits.test}) {
    all.insert(seg->begin(), seg->end());
    total += seg->size();
    CHECK(std::is_sorted(seg->begin(), seg->end()));
  }
  CHECK(all.size() == total);  // pairwise disjoint
}

TEST_CASE("splits partition the dataset when sizes sum to it") {
  SyntheticSpec sspec;
  sspec.num_classes = 2;
  sspec.feature_dim = 2;
  sspec.count = 100;
  const Dataset ds = generate_synthetic(sspec, 2);
  const Splits splits = make_splits(ds, {40, 10, 10, 20, 20, 7});
  std::set<uint32_t> all;
  for (const auto* seg : {&splits.pool, &splits.warm, &splits.modelsel, &splits.val, &splits.test})
    all.insert(seg->begin(), seg->end());
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);
}

TEST_CASE("splits are seed-deterministic and seed-sensitive") {
  SyntheticSpec sspec;
  sspec.num_classes = 2;
  sspec.feature_dim = 2;
  sspec.count = 200;
  const Dataset ds = generate_synthetic(sspec, 2);
  const Splits a = make_splits(ds, {50, 20, 20, 50, 50, 1});
  const Splits b = make_splits(ds, {50, 20, 20, 50, 50, 1});
  CHECK(a.warm == b.warm);
  CHECK(a.pool == b.pool);
  int distinct = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Splits s = make_splits(ds, {50, 20, 20, 50, 50, seed});
    distinct += s.warm != a.warm;
  }
  CHECK(distinct >= 18);
}

TEST_CASE("splits reject oversized requests") {
  SyntheticSpec sspec;
  sspec.num_classes = 2;
  sspec.feature_dim = 2;
  sspec.count = 10;
  const Dataset ds = generate_synthetic(sspec, 2);
  CHECK_THROWS_AS(make_splits(ds, {5, 3, 2, 1, 0, 0}), std::invalid_argument);
}

TEST_CASE("warm sets are not stratified") {
  SyntheticSpec sspec;
  sspec.num_classes = 10;
  sspec.feature_dim = 2;
  sspec.count = 600;
  const Dataset ds = generate_synthetic(sspec, 4);
  int misses = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    const Splits splits = make_splits(ds, {0, 50, 0, 0, 0, seed});
    std::set<uint32_t> classes;
    for (uint32_t idx : splits.warm) classes.insert(ds.labels[idx]);
    misses += classes.size() < 10;
  }
  CHECK(misses >= 1);
}
