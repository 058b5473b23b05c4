#pragma once

// Report emission: matrices, curves, traces and overlap tables as RFC-4180
// CSV, quality records as JSON lines, and a small SVG 1.1 emitter for the
// summary graphics. Every emitter is a pure function of its inputs and all
// reals go through fmt_double, so identical inputs give identical bytes.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oal/analysis.hpp"
#include "oal/hash.hpp"

namespace oal {

inline std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\r\n") == std::string::npos) return raw;
  std::string quoted = "\"";
  for (char c : raw) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

// Header row carries the column labels after an empty corner cell; each data
// row starts with its row label. With a baseline present, it lands in an
// extra trailing column.
inline std::string matrix_to_csv(const QualityMatrix& m, bool gaps = false) {
  std::string out;
  for (const auto& label : m.col_labels) {
    out += ',';
    out += csv_field(label);
  }
  if (!m.baseline.empty()) out += ",random_baseline";
  out += '\n';
  for (size_t r = 0; r < m.rows(); ++r) {
    out += csv_field(m.row_labels[r]);
    for (size_t c = 0; c < m.cols(); ++c) {
      out += ',';
      out += fmt_double(gaps ? m.gap_at(r, c) : m.at(r, c));
    }
    if (!m.baseline.empty()) {
      out += ',';
      out += fmt_double(m.baseline[r]);
    }
    out += '\n';
  }
  return out;
}

// One column per curve; the k=0 row appears when every curve carries a
// warm-start score.
inline std::string curves_to_csv(std::span<const std::string> names,
                                 std::span<const PerformanceCurve> curves) {
  if (names.size() != curves.size())
    throw std::invalid_argument("curves_to_csv: one name per curve");
  std::string out = "k";
  for (const auto& name : names) {
    out += ',';
    out += csv_field(name);
  }
  out += '\n';
  bool all_tau0 = !curves.empty();
  size_t K = 0;
  for (const auto& curve : curves) {
    all_tau0 = all_tau0 && curve.tau0.has_value();
    K = std::max(K, curve.values.size());
  }
  if (all_tau0) {
    out += '0';
    for (const auto& curve : curves) {
      out += ',';
      out += fmt_double(*curve.tau0);
    }
    out += '\n';
  }
  for (size_t k = 0; k < K; ++k) {
    out += std::to_string(k + 1);
    for (const auto& curve : curves) {
      out += ',';
      if (k < curve.values.size()) out += fmt_double(curve.values[k]);
    }
    out += '\n';
  }
  return out;
}

// Cumulative counts per k, then the test reference counts as a final row.
inline std::string trace_to_csv(const DistributionTrace& trace) {
  const size_t bins = trace.reference_counts.size();
  std::string out = "k";
  for (size_t b = 0; b < bins; ++b) out += ",bin_" + std::to_string(b);
  out += '\n';
  for (size_t k = 0; k < trace.counts_by_k.size(); ++k) {
    out += std::to_string(k);
    for (uint64_t c : trace.counts_by_k[k]) {
      out += ',';
      out += std::to_string(c);
    }
    out += '\n';
  }
  out += "test_reference";
  for (uint64_t c : trace.reference_counts) {
    out += ',';
    out += std::to_string(c);
  }
  out += '\n';
  return out;
}

inline std::string overlap_to_csv(const OverlapReport& report) {
  std::string out = "index,rank_a,rank_b\n";
  for (const RankPair& pair : report.pairs)
    out += std::to_string(pair.index) + ',' + std::to_string(pair.rank_a) + ',' +
           std::to_string(pair.rank_b) + '\n';
  return out;
}

inline std::string records_to_jsonl(std::span<const QualityRecord> records) {
  std::string out;
  for (const QualityRecord& record : records) {
    out += record_to_json(record).dump();
    out += '\n';
  }
  return out;
}

namespace svg {

inline std::string escape(const std::string& raw) {
  std::string out;
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string header(int width, int height) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
         std::to_string(width) + " " + std::to_string(height) + "\">\n";
}

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"#1b6ca8", "#c0392b", "#1e8449", "#8e44ad",
                                               "#b7950b", "#2c3e50", "#ca6f1e", "#117a65"};
  return colors;
}

// Fixed-point pixel coordinates (fmt_double on rounded values) keep the
// output byte-stable across platforms.
inline std::string px(double v) { return fmt_double(std::round(v * 100.0) / 100.0); }

// Overlaid performance curves on a [0,1] y-axis with a simple legend.
inline std::string curves(std::span<const std::string> names,
                          std::span<const PerformanceCurve> curves_in, int width = 640,
                          int height = 400) {
  const double left = 50.0, right = width - 20.0, top = 20.0, bottom = height - 40.0;
  std::string out = header(width, height);
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" fill=\"white\"/>\n";
  out += "<line x1=\"" + px(left) + "\" y1=\"" + px(bottom) + "\" x2=\"" + px(right) + "\" y2=\"" +
         px(bottom) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + px(left) + "\" y1=\"" + px(top) + "\" x2=\"" + px(left) + "\" y2=\"" +
         px(bottom) + "\" stroke=\"black\"/>\n";

  size_t K = 1;
  for (const auto& curve : curves_in) K = std::max(K, curve.values.size());
  for (size_t i = 0; i < curves_in.size(); ++i) {
    const auto& values = curves_in[i].values;
    const std::string& color = palette()[i % palette().size()];
    std::string points;
    for (size_t k = 0; k < values.size(); ++k) {
      const double x = left + (right - left) * (K == 1 ? 1.0 : static_cast<double>(k) /
                                                                   static_cast<double>(K - 1));
      const double y = bottom - (bottom - top) * values[k];
      points += px(x) + "," + px(y) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" +
           points + "\"/>\n";
    out += "<text x=\"" + px(left + 8) + "\" y=\"" + px(top + 16 + 16 * static_cast<double>(i)) +
           "\" fill=\"" + color + "\" font-size=\"12\">" + escape(names[i]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// Heat grid over the matrix cells; shading interpolates white (row minimum)
// to the palette blue (row-independent global maximum).
inline std::string matrix_heat(const QualityMatrix& m, int cell = 56) {
  const int label_w = 120;
  const int width = label_w + cell * static_cast<int>(m.cols()) + 20;
  const int height = 40 + cell * static_cast<int>(m.rows()) + 20;
  double lo = 1.0, hi = 0.0;
  for (double v : m.cells) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1.0;

  std::string out = header(width, height);
  for (size_t c = 0; c < m.cols(); ++c)
    out += "<text x=\"" + px(label_w + cell * (static_cast<double>(c) + 0.5)) +
           "\" y=\"30\" text-anchor=\"middle\" font-size=\"11\">" + escape(m.col_labels[c]) +
           "</text>\n";
  for (size_t r = 0; r < m.rows(); ++r) {
    out += "<text x=\"" + px(label_w - 8) + "\" y=\"" +
           px(40 + cell * (static_cast<double>(r) + 0.6)) +
           "\" text-anchor=\"end\" font-size=\"11\">" + escape(m.row_labels[r]) + "</text>\n";
    for (size_t c = 0; c < m.cols(); ++c) {
      const double t = (m.at(r, c) - lo) / (hi - lo);
      const int red = static_cast<int>(std::lround(255.0 - t * (255.0 - 27.0)));
      const int green = static_cast<int>(std::lround(255.0 - t * (255.0 - 108.0)));
      const int blue = static_cast<int>(std::lround(255.0 - t * (255.0 - 168.0)));
      out += "<rect x=\"" + std::to_string(label_w + cell * static_cast<int>(c)) + "\" y=\"" +
             std::to_string(40 + cell * static_cast<int>(r)) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" +
             std::to_string(red) + "," + std::to_string(green) + "," + std::to_string(blue) +
             ")\" stroke=\"#777\"/>\n";
      out += "<text x=\"" + px(label_w + cell * (static_cast<double>(c) + 0.5)) + "\" y=\"" +
             px(40 + cell * (static_cast<double>(r) + 0.55)) +
             "\" text-anchor=\"middle\" font-size=\"11\">" + fmt_double(std::round(m.at(r, c) * 1000.0) / 1000.0) +
             "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

// Stacked per-k composition bars with the test reference as the final bar.
inline std::string distribution_bars(const DistributionTrace& trace, int width = 640,
                                     int height = 360) {
  const double left = 40.0, top = 20.0, bottom = height - 40.0;
  const size_t bars = trace.counts_by_k.size() + 1;
  const double slot = (width - left - 20.0) / static_cast<double>(bars);
  std::string out = header(width, height);

  auto stack = [&](double x, std::span<const double> freqs) {
    double y = bottom;
    for (size_t b = 0; b < freqs.size(); ++b) {
      const double h = (bottom - top) * freqs[b];
      y -= h;
      out += "<rect x=\"" + px(x) + "\" y=\"" + px(y) + "\" width=\"" + px(slot * 0.7) +
             "\" height=\"" + px(h) + "\" fill=\"" + palette()[b % palette().size()] +
             "\" stroke=\"white\"/>\n";
    }
  };

  for (size_t k = 0; k < trace.counts_by_k.size(); ++k) {
    const auto& counts = trace.counts_by_k[k];
    uint64_t total = 0;
    for (uint64_t c : counts) total += c;
    std::vector<double> freqs(counts.size(), 0.0);
    if (total > 0)
      for (size_t b = 0; b < counts.size(); ++b)
        freqs[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
    const double x = left + slot * static_cast<double>(k);
    stack(x, freqs);
    out += "<text x=\"" + px(x + slot * 0.35) + "\" y=\"" + px(bottom + 16) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + std::to_string(k) + "</text>\n";
  }
  const double x_ref = left + slot * static_cast<double>(trace.counts_by_k.size());
  stack(x_ref, trace.reference_freqs);
  out += "<text x=\"" + px(x_ref + slot * 0.35) + "\" y=\"" + px(bottom + 16) +
         "\" text-anchor=\"middle\" font-size=\"11\">D^T</text>\n";
  out += "</svg>\n";
  return out;
}

}  // namespace svg

}  // namespace oal
