#pragma once

// Seeded trainers for two architecture families (multinomial logistic
// regression and ReLU MLPs with dropout), deterministic prediction, and
// metric evaluation. Every source of training stochasticity (initialization,
// minibatch shuffling, dropout masks) is drawn from a single generator seeded
// by xi, so identical inputs give bit-identical parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oal/dataset.hpp"
#include "oal/hash.hpp"
#include "oal/rng.hpp"

namespace oal {

enum class LearnerFamily { logistic, mlp };

inline std::string to_string(LearnerFamily family) {
  return family == LearnerFamily::logistic ? "logistic" : "mlp";
}

inline LearnerFamily learner_family_from_string(const std::string& name) {
  if (name == "logistic") return LearnerFamily::logistic;
  if (name == "mlp") return LearnerFamily::mlp;
  throw std::invalid_argument("unknown learner family '" + name + "'");
}

struct LearnerSpec {
  LearnerFamily family = LearnerFamily::logistic;
  std::vector<uint32_t> hidden_sizes;  // mlp only
  double dropout_rate = 0.0;           // mlp only

  void validate() const {
    if (family == LearnerFamily::logistic) {
      if (!hidden_sizes.empty())
        throw std::invalid_argument("learner: logistic family takes no hidden sizes");
      if (dropout_rate != 0.0)
        throw std::invalid_argument("learner: logistic family takes no dropout");
    } else {
      if (hidden_sizes.empty())
        throw std::invalid_argument("learner: mlp family needs at least one hidden layer");
      for (uint32_t h : hidden_sizes)
        if (h == 0) throw std::invalid_argument("learner: hidden sizes must be positive");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("learner: dropout_rate must lie in [0,1)");
  }

  std::string canonical() const {
    std::string s = "family=" + to_string(family) + ";hidden=";
    for (size_t i = 0; i < hidden_sizes.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(hidden_sizes[i]);
    }
    s += ";dropout=" + fmt_double(dropout_rate);
    return s;
  }
};

struct TrainConfig {
  uint32_t max_epochs = 100;
  uint32_t patience = 20;
  double learning_rate = 1e-3;
  uint32_t batch_size = 1;  // set equal to the acquisition batch size B
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be >= 1");
    if (patience > max_epochs)
      throw std::invalid_argument("train: patience must not exceed max_epochs");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be positive");
  }

  std::string canonical() const {
    return "epochs=" + std::to_string(max_epochs) + ";patience=" + std::to_string(patience) +
           ";lr=" + fmt_double(learning_rate) + ";bs=" + std::to_string(batch_size) +
           ";b1=" + fmt_double(beta1) + ";b2=" + fmt_double(beta2) +
           ";eps=" + fmt_double(epsilon);
  }
};

enum class Metric { accuracy, weighted_f1 };

inline std::string to_string(Metric metric) {
  return metric == Metric::accuracy ? "accuracy" : "weighted_f1";
}

inline Metric metric_from_string(const std::string& name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "weighted_f1") return Metric::weighted_f1;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

// Layer widths including input and output: [d, hidden..., C].
inline std::vector<uint32_t> layer_dims(const LearnerSpec& spec, uint32_t input_dim,
                                        uint32_t num_classes) {
  std::vector<uint32_t> dims;
  dims.push_back(input_dim);
  for (uint32_t h : spec.hidden_sizes) dims.push_back(h);
  dims.push_back(num_classes);
  return dims;
}

// Flat layout: per layer, W (in x out, row-major) followed by the bias.
inline size_t param_count(const LearnerSpec& spec, uint32_t input_dim, uint32_t num_classes) {
  const auto dims = layer_dims(spec, input_dim, num_classes);
  size_t count = 0;
  for (size_t l = 0; l + 1 < dims.size(); ++l)
    count += static_cast<size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  return count;
}

struct Model {
  LearnerSpec spec;
  uint32_t input_dim = 0;
  uint32_t num_classes = 0;
  std::vector<double> parameters;
  std::string train_fingerprint;
};

namespace detail {

// Batched forward pass. `x` is n rows of input_dim. Writes n softmax rows to
// probs (resized). When dropout_rng is set, inverted dropout (keep if
// u >= rate, scale kept units by 1/(1-rate)) follows each hidden ReLU; mask
// draws go hidden-layer by hidden-layer, row-major within a layer, so the
// draw count is independent of the parameters. Null dropout_rng means
// evaluation mode. When tape is set, per-layer pre-activations, activations,
// and dropout scales are captured for backpropagation.
struct ForwardTape {
  std::vector<std::vector<double>> preact;  // z per layer, n x dims[l+1]
  std::vector<std::vector<double>> act;     // post-ReLU, post-dropout input of each layer
  std::vector<std::vector<double>> scale;   // dropout scale per hidden layer (0 or 1/(1-rate))
};

inline void forward(const LearnerSpec& spec, uint32_t input_dim, uint32_t num_classes,
                    const std::vector<double>& params, const double* x, size_t n,
                    std::vector<double>& probs, Rng* dropout_rng, ForwardTape* tape) {
  const auto dims = layer_dims(spec, input_dim, num_classes);
  const size_t layers = dims.size() - 1;
  const bool use_dropout = dropout_rng != nullptr && spec.dropout_rate > 0.0;
  const double rate = spec.dropout_rate;

  std::vector<double> cur(x, x + n * input_dim);
  if (tape) {
    tape->preact.assign(layers, {});
    tape->act.assign(layers, {});
    tape->scale.assign(layers > 0 ? layers - 1 : 0, {});
  }

  size_t offset = 0;
  for (size_t l = 0; l < layers; ++l) {
    const uint32_t in = dims[l];
    const uint32_t out = dims[l + 1];
    const double* w = params.data() + offset;
    const double* b = params.data() + offset + static_cast<size_t>(in) * out;
    offset += static_cast<size_t>(in) * out + out;

    if (tape) tape->act[l] = cur;
    std::vector<double> next(n * out);
    for (size_t e = 0; e < n; ++e) {
      const double* a = cur.data() + e * in;
      double* z = next.data() + e * out;
      for (uint32_t j = 0; j < out; ++j) z[j] = b[j];
      for (uint32_t i = 0; i < in; ++i) {
        const double ai = a[i];
        if (ai == 0.0) continue;
        const double* wrow = w + static_cast<size_t>(i) * out;
        for (uint32_t j = 0; j < out; ++j) z[j] += ai * wrow[j];
      }
    }
    if (tape) tape->preact[l] = next;

    if (l + 1 < layers) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;
      if (use_dropout) {
        std::vector<double> scales(n * out);
        const double keep_scale = 1.0 / (1.0 - rate);
        for (size_t i = 0; i < scales.size(); ++i)
          scales[i] = dropout_rng->next_double() >= rate ? keep_scale : 0.0;
        for (size_t i = 0; i < next.size(); ++i) next[i] *= scales[i];
        if (tape) tape->scale[l] = std::move(scales);
      } else if (tape) {
        tape->scale[l].assign(n * out, 1.0);
      }
    }
    cur = std::move(next);
  }

  probs.assign(n * num_classes, 0.0);
  for (size_t e = 0; e < n; ++e) {
    const double* z = cur.data() + e * num_classes;
    double* p = probs.data() + e * num_classes;
    double zmax = z[0];
    for (uint32_t c = 1; c < num_classes; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (uint32_t c = 0; c < num_classes; ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (uint32_t c = 0; c < num_classes; ++c) p[c] /= sum;
  }
}

}  // namespace detail

// Mean cross-entropy over the minibatch plus its analytic gradient. Exposed
// (rather than folded into train) so gradient checks can call it directly;
// mask draws do not depend on the parameters, so re-seeding dropout_rng with
// the same state reproduces the same stochastic loss surface.
inline double loss_and_grad(const LearnerSpec& spec, uint32_t input_dim, uint32_t num_classes,
                            const std::vector<double>& params, const Dataset& dataset,
                            std::span<const uint32_t> batch, std::vector<double>& grad,
                            Rng* dropout_rng = nullptr) {
  const size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("loss: empty minibatch");
  const auto dims = layer_dims(spec, input_dim, num_classes);
  const size_t layers = dims.size() - 1;

  std::vector<double> x(n * input_dim);
  for (size_t e = 0; e < n; ++e) {
    const auto row = dataset.row(batch[e]);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(e * input_dim));
  }

  detail::ForwardTape tape;
  std::vector<double> probs;
  detail::forward(spec, input_dim, num_classes, params, x.data(), n, probs, dropout_rng, &tape);

  double loss = 0.0;
  std::vector<double> delta(n * num_classes);  // dL/dz of the output layer
  for (size_t e = 0; e < n; ++e) {
    const uint32_t y = dataset.labels[batch[e]];
    const double* z = tape.preact[layers - 1].data() + e * num_classes;
    double zmax = z[0];
    for (uint32_t c = 1; c < num_classes; ++c) zmax = std::max(zmax, z[c]);
    double lse = 0.0;
    for (uint32_t c = 0; c < num_classes; ++c) lse += std::exp(z[c] - zmax);
    loss += zmax + std::log(lse) - z[y];
    for (uint32_t c = 0; c < num_classes; ++c)
      delta[e * num_classes + c] = (probs[e * num_classes + c] - (c == y ? 1.0 : 0.0)) / n;
  }
  loss /= n;

  grad.assign(params.size(), 0.0);
  std::vector<size_t> offsets(layers);
  {
    size_t offset = 0;
    for (size_t l = 0; l < layers; ++l) {
      offsets[l] = offset;
      offset += static_cast<size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
    }
  }

  for (size_t l = layers; l-- > 0;) {
    const uint32_t in = dims[l];
    const uint32_t out = dims[l + 1];
    const double* w = params.data() + offsets[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + static_cast<size_t>(in) * out;
    const auto& a = tape.act[l];

    std::vector<double> prev_delta;
    if (l > 0) prev_delta.assign(n * in, 0.0);
    for (size_t e = 0; e < n; ++e) {
      const double* d = delta.data() + e * out;
      const double* ae = a.data() + e * in;
      for (uint32_t j = 0; j < out; ++j) gb[j] += d[j];
      for (uint32_t i = 0; i < in; ++i) {
        const double ai = ae[i];
        double* gw_row = gw + static_cast<size_t>(i) * out;
        if (ai != 0.0)
          for (uint32_t j = 0; j < out; ++j) gw_row[j] += ai * d[j];
        if (l > 0) {
          const double* wrow = w + static_cast<size_t>(i) * out;
          double acc = 0.0;
          for (uint32_t j = 0; j < out; ++j) acc += wrow[j] * d[j];
          // back through dropout scaling, then the ReLU gate
          acc *= tape.scale[l - 1][e * in + i];
          if (tape.preact[l - 1][e * in + i] <= 0.0) acc = 0.0;
          prev_delta[e * in + i] = acc;
        }
      }
    }
    delta = std::move(prev_delta);
  }
  return loss;
}

// Deterministic class probabilities (evaluation mode, no dropout).
inline std::vector<double> predict_probs(const Model& model, std::span<const double> x) {
  if (x.size() != model.input_dim)
    throw std::invalid_argument("predict: input dimension mismatch");
  std::vector<double> probs;
  detail::forward(model.spec, model.input_dim, model.num_classes, model.parameters, x.data(), 1,
                  probs, nullptr, nullptr);
  return probs;
}

// mc_samples forward passes under zeta-seeded dropout masks. With
// dropout_rate = 0 the masks are degenerate and every sample is identical.
inline std::vector<std::vector<double>> predict_proba(const Model& model, std::span<const double> x,
                                                      uint32_t mc_samples, uint64_t zeta) {
  if (mc_samples == 0) throw std::invalid_argument("predict: mc_samples must be >= 1");
  if (x.size() != model.input_dim)
    throw std::invalid_argument("predict: input dimension mismatch");
  std::vector<std::vector<double>> out;
  out.reserve(mc_samples);
  if (model.spec.dropout_rate == 0.0) {
    out.assign(mc_samples, predict_probs(model, x));
    return out;
  }
  Rng rng(zeta);
  for (uint32_t s = 0; s < mc_samples; ++s) {
    std::vector<double> probs;
    detail::forward(model.spec, model.input_dim, model.num_classes, model.parameters, x.data(), 1,
                    probs, &rng, nullptr);
    out.push_back(std::move(probs));
  }
  return out;
}

// Argmax with ties broken toward the lowest class index.
inline uint32_t argmax_class(std::span<const double> probs) {
  uint32_t best = 0;
  for (uint32_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

inline double metric_score(std::span<const uint32_t> y_true, std::span<const uint32_t> y_pred,
                           uint32_t num_classes, Metric metric) {
  if (y_true.empty() || y_true.size() != y_pred.size())
    throw std::invalid_argument("metric: label vectors empty or mismatched");
  const double n = static_cast<double>(y_true.size());
  if (metric == Metric::accuracy) {
    size_t hits = 0;
    for (size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
    return hits / n;
  }
  // weighted F1: support-weighted mean of per-class F1, F1 = 0 where the
  // class was neither predicted nor present correctly (P + R = 0)
  std::vector<size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0),
      support(num_classes, 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    ++support[y_true[i]];
    if (y_true[i] == y_pred[i]) {
      ++tp[y_true[i]];
    } else {
      ++fp[y_pred[i]];
      ++fn[y_true[i]];
    }
  }
  double score = 0.0;
  for (uint32_t c = 0; c < num_classes; ++c) {
    if (support[c] == 0) continue;
    const double precision = tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    score += (support[c] / n) * f1;
  }
  return score;
}

inline double evaluate(const Model& model, const Dataset& dataset,
                       std::span<const uint32_t> index_set, Metric metric) {
  if (index_set.empty()) throw std::invalid_argument("evaluate: empty index set");
  std::vector<double> x(index_set.size() * model.input_dim);
  std::vector<uint32_t> y_true(index_set.size());
  for (size_t i = 0; i < index_set.size(); ++i) {
    const auto row = dataset.row(index_set[i]);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(i * model.input_dim));
    y_true[i] = dataset.labels[index_set[i]];
  }
  std::vector<double> probs;
  detail::forward(model.spec, model.input_dim, model.num_classes, model.parameters, x.data(),
                  index_set.size(), probs, nullptr, nullptr);
  std::vector<uint32_t> y_pred(index_set.size());
  for (size_t i = 0; i < index_set.size(); ++i)
    y_pred[i] = argmax_class(
        {probs.data() + i * model.num_classes, static_cast<size_t>(model.num_classes)});
  return metric_score(y_true, y_pred, model.num_classes, metric);
}

// Uniform fan-in initialization, U(-1/sqrt(fan_in), +1/sqrt(fan_in)) for
// weights, zero biases (no draws for biases).
inline std::vector<double> init_params(const LearnerSpec& spec, uint32_t input_dim,
                                       uint32_t num_classes, Rng& rng) {
  const auto dims = layer_dims(spec, input_dim, num_classes);
  std::vector<double> params;
  params.reserve(param_count(spec, input_dim, num_classes));
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    const size_t weights = static_cast<size_t>(dims[l]) * dims[l + 1];
    for (size_t i = 0; i < weights; ++i)
      params.push_back((2.0 * rng.next_double() - 1.0) * bound);
    for (uint32_t j = 0; j < dims[l + 1]; ++j) params.push_back(0.0);
  }
  return params;
}

// Early-stopping bookkeeping, factored out so the stop arithmetic is testable
// without running a trainer. Improvement means strictly greater; a tie does
// not reset the counter.
struct EarlyStopper {
  uint32_t patience;
  double best_score = -std::numeric_limits<double>::infinity();
  uint32_t best_epoch = 0;
  uint32_t epochs_since_best = 0;

  explicit EarlyStopper(uint32_t patience_) : patience(patience_) {}

  // Feed the score of `epoch` (1-based); true means stop after this epoch.
  bool observe(uint32_t epoch, double score) {
    if (score > best_score) {
      best_score = score;
      best_epoch = epoch;
      epochs_since_best = 0;
      return false;
    }
    ++epochs_since_best;
    return epochs_since_best >= patience;
  }
};

struct TrainOutcome {
  Model model;
  std::vector<double> modelsel_trace;  // one score per completed epoch
  uint32_t best_epoch = 0;             // 1-based; 0 never occurs (epoch 1 always improves on -inf)
  uint32_t epochs_run = 0;
};

// The trainer eta. One generator seeded by xi drives, in order:
// initialization, then per epoch the labeled-set shuffle followed by the
// dropout masks of each minibatch. Model selection runs on modelsel_set with
// the experiment metric after every epoch; the best epoch's parameters are
// returned.
inline TrainOutcome train_detailed(const LearnerSpec& spec, const Dataset& dataset,
                                   std::span<const uint32_t> labeled_set,
                                   std::span<const uint32_t> modelsel_set,
                                   const TrainConfig& config, Metric metric, uint64_t xi) {
  spec.validate();
  config.validate();
  if (labeled_set.empty()) throw std::invalid_argument("train: empty labeled set");
  if (modelsel_set.empty()) throw std::invalid_argument("train: empty model-selection set");

  Model model;
  model.spec = spec;
  model.input_dim = dataset.feature_dim;
  model.num_classes = dataset.num_classes;

  Rng rng(xi);
  model.parameters = init_params(spec, model.input_dim, model.num_classes, rng);

  {
    std::string key = "spec{" + spec.canonical() + "};cfg{" + config.canonical() + "};metric=" +
                      to_string(metric) + ";xi=" + std::to_string(xi) + ";labeled=";
    std::vector<uint32_t> sorted_labeled(labeled_set.begin(), labeled_set.end());
    std::sort(sorted_labeled.begin(), sorted_labeled.end());
    for (uint32_t idx : sorted_labeled) key += std::to_string(idx) + ",";
    model.train_fingerprint = content_hash(key);
  }

  std::vector<double> m(model.parameters.size(), 0.0);
  std::vector<double> v(model.parameters.size(), 0.0);
  std::vector<double> grad;
  uint64_t step = 0;

  std::vector<uint32_t> order(labeled_set.begin(), labeled_set.end());
  EarlyStopper stopper(config.patience);
  std::vector<double> best_params = model.parameters;
  TrainOutcome outcome;

  for (uint32_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t len = std::min<size_t>(config.batch_size, order.size() - start);
      const double loss = loss_and_grad(spec, model.input_dim, model.num_classes,
                                        model.parameters, dataset,
                                        {order.data() + start, len}, grad,
                                        spec.dropout_rate > 0.0 ? &rng : nullptr);
      (void)loss;
      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (size_t i = 0; i < model.parameters.size(); ++i) {
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        model.parameters[i] -=
            config.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.epsilon);
      }
    }

    const double score = evaluate(model, dataset, modelsel_set, metric);
    outcome.modelsel_trace.push_back(score);
    outcome.epochs_run = epoch;
    const bool was_best = score > stopper.best_score;
    const bool stop = stopper.observe(epoch, score);
    if (was_best) best_params = model.parameters;
    if (stop) break;
  }

  model.parameters = std::move(best_params);
  outcome.best_epoch = stopper.best_epoch;
  outcome.model = std::move(model);
  return outcome;
}

inline Model train(const LearnerSpec& spec, const Dataset& dataset,
                   std::span<const uint32_t> labeled_set, std::span<const uint32_t> modelsel_set,
                   const TrainConfig& config, Metric metric, uint64_t xi) {
  return train_detailed(spec, dataset, labeled_set, modelsel_set, config, metric, xi).model;
}

// JSON layout: architecture header plus the parameter vector as hexadecimal
// bit patterns, so serialization round-trips bit-exactly.
inline nlohmann::json model_to_json(const Model& model) {
  nlohmann::json j;
  j["family"] = to_string(model.spec.family);
  j["hidden_sizes"] = model.spec.hidden_sizes;
  j["dropout_rate"] = model.spec.dropout_rate;
  j["input_dim"] = model.input_dim;
  j["num_classes"] = model.num_classes;
  j["train_fingerprint"] = model.train_fingerprint;
  std::vector<std::string> params_hex;
  params_hex.reserve(model.parameters.size());
  for (double p : model.parameters) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(p));
    std::memcpy(&bits, &p, sizeof(bits));
    params_hex.push_back(hex64(bits));
  }
  j["parameters_hex"] = std::move(params_hex);
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  Model model;
  model.spec.family = learner_family_from_string(j.at("family").get<std::string>());
  model.spec.hidden_sizes = j.at("hidden_sizes").get<std::vector<uint32_t>>();
  model.spec.dropout_rate = j.at("dropout_rate").get<double>();
  model.input_dim = j.at("input_dim").get<uint32_t>();
  model.num_classes = j.at("num_classes").get<uint32_t>();
  model.train_fingerprint = j.value("train_fingerprint", std::string());
  for (const auto& hex : j.at("parameters_hex")) {
    const uint64_t bits = std::stoull(hex.get<std::string>(), nullptr, 16);
    double p;
    std::memcpy(&p, &bits, sizeof(p));
    model.parameters.push_back(p);
  }
  const size_t expected = param_count(model.spec, model.input_dim, model.num_classes);
  if (model.parameters.size() != expected)
    throw std::runtime_error("model: parameter count does not match architecture");
  return model;
}

}  // namespace oal
