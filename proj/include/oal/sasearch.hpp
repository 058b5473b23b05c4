#pragma once

// Simulated-annealing search over orders with greedy refinement. The chain
// starts from a seeded shuffle of the full pool (first K*B entries), runs
// T_S annealed proposal steps accepting when u < exp[gamma*t*(q_p - q_prev)],
// then T_G greedy steps from the best-so-far accepting only strict
// improvements. All proposal randomness comes from search_seed, a stream
// independent of xi and zeta.
//
// Draw accounting per proposal (the replay contract):
//   1. when both moves are possible, one next_double for the move coin
//      (< 0.5 means swap); a degenerate pool or K = 1 skips the coin
//   2. swap: next_below(K), next_below(K-1) for two distinct batches, then
//      next_below(B) twice for the positions
//   3. replace: next_below(K*B) for the slot, next_below(#unused) into the
//      ascending list of unused pool elements
//   4. anneal steps always end with one next_double acceptance draw; greedy
//      steps draw nothing beyond the proposal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "oal/alcore.hpp"
#include "oal/hash.hpp"
#include "oal/rng.hpp"

namespace oal {

struct SAConfig {
  uint64_t anneal_steps = 25000;  // T_S
  uint64_t greedy_steps = 5000;   // T_G
  double gamma = 0.1;
  uint64_t search_seed = 0;

  void validate() const {
    if (gamma <= 0.0) throw std::invalid_argument("sa: gamma must be positive");
  }
};

enum class MoveKind { swap_move, replace_move };

inline std::string to_string(MoveKind kind) {
  return kind == MoveKind::swap_move ? "swap" : "replace";
}

struct Proposal {
  Order order;
  MoveKind kind;
};

// Fig-2-style transition kernel: equal-probability swap (two points from two
// different batches exchange slots) or replace (a used point swaps with an
// unused pool element). K = 1 forces replace; a pool with no unused elements
// forces swap.
inline Proposal propose(const Order& order, std::span<const uint32_t> pool, Rng& rng) {
  const uint32_t K = order.config.K;
  const uint32_t B = order.config.B;
  const bool can_swap = K >= 2;
  const bool can_replace = pool.size() > order.indices.size();
  if (!can_swap && !can_replace)
    throw std::invalid_argument("propose: no move possible (K=1 and the order uses the full pool)");

  MoveKind kind;
  if (can_swap && can_replace)
    kind = rng.next_double() < 0.5 ? MoveKind::swap_move : MoveKind::replace_move;
  else
    kind = can_swap ? MoveKind::swap_move : MoveKind::replace_move;

  Proposal proposal{order, kind};
  if (kind == MoveKind::swap_move) {
    const uint32_t b1 = static_cast<uint32_t>(rng.next_below(K));
    uint32_t b2 = static_cast<uint32_t>(rng.next_below(K - 1));
    if (b2 >= b1) ++b2;  // distinct batches, uniform over ordered pairs
    const uint32_t p1 = static_cast<uint32_t>(rng.next_below(B));
    const uint32_t p2 = static_cast<uint32_t>(rng.next_below(B));
    std::swap(proposal.order.indices[static_cast<size_t>(b1) * B + p1],
              proposal.order.indices[static_cast<size_t>(b2) * B + p2]);
  } else {
    const size_t slot = rng.next_below(order.indices.size());
    std::unordered_set<uint32_t> used(order.indices.begin(), order.indices.end());
    std::vector<uint32_t> unused;
    unused.reserve(pool.size() - order.indices.size());
    for (uint32_t idx : pool)
      if (!used.count(idx)) unused.push_back(idx);
    proposal.order.indices[slot] = unused[rng.next_below(unused.size())];
  }
  return proposal;
}

// exp[gamma*t*(q_p - q_prev)]; values >= 1 accept surely since the comparand
// is a Unif[0,1) draw. Worse proposals face a bar that tightens as t grows.
inline double acceptance_threshold(double q_p, double q_prev, uint64_t t, double gamma) {
  if (t < 1) throw std::invalid_argument("acceptance_threshold: t is 1-based");
  return std::exp(gamma * static_cast<double>(t) * (q_p - q_prev));
}

using EvalFn = std::function<double(const Order&)>;

struct SearchStep {
  uint64_t step = 0;  // 1-based across anneal + greedy
  std::string phase;  // "anneal" | "greedy"
  MoveKind move = MoveKind::swap_move;
  double q_proposal = 0.0;
  bool accepted = false;
  double q_current = 0.0;  // after the step
  double q_best = 0.0;     // running q*
};

inline nlohmann::json step_to_json(const SearchStep& s) {
  return {{"step", s.step},         {"phase", s.phase},
          {"move", to_string(s.move)}, {"q_p", s.q_proposal},
          {"accepted", s.accepted}, {"q_current", s.q_current},
          {"q_best", s.q_best}};
}

struct SearchTrace {
  double q0 = 0.0;  // quality of sigma(0)
  std::vector<SearchStep> steps;
};

struct SearchResult {
  Order best;
  double q_best = 0.0;
  SearchTrace trace;
  uint64_t evaluations = 0;  // sigma(0) plus one per proposal
};

// Everything needed to continue a chain exactly where it stopped. Quality
// values are checkpointed as bit patterns; a resumed chain must replay the
// non-resumed trajectory byte-for-byte.
struct SearchState {
  uint64_t step = 0;  // completed proposal steps
  Rng::State rng{};
  Order current;
  double q_current = 0.0;
  Order best;
  double q_best = 0.0;
  double q0 = 0.0;
};

namespace detail {

inline std::string double_hex(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  return hex64(bits);
}

inline double double_from_hex(const std::string& hex) {
  const uint64_t bits = std::stoull(hex, nullptr, 16);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace detail

inline nlohmann::json state_to_json(const SearchState& state) {
  nlohmann::json j;
  j["step"] = state.step;
  j["rng"] = {hex64(state.rng[0]), hex64(state.rng[1]), hex64(state.rng[2]), hex64(state.rng[3])};
  j["current"] = order_to_json(state.current);
  j["q_current_hex"] = detail::double_hex(state.q_current);
  j["best"] = order_to_json(state.best);
  j["q_best_hex"] = detail::double_hex(state.q_best);
  j["q0_hex"] = detail::double_hex(state.q0);
  j["q_best"] = state.q_best;  // informational duplicate
  return j;
}

inline SearchState state_from_json(const nlohmann::json& j) {
  SearchState state;
  state.step = j.at("step").get<uint64_t>();
  const auto rng = j.at("rng");
  for (size_t i = 0; i < 4; ++i)
    state.rng[i] = std::stoull(rng.at(i).get<std::string>(), nullptr, 16);
  state.current = order_from_json(j.at("current"));
  state.q_current = detail::double_from_hex(j.at("q_current_hex").get<std::string>());
  state.best = order_from_json(j.at("best"));
  state.q_best = detail::double_from_hex(j.at("q_best_hex").get<std::string>());
  state.q0 = detail::double_from_hex(j.at("q0_hex").get<std::string>());
  return state;
}

// One annealing-plus-greedy chain, advanced one proposal per step() call so
// callers can persist the trace incrementally and checkpoint at any point.
class SaSearcher {
 public:
  SaSearcher(SAConfig config, std::span<const uint32_t> pool, ALConfig al_config, EvalFn eval)
      : config_(config), pool_(pool.begin(), pool.end()), eval_(std::move(eval)) {
    config_.validate();
    Rng rng(config_.search_seed);
    state_.current = random_order(pool_, al_config, rng);
    state_.q_current = eval_(state_.current);
    ++evaluations_;
    state_.best = state_.current;
    state_.q_best = state_.q_current;
    state_.q0 = state_.q_current;
    state_.rng = rng.state();
  }

  // Resume construction: the caller restores the exact checkpointed state.
  SaSearcher(SAConfig config, std::span<const uint32_t> pool, SearchState state, EvalFn eval)
      : config_(config), pool_(pool.begin(), pool.end()), state_(std::move(state)),
        eval_(std::move(eval)) {
    config_.validate();
  }

  uint64_t total_steps() const { return config_.anneal_steps + config_.greedy_steps; }
  bool done() const { return state_.step >= total_steps(); }

  SearchStep step() {
    if (done()) throw std::logic_error("sa: chain already finished");
    Rng rng(state_.rng);
    const uint64_t t = state_.step + 1;
    const bool annealing = t <= config_.anneal_steps;

    SearchStep record;
    record.step = t;
    record.phase = annealing ? "anneal" : "greedy";

    // greedy hill-climbs from the best-so-far; the anneal walks its chain
    const Order& base = annealing ? state_.current : state_.best;
    Proposal proposal = propose(base, pool_, rng);
    record.move = proposal.kind;
    record.q_proposal = eval_(proposal.order);
    ++evaluations_;

    if (annealing) {
      const double threshold =
          acceptance_threshold(record.q_proposal, state_.q_current, t, config_.gamma);
      const double u = rng.next_double();
      if (u < threshold) {
        record.accepted = true;
        state_.current = std::move(proposal.order);
        state_.q_current = record.q_proposal;
        // best-order update lives inside the accept branch (an improvement
        // on q* always clears the threshold, so nothing is lost)
        if (record.q_proposal > state_.q_best) {
          state_.best = state_.current;
          state_.q_best = record.q_proposal;
        }
      }
    } else if (record.q_proposal > state_.q_best) {
      record.accepted = true;
      state_.best = std::move(proposal.order);
      state_.q_best = record.q_proposal;
      state_.current = state_.best;
      state_.q_current = state_.q_best;
    }

    record.q_current = state_.q_current;
    record.q_best = state_.q_best;
    state_.rng = rng.state();
    ++state_.step;
    return record;
  }

  const SearchState& state() const { return state_; }
  uint64_t evaluations() const { return evaluations_; }

 private:
  SAConfig config_;
  std::vector<uint32_t> pool_;
  SearchState state_;
  EvalFn eval_;
  uint64_t evaluations_ = 0;
};

inline SearchResult sa_search(const SAConfig& config, std::span<const uint32_t> pool,
                              const ALConfig& al_config, const EvalFn& eval) {
  SaSearcher searcher(config, pool, al_config, eval);
  SearchResult result;
  result.trace.q0 = searcher.state().q0;
  while (!searcher.done()) result.trace.steps.push_back(searcher.step());
  result.best = searcher.state().best;
  result.q_best = searcher.state().q_best;
  result.evaluations = searcher.evaluations();
  return result;
}

// Standalone hill climb with the same kernel; q_star never decreases.
inline void greedy_refine(Order& order, double& q_star, uint64_t steps,
                          std::span<const uint32_t> pool, const EvalFn& eval, Rng& rng) {
  for (uint64_t s = 0; s < steps; ++s) {
    Proposal proposal = propose(order, pool, rng);
    const double q_p = eval(proposal.order);
    if (q_p > q_star) {
      order = std::move(proposal.order);
      q_star = q_p;
    }
  }
}

// The production objective: xi-quality on the validation set under a cached
// evaluator. Exposed as a factory so searches and stub-scored tests share
// one searcher implementation.
inline EvalFn validation_quality_objective(OrderEvaluator& evaluator, uint64_t xi) {
  return [&evaluator, xi](const Order& order) { return evaluator.evaluate(order, xi).q_val; };
}

}  // namespace oal
