#ifndef GF_MATCHING_HPP
#define GF_MATCHING_HPP

#include <optional>

#include "gf/ops.hpp"

namespace gf {

struct MemoryBank;

// Normalized temporal extent: center and width, both in [0, 1].
struct Span {
  Real center = 0;
  Real width = 0;

  Real lo() const { return std::max(0.0, center - width / 2); }
  Real hi() const { return std::min(1.0, center + width / 2); }
};

inline constexpr Real kIouEps = 1e-8;

// |intersection| / (|union| + eps) of the clamped intervals.
Real temporal_iou(const Span& a, const Span& b);

// Ground-truth event; a missing class label is the no-event padding symbol.
struct GroundTruthEvent {
  std::optional<std::size_t> label;
  Span span;

  bool is_event() const { return label.has_value(); }
  static GroundTruthEvent no_event() { return {}; }
  static GroundTruthEvent of(std::size_t cls, Real center, Real width) {
    return {cls, {center, width}};
  }
};

// Pads (or rejects) a ground-truth list to exactly n entries.
std::vector<GroundTruthEvent> pad_events(std::vector<GroundTruthEvent> events,
                                         std::size_t n);

struct Assignment {
  // perm[i] = prediction index matched to ground-truth slot i; a bijection.
  std::vector<std::size_t> perm;
  Real cost = 0;
};

// Entry (i, j) of the bipartite matching cost between ground-truth slot i and
// predicted memory j: -1[event] * l_cls * p_j[c_i] + 1[event] * l_l1 *
// (|dc| + |dw|). Rows for no-event slots are identically zero.
std::vector<std::vector<Real>> matching_cost_matrix(
    const std::vector<GroundTruthEvent>& gt, const MemoryBank& bank, Real l_cls,
    Real l_l1);

// Exact minimum-cost assignment of a square cost matrix. Among equal-cost
// optima the lexicographically smallest permutation wins.
Assignment hungarian(const std::vector<std::vector<Real>>& cost);

struct SupervisedLosses {
  Tensor l_cls;  // cross-entropy over all N matched pairs, no-event -> class C
  Tensor l_l1;   // mean |dc| + |dw| over event pairs only; zero if none
};

// Both losses differentiate through the bank; the assignment is a constant.
// no_event_weight rescales the no-event rows of the class loss.
SupervisedLosses supervised_losses(const std::vector<GroundTruthEvent>& gt,
                                   const MemoryBank& bank,
                                   const Assignment& assignment,
                                   Real no_event_weight = 1.0);

}  // namespace gf

#endif
