#include "gf/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gf/glance.hpp"

namespace gf {

Real temporal_iou(const Span& a, const Span& b) {
  const Real lo = std::max(a.lo(), b.lo());
  const Real hi = std::min(a.hi(), b.hi());
  const Real inter = std::max(0.0, hi - lo);
  const Real uni = (a.hi() - a.lo()) + (b.hi() - b.lo()) - inter;
  return inter / (uni + kIouEps);
}

std::vector<GroundTruthEvent> pad_events(std::vector<GroundTruthEvent> events,
                                         std::size_t n) {
  if (events.size() > n) {
    throw ContractError("pad_events: " + std::to_string(events.size()) +
                        " events exceed " + std::to_string(n) + " slots");
  }
  while (events.size() < n) events.push_back(GroundTruthEvent::no_event());
  return events;
}

std::vector<std::vector<Real>> matching_cost_matrix(
    const std::vector<GroundTruthEvent>& gt, const MemoryBank& bank, Real l_cls,
    Real l_l1) {
  const std::size_t n = bank.num_memories();
  if (gt.size() != n) {
    throw ContractError("matching_cost_matrix: " + std::to_string(gt.size()) +
                        " ground-truth entries for " + std::to_string(n) +
                        " memories; pad with no-event first");
  }
  std::vector<std::vector<Real>> cost(n, std::vector<Real>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (!gt[i].is_event()) continue;  // matching a no-event slot costs nothing
    const std::size_t c = *gt[i].label;
    if (c >= bank.num_classes()) {
      throw ContractError("matching_cost_matrix: class label " + std::to_string(c) +
                          " out of range for " + std::to_string(bank.num_classes()) +
                          " prediction classes");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const Real l1 = std::fabs(gt[i].span.center - bank.spans.at(j, 0)) +
                      std::fabs(gt[i].span.width - bank.spans.at(j, 1));
      cost[i][j] = -l_cls * bank.class_probs.at(j, c) + l_l1 * l1;
    }
  }
  return cost;
}

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

// Jonker-Volgenant shortest augmenting path assignment; O(n^3).
// Returns the minimal total cost; fills row_to_col when non-null.
Real solve_assignment(const std::vector<std::vector<Real>>& a,
                      std::vector<std::size_t>* row_to_col) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  std::vector<Real> u(n + 1, 0), v(n + 1, 0), minv(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      Real delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Real cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  if (row_to_col) {
    row_to_col->assign(n, 0);
    for (int j = 1; j <= n; ++j) {
      if (p[j] > 0) (*row_to_col)[p[j] - 1] = static_cast<std::size_t>(j - 1);
    }
  }
  Real total = 0;
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) total += a[p[j] - 1][j - 1];
  }
  return total;
}

}  // namespace

Assignment hungarian(const std::vector<std::vector<Real>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) throw ContractError("hungarian: empty cost matrix");
  for (const auto& row : cost) {
    if (row.size() != n) {
      throw ContractError("hungarian: cost matrix must be square, row of " +
                          std::to_string(row.size()) + " in " + std::to_string(n) +
                          "x" + std::to_string(n));
    }
    for (Real c : row) {
      if (!std::isfinite(c)) throw ContractError("hungarian: non-finite cost entry");
    }
  }

  const Real optimal = solve_assignment(cost, nullptr);
  const Real tol = 1e-9 * (1.0 + std::fabs(optimal));

  // Greedy prefix fixing yields the lexicographically smallest permutation
  // among every assignment whose total cost attains the optimum.
  std::vector<std::size_t> perm(n);
  std::vector<std::size_t> avail(n);
  for (std::size_t j = 0; j < n; ++j) avail[j] = j;
  Real fixed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best_pos = 0;
    Real best_total = kInf;
    bool chosen = false;
    for (std::size_t pos = 0; pos < avail.size(); ++pos) {
      const std::size_t j = avail[pos];
      std::vector<std::vector<Real>> reduced;
      reduced.reserve(n - i - 1);
      for (std::size_t r = i + 1; r < n; ++r) {
        std::vector<Real> row;
        row.reserve(avail.size() - 1);
        for (std::size_t q = 0; q < avail.size(); ++q) {
          if (q != pos) row.push_back(cost[r][avail[q]]);
        }
        reduced.push_back(std::move(row));
      }
      const Real total = fixed + cost[i][j] + solve_assignment(reduced, nullptr);
      if (total <= optimal + tol) {
        perm[i] = j;
        fixed += cost[i][j];
        avail.erase(avail.begin() + static_cast<std::ptrdiff_t>(pos));
        chosen = true;
        break;
      }
      if (total < best_total) {
        best_total = total;
        best_pos = pos;
      }
    }
    if (!chosen) {
      // Numerical guard: fall back to the cheapest continuation.
      const std::size_t j = avail[best_pos];
      perm[i] = j;
      fixed += cost[i][j];
      avail.erase(avail.begin() + static_cast<std::ptrdiff_t>(best_pos));
    }
  }

  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i][perm[i]];
  return {std::move(perm), total};
}

SupervisedLosses supervised_losses(const std::vector<GroundTruthEvent>& gt,
                                   const MemoryBank& bank,
                                   const Assignment& assignment,
                                   Real no_event_weight) {
  const std::size_t n = bank.num_memories();
  if (gt.size() != n || assignment.perm.size() != n) {
    throw ContractError("supervised_losses: ground truth, assignment and bank "
                        "must all cover N slots");
  }
  if (bank.num_classes() < 2) {
    throw ContractError("supervised_losses: bank lacks a no-event class");
  }
  const std::size_t no_event_index = bank.num_classes() - 1;

  std::vector<std::size_t> targets(n);
  std::vector<std::size_t> event_slots;
  for (std::size_t i = 0; i < n; ++i) {
    if (gt[i].is_event()) {
      if (*gt[i].label >= no_event_index) {
        throw ContractError("supervised_losses: class label " +
                            std::to_string(*gt[i].label) +
                            " collides with the no-event index");
      }
      targets[i] = *gt[i].label;
      event_slots.push_back(i);
    } else {
      targets[i] = no_event_index;
    }
  }

  Tensor matched_logits = gather_rows(bank.class_logits, assignment.perm);

  SupervisedLosses out;
  if (no_event_weight == 1.0 || event_slots.size() == n || event_slots.empty()) {
    // Uniform weights reduce to the plain mean.
    out.l_cls = cross_entropy_from_logits(matched_logits, targets);
  } else {
    // Weighted mean: event rows weight 1, no-event rows weight w.
    std::vector<std::size_t> ev_rows, null_rows, ev_targets, null_targets;
    for (std::size_t i = 0; i < n; ++i) {
      if (gt[i].is_event()) {
        ev_rows.push_back(i);
        ev_targets.push_back(targets[i]);
      } else {
        null_rows.push_back(i);
        null_targets.push_back(targets[i]);
      }
    }
    Tensor ce_ev =
        cross_entropy_from_logits(gather_rows(matched_logits, ev_rows), ev_targets);
    Tensor ce_null = cross_entropy_from_logits(gather_rows(matched_logits, null_rows),
                                               null_targets);
    const Real we = static_cast<Real>(ev_rows.size());
    const Real wn = no_event_weight * static_cast<Real>(null_rows.size());
    out.l_cls = scale(add(scale(ce_ev, we), scale(ce_null, wn)), 1.0 / (we + wn));
  }

  if (event_slots.empty()) {
    out.l_l1 = Tensor::scalar(0.0);
  } else {
    std::vector<std::size_t> pred_rows;
    std::vector<Real> gt_spans;
    for (std::size_t i : event_slots) {
      pred_rows.push_back(assignment.perm[i]);
      gt_spans.push_back(gt[i].span.center);
      gt_spans.push_back(gt[i].span.width);
    }
    Tensor pred = gather_rows(bank.spans, pred_rows);
    Tensor target = Tensor::from({event_slots.size(), 2}, std::move(gt_spans));
    out.l_l1 = scale(sum(abs_val(sub(pred, target))),
                     1.0 / static_cast<Real>(event_slots.size()));
  }
  return out;
}

}  // namespace gf
