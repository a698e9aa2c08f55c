#ifndef GF_TESTS_TESTUTIL_HPP
#define GF_TESTS_TESTUTIL_HPP

#include <algorithm>
#include <numeric>
#include <vector>

#include "gf/episodes.hpp"
#include "gf/tensor.hpp"

namespace gftest {

inline gf::Tensor random_tensor(gf::Shape shape, gf::Rng& rng, gf::Real scale = 1.0) {
  gf::Tensor t = gf::Tensor::zeros(std::move(shape));
  for (gf::Real& v : t.values()) v = scale * rng.normal();
  return t;
}

inline bool all_close(const std::vector<gf::Real>& a, const std::vector<gf::Real>& b,
                      gf::Real tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::fabs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

// Exhaustive assignment oracle: minimum over all permutations, ties broken by
// the lexicographically smallest permutation. Independent of the solver.
struct BruteForceAssignment {
  std::vector<std::size_t> perm;
  gf::Real cost = 0;
};

inline BruteForceAssignment brute_force_assignment(
    const std::vector<std::vector<gf::Real>>& cost) {
  const std::size_t n = cost.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  BruteForceAssignment best;
  best.cost = std::numeric_limits<gf::Real>::infinity();
  do {
    gf::Real total = 0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i][perm[i]];
    if (total < best.cost - 1e-12) {
      best.cost = total;
      best.perm = perm;
    }
    // Lexicographic order of std::next_permutation means the first permutation
    // reaching the optimum is already the smallest; strictly-better-only
    // updates keep it.
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Re-derives the expected answer of a QA sample from the event list alone,
// by question semantics; independent of the generator's template code.
inline std::optional<std::size_t> oracle_answer(const gf::Episode& ep,
                                                const gf::QASample& qa,
                                                const gf::Vocabulary& vocab) {
  std::vector<const gf::GroundTruthEvent*> events;
  for (const auto& e : ep.events) events.push_back(&e);
  std::sort(events.begin(), events.end(),
            [](const gf::GroundTruthEvent* a, const gf::GroundTruthEvent* b) {
              return a->span.center < b->span.center;
            });
  if (events.empty()) return std::nullopt;

  auto class_of_token = [&](std::size_t tok) -> std::optional<std::size_t> {
    const std::string& s = vocab.token(tok);
    if (s.rfind("ev", 0) != 0) return std::nullopt;
    return static_cast<std::size_t>(std::stoul(s.substr(2)));
  };

  switch (qa.type) {
    case gf::QuestionType::kFirstEvent:
      return vocab.class_answer(*events.front()->label);
    case gf::QuestionType::kLastEvent:
      return vocab.class_answer(*events.back()->label);
    case gf::QuestionType::kCountEvents:
      return vocab.count_answer(events.size());
    case gf::QuestionType::kWhatAt: {
      const std::string& s = vocab.token(qa.question.at(2));
      if (s.rfind("t", 0) != 0) return std::nullopt;
      const std::size_t bucket = std::stoul(s.substr(1));
      const gf::Real probe = (static_cast<gf::Real>(bucket) + 0.5) /
                             static_cast<gf::Real>(gf::kTimeBuckets);
      for (const auto* e : events) {
        if (probe >= e->span.lo() && probe < e->span.hi()) {
          return vocab.class_answer(*e->label);
        }
      }
      return std::nullopt;
    }
    case gf::QuestionType::kWhatAfter: {
      auto cls = class_of_token(qa.question.at(2));
      if (!cls) return std::nullopt;
      std::size_t hits = 0, at = 0;
      for (std::size_t i = 0; i < events.size(); ++i) {
        if (*events[i]->label == *cls) {
          ++hits;
          at = i;
        }
      }
      if (hits != 1 || at + 1 >= events.size()) return std::nullopt;
      return vocab.class_answer(*events[at + 1]->label);
    }
    case gf::QuestionType::kWhatBefore: {
      auto cls = class_of_token(qa.question.at(2));
      if (!cls) return std::nullopt;
      std::size_t hits = 0, at = 0;
      for (std::size_t i = 0; i < events.size(); ++i) {
        if (*events[i]->label == *cls) {
          ++hits;
          at = i;
        }
      }
      if (hits != 1 || at == 0) return std::nullopt;
      return vocab.class_answer(*events[at - 1]->label);
    }
  }
  return std::nullopt;
}

}  // namespace gftest

#endif
