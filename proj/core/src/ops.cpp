#include "gf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace gf {

namespace {

using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EMat>;
using MutMap = Eigen::Map<EMat>;

ConstMap cmap(const std::vector<Real>& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap mmap(std::vector<Real>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

bool tracked(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": needs rank-2, got " + shape_str(a.shape()));
  }
}

// Elementwise op with derivative computed from saved input values.
template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Bwd dfdx) {
  Tensor out = Tensor::zeros(a.shape(), tracked(a));
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = fwd(av[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, dfdx] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        an->grad[i] += dfdx(an->value[i], on->value[i]) * on->grad[i];
      }
    });
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n}, tracked(a) || tracked(b));
  mmap(out.values(), m, n).noalias() = cmap(a.values(), m, k) * cmap(b.values(), k, n);
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      auto dout = cmap(on->grad, m, n);
      if (an->requires_grad) {
        an->ensure_grad();
        mmap(an->grad, m, k).noalias() += dout * cmap(bn->value, k, n).transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        mmap(bn->grad, k, n).noalias() += cmap(an->value, m, k).transpose() * dout;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m}, tracked(a));
  mmap(out.values(), n, m).noalias() = cmap(a.values(), m, n).transpose();
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, m, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      mmap(an->grad, m, n).noalias() += cmap(on->grad, n, m).transpose();
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), tracked(a) || tracked(b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape(), tracked(a) || tracked(b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  require_rank2(a, "add_rowvec");
  if (row.size() != a.cols()) {
    throw ShapeError("add_rowvec: row size " + shape_str(row.shape()) +
                     " does not match matrix " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n}, tracked(a) || tracked(row));
  const auto& av = a.values();
  const auto& rv = row.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + rv[j];
  if (out.requires_grad()) {
    auto an = a.node();
    auto rn = row.node();
    auto on = out.node();
    Tape::active()->record([an, rn, on, m, n] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) an->grad[i] += on->grad[i];
      }
      if (rn->requires_grad) {
        rn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) rn->grad[j] += on->grad[i * n + j];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, Real c) {
  return unary_elementwise(
      a, [c](Real x) { return c * x; }, [c](Real, Real) { return c; });
}

Tensor add_const(const Tensor& a, Real c) {
  return unary_elementwise(
      a, [c](Real x) { return x + c; }, [](Real, Real) { return 1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), tracked(a) || tracked(b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += bn->value[i] * on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += an->value[i] * on->grad[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = Tensor::zeros(a.shape(), tracked(a) || tracked(b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / bv[i];
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] / bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] -= an->value[i] / (bn->value[i] * bn->value[i]) * on->grad[i];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](Real x) { return x > 0 ? x : 0.0; },
      [](Real x, Real) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      a,
      [](Real x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        Real e = std::exp(x);
        return e / (1.0 + e);
      },
      [](Real, Real y) { return y * (1.0 - y); });
}

Tensor abs_val(const Tensor& a) {
  return unary_elementwise(
      a, [](Real x) { return std::fabs(x); },
      [](Real x, Real) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  Tensor out = Tensor::zeros(a.shape(), tracked(a) || tracked(b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::min(av[i], bv[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        bool take_a = an->value[i] <= bn->value[i];
        if (take_a && an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += on->grad[i];
        } else if (!take_a && bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] += on->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "maximum");
  Tensor out = Tensor::zeros(a.shape(), tracked(a) || tracked(b));
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::max(av[i], bv[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    Tape::active()->record([an, bn, on] {
      if (on->grad.empty()) return;
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        bool take_a = an->value[i] >= bn->value[i];
        if (take_a && an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += on->grad[i];
        } else if (!take_a && bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] += on->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor log_clamped(const Tensor& a, Real eps) {
  return unary_elementwise(
      a, [eps](Real x) { return std::log(std::max(x, eps)); },
      [eps](Real x, Real) { return x > eps ? 1.0 / x : 0.0; });
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({}, tracked(a));
  Real s = 0;
  for (Real v : a.values()) s += v;
  out.values()[0] = s;
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  const Real inv = 1.0 / static_cast<Real>(a.size());
  Tensor out = Tensor::zeros({}, tracked(a));
  Real s = 0;
  for (Real v : a.values()) s += v;
  out.values()[0] = s * inv;
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, inv] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += inv * on->grad[0];
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  require_rank2(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const Real inv = 1.0 / static_cast<Real>(m);
  Tensor out = Tensor::zeros({n}, tracked(a));
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[j] += av[i * n + j] * inv;
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, m, n, inv] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += inv * on->grad[j];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  require_rank2(parts.front(), "concat_rows");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n) {
      throw ShapeError("concat_rows: column extents differ, " +
                       shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    }
    m += p.rows();
    rg = rg || tracked(p);
  }
  Tensor out = Tensor::zeros({m, n}, rg);
  auto& ov = out.values();
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(), ov.begin() + r * n);
    r += p.rows();
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorData>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    auto on = out.node();
    Tape::active()->record([nodes, on, n] {
      if (on->grad.empty()) return;
      std::size_t r = 0;
      for (const auto& pn : nodes) {
        std::size_t pm = pn->value.size() / n;
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < pm * n; ++i) pn->grad[i] += on->grad[r * n + i];
        }
        r += pm;
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  require_rank2(parts.front(), "concat_cols");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) {
      throw ShapeError("concat_cols: row extents differ, " +
                       shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
    }
    n += p.cols();
    rg = rg || tracked(p);
  }
  Tensor out = Tensor::zeros({m, n}, rg);
  auto& ov = out.values();
  std::size_t c = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pc; ++j) ov[i * n + c + j] = p.values()[i * pc + j];
    c += pc;
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorData>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    auto on = out.node();
    Tape::active()->record([nodes, on, m, n] {
      if (on->grad.empty()) return;
      std::size_t c = 0;
      for (const auto& pn : nodes) {
        std::size_t pc = pn->value.size() / m;
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              pn->grad[i * pc + j] += on->grad[i * n + c + j];
        }
        c += pc;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  require_rank2(a, "slice_rows");
  if (r0 >= r1 || r1 > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                     std::to_string(r1) + ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t n = a.cols(), m = r1 - r0;
  Tensor out = Tensor::zeros({m, n}, tracked(a));
  std::copy(a.values().begin() + r0 * n, a.values().begin() + r1 * n, out.values().begin());
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, r0, m, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < m * n; ++i) an->grad[r0 * n + i] += on->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  require_rank2(a, "slice_cols");
  if (c0 >= c1 || c1 > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " +
                     std::to_string(c1) + ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = c1 - c0;
  Tensor out = Tensor::zeros({m, w}, tracked(a));
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) ov[i * w + j] = av[i * n + c0 + j];
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, c0, m, n, w] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) an->grad[i * n + c0 + j] += on->grad[i * w + j];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  require_rank2(a, "gather_rows");
  const std::size_t n = a.cols(), m = idx.size();
  for (std::size_t i : idx) {
    if (i >= a.rows()) {
      throw ContractError("gather_rows: index " + std::to_string(i) +
                          " out of range for " + shape_str(a.shape()));
    }
  }
  Tensor out = Tensor::zeros({m, n}, tracked(a));
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t r = 0; r < m; ++r)
    std::copy(av.begin() + idx[r] * n, av.begin() + (idx[r] + 1) * n, ov.begin() + r * n);
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, idx, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j)
          an->grad[idx[r] * n + j] += on->grad[r * n + j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (n != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  }
  Tensor out = Tensor::from(std::move(shape), a.values(), tracked(a));
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n}, tracked(a));
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < m; ++i) {
    Real mx = av[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[i * n + j]);
    Real s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      ov[i * n + j] = std::exp(av[i * n + j] - mx);
      s += ov[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] /= s;
  }
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, m, n] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        Real dot = 0;
        for (std::size_t j = 0; j < n; ++j)
          dot += on->grad[i * n + j] * on->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          an->grad[i * n + j] += on->value[i * n + j] * (on->grad[i * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor cross_entropy_from_logits(const Tensor& logits,
                                 const std::vector<std::size_t>& targets) {
  require_rank2(logits, "cross_entropy_from_logits");
  const std::size_t b = logits.rows(), c = logits.cols();
  if (targets.size() != b) {
    throw ShapeError("cross_entropy_from_logits: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(b) + " rows");
  }
  for (std::size_t t : targets) {
    if (t >= c) {
      throw ContractError("cross_entropy_from_logits: target index " +
                          std::to_string(t) + " out of range, " +
                          std::to_string(c) + " classes");
    }
  }
  const auto& lv = logits.values();
  Tensor out = Tensor::zeros({}, tracked(logits));
  Real total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    Real mx = lv[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    Real s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(lv[i * c + j] - mx);
    total += mx + std::log(s) - lv[i * c + targets[i]];
  }
  out.values()[0] = total / static_cast<Real>(b);
  if (out.requires_grad()) {
    auto ln = logits.node();
    auto on = out.node();
    Tape::active()->record([ln, on, targets, b, c] {
      if (on->grad.empty()) return;
      ln->ensure_grad();
      const Real gscale = on->grad[0] / static_cast<Real>(b);
      for (std::size_t i = 0; i < b; ++i) {
        Real mx = ln->value[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, ln->value[i * c + j]);
        Real s = 0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(ln->value[i * c + j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          Real p = std::exp(ln->value[i * c + j] - mx) / s;
          ln->grad[i * c + j] += gscale * (p - (j == targets[i] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  if (x.rank() == 0) throw ShapeError("layernorm: needs rank >= 1");
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layernorm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match last extent " +
                     std::to_string(d));
  }
  const std::size_t blocks = x.size() / d;
  Tensor out = Tensor::zeros(x.shape(), tracked(x) || tracked(gain) || tracked(bias));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  auto& ov = out.values();
  for (std::size_t r = 0; r < blocks; ++r) {
    const Real* row = xv.data() + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(d);
    const Real inv_sd = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j)
      ov[r * d + j] = gv[j] * (row[j] - mu) * inv_sd + bv[j];
  }
  if (out.requires_grad()) {
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    auto on = out.node();
    Tape::active()->record([xn, gn, bn, on, d, blocks, eps] {
      if (on->grad.empty()) return;
      if (xn->requires_grad) xn->ensure_grad();
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      std::vector<Real> xhat(d);
      for (std::size_t r = 0; r < blocks; ++r) {
        const Real* row = xn->value.data() + r * d;
        const Real* dout = on->grad.data() + r * d;
        Real mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<Real>(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<Real>(d);
        const Real inv_sd = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) xhat[j] = (row[j] - mu) * inv_sd;
        if (gn->requires_grad || bn->requires_grad) {
          for (std::size_t j = 0; j < d; ++j) {
            if (gn->requires_grad) gn->grad[j] += dout[j] * xhat[j];
            if (bn->requires_grad) bn->grad[j] += dout[j];
          }
        }
        if (xn->requires_grad) {
          Real mean_gd = 0, mean_gdx = 0;
          for (std::size_t j = 0; j < d; ++j) {
            Real gd = gn->value[j] * dout[j];
            mean_gd += gd;
            mean_gdx += gd * xhat[j];
          }
          mean_gd /= static_cast<Real>(d);
          mean_gdx /= static_cast<Real>(d);
          for (std::size_t j = 0; j < d; ++j) {
            Real gd = gn->value[j] * dout[j];
            xn->grad[r * d + j] += inv_sd * (gd - mean_gd - xhat[j] * mean_gdx);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, Real rate, Rng* rng) {
  if (rate < 0 || rate >= 1) throw ContractError("dropout: rate must be in [0, 1)");
  if (rate == 0 || rng == nullptr) return a;
  const Real keep_scale = 1.0 / (1.0 - rate);
  std::vector<Real> mask(a.size());
  for (Real& m : mask) m = (rng->uniform() >= rate) ? keep_scale : 0.0;
  Tensor out = Tensor::zeros(a.shape(), tracked(a));
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * mask[i];
  if (out.requires_grad()) {
    auto an = a.node();
    auto on = out.node();
    Tape::active()->record([an, on, mask = std::move(mask)] {
      if (on->grad.empty()) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

Real finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                       Real step) {
  if (step <= 0) throw ContractError("finite_diff_check: step must be positive");
  x.set_requires_grad(true);
  std::vector<Real> analytic(x.size(), 0.0);
  {
    Tape tape;
    x.zero_grad();
    Tensor loss = f(x);
    if (loss.size() != 1) {
      throw ContractError("finite_diff_check: f must be scalar-valued");
    }
    tape.backward(loss);
    if (x.has_grad()) analytic = x.grad();
  }
  Real worst = 0;
  auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const Real orig = xv[i];
    xv[i] = orig + step;
    const Real fp = f(x).item();
    xv[i] = orig - step;
    const Real fm = f(x).item();
    xv[i] = orig;
    const Real numeric = (fp - fm) / (2.0 * step);
    const Real rel = std::fabs(analytic[i] - numeric) /
                     std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace gf
