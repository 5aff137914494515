#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfpack::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw ShapeError("matrix data size does not match shape");
  }
  static Matrix row(std::initializer_list<double> v) { return Matrix(1, v.size(), std::vector<double>(v)); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Matrix&) const = default;
};

inline std::string shape_str(const Matrix& m) { return std::to_string(m.rows) + "x" + std::to_string(m.cols); }

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul " + shape_str(a) + " * " + shape_str(b));
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* ci = &c.data[i * c.cols];
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      if (aik == 0.0) continue;
      const double* bk = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// c += a^T b
inline void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t k = 0; k < a.rows; ++k) {
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = a.data[k * a.cols + i];
      if (aki == 0.0) continue;
      double* ci = &c.data[i * c.cols];
      const double* bk = &b.data[k * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
}

// c += a b^T
inline void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = &a.data[i * a.cols];
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = &b.data[j * b.cols];
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      c.data[i * c.cols + j] += s;
    }
  }
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  }
  return t;
}

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows; }
  [[nodiscard]] std::size_t cols() const { return value().cols; }
  [[nodiscard]] bool requires_grad() const;
};

/// Records a forward computation and replays it backwards. With gradients
/// disabled no backward closures are kept (inference mode).
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m) { return push(std::move(m), false, nullptr); }
  Var variable(Matrix m) { return push(std::move(m), grad_enabled_, nullptr); }

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] bool grad_enabled() const { return grad_enabled_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, zero-initialized on first access.
  Matrix& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
  }
  [[nodiscard]] bool has_grad(std::size_t id) const { return !nodes_[id].grad.data.empty(); }

  /// Adds a node computed from `parents`; `back` is kept only if a parent needs gradients.
  Var record(Matrix value, std::initializer_list<Var> parents, std::function<void()> back) {
    return record(std::move(value), std::vector<Var>(parents), std::move(back));
  }
  Var record(Matrix value, const std::vector<Var>& parents, std::function<void()> back) {
    bool req = false;
    if (grad_enabled_) {
      for (const Var& p : parents) req = req || requires_grad(p.id);
    }
    return push(std::move(value), req, req ? std::move(back) : nullptr);
  }

  /// Reverse sweep from a 1x1 node.
  void backward(Var loss) {
    if (value(loss.id).size() != 1) throw ShapeError("backward needs a scalar loss");
    if (!requires_grad(loss.id)) return;
    grad(loss.id).data[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && has_grad(i)) n.back();
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> back;
  };
  Var push(Matrix m, bool req, std::function<void()> back) {
    nodes_.push_back(Node{std::move(m), {}, req, std::move(back)});
    return Var{this, nodes_.size() - 1};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

namespace detail {
inline void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("variables live on different tapes");
}
inline void acc(Tape& t, Var v, const Matrix& g) {
  if (!v.requires_grad()) return;
  Matrix& dst = t.grad(v.id);
  for (std::size_t i = 0; i < g.size(); ++i) dst.data[i] += g.data[i];
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(matmul(a.value(), b.value()), {a, b}, [&t, a, b, self] {
    const Matrix& g = t.grad(self);
    if (a.requires_grad()) matmul_nt_acc(g, b.value(), t.grad(a.id));
    if (b.requires_grad()) matmul_tn_acc(a.value(), g, t.grad(b.id));
  });
}

/// a + b, where b has a's shape or is a 1 x cols row broadcast over rows.
inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  const bool row = y.rows == 1 && x.rows != 1 && y.cols == x.cols;
  if (!x.same_shape(y) && !row) throw ShapeError("add " + shape_str(x) + " + " + shape_str(y));
  Matrix z = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) z(i, j) += row ? y(0, j) : y(i, j);
  }
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a, b}, [&t, a, b, row, self] {
    const Matrix& g = t.grad(self);
    detail::acc(t, a, g);
    if (!b.requires_grad()) return;
    Matrix& gb = t.grad(b.id);
    if (!row) {
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
      return;
    }
    for (std::size_t i = 0; i < g.rows; ++i) {
      for (std::size_t j = 0; j < g.cols; ++j) gb(0, j) += g(i, j);
    }
  });
}

inline Var sub(Var a, Var b) {
  detail::check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw ShapeError("sub " + shape_str(a.value()) + " - " + shape_str(b.value()));
  Matrix z = a.value();
  for (std::size_t i = 0; i < z.size(); ++i) z.data[i] -= b.value().data[i];
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a, b}, [&t, a, b, self] {
    const Matrix& g = t.grad(self);
    detail::acc(t, a, g);
    if (!b.requires_grad()) return;
    Matrix& gb = t.grad(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
  });
}

/// Element-wise product of equal shapes.
inline Var mul(Var a, Var b) {
  detail::check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw ShapeError("mul " + shape_str(a.value()) + " * " + shape_str(b.value()));
  Matrix z = a.value();
  for (std::size_t i = 0; i < z.size(); ++i) z.data[i] *= b.value().data[i];
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a, b}, [&t, a, b, self] {
    const Matrix& g = t.grad(self);
    if (a.requires_grad()) {
      Matrix& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * b.value().data[i];
    }
    if (b.requires_grad()) {
      Matrix& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * a.value().data[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Matrix z = a.value();
  for (double& x : z.data) x *= s;
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, s, self] {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

namespace detail {
template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Matrix z = a.value();
  for (double& x : z.data) x = f(x);
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, df, self] {
    const Matrix& g = t.grad(self);
    const Matrix& x = a.value();
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * df(x.data[i], y.data[i]);
  });
}
}  // namespace detail

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var silu(Var a) {
  return detail::unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s + x * s * (1.0 - s);
      });
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

/// Row-wise softmax.
inline Var softmax_rows(Var a) {
  const Matrix& x = a.value();
  Matrix z(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double m = -INFINITY;
    for (std::size_t j = 0; j < x.cols; ++j) m = std::max(m, x(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += z(i, j) = std::exp(x(i, j) - m);
    for (std::size_t j = 0; j < x.cols; ++j) z(i, j) /= s;
  }
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, self] {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < y.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(transpose(a.value()), {a}, [&t, a, self] {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i) {
      for (std::size_t j = 0; j < g.cols; ++j) ga(j, i) += g(i, j);
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols row mismatch");
    c += p.cols();
  }
  Matrix z(r, c);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& x = p.value();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(&x.data[i * x.cols], x.cols, &z.data[i * c + off]);
    off += x.cols;
  }
  Tape& t = *parts.front().tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), parts, [&t, parts, self] {
    const Matrix& g = t.grad(self);
    std::size_t o = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) {
        Matrix& gp = t.grad(p.id);
        for (std::size_t i = 0; i < gp.rows; ++i) {
          for (std::size_t j = 0; j < gp.cols; ++j) gp(i, j) += g(i, o + j);
        }
      }
      o += p.cols();
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows column mismatch");
    r += p.rows();
  }
  Matrix z(r, c);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), z.data.begin() + off * c);
    off += p.rows();
  }
  Tape& t = *parts.front().tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), parts, [&t, parts, self] {
    const Matrix& g = t.grad(self);
    std::size_t o = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) {
        Matrix& gp = t.grad(p.id);
        for (std::size_t k = 0; k < gp.size(); ++k) gp.data[k] += g.data[o * g.cols + k];
      }
      o += p.rows();
    }
  });
}

inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Matrix& x = a.value();
  if (c0 > c1 || c1 > x.cols) throw ShapeError("slice_cols out of range");
  Matrix z(x.rows, c1 - c0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = c0; j < c1; ++j) z(i, j - c0) = x(i, j);
  }
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, c0, self] {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i) {
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, j + c0) += g(i, j);
    }
  });
}

inline Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
  const Matrix& x = a.value();
  if (r0 > r1 || r1 > x.rows) throw ShapeError("slice_rows out of range");
  Matrix z(r1 - r0, x.cols);
  std::copy(x.data.begin() + r0 * x.cols, x.data.begin() + r1 * x.cols, z.data.begin());
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, r0, self] {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t k = 0; k < g.size(); ++k) ga.data[r0 * ga.cols + k] += g.data[k];
  });
}

/// Broadcasts a 1 x c row to n rows.
inline Var repeat_rows(Var a, std::size_t n) {
  const Matrix& x = a.value();
  if (x.rows != 1) throw ShapeError("repeat_rows needs a single row");
  Matrix z(n, x.cols);
  for (std::size_t i = 0; i < n; ++i) std::copy(x.data.begin(), x.data.end(), z.data.begin() + i * x.cols);
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, self] {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i) {
      for (std::size_t j = 0; j < g.cols; ++j) ga(0, j) += g(i, j);
    }
  });
}

inline Var mean_rows(Var a) {
  const Matrix& x = a.value();
  if (x.rows == 0) throw ShapeError("mean of no rows");
  Matrix z(1, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) z(0, j) += x(i, j);
  }
  for (double& v : z.data) v /= static_cast<double>(x.rows);
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a}, [&t, a, self] {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a.id);
    const double k = 1.0 / static_cast<double>(ga.rows);
    for (std::size_t i = 0; i < ga.rows; ++i) {
      for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += k * g(0, j);
    }
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(Matrix(1, 1, s), {a}, [&t, a, self] {
    const double g = t.grad(self).data[0];
    for (double& v : t.grad(a.id).data) v += g;
  });
}

/// Row-wise layer normalization with learned gain and bias rows.
inline Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5) {
  const Matrix& x = a.value();
  if (gamma.rows() != 1 || gamma.cols() != x.cols || beta.rows() != 1 || beta.cols() != x.cols) {
    throw ShapeError("layer_norm parameter shape");
  }
  const std::size_t n = x.cols;
  Matrix xhat(x.rows, n), z(x.rows, n);
  std::vector<double> inv(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(n);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (x(i, j) - mu) * inv[i];
      z(i, j) = xhat(i, j) * gamma.value()(0, j) + beta.value()(0, j);
    }
  }
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(std::move(z), {a, gamma, beta}, [&t, a, gamma, beta, xhat = std::move(xhat), inv, n, self] {
    const Matrix& g = t.grad(self);
    const Matrix& gm = gamma.value();
    if (gamma.requires_grad() || beta.requires_grad()) {
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (gamma.requires_grad()) t.grad(gamma.id)(0, j) += g(i, j) * xhat(i, j);
          if (beta.requires_grad()) t.grad(beta.id)(0, j) += g(i, j);
        }
      }
    }
    if (!a.requires_grad()) return;
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = g(i, j) * gm(0, j);
        s1 += d;
        s2 += d * xhat(i, j);
      }
      const double k = 1.0 / static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double d = g(i, j) * gm(0, j);
        ga(i, j) += inv[i] * (d - k * s1 - xhat(i, j) * k * s2);
      }
    }
  });
}

/// Mean of squared differences to a constant target, as a 1x1 node.
inline Var mse(Var a, const Matrix& target) {
  const Matrix& x = a.value();
  if (!x.same_shape(target)) throw ShapeError("mse " + shape_str(x) + " vs " + shape_str(target));
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x.data[i] - target.data[i]) * (x.data[i] - target.data[i]);
  const double n = static_cast<double>(std::max<std::size_t>(x.size(), 1));
  Tape& t = *a.tape;
  const std::size_t self = t.size();
  return t.record(Matrix(1, 1, s / n), {a}, [&t, a, target, n, self] {
    const double g = t.grad(self).data[0];
    Matrix& ga = t.grad(a.id);
    const Matrix& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) ga.data[i] += g * 2.0 * (x.data[i] - target.data[i]) / n;
  });
}

}  // namespace gfpack::ad
