#pragma once

// Scalar reverse-mode tape. Each recorded node stores its (at most two)
// parents together with the local partial derivatives, so a single reverse
// sweep accumulates adjoints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace micromix::ad {

class Tape;

// A value on a tape, or a plain constant when no tape is attached.
class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT: implicit on purpose, constants mix freely

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, double value) : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

class Tape {
 public:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    std::uint32_t lhs = kNone;
    std::uint32_t rhs = kNone;
    double d_lhs = 0.0;
    double d_rhs = 0.0;
  };

  Var variable(double value) { return push({}, value); }

  void reserve(std::size_t n) { nodes_.reserve(n); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Adjoint of every node with respect to `output`. A constant output has
  // zero gradient everywhere.
  std::vector<double> gradient(const Var& output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    if (output.is_constant()) return adj;
    check_owner(output);
    adj[output.index()] = 1.0;
    for (std::size_t i = output.index() + 1; i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      if (n.lhs != kNone) adj[n.lhs] += n.d_lhs * a;
      if (n.rhs != kNone) adj[n.rhs] += n.d_rhs * a;
    }
    return adj;
  }

  // Records f(x) with df/dx.
  static Var unary(const Var& x, double value, double dx) {
    if (x.is_constant()) return Var(value);
    return x.tape()->push({x.index(), kNone, dx, 0.0}, value);
  }

  // Records f(x, y) with partials (dx, dy).
  static Var binary(const Var& x, const Var& y, double value, double dx, double dy) {
    if (x.is_constant() && y.is_constant()) return Var(value);
    if (x.is_constant()) return unary(y, value, dy);
    if (y.is_constant()) return unary(x, value, dx);
    if (x.tape() != y.tape()) throw std::logic_error("ad::Var operands recorded on different tapes");
    return x.tape()->push({x.index(), y.index(), dx, dy}, value);
  }

 private:
  Var push(Node n, double value) {
    if (nodes_.size() >= kNone) throw std::length_error("ad::Tape exhausted");
    nodes_.push_back(n);
    return Var(this, std::uint32_t(nodes_.size() - 1), value);
  }

  void check_owner(const Var& v) const {
    if (v.tape() != this) throw std::logic_error("ad::Var belongs to a different tape");
  }

  std::vector<Node> nodes_;
};

inline Var operator+(const Var& a, const Var& b) { return Tape::binary(a, b, a.value() + b.value(), 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return Tape::binary(a, b, a.value() - b.value(), 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) {
  return Tape::binary(a, b, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return Tape::binary(a, b, q, 1.0 / b.value(), -q / b.value());
}
inline Var operator-(const Var& a) { return Tape::unary(a, -a.value(), -1.0); }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline Var square(const Var& a) { return Tape::unary(a, a.value() * a.value(), 2.0 * a.value()); }
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return Tape::unary(a, e, e);
}
inline Var log(const Var& a) { return Tape::unary(a, std::log(a.value()), 1.0 / a.value()); }
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return Tape::unary(a, s, 0.5 / s);
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return Tape::unary(a, t, 1.0 - t * t);
}

// Piecewise primitives differentiate through the selected branch.
inline Var min(const Var& a, const Var& b) { return a.value() <= b.value() ? a : b; }
inline Var max(const Var& a, const Var& b) { return a.value() >= b.value() ? a : b; }
inline Var clamp(const Var& a, double lo, double hi) {
  if (a.value() < lo) return Var(lo);
  if (a.value() > hi) return Var(hi);
  return a;
}

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

inline double square(double a) { return a * a; }

}  // namespace micromix::ad
