#pragma once

#include <span>
#include <vector>

#include "pinnlab/tape.hpp"

namespace pinnlab {

/// Second-order forward-mode jet: a value stream plus, per input coordinate,
/// a first-derivative stream and a pure second-derivative stream. Streams are
/// nodes on a reverse-mode Tape, so any scalar assembled from jet components
/// stays differentiable with respect to the network parameters. Mixed second
/// partials are not carried.
///
/// A Jet of len 1 is the scalar case (the DiffScalar of the public API);
/// larger lens carry whole hidden-layer vectors through the same rules.
struct Jet {
  Tape* tape = nullptr;
  int dim = 0;  // number of input coordinates tracked
  NodeId val = kNoNode;
  std::vector<NodeId> d1, d2;

  bool scalar() const { return tape && tape->values(val).size() == 1; }
  double value() const { return tape->value(val); }
  double deriv1(int i) const { return tape->value(d1.at(i)); }
  double deriv2(int i) const { return tape->value(d2.at(i)); }
};

namespace jet {

/// Seeded input: coordinate vector with d1[a] = e_a and d2[a] = 0.
/// dim == 0 gives a value-only pass (used for dense evaluation grids).
inline Jet input(Tape& t, std::span<const double> x, bool with_derivs = true) {
  Jet j;
  j.tape = &t;
  const int d = static_cast<int>(x.size());
  j.dim = with_derivs ? d : 0;
  j.val = t.constant(x);
  if (with_derivs) {
    std::vector<double> e(x.size(), 0.0);
    for (int a = 0; a < d; ++a) {
      e[a] = 1.0;
      j.d1.push_back(t.constant(e));
      e[a] = 0.0;
      j.d2.push_back(t.zeros(d));
    }
  }
  return j;
}

/// Constant with zero derivative streams of the given jet dimension.
inline Jet constant(Tape& t, std::span<const double> v, int dim) {
  Jet j;
  j.tape = &t;
  j.dim = dim;
  j.val = t.constant(v);
  const int len = static_cast<int>(v.size());
  for (int a = 0; a < dim; ++a) {
    j.d1.push_back(t.zeros(len));
    j.d2.push_back(t.zeros(len));
  }
  return j;
}
inline Jet constant(Tape& t, double v, int dim) {
  return constant(t, std::span<const double>(&v, 1), dim);
}

inline Jet add(const Jet& a, const Jet& b) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.add(a.val, b.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.add(a.d1[i], b.d1[i]));
    r.d2.push_back(t.add(a.d2[i], b.d2[i]));
  }
  return r;
}

inline Jet sub(const Jet& a, const Jet& b) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.sub(a.val, b.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.sub(a.d1[i], b.d1[i]));
    r.d2.push_back(t.sub(a.d2[i], b.d2[i]));
  }
  return r;
}

inline Jet scale(const Jet& a, double c) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.scale(a.val, c), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.scale(a.d1[i], c));
    r.d2.push_back(t.scale(a.d2[i], c));
  }
  return r;
}

inline Jet add_imm(const Jet& a, double c) {
  Jet r = a;
  r.val = a.tape->add_imm(a.val, c);
  return r;
}

/// Elementwise product rule: (ab)'' = a''b + 2a'b' + ab''.
inline Jet mul(const Jet& a, const Jet& b) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.mul(a.val, b.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.add(t.mul(a.d1[i], b.val), t.mul(a.val, b.d1[i])));
    NodeId cross = t.scale(t.mul(a.d1[i], b.d1[i]), 2.0);
    NodeId ends = t.add(t.mul(a.d2[i], b.val), t.mul(a.val, b.d2[i]));
    r.d2.push_back(t.add(ends, cross));
  }
  return r;
}

/// Chain rule through an elementwise map given nodes for f(x), f'(x), f''(x).
inline Jet chain(const Jet& a, NodeId fv, NodeId f1, NodeId f2) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, fv, {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.mul(f1, a.d1[i]));
    NodeId quad = t.mul(f2, t.mul(a.d1[i], a.d1[i]));
    r.d2.push_back(t.add(quad, t.mul(f1, a.d2[i])));
  }
  return r;
}

inline Jet tanh(const Jet& a) {
  Tape& t = *a.tape;
  NodeId y = t.tanh(a.val);
  if (a.dim == 0) return {a.tape, 0, y, {}, {}};
  NodeId f1 = t.add_imm(t.neg(t.square(y)), 1.0);   // 1 - tanh^2
  NodeId f2 = t.scale(t.mul(y, f1), -2.0);          // -2 tanh (1 - tanh^2)
  return chain(a, y, f1, f2);
}

inline Jet sin(const Jet& a) {
  Tape& t = *a.tape;
  NodeId y = t.sin(a.val);
  if (a.dim == 0) return {a.tape, 0, y, {}, {}};
  return chain(a, y, t.cos(a.val), t.neg(y));
}

inline Jet exp(const Jet& a) {
  Tape& t = *a.tape;
  NodeId y = t.exp(a.val);
  if (a.dim == 0) return {a.tape, 0, y, {}, {}};
  return chain(a, y, y, y);
}

inline Jet square(const Jet& a) { return mul(a, a); }

inline Jet recip(const Jet& a) {
  Tape& t = *a.tape;
  NodeId y = t.recip(a.val);
  if (a.dim == 0) return {a.tape, 0, y, {}, {}};
  NodeId y2 = t.square(y);
  NodeId f1 = t.neg(y2);                       // -1/x^2
  NodeId f2 = t.scale(t.mul(y2, y), 2.0);      // 2/x^3
  return chain(a, y, f1, f2);
}

inline Jet div(const Jet& a, const Jet& b) { return mul(a, recip(b)); }

/// 1/sqrt(x + shift); used by layer normalization.
inline Jet rsqrt_shifted(const Jet& a, double shift) {
  Tape& t = *a.tape;
  NodeId xs = t.add_imm(a.val, shift);
  NodeId y = t.recip(t.sqrt(xs));
  if (a.dim == 0) return {a.tape, 0, y, {}, {}};
  NodeId y2 = t.square(y);
  NodeId y3 = t.mul(y2, y);
  NodeId f1 = t.scale(y3, -0.5);                       // -1/2 x^-3/2
  NodeId f2 = t.scale(t.mul(y3, y2), 0.75);            // 3/4 x^-5/2
  return chain(a, y, f1, f2);
}

/// Matrix product against a parameter slice, applied to every stream.
inline Jet linear(Tape& t, int64_t w_off, int rows, int cols, const Jet& x) {
  Jet r{x.tape, x.dim, t.matvec(w_off, rows, cols, x.val), {}, {}};
  for (int i = 0; i < x.dim; ++i) {
    r.d1.push_back(t.matvec(w_off, rows, cols, x.d1[i]));
    r.d2.push_back(t.matvec(w_off, rows, cols, x.d2[i]));
  }
  return r;
}

/// linear() plus a bias parameter on the value stream only.
inline Jet affine(Tape& t, int64_t w_off, int64_t b_off, int rows, int cols,
                  const Jet& x) {
  Jet r = linear(t, w_off, rows, cols, x);
  r.val = t.add(r.val, t.param(b_off, rows));
  return r;
}

/// Broadcast add of a scalar jet onto a vector jet.
inline Jet badd_scalar(const Jet& a, const Jet& s) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.badd(a.val, s.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.badd(a.d1[i], s.d1[i]));
    r.d2.push_back(t.badd(a.d2[i], s.d2[i]));
  }
  return r;
}

/// Broadcast product of a vector jet by a scalar jet (full product rule).
inline Jet bmul(const Jet& a, const Jet& s) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.bmul(a.val, s.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.add(t.bmul(a.d1[i], s.val), t.bmul(a.val, s.d1[i])));
    NodeId cross = t.scale(t.bmul(a.d1[i], s.d1[i]), 2.0);
    NodeId ends = t.add(t.bmul(a.d2[i], s.val), t.bmul(a.val, s.d2[i]));
    r.d2.push_back(t.add(ends, cross));
  }
  return r;
}

/// Dot product of two vector jets. When `drop_b` is set, b's derivative
/// streams are treated as zero: this is how attention reads set-mates, whose
/// coordinates are held fixed under the per-point jet seeding.
inline Jet dot(const Jet& a, const Jet& b, bool drop_b = false) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.dot(a.val, b.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    if (drop_b) {
      r.d1.push_back(t.dot(a.d1[i], b.val));
      r.d2.push_back(t.dot(a.d2[i], b.val));
    } else {
      r.d1.push_back(t.add(t.dot(a.d1[i], b.val), t.dot(a.val, b.d1[i])));
      NodeId cross = t.scale(t.dot(a.d1[i], b.d1[i]), 2.0);
      NodeId ends = t.add(t.dot(a.d2[i], b.val), t.dot(a.val, b.d2[i]));
      r.d2.push_back(t.add(ends, cross));
    }
  }
  return r;
}

/// Broadcast product by a scalar jet with the vector's streams dropped
/// (set-mate value vectors in attention).
inline Jet bmul_drop_vec(const Jet& a_dropped, const Jet& s) {
  Tape& t = *s.tape;
  Jet r{s.tape, s.dim, t.bmul(a_dropped.val, s.val), {}, {}};
  for (int i = 0; i < s.dim; ++i) {
    r.d1.push_back(t.bmul(a_dropped.val, s.d1[i]));
    r.d2.push_back(t.bmul(a_dropped.val, s.d2[i]));
  }
  return r;
}

inline Jet sum(const Jet& a) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.sum(a.val), {}, {}};
  for (int i = 0; i < a.dim; ++i) {
    r.d1.push_back(t.sum(a.d1[i]));
    r.d2.push_back(t.sum(a.d2[i]));
  }
  return r;
}

inline Jet mean(const Jet& a) {
  const int len = static_cast<int>(a.tape->values(a.val).size());
  return scale(sum(a), 1.0 / len);
}

inline Jet index(const Jet& a, int i) {
  Tape& t = *a.tape;
  Jet r{a.tape, a.dim, t.index(a.val, i), {}, {}};
  for (int k = 0; k < a.dim; ++k) {
    r.d1.push_back(t.index(a.d1[k], i));
    r.d2.push_back(t.index(a.d2[k], i));
  }
  return r;
}

}  // namespace jet
}  // namespace pinnlab
