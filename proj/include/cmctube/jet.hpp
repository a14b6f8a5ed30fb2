#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cmctube/common.hpp"

namespace cmctube {

// Dense truncated Taylor expansion (order <= 4) in 1..3 variables.
// Coefficients are stored as Taylor coefficients (partial derivative / alpha!)
// so that multiplication is plain convolution over multi-indices. Charts are
// written once against this type and every derivative the geometry needs
// falls out of the same evaluation.
class Jet {
 public:
  static constexpr int kOrder = 4;

  struct Tables {
    std::vector<std::array<int, 3>> idx;           // multi-indices
    std::vector<int> degree;                        // total degree per entry
    std::vector<std::array<int, 3>> prod;           // (i, j, target)
    std::vector<std::array<int, 3>> shift;          // deriv: (src, var, dst)
    std::vector<double> factorial_alpha;            // alpha!
    int size = 0;

    explicit Tables(int nv) {
      std::array<int, 3> a{0, 0, 0};
      // graded enumeration
      for (int deg = 0; deg <= kOrder; ++deg) {
        enumerate(nv, deg, 0, a);
      }
      size = int(idx.size());
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          if (degree[i] + degree[j] > kOrder) continue;
          std::array<int, 3> s{idx[i][0] + idx[j][0], idx[i][1] + idx[j][1],
                               idx[i][2] + idx[j][2]};
          prod.push_back({i, j, find(s)});
        }
      }
      for (int i = 0; i < size; ++i) {
        for (int v = 0; v < nv; ++v) {
          std::array<int, 3> s = idx[i];
          if (s[v] == 0) continue;
          s[v] -= 1;
          // d/dx_v: coeff_dst = (idx[i][v]) * coeff_src ... in Taylor
          // coefficient normalization: g_beta = (beta_v+1) f_{beta+e_v}
          shift.push_back({i, v, find(s)});
        }
      }
      factorial_alpha.resize(size);
      for (int i = 0; i < size; ++i) {
        double f = 1;
        for (int v = 0; v < 3; ++v)
          for (int q = 2; q <= idx[i][v]; ++q) f *= q;
        factorial_alpha[i] = f;
      }
    }

    int find(const std::array<int, 3>& a) const {
      for (int i = 0; i < size; ++i)
        if (idx[i] == a) return i;
      return -1;
    }

   private:
    void enumerate(int nv, int deg, int var, std::array<int, 3>& a) {
      if (var == nv - 1) {
        int used = 0;
        for (int v = 0; v < var; ++v) used += a[v];
        if (used > deg) return;
        a[var] = deg - used;
        for (int v = nv; v < 3; ++v) a[v] = 0;
        idx.push_back(a);
        degree.push_back(deg);
        return;
      }
      int used = 0;
      for (int v = 0; v < var; ++v) used += a[v];
      for (int q = 0; q + used <= deg; ++q) {
        a[var] = q;
        enumerate(nv, deg, var + 1, a);
      }
    }
  };

  static const Tables& tables(int nv) {
    static Tables t1(1), t2(2), t3(3);
    switch (nv) {
      case 1: return t1;
      case 2: return t2;
      default: return t3;
    }
  }

  Jet() : nv_(1), c_(VectorXd::Zero(tables(1).size)) {}
  explicit Jet(int nv, double value = 0.0)
      : nv_(nv), c_(VectorXd::Zero(tables(nv).size)) {
    c_(0) = value;
  }

  static Jet variable(int nv, double value, int var) {
    Jet j(nv, value);
    std::array<int, 3> e{0, 0, 0};
    e[var] = 1;
    j.c_(tables(nv).find(e)) = 1.0;
    return j;
  }
  static Jet constant(int nv, double value) { return Jet(nv, value); }

  int nvars() const { return nv_; }
  double value() const { return c_(0); }
  const VectorXd& coeffs() const { return c_; }
  VectorXd& coeffs() { return c_; }

  // partial derivative value d^alpha f
  double partial(std::array<int, 3> alpha) const {
    const Tables& t = tables(nv_);
    int p = t.find(alpha);
    return c_(p) * t.factorial_alpha[p];
  }
  double partial(int a, int b = 0, int c = 0) const {
    return partial({a, b, c});
  }

  Jet operator+(const Jet& o) const {
    Jet r = *this;
    r.c_ += o.c_;
    return r;
  }
  Jet operator-(const Jet& o) const {
    Jet r = *this;
    r.c_ -= o.c_;
    return r;
  }
  Jet operator-() const {
    Jet r = *this;
    r.c_ = -r.c_;
    return r;
  }
  Jet operator+(double s) const {
    Jet r = *this;
    r.c_(0) += s;
    return r;
  }
  Jet operator-(double s) const { return *this + (-s); }
  Jet operator*(double s) const {
    Jet r = *this;
    r.c_ *= s;
    return r;
  }
  Jet operator/(double s) const { return *this * (1.0 / s); }
  friend Jet operator*(double s, const Jet& j) { return j * s; }
  friend Jet operator+(double s, const Jet& j) { return j + s; }
  friend Jet operator-(double s, const Jet& j) { return (-j) + s; }

  Jet operator*(const Jet& o) const {
    const Tables& t = tables(nv_);
    Jet r(nv_);
    const double* a = c_.data();
    const double* b = o.c_.data();
    double* out = r.c_.data();
    for (const auto& p : t.prod) out[p[2]] += a[p[0]] * b[p[1]];
    return r;
  }

  // Composition with a univariate analytic function given by its derivatives
  // at this->value().
  Jet compose(const std::array<double, kOrder + 1>& df) const {
    Jet h = *this;
    h.c_(0) = 0.0;
    Jet r(nv_, df[0]);
    Jet hp = h;
    double fact = 1;
    for (int p = 1; p <= kOrder; ++p) {
      fact *= p;
      r = r + hp * (df[p] / fact);
      if (p < kOrder) hp = hp * h;
    }
    return r;
  }

  Jet deriv(int var) const {
    const Tables& t = tables(nv_);
    Jet r(nv_);
    for (const auto& s : t.shift) {
      if (s[1] != var) continue;
      r.c_(s[2]) += c_(s[0]) * t.idx[s[0]][var];
    }
    return r;
  }

 private:
  int nv_;
  VectorXd c_;
};

inline Jet sin(const Jet& j) {
  double v = j.value();
  double s = std::sin(v), c = std::cos(v);
  return j.compose({s, c, -s, -c, s});
}
inline Jet cos(const Jet& j) {
  double v = j.value();
  double s = std::sin(v), c = std::cos(v);
  return j.compose({c, -s, -c, s, c});
}
inline Jet exp(const Jet& j) {
  double e = std::exp(j.value());
  return j.compose({e, e, e, e, e});
}
inline Jet sqrt(const Jet& j) {
  double v = j.value();
  double r = std::sqrt(v);
  return j.compose({r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v),
                    -0.9375 / (r * v * v * v)});
}
inline Jet reciprocal(const Jet& j) {
  double v = j.value();
  double iv = 1.0 / v;
  double iv2 = iv * iv;
  return j.compose({iv, -iv2, 2 * iv2 * iv, -6 * iv2 * iv2, 24 * iv2 * iv2 * iv});
}
inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
inline Jet operator/(double s, const Jet& b) { return reciprocal(b) * s; }

using JetVec = std::vector<Jet>;  // ambient coordinates as jets

inline Jet dot(const JetVec& a, const JetVec& b) {
  Jet r(a[0].nvars());
  for (size_t i = 0; i < a.size(); ++i) r = r + a[i] * b[i];
  return r;
}

}  // namespace cmctube
