#pragma once

// Grid functions on the interval (0, L) with homogeneous Neumann closure.
//
// Cells are centred at x_i = (i + 1/2) h. The reflected ghost values
// z_{-1} = z_0 and z_n = z_{n-1} make the discrete Laplacian symmetric, and it
// annihilates exactly the constants, so its inverse on zero-mean data is a true
// self-adjoint operator N.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chlimit/error.hpp"

namespace chlimit {

struct Grid {
  double length = 1.0;
  std::size_t cells = 64;

  Grid() = default;
  Grid(double length_, std::size_t cells_) : length(length_), cells(cells_) {
    if (!(length > 0.0)) throw ParameterError("grid length must be positive");
    if (cells < 4) throw ParameterError("grid needs at least 4 cells");
  }

  double spacing() const { return length / static_cast<double>(cells); }
  double center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * spacing(); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.length == b.length && a.cells == b.cells;
  }
};

class Field {
 public:
  Field() = default;
  explicit Field(const Grid& grid, double value = 0.0) : grid_(grid), values_(grid.cells, value) {}
  Field(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.cells) {
      std::ostringstream msg;
      msg << "field has " << values_.size() << " values for a grid of " << grid_.cells << " cells";
      throw PreconditionError(msg.str());
    }
  }

  /// Samples `fn` at the cell centres.
  static Field sample(const Grid& grid, const std::function<double(double)>& fn) {
    Field out(grid);
    for (std::size_t i = 0; i < grid.cells; ++i) out.values_[i] = fn(grid.center(i));
    return out;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  Field& operator+=(const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  Field& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }
  Field& operator+=(double a) {
    for (double& v : values_) v += a;
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }
  friend Field operator*(Field a, double s) { return a *= s; }

 private:
  void check_same(const Field& o) const {
    if (!(o.grid_ == grid_)) throw PreconditionError("fields live on different grids");
  }

  Grid grid_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------

/// Thomas algorithm for a tridiagonal system; `lower[0]` and `upper[n-1]` are unused.
inline std::vector<double> solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                                             std::span<const double> upper, std::span<const double> rhs) {
  const std::size_t n = diag.size();
  std::vector<double> c(n), d(n), x(n);
  double denom = diag[0];
  if (denom == 0.0) throw NumericalError("tridiagonal solve: zero pivot in row 0");
  c[0] = n > 1 ? upper[0] / denom : 0.0;
  d[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - lower[i] * c[i - 1];
    if (denom == 0.0) throw NumericalError("tridiagonal solve: zero pivot");
    c[i] = i + 1 < n ? upper[i] / denom : 0.0;
    d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
  }
  x[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

inline double mean(const Field& z) {
  if (z.size() == 0) return 0.0;
  return std::accumulate(z.values().begin(), z.values().end(), 0.0) / static_cast<double>(z.size());
}

/// z - m(z)
inline Field zero_mean_part(const Field& z) {
  Field out = z;
  out += -mean(z);
  return out;
}

/// Discrete inner product h * sum(a_i b_i).
inline double inner(const Field& a, const Field& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return a.grid().spacing() * s;
}

/// Second difference with reflected ghost cells.
inline Field laplacian_neumann(const Field& z) {
  const std::size_t n = z.size();
  const double h = z.grid().spacing();
  const double inv_h2 = 1.0 / (h * h);
  Field out(z.grid());
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i == 0 ? z[0] : z[i - 1];
    const double right = i + 1 == n ? z[n - 1] : z[i + 1];
    out[i] = (left - 2.0 * z[i] + right) * inv_h2;
  }
  return out;
}

/// Squared L2 norm of the forward-difference gradient on interior faces.
inline double gradient_energy(const Field& z) {
  const double h = z.grid().spacing();
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < z.size(); ++i) {
    const double d = (z[i + 1] - z[i]) / h;
    s += d * d;
  }
  return h * s;
}

/// Factorized inverse of -Delta_h on zero-mean fields. The rank-deficient system
/// is pinned by fixing the first value; the mean is then shifted out. The
/// factorization depends only on the grid and can be shared across threads.
class NeumannInverse {
 public:
  explicit NeumannInverse(const Grid& grid) : grid_(grid) {
    const std::size_t m = grid.cells - 1;  // unknowns v_1 .. v_{n-1}
    const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    c_.resize(m);
    inv_denom_.resize(m);
    lower_ = -inv_h2;
    // rows 1..n-2: (-v_{i-1} + 2 v_i - v_{i+1})/h^2, last row (-v_{n-2} + v_{n-1})/h^2
    double prev_c = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double diag = (k + 1 == m ? 1.0 : 2.0) * inv_h2;
      const double upper = k + 1 < m ? -inv_h2 : 0.0;
      const double denom = diag - (k == 0 ? 0.0 : lower_ * prev_c);
      inv_denom_[k] = 1.0 / denom;
      c_[k] = upper * inv_denom_[k];
      prev_c = c_[k];
    }
  }

  const Grid& grid() const { return grid_; }

  /// N applied to w - m(w).
  Field apply_projected(const Field& w) const {
    const std::size_t m = grid_.cells - 1;
    const double wm = mean(w);
    std::vector<double> d(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double rhs = w[k + 1] - wm;
      d[k] = (rhs - (k == 0 ? 0.0 : lower_ * d[k - 1])) * inv_denom_[k];
    }
    Field v(grid_);
    v[m] = d[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) v[k + 1] = d[k] - c_[k] * v[k + 2];
    v[0] = 0.0;
    v += -mean(v);
    return v;
  }

 private:
  Grid grid_;
  double lower_ = 0.0;
  std::vector<double> c_;
  std::vector<double> inv_denom_;
};

/// Zero-mean solution of -Delta_h v = w. Requires |m(w)| <= 1e-10 * |w|_inf.
inline Field inv_neumann_laplacian(const Field& w) {
  const double wm = mean(w);
  if (std::abs(wm) > 1e-10 * w.max_abs()) {
    std::ostringstream msg;
    msg << "inv_neumann_laplacian: input mean " << wm << " exceeds 1e-10 * |w|_inf = " << 1e-10 * w.max_abs()
        << "; project onto zero mean first";
    throw PreconditionError(msg.str());
  }
  return NeumannInverse(w.grid()).apply_projected(w);
}

inline double norm_H(const Field& z) { return std::sqrt(inner(z, z)); }

/// Full H^1 norm: |z|_H^2 + |grad z|^2.
inline double norm_V(const Field& z) { return std::sqrt(inner(z, z) + gradient_energy(z)); }

/// Dual norm |grad N(z - m(z))|^2 + m(z)^2; the gradient term is computed from
/// face differences and cross-checked against <z - m(z), N(z - m(z))>.
struct VstarParts {
  double gradient_term = 0.0;  // |grad N(z - m)|^2
  double pairing_term = 0.0;   // <z - m, N(z - m)>
  double mean_value = 0.0;
  double norm() const { return std::sqrt(gradient_term + mean_value * mean_value); }
};

inline VstarParts vstar_parts(const Field& z, const NeumannInverse& inverse) {
  VstarParts out;
  out.mean_value = mean(z);
  const Field v = inverse.apply_projected(z);
  out.gradient_term = gradient_energy(v);
  out.pairing_term = inner(zero_mean_part(z), v);
  return out;
}

inline double norm_Vstar(const Field& z, const NeumannInverse& inverse) {
  return vstar_parts(z, inverse).norm();
}

inline double norm_Vstar(const Field& z) { return norm_Vstar(z, NeumannInverse(z.grid())); }

/// Smallest nonzero eigenvalue of -Delta_h by power iteration on N.
inline double neumann_spectral_gap(const Grid& grid) {
  const NeumannInverse inverse(grid);
  Field v = Field::sample(grid, [&](double x) { return x - 0.5 * grid.length; });
  v = zero_mean_part(v);
  double rho = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    v *= 1.0 / norm_H(v);
    Field w = inverse.apply_projected(v);
    const double next = inner(v, w);
    v = std::move(w);
    if (std::abs(next - rho) <= 1e-15 * std::abs(next)) {
      rho = next;
      break;
    }
    rho = next;
  }
  return 1.0 / rho;
}

/// Discrete Poincare-Wirtinger constant: |z|_V^2 <= c_P |grad z|^2 for zero-mean z.
inline double poincare_constant(const Grid& grid) { return 1.0 + 1.0 / neumann_spectral_gap(grid); }

// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with columns `x,value`, one row per cell centre.
inline void write_field_csv(const Field& z, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "x,value\n";
  for (std::size_t i = 0; i < z.size(); ++i) {
    out << format_double(z.grid().center(i)) << ',' << format_double(z[i]) << '\n';
  }
}

/// Reads a `x,value` CSV; the row count must match the grid.
inline Field read_field_csv(const Grid& grid, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open field csv " + path);
  std::string line;
  std::vector<double> values;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.find_first_of("0123456789") != 0 && line[0] != '-' && line[0] != '.') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'x,value'");
    }
    try {
      values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  if (values.size() != grid.cells) {
    std::ostringstream msg;
    msg << path << ": " << values.size() << " rows for a grid of " << grid.cells << " cells";
    throw DataError(msg.str());
  }
  return Field(grid, std::move(values));
}

}  // namespace chlimit
