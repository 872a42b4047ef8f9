#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace gradcheck {

// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Central differences of f with respect to the listed entries of x.
inline std::vector<double> numeric(const std::function<double()>& f, double* x, const std::vector<long>& indices,
                                   double step = 1e-5) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (long i : indices) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

struct Probe {
  double central = 0.0;
  bool smooth = true;
};

// Central differences plus a kink test: the forward and backward one-sided
// slopes must agree, otherwise the step straddles a non-differentiable point.
inline std::vector<Probe> probe(const std::function<double()>& f, double* x, const std::vector<long>& indices,
                                double step = 1e-5, double tol = 1e-4) {
  std::vector<Probe> out;
  out.reserve(indices.size());
  const double base = f();
  for (long i : indices) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f();
    x[i] = saved - step;
    const double down = f();
    x[i] = saved;
    const double fwd = (up - base) / step;
    const double bwd = (base - down) / step;
    Probe p;
    p.central = (up - down) / (2.0 * step);
    p.smooth = std::abs(fwd - bwd) <= tol * std::max(1.0, std::abs(p.central));
    out.push_back(p);
  }
  return out;
}

}  // namespace gradcheck
