#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chlimit/error.hpp"

namespace chlimit {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // exp of the log-space intercept: value ~ intercept * eps^slope
  std::size_t used = 0;
  std::vector<std::string> warnings;
};

/// Least squares on (log eps, log value). Nonpositive values are skipped with a
/// warning; fewer than two usable pairs is an error.
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs) {
  RateFit fit;
  std::vector<double> xs, ys;
  for (const auto& [eps, value] : pairs) {
    if (!(value > 0.0) || !(eps > 0.0) || !std::isfinite(value)) {
      std::ostringstream msg;
      msg << "skipped datum (eps=" << eps << ", value=" << value << ")";
      fit.warnings.push_back(msg.str());
      continue;
    }
    xs.push_back(std::log(eps));
    ys.push_back(std::log(value));
  }
  fit.used = xs.size();
  if (xs.size() < 2) throw NumericalError("fit_rate: fewer than two usable pairs");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw NumericalError("fit_rate: all eps values coincide");
  fit.slope = sxy / sxx;
  fit.intercept = std::exp(my - fit.slope * mx);
  return fit;
}

}  // namespace chlimit
