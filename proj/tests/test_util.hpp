#pragma once

#include <functional>

#include "modeseq/nn.hpp"

namespace modeseq::testutil {

struct PrecisionGuard {
  Precision saved;
  explicit PrecisionGuard(Precision p) : saved(precision()) { set_precision(p); }
  ~PrecisionGuard() { set_precision(saved); }
};

inline Array random_array(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = rng.normal(0.0, scale);
  return a;
}

struct FdReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

// Central-difference check of `grads` against the scalar function `fwd`,
// which must read the (temporarily perturbed) store. max_per_param < 0 checks
// every entry.
inline FdReport fd_check(ParamStore& ps, const std::function<double()>& fwd,
                         const std::vector<Array>& grads, int64_t max_per_param, Rng& rng,
                         double h = 1e-5) {
  FdReport rep;
  for (size_t p = 0; p < ps.entries.size(); ++p) {
    Array& value = ps.entries[p].value;
    int64_t n = value.numel();
    std::vector<int64_t> picks;
    if (max_per_param < 0 || n <= max_per_param) {
      picks.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) picks[static_cast<size_t>(i)] = i;
    } else {
      for (int64_t i = 0; i < max_per_param; ++i) picks.push_back(rng.uniform_int(n));
    }
    for (int64_t j : picks) {
      double saved = value.at(j);
      value.at(j) = saved + h;
      double fp = fwd();
      value.at(j) = saved - h;
      double fm = fwd();
      value.at(j) = saved;
      double fd = (fp - fm) / (2.0 * h);
      double g = grads[p].numel() > 0 ? grads[p].at(j) : 0.0;
      double rel = std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1e-3});
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      rep.checked += 1;
    }
  }
  return rep;
}

}  // namespace modeseq::testutil
