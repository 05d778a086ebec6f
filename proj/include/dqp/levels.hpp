#pragma once

#include <cstddef>
#include <vector>

#include "dqp/error.hpp"

namespace dqp {

// Ordered quantile levels tau*_1 < ... < tau*_T, all strictly inside (0,1).
class QuantileLevels {
 public:
  explicit QuantileLevels(std::vector<double> taus) : taus_(std::move(taus)) {
    if (taus_.empty()) throw invalid_argument("QuantileLevels: empty level set");
    for (std::size_t i = 0; i < taus_.size(); ++i) {
      if (!(taus_[i] > 0.0 && taus_[i] < 1.0))
        throw invalid_argument("QuantileLevels: levels must lie strictly inside (0,1)");
      if (i > 0 && !(taus_[i] > taus_[i - 1]))
        throw invalid_argument("QuantileLevels: levels must be strictly increasing");
    }
  }

  std::size_t size() const { return taus_.size(); }
  double operator[](std::size_t t) const { return taus_[t]; }
  const std::vector<double>& values() const { return taus_; }

  auto begin() const { return taus_.begin(); }
  auto end() const { return taus_.end(); }

 private:
  std::vector<double> taus_;
};

}  // namespace dqp
