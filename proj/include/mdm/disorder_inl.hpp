#pragma once

#include <cmath>
#include <random>

namespace mdm {

namespace detail {
template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;
}  // namespace detail

template <class Rng>
double WeightDistribution::sample(Rng& rng) const {
  return std::visit(
      detail::Overloaded{
          [&](const Gaussian& d) { return std::normal_distribution<double>(d.mean, d.stddev)(rng); },
          [&](const Uniform& d) { return d.lo == d.hi ? d.lo : std::uniform_real_distribution<double>(d.lo, d.hi)(rng); },
          [&](const TwoPoint& d) { return std::bernoulli_distribution(d.p)(rng) ? d.v0 : d.v1; },
          [&](const Constant& d) { return d.value; },
          [&](const SymmetricPareto& d) {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
            // 1 - U lies in (0, 1]
            return sign * d.scale * std::pow(1.0 - unit(rng), -1.0 / d.alpha);
          },
      },
      law_);
}

}  // namespace mdm
