#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ptrunc/data.hpp"

namespace ptrunc::testing {

/// Small random LTRC dataset with the requested proxy dimensions. Entry times
/// lie on a coarse grid so ties occur.
inline Dataset random_dataset(std::size_t n, std::uint64_t seed, std::size_t d1 = 1, std::size_t d2 = 1,
                              std::size_t dz = 1, double censor_prob = 0.3, std::size_t du = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<ObservedRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    ObservedRecord r;
    r.q = std::floor(unif(rng) * 20.0) / 10.0;
    r.x = r.q + 0.05 + 3.0 * unif(rng);
    r.delta = unif(rng) < censor_prob ? 0 : 1;
    for (std::size_t j = 0; j < d1; ++j) r.w1.push_back(norm(rng));
    for (std::size_t j = 0; j < d2; ++j) r.w2.push_back(r.w1.empty() ? norm(rng) : 0.5 * r.w1[0] + norm(rng));
    for (std::size_t j = 0; j < dz; ++j) r.z.push_back(unif(rng));
    for (std::size_t j = 0; j < du; ++j) r.u.push_back(unif(rng));
    recs.push_back(std::move(r));
  }
  return Dataset(std::move(recs));
}

inline ObservedRecord rec(double q, double x, int delta) {
  ObservedRecord r;
  r.q = q;
  r.x = x;
  r.delta = delta;
  return r;
}

}  // namespace ptrunc::testing
