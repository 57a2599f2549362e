#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cbc/error.hpp"

namespace test_support {

/// Sorted interior knots in (0, 1) with a minimum separation.
inline std::vector<double> random_interior(std::mt19937_64& rng, int min_count = 3, int max_count = 12,
                                           double min_gap = 0.01) {
  std::uniform_int_distribution<int> count(min_count, max_count);
  std::uniform_real_distribution<double> u(min_gap, 1.0 - min_gap);
  const int n = count(rng);
  for (;;) {
    std::vector<double> k(static_cast<std::size_t>(n));
    for (auto& v : k) v = u(rng);
    std::sort(k.begin(), k.end());
    bool ok = true;
    for (std::size_t i = 1; i < k.size(); ++i) ok = ok && (k[i] - k[i - 1] > min_gap);
    if (ok) return k;
  }
}

/// Code of the cbc::Error thrown by fn; records a failure if nothing is thrown.
inline cbc::Errc error_code_of(auto&& fn) {
  try {
    fn();
  } catch (const cbc::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected cbc::Error";
  return cbc::Errc::IoError;
}

}  // namespace test_support
