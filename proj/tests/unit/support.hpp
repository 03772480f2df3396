#pragma once

#include "scarkit/operators.hpp"

namespace scarkit::test {

inline ModelSpec spin_chain(int n, double j = 1.0, Boundary b = Boundary::periodic, double c = 200.0) {
  ModelSpec s;
  s.family = Family::spin_chain_blockade;
  s.j = Spin::from_double(j);
  s.n_sites = n;
  s.boundary = b;
  s.c = c;
  return s;
}

inline ModelSpec hd_pxp(int physical_sites, double j = 1.0) {
  ModelSpec s = spin_chain(physical_sites, j);
  s.family = Family::hd_pxp;
  return s;
}

// Brute-force count of product states without a forbidden pair on any bond.
inline Index brute_force_dim(const SiteModel& m) {
  Index n = 1;
  for (int k = 0; k < m.n_sites; ++k) n *= m.d;
  Index count = 0;
  std::vector<int> digits(static_cast<std::size_t>(m.n_sites));
  for (Index idx = 0; idx < n; ++idx) {
    Index r = idx;
    for (int k = m.n_sites - 1; k >= 0; --k) {
      digits[static_cast<std::size_t>(k)] = static_cast<int>(r % m.d);
      r /= m.d;
    }
    bool ok = true;
    for (const auto& b : m.bonds)
      if (m.is_forbidden(digits[static_cast<std::size_t>(b[0])], digits[static_cast<std::size_t>(b[1])])) ok = false;
    count += ok;
  }
  return count;
}

}  // namespace scarkit::test
