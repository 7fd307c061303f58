#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rollout {

// Exact rational arithmetic (GMP). Every finite double is a rational, so
// converting through mpq_class loses nothing; all estimator coefficients and
// enumeration oracles can therefore run exactly and convert once at the end.
using Rat = mpq_class;

inline Rat rat_of(double x) {
  Rat r;
  mpq_set_d(r.get_mpq_t(), x);
  return r;
}

inline Rat rat_of(long num, long den = 1) {
  Rat r(num, den);
  r.canonicalize();
  return r;
}

inline double to_double(const Rat& r) { return r.get_d(); }

inline mpz_class binomial_exact(unsigned long n, unsigned long k) {
  mpz_class out;
  mpz_bin_uiui(out.get_mpz_t(), n, k);
  return out;
}

// [k/m]_r = prod_{i<r} (k-i)/(m-i): probability that r fixed units are all
// selected when a uniform k-subset of m units is drawn. Zero when r > k.
inline Rat bracket_exact(long k, long m, long r) {
  if (r < 0 || r > m || k > m) throw std::invalid_argument("bracket: need 0 <= r <= m and k <= m");
  if (r > k) return Rat(0);
  Rat out(1);
  for (long i = 0; i < r; ++i) out *= rat_of(k - i, m - i);
  return out;
}

inline double bracket(long k, long m, long r) { return to_double(bracket_exact(k, m, r)); }

}  // namespace rollout
