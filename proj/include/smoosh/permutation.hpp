#pragma once

// Permutations of {0, ..., m-1} stored as image vectors: perm[i] is the image
// of i. Exports and reports print them 1-based.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoosh {

using Permutation = std::vector<int>;

inline Permutation identity_permutation(std::size_t m) {
  Permutation p(m);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

inline bool is_permutation(std::span<const int> p) {
  std::vector<bool> seen(p.size(), false);
  for (int v : p) {
    if (v < 0 || static_cast<std::size_t>(v) >= p.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

inline bool is_identity(std::span<const int> p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != static_cast<int>(i)) return false;
  return true;
}

/// (outer o inner)[i] = outer[inner[i]].
inline Permutation compose(std::span<const int> outer, std::span<const int> inner) {
  if (outer.size() != inner.size()) throw std::invalid_argument("compose: size mismatch");
  Permutation out(inner.size());
  for (std::size_t i = 0; i < inner.size(); ++i) out[i] = outer[inner[i]];
  return out;
}

inline Permutation inverse(std::span<const int> p) {
  Permutation inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = static_cast<int>(i);
  return inv;
}

template <class URBG>
Permutation random_permutation(std::size_t m, URBG& rng) {
  Permutation p = identity_permutation(m);
  // Explicit Fisher-Yates so the draw sequence does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = m; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(p[i - 1], p[pick(rng)]);
  }
  return p;
}

inline std::uint64_t factorial(std::size_t m) {
  std::uint64_t f = 1;
  for (std::size_t k = 2; k <= m; ++k) f *= k;
  return f;
}

/// Lehmer-code rank in [0, m!).
inline std::uint64_t permutation_rank(std::span<const int> p) {
  const std::size_t m = p.size();
  std::uint64_t rank = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::uint64_t smaller = 0;
    for (std::size_t j = i + 1; j < m; ++j)
      if (p[j] < p[i]) ++smaller;
    rank = rank * (m - i) + smaller;
  }
  return rank;
}

inline Permutation permutation_unrank(std::uint64_t rank, std::size_t m) {
  std::vector<std::uint64_t> digits(m, 0);
  for (std::size_t i = m; i-- > 0;) {
    const std::uint64_t base = m - i;
    digits[i] = rank % base;
    rank /= base;
  }
  std::vector<int> pool = identity_permutation(m);
  Permutation p(m);
  for (std::size_t i = 0; i < m; ++i) {
    p[i] = pool[digits[i]];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(digits[i]));
  }
  return p;
}

inline std::string to_string(std::span<const int> p) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << p[i] + 1;
  out << ')';
  return out.str();
}

}  // namespace smoosh
