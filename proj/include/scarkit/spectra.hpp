#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "scarkit/errors.hpp"
#include "scarkit/linalg.hpp"
#include "scarkit/sparse_operator.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

inline constexpr Index kDefaultDiagCap = 8000;

/// Ascending energies, orthonormal eigenvectors (columns, constrained basis)
/// and the partition into degenerate groups.
struct EigenSystem {
  VectorXr energies;
  MatrixXc vectors;
  std::vector<std::vector<Index>> groups;
  std::vector<Index> group_of;
  double degeneracy_tol{0.0};

  Index dim() const { return energies.size(); }
  bool nondegenerate(Index i) const { return groups[static_cast<std::size_t>(group_of[i])].size() == 1; }
  double range() const { return dim() ? energies(dim() - 1) - energies(0) : 0.0; }
};

/// Groups consecutive energies closer than tol.
inline void assign_groups(EigenSystem& es, double rel_tol = 1e-8) {
  const Index n = es.dim();
  es.degeneracy_tol = rel_tol * std::max(es.range(), 1e-300);
  es.groups.clear();
  es.group_of.assign(static_cast<std::size_t>(n), 0);
  Index i = 0;
  while (i < n) {
    Index k = i;
    while (k + 1 < n && es.energies(k + 1) - es.energies(k) < es.degeneracy_tol) ++k;
    std::vector<Index> g;
    for (Index q = i; q <= k; ++q) {
      g.push_back(q);
      es.group_of[q] = static_cast<Index>(es.groups.size());
    }
    es.groups.push_back(std::move(g));
    i = k + 1;
  }
}

/// Full dense eigendecomposition of a Hermitian constrained-basis operator.
/// Real symmetric input goes through the real solver.
inline EigenSystem diagonalize(const SparseOperator& H, Index cap = kDefaultDiagCap, double rel_deg_tol = 1e-8) {
  if (H.rows() != H.cols()) throw ValidationError("diagonalize: matrix is not square");
  if (H.rows() > cap)
    throw CapacityError("dimension " + std::to_string(H.rows()) + " exceeds the dense eigensolver cap of " + std::to_string(cap) +
                        "; use trajectory-only workflows for larger systems");
  if (H.hermiticity_defect() > 1e-12) throw ValidationError("diagonalize: operator is not Hermitian");
  EigenSystem es;
  bool real = true;
  for (Index k = 0; k < H.matrix().nonZeros(); ++k)
    if (H.matrix().valuePtr()[k].imag() != 0.0) {
      real = false;
      break;
    }
  if (real) {
    MatrixXr a = MatrixXc(H.matrix()).real();
    es.energies = eigh_inplace(a);
    es.vectors = a.cast<cplx>();
  } else {
    MatrixXc a = MatrixXc(H.matrix());
    es.energies = eigh_inplace(a);
    es.vectors = std::move(a);
  }
  assign_groups(es, rel_deg_tol);
  return es;
}

enum class DegeneracyPolicy { group_average, raw };

/// Replaces each value by its degenerate-group mean.
inline VectorXr group_average(const EigenSystem& es, const VectorXr& v) {
  VectorXr out = v;
  for (const auto& g : es.groups) {
    if (g.size() < 2) continue;
    double s = 0.0;
    for (Index i : g) s += v(i);
    s /= static_cast<double>(g.size());
    for (Index i : g) out(i) = s;
  }
  return out;
}

/// <O>_i = v_i^dagger O v_i for every eigenvector.
inline VectorXr eigen_expectation(const EigenSystem& es, const SparseOperator& O,
                                  DegeneracyPolicy policy = DegeneracyPolicy::group_average) {
  if (O.tag() != BasisTag::constrained || O.rows() != es.vectors.rows())
    throw ConsistencyError("eigen_expectation: operator is not in the eigensystem's constrained basis");
  const Index n = es.dim();
  VectorXr out(n);
  constexpr Index block = 256;
  for (Index c0 = 0; c0 < n; c0 += block) {
    const Index nb = std::min(block, n - c0);
    const MatrixXc ov = O.matrix() * es.vectors.middleCols(c0, nb);
    for (Index q = 0; q < nb; ++q) out(c0 + q) = es.vectors.col(c0 + q).dot(ov.col(q)).real();
  }
  return policy == DegeneracyPolicy::group_average ? group_average(es, out) : out;
}

/// |<state|E_i>|^2. With group_average, each member of a degenerate group
/// carries the group's total weight divided by its size, which is basis
/// independent and keeps the sum at 1.
inline VectorXr overlaps(const EigenSystem& es, const VectorXc& state,
                         DegeneracyPolicy policy = DegeneracyPolicy::group_average) {
  if (state.size() != es.vectors.rows()) throw ConsistencyError("overlaps: state is not in the eigensystem's basis");
  if (std::abs(state.norm() - 1.0) > 1e-8) throw ValidationError("overlaps: state is not normalized");
  const VectorXc a = es.vectors.adjoint() * state;
  const VectorXr p = a.cwiseAbs2();
  return policy == DegeneracyPolicy::group_average ? group_average(es, p) : p;
}

/// Infinite-time average of <psi(t)|O|psi(t)> under H: sum over degenerate
/// groups g of <P_g psi|O|P_g psi>. Coherences inside a group never dephase,
/// so this differs from sum_i |<E_i|psi>|^2 <O>_i whenever psi overlaps a
/// degenerate group (e.g. the zero modes).
inline double diagonal_ensemble(const EigenSystem& es, const VectorXc& state, const SparseOperator& O) {
  if (state.size() != es.vectors.rows() || O.rows() != state.size())
    throw ConsistencyError("diagonal_ensemble: state/operator not in the eigensystem's basis");
  const VectorXc a = es.vectors.adjoint() * state;
  double out = 0.0;
  for (const auto& g : es.groups) {
    VectorXc pg = VectorXc::Zero(state.size());
    for (Index i : g) pg += a(i) * es.vectors.col(i);
    if (pg.squaredNorm() > 0.0) out += O.expectation(pg);
  }
  return out;
}

struct ScarPolicy {
  double floor{1e-8};
  double window_decades{1.0};
  bool nondegenerate_only{true};
  std::optional<std::vector<Index>> explicit_list;
};

/// Scar tagging by overlap prominence. Candidates are nondegenerate
/// eigenstates with overlap above the floor whose log10 overlap lies within
/// window_decades of the largest; the cut is placed at the largest gap of the
/// sorted candidate log-overlaps. Returns ascending indices.
inline std::vector<Index> tag_scars(const VectorXr& overlap, const EigenSystem* es = nullptr, const ScarPolicy& pol = {}) {
  if (overlap.size() == 0) throw ValidationError("tag_scars: empty spectrum");
  if (pol.explicit_list) {
    std::vector<Index> out = *pol.explicit_list;
    for (Index i : out)
      if (i < 0 || i >= overlap.size()) throw ValidationError("tag_scars: explicit index " + std::to_string(i) + " out of range");
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  std::vector<Index> cand;
  double top = -INFINITY;
  for (Index i = 0; i < overlap.size(); ++i) {
    if (!(overlap(i) > pol.floor)) continue;
    if (pol.nondegenerate_only && es && !es->nondegenerate(i)) continue;
    cand.push_back(i);
    top = std::max(top, std::log10(overlap(i)));
  }
  if (cand.empty()) return {};
  std::erase_if(cand, [&](Index i) { return std::log10(overlap(i)) < top - pol.window_decades; });
  std::vector<double> lg;
  for (Index i : cand) lg.push_back(std::log10(overlap(i)));
  std::sort(lg.begin(), lg.end(), std::greater<>());
  if (lg.size() < 2) return cand;
  std::size_t best = 0;
  for (std::size_t k = 0; k + 1 < lg.size(); ++k)
    if (lg[k] - lg[k + 1] > lg[best] - lg[best + 1]) best = k;
  const double cut = lg[best];
  std::vector<Index> out;
  for (Index i : cand)
    if (std::log10(overlap(i)) >= cut) out.push_back(i);
  return out;
}

struct Histogram {
  double lo{0.0};
  double width{1.0};
  std::vector<Index> counts;
  double center(std::size_t b) const { return lo + (static_cast<double>(b) + 0.5) * width; }
};

/// Energy histogram with bins [lo + k w, lo + (k+1) w) laid out symmetrically
/// about the middle of the spectrum. The top edge is included in the last bin.
inline Histogram density_of_states(const VectorXr& energies, double width) {
  if (!(width > 0.0)) throw ValidationError("density_of_states: bin width must be positive");
  Histogram h;
  h.width = width;
  if (energies.size() == 0) return h;
  const double e0 = energies.minCoeff();
  const double range = energies.maxCoeff() - e0;
  const std::size_t nb = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(range / width - 1e-12)));
  h.lo = e0 + 0.5 * range - 0.5 * static_cast<double>(nb) * width;
  h.counts.assign(nb, 0);
  for (Index i = 0; i < energies.size(); ++i) {
    const double x = std::floor((energies(i) - h.lo) / width);
    const auto b = static_cast<std::size_t>(std::max(0.0, x));
    h.counts[std::min(b, nb - 1)]++;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Binary eigendata cache: magic, version, dim, energies, vectors (row-major,
// little-endian 64-bit floats; complex entries as re, im pairs).

inline constexpr char kCacheMagic[8] = {'S', 'C', 'R', 'K', 'E', 'I', 'G', '\0'};
inline constexpr std::uint32_t kCacheVersion = 1;

inline void save_eigensystem(const EigenSystem& es, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write eigendata cache " + tmp);
    const std::uint64_t dim = static_cast<std::uint64_t>(es.dim());
    os.write(kCacheMagic, sizeof kCacheMagic);
    os.write(reinterpret_cast<const char*>(&kCacheVersion), sizeof kCacheVersion);
    os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    os.write(reinterpret_cast<const char*>(es.energies.data()), static_cast<std::streamsize>(dim * sizeof(double)));
    std::vector<double> row(2 * dim);
    for (Index r = 0; r < es.vectors.rows(); ++r) {
      for (Index c = 0; c < es.vectors.cols(); ++c) {
        row[2 * c] = es.vectors(r, c).real();
        row[2 * c + 1] = es.vectors(r, c).imag();
      }
      os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!os) throw IoError("short write to eigendata cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/// Returns nullopt when the file is absent or not a valid cache of this version.
inline std::optional<EigenSystem> load_eigensystem(const std::filesystem::path& path, double rel_deg_tol = 1e-8) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t dim = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&dim), sizeof dim);
  if (!is || std::memcmp(magic, kCacheMagic, sizeof magic) != 0 || version != kCacheVersion) return std::nullopt;
  EigenSystem es;
  es.energies.resize(static_cast<Index>(dim));
  is.read(reinterpret_cast<char*>(es.energies.data()), static_cast<std::streamsize>(dim * sizeof(double)));
  es.vectors.resize(static_cast<Index>(dim), static_cast<Index>(dim));
  std::vector<double> row(2 * dim);
  for (Index r = 0; r < static_cast<Index>(dim); ++r) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    for (Index c = 0; c < static_cast<Index>(dim); ++c) es.vectors(r, c) = {row[2 * c], row[2 * c + 1]};
  }
  if (!is) return std::nullopt;
  assign_groups(es, rel_deg_tol);
  return es;
}

}  // namespace scarkit
