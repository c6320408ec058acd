#pragma once

#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "lapprod/domains.hpp"
#include "lapprod/operators.hpp"
#include "lapprod/spectra.hpp"

namespace lapprod::test {

inline std::shared_ptr<const Grid> grid_of(const DomainSpec& spec) {
  return std::make_shared<const Grid>(build_grid(spec));
}

inline std::shared_ptr<const SparseOperator> op_of(const DomainSpec& spec) {
  return std::make_shared<const SparseOperator>(assemble_laplacian(grid_of(spec)));
}

/// Numeric basis; K = 0 asks for the full spectrum.
inline std::shared_ptr<const EigenBasis> numeric(const DomainSpec& spec, Eigen::Index K = 0,
                                                 EigenMethod method = EigenMethod::dense) {
  auto op = op_of(spec);
  if (K == 0) K = static_cast<Eigen::Index>(op->size());
  return std::make_shared<const EigenBasis>(compute_basis(op, K, method));
}

/// Analytic basis; K = 0 asks for every alias-free mode.
inline std::shared_ptr<const EigenBasis> analytic(const DomainSpec& spec, Eigen::Index K = 0) {
  auto op = op_of(spec);
  if (K == 0) K = analytic_mode_capacity(*op->grid);
  return std::make_shared<const EigenBasis>(analytic_basis(op->grid, K, op));
}

inline Field random_field(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Field f(static_cast<Eigen::Index>(n));
  for (auto& v : f) v = g(rng);
  return f;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace lapprod::test
