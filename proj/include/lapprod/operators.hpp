#pragma once

#include <Eigen/Sparse>

#include <cstddef>
#include <memory>

#include "lapprod/domains.hpp"

namespace lapprod {

/// Discrete −Δ as a symmetric stiffness matrix K together with the diagonal
/// mass M (the grid weights). K carries the cell volume, so the discrete
/// eigenproblem is K e = λ² M e and ⟨f, K g⟩ is the quadrature of ∫∇f·∇g.
struct SparseOperator {
  std::shared_ptr<const Grid> grid;
  Eigen::SparseMatrix<double> stiffness;
  Field mass;
  Boundary bc = Boundary::dirichlet;

  std::size_t size() const { return static_cast<std::size_t>(mass.size()); }
};

/// Second-order (2d+1)-point stencil. Dirichlet rows drop boundary and notch
/// neighbours, periodic rows wrap.
SparseOperator assemble_laplacian(std::shared_ptr<const Grid> grid);

/// K f.
Field apply(const SparseOperator& op, const Field& f);

/// M⁻¹ K f, the discrete −ρ⁻¹Δ; self-adjoint in the mass inner product.
Field apply_laplacian(const SparseOperator& op, const Field& f);

struct SolveOptions {
  double tolerance = 1e-10;
  /// 0 means 10 × unknowns.
  std::size_t max_iterations = 0;
};

struct SolveStats {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (shift·M + K) u = M f by Jacobi-preconditioned conjugate gradients,
/// i.e. u = (shift − Δ)⁻¹ f. With shift = 0 on a periodic operator, f must
/// have zero mass-weighted mean and the mean-zero solution is returned.
/// Throws SingularSystem or ConvergenceError.
Field solve_shifted(const SparseOperator& op, const Field& f, double shift,
                    const SolveOptions& options = {}, SolveStats* stats = nullptr);

}  // namespace lapprod
