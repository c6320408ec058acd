#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "lapprod/domains.hpp"
#include "lapprod/operators.hpp"

namespace lapprod {

enum class BasisSource { numeric, analytic, fitted };
enum class EigenMethod { dense, iterative };

std::string to_string(BasisSource source);
std::string to_string(EigenMethod method);

/// Mass-orthonormal eigenbasis −Δ e_k = λ_k² e_k, frequencies nondecreasing.
///
/// Mode indices follow the boundary condition: periodic bases start at 0 with
/// the constant mode (λ_0 = 0), Dirichlet bases start at 1. Column c of
/// `modes` holds the mode with index origin + c.
struct EigenBasis {
  std::shared_ptr<const Grid> grid;
  std::shared_ptr<const SparseOperator> op;   // null for bases built without an operator
  Eigen::VectorXd freqs;
  Eigen::MatrixXd modes;
  Eigen::VectorXd residuals;
  BasisSource source = BasisSource::numeric;
  bool full_spectrum = false;
  int origin = 1;
  /// Per-mode ordering metadata: the lattice label for analytic modes, the
  /// cluster id for numeric modes.
  std::vector<std::string> labels;

  Eigen::Index size() const { return modes.cols(); }
  int first_index() const { return origin; }
  int max_index() const { return origin + static_cast<int>(modes.cols()) - 1; }
  bool periodic() const { return origin == 0; }
  /// Column of a mode index; throws InvalidArgument when out of range.
  Eigen::Index column(int index) const;
  double frequency(int index) const { return freqs[column(index)]; }
  auto mode(int index) const { return modes.col(column(index)); }
};

/// Lowest K eigenpairs of K e = λ² M e. The dense method needs at most 4096
/// unknowns. Degenerate clusters are re-orthonormalised, signed and ordered
/// deterministically.
EigenBasis compute_basis(std::shared_ptr<const SparseOperator> op, Eigen::Index K,
                         EigenMethod method);

/// Continuum eigenfunctions sampled at the grid unknowns (interval,
/// rectangle, torus). `op` is optional and only recorded.
EigenBasis analytic_basis(std::shared_ptr<const Grid> grid, Eigen::Index K,
                          std::shared_ptr<const SparseOperator> op = nullptr);
EigenBasis analytic_basis(const DomainSpec& spec, Eigen::Index K);

/// Number of continuum modes analytic_basis can represent on this grid
/// without aliasing.
Eigen::Index analytic_mode_capacity(const Grid& grid);

struct WeylFit {
  double scale = 0.0;          // c in n ≈ c λ_n^d
  double dimension = 0.0;      // fitted d
  int first_index = 0;
  int last_index = 0;
};

/// Least-squares fit of log n against log λ_n over the upper half of the
/// resolved index range. Needs at least 30 resolved modes.
WeylFit weyl_fit(const EigenBasis& basis);

/// Largest mode index with λ·max(h) ≤ 0.5 for numeric bases; analytic bases
/// are exempt and report max_index(). Returns origin - 1 when nothing is
/// resolved.
int resolution_limit(const EigenBasis& basis);

struct BasisDiagnostics {
  double gram_defect = 0.0;     // max |G - I| over the mass Gram matrix
  double max_residual = 0.0;
};

BasisDiagnostics diagnose(const EigenBasis& basis);

/// Mass-norm residual ‖K e − λ² M e‖_{M⁻¹} / λ² of every column (divided by 1
/// for λ = 0).
Eigen::VectorXd mode_residuals(const SparseOperator& op, const Eigen::VectorXd& freqs,
                               const Eigen::MatrixXd& modes);

/// Index ranges [first, last] of degenerate clusters (relative gap < rel_gap
/// in λ²).
std::vector<std::pair<int, int>> degenerate_clusters(const EigenBasis& basis,
                                                     double rel_gap = 1e-8);

/// Largest principal angle between the column spans of two mass-orthonormal
/// blocks.
double subspace_angle(const Grid& grid, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace lapprod
