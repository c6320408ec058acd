#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lapprod/products.hpp"

namespace lapprod {

inline constexpr std::size_t kDefaultProductEntryCap = std::size_t{1} << 27;

/// Weighted products of the modes 1..n. Column (i, j), i ≤ j, holds
/// sqrt(w) ∘ e_i ∘ e_j, so Euclidean inner products of columns are mass inner
/// products. Columns are in lexicographic (i, j) order.
struct ProductMatrix {
  std::shared_ptr<const EigenBasis> basis;
  int n = 0;
  std::vector<std::pair<int, int>> pairs;
  Eigen::MatrixXd columns;

  std::size_t pair_count() const { return pairs.size(); }
  /// Column position of the pair (i, j) in either order.
  std::size_t column_of(int i, int j) const;
  /// A matrix restricted to the pairs with both indices ≤ m.
  ProductMatrix restrict_to(int m) const;
};

struct ProductOptions {
  bool override_resolution_limit = false;
  std::size_t max_entries = kDefaultProductEntryCap;
  unsigned threads = 0;
};

/// Every pair (i, j) with 1 ≤ i ≤ j ≤ n. On periodic bases the constant mode
/// is not part of the product space.
std::vector<std::pair<int, int>> product_pairs(int n);

ProductMatrix assemble_products(std::shared_ptr<const EigenBasis> basis, int n,
                                const ProductOptions& options = {});

enum class FitMode { spectral, optimal };

std::string to_string(FitMode mode);
FitMode parse_fit_mode(const std::string& text);

struct FitReport {
  int n = 0;
  std::size_t pair_count = 0;
  double epsilon = 0.0;
  FitMode mode = FitMode::spectral;
  NormKind norm = NormKind::L2;
  bool reached = false;   // false: ε unreachable with the available modes
  int rank = 0;
  double max_residual = 0.0;
  int nu = -1;   // spectral mode only
  /// Mass-orthonormal nodal basis of the fitted subspace (N × rank).
  std::shared_ptr<const EigenBasis> fitted;
  std::vector<double> singular_values;   // optimal mode only
};

struct FitOptions {
  bool override_resolution_limit = false;
  unsigned threads = 0;
};

/// Smallest ν with max over pairs ‖R_ν(e_i e_j)‖ ≤ ε. L2 is searched by
/// bisection (the remainder is monotone in ν), Linf by a linear scan.
FitReport fit_spectral(std::shared_ptr<const EigenBasis> basis, int n, double epsilon,
                       NormKind norm = NormKind::L2, const FitOptions& options = {});

/// Same search over an already assembled product matrix.
FitReport fit_spectral(const ProductMatrix& products, double epsilon,
                       NormKind norm = NormKind::L2, unsigned threads = 0);

/// Smallest r such that projecting onto the top r left singular vectors
/// leaves every column with L² residual ≤ ε.
FitReport fit_optimal(const ProductMatrix& products, double epsilon);

/// Direct per-column residuals of the products against a fitted basis.
Eigen::VectorXd fit_residuals(const ProductMatrix& products, const EigenBasis& fitted,
                              NormKind norm = NormKind::L2);

struct GrowthSlope {
  FitMode mode = FitMode::optimal;
  double fixed = 0.0;   // the ε (for slopes in n) or the n (for slopes in 1/ε)
  double slope = 0.0;
  std::size_t points = 0;
};

struct GrowthStudy {
  std::vector<FitReport> reports;   // sorted by (n, ε, mode)
  std::vector<GrowthSlope> slope_in_n;
  std::vector<GrowthSlope> slope_in_inv_eps;
  bool any_unreachable() const;
};

/// Fits on the grid n_list × ε_list for each requested mode, plus log-log
/// slopes of rank against n and against 1/ε.
GrowthStudy rank_growth_study(std::shared_ptr<const EigenBasis> basis, std::vector<int> n_list,
                              std::vector<double> eps_list, const std::vector<FitMode>& modes,
                              NormKind norm = NormKind::L2, const FitOptions& options = {});

/// Least-squares slope of log y against log x over points with y > 0.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

enum class EriKernel { green0, resolvent1 };

std::string to_string(EriKernel k);
EriKernel parse_kernel(const std::string& text);
double kernel_shift(EriKernel k);

struct EriReport {
  int n = 0;
  EriKernel kernel = EriKernel::resolvent1;
  std::vector<std::pair<int, int>> pairs;
  /// (ij|kl) indexed by pair position, symmetric.
  std::optional<Eigen::MatrixXd> exact;
  std::optional<Eigen::MatrixXd> fitted;
  std::optional<double> max_abs_error;
  std::optional<double> max_rel_error;
  /// max |T_ab − T_ba| of the raw solver table before mirroring.
  double symmetry_defect = 0.0;
  std::size_t exact_solves = 0;
  std::size_t fitted_solves = 0;
  int rank = 0;
  double epsilon = 0.0;
  double setup_seconds = 0.0;
  double exact_seconds = 0.0;
  double fitted_seconds = 0.0;

  /// max |(ij|kl)| of the exact table.
  double scale() const;
  nlohmann::json summary() const;
};

struct EriOptions {
  bool override_resolution_limit = false;
  unsigned threads = 0;
  SolveOptions solve;
};

/// (ij|kl) = ⟨e_i e_j, (shift − Δ)⁻¹ e_k e_l⟩ with one solve per pair.
EriReport eri_exact(std::shared_ptr<const EigenBasis> basis, int n, EriKernel kernel,
                    const EriOptions& options = {});

/// Factorised integrals through the fit's subspace: r solves for the core
/// matrix, then (ij|kl) ≈ c_ijᵀ M c_kl. Error statistics are filled in when
/// `exact` carries a table for the same n and kernel.
EriReport eri_fitted(std::shared_ptr<const EigenBasis> basis, const FitReport& fit, int n,
                     EriKernel kernel, const EriReport* exact = nullptr,
                     const EriOptions& options = {});

}  // namespace lapprod
