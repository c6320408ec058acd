#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lapprod/spectra.hpp"

namespace lapprod {

/// Nodal field tied to an eigenbasis. Coefficients c_k = ⟨f, e_k⟩ are
/// computed on first use and cached; the values never change.
class SpectralField {
 public:
  SpectralField(std::shared_ptr<const EigenBasis> basis, Field values);

  const Field& values() const { return values_; }
  const EigenBasis& basis() const { return *basis_; }
  const std::shared_ptr<const EigenBasis>& basis_ptr() const { return basis_; }
  const Eigen::VectorXd& coeffs() const;
  bool has_coeffs() const;

 private:
  struct Cache {
    std::once_flag once;
    Eigen::VectorXd coeffs;
    bool ready = false;
  };
  std::shared_ptr<const EigenBasis> basis_;
  Field values_;
  std::shared_ptr<Cache> cache_;
};

/// The basis mode with the given index as a field.
SpectralField mode_field(std::shared_ptr<const EigenBasis> basis, int index);

/// Nodewise product of two or more fields on the same basis.
SpectralField pointwise_product(std::span<const SpectralField> fields);

/// Product of the modes listed in `tuple`.
Field mode_product(const EigenBasis& basis, std::span<const int> tuple);

/// c_k = ⟨f, e_k⟩ for every basis column.
Eigen::VectorXd expand(const EigenBasis& basis, const Field& f);

/// E_ν f = Σ_{origin ≤ k ≤ ν} c_k e_k. Requires ν ≤ max_index().
SpectralField project_E(const SpectralField& f, int nu);

/// R_ν f = f − E_ν f.
SpectralField remainder_R(const SpectralField& f, int nu);

enum class NormKind { L2, Linf, Hs, Hminus1 };

struct NormSpec {
  NormKind kind = NormKind::L2;
  double sigma = 0.0;   // Hs only

  static NormSpec l2() { return {NormKind::L2, 0.0}; }
  static NormSpec linf() { return {NormKind::Linf, 0.0}; }
  static NormSpec hs(double s) { return {NormKind::Hs, s}; }
  static NormSpec hminus1() { return {NormKind::Hminus1, -1.0}; }

  /// "L2", "Linf", "Hs(1.5)" or "Hminus1".
  std::string name() const;
  static NormSpec parse(const std::string& text);
  bool operator==(const NormSpec&) const = default;
};

/// L2: √⟨f,f⟩; Linf: nodal max; Hs(σ): √Σ(1+λ_k²)^σ c_k², full spectrum
/// required for σ ≠ 0. Hminus1 is served by hminus1_bracket.
double norm(const SpectralField& f, const NormSpec& kind);

/// Coefficient-space norm: L2 = √Σc_k², Hs(σ) = √Σ(1+λ_k²)^σ c_k².
double norm(const EigenBasis& basis, const Eigen::VectorXd& coeffs, const NormSpec& kind);

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided H⁻¹ norm of R_ν f from the available modes; the unresolved
/// L² tail is charged at the largest available frequency.
Bracket hminus1_bracket(const SpectralField& f, int nu);

/// One (tuple, ν, norm) remainder measurement.
struct RemainderReport {
  std::vector<int> tuple;   // sorted mode indices, length ≥ 2
  int nu = 0;
  int n = 0;
  NormSpec kind;
  double value = 0.0;
  std::optional<double> value_upper;   // Hminus1 only

  // Basis metadata used by the shape diagnostics.
  std::string basis_id;
  int dim = 0;
  bool dirichlet = false;
  double lambda_n = 0.0;
  double lambda_nu = 0.0;
};

struct SweepOptions {
  bool override_resolution_limit = false;
  /// Report n; defaults to the largest index in each tuple.
  std::optional<int> n;
  unsigned threads = 0;
};

/// Cartesian product tuples × nus × kinds. Each product is expanded once.
/// Reports come back sorted by (tuple, ν, kind order as given).
std::vector<RemainderReport> remainder_sweep(std::shared_ptr<const EigenBasis> basis,
                                             const std::vector<std::vector<int>>& tuples,
                                             const std::vector<int>& nus,
                                             const std::vector<NormSpec>& kinds,
                                             const SweepOptions& options = {});

/// Every nondecreasing tuple of the given length with entries in [lo, hi].
std::vector<std::vector<int>> all_tuples(int length, int lo, int hi);

/// Stable identifier of a basis (grid hash plus spectrum fingerprint).
std::string basis_fingerprint(const EigenBasis& basis);

}  // namespace lapprod
