#pragma once

#include <nlohmann/json.hpp>

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lapprod/products.hpp"

namespace lapprod {

/// Exact rational with a positive denominator, always in lowest terms.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  /// "1/8", "-3/4" or "2".
  std::string str() const;
  static Rational parse(const std::string& text);

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator-(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  friend Rational operator/(Rational a, Rational b);
  friend Rational operator-(Rational a) { return {-a.num_, a.den_}; }
  friend bool operator==(Rational a, Rational b) = default;
  friend std::strong_ordering operator<=>(Rational a, Rational b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

Rational max(Rational a, Rational b);

enum class Setting { boundaryless, dirichlet };

std::string to_string(Setting s);
Setting parse_setting(const std::string& text);

/// σ(p,d) = max{(d−1)/2·(1/2−1/p), d(1/2−1/p)−1/2}. Requires p > 2, d ≥ 1.
Rational sigma_pd(Rational p, int d);

/// Dirichlet L⁴ exponent for d ∈ {2,3,4}: 1/6, 1/3, 1/2.
Rational sigma_pd_dirichlet(int d);

/// σ(4,d) for the setting (Dirichlet table or the formula).
Rational sigma4(int d, Setting setting);

/// σ_∞ = (2/d)σ(4,d) + (d+1)/(2d).
Rational sigma_inf(int d, Setting setting = Setting::boundaryless);

/// σ_{d,ℓ} = (ℓ/d)σ(2ℓ,d) + (d+1)/(2d), ℓ ≥ 2, from the closed-manifold σ(2ℓ,d).
Rational sigma_dl(int d, int ell);

/// H⁻¹ cutoff exponent for d ∈ {2,3,4}: boundaryless 1/4, 1/2, 1; Dirichlet
/// 1/3, 2/3, 1.
Rational mu_d(int d, Setting setting);

struct ExponentTable {
  int d = 2;
  Setting setting = Setting::boundaryless;
  /// (p, σ(p,d)) for each requested p that has a value in this setting.
  std::vector<std::pair<Rational, Rational>> sigma_p;
  /// Requested p without a known value (Dirichlet, p ≠ 4).
  std::vector<Rational> unavailable_p;
  Rational sigma_inf;
  /// (ℓ, σ_{d,ℓ}) for ℓ = 2, 3, 4.
  std::vector<std::pair<int, Rational>> sigma_dl;
  std::optional<Rational> mu;   // d ∈ {2,3,4} only

  std::string text() const;
  nlohmann::json to_json() const;
};

ExponentTable exponent_table(int d, Setting setting, const std::vector<Rational>& p_list);

enum class Theorem { T1_L2, T1_Linf, T2, T3_Hminus1 };

std::string to_string(Theorem t);
Theorem parse_theorem(const std::string& text);

struct ShapeRow {
  std::vector<int> tuple;
  int nu = 0;
  int n = 0;
  double value = 0.0;
  double c_hat = 0.0;
};

struct ShapeCheck {
  Theorem theorem = Theorem::T1_L2;
  int kappa = 1;
  Rational sigma;
  std::string sigma_label;
  std::vector<ShapeRow> rows;
  double max_c_hat = 0.0;
  double max_lower = 0.0;   // max Ĉ over the lower half of the distinct ν values
  double max_upper = 0.0;   // same over the upper half
  bool bounded = false;

  std::string verdict() const { return bounded ? "bounded" : "growing"; }
  nlohmann::json to_json() const;
};

/// Implied constants Ĉ per report and the halves verdict. With an odd number
/// of distinct ν values the middle one belongs to neither half.
ShapeCheck theorem_shape_check(const std::vector<RemainderReport>& reports, Theorem theorem,
                               int kappa);

struct LpGrowth {
  int p = 4;
  Rational sigma;
  std::vector<int> indices;
  std::vector<double> ratios;
  std::vector<double> running_max;
  double max_lower = 0.0;
  double max_upper = 0.0;
  bool alarm = false;   // upper-half max exceeds lower-half max by more than 25%
};

/// ‖e_j‖_{L^p} / λ_j^{σ(p,d)} for j in [j_lo, j_hi]; modes with λ = 0 are skipped.
LpGrowth lp_growth(const EigenBasis& basis, int p, int j_lo, int j_hi);

}  // namespace lapprod
