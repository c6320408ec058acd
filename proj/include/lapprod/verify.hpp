#pragma once

#include <nlohmann/json.hpp>

#include <vector>

#include "lapprod/report_io.hpp"

namespace lapprod {

struct VerifyTolerances {
  double parseval = 1e-9;
  double idempotence = 1e-10;
  double orthonormality = 1e-10;
  double torus_exactness = 1e-10;
  double hminus1_resolvent = 1e-8;
  double eri_symmetry = 1e-9;
  double numeric_vs_analytic = 1e-8;

  /// Overrides from a {"parseval": 1e-12, ...} object.
  static VerifyTolerances from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Invariant suite on small built-in domains: Parseval, projection
/// idempotence, orthonormality, torus exactness, exponent tables, the H⁻¹
/// resolvent cross-check, ERI symmetry and numeric-vs-analytic agreement.
std::vector<VerifyCheck> verify_suite(const VerifyTolerances& tol, std::uint64_t seed = 0,
                                      unsigned threads = 0);

}  // namespace lapprod
