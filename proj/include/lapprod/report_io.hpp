#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "lapprod/bounds.hpp"
#include "lapprod/fitting.hpp"
#include "lapprod/products.hpp"

namespace lapprod {

// CSV emitters and their parsers. Reals are written with 17 significant
// digits so that every value reads back bit for bit. Tuples are written as
// "5;7". Row order follows the input order, which is already canonical.

std::string remainder_csv(const std::vector<RemainderReport>& reports);
/// Rows of a remainder CSV; basis metadata is not part of the file.
std::vector<RemainderReport> parse_remainder_csv(const std::string& text);

std::string fit_csv(const std::vector<FitReport>& reports);

struct FitRow {
  int n = 0;
  double epsilon = 0.0;
  FitMode mode = FitMode::spectral;
  int rank = 0;
  double max_residual = 0.0;
  bool operator==(const FitRow&) const = default;
};
std::vector<FitRow> parse_fit_csv(const std::string& text);

/// One row per (ij) ≤ (kl); blank cells for a missing table.
std::string eri_csv(const EriReport& report);

struct EriRow {
  int i = 0, j = 0, k = 0, l = 0;
  std::optional<double> exact;
  std::optional<double> fitted;
  bool operator==(const EriRow&) const = default;
};
std::vector<EriRow> parse_eri_csv(const std::string& text);

std::string shape_csv(const std::vector<ShapeCheck>& checks);

struct ShapeCsvRow {
  Theorem theorem = Theorem::T1_L2;
  int kappa = 1;
  std::vector<int> tuple;
  int nu = 0;
  int n = 0;
  double value = 0.0;
  double c_hat = 0.0;
  bool operator==(const ShapeCsvRow&) const = default;
};
std::vector<ShapeCsvRow> parse_shape_csv(const std::string& text);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string quantity;
  double value = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  std::string detail;
  bool operator==(const VerifyCheck&) const = default;
};

std::string verify_csv(const std::vector<VerifyCheck>& checks);
std::vector<VerifyCheck> parse_verify_csv(const std::string& text);

std::string format_real(double v);
double parse_real(const std::string& text);

/// Pretty-printed JSON followed by a newline, written atomically.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace lapprod
