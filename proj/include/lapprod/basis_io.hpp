#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>

#include "lapprod/spectra.hpp"

namespace lapprod {

// Basis container, format version 1 (all integers and floats little-endian):
//
//   offset 0   8 bytes   magic "LPBASIS1"
//          8   u32       format version (1)
//         12   u32       reserved, zero
//         16   u64       header length H in bytes
//         24   H bytes   UTF-8 JSON header (see below)
//          …   K  f64    frequencies λ_k
//          …   K  f64    residuals
//          …   N·K f64   modes, row-major (node-major: row m holds e_k(x_m) for all k)
//          …   64 bytes  ASCII hex SHA-256 of every preceding byte
//
// Header keys: format, version, tag (numeric|analytic|fitted), domain,
// grid_hash, n_unknowns, K, origin, full_spectrum, labels, tie_break.

inline constexpr std::uint32_t kBasisFormatVersion = 1;

struct BasisFile {
  nlohmann::json header;
  Eigen::VectorXd freqs;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd modes;
  std::string content_hash;   // SHA-256 of the whole file
};

/// Writes atomically (temp file + rename). Returns the file's SHA-256.
std::string save_basis(const std::filesystem::path& path, const EigenBasis& basis,
                       const nlohmann::json& extra = nlohmann::json::object());

/// Reads and checksums a container. Throws CorruptFile on any mismatch.
BasisFile read_basis_file(const std::filesystem::path& path);

/// Rebuilds an EigenBasis over `grid`; the stored grid hash must match.
EigenBasis load_basis(const std::filesystem::path& path, std::shared_ptr<const Grid> grid,
                      std::shared_ptr<const SparseOperator> op = nullptr);

/// Writes bytes to path via a temporary sibling and rename.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace lapprod
