#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lapprod/config.hpp"
#include "lapprod/spectra.hpp"

namespace lapprod {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUnreachable = 2;

struct LoadedBasis {
  std::shared_ptr<const EigenBasis> basis;
  std::filesystem::path file;
  std::string sha256;   // of the container file
};

/// The basis described by the config: loaded from basis.file when given
/// (checksummed, grid hash verified), otherwise computed and saved as
/// <output_dir>/basis.lpb.
LoadedBasis obtain_basis(const ExperimentConfig& cfg);

struct RunResult {
  int exit_code = kExitOk;
  std::string summary;   // one screen of text for the terminal
  nlohmann::json report;
  std::vector<std::filesystem::path> files;
};

/// Runs one experiment and writes its reports into cfg.output_dir.
/// Library errors propagate as exceptions.
RunResult run(const ExperimentConfig& cfg);

}  // namespace lapprod
