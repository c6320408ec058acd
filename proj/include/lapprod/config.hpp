#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lapprod/domains.hpp"
#include "lapprod/error.hpp"

namespace lapprod {

/// Schema violations; `problems` lists every offending key.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

inline constexpr int kConfigVersion = 1;

enum class ExperimentKind { solve, remainder, rank, eri, bounds, verify };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment(const std::string& name);

/// Parses a density description: {"constant": c} or
/// {"cosine": {"base": b, "amplitude": a, "kx": i, "ky": j}} giving
/// ρ = b + a cos(i x) cos(j y).
DensityFn parse_density(const nlohmann::json& j);

nlohmann::json domain_to_json(const DomainSpec& spec);
DomainSpec domain_from_json(const nlohmann::json& j);

struct BasisSettings {
  std::optional<long> K;           // empty means full spectrum
  std::string method = "dense";
  bool analytic = false;
  std::optional<std::filesystem::path> file;
};

/// A validated experiment description. `resolved` is the input with every
/// default filled in; reports embed it verbatim.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::verify;
  std::optional<DomainSpec> domain;
  BasisSettings basis;
  nlohmann::json params = nlohmann::json::object();
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  nlohmann::json resolved;
};

/// Validates and resolves. Unknown keys anywhere are rejected; all problems
/// are collected before throwing.
ExperimentConfig parse_config(const nlohmann::json& j);

/// Applies `dotted.key=value` overrides to scalar fields (value parsed as
/// JSON, falling back to a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace lapprod
