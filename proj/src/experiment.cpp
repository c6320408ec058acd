#include "lapprod/experiment.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "lapprod/basis_io.hpp"
#include "lapprod/bounds.hpp"
#include "lapprod/error.hpp"
#include "lapprod/fitting.hpp"
#include "lapprod/hashing.hpp"
#include "lapprod/report_io.hpp"
#include "lapprod/verify.hpp"

namespace lapprod {

using nlohmann::json;
namespace fs = std::filesystem;

LoadedBasis obtain_basis(const ExperimentConfig& cfg) {
  if (!cfg.domain) throw InvalidArgument("this experiment needs a domain");
  auto grid = std::make_shared<const Grid>(build_grid(*cfg.domain));
  auto op = std::make_shared<const SparseOperator>(assemble_laplacian(grid));
  LoadedBasis out;
  if (cfg.basis.file) {
    out.file = *cfg.basis.file;
    out.basis = std::make_shared<const EigenBasis>(load_basis(out.file, grid, op));
    out.sha256 = sha256_file(out.file);
    return out;
  }
  EigenBasis b;
  if (cfg.basis.analytic) {
    const Eigen::Index cap = analytic_mode_capacity(*grid);
    if (cap == 0)
      throw InvalidArgument(fmt::format("no analytic basis for domain kind {}",
                                        to_string(cfg.domain->kind)));
    b = analytic_basis(grid, cfg.basis.K ? *cfg.basis.K : cap, op);
  } else {
    const EigenMethod method =
        cfg.basis.method == "iterative" ? EigenMethod::iterative : EigenMethod::dense;
    const Eigen::Index K = cfg.basis.K ? *cfg.basis.K : static_cast<Eigen::Index>(grid->size());
    b = compute_basis(op, K, method);
  }
  out.basis = std::make_shared<const EigenBasis>(std::move(b));
  out.file = cfg.output_dir / "basis.lpb";
  out.sha256 = save_basis(out.file, *out.basis, {{"method", cfg.basis.method}});
  return out;
}

namespace {

json base_report(const ExperimentConfig& cfg, const LoadedBasis* lb) {
  json j;
  j["config"] = cfg.resolved;
  if (lb) {
    j["basis_file"] = lb->file.string();
    j["basis_sha256"] = lb->sha256;
    j["basis"] = {{"source", to_string(lb->basis->source)},
                  {"K", lb->basis->size()},
                  {"unknowns", lb->basis->grid->size()},
                  {"full_spectrum", lb->basis->full_spectrum},
                  {"origin", lb->basis->origin},
                  {"grid_hash", lb->basis->grid->hash()}};
  }
  return j;
}

void emit(RunResult& res, const fs::path& path, const std::string& text) {
  write_text(path, text);
  res.files.push_back(path);
}

void emit_json(RunResult& res, const fs::path& path, const json& j) {
  write_json(path, j);
  res.files.push_back(path);
}

RunResult run_solve(const ExperimentConfig& cfg) {
  RunResult res;
  const LoadedBasis lb = obtain_basis(cfg);
  res.files.push_back(lb.file);
  const EigenBasis& b = *lb.basis;
  const BasisDiagnostics diag = diagnose(b);
  json j = base_report(cfg, &lb);
  j["max_residual"] = diag.max_residual;
  j["gram_defect"] = diag.gram_defect;
  j["lambda_min"] = b.freqs[0];
  j["lambda_max"] = b.freqs[b.size() - 1];
  int limit = b.max_index();
  if (b.source == BasisSource::numeric) limit = resolution_limit(b);
  j["resolution_limit"] = limit;
  std::string weyl = "n/a";
  try {
    const WeylFit w = weyl_fit(b);
    j["weyl"] = {{"scale", w.scale}, {"dimension", w.dimension},
                 {"first_index", w.first_index}, {"last_index", w.last_index}};
    weyl = fmt::format("{:.3f}", w.dimension);
  } catch (const InvalidArgument& e) {
    j["weyl"] = {{"skipped", e.what()}};
  }
  emit_json(res, cfg.output_dir / "solve.json", j);
  res.summary = fmt::format(
      "solve: {} modes on {} unknowns ({})\n"
      "  max residual {:.3e}  gram defect {:.3e}\n"
      "  lambda in [{:.6g}, {:.6g}]  resolution limit index {}  Weyl dimension {}\n"
      "  basis {} sha256 {}\n",
      b.size(), b.grid->size(), to_string(b.source), diag.max_residual, diag.gram_defect,
      b.freqs[0], b.freqs[b.size() - 1], limit, weyl, lb.file.string(), lb.sha256);
  res.report = std::move(j);
  return res;
}

RunResult run_remainder(const ExperimentConfig& cfg) {
  RunResult res;
  const json& p = cfg.params;
  std::vector<std::vector<int>> tuples;
  if (p.contains("tuples")) tuples = p["tuples"].get<std::vector<std::vector<int>>>();
  if (p.contains("tuple_set")) {
    const json& ts = p["tuple_set"];
    auto more = all_tuples(ts["length"].get<int>(), ts.value("min_index", 1),
                           ts["max_index"].get<int>());
    tuples.insert(tuples.end(), more.begin(), more.end());
  }
  const auto nus = p["nus"].get<std::vector<int>>();
  std::vector<NormSpec> kinds;
  for (const auto& k : p["kinds"]) kinds.push_back(NormSpec::parse(k.get<std::string>()));
  SweepOptions opt;
  opt.override_resolution_limit = p.value("override_resolution_limit", false);
  if (p.contains("n")) opt.n = p["n"].get<int>();
  opt.threads = cfg.threads;

  std::vector<std::pair<Theorem, int>> checks;
  if (p.contains("shape_checks"))
    for (const auto& sc : p["shape_checks"])
      checks.emplace_back(parse_theorem(sc["theorem"].get<std::string>()), sc["kappa"].get<int>());
  if (!checks.empty()) {
    for (const auto& t : tuples) {
      const int n = opt.n.value_or(*std::max_element(t.begin(), t.end()));
      for (int nu : nus)
        if (nu <= n)
          throw InvalidArgument(fmt::format(
              "shape checks need every nu > n; nu = {} with n = {}", nu, n));
    }
  }

  const LoadedBasis lb = obtain_basis(cfg);
  if (!cfg.basis.file) res.files.push_back(lb.file);
  const auto reports = remainder_sweep(lb.basis, tuples, nus, kinds, opt);
  emit(res, cfg.output_dir / "remainder.csv", remainder_csv(reports));

  json j = base_report(cfg, &lb);
  j["reports"] = reports.size();
  json by_kind = json::object();
  for (const auto& k : kinds) {
    double mx = 0.0;
    for (const auto& r : reports)
      if (r.kind == k) mx = std::max(mx, r.value_upper.value_or(r.value));
    by_kind[k.name()] = mx;
  }
  j["max_value"] = by_kind;
  std::string summary = fmt::format("remainder: {} tuples x {} nus x {} kinds = {} reports\n",
                                    reports.size() / (nus.size() * kinds.size()), nus.size(),
                                    kinds.size(), reports.size());
  for (const auto& [k, v] : by_kind.items())
    summary += fmt::format("  max {:<10} {:.6e}\n", k, v.get<double>());

  std::vector<ShapeCheck> shape;
  json shape_json = json::array();
  for (const auto& [thm, kappa] : checks) {
    shape.push_back(theorem_shape_check(reports, thm, kappa));
    shape_json.push_back(shape.back().to_json());
    summary += fmt::format("  {:<11} kappa={} sigma={} max C={:.4e} lower={:.4e} upper={:.4e} {}\n",
                           to_string(thm), kappa, shape.back().sigma.str(), shape.back().max_c_hat,
                           shape.back().max_lower, shape.back().max_upper, shape.back().verdict());
  }
  if (!shape.empty()) emit(res, cfg.output_dir / "shape.csv", shape_csv(shape));
  j["shape_checks"] = shape_json;
  emit_json(res, cfg.output_dir / "remainder.json", j);
  res.summary = summary;
  res.report = std::move(j);
  return res;
}

RunResult run_rank(const ExperimentConfig& cfg) {
  RunResult res;
  const json& p = cfg.params;
  const auto n_list = p["n_list"].get<std::vector<int>>();
  const auto eps_list = p["eps_list"].get<std::vector<double>>();
  const std::string mode = p["mode"];
  std::vector<FitMode> modes;
  if (mode == "spectral" || mode == "both") modes.push_back(FitMode::spectral);
  if (mode == "optimal" || mode == "both") modes.push_back(FitMode::optimal);
  const NormKind norm = p["norm"] == "Linf" ? NormKind::Linf : NormKind::L2;
  if (norm == NormKind::Linf && mode != "spectral")
    throw InvalidArgument("params.norm = Linf is only available with mode = spectral");
  FitOptions opt;
  opt.override_resolution_limit = p.value("override_resolution_limit", false);
  opt.threads = cfg.threads;

  const LoadedBasis lb = obtain_basis(cfg);
  if (!cfg.basis.file) res.files.push_back(lb.file);
  const GrowthStudy study = rank_growth_study(lb.basis, n_list, eps_list, modes, norm, opt);
  emit(res, cfg.output_dir / "fit.csv", fit_csv(study.reports));

  json j = base_report(cfg, &lb);
  json rows = json::array();
  for (const auto& r : study.reports)
    rows.push_back({{"n", r.n}, {"epsilon", r.epsilon}, {"mode", to_string(r.mode)},
                    {"rank", r.rank}, {"pair_count", r.pair_count}, {"nu", r.nu},
                    {"reached", r.reached}, {"max_residual", r.max_residual}});
  j["fits"] = rows;
  auto slopes = [](const std::vector<GrowthSlope>& v, const char* key) {
    json a = json::array();
    for (const auto& s : v)
      a.push_back({{"mode", to_string(s.mode)}, {key, s.fixed},
                   {"slope", std::isfinite(s.slope) ? json(s.slope) : json(nullptr)},
                   {"points", s.points}});
    return a;
  };
  j["slope_rank_vs_n"] = slopes(study.slope_in_n, "epsilon");
  j["slope_rank_vs_inv_epsilon"] = slopes(study.slope_in_inv_eps, "n");
  j["unreachable"] = study.any_unreachable();

  std::string summary = fmt::format("rank: {} fits ({} norm)\n", study.reports.size(),
                                    norm == NormKind::L2 ? "L2" : "Linf");
  for (const auto& r : study.reports)
    summary += fmt::format("  n={:<4} eps={:<10.3g} {:<8} rank={:<6} residual={:.3e}{}\n", r.n,
                           r.epsilon, to_string(r.mode), r.rank, r.max_residual,
                           r.reached ? "" : "  UNREACHABLE");
  for (const auto& s : study.slope_in_n)
    summary += fmt::format("  slope log rank / log n  ({}, eps={:.3g}): {:.3f}\n",
                           to_string(s.mode), s.fixed, s.slope);
  emit_json(res, cfg.output_dir / "rank.json", j);
  res.summary = summary;
  res.report = std::move(j);
  if (study.any_unreachable()) res.exit_code = kExitUnreachable;
  return res;
}

RunResult run_eri(const ExperimentConfig& cfg) {
  RunResult res;
  const json& p = cfg.params;
  const LoadedBasis lb = obtain_basis(cfg);
  if (!cfg.basis.file) res.files.push_back(lb.file);
  const EriKernel kernel =
      p.contains("kernel") ? parse_kernel(p["kernel"].get<std::string>())
                           : (lb.basis->periodic() ? EriKernel::resolvent1 : EriKernel::green0);
  const int n = p["n"].get<int>();
  const double eps = p["epsilon"].get<double>();
  EriOptions opt;
  opt.override_resolution_limit = p.value("override_resolution_limit", false);
  opt.threads = cfg.threads;

  std::optional<EriReport> exact;
  if (p.value("compare_exact", true)) exact = eri_exact(lb.basis, n, kernel, opt);
  const ProductMatrix pm = assemble_products(
      lb.basis, n, {opt.override_resolution_limit, kDefaultProductEntryCap, cfg.threads});
  const FitReport fit = fit_optimal(pm, eps);
  const EriReport rep = eri_fitted(lb.basis, fit, n, kernel, exact ? &*exact : nullptr, opt);
  const fs::path fitted_path = cfg.output_dir / "fitted.lpb";
  const std::string fitted_hash =
      save_basis(fitted_path, *fit.fitted,
                 {{"epsilon", eps}, {"n", n}, {"singular_values", fit.singular_values},
                  {"parent_sha256", lb.sha256}});
  res.files.push_back(fitted_path);
  emit(res, cfg.output_dir / "eri.csv", eri_csv(rep));

  json j = base_report(cfg, &lb);
  j["config"]["params"]["kernel"] = to_string(kernel);
  j["summary"] = rep.summary();
  j["fit"] = {{"rank", fit.rank}, {"max_residual", fit.max_residual}, {"reached", fit.reached},
              {"pair_count", fit.pair_count}, {"fitted_file", fitted_path.string()},
              {"fitted_sha256", fitted_hash}};
  if (rep.max_abs_error) {
    const double envelope = 10.0 * eps * std::sqrt(rep.scale());
    j["envelope"] = {{"bound", envelope}, {"within", *rep.max_abs_error <= envelope}};
  }
  emit_json(res, cfg.output_dir / "eri.json", j);
  std::string summary = fmt::format(
      "eri: n={} kernel={} pairs={} rank={} (eps={:.3g})\n  solves: exact {} fitted {}\n",
      n, to_string(kernel), rep.pairs.size(), rep.rank, eps, rep.exact_solves, rep.fitted_solves);
  if (rep.max_abs_error)
    summary += fmt::format("  max abs error {:.3e}  max rel error {:.3e}  scale {:.6g}\n",
                           *rep.max_abs_error, *rep.max_rel_error, rep.scale());
  summary += fmt::format("  seconds: setup {:.3f} exact {:.3f} fitted {:.3f}\n", rep.setup_seconds,
                         rep.exact_seconds, rep.fitted_seconds);
  res.summary = summary;
  res.report = std::move(j);
  if (!fit.reached) res.exit_code = kExitUnreachable;
  return res;
}

RunResult run_bounds(const ExperimentConfig& cfg) {
  RunResult res;
  const json& p = cfg.params;
  const int d = p.contains("d") ? p["d"].get<int>() : (cfg.domain ? cfg.domain->dim() : 2);
  const Setting setting = parse_setting(p["setting"].get<std::string>());
  std::vector<Rational> ps;
  for (const auto& v : p["p_list"]) ps.emplace_back(v.get<long>());
  const ExponentTable t = exponent_table(d, setting, ps);
  emit(res, cfg.output_dir / "bounds.txt", t.text());
  json j = base_report(cfg, nullptr);
  j["table"] = t.to_json();
  emit_json(res, cfg.output_dir / "bounds.json", j);
  res.summary = t.text() + t.to_json().dump() + "\n";
  res.report = std::move(j);
  return res;
}

RunResult run_verify(const ExperimentConfig& cfg) {
  RunResult res;
  const VerifyTolerances tol = VerifyTolerances::from_json(cfg.params.value("tolerances", json::object()));
  const auto checks = verify_suite(tol, cfg.seed, cfg.threads);
  emit(res, cfg.output_dir / "verify.csv", verify_csv(checks));
  json j = base_report(cfg, nullptr);
  j["tolerances"] = tol.to_json();
  json arr = json::array();
  bool all = true;
  std::string summary = "verify:\n";
  for (const auto& c : checks) {
    all = all && c.passed;
    arr.push_back({{"check", c.name}, {"passed", c.passed}, {"quantity", c.quantity},
                   {"value", c.value}, {"reference", c.reference}, {"tolerance", c.tolerance},
                   {"detail", c.detail}});
    summary += fmt::format("  {:<20} {}  {:.3e} (tol {:.1e})  {}\n", c.name,
                           c.passed ? "pass" : "FAIL", c.value, c.tolerance, c.detail);
  }
  j["checks"] = arr;
  j["passed"] = all;
  emit_json(res, cfg.output_dir / "verify.json", j);
  res.summary = summary;
  res.report = std::move(j);
  if (!all) res.exit_code = kExitError;
  return res;
}

}  // namespace

RunResult run(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  switch (cfg.experiment) {
    case ExperimentKind::solve: return run_solve(cfg);
    case ExperimentKind::remainder: return run_remainder(cfg);
    case ExperimentKind::rank: return run_rank(cfg);
    case ExperimentKind::eri: return run_eri(cfg);
    case ExperimentKind::bounds: return run_bounds(cfg);
    case ExperimentKind::verify: return run_verify(cfg);
  }
  throw InvalidArgument("unknown experiment");
}

}  // namespace lapprod
