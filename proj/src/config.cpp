#include "lapprod/config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include <fmt/format.h>

namespace lapprod {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

// Collects schema problems with their dotted key path.
class Checker {
 public:
  void problem(const std::string& path, const std::string& what) {
    problems_.push_back(path + ": " + what);
  }

  void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) return;
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) problem(path.empty() ? k : path + "." + k, "unknown key");
  }

  bool is_object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    problem(path, "expected an object");
    return false;
  }

  std::optional<double> number(const json& obj, const std::string& key, const std::string& path,
                               std::optional<double> fallback = std::nullopt) {
    if (!obj.contains(key)) {
      if (!fallback) problem(path + "." + key, "required");
      return fallback;
    }
    if (!obj[key].is_number()) {
      problem(path + "." + key, "expected a number");
      return fallback;
    }
    return obj[key].get<double>();
  }

  std::optional<long> integer(const json& obj, const std::string& key, const std::string& path,
                              std::optional<long> fallback = std::nullopt) {
    if (!obj.contains(key)) {
      if (!fallback) problem(path + "." + key, "required");
      return fallback;
    }
    if (!obj[key].is_number_integer()) {
      problem(path + "." + key, "expected an integer");
      return fallback;
    }
    return obj[key].get<long>();
  }

  std::optional<std::string> string(const json& obj, const std::string& key,
                                    const std::string& path,
                                    std::optional<std::string> fallback = std::nullopt,
                                    std::initializer_list<const char*> choices = {}) {
    if (!obj.contains(key)) {
      if (!fallback) problem(path + "." + key, "required");
      return fallback;
    }
    if (!obj[key].is_string()) {
      problem(path + "." + key, "expected a string");
      return fallback;
    }
    auto s = obj[key].get<std::string>();
    if (choices.size() != 0) {
      bool ok = false;
      std::vector<std::string> names;
      for (const char* c : choices) {
        names.emplace_back(c);
        ok = ok || s == c;
      }
      if (!ok) {
        problem(path + "." + key, fmt::format("'{}' is not one of {}", s, join(names, "|")));
        return fallback;
      }
    }
    return s;
  }

  std::optional<bool> boolean(const json& obj, const std::string& key, const std::string& path,
                              bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) {
      problem(path + "." + key, "expected true or false");
      return fallback;
    }
    return obj[key].get<bool>();
  }

  // Either a scalar or a list of `dim` values.
  std::vector<json> per_axis(const json& obj, const std::string& key, const std::string& path,
                             int dim, bool integral) {
    std::vector<json> out;
    if (!obj.contains(key)) {
      problem(path + "." + key, "required");
      return out;
    }
    const json& v = obj[key];
    auto ok = [&](const json& x) { return integral ? x.is_number_integer() : x.is_number(); };
    if (ok(v)) return std::vector<json>(static_cast<std::size_t>(dim), v);
    if (v.is_array() && static_cast<int>(v.size()) == dim &&
        std::all_of(v.begin(), v.end(), ok))
      return std::vector<json>(v.begin(), v.end());
    problem(path + "." + key,
            fmt::format("expected {} or a list of {}", integral ? "an integer" : "a number", dim));
    return out;
  }

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

void check_int_list(Checker& c, const json& obj, const std::string& key, const std::string& path,
                    bool required) {
  if (!obj.contains(key)) {
    if (required) c.problem(path + "." + key, "required");
    return;
  }
  const json& v = obj[key];
  if (!v.is_array() || v.empty() ||
      !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); }))
    c.problem(path + "." + key, "expected a nonempty list of integers");
}

void check_number_list(Checker& c, const json& obj, const std::string& key,
                       const std::string& path) {
  if (!obj.contains(key)) {
    c.problem(path + "." + key, "required");
    return;
  }
  const json& v = obj[key];
  if (!v.is_array() || v.empty() ||
      !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); }))
    c.problem(path + "." + key, "expected a nonempty list of numbers");
  else if (!std::all_of(v.begin(), v.end(), [](const json& x) { return x.get<double>() > 0.0; }))
    c.problem(path + "." + key, "entries must be positive");
}

bool valid_kind_name(const std::string& s) {
  if (s == "L2" || s == "Linf" || s == "Hminus1") return true;
  if (s.size() > 4 && s.rfind("Hs(", 0) == 0 && s.back() == ')') {
    char* end = nullptr;
    const std::string body = s.substr(3, s.size() - 4);
    std::strtod(body.c_str(), &end);
    return end != nullptr && *end == '\0' && !body.empty();
  }
  return false;
}

json check_domain(Checker& c, const json& d) {
  const std::string path = "domain";
  if (!c.is_object(d, path)) return json();
  auto kind = c.string(d, "kind", path, std::nullopt,
                       {"interval", "rectangle", "l_shape", "torus", "weighted_torus"});
  if (!kind) return json();
  json out = {{"kind", *kind}};
  if (*kind == "interval") {
    c.only_keys(d, path, {"kind", "a", "b", "resolution"});
    out["a"] = c.number(d, "a", path, 0.0).value_or(0.0);
    out["b"] = c.number(d, "b", path, M_PI).value_or(M_PI);
    out["resolution"] = c.integer(d, "resolution", path).value_or(0);
  } else if (*kind == "rectangle") {
    c.only_keys(d, path, {"kind", "lx", "ly", "resolution"});
    out["lx"] = c.number(d, "lx", path, M_PI).value_or(M_PI);
    out["ly"] = c.number(d, "ly", path, M_PI).value_or(M_PI);
    out["resolution"] = c.per_axis(d, "resolution", path, 2, true);
  } else if (*kind == "l_shape") {
    c.only_keys(d, path, {"kind", "side", "notch", "resolution"});
    out["side"] = c.number(d, "side", path, 1.0).value_or(1.0);
    out["notch"] = c.number(d, "notch", path, 0.5).value_or(0.5);
    out["resolution"] = c.integer(d, "resolution", path).value_or(0);
  } else if (*kind == "torus") {
    c.only_keys(d, path, {"kind", "dim", "period", "resolution"});
    const long dim = c.integer(d, "dim", path).value_or(1);
    if (dim < 1 || dim > 3) c.problem(path + ".dim", "must be 1, 2 or 3");
    const int dd = static_cast<int>(std::clamp(dim, 1L, 3L));
    out["dim"] = dd;
    json period = d.contains("period") ? d["period"] : json(2.0 * M_PI);
    json tmp = {{"period", period}};
    out["period"] = c.per_axis(tmp, "period", path, dd, false);
    out["resolution"] = c.per_axis(d, "resolution", path, dd, true);
  } else {
    c.only_keys(d, path, {"kind", "period", "resolution", "density"});
    out["period"] = c.number(d, "period", path, 2.0 * M_PI).value_or(2.0 * M_PI);
    out["resolution"] = c.integer(d, "resolution", path).value_or(0);
    if (!d.contains("density")) {
      c.problem(path + ".density", "required");
    } else {
      try {
        parse_density(d["density"]);
        out["density"] = d["density"];
      } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) c.problem(path + ".density", p);
      }
    }
  }
  return out;
}

json check_params(Checker& c, ExperimentKind kind, const json& p) {
  const std::string path = "params";
  if (!c.is_object(p, path)) return json::object();
  json out = p;
  switch (kind) {
    case ExperimentKind::solve:
      c.only_keys(p, path, {});
      break;
    case ExperimentKind::remainder: {
      c.only_keys(p, path,
                  {"tuples", "tuple_set", "n", "nus", "kinds", "override_resolution_limit",
                   "shape_checks"});
      if (!p.contains("tuples") && !p.contains("tuple_set"))
        c.problem(path + ".tuples", "either tuples or tuple_set is required");
      if (p.contains("tuples")) {
        const json& t = p["tuples"];
        bool ok = t.is_array() && !t.empty();
        if (ok)
          for (const auto& tup : t)
            ok = ok && tup.is_array() && tup.size() >= 2 &&
                 std::all_of(tup.begin(), tup.end(),
                             [](const json& x) { return x.is_number_integer(); });
        if (!ok) c.problem(path + ".tuples", "expected a list of integer lists of length >= 2");
      }
      if (p.contains("tuple_set")) {
        const json& ts = p["tuple_set"];
        if (c.is_object(ts, path + ".tuple_set")) {
          c.only_keys(ts, path + ".tuple_set", {"length", "max_index", "min_index"});
          if (c.integer(ts, "length", path + ".tuple_set").value_or(2) < 2)
            c.problem(path + ".tuple_set.length", "must be at least 2");
          c.integer(ts, "max_index", path + ".tuple_set");
          c.integer(ts, "min_index", path + ".tuple_set", 1);
        }
      }
      if (p.contains("n")) c.integer(p, "n", path);
      check_int_list(c, p, "nus", path, true);
      if (p.contains("kinds")) {
        const json& k = p["kinds"];
        if (!k.is_array() || k.empty())
          c.problem(path + ".kinds", "expected a nonempty list");
        else
          for (const auto& x : k)
            if (!x.is_string() || !valid_kind_name(x.get<std::string>()))
              c.problem(path + ".kinds", fmt::format("invalid norm kind {}", x.dump()));
      } else {
        out["kinds"] = json::array({"L2"});
      }
      out["override_resolution_limit"] =
          c.boolean(p, "override_resolution_limit", path, false).value_or(false);
      if (p.contains("shape_checks")) {
        const json& sc = p["shape_checks"];
        if (!sc.is_array()) {
          c.problem(path + ".shape_checks", "expected a list");
        } else {
          for (std::size_t i = 0; i < sc.size(); ++i) {
            const std::string sp = fmt::format("{}.shape_checks[{}]", path, i);
            if (!c.is_object(sc[i], sp)) continue;
            c.only_keys(sc[i], sp, {"theorem", "kappa"});
            c.string(sc[i], "theorem", sp, std::nullopt, {"T1_L2", "T1_Linf", "T2", "T3_Hminus1"});
            c.integer(sc[i], "kappa", sp);
          }
        }
      }
      break;
    }
    case ExperimentKind::rank:
      c.only_keys(p, path, {"n_list", "eps_list", "mode", "norm", "override_resolution_limit"});
      check_int_list(c, p, "n_list", path, true);
      check_number_list(c, p, "eps_list", path);
      out["mode"] = c.string(p, "mode", path, "both", {"spectral", "optimal", "both"}).value();
      out["norm"] = c.string(p, "norm", path, "L2", {"L2", "Linf"}).value();
      out["override_resolution_limit"] =
          c.boolean(p, "override_resolution_limit", path, false).value_or(false);
      break;
    case ExperimentKind::eri:
      c.only_keys(p, path, {"n", "kernel", "epsilon", "compare_exact", "override_resolution_limit"});
      c.integer(p, "n", path);
      if (p.contains("kernel")) c.string(p, "kernel", path, std::nullopt, {"green0", "resolvent1"});
      out["epsilon"] = c.number(p, "epsilon", path, 1e-4).value_or(1e-4);
      if (!(out["epsilon"].get<double>() > 0.0)) c.problem(path + ".epsilon", "must be positive");
      out["compare_exact"] = c.boolean(p, "compare_exact", path, true).value_or(true);
      out["override_resolution_limit"] =
          c.boolean(p, "override_resolution_limit", path, false).value_or(false);
      break;
    case ExperimentKind::bounds:
      c.only_keys(p, path, {"d", "setting", "p_list"});
      c.integer(p, "d", path);
      out["setting"] =
          c.string(p, "setting", path, "boundaryless", {"boundaryless", "dirichlet"}).value();
      if (p.contains("p_list"))
        check_int_list(c, p, "p_list", path, false);
      else
        out["p_list"] = json::array({4, 6, 8});
      break;
    case ExperimentKind::verify:
      c.only_keys(p, path, {"tolerances"});
      if (p.contains("tolerances")) {
        const json& t = p["tolerances"];
        if (c.is_object(t, path + ".tolerances")) {
          c.only_keys(t, path + ".tolerances",
                      {"parseval", "idempotence", "orthonormality", "torus_exactness",
                       "hminus1_resolvent", "eri_symmetry", "numeric_vs_analytic"});
          for (const auto& [k, v] : t.items())
            if (!v.is_number() || !(v.get<double>() > 0.0))
              c.problem(path + ".tolerances." + k, "expected a positive number");
        }
      } else {
        out["tolerances"] = json::object();
      }
      break;
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error("invalid configuration: " + join(problems, "; ")), problems_(std::move(problems)) {}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::solve: return "solve";
    case ExperimentKind::remainder: return "remainder";
    case ExperimentKind::rank: return "rank";
    case ExperimentKind::eri: return "eri";
    case ExperimentKind::bounds: return "bounds";
    case ExperimentKind::verify: return "verify";
  }
  return "unknown";
}

ExperimentKind parse_experiment(const std::string& name) {
  for (auto k : {ExperimentKind::solve, ExperimentKind::remainder, ExperimentKind::rank,
                 ExperimentKind::eri, ExperimentKind::bounds, ExperimentKind::verify})
    if (to_string(k) == name) return k;
  throw ConfigError({"experiment: unknown experiment '" + name + "'"});
}

DensityFn parse_density(const json& j) {
  if (!j.is_object() || j.size() != 1)
    throw ConfigError({"expected exactly one of {\"constant\": c} or {\"cosine\": {...}}"});
  if (j.contains("constant")) {
    if (!j["constant"].is_number()) throw ConfigError({"constant: expected a number"});
    const double c = j["constant"].get<double>();
    return [c](std::span<const double>) { return c; };
  }
  if (j.contains("cosine")) {
    const json& p = j["cosine"];
    Checker c;
    if (c.is_object(p, "cosine")) {
      c.only_keys(p, "cosine", {"base", "amplitude", "kx", "ky"});
      const double base = c.number(p, "base", "cosine", 1.0).value_or(1.0);
      const double amp = c.number(p, "amplitude", "cosine").value_or(0.0);
      const double kx = static_cast<double>(c.integer(p, "kx", "cosine", 1).value_or(1));
      const double ky = static_cast<double>(c.integer(p, "ky", "cosine", 1).value_or(1));
      if (c.problems().empty())
        return [=](std::span<const double> x) {
          return base + amp * std::cos(kx * x[0]) * std::cos(ky * x[1]);
        };
    }
    throw ConfigError(c.problems());
  }
  throw ConfigError({"unknown density form " + j.dump()});
}

json domain_to_json(const DomainSpec& spec) {
  json j = {{"kind", to_string(spec.kind)}};
  switch (spec.kind) {
    case DomainKind::interval:
      j["a"] = spec.origin[0];
      j["b"] = spec.origin[0] + spec.extent[0];
      j["resolution"] = spec.resolution[0];
      break;
    case DomainKind::rectangle:
      j["lx"] = spec.extent[0];
      j["ly"] = spec.extent[1];
      j["resolution"] = spec.resolution;
      break;
    case DomainKind::l_shape:
      j["side"] = spec.extent[0];
      j["notch"] = spec.notch;
      j["resolution"] = spec.resolution[0];
      break;
    case DomainKind::torus:
      j["dim"] = spec.dim();
      j["period"] = spec.extent;
      j["resolution"] = spec.resolution;
      break;
    case DomainKind::weighted_torus:
      j["period"] = spec.extent[0];
      j["resolution"] = spec.resolution[0];
      j["density"] = spec.density_label.empty() ? json("custom")
                                                : json::parse(spec.density_label, nullptr, false);
      break;
  }
  return j;
}

DomainSpec domain_from_json(const json& j) {
  Checker c;
  const json d = check_domain(c, j);
  if (!c.problems().empty()) throw ConfigError(c.problems());
  const std::string kind = d["kind"];
  if (kind == "interval")
    return DomainSpec::interval(d["a"], d["b"], d["resolution"].get<int>());
  if (kind == "rectangle")
    return DomainSpec::rectangle(d["lx"], d["ly"], d["resolution"][0].get<int>(),
                                 d["resolution"][1].get<int>());
  if (kind == "l_shape")
    return DomainSpec::l_shape(d["side"], d["notch"], d["resolution"].get<int>());
  if (kind == "torus")
    return DomainSpec::torus(d["period"].get<std::vector<double>>(),
                             d["resolution"].get<std::vector<int>>());
  return DomainSpec::weighted_torus(d["period"], d["resolution"].get<int>(),
                                    parse_density(d["density"]), d["density"].dump());
}

ExperimentConfig parse_config(const json& j) {
  Checker c;
  if (!j.is_object()) throw ConfigError({"<root>: expected an object"});
  c.only_keys(j, "",
              {"version", "experiment", "domain", "basis", "params", "output_dir", "seed",
               "threads"});
  ExperimentConfig cfg;
  json resolved;

  const long version = c.integer(j, "version", "<root>", kConfigVersion).value_or(kConfigVersion);
  if (version != kConfigVersion)
    c.problem("version", fmt::format("unsupported version {} (expected {})", version, kConfigVersion));
  resolved["version"] = kConfigVersion;

  const auto exp = c.string(j, "experiment", "<root>", std::nullopt,
                            {"solve", "remainder", "rank", "eri", "bounds", "verify"});
  if (exp) cfg.experiment = parse_experiment(*exp);
  resolved["experiment"] = exp.value_or("verify");

  const bool needs_domain = exp && *exp != "bounds" && *exp != "verify";
  if (j.contains("domain")) {
    json d = check_domain(c, j["domain"]);
    resolved["domain"] = d;
  } else if (needs_domain) {
    c.problem("domain", "required");
  }

  json basis = {{"K", "full"}, {"method", "dense"}, {"analytic", false}};
  if (j.contains("basis") && c.is_object(j["basis"], "basis")) {
    const json& b = j["basis"];
    c.only_keys(b, "basis", {"K", "method", "analytic", "file"});
    if (b.contains("K")) {
      if (b["K"].is_number_integer() && b["K"].get<long>() > 0) {
        basis["K"] = b["K"];
        cfg.basis.K = b["K"].get<long>();
      } else if (!(b["K"].is_string() && b["K"] == "full")) {
        c.problem("basis.K", "expected a positive integer or \"full\"");
      }
    }
    basis["method"] = c.string(b, "method", "basis", "dense", {"dense", "iterative"}).value();
    basis["analytic"] = c.boolean(b, "analytic", "basis", false).value_or(false);
    if (b.contains("file")) {
      if (b["file"].is_string()) {
        basis["file"] = b["file"];
        cfg.basis.file = b["file"].get<std::string>();
      } else {
        c.problem("basis.file", "expected a path string");
      }
    }
  }
  cfg.basis.method = basis["method"];
  cfg.basis.analytic = basis["analytic"];
  resolved["basis"] = basis;

  if (exp) {
    const json params = j.contains("params") ? j["params"] : json::object();
    resolved["params"] = check_params(c, cfg.experiment, params);
    cfg.params = resolved["params"];
  }

  std::string out_dir;
  if (j.contains("output_dir")) {
    if (j["output_dir"].is_string())
      out_dir = j["output_dir"];
    else
      c.problem("output_dir", "expected a path string");
  }
  if (out_dir.empty()) {
    const char* env = std::getenv("LAPPROD_OUTPUT_DIR");
    out_dir = env && *env ? env : "lapprod_out";
  }
  resolved["output_dir"] = out_dir;
  cfg.output_dir = out_dir;

  const long seed = c.integer(j, "seed", "<root>", 0).value_or(0);
  if (seed < 0) c.problem("seed", "must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(std::max(seed, 0L));
  resolved["seed"] = cfg.seed;

  const long threads = c.integer(j, "threads", "<root>", 0).value_or(0);
  if (threads < 0) c.problem("threads", "must be nonnegative");
  cfg.threads = static_cast<unsigned>(std::max(threads, 0L));
  resolved["threads"] = cfg.threads;

  if (!c.problems().empty()) throw ConfigError(c.problems());

  if (resolved.contains("domain")) {
    cfg.domain = domain_from_json(resolved["domain"]);
    try {
      validate(*cfg.domain);
    } catch (const InvalidArgument& e) {
      throw ConfigError({std::string("domain: ") + e.what()});
    }
  }
  cfg.resolved = std::move(resolved);
  return cfg;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError({"override '" + assignment + "' must look like key.path=value"});
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  if (value.is_structured())
    throw ConfigError({"override '" + key + "' must assign a scalar"});
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (!node->is_object() && !node->is_null())
      throw ConfigError({"override '" + key + "' traverses a non-object"});
    start = dot + 1;
  }
}

}  // namespace lapprod
