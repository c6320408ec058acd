#include "lapprod/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "lapprod/error.hpp"

namespace lapprod {

namespace {

std::int64_t narrow(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw Error("rational arithmetic overflow");
  return static_cast<std::int64_t>(v);
}

Rational make(__int128 num, __int128 den) {
  if (den == 0) throw InvalidArgument("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  __int128 a = num < 0 ? -num : num;
  __int128 b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  return Rational(narrow(num), narrow(den));
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw InvalidArgument("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g > 1 ? num / g : num;
  den_ = g > 1 ? den / g : den;
}

std::string Rational::str() const {
  return den_ == 1 ? fmt::format("{}", num_) : fmt::format("{}/{}", num_, den_);
}

Rational Rational::parse(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto slash = text.find('/');
    if (slash == std::string::npos) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw InvalidArgument("");
      return Rational(v);
    }
    const std::string a = text.substr(0, slash), b = text.substr(slash + 1);
    std::size_t ua = 0, ub = 0;
    const long long n = std::stoll(a, &ua);
    const long long d = std::stoll(b, &ub);
    if (ua != a.size() || ub != b.size()) throw InvalidArgument("");
    return Rational(n, d);
  } catch (const std::logic_error&) {
    throw InvalidArgument("not a rational: '" + text + "'");
  } catch (const InvalidArgument&) {
    throw InvalidArgument("not a rational: '" + text + "'");
  }
}

Rational operator+(Rational a, Rational b) {
  return make(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
              static_cast<__int128>(a.den_) * b.den_);
}
Rational operator-(Rational a, Rational b) { return a + (-b); }
Rational operator*(Rational a, Rational b) {
  return make(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
}
Rational operator/(Rational a, Rational b) {
  if (b.num_ == 0) throw InvalidArgument("rational division by zero");
  return make(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
}
std::strong_ordering operator<=>(Rational a, Rational b) {
  const __int128 l = static_cast<__int128>(a.num_) * b.den_;
  const __int128 r = static_cast<__int128>(b.num_) * a.den_;
  return l <=> r;
}

Rational max(Rational a, Rational b) { return a < b ? b : a; }

std::string to_string(Setting s) {
  return s == Setting::dirichlet ? "dirichlet" : "boundaryless";
}

Setting parse_setting(const std::string& text) {
  if (text == "boundaryless") return Setting::boundaryless;
  if (text == "dirichlet") return Setting::dirichlet;
  throw InvalidArgument("unknown setting '" + text + "' (expected boundaryless or dirichlet)");
}

Rational sigma_pd(Rational p, int d) {
  if (p <= Rational(2)) throw InvalidArgument(fmt::format("sigma_pd needs p > 2, got {}", p.str()));
  if (d < 1) throw InvalidArgument(fmt::format("sigma_pd needs d >= 1, got {}", d));
  const Rational half(1, 2);
  const Rational gap = half - Rational(1) / p;
  const Rational a = Rational(d - 1, 2) * gap;
  const Rational b = Rational(d) * gap - half;
  return max(a, b);
}

Rational sigma_pd_dirichlet(int d) {
  switch (d) {
    case 2: return {1, 6};
    case 3: return {1, 3};
    case 4: return {1, 2};
    default:
      throw InvalidArgument(fmt::format("Dirichlet L4 exponent known for d in 2..4, got {}", d));
  }
}

Rational sigma4(int d, Setting setting) {
  return setting == Setting::dirichlet ? sigma_pd_dirichlet(d) : sigma_pd(Rational(4), d);
}

Rational sigma_inf(int d, Setting setting) {
  return Rational(2, d) * sigma4(d, setting) + Rational(d + 1, 2 * d);
}

Rational sigma_dl(int d, int ell) {
  if (ell < 2) throw InvalidArgument(fmt::format("sigma_dl needs l >= 2, got {}", ell));
  return Rational(ell, d) * sigma_pd(Rational(2 * ell), d) + Rational(d + 1, 2 * d);
}

Rational mu_d(int d, Setting setting) {
  if (d < 2 || d > 4) throw InvalidArgument(fmt::format("mu(d) defined for d in 2..4, got {}", d));
  if (setting == Setting::boundaryless) {
    static const Rational table[] = {{1, 4}, {1, 2}, {1, 1}};
    return table[d - 2];
  }
  static const Rational table[] = {{1, 3}, {2, 3}, {1, 1}};
  return table[d - 2];
}

ExponentTable exponent_table(int d, Setting setting, const std::vector<Rational>& p_list) {
  if (d < 1) throw InvalidArgument("exponent_table: d must be positive");
  ExponentTable t;
  t.d = d;
  t.setting = setting;
  std::vector<Rational> ps = p_list;
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  for (const Rational& p : ps) {
    if (setting == Setting::dirichlet) {
      if (p == Rational(4) && d >= 2 && d <= 4)
        t.sigma_p.emplace_back(p, sigma_pd_dirichlet(d));
      else
        t.unavailable_p.push_back(p);
    } else {
      t.sigma_p.emplace_back(p, sigma_pd(p, d));
    }
  }
  if (setting == Setting::dirichlet && (d < 2 || d > 4))
    throw InvalidArgument(fmt::format("Dirichlet exponents are tabulated for d in 2..4, got {}", d));
  t.sigma_inf = sigma_inf(d, setting);
  if (setting == Setting::dirichlet) {
    t.sigma_dl.emplace_back(2, t.sigma_inf);
  } else {
    for (int ell = 2; ell <= 4; ++ell) t.sigma_dl.emplace_back(ell, sigma_dl(d, ell));
  }
  if (d >= 2 && d <= 4) t.mu = mu_d(d, setting);
  return t;
}

std::string ExponentTable::text() const {
  std::string out = fmt::format("exponents  d = {}  setting = {}\n", d, to_string(setting));
  auto row = [&](const std::string& name, const Rational& v) {
    out += fmt::format("  {:<14} {:>8}   {:.12g}\n", name, v.str(), v.to_double());
  };
  for (const auto& [p, s] : sigma_p) row(fmt::format("sigma({},{})", p.str(), d), s);
  for (const auto& p : unavailable_p)
    out += fmt::format("  {:<14} {:>8}\n", fmt::format("sigma({},{})", p.str(), d), "n/a");
  row("sigma_inf", sigma_inf);
  for (const auto& [ell, s] : sigma_dl) row(fmt::format("sigma_{{{},{}}}", d, ell), s);
  if (mu) row(fmt::format("mu({})", d), *mu);
  return out;
}

nlohmann::json ExponentTable::to_json() const {
  nlohmann::json j;
  j["d"] = d;
  j["setting"] = to_string(setting);
  nlohmann::json sp = nlohmann::json::array();
  for (const auto& [p, s] : sigma_p) sp.push_back({{"p", p.str()}, {"value", s.str()}});
  j["sigma_p"] = sp;
  nlohmann::json un = nlohmann::json::array();
  for (const auto& p : unavailable_p) un.push_back(p.str());
  j["unavailable_p"] = un;
  j["sigma_inf"] = sigma_inf.str();
  nlohmann::json sd = nlohmann::json::array();
  for (const auto& [ell, s] : sigma_dl) sd.push_back({{"l", ell}, {"value", s.str()}});
  j["sigma_dl"] = sd;
  j["mu"] = mu ? nlohmann::json(mu->str()) : nlohmann::json(nullptr);
  return j;
}

std::string to_string(Theorem t) {
  switch (t) {
    case Theorem::T1_L2: return "T1_L2";
    case Theorem::T1_Linf: return "T1_Linf";
    case Theorem::T2: return "T2";
    case Theorem::T3_Hminus1: return "T3_Hminus1";
  }
  return "?";
}

Theorem parse_theorem(const std::string& text) {
  for (Theorem t : {Theorem::T1_L2, Theorem::T1_Linf, Theorem::T2, Theorem::T3_Hminus1})
    if (to_string(t) == text) return t;
  throw InvalidArgument("unknown theorem '" + text + "'");
}

nlohmann::json ShapeCheck::to_json() const {
  return {{"theorem", to_string(theorem)},
          {"kappa", kappa},
          {"sigma", sigma.str()},
          {"sigma_label", sigma_label},
          {"rows", rows.size()},
          {"max_c_hat", max_c_hat},
          {"max_lower_half", max_lower},
          {"max_upper_half", max_upper},
          {"verdict", verdict()}};
}

ShapeCheck theorem_shape_check(const std::vector<RemainderReport>& reports, Theorem theorem,
                               int kappa) {
  if (kappa < 1) throw InvalidArgument(fmt::format("shape check needs kappa >= 1, got {}", kappa));
  if (reports.empty()) throw InvalidArgument("shape check needs at least one report");
  const RemainderReport& first = reports.front();
  for (const auto& r : reports)
    if (r.basis_id != first.basis_id)
      throw InvalidArgument("shape check: reports come from different bases");

  NormKind want = NormKind::L2;
  if (theorem == Theorem::T1_Linf || theorem == Theorem::T2) want = NormKind::Linf;
  if (theorem == Theorem::T3_Hminus1) want = NormKind::Hminus1;

  const int d = first.dim;
  const Setting setting = first.dirichlet ? Setting::dirichlet : Setting::boundaryless;
  ShapeCheck out;
  out.theorem = theorem;
  out.kappa = kappa;
  switch (theorem) {
    case Theorem::T1_L2:
      out.sigma = Rational(2, d) * sigma4(d, setting);
      out.sigma_label = "proof exponent 2*sigma(4,d)/d";
      break;
    case Theorem::T1_Linf:
      out.sigma = sigma_inf(d, setting);
      out.sigma_label = "sigma_inf";
      break;
    case Theorem::T2: {
      const int ell = static_cast<int>(first.tuple.size());
      out.sigma = sigma_dl(d, ell);
      out.sigma_label = fmt::format("sigma_{{{},{}}}", d, ell);
      break;
    }
    case Theorem::T3_Hminus1:
      out.sigma = Rational(2) * sigma4(d, setting);
      out.sigma_label = "2*sigma(4,d)";
      break;
  }
  const double s = out.sigma.to_double();

  std::map<int, double> per_nu;
  for (const auto& r : reports) {
    if (r.kind.kind != want) continue;
    if (theorem == Theorem::T2 && static_cast<int>(r.tuple.size()) != static_cast<int>(first.tuple.size()))
      throw InvalidArgument("shape check T2: tuples of different lengths");
    if (r.nu <= r.n)
      throw InvalidArgument(fmt::format("shape check needs nu > n (got nu = {}, n = {})", r.nu, r.n));
    ShapeRow row{r.tuple, r.nu, r.n, r.value_upper.value_or(r.value), 0.0};
    if (theorem == Theorem::T3_Hminus1) {
      if (r.lambda_n <= 0.0) throw InvalidArgument("shape check T3 needs lambda_n > 0");
      row.c_hat = row.value * r.lambda_nu / std::pow(r.lambda_n, s);
    } else {
      const double n = r.n, nu = r.nu;
      row.c_hat = row.value / (std::pow(n, s) * std::pow(n / nu, kappa));
    }
    auto [it, inserted] = per_nu.emplace(r.nu, row.c_hat);
    if (!inserted) it->second = std::max(it->second, row.c_hat);
    out.max_c_hat = std::max(out.max_c_hat, row.c_hat);
    out.rows.push_back(std::move(row));
  }
  if (out.rows.empty())
    throw InvalidArgument(fmt::format("shape check {}: no reports of the matching norm kind",
                                      to_string(theorem)));
  if (per_nu.size() < 2)
    throw InvalidArgument("shape check needs at least two distinct nu values");
  std::vector<double> by_nu;
  for (const auto& [nu, c] : per_nu) by_nu.push_back(c);
  const std::size_t half = by_nu.size() / 2;
  out.max_lower = *std::max_element(by_nu.begin(), by_nu.begin() + half);
  out.max_upper = *std::max_element(by_nu.end() - half, by_nu.end());
  out.bounded = out.max_upper <= out.max_lower;
  return out;
}

LpGrowth lp_growth(const EigenBasis& basis, int p, int j_lo, int j_hi) {
  if (p <= 2) throw InvalidArgument("lp_growth needs p > 2");
  if (j_hi < j_lo) throw InvalidArgument("lp_growth: empty index range");
  const int d = basis.grid->dim();
  LpGrowth out;
  out.p = p;
  out.sigma = (p == 4 && !basis.periodic() && d >= 2 && d <= 4) ? sigma_pd_dirichlet(d)
                                                                : sigma_pd(Rational(p), d);
  const double s = out.sigma.to_double();
  const Eigen::VectorXd& w = basis.grid->weights;
  double running = 0.0;
  for (int j = j_lo; j <= j_hi; ++j) {
    const double lam = basis.frequency(j);
    if (lam <= 0.0) continue;
    const auto e = basis.mode(j);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < e.size(); ++m) acc += w[m] * std::pow(std::abs(e[m]), p);
    const double ratio = std::pow(acc, 1.0 / p) / std::pow(lam, s);
    running = std::max(running, ratio);
    out.indices.push_back(j);
    out.ratios.push_back(ratio);
    out.running_max.push_back(running);
  }
  if (out.ratios.size() < 2) return out;
  const std::size_t half = out.ratios.size() / 2;
  out.max_lower = *std::max_element(out.ratios.begin(), out.ratios.begin() + half);
  out.max_upper = *std::max_element(out.ratios.end() - half, out.ratios.end());
  out.alarm = out.max_upper > 1.25 * out.max_lower;
  return out;
}

}  // namespace lapprod
