#include "lapprod/fitting.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "lapprod/error.hpp"
#include "lapprod/parallel.hpp"

namespace lapprod {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Raw nodal products p = e_i ∘ e_j recovered from the weighted columns.
Eigen::MatrixXd raw_products(const ProductMatrix& pm) {
  const Eigen::VectorXd inv = pm.basis->grid->weights.cwiseSqrt().cwiseInverse();
  return inv.asDiagonal() * pm.columns;
}

// Basis built from leading columns of another basis, or from a nodal block.
std::shared_ptr<const EigenBasis> make_subspace_basis(const EigenBasis& parent,
                                                      Eigen::MatrixXd modes, Eigen::VectorXd freqs,
                                                      BasisSource source, int origin) {
  auto b = std::make_shared<EigenBasis>();
  b->grid = parent.grid;
  b->op = parent.op;
  b->modes = std::move(modes);
  b->freqs = std::move(freqs);
  b->residuals = Eigen::VectorXd::Zero(b->modes.cols());
  b->source = source;
  b->origin = origin;
  b->full_spectrum = false;
  return b;
}

std::shared_ptr<const SparseOperator> operator_for(const EigenBasis& b) {
  if (b.op) return b.op;
  return std::make_shared<const SparseOperator>(assemble_laplacian(b.grid));
}

// Precomputed expansions of every product in the eigenbasis.
class SpectralFitter {
 public:
  SpectralFitter(const ProductMatrix& pm, unsigned threads) : pm_(pm), threads_(threads) {
    const EigenBasis& b = *pm.basis;
    raw_ = raw_products(pm);
    coeffs_ = b.modes.transpose() * (b.grid->weights.asDiagonal() * raw_);
    if (b.full_spectrum) {
      const Eigen::Index K = coeffs_.rows();
      tails_.resize(K + 1, coeffs_.cols());
      tails_.row(K).setZero();
      for (Eigen::Index k = K - 1; k >= 0; --k)
        tails_.row(k) = tails_.row(k + 1) + coeffs_.row(k).cwiseAbs2();
    }
  }

  FitReport fit(double epsilon, NormKind norm) {
    if (!(epsilon > 0.0)) throw InvalidArgument("fit needs epsilon > 0");
    if (norm != NormKind::L2 && norm != NormKind::Linf)
      throw InvalidArgument("fit_spectral supports L2 and Linf");
    const EigenBasis& b = *pm_.basis;
    const int lo = b.origin;
    const int hi = b.max_index();
    FitReport rep;
    rep.n = pm_.n;
    rep.pair_count = pm_.pair_count();
    rep.epsilon = epsilon;
    rep.mode = FitMode::spectral;
    rep.norm = norm;

    int nu = hi;
    if (norm == NormKind::L2) {
      if (residual_l2(hi) <= epsilon) {
        rep.reached = true;
        int a = lo, z = hi;
        while (a < z) {
          const int mid = a + (z - a) / 2;
          if (residual_l2(mid) <= epsilon)
            z = mid;
          else
            a = mid + 1;
        }
        nu = a;
      }
    } else {
      const Eigen::VectorXd& curve = linf_curve();
      for (Eigen::Index c = 0; c < curve.size(); ++c)
        if (curve[c] <= epsilon) {
          nu = lo + static_cast<int>(c);
          rep.reached = true;
          break;
        }
    }

    // Direct re-verification against the returned subspace; step up on a
    // rounding-level disagreement.
    while (true) {
      const Eigen::Index keep = nu - lo + 1;
      auto sub = make_subspace_basis(b, b.modes.leftCols(keep), b.freqs.head(keep), b.source, lo);
      const double direct = fit_residuals(pm_, *sub, norm).maxCoeff();
      if (!rep.reached || direct <= epsilon + 1e-12 || nu == hi) {
        rep.nu = nu;
        rep.rank = static_cast<int>(keep);
        rep.max_residual = direct;
        rep.fitted = std::move(sub);
        if (direct > epsilon + 1e-12) rep.reached = false;
        break;
      }
      ++nu;
    }
    return rep;
  }

 private:
  double residual_l2(int nu) {
    const EigenBasis& b = *pm_.basis;
    const Eigen::Index keep = nu - b.origin + 1;
    if (b.full_spectrum) return std::sqrt(std::max(0.0, tails_.row(keep).maxCoeff()));
    const Eigen::MatrixXd r = raw_ - b.modes.leftCols(keep) * coeffs_.topRows(keep);
    const Eigen::VectorXd sw = b.grid->weights.cwiseSqrt();
    return (sw.asDiagonal() * r).colwise().norm().maxCoeff();
  }

  // max over pairs of the nodal max of R_ν p, for every ν.
  const Eigen::VectorXd& linf_curve() {
    if (linf_.size() > 0) return linf_;
    const EigenBasis& b = *pm_.basis;
    const Eigen::Index K = b.size();
    const std::size_t P = pm_.pair_count();
    Eigen::MatrixXd per_pair(K, static_cast<Eigen::Index>(P));
    parallel_for(P, threads_, [&](std::size_t c) {
      Eigen::VectorXd r = raw_.col(static_cast<Eigen::Index>(c));
      const auto cc = coeffs_.col(static_cast<Eigen::Index>(c));
      for (Eigen::Index k = 0; k < K; ++k) {
        r -= cc[k] * b.modes.col(k);
        per_pair(k, static_cast<Eigen::Index>(c)) = r.cwiseAbs().maxCoeff();
      }
    });
    linf_ = per_pair.rowwise().maxCoeff();
    return linf_;
  }

  const ProductMatrix& pm_;
  unsigned threads_;
  Eigen::MatrixXd raw_;
  Eigen::MatrixXd coeffs_;
  Eigen::MatrixXd tails_;
  Eigen::VectorXd linf_;
};

class OptimalFitter {
 public:
  explicit OptimalFitter(const ProductMatrix& pm) : pm_(pm) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(pm.columns, Eigen::ComputeThinU | Eigen::ComputeThinV);
    sigma_ = svd.singularValues();
    u_ = svd.matrixU();
    const Eigen::MatrixXd& v = svd.matrixV();
    // Sign convention: the largest-magnitude entry of each left vector is positive.
    for (Eigen::Index s = 0; s < u_.cols(); ++s) {
      Eigen::Index at = 0;
      u_.col(s).cwiseAbs().maxCoeff(&at);
      if (u_(at, s) < 0) u_.col(s) = -u_.col(s);
    }
    const Eigen::Index m = sigma_.size();
    // suffix_(r, c) = Σ_{s ≥ r} σ_s² V_cs², the squared residual of column c
    // after keeping r singular vectors.
    suffix_.resize(m + 1, v.rows());
    suffix_.row(m).setZero();
    for (Eigen::Index s = m - 1; s >= 0; --s)
      suffix_.row(s) = suffix_.row(s + 1) + (sigma_[s] * sigma_[s]) * v.col(s).transpose().cwiseAbs2();
  }

  FitReport fit(double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("fit needs epsilon > 0");
    const EigenBasis& b = *pm_.basis;
    const Eigen::Index m = sigma_.size();
    Eigen::Index r = 0;
    while (r < m && std::sqrt(std::max(0.0, suffix_.row(r).maxCoeff())) > epsilon) ++r;

    const Eigen::VectorXd inv_sw = b.grid->weights.cwiseSqrt().cwiseInverse();
    FitReport rep;
    rep.n = pm_.n;
    rep.pair_count = pm_.pair_count();
    rep.epsilon = epsilon;
    rep.mode = FitMode::optimal;
    rep.norm = NormKind::L2;
    rep.singular_values.assign(sigma_.data(), sigma_.data() + m);
    while (true) {
      auto sub = make_subspace_basis(b, inv_sw.asDiagonal() * u_.leftCols(r),
                                     Eigen::VectorXd::Zero(r), BasisSource::fitted, 1);
      const double direct = r == 0 ? pm_.columns.colwise().norm().maxCoeff()
                                   : fit_residuals(pm_, *sub, NormKind::L2).maxCoeff();
      if (direct <= epsilon + 1e-12 || r == m) {
        rep.rank = static_cast<int>(r);
        rep.max_residual = direct;
        rep.reached = direct <= epsilon + 1e-12;
        rep.fitted = std::move(sub);
        break;
      }
      ++r;
    }
    return rep;
  }

 private:
  const ProductMatrix& pm_;
  Eigen::VectorXd sigma_;
  Eigen::MatrixXd u_;
  Eigen::MatrixXd suffix_;
};

}  // namespace

std::size_t ProductMatrix::column_of(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i < 1 || j > n) throw InvalidArgument(fmt::format("pair ({}, {}) outside 1..{}", i, j, n));
  const std::size_t a = static_cast<std::size_t>(i - 1);
  return a * static_cast<std::size_t>(n) - a * (a - 1) / 2 + static_cast<std::size_t>(j - i);
}

ProductMatrix ProductMatrix::restrict_to(int m) const {
  if (m < 1 || m > n) throw InvalidArgument(fmt::format("restrict_to({}) outside 1..{}", m, n));
  ProductMatrix out;
  out.basis = basis;
  out.n = m;
  out.pairs = product_pairs(m);
  out.columns.resize(columns.rows(), static_cast<Eigen::Index>(out.pairs.size()));
  for (std::size_t c = 0; c < out.pairs.size(); ++c)
    out.columns.col(static_cast<Eigen::Index>(c)) =
        columns.col(static_cast<Eigen::Index>(column_of(out.pairs[c].first, out.pairs[c].second)));
  return out;
}

std::vector<std::pair<int, int>> product_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  for (int i = 1; i <= n; ++i)
    for (int j = i; j <= n; ++j) out.emplace_back(i, j);
  return out;
}

ProductMatrix assemble_products(std::shared_ptr<const EigenBasis> basis, int n,
                                const ProductOptions& options) {
  if (!basis) throw InvalidArgument("assemble_products: null basis");
  const EigenBasis& b = *basis;
  if (n < 1) throw InvalidArgument("assemble_products: n must be at least 1");
  if (n > b.max_index())
    throw InvalidArgument(fmt::format("n = {} exceeds the largest basis index {}", n, b.max_index()));
  if (!options.override_resolution_limit && b.source == BasisSource::numeric) {
    const int limit = resolution_limit(b);
    if (n > limit)
      throw InvalidArgument(fmt::format(
          "n = {} exceeds the resolution limit {}; refine the grid or set override_resolution_limit",
          n, limit));
  }
  const std::size_t P = static_cast<std::size_t>(n) * (n + 1) / 2;
  const std::size_t entries = P * static_cast<std::size_t>(b.modes.rows());
  if (entries > options.max_entries)
    throw InvalidArgument(fmt::format(
        "product matrix {} x {} = {} entries ({:.1f} MiB) exceeds the cap of {} entries",
        b.modes.rows(), P, entries, entries * 8.0 / (1 << 20), options.max_entries));

  ProductMatrix pm;
  pm.basis = std::move(basis);
  pm.n = n;
  pm.pairs = product_pairs(n);
  pm.columns.resize(b.modes.rows(), static_cast<Eigen::Index>(P));
  const Eigen::VectorXd sw = b.grid->weights.cwiseSqrt();
  parallel_for(P, options.threads, [&](std::size_t c) {
    const auto [i, j] = pm.pairs[c];
    pm.columns.col(static_cast<Eigen::Index>(c)) = sw.cwiseProduct(b.mode(i)).cwiseProduct(b.mode(j));
  });
  return pm;
}

std::string to_string(FitMode mode) { return mode == FitMode::optimal ? "optimal" : "spectral"; }

FitMode parse_fit_mode(const std::string& text) {
  if (text == "spectral") return FitMode::spectral;
  if (text == "optimal") return FitMode::optimal;
  throw InvalidArgument("unknown fit mode '" + text + "'");
}

FitReport fit_spectral(const ProductMatrix& products, double epsilon, NormKind norm,
                       unsigned threads) {
  SpectralFitter f(products, threads);
  return f.fit(epsilon, norm);
}

FitReport fit_spectral(std::shared_ptr<const EigenBasis> basis, int n, double epsilon,
                       NormKind norm, const FitOptions& options) {
  const ProductMatrix pm = assemble_products(
      std::move(basis), n, {options.override_resolution_limit, kDefaultProductEntryCap, options.threads});
  return fit_spectral(pm, epsilon, norm, options.threads);
}

FitReport fit_optimal(const ProductMatrix& products, double epsilon) {
  OptimalFitter f(products);
  return f.fit(epsilon);
}

Eigen::VectorXd fit_residuals(const ProductMatrix& products, const EigenBasis& fitted,
                              NormKind norm) {
  const EigenBasis& b = *products.basis;
  if (fitted.modes.rows() != b.modes.rows())
    throw InvalidArgument("fit_residuals: fitted basis lives on a different grid");
  const Eigen::VectorXd& w = b.grid->weights;
  const Eigen::MatrixXd raw = raw_products(products);
  const Eigen::MatrixXd coeffs = fitted.modes.transpose() * (w.asDiagonal() * raw);
  const Eigen::MatrixXd r = raw - fitted.modes * coeffs;
  if (norm == NormKind::Linf) return r.cwiseAbs().colwise().maxCoeff().transpose();
  if (norm != NormKind::L2) throw InvalidArgument("fit_residuals supports L2 and Linf");
  return (w.cwiseSqrt().asDiagonal() * r).colwise().norm().transpose();
}

bool GrowthStudy::any_unreachable() const {
  return std::any_of(reports.begin(), reports.end(), [](const FitReport& r) { return !r.reached; });
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("loglog_slope: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= lx.size();
  my /= ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

GrowthStudy rank_growth_study(std::shared_ptr<const EigenBasis> basis, std::vector<int> n_list,
                              std::vector<double> eps_list, const std::vector<FitMode>& modes,
                              NormKind norm, const FitOptions& options) {
  if (n_list.empty() || eps_list.empty() || modes.empty())
    throw InvalidArgument("rank_growth_study: n_list, eps_list and modes must be nonempty");
  std::sort(n_list.begin(), n_list.end());
  n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
  std::sort(eps_list.begin(), eps_list.end());
  eps_list.erase(std::unique(eps_list.begin(), eps_list.end()), eps_list.end());
  std::set<FitMode> mode_set(modes.begin(), modes.end());
  if (mode_set.count(FitMode::optimal) && norm != NormKind::L2)
    throw InvalidArgument("optimal mode fits use the L2 criterion only");

  const ProductMatrix full = assemble_products(
      basis, n_list.back(), {options.override_resolution_limit, kDefaultProductEntryCap, options.threads});
  GrowthStudy study;
  for (int n : n_list) {
    const ProductMatrix pm = n == full.n ? full : full.restrict_to(n);
    std::optional<SpectralFitter> spectral;
    std::optional<OptimalFitter> optimal;
    if (mode_set.count(FitMode::spectral)) spectral.emplace(pm, options.threads);
    if (mode_set.count(FitMode::optimal)) optimal.emplace(pm);
    for (double eps : eps_list)
      for (FitMode m : mode_set) {
        FitReport rep = m == FitMode::spectral ? spectral->fit(eps, norm) : optimal->fit(eps);
        rep.fitted.reset();   // keep the study light; callers refit when they need a basis
        study.reports.push_back(std::move(rep));
      }
  }
  for (FitMode m : mode_set) {
    for (double eps : eps_list) {
      std::vector<double> x, y;
      for (const auto& r : study.reports)
        if (r.mode == m && r.epsilon == eps && r.reached) {
          x.push_back(r.n);
          y.push_back(r.rank);
        }
      study.slope_in_n.push_back({m, eps, loglog_slope(x, y), x.size()});
    }
    for (int n : n_list) {
      std::vector<double> x, y;
      for (const auto& r : study.reports)
        if (r.mode == m && r.n == n && r.reached) {
          x.push_back(1.0 / r.epsilon);
          y.push_back(r.rank);
        }
      study.slope_in_inv_eps.push_back({m, static_cast<double>(n), loglog_slope(x, y), x.size()});
    }
  }
  return study;
}

std::string to_string(EriKernel k) { return k == EriKernel::green0 ? "green0" : "resolvent1"; }

EriKernel parse_kernel(const std::string& text) {
  if (text == "green0") return EriKernel::green0;
  if (text == "resolvent1") return EriKernel::resolvent1;
  throw InvalidArgument("unknown kernel '" + text + "' (expected green0 or resolvent1)");
}

double kernel_shift(EriKernel k) { return k == EriKernel::green0 ? 0.0 : 1.0; }

double EriReport::scale() const {
  return exact ? exact->cwiseAbs().maxCoeff() : 0.0;
}

nlohmann::json EriReport::summary() const {
  nlohmann::json j = {{"n", n},
                      {"kernel", to_string(kernel)},
                      {"pair_count", pairs.size()},
                      {"exact_solves", exact_solves},
                      {"fitted_solves", fitted_solves},
                      {"rank", rank},
                      {"epsilon", epsilon},
                      {"symmetry_defect", symmetry_defect},
                      {"timings",
                       {{"setup_seconds", setup_seconds},
                        {"exact_seconds", exact_seconds},
                        {"fitted_seconds", fitted_seconds}}}};
  j["scale"] = exact ? nlohmann::json(scale()) : nlohmann::json(nullptr);
  j["max_abs_error"] = max_abs_error ? nlohmann::json(*max_abs_error) : nlohmann::json(nullptr);
  j["max_rel_error"] = max_rel_error ? nlohmann::json(*max_rel_error) : nlohmann::json(nullptr);
  return j;
}

namespace {

void check_kernel(const EigenBasis& b, EriKernel kernel) {
  if (kernel == EriKernel::green0 && b.periodic())
    throw InvalidArgument(
        "kernel green0 is singular on a periodic domain; use resolvent1 on the torus");
}

// Solves every column of `rhs`, counting solver invocations.
Eigen::MatrixXd solve_columns(const SparseOperator& op, const Eigen::MatrixXd& rhs, double shift,
                              const EriOptions& options, std::size_t& count,
                              const std::vector<std::pair<int, int>>* labels) {
  Eigen::MatrixXd out(rhs.rows(), rhs.cols());
  std::atomic<std::size_t> calls{0};
  parallel_for(static_cast<std::size_t>(rhs.cols()), options.threads, [&](std::size_t c) {
    const Eigen::Index col = static_cast<Eigen::Index>(c);
    calls.fetch_add(1, std::memory_order_relaxed);
    try {
      out.col(col) = solve_shifted(op, rhs.col(col), shift, options.solve);
    } catch (const Error& e) {
      if (labels)
        throw Error(fmt::format("solve for pair ({}, {}) failed: {}", (*labels)[c].first,
                                (*labels)[c].second, e.what()));
      throw Error(fmt::format("solve for fitted column {} failed: {}", c, e.what()));
    }
  });
  count = calls.load();
  return out;
}

}  // namespace

EriReport eri_exact(std::shared_ptr<const EigenBasis> basis, int n, EriKernel kernel,
                    const EriOptions& options) {
  if (!basis) throw InvalidArgument("eri_exact: null basis");
  check_kernel(*basis, kernel);
  auto t0 = Clock::now();
  const auto op = operator_for(*basis);
  const ProductMatrix pm = assemble_products(
      basis, n, {options.override_resolution_limit, kDefaultProductEntryCap, options.threads});
  const Eigen::MatrixXd raw = raw_products(pm);
  EriReport rep;
  rep.n = n;
  rep.kernel = kernel;
  rep.pairs = pm.pairs;
  rep.setup_seconds = seconds_since(t0);

  t0 = Clock::now();
  const Eigen::MatrixXd u =
      solve_columns(*op, raw, kernel_shift(kernel), options, rep.exact_solves, &pm.pairs);
  Eigen::MatrixXd table = raw.transpose() * (basis->grid->weights.asDiagonal() * u);
  rep.symmetry_defect = (table - table.transpose()).cwiseAbs().maxCoeff();
  for (Eigen::Index a = 0; a < table.rows(); ++a)
    for (Eigen::Index c = a + 1; c < table.cols(); ++c) table(c, a) = table(a, c);
  rep.exact = std::move(table);
  rep.exact_seconds = seconds_since(t0);
  return rep;
}

EriReport eri_fitted(std::shared_ptr<const EigenBasis> basis, const FitReport& fit, int n,
                     EriKernel kernel, const EriReport* exact, const EriOptions& options) {
  if (!basis) throw InvalidArgument("eri_fitted: null basis");
  if (!fit.fitted) throw InvalidArgument("eri_fitted: the fit carries no basis");
  if (fit.n < n)
    throw InvalidArgument(fmt::format("eri_fitted: fit covers n = {}, requested {}", fit.n, n));
  check_kernel(*basis, kernel);
  auto t0 = Clock::now();
  const auto op = operator_for(*basis);
  const ProductMatrix pm = assemble_products(
      basis, n, {options.override_resolution_limit, kDefaultProductEntryCap, options.threads});
  const Eigen::MatrixXd raw = raw_products(pm);
  const Eigen::VectorXd& w = basis->grid->weights;
  const Eigen::MatrixXd& B = fit.fitted->modes;
  if (B.rows() != raw.rows()) throw InvalidArgument("eri_fitted: fit lives on a different grid");
  const Eigen::MatrixXd coeffs = B.transpose() * (w.asDiagonal() * raw);

  EriReport rep;
  rep.n = n;
  rep.kernel = kernel;
  rep.pairs = pm.pairs;
  rep.rank = static_cast<int>(B.cols());
  rep.epsilon = fit.epsilon;
  rep.setup_seconds = seconds_since(t0);

  t0 = Clock::now();
  Eigen::MatrixXd core = Eigen::MatrixXd::Zero(B.cols(), B.cols());
  if (B.cols() > 0) {
    const Eigen::MatrixXd s =
        solve_columns(*op, B, kernel_shift(kernel), options, rep.fitted_solves, nullptr);
    core = B.transpose() * (w.asDiagonal() * s);
    core = 0.5 * (core + core.transpose()).eval();
  }
  Eigen::MatrixXd table = coeffs.transpose() * core * coeffs;
  for (Eigen::Index a = 0; a < table.rows(); ++a)
    for (Eigen::Index c = a + 1; c < table.cols(); ++c) table(c, a) = table(a, c);
  rep.fitted = std::move(table);
  rep.fitted_seconds = seconds_since(t0);

  if (exact && exact->exact && exact->n == n && exact->kernel == kernel) {
    rep.exact = exact->exact;
    rep.exact_solves = exact->exact_solves;
    rep.exact_seconds = exact->exact_seconds;
    rep.symmetry_defect = exact->symmetry_defect;
    const double abs_err = (*rep.fitted - *rep.exact).cwiseAbs().maxCoeff();
    rep.max_abs_error = abs_err;
    const double sc = rep.scale();
    rep.max_rel_error = sc > 0 ? abs_err / sc : abs_err;
  }
  return rep;
}

}  // namespace lapprod
