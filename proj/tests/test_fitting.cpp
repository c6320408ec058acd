#include "support.hpp"

#include <set>

#include "lapprod/basis_io.hpp"
#include "lapprod/error.hpp"
#include "lapprod/fitting.hpp"

using namespace lapprod;
using namespace lapprod::test;

namespace {

int cutoff_index(const EigenBasis& b, double lam) {
  int nu = b.first_index();
  for (int k = b.first_index(); k <= b.max_index(); ++k)
    if (b.frequency(k) <= lam + 1e-9) nu = k;
  return nu;
}

std::shared_ptr<const EigenBasis> lshape() {
  static const auto b = numeric(DomainSpec::l_shape(1.0, 0.5, 32));
  return b;
}

}  // namespace

TEST_CASE("product matrix layout") {
  const auto b = analytic(DomainSpec::interval(0.0, M_PI, 64), 20);
  const ProductMatrix one = assemble_products(b, 1);
  REQUIRE(one.columns.cols() == 1);
  const Eigen::VectorXd& w = b->grid->weights;
  double quad = 0.0;
  for (Eigen::Index m = 0; m < w.size(); ++m) quad += w[m] * std::pow(b->modes(m, 0), 4);
  CHECK(one.columns.col(0).squaredNorm() == doctest::Approx(quad).epsilon(1e-13));
  CHECK(one.columns.col(0).squaredNorm() == doctest::Approx(3 / (2 * M_PI)).epsilon(1e-12));

  CHECK(product_pairs(10).size() == 55);
  const ProductMatrix pm = assemble_products(b, 10);
  CHECK(pm.pair_count() == 55);
  for (std::size_t c = 0; c < pm.pairs.size(); ++c) {
    const auto [i, j] = pm.pairs[c];
    CHECK(i <= j);
    CHECK(pm.column_of(i, j) == c);
    CHECK(pm.column_of(j, i) == c);
    if (c > 0) CHECK(pm.pairs[c - 1] < pm.pairs[c]);
    const Eigen::VectorXd ref = w.cwiseSqrt().cwiseProduct(b->mode(i)).cwiseProduct(b->mode(j));
    CHECK((pm.columns.col(static_cast<Eigen::Index>(c)) - ref).cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK_THROWS_AS(pm.column_of(0, 3), InvalidArgument);
  CHECK_THROWS_AS(pm.column_of(3, 11), InvalidArgument);

  const ProductMatrix small = pm.restrict_to(4);
  CHECK(small.pair_count() == 10);
  for (std::size_t c = 0; c < small.pairs.size(); ++c) {
    const auto [i, j] = small.pairs[c];
    CHECK(small.columns.col(static_cast<Eigen::Index>(c)) ==
          pm.columns.col(static_cast<Eigen::Index>(pm.column_of(i, j))));
  }

  const auto t = analytic(DomainSpec::torus(1, 2 * M_PI, 16));
  CHECK(assemble_products(t, 3).pairs.front() == std::pair{1, 1});   // constant mode excluded
}

TEST_CASE("product matrix guards") {
  const auto b = lshape();
  CHECK_THROWS_AS(assemble_products(b, 0), InvalidArgument);
  CHECK_THROWS_AS(assemble_products(b, b->max_index() + 1, {.override_resolution_limit = true}),
                  InvalidArgument);
  CHECK_THROWS_AS(assemble_products(b, resolution_limit(*b) + 1), InvalidArgument);
  try {
    assemble_products(b, 6, {.override_resolution_limit = true, .max_entries = 1000});
    FAIL("expected the memory cap to trip");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("MiB") != std::string::npos);
  }
}

TEST_CASE("spectral fits on the torus are exact past the frequency cutoff") {
  const auto t = analytic(DomainSpec::torus(2, 2 * M_PI, 24), 150);
  for (int n : {4, 8}) {
    const FitReport r = fit_spectral(t, n, 1e-9);
    REQUIRE(r.reached);
    CHECK(r.nu <= cutoff_index(*t, 2 * t->frequency(n)));
    CHECK(r.rank == r.nu + 1);
    CHECK(r.max_residual <= 1e-9);
  }
}

TEST_CASE("vacuous and monotone spectral targets") {
  const auto b = lshape();
  const ProductMatrix pm = assemble_products(b, 5);
  const double biggest = (pm.columns.colwise().norm()).maxCoeff();
  const FitReport vac = fit_spectral(pm, biggest * 1.01);
  CHECK(vac.nu == b->first_index());
  CHECK(vac.rank == 1);

  int prev_nu = std::numeric_limits<int>::max();
  for (double eps : {1e-4, 2e-4, 4e-4, 1e-3, 2e-3, 1e-2, 1e-1}) {
    const FitReport r = fit_spectral(pm, eps);
    REQUIRE(r.reached);
    CHECK(r.nu <= prev_nu);
    CHECK(r.rank == r.nu);   // Dirichlet index origin
    CHECK(r.max_residual <= eps);
    CHECK(r.rank <= static_cast<int>(b->size()));
    CHECK(fit_residuals(pm, *r.fitted).maxCoeff() <= eps + 1e-12);
    // ν − 1 must miss the target.
    if (r.nu > b->first_index()) {
      const ProductMatrix& p = pm;
      double worst = 0.0;
      for (Eigen::Index c = 0; c < p.columns.cols(); ++c) {
        const Eigen::VectorXd col = p.columns.col(c);
        const Eigen::VectorXd sw = b->grid->weights.cwiseSqrt();
        const Eigen::VectorXd coeffs = b->modes.leftCols(r.nu - 1).transpose() * sw.cwiseProduct(col);
        worst = std::max(worst, std::sqrt(std::max(0.0, col.squaredNorm() - coeffs.squaredNorm())));
      }
      CHECK(worst > eps);
    }
    prev_nu = r.nu;
  }

  const FitReport inf = fit_spectral(pm, 1e-2, NormKind::Linf);
  REQUIRE(inf.reached);
  CHECK(fit_residuals(pm, *inf.fitted, NormKind::Linf).maxCoeff() <= 1e-2 + 1e-12);
  CHECK_THROWS_AS(fit_spectral(pm, 0.0), InvalidArgument);
  CHECK_THROWS_AS(fit_spectral(pm, 1e-3, NormKind::Hminus1), InvalidArgument);
}

TEST_CASE("unreachable spectral targets are reported") {
  const auto part = numeric(DomainSpec::l_shape(1.0, 0.5, 32), 12);
  const FitReport r = fit_spectral(part, 4, 1e-8);
  CHECK_FALSE(r.reached);
}

TEST_CASE("optimal fits") {
  const auto b = lshape();
  const ProductMatrix pm = assemble_products(b, 6);
  int prev = std::numeric_limits<int>::max();
  for (double eps : {1e-5, 1e-4, 1e-3, 1e-2, 1e-1}) {
    const FitReport o = fit_optimal(pm, eps);
    const FitReport s = fit_spectral(pm, eps);
    REQUIRE(o.reached);
    CHECK(o.rank <= s.rank);
    CHECK(o.rank <= prev);
    CHECK(o.rank <= static_cast<int>(pm.pair_count()));
    CHECK(o.max_residual <= eps);
    CHECK(fit_residuals(pm, *o.fitted).maxCoeff() <= eps + 1e-12);
    CHECK(diagnose(*o.fitted).gram_defect <= 1e-10);
    CHECK(o.fitted->source == BasisSource::fitted);
    CHECK(o.singular_values.size() >= static_cast<std::size_t>(o.rank));
    prev = o.rank;
  }
  // Exhaustion: the rank for a tiny ε is the numerical rank of the matrix.
  const FitReport tiny = fit_optimal(pm, 1e-13);
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(pm.columns);
  const auto sv = svd.singularValues();
  const int numerical = static_cast<int>((sv.array() > sv[0] * 1e-12).count());
  CHECK(tiny.rank == numerical);
  CHECK(fit_optimal(pm, 1e6).rank == 0);
}

TEST_CASE("optimal torus rank counts product frequencies") {
  const auto t = analytic(DomainSpec::torus(2, 2 * M_PI, 24), 120);
  const int n = 4;
  // Every product of two lattice modes lives on the lattice points ±ξ_i ± ξ_j;
  // collect the modes the products actually touch.
  const ProductMatrix pm = assemble_products(t, n);
  std::set<int> used;
  for (Eigen::Index c = 0; c < pm.columns.cols(); ++c) {
    const auto [i, j] = pm.pairs[static_cast<std::size_t>(c)];
    const int tuple[] = {i, j};
    const Eigen::VectorXd coeff = expand(*t, mode_product(*t, tuple));
    for (Eigen::Index k = 0; k < coeff.size(); ++k)
      if (std::abs(coeff[k]) > 1e-10) used.insert(static_cast<int>(k));
  }
  for (double eps : {1e-2, 1e-6, 1e-10}) {
    const FitReport o = fit_optimal(pm, eps);
    CHECK(o.rank <= static_cast<int>(used.size()));
  }
  CHECK(fit_optimal(pm, 1e-6).rank == fit_optimal(pm, 1e-10).rank);
}

TEST_CASE("growth study") {
  const auto b = lshape();
  const GrowthStudy g = rank_growth_study(b, {6, 3, 4}, {1e-2, 1e-3}, {FitMode::spectral, FitMode::optimal});
  REQUIRE(g.reports.size() == 12);
  CHECK(g.reports.front().n == 3);
  CHECK(g.reports.front().epsilon == 1e-3);
  CHECK(g.reports.front().mode == FitMode::spectral);
  CHECK_FALSE(g.any_unreachable());
  for (std::size_t i = 0; i < g.reports.size(); i += 4) {
    const auto& s3 = g.reports[i];       // spectral ε=1e-3
    const auto& o3 = g.reports[i + 1];   // optimal ε=1e-3
    const auto& o2 = g.reports[i + 3];   // optimal ε=1e-2
    CHECK(o3.rank <= s3.rank);
    CHECK(o2.rank <= o3.rank);
  }
  CHECK(g.slope_in_n.size() == 4);
  CHECK(g.slope_in_inv_eps.size() == 6);
  CHECK_THROWS_AS(rank_growth_study(b, {3}, {1e-3}, {FitMode::optimal}, NormKind::Linf), InvalidArgument);

  CHECK(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}) == doctest::Approx(2.0));
  CHECK(loglog_slope({1, 2, 4}, {5, 0, 20}) == doctest::Approx(1.0));
}

TEST_CASE("exact ERI table") {
  const auto b = lshape();
  const int n = 4;
  const EriReport e = eri_exact(b, n, EriKernel::green0);
  REQUIRE(e.exact);
  const Eigen::MatrixXd& T = *e.exact;
  CHECK(e.exact_solves == 10);
  CHECK(T == T.transpose());
  CHECK(e.symmetry_defect <= 1e-9 * e.scale());
  CHECK(T(0, 0) > 0.0);
  for (Eigen::Index a = 0; a < T.rows(); ++a) CHECK(T(a, a) >= -1e-10);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(T).eigenvalues().minCoeff() >= -1e-10 * e.scale());

  // Direct definition for one entry.
  const int ij[] = {1, 2}, kl[] = {2, 3};
  const Field pij = mode_product(*b, ij), pkl = mode_product(*b, kl);
  const double direct = inner(*b->grid, pij, solve_shifted(*b->op, pkl, 0.0));
  const ProductMatrix pm = assemble_products(b, n);
  CHECK(rel(T(static_cast<Eigen::Index>(pm.column_of(1, 2)), static_cast<Eigen::Index>(pm.column_of(2, 3))),
            direct) < 1e-9);

  const auto t = analytic(DomainSpec::torus(2, 2 * M_PI, 12), 20);
  CHECK_THROWS_WITH_AS(eri_exact(t, 3, EriKernel::green0), doctest::Contains("singular"), InvalidArgument);
}

TEST_CASE("torus resolvent ERI matches the spectral representation") {
  // Full discrete spectrum: (ij|kl) = Σ_m c^{ij}_m c^{kl}_m / (1 + λ_m²).
  const auto b = numeric(DomainSpec::torus(2, 2 * M_PI, 20));
  REQUIRE(b->full_spectrum);
  const int n = 5;
  const EriReport e = eri_exact(b, n, EriKernel::resolvent1, {.solve = {.tolerance = 1e-13}});
  const ProductMatrix pm = assemble_products(b, n);
  Eigen::MatrixXd C(b->size(), pm.columns.cols());
  for (Eigen::Index c = 0; c < C.cols(); ++c) {
    const auto [i, j] = pm.pairs[static_cast<std::size_t>(c)];
    const int tuple[] = {i, j};
    C.col(c) = expand(*b, mode_product(*b, tuple));
  }
  const Eigen::VectorXd damp = (1.0 + b->freqs.array().square()).inverse();
  const Eigen::MatrixXd oracle = C.transpose() * damp.asDiagonal() * C;
  CHECK((*e.exact - oracle).cwiseAbs().maxCoeff() <= 1e-8 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("fitted ERI") {
  const auto t = analytic(DomainSpec::torus(2, 2 * M_PI, 24), 100);
  const int n = 6;
  const EriReport exact = eri_exact(t, n, EriKernel::resolvent1, {.solve = {.tolerance = 1e-13}});
  const ProductMatrix pm = assemble_products(t, n);

  const FitReport full = fit_optimal(pm, 1e-12);
  const EriReport f = eri_fitted(t, full, n, EriKernel::resolvent1, &exact, {.solve = {.tolerance = 1e-13}});
  REQUIRE(f.max_abs_error);
  CHECK(*f.max_rel_error <= 1e-9);
  CHECK(f.fitted_solves == static_cast<std::size_t>(full.rank));
  CHECK(f.exact_solves == pm.pair_count());
  CHECK(*f.fitted == f.fitted->transpose());

  const FitReport spec = fit_spectral(pm, 1e-10);
  const EriReport fs = eri_fitted(t, spec, n, EriKernel::resolvent1, &exact);
  CHECK(*fs.max_rel_error <= 1e-8);
  CHECK(fs.fitted_solves == static_cast<std::size_t>(spec.rank));

  const auto b = lshape();
  const EriReport ex = eri_exact(b, 5, EriKernel::green0);
  const ProductMatrix lp = assemble_products(b, 5);
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const FitReport fit = fit_optimal(lp, eps);
    const EriReport fe = eri_fitted(b, fit, 5, EriKernel::green0, &ex);
    CHECK(*fe.max_abs_error <= 10 * eps * std::sqrt(fe.scale()));
    CHECK(fe.fitted_solves == static_cast<std::size_t>(fit.rank));
  }

  const EriReport bare = eri_fitted(t, full, n, EriKernel::resolvent1);
  CHECK_FALSE(bare.exact);
  CHECK_FALSE(bare.max_abs_error);
  CHECK(bare.summary()["max_abs_error"].is_null());
  CHECK_THROWS_AS(eri_fitted(t, full, n + 1, EriKernel::resolvent1), InvalidArgument);
}

TEST_CASE("fitted basis persists with its tag") {
  const auto b = lshape();
  const FitReport o = fit_optimal(assemble_products(b, 4), 1e-3);
  const auto file = std::filesystem::temp_directory_path() / "lapprod_fitted_test.lpb";
  save_basis(file, *o.fitted);
  const BasisFile raw = read_basis_file(file);
  CHECK(raw.header["tag"] == "fitted");
  const EigenBasis back = load_basis(file, b->grid);
  CHECK(back.source == BasisSource::fitted);
  CHECK(back.modes == o.fitted->modes);
  std::filesystem::remove(file);
}

TEST_CASE("names round trip") {
  CHECK(parse_fit_mode(to_string(FitMode::optimal)) == FitMode::optimal);
  CHECK(parse_kernel(to_string(EriKernel::green0)) == EriKernel::green0);
  CHECK(kernel_shift(EriKernel::resolvent1) == 1.0);
  CHECK_THROWS_AS(parse_kernel("coulomb"), InvalidArgument);
  CHECK_THROWS_AS(parse_fit_mode("greedy"), InvalidArgument);
}
