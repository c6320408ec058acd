#include "lapprod/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "lapprod/error.hpp"

namespace lapprod {

namespace {

constexpr Eigen::Index kDenseLimit = 4096;
constexpr double kClusterGap = 1e-8;
constexpr double kIterativeTolerance = 1e-8;

bool same_cluster(double a, double b, double rel_gap) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= rel_gap * scale;
}

// Flips v so that its largest-magnitude entry (first one on near ties) is positive.
void apply_sign_convention(Eigen::Ref<Eigen::VectorXd> v) {
  const double peak = v.cwiseAbs().maxCoeff();
  if (peak == 0.0) return;
  for (Eigen::Index m = 0; m < v.size(); ++m) {
    if (std::abs(v[m]) >= (1.0 - 1e-9) * peak) {
      if (v[m] < 0.0) v = -v;
      return;
    }
  }
}

// Descending |v| at node 0, then node 1, ...
bool nodal_precedes(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double tol = 1e-12 * std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  for (Eigen::Index m = 0; m < a.size(); ++m) {
    const double da = std::abs(a[m]);
    const double db = std::abs(b[m]);
    if (std::abs(da - db) > tol) return da > db;
  }
  return false;
}

// Sorted eigenvalues and mass-orthonormal vectors → deterministic basis
// columns. Consumes clusters whole, so `mu` may extend past `keep`.
void finalize_numeric(const SparseOperator& op, Eigen::VectorXd mu, Eigen::MatrixXd vecs,
                      Eigen::Index keep, EigenBasis& out) {
  const Field& w = op.mass;
  const Eigen::Index n = vecs.rows();
  if (op.bc == Boundary::periodic) {
    mu[0] = 0.0;
    vecs.col(0) = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(w.sum()));
  }
  std::vector<std::string> labels(static_cast<std::size_t>(mu.size()));
  Eigen::Index start = 0;
  int cluster_id = 0;
  while (start < mu.size()) {
    Eigen::Index end = start + 1;
    while (end < mu.size() && same_cluster(mu[end - 1], mu[end], kClusterGap)) ++end;
    // Gram–Schmidt in solver order, mass inner product.
    for (Eigen::Index c = start; c < end; ++c) {
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index p = start; p < c; ++p)
          vecs.col(c) -= (vecs.col(p).cwiseProduct(w).dot(vecs.col(c))) * vecs.col(p);
      vecs.col(c) /= std::sqrt(vecs.col(c).cwiseProduct(w).dot(vecs.col(c)));
      apply_sign_convention(vecs.col(c));
    }
    if (end - start > 1) {
      std::vector<Eigen::VectorXd> cols;
      for (Eigen::Index c = start; c < end; ++c) cols.emplace_back(vecs.col(c));
      std::stable_sort(cols.begin(), cols.end(), nodal_precedes);
      const double mean = mu.segment(start, end - start).mean();
      for (Eigen::Index c = start; c < end; ++c) {
        vecs.col(c) = cols[static_cast<std::size_t>(c - start)];
        mu[c] = mean;
      }
    }
    for (Eigen::Index c = start; c < end; ++c)
      labels[static_cast<std::size_t>(c)] = fmt::format("cluster:{}", cluster_id);
    ++cluster_id;
    start = end;
  }
  out.freqs = mu.head(keep).cwiseMax(0.0).cwiseSqrt();
  out.modes = vecs.leftCols(keep);
  labels.resize(static_cast<std::size_t>(keep));
  out.labels = std::move(labels);
}

// Extends `keep` so the last kept cluster is complete, bounded by available.
Eigen::Index extend_to_cluster(const Eigen::VectorXd& mu, Eigen::Index keep) {
  Eigen::Index end = keep;
  while (end < mu.size() && same_cluster(mu[end - 1], mu[end], kClusterGap)) ++end;
  return end;
}

void dense_eigensolve(const SparseOperator& op, Eigen::Index K, EigenBasis& out) {
  const Eigen::Index n = static_cast<Eigen::Index>(op.size());
  if (n > kDenseLimit)
    throw InvalidArgument(
        fmt::format("dense eigensolver limited to {} unknowns (got {})", kDenseLimit, n));
  const Eigen::VectorXd s = op.mass.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd a = Eigen::MatrixXd(op.stiffness);
  a = s.asDiagonal() * a * s.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw Error("dense symmetric eigensolver did not converge");
  const Eigen::VectorXd& mu = solver.eigenvalues();
  const Eigen::Index take = extend_to_cluster(mu, K);
  Eigen::MatrixXd vecs = s.asDiagonal() * solver.eigenvectors().leftCols(take);
  finalize_numeric(op, mu.head(take), std::move(vecs), K, out);
}

// Block Krylov with full reorthogonalisation and Rayleigh–Ritz on the whole
// basis, applied to the symmetric form M^{-1/2} K M^{-1/2}.
void iterative_eigensolve(const SparseOperator& op, Eigen::Index K, EigenBasis& out) {
  const Eigen::Index n = static_cast<Eigen::Index>(op.size());
  const Eigen::VectorXd s = op.mass.cwiseSqrt().cwiseInverse();
  auto apply_sym = [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
    return s.asDiagonal() * (op.stiffness * (s.asDiagonal() * x));
  };
  const Eigen::Index block = std::min<Eigen::Index>(8, n);
  const Eigen::Index cap = n;

  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> normal;
  auto random_block = [&](Eigen::Index cols) {
    Eigen::MatrixXd b(n, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < n; ++i) b(i, j) = normal(rng);
    return b;
  };

  Eigen::MatrixXd q(n, 0);
  Eigen::MatrixXd aq(n, 0);
  // Orthonormalises candidates against q and each other, replacing
  // collapsed directions with fresh random ones.
  auto append = [&](Eigen::MatrixXd cand) {
    for (Eigen::Index j = 0; j < cand.cols() && q.cols() < cap; ++j) {
      Eigen::VectorXd v = cand.col(j);
      for (int attempt = 0; attempt < 4; ++attempt) {
        const double before = v.norm();
        for (int pass = 0; pass < 2; ++pass) v -= q * (q.transpose() * v);
        if (v.norm() > 1e-10 * std::max(before, 1e-300)) break;
        v = random_block(1).col(0);
      }
      v.normalize();
      q.conservativeResize(Eigen::NoChange, q.cols() + 1);
      q.col(q.cols() - 1) = v;
    }
  };

  append(random_block(block));
  Eigen::Index next_check = std::max<Eigen::Index>(K + block, 2 * block);
  Eigen::VectorXd theta;
  Eigen::MatrixXd ritz;
  Eigen::Index worst = 0;
  double worst_res = 0.0;
  while (true) {
    const Eigen::Index known = aq.cols();
    const Eigen::Index fresh = q.cols() - known;
    const Eigen::MatrixXd images = apply_sym(q.rightCols(fresh));
    aq.conservativeResize(Eigen::NoChange, q.cols());
    aq.rightCols(fresh) = images;

    const bool exhausted = q.cols() >= cap;
    if (q.cols() >= next_check || exhausted) {
      Eigen::MatrixXd t = q.transpose() * aq;
      t = 0.5 * (t + t.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rr(t);
      const Eigen::Index take = std::min<Eigen::Index>(q.cols(), K + block);
      theta = rr.eigenvalues().head(take);
      const Eigen::MatrixXd y = rr.eigenvectors().leftCols(take);
      ritz = q * y;
      const Eigen::MatrixXd resid = aq * y - ritz * theta.asDiagonal();
      bool converged = true;
      worst_res = 0.0;
      for (Eigen::Index k = 0; k < std::min(K, take); ++k) {
        const double r = resid.col(k).norm() / std::max(std::abs(theta[k]), 1.0);
        if (r > worst_res) {
          worst_res = r;
          worst = k;
        }
        if (r > kIterativeTolerance) converged = false;
      }
      if (converged && take >= K) break;
      if (exhausted)
        throw ConvergenceError(
            fmt::format("iterative eigensolver did not converge: mode {} residual {:.3e}",
                        worst, worst_res),
            static_cast<std::size_t>(q.cols()), worst_res);
      next_check = std::max(next_check + block, static_cast<Eigen::Index>(next_check * 1.25));
    }
    append(images);
  }
  // Keep converged companions of the last requested cluster so it is complete.
  Eigen::Index take = K;
  while (take < theta.size() && same_cluster(theta[take - 1], theta[take], kClusterGap)) ++take;
  Eigen::MatrixXd vecs = s.asDiagonal() * ritz.leftCols(take);
  finalize_numeric(op, theta.head(take), std::move(vecs), K, out);
}

struct AnalyticMode {
  double lambda2;
  std::vector<int> key;   // lattice label used for tie order
  int phase;              // 0 = cos/sin-only, 1 = sin (torus)
  std::string label;
  std::function<double(std::span<const double>)> fn;
};

std::vector<AnalyticMode> enumerate_analytic(const Grid& grid) {
  const DomainSpec& spec = grid.spec;
  const int d = spec.dim();
  std::vector<AnalyticMode> modes;
  if (spec.kind == DomainKind::interval || spec.kind == DomainKind::rectangle) {
    std::vector<int> idx(d, 1);
    while (true) {
      double l2 = 0.0;
      std::vector<double> wave(d);
      for (int a = 0; a < d; ++a) {
        wave[a] = idx[a] * M_PI / spec.extent[a];
        l2 += wave[a] * wave[a];
      }
      std::string label = "sin(";
      for (int a = 0; a < d; ++a) label += fmt::format("{}{}", a ? "," : "", idx[a]);
      label += ")";
      const std::vector<double> org = spec.origin;
      modes.push_back({l2, idx, 0, label, [wave, org](std::span<const double> x) {
                         double v = 1.0;
                         for (std::size_t a = 0; a < wave.size(); ++a)
                           v *= std::sin(wave[a] * (x[a] - org[a]));
                         return v;
                       }});
      int a = d - 1;
      for (; a >= 0; --a) {
        if (++idx[a] < spec.resolution[a]) break;
        idx[a] = 1;
      }
      if (a < 0) break;
    }
  } else if (spec.kind == DomainKind::torus) {
    std::vector<int> lo(d), hi(d);
    for (int a = 0; a < d; ++a) {
      hi[a] = (spec.resolution[a] - 1) / 2;   // strictly below Nyquist
      lo[a] = -hi[a];
    }
    std::vector<int> xi = lo;
    while (true) {
      int first_nonzero = 0;
      for (int a = 0; a < d; ++a)
        if (xi[a] != 0) {
          first_nonzero = xi[a];
          break;
        }
      std::vector<double> wave(d);
      double l2 = 0.0;
      for (int a = 0; a < d; ++a) {
        wave[a] = 2.0 * M_PI * xi[a] / spec.extent[a];
        l2 += wave[a] * wave[a];
      }
      std::string lattice;
      for (int a = 0; a < d; ++a) lattice += fmt::format("{}{}", a ? "," : "", xi[a]);
      const std::vector<double> org = spec.origin;
      auto phase_fn = [wave, org](std::span<const double> x) {
        double t = 0.0;
        for (std::size_t a = 0; a < wave.size(); ++a) t += wave[a] * (x[a] - org[a]);
        return t;
      };
      if (first_nonzero == 0) {
        modes.push_back({0.0, xi, 0, "const", [](std::span<const double>) { return 1.0; }});
      } else if (first_nonzero > 0) {
        modes.push_back({l2, xi, 0, "cos(" + lattice + ")",
                         [phase_fn](std::span<const double> x) { return std::cos(phase_fn(x)); }});
        modes.push_back({l2, xi, 1, "sin(" + lattice + ")",
                         [phase_fn](std::span<const double> x) { return std::sin(phase_fn(x)); }});
      }
      int a = d - 1;
      for (; a >= 0; --a) {
        if (++xi[a] <= hi[a]) break;
        xi[a] = lo[a];
      }
      if (a < 0) break;
    }
  } else {
    throw InvalidArgument("analytic basis is only available for interval, rectangle and torus");
  }
  // Frequency first; inside a cluster, lexicographic lattice label then phase.
  std::stable_sort(modes.begin(), modes.end(),
                   [](const AnalyticMode& x, const AnalyticMode& y) { return x.lambda2 < y.lambda2; });
  std::size_t start = 0;
  while (start < modes.size()) {
    std::size_t end = start + 1;
    while (end < modes.size() &&
           (modes[end].lambda2 - modes[end - 1].lambda2) <=
               1e-10 * std::max(modes[end].lambda2, 1e-300))
      ++end;
    std::stable_sort(modes.begin() + static_cast<std::ptrdiff_t>(start),
                     modes.begin() + static_cast<std::ptrdiff_t>(end),
                     [](const AnalyticMode& x, const AnalyticMode& y) {
                       return std::tie(x.key, x.phase) < std::tie(y.key, y.phase);
                     });
    start = end;
  }
  return modes;
}

}  // namespace

std::string to_string(BasisSource source) {
  switch (source) {
    case BasisSource::numeric: return "numeric";
    case BasisSource::analytic: return "analytic";
    case BasisSource::fitted: return "fitted";
  }
  return "unknown";
}

std::string to_string(EigenMethod method) {
  return method == EigenMethod::dense ? "dense" : "iterative";
}

Eigen::Index EigenBasis::column(int index) const {
  if (index < origin || index > max_index())
    throw InvalidArgument(
        fmt::format("mode index {} outside the basis range [{}, {}]", index, origin, max_index()));
  return index - origin;
}

Eigen::VectorXd mode_residuals(const SparseOperator& op, const Eigen::VectorXd& freqs,
                               const Eigen::MatrixXd& modes) {
  Eigen::VectorXd res(modes.cols());
  const Eigen::VectorXd inv_mass = op.mass.cwiseInverse();
  for (Eigen::Index k = 0; k < modes.cols(); ++k) {
    const double l2 = freqs[k] * freqs[k];
    const Eigen::VectorXd r = op.stiffness * modes.col(k) - l2 * op.mass.cwiseProduct(modes.col(k));
    res[k] = std::sqrt(r.cwiseProduct(inv_mass).dot(r)) / (l2 > 0.0 ? l2 : 1.0);
  }
  return res;
}

EigenBasis compute_basis(std::shared_ptr<const SparseOperator> op, Eigen::Index K,
                         EigenMethod method) {
  if (!op) throw InvalidArgument("compute_basis: null operator");
  const auto n = static_cast<Eigen::Index>(op->size());
  if (K < 1 || K > n)
    throw InvalidArgument(fmt::format("requested {} modes but the operator has {} unknowns", K, n));
  EigenBasis basis;
  basis.grid = op->grid;
  basis.op = op;
  basis.source = BasisSource::numeric;
  basis.origin = op->bc == Boundary::periodic ? 0 : 1;
  if (method == EigenMethod::dense)
    dense_eigensolve(*op, K, basis);
  else
    iterative_eigensolve(*op, K, basis);
  basis.full_spectrum = K == n;
  basis.residuals = mode_residuals(*op, basis.freqs, basis.modes);
  return basis;
}

Eigen::Index analytic_mode_capacity(const Grid& grid) {
  const DomainSpec& spec = grid.spec;
  if (spec.kind == DomainKind::interval || spec.kind == DomainKind::rectangle) {
    Eigen::Index c = 1;
    for (int r : spec.resolution) c *= (r - 1);
    return c;
  }
  if (spec.kind == DomainKind::torus) {
    Eigen::Index c = 1;
    for (int r : spec.resolution) c *= 2 * ((r - 1) / 2) + 1;
    return c;
  }
  return 0;
}

EigenBasis analytic_basis(std::shared_ptr<const Grid> grid, Eigen::Index K,
                          std::shared_ptr<const SparseOperator> op) {
  if (!grid) throw InvalidArgument("analytic_basis: null grid");
  const auto catalogue = enumerate_analytic(*grid);
  if (K < 1 || K > static_cast<Eigen::Index>(catalogue.size()))
    throw InvalidArgument(fmt::format("analytic basis holds {} alias-free modes, {} requested",
                                      catalogue.size(), K));
  EigenBasis basis;
  basis.grid = grid;
  basis.op = std::move(op);
  basis.source = BasisSource::analytic;
  basis.origin = grid->boundary() == Boundary::periodic ? 0 : 1;
  basis.freqs.resize(K);
  basis.modes.resize(static_cast<Eigen::Index>(grid->size()), K);
  basis.residuals = Eigen::VectorXd::Zero(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& m = catalogue[static_cast<std::size_t>(k)];
    basis.freqs[k] = std::sqrt(m.lambda2);
    Eigen::VectorXd v = sample(*grid, m.fn);
    v /= std::sqrt(inner(*grid, v, v));
    apply_sign_convention(v);
    basis.modes.col(k) = v;
    basis.labels.push_back(m.label);
  }
  basis.full_spectrum = K == static_cast<Eigen::Index>(grid->size());
  return basis;
}

EigenBasis analytic_basis(const DomainSpec& spec, Eigen::Index K) {
  return analytic_basis(std::make_shared<const Grid>(build_grid(spec)), K);
}

int resolution_limit(const EigenBasis& basis) {
  if (basis.source == BasisSource::analytic) return basis.max_index();
  if (basis.source == BasisSource::fitted)
    throw InvalidArgument("resolution_limit is undefined for fitted bases");
  const double h = basis.grid->max_spacing();
  int limit = basis.origin - 1;
  for (Eigen::Index c = 0; c < basis.size(); ++c) {
    if (basis.freqs[c] * h > 0.5) break;
    limit = basis.origin + static_cast<int>(c);
  }
  return limit;
}

WeylFit weyl_fit(const EigenBasis& basis) {
  const int limit = resolution_limit(basis);
  const int first = 1;   // skip λ_0 = 0 on periodic bases
  const int count = limit - first + 1;
  if (count < 30)
    throw InvalidArgument(fmt::format("weyl_fit needs at least 30 resolved modes, have {}", count));
  const int lo = first + count / 2;
  Eigen::Index m = limit - lo + 1;
  Eigen::MatrixXd a(m, 2);
  Eigen::VectorXd b(m);
  for (int k = lo; k <= limit; ++k) {
    const Eigen::Index r = k - lo;
    a(r, 0) = std::log(basis.frequency(k));
    a(r, 1) = 1.0;
    b[r] = std::log(static_cast<double>(k));
  }
  const Eigen::Vector2d x = a.colPivHouseholderQr().solve(b);
  return {std::exp(x[1]), x[0], lo, limit};
}

BasisDiagnostics diagnose(const EigenBasis& basis) {
  BasisDiagnostics d;
  const Eigen::MatrixXd gram =
      basis.modes.transpose() * basis.grid->weights.asDiagonal() * basis.modes;
  d.gram_defect =
      (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  d.max_residual = basis.residuals.size() ? basis.residuals.maxCoeff() : 0.0;
  return d;
}

std::vector<std::pair<int, int>> degenerate_clusters(const EigenBasis& basis, double rel_gap) {
  std::vector<std::pair<int, int>> out;
  Eigen::Index start = 0;
  while (start < basis.size()) {
    Eigen::Index end = start + 1;
    while (end < basis.size() &&
           same_cluster(basis.freqs[end - 1] * basis.freqs[end - 1],
                        basis.freqs[end] * basis.freqs[end], rel_gap))
      ++end;
    out.emplace_back(basis.origin + static_cast<int>(start),
                     basis.origin + static_cast<int>(end - 1));
    start = end;
  }
  return out;
}

double subspace_angle(const Grid& grid, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::VectorXd& w = grid.weights;
  const Eigen::MatrixXd proj = a * (a.transpose() * w.asDiagonal() * b);
  const Eigen::MatrixXd rest = w.cwiseSqrt().asDiagonal() * (b - proj);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rest);
  const double s = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return std::asin(std::min(1.0, s));
}

}  // namespace lapprod
