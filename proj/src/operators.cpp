#include "lapprod/operators.hpp"

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "lapprod/error.hpp"

namespace lapprod {

SparseOperator assemble_laplacian(std::shared_ptr<const Grid> grid) {
  if (!grid) throw InvalidArgument("assemble_laplacian: null grid");
  const Grid& g = *grid;
  const int d = g.dim();
  const bool periodic = g.boundary() == Boundary::periodic;
  const auto n = static_cast<Eigen::Index>(g.size());

  std::vector<std::int64_t> stride(d, 1);
  for (int a = d - 2; a >= 0; --a) stride[a] = stride[a + 1] * g.lattice_shape[a + 1];

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * (2 * d + 1));
  for (Eigen::Index m = 0; m < n; ++m) {
    const auto idx = g.lattice_index(static_cast<std::size_t>(m));
    const std::int64_t offset = g.unknown_to_lattice[m];
    double diag = 0.0;
    for (int a = 0; a < d; ++a) {
      const double coupling = g.cell_volume / (g.spacing[a] * g.spacing[a]);
      diag += 2.0 * coupling;
      for (int step : {-1, 1}) {
        int j = idx[a] + step;
        if (periodic) {
          j = (j + g.lattice_shape[a]) % g.lattice_shape[a];
        } else if (j < 0 || j >= g.lattice_shape[a]) {
          continue;
        }
        const std::int64_t nb = offset + (j - idx[a]) * stride[a];
        const std::int64_t col = g.lattice_to_unknown[nb];
        if (col < 0) continue;
        triplets.emplace_back(m, static_cast<Eigen::Index>(col), -coupling);
      }
    }
    triplets.emplace_back(m, m, diag);
  }

  SparseOperator op;
  op.grid = std::move(grid);
  op.stiffness.resize(n, n);
  op.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  op.stiffness.makeCompressed();
  op.mass = op.grid->weights;
  op.bc = periodic ? Boundary::periodic : Boundary::dirichlet;
  return op;
}

Field apply(const SparseOperator& op, const Field& f) {
  if (f.size() != static_cast<Eigen::Index>(op.size()))
    throw InvalidArgument(fmt::format("apply: field length {} vs {} unknowns", f.size(), op.size()));
  return op.stiffness * f;
}

Field apply_laplacian(const SparseOperator& op, const Field& f) {
  return apply(op, f).cwiseQuotient(op.mass);
}

namespace {

double mass_mean(const SparseOperator& op, const Field& f) {
  return op.mass.dot(f) / op.mass.sum();
}

}  // namespace

Field solve_shifted(const SparseOperator& op, const Field& f, double shift,
                    const SolveOptions& options, SolveStats* stats) {
  const auto n = static_cast<Eigen::Index>(op.size());
  if (f.size() != n)
    throw InvalidArgument(fmt::format("solve_shifted: field length {} vs {} unknowns", f.size(), n));
  if (!(shift >= 0.0)) throw InvalidArgument("solve_shifted: shift must be nonnegative");

  const bool singular = shift == 0.0 && op.bc == Boundary::periodic;
  Field rhs_field = f;
  if (singular) {
    const double mean = mass_mean(op, f);
    const double scale = op.mass.dot(f.cwiseAbs()) / op.mass.sum();
    if (std::abs(mean) > 1e-10 * std::max(scale, 1e-300))
      throw SingularSystem(fmt::format(
          "singular system: periodic solve with shift 0 needs a mean-zero right-hand side "
          "(mass mean {:.3e})",
          mean));
    rhs_field.array() -= mean;
  }

  const Field b = op.mass.cwiseProduct(rhs_field);
  const Field inv_mass = op.mass.cwiseInverse();
  const Field diag = op.stiffness.diagonal() + shift * op.mass;
  const Field inv_diag = diag.cwiseInverse();
  auto apply_a = [&](const Field& x) -> Field {
    Field y = op.stiffness * x;
    if (shift != 0.0) y += shift * op.mass.cwiseProduct(x);
    return y;
  };
  // Residuals are measured in the M⁻¹ norm, the dual of the mass norm.
  auto dual_norm = [&](const Field& r) { return std::sqrt(r.cwiseProduct(inv_mass).dot(r)); };

  const double b_norm = dual_norm(b);
  Field u = Field::Zero(n);
  SolveStats local;
  if (b_norm == 0.0) {
    if (stats) *stats = local;
    return u;
  }

  const std::size_t cap =
      options.max_iterations == 0 ? 10 * static_cast<std::size_t>(n) : options.max_iterations;
  Field r = b;
  Field z = inv_diag.cwiseProduct(r);
  Field p = z;
  double rz = r.dot(z);
  double rel = 1.0;
  std::size_t it = 0;
  bool converged = false;
  while (it < cap) {
    const Field ap = apply_a(p);
    const double alpha = rz / p.dot(ap);
    u += alpha * p;
    r -= alpha * ap;
    ++it;
    rel = dual_norm(r) / b_norm;
    if (rel <= options.tolerance) {
      // Confirm against the true residual; recurrence drift can fake
      // convergence. On disagreement restart from the true residual.
      r = b - apply_a(u);
      rel = dual_norm(r) / b_norm;
      if (rel <= options.tolerance) {
        converged = true;
        break;
      }
      z = inv_diag.cwiseProduct(r);
      p = z;
      rz = r.dot(z);
      continue;
    }
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  if (!converged)
    throw ConvergenceError(
        fmt::format("conjugate gradients stopped after {} iterations at relative residual {:.3e}",
                    it, rel),
        it, rel);
  if (singular) u.array() -= mass_mean(op, u);
  local.iterations = it;
  local.relative_residual = rel;
  if (stats) *stats = local;
  return u;
}

}  // namespace lapprod
