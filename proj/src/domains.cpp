#include "lapprod/domains.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "lapprod/error.hpp"
#include "lapprod/hashing.hpp"

namespace lapprod {

namespace {

constexpr int kMinResolution = 8;

bool is_periodic(DomainKind kind) {
  return kind == DomainKind::torus || kind == DomainKind::weighted_torus;
}

}  // namespace

std::string to_string(DomainKind kind) {
  switch (kind) {
    case DomainKind::interval: return "interval";
    case DomainKind::rectangle: return "rectangle";
    case DomainKind::l_shape: return "l_shape";
    case DomainKind::torus: return "torus";
    case DomainKind::weighted_torus: return "weighted_torus";
  }
  return "unknown";
}

std::string to_string(Boundary bc) { return bc == Boundary::dirichlet ? "dirichlet" : "periodic"; }

Boundary DomainSpec::boundary() const {
  return is_periodic(kind) ? Boundary::periodic : Boundary::dirichlet;
}

DomainSpec DomainSpec::interval(double a, double b, int resolution) {
  DomainSpec s;
  s.kind = DomainKind::interval;
  s.origin = {a};
  s.extent = {b - a};
  s.resolution = {resolution};
  return s;
}

DomainSpec DomainSpec::rectangle(double lx, double ly, int nx, int ny) {
  DomainSpec s;
  s.kind = DomainKind::rectangle;
  s.origin = {0.0, 0.0};
  s.extent = {lx, ly};
  s.resolution = {nx, ny};
  return s;
}

DomainSpec DomainSpec::l_shape(double side, double notch, int resolution) {
  DomainSpec s;
  s.kind = DomainKind::l_shape;
  s.origin = {0.0, 0.0};
  s.extent = {side, side};
  s.resolution = {resolution, resolution};
  s.notch = notch;
  return s;
}

DomainSpec DomainSpec::torus(std::vector<double> periods, std::vector<int> resolution) {
  DomainSpec s;
  s.kind = DomainKind::torus;
  s.origin.assign(periods.size(), 0.0);
  s.extent = std::move(periods);
  s.resolution = std::move(resolution);
  return s;
}

DomainSpec DomainSpec::torus(int dim, double period, int resolution) {
  return torus(std::vector<double>(static_cast<std::size_t>(std::max(dim, 0)), period),
               std::vector<int>(static_cast<std::size_t>(std::max(dim, 0)), resolution));
}

DomainSpec DomainSpec::weighted_torus(double period, int resolution, DensityFn density,
                                      std::string label) {
  DomainSpec s = torus(2, period, resolution);
  s.kind = DomainKind::weighted_torus;
  s.density = std::move(density);
  s.density_label = std::move(label);
  return s;
}

void validate(const DomainSpec& spec) {
  const int d = spec.dim();
  if (d < 1 || d > 3) throw InvalidArgument(fmt::format("dimension {} outside 1..3", d));
  if (spec.origin.size() != spec.extent.size() || spec.resolution.size() != spec.extent.size())
    throw InvalidArgument("domain axis arrays disagree in length");
  for (int a = 0; a < d; ++a) {
    if (spec.resolution[a] < kMinResolution)
      throw InvalidArgument(
          fmt::format("resolution {} on axis {} is below the minimum of {}", spec.resolution[a], a,
                      kMinResolution));
    if (!(spec.extent[a] > 0.0) || !std::isfinite(spec.extent[a]))
      throw InvalidArgument(fmt::format("extent on axis {} must be positive", a));
  }
  switch (spec.kind) {
    case DomainKind::interval:
      if (d != 1) throw InvalidArgument("interval must be one-dimensional");
      break;
    case DomainKind::rectangle:
      if (d != 2) throw InvalidArgument("rectangle must be two-dimensional");
      break;
    case DomainKind::l_shape: {
      if (d != 2) throw InvalidArgument("l_shape must be two-dimensional");
      if (spec.extent[0] != spec.extent[1] || spec.resolution[0] != spec.resolution[1])
        throw InvalidArgument("l_shape requires a square with equal resolution per axis");
      const double side = spec.extent[0];
      if (!(spec.notch > 0.0 && spec.notch < side))
        throw InvalidArgument("l_shape notch must lie strictly between 0 and the side length");
      const double cells = spec.notch / (side / spec.resolution[0]);
      if (std::abs(cells - std::round(cells)) > 1e-9)
        throw InvalidArgument(fmt::format(
            "l_shape notch {} is not aligned to the grid (spacing {})", spec.notch,
            side / spec.resolution[0]));
      break;
    }
    case DomainKind::torus:
      break;
    case DomainKind::weighted_torus:
      if (d != 2) throw InvalidArgument("weighted_torus must be two-dimensional");
      if (!spec.density) throw InvalidArgument("weighted_torus requires a density");
      break;
  }
}

double Grid::max_spacing() const { return *std::max_element(spacing.begin(), spacing.end()); }

std::vector<bool> Grid::interior_mask() const {
  std::vector<bool> mask(lattice_to_unknown.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = lattice_to_unknown[i] >= 0;
  return mask;
}

std::vector<int> Grid::lattice_index(std::size_t unknown) const {
  std::int64_t offset = unknown_to_lattice.at(unknown);
  std::vector<int> idx(lattice_shape.size());
  for (int a = static_cast<int>(lattice_shape.size()) - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(offset % lattice_shape[a]);
    offset /= lattice_shape[a];
  }
  return idx;
}

std::string Grid::hash() const {
  Sha256 h;
  const std::string header = fmt::format("{}|{}|{}", to_string(spec.kind), size(), dim());
  h.update(header.data(), header.size());
  h.update(coords.data(), sizeof(double) * static_cast<std::size_t>(coords.size()));
  h.update(weights.data(), sizeof(double) * static_cast<std::size_t>(weights.size()));
  return h.hex_digest();
}

Grid build_grid(const DomainSpec& spec) {
  validate(spec);
  Grid g;
  g.spec = spec;
  const int d = spec.dim();
  const bool periodic = spec.boundary() == Boundary::periodic;
  g.spacing.resize(d);
  g.lattice_shape.resize(d);
  g.cell_volume = 1.0;
  for (int a = 0; a < d; ++a) {
    g.spacing[a] = spec.extent[a] / spec.resolution[a];
    g.lattice_shape[a] = periodic ? spec.resolution[a] : spec.resolution[a] + 1;
    g.cell_volume *= g.spacing[a];
  }
  const std::int64_t total = std::accumulate(g.lattice_shape.begin(), g.lattice_shape.end(),
                                             std::int64_t{1}, std::multiplies<>());
  g.lattice_to_unknown.assign(static_cast<std::size_t>(total), -1);

  // Notch corner in lattice units; nodes with both indices at or beyond it
  // lie in the removed square or on its boundary.
  const int notch_start =
      spec.kind == DomainKind::l_shape
          ? static_cast<int>(std::lround((spec.extent[0] - spec.notch) / g.spacing[0]))
          : 0;

  std::vector<int> idx(d, 0);
  for (std::int64_t offset = 0; offset < total; ++offset) {
    bool keep = true;
    if (!periodic) {
      for (int a = 0; a < d; ++a)
        if (idx[a] == 0 || idx[a] == spec.resolution[a]) keep = false;
      if (keep && spec.kind == DomainKind::l_shape && idx[0] >= notch_start &&
          idx[1] >= notch_start)
        keep = false;
    }
    if (keep) {
      g.lattice_to_unknown[offset] = static_cast<std::int64_t>(g.unknown_to_lattice.size());
      g.unknown_to_lattice.push_back(offset);
    }
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < g.lattice_shape[a]) break;
      idx[a] = 0;
    }
  }

  const auto n = static_cast<Eigen::Index>(g.unknown_to_lattice.size());
  g.coords.resize(n, d);
  g.weights.resize(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const auto li = g.lattice_index(static_cast<std::size_t>(m));
    for (int a = 0; a < d; ++a) g.coords(m, a) = spec.origin[a] + li[a] * g.spacing[a];
    g.weights[m] = g.cell_volume;
  }
  if (spec.kind == DomainKind::weighted_torus) {
    std::vector<double> x(d);
    for (Eigen::Index m = 0; m < n; ++m) {
      for (int a = 0; a < d; ++a) x[a] = g.coords(m, a);
      const double rho = spec.density(x);
      if (!(rho > 0.0) || !std::isfinite(rho))
        throw InvalidArgument(fmt::format("density sample {} at node {} is not positive", rho, m));
      g.weights[m] *= rho;
    }
  }
  return g;
}

double inner(const Grid& grid, const Field& f, const Field& g) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (f.size() != n || g.size() != n)
    throw InvalidArgument(
        fmt::format("field length {}/{} does not match {} unknowns", f.size(), g.size(), n));
  double sum = 0.0;
  for (Eigen::Index m = 0; m < n; ++m) sum += grid.weights[m] * (f[m] * g[m]);
  return sum;
}

double sup_norm(const Grid& grid, const Field& f) {
  if (f.size() == 0) throw InvalidArgument("sup_norm of an empty field");
  if (f.size() != static_cast<Eigen::Index>(grid.size()))
    throw InvalidArgument("field length does not match grid");
  return f.cwiseAbs().maxCoeff();
}

Field sample(const Grid& grid, const std::function<double(std::span<const double>)>& fn) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  const int d = grid.dim();
  Field out(n);
  std::vector<double> x(d);
  for (Eigen::Index m = 0; m < n; ++m) {
    for (int a = 0; a < d; ++a) x[a] = grid.coords(m, a);
    out[m] = fn(x);
  }
  return out;
}

}  // namespace lapprod
