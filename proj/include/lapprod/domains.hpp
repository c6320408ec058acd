#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lapprod {

/// Nodal values on the unknowns of a Grid.
using Field = Eigen::VectorXd;

enum class DomainKind { interval, rectangle, l_shape, torus, weighted_torus };
enum class Boundary { dirichlet, periodic };

std::string to_string(DomainKind kind);
std::string to_string(Boundary bc);

/// Positive density on a weighted torus, evaluated at a node position.
using DensityFn = std::function<double(std::span<const double>)>;

/// Geometry, resolution and boundary data for one discretised domain.
///
/// Axis `a` covers [origin[a], origin[a] + extent[a]]. `resolution[a]` is the
/// number of cells along that axis: Dirichlet axes have resolution - 1
/// interior unknowns, periodic axes have resolution unknowns.
struct DomainSpec {
  DomainKind kind = DomainKind::interval;
  std::vector<double> origin;
  std::vector<double> extent;
  std::vector<int> resolution;
  double notch = 0.0;          // l_shape: side of the square removed at the upper-right corner
  DensityFn density;           // weighted_torus only
  std::string density_label;   // canonical text of the density, used for hashing and persistence

  int dim() const { return static_cast<int>(extent.size()); }
  Boundary boundary() const;

  static DomainSpec interval(double a, double b, int resolution);
  static DomainSpec rectangle(double lx, double ly, int nx, int ny);
  static DomainSpec rectangle(double lx, double ly, int resolution) {
    return rectangle(lx, ly, resolution, resolution);
  }
  static DomainSpec l_shape(double side, double notch, int resolution);
  static DomainSpec torus(std::vector<double> periods, std::vector<int> resolution);
  static DomainSpec torus(int dim, double period, int resolution);
  static DomainSpec weighted_torus(double period, int resolution, DensityFn density,
                                   std::string label);
};

/// Throws InvalidArgument if the spec violates its invariants.
void validate(const DomainSpec& spec);

/// Uniform tensor grid over a DomainSpec. Only unknowns are stored: interior
/// nodes for Dirichlet domains, every node for periodic ones.
struct Grid {
  DomainSpec spec;
  std::vector<double> spacing;
  /// Nodes per axis of the full lattice, boundary included (resolution + 1
  /// for Dirichlet axes, resolution for periodic axes).
  std::vector<int> lattice_shape;
  /// Maps a row-major lattice offset to an unknown index, or -1 for boundary
  /// and notch nodes.
  std::vector<std::int64_t> lattice_to_unknown;
  /// Row-major lattice offset of every unknown.
  std::vector<std::int64_t> unknown_to_lattice;
  Eigen::MatrixXd coords;   // size() x dim
  Field weights;            // cell volume, times density on a weighted torus
  double cell_volume = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
  int dim() const { return spec.dim(); }
  Boundary boundary() const { return spec.boundary(); }
  double max_spacing() const;
  /// True for every lattice node that carries an unknown.
  std::vector<bool> interior_mask() const;
  /// Lattice multi-index of an unknown.
  std::vector<int> lattice_index(std::size_t unknown) const;
  /// SHA-256 over node coordinates and weights.
  std::string hash() const;
};

Grid build_grid(const DomainSpec& spec);

/// Σ_m w_m f_m g_m.
double inner(const Grid& grid, const Field& f, const Field& g);

/// max_m |f_m| over the unknowns.
double sup_norm(const Grid& grid, const Field& f);

/// Samples fn at every unknown.
Field sample(const Grid& grid, const std::function<double(std::span<const double>)>& fn);

}  // namespace lapprod
