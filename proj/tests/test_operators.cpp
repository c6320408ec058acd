#include "support.hpp"

#include <Eigen/SparseCholesky>

#include <cstring>
#include <thread>

#include "lapprod/error.hpp"

using namespace lapprod;
using namespace lapprod::test;

TEST_CASE("constant is in the periodic kernel") {
  const auto op = op_of(DomainSpec::torus(2, 2 * M_PI, 16));
  CHECK(apply(*op, Field::Ones(256)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sine on the torus picks up the discrete symbol") {
  const auto op = op_of(DomainSpec::torus(1, 2 * M_PI, 64));
  const Field s = sample(*op->grid, [](std::span<const double> x) { return std::sin(x[0]); });
  const double h = op->grid->spacing[0];
  const double symbol = 2.0 / (h * h) * (1.0 - std::cos(h));
  CHECK((apply_laplacian(*op, s) - symbol * s).cwiseAbs().maxCoeff() < 1e-10);

  const Field u = solve_shifted(*op, s, 0.0);
  CHECK((u - s / symbol).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("eigenvectors satisfy the stiffness relation") {
  const auto op = op_of(DomainSpec::interval(0.0, M_PI, 64));
  const EigenBasis b = compute_basis(op, 5, EigenMethod::dense);
  for (int k = 1; k <= 5; ++k) {
    const Field e = b.mode(k);
    const double l2 = b.frequency(k) * b.frequency(k);
    const Field r = apply(*op, e) - l2 * op->mass.cwiseProduct(e);
    CHECK(r.cwiseAbs().maxCoeff() / l2 < 1e-10);

    const Field u = solve_shifted(*op, e, 1.0);
    CHECK((u - e / (1.0 + l2)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("singular periodic solve is refused") {
  const auto op = op_of(DomainSpec::torus(1, 2 * M_PI, 16));
  try {
    solve_shifted(*op, Field::Ones(16), 0.0);
    FAIL("expected SingularSystem");
  } catch (const SingularSystem& e) {
    CHECK(std::string(e.what()).find("singular system") != std::string::npos);
  }
}

TEST_CASE("stiffness is self-adjoint in the grid inner product") {
  for (const DomainSpec& spec : {DomainSpec::l_shape(1.0, 0.5, 24), DomainSpec::torus(2, 1.0, 20),
                                 DomainSpec::rectangle(M_PI, 2.0, 18, 23)}) {
    const auto op = op_of(spec);
    std::mt19937_64 rng(11);
    const Field f = random_field(op->size(), rng);
    const Field h = random_field(op->size(), rng);
    const double a = inner(*op->grid, f, apply_laplacian(*op, h));
    const double b = inner(*op->grid, h, apply_laplacian(*op, f));
    CHECK(rel(a, b) < 1e-12);
  }
}

TEST_CASE("solve inverts apply on mean-zero periodic fields") {
  const auto op = op_of(DomainSpec::weighted_torus(
      2 * M_PI, 20, [](std::span<const double> x) { return 1.5 + 0.5 * std::cos(x[0]) * std::cos(x[1]); },
      "cosine"));
  std::mt19937_64 rng(3);
  Field f = random_field(op->size(), rng);
  f.array() -= op->mass.dot(f) / op->mass.sum();
  const Field u = solve_shifted(*op, apply_laplacian(*op, f), 0.0);
  CHECK((u - f).norm() / f.norm() < 1e-8);
}

TEST_CASE("conjugate gradients agree with a sparse Cholesky factorisation") {
  struct Case {
    DomainSpec spec;
    double shift;
  };
  for (const Case& c : {Case{DomainSpec::l_shape(1.0, 0.5, 32), 0.0},
                        Case{DomainSpec::rectangle(M_PI, 2.0, 30, 20), 0.0},
                        Case{DomainSpec::torus(2, 2 * M_PI, 24), 1.0}}) {
    const auto op = op_of(c.spec);
    std::mt19937_64 rng(5);
    const Field f = random_field(op->size(), rng);
    SolveStats stats;
    const Field u = solve_shifted(*op, f, c.shift, {}, &stats);
    CHECK(stats.relative_residual <= 1e-10);

    Eigen::SparseMatrix<double> A = op->stiffness;
    for (Eigen::Index i = 0; i < A.rows(); ++i) A.coeffRef(i, i) += c.shift * op->mass[i];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    REQUIRE(ldlt.info() == Eigen::Success);
    const Field ref = ldlt.solve(op->mass.cwiseProduct(f));
    CHECK((u - ref).norm() / ref.norm() < 1e-8);
  }
}

TEST_CASE("iteration cap raises ConvergenceError") {
  const auto op = op_of(DomainSpec::rectangle(1.0, 1.0, 32));
  std::mt19937_64 rng(1);
  SolveOptions opts;
  opts.max_iterations = 2;
  CHECK_THROWS_AS(solve_shifted(*op, random_field(op->size(), rng), 0.0, opts), ConvergenceError);
}

TEST_CASE("solves are reproducible across threads") {
  const auto op = op_of(DomainSpec::l_shape(1.0, 0.5, 24));
  std::mt19937_64 rng(2);
  const Field f = random_field(op->size(), rng);
  const Field ref = solve_shifted(*op, f, 1.0);
  std::vector<Field> out(4);
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < 4; ++t) pool.emplace_back([&, t] { out[t] = solve_shifted(*op, f, 1.0); });
  }
  for (const Field& u : out) CHECK(std::memcmp(u.data(), ref.data(), sizeof(double) * ref.size()) == 0);
}
