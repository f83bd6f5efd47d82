#include "objstitch/solver.hpp"

#include "objstitch/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdio>

namespace objstitch {

namespace {

constexpr const char* kModule = "solver";

void validate(const SparseSystem& sys) {
  if (sys.cols < 1) throw Error(ErrorKind::solver_failure, kModule, "system has no unknowns");
  if (sys.rhs.size() != sys.rows) {
    throw Error(ErrorKind::solver_failure, kModule, "rhs length does not match row count");
  }
  for (const auto& t : sys.triplets) {
    if (t.row() < 0 || t.row() >= sys.rows || t.col() < 0 || t.col() >= sys.cols) {
      throw Error(ErrorKind::solver_failure, kModule, "triplet index out of range");
    }
    if (!std::isfinite(t.value())) {
      throw Error(ErrorKind::solver_failure, kModule, "non-finite coefficient");
    }
  }
  if (!sys.rhs.allFinite()) {
    throw Error(ErrorKind::solver_failure, kModule, "non-finite right-hand side");
  }
}

}  // namespace

Eigen::SparseMatrix<double> SparseSystem::matrix() const {
  Eigen::SparseMatrix<double> a(rows, cols);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

double SparseSystem::energy(const Eigen::VectorXd& x) const {
  return (matrix() * x - rhs).squaredNorm();
}

Solution solve_normal_cg(const SparseSystem& sys, const CgOptions& options,
                         const Eigen::VectorXd& initial) {
  validate(sys);
  const int n = sys.cols;
  const Eigen::SparseMatrix<double> a = sys.matrix();
  const Eigen::SparseMatrix<double> at = a.transpose();
  const Eigen::SparseMatrix<double> normal = at * a;
  const Eigen::VectorXd atb = at * sys.rhs;

  Eigen::VectorXd inv_diag(n);
  for (int i = 0; i < n; ++i) {
    const double d = normal.coeff(i, i);
    inv_diag[i] = d > 0 ? 1.0 / d : 1.0;
  }

  Solution s;
  s.x = initial.size() == n ? initial : Eigen::VectorXd::Zero(n);
  const double start_energy = (a * s.x - sys.rhs).squaredNorm();
  const int max_iter = options.max_iterations > 0 ? options.max_iterations : 10 * n;
  const double scale = atb.norm() > 0 ? atb.norm() : 1.0;

  Eigen::VectorXd r = atb - normal * s.x;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  s.converged = r.norm() <= options.tolerance * scale;
  while (!s.converged && s.iterations < max_iter) {
    const Eigen::VectorXd q = normal * p;
    const double curvature = p.dot(q);
    if (!(curvature > 0)) break;  // breakdown
    const double alpha = rz / curvature;
    s.x += alpha * p;
    r -= alpha * q;
    ++s.iterations;
    if (r.norm() <= options.tolerance * scale) {
      s.converged = true;
      break;
    }
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  s.final_energy = (a * s.x - sys.rhs).squaredNorm();
  if (!std::isfinite(s.final_energy) || s.final_energy > start_energy) {
    s.x = initial.size() == n ? initial : Eigen::VectorXd::Zero(n);
    s.final_energy = start_energy;
    s.converged = false;
  }
  return s;
}

Solution solve_direct_dense(const SparseSystem& sys) {
  validate(sys);
  if (sys.cols > kDenseSolverLimit) {
    throw Error(ErrorKind::solver_failure, kModule,
                "dense solve limited to " + std::to_string(kDenseSolverLimit) + " unknowns");
  }
  const Eigen::MatrixXd a = Eigen::MatrixXd(sys.matrix());
  const Eigen::MatrixXd normal = a.transpose() * a;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    throw Error(ErrorKind::solver_failure, kModule, "normal matrix is not positive definite");
  }
  Solution s;
  s.x = llt.solve(a.transpose() * sys.rhs);
  s.final_energy = (a * s.x - sys.rhs).squaredNorm();
  s.iterations = 1;
  s.converged = true;
  return s;
}

void write_system(const SparseSystem& sys, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::io, kModule, "cannot write " + path.string());
  std::fprintf(f, "%d %d %zu\n", sys.rows, sys.cols, sys.triplets.size());
  for (const auto& t : sys.triplets) {
    std::fprintf(f, "%ld %ld %.17g\n", static_cast<long>(t.row()), static_cast<long>(t.col()),
                 t.value());
  }
  for (int i = 0; i < sys.rhs.size(); ++i) std::fprintf(f, "%.17g\n", sys.rhs[i]);
  if (std::fclose(f) != 0) throw Error(ErrorKind::io, kModule, "cannot write " + path.string());
}

}  // namespace objstitch
