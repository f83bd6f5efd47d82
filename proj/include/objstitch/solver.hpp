#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <filesystem>
#include <vector>

namespace objstitch {

/// Residual r = A x - b in triplet form.
struct SparseSystem {
  int rows = 0;
  int cols = 0;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs;

  Eigen::SparseMatrix<double> matrix() const;
  double energy(const Eigen::VectorXd& x) const;
};

struct Solution {
  Eigen::VectorXd x;
  double final_energy = 0;
  int iterations = 0;
  bool converged = false;
};

struct CgOptions {
  double tolerance = 1e-8;  // relative normal-equation residual
  int max_iterations = 0;   // 0 -> 10 * n
};

/// Jacobi-preconditioned conjugate gradient on A^T A x = A^T b, started at
/// `initial` (zero when empty).
Solution solve_normal_cg(const SparseSystem& sys, const CgOptions& options = {},
                         const Eigen::VectorXd& initial = {});

/// Dense Cholesky of A^T A. Limited to n <= 2000; throws on a non-positive
/// definite normal matrix.
Solution solve_direct_dense(const SparseSystem& sys);

inline constexpr int kDenseSolverLimit = 2000;

/// `m n nnz` header, one `row col value` triplet per line, then m rhs values.
void write_system(const SparseSystem& sys, const std::filesystem::path& path);

}  // namespace objstitch
