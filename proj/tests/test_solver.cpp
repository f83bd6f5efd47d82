#include "objstitch/energy.hpp"
#include "objstitch/error.hpp"
#include "objstitch/solver.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

using namespace objstitch;

namespace {

SparseSystem from_dense(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  SparseSystem s;
  s.rows = static_cast<int>(a.rows());
  s.cols = static_cast<int>(a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      if (a(r, c) != 0) s.triplets.emplace_back(r, c, a(r, c));
  s.rhs = b;
  return s;
}

// Small two-image stitching system on 2x2-cell meshes with a moved second image.
EnergySystem small_stitch_system(std::vector<GridMesh>& meshes, bool free_reference = false) {
  meshes = {build_mesh(80, 80, 40, 0), build_mesh(80, 80, 40, 1)};
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 79);
  MatchSet ms;
  ms.pair_id = {1, 0};
  for (int i = 0; i < 15; ++i) {
    const Point2 p(u(rng), u(rng));
    const Point2 q = p + Point2(-20 + 0.05 * p.y(), 3);
    if (q.x() >= 0 && q.x() <= 79 && q.y() <= 79) ms.matches.push_back({p, q, 1});
  }
  std::vector<ImageTerms> terms(2);
  terms[1].similarity = {1.0, 0.02};
  AssemblyOptions opt;
  opt.free_reference = free_reference;
  return assemble(meshes, std::span(&ms, 1), terms, opt);
}

}  // namespace

TEST_CASE("identity system solves exactly within n iterations") {
  const int n = 7;
  Eigen::VectorXd b(n);
  b << 1, -2, 3.5, 0, 9, -1e3, 0.25;
  const Solution s = solve_normal_cg(from_dense(Eigen::MatrixXd::Identity(n, n), b));
  CHECK(s.converged);
  CHECK(s.iterations <= n);
  CHECK((s.x - b).norm() < 1e-12);
  const Solution d = solve_direct_dense(from_dense(Eigen::MatrixXd::Identity(n, n), b));
  CHECK((d.x - b).norm() < 1e-12);
}

TEST_CASE("random overdetermined system agrees with the explicit normal-equation inverse") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(14, 6);
  Eigen::VectorXd b(14);
  for (int r = 0; r < 14; ++r) {
    for (int c = 0; c < 6; ++c) a(r, c) = g(rng);
    b[r] = g(rng);
  }
  const Eigen::VectorXd oracle = (a.transpose() * a).inverse() * (a.transpose() * b);
  const SparseSystem sys = from_dense(a, b);
  const Solution cg = solve_normal_cg(sys, {1e-13, 0});
  const Solution dense = solve_direct_dense(sys);
  CHECK((cg.x - oracle).norm() < 1e-8);
  CHECK((dense.x - oracle).norm() < 1e-8);
  CHECK((cg.x - dense.x).norm() < 1e-8);
}

TEST_CASE("CG on a small stitching system reaches the dense optimum") {
  std::vector<GridMesh> meshes;
  const EnergySystem sys = small_stitch_system(meshes);
  const SparseSystem s = sys.sparse();
  const Solution dense = solve_direct_dense(s);
  const Solution cg = solve_normal_cg(s, {1e-10, 0}, sys.pack(meshes));
  CHECK(cg.converged);
  CHECK(std::abs(cg.final_energy - dense.final_energy) < 1e-8);
  CHECK((cg.x - dense.x).norm() < 1e-6);
  CHECK(std::abs(sys.energy(cg.x) - cg.final_energy) < 1e-9);
}

TEST_CASE("returned energy never exceeds the starting energy") {
  std::vector<GridMesh> meshes;
  const SparseSystem s = small_stitch_system(meshes).sparse();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(s.cols);
  const Solution few = solve_normal_cg(s, {1e-14, 3});
  CHECK(few.final_energy <= s.energy(zero));
  CHECK_FALSE(few.converged);
}

TEST_CASE("dense solver guards") {
  SparseSystem big;
  big.rows = 2001;
  big.cols = 2001;
  big.rhs = Eigen::VectorXd::Zero(2001);
  for (int i = 0; i < 2001; ++i) big.triplets.emplace_back(i, i, 1.0);
  try {
    solve_direct_dense(big);
    FAIL("expected guard error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::solver_failure);
  }

  // Two free meshes joined only by matches: translation null space.
  std::vector<GridMesh> meshes{build_mesh(80, 80, 40, 0), build_mesh(80, 80, 40, 1)};
  MatchSet ms;
  ms.matches = {{Point2(10, 10), Point2(12, 10), 1}, {Point2(60, 50), Point2(62, 50), 1}};
  EnergySystem sys(meshes, {false, false});
  add_alignment_term(sys, ms, meshes);
  add_local_similarity_term(sys, meshes[0], 0, 0.75);
  add_local_similarity_term(sys, meshes[1], 1, 0.75);
  CHECK_THROWS_AS(solve_direct_dense(sys.sparse()), Error);

  SparseSystem bad = from_dense(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1, 1));
  bad.rhs[0] = std::nan("");
  CHECK_THROWS_AS(solve_normal_cg(bad), Error);
}

TEST_CASE("solution is invariant under row permutation") {
  std::vector<GridMesh> meshes;
  const SparseSystem s = small_stitch_system(meshes).sparse();
  std::vector<int> perm(s.rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(12));
  SparseSystem p = s;
  p.triplets.clear();
  for (const auto& t : s.triplets) p.triplets.emplace_back(perm[t.row()], t.col(), t.value());
  for (int r = 0; r < s.rows; ++r) p.rhs[perm[r]] = s.rhs[r];
  const Solution a = solve_normal_cg(s, {1e-12, 0}), b = solve_normal_cg(p, {1e-12, 0});
  CHECK((a.x - b.x).norm() < 1e-9);
  CHECK((solve_direct_dense(s).x - solve_direct_dense(p).x).norm() < 1e-9);
}

TEST_CASE("system dump format") {
  testing::TempDir dir("solver");
  const SparseSystem s = from_dense((Eigen::Matrix2d() << 1, 0, 2, 3).finished(), Eigen::Vector2d(4, 5));
  write_system(s, dir / "sys.txt");
  std::ifstream in(dir / "sys.txt");
  int m, n;
  std::size_t nnz;
  in >> m >> n >> nnz;
  CHECK(m == 2);
  CHECK(n == 2);
  CHECK(nnz == 3);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  for (std::size_t k = 0; k < nnz; ++k) {
    int r, c;
    double v;
    in >> r >> c >> v;
    a(r, c) = v;
  }
  double b0, b1;
  in >> b0 >> b1;
  CHECK(a == Eigen::MatrixXd(s.matrix()));
  CHECK(b0 == 4);
  CHECK(b1 == 5);
  CHECK_THROWS_AS(write_system(s, dir / "missing" / "x.txt"), Error);
}
