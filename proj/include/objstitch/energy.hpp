#pragma once

#include "objstitch/features.hpp"
#include "objstitch/masks.hpp"
#include "objstitch/mesh.hpp"
#include "objstitch/solver.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace objstitch {

enum class Term { alignment = 0, local = 1, global = 2, structure = 3 };
inline constexpr int kTermCount = 4;
std::string_view term_name(Term t);

/// Scalar affine form over vertex coordinates ("slots") of every mesh in a
/// system: value = sum(coeff * slot) + constant.
struct LinearForm {
  std::vector<std::pair<int, double>> coeffs;
  double constant = 0;

  LinearForm& operator+=(const LinearForm& o);
  LinearForm& operator*=(double s);
};
LinearForm operator+(LinearForm a, const LinearForm& b);
LinearForm operator-(LinearForm a, const LinearForm& b);
LinearForm operator*(double s, LinearForm a);

/// A 2-D point whose coordinates are affine in the slots.
struct PointForm {
  std::array<LinearForm, 2> xy;

  static PointForm constant(const Point2& p);
  PointForm& operator+=(const PointForm& o);
  PointForm& operator*=(double s);
};
PointForm operator+(PointForm a, const PointForm& b);
PointForm operator-(PointForm a, const PointForm& b);
PointForm operator*(double s, PointForm a);
/// The fan quarter turn (x, y) -> (y, -x).
PointForm rotate90(const PointForm& p);

/// Diagnostic attribution of a row.
struct RowInfo {
  Term tag = Term::alignment;
  int image = -1;
  int object = -1;
  int sample = -1;
  bool target_row = false;
};

/// Stacked residual rows r = A x - b over the free vertices of all
/// non-fixed meshes. Slots of fixed meshes are folded into b.
class EnergySystem {
 public:
  struct Row {
    std::vector<std::pair<int, double>> coeffs;  // (unknown index, value), sorted
    double rhs = 0;
    RowInfo info;
  };

  /// `fixed[i]` removes mesh i from the unknowns; its current free vertices
  /// become constants.
  EnergySystem(std::span<const GridMesh> meshes, std::vector<bool> fixed);

  int slot(int mesh, int vertex, int axis) const {
    return slot_base_[mesh] + 2 * vertex + axis;
  }
  PointForm vertex(int mesh, int vertex) const;
  /// Bilinear combination of the free vertices of `mesh` at rest point p.
  PointForm point(int mesh, const BilinearAnchor& a) const;

  /// Appends scale * form as one row.
  void add_row(const LinearForm& form, double scale, const RowInfo& info);
  /// Appends both coordinates of scale * form.
  void add_rows(const PointForm& form, double scale, const RowInfo& info);

  int unknowns() const noexcept { return unknowns_; }
  bool is_fixed(int mesh) const { return fixed_[mesh]; }
  int mesh_count() const noexcept { return static_cast<int>(slot_base_.size()); }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  std::size_t row_count(Term t) const;

  /// Gathers the free vertices of non-fixed meshes into an unknown vector.
  Eigen::VectorXd pack(std::span<const GridMesh> meshes) const;
  /// Scatters an unknown vector back into the free vertices.
  void unpack(const Eigen::VectorXd& x, std::span<GridMesh> meshes) const;

  SparseSystem sparse() const;
  double energy(const Eigen::VectorXd& x) const;
  std::array<double, kTermCount> energy_by_term(const Eigen::VectorXd& x) const;

 private:
  std::vector<int> slot_base_;
  std::vector<int> slot_to_unknown_;  // -1 for fixed slots
  std::vector<double> fixed_values_;
  std::vector<bool> fixed_;
  int unknowns_ = 0;
  std::vector<Row> rows_;
};

/// Unique lattice edges: all horizontal edges row by row, then all vertical.
std::vector<std::pair<int, int>> mesh_edges(const GridMesh& mesh);

/// ||w (v~(p) - v~(q))||^2 per match, p on mesh pair_id.first and q on
/// pair_id.second.
void add_alignment_term(EnergySystem& sys, const MatchSet& matches,
                        std::span<const GridMesh> meshes);

/// Per cell, each of the 4 edges against the cell's least-squares similarity
/// (expressed linearly in the cell's free vertices), scaled by sqrt(lambda).
void add_local_similarity_term(EnergySystem& sys, const GridMesh& mesh, int mesh_index,
                               double lambda);

/// Per unique edge, w(e) (c(e) - s cos(theta)) and w(e) (s(e) - s sin(theta)).
/// An empty weight vector means w(e) = 1.
void add_global_similarity_term(EnergySystem& sys, const GridMesh& mesh, int mesh_index,
                                const SimilarityParams& similarity,
                                std::span<const double> edge_weights = {});

/// w(e) = beta + gamma * d(e) with d(e) the distance from the edge midpoint to
/// the nearest overlap point, normalized by its maximum over the mesh.
std::vector<double> overlap_edge_weights(const GridMesh& mesh,
                                         const std::function<bool(const Point2&)>& in_overlap,
                                         double beta = 0.1, double gamma = 1.0);

/// Desired positions of one object: a single similarity of its rest points.
struct ObjectTargets {
  Point2 center = Point2::Zero();
  std::vector<Point2> samples;
};
using StructureTargets = std::vector<ObjectTargets>;

enum class SamplingStrategy { fan, chain };

struct StructureTermOptions {
  double lambda = 1.5;
  SamplingStrategy strategy = SamplingStrategy::fan;
  /// Also pull the center to its target (all three triangle vertices).
  bool full_triangle = false;
};

/// Fits one weighted similarity per object from its rest points to their
/// current warped positions (through `mesh`, or through `initial` before any
/// solve) and applies it to the rest points.
StructureTargets compute_structure_targets(std::span<const ObjectStructure> structs,
                                           const GridMesh& mesh,
                                           const std::optional<Homography>& initial,
                                           bool full_triangle = false);

void add_structure_term(EnergySystem& sys, const GridMesh& mesh, int mesh_index,
                        std::span<const ObjectStructure> structs,
                        const StructureTargets& targets,
                        const StructureTermOptions& options = {});

/// Everything attached to one image for assembly.
struct ImageTerms {
  SimilarityParams similarity;
  std::vector<double> edge_weights;
  std::vector<ObjectStructure> structures;
  StructureTargets targets;
};

struct AssemblyOptions {
  double lambda_local = 0.75;
  StructureTermOptions structure;
  /// Keep the reference mesh among the unknowns, anchoring its centroid and
  /// rotation with soft rows instead.
  bool free_reference = false;
  double gauge_weight = 100.0;
};

/// Full objective over all images. Mesh 0 is the reference.
EnergySystem assemble(std::span<const GridMesh> meshes, std::span<const MatchSet> matches,
                      std::span<const ImageTerms> images, const AssemblyOptions& options);

}  // namespace objstitch
