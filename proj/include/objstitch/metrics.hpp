#pragma once

#include "objstitch/features.hpp"
#include "objstitch/mesh.hpp"

#include <span>
#include <vector>

namespace objstitch {

/// Straightness of deformed mesh lines. For every lattice row and column with
/// at least 3 vertices, the RMS perpendicular distance of its deformed
/// vertices to their total-least-squares line, divided by the line's mean
/// deformed segment length. Returns the mean over all lines of all meshes.
///
/// This is an MDR-style measure: zero for any similarity of the rest
/// lattice, invariant under global similarity, but not digit-comparable with
/// published MDR tables.
double compute_mdr(std::span<const GridMesh> meshes);

/// Per-mesh variant of compute_mdr.
double compute_mdr(const GridMesh& mesh);

/// RMS distance, in reference pixels, between each match's p warped through
/// mesh pair_id.first and q warped through mesh pair_id.second.
double compute_overlap_rmse(std::span<const GridMesh> meshes,
                            std::span<const MatchSet> matches);

/// Residual of the best least-squares similarity mapping `rest` onto
/// `warped`, as an RMS distance.
double similarity_residual(std::span<const Point2> rest, std::span<const Point2> warped);

}  // namespace objstitch
