#pragma once

#include "objstitch/compose.hpp"
#include "objstitch/energy.hpp"
#include "objstitch/features.hpp"
#include "objstitch/masks.hpp"
#include "objstitch/mesh.hpp"
#include "objstitch/raster.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace objstitch {

enum class StitchMode { gsp, obj_chain, obj_fan };

std::string_view mode_name(StitchMode m);
/// Accepts "gsp", "obj-chain", "obj-fan".
StitchMode parse_mode(std::string_view name);

struct StitchConfig {
  StitchMode mode = StitchMode::obj_fan;
  double lambda_local = 0.75;
  double lambda_object = 1.5;
  double cell_size = 40.0;
  double sample_spacing = 20.0;
  double min_area_fraction = 0.001;
  int outer_iterations = 2;
  double target_tolerance = 0.1;  // pixels
  double ransac_threshold = 3.0;
  int ransac_iterations = 2000;
  std::uint64_t seed = 0;
  double feather_cells = 2.0;
  /// Halve ω for samples inside the overlap region.
  bool omega_overlap = false;
  /// Center residual in every fan triangle as well.
  bool full_triangle = false;
  /// Reference mesh kept free with soft centroid/rotation anchoring.
  bool free_reference = false;
  /// Pair image i with i-1 instead of with the reference.
  bool chain_topology = false;
  double edge_weight_base = 0.1;
  double edge_weight_slope = 1.0;
  double cg_tolerance = 1e-8;

  /// Throws bad_input when a value is out of range.
  void validate() const;
};

struct StitchInputs {
  std::vector<Raster> images;                 // images[0] is the reference
  std::vector<std::optional<MaskSet>> masks;  // per image; empty or size n
  std::vector<std::optional<MatchSet>> matches;  // per non-reference image; empty or size n-1
};

struct ImageReport {
  double mdr = 0;
  std::size_t matches = 0;
  std::size_t objects = 0;
  Homography homography = Homography::Identity();
};

struct MetricReport {
  double mdr = 0;
  double overlap_rmse = 0;
  std::vector<ImageReport> per_image;
  std::array<double, kTermCount> term_energies{};
  std::array<double, kTermCount> initial_energies{};
  std::array<std::size_t, kTermCount> term_rows{};
  /// Total energy before and after the solve of each outer iteration.
  std::vector<double> energy_trace;
  int solver_iterations = 0;
  int outer_iterations = 0;
  std::vector<std::string> warnings;
};

struct StitchResult {
  Raster panorama;
  std::vector<float> coverage;
  Canvas canvas;
  std::vector<GridMesh> meshes;
  std::vector<MatchSet> inliers;
  std::vector<std::vector<ObjectStructure>> structures;
  std::vector<Layer> layers;
  MetricReport report;
  /// Last assembled system, for dumps.
  SparseSystem system;
};

/// Full pipeline: matching, homography chain, structure extraction, outer
/// target-refresh loop over the assembled least-squares problem, warping
/// and blending.
StitchResult stitch(const StitchInputs& inputs, const StitchConfig& config);

/// Deformed grid, object contours, fan spokes and samples drawn over the
/// panorama.
Raster render_debug(const StitchResult& result);

std::string config_to_json(const StitchConfig& config);
std::string report_to_json(const MetricReport& report, const StitchConfig& config);
std::string report_to_table(const MetricReport& report);

}  // namespace objstitch
