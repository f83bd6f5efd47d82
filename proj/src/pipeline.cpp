#include "objstitch/pipeline.hpp"

#include "objstitch/error.hpp"
#include "objstitch/metrics.hpp"
#include "objstitch/solver.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace objstitch {

namespace {

constexpr const char* kModule = "cli";

using Json = nlohmann::ordered_json;

bool projects_inside(const Homography& h, const Point2& p, int width, int height) {
  const Eigen::Vector3d x = h * p.homogeneous();
  if (!(x.z() > 1e-12)) return false;
  const Point2 q = x.hnormalized();
  return q.x() >= 0 && q.y() >= 0 && q.x() <= width - 1.0 && q.y() <= height - 1.0;
}

double target_movement(const std::vector<StructureTargets>& a,
                       const std::vector<StructureTargets>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t o = 0; o < a[i].size(); ++o) {
      for (std::size_t k = 0; k < a[i][o].samples.size(); ++k) {
        worst = std::max(worst, (a[i][o].samples[k] - b[i][o].samples[k]).norm());
      }
      worst = std::max(worst, (a[i][o].center - b[i][o].center).norm());
    }
  }
  return worst;
}

MatchSet clip_to_domains(const MatchSet& m, const GridMesh& a, const GridMesh& b) {
  MatchSet out{m.pair_id, {}};
  for (const auto& mm : m.matches) {
    if (mm.p.allFinite() && mm.q.allFinite() && a.contains(mm.p) && b.contains(mm.q)) {
      out.matches.push_back(mm);
    }
  }
  return out;
}

void draw_line(Raster& img, Point2 a, Point2 b, const std::array<float, 3>& color) {
  const double len = (b - a).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2)));
  for (int s = 0; s <= steps; ++s) {
    const Point2 p = a + (b - a) * (static_cast<double>(s) / steps);
    const int x = static_cast<int>(std::lround(p.x())), y = static_cast<int>(std::lround(p.y()));
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
    for (int c = 0; c < 3; ++c) img.set(x, y, c, color[c]);
  }
}

void draw_dot(Raster& img, const Point2& p, int radius, const std::array<float, 3>& color) {
  const int cx = static_cast<int>(std::lround(p.x())), cy = static_cast<int>(std::lround(p.y()));
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > radius * radius) continue;
      for (int c = 0; c < 3; ++c) img.set(x, y, c, color[c]);
    }
  }
}

Json energies_json(const std::array<double, kTermCount>& e) {
  Json j = Json::object();
  for (int t = 0; t < kTermCount; ++t) j[std::string(term_name(static_cast<Term>(t)))] = e[t];
  return j;
}

}  // namespace

std::string_view mode_name(StitchMode m) {
  switch (m) {
    case StitchMode::gsp: return "gsp";
    case StitchMode::obj_chain: return "obj-chain";
    case StitchMode::obj_fan: return "obj-fan";
  }
  return "unknown";
}

StitchMode parse_mode(std::string_view name) {
  if (name == "gsp") return StitchMode::gsp;
  if (name == "obj-chain") return StitchMode::obj_chain;
  if (name == "obj-fan") return StitchMode::obj_fan;
  throw Error(ErrorKind::bad_input, kModule, "unknown mode '" + std::string(name) + "'");
}

void StitchConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::bad_input, kModule, what);
  };
  require(lambda_local > 0, "lambda-l must be positive");
  require(lambda_object > 0, "lambda-obj must be positive");
  require(cell_size > 0, "cell size must be positive");
  require(sample_spacing > 0, "sample spacing must be positive");
  require(min_area_fraction >= 0 && min_area_fraction < 1, "min area fraction must lie in [0,1)");
  require(outer_iterations > 0, "outer iterations must be positive");
  require(target_tolerance >= 0, "target tolerance must be non-negative");
  require(ransac_threshold > 0, "ransac threshold must be positive");
  require(ransac_iterations > 0, "ransac iterations must be positive");
  require(feather_cells > 0, "feather must be positive");
  require(edge_weight_base >= 0 && edge_weight_slope >= 0, "edge weights must be non-negative");
  require(cg_tolerance > 0, "cg tolerance must be positive");
}

StitchResult stitch(const StitchInputs& inputs, const StitchConfig& config) {
  config.validate();
  const std::size_t n = inputs.images.size();
  if (n < 2) throw Error(ErrorKind::bad_input, kModule, "need at least two images");
  if (!inputs.masks.empty() && inputs.masks.size() != n) {
    throw Error(ErrorKind::bad_input, kModule, "mask list must cover every image");
  }
  if (!inputs.matches.empty() && inputs.matches.size() != n - 1) {
    throw Error(ErrorKind::bad_input, kModule, "match list must cover every non-reference image");
  }
  for (const auto& img : inputs.images) {
    if (img.empty()) throw Error(ErrorKind::bad_input, kModule, "empty input image");
  }

  StitchResult result;
  MetricReport& report = result.report;
  report.per_image.resize(n);

  std::vector<GridMesh> meshes;
  for (std::size_t i = 0; i < n; ++i) {
    meshes.push_back(build_mesh(inputs.images[i], config.cell_size, static_cast<int>(i)));
  }

  // Pairwise matching and the homography chain into the reference frame.
  std::vector<Homography> to_ref(n, Homography::Identity());
  DetectionConfig detection;
  detection.ransac_threshold = config.ransac_threshold;
  detection.ransac_iterations = config.ransac_iterations;
  detection.seed = config.seed;
  for (std::size_t i = 1; i < n; ++i) {
    const int parent = config.chain_topology ? static_cast<int>(i) - 1 : 0;
    const std::pair<int, int> pair{static_cast<int>(i), parent};
    MatchSet candidates;
    if (!inputs.matches.empty() && inputs.matches[i - 1]) {
      candidates = *inputs.matches[i - 1];
    } else {
      candidates = detect_and_match(inputs.images[i], inputs.images[parent], detection);
    }
    candidates.pair_id = pair;
    candidates = clip_to_domains(candidates, meshes[i], meshes[parent]);
    RansacResult ransac;
    try {
      ransac = estimate_homography_ransac(candidates, config.ransac_threshold,
                                          config.ransac_iterations, config.seed);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::degenerate) {
        throw Error(ErrorKind::insufficient_overlap, kModule,
                    "pair (" + std::to_string(i) + "," + std::to_string(parent) +
                        "): " + e.what());
      }
      throw;
    }
    ransac.inliers.pair_id = pair;
    to_ref[i] = normalize_homography(to_ref[parent] * ransac.h);
    report.per_image[i].matches = ransac.inliers.size();
    report.per_image[i].homography = to_ref[i];
    result.inliers.push_back(std::move(ransac.inliers));
  }

  std::vector<Homography> from_ref(n);
  for (std::size_t i = 0; i < n; ++i) from_ref[i] = to_ref[i].inverse();
  auto overlap_test = [&](std::size_t i) {
    return [&, i](const Point2& p) {
      const Eigen::Vector3d r = to_ref[i] * p.homogeneous();
      if (!(r.z() > 1e-12)) return false;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (projects_inside(from_ref[j] * to_ref[i], p, inputs.images[j].width(),
                            inputs.images[j].height())) {
          return true;
        }
      }
      return false;
    };
  };

  // Per-image similarity priors, edge weights and object structures.
  std::vector<ImageTerms> terms(n);
  result.structures.resize(n);
  const bool fixed_reference = !config.free_reference;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 && fixed_reference) continue;
    const auto& img = inputs.images[i];
    const auto sim = decompose_similarity(to_ref[i], img.width(), img.height());
    terms[i].similarity = sim;
    terms[i].edge_weights = overlap_edge_weights(meshes[i], overlap_test(i),
                                                 config.edge_weight_base,
                                                 config.edge_weight_slope);
    if (config.mode == StitchMode::gsp || inputs.masks.empty() || !inputs.masks[i]) continue;
    const MaskSet& raw = *inputs.masks[i];
    if (raw.width != img.width() || raw.height != img.height()) {
      throw Error(ErrorKind::bad_input, "masks",
                  "mask set for image " + std::to_string(i) + " has the wrong dimensions");
    }
    const MaskSet kept = filter_small_masks(raw, config.min_area_fraction);
    StructureOptions options;
    options.spacing = config.sample_spacing;
    if (config.omega_overlap) options.in_overlap = overlap_test(i);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      try {
        const Contour contour = trace_contour(kept.masks[k]);
        result.structures[i].push_back(build_structure(contour, kept.masks[k], options));
      } catch (const Error& e) {
        report.warnings.push_back("image " + std::to_string(i) + " mask " + std::to_string(k) +
                                  " skipped: " + e.what());
      }
    }
    terms[i].structures = result.structures[i];
    report.per_image[i].objects = result.structures[i].size();
  }

  // Initial deformation: each mesh pushed through its homography.
  for (std::size_t i = 1; i < n; ++i) {
    for (int v = 0; v < meshes[i].vertex_count(); ++v) {
      meshes[i].free.col(v) = apply_homography(to_ref[i], meshes[i].rest.col(v));
    }
  }

  AssemblyOptions assembly;
  assembly.lambda_local = config.lambda_local;
  assembly.free_reference = config.free_reference;
  assembly.structure.lambda = config.lambda_object;
  assembly.structure.strategy =
      config.mode == StitchMode::obj_chain ? SamplingStrategy::chain : SamplingStrategy::fan;
  // Center target rows exist only in fan triangles.
  const bool center_rows = config.full_triangle && config.mode == StitchMode::obj_fan;
  assembly.structure.full_triangle = center_rows;

  std::vector<StructureTargets> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    targets[i] = compute_structure_targets(terms[i].structures, meshes[i], to_ref[i],
                                           center_rows);
  }

  CgOptions cg;
  cg.tolerance = config.cg_tolerance;
  for (int outer = 0; outer < config.outer_iterations; ++outer) {
    if (outer > 0) {
      std::vector<StructureTargets> refreshed(n);
      for (std::size_t i = 0; i < n; ++i) {
        refreshed[i] = compute_structure_targets(terms[i].structures, meshes[i], std::nullopt,
                                                 center_rows);
      }
      const double moved = target_movement(targets, refreshed);
      targets = std::move(refreshed);
      if (moved < config.target_tolerance) break;
    }
    for (std::size_t i = 0; i < n; ++i) terms[i].targets = targets[i];
    const EnergySystem sys = assemble(meshes, result.inliers, terms, assembly);
    const Eigen::VectorXd x0 = sys.pack(meshes);
    result.system = sys.sparse();
    const Solution sol = solve_normal_cg(result.system, cg, x0);
    if (!sol.converged) {
      throw Error(ErrorKind::solver_failure, "solver",
                  "conjugate gradient did not converge in " + std::to_string(sol.iterations) +
                      " iterations");
    }
    if (outer == 0) report.initial_energies = sys.energy_by_term(x0);
    report.energy_trace.push_back(sys.energy(x0));
    report.energy_trace.push_back(sol.final_energy);
    sys.unpack(sol.x, meshes);
    report.term_energies = sys.energy_by_term(sol.x);
    for (int t = 0; t < kTermCount; ++t) report.term_rows[t] = sys.row_count(static_cast<Term>(t));
    report.solver_iterations += sol.iterations;
    report.outer_iterations = outer + 1;
  }

  // Compositing.
  result.canvas = compute_canvas(meshes);
  WarpOptions warp;
  for (std::size_t i = 0; i < n; ++i) {
    warp.feather_radius = config.feather_cells * meshes[i].cell_size();
    result.layers.push_back(warp_image(inputs.images[i], meshes[i], result.canvas, warp));
    if (result.layers.back().flipped_triangles > 0) {
      report.warnings.push_back("image " + std::to_string(i) + ": " +
                                std::to_string(result.layers.back().flipped_triangles) +
                                " flipped triangles skipped");
    }
  }
  result.panorama = blend(result.layers);
  result.coverage = coverage(result.layers);

  report.mdr = compute_mdr(meshes);
  report.overlap_rmse = compute_overlap_rmse(meshes, result.inliers);
  for (std::size_t i = 0; i < n; ++i) report.per_image[i].mdr = compute_mdr(meshes[i]);
  result.meshes = std::move(meshes);
  return result;
}

Raster render_debug(const StitchResult& result) {
  Raster out = result.panorama.to_rgb();
  const Eigen::Vector2d off = result.canvas.offset;
  constexpr std::array<float, 3> grid{0.1f, 0.9f, 0.2f};
  constexpr std::array<float, 3> contour{0.95f, 0.1f, 0.1f};
  constexpr std::array<float, 3> spoke{0.95f, 0.85f, 0.1f};
  constexpr std::array<float, 3> sample{0.1f, 0.3f, 0.95f};
  for (const auto& mesh : result.meshes) {
    for (const auto& [a, b] : mesh_edges(mesh)) {
      draw_line(out, Point2(mesh.free.col(a)) + off, Point2(mesh.free.col(b)) + off, grid);
    }
  }
  for (std::size_t i = 0; i < result.structures.size() && i < result.meshes.size(); ++i) {
    const auto& mesh = result.meshes[i];
    for (const auto& s : result.structures[i]) {
      const Point2 center = warp_point(mesh, s.center) + off;
      std::vector<Point2> warped;
      for (const auto& p : s.samples) warped.push_back(warp_point(mesh, p) + off);
      for (const auto& p : warped) draw_line(out, center, p, spoke);
      for (std::size_t k = 0; k < warped.size(); ++k) {
        draw_line(out, warped[k], warped[(k + 1) % warped.size()], contour);
      }
      for (const auto& p : warped) draw_dot(out, p, 2, sample);
      draw_dot(out, center, 3, contour);
    }
  }
  return out;
}

std::string config_to_json(const StitchConfig& c) {
  Json j;
  j["mode"] = mode_name(c.mode);
  j["lambda_l"] = c.lambda_local;
  j["lambda_obj"] = c.lambda_object;
  j["cell"] = c.cell_size;
  j["delta"] = c.sample_spacing;
  j["min_area_fraction"] = c.min_area_fraction;
  j["iterations"] = c.outer_iterations;
  j["target_tolerance"] = c.target_tolerance;
  j["ransac"] = {{"threshold", c.ransac_threshold},
                 {"iterations", c.ransac_iterations},
                 {"seed", c.seed}};
  j["feather_cells"] = c.feather_cells;
  j["omega_overlap"] = c.omega_overlap;
  j["full_triangle"] = c.full_triangle;
  j["free_reference"] = c.free_reference;
  j["topology"] = c.chain_topology ? "chain" : "star";
  j["edge_weight"] = {{"beta", c.edge_weight_base}, {"gamma", c.edge_weight_slope}};
  j["cg_tolerance"] = c.cg_tolerance;
  return j.dump(2);
}

std::string report_to_json(const MetricReport& r, const StitchConfig& config) {
  Json j;
  j["mdr"] = r.mdr;
  j["overlap_rmse"] = r.overlap_rmse;
  j["niqe"] = nullptr;
  j["notes"] = Json::array(
      {"mdr is a mesh-line straightness measure normalized per line; values are comparable "
       "between runs of this tool, not with externally published MDR tables",
       "niqe not computed"});
  Json images = Json::array();
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    const auto& p = r.per_image[i];
    Json h = Json::array();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) h.push_back(p.homography(a, b));
    }
    images.push_back({{"index", i},
                      {"mdr", p.mdr},
                      {"matches", p.matches},
                      {"objects", p.objects},
                      {"homography", h}});
  }
  j["per_image"] = images;
  j["term_energies"] = energies_json(r.term_energies);
  j["initial_energies"] = energies_json(r.initial_energies);
  Json rows = Json::object();
  for (int t = 0; t < kTermCount; ++t) rows[std::string(term_name(static_cast<Term>(t)))] = r.term_rows[t];
  j["term_rows"] = rows;
  j["energy_trace"] = r.energy_trace;
  j["solver_iterations"] = r.solver_iterations;
  j["outer_iterations"] = r.outer_iterations;
  j["warnings"] = r.warnings;
  j["config"] = Json::parse(config_to_json(config));
  return j.dump(2);
}

std::string report_to_table(const MetricReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %14.6g\n", "MDR", r.mdr);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %14.6g px\n", "overlap RMSE", r.overlap_rmse);
  out << line;
  for (int t = 0; t < kTermCount; ++t) {
    std::snprintf(line, sizeof line, "%-22s %14.6g  (%zu rows, initial %.6g)\n",
                  (std::string("energy/") + std::string(term_name(static_cast<Term>(t)))).c_str(),
                  r.term_energies[t], r.term_rows[t], r.initial_energies[t]);
    out << line;
  }
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    std::snprintf(line, sizeof line, "image %-16zu mdr %-10.6g matches %-6zu objects %zu\n", i,
                  r.per_image[i].mdr, r.per_image[i].matches, r.per_image[i].objects);
    out << line;
  }
  out << "NIQE: not computed\n";
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace objstitch
