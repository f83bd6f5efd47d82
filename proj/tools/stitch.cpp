// Command-line driver: stitch <ref> <img...> [options]

#include "objstitch/error.hpp"
#include "objstitch/features.hpp"
#include "objstitch/masks.hpp"
#include "objstitch/pipeline.hpp"
#include "objstitch/raster.hpp"
#include "objstitch/solver.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOverlap = 2;
constexpr int kExitBadInput = 3;
constexpr int kExitSolver = 4;

int exit_code(objstitch::ErrorKind kind) {
  switch (kind) {
    case objstitch::ErrorKind::insufficient_overlap: return kExitOverlap;
    case objstitch::ErrorKind::solver_failure:
    case objstitch::ErrorKind::degenerate: return kExitSolver;
    case objstitch::ErrorKind::bad_input:
    case objstitch::ErrorKind::io: return kExitBadInput;
  }
  return kExitBadInput;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw objstitch::Error(objstitch::ErrorKind::io, "cli", "cannot write " + path.string());
  }
  out << text << '\n';
  if (!out) throw objstitch::Error(objstitch::ErrorKind::io, "cli", "cannot write " + path.string());
}

bool is_placeholder(const std::string& s) { return s == "-" || s == "none"; }

}  // namespace

int main(int argc, char** argv) {
  using namespace objstitch;

  CLI::App app{"Mesh-based image stitching with object-level structure preservation"};
  StitchConfig config;
  std::vector<std::string> images;
  std::vector<std::string> mask_files;
  std::vector<std::string> match_files;
  std::string mode = std::string(mode_name(config.mode));
  std::string out_path = "pano.png";
  std::string report_path;
  std::string debug_dir;
  std::string system_dump;
  bool print_config = false;

  app.add_option("images", images, "Reference image followed by the images to align")
      ->required()
      ->expected(2, -1);
  app.add_option("--mode", mode, "gsp | obj-chain | obj-fan")
      ->check(CLI::IsMember({"gsp", "obj-chain", "obj-fan"}))
      ->capture_default_str();
  app.add_option("--masks", mask_files,
                 "Mask manifest per non-reference image ('-' for none)");
  app.add_option("--matches", match_files,
                 "Match file per pair (image i against its parent; '-' to detect)");
  app.add_option("--out", out_path, "Panorama PNG")->capture_default_str();
  app.add_option("--report", report_path, "Metric report JSON");
  app.add_option("--debug-dir", debug_dir, "Directory for overlays and per-layer PNGs");
  app.add_option("--dump-system", system_dump, "Write the final least-squares system as triplets");
  app.add_option("--lambda-l", config.lambda_local, "Local similarity weight")->capture_default_str();
  app.add_option("--lambda-obj", config.lambda_object, "Object structure weight")
      ->capture_default_str();
  app.add_option("--cell", config.cell_size, "Mesh cell size in pixels")->capture_default_str();
  app.add_option("--delta", config.sample_spacing, "Contour sampling interval in pixels")
      ->capture_default_str();
  app.add_option("--min-area-fraction", config.min_area_fraction,
                 "Drop masks smaller than this fraction of the image")
      ->capture_default_str();
  app.add_option("--iterations", config.outer_iterations, "Outer target-refresh iterations")
      ->capture_default_str();
  app.add_option("--feather", config.feather_cells, "Feather radius in mesh cells")
      ->capture_default_str();
  app.add_option("--seed", config.seed, "RANSAC seed")->capture_default_str();
  app.add_option("--ransac-threshold", config.ransac_threshold, "RANSAC inlier threshold, px")
      ->capture_default_str();
  app.add_option("--ransac-iterations", config.ransac_iterations, "RANSAC iterations")
      ->capture_default_str();
  app.add_flag("--omega-overlap", config.omega_overlap,
               "Weight structure samples inside the overlap by 0.5 (default: all weights 1)");
  app.add_flag("--full-triangle", config.full_triangle,
               "Also constrain the fan center (default: boundary vertices only)");
  app.add_flag("--free-reference", config.free_reference,
               "Optimize the reference mesh too, with soft centroid/rotation anchoring");
  app.add_flag("--chain", config.chain_topology, "Pair image i with i-1 instead of the reference");
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    config.mode = parse_mode(mode);
    config.validate();
    if (print_config) {
      std::cout << config_to_json(config) << '\n';
      return 0;
    }

    const std::size_t n = images.size();
    if (!mask_files.empty() && mask_files.size() != n - 1) {
      throw Error(ErrorKind::bad_input, "cli",
                  "--masks expects one manifest per non-reference image");
    }
    if (!match_files.empty() && match_files.size() != n - 1) {
      throw Error(ErrorKind::bad_input, "cli", "--matches expects one file per pair");
    }

    StitchInputs inputs;
    for (const auto& path : images) inputs.images.push_back(load_raster(path));
    if (!mask_files.empty()) {
      inputs.masks.resize(n);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (is_placeholder(mask_files[i])) continue;
        MaskSet ms = load_mask_manifest(mask_files[i]);
        ms.image_id = static_cast<int>(i + 1);
        inputs.masks[i + 1] = std::move(ms);
      }
    }
    if (!match_files.empty()) {
      inputs.matches.resize(n - 1);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (is_placeholder(match_files[i])) continue;
        inputs.matches[i] = read_matches(match_files[i]);
      }
    }

    const StitchResult result = stitch(inputs, config);
    write_raster(result.panorama, out_path);
    if (!report_path.empty()) write_text(report_path, report_to_json(result.report, config));
    if (!system_dump.empty()) write_system(result.system, system_dump);
    if (!debug_dir.empty()) {
      const std::filesystem::path dir(debug_dir);
      std::filesystem::create_directories(dir);
      write_raster(render_debug(result), dir / "overlay.png");
      for (std::size_t i = 0; i < result.layers.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "layer_%03zu.png", i);
        write_raster_rgba(result.layers[i].warped, result.layers[i].alpha, dir / name);
      }
      for (std::size_t i = 1; i < result.report.per_image.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "homography_%03zu.txt", i);
        write_text(dir / name, format_homography(result.report.per_image[i].homography));
      }
    }
    std::cout << report_to_table(result.report);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: cli: " << e.what() << '\n';
    return kExitBadInput;
  }
}
