#include "objstitch/energy.hpp"

#include "objstitch/error.hpp"
#include "objstitch/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace objstitch {

namespace {

constexpr const char* kModule = "meshwarp";

void canonicalize(std::vector<std::pair<int, double>>& coeffs) {
  std::stable_sort(coeffs.begin(), coeffs.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (out > 0 && coeffs[out - 1].first == coeffs[i].first) {
      coeffs[out - 1].second += coeffs[i].second;
    } else {
      coeffs[out++] = coeffs[i];
    }
  }
  coeffs.resize(out);
  std::erase_if(coeffs, [](const auto& c) { return c.second == 0.0; });
}

LinearForm scaled_slot(int slot, double w) { return {{{slot, w}}, 0.0}; }

}  // namespace

std::string_view term_name(Term t) {
  switch (t) {
    case Term::alignment: return "alignment";
    case Term::local: return "local";
    case Term::global: return "global";
    case Term::structure: return "structure";
  }
  return "unknown";
}

// -- LinearForm / PointForm --------------------------------------------------

LinearForm& LinearForm::operator+=(const LinearForm& o) {
  coeffs.insert(coeffs.end(), o.coeffs.begin(), o.coeffs.end());
  constant += o.constant;
  return *this;
}

LinearForm& LinearForm::operator*=(double s) {
  for (auto& c : coeffs) c.second *= s;
  constant *= s;
  return *this;
}

LinearForm operator+(LinearForm a, const LinearForm& b) { return a += b; }
LinearForm operator-(LinearForm a, const LinearForm& b) { return a += -1.0 * b; }
LinearForm operator*(double s, LinearForm a) { return a *= s; }

PointForm PointForm::constant(const Point2& p) {
  PointForm f;
  f.xy[0].constant = p.x();
  f.xy[1].constant = p.y();
  return f;
}

PointForm& PointForm::operator+=(const PointForm& o) {
  xy[0] += o.xy[0];
  xy[1] += o.xy[1];
  return *this;
}

PointForm& PointForm::operator*=(double s) {
  xy[0] *= s;
  xy[1] *= s;
  return *this;
}

PointForm operator+(PointForm a, const PointForm& b) { return a += b; }
PointForm operator-(PointForm a, const PointForm& b) { return a += -1.0 * b; }
PointForm operator*(double s, PointForm a) { return a *= s; }

PointForm rotate90(const PointForm& p) {
  PointForm r;
  r.xy[0] = p.xy[1];
  r.xy[1] = -1.0 * p.xy[0];
  return r;
}

// -- EnergySystem ------------------------------------------------------------

EnergySystem::EnergySystem(std::span<const GridMesh> meshes, std::vector<bool> fixed)
    : fixed_(std::move(fixed)) {
  if (fixed_.size() != meshes.size()) {
    throw Error(ErrorKind::bad_input, kModule, "fixed flags do not match mesh count");
  }
  int slots = 0;
  for (const auto& m : meshes) {
    slot_base_.push_back(slots);
    slots += 2 * m.vertex_count();
  }
  slot_to_unknown_.assign(slots, -1);
  fixed_values_.assign(slots, 0.0);
  for (std::size_t mi = 0; mi < meshes.size(); ++mi) {
    const auto& m = meshes[mi];
    for (int v = 0; v < m.vertex_count(); ++v) {
      for (int axis = 0; axis < 2; ++axis) {
        const int s = slot(static_cast<int>(mi), v, axis);
        if (fixed_[mi]) {
          fixed_values_[s] = m.free(axis, v);
        } else {
          slot_to_unknown_[s] = unknowns_++;
        }
      }
    }
  }
}

PointForm EnergySystem::vertex(int mesh, int v) const {
  PointForm f;
  f.xy[0] = scaled_slot(slot(mesh, v, 0), 1.0);
  f.xy[1] = scaled_slot(slot(mesh, v, 1), 1.0);
  return f;
}

PointForm EnergySystem::point(int mesh, const BilinearAnchor& a) const {
  PointForm f;
  for (int i = 0; i < 4; ++i) {
    if (a.weights[i] == 0.0) continue;
    f.xy[0].coeffs.emplace_back(slot(mesh, a.vertex_ids[i], 0), a.weights[i]);
    f.xy[1].coeffs.emplace_back(slot(mesh, a.vertex_ids[i], 1), a.weights[i]);
  }
  return f;
}

void EnergySystem::add_row(const LinearForm& form, double scale, const RowInfo& info) {
  Row row;
  row.info = info;
  double constant = form.constant;
  for (const auto& [s, c] : form.coeffs) {
    const int u = slot_to_unknown_.at(s);
    if (u < 0) {
      constant += c * fixed_values_[s];
    } else {
      row.coeffs.emplace_back(u, scale * c);
    }
  }
  canonicalize(row.coeffs);
  row.rhs = -scale * constant;
  for (const auto& c : row.coeffs) {
    if (!std::isfinite(c.second)) {
      throw Error(ErrorKind::solver_failure, kModule, "non-finite coefficient");
    }
  }
  if (!std::isfinite(row.rhs)) {
    throw Error(ErrorKind::solver_failure, kModule, "non-finite row constant");
  }
  rows_.push_back(std::move(row));
}

void EnergySystem::add_rows(const PointForm& form, double scale, const RowInfo& info) {
  add_row(form.xy[0], scale, info);
  add_row(form.xy[1], scale, info);
}

std::size_t EnergySystem::row_count(Term t) const {
  return static_cast<std::size_t>(std::count_if(
      rows_.begin(), rows_.end(), [t](const Row& r) { return r.info.tag == t; }));
}

Eigen::VectorXd EnergySystem::pack(std::span<const GridMesh> meshes) const {
  Eigen::VectorXd x(unknowns_);
  for (std::size_t mi = 0; mi < meshes.size(); ++mi) {
    if (fixed_[mi]) continue;
    for (int v = 0; v < meshes[mi].vertex_count(); ++v) {
      for (int axis = 0; axis < 2; ++axis) {
        x[slot_to_unknown_[slot(static_cast<int>(mi), v, axis)]] = meshes[mi].free(axis, v);
      }
    }
  }
  return x;
}

void EnergySystem::unpack(const Eigen::VectorXd& x, std::span<GridMesh> meshes) const {
  for (std::size_t mi = 0; mi < meshes.size(); ++mi) {
    if (fixed_[mi]) continue;
    for (int v = 0; v < meshes[mi].vertex_count(); ++v) {
      for (int axis = 0; axis < 2; ++axis) {
        meshes[mi].free(axis, v) = x[slot_to_unknown_[slot(static_cast<int>(mi), v, axis)]];
      }
    }
  }
}

SparseSystem EnergySystem::sparse() const {
  SparseSystem s;
  s.rows = static_cast<int>(rows_.size());
  s.cols = unknowns_;
  s.rhs.resize(s.rows);
  for (int r = 0; r < s.rows; ++r) {
    for (const auto& [c, v] : rows_[r].coeffs) s.triplets.emplace_back(r, c, v);
    s.rhs[r] = rows_[r].rhs;
  }
  return s;
}

std::array<double, kTermCount> EnergySystem::energy_by_term(const Eigen::VectorXd& x) const {
  std::array<double, kTermCount> e{};
  for (const auto& row : rows_) {
    double r = -row.rhs;
    for (const auto& [c, v] : row.coeffs) r += v * x[c];
    e[static_cast<int>(row.info.tag)] += r * r;
  }
  return e;
}

double EnergySystem::energy(const Eigen::VectorXd& x) const {
  const auto e = energy_by_term(x);
  return e[0] + e[1] + e[2] + e[3];
}

// -- Terms -------------------------------------------------------------------

std::vector<std::pair<int, int>> mesh_edges(const GridMesh& mesh) {
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r <= mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) edges.emplace_back(mesh.vertex_id(c, r), mesh.vertex_id(c + 1, r));
  }
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c <= mesh.cols; ++c) edges.emplace_back(mesh.vertex_id(c, r), mesh.vertex_id(c, r + 1));
  }
  return edges;
}

void add_alignment_term(EnergySystem& sys, const MatchSet& matches,
                        std::span<const GridMesh> meshes) {
  const auto [i, j] = matches.pair_id;
  if (i < 0 || j < 0 || i >= static_cast<int>(meshes.size()) ||
      j >= static_cast<int>(meshes.size())) {
    throw Error(ErrorKind::bad_input, kModule, "match pair refers to an unknown image");
  }
  for (const auto& m : matches.matches) {
    const PointForm p = sys.point(i, anchor(meshes[i], m.p));
    const PointForm q = sys.point(j, anchor(meshes[j], m.q));
    sys.add_rows(p - q, m.weight, {Term::alignment, i, -1, -1, false});
  }
}

void add_local_similarity_term(EnergySystem& sys, const GridMesh& mesh, int mesh_index,
                               double lambda) {
  const double scale = std::sqrt(lambda);
  for (int r = 0; r < mesh.rows; ++r) {
    for (int c = 0; c < mesh.cols; ++c) {
      const std::array<int, 4> ids{mesh.vertex_id(c, r), mesh.vertex_id(c + 1, r),
                                   mesh.vertex_id(c + 1, r + 1), mesh.vertex_id(c, r + 1)};
      Point2 centroid = Point2::Zero();
      for (int id : ids) centroid += mesh.rest.col(id);
      centroid /= 4.0;
      double spread = 0;
      for (int id : ids) spread += (Point2(mesh.rest.col(id)) - centroid).squaredNorm();
      // Least-squares similarity parameters, linear in the free vertices.
      LinearForm cos_part, sin_part;
      for (int id : ids) {
        const Point2 u = Point2(mesh.rest.col(id)) - centroid;
        const int sx = sys.slot(mesh_index, id, 0), sy = sys.slot(mesh_index, id, 1);
        cos_part.coeffs.emplace_back(sx, u.x() / spread);
        cos_part.coeffs.emplace_back(sy, u.y() / spread);
        sin_part.coeffs.emplace_back(sy, u.x() / spread);
        sin_part.coeffs.emplace_back(sx, -u.y() / spread);
      }
      for (int k = 0; k < 4; ++k) {
        const int a = ids[k], b = ids[(k + 1) % 4];
        const Point2 e = mesh.rest.col(b) - mesh.rest.col(a);
        const PointForm d = sys.vertex(mesh_index, b) - sys.vertex(mesh_index, a);
        PointForm rotated;
        rotated.xy[0] = e.x() * cos_part - e.y() * sin_part;
        rotated.xy[1] = e.x() * sin_part + e.y() * cos_part;
        sys.add_rows(d - rotated, scale, {Term::local, mesh_index, -1, -1, false});
      }
    }
  }
}

void add_global_similarity_term(EnergySystem& sys, const GridMesh& mesh, int mesh_index,
                                const SimilarityParams& similarity,
                                std::span<const double> edge_weights) {
  const auto edges = mesh_edges(mesh);
  if (!edge_weights.empty() && edge_weights.size() != edges.size()) {
    throw Error(ErrorKind::bad_input, kModule, "edge weight count does not match mesh");
  }
  const double target_cos = similarity.scale * std::cos(similarity.angle);
  const double target_sin = similarity.scale * std::sin(similarity.angle);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [a, b] = edges[k];
    const Point2 e = mesh.rest.col(b) - mesh.rest.col(a);
    const double len2 = e.squaredNorm();
    if (!(len2 > 0)) throw Error(ErrorKind::degenerate, kModule, "zero-length rest edge");
    const PointForm d = sys.vertex(mesh_index, b) - sys.vertex(mesh_index, a);
    LinearForm c = (e.x() / len2) * d.xy[0] + (e.y() / len2) * d.xy[1];
    LinearForm s = (e.x() / len2) * d.xy[1] - (e.y() / len2) * d.xy[0];
    c.constant -= target_cos;
    s.constant -= target_sin;
    const double w = edge_weights.empty() ? 1.0 : edge_weights[k];
    sys.add_row(c, w, {Term::global, mesh_index, -1, -1, false});
    sys.add_row(s, w, {Term::global, mesh_index, -1, -1, false});
  }
}

std::vector<double> overlap_edge_weights(const GridMesh& mesh,
                                         const std::function<bool(const Point2&)>& in_overlap,
                                         double beta, double gamma) {
  const double step = std::max(1.0, std::min(mesh.cell_width, mesh.cell_height) / 4.0);
  std::vector<Point2> overlap;
  for (double y = 0; y <= mesh.domain_height() + 1e-9; y += step) {
    for (double x = 0; x <= mesh.domain_width() + 1e-9; x += step) {
      const Point2 p(x, y);
      if (in_overlap(p)) overlap.push_back(p);
    }
  }
  const auto edges = mesh_edges(mesh);
  std::vector<double> dist(edges.size(), 0.0);
  double max_dist = 0;
  if (!overlap.empty()) {
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const Point2 mid = 0.5 * (mesh.rest.col(edges[k].first) + mesh.rest.col(edges[k].second));
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : overlap) best = std::min(best, (p - mid).squaredNorm());
      dist[k] = std::sqrt(best);
      max_dist = std::max(max_dist, dist[k]);
    }
  }
  std::vector<double> w(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    w[k] = beta + gamma * (max_dist > 0 ? dist[k] / max_dist : 0.0);
  }
  return w;
}

StructureTargets compute_structure_targets(std::span<const ObjectStructure> structs,
                                           const GridMesh& mesh,
                                           const std::optional<Homography>& initial,
                                           bool full_triangle) {
  StructureTargets out;
  out.reserve(structs.size());
  for (const auto& s : structs) {
    std::vector<Point2> rest{s.center};
    rest.insert(rest.end(), s.samples.begin(), s.samples.end());
    std::vector<double> weights{full_triangle ? static_cast<double>(s.size()) : 0.0};
    weights.insert(weights.end(), s.weights.begin(), s.weights.end());
    std::vector<Point2> warped;
    warped.reserve(rest.size());
    for (const auto& p : rest) {
      warped.push_back(initial ? apply_homography(*initial, p) : warp_point(mesh, p));
    }
    const auto fit = fit_similarity<double>(rest, warped, weights);
    ObjectTargets t;
    t.center = fit(s.center);
    t.samples.reserve(s.size());
    for (const auto& p : s.samples) t.samples.push_back(fit(p));
    out.push_back(std::move(t));
  }
  return out;
}

void add_structure_term(EnergySystem& sys, const GridMesh& mesh, int mesh_index,
                        std::span<const ObjectStructure> structs,
                        const StructureTargets& targets,
                        const StructureTermOptions& options) {
  if (targets.size() != structs.size()) {
    throw Error(ErrorKind::bad_input, kModule, "structure targets do not match objects");
  }
  for (std::size_t obj = 0; obj < structs.size(); ++obj) {
    const auto& s = structs[obj];
    const auto& t = targets[obj];
    const std::size_t n = s.size();
    if (t.samples.size() != n) {
      throw Error(ErrorKind::bad_input, kModule, "target count differs from sample count");
    }
    std::vector<PointForm> samples;
    samples.reserve(n);
    for (const auto& p : s.samples) samples.push_back(sys.point(mesh_index, anchor(mesh, p)));
    const PointForm center = sys.point(mesh_index, anchor(mesh, s.center));
    const int o = static_cast<int>(obj);

    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t next = (i + 1) % n;
      PointForm origin, from;
      std::size_t subject = next;
      Eigen::Vector2d xy;
      std::size_t held = i;  // vertex pulled to its target
      if (options.strategy == SamplingStrategy::fan) {
        origin = center;
        from = samples[i];
        xy = s.local_coords[i];
      } else {
        const std::size_t after = (i + 2) % n;
        origin = samples[i];
        from = samples[next];
        subject = after;
        held = next;
        xy = local_coordinates<double>(s.samples[i], s.samples[next], s.samples[after]);
      }
      const PointForm arm = from - origin;
      const PointForm predicted = origin + xy.x() * arm + xy.y() * rotate90(arm);
      sys.add_rows(predicted - samples[subject],
                   std::sqrt(options.lambda * s.weights[subject]),
                   {Term::structure, mesh_index, o, static_cast<int>(subject), false});
      sys.add_rows(PointForm::constant(t.samples[held]) - samples[held],
                   std::sqrt(options.lambda * s.weights[held]),
                   {Term::structure, mesh_index, o, static_cast<int>(held), true});
      if (options.full_triangle && options.strategy == SamplingStrategy::fan) {
        sys.add_rows(PointForm::constant(t.center) - center, std::sqrt(options.lambda),
                     {Term::structure, mesh_index, o, -1, true});
      }
    }
  }
}

EnergySystem assemble(std::span<const GridMesh> meshes, std::span<const MatchSet> matches,
                      std::span<const ImageTerms> images, const AssemblyOptions& options) {
  if (meshes.empty()) throw Error(ErrorKind::bad_input, kModule, "no meshes to assemble");
  if (images.size() != meshes.size()) {
    throw Error(ErrorKind::bad_input, kModule, "per-image terms do not match mesh count");
  }
  std::vector<bool> fixed(meshes.size(), false);
  fixed[0] = !options.free_reference;
  EnergySystem sys(meshes, fixed);

  for (const auto& m : matches) add_alignment_term(sys, m, meshes);

  for (std::size_t i = 0; i < meshes.size(); ++i) {
    if (fixed[i]) continue;
    const int mi = static_cast<int>(i);
    const auto& mesh = meshes[i];
    const auto& terms = images[i];
    add_local_similarity_term(sys, mesh, mi, options.lambda_local);
    add_global_similarity_term(sys, mesh, mi, terms.similarity, terms.edge_weights);
    if (!terms.structures.empty()) {
      add_structure_term(sys, mesh, mi, terms.structures, terms.targets, options.structure);
    }
  }

  if (options.free_reference) {
    // Soft gauge on the reference: rest centroid and zero mean rotation.
    const auto& ref = meshes[0];
    const int n = ref.vertex_count();
    Point2 centroid = ref.rest.rowwise().mean();
    PointForm drift;
    LinearForm spin;
    double spread = 0;
    for (int v = 0; v < n; ++v) {
      const Point2 u = Point2(ref.rest.col(v)) - centroid;
      spread += u.squaredNorm();
    }
    for (int v = 0; v < n; ++v) {
      const Point2 u = Point2(ref.rest.col(v)) - centroid;
      drift += (1.0 / n) * (sys.vertex(0, v) - PointForm::constant(ref.rest.col(v)));
      spin.coeffs.emplace_back(sys.slot(0, v, 1), u.x() / spread);
      spin.coeffs.emplace_back(sys.slot(0, v, 0), -u.y() / spread);
    }
    sys.add_rows(drift, options.gauge_weight, {Term::global, 0, -1, -1, false});
    sys.add_row(spin, options.gauge_weight, {Term::global, 0, -1, -1, false});
  }
  return sys;
}

}  // namespace objstitch
