#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "pinnlab/geometry.hpp"
#include "pinnlab/models.hpp"
#include "pinnlab/pde.hpp"

namespace pinnlab {

enum class Sampler { Eas, Gus, Lhs, Rad };

inline const char* sampler_name(Sampler s) {
  switch (s) {
    case Sampler::Eas: return "eas";
    case Sampler::Gus: return "gus";
    case Sampler::Lhs: return "lhs";
    case Sampler::Rad: return "rad";
  }
  return "?";
}

inline Sampler sampler_from_name(const std::string& s) {
  if (s == "eas") return Sampler::Eas;
  if (s == "gus") return Sampler::Gus;
  if (s == "lhs") return Sampler::Lhs;
  if (s == "rad") return Sampler::Rad;
  throw ConfigError("unknown sampler: " + s);
}

enum class LossMode { Pointwise, SetEnergy };

struct Weights {
  double interior = 1.0, initial = 1.0, initial_dt = 1.0, boundary = 1.0;
};

/// How collocation points are drawn. The chosen sampler applies to the
/// interior; initial/boundary faces always carry their own lower-dimensional
/// stratified partitions so the set loss applies uniformly across regions.
struct SamplePlan {
  std::vector<int> interior_cells;
  int interior_points_per_element = 4;
  int face_cells = 8;  // cells per free axis of each face
  int face_points_per_element = 4;
  Sampler sampler = Sampler::Eas;
};

struct FaceBatch {
  size_t constraint = 0;
  Partition partition;          // over the face's free axes
  PointBatch points;            // face coordinates
  std::vector<double> lifted;   // full-dim coords, point-major
  std::vector<double> partner;  // periodic partner coords (empty otherwise)
};

struct ProblemBatches {
  Partition interior_partition;
  PointBatch interior;
  std::vector<FaceBatch> faces;
};

inline ProblemBatches sample_problem_batches(
    const PdeProblem& prob, const SamplePlan& plan, uint64_t seed,
    const std::function<double(std::span<const double>)>& rad_field = {}) {
  ProblemBatches out;
  out.interior_partition = Partition(prob.domain, plan.interior_cells);
  Rng root(seed);
  Rng r_int = root.stream(0);
  const int total = out.interior_partition.size() * plan.interior_points_per_element;
  switch (plan.sampler) {
    case Sampler::Eas:
      out.interior = sample_eas(out.interior_partition, plan.interior_points_per_element, r_int);
      break;
    case Sampler::Gus:
      out.interior = sample_gus(prob.domain, total, r_int, &out.interior_partition);
      break;
    case Sampler::Lhs:
      out.interior = sample_lhs(prob.domain, total, r_int, &out.interior_partition);
      break;
    case Sampler::Rad: {
      if (!rad_field) throw ConfigError("rad sampler requires a residual field");
      out.interior = sample_rad(prob.domain, total, rad_field, r_int, {},
                                &out.interior_partition);
      break;
    }
  }
  for (size_t c = 0; c < prob.constraints.size(); ++c) {
    const Constraint& con = prob.constraints[c];
    FaceBatch fb;
    fb.constraint = c;
    Domain face = con.face_domain(prob.domain);
    fb.partition = Partition(face, std::vector<int>(static_cast<size_t>(face.dim()),
                                                    plan.face_cells));
    Rng r_face = root.stream(1 + c);
    fb.points = sample_eas(fb.partition, plan.face_points_per_element, r_face, con.tag);
    fb.lifted.resize(fb.points.size() * static_cast<size_t>(prob.dim));
    for (size_t i = 0; i < fb.points.size(); ++i)
      con.lift(fb.points.point(i),
               std::span(fb.lifted.data() + i * static_cast<size_t>(prob.dim),
                         static_cast<size_t>(prob.dim)));
    if (con.kind == ConstraintKind::PeriodicPair) {
      fb.partner.resize(fb.lifted.size());
      for (size_t i = 0; i < fb.points.size(); ++i)
        con.partner(prob.domain,
                    std::span(fb.lifted.data() + i * static_cast<size_t>(prob.dim),
                              static_cast<size_t>(prob.dim)),
                    std::span(fb.partner.data() + i * static_cast<size_t>(prob.dim),
                              static_cast<size_t>(prob.dim)));
    }
    out.faces.push_back(std::move(fb));
  }
  return out;
}

/// Region totals of one loss evaluation. `element_energies` are the interior
/// per-element localized energies (set-energy mode only).
struct LossBreakdown {
  double interior = 0.0, initial = 0.0, initial_dt = 0.0, boundary = 0.0;
  double total = 0.0;
  std::vector<double> element_energies;

  std::string json_line(int64_t step) const {
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "{\"step\":%lld,\"interior\":%.17g,\"initial\":%.17g,"
                  "\"initial_dt\":%.17g,\"boundary\":%.17g,\"total\":%.17g}",
                  static_cast<long long>(step), interior, initial, initial_dt,
                  boundary, total);
    return buf;
  }
};

/// A recorded loss computation over fixed collocation batches. Built once;
/// each evaluation rebinds theta and replays the graph.
class LossGraph {
 public:
  explicit LossGraph(Tape tape) : tape_(std::move(tape)) {}

  NodeId total_node = kNoNode;
  NodeId interior_node = kNoNode, initial_node = kNoNode;
  NodeId initial_dt_node = kNoNode, boundary_node = kNoNode;
  std::vector<NodeId> interior_energy_nodes;

  Tape& tape() { return tape_; }
  const Tape& tape() const { return tape_; }

  double eval(std::span<const double> theta) {
    tape_.set_params(theta.data(), static_cast<int64_t>(theta.size()));
    tape_.replay();
    double v = tape_.value(total_node);
    if (!std::isfinite(v)) tape_.ensure_finite("loss evaluation");
    return v;
  }

  double eval_grad(std::span<const double> theta, std::span<double> grad) {
    double v = eval(theta);
    tape_.gradient(total_node, grad);
    return v;
  }

  LossBreakdown breakdown() const {
    LossBreakdown b;
    auto rd = [this](NodeId n) { return n == kNoNode ? 0.0 : tape_.value(n); };
    b.interior = rd(interior_node);
    b.initial = rd(initial_node);
    b.initial_dt = rd(initial_dt_node);
    b.boundary = rd(boundary_node);
    b.total = rd(total_node);
    for (NodeId n : interior_energy_nodes) b.element_energies.push_back(tape_.value(n));
    return b;
  }

 private:
  Tape tape_;
};

namespace detail {

inline NodeId add_chain(Tape& t, const std::vector<NodeId>& terms) {
  if (terms.empty()) return t.constant(0.0);
  NodeId acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = t.add(acc, terms[i]);
  return acc;
}

/// Forward a run of full-dim points through the model, honoring set grouping.
/// Points must arrive pre-grouped (consecutive set_size points per group).
inline std::vector<Jet> forward_points(const Model& model, Tape& t,
                                       std::span<const double> coords, int dim,
                                       bool with_derivs) {
  const size_t n = coords.size() / static_cast<size_t>(dim);
  const size_t g = static_cast<size_t>(model.set_size());
  if (n % g != 0)
    throw UsageError("point count is not a multiple of the model set size");
  std::vector<Jet> out;
  out.reserve(n);
  for (size_t start = 0; start < n; start += g) {
    auto jets = model.forward_group(
        t,
        coords.subspan(start * static_cast<size_t>(dim), g * static_cast<size_t>(dim)),
        with_derivs);
    for (auto& j : jets) out.push_back(std::move(j));
  }
  return out;
}

/// Residuals of one loss region pooled across faces, with pooled element ids.
struct RegionPool {
  std::vector<NodeId> residuals;
  std::vector<int32_t> element;
  std::vector<double> measures;  // per pooled element
};

inline NodeId reduce_mean_sq(Tape& t, const RegionPool& pool) {
  std::vector<NodeId> sq;
  sq.reserve(pool.residuals.size());
  for (NodeId r : pool.residuals) sq.push_back(t.square(r));
  return t.scale(add_chain(t, sq), 1.0 / static_cast<double>(sq.size()));
}

/// Localized-energy reduction: per element E_k the quadrature
/// (|E_k| / m_k) sum r^2, then the average of energies over the region's K.
inline NodeId reduce_set_energy(Tape& t, const RegionPool& pool,
                                std::vector<NodeId>* energies_out) {
  std::vector<std::vector<NodeId>> per_el(pool.measures.size());
  for (size_t i = 0; i < pool.residuals.size(); ++i)
    per_el[static_cast<size_t>(pool.element[i])].push_back(t.square(pool.residuals[i]));
  std::vector<NodeId> energies;
  energies.reserve(per_el.size());
  for (size_t k = 0; k < per_el.size(); ++k) {
    if (per_el[k].empty())
      throw UsageError("set-energy loss requires points in every element");
    double w = pool.measures[k] / static_cast<double>(per_el[k].size());
    energies.push_back(t.scale(add_chain(t, per_el[k]), w));
  }
  if (energies_out) *energies_out = energies;
  return t.scale(add_chain(t, energies), 1.0 / static_cast<double>(energies.size()));
}

}  // namespace detail

/// Localized residual energy of one element (Eq.-3 quadrature): requires all
/// points to lie inside the element's bounds.
inline double localized_energy(const Model& model, const ParamVector& theta,
                               const PdeProblem& prob, const Element& el,
                               std::span<const double> coords) {
  const size_t d = static_cast<size_t>(prob.dim);
  const size_t n = coords.size() / d;
  if (n == 0) return 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t a = 0; a < d; ++a) {
      double c = coords[i * d + a];
      if (c < el.lo[a] || c > el.hi[a])
        throw UsageError("localized_energy: point outside element");
    }
  Tape t(theta);
  auto jets = detail::forward_points(model, t, coords, prob.dim, true);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double r = t.value(prob.residual(t, jets[i], coords.subspan(i * d, d)));
    acc += r * r;
  }
  return el.measure / static_cast<double>(n) * acc;
}

/// Record the full physics loss over fixed batches. mode selects the Eq.-2
/// mean-of-squares or the Eq.-4 localized-energy reduction; both share the
/// same per-point residual construction. Reduction order is ascending element
/// index throughout.
inline LossGraph build_loss(const Model& model, const PdeProblem& prob,
                            const ProblemBatches& batches, const ParamVector& theta,
                            LossMode mode, const Weights& w = {}) {
  if (model.set_size() > 1) {
    if (batches.interior.alloc.empty())
      throw UsageError("set model requires stratified (element-aware) batches");
    for (int mk : batches.interior.alloc)
      if (mk != model.set_size())
        throw UsageError("set model requires m_k == set size in every element");
    for (const FaceBatch& fb : batches.faces)
      for (int mk : fb.points.alloc)
        if (mk != model.set_size())
          throw UsageError("set model requires m_k == set size on every face element");
  }
  if (batches.interior.size() == 0) throw ConfigError("interior batch is empty");

  Tape t(theta);
  const int dim = prob.dim;
  const size_t d = static_cast<size_t>(dim);

  detail::RegionPool interior, initial, initial_dt, boundary;
  for (int k = 0; k < batches.interior_partition.size(); ++k)
    interior.measures.push_back(batches.interior_partition.element(k).measure);
  interior.element.assign(batches.interior.element.begin(), batches.interior.element.end());
  {
    t.enter_scope("interior");
    auto jets = detail::forward_points(model, t, batches.interior.coords, dim, true);
    for (size_t i = 0; i < jets.size(); ++i)
      interior.residuals.push_back(prob.residual(t, jets[i], batches.interior.point(i)));
  }

  for (const FaceBatch& fb : batches.faces) {
    const Constraint& con = prob.constraints[fb.constraint];
    detail::RegionPool* pool = con.tag == RegionTag::Initial ? &initial
                               : con.tag == RegionTag::InitialDt ? &initial_dt
                                                                 : &boundary;
    t.enter_scope(std::string(region_name(con.tag)) + "_face");
    const bool needs_derivs = con.kind == ConstraintKind::Derivative;
    auto jets = detail::forward_points(model, t, fb.lifted, dim, needs_derivs);
    std::vector<Jet> partner_jets;
    if (con.kind == ConstraintKind::PeriodicPair)
      partner_jets = detail::forward_points(model, t, fb.partner, dim, false);
    const int el_base = static_cast<int>(pool->measures.size());
    for (int k = 0; k < fb.partition.size(); ++k)
      pool->measures.push_back(fb.partition.element(k).measure);
    for (size_t i = 0; i < jets.size(); ++i) {
      std::span<const double> x(fb.lifted.data() + i * d, d);
      NodeId r = kNoNode;
      switch (con.kind) {
        case ConstraintKind::Value:
          r = t.add_imm(jets[i].val, -con.target(x));
          break;
        case ConstraintKind::Derivative:
          r = t.add_imm(jets[i].d1[static_cast<size_t>(con.deriv_axis)], -con.target(x));
          break;
        case ConstraintKind::PeriodicPair:
          r = t.sub(jets[i].val, partner_jets[i].val);
          break;
      }
      pool->residuals.push_back(r);
      pool->element.push_back(el_base + fb.points.element[i]);
    }
  }
  t.exit_scope();

  const bool set_mode = mode == LossMode::SetEnergy;
  std::vector<NodeId> interior_energies;
  NodeId interior_node =
      set_mode ? detail::reduce_set_energy(t, interior, &interior_energies)
               : detail::reduce_mean_sq(t, interior);
  auto reduce_pool = [&t, set_mode](const detail::RegionPool& pool) -> NodeId {
    if (pool.residuals.empty()) return kNoNode;
    return set_mode ? detail::reduce_set_energy(t, pool, nullptr)
                    : detail::reduce_mean_sq(t, pool);
  };
  NodeId initial_node = reduce_pool(initial);
  NodeId initial_dt_node = reduce_pool(initial_dt);
  NodeId boundary_node = reduce_pool(boundary);

  NodeId total = t.scale(interior_node, w.interior);
  if (initial_node != kNoNode) total = t.add(total, t.scale(initial_node, w.initial));
  if (initial_dt_node != kNoNode)
    total = t.add(total, t.scale(initial_dt_node, w.initial_dt));
  if (boundary_node != kNoNode) total = t.add(total, t.scale(boundary_node, w.boundary));

  LossGraph g(std::move(t));
  g.total_node = total;
  g.interior_node = interior_node;
  g.initial_node = initial_node;
  g.initial_dt_node = initial_dt_node;
  g.boundary_node = boundary_node;
  g.interior_energy_nodes = std::move(interior_energies);
  return g;
}

}  // namespace pinnlab
