#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/errors.hpp"
#include "pinnlab/rng.hpp"

namespace pinnlab {

enum class RegionTag : uint8_t { Interior, Initial, InitialDt, Boundary };

inline const char* region_name(RegionTag t) {
  switch (t) {
    case RegionTag::Interior: return "interior";
    case RegionTag::Initial: return "initial";
    case RegionTag::InitialDt: return "initial_dt";
    case RegionTag::Boundary: return "boundary";
  }
  return "?";
}

inline RegionTag region_from_name(const std::string& s) {
  if (s == "interior") return RegionTag::Interior;
  if (s == "initial") return RegionTag::Initial;
  if (s == "initial_dt") return RegionTag::InitialDt;
  if (s == "boundary") return RegionTag::Boundary;
  throw ConfigError("unknown region tag: " + s);
}

/// Axis-aligned hyper-rectangle.
struct Domain {
  std::vector<double> lo, hi;

  Domain() = default;
  Domain(std::vector<double> l, std::vector<double> h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size() || lo.empty())
      throw ConfigError("domain bounds dimension mismatch");
    for (size_t a = 0; a < lo.size(); ++a)
      if (!(lo[a] < hi[a])) throw ConfigError("domain requires lo < hi on every axis");
  }

  int dim() const { return static_cast<int>(lo.size()); }
  double measure() const {
    double m = 1.0;
    for (size_t a = 0; a < lo.size(); ++a) m *= hi[a] - lo[a];
    return m;
  }
  bool contains(std::span<const double> x) const {
    for (size_t a = 0; a < lo.size(); ++a)
      if (x[a] < lo[a] || x[a] > hi[a]) return false;
    return true;
  }
};

struct Element {
  int index = 0;
  std::vector<double> lo, hi;
  double measure = 0.0;
};

/// Disjoint axis-uniform grid of elements covering a Domain.
class Partition {
 public:
  Partition() = default;
  Partition(Domain domain, std::vector<int> cells_per_axis)
      : domain_(std::move(domain)), grid_(std::move(cells_per_axis)) {
    if (static_cast<int>(grid_.size()) != domain_.dim())
      throw ConfigError("cells_per_axis dimension mismatch");
    for (int c : grid_)
      if (c < 1) throw ConfigError("cells_per_axis entries must be >= 1");
    h_.resize(grid_.size());
    for (size_t a = 0; a < grid_.size(); ++a)
      h_[a] = (domain_.hi[a] - domain_.lo[a]) / grid_[a];
    int k = 1;
    for (int c : grid_) k *= c;
    elements_.reserve(static_cast<size_t>(k));
    std::vector<int> idx(grid_.size(), 0);
    for (int e = 0; e < k; ++e) {
      Element el;
      el.index = e;
      el.measure = 1.0;
      el.lo.resize(grid_.size());
      el.hi.resize(grid_.size());
      for (size_t a = 0; a < grid_.size(); ++a) {
        el.lo[a] = domain_.lo[a] + idx[a] * h_[a];
        el.hi[a] = (idx[a] + 1 == grid_[a]) ? domain_.hi[a]
                                            : domain_.lo[a] + (idx[a] + 1) * h_[a];
        el.measure *= el.hi[a] - el.lo[a];
      }
      elements_.push_back(std::move(el));
      for (size_t a = 0; a < grid_.size(); ++a) {  // row-major increment, axis 0 fastest
        if (++idx[a] < grid_[a]) break;
        idx[a] = 0;
      }
    }
  }

  const Domain& domain() const { return domain_; }
  int dim() const { return domain_.dim(); }
  int size() const { return static_cast<int>(elements_.size()); }
  const std::vector<Element>& elements() const { return elements_; }
  const Element& element(int k) const { return elements_[static_cast<size_t>(k)]; }
  const std::vector<int>& grid() const { return grid_; }

  /// Element index containing x. Points exactly on a shared face are
  /// assigned to the lower-index element.
  int locate(std::span<const double> x) const {
    int stride = 1, e = 0;
    for (size_t a = 0; a < grid_.size(); ++a) {
      double u = (x[a] - domain_.lo[a]) / h_[a];
      int i = static_cast<int>(std::floor(u));
      if (i >= grid_[a]) i = grid_[a] - 1;
      if (i < 0) i = 0;
      // face-coincident: lower element wins
      if (i > 0 && x[a] == domain_.lo[a] + i * h_[a]) --i;
      e += stride * i;
      stride *= grid_[a];
    }
    return e;
  }

 private:
  Domain domain_;
  std::vector<int> grid_;
  std::vector<double> h_;
  std::vector<Element> elements_;
};

inline Partition partition_uniform(const Domain& domain, std::vector<int> cells_per_axis) {
  return Partition(domain, std::move(cells_per_axis));
}

/// Collocation points with element membership and region tags.
/// Coordinates are stored flat, point-major.
struct PointBatch {
  int dim = 0;
  std::vector<double> coords;
  std::vector<int32_t> element;
  std::vector<RegionTag> region;
  std::vector<int> alloc;  // m_k per element for stratified batches

  size_t size() const { return element.size(); }
  std::span<const double> point(size_t i) const {
    return {coords.data() + i * static_cast<size_t>(dim), static_cast<size_t>(dim)};
  }
  void push(std::span<const double> x, int el, RegionTag tag) {
    coords.insert(coords.end(), x.begin(), x.end());
    element.push_back(el);
    region.push_back(tag);
  }
};

namespace detail {
inline void sample_in_box(Rng& rng, std::span<const double> lo,
                          std::span<const double> hi, std::span<double> out) {
  for (size_t a = 0; a < out.size(); ++a) out[a] = rng.uniform(lo[a], hi[a]);
}
}  // namespace detail

/// Stratified sampling: m_k i.i.d. uniform points inside each element,
/// with an explicit per-element allocation table.
inline PointBatch sample_eas(const Partition& p, std::span<const int> m_k, Rng& rng,
                             RegionTag tag = RegionTag::Interior) {
  if (static_cast<int>(m_k.size()) != p.size())
    throw ConfigError("allocation table size != element count");
  PointBatch b;
  b.dim = p.dim();
  b.alloc.assign(m_k.begin(), m_k.end());
  std::vector<double> x(static_cast<size_t>(b.dim));
  for (int k = 0; k < p.size(); ++k) {
    if (m_k[k] < 0) throw ConfigError("negative allocation");
    Rng er = rng.stream(static_cast<uint64_t>(k));
    const Element& el = p.element(k);
    for (int i = 0; i < m_k[k]; ++i) {
      detail::sample_in_box(er, el.lo, el.hi, x);
      b.push(x, k, tag);
    }
  }
  return b;
}

/// Equal per-element allocation (the quasi-uniform grid case).
inline PointBatch sample_eas(const Partition& p, int m_per_element, Rng& rng,
                             RegionTag tag = RegionTag::Interior) {
  std::vector<int> m(static_cast<size_t>(p.size()), m_per_element);
  return sample_eas(p, m, rng, tag);
}

/// Proportional allocation m_k = M |E_k| / |Omega|. Non-integer shares are
/// an error unless largest-remainder rounding is explicitly enabled.
inline PointBatch sample_eas_total(const Partition& p, int total, Rng& rng,
                                   bool largest_remainder = false,
                                   RegionTag tag = RegionTag::Interior) {
  const double omega = p.domain().measure();
  std::vector<int> m(static_cast<size_t>(p.size()));
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int k = 0; k < p.size(); ++k) {
    double share = total * p.element(k).measure / omega;
    double fl = std::floor(share + 1e-9);
    if (!largest_remainder && std::abs(share - std::round(share)) > 1e-9)
      throw ConfigError("proportional allocation is not integral; enable largest-remainder rounding");
    m[k] = static_cast<int>(largest_remainder ? fl : std::round(share));
    assigned += m[k];
    rem.push_back({share - fl, k});
  }
  if (largest_remainder) {
    std::sort(rem.begin(), rem.end(), [](auto& a, auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int i = 0; assigned < total; ++i, ++assigned) ++m[static_cast<size_t>(rem[i % rem.size()].second)];
  }
  return sample_eas(p, m, rng, tag);
}

/// Global uniform sampling over the whole domain. When a partition is
/// supplied, element membership is filled in by locate().
inline PointBatch sample_gus(const Domain& d, int total, Rng& rng,
                             const Partition* p = nullptr,
                             RegionTag tag = RegionTag::Interior) {
  PointBatch b;
  b.dim = d.dim();
  std::vector<double> x(static_cast<size_t>(b.dim));
  for (int i = 0; i < total; ++i) {
    detail::sample_in_box(rng, d.lo, d.hi, x);
    b.push(x, p ? p->locate(x) : -1, tag);
  }
  return b;
}

/// Latin hypercube design: every axis-projection occupies each of the M
/// equal bins exactly once.
inline PointBatch sample_lhs(const Domain& d, int total, Rng& rng,
                             const Partition* p = nullptr,
                             RegionTag tag = RegionTag::Interior) {
  PointBatch b;
  b.dim = d.dim();
  if (total == 0) return b;
  std::vector<std::vector<int>> perms(static_cast<size_t>(b.dim));
  for (int a = 0; a < b.dim; ++a) {
    perms[a].resize(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) perms[a][static_cast<size_t>(i)] = i;
    rng.shuffle(std::span<int>(perms[a]));
  }
  std::vector<double> x(static_cast<size_t>(b.dim));
  for (int i = 0; i < total; ++i) {
    for (int a = 0; a < b.dim; ++a) {
      double u = (perms[a][static_cast<size_t>(i)] + rng.uniform()) / total;
      x[static_cast<size_t>(a)] = d.lo[a] + (d.hi[a] - d.lo[a]) * u;
    }
    b.push(x, p ? p->locate(x) : -1, tag);
  }
  return b;
}

struct RadOptions {
  int pool_factor = 10;
  double exponent = 2.0;
  double floor = 1e-6;
};

/// Residual-proportional resampling: draw a candidate pool of
/// pool_factor * M global uniform points, then select M of them without
/// replacement with probability proportional to |residual|^exponent + floor.
/// An all-zero residual field falls back to plain global uniform sampling.
inline PointBatch sample_rad(const Domain& d, int total,
                             const std::function<double(std::span<const double>)>& residual,
                             Rng& rng, const RadOptions& opt = {},
                             const Partition* p = nullptr,
                             RegionTag tag = RegionTag::Interior) {
  if (total == 0) return PointBatch{d.dim(), {}, {}, {}, {}};
  const int pool_n = opt.pool_factor * total;
  PointBatch pool = sample_gus(d, pool_n, rng, nullptr, tag);
  std::vector<double> w(static_cast<size_t>(pool_n));
  double wmax = 0.0;
  for (int i = 0; i < pool_n; ++i) {
    double r = std::abs(residual(pool.point(static_cast<size_t>(i))));
    w[static_cast<size_t>(i)] = std::pow(r, opt.exponent);
    wmax = std::max(wmax, w[static_cast<size_t>(i)]);
  }
  if (wmax == 0.0) return sample_gus(d, total, rng, p, tag);
  // Efraimidis-Spirakis keys: smallest -log(u)/w first
  std::vector<std::pair<double, int>> keys(static_cast<size_t>(pool_n));
  for (int i = 0; i < pool_n; ++i) {
    double u = rng.uniform();
    u = u > 0.0 ? u : 0x1.0p-53;
    keys[static_cast<size_t>(i)] = {-std::log(u) / (w[static_cast<size_t>(i)] + opt.floor), i};
  }
  std::nth_element(keys.begin(), keys.begin() + total, keys.end());
  std::sort(keys.begin(), keys.begin() + total,
            [](auto& a, auto& b) { return a.second < b.second; });
  PointBatch b;
  b.dim = d.dim();
  for (int i = 0; i < total; ++i) {
    auto x = pool.point(static_cast<size_t>(keys[static_cast<size_t>(i)].second));
    b.push(x, p ? p->locate(x) : -1, tag);
  }
  return b;
}

// ---- CSV export/import: header x0,..,x{d-1},element,region ----

inline void write_batch_csv(FILE* f, const PointBatch& b) {
  for (int a = 0; a < b.dim; ++a) std::fprintf(f, "x%d,", a);
  std::fprintf(f, "element,region\n");
  for (size_t i = 0; i < b.size(); ++i) {
    auto x = b.point(i);
    for (int a = 0; a < b.dim; ++a) std::fprintf(f, "%.17g,", x[static_cast<size_t>(a)]);
    std::fprintf(f, "%d,%s\n", b.element[i], region_name(b.region[i]));
  }
}

inline void save_batch_csv(const std::string& path, const PointBatch& b) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("cannot open for writing: " + path);
  write_batch_csv(f, b);
  std::fclose(f);
}

inline PointBatch load_batch_csv(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ConfigError("cannot open: " + path);
  PointBatch b;
  char line[4096];
  if (!std::fgets(line, sizeof line, f)) {
    std::fclose(f);
    throw ConfigError("empty batch csv: " + path);
  }
  int dim = 0;
  for (char* s = line; (s = std::strstr(s, "x")) != nullptr; ++s)
    if (s == line || s[-1] == ',') ++dim;
  b.dim = dim;
  std::vector<double> x(static_cast<size_t>(dim));
  while (std::fgets(line, sizeof line, f)) {
    char* s = line;
    for (int a = 0; a < dim; ++a) {
      x[static_cast<size_t>(a)] = std::strtod(s, &s);
      if (*s == ',') ++s;
    }
    long el = std::strtol(s, &s, 10);
    if (*s == ',') ++s;
    std::string tag(s);
    while (!tag.empty() && (tag.back() == '\n' || tag.back() == '\r')) tag.pop_back();
    b.push(x, static_cast<int>(el), region_from_name(tag));
  }
  std::fclose(f);
  return b;
}

}  // namespace pinnlab
