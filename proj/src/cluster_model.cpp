#include "mlsched/cluster_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>

#include "mlsched/errors.hpp"

namespace mlsched {

namespace {

constexpr std::string_view kMagic = "mlsched-centroids";
constexpr int kFormatVersion = 1;

// Identical abort vectors are common (every abort on one hot row produces
// the same vector), so the fit runs over distinct points with multiplicity.
struct WeightedPoint {
  const SparseBits* bits;
  double weight;
};

double point_sq_distance(const SparseBits& v, const std::vector<double>& c, double sq_norm) {
  double dot = 0.0;
  for (auto i : v.ones) dot += c[i];
  return std::max(0.0, sq_norm + static_cast<double>(v.ones.size()) - 2.0 * dot);
}

double norm2(const std::vector<double>& c) {
  double s = 0.0;
  for (double x : c) s += x * x;
  return s;
}

std::vector<double> as_dense(const SparseBits& v) {
  std::vector<double> c(v.size, 0.0);
  for (auto i : v.ones) c[i] = 1.0;
  return c;
}

std::size_t pick_weighted(const std::vector<double>& w, double total, Rng& rng) {
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0) return i;
  }
  return 0;
}

struct Fit {
  std::vector<std::vector<double>> centroids;
  std::vector<double> norms;
  std::vector<std::size_t> assignment;
  double wcss = 0.0;
};

double assign_all(const std::vector<WeightedPoint>& pts, const std::vector<std::vector<double>>& c,
                  const std::vector<double>& norms, std::vector<std::size_t>& assignment,
                  std::vector<double>* dist = nullptr) {
  double total = 0.0;
  for (std::size_t p = 0; p < pts.size(); ++p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double d = point_sq_distance(*pts[p].bits, c[j], norms[j]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    assignment[p] = best;
    if (dist) (*dist)[p] = best_d;
    total += pts[p].weight * best_d;
  }
  return total;
}

void seed_plus_plus(const std::vector<WeightedPoint>& pts, std::size_t k, Rng& rng, Fit& fit) {
  std::vector<double> weights(pts.size());
  double total_weight = 0.0;
  for (std::size_t p = 0; p < pts.size(); ++p) total_weight += weights[p] = pts[p].weight;
  std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
  std::size_t first = pick_weighted(weights, total_weight, rng);
  fit.centroids.push_back(as_dense(*pts[first].bits));
  fit.norms.push_back(norm2(fit.centroids.back()));
  while (fit.centroids.size() < k) {
    const auto& c = fit.centroids.back();
    double total = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      d2[p] = std::min(d2[p], point_sq_distance(*pts[p].bits, c, fit.norms.back()));
      weights[p] = pts[p].weight * d2[p];
      total += weights[p];
    }
    std::size_t next;
    if (total > 0.0) {
      next = pick_weighted(weights, total, rng);
    } else {
      for (std::size_t p = 0; p < pts.size(); ++p) weights[p] = pts[p].weight;
      next = pick_weighted(weights, total_weight, rng);
    }
    fit.centroids.push_back(as_dense(*pts[next].bits));
    fit.norms.push_back(norm2(fit.centroids.back()));
  }
}

// Sets each non-empty centroid to the mean of its points; returns the masses.
std::vector<double> recenter(const std::vector<WeightedPoint>& pts, std::uint32_t k_bits, Fit& fit) {
  const std::size_t k = fit.centroids.size();
  std::vector<std::vector<double>> sums(k, std::vector<double>(k_bits, 0.0));
  std::vector<double> mass(k, 0.0);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    const auto j = fit.assignment[p];
    mass[j] += pts[p].weight;
    for (auto i : pts[p].bits->ones) sums[j][i] += pts[p].weight;
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (mass[j] > 0.0) {
      for (auto& x : sums[j]) x /= mass[j];
      fit.centroids[j] = std::move(sums[j]);
      fit.norms[j] = norm2(fit.centroids[j]);
    }
  }
  return mass;
}

// Lloyd iterations from the current centroids until the assignment repeats.
void lloyd(const std::vector<WeightedPoint>& pts, std::uint32_t k_bits, std::size_t max_iters,
           Fit& fit, std::vector<double>* trace) {
  const std::size_t k = fit.centroids.size();
  fit.assignment.assign(pts.size(), 0);
  std::vector<std::size_t> previous;
  for (std::size_t iter = 0;; ++iter) {
    fit.wcss = assign_all(pts, fit.centroids, fit.norms, fit.assignment);
    if (trace) trace->push_back(fit.wcss);
    if (fit.assignment == previous || iter == max_iters) break;
    previous = fit.assignment;
    std::vector<double> mass = recenter(pts, k_bits, fit);
    for (std::size_t j = 0; j < k; ++j) {
      if (mass[j] > 0.0) continue;
      // Empty cluster: move it onto the point farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t p = 0; p < pts.size(); ++p) {
        const auto a = fit.assignment[p];
        const double d = point_sq_distance(*pts[p].bits, fit.centroids[a], fit.norms[a]);
        if (d > far_d) {
          far_d = d;
          far = p;
        }
      }
      fit.centroids[j] = as_dense(*pts[far].bits);
      fit.norms[j] = norm2(fit.centroids[j]);
      fit.assignment[far] = j;
      mass[j] = pts[far].weight;
    }
  }
}

// Hartigan single-point moves: relocate a point whenever that lowers the
// partition's WCSS, with centroids kept at the cluster means. Returns
// whether anything moved.
bool hartigan(const std::vector<WeightedPoint>& pts, std::uint32_t k_bits, std::size_t max_passes,
              Fit& fit) {
  const std::size_t k = fit.centroids.size();
  if (k < 2) return false;
  std::vector<double> mass = recenter(pts, k_bits, fit);
  bool any = false;
  for (std::size_t pass = 0; pass < max_passes; ++pass) {
    bool moved = false;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const auto a = fit.assignment[p];
      const double w = pts[p].weight;
      if (mass[a] - w <= 0.0) continue;
      const auto& x = *pts[p].bits;
      const double gain =
          w * mass[a] / (mass[a] - w) * point_sq_distance(x, fit.centroids[a], fit.norms[a]);
      std::size_t to = a;
      double cost = gain - 1e-9 * (1.0 + gain);
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double c = mass[b] > 0.0 ? w * mass[b] / (mass[b] + w) *
                                              point_sq_distance(x, fit.centroids[b], fit.norms[b])
                                        : 0.0;
        if (c < cost) {
          cost = c;
          to = b;
        }
      }
      if (to == a) continue;
      auto& ca = fit.centroids[a];
      auto& cb = fit.centroids[to];
      for (auto& v : ca) v *= mass[a] / (mass[a] - w);
      for (auto i : x.ones) ca[i] -= w / (mass[a] - w);
      for (auto& v : cb) v *= mass[to] / (mass[to] + w);
      for (auto i : x.ones) cb[i] += w / (mass[to] + w);
      for (auto* c : {&ca, &cb}) {
        for (auto& v : *c) v = std::clamp(v, 0.0, 1.0);
      }
      fit.norms[a] = norm2(ca);
      fit.norms[to] = norm2(cb);
      mass[a] -= w;
      mass[to] += w;
      fit.assignment[p] = to;
      moved = true;
    }
    if (!moved) break;
    any = true;
    mass = recenter(pts, k_bits, fit);
  }
  return any;
}

Fit fit_once(const std::vector<WeightedPoint>& pts, std::size_t k, std::uint32_t k_bits, Rng& rng,
             std::size_t max_iters, std::vector<double>* trace) {
  Fit fit;
  seed_plus_plus(pts, k, rng, fit);
  for (std::size_t round = 0; round < max_iters; ++round) {
    lloyd(pts, k_bits, max_iters, fit, trace);
    if (!hartigan(pts, k_bits, max_iters, fit)) break;
  }
  return fit;
}

}  // namespace

void CentroidSet::refresh_norms() {
  sq_norms.clear();
  for (const auto& c : centroids) sq_norms.push_back(norm2(c));
}

CentroidSet kmeans_fit(const std::vector<AbortVector>& points, std::size_t k, Rng& rng,
                       const KMeansOptions& options, KMeansTrace* trace) {
  if (points.empty()) throw DataError("no abort data");
  if (k == 0) throw ConfigError("k-means needs k >= 1");
  const std::uint32_t k_bits = points.front().size;
  // Distinct points in bit-pattern order, so input order cannot matter.
  std::map<std::vector<std::uint32_t>, WeightedPoint> index;
  for (const auto& v : points) {
    if (v.size != k_bits) throw InvariantError("abort vectors of different lengths");
    auto [it, fresh] = index.try_emplace(v.ones, WeightedPoint{&v, 0.0});
    it->second.weight += 1.0;
  }
  std::vector<WeightedPoint> pts;
  pts.reserve(index.size());
  for (const auto& [bits, p] : index) pts.push_back(p);

  Fit best;
  best.wcss = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<double>* t = nullptr;
    if (trace) t = &trace->wcss.emplace_back();
    Fit f = fit_once(pts, k, k_bits, rng, options.max_iters, t);
    if (f.wcss < best.wcss) best = std::move(f);
  }

  CentroidSet cs;
  cs.k_bits = k_bits;
  cs.centroids = std::move(best.centroids);
  cs.sq_norms = std::move(best.norms);
  cs.wcss = best.wcss;
  cs.counts.assign(k, 0);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    cs.counts[best.assignment[p]] += static_cast<std::size_t>(pts[p].weight);
  }
  return cs;
}

double euclidean_distance(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size()) throw InvariantError("euclidean_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - w[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double sq_distance(const SparseBits& v, const CentroidSet& cs, std::size_t c) {
  if (v.size != cs.k_bits) throw InvariantError("feature vector length does not match centroids");
  return point_sq_distance(v, cs.centroids[c], cs.sq_norms[c]);
}

std::size_t nearest_centroid(const SparseBits& v, const CentroidSet& cs) {
  if (cs.centroids.empty()) throw InvariantError("empty centroid set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const double d = sq_distance(v, cs, j);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

std::size_t nearest_centroid(std::span<const double> v, const CentroidSet& cs) {
  if (cs.centroids.empty()) throw InvariantError("empty centroid set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const double d = euclidean_distance(v, cs.centroids[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

double wcss(const std::vector<AbortVector>& points, const CentroidSet& cs,
            const std::vector<std::size_t>& assignment) {
  if (assignment.size() != points.size()) throw InvariantError("assignment length mismatch");
  double total = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) total += sq_distance(points[p], cs, assignment[p]);
  return total;
}

void save_centroids(std::ostream& out, const CentroidSet& cs) {
  const auto prec = out.precision(std::numeric_limits<double>::max_digits10);
  out << kMagic << " v" << kFormatVersion << '\n';
  out << "k_bits " << cs.k_bits << '\n';
  out << "k " << cs.size() << '\n';
  for (std::size_t j = 0; j < cs.size(); ++j) {
    std::size_t nnz = 0;
    for (double x : cs.centroids[j]) nnz += x != 0.0;
    const std::size_t count = j < cs.counts.size() ? cs.counts[j] : 0;
    out << "centroid " << j << ' ' << count << ' ' << nnz << '\n';
    for (std::size_t i = 0; i < cs.centroids[j].size(); ++i) {
      if (cs.centroids[j][i] != 0.0) out << i << ' ' << cs.centroids[j][i] << '\n';
    }
  }
  out << "end\n";
  out.precision(prec);
}

CentroidSet load_centroids(std::istream& in) {
  std::string magic;
  std::string version;
  if (!(in >> magic >> version) || magic != kMagic) throw FormatError("not a centroid file");
  if (version != "v" + std::to_string(kFormatVersion)) {
    throw FormatError("unsupported centroid version '" + version + "'");
  }
  std::string tag;
  CentroidSet cs;
  std::size_t k = 0;
  if (!(in >> tag >> cs.k_bits) || tag != "k_bits" || cs.k_bits == 0) {
    throw FormatError("centroid file: bad k_bits");
  }
  if (!(in >> tag >> k) || tag != "k" || k == 0) throw FormatError("centroid file: bad k");
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t idx = 0;
    std::size_t count = 0;
    std::size_t nnz = 0;
    if (!(in >> tag >> idx >> count >> nnz) || tag != "centroid" || idx != j) {
      throw FormatError("centroid file truncated");
    }
    std::vector<double> c(cs.k_bits, 0.0);
    for (std::size_t n = 0; n < nnz; ++n) {
      std::size_t i = 0;
      double x = 0.0;
      if (!(in >> i >> x)) throw FormatError("centroid file truncated");
      if (i >= cs.k_bits || !(x >= 0.0 && x <= 1.0)) throw FormatError("centroid entry out of range");
      c[i] = x;
    }
    cs.centroids.push_back(std::move(c));
    cs.counts.push_back(count);
  }
  if (!(in >> tag) || tag != "end") throw FormatError("centroid file truncated: missing end marker");
  cs.refresh_norms();
  return cs;
}

}  // namespace mlsched
