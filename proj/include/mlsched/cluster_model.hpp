#pragma once

// k-means over abort vectors and nearest-centroid lookup for incoming
// transactions.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mlsched/feature.hpp"
#include "mlsched/rng.hpp"

namespace mlsched {

struct CentroidSet {
  std::uint32_t k_bits = 0;
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> counts;
  std::vector<double> sq_norms;  // sum of c_i^2 per centroid
  double wcss = 0.0;

  std::size_t size() const { return centroids.size(); }
  // Recomputes sq_norms from centroids.
  void refresh_norms();
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  // Independent k-means++ restarts; the lowest-WCSS fit wins.
  std::size_t restarts = 10;
};

// WCSS after seeding and after each Lloyd iteration of every restart.
struct KMeansTrace {
  std::vector<std::vector<double>> wcss;
};

// Throws DataError("no abort data") on empty input.
CentroidSet kmeans_fit(const std::vector<AbortVector>& points, std::size_t k, Rng& rng,
                       const KMeansOptions& options = {}, KMeansTrace* trace = nullptr);

double euclidean_distance(std::span<const double> v, std::span<const double> w);

// Squared distance from a binary vector to a centroid, O(set bits).
double sq_distance(const SparseBits& v, const CentroidSet& cs, std::size_t c);

// argmin distance; ties go to the lowest index.
std::size_t nearest_centroid(const SparseBits& v, const CentroidSet& cs);
std::size_t nearest_centroid(std::span<const double> v, const CentroidSet& cs);

// Sum over points of the squared distance to the assigned centroid.
double wcss(const std::vector<AbortVector>& points, const CentroidSet& cs,
            const std::vector<std::size_t>& assignment);

void save_centroids(std::ostream& out, const CentroidSet& cs);
CentroidSet load_centroids(std::istream& in);

}  // namespace mlsched
