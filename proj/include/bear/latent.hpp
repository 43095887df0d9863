#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bear::latent {

/// N latent vectors of dimension m with one identifier per row. Carries no
/// pixel data.
class EmbeddingSet {
public:
    EmbeddingSet() = default;
    EmbeddingSet(std::size_t dim, std::vector<std::string> ids, std::vector<double> values);

    void add(std::string id, std::span<const double> row);

    std::size_t rows() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const EmbeddingSet&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<double> values_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

struct KMeansOptions {
    std::size_t k = 20;
    std::uint64_t seed = 1;
    std::size_t max_iter = 300;
    std::size_t restarts = 5;
};

struct KMeansResult {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> centroids;         // k x dim, row-major
    std::vector<std::size_t> assignments;  // one cluster index per row
    double inertia = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;
    /// Objective after each centroid update of the winning restart.
    std::vector<double> trace;

    std::span<const double> centroid(std::size_t j) const { return {centroids.data() + j * dim, dim}; }
};

/// Lloyd iterations from k-means++ seeding; best of `restarts` by inertia.
/// Points go to the nearest centroid, ties to the lowest index. A cluster
/// that empties keeps its previous centroid.
KMeansResult kmeans(const EmbeddingSet& e, const KMeansOptions& options);

/// sum over rows of ||row - centroid[assignment]||^2.
double inertia(const EmbeddingSet& e, const KMeansResult& result);

struct ElbowCurve {
    std::vector<std::pair<std::size_t, double>> points;  // (k, inertia)
    std::size_t selected_k = 0;
    /// False when every point lies on the chord between the endpoints.
    bool has_elbow = false;
    /// k values whose inertia exceeded the previous k's (restart failures).
    std::vector<std::size_t> non_monotone;
};

/// Index of the point farthest from the chord joining the first and last
/// points, measured with both axes rescaled to [0, 1].
ElbowCurve select_elbow(std::vector<std::pair<std::size_t, double>> points);

/// Runs kmeans for every k in [k_min, k_max] with a shared seed.
ElbowCurve elbow(const EmbeddingSet& e, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                 std::size_t restarts = 5);

/// Euclidean norm of every row.
std::vector<double> norms(const EmbeddingSet& e);

struct Projection {
    std::size_t rank = 0;
    std::size_t dim = 0;
    std::vector<double> mean;         // dim
    std::vector<double> components;   // rank x dim, unit norm, mutually orthogonal
    std::vector<double> eigenvalues;  // covariance eigenvalue per component
    std::vector<double> scores;       // rows x rank

    std::span<const double> component(std::size_t j) const { return {components.data() + j * dim, dim}; }
    std::span<const double> score(std::size_t i) const { return {scores.data() + i * rank, rank}; }
};

struct PowerIterationOptions {
    double tolerance = 1e-9;
    std::size_t max_iter = 1000;
};

/// Top-`rank` principal directions of the centered rows by power iteration
/// with deflation. Covariance is normalized by N.
Projection project(const EmbeddingSet& e, std::size_t rank, const PowerIterationOptions& options = {});
inline Projection project2d(const EmbeddingSet& e) { return project(e, 2); }

/// Rows replaced by their PCA scores (same ids), for clustering in a reduced space.
EmbeddingSet reduce(const EmbeddingSet& e, std::size_t rank);

// CSV formats. Readers throw DataError naming the offending line.
std::string embeddings_csv(const EmbeddingSet& e);  // id,z0,...,z{m-1}
EmbeddingSet parse_embeddings_csv(std::string_view text);
std::string clusters_csv(const EmbeddingSet& e, const KMeansResult& r);  // id,cluster
std::string elbow_csv(const ElbowCurve& curve);                         // k,inertia
std::string projection_csv(const EmbeddingSet& e, const Projection& p);  // id,px,py,norm

}  // namespace bear::latent
