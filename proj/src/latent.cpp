#include "bear/latent.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "bear/errors.hpp"
#include "bear/kv_config.hpp"
#include "bear/rng.hpp"

namespace bear::latent {

EmbeddingSet::EmbeddingSet(std::size_t dim, std::vector<std::string> ids, std::vector<double> values)
    : dim_(dim), ids_(std::move(ids)), values_(std::move(values)) {
    if (dim_ == 0) {
        throw DataError("embedding dimension must be positive");
    }
    if (values_.size() != ids_.size() * dim_) {
        throw DataError("embedding values do not fill " + std::to_string(ids_.size()) + " rows of dimension " +
                        std::to_string(dim_));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw DataError("embedding contains a non-finite value");
        }
    }
}

void EmbeddingSet::add(std::string id, std::span<const double> row) {
    if (ids_.empty() && dim_ == 0) {
        dim_ = row.size();
    }
    if (row.size() != dim_ || dim_ == 0) {
        throw DataError("embedding row '" + id + "' has " + std::to_string(row.size()) + " values, expected " +
                        std::to_string(dim_));
    }
    for (double v : row) {
        if (!std::isfinite(v)) {
            throw DataError("embedding row '" + id + "' contains a non-finite value");
        }
    }
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), row.begin(), row.end());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

std::size_t nearest(std::span<const double> point, const std::vector<double>& centroids, std::size_t k,
                    std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
        const double d = squared_distance(point, {centroids.data() + j * dim, dim});
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

double objective(const EmbeddingSet& e, const std::vector<double>& centroids, const std::vector<std::size_t>& assign) {
    const std::size_t dim = e.dim();
    double total = 0.0;
    for (std::size_t i = 0; i < e.rows(); ++i) {
        total += squared_distance(e.row(i), {centroids.data() + assign[i] * dim, dim});
    }
    return total;
}

std::vector<double> kmeanspp_seed(const EmbeddingSet& e, std::size_t k, Rng& rng) {
    const std::size_t n = e.rows(), dim = e.dim();
    std::vector<double> centroids;
    centroids.reserve(k * dim);
    std::vector<bool> chosen(n, false);
    auto take = [&](std::size_t i) {
        chosen[i] = true;
        const auto r = e.row(i);
        centroids.insert(centroids.end(), r.begin(), r.end());
    };
    take(static_cast<std::size_t>(rng.below(n)));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        d2[i] = squared_distance(e.row(i), {centroids.data(), dim});
    }
    for (std::size_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (double v : d2) {
            total += v;
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (d2[i] > 0.0 && acc > target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {  // rounding left the target past the last positive weight
                for (std::size_t i = n; i-- > 0;) {
                    if (d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            // Every point coincides with a centroid: take the first unused row.
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (!chosen[i]) {
                    pick = i;
                }
            }
        }
        take(pick);
        const std::span<const double> c{centroids.data() + j * dim, dim};
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(e.row(i), c));
        }
    }
    return centroids;
}

KMeansResult lloyd(const EmbeddingSet& e, std::size_t k, std::size_t max_iter, Rng& rng) {
    const std::size_t n = e.rows(), dim = e.dim();
    KMeansResult r;
    r.k = k;
    r.dim = dim;
    r.centroids = kmeanspp_seed(e, k, rng);
    r.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.assignments[i] = nearest(e.row(i), r.centroids, k, dim);
    }
    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);
    std::vector<std::size_t> next(n);
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = r.assignments[i];
            ++counts[c];
            const auto row = e.row(i);
            for (std::size_t a = 0; a < dim; ++a) {
                sums[c * dim + a] += row[a];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            for (std::size_t a = 0; a < dim; ++a) {
                r.centroids[c * dim + a] = sums[c * dim + a] / static_cast<double>(counts[c]);
            }
        }
        r.trace.push_back(objective(e, r.centroids, r.assignments));
        r.iterations = it + 1;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] = nearest(e.row(i), r.centroids, k, dim);
        }
        if (next == r.assignments) {
            r.converged = true;
            break;
        }
        r.assignments = next;
    }
    r.inertia = objective(e, r.centroids, r.assignments);
    return r;
}

}  // namespace

KMeansResult kmeans(const EmbeddingSet& e, const KMeansOptions& options) {
    if (options.k < 1) {
        throw DataError("k must be at least 1");
    }
    if (options.k > e.rows()) {
        throw DataError("k=" + std::to_string(options.k) + " exceeds the number of embeddings (" +
                        std::to_string(e.rows()) + ")");
    }
    if (options.restarts == 0 || options.max_iter == 0) {
        throw DataError("kmeans needs at least one restart and one iteration");
    }
    KMeansResult best;
    for (std::size_t run = 0; run < options.restarts; ++run) {
        Rng rng(derive_seed(options.seed, run));
        KMeansResult r = lloyd(e, options.k, options.max_iter, rng);
        if (run == 0 || r.inertia < best.inertia) {
            best = std::move(r);
        }
    }
    best.seed = options.seed;
    return best;
}

double inertia(const EmbeddingSet& e, const KMeansResult& result) {
    if (result.assignments.size() != e.rows() || result.dim != e.dim()) {
        throw DataError("k-means result does not belong to this embedding set");
    }
    for (std::size_t a : result.assignments) {
        if (a >= result.k) {
            throw DataError("assignment " + std::to_string(a) + " has no centroid");
        }
    }
    return objective(e, result.centroids, result.assignments);
}

ElbowCurve select_elbow(std::vector<std::pair<std::size_t, double>> points) {
    ElbowCurve curve;
    curve.points = std::move(points);
    const auto& p = curve.points;
    if (p.empty()) {
        return curve;
    }
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i].second > p[i - 1].second * (1.0 + 1e-9) + 1e-12) {
            curve.non_monotone.push_back(p[i].first);
        }
    }
    curve.selected_k = p.front().first;
    if (p.size() < 3) {
        return curve;
    }
    const double k0 = static_cast<double>(p.front().first), k1 = static_cast<double>(p.back().first);
    const double i0 = p.front().second, i1 = p.back().second;
    const double span_k = k1 - k0, span_i = i0 - i1;
    if (span_k <= 0.0 || span_i <= 0.0) {
        return curve;
    }
    // Chord from (0, 1) to (1, 0) in normalized coordinates: x + y = 1.
    double best = 0.0;
    for (const auto& [k, v] : p) {
        const double x = (static_cast<double>(k) - k0) / span_k;
        const double y = (v - i1) / span_i;
        const double dist = std::abs(x + y - 1.0) / std::sqrt(2.0);
        if (dist > best) {
            best = dist;
            curve.selected_k = k;
        }
    }
    curve.has_elbow = best > 1e-6;
    if (!curve.has_elbow) {
        curve.selected_k = p.front().first;
    }
    return curve;
}

ElbowCurve elbow(const EmbeddingSet& e, std::size_t k_min, std::size_t k_max, std::uint64_t seed,
                 std::size_t restarts) {
    if (k_min < 1 || k_min >= k_max || k_max > e.rows()) {
        throw DataError("elbow scan needs 1 <= k_min < k_max <= N (got " + std::to_string(k_min) + ", " +
                        std::to_string(k_max) + ", N=" + std::to_string(e.rows()) + ")");
    }
    std::vector<std::pair<std::size_t, double>> points;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        KMeansOptions opt;
        opt.k = k;
        opt.seed = seed;
        opt.restarts = restarts;
        points.emplace_back(k, kmeans(e, opt).inertia);
    }
    return select_elbow(std::move(points));
}

std::vector<double> norms(const EmbeddingSet& e) {
    std::vector<double> out(e.rows());
    for (std::size_t i = 0; i < e.rows(); ++i) {
        double s = 0.0;
        for (double v : e.row(i)) {
            s += v * v;
        }
        out[i] = std::sqrt(s);
    }
    return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

void mat_vec(const std::vector<double>& m, std::span<const double> v, std::span<double> out) {
    const std::size_t dim = v.size();
    for (std::size_t r = 0; r < dim; ++r) {
        out[r] = dot({m.data() + r * dim, dim}, v);
    }
}

// Removes components along the rows of `basis` (count x dim) and normalizes.
// Returns the norm before normalization.
double orthonormalize(std::span<double> v, const std::vector<double>& basis, std::size_t count) {
    const std::size_t dim = v.size();
    for (std::size_t j = 0; j < count; ++j) {
        const std::span<const double> b{basis.data() + j * dim, dim};
        const double c = dot(v, b);
        for (std::size_t a = 0; a < dim; ++a) {
            v[a] -= c * b[a];
        }
    }
    const double norm = std::sqrt(dot(v, v));
    if (norm > 0.0) {
        for (double& x : v) {
            x /= norm;
        }
    }
    return norm;
}

}  // namespace

Projection project(const EmbeddingSet& e, std::size_t rank, const PowerIterationOptions& options) {
    const std::size_t n = e.rows(), dim = e.dim();
    if (n < 2) {
        throw DataError("projection needs at least 2 embeddings");
    }
    if (rank == 0 || rank > dim) {
        throw DataError("projection rank " + std::to_string(rank) + " must lie in [1, " + std::to_string(dim) + "]");
    }
    Projection p;
    p.rank = rank;
    p.dim = dim;
    p.mean.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = e.row(i);
        for (std::size_t a = 0; a < dim; ++a) {
            p.mean[a] += row[a];
        }
    }
    for (double& v : p.mean) {
        v /= static_cast<double>(n);
    }
    std::vector<double> cov(dim * dim, 0.0);
    std::vector<double> centered(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = e.row(i);
        for (std::size_t a = 0; a < dim; ++a) {
            centered[a] = row[a] - p.mean[a];
        }
        for (std::size_t a = 0; a < dim; ++a) {
            for (std::size_t b = 0; b < dim; ++b) {
                cov[a * dim + b] += centered[a] * centered[b];
            }
        }
    }
    double trace = 0.0;
    for (std::size_t a = 0; a < dim; ++a) {
        trace += cov[a * dim + a];
    }
    if (!(trace > 0.0)) {
        throw DataError("embeddings have zero variance (rank 0); nothing to project");
    }
    for (double& v : cov) {
        v /= static_cast<double>(n);
    }

    p.components.assign(rank * dim, 0.0);
    std::vector<double> v(dim), w(dim);
    for (std::size_t j = 0; j < rank; ++j) {
        Rng rng(derive_seed(0x70ca, j));
        for (double& x : v) {
            x = rng.uniform(-1.0, 1.0);
        }
        orthonormalize(v, p.components, j);
        double lambda = 0.0;
        for (std::size_t it = 0; it < options.max_iter; ++it) {
            mat_vec(cov, v, w);
            const double norm = orthonormalize(w, p.components, j);
            if (norm <= trace * 1e-12) {
                // Remaining variance is zero; any unit vector orthogonal to the
                // earlier components spans it.
                w = v;
                lambda = 0.0;
                break;
            }
            double change = 0.0;
            for (std::size_t a = 0; a < dim; ++a) {
                change += (w[a] - v[a]) * (w[a] - v[a]);
            }
            v.swap(w);
            lambda = norm;
            if (std::sqrt(change) < options.tolerance) {
                break;
            }
        }
        // Sign convention: the largest-magnitude entry is positive.
        std::size_t arg = 0;
        for (std::size_t a = 1; a < dim; ++a) {
            if (std::abs(v[a]) > std::abs(v[arg])) {
                arg = a;
            }
        }
        if (v[arg] < 0.0) {
            for (double& x : v) {
                x = -x;
            }
        }
        std::copy(v.begin(), v.end(), p.components.begin() + static_cast<std::ptrdiff_t>(j * dim));
        p.eigenvalues.push_back(lambda);
        // Deflate.
        for (std::size_t a = 0; a < dim; ++a) {
            for (std::size_t b = 0; b < dim; ++b) {
                cov[a * dim + b] -= lambda * v[a] * v[b];
            }
        }
    }

    p.scores.assign(n * rank, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = e.row(i);
        for (std::size_t a = 0; a < dim; ++a) {
            centered[a] = row[a] - p.mean[a];
        }
        for (std::size_t j = 0; j < rank; ++j) {
            p.scores[i * rank + j] = dot(centered, p.component(j));
        }
    }
    return p;
}

EmbeddingSet reduce(const EmbeddingSet& e, std::size_t rank) {
    const Projection p = project(e, rank);
    return EmbeddingSet(rank, e.ids(), p.scores);
}

namespace {

std::string_view next_line(std::string_view& text) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    return line;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

void check_id(const std::string& id) {
    if (id.empty() || id.find_first_of(",\"\r\n") != std::string::npos) {
        throw DataError("identifier '" + id + "' is empty or contains a comma, quote or newline");
    }
}

}  // namespace

std::string embeddings_csv(const EmbeddingSet& e) {
    std::string out = "id";
    for (std::size_t a = 0; a < e.dim(); ++a) {
        out += ",z" + std::to_string(a);
    }
    out += "\n";
    for (std::size_t i = 0; i < e.rows(); ++i) {
        check_id(e.id(i));
        out += e.id(i);
        for (double v : e.row(i)) {
            out += "," + io::format_double(v);
        }
        out += "\n";
    }
    return out;
}

EmbeddingSet parse_embeddings_csv(std::string_view text) {
    const std::string_view header = next_line(text);
    const auto cols = split_commas(header);
    if (cols.size() < 2 || cols[0] != "id") {
        throw DataError("line 1: embeddings header must be id,z0,...");
    }
    for (std::size_t a = 1; a < cols.size(); ++a) {
        if (cols[a] != "z" + std::to_string(a - 1)) {
            throw DataError("line 1: expected column 'z" + std::to_string(a - 1) + "', got '" + std::string(cols[a]) + "'");
        }
    }
    const std::size_t dim = cols.size() - 1;
    std::vector<std::string> ids;
    std::vector<double> values;
    std::size_t line_no = 1;
    while (!text.empty()) {
        const std::string_view line = next_line(text);
        ++line_no;
        if (line.empty() && text.empty()) {
            break;
        }
        const auto fields = split_commas(line);
        if (fields.size() != cols.size()) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) +
                            " fields, got " + std::to_string(fields.size()));
        }
        ids.emplace_back(fields[0]);
        if (ids.back().empty()) {
            throw DataError("line " + std::to_string(line_no) + ": empty id");
        }
        for (std::size_t a = 1; a < fields.size(); ++a) {
            double v = 0.0;
            const auto f = fields[a];
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v)) {
                throw DataError("line " + std::to_string(line_no) + ": bad number '" + std::string(f) + "' in column " +
                                std::string(cols[a]));
            }
            values.push_back(v);
        }
    }
    if (ids.empty()) {
        throw DataError("embeddings file has no rows");
    }
    return EmbeddingSet(dim, std::move(ids), std::move(values));
}

std::string clusters_csv(const EmbeddingSet& e, const KMeansResult& r) {
    std::string out = "id,cluster\n";
    for (std::size_t i = 0; i < e.rows(); ++i) {
        out += e.id(i) + "," + std::to_string(r.assignments[i]) + "\n";
    }
    return out;
}

std::string elbow_csv(const ElbowCurve& curve) {
    std::string out = "k,inertia\n";
    for (const auto& [k, v] : curve.points) {
        out += std::to_string(k) + "," + io::format_double(v) + "\n";
    }
    return out;
}

std::string projection_csv(const EmbeddingSet& e, const Projection& p) {
    if (p.rank < 2) {
        throw DataError("projection CSV needs a rank-2 projection");
    }
    const auto n = norms(e);
    std::string out = "id,px,py,norm\n";
    for (std::size_t i = 0; i < e.rows(); ++i) {
        const auto s = p.score(i);
        out += e.id(i) + "," + io::format_double(s[0]) + "," + io::format_double(s[1]) + "," + io::format_double(n[i]) +
               "\n";
    }
    return out;
}

}  // namespace bear::latent
