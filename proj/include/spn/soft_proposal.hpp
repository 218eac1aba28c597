#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "spn/error.hpp"
#include "spn/tensor.hpp"

namespace spn {

// Feature maps entering the soft-proposal module: K channels over an N x N grid.
using FeatureMaps = Tensor3;

struct SpConfig {
    double epsilon_factor = 0.15;       // kernel bandwidth = epsilon_factor * N
    int max_iters = 100;
    double convergence_tol = 1e-10;     // L1 change between walk iterates
    double damping = 0.0;               // uniform mix-in; keeps the chain ergodic
    double degenerate_threshold = 1e-12; // minimum total mass of the raw weights

    void validate() const {
        if (!(epsilon_factor > 0.0)) throw ConfigError("epsilon_factor must be > 0");
        if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
        if (!(convergence_tol > 0.0)) throw ConfigError("convergence_tol must be > 0");
        if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("damping must be in [0,1)");
        if (!(degenerate_threshold >= 0.0)) throw ConfigError("degenerate_threshold must be >= 0");
    }
};

// Column-stochastic random-walk matrix over the N*N grid nodes.
// entries[a*n + b] is the weight of the edge carrying mass from node b to
// node a under the update M <- D*M; node (i,j) has index i*N + j.
struct TransferMatrix {
    std::size_t grid = 0;        // N
    std::vector<double> entries; // n x n row-major, n = N*N; empty when degenerate
    bool degenerate = false;

    std::size_t nodes() const { return grid * grid; }
    double operator()(std::size_t a, std::size_t b) const { return entries[a * nodes() + b]; }
};

// Objectness confidence map: non-negative, sums to 1.
struct ProposalMap {
    Grid data;            // N x N
    int iterations = 0;   // walk steps actually taken
    double residual = 0.0; // final ||D*M - M||_1
};

// Gaussian spatial affinity between grid offsets.
inline double spatial_kernel(int di, int dj, double epsilon) {
    if (!(epsilon > 0.0)) throw ConfigError("spatial_kernel: epsilon must be > 0");
    const double d2 = static_cast<double>(di) * di + static_cast<double>(dj) * dj;
    return std::exp(-d2 / (2.0 * epsilon * epsilon));
}

inline ProposalMap uniform_proposal(std::size_t n_grid) {
    ProposalMap m;
    const double nodes = static_cast<double>(n_grid * n_grid);
    m.data = Grid(n_grid, n_grid, 1.0 / nodes);
    m.iterations = 0;
    m.residual = 0.0;
    return m;
}

// Pairwise feature dissimilarity weighted by the spatial kernel, columns
// normalized to unit mass. All-equal features leave no edge weight anywhere;
// the matrix is then flagged degenerate and left empty.
inline TransferMatrix build_transfer_matrix(const FeatureMaps& u, const SpConfig& cfg) {
    cfg.validate();
    if (u.channels < 1 || u.height < 1 || u.width < 1)
        throw InputError("build_transfer_matrix: empty feature maps");
    if (u.height != u.width)
        throw InputError("build_transfer_matrix: feature maps must be square");
    if (!all_finite(u.v))
        throw InputError("build_transfer_matrix: non-finite feature value");

    const std::size_t n_grid = u.height;
    const std::size_t n = n_grid * n_grid;
    const std::size_t k = u.channels;
    const double epsilon = cfg.epsilon_factor * static_cast<double>(n_grid);

    // Node-major copy of the feature vectors; node (i,j) -> row i*N + j.
    std::vector<double> feats(n * k);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < n_grid; ++i)
            for (std::size_t j = 0; j < n_grid; ++j)
                feats[(i * n_grid + j) * k + c] = u(c, i, j);

    // Kernel values by grid offset, |di|,|dj| <= N-1.
    const std::size_t span = 2 * n_grid - 1;
    std::vector<double> kern(span * span);
    for (std::size_t a = 0; a < span; ++a)
        for (std::size_t b = 0; b < span; ++b)
            kern[a * span + b] = spatial_kernel(static_cast<int>(a) - static_cast<int>(n_grid) + 1,
                                                static_cast<int>(b) - static_cast<int>(n_grid) + 1,
                                                epsilon);

    TransferMatrix d;
    d.grid = n_grid;
    d.entries.assign(n * n, 0.0);

    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const std::size_t ai = a / n_grid, aj = a % n_grid;
        const double* fa = &feats[a * k];
        for (std::size_t b = a + 1; b < n; ++b) {
            const std::size_t bi = b / n_grid, bj = b % n_grid;
            const double* fb = &feats[b * k];
            double ss = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double diff = fa[c] - fb[c];
                ss += diff * diff;
            }
            const std::size_t oi = ai - bi + n_grid - 1;
            const std::size_t oj = aj - bj + n_grid - 1;
            const double w = std::sqrt(ss) * kern[oi * span + oj];
            // dissimilarity and kernel are both symmetric in (a, b)
            d.entries[a * n + b] = w;
            d.entries[b * n + a] = w;
            total += 2.0 * w;
        }
    }

    if (total < cfg.degenerate_threshold) {
        d.degenerate = true;
        d.entries.clear();
        return d;
    }

    // Outbound (column) normalization; a zero column would require the node's
    // features to equal every other node's, which forces the degenerate case
    // above, so the division is safe here.
    for (std::size_t b = 0; b < n; ++b) {
        double colsum = 0.0;
        for (std::size_t a = 0; a < n; ++a) colsum += d.entries[a * n + b];
        const double inv = 1.0 / colsum;
        for (std::size_t a = 0; a < n; ++a) d.entries[a * n + b] *= inv;
    }

    if (cfg.damping > 0.0) {
        const double keep = 1.0 - cfg.damping;
        const double mix = cfg.damping / static_cast<double>(n);
        for (double& e : d.entries) e = keep * e + mix;
    }
    return d;
}

namespace detail {

inline void walk_matvec(const TransferMatrix& d, const Vec& m, Vec& out) {
    const std::size_t n = d.nodes();
    for (std::size_t a = 0; a < n; ++a) {
        const double* row = &d.entries[a * n];
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) s += row[b] * m[b];
        out[a] = s;
    }
}

} // namespace detail

// Power iteration M <- D*M from the uniform start, stopping on L1 change.
// on_iterate is called with each new iterate (flattened, length N*N).
template <class F>
ProposalMap random_walk(const TransferMatrix& d, const SpConfig& cfg, F&& on_iterate) {
    cfg.validate();
    if (d.degenerate)
        throw InputError("random_walk: transfer matrix is degenerate");
    const std::size_t n = d.nodes();
    Vec m(n, 1.0 / static_cast<double>(n));
    Vec next(n);

    int iterations = 0;
    for (int t = 1; t <= cfg.max_iters; ++t) {
        detail::walk_matvec(d, m, next);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change += std::abs(next[i] - m[i]);
        m.swap(next);
        iterations = t;
        on_iterate(static_cast<const Vec&>(m));
        if (change < cfg.convergence_tol) break;
    }

    detail::walk_matvec(d, m, next);
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) residual += std::abs(next[i] - m[i]);

    ProposalMap out;
    out.data = Grid(d.grid, d.grid);
    out.data.v = std::move(m);
    out.iterations = iterations;
    out.residual = residual;
    return out;
}

inline ProposalMap random_walk(const TransferMatrix& d, const SpConfig& cfg) {
    return random_walk(d, cfg, [](const Vec&) {});
}

// Full soft-proposal generation: transfer matrix plus walk. Degenerate
// feature maps (all nodes identical) fall back to the uniform map.
inline ProposalMap generate_proposal(const FeatureMaps& u, const SpConfig& cfg) {
    const TransferMatrix d = build_transfer_matrix(u, cfg);
    if (d.degenerate) return uniform_proposal(u.height);
    return random_walk(d, cfg);
}

namespace detail {

inline Tensor3 couple_with_map(const Tensor3& t, const Grid& m, const char* who) {
    if (m.rows != t.height || m.cols != t.width)
        throw InputError(std::string(who) + ": proposal map shape does not match feature maps");
    Tensor3 out(t.channels, t.height, t.width);
    const std::size_t hw = t.height * t.width;
    for (std::size_t c = 0; c < t.channels; ++c) {
        const double* src = &t.v[c * hw];
        double* dst = &out.v[c * hw];
        for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] * m.v[p];
    }
    return out;
}

} // namespace detail

// Coupled forward: V_k = U_k o M.
inline FeatureMaps sp_forward(const FeatureMaps& u, const ProposalMap& m) {
    return detail::couple_with_map(u, m.data, "sp_forward");
}

// Coupled backward: dU_k = dV_k o M, with M the map cached at forward time.
// M is a constant here; no gradient flows through its dependence on U.
inline FeatureMaps sp_backward(const FeatureMaps& d_v, const ProposalMap& m) {
    return detail::couple_with_map(d_v, m.data, "sp_backward");
}

} // namespace spn
