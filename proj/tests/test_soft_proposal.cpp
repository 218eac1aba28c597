#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spn/oracles.hpp"
#include "spn/rng.hpp"
#include "spn/soft_proposal.hpp"

using namespace spn;

namespace {

FeatureMaps random_features(std::size_t k, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    FeatureMaps u(k, n, n);
    for (double& x : u.v) x = rng.uniform();
    return u;
}

double linf(const Vec& a, const Vec& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

FeatureMaps rotate90(const FeatureMaps& u) {
    // (i, j) -> (j, N-1-i)
    FeatureMaps out(u.channels, u.height, u.width);
    const std::size_t n = u.height;
    for (std::size_t c = 0; c < u.channels; ++c)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) out(c, j, n - 1 - i) = u(c, i, j);
    return out;
}

Grid rotate90(const Grid& g) {
    Grid out(g.rows, g.cols);
    const std::size_t n = g.rows;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(j, n - 1 - i) = g(i, j);
    return out;
}

} // namespace

TEST_CASE("spatial_kernel identity and symmetry") {
    CHECK(spatial_kernel(0, 0, 0.3) == 1.0);
    CHECK(spatial_kernel(0, 0, 17.0) == 1.0);
    CHECK(spatial_kernel(2, 5, 1.1) == spatial_kernel(5, 2, 1.1));
    CHECK(spatial_kernel(-3, 1, 0.7) == spatial_kernel(1, -3, 0.7));
}

TEST_CASE("spatial_kernel closed form") {
    // exp(-(3^2+4^2) / (2 * 1.5^2)) = exp(-25/4.5)
    CHECK(spatial_kernel(3, 4, 1.5) == doctest::Approx(std::exp(-25.0 / 4.5)).epsilon(1e-15));
    CHECK(spatial_kernel(1, 0, 2.0) == doctest::Approx(std::exp(-1.0 / 8.0)).epsilon(1e-15));
}

TEST_CASE("spatial_kernel rejects non-positive epsilon") {
    CHECK_THROWS_AS(spatial_kernel(1, 1, 0.0), ConfigError);
    CHECK_THROWS_AS(spatial_kernel(1, 1, -0.5), ConfigError);
}

TEST_CASE("build_transfer_matrix flags identical features as degenerate") {
    FeatureMaps u(4, 3, 3, 0.7);
    const TransferMatrix d = build_transfer_matrix(u, SpConfig{});
    CHECK(d.degenerate);
    CHECK(d.entries.empty());
}

TEST_CASE("build_transfer_matrix rejects non-finite features") {
    FeatureMaps u = random_features(2, 3, 11);
    u.v[4] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(build_transfer_matrix(u, SpConfig{}), InputError);
}

TEST_CASE("build_transfer_matrix matches the hand-evaluated 4-node instance") {
    // N=2, K=1, feature grid ((0,1),(2,3)); nodes in row-major order.
    FeatureMaps u(1, 2, 2);
    u(0, 0, 0) = 0.0;
    u(0, 0, 1) = 1.0;
    u(0, 1, 0) = 2.0;
    u(0, 1, 1) = 3.0;

    const double eps = 0.15 * 2.0;
    const double l_01 = std::exp(-1.0 / (2.0 * eps * eps)); // offset (0,1) or (1,0)
    const double l_11 = std::exp(-2.0 / (2.0 * eps * eps)); // offset (1,1)

    // raw weights D'[a][b] = |u_a - u_b| * L(offset)
    double raw[4][4] = {};
    const double feat[4] = {0.0, 1.0, 2.0, 3.0};
    const int pos[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            const int di = pos[a][0] - pos[b][0];
            const int dj = pos[a][1] - pos[b][1];
            const double l = (di == 0 || dj == 0) ? l_01 : l_11;
            raw[a][b] = std::abs(feat[a] - feat[b]) * l;
        }
    }

    const TransferMatrix d = build_transfer_matrix(u, SpConfig{});
    REQUIRE_FALSE(d.degenerate);
    REQUIRE(d.nodes() == 4);
    for (int b = 0; b < 4; ++b) {
        double colsum_raw = 0.0;
        for (int a = 0; a < 4; ++a) colsum_raw += raw[a][b];
        double colsum_built = 0.0;
        for (int a = 0; a < 4; ++a) {
            CHECK(d(a, b) == doctest::Approx(raw[a][b] / colsum_raw).epsilon(1e-14));
            colsum_built += d(a, b);
        }
        CHECK(colsum_built == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("build_transfer_matrix uses epsilon = 0.15 N") {
    // For N=10 the kernel bandwidth is 1.5; check entry ratios against the
    // unnormalized formula (normalization cancels within a column).
    const std::size_t n = 10;
    FeatureMaps u = random_features(3, n, 5);
    const TransferMatrix d = build_transfer_matrix(u, SpConfig{});
    REQUIRE_FALSE(d.degenerate);

    auto dist = [&](std::size_t a, std::size_t b) {
        double ss = 0.0;
        for (std::size_t c = 0; c < u.channels; ++c) {
            const double diff = u(c, a / n, a % n) - u(c, b / n, b % n);
            ss += diff * diff;
        }
        return std::sqrt(ss);
    };
    auto kern = [&](std::size_t a, std::size_t b) {
        const int di = static_cast<int>(a / n) - static_cast<int>(b / n);
        const int dj = static_cast<int>(a % n) - static_cast<int>(b % n);
        return std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
    };
    const std::size_t b = 37;
    const std::size_t a1 = 12, a2 = 81;
    const double expected_ratio = (dist(a1, b) * kern(a1, b)) / (dist(a2, b) * kern(a2, b));
    CHECK(d(a1, b) / d(a2, b) == doctest::Approx(expected_ratio).epsilon(1e-12));
}

TEST_CASE("transfer matrix is column-stochastic with zero diagonal over many seeds") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const std::size_t n = 2 + seed % 5;
        const std::size_t k = 1 + seed % 3;
        const TransferMatrix d = build_transfer_matrix(random_features(k, n, seed), SpConfig{});
        REQUIRE_FALSE(d.degenerate);
        const std::size_t nodes = d.nodes();
        for (std::size_t b = 0; b < nodes; ++b) {
            double colsum = 0.0;
            for (std::size_t a = 0; a < nodes; ++a) {
                CHECK(d(a, b) >= 0.0);
                colsum += d(a, b);
            }
            CHECK(std::abs(colsum - 1.0) <= 1e-12);
            CHECK(d(b, b) == 0.0);
        }
    }
}

TEST_CASE("damping mixes the uniform matrix and keeps columns stochastic") {
    SpConfig cfg;
    cfg.damping = 0.2;
    const TransferMatrix d = build_transfer_matrix(random_features(2, 3, 3), cfg);
    REQUIRE_FALSE(d.degenerate);
    const std::size_t nodes = d.nodes();
    for (std::size_t b = 0; b < nodes; ++b) {
        double colsum = 0.0;
        for (std::size_t a = 0; a < nodes; ++a) colsum += d(a, b);
        CHECK(std::abs(colsum - 1.0) <= 1e-12);
        // diagonal now carries exactly the uniform share
        CHECK(d(b, b) == doctest::Approx(0.2 / static_cast<double>(nodes)).epsilon(1e-14));
    }
}

TEST_CASE("random_walk on a single node returns all mass immediately") {
    TransferMatrix d;
    d.grid = 1;
    d.entries = {1.0};
    const ProposalMap m = random_walk(d, SpConfig{});
    REQUIRE(m.data.size() == 1);
    CHECK(m.data(0, 0) == 1.0);
    CHECK(m.iterations == 1);
    CHECK(m.residual == 0.0);
}

TEST_CASE("random_walk on the uniform off-diagonal chain stays uniform") {
    const std::size_t n_grid = 3, nodes = 9;
    TransferMatrix d;
    d.grid = n_grid;
    d.entries.assign(nodes * nodes, 1.0 / static_cast<double>(nodes - 1));
    for (std::size_t i = 0; i < nodes; ++i) d.entries[i * nodes + i] = 0.0;
    const ProposalMap m = random_walk(d, SpConfig{});
    for (double x : m.data.v) CHECK(x == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(m.iterations == 1); // fixed point from the first multiply
}

TEST_CASE("random_walk rejects degenerate matrices") {
    TransferMatrix d;
    d.degenerate = true;
    d.grid = 2;
    CHECK_THROWS_AS(random_walk(d, SpConfig{}), InputError);
}

TEST_CASE("walk iterates conserve mass and stay non-negative") {
    const TransferMatrix d = build_transfer_matrix(random_features(4, 4, 21), SpConfig{});
    REQUIRE_FALSE(d.degenerate);
    std::size_t iterates = 0;
    const ProposalMap m = random_walk(d, SpConfig{}, [&](const Vec& iterate) {
        ++iterates;
        double sum = 0.0;
        for (double x : iterate) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    });
    CHECK(iterates == static_cast<std::size_t>(m.iterations));
    double sum = 0.0;
    for (double x : m.data.v) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("converged walk satisfies the fixed-point residual bound") {
    SpConfig cfg;
    cfg.max_iters = 100000;
    cfg.convergence_tol = 1e-10;
    for (std::uint64_t seed = 40; seed < 44; ++seed) {
        const TransferMatrix d = build_transfer_matrix(random_features(4, 3, seed), cfg);
        const ProposalMap m = random_walk(d, cfg);
        CHECK(m.iterations < cfg.max_iters); // actually converged
        CHECK(m.residual <= cfg.convergence_tol);
    }
}

TEST_CASE("power iteration agrees with the dense stationary oracle") {
    SpConfig cfg;
    cfg.max_iters = 100000;
    cfg.convergence_tol = 1e-13;
    for (std::size_t n = 2; n <= 4; ++n) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const FeatureMaps u = random_features(4, n, 100 + seed);
            const TransferMatrix d = build_transfer_matrix(u, cfg);
            REQUIRE_FALSE(d.degenerate);
            const ProposalMap m = random_walk(d, cfg);
            const Vec exact = oracles::stationary_dense(d);
            CHECK(linf(m.data.v, exact) <= 1e-7);
        }
    }
}

TEST_CASE("generate_proposal falls back to uniform on constant features") {
    FeatureMaps u(3, 4, 4, 1.25);
    const ProposalMap m = generate_proposal(u, SpConfig{});
    CHECK(m.iterations == 0);
    CHECK(m.residual == 0.0);
    for (double x : m.data.v) CHECK(x == doctest::Approx(1.0 / 16.0).epsilon(1e-15));
}

TEST_CASE("generate_proposal is invariant to feature scaling") {
    const FeatureMaps u = random_features(4, 5, 77);
    const ProposalMap base = generate_proposal(u, SpConfig{});
    for (double c : {0.5, 2.0, 100.0}) {
        FeatureMaps scaled = u;
        for (double& x : scaled.v) x *= c;
        const ProposalMap m = generate_proposal(scaled, SpConfig{});
        CHECK(m.iterations == base.iterations);
        CHECK(linf(m.data.v, base.data.v) <= 1e-12);
    }
}

TEST_CASE("generate_proposal is equivariant under 90-degree rotation") {
    for (std::uint64_t seed : {1ull, 9ull}) {
        const FeatureMaps u = random_features(3, 4, seed);
        const Grid expected = rotate90(generate_proposal(u, SpConfig{}).data);
        const Grid actual = generate_proposal(rotate90(u), SpConfig{}).data;
        CHECK(linf(actual.v, expected.v) <= 1e-12);
    }
}

TEST_CASE("sp_forward scales by the map") {
    const FeatureMaps u = random_features(3, 4, 8);

    SUBCASE("uniform map divides by N^2") {
        const ProposalMap m = uniform_proposal(4);
        const FeatureMaps v = sp_forward(u, m);
        for (std::size_t i = 0; i < u.v.size(); ++i)
            CHECK(v.v[i] == doctest::Approx(u.v[i] / 16.0).epsilon(1e-15));
    }

    SUBCASE("one-hot map masks everything else") {
        ProposalMap m;
        m.data = Grid(4, 4, 0.0);
        m.data(2, 1) = 1.0;
        const FeatureMaps v = sp_forward(u, m);
        for (std::size_t c = 0; c < u.channels; ++c)
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j)
                    CHECK(v(c, i, j) == (i == 2 && j == 1 ? u(c, i, j) : 0.0));
    }
}

TEST_CASE("sp_forward hand case") {
    FeatureMaps u(1, 2, 2);
    u(0, 0, 0) = 1.0;
    u(0, 0, 1) = 2.0;
    u(0, 1, 0) = 3.0;
    u(0, 1, 1) = 4.0;
    ProposalMap m;
    m.data = Grid(2, 2);
    m.data(0, 0) = 0.1;
    m.data(0, 1) = 0.2;
    m.data(1, 0) = 0.3;
    m.data(1, 1) = 0.4;
    const FeatureMaps v = sp_forward(u, m);
    CHECK(v(0, 0, 0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(v(0, 0, 1) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(v(0, 1, 0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(v(0, 1, 1) == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("sp_forward rejects mismatched shapes") {
    const FeatureMaps u = random_features(2, 3, 4);
    CHECK_THROWS_AS(sp_forward(u, uniform_proposal(4)), InputError);
}

TEST_CASE("sp_backward apportions the gradient by the cached map") {
    const FeatureMaps u = random_features(2, 3, 14);

    SUBCASE("uniform map divides by N^2") {
        const FeatureMaps d_u = sp_backward(u, uniform_proposal(3));
        for (std::size_t i = 0; i < u.v.size(); ++i)
            CHECK(d_u.v[i] == doctest::Approx(u.v[i] / 9.0).epsilon(1e-15));
    }

    SUBCASE("zero gradient stays zero") {
        FeatureMaps zero(2, 3, 3, 0.0);
        const ProposalMap m = generate_proposal(u, SpConfig{});
        const FeatureMaps d_u = sp_backward(zero, m);
        for (double x : d_u.v) CHECK(x == 0.0);
    }
}

TEST_CASE("sp_backward matches finite differences with the map frozen") {
    const FeatureMaps u = random_features(2, 3, 31);
    const ProposalMap m = generate_proposal(u, SpConfig{});
    FeatureMaps d_v = random_features(2, 3, 32);
    for (double& x : d_v.v) x = 0.3 + 0.7 * x; // keep every gradient entry measurable

    // scalar objective <d_v, sp_forward(u, m)> with m held fixed
    auto objective = [&](const Vec& point) {
        FeatureMaps probe = u;
        probe.v = point;
        const FeatureMaps v = sp_forward(probe, m);
        double s = 0.0;
        for (std::size_t i = 0; i < v.v.size(); ++i) s += d_v.v[i] * v.v[i];
        return s;
    };
    const Vec numeric = oracles::finite_diff_grad(objective, u.v, 1e-5);
    const FeatureMaps analytic = sp_backward(d_v, m);
    for (std::size_t i = 0; i < numeric.size(); ++i)
        CHECK(oracles::relative_error(analytic.v[i], numeric[i]) < 1e-8);
}
