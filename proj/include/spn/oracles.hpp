#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "spn/error.hpp"
#include "spn/layers.hpp"
#include "spn/network.hpp"
#include "spn/soft_proposal.hpp"
#include "spn/tensor.hpp"

namespace spn::oracles {

// Stationary distribution of a column-stochastic chain by direct linear
// algebra: solve (D - I)x = 0 with sum(x) = 1 as a bordered square system
// (last row replaced by ones) using Gaussian elimination with partial
// pivoting. Shares no code with the power iteration it cross-checks.
inline Vec stationary_dense(const std::vector<double>& entries, std::size_t n) {
    if (n == 0 || entries.size() != n * n) throw InputError("stationary_dense: bad matrix shape");

    std::vector<double> a(n * n);
    Vec b(n, 0.0);
    for (std::size_t r = 0; r + 1 < n; ++r)
        for (std::size_t c = 0; c < n; ++c) a[r * n + c] = entries[r * n + c] - (r == c ? 1.0 : 0.0);
    for (std::size_t c = 0; c < n; ++c) a[(n - 1) * n + c] = 1.0;
    b[n - 1] = 1.0;

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(a[perm[col] * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double mag = std::abs(a[perm[r] * n + col]);
            if (mag > best) {
                best = mag;
                pivot = r;
            }
        }
        if (best < 1e-12)
            throw InputError("stationary_dense: singular system, chain is not ergodic");
        std::swap(perm[col], perm[pivot]);
        const double diag = a[perm[col] * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[perm[r] * n + col] / diag;
            if (factor == 0.0) continue;
            a[perm[r] * n + col] = 0.0;
            for (std::size_t c = col + 1; c < n; ++c) a[perm[r] * n + c] -= factor * a[perm[col] * n + c];
            b[perm[r]] -= factor * b[perm[col]];
        }
    }

    Vec x(n, 0.0);
    for (std::size_t step = n; step-- > 0;) {
        double s = b[perm[step]];
        for (std::size_t c = step + 1; c < n; ++c) s -= a[perm[step] * n + c] * x[c];
        x[step] = s / a[perm[step] * n + step];
    }
    return x;
}

inline Vec stationary_dense(const TransferMatrix& d) {
    if (d.degenerate) throw InputError("stationary_dense: transfer matrix is degenerate");
    return stationary_dense(d.entries, d.nodes());
}

// Central finite differences of a scalar function of a flat point.
template <class F>
Vec finite_diff_grad(F&& f, Vec point, double h = 1e-5) {
    Vec grad(point.size(), 0.0);
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + h;
        const double up = f(static_cast<const Vec&>(point));
        point[i] = saved - h;
        const double down = f(static_cast<const Vec&>(point));
        point[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw InputError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double relative_error(double analytic, double numeric) {
    const double floor = 1e-12;
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckEntry {
    std::string tensor;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> tensors;
    double tolerance = 0.0;
    bool pass = false;

    double max_rel_error() const {
        double worst = 0.0;
        for (const auto& t : tensors) worst = std::max(worst, t.max_rel_error);
        return worst;
    }
};

// Frozen-M gradient check: one forward pass fixes the proposal map, then the
// analytic gradients from the backward pass are compared against central
// finite differences of the loss evaluated with that same map pinned. The
// backward pass deliberately sends no gradient through M, so the oracle must
// hold M constant to test the implemented contract.
// The default step is larger than finite_diff_grad's: per-coordinate the
// loss is nearly linear (logits move by h * feature), so truncation stays
// negligible while the larger step lowers the rounding-noise floor of the
// central difference.
inline GradCheckReport check_gradients(Network& net, const Tensor3& image, const std::vector<int>& labels,
                                       double tolerance = 1e-6, double h = 1e-4) {
    ForwardCache cache = spn_forward(net, image);
    const Grid m = cache.proposal.data;
    LossResult base = loss(cache.logits, labels, net.spec.loss_mode);
    Gradients analytic = spn_backward(net, cache, base.d_logits);

    auto loss_at = [&]() {
        ForwardCache c = net.spec.has_sp() ? spn_forward_fixed_m(net, image, m) : spn_forward(net, image);
        return loss(c.logits, labels, net.spec.loss_mode).value;
    };

    GradCheckReport report;
    report.tolerance = tolerance;
    auto refs = parameter_refs(net);
    for (std::size_t t = 0; t < refs.size(); ++t) {
        GradCheckEntry entry;
        entry.tensor = refs[t].name;
        for (std::size_t i = 0; i < refs[t].size; ++i) {
            double* p = refs[t].data + i;
            const double saved = *p;
            *p = saved + h;
            const double up = loss_at();
            *p = saved - h;
            const double down = loss_at();
            *p = saved;
            const double numeric = (up - down) / (2.0 * h);
            entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic.tensors[t][i], numeric));
        }
        report.tensors.push_back(entry);
    }
    report.pass = report.max_rel_error() < tolerance;
    return report;
}

} // namespace spn::oracles
