#pragma once

// Derivative-free maximization of smooth objectives over the band triangle
// {lower < x <= x_max, x < y <= y_max}: a coarse grid seeds a Nelder-Mead
// refinement. Objectives return -infinity (or NaN) outside their admissible
// region.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "ou_statarb/errors.hpp"
#include "ou_statarb/parallel.hpp"

namespace ou_statarb::optim {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Maximum2 {
    Point2 arg;
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

inline double sanitize(double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; }

/// Nelder-Mead maximization in two dimensions. Stops when the simplex fits in
/// a box of side `tol` and the vertex values agree to `ftol` (relative).
template <typename Objective>
Maximum2 nelder_mead_max(Objective&& objective, Point2 start, double step, double tol, int max_iter = 20000,
                         double ftol = 1e-15) {
    struct Vertex {
        Point2 p;
        double v;
    };
    auto eval = [&](Point2 p) { return Vertex{p, sanitize(objective(p.x, p.y))}; };
    std::array<Vertex, 3> s{eval(start), eval({start.x + step, start.y}), eval({start.x, start.y + step})};
    // Vertices that fall outside the admissible region get pulled toward the start.
    for (int k = 1; k < 3; ++k) {
        double shrink = 1.0;
        while (!std::isfinite(s[k].v) && shrink > 1e-6) {
            shrink *= 0.5;
            const Point2 p{start.x + (k == 1 ? step * shrink : 0.0), start.y + (k == 2 ? step * shrink : 0.0)};
            s[k] = eval(p);
        }
    }
    Maximum2 out;
    for (int it = 0; it < max_iter; ++it) {
        // best first
        if (s[1].v > s[0].v) std::swap(s[0], s[1]);
        if (s[2].v > s[0].v) std::swap(s[0], s[2]);
        if (s[2].v > s[1].v) std::swap(s[1], s[2]);
        const double span_x = std::max({s[0].p.x, s[1].p.x, s[2].p.x}) - std::min({s[0].p.x, s[1].p.x, s[2].p.x});
        const double span_y = std::max({s[0].p.y, s[1].p.y, s[2].p.y}) - std::min({s[0].p.y, s[1].p.y, s[2].p.y});
        const double fspread = std::abs(s[0].v - s[2].v);
        if (std::isfinite(s[2].v) && span_x <= tol && span_y <= tol &&
            fspread <= ftol * std::max(1.0, std::abs(s[0].v))) {
            out.converged = true;
            out.iterations = it;
            break;
        }
        if (span_x <= 1e-3 * tol && span_y <= 1e-3 * tol) {
            // collapsed onto a boundary kink; nothing more to gain
            out.converged = true;
            out.iterations = it;
            break;
        }
        const Point2 c{0.5 * (s[0].p.x + s[1].p.x), 0.5 * (s[0].p.y + s[1].p.y)};
        auto along = [&](double t) { return Point2{c.x + t * (s[2].p.x - c.x), c.y + t * (s[2].p.y - c.y)}; };
        const Vertex r = eval(along(-1.0));
        if (r.v > s[0].v) {
            const Vertex e = eval(along(-2.0));
            s[2] = e.v > r.v ? e : r;
        } else if (r.v > s[1].v) {
            s[2] = r;
        } else {
            const Vertex k = r.v > s[2].v ? eval(along(-0.5)) : eval(along(0.5));
            if (k.v > std::max(r.v, s[2].v)) {
                s[2] = k;
            } else {
                for (int j = 1; j < 3; ++j)
                    s[j] = eval({s[0].p.x + 0.5 * (s[j].p.x - s[0].p.x), s[0].p.y + 0.5 * (s[j].p.y - s[0].p.y)});
            }
        }
        out.iterations = it + 1;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
        if (s[k].v > s[best].v) best = k;
    out.arg = s[best].p;
    out.value = s[best].v;
    return out;
}

struct TriangleGrid {
    double x_lower;  ///< exclusive
    double x_upper;  ///< inclusive
    double y_upper;  ///< inclusive; y ranges over (x, y_upper]
    int resolution = 200;
};

struct GridMaximum {
    Point2 arg;
    double value = -std::numeric_limits<double>::infinity();
    double x_step = 0.0;
    double y_step = 0.0;
};

/// Evaluates the objective on a resolution x resolution grid over the
/// triangle; rows run concurrently, the reduction is in index order. Ties
/// within 1e-12 go to the smallest |x|, then the smallest y.
template <typename Objective>
GridMaximum grid_max(Objective&& objective, const TriangleGrid& g, unsigned workers = 0) {
    const int n = g.resolution;
    std::vector<double> values(static_cast<std::size_t>(n) * n);
    auto x_at = [&](int i) { return g.x_lower + (g.x_upper - g.x_lower) * (i + 1) / n; };
    auto y_at = [&](double x, int j) { return x + (g.y_upper - x) * (j + 1) / n; };
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
        const double x = x_at(static_cast<int>(i));
        for (int j = 0; j < n; ++j) values[i * n + j] = sanitize(objective(x, y_at(x, j)));
    });
    GridMaximum best;
    best.x_step = (g.x_upper - g.x_lower) / n;
    for (int i = 0; i < n; ++i) {
        const double x = x_at(i);
        for (int j = 0; j < n; ++j) {
            const double v = values[static_cast<std::size_t>(i) * n + j];
            if (!std::isfinite(v)) continue;
            const double y = y_at(x, j);
            const bool better = v > best.value + 1e-12;
            const bool tie = std::abs(v - best.value) <= 1e-12 &&
                             (std::abs(x) < std::abs(best.arg.x) ||
                              (std::abs(x) == std::abs(best.arg.x) && y < best.arg.y));
            if (better || tie) {
                best.value = v;
                best.arg = {x, y};
                best.y_step = (g.y_upper - x) / n;
            }
        }
    }
    return best;
}

/// Grid seed followed by Nelder-Mead refinement.
template <typename Objective>
Maximum2 maximize_on_triangle(Objective&& objective, const TriangleGrid& g, double tol, unsigned workers = 0) {
    if (g.resolution < 50) throw DomainError("optimizer: grid resolution must be >= 50");
    if (!(tol > 0.0)) throw DomainError("optimizer: tolerance must be positive");
    const GridMaximum seed = grid_max(objective, g, workers);
    if (!std::isfinite(seed.value)) return Maximum2{};
    const double step = 0.5 * std::min(seed.x_step, std::max(seed.y_step, tol));
    Maximum2 refined = nelder_mead_max(objective, seed.arg, step, tol);
    if (refined.value < seed.value) {
        refined.arg = seed.arg;
        refined.value = seed.value;
    }
    return refined;
}

}  // namespace ou_statarb::optim
