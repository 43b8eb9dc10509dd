#include "fdpsens/stratum_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fdpsens {

void simplex_project(std::span<double> x) {
    const std::size_t n = x.size();
    std::vector<double> u(x.begin(), x.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cssv = 0.0;
    double theta = 0.0;
    std::size_t rho_idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cssv += u[i];
        const double t = (cssv - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) {
            rho_idx = i;
            theta = t;
        }
    }
    (void)rho_idx;
    double sum = 0.0;
    for (auto& v : x) {
        v = std::max(0.0, v - theta);
        sum += v;
    }
    // theta carries absolute error ~ max|x| * eps; renormalize so the result
    // sums to one even for inputs with huge magnitudes.
    if (sum > 0.0 && sum != 1.0) {
        for (auto& v : x) v /= sum;
    }
}

double minimize_over_simplex(
    std::vector<double>& x,
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& value_and_grad,
    int max_iter, double grad_tol) {
    const std::size_t n = x.size();
    simplex_project(std::span<double>(x));
    std::vector<double> g(n), x_try(n), g_try(n);
    double f = value_and_grad(x, g);
    double step = 1.0;
    std::vector<double> s(n), y(n);
    bool have_prev = false;
    for (int it = 0; it < max_iter; ++it) {
        // Projected-gradient stationarity with unit step.
        for (std::size_t i = 0; i < n; ++i) x_try[i] = x[i] - g[i];
        simplex_project(std::span<double>(x_try));
        double stat = 0.0;
        for (std::size_t i = 0; i < n; ++i) stat = std::max(stat, std::abs(x_try[i] - x[i]));
        if (stat <= grad_tol) break;

        if (have_prev) {
            double sty = 0.0, sts = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                sts += s[i] * s[i];
                sty += s[i] * y[i];
            }
            step = sty > 1e-300 ? std::clamp(sts / sty, 1e-12, 1e12) : 1.0;
        }

        double tau = step;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_try[i] = x[i] - tau * g[i];
            simplex_project(std::span<double>(x_try));
            const double f_try = value_and_grad(x_try, g_try);
            if (f_try < f - 1e-15 * (1.0 + std::abs(f))) {
                for (std::size_t i = 0; i < n; ++i) {
                    s[i] = x_try[i] - x[i];
                    y[i] = g_try[i] - g[i];
                }
                x.swap(x_try);
                g.swap(g_try);
                f = f_try;
                accepted = true;
                have_prev = true;
                break;
            }
            tau *= 0.4;
        }
        if (!accepted) break;
    }
    return f;
}

namespace {

// Vertex with weight gamma on the index set marked by `hot`.
void fill_vertex(std::span<const std::size_t> order, std::size_t m, double gamma,
                 std::vector<double>& rho) {
    const std::size_t n = order.size();
    const double denom = gamma * static_cast<double>(m) + static_cast<double>(n - m);
    for (std::size_t r = 0; r < n; ++r) {
        rho[order[r]] = (r < m ? gamma : 1.0) / denom;
    }
}

}  // namespace

double stratum_linear_min(std::span<const double> c, double gamma,
                          std::vector<double>* rho_out) {
    const std::size_t n = c.size();
    if (n == 0) throw std::invalid_argument("stratum_linear_min: empty stratum");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t r = 0; r < n; ++r) prefix[r + 1] = prefix[r] + c[order[r]];
    const double total = prefix[n];

    double best = 0.0;
    std::size_t best_m = n;
    for (std::size_t m = 1; m <= n; ++m) {
        const double denom = gamma * static_cast<double>(m) + static_cast<double>(n - m);
        const double value = (gamma * prefix[m] + (total - prefix[m])) / denom;
        if (m == 1 || value < best) {
            best = value;
            best_m = m;
        }
    }
    if (rho_out) {
        rho_out->assign(n, 0.0);
        fill_vertex(order, best_m, gamma, *rho_out);
    }
    return best;
}

MeanRange stratum_mean_range(std::span<const double> q, double gamma) {
    MeanRange r;
    r.lo = stratum_linear_min(q, gamma);
    std::vector<double> neg(q.begin(), q.end());
    for (auto& v : neg) v = -v;
    r.hi = -stratum_linear_min(neg, gamma);
    return r;
}

std::vector<double> stratum_extreme_vertex_maxvar(std::span<const double> q, double gamma,
                                                  bool maximize) {
    const std::size_t n = q.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // For a maximum, load gamma onto the largest scores.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return maximize ? q[a] > q[b] : q[a] < q[b];
    });

    std::vector<double> rho(n), best_rho(n);
    double best_mean = 0.0;
    double best_var = -1.0;
    for (std::size_t m = 1; m <= n; ++m) {
        fill_vertex(order, m, gamma, rho);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            m1 += rho[j] * q[j];
            m2 += rho[j] * q[j] * q[j];
        }
        const double var = std::max(0.0, m2 - m1 * m1);
        if (m == 1) {
            best_mean = m1;
            best_var = var;
            best_rho = rho;
            continue;
        }
        const double scale = 1.0 + std::abs(best_mean);
        const bool better = maximize ? m1 > best_mean + 1e-12 * scale
                                     : m1 < best_mean - 1e-12 * scale;
        const bool tied = std::abs(m1 - best_mean) <= 1e-12 * scale;
        if (better || (tied && var > best_var)) {
            best_mean = m1;
            best_var = var;
            best_rho = rho;
        }
    }
    return best_rho;
}

QuadMinResult stratum_quad_min(std::size_t n, std::size_t J, const double* q,
                               std::span<const double> beta, std::span<const double> lin,
                               double gamma, std::vector<double>& rho_out) {
    QuadMinResult res;
    rho_out.assign(n, 0.0);

    if (n == 2) {
        // One free parameter x = rho_0 in [1/(1+G), G/(1+G)].
        const double lo = 1.0 / (1.0 + gamma);
        const double hi = gamma / (1.0 + gamma);
        double a1 = lin[0] - lin[1];
        double c2 = 0.0;
        double c0 = lin[1];
        for (std::size_t k = 0; k < J; ++k) {
            const double q1 = q[0 * J + k];
            const double q2 = q[1 * J + k];
            const double dk = q1 - q2;
            a1 += 2.0 * beta[k] * q2 * dk;
            c2 += beta[k] * dk * dk;
            c0 += beta[k] * q2 * q2;
        }
        double x;
        if (c2 > 0.0) {
            x = std::clamp(-a1 / (2.0 * c2), lo, hi);
        } else if (a1 > 0.0) {
            x = lo;
        } else if (a1 < 0.0) {
            x = hi;
        } else {
            x = 0.5;
        }
        rho_out[0] = x;
        rho_out[1] = 1.0 - x;
        res.value = c0 + a1 * x + c2 * x * x;
        res.gap = 0.0;
        return res;
    }

    // Simplicial decomposition: grow a vertex set via the exact linear oracle,
    // re-solve the restricted problem over its convex hull.
    auto objective = [&](const std::vector<double>& rho) {
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += lin[j] * rho[j];
        for (std::size_t k = 0; k < J; ++k) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += q[j * J + k] * rho[j];
            v += beta[k] * dot * dot;
        }
        return v;
    };
    auto gradient = [&](const std::vector<double>& rho, std::vector<double>& g) {
        for (std::size_t j = 0; j < n; ++j) g[j] = lin[j];
        for (std::size_t k = 0; k < J; ++k) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += q[j * J + k] * rho[j];
            const double coef = 2.0 * beta[k] * dot;
            for (std::size_t j = 0; j < n; ++j) g[j] += coef * q[j * J + k];
        }
    };

    std::vector<std::vector<double>> verts;
    verts.emplace_back(n, 1.0 / static_cast<double>(n));
    {
        std::vector<double> v0;
        stratum_linear_min(lin, gamma, &v0);
        verts.push_back(std::move(v0));
    }

    std::vector<double> rho(n, 1.0 / static_cast<double>(n));
    std::vector<double> g(n);
    std::vector<double> weights;
    double gap = std::numeric_limits<double>::infinity();
    const int max_outer = 80;
    for (int outer = 0; outer < max_outer; ++outer) {
        // Restricted problem over conv(verts), in barycentric weights.
        const std::size_t m = verts.size();
        weights.resize(m, 0.0);  // previous weights carry over, new vertex at 0
        std::vector<double> rho_w(n);
        auto restricted = [&](const std::vector<double>& omega, std::vector<double>& gw) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < m; ++t) acc += omega[t] * verts[t][j];
                rho_w[j] = acc;
            }
            gradient(rho_w, g);
            for (std::size_t t = 0; t < m; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += g[j] * verts[t][j];
                gw[t] = acc;
            }
            return objective(rho_w);
        };
        if (outer == 0) {
            weights.assign(m, 1.0 / static_cast<double>(m));
        }
        minimize_over_simplex(weights, restricted, 1500, 1e-15);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < m; ++t) acc += weights[t] * verts[t][j];
            rho[j] = acc;
        }
        gradient(rho, g);
        std::vector<double> vnew;
        const double lmo = stratum_linear_min(std::span<const double>(g.data(), n), gamma, &vnew);
        double grho = 0.0;
        for (std::size_t j = 0; j < n; ++j) grho += g[j] * rho[j];
        gap = grho - lmo;
        const double scale = 1.0 + std::abs(objective(rho));
        if (gap <= 1e-12 * scale) break;
        bool known = false;
        for (const auto& v : verts) {
            double diff = 0.0;
            for (std::size_t j = 0; j < n; ++j) diff = std::max(diff, std::abs(v[j] - vnew[j]));
            if (diff < 1e-14) {
                known = true;
                break;
            }
        }
        if (!known) {
            verts.push_back(std::move(vnew));
            continue;
        }
        // The oracle repeats a known vertex: polish the current hull point by
        // direct Frank-Wolfe steps toward it until the gap certifies.
        bool progressed = false;
        for (int fw = 0; fw < 200; ++fw) {
            double denom = 0.0;
            std::vector<double> dir(n);
            for (std::size_t j = 0; j < n; ++j) dir[j] = vnew[j] - rho[j];
            // Exact step for a quadratic along dir.
            double lin_term = 0.0;
            for (std::size_t j = 0; j < n; ++j) lin_term += g[j] * dir[j];
            double quad_term = 0.0;
            for (std::size_t k = 0; k < J; ++k) {
                double dd = 0.0;
                for (std::size_t j = 0; j < n; ++j) dd += q[j * J + k] * dir[j];
                quad_term += beta[k] * dd * dd;
            }
            denom = 2.0 * quad_term;
            double step = denom > 0.0 ? std::clamp(-lin_term / denom, 0.0, 1.0)
                                      : (lin_term < 0.0 ? 1.0 : 0.0);
            if (step <= 0.0) break;
            for (std::size_t j = 0; j < n; ++j) rho[j] += step * dir[j];
            gradient(rho, g);
            const double lmo2 =
                stratum_linear_min(std::span<const double>(g.data(), n), gamma, &vnew);
            double grho2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) grho2 += g[j] * rho[j];
            gap = grho2 - lmo2;
            progressed = true;
            if (gap <= 1e-12 * (1.0 + std::abs(objective(rho)))) break;
        }
        if (!progressed || gap <= 1e-12 * (1.0 + std::abs(objective(rho)))) break;
    }
    rho_out = rho;
    res.value = objective(rho);
    res.gap = std::max(0.0, gap);
    return res;
}

}  // namespace fdpsens
