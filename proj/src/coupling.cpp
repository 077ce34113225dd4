#include "mfg/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mfg {

CouplingSpec make_congestion_coupling(const Plane& potential)
{
    CouplingSpec c;
    c.potential = potential;
    c.running_cost = [potential](int i, int j, double m) { return m * m - potential(i, j); };
    c.running_cost_integral = [potential](int i, int j, double m) {
        return m * m * m / 3.0 - potential(i, j) * m;
    };
    c.running_cost_derivative = [](int, int, double m) { return 2.0 * m; };
    c.terminal_cost = [](int, int, double) { return 0.0; };
    c.terminal_cost_integral = [](int, int, double) { return 0.0; };
    c.terminal_cost_derivative = [](int, int, double) { return 0.0; };
    return c;
}

Plane sincos_potential(const GridSpec& grid)
{
    const int n = grid.n_space();
    const double two_pi = 2.0 * std::numbers::pi;
    Plane out(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double x = i * grid.h();
            const double y = j * grid.h();
            out(i, j) = std::sin(two_pi * y) + std::sin(two_pi * x) + std::cos(two_pi * x);
        }
    }
    return out;
}

CouplingSpec make_free_coupling(const GridSpec& grid)
{
    CouplingSpec c;
    c.potential = Plane(grid.n_space());
    auto zero = [](int, int, double) { return 0.0; };
    c.running_cost = zero;
    c.running_cost_integral = zero;
    c.running_cost_derivative = zero;
    c.terminal_cost = zero;
    c.terminal_cost_integral = zero;
    c.terminal_cost_derivative = zero;
    return c;
}

void check_coupling(const CouplingSpec& coupling, const GridSpec& grid, double m_max, int samples)
{
    if (!coupling.running_cost || !coupling.running_cost_integral || !coupling.terminal_cost ||
        !coupling.terminal_cost_integral)
        throw std::invalid_argument("coupling: f, F, g and G must all be provided");
    const int n = grid.n_space();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (coupling.running_cost_integral(i, j, 0.0) != 0.0 ||
                coupling.terminal_cost_integral(i, j, 0.0) != 0.0)
                throw std::invalid_argument("coupling: F(x,0) and G(x,0) must vanish");
            double prev_f = coupling.running_cost(i, j, 0.0);
            double prev_g = coupling.terminal_cost(i, j, 0.0);
            for (int s = 1; s <= samples; ++s) {
                const double m = m_max * s / samples;
                const double f = coupling.running_cost(i, j, m);
                const double g = coupling.terminal_cost(i, j, m);
                if (f < prev_f || g < prev_g) {
                    std::ostringstream msg;
                    msg << "coupling: cost decreases in m at grid point (" << i << ", " << j
                        << "), m = " << m;
                    throw std::invalid_argument(msg.str());
                }
                prev_f = f;
                prev_g = g;
            }
        }
    }
}

Vec4 project_K(const Vec4& v)
{
    return {std::max(v[0], 0.0), std::min(v[1], 0.0), std::max(v[2], 0.0), std::min(v[3], 0.0)};
}

bool in_K(const Vec4& v) { return v[0] >= 0.0 && v[1] <= 0.0 && v[2] >= 0.0 && v[3] <= 0.0; }

double norm(const Vec4& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]); }

double bhat(double m, const Vec4& w, double q)
{
    const double wn = norm(w);
    if (m > 0.0 && in_K(w))
        return std::pow(wn, q) / (q * std::pow(m, q - 1.0));
    if (m == 0.0 && wn == 0.0)
        return 0.0;
    return infinite_cost;
}

double eval_objective(const DensityField& m, const FluxField& w, const CouplingSpec& coupling,
                      const GridSpec& grid)
{
    if (m.slices() != grid.n_time() + 1 || w.slices() != grid.n_time() ||
        m.n_space() != grid.n_space() || w.n_space() != grid.n_space())
        throw std::invalid_argument("eval_objective: field shapes do not match grid");
    const int n = grid.n_space();
    const int nt = grid.n_time();
    const double q = grid.exponent();
    double total = 0.0;
    for (int k = 1; k <= nt; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double mk = m(k, i, j);
                if (mk < 0.0)
                    return infinite_cost;
                const Vec4 wk{w(k - 1, i, j, 0), w(k - 1, i, j, 1), w(k - 1, i, j, 2),
                              w(k - 1, i, j, 3)};
                const double b = bhat(mk, wk, q);
                if (b == infinite_cost)
                    return infinite_cost;
                total += b + coupling.running_cost_integral(i, j, mk);
            }
        }
    }
    double terminal = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            terminal += coupling.terminal_cost_integral(i, j, m(nt, i, j));
    return total + terminal / grid.dt();
}

namespace {

/// Length rho of the flux minimizer along P_K(w_bar) for fixed m > 0:
/// rho^(q-1)/m^(q-1) + (rho - p)/tau = 0 on [0, p].
double flux_length(double m, double p, double tau, double q)
{
    if (p == 0.0)
        return 0.0;
    if (q == 2.0)
        return m * p / (m + tau);
    double lo = 0.0, hi = p;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * p; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double g = std::pow(mid / m, q - 1.0) + (mid - p) / tau;
        (g > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

/// (1/q') (rho(m)/m)^q, the marginal flux cost removed from r(m).
double kinetic_term(double m, double p, double tau, double q)
{
    const double qp = q / (q - 1.0);
    if (q == 2.0) {
        const double s = p / (m + tau);
        return 0.5 * s * s;
    }
    if (m == 0.0)
        return std::pow(p / tau, qp) / qp;
    const double ratio = flux_length(m, p, tau, q) / m;
    return std::pow(ratio, q) / qp;
}

struct ScalarProblem {
    double m_bar;
    double p;
    double tau;
    double q;
    double inv_dt;
    int i;
    int j;
    bool terminal;
    const CouplingSpec* coupling;

    double value(double m) const
    {
        double r = -kinetic_term(m, p, tau, q) + coupling->running_cost(i, j, m) +
                   (m - m_bar) / tau;
        if (terminal)
            r += coupling->terminal_cost(i, j, m) * inv_dt;
        return r;
    }

    bool has_derivative() const
    {
        return q == 2.0 && static_cast<bool>(coupling->running_cost_derivative) &&
               (!terminal || static_cast<bool>(coupling->terminal_cost_derivative));
    }

    double derivative(double m) const
    {
        const double s = m + tau;
        double d = p * p / (s * s * s) + coupling->running_cost_derivative(i, j, m) + 1.0 / tau;
        if (terminal)
            d += coupling->terminal_cost_derivative(i, j, m) * inv_dt;
        return d;
    }
};

constexpr double root_tolerance = 1e-12;
constexpr int max_bisection_steps = 300;
constexpr int newton_steps = 5;

} // namespace

double prox_derivative(double m, double m_bar, const Vec4& w_bar, double tau, int i, int j,
                       bool is_terminal, const CouplingSpec& coupling, const GridSpec& grid)
{
    const ScalarProblem problem{m_bar, norm(project_K(w_bar)), tau, grid.exponent(),
                                1.0 / grid.dt(), i, j, is_terminal, &coupling};
    return problem.value(m);
}

ProxPointResult prox_point(double m_bar, const Vec4& w_bar, double tau, int i, int j,
                           bool is_terminal, const CouplingSpec& coupling, const GridSpec& grid)
{
    if (!(tau > 0.0))
        throw std::invalid_argument("prox_point: tau must be positive");
    const Vec4 pw = project_K(w_bar);
    const double p = norm(pw);
    const ScalarProblem problem{m_bar, p, tau, grid.exponent(), 1.0 / grid.dt(),
                                i, j, is_terminal, &coupling};

    ProxPointResult result;
    const double r0 = problem.value(0.0);
    if (r0 >= 0.0) {
        result.converged = true;
        return result;
    }

    // r(m) >= r(0) + m / tau, so this upper end already has r > 0; grow only as a safeguard.
    double lo = 0.0;
    double hi = tau * (std::abs(r0) + 1.0);
    int iterations = 0;
    while (problem.value(hi) <= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++iterations > 200 || !std::isfinite(hi))
            throw std::runtime_error("prox_point: failed to bracket the root");
    }

    const bool newton = problem.has_derivative();
    const double width_target = newton ? 1e-9 : 0.0;
    for (int it = 0; it < max_bisection_steps; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        ++iterations;
        const double rm = problem.value(mid);
        if (rm == 0.0) {
            lo = hi = mid;
            break;
        }
        (rm > 0.0 ? hi : lo) = mid;
        if (hi - lo <= width_target * (1.0 + hi))
            break;
    }

    double m = 0.5 * (lo + hi);
    double rm = problem.value(m);
    if (newton) {
        for (int s = 0; s < newton_steps && std::abs(rm) > root_tolerance; ++s) {
            ++iterations;
            if (rm > 0.0)
                hi = m;
            else
                lo = m;
            double next = m - rm / problem.derivative(m);
            if (!(next > lo && next < hi))
                next = 0.5 * (lo + hi);
            m = next;
            rm = problem.value(m);
        }
    }

    // Large |P| or steep couplings can leave |r| above the absolute tolerance even at the
    // closest double; finish by bisecting down to adjacent floating-point numbers.
    while (std::abs(rm) > root_tolerance) {
        (rm > 0.0 ? hi : lo) = m;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;
        ++iterations;
        m = mid;
        rm = problem.value(m);
    }

    const bool collapsed = (hi - lo) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + hi);
    const bool certified = std::isfinite(rm) && (std::abs(rm) <= root_tolerance || collapsed);
    if (!certified) {
        std::ostringstream msg;
        msg << "prox_point: root-finder did not converge at (" << i << ", " << j
            << "), residual " << rm;
        throw std::runtime_error(msg.str());
    }

    result.m = m;
    result.iterations = iterations;
    result.converged = true;
    if (p > 0.0) {
        const double scale = flux_length(m, p, tau, grid.exponent()) / p;
        for (int c = 0; c < 4; ++c)
            result.w[c] = scale * pw[c];
    }
    return result;
}

void prox_phi(DensityField& m, FluxField& w, double tau, const CouplingSpec& coupling,
              const GridSpec& grid)
{
    if (m.slices() != grid.n_time() + 1 || w.slices() != grid.n_time() ||
        m.n_space() != grid.n_space() || w.n_space() != grid.n_space())
        throw std::invalid_argument("prox_phi: field shapes do not match grid");
    const int n = grid.n_space();
    const int nt = grid.n_time();
    for (int k = 1; k <= nt; ++k) {
        double* mk = m.slice(k).data();
        double* wk = w.slice(k - 1).data();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const std::size_t p = static_cast<std::size_t>(i) * n + j;
                double* wp = wk + 4 * p;
                const Vec4 w_bar{wp[0], wp[1], wp[2], wp[3]};
                const ProxPointResult r =
                    prox_point(mk[p], w_bar, tau, i, j, k == nt, coupling, grid);
                mk[p] = r.m;
                for (int c = 0; c < 4; ++c)
                    wp[c] = r.w[c];
            }
        }
    }
}

} // namespace mfg
