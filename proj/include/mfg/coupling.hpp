#pragma once

#include <functional>
#include <limits>

#include "mfg/grid.hpp"

namespace mfg {

/// Local running and terminal costs.  Every evaluator receives the grid point
/// (i, j) and the density value m >= 0.
struct CouplingSpec {
    using Evaluator = std::function<double(int i, int j, double m)>;

    /// Potential H_bar sampled at the grid points (informational for builtin couplings).
    Plane potential;
    Evaluator running_cost;            ///< f(x, m), non-decreasing in m
    Evaluator running_cost_integral;   ///< F(x, m) = int_0^m f
    Evaluator terminal_cost;           ///< g(x, m), non-decreasing in m
    Evaluator terminal_cost_integral;  ///< G(x, m) = int_0^m g
    /// Optional d f / d m and d g / d m; used to polish prox roots with Newton steps.
    Evaluator running_cost_derivative;
    Evaluator terminal_cost_derivative;
};

/// f(x, m) = m^2 - H_bar(x), g = 0.
CouplingSpec make_congestion_coupling(const Plane& potential);
/// H_bar(x, y) = sin(2 pi y) + sin(2 pi x) + cos(2 pi x) at x_ij = (ih, jh).
Plane sincos_potential(const GridSpec& grid);
/// f = g = 0.
CouplingSpec make_free_coupling(const GridSpec& grid);

/// Samples f(x, .) and g(x, .) on [0, m_max] at every grid point and throws
/// std::invalid_argument if either decreases, or if F(x,0), G(x,0) != 0.
void check_coupling(const CouplingSpec& coupling, const GridSpec& grid, double m_max = 10.0,
                    int samples = 16);

inline constexpr double infinite_cost = std::numeric_limits<double>::infinity();

/// Orthogonal projection onto K = R+ x R- x R+ x R-.
Vec4 project_K(const Vec4& v);
bool in_K(const Vec4& v);
double norm(const Vec4& v);

/// |w|^q / (q m^(q-1)) if m > 0 and w in K, 0 at (0, 0), +inf otherwise.
double bhat(double m, const Vec4& w, double q);

/// B(m, w) + F(m): sum over k = 1..N_T of bhat(m^k, w^{k-1}) + F(x, m^k),
/// plus (1/dt) sum G(x, m^{N_T}).  Returns +inf outside the domain.
double eval_objective(const DensityField& m, const FluxField& w, const CouplingSpec& coupling,
                      const GridSpec& grid);

struct ProxPointResult {
    double m = 0.0;
    Vec4 w{0, 0, 0, 0};
    bool converged = false;
    int iterations = 0;
};

/// Minimizer over m >= 0, w in K of
///   bhat(m, w) + F(x, m) [+ G(x, m)/dt] + (|m - m_bar|^2 + |w - w_bar|^2) / (2 tau).
///
/// For fixed m the flux minimizer lies on the ray through P_K(w_bar); its
/// length rho(m) solves rho^(q-1)/m^(q-1) + (rho - |P_K(w_bar)|)/tau = 0
/// (closed form rho = m |P| / (m + tau) when q = 2).  The remaining scalar
/// optimality condition
///   r(m) = -(1/q') (rho/m)^q + f(x, m) [+ g(x, m)/dt] + (m - m_bar)/tau
/// is strictly increasing; if r(0) >= 0 the result is (0, 0), otherwise the
/// root is bracketed, bisected and polished with Newton.
/// Throws std::runtime_error if the root-finder fails to converge.
ProxPointResult prox_point(double m_bar, const Vec4& w_bar, double tau, int i, int j,
                           bool is_terminal, const CouplingSpec& coupling, const GridSpec& grid);

/// Scalar optimality function r(m) of prox_point, exposed for diagnostics and tests.
double prox_derivative(double m, double m_bar, const Vec4& w_bar, double tau, int i, int j,
                       bool is_terminal, const CouplingSpec& coupling, const GridSpec& grid);

/// Pointwise prox of tau * (B + F): (m^k, w^{k-1}) for k = 1..N_T, terminal at
/// k = N_T.  Slice m^0 carries no cost and is returned unchanged.
void prox_phi(DensityField& m, FluxField& w, double tau, const CouplingSpec& coupling,
              const GridSpec& grid);

} // namespace mfg
