#pragma once

#include "conelab/cone.hpp"
#include "conelab/geometry.hpp"
#include "conelab/symfunc.hpp"
#include "conelab/transform.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace conelab {

using RadialFunction = std::function<double(double)>;

struct RadialJet {
    double u = 0.0;
    double du = 0.0;
    double d2u = 0.0;
};
using RadialProfile = std::function<RadialJet(double)>;

/// Nodes in r. For a ball the first node is the center r = 0; otherwise both ends are boundary nodes.
struct RadialGrid {
    std::vector<double> r;
    bool has_center = false;

    std::size_t size() const { return r.size(); }

    /// Uniform nodes on [0, R] (ball) or [r0, R] (annulus).
    static RadialGrid uniform(const DomainSpec& domain, int cells);
    /// `nodes` nodes; spacing grows geometrically away from each boundary, starting at h_min,
    /// each cell being `ratio` times its outer neighbor, until the uniform interior spacing is reached.
    static RadialGrid graded(const DomainSpec& domain, int nodes, double h_min = 2e-5, double ratio = 0.95);
};

/// Radial problem f(lambda(V[u])) = v_rhs_const psi e^{2 varsigma u} on a Euclidean ball or annulus.
/// `op`/`cone` act on the eigenvalues of V[u]; the background term is given by its radial and
/// tangential eigenvalues.
struct RadialProblem {
    DomainSpec domain;
    ConformalParams params;
    OperatorSpec op;
    ConeSpec cone;
    RadialFunction psi;    ///< defaults to 1
    RadialFunction a_rad;  ///< defaults to 0
    RadialFunction a_tan;  ///< defaults to 0
    double phi_outer = 0.0;
    double phi_inner = 0.0;

    static RadialProblem make(const DomainSpec& domain, const ConformalParams& params, const OperatorSpec& op,
                              const ConeSpec& cone);
    double psi_at(double r) const { return psi ? psi(r) : 1.0; }
    double a_rad_at(double r) const { return a_rad ? a_rad(r) : 0.0; }
    double a_tan_at(double r) const { return a_tan ? a_tan(r) : 0.0; }
    /// Distance to the boundary.
    double sigma(double r) const;
    std::string describe() const;
};

/// Eigenvalues of V[u] for radial u: (radial, tangential x (n-1)).
///   radial:     (1 - rho) u'' + (n-1) u'/r + (gamma + rho) u'^2 + A_rad
///   tangential: u'' + (n-1-rho) u'/r + gamma u'^2 + A_tan
/// At r = 0 (balls only) u'/r is replaced by u''. Throws DomainError for r = 0 on an annulus.
LambdaVec radial_reduce(const RadialProblem& problem, double u, double du, double d2u, double r);

/// psi := f(lambda(V[u*])) e^{-2 varsigma u*} / v_rhs_const, so that u* solves the problem.
RadialFunction manufactured_psi(const RadialProblem& problem, const RadialProfile& exact);

struct RadialSolveOptions {
    /// Converged when every row satisfies |R_i| <= tol + rounding_factor * eps * sum_j |J_ij u_j|;
    /// the second term is the rounding level of the difference stencil.
    double tol = 1e-10;
    double rounding_factor = 16.0;
    int max_iter = 200;
    int max_halvings = 40;
    double armijo = 1e-4;
    /// Accepted iterates keep min_j sigma_j(lambda)/|lambda|^j above this floor at every interior node.
    double margin_floor = 0.0;
};

struct RadialSolution {
    std::vector<double> r;
    std::vector<double> u;
    /// Log-residual infinity norm before each Newton step and after the last one.
    std::vector<double> history;
    /// Accepted damping factor per step.
    std::vector<double> steps;
    /// Cone margin per node (NaN at Dirichlet nodes).
    std::vector<double> margins;
    int k = 0;
    int iterations = 0;
    double residual = 0.0;
    double min_margin = 0.0;
};

/// Nodal log residual log f(lambda_i) - 2 varsigma u_i - log(C psi_i); Dirichlet rows u_i - phi.
/// Throws FeasibilityError naming the node when some lambda_i leaves the cone.
std::vector<double> radial_residual(const RadialProblem& problem, const RadialGrid& grid, const std::vector<double>& u);

/// lambda(V[u]) at every interior node of the grid from the difference stencil.
std::vector<LambdaVec> radial_lambdas(const RadialProblem& problem, const RadialGrid& grid,
                                      const std::vector<double>& u);

/// Admissible subsolution u = c r^2/2 + b: c doubled from 1 until every node is admissible,
/// b the largest shift with f(lambda_i) >= C psi_i e^{2 varsigma u_i} and u <= phi on the boundary.
struct AdmissibleStart {
    std::vector<double> u;
    double c = 0.0;
    double b = 0.0;
};
AdmissibleStart admissible_start(const RadialProblem& problem, const RadialGrid& grid);

/// Damped Newton. Default start: the admissible subsolution.
RadialSolution solve_finite(const RadialProblem& problem, const RadialGrid& grid, const RadialSolveOptions& options = {},
                            const std::vector<double>* start = nullptr);

/// a posteriori C^0 bracket from an admissible function w:
///   min{inf_bdry(phi - w), A1 - sup w} <= u - w <= max{sup_bdry(phi - w), A2 - inf w},
/// C psi(x) e^{2 varsigma A1} <= inf f(lambda[w]) for all x,  C psi(x) e^{2 varsigma A2} >= sup f(lambda[w]).
struct C0Bracket {
    double lower = 0.0;
    double upper = 0.0;
    double min_diff = 0.0;
    double max_diff = 0.0;
    bool holds = false;
};
C0Bracket c0_bracket(const RadialProblem& problem, const RadialGrid& grid, const std::vector<double>& w,
                     const RadialSolution& solution);

struct InfiniteOptions {
    int K = 10;
    /// Boundary data epsilon log k; 0 selects 1 when (gamma,...,gamma,gamma+rho+1) lies in the cone.
    double epsilon = 0.0;
    /// Nodes whose extrapolated value moves by less than this between the last two Neville orders count as settled.
    double settle_tol = 1e-3;
    int extrapolation_points = 4;
    double monotone_tol = 1e-9;
    /// Added to epsilon log k on the outer / inner boundary.
    double outer_shift = 0.0;
    double inner_shift = 0.0;
    RadialSolveOptions solve;
};

struct InfiniteResult {
    std::vector<int> ks;
    std::vector<RadialSolution> sequence;
    std::vector<double> r;
    std::vector<double> limit;
    std::vector<double> settle_error;
    std::vector<char> settled;
    /// Settled nodes form [settled_lo, settled_hi] in r (a ball starts at 0).
    double settled_lo = 0.0;
    double settled_hi = 0.0;
    double epsilon = 1.0;
    bool structure_ok = false;
    /// min over consecutive pairs and nodes of u^(2k) - u^(k)
    double min_increment = 0.0;
};

/// Increasing family u^(k), k = 1, 2, 4, ..., 2^K, boundary value epsilon log k (plus the shifts), warm started;
/// the phi fields of the problem are ignored.
/// Neville extrapolation in 1/k gives the limit. Throws SchemeError if monotonicity fails.
InfiniteResult solve_infinite(const RadialProblem& problem, const RadialGrid& grid, const InfiniteOptions& options = {});

enum class BoundaryComponent { Outer, Inner };

struct RateEstimate {
    BoundaryComponent component = BoundaryComponent::Outer;
    double estimate = 0.0;
    /// max - min over the band estimates
    double spread = 0.0;
    std::vector<std::pair<double, double>> bands;
    std::vector<double> band_estimates;
    /// 1/2 log(c f(1) / psi) on the component, c = alpha(n tau + 2 - 2n)/(2(n-2))
    double theoretical = 0.0;
    /// [1/2 log(c f(1)/sup psi), 1/2 log(c f(1)/inf psi)] over the boundary
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
};

/// Bands [0.03, 0.3] L, [0.03, 0.2] L, [0.04, 0.25] L, [0.05, 0.3] L with L = R (ball) or half the width (annulus).
std::vector<std::pair<double, double>> default_rate_bands(const DomainSpec& domain);

/// 1/2 log(alpha(n tau + 2 - 2n) f(1,...,1) / (2(n-2) psi_b)).
double theoretical_rate(const RadialProblem& problem, double psi_boundary);

/// Fits u_inf + log sigma = a + b sigma + c sigma^2 on each band and reports the median intercept.
/// Empty `bands` selects default_rate_bands. Throws RateUnavailableError when a band leaves the
/// settled region or varsigma != 1.
RateEstimate asymptotic_rate(const RadialProblem& problem, const InfiniteResult& result,
                             std::vector<std::pair<double, double>> bands = {},
                             BoundaryComponent component = BoundaryComponent::Outer);

// ---------------------------------------------------------------------------
// Barriers on the collar sigma < delta of a ball
// ---------------------------------------------------------------------------

enum class BarrierKind { UpperFinite, LowerFinite, InfiniteLower };

/// UpperFinite:   eps log(1 + sigma/delta^2) + phi
/// LowerFinite:   eps log(delta^2/(k sigma + delta^2)) + phi
/// InfiniteLower: log(k/(k sigma + 1)) + 1/2 log((1-eps)^2 c f(1) / (sup psi + eps)) + 1/(sigma+delta) - 1/delta
struct BarrierSpec {
    BarrierKind kind = BarrierKind::UpperFinite;
    double epsilon = 0.1;
    double delta = 0.1;
    double k = 1.0;
    double phi = 0.0;
    double constant = 0.0;  ///< the 1/2 log term of InfiniteLower

    static BarrierSpec upper(double eps, double delta, double phi);
    static BarrierSpec lower(double eps, double delta, double phi, double k = 1.0);
    static BarrierSpec infinite_lower(const RadialProblem& problem, double eps, double delta, double k);

    /// Value and sigma-derivatives.
    RadialJet in_sigma(double sigma) const;
    std::string describe() const;
};

struct BarrierReport {
    BarrierSpec spec;
    std::size_t checked = 0;
    std::vector<std::size_t> violations;
    double worst = 0.0;
    bool passed = false;
};

/// Sandwich check u <= w (upper) or u >= w (lower) at every grid node with sigma < delta.
/// For InfiniteLower, checks f(lambda(V[h])) >= C psi e^{2 varsigma h} at `quadrature` collar points instead.
BarrierReport barrier_check(const RadialProblem& problem, const RadialSolution& solution, const BarrierSpec& spec,
                            int quadrature = 64);
BarrierReport subsolution_check(const RadialProblem& problem, const BarrierSpec& spec, int quadrature = 64);

struct BarrierSearch {
    std::vector<BarrierReport> reports;
    std::optional<std::pair<double, double>> verified;  ///< first (eps, delta) passing both finite barriers
};

inline const std::vector<double>& barrier_epsilons() {
    static const std::vector<double> v{0.01, 0.05, 0.1, 0.5, 1.0};
    return v;
}
inline const std::vector<double>& barrier_deltas() {
    static const std::vector<double> v{0.2, 0.1, 0.05, 0.025};
    return v;
}

BarrierSearch barrier_search(const RadialProblem& problem, const RadialSolution& solution);

// ---------------------------------------------------------------------------
// Comparison and exhaustion
// ---------------------------------------------------------------------------

struct ComparisonReport {
    double scale = 1.1;
    /// max over nodes of u_scaled - u (should be <= 0)
    double max_violation = 0.0;
    bool passed = false;
};

/// Solves with psi and with scale * psi under equal boundary data; the larger psi must give the smaller solution.
ComparisonReport comparison_check(const RadialProblem& problem, const RadialGrid& grid, double scale = 1.1,
                                  double tol = 1e-9, const RadialSolveOptions& options = {});

struct ExhaustionResult {
    std::vector<double> radii;
    std::vector<InfiniteResult> solutions;
    /// max over consecutive radii and shared settled points of u_{k+1} - u_k
    double max_increase = 0.0;
    /// min over radii and nodes of u_k - lower
    double min_above_lower = 0.0;
    /// max |u_last - lower| on r <= compact_radius
    double compact_error = 0.0;
    double compact_radius = 0.0;
};

/// Infinite-boundary solves on balls of the given increasing radii (psi defined on the largest one).
/// K is raised per radius until epsilon log 2^K exceeds `lower` on the boundary by 1.
/// Checks decrease on overlaps and the lower bound by `lower`.
ExhaustionResult exhaustion_solve(const RadialProblem& problem, const std::vector<double>& radii,
                                  const RadialProfile& lower, int nodes, double compact_radius,
                                  const InfiniteOptions& options = {});

/// Cubic Lagrange interpolation of nodal data.
double interpolate(const std::vector<double>& r, const std::vector<double>& u, double x);

}  // namespace conelab
