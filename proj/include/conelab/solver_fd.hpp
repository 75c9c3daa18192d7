#pragma once

#include "conelab/cone.hpp"
#include "conelab/geometry.hpp"
#include "conelab/symfunc.hpp"
#include "conelab/transform.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace conelab {

using Point3 = Eigen::Vector3d;
using PointFunction = std::function<double(const Point3&)>;

/// The transformed equation f~(lambda(W[u])) = rhs_const psi e^{2 varsigma u} on a masked cube grid,
///   W[u] = D^2 u + 1/2 |Du|^2 I - Du Du^T,  f~ = f o mu_rho,  Gamma~ = mu_rho^{-1}(Gamma).
/// Boundary data phi is a function sampled at the exact boundary crossings of the stencil arms.
struct GridProblem {
    DomainSpec domain;
    double h = 0.125;
    ConformalParams params;
    OperatorSpec op;          ///< f on Gamma (V form)
    ConeSpec cone;            ///< Gamma
    OperatorSpec tilde_op;    ///< f~
    ConeSpec tilde_cone;      ///< Gamma~
    double rhs_const = 1.0;   ///< v_rhs_const / (n - rho)^{homogeneity}
    PointFunction psi;        ///< defaults to 1
    PointFunction phi;        ///< defaults to 0

    /// Builds the transformed pair with rho = params.rho. No admissibility check on (alpha, tau):
    /// conformal_params does that when wanted.
    static GridProblem make(const DomainSpec& domain, double h, const ConformalParams& params, const OperatorSpec& op,
                            const ConeSpec& cone);
    double psi_at(const Point3& x) const { return psi ? psi(x) : 1.0; }
    double phi_at(const Point3& x) const { return phi ? phi(x) : 0.0; }
    std::string describe() const;
};

/// Neighbor of an unknown along one stencil direction: another unknown (col >= 0) or a
/// boundary point (col = -1 - index), at distance len.
struct Arm {
    int col = 0;
    double len = 0.0;
};

/// Directions e0, e1, e2, e0+e1, e0-e1, e0+e2, e0-e2, e1+e2, e1-e2; arms [2d] (minus) and [2d+1] (plus).
inline constexpr int kFdDirections = 9;

/// Unknowns, boundary points and Shortley-Weller arms on a masked grid over the domain's bounding box.
struct FdDiscretization {
    Grid3 grid;
    std::vector<std::size_t> node_of;   ///< grid index of each unknown
    std::vector<int> unknown_of;        ///< per grid node: unknown index, -1 outside, -2 snapped to the boundary
    std::vector<Point3> bpoints;        ///< boundary points referenced by arms
    std::vector<std::array<Arm, 2 * kFdDirections>> arms;
    /// Nodes closer to the boundary than snap * h are treated as boundary points.
    double snap = 1e-2;

    std::size_t unknowns() const { return node_of.size(); }
    Point3 point(std::size_t unknown) const;
};

/// Throws ResolutionError when a hole is resolved by fewer than 4 cells across or the grid has fewer than 5 nodes per axis.
FdDiscretization discretize(const DomainSpec& domain, double h);

/// Per-node eigen-decomposition cache of W at the current iterate.
struct NodeCache {
    Eigen::Matrix3d Q = Eigen::Matrix3d::Identity();
    Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
    Eigen::Vector3d fgrad = Eigen::Vector3d::Zero();
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    double f = 0.0;
    double margin = 0.0;
};

struct NewtonState {
    const GridProblem* problem = nullptr;
    const FdDiscretization* disc = nullptr;
    Eigen::VectorXd u;
    Eigen::VectorXd bvalues;
    Eigen::VectorXd log_rhs;          ///< log(rhs_const psi) per unknown
    std::vector<NodeCache> cache;
    std::uint64_t version = 0;        ///< bumped by set_iterate
    std::uint64_t cache_version = ~0ull;
    int threads = 0;

    void set_iterate(const Eigen::VectorXd& u_new);
};

NewtonState make_state(const GridProblem& problem, const FdDiscretization& disc, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& bvalues, int threads = 0);

/// Boundary values phi at the discretization's boundary points.
Eigen::VectorXd boundary_values(const GridProblem& problem, const FdDiscretization& disc);

/// Nodewise f~(lambda(W)) - rhs_const psi e^{2 varsigma u}; refreshes the eigen cache.
/// Throws FeasibilityError with the unknown index when lambda(W) leaves Gamma~.
Eigen::VectorXd assemble_residual(NewtonState& state);

/// Discrete linearized operator applied to v: F^{ab} dW_ab[v] - 2 varsigma rhs_const psi e^{2 varsigma u} v,
/// F = Q diag(f~_i) Q^T from the cache. Throws std::logic_error when the cache is stale.
Eigen::VectorXd linearize_apply(const NewtonState& state, const Eigen::VectorXd& v);

/// max |(F(u + t v) - F(u))/t - L v| / max |L v| for a seeded random direction.
double gateaux_check(NewtonState& state, double t = 1e-6, std::uint64_t seed = kDefaultSeed);

struct FdSolveOptions {
    /// Per-node test |R_i| <= tol + rounding_factor * eps * (sum of |stencil term|) on the log residual
    /// log f~ - 2 varsigma u - log(C psi).
    double tol = 1e-9;
    double rounding_factor = 16.0;
    int max_iter = 60;
    int max_halvings = 40;
    double armijo = 1e-4;
    double krylov_tol = 1e-8;
    int krylov_max = 500;
    /// Gateaux check on every n-th accepted iterate (0 disables).
    int gateaux_every = 5;
    int threads = 0;
};

struct FdSolution {
    FdDiscretization disc;
    Eigen::VectorXd u;
    Eigen::VectorXd bvalues;
    Eigen::VectorXd log_rhs;
    std::vector<double> history;
    std::vector<double> steps;
    std::vector<int> krylov_iterations;
    std::vector<double> gateaux_errors;
    std::vector<double> continuation;  ///< homotopy parameters s that were solved
    std::string start_kind;
    double residual = 0.0;
    double min_margin = 0.0;
    int iterations = 0;

    /// Values on the full grid: NaN outside the domain, phi at snapped boundary nodes.
    GridField field(const GridProblem& problem, const std::string& name = "u") const;
};

/// Discretely admissible start: e^{N v} from morse_admissible, else c |x - x_c|^2 / 2.
struct FdStart {
    PointFunction u;
    std::string kind;
};
FdStart fd_admissible_start(const GridProblem& problem, const FdDiscretization& disc);

/// Damped Newton with BiCGSTAB inner solves. The start u0 solves its own discrete problem
/// (boundary values u0, log rhs = log f~(W_h[u0]) - 2 varsigma u0); the homotopy moves boundary values
/// and log rhs linearly to the target, halving the step in s on failure.
FdSolution newton_solve(const GridProblem& problem, const FdSolveOptions& options = {});
/// Same, starting from a previous solution on the same discretization.
FdSolution newton_solve_from(const GridProblem& problem, const FdSolution& previous, const FdSolveOptions& options = {});

/// psi := f~(lambda(W[u*])) e^{-2 varsigma u*} / rhs_const from an exact jet.
PointFunction fd_manufactured_psi(const GridProblem& problem, const std::function<Jet(const Vec&)>& exact);

// ---------------------------------------------------------------------------
// Obstruction experiment (exploratory)
// ---------------------------------------------------------------------------

struct ObstructionStage {
    int k = 1;
    bool converged = false;
    std::string failure;
    int iterations = 0;
    double max_u = 0.0;
    double min_margin = 0.0;
    /// max over all unknowns of u^(k) - u^(k/2) (NaN for the first stage)
    double increment = 0.0;
    /// same over unknowns at distance >= compact_distance from the boundary
    double compact_increment = 0.0;
};

struct ObstructionArm {
    std::string name;
    std::vector<ObstructionStage> stages;
    bool all_converged = false;
    /// compact increments strictly decrease over the last three stages
    bool settling = false;
};

struct ObstructionReport {
    std::string domain;
    int holes = 0;
    double h = 0.0;
    double compact_distance = 0.25;
    std::vector<ObstructionArm> arms;
};

/// n = 3, (alpha, tau) = (1, 2): rho = 1, gamma = 0. Arms: sigma_1/3 on Gamma_1 and sigma_3^{1/3} on Gamma_3,
/// each pulled back by mu_1; boundary data log k for k = 1, 2, ..., 2^K.
/// Failures of an arm (infeasibility, non-convergence, a failed linearization check) are recorded, not thrown.
ObstructionReport obstruction_experiment(const DomainSpec& domain, double h, int K, const FdSolveOptions& options = {},
                                         double compact_distance = 0.25);

}  // namespace conelab
