#pragma once

#include "conelab/cone.hpp"
#include "conelab/symfunc.hpp"
#include "conelab/transform.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace conelab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Value, gradient and Hessian of a scalar function at a point.
struct Jet {
    double value = 0.0;
    Vec grad;
    Mat hess;

    static Jet zero(int n);
};

using ScalarField = std::function<Jet(const Vec&)>;
using TensorField = std::function<Mat(const Vec&)>;

Jet jet_add(const Jet& a, const Jet& b);
/// Jet of exp(N v).
Jet jet_exp(const Jet& v, double N);

// ---------------------------------------------------------------------------
// Metrics: g = e^{2 u0} delta with u0 = 0 (Euclidean), u0 = log(2/(1-|x|^2)) (hyperbolic ball)
// or user supplied.
// ---------------------------------------------------------------------------

enum class MetricKind { Euclidean, ConformalToEuclidean, HyperbolicBall };

struct MetricSpec {
    MetricKind kind = MetricKind::Euclidean;
    int n = 3;
    ScalarField u0;

    static MetricSpec euclidean(int n);
    static MetricSpec hyperbolic_ball(int n);
    static MetricSpec conformal(int n, ScalarField u0);

    Jet factor(const Vec& x) const;
    Mat at(const Vec& x) const;
    std::string describe() const;
};

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

enum class DomainKind { Ball, Annulus, BoxMinusBalls };

struct Hole {
    Vec center;
    double radius = 0.0;
};

struct DomainSpec {
    DomainKind kind = DomainKind::Ball;
    int n = 3;
    double outer = 1.0;  ///< R for Ball/Annulus
    double inner = 0.0;  ///< r0 for Annulus
    Vec lo, hi;          ///< box for BoxMinusBalls
    std::vector<Hole> holes;

    static DomainSpec ball(int n, double R);
    static DomainSpec annulus(int n, double r0, double R);
    static DomainSpec box_minus_balls(Vec lo, Vec hi, std::vector<Hole> holes);

    /// Exact distance to the boundary; negative outside.
    double sigma(const Vec& x) const;
    bool contains(const Vec& x) const { return sigma(x) > 0.0; }
    /// Distance from an interior x to the boundary along the unit vector d (infinite if never hit).
    double ray_exit(const Vec& x, const Vec& d) const;
    /// Axis-aligned bounding box.
    Vec box_lo() const;
    Vec box_hi() const;
    std::string describe() const;
};

// ---------------------------------------------------------------------------
// Curvature kernels
// ---------------------------------------------------------------------------

/// Flat-base conformal formula for g = e^{2w} delta:
///   A^{tau,alpha} = alpha(tau-1)/(n-2) Lap w delta - alpha D^2 w + alpha(tau-2)/2 |Dw|^2 delta + alpha Dw Dw^T
Mat flat_conformal_a(const Jet& w, int alpha, double tau);

/// A_g^{tau,alpha} of a model metric.
TensorField a_tau_alpha(const MetricSpec& metric, int alpha, double tau);

/// A_{g~}^{tau,alpha} for g~ = e^{2u} g.
TensorField conformal_a_tau_alpha(const ScalarField& u, const MetricSpec& base, int alpha, double tau);

/// Ric = (n-2) A + R/(2(n-1)) g, R = 2(n-1) tr_g A, from the Schouten tensor A.
Mat ricci_from_schouten(const Mat& schouten, const Mat& g);
Mat einstein_from_schouten(const Mat& schouten, const Mat& g);

/// The background term A = (n-2)/(alpha(tau-1)) A_g^{tau,alpha}.
TensorField background_term(const MetricSpec& metric, const ConformalParams& params);

/// V[u] = Lap_g u g - rho Hess_g u + gamma |du|_g^2 g + rho du du^T + A,
/// with the Levi-Civita connection of the conformally flat base written out.
Mat V_of_u(const Jet& u, const Vec& x, const MetricSpec& base, const ConformalParams& params, const Mat& A);
TensorField V_of_u(const ScalarField& u, const MetricSpec& base, const ConformalParams& params, const TensorField& A);

/// W[u] = D^2 u + 1/2 |Du|^2 I - Du Du^T (Euclidean base, flat A).
Mat W_of_u(const Jet& u);

// ---------------------------------------------------------------------------
// Eigenvalues
// ---------------------------------------------------------------------------

struct SymEigen {
    LambdaVec values;  ///< ascending
    Mat vectors;       ///< columns, orthonormal in the g inner product
};

/// Cyclic Jacobi on a symmetric matrix, fixed sweep order; ascending output.
SymEigen jacobi_eigen(const Mat& a);

/// Generalized eigenvalues lambda(g^{-1} U), ascending. Throws MetricError if g is not positive definite.
LambdaVec eigenvalues_wrt(const Mat& g, const Mat& U);
SymEigen eigen_wrt(const Mat& g, const Mat& U);

// ---------------------------------------------------------------------------
// Admissible metrics u = e^{N v}
// ---------------------------------------------------------------------------

/// Critical-point-free function for each domain kind.
ScalarField morse_function(const DomainSpec& domain);

struct MorseResult {
    double N = 0.0;
    ScalarField u;
    /// min over points of min_j sigma_j(lambda) / |lambda|_inf^j
    double margin = 0.0;
    double min_grad_v = 0.0;
    std::size_t points = 0;
    bool certified = false;
};

/// Smallest N in {1, 2, 4, ..., 2^20} with lambda(g^{-1} V[e^{N v}]) in the cone at every point.
MorseResult morse_admissible(const DomainSpec& domain, const ConformalParams& params, const ConeSpec& cone,
                             const std::vector<Vec>& points, const MetricSpec& metric);
MorseResult morse_admissible(const DomainSpec& domain, const ConformalParams& params, const ConeSpec& cone,
                             double spacing = 0.1);

/// Interior grid points of the domain's bounding box at the given spacing.
std::vector<Vec> sample_points(const DomainSpec& domain, double spacing);

/// Relative interior margin min_j sigma_j(lambda) / |lambda|_inf^j for a Garding-type test
/// run through the cone's natural map.
double cone_margin(const ConeSpec& cone, const LambdaVec& lambda);

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

struct Grid3 {
    int nx = 0, ny = 0, nz = 0;
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    double h = 1.0;

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny + j) * nx + i;
    }
    Eigen::Vector3d point(int i, int j, int k) const { return lo + h * Eigen::Vector3d(i, j, k); }
    /// Cube [lo, lo + (cells) h]^3 with cells + 1 nodes per axis.
    static Grid3 cube(double lo, double hi, int cells);
};

struct GridField {
    Grid3 grid;
    std::string name;
    std::vector<double> values;
};

/// Gradient and Hessian at node (i,j,k): centered differences, second-order one-sided at the box faces.
/// Throws ResolutionError with fewer than 5 nodes per axis.
Jet grid_jet(const GridField& u, int i, int j, int k);

/// A_{g~}^{tau,alpha} for g~ = e^{2u} delta from grid values.
Mat conformal_a_tau_alpha_grid(const GridField& u, int i, int j, int k, int alpha, double tau);

// ---------------------------------------------------------------------------
// Loewner-Nirenberg closed form on the unit ball:
//   u*(r) = log(2 sqrt(n(n-1)) / (1 - r^2)),
//   2(n-1) Lap u + (n-1)(n-2) |Du|^2 - R_g = e^{2u}, R_g = 0.
// ---------------------------------------------------------------------------

double ln_closed_form(int n, double r);
double ln_closed_form_d1(int n, double r);
double ln_closed_form_d2(int n, double r);
/// Residual of the scalar equation for radial data (u, u', u''); r = 0 uses u'/r -> u''.
double ln_scalar_residual(int n, double u, double du, double d2u, double r);

}  // namespace conelab
