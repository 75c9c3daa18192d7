#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace conelab {

/// Eigenvalue vector lambda(g^{-1} U). Order is whatever the producer gave;
/// operations needing lambda_1 <= ... <= lambda_n call sort_ascending().
using LambdaVec = std::vector<double>;

struct SortedLambda {
    LambdaVec values;
    /// values[i] == original[perm[i]]
    std::vector<std::size_t> perm;
};

/// Stable ascending sort; ties keep original index order.
SortedLambda sort_ascending(std::span<const double> lambda);

/// Exact binomial coefficient C(n, k) in integer arithmetic.
std::uint64_t binomial(int n, int k);

// ---------------------------------------------------------------------------
// Elementary symmetric functions
// ---------------------------------------------------------------------------

/// sigma_k(lambda) via the coefficients of prod_i (t + lambda_i). sigma_0 = 1.
double sigma(std::span<const double> lambda, int k);

/// All of sigma_0 .. sigma_kmax in one pass.
std::vector<double> sigma_all(std::span<const double> lambda, int kmax);

/// d sigma_k / d lambda_i = sigma_{k-1}(lambda with entry i removed).
LambdaVec sigma_grad(std::span<const double> lambda, int k);

/// d^2 sigma_k / d lambda_i d lambda_j = sigma_{k-2}(lambda without i, j), zero diagonal.
Eigen::MatrixXd sigma_hess(std::span<const double> lambda, int k);

/// Reference value by enumeration of index subsets. Test oracle, n <= 20.
double sigma_by_subsets(std::span<const double> lambda, int k);

// ---------------------------------------------------------------------------
// Operators f(lambda)
// ---------------------------------------------------------------------------

enum class OperatorKind { Sigma, SigmaRatio, PComposed, Transformed };

/// A symmetric concave operator on its natural cone:
///
///   Sigma(k):          N * sigma_k^p
///   SigmaRatio(k, l):  N * (sigma_k / sigma_l)^p
///   PComposed(base):   base(P_{n-1} lambda), (P_{n-1} lambda)_i = sum_{j != i} lambda_j
///   Transformed(base, rho): base(mu(lambda)),
///                      mu_i = (sum_j lambda_j - rho lambda_i) / (n - rho)
///
/// N = 1 / f_unnormalized(1,...,1) when `normalized` is set.
struct OperatorSpec {
    OperatorKind kind = OperatorKind::Sigma;
    int n = 3;
    int k = 1;
    int l = 0;
    double power = 1.0;
    bool normalized = false;
    double rho = 0.0;
    std::shared_ptr<const OperatorSpec> base;

    static OperatorSpec sigma(int n, int k, double power = 1.0, bool normalized = false);
    /// Normalized (sigma_k / C(n,k))^{1/k}, homogeneous of degree one.
    static OperatorSpec sigma_root(int n, int k);
    static OperatorSpec sigma_ratio(int n, int k, int l, double power = 1.0, bool normalized = false);
    static OperatorSpec p_composed(const OperatorSpec& base, bool normalized = false);
    static OperatorSpec transformed(const OperatorSpec& base, double rho);

    /// Degree of homogeneity: f(t lambda) = t^homogeneity f(lambda).
    double homogeneity() const;
    /// Human-readable tag such as "sigma_ratio(2,1)^1".
    std::string describe() const;
};

/// Reason lambda is outside the natural cone of `op`, or nullopt if inside.
/// Membership is sigma_j(x) > margin * |x|_inf^j, j = 1..k, evaluated on
/// the point the underlying sigma-operator sees.
std::optional<std::string> natural_cone_violation(const OperatorSpec& op, std::span<const double> lambda,
                                                  double margin = 1e-12);

double f_eval(const OperatorSpec& op, std::span<const double> lambda);
LambdaVec f_grad(const OperatorSpec& op, std::span<const double> lambda);

enum class HessianPath { Analytic, FiniteDifference };

struct HessianResult {
    Eigen::MatrixXd matrix;
    HessianPath path = HessianPath::Analytic;
    /// Step used by the finite-difference path, 0 for the analytic path.
    double step = 0.0;
};

/// Analytic Hessian for every listed kind.
HessianResult f_hess(const OperatorSpec& op, std::span<const double> lambda);
/// Central second differences with h = 1e-5 * max(1, |lambda|_inf).
HessianResult f_hess_fd(const OperatorSpec& op, std::span<const double> lambda);

/// (sigma_k/C(n,k))^{1/k} <= (sigma_l/C(n,l))^{1/l} up to 1e-12 relative.
bool maclaurin_check(std::span<const double> lambda, int k, int l);

/// sum_i lambda_i >= n f(lambda) - 1e-10 for a normalized degree-one operator.
bool trace_lower_bound_check(const OperatorSpec& op, std::span<const double> lambda);

}  // namespace conelab
