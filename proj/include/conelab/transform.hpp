#pragma once

#include "conelab/cone.hpp"
#include "conelab/symfunc.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace conelab {

/// The linear change of variables
///   mu_i     = (sum_j lambda_j - rho lambda_i) / (n - rho)
///   lambda_i = (sum_j mu_j - (n - rho) mu_i) / rho
/// together with the full-uniform-ellipticity constant theta of the pulled-back operator.
struct TransformParams {
    int n = 3;
    double rho = 1.0;
    int kappa = 0;
    double vartheta = 0.0;
    double theta = 0.0;
};

LambdaVec mu_from_lambda(std::span<const double> lambda, double rho);
LambdaVec lambda_from_mu(std::span<const double> mu, double rho);

/// Upper limit 1 / (1 - kappa vartheta) for rho (infinite when kappa vartheta >= 1).
double rho_upper_limit(const ConeConstants& constants);

/// Validates rho != 0, rho < 1/(1 - kappa vartheta) and fills theta.
TransformParams make_transform(const ConeConstants& constants, int n, double rho);

/// rho < 0: 1/(n - rho); rho > 0: (1 - rho(1 - kappa vartheta)) / (n - rho).
double theta_constant(const ConeConstants& constants, int n, double rho);
double theta_constant(const ConeSpec& cone, const TransformParams& p);

/// Derived constants of the conformal equation for A_g^{tau,alpha}:
///   rho = (n-2)/(tau-1), gamma = (tau-2)(n-2)/(2(tau-1)),
///   rhs_const = ((n-2)/(alpha(n tau + 2 - 2n)))^varsigma   (transformed form),
///   v_rhs_const = ((n-2)/(alpha(tau-1)))^varsigma           (V[u] form),
///   rate = 1/2 log(alpha(n tau + 2 - 2n) / (2(n-2)))         (boundary blow-up constant for psi = 1).
struct ConformalParams {
    int alpha = 1;
    double tau = 3.0;
    int n = 3;
    double varsigma = 1.0;
    double rho = 0.0;
    double gamma = 0.0;
    double rhs_const = 0.0;
    double v_rhs_const = 0.0;
    double rate = 0.0;
    /// tau <= 0 (alpha = -1) or tau >= 2 (alpha = 1): gamma >= 0 and gamma + rho >= 0.
    bool construction_range = false;
    double theta = 0.0;

    double gamma_plus_rho() const { return gamma + rho; }
    /// alpha (n tau + 2 - 2n)
    double scaled_denominator() const { return alpha * (n * tau + 2.0 - 2.0 * n); }
};

/// Throws ParameterError naming the violated branch when
///   tau < 1 (alpha = -1)   or   tau > 1 + (n-2)(1 - kappa vartheta) (alpha = 1)
/// fails.
ConformalParams conformal_params(int alpha, double tau, int n, const ConeConstants& constants, double varsigma);
ConformalParams conformal_params(int alpha, double tau, int n, const ConeSpec& cone, double varsigma);

/// Same derived constants without the admissibility check. Used by experiments
/// that deliberately run outside the admissible range.
ConformalParams conformal_params_unchecked(int alpha, double tau, int n, double varsigma);

struct UniformReport {
    double theta = 0.0;
    /// min over samples and indices of f~_i / sum_j f~_j
    double min_ratio = 0.0;
    LambdaVec witness;
    std::size_t requested = 0;
    std::size_t feasible = 0;
    std::uint64_t seed = kDefaultSeed;
    bool passed = false;
};

/// Samples the transformed cone and checks f~_i >= theta sum_j f~_j - 1e-9.
UniformReport fully_uniform_check(const OperatorSpec& transformed_op, const ConeSpec& transformed_cone, double theta,
                                  std::size_t samples, std::uint64_t seed = kDefaultSeed, int threads = 0);

}  // namespace conelab
