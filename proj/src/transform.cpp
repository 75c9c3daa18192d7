#include "conelab/transform.hpp"

#include "conelab/errors.hpp"
#include "conelab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace conelab {

LambdaVec mu_from_lambda(std::span<const double> lambda, double rho) {
    const double s = std::accumulate(lambda.begin(), lambda.end(), 0.0);
    const double d = static_cast<double>(lambda.size()) - rho;
    LambdaVec mu(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) mu[i] = (s - rho * lambda[i]) / d;
    return mu;
}

LambdaVec lambda_from_mu(std::span<const double> mu, double rho) {
    const double s = std::accumulate(mu.begin(), mu.end(), 0.0);
    const double d = static_cast<double>(mu.size()) - rho;
    LambdaVec lambda(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) lambda[i] = (s - d * mu[i]) / rho;
    return lambda;
}

double rho_upper_limit(const ConeConstants& c) {
    const double kv = c.kappa * c.vartheta.value;
    if (kv >= 1.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (1.0 - kv);
}

double theta_constant(const ConeConstants& c, int n, double rho) {
    if (rho == 0.0 || !(rho < rho_upper_limit(c))) {
        std::ostringstream os;
        os << "rho=" << rho << " violates rho != 0 and rho < 1/(1 - kappa*vartheta) = " << rho_upper_limit(c);
        throw ParameterError(os.str());
    }
    if (rho < 0.0) return 1.0 / (n - rho);
    return (1.0 - rho * (1.0 - c.kappa * c.vartheta.value)) / (n - rho);
}

double theta_constant(const ConeSpec& cone, const TransformParams& p) {
    return theta_constant(cone_constants(cone), p.n, p.rho);
}

TransformParams make_transform(const ConeConstants& c, int n, double rho) {
    TransformParams p;
    p.n = n;
    p.rho = rho;
    p.kappa = c.kappa;
    p.vartheta = c.vartheta.value;
    p.theta = theta_constant(c, n, rho);
    return p;
}

ConformalParams conformal_params_unchecked(int alpha, double tau, int n, double varsigma) {
    if (alpha != 1 && alpha != -1) throw ParameterError("alpha must be +1 or -1");
    if (n < 3) throw ParameterError("conformal reduction needs n >= 3");
    if (tau == 1.0) throw ParameterError("tau = 1 makes rho undefined");
    if (!(varsigma > 0.0 && varsigma <= 1.0)) throw ParameterError("varsigma must lie in (0, 1]");
    ConformalParams p;
    p.alpha = alpha;
    p.tau = tau;
    p.n = n;
    p.varsigma = varsigma;
    p.rho = (n - 2.0) / (tau - 1.0);
    p.gamma = (tau - 2.0) * (n - 2.0) / (2.0 * (tau - 1.0));
    const double denom = alpha * (n * tau + 2.0 - 2.0 * n);
    p.rhs_const = std::pow((n - 2.0) / denom, varsigma);
    p.v_rhs_const = std::pow((n - 2.0) / (alpha * (tau - 1.0)), varsigma);
    p.rate = denom > 0.0 ? 0.5 * std::log(denom / (2.0 * (n - 2.0))) : std::numeric_limits<double>::quiet_NaN();
    p.construction_range = alpha == -1 ? tau <= 0.0 : tau >= 2.0;
    return p;
}

ConformalParams conformal_params(int alpha, double tau, int n, const ConeConstants& c, double varsigma) {
    ConformalParams p = conformal_params_unchecked(alpha, tau, n, varsigma);
    if (alpha == -1 && !(tau < 1.0)) {
        std::ostringstream os;
        os << "(alpha, tau) = (-1, " << tau << ") violates the alpha = -1 branch: tau < 1";
        throw ParameterError(os.str());
    }
    if (alpha == 1) {
        const double bound = 1.0 + (n - 2.0) * (1.0 - c.kappa * c.vartheta.value);
        if (!(tau > bound)) {
            std::ostringstream os;
            os << "(alpha, tau) = (1, " << tau << ") violates the alpha = 1 branch: tau > 1 + (n-2)(1 - kappa*vartheta) = "
               << bound;
            throw ParameterError(os.str());
        }
    }
    const double denom = p.scaled_denominator();
    if (!(denom > 0.0) || !((tau - 1.0) * (n * tau + 2.0 - 2.0 * n) > 0.0))
        throw ParameterError("sign conditions alpha(n tau + 2 - 2n) > 0, (tau-1)(n tau + 2 - 2n) > 0 fail");
    p.theta = theta_constant(c, n, p.rho);
    return p;
}

ConformalParams conformal_params(int alpha, double tau, int n, const ConeSpec& cone, double varsigma) {
    return conformal_params(alpha, tau, n, cone_constants(cone), varsigma);
}

UniformReport fully_uniform_check(const OperatorSpec& op, const ConeSpec& cone, double theta, std::size_t samples,
                                  std::uint64_t seed, int threads) {
    UniformReport rep;
    rep.theta = theta;
    rep.requested = samples;
    rep.seed = seed;

    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (samples + kChunk - 1) / kChunk;
    struct Partial {
        double min_ratio = std::numeric_limits<double>::infinity();
        LambdaVec witness;
        std::size_t feasible = 0;
    };
    std::vector<Partial> parts(chunks);
    parallel_chunks(
        chunks,
        [&](std::size_t c) {
            ConeSampler sampler(cone, mix_seed(seed, c));
            Partial& part = parts[c];
            const std::size_t end = std::min(samples, (c + 1) * kChunk);
            for (std::size_t s = c * kChunk; s < end; ++s) {
                auto lam = sampler.draw(static_cast<SampleFamily>(s % 3));
                if (!lam) continue;
                LambdaVec g;
                try {
                    g = f_grad(op, *lam);
                } catch (const FeasibilityError&) {
                    continue;
                }
                const double total = std::accumulate(g.begin(), g.end(), 0.0);
                if (!(total > 0.0)) continue;
                ++part.feasible;
                const double ratio = *std::min_element(g.begin(), g.end()) / total;
                if (ratio < part.min_ratio) {
                    part.min_ratio = ratio;
                    part.witness = *lam;
                }
            }
        },
        threads);

    rep.min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& part : parts) {
        rep.feasible += part.feasible;
        if (part.min_ratio < rep.min_ratio) {
            rep.min_ratio = part.min_ratio;
            rep.witness = part.witness;
        }
    }
    if (rep.feasible == 0) throw SamplingError("fully_uniform_check: no feasible samples");
    rep.passed = rep.min_ratio >= theta - 1e-9;
    return rep;
}

}  // namespace conelab
