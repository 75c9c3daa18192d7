#include "doctest.h"

#include "conelab/cone.hpp"
#include "conelab/errors.hpp"
#include "conelab/transform.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <random>

using namespace conelab;

namespace {

void check_vec(const LambdaVec& a, const LambdaVec& b, double tol = 1e-14) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("mu and lambda maps") {
    check_vec(mu_from_lambda(LambdaVec{1, 1, 1}, 0.7), LambdaVec{1, 1, 1});
    check_vec(mu_from_lambda(LambdaVec{0, 0, 1}, 1.0), LambdaVec{0.5, 0.5, 0});
    check_vec(mu_from_lambda(LambdaVec{1, 2, 3}, -1.0), LambdaVec{7.0 / 4, 8.0 / 4, 9.0 / 4});
    check_vec(lambda_from_mu(LambdaVec{1, 1, 1}, 0.7), LambdaVec{1, 1, 1});
    check_vec(lambda_from_mu(LambdaVec{0.5, 0.5, 0}, 1.0), LambdaVec{0, 0, 1});

    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = 3 + rep % 4;
        const double rho = (rep % 2 ? 1.0 : -1.0) * (0.1 + 0.8 * std::abs(nd(rng)) / 3);
        LambdaVec x(n);
        for (auto& e : x) e = nd(rng);
        const auto mu = mu_from_lambda(x, rho);
        const auto back = lambda_from_mu(mu, rho);
        for (int i = 0; i < n; ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-13 * (1 + std::abs(x[i])));
        const double s1 = std::accumulate(x.begin(), x.end(), 0.0), s2 = std::accumulate(mu.begin(), mu.end(), 0.0);
        CHECK(std::abs(s1 - s2) <= 1e-14 * n * (1 + std::abs(s1)) * 4);
    }
}

TEST_CASE("theta constant") {
    const auto g1 = cone_constants(ConeSpec::garding(3, 1));
    const auto gn = cone_constants(ConeSpec::garding(3, 3));
    CHECK(theta_constant(gn, 3, -1.0) == doctest::Approx(0.25));
    CHECK(theta_constant(g1, 3, -1.0) == doctest::Approx(0.25));
    // vartheta of Gamma_1 is a lower bound approaching 1/3
    CHECK(theta_constant(g1, 3, 1.0) == doctest::Approx(1.0 / 3).epsilon(1e-4));
    CHECK(theta_constant(g1, 3, 1.0) <= 1.0 / 3);
    CHECK(theta_constant(gn, 3, 0.5) == doctest::Approx(0.2));
    CHECK_THROWS_AS(theta_constant(gn, 3, 0.0), ParameterError);
    CHECK_THROWS_AS(theta_constant(gn, 3, 1.0), ParameterError);
    const auto tp = make_transform(gn, 3, 0.5);
    CHECK(theta_constant(ConeSpec::garding(3, 3), tp) == doctest::Approx(tp.theta));
    CHECK(tp.rho < 3);
}

TEST_CASE("conformal params") {
    const auto g1 = cone_constants(ConeSpec::garding(3, 1));
    const auto p = conformal_params(1, 3.0, 3, g1, 1.0);
    CHECK(p.rho == doctest::Approx(0.5));
    CHECK(p.gamma == doctest::Approx(0.25));
    CHECK(p.gamma_plus_rho() == doctest::Approx(0.75));
    CHECK(p.rhs_const == doctest::Approx(0.2));
    const auto p05 = conformal_params(1, 3.0, 3, g1, 0.5);
    CHECK(p05.rhs_const == doctest::Approx(std::sqrt(0.2)));

    const auto q = conformal_params(-1, 0.0, 3, g1, 1.0);
    CHECK(q.rho == doctest::Approx(-1));
    CHECK(q.gamma == doctest::Approx(1));
    CHECK(q.rhs_const == doctest::Approx(0.25));
    CHECK(q.construction_range);

    const auto gn = cone_constants(ConeSpec::garding(3, 3));
    try {
        conformal_params(1, 2.0, 3, gn, 1.0);
        FAIL("expected parameter error");
    } catch (const ParameterError& e) {
        CHECK(std::string(e.what()).find("alpha = 1 branch") != std::string::npos);
    }
    try {
        conformal_params(-1, 1.5, 3, gn, 1.0);
        FAIL("expected parameter error");
    } catch (const ParameterError& e) {
        CHECK(std::string(e.what()).find("alpha = -1 branch") != std::string::npos);
    }
}

TEST_CASE("conformal params invariants over a parameter sweep") {
    for (int n = 3; n <= 6; ++n)
        for (int k = 1; k <= n; ++k) {
            const auto cone = ConeSpec::garding(n, k);
            const auto cc = cone_constants(cone, 1000);
            for (double tau : {-3.0, -1.0, 0.0, 0.5, 2.5, 3.0, 5.0, 10.0}) {
                for (int alpha : {-1, 1}) {
                    ConformalParams p;
                    try {
                        p = conformal_params(alpha, tau, n, cc, 1.0);
                    } catch (const ParameterError&) {
                        continue;
                    }
                    CHECK(p.scaled_denominator() > 0);
                    CHECK((tau - 1) * (n * tau + 2 - 2 * n) > 0);
                    CHECK(p.rho != 0);
                    CHECK(p.rho < rho_upper_limit(cc));
                    CHECK(p.rho < n);
                    CHECK(p.theta > 0);
                    if (p.construction_range) {
                        CHECK(p.gamma >= 0);
                        CHECK(p.gamma_plus_rho() == doctest::Approx(tau * (n - 2) / (2 * (tau - 1))));
                        CHECK(p.gamma_plus_rho() >= 0);
                    }
                    // (1,...,1,1-rho) lies in the cone
                    LambdaVec v(n, 1.0);
                    v.back() = 1 - p.rho;
                    CHECK(contains(cone, v));
                }
            }
        }
}

TEST_CASE("fully uniform ellipticity of transformed operators") {
    const int n = 3;
    for (int k = 1; k <= n; ++k) {
        const auto base_cone = ConeSpec::garding(n, k);
        const auto cc = cone_constants(base_cone);
        const auto op = k == 1 ? OperatorSpec::sigma(n, 1, 1.0, true) : OperatorSpec::sigma_root(n, k);
        for (double rho : {-1.0, 0.5}) {
            if (!(rho < rho_upper_limit(cc))) continue;
            const auto tp = make_transform(cc, n, rho);
            const auto top = OperatorSpec::transformed(op, rho);
            const auto tcone = ConeSpec::transformed(base_cone, rho);
            const auto rep = fully_uniform_check(top, tcone, tp.theta, 3000);
            CAPTURE(k);
            CAPTURE(rho);
            CHECK(rep.passed);
            CHECK(rep.min_ratio >= tp.theta - 1e-9);
            if (rho == -1.0) CHECK(rep.min_ratio >= 0.25 - 1e-9);
            const auto g = f_grad(top, LambdaVec{1, 1, 1});
            const double s = g[0] + g[1] + g[2];
            for (double x : g) CHECK(x / s == doctest::Approx(1.0 / 3));
        }
    }
}

TEST_CASE("transformed operator chain rule and concavity") {
    const int n = 4;
    const auto base = OperatorSpec::sigma_root(n, 2);
    for (double rho : {-1.0, 0.5}) {
        const auto top = OperatorSpec::transformed(base, rho);
        ConeSampler sampler(ConeSpec::transformed(ConeSpec::garding(n, 2), rho), 5);
        int used = 0;
        for (int s = 0; s < 500; ++s) {
            auto lam = sampler.draw(SampleFamily::Uniform);
            if (!lam) continue;
            ++used;
            const auto mu = mu_from_lambda(*lam, rho);
            const auto gb = f_grad(base, mu);
            const double sum = std::accumulate(gb.begin(), gb.end(), 0.0);
            const auto g = f_grad(top, *lam);
            double scale = 1;
            for (double x : *lam) scale = std::max(scale, std::abs(x));
            const double h = 1e-6 * scale;
            for (int i = 0; i < n; ++i) {
                const double expected = (sum - rho * gb[i]) / (n - rho);
                CHECK(g[i] == doctest::Approx(expected).epsilon(1e-12));
                LambdaVec p = *lam, m = *lam;
                p[i] += h;
                m[i] -= h;
                const double fd = (f_eval(top, p) - f_eval(top, m)) / (2 * h);
                CHECK(std::abs(fd - g[i]) <= 1e-6 * std::abs(g[i]) + 1e-9);
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f_hess(top, *lam).matrix);
            CHECK(es.eigenvalues().maxCoeff() <= 1e-8);
        }
        CHECK(used > 300);
    }
}

TEST_CASE("transformed cone contains the positive cone") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(1e-4, 5.0);
    for (int k = 1; k <= 4; ++k)
        for (double rho : {-2.0, -0.5, 0.5}) {
            const auto c = ConeSpec::transformed(ConeSpec::garding(4, k), rho);
            for (int i = 0; i < 1000; ++i) {
                LambdaVec x(4);
                for (auto& e : x) e = u(rng);
                CHECK(contains(c, x));
            }
        }
}
