#include "doctest.h"

#include "conelab/cone.hpp"
#include "conelab/errors.hpp"
#include "conelab/symfunc.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

using namespace conelab;

namespace {

std::vector<OperatorSpec> operator_zoo(int n) {
    std::vector<OperatorSpec> ops;
    ops.push_back(OperatorSpec::sigma(n, 1, 1.0, true));
    for (int k = 2; k <= n; ++k) ops.push_back(OperatorSpec::sigma_root(n, k));
    ops.push_back(OperatorSpec::sigma_ratio(n, 2, 1, 1.0, true));
    if (n >= 3) ops.push_back(OperatorSpec::sigma_ratio(n, 3, 1, 0.5, true));
    ops.push_back(OperatorSpec::p_composed(OperatorSpec::sigma_root(n, 2), true));
    ops.push_back(OperatorSpec::transformed(OperatorSpec::sigma_root(n, 2), -1.0));
    return ops;
}

LambdaVec fd_grad(const OperatorSpec& op, const LambdaVec& lam);
double norm(const LambdaVec& v);

// Five-point differences, step shrunk until the stencil stays in the cone and
// two consecutive steps agree to 1e-9; nullopt if that never happens.
std::optional<LambdaVec> fd_grad_inside(const OperatorSpec& op, const LambdaVec& lam) {
    double scale = 1.0;
    for (double x : lam) scale = std::max(scale, std::abs(x));
    auto five_point = [&](double h) -> std::optional<LambdaVec> {
        LambdaVec g(lam.size());
        for (std::size_t i = 0; i < lam.size(); ++i) {
            double v[4];
            const double off[4] = {-2, -1, 1, 2};
            for (int j = 0; j < 4; ++j) {
                LambdaVec p = lam;
                p[i] += off[j] * h;
                if (natural_cone_violation(op, p)) return std::nullopt;
                v[j] = f_eval(op, p);
            }
            g[i] = (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h);
        }
        return g;
    };
    double h = 1e-3 * scale;
    std::optional<LambdaVec> prev;
    for (int it = 0; it < 40; ++it, h *= 0.5) {
        auto cur = five_point(h);
        if (cur && prev) {
            LambdaVec d(cur->size());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = (*cur)[i] - (*prev)[i];
            if (norm(d) <= 1e-9 * norm(*cur)) return cur;
        }
        prev = cur;
    }
    return std::nullopt;
}

LambdaVec fd_grad(const OperatorSpec& op, const LambdaVec& lam) {
    LambdaVec g(lam.size());
    double scale = 1.0;
    for (double x : lam) scale = std::max(scale, std::abs(x));
    const double h = 1e-6 * scale;
    for (std::size_t i = 0; i < lam.size(); ++i) {
        LambdaVec p = lam, m = lam;
        p[i] += h;
        m[i] -= h;
        g[i] = (f_eval(op, p) - f_eval(op, m)) / (2 * h);
    }
    return g;
}

double norm(const LambdaVec& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("sigma examples") {
    const LambdaVec ones{1, 1, 1}, v{1, 2, 3};
    CHECK(sigma(ones, 2) == doctest::Approx(3));
    CHECK(sigma(v, 0) == 1.0);
    CHECK(sigma(v, 3) == doctest::Approx(sigma_by_subsets(v, 3)));
    CHECK(sigma(v, 3) == doctest::Approx(6));
    CHECK_THROWS_AS(sigma(v, 4), DomainError);
    CHECK_THROWS_AS(sigma(v, -1), DomainError);
}

TEST_CASE("sigma matches subset enumeration") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int n = 2; n <= 8; ++n) {
        for (int rep = 0; rep < 20; ++rep) {
            LambdaVec x(n);
            for (auto& e : x) e = nd(rng);
            for (int k = 0; k <= n; ++k) {
                const double ref = sigma_by_subsets(x, k);
                CHECK(sigma(x, k) == doctest::Approx(ref).epsilon(1e-12).scale(1.0));
            }
        }
    }
}

TEST_CASE("sigma_grad examples") {
    const LambdaVec ones{1, 1, 1}, v{1, 2, 3};
    auto g = sigma_grad(ones, 2);
    for (double x : g) CHECK(x == doctest::Approx(2));
    g = sigma_grad(v, 1);
    for (double x : g) CHECK(x == doctest::Approx(1));
    g = sigma_grad(v, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        LambdaVec rest;
        for (std::size_t j = 0; j < 3; ++j)
            if (j != i) rest.push_back(v[j]);
        CHECK(g[i] == doctest::Approx(sigma_by_subsets(rest, 2)));
    }
    CHECK(g[0] == doctest::Approx(6));
    CHECK(g[1] == doctest::Approx(3));
    CHECK(g[2] == doctest::Approx(2));
    CHECK_THROWS_AS(sigma_grad(v, 0), DomainError);
}

TEST_CASE("f_eval examples") {
    const LambdaVec ones{1, 1, 1};
    CHECK(f_eval(OperatorSpec::sigma(3, 2, 1.0, true), ones) == doctest::Approx(1));
    CHECK(f_eval(OperatorSpec::sigma_ratio(3, 2, 1), ones) == doctest::Approx(1));
    CHECK(f_eval(OperatorSpec::sigma(3, 1), LambdaVec{2, 0, -1}) == doctest::Approx(1));
    CHECK_THROWS_AS(f_eval(OperatorSpec::sigma(3, 2), LambdaVec{0, 0, 1}), FeasibilityError);
    try {
        f_eval(OperatorSpec::sigma(3, 2), LambdaVec{1, 1, -3});
        FAIL("expected feasibility error");
    } catch (const FeasibilityError& e) {
        CHECK(!e.inequality().empty());
    }
}

TEST_CASE("f_grad examples") {
    const LambdaVec ones{1, 1, 1};
    for (double x : f_grad(OperatorSpec::sigma(3, 1), LambdaVec{5, -1, 0.3})) CHECK(x == 1.0);
    const auto root = OperatorSpec::sigma(3, 2, 0.5, true);
    for (double x : f_grad(root, ones)) CHECK(x == doctest::Approx(1.0 / 3));
    const auto ratio = OperatorSpec::sigma_ratio(3, 2, 1);
    const LambdaVec v{1, 2, 3};
    const auto g = f_grad(ratio, v);
    // quotient rule: (s1 * d s2 - s2 * d s1) / s1^2
    const double s1 = 6, s2 = 11;
    const LambdaVec ds2{5, 4, 3};
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx((s1 * ds2[i] - s2) / (s1 * s1)).epsilon(1e-12));
    const auto fd = fd_grad(ratio, v);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(g[i] - fd[i]) <= 1e-8 * std::abs(g[i]));
}

TEST_CASE("f_hess examples") {
    const LambdaVec v{0.3, -0.2, 2.0};
    CHECK(f_hess(OperatorSpec::sigma(3, 1), v).matrix.norm() == doctest::Approx(0).scale(1));
    const auto h = f_hess(OperatorSpec::sigma(3, 2), v).matrix;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(h(i, j) == doctest::Approx(i == j ? 0.0 : 1.0));
    const auto r = f_hess(OperatorSpec::sigma(3, 2, 0.5), LambdaVec{1, 1, 1});
    CHECK(r.path == HessianPath::Analytic);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.matrix);
    CHECK(es.eigenvalues().maxCoeff() <= 1e-10);
    const auto fd = f_hess_fd(OperatorSpec::sigma(3, 2, 0.5), LambdaVec{1, 1, 1});
    CHECK(fd.path == HessianPath::FiniteDifference);
    CHECK(fd.step == doctest::Approx(1e-5));
    CHECK((fd.matrix - r.matrix).norm() < 1e-4);
}

TEST_CASE("maclaurin and trace bound examples") {
    CHECK(maclaurin_check(LambdaVec{1, 1, 1}, 3, 1));
    CHECK(maclaurin_check(LambdaVec{1, 1, 1}, 2, 1));
    CHECK(maclaurin_check(LambdaVec{1, 2, 3}, 2, 1));
    CHECK(maclaurin_check(LambdaVec{3, 1, -0.5}, 2, 1));
    CHECK_THROWS_AS(maclaurin_check(LambdaVec{1, 1, -3}, 2, 1), FeasibilityError);

    const auto root2 = OperatorSpec::sigma_root(3, 2);
    CHECK(trace_lower_bound_check(root2, LambdaVec{1, 1, 1}));
    CHECK(trace_lower_bound_check(root2, LambdaVec{1, 2, 3}));
    CHECK(6.0 >= 3 * f_eval(root2, LambdaVec{1, 2, 3}));
    CHECK(trace_lower_bound_check(OperatorSpec::sigma(3, 1, 1.0, true), LambdaVec{0, 0, 3}));
}

TEST_CASE("normalization and homogeneity") {
    for (int n = 3; n <= 6; ++n) {
        const LambdaVec ones(n, 1.0);
        for (const auto& op : operator_zoo(n)) {
            if (op.normalized) CHECK(f_eval(op, ones) == doctest::Approx(1).epsilon(1e-13));
            LambdaVec x(n);
            for (int i = 0; i < n; ++i) x[i] = 1.0 + 0.1 * i;
            const double t = 2.7;
            LambdaVec tx = x;
            for (auto& e : tx) e *= t;
            CHECK(f_eval(op, tx) == doctest::Approx(std::pow(t, op.homogeneity()) * f_eval(op, x)).epsilon(1e-12));
        }
    }
}

TEST_CASE("operator invariants on sampled cone points") {
    for (int n : {3, 4, 5}) {
        for (const auto& op : operator_zoo(n)) {
            CAPTURE(op.describe());
            const ConeSpec cone = natural_cone(op);
            ConeSampler sampler(cone, 11 + n);
            int used = 0;
            std::size_t failures_euler = 0, failures_schur = 0, failures_concave = 0,
                        failures_mac = 0, failures_dual = 0;
            LambdaVec previous;
            for (int s = 0; s < 1000; ++s) {
                auto lam = sampler.draw(static_cast<SampleFamily>(s % 2));
                if (!lam) continue;
                double scale = 0;
                for (double x : *lam) scale = std::max(scale, std::abs(x));
                if (scale > 1e4) continue;
                ++used;
                const auto g = f_grad(op, *lam);
                double euler = 0, magnitude = 0;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    euler += g[i] * (*lam)[i];
                    magnitude += std::abs(g[i] * (*lam)[i]);
                }
                const double f = f_eval(op, *lam);
                if (std::abs(euler - op.homogeneity() * f) > 1e-10 * std::max(magnitude, std::abs(f))) ++failures_euler;

                for (std::size_t i = 0; i < g.size(); ++i)
                    for (std::size_t j = 0; j < g.size(); ++j)
                        if ((*lam)[i] < (*lam)[j] && g[i] < g[j] - 1e-12 * norm(g)) ++failures_schur;

                const auto h = f_hess(op, *lam).matrix;
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
                if (es.eigenvalues().maxCoeff() > 1e-8 * std::max(1.0, h.norm())) ++failures_concave;

                if (op.kind == OperatorKind::Sigma && op.k >= 2) {
                    for (int l = 1; l < op.k; ++l)
                        if (!maclaurin_check(*lam, op.k, l)) ++failures_mac;
                    if (op.homogeneity() == 1.0 && !trace_lower_bound_check(op, *lam)) ++failures_mac;
                }
                if (!previous.empty()) {
                    double pair = 0;
                    for (std::size_t i = 0; i < g.size(); ++i) pair += g[i] * previous[i];
                    if (!(pair > 0)) ++failures_dual;
                }
                previous = *lam;
            }
            CHECK(used > 500);
            CHECK(failures_euler == 0);
            CHECK(failures_schur == 0);
            CHECK(failures_concave == 0);
            CHECK(failures_mac == 0);
            CHECK(failures_dual == 0);
        }
    }
}

TEST_CASE("analytic gradient matches finite differences") {
    for (int n : {3, 4, 5}) {
        for (const auto& op : operator_zoo(n)) {
            CAPTURE(op.describe());
            ConeSampler sampler(natural_cone(op), 31 + n);
            int drawn = 0, resolved = 0, failures = 0;
            while (drawn < 1000) {
                auto lam = sampler.draw(SampleFamily::Uniform);
                if (!lam) continue;
                ++drawn;
                const auto fd = fd_grad_inside(op, *lam);
                if (!fd) continue;
                ++resolved;
                const auto g = f_grad(op, *lam);
                LambdaVec diff(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) diff[i] = g[i] - (*fd)[i];
                if (!(norm(diff) / norm(g) < 1e-6)) ++failures;
            }
            CHECK(resolved >= 990);
            CHECK(failures == 0);
        }
    }
}

TEST_CASE("stable sort records permutation") {
    const LambdaVec v{3, 1, 2, 1};
    const auto s = sort_ascending(v);
    CHECK(s.values == LambdaVec{1, 1, 2, 3});
    CHECK(s.perm == std::vector<std::size_t>{1, 3, 2, 0});
}

TEST_CASE("binomial exact") {
    CHECK(binomial(8, 4) == 70);
    CHECK(binomial(30, 15) == 155117520ull);
    CHECK(binomial(3, 5) == 0);
}
