#include "doctest.h"

#include "conelab/errors.hpp"
#include "conelab/solver_radial.hpp"

#include <algorithm>
#include <cmath>

using namespace conelab;

namespace {

RadialProblem ln_problem(double R = 1.0) {
    const auto cp = conformal_params(-1, 0.0, 3, ConeSpec::garding(3, 1), 1.0);
    return RadialProblem::make(DomainSpec::ball(3, R), cp, OperatorSpec::sigma(3, 1), ConeSpec::garding(3, 1));
}

RadialProblem sigma2_problem(const DomainSpec& d) {
    const auto cp = conformal_params(1, 3.0, 3, ConeSpec::garding(3, 2), 1.0);
    return RadialProblem::make(d, cp, OperatorSpec::sigma_root(3, 2), ConeSpec::garding(3, 2));
}

RadialProblem sigma2_problem() { return sigma2_problem(DomainSpec::ball(3, 1.0)); }

double ln_exact(double r) { return std::log(2.0 * std::sqrt(6.0) / (1.0 - r * r)); }

LambdaVec sorted(LambdaVec v) {
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

TEST_CASE("radial_reduce: zero function gives the background eigenvalues") {
    RadialProblem p = sigma2_problem();
    p.a_rad = [](double) { return 2.0; };
    p.a_tan = [](double) { return -0.5; };
    const LambdaVec lam = radial_reduce(p, 0.0, 0.0, 0.0, 0.4);
    CHECK(lam[0] == 2.0);
    CHECK(lam[1] == -0.5);
    CHECK(lam[2] == -0.5);
}

TEST_CASE("radial_reduce: quadratic profile by substitution") {
    for (auto [alpha, tau] : {std::pair{1, 3.0}, std::pair{-1, 0.0}, std::pair{1, 2.5}, std::pair{-1, -2.0}}) {
        const auto cp = conformal_params_unchecked(alpha, tau, 4, 1.0);
        const auto p = RadialProblem::make(DomainSpec::ball(4, 1.0), cp, OperatorSpec::sigma(4, 1), ConeSpec::garding(4, 1));
        const double c = 0.7, r = 0.35, n = 4;
        const LambdaVec lam = radial_reduce(p, 0.5 * c * r * r, c * r, c, r);
        CHECK(lam[0] == doctest::Approx((1 - cp.rho) * c + (n - 1) * c + (cp.gamma + cp.rho) * c * c * r * r).epsilon(1e-14));
        CHECK(lam[1] == doctest::Approx(c + (n - 1 - cp.rho) * c + cp.gamma * c * c * r * r).epsilon(1e-14));
        const LambdaVec center = radial_reduce(p, 0.0, 0.0, c, 0.0);
        for (double v : center) CHECK(v == doctest::Approx((n - cp.rho) * c));
    }
}

TEST_CASE("radial_reduce: agrees with the full tensor V[u] on a slice of 3D points") {
    for (auto [alpha, tau] : {std::pair{1, 3.0}, std::pair{-1, 0.0}, std::pair{1, 5.0}}) {
        const auto cp = conformal_params_unchecked(alpha, tau, 3, 1.0);
        const auto p = RadialProblem::make(DomainSpec::ball(3, 1.0), cp, OperatorSpec::sigma(3, 1), ConeSpec::garding(3, 1));
        const auto base = MetricSpec::euclidean(3);
        const Mat A = Mat::Zero(3, 3);
        double worst = 0.0;
        for (int i = -6; i <= 6; ++i)
            for (int j = -6; j <= 6; ++j) {
                Vec x(3);
                x << 0.07 * i, 0.05 * j, 0.03 * (i + j) + 0.01;
                const double s = x.squaredNorm(), r = std::sqrt(s);
                // u = 0.3 r^2 + 0.1 r^4 + sin(r^2)
                Jet u = Jet::zero(3);
                u.value = 0.3 * s + 0.1 * s * s + std::sin(s);
                const double g1 = 0.6 + 0.4 * s + 2.0 * std::cos(s);  // du/dr = g1 r
                const double g1p = 0.8 - 4.0 * std::sin(s);         // d g1 / d s * 2
                u.grad = g1 * x;
                u.hess = g1 * Mat::Identity(3, 3) + g1p * x * x.transpose();
                const double du = g1 * r, d2u = g1 + g1p * s;
                const LambdaVec full = sorted(eigenvalues_wrt(Mat::Identity(3, 3), V_of_u(u, x, base, cp, A)));
                const LambdaVec rad = sorted(radial_reduce(p, u.value, du, d2u, r));
                for (int m = 0; m < 3; ++m) worst = std::max(worst, std::abs(full[m] - rad[m]));
            }
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("radial_reduce: r = 0 on an annulus is a domain error") {
    RadialProblem p = sigma2_problem(DomainSpec::annulus(3, 0.5, 1.0));
    CHECK_THROWS_AS(radial_reduce(p, 0.0, 0.0, 1.0, 0.0), DomainError);
}

TEST_CASE("graded grid: exact node count, boundary clustering, ratio bound") {
    for (auto d : {DomainSpec::ball(3, 1.0), DomainSpec::annulus(3, 0.4, 1.0)}) {
        const RadialGrid g = RadialGrid::graded(d, 2000, 2e-5, 0.95);
        REQUIRE(g.size() == 2000);
        CHECK(g.r.front() == (d.kind == DomainKind::Ball ? 0.0 : 0.4));
        CHECK(g.r.back() == 1.0);
        CHECK(g.r.back() - g.r[g.size() - 2] == doctest::Approx(2e-5).epsilon(1e-6));
        for (std::size_t i = 1; i + 1 < g.size(); ++i) {
            const double a = g.r[i] - g.r[i - 1], b = g.r[i + 1] - g.r[i];
            REQUIRE(a > 0.0);
            CHECK(std::min(a, b) / std::max(a, b) >= 0.95 - 1e-9);
        }
    }
}

TEST_CASE("manufactured solution: second-order convergence on uniform grids") {
    struct Case {
        RadialProblem p;
        RadialProfile exact;
    };
    std::vector<Case> cases;
    {
        RadialProblem p = sigma2_problem();
        RadialProfile u = [](double r) {
            return RadialJet{0.5 + 0.4 * r * r + 0.1 * std::pow(r, 4), 0.8 * r + 0.4 * std::pow(r, 3), 0.8 + 1.2 * r * r};
        };
        cases.push_back({p, u});
    }
    {
        RadialProblem p = ln_problem();
        RadialProfile u = [](double r) { return RadialJet{std::cosh(r), std::sinh(r), std::cosh(r)}; };
        cases.push_back({p, u});
    }
    {
        RadialProblem p = sigma2_problem(DomainSpec::annulus(3, 0.5, 1.0));
        RadialProfile u = [](double r) { return RadialJet{r * r + std::log(r), 2 * r + 1 / r, 2 - 1 / (r * r)}; };
        cases.push_back({p, u});
    }
    for (auto& c : cases) {
        c.p.psi = manufactured_psi(c.p, c.exact);
        c.p.phi_outer = c.exact(c.p.domain.outer).u;
        if (c.p.domain.kind == DomainKind::Annulus) c.p.phi_inner = c.exact(c.p.domain.inner).u;
        std::vector<double> errs;
        for (int cells : {25, 50, 100, 200}) {
            const RadialGrid g = RadialGrid::uniform(c.p.domain, cells);
            const RadialSolution s = solve_finite(c.p, g);
            double e = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) e = std::max(e, std::abs(s.u[i] - c.exact(g.r[i]).u));
            errs.push_back(e);
        }
        for (std::size_t i = 1; i < errs.size(); ++i) {
            INFO(c.p.describe() << " errors " << errs[i - 1] << " -> " << errs[i]);
            CHECK(std::log2(errs[i - 1] / errs[i]) >= 1.8);
        }
    }
}

TEST_CASE("solve_finite: converged, admissible, inside the C0 bracket") {
    for (RadialProblem p : {sigma2_problem(), ln_problem(), sigma2_problem(DomainSpec::annulus(3, 0.3, 1.0))}) {
        p.phi_outer = 0.3;
        p.phi_inner = -0.2;
        p.psi = [](double r) { return 1.0 + 0.5 * r * r; };
        const RadialGrid g = RadialGrid::uniform(p.domain, 400);
        const AdmissibleStart start = admissible_start(p, g);
        const RadialSolution s = solve_finite(p, g);
        CHECK(s.residual < 1e-9);
        CHECK(s.min_margin > 0.0);
        CHECK(s.history.front() > s.history.back());
        const C0Bracket b = c0_bracket(p, g, start.u, s);
        INFO(b.lower << " <= " << b.min_diff << ", " << b.max_diff << " <= " << b.upper);
        CHECK(b.holds);
    }
}

TEST_CASE("solve_finite: error paths") {
    RadialProblem p = sigma2_problem();
    const RadialGrid g = RadialGrid::uniform(p.domain, 100);
    std::vector<double> bad(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) bad[i] = -g.r[i] * g.r[i];  // concave: lambda < 0
    try {
        solve_finite(p, g, {}, &bad);
        FAIL("expected FeasibilityError");
    } catch (const FeasibilityError& e) {
        CHECK(e.node() >= 0);
        CHECK(!e.inequality().empty());
    }
    RadialSolveOptions few;
    few.max_iter = 1;
    p.phi_outer = 2.0;
    CHECK_THROWS_AS(solve_finite(p, g, few), ConvergenceError);
}

TEST_CASE("Loewner-Nirenberg ball: limit, monotone family and rate") {
    const RadialProblem p = ln_problem();
    const RadialGrid g = RadialGrid::graded(p.domain, 2000);
    InfiniteOptions o;
    o.K = 10;
    const InfiniteResult res = solve_infinite(p, g, o);
    CHECK(res.structure_ok);
    CHECK(res.epsilon == 1.0);
    CHECK(res.min_increment >= -1e-9);

    double err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.r[i] <= 0.9) {
            REQUIRE(res.settled[i]);
            err = std::max(err, std::abs(res.limit[i] - ln_exact(g.r[i])));
        }
    CHECK(err < 1e-3);

    const RateEstimate rate = asymptotic_rate(p, res);
    CHECK(rate.theoretical == doctest::Approx(0.5 * std::log(6.0)).epsilon(1e-14));
    CHECK(std::abs(rate.estimate - 0.5 * std::log(6.0)) < 1e-2);
    CHECK(rate.spread < 1e-2);

    // u^(k) <= u~ + C with u~ the scalar solution and C fitted on the last member
    double C = -1e300;
    const auto& last = res.sequence.back();
    for (std::size_t i = 0; i + 1 < g.size(); ++i) C = std::max(C, last.u[i] - ln_exact(g.r[i]));
    for (const auto& s : res.sequence)
        for (std::size_t i = 0; i + 1 < g.size(); ++i) CHECK(s.u[i] <= ln_exact(g.r[i]) + C + 1e-9);

    // u >= -log sigma - C0 on the settled collar
    double C0 = -1e300;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double sig = 1.0 - g.r[i];
        if (sig < 0.1 && res.settled[i]) C0 = std::max(C0, -std::log(sig) - res.limit[i]);
    }
    CHECK(C0 < 0.0);
}

TEST_CASE("sigma_2 root, (alpha, tau) = (1, 3): rate 1/2 log(5/2)") {
    const RadialProblem p = sigma2_problem();
    const RadialGrid g = RadialGrid::graded(p.domain, 2000);
    const InfiniteResult res = solve_infinite(p, g);
    CHECK(res.structure_ok);
    const RateEstimate rate = asymptotic_rate(p, res);
    CHECK(rate.theoretical == doctest::Approx(0.5 * std::log(2.5)).epsilon(1e-14));
    CHECK(std::abs(rate.estimate - 0.5 * std::log(2.5)) < 2e-2);
}

TEST_CASE("asymptotic_rate: unsettled band and varsigma gate") {
    const RadialProblem p = ln_problem();
    const RadialGrid g = RadialGrid::graded(p.domain, 600);
    InfiniteOptions o;
    o.K = 4;
    const InfiniteResult res = solve_infinite(p, g, o);
    CHECK_THROWS_AS(asymptotic_rate(p, res, {{1e-4, 1e-2}}), RateUnavailableError);
    RadialProblem q = p;
    q.params.varsigma = 0.5;
    CHECK_THROWS_AS(asymptotic_rate(q, res), RateUnavailableError);
}

TEST_CASE("annulus with non-constant boundary psi: rate bracket and uniqueness corridor") {
    RadialProblem p = sigma2_problem(DomainSpec::annulus(3, 0.5, 1.0));
    p.psi = [](double r) { return 1.0 + 2.0 * (r - 0.5); };  // 1 inside, 2 outside
    const RadialGrid g = RadialGrid::graded(p.domain, 2000);
    InfiniteOptions base;
    base.K = 12;
    const InfiniteResult u = solve_infinite(p, g, base);
    for (auto comp : {BoundaryComponent::Outer, BoundaryComponent::Inner}) {
        const RateEstimate rate = asymptotic_rate(p, u, {}, comp);
        INFO("estimate " << rate.estimate << " in [" << rate.bracket_lo << ", " << rate.bracket_hi << "]");
        CHECK(rate.estimate >= rate.bracket_lo - 1e-2);
        CHECK(rate.estimate <= rate.bracket_hi + 1e-2);
        CHECK(std::abs(rate.estimate - rate.theoretical) < 2e-2);
    }

    // boundary data shifted by 1/2 log(sup psi / psi) per component
    InfiniteOptions o = base;
    o.outer_shift = 0.0;
    o.inner_shift = 0.5 * std::log(2.0);
    const InfiniteResult v = solve_infinite(p, g, o);
    const double width = 0.5 * std::log(2.0);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!u.settled[i] || !v.settled[i]) continue;
        ++checked;
        CHECK(v.limit[i] >= u.limit[i] - 1e-2);
        CHECK(v.limit[i] <= u.limit[i] + width + 1e-2);
    }
    CHECK(checked > 1000);
}

TEST_CASE("barriers: finite ball run sandwiched for a searched (eps, delta)") {
    RadialProblem p = sigma2_problem();
    p.phi_outer = 0.0;
    const RadialGrid g = RadialGrid::graded(p.domain, 2000);
    const RadialSolution s = solve_finite(p, g);
    const BarrierSearch search = barrier_search(p, s);
    REQUIRE(search.verified.has_value());
    CHECK(search.reports.size() == 2 * barrier_epsilons().size() * barrier_deltas().size());

    // negative control: a collar covering the whole ball with a flat barrier
    const BarrierReport bad = barrier_check(p, s, BarrierSpec::lower(0.01, 1.0, p.phi_outer));
    CHECK(!bad.passed);
    CHECK(!bad.violations.empty());
}

TEST_CASE("barriers: h_{k,eps,delta} is a subsolution on the collar for small delta") {
    for (RadialProblem p : {sigma2_problem(), ln_problem()}) {
        bool some = false;
        for (double delta : barrier_deltas()) {
            const BarrierReport rep = subsolution_check(p, BarrierSpec::infinite_lower(p, 0.05, delta, 1.0 / delta));
            CHECK(rep.checked == 64);
            some = some || rep.passed;
        }
        CHECK(some);
        const BarrierReport small = subsolution_check(p, BarrierSpec::infinite_lower(p, 0.05, 0.025, 40.0));
        CHECK(small.passed);
    }
}

TEST_CASE("comparison principle: larger psi gives the smaller solution") {
    std::vector<RadialProblem> problems;
    problems.push_back(sigma2_problem());
    problems.push_back(ln_problem());
    {
        RadialProblem p = sigma2_problem(DomainSpec::annulus(3, 0.4, 1.0));
        p.phi_inner = 0.5;
        problems.push_back(p);
    }
    {
        RadialProblem p = ln_problem(2.0);
        p.psi = [](double r) { return 1.0 + r; };
        p.phi_outer = -0.5;
        problems.push_back(p);
    }
    {
        const auto cp = conformal_params(1, 4.0, 4, ConeSpec::garding(4, 3), 1.0);
        RadialProblem p =
            RadialProblem::make(DomainSpec::ball(4, 1.0), cp, OperatorSpec::sigma_root(4, 3), ConeSpec::garding(4, 3));
        p.phi_outer = 1.0;
        problems.push_back(p);
    }
    for (const auto& p : problems) {
        const ComparisonReport rep = comparison_check(p, RadialGrid::uniform(p.domain, 400), 1.1, 1e-9);
        INFO(p.describe() << " max violation " << rep.max_violation);
        CHECK(rep.passed);
    }
}

TEST_CASE("exhaustion: decreasing family above the subsolution, converging on compacts") {
    // g = e^{2w} delta on the unit ball with u = 0 an exact solution, i.e. w in Euclidean variables
    RadialProblem p = sigma2_problem();
    const RadialProfile w = [](double r) {
        const double s = 1.0 - r * r;
        return RadialJet{std::log(2.0 / s) + 0.1 * r * r, 2.0 * r / s + 0.2 * r, 2.0 * (1.0 + r * r) / (s * s) + 0.2};
    };
    p.psi = manufactured_psi(p, w);
    std::vector<double> radii;
    for (int m : {1, 2, 4, 6, 8, 10, 12}) radii.push_back(1.0 - std::ldexp(1.0, -m));
    const ExhaustionResult ex = exhaustion_solve(p, radii, w, 2000, 0.5);
    CHECK(ex.solutions.size() == radii.size());
    CHECK(ex.max_increase <= 1e-9);
    CHECK(ex.min_above_lower >= -1e-9);
    CHECK(ex.compact_error < 1e-3);
}
