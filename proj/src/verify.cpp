#include "conelab/verify.hpp"

#include "conelab/errors.hpp"
#include "conelab/geometry.hpp"
#include "conelab/parallel.hpp"
#include "conelab/solver_fd.hpp"
#include "conelab/solver_radial.hpp"
#include "conelab/symfunc.hpp"
#include "conelab/transform.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

namespace conelab {

namespace {

using Metrics = std::vector<std::pair<std::string, double>>;

double norm(const LambdaVec& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Five-point differences with the step halved until two steps agree to 1e-9 and the stencil stays in the
// natural cone; nullopt when that never happens (samples within ~1e-8 of the boundary).
std::optional<LambdaVec> fd_gradient(const OperatorSpec& op, const LambdaVec& lam) {
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

std::vector<OperatorSpec> operator_zoo(int n) {
    std::vector<OperatorSpec> ops;
    ops.push_back(OperatorSpec::sigma(n, 1, 1.0, true));
    for (int k = 2; k <= n; ++k) ops.push_back(OperatorSpec::sigma_root(n, k));
    ops.push_back(OperatorSpec::sigma_ratio(n, 2, 1, 1.0, true));
    ops.push_back(OperatorSpec::sigma_ratio(n, 3, 1, 0.5, true));
    ops.push_back(OperatorSpec::p_composed(OperatorSpec::sigma_root(n, 2), true));
    ops.push_back(OperatorSpec::transformed(OperatorSpec::sigma_root(n, 2), -1.0));
    return ops;
}

RadialProblem ln_problem(double R = 1.0) {
    const auto cp = conformal_params(-1, 0.0, 3, ConeSpec::garding(3, 1), 1.0);
    return RadialProblem::make(DomainSpec::ball(3, R), cp, OperatorSpec::sigma(3, 1), ConeSpec::garding(3, 1));
}

RadialProblem sigma2_problem(const DomainSpec& d = DomainSpec::ball(3, 1.0)) {
    const auto cp = conformal_params(1, 3.0, 3, ConeSpec::garding(3, 2), 1.0);
    return RadialProblem::make(d, cp, OperatorSpec::sigma_root(3, 2), ConeSpec::garding(3, 2));
}

double ln_exact(double r) { return std::log(2.0 * std::sqrt(6.0) / (1.0 - r * r)); }

// Non-radial manufactured solution on the box with one hole.
Jet ustar(const Vec& x) {
    Jet j = Jet::zero(3);
    const double a[3] = {0.3, 0.2, 0.25};
    const double e = 0.02;
    const double s = std::sin(2 * x[0] + x[1]), c = std::cos(x[2]);
    const double cs = std::cos(2 * x[0] + x[1]), sz = std::sin(x[2]);
    const double k[2] = {2.0, 1.0};
    j.value = a[0] * x[0] * x[0] + a[1] * x[1] * x[1] + a[2] * x[2] * x[2] + e * s * c;
    for (int i = 0; i < 3; ++i) j.grad[i] = 2 * a[i] * x[i];
    j.grad[0] += e * 2 * cs * c;
    j.grad[1] += e * cs * c;
    j.grad[2] -= e * s * sz;
    for (int i = 0; i < 3; ++i) j.hess(i, i) = 2 * a[i];
    for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) j.hess(p, q) -= e * k[p] * k[q] * s * c;
    j.hess(0, 2) = j.hess(2, 0) = -e * 2 * cs * sz;
    j.hess(1, 2) = j.hess(2, 1) = -e * cs * sz;
    j.hess(2, 2) -= e * s * c;
    return j;
}

GridProblem fd_ball(double h) {
    const auto cp = conformal_params(1, 3.0, 3, ConeSpec::garding(3, 2), 1.0);
    GridProblem p =
        GridProblem::make(DomainSpec::ball(3, 1.0), h, cp, OperatorSpec::sigma_root(3, 2), ConeSpec::garding(3, 2));
    p.phi = [](const Point3&) { return 0.5; };
    return p;
}

// Recorded with the default seed.
constexpr double kPueFloorRecorded = 0.053018229506242805;

CheckOutcome cone_constants_check(const VerifyOptions&) {
    CheckOutcome out;
    int checked = 0, bad = 0;
    for (int n = 3; n <= 8; ++n) {
        for (int k = 1; k <= n; ++k) {
            const auto c = ConeSpec::garding(n, k);
            ++checked;
            if (kappa(c) != n - k) ++bad;
            if (is_type2(c) != (k == 1)) ++bad;
        }
        if (kappa(ConeSpec::garding(n, n)) != 0) ++bad;
    }
    out.metrics = {{"cones", checked}, {"mismatches", bad}};
    out.passed = bad == 0;
    return out;
}

CheckOutcome pue_floor_check(const VerifyOptions& o) {
    CheckOutcome out;
    double floor = std::numeric_limits<double>::infinity(), worst_sharp = 0.0;
    bool sharp_ok = true;
    std::size_t feasible = 0;
    for (int n = 3; n <= 5; ++n)
        for (int k = 1; k <= n; ++k) {
            const auto cone = ConeSpec::garding(n, k);
            const auto op = k == 1 ? OperatorSpec::sigma(n, 1, 1.0, true) : OperatorSpec::sigma_root(n, k);
            const std::uint64_t seed = mix_seed(o.seed, static_cast<std::uint64_t>(16 * n + k));
            for (int m = 1; m <= n - k + 1; ++m) {
                const PueReport r = pue_check(op, cone, m, 10000, seed, o.threads);
                floor = std::min(floor, r.min_ratio);
                feasible += r.feasible;
            }
            if (k >= 2) {
                const PueReport r = pue_check(op, cone, n - k + 2, 10000, seed, o.threads);
                worst_sharp = std::max(worst_sharp, r.min_ratio);
                sharp_ok = sharp_ok && r.min_ratio < 1e-2 && !r.witness.empty();
            }
        }
    out.metrics = {{"floor", floor}, {"max_sharpness_witness_ratio", worst_sharp}, {"feasible_samples", double(feasible)}};
    out.passed = floor >= 1e-4 && sharp_ok;
    if (o.seed == kDefaultSeed && kPueFloorRecorded > 0.0) {
        out.metrics.push_back({"floor_recorded", kPueFloorRecorded});
        out.passed = out.passed && std::abs(floor - kPueFloorRecorded) <= 1e-12 * kPueFloorRecorded;
    }
    return out;
}

CheckOutcome transform_check(const VerifyOptions& o) {
    CheckOutcome out;
    std::mt19937_64 rng(mix_seed(o.seed, 3));
    std::normal_distribution<double> nd;
    double round_trip = 0.0;
    const double rhos[4] = {-2.0, -1.0, 0.5, 1.5};
    for (int rep = 0; rep < 10000; ++rep) {
        const int n = 3 + rep % 6;
        const double rho = rhos[(rep / 6) % 4];
        LambdaVec x(n);
        double scale = 1.0;
        for (auto& e : x) e = nd(rng), scale = std::max(scale, std::abs(e));
        const auto back = lambda_from_mu(mu_from_lambda(x, rho), rho);
        for (int i = 0; i < n; ++i) round_trip = std::max(round_trip, std::abs(back[i] - x[i]) / scale);
    }

    const int n = 3;
    const double rho = -1.0;
    const auto base = OperatorSpec::sigma_root(n, 2);
    const auto top = OperatorSpec::transformed(base, rho);
    const auto tcone = ConeSpec::transformed(ConeSpec::garding(n, 2), rho);
    ConeSampler sampler(tcone, mix_seed(o.seed, 4));
    double chain = 0.0;
    int used = 0;
    for (int s = 0; s < 2000 && used < 1000; ++s) {
        auto lam = sampler.draw(SampleFamily::Uniform);
        if (!lam) continue;
        const auto fd = fd_gradient(top, *lam);
        if (!fd) continue;
        ++used;
        const auto gb = f_grad(base, mu_from_lambda(*lam, rho));
        const double sum = std::accumulate(gb.begin(), gb.end(), 0.0);
        LambdaVec via_chain(n), diff(n);
        for (int i = 0; i < n; ++i) via_chain[i] = (sum - rho * gb[i]) / (n - rho);
        for (int i = 0; i < n; ++i) diff[i] = via_chain[i] - (*fd)[i];
        chain = std::max(chain, norm(diff) / norm(via_chain));
    }
    const double theta = theta_constant(cone_constants(ConeSpec::garding(n, 2)), n, rho);
    const UniformReport u = fully_uniform_check(top, tcone, 0.25, 10000, o.seed, o.threads);
    out.metrics = {{"round_trip", round_trip}, {"chain_rule_vs_fd", chain}, {"chain_samples", used},
                   {"theta_constant", theta}, {"min_ratio", u.min_ratio}, {"feasible_samples", double(u.feasible)}};
    out.passed = round_trip < 1e-14 && chain < 1e-6 && used >= 900 && std::abs(theta - 0.25) < 1e-12 &&
                 u.min_ratio >= 0.25 - 1e-9 && u.feasible >= 9000;
    return out;
}

CheckOutcome calculus_check(const VerifyOptions& o) {
    CheckOutcome out;
    double grad_err = 0.0, max_eig = -1e300, max_eig_rel = -1e300, euler = 0.0;
    std::size_t samples = 0, interior_samples = 0, unresolved = 0, mac_fail = 0, operators = 0;
    for (int n : {3, 4, 5})
        for (const auto& op : operator_zoo(n)) {
            ++operators;
            ConeSampler sampler(natural_cone(op), mix_seed(o.seed, 100 + operators));
            const bool trace_applies = std::abs(op.homogeneity() - 1.0) < 1e-14 &&
                                       std::abs(f_eval(op, LambdaVec(static_cast<std::size_t>(n), 1.0)) - 1.0) < 1e-12;
            int used = 0;
            for (int s = 0; s < 4000 && used < 1000; ++s) {
                auto lam = sampler.draw(static_cast<SampleFamily>(s % 2));
                if (!lam) continue;
                ++used;
                ++samples;
                interior_samples += s % 2 == 0;
                const auto g = f_grad(op, *lam);
                // Gradients only on the interior family: differences cannot resolve points ~1e-8 from the boundary.
                if (s % 2 == 0) {
                    if (const auto fd = fd_gradient(op, *lam)) {
                        LambdaVec d(g.size());
                        for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] - (*fd)[i];
                        grad_err = std::max(grad_err, norm(d) / norm(g));
                    } else {
                        ++unresolved;
                    }
                }
                const Eigen::MatrixXd H = f_hess(op, *lam).matrix;
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
                const double top = es.eigenvalues().maxCoeff();
                if (s % 2 == 0) max_eig = std::max(max_eig, top);
                max_eig_rel = std::max(max_eig_rel, top / std::max(1.0, H.norm()));
                double e = 0, mag = 0;
                for (std::size_t i = 0; i < g.size(); ++i) e += g[i] * (*lam)[i], mag += std::abs(g[i] * (*lam)[i]);
                const double f = f_eval(op, *lam);
                euler = std::max(euler, std::abs(e - op.homogeneity() * f) / std::max(mag, std::abs(f)));
                if (op.kind == OperatorKind::Sigma && op.k >= 2) {
                    for (int l = 1; l < op.k; ++l)
                        if (!maclaurin_check(*lam, op.k, l)) ++mac_fail;
                }
                if (trace_applies && !trace_lower_bound_check(op, *lam)) ++mac_fail;
            }
            if (used < 1000) ++mac_fail;
        }
    out.metrics = {{"operators", double(operators)}, {"samples", double(samples)}, {"gradient_vs_fd", grad_err},
                   {"interior_samples", double(interior_samples)}, {"fd_unresolved", double(unresolved)}, {"max_hessian_eigenvalue_interior", max_eig},
                   {"max_hessian_eigenvalue_over_norm", max_eig_rel},
                   {"euler", euler}, {"maclaurin_or_trace_failures", double(mac_fail)}};
    out.passed = grad_err < 1e-6 && unresolved * 100 <= interior_samples && max_eig <= 1e-8 && max_eig_rel <= 1e-8 && euler <= 1e-10 && mac_fail == 0;
    return out;
}

struct LnRun {
    RadialProblem p = ln_problem();
    RadialGrid g;
    InfiniteResult res;
};

const LnRun& ln_run() {
    static const LnRun run = [] {
        LnRun r;
        r.g = RadialGrid::graded(r.p.domain, 2000);
        InfiniteOptions o;
        o.K = 10;
        r.res = solve_infinite(r.p, r.g, o);
        return r;
    }();
    return run;
}

CheckOutcome ln_check(const VerifyOptions&) {
    CheckOutcome out;
    const LnRun& run = ln_run();
    double err = 0.0;
    bool settled = true;
    for (std::size_t i = 0; i < run.g.size(); ++i)
        if (run.g.r[i] <= 0.9) {
            settled = settled && run.res.settled[i];
            err = std::max(err, std::abs(run.res.limit[i] - ln_exact(run.g.r[i])));
        }
    const RateEstimate rate = asymptotic_rate(run.p, run.res);
    out.metrics = {{"interior_error", err}, {"rate", rate.estimate}, {"rate_expected", 0.5 * std::log(6.0)},
                   {"rate_spread", rate.spread}};
    out.passed = settled && err < 1e-3 && std::abs(rate.estimate - 0.5 * std::log(6.0)) < 1e-2;
    return out;
}

CheckOutcome general_rate_check(const VerifyOptions&) {
    CheckOutcome out;
    const RadialProblem p = sigma2_problem();
    const InfiniteResult res = solve_infinite(p, RadialGrid::graded(p.domain, 2000));
    const RateEstimate rate = asymptotic_rate(p, res);
    const double expected = 0.5 * std::log(1.0 * (3 * 3.0 + 2 - 2 * 3) / (2.0 * (3 - 2)));
    out.metrics = {{"rate", rate.estimate}, {"rate_expected", expected}, {"theoretical_reported", rate.theoretical}};
    out.passed = std::abs(rate.estimate - expected) < 2e-2 && std::abs(rate.theoretical - expected) < 1e-12;
    return out;
}

CheckOutcome monotone_check(const VerifyOptions&) {
    CheckOutcome out;
    const LnRun& run = ln_run();
    RadialProblem p = sigma2_problem();
    const RadialProfile w = [](double r) {
        const double s = 1.0 - r * r;
        return RadialJet{std::log(2.0 / s) + 0.1 * r * r, 2.0 * r / s + 0.2 * r, 2.0 * (1.0 + r * r) / (s * s) + 0.2};
    };
    p.psi = manufactured_psi(p, w);
    std::vector<double> radii;
    for (int m : {1, 2, 4, 6, 8, 10, 12}) radii.push_back(1.0 - std::ldexp(1.0, -m));
    const ExhaustionResult ex = exhaustion_solve(p, radii, w, 2000, 0.5);
    out.metrics = {{"increasing_min_increment", run.res.min_increment},
                   {"exhaustion_max_increase", ex.max_increase},
                   {"exhaustion_min_above_lower", ex.min_above_lower},
                   {"exhaustion_compact_error", ex.compact_error}};
    out.passed = run.res.structure_ok && run.res.min_increment >= -1e-9 && ex.max_increase <= 1e-9 &&
                 ex.min_above_lower >= -1e-9;
    return out;
}

CheckOutcome comparison_principle_check(const VerifyOptions& o) {
    CheckOutcome out;
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
    double worst = -1e300;
    int passed = 0;
    for (const auto& p : problems) {
        const ComparisonReport rep = comparison_check(p, RadialGrid::uniform(p.domain, 400), 1.1, 1e-8);
        worst = std::max(worst, rep.max_violation);
        passed += rep.passed;
    }
    out.metrics = {{"radial_instances", double(problems.size())}, {"radial_passed", passed},
                   {"radial_max_violation", worst}};
    out.passed = passed == static_cast<int>(problems.size());
    if (!o.fast) {
        FdSolveOptions fo;
        fo.threads = o.threads;
        const GridProblem a = fd_ball(0.125);
        GridProblem b = a;
        b.psi = [](const Point3&) { return 1.1; };
        const FdSolution sa = newton_solve(a, fo), sb = newton_solve(b, fo);
        const double v = (sb.u - sa.u).maxCoeff();
        out.metrics.push_back({"fd_max_violation", v});
        out.passed = out.passed && v <= 1e-8;
    }
    return out;
}

CheckOutcome manufactured_check(const VerifyOptions& o) {
    CheckOutcome out;
    struct Case {
        RadialProblem p;
        RadialProfile exact;
    };
    std::vector<Case> cases;
    cases.push_back({sigma2_problem(), [](double r) {
                         return RadialJet{0.5 + 0.4 * r * r + 0.1 * std::pow(r, 4), 0.8 * r + 0.4 * std::pow(r, 3),
                                          0.8 + 1.2 * r * r};
                     }});
    cases.push_back({ln_problem(), [](double r) { return RadialJet{std::cosh(r), std::sinh(r), std::cosh(r)}; }});
    cases.push_back({sigma2_problem(DomainSpec::annulus(3, 0.5, 1.0)),
                     [](double r) { return RadialJet{r * r + std::log(r), 2 * r + 1 / r, 2 - 1 / (r * r)}; }});
    double radial_order = 1e300;
    for (auto& c : cases) {
        c.p.psi = manufactured_psi(c.p, c.exact);
        c.p.phi_outer = c.exact(c.p.domain.outer).u;
        if (c.p.domain.kind == DomainKind::Annulus) c.p.phi_inner = c.exact(c.p.domain.inner).u;
        double prev = 0.0;
        for (int cells : {25, 50, 100, 200}) {
            const RadialGrid g = RadialGrid::uniform(c.p.domain, cells);
            const RadialSolution s = solve_finite(c.p, g);
            double e = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) e = std::max(e, std::abs(s.u[i] - c.exact(g.r[i]).u));
            if (prev > 0.0) radial_order = std::min(radial_order, std::log2(prev / e));
            prev = e;
        }
    }
    out.metrics = {{"radial_min_order", radial_order}};
    out.passed = radial_order >= 1.8;
    if (o.fast) return out;

    const DomainSpec dom = DomainSpec::box_minus_balls(Vec::Constant(3, -1.0), Vec::Constant(3, 1.0),
                                                       {Hole{Vec::Zero(3), 0.5}});
    const auto cp = conformal_params(-1, 0.0, 3, ConeSpec::garding(3, 2), 1.0);
    const PointFunction bump = [](const Point3& x) {
        return 0.3 * (1 - x[0] * x[0]) * (1 - x[1] * x[1]) * (1 - x[2] * x[2]) * (x.squaredNorm() - 0.25);
    };
    FdSolveOptions fo;
    fo.threads = o.threads;
    double prev = 0.0, fd_order = 1e300, gateaux = 0.0;
    for (int cells : {8, 16, 32, 64}) {
        GridProblem p = GridProblem::make(dom, 2.0 / cells, cp, OperatorSpec::sigma_root(3, 2), ConeSpec::garding(3, 2));
        p.psi = fd_manufactured_psi(p, ustar);
        p.phi = [bump](const Point3& x) { return ustar(Vec(x)).value + bump(x); };
        const FdSolution s = newton_solve(p, fo);
        double err = 0.0;
        for (std::size_t i = 0; i < s.disc.unknowns(); ++i)
            err = std::max(err, std::abs(s.u[static_cast<Eigen::Index>(i)] - ustar(Vec(s.disc.point(i))).value));
        for (double g : s.gateaux_errors) gateaux = std::max(gateaux, g);
        if (prev > 0.0) fd_order = std::min(fd_order, std::log2(prev / err));
        prev = err;
    }
    out.metrics.push_back({"fd_min_order", fd_order});
    out.metrics.push_back({"fd_error_64", prev});
    out.metrics.push_back({"fd_max_gateaux_error", gateaux});
    out.passed = out.passed && fd_order >= 1.8 && gateaux < 1e-4;
    return out;
}

CheckOutcome cross_solver_check(const VerifyOptions& o) {
    CheckOutcome out;
    const GridProblem p = fd_ball(1.0 / 16);
    FdSolveOptions fo;
    fo.threads = o.threads;
    const FdSolution s = newton_solve(p, fo);
    RadialProblem rp = RadialProblem::make(p.domain, p.params, p.op, p.cone);
    rp.phi_outer = 0.5;
    const RadialSolution rs = solve_finite(rp, RadialGrid::uniform(p.domain, 2000));
    double diff = 0.0;
    for (std::size_t i = 0; i < s.disc.unknowns(); ++i)
        diff = std::max(diff,
                        std::abs(s.u[static_cast<Eigen::Index>(i)] - interpolate(rs.r, rs.u, s.disc.point(i).norm())));
    out.metrics = {{"nodes_per_axis", s.disc.grid.nx}, {"max_difference", diff}, {"min_margin", s.min_margin}};
    out.passed = s.disc.grid.nx == 33 && diff < 2e-2 && s.min_margin > 0.0;
    return out;
}

CheckOutcome barrier_criterion(const VerifyOptions&) {
    CheckOutcome out;
    RadialProblem p = sigma2_problem();
    p.phi_outer = 0.0;
    const RadialGrid g = RadialGrid::graded(p.domain, 2000);
    const RadialSolution s = solve_finite(p, g);
    const BarrierSearch search = barrier_search(p, s);
    int collar_pass = 0;
    double delta_pass = 0.0;
    for (double delta : barrier_deltas()) {
        const BarrierReport rep = subsolution_check(p, BarrierSpec::infinite_lower(p, 0.05, delta, 1.0 / delta));
        if (rep.passed && !collar_pass) delta_pass = delta;
        collar_pass += rep.passed;
    }
    out.metrics = {{"searched_pairs", double(search.reports.size())},
                   {"verified_epsilon", search.verified ? search.verified->first : std::nan("")},
                   {"verified_delta", search.verified ? search.verified->second : std::nan("")},
                   {"subsolution_deltas_passing", collar_pass},
                   {"subsolution_delta", collar_pass ? delta_pass : std::nan("")}};
    out.passed = search.verified.has_value() && collar_pass > 0;
    return out;
}

}  // namespace

std::string criterion_name(int id) {
    static const char* names[kCriteria] = {
        "cone constants",
        "partial uniform ellipticity",
        "transform correctness",
        "calculus invariants",
        "Loewner-Nirenberg reproduction",
        "general asymptotic rate",
        "monotone schemes",
        "comparison principle",
        "manufactured-solution convergence",
        "cross-solver agreement",
        "barrier verification",
    };
    if (id < 1 || id > kCriteria) throw DomainError("criterion id out of range");
    return names[id - 1];
}

CheckOutcome run_criterion(int id, const VerifyOptions& options) {
    static const double budgets[kCriteria] = {1, 10, 10, 10, 60, 300, 0, 0, 0, 600, 0};
    static const bool slow[kCriteria] = {false, false, false, false, false, false, false, false, false, true, false};
    using Fn = CheckOutcome (*)(const VerifyOptions&);
    static const Fn fns[kCriteria] = {cone_constants_check, pue_floor_check,    transform_check,
                                      calculus_check,       ln_check,           general_rate_check,
                                      monotone_check,       comparison_principle_check, manufactured_check,
                                      cross_solver_check,   barrier_criterion};
    CheckOutcome out;
    const std::string name = criterion_name(id);
    if (options.fast && slow[id - 1]) {
        out.skipped = true;
        out.passed = true;
        out.detail = "skipped in fast mode";
    } else {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            out = fns[id - 1](options);
        } catch (const std::exception& e) {
            out.passed = false;
            out.detail = e.what();
        }
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.budget_seconds = budgets[id - 1];
        if (out.budget_seconds > 0.0 && out.seconds > out.budget_seconds) {
            out.passed = false;
            std::ostringstream os;
            os << "runtime " << out.seconds << " s over the " << out.budget_seconds << " s budget";
            out.detail = out.detail.empty() ? os.str() : out.detail + "; " + os.str();
        }
    }
    out.id = id;
    out.name = name;
    return out;
}

CheckOutcome seed_reproducibility(const VerifyOptions& options) {
    CheckOutcome out;
    out.name = "seed reproducibility";
    const auto cone = ConeSpec::garding(4, 2);
    const auto op = OperatorSpec::sigma_root(4, 2);
    const PueReport a = pue_check(op, cone, 3, 2000, options.seed, 1);
    const PueReport b = pue_check(op, cone, 3, 2000, options.seed, std::max(2, options.threads));
    const PueReport c = pue_check(op, cone, 3, 2000, options.seed ^ 0x5bd1e995ull, 1);
    const bool same = a.min_ratio == b.min_ratio && a.witness == b.witness && a.feasible == b.feasible;
    const bool differs = a.min_ratio != c.min_ratio || a.witness != c.witness;
    out.metrics = {{"min_ratio", a.min_ratio}, {"min_ratio_perturbed_seed", c.min_ratio}};
    out.passed = same && differs;
    if (!same) out.detail = "same seed gave different reports";
    if (!differs) out.detail = "perturbed seed reproduced the report";
    return out;
}

}  // namespace conelab
