#include "conelab/solver_radial.hpp"

#include "conelab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace conelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double domain_lo(const DomainSpec& d) {
    if (d.kind == DomainKind::Ball) return 0.0;
    if (d.kind == DomainKind::Annulus) return d.inner;
    throw DomainError("radial solver needs a ball or an annulus");
}

// Spacings grading away from a boundary: h_min, h_min/ratio, ... while below h_u.
std::vector<double> graded_cells(double h_min, double ratio, double h_u) {
    std::vector<double> s;
    for (double h = h_min; h < h_u; h /= ratio) s.push_back(h);
    return s;
}

struct Stencil {
    double w1[3];
    double w2[3];
};

Stencil stencil(const std::vector<double>& r, std::size_t i) {
    const double hm = r[i] - r[i - 1];
    const double hp = r[i + 1] - r[i];
    Stencil s;
    s.w1[0] = -hp / (hm * (hm + hp));
    s.w1[1] = (hp - hm) / (hm * hp);
    s.w1[2] = hm / (hp * (hm + hp));
    s.w2[0] = 2.0 / (hm * (hm + hp));
    s.w2[1] = -2.0 / (hm * hp);
    s.w2[2] = 2.0 / (hp * (hm + hp));
    return s;
}

bool is_dirichlet(const RadialGrid& grid, std::size_t i) {
    return i + 1 == grid.size() || (i == 0 && !grid.has_center);
}

struct Assembly {
    std::vector<double> R, lo, di, up, margin;
};

std::string node_where(const RadialGrid& grid, std::size_t i) {
    std::ostringstream os;
    os << "node " << i << " (r=" << grid.r[i] << ")";
    return os.str();
}

// Residual (and optionally the tridiagonal Jacobian) of the log form.
Assembly assemble(const RadialProblem& p, const RadialGrid& grid, const std::vector<double>& u,
                  const std::vector<double>& log_rhs, bool jacobian, double margin_floor) {
    const std::size_t N = grid.size();
    const int n = p.params.n;
    const double rho = p.params.rho, gamma = p.params.gamma, vs = p.params.varsigma;
    Assembly a;
    a.R.assign(N, 0.0);
    a.margin.assign(N, std::numeric_limits<double>::quiet_NaN());
    if (jacobian) {
        a.lo.assign(N, 0.0);
        a.di.assign(N, 0.0);
        a.up.assign(N, 0.0);
    }
    LambdaVec lam(n);
    for (std::size_t i = 0; i < N; ++i) {
        if (is_dirichlet(grid, i)) {
            const double phi = (i == 0) ? p.phi_inner : p.phi_outer;
            a.R[i] = u[i] - phi;
            if (jacobian) a.di[i] = 1.0;
            continue;
        }
        const double r = grid.r[i];
        double drad[3] = {0, 0, 0}, dtan[3] = {0, 0, 0};
        if (i == 0) {
            const double h = grid.r[1];
            const double d2 = 2.0 * (u[1] - u[0]) / (h * h);
            lam[0] = (n - rho) * d2 + p.a_rad_at(0.0);
            for (int m = 1; m < n; ++m) lam[m] = (n - rho) * d2 + p.a_tan_at(0.0);
            drad[1] = dtan[1] = -(n - rho) * 2.0 / (h * h);
            drad[2] = dtan[2] = (n - rho) * 2.0 / (h * h);
        } else {
            const Stencil s = stencil(grid.r, i);
            double du = 0.0, d2 = 0.0;
            for (int j = 0; j < 3; ++j) {
                du += s.w1[j] * u[i - 1 + j];
                d2 += s.w2[j] * u[i - 1 + j];
            }
            lam[0] = (1.0 - rho) * d2 + (n - 1.0) * du / r + (gamma + rho) * du * du + p.a_rad_at(r);
            const double t = d2 + (n - 1.0 - rho) * du / r + gamma * du * du + p.a_tan_at(r);
            for (int m = 1; m < n; ++m) lam[m] = t;
            const double crad = (n - 1.0) / r + 2.0 * (gamma + rho) * du;
            const double ctan = (n - 1.0 - rho) / r + 2.0 * gamma * du;
            for (int j = 0; j < 3; ++j) {
                drad[j] = (1.0 - rho) * s.w2[j] + crad * s.w1[j];
                dtan[j] = s.w2[j] + ctan * s.w1[j];
            }
        }
        if (auto why = cone_violation(p.cone, lam))
            throw FeasibilityError("lambda left the cone at " + node_where(grid, i), *why, static_cast<std::ptrdiff_t>(i));
        const double mg = cone_margin(p.cone, lam);
        a.margin[i] = mg;
        if (mg < margin_floor)
            throw FeasibilityError("cone margin below floor at " + node_where(grid, i), "margin >= floor",
                                   static_cast<std::ptrdiff_t>(i));
        const double f = f_eval(p.op, lam);
        if (!(f > 0.0))
            throw FeasibilityError("f <= 0 at " + node_where(grid, i), "f > 0", static_cast<std::ptrdiff_t>(i));
        a.R[i] = std::log(f) - 2.0 * vs * u[i] - log_rhs[i];
        if (jacobian) {
            const LambdaVec g = f_grad(p.op, lam);
            double gt = 0.0;
            for (int m = 1; m < n; ++m) gt += g[m];
            double* row[3] = {&a.lo[i], &a.di[i], &a.up[i]};
            if (i == 0) {
                a.di[i] = (g[0] * drad[1] + gt * dtan[1]) / f - 2.0 * vs;
                a.up[i] = (g[0] * drad[2] + gt * dtan[2]) / f;
            } else {
                for (int j = 0; j < 3; ++j) *row[j] = (g[0] * drad[j] + gt * dtan[j]) / f;
                a.di[i] -= 2.0 * vs;
            }
        }
    }
    return a;
}

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

std::vector<double> thomas(std::vector<double> lo, std::vector<double> di, std::vector<double> up,
                           std::vector<double> rhs) {
    const std::size_t N = di.size();
    for (std::size_t i = 1; i < N; ++i) {
        const double w = lo[i] / di[i - 1];
        di[i] -= w * up[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> x(N);
    x[N - 1] = rhs[N - 1] / di[N - 1];
    for (std::size_t i = N - 1; i-- > 0;) x[i] = (rhs[i] - up[i] * x[i + 1]) / di[i];
    return x;
}

std::vector<double> log_rhs_of(const RadialProblem& p, const RadialGrid& grid) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double psi = p.psi_at(grid.r[i]);
        if (!(psi > 0.0)) throw ParameterError("psi must be positive");
        v[i] = std::log(p.params.v_rhs_const * psi);
    }
    return v;
}

double neville_at_zero(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> p = y;
    const std::size_t m = x.size();
    for (std::size_t level = 1; level < m; ++level)
        for (std::size_t i = 0; i + level < m; ++i)
            p[i] = (x[i + level] * p[i] - x[i] * p[i + 1]) / (x[i + level] - x[i]);
    return p[0];
}

double f_at_ones(const OperatorSpec& op) {
    LambdaVec ones(op.n, 1.0);
    return f_eval(op, ones);
}

}  // namespace

// ---------------------------------------------------------------------------

RadialGrid RadialGrid::uniform(const DomainSpec& domain, int cells) {
    if (cells < 2) throw DomainError("radial grid needs at least 2 cells");
    const double lo = domain_lo(domain), hi = domain.outer;
    RadialGrid g;
    g.has_center = domain.kind == DomainKind::Ball;
    g.r.resize(cells + 1);
    for (int i = 0; i <= cells; ++i) g.r[i] = lo + (hi - lo) * i / cells;
    g.r[cells] = hi;
    return g;
}

RadialGrid RadialGrid::graded(const DomainSpec& domain, int nodes, double h_min, double ratio) {
    if (nodes < 8) throw DomainError("graded radial grid needs at least 8 nodes");
    if (!(ratio > 0.0 && ratio < 1.0) || !(h_min > 0.0)) throw DomainError("graded grid needs 0 < ratio < 1, h_min > 0");
    const double lo = domain_lo(domain), hi = domain.outer, L = hi - lo;
    const int ends = domain.kind == DomainKind::Ball ? 1 : 2;

    auto count = [&](double h_u, std::vector<double>& cells, int& uniform) {
        cells = graded_cells(h_min, ratio, h_u);
        const double used = ends * std::accumulate(cells.begin(), cells.end(), 0.0);
        if (used >= L) return std::numeric_limits<int>::max();
        uniform = static_cast<int>(std::ceil((L - used) / h_u - 1e-12));
        return ends * static_cast<int>(cells.size()) + uniform + 1;
    };
    double a = h_min, b = L;
    std::vector<double> cells;
    int uniform = 0;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(a * b);
        if (count(mid, cells, uniform) <= nodes) b = mid;
        else a = mid;
    }
    if (count(b, cells, uniform) > nodes) throw DomainError("graded grid: too few nodes for h_min");
    uniform = nodes - 1 - ends * static_cast<int>(cells.size());
    const double used = ends * std::accumulate(cells.begin(), cells.end(), 0.0);
    const double hu = (L - used) / uniform;

    // cell widths from lo upward
    std::vector<double> up;
    if (ends == 2) up.assign(cells.begin(), cells.end());
    for (int i = 0; i < uniform; ++i) up.push_back(hu);
    for (auto it = cells.rbegin(); it != cells.rend(); ++it) up.push_back(*it);

    RadialGrid g;
    g.has_center = domain.kind == DomainKind::Ball;
    g.r.resize(up.size() + 1);
    g.r[0] = lo;
    for (std::size_t i = 0; i < up.size(); ++i) g.r[i + 1] = g.r[i] + up[i];
    g.r.back() = hi;
    return g;
}

RadialProblem RadialProblem::make(const DomainSpec& domain, const ConformalParams& params, const OperatorSpec& op,
                                  const ConeSpec& cone) {
    if (domain.kind == DomainKind::BoxMinusBalls) throw DomainError("radial problem needs a ball or an annulus");
    if (domain.n != params.n || op.n != params.n || cone.n != params.n)
        throw ParameterError("dimension mismatch between domain, operator, cone and parameters");
    RadialProblem p;
    p.domain = domain;
    p.params = params;
    p.op = op;
    p.cone = cone;
    return p;
}

double RadialProblem::sigma(double r) const {
    if (domain.kind == DomainKind::Annulus) return std::min(r - domain.inner, domain.outer - r);
    return domain.outer - r;
}

std::string RadialProblem::describe() const {
    std::ostringstream os;
    os << "radial " << domain.describe() << " op=" << op.describe() << " cone=" << cone.describe()
       << " alpha=" << params.alpha << " tau=" << params.tau;
    return os.str();
}

LambdaVec radial_reduce(const RadialProblem& p, double /*u*/, double du, double d2u, double r) {
    const int n = p.params.n;
    const double rho = p.params.rho, gamma = p.params.gamma;
    LambdaVec lam(n);
    if (r == 0.0) {
        if (p.domain.kind != DomainKind::Ball) throw DomainError("r = 0 is only allowed for a ball");
        lam[0] = (n - rho) * d2u + p.a_rad_at(0.0);
        for (int m = 1; m < n; ++m) lam[m] = (n - rho) * d2u + p.a_tan_at(0.0);
        return lam;
    }
    lam[0] = (1.0 - rho) * d2u + (n - 1.0) * du / r + (gamma + rho) * du * du + p.a_rad_at(r);
    const double t = d2u + (n - 1.0 - rho) * du / r + gamma * du * du + p.a_tan_at(r);
    for (int m = 1; m < n; ++m) lam[m] = t;
    return lam;
}

RadialFunction manufactured_psi(const RadialProblem& problem, const RadialProfile& exact) {
    RadialProblem p = problem;
    return [p, exact](double r) {
        const RadialJet j = exact(r);
        const LambdaVec lam = radial_reduce(p, j.u, j.du, j.d2u, r);
        if (auto why = cone_violation(p.cone, lam)) throw FeasibilityError("manufactured profile is not admissible", *why);
        return f_eval(p.op, lam) * std::exp(-2.0 * p.params.varsigma * j.u) / p.params.v_rhs_const;
    };
}

std::vector<double> radial_residual(const RadialProblem& problem, const RadialGrid& grid, const std::vector<double>& u) {
    return assemble(problem, grid, u, log_rhs_of(problem, grid), false, -kInf).R;
}

std::vector<LambdaVec> radial_lambdas(const RadialProblem& p, const RadialGrid& grid, const std::vector<double>& u) {
    std::vector<LambdaVec> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (is_dirichlet(grid, i)) continue;
        if (i == 0) {
            const double h = grid.r[1];
            out.push_back(radial_reduce(p, u[0], 0.0, 2.0 * (u[1] - u[0]) / (h * h), 0.0));
            continue;
        }
        const Stencil s = stencil(grid.r, i);
        double du = 0.0, d2 = 0.0;
        for (int j = 0; j < 3; ++j) {
            du += s.w1[j] * u[i - 1 + j];
            d2 += s.w2[j] * u[i - 1 + j];
        }
        out.push_back(radial_reduce(p, u[i], du, d2, grid.r[i]));
    }
    return out;
}

AdmissibleStart admissible_start(const RadialProblem& p, const RadialGrid& grid) {
    const std::size_t N = grid.size();
    const double vs = p.params.varsigma;
    for (double c = 1.0; c <= 1073741824.0; c *= 2.0) {
        std::vector<double> q(N);
        for (std::size_t i = 0; i < N; ++i) q[i] = 0.5 * c * grid.r[i] * grid.r[i];
        const auto lams = radial_lambdas(p, grid, q);
        bool ok = true;
        double b = kInf;
        std::size_t li = 0;
        for (std::size_t i = 0; i < N && ok; ++i) {
            if (is_dirichlet(grid, i)) continue;
            const LambdaVec& lam = lams[li++];
            if (cone_violation(p.cone, lam)) {
                ok = false;
                break;
            }
            const double f = f_eval(p.op, lam);
            if (!(f > 0.0)) {
                ok = false;
                break;
            }
            b = std::min(b, std::log(f / (p.params.v_rhs_const * p.psi_at(grid.r[i]))) / (2.0 * vs) - q[i]);
        }
        if (!ok) continue;
        b = std::min(b, p.phi_outer - q[N - 1]);
        if (!grid.has_center) b = std::min(b, p.phi_inner - q[0]);
        AdmissibleStart s;
        s.c = c;
        s.b = b;
        s.u = q;
        for (double& x : s.u) x += b;
        return s;
    }
    throw ConstructionError("no admissible quadratic start: background term too negative");
}

RadialSolution solve_finite(const RadialProblem& p, const RadialGrid& grid, const RadialSolveOptions& opt,
                            const std::vector<double>* start) {
    std::vector<double> u = start ? *start : admissible_start(p, grid).u;
    if (u.size() != grid.size()) throw DomainError("start vector does not match the grid");
    const auto log_rhs = log_rhs_of(p, grid);

    RadialSolution sol;
    sol.r = grid.r;
    for (int it = 0;; ++it) {
        Assembly a = assemble(p, grid, u, log_rhs, true, opt.margin_floor);
        const double nr = inf_norm(a.R);
        sol.history.push_back(nr);
        bool converged = true;
        for (std::size_t i = 0; i < u.size() && converged; ++i) {
            // rounding level of the row: the stencil weights grow like 1/h^2
            double level = std::abs(a.di[i] + (is_dirichlet(grid, i) ? 0.0 : 2.0 * p.params.varsigma)) * std::abs(u[i]);
            if (i > 0) level += std::abs(a.lo[i]) * std::abs(u[i - 1]);
            if (i + 1 < u.size()) level += std::abs(a.up[i]) * std::abs(u[i + 1]);
            converged = std::abs(a.R[i]) <= opt.tol + opt.rounding_factor * 2.220446049250313e-16 * level;
        }
        if (converged) {
            sol.u = u;
            sol.margins = a.margin;
            sol.iterations = it;
            sol.residual = nr;
            sol.min_margin = kInf;
            for (double m : a.margin)
                if (!std::isnan(m)) sol.min_margin = std::min(sol.min_margin, m);
            return sol;
        }
        if (it >= opt.max_iter) {
            std::ostringstream os;
            os << "Newton did not converge in " << opt.max_iter << " iterations (residual " << nr << ")";
            throw ConvergenceError(os.str(), sol.history);
        }
        std::vector<double> rhs(a.R.size());
        for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = -a.R[i];
        const std::vector<double> step = thomas(a.lo, a.di, a.up, rhs);

        double t = 1.0;
        bool accepted = false;
        std::ptrdiff_t blocking = -1;
        std::string blocking_ineq;
        bool last_infeasible = false;
        std::vector<double> cand(u.size());
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
            for (std::size_t i = 0; i < u.size(); ++i) cand[i] = u[i] + t * step[i];
            try {
                const Assembly c = assemble(p, grid, cand, log_rhs, false, opt.margin_floor);
                last_infeasible = false;
                if (inf_norm(c.R) <= (1.0 - opt.armijo * t) * nr) {
                    accepted = true;
                    break;
                }
            } catch (const FeasibilityError& e) {
                last_infeasible = true;
                blocking = e.node();
                blocking_ineq = e.inequality();
            }
        }
        if (!accepted) {
            if (last_infeasible) {
                std::ostringstream os;
                os << "line search exhausted " << opt.max_halvings << " halvings; blocking node " << blocking;
                throw FeasibilityError(os.str(), blocking_ineq, blocking);
            }
            std::ostringstream os;
            os << "line search found no decrease (residual " << nr << ")";
            throw ConvergenceError(os.str(), sol.history);
        }
        sol.steps.push_back(t);
        u = cand;
    }
}

C0Bracket c0_bracket(const RadialProblem& p, const RadialGrid& grid, const std::vector<double>& w,
                     const RadialSolution& sol) {
    const std::size_t N = grid.size();
    const double vs = p.params.varsigma, C = p.params.v_rhs_const;
    double fmin = kInf, fmax = -kInf, pmin = kInf, pmax = -kInf, wmin = kInf, wmax = -kInf;
    double bmin = kInf, bmax = -kInf;
    const auto lams = radial_lambdas(p, grid, w);
    for (const auto& lam : lams) {
        const double f = f_eval(p.op, lam);
        fmin = std::min(fmin, f);
        fmax = std::max(fmax, f);
    }
    for (std::size_t i = 0; i < N; ++i) {
        const double psi = p.psi_at(grid.r[i]);
        pmin = std::min(pmin, psi);
        pmax = std::max(pmax, psi);
        wmin = std::min(wmin, w[i]);
        wmax = std::max(wmax, w[i]);
        if (is_dirichlet(grid, i)) {
            const double phi = (i == 0) ? p.phi_inner : p.phi_outer;
            bmin = std::min(bmin, phi - w[i]);
            bmax = std::max(bmax, phi - w[i]);
        }
    }
    const double A1 = std::log(fmin / (C * pmax)) / (2.0 * vs);
    const double A2 = std::log(fmax / (C * pmin)) / (2.0 * vs);
    C0Bracket b;
    b.lower = std::min(bmin, A1 - wmax);
    b.upper = std::max(bmax, A2 - wmin);
    b.min_diff = kInf;
    b.max_diff = -kInf;
    for (std::size_t i = 0; i < N; ++i) {
        b.min_diff = std::min(b.min_diff, sol.u[i] - w[i]);
        b.max_diff = std::max(b.max_diff, sol.u[i] - w[i]);
    }
    b.holds = b.min_diff >= b.lower - 1e-9 && b.max_diff <= b.upper + 1e-9;
    return b;
}

// ---------------------------------------------------------------------------

namespace {

// Boundary data value + shift, the shifts taken from base.phi_outer / base.phi_inner.
RadialSolution solve_with_boundary(const RadialProblem& base, const RadialGrid& grid, double value,
                                   const RadialSolveOptions& opt, const std::vector<double>* start) {
    RadialProblem p = base;
    p.phi_outer = base.phi_outer + value;
    p.phi_inner = base.phi_inner + value;
    if (!start) return solve_finite(p, grid, opt);
    std::vector<double> s = *start;
    s.back() = p.phi_outer;
    if (!grid.has_center) s.front() = p.phi_inner;
    return solve_finite(p, grid, opt, &s);
}

// Warm start from `from` (boundary value b0) to boundary value b1, splitting the increment on failure.
RadialSolution continue_to(const RadialProblem& p, const RadialGrid& grid, const RadialSolution& from, double b0,
                           double b1, const RadialSolveOptions& opt, int depth) {
    try {
        return solve_with_boundary(p, grid, b1, opt, &from.u);
    } catch (const FeasibilityError&) {
        if (depth >= 8) throw;
    } catch (const ConvergenceError&) {
        if (depth >= 8) throw;
    }
    const double mid = 0.5 * (b0 + b1);
    RadialSolution half = continue_to(p, grid, from, b0, mid, opt, depth + 1);
    return continue_to(p, grid, half, mid, b1, opt, depth + 1);
}

}  // namespace

InfiniteResult solve_infinite(const RadialProblem& problem, const RadialGrid& grid, const InfiniteOptions& opt) {
    if (opt.K < 1) throw DomainError("K must be at least 1");
    InfiniteResult res;
    const int n = problem.params.n;
    LambdaVec structure(n, problem.params.gamma);
    structure[n - 1] = problem.params.gamma + problem.params.rho + 1.0;
    res.structure_ok = contains(problem.cone, structure);
    res.epsilon = opt.epsilon > 0.0 ? opt.epsilon : (res.structure_ok ? 1.0 : 0.5);
    res.r = grid.r;
    RadialProblem p = problem;
    p.phi_outer = opt.outer_shift;
    p.phi_inner = opt.inner_shift;

    double prev_b = 0.0;
    for (int j = 0; j <= opt.K; ++j) {
        const int k = 1 << j;
        const double b = res.epsilon * std::log(static_cast<double>(k));
        RadialSolution s = j == 0 ? solve_with_boundary(p, grid, b, opt.solve, nullptr)
                                  : continue_to(p, grid, res.sequence.back(), prev_b, b, opt.solve, 0);
        s.k = k;
        res.ks.push_back(k);
        res.sequence.push_back(std::move(s));
        prev_b = b;
    }

    res.min_increment = kInf;
    for (std::size_t j = 1; j < res.sequence.size(); ++j) {
        const auto& a = res.sequence[j - 1].u;
        const auto& b = res.sequence[j].u;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = b[i] - a[i];
            res.min_increment = std::min(res.min_increment, d);
            if (d < -opt.monotone_tol) {
                std::ostringstream os;
                os << "u^(" << res.ks[j] << ") < u^(" << res.ks[j - 1] << ") by " << -d << " at r=" << grid.r[i]
                   << "; grid too coarse for this k";
                throw SchemeError(os.str());
            }
        }
    }

    const std::size_t N = grid.size();
    const std::size_t m = std::min<std::size_t>(std::max(2, opt.extrapolation_points), res.sequence.size());
    std::vector<double> x(m), y(m), x1(m - 1), y1(m - 1);
    const std::size_t first = res.sequence.size() - m;
    for (std::size_t q = 0; q < m; ++q) x[q] = 1.0 / res.ks[first + q];
    res.limit.assign(N, kInf);
    res.settle_error.assign(N, kInf);
    res.settled.assign(N, 0);
    for (std::size_t i = 0; i < N; ++i) {
        if (is_dirichlet(grid, i)) continue;
        for (std::size_t q = 0; q < m; ++q) y[q] = res.sequence[first + q].u[i];
        const double full = neville_at_zero(x, y);
        std::copy(x.begin() + 1, x.end(), x1.begin());
        std::copy(y.begin() + 1, y.end(), y1.begin());
        const double lower_order = neville_at_zero(x1, y1);
        res.limit[i] = full;
        res.settle_error[i] = std::abs(full - lower_order);
        res.settled[i] = res.settle_error[i] < opt.settle_tol;
    }
    // Longest contiguous settled run.
    std::size_t best_lo = 0, best_len = 0;
    for (std::size_t i = 0; i < N;) {
        if (!res.settled[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < N && res.settled[j]) ++j;
        if (j - i > best_len) {
            best_len = j - i;
            best_lo = i;
        }
        i = j;
    }
    if (best_len > 0) {
        res.settled_lo = grid.r[best_lo];
        res.settled_hi = grid.r[best_lo + best_len - 1];
    } else {
        res.settled_lo = res.settled_hi = std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

std::vector<std::pair<double, double>> default_rate_bands(const DomainSpec& domain) {
    // fractions of the distance from the boundary to the farthest interior point
    const double L = domain.kind == DomainKind::Annulus ? 0.5 * (domain.outer - domain.inner) : domain.outer;
    std::vector<std::pair<double, double>> bands{{0.03, 0.3}, {0.03, 0.2}, {0.04, 0.25}, {0.05, 0.3}};
    for (auto& [a, b] : bands) {
        a *= L;
        b *= L;
    }
    return bands;
}

double theoretical_rate(const RadialProblem& p, double psi_boundary) {
    const double c = p.params.scaled_denominator() / (2.0 * (p.params.n - 2.0));
    return 0.5 * std::log(c * f_at_ones(p.op) / psi_boundary);
}

RateEstimate asymptotic_rate(const RadialProblem& p, const InfiniteResult& res,
                             std::vector<std::pair<double, double>> bands, BoundaryComponent component) {
    if (bands.empty()) bands = default_rate_bands(p.domain);
    if (p.params.varsigma != 1.0) throw RateUnavailableError("rate extraction is only defined for varsigma = 1");
    if (component == BoundaryComponent::Inner && p.domain.kind != DomainKind::Annulus)
        throw RateUnavailableError("inner boundary requested on a ball");
    RateEstimate est;
    est.component = component;
    const double R = p.domain.outer, r0 = p.domain.kind == DomainKind::Annulus ? p.domain.inner : 0.0;
    for (const auto& [a, b] : bands) {
        std::vector<double> s, v;
        for (std::size_t i = 0; i < res.r.size(); ++i) {
            const double sig = component == BoundaryComponent::Outer ? R - res.r[i] : res.r[i] - r0;
            if (sig < a || sig > b) continue;
            if (!res.settled[i]) {
                std::ostringstream os;
                os << "band [" << a << ", " << b << "] reaches unsettled node at sigma=" << sig;
                throw RateUnavailableError(os.str());
            }
            s.push_back(sig);
            v.push_back(res.limit[i] + std::log(sig));
        }
        if (s.size() < 5) throw RateUnavailableError("fewer than 5 nodes in a fit band");
        Eigen::MatrixXd X(s.size(), 3);
        Eigen::VectorXd Y(s.size());
        for (std::size_t q = 0; q < s.size(); ++q) {
            X(q, 0) = 1.0;
            X(q, 1) = s[q];
            X(q, 2) = s[q] * s[q];
            Y(q) = v[q];
        }
        const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(Y);
        est.bands.emplace_back(a, b);
        est.band_estimates.push_back(coef(0));
    }
    std::vector<double> sorted = est.band_estimates;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mcount = sorted.size();
    est.estimate = mcount % 2 ? sorted[mcount / 2] : 0.5 * (sorted[mcount / 2 - 1] + sorted[mcount / 2]);
    est.spread = sorted.back() - sorted.front();

    const double psi_here = p.psi_at(component == BoundaryComponent::Outer ? R : r0);
    est.theoretical = theoretical_rate(p, psi_here);
    double pmax = p.psi_at(R), pmin = p.psi_at(R);
    if (p.domain.kind == DomainKind::Annulus) {
        pmax = std::max(pmax, p.psi_at(r0));
        pmin = std::min(pmin, p.psi_at(r0));
    }
    est.bracket_lo = theoretical_rate(p, pmax);
    est.bracket_hi = theoretical_rate(p, pmin);
    return est;
}

// ---------------------------------------------------------------------------

BarrierSpec BarrierSpec::upper(double eps, double delta, double phi) {
    BarrierSpec b;
    b.kind = BarrierKind::UpperFinite;
    b.epsilon = eps;
    b.delta = delta;
    b.phi = phi;
    return b;
}

BarrierSpec BarrierSpec::lower(double eps, double delta, double phi, double k) {
    BarrierSpec b;
    b.kind = BarrierKind::LowerFinite;
    b.epsilon = eps;
    b.delta = delta;
    b.phi = phi;
    b.k = k;
    return b;
}

BarrierSpec BarrierSpec::infinite_lower(const RadialProblem& p, double eps, double delta, double k) {
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("h barrier needs 0 < eps < 1");
    BarrierSpec b;
    b.kind = BarrierKind::InfiniteLower;
    b.epsilon = eps;
    b.delta = delta;
    b.k = k;
    double psup = p.psi_at(p.domain.outer);
    if (p.domain.kind == DomainKind::Annulus) psup = std::max(psup, p.psi_at(p.domain.inner));
    const double c = p.params.scaled_denominator() / (2.0 * (p.params.n - 2.0));
    const double psup_normalized = psup / f_at_ones(p.op);
    b.constant = 0.5 * std::log((1.0 - eps) * (1.0 - eps) * c / (psup_normalized + eps));
    return b;
}

RadialJet BarrierSpec::in_sigma(double s) const {
    RadialJet j;
    switch (kind) {
        case BarrierKind::UpperFinite:
            j.u = epsilon * std::log1p(s / (delta * delta)) + phi;
            j.du = epsilon / (delta * delta + s);
            j.d2u = -epsilon / ((delta * delta + s) * (delta * delta + s));
            break;
        case BarrierKind::LowerFinite: {
            const double d = k * s + delta * delta;
            j.u = epsilon * std::log(delta * delta / d) + phi;
            j.du = -epsilon * k / d;
            j.d2u = epsilon * k * k / (d * d);
            break;
        }
        case BarrierKind::InfiniteLower: {
            const double a = k * s + 1.0, e = s + delta;
            j.u = std::log(k / a) + constant + 1.0 / e - 1.0 / delta;
            j.du = -k / a - 1.0 / (e * e);
            j.d2u = k * k / (a * a) + 2.0 / (e * e * e);
            break;
        }
    }
    return j;
}

std::string BarrierSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case BarrierKind::UpperFinite: os << "upper"; break;
        case BarrierKind::LowerFinite: os << "lower"; break;
        case BarrierKind::InfiniteLower: os << "h"; break;
    }
    os << "(eps=" << epsilon << ", delta=" << delta << ", k=" << k << ")";
    return os.str();
}

BarrierReport subsolution_check(const RadialProblem& p, const BarrierSpec& spec, int quadrature) {
    BarrierReport rep;
    rep.spec = spec;
    rep.worst = kInf;
    const double R = p.domain.outer;
    for (int q = 0; q < quadrature; ++q) {
        const double s = spec.delta * (q + 0.5) / quadrature;
        const RadialJet h = spec.in_sigma(s);
        const double r = R - s;
        // sigma = R - r, so d/dr = -d/dsigma
        const LambdaVec lam = radial_reduce(p, h.u, -h.du, h.d2u, r);
        ++rep.checked;
        double gap = -kInf;
        if (!cone_violation(p.cone, lam)) {
            const double f = f_eval(p.op, lam);
            if (f > 0.0)
                gap = std::log(f) - std::log(p.params.v_rhs_const * p.psi_at(r)) - 2.0 * p.params.varsigma * h.u;
        }
        rep.worst = std::min(rep.worst, gap);
        if (!(gap >= 0.0)) rep.violations.push_back(static_cast<std::size_t>(q));
    }
    rep.passed = rep.violations.empty();
    return rep;
}

BarrierReport barrier_check(const RadialProblem& p, const RadialSolution& sol, const BarrierSpec& spec,
                            int quadrature) {
    if (spec.kind == BarrierKind::InfiniteLower) return subsolution_check(p, spec, quadrature);
    BarrierReport rep;
    rep.spec = spec;
    rep.worst = kInf;
    for (std::size_t i = 0; i < sol.r.size(); ++i) {
        const double s = p.sigma(sol.r[i]);
        if (s >= spec.delta) continue;
        ++rep.checked;
        const double w = spec.in_sigma(s).u;
        const double gap = spec.kind == BarrierKind::UpperFinite ? w - sol.u[i] : sol.u[i] - w;
        rep.worst = std::min(rep.worst, gap);
        if (gap < -1e-12) rep.violations.push_back(i);
    }
    rep.passed = rep.violations.empty() && rep.checked > 0;
    return rep;
}

BarrierSearch barrier_search(const RadialProblem& p, const RadialSolution& sol) {
    BarrierSearch out;
    for (double eps : barrier_epsilons())
        for (double delta : barrier_deltas()) {
            BarrierReport up = barrier_check(p, sol, BarrierSpec::upper(eps, delta, p.phi_outer));
            BarrierReport lo = barrier_check(p, sol, BarrierSpec::lower(eps, delta, p.phi_outer));
            const bool both = up.passed && lo.passed;
            out.reports.push_back(std::move(up));
            out.reports.push_back(std::move(lo));
            if (both && !out.verified) out.verified = std::make_pair(eps, delta);
        }
    return out;
}

ComparisonReport comparison_check(const RadialProblem& p, const RadialGrid& grid, double scale, double tol,
                                  const RadialSolveOptions& opt) {
    RadialProblem q = p;
    const RadialFunction base = p.psi;
    q.psi = [base, scale](double r) { return scale * (base ? base(r) : 1.0); };
    const RadialSolution a = solve_finite(p, grid, opt);
    const RadialSolution b = solve_finite(q, grid, opt);
    ComparisonReport rep;
    rep.scale = scale;
    rep.max_violation = -kInf;
    for (std::size_t i = 0; i < a.u.size(); ++i)
        rep.max_violation = std::max(rep.max_violation, scale >= 1.0 ? b.u[i] - a.u[i] : a.u[i] - b.u[i]);
    rep.passed = rep.max_violation <= tol;
    return rep;
}

double interpolate(const std::vector<double>& r, const std::vector<double>& u, double x) {
    const std::size_t N = r.size();
    if (N < 4) throw DomainError("interpolation needs 4 nodes");
    std::size_t i = static_cast<std::size_t>(std::upper_bound(r.begin(), r.end(), x) - r.begin());
    std::size_t s = i >= 2 ? i - 2 : 0;
    s = std::min(s, N - 4);
    double v = 0.0;
    for (std::size_t a = s; a < s + 4; ++a) {
        double w = 1.0;
        for (std::size_t b = s; b < s + 4; ++b)
            if (b != a) w *= (x - r[b]) / (r[a] - r[b]);
        v += w * u[a];
    }
    return v;
}

ExhaustionResult exhaustion_solve(const RadialProblem& p, const std::vector<double>& radii, const RadialProfile& lower,
                                  int nodes, double compact_radius, const InfiniteOptions& opt) {
    if (p.domain.kind != DomainKind::Ball) throw DomainError("exhaustion runs on nested balls");
    if (radii.empty() || !std::is_sorted(radii.begin(), radii.end())) throw DomainError("radii must increase");
    ExhaustionResult out;
    out.radii = radii;
    out.compact_radius = compact_radius;
    out.min_above_lower = kInf;
    out.max_increase = -kInf;
    for (double R : radii) {
        RadialProblem q = p;
        q.domain = DomainSpec::ball(p.params.n, R);
        InfiniteOptions o = opt;
        const double eps = opt.epsilon > 0.0 ? opt.epsilon : 1.0;
        // boundary data must dominate the lower function for the comparison to apply
        const double need = lower(R).u / eps;
        while (std::log(std::pow(2.0, o.K)) < need + 1.0) ++o.K;
        const RadialGrid grid = RadialGrid::graded(q.domain, nodes);
        InfiniteResult res = solve_infinite(q, grid, o);
        const auto& last = res.sequence.back();
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double lw = lower(grid.r[i]).u;
            out.min_above_lower = std::min(out.min_above_lower, last.u[i] - lw);
            if (res.settled[i]) out.min_above_lower = std::min(out.min_above_lower, res.limit[i] - lw);
        }
        out.solutions.push_back(std::move(res));
    }
    for (std::size_t s = 1; s < out.solutions.size(); ++s) {
        const auto& a = out.solutions[s - 1];
        const auto& b = out.solutions[s];
        for (std::size_t i = 0; i < a.r.size(); ++i) {
            if (!a.settled[i] || a.r[i] > b.settled_hi) continue;
            const double ub = interpolate(b.r, b.limit, a.r[i]);
            out.max_increase = std::max(out.max_increase, ub - a.limit[i]);
        }
    }
    const auto& last = out.solutions.back();
    for (std::size_t i = 0; i < last.r.size(); ++i)
        if (last.r[i] <= compact_radius)
            out.compact_error = std::max(out.compact_error, std::abs(last.limit[i] - lower(last.r[i]).u));
    return out;
}

}  // namespace conelab
