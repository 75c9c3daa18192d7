#include "conelab/solver_fd.hpp"

#include "conelab/errors.hpp"
#include "conelab/parallel.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

namespace conelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kChunk = 256;

constexpr int kDir[kFdDirections][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1},  {1, 1, 0}, {1, -1, 0},
                                        {1, 0, 1}, {1, 0, -1}, {0, 1, 1}, {0, 1, -1}};
constexpr int kPair[3][2] = {{0, 1}, {0, 2}, {1, 2}};

// Shortley-Weller weights (minus, center, plus) for arms a (minus side) and b (plus side).
struct Weights {
    double m, c, p;
};

Weights second_weights(double a, double b) {
    return {2.0 / (a * (a + b)), -2.0 / (a * b), 2.0 / (b * (a + b))};
}

Weights first_weights(double a, double b) {
    return {-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))};
}

std::size_t chunks_for(std::size_t n) { return (n + kChunk - 1) / kChunk; }

Vec to_vec(const Point3& x) { return Vec(x); }

// Cyclic Jacobi for a symmetric 3x3 matrix, sweep order (0,1), (0,2), (1,2); ascending output.
void jacobi3(Eigen::Matrix3d A, Eigen::Vector3d& values, Eigen::Matrix3d& vectors) {
    Eigen::Matrix3d V = Eigen::Matrix3d::Identity();
    const double scale = A.squaredNorm();
    for (int sweep = 0; sweep < 50; ++sweep) {
        const double off = A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
        if (off <= 1e-32 * scale || off == 0.0) break;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (A(p, q) == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
                Eigen::Matrix3d P = Eigen::Matrix3d::Identity();
                P(p, p) = c;
                P(q, q) = c;
                P(p, q) = sn;
                P(q, p) = -sn;
                A = P.transpose() * A * P;
                V = V * P;
            }
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int a, int b) { return A(a, a) < A(b, b); });
    for (int m = 0; m < 3; ++m) {
        values[m] = A(order[m], order[m]);
        vectors.col(m) = V.col(order[m]);
    }
}

struct NodeDerivs {
    Eigen::Matrix3d H;
    Eigen::Vector3d G;
};

NodeDerivs derivatives(const FdDiscretization& disc, std::size_t i, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& b) {
    const auto& arms = disc.arms[i];
    auto value = [&](const Arm& a) { return a.col >= 0 ? u[a.col] : b[-1 - a.col]; };
    const double u0 = u[static_cast<Eigen::Index>(i)];
    double d2[kFdDirections];
    NodeDerivs d;
    for (int k = 0; k < kFdDirections; ++k) {
        const Arm& am = arms[2 * k];
        const Arm& ap = arms[2 * k + 1];
        const Weights w = second_weights(am.len, ap.len);
        d2[k] = w.m * value(am) + w.c * u0 + w.p * value(ap);
        if (k < 3) {
            const Weights g = first_weights(am.len, ap.len);
            d.G[k] = g.m * value(am) + g.c * u0 + g.p * value(ap);
        }
    }
    for (int k = 0; k < 3; ++k) d.H(k, k) = d2[k];
    for (int p = 0; p < 3; ++p) {
        const double hij = 0.5 * (d2[3 + 2 * p] - d2[4 + 2 * p]);
        d.H(kPair[p][0], kPair[p][1]) = hij;
        d.H(kPair[p][1], kPair[p][0]) = hij;
    }
    return d;
}

Eigen::Matrix3d w_matrix(const NodeDerivs& d) {
    return d.H + 0.5 * d.G.squaredNorm() * Eigen::Matrix3d::Identity() - d.G * d.G.transpose();
}

// Coefficients of the linearization of f~(lambda(W)) at one node, per arm and for the center.
struct RowCoeffs {
    double center = 0.0;
    double arm[2 * kFdDirections] = {};
};

RowCoeffs row_coeffs(const FdDiscretization& disc, std::size_t i, const NodeCache& c) {
    const Eigen::Matrix3d F = c.Q * c.fgrad.asDiagonal() * c.Q.transpose();
    const Eigen::Vector3d g = F.trace() * c.grad - 2.0 * F * c.grad;
    double c2[kFdDirections];
    for (int k = 0; k < 3; ++k) c2[k] = F(k, k);
    for (int p = 0; p < 3; ++p) {
        const double fij = F(kPair[p][0], kPair[p][1]);
        c2[3 + 2 * p] = fij;
        c2[4 + 2 * p] = -fij;
    }
    RowCoeffs r;
    const auto& arms = disc.arms[i];
    for (int k = 0; k < kFdDirections; ++k) {
        const double a = arms[2 * k].len, b = arms[2 * k + 1].len;
        const Weights w = second_weights(a, b);
        r.arm[2 * k] += c2[k] * w.m;
        r.arm[2 * k + 1] += c2[k] * w.p;
        r.center += c2[k] * w.c;
        if (k < 3) {
            const Weights f1 = first_weights(a, b);
            r.arm[2 * k] += g[k] * f1.m;
            r.arm[2 * k + 1] += g[k] * f1.p;
            r.center += g[k] * f1.c;
        }
    }
    return r;
}

struct NodeFailure {
    std::size_t node = std::numeric_limits<std::size_t>::max();
    std::string what, inequality;
};

std::string node_where(const FdDiscretization& disc, std::size_t i) {
    const Point3 x = disc.point(i);
    std::ostringstream os;
    os << "unknown " << i << " (x=" << x[0] << ", " << x[1] << ", " << x[2] << ")";
    return os.str();
}

enum class Form { Plain, Log };

// Refreshes the cache and returns the residual in the requested form. With a direction v the
// residual is taken at u + t v, with derivatives D_h u + t D_h v.
Eigen::VectorXd assemble(NewtonState& s, Form form, const Eigen::VectorXd* v = nullptr, double t = 0.0) {
    const FdDiscretization& disc = *s.disc;
    const GridProblem& p = *s.problem;
    const std::size_t N = disc.unknowns();
    const double vs = p.params.varsigma;
    s.cache.resize(N);
    Eigen::VectorXd R(static_cast<Eigen::Index>(N));
    const std::size_t chunks = chunks_for(N);
    std::vector<NodeFailure> fails(chunks);
    const Eigen::VectorXd zero_b = Eigen::VectorXd::Zero(s.bvalues.size());
    parallel_chunks(
        chunks,
        [&](std::size_t ch) {
            const std::size_t end = std::min(N, (ch + 1) * kChunk);
            LambdaVec lam(3);
            for (std::size_t i = ch * kChunk; i < end; ++i) {
                NodeDerivs d = derivatives(disc, i, s.u, s.bvalues);
                if (v) {
                    const NodeDerivs dv = derivatives(disc, i, *v, zero_b);
                    d.H += t * dv.H;
                    d.G += t * dv.G;
                }
                NodeCache& c = s.cache[i];
                jacobi3(w_matrix(d), c.lambda, c.Q);
                c.grad = d.G;
                for (int m = 0; m < 3; ++m) lam[m] = c.lambda[m];
                if (!c.lambda.allFinite()) {
                    fails[ch] = {i, "non-finite W at " + node_where(disc, i), "finite W"};
                    return;
                }
                if (auto why = cone_violation(p.tilde_cone, lam)) {
                    fails[ch] = {i, "lambda(W) left the transformed cone at " + node_where(disc, i), *why};
                    return;
                }
                c.f = f_eval(p.tilde_op, lam);
                if (!(c.f > 0.0)) {
                    fails[ch] = {i, "f~ <= 0 at " + node_where(disc, i), "f~ > 0"};
                    return;
                }
                const LambdaVec g = f_grad(p.tilde_op, lam);
                for (int m = 0; m < 3; ++m) c.fgrad[m] = g[m];
                c.margin = cone_margin(p.tilde_cone, lam);
                const auto ii = static_cast<Eigen::Index>(i);
                const double ui = v ? s.u[ii] + t * (*v)[ii] : s.u[ii];
                if (form == Form::Plain)
                    R[ii] = c.f - std::exp(s.log_rhs[ii] + 2.0 * vs * ui);
                else
                    R[ii] = std::log(c.f) - 2.0 * vs * ui - s.log_rhs[ii];
            }
        },
        s.threads);
    for (const auto& f : fails) {
        if (f.node != std::numeric_limits<std::size_t>::max()) {
            s.cache_version = ~0ull;
            throw FeasibilityError(f.what, f.inequality, static_cast<std::ptrdiff_t>(f.node));
        }
    }
    s.cache_version = s.version;
    return R;
}

void require_fresh(const NewtonState& s) {
    if (s.cache_version != s.version) throw std::logic_error("linearization requested on a stale eigen cache");
}

// Jacobian of the log form: (1/f~) L_W - 2 varsigma.
Eigen::SparseMatrix<double, Eigen::RowMajor> log_jacobian(const NewtonState& s) {
    require_fresh(s);
    const FdDiscretization& disc = *s.disc;
    const std::size_t N = disc.unknowns();
    const double vs = s.problem->params.varsigma;
    const std::size_t chunks = chunks_for(N);
    std::vector<std::vector<Eigen::Triplet<double>>> parts(chunks);
    parallel_chunks(
        chunks,
        [&](std::size_t ch) {
            const std::size_t end = std::min(N, (ch + 1) * kChunk);
            auto& t = parts[ch];
            t.reserve((end - ch * kChunk) * 19);
            for (std::size_t i = ch * kChunk; i < end; ++i) {
                const NodeCache& c = s.cache[i];
                const RowCoeffs r = row_coeffs(disc, i, c);
                const int row = static_cast<int>(i);
                t.emplace_back(row, row, r.center / c.f - 2.0 * vs);
                for (int a = 0; a < 2 * kFdDirections; ++a) {
                    const int col = disc.arms[i][a].col;
                    if (col >= 0) t.emplace_back(row, col, r.arm[a] / c.f);
                }
            }
        },
        s.threads);
    std::vector<Eigen::Triplet<double>> all;
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    all.reserve(total);
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    const auto n = static_cast<Eigen::Index>(N);
    Eigen::SparseMatrix<double, Eigen::RowMajor> J(n, n);
    J.setFromTriplets(all.begin(), all.end());
    return J;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Eigen::VectorXd sample(const FdDiscretization& disc, const PointFunction& fn, bool boundary) {
    const std::size_t N = boundary ? disc.bpoints.size() : disc.unknowns();
    Eigen::VectorXd v(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i)
        v[static_cast<Eigen::Index>(i)] = fn(boundary ? disc.bpoints[i] : disc.point(i));
    return v;
}

Eigen::VectorXd log_rhs_of(const GridProblem& p, const FdDiscretization& disc) {
    const Eigen::VectorXd psi = sample(disc, [&](const Point3& x) { return p.psi_at(x); }, false);
    if (!(psi.size() == 0 || psi.minCoeff() > 0.0)) throw ParameterError("psi must be positive");
    return (p.rhs_const * psi).array().log().matrix();
}

// Per-node rounding floor of the log residual: eps times the magnitudes of the summed terms.
Eigen::VectorXd rounding_floor(const NewtonState& s, double factor) {
    const FdDiscretization& disc = *s.disc;
    const std::size_t N = disc.unknowns();
    const double vs = s.problem->params.varsigma;
    Eigen::VectorXd fl(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const NodeCache& c = s.cache[i];
        const RowCoeffs r = row_coeffs(disc, i, c);
        double acc = std::abs(r.center * s.u[ii]);
        for (int a = 0; a < 2 * kFdDirections; ++a) {
            const Arm& arm = disc.arms[i][a];
            acc += std::abs(r.arm[a] * (arm.col >= 0 ? s.u[arm.col] : s.bvalues[-1 - arm.col]));
        }
        acc = acc / c.f + 2.0 * vs * std::abs(s.u[ii]) + std::abs(s.log_rhs[ii]);
        fl[ii] = factor * std::numeric_limits<double>::epsilon() * acc;
    }
    return fl;
}

bool converged(const NewtonState& s, const Eigen::VectorXd& R, const FdSolveOptions& o) {
    if (inf_norm(R) <= o.tol) return true;
    const Eigen::VectorXd fl = rounding_floor(s, o.rounding_factor);
    return (R.cwiseAbs().array() <= o.tol + fl.array()).all();
}

struct Progress {
    std::vector<double> history, steps, gateaux;
    std::vector<int> krylov;
    int iterations = 0;
};

// Damped Newton on the log form with fixed boundary values and right-hand side.
Eigen::VectorXd newton_fixed(const GridProblem& p, const FdDiscretization& disc, const Eigen::VectorXd& u0,
                             const Eigen::VectorXd& b, const Eigen::VectorXd& log_rhs, const FdSolveOptions& o,
                             Progress& prog) {
    NewtonState s = make_state(p, disc, u0, b, o.threads);
    s.log_rhs = log_rhs;
    Eigen::VectorXd R = assemble(s, Form::Log);
    double norm = inf_norm(R);
    std::vector<double> local{norm};
    for (int it = 0; !converged(s, R, o); ++it) {
        if (it >= o.max_iter) {
            std::ostringstream os;
            os << "fd Newton: no convergence in " << o.max_iter << " iterations, residual " << norm;
            throw ConvergenceError(os.str(), local);
        }
        const auto J = log_jacobian(s);
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::DiagonalPreconditioner<double>> solver;
        solver.setTolerance(o.krylov_tol);
        solver.setMaxIterations(o.krylov_max);
        solver.compute(J);
        const Eigen::VectorXd step = solver.solve(-R);
        prog.krylov.push_back(static_cast<int>(solver.iterations()));
        if (!step.allFinite()) throw ConvergenceError("fd Newton: Krylov solve produced non-finite values", local);

        const Eigen::VectorXd base = s.u;
        double alpha = 1.0;
        std::optional<std::string> last_failure;
        for (int halvings = 0;; ++halvings) {
            if (halvings > o.max_halvings) {
                std::ostringstream os;
                os << "fd Newton: line search failed after " << o.max_halvings << " halvings, residual " << norm;
                if (last_failure) os << " (" << *last_failure << ")";
                s.set_iterate(base);
                assemble(s, Form::Log);
                throw ConvergenceError(os.str(), local);
            }
            s.set_iterate(base + alpha * step);
            try {
                const Eigen::VectorXd Rt = assemble(s, Form::Log);
                const double nt = inf_norm(Rt);
                if (nt <= (1.0 - o.armijo * alpha) * norm) {
                    R = Rt;
                    norm = nt;
                    break;
                }
            } catch (const FeasibilityError& e) {
                last_failure = e.what();
            }
            alpha *= 0.5;
        }
        ++prog.iterations;
        local.push_back(norm);
        prog.history.push_back(norm);
        prog.steps.push_back(alpha);
        if (o.gateaux_every > 0 && prog.iterations % o.gateaux_every == 0) {
            const double err = gateaux_check(s);
            prog.gateaux.push_back(err);
            if (err > 1e-4) {
                std::ostringstream os;
                os << "fd Newton: linearization disagrees with the residual (relative error " << err << ")";
                throw std::logic_error(os.str());
            }
        }
    }
    return s.u;
}

struct Endpoints {
    Eigen::VectorXd u, b0, r0, b1, r1;
    /// Interior predictor direction: phi at the unknowns minus the start.
    Eigen::VectorXd du;
};

// Homotopy (b, log rhs)_s = (1 - s) (b0, r0) + s (b1, r1), starting from a solution at s = 0.
void continuation(const GridProblem& p, const FdDiscretization& disc, const Endpoints& e, const FdSolveOptions& o,
                  FdSolution& out) {
    Progress prog;
    Eigen::VectorXd u = newton_fixed(p, disc, e.u, e.b0, e.r0, o, prog);
    out.continuation = {0.0};
    double s = 0.0, ds = 1.0;
    if (inf_norm(e.b1 - e.b0) == 0.0 && inf_norm(e.r1 - e.r0) == 0.0) s = 1.0;
    while (s < 1.0) {
        const double st = std::min(1.0, s + ds);
        try {
            const Eigen::VectorXd guess = u + (st - s) * e.du;
            u = newton_fixed(p, disc, guess, (1.0 - st) * e.b0 + st * e.b1, (1.0 - st) * e.r0 + st * e.r1, o, prog);
            s = st;
            out.continuation.push_back(s);
            ds = std::min(2.0 * ds, 1.0);
        } catch (const FeasibilityError&) {
            ds *= 0.5;
            if (ds < 1.0 / 1024) throw;
        } catch (const ConvergenceError&) {
            ds *= 0.5;
            if (ds < 1.0 / 1024) throw;
        }
    }
    out.u = u;
    out.bvalues = e.b1;
    out.log_rhs = e.r1;
    out.history = std::move(prog.history);
    out.steps = std::move(prog.steps);
    out.krylov_iterations = std::move(prog.krylov);
    out.gateaux_errors = std::move(prog.gateaux);
    out.iterations = prog.iterations;
    NewtonState fin = make_state(p, disc, out.u, out.bvalues, o.threads);
    fin.log_rhs = out.log_rhs;
    out.residual = inf_norm(assemble(fin, Form::Log));
    out.min_margin = std::numeric_limits<double>::infinity();
    for (const auto& c : fin.cache) out.min_margin = std::min(out.min_margin, c.margin);
}

}  // namespace

// ---------------------------------------------------------------------------

GridProblem GridProblem::make(const DomainSpec& domain, double h, const ConformalParams& params,
                              const OperatorSpec& op, const ConeSpec& cone) {
    if (domain.n != 3 || params.n != 3 || op.n != 3 || cone.n != 3)
        throw DomainError("the grid solver works in dimension 3");
    if (!(h > 0.0)) throw DomainError("grid spacing must be positive");
    GridProblem p;
    p.domain = domain;
    p.h = h;
    p.params = params;
    p.op = op;
    p.cone = cone;
    p.tilde_op = OperatorSpec::transformed(op, params.rho);
    p.tilde_cone = ConeSpec::transformed(cone, params.rho);
    p.rhs_const = params.v_rhs_const / std::pow(params.n - params.rho, op.homogeneity());
    return p;
}

std::string GridProblem::describe() const {
    std::ostringstream os;
    os << "fd{" << domain.describe() << ", h=" << h << ", alpha=" << params.alpha << ", tau=" << params.tau
       << ", rho=" << params.rho << ", op=" << tilde_op.describe() << ", cone=" << tilde_cone.describe()
       << ", C=" << rhs_const << "}";
    return os.str();
}

Point3 FdDiscretization::point(std::size_t unknown) const {
    const std::size_t g = node_of[unknown];
    const auto nx = static_cast<std::size_t>(grid.nx), ny = static_cast<std::size_t>(grid.ny);
    const int i = static_cast<int>(g % nx);
    const int j = static_cast<int>((g / nx) % ny);
    const int k = static_cast<int>(g / (nx * ny));
    return grid.point(i, j, k);
}

FdDiscretization discretize(const DomainSpec& domain, double h) {
    if (domain.n != 3) throw DomainError("the grid solver works in dimension 3");
    auto resolve = [h](double radius, const std::string& what) {
        if (2.0 * radius / h < 4.0 - 1e-12) {
            std::ostringstream os;
            os << what << " of radius " << radius << " spans " << 2.0 * radius / h << " cells; at least 4 needed";
            throw ResolutionError(os.str());
        }
    };
    if (domain.kind == DomainKind::Annulus) resolve(domain.inner, "inner sphere");
    for (const auto& hole : domain.holes) resolve(hole.radius, "hole");

    FdDiscretization d;
    const Vec lo = domain.box_lo(), hi = domain.box_hi();
    d.grid.lo = Eigen::Vector3d(lo[0], lo[1], lo[2]);
    d.grid.h = h;
    int* counts[3] = {&d.grid.nx, &d.grid.ny, &d.grid.nz};
    for (int a = 0; a < 3; ++a) *counts[a] = static_cast<int>(std::floor((hi[a] - lo[a]) / h + 1e-9)) + 1;
    if (d.grid.nx < 5 || d.grid.ny < 5 || d.grid.nz < 5) throw ResolutionError("grid needs at least 5 nodes per axis");

    const Grid3& g = d.grid;
    d.unknown_of.assign(g.size(), -1);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const double s = domain.sigma(to_vec(g.point(i, j, k)));
                if (s > d.snap * h) {
                    d.unknown_of[idx] = static_cast<int>(d.node_of.size());
                    d.node_of.push_back(idx);
                } else if (s > 0.0) {
                    d.unknown_of[idx] = -2;
                }
            }
    if (d.node_of.empty()) throw ResolutionError("no interior grid nodes");

    d.arms.resize(d.node_of.size());
    for (std::size_t u = 0; u < d.node_of.size(); ++u) {
        const std::size_t idx = d.node_of[u];
        const int i = static_cast<int>(idx % g.nx);
        const int j = static_cast<int>((idx / g.nx) % g.ny);
        const int k = static_cast<int>(idx / (static_cast<std::size_t>(g.nx) * g.ny));
        const Point3 x = g.point(i, j, k);
        for (int dir = 0; dir < kFdDirections; ++dir) {
            const Eigen::Vector3d step(kDir[dir][0], kDir[dir][1], kDir[dir][2]);
            const double L = step.norm() * h;
            for (int side = 0; side < 2; ++side) {
                const int sg = side == 0 ? -1 : 1;
                const Eigen::Vector3d dhat = sg * step / step.norm();
                const double t = domain.ray_exit(to_vec(x), to_vec(dhat));
                Arm& arm = d.arms[u][2 * dir + side];
                const int ni = i + sg * kDir[dir][0], nj = j + sg * kDir[dir][1], nk = k + sg * kDir[dir][2];
                const bool in_grid = ni >= 0 && nj >= 0 && nk >= 0 && ni < g.nx && nj < g.ny && nk < g.nz;
                if (t >= L * (1.0 - 1e-12) && in_grid) {
                    const int q = d.unknown_of[g.index(ni, nj, nk)];
                    arm.len = L;
                    if (q >= 0) {
                        arm.col = q;
                    } else {
                        arm.col = -1 - static_cast<int>(d.bpoints.size());
                        d.bpoints.push_back(g.point(ni, nj, nk));
                    }
                } else {
                    arm.len = std::min(t, L);
                    arm.col = -1 - static_cast<int>(d.bpoints.size());
                    d.bpoints.push_back(x + arm.len * dhat);
                }
            }
        }
    }
    return d;
}

void NewtonState::set_iterate(const Eigen::VectorXd& u_new) {
    u = u_new;
    ++version;
}

NewtonState make_state(const GridProblem& problem, const FdDiscretization& disc, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& bvalues, int threads) {
    if (static_cast<std::size_t>(u.size()) != disc.unknowns() ||
        static_cast<std::size_t>(bvalues.size()) != disc.bpoints.size())
        throw DomainError("state size does not match the discretization");
    NewtonState s;
    s.problem = &problem;
    s.disc = &disc;
    s.u = u;
    s.bvalues = bvalues;
    s.threads = threads;
    s.log_rhs = log_rhs_of(problem, disc);
    return s;
}

Eigen::VectorXd boundary_values(const GridProblem& problem, const FdDiscretization& disc) {
    return sample(disc, [&](const Point3& x) { return problem.phi_at(x); }, true);
}

Eigen::VectorXd assemble_residual(NewtonState& state) { return assemble(state, Form::Plain); }

Eigen::VectorXd linearize_apply(const NewtonState& s, const Eigen::VectorXd& v) {
    require_fresh(s);
    const FdDiscretization& disc = *s.disc;
    const std::size_t N = disc.unknowns();
    const double two_vs = 2.0 * s.problem->params.varsigma;
    Eigen::VectorXd out(static_cast<Eigen::Index>(N));
    parallel_chunks(
        chunks_for(N),
        [&](std::size_t ch) {
            const std::size_t end = std::min(N, (ch + 1) * kChunk);
            for (std::size_t i = ch * kChunk; i < end; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const RowCoeffs r = row_coeffs(disc, i, s.cache[i]);
                double acc = r.center * v[ii];
                for (int a = 0; a < 2 * kFdDirections; ++a) {
                    const int col = disc.arms[i][a].col;
                    if (col >= 0) acc += r.arm[a] * v[col];
                }
                acc -= two_vs * std::exp(s.log_rhs[ii] + two_vs * s.u[ii]) * v[ii];
                out[ii] = acc;
            }
        },
        s.threads);
    return out;
}

double gateaux_check(NewtonState& state, double t, std::uint64_t seed) {
    NewtonState probe = state;
    const Eigen::VectorXd F0 = assemble(probe, Form::Plain);
    // Seeded smooth direction: three plane waves with random wave vectors of length <= 3, tapered
    // by (sigma / (sigma + 1/4))^2 so that it meets the zero boundary perturbation without a layer of width h.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::Vector3d k[3];
    double phase[3], amp[3];
    for (int m = 0; m < 3; ++m) {
        k[m] = Eigen::Vector3d(dist(rng), dist(rng), dist(rng)) * std::sqrt(3.0);
        phase[m] = 3.0 * dist(rng);
        amp[m] = dist(rng);
    }
    Eigen::VectorXd v(probe.u.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const Point3 x = probe.disc->point(static_cast<std::size_t>(i));
        v[i] = 0.0;
        for (int m = 0; m < 3; ++m) v[i] += amp[m] * std::sin(k[m].dot(x) + phase[m]);
        const double sg = probe.problem->domain.sigma(to_vec(x));
        v[i] *= (sg / (sg + 0.25)) * (sg / (sg + 0.25));
    }
    const Eigen::VectorXd Lv = linearize_apply(probe, v);
    // Stencils are linear, so D_h(u + t v) = D_h u + t D_h v; forming it that way cancels the rounding of D_h u.
    const Eigen::VectorXd F1 = assemble(probe, Form::Plain, &v, t);
    const double scale = inf_norm(Lv);
    if (scale == 0.0) return 0.0;
    return inf_norm((F1 - F0) / t - Lv) / scale;
}

PointFunction fd_manufactured_psi(const GridProblem& problem, const std::function<Jet(const Vec&)>& exact) {
    const OperatorSpec op = problem.tilde_op;
    const double C = problem.rhs_const, vs = problem.params.varsigma;
    return [op, C, vs, exact](const Point3& x) {
        const Jet j = exact(to_vec(x));
        const LambdaVec lam = jacobi_eigen(W_of_u(j)).values;
        return f_eval(op, lam) * std::exp(-2.0 * vs * j.value) / C;
    };
}

namespace {

std::optional<Endpoints> start_endpoints(const GridProblem& p, const FdDiscretization& disc, const PointFunction& u) {
    Endpoints e;
    e.u = sample(disc, u, false);
    e.b0 = sample(disc, u, true);
    if (!e.u.allFinite() || !e.b0.allFinite() || std::max(inf_norm(e.u), inf_norm(e.b0)) > 50.0) return std::nullopt;
    NewtonState s = make_state(p, disc, e.u, e.b0);
    s.log_rhs.setZero();
    Eigen::VectorXd R;
    try {
        R = assemble(s, Form::Log);
    } catch (const FeasibilityError&) {
        return std::nullopt;
    }
    // With log rhs = 0 the log residual is log f~ - 2 varsigma u, which makes u an exact discrete solution.
    e.r0 = R;
    e.b1 = boundary_values(p, disc);
    e.r1 = log_rhs_of(p, disc);
    e.du = sample(disc, [&](const Point3& x) { return p.phi_at(x); }, false) - e.u;
    return e;
}

std::vector<FdStart> start_candidates(const GridProblem& p) {
    std::vector<FdStart> out;
    try {
        const MorseResult m = morse_admissible(p.domain, p.params, p.cone, std::max(p.h, 0.1));
        const ScalarField mu = m.u;
        out.push_back({[mu](const Point3& x) { return mu(to_vec(x)).value; }, "morse"});
    } catch (const ConstructionError&) {
    }
    const Point3 c = 0.5 * (Point3(p.domain.box_lo()) + Point3(p.domain.box_hi()));
    const double R2 = (Point3(p.domain.box_hi()) - c).squaredNorm();
    for (double a = 0.2 / R2; a > 1e-6; a *= 0.5)
        out.push_back({[c, a](const Point3& x) { return 0.5 * a * (x - c).squaredNorm(); }, "quadratic"});
    return out;
}

}  // namespace

FdStart fd_admissible_start(const GridProblem& problem, const FdDiscretization& disc) {
    for (auto& st : start_candidates(problem))
        if (start_endpoints(problem, disc, st.u)) return st;
    throw ConstructionError("no admissible start for " + problem.describe());
}

FdSolution newton_solve(const GridProblem& problem, const FdSolveOptions& options) {
    FdSolution sol;
    sol.disc = discretize(problem.domain, problem.h);
    std::optional<std::string> last;
    bool tried = false;
    // A start whose homotopy path fails falls through to the next admissible candidate.
    for (auto& st : start_candidates(problem)) {
        const auto e = start_endpoints(problem, sol.disc, st.u);
        if (!e) continue;
        tried = true;
        try {
            continuation(problem, sol.disc, *e, options, sol);
            sol.start_kind = st.kind;
            return sol;
        } catch (const FeasibilityError& err) {
            if (st.kind != "morse") throw;
            last = err.what();
        } catch (const ConvergenceError& err) {
            if (st.kind != "morse") throw;
            last = err.what();
        }
    }
    if (!tried) throw ConstructionError("no admissible start for " + problem.describe());
    throw ConvergenceError("fd Newton: no start reached the target" + (last ? ": " + *last : std::string()));
}

FdSolution newton_solve_from(const GridProblem& problem, const FdSolution& previous, const FdSolveOptions& options) {
    FdSolution sol;
    sol.disc = previous.disc;
    sol.start_kind = "previous";
    Endpoints e{previous.u, previous.bvalues, previous.log_rhs, boundary_values(problem, sol.disc),
                log_rhs_of(problem, sol.disc), Eigen::VectorXd()};
    e.du = sample(sol.disc, [&](const Point3& x) { return problem.phi_at(x); }, false) - previous.u;
    continuation(problem, sol.disc, e, options, sol);
    return sol;
}

GridField FdSolution::field(const GridProblem& problem, const std::string& name) const {
    GridField f;
    f.grid = disc.grid;
    f.name = name;
    f.values.assign(disc.grid.size(), kNaN);
    const Grid3& g = disc.grid;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const int q = disc.unknown_of[idx];
                if (q >= 0)
                    f.values[idx] = u[q];
                else if (q == -2)
                    f.values[idx] = problem.phi_at(g.point(i, j, k));
            }
    return f;
}

// ---------------------------------------------------------------------------

ObstructionReport obstruction_experiment(const DomainSpec& domain, double h, int K, const FdSolveOptions& options,
                                         double compact_distance) {
    if (K < 1) throw DomainError("obstruction experiment needs K >= 1");
    const ConformalParams params = conformal_params_unchecked(1, 2.0, 3, 1.0);
    ObstructionReport rep;
    rep.domain = domain.describe();
    rep.holes = static_cast<int>(domain.holes.size());
    rep.h = h;
    rep.compact_distance = compact_distance;
    const std::pair<std::string, std::pair<OperatorSpec, ConeSpec>> arms[] = {
        {"sigma_1/3 on Gamma_1", {OperatorSpec::sigma(3, 1, 1.0, true), ConeSpec::garding(3, 1)}},
        {"sigma_3^(1/3) on Gamma_3", {OperatorSpec::sigma_root(3, 3), ConeSpec::garding(3, 3)}},
    };
    for (const auto& [name, pair] : arms) {
        ObstructionArm arm;
        arm.name = name;
        GridProblem p = GridProblem::make(domain, h, params, pair.first, pair.second);
        std::optional<FdSolution> prev;
        std::vector<char> compact;
        bool ok = true;
        for (int j = 0; j <= K && ok; ++j) {
            const double k = std::ldexp(1.0, j);
            ObstructionStage st;
            st.k = static_cast<int>(k);
            st.increment = st.compact_increment = kNaN;
            p.phi = [k](const Point3&) { return std::log(k); };
            try {
                FdSolution s = prev ? newton_solve_from(p, *prev, options) : newton_solve(p, options);
                st.converged = true;
                st.iterations = s.iterations;
                st.max_u = s.u.maxCoeff();
                st.min_margin = s.min_margin;
                if (compact.empty()) {
                    compact.resize(s.disc.unknowns());
                    for (std::size_t i = 0; i < compact.size(); ++i)
                        compact[i] = domain.sigma(to_vec(s.disc.point(i))) >= compact_distance;
                }
                if (prev) {
                    const Eigen::VectorXd d = s.u - prev->u;
                    st.increment = d.maxCoeff();
                    double c = -std::numeric_limits<double>::infinity();
                    for (std::size_t i = 0; i < compact.size(); ++i)
                        if (compact[i]) c = std::max(c, d[static_cast<Eigen::Index>(i)]);
                    st.compact_increment = c;
                }
                prev = std::move(s);
            } catch (const FeasibilityError& e) {
                st.failure = std::string("feasibility: ") + e.what() + " [" + e.inequality() + "]";
                ok = false;
            } catch (const ConvergenceError& e) {
                st.failure = std::string("convergence: ") + e.what();
                ok = false;
            } catch (const ConstructionError& e) {
                st.failure = std::string("start: ") + e.what();
                ok = false;
            } catch (const std::logic_error& e) {
                st.failure = std::string("linearization check: ") + e.what();
                ok = false;
            }
            arm.stages.push_back(st);
        }
        arm.all_converged = ok;
        const auto& S = arm.stages;
        const std::size_t m = S.size();
        arm.settling = ok && m >= 5 && S[m - 1].compact_increment < S[m - 2].compact_increment &&
                       S[m - 2].compact_increment < S[m - 3].compact_increment &&
                       S[m - 3].compact_increment < S[m - 4].compact_increment;
        rep.arms.push_back(std::move(arm));
    }
    return rep;
}

}  // namespace conelab
