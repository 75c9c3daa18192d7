#include "conelab/geometry.hpp"

#include "conelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace conelab {

Jet Jet::zero(int n) {
    Jet j;
    j.grad = Vec::Zero(n);
    j.hess = Mat::Zero(n, n);
    return j;
}

Jet jet_add(const Jet& a, const Jet& b) {
    Jet j;
    j.value = a.value + b.value;
    j.grad = a.grad + b.grad;
    j.hess = a.hess + b.hess;
    return j;
}

Jet jet_exp(const Jet& v, double N) {
    Jet j;
    const double e = std::exp(N * v.value);
    j.value = e;
    j.grad = N * e * v.grad;
    j.hess = N * e * (v.hess + N * v.grad * v.grad.transpose());
    return j;
}

// ---------------------------------------------------------------------------

MetricSpec MetricSpec::euclidean(int n) {
    MetricSpec m;
    m.kind = MetricKind::Euclidean;
    m.n = n;
    return m;
}

MetricSpec MetricSpec::hyperbolic_ball(int n) {
    MetricSpec m;
    m.kind = MetricKind::HyperbolicBall;
    m.n = n;
    m.u0 = [n](const Vec& x) {
        const double s = x.squaredNorm();
        if (!(s < 1.0)) throw DomainError("hyperbolic ball metric evaluated outside the unit ball");
        Jet j;
        j.value = std::log(2.0 / (1.0 - s));
        j.grad = 2.0 * x / (1.0 - s);
        j.hess = 2.0 / (1.0 - s) * Mat::Identity(n, n) + 4.0 / ((1.0 - s) * (1.0 - s)) * x * x.transpose();
        return j;
    };
    return m;
}

MetricSpec MetricSpec::conformal(int n, ScalarField u0) {
    MetricSpec m;
    m.kind = MetricKind::ConformalToEuclidean;
    m.n = n;
    m.u0 = std::move(u0);
    return m;
}

Jet MetricSpec::factor(const Vec& x) const {
    if (kind == MetricKind::Euclidean || !u0) return Jet::zero(n);
    return u0(x);
}

Mat MetricSpec::at(const Vec& x) const {
    return std::exp(2.0 * factor(x).value) * Mat::Identity(n, n);
}

std::string MetricSpec::describe() const {
    switch (kind) {
        case MetricKind::Euclidean: return "euclidean";
        case MetricKind::HyperbolicBall: return "hyperbolic_ball";
        case MetricKind::ConformalToEuclidean: return "conformal_to_euclidean";
    }
    return "?";
}

// ---------------------------------------------------------------------------

DomainSpec DomainSpec::ball(int n, double R) {
    if (!(R > 0)) throw DomainError("ball radius must be positive");
    DomainSpec d;
    d.kind = DomainKind::Ball;
    d.n = n;
    d.outer = R;
    return d;
}

DomainSpec DomainSpec::annulus(int n, double r0, double R) {
    if (!(r0 > 0 && R > r0)) throw DomainError("annulus needs 0 < r0 < R");
    DomainSpec d;
    d.kind = DomainKind::Annulus;
    d.n = n;
    d.inner = r0;
    d.outer = R;
    return d;
}

DomainSpec DomainSpec::box_minus_balls(Vec lo, Vec hi, std::vector<Hole> holes) {
    if (lo.size() != hi.size() || ((hi - lo).array() <= 0).any()) throw DomainError("box needs lo < hi componentwise");
    DomainSpec d;
    d.kind = DomainKind::BoxMinusBalls;
    d.n = static_cast<int>(lo.size());
    d.lo = std::move(lo);
    d.hi = std::move(hi);
    for (const auto& h : holes) {
        if (h.center.size() != d.lo.size() || !(h.radius > 0)) throw DomainError("malformed hole");
        Vec c = h.center;
        for (int i = 0; i < d.n; ++i)
            if (c[i] - h.radius <= d.lo[i] || c[i] + h.radius >= d.hi[i])
                throw DomainError("hole must lie strictly inside the box");
    }
    d.holes = std::move(holes);
    return d;
}

double DomainSpec::sigma(const Vec& x) const {
    switch (kind) {
        case DomainKind::Ball: return outer - x.norm();
        case DomainKind::Annulus: {
            const double r = x.norm();
            return std::min(r - inner, outer - r);
        }
        case DomainKind::BoxMinusBalls: {
            double s = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) s = std::min({s, x[i] - lo[i], hi[i] - x[i]});
            for (const auto& h : holes) s = std::min(s, (x - h.center).norm() - h.radius);
            return s;
        }
    }
    return 0.0;
}

namespace {

// Smallest positive t with |x + t d - c| = r, leaving the sphere from inside.
double exit_sphere(const Vec& x, const Vec& d, const Vec* c, double r) {
    const Vec y = c ? Vec(x - *c) : x;
    const double b = y.dot(d);
    const double disc = b * b - (y.squaredNorm() - r * r);
    if (disc < 0) return std::numeric_limits<double>::infinity();
    const double t = -b + std::sqrt(disc);
    return t > 0 ? t : std::numeric_limits<double>::infinity();
}

// Smallest positive t with |x + t d - c| = r, entering the sphere from outside.
double enter_sphere(const Vec& x, const Vec& d, const Vec* c, double r) {
    const Vec y = c ? Vec(x - *c) : x;
    const double b = y.dot(d);
    const double disc = b * b - (y.squaredNorm() - r * r);
    if (disc < 0) return std::numeric_limits<double>::infinity();
    if (b >= 0) return std::numeric_limits<double>::infinity();
    // Smaller root -b - sqrt(disc), written as c / (-b + sqrt(disc)) to avoid cancellation.
    const double t = (y.squaredNorm() - r * r) / (-b + std::sqrt(disc));
    return t > 0 ? t : std::numeric_limits<double>::infinity();
}

}  // namespace

double DomainSpec::ray_exit(const Vec& x, const Vec& d) const {
    switch (kind) {
        case DomainKind::Ball: return exit_sphere(x, d, nullptr, outer);
        case DomainKind::Annulus:
            return std::min(exit_sphere(x, d, nullptr, outer), enter_sphere(x, d, nullptr, inner));
        case DomainKind::BoxMinusBalls: {
            double t = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                if (d[i] > 0) t = std::min(t, (hi[i] - x[i]) / d[i]);
                if (d[i] < 0) t = std::min(t, (lo[i] - x[i]) / d[i]);
            }
            for (const auto& h : holes) t = std::min(t, enter_sphere(x, d, &h.center, h.radius));
            return t;
        }
    }
    return 0.0;
}

Vec DomainSpec::box_lo() const {
    if (kind == DomainKind::BoxMinusBalls) return lo;
    return Vec::Constant(n, -outer);
}

Vec DomainSpec::box_hi() const {
    if (kind == DomainKind::BoxMinusBalls) return hi;
    return Vec::Constant(n, outer);
}

std::string DomainSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case DomainKind::Ball: os << "ball(R=" << outer << ")"; break;
        case DomainKind::Annulus: os << "annulus(r0=" << inner << ", R=" << outer << ")"; break;
        case DomainKind::BoxMinusBalls: os << "box_minus_balls(holes=" << holes.size() << ")"; break;
    }
    return os.str();
}

// ---------------------------------------------------------------------------

Mat flat_conformal_a(const Jet& w, int alpha, double tau) {
    const auto n = static_cast<int>(w.grad.size());
    const Mat I = Mat::Identity(n, n);
    return alpha * (tau - 1.0) / (n - 2.0) * w.hess.trace() * I - alpha * w.hess +
           alpha * (tau - 2.0) / 2.0 * w.grad.squaredNorm() * I + alpha * w.grad * w.grad.transpose();
}

TensorField a_tau_alpha(const MetricSpec& metric, int alpha, double tau) {
    return [metric, alpha, tau](const Vec& x) { return flat_conformal_a(metric.factor(x), alpha, tau); };
}

TensorField conformal_a_tau_alpha(const ScalarField& u, const MetricSpec& base, int alpha, double tau) {
    return [u, base, alpha, tau](const Vec& x) { return flat_conformal_a(jet_add(base.factor(x), u(x)), alpha, tau); };
}

Mat ricci_from_schouten(const Mat& A, const Mat& g) {
    const auto n = static_cast<double>(A.rows());
    const double trace = (g.llt().solve(A)).trace();
    const double R = 2.0 * (n - 1.0) * trace;
    return (n - 2.0) * A + R / (2.0 * (n - 1.0)) * g;
}

Mat einstein_from_schouten(const Mat& A, const Mat& g) {
    const Mat ric = ricci_from_schouten(A, g);
    const double R = (g.llt().solve(ric)).trace();
    return ric - 0.5 * R * g;
}

TensorField background_term(const MetricSpec& metric, const ConformalParams& p) {
    const double c = (p.n - 2.0) / (p.alpha * (p.tau - 1.0));
    auto a = a_tau_alpha(metric, p.alpha, p.tau);
    return [a, c](const Vec& x) -> Mat { return c * a(x); };
}

Mat V_of_u(const Jet& u, const Vec& x, const MetricSpec& base, const ConformalParams& p, const Mat& A) {
    const int n = p.n;
    const Jet w = base.factor(x);
    const Mat I = Mat::Identity(n, n);
    const double du_dw = u.grad.dot(w.grad);
    const Mat hess_g = u.hess - (u.grad * w.grad.transpose() + w.grad * u.grad.transpose()) + du_dw * I;
    // Lap_g u g and gamma |du|_g^2 g with g = e^{2w} delta: the conformal factors cancel.
    const double lap_times_factor = u.hess.trace() + (n - 2.0) * du_dw;
    return lap_times_factor * I - p.rho * hess_g + p.gamma * u.grad.squaredNorm() * I +
           p.rho * u.grad * u.grad.transpose() + A;
}

TensorField V_of_u(const ScalarField& u, const MetricSpec& base, const ConformalParams& p, const TensorField& A) {
    return [u, base, p, A](const Vec& x) { return V_of_u(u(x), x, base, p, A(x)); };
}

Mat W_of_u(const Jet& u) {
    const auto n = u.grad.size();
    return u.hess + 0.5 * u.grad.squaredNorm() * Mat::Identity(n, n) - u.grad * u.grad.transpose();
}

// ---------------------------------------------------------------------------

SymEigen jacobi_eigen(const Mat& input) {
    const auto n = input.rows();
    Mat a = 0.5 * (input + input.transpose());
    Mat v = Mat::Identity(n, n);
    const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= 1e-17 * scale) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
    SymEigen out;
    out.values.resize(static_cast<std::size_t>(n));
    out.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values[static_cast<std::size_t>(i)] = a(order[i], order[i]);
        out.vectors.col(i) = v.col(order[i]);
    }
    return out;
}

SymEigen eigen_wrt(const Mat& g, const Mat& U) {
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success) throw MetricError("metric is not positive definite");
    const Mat L = llt.matrixL();
    const Mat Linv = L.triangularView<Eigen::Lower>().solve(Mat::Identity(g.rows(), g.cols()));
    SymEigen e = jacobi_eigen(Linv * U * Linv.transpose());
    e.vectors = Linv.transpose() * e.vectors;
    return e;
}

LambdaVec eigenvalues_wrt(const Mat& g, const Mat& U) { return eigen_wrt(g, U).values; }

// ---------------------------------------------------------------------------

double cone_margin(const ConeSpec& cone, const LambdaVec& lambda) {
    switch (cone.kind) {
        case ConeKind::Garding: {
            double scale = 0.0;
            for (double v : lambda) scale = std::max(scale, std::abs(v));
            if (scale == 0.0) return 0.0;
            const auto e = sigma_all(lambda, cone.k);
            double m = std::numeric_limits<double>::infinity();
            for (int j = 1; j <= cone.k; ++j) m = std::min(m, e[static_cast<std::size_t>(j)] / std::pow(scale, j));
            return m;
        }
        case ConeKind::PCone: {
            const double s = std::accumulate(lambda.begin(), lambda.end(), 0.0);
            LambdaVec p(lambda.size());
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = s - lambda[i];
            return cone_margin(*cone.base, p);
        }
        case ConeKind::Transformed: return cone_margin(*cone.base, mu_from_lambda(lambda, cone.rho));
    }
    return 0.0;
}

ScalarField morse_function(const DomainSpec& domain) {
    const int n = domain.n;
    switch (domain.kind) {
        case DomainKind::Ball: {
            const double R = domain.outer;
            return [n, R](const Vec& x) {
                Jet j = Jet::zero(n);
                j.value = x[0] + R;
                j.grad[0] = 1.0;
                return j;
            };
        }
        case DomainKind::Annulus:
            return [n](const Vec& x) {
                Jet j;
                const double r = x.norm();
                j.value = r;
                j.grad = x / r;
                j.hess = (Mat::Identity(n, n) - x * x.transpose() / (r * r)) / r;
                return j;
            };
        case DomainKind::BoxMinusBalls: {
            const double x0 = domain.lo[0];
            return [n, x0](const Vec& x) {
                Jet j = Jet::zero(n);
                j.value = x[0] - x0;
                j.grad[0] = 1.0;
                return j;
            };
        }
    }
    throw DomainError("no critical-point-free function for this domain");
}

std::vector<Vec> sample_points(const DomainSpec& domain, double spacing) {
    const Vec lo = domain.box_lo(), hi = domain.box_hi();
    const int n = domain.n;
    std::vector<int> counts(static_cast<std::size_t>(n));
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) {
        counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor((hi[i] - lo[i]) / spacing)) + 1;
        total *= static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]);
    }
    std::vector<Vec> pts;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    for (std::size_t t = 0; t < total; ++t) {
        std::size_t rem = t;
        Vec x(n);
        for (int i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(counts[static_cast<std::size_t>(i)]);
            x[i] = lo[i] + spacing * static_cast<double>(rem % c);
            rem /= c;
        }
        if (domain.contains(x)) pts.push_back(x);
    }
    return pts;
}

MorseResult morse_admissible(const DomainSpec& domain, const ConformalParams& params, const ConeSpec& cone,
                             const std::vector<Vec>& points, const MetricSpec& metric) {
    if (points.empty()) throw ConstructionError("morse_admissible: no points inside the domain");
    const ScalarField v = morse_function(domain);
    const TensorField A = background_term(metric, params);
    MorseResult res;
    res.points = points.size();
    res.min_grad_v = std::numeric_limits<double>::infinity();
    for (const auto& x : points) res.min_grad_v = std::min(res.min_grad_v, v(x).grad.norm());

    auto admissible_margin = [&](const ScalarField& u) -> std::optional<double> {
        double margin = std::numeric_limits<double>::infinity();
        for (const auto& x : points) {
            const Mat V = V_of_u(u(x), x, metric, params, A(x));
            if (!V.allFinite()) return std::nullopt;
            const LambdaVec lam = eigenvalues_wrt(metric.at(x), V);
            if (!contains(cone, lam)) return std::nullopt;
            margin = std::min(margin, cone_margin(cone, lam));
        }
        return margin;
    };

    for (double N = 1.0; N <= 1048576.0; N *= 2.0) {
        ScalarField u = [v, N](const Vec& x) { return jet_exp(v(x), N); };
        if (auto m = admissible_margin(u)) {
            res.N = N;
            res.u = u;
            res.margin = *m;
            // Independent pass through the field-level V operator.
            const TensorField Vf = V_of_u(u, metric, params, A);
            res.certified = std::all_of(points.begin(), points.end(),
                                        [&](const Vec& x) { return contains(cone, eigenvalues_wrt(metric.at(x), Vf(x))); });
            return res;
        }
    }
    std::ostringstream os;
    os << "no N <= 2^20 makes e^{N v} admissible on " << domain.describe() << " for (alpha, tau) = (" << params.alpha
       << ", " << params.tau << ")";
    throw ConstructionError(os.str());
}

MorseResult morse_admissible(const DomainSpec& domain, const ConformalParams& params, const ConeSpec& cone,
                             double spacing) {
    return morse_admissible(domain, params, cone, sample_points(domain, spacing), MetricSpec::euclidean(domain.n));
}

// ---------------------------------------------------------------------------

Grid3 Grid3::cube(double lo, double hi, int cells) {
    Grid3 g;
    g.nx = g.ny = g.nz = cells + 1;
    g.lo = Eigen::Vector3d::Constant(lo);
    g.h = (hi - lo) / cells;
    return g;
}

namespace {

struct Stencil1 {
    int offsets[4];
    double weights[4];
    int count;
};

Stencil1 first_derivative(int i, int count, double h) {
    if (i == 0) return {{0, 1, 2, 0}, {-1.5 / h, 2.0 / h, -0.5 / h, 0}, 3};
    if (i == count - 1) return {{0, -1, -2, 0}, {1.5 / h, -2.0 / h, 0.5 / h, 0}, 3};
    return {{-1, 1, 0, 0}, {-0.5 / h, 0.5 / h, 0, 0}, 2};
}

Stencil1 second_derivative(int i, int count, double h) {
    const double h2 = h * h;
    if (i == 0) return {{0, 1, 2, 3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}, 4};
    if (i == count - 1) return {{0, -1, -2, -3}, {2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2}, 4};
    return {{-1, 0, 1, 0}, {1.0 / h2, -2.0 / h2, 1.0 / h2, 0}, 3};
}

}  // namespace

Jet grid_jet(const GridField& u, int i, int j, int k) {
    const Grid3& g = u.grid;
    if (g.nx < 5 || g.ny < 5 || g.nz < 5) throw ResolutionError("grid needs at least 5 nodes per axis");
    const int pos[3] = {i, j, k};
    const int cnt[3] = {g.nx, g.ny, g.nz};
    auto at = [&](int a, int b, int c) { return u.values[g.index(a, b, c)]; };
    auto shifted = [&](int axis, int off, int axis2 = -1, int off2 = 0) {
        int p[3] = {i, j, k};
        p[axis] += off;
        if (axis2 >= 0) p[axis2] += off2;
        return at(p[0], p[1], p[2]);
    };
    Jet jet = Jet::zero(3);
    jet.value = at(i, j, k);
    for (int a = 0; a < 3; ++a) {
        const auto s1 = first_derivative(pos[a], cnt[a], g.h);
        for (int t = 0; t < s1.count; ++t) jet.grad[a] += s1.weights[t] * shifted(a, s1.offsets[t]);
        const auto s2 = second_derivative(pos[a], cnt[a], g.h);
        for (int t = 0; t < s2.count; ++t) jet.hess(a, a) += s2.weights[t] * shifted(a, s2.offsets[t]);
        for (int b = a + 1; b < 3; ++b) {
            const auto sb = first_derivative(pos[b], cnt[b], g.h);
            double m = 0.0;
            for (int t = 0; t < s1.count; ++t)
                for (int q = 0; q < sb.count; ++q)
                    m += s1.weights[t] * sb.weights[q] * shifted(a, s1.offsets[t], b, sb.offsets[q]);
            jet.hess(a, b) = jet.hess(b, a) = m;
        }
    }
    return jet;
}

Mat conformal_a_tau_alpha_grid(const GridField& u, int i, int j, int k, int alpha, double tau) {
    return flat_conformal_a(grid_jet(u, i, j, k), alpha, tau);
}

// ---------------------------------------------------------------------------

double ln_closed_form(int n, double r) {
    return std::log(2.0 * std::sqrt(static_cast<double>(n) * (n - 1)) / (1.0 - r * r));
}

double ln_closed_form_d1(int, double r) { return 2.0 * r / (1.0 - r * r); }

double ln_closed_form_d2(int, double r) {
    const double d = 1.0 - r * r;
    return 2.0 * (1.0 + r * r) / (d * d);
}

double ln_scalar_residual(int n, double u, double du, double d2u, double r) {
    const double drift = r > 0.0 ? du / r : d2u;
    return 2.0 * (n - 1) * (d2u + (n - 1) * drift) + (n - 1.0) * (n - 2.0) * du * du - std::exp(2.0 * u);
}

}  // namespace conelab
