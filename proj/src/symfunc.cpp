#include "conelab/symfunc.hpp"

#include "conelab/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

namespace conelab {

SortedLambda sort_ascending(std::span<const double> lambda) {
    SortedLambda out;
    out.perm.resize(lambda.size());
    std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
    std::stable_sort(out.perm.begin(), out.perm.end(),
                     [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });
    out.values.reserve(lambda.size());
    for (std::size_t i : out.perm) out.values.push_back(lambda[i]);
    return out;
}

std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    }
    return c;
}

namespace {

void check_order(std::size_t n, int k, int lo) {
    if (k < lo || k > static_cast<int>(n)) {
        std::ostringstream os;
        os << "order k=" << k << " outside [" << lo << ", " << n << "]";
        throw DomainError(os.str());
    }
}

// Coefficients e_0..e_kmax of prod (t + x_i), skipping the indices in `skip`.
void sym_coeffs(std::span<const double> x, int kmax, std::size_t skip1, std::size_t skip2, double* e) {
    std::fill(e, e + kmax + 1, 0.0);
    e[0] = 1.0;
    int seen = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i == skip1 || i == skip2) continue;
        ++seen;
        for (int j = std::min(seen, kmax); j >= 1; --j) e[j] += x[i] * e[j - 1];
    }
}

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

}  // namespace

std::vector<double> sigma_all(std::span<const double> lambda, int kmax) {
    check_order(lambda.size(), kmax, 0);
    std::vector<double> e(static_cast<std::size_t>(kmax) + 1);
    sym_coeffs(lambda, kmax, kNone, kNone, e.data());
    return e;
}

double sigma(std::span<const double> lambda, int k) {
    check_order(lambda.size(), k, 0);
    return sigma_all(lambda, k)[static_cast<std::size_t>(k)];
}

LambdaVec sigma_grad(std::span<const double> lambda, int k) {
    check_order(lambda.size(), k, 1);
    LambdaVec g(lambda.size());
    std::vector<double> e(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        sym_coeffs(lambda, k - 1, i, kNone, e.data());
        g[i] = e[static_cast<std::size_t>(k - 1)];
    }
    return g;
}

Eigen::MatrixXd sigma_hess(std::span<const double> lambda, int k) {
    check_order(lambda.size(), k, 1);
    const auto n = static_cast<Eigen::Index>(lambda.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    if (k < 2) return h;
    std::vector<double> e(static_cast<std::size_t>(k - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            sym_coeffs(lambda, k - 2, static_cast<std::size_t>(i), static_cast<std::size_t>(j), e.data());
            h(i, j) = h(j, i) = e[static_cast<std::size_t>(k - 2)];
        }
    }
    return h;
}

double sigma_by_subsets(std::span<const double> lambda, int k) {
    check_order(lambda.size(), k, 0);
    const std::size_t n = lambda.size();
    if (n > 20) throw DomainError("subset enumeration limited to n <= 20");
    double total = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k) continue;
        double prod = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) prod *= lambda[i];
        total += prod;
    }
    return total;
}

// ---------------------------------------------------------------------------

OperatorSpec OperatorSpec::sigma(int n, int k, double power, bool normalized) {
    OperatorSpec op;
    op.kind = OperatorKind::Sigma;
    op.n = n;
    op.k = k;
    op.l = 0;
    op.power = power;
    op.normalized = normalized;
    check_order(static_cast<std::size_t>(n), k, 1);
    return op;
}

OperatorSpec OperatorSpec::sigma_root(int n, int k) { return sigma(n, k, 1.0 / k, true); }

OperatorSpec OperatorSpec::sigma_ratio(int n, int k, int l, double power, bool normalized) {
    if (!(0 <= l && l < k && k <= n)) throw DomainError("sigma_ratio needs 0 <= l < k <= n");
    OperatorSpec op;
    op.kind = OperatorKind::SigmaRatio;
    op.n = n;
    op.k = k;
    op.l = l;
    op.power = power;
    op.normalized = normalized;
    return op;
}

OperatorSpec OperatorSpec::p_composed(const OperatorSpec& base, bool normalized) {
    OperatorSpec op;
    op.kind = OperatorKind::PComposed;
    op.n = base.n;
    op.normalized = normalized;
    op.base = std::make_shared<const OperatorSpec>(base);
    return op;
}

OperatorSpec OperatorSpec::transformed(const OperatorSpec& base, double rho) {
    if (rho == 0.0 || rho == static_cast<double>(base.n))
        throw ParameterError("transform parameter rho must differ from 0 and n");
    OperatorSpec op;
    op.kind = OperatorKind::Transformed;
    op.n = base.n;
    op.rho = rho;
    op.normalized = base.normalized;
    op.base = std::make_shared<const OperatorSpec>(base);
    return op;
}

double OperatorSpec::homogeneity() const {
    switch (kind) {
        case OperatorKind::Sigma:
        case OperatorKind::SigmaRatio: return static_cast<double>(k - l) * power;
        case OperatorKind::PComposed:
        case OperatorKind::Transformed: return base->homogeneity();
    }
    return 0.0;
}

std::string OperatorSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case OperatorKind::Sigma: os << "sigma(" << k << ")^" << power; break;
        case OperatorKind::SigmaRatio: os << "sigma_ratio(" << k << "," << l << ")^" << power; break;
        case OperatorKind::PComposed: os << "p_composed[" << base->describe() << "]"; break;
        case OperatorKind::Transformed: os << "transformed[" << base->describe() << ", rho=" << rho << "]"; break;
    }
    if (normalized && kind != OperatorKind::Transformed) os << " normalized";
    return os.str();
}

// ---------------------------------------------------------------------------

namespace {

LambdaVec apply_p(std::span<const double> x) {
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    LambdaVec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = s - x[i];
    return y;
}

LambdaVec apply_mu(std::span<const double> x, double rho) {
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    const double d = static_cast<double>(x.size()) - rho;
    LambdaVec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (s - rho * x[i]) / d;
    return y;
}

Eigen::MatrixXd p_matrix(Eigen::Index n) {
    return Eigen::MatrixXd::Ones(n, n) - Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd mu_matrix(Eigen::Index n, double rho) {
    return (Eigen::MatrixXd::Ones(n, n) - rho * Eigen::MatrixXd::Identity(n, n)) / (static_cast<double>(n) - rho);
}

double leaf_norm(const OperatorSpec& op) {
    if (!op.normalized) return 1.0;
    const double ratio = static_cast<double>(binomial(op.n, op.k)) / static_cast<double>(binomial(op.n, op.l));
    return 1.0 / std::pow(ratio, op.power);
}

std::optional<std::string> garding_violation(std::span<const double> x, int k, double margin) {
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    const auto e = sigma_all(x, k);
    for (int j = 1; j <= k; ++j) {
        if (!(e[static_cast<std::size_t>(j)] > margin * std::pow(scale, j))) {
            std::ostringstream os;
            os << "sigma_" << j << " > 0";
            return os.str();
        }
    }
    return std::nullopt;
}

void check_dim(const OperatorSpec& op, std::span<const double> lambda) {
    if (static_cast<int>(lambda.size()) != op.n) {
        std::ostringstream os;
        os << "lambda has " << lambda.size() << " entries, operator expects n=" << op.n;
        throw DomainError(os.str());
    }
}

void require_inside(const OperatorSpec& op, std::span<const double> lambda) {
    if (auto v = natural_cone_violation(op, lambda)) {
        std::ostringstream os;
        os << "lambda outside the cone of " << op.describe() << ": violates " << *v;
        throw FeasibilityError(os.str(), *v);
    }
}

struct LeafParts {
    double value;
    double sk, sl;
    LambdaVec gk, gl;
};

LeafParts leaf_parts(const OperatorSpec& op, std::span<const double> x, bool with_grad) {
    const auto e = sigma_all(x, op.k);
    LeafParts p;
    p.sk = e[static_cast<std::size_t>(op.k)];
    p.sl = e[static_cast<std::size_t>(op.l)];
    p.value = leaf_norm(op) * std::pow(p.sk / p.sl, op.power);
    if (with_grad) {
        p.gk = sigma_grad(x, op.k);
        p.gl = op.l > 0 ? sigma_grad(x, op.l) : LambdaVec(x.size(), 0.0);
    }
    return p;
}

double eval_impl(const OperatorSpec& op, std::span<const double> x) {
    switch (op.kind) {
        case OperatorKind::Sigma:
        case OperatorKind::SigmaRatio: return leaf_parts(op, x, false).value;
        case OperatorKind::PComposed: {
            double v = eval_impl(*op.base, apply_p(x));
            if (op.normalized) v /= std::pow(static_cast<double>(op.n - 1), op.base->homogeneity()) *
                                    eval_impl(*op.base, LambdaVec(x.size(), 1.0));
            return v;
        }
        case OperatorKind::Transformed: return eval_impl(*op.base, apply_mu(x, op.rho));
    }
    return 0.0;
}

LambdaVec grad_impl(const OperatorSpec& op, std::span<const double> x) {
    switch (op.kind) {
        case OperatorKind::Sigma:
        case OperatorKind::SigmaRatio: {
            const auto p = leaf_parts(op, x, true);
            LambdaVec g(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double dl = op.l > 0 ? p.gl[i] / p.sl : 0.0;
                g[i] = p.value * op.power * (p.gk[i] / p.sk - dl);
            }
            return g;
        }
        case OperatorKind::PComposed: {
            LambdaVec gb = grad_impl(*op.base, apply_p(x));
            if (op.normalized) {
                const double c = std::pow(static_cast<double>(op.n - 1), op.base->homogeneity()) *
                                 eval_impl(*op.base, LambdaVec(x.size(), 1.0));
                for (double& v : gb) v /= c;
            }
            return apply_p(gb);
        }
        case OperatorKind::Transformed: return apply_mu(grad_impl(*op.base, apply_mu(x, op.rho)), op.rho);
    }
    return {};
}

Eigen::MatrixXd hess_impl(const OperatorSpec& op, std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    switch (op.kind) {
        case OperatorKind::Sigma:
        case OperatorKind::SigmaRatio: {
            if (op.l == 0 && op.power == 1.0) return leaf_norm(op) * sigma_hess(x, op.k);
            const auto p = leaf_parts(op, x, true);
            Eigen::VectorXd dlog(n);
            Eigen::MatrixXd h2 = Eigen::MatrixXd::Zero(n, n);
            const Eigen::MatrixXd hk = sigma_hess(x, op.k);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                dlog(i) = op.power * (p.gk[ui] / p.sk - (op.l > 0 ? p.gl[ui] / p.sl : 0.0));
            }
            h2 = hk / p.sk;
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j)
                    h2(i, j) -= p.gk[static_cast<std::size_t>(i)] * p.gk[static_cast<std::size_t>(j)] / (p.sk * p.sk);
            if (op.l > 0) {
                const Eigen::MatrixXd hl = sigma_hess(x, op.l);
                h2 -= hl / p.sl;
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index j = 0; j < n; ++j)
                        h2(i, j) += p.gl[static_cast<std::size_t>(i)] * p.gl[static_cast<std::size_t>(j)] / (p.sl * p.sl);
            }
            return p.value * (dlog * dlog.transpose() + op.power * h2);
        }
        case OperatorKind::PComposed: {
            Eigen::MatrixXd hb = hess_impl(*op.base, apply_p(x));
            if (op.normalized)
                hb /= std::pow(static_cast<double>(op.n - 1), op.base->homogeneity()) *
                      eval_impl(*op.base, LambdaVec(x.size(), 1.0));
            const Eigen::MatrixXd P = p_matrix(n);
            return P * hb * P;
        }
        case OperatorKind::Transformed: {
            const Eigen::MatrixXd M = mu_matrix(n, op.rho);
            return M * hess_impl(*op.base, apply_mu(x, op.rho)) * M;
        }
    }
    return {};
}

}  // namespace

std::optional<std::string> natural_cone_violation(const OperatorSpec& op, std::span<const double> lambda,
                                                  double margin) {
    switch (op.kind) {
        case OperatorKind::Sigma:
        case OperatorKind::SigmaRatio: return garding_violation(lambda, op.k, margin);
        case OperatorKind::PComposed: {
            auto v = natural_cone_violation(*op.base, apply_p(lambda), margin);
            if (v) return "P_{n-1}(lambda): " + *v;
            return std::nullopt;
        }
        case OperatorKind::Transformed: {
            auto v = natural_cone_violation(*op.base, apply_mu(lambda, op.rho), margin);
            if (v) return "mu(lambda): " + *v;
            return std::nullopt;
        }
    }
    return std::nullopt;
}

double f_eval(const OperatorSpec& op, std::span<const double> lambda) {
    check_dim(op, lambda);
    require_inside(op, lambda);
    return eval_impl(op, lambda);
}

LambdaVec f_grad(const OperatorSpec& op, std::span<const double> lambda) {
    check_dim(op, lambda);
    require_inside(op, lambda);
    return grad_impl(op, lambda);
}

HessianResult f_hess(const OperatorSpec& op, std::span<const double> lambda) {
    check_dim(op, lambda);
    require_inside(op, lambda);
    return {hess_impl(op, lambda), HessianPath::Analytic, 0.0};
}

HessianResult f_hess_fd(const OperatorSpec& op, std::span<const double> lambda) {
    check_dim(op, lambda);
    require_inside(op, lambda);
    double scale = 1.0;
    for (double v : lambda) scale = std::max(scale, std::abs(v));
    const double h = 1e-5 * scale;
    const auto n = static_cast<Eigen::Index>(lambda.size());
    Eigen::MatrixXd H(n, n);
    LambdaVec x(lambda.begin(), lambda.end());
    auto f_at = [&](Eigen::Index i, double di, Eigen::Index j, double dj) {
        LambdaVec y = x;
        y[static_cast<std::size_t>(i)] += di;
        y[static_cast<std::size_t>(j)] += dj;
        return eval_impl(op, y);
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = (f_at(i, h, j, h) - f_at(i, h, j, -h) - f_at(i, -h, j, h) + f_at(i, -h, j, -h)) /
                             (4.0 * h * h);
            H(i, j) = H(j, i) = v;
        }
    }
    return {H, HessianPath::FiniteDifference, h};
}

bool maclaurin_check(std::span<const double> lambda, int k, int l) {
    const int n = static_cast<int>(lambda.size());
    if (!(1 <= l && l < k && k <= n)) throw DomainError("maclaurin_check needs 1 <= l < k <= n");
    if (auto v = garding_violation(lambda, k, 0.0))
        throw FeasibilityError("maclaurin_check: lambda outside Gamma_k: violates " + *v, *v);
    const auto e = sigma_all(lambda, k);
    const double lhs = std::pow(e[static_cast<std::size_t>(k)] / static_cast<double>(binomial(n, k)), 1.0 / k);
    const double rhs = std::pow(e[static_cast<std::size_t>(l)] / static_cast<double>(binomial(n, l)), 1.0 / l);
    return lhs <= rhs * (1.0 + 1e-12);
}

bool trace_lower_bound_check(const OperatorSpec& op, std::span<const double> lambda) {
    if (std::abs(op.homogeneity() - 1.0) > 1e-14)
        throw DomainError("trace lower bound needs a degree-one operator");
    if (std::abs(eval_impl(op, LambdaVec(lambda.size(), 1.0)) - 1.0) > 1e-12)
        throw DomainError("trace lower bound needs a normalized operator");
    const double f = f_eval(op, lambda);
    const double tr = std::accumulate(lambda.begin(), lambda.end(), 0.0);
    return tr >= static_cast<double>(lambda.size()) * f - 1e-10;
}

}  // namespace conelab
