#include "conelab/cone.hpp"

#include "conelab/errors.hpp"
#include "conelab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace conelab {

ConeSpec ConeSpec::garding(int n, int k) {
    if (!(1 <= k && k <= n)) throw DomainError("Garding cone needs 1 <= k <= n");
    ConeSpec c;
    c.kind = ConeKind::Garding;
    c.n = n;
    c.k = k;
    return c;
}

ConeSpec ConeSpec::p_cone(int n, int k) {
    ConeSpec c;
    c.kind = ConeKind::PCone;
    c.n = n;
    c.k = k;
    c.base = std::make_shared<const ConeSpec>(garding(n, k));
    return c;
}

ConeSpec ConeSpec::transformed(const ConeSpec& base, double rho) {
    if (rho == 0.0 || rho == static_cast<double>(base.n))
        throw ParameterError("transform parameter rho must differ from 0 and n");
    ConeSpec c;
    c.kind = ConeKind::Transformed;
    c.n = base.n;
    c.k = base.k;
    c.rho = rho;
    c.margin = base.margin;
    c.base = std::make_shared<const ConeSpec>(base);
    return c;
}

std::string ConeSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case ConeKind::Garding: os << "garding(" << k << ")"; break;
        case ConeKind::PCone: os << "p_cone[" << base->describe() << "]"; break;
        case ConeKind::Transformed: os << "transformed[" << base->describe() << ", rho=" << rho << "]"; break;
    }
    return os.str();
}

ConeSpec natural_cone(const OperatorSpec& op) {
    switch (op.kind) {
        case OperatorKind::Sigma:
        case OperatorKind::SigmaRatio: return ConeSpec::garding(op.n, op.k);
        case OperatorKind::PComposed: {
            ConeSpec c;
            c.kind = ConeKind::PCone;
            c.n = op.n;
            c.base = std::make_shared<const ConeSpec>(natural_cone(*op.base));
            c.k = c.base->k;
            return c;
        }
        case OperatorKind::Transformed: return ConeSpec::transformed(natural_cone(*op.base), op.rho);
    }
    return {};
}

namespace {

LambdaVec map_p(std::span<const double> x) {
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    LambdaVec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = s - x[i];
    return y;
}

LambdaVec map_mu(std::span<const double> x, double rho) {
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    const double d = static_cast<double>(x.size()) - rho;
    LambdaVec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (s - rho * x[i]) / d;
    return y;
}

}  // namespace

std::optional<std::string> cone_violation(const ConeSpec& cone, std::span<const double> lambda) {
    if (static_cast<int>(lambda.size()) != cone.n) throw DomainError("dimension mismatch in cone membership");
    switch (cone.kind) {
        case ConeKind::Garding: {
            double scale = 0.0;
            for (double v : lambda) scale = std::max(scale, std::abs(v));
            const auto e = sigma_all(lambda, cone.k);
            for (int j = 1; j <= cone.k; ++j) {
                if (!(e[static_cast<std::size_t>(j)] > cone.margin * std::pow(scale, j)))
                    return "sigma_" + std::to_string(j) + " > 0";
            }
            return std::nullopt;
        }
        case ConeKind::PCone: {
            auto v = cone_violation(*cone.base, map_p(lambda));
            if (v) return "P_{n-1}(lambda): " + *v;
            return std::nullopt;
        }
        case ConeKind::Transformed: {
            auto v = cone_violation(*cone.base, map_mu(lambda, cone.rho));
            if (v) return "mu(lambda): " + *v;
            return std::nullopt;
        }
    }
    return std::nullopt;
}

bool contains(const ConeSpec& cone, std::span<const double> lambda) { return !cone_violation(cone, lambda); }

int kappa(const ConeSpec& cone) {
    for (int k = cone.n - 1; k >= 0; --k) {
        LambdaVec v(static_cast<std::size_t>(cone.n), 1.0);
        std::fill(v.begin(), v.begin() + k, 0.0);
        if (contains(cone, v)) return k;
    }
    return 0;
}

int kappa_tilde(const ConeSpec& cone, int trials, std::uint64_t seed) {
    if (trials < 1) throw DomainError("kappa_tilde needs trials >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    LambdaVec v(static_cast<std::size_t>(cone.n));
    for (int count = cone.n - 1; count >= 1; --count) {
        for (int t = 0; t < trials; ++t) {
            const double eps = std::pow(10.0, -6.0 + 5.0 * unit(rng));
            for (int i = 0; i < cone.n; ++i) {
                v[static_cast<std::size_t>(i)] = i < count ? -eps * (0.5 + unit(rng)) : 0.5 + unit(rng);
            }
            if (contains(cone, v)) return count;
        }
    }
    return 0;
}

bool is_type2(const ConeSpec& cone) {
    LambdaVec v(static_cast<std::size_t>(cone.n), 0.0);
    v.back() = 1.0;
    return contains(cone, v);
}

// ---------------------------------------------------------------------------

namespace {

// Smallest t (bisection, relative 1e-12) with (-a_neg, t a_pos) in the cone,
// or nullopt when no t below 1e12 works.
std::optional<double> positive_scale_threshold(const ConeSpec& cone, int kap, std::span<const double> alpha) {
    LambdaVec v(alpha.size());
    auto member = [&](double t) {
        for (std::size_t i = 0; i < alpha.size(); ++i)
            v[i] = static_cast<int>(i) < kap ? -alpha[i] : t * alpha[i];
        return contains(cone, v);
    };
    double hi = 1.0;
    while (!member(hi)) {
        hi *= 2.0;
        if (hi > 1e12) return std::nullopt;
    }
    double lo = hi / 2.0;
    if (member(lo)) {
        while (member(lo)) {
            hi = lo;
            lo /= 2.0;
            if (lo < 1e-300) return lo;
        }
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-13 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (member(mid) ? hi : lo) = mid;
    }
    return hi;
}

double objective_value(int kap, int n, std::span<const double> alpha) {
    double pos = 0.0;
    for (std::size_t i = static_cast<std::size_t>(kap); i < alpha.size(); ++i) pos += alpha[i];
    double neg = 0.0;
    for (int i = 1; i < kap; ++i) neg += alpha[static_cast<std::size_t>(i)];
    const double denom = pos - neg;
    if (!(denom > 0.0)) return -std::numeric_limits<double>::infinity();
    return (alpha[0] / static_cast<double>(n)) / denom;
}

}  // namespace

std::optional<double> vartheta_objective(const ConeSpec& cone, int kap, std::span<const double> alpha) {
    LambdaVec v(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (!(alpha[i] > 0.0)) return std::nullopt;
        v[i] = static_cast<int>(i) < kap ? -alpha[i] : alpha[i];
    }
    for (int i = 1; i < kap; ++i)
        if (alpha[static_cast<std::size_t>(i)] > alpha[static_cast<std::size_t>(i - 1)]) return std::nullopt;
    if (!contains(cone, v)) return std::nullopt;
    const double val = objective_value(kap, cone.n, alpha);
    if (!std::isfinite(val)) return std::nullopt;
    return val;
}

VarthetaResult vartheta(const ConeSpec& cone, int budget, std::uint64_t seed) {
    if (budget < 1) throw DomainError("vartheta needs budget >= 1");
    VarthetaResult res;
    res.budget = budget;
    res.seed = seed;
    const int n = cone.n;
    const int kap = kappa(cone);
    if (kap == 0) {
        res.value = 1.0 / n;
        res.exact = true;
        return res;
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Direction -> admissible alpha pushed to just inside the boundary.
    auto realize = [&](std::vector<double> dir) -> std::optional<std::pair<double, std::vector<double>>> {
        std::sort(dir.begin(), dir.begin() + kap, std::greater<>());
        auto t = positive_scale_threshold(cone, kap, dir);
        ++res.evaluations;
        if (!t) return std::nullopt;
        const double scale = *t * (1.0 + 1e-9);
        for (std::size_t i = static_cast<std::size_t>(kap); i < dir.size(); ++i) dir[i] *= scale;
        auto val = vartheta_objective(cone, kap, dir);
        if (!val) return std::nullopt;
        return std::make_pair(*val, dir);
    };

    std::vector<double> best;
    double best_val = -1.0;
    const int explore = std::max(1, budget / 2);
    std::vector<double> dir(static_cast<std::size_t>(n));
    for (int s = 0; s < explore && res.evaluations < budget; ++s) {
        for (auto& d : dir) d = std::exp(1.5 * gauss(rng));
        if (auto r = realize(dir); r && r->first > best_val) {
            best_val = r->first;
            best = r->second;
        }
    }
    if (best.empty()) throw SamplingError("vartheta: no admissible alpha found");

    double step = 0.5;
    while (res.evaluations < budget && step > 1e-7) {
        bool improved = false;
        for (int i = 0; i < n && res.evaluations < budget; ++i) {
            for (double sgn : {1.0, -1.0}) {
                std::vector<double> trial = best;
                trial[static_cast<std::size_t>(i)] *= std::exp(sgn * step);
                if (auto r = realize(trial); r && r->first > best_val) {
                    best_val = r->first;
                    best = r->second;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    res.value = best_val;
    res.alpha = best;
    res.uncertainty = std::max(0.0, 1.0 / n - best_val);
    return res;
}

ConeConstants cone_constants(const ConeSpec& cone, int budget, std::uint64_t seed) {
    ConeConstants c;
    c.kappa = kappa(cone);
    c.vartheta = vartheta(cone, budget, seed);
    c.is_type2 = is_type2(cone);
    return c;
}

// ---------------------------------------------------------------------------

ConeSampler::ConeSampler(ConeSpec cone, std::uint64_t seed) : cone_(std::move(cone)), rng_(seed) {}

double ConeSampler::ray_exit(std::span<const double> z, double cap) const {
    LambdaVec p(z.size());
    auto member = [&](double t) {
        for (std::size_t i = 0; i < z.size(); ++i) p[i] = 1.0 + t * z[i];
        return contains(cone_, p);
    };
    if (member(cap)) return cap;
    double lo = 0.0, hi = cap;
    double probe = 1.0;
    while (probe < cap && member(probe)) {
        lo = probe;
        probe *= 2.0;
    }
    hi = std::min(cap, probe);
    for (int it = 0; it < 200 && (hi - lo) > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (member(mid) ? lo : hi) = mid;
    }
    return lo;
}

std::optional<LambdaVec> ConeSampler::draw(SampleFamily family, int max_tries) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto n = static_cast<std::size_t>(cone_.n);
    LambdaVec z(n), p(n);
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        switch (family) {
            case SampleFamily::Uniform:
            case SampleFamily::NearBoundary: {
                double norm = 0.0;
                for (auto& v : z) {
                    v = gauss(rng_);
                    norm += v * v;
                }
                norm = std::sqrt(norm);
                if (norm == 0.0) continue;
                for (auto& v : z) v /= norm;
                const double texit = ray_exit(z);
                double t;
                if (family == SampleFamily::Uniform) {
                    t = unit(rng_) * std::min(texit, 50.0);
                } else {
                    if (texit >= 1e6) continue;
                    t = texit * (1.0 - std::pow(10.0, -8.0 + 6.0 * unit(rng_)));
                }
                const double scale = std::exp(gauss(rng_));
                for (std::size_t i = 0; i < n; ++i) p[i] = scale * (1.0 + t * z[i]);
                break;
            }
            case SampleFamily::Anisotropic: {
                const auto small = 1 + static_cast<std::size_t>(unit(rng_) * static_cast<double>(n - 1));
                const double eps = std::pow(10.0, -8.0 + 6.0 * unit(rng_));
                const double big = std::pow(10.0, 6.0 * unit(rng_));
                for (std::size_t i = 0; i < n; ++i) {
                    const double jitter = 1.0 + 0.1 * unit(rng_);
                    p[i] = (i < small ? eps : big) * jitter;
                }
                std::shuffle(p.begin(), p.end(), rng_);
                break;
            }
        }
        if (contains(cone_, p)) return p;
    }
    return std::nullopt;
}

PueReport pue_check(const OperatorSpec& op, const ConeSpec& cone, int m, std::size_t samples, std::uint64_t seed,
                    int threads) {
    if (m < 1 || m > cone.n) throw DomainError("pue_check: index m out of range");
    PueReport rep;
    rep.m = m;
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
            const std::size_t begin = c * kChunk;
            const std::size_t end = std::min(samples, begin + kChunk);
            for (std::size_t s = begin; s < end; ++s) {
                const auto family = static_cast<SampleFamily>(s % 3);
                auto lam = sampler.draw(family);
                if (!lam) continue;
                const auto sorted = sort_ascending(*lam);
                LambdaVec g;
                try {
                    g = f_grad(op, sorted.values);
                } catch (const FeasibilityError&) {
                    continue;
                }
                const double total = std::accumulate(g.begin(), g.end(), 0.0);
                if (!(total > 0.0)) continue;
                const double ratio = g[static_cast<std::size_t>(m - 1)] / total;
                ++part.feasible;
                if (ratio < part.min_ratio) {
                    part.min_ratio = ratio;
                    part.witness = sorted.values;
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
    if (rep.feasible == 0) throw SamplingError("pue_check: no feasible samples in " + cone.describe());
    return rep;
}

AxiomProbe probe_cone_axioms(const ConeSpec& cone, std::size_t probes, std::uint64_t seed) {
    AxiomProbe out;
    ConeSampler sampler(cone, seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < probes; ++i) {
        const auto fam_a = static_cast<SampleFamily>(i % 3);
        const auto fam_b = static_cast<SampleFamily>((i + 1) % 3);
        auto a = sampler.draw(fam_a);
        auto b = sampler.draw(fam_b);
        if (!a || !b) continue;
        ++out.probes;
        const double w = unit(sampler.rng());
        LambdaVec mix(a->size());
        for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = w * (*a)[j] + (1.0 - w) * (*b)[j];
        if (!contains(cone, mix)) ++out.convexity_failures;
        LambdaVec perm = *a;
        std::shuffle(perm.begin(), perm.end(), sampler.rng());
        if (!contains(cone, perm)) ++out.symmetry_failures;
        const double t = std::exp(4.0 * (unit(sampler.rng()) - 0.5));
        LambdaVec scaled = *a;
        for (auto& v : scaled) v *= t;
        if (!contains(cone, scaled)) ++out.scaling_failures;
    }
    return out;
}

std::optional<double> projection_level(const ConeSpec& cone, std::span<const double> lambda_prime) {
    LambdaVec v(static_cast<std::size_t>(cone.n));
    std::copy(lambda_prime.begin(), lambda_prime.end(), v.begin());
    for (double c = 1.0; c <= 1e9; c *= 2.0) {
        std::fill(v.begin() + static_cast<std::ptrdiff_t>(lambda_prime.size()), v.end(), c);
        if (contains(cone, v)) return c;
    }
    return std::nullopt;
}

}  // namespace conelab
