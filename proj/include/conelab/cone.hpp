#pragma once

#include "conelab/symfunc.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace conelab {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

enum class ConeKind { Garding, PCone, Transformed };

/// Open symmetric convex cone in R^n.
///
///   Garding(k):            { sigma_j > 0, j = 1..k }
///   PCone(base):           { lambda : P_{n-1}(lambda) in base }
///   Transformed(base, rho): { lambda : mu(lambda) in base }
///
/// Membership of a Garding cone is sigma_j(x) > margin * |x|_inf^j.
struct ConeSpec {
    ConeKind kind = ConeKind::Garding;
    int n = 3;
    int k = 1;
    double rho = 0.0;
    double margin = 1e-12;
    std::shared_ptr<const ConeSpec> base;

    static ConeSpec garding(int n, int k);
    static ConeSpec p_cone(int n, int k);
    static ConeSpec transformed(const ConeSpec& base, double rho);

    std::string describe() const;
};

/// The cone on which `op` is defined.
ConeSpec natural_cone(const OperatorSpec& op);

std::optional<std::string> cone_violation(const ConeSpec& cone, std::span<const double> lambda);
bool contains(const ConeSpec& cone, std::span<const double> lambda);

/// Largest k with (0,...,0 [k], 1,...,1) inside the cone, by descending scan.
int kappa(const ConeSpec& cone);

/// Largest number of strictly negative entries found among random members.
int kappa_tilde(const ConeSpec& cone, int trials, std::uint64_t seed = kDefaultSeed);

bool is_type2(const ConeSpec& cone);

struct VarthetaResult {
    /// Best objective found; a certified lower bound for the supremum.
    double value = 0.0;
    /// Width of the interval [value, 1/n] that contains the supremum.
    double uncertainty = 0.0;
    int evaluations = 0;
    int budget = 0;
    std::uint64_t seed = kDefaultSeed;
    /// Admissible alpha achieving `value`, pattern (-a_1..-a_kappa, a_{kappa+1}..a_n).
    std::vector<double> alpha;
    bool exact = false;
};

/// sup over admissible alpha of (alpha_1/n) / (sum_{i>kappa} alpha_i - sum_{i=2}^{kappa} alpha_i),
/// by random search with multiplicative coordinate ascent. Gamma_n returns 1/n.
VarthetaResult vartheta(const ConeSpec& cone, int budget, std::uint64_t seed = kDefaultSeed);

/// Objective value for alpha = (a_1..a_kappa | a_{kappa+1}..a_n), all positive,
/// a_1 >= ... >= a_kappa. Returns nullopt if the signed vector is not in the cone.
std::optional<double> vartheta_objective(const ConeSpec& cone, int kappa_value, std::span<const double> alpha);

struct ConeConstants {
    int kappa = 0;
    VarthetaResult vartheta;
    bool is_type2 = false;
};

ConeConstants cone_constants(const ConeSpec& cone, int budget = 4000, std::uint64_t seed = kDefaultSeed);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

enum class SampleFamily { Uniform, NearBoundary, Anisotropic };

/// Random members of a cone: interior points along random rays from (1,...,1),
/// points within a relative distance 1e-8..1e-2 of the boundary along such rays,
/// and anisotropy rays (eps,...,eps, t,...,t) with t up to 1e6.
class ConeSampler {
public:
    ConeSampler(ConeSpec cone, std::uint64_t seed);

    /// Draws until a member is produced or `max_tries` is exhausted.
    std::optional<LambdaVec> draw(SampleFamily family, int max_tries = 64);

    /// Exit parameter t* of the ray 1 + t z (z unit), capped at `cap`.
    double ray_exit(std::span<const double> direction, double cap = 1e6) const;

    std::mt19937_64& rng() { return rng_; }

private:
    ConeSpec cone_;
    std::mt19937_64 rng_;
};

struct PueReport {
    int m = 1;
    /// min over samples of f_(m)(lambda) / sum_j f_j(lambda), lambda sorted ascending.
    double min_ratio = 0.0;
    LambdaVec witness;
    std::size_t requested = 0;
    std::size_t feasible = 0;
    std::uint64_t seed = kDefaultSeed;
};

/// Partial-uniform-ellipticity probe at sorted index m (1-based).
PueReport pue_check(const OperatorSpec& op, const ConeSpec& cone, int m, std::size_t samples,
                    std::uint64_t seed = kDefaultSeed, int threads = 0);

// ---------------------------------------------------------------------------
// Sampled structural checks
// ---------------------------------------------------------------------------

struct AxiomProbe {
    std::size_t probes = 0;
    std::size_t convexity_failures = 0;
    std::size_t symmetry_failures = 0;
    std::size_t scaling_failures = 0;
    bool ok() const { return convexity_failures + symmetry_failures + scaling_failures == 0; }
};

/// Convex combinations, permutations and positive scalings of sampled members
/// must remain members.
AxiomProbe probe_cone_axioms(const ConeSpec& cone, std::size_t probes, std::uint64_t seed = kDefaultSeed);

/// Smallest c in {1, 2, 4, ...} (up to 1e9) with (lambda', c, ..., c) in the cone.
std::optional<double> projection_level(const ConeSpec& cone, std::span<const double> lambda_prime);

}  // namespace conelab
