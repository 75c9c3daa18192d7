#include "conelab/cli.hpp"

#include "conelab/errors.hpp"
#include "conelab/io.hpp"
#include "conelab/parallel.hpp"
#include "conelab/solver_fd.hpp"
#include "conelab/solver_radial.hpp"
#include "conelab/verify.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

namespace conelab {

namespace {

constexpr const char* kVersion = "conelab 1.0.0";

// Field access with a dotted path in every message and a check for unknown keys.
class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw InputError(path_ + (key.empty() ? "" : "." + key) + ": " + what);
    }
    bool has(const std::string& key) const { return j_.contains(key); }
    const Json& at(const std::string& key) {
        if (!j_.contains(key)) fail(key, "missing");
        used_.insert(key);
        return j_.at(key);
    }
    double number(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(key, "expected a finite number");
        return d;
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }
    int integer(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<int>();
    }
    int integer(const std::string& key, int fallback) { return has(key) ? integer(key) : fallback; }
    std::string string(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }
    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const Json& v = at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }
    std::vector<double> numbers(const std::string& key) {
        const Json& v = at(key);
        if (!v.is_array()) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(key, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    Reader object(const std::string& key) { return Reader(at(key), path_ + "." + key); }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(it.key(), "unknown field");
    }
    const std::string& path() const { return path_; }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

OperatorSpec read_operator(Reader r, int n, Json& echo) {
    const std::string kind = r.string("kind");
    echo["kind"] = kind;
    OperatorSpec op;
    if (kind == "sigma") {
        const int k = r.integer("k");
        const double power = r.number("power", 1.0);
        const bool normalized = r.boolean("normalized", false);
        if (k < 1 || k > n) r.fail("k", "must satisfy 1 <= k <= n");
        op = OperatorSpec::sigma(n, k, power, normalized);
        echo["k"] = k, echo["power"] = power, echo["normalized"] = normalized;
    } else if (kind == "sigma_root") {
        const int k = r.integer("k");
        if (k < 1 || k > n) r.fail("k", "must satisfy 1 <= k <= n");
        op = OperatorSpec::sigma_root(n, k);
        echo["k"] = k, echo["power"] = 1.0 / k, echo["normalized"] = true;
    } else if (kind == "sigma_ratio") {
        const int k = r.integer("k"), l = r.integer("l");
        if (!(0 <= l && l < k && k <= n)) r.fail("l", "must satisfy 0 <= l < k <= n");
        const double power = r.number("power", 1.0 / (k - l));
        const bool normalized = r.boolean("normalized", true);
        op = OperatorSpec::sigma_ratio(n, k, l, power, normalized);
        echo["k"] = k, echo["l"] = l, echo["power"] = power, echo["normalized"] = normalized;
    } else if (kind == "p_composed") {
        const int k = r.integer("k");
        if (k < 1 || k > n) r.fail("k", "must satisfy 1 <= k <= n");
        const bool normalized = r.boolean("normalized", true);
        op = OperatorSpec::p_composed(OperatorSpec::sigma_root(n, k), normalized);
        echo["k"] = k, echo["normalized"] = normalized;
    } else {
        r.fail("kind", "unknown operator kind '" + kind + "' (sigma, sigma_root, sigma_ratio, p_composed)");
    }
    r.finish();
    echo["describe"] = op.describe();
    return op;
}

ConeSpec parse_cone_name(const std::string& kind, int n, int k, const std::string& where) {
    if (k < 1 || k > n) throw InputError(where + ": cone index k must satisfy 1 <= k <= n");
    if (kind == "garding") return ConeSpec::garding(n, k);
    if (kind == "p_cone") return ConeSpec::p_cone(n, k);
    throw InputError(where + ": unknown cone kind '" + kind + "' (garding, p_cone)");
}

ConeSpec read_cone(Reader r, int n, const OperatorSpec& op, Json& echo) {
    const std::string kind = r.string("kind");
    echo["kind"] = kind;
    ConeSpec c;
    if (kind == "natural") {
        c = natural_cone(op);
    } else {
        const int k = r.integer("k");
        echo["k"] = k;
        c = parse_cone_name(kind, n, k, r.path());
    }
    r.finish();
    echo["describe"] = c.describe();
    return c;
}

Vec read_vec3(Reader& r, const std::string& key) {
    const auto v = r.numbers(key);
    if (v.size() != 3) r.fail(key, "expected 3 numbers");
    return Eigen::Map<const Vec>(v.data(), 3);
}

DomainSpec read_domain(Reader r, int n, Json& echo) {
    const std::string kind = r.string("kind");
    echo["kind"] = kind;
    DomainSpec d;
    if (kind == "ball") {
        const double R = r.number("radius");
        if (!(R > 0)) r.fail("radius", "must be positive");
        d = DomainSpec::ball(n, R);
        echo["radius"] = R;
    } else if (kind == "annulus") {
        const double a = r.number("inner"), b = r.number("outer");
        if (!(0 < a && a < b)) r.fail("inner", "must satisfy 0 < inner < outer");
        d = DomainSpec::annulus(n, a, b);
        echo["inner"] = a, echo["outer"] = b;
    } else if (kind == "box_minus_balls") {
        if (n != 3) r.fail("kind", "box_minus_balls needs n = 3");
        const Vec lo = read_vec3(r, "lo"), hi = read_vec3(r, "hi");
        if (!((hi - lo).minCoeff() > 0)) r.fail("hi", "must exceed lo componentwise");
        std::vector<Hole> holes;
        Json hs = Json::array();
        const Json& arr = r.at("holes");
        if (!arr.is_array()) r.fail("holes", "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            Reader h(arr[i], r.path() + ".holes[" + std::to_string(i) + "]");
            Hole hole{read_vec3(h, "center"), h.number("radius")};
            if (!(hole.radius > 0)) h.fail("radius", "must be positive");
            h.finish();
            hs.push_back({{"center", {hole.center[0], hole.center[1], hole.center[2]}}, {"radius", hole.radius}});
            holes.push_back(hole);
        }
        d = DomainSpec::box_minus_balls(lo, hi, holes);
        echo["lo"] = {lo[0], lo[1], lo[2]}, echo["hi"] = {hi[0], hi[1], hi[2]}, echo["holes"] = hs;
    } else {
        r.fail("kind", "unknown domain kind '" + kind + "' (ball, annulus, box_minus_balls)");
    }
    r.finish();
    echo["describe"] = d.describe();
    return d;
}

std::function<double(double)> read_psi(Reader r, Json& echo) {
    const std::string kind = r.string("kind");
    echo["kind"] = kind;
    std::function<double(double)> f;
    if (kind == "constant") {
        const double c = r.number("value");
        if (!(c > 0)) r.fail("value", "must be positive");
        echo["value"] = c;
        f = [c](double) { return c; };
    } else if (kind == "radial-polynomial") {
        RadialPolynomial p{r.numbers("coefficients")};
        if (p.c.empty()) r.fail("coefficients", "must not be empty");
        echo["coefficients"] = p.c;
        f = [p](double x) { return p.value(x); };
    } else if (kind == "expression-table") {
        const auto rs = r.numbers("r"), vs = r.numbers("values");
        if (rs.size() != vs.size() || rs.size() < 4) r.fail("values", "r and values need equal length >= 4");
        for (std::size_t i = 1; i < rs.size(); ++i)
            if (!(rs[i] > rs[i - 1])) r.fail("r", "must be strictly increasing");
        echo["r"] = rs, echo["values"] = vs, echo["interpolation"] = "local 4-point Lagrange in |x|, constant beyond the ends";
        f = [rs, vs](double x) { return interpolate(rs, vs, std::clamp(x, rs.front(), rs.back())); };
    } else {
        r.fail("kind", "unknown psi kind '" + kind + "' (constant, radial-polynomial, expression-table)");
    }
    r.finish();
    return f;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

Jet radial_jet3(const RadialPolynomial& p, const Vec& x) {
    Jet j = Jet::zero(3);
    const double r = x.norm();
    j.value = p.value(r);
    if (r < 1e-300) {
        j.hess = Mat::Identity(3, 3) * p.d2(0.0);
        return j;
    }
    const Vec e = x / r;
    const double d1 = p.d1(r), d2 = p.d2(r);
    j.grad = d1 * e;
    j.hess = d2 * e * e.transpose() + (d1 / r) * (Mat::Identity(3, 3) - e * e.transpose());
    return j;
}

RadialProblem radial_problem(const ProblemFile& p, const ConformalParams& cp) {
    RadialProblem rp = RadialProblem::make(p.domain, cp, p.op, p.cone);
    rp.psi = p.psi;
    if (p.finite) rp.phi_outer = rp.phi_inner = *p.finite;
    if (p.exact) {
        const RadialPolynomial e = *p.exact;
        rp.psi = manufactured_psi(rp, [e](double r) { return RadialJet{e.value(r), e.d1(r), e.d2(r)}; });
        rp.phi_outer = e.value(p.domain.outer);
        if (p.domain.kind == DomainKind::Annulus) rp.phi_inner = e.value(p.domain.inner);
    }
    return rp;
}

GridProblem grid_problem(const ProblemFile& p, const ConformalParams& cp, double h) {
    GridProblem gp = GridProblem::make(p.domain, h, cp, p.op, p.cone);
    const auto psi = p.psi;
    gp.psi = [psi](const Point3& x) { return psi(x.norm()); };
    if (p.finite) {
        const double phi = *p.finite;
        gp.phi = [phi](const Point3&) { return phi; };
    }
    if (p.exact) {
        const RadialPolynomial e = *p.exact;
        gp.psi = fd_manufactured_psi(gp, [e](const Vec& x) { return radial_jet3(e, x); });
        gp.phi = [e](const Point3& x) { return e.value(x.norm()); };
    }
    return gp;
}

Json check(const std::string& name, bool passed, double value = std::numeric_limits<double>::quiet_NaN(),
           const std::string& note = "") {
    Json c;
    c["name"] = name;
    c["passed"] = passed;
    if (!std::isnan(value)) c["value"] = value;
    if (!note.empty()) c["note"] = note;
    return c;
}

bool all_passed(const Json& checks) {
    for (const auto& c : checks)
        if (!c.value("skipped", false) && !c.at("passed").get<bool>()) return false;
    return true;
}

struct Output {
    std::string dir;  // empty: report to stdout only
    std::string file(const std::string& name) const { return (std::filesystem::path(dir) / name).string(); }
};

Json base_report(const std::string& command, std::uint64_t seed) {
    Json r;
    r["command"] = command;
    r["version"] = kVersion;
    r["seed"] = seed;
    return r;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

Json cmd_cone_analyze(const std::string& kind, int n, int k, int budget, std::uint64_t seed) {
    if (n < 2) throw InputError("--n: must be at least 2");
    if (budget < 1) throw InputError("--budget: must be positive");
    const ConeSpec cone = parse_cone_name(kind, n, k, "--kind/--k");
    const ConeConstants cc = cone_constants(cone, budget, seed);
    Json r = base_report("cone analyze", seed);
    r["kind"] = kind;
    r["n"] = n;
    r["k"] = k;
    r["cone"] = cone.describe();
    r["kappa"] = cc.kappa;
    r["vartheta"] = {{"value", cc.vartheta.value},
                     {"uncertainty", cc.vartheta.uncertainty},
                     {"exact", cc.vartheta.exact},
                     {"evaluations", cc.vartheta.evaluations},
                     {"budget", cc.vartheta.budget},
                     {"alpha", cc.vartheta.alpha}};
    r["is_type2"] = cc.is_type2;
    r["seeds"] = {{"vartheta", cc.vartheta.seed}};
    r["status"] = "ok";
    return r;
}

OperatorSpec op_from_flags(const std::string& kind, int n, int k, int l) {
    Json j;
    j["kind"] = kind;
    j["k"] = k;
    if (kind == "sigma_ratio") j["l"] = l;
    if (kind == "sigma") j["normalized"] = true;
    Json echo;
    return read_operator(Reader(j, "--op"), n, echo);
}

Json cmd_ellipticity(const std::string& kind, int n, int k, int l, std::optional<double> rho, std::size_t samples,
                     std::uint64_t seed) {
    if (n < 2) throw InputError("--n: must be at least 2");
    if (samples == 0) throw InputError("--samples: must be positive");
    const OperatorSpec op = op_from_flags(kind, n, k, l);
    const ConeSpec cone = natural_cone(op);
    Json r = base_report("ellipticity", seed);
    r["inputs"] = {{"operator", op.describe()}, {"cone", cone.describe()}, {"samples", samples}};
    Json checks = Json::array();
    if (rho) {
        const ConeConstants cc = cone_constants(cone, 4000, seed);
        const TransformParams tp = make_transform(cc, n, *rho);
        const OperatorSpec top = OperatorSpec::transformed(op, *rho);
        const ConeSpec tcone = ConeSpec::transformed(cone, *rho);
        const UniformReport u = fully_uniform_check(top, tcone, tp.theta, samples, seed);
        r["inputs"]["rho"] = *rho;
        r["derived"] = {{"kappa", cc.kappa}, {"vartheta", cc.vartheta.value}, {"theta", tp.theta}};
        r["transformed"] = {{"operator", top.describe()},
                            {"min_ratio", u.min_ratio},
                            {"witness", u.witness},
                            {"feasible", u.feasible}};
        checks.push_back(check("min ratio >= theta - 1e-9", u.min_ratio >= tp.theta - 1e-9, u.min_ratio));
    } else {
        const int kap = kappa(cone);
        r["derived"] = {{"kappa", kap}};
        Json per = Json::array();
        double floor = std::numeric_limits<double>::infinity();
        for (int m = 1; m <= n; ++m) {
            const PueReport p = pue_check(op, cone, m, samples, seed);
            per.push_back({{"m", m}, {"min_ratio", p.min_ratio}, {"witness", p.witness}, {"feasible", p.feasible}});
            if (m <= kap + 1) floor = std::min(floor, p.min_ratio);
            if (m == kap + 2)
                checks.push_back(check("sharpness witness at m = kappa + 2 (ratio < 1e-2)", p.min_ratio < 1e-2,
                                       p.min_ratio));
        }
        r["indices"] = per;
        checks.push_back(check("positive floor for m <= kappa + 1", floor > 0.0, floor));
    }
    r["checks"] = checks;
    r["status"] = all_passed(checks) ? "ok" : "check-failed";
    return r;
}

Json cmd_transform_plan(int alpha, double tau, int n, const std::string& cone_arg, double varsigma) {
    const auto colon = cone_arg.find(':');
    if (colon == std::string::npos) throw InputError("--cone: expected kind:k, e.g. garding:2");
    int k = 0;
    try {
        k = std::stoi(cone_arg.substr(colon + 1));
    } catch (const std::exception&) {
        throw InputError("--cone: expected kind:k, e.g. garding:2");
    }
    const ConeSpec cone = parse_cone_name(cone_arg.substr(0, colon), n, k, "--cone");
    if (alpha != 1 && alpha != -1) throw InputError("--alpha: must be 1 or -1");
    const ConeConstants cc = cone_constants(cone);
    const ConformalParams cp = conformal_params(alpha, tau, n, cc, varsigma);
    Json r = base_report("transform plan", kDefaultSeed);
    r["inputs"] = {{"alpha", alpha}, {"tau", tau}, {"n", n}, {"cone", cone.describe()}, {"varsigma", varsigma}};
    r["derived"] = {{"rho", cp.rho},
                    {"gamma", cp.gamma},
                    {"theta", cp.theta},
                    {"rhs_const", cp.rhs_const},
                    {"v_rhs_const", cp.v_rhs_const},
                    {"rate", cp.rate},
                    {"construction_range", cp.construction_range},
                    {"kappa", cc.kappa},
                    {"vartheta", cc.vartheta.value}};
    r["status"] = "ok";
    return r;
}

void radial_artifacts(const Output& out, const RadialProblem& rp, const std::vector<double>& r,
                      const std::vector<double>& u, const std::vector<double>& margins, double rate, Json& report) {
    if (out.dir.empty()) return;
    std::vector<double> sig(r.size()), ul(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        sig[i] = rp.sigma(r[i]);
        ul[i] = sig[i] > 0 ? u[i] + std::log(sig[i]) : std::numeric_limits<double>::quiet_NaN();
    }
    write_csv(out.file("profile.csv"), {"r", "sigma", "u", "u_plus_log_sigma", "margin"}, {r, sig, u, ul, margins});
    report["artifacts"].push_back("profile.csv");
    SvgPlot plot;
    plot.title = "u + log sigma near the boundary";
    plot.xlabel = "sigma";
    plot.ylabel = "u + log sigma";
    plot.logx = true;
    SvgSeries s{"computed", {}, {}};
    for (std::size_t i = 0; i < r.size(); ++i)
        if (sig[i] > 0 && sig[i] < 0.5 * (rp.domain.outer - rp.domain.inner)) s.x.push_back(sig[i]), s.y.push_back(ul[i]);
    plot.series.push_back(s);
    if (std::isfinite(rate) && !s.x.empty()) {
        const auto [lo, hi] = std::minmax_element(s.x.begin(), s.x.end());
        plot.series.push_back({"theoretical rate", {*lo, *hi}, {rate, rate}, "#d62728", true});
    }
    write_svg(out.file("profile.svg"), plot);
    report["artifacts"].push_back("profile.svg");
}

Json cmd_solve_radial(const ProblemFile& p, const Output& out) {
    if (p.domain.kind == DomainKind::BoxMinusBalls) throw InputError("domain: the radial solver needs a ball or annulus");
    if (p.grid_kind != "graded" && p.grid_kind != "uniform")
        throw InputError("grid.kind: the radial solver needs graded or uniform");
    const ConformalParams cp = conformal_params(p.alpha, p.tau, p.n, p.cone, p.varsigma);
    const RadialProblem rp = radial_problem(p, cp);
    Json r = base_report("solve radial", p.seed);
    r["inputs"] = p.resolved;
    r["derived"] = derived_constants(p);
    r["artifacts"] = Json::array();
    Json checks = Json::array(), stages = Json::array();
    RadialSolveOptions so;
    so.tol = p.tol;
    auto make_grid = [&](int count) {
        return p.grid_kind == "graded" ? RadialGrid::graded(p.domain, count) : RadialGrid::uniform(p.domain, count);
    };

    if (p.exact) {
        if (p.grid_kind != "uniform") throw InputError("grid.kind: manufactured runs need a uniform grid");
        double prev = 0.0, min_order = std::numeric_limits<double>::infinity();
        RadialSolution last;
        for (int lev = 0; lev < p.levels; ++lev) {
            const int cells = p.grid_count << lev;
            const RadialSolution s = solve_finite(rp, make_grid(cells), so);
            double err = 0.0;
            for (std::size_t i = 0; i < s.r.size(); ++i) err = std::max(err, std::abs(s.u[i] - p.exact->value(s.r[i])));
            Json st = {{"cells", cells}, {"iterations", s.iterations}, {"residual", s.residual}, {"error", err}};
            if (prev > 0.0) {
                const double order = std::log2(prev / err);
                st["observed_order"] = order;
                min_order = std::min(min_order, order);
            }
            stages.push_back(st);
            prev = err;
            last = s;
        }
        r["stages"] = stages;
        r["observed_order"] = min_order;
        checks.push_back(check("observed order >= 1.8", min_order >= 1.8, min_order));
        radial_artifacts(out, rp, last.r, last.u, last.margins, std::nan(""), r);
    } else if (p.finite) {
        const RadialGrid g = make_grid(p.grid_count);
        const RadialSolution s = solve_finite(rp, g, so);
        stages.push_back({{"iterations", s.iterations},
                          {"residual", s.residual},
                          {"min_margin", s.min_margin},
                          {"history", s.history},
                          {"steps", s.steps}});
        r["stages"] = stages;
        checks.push_back(check("admissibility margin positive", s.min_margin > 0.0, s.min_margin));
        try {
            const BarrierSearch bs = barrier_search(rp, s);
            Json tried = Json::array();
            for (const auto& rep : bs.reports)
                tried.push_back({{"barrier", rep.spec.describe()}, {"passed", rep.passed}, {"worst", rep.worst}});
            r["barrier_search"] = tried;
            checks.push_back(check("barriers verified for some (eps, delta)", bs.verified.has_value()));
            if (bs.verified) r["barrier_verified"] = {{"epsilon", bs.verified->first}, {"delta", bs.verified->second}};
        } catch (const std::exception& e) {
            Json c = check("barriers verified for some (eps, delta)", false, std::nan(""), e.what());
            c["skipped"] = true;
            checks.push_back(c);
        }
        radial_artifacts(out, rp, s.r, s.u, s.margins, std::nan(""), r);
    } else {
        const RadialGrid g = make_grid(p.grid_count);
        InfiniteOptions io;
        io.K = p.K;
        io.solve = so;
        const InfiniteResult res = solve_infinite(rp, g, io);
        for (std::size_t j = 0; j < res.sequence.size(); ++j) {
            const RadialSolution& s = res.sequence[j];
            stages.push_back({{"k", res.ks[j]},
                              {"iterations", s.iterations},
                              {"residual", s.residual},
                              {"min_margin", s.min_margin},
                              {"max_u", *std::max_element(s.u.begin(), s.u.end())}});
        }
        r["stages"] = stages;
        r["settled"] = {{"r_lo", res.settled_lo}, {"r_hi", res.settled_hi}, {"epsilon", res.epsilon}};
        checks.push_back(check("increasing family u^(k+1) >= u^(k) - 1e-9", res.min_increment >= -1e-9,
                               res.min_increment));
        checks.push_back(check("family structure", res.structure_ok));
        std::vector<BoundaryComponent> comps{BoundaryComponent::Outer};
        if (p.domain.kind == DomainKind::Annulus) comps.push_back(BoundaryComponent::Inner);
        double plot_rate = std::nan("");
        Json rates = Json::array();
        for (auto comp : comps) {
            const std::string name = comp == BoundaryComponent::Outer ? "outer" : "inner";
            try {
                const RateEstimate est = asymptotic_rate(rp, res, {}, comp);
                rates.push_back({{"component", name},
                                 {"estimate", est.estimate},
                                 {"spread", est.spread},
                                 {"theoretical", est.theoretical},
                                 {"band_estimates", est.band_estimates}});
                checks.push_back(check(name + " rate within 2e-2 of theory",
                                       std::abs(est.estimate - est.theoretical) < 2e-2, est.estimate));
                if (comp == BoundaryComponent::Outer) plot_rate = est.theoretical;
            } catch (const RateUnavailableError& e) {
                checks.push_back(check(name + " rate available", false, std::nan(""), e.what()));
            }
        }
        r["rates"] = rates;
        radial_artifacts(out, rp, res.r, res.limit, res.sequence.back().margins, plot_rate, r);
    }
    r["checks"] = checks;
    r["status"] = all_passed(checks) ? "ok" : "check-failed";
    return r;
}

Json fd_stage(const FdSolution& s) {
    double gmax = 0.0;
    for (double g : s.gateaux_errors) gmax = std::max(gmax, g);
    return {{"unknowns", s.disc.unknowns()},
            {"iterations", s.iterations},
            {"residual", s.residual},
            {"min_margin", s.min_margin},
            {"start", s.start_kind},
            {"continuation", s.continuation},
            {"krylov_iterations", s.krylov_iterations},
            {"gateaux_errors", s.gateaux_errors},
            {"max_gateaux_error", gmax}};
}

Json cmd_solve_fd(const ProblemFile& p, const Output& out, int threads) {
    if (p.n != 3) throw InputError("conformal.n: the grid solver is three-dimensional");
    if (p.domain.kind == DomainKind::Annulus) throw InputError("domain: the grid solver takes a ball or box_minus_balls");
    if (p.grid_kind != "cube") throw InputError("grid: the grid solver needs {\"h\": spacing}");
    if (!p.finite && !p.exact) throw InputError("boundary: the grid solver takes finite boundary data");
    const ConformalParams cp = conformal_params(p.alpha, p.tau, p.n, p.cone, p.varsigma);
    Json r = base_report("solve fd", p.seed);
    r["inputs"] = p.resolved;
    r["derived"] = derived_constants(p);
    r["artifacts"] = Json::array();
    FdSolveOptions o;
    o.tol = p.tol;
    o.threads = threads;
    Json checks = Json::array(), stages = Json::array();
    const int levels = p.exact ? p.levels : 1;
    double prev = 0.0, min_order = std::numeric_limits<double>::infinity(), gmax = 0.0, margin = 1e300;
    GridProblem gp;
    FdSolution s;
    for (int lev = 0; lev < levels; ++lev) {
        const double h = std::ldexp(p.h, -lev);
        gp = grid_problem(p, cp, h);
        s = newton_solve(gp, o);
        Json st = fd_stage(s);
        st["h"] = h;
        gmax = std::max(gmax, st["max_gateaux_error"].get<double>());
        margin = std::min(margin, s.min_margin);
        if (p.exact) {
            double err = 0.0;
            for (std::size_t i = 0; i < s.disc.unknowns(); ++i)
                err = std::max(err, std::abs(s.u[static_cast<Eigen::Index>(i)] - p.exact->value(s.disc.point(i).norm())));
            st["error"] = err;
            if (prev > 0.0) {
                st["observed_order"] = std::log2(prev / err);
                min_order = std::min(min_order, std::log2(prev / err));
            }
            prev = err;
        }
        stages.push_back(st);
    }
    r["stages"] = stages;
    r["derived"]["fd_rhs_const"] = gp.rhs_const;
    checks.push_back(check("Gateaux check relative error < 1e-4", gmax < 1e-4, gmax));
    checks.push_back(check("admissibility margin positive", margin > 0.0, margin));
    if (p.exact && levels > 1) {
        r["observed_order"] = min_order;
        checks.push_back(check("observed order >= 1.8", min_order >= 1.8, min_order));
    }
    if (!out.dir.empty()) {
        const GridField f = s.field(gp, "u");
        write_vtk(out.file("u.vtk"), f, "conelab solve fd: " + gp.describe());
        r["artifacts"].push_back("u.vtk");
        for (const auto& name : write_grid_binary(out.dir, "u", f, p.domain.describe())) r["artifacts"].push_back(name);
    }
    r["checks"] = checks;
    r["status"] = all_passed(checks) ? "ok" : "check-failed";
    return r;
}

Json cmd_obstruction(int holes, double h, int K, int threads) {
    DomainSpec dom;
    const Vec lo = Vec::Constant(3, -1.0), hi = Vec::Constant(3, 1.0);
    if (holes == 0) {
        dom = DomainSpec::ball(3, 1.0);
    } else if (holes == 1) {
        dom = DomainSpec::box_minus_balls(lo, hi, {Hole{Vec::Zero(3), 0.5}});
    } else if (holes == 2) {
        Vec a(3), b(3);
        a << -0.5, 0.0, 0.0;
        b << 0.5, 0.0, 0.0;
        dom = DomainSpec::box_minus_balls(lo, hi, {Hole{a, 0.25}, Hole{b, 0.25}});
    } else {
        throw InputError("--holes: 0 (ball), 1 or 2");
    }
    if (K < 0 || K > 20) throw InputError("--K: must lie in 0..20");
    FdSolveOptions o;
    o.threads = threads;
    const ObstructionReport rep = obstruction_experiment(dom, h, K, o);
    Json r = base_report("obstruction", kDefaultSeed);
    r["exploratory"] = true;
    r["inputs"] = {{"domain", rep.domain}, {"holes", rep.holes}, {"h", rep.h}, {"K", K},
                   {"compact_distance", rep.compact_distance}};
    Json arms = Json::array();
    for (const auto& a : rep.arms) {
        Json st = Json::array();
        for (const auto& s : a.stages) {
            Json j = {{"k", s.k},
                      {"converged", s.converged},
                      {"iterations", s.iterations},
                      {"max_u", s.max_u},
                      {"min_margin", s.min_margin},
                      {"increment", s.increment},
                      {"compact_increment", s.compact_increment}};
            if (!s.failure.empty()) j["failure"] = s.failure;
            st.push_back(j);
        }
        arms.push_back({{"name", a.name}, {"all_converged", a.all_converged}, {"settling", a.settling}, {"stages", st}});
    }
    r["arms"] = arms;
    r["status"] = "ok";
    return r;
}

Json cmd_verify(const VerifyOptions& o, std::ostream& err) {
    Json r = base_report("verify", o.seed);
    r["fast"] = o.fast;
    Json checks = Json::array();
    auto add = [&](const CheckOutcome& c) {
        Json j;
        if (c.id) j["id"] = c.id;
        j["name"] = c.name;
        j["passed"] = c.passed;
        j["skipped"] = c.skipped;
        Json m;
        for (const auto& [k, v] : c.metrics) m[k] = v;
        j["metrics"] = m;
        if (!c.detail.empty()) j["detail"] = c.detail;
        if (c.budget_seconds > 0) j["budget_seconds"] = c.budget_seconds;
        checks.push_back(j);
        err << (c.skipped ? "SKIP " : c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.seconds << " s)\n";
    };
    for (int id = 1; id <= kCriteria; ++id) add(run_criterion(id, o));
    add(seed_reproducibility(o));
    r["checks"] = checks;
    r["status"] = all_passed(checks) ? "ok" : "check-failed";
    return r;
}

void emit(const Json& report, const Output& out, std::ostream& os) {
    const std::string text = report.dump(2) + "\n";
    os << text;
    if (!out.dir.empty()) {
        std::ofstream f(out.file("report.json"));
        if (!f) throw std::runtime_error("cannot write " + out.file("report.json"));
        f << text;
    }
}

}  // namespace

double RadialPolynomial::value(double r) const {
    double s = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) s = s * r + c[i];
    return s;
}

double RadialPolynomial::d1(double r) const {
    double s = 0.0;
    for (std::size_t i = c.size(); i-- > 1;) s = s * r + static_cast<double>(i) * c[i];
    return s;
}

double RadialPolynomial::d2(double r) const {
    double s = 0.0;
    for (std::size_t i = c.size(); i-- > 2;) s = s * r + static_cast<double>(i * (i - 1)) * c[i];
    return s;
}

ProblemFile parse_problem(const Json& doc) {
    Reader top(doc, "problem");
    ProblemFile p;
    Json& e = p.resolved;

    Reader conf = top.object("conformal");
    p.alpha = conf.integer("alpha");
    if (p.alpha != 1 && p.alpha != -1) conf.fail("alpha", "must be 1 or -1");
    p.tau = conf.number("tau");
    p.n = conf.integer("n");
    if (p.n < 3) conf.fail("n", "must be at least 3");
    p.varsigma = conf.number("varsigma", 1.0);
    if (!(p.varsigma > 0 && p.varsigma <= 1)) conf.fail("varsigma", "must lie in (0, 1]");
    conf.finish();

    Json op_echo, cone_echo, dom_echo, psi_echo;
    p.op = read_operator(top.object("operator"), p.n, op_echo);
    p.cone = read_cone(top.object("cone"), p.n, p.op, cone_echo);
    p.domain = read_domain(top.object("domain"), p.n, dom_echo);
    e["operator"] = op_echo;
    e["cone"] = cone_echo;
    e["conformal"] = {{"alpha", p.alpha}, {"tau", p.tau}, {"n", p.n}, {"varsigma", p.varsigma}};
    e["domain"] = dom_echo;

    if (top.has("exact")) {
        Reader ex = top.object("exact");
        if (ex.string("kind") != "radial-polynomial") ex.fail("kind", "only radial-polynomial is supported");
        p.exact = RadialPolynomial{ex.numbers("coefficients")};
        if (p.exact->c.empty()) ex.fail("coefficients", "must not be empty");
        if (p.domain.kind != DomainKind::Annulus && p.exact->c.size() > 1 && p.exact->c[1] != 0.0)
            ex.fail("coefficients", "the linear coefficient must vanish when the domain contains r = 0");
        ex.finish();
        p.levels = top.integer("levels", 4);
        if (p.levels < 1 || p.levels > 8) top.fail("levels", "must lie in 1..8");
        e["exact"] = {{"kind", "radial-polynomial"}, {"coefficients", p.exact->c}};
        e["levels"] = p.levels;
        if (top.has("psi")) top.fail("psi", "psi is manufactured from 'exact'; omit it");
        if (top.has("boundary")) top.fail("boundary", "boundary values come from 'exact'; omit it");
        p.psi = [](double) { return 1.0; };
        e["psi"] = {{"kind", "manufactured from exact"}};
        e["boundary"] = {{"finite", "exact solution values"}};
    } else {
        if (top.has("psi")) {
            p.psi = read_psi(top.object("psi"), psi_echo);
        } else {
            p.psi = [](double) { return 1.0; };
            psi_echo = {{"kind", "constant"}, {"value", 1.0}};
        }
        e["psi"] = psi_echo;
        Reader b = top.object("boundary");
        if (b.has("finite") == b.has("infinite")) b.fail("", "give exactly one of finite, infinite");
        if (b.has("finite")) {
            p.finite = b.number("finite");
            e["boundary"] = {{"finite", *p.finite}};
        } else {
            Reader inf = b.object("infinite");
            p.K = inf.integer("K");
            if (p.K < 1 || p.K > 30) inf.fail("K", "must lie in 1..30");
            inf.finish();
            e["boundary"] = {{"infinite", {{"K", p.K}}}};
        }
        b.finish();
        // psi must be positive where it is used
        const double lo = p.domain.kind == DomainKind::Annulus ? p.domain.inner : 0.0;
        const double hi = p.domain.kind == DomainKind::BoxMinusBalls ? (p.domain.hi - p.domain.lo).norm() : p.domain.outer;
        for (int i = 0; i <= 400; ++i) {
            const double x = lo + (hi - lo) * i / 400.0;
            if (!(p.psi(x) > 0)) throw InputError("problem.psi: not positive at |x| = " + fmt(x));
        }
    }

    Reader g = top.object("grid");
    if (g.has("h")) {
        p.grid_kind = "cube";
        p.h = g.number("h");
        if (!(p.h > 0 && p.h < 1)) g.fail("h", "must lie in (0, 1)");
        e["grid"] = {{"h", p.h}};
    } else {
        p.grid_kind = g.string("kind");
        if (p.grid_kind == "graded") {
            p.grid_count = g.integer("nodes");
            if (p.grid_count < 50) g.fail("nodes", "must be at least 50");
            e["grid"] = {{"kind", "graded"}, {"nodes", p.grid_count}};
        } else if (p.grid_kind == "uniform") {
            p.grid_count = g.integer("cells");
            if (p.grid_count < 4) g.fail("cells", "must be at least 4");
            e["grid"] = {{"kind", "uniform"}, {"cells", p.grid_count}};
        } else {
            g.fail("kind", "unknown grid kind '" + p.grid_kind + "' (graded, uniform, or give h)");
        }
    }
    g.finish();

    p.tol = top.number("tol", p.grid_kind == "cube" ? 1e-9 : 1e-10);
    if (!(p.tol > 0)) top.fail("tol", "must be positive");
    e["tol"] = p.tol;
    if (top.has("seed")) {
        const Json& s = top.at("seed");
        if (!s.is_number_unsigned()) top.fail("seed", "expected a non-negative integer");
        p.seed = s.get<std::uint64_t>();
    }
    e["seed"] = p.seed;
    top.finish();
    return p;
}

ProblemFile load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read problem file " + path);
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InputError("problem file " + path + " is not valid JSON: " + e.what());
    }
    return parse_problem(doc);
}

Json derived_constants(const ProblemFile& p) {
    const ConeConstants cc = cone_constants(p.cone, 4000, p.seed);
    const ConformalParams cp = conformal_params(p.alpha, p.tau, p.n, cc, p.varsigma);
    Json d;
    d["kappa"] = cc.kappa;
    d["vartheta"] = cc.vartheta.value;
    d["is_type2"] = cc.is_type2;
    d["rho"] = cp.rho;
    d["gamma"] = cp.gamma;
    d["theta"] = cp.theta;
    d["rhs_const"] = cp.rhs_const;
    d["v_rhs_const"] = cp.v_rhs_const;
    d["rate"] = cp.rate;
    d["construction_range"] = cp.construction_range;
    d["homogeneity"] = p.op.homogeneity();
    return d;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cone analytics and conformal curvature solvers", "conelab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::uint64_t seed = kDefaultSeed;
    int threads = 0;
    std::string outdir, problem_path;
    auto common = [&](CLI::App* sc) {
        sc->add_option("--seed", seed, "random seed");
        sc->add_option("--threads", threads, "worker threads (default: CONELAB_THREADS or 1)")->check(CLI::PositiveNumber);
        sc->add_option("--out", outdir, "directory for report.json and artifacts");
    };

    auto* cone = app.add_subcommand("cone", "cone constants");
    cone->require_subcommand(1);
    auto* analyze = cone->add_subcommand("analyze", "kappa, vartheta and type of a cone");
    std::string cone_kind;
    int cone_n = 3, cone_k = 1, budget = 4000;
    analyze->add_option("--kind", cone_kind, "garding or p_cone")->required();
    analyze->add_option("--n", cone_n, "dimension")->required();
    analyze->add_option("--k", cone_k, "index")->required();
    analyze->add_option("--budget", budget, "vartheta search budget");
    common(analyze);

    auto* ell = app.add_subcommand("ellipticity", "partial or full uniform ellipticity of an operator");
    std::string op_kind = "sigma_root";
    int op_n = 3, op_k = 1, op_l = 0;
    std::optional<double> rho;
    std::size_t samples = 10000;
    ell->add_option("--op", op_kind, "sigma, sigma_root, sigma_ratio or p_composed");
    ell->add_option("--n", op_n, "dimension")->required();
    ell->add_option("--k", op_k, "index")->required();
    ell->add_option("--l", op_l, "lower index for sigma_ratio");
    ell->add_option("--rho", rho, "check the transformed operator for this rho");
    ell->add_option("--samples", samples, "samples per index");
    common(ell);

    auto* transform = app.add_subcommand("transform", "conformal transform");
    transform->require_subcommand(1);
    auto* plan = transform->add_subcommand("plan", "derived constants for (alpha, tau, n, cone)");
    int alpha = 1, tn = 3;
    double tau = 3.0, varsigma = 1.0;
    std::string cone_arg;
    plan->add_option("--alpha", alpha, "1 or -1")->required();
    plan->add_option("--tau", tau, "tau")->required();
    plan->add_option("--n", tn, "dimension")->required();
    plan->add_option("--cone", cone_arg, "kind:k, e.g. garding:2")->required();
    plan->add_option("--varsigma", varsigma, "homogeneity degree");
    common(plan);

    auto* solve = app.add_subcommand("solve", "solve a problem file");
    solve->require_subcommand(1);
    auto* radial = solve->add_subcommand("radial", "radial collocation solver");
    auto* fd = solve->add_subcommand("fd", "3D finite-difference solver");
    std::optional<int> K, grid;
    std::optional<double> tol;
    for (auto* sc : {radial, fd}) {
        sc->add_option("--problem", problem_path, "problem file (JSON)")->required();
        sc->add_option("--tol", tol, "override tol");
        common(sc);
    }
    radial->add_option("--K", K, "override boundary.infinite.K");
    radial->add_option("--grid", grid, "override grid nodes or cells");

    auto* obstruction = app.add_subcommand("obstruction", "Gamma_1 versus Gamma_n on holed domains (exploratory)");
    int holes = 2, oK = 8;
    double oh = 0.125;
    obstruction->add_option("--holes", holes, "0 (ball), 1 or 2");
    obstruction->set_help_flag("--help", "Print this help message and exit");
    obstruction->add_option("--h", oh, "grid spacing");
    obstruction->add_option("--K", oK, "k = 1..2^K");
    common(obstruction);

    auto* verify = app.add_subcommand("verify", "acceptance criteria and reproducibility");
    bool fast = false;
    verify->add_flag("--fast", fast, "skip the long 3D runs");
    common(verify);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "input error: " << e.what() << '\n';
        return 2;
    }

    Output o{outdir};
    try {
        if (threads > 0) set_default_threads(threads);
        if (!outdir.empty()) std::filesystem::create_directories(outdir);
        Json report;
        if (*analyze) {
            report = cmd_cone_analyze(cone_kind, cone_n, cone_k, budget, seed);
        } else if (*ell) {
            report = cmd_ellipticity(op_kind, op_n, op_k, op_l, rho, samples, seed);
        } else if (*plan) {
            report = cmd_transform_plan(alpha, tau, tn, cone_arg, varsigma);
        } else if (*radial || *fd) {
            ProblemFile p = load_problem(problem_path);
            if (tol) {
                if (!(*tol > 0)) throw InputError("--tol: must be positive");
                p.tol = *tol, p.resolved["tol"] = *tol;
            }
            if (radial->count("--seed") || fd->count("--seed")) p.seed = seed, p.resolved["seed"] = seed;
            if (K) {
                if (p.finite || p.exact) throw InputError("--K: the problem has finite boundary data");
                p.K = *K, p.resolved["boundary"]["infinite"]["K"] = *K;
            }
            if (grid) {
                if (p.grid_kind == "graded") p.grid_count = *grid, p.resolved["grid"]["nodes"] = *grid;
                else if (p.grid_kind == "uniform") p.grid_count = *grid, p.resolved["grid"]["cells"] = *grid;
                else throw InputError("--grid: the problem uses a cube grid");
            }
            report = *radial ? cmd_solve_radial(p, o) : cmd_solve_fd(p, o, threads);
        } else if (*obstruction) {
            report = cmd_obstruction(holes, oh, oK, threads);
        } else if (*verify) {
            VerifyOptions vo;
            vo.seed = seed;
            vo.fast = fast;
            vo.threads = threads;
            report = cmd_verify(vo, err);
        }
        emit(report, o, out);
        return report.value("status", "ok") == "ok" ? 0 : 1;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return 2;
    } catch (const ParameterError& e) {
        err << "parameter error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        err << "input error: " << e.what() << '\n';
        return 2;
    } catch (const ResolutionError& e) {
        err << "input error: " << e.what() << '\n';
        return 2;
    } catch (const Json::exception& e) {
        err << "input error: " << e.what() << '\n';
        return 2;
    } catch (const FeasibilityError& e) {
        err << "numerical failure (infeasible): " << e.what() << " [" << e.inequality() << "]\n";
        return 1;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace conelab
