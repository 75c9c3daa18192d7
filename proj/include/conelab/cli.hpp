#pragma once

#include "conelab/cone.hpp"
#include "conelab/geometry.hpp"
#include "conelab/symfunc.hpp"
#include "conelab/transform.hpp"

#include "json.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace conelab {

using Json = nlohmann::ordered_json;

/// Malformed command line or problem file (exit code 2).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Polynomial sum_i c_i r^i with first and second derivatives.
struct RadialPolynomial {
    std::vector<double> c;
    double value(double r) const;
    double d1(double r) const;
    double d2(double r) const;
};

/// A validated problem definition. `resolved` echoes every field, defaults filled in.
struct ProblemFile {
    OperatorSpec op;
    ConeSpec cone;
    int alpha = 1;
    double tau = 3.0;
    int n = 3;
    double varsigma = 1.0;
    DomainSpec domain;
    std::function<double(double)> psi;  ///< of |x|
    std::optional<double> finite;       ///< boundary value
    int K = 0;                          ///< infinite family 1..2^K when !finite
    std::string grid_kind;              ///< graded | uniform | cube
    int grid_count = 0;                 ///< nodes (graded) or cells (uniform)
    double h = 0.0;                     ///< cube spacing
    double tol = 0.0;
    std::uint64_t seed = kDefaultSeed;
    std::optional<RadialPolynomial> exact;
    int levels = 4;
    Json resolved;
};

ProblemFile parse_problem(const Json& doc);
ProblemFile load_problem(const std::string& path);

/// Derived constants echoed into reports (rho, gamma, theta, rhs constants, kappa, vartheta, rate).
Json derived_constants(const ProblemFile& p);

/// Whole command line (without the program name); 0 success, 1 numerical failure, 2 input error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace conelab
