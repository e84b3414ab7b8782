// profiles.hpp - closed-form scalar functions used as coefficients and cutoffs.
//
// Two families live here:
//  * GridFunction: coefficient functions on the line (metric a(x), c(x),
//    polynomial coefficients, space cutoff g) either as a sum of named closed
//    forms or as a table sampled at the grid nodes.
//  * Profile: dimensionless cutoffs F(s) applied to <x>/R or <x>/t.

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace qftlab {

struct FunctionTerm {
    enum class Kind { gaussian_bump, rational_decay };
    Kind kind{Kind::gaussian_bump};
    double center{0.0};
    double width{1.0};
    double height{1.0};  // amplitude for both kinds
    double mu{1.0};      // rational_decay exponent: height * (1 + (x-center)^2)^(-mu/2)
};

class GridFunction {
public:
    GridFunction() = default;

    static GridFunction constant(double value);
    static GridFunction gaussian_bump(double center, double width, double height, double offset = 0.0);
    static GridFunction rational_decay(double mu, double height = 1.0, double offset = 0.0);
    static GridFunction table(std::vector<double> values);

    GridFunction& add(FunctionTerm term);

    [[nodiscard]] bool is_table() const { return table_.has_value(); }
    [[nodiscard]] double offset() const { return offset_; }
    [[nodiscard]] const std::vector<FunctionTerm>& terms() const { return terms_; }
    [[nodiscard]] const std::optional<std::vector<double>>& table_values() const { return table_; }

    // Closed forms only; throws std::logic_error for tables.
    [[nodiscard]] double operator()(double x) const;

    // Values at the given nodes. Tables must have exactly nodes.size() entries.
    [[nodiscard]] std::vector<double> sample(const std::vector<double>& nodes) const;

    // Values at midpoints between consecutive nodes, plus the two boundary
    // midpoints (size nodes.size() + 1). Tables average neighbouring samples and
    // repeat the edge value outside.
    [[nodiscard]] std::vector<double> sample_midpoints(const std::vector<double>& nodes, double spacing) const;

private:
    double offset_{0.0};
    std::vector<FunctionTerm> terms_;
    std::optional<std::vector<double>> table_;
};

struct Profile {
    enum class Kind { constant, bump, smooth_step, cutoff, indicator };
    Kind kind{Kind::constant};
    double lo{0.0};      // bump: radius; step/cutoff/indicator: left edge
    double hi{1.0};      // step/cutoff/indicator: right edge
    double value{1.0};   // constant

    static Profile constant_one() { return {Kind::constant, 0, 0, 1.0}; }
    static Profile bump(double radius) { return {Kind::bump, radius, radius, 1.0}; }
    // 0 for s <= lo, 1 for s >= hi, C-infinity in between.
    static Profile smooth_step(double lo, double hi) { return {Kind::smooth_step, lo, hi, 1.0}; }
    // 1 - smooth_step: equal to 1 near zero.
    static Profile cutoff(double lo, double hi) { return {Kind::cutoff, lo, hi, 1.0}; }
    static Profile indicator(double lo, double hi) { return {Kind::indicator, lo, hi, 1.0}; }

    [[nodiscard]] double operator()(double s) const;
    [[nodiscard]] std::string name() const;
};

Profile::Kind profile_kind_from_string(const std::string& s);

}  // namespace qftlab
