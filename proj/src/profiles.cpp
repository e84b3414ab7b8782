#include "qftlab/profiles.hpp"

#include <cmath>
#include <stdexcept>

namespace qftlab {

GridFunction GridFunction::constant(double value) {
    GridFunction f;
    f.offset_ = value;
    return f;
}

GridFunction GridFunction::gaussian_bump(double center, double width, double height, double offset) {
    if (!(width > 0)) throw std::invalid_argument("gaussian_bump: width must be positive");
    GridFunction f;
    f.offset_ = offset;
    f.terms_.push_back({FunctionTerm::Kind::gaussian_bump, center, width, height, 0.0});
    return f;
}

GridFunction GridFunction::rational_decay(double mu, double height, double offset) {
    GridFunction f;
    f.offset_ = offset;
    f.terms_.push_back({FunctionTerm::Kind::rational_decay, 0.0, 1.0, height, mu});
    return f;
}

GridFunction GridFunction::table(std::vector<double> values) {
    GridFunction f;
    f.table_ = std::move(values);
    return f;
}

GridFunction& GridFunction::add(FunctionTerm term) {
    if (table_) throw std::logic_error("GridFunction: cannot add closed-form terms to a table");
    if (term.kind == FunctionTerm::Kind::gaussian_bump && !(term.width > 0))
        throw std::invalid_argument("gaussian_bump: width must be positive");
    terms_.push_back(term);
    return *this;
}

double GridFunction::operator()(double x) const {
    if (table_) throw std::logic_error("GridFunction: tables have no closed form");
    double v = offset_;
    for (const auto& t : terms_) {
        const double y = x - t.center;
        switch (t.kind) {
            case FunctionTerm::Kind::gaussian_bump:
                v += t.height * std::exp(-(y / t.width) * (y / t.width));
                break;
            case FunctionTerm::Kind::rational_decay:
                v += t.height * std::pow(1.0 + y * y, -0.5 * t.mu);
                break;
        }
    }
    return v;
}

std::vector<double> GridFunction::sample(const std::vector<double>& nodes) const {
    if (table_) {
        if (table_->size() != nodes.size())
            throw std::invalid_argument("GridFunction: table has " + std::to_string(table_->size()) +
                                        " samples but the grid has " + std::to_string(nodes.size()) + " nodes");
        return *table_;
    }
    std::vector<double> out(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) out[i] = (*this)(nodes[i]);
    return out;
}

std::vector<double> GridFunction::sample_midpoints(const std::vector<double>& nodes, double spacing) const {
    const std::size_t n = nodes.size();
    std::vector<double> out(n + 1);
    if (table_) {
        const auto v = sample(nodes);
        out[0] = v.front();
        out[n] = v.back();
        for (std::size_t i = 1; i < n; ++i) out[i] = 0.5 * (v[i - 1] + v[i]);
        return out;
    }
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = (i < n ? nodes[i] : nodes[n - 1] + spacing) - 0.5 * spacing;
        out[i] = (*this)(x);
    }
    return out;
}

namespace {

double smooth_transition(double t) {
    // 0 for t <= 0, 1 for t >= 1.
    if (t <= 0) return 0.0;
    if (t >= 1) return 1.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

}  // namespace

double Profile::operator()(double s) const {
    switch (kind) {
        case Kind::constant:
            return value;
        case Kind::bump: {
            const double r = s / lo;
            if (std::abs(r) >= 1.0) return 0.0;
            return std::exp(1.0 - 1.0 / (1.0 - r * r));
        }
        case Kind::smooth_step:
            return smooth_transition((s - lo) / (hi - lo));
        case Kind::cutoff:
            return 1.0 - smooth_transition((s - lo) / (hi - lo));
        case Kind::indicator:
            return (s >= lo && s <= hi) ? 1.0 : 0.0;
    }
    return 0.0;
}

std::string Profile::name() const {
    switch (kind) {
        case Kind::constant: return "constant";
        case Kind::bump: return "bump";
        case Kind::smooth_step: return "smooth_step";
        case Kind::cutoff: return "cutoff";
        case Kind::indicator: return "indicator";
    }
    return "unknown";
}

Profile::Kind profile_kind_from_string(const std::string& s) {
    if (s == "constant") return Profile::Kind::constant;
    if (s == "bump") return Profile::Kind::bump;
    if (s == "smooth_step") return Profile::Kind::smooth_step;
    if (s == "cutoff") return Profile::Kind::cutoff;
    if (s == "indicator") return Profile::Kind::indicator;
    throw std::invalid_argument("unknown profile kind '" + s + "'");
}

}  // namespace qftlab
