// models.hpp - concrete Hamiltonians: the variable-metric P(phi)_2 model with a
// Wick-ordered polynomial interaction, the UV-cutoff variant with a raw
// polynomial, and the hypothesis surrogate report.

#pragma once

#include "qftlab/spectral.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qftlab {

inline constexpr int max_polynomial_degree = max_wick_degree;

struct PolynomialSpec {
    int degree{0};
    std::map<int, GridFunction> coefficients;  // p -> a_p(x); missing entries are zero
    GridFunction cutoff;                       // g(x) >= 0

    // lambda * x^degree with a constant g.
    static PolynomialSpec monomial(int degree, double lambda, GridFunction g);
};

enum class PolynomialCheck {
    hamiltonian,  // even degree, constant positive leading coefficient
    none          // any polynomial up to the degree cap
};

// Spatial samples of a spec. Nodes are rows of `points`; 2-D coefficients are radial.
struct PolynomialSamples {
    std::map<int, rvec> coefficient;  // a_p at nodes
    rvec cutoff;                      // g at nodes
};

PolynomialSamples sample_polynomial(const PolynomialSpec& spec, const OneParticleModel& model);
void validate_polynomial(const PolynomialSpec& spec, PolynomialCheck check);

// Point-evaluation factors f_k(x) = omega_k^{-1/2} e_k(x) chi(omega_k / kappa), nodes x d.
// chi is the sharp cutoff 1_{[0,1]}.
rmat field_factors(const ModeSpace& modes, std::optional<double> uv_kappa = std::nullopt);

// Symbol of int g(x) :P(x, phi(x)): dx over the mode space. Blocks with more than
// n_max legs on either side are omitted when n_max >= 0; they vanish on the
// truncated space.
WickKernel wick_order_polynomial(const PolynomialSpec& spec, const ModeSpace& modes,
                                 std::optional<double> uv_kappa = std::nullopt, int n_max = -1,
                                 PolynomialCheck check = PolynomialCheck::hamiltonian);

// Same, for the raw (not Wick-ordered) polynomial: each phi^r is reordered
// with the contraction c(x) = sum_k f_k(x)^2 / 2.
WickKernel raw_polynomial_kernel(const PolynomialSpec& spec, const ModeSpace& modes,
                                 std::optional<double> uv_kappa = std::nullopt, int n_max = -1,
                                 PolynomialCheck check = PolynomialCheck::hamiltonian);

struct AxisSpec {
    double half_length{0.0};
    int points{0};
    Boundary boundary{Boundary::dirichlet};
};

struct ModelParams {
    std::vector<AxisSpec> axes;  // one axis, or two for the UV model
    GridFunction a_fn = GridFunction::constant(1.0);
    GridFunction c_fn = GridFunction::constant(1.0);
    std::optional<double> m_inf;
    PolynomialSpec polynomial;
    int modes{1};
    int n_max{1};
    std::optional<double> uv_kappa;
    double decay_s{1.0};               // weight exponent of the (B2) surrogate
    bool force{false};                 // build despite failed prechecks
    double stability_tol{-1.0};        // > 0: compare E0 with the n_max + 1 build
    std::int64_t dim_cap{default_dim_cap};
    Profile is_profile = Profile::smooth_step(1.0, 2.0);
    std::vector<double> is_radii{2.0, 4.0, 8.0};
    int is_points{24};                 // nodes of the (Is) probe box
    std::vector<std::pair<int, int>> h3_pairs{{1, 1}, {2, 2}};  // (n, p) in ||N^n (H + b)^-p||
};

enum class Verdict { pass, fail, not_applicable };
std::string to_string(Verdict v);

struct HypothesisRecord {
    std::string name;
    double value{0.0};
    double threshold{0.0};
    Verdict verdict{Verdict::pass};
    std::string note;
};

struct BuiltModel {
    ModelParams params;
    std::shared_ptr<const OneParticleModel> one_particle;
    std::shared_ptr<const ModeSpace> modes;
    WickKernel kernel;
    QftHamiltonian h;
    std::vector<HypothesisRecord> prechecks;
    std::optional<double> E0_next;
    std::vector<std::string> warnings;
};

// One-particle model on the configured axes (radial coefficients on two axes).
std::shared_ptr<const OneParticleModel> one_particle_model(const ModelParams& params);

// (H1) coefficient positivity, (B1) and (B2) on the sampled coefficients.
std::vector<HypothesisRecord> coefficient_hypotheses(const ModelParams& params);

// H = dGamma(omega) + int g :P(x, phi(x)): dx. Throws HypothesisViolation when
// a precheck fails and params.force is unset.
BuiltModel build_pphi2(const ModelParams& params);

// H = dGamma(omega) + int g P(x, phi_kappa(x)) dx with the raw polynomial; at
// most 256 grid nodes.
BuiltModel build_pphi_uv(const ModelParams& params);

// decay_probe_Is for the model's interaction. On one axis the kernel is rebuilt
// on every mode of a probe box of half-length 2.5 max(R) with is_points nodes:
// a mode cutoff band-limits the kernel legs, and their slowly decaying tails
// would dominate the fit. Two-axis models use their own truncated kernel.
InterleaveTable is_decay_probe(const BuiltModel& m);

std::vector<HypothesisRecord> hypothesis_report(const BuiltModel& m);

}  // namespace qftlab
