// config.hpp - experiment configs and the batch runner behind the command line.
//
// A config is YAML (JSON parses as well). It is validated completely before any
// model is built; schema errors carry the line and column of the offending node.

#pragma once

#include "qftlab/dynamics.hpp"
#include "qftlab/models.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qftlab {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr const char* report_schema = "qftlab.report/1";

class ConfigError : public std::runtime_error {
public:
    // line and column are 1-based; 0 when unknown.
    ConfigError(const std::string& message, int line = 0, int column = 0);
    [[nodiscard]] int line() const { return line_; }
    [[nodiscard]] int column() const { return column_; }

private:
    int line_;
    int column_;
};

enum class ModelKind { pphi2, pphi_uv };

struct ModelConfig {
    ModelKind kind{ModelKind::pphi2};
    ModelParams params;
    double omega_fraction{1.0};   // scattering-mode designation
    double length_multiple{1.0};
};

// Gaussian packet in the mode space; restricted to the designated scattering
// modes unless scattering_only is false.
struct PacketSpec {
    double x0{0.0};
    double sigma{2.0};
    double k0{1.0};
    bool scattering_only{true};
};

struct SpectrumTask {
    int count{20};
};

struct HvzTask {
    double delta{0.05};
    double band{0.5};
    std::vector<std::pair<int, int>> truncations;  // (modes, n_max), the configured model first
};

// Threshold candidates are always given in the config; nullopt stands for the
// free_comparison preset {m_inf}.
struct ThresholdsTask {
    std::optional<std::vector<double>> tau_omega;
    double cap_above_E0{3.0};                      // in units of m_inf
    ThresholdVariant variant{ThresholdVariant::tau};
};

// Windows [E0 + lo + i w, E0 + lo + (i+1) w] up to E0 + hi, energies in units of m_inf.
struct MourreScanTask {
    double lo{0.0};
    double hi{3.0};
    double width{0.25};
    double margin{0.2};  // distance to the ladder below which a window is flagged
    double reference_fraction{0.05};  // c0 must reach this fraction of the one-particle minimum
    std::optional<std::vector<double>> tau_omega;
};

struct VirialTask {
    double relative_tol{1e-9};
};

struct PropagationTask {
    EstimateKind kind{EstimateKind::maxvel};
    EstimateParams params;
    double R_factor{0.0};          // maxvel: R = R_factor * v_max when R is not given
    std::vector<double> T_grid;
    PacketSpec packet;
    std::optional<std::vector<double>> threshold_tau;  // minvel threshold candidates
    double threshold_cap{0.0};          // minvel, above E0 in units of m_inf
};

struct ScatteringTask {
    std::vector<double> T_list;
    int resolvent_power{1};
    PacketSpec packet;
    bool ladder{true};
    std::vector<PacketSpec> wave_packets;  // empty: no wave operator
    int k_max{1};
};

struct CompletenessTask {
    double energy_cap{1.5};  // in units of m_inf
    std::vector<Profile> q_sequence;
    std::vector<PacketSpec> annihilators;
    std::vector<double> T_list;
    double annihilated_tol{0.05};
};

struct HypothesesTask {};

using TaskParams = std::variant<SpectrumTask, HvzTask, ThresholdsTask, MourreScanTask, VirialTask, PropagationTask,
                                ScatteringTask, CompletenessTask, HypothesesTask>;

struct TaskConfig {
    std::string kind;
    std::string name;
    int line{0};
    TaskParams params;
};

struct OutputConfig {
    std::filesystem::path directory{"qftlab_out"};
    bool json{true};
    bool csv{false};
};

struct ExperimentConfig {
    std::uint64_t seed{0};
    ModelConfig model;
    std::vector<TaskConfig> tasks;
    OutputConfig output;
    std::string source;  // raw text
    std::string hash;    // SHA-256 of the raw text, hex
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);

struct CapacityEntry {
    std::string what;
    int modes{0};
    int n_max{0};
    std::int64_t dim{0};
    double bytes{0.0};
};

// Predicted Fock dimensions and dense-matrix memory of every build the config
// asks for. Throws CapacityError when one exceeds the dimension cap.
std::vector<CapacityEntry> predict_capacity(const ExperimentConfig& cfg);

struct RunOptions {
    std::optional<std::filesystem::path> output_dir;
    std::optional<std::uint64_t> seed;
    bool force_hypotheses{false};
};

// Dry run: schema, capacity and one-particle preconditions, no Fock-space work.
nlohmann::json verify_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct RunResult {
    std::filesystem::path directory;
    std::vector<std::string> files;
    nlohmann::json manifest;
};

// Runs every task in order and writes the reports only after all of them
// succeeded.
RunResult run_experiment(ExperimentConfig cfg, const RunOptions& opts = {});

// Task report without the provenance envelope, for callers that do not write files.
nlohmann::json task_result(const BuiltModel& model, const ModelConfig& mc, const TaskConfig& task);

// CLI exit status for an exception thrown by the functions above.
int exit_code_for(const std::exception& e);

}  // namespace qftlab
