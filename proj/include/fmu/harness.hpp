#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "fmu/amh.hpp"
#include "fmu/bayes.hpp"
#include "fmu/mcdwis.hpp"
#include "fmu/model_io.hpp"

namespace fmu {

/// 100 |f_c - f_m| / f_m; InvalidData unless f_m > 0.
double percent_error(double measured, double computed);

struct FrequencyRow {
    int mode = 0;  ///< 1-based elastic mode number
    double measured = 0.0;
    double computed = 0.0;
    double error = 0.0;  ///< percent
};

struct FrequencyReport {
    std::vector<FrequencyRow> rows;
    double total_mean_error() const;
};

/// Arithmetic mean of per-mode percent errors; EstimationError when empty.
double total_mean_error(std::span<const double> errors);

FrequencyReport frequency_report(const Eigen::VectorXd& measured, const Eigen::VectorXd& computed);

/**
 * f_m = f_c(theta_true) (1 + c z), z ~ N(0, 1) per mode from substream(seed, 0, 2),
 * with covariance diag((c f_m)^2). c = 0 gives noiseless data; its covariance
 * then uses floor_noise in place of c so that the likelihood stays proper.
 */
MeasuredData generate_synthetic_data(const ModalEvaluator& evaluator, const ParameterSpace& space,
                                     const Eigen::VectorXd& theta_true, double noise, std::uint64_t seed,
                                     Eigen::Index n_modes, double floor_noise = 0.01);

struct SyntheticSpec {
    Eigen::VectorXd theta_true;
    double noise = 0.01;
    std::uint64_t seed = 1;
    Eigen::Index modes = 10;
};

/**
 * Experiment file (JSON). Paths are relative to the file.
 *
 *   model        path to a model file
 *   data         path to a measured-data file      \ exactly one
 *   synthetic    { theta_true, noise, seed, modes } /
 *   prior        { [mean], sigma }     mean defaults to the model nominal vector
 *   start        initial theta; defaults to the prior mean
 *   samplers     subset of ["mcdwis", "amh"]
 *   seed         sampler seed
 *   proposal_scale   proposal covariance = scale * diag(sigma)^2 (default 0.1)
 *   mcdwis       { iterations, burn_in, switch_threshold, n_min, n_max, n_low, n_up,
 *                  freedom, control, auxiliary_count, init_iterations, init_burn_in,
 *                  init_count, max_control_retries, traced_states }
 *   amh          { iterations, burn_in, adaptation_start, epsilon, warning_window }
 *   output       output directory
 */
struct ExperimentConfig {
    std::filesystem::path model_path;
    std::optional<std::filesystem::path> data_path;
    std::optional<SyntheticSpec> synthetic;
    std::optional<Eigen::VectorXd> prior_mean;
    Eigen::VectorXd prior_sigma;
    std::optional<Eigen::VectorXd> start;
    std::vector<std::string> samplers;
    std::uint64_t seed = 1;
    double proposal_scale = 0.1;
    McdwisConfig mcdwis;
    AmhConfig amh;
    std::filesystem::path output = "femu_out";

    void validate() const;
};

ExperimentConfig parse_experiment(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Everything needed to run samplers, resolved from an ExperimentConfig.
struct ExperimentSetup {
    ModelDefinition model;
    std::shared_ptr<const ModalEvaluator> evaluator;
    std::shared_ptr<const FrequencyTarget> target;
    Eigen::VectorXd start;
    Eigen::MatrixXd proposal_covariance;
};

ExperimentSetup prepare_experiment(const ExperimentConfig& config);

struct ExperimentResult {
    FrequencyReport initial;
    std::map<std::string, FrequencyReport> updated;
    std::map<std::string, Eigen::VectorXd> estimates;
    std::vector<std::filesystem::path> files;  ///< relative to the output directory
};

/// Runs the selected samplers and writes reports, traces and a manifest.
/// The TME summary goes to log.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log);

/// %.17g
std::string format_number(double x);

}  // namespace fmu
