#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmu/errors.hpp"
#include "fmu/target.hpp"

namespace fmu {

struct AmhConfig {
    int iterations = 1000;
    int burn_in = 250;
    Eigen::MatrixXd initial_covariance;
    /// First iteration that proposes from the history covariance; -1 means burn_in / 2.
    int adaptation_start = -1;
    /// Regularisation weight on diag(initial_covariance).
    double epsilon = 1e-6;
    std::uint64_t seed = 1;
    /// Length of the blocks checked for zero acceptance.
    int warning_window = 100;

    int resolved_adaptation_start() const { return adaptation_start < 0 ? burn_in / 2 : adaptation_start; }
    void validate(Eigen::Index dimension = -1) const;
};

struct AmhResult {
    Eigen::VectorXd mean;            ///< post-burn-in average
    Eigen::MatrixXd chain;           ///< one column per iteration
    std::vector<double> log_posterior;
    std::vector<char> accepted;
    std::vector<double> acceptance_rate;  ///< running rate after each iteration
    std::vector<std::string> warnings;
};

/// Welford running mean and covariance.
class RunningCovariance {
public:
    explicit RunningCovariance(Eigen::Index dimension)
        : mean_(Eigen::VectorXd::Zero(dimension)), scatter_(Eigen::MatrixXd::Zero(dimension, dimension)) {}

    void add(const Eigen::VectorXd& x) {
        ++count_;
        const Eigen::VectorXd delta = x - mean_;
        mean_ += delta / static_cast<double>(count_);
        scatter_.noalias() += delta * (x - mean_).transpose();
    }

    long count() const { return count_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    /// Unbiased sample covariance; needs count() >= 2.
    Eigen::MatrixXd covariance() const { return scatter_ / static_cast<double>(count_ - 1); }

private:
    long count_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd scatter_;
};

/// (2.38^2 / d) Cov + epsilon diag(initial).
Eigen::MatrixXd adapted_covariance(const Eigen::MatrixXd& history_covariance, const Eigen::MatrixXd& initial,
                                   double epsilon);

/**
 * Adaptive random-walk Metropolis. Proposals use initial_covariance until
 * adaptation_start, then the scaled history covariance. Uses
 * substream(seed, 0, 1) throughout.
 */
AmhResult run_amh(const Target& target, const Eigen::VectorXd& start, const AmhConfig& config);

}  // namespace fmu
