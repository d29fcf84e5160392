#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmu/errors.hpp"
#include "fmu/random.hpp"
#include "fmu/target.hpp"

namespace fmu {

struct WeightedSample {
    Eigen::VectorXd theta;
    double weight = 1.0;
    Evaluation state;
};

/// One generation of weighted samples. Every weight lies in [w_low, w_up],
/// the band used by the control step that produced the population.
struct Population {
    std::vector<WeightedSample> samples;
    int generation = 0;
    double w_up = 0.0;
    double w_low = 0.0;

    std::size_t size() const { return samples.size(); }
    double total_weight() const;
};

struct McdwisConfig {
    int iterations = 1000;
    int burn_in = 250;
    double switch_threshold = std::exp(7.0);  ///< W_c
    int n_min = 100;
    int n_max = 1000;
    int n_low = 200;
    int n_up = 500;
    double freedom = 7.0 / std::log(10.0);  ///< kappa = W_up / W_low = log10(W_c)
    double control = 2.0;                   ///< lambda, multiplicative W_up step
    int auxiliary_count = 50;               ///< M
    Eigen::MatrixXd proposal_covariance;
    std::uint64_t seed = 1;

    int init_iterations = 1000;
    int init_burn_in = 200;
    int init_count = 200;

    int max_control_retries = 64;
    /// 1-based sample positions whose log-weight is traced every generation.
    std::vector<int> traced_states{1, 10, 100};

    /// Throws ConfigError on any violated invariant. dimension < 0 skips the
    /// proposal-covariance shape check.
    void validate(Eigen::Index dimension = -1) const;
};

struct AuxiliaryBatch {
    Eigen::MatrixXd draws;  ///< one draw per column
    Eigen::VectorXd source;
};

/// Exact draws y_j ~ f(y | theta*) through the target.
AuxiliaryBatch sample_auxiliary(const Target& target, const Eigen::VectorXd& theta_star, const Evaluation& at_star,
                                Eigen::Index count, Rng& rng);

/// Evaluates theta* first; throws InvalidState when it lies outside the support.
AuxiliaryBatch sample_auxiliary(const Target& target, const Eigen::VectorXd& theta_star, Eigen::Index count,
                                Rng& rng);

/// Random-walk Metropolis chain over y for kernels without an exact sampler.
/// Runs burn_in steps from start and then keeps every thinning-th state.
Eigen::MatrixXd sample_auxiliary_mh(const std::function<double(const Eigen::VectorXd&)>& log_kernel,
                                    const Eigen::VectorXd& start, Eigen::Index count, double step, int burn_in,
                                    int thinning, Rng& rng);

/// log of (1/M) sum_j p(y_j | theta_t) / p(y_j | theta*), by log-sum-exp.
template <typename CurrentKernel, typename ProposedKernel>
double log_is_ratio_estimate(CurrentKernel&& log_kernel_current, ProposedKernel&& log_kernel_proposed,
                             const AuxiliaryBatch& batch) {
    const Eigen::Index m = batch.draws.cols();
    if (m < 1) throw ShapeError("auxiliary batch is empty");
    Eigen::VectorXd terms(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto y = batch.draws.col(j);
        terms[j] = log_kernel_current(y) - log_kernel_proposed(y);
    }
    const double peak = terms.maxCoeff();
    if (!(peak > negative_infinity)) return negative_infinity;
    if (!std::isfinite(peak)) throw NumericalError("importance ratio is not finite");
    const double sum = (terms.array() - peak).exp().sum();
    return peak + std::log(sum) - std::log(static_cast<double>(m));
}

double log_is_ratio_estimate(const Target& target, const Evaluation& current, const Evaluation& proposed,
                             const AuxiliaryBatch& batch);

/// Estimate of Z(theta_t) / Z(theta*). Throws NumericalError when every
/// ratio underflows.
template <typename CurrentKernel, typename ProposedKernel>
double is_ratio_estimate(CurrentKernel&& log_kernel_current, ProposedKernel&& log_kernel_proposed,
                         const AuxiliaryBatch& batch) {
    const double log_r = log_is_ratio_estimate(log_kernel_current, log_kernel_proposed, batch);
    const double r = std::exp(log_r);
    if (!(r > 0.0)) {
        throw NumericalError("importance-sampling ratio underflowed: log estimate " + std::to_string(log_r) + " over " +
                             std::to_string(batch.draws.cols()) + " auxiliary draws");
    }
    return r;
}

/// log r_d = log w + log R + [log p(theta*) - log p(theta_t)] + log proposal ratio.
/// Returns -inf when theta* lies outside the support.
double log_dynamic_weight_ratio(double weight, double log_ratio_estimate, double log_density_current,
                                double log_density_proposed, double log_proposal_ratio = 0.0);

double dynamic_weight_ratio(double weight, double ratio_estimate, double log_density_current,
                            double log_density_proposed, double log_proposal_ratio = 0.0);

/**
 * R-type move with a = r_d / (r_d + phi): accept (theta*, r_d + phi) when
 * u <= a, otherwise keep theta_t with weight w (r_d + phi) / phi. With
 * phi = 0 and r_d = 0 the current sample is returned unchanged.
 */
WeightedSample r_move(const WeightedSample& current, const WeightedSample& proposed, double r_d, int phi, double u);

/// 1 when W_up of the previous generation is at most W_c, else 0.
int switching_parameter(double w_up_previous, double w_c);

struct WeightBounds {
    double upper = 0.0;
    double lower = 0.0;
};

/// Raises W_up by lambda above n_up, lowers it below n_low; W_low = W_up / kappa.
WeightBounds adapt_bounds(std::size_t population_size, WeightBounds bounds, const McdwisConfig& config);

/// Split a sample with w > W_up into ceil(w / W_up) equal copies.
std::vector<WeightedSample> enrich(const WeightedSample& sample, double w_up);

/// Keep a sample with w < W_low with probability w / W_low, re-weighted to W_low.
std::optional<WeightedSample> prune(const WeightedSample& sample, double w_low, double u);

/// Pruned-enriched population control with adaptive W_up. The soft band
/// [n_low, n_up] adapts W_up from the incoming size before the sweep; the hard
/// band [n_min, n_max] is enforced by re-sweeping the incoming population with
/// adapted bounds until it holds or max_control_retries is exhausted.
Population apepcs_step(const Population& population, const McdwisConfig& config, Rng& rng);

/// 1-based iteration indices burn_in + 1 + stride * k, stride = (iterations - burn_in) / count.
std::vector<int> even_selection(int iterations, int burn_in, int count);

/// Double Metropolis-Hastings chain (one exact auxiliary draw per step) from
/// start; returns the chain state after each iteration.
std::vector<WeightedSample> double_mh_chain(const Target& target, const Proposal& proposal,
                                            const Eigen::VectorXd& start, int iterations, Rng& rng);

/// Initial population: evenly spaced post-burn-in states of a double MH chain, weight 1 each.
Population double_mh_init(const Target& target, const Proposal& proposal, const Eigen::VectorXd& start,
                          const McdwisConfig& config, Rng& rng);

/// Running sum of w * rho(theta) and w, rescaled in log space so that weights
/// spanning many orders of magnitude do not overflow.
class WeightedAccumulator {
public:
    void add(double weight, const Eigen::VectorXd& value);
    void add(const Population& population);

    double total_weight() const;
    Eigen::VectorXd mean() const;

private:
    double log_scale_ = negative_infinity;
    double weight_sum_ = 0.0;
    Eigen::VectorXd value_sum_;
};

/// Self-normalised estimate sum w rho(theta) / sum w over the given generations.
template <typename StateFunction>
Eigen::VectorXd weighted_mean(std::span<const Population> history, StateFunction&& rho) {
    if (history.empty()) throw EstimationError("no populations to average");
    WeightedAccumulator acc;
    for (const auto& pop : history)
        for (const auto& s : pop.samples) {
            if (!std::isfinite(s.weight)) throw EstimationError("non-finite weight in history");
            acc.add(s.weight, Eigen::VectorXd(rho(s.theta)));
        }
    return acc.mean();
}

inline Eigen::VectorXd weighted_mean(std::span<const Population> history) {
    return weighted_mean(history, [](const Eigen::VectorXd& theta) { return theta; });
}

/// Per-generation diagnostics, one entry per generation.
struct McdwisTrace {
    std::vector<int> population_size;
    std::vector<double> w_up;
    std::vector<int> phi;
    std::vector<double> acceptance_rate;
    std::vector<int> control_retries;
    std::vector<int> traced_states;
    std::vector<std::vector<double>> state_log_weight;  ///< [generation][traced state]; NaN when absent

    std::size_t length() const { return population_size.size(); }
};

struct McdwisResult {
    Eigen::VectorXd estimate;
    Population initial_population;
    Population final_population;
    McdwisTrace trace;
};

/// Raised when a run stops early; carries the trace up to the failure.
class SamplerAborted : public Error {
public:
    SamplerAborted(const std::string& what, McdwisTrace partial) : Error(what), trace(std::move(partial)) {}
    McdwisTrace trace;
};

/**
 * Full MCDWIS run. Random streams: the initial double MH chain uses
 * substream(seed, 0, 0); the move of sample i in generation t uses
 * substream(seed, t, i + 1) and the control step substream(seed, t, 0), so
 * parallel and serial evaluation give identical results.
 */
McdwisResult run_mcdwis(const Target& target, const Proposal& proposal, const Eigen::VectorXd& start,
                        const McdwisConfig& config);

}  // namespace fmu
