#include "fmu/mcdwis.hpp"

#include <exception>
#include <limits>
#include <sstream>

namespace fmu {

namespace {

constexpr double log_max_double = 709.0;

struct MoveOutcome {
    WeightedSample sample;
    bool accepted = false;
};

MoveOutcome r_move_outcome(const WeightedSample& current, const WeightedSample& proposed, double r_d, int phi,
                           double u) {
    if (phi != 0 && phi != 1) throw ConfigError("switching parameter must be 0 or 1");
    if (!(r_d >= 0.0) || !std::isfinite(r_d)) throw InvalidState("dynamic weight ratio must be finite and non-negative");
    if (!(u >= 0.0 && u < 1.0)) throw ConfigError("uniform draw must lie in [0, 1)");
    const double denom = r_d + static_cast<double>(phi);
    if (denom == 0.0) return {current, false};
    const double a = r_d / denom;
    if (u < a) {
        WeightedSample out = proposed;
        out.weight = denom;
        return {std::move(out), true};
    }
    WeightedSample out = current;
    out.weight = current.weight * denom / static_cast<double>(phi);
    return {std::move(out), false};
}

struct SweepResult {
    std::vector<WeightedSample> samples;
    bool overflow = false;
};

SweepResult sweep(const std::vector<WeightedSample>& input, WeightBounds band, std::size_t n_max, Rng& rng) {
    SweepResult out;
    out.samples.reserve(input.size());
    for (const auto& s : input) {
        if (s.weight > band.upper) {
            const double copies = std::ceil(s.weight / band.upper);
            if (static_cast<double>(out.samples.size()) + copies > static_cast<double>(n_max)) {
                out.overflow = true;
                return out;
            }
            auto pieces = enrich(s, band.upper);
            for (auto& p : pieces) out.samples.push_back(std::move(p));
        } else if (s.weight < band.lower) {
            if (auto kept = prune(s, band.lower, uniform01(rng))) out.samples.push_back(std::move(*kept));
        } else {
            out.samples.push_back(s);
        }
        if (out.samples.size() > n_max) {
            out.overflow = true;
            return out;
        }
    }
    return out;
}

std::vector<double> traced_log_weights(const Population& pop, const std::vector<int>& states) {
    std::vector<double> out;
    out.reserve(states.size());
    for (int s : states) {
        const auto idx = static_cast<std::size_t>(s - 1);
        out.push_back(idx < pop.size() ? std::log(pop.samples[idx].weight) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

}  // namespace

double Population::total_weight() const {
    double sum = 0.0;
    for (const auto& s : samples) sum += s.weight;
    return sum;
}

void McdwisConfig::validate(Eigen::Index dimension) const {
    auto fail = [](const std::string& msg) { throw ConfigError("mcdwis config: " + msg); };
    if (iterations < 1) fail("iterations must be at least 1");
    if (burn_in < 0 || burn_in >= iterations) fail("burn_in must lie in [0, iterations)");
    if (!(switch_threshold > 0.0)) fail("W_c must be positive");
    if (!(n_min >= 1 && n_min <= n_low && n_low < n_up && n_up <= n_max))
        fail("population bounds must satisfy 1 <= n_min <= n_low < n_up <= n_max");
    if (!(freedom > 1.0)) fail("freedom parameter kappa must exceed 1");
    if (!(control > 1.0)) fail("control parameter lambda must exceed 1");
    if (auxiliary_count < 1) fail("auxiliary sample count M must be at least 1");
    if (init_iterations < 1 || init_burn_in < 0 || init_burn_in >= init_iterations) fail("invalid initial chain length");
    if (init_count < 1 || (init_iterations - init_burn_in) / init_count < 1)
        fail("initial chain too short for the requested initial population");
    if (max_control_retries < 0) fail("max_control_retries must be non-negative");
    for (int s : traced_states)
        if (s < 1) fail("traced states are 1-based positions");
    if (dimension >= 0 && (proposal_covariance.rows() != dimension || proposal_covariance.cols() != dimension))
        fail("proposal covariance must be " + std::to_string(dimension) + "x" + std::to_string(dimension));
}

AuxiliaryBatch sample_auxiliary(const Target& target, const Eigen::VectorXd& theta_star, const Evaluation& at_star,
                                Eigen::Index count, Rng& rng) {
    if (count < 1) throw ConfigError("auxiliary sample count must be at least 1");
    if (!at_star.in_support()) throw InvalidState("auxiliary data requested outside the support");
    return {target.sample_auxiliary(at_star, count, rng), theta_star};
}

AuxiliaryBatch sample_auxiliary(const Target& target, const Eigen::VectorXd& theta_star, Eigen::Index count,
                                Rng& rng) {
    return sample_auxiliary(target, theta_star, target.evaluate(theta_star), count, rng);
}

Eigen::MatrixXd sample_auxiliary_mh(const std::function<double(const Eigen::VectorXd&)>& log_kernel,
                                    const Eigen::VectorXd& start, Eigen::Index count, double step, int burn_in,
                                    int thinning, Rng& rng) {
    if (count < 1 || thinning < 1 || burn_in < 0 || !(step > 0.0)) throw ConfigError("invalid auxiliary MH settings");
    Eigen::VectorXd y = start;
    double ly = log_kernel(y);
    if (!(ly > negative_infinity)) throw InvalidState("auxiliary chain starts outside the kernel support");
    Eigen::MatrixXd out(start.size(), count);
    const long total = burn_in + static_cast<long>(count) * thinning;
    Eigen::Index kept = 0;
    for (long it = 1; it <= total; ++it) {
        const Eigen::VectorXd cand = y + step * standard_normal(rng, y.size());
        const double lc = log_kernel(cand);
        if (std::log(uniform01(rng)) < lc - ly) {
            y = cand;
            ly = lc;
        }
        if (it > burn_in && (it - burn_in) % thinning == 0) out.col(kept++) = y;
    }
    return out;
}

double log_is_ratio_estimate(const Target& target, const Evaluation& current, const Evaluation& proposed,
                             const AuxiliaryBatch& batch) {
    return log_is_ratio_estimate([&](VectorRef y) { return target.log_kernel(y, current); },
                                 [&](VectorRef y) { return target.log_kernel(y, proposed); }, batch);
}

double log_dynamic_weight_ratio(double weight, double log_ratio_estimate, double log_density_current,
                                double log_density_proposed, double log_proposal_ratio) {
    if (!(weight > 0.0) || !std::isfinite(weight)) throw InvalidState("sample weight must be positive and finite");
    if (!std::isfinite(log_density_current)) throw InvalidState("current state has a non-finite log density");
    if (!(log_density_proposed > negative_infinity)) return negative_infinity;
    if (std::isnan(log_ratio_estimate) || std::isnan(log_density_proposed) || std::isnan(log_proposal_ratio))
        throw InvalidState("dynamic weight ratio is NaN");
    return std::log(weight) + log_ratio_estimate + (log_density_proposed - log_density_current) + log_proposal_ratio;
}

double dynamic_weight_ratio(double weight, double ratio_estimate, double log_density_current,
                            double log_density_proposed, double log_proposal_ratio) {
    if (!(ratio_estimate > 0.0)) throw InvalidState("importance ratio estimate must be positive");
    const double lr = log_dynamic_weight_ratio(weight, std::log(ratio_estimate), log_density_current,
                                               log_density_proposed, log_proposal_ratio);
    return std::exp(lr);
}

WeightedSample r_move(const WeightedSample& current, const WeightedSample& proposed, double r_d, int phi, double u) {
    return r_move_outcome(current, proposed, r_d, phi, u).sample;
}

int switching_parameter(double w_up_previous, double w_c) { return w_up_previous <= w_c ? 1 : 0; }

WeightBounds adapt_bounds(std::size_t population_size, WeightBounds bounds, const McdwisConfig& config) {
    if (!(config.freedom > 1.0)) throw ConfigError("freedom parameter kappa must exceed 1");
    const auto n = static_cast<long>(population_size);
    if (n > config.n_up)
        bounds.upper *= config.control;
    else if (n < config.n_low)
        bounds.upper /= config.control;
    bounds.lower = bounds.upper / config.freedom;
    return bounds;
}

std::vector<WeightedSample> enrich(const WeightedSample& sample, double w_up) {
    if (!(sample.weight > w_up)) return {sample};
    const double copies = std::ceil(sample.weight / w_up);
    WeightedSample piece = sample;
    piece.weight = sample.weight / copies;
    return std::vector<WeightedSample>(static_cast<std::size_t>(copies), piece);
}

std::optional<WeightedSample> prune(const WeightedSample& sample, double w_low, double u) {
    if (!(sample.weight < w_low)) return sample;
    if (u < sample.weight / w_low) {
        WeightedSample kept = sample;
        kept.weight = w_low;
        return kept;
    }
    return std::nullopt;
}

Population apepcs_step(const Population& population, const McdwisConfig& config, Rng& rng) {
    if (population.samples.empty()) throw ControlFailure("population control applied to an empty population");
    const auto n_min = static_cast<std::size_t>(config.n_min);
    const auto n_max = static_cast<std::size_t>(config.n_max);

    WeightBounds band = adapt_bounds(population.size(), {population.w_up, population.w_low}, config);
    std::ostringstream attempts;
    for (int attempt = 0; attempt <= config.max_control_retries; ++attempt) {
        SweepResult swept = sweep(population.samples, band, n_max, rng);
        const std::size_t size = swept.overflow ? n_max + 1 : swept.samples.size();
        attempts << " [W_up " << band.upper << " -> size " << (swept.overflow ? ">" : "") << swept.samples.size()
                 << "]";
        if (size >= n_min && size <= n_max) {
            Population out;
            out.samples = std::move(swept.samples);
            out.generation = population.generation;
            out.w_up = band.upper;
            out.w_low = band.lower;
            return out;
        }
        band = adapt_bounds(size, band, config);
    }
    throw ControlFailure("population size left [" + std::to_string(config.n_min) + ", " + std::to_string(config.n_max) +
                         "] after " + std::to_string(config.max_control_retries) + " adaptations:" + attempts.str());
}

std::vector<int> even_selection(int iterations, int burn_in, int count) {
    if (count < 1 || burn_in < 0 || iterations <= burn_in) throw ConfigError("invalid selection window");
    const int stride = (iterations - burn_in) / count;
    if (stride < 1) throw ConfigError("selection window shorter than the requested count");
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) out.push_back(burn_in + 1 + stride * k);
    return out;
}

std::vector<WeightedSample> double_mh_chain(const Target& target, const Proposal& proposal,
                                            const Eigen::VectorXd& start, int iterations, Rng& rng) {
    WeightedSample current{start, 1.0, target.evaluate(start)};
    if (!current.state.in_support()) throw ConfigError("double MH start point lies outside the support");
    std::vector<WeightedSample> chain;
    chain.reserve(static_cast<std::size_t>(iterations));
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXd cand = proposal.draw(current.theta, rng);
        Evaluation state = target.evaluate(cand);
        if (state.in_support()) {
            const Eigen::VectorXd y = target.sample_auxiliary(state, 1, rng).col(0);
            const double log_alpha = (state.log_density - current.state.log_density) +
                                     (target.log_kernel(y, current.state) - target.log_kernel(y, state)) +
                                     proposal.log_ratio(current.theta, cand);
            if (std::log(uniform01(rng)) < log_alpha) current = WeightedSample{std::move(cand), 1.0, std::move(state)};
        }
        chain.push_back(current);
    }
    return chain;
}

Population double_mh_init(const Target& target, const Proposal& proposal, const Eigen::VectorXd& start,
                          const McdwisConfig& config, Rng& rng) {
    const auto chain = double_mh_chain(target, proposal, start, config.init_iterations, rng);
    Population pop;
    for (int idx : even_selection(config.init_iterations, config.init_burn_in, config.init_count)) {
        WeightedSample s = chain[static_cast<std::size_t>(idx - 1)];
        s.weight = 1.0;
        pop.samples.push_back(std::move(s));
    }
    pop.generation = 0;
    pop.w_up = config.switch_threshold;
    pop.w_low = config.switch_threshold / config.freedom;
    return pop;
}

void WeightedAccumulator::add(double weight, const Eigen::VectorXd& value) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw EstimationError("weights must be finite and non-negative");
    if (weight == 0.0) return;
    if (value_sum_.size() == 0) value_sum_ = Eigen::VectorXd::Zero(value.size());
    if (value.size() != value_sum_.size()) throw ShapeError("state function changed dimension");
    const double lw = std::log(weight);
    if (lw > log_scale_) {
        const double factor = std::exp(log_scale_ - lw);
        weight_sum_ *= factor;
        value_sum_ *= factor;
        log_scale_ = lw;
    }
    const double w = std::exp(lw - log_scale_);
    weight_sum_ += w;
    value_sum_ += w * value;
}

void WeightedAccumulator::add(const Population& population) {
    for (const auto& s : population.samples) add(s.weight, s.theta);
}

double WeightedAccumulator::total_weight() const {
    return weight_sum_ > 0.0 ? weight_sum_ * std::exp(log_scale_) : 0.0;
}

Eigen::VectorXd WeightedAccumulator::mean() const {
    if (!(weight_sum_ > 0.0)) throw EstimationError("total weight is zero");
    return value_sum_ / weight_sum_;
}

McdwisResult run_mcdwis(const Target& target, const Proposal& proposal, const Eigen::VectorXd& start,
                        const McdwisConfig& config) {
    config.validate(target.dimension());
    McdwisResult result;
    McdwisTrace& trace = result.trace;
    trace.traced_states = config.traced_states;

    Rng init_rng = substream(config.seed, 0, 0);
    Population pop = double_mh_init(target, proposal, start, config, init_rng);
    result.initial_population = pop;
    WeightedAccumulator estimate;

    try {
        for (int t = 1; t <= config.iterations; ++t) {
            const int phi = switching_parameter(pop.w_up, config.switch_threshold);
            const auto n = static_cast<long>(pop.size());
            std::vector<WeightedSample> moved(pop.size());
            std::vector<char> accepted(pop.size(), 0);
            std::vector<char> failed(pop.size(), 0);
            std::exception_ptr error;

#pragma omp parallel for schedule(dynamic, 4)
            for (long i = 0; i < n; ++i) {
                try {
                    const auto idx = static_cast<std::size_t>(i);
                    const WeightedSample& cur = pop.samples[idx];
                    Rng rng = substream(config.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i) + 1);
                    WeightedSample cand{proposal.draw(cur.theta, rng), 0.0, {}};
                    double log_rd = negative_infinity;
                    try {
                        cand.state = target.evaluate(cand.theta);
                    } catch (const NumericalError&) {
                        failed[idx] = 1;
                    }
                    if (cand.state.in_support()) {
                        const auto batch = sample_auxiliary(target, cand.theta, cand.state, config.auxiliary_count, rng);
                        const double log_r = log_is_ratio_estimate(target, cur.state, cand.state, batch);
                        log_rd = log_dynamic_weight_ratio(cur.weight, log_r, cur.state.log_density,
                                                          cand.state.log_density,
                                                          proposal.log_ratio(cur.theta, cand.theta));
                        if (log_rd > log_max_double)
                            throw InvalidState("dynamic weight overflow (log r_d = " + std::to_string(log_rd) + ")");
                    }
                    auto outcome = r_move_outcome(cur, cand, std::exp(log_rd), phi, uniform01(rng));
                    moved[idx] = std::move(outcome.sample);
                    accepted[idx] = outcome.accepted ? 1 : 0;
                } catch (...) {
#pragma omp critical
                    if (!error) error = std::current_exception();
                }
            }
            if (error) std::rethrow_exception(error);
            long n_failed = 0, n_accepted = 0;
            for (long i = 0; i < n; ++i) {
                n_failed += failed[static_cast<std::size_t>(i)];
                n_accepted += accepted[static_cast<std::size_t>(i)];
            }
            if (n_failed == n)
                throw NumericalError("every model evaluation failed in generation " + std::to_string(t));

            Population moved_pop{std::move(moved), t, pop.w_up, pop.w_low};
            Rng control_rng = substream(config.seed, static_cast<std::uint64_t>(t), 0);
            const double w_up_before = adapt_bounds(moved_pop.size(), {pop.w_up, pop.w_low}, config).upper;
            pop = apepcs_step(moved_pop, config, control_rng);
            pop.generation = t;

            trace.population_size.push_back(static_cast<int>(pop.size()));
            trace.w_up.push_back(pop.w_up);
            trace.phi.push_back(phi);
            trace.acceptance_rate.push_back(static_cast<double>(n_accepted) / static_cast<double>(n));
            trace.control_retries.push_back(
                static_cast<int>(std::lround(std::abs(std::log(pop.w_up / w_up_before)) / std::log(config.control))));
            trace.state_log_weight.push_back(traced_log_weights(pop, config.traced_states));

            if (t > config.burn_in) estimate.add(pop);
        }
    } catch (const Error& e) {
        throw SamplerAborted(std::string("MCDWIS run aborted: ") + e.what(), trace);
    }

    result.estimate = estimate.mean();
    result.final_population = std::move(pop);
    return result;
}

}  // namespace fmu
