#include "fmu/amh.hpp"

#include <Eigen/Cholesky>

#include "fmu/random.hpp"

namespace fmu {

namespace {

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov, int iteration) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0))
        throw CovarianceError("AMH proposal covariance lost positive definiteness at iteration " +
                              std::to_string(iteration));
    return llt.matrixL();
}

}  // namespace

void AmhConfig::validate(Eigen::Index dimension) const {
    auto fail = [](const std::string& msg) { throw ConfigError("amh config: " + msg); };
    if (iterations < 1) fail("iterations must be at least 1");
    if (burn_in < 0 || burn_in >= iterations) fail("burn_in must lie in [0, iterations)");
    if (!(epsilon > 0.0)) fail("epsilon must be positive");
    if (resolved_adaptation_start() < 2) fail("adaptation start must be at least 2");
    if (warning_window < 1) fail("warning window must be at least 1");
    if (initial_covariance.rows() != initial_covariance.cols() || initial_covariance.rows() == 0)
        fail("initial covariance must be a non-empty square matrix");
    if (dimension >= 0 && initial_covariance.rows() != dimension)
        fail("initial covariance must be " + std::to_string(dimension) + "x" + std::to_string(dimension));
    if (!initial_covariance.allFinite()) fail("initial covariance has non-finite entries");
    Eigen::LLT<Eigen::MatrixXd> llt(initial_covariance);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0))
        fail("initial covariance must be positive definite");
}

Eigen::MatrixXd adapted_covariance(const Eigen::MatrixXd& history_covariance, const Eigen::MatrixXd& initial,
                                   double epsilon) {
    const double d = static_cast<double>(history_covariance.rows());
    Eigen::MatrixXd cov = (2.38 * 2.38 / d) * history_covariance;
    cov.diagonal() += epsilon * initial.diagonal();
    return 0.5 * (cov + cov.transpose());
}

AmhResult run_amh(const Target& target, const Eigen::VectorXd& start, const AmhConfig& config) {
    const Eigen::Index d = target.dimension();
    config.validate(d);
    if (start.size() != d) throw ShapeError("AMH start point has the wrong dimension");

    Rng rng = substream(config.seed, 0, 1);
    Evaluation current = target.evaluate(start);
    if (!current.in_support()) throw ConfigError("AMH start point lies outside the support");
    Eigen::VectorXd theta = start;

    AmhResult out;
    out.chain.resize(d, config.iterations);
    out.log_posterior.reserve(static_cast<std::size_t>(config.iterations));
    out.accepted.reserve(static_cast<std::size_t>(config.iterations));
    out.acceptance_rate.reserve(static_cast<std::size_t>(config.iterations));

    RunningCovariance history(d);
    history.add(theta);
    const Eigen::MatrixXd initial_factor = cholesky_factor(config.initial_covariance, 0);
    const int adapt_from = config.resolved_adaptation_start();
    long n_accepted = 0;
    int window_accepted = 0;

    for (int it = 1; it <= config.iterations; ++it) {
        const Eigen::MatrixXd factor =
            it >= adapt_from
                ? cholesky_factor(adapted_covariance(history.covariance(), config.initial_covariance, config.epsilon), it)
                : initial_factor;
        Eigen::VectorXd cand = theta + factor * standard_normal(rng, d);
        Evaluation state = target.evaluate(cand);
        const double u = uniform01(rng);
        bool accept = false;
        if (state.in_support()) accept = std::log(u) < state.log_density - current.log_density;
        if (accept) {
            theta = std::move(cand);
            current = std::move(state);
            ++n_accepted;
            ++window_accepted;
        }
        history.add(theta);
        out.chain.col(it - 1) = theta;
        out.log_posterior.push_back(current.log_density);
        out.accepted.push_back(accept ? 1 : 0);
        out.acceptance_rate.push_back(static_cast<double>(n_accepted) / it);
        if (it % config.warning_window == 0) {
            if (window_accepted == 0)
                out.warnings.push_back("no proposals accepted in iterations " +
                                       std::to_string(it - config.warning_window + 1) + "-" + std::to_string(it));
            window_accepted = 0;
        }
    }
    out.mean = out.chain.rightCols(config.iterations - config.burn_in).rowwise().mean();
    return out;
}

}  // namespace fmu
