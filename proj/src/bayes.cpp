#include "fmu/bayes.hpp"

namespace fmu {

namespace {

Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& covariance, const char* what) {
    if (covariance.rows() != covariance.cols() || covariance.rows() == 0)
        throw ShapeError(std::string(what) + " must be a non-empty square matrix");
    if (!covariance.allFinite()) throw CovarianceError(std::string(what) + " has non-finite entries");
    const double scale = covariance.cwiseAbs().maxCoeff();
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw CovarianceError(std::string(what) + " is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0))
        throw CovarianceError(std::string(what) + " is not positive definite");
    return llt;
}

}  // namespace

bool ParameterSpace::contains(const Eigen::VectorXd& theta) const {
    if (theta.size() != lower.size()) return false;
    return (theta.array() >= lower.array()).all() && (theta.array() <= upper.array()).all();
}

void ParameterSpace::validate() const {
    if (lower.size() != upper.size() || static_cast<std::size_t>(lower.size()) != names.size())
        throw ConfigError("parameter names and bounds have different lengths");
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i]))
            throw ConfigError("parameter '" + names[static_cast<std::size_t>(i)] + "' needs finite bounds with lower < upper");
    }
}

void UpdatingVector::validate() const {
    space.validate();
    if (values.size() != space.dimension())
        throw ShapeError("updating vector has " + std::to_string(values.size()) + " values for " +
                         std::to_string(space.dimension()) + " parameters");
    if (!within_bounds()) throw ConfigError("updating vector lies outside its bounds");
}

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), llt_(spd_factor(covariance_, "covariance")) {
    if (mean_.size() != covariance_.rows())
        throw ShapeError("mean of size " + std::to_string(mean_.size()) + " with covariance of size " +
                         std::to_string(covariance_.rows()));
    log_det_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

MeasuredData::MeasuredData(Eigen::VectorXd frequencies, Eigen::MatrixXd covariance)
    : density_(std::move(frequencies), std::move(covariance)) {
    if (!(density_.mean().array() > 0.0).all()) throw InvalidData("measured frequencies must be positive");
}

MeasuredData MeasuredData::with_relative_noise(Eigen::VectorXd frequencies, double relative_noise) {
    if (!(relative_noise > 0.0)) throw ConfigError("relative noise level must be positive");
    Eigen::MatrixXd cov = (relative_noise * frequencies).array().square().matrix().asDiagonal();
    return MeasuredData(std::move(frequencies), std::move(cov));
}

double log_likelihood(const Eigen::VectorXd& computed, const MeasuredData& data) {
    if (computed.size() != data.size())
        throw ShapeError("computed frequency vector has " + std::to_string(computed.size()) + " entries, data has " +
                         std::to_string(data.size()));
    return data.density().log_density(computed);
}

double log_prior(const Eigen::VectorXd& theta, const GaussianPrior& prior) {
    if (theta.size() != prior.dimension())
        throw ShapeError("updating vector has " + std::to_string(theta.size()) + " components, prior has " +
                         std::to_string(prior.dimension()));
    return prior.density().log_density(theta);
}

double log_unnormalized_posterior(const UpdatingVector& theta, const BeamModel& model, const MeasuredData& data,
                                  const GaussianPrior& prior) {
    if (!theta.within_bounds()) return negative_infinity;
    const auto km = assemble(model, theta.values);
    const auto modal = modal_solve(km.stiffness, km.mass, km.stiffness.rows(), false);
    return log_likelihood(modal.elastic_frequencies(data.size()), data) + log_prior(theta.values, prior);
}

GaussianRandomWalk::GaussianRandomWalk(const Eigen::MatrixXd& covariance)
    : covariance_(covariance), factor_(spd_factor(covariance, "proposal covariance").matrixL()) {}

Eigen::VectorXd GaussianRandomWalk::draw(const Eigen::VectorXd& current, Rng& rng) const {
    if (current.size() != factor_.rows()) throw ShapeError("proposal dimension mismatch");
    return current + factor_ * standard_normal(rng, current.size());
}

FrequencyTarget::FrequencyTarget(std::shared_ptr<const ModalEvaluator> evaluator, ParameterSpace space,
                                 MeasuredData data, GaussianPrior prior)
    : evaluator_(std::move(evaluator)), space_(std::move(space)), data_(std::move(data)), prior_(std::move(prior)) {
    if (!evaluator_) throw ConfigError("frequency target needs a modal evaluator");
    space_.validate();
    if (prior_.dimension() != space_.dimension() || evaluator_->parameter_count() != space_.dimension())
        throw ShapeError("prior, model and parameter space disagree on the updating-vector dimension");
}

Eigen::VectorXd FrequencyTarget::predict(const Eigen::VectorXd& theta) const {
    return select_elastic(evaluator_->frequencies(theta), data_.size());
}

Evaluation FrequencyTarget::evaluate(const Eigen::VectorXd& theta) const {
    Evaluation out;
    if (!space_.contains(theta)) return out;
    out.predicted = predict(theta);
    out.log_density = log_likelihood(out.predicted, data_) + log_prior(theta, prior_);
    return out;
}

double FrequencyTarget::log_kernel(VectorRef y, const Evaluation& at) const {
    return -0.5 * data_.density().quadratic_form(y - at.predicted);
}

Eigen::MatrixXd FrequencyTarget::sample_auxiliary(const Evaluation& at, Eigen::Index count, Rng& rng) const {
    const Eigen::Index n = data_.size();
    Eigen::MatrixXd z(n, count);
    for (Eigen::Index j = 0; j < count; ++j) z.col(j) = standard_normal(rng, n);
    Eigen::MatrixXd y = data_.density().factor().matrixL() * z;
    y.colwise() += at.predicted;
    return y;
}

}  // namespace fmu
