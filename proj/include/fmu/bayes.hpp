#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fmu/beam_fem.hpp"
#include "fmu/errors.hpp"
#include "fmu/target.hpp"

namespace fmu {

/// Names and box bounds of the updating vector.
struct ParameterSpace {
    std::vector<std::string> names;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::Index dimension() const { return lower.size(); }
    bool contains(const Eigen::VectorXd& theta) const;
    /// Throws ConfigError unless lower < upper componentwise and sizes agree.
    void validate() const;
};

/// A parameter vector together with the space it lives in.
struct UpdatingVector {
    ParameterSpace space;
    Eigen::VectorXd values;

    bool within_bounds() const { return space.contains(values); }
    void validate() const;
};

/// Multivariate normal with cached Cholesky factor and log-determinant.
class GaussianDensity {
public:
    GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

    Eigen::Index dimension() const { return mean_.size(); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }
    double log_determinant() const { return log_det_; }

    /// r' Sigma^{-1} r
    template <typename Derived>
    double quadratic_form(const Eigen::MatrixBase<Derived>& residual) const {
        return llt_.matrixL().solve(residual.derived().eval()).squaredNorm();
    }

    /// Full log density at x, including the normalising terms.
    template <typename Derived>
    double log_density(const Eigen::MatrixBase<Derived>& x) const {
        if (x.size() != dimension())
            throw ShapeError("vector of size " + std::to_string(x.size()) + " against density of dimension " +
                             std::to_string(dimension()));
        const double n = static_cast<double>(dimension());
        return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_ - 0.5 * quadratic_form(x - mean_);
    }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_det_ = 0.0;
};

/// Measured natural frequencies (Hz) and their covariance.
class MeasuredData {
public:
    MeasuredData(Eigen::VectorXd frequencies, Eigen::MatrixXd covariance);

    /// Covariance diag((c * f_i)^2).
    static MeasuredData with_relative_noise(Eigen::VectorXd frequencies, double relative_noise);

    Eigen::Index size() const { return density_.dimension(); }
    const Eigen::VectorXd& frequencies() const { return density_.mean(); }
    const Eigen::MatrixXd& covariance() const { return density_.covariance(); }
    const GaussianDensity& density() const { return density_; }

private:
    GaussianDensity density_;
};

class GaussianPrior {
public:
    GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance) : density_(std::move(mean), std::move(covariance)) {}

    Eigen::Index dimension() const { return density_.dimension(); }
    const Eigen::VectorXd& mean() const { return density_.mean(); }
    const Eigen::MatrixXd& covariance() const { return density_.covariance(); }
    const GaussianDensity& density() const { return density_; }

private:
    GaussianDensity density_;
};

/// -(N/2) ln 2pi - 1/2 ln|Sigma_f| - 1/2 (f_c - f_m)' Sigma_f^{-1} (f_c - f_m)
double log_likelihood(const Eigen::VectorXd& computed, const MeasuredData& data);

/// -(d/2) ln 2pi - 1/2 ln|Sigma_0| - 1/2 (theta - mu_0)' Sigma_0^{-1} (theta - mu_0)
double log_prior(const Eigen::VectorXd& theta, const GaussianPrior& prior);

/// log likelihood of the first N_m elastic frequencies plus log prior; -inf
/// outside the parameter bounds. The evidence term is never computed.
double log_unnormalized_posterior(const UpdatingVector& theta, const BeamModel& model, const MeasuredData& data,
                                  const GaussianPrior& prior);

/**
 * Frequency-based model-updating posterior. The auxiliary likelihood is the
 * Gaussian measurement model, so auxiliary data can be drawn exactly and its
 * normaliser does not depend on theta.
 */
class FrequencyTarget final : public Target {
public:
    FrequencyTarget(std::shared_ptr<const ModalEvaluator> evaluator, ParameterSpace space, MeasuredData data,
                    GaussianPrior prior);

    Eigen::Index dimension() const override { return space_.dimension(); }
    Evaluation evaluate(const Eigen::VectorXd& theta) const override;
    double log_kernel(VectorRef y, const Evaluation& at) const override;
    Eigen::MatrixXd sample_auxiliary(const Evaluation& at, Eigen::Index count, Rng& rng) const override;

    /// First N_m elastic frequencies at theta (no bounds check).
    Eigen::VectorXd predict(const Eigen::VectorXd& theta) const;

    const ParameterSpace& space() const { return space_; }
    const MeasuredData& data() const { return data_; }
    const GaussianPrior& prior() const { return prior_; }
    const ModalEvaluator& evaluator() const { return *evaluator_; }

private:
    std::shared_ptr<const ModalEvaluator> evaluator_;
    ParameterSpace space_;
    MeasuredData data_;
    GaussianPrior prior_;
};

}  // namespace fmu
