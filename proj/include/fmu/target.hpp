#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fmu/random.hpp"

namespace fmu {

inline constexpr double negative_infinity = -std::numeric_limits<double>::infinity();

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Cached evaluation of one parameter vector.
struct Evaluation {
    /// Log of the unnormalised posterior; -inf outside the support.
    double log_density = negative_infinity;
    /// Model output that the auxiliary likelihood is centred on (computed frequencies).
    Eigen::VectorXd predicted;

    bool in_support() const { return log_density > negative_infinity; }
};

/**
 * Posterior seen by the samplers. log_density may omit any normaliser of the
 * data likelihood that depends on theta; the auxiliary-variable machinery
 * estimates those ratios from draws of sample_auxiliary scored by log_kernel.
 */
class Target {
public:
    virtual ~Target() = default;

    virtual Eigen::Index dimension() const = 0;
    virtual Evaluation evaluate(const Eigen::VectorXd& theta) const = 0;

    /// Unnormalised log density of auxiliary data y given the evaluated state.
    virtual double log_kernel(VectorRef y, const Evaluation& at) const = 0;

    /// count draws y_j ~ f(y | theta) stored as columns.
    virtual Eigen::MatrixXd sample_auxiliary(const Evaluation& at, Eigen::Index count, Rng& rng) const = 0;
};

class Proposal {
public:
    virtual ~Proposal() = default;
    virtual Eigen::VectorXd draw(const Eigen::VectorXd& current, Rng& rng) const = 0;

    /// log q(current | proposed) - log q(proposed | current); zero for symmetric kernels.
    virtual double log_ratio(const Eigen::VectorXd& /*current*/, const Eigen::VectorXd& /*proposed*/) const {
        return 0.0;
    }
};

/// theta* = theta + L z with L L' = covariance.
class GaussianRandomWalk final : public Proposal {
public:
    explicit GaussianRandomWalk(const Eigen::MatrixXd& covariance);

    Eigen::VectorXd draw(const Eigen::VectorXd& current, Rng& rng) const override;
    const Eigen::MatrixXd& covariance() const { return covariance_; }

private:
    Eigen::MatrixXd covariance_;
    Eigen::MatrixXd factor_;
};

}  // namespace fmu
