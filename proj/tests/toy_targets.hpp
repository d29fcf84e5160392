#pragma once

#include <cmath>
#include <numbers>

#include "fmu/bayes.hpp"
#include "fmu/mcdwis.hpp"

namespace fmu::testing {

/// p(y | theta) = exp(-y^2 / (2 theta)), so Z(theta) = sqrt(2 pi theta).
class GaussianFamily final : public Target {
public:
    Eigen::Index dimension() const override { return 1; }
    Evaluation evaluate(const Eigen::VectorXd& theta) const override;
    double log_kernel(VectorRef y, const Evaluation& at) const override;
    Eigen::MatrixXd sample_auxiliary(const Evaluation& at, Eigen::Index count, Rng& rng) const override;
};

/**
 * theta in {0, 1}, uniform prior, observation x with kernel
 * g(x, theta) = exp(-x^2 / (2 s_theta^2)). The per-state normaliser
 * s_theta sqrt(2 pi) is only reachable through auxiliary draws.
 */
class TwoStateTarget final : public Target {
public:
    TwoStateTarget(double s0, double s1, double x) : scale_{s0, s1}, x_(x) {}

    Eigen::Index dimension() const override { return 1; }
    Evaluation evaluate(const Eigen::VectorXd& theta) const override;
    double log_kernel(VectorRef y, const Evaluation& at) const override;
    Eigen::MatrixXd sample_auxiliary(const Evaluation& at, Eigen::Index count, Rng& rng) const override;

    /// P(theta = 1 | x) by enumeration.
    double probability_of_one() const;

private:
    double scale_[2];
    double x_;
};

/// theta -> 1 - theta.
class FlipProposal final : public Proposal {
public:
    Eigen::VectorXd draw(const Eigen::VectorXd& current, Rng&) const override {
        return Eigen::VectorXd::Constant(1, 1.0 - current[0]);
    }
};

/// Plain Gaussian log density in theta; the auxiliary kernel is theta-free.
class GaussianTarget final : public Target {
public:
    GaussianTarget(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double offset = 0.0)
        : density_(std::move(mean), std::move(covariance)), offset_(offset) {}

    Eigen::Index dimension() const override { return density_.dimension(); }
    Evaluation evaluate(const Eigen::VectorXd& theta) const override;
    double log_kernel(VectorRef y, const Evaluation&) const override { return -0.5 * y.squaredNorm(); }
    Eigen::MatrixXd sample_auxiliary(const Evaluation& at, Eigen::Index count, Rng& rng) const override;

private:
    GaussianDensity density_;
    double offset_;
};

}  // namespace fmu::testing
