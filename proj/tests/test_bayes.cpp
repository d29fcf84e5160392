#include "doctest.h"

#include <cmath>
#include <memory>
#include <numbers>

#include "fmu/bayes.hpp"
#include "fmu/mcdwis.hpp"
#include "fmu/model_io.hpp"

using namespace fmu;

namespace {

const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

Eigen::MatrixXd diag(std::initializer_list<double> v) { return vec(v).asDiagonal(); }

struct CantileverPosterior {
    ModelDefinition def = load_model(FMU_DATA_DIR "/models/cantilever.json");
    std::shared_ptr<ModalEvaluator> evaluator =
        std::make_shared<ModalEvaluator>(def.model, def.parameters.dimension());
};

}  // namespace

TEST_SUITE("bayes") {
    TEST_CASE("log-likelihood at zero residual with unit covariance") {
        const MeasuredData data(vec({10.0}), diag({1.0}));
        CHECK(log_likelihood(vec({10.0}), data) == doctest::Approx(-0.9189).epsilon(1e-4));
        CHECK(log_likelihood(vec({10.0}), data) == doctest::Approx(-half_log_two_pi).epsilon(1e-15));
    }

    TEST_CASE("scalar log-likelihood with variance 4 and residual 2") {
        const MeasuredData data(vec({10.0}), diag({4.0}));
        CHECK(log_likelihood(vec({12.0}), data) == doctest::Approx(-2.1120).epsilon(1e-4));
    }

    TEST_CASE("diagonal covariance factorises") {
        const MeasuredData pair(vec({10.0, 20.0}), diag({1.0, 4.0}));
        const MeasuredData a(vec({10.0}), diag({1.0}));
        const MeasuredData b(vec({20.0}), diag({4.0}));
        const double joint = log_likelihood(vec({11.0, 22.0}), pair);
        const double sum = log_likelihood(vec({11.0}), a) + log_likelihood(vec({22.0}), b);
        CHECK(std::abs(joint - sum) <= 1e-12 * std::abs(sum));
    }

    TEST_CASE("log-likelihood depends only on the residual") {
        Eigen::MatrixXd cov(2, 2);
        cov << 2.0, 0.3, 0.3, 1.0;
        const MeasuredData data(vec({10.0, 20.0}), cov);
        const MeasuredData shifted(vec({15.0, 25.0}), cov);
        CHECK(log_likelihood(vec({11.0, 19.0}), data) ==
              doctest::Approx(log_likelihood(vec({16.0, 24.0}), shifted)).epsilon(1e-14));
    }

    TEST_CASE("log-likelihood errors") {
        const MeasuredData data(vec({10.0, 20.0}), diag({1.0, 1.0}));
        CHECK_THROWS_AS(log_likelihood(vec({10.0}), data), ShapeError);
        CHECK_THROWS_AS(MeasuredData(vec({10.0, 20.0}), diag({1.0, -1.0})), CovarianceError);
        Eigen::MatrixXd asym(2, 2);
        asym << 1.0, 0.5, 0.0, 1.0;
        CHECK_THROWS_AS(MeasuredData(vec({10.0, 20.0}), asym), CovarianceError);
        CHECK_THROWS_AS(MeasuredData(vec({10.0, 20.0}), diag({1.0})), ShapeError);
        CHECK_THROWS_AS(MeasuredData(vec({0.0, 20.0}), diag({1.0, 1.0})), InvalidData);
        CHECK_THROWS_AS(MeasuredData::with_relative_noise(vec({1.0}), 0.0), ConfigError);
    }

    TEST_CASE("relative noise covariance") {
        const auto data = MeasuredData::with_relative_noise(vec({10.0, 50.0}), 0.02);
        CHECK(data.covariance()(0, 0) == doctest::Approx(0.04));
        CHECK(data.covariance()(1, 1) == doctest::Approx(1.0));
        CHECK(data.covariance()(0, 1) == 0.0);
    }

    TEST_CASE("log-prior values") {
        const GaussianPrior unit(Eigen::VectorXd::Zero(8), Eigen::MatrixXd::Identity(8, 8));
        CHECK(log_prior(Eigen::VectorXd::Zero(8), unit) == doctest::Approx(-7.3516).epsilon(1e-4));
        const GaussianPrior scalar(vec({1.0}), diag({1.0}));
        CHECK(log_prior(vec({4.0}), scalar) == doctest::Approx(-5.4189).epsilon(1e-4));
        CHECK_THROWS_AS(log_prior(vec({1.0, 2.0}), scalar), ShapeError);
    }

    TEST_CASE("scaling the prior covariance shifts the log-prior by -(d/2) ln c") {
        const Eigen::VectorXd mu = vec({1.0, -2.0, 3.0});
        Eigen::MatrixXd cov(3, 3);
        cov << 2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0;
        const double c = 7.5;
        const double base = log_prior(mu, GaussianPrior(mu, cov));
        const double scaled = log_prior(mu, GaussianPrior(mu, c * cov));
        CHECK(scaled - base == doctest::Approx(-1.5 * std::log(c)).epsilon(1e-12));
    }

    TEST_CASE("parameter space and updating vector") {
        ParameterSpace space{{"a", "b"}, vec({0.0, 1.0}), vec({1.0, 2.0})};
        CHECK(space.contains(vec({0.5, 1.5})));
        CHECK(space.contains(vec({0.0, 2.0})));
        CHECK_FALSE(space.contains(vec({1.5, 1.5})));
        CHECK_FALSE(space.contains(vec({0.5})));
        UpdatingVector theta{space, vec({0.5, 3.0})};
        CHECK_FALSE(theta.within_bounds());
        CHECK_THROWS_AS(theta.validate(), ConfigError);
        ParameterSpace inverted{{"a"}, vec({1.0}), vec({0.0})};
        CHECK_THROWS_AS(inverted.validate(), ConfigError);
    }

    TEST_CASE("unnormalised posterior is likelihood plus prior") {
        CantileverPosterior c;
        const auto& p = c.def.parameters;
        const Eigen::VectorXd theta = c.def.nominal;
        const auto km = assemble(c.def.model, theta);
        const Eigen::VectorXd f = modal_solve(km.stiffness, km.mass, 6, false).elastic_frequencies(6);
        const auto data = MeasuredData::with_relative_noise(1.01 * f, 0.01);
        const GaussianPrior prior(theta, (0.1 * theta).array().square().matrix().asDiagonal());
        const UpdatingVector uv{p, theta};
        const double lp = log_unnormalized_posterior(uv, c.def.model, data, prior);
        CHECK(lp == log_likelihood(f, data) + log_prior(theta, prior));

        UpdatingVector outside{p, theta};
        outside.values[0] = p.upper[0] * 1.01;
        CHECK(log_unnormalized_posterior(outside, c.def.model, data, prior) == negative_infinity);

        const FrequencyTarget target(c.evaluator, p, data, prior);
        CHECK(target.evaluate(theta).log_density == doctest::Approx(lp).epsilon(1e-12));
        CHECK_FALSE(target.evaluate(outside.values).in_support());
    }

    TEST_CASE("posterior peaks at the data-generating parameters") {
        CantileverPosterior c;
        const auto& p = c.def.parameters;
        const Eigen::VectorXd truth = c.def.nominal;
        const Eigen::VectorXd f = select_elastic(c.evaluator->frequencies(truth), 6);
        const MeasuredData data(f, 0.01 * Eigen::MatrixXd::Identity(6, 6));
        const GaussianPrior prior(truth, (0.2 * truth).array().square().matrix().asDiagonal());
        const FrequencyTarget target(c.evaluator, p, data, prior);
        const double at_truth = target.evaluate(truth).log_density;
        Rng rng = substream(3, 0, 0);
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd theta = truth;
            const auto k = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(truth.size()));
            theta[k] *= 1.1;
            CHECK(target.evaluate(theta).log_density < at_truth);
        }
    }

    TEST_CASE("exact auxiliary draws are centred on the prediction") {
        CantileverPosterior c;
        const Eigen::VectorXd theta = c.def.nominal;
        const Eigen::VectorXd f = select_elastic(c.evaluator->frequencies(theta), 4);
        Eigen::MatrixXd cov(4, 4);
        cov << 0.04, 0.01, 0.0, 0.0,  //
            0.01, 0.09, 0.0, 0.02,    //
            0.0, 0.0, 0.25, 0.0,      //
            0.0, 0.02, 0.0, 1.0;
        const MeasuredData data(f, cov);
        const GaussianPrior prior(theta, (0.1 * theta).array().square().matrix().asDiagonal());
        const FrequencyTarget target(c.evaluator, c.def.parameters, data, prior);
        Rng rng = substream(5, 0, 0);
        const auto batch = sample_auxiliary(target, theta, 10000, rng);
        REQUIRE(batch.draws.rows() == 4);
        REQUIRE(batch.draws.cols() == 10000);
        const Eigen::VectorXd mean = batch.draws.rowwise().mean();
        for (Eigen::Index i = 0; i < 4; ++i)
            CHECK(std::abs(mean[i] - f[i]) <= 3.0 * std::sqrt(cov(i, i)) / 100.0);
        const Eigen::MatrixXd centred = batch.draws.colwise() - mean;
        const Eigen::MatrixXd sample_cov = centred * centred.transpose() / 9999.0;
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index j = 0; j < 4; ++j)
                if (cov(i, j) != 0.0)
                    CHECK(std::abs(sample_cov(i, j) - cov(i, j)) <= 0.1 * std::sqrt(cov(i, i) * cov(j, j)));
    }

    TEST_CASE("vanishing measurement noise collapses the auxiliary draws") {
        CantileverPosterior c;
        const Eigen::VectorXd theta = c.def.nominal;
        const Eigen::VectorXd f = select_elastic(c.evaluator->frequencies(theta), 3);
        const MeasuredData data(f, 1e-12 * Eigen::MatrixXd::Identity(3, 3));
        const GaussianPrior prior(theta, (0.1 * theta).array().square().matrix().asDiagonal());
        const FrequencyTarget target(c.evaluator, c.def.parameters, data, prior);
        Rng rng = substream(9, 0, 0);
        const auto batch = sample_auxiliary(target, theta, 100, rng);
        CHECK((batch.draws.colwise() - f).cwiseAbs().maxCoeff() < 1e-5);
        Eigen::VectorXd outside = theta;
        outside[0] = c.def.parameters.upper[0] * 2.0;
        CHECK_THROWS_AS(sample_auxiliary(target, outside, 10, rng), InvalidState);
    }

    TEST_CASE("measured data file round trip") {
        const auto data = MeasuredData::with_relative_noise(vec({3.5, 12.25}), 0.01);
        const MeasuredData back = parse_measured_data(to_json(data));
        CHECK(back.frequencies() == data.frequencies());
        CHECK(back.covariance() == data.covariance());
        nlohmann::json both = to_json(data);
        both["relative_noise"] = 0.01;
        CHECK_THROWS_AS(parse_measured_data(both), ConfigError);
    }
}
