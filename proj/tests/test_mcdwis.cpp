#include "doctest.h"

#include <cmath>
#include <numeric>

#include "fmu/mcdwis.hpp"
#include "fmu/model_io.hpp"
#include "toy_targets.hpp"

using namespace fmu;
using fmu::testing::FlipProposal;
using fmu::testing::GaussianFamily;
using fmu::testing::TwoStateTarget;

namespace {

Eigen::VectorXd scalar(double x) { return Eigen::VectorXd::Constant(1, x); }

WeightedSample sample(double theta, double w) { return {scalar(theta), w, {}}; }

double log_ratio_once(const GaussianFamily& family, double theta_t, double theta_star, Eigen::Index m, Rng& rng) {
    const Evaluation cur = family.evaluate(scalar(theta_t));
    const Evaluation star = family.evaluate(scalar(theta_star));
    const auto batch = sample_auxiliary(family, scalar(theta_star), star, m, rng);
    return log_is_ratio_estimate(family, cur, star, batch);
}

McdwisConfig small_config() {
    McdwisConfig c;
    c.iterations = 200;
    c.burn_in = 50;
    c.n_min = 20;
    c.n_low = 40;
    c.n_up = 100;
    c.n_max = 200;
    c.init_count = 50;
    c.proposal_covariance = Eigen::MatrixXd::Identity(1, 1);
    return c;
}

Population population_of(std::initializer_list<double> weights, double w_up, double kappa) {
    Population p;
    double theta = 0.0;
    for (double w : weights) p.samples.push_back(sample(theta++, w));
    p.w_up = w_up;
    p.w_low = w_up / kappa;
    return p;
}

}  // namespace

TEST_SUITE("mcdwis") {
    TEST_CASE("table defaults") {
        const McdwisConfig c;
        CHECK(c.iterations == 1000);
        CHECK(c.burn_in == 250);
        CHECK(c.switch_threshold == doctest::Approx(1096.633).epsilon(1e-6));
        CHECK(c.freedom == doctest::Approx(std::log10(c.switch_threshold)).epsilon(1e-14));
        CHECK(c.freedom == doctest::Approx(3.040).epsilon(1e-3));
        CHECK(c.n_min == 100);
        CHECK(c.n_max == 1000);
        CHECK(c.n_low == 200);
        CHECK(c.n_up == 500);
        CHECK(c.control == 2.0);
    }

    TEST_CASE("config validation") {
        McdwisConfig c = small_config();
        CHECK_NOTHROW(c.validate(1));
        CHECK_THROWS_AS(c.validate(2), ConfigError);
        auto broken = [&](auto mutate) {
            McdwisConfig b = small_config();
            mutate(b);
            return b;
        };
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.n_low = b.n_up; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.n_min = b.n_low + 1; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.n_max = b.n_up - 1; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.freedom = 1.0; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.switch_threshold = 0.0; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.auxiliary_count = 0; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.burn_in = b.iterations; }).validate(), ConfigError);
        CHECK_THROWS_AS(broken([](McdwisConfig& b) { b.init_count = 900; }).validate(), ConfigError);
    }

    TEST_CASE("IS ratio of identical densities is exactly one") {
        const GaussianFamily family;
        Rng rng = substream(1, 0, 0);
        for (double theta : {0.3, 1.0, 7.0}) {
            CHECK(log_ratio_once(family, theta, theta, 25, rng) == 0.0);
            const auto batch = sample_auxiliary(family, scalar(theta), 25, rng);
            const auto k = [&](VectorRef y) { return family.log_kernel(y, family.evaluate(scalar(theta))); };
            CHECK(is_ratio_estimate(k, k, batch) == 1.0);
        }
    }

    TEST_CASE("IS ratio recovers the analytic normaliser ratio") {
        const GaussianFamily family;
        Rng rng = substream(2, 0, 0);
        const double r = std::exp(log_ratio_once(family, 1.0, 2.0, 10000, rng));
        CHECK(std::abs(r - std::sqrt(0.5)) / std::sqrt(0.5) < 0.05);
    }

    TEST_CASE("IS ratio variance falls with M") {
        const GaussianFamily family;
        auto variance = [&](Eigen::Index m) {
            std::vector<double> r;
            for (int rep = 0; rep < 100; ++rep) {
                Rng rng = substream(7, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(rep));
                r.push_back(std::exp(log_ratio_once(family, 1.0, 2.0, m, rng)));
            }
            const double mean = std::accumulate(r.begin(), r.end(), 0.0) / 100.0;
            double ss = 0.0;
            for (double x : r) ss += (x - mean) * (x - mean);
            return ss / 99.0;
        };
        CHECK(variance(1000) / variance(100) < 0.3);
    }

    TEST_CASE("IS ratio underflow is reported") {
        AuxiliaryBatch batch{Eigen::MatrixXd::Zero(1, 5), scalar(1.0)};
        auto tiny = [](VectorRef) { return -1e6; };
        auto zero = [](VectorRef) { return 0.0; };
        CHECK_THROWS_AS(is_ratio_estimate(tiny, zero, batch), NumericalError);
        AuxiliaryBatch empty{Eigen::MatrixXd::Zero(1, 0), scalar(1.0)};
        CHECK_THROWS_AS(log_is_ratio_estimate(zero, zero, empty), ShapeError);
    }

    TEST_CASE("MH auxiliary sampler targets the kernel") {
        Rng rng = substream(4, 0, 0);
        const auto draws = sample_auxiliary_mh([](const Eigen::VectorXd& y) { return -0.5 * y.squaredNorm() / 4.0; },
                                               Eigen::VectorXd::Zero(1), 4000, 2.5, 500, 5, rng);
        const double mean = draws.mean();
        const double var = (draws.array() - mean).square().sum() / 3999.0;
        CHECK(std::abs(mean) < 0.2);
        CHECK(std::abs(var - 4.0) / 4.0 < 0.15);
    }

    TEST_CASE("dynamic weight ratio") {
        CHECK(dynamic_weight_ratio(2.0, 1.0, -3.0, -3.0) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(dynamic_weight_ratio(0.5, 0.8, 0.0, 1.0) == doctest::Approx(1.0873).epsilon(1e-4));
        CHECK(dynamic_weight_ratio(0.5, 0.8, 0.0, 1.0) == doctest::Approx(0.4 * std::exp(1.0)).epsilon(1e-14));
        CHECK(dynamic_weight_ratio(1.0, 1.0, -2.0, negative_infinity) == 0.0);
        CHECK(log_dynamic_weight_ratio(1.0, 0.0, -2.0, -2.0, std::log(3.0)) == doctest::Approx(std::log(3.0)));
        CHECK_THROWS_AS(dynamic_weight_ratio(1.0, 1.0, negative_infinity, 0.0), InvalidState);
        CHECK_THROWS_AS(dynamic_weight_ratio(1.0, 1.0, std::nan(""), 0.0), InvalidState);
        CHECK_THROWS_AS(dynamic_weight_ratio(0.0, 1.0, 0.0, 0.0), InvalidState);
    }

    TEST_CASE("R-move examples") {
        const WeightedSample cur = sample(0.0, 1.5);
        const WeightedSample prop = sample(1.0, 0.0);
        const auto accepted = r_move(cur, prop, 3.0, 1, 0.5);
        CHECK(accepted.theta[0] == 1.0);
        CHECK(accepted.weight == 4.0);
        const auto rejected = r_move(cur, prop, 3.0, 1, 0.9);
        CHECK(rejected.theta[0] == 0.0);
        CHECK(rejected.weight == doctest::Approx(4.0 * 1.5).epsilon(1e-15));
        for (double u : {0.0, 0.5, 0.999999}) {
            const auto walk = r_move(cur, prop, 2.5, 0, u);
            CHECK(walk.theta[0] == 1.0);
            CHECK(walk.weight == 2.5);
        }
        const auto stuck = r_move(cur, prop, 0.0, 0, 0.3);
        CHECK(stuck.theta[0] == 0.0);
        CHECK(stuck.weight == 1.5);
        const auto zero_ratio = r_move(cur, prop, 0.0, 1, 0.0);
        CHECK(zero_ratio.theta[0] == 0.0);
        CHECK(zero_ratio.weight == 1.5);
        CHECK_THROWS_AS(r_move(cur, prop, 1.0, 2, 0.5), ConfigError);
        CHECK_THROWS_AS(r_move(cur, prop, -1.0, 1, 0.5), InvalidState);
        CHECK_THROWS_AS(r_move(cur, prop, 1.0, 1, 1.0), ConfigError);
    }

    TEST_CASE("R-move weight identities over a grid") {
        for (double w : {0.25, 1.0, 40.0})
            for (double rd : {0.1, 1.0, 3.0, 10.0})
                for (int phi : {0, 1})
                    for (double u : {0.0, 0.05, 0.5, 0.95}) {
                        const auto out = r_move(sample(0.0, w), sample(1.0, 0.0), rd, phi, u);
                        const double a = rd / (rd + phi);
                        if (u < a) {
                            CHECK(out.theta[0] == 1.0);
                            CHECK(std::abs(out.weight - (rd + phi)) <= 1e-12 * (rd + phi));
                        } else {
                            CHECK(out.theta[0] == 0.0);
                            CHECK(std::abs(out.weight - w * (rd + phi) / phi) <= 1e-12 * w * (rd + phi));
                        }
                    }
    }

    TEST_CASE("switching parameter") {
        const double wc = std::exp(7.0);
        CHECK(switching_parameter(std::exp(5.0), wc) == 1);
        CHECK(switching_parameter(std::exp(9.0), wc) == 0);
        CHECK(switching_parameter(wc, wc) == 1);
    }

    TEST_CASE("weight bound adaptation") {
        const McdwisConfig c;
        const WeightBounds start{100.0, 100.0 / c.freedom};
        const auto up = adapt_bounds(600, start, c);
        CHECK(up.upper == 200.0);
        CHECK(up.upper / up.lower == doctest::Approx(c.freedom).epsilon(1e-15));
        CHECK(adapt_bounds(150, start, c).upper == 50.0);
        CHECK(adapt_bounds(300, start, c).upper == 100.0);
        CHECK(adapt_bounds(200, start, c).upper == 100.0);
        CHECK(adapt_bounds(500, start, c).upper == 100.0);
    }

    TEST_CASE("enrichment splits into equal copies") {
        const double w_up = 8.0;
        const auto pieces = enrich(sample(3.0, 2.5 * w_up), w_up);
        REQUIRE(pieces.size() == 3);
        double total = 0.0;
        for (const auto& p : pieces) {
            CHECK(p.weight == doctest::Approx(2.5 / 3.0 * w_up).epsilon(1e-15));
            CHECK(p.theta[0] == 3.0);
            total += p.weight;
        }
        CHECK(std::abs(total - 2.5 * w_up) <= 1e-12 * 2.5 * w_up);
        for (double ratio : {1.0000001, 3.0, 17.3, 1e6}) {
            const auto split = enrich(sample(0.0, ratio * w_up), w_up);
            double sum = 0.0;
            for (const auto& p : split) sum += p.weight;
            CHECK(std::abs(sum - ratio * w_up) <= 1e-12 * ratio * w_up);
        }
        CHECK(enrich(sample(0.0, w_up), w_up).size() == 1);
    }

    TEST_CASE("pruning is unbiased") {
        const double w_low = 5.0;
        const double w = 0.4 * w_low;
        Rng rng = substream(11, 0, 0);
        int kept = 0;
        double contributed = 0.0;
        const int trials = 10000;
        for (int i = 0; i < trials; ++i) {
            if (auto s = prune(sample(0.0, w), w_low, uniform01(rng))) {
                ++kept;
                CHECK(s->weight == w_low);
                contributed += s->weight;
            }
        }
        const double freq = static_cast<double>(kept) / trials;
        const double se = std::sqrt(0.4 * 0.6 / trials);
        CHECK(std::abs(freq - 0.4) <= 3.0 * se);
        CHECK(std::abs(freq - 0.4) <= 0.02);
        CHECK(std::abs(contributed / trials - w) <= 3.0 * se * w_low);
        CHECK(prune(sample(0.0, w_low), w_low, 0.99)->weight == w_low);
    }

    TEST_CASE("population control leaves an in-band population alone") {
        McdwisConfig c = small_config();
        std::vector<double> w(60);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 4.0 + 0.05 * static_cast<double>(i);
        Population p;
        for (double x : w) p.samples.push_back(sample(x, x));
        p.w_up = 10.0;
        p.w_low = 10.0 / c.freedom;
        Rng rng = substream(1, 1, 0);
        const Population out = apepcs_step(p, c, rng);
        REQUIRE(out.size() == p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(out.samples[i].weight == p.samples[i].weight);
            CHECK(out.samples[i].theta == p.samples[i].theta);
        }
        CHECK(out.w_up == 10.0);
    }

    TEST_CASE("population control enforces the band and hard limits") {
        McdwisConfig c = small_config();
        Rng rng = substream(2, 1, 0);
        Population p;
        for (int i = 0; i < 120; ++i) p.samples.push_back(sample(i, std::exp(0.1 * (i % 37) - 1.0)));
        p.w_up = 1.0;
        p.w_low = 1.0 / c.freedom;
        for (int round = 0; round < 20; ++round) {
            p = apepcs_step(p, c, rng);
            CHECK(p.size() >= static_cast<std::size_t>(c.n_min));
            CHECK(p.size() <= static_cast<std::size_t>(c.n_max));
            CHECK(p.w_up / p.w_low == doctest::Approx(c.freedom).epsilon(1e-15));
            for (const auto& s : p.samples) {
                CHECK(s.weight <= p.w_up);
                CHECK(s.weight >= p.w_low);
            }
            for (auto& s : p.samples) s.weight *= std::exp(0.5 * std::sin(s.theta[0] + round));
        }
    }

    TEST_CASE("population control gives up after the retry budget") {
        McdwisConfig c = small_config();
        c.max_control_retries = 0;
        Population p = population_of({1e-9, 1e-9}, 1.0, c.freedom);
        Rng rng = substream(3, 1, 0);
        CHECK_THROWS_AS(apepcs_step(p, c, rng), ControlFailure);
        Population empty;
        CHECK_THROWS_AS(apepcs_step(empty, c, rng), ControlFailure);
    }

    TEST_CASE("even selection") {
        const auto idx = even_selection(1000, 200, 200);
        REQUIRE(idx.size() == 200);
        CHECK(idx.front() == 201);
        CHECK(idx[1] == 205);
        CHECK(idx.back() == 997);
        CHECK_THROWS_AS(even_selection(1000, 200, 801), ConfigError);
    }

    TEST_CASE("double MH initial population") {
        const auto def = load_model(FMU_DATA_DIR "/models/aircraft_frame.json");
        auto evaluator = std::make_shared<ModalEvaluator>(def.model, def.parameters.dimension());
        const Eigen::VectorXd sigma = 0.05 * def.nominal;
        const GaussianPrior prior(def.nominal, sigma.array().square().matrix().asDiagonal());
        const auto data =
            MeasuredData::with_relative_noise(1.02 * select_elastic(evaluator->frequencies(def.nominal), 6), 0.01);
        const FrequencyTarget target(evaluator, def.parameters, data, prior);
        McdwisConfig c;
        c.proposal_covariance = 0.1 * prior.covariance();
        const GaussianRandomWalk proposal(c.proposal_covariance);
        Rng rng = substream(1, 0, 0);
        const Population p = double_mh_init(target, proposal, def.nominal, c, rng);
        CHECK(p.size() == 200);
        CHECK(p.w_up == c.switch_threshold);
        CHECK(p.w_low == doctest::Approx(c.switch_threshold / c.freedom));
        for (const auto& s : p.samples) {
            CHECK(s.weight == 1.0);
            CHECK(def.parameters.contains(s.theta));
            CHECK(s.state.in_support());
        }
    }

    TEST_CASE("weighted mean") {
        std::vector<Population> history(1);
        history[0].samples = {sample(1.0, 3.0), sample(5.0, 1.0)};
        CHECK(weighted_mean(history)[0] == doctest::Approx(2.0).epsilon(1e-15));

        std::vector<Population> equal(2);
        equal[0].samples = {sample(1.0, 2.0), sample(2.0, 2.0)};
        equal[1].samples = {sample(6.0, 2.0)};
        CHECK(weighted_mean(equal)[0] == doctest::Approx(3.0).epsilon(1e-15));

        const auto constant = weighted_mean(history, [](const Eigen::VectorXd&) { return scalar(7.5); });
        CHECK(constant[0] == doctest::Approx(7.5).epsilon(1e-15));

        std::vector<Population> empty;
        CHECK_THROWS_AS(weighted_mean(empty), EstimationError);
        std::vector<Population> zero(1);
        zero[0].samples = {sample(1.0, 0.0)};
        CHECK_THROWS_AS(weighted_mean(zero), EstimationError);
    }

    TEST_CASE("weighted mean is invariant to a common weight scale") {
        std::vector<Population> history(3);
        Rng rng = substream(13, 0, 0);
        for (auto& p : history)
            for (int i = 0; i < 50; ++i) p.samples.push_back(sample(standard_normal(rng), std::exp(3.0 * uniform01(rng))));
        const double base = weighted_mean(history)[0];
        for (double c : {1e-200, 1e-3, 7.0, 1e250}) {
            auto scaled = history;
            for (auto& p : scaled)
                for (auto& s : p.samples) s.weight *= c;
            CHECK(std::abs(weighted_mean(scaled)[0] - base) <= 1e-12 * std::abs(base));
        }
    }

    TEST_CASE("MCDWIS runs are reproducible and respect population bounds") {
        const TwoStateTarget toy(1.0, 1.25, 0.5);
        const FlipProposal flip;
        const McdwisConfig c = small_config();
        const auto a = run_mcdwis(toy, flip, scalar(0.0), c);
        const auto b = run_mcdwis(toy, flip, scalar(0.0), c);
        CHECK(a.trace.length() == static_cast<std::size_t>(c.iterations));
        CHECK(a.trace.w_up.size() == a.trace.length());
        CHECK(a.trace.phi.size() == a.trace.length());
        CHECK(a.trace.state_log_weight.size() == a.trace.length());
        CHECK(a.trace.population_size == b.trace.population_size);
        CHECK(a.trace.w_up == b.trace.w_up);
        CHECK(a.estimate == b.estimate);
        for (int n : a.trace.population_size) {
            CHECK(n >= c.n_min);
            CHECK(n <= c.n_max);
        }
        const Population& last = a.final_population;
        CHECK(last.w_up / last.w_low == doctest::Approx(c.freedom).epsilon(1e-15));
        for (const auto& s : last.samples) {
            CHECK(s.weight >= last.w_low);
            CHECK(s.weight <= last.w_up);
        }
        CHECK(a.initial_population.size() == static_cast<std::size_t>(c.init_count));
        CHECK(a.estimate[0] == doctest::Approx(toy.probability_of_one()).epsilon(0.05));

        McdwisConfig other = c;
        other.seed = 2;
        CHECK(run_mcdwis(toy, flip, scalar(0.0), other).trace.population_size != a.trace.population_size);
    }

    TEST_CASE("traced log-weights are NaN for missing positions") {
        const TwoStateTarget toy(1.0, 1.25, 0.5);
        McdwisConfig c = small_config();
        c.iterations = 20;
        c.burn_in = 5;
        c.traced_states = {1, 10, 100000};
        const auto r = run_mcdwis(toy, FlipProposal{}, scalar(0.0), c);
        for (const auto& row : r.trace.state_log_weight) {
            CHECK(std::isfinite(row[0]));
            CHECK(std::isnan(row[2]));
        }
    }

    TEST_CASE("control failure aborts with a partial trace") {
        const TwoStateTarget toy(1.0, 1.25, 0.5);
        McdwisConfig c = small_config();
        c.max_control_retries = 0;
        c.control = 1.0 + 1e-9;
        c.n_min = 45;
        c.n_low = 46;
        c.n_up = 47;
        c.n_max = 48;
        c.init_count = 50;
        try {
            run_mcdwis(toy, FlipProposal{}, scalar(0.0), c);
            FAIL("expected the run to abort");
        } catch (const SamplerAborted& e) {
            CHECK(e.trace.length() < static_cast<std::size_t>(c.iterations));
        }
    }
}
