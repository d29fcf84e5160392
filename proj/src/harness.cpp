#include "fmu/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace fmu {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> known_samplers{"mcdwis", "amh"};

class CsvFile {
public:
    CsvFile(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("'") + key + "' has the wrong type");
    }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

McdwisConfig parse_mcdwis(const json& j) {
    reject_unknown(j,
                   {"iterations", "burn_in", "switch_threshold", "n_min", "n_max", "n_low", "n_up", "freedom",
                    "control", "auxiliary_count", "init_iterations", "init_burn_in", "init_count",
                    "max_control_retries", "traced_states"},
                   "mcdwis");
    McdwisConfig c;
    c.iterations = get_or(j, "iterations", c.iterations);
    c.burn_in = get_or(j, "burn_in", c.burn_in);
    c.switch_threshold = get_or(j, "switch_threshold", c.switch_threshold);
    c.freedom = get_or(j, "freedom", std::log10(c.switch_threshold));
    c.n_min = get_or(j, "n_min", c.n_min);
    c.n_max = get_or(j, "n_max", c.n_max);
    c.n_low = get_or(j, "n_low", c.n_low);
    c.n_up = get_or(j, "n_up", c.n_up);
    c.control = get_or(j, "control", c.control);
    c.auxiliary_count = get_or(j, "auxiliary_count", c.auxiliary_count);
    c.init_iterations = get_or(j, "init_iterations", c.init_iterations);
    c.init_burn_in = get_or(j, "init_burn_in", c.init_burn_in);
    c.init_count = get_or(j, "init_count", c.init_count);
    c.max_control_retries = get_or(j, "max_control_retries", c.max_control_retries);
    c.traced_states = get_or(j, "traced_states", c.traced_states);
    c.validate();
    return c;
}

AmhConfig parse_amh(const json& j) {
    reject_unknown(j, {"iterations", "burn_in", "adaptation_start", "epsilon", "warning_window"}, "amh");
    AmhConfig c;
    c.iterations = get_or(j, "iterations", c.iterations);
    c.burn_in = get_or(j, "burn_in", c.burn_in);
    c.adaptation_start = get_or(j, "adaptation_start", c.adaptation_start);
    c.epsilon = get_or(j, "epsilon", c.epsilon);
    c.warning_window = get_or(j, "warning_window", c.warning_window);
    return c;
}

std::vector<std::string> cells(std::initializer_list<double> values) {
    std::vector<std::string> out;
    for (double v : values) out.push_back(format_number(v));
    return out;
}

void write_report(const fs::path& path, const FrequencyReport& initial, const FrequencyReport* updated) {
    if (!updated) {
        CsvFile csv(path, {"mode", "measured_hz", "computed_hz", "error_pct"});
        for (const auto& r : initial.rows) {
            auto row = cells({r.measured, r.computed, r.error});
            row.insert(row.begin(), std::to_string(r.mode));
            csv.row(row);
        }
        csv.row({"TME", "", "", format_number(initial.total_mean_error())});
        return;
    }
    CsvFile csv(path, {"mode", "measured_hz", "initial_hz", "initial_error_pct", "updated_hz", "updated_error_pct"});
    for (std::size_t i = 0; i < initial.rows.size(); ++i) {
        const auto& a = initial.rows[i];
        const auto& b = updated->rows[i];
        auto row = cells({a.measured, a.computed, a.error, b.computed, b.error});
        row.insert(row.begin(), std::to_string(a.mode));
        csv.row(row);
    }
    csv.row({"TME", "", "", format_number(initial.total_mean_error()), "",
             format_number(updated->total_mean_error())});
}

std::vector<std::string> theta_header(const ParameterSpace& space, std::vector<std::string> head) {
    for (const auto& n : space.names) head.push_back(n);
    return head;
}

std::vector<std::string> theta_cells(const Eigen::VectorXd& theta, std::vector<std::string> head) {
    for (Eigen::Index i = 0; i < theta.size(); ++i) head.push_back(format_number(theta[i]));
    return head;
}

void write_mcdwis_traces(const fs::path& dir, const McdwisTrace& trace, std::vector<fs::path>& files) {
    fs::create_directories(dir);
    const auto rel = dir.filename();
    {
        CsvFile csv(dir / "trace_popsize.csv", {"generation", "population_size"});
        for (std::size_t t = 0; t < trace.length(); ++t)
            csv.row({std::to_string(t + 1), std::to_string(trace.population_size[t])});
    }
    {
        CsvFile csv(dir / "trace_wup.csv", {"generation", "w_up"});
        for (std::size_t t = 0; t < trace.length(); ++t) csv.row({std::to_string(t + 1), format_number(trace.w_up[t])});
    }
    {
        CsvFile csv(dir / "trace_phi.csv", {"generation", "phi"});
        for (std::size_t t = 0; t < trace.length(); ++t)
            csv.row({std::to_string(t + 1), std::to_string(trace.phi[t])});
    }
    {
        std::vector<std::string> head{"generation"};
        for (int s : trace.traced_states) head.push_back("state_" + std::to_string(s));
        CsvFile csv(dir / "trace_logweight.csv", head);
        for (std::size_t t = 0; t < trace.length(); ++t) {
            std::vector<std::string> row{std::to_string(t + 1)};
            for (double v : trace.state_log_weight[t]) row.push_back(format_number(v));
            csv.row(row);
        }
    }
    {
        CsvFile csv(dir / "trace_acceptance.csv", {"generation", "acceptance_rate", "control_retries"});
        for (std::size_t t = 0; t < trace.length(); ++t)
            csv.row({std::to_string(t + 1), format_number(trace.acceptance_rate[t]),
                     std::to_string(trace.control_retries[t])});
    }
    for (const char* name :
         {"trace_popsize.csv", "trace_wup.csv", "trace_phi.csv", "trace_logweight.csv", "trace_acceptance.csv"})
        files.push_back(rel / name);
}

void write_manifest(const fs::path& out, const std::vector<fs::path>& files, const std::vector<std::string>& warnings) {
    json list = json::array();
    for (const auto& f : files) list.push_back(f.generic_string());
    std::ofstream(out / "manifest.json") << json{{"files", list}, {"warnings", warnings}}.dump(2) << '\n';
}

}  // namespace

std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double percent_error(double measured, double computed) {
    if (!(measured > 0.0)) throw InvalidData("measured frequency must be positive, got " + format_number(measured));
    return 100.0 * std::abs(computed - measured) / measured;
}

double total_mean_error(std::span<const double> errors) {
    if (errors.empty()) throw EstimationError("total mean error of an empty report");
    double sum = 0.0;
    for (double e : errors) sum += e;
    return sum / static_cast<double>(errors.size());
}

double FrequencyReport::total_mean_error() const {
    std::vector<double> errors;
    for (const auto& r : rows) errors.push_back(r.error);
    return fmu::total_mean_error(errors);
}

FrequencyReport frequency_report(const Eigen::VectorXd& measured, const Eigen::VectorXd& computed) {
    if (measured.size() != computed.size())
        throw ShapeError("report needs as many computed as measured frequencies");
    FrequencyReport report;
    for (Eigen::Index i = 0; i < measured.size(); ++i)
        report.rows.push_back({static_cast<int>(i + 1), measured[i], computed[i], percent_error(measured[i], computed[i])});
    return report;
}

MeasuredData generate_synthetic_data(const ModalEvaluator& evaluator, const ParameterSpace& space,
                                     const Eigen::VectorXd& theta_true, double noise, std::uint64_t seed,
                                     Eigen::Index n_modes, double floor_noise) {
    if (!(noise >= 0.0)) throw ConfigError("noise level must be non-negative");
    if (n_modes < 1) throw ConfigError("synthetic data needs at least one mode");
    if (!space.contains(theta_true)) throw ConfigError("theta_true lies outside the parameter bounds");
    const Eigen::VectorXd exact = select_elastic(evaluator.frequencies(theta_true), n_modes);
    if (exact.size() < n_modes)
        throw ConfigError("model has only " + std::to_string(exact.size()) + " elastic modes");
    Rng rng = substream(seed, 0, 2);
    Eigen::VectorXd measured = exact;
    if (noise > 0.0) measured.array() *= 1.0 + noise * standard_normal(rng, n_modes).array();
    return MeasuredData::with_relative_noise(std::move(measured), noise > 0.0 ? noise : floor_noise);
}

void ExperimentConfig::validate() const {
    if (data_path.has_value() == synthetic.has_value())
        throw ConfigError("experiment needs exactly one of 'data' or 'synthetic'");
    for (const auto& s : samplers)
        if (!known_samplers.contains(s)) throw ConfigError("unknown sampler '" + s + "'");
    if (!(proposal_scale > 0.0)) throw ConfigError("proposal_scale must be positive");
    if (prior_sigma.size() == 0 || !(prior_sigma.array() > 0.0).all())
        throw ConfigError("prior sigma must be a non-empty positive vector");
    if (synthetic && synthetic->modes < 1) throw ConfigError("synthetic data needs at least one mode");
    mcdwis.validate();
    AmhConfig amh_shape = amh;
    amh_shape.initial_covariance = Eigen::MatrixXd::Identity(1, 1);  // filled from the prior at run time
    amh_shape.validate(-1);
}

ExperimentConfig parse_experiment(const json& doc, const fs::path& base_dir) {
    reject_unknown(doc,
                   {"name", "description", "model", "data", "synthetic", "prior", "start", "samplers", "seed",
                    "proposal_scale", "mcdwis", "amh", "output"},
                   "experiment");
    ExperimentConfig c;
    if (!doc.contains("model")) throw ConfigError("experiment: missing 'model'");
    c.model_path = base_dir / doc.at("model").get<std::string>();
    if (doc.contains("data")) c.data_path = base_dir / doc.at("data").get<std::string>();
    if (doc.contains("synthetic")) {
        const json& s = doc.at("synthetic");
        reject_unknown(s, {"theta_true", "noise", "seed", "modes"}, "synthetic");
        SyntheticSpec spec;
        if (!s.contains("theta_true")) throw ConfigError("synthetic: missing 'theta_true'");
        spec.theta_true = vector_from_json(s.at("theta_true"), "theta_true");
        spec.noise = get_or(s, "noise", spec.noise);
        spec.seed = get_or(s, "seed", spec.seed);
        spec.modes = get_or(s, "modes", spec.modes);
        c.synthetic = spec;
    }
    if (!doc.contains("prior")) throw ConfigError("experiment: missing 'prior'");
    const json& prior = doc.at("prior");
    reject_unknown(prior, {"mean", "sigma"}, "prior");
    if (prior.contains("mean")) c.prior_mean = vector_from_json(prior.at("mean"), "prior mean");
    if (!prior.contains("sigma")) throw ConfigError("prior: missing 'sigma'");
    c.prior_sigma = vector_from_json(prior.at("sigma"), "prior sigma");
    if (doc.contains("start")) c.start = vector_from_json(doc.at("start"), "start");
    c.samplers = get_or(doc, "samplers", std::vector<std::string>{"mcdwis", "amh"});
    c.seed = get_or(doc, "seed", c.seed);
    c.proposal_scale = get_or(doc, "proposal_scale", c.proposal_scale);
    if (doc.contains("mcdwis")) c.mcdwis = parse_mcdwis(doc.at("mcdwis"));
    if (doc.contains("amh")) c.amh = parse_amh(doc.at("amh"));
    if (doc.contains("output")) c.output = base_dir / doc.at("output").get<std::string>();
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
    return parse_experiment(read_json(path), path.parent_path());
}

json to_json(const ExperimentConfig& c) {
    json doc;
    doc["model"] = c.model_path.generic_string();
    if (c.data_path) doc["data"] = c.data_path->generic_string();
    if (c.synthetic)
        doc["synthetic"] = {{"theta_true", to_json(c.synthetic->theta_true)},
                            {"noise", c.synthetic->noise},
                            {"seed", c.synthetic->seed},
                            {"modes", c.synthetic->modes}};
    doc["prior"]["sigma"] = to_json(c.prior_sigma);
    if (c.prior_mean) doc["prior"]["mean"] = to_json(*c.prior_mean);
    if (c.start) doc["start"] = to_json(*c.start);
    doc["samplers"] = c.samplers;
    doc["seed"] = c.seed;
    doc["proposal_scale"] = c.proposal_scale;
    const McdwisConfig& m = c.mcdwis;
    doc["mcdwis"] = {{"iterations", m.iterations},
                     {"burn_in", m.burn_in},
                     {"switch_threshold", m.switch_threshold},
                     {"n_min", m.n_min},
                     {"n_max", m.n_max},
                     {"n_low", m.n_low},
                     {"n_up", m.n_up},
                     {"freedom", m.freedom},
                     {"control", m.control},
                     {"auxiliary_count", m.auxiliary_count},
                     {"init_iterations", m.init_iterations},
                     {"init_burn_in", m.init_burn_in},
                     {"init_count", m.init_count},
                     {"max_control_retries", m.max_control_retries},
                     {"traced_states", m.traced_states}};
    doc["amh"] = {{"iterations", c.amh.iterations},
                  {"burn_in", c.amh.burn_in},
                  {"adaptation_start", c.amh.resolved_adaptation_start()},
                  {"epsilon", c.amh.epsilon},
                  {"warning_window", c.amh.warning_window}};
    doc["output"] = c.output.generic_string();
    return doc;
}

ExperimentSetup prepare_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentSetup setup;
    setup.model = load_model(config.model_path);
    const ParameterSpace& space = setup.model.parameters;
    const Eigen::Index d = space.dimension();
    if (d == 0) throw ConfigError("model declares no updating parameters");
    if (config.prior_sigma.size() != d)
        throw ShapeError("prior sigma has " + std::to_string(config.prior_sigma.size()) + " entries for " +
                         std::to_string(d) + " parameters");
    auto evaluator = std::make_shared<ModalEvaluator>(setup.model.model, d);
    setup.evaluator = evaluator;

    const Eigen::VectorXd mean = config.prior_mean.value_or(setup.model.nominal);
    if (mean.size() != d) throw ShapeError("prior mean has the wrong dimension");
    GaussianPrior prior(mean, config.prior_sigma.array().square().matrix().asDiagonal());

    MeasuredData data = [&] {
        if (config.data_path) return load_measured_data(*config.data_path);
        const SyntheticSpec& s = *config.synthetic;
        if (s.theta_true.size() != d) throw ShapeError("theta_true has the wrong dimension");
        return generate_synthetic_data(*evaluator, space, s.theta_true, s.noise, s.seed, s.modes);
    }();

    setup.start = config.start.value_or(mean);
    if (setup.start.size() != d) throw ShapeError("start vector has the wrong dimension");
    if (!space.contains(setup.start)) throw ConfigError("start vector lies outside the parameter bounds");
    setup.proposal_covariance = config.proposal_scale * prior.covariance();
    setup.target = std::make_shared<FrequencyTarget>(evaluator, space, std::move(data), std::move(prior));
    return setup;
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log) {
    const ExperimentSetup setup = prepare_experiment(config);
    const FrequencyTarget& target = *setup.target;
    const ParameterSpace& space = target.space();
    const Eigen::VectorXd& measured = target.data().frequencies();
    const fs::path out = config.output;
    fs::create_directories(out);

    ExperimentResult result;
    std::vector<std::string> warnings;
    auto& files = result.files;

    {
        std::ofstream(out / "config_resolved.json") << to_json(config).dump(2) << '\n';
        files.emplace_back("config_resolved.json");
        std::ofstream(out / "measured_data.json") << to_json(target.data()).dump(2) << '\n';
        files.emplace_back("measured_data.json");
    }

    result.initial = frequency_report(measured, target.predict(setup.start));
    write_report(out / "report_initial.csv", result.initial, nullptr);
    files.emplace_back("report_initial.csv");

    for (const auto& sampler : config.samplers) {
        Eigen::VectorXd estimate;
        if (sampler == "mcdwis") {
            McdwisConfig mc = config.mcdwis;
            mc.seed = config.seed;
            mc.proposal_covariance = setup.proposal_covariance;
            const GaussianRandomWalk proposal(mc.proposal_covariance);
            McdwisResult run;
            try {
                run = run_mcdwis(target, proposal, setup.start, mc);
            } catch (const SamplerAborted& e) {
                write_mcdwis_traces(out / "mcdwis", e.trace, files);
                write_manifest(out, files, warnings);
                throw;
            }
            write_mcdwis_traces(out / "mcdwis", run.trace, files);
            std::vector<std::string> head = theta_header(space, {"index"});
            head.push_back("weight");
            CsvFile pop(out / "mcdwis" / "population_final.csv", head);
            for (std::size_t i = 0; i < run.final_population.size(); ++i) {
                const auto& s = run.final_population.samples[i];
                auto row = theta_cells(s.theta, {std::to_string(i + 1)});
                row.push_back(format_number(s.weight));
                pop.row(row);
            }
            files.push_back(fs::path("mcdwis") / "population_final.csv");
            estimate = run.estimate;
        } else {
            AmhConfig ac = config.amh;
            ac.seed = config.seed;
            ac.initial_covariance = setup.proposal_covariance;
            const AmhResult run = run_amh(target, setup.start, ac);
            fs::create_directories(out / "amh");
            std::vector<std::string> head = theta_header(space, {"iteration"});
            head.insert(head.end(), {"log_posterior", "accepted", "acceptance_rate"});
            CsvFile csv(out / "amh" / "chain_amh.csv", head);
            for (int it = 0; it < ac.iterations; ++it) {
                const auto i = static_cast<std::size_t>(it);
                auto row = theta_cells(run.chain.col(it), {std::to_string(it + 1)});
                row.push_back(format_number(run.log_posterior[i]));
                row.push_back(std::to_string(run.accepted[i]));
                row.push_back(format_number(run.acceptance_rate[i]));
                csv.row(row);
            }
            files.push_back(fs::path("amh") / "chain_amh.csv");
            for (const auto& w : run.warnings) {
                warnings.push_back("amh: " + w);
                log << "warning: amh: " << w << '\n';
            }
            estimate = run.mean;
        }
        result.estimates[sampler] = estimate;
        result.updated[sampler] = frequency_report(measured, target.predict(estimate));
        const std::string name = "report_" + sampler + ".csv";
        write_report(out / name, result.initial, &result.updated[sampler]);
        files.emplace_back(name);
    }

    {
        std::vector<std::string> head{"parameter", "lower", "upper", "start"};
        if (config.synthetic) head.push_back("true");
        for (const auto& s : config.samplers) head.push_back(s);
        CsvFile csv(out / "theta.csv", head);
        for (Eigen::Index i = 0; i < space.dimension(); ++i) {
            std::vector<std::string> row{space.names[static_cast<std::size_t>(i)], format_number(space.lower[i]),
                                         format_number(space.upper[i]), format_number(setup.start[i])};
            if (config.synthetic) row.push_back(format_number(config.synthetic->theta_true[i]));
            for (const auto& s : config.samplers) row.push_back(format_number(result.estimates[s][i]));
            csv.row(row);
        }
        files.emplace_back("theta.csv");
    }
    write_manifest(out, files, warnings);

    log << std::fixed << std::setprecision(3);
    log << "mode  measured_hz  initial_err%";
    for (const auto& s : config.samplers) log << "  " << s << "_err%";
    log << '\n';
    for (std::size_t i = 0; i < result.initial.rows.size(); ++i) {
        const auto& r = result.initial.rows[i];
        log << std::setw(4) << r.mode << std::setw(13) << r.measured << std::setw(14) << r.error;
        for (const auto& s : config.samplers)
            log << std::setw(static_cast<int>(s.size()) + 7) << result.updated[s].rows[i].error;
        log << '\n';
    }
    log << "TME initial " << result.initial.total_mean_error();
    for (const auto& s : config.samplers) log << "  " << s << " " << result.updated[s].total_mean_error();
    log << '\n';
    log.unsetf(std::ios::floatfield);
    return result;
}

}  // namespace fmu
