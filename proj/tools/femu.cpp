#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "fmu/harness.hpp"

namespace {

Eigen::VectorXd parse_theta(const std::string& text) {
    std::vector<double> values;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) values.push_back(std::stod(item));
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int run_modal(const std::string& path, const std::string& theta_text, int modes, bool vectors) {
    const fmu::ModelDefinition def = fmu::load_model(path);
    const Eigen::VectorXd theta = theta_text.empty() ? def.nominal : parse_theta(theta_text);
    if (theta.size() != def.parameters.dimension())
        throw fmu::ShapeError("--theta needs " + std::to_string(def.parameters.dimension()) + " values");
    const auto km = fmu::assemble(def.model, theta);
    const auto modal = fmu::modal_solve(km.stiffness, km.mass, km.stiffness.rows(), vectors);
    const Eigen::Index rigid = modal.rigid_body_count();
    std::cout << def.name << ": " << km.stiffness.rows() << " dofs, " << rigid << " rigid-body modes\n";
    const Eigen::Index count = std::min<Eigen::Index>(modes, modal.frequencies.size() - rigid);
    for (Eigen::Index k = 0; k < count; ++k) {
        std::printf("%4ld  %.10g Hz\n", static_cast<long>(k + 1), modal.frequencies[rigid + k]);
        if (vectors) {
            for (Eigen::Index i = 0; i < modal.modes.rows(); ++i)
                std::printf("%s%.6g", i ? "," : "      ", modal.modes(i, rigid + k));
            std::printf("\n");
        }
    }
    return 0;
}

int run_validate(const std::string& path) {
    const nlohmann::json doc = fmu::read_json(path);
    if (doc.contains("sections")) {
        const auto def = fmu::parse_model(doc);
        std::cout << path << ": model '" << def.name << "' with " << def.model.elements.size() << " elements, "
                  << def.parameters.dimension() << " parameters\n";
    } else if (doc.contains("frequencies")) {
        const auto data = fmu::parse_measured_data(doc);
        std::cout << path << ": measured data with " << data.size() << " frequencies\n";
    } else {
        const auto config = fmu::parse_experiment(doc, std::filesystem::path(path).parent_path());
        const auto setup = fmu::prepare_experiment(config);
        std::cout << path << ": experiment on '" << setup.model.name << "', " << setup.target->data().size()
                  << " modes, " << config.samplers.size() << " sampler(s)\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"femu: FE model updating from measured natural frequencies"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run an updating experiment");
    std::string config_path, output, samplers;
    std::uint64_t seed = 0;
    run->add_option("config", config_path, "Experiment file")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run->add_option("--seed", seed, "Sampler seed");
    run->add_option("--output,-o", output, "Output directory");
    run->add_option("--sampler", samplers, "Comma-separated samplers (mcdwis, amh, none)");

    auto* modal = app.add_subcommand("modal", "Print natural frequencies of a model");
    std::string model_path, theta;
    int modes = 10;
    bool vectors = false;
    modal->add_option("model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    modal->add_option("--theta", theta, "Comma-separated updating vector (default: nominal)");
    modal->add_option("--modes,-n", modes, "Number of elastic modes")->check(CLI::PositiveNumber);
    modal->add_flag("--vectors", vectors, "Also print mode shapes");

    auto* validate = app.add_subcommand("validate", "Check a model, data or experiment file");
    std::string validate_path;
    validate->add_option("file", validate_path, "File to check")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*modal) return run_modal(model_path, theta, modes, vectors);
        if (*validate) return run_validate(validate_path);

        fmu::ExperimentConfig config = fmu::load_experiment(config_path);
        if (*seed_opt) config.seed = seed;
        if (!output.empty()) config.output = output;
        if (!samplers.empty()) {
            config.samplers.clear();
            std::stringstream in(samplers);
            std::string item;
            while (std::getline(in, item, ','))
                if (item != "none") config.samplers.push_back(item);
            config.validate();
        }
        fmu::run_experiment(config, std::cout);
        std::cout << "outputs written to " << config.output.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "femu: " << e.what() << '\n';
        return 1;
    }
}
