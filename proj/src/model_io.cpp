#include "fmu/model_io.hpp"

#include <array>
#include <fstream>
#include <map>

namespace fmu {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 6> dof_names{"ux", "uy", "uz", "rx", "ry", "rz"};

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    return j.at(key);
}

double number(const json& j, const char* key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
    return v.get<double>();
}

Eigen::Vector3d point(const json& j, const std::string& what) {
    const Eigen::VectorXd v = vector_from_json(j, what);
    if (v.size() != 3) throw ConfigError(what + " must have three coordinates");
    return v;
}

int dof_index(const json& j) {
    if (j.is_number_integer()) {
        const int d = j.get<int>();
        if (d < 0 || d >= dofs_per_node) throw ConfigError("constraint dof index out of range");
        return d;
    }
    const auto name = j.get<std::string>();
    for (int d = 0; d < dofs_per_node; ++d)
        if (name == dof_names[static_cast<std::size_t>(d)]) return d;
    throw ConfigError("unknown dof '" + name + "'");
}

}  // namespace

Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + " must be an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(what + " must be an array of numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw ConfigError(what + " must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXd row = vector_from_json(j[static_cast<std::size_t>(r)], what);
        if (row.size() != cols) throw ConfigError(what + " has rows of different length");
        m.row(r) = row.transpose();
    }
    return m;
}

json to_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
    return rows;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

ModelDefinition parse_model(const json& doc) {
    ModelDefinition def;
    def.name = doc.value("name", std::string("model"));
    BeamModel& model = def.model;

    std::map<std::string, int> section_ids;
    const json& sections = require(doc, "sections", "model");
    if (!sections.is_object() || sections.empty()) throw ConfigError("model: 'sections' must be a non-empty object");
    for (const auto& [id, s] : sections.items()) {
        const std::string where = "section '" + id + "'";
        MaterialSection sec;
        sec.youngs_modulus = number(s, "youngs_modulus", where);
        sec.shear_modulus = number(s, "shear_modulus", where);
        sec.density = number(s, "density", where);
        sec.area = number(s, "area", where);
        sec.i_min = number(s, "i_min", where);
        sec.i_max = number(s, "i_max", where);
        sec.torsion_constant = number(s, "torsion_constant", where);
        sec.polar_inertia = s.contains("polar_inertia") ? number(s, "polar_inertia", where) : sec.i_min + sec.i_max;
        section_ids[id] = static_cast<int>(model.sections.size());
        model.sections.push_back(sec);
    }

    for (const auto& n : require(doc, "nodes", "model")) model.nodes.push_back(point(n, "node"));

    std::map<std::string, std::vector<int>> groups;
    for (const auto& e : require(doc, "elements", "model")) {
        BeamElement el;
        const Eigen::VectorXd ends = vector_from_json(require(e, "nodes", "element"), "element nodes");
        if (ends.size() != 2) throw ConfigError("element needs exactly two nodes");
        el.nodes = {static_cast<int>(ends[0]), static_cast<int>(ends[1])};
        const auto sec = require(e, "section", "element").get<std::string>();
        const auto it = section_ids.find(sec);
        if (it == section_ids.end()) throw ConfigError("element references unknown section '" + sec + "'");
        el.section = it->second;
        el.group = e.value("group", std::string());
        if (e.contains("z_axis")) el.z_reference = point(e.at("z_axis"), "element z_axis");
        const int index = static_cast<int>(model.elements.size());
        if (!el.group.empty()) groups[el.group].push_back(index);
        groups["*"].push_back(index);
        model.elements.push_back(el);
    }

    if (doc.contains("constraints")) {
        for (const auto& c : doc.at("constraints")) {
            const int node = require(c, "node", "constraint").get<int>();
            if (c.contains("dofs")) {
                for (const auto& d : c.at("dofs")) model.constrained_dofs.push_back(dofs_per_node * node + dof_index(d));
            } else {
                for (int d = 0; d < dofs_per_node; ++d) model.constrained_dofs.push_back(dofs_per_node * node + d);
            }
        }
    }

    const json params = doc.value("parameters", json::array());
    const auto d = static_cast<Eigen::Index>(params.size());
    def.parameters.lower.resize(d);
    def.parameters.upper.resize(d);
    def.nominal.resize(d);
    model.bindings.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const json& p = params[k];
        const auto name = require(p, "name", "parameter").get<std::string>();
        const std::string where = "parameter '" + name + "'";
        const auto i = static_cast<Eigen::Index>(k);
        def.parameters.names.push_back(name);
        def.parameters.lower[i] = number(p, "lower", where);
        def.parameters.upper[i] = number(p, "upper", where);
        def.nominal[i] = number(p, "nominal", where);
        for (const auto& b : require(p, "bind", where)) {
            const SectionProperty prop = parse_section_property(require(b, "property", where).get<std::string>());
            std::vector<int> targets;
            if (b.contains("group")) {
                const auto g = b.at("group").get<std::string>();
                const auto it = groups.find(g);
                if (it == groups.end()) throw ConfigError(where + " binds unknown group '" + g + "'");
                targets = it->second;
            } else {
                for (const auto& e : require(b, "elements", where)) targets.push_back(e.get<int>());
            }
            for (int e : targets) model.bindings[k].push_back({e, prop});
        }
    }
    def.parameters.validate();
    model.validate(d);
    if (!def.parameters.contains(def.nominal)) throw ConfigError("model nominal parameter vector lies outside its bounds");
    return def;
}

ModelDefinition load_model(const std::filesystem::path& path) { return parse_model(read_json(path)); }

MeasuredData parse_measured_data(const json& doc) {
    Eigen::VectorXd f = vector_from_json(require(doc, "frequencies", "measured data"), "frequencies");
    const bool has_cov = doc.contains("covariance");
    const bool has_rel = doc.contains("relative_noise");
    if (has_cov == has_rel) throw ConfigError("measured data needs exactly one of 'covariance' or 'relative_noise'");
    if (has_rel) return MeasuredData::with_relative_noise(std::move(f), doc.at("relative_noise").get<double>());
    return MeasuredData(std::move(f), matrix_from_json(doc.at("covariance"), "covariance"));
}

MeasuredData load_measured_data(const std::filesystem::path& path) { return parse_measured_data(read_json(path)); }

json to_json(const MeasuredData& data) {
    return json{{"frequencies", to_json(data.frequencies())}, {"covariance", to_json(data.covariance())}};
}

}  // namespace fmu
