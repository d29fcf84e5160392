#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "json.hpp"

#include "fmu/bayes.hpp"
#include "fmu/beam_fem.hpp"

namespace fmu {

/// A model file: the beam model plus the updating vector it binds.
struct ModelDefinition {
    std::string name;
    BeamModel model;
    ParameterSpace parameters;
    Eigen::VectorXd nominal;
};

/**
 * Model file schema (JSON):
 *
 *   name        string
 *   sections    { id: { youngs_modulus, shear_modulus, density, area,
 *                       i_min, i_max, torsion_constant, [polar_inertia] } }
 *   nodes       [[x, y, z], ...]                                   (m)
 *   elements    [{ nodes: [a, b], section: id, [group], [z_axis: [x, y, z]] }]
 *   constraints [{ node: n, [dofs: ["ux","uy","uz","rx","ry","rz"]] }]  (all six when omitted)
 *   parameters  [{ name, lower, upper, nominal,
 *                  bind: [{ property, group | elements: [..] }] }]  (group "*" = every element)
 *
 * polar_inertia defaults to i_min + i_max of the section as written.
 */
ModelDefinition parse_model(const nlohmann::json& doc);
ModelDefinition load_model(const std::filesystem::path& path);

/// { frequencies: [...], covariance: [[...]] } or { frequencies: [...], relative_noise: c }
MeasuredData parse_measured_data(const nlohmann::json& doc);
MeasuredData load_measured_data(const std::filesystem::path& path);
nlohmann::json to_json(const MeasuredData& data);

nlohmann::json read_json(const std::filesystem::path& path);

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json to_json(const Eigen::VectorXd& v);
nlohmann::json to_json(const Eigen::MatrixXd& m);

}  // namespace fmu
