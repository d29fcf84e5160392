#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fmu/errors.hpp"

namespace fmu {

/// Degrees of freedom per node: ux, uy, uz, rx, ry, rz.
inline constexpr int dofs_per_node = 6;

/// Modes at or below this frequency are reported as rigid-body modes.
inline constexpr double rigid_body_frequency_hz = 1e-3;

/**
 * Cross-section and material of a 3D Euler-Bernoulli beam.
 *
 * Bending about the local y axis (deflection along local z) uses i_min;
 * bending about the local z axis (deflection along local y) uses i_max.
 * polar_inertia is the geometric polar moment used for the torsional
 * (rotary) mass term only, so that changing a bending inertia never changes
 * the mass matrix.
 */
template <typename Scalar>
struct BasicSection {
    Scalar youngs_modulus{};
    Scalar shear_modulus{};
    Scalar density{};
    Scalar area{};
    Scalar i_min{};
    Scalar i_max{};
    Scalar torsion_constant{};
    Scalar polar_inertia{};

    template <typename Other>
    BasicSection<Other> cast() const {
        return {Other(youngs_modulus), Other(shear_modulus), Other(density),  Other(area),
                Other(i_min),          Other(i_max),         Other(torsion_constant), Other(polar_inertia)};
    }
};

using MaterialSection = BasicSection<double>;

enum class SectionProperty {
    YoungsModulus,
    ShearModulus,
    Density,
    Area,
    IMin,
    IMax,
    TorsionConstant,
    PolarInertia,
};

std::string_view to_string(SectionProperty property);
SectionProperty parse_section_property(std::string_view name);
double& section_property(MaterialSection& section, SectionProperty property);

/// Throws InvalidGeometry unless every field is strictly positive and finite.
template <typename Scalar>
void validate_section(const BasicSection<Scalar>& s) {
    const std::array<std::pair<const char*, Scalar>, 8> fields{{{"youngs_modulus", s.youngs_modulus},
                                                                {"shear_modulus", s.shear_modulus},
                                                                {"density", s.density},
                                                                {"area", s.area},
                                                                {"i_min", s.i_min},
                                                                {"i_max", s.i_max},
                                                                {"torsion_constant", s.torsion_constant},
                                                                {"polar_inertia", s.polar_inertia}}};
    for (const auto& [name, value] : fields) {
        using std::isfinite;
        if (!(value > Scalar(0)) || !isfinite(value)) {
            throw InvalidGeometry(std::string("section property '") + name + "' must be positive");
        }
    }
}

template <typename Scalar>
using Matrix12 = Eigen::Matrix<Scalar, 12, 12>;

template <typename Scalar>
struct ElementMatrices {
    Matrix12<Scalar> stiffness;
    Matrix12<Scalar> mass;
};

/**
 * Unit-coefficient local matrices of the 12-DOF element, one per physical
 * term. The element matrices are linear combinations of these:
 *   K = EA*axial + GJ*torsion + E*i_min*bend_minor + E*i_max*bend_major
 *   M = rho*A*translational + rho*polar_inertia*rotary
 * Local DOF order is [u1 v1 w1 rx1 ry1 rz1 u2 v2 w2 rx2 ry2 rz2].
 */
template <typename Scalar>
struct ElementTerms {
    Matrix12<Scalar> axial;
    Matrix12<Scalar> torsion;
    Matrix12<Scalar> bend_minor;
    Matrix12<Scalar> bend_major;
    Matrix12<Scalar> translational;
    Matrix12<Scalar> rotary;
};

template <typename Scalar>
ElementTerms<Scalar> local_element_terms(Scalar length) {
    const Scalar L = length;
    const Scalar L2 = L * L;
    ElementTerms<Scalar> t;
    t.axial.setZero();
    t.torsion.setZero();
    t.bend_minor.setZero();
    t.bend_major.setZero();
    t.translational.setZero();
    t.rotary.setZero();

    auto place2 = [](Matrix12<Scalar>& m, int i, int j, Scalar diag, Scalar off) {
        m(i, i) += diag;
        m(j, j) += diag;
        m(i, j) += off;
        m(j, i) += off;
    };
    place2(t.axial, 0, 6, Scalar(1) / L, -Scalar(1) / L);
    place2(t.torsion, 3, 9, Scalar(1) / L, -Scalar(1) / L);
    place2(t.translational, 0, 6, L / Scalar(3), L / Scalar(6));
    place2(t.rotary, 3, 9, L / Scalar(3), L / Scalar(6));

    // Hermite bending blocks. s = +1 for the (v, rz) plane, -1 for (w, ry).
    auto bending = [&](const std::array<int, 4>& idx, Scalar s, Matrix12<Scalar>& k, Matrix12<Scalar>& m) {
        const Scalar c = Scalar(1) / (L2 * L);
        Eigen::Matrix<Scalar, 4, 4> kb;
        kb << 12, 6 * L * s, -12, 6 * L * s,         //
            6 * L * s, 4 * L2, -6 * L * s, 2 * L2,   //
            -12, -6 * L * s, 12, -6 * L * s,         //
            6 * L * s, 2 * L2, -6 * L * s, 4 * L2;
        Eigen::Matrix<Scalar, 4, 4> mb;
        mb << 156, 22 * L * s, 54, -13 * L * s,       //
            22 * L * s, 4 * L2, 13 * L * s, -3 * L2,  //
            54, 13 * L * s, 156, -22 * L * s,         //
            -13 * L * s, -3 * L2, -22 * L * s, 4 * L2;
        kb *= c;
        mb *= L / Scalar(420);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                k(idx[a], idx[b]) += kb(a, b);
                m(idx[a], idx[b]) += mb(a, b);
            }
    };
    bending({1, 5, 7, 11}, Scalar(1), t.bend_major, t.translational);
    bending({2, 4, 8, 10}, Scalar(-1), t.bend_minor, t.translational);
    return t;
}

/// Element triad: rows are the local x, y, z axes in global coordinates.
/// Local x runs from a to b; local z is the component of z_reference
/// orthogonal to x.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> local_axes(const Eigen::Matrix<Scalar, 3, 1>& a, const Eigen::Matrix<Scalar, 3, 1>& b,
                                       const Eigen::Matrix<Scalar, 3, 1>& z_reference) {
    const Eigen::Matrix<Scalar, 3, 1> d = b - a;
    const Scalar length = d.norm();
    if (!(length > Scalar(0))) throw InvalidGeometry("element has zero length");
    const Eigen::Matrix<Scalar, 3, 1> x = d / length;
    Eigen::Matrix<Scalar, 3, 1> z = z_reference - z_reference.dot(x) * x;
    const Scalar zn = z.norm();
    if (!(zn > Scalar(1e-8) * z_reference.norm())) {
        throw InvalidGeometry("element orientation reference is parallel to the element axis");
    }
    z /= zn;
    const Eigen::Matrix<Scalar, 3, 1> y = z.cross(x);
    Eigen::Matrix<Scalar, 3, 3> r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    return r;
}

/// Global-frame element matrices, K = T' K_local T with T = diag(R, R, R, R).
template <typename Scalar>
ElementMatrices<Scalar> element_matrices(const BasicSection<Scalar>& section, Scalar length,
                                         const Eigen::Matrix<Scalar, 3, 3>& axes) {
    if (!(length > Scalar(0))) throw InvalidGeometry("element length must be positive");
    validate_section(section);
    const ElementTerms<Scalar> t = local_element_terms(length);
    const BasicSection<Scalar>& s = section;
    Matrix12<Scalar> k = s.youngs_modulus * s.area * t.axial + s.shear_modulus * s.torsion_constant * t.torsion +
                         s.youngs_modulus * s.i_min * t.bend_minor + s.youngs_modulus * s.i_max * t.bend_major;
    Matrix12<Scalar> m = s.density * s.area * t.translational + s.density * s.polar_inertia * t.rotary;

    Matrix12<Scalar> T = Matrix12<Scalar>::Zero();
    for (int blk = 0; blk < 4; ++blk) T.template block<3, 3>(3 * blk, 3 * blk) = axes;
    ElementMatrices<Scalar> out;
    out.stiffness = T.transpose() * k * T;
    out.mass = T.transpose() * m * T;
    // Exact symmetry.
    out.stiffness = (out.stiffness + out.stiffness.transpose().eval()) * Scalar(0.5);
    out.mass = (out.mass + out.mass.transpose().eval()) * Scalar(0.5);
    return out;
}

struct BeamElement {
    std::array<int, 2> nodes{};
    int section = 0;
    /// Local z reference; zero selects global Z, or global Y for elements parallel to Z.
    Eigen::Vector3d z_reference = Eigen::Vector3d::Zero();
    std::string group;
};

/// One element property overridden by a component of the updating vector.
struct PropertyBinding {
    int element = 0;
    SectionProperty property = SectionProperty::Density;
};

/**
 * Beam-frame model: nodes (m), sections, two-node elements, fixed DOFs
 * (global index 6*node + local dof) and the map from updating-vector
 * component to the element properties it overrides.
 */
struct BeamModel {
    std::vector<Eigen::Vector3d> nodes;
    std::vector<MaterialSection> sections;
    std::vector<BeamElement> elements;
    std::vector<int> constrained_dofs;
    std::vector<std::vector<PropertyBinding>> bindings;

    Eigen::Index dof_count() const { return dofs_per_node * static_cast<Eigen::Index>(nodes.size()); }
    std::vector<int> free_dofs() const;
    Eigen::Index free_dof_count() const { return static_cast<Eigen::Index>(free_dofs().size()); }

    double element_length(int e) const;
    Eigen::Matrix3d element_axes(int e) const;

    /// Sections with the overrides of theta applied, one per element.
    std::vector<MaterialSection> element_sections(const Eigen::VectorXd& theta) const;

    /// Throws ConfigError / InvalidGeometry on broken references, zero-length
    /// elements, or bindings to components >= parameter_count.
    void validate(Eigen::Index parameter_count) const;
};

struct GlobalMatrices {
    Eigen::MatrixXd stiffness;
    Eigen::MatrixXd mass;
};

/// Global K and M with the constrained DOFs removed.
GlobalMatrices assemble(const BeamModel& model, const Eigen::VectorXd& theta);

struct ModalResult {
    Eigen::VectorXd frequencies;  ///< Hz, ascending
    Eigen::VectorXd eigenvalues;  ///< (2 pi f)^2, as returned by the solver
    Eigen::MatrixXd modes;        ///< mass-normalised, one column per frequency; empty when not requested

    Eigen::Index rigid_body_count() const;
    /// The first count frequencies above the rigid-body threshold.
    Eigen::VectorXd elastic_frequencies(Eigen::Index count) const;
};

/// Lowest n_modes solutions of K v = lambda M v via Cholesky reduction of M.
ModalResult modal_solve(const Eigen::MatrixXd& stiffness, const Eigen::MatrixXd& mass, Eigen::Index n_modes,
                        bool compute_modes = true);

/// The first count entries of an ascending frequency list that lie above the
/// rigid-body threshold.
Eigen::VectorXd select_elastic(const Eigen::VectorXd& frequencies, Eigen::Index count);

inline double frequency_from_eigenvalue(double lambda) {
    return std::sqrt(std::max(lambda, 0.0)) / (2.0 * std::numbers::pi);
}

/**
 * Repeated frequency evaluation of one model at many parameter vectors.
 *
 * When every stiffness term depends on at most one bound property and the
 * mass matrix is either fixed or scaled by a single component, K(theta) is
 * affine in theta and M(theta) = theta_k * M0. The Cholesky reduction is then
 * done once at construction and each evaluation only forms a linear
 * combination and runs the symmetric eigensolver. Otherwise every call
 * assembles and reduces from scratch.
 */
class ModalEvaluator {
public:
    ModalEvaluator(BeamModel model, Eigen::Index parameter_count);

    /// All frequencies (Hz, ascending) at theta.
    Eigen::VectorXd frequencies(const Eigen::VectorXd& theta) const;

    /// Frequencies and mass-normalised modes through the general path.
    ModalResult solve(const Eigen::VectorXd& theta, Eigen::Index n_modes) const;

    bool affine() const { return affine_; }
    const BeamModel& model() const { return model_; }
    Eigen::Index parameter_count() const { return parameter_count_; }

private:
    void build_affine_decomposition();

    BeamModel model_;
    Eigen::Index parameter_count_;
    bool affine_ = false;
    int mass_scale_index_ = -1;
    std::vector<Eigen::MatrixXd> reduced_terms_;  // [0] fixed part, [k + 1] coefficient of theta_k
    std::vector<bool> term_present_;
};

}  // namespace fmu
