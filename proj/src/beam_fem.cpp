#include "fmu/beam_fem.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace fmu {

namespace {

constexpr std::array<std::pair<SectionProperty, std::string_view>, 8> property_names{{
    {SectionProperty::YoungsModulus, "youngs_modulus"},
    {SectionProperty::ShearModulus, "shear_modulus"},
    {SectionProperty::Density, "density"},
    {SectionProperty::Area, "area"},
    {SectionProperty::IMin, "i_min"},
    {SectionProperty::IMax, "i_max"},
    {SectionProperty::TorsionConstant, "torsion_constant"},
    {SectionProperty::PolarInertia, "polar_inertia"},
}};

Matrix12<double> to_global(const Matrix12<double>& local, const Eigen::Matrix3d& axes) {
    Matrix12<double> T = Matrix12<double>::Zero();
    for (int blk = 0; blk < 4; ++blk) T.block<3, 3>(3 * blk, 3 * blk) = axes;
    return T.transpose() * local * T;
}

void scatter(Eigen::MatrixXd& global, const Matrix12<double>& element, const BeamElement& el, double scale) {
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            global.block<6, 6>(dofs_per_node * el.nodes[a], dofs_per_node * el.nodes[b]) +=
                scale * element.block<6, 6>(6 * a, 6 * b);
}

Eigen::MatrixXd restrict_to(const Eigen::MatrixXd& full, const std::vector<int>& free) {
    const auto n = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd out(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) out(i, j) = full(free[i], free[j]);
    return out;
}

void symmetrize(Eigen::MatrixXd& m) { m = (0.5 * (m + m.transpose())).eval(); }

// L^{-1} K L^{-T} for the lower Cholesky factor L.
Eigen::MatrixXd reduce(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::MatrixXd& k) {
    Eigen::MatrixXd x = llt.matrixL().solve(k);
    Eigen::MatrixXd c = llt.matrixL().solve(x.transpose());
    symmetrize(c);
    return c;
}

void check_positive_density(const std::vector<MaterialSection>& sections) {
    for (std::size_t e = 0; e < sections.size(); ++e) {
        if (!(sections[e].density > 0.0)) {
            throw DegenerateModel("element " + std::to_string(e) + " has non-positive density; mass matrix is singular");
        }
    }
}

}  // namespace

std::string_view to_string(SectionProperty property) {
    for (const auto& [p, name] : property_names)
        if (p == property) return name;
    return "unknown";
}

SectionProperty parse_section_property(std::string_view name) {
    for (const auto& [p, n] : property_names)
        if (n == name) return p;
    throw ConfigError("unknown section property '" + std::string(name) + "'");
}

double& section_property(MaterialSection& s, SectionProperty property) {
    switch (property) {
        case SectionProperty::YoungsModulus: return s.youngs_modulus;
        case SectionProperty::ShearModulus: return s.shear_modulus;
        case SectionProperty::Density: return s.density;
        case SectionProperty::Area: return s.area;
        case SectionProperty::IMin: return s.i_min;
        case SectionProperty::IMax: return s.i_max;
        case SectionProperty::TorsionConstant: return s.torsion_constant;
        case SectionProperty::PolarInertia: return s.polar_inertia;
    }
    throw ConfigError("unknown section property");
}

std::vector<int> BeamModel::free_dofs() const {
    std::vector<int> fixed = constrained_dofs;
    std::sort(fixed.begin(), fixed.end());
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(dof_count()));
    for (int i = 0; i < dof_count(); ++i)
        if (!std::binary_search(fixed.begin(), fixed.end(), i)) out.push_back(i);
    return out;
}

double BeamModel::element_length(int e) const {
    const auto& el = elements.at(static_cast<std::size_t>(e));
    return (nodes.at(el.nodes[1]) - nodes.at(el.nodes[0])).norm();
}

Eigen::Matrix3d BeamModel::element_axes(int e) const {
    const auto& el = elements.at(static_cast<std::size_t>(e));
    const Eigen::Vector3d& a = nodes.at(el.nodes[0]);
    const Eigen::Vector3d& b = nodes.at(el.nodes[1]);
    Eigen::Vector3d ref = el.z_reference;
    if (ref.squaredNorm() == 0.0) {
        const Eigen::Vector3d axis = (b - a).normalized();
        ref = std::abs(axis.z()) > 1.0 - 1e-6 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitZ();
    }
    return local_axes<double>(a, b, ref);
}

std::vector<MaterialSection> BeamModel::element_sections(const Eigen::VectorXd& theta) const {
    if (static_cast<std::size_t>(theta.size()) < bindings.size()) {
        throw ShapeError("updating vector has " + std::to_string(theta.size()) + " components, model binds " +
                         std::to_string(bindings.size()));
    }
    std::vector<MaterialSection> out;
    out.reserve(elements.size());
    for (const auto& el : elements) out.push_back(sections.at(static_cast<std::size_t>(el.section)));
    for (std::size_t k = 0; k < bindings.size(); ++k)
        for (const auto& b : bindings[k]) section_property(out.at(static_cast<std::size_t>(b.element)), b.property) = theta[static_cast<Eigen::Index>(k)];
    return out;
}

void BeamModel::validate(Eigen::Index parameter_count) const {
    if (nodes.empty()) throw ConfigError("model has no nodes");
    if (elements.empty()) throw ConfigError("model has no elements");
    for (const auto& s : sections) validate_section(s);
    const int n_nodes = static_cast<int>(nodes.size());
    for (std::size_t e = 0; e < elements.size(); ++e) {
        const auto& el = elements[e];
        const std::string tag = "element " + std::to_string(e);
        for (int n : el.nodes)
            if (n < 0 || n >= n_nodes) throw ConfigError(tag + " references missing node " + std::to_string(n));
        if (el.nodes[0] == el.nodes[1]) throw InvalidGeometry(tag + " connects a node to itself");
        if (el.section < 0 || el.section >= static_cast<int>(sections.size()))
            throw ConfigError(tag + " references missing section " + std::to_string(el.section));
        if (!(element_length(static_cast<int>(e)) > 0.0)) throw InvalidGeometry(tag + " has zero length");
        element_axes(static_cast<int>(e));
    }
    for (int d : constrained_dofs)
        if (d < 0 || d >= dof_count()) throw ConfigError("constrained dof " + std::to_string(d) + " out of range");
    if (static_cast<Eigen::Index>(bindings.size()) > parameter_count) {
        throw ConfigError("model binds " + std::to_string(bindings.size()) + " components but the updating vector has " +
                          std::to_string(parameter_count));
    }
    std::map<std::pair<int, SectionProperty>, std::size_t> seen;
    for (std::size_t k = 0; k < bindings.size(); ++k) {
        for (const auto& b : bindings[k]) {
            if (b.element < 0 || b.element >= static_cast<int>(elements.size()))
                throw ConfigError("binding of component " + std::to_string(k) + " references missing element " +
                                  std::to_string(b.element));
            auto [it, inserted] = seen.emplace(std::make_pair(b.element, b.property), k);
            if (!inserted && it->second != k)
                throw ConfigError("element " + std::to_string(b.element) + " property '" +
                                  std::string(to_string(b.property)) + "' is bound to two components");
        }
    }
}

GlobalMatrices assemble(const BeamModel& model, const Eigen::VectorXd& theta) {
    const std::vector<MaterialSection> secs = model.element_sections(theta);
    check_positive_density(secs);
    const Eigen::Index n = model.dof_count();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t e = 0; e < model.elements.size(); ++e) {
        const int ei = static_cast<int>(e);
        const auto em = element_matrices<double>(secs[e], model.element_length(ei), model.element_axes(ei));
        scatter(k, em.stiffness, model.elements[e], 1.0);
        scatter(m, em.mass, model.elements[e], 1.0);
    }
    symmetrize(k);
    symmetrize(m);
    if (model.constrained_dofs.empty()) return {std::move(k), std::move(m)};
    const auto free = model.free_dofs();
    return {restrict_to(k, free), restrict_to(m, free)};
}

Eigen::Index ModalResult::rigid_body_count() const {
    return static_cast<Eigen::Index>(std::count_if(frequencies.begin(), frequencies.end(),
                                                   [](double f) { return f <= rigid_body_frequency_hz; }));
}

Eigen::VectorXd ModalResult::elastic_frequencies(Eigen::Index count) const {
    return select_elastic(frequencies, count);
}

Eigen::VectorXd select_elastic(const Eigen::VectorXd& frequencies, Eigen::Index count) {
    Eigen::Index first = 0;
    while (first < frequencies.size() && frequencies[first] <= rigid_body_frequency_hz) ++first;
    if (first + count > frequencies.size()) {
        throw ShapeError("requested " + std::to_string(count) + " elastic modes but only " +
                         std::to_string(frequencies.size() - first) + " are available");
    }
    return frequencies.segment(first, count);
}

ModalResult modal_solve(const Eigen::MatrixXd& stiffness, const Eigen::MatrixXd& mass, Eigen::Index n_modes,
                        bool compute_modes) {
    const Eigen::Index n = stiffness.rows();
    if (stiffness.cols() != n || mass.rows() != n || mass.cols() != n)
        throw ShapeError("stiffness and mass must be square matrices of equal size");
    if (n_modes < 0 || n_modes > n)
        throw ShapeError("requested " + std::to_string(n_modes) + " modes from a system of dimension " + std::to_string(n));

    Eigen::LLT<Eigen::MatrixXd> llt(mass);
    if (llt.info() != Eigen::Success) throw DegenerateModel("mass matrix is not positive definite");
    const Eigen::MatrixXd reduced = reduce(llt, stiffness);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        reduced, compute_modes ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "symmetric eigensolver did not converge (dimension " << n << ", info " << solver.info()
            << ", max iterations " << Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>::m_maxIterations << " per value)";
        throw NumericalError(msg.str());
    }

    ModalResult out;
    out.eigenvalues = solver.eigenvalues().head(n_modes);
    out.frequencies = out.eigenvalues.unaryExpr(&frequency_from_eigenvalue);
    if (compute_modes) {
        // v = L^{-T} u is mass-normalised when u is unit length.
        out.modes = llt.matrixU().solve(solver.eigenvectors().leftCols(n_modes));
        for (Eigen::Index j = 0; j < n_modes; ++j) {
            Eigen::Index imax = 0;
            out.modes.col(j).cwiseAbs().maxCoeff(&imax);
            if (out.modes(imax, j) < 0.0) out.modes.col(j) *= -1.0;
        }
    }
    return out;
}

ModalEvaluator::ModalEvaluator(BeamModel model, Eigen::Index parameter_count)
    : model_(std::move(model)), parameter_count_(parameter_count) {
    model_.validate(parameter_count_);
    build_affine_decomposition();
}

void ModalEvaluator::build_affine_decomposition() {
    const std::size_t n_elem = model_.elements.size();
    // bound[e][property] = component index or -1
    std::vector<std::array<int, 8>> bound(n_elem);
    for (auto& b : bound) b.fill(-1);
    for (std::size_t k = 0; k < model_.bindings.size(); ++k)
        for (const auto& b : model_.bindings[k])
            bound[static_cast<std::size_t>(b.element)][static_cast<std::size_t>(b.property)] = static_cast<int>(k);

    const auto slots = static_cast<std::size_t>(parameter_count_) + 1;
    const Eigen::Index n = model_.dof_count();
    std::vector<Eigen::MatrixXd> k_parts(slots), m_parts(slots);
    std::vector<bool> k_used(slots, false), m_used(slots, false);

    using P = SectionProperty;
    for (std::size_t e = 0; e < n_elem; ++e) {
        const int ei = static_cast<int>(e);
        const MaterialSection& s = model_.sections[static_cast<std::size_t>(model_.elements[e].section)];
        MaterialSection nominal = s;
        const auto terms = local_element_terms<double>(model_.element_length(ei));
        const Eigen::Matrix3d axes = model_.element_axes(ei);

        struct Term {
            P a, b;
            const Matrix12<double>* local;
            bool mass;
        };
        const std::array<Term, 6> list{{{P::YoungsModulus, P::Area, &terms.axial, false},
                                        {P::ShearModulus, P::TorsionConstant, &terms.torsion, false},
                                        {P::YoungsModulus, P::IMin, &terms.bend_minor, false},
                                        {P::YoungsModulus, P::IMax, &terms.bend_major, false},
                                        {P::Density, P::Area, &terms.translational, true},
                                        {P::Density, P::PolarInertia, &terms.rotary, true}}};
        for (const Term& t : list) {
            const int ka = bound[e][static_cast<std::size_t>(t.a)];
            const int kb = bound[e][static_cast<std::size_t>(t.b)];
            if (ka >= 0 && kb >= 0) return;  // product of two bound values: not affine
            double coefficient = 1.0;
            std::size_t slot = 0;
            if (ka >= 0) {
                coefficient = section_property(nominal, t.b);
                slot = static_cast<std::size_t>(ka) + 1;
            } else if (kb >= 0) {
                coefficient = section_property(nominal, t.a);
                slot = static_cast<std::size_t>(kb) + 1;
            } else {
                coefficient = section_property(nominal, t.a) * section_property(nominal, t.b);
            }
            auto& parts = t.mass ? m_parts : k_parts;
            auto& used = t.mass ? m_used : k_used;
            if (!used[slot]) {
                parts[slot] = Eigen::MatrixXd::Zero(n, n);
                used[slot] = true;
            }
            scatter(parts[slot], to_global(*t.local, axes), model_.elements[e], coefficient);
        }
    }

    int scale = -1;
    const auto mass_slots = std::count(m_used.begin(), m_used.end(), true);
    if (mass_slots != 1) return;
    for (std::size_t j = 1; j < slots; ++j)
        if (m_used[j]) scale = static_cast<int>(j) - 1;
    const std::size_t mass_slot = static_cast<std::size_t>(scale + 1);

    const auto free = model_.free_dofs();
    Eigen::MatrixXd m = m_parts[mass_slot];
    symmetrize(m);
    m = restrict_to(m, free);
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw DegenerateModel("mass matrix is not positive definite");

    reduced_terms_.assign(slots, Eigen::MatrixXd());
    term_present_ = k_used;
    for (std::size_t j = 0; j < slots; ++j) {
        if (!k_used[j]) continue;
        Eigen::MatrixXd kj = k_parts[j];
        symmetrize(kj);
        reduced_terms_[j] = reduce(llt, restrict_to(kj, free));
    }
    mass_scale_index_ = scale;
    affine_ = true;
}

Eigen::VectorXd ModalEvaluator::frequencies(const Eigen::VectorXd& theta) const {
    if (theta.size() != parameter_count_)
        throw ShapeError("updating vector has " + std::to_string(theta.size()) + " components, expected " +
                         std::to_string(parameter_count_));
    if (!affine_) {
        const auto km = assemble(model_, theta);
        return modal_solve(km.stiffness, km.mass, km.stiffness.rows(), false).frequencies;
    }

    for (std::size_t k = 0; k < model_.bindings.size(); ++k) {
        if (model_.bindings[k].empty()) continue;
        const double v = theta[static_cast<Eigen::Index>(k)];
        if (!(v > 0.0) || !std::isfinite(v)) {
            const bool density = static_cast<int>(k) == mass_scale_index_;
            const std::string msg = "component " + std::to_string(k) + " sets a section property to a non-positive value";
            if (density) throw DegenerateModel(msg);
            throw InvalidGeometry(msg);
        }
    }

    const Eigen::Index n = model_.free_dof_count();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    if (term_present_[0]) a.triangularView<Eigen::Lower>() += reduced_terms_[0];
    for (Eigen::Index k = 0; k < parameter_count_; ++k) {
        const auto slot = static_cast<std::size_t>(k) + 1;
        if (term_present_[slot]) a.triangularView<Eigen::Lower>() += theta[k] * reduced_terms_[slot];
    }
    if (mass_scale_index_ >= 0) a.triangularView<Eigen::Lower>() *= 1.0 / theta[mass_scale_index_];

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw NumericalError("symmetric eigensolver did not converge (dimension " + std::to_string(n) + ")");
    return solver.eigenvalues().unaryExpr(&frequency_from_eigenvalue);
}

ModalResult ModalEvaluator::solve(const Eigen::VectorXd& theta, Eigen::Index n_modes) const {
    if (theta.size() != parameter_count_)
        throw ShapeError("updating vector has " + std::to_string(theta.size()) + " components, expected " +
                         std::to_string(parameter_count_));
    const auto km = assemble(model_, theta);
    return modal_solve(km.stiffness, km.mass, n_modes, true);
}

}  // namespace fmu
