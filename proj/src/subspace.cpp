#include "dsse/subspace.hpp"

#include "dsse/grid.hpp"

namespace dsse {

namespace {

void check_indices(const AdmittanceBlocks& adm, std::span<const std::size_t> eps) {
    for (std::size_t k : eps) {
        if (static_cast<Index>(k) >= adm.num_states()) {
            throw DimensionError("constraint index " + std::to_string(k) + " out of range");
        }
    }
    if (static_cast<Index>(eps.size()) >= adm.num_states()) {
        throw ValidationError("every state is constrained; the feasible set is a point");
    }
}

// Right singular vectors spanning the null space of a (rows <= cols).
template <typename Matrix>
Matrix kernel_of(const Matrix& a, const char* what) {
    const Index n = a.cols();
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double cutoff = kKernelRelTol * (sv.size() ? sv[0] : 0.0);
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i) {
        if (sv[i] > cutoff) ++rank;
    }
    if (rank < a.rows()) {
        throw NumericalError(std::string(what) + ": constraint rows are rank deficient (rank " +
                             std::to_string(rank) + " of " + std::to_string(a.rows()) +
                             "), kernel larger than expected");
    }
    return svd.matrixV().rightCols(n - rank);
}

}  // namespace

CMatrix constrained_rows(const AdmittanceBlocks& adm, std::span<const std::size_t> eps) {
    CMatrix rows(static_cast<Index>(eps.size()), adm.num_states());
    for (std::size_t r = 0; r < eps.size(); ++r) rows.row(static_cast<Index>(r)) = adm.yd().row(static_cast<Index>(eps[r]));
    return rows;
}

SubspaceBasis complex_kernel_basis(const AdmittanceBlocks& adm, std::span<const std::size_t> eps,
                                   const CVector& v0) {
    check_indices(adm, eps);
    SubspaceBasis b;
    b.particular = v0;
    b.constrained.assign(eps.begin(), eps.end());
    if (eps.empty()) {
        b.basis = CMatrix::Identity(adm.num_states(), adm.num_states());
    } else {
        b.basis = kernel_of<CMatrix>(constrained_rows(adm, eps), "complex_kernel_basis");
    }
    return b;
}

RectSubspaceBasis rect_kernel_basis(const AdmittanceBlocks& adm, std::span<const std::size_t> eps,
                                    const CVector& v0) {
    check_indices(adm, eps);
    RectSubspaceBasis b;
    b.particular = stack_rect(v0);
    b.constrained.assign(eps.begin(), eps.end());
    if (eps.empty()) {
        b.basis = RMatrix::Identity(2 * adm.num_states(), 2 * adm.num_states());
    } else {
        b.basis = kernel_of<RMatrix>(realify(constrained_rows(adm, eps)), "rect_kernel_basis");
    }
    return b;
}

CVector lift(const SubspaceBasis& basis, const CVector& x) {
    if (x.size() != basis.dim()) throw DimensionError("lift: coordinate dimension mismatch");
    return basis.basis * x + basis.particular;
}

RVector lift(const RectSubspaceBasis& basis, const RVector& x) {
    if (x.size() != basis.dim()) throw DimensionError("lift: coordinate dimension mismatch");
    return basis.basis * x + basis.particular;
}

CVector project(const SubspaceBasis& basis, const CVector& v) {
    if (v.size() != basis.particular.size()) throw DimensionError("project: voltage dimension mismatch");
    return basis.basis.adjoint() * (v - basis.particular);
}

RVector project(const RectSubspaceBasis& basis, const RVector& v) {
    if (v.size() != basis.particular.size()) throw DimensionError("project: voltage dimension mismatch");
    return basis.basis.transpose() * (v - basis.particular);
}

double feasibility_residual(const AdmittanceBlocks& adm, std::span<const std::size_t> eps,
                            const CVector& v_source, const CVector& v) {
    if (v.size() != adm.num_states()) throw DimensionError("feasibility_residual: dimension mismatch");
    double worst = 0.0;
    for (std::size_t k : eps) {
        const auto r = static_cast<Index>(k);
        const cplx i = (adm.yd().row(r) * v)(0) + (adm.yc().row(r) * v_source)(0);
        worst = std::max(worst, std::abs(i));
    }
    return worst;
}

std::shared_ptr<const Grid> make_grid(NetworkModel net) {
    net.validate();
    auto g = std::make_shared<Grid>();
    g->adm = build_admittance(net);
    g->v_source = source_vector(net);
    g->v0 = no_load_voltage(g->adm, g->v_source);
    g->eps = g->adm.index().zero_injection();
    g->basis = complex_kernel_basis(g->adm, g->eps, g->v0);
    g->rect_basis = rect_kernel_basis(g->adm, g->eps, g->v0);
    g->yd_rect_lu.compute(realify(g->adm.yd()));
    g->network = std::move(net);
    return g;
}

}  // namespace dsse
