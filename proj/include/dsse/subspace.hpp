#pragma once

#include <span>
#include <vector>

#include "dsse/network.hpp"

namespace dsse {

// Feasible set {V : (Y_d)_eps V + (Y_c)_eps V_source = 0} = {F x + V_p}.
struct SubspaceBasis {
    CMatrix basis;       // N x (N - |eps|), orthonormal columns
    CVector particular;  // V_p = V0
    std::vector<std::size_t> constrained;

    Index dim() const { return basis.cols(); }
};

// Rectangular counterpart: V_rect = F~ x~ + [Re V0; Im V0], x~ real.
struct RectSubspaceBasis {
    RMatrix basis;       // 2N x (2N - 2|eps|)
    RVector particular;
    std::vector<std::size_t> constrained;

    Index dim() const { return basis.cols(); }
};

// Singular values below this fraction of the largest count as zero.
inline constexpr double kKernelRelTol = 1e-8;

SubspaceBasis complex_kernel_basis(const AdmittanceBlocks& adm, std::span<const std::size_t> eps,
                                   const CVector& v0);
RectSubspaceBasis rect_kernel_basis(const AdmittanceBlocks& adm, std::span<const std::size_t> eps,
                                    const CVector& v0);

CVector lift(const SubspaceBasis& basis, const CVector& x);
RVector lift(const RectSubspaceBasis& basis, const RVector& x);
CVector project(const SubspaceBasis& basis, const CVector& v);
RVector project(const RectSubspaceBasis& basis, const RVector& v);

// Rows eps of Y_d.
CMatrix constrained_rows(const AdmittanceBlocks& adm, std::span<const std::size_t> eps);

// ||(Y_d)_eps v + (Y_c)_eps V_source||_inf
double feasibility_residual(const AdmittanceBlocks& adm, std::span<const std::size_t> eps,
                            const CVector& v_source, const CVector& v);

}  // namespace dsse
