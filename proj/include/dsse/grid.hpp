#pragma once

#include <memory>

#include "dsse/network.hpp"
#include "dsse/subspace.hpp"

namespace dsse {

// Everything derived from a network that the solvers share: admittance
// blocks, no-load voltage, constraint set and both kernel bases.
// Immutable after construction and safe to share across threads.
struct Grid {
    NetworkModel network;
    AdmittanceBlocks adm;
    CVector v_source;
    CVector v0;
    std::vector<std::size_t> eps;
    SubspaceBasis basis;
    RectSubspaceBasis rect_basis;
    // Factorization of the real representation of Y_d.
    Eigen::PartialPivLU<RMatrix> yd_rect_lu;

    Index num_states() const { return adm.num_states(); }
    double feasibility(const CVector& v) const {
        return feasibility_residual(adm, eps, v_source, v);
    }
};

std::shared_ptr<const Grid> make_grid(NetworkModel net);

}  // namespace dsse
