#pragma once

#include <string>
#include <vector>

#include "dsse/grid.hpp"
#include "dsse/measurement.hpp"
#include "dsse/prior.hpp"

namespace dsse {

// h~(V_rect) and its Jacobian with respect to V_rect.
class MeasurementFunction {
public:
    virtual ~MeasurementFunction() = default;
    virtual Index size() const = 0;
    virtual RVector evaluate(const RVector& v_rect) const = 0;
    virtual RMatrix jacobian(const RVector& v_rect) const = 0;
};

struct MeasurementLayout {
    Index pseudo = 0;     // complex pseudo entries (2x real rows)
    Index linear = 0;     // synchronized sensors (2x real rows)
    Index nonlinear = 0;  // magnitude sensors
    Index rows() const { return 2 * pseudo + 2 * linear + nonlinear; }
};

// z = [Re S_pseudo,eps^c; Im S_pseudo,eps^c; Re z_measL; Im z_measL; z_measNL]
// with W = blkdiag(sigma^2 diag([Re^2; Im^2]), Sigma_rect,measL, Sigma_measNL).
struct StackedMeasurements {
    RVector z;
    RMatrix w;
    MeasurementLayout layout;
    std::vector<std::size_t> pseudo_index;  // state indices of eps^c
};

// `frame` may be null (pseudo-only). Magnitude rows are included when the
// frame carries them.
StackedMeasurements stack_measurements(const Grid& grid, const PseudoMeasurements& pseudo,
                                       const MeasurementPlan* plan, const MeasurementFrame* frame,
                                       const CovarianceOptions& opts = {});

// The stacked measurement function matching stack_measurements.
class StackedModel final : public MeasurementFunction {
public:
    StackedModel(const Grid& grid, std::vector<std::size_t> pseudo_index, AffineMap linear,
                 AffineMap magnitude);

    Index size() const override;
    RVector evaluate(const RVector& v_rect) const override;
    RMatrix jacobian(const RVector& v_rect) const override;

private:
    const Grid& grid_;
    std::vector<std::size_t> pseudo_index_;
    AffineMap linear_;
    AffineMap magnitude_;
};

// First-order expansion of another model about a fixed point.
class LinearizedModel final : public MeasurementFunction {
public:
    LinearizedModel(const MeasurementFunction& model, const RVector& v_lin);

    Index size() const override { return h0_.size(); }
    RVector evaluate(const RVector& v_rect) const override { return h0_ + jac_ * (v_rect - v_lin_); }
    RMatrix jacobian(const RVector&) const override { return jac_; }

private:
    RVector v_lin_;
    RVector h0_;
    RMatrix jac_;
};

// Newton-WLS in subspace coordinates: x~_{k+1} = x~_k + (H^T W^-1 H)^-1 H^T W^-1 (z - h~),
// H = grad h~ F~. Covariance F~ (H^T W^-1 H)^-1 F~^T at the solution.
StateEstimate wls_subspace(const StackedMeasurements& z, const MeasurementFunction& model,
                           const RectSubspaceBasis& basis, const SolverConfig& cfg = {});

struct UpdateResult {
    StateEstimate posterior;
    // complex updates
    CMatrix gain;
    CVector innovation;
    CMatrix innovation_cov;
    // rectangular updates
    RMatrix gain_rect;
    RVector innovation_rect;
    RMatrix innovation_cov_rect;

    double jitter = 0.0;
    std::vector<std::string> warnings;
};

// V_post = V_prior + K (z - C V_prior - d), K = Sigma C^* (C Sigma C^* + R)^-1.
UpdateResult linear_update_complex(const Grid& grid, const StateEstimate& prior, const AffineMap& c,
                                   const CVector& z, const RVector& meas_var);

// Closed-form minimizer of ||[x - x_prior; C(F x + V0) + d - z]||^2 weighted by
// blkdiag(F^* Sigma F, R)^-1, lifted back to voltages.
UpdateResult subspace_wls_update(const Grid& grid, const StateEstimate& prior, const AffineMap& c,
                                 const CVector& z, const RVector& meas_var);

struct MixedUpdateOptions {
    // 1 reproduces the single linearized step; >1 re-linearizes (iterated filter).
    int relinearizations = 1;
};

// Rectangular update with synchronized and magnitude-only measurements.
UpdateResult mixed_update_rect(const Grid& grid, const StateEstimate& prior, const AffineMap& linear,
                               const AffineMap& magnitude, const MeasurementFrame& frame,
                               const MeasurementCovariances& cov, const MixedUpdateOptions& opts = {});

}  // namespace dsse
