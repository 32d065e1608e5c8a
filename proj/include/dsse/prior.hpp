#pragma once

#include <vector>

#include "dsse/grid.hpp"
#include "dsse/measurement.hpp"

namespace dsse {

enum class Representation { complex, rectangular };

// A voltage estimate with its estimation-error covariance. `cov` is filled for
// complex estimates (N x N Hermitian), `cov_rect` for rectangular ones
// (2N x 2N symmetric, layout [Re; Im]).
struct StateEstimate {
    CVector v;
    Representation rep = Representation::complex;
    CMatrix cov;
    RMatrix cov_rect;
    double feasibility = 0.0;
    int iterations = 0;
    bool converged = false;
    // Feasibility residual per iterate for the fixed-point solvers, objective per
    // accepted step for Newton-WLS.
    std::vector<double> history;
    std::vector<CVector> iterates;  // only with SolverConfig::record_iterates

    RVector v_rect() const { return stack_rect(v); }
    // Complex covariance regardless of representation.
    CMatrix complex_covariance() const;
    // Per-entry standard deviation of the complex voltage error.
    RVector std_dev() const;
};

struct SolverConfig {
    double tol = 1e-8;  // relative infinity-norm step
    int max_iter = 50;
    bool backtracking = true;
    int max_halvings = 20;
    // Linearize the prior covariance at the converged point instead of at V0.
    bool covariance_at_solution = false;
    bool record_iterates = false;

    void validate() const;
};

// V_{k+1} = Y_d^{-1} diag(conj V_k)^{-1} conj(s) + V0, flat start at V0.
// Covariance: Y_d^{-1} diag(conj V0)^{-1} Sigma_S diag(V0)^{-1} Y_d^{-*}.
StateEstimate fixed_point_power_flow(const PseudoMeasurements& s, const Grid& grid,
                                     const SolverConfig& cfg = {});

// Same iteration in real variables, V_rect,{k+1} = B_k [Re s; Im s] + V_rect,0,
// with covariance B_0 sigma^2 diag([Re s^2; Im s^2]) B_0^T.
StateEstimate rect_fixed_point_power_flow(const PseudoMeasurements& s, const Grid& grid,
                                          const SolverConfig& cfg = {});

// Subspace Newton-WLS on the pseudo-measurements alone.
StateEstimate wls_prior(const PseudoMeasurements& pseudo, const Grid& grid,
                        const SolverConfig& cfg = {});

}  // namespace dsse
