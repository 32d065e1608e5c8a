#include "dsse/prior.hpp"

#include "dsse/estimator.hpp"

namespace dsse {

CMatrix StateEstimate::complex_covariance() const {
    return rep == Representation::complex ? cov : complexify_covariance(cov_rect);
}

RVector StateEstimate::std_dev() const {
    if (rep == Representation::complex) return cov.diagonal().real().cwiseMax(0.0).cwiseSqrt();
    const Index n = v.size();
    RVector var = cov_rect.diagonal().head(n) + cov_rect.diagonal().tail(n);
    return var.cwiseMax(0.0).cwiseSqrt();
}

void SolverConfig::validate() const {
    if (!(tol > 0.0)) throw ConfigError("solver tol must be positive");
    if (max_iter < 1) throw ConfigError("solver max_iter must be at least 1");
}

namespace {

void check_pseudo(const PseudoMeasurements& s, const Grid& grid) {
    if (s.s.size() != grid.num_states()) {
        throw DimensionError("pseudo-measurements have " + std::to_string(s.s.size()) +
                             " entries, network has " + std::to_string(grid.num_states()));
    }
    for (std::size_t k : grid.eps) {
        if (s.s[static_cast<Index>(k)] != cplx(0.0)) {
            throw ValidationError("pseudo load on zero-injection state " + std::to_string(k) + " must be 0");
        }
    }
}

double relative_step(double step, double scale) { return step / std::max(scale, 1e-300); }

}  // namespace

StateEstimate fixed_point_power_flow(const PseudoMeasurements& s, const Grid& grid, const SolverConfig& cfg) {
    cfg.validate();
    check_pseudo(s, grid);
    const CVector conj_s = s.s.conjugate();

    StateEstimate est;
    est.rep = Representation::complex;
    CVector v = grid.v0;
    if (cfg.record_iterates) est.iterates.push_back(v);
    for (int k = 1; k <= cfg.max_iter; ++k) {
        const CVector next = grid.adm.solve_yd(CVector(conj_s.cwiseQuotient(v.conjugate()))) + grid.v0;
        const double step = relative_step(max_abs(CVector(next - v)), max_abs(next));
        v = next;
        est.iterations = k;
        est.history.push_back(grid.feasibility(v));
        if (cfg.record_iterates) est.iterates.push_back(v);
        if (!v.allFinite()) break;
        if (step < cfg.tol) {
            est.converged = true;
            break;
        }
    }
    est.v = v;
    est.feasibility = grid.feasibility(v);

    const CVector& lin = cfg.covariance_at_solution && v.allFinite() ? v : grid.v0;
    // A = Y_d^-1 diag(conj V)^-1; Sigma = A Sigma_S A^*
    CMatrix a = grid.adm.solve_yd(CMatrix(lin.conjugate().cwiseInverse().asDiagonal()));
    const RVector var = s.variance();
    est.cov = a * var.asDiagonal() * a.adjoint();
    est.cov = (0.5 * (est.cov + est.cov.adjoint())).eval();
    return est;
}

namespace {

// diag([|V|^2; |V|^2])^-1 [diag Re V, diag Im V; diag Im V, -diag Re V]
RMatrix rect_load_map(const CVector& v) {
    const Index n = v.size();
    RMatrix m = RMatrix::Zero(2 * n, 2 * n);
    for (Index i = 0; i < n; ++i) {
        const double inv = 1.0 / std::norm(v[i]);
        m(i, i) = v[i].real() * inv;
        m(i, n + i) = v[i].imag() * inv;
        m(n + i, i) = v[i].imag() * inv;
        m(n + i, n + i) = -v[i].real() * inv;
    }
    return m;
}

RVector apply_rect_load_map(const CVector& v, const RVector& s_rect) {
    const Index n = v.size();
    RVector out(2 * n);
    for (Index i = 0; i < n; ++i) {
        const double inv = 1.0 / std::norm(v[i]);
        const double sr = s_rect[i];
        const double si = s_rect[n + i];
        out[i] = (v[i].real() * sr + v[i].imag() * si) * inv;
        out[n + i] = (v[i].imag() * sr - v[i].real() * si) * inv;
    }
    return out;
}

}  // namespace

StateEstimate rect_fixed_point_power_flow(const PseudoMeasurements& s, const Grid& grid,
                                          const SolverConfig& cfg) {
    cfg.validate();
    check_pseudo(s, grid);
    const RVector s_rect = stack_rect(s.s);
    const RVector v0_rect = stack_rect(grid.v0);

    StateEstimate est;
    est.rep = Representation::rectangular;
    RVector v = v0_rect;
    if (cfg.record_iterates) est.iterates.push_back(unstack_rect(v));
    for (int k = 1; k <= cfg.max_iter; ++k) {
        const RVector next = grid.yd_rect_lu.solve(apply_rect_load_map(unstack_rect(v), s_rect)) + v0_rect;
        const double step = relative_step(max_abs(RVector(next - v)), max_abs(next));
        v = next;
        est.iterations = k;
        est.history.push_back(grid.feasibility(unstack_rect(v)));
        if (cfg.record_iterates) est.iterates.push_back(unstack_rect(v));
        if (!v.allFinite()) break;
        if (step < cfg.tol) {
            est.converged = true;
            break;
        }
    }
    est.v = unstack_rect(v);
    est.feasibility = grid.feasibility(est.v);

    const CVector& lin = cfg.covariance_at_solution && v.allFinite() ? est.v : grid.v0;
    const RMatrix b0 = grid.yd_rect_lu.solve(rect_load_map(lin));
    est.cov_rect = b0 * s.rect_variance().asDiagonal() * b0.transpose();
    est.cov_rect = (0.5 * (est.cov_rect + est.cov_rect.transpose())).eval();
    return est;
}

StateEstimate wls_prior(const PseudoMeasurements& pseudo, const Grid& grid, const SolverConfig& cfg) {
    check_pseudo(pseudo, grid);
    const StackedMeasurements z = stack_measurements(grid, pseudo, nullptr, nullptr);
    const StackedModel model(grid, z.pseudo_index, AffineMap{}, AffineMap{});
    StateEstimate est = wls_subspace(z, model, grid.rect_basis, cfg);
    est.feasibility = grid.feasibility(est.v);
    return est;
}

}  // namespace dsse
