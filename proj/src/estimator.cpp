#include "dsse/estimator.hpp"

#include <cmath>

namespace dsse {

StackedMeasurements stack_measurements(const Grid& grid, const PseudoMeasurements& pseudo,
                                       const MeasurementPlan* plan, const MeasurementFrame* frame,
                                       const CovarianceOptions& opts) {
    if (pseudo.s.size() != grid.num_states()) throw DimensionError("stack_measurements: pseudo size mismatch");
    StackedMeasurements out;
    std::vector<bool> constrained(static_cast<std::size_t>(grid.num_states()), false);
    for (std::size_t k : grid.eps) constrained[k] = true;
    for (std::size_t k = 0; k < constrained.size(); ++k) {
        if (!constrained[k]) out.pseudo_index.push_back(k);
    }
    const auto p = static_cast<Index>(out.pseudo_index.size());
    out.layout.pseudo = p;
    if (frame) {
        if (!plan) throw ConfigError("stack_measurements: frame given without a plan");
        if (static_cast<std::size_t>(frame->linear.size()) != plan->num_linear() ||
            (frame->magnitude.size() != 0 &&
             static_cast<std::size_t>(frame->magnitude.size()) != plan->num_nonlinear())) {
            throw DimensionError("stack_measurements: frame does not match plan");
        }
        out.layout.linear = frame->linear.size();
        out.layout.nonlinear = frame->magnitude.size();
    }
    const Index rows = out.layout.rows();
    out.z.resize(rows);
    out.w = RMatrix::Zero(rows, rows);

    const double s2 = pseudo.sigma * pseudo.sigma;
    for (Index k = 0; k < p; ++k) {
        const cplx s = pseudo.s[static_cast<Index>(out.pseudo_index[static_cast<std::size_t>(k)])];
        out.z[k] = s.real();
        out.z[p + k] = s.imag();
        out.w(k, k) = std::max(opts.floor, s2 * s.real() * s.real());
        out.w(p + k, p + k) = std::max(opts.floor, s2 * s.imag() * s.imag());
    }
    if (frame) {
        const Index m = out.layout.linear;
        const Index base = 2 * p;
        const MeasurementCovariances cov =
            measurement_covariances(plan->sigma_meas, frame->linear, frame->magnitude, opts);
        out.z.segment(base, m) = frame->linear.real();
        out.z.segment(base + m, m) = frame->linear.imag();
        out.w.block(base, base, 2 * m, 2 * m) = cov.rect_linear;
        const Index nl = out.layout.nonlinear;
        out.z.tail(nl) = frame->magnitude;
        out.w.bottomRightCorner(nl, nl) = cov.magnitude.asDiagonal();
    }
    return out;
}

StackedModel::StackedModel(const Grid& grid, std::vector<std::size_t> pseudo_index, AffineMap linear,
                           AffineMap magnitude)
    : grid_(grid),
      pseudo_index_(std::move(pseudo_index)),
      linear_(std::move(linear)),
      magnitude_(std::move(magnitude)) {}

Index StackedModel::size() const {
    return 2 * static_cast<Index>(pseudo_index_.size()) + 2 * linear_.rows() + magnitude_.rows();
}

RVector StackedModel::evaluate(const RVector& v_rect) const {
    const CVector v = unstack_rect(v_rect);
    const auto p = static_cast<Index>(pseudo_index_.size());
    const Index m = linear_.rows();
    RVector h(size());
    if (p > 0) {
        const Injections inj = compute_injections(grid_.adm, grid_.v_source, v);
        for (Index k = 0; k < p; ++k) {
            const cplx s = inj.power[static_cast<Index>(pseudo_index_[static_cast<std::size_t>(k)])];
            h[k] = s.real();
            h[p + k] = s.imag();
        }
    }
    if (m > 0) {
        const CVector w = linear_.evaluate(v);
        h.segment(2 * p, m) = w.real();
        h.segment(2 * p + m, m) = w.imag();
    }
    if (magnitude_.rows() > 0) h.tail(magnitude_.rows()) = eval_nonlinear(magnitude_, v);
    return h;
}

RMatrix StackedModel::jacobian(const RVector& v_rect) const {
    const CVector v = unstack_rect(v_rect);
    const Index n = v.size();
    const auto p = static_cast<Index>(pseudo_index_.size());
    const Index m = linear_.rows();
    RMatrix jac = RMatrix::Zero(size(), 2 * n);
    if (p > 0) {
        // dS = diag(conj I) dV + diag(V) conj(Y_d) conj(dV)
        const CVector current = grid_.adm.yc() * grid_.v_source + grid_.adm.yd() * v;
        for (Index k = 0; k < p; ++k) {
            const auto i = static_cast<Index>(pseudo_index_[static_cast<std::size_t>(k)]);
            const Eigen::RowVectorXcd prow = v[i] * grid_.adm.yd().row(i).conjugate();
            const cplx q = std::conj(current[i]);
            jac.row(k).head(n) = prow.real();
            jac.row(k).tail(n) = prow.imag();
            jac.row(p + k).head(n) = prow.imag();
            jac.row(p + k).tail(n) = -prow.real();
            jac(k, i) += q.real();
            jac(k, n + i) -= q.imag();
            jac(p + k, i) += q.imag();
            jac(p + k, n + i) += q.real();
        }
    }
    if (m > 0) {
        jac.block(2 * p, 0, m, n) = linear_.c.real();
        jac.block(2 * p, n, m, n) = -linear_.c.imag();
        jac.block(2 * p + m, 0, m, n) = linear_.c.imag();
        jac.block(2 * p + m, n, m, n) = linear_.c.real();
    }
    if (magnitude_.rows() > 0) jac.bottomRows(magnitude_.rows()) = nonlinear_jacobian(magnitude_, v_rect, ZeroMagnitude::zero_row);
    return jac;
}

LinearizedModel::LinearizedModel(const MeasurementFunction& model, const RVector& v_lin)
    : v_lin_(v_lin), h0_(model.evaluate(v_lin)), jac_(model.jacobian(v_lin)) {}

namespace {

double weighted_norm2(const RVector& r, const Eigen::LDLT<RMatrix>& w) { return r.dot(w.solve(r)); }

// Count of numerically zero directions of a symmetric PSD matrix.
Index deficient_directions(const RMatrix& g) {
    Eigen::SelfAdjointEigenSolver<RMatrix> es(g, Eigen::EigenvaluesOnly);
    const RVector& ev = es.eigenvalues();
    const double cutoff = 1e-12 * std::max(std::abs(ev.maxCoeff()), 1e-300);
    Index count = 0;
    for (Index i = 0; i < ev.size(); ++i) {
        if (ev[i] <= cutoff) ++count;
    }
    return std::max<Index>(count, 1);
}

Eigen::LLT<RMatrix> factor_normal(const RMatrix& g) {
    Eigen::LLT<RMatrix> llt(g);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
        const Index d = deficient_directions(g);
        throw UnobservableError("normal matrix H^T W^-1 H is singular: " + std::to_string(d) +
                                    " unobservable direction(s)",
                                d);
    }
    return llt;
}

}  // namespace

StateEstimate wls_subspace(const StackedMeasurements& z, const MeasurementFunction& model,
                           const RectSubspaceBasis& basis, const SolverConfig& cfg) {
    cfg.validate();
    if (z.z.size() != model.size() || z.w.rows() != z.z.size()) {
        throw DimensionError("wls_subspace: measurement vector, weights and model disagree");
    }
    const Eigen::LDLT<RMatrix> w_ldlt(z.w);
    if (w_ldlt.info() != Eigen::Success || !w_ldlt.isPositive()) {
        throw NumericalError("wls_subspace: weight covariance W is not positive definite");
    }
    const RMatrix& f = basis.basis;

    StateEstimate est;
    est.rep = Representation::rectangular;
    RVector x = RVector::Zero(basis.dim());
    RVector v = lift(basis, x);
    RVector r = z.z - model.evaluate(v);
    double obj = weighted_norm2(r, w_ldlt);
    est.history.push_back(obj);

    for (int k = 1; k <= cfg.max_iter; ++k) {
        est.iterations = k;
        const RMatrix h = model.jacobian(v) * f;
        const RMatrix wih = w_ldlt.solve(h);
        const RMatrix g = h.transpose() * wih;
        const Eigen::LLT<RMatrix> llt = factor_normal(g);
        const RVector dx = llt.solve(wih.transpose() * r);

        double alpha = 1.0;
        RVector x_new = x + dx;
        RVector v_new = lift(basis, x_new);
        RVector r_new = z.z - model.evaluate(v_new);
        double obj_new = weighted_norm2(r_new, w_ldlt);
        int halvings = 0;
        const double slack = 1e-12 * (1.0 + obj);
        while (cfg.backtracking && !(obj_new <= obj + slack) && halvings < cfg.max_halvings) {
            alpha *= 0.5;
            ++halvings;
            x_new = x + alpha * dx;
            v_new = lift(basis, x_new);
            r_new = z.z - model.evaluate(v_new);
            obj_new = weighted_norm2(r_new, w_ldlt);
        }
        const double step = max_abs(RVector(f * (alpha * dx))) / std::max(max_abs(v_new), 1e-300);
        if (cfg.backtracking && !(obj_new <= obj + slack)) {
            // no descent along the Newton direction: we are at the numerical minimum
            est.converged = max_abs(RVector(f * dx)) / std::max(max_abs(v), 1e-300) < std::sqrt(cfg.tol);
            break;
        }
        x = x_new;
        v = v_new;
        r = r_new;
        obj = obj_new;
        est.history.push_back(obj);
        if (!v.allFinite()) break;
        if (step < cfg.tol) {
            est.converged = true;
            break;
        }
    }

    const RMatrix h = model.jacobian(v) * f;
    const RMatrix g = h.transpose() * w_ldlt.solve(h);
    const Eigen::LLT<RMatrix> llt = factor_normal(g);
    const RMatrix g_inv = llt.solve(RMatrix::Identity(g.rows(), g.cols()));
    est.v = unstack_rect(v);
    est.cov_rect = f * g_inv * f.transpose();
    est.cov_rect = (0.5 * (est.cov_rect + est.cov_rect.transpose())).eval();
    return est;
}

namespace {

void check_prior(const Grid& grid, const StateEstimate& prior) {
    if (prior.v.size() != grid.num_states()) throw DimensionError("prior has wrong dimension");
    const double res = grid.feasibility(prior.v);
    if (!(res < 1e-6)) {
        throw ValidationError("prior violates the zero-injection constraints (residual " +
                              std::to_string(res) + ")");
    }
}

// rcond() ignores exactly zero pivots, so look at D as well
template <typename Matrix>
bool positive_definite(const Eigen::LDLT<Matrix>& ldlt) {
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const RVector d = ldlt.vectorD().real();
    if (d.size() > 0 && !(d.minCoeff() > 1e-15 * d.cwiseAbs().maxCoeff())) return false;
    return ldlt.rcond() > 1e-15;
}

template <typename Matrix>
Eigen::LDLT<Matrix> factor_innovation(Matrix& s, UpdateResult& out) {
    Eigen::LDLT<Matrix> ldlt(s);
    if (positive_definite(ldlt)) return ldlt;
    const double jitter = 1e-12 * std::abs(s.trace()) / static_cast<double>(std::max<Index>(s.rows(), 1));
    s.diagonal().array() += jitter;
    out.jitter = jitter;
    out.warnings.push_back("innovation covariance near singular; added jitter " + std::to_string(jitter));
    ldlt.compute(s);
    if (ldlt.info() != Eigen::Success) throw NumericalError("innovation covariance is singular");
    return ldlt;
}

}  // namespace

UpdateResult linear_update_complex(const Grid& grid, const StateEstimate& prior, const AffineMap& c,
                                   const CVector& z, const RVector& meas_var) {
    check_prior(grid, prior);
    if (z.size() != c.rows() || meas_var.size() != c.rows()) {
        throw DimensionError("linear_update_complex: measurement sizes disagree");
    }
    UpdateResult out;
    const CMatrix sigma = prior.complex_covariance();
    const CMatrix p = sigma * c.c.adjoint();  // Sigma C^*
    out.innovation = z - c.evaluate(prior.v);
    out.innovation_cov = c.c * p;
    out.innovation_cov.diagonal() += meas_var.cast<cplx>();
    out.innovation_cov = (0.5 * (out.innovation_cov + out.innovation_cov.adjoint())).eval();
    const auto ldlt = factor_innovation(out.innovation_cov, out);
    out.gain = ldlt.solve(CMatrix(p.adjoint())).adjoint();

    StateEstimate& post = out.posterior;
    post.rep = Representation::complex;
    post.v = prior.v + out.gain * out.innovation;
    const CMatrix kcs = out.gain * p.adjoint();  // K C Sigma
    post.cov = sigma + out.gain * out.innovation_cov * out.gain.adjoint() - kcs - kcs.adjoint();
    post.cov = (0.5 * (post.cov + post.cov.adjoint())).eval();
    post.feasibility = grid.feasibility(post.v);
    post.iterations = 1;
    post.converged = true;
    return out;
}

UpdateResult subspace_wls_update(const Grid& grid, const StateEstimate& prior, const AffineMap& c,
                                 const CVector& z, const RVector& meas_var) {
    check_prior(grid, prior);
    if (z.size() != c.rows() || meas_var.size() != c.rows()) {
        throw DimensionError("subspace_wls_update: measurement sizes disagree");
    }
    const CMatrix& f = grid.basis.basis;
    const CMatrix sigma = prior.complex_covariance();
    const CVector x_prior = project(grid.basis, prior.v);
    CMatrix sigma_x = f.adjoint() * sigma * f;
    sigma_x = (0.5 * (sigma_x + sigma_x.adjoint())).eval();
    const Eigen::LDLT<CMatrix> sx(sigma_x);
    if (!positive_definite(sx)) {
        throw NumericalError("prior covariance is singular on the feasible subspace");
    }
    const CMatrix cf = c.c * f;
    const RVector r_inv = meas_var.cwiseInverse();
    CMatrix info = sx.solve(CMatrix::Identity(f.cols(), f.cols()));
    info += cf.adjoint() * r_inv.cast<cplx>().asDiagonal() * cf;
    info = (0.5 * (info + info.adjoint())).eval();
    const CVector rhs = sx.solve(x_prior) +
                        cf.adjoint() * r_inv.cast<cplx>().asDiagonal() * (z - c.d - c.c * grid.basis.particular);
    const Eigen::LDLT<CMatrix> a(info);
    if (a.info() != Eigen::Success) throw NumericalError("subspace update information matrix is singular");

    UpdateResult out;
    out.innovation = z - c.evaluate(prior.v);
    StateEstimate& post = out.posterior;
    post.rep = Representation::complex;
    post.v = lift(grid.basis, CVector(a.solve(rhs)));
    post.cov = f * a.solve(CMatrix::Identity(f.cols(), f.cols())) * f.adjoint();
    post.cov = (0.5 * (post.cov + post.cov.adjoint())).eval();
    post.feasibility = grid.feasibility(post.v);
    post.iterations = 1;
    post.converged = true;
    return out;
}

UpdateResult mixed_update_rect(const Grid& grid, const StateEstimate& prior, const AffineMap& linear,
                               const AffineMap& magnitude, const MeasurementFrame& frame,
                               const MeasurementCovariances& cov, const MixedUpdateOptions& opts) {
    check_prior(grid, prior);
    if (prior.rep != Representation::rectangular) {
        throw ValidationError("mixed_update_rect needs a prior with rectangular covariance");
    }
    const Index m = linear.rows();
    const Index nl = magnitude.rows();
    if (frame.linear.size() != m || frame.magnitude.size() != nl || cov.rect_linear.rows() != 2 * m ||
        cov.magnitude.size() != nl) {
        throw DimensionError("mixed_update_rect: frame, maps and covariances disagree");
    }
    const Index n = grid.num_states();
    const RMatrix& sigma = prior.cov_rect;
    const RVector x_prior = prior.v_rect();

    RVector z(2 * m + nl);
    z << frame.linear.real(), frame.linear.imag(), frame.magnitude;
    RMatrix r = RMatrix::Zero(2 * m + nl, 2 * m + nl);
    r.topLeftCorner(2 * m, 2 * m) = cov.rect_linear;
    r.bottomRightCorner(nl, nl) = cov.magnitude.asDiagonal();

    const RMatrix c_lin = m > 0 ? realify(linear.c) : RMatrix(0, 2 * n);
    auto evaluate = [&](const RVector& x) {
        const CVector v = unstack_rect(x);
        RVector h(2 * m + nl);
        if (m > 0) h.head(2 * m) = stack_rect(linear.evaluate(v));
        if (nl > 0) h.tail(nl) = eval_nonlinear(magnitude, v);
        return h;
    };
    auto jacobian = [&](const RVector& x) {
        RMatrix c(2 * m + nl, 2 * n);
        if (m > 0) c.topRows(2 * m) = c_lin;
        if (nl > 0) c.bottomRows(nl) = nonlinear_jacobian(magnitude, x);
        return c;
    };

    UpdateResult out;
    const RVector h_prior = evaluate(x_prior);
    out.innovation_rect = z - h_prior;
    RVector x = x_prior;
    RMatrix c;
    RMatrix sct;
    const int passes = std::max(1, opts.relinearizations);
    for (int it = 0; it < passes; ++it) {
        c = jacobian(x);
        sct = sigma * c.transpose();
        out.innovation_cov_rect = c * sct + r;
        out.innovation_cov_rect = (0.5 * (out.innovation_cov_rect + out.innovation_cov_rect.transpose())).eval();
        const auto ldlt = factor_innovation(out.innovation_cov_rect, out);
        out.gain_rect = ldlt.solve(RMatrix(sct.transpose())).transpose();
        const RVector correction = z - evaluate(x) - c * (x_prior - x);
        const RVector x_next = x_prior + out.gain_rect * correction;
        const bool settled = max_abs(RVector(x_next - x)) <= 1e-12 * std::max(1.0, max_abs(x_next));
        x = x_next;
        if (it > 0 && settled) break;
    }

    StateEstimate& post = out.posterior;
    post.rep = Representation::rectangular;
    post.v = unstack_rect(x);
    const RMatrix kcs = out.gain_rect * sct.transpose();  // K C Sigma
    post.cov_rect = out.gain_rect * out.innovation_cov_rect * out.gain_rect.transpose() + sigma - kcs -
                    kcs.transpose();
    post.cov_rect = (0.5 * (post.cov_rect + post.cov_rect.transpose())).eval();
    post.feasibility = grid.feasibility(post.v);
    post.iterations = passes;
    post.converged = true;
    return out;
}

}  // namespace dsse
