#include "dsse/types.hpp"

namespace dsse {

RMatrix realify(const CMatrix& a) {
    const Index r = a.rows();
    const Index c = a.cols();
    RMatrix out(2 * r, 2 * c);
    out.topLeftCorner(r, c) = a.real();
    out.topRightCorner(r, c) = -a.imag();
    out.bottomLeftCorner(r, c) = a.imag();
    out.bottomRightCorner(r, c) = a.real();
    return out;
}

RVector stack_rect(const CVector& v) {
    RVector out(2 * v.size());
    out.head(v.size()) = v.real();
    out.tail(v.size()) = v.imag();
    return out;
}

CVector unstack_rect(const RVector& v) {
    if (v.size() % 2 != 0) {
        throw DimensionError("rectangular vector has odd length " + std::to_string(v.size()));
    }
    const Index n = v.size() / 2;
    CVector out(n);
    for (Index i = 0; i < n; ++i) {
        out[i] = cplx(v[i], v[n + i]);
    }
    return out;
}

CMatrix complexify_covariance(const RMatrix& cov_rect) {
    const Index n = cov_rect.rows() / 2;
    const RMatrix rr = cov_rect.topLeftCorner(n, n);
    const RMatrix ii = cov_rect.bottomRightCorner(n, n);
    const RMatrix ri = cov_rect.topRightCorner(n, n);
    CMatrix out(n, n);
    out.real() = rr + ii;
    out.imag() = ri.transpose() - ri;
    return out;
}

double max_abs(const CVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }
double max_abs(const RVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace dsse
