#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dsse/grid.hpp"
#include "dsse/measurement.hpp"
#include "dsse/prior.hpp"

namespace testing_util {

using namespace dsse;

inline std::filesystem::path data_dir() { return DSSE_DATA_DIR; }

inline std::shared_ptr<const Grid> toy_grid() {
    static auto g = make_grid(load_network(data_dir() / "toy.json"));
    return g;
}

inline std::shared_ptr<const Grid> ieee_grid() {
    static auto g = make_grid(load_network(data_dir() / "ieee123.json"));
    return g;
}

// Source S plus one single-phase bus A, z = 0.01 + 0.05j.
inline NetworkModel two_bus(cplx z = {0.01, 0.05}, cplx load = {0.0, 0.0}) {
    NetworkModel net;
    net.source_bus = "S";
    net.buses.push_back(Bus{"S", PhaseSet::all(), {}, {}});
    Bus a{"A", PhaseSet::parse("a"), {}, {}};
    a.base_load[0] = load;
    net.buses.push_back(a);
    LineSpec l{"S", "A", PhaseSet::parse("a"), CMatrix::Constant(1, 1, z)};
    net.lines.push_back(l);
    return net;
}

inline CVector random_cvector(Index n, std::mt19937_64& gen, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    CVector v(n);
    for (Index i = 0; i < n; ++i) v[i] = cplx(d(gen), d(gen));
    return v;
}

// Random feasible voltage near the no-load point.
inline CVector random_feasible(const Grid& g, std::mt19937_64& gen, double scale = 0.05) {
    return lift(g.basis, random_cvector(g.basis.dim(), gen, scale));
}

// Random Hermitian PD covariance supported on the feasible subspace: F A A^* F^*.
inline CMatrix random_feasible_cov(const Grid& g, std::mt19937_64& gen, double scale = 1e-3) {
    const Index d = g.basis.dim();
    CMatrix a(d, d);
    for (Index c = 0; c < d; ++c) a.col(c) = random_cvector(d, gen, scale);
    a += scale * CMatrix::Identity(d, d);
    return g.basis.basis * (a * a.adjoint()) * g.basis.basis.adjoint();
}

inline double max_abs_diff(const CVector& a, const CVector& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline double min_eig(const CMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double min_eig(const RMatrix& m) {
    Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Full Y assembled from line primitives, ordering source phases first then
// buses in file order, a-b-c within a bus. Independent of build_admittance.
struct OracleY {
    CMatrix y;
    std::vector<std::pair<std::string, int>> order;
    int index(const std::string& bus, int phase) const {
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (order[i].first == bus && order[i].second == phase) return static_cast<int>(i);
        }
        return -1;
    }
};

inline OracleY oracle_admittance(const NetworkModel& net) {
    OracleY o;
    for (int p = 0; p < 3; ++p) o.order.emplace_back(net.source_bus, p);
    for (const Bus& b : net.buses) {
        if (b.id == net.source_bus) continue;
        for (int p = 0; p < 3; ++p) {
            if (b.phases.contains(static_cast<Phase>(p))) o.order.emplace_back(b.id, p);
        }
    }
    const auto n = static_cast<Index>(o.order.size());
    o.y = CMatrix::Zero(n, n);
    for (const LineSpec& l : net.lines) {
        const CMatrix prim = l.z.fullPivLu().inverse();
        std::vector<int> ph;
        for (int p = 0; p < 3; ++p) {
            if (l.phases.contains(static_cast<Phase>(p))) ph.push_back(p);
        }
        for (std::size_t r = 0; r < ph.size(); ++r) {
            for (std::size_t c = 0; c < ph.size(); ++c) {
                const cplx y = 0.5 * (prim(static_cast<Index>(r), static_cast<Index>(c)) +
                                      prim(static_cast<Index>(c), static_cast<Index>(r)));
                const int fr = o.index(l.from, ph[r]), fc = o.index(l.from, ph[c]);
                const int tr = o.index(l.to, ph[r]), tc = o.index(l.to, ph[c]);
                o.y(fr, fc) += y;
                o.y(tr, tc) += y;
                o.y(fr, tc) -= y;
                o.y(tr, fc) -= y;
            }
        }
    }
    return o;
}

// Newton-Raphson on S(V) = s in real coordinates with a finite-difference
// Jacobian; zero-injection entries are just s = 0 rows. Independent of the
// fixed-point solver.
inline CVector oracle_power_flow(const Grid& g, const CVector& s, int iters = 30) {
    const OracleY o = oracle_admittance(g.network);
    const Index n = g.num_states();
    CVector vs(3);
    for (int p = 0; p < 3; ++p) vs[p] = g.network.v_source[static_cast<std::size_t>(p)];
    auto mismatch = [&](const RVector& x) {
        CVector full(n + 3);
        full.head(3) = vs;
        for (Index i = 0; i < n; ++i) full[3 + i] = cplx(x[i], x[n + i]);
        const CVector cur = o.y * full;
        RVector f(2 * n);
        for (Index i = 0; i < n; ++i) {
            const cplx si = full[3 + i] * std::conj(cur[3 + i]) - s[i];
            f[i] = si.real();
            f[n + i] = si.imag();
        }
        return f;
    };
    RVector x(2 * n);
    x << g.v0.real(), g.v0.imag();
    for (int it = 0; it < iters; ++it) {
        const RVector f = mismatch(x);
        if (f.cwiseAbs().maxCoeff() < 1e-13) break;
        RMatrix jac(2 * n, 2 * n);
        const double h = 1e-7;
        for (Index k = 0; k < 2 * n; ++k) {
            RVector xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            jac.col(k) = (mismatch(xp) - mismatch(xm)) / (2 * h);
        }
        x -= jac.fullPivLu().solve(f);
    }
    CVector v(n);
    for (Index i = 0; i < n; ++i) v[i] = cplx(x[i], x[n + i]);
    return v;
}

}  // namespace testing_util
