#include <gtest/gtest.h>

#include "common.hpp"

using namespace dsse;
using namespace testing_util;

namespace {

// source - A - B single-phase chain with equal lines; A is a no-load bus
NetworkModel chain3(cplx z = {0.01, 0.03}) {
    NetworkModel net = two_bus(z);
    net.buses[1].zero_injection = PhaseSet::parse("a");
    Bus b{"B", PhaseSet::parse("a"), {}, {}};
    b.base_load[0] = {-0.1, -0.05};
    net.buses.push_back(b);
    net.lines.push_back({"A", "B", PhaseSet::parse("a"), CMatrix::Constant(1, 1, z)});
    return net;
}

double matrix_inf_norm(const CMatrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }
double matrix_inf_norm(const RMatrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

// Orthogonal projector onto the real span of the realified complex basis.
RMatrix realified_projector(const CMatrix& f) {
    const RMatrix fr = realify(f);  // columns [Re; Im] of F and of jF
    return fr * fr.transpose();
}

}  // namespace

TEST(Subspace, UnconstrainedIsIdentity) {
    const AdmittanceBlocks adm = build_admittance(toy_grid()->network);
    const std::vector<std::size_t> none;
    const CVector v0 = no_load_voltage(adm, source_vector(toy_grid()->network));
    EXPECT_EQ(complex_kernel_basis(adm, none, v0).basis, CMatrix::Identity(adm.num_states(), adm.num_states()));
    EXPECT_EQ(rect_kernel_basis(adm, none, v0).basis,
              RMatrix::Identity(2 * adm.num_states(), 2 * adm.num_states()));
}

TEST(Subspace, ThreeBusChainAnalyticKernel) {
    const auto g = make_grid(chain3());
    ASSERT_EQ(g->eps.size(), 1u);
    ASSERT_EQ(g->basis.dim(), 1);
    CVector expected(2);
    expected << 1.0, 2.0;
    expected /= std::sqrt(5.0);
    // unique up to a unit phase factor: compare projectors
    const CMatrix p = g->basis.basis * g->basis.basis.adjoint();
    const CMatrix pe = expected * expected.adjoint();
    EXPECT_LT((p - pe).cwiseAbs().maxCoeff(), 1e-12);

    // rectangular basis spans the realification of the complex one
    EXPECT_LT((g->rect_basis.basis * g->rect_basis.basis.transpose() - realified_projector(g->basis.basis))
                  .norm(),
              1e-8);
}

TEST(Subspace, InvariantsOnFeeders) {
    for (const auto& g : {toy_grid(), ieee_grid()}) {
        const CMatrix rows = constrained_rows(g->adm, g->eps);
        const Index n = g->num_states();
        const auto e = static_cast<Index>(g->eps.size());
        EXPECT_EQ(g->basis.dim(), n - e);
        EXPECT_EQ(g->rect_basis.dim(), 2 * (n - e));
        EXPECT_LT(matrix_inf_norm(CMatrix(rows * g->basis.basis)), 1e-10);
        EXPECT_LT((g->basis.basis.adjoint() * g->basis.basis - CMatrix::Identity(n - e, n - e)).cwiseAbs().maxCoeff(),
                  1e-12);
        EXPECT_LT(matrix_inf_norm(RMatrix(realify(rows) * g->rect_basis.basis)), 1e-10);
        const RMatrix ft = g->rect_basis.basis;
        EXPECT_LT((ft.transpose() * ft - RMatrix::Identity(ft.cols(), ft.cols())).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((ft * ft.transpose() - realified_projector(g->basis.basis)).norm(), 1e-8);
    }
}

// Oracle: kernel from a full-pivot LU, orthonormalized by QR. Projectors must agree.
TEST(Subspace, MatchesLuKernelOracle) {
    const auto g = ieee_grid();
    const CMatrix rows = constrained_rows(g->adm, g->eps);
    const CMatrix k = rows.fullPivLu().kernel();
    ASSERT_EQ(k.cols(), g->basis.dim());
    const Eigen::HouseholderQR<CMatrix> qr(k);
    const CMatrix q = qr.householderQ() * CMatrix::Identity(k.rows(), k.cols());
    EXPECT_LT((q * q.adjoint() - g->basis.basis * g->basis.basis.adjoint()).norm(), 1e-8);
}

TEST(Subspace, RandomConstraintSetsStayOrthonormal) {
    const auto g = ieee_grid();
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::size_t> eps;
        std::bernoulli_distribution pick(0.3);
        for (Index k = 0; k < g->num_states(); ++k) {
            if (pick(gen)) eps.push_back(static_cast<std::size_t>(k));
        }
        const RectSubspaceBasis b = rect_kernel_basis(g->adm, eps, g->v0);
        EXPECT_LT((b.basis.transpose() * b.basis - RMatrix::Identity(b.dim(), b.dim())).cwiseAbs().maxCoeff(),
                  1e-12);
        EXPECT_EQ(b.dim(), 2 * (g->num_states() - static_cast<Index>(eps.size())));
    }
}

TEST(Subspace, RankDeficientConstraintsRejected) {
    const auto g = toy_grid();
    std::vector<std::size_t> eps = g->eps;
    eps.push_back(eps.front());  // duplicated row
    EXPECT_THROW(complex_kernel_basis(g->adm, eps, g->v0), NumericalError);
    EXPECT_THROW(rect_kernel_basis(g->adm, eps, g->v0), NumericalError);
}

TEST(Subspace, LiftProject) {
    std::mt19937_64 gen(11);
    for (const auto& g : {toy_grid(), ieee_grid()}) {
        EXPECT_LT(max_abs_diff(lift(g->basis, CVector::Zero(g->basis.dim())), g->v0), 1e-15);
        EXPECT_LT(project(g->basis, g->v0).cwiseAbs().maxCoeff(), 1e-15);
        for (int t = 0; t < 10; ++t) {
            const CVector x = random_cvector(g->basis.dim(), gen, 0.1);
            const CVector v = lift(g->basis, x);
            EXPECT_LT(g->feasibility(v), 1e-9);
            EXPECT_LT(max_abs_diff(project(g->basis, v), x), 1e-12);
            EXPECT_LT(max_abs_diff(lift(g->basis, project(g->basis, v)), v), 1e-10);

            const RVector xr = RVector::Random(g->rect_basis.dim()) * 0.1;
            const RVector vr = lift(g->rect_basis, xr);
            EXPECT_LT(g->feasibility(unstack_rect(vr)), 1e-9);
            EXPECT_LT((project(g->rect_basis, vr) - xr).cwiseAbs().maxCoeff(), 1e-12);
        }
        EXPECT_THROW(lift(g->basis, CVector::Zero(g->basis.dim() + 1)), DimensionError);
    }
}

// Oracle: nearest point of {V : A V = b} is V - A^* (A A^*)^-1 (A V - b).
TEST(Subspace, ProjectionIsNearestFeasiblePoint) {
    const auto g = toy_grid();
    std::mt19937_64 gen(3);
    const CMatrix a = constrained_rows(g->adm, g->eps);
    CVector b(static_cast<Index>(g->eps.size()));
    for (std::size_t r = 0; r < g->eps.size(); ++r) {
        b[static_cast<Index>(r)] = -(g->adm.yc().row(static_cast<Index>(g->eps[r])) * g->v_source)(0);
    }
    for (int t = 0; t < 10; ++t) {
        const CVector v = g->v0 + random_cvector(g->num_states(), gen, 0.1);
        const CVector oracle = v - a.adjoint() * (a * a.adjoint()).ldlt().solve(a * v - b);
        EXPECT_LT(max_abs_diff(lift(g->basis, project(g->basis, v)), oracle), 1e-10);
    }
}

TEST(Subspace, FeasibilityResidual) {
    const auto g = toy_grid();
    EXPECT_LT(g->feasibility(g->v0), 1e-12);
    const std::size_t k = g->eps.front();
    CVector v = g->v0;
    v[static_cast<Index>(k)] += 1.0;
    // only column k moves: residual is the largest |(Y_d)_{eps,k}|
    double expected = 0.0;
    for (std::size_t r : g->eps) expected = std::max(expected, std::abs(g->adm.yd()(static_cast<Index>(r), static_cast<Index>(k))));
    EXPECT_NEAR(g->feasibility(v), expected, 1e-12 * expected);
}
