#include <dcstab/eigenmodes.hpp>
#include <dcstab/fixtures.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace dcstab;

namespace {

std::mt19937_64 rng(4242);

double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

// s^3 + (tau R + 2 zeta wn) s^2 + (wn^2 + K + R) s + K / tau_i
Poly two_bus_cubic(const TwoBusParams& p, double K) {
    return Poly{K / p.tau_i, p.wn * p.wn + K + p.R(), p.tau * p.R() + 2 * p.zeta * p.wn, 1.0};
}

NetworkGraph pi_fixture(bool mesh) {
    FixtureOptions o;
    o.controller = Controller::pi;
    return mesh ? mesh8(o) : radial10(o);
}

NetworkGraph two_bus_at(const TwoBusParams& p, double K) {
    NetworkGraph net = two_bus(p);
    std::get<RegulatedLoad>(net.buses[1].devices[0]).comp.K = K;
    return net;
}

void expect_conjugate_closed(const std::vector<cplx>& z, double tol) {
    for (const auto& r : z) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : z) best = std::min(best, std::abs(q - std::conj(r)));
        EXPECT_LE(best, tol * std::max(1.0, std::abs(r))) << r;
    }
}

double nearest(const std::vector<cplx>& z, cplx r) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : z) best = std::min(best, std::abs(q - r));
    return best;
}

}  // namespace

TEST(CharPoly, TwoBusCubic) {
    const TwoBusParams p;
    for (double alpha : {0.0, 0.5, 1.0, 1.7}) {
        const Poly c = char_poly(two_bus(p), alpha);
        // with the integrator open the cubic loses its root at s = 0
        const Poly cubic = two_bus_cubic(p, alpha * p.K_hat());
        const Poly e = alpha == 0.0 ? Poly{cubic[1], cubic[2], cubic[3]} : cubic;
        ASSERT_EQ(c.degree(), e.degree());
        for (size_t k = 0; k <= static_cast<size_t>(e.degree()); ++k)
            EXPECT_NEAR(c[k], e[k], 1e-9 * std::max(1.0, std::abs(e[k]))) << "alpha " << alpha << " k " << k;
    }
}

TEST(CharPoly, FixtureDegrees) {
    EXPECT_EQ(char_poly(radial10(), 1.0).degree(), 54);
    EXPECT_EQ(char_poly(mesh8(), 1.0).degree(), 40);
    EXPECT_EQ(char_poly(pi_fixture(false), 1.0).degree(), 45);
    EXPECT_EQ(char_poly(pi_fixture(true), 1.0).degree(), 34);
}

// p(s) / (prod d_e(s) det Y(s)) is one constant; coefficients are faithful on and outside the
// sampling circle (inside it the modes are refined on the pointwise determinant instead)
TEST(CharPoly, RatioToClearedDeterminantIsConstant) {
    for (const auto& net : {two_bus(), mesh8(), radial10()}) {
        const double alpha = 2.0;
        CharPolyInfo ci;
        const Poly p = char_poly(net, alpha, &ci);
        const auto els = rational_elements(net, alpha);
        cplx ref(0.0);
        for (double r : {1.0, 1.3, 2.0})
            for (double th : {0.4, 1.1, 2.9}) {
                const cplx s = std::polar(r * ci.radius, th);
                cplx f = detail::assemble(els, net.size(), s).determinant();
                for (const auto& e : els) f *= e.y.den()(s);
                const cplx ratio = p(s) / f;
                if (ref == cplx(0.0)) ref = ratio;
                EXPECT_LT(std::abs(ratio - ref) / std::abs(ref), 1e-8) << "n " << net.size() << " r " << r;
            }
        EXPECT_LT(std::abs(ref.imag()), 1e-8 * std::abs(ref));
    }
}

TEST(Eigenmodes, TwoBusMatchesCubicRoots) {
    const TwoBusParams p;
    for (double alpha : {0.2, 0.9, 1.3}) {
        const EigenResult r = eigenmodes(two_bus(p), alpha);
        ASSERT_EQ(r.modes.size(), 3u);
        const Poly c = two_bus_cubic(p, alpha * p.K_hat());
        for (const auto& z : r.modes) {
            // backward error of the cubic at each returned mode
            double scale = 0.0;
            for (size_t k = 0; k <= 3; ++k) scale += std::abs(c[k]) * std::pow(std::abs(z), double(k));
            EXPECT_LT(std::abs(c(z)) / scale, 1e-12);
        }
    }
}

TEST(Eigenmodes, TwoBusMarginalPairOnAxis) {
    const TwoBusParams p;
    const double w_hat = std::sqrt(p.wn * p.wn + p.K_hat() + p.R());
    EXPECT_NEAR(w_hat, 7.826, 1e-3);
    const EigenResult r = eigenmodes(two_bus(p), 1.0);
    ASSERT_GE(r.modes.size(), 2u);
    EXPECT_LT(std::abs(r.modes[0].real()), 1e-3 * w_hat);
    EXPECT_NEAR(std::abs(r.modes[0].imag()), w_hat, 1e-3 * w_hat);
    EXPECT_NEAR(std::abs(r.modes[1].imag()), w_hat, 1e-3 * w_hat);
}

TEST(Eigenmodes, TwoBusMarginalAlphaIsOne) {
    const double a = marginal_alpha(two_bus(), 0.5, 1.5, 1e-6);
    EXPECT_NEAR(a, 1.0, 1e-3);
}

// stable iff a2 a1 > a0 for the monic cubic with positive coefficients
TEST(Eigenmodes, RouthHurwitzAgreement) {
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
        TwoBusParams p;
        p.wn = uni(1.0, 20.0);
        p.zeta = uni(0.02, 0.7);
        p.tau = uni(0.01, 0.5);
        p.tau_i = uni(0.05, 1.0);
        p.Rs = uni(0.1, 1.0);
        p.Rl = uni(0.1, 1.0);
        const double K = uni(0.1, 200.0);
        const double a2 = p.tau * p.R() + 2 * p.zeta * p.wn, a1 = p.wn * p.wn + K + p.R(), a0 = K / p.tau_i;
        if (std::abs(a2 * a1 - a0) < 1e-6 * a0) continue;
        const bool rh_stable = a2 * a1 > a0;
        const EigenResult r = eigenmodes(two_bus_at(p, K), 1.0);
        ASSERT_EQ(r.modes.size(), 3u);
        EXPECT_EQ(r.max_real() < 0.0, rh_stable) << "draw " << t;
        ++checked;
    }
    EXPECT_GE(checked, 95);
}

TEST(Eigenmodes, OpenLoopFixturesInLeftHalfPlane) {
    for (const auto& net : {radial10(), mesh8(), pi_fixture(false), two_bus()}) {
        const EigenResult r = eigenmodes(net, 0.0);
        EXPECT_FALSE(r.modes.empty());
        EXPECT_LT(r.max_real(), 0.0);
    }
}

TEST(Eigenmodes, ConjugateSymmetry) {
    for (const auto& net : {radial10(), mesh8(), pi_fixture(true)})
        for (double alpha : {0.0, 1.0, 3.0}) expect_conjugate_closed(eigenmodes(net, alpha).modes, 1e-8);
}

TEST(Eigenmodes, ModesAreSingularPointsOfY) {
    const NetworkGraph net = radial10();
    const auto els = rational_elements(net, 1.0);
    const EigenResult r = eigenmodes(net, 1.0);
    EXPECT_EQ(r.modes.size() + r.discarded.size(), 54u);
    for (const auto& z : r.modes) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(detail::assemble(els, net.size(), z));
        const auto& sv = svd.singularValues();
        EXPECT_LE(sv(sv.size() - 1), 1e-6 * sv(0));
    }
}

// nearest-neighbour pairing between adjacent alphas moves roots by a bounded multiple of a
// finite-difference sensitivity estimate
TEST(Eigenmodes, ContinuityAlongAlpha) {
    const NetworkGraph net = pi_fixture(false);
    const double h = 0.1;
    for (double a : {1.0, 3.0}) {
        const auto z0 = eigenmodes(net, a).modes;
        const auto zh = eigenmodes(net, a + 0.01 * h).modes;
        const auto z1 = eigenmodes(net, a + h).modes;
        for (const auto& r : z0) {
            const double sens = nearest(zh, r) / (0.01 * h);
            const double moved = nearest(z1, r);
            EXPECT_LE(moved, 10.0 * h * sens + 1e-8 * std::max(1.0, std::abs(r))) << "alpha " << a << " root " << r;
        }
    }
}

TEST(Eigenmodes, LeadLagFixturesStableUpToTen) {
    for (const auto& net : {radial10(), mesh8()})
        for (double alpha : {1.0, 5.0, 10.0}) EXPECT_LT(eigenmodes(net, alpha).max_real(), 0.0) << alpha;
}

TEST(Locus, PiRadialCrossesBetweenFourAndFourPointOne) {
    const LocusTrace tr = locus(pi_fixture(false), {3.8, 3.9, 4.0, 4.1, 4.2});
    ASSERT_TRUE(tr.marginal_alpha.has_value());
    EXPECT_NEAR(*tr.marginal_alpha, 4.07, 0.02 * 4.07);
    EXPECT_GT(*tr.marginal_alpha, 4.0);
    EXPECT_LT(*tr.marginal_alpha, 4.1);
    EXPECT_LT(tr.max_real.front(), 0.0);
    EXPECT_GE(tr.max_real.back(), 0.0);
}

TEST(Locus, PiMeshCrossingNearFourPointFive) {
    const double a = marginal_alpha(pi_fixture(true), 4.0, 5.0, 1e-4);
    EXPECT_NEAR(a, 4.5, 0.03 * 4.5);
}

TEST(Locus, MarginalAlphaNeedsBracket) {
    EXPECT_THROW(marginal_alpha(two_bus(), 0.1, 0.5), NumericalError);
}
