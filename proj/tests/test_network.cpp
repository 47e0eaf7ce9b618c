#include <dcstab/fixtures.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace dcstab;

namespace {

std::mt19937_64 rng(99);

double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

cplx random_s() { return {uni(-50.0, 50.0), uni(-1e4, 1e4)}; }

// three buses, one source, two bucks, a triangle of lines with random lengths
NetworkGraph random_three_bus() {
    NetworkGraph net;
    net.buses.push_back({"a", {SourceModel{30.0, reference_line(uni(0.05, 0.5))}}});
    net.buses.push_back({"b", {reference_buck(uni(28.0, 30.0))}});
    net.buses.push_back({"c", {reference_buck(uni(28.0, 30.0), reference_pi())}});
    net.edges.push_back({0, 1, reference_line(uni(0.1, 2.0), uni(5e-4, 3e-3))});
    net.edges.push_back({1, 2, reference_line(uni(0.1, 2.0), uni(5e-4, 3e-3))});
    net.edges.push_back({0, 2, reference_line(uni(0.1, 2.0), uni(5e-4, 3e-3))});
    return net;
}

}  // namespace

TEST(Admittance, LineMatrixHasZeroRowSums) {
    for (const auto& net : {radial10(), mesh8(), random_three_bus()})
        for (int k = 0; k < 10; ++k) {
            const Eigen::MatrixXcd Y = assemble_Y_lines(net, random_s());
            const double scale = Y.cwiseAbs().maxCoeff();
            EXPECT_LT(Y.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12 * scale);
            EXPECT_LT(Y.colwise().sum().cwiseAbs().maxCoeff(), 1e-12 * scale);
        }
}

TEST(Admittance, ComplexSymmetric) {
    for (const auto& net : {radial10(), mesh8()})
        for (double alpha : {0.0, 1.0, 10.0}) {
            const Eigen::MatrixXcd Y = assemble_Y(net, random_s(), alpha);
            EXPECT_LT((Y - Y.transpose()).cwiseAbs().maxCoeff(), 1e-15 * Y.cwiseAbs().maxCoeff());
        }
}

TEST(Admittance, RealAtDc) {
    const Eigen::MatrixXcd Y = assemble_Y(radial10(), cplx(0.0), 1.0);
    EXPECT_EQ(Y.imag().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Admittance, TwoBusStructure) {
    const NetworkGraph net = two_bus();
    const cplx s(0.3, 5.0);
    const cplx ys = source_admittance(std::get<SourceModel>(net.buses[0].devices[0]))(s);
    const cplx yl = line_admittance(net.edges[0].line)(s);
    const cplx yL = device_admittance(net.buses[1].devices[0], 1.0).eval(s);
    const Eigen::MatrixXcd Y = assemble_Y(net, s, 1.0);
    EXPECT_LT(std::abs(Y(0, 0) - (ys + yl)), 1e-14);
    EXPECT_LT(std::abs(Y(1, 1) - (yL + yl)), 1e-14);
    EXPECT_LT(std::abs(Y(0, 1) + yl), 1e-14);
    EXPECT_LT(std::abs(Y.determinant() - ((ys + yl) * (yL + yl) - yl * yl)), 1e-12);
}

TEST(Admittance, SingleBusIsOneByOne) {
    NetworkGraph net;
    net.buses.push_back({"only", {SourceModel{30.0, LineModel{0.5, 1e-3}}}});
    const Eigen::MatrixXcd Y = assemble_Y(net, cplx(0.0, 10.0), 1.0);
    ASSERT_EQ(Y.rows(), 1);
    EXPECT_LT(std::abs(Y(0, 0) - 1.0 / cplx(0.5, 1e-2)), 1e-14);
}

// det Y = Y_o(k) * det Y22 for the reduction onto bus k
TEST(Schur, DeterminantFactorization) {
    for (int t = 0; t < 20; ++t) {
        const NetworkGraph net = random_three_bus();
        const cplx s(0.0, std::pow(10.0, uni(0.0, 5.0)));
        const Eigen::MatrixXcd Y = assemble_Y(net, s, uni(0.0, 3.0));
        for (size_t k = 0; k < 3; ++k) {
            const auto yo = schur_at(Y, k);
            ASSERT_TRUE(yo.has_value());
            Eigen::MatrixXcd Y22(2, 2);
            std::vector<Eigen::Index> rest;
            for (Eigen::Index i = 0; i < 3; ++i)
                if (i != static_cast<Eigen::Index>(k)) rest.push_back(i);
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) Y22(a, b) = Y(rest[static_cast<size_t>(a)], rest[static_cast<size_t>(b)]);
            const cplx d = Y.determinant();
            EXPECT_LT(std::abs(*yo * Y22.determinant() - d) / std::abs(d), 1e-8);
            EXPECT_LT(std::abs(*yo - 1.0 / Y.inverse()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))) / std::abs(*yo),
                      1e-9);
        }
    }
}

TEST(Schur, TwoBusSourceSideReduction) {
    const NetworkGraph net = two_bus();
    const auto yo = effective_admittance(net, 1, true, 1.0);
    for (double w : {0.5, 7.59, 100.0}) {
        const cplx s(0.0, w);
        const cplx ys = source_admittance(std::get<SourceModel>(net.buses[0].devices[0]))(s);
        const cplx yl = line_admittance(net.edges[0].line)(s);
        EXPECT_LT(std::abs(*yo(w) - ys * yl / (ys + yl)) / std::abs(*yo(w)), 1e-12);
    }
    // including the load shunt adds it back
    const auto yall = effective_admittance(net, 1, false, 1.0);
    const cplx yL = device_admittance(net.buses[1].devices[0], 1.0).eval(cplx(0.0, 3.0));
    EXPECT_LT(std::abs(*yall(3.0) - *yo(3.0) - yL), 1e-12);
    EXPECT_THROW(effective_admittance(net, 5, true, 1.0), InputError);
}

TEST(Schur, DisconnectedLoadLimit) {
    NetworkGraph net;
    net.buses.push_back({"1", {SourceModel{30.0, LineModel{0.2, 2e-4}}}});
    const auto yo = effective_admittance(net, 0, false, 0.0);
    EXPECT_LT(std::abs(*yo(50.0) - 1.0 / cplx(0.2, 50.0 * 2e-4)), 1e-14);
}

TEST(SteadyState, NoLoadsGiveSourceVoltage) {
    NetworkGraph net;
    net.buses.push_back({"1", {SourceModel{30.0, reference_line(0.1)}}});
    for (int k = 2; k <= 5; ++k) net.buses.push_back({std::to_string(k), {}});
    for (size_t k = 0; k + 1 < 5; ++k) net.edges.push_back({k, k + 1, reference_line(1.0)});
    const SteadyState ss = steady_state(net);
    for (double v : ss.V0) EXPECT_NEAR(v, 30.0, 1e-12);
    for (double i : ss.I0) EXPECT_NEAR(i, 0.0, 1e-12);
}

TEST(SteadyState, TwoBusClosedForm) {
    NetworkGraph net;
    const double Rs = 0.3, Rl = 0.7, Vs = 30.0;
    net.buses.push_back({"1", {SourceModel{Vs, LineModel{Rs, 0.0}}}});
    net.buses.push_back({"2", {reference_buck(Vs)}});
    net.edges.push_back({0, 1, LineModel{Rl, 1e-4}});
    const SteadyState ss = steady_state(net);
    const BuckConverterModel& b = std::get<BuckConverterModel>(net.buses[1].devices[0]);
    const double g = b.D * b.D / b.R, gp = 1.0 / (Rs + Rl);
    EXPECT_NEAR(ss.V0[1], Vs * gp / (gp + g), 1e-12);
    EXPECT_NEAR(ss.I_source[0], Vs * gp * g / (gp + g), 1e-12);
    EXPECT_LT(ss.residual, 1e-10);
}

TEST(SteadyState, ResidualOnFixtures) {
    for (uint64_t seed : {0u, 1u, 7u}) {
        FixtureOptions opt;
        opt.seed = seed;
        for (const auto& net : {radial10(opt), mesh8(opt)}) {
            const SteadyState ss = steady_state(net);
            EXPECT_LT(ss.residual, 1e-10);
            // current balance: sources supply exactly what loads draw
            double total = 0.0;
            for (double i : ss.I0) total += i;
            EXPECT_NEAR(total, 0.0, 1e-9);
        }
    }
}

TEST(SteadyState, NoseCurveSingularThrows) {
    NetworkGraph net;
    net.buses.push_back({"1", {SourceModel{30.0, LineModel{0.5, 0.0}}}});
    net.buses.push_back({"2", {}});
    net.edges.push_back({0, 1, LineModel{0.5, 0.0}});
    // series path 2 S against the source node; -1 S at bus 2 makes the load block singular
    const std::vector<double> g{0.0, -1.0};
    EXPECT_THROW(steady_state(net, &g), NumericalError);
    const std::vector<double> ok{0.0, 0.5};
    EXPECT_NO_THROW(steady_state(net, &ok));
}

TEST(Network, ValidationErrors) {
    NetworkGraph empty;
    EXPECT_THROW(empty.validate(), InputError);

    NetworkGraph nosrc;
    nosrc.buses.push_back({"1", {reference_buck()}});
    EXPECT_THROW(nosrc.validate(), InputError);

    NetworkGraph iso = two_bus();
    iso.buses.push_back({"3", {}});
    EXPECT_THROW(iso.validate(), InputError);

    NetworkGraph loop = two_bus();
    loop.edges.push_back({1, 1, LineModel{}});
    EXPECT_THROW(loop.validate(), InputError);

    NetworkGraph range = two_bus();
    range.edges.push_back({0, 4, LineModel{}});
    EXPECT_THROW(range.validate(), InputError);

    NetworkGraph badline = two_bus();
    badline.edges[0].line.R = -1.0;
    EXPECT_THROW(badline.validate(), InputError);

    EXPECT_THROW(two_bus().index_of("nope"), InputError);
    EXPECT_EQ(two_bus().index_of("2"), 1u);
}

TEST(Fixtures, NormalStreamIsFrozen) {
    // reference draws from an independent mt19937_64 + Box-Muller implementation
    NormalStream a(0), b(3);
    const double ea[] = {1.912804529284321, -0.094479561125843076, -2.0794079062393958, -1.4613281781652749};
    const double eb[] = {0.36059248994300253, 1.0168687671345786, -0.58446613806844594, 0.8443027390094503};
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(a.next(), ea[k], 1e-14);
        EXPECT_NEAR(b.next(), eb[k], 1e-14);
    }
}

TEST(Fixtures, DeterministicPerSeed) {
    FixtureOptions o1, o2;
    o1.seed = o2.seed = 11;
    const NetworkGraph a = radial10(o1), b = radial10(o2);
    ASSERT_EQ(a.edges.size(), b.edges.size());
    for (size_t k = 0; k < a.edges.size(); ++k) EXPECT_EQ(a.edges[k].line.R, b.edges[k].line.R);
    o2.seed = 12;
    const NetworkGraph c = radial10(o2);
    bool differs = false;
    for (size_t k = 0; k < a.edges.size(); ++k) differs |= a.edges[k].line.R != c.edges[k].line.R;
    EXPECT_TRUE(differs);
}

TEST(Fixtures, Shapes) {
    const NetworkGraph r = radial10(), m = mesh8();
    EXPECT_EQ(r.size(), 10u);
    EXPECT_EQ(r.edges.size(), 9u);
    EXPECT_EQ(r.source_buses(), std::vector<size_t>{0});
    EXPECT_EQ(m.size(), 8u);
    EXPECT_EQ(m.edges.size(), 10u);
    EXPECT_EQ(m.source_buses(), (std::vector<size_t>{4, 7}));
    const NetworkGraph t = two_bus();
    EXPECT_NEAR(TwoBusParams{}.K_hat(), 20.77, 5e-3);
    EXPECT_EQ(t.size(), 2u);
}

TEST(Fixtures, LoadVoltagesInTableBand) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        FixtureOptions opt;
        opt.seed = seed;
        const NetworkGraph net = radial10(opt);
        const SteadyState ss = steady_state(net);
        EXPECT_TRUE(load_voltages_in_band(net, ss, 28.0, 30.0)) << "seed " << seed;
        // converters are parameterized at their bus voltage
        for (size_t b = 1; b < net.size(); ++b)
            EXPECT_NEAR(std::get<BuckConverterModel>(net.buses[b].devices[0]).V, ss.V0[b], 1e-9);
    }
}

TEST(Fixtures, ControllerSwapKeepsDelay) {
    NetworkGraph net = radial10();
    std::get<BuckConverterModel>(net.buses[3].devices[0]).comp.tau_d = 1e-5;
    const NetworkGraph pi = with_controller(net, reference_pi());
    const auto& m = std::get<BuckConverterModel>(pi.buses[3].devices[0]);
    EXPECT_EQ(m.comp.kind, CompensatorKind::pi);
    EXPECT_EQ(m.comp.tau_d, 1e-5);
    EXPECT_TRUE(pi.has_delay());
    EXPECT_FALSE(with_controller(radial10(), reference_pi()).has_delay());
}
