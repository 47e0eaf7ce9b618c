#pragma once

#include "network.hpp"

#include <cstdint>
#include <random>

namespace dcstab {

/// Standard normal draws by Box-Muller on mt19937_64, identical on every standard library.
class NormalStream {
public:
    explicit NormalStream(uint64_t seed) : eng_(seed) {}
    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do u1 = uniform(); while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

private:
    double uniform() { return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0); }
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

enum class Controller { lead_lag, pi };

inline Compensator controller_compensator(Controller c) {
    return c == Controller::pi ? reference_pi() : reference_lead_lag();
}

/// Replaces the compensator of every buck converter, keeping its delay.
inline NetworkGraph with_controller(NetworkGraph net, const Compensator& comp) {
    for (auto& b : net.buses)
        for (auto& d : b.devices)
            if (auto m = std::get_if<BuckConverterModel>(&d)) {
                const double td = m->comp.tau_d;
                m->comp = comp;
                m->comp.tau_d = td;
            }
    return net;
}

/// Two buses: a source behind Rs at bus 1, a line Rl, and a PI-regulated second-order load at bus 2
/// with K = alpha * K_hat. Rs + Rl = R; both share the time constant tau.
struct TwoBusParams {
    double wn = 2 * kPi, zeta = 0.1, tau = 0.1, tau_i = 0.25, Rs = 0.5, Rl = 0.5;
    double R() const { return Rs + Rl; }
    /// Largest stable K from the cubic's Routh-Hurwitz condition.
    double K_hat() const {
        const double a2 = tau * R() + 2 * zeta * wn;
        return tau_i * a2 * (wn * wn + R()) / (1.0 - tau_i * a2);
    }
    Rational h0() const { return Rational(Poly::constant(1.0), Poly{wn * wn, 2 * zeta * wn, 1.0}); }
};

inline NetworkGraph two_bus(const TwoBusParams& p = {}) {
    NetworkGraph net;
    SourceModel src;
    src.Vs = 1.0;
    src.series = LineModel{p.Rs, p.tau * p.Rs};
    RegulatedLoad load;
    load.plant = p.h0();
    load.comp = Compensator::pi_gain(p.K_hat(), p.tau_i);
    net.buses.push_back({"1", {src}});
    net.buses.push_back({"2", {load}});
    net.edges.push_back({0, 1, LineModel{p.Rl, p.tau * p.Rl}});
    return net;
}

struct FixtureOptions {
    Controller controller = Controller::lead_lag;
    uint64_t seed = 0;
    double sigma = 0.1;        ///< relative spread of line lengths
    double source_v = 30.0;
    double line_tau = 1e-3;
};

/// Ten-bus feeder 1-2-...-10: source behind a 0.1 km line at bus 1, buck loads on buses 2..10,
/// line lengths 0.1 km x (1 + N(0, sigma^2)). Converter input voltages from the steady state.
inline NetworkGraph radial10(const FixtureOptions& opt = {}) {
    NormalStream rng(opt.seed);
    NetworkGraph net;
    SourceModel src;
    src.Vs = opt.source_v;
    src.series = reference_line(0.1, opt.line_tau);
    net.buses.push_back({"1", {src}});
    for (int k = 2; k <= 10; ++k)
        net.buses.push_back({std::to_string(k), {reference_buck(opt.source_v, controller_compensator(opt.controller))}});
    for (size_t k = 0; k + 1 < 10; ++k)
        net.edges.push_back({k, k + 1, reference_line(0.1 * (1.0 + opt.sigma * rng.next()), opt.line_tau)});
    return parameterize(net, steady_state(net));
}

/// Eight-bus mesh: 2x4 ladder 1-2-3-4 / 5-6-7-8 with rungs, sources at buses 5 and 8 behind 1 km lines,
/// buck loads elsewhere, line lengths 1 km x (1 + N(0, sigma^2)).
inline NetworkGraph mesh8(const FixtureOptions& opt = {}) {
    NormalStream rng(opt.seed);
    NetworkGraph net;
    for (int k = 1; k <= 8; ++k) {
        Bus b{std::to_string(k), {}};
        if (k == 5 || k == 8) {
            SourceModel src;
            src.Vs = opt.source_v;
            src.series = reference_line(1.0, opt.line_tau);
            b.devices.push_back(src);
        } else {
            b.devices.push_back(reference_buck(opt.source_v, controller_compensator(opt.controller)));
        }
        net.buses.push_back(std::move(b));
    }
    const std::pair<size_t, size_t> adj[] = {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6},
                                             {6, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    for (auto [i, j] : adj)
        net.edges.push_back({i, j, reference_line(1.0 + opt.sigma * rng.next(), opt.line_tau)});
    return parameterize(net, steady_state(net));
}

}  // namespace dcstab
