#pragma once

#include "components.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace dcstab {

struct Bus {
    std::string id;
    std::vector<Device> devices;  ///< shunt devices; a SourceModel makes it a source bus

    bool is_source() const {
        for (const auto& d : devices)
            if (std::holds_alternative<SourceModel>(d)) return true;
        return false;
    }
};

struct Edge {
    size_t i = 0, j = 0;
    LineModel line;
};

/// Microgrid graph. Bus order is kept as given; Eigen indices follow it.
struct NetworkGraph {
    std::vector<Bus> buses;
    std::vector<Edge> edges;

    size_t size() const { return buses.size(); }

    std::vector<size_t> source_buses() const {
        std::vector<size_t> out;
        for (size_t k = 0; k < buses.size(); ++k)
            if (buses[k].is_source()) out.push_back(k);
        return out;
    }

    size_t index_of(const std::string& id) const {
        for (size_t k = 0; k < buses.size(); ++k)
            if (buses[k].id == id) return k;
        throw InputError("unknown bus id '" + id + "'");
    }

    void validate() const {
        if (buses.empty()) throw InputError("network has no buses");
        if (source_buses().empty()) throw InputError("network needs at least one source");
        for (const auto& e : edges) {
            if (e.i >= buses.size() || e.j >= buses.size()) throw InputError("edge endpoint out of range");
            if (e.i == e.j) throw InputError("self-loop at bus '" + buses[e.i].id + "'");
            e.line.validate();
        }
        std::vector<std::vector<size_t>> adj(buses.size());
        for (const auto& e : edges) {
            adj[e.i].push_back(e.j);
            adj[e.j].push_back(e.i);
        }
        std::vector<bool> seen(buses.size(), false);
        std::queue<size_t> q;
        q.push(0);
        seen[0] = true;
        while (!q.empty()) {
            const size_t u = q.front();
            q.pop();
            for (size_t v : adj[u])
                if (!seen[v]) {
                    seen[v] = true;
                    q.push(v);
                }
        }
        for (size_t k = 0; k < buses.size(); ++k)
            if (!seen[k]) throw InputError("network is not connected: bus '" + buses[k].id + "' is isolated");
    }

    bool has_delay() const {
        for (const auto& b : buses)
            for (const auto& d : b.devices)
                if (device_has_delay(d)) return true;
        return false;
    }
};

// ---------------------------------------------------------------------------
// Admittance matrix
// ---------------------------------------------------------------------------

/// One admittance element: an edge (i, j) or a shunt at i (j < 0).
struct Element {
    size_t i = 0;
    long j = -1;
    DelayLft y;
    std::string label;
};

inline std::vector<Element> elements(const NetworkGraph& net, double alpha, bool include_shunts = true) {
    std::vector<Element> out;
    for (size_t k = 0; k < net.edges.size(); ++k) {
        const auto& e = net.edges[k];
        out.push_back({e.i, static_cast<long>(e.j), DelayLft::from_rational(line_admittance(e.line)),
                       "line:" + net.buses[e.i].id + "-" + net.buses[e.j].id});
    }
    if (include_shunts)
        for (size_t b = 0; b < net.buses.size(); ++b)
            for (size_t d = 0; d < net.buses[b].devices.size(); ++d)
                out.push_back({b, -1, device_admittance(net.buses[b].devices[d], alpha),
                               "shunt:" + net.buses[b].id + "#" + std::to_string(d)});
    return out;
}

inline void stamp(Eigen::MatrixXcd& Y, const Element& e, cplx v) {
    if (e.j < 0) {
        Y(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.i)) += v;
        return;
    }
    const auto i = static_cast<Eigen::Index>(e.i), j = static_cast<Eigen::Index>(e.j);
    Y(i, i) += v;
    Y(j, j) += v;
    Y(i, j) -= v;
    Y(j, i) -= v;
}

inline Eigen::MatrixXcd assemble_Y(const std::vector<Element>& els, size_t n, cplx s) {
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& e : els) stamp(Y, e, e.y.eval(s));
    return Y;
}

/// Y(s, alpha): edge blocks [[y, -y], [-y, y]] plus diagonal shunts (sources as their series line to ground).
inline Eigen::MatrixXcd assemble_Y(const NetworkGraph& net, cplx s, double alpha) {
    return assemble_Y(elements(net, alpha), net.size(), s);
}

/// Y restricted to edges only (shunts removed).
inline Eigen::MatrixXcd assemble_Y_lines(const NetworkGraph& net, cplx s) {
    return assemble_Y(elements(net, 0.0, false), net.size(), s);
}

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

struct SteadyState {
    std::vector<double> V0;         ///< per-bus voltage
    std::vector<double> I0;         ///< per-bus net injection from sources minus load draw
    std::vector<double> I_source;   ///< per source bus (order of source_buses())
    double residual = 0.0;          ///< ||Yb [V_s; V] - [I_s; 0]||_inf / ||V||_inf
};

/// Conductance a device presents to the power-flow solve: its open-loop admittance at DC.
inline double steady_conductance(const Device& dev) {
    if (std::holds_alternative<SourceModel>(dev)) return 0.0;
    return device_admittance(dev, 0.0).eval(cplx(0.0)).real();
}

/// Linear DC solve. Each ideal source is an internal node of known voltage joined to its bus through
/// the series resistance; all grid buses are unknown. `shunt_g` overrides per-bus load conductance.
inline SteadyState steady_state(const NetworkGraph& net, const std::vector<double>* shunt_g = nullptr,
                                const std::vector<double>* source_v = nullptr) {
    net.validate();
    const auto n = static_cast<Eigen::Index>(net.size());
    const auto src = net.source_buses();
    Eigen::MatrixXd Yb = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (const auto& e : net.edges) {
        const double g = 1.0 / e.line.R;
        const auto i = static_cast<Eigen::Index>(e.i), j = static_cast<Eigen::Index>(e.j);
        Yb(i, i) += g, Yb(j, j) += g, Yb(i, j) -= g, Yb(j, i) -= g;
    }
    std::vector<double> gload(net.size(), 0.0);
    std::vector<std::pair<double, double>> srcs;  // (g, Vs) per source bus
    size_t sk = 0;
    for (size_t b = 0; b < net.size(); ++b) {
        for (const auto& d : net.buses[b].devices) {
            if (auto s = std::get_if<SourceModel>(&d)) {
                const double g = 1.0 / s->series.R;
                const double vs = source_v ? (*source_v)[sk] : s->Vs;
                ++sk;
                Yb(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) += g;
                rhs(static_cast<Eigen::Index>(b)) += g * vs;
            } else {
                gload[b] += steady_conductance(d);
            }
        }
    }
    if (shunt_g) gload = *shunt_g;
    for (size_t b = 0; b < net.size(); ++b) Yb(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)) += gload[b];

    Eigen::FullPivLU<Eigen::MatrixXd> lu(Yb);
    if (lu.rank() < n || lu.rcond() < 1e-13)
        throw NumericalError("operating point at or beyond the nose curve: load block is singular");
    Eigen::VectorXd V = lu.solve(rhs);

    SteadyState ss;
    ss.V0.assign(V.data(), V.data() + n);
    ss.I0.assign(net.size(), 0.0);
    sk = 0;
    for (size_t b = 0; b < net.size(); ++b) {
        for (const auto& d : net.buses[b].devices)
            if (auto s = std::get_if<SourceModel>(&d)) {
                const double vs = source_v ? (*source_v)[sk] : s->Vs;
                ++sk;
                const double is = (vs - V(static_cast<Eigen::Index>(b))) / s->series.R;
                ss.I_source.push_back(is);
                ss.I0[b] += is;
            }
        ss.I0[b] -= gload[b] * V(static_cast<Eigen::Index>(b));
    }
    const double vmax = std::max(V.cwiseAbs().maxCoeff(), 1e-300);
    ss.residual = (Yb * V - rhs).cwiseAbs().maxCoeff() / vmax;
    if (!(ss.residual < 1e-10)) throw NumericalError("steady-state residual above 1e-10");
    return ss;
}

/// Copy of the network with each converter's input voltage set to its bus voltage.
inline NetworkGraph parameterize(const NetworkGraph& net, const SteadyState& ss) {
    NetworkGraph out = net;
    for (size_t b = 0; b < out.size(); ++b)
        for (auto& d : out.buses[b].devices)
            if (!std::holds_alternative<SourceModel>(d)) d = with_input_voltage(d, ss.V0[b]);
    return out;
}

inline bool load_voltages_in_band(const NetworkGraph& net, const SteadyState& ss, double lo, double hi) {
    for (size_t b = 0; b < net.size(); ++b) {
        if (net.buses[b].is_source()) continue;
        if (ss.V0[b] < lo || ss.V0[b] > hi) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Schur reduction
// ---------------------------------------------------------------------------

/// Yo = Y11 - Y12 Y22^-1 Y21 at `bus`; nullopt where Y22 is singular.
inline std::optional<cplx> schur_at(const Eigen::MatrixXcd& Y, size_t bus) {
    const auto n = Y.rows();
    const auto k = static_cast<Eigen::Index>(bus);
    if (n == 1) return Y(0, 0);
    std::vector<Eigen::Index> rest;
    for (Eigen::Index i = 0; i < n; ++i)
        if (i != k) rest.push_back(i);
    const auto m = static_cast<Eigen::Index>(rest.size());
    Eigen::MatrixXcd Y22(m, m);
    Eigen::VectorXcd Y21(m), Y12(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        Y21(a) = Y(rest[static_cast<size_t>(a)], k);
        Y12(a) = Y(k, rest[static_cast<size_t>(a)]);
        for (Eigen::Index b = 0; b < m; ++b) Y22(a, b) = Y(rest[static_cast<size_t>(a)], rest[static_cast<size_t>(b)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(Y22);
    if (lu.rank() < m || lu.rcond() < 1e-14) return std::nullopt;
    const Eigen::VectorXcd x = lu.solve(Y21);
    return Y(k, k) - (Y12.array() * x.array()).sum();
}

/// Effective admittance seen at `bus` as a function of omega.
inline std::function<std::optional<cplx>(double)> effective_admittance(const NetworkGraph& net, size_t bus,
                                                                       bool exclude_shunt_at_bus, double alpha) {
    if (bus >= net.size()) throw InputError("bus index out of range");
    std::vector<Element> els;
    for (auto& e : elements(net, alpha))
        if (!(exclude_shunt_at_bus && e.j < 0 && e.i == bus)) els.push_back(std::move(e));
    const size_t n = net.size();
    return [els = std::move(els), n, bus](double omega) { return schur_at(assemble_Y(els, n, cplx(0.0, omega)), bus); };
}

}  // namespace dcstab
