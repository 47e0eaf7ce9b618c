#pragma once

#include "network.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <optional>
#include <string>
#include <vector>

namespace dcstab {

/// y(s) = C (sI - A)^-1 B + D + E s for a scalar input and output.
struct StateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;
    double E = 0.0;  ///< derivative feed-through, realized as nodal capacitance
    std::vector<std::string> state_labels;

    Eigen::Index order() const { return A.rows(); }

    cplx eval(cplx s) const {
        cplx y = D + E * s;
        if (order() == 0) return y;
        const Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(order(), order()) - A.cast<cplx>();
        const Eigen::VectorXcd x = M.partialPivLu().solve(B.cast<cplx>());
        return y + (C.cast<cplx>() * x)(0);
    }
};

/// Controllable canonical realization, frequency-scaled so the companion entries stay O(1).
/// A trailing s * E term (deg num = deg den + 1) is split off exactly; common factors are cancelled first.
inline StateSpace realize(const Rational& y_in, const std::string& label = "x") {
    const Rational y = reduce(y_in, 1e-9);
    const Poly& D = y.den();
    const int m = D.degree();
    Poly N = y.num();
    if (N.degree() > m + 1) throw InputError("realize: numerator exceeds denominator degree by more than one");
    StateSpace ss;
    if (N.degree() == m + 1) {
        ss.E = N.leading();
        N = (N - Poly::monomial(1, ss.E) * D).trimmed(0.0);
    }
    if (N.degree() == m) {
        ss.D = N[static_cast<size_t>(m)];
        N = N - ss.D * D;
    }
    ss.A.resize(m, m);
    ss.B.resize(m);
    ss.C.resize(m);
    if (m == 0) return ss;
    const double ws = std::max(1.0, root_bound(D));
    ss.A.setZero();
    ss.B.setZero();
    for (int k = 0; k + 1 < m; ++k) ss.A(k, k + 1) = ws;
    for (int k = 0; k < m; ++k) {
        const double sc = std::pow(ws, m - k);
        ss.A(m - 1, k) = -D[static_cast<size_t>(k)] / sc * ws;
        ss.C(k) = k < m ? N[static_cast<size_t>(k)] / sc : 0.0;
        ss.state_labels.push_back(label + "[" + std::to_string(k) + "]");
    }
    ss.B(m - 1) = ws;
    return ss;
}

/// Linear network model xi' = A xi + B u, outputs = C xi + D u: every bus voltage, then every edge current.
struct NetworkStateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::MatrixXd C;
    Eigen::VectorXd D;
    std::vector<std::string> state_labels;
    std::vector<std::string> bus_ids, edge_labels;
    bool projected = false;  ///< inductor cut-sets at capless buses were eliminated

    /// Closed-form final value of the outputs for a constant input.
    Eigen::VectorXd final_value(double u) const {
        if (A.rows() == 0) return D * u;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (!lu.isInvertible()) throw NumericalError("state matrix singular: no finite final value");
        return C * lu.solve(-B * u) + D * u;
    }
};

inline std::vector<cplx> spectrum(const Eigen::MatrixXd& A) {
    Eigen::MatrixXd M = A;
    detail::balance(M);
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    if (es.info() != Eigen::Success) throw NumericalError("state matrix eigenvalues did not converge");
    std::vector<cplx> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    return out;
}

/// Nodal assembly. States: capacitive bus voltages, inductor currents (lines and source series paths),
/// device states. The input is a step on the set point of every source at `step_bus`.
/// Buses without shunt capacitance may only carry sources and inductive lines; their voltages are
/// algebraic and the cut-set constraint on the incident inductor currents is projected out.
inline NetworkStateSpace assemble_state_space(const NetworkGraph& net, double alpha, size_t step_bus) {
    net.validate();
    if (net.has_delay()) throw InputError("timesim: delay models are not supported in time-domain simulation");
    if (step_bus >= net.size() || !net.buses[step_bus].is_source())
        throw InputError("timesim: step bus must be a source bus");
    const size_t nb = net.size();

    // per-device realizations and nodal capacitance
    std::vector<double> cap(nb, 0.0);
    struct Dev { size_t bus; StateSpace ss; };
    std::vector<Dev> devs;
    for (size_t b = 0; b < nb; ++b)
        for (size_t k = 0; k < net.buses[b].devices.size(); ++k) {
            const auto& d = net.buses[b].devices[k];
            if (std::holds_alternative<SourceModel>(d)) continue;
            auto ss = realize(device_admittance(d, alpha).to_rational(), net.buses[b].id + "#" + std::to_string(k));
            cap[b] += ss.E;
            devs.push_back({b, std::move(ss)});
        }
    std::vector<bool> capless(nb, false);
    for (size_t b = 0; b < nb; ++b) capless[b] = !(cap[b] > 0.0);
    for (const auto& dv : devs)
        if (capless[dv.bus])
            throw InputError("timesim: bus '" + net.buses[dv.bus].id + "' has a device but no shunt capacitance");
    for (const auto& e : net.edges)
        if (e.line.L <= 0.0 && (capless[e.i] || capless[e.j]))
            throw InputError("timesim: resistive line attached to a bus without shunt capacitance");

    // index maps
    std::vector<long> vidx(nb, -1), aidx(nb, -1);
    std::vector<std::string> labels;
    long nw = 0, na = 0;
    for (size_t b = 0; b < nb; ++b) {
        if (capless[b]) {
            aidx[b] = na++;
        } else {
            vidx[b] = nw++;
            labels.push_back("v:" + net.buses[b].id);
        }
    }
    std::vector<long> eidx(net.edges.size(), -1);
    for (size_t k = 0; k < net.edges.size(); ++k) {
        const auto& e = net.edges[k];
        if (e.line.L > 0.0) {
            eidx[k] = nw++;
            labels.push_back("i:" + net.buses[e.i].id + "-" + net.buses[e.j].id);
        }
    }
    struct Src { size_t bus; long idx; LineModel line; };
    std::vector<Src> srcs;
    for (size_t b = 0; b < nb; ++b)
        for (const auto& d : net.buses[b].devices)
            if (auto s = std::get_if<SourceModel>(&d)) {
                if (!(s->series.L > 0.0)) throw InputError("timesim: source series path needs inductance");
                srcs.push_back({b, nw++, s->series});
                labels.push_back("i:src@" + net.buses[b].id);
            }
    std::vector<long> didx;
    for (const auto& dv : devs) {
        didx.push_back(nw);
        nw += dv.ss.order();
        labels.insert(labels.end(), dv.ss.state_labels.begin(), dv.ss.state_labels.end());
    }

    // E w' = F w + Fa va + g u,  0 = H w
    Eigen::VectorXd Ed = Eigen::VectorXd::Ones(nw);
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(nw, nw), Fa = Eigen::MatrixXd::Zero(nw, na), H = Eigen::MatrixXd::Zero(na, nw);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nw);
    for (size_t b = 0; b < nb; ++b)
        if (vidx[b] >= 0) Ed(vidx[b]) = cap[b];
    auto volt = [&](Eigen::Index row, size_t bus, double coef) {
        if (vidx[bus] >= 0)
            F(row, vidx[bus]) += coef;
        else
            Fa(row, aidx[bus]) += coef;
    };
    auto inject = [&](size_t bus, Eigen::Index col, double coef) {  // current state `col` entering `bus`
        if (vidx[bus] >= 0)
            F(vidx[bus], col) += coef;
        else
            H(aidx[bus], col) += coef;
    };
    for (size_t k = 0; k < net.edges.size(); ++k) {
        const auto& e = net.edges[k];
        if (eidx[k] >= 0) {
            const Eigen::Index r = eidx[k];
            Ed(r) = e.line.L;
            volt(r, e.i, 1.0);
            volt(r, e.j, -1.0);
            F(r, r) -= e.line.R;
            inject(e.i, r, -1.0);
            inject(e.j, r, 1.0);
        } else {
            const double G = 1.0 / e.line.R;
            const auto i = vidx[e.i], j = vidx[e.j];
            F(i, i) -= G, F(i, j) += G, F(j, j) -= G, F(j, i) += G;
        }
    }
    for (const auto& s : srcs) {
        Ed(s.idx) = s.line.L;
        volt(s.idx, s.bus, -1.0);
        F(s.idx, s.idx) -= s.line.R;
        if (s.bus == step_bus) g(s.idx) = 1.0;
        inject(s.bus, s.idx, 1.0);
    }
    for (size_t k = 0; k < devs.size(); ++k) {
        const auto& ss = devs[k].ss;
        const auto v = vidx[devs[k].bus];
        const Eigen::Index o = didx[k], m = ss.order();
        F(v, v) -= ss.D;
        if (m == 0) continue;
        F.block(o, o, m, m) = ss.A;
        F.block(o, v, m, 1) = ss.B;
        F.block(v, o, 1, m) -= ss.C;
    }

    NetworkStateSpace out;
    for (const auto& b : net.buses) out.bus_ids.push_back(b.id);
    for (const auto& e : net.edges) out.edge_labels.push_back(net.buses[e.i].id + "-" + net.buses[e.j].id);

    const Eigen::VectorXd Einv = Ed.cwiseInverse();
    Eigen::MatrixXd A0 = Einv.asDiagonal() * F;
    Eigen::VectorXd B0 = Einv.asDiagonal() * g;
    // va = Ka w + ka u from d/dt (H w) = 0
    Eigen::MatrixXd Ka = Eigen::MatrixXd::Zero(na, nw);
    Eigen::VectorXd ka = Eigen::VectorXd::Zero(na);
    Eigen::MatrixXd N = Eigen::MatrixXd::Identity(nw, nw);
    if (na > 0) {
        const Eigen::MatrixXd EFa = Einv.asDiagonal() * Fa;
        const Eigen::MatrixXd S = H * EFa;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
        if (!lu.isInvertible()) throw InputError("timesim: buses without capacitance form an undetermined cut-set");
        Ka = -lu.solve(H * A0);
        ka = -lu.solve(H * B0);
        A0 += EFa * Ka;
        B0 += EFa * ka;
        // orthonormal basis of null(H)
        Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(H.transpose());
        const Eigen::MatrixXd Q = qr.matrixQ();
        const auto r = qr.rank();
        N = Q.rightCols(nw - r);
        out.projected = true;
    }
    out.A = N.transpose() * A0 * N;
    out.B = N.transpose() * B0;
    if (out.projected) {
        for (Eigen::Index k = 0; k < out.A.rows(); ++k) out.state_labels.push_back("xi[" + std::to_string(k) + "]");
    } else {
        out.state_labels = labels;
    }

    // outputs in terms of w and u, then w = N xi
    const auto ne = static_cast<Eigen::Index>(net.edges.size());
    Eigen::MatrixXd Cw = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb) + ne, nw);
    Eigen::VectorXd Du = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb) + ne);
    for (size_t b = 0; b < nb; ++b) {
        const auto r = static_cast<Eigen::Index>(b);
        if (vidx[b] >= 0) {
            Cw(r, vidx[b]) = 1.0;
        } else {
            Cw.row(r) = Ka.row(aidx[b]);
            Du(r) = ka(aidx[b]);
        }
    }
    for (size_t k = 0; k < net.edges.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(nb + k);
        const auto& e = net.edges[k];
        if (eidx[k] >= 0) {
            Cw(r, eidx[k]) = 1.0;
        } else {
            const double G = 1.0 / e.line.R;
            Cw.row(r) = G * (Cw.row(static_cast<Eigen::Index>(e.i)) - Cw.row(static_cast<Eigen::Index>(e.j)));
        }
    }
    out.C = Cw * N;
    out.D = Du;
    return out;
}

struct StepOptions {
    double t_end = 0.05;
    std::optional<double> dt;       ///< default: 1 / (10 |fastest eigenvalue|) of the alpha = 0 model
    double growth_limit = 1e6;      ///< abort when |xi| exceeds this multiple of the final-value scale
};

/// Deviations from the operating point after a set-point step. Rows are time samples.
struct StepResponse {
    std::vector<double> t;
    std::vector<std::string> bus_ids, edge_labels;
    Eigen::MatrixXd v, i;
    Eigen::VectorXd v_final, i_final;  ///< closed-form final values
    double dt = 0.0;
    double delta_v = 0.0;

    /// Time after which every channel stays within tol x its peak deviation of its final value.
    double settling_time(double tol = 0.01) const {
        double ts = 0.0;
        auto scan = [&](const Eigen::MatrixXd& X, const Eigen::VectorXd& fin, double floor) {
            for (Eigen::Index c = 0; c < X.cols(); ++c) {
                const double peak = X.col(c).cwiseAbs().maxCoeff();
                if (!(peak > floor)) continue;
                for (Eigen::Index k = X.rows() - 1; k >= 0; --k)
                    if (std::abs(X(k, c) - fin(c)) > tol * peak) {
                        ts = std::max(ts, k + 1 < X.rows() ? t[static_cast<size_t>(k + 1)]
                                                           : std::numeric_limits<double>::infinity());
                        break;
                    }
            }
        };
        if (v.rows() == 0) return 0.0;
        scan(v, v_final, 1e-12 * std::max(1e-300, v.cwiseAbs().maxCoeff()));
        if (i.cols() > 0) scan(i, i_final, 1e-12 * std::max(1e-300, i.cwiseAbs().maxCoeff()));
        return ts;
    }
};

inline double default_time_step(const NetworkGraph& net, size_t step_bus) {
    const auto sys = assemble_state_space(net, 0.0, step_bus);
    double fastest = 0.0;
    for (const auto& l : spectrum(sys.A)) fastest = std::max(fastest, std::abs(l));
    if (!(fastest > 0.0)) throw NumericalError("timesim: model has no dynamics to set a time step from");
    return 1.0 / (10.0 * fastest);
}

/// Implicit trapezoidal integration at fixed dt from a zero deviation.
inline StepResponse simulate_step(const NetworkGraph& net, size_t step_bus, double delta_v, double alpha,
                                  const StepOptions& opt = {}) {
    if (!(opt.t_end > 0.0)) throw InputError("timesim: t_end must be positive");
    const auto sys = assemble_state_space(net, alpha, step_bus);
    const double dt = opt.dt ? *opt.dt : default_time_step(net, step_bus);
    if (!(dt > 0.0)) throw InputError("timesim: dt must be positive");
    const auto steps = static_cast<Eigen::Index>(std::ceil(opt.t_end / dt - 1e-9));
    const Eigen::Index n = sys.A.rows(), nb = static_cast<Eigen::Index>(sys.bus_ids.size());
    const Eigen::Index ne = static_cast<Eigen::Index>(sys.edge_labels.size());

    StepResponse r;
    r.bus_ids = sys.bus_ids;
    r.edge_labels = sys.edge_labels;
    r.dt = dt;
    r.delta_v = delta_v;
    const Eigen::VectorXd yfin = sys.final_value(delta_v);
    r.v_final = yfin.head(nb);
    r.i_final = yfin.tail(ne);

    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I - 0.5 * dt * sys.A);
    const Eigen::MatrixXd Phi = lu.solve(I + 0.5 * dt * sys.A);
    const Eigen::VectorXd Gam = lu.solve(dt * sys.B * delta_v);
    Eigen::FullPivLU<Eigen::MatrixXd> alu(sys.A);
    const double scale = n > 0 && alu.isInvertible() ? alu.solve(sys.B * delta_v).norm() : std::abs(delta_v);

    r.v.resize(steps + 1, nb);
    r.i.resize(steps + 1, ne);
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k <= steps; ++k) {
        if (k > 0) {
            xi = Phi * xi + Gam;
            const double nx = xi.norm();
            if (!std::isfinite(nx) || nx > opt.growth_limit * std::max(scale, 1e-300))
                throw NumericalError("timesim: state norm " + std::to_string(nx) + " at t = " +
                                     std::to_string(static_cast<double>(k) * dt) +
                                     " exceeds the growth limit; the linearized system is unstable or dt too large");
        }
        const Eigen::VectorXd y = sys.C * xi + sys.D * (k > 0 ? delta_v : 0.0);
        r.t.push_back(static_cast<double>(k) * dt);
        r.v.row(k) = y.head(nb).transpose();
        r.i.row(k) = y.tail(ne).transpose();
    }
    return r;
}

/// DC change of bus voltages from re-solving the steady state with a perturbed source set point,
/// using each device's incremental DC admittance Re Y(0, alpha). At alpha = 0 this is the
/// operating-point solve itself.
inline std::vector<double> dc_step_resolve(const NetworkGraph& net, size_t step_bus, double delta_v, double alpha) {
    std::vector<double> g(net.size(), 0.0);
    for (size_t b = 0; b < net.size(); ++b)
        for (const auto& d : net.buses[b].devices)
            if (!std::holds_alternative<SourceModel>(d)) g[b] += device_admittance(d, alpha).eval(cplx(0.0)).real();
    std::vector<double> vs0, vs1;
    for (size_t b = 0; b < net.size(); ++b)
        for (const auto& d : net.buses[b].devices)
            if (auto s = std::get_if<SourceModel>(&d)) {
                vs0.push_back(s->Vs);
                vs1.push_back(s->Vs + (b == step_bus ? delta_v : 0.0));
            }
    const auto a = steady_state(net, &g, &vs0);
    const auto b = steady_state(net, &g, &vs1);
    std::vector<double> dv(net.size());
    for (size_t k = 0; k < net.size(); ++k) dv[k] = b.V0[k] - a.V0[k];
    return dv;
}

}  // namespace dcstab
