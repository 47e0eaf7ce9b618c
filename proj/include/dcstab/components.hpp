#pragma once

#include "core_tf.hpp"

#include <string>
#include <variant>

namespace dcstab {

// ---------------------------------------------------------------------------
// Parameter records
// ---------------------------------------------------------------------------

/// Series RL line: R = r * length, L = tau * R.
struct LineModel {
    double R = 0.1;
    double L = 1e-4;

    static LineModel from_length(double length_km, double r_per_km, double tau) {
        const double R = r_per_km * length_km;
        return {R, tau * R};
    }
    double tau() const { return L / R; }
    void validate() const {
        if (!(R > 0.0)) throw InputError("line resistance must be > 0");
        if (!(L >= 0.0)) throw InputError("line inductance must be >= 0");
    }
};

enum class CompensatorKind { lead_lag, pi, pi_gain };

/// Controller transfer function Gc = Nc/Dc with an optional transport delay.
struct Compensator {
    CompensatorKind kind = CompensatorKind::lead_lag;
    // lead-lag: Gc_inf (1 + wL/s)(1 + s/wz)/(1 + s/wp)
    double Gc_inf = 3.7, wL = 2 * kPi * 500, wz = 2 * kPi * 1700, wp = 2 * kPi * 14.5e3;
    // PI: Gi (1 + wi/s)
    double Gi = 0.015, wi = 2 * kPi * 500;
    // PI in gain form: K (1 + 1/(s tau_i))
    double K = 1.0, tau_i = 0.25;
    double tau_d = 0.0;

    static Compensator lead_lag(double Gc_inf, double wL, double wz, double wp) {
        Compensator c;
        c.kind = CompensatorKind::lead_lag;
        c.Gc_inf = Gc_inf, c.wL = wL, c.wz = wz, c.wp = wp;
        return c;
    }
    static Compensator pi(double Gi, double wi) {
        Compensator c;
        c.kind = CompensatorKind::pi;
        c.Gi = Gi, c.wi = wi;
        return c;
    }
    static Compensator pi_gain(double K, double tau_i) {
        Compensator c;
        c.kind = CompensatorKind::pi_gain;
        c.K = K, c.tau_i = tau_i;
        return c;
    }

    Poly num() const {
        switch (kind) {
            case CompensatorKind::lead_lag: return Gc_inf * (Poly{wL, 1.0} * Poly{1.0, 1.0 / wz});
            case CompensatorKind::pi: return Gi * Poly{wi, 1.0};
            case CompensatorKind::pi_gain: return K * Poly{1.0, tau_i};
        }
        return Poly();
    }
    Poly den() const {
        switch (kind) {
            case CompensatorKind::lead_lag: return Poly{0.0, 1.0} * Poly{1.0, 1.0 / wp};
            case CompensatorKind::pi: return Poly{0.0, 1.0};
            case CompensatorKind::pi_gain: return Poly{0.0, tau_i};
        }
        return Poly::constant(1.0);
    }
    Rational tf() const { return Rational(num(), den()); }

    void validate() const {
        const bool ok = kind == CompensatorKind::lead_lag ? (wL > 0 && wz > 0 && wp > 0 && Gc_inf >= 0)
                        : kind == CompensatorKind::pi      ? (wi > 0 && Gi >= 0)
                                                           : (tau_i > 0 && K >= 0);
        if (!ok) throw InputError("compensator corner frequencies must be > 0 and gains >= 0");
        if (!(tau_d >= 0.0)) throw InputError("compensator delay must be >= 0");
    }
};

/// Voltage-mode buck converter with filter capacitor at its input.
struct BuckConverterModel {
    double V = 30.0, R = 3.0, L = 50e-6, C = 500e-6, D = 0.536;
    double H = 1.0 / 3.0, Vm = 4.0, Cf = 500e-6;
    Compensator comp;

    void validate() const {
        if (!(D > 0.0 && D < 1.0)) throw InputError("buck duty cycle must be in (0, 1)");
        if (!(R > 0 && L > 0 && C > 0 && Vm > 0)) throw InputError("buck R, L, C, Vm must be > 0");
        if (!(Cf >= 0.0)) throw InputError("buck Cf must be >= 0");
        comp.validate();
    }
    double Gd0() const { return V / D; }
    double w0() const { return 1.0 / std::sqrt(L * C); }
    double zeta() const { return std::sqrt(L / C) / (2.0 * R); }
    /// Output-stage denominator R + sL + s^2 RLC divided by RLC.
    Poly P() const { return Poly{1.0 / (L * C), 1.0 / (R * C), 1.0}; }
    /// Duty-to-output transfer Gd0 w0^2 / (s^2 + 2 zeta w0 s + w0^2).
    Rational Gvd() const { return Rational(Poly::constant(Gd0() * w0() * w0()), P()); }
};

/// Average-current-mode boost converter (inner current loop, outer voltage loop).
struct BoostConverterModel {
    double V = 28.0, R = 33.33, L = 50e-6, C = 500e-6, Dp = 0.56;
    double Gcm = 0.0318, wc1 = 2 * kPi * 400, wc2 = 2 * kPi * 12.5e3;
    double Gvm = 3.125, wv1 = 2 * kPi * 167;
    double Cf = 2500e-6;

    void validate() const {
        if (!(Dp > 0.0 && Dp < 1.0)) throw InputError("boost D' must be in (0, 1)");
        if (!(R > 0 && L > 0 && C > 0 && Gcm > 0 && Gvm > 0 && wc1 > 0 && wc2 > 0 && wv1 > 0))
            throw InputError("boost parameters must be > 0");
        if (!(Cf >= 0.0)) throw InputError("boost Cf must be >= 0");
    }
    double w0() const { return Dp / std::sqrt(L * C); }
    double Q() const { return Dp * R * std::sqrt(C / L); }
    Poly plant_den() const { return Poly{1.0, 1.0 / (Q() * w0()), 1.0 / (w0() * w0())}; }
    Poly n_vd() const { return (V / Dp) * Poly{1.0, -L / (Dp * Dp * R)}; }
    Poly n_id() const { return (2.0 * V / (Dp * Dp * R)) * Poly{1.0, R * C / 2.0}; }
    Poly n_vg() const { return Poly::constant(1.0 / Dp); }
    Poly n_ig() const { return (1.0 / (Dp * Dp * R)) * Poly{1.0, R * C}; }
};

/// Stiff source behind a short series line.
struct SourceModel {
    double Vs = 30.0;
    LineModel series;
};

/// Generic regulated load: plant / (1 + alpha Gc plant), plus optional shunt capacitance.
struct RegulatedLoad {
    Rational plant;
    Compensator comp;
    double Cf = 0.0;
};

/// Fixed rational shunt, independent of alpha.
struct FixedAdmittance {
    Rational y;
};

using Device = std::variant<SourceModel, BuckConverterModel, BoostConverterModel, RegulatedLoad, FixedAdmittance>;

// ---------------------------------------------------------------------------
// Admittances
// ---------------------------------------------------------------------------

inline Rational line_admittance(const LineModel& line) {
    line.validate();
    return Rational(Poly::constant(1.0), Poly{line.R, line.L});
}

inline Rational source_admittance(const SourceModel& src) { return line_admittance(src.series); }

/// Buck input admittance with the loop gain scaled by alpha and delayed by tau_d.
/// Built in reduced form, so the output-stage denominator cancels exactly:
///   Y = D^2[(1+sRC) Vm Dc - LC Nx E] / (RLC (Vm Dc P + Nx E)) + Cf s,
/// with Nx = alpha H Gd0 w0^2 Nc and E = exp(-s tau_d).
inline DelayLft buck_admittance(const BuckConverterModel& m, double alpha) {
    m.validate();
    if (alpha < 0.0) throw InputError("alpha must be >= 0");
    const double LC = m.L * m.C, RLC = m.R * LC, D2 = m.D * m.D;
    const Poly one_rc{1.0, m.R * m.C};
    const Poly s{0.0, 1.0};
    DelayLft y;
    if (alpha == 0.0) {
        y.a = D2 * one_rc;
        y.c = RLC * m.P();
    } else {
        const Poly Nx = (alpha * m.H * m.Gd0() * m.w0() * m.w0()) * m.comp.num();
        const Poly Dc = m.comp.den();
        y.a = (D2 * m.Vm) * (one_rc * Dc);
        y.b = (-D2 * LC) * Nx;
        y.c = (RLC * m.Vm) * (Dc * m.P());
        y.d = RLC * Nx;
        y.delay = m.comp.tau_d;
    }
    if (m.Cf > 0.0) {
        y.a = y.a + (m.Cf * s) * y.c;
        y.b = y.b + (m.Cf * s) * y.d;
    }
    return y;
}

/// Boost input admittance with alpha scaling both compensators.
inline DelayLft boost_admittance(const BoostConverterModel& m, double alpha) {
    m.validate();
    if (alpha < 0.0) throw InputError("alpha must be >= 0");
    const Poly s{0.0, 1.0};
    const Poly den = m.plant_den();
    Poly N, Q;
    if (alpha == 0.0) {
        N = m.n_ig();
        Q = den;
    } else {
        const Poly nci = m.Gcm * Poly{m.wc1, 1.0};
        const Poly dci = s * Poly{1.0, 1.0 / m.wc2};
        const Poly ncv = m.Gvm * Poly{m.wv1, 1.0};
        const Poly dcv = s;
        const double a2 = alpha * alpha;
        N = m.n_ig() * dcv * dci * den + a2 * (ncv * nci * (m.n_vd() * m.n_ig() - m.n_id() * m.n_vg()));
        Q = dcv * dci * den * den + alpha * (nci * m.n_id() * dcv * den) + a2 * (ncv * nci * m.n_vd() * den);
    }
    DelayLft y;
    y.a = N + (m.Cf * s) * Q;
    y.c = Q;
    return y;
}

/// plant / (1 + alpha Gc plant) + Cf s; the delay (if any) sits on the loop gain.
inline DelayLft regulated_load_admittance(const RegulatedLoad& m, double alpha) {
    m.comp.validate();
    if (alpha < 0.0) throw InputError("alpha must be >= 0");
    const Poly s{0.0, 1.0};
    const Poly &np = m.plant.num(), &dp = m.plant.den();
    DelayLft y;
    if (alpha == 0.0) {
        y.a = np;
        y.c = dp;
    } else {
        const Poly nc = m.comp.num(), dc = m.comp.den();
        y.a = np * dc;
        y.c = dp * dc;
        y.d = alpha * (np * nc);
        y.delay = m.comp.tau_d;
    }
    if (m.Cf > 0.0) {
        y.a = y.a + (m.Cf * s) * y.c;
        y.b = y.b + (m.Cf * s) * y.d;
    }
    return y;
}

/// Shunt admittance of any device at gain scaling alpha.
inline DelayLft device_admittance(const Device& dev, double alpha) {
    return std::visit(
        [alpha](const auto& m) -> DelayLft {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SourceModel>) return DelayLft::from_rational(source_admittance(m));
            else if constexpr (std::is_same_v<T, BuckConverterModel>) return buck_admittance(m, alpha);
            else if constexpr (std::is_same_v<T, BoostConverterModel>) return boost_admittance(m, alpha);
            else if constexpr (std::is_same_v<T, RegulatedLoad>) return regulated_load_admittance(m, alpha);
            else return DelayLft::from_rational(m.y);
        },
        dev);
}

inline bool device_has_delay(const Device& dev) {
    if (auto b = std::get_if<BuckConverterModel>(&dev)) return b->comp.tau_d > 0.0;
    if (auto r = std::get_if<RegulatedLoad>(&dev)) return r->comp.tau_d > 0.0;
    return false;
}

/// Copy of the device with its input voltage replaced (operating-point parameterization).
inline Device with_input_voltage(const Device& dev, double V) {
    Device out = dev;
    if (auto b = std::get_if<BuckConverterModel>(&out)) b->V = V;
    if (auto b = std::get_if<BoostConverterModel>(&out)) b->V = V;
    return out;
}

// ---------------------------------------------------------------------------
// Phase
// ---------------------------------------------------------------------------

/// Degrees in (-180, 180]; the negative real axis maps to +180.
inline double angle_deg(cplx y) {
    if (y == cplx(0.0)) throw NumericalError("phase of zero-magnitude value");
    double a = std::atan2(y.imag(), y.real()) * 180.0 / kPi;
    if (a <= -180.0) a += 360.0;
    return a;
}

template <class F>
double phase_response(const F& y, double omega) {
    if (!(omega > 0.0)) throw InputError("phase_response needs omega > 0");
    return angle_deg(y.eval(cplx(0.0, omega)));
}

/// Phase of y(jw) as w -> inf from the leading terms; delay forms use their rational part.
inline double asymptotic_phase_deg(const Poly& num, const Poly& den) {
    const int rel = num.degree() - den.degree();
    const double sign = num.leading() / den.leading();
    double a = 90.0 * rel + (sign < 0 ? 180.0 : 0.0);
    a = std::fmod(a, 360.0);
    if (a > 180.0) a -= 360.0;
    if (a <= -180.0) a += 360.0;
    return a;
}

inline double asymptotic_phase_deg(const DelayLft& y) {
    // with delay the high-frequency phase is not defined; the delay-free part is reported
    return asymptotic_phase_deg(y.a + y.b, y.c + y.d);
}

// ---------------------------------------------------------------------------
// Reference parameter sets
// ---------------------------------------------------------------------------

inline Compensator reference_lead_lag() { return Compensator::lead_lag(3.7, 2 * kPi * 500, 2 * kPi * 1700, 2 * kPi * 14.5e3); }
inline Compensator reference_pi() { return Compensator::pi(0.015, 2 * kPi * 500); }

inline BuckConverterModel reference_buck(double V = 30.0, Compensator comp = reference_lead_lag()) {
    BuckConverterModel m;
    m.V = V;
    m.comp = comp;
    return m;
}

inline BoostConverterModel reference_boost() { return BoostConverterModel{}; }

/// 0.1 ohm/km, L/R = tau.
inline LineModel reference_line(double length_km = 1.0, double tau = 1e-3) {
    return LineModel::from_length(length_km, 0.1, tau);
}

}  // namespace dcstab
