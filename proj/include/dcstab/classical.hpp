#pragma once

#include "network.hpp"

#include <string>
#include <vector>

namespace dcstab {

struct MinorLoopSample {
    double omega = 0.0;
    cplx T;
};

/// T_m(jw) = Y_load / Y_grid at one connection bus. Frequencies where the reduced grid is singular
/// or an element hits a pole are listed in `singular` and left out of `samples`.
struct MinorLoopGain {
    std::vector<MinorLoopSample> samples;
    std::vector<double> singular;

    /// Source and load roles exchanged: T -> 1 / T.
    MinorLoopGain swapped() const {
        MinorLoopGain out;
        out.singular = singular;
        for (const auto& s : samples) {
            if (s.T == cplx(0.0)) {
                out.singular.push_back(s.omega);
                continue;
            }
            out.samples.push_back({s.omega, 1.0 / s.T});
        }
        return out;
    }
};

/// The grid admittance excludes whatever is already attached at `bus`.
inline MinorLoopGain minor_loop_gain(const NetworkGraph& net, size_t bus, const Device& load, double alpha,
                                     const std::vector<double>& omegas) {
    for (size_t k = 1; k < omegas.size(); ++k)
        if (!(omegas[k] > omegas[k - 1])) throw InputError("minor_loop_gain: frequencies must be ascending");
    const auto yo = effective_admittance(net, bus, true, alpha);
    const DelayLft yl = device_admittance(load, alpha);
    MinorLoopGain m;
    for (double w : omegas) {
        try {
            const auto g = yo(w);
            const cplx l = yl.eval(cplx(0.0, w));
            if (!g || *g == cplx(0.0) || !std::isfinite(std::abs(*g)) || !std::isfinite(std::abs(l))) {
                m.singular.push_back(w);
                continue;
            }
            m.samples.push_back({w, l / *g});
        } catch (const PoleHit&) {
            m.singular.push_back(w);
        }
    }
    return m;
}

enum class Criterion { middlebrook, gmpm, opposing };

inline const char* criterion_name(Criterion c) {
    switch (c) {
        case Criterion::middlebrook: return "middlebrook";
        case Criterion::gmpm: return "gmpm";
        case Criterion::opposing: return "opposing";
    }
    return "";
}

/// Gain margin as a linear factor (1 = unity), phase margin in degrees.
struct CriterionOptions {
    double gain_margin = 1.0;
    double phase_margin_deg = 60.0;
};

struct CriterionVerdict {
    Criterion kind = Criterion::middlebrook;
    bool pass = true;
    std::vector<size_t> violations;  ///< sample indices
};

inline double arg_deg(cplx z) { return std::atan2(z.imag(), z.real()) * 180.0 / kPi; }

inline bool violates(Criterion kind, cplx T, const CriterionOptions& opt = {}) {
    const double lim = 1.0 / opt.gain_margin;
    switch (kind) {
        case Criterion::middlebrook: return !(std::abs(T) < lim);
        case Criterion::gmpm: {
            if (std::abs(T) < lim) return false;
            const double d = std::abs(std::remainder(arg_deg(T) - 180.0, 360.0));
            return d < opt.phase_margin_deg;
        }
        case Criterion::opposing: return !(T.real() > -lim);
    }
    return false;
}

inline CriterionVerdict criterion_check(const MinorLoopGain& mlg, Criterion kind, const CriterionOptions& opt = {}) {
    if (!(opt.gain_margin > 0.0)) throw InputError("gain margin must be positive");
    CriterionVerdict v;
    v.kind = kind;
    for (size_t k = 0; k < mlg.samples.size(); ++k)
        if (violates(kind, mlg.samples[k].T, opt)) v.violations.push_back(k);
    v.pass = v.violations.empty();
    return v;
}

/// Net encirclements of the origin by 1 + T_m over the sampled positive-frequency trace and its
/// mirror image; the closing arcs at 0 and infinity are not included.
inline double winding_number(const MinorLoopGain& mlg) {
    double total = 0.0;
    for (size_t k = 1; k < mlg.samples.size(); ++k) {
        const cplx a = 1.0 + mlg.samples[k - 1].T, b = 1.0 + mlg.samples[k].T;
        total += std::arg(b / a);
    }
    return 2.0 * total / (2.0 * kPi);
}

}  // namespace dcstab
