#pragma once

#include "network.hpp"

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dcstab {

/// Precondition of the certificate not met (named component not passive at alpha = 0).
struct PreconditionError : InputError {
    using InputError::InputError;
};

// ---------------------------------------------------------------------------
// Sector geometry
// ---------------------------------------------------------------------------

struct SectorResult {
    double margin_deg = 0.0;  ///< 180 - width of the minimal enclosing arc
    double arc_lo = 0.0;      ///< arc start (degrees), arc runs counter-clockwise by 180 - margin
    double phi_deg = 0.0;     ///< midpoint of the feasible rotation interval
};

inline double wrap180(double a) {
    a = std::fmod(a, 360.0);
    if (a > 180.0) a -= 360.0;
    if (a <= -180.0) a += 360.0;
    return a;
}

/// Minimal enclosing circular arc by the largest gap between sorted angles.
inline SectorResult sector_margin(const std::vector<double>& angles) {
    if (angles.empty()) throw InputError("sector_margin needs at least one angle");
    std::vector<double> a;
    for (double x : angles) a.push_back(std::fmod(std::fmod(x, 360.0) + 360.0, 360.0));
    std::sort(a.begin(), a.end());
    double gap = a.front() + 360.0 - a.back();
    double lo = a.front();
    for (size_t k = 1; k < a.size(); ++k)
        if (a[k] - a[k - 1] > gap) {
            gap = a[k] - a[k - 1];
            lo = a[k];
        }
    SectorResult r;
    const double width = 360.0 - gap;
    r.margin_deg = 180.0 - width;
    r.arc_lo = wrap180(lo);
    r.phi_deg = wrap180(-(lo + 0.5 * width));
    return r;
}

// ---------------------------------------------------------------------------
// Component sets and grids
// ---------------------------------------------------------------------------

struct Component {
    std::string id;
    std::function<DelayLft(double)> admittance;  ///< alpha -> Y(s, alpha)
    bool skip_passivity = false;                 ///< base is stable but not passive (checked elsewhere)
};

using ComponentSet = std::vector<Component>;

inline Component line_component(std::string id, const LineModel& line) {
    const Rational y = line_admittance(line);
    return {std::move(id), [y](double) { return DelayLft::from_rational(y); }, false};
}

inline Component device_component(std::string id, const Device& dev, bool skip_passivity = false) {
    return {std::move(id), [dev](double a) { return device_admittance(dev, a); }, skip_passivity};
}

/// One component per operating voltage; ids get an "@V" suffix.
inline ComponentSet device_variants(const std::string& id, const Device& dev, const std::vector<double>& voltages,
                                    bool skip_passivity = false) {
    ComponentSet out;
    if (voltages.empty()) {
        out.push_back(device_component(id, dev, skip_passivity));
        return out;
    }
    for (double v : voltages) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "@%g", v);
        out.push_back(device_component(id + buf, with_input_voltage(dev, v), skip_passivity));
    }
    return out;
}

/// Every line, source line and shunt device of a network as certificate components.
inline ComponentSet network_components(const NetworkGraph& net, bool skip_passivity = false) {
    ComponentSet out;
    for (const auto& e : net.edges) out.push_back(line_component("line:" + net.buses[e.i].id + "-" + net.buses[e.j].id, e.line));
    for (const auto& b : net.buses)
        for (size_t d = 0; d < b.devices.size(); ++d)
            out.push_back(device_component("bus" + b.id + "#" + std::to_string(d), b.devices[d], skip_passivity));
    return out;
}

inline std::vector<double> logspace(double lo, double hi, size_t n) {
    std::vector<double> w(n);
    const double a = std::log10(lo), b = std::log10(hi);
    for (size_t k = 0; k < n; ++k) w[k] = std::pow(10.0, n == 1 ? a : a + (b - a) * double(k) / double(n - 1));
    return w;
}

inline std::vector<double> linspace_step(double lo, double hi, double step) {
    std::vector<double> a;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long k = 0; k <= n; ++k) a.push_back(lo + step * double(k));
    if (a.empty() || a.back() < hi - 1e-12 * std::max(1.0, hi)) a.push_back(hi);
    return a;
}

struct SweepGrid {
    std::vector<double> omegas;
    std::vector<double> alphas;

    static SweepGrid standard(double alpha_max, double alpha_step = 0.05, double w_min = 1e-1, double w_max = 1e7,
                              size_t points = 2000) {
        return {logspace(w_min, w_max, points), linspace_step(0.0, alpha_max, alpha_step)};
    }
    void validate() const {
        if (omegas.empty() || alphas.empty()) throw InputError("sweep grid must be nonempty");
        if (!(omegas.front() > 0.0)) throw InputError("omega_min must be > 0");
        if (!std::is_sorted(omegas.begin(), omegas.end()) || !std::is_sorted(alphas.begin(), alphas.end()))
            throw InputError("sweep grid must be sorted");
        if (alphas.front() < 0.0) throw InputError("alpha grid must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Tracked sweep at one alpha
// ---------------------------------------------------------------------------

struct TrackOptions {
    double max_step_deg = 2.0;   ///< refine where any phase moves more than this between samples
    double margin_tol = 1e-6;    ///< margin at or below this is a violation
    int max_depth = 40;
    bool keep_samples = false;
};

struct TrackSample {
    double omega = 0.0;
    std::vector<double> theta;   ///< tracked (unwrapped) phases
    double margin = 0.0;
};

struct AlphaSweep {
    double alpha = 0.0;
    double min_margin = std::numeric_limits<double>::infinity();
    double worst_omega = 0.0;
    size_t worst_hi = 0, worst_lo = 0;  ///< components spanning the widest arc
    std::optional<double> first_violation;  ///< lowest omega with margin <= margin_tol
    size_t viol_hi = 0, viol_lo = 0;
    bool pole_hit = false;
    size_t evaluations = 0;
    std::vector<TrackSample> samples;
};

namespace detail {

inline bool phases_at(const std::vector<DelayLft>& ys, double w, std::vector<double>& out) {
    out.resize(ys.size());
    for (size_t k = 0; k < ys.size(); ++k) {
        try {
            const cplx v = ys[k].eval(cplx(0.0, w));
            if (!(std::abs(v) > 0.0) || !std::isfinite(std::abs(v))) return false;
            out[k] = angle_deg(v);
        } catch (const NumericalError&) {
            return false;
        }
    }
    return true;
}

}  // namespace detail

/// Tracks every component phase continuously along omega (anchored on the minimal arc at omega_min)
/// and records 180 - (max - min) of the tracked phases.
inline AlphaSweep track_alpha(const ComponentSet& set, double alpha, const std::vector<double>& omegas,
                              const TrackOptions& opt = {}) {
    AlphaSweep res;
    res.alpha = alpha;
    std::vector<DelayLft> ys;
    for (const auto& c : set) ys.push_back(c.admittance(alpha));
    const size_t m = ys.size();

    std::vector<double> wrapped, tracked(m), prev_wrapped;
    auto record = [&](double w, const std::vector<double>& th) {
        const auto [mn, mx] = std::minmax_element(th.begin(), th.end());
        const double margin = 180.0 - (*mx - *mn);
        if (margin < res.min_margin) {
            res.min_margin = margin;
            res.worst_omega = w;
            res.worst_hi = static_cast<size_t>(mx - th.begin());
            res.worst_lo = static_cast<size_t>(mn - th.begin());
        }
        if (margin <= opt.margin_tol && !res.first_violation) {
            res.first_violation = w;
            res.viol_hi = static_cast<size_t>(mx - th.begin());
            res.viol_lo = static_cast<size_t>(mn - th.begin());
        }
        if (opt.keep_samples) res.samples.push_back({w, th, margin});
    };
    auto fail_at = [&](double w) {
        res.pole_hit = true;
        if (!res.first_violation) res.first_violation = w;
        if (0.0 < res.min_margin || res.min_margin == std::numeric_limits<double>::infinity()) {
            res.min_margin = std::min(res.min_margin, 0.0);
            res.worst_omega = w;
        }
    };

    ++res.evaluations;
    if (!detail::phases_at(ys, omegas.front(), wrapped)) {
        fail_at(omegas.front());
        return res;
    }
    const SectorResult s0 = sector_margin(wrapped);
    for (size_t k = 0; k < m; ++k) tracked[k] = s0.arc_lo + std::fmod(std::fmod(wrapped[k] - s0.arc_lo, 360.0) + 360.0, 360.0);
    prev_wrapped = wrapped;
    record(omegas.front(), tracked);

    // recursive refinement between (w0, w1) given state at w0
    std::function<bool(double, double, int)> advance = [&](double w0, double w1, int depth) -> bool {
        std::vector<double> cur;
        ++res.evaluations;
        if (!detail::phases_at(ys, w1, cur)) {
            fail_at(w1);
            return false;
        }
        double big = 0.0;
        for (size_t k = 0; k < m; ++k) big = std::max(big, std::abs(wrap180(cur[k] - prev_wrapped[k])));
        if (big > opt.max_step_deg && depth < opt.max_depth && w1 / w0 - 1.0 > 1e-13) {
            const double wm = std::sqrt(w0 * w1);
            if (!advance(w0, wm, depth + 1)) return false;
            return advance(wm, w1, depth + 1);
        }
        for (size_t k = 0; k < m; ++k) tracked[k] += wrap180(cur[k] - prev_wrapped[k]);
        prev_wrapped = cur;
        record(w1, tracked);
        return true;
    };
    for (size_t i = 1; i < omegas.size(); ++i)
        if (!advance(omegas[i - 1], omegas[i], 0)) break;
    return res;
}

// ---------------------------------------------------------------------------
// Certificate
// ---------------------------------------------------------------------------

struct Violation {
    double omega = 0.0;
    double alpha = 0.0;
    std::vector<std::string> components;
};

struct CertificateReport {
    bool pass = false;
    double margin_deg = 0.0;
    std::optional<Violation> violation;
    double max_feasible_alpha = 0.0;
    bool zero_freq_ok = true;
    bool zero_freq_checked = false;
    double tail_spread_deg = 0.0;        ///< arc width of the asymptotic (omega -> inf) phases
    std::vector<double> alpha_margins;   ///< min margin per grid alpha
    size_t evaluations = 0;
};

struct CertifyOptions {
    TrackOptions track;
    double passivity_w_min = 1e-2, passivity_w_max = 1e7;
    size_t passivity_points = 400;
};

/// Throws PreconditionError naming the first component with Re Y(jw, 0) < 0.
inline void check_passivity(const ComponentSet& set, const CertifyOptions& opt = {}) {
    const auto ws = logspace(opt.passivity_w_min, opt.passivity_w_max, opt.passivity_points);
    for (const auto& c : set) {
        if (c.skip_passivity) continue;
        const DelayLft y = c.admittance(0.0);
        for (double w : ws) {
            const cplx v = y.eval(cplx(0.0, w));
            if (v.real() < -1e-12 * std::abs(v))
                throw PreconditionError("component '" + c.id + "' is not passive at alpha = 0 (Re Y = " +
                                        std::to_string(v.real()) + " at w = " + std::to_string(w) + ")");
        }
    }
}

inline double tail_spread(const ComponentSet& set) {
    std::vector<double> a;
    for (const auto& c : set) a.push_back(asymptotic_phase_deg(c.admittance(1.0)));
    return 180.0 - sector_margin(a).margin_deg;
}

/// Zero-frequency check on a network: det Y(j0, alpha) keeps its sign and stays off zero.
struct ZeroFreqResult {
    bool ok = true;
    std::vector<double> dets;       ///< det Y(0, alpha) per alpha
    std::vector<double> relative;   ///< |det| / prod of row norms
};

inline ZeroFreqResult zero_frequency_check(const NetworkGraph& net, const std::vector<double>& alphas,
                                           double rel_floor = 1e-10) {
    ZeroFreqResult r;
    int sign0 = 0;
    for (double a : alphas) {
        const Eigen::MatrixXd Y = assemble_Y(net, cplx(0.0), a).real();
        const double d = Y.determinant();
        double scale = 1.0;
        for (Eigen::Index i = 0; i < Y.rows(); ++i) scale *= Y.row(i).norm();
        const double rel = scale > 0 ? std::abs(d) / scale : 0.0;
        r.dets.push_back(d);
        r.relative.push_back(rel);
        const int sg = d > 0 ? 1 : (d < 0 ? -1 : 0);
        if (sign0 == 0) sign0 = sg;
        if (sg == 0 || sg != sign0 || rel < rel_floor) r.ok = false;
    }
    return r;
}

/// Decentralized certificate over the (omega, alpha) grid. With a network, the zero-frequency
/// condition is checked on it as well.
inline CertificateReport certify(const ComponentSet& set, const SweepGrid& grid, double margin_tol = 1e-6,
                                 const NetworkGraph* net = nullptr, const CertifyOptions& opt = {}) {
    if (set.empty()) throw InputError("component set is empty");
    grid.validate();
    check_passivity(set, opt);
    CertificateReport rep;
    rep.margin_deg = std::numeric_limits<double>::infinity();
    TrackOptions topt = opt.track;
    topt.margin_tol = margin_tol;
    bool prefix_ok = true;
    for (double a : grid.alphas) {
        const AlphaSweep sw = track_alpha(set, a, grid.omegas, topt);
        rep.evaluations += sw.evaluations;
        rep.alpha_margins.push_back(sw.min_margin);
        const bool ok = sw.min_margin > margin_tol && !sw.pole_hit;
        rep.margin_deg = std::min(rep.margin_deg, sw.min_margin);
        if (!ok && !rep.violation)
            rep.violation = Violation{sw.first_violation.value_or(sw.worst_omega), a,
                                      {set[sw.viol_hi].id, set[sw.viol_lo].id}};
        if (ok && prefix_ok) rep.max_feasible_alpha = a;
        if (!ok) prefix_ok = false;
    }
    if (net) {
        rep.zero_freq_checked = true;
        rep.zero_freq_ok = zero_frequency_check(*net, grid.alphas).ok;
    }
    rep.pass = prefix_ok && rep.zero_freq_ok;
    rep.tail_spread_deg = tail_spread(set);
    return rep;
}

struct MaxAlphaResult {
    double alpha = 0.0;
    bool capped = false;          ///< every grid alpha passed
    double break_omega = 0.0;     ///< lowest violating omega just above the break
    double margin_at_alpha = 0.0;
    int bisection_steps = 0;
};

/// Largest alpha for which the certificate holds at every omega: grid scan, then bisection.
inline MaxAlphaResult max_alpha(const ComponentSet& set, const SweepGrid& grid, double margin_tol = 1e-6,
                                int min_steps = 10, double rel_tol = 1e-5, const CertifyOptions& opt = {}) {
    if (set.empty()) throw InputError("component set is empty");
    grid.validate();
    check_passivity(set, opt);
    TrackOptions topt = opt.track;
    topt.margin_tol = margin_tol;
    auto passes = [&](double a, AlphaSweep* out = nullptr) {
        AlphaSweep sw = track_alpha(set, a, grid.omegas, topt);
        const bool ok = sw.min_margin > margin_tol && !sw.pole_hit;
        if (out) *out = std::move(sw);
        return ok;
    };
    MaxAlphaResult res;
    double lo = -1.0, hi = -1.0;
    AlphaSweep last_ok, first_bad;
    for (double a : grid.alphas) {
        AlphaSweep sw;
        if (passes(a, &sw)) {
            lo = a;
            last_ok = std::move(sw);
        } else {
            hi = a;
            first_bad = std::move(sw);
            break;
        }
    }
    if (lo < 0.0) throw PreconditionError("certificate fails at the smallest grid alpha");
    if (hi < 0.0) {
        res.alpha = lo;
        res.capped = true;
        res.margin_at_alpha = last_ok.min_margin;
        return res;
    }
    int steps = 0;
    while (steps < min_steps || hi - lo > rel_tol * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        AlphaSweep sw;
        if (passes(mid, &sw)) {
            lo = mid;
            last_ok = std::move(sw);
        } else {
            hi = mid;
            first_bad = std::move(sw);
        }
        ++steps;
        if (steps > 200) break;
    }
    res.alpha = lo;
    res.break_omega = first_bad.first_violation.value_or(first_bad.worst_omega);
    res.margin_at_alpha = last_ok.min_margin;
    res.bisection_steps = steps;
    return res;
}

}  // namespace dcstab
