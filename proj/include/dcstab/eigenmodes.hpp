#pragma once

#include "network.hpp"

#include <Eigen/SVD>

#include <optional>
#include <vector>

namespace dcstab {

/// Rational elements of Y(s, alpha); delay models are rejected.
struct RationalElement {
    size_t i = 0;
    long j = -1;
    Rational y;
};

inline std::vector<RationalElement> rational_elements(const NetworkGraph& net, double alpha) {
    if (net.has_delay()) throw InputError("eigenmodes: delay models have a transcendental characteristic equation");
    std::vector<RationalElement> out;
    for (const auto& e : elements(net, alpha)) out.push_back({e.i, e.j, e.y.to_rational()});
    return out;
}

namespace detail {

inline void stamp_r(Eigen::MatrixXcd& Y, const RationalElement& e, cplx v) {
    const auto i = static_cast<Eigen::Index>(e.i);
    if (e.j < 0) {
        Y(i, i) += v;
        return;
    }
    const auto j = static_cast<Eigen::Index>(e.j);
    Y(i, i) += v, Y(j, j) += v, Y(i, j) -= v, Y(j, i) -= v;
}

inline Eigen::MatrixXcd assemble(const std::vector<RationalElement>& els, size_t n, cplx s) {
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& e : els) stamp_r(Y, e, e.y.num()(s) / e.y.den()(s));
    return Y;
}

/// Row-rule degree bound computed from the element structure.
inline int element_degree_bound(const std::vector<RationalElement>& els, size_t n) {
    int total = 0, product = 0, excess = 0;
    for (const auto& e : els) {
        product += e.y.den().degree();
        excess = std::max(excess, std::max(0, e.y.relative_degree()));
    }
    for (size_t r = 0; r < n; ++r) {
        std::vector<Poly> dens;
        int ex = 0;
        for (const auto& e : els) {
            if (e.i != r && e.j != static_cast<long>(r)) continue;
            ex = std::max(ex, std::max(0, e.y.relative_degree()));
            bool seen = false;
            for (const auto& d : dens)
                if (approx_equal(d, e.y.den(), 1e-12)) seen = true;
            if (!seen) dens.push_back(e.y.den());
        }
        int row = ex;
        for (const auto& d : dens) row += d.degree();
        total += row;
    }
    return std::max(total, product + static_cast<int>(n) * excess);
}

}  // namespace detail

struct CharPolyInfo {
    Poly scaled;  ///< same polynomial in z = s / radius
    int degree_bound = 0;
    int degree = 0;
    double radius = 0.0;
    bool rescaled = false;
};

/// Numerator of det Y(s, alpha) after clearing with the product of the element denominators.
/// Returned monic in s.
inline Poly char_poly(const NetworkGraph& net, double alpha, CharPolyInfo* info = nullptr) {
    const auto els = rational_elements(net, alpha);
    const size_t n = net.size();
    std::vector<Poly> den;
    double radius = 1.0;
    for (const auto& e : els) {
        den.push_back(e.y.den());
        radius = std::max({radius, root_bound(e.y.den()), root_bound(e.y.num())});
    }
    const int bound = detail::element_degree_bound(els, n);
    DetInfo di;
    Poly p = interpolate_det_numerator(
        [&](cplx s) { return detail::complex_det(detail::assemble(els, n, s)); }, den, bound, radius, 1e-12, 1e-7,
        &di);
    if (info) *info = {di.scaled, bound, di.achieved_degree, di.radius, di.rescaled};
    return p;
}

struct EigenOptions {
    int max_sweeps = 200;
    double step_tol = 1e-13;        ///< relative Aberth correction for convergence
    double pole_tol = 1e-6;         ///< roots this close (relative) to an element pole are artifacts
    double singular_tol = 1e-6;     ///< sigma_min / sigma_max of Y(root) for a genuine eigenmode
    double conj_tol = 1e-8;
};

struct EigenResult {
    std::vector<cplx> modes;        ///< sorted by real part, descending
    std::vector<cplx> discarded;
    int degree = 0;
    double max_real() const { return modes.empty() ? -std::numeric_limits<double>::infinity() : modes.front().real(); }
};

namespace detail {

/// f'/f for f(s) = prod d_e(s) * det Y(s).
inline cplx log_derivative(const std::vector<RationalElement>& els, size_t n, cplx s, bool& singular) {
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::MatrixXcd dY = Y;
    cplx ld(0.0);
    for (const auto& e : els) {
        const Poly &N = e.y.num(), &D = e.y.den();
        const cplx nv = N(s), dv = D(s), dn = N.derivative()(s), dd = D.derivative()(s);
        ld += dd / dv;
        stamp_r(Y, e, nv / dv);
        stamp_r(dY, e, (dn * dv - nv * dd) / (dv * dv));
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Y);
    const cplx det = lu.determinant();
    singular = !(std::abs(det) > 0.0) || !std::isfinite(std::abs(det));
    if (singular) return cplx(0.0);
    return ld + lu.solve(dY).trace();
}

inline std::vector<cplx> aberth_refine(const std::vector<RationalElement>& els, size_t n, std::vector<cplx> z,
                                       const EigenOptions& opt) {
    const size_t m = z.size();
    // separate coincident starts so the Aberth repulsion term is finite
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < i; ++j)
            if (std::abs(z[i] - z[j]) <= 1e-12 * std::max(1.0, std::abs(z[i])))
                z[i] += cplx(1e-7, 1e-7) * std::max(1.0, std::abs(z[i]));
    std::vector<bool> done(m, false);
    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        double worst = 0.0;
        for (size_t i = 0; i < m; ++i) {
            if (done[i]) continue;
            bool singular = false;
            const cplx g = log_derivative(els, n, z[i], singular);
            if (singular || g == cplx(0.0)) {
                done[i] = true;
                continue;
            }
            const cplx newton = 1.0 / g;
            cplx rep(0.0);
            for (size_t j = 0; j < m; ++j)
                if (j != i) rep += 1.0 / (z[i] - z[j]);
            const cplx w = newton / (1.0 - newton * rep);
            if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) continue;
            z[i] -= w;
            const double rel = std::abs(w) / std::max(1.0, std::abs(z[i]));
            worst = std::max(worst, rel);
            if (rel < opt.step_tol) done[i] = true;
        }
        if (worst < opt.step_tol) break;
    }
    return z;
}

/// Pairs each nonreal root with its nearest conjugate and makes the pair exact.
inline std::vector<cplx> symmetrize(std::vector<cplx> z, double tol) {
    const size_t m = z.size();
    std::vector<bool> used(m, false);
    std::vector<cplx> out;
    for (size_t i = 0; i < m; ++i) {
        if (used[i]) continue;
        used[i] = true;
        const double scale = std::max(1.0, std::abs(z[i]));
        if (std::abs(z[i].imag()) <= 1e-9 * scale) {
            out.emplace_back(z[i].real(), 0.0);
            continue;
        }
        size_t best = m;
        double bd = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < m; ++j) {
            if (used[j]) continue;
            const double d = std::abs(z[j] - std::conj(z[i]));
            if (d < bd) bd = d, best = j;
        }
        if (best < m && bd <= std::max(tol, 1e-6) * scale) {
            used[best] = true;
            const cplx avg = 0.5 * (z[i] + std::conj(z[best]));
            out.push_back(avg);
            out.push_back(std::conj(avg));
        } else {
            out.push_back(z[i]);
        }
    }
    return out;
}

}  // namespace detail

/// Roots of det Y(s, alpha): companion roots of the characteristic polynomial, refined by Aberth
/// iteration on the pointwise determinant and screened against element poles.
inline EigenResult eigenmodes(const NetworkGraph& net, double alpha, const EigenOptions& opt = {}) {
    const auto els = rational_elements(net, alpha);
    const size_t n = net.size();
    CharPolyInfo ci;
    const Poly p = char_poly(net, alpha, &ci);
    EigenResult res;
    res.degree = p.degree();
    if (p.degree() < 1) return res;
    RootOptions ro;
    ro.residual_tol = std::numeric_limits<double>::infinity();
    auto z0 = poly_roots(ci.scaled, ro);
    for (auto& r : z0) r *= ci.radius;
    auto z = detail::aberth_refine(els, n, std::move(z0), opt);
    z = detail::symmetrize(std::move(z), opt.conj_tol);

    std::vector<cplx> poles;
    for (const auto& e : els)
        if (e.y.den().degree() >= 1)
            for (const auto& q : poly_roots(e.y.den())) poles.push_back(q);
    for (const auto& r : z) {
        bool spurious = false;
        for (const auto& q : poles)
            if (std::abs(r - q) <= opt.pole_tol * std::max(1.0, std::abs(q))) spurious = true;
        if (!spurious) {
            const Eigen::MatrixXcd Y = detail::assemble(els, n, r);
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Y);
            const auto& sv = svd.singularValues();
            if (!(sv(sv.size() - 1) <= opt.singular_tol * sv(0))) spurious = true;
        }
        (spurious ? res.discarded : res.modes).push_back(r);
    }
    std::sort(res.modes.begin(), res.modes.end(), [](cplx a, cplx b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return res;
}

struct LocusTrace {
    std::vector<double> alphas;
    std::vector<std::vector<cplx>> modes;
    std::vector<double> max_real;
    std::vector<int> degree;
    std::optional<double> marginal_alpha;
};

/// Bisection on the sign of the largest eigenmode real part.
inline double marginal_alpha(const NetworkGraph& net, double lo, double hi, double tol = 1e-4,
                             const EigenOptions& opt = {}) {
    double flo = eigenmodes(net, lo, opt).max_real();
    double fhi = eigenmodes(net, hi, opt).max_real();
    if (!(flo < 0.0 && fhi >= 0.0)) throw NumericalError("marginal_alpha: no sign change of max real part in bracket");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = eigenmodes(net, mid, opt).max_real();
        (fm < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline LocusTrace locus(const NetworkGraph& net, const std::vector<double>& alphas, bool find_crossing = true,
                        double tol = 1e-4, const EigenOptions& opt = {}) {
    LocusTrace tr;
    for (double a : alphas) {
        auto r = eigenmodes(net, a, opt);
        tr.alphas.push_back(a);
        tr.max_real.push_back(r.max_real());
        tr.degree.push_back(r.degree);
        tr.modes.push_back(std::move(r.modes));
    }
    if (find_crossing)
        for (size_t k = 1; k < tr.alphas.size(); ++k)
            if (tr.max_real[k - 1] < 0.0 && tr.max_real[k] >= 0.0) {
                tr.marginal_alpha = marginal_alpha(net, tr.alphas[k - 1], tr.alphas[k], tol, opt);
                break;
            }
    return tr;
}

}  // namespace dcstab
