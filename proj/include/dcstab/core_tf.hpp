#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcstab {

using cplx = std::complex<double>;
inline constexpr double kPi = std::numbers::pi;

/// Bad user input: malformed files, invalid parameters.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A numerical procedure could not meet its contract.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Evaluation landed on (or numerically at) a pole.
struct PoleHit : NumericalError {
    using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------
// Poly
// ---------------------------------------------------------------------------

/// Real polynomial with ascending coefficients c[0] + c[1] s + ...
class Poly {
public:
    Poly() : c_{0.0} {}
    Poly(std::initializer_list<double> c) : c_(c) { normalize(); }
    explicit Poly(std::vector<double> c) : c_(std::move(c)) { normalize(); }

    static Poly constant(double v) { return Poly(std::vector<double>{v}); }
    static Poly monomial(int k, double v = 1.0) {
        std::vector<double> c(static_cast<size_t>(k) + 1, 0.0);
        c.back() = v;
        return Poly(std::move(c));
    }
    /// lead * prod (s - r_i); imaginary round-off of conjugate sets is dropped.
    static Poly from_roots(const std::vector<cplx>& roots, double lead = 1.0) {
        std::vector<cplx> p{cplx(lead)};
        for (const auto& r : roots) {
            std::vector<cplx> q(p.size() + 1, cplx(0));
            for (size_t k = 0; k < p.size(); ++k) {
                q[k + 1] += p[k];
                q[k] -= r * p[k];
            }
            p = std::move(q);
        }
        std::vector<double> c(p.size());
        for (size_t k = 0; k < p.size(); ++k) c[k] = p[k].real();
        return Poly(std::move(c));
    }

    int degree() const { return static_cast<int>(c_.size()) - 1; }
    const std::vector<double>& coeffs() const { return c_; }
    double operator[](size_t k) const { return k < c_.size() ? c_[k] : 0.0; }
    double leading() const { return c_.back(); }
    bool is_zero() const { return c_.size() == 1 && c_[0] == 0.0; }

    double norm_inf() const {
        double m = 0.0;
        for (double v : c_) m = std::max(m, std::abs(v));
        return m;
    }

    template <class T>
    T eval(T s) const {
        T acc = T(c_.back());
        for (int k = degree() - 1; k >= 0; --k) acc = acc * s + T(c_[static_cast<size_t>(k)]);
        return acc;
    }
    cplx operator()(cplx s) const { return eval(s); }

    /// sum |c_k| |s|^k, the natural scale for relative residuals at s.
    double magnitude_scale(double abs_s) const {
        double acc = 0.0;
        for (int k = degree(); k >= 0; --k) acc = acc * abs_s + std::abs(c_[static_cast<size_t>(k)]);
        return acc;
    }

    Poly derivative() const {
        if (degree() == 0) return Poly();
        std::vector<double> d(c_.size() - 1);
        for (size_t k = 1; k < c_.size(); ++k) d[k - 1] = static_cast<double>(k) * c_[k];
        return Poly(std::move(d));
    }

    /// Coefficients of p(rho z) in z.
    Poly scaled(double rho) const {
        std::vector<double> d(c_);
        double f = 1.0;
        for (double& v : d) {
            v *= f;
            f *= rho;
        }
        return Poly(std::move(d));
    }

    /// Drops leading coefficients below rel_tol * max|c|.
    Poly trimmed(double rel_tol) const {
        const double lim = rel_tol * norm_inf();
        std::vector<double> d(c_);
        while (d.size() > 1 && std::abs(d.back()) <= lim) d.pop_back();
        return Poly(std::move(d));
    }

    friend Poly operator+(const Poly& a, const Poly& b) {
        std::vector<double> r(std::max(a.c_.size(), b.c_.size()), 0.0);
        for (size_t k = 0; k < r.size(); ++k) r[k] = a[k] + b[k];
        return Poly(std::move(r));
    }
    friend Poly operator-(const Poly& a) {
        std::vector<double> r(a.c_);
        for (double& v : r) v = -v;
        return Poly(std::move(r));
    }
    friend Poly operator-(const Poly& a, const Poly& b) { return a + (-b); }
    friend Poly operator*(const Poly& a, const Poly& b) {
        if (a.is_zero() || b.is_zero()) return Poly();
        std::vector<double> r(a.c_.size() + b.c_.size() - 1, 0.0);
        for (size_t i = 0; i < a.c_.size(); ++i)
            for (size_t j = 0; j < b.c_.size(); ++j) r[i + j] += a.c_[i] * b.c_[j];
        return Poly(std::move(r));
    }
    friend Poly operator*(double k, const Poly& a) {
        std::vector<double> r(a.c_);
        for (double& v : r) v *= k;
        return Poly(std::move(r));
    }
    friend Poly operator*(const Poly& a, double k) { return k * a; }
    friend bool operator==(const Poly& a, const Poly& b) { return a.c_ == b.c_; }

    /// Quotient and remainder of a / b.
    static std::pair<Poly, Poly> divmod(const Poly& a, const Poly& b) {
        if (b.is_zero()) throw NumericalError("polynomial division by zero");
        std::vector<double> r(a.c_);
        const int db = b.degree();
        const int dq = a.degree() - db;
        if (dq < 0) return {Poly(), a};
        std::vector<double> q(static_cast<size_t>(dq) + 1, 0.0);
        for (int k = dq; k >= 0; --k) {
            const double f = r[static_cast<size_t>(k + db)] / b.leading();
            q[static_cast<size_t>(k)] = f;
            for (int j = 0; j <= db; ++j) r[static_cast<size_t>(k + j)] -= f * b.c_[static_cast<size_t>(j)];
        }
        r.resize(static_cast<size_t>(std::max(db, 1)));
        return {Poly(std::move(q)), Poly(std::move(r))};
    }

private:
    void normalize() {
        if (c_.empty()) c_.push_back(0.0);
        while (c_.size() > 1 && c_.back() == 0.0) c_.pop_back();
    }
    std::vector<double> c_;
};

/// Approximate coefficient equality, relative to the larger infinity norm.
inline bool approx_equal(const Poly& a, const Poly& b, double rel_tol = 1e-12) {
    if (a.degree() != b.degree()) return false;
    const double scale = std::max({a.norm_inf(), b.norm_inf(), std::numeric_limits<double>::min()});
    for (int k = 0; k <= a.degree(); ++k)
        if (std::abs(a[static_cast<size_t>(k)] - b[static_cast<size_t>(k)]) > rel_tol * scale) return false;
    return true;
}

/// Upper bound on root moduli (Fujiwara); 0 for constants.
inline double root_bound(const Poly& p) {
    const int n = p.degree();
    if (n < 1) return 0.0;
    const double an = std::abs(p.leading());
    double b = 0.0;
    for (int k = 1; k <= n; ++k) {
        double ck = std::abs(p[static_cast<size_t>(n - k)]) / an;
        if (k == n) ck *= 0.5;
        b = std::max(b, std::pow(ck, 1.0 / k));
    }
    return 2.0 * b;
}

// ---------------------------------------------------------------------------
// Rational
// ---------------------------------------------------------------------------

struct EvalOptions {
    double pole_eps = 1e-14;  ///< |den(s)| below pole_eps * scale(den, |s|) is a pole hit
};

/// num(s)/den(s), stored with monic denominator. No implicit cancellation.
class Rational {
public:
    Rational() : num_(Poly()), den_(Poly::constant(1.0)) {}
    Rational(double k) : num_(Poly::constant(k)), den_(Poly::constant(1.0)) {}
    Rational(Poly num, Poly den = Poly::constant(1.0)) : num_(std::move(num)), den_(std::move(den)) {
        if (den_.is_zero()) throw NumericalError("rational with identically zero denominator");
        const double l = den_.leading();
        if (l != 1.0) {
            num_ = (1.0 / l) * num_;
            den_ = (1.0 / l) * den_;
        }
    }

    const Poly& num() const { return num_; }
    const Poly& den() const { return den_; }
    /// deg num - deg den; +1 for capacitor-like feed-through.
    int relative_degree() const { return num_.is_zero() ? -1000 : num_.degree() - den_.degree(); }

    cplx eval(cplx s, const EvalOptions& opt = {}) const {
        const cplx d = den_(s);
        if (std::abs(d) <= opt.pole_eps * den_.magnitude_scale(std::abs(s)))
            throw PoleHit("pole hit at s = (" + std::to_string(s.real()) + ", " + std::to_string(s.imag()) + ")");
        return num_(s) / d;
    }
    cplx operator()(cplx s) const { return eval(s); }

    /// Value and derivative at s.
    std::pair<cplx, cplx> eval_with_derivative(cplx s) const {
        const cplx n = num_(s), d = den_(s);
        const cplx dn = num_.derivative()(s), dd = den_.derivative()(s);
        return {n / d, (dn * d - n * dd) / (d * d)};
    }

private:
    Poly num_, den_;
};

enum class CombineKind { add, sub, mul, div, feedback };

/// Exact polynomial arithmetic on two rationals. feedback(a, b) = a / (1 + b a).
inline Rational combine(const Rational& a, const Rational& b, CombineKind kind) {
    const Poly &an = a.num(), &ad = a.den(), &bn = b.num(), &bd = b.den();
    switch (kind) {
        case CombineKind::add:
            if (approx_equal(ad, bd, 0.0)) return Rational(an + bn, ad);
            return Rational(an * bd + bn * ad, ad * bd);
        case CombineKind::sub:
            if (approx_equal(ad, bd, 0.0)) return Rational(an - bn, ad);
            return Rational(an * bd - bn * ad, ad * bd);
        case CombineKind::mul:
            return Rational(an * bn, ad * bd);
        case CombineKind::div: {
            Poly d = ad * bn;
            if (d.is_zero()) throw NumericalError("division by identically zero rational");
            return Rational(an * bd, d);
        }
        case CombineKind::feedback: {
            Poly d = ad * bd + an * bn;
            if (d.is_zero()) throw NumericalError("feedback loop with identically zero denominator");
            return Rational(an * bd, d);
        }
    }
    throw NumericalError("unknown combine kind");
}

inline Rational operator+(const Rational& a, const Rational& b) { return combine(a, b, CombineKind::add); }
inline Rational operator-(const Rational& a, const Rational& b) { return combine(a, b, CombineKind::sub); }
inline Rational operator*(const Rational& a, const Rational& b) { return combine(a, b, CombineKind::mul); }
inline Rational operator/(const Rational& a, const Rational& b) { return combine(a, b, CombineKind::div); }
inline Rational feedback(const Rational& a, const Rational& b) { return combine(a, b, CombineKind::feedback); }
inline Rational operator*(double k, const Rational& a) { return Rational(k * a.num(), a.den()); }

/// s as a rational.
inline Rational s_var() { return Rational(Poly{0.0, 1.0}); }

// ---------------------------------------------------------------------------
// Delay forms (pointwise evaluation only)
// ---------------------------------------------------------------------------

/// rational(s) * exp(-s * delay)
struct DelayRational {
    Rational rational;
    double delay = 0.0;

    cplx eval(cplx s, const EvalOptions& opt = {}) const {
        return rational.eval(s, opt) * std::exp(-s * delay);
    }
};

/// (a + b E) / (c + d E), E = exp(-s * delay). Arises when a delay sits inside a feedback loop.
struct DelayLft {
    Poly a, b, c, d;
    double delay = 0.0;

    cplx eval(cplx s, const EvalOptions& opt = {}) const {
        const cplx E = std::exp(-s * delay);
        const cplx den = c(s) + d(s) * E;
        const double scale = c.magnitude_scale(std::abs(s)) + d.magnitude_scale(std::abs(s)) * std::abs(E);
        if (std::abs(den) <= opt.pole_eps * scale) throw PoleHit("pole hit in delay form");
        return (a(s) + b(s) * E) / den;
    }
    bool has_delay() const { return delay > 0.0; }
    /// Exact rational when delay is zero.
    Rational to_rational() const {
        if (delay > 0.0) throw InputError("delay model has no rational form");
        return Rational(a + b, c + d);
    }
    static DelayLft from_rational(const Rational& r) {
        return DelayLft{r.num(), Poly(), r.den(), Poly(), 0.0};
    }
};

// ---------------------------------------------------------------------------
// Roots
// ---------------------------------------------------------------------------

struct RootOptions {
    double residual_tol = 1e-8;   ///< backward-error bound |p(r)| / sum|c_k||r|^k
    double trim_tol = 0.0;        ///< leading-coefficient trim, relative to max |c|; callers with noisy leads set it
    int polish_iterations = 3;
};

namespace detail {

/// Parlett-Reinsch diagonal balancing, in place.
inline void balance(Eigen::MatrixXd& A) {
    const double radix = 2.0;
    const Eigen::Index n = A.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(A(j, i));
                r += std::abs(A(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix, f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= radix * radix;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                A.row(i) /= f;
                A.col(i) *= f;
            }
        }
    }
}

inline double backward_error(const Poly& p, cplx r) {
    const double scale = p.magnitude_scale(std::abs(r));
    return scale > 0.0 ? std::abs(p(r)) / scale : 0.0;
}

}  // namespace detail

/// All roots with multiplicity via the balanced companion matrix of the rescaled polynomial.
inline std::vector<cplx> poly_roots(const Poly& p_in, const RootOptions& opt = {}) {
    Poly p = p_in.trimmed(opt.trim_tol);
    if (p.degree() < 1) throw InputError("poly_roots needs degree >= 1");

    std::vector<cplx> roots;
    // exact zero roots
    size_t lo = 0;
    while (lo < p.coeffs().size() && p.coeffs()[lo] == 0.0) ++lo;
    for (size_t k = 0; k < lo; ++k) roots.emplace_back(0.0, 0.0);
    Poly q(std::vector<double>(p.coeffs().begin() + static_cast<long>(lo), p.coeffs().end()));
    const int n = q.degree();
    if (n >= 1) {
        const double rho = std::max(root_bound(q), std::numeric_limits<double>::min());
        const double rs = std::pow(2.0, std::round(std::log2(rho)));
        Poly z = q.scaled(rs);
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
        for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
        for (int i = 0; i < n; ++i) C(i, n - 1) = -z[static_cast<size_t>(i)] / z.leading();
        detail::balance(C);
        Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
        if (es.info() != Eigen::Success) throw NumericalError("companion eigenvalue iteration did not converge");
        const Poly dq = q.derivative();
        for (Eigen::Index i = 0; i < n; ++i) {
            cplx r = es.eigenvalues()(i) * rs;
            for (int it = 0; it < opt.polish_iterations; ++it) {
                const cplx d = dq(r);
                if (d == cplx(0)) break;
                const cplx cand = r - q(r) / d;
                if (detail::backward_error(q, cand) < detail::backward_error(q, r)) r = cand;
                else break;
            }
            if (std::abs(r.imag()) <= 1e-14 * std::abs(r)) r = cplx(r.real(), 0.0);
            roots.push_back(r);
        }
        for (size_t i = lo; i < roots.size(); ++i)
            if (detail::backward_error(q, roots[i]) > opt.residual_tol)
                throw NumericalError("root residual above tolerance");
    }
    return roots;
}

/// Removes numerator/denominator root pairs closer than rel_tol (relative to max(1,|r|)).
inline Rational reduce(const Rational& r, double rel_tol = 1e-6) {
    if (r.num().is_zero() || r.num().degree() == 0 || r.den().degree() == 0) return r;
    auto zn = poly_roots(r.num());
    auto zd = poly_roots(r.den());
    std::vector<bool> used(zd.size(), false);
    std::vector<cplx> keep_n;
    for (const auto& z : zn) {
        bool matched = false;
        for (size_t j = 0; j < zd.size(); ++j) {
            if (used[j]) continue;
            if (std::abs(z - zd[j]) <= rel_tol * std::max(1.0, std::abs(z))) {
                used[j] = true;
                matched = true;
                break;
            }
        }
        if (!matched) keep_n.push_back(z);
    }
    std::vector<cplx> keep_d;
    for (size_t j = 0; j < zd.size(); ++j)
        if (!used[j]) keep_d.push_back(zd[j]);
    return Rational(Poly::from_roots(keep_n, r.num().leading()), Poly::from_roots(keep_d, r.den().leading()));
}

// ---------------------------------------------------------------------------
// Polynomial-matrix determinant
// ---------------------------------------------------------------------------

using RationalMatrix = std::vector<std::vector<Rational>>;

enum class DetMethod { interpolation, symbolic, automatic };

struct DetOptions {
    int degree_bound = -1;                 ///< -1: row rule (max num degree + distinct den degrees per row)
    std::optional<Poly> common_den;        ///< known polynomial D with D*det polynomial; default row products
    double radius = 0.0;                   ///< sample circle radius; 0: automatic
    double trim_tol = 1e-12;
    double check_tol = 1e-7;               ///< off-circle validation, relative
    DetMethod method = DetMethod::automatic;
};

struct DetInfo {
    Poly scaled;          ///< numerator in z = s / radius, well conditioned for root finding
    int degree_bound = 0;
    int achieved_degree = 0;
    double radius = 0.0;
    bool rescaled = false;
    bool symbolic = false;
};

namespace detail {

inline std::vector<Poly> distinct_dens(const std::vector<Rational>& row) {
    std::vector<Poly> out;
    for (const auto& e : row) {
        if (e.den().degree() == 0) continue;
        bool seen = false;
        for (const auto& d : out)
            if (approx_equal(d, e.den(), 1e-12)) {
                seen = true;
                break;
            }
        if (!seen) out.push_back(e.den());
    }
    return out;
}

inline cplx complex_det(Eigen::MatrixXcd M) {
    if (M.rows() == 0) return cplx(1.0);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
    return lu.determinant();
}

inline Rational symbolic_det(const RationalMatrix& M) {
    const size_t n = M.size();
    if (n == 1) return M[0][0];
    Rational acc(0.0);
    for (size_t j = 0; j < n; ++j) {
        if (M[0][j].num().is_zero()) continue;
        RationalMatrix minor;
        for (size_t i = 1; i < n; ++i) {
            std::vector<Rational> row;
            for (size_t k = 0; k < n; ++k)
                if (k != j) row.push_back(M[i][k]);
            minor.push_back(std::move(row));
        }
        Rational term = M[0][j] * symbolic_det(minor);
        acc = (j % 2 == 0) ? acc + term : acc - term;
    }
    return acc;
}

}  // namespace detail

/// Degree bound by the row rule.
inline int det_degree_bound(const RationalMatrix& M) {
    int bound = 0;
    for (const auto& row : M) {
        int mx = 0;
        for (const auto& e : row)
            if (!e.num().is_zero()) mx = std::max(mx, e.num().degree());
        int dd = 0;
        for (const auto& d : detail::distinct_dens(row)) dd += d.degree();
        bound += mx + dd;
    }
    return bound;
}

/// Evaluates the matrix of rationals at s.
inline Eigen::MatrixXcd eval_matrix(const RationalMatrix& M, cplx s) {
    const auto n = static_cast<Eigen::Index>(M.size());
    Eigen::MatrixXcd out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out(i, j) = M[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(s);
    return out;
}

/// det as a single rational by evaluation-interpolation on a circle.
/// `det_fn` evaluates det of the matrix at s; `den` is a polynomial with den*det polynomial.
/// `den_factors` multiply to a polynomial D with D*det polynomial; each factor is rescaled on its own
/// so high-degree products never overflow. The result is monic in s.
template <class DetFn>
Poly interpolate_det_numerator(DetFn&& det_fn, const std::vector<Poly>& den_factors, int bound, double radius,
                               double trim_tol, double check_tol, DetInfo* info) {
    const auto attempt = [&](double rho, bool& ok) {
        const int M = bound + 1;
        std::vector<cplx> vals(static_cast<size_t>(M));
        std::vector<Poly> zf;
        for (const auto& f : den_factors) {
            if (f.degree() < 1) continue;
            const Poly fz = f.scaled(rho);
            zf.push_back((1.0 / std::max(fz.norm_inf(), std::numeric_limits<double>::min())) * fz);
        }
        const auto dzn = [&zf](cplx z) {
            cplx acc(1.0);
            for (const auto& f : zf) acc *= f(z);
            return acc;
        };
        for (int j = 0; j < M; ++j) {
            const cplx z = std::polar(1.0, 2.0 * kPi * j / M);
            vals[static_cast<size_t>(j)] = det_fn(rho * z) * dzn(z);
        }
        std::vector<double> c(static_cast<size_t>(M));
        double maxim = 0.0, maxre = 0.0;
        for (int k = 0; k < M; ++k) {
            cplx acc(0.0);
            for (int j = 0; j < M; ++j)
                acc += vals[static_cast<size_t>(j)] * std::polar(1.0, -2.0 * kPi * double(j) * k / M);
            acc /= double(M);
            c[static_cast<size_t>(k)] = acc.real();
            maxim = std::max(maxim, std::abs(acc.imag()));
            maxre = std::max(maxre, std::abs(acc.real()));
        }
        Poly zpoly = Poly(std::move(c)).trimmed(trim_tol);
        double vmax = 0.0;
        for (const auto& v : vals) vmax = std::max(vmax, std::abs(v));
        ok = maxre > 0.0 && maxim <= 1e-6 * maxre;
        // validation at off-grid points inside and outside the circle
        for (double rr : {0.6, 1.3})
            for (double th : {0.37, 2.11}) {
                const cplx z = std::polar(rr, th);
                const cplx direct = det_fn(rho * z) * dzn(z);
                const cplx fit = zpoly(z);
                const double scale = std::max({zpoly.magnitude_scale(rr), std::abs(direct), vmax});
                if (std::abs(direct - fit) > check_tol * scale) ok = false;
            }
        return zpoly;
    };
    double rho = radius;
    bool ok = false;
    Poly z = attempt(rho, ok);
    bool rescaled = false;
    if (!ok) {
        const double rb = z.degree() >= 1 ? root_bound(z) * rho : 0.0;
        rho = std::max({1.0, rb, 2.0 * rho});
        z = attempt(rho, ok);
        rescaled = true;
        if (!ok) throw NumericalError("determinant interpolation ill-conditioned after rescaling");
    }
    // back to s: c_k = z_k rho^-k, normalized to a monic leading coefficient
    const int n = z.degree();
    std::vector<double> c(static_cast<size_t>(n) + 1);
    if (z.is_zero()) return Poly();
    const double lr = std::log(rho), ln = std::log(std::abs(z.leading()));
    const double sg = z.leading() < 0 ? -1.0 : 1.0;
    for (int k = 0; k <= n; ++k) {
        const double zk = z[static_cast<size_t>(k)];
        c[static_cast<size_t>(k)] =
            zk == 0.0 ? 0.0 : sg * std::copysign(std::exp(std::log(std::abs(zk)) - ln + lr * (n - k)), zk);
    }
    if (info) {
        info->scaled = (1.0 / z.norm_inf()) * z;
        info->degree_bound = bound;
        info->achieved_degree = n;
        info->radius = rho;
        info->rescaled = rescaled;
    }
    return Poly(std::move(c));
}

/// Determinant of a matrix of rationals as num/den. The numerator is monic in s up to
/// the sign/scale carried into the denominator, so evaluation is exact up to round-off.
inline Rational polymat_det(const RationalMatrix& M, const DetOptions& opt = {}, DetInfo* info = nullptr) {
    const size_t n = M.size();
    for (const auto& row : M)
        if (row.size() != n) throw InputError("polymat_det needs a square matrix");
    if (n == 0) return Rational(1.0);

    const bool small = n <= 4;
    if (opt.method == DetMethod::symbolic) {
        if (!small) throw InputError("symbolic determinant limited to n <= 4");
        if (info) info->symbolic = true;
        return detail::symbolic_det(M);
    }

    std::vector<Poly> factors;
    if (opt.common_den) factors.push_back(*opt.common_den);
    else
        for (const auto& row : M)
            for (const auto& d : detail::distinct_dens(row)) factors.push_back(d);
    Poly den = Poly::constant(1.0);
    for (const auto& f : factors) den = den * f;

    const int bound = opt.degree_bound >= 0 ? opt.degree_bound : det_degree_bound(M);
    double radius = opt.radius;
    if (radius <= 0.0) {
        // geometric mean of entry root magnitudes
        double lsum = 0.0;
        int cnt = 0;
        for (const auto& row : M)
            for (const auto& e : row)
                for (const Poly* p : {&e.num(), &e.den()})
                    if (p->degree() >= 1)
                        for (const auto& r : poly_roots(*p))
                            if (std::abs(r) > 0.0) lsum += std::log(std::abs(r)), ++cnt;
        radius = cnt ? std::exp(lsum / cnt) : 1.0;
    }
    try {
        Poly num = interpolate_det_numerator([&](cplx s) { return detail::complex_det(eval_matrix(M, s)); }, factors,
                                             bound, radius, opt.trim_tol, opt.check_tol, info);
        // recover the scale: compare with a direct evaluation
        const cplx s0 = std::polar(radius, 0.7);
        const cplx direct = detail::complex_det(eval_matrix(M, s0)) * den(s0);
        const cplx fit = num(s0);
        const double k = (fit == cplx(0)) ? 0.0 : (direct / fit).real();
        return Rational(k * num, den);
    } catch (const NumericalError&) {
        if (opt.method == DetMethod::automatic && small) {
            if (info) info->symbolic = true;
            return detail::symbolic_det(M);
        }
        throw;
    }
}

}  // namespace dcstab
