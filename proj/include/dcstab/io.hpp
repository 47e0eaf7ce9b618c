#pragma once

#include "certification.hpp"
#include "classical.hpp"
#include "eigenmodes.hpp"
#include "fixtures.hpp"
#include "timesim.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace dcstab {

using json = nlohmann::ordered_json;

inline constexpr const char* kNetworkSchema = "dcstab.network/1";
inline constexpr const char* kComponentsSchema = "dcstab.components/1";
inline constexpr const char* kReportSchema = "dcstab.report/1";

inline std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Parses JSON; syntax errors report line and column.
inline json parse_json(const std::string& text, const std::string& name = "<input>") {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        size_t line = 1, col = 1;
        const size_t end = std::min(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (size_t k = 0; k < end; ++k) {
            if (text[k] == '\n') ++line, col = 1;
            else ++col;
        }
        std::string what = e.what();
        const auto p = what.find("syntax error");
        throw InputError(name + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                         (p == std::string::npos ? what : what.substr(p)));
    }
}

namespace detail {

/// Object access with a path for messages and a check for unknown keys.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }
    [[noreturn]] void fail(const std::string& msg) const { throw InputError(path_ + ": " + msg); }
    bool has(const std::string& k) const {
        seen_.insert(k);
        return j_.contains(k);
    }
    const json& at(const std::string& k) const {
        if (!has(k)) fail("missing key '" + k + "'");
        return j_.at(k);
    }
    double num(const std::string& k, double def) const { return has(k) ? num(k) : def; }
    double num(const std::string& k) const {
        const json& v = at(k);
        if (!v.is_number()) fail("'" + k + "' must be a number");
        return v.get<double>();
    }
    std::string str(const std::string& k, const std::string& def) const { return has(k) ? str(k) : def; }
    std::string str(const std::string& k) const {
        const json& v = at(k);
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        if (!v.is_string()) fail("'" + k + "' must be a string");
        return v.get<std::string>();
    }
    bool flag(const std::string& k, bool def) const {
        if (!has(k)) return def;
        if (!at(k).is_boolean()) fail("'" + k + "' must be a boolean");
        return at(k).get<bool>();
    }
    std::string sub(const std::string& k) const { return path_ + "." + k; }
    void done() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail("unknown key '" + k + "'");
    }

private:
    const json& j_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

inline std::vector<double> num_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw InputError(path + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw InputError(path + ": expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline void check_schema(const Obj& o, const char* expected) {
    const std::string s = o.str("schema");
    if (s != expected) o.fail("schema '" + s + "' is not supported (expected '" + expected + "')");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model <-> JSON
// ---------------------------------------------------------------------------

inline LineModel line_from_json(const json& j, const std::string& path) {
    detail::Obj o(j, path);
    LineModel l;
    if (o.has("length_km")) {
        l = LineModel::from_length(o.num("length_km"), o.num("r_per_km", 0.1), o.num("tau", 1e-3));
    } else {
        l.R = o.num("R");
        l.L = o.num("L");
    }
    o.done();
    l.validate();
    return l;
}

inline json line_to_json(const LineModel& l) { return {{"R", l.R}, {"L", l.L}}; }

inline Rational rational_from_json(const json& j, const std::string& path) {
    detail::Obj o(j, path);
    const Poly num(detail::num_array(o.at("num"), o.sub("num")));
    const Poly den = o.has("den") ? Poly(detail::num_array(o.at("den"), o.sub("den"))) : Poly::constant(1.0);
    o.done();
    if (den.is_zero()) o.fail("denominator is zero");
    return Rational(num, den);
}

inline json rational_to_json(const Rational& r) { return {{"num", r.num().coeffs()}, {"den", r.den().coeffs()}}; }

inline Compensator compensator_from_json(const json& j, const std::string& path) {
    detail::Obj o(j, path);
    const std::string kind = o.str("kind", "lead_lag");
    Compensator c;
    if (kind == "lead_lag") {
        c = reference_lead_lag();
        c.Gc_inf = o.num("Gc_inf", c.Gc_inf);
        c.wL = o.num("wL", c.wL);
        c.wz = o.num("wz", c.wz);
        c.wp = o.num("wp", c.wp);
    } else if (kind == "pi") {
        c = reference_pi();
        c.Gi = o.num("Gi", c.Gi);
        c.wi = o.num("wi", c.wi);
    } else if (kind == "pi_gain") {
        c = Compensator::pi_gain(o.num("K"), o.num("tau_i"));
    } else {
        o.fail("unknown compensator kind '" + kind + "'");
    }
    c.tau_d = o.num("tau_d", 0.0);
    o.done();
    c.validate();
    return c;
}

inline json compensator_to_json(const Compensator& c) {
    json j;
    switch (c.kind) {
        case CompensatorKind::lead_lag:
            j = {{"kind", "lead_lag"}, {"Gc_inf", c.Gc_inf}, {"wL", c.wL}, {"wz", c.wz}, {"wp", c.wp}};
            break;
        case CompensatorKind::pi: j = {{"kind", "pi"}, {"Gi", c.Gi}, {"wi", c.wi}}; break;
        case CompensatorKind::pi_gain: j = {{"kind", "pi_gain"}, {"K", c.K}, {"tau_i", c.tau_i}}; break;
    }
    if (c.tau_d > 0.0) j["tau_d"] = c.tau_d;
    return j;
}

inline Device device_from_json(const json& j, const std::string& path) {
    detail::Obj o(j, path);
    const std::string type = o.str("type");
    Device dev;
    if (type == "source") {
        SourceModel s;
        s.Vs = o.num("Vs", s.Vs);
        s.series = o.has("series") ? line_from_json(o.at("series"), o.sub("series")) : reference_line(0.1);
        dev = s;
    } else if (type == "buck") {
        BuckConverterModel m;
        m.V = o.num("V", m.V), m.R = o.num("R", m.R), m.L = o.num("L", m.L), m.C = o.num("C", m.C);
        m.D = o.num("D", m.D), m.H = o.num("H", m.H), m.Vm = o.num("Vm", m.Vm), m.Cf = o.num("Cf", m.Cf);
        if (o.has("compensator")) m.comp = compensator_from_json(o.at("compensator"), o.sub("compensator"));
        dev = m;
    } else if (type == "boost") {
        BoostConverterModel m;
        m.V = o.num("V", m.V), m.R = o.num("R", m.R), m.L = o.num("L", m.L), m.C = o.num("C", m.C);
        m.Dp = o.num("Dp", m.Dp), m.Gcm = o.num("Gcm", m.Gcm), m.wc1 = o.num("wc1", m.wc1);
        m.wc2 = o.num("wc2", m.wc2), m.Gvm = o.num("Gvm", m.Gvm), m.wv1 = o.num("wv1", m.wv1);
        m.Cf = o.num("Cf", m.Cf);
        dev = m;
    } else if (type == "regulated_load") {
        RegulatedLoad m;
        m.plant = rational_from_json(o.at("plant"), o.sub("plant"));
        m.comp = compensator_from_json(o.at("compensator"), o.sub("compensator"));
        m.Cf = o.num("Cf", 0.0);
        dev = m;
    } else if (type == "admittance") {
        dev = FixedAdmittance{rational_from_json(o.at("y"), o.sub("y"))};
    } else {
        o.fail("unknown device type '" + type + "'");
    }
    o.done();
    return dev;
}

inline json device_to_json(const Device& dev) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, SourceModel>) {
                return {{"type", "source"}, {"Vs", m.Vs}, {"series", line_to_json(m.series)}};
            } else if constexpr (std::is_same_v<T, BuckConverterModel>) {
                return {{"type", "buck"}, {"V", m.V},   {"R", m.R},   {"L", m.L},   {"C", m.C},
                        {"D", m.D},       {"H", m.H},   {"Vm", m.Vm}, {"Cf", m.Cf}, {"compensator", compensator_to_json(m.comp)}};
            } else if constexpr (std::is_same_v<T, BoostConverterModel>) {
                return {{"type", "boost"}, {"V", m.V},     {"R", m.R},     {"L", m.L},     {"C", m.C},   {"Dp", m.Dp},
                        {"Gcm", m.Gcm},    {"wc1", m.wc1}, {"wc2", m.wc2}, {"Gvm", m.Gvm}, {"wv1", m.wv1}, {"Cf", m.Cf}};
            } else if constexpr (std::is_same_v<T, RegulatedLoad>) {
                return {{"type", "regulated_load"}, {"plant", rational_to_json(m.plant)},
                        {"compensator", compensator_to_json(m.comp)}, {"Cf", m.Cf}};
            } else {
                return {{"type", "admittance"}, {"y", rational_to_json(m.y)}};
            }
        },
        dev);
}

/// Step experiment block of a network file.
struct Scenario {
    std::string step_bus;
    double delta_v = 0.5;
    double t_end = 0.05;
    std::optional<double> dt;
    double alpha = 1.0;
};

struct NetworkFile {
    NetworkGraph net;
    std::optional<Scenario> scenario;
    std::optional<uint64_t> fixture_seed;  ///< seed actually used when the file names a built-in fixture
};

inline Controller controller_from_string(const std::string& s) {
    if (s == "lead_lag" || s == "lead-lag") return Controller::lead_lag;
    if (s == "pi") return Controller::pi;
    throw InputError("unknown controller '" + s + "' (expected lead_lag or pi)");
}

inline const char* controller_name(Controller c) { return c == Controller::pi ? "pi" : "lead_lag"; }

/// Built-in fixtures by name: radial10, mesh8, two_bus.
inline NetworkGraph make_fixture(const std::string& name, const FixtureOptions& opt) {
    if (name == "radial10") return radial10(opt);
    if (name == "mesh8") return mesh8(opt);
    if (name == "two_bus") return two_bus();
    throw InputError("unknown fixture '" + name + "' (expected radial10, mesh8 or two_bus)");
}

/// `seed_override` replaces the seed of a fixture reference.
inline NetworkFile network_from_json(const json& j, const std::string& name = "network",
                                     std::optional<uint64_t> seed_override = std::nullopt) {
    detail::Obj o(j, name);
    detail::check_schema(o, kNetworkSchema);
    NetworkFile nf;
    if (o.has("fixture")) {
        detail::Obj f(o.at("fixture"), o.sub("fixture"));
        FixtureOptions fo;
        fo.controller = controller_from_string(f.str("controller", "lead_lag"));
        const double seed = f.num("seed", 0.0);
        if (seed < 0.0 || seed != std::floor(seed)) f.fail("'seed' must be a non-negative integer");
        fo.seed = seed_override ? *seed_override : static_cast<uint64_t>(seed);
        fo.sigma = f.num("sigma", fo.sigma);
        fo.source_v = f.num("source_v", fo.source_v);
        fo.line_tau = f.num("line_tau", fo.line_tau);
        const std::string fname = f.str("name");
        f.done();
        nf.net = make_fixture(fname, fo);
        nf.fixture_seed = fo.seed;
    } else {
        const json& buses = o.at("buses");
        if (!buses.is_array()) o.fail("'buses' must be an array");
        for (size_t k = 0; k < buses.size(); ++k) {
            const std::string p = o.sub("buses[" + std::to_string(k) + "]");
            detail::Obj b(buses[k], p);
            Bus bus{b.str("id"), {}};
            if (b.has("devices")) {
                const json& devs = b.at("devices");
                if (!devs.is_array()) b.fail("'devices' must be an array");
                for (size_t d = 0; d < devs.size(); ++d)
                    bus.devices.push_back(device_from_json(devs[d], p + ".devices[" + std::to_string(d) + "]"));
            }
            b.done();
            for (const auto& other : nf.net.buses)
                if (other.id == bus.id) b.fail("duplicate bus id '" + bus.id + "'");
            nf.net.buses.push_back(std::move(bus));
        }
        const json& edges = o.at("edges");
        if (!edges.is_array()) o.fail("'edges' must be an array");
        for (size_t k = 0; k < edges.size(); ++k) {
            const std::string p = o.sub("edges[" + std::to_string(k) + "]");
            detail::Obj e(edges[k], p);
            Edge edge;
            try {
                edge.i = nf.net.index_of(e.str("from"));
                edge.j = nf.net.index_of(e.str("to"));
            } catch (const InputError& err) {
                e.fail(err.what());
            }
            edge.line = line_from_json(e.at("line"), e.sub("line"));
            e.done();
            nf.net.edges.push_back(edge);
        }
        const std::string op = o.str("operating_point", "solve");
        if (op == "solve") {
            nf.net.validate();
            nf.net = parameterize(nf.net, steady_state(nf.net));
        } else if (op != "given") {
            o.fail("'operating_point' must be 'solve' or 'given'");
        }
    }
    if (o.has("scenario")) {
        detail::Obj s(o.at("scenario"), o.sub("scenario"));
        Scenario sc;
        sc.step_bus = s.str("step_bus");
        sc.delta_v = s.num("delta_v", sc.delta_v);
        sc.t_end = s.num("t_end", sc.t_end);
        if (s.has("dt")) sc.dt = s.num("dt");
        sc.alpha = s.num("alpha", sc.alpha);
        s.done();
        nf.scenario = sc;
    }
    o.done();
    nf.net.validate();
    return nf;
}

inline NetworkFile load_network(const std::string& path, std::optional<uint64_t> seed_override = std::nullopt) {
    return network_from_json(parse_json(read_text(path), path), path, seed_override);
}

/// Explicit form with the operating point baked into the converter input voltages.
inline json network_to_json(const NetworkGraph& net, const std::optional<Scenario>& sc = std::nullopt) {
    json j;
    j["schema"] = kNetworkSchema;
    j["operating_point"] = "given";
    json buses = json::array();
    for (const auto& b : net.buses) {
        json devs = json::array();
        for (const auto& d : b.devices) devs.push_back(device_to_json(d));
        buses.push_back({{"id", b.id}, {"devices", devs}});
    }
    j["buses"] = buses;
    json edges = json::array();
    for (const auto& e : net.edges)
        edges.push_back({{"from", net.buses[e.i].id}, {"to", net.buses[e.j].id}, {"line", line_to_json(e.line)}});
    j["edges"] = edges;
    if (sc) {
        json s = {{"step_bus", sc->step_bus}, {"delta_v", sc->delta_v}, {"t_end", sc->t_end}, {"alpha", sc->alpha}};
        if (sc->dt) s["dt"] = *sc->dt;
        j["scenario"] = s;
    }
    return j;
}

struct ComponentsFile {
    ComponentSet set;
    std::vector<double> voltages;
    std::optional<SweepGrid> grid;
};

/// Component entries are {"id", "line": {...}} or {"id", "device": {...}, "variants", "skip_passivity"};
/// devices with variants get one copy per listed operating voltage.
inline ComponentsFile components_from_json(const json& j, const std::string& name = "components") {
    detail::Obj o(j, name);
    detail::check_schema(o, kComponentsSchema);
    ComponentsFile cf;
    if (o.has("voltages")) cf.voltages = detail::num_array(o.at("voltages"), o.sub("voltages"));
    const json& comps = o.at("components");
    if (!comps.is_array() || comps.empty()) o.fail("'components' must be a nonempty array");
    std::set<std::string> ids;
    for (size_t k = 0; k < comps.size(); ++k) {
        const std::string p = o.sub("components[" + std::to_string(k) + "]");
        detail::Obj c(comps[k], p);
        const std::string id = c.str("id");
        if (!ids.insert(id).second) c.fail("duplicate component id '" + id + "'");
        const bool skip = c.flag("skip_passivity", false);
        if (c.has("line")) {
            cf.set.push_back(line_component(id, line_from_json(c.at("line"), c.sub("line"))));
        } else {
            const Device dev = device_from_json(c.at("device"), c.sub("device"));
            if (c.flag("variants", !cf.voltages.empty()) && !std::holds_alternative<SourceModel>(dev)) {
                auto v = device_variants(id, dev, cf.voltages, skip);
                cf.set.insert(cf.set.end(), v.begin(), v.end());
            } else {
                cf.set.push_back(device_component(id, dev, skip));
            }
        }
        c.done();
    }
    if (o.has("grid")) {
        detail::Obj g(o.at("grid"), o.sub("grid"));
        SweepGrid grid = SweepGrid::standard(g.num("alpha_max", 1.0), g.num("alpha_step", 0.05), g.num("omega_min", 1e-1),
                                             g.num("omega_max", 1e7),
                                             static_cast<size_t>(g.num("omega_points", 2000)));
        g.done();
        grid.validate();
        cf.grid = grid;
    }
    o.done();
    return cf;
}

inline ComponentsFile load_components(const std::string& path) {
    return components_from_json(parse_json(read_text(path), path), path);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

/// File-system friendly component id.
inline std::string safe_name(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out;
}

/// One table per component: (alpha, omega, theta_deg, sector_lo, sector_hi, margin_deg) where theta is the
/// tracked component phase and [sector_lo, sector_hi] the arc spanned by all components at that omega.
inline std::vector<std::string> sectors_csv(const ComponentSet& set, const std::vector<double>& alphas,
                                            const std::vector<double>& omegas, TrackOptions opt = {}) {
    opt.keep_samples = true;
    std::vector<std::ostringstream> out(set.size());
    for (auto& o : out) o << "alpha,omega,theta_deg,sector_lo,sector_hi,margin_deg\n";
    for (double a : alphas) {
        const AlphaSweep sw = track_alpha(set, a, omegas, opt);
        for (const auto& s : sw.samples) {
            const auto [mn, mx] = std::minmax_element(s.theta.begin(), s.theta.end());
            for (size_t c = 0; c < set.size(); ++c)
                out[c] << fmt_num(a) << ',' << fmt_num(s.omega) << ',' << fmt_num(s.theta[c]) << ',' << fmt_num(*mn)
                       << ',' << fmt_num(*mx) << ',' << fmt_num(s.margin) << '\n';
        }
    }
    std::vector<std::string> res;
    for (auto& o : out) res.push_back(o.str());
    return res;
}

inline std::string locus_csv(const LocusTrace& tr) {
    std::ostringstream o;
    o << "alpha,re,im\n";
    for (size_t k = 0; k < tr.alphas.size(); ++k)
        for (const auto& z : tr.modes[k]) o << fmt_num(tr.alphas[k]) << ',' << fmt_num(z.real()) << ',' << fmt_num(z.imag()) << '\n';
    return o.str();
}

inline std::string minor_loop_csv(const MinorLoopGain& m, const CriterionOptions& opt = {}) {
    std::ostringstream o;
    o << "omega,re_Tm,im_Tm,abs_Tm,arg_Tm_deg,violations\n";
    for (const auto& s : m.samples) {
        std::string v;
        for (auto c : {Criterion::middlebrook, Criterion::gmpm, Criterion::opposing})
            if (violates(c, s.T, opt)) v += (v.empty() ? "" : ";") + std::string(criterion_name(c));
        o << fmt_num(s.omega) << ',' << fmt_num(s.T.real()) << ',' << fmt_num(s.T.imag()) << ',' << fmt_num(std::abs(s.T))
          << ',' << fmt_num(arg_deg(s.T)) << ',' << v << '\n';
    }
    return o.str();
}

/// Wide table: t, one column per bus voltage deviation, one per edge current deviation.
inline std::string step_csv(const StepResponse& r) {
    std::ostringstream o;
    o << 't';
    for (const auto& b : r.bus_ids) o << ',' << csv_field("v:" + b);
    for (const auto& e : r.edge_labels) o << ',' << csv_field("i:" + e);
    o << '\n';
    for (size_t k = 0; k < r.t.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        o << fmt_num(r.t[k]);
        for (Eigen::Index c = 0; c < r.v.cols(); ++c) o << ',' << fmt_num(r.v(row, c));
        for (Eigen::Index c = 0; c < r.i.cols(); ++c) o << ',' << fmt_num(r.i(row, c));
        o << '\n';
    }
    return o.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path + "'");
    f << text;
    if (!f) throw InputError("write failed for '" + path + "'");
}

}  // namespace dcstab
