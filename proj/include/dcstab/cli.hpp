#pragma once

#include "io.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace dcstab::cli {

enum Exit : int { ok = 0, cert_fail = 1, input_error = 2, numerical_error = 3 };

inline constexpr const char* kOutEnv = "DCSTAB_OUT";

struct RunConfig {
    std::string command;
    std::string net, components;
    std::string omega;               ///< lo:hi:points
    std::string alpha;               ///< start:step:stop or a single value
    std::optional<double> alpha_max;
    double margin_tol = 1e-6;
    std::optional<uint64_t> seed;
    std::string out;
    std::string controller;
    std::vector<std::string> skip_passivity;
    // simulate
    std::string step_bus;
    std::optional<double> delta_v, t_end, dt;
    // compare
    std::string bus;
    double gain_margin = 1.0, phase_margin = 60.0;
    // fixture
    std::string fixture = "radial10";
};

inline std::vector<double> parse_numbers(const std::string& spec, const std::string& flag) {
    std::vector<double> v;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) {
        try {
            size_t used = 0;
            v.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw InputError(flag + ": '" + spec + "' is not a number list");
        }
    }
    return v;
}

/// "start:step:stop" -> start, start + step, ..., stop; "x" -> {x}.
inline std::vector<double> parse_alpha(const std::string& spec) {
    const auto v = parse_numbers(spec, "--alpha");
    if (v.size() == 1) return v;
    if (v.size() != 3 || !(v[1] > 0.0) || v[2] < v[0]) throw InputError("--alpha expects start:step:stop with step > 0");
    return linspace_step(v[0], v[2], v[1]);
}

/// "lo:hi:n" -> n log-spaced points.
inline std::vector<double> parse_omega(const std::string& spec) {
    const auto v = parse_numbers(spec, "--omega");
    if (v.size() != 3 || !(v[0] > 0.0) || !(v[1] > v[0]) || !(v[2] >= 2.0) || v[2] != std::floor(v[2]))
        throw InputError("--omega expects lo:hi:points with 0 < lo < hi and integer points >= 2");
    return logspace(v[0], v[1], static_cast<size_t>(v[2]));
}

struct Context {
    RunConfig cfg;
    std::ostream& out;
    std::filesystem::path dir;
    json report;
    json artifacts = json::array();

    void write(const std::string& name, const std::string& text) {
        write_text((dir / name).string(), text);
        artifacts.push_back(name);
    }
};

inline NetworkFile load_net(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    if (c.net.empty()) throw InputError("--net is required");
    NetworkFile nf = load_network(c.net, c.seed);
    ctx.report["inputs"]["net"] = c.net;
    if (nf.fixture_seed) ctx.report["inputs"]["fixture_seed"] = *nf.fixture_seed;
    if (!c.controller.empty()) nf.net = with_controller(nf.net, controller_compensator(controller_from_string(c.controller)));
    return nf;
}

inline void apply_skips(ComponentSet& set, const std::vector<std::string>& ids) {
    for (const auto& id : ids) {
        bool found = false;
        for (auto& comp : set)
            if (comp.id == id || comp.id.rfind(id + "@", 0) == 0) comp.skip_passivity = found = true;
        if (!found) throw InputError("--skip-passivity: no component '" + id + "'");
    }
}

/// Components from --components, or every element of --net. Returns the network when one was loaded.
inline std::optional<NetworkGraph> load_set(Context& ctx, ComponentSet& set, std::optional<SweepGrid>& file_grid) {
    const auto& c = ctx.cfg;
    if (!c.components.empty() == !c.net.empty()) throw InputError("give exactly one of --components or --net");
    std::optional<NetworkGraph> net;
    if (!c.components.empty()) {
        auto cf = load_components(c.components);
        set = std::move(cf.set);
        file_grid = cf.grid;
        ctx.report["inputs"]["components"] = c.components;
        ctx.report["inputs"]["voltages"] = cf.voltages;
    } else {
        auto nf = load_net(ctx);
        net = nf.net;
        set = network_components(nf.net);
    }
    apply_skips(set, c.skip_passivity);
    json ids = json::array();
    for (const auto& comp : set) ids.push_back(comp.id);
    ctx.report["inputs"]["component_ids"] = ids;
    return net;
}

inline SweepGrid make_grid(const RunConfig& c, const std::optional<SweepGrid>& file_grid, double default_alpha_max) {
    SweepGrid g = file_grid ? *file_grid : SweepGrid::standard(default_alpha_max);
    if (!c.omega.empty()) g.omegas = parse_omega(c.omega);
    if (!c.alpha.empty()) g.alphas = parse_alpha(c.alpha);
    else if (c.alpha_max)
        g.alphas = linspace_step(0.0, *c.alpha_max, file_grid && file_grid->alphas.size() > 1
                                                        ? file_grid->alphas[1] - file_grid->alphas[0]
                                                        : 0.05);
    g.validate();
    return g;
}

inline json grid_json(const SweepGrid& g) {
    return {{"omega_min", g.omegas.front()}, {"omega_max", g.omegas.back()}, {"omega_points", g.omegas.size()},
            {"alpha_min", g.alphas.front()}, {"alpha_max", g.alphas.back()}, {"alpha_points", g.alphas.size()}};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_certify(Context& ctx) {
    ComponentSet set;
    std::optional<SweepGrid> fg;
    const auto net = load_set(ctx, set, fg);
    const SweepGrid grid = make_grid(ctx.cfg, fg, 1.0);
    const auto rep = certify(set, grid, ctx.cfg.margin_tol, net ? &*net : nullptr);
    json r = {{"pass", rep.pass},
              {"margin_deg", rep.margin_deg},
              {"max_feasible_alpha", rep.max_feasible_alpha},
              {"zero_frequency", {{"checked", rep.zero_freq_checked}, {"ok", rep.zero_freq_ok}}},
              {"tail_spread_deg", rep.tail_spread_deg},
              {"evaluations", rep.evaluations}};
    if (rep.violation)
        r["violation"] = {{"omega", rep.violation->omega},
                          {"alpha", rep.violation->alpha},
                          {"components", rep.violation->components}};
    else
        r["violation"] = nullptr;
    json margins = json::array();
    for (size_t k = 0; k < rep.alpha_margins.size(); ++k) margins.push_back({grid.alphas[k], rep.alpha_margins[k]});
    r["alpha_margins"] = margins;
    ctx.report["grid"] = grid_json(grid);
    ctx.report["margin_tol"] = ctx.cfg.margin_tol;
    ctx.report["result"] = r;
    ctx.out << "certify: " << (rep.pass ? "PASS" : "FAIL") << "  worst margin " << fmt_num(rep.margin_deg)
            << " deg  max feasible alpha " << fmt_num(rep.max_feasible_alpha) << "\n";
    if (rep.violation)
        ctx.out << "  overlap lost at omega " << fmt_num(rep.violation->omega) << " rad/s, alpha "
                << fmt_num(rep.violation->alpha) << " between '" << rep.violation->components[0] << "' and '"
                << rep.violation->components[1] << "'\n";
    if (rep.zero_freq_checked && !rep.zero_freq_ok) ctx.out << "  zero-frequency check failed\n";
    return rep.pass ? ok : cert_fail;
}

inline int cmd_max_alpha(Context& ctx) {
    ComponentSet set;
    std::optional<SweepGrid> fg;
    load_set(ctx, set, fg);
    const SweepGrid grid = make_grid(ctx.cfg, fg, 1.0);
    const auto r = max_alpha(set, grid, ctx.cfg.margin_tol);
    ctx.report["grid"] = grid_json(grid);
    ctx.report["margin_tol"] = ctx.cfg.margin_tol;
    ctx.report["result"] = {{"max_alpha", r.alpha},
                            {"capped", r.capped},
                            {"break_omega", r.capped ? json(nullptr) : json(r.break_omega)},
                            {"margin_at_alpha_deg", r.margin_at_alpha},
                            {"bisection_steps", r.bisection_steps}};
    ctx.out << "max-alpha: " << fmt_num(r.alpha) << (r.capped ? " (every grid alpha passes)" : "");
    if (!r.capped) ctx.out << "  break at omega " << fmt_num(r.break_omega) << " rad/s";
    ctx.out << "\n";
    return ok;
}

inline int cmd_locus(Context& ctx) {
    const auto nf = load_net(ctx);
    const auto alphas = ctx.cfg.alpha.empty() ? linspace_step(0.0, 1.0, 0.1) : parse_alpha(ctx.cfg.alpha);
    const auto tr = locus(nf.net, alphas, true);
    ctx.write("locus.csv", locus_csv(tr));
    json rows = json::array();
    for (size_t k = 0; k < tr.alphas.size(); ++k)
        rows.push_back({{"alpha", tr.alphas[k]}, {"max_real", tr.max_real[k]}, {"degree", tr.degree[k]},
                        {"modes", tr.modes[k].size()}});
    ctx.report["result"] = {{"marginal_alpha", tr.marginal_alpha ? json(*tr.marginal_alpha) : json(nullptr)},
                            {"stable_throughout", !tr.marginal_alpha && std::all_of(tr.max_real.begin(), tr.max_real.end(),
                                                                                   [](double v) { return v < 0.0; })},
                            {"sweep", rows}};
    ctx.out << "locus: " << tr.alphas.size() << " alphas, characteristic degree " << tr.degree.front() << "\n";
    if (tr.marginal_alpha) ctx.out << "  marginal alpha " << fmt_num(*tr.marginal_alpha) << "\n";
    else ctx.out << "  no crossing into the right half-plane\n";
    return ok;
}

inline int cmd_simulate(Context& ctx) {
    const auto nf = load_net(ctx);
    Scenario sc = nf.scenario ? *nf.scenario : Scenario{};
    if (!ctx.cfg.step_bus.empty()) sc.step_bus = ctx.cfg.step_bus;
    if (sc.step_bus.empty()) {
        const auto src = nf.net.source_buses();
        sc.step_bus = nf.net.buses[src.front()].id;
    }
    if (ctx.cfg.delta_v) sc.delta_v = *ctx.cfg.delta_v;
    if (ctx.cfg.t_end) sc.t_end = *ctx.cfg.t_end;
    if (ctx.cfg.dt) sc.dt = ctx.cfg.dt;
    if (!ctx.cfg.alpha.empty()) {
        const auto a = parse_numbers(ctx.cfg.alpha, "--alpha");
        if (a.size() != 1) throw InputError("simulate takes a single --alpha value");
        sc.alpha = a[0];
    }
    const size_t bus = nf.net.index_of(sc.step_bus);
    StepOptions so;
    so.t_end = sc.t_end;
    so.dt = sc.dt;
    const auto r = simulate_step(nf.net, bus, sc.delta_v, sc.alpha, so);
    ctx.write("step.csv", step_csv(r));
    const double ts = r.settling_time(0.01);
    json fin = json::object();
    for (size_t k = 0; k < r.bus_ids.size(); ++k) fin[r.bus_ids[k]] = r.v_final(static_cast<Eigen::Index>(k));
    const auto dc = dc_step_resolve(nf.net, bus, sc.delta_v, sc.alpha);
    double dc_err = 0.0;
    for (size_t k = 0; k < dc.size(); ++k)
        dc_err = std::max(dc_err, std::abs(r.v_final(static_cast<Eigen::Index>(k)) - dc[k]) / std::max(std::abs(dc[k]), 1e-300));
    ctx.report["scenario"] = {{"step_bus", sc.step_bus}, {"delta_v", sc.delta_v}, {"t_end", sc.t_end},
                              {"dt", r.dt}, {"alpha", sc.alpha}};
    ctx.report["result"] = {{"settling_time_s", ts},
                            {"samples", r.t.size()},
                            {"peak_bus_deviation", r.v.rows() ? r.v.cwiseAbs().maxCoeff() : 0.0},
                            {"final_bus_voltage", fin},
                            {"dc_resolve_max_rel_error", dc_err}};
    ctx.out << "simulate: " << r.t.size() << " samples at dt " << fmt_num(r.dt) << " s, settling time (1% of peak) "
            << fmt_num(ts * 1e3) << " ms\n";
    return ok;
}

inline int cmd_compare(Context& ctx) {
    const auto nf = load_net(ctx);
    const auto& net = nf.net;
    const size_t bus = ctx.cfg.bus.empty() ? 0 : net.index_of(ctx.cfg.bus);
    const Device* load = nullptr;
    for (const auto& d : net.buses[bus].devices)
        if (!std::holds_alternative<SourceModel>(d)) {
            load = &d;
            break;
        }
    if (!load) throw InputError("compare: bus '" + net.buses[bus].id + "' carries no load to compare");
    double alpha = 1.0;
    if (!ctx.cfg.alpha.empty()) {
        const auto a = parse_numbers(ctx.cfg.alpha, "--alpha");
        if (a.size() != 1) throw InputError("compare takes a single --alpha value");
        alpha = a[0];
    }
    const auto omegas = ctx.cfg.omega.empty() ? logspace(1e-1, 1e7, 2000) : parse_omega(ctx.cfg.omega);
    CriterionOptions co{ctx.cfg.gain_margin, ctx.cfg.phase_margin};
    const auto mlg = minor_loop_gain(net, bus, *load, alpha, omegas);
    ctx.write("minor_loop.csv", minor_loop_csv(mlg, co));
    json crit = json::object();
    ctx.out << "compare at bus '" << net.buses[bus].id << "', alpha " << fmt_num(alpha) << ":\n";
    for (auto c : {Criterion::middlebrook, Criterion::gmpm, Criterion::opposing}) {
        const auto v = criterion_check(mlg, c, co);
        crit[criterion_name(c)] = {{"pass", v.pass}, {"violations", v.violations.size()}};
        ctx.out << "  " << criterion_name(c) << ": " << (v.pass ? "pass" : "FAIL") << " (" << v.violations.size()
                << " violating samples)\n";
    }
    SweepGrid grid = SweepGrid::standard(alpha);
    grid.omegas = omegas;
    auto set = network_components(net);
    apply_skips(set, ctx.cfg.skip_passivity);
    const auto rep = certify(set, grid, ctx.cfg.margin_tol, &net);
    json oracle = nullptr;
    if (!net.has_delay()) {
        const auto em = eigenmodes(net, alpha);
        oracle = {{"max_real", em.max_real()}, {"stable", em.max_real() < 0.0}, {"degree", em.degree}};
        ctx.out << "  eigenmode oracle: max real part " << fmt_num(em.max_real()) << "\n";
    }
    ctx.out << "  certificate: " << (rep.pass ? "pass" : "FAIL") << "\n";
    ctx.report["result"] = {{"bus", net.buses[bus].id},
                            {"alpha", alpha},
                            {"gain_margin", co.gain_margin},
                            {"phase_margin_deg", co.phase_margin_deg},
                            {"criteria", crit},
                            {"singular_samples", mlg.singular.size()},
                            {"winding_number", winding_number(mlg)},
                            {"certificate", {{"pass", rep.pass}, {"margin_deg", rep.margin_deg}}},
                            {"oracle", oracle}};
    return ok;
}

inline int cmd_steady_state(Context& ctx) {
    const auto nf = load_net(ctx);
    const auto ss = steady_state(nf.net);
    std::ostringstream csv;
    csv << "bus,V0,I0\n";
    json buses = json::array();
    for (size_t k = 0; k < nf.net.size(); ++k) {
        csv << csv_field(nf.net.buses[k].id) << ',' << fmt_num(ss.V0[k]) << ',' << fmt_num(ss.I0[k]) << '\n';
        buses.push_back({{"id", nf.net.buses[k].id}, {"V0", ss.V0[k]}, {"I0", ss.I0[k]}});
    }
    ctx.write("steady_state.csv", csv.str());
    ctx.report["result"] = {{"buses", buses}, {"source_currents", ss.I_source}, {"residual", ss.residual}};
    double lo = 1e300, hi = -1e300;
    for (size_t k = 0; k < nf.net.size(); ++k)
        if (!nf.net.buses[k].is_source()) lo = std::min(lo, ss.V0[k]), hi = std::max(hi, ss.V0[k]);
    ctx.out << "steady-state: residual " << fmt_num(ss.residual);
    if (lo <= hi) ctx.out << ", load voltages " << fmt_num(lo) << " .. " << fmt_num(hi) << " V";
    ctx.out << "\n";
    return ok;
}

inline int cmd_sectors(Context& ctx) {
    ComponentSet set;
    std::optional<SweepGrid> fg;
    load_set(ctx, set, fg);
    const SweepGrid grid = make_grid(ctx.cfg, fg, 1.0);
    const auto tables = sectors_csv(set, grid.alphas, grid.omegas);
    json files = json::object();
    for (size_t k = 0; k < set.size(); ++k) {
        const std::string name = "sectors_" + safe_name(set[k].id) + ".csv";
        ctx.write(name, tables[k]);
        files[set[k].id] = name;
    }
    ctx.report["grid"] = grid_json(grid);
    ctx.report["result"] = {{"files", files}};
    ctx.out << "sectors: " << set.size() << " component tables over " << grid.alphas.size() << " alphas\n";
    return ok;
}

inline int cmd_fixture(Context& ctx) {
    FixtureOptions fo;
    if (!ctx.cfg.controller.empty()) fo.controller = controller_from_string(ctx.cfg.controller);
    fo.seed = ctx.cfg.seed.value_or(0);
    const auto net = make_fixture(ctx.cfg.fixture, fo);
    std::optional<Scenario> sc;
    if (ctx.cfg.fixture != "two_bus") sc = Scenario{net.buses[net.source_buses().front()].id, 0.5, 0.05, std::nullopt, 10.0};
    const std::string name = ctx.cfg.fixture + ".json";
    ctx.write(name, network_to_json(net, sc).dump(2) + "\n");
    ctx.report["result"] = {{"fixture", ctx.cfg.fixture}, {"controller", controller_name(fo.controller)}, {"file", name}};
    ctx.out << "fixture: wrote " << name << "\n";
    return ok;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"Small-signal stability certification of DC microgrids"};
    app.require_subcommand(1);
    auto sub = [&](const char* name, const char* desc) {
        auto* s = app.add_subcommand(name, desc);
        s->callback([&cfg, name] { cfg.command = name; });
        s->add_option("--out", cfg.out, std::string("output directory (default $") + kOutEnv + " or .)");
        s->add_option("--seed", cfg.seed, "PRNG seed for generated fixtures");
        return s;
    };
    auto set_opts = [&](CLI::App* s) {
        s->add_option("--components", cfg.components, "component set file");
        s->add_option("--net", cfg.net, "network file");
        s->add_option("--omega", cfg.omega, "frequency grid lo:hi:points (rad/s)");
        s->add_option("--alpha", cfg.alpha, "alpha grid start:step:stop");
        s->add_option("--alpha-max", cfg.alpha_max, "alpha grid from 0 to this value");
        s->add_option("--margin-tol", cfg.margin_tol, "sector margin tolerance (deg)");
        s->add_option("--skip-passivity", cfg.skip_passivity, "component ids exempt from the passivity precondition");
        s->add_option("--controller", cfg.controller, "replace buck compensators: lead_lag or pi");
    };
    auto net_opts = [&](CLI::App* s) {
        s->add_option("--net", cfg.net, "network file")->required();
        s->add_option("--controller", cfg.controller, "replace buck compensators: lead_lag or pi");
    };
    set_opts(sub("certify", "check the sector certificate over an alpha grid"));
    set_opts(sub("max-alpha", "largest alpha for which the certificate holds"));
    set_opts(sub("sectors", "per-component phase and sector tables"));
    auto* loc = sub("locus", "eigenmode locus over alpha");
    net_opts(loc);
    loc->add_option("--alpha", cfg.alpha, "alpha grid start:step:stop");
    auto* sim = sub("simulate", "linear step response at a source bus");
    net_opts(sim);
    sim->add_option("--alpha", cfg.alpha, "alpha value");
    sim->add_option("--step-bus", cfg.step_bus, "source bus id");
    sim->add_option("--delta-v", cfg.delta_v, "set-point step (V)");
    sim->add_option("--t-end", cfg.t_end, "horizon (s)");
    sim->add_option("--dt", cfg.dt, "time step (s)");
    auto* cmp = sub("compare", "classical impedance criteria at one bus next to the certificate and the oracle");
    net_opts(cmp);
    cmp->add_option("--bus", cfg.bus, "connection bus id");
    cmp->add_option("--alpha", cfg.alpha, "alpha value");
    cmp->add_option("--omega", cfg.omega, "frequency grid lo:hi:points (rad/s)");
    cmp->add_option("--margin-tol", cfg.margin_tol, "sector margin tolerance (deg)");
    cmp->add_option("--gain-margin", cfg.gain_margin, "gain margin factor");
    cmp->add_option("--phase-margin", cfg.phase_margin, "phase margin (deg)");
    cmp->add_option("--skip-passivity", cfg.skip_passivity, "component ids exempt from the passivity precondition");
    net_opts(sub("steady-state", "DC operating point"));
    auto* fix = sub("fixture", "write a built-in network as an explicit network file");
    fix->add_option("--name", cfg.fixture, "radial10, mesh8 or two_bus");
    fix->add_option("--controller", cfg.controller, "lead_lag or pi");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? ok : input_error;
    }

    if (cfg.out.empty()) {
        const char* env = std::getenv(kOutEnv);
        cfg.out = env && *env ? env : ".";
    }
    Context ctx{cfg, out, cfg.out, json::object()};
    ctx.report["schema"] = kReportSchema;
    ctx.report["command"] = cfg.command;
    ctx.report["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
    ctx.report["inputs"] = json::object();
    int code = ok;
    try {
        std::filesystem::create_directories(ctx.dir);
        if (cfg.command == "certify") code = cmd_certify(ctx);
        else if (cfg.command == "max-alpha") code = cmd_max_alpha(ctx);
        else if (cfg.command == "locus") code = cmd_locus(ctx);
        else if (cfg.command == "simulate") code = cmd_simulate(ctx);
        else if (cfg.command == "compare") code = cmd_compare(ctx);
        else if (cfg.command == "steady-state") code = cmd_steady_state(ctx);
        else if (cfg.command == "sectors") code = cmd_sectors(ctx);
        else if (cfg.command == "fixture") code = cmd_fixture(ctx);
        const std::string report_name = cfg.command + ".json";
        ctx.artifacts.push_back(report_name);
        ctx.report["exit_code"] = code;
        ctx.report["artifacts"] = ctx.artifacts;
        write_text((ctx.dir / report_name).string(), ctx.report.dump(2) + "\n");
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return input_error;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return numerical_error;
    }
    return code;
}

}  // namespace dcstab::cli
