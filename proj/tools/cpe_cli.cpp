// Batch runner: cpe_cli {run|study|audit} [--config PATH] [--out DIR] [--seed N] [--quiet]
//
// Exit codes: 0 ok, 2 configuration error, 3 regime violation, 4 numeric failure.
// Every exit path after argument parsing writes summary.json in the output directory.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpe/config.hpp"
#include "cpe/field_io.hpp"
#include "cpe/invariants.hpp"
#include "cpe/study.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cpe;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kRegime = 3, kNumeric = 4 };

struct Options {
    std::string verb;
    std::string config;
    std::string out;
    std::optional<unsigned> seed;
    std::optional<double> beta_scale;
    bool quiet = false;
};

class Summary {
public:
    explicit Summary(std::string verb) { j_["verb"] = std::move(verb); }
    json& operator[](const char* k) { return j_[k]; }

    void set_dir(const fs::path& d) { dir_ = d; }

    int finish(int code, const std::string& status, const std::string& message) {
        j_["exit_code"] = code;
        j_["status"] = status;
        j_["message"] = message;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        std::ofstream os(dir_ / "summary.json");
        if (os) os << std::setw(2) << sanitize(j_) << '\n';
        else std::cerr << "cpe_cli: cannot write " << (dir_ / "summary.json").string() << '\n';
        return code;
    }

private:
    /// JSON has no inf/nan; store them as strings.
    static json sanitize(const json& j) {
        if (j.is_number_float() && !std::isfinite(j.get<double>())) {
            const double v = j.get<double>();
            return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
        }
        if (j.is_object() || j.is_array()) {
            json out = j;
            for (auto it = out.begin(); it != out.end(); ++it) *it = sanitize(*it);
            return out;
        }
        return j;
    }

    json j_;
    fs::path dir_ = "out";
};

fs::path output_dir(const Options& o, const std::optional<RunConfig>& cfg) {
    if (!o.out.empty()) return o.out;
    if (const char* e = std::getenv("CPE_OUT_DIR"); e && *e) return e;
    if (cfg) return cfg->output.dir;
    return "out";
}

RunConfig load(const Options& o, bool config_required) {
    RunConfig cfg;
    if (!o.config.empty()) cfg = load_config(o.config);
    else if (config_required) throw ConfigError("--config PATH is required for " + o.verb);
    if (o.seed) cfg.initial.seed = *o.seed;
    if (o.beta_scale) cfg.beta_scale = *o.beta_scale;
    cfg.validate();
    return cfg;
}

void dump_state(const fs::path& dir, const State& s, int step, const std::vector<std::string>& which) {
    fs::create_directories(dir);
    char tag[32];
    std::snprintf(tag, sizeof tag, "%06d", step);
    for (const auto& w : which) {
        if (w == "rho_bar") write_field((dir / ("rho_bar_" + std::string(tag) + ".bin")).string(), s.rho_bar, "rho_bar", s.time);
        if (w == "theta") write_field((dir / ("theta_" + std::string(tag) + ".bin")).string(), s.theta, "theta", s.time);
        if (w == "v") {
            write_field((dir / ("v_x_" + std::string(tag) + ".bin")).string(), s.v.x, "v_x", s.time);
            write_field((dir / ("v_y_" + std::string(tag) + ".bin")).string(), s.v.y, "v_y", s.time);
        }
    }
}

json perturbation_json(const State& s, const Equilibrium& eq) {
    const LinearState u = perturbation_of(s, eq);
    return {{"rho_bar", u.xi.max_abs()}, {"v", u.V.max_abs()}, {"theta", u.T.max_abs()}};
}

void fill_trajectory_summary(Summary& sum, const Trajectory& tr, const Equilibrium& eq) {
    if (!tr.diagnostics.empty()) {
        const auto& d0 = tr.diagnostics.front();
        const auto& d1 = tr.diagnostics.back();
        double col = 0, avg = 0, wtop = 0;
        for (const auto& d : tr.diagnostics) {
            col = std::max(col, d.column_residual);
            avg = std::max(avg, d.avg_continuity_residual);
            wtop = std::max(wtop, d.max_w_top);
        }
        sum["energy"] = {{"initial", d0.energy.total()},
                         {"final", d1.energy.total()},
                         {"max_relative_drift", max_energy_drift(tr)},
                         {"mass_initial", d0.mass},
                         {"mass_final", d1.mass}};
        sum["residuals"] = {{"max_column_continuity", col}, {"max_averaged_continuity", avg}, {"max_w_top", wtop}};
    }
    if (!tr.states.empty()) {
        const State& s = tr.final_state();
        sum["final_time"] = s.time;
        sum["perturbation_final"] = perturbation_json(s, eq);
        const ScalarField3D rho = density(s.rho_bar, s.theta);
        sum["residuals"]["hydrostatic_final"] = (dz(rho * s.theta) + rho).max_abs();
    }
    if (!tr.records.empty()) {
        sum["steps_completed"] = static_cast<int>(tr.records.size()) - 1;
        sum["brackets"] = check_solution_class(tr, eq).to_json();
    }
    sum["picard"] = tr.picard ? tr.picard->to_json() : json(nullptr);
}

int cmd_run(const Options& o, Summary& sum, std::optional<RunConfig>& cfg_out) {
    cfg_out = load(o, true);
    const RunConfig& cfg = *cfg_out;
    const fs::path dir = output_dir(o, cfg);
    sum.set_dir(dir);
    sum["config"] = cfg.to_json();
    fs::create_directories(dir);

    const Equilibrium eq = cfg.equilibrium();
    const State s0 = cfg.initial_state();
    SolverConfig sc = cfg.solver;
    const int N = sc.steps();
    sc.store_every = cfg.output.dump_every > 0 ? cfg.output.dump_every : std::max(1, N);
    const fs::path fields = dir / "fields";
    const bool dumps = !cfg.output.dumps.empty();

    const auto t0 = std::chrono::steady_clock::now();
    Trajectory tr;
    auto report_progress = [&](int step, const State& s) {
        if (dumps) dump_state(fields, s, step, cfg.output.dumps);
        if (!o.quiet) std::cerr << "step " << step << "/" << N << "  t = " << s.time << '\n';
    };
    int code = kOk;
    std::string status = "ok", message;
    try {
        if (sc.scheme == Scheme::EulerianImex) {
            run_eulerian_into(tr, s0, eq, sc, cfg.sources(), report_progress);
        } else {
            tr = picard_solve(s0, eq, sc, cfg.sources());
            for (const auto& s : tr.states) report_progress(static_cast<int>(std::llround(s.time / sc.dt)), s);
        }
    } catch (const RegimeError& e) {
        code = kRegime;
        status = "regime_violation";
        message = e.what();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        code = kNumeric;
        status = "numeric_failure";
        message = e.what();
    }
    {
        std::ofstream csv(dir / "diagnostics.csv");
        DiagnosticsCsv w(csv);
        for (const auto& r : tr.diagnostics) w.write(r);
    }
    fill_trajectory_summary(sum, tr, eq);
    sum["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.quiet) {
        if (code == kOk)
            std::cout << "run finished: t = " << tr.final_state().time << ", energy drift "
                      << (tr.diagnostics.empty() ? 0.0 : max_energy_drift(tr)) << ", outputs in " << dir.string() << '\n';
        else
            std::cerr << "run stopped: " << message << '\n';
    }
    return sum.finish(code, status, message);
}

int cmd_study(const Options& o, Summary& sum, std::optional<RunConfig>& cfg_out) {
    cfg_out = load(o, true);
    const RunConfig& cfg = *cfg_out;
    const fs::path dir = output_dir(o, cfg);
    sum.set_dir(dir);
    sum["config"] = cfg.to_json();
    fs::create_directories(dir);
    std::ofstream csv(dir / "study.csv");
    csv << "level,axis,axis_value,metric,value,local_order,seconds\n";
    std::optional<StudyRow> prev;
    const StudyResult res = run_study(cfg, [&](const StudyRow& r) {
        const double local =
            prev && prev->metric > 0 && r.metric > 0 ? std::log(prev->metric / r.metric) / std::log(prev->axis_value / r.axis_value)
                                                     : std::nan("");
        csv << std::setprecision(17) << r.level << ',' << to_string(cfg.study.axis) << ',' << r.axis_value << ','
            << cfg.study.metric << ',' << r.metric << ',' << local << ',' << r.seconds << '\n';
        csv.flush();
        if (!o.quiet)
            std::cout << "level " << r.level << "  " << to_string(cfg.study.axis) << " = " << r.axis_value << "  "
                      << cfg.study.metric << " = " << r.metric << "  local order " << local << '\n';
        prev = r;
    });
    if (!o.quiet) std::cout << "observed order (least-squares log-log slope): " << res.slope << '\n';
    sum["study"] = res.to_json();
    return sum.finish(kOk, "ok", "");
}

int cmd_audit(const Options& o, Summary& sum, std::optional<RunConfig>& cfg_out) {
    cfg_out = load(o, false);
    const RunConfig& cfg = *cfg_out;
    const fs::path dir = output_dir(o, cfg);
    sum.set_dir(dir);
    sum["config"] = cfg.to_json();
    const AuditReport rep = run_audit(cfg);
    if (!o.quiet) {
        for (const auto& c : rep.checks)
            std::cout << (c.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(34) << c.name << std::right
                      << " value " << std::setw(12) << std::setprecision(4) << c.value << "  bound " << std::setw(12)
                      << c.bound << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
        std::cout << "spectrum of L^{-1}: deviations from {1/2, 1}:";
        for (double e : rep.spectrum.eigenvalues) std::cout << ' ' << std::min(std::abs(e - 0.5), std::abs(e - 1.0));
        std::cout << '\n';
        for (const auto& n : rep.notes) std::cout << "note: " << n << '\n';
        std::cout << (rep.all_pass() ? "all invariants pass\n" : "some invariants FAIL\n");
    }
    sum["audit"] = rep.to_json();
    return sum.finish(kOk, "ok", "");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compressible primitive equations: batch runs, convergence studies and invariant audits"};
    Options o;
    app.add_option("--config", o.config, "JSON configuration file");
    app.add_option("--out", o.out, "output directory (overrides output.dir and CPE_OUT_DIR)");
    app.add_option("--seed", o.seed, "random seed for scenario mode selection");
    app.add_flag("--quiet", o.quiet, "suppress progress output");
    app.add_option("--debug-beta-scale", o.beta_scale, "multiply the normalized beta profile (negative control)");
    app.require_subcommand(1, 1);
    for (const char* verb : {"run", "study", "audit"}) app.add_subcommand(verb)->fallthrough();
    app.get_subcommand("run")->description("integrate one configuration and write diagnostics, dumps and summary");
    app.get_subcommand("study")->description("rerun with one axis scaled over levels and fit the observed order");
    app.get_subcommand("audit")->description("evaluate the invariant suite at the configured resolution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }
    o.verb = app.get_subcommands().front()->get_name();

    Summary sum(o.verb);
    std::optional<RunConfig> cfg;
    try {
        if (o.verb == "run") return cmd_run(o, sum, cfg);
        if (o.verb == "study") return cmd_study(o, sum, cfg);
        return cmd_audit(o, sum, cfg);
    } catch (const ConfigError& e) {
        sum.set_dir(output_dir(o, cfg));
        std::cerr << "configuration error: " << e.what() << '\n';
        return sum.finish(kConfig, "config_error", e.what());
    } catch (const RegimeError& e) {
        sum.set_dir(output_dir(o, cfg));
        std::cerr << "regime violation: " << e.what() << '\n';
        return sum.finish(kRegime, "regime_violation", e.what());
    } catch (const std::exception& e) {
        sum.set_dir(output_dir(o, cfg));
        std::cerr << "numeric failure: " << e.what() << '\n';
        return sum.finish(kNumeric, "numeric_failure", e.what());
    }
}
