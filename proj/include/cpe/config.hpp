#pragma once

// Run configuration: one JSON document with blocks grid, physics, initial,
// solver, output, study and debug.  Every key is checked; unknown keys and
// type errors are reported with the dotted field path, syntax errors with
// line and column.

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpe/scenarios.hpp"
#include "cpe/solver.hpp"

namespace cpe {

/// Stationary heating Q = amplitude cos(2 pi mx x) cos(2 pi my y) cos(mz pi z) in the Theta row.
struct HeatingSpec {
    double amplitude = 0.0;
    int mx = 1, my = 0, mz = 1;

    bool active() const { return amplitude != 0.0; }
    ScalarField3D field(const GridSpec& g) const {
        return ScalarField3D::sample(g, [&](double x, double y, double z) {
            return amplitude * std::cos(2.0 * M_PI * mx * x) * std::cos(2.0 * M_PI * my * y) * std::cos(mz * M_PI * z);
        });
    }
};

struct InitialSpec {
    std::string scenario = "theta-bump";
    double eps = 1e-3;
    unsigned seed = 0;
};

struct OutputSpec {
    std::string dir = "out";
    int diagnostics_every = 1;
    /// Field dumps every n steps (0: initial and final only).
    int dump_every = 0;
    std::vector<std::string> dumps{"rho_bar", "v", "theta"};
};

enum class StudyAxis { Dt, Nz, Nx, Eps };

inline const char* to_string(StudyAxis a) {
    switch (a) {
        case StudyAxis::Dt: return "dt";
        case StudyAxis::Nz: return "nz";
        case StudyAxis::Nx: return "nx";
        case StudyAxis::Eps: return "eps";
    }
    return "?";
}

struct StudySpec {
    StudyAxis axis = StudyAxis::Dt;
    int levels = 3;
    /// energy_drift, remainder, hydrostatic, manufactured_error, picard_ratio
    std::string metric = "energy_drift";
};

struct RunConfig {
    int nx = 32, ny = 32, nz = 33;
    double rho_bar_star = 1.0;
    double theta_star = 1.0;
    HeatingSpec heating;
    InitialSpec initial;
    SolverConfig solver;
    OutputSpec output;
    StudySpec study;
    /// Debug knob: multiplies the normalized beta profile (negative control).
    double beta_scale = 1.0;

    GridSpec grid() const { return GridSpec(nx, ny, nz); }
    Equilibrium equilibrium() const { return make_equilibrium(grid(), rho_bar_star, theta_star, beta_scale); }
    State initial_state() const {
        return scenario_initial(initial.scenario, grid(), equilibrium(), initial.eps, initial.seed);
    }

    /// Sources of the run: heating and, for manufactured-1, the manufactured terms.
    SourceFn sources() const {
        const GridSpec g = grid();
        const Physics ph = solver.physics;
        std::optional<ScalarField3D> q;
        if (heating.active()) q = heating.field(g);
        if (initial.scenario == "manufactured-1") {
            const Manufactured man = manufactured_for(equilibrium(), initial.eps);
            return [g, ph, man, q](double t) {
                Sources s = man.sources(g, t, ph);
                if (q) *s.theta += *q;
                return s;
            };
        }
        if (!q) return {};
        return [q](double) {
            Sources s;
            s.theta = *q;
            return s;
        };
    }

    void validate() const {
        if (nx < 4 || ny < 4 || nx % 2 || ny % 2) throw ConfigError("grid.nx, grid.ny must be even and >= 4");
        if (nz < 5) throw ConfigError("grid.nz must be >= 5");
        if (!(rho_bar_star > 0.0)) throw ConfigError("physics.rho_bar_star must be positive");
        if (!(theta_star > 0.0)) throw ConfigError("physics.theta_star must be positive");
        const auto& names = scenario_names();
        if (std::find(names.begin(), names.end(), initial.scenario) == names.end())
            throw ConfigError("initial.scenario: unknown scenario \"" + initial.scenario + "\"");
        if (!(initial.eps >= 0.0)) throw ConfigError("initial.eps must be nonnegative");
        if (output.diagnostics_every < 1) throw ConfigError("output.diagnostics_every must be >= 1");
        if (output.dump_every < 0) throw ConfigError("output.dump_every must be >= 0");
        for (const auto& d : output.dumps)
            if (d != "rho_bar" && d != "v" && d != "theta")
                throw ConfigError("output.dumps: unknown field \"" + d + "\" (expected rho_bar, v, theta)");
        if (study.levels < 2) throw ConfigError("study.levels must be >= 2");
        static const std::set<std::string> metrics{"energy_drift", "remainder", "hydrostatic", "manufactured_error",
                                                   "picard_ratio"};
        if (!metrics.count(study.metric)) throw ConfigError("study.metric: unknown metric \"" + study.metric + "\"");
        if (!(beta_scale > 0.0)) throw ConfigError("debug.beta_scale must be positive");
        solver.validate();
    }

    nlohmann::json to_json() const;
};

namespace detail {

/// Typed access to one JSON object with path tracking and unknown-key checks.
class Block {
public:
    Block(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        const std::string p = field(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(p + ": expected true or false");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(p + ": expected an integer");
            const auto n = v.get<long long>();
            if constexpr (std::is_unsigned_v<T>)
                if (n < 0) throw ConfigError(p + ": expected a nonnegative integer");
            out = static_cast<T>(n);
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(p + ": expected a number");
            out = v.get<double>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(p + ": expected a string");
            out = v.get<std::string>();
        } else {
            if (!v.is_array()) throw ConfigError(p + ": expected an array of strings");
            out.clear();
            for (std::size_t n = 0; n < v.size(); ++n) {
                if (!v[n].is_string()) throw ConfigError(p + "[" + std::to_string(n) + "]: expected a string");
                out.push_back(v[n].get<std::string>());
            }
        }
    }

    template <class F>
    void get_enum(const char* key, F&& parse) {
        std::string s;
        get(key, s);
        if (!j_.contains(key)) return;
        try {
            parse(s);
        } catch (const ConfigError& e) {
            throw ConfigError(field(key) + ": " + e.what());
        }
    }

    std::optional<Block> sub(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key)) return std::nullopt;
        return Block(j_.at(key), field(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key().c_str()) + ": unknown key");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t n = 0; n < std::min(byte, text.size()); ++n) {
        if (text[n] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col > 1 ? col - 1 : 1);
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::string msg = e.what();
        if (auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
        throw ConfigError(source + ": " + detail::line_col(text, e.byte) + ": " + msg);
    }
    RunConfig c;
    detail::Block root(j, "");
    if (auto b = root.sub("grid")) {
        b->get("nx", c.nx);
        b->get("ny", c.ny);
        b->get("nz", c.nz);
        b->finish();
    }
    if (auto b = root.sub("physics")) {
        b->get("rho_bar_star", c.rho_bar_star);
        b->get("theta_star", c.theta_star);
        b->get("mu", c.solver.physics.mu);
        b->get("mu_prime", c.solver.physics.mu_prime);
        b->get("kappa", c.solver.physics.kappa);
        b->get_enum("dissipation", [&](const std::string& s) { c.solver.physics.phi = dissipation_from_string(s); });
        if (auto h = b->sub("heating")) {
            h->get("amplitude", c.heating.amplitude);
            h->get("mx", c.heating.mx);
            h->get("my", c.heating.my);
            h->get("mz", c.heating.mz);
            h->finish();
        }
        b->finish();
    }
    if (auto b = root.sub("initial")) {
        b->get("scenario", c.initial.scenario);
        b->get("eps", c.initial.eps);
        b->get("seed", c.initial.seed);
        b->finish();
    }
    if (auto b = root.sub("solver")) {
        auto& s = c.solver;
        b->get_enum("scheme", [&](const std::string& v) { s.scheme = scheme_from_string(v); });
        b->get_enum("imex", [&](const std::string& v) { s.imex = imex_from_string(v); });
        b->get("dt", s.dt);
        b->get("t_end", s.t_end);
        b->get("picard_tol", s.picard_tol);
        b->get("picard_max_iters", s.picard_max_iters);
        b->get_enum("picard_form", [&](const std::string& v) { s.picard_form = linear_form_from_string(v); });
        b->get("picard_freeze_flow_after", s.picard_freeze_flow_after);
        b->get("enforce_regime", s.enforce_regime);
        b->finish();
    }
    if (auto b = root.sub("output")) {
        b->get("dir", c.output.dir);
        b->get("diagnostics_every", c.output.diagnostics_every);
        b->get("dump_every", c.output.dump_every);
        b->get("dumps", c.output.dumps);
        b->finish();
    }
    if (auto b = root.sub("study")) {
        b->get_enum("axis", [&](const std::string& v) {
            if (v == "dt") c.study.axis = StudyAxis::Dt;
            else if (v == "nz") c.study.axis = StudyAxis::Nz;
            else if (v == "nx") c.study.axis = StudyAxis::Nx;
            else if (v == "eps") c.study.axis = StudyAxis::Eps;
            else throw ConfigError("unknown axis \"" + v + "\" (expected dt, nz, nx or eps)");
        });
        b->get("levels", c.study.levels);
        b->get("metric", c.study.metric);
        b->finish();
    }
    if (auto b = root.sub("debug")) {
        b->get("beta_scale", c.beta_scale);
        b->finish();
    }
    root.finish();
    c.solver.diagnostics_every = c.output.diagnostics_every;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

inline nlohmann::json RunConfig::to_json() const {
    const auto& s = solver;
    return {{"grid", {{"nx", nx}, {"ny", ny}, {"nz", nz}}},
            {"physics",
             {{"rho_bar_star", rho_bar_star},
              {"theta_star", theta_star},
              {"mu", s.physics.mu},
              {"mu_prime", s.physics.mu_prime},
              {"kappa", s.physics.kappa},
              {"dissipation", to_string(s.physics.phi)},
              {"heating", {{"amplitude", heating.amplitude}, {"mx", heating.mx}, {"my", heating.my}, {"mz", heating.mz}}}}},
            {"initial", {{"scenario", initial.scenario}, {"eps", initial.eps}, {"seed", initial.seed}}},
            {"solver",
             {{"scheme", to_string(s.scheme)},
              {"imex", to_string(s.imex)},
              {"dt", s.dt},
              {"t_end", s.t_end},
              {"picard_tol", s.picard_tol},
              {"picard_max_iters", s.picard_max_iters},
              {"picard_form", to_string(s.picard_form)},
              {"picard_freeze_flow_after", s.picard_freeze_flow_after},
              {"enforce_regime", s.enforce_regime}}},
            {"output",
             {{"dir", output.dir},
              {"diagnostics_every", output.diagnostics_every},
              {"dump_every", output.dump_every},
              {"dumps", output.dumps}}},
            {"study", {{"axis", to_string(study.axis)}, {"levels", study.levels}, {"metric", study.metric}}},
            {"debug", {{"beta_scale", beta_scale}}}};
}

}  // namespace cpe
