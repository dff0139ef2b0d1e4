#pragma once

// Convergence studies: rerun a configuration with one axis scaled over levels
// and fit the observed order as the least-squares slope in log-log.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpe/invariants.hpp"

namespace cpe {

struct StudyRow {
    int level = 0;
    double axis_value = 0.0;  ///< dt, 1/(nz-1), 1/nx or eps
    double metric = 0.0;
    double seconds = 0.0;
};

struct StudyResult {
    StudyAxis axis = StudyAxis::Dt;
    std::string metric;
    std::vector<StudyRow> rows;
    double slope = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& row : rows)
            r.push_back({{"level", row.level}, {"axis_value", row.axis_value}, {"metric", row.metric}});
        return {{"axis", to_string(axis)}, {"metric", metric}, {"rows", r}, {"observed_order", slope}};
    }
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Configuration at refinement level l of the study axis.
inline RunConfig study_level(const RunConfig& base, int l) {
    RunConfig c = base;
    const int f = 1 << l;
    switch (base.study.axis) {
        case StudyAxis::Dt: c.solver.dt = base.solver.dt / f; break;
        case StudyAxis::Nz: c.nz = (base.nz - 1) * f + 1; break;
        case StudyAxis::Nx:
            c.nx = base.nx * f;
            c.ny = base.ny * f;
            break;
        case StudyAxis::Eps: c.initial.eps = base.initial.eps / f; break;
    }
    c.solver.diagnostics_every = c.output.diagnostics_every = 1;
    c.solver.store_every = std::max(1, c.solver.steps());
    return c;
}

inline double study_axis_value(const RunConfig& c, StudyAxis a) {
    switch (a) {
        case StudyAxis::Dt: return c.solver.dt;
        case StudyAxis::Nz: return 1.0 / (c.nz - 1);
        case StudyAxis::Nx: return 1.0 / c.nx;
        case StudyAxis::Eps: return c.initial.eps;
    }
    return 0.0;
}

/// The study metric of one configuration.
inline double study_metric(const RunConfig& c) {
    const std::string& m = c.study.metric;
    const Equilibrium eq = c.equilibrium();
    const State s0 = c.initial_state();
    if (m == "hydrostatic") return hydrostatic_error(s0.theta);
    if (m == "remainder") return remainder_norm(s0, eq, c.solver.physics, 1.0, c.initial.eps);
    if (m == "energy_drift") return max_energy_drift(solve(s0, eq, c.solver, c.sources()));
    if (m == "picard_ratio") {
        SolverConfig sc = c.solver;
        sc.scheme = Scheme::PicardLagrangian;
        const Trajectory tr = picard_solve(s0, eq, sc, c.sources());
        return tr.picard->ratios.empty() ? 0.0 : tr.picard->ratios.front();
    }
    if (m == "manufactured_error") {
        if (c.initial.scenario != "manufactured-1")
            throw ConfigError("study.metric: manufactured_error needs initial.scenario = manufactured-1");
        const Trajectory tr = solve(s0, eq, c.solver, c.sources());
        const State exact = manufactured_for(eq, c.initial.eps).at(c.grid(), c.solver.t_end);
        return (perturbation_of(tr.final_state(), eq) - perturbation_of(exact, eq)).max_abs();
    }
    throw ConfigError("study.metric: unknown metric \"" + m + "\"");
}

using StudyProgress = std::function<void(const StudyRow&)>;

inline StudyResult run_study(const RunConfig& base, const StudyProgress& progress = {}) {
    StudyResult res;
    res.axis = base.study.axis;
    res.metric = base.study.metric;
    std::vector<double> x, y;
    for (int l = 0; l < base.study.levels; ++l) {
        const RunConfig c = study_level(base, l);
        c.validate();
        const auto t0 = std::chrono::steady_clock::now();
        StudyRow row{l, study_axis_value(c, res.axis), study_metric(c), 0.0};
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.rows.push_back(row);
        if (progress) progress(row);
        if (row.metric > 0.0) {
            x.push_back(row.axis_value);
            y.push_back(row.metric);
        }
    }
    res.slope = x.size() >= 2 ? loglog_slope(x, y) : std::nan("");
    return res;
}

}  // namespace cpe
