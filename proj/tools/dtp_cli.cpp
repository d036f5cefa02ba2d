// dtp: discounted turnpike analysis on grids.
//
//   dtp solve --example 3 --beta 0.7 --out run
//   dtp thresholds --example 1 --rho 0.3 --k 1
//   dtp scan --example 1 --beta-grid 0.5:0.9:0.01 --x0 -0.8
//   dtp reproduce 2 --gamma 10
//
// Exit codes: 0 success, 1 computation failure, 2 configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "dtp/dissipativity.hpp"
#include "dtp/grid_dp.hpp"
#include "dtp/model_spec.hpp"
#include "dtp/svg.hpp"
#include "dtp/turnpike.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dtp;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Values set on the command line; each overrides the matching config field.
struct Flags {
    std::string config;
    std::optional<int> example;
    std::optional<double> beta;
    std::optional<std::string> beta_grid;
    std::optional<double> gamma;
    std::vector<double> x0;
    std::optional<std::size_t> grid;
    std::optional<std::size_t> ugrid;
    std::optional<double> tol;
    std::optional<std::size_t> horizon;
    std::optional<double> rho;
    std::optional<double> k;
    std::optional<std::size_t> stay_steps;
    std::optional<std::string> storage;
    std::optional<std::string> region;
    std::optional<std::size_t> equilibrium;
    std::optional<double> epsilon;
    std::optional<std::string> out;
};

struct RunConfig {
    ModelSpec model = ModelSpec::builtin(1);
    std::optional<int> example = 1;
    std::optional<double> beta;
    std::vector<double> beta_grid;
    /// Nodes per axis; unset means 4001 states and 6001 controls for
    /// example 3, else 801 and 601.
    std::optional<std::size_t> grid;
    std::optional<std::size_t> ugrid;
    double tol = 1e-6;
    std::size_t max_iter = 200'000;
    std::vector<Vec> x0;
    std::size_t horizon = 30;
    double rho = 0.3;
    double k = 1.0;
    std::size_t stay_steps = 1;
    std::string storage = "auto";
    std::optional<Box> region;
    std::optional<std::size_t> equilibrium;
    double epsilon = 0.1;
    std::string out = "out";
};

std::size_t state_nodes(const RunConfig& c, std::optional<int> example) {
    if (c.grid) return *c.grid;
    return example == 3 ? 4001 : 801;
}

std::size_t control_nodes(const RunConfig& c, std::optional<int> example) {
    if (c.ugrid) return *c.ugrid;
    return example == 3 ? 6001 : 601;
}

double default_beta(const RunConfig& c) {
    if (!c.example) throw SpecError("beta is required for polynomial models");
    return *c.example == 1 ? 0.6 : 0.7;
}

std::vector<double> beta_list(const RunConfig& c) {
    if (!c.beta_grid.empty()) return c.beta_grid;
    return {c.beta ? *c.beta : default_beta(c)};
}

Vec default_x0(const RunConfig& c, const ControlSystem& sys) {
    if (c.example) return Vec{*c.example == 3 ? 1.0 : -0.8};
    Vec mid(sys.state_dim());
    for (std::size_t a = 0; a < mid.size(); ++a) mid[a] = 0.5 * (sys.state_box[a].lo + sys.state_box[a].hi);
    return mid;
}

Box parse_region(const std::string& text) {
    Box b;
    std::stringstream ss(text);
    std::string axis;
    while (std::getline(ss, axis, ',')) {
        const auto colon = axis.find(':');
        if (colon == std::string::npos) throw SpecError("region '" + text + "': expected LO:HI[,LO:HI]");
        try {
            std::size_t a = 0, b2 = 0;
            const std::string lo_s = axis.substr(0, colon), hi_s = axis.substr(colon + 1);
            const double lo = std::stod(lo_s, &a);
            const double hi = std::stod(hi_s, &b2);
            if (a != lo_s.size() || b2 != hi_s.size() || !(lo < hi)) throw std::invalid_argument(axis);
            b.push({lo, hi});
        } catch (const std::exception&) {
            throw SpecError("region '" + text + "': expected LO:HI[,LO:HI] with LO < HI");
        }
    }
    if (b.dim() == 0) throw SpecError("region '" + text + "': empty");
    return b;
}

template <class T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw SpecError(std::string("config field '") + key + "' has the wrong type");
    }
}

void apply_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot read config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SpecError("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw SpecError("config must be a JSON object");
    static const std::vector<std::string> known = {
        "model", "example", "gamma", "beta", "beta_grid", "grid", "ugrid", "tol", "max_iter", "x0", "horizon",
        "rho", "k", "stay_steps", "storage", "region", "equilibrium", "epsilon", "out"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw SpecError("config: unknown field '" + key + "'");
    }
    if (j.contains("model") && j.contains("example")) throw SpecError("config: give either 'model' or 'example'");
    if (j.contains("model")) {
        c.model = model_spec_from_json(j["model"]);
        switch (c.model.kind) {
            case ModelSpec::Kind::example1: c.example = 1; break;
            case ModelSpec::Kind::example2: c.example = 2; break;
            case ModelSpec::Kind::example3: c.example = 3; break;
            case ModelSpec::Kind::polynomial: c.example.reset(); break;
        }
    }
    if (j.contains("example")) {
        c.example = field<int>(j, "example");
        c.model = ModelSpec::builtin(*c.example, c.model.gamma);
    }
    if (j.contains("gamma")) c.model.gamma = field<double>(j, "gamma");
    if (j.contains("beta")) c.beta = field<double>(j, "beta");
    if (j.contains("beta_grid")) {
        if (j["beta_grid"].is_string()) c.beta_grid = parse_range(j["beta_grid"].get<std::string>());
        else c.beta_grid = field<std::vector<double>>(j, "beta_grid");
    }
    if (j.contains("grid")) c.grid = field<std::size_t>(j, "grid");
    if (j.contains("ugrid")) c.ugrid = field<std::size_t>(j, "ugrid");
    if (j.contains("tol")) c.tol = field<double>(j, "tol");
    if (j.contains("max_iter")) c.max_iter = field<std::size_t>(j, "max_iter");
    if (j.contains("x0")) {
        c.x0.clear();
        const auto& x = j["x0"];
        auto to_vec = [](const json& e) {
            if (e.is_number()) return Vec{e.get<double>()};
            if (!e.is_array() || e.empty() || e.size() > Vec::kMaxDim) throw SpecError("config: bad x0 entry");
            std::vector<double> v;
            for (const auto& s : e) {
                if (!s.is_number()) throw SpecError("config: bad x0 entry");
                v.push_back(s.get<double>());
            }
            return Vec::from_span(v);
        };
        if (x.is_array()) {
            for (const auto& e : x) c.x0.push_back(to_vec(e));
        } else {
            c.x0.push_back(to_vec(x));
        }
    }
    if (j.contains("horizon")) c.horizon = field<std::size_t>(j, "horizon");
    if (j.contains("rho")) c.rho = field<double>(j, "rho");
    if (j.contains("k")) c.k = field<double>(j, "k");
    if (j.contains("stay_steps")) c.stay_steps = field<std::size_t>(j, "stay_steps");
    if (j.contains("storage")) c.storage = field<std::string>(j, "storage");
    if (j.contains("region")) c.region = box_from_json(j["region"], "region");
    if (j.contains("equilibrium")) c.equilibrium = field<std::size_t>(j, "equilibrium");
    if (j.contains("epsilon")) c.epsilon = field<double>(j, "epsilon");
    if (j.contains("out")) c.out = field<std::string>(j, "out");
}

RunConfig resolve(const Flags& f) {
    RunConfig c;
    if (!f.config.empty()) apply_config_file(c, f.config);
    if (f.example) {
        c.example = *f.example;
        c.model = ModelSpec::builtin(*f.example, c.model.gamma);
    }
    if (f.gamma) {
        if (c.example == 1 && *f.gamma != 0.0) {
            c.example = 2;
            c.model = ModelSpec::builtin(2);
        }
        c.model.gamma = *f.gamma;
    }
    if (f.beta) c.beta = *f.beta;
    if (f.beta_grid) c.beta_grid = parse_range(*f.beta_grid);
    if (!f.x0.empty()) {
        c.x0.clear();
        for (double v : f.x0) c.x0.push_back(Vec{v});
    }
    if (f.grid) c.grid = *f.grid;
    if (f.ugrid) c.ugrid = *f.ugrid;
    if (f.tol) c.tol = *f.tol;
    if (f.horizon) c.horizon = *f.horizon;
    if (f.rho) c.rho = *f.rho;
    if (f.k) c.k = *f.k;
    if (f.stay_steps) c.stay_steps = *f.stay_steps;
    if (f.storage) c.storage = *f.storage;
    if (f.region) c.region = parse_region(*f.region);
    if (f.equilibrium) c.equilibrium = *f.equilibrium;
    if (f.epsilon) c.epsilon = *f.epsilon;
    if (f.out) c.out = *f.out;

    const ControlSystem sys = expand_model_spec(c.model);
    if ((c.grid && *c.grid < 2) || (c.ugrid && *c.ugrid < 2)) throw SpecError("grid and ugrid need at least 2 nodes per axis");
    if (!(c.tol > 0.0)) throw SpecError("tol must be positive");
    for (double b : beta_list(c)) {
        if (!(b > 0.0 && b < 1.0)) throw SpecError("beta must lie in (0,1)");
    }
    if (c.x0.empty()) c.x0.push_back(default_x0(c, sys));
    for (const auto& x : c.x0) {
        if (x.size() != sys.state_dim()) throw SpecError("x0 has the wrong dimension");
        if (!sys.state_box.contains(x)) throw SpecError("x0 lies outside the state box");
    }
    if (!(c.rho > 0.0)) throw SpecError("rho must be positive");
    if (!(c.k >= 1.0)) throw SpecError("k must be >= 1");
    if (c.stay_steps < 1) throw SpecError("stay_steps must be >= 1");
    if (!(c.epsilon > 0.0)) throw SpecError("epsilon must be positive");
    if (c.region && (c.region->dim() != sys.state_dim() || !sys.state_box.contains_box(*c.region)))
        throw SpecError("region must lie inside the state box");
    (void)parse_storage_choice(c.storage);
    return c;
}

json to_json(const RunConfig& c) {
    json j;
    j["model"] = to_json(c.model);
    if (c.example) j["example"] = *c.example;
    if (c.beta) j["beta"] = *c.beta;
    if (!c.beta_grid.empty()) j["beta_grid"] = c.beta_grid;
    j["grid"] = state_nodes(c, c.example);
    j["ugrid"] = control_nodes(c, c.example);
    j["tol"] = c.tol;
    j["max_iter"] = c.max_iter;
    json x0 = json::array();
    for (const auto& x : c.x0) x0.push_back(vec_to_json(x));
    j["x0"] = x0;
    j["horizon"] = c.horizon;
    j["rho"] = c.rho;
    j["k"] = c.k;
    j["stay_steps"] = c.stay_steps;
    j["storage"] = c.storage;
    if (c.region) j["region"] = box_to_json(*c.region);
    if (c.equilibrium) j["equilibrium"] = *c.equilibrium;
    j["epsilon"] = c.epsilon;
    j["out"] = c.out;
    return j;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

class Output {
  public:
    Output(const std::string& dir, const std::string& command, const RunConfig& c) : dir_(dir) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) throw SpecError("cannot create output directory '" + dir + "'");
        write_json("meta.json", {{"command", command}, {"config", to_json(c)}});
    }

    std::ofstream open(const std::string& name) const {
        std::ofstream os(dir_ / name);
        if (!os) throw SpecError("cannot write '" + (dir_ / name).string() + "'");
        return os;
    }

    void write_json(const std::string& name, const json& j) const { open(name) << j.dump(2) << '\n'; }

    void write_svg(const std::string& name, const SvgPlot& plot) const {
        auto os = open(name);
        plot.write(os);
    }

    [[nodiscard]] const fs::path& dir() const { return dir_; }

  private:
    fs::path dir_;
};

std::string fixed(double v, int digits = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

SvgPlot trajectory_plot(const std::string& title) { return SvgPlot(title, "k", "x(k)"); }

void add_trajectory(SvgPlot& plot, const std::string& label, const Trajectory& t) {
    std::vector<double> k, x;
    for (std::size_t i = 0; i < t.states.size(); ++i) {
        k.push_back(static_cast<double>(i));
        x.push_back(t.states[i][0]);
    }
    plot.add(label, std::move(k), std::move(x));
}

std::size_t pick_equilibrium(const RunConfig& c, const std::vector<Equilibrium>& eqs) {
    if (eqs.empty()) throw DomainError("no equilibrium found on the grid");
    const std::size_t i = c.equilibrium.value_or(eqs.size() > 1 ? 1 : 0);
    if (i >= eqs.size()) throw SpecError("equilibrium index " + std::to_string(i) + " out of range");
    return i;
}

std::vector<Equilibrium> equilibria_for(const ControlSystem& sys, double beta) {
    return find_equilibria(sys, beta, Grid::uniform(sys.state_box, 201), Grid::uniform(sys.control_box, 201));
}

Box default_region(const RunConfig& c, const ControlSystem& sys, const Equilibrium& eq) {
    if (c.region) return *c.region;
    Box r;
    for (std::size_t a = 0; a < eq.x.size(); ++a)
        r.push({std::max(sys.state_box[a].lo, eq.x[a] - 2.0 * c.rho), std::min(sys.state_box[a].hi, eq.x[a] + 2.0 * c.rho)});
    return r;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_solve(const RunConfig& c) {
    const ControlSystem sys = expand_model_spec(c.model);
    const double beta = beta_list(c).front();
    const DiscountedProblem problem(sys, beta);
    const Grid us = Grid::uniform(sys.control_box, control_nodes(c, c.example));
    const BellmanOperator T(problem, Grid::uniform(sys.state_box, state_nodes(c, c.example)), us);
    const auto V = value_iteration(T, SolveOptions{c.tol, c.max_iter});
    const Output out(c.out, "solve", c);
    {
        auto os = out.open("V.csv");
        write_value_csv(os, V);
    }
    {
        auto os = out.open("policy.csv");
        write_policy_csv(os, extract_policy(T, V));
    }
    auto log = out.open("solve.log");
    log << std::setprecision(17) << "beta " << beta << "\niterations " << V.iterations << "\nlast_update "
        << V.last_update << "\nbellman_residual " << V.bellman_residual << "\ntol " << c.tol << '\n';
    std::cout << "solve: " << V.iterations << " sweeps, residual " << V.bellman_residual << " -> " << out.dir()
              << '\n';
}

void cmd_rollout(const RunConfig& c) {
    const ControlSystem sys = expand_model_spec(c.model);
    const double beta = beta_list(c).front();
    const DiscountedProblem problem(sys, beta);
    const Grid us = Grid::uniform(sys.control_box, control_nodes(c, c.example));
    const BellmanOperator T(problem, Grid::uniform(sys.state_box, state_nodes(c, c.example)), us);
    const auto V = value_iteration(T, SolveOptions{c.tol, c.max_iter});
    const Policy policy = extract_policy(T, V);
    const auto eqs = equilibria_for(sys, beta);
    const Output out(c.out, "rollout", c);
    SvgPlot plot = trajectory_plot("Optimal trajectories, beta = " + fixed(beta, 3));
    json runs = json::array();
    RolloutOptions ro;
    ro.refine = true;
    for (std::size_t i = 0; i < c.x0.size(); ++i) {
        const auto t = rollout(policy, problem, c.x0[i], c.horizon, ro);
        {
            auto os = out.open("trajectory_" + std::to_string(i) + ".csv");
            write_trajectory_csv(os, t);
        }
        const Behavior b = classify(t, eqs, sys.state_box);
        runs.push_back({{"x0", vec_to_json(c.x0[i])},
                        {"terminal", vec_to_json(t.states.back())},
                        {"class", to_string(b)},
                        {"exited", t.exited},
                        {"discounted_cost", t.total()}});
        add_trajectory(plot, "x0 = " + fixed(c.x0[i][0], 3), t);
        std::cout << "x0 " << c.x0[i] << " -> " << t.states.back() << " (" << to_string(b) << ")\n";
    }
    out.write_json("rollout.json", {{"beta", beta}, {"iterations", V.iterations}, {"runs", runs}});
    out.write_svg("trajectories.svg", plot);
}

void cmd_equilibria(const RunConfig& c) {
    const ControlSystem sys = expand_model_spec(c.model);
    const double beta = beta_list(c).front();
    const auto eqs = equilibria_for(sys, beta);
    json list = json::array();
    for (const auto& e : eqs) {
        json j = to_json(e);
        try {
            const auto st = synthesize_linear_storage(sys, e, beta);
            j["storage"] = {{"nu", vec_to_json(st.nu)}, {"residual", st.residual}};
        } catch (const StorageSynthesisFailed& err) {
            j["storage"] = {{"error", err.what()}, {"residual", err.residual()}};
        }
        list.push_back(j);
        std::cout << "x " << e.x << "  u " << e.u << "  cost " << e.stage_cost_value << (e.refined ? "" : "  (unrefined)")
                  << '\n';
    }
    const Output out(c.out, "equilibria", c);
    out.write_json("equilibria.json", {{"beta", beta}, {"equilibria", list}});
}

struct Anchored {
    ControlSystem sys;
    double beta;
    std::vector<Equilibrium> eqs;
    std::size_t index;
    StorageFunction storage;
    Box region;
};

Anchored anchor(const RunConfig& c) {
    ControlSystem sys = expand_model_spec(c.model);
    const double beta = beta_list(c).front();
    auto eqs = equilibria_for(sys, beta);
    const std::size_t i = pick_equilibrium(c, eqs);
    StorageFunction storage = make_storage(parse_storage_choice(c.storage), sys, eqs[i], beta);
    Box region = default_region(c, sys, eqs[i]);
    return {std::move(sys), beta, std::move(eqs), i, std::move(storage), std::move(region)};
}

void cmd_dissipativity(const RunConfig& c) {
    const Anchored a = anchor(c);
    const DiscountedProblem problem(a.sys, a.beta);
    const auto& eq = a.eqs[a.index];
    const auto xu = verify_dissipativity(problem, eq, a.storage, a.region, DissipativityVariant::state_control);
    const auto x = verify_dissipativity(problem, eq, a.storage, a.region, DissipativityVariant::state_only);
    const Output out(c.out, "dissipativity", c);
    out.write_json("dissipativity.json", {{"beta", a.beta},
                                          {"equilibrium", to_json(eq)},
                                          {"storage", a.storage.describe()},
                                          {"xu", to_json(xu)},
                                          {"x", to_json(x)}});
    std::cout << "(x,u): " << (xu.accepted ? "accepted" : "rejected") << ", x: " << (x.accepted ? "accepted" : "rejected")
              << ", ell_tilde_min " << xu.ell_tilde_min << '\n';
}

void cmd_turnpike(const RunConfig& c) {
    const Anchored a = anchor(c);
    const DiscountedProblem problem(a.sys, a.beta);
    const auto& eq = a.eqs[a.index];
    const Grid xs = Grid::uniform(a.sys.state_box, state_nodes(c, c.example));
    const Grid us = Grid::uniform(a.sys.control_box, control_nodes(c, c.example));
    const CostSelector cost{Rotation{eq, a.storage}};
    const BellmanOperator T(problem, xs, us, cost);
    const auto V = value_iteration(T, SolveOptions{c.tol, c.max_iter});
    const Policy policy = extract_policy(T, V);

    double outer = 0.0;
    for (std::size_t d = 0; d < a.region.dim(); ++d)
        outer = std::max({outer, eq.x[d] - a.region[d].lo, a.region[d].hi - eq.x[d]});
    double cell = 0.0;
    for (std::size_t d = 0; d < xs.dim(); ++d) cell = std::max(cell, xs.max_spacing(d));
    const auto cb = estimate_C(V, problem, eq, a.storage, 2.0 * cell, outer, us);

    json runs = json::array();
    SvgPlot plot = trajectory_plot("Rotated-optimal trajectories, beta = " + fixed(a.beta, 3));
    RolloutOptions ro;
    ro.refine = true;
    for (const auto& x0 : c.x0) {
        const auto t = rollout(policy, problem, x0, c.horizon, ro);
        json run{{"x0", vec_to_json(x0)}, {"terminal", vec_to_json(t.states.back())}, {"exited", t.exited}};
        if (t.states.size() == c.horizon + 1) run["q_set"] = to_json(q_set(t, eq.x, c.epsilon, c.horizon));
        if (!t.exited) {
            const auto ly = lyapunov_decrease_check(V, problem, eq, a.storage, t, cb.C, us);
            run["lyapunov"] = {{"kappa", ly.kappa},
                               {"max_residual", ly.max_residual},
                               {"max_excess", ly.max_excess},
                               {"passed", ly.passed()},
                               {"residuals", ly.residuals},
                               {"slack", ly.slack}};
        }
        runs.push_back(run);
        add_trajectory(plot, "x0 = " + fixed(x0[0], 3), t);
    }
    const double cap = largest_contained_level(V, a.region);
    const double level = largest_invariant_level(V, problem, policy, a.region);
    const auto sub = sublevel_invariance_check(V, problem, policy, a.region, level);
    const auto sub_cap = sublevel_invariance_check(V, problem, policy, a.region, cap);
    auto sub_json = [](const SublevelResult& r, double lvl) {
        json j{{"level", lvl}, {"holds", r.holds}, {"nodes_checked", r.nodes_checked}};
        if (r.witness) j["witness"] = {{"x", vec_to_json(r.witness_x)}, {"successor", vec_to_json(r.witness_successor)}};
        return j;
    };
    const Output out(c.out, "turnpike", c);
    out.write_json("turnpike.json", {{"beta", a.beta},
                                     {"equilibrium", to_json(eq)},
                                     {"storage", a.storage.describe()},
                                     {"region", box_to_json(a.region)},
                                     {"value_iterations", V.iterations},
                                     {"C_bound", to_json(cb)},
                                     {"runs", runs},
                                     {"sublevel", {{"contained", sub_json(sub_cap, cap)}, {"invariant", sub_json(sub, level)}}}});
    out.write_svg("trajectories.svg", plot);
    std::cout << "C " << cb.C << " (bound " << cb.bound << ", kappa " << cb.kappa << "), invariant level " << level
              << '\n';
}

void cmd_thresholds(const RunConfig& c) {
    const ControlSystem sys = expand_model_spec(c.model);
    ThresholdOptions o;
    o.rho = c.rho;
    o.k_fraction = c.k;
    o.K = c.stay_steps;
    o.storage = parse_storage_choice(c.storage);
    o.equilibrium_index = c.equilibrium;
    o.region = c.region;
    o.grid = state_nodes(c, c.example);
    o.ugrid = control_nodes(c, c.example);
    o.tol = c.tol;
    const auto r = compute_thresholds(sys, beta_list(c).front(), o);
    const Output out(c.out, "thresholds", c);
    out.write_json("thresholds.json", to_json(r));
    std::cout << "x_l " << r.equilibrium.x << ", ell_tilde_min " << r.ell_tilde_min << ", eta " << r.eta << ", delta "
              << r.delta << ", beta* " << r.beta_star << " (limit " << r.beta_star_limit << ")\n";
}

ScanOptions scan_options(const RunConfig& c, std::optional<int> example) {
    ScanOptions o;
    o.grid = state_nodes(c, example);
    o.ugrid = control_nodes(c, example);
    o.tol = c.tol;
    o.max_iter = c.max_iter;
    return o;
}

json scan_to_json(const ScanResult& res, const std::vector<Vec>& x0) {
    json cells = json::array();
    for (const auto& cell : res.cells) {
        double dev = 0.0;
        for (const auto& x : cell.trajectory.states) dev = std::max(dev, distance(x, cell.x0));
        cells.push_back({{"beta", cell.beta},
                         {"x0", vec_to_json(cell.x0)},
                         {"class", to_string(cell.behavior)},
                         {"terminal", vec_to_json(cell.terminal)},
                         {"max_deviation_from_x0", dev},
                         {"value_iterations", cell.iterations}});
    }
    json hat = json::array();
    for (std::size_t i = 0; i < x0.size(); ++i) {
        auto it = res.beta_hat2.find(i);
        hat.push_back({{"x0", vec_to_json(x0[i])}, {"beta_hat2", it == res.beta_hat2.end() ? json(nullptr) : json(it->second)}});
    }
    return {{"cells", cells}, {"beta_hat2", hat}};
}

void write_scan_csv(std::ostream& os, const ScanResult& res) {
    os << std::setprecision(17) << "beta,x0,class,terminal_x\n";
    for (const auto& cell : res.cells)
        os << cell.beta << ',' << cell.x0[0] << ',' << to_string(cell.behavior) << ',' << cell.terminal[0] << '\n';
}

void cmd_scan(const RunConfig& c) {
    const auto betas = beta_list(c);
    const auto res = beta_scan(c.model, c.x0, betas, c.horizon, scan_options(c, c.example));
    const Output out(c.out, "scan", c);
    {
        auto os = out.open("scan.csv");
        write_scan_csv(os, res);
    }
    out.write_json("scan.json", scan_to_json(res, c.x0));
    SvgPlot plot = trajectory_plot("Trajectories from x0 = " + fixed(c.x0.front()[0], 3));
    for (const auto& cell : res.cells) {
        if (cell.x0 == c.x0.front()) add_trajectory(plot, "beta = " + fixed(cell.beta, 3), cell.trajectory);
    }
    out.write_svg("scan.svg", plot);
    for (std::size_t i = 0; i < c.x0.size(); ++i) {
        auto it = res.beta_hat2.find(i);
        std::cout << "x0 " << c.x0[i] << ": largest local beta "
                  << (it == res.beta_hat2.end() ? std::string("none") : fixed(it->second, 4)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

struct Preset {
    std::string name;
    ModelSpec model;
    std::vector<double> betas;
    std::vector<Vec> x0;
};

std::vector<Preset> presets(int id, const RunConfig& c, const std::optional<double>& gamma) {
    std::vector<Vec> sweep;
    for (double x : {-1.5, -1.2, -0.8, -0.5, -0.2, 0.2, 0.5, 1.2}) sweep.push_back(Vec{x});
    switch (id) {
        case 1:
            return {{"beta_sweep", ModelSpec::builtin(1), {0.5, 0.6, 0.7, 0.8}, {Vec{-0.8}}},
                    {"x0_sweep", ModelSpec::builtin(1), {0.6, 0.7}, sweep}};
        case 2: {
            std::vector<Preset> out;
            std::vector<double> gammas = gamma ? std::vector<double>{*gamma} : std::vector<double>{0.0, 1.0, 10.0};
            for (double g : gammas)
                out.push_back({"gamma_" + fixed(g, 1), ModelSpec::builtin(2, g), {0.7, 0.95}, {Vec{-0.8}}});
            const double g = gamma.value_or(10.0);
            std::vector<double> betas = parse_range("0.5:0.95:0.05");
            betas.push_back(0.99);
            out.push_back({"beta_sweep_gamma_" + fixed(g, 1), ModelSpec::builtin(2, g), betas, {Vec{-0.8}}});
            return out;
        }
        case 3:
            return {{"beta_0.70", ModelSpec::builtin(3), {0.7}, {Vec{1.0}}},
                    {"beta_0.59", ModelSpec::builtin(3), {0.59}, {Vec{0.004}}}};
        default: break;
    }
    (void)c;
    throw SpecError("reproduce: example id must be 1, 2 or 3");
}

void cmd_reproduce(int id, const RunConfig& c, const std::optional<double>& gamma) {
    const auto list = presets(id, c, gamma);
    const Output out(c.out, "reproduce " + std::to_string(id), c);
    json runs = json::array();
    for (const auto& p : list) {
        const auto res = beta_scan(p.model, p.x0, p.betas, c.horizon, scan_options(c, id));
        SvgPlot plot = trajectory_plot("Example " + std::to_string(id) + ": " + p.name);
        for (const auto& cell : res.cells) {
            const std::string tag = p.name + "_beta" + fixed(cell.beta, 2) + "_x0" + fixed(cell.x0[0], 3);
            {
                auto os = out.open(tag + ".csv");
                write_trajectory_csv(os, cell.trajectory);
            }
            double dev = 0.0;
            for (const auto& x : cell.trajectory.states) dev = std::max(dev, distance(x, cell.x0));
            runs.push_back({{"preset", p.name},
                            {"gamma", p.model.gamma},
                            {"beta", cell.beta},
                            {"x0", vec_to_json(cell.x0)},
                            {"class", to_string(cell.behavior)},
                            {"terminal", vec_to_json(cell.terminal)},
                            {"max_deviation_from_x0", dev},
                            {"trajectory_csv", tag + ".csv"}});
            const std::string label = p.x0.size() > 1 ? "x0 = " + fixed(cell.x0[0], 2) + ", b = " + fixed(cell.beta, 2)
                                                       : "beta = " + fixed(cell.beta, 2);
            add_trajectory(plot, label, cell.trajectory);
            std::cout << p.name << "  beta " << fixed(cell.beta, 2) << "  x0 " << cell.x0 << "  -> "
                      << cell.terminal << "  " << to_string(cell.behavior) << '\n';
        }
        out.write_svg(p.name + ".svg", plot);
    }
    out.write_json("classification.json", {{"example", id}, {"horizon", c.horizon}, {"runs", runs}});
}

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--example", f.example, "builtin example 1, 2 or 3");
    sub->add_option("--beta", f.beta, "discount factor in (0,1)");
    sub->add_option("--beta-grid", f.beta_grid, "discount factors A:B:STEP");
    sub->add_option("--gamma", f.gamma, "|u| weight of example 2");
    sub->add_option("--x0", f.x0, "initial states")->delimiter(',');
    sub->add_option("--grid", f.grid, "state grid nodes per axis");
    sub->add_option("--ugrid", f.ugrid, "control grid nodes per axis");
    sub->add_option("--tol", f.tol, "value iteration tolerance");
    sub->add_option("--horizon", f.horizon, "closed-loop steps");
    sub->add_option("--rho", f.rho, "neighbourhood radius");
    sub->add_option("--k", f.k, "fraction parameter k of beta*");
    sub->add_option("--stay-steps", f.stay_steps, "K in sigma(beta,K)");
    sub->add_option("--storage", f.storage, "auto, zero, linear:C[,..] or quadratic:C[,..]");
    sub->add_option("--region", f.region, "dissipativity region LO:HI[,LO:HI]");
    sub->add_option("--equilibrium", f.equilibrium, "index into the cost-sorted equilibrium list");
    sub->add_option("--epsilon", f.epsilon, "Q-set radius");
    sub->add_option("--out", f.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discounted optimal control: value iteration, dissipativity and turnpike diagnostics"};
    app.require_subcommand(1);
    Flags flags;
    int example_id = 0;
    struct Sub {
        const char* name;
        const char* help;
        void (*run)(const RunConfig&);
    };
    const Sub subs[] = {
        {"solve", "value iteration; writes V.csv, policy.csv and solve.log", cmd_solve},
        {"rollout", "closed-loop trajectories from --x0", cmd_rollout},
        {"equilibria", "optimal equilibrium candidates and linear storage", cmd_equilibria},
        {"dissipativity", "verify the storage certificate on a region", cmd_dissipativity},
        {"turnpike", "Q-sets, C-bound, Lyapunov decrease and sublevel invariance", cmd_turnpike},
        {"thresholds", "eta, delta, beta*, sigma, eps and theta", cmd_thresholds},
        {"scan", "classify long-run behaviour over --beta-grid and --x0", cmd_scan},
    };
    std::vector<std::pair<CLI::App*, const Sub*>> handlers;
    for (const auto& s : subs) {
        auto* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, flags);
        handlers.emplace_back(sub, &s);
    }
    auto* reproduce = app.add_subcommand("reproduce", "preset runs for example 1, 2 or 3");
    reproduce->add_option("id", example_id, "example id")->required();
    add_common(reproduce, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (reproduce->parsed()) {
            Flags f = flags;
            if (!f.out) f.out = "reproduce_" + std::to_string(example_id);
            if (!f.example && example_id >= 1 && example_id <= 3) f.example = example_id;
            const RunConfig c = resolve(f);
            cmd_reproduce(example_id, c, flags.gamma);
            return 0;
        }
        for (const auto& [sub, s] : handlers) {
            if (sub->parsed()) {
                s->run(resolve(flags));
                return 0;
            }
        }
    } catch (const SpecError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
