#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dtp/errors.hpp"
#include "dtp/model.hpp"

namespace dtp {

/// c * prod_i x_i^x_pow[i] * prod_j u_j^u_pow[j]
struct Monomial {
    double coeff = 0.0;
    std::vector<int> x_pow;
    std::vector<int> u_pow;
};

/// Serializable description of a control system.
///
/// The builtin kinds are the one-dimensional benchmark problems:
///  - example-1: f = x + u, l = x^4 - x^3/4 - 7x^2/4, X = [-2,2], U = [-0.75,0.75]
///  - example-2: example-1 plus gamma*|u| in the stage cost
///  - example-3: f = 2x + u, l = -x^2/2 + u^2, X = [-1,1], U = [-3,3]
/// `polynomial` takes per-component monomial tables for f and l plus an
/// optional gamma*sum_j|u_j| term.
struct ModelSpec {
    enum class Kind { example1, example2, example3, polynomial };

    Kind kind = Kind::example1;
    double gamma = 0.0;
    std::vector<std::vector<Monomial>> f_coeffs;
    std::vector<Monomial> l_coeffs;
    std::optional<Box> state_box;
    std::optional<Box> control_box;

    static ModelSpec builtin(int example_id, double gamma = 0.0) {
        ModelSpec s;
        switch (example_id) {
            case 1: s.kind = Kind::example1; break;
            case 2: s.kind = Kind::example2; s.gamma = gamma; break;
            case 3: s.kind = Kind::example3; break;
            default: throw SpecError("unknown builtin example " + std::to_string(example_id));
        }
        return s;
    }
};

inline const char* to_string(ModelSpec::Kind k) {
    switch (k) {
        case ModelSpec::Kind::example1: return "builtin-example-1";
        case ModelSpec::Kind::example2: return "builtin-example-2";
        case ModelSpec::Kind::example3: return "builtin-example-3";
        case ModelSpec::Kind::polynomial: return "polynomial";
    }
    return "?";
}

namespace detail {

inline double ipow(double v, int p) {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= v;
    return r;
}

inline double eval_monomials(const std::vector<Monomial>& terms, const Vec& x, const Vec& u) {
    double s = 0.0;
    for (const auto& m : terms) {
        double t = m.coeff;
        for (std::size_t i = 0; i < m.x_pow.size(); ++i) t *= ipow(x[i], m.x_pow[i]);
        for (std::size_t j = 0; j < m.u_pow.size(); ++j) t *= ipow(u[j], m.u_pow[j]);
        s += t;
    }
    return s;
}

inline void validate_monomials(const std::vector<Monomial>& terms, std::size_t n, std::size_t m,
                               const std::string& where) {
    for (const auto& t : terms) {
        if (!std::isfinite(t.coeff)) throw SpecError(where + ": non-finite coefficient");
        if (t.x_pow.size() != n) throw SpecError(where + ": x exponent list must have one entry per state");
        if (t.u_pow.size() != m) throw SpecError(where + ": u exponent list must have one entry per control");
        for (int p : t.x_pow)
            if (p < 0) throw SpecError(where + ": negative exponent");
        for (int p : t.u_pow)
            if (p < 0) throw SpecError(where + ": negative exponent");
    }
}

}  // namespace detail

inline ControlSystem expand_model_spec(const ModelSpec& spec) {
    ControlSystem sys;
    switch (spec.kind) {
        case ModelSpec::Kind::example1:
        case ModelSpec::Kind::example2: {
            const double gamma = spec.kind == ModelSpec::Kind::example2 ? spec.gamma : 0.0;
            if (!std::isfinite(gamma)) throw SpecError("gamma must be finite");
            sys.dynamics = [](const Vec& x, const Vec& u) { return Vec{x[0] + u[0]}; };
            if (gamma == 0.0) {
                sys.stage_cost = [](const Vec& x, const Vec&) {
                    const double v = x[0];
                    return v * v * v * v - 0.25 * v * v * v - 1.75 * v * v;
                };
            } else {
                sys.stage_cost = [gamma](const Vec& x, const Vec& u) {
                    const double v = x[0];
                    return v * v * v * v - 0.25 * v * v * v - 1.75 * v * v + gamma * std::abs(u[0]);
                };
            }
            sys.abs_control_weight = gamma;
            sys.state_box = spec.state_box.value_or(Box{{-2.0, 2.0}});
            sys.control_box = spec.control_box.value_or(Box{{-0.75, 0.75}});
            break;
        }
        case ModelSpec::Kind::example3:
            sys.dynamics = [](const Vec& x, const Vec& u) { return Vec{2.0 * x[0] + u[0]}; };
            sys.stage_cost = [](const Vec& x, const Vec& u) { return -0.5 * x[0] * x[0] + u[0] * u[0]; };
            sys.state_box = spec.state_box.value_or(Box{{-1.0, 1.0}});
            sys.control_box = spec.control_box.value_or(Box{{-3.0, 3.0}});
            break;
        case ModelSpec::Kind::polynomial: {
            if (!spec.state_box || !spec.control_box) throw SpecError("polynomial model needs state_box and control_box");
            const std::size_t n = spec.state_box->dim();
            const std::size_t m = spec.control_box->dim();
            if (n == 0 || m == 0) throw SpecError("polynomial model needs non-empty boxes");
            if (spec.f_coeffs.size() != n) throw SpecError("f_coeffs must have one monomial list per state component");
            for (std::size_t i = 0; i < n; ++i) detail::validate_monomials(spec.f_coeffs[i], n, m, "f_coeffs");
            detail::validate_monomials(spec.l_coeffs, n, m, "l_coeffs");
            if (!std::isfinite(spec.gamma)) throw SpecError("gamma must be finite");
            auto f_terms = spec.f_coeffs;
            auto l_terms = spec.l_coeffs;
            const double gamma = spec.gamma;
            sys.dynamics = [f_terms, n](const Vec& x, const Vec& u) {
                Vec next(n);
                for (std::size_t i = 0; i < n; ++i) next[i] = detail::eval_monomials(f_terms[i], x, u);
                return next;
            };
            sys.stage_cost = [l_terms, gamma](const Vec& x, const Vec& u) {
                double c = detail::eval_monomials(l_terms, x, u);
                if (gamma != 0.0) {
                    for (double uj : u) c += gamma * std::abs(uj);
                }
                return c;
            };
            sys.abs_control_weight = gamma;
            sys.state_box = *spec.state_box;
            sys.control_box = *spec.control_box;
            break;
        }
    }
    return sys;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json box_to_json(const Box& b) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < b.dim(); ++i) j.push_back({b[i].lo, b[i].hi});
    return j;
}

inline Box box_from_json(const nlohmann::json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) throw SpecError(field + ": expected a non-empty array of [lo, hi] pairs");
    Box b;
    for (const auto& axis : j) {
        if (!axis.is_array() || axis.size() != 2 || !axis[0].is_number() || !axis[1].is_number())
            throw SpecError(field + ": each axis must be [lo, hi]");
        const double lo = axis[0].get<double>();
        const double hi = axis[1].get<double>();
        if (!(lo < hi)) throw SpecError(field + ": lo must be < hi");
        try {
            b.push({lo, hi});
        } catch (const std::invalid_argument& e) {
            throw SpecError(field + ": " + e.what());
        }
    }
    return b;
}

inline nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json j;
    j["kind"] = to_string(spec.kind);
    if (spec.kind == ModelSpec::Kind::example2 || spec.kind == ModelSpec::Kind::polynomial) j["gamma"] = spec.gamma;
    auto mono = [](const Monomial& m) { return nlohmann::json{{"c", m.coeff}, {"x", m.x_pow}, {"u", m.u_pow}}; };
    if (spec.kind == ModelSpec::Kind::polynomial) {
        nlohmann::json f = nlohmann::json::array();
        for (const auto& comp : spec.f_coeffs) {
            nlohmann::json terms = nlohmann::json::array();
            for (const auto& m : comp) terms.push_back(mono(m));
            f.push_back(terms);
        }
        j["f_coeffs"] = f;
        nlohmann::json l = nlohmann::json::array();
        for (const auto& m : spec.l_coeffs) l.push_back(mono(m));
        j["l_coeffs"] = l;
    }
    if (spec.state_box) j["state_box"] = box_to_json(*spec.state_box);
    if (spec.control_box) j["control_box"] = box_to_json(*spec.control_box);
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SpecError("model: expected an object");
    if (!j.contains("kind") || !j["kind"].is_string()) throw SpecError("model: missing string field 'kind'");
    static const std::vector<std::string> known = {"kind", "gamma", "f_coeffs", "l_coeffs", "state_box", "control_box"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw SpecError("model: unknown field '" + key + "'");
    }
    ModelSpec s;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "builtin-example-1") s.kind = ModelSpec::Kind::example1;
    else if (kind == "builtin-example-2") s.kind = ModelSpec::Kind::example2;
    else if (kind == "builtin-example-3") s.kind = ModelSpec::Kind::example3;
    else if (kind == "polynomial") s.kind = ModelSpec::Kind::polynomial;
    else throw SpecError("model: unknown kind '" + kind + "'");

    if (j.contains("gamma")) {
        if (!j["gamma"].is_number()) throw SpecError("model: gamma must be a number");
        s.gamma = j["gamma"].get<double>();
    }
    auto parse_mono = [](const nlohmann::json& m, const std::string& where) {
        if (!m.is_object() || !m.contains("c") || !m["c"].is_number())
            throw SpecError(where + ": monomial needs numeric 'c'");
        Monomial out;
        out.coeff = m["c"].get<double>();
        auto exps = [&](const char* key) {
            std::vector<int> v;
            if (!m.contains(key)) return v;
            if (!m[key].is_array()) throw SpecError(where + ": exponents must be arrays");
            for (const auto& e : m[key]) {
                if (!e.is_number_integer()) throw SpecError(where + ": exponents must be integers");
                v.push_back(e.get<int>());
            }
            return v;
        };
        out.x_pow = exps("x");
        out.u_pow = exps("u");
        return out;
    };
    if (j.contains("f_coeffs")) {
        if (!j["f_coeffs"].is_array()) throw SpecError("f_coeffs: expected array of monomial lists");
        for (const auto& comp : j["f_coeffs"]) {
            if (!comp.is_array()) throw SpecError("f_coeffs: expected array of monomial lists");
            std::vector<Monomial> terms;
            for (const auto& m : comp) terms.push_back(parse_mono(m, "f_coeffs"));
            s.f_coeffs.push_back(std::move(terms));
        }
    }
    if (j.contains("l_coeffs")) {
        if (!j["l_coeffs"].is_array()) throw SpecError("l_coeffs: expected array of monomials");
        for (const auto& m : j["l_coeffs"]) s.l_coeffs.push_back(parse_mono(m, "l_coeffs"));
    }
    if (j.contains("state_box")) s.state_box = box_from_json(j["state_box"], "state_box");
    if (j.contains("control_box")) s.control_box = box_from_json(j["control_box"], "control_box");
    if (s.kind == ModelSpec::Kind::polynomial) (void)expand_model_spec(s);  // validates tables
    return s;
}

}  // namespace dtp
