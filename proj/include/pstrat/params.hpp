/*
   Copyright 2026 The pstrat Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pstrat {

/// Raised for any invalid scenario or parameter document. `key()` names the
/// offending field.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, std::string const& message)
        : std::invalid_argument(message), key_(std::move(key))
    {
    }
    std::string const& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Parameters of the two-arm generative model.
///
///   X          ~ N(mu_x, sigma_x^2)
///   Z_k(t)     = alpha0[k] + alpha1[k] X + alpha2[k] t + eta_k(t)
///   Y(t)       = beta0 + beta1 X + beta2 t + sum_k beta3[k] Z_k(t) + eps(t)
///   logit P(A_k(t) = 1 | A_{k-1}(t) = 1, X, Z_k(t))
///              = gamma0 + gamma2 t + gamma1 X + gamma3[k] Z_k(t)
///
/// with eta ~ N(0, sigma_eta^2) and eps ~ N(0, sigma_eps^2), independent
/// across subjects, visits and arms. gamma2 is an extension that lets the
/// treatment move adherence without touching Y.
struct ModelParams {
    int K = 3;
    double mu_x = 0.0;
    double sigma_x = 1.0;
    std::vector<double> alpha0;
    std::vector<double> alpha1;
    std::vector<double> alpha2;
    double beta0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    std::vector<double> beta3;
    double sigma_eta = 1.0;
    double sigma_eps = 1.0;
    double gamma0 = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    std::vector<double> gamma3;
    double p_treat = 0.5;

    friend bool operator==(ModelParams const&, ModelParams const&) = default;
};

struct ScenarioConfig {
    ModelParams params;
    std::int64_t n = 2;
    std::uint64_t seed = 0;
    int replicate_count = 1;
    std::string label;

    friend bool operator==(ScenarioConfig const&, ScenarioConfig const&) = default;
};

namespace detail {

inline bool all_zero(std::vector<double> const& v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace detail

/// True when the treatment has no effect on any generated variable.
inline bool is_full_null(ModelParams const& p)
{
    return detail::all_zero(p.alpha2) && p.beta2 == 0.0 && p.gamma2 == 0.0;
}

/// True when the treatment has no effect on Y or Z; adherence may still
/// differ between arms through gamma2.
inline bool is_y_null(ModelParams const& p)
{
    return detail::all_zero(p.alpha2) && p.beta2 == 0.0;
}

/// Structural conditions under which Y(1) - Y(0) is independent of A(1)
/// given X in this model family.
inline bool sufficient_condition_holds(ModelParams const& p)
{
    return detail::all_zero(p.beta3) || detail::all_zero(p.gamma3)
           || p.sigma_eta == 0.0;
}

/// Checks every invariant of `p`; throws ConfigError naming the field.
inline void check_invariants(ModelParams const& p)
{
    if (p.K < 1) throw ConfigError("K", "K must be >= 1");
    auto finite = [](std::string const& key, double v) {
        if (!std::isfinite(v)) throw ConfigError(key, key + " must be finite");
    };
    finite("mu_x", p.mu_x);
    finite("sigma_x", p.sigma_x);
    finite("beta0", p.beta0);
    finite("beta1", p.beta1);
    finite("beta2", p.beta2);
    finite("sigma_eta", p.sigma_eta);
    finite("sigma_eps", p.sigma_eps);
    finite("gamma0", p.gamma0);
    finite("gamma1", p.gamma1);
    finite("gamma2", p.gamma2);
    finite("p_treat", p.p_treat);
    if (!(p.sigma_x > 0.0)) throw ConfigError("sigma_x", "sigma_x must be > 0");
    if (p.sigma_eta < 0.0)
        throw ConfigError("sigma_eta", "sigma_eta must be >= 0");
    if (p.sigma_eps < 0.0)
        throw ConfigError("sigma_eps", "sigma_eps must be >= 0");
    if (!(p.p_treat > 0.0 && p.p_treat < 1.0))
        throw ConfigError("p_treat", "p_treat must be in (0, 1)");
    auto vec = [&](std::string const& key, std::vector<double> const& v) {
        if (v.size() != static_cast<std::size_t>(p.K))
            throw ConfigError(key, key + " length " + std::to_string(v.size())
                                       + " ≠ K=" + std::to_string(p.K));
        for (double x : v) finite(key, x);
    };
    vec("alpha0", p.alpha0);
    vec("alpha1", p.alpha1);
    vec("alpha2", p.alpha2);
    vec("beta3", p.beta3);
    vec("gamma3", p.gamma3);
}

namespace detail {

inline nlohmann::json const& require(nlohmann::json const& doc, std::string const& key)
{
    auto it = doc.find(key);
    if (it == doc.end()) throw ConfigError(key, "missing required key " + key);
    return *it;
}

inline double as_real(nlohmann::json const& v, std::string const& key)
{
    if (!v.is_number()) throw ConfigError(key, key + " must be a number");
    return v.get<double>();
}

inline std::vector<double> as_vector(nlohmann::json const& v, std::string const& key)
{
    if (!v.is_array()) throw ConfigError(key, key + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (auto const& e : v) out.push_back(as_real(e, key));
    return out;
}

inline std::int64_t as_integer(nlohmann::json const& v, std::string const& key)
{
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
        double const d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15)
            return static_cast<std::int64_t>(d);
    }
    throw ConfigError(key, key + " must be an integer");
}

inline constexpr std::string_view kParamKeys[] = {
    "mu_x",  "sigma_x",   "alpha0",    "alpha1", "alpha2", "beta0",
    "beta1", "beta2",     "beta3",     "sigma_eta", "sigma_eps", "gamma0",
    "gamma1", "gamma2",   "gamma3",    "K",      "p_treat"};

inline constexpr std::string_view kScenarioKeys[] = {"n", "seed", "replicate_count",
                                                     "label"};

inline bool is_param_key(std::string_view k)
{
    return std::find(std::begin(kParamKeys), std::end(kParamKeys), k)
           != std::end(kParamKeys);
}

inline bool is_scenario_key(std::string_view k)
{
    return std::find(std::begin(kScenarioKeys), std::end(kScenarioKeys), k)
           != std::end(kScenarioKeys);
}

inline ModelParams parse_params(nlohmann::json const& doc)
{
    ModelParams p;
    if (auto it = doc.find("K"); it != doc.end()) {
        auto const k = as_integer(*it, "K");
        if (k < 1 || k > 1000) throw ConfigError("K", "K must be >= 1");
        p.K = static_cast<int>(k);
    }
    p.mu_x = as_real(require(doc, "mu_x"), "mu_x");
    p.sigma_x = as_real(require(doc, "sigma_x"), "sigma_x");
    p.alpha0 = as_vector(require(doc, "alpha0"), "alpha0");
    p.alpha1 = as_vector(require(doc, "alpha1"), "alpha1");
    p.alpha2 = as_vector(require(doc, "alpha2"), "alpha2");
    p.beta0 = as_real(require(doc, "beta0"), "beta0");
    p.beta1 = as_real(require(doc, "beta1"), "beta1");
    p.beta2 = as_real(require(doc, "beta2"), "beta2");
    p.beta3 = as_vector(require(doc, "beta3"), "beta3");
    p.sigma_eta = as_real(require(doc, "sigma_eta"), "sigma_eta");
    p.sigma_eps = as_real(require(doc, "sigma_eps"), "sigma_eps");
    p.gamma0 = as_real(require(doc, "gamma0"), "gamma0");
    p.gamma1 = as_real(require(doc, "gamma1"), "gamma1");
    p.gamma3 = as_vector(require(doc, "gamma3"), "gamma3");
    if (auto it = doc.find("gamma2"); it != doc.end()) p.gamma2 = as_real(*it, "gamma2");
    if (auto it = doc.find("p_treat"); it != doc.end())
        p.p_treat = as_real(*it, "p_treat");
    check_invariants(p);
    return p;
}

}  // namespace detail

/// Builds validated ModelParams from a parameter document. Optional keys:
/// gamma2 (default 0), K (default 3), p_treat (default 0.5). Unknown keys
/// are rejected.
inline ModelParams validate(nlohmann::json const& doc)
{
    if (!doc.is_object()) throw ConfigError("", "parameter document must be an object");
    for (auto const& [key, value] : doc.items()) {
        if (!detail::is_param_key(key)) throw ConfigError(key, "unknown key " + key);
    }
    return detail::parse_params(doc);
}

inline void check_invariants(ScenarioConfig const& c)
{
    check_invariants(c.params);
    if (c.n < 2) throw ConfigError("n", "n must be >= 2");
    if (c.replicate_count < 1)
        throw ConfigError("replicate_count", "replicate_count must be >= 1");
}

/// Builds a validated ScenarioConfig from a scenario document: all
/// parameter keys plus n, seed (required) and replicate_count (default 1),
/// label (default empty).
inline ScenarioConfig validate_scenario(nlohmann::json const& doc)
{
    if (!doc.is_object()) throw ConfigError("", "scenario document must be an object");
    nlohmann::json params = nlohmann::json::object();
    for (auto const& [key, value] : doc.items()) {
        if (detail::is_param_key(key)) {
            params[key] = value;
        } else if (!detail::is_scenario_key(key)) {
            throw ConfigError(key, "unknown key " + key);
        }
    }
    ScenarioConfig c;
    c.params = detail::parse_params(params);
    c.n = detail::as_integer(detail::require(doc, "n"), "n");
    auto const& seed = detail::require(doc, "seed");
    if (seed.is_number_unsigned()) {
        c.seed = seed.get<std::uint64_t>();
    } else {
        auto const s = detail::as_integer(seed, "seed");
        if (s < 0) throw ConfigError("seed", "seed must be a non-negative integer");
        c.seed = static_cast<std::uint64_t>(s);
    }
    if (auto it = doc.find("replicate_count"); it != doc.end()) {
        auto const r = detail::as_integer(*it, "replicate_count");
        if (r < 1 || r > 1'000'000'000)
            throw ConfigError("replicate_count", "replicate_count must be >= 1");
        c.replicate_count = static_cast<int>(r);
    }
    if (auto it = doc.find("label"); it != doc.end()) {
        if (!it->is_string()) throw ConfigError("label", "label must be a string");
        c.label = it->get<std::string>();
    }
    check_invariants(c);
    return c;
}

inline nlohmann::json to_json(ModelParams const& p)
{
    return nlohmann::json{{"mu_x", p.mu_x},       {"sigma_x", p.sigma_x},
                          {"alpha0", p.alpha0},   {"alpha1", p.alpha1},
                          {"alpha2", p.alpha2},   {"beta0", p.beta0},
                          {"beta1", p.beta1},     {"beta2", p.beta2},
                          {"beta3", p.beta3},     {"sigma_eta", p.sigma_eta},
                          {"sigma_eps", p.sigma_eps}, {"gamma0", p.gamma0},
                          {"gamma1", p.gamma1},   {"gamma2", p.gamma2},
                          {"gamma3", p.gamma3},   {"K", p.K},
                          {"p_treat", p.p_treat}};
}

inline nlohmann::json to_json(ScenarioConfig const& c)
{
    auto doc = to_json(c.params);
    doc["n"] = c.n;
    doc["seed"] = c.seed;
    doc["replicate_count"] = c.replicate_count;
    doc["label"] = c.label;
    return doc;
}

/// Reads and validates a scenario file. I/O failures surface as
/// std::runtime_error; content problems as ConfigError.
inline ScenarioConfig load_scenario(std::string const& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (nlohmann::json::parse_error const& e) {
        throw ConfigError("", std::string("malformed scenario file: ") + e.what());
    }
    return validate_scenario(doc);
}

/// The demonstration scenario: full null, selection on the intermediate
/// outcomes with positive beta3 * gamma3, so the one-arm stratum effect is
/// strictly positive.
inline ModelParams demo_params()
{
    ModelParams p;
    p.K = 3;
    p.mu_x = 0.0;
    p.sigma_x = 1.0;
    p.alpha0 = {0.0, 0.0, 0.0};
    p.alpha1 = {0.5, 0.5, 0.5};
    p.alpha2 = {0.0, 0.0, 0.0};
    p.beta0 = 0.0;
    p.beta1 = 1.0;
    p.beta2 = 0.0;
    p.beta3 = {0.4, 0.4, 0.4};
    p.sigma_eta = 1.0;
    p.sigma_eps = 1.0;
    p.gamma0 = 1.0;
    p.gamma1 = 0.3;
    p.gamma2 = 0.0;
    p.gamma3 = {0.5, 0.5, 0.5};
    p.p_treat = 0.5;
    return p;
}

}  // namespace pstrat
