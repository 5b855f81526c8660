#pragma once

#include "dac/controller.hpp"
#include "dac/error.hpp"
#include "dac/sim_engine.hpp"
#include "dac/spatial_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace dac {

enum class CertificateMode { automatic, kyp };

/// Everything an experiment needs, validated and with defaults filled in.
struct ExperimentConfig {
    PlantSpec plant = [] {
        PlantSpec p;
        p.diffusivity = 0.2;
        return p;
    }();
    int n = 40;
    std::vector<int> n_list{25, 50, 100, 200};

    GainStrategy strategy = GainStrategy::zero;
    std::vector<double> filter_poles{-20.0};
    double filter_input_gain = 0.0;  // <= 0: auto

    CertificateMode certificate = CertificateMode::automatic;
    double normality_threshold = 0.1;

    double gamma = 100.0;
    std::vector<double> gamma_list{10.0, 100.0, 1000.0, 10000.0};
    double epsilon = 0.1;
    std::vector<double> alpha_hat0{0.0};

    double dt = 1e-3;
    double horizon = 16.0;
    int record_every = 1;
    double rho_w = 10.0;
    double blowup_factor = 10.0;
    ReferenceSignal reference{ReferenceKind::step, 0.2, 6.0, 1.0, 0.0};

    double eps_s = 1e-3;
    double transient_window = -1.0;  // < 0: 10 / beta
    int x_probes = 200;
    int n_max = 100;
    int lipschitz_samples = 20000;
    double envelope_rel_tol = 1e-6;

    std::string output_directory = "out";
    bool plots = true;
    std::uint64_t seed = 1;
};

/// Schema violations, all of them.
class ConfigViolations : public ConfigError {
public:
    explicit ConfigViolations(std::vector<std::string> v) : ConfigError("cli", join(v)), violations_(std::move(v)) {}
    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "invalid configuration:";
        for (const auto& m : v) s += "\n  " + m;
        return s;
    }
    std::vector<std::string> violations_;
};

namespace detail {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

/// Walks one JSON object, remembering which keys were consumed so the rest
/// can be reported as unknown.
class Section {
public:
    Section(const json* obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (obj_ && !obj_->is_object()) {
            errors_.push_back(path_ + " must be an object");
            obj_ = nullptr;
        }
    }

    ~Section() = default;
    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;

    std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    const json* find(const std::string& k) {
        seen_.insert(k);
        if (!obj_) return nullptr;
        auto it = obj_->find(k);
        return it == obj_->end() ? nullptr : &*it;
    }

    void number(const std::string& k, double& out) {
        if (const json* v = find(k)) {
            if (v->is_number()) out = v->get<double>();
            else errors_.push_back(key(k) + " must be a number");
        }
    }

    void integer(const std::string& k, int& out) {
        if (const json* v = find(k)) {
            if (v->is_number_integer()) out = v->get<int>();
            else errors_.push_back(key(k) + " must be an integer");
        }
    }

    void unsigned_integer(const std::string& k, std::uint64_t& out) {
        if (const json* v = find(k)) {
            if (v->is_number_unsigned()) out = v->get<std::uint64_t>();
            else errors_.push_back(key(k) + " must be a non-negative integer");
        }
    }

    void boolean(const std::string& k, bool& out) {
        if (const json* v = find(k)) {
            if (v->is_boolean()) out = v->get<bool>();
            else errors_.push_back(key(k) + " must be true or false");
        }
    }

    void string(const std::string& k, std::string& out) {
        if (const json* v = find(k)) {
            if (v->is_string()) out = v->get<std::string>();
            else errors_.push_back(key(k) + " must be a string");
        }
    }

    template <typename T>
    void list(const std::string& k, std::vector<T>& out) {
        const json* v = find(k);
        if (!v) return;
        if (!v->is_array()) {
            errors_.push_back(key(k) + " must be an array");
            return;
        }
        std::vector<T> tmp;
        for (const auto& e : *v) {
            const bool ok = std::is_integral_v<T> ? e.is_number_integer() : e.is_number();
            if (!ok) {
                errors_.push_back(key(k) + " must contain only " + (std::is_integral_v<T> ? "integers" : "numbers"));
                return;
            }
            tmp.push_back(e.get<T>());
        }
        out = std::move(tmp);
    }

    void finish() {
        if (!obj_) return;
        for (auto it = obj_->begin(); it != obj_->end(); ++it)
            if (!seen_.count(it.key())) errors_.push_back("unknown key \"" + key(it.key()) + "\"");
    }

private:
    const json* obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

inline std::string to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::zero: return "zero";
        case ShapeKind::uniform: return "uniform";
        case ShapeKind::sine: return "sine";
        case ShapeKind::bump: return "bump";
    }
    return "?";
}

inline std::optional<ShapeKind> parse_shape_kind(const std::string& s) {
    if (s == "zero") return ShapeKind::zero;
    if (s == "uniform") return ShapeKind::uniform;
    if (s == "sine") return ShapeKind::sine;
    if (s == "bump") return ShapeKind::bump;
    return std::nullopt;
}

inline void read_shape(Section& parent, const std::string& k, Shape& shape, std::vector<std::string>& errors) {
    const json* v = parent.find(k);
    if (!v) return;
    Section s(v, parent.key(k), errors);
    std::string kind = to_string(shape.kind);
    s.string("kind", kind);
    if (auto parsed = parse_shape_kind(kind)) shape.kind = *parsed;
    else errors.push_back(s.key("kind") + " must be one of zero, uniform, sine, bump");
    s.number("amplitude", shape.amplitude);
    s.number("center", shape.center);
    s.number("width", shape.width);
    s.finish();
    if (shape.kind == ShapeKind::bump && !(shape.width > 0.0)) errors.push_back(s.key("width") + " must be positive");
}

inline ojson shape_json(const Shape& s) {
    ojson j;
    j["kind"] = to_string(s.kind);
    j["amplitude"] = s.amplitude;
    j["center"] = s.center;
    j["width"] = s.width;
    return j;
}

inline std::string to_string(CertificateMode m) { return m == CertificateMode::kyp ? "kyp" : "auto"; }

}  // namespace detail

/// Parses and validates JSON text. Throws ConfigViolations listing every
/// problem found.
inline ExperimentConfig parse_config_text(const std::string& text) {
    using detail::Section;
    detail::json root;
    try {
        root = detail::json::parse(text);
    } catch (const detail::json::parse_error& e) {
        throw ConfigViolations({std::string("malformed JSON: ") + e.what()});
    }
    std::vector<std::string> errors;
    ExperimentConfig c;
    Section top(&root, "", errors);

    {
        Section s(top.find("plant"), "plant", errors);
        std::string kind = to_string(c.plant.kind);
        s.string("kind", kind);
        auto pk = parse_plant_kind(kind);
        if (!pk || *pk == PlantKind::matrix)
            errors.push_back("plant.kind must be one of heat, advection_diffusion, spr_heat");
        else
            c.plant.kind = *pk;
        s.number("length", c.plant.length);
        s.number("diffusivity", c.plant.diffusivity);
        s.number("velocity", c.plant.velocity);
        s.number("viscosity", c.plant.viscosity);
        s.integer("channels", c.plant.channels);
        detail::read_shape(s, "input_shape", c.plant.input_shape, errors);
        detail::read_shape(s, "output_shape", c.plant.output_shape, errors);
        detail::read_shape(s, "initial_state", c.plant.initial_state, errors);
        std::string nl = c.plant.nonlinearity.name();
        s.string("nonlinearity", nl);
        if (auto k = parse_nonlinearity(nl)) c.plant.nonlinearity.kind = *k;
        else errors.push_back("plant.nonlinearity must be one of zero, sin, rational");
        s.list("alpha_true", c.plant.alpha_true);
        s.number("rho0", c.plant.rho0);
        s.finish();
    }
    {
        Section s(top.find("grid"), "grid", errors);
        s.integer("n", c.n);
        s.list("n_list", c.n_list);
        s.finish();
    }
    {
        Section s(top.find("controller"), "controller", errors);
        std::string strat = to_string(c.strategy);
        s.string("strategy", strat);
        if (auto g = parse_gain_strategy(strat)) c.strategy = *g;
        else errors.push_back("controller.strategy must be one of zero, lqr");
        s.finish();
    }
    {
        Section s(top.find("filter"), "filter", errors);
        s.list("poles", c.filter_poles);
        s.number("input_gain", c.filter_input_gain);
        s.finish();
    }
    {
        Section s(top.find("certificate"), "certificate", errors);
        std::string mode = detail::to_string(c.certificate);
        s.string("mode", mode);
        if (mode == "auto") c.certificate = CertificateMode::automatic;
        else if (mode == "kyp") c.certificate = CertificateMode::kyp;
        else errors.push_back("certificate.mode must be one of auto, kyp");
        s.number("normality_threshold", c.normality_threshold);
        s.finish();
    }
    {
        Section s(top.find("adaptation"), "adaptation", errors);
        s.number("gamma", c.gamma);
        s.list("gamma_list", c.gamma_list);
        s.number("epsilon", c.epsilon);
        s.number("nu_alpha", c.plant.nu_alpha);
        s.list("alpha_hat0", c.alpha_hat0);
        s.finish();
    }
    {
        Section s(top.find("simulation"), "simulation", errors);
        s.number("dt", c.dt);
        s.number("horizon", c.horizon);
        s.integer("record_every", c.record_every);
        s.number("rho_w", c.rho_w);
        s.number("blowup_factor", c.blowup_factor);
        if (const detail::json* r = s.find("reference")) {
            Section rs(r, "simulation.reference", errors);
            std::string kind = to_string(c.reference.kind);
            rs.string("kind", kind);
            if (auto k = parse_reference_kind(kind)) c.reference.kind = *k;
            else errors.push_back("simulation.reference.kind must be one of constant, step, sinusoid");
            rs.number("amplitude", c.reference.amplitude);
            rs.number("time", c.reference.time);
            rs.number("frequency", c.reference.frequency);
            rs.number("offset", c.reference.offset);
            rs.finish();
        }
        s.finish();
    }
    {
        Section s(top.find("analysis"), "analysis", errors);
        s.number("eps_s", c.eps_s);
        s.number("transient_window", c.transient_window);
        s.integer("x_probes", c.x_probes);
        s.integer("n_max", c.n_max);
        s.integer("lipschitz_samples", c.lipschitz_samples);
        s.number("envelope_rel_tol", c.envelope_rel_tol);
        s.finish();
    }
    {
        Section s(top.find("outputs"), "outputs", errors);
        s.string("directory", c.output_directory);
        s.boolean("plots", c.plots);
        s.finish();
    }
    top.unsigned_integer("seed", c.seed);
    top.finish();

    // Semantic checks.
    auto positive = [&](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) errors.push_back(std::string(name) + " must be positive");
    };
    positive(c.plant.length, "plant.length");
    positive(c.plant.diffusivity, "plant.diffusivity");
    positive(c.plant.viscosity, "plant.viscosity");
    positive(c.plant.rho0, "plant.rho0");
    positive(c.plant.nu_alpha, "adaptation.nu_alpha");
    positive(c.gamma, "adaptation.gamma");
    positive(c.dt, "simulation.dt");
    positive(c.horizon, "simulation.horizon");
    positive(c.rho_w, "simulation.rho_w");
    positive(c.eps_s, "analysis.eps_s");
    positive(c.envelope_rel_tol, "analysis.envelope_rel_tol");
    if (!(c.blowup_factor >= 1.0)) errors.push_back("simulation.blowup_factor must be at least 1");
    if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) errors.push_back("adaptation.epsilon must lie in (0, 1]");
    if (c.plant.channels < 1) errors.push_back("plant.channels must be at least 1");
    if (c.n < 4 || c.n > 400) errors.push_back("grid.n must lie in [4, 400]");
    for (int n : c.n_list)
        if (n < 4 || n > 400) {
            errors.push_back("grid.n_list entries must lie in [4, 400]");
            break;
        }
    if (c.record_every < 1) errors.push_back("simulation.record_every must be at least 1");
    if (c.filter_poles.empty()) errors.push_back("filter.poles must not be empty");
    for (double p : c.filter_poles)
        if (!(p < 0.0)) {
            errors.push_back("filter.poles must be negative");
            break;
        }
    for (std::size_t k = 0; k < c.gamma_list.size(); ++k) {
        if (!(c.gamma_list[k] > 0.0)) {
            errors.push_back("adaptation.gamma_list entries must be positive");
            break;
        }
        if (k > 0 && !(c.gamma_list[k] > c.gamma_list[k - 1])) {
            errors.push_back("adaptation.gamma_list must be strictly increasing");
            break;
        }
    }
    if (static_cast<int>(c.plant.alpha_true.size()) != c.plant.channels)
        errors.push_back("plant.alpha_true must have one entry per channel");
    if (static_cast<int>(c.alpha_hat0.size()) != c.plant.channels)
        errors.push_back("adaptation.alpha_hat0 must have one entry per channel");
    const double outer = c.plant.nu_alpha * std::sqrt(1.0 + c.epsilon);
    for (double a : c.plant.alpha_true)
        if (!(std::abs(a) < c.plant.nu_alpha)) {
            errors.push_back("plant.alpha_true entries must satisfy |alpha| < adaptation.nu_alpha");
            break;
        }
    for (double a : c.alpha_hat0)
        if (!(std::abs(a) <= outer)) {
            errors.push_back("adaptation.alpha_hat0 entries must lie in the projection set");
            break;
        }
    if (c.x_probes < 1) errors.push_back("analysis.x_probes must be at least 1");
    if (c.n_max < 4) errors.push_back("analysis.n_max must be at least 4");
    if (c.lipschitz_samples < 1000) errors.push_back("analysis.lipschitz_samples must be at least 1000");
    if (c.certificate == CertificateMode::kyp) {
        if (c.plant.kind != PlantKind::spr_heat)
            errors.push_back("certificate.mode kyp needs a supplied certificate; only plant.kind spr_heat provides one");
        if (c.strategy != GainStrategy::zero) errors.push_back("certificate.mode kyp requires controller.strategy zero");
    }

    if (!errors.empty()) throw ConfigViolations(std::move(errors));
    return c;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cli", "cannot read config file " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

/// Canonical JSON echo of a config, every field present.
inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    auto& p = j["plant"];
    p["kind"] = to_string(c.plant.kind);
    p["length"] = c.plant.length;
    p["diffusivity"] = c.plant.diffusivity;
    p["velocity"] = c.plant.velocity;
    p["viscosity"] = c.plant.viscosity;
    p["channels"] = c.plant.channels;
    p["input_shape"] = detail::shape_json(c.plant.input_shape);
    p["output_shape"] = detail::shape_json(c.plant.output_shape);
    p["initial_state"] = detail::shape_json(c.plant.initial_state);
    p["nonlinearity"] = c.plant.nonlinearity.name();
    p["alpha_true"] = c.plant.alpha_true;
    p["rho0"] = c.plant.rho0;
    j["grid"]["n"] = c.n;
    j["grid"]["n_list"] = c.n_list;
    j["controller"]["strategy"] = to_string(c.strategy);
    j["filter"]["poles"] = c.filter_poles;
    j["filter"]["input_gain"] = c.filter_input_gain;
    j["certificate"]["mode"] = detail::to_string(c.certificate);
    j["certificate"]["normality_threshold"] = c.normality_threshold;
    auto& a = j["adaptation"];
    a["gamma"] = c.gamma;
    a["gamma_list"] = c.gamma_list;
    a["epsilon"] = c.epsilon;
    a["nu_alpha"] = c.plant.nu_alpha;
    a["alpha_hat0"] = c.alpha_hat0;
    auto& s = j["simulation"];
    s["dt"] = c.dt;
    s["horizon"] = c.horizon;
    s["record_every"] = c.record_every;
    s["rho_w"] = c.rho_w;
    s["blowup_factor"] = c.blowup_factor;
    s["reference"]["kind"] = to_string(c.reference.kind);
    s["reference"]["amplitude"] = c.reference.amplitude;
    s["reference"]["time"] = c.reference.time;
    s["reference"]["frequency"] = c.reference.frequency;
    s["reference"]["offset"] = c.reference.offset;
    auto& an = j["analysis"];
    an["eps_s"] = c.eps_s;
    an["transient_window"] = c.transient_window;
    an["x_probes"] = c.x_probes;
    an["n_max"] = c.n_max;
    an["lipschitz_samples"] = c.lipschitz_samples;
    an["envelope_rel_tol"] = c.envelope_rel_tol;
    j["outputs"]["directory"] = c.output_directory;
    j["outputs"]["plots"] = c.plots;
    j["seed"] = c.seed;
    return j;
}

inline std::string dump_config(const ExperimentConfig& c) { return config_json(c).dump(2) + "\n"; }

/// FNV-1a 64-bit hash of the canonical dump, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
    const std::string text = config_json(c).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace dac
