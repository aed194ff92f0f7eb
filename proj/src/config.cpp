#include "msm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace msm {

namespace pt = boost::property_tree;

namespace {

constexpr double deg = std::numbers::pi / 180.0;

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) {
        throw ConfigError(key + ": " + what);
    }
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
}

int parse_int(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& raw) {
    std::string s = trim(raw);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") {
        return true;
    }
    if (s == "false" || s == "0" || s == "no" || s == "off") {
        return false;
    }
    throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, delim)) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

// Samples are written as "t Hx Hy; t Hx Hy; ...".
std::vector<FieldSample> parse_samples(const std::string& key, const std::string& raw) {
    std::vector<FieldSample> out;
    for (const auto& entry : split(raw, ';')) {
        std::istringstream is(entry);
        std::string a, b, c, extra;
        if (!(is >> a >> b >> c) || (is >> extra)) {
            throw ConfigError(key + ": malformed sample '" + entry + "'");
        }
        FieldSample s;
        s.t = parse_double(key, a);
        s.H = Vec2(parse_double(key, b), parse_double(key, c));
        out.push_back(s);
    }
    return out;
}

std::string format_samples(const std::vector<FieldSample>& samples) {
    std::string out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i > 0) {
            out += "; ";
        }
        out += fmt_double(samples[i].t) + " " + fmt_double(samples[i].H.x()) + " " +
               fmt_double(samples[i].H.y());
    }
    return out;
}

const std::set<std::string> known_seeds = {"flip_plus", "flip_minus", "flip_both",
                                           "offset_plus", "offset_minus"};

// Walks a section, dispatching every key to `assign`; unknown keys are errors.
template <typename F>
void for_each_key(const pt::ptree& root, const std::string& section, F&& assign) {
    const auto child = root.get_child_optional(section);
    if (!child) {
        return;
    }
    for (const auto& [key, node] : *child) {
        if (!node.empty()) {
            throw ConfigError(section + "." + key + ": nested sections are not supported");
        }
        if (!assign(key, node.data())) {
            throw ConfigError(section + "." + key + ": unknown key");
        }
    }
}

}  // namespace

void MaterialParams::update_lame() {
    mu_poly = E_poly / (2.0 * (1.0 + nu_poly));
    lambda_poly = E_poly * nu_poly / ((1.0 + nu_poly) * (1.0 - 2.0 * nu_poly));
}

void MaterialParams::validate() const {
    require(eps0 > 0.0, "material.eps0", "must be positive");
    require(C11 > 0.0, "material.C11", "must be positive");
    require(C44 > 0.0, "material.C44", "must be positive");
    require(C11 > C12, "material.C12", "must be smaller than C11");
    require(E_poly > 0.0, "material.E_poly", "must be positive");
    require(nu_poly > 0.0 && nu_poly < 0.5, "material.nu_poly", "must lie in (0, 0.5)");
    require(Ku >= 0.0, "material.Ku", "must be non-negative");
    require(kappa >= 0.0, "material.kappa", "must be non-negative");
    require(Ms_over_mu0 >= 0.0, "material.Ms_over_mu0", "must be non-negative");
    require(Ms2_over_mu0 >= 0.0, "material.Ms2_over_mu0", "must be non-negative");
}

void GeometryParams::validate() const {
    require(particle_radius > 0.0 && particle_radius < 0.5, "geometry.particle_radius",
            "must lie in (0, 0.5)");
    require(std::isfinite(lattice_angle), "geometry.lattice_angle", "must be finite");
}

double FieldProtocol::t_begin() const { return samples.front().t; }
double FieldProtocol::t_end() const { return samples.back().t; }

Vec2 FieldProtocol::field_at(double t) const {
    if (t <= samples.front().t) {
        return samples.front().H;
    }
    if (t >= samples.back().t) {
        return samples.back().H;
    }
    const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                     [](double v, const FieldSample& s) { return v < s.t; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double w = (t - a.t) / (b.t - a.t);
    return (1.0 - w) * a.H + w * b.H;
}

Vec2 FieldProtocol::primary_direction() const {
    switch (kind) {
        case ProtocolKind::rotated:
            return Vec2(std::cos(angle), std::sin(angle));
        case ProtocolKind::uniaxial:
        case ProtocolKind::biaxial:
            return Vec2(1.0, 0.0);
        case ProtocolKind::custom:
            break;
    }
    for (const auto& s : samples) {
        if (s.H.norm() > 0.0) {
            return s.H.normalized();
        }
    }
    return Vec2(1.0, 0.0);
}

int FieldProtocol::leg_count() const {
    switch (kind) {
        case ProtocolKind::uniaxial:
        case ProtocolKind::rotated:
            return 5;
        case ProtocolKind::biaxial:
            return 3;
        case ProtocolKind::custom:
            break;
    }
    return 1;
}

int FieldProtocol::leg_end(int leg) const {
    if (kind == ProtocolKind::custom) {
        return static_cast<int>(samples.size()) - 1;
    }
    return std::min((leg + 1) * steps_per_leg, static_cast<int>(samples.size()) - 1);
}

void FieldProtocol::validate() const {
    require(samples.size() >= 2, "protocol.samples", "needs at least two samples");
    for (std::size_t i = 1; i < samples.size(); ++i) {
        require(samples[i].t > samples[i - 1].t, "protocol.samples",
                "times must be strictly increasing");
    }
    for (const auto& s : samples) {
        require(std::isfinite(s.t) && s.H.allFinite(), "protocol.samples", "must be finite");
    }
}

FieldProtocol build_protocol(ProtocolKind kind, double peak, int steps_per_leg, double angle) {
    if (!(peak > 0.0)) {
        throw ConfigError("protocol.peak: must be positive");
    }
    if (steps_per_leg < 1) {
        throw ConfigError("protocol.steps_per_leg: must be at least 1");
    }
    FieldProtocol p;
    p.kind = kind;
    p.peak = peak;
    p.steps_per_leg = steps_per_leg;
    p.angle = angle;

    // Each leg is a list of (start, end) field vectors.
    std::vector<std::pair<Vec2, Vec2>> legs;
    const Vec2 ex(1.0, 0.0);
    const Vec2 ey(0.0, 1.0);
    const Vec2 zero = Vec2::Zero();
    switch (kind) {
        case ProtocolKind::uniaxial:
        case ProtocolKind::rotated: {
            const Vec2 d = kind == ProtocolKind::rotated ? Vec2(std::cos(angle), std::sin(angle)) : ex;
            legs = {{zero, peak * d}, {peak * d, zero}, {zero, -peak * d}, {-peak * d, zero},
                    {zero, peak * d}};
            p.description = kind == ProtocolKind::rotated
                                ? "uniaxial cycle rotated by " + fmt_double(angle / deg) + " deg"
                                : "uniaxial cycle along x";
            break;
        }
        case ProtocolKind::biaxial:
            legs = {{zero, peak * ex}, {peak * ex, zero}, {zero, peak * ey}};
            p.description = "horizontal then vertical loading";
            break;
        case ProtocolKind::custom:
            throw ConfigError("protocol.kind: custom protocols need explicit samples");
    }
    int index = 0;
    p.samples.push_back({0.0, zero});
    for (const auto& [a, b] : legs) {
        for (int k = 1; k <= steps_per_leg; ++k) {
            const double w = static_cast<double>(k) / steps_per_leg;
            FieldSample s;
            s.t = static_cast<double>(++index);
            s.H = (1.0 - w) * a + w * b;
            p.samples.push_back(s);
        }
    }
    // Remove round-off from the interpolated zero crossings.
    for (auto& s : p.samples) {
        for (int c = 0; c < 2; ++c) {
            if (std::abs(s.H[c]) < 1e-15 * peak) {
                s.H[c] = 0.0;
            }
        }
    }
    return p;
}

FieldProtocol build_protocol(const std::string& spec, double peak, int steps_per_leg) {
    if (spec == "uniaxial") {
        return build_protocol(ProtocolKind::uniaxial, peak, steps_per_leg);
    }
    if (spec == "biaxial") {
        return build_protocol(ProtocolKind::biaxial, peak, steps_per_leg);
    }
    if (spec.rfind("rotated:", 0) == 0) {
        const double a = parse_double("protocol.kind", spec.substr(8));
        return build_protocol(ProtocolKind::rotated, peak, steps_per_leg, a * deg);
    }
    throw ConfigError("protocol.kind: unknown protocol '" + spec + "'");
}

void SolverParams::validate() const {
    require(n_boundary_segments >= 16, "solver.n_boundary_segments", "must be at least 16");
    require(n_boundary_segments % 4 == 0, "solver.n_boundary_segments",
            "must be divisible by 4");
    require(delta_over_h > 0.0, "solver.delta_over_h", "must be positive");
    require(grad_tol > 0.0, "solver.grad_tol", "must be positive");
    require(max_iterations >= 1, "solver.max_iterations", "must be at least 1");
    require(armijo_c > 0.0 && armijo_c < 0.5, "solver.armijo_c", "must lie in (0, 0.5)");
    require(fd_step > 0.0 && fd_step < 1e-2, "solver.fd_step", "must lie in (0, 1e-2)");
    require(tol_E_rel > 0.0, "solver.tol_E_rel", "must be positive");
    require(max_backtrack_per_leg >= 0, "solver.max_backtrack_per_leg", "must be non-negative");
    require(restart_interval >= 0, "solver.restart_interval", "must be non-negative");
    for (const auto& s : restart_seeds) {
        require(known_seeds.count(s) == 1, "solver.restart_seeds", "unknown seed '" + s + "'");
    }
}

void SimulationConfig::validate() const {
    material.validate();
    geometry.validate();
    protocol.validate();
    solver.validate();
    require(std::abs(solver.initial_offset) < geometry.particle_radius, "solver.initial_offset",
            "must lie inside the particle");
}

SimulationConfig default_config() {
    SimulationConfig c;
    c.material.update_lame();
    c.protocol = build_protocol(ProtocolKind::uniaxial, 1.0, 50);
    return c;
}

std::string to_string(ReferencePhase r) {
    return r == ReferencePhase::austenite ? "austenite" : "martensite";
}

std::string to_string(Workpiece w) { return w == Workpiece::none ? "none" : "circular"; }

namespace {

std::string to_string(ProtocolKind k) {
    switch (k) {
        case ProtocolKind::uniaxial: return "uniaxial";
        case ProtocolKind::biaxial: return "biaxial";
        case ProtocolKind::rotated: return "rotated";
        case ProtocolKind::custom: return "custom";
    }
    return "custom";
}

}  // namespace

SimulationConfig parse_config(const std::string& text) {
    pt::ptree root;
    try {
        std::istringstream is(text);
        pt::read_ini(is, root);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("parse error at line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, node] : root) {
        if (node.empty() && !node.data().empty()) {
            throw ConfigError(section + ": keys must appear inside a section");
        }
        static const std::set<std::string> sections = {"material", "geometry", "protocol", "solver"};
        if (sections.count(section) == 0) {
            throw ConfigError(section + ": unknown section");
        }
    }

    SimulationConfig c = default_config();
    auto& m = c.material;
    for_each_key(root, "material", [&](const std::string& k, const std::string& v) {
        const std::string key = "material." + k;
        if (k == "eps0") m.eps0 = parse_double(key, v);
        else if (k == "C11") m.C11 = parse_double(key, v);
        else if (k == "C12") m.C12 = parse_double(key, v);
        else if (k == "C44") m.C44 = parse_double(key, v);
        else if (k == "E_poly") m.E_poly = parse_double(key, v);
        else if (k == "nu_poly") m.nu_poly = parse_double(key, v);
        else if (k == "Ms_over_mu0") m.Ms_over_mu0 = parse_double(key, v);
        else if (k == "Ms2_over_mu0") m.Ms2_over_mu0 = parse_double(key, v);
        else if (k == "Ku") m.Ku = parse_double(key, v);
        else if (k == "kappa") m.kappa = parse_double(key, v);
        else if (k == "lambda_poly" || k == "mu_poly") {
            // Derived quantities; accepted for round-trips, recomputed below.
            parse_double(key, v);
        } else return false;
        return true;
    });
    m.update_lame();

    auto& g = c.geometry;
    for_each_key(root, "geometry", [&](const std::string& k, const std::string& v) {
        const std::string key = "geometry." + k;
        if (k == "particle_radius") g.particle_radius = parse_double(key, v);
        else if (k == "lattice_angle") g.lattice_angle = parse_double(key, v);
        else if (k == "reference_phase") {
            const auto s = trim(v);
            if (s == "austenite") g.reference_phase = ReferencePhase::austenite;
            else if (s == "martensite") g.reference_phase = ReferencePhase::martensite;
            else throw ConfigError(key + ": expected austenite or martensite");
        } else if (k == "workpiece") {
            const auto s = trim(v);
            if (s == "none") g.workpiece = Workpiece::none;
            else if (s == "circular") g.workpiece = Workpiece::circular;
            else throw ConfigError(key + ": expected none or circular");
        } else return false;
        return true;
    });

    std::string kind = "uniaxial";
    double peak = 1.0;
    int steps = 50;
    double angle_deg = 0.0;
    std::string samples_raw;
    std::string description;
    bool have_angle = false;
    for_each_key(root, "protocol", [&](const std::string& k, const std::string& v) {
        const std::string key = "protocol." + k;
        if (k == "kind") kind = trim(v);
        else if (k == "peak") peak = parse_double(key, v);
        else if (k == "steps_per_leg") steps = parse_int(key, v);
        else if (k == "angle_deg") { angle_deg = parse_double(key, v); have_angle = true; }
        else if (k == "samples") samples_raw = v;
        else if (k == "description") description = trim(v);
        else return false;
        return true;
    });
    if (kind == "rotated" && !have_angle) {
        throw ConfigError("protocol.angle_deg: required for rotated protocols");
    }
    if (kind == "custom") {
        if (samples_raw.empty()) {
            throw ConfigError("protocol.samples: required for custom protocols");
        }
        c.protocol = FieldProtocol{};
        c.protocol.kind = ProtocolKind::custom;
        c.protocol.peak = peak;
        c.protocol.steps_per_leg = steps;
    } else if (kind == "uniaxial" || kind == "biaxial") {
        c.protocol = build_protocol(kind, peak, steps);
    } else if (kind == "rotated") {
        c.protocol = build_protocol(ProtocolKind::rotated, peak, steps, angle_deg * deg);
    } else {
        throw ConfigError("protocol.kind: unknown protocol '" + kind + "'");
    }
    if (!samples_raw.empty()) {
        c.protocol.samples = parse_samples("protocol.samples", samples_raw);
    }
    if (!description.empty()) {
        c.protocol.description = description;
    }

    auto& s = c.solver;
    for_each_key(root, "solver", [&](const std::string& k, const std::string& v) {
        const std::string key = "solver." + k;
        if (k == "n_boundary_segments") s.n_boundary_segments = parse_int(key, v);
        else if (k == "delta_over_h") s.delta_over_h = parse_double(key, v);
        else if (k == "free_macro_strain") s.free_macro_strain = parse_bool(key, v);
        else if (k == "free_twin_angle") s.free_twin_angle = parse_bool(key, v);
        else if (k == "initial_offset") s.initial_offset = parse_double(key, v);
        else if (k == "grad_tol") s.grad_tol = parse_double(key, v);
        else if (k == "max_iterations") s.max_iterations = parse_int(key, v);
        else if (k == "armijo_c") s.armijo_c = parse_double(key, v);
        else if (k == "fd_step") s.fd_step = parse_double(key, v);
        else if (k == "tol_E_rel") s.tol_E_rel = parse_double(key, v);
        else if (k == "backtracking") s.backtracking = parse_bool(key, v);
        else if (k == "max_backtrack_per_leg") s.max_backtrack_per_leg = parse_int(key, v);
        else if (k == "restart_interval") s.restart_interval = parse_int(key, v);
        else if (k == "restart_seeds") s.restart_seeds = split(v, ',');
        else return false;
        return true;
    });

    c.validate();
    return c;
}

SimulationConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path + ": cannot open file");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const SimulationConfig& c) {
    std::ostringstream os;
    const auto& m = c.material;
    os << "[material]\n"
       << "eps0 = " << fmt_double(m.eps0) << "\n"
       << "C11 = " << fmt_double(m.C11) << "\n"
       << "C12 = " << fmt_double(m.C12) << "\n"
       << "C44 = " << fmt_double(m.C44) << "\n"
       << "E_poly = " << fmt_double(m.E_poly) << "\n"
       << "nu_poly = " << fmt_double(m.nu_poly) << "\n"
       << "lambda_poly = " << fmt_double(m.lambda_poly) << "\n"
       << "mu_poly = " << fmt_double(m.mu_poly) << "\n"
       << "Ms_over_mu0 = " << fmt_double(m.Ms_over_mu0) << "\n"
       << "Ms2_over_mu0 = " << fmt_double(m.Ms2_over_mu0) << "\n"
       << "Ku = " << fmt_double(m.Ku) << "\n"
       << "kappa = " << fmt_double(m.kappa) << "\n\n";
    const auto& g = c.geometry;
    os << "[geometry]\n"
       << "particle_radius = " << fmt_double(g.particle_radius) << "\n"
       << "lattice_angle = " << fmt_double(g.lattice_angle) << "\n"
       << "reference_phase = " << to_string(g.reference_phase) << "\n"
       << "workpiece = " << to_string(g.workpiece) << "\n\n";
    const auto& p = c.protocol;
    os << "[protocol]\n"
       << "kind = " << to_string(p.kind) << "\n"
       << "peak = " << fmt_double(p.peak) << "\n"
       << "steps_per_leg = " << p.steps_per_leg << "\n"
       << "angle_deg = " << fmt_double(p.angle / deg) << "\n"
       << "description = " << p.description << "\n"
       << "samples = " << format_samples(p.samples) << "\n\n";
    const auto& s = c.solver;
    std::string seeds;
    for (std::size_t i = 0; i < s.restart_seeds.size(); ++i) {
        seeds += (i ? "," : "") + s.restart_seeds[i];
    }
    os << "[solver]\n"
       << "n_boundary_segments = " << s.n_boundary_segments << "\n"
       << "delta_over_h = " << fmt_double(s.delta_over_h) << "\n"
       << "free_macro_strain = " << (s.free_macro_strain ? "true" : "false") << "\n"
       << "free_twin_angle = " << (s.free_twin_angle ? "true" : "false") << "\n"
       << "initial_offset = " << fmt_double(s.initial_offset) << "\n"
       << "grad_tol = " << fmt_double(s.grad_tol) << "\n"
       << "max_iterations = " << s.max_iterations << "\n"
       << "armijo_c = " << fmt_double(s.armijo_c) << "\n"
       << "fd_step = " << fmt_double(s.fd_step) << "\n"
       << "tol_E_rel = " << fmt_double(s.tol_E_rel) << "\n"
       << "backtracking = " << (s.backtracking ? "true" : "false") << "\n"
       << "max_backtrack_per_leg = " << s.max_backtrack_per_leg << "\n"
       << "restart_interval = " << s.restart_interval << "\n"
       << "restart_seeds = " << seeds << "\n";
    return os.str();
}

}  // namespace msm
