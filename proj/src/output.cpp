#include "msm/output.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace msm {

namespace fs = std::filesystem;

namespace {

// Shortest representation that parses back to the same double.
void put(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

void put_row(std::string& out, const StepRecord& r, bool with_episode) {
    const double values[] = {r.t,
                             r.H.x(),
                             r.H.y(),
                             r.vol_frac,
                             r.mean_m.x(),
                             r.mean_m.y(),
                             r.energy.e_matrix,
                             r.energy.e_particle,
                             r.energy.e_zeeman,
                             r.energy.e_demag,
                             r.energy.e_anis,
                             r.energy.total,
                             r.d_step,
                             r.diss_acc,
                             r.est_lo,
                             r.est_hi};
    out += std::to_string(r.index);
    for (double v : values) {
        out += ',';
        put(out, v);
    }
    out += r.backtracked ? ",1" : ",0";
    if (with_episode) {
        out += ',';
        out += std::to_string(r.episode);
    }
    out += '\n';
}

void write_file(const fs::path& file, const std::string& text) {
    std::ofstream os(file, std::ios::binary);
    if (!os) {
        throw OutputError("cannot open " + file.string() + " for writing");
    }
    os << text;
    os.close();
    if (!os) {
        throw OutputError("write to " + file.string() + " failed");
    }
}

void prepare(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw OutputError("cannot create output directory " + dir.string());
    }
}

double along(const StepRecord& r, const Vec2& primary) { return r.H.dot(primary); }

// Fields mostly across the primary direction plot as negative.
double abscissa(const StepRecord& r, const Vec2& primary) {
    const double a = along(r, primary);
    const double b = r.H.x() * primary.y() - r.H.y() * primary.x();
    return std::abs(b) > std::abs(a) ? -r.H.norm() : a;
}

bool same_field(const Vec2& a, const Vec2& b) {
    return (a - b).norm() <= 1e-12 * std::max(1.0, a.norm());
}

// Direction of travel of the field at step k.
Vec2 travel(const std::vector<StepRecord>& s, std::size_t k) {
    if (s.size() < 2) {
        return Vec2::Zero();
    }
    return k == 0 ? Vec2(s[1].H - s[0].H) : Vec2(s[k].H - s[k - 1].H);
}

}  // namespace

const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols = {
        "i",        "t",        "Hx",       "Hy",         "vol_frac", "mx_avg",
        "my_avg",   "E_matrix", "E_particle", "E_zeeman", "E_demag",  "E_anis",
        "E_total",  "D_step",   "Diss_acc", "est_lo",     "est_hi",   "backtracked"};
    return cols;
}

std::string trace_csv(const std::vector<StepRecord>& records, bool with_episode) {
    std::string out;
    const auto& cols = trace_columns();
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out += (c ? "," : "") + cols[c];
    }
    if (with_episode) {
        out += ",episode";
    }
    out += '\n';
    for (const auto& r : records) {
        put_row(out, r, with_episode);
    }
    return out;
}

void write_trace(const Trace& trace, const fs::path& dir) {
    prepare(dir);
    write_file(dir / "trace.csv", trace_csv(trace.steps));
    write_file(dir / "trace_canceled.csv", trace_csv(trace.canceled, true));
}

std::vector<double> CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw OutputError("no column " + name);
    }
    const auto c = static_cast<std::size_t>(it - header.begin());
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) {
        v.push_back(r.at(c));
    }
    return v;
}

CsvTable read_csv(const fs::path& file) {
    std::ifstream is(file);
    if (!is) {
        throw OutputError("cannot open " + file.string());
    }
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) {
        return t;
    }
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) {
        t.header.push_back(cell);
    }
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            const auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma) {
                throw OutputError("bad number in " + file.string() + ": " + line);
            }
            row.push_back(v);
            p = comma + 1;
        }
        if (row.size() != t.header.size()) {
            throw OutputError("row width mismatch in " + file.string());
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

SummaryStats summarize(const Trace& trace, const Vec2& primary) {
    SummaryStats st;
    const auto& s = trace.steps;
    if (s.empty()) {
        st.blocked = true;
        st.partial = true;
        return st;
    }
    const double f0 = s.front().vol_frac;
    const double off0 = s.front().state.twin.offset;
    st.initial_fraction = f0;
    st.blocked = true;
    for (const auto& r : s) {
        st.max_fraction = std::max(st.max_fraction, r.vol_frac);
        st.max_offset_change = std::max(st.max_offset_change, std::abs(r.state.twin.offset - off0));
        if (st.blocked && std::abs(r.vol_frac - f0) > switching_threshold) {
            st.blocked = false;
            st.switching_field_up = std::abs(along(r, primary));
        }
    }

    // Last closed cycle: the latest pair of visits to the same field with the
    // same direction of travel.
    const int n = static_cast<int>(s.size());
    st.partial = true;
    for (int j = n - 1; j > 0 && st.partial; --j) {
        const Vec2 dj = travel(s, j);
        for (int i = j - 1; i >= 0; --i) {
            if (same_field(s[i].H, s[j].H) && travel(s, i).dot(dj) > 0.0) {
                st.loop_begin = i;
                st.loop_end = j;
                st.partial = false;
                break;
            }
        }
    }
    if (st.partial) {
        st.loop_begin = 0;
        st.loop_end = n - 1;
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int k = st.loop_begin; k <= st.loop_end; ++k) {
        lo = std::min(lo, s[k].vol_frac);
        hi = std::max(hi, s[k].vol_frac);
    }
    st.loop_amplitude = std::clamp(hi - lo, 0.0, 1.0);

    // Remanence: first zero field after the loop start, or after the first
    // peak when there is no closed loop.
    int from = st.loop_begin;
    int peak = 0;
    for (int k = 0; k < n; ++k) {
        if (s[k].H.norm() > s[peak].H.norm()) {
            peak = k;
        }
    }
    if (st.partial) {
        from = peak;
    }
    for (int k = from + 1; k < n; ++k) {
        if (s[k].H.norm() <= 1e-12) {
            st.remanent_fraction = s[k].vol_frac;
            st.has_remanent = true;
            break;
        }
    }

    const Mat2 A = s[peak].state.A;
    const Eigen::SelfAdjointEigenSolver<Mat2> eig(0.5 * (A + A.transpose()));
    st.spontaneous_strain = eig.eigenvalues().cwiseAbs().maxCoeff();
    return st;
}

SummaryStats summarize(const Trace& trace, const SimulationConfig& config) {
    return summarize(trace, config.protocol.primary_direction());
}

std::string summary_json(const SummaryStats& st, const Trace& trace, const SimulationConfig& config) {
    nlohmann::json j;
    j["switching_field_up"] = st.blocked ? nlohmann::json("blocked") : nlohmann::json(st.switching_field_up);
    j["loop_amplitude"] = st.loop_amplitude;
    j["loop_steps"] = {st.loop_begin, st.loop_end};
    j["partial"] = st.partial;
    j["remanent_fraction"] = st.has_remanent ? nlohmann::json(st.remanent_fraction) : nlohmann::json(nullptr);
    if (config.solver.free_macro_strain) {
        j["spontaneous_strain"] = st.spontaneous_strain;
    }
    j["initial_fraction"] = st.initial_fraction;
    j["max_fraction"] = st.max_fraction;
    j["max_offset_change"] = st.max_offset_change;
    j["accepted_steps"] = trace.steps.size();
    j["canceled_steps"] = trace.canceled.size();
    j["backtrack_episodes"] = trace.backtrack_episodes;
    j["budget_exceeded"] = trace.budget_exceeded;
    int violations = 0;
    int unconverged = 0;
    for (const auto& r : trace.steps) {
        violations += r.violation ? 1 : 0;
        unconverged += r.converged ? 0 : 1;
    }
    j["estimate_violations"] = violations;
    j["unconverged_steps"] = unconverged;
    j["accumulated_dissipation"] = accumulated_dissipation(trace);
    j["protocol"] = config.protocol.description;
    return j.dump(2) + "\n";
}

void emit_plot_data(const Trace& trace, const Vec2& primary, const fs::path& dir) {
    prepare(dir);
    std::string vf = "# H vol_frac\n";
    std::string mx = "# H mx_avg\n";
    for (const auto& r : trace.steps) {
        const double h = abscissa(r, primary);
        put(vf, h);
        vf += ' ';
        put(vf, r.vol_frac);
        vf += '\n';
        put(mx, h);
        mx += ' ';
        put(mx, r.mean_m.x());
        mx += '\n';
    }
    write_file(dir / "volfrac_vs_H.dat", vf);
    write_file(dir / "mx_vs_H.dat", mx);
}

}  // namespace msm
