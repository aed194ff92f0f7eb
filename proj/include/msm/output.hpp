#pragma once

#include "msm/evolution.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace msm {

class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Column names of trace.csv, in order.
const std::vector<std::string>& trace_columns();

/// One CSV row per record; `with_episode` appends the episode column.
std::string trace_csv(const std::vector<StepRecord>& records, bool with_episode = false);

/// Writes trace.csv (accepted steps) and trace_canceled.csv (backtracked segments).
void write_trace(const Trace& trace, const std::filesystem::path& dir);

/// Parsed numeric table of a trace.csv file.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& file);

struct SummaryStats {
    /// Field strength along the primary direction where the volume fraction
    /// first leaves its initial value by more than switching_threshold.
    double switching_field_up = 0.0;
    bool blocked = false;
    double loop_amplitude = 0.0;
    int loop_begin = 0;  // step indices of the last closed cycle
    int loop_end = 0;
    /// No closed cycle in the protocol; loop statistics use the whole trace.
    bool partial = false;
    double remanent_fraction = 0.0;
    bool has_remanent = false;
    /// Largest principal value of sym(A) at the first peak field.
    double spontaneous_strain = 0.0;
    double initial_fraction = 0.0;
    double max_fraction = 0.0;
    double max_offset_change = 0.0;
};

constexpr double switching_threshold = 0.01;

/// Statistics of the accepted trace. `primary` is the unit loading direction.
SummaryStats summarize(const Trace& trace, const Vec2& primary);
SummaryStats summarize(const Trace& trace, const SimulationConfig& config);

std::string summary_json(const SummaryStats& stats, const Trace& trace,
                         const SimulationConfig& config);

/// volfrac_vs_H.dat and mx_vs_H.dat: field along the primary direction, value.
/// Fields mostly across that direction are written as -|H|.
void emit_plot_data(const Trace& trace, const Vec2& primary, const std::filesystem::path& dir);

}  // namespace msm
