#pragma once

#include <string>
#include <vector>

#include "qwm/pdc.hpp"

namespace qwm {

struct SweepAxis {
    std::string name; // epsilon | g | alpha-re | alpha-im | phi | meter-dq | meter-q0 | meter-p0 | eta
    double min = 0.0;
    double max = 0.0;
    int count = 1;
    bool log = false;
};

enum class ReportFormat { csv, json };

struct RunConfig {
    SetupConfig setup{};
    std::vector<SweepAxis> axes; // 0..2
    std::string out_path;        // empty: stdout
    ReportFormat format = ReportFormat::csv;
    std::vector<ShiftRecord> records; // invert input
    bool g_explicit = false;          // invert requires g supplied somewhere
};

// one sweep/run grid point; error text set when the point failed
struct ReportPoint {
    SetupConfig setup{};
    ExperimentReport report{};
    std::string status = "ok";
    std::string error;
};

extern const char* const kReportSchema; // column set is a function of this version only

RunConfig parse_config_json(const std::string& text);

SweepAxis parse_sweep_axis(const std::string& text); // AXIS:MIN:MAX:COUNT:lin|log

void apply_axis_value(SetupConfig& setup, const std::string& axis, double value);

std::vector<double> axis_values(const SweepAxis& axis);

std::string render_report_csv(const std::vector<ReportPoint>& points);
std::string render_report_json(const RunConfig& cfg, const std::vector<ReportPoint>& points);

std::string render_inversion_json(const InversionResult& result, std::size_t n_records, double g);

// write to tmp in the target directory, then rename; no partial files on failure
void write_atomic(const std::string& path, const std::string& payload);

} // namespace qwm
