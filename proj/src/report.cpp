#include "qwm/report.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace qwm {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v); // 17 significant digits
    return buf;
}

// JSON cannot carry non-finite numbers; encode them as strings for determinism
ordered_json jnum(double v) {
    if (std::isfinite(v)) return v;
    return fmt(v);
}

std::string sanitize(const std::string& text) {
    std::string out = text;
    for (char& c : out)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return out;
}

const char* mode_name(PostselectMode mode) {
    switch (mode) {
        case PostselectMode::ideal_single_photon: return "ideal";
        case PostselectMode::threshold: return "threshold";
        case PostselectMode::threshold_with_efficiency: return "threshold_with_efficiency";
    }
    return "?";
}

const char* flag_name(ValidityFlag flag) {
    switch (flag) {
        case ValidityFlag::pass: return "pass";
        case ValidityFlag::warn: return "warn";
        case ValidityFlag::fail: return "fail";
    }
    return "?";
}

PostselectMode parse_mode(const std::string& name) {
    if (name == "ideal" || name == "ideal_single_photon")
        return PostselectMode::ideal_single_photon;
    if (name == "threshold") return PostselectMode::threshold;
    if (name == "threshold_with_efficiency") return PostselectMode::threshold_with_efficiency;
    throw config_error("unknown postselect mode: " + name);
}

double as_number(const ordered_json& v, const std::string& key) {
    if (!v.is_number()) throw config_error("config key '" + key + "' must be a number");
    return v.get<double>();
}

int as_int(const ordered_json& v, const std::string& key) {
    if (!v.is_number_integer()) throw config_error("config key '" + key + "' must be an integer");
    return v.get<int>();
}

} // namespace

SweepAxis parse_sweep_axis(const std::string& text) {
    // AXIS:MIN:MAX:COUNT:lin|log
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 5) throw config_error("sweep axis must be AXIS:MIN:MAX:COUNT:lin|log");
    SweepAxis axis;
    axis.name = parts[0];
    try {
        axis.min = std::stod(parts[1]);
        axis.max = std::stod(parts[2]);
        axis.count = std::stoi(parts[3]);
    } catch (const std::exception&) {
        throw config_error("sweep axis has malformed numbers: " + text);
    }
    if (parts[4] == "lin") axis.log = false;
    else if (parts[4] == "log") axis.log = true;
    else throw config_error("sweep axis scale must be lin or log");
    if (axis.count < 1) throw config_error("sweep axis count must be >= 1");
    if (!std::isfinite(axis.min) || !std::isfinite(axis.max))
        throw config_error("sweep axis range must be finite");
    return axis;
}

const char* const kReportSchema = "qwm.report/1";

RunConfig parse_config_json(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw config_error(std::string("config parse: ") + e.what());
    }
    if (!doc.is_object()) throw config_error("config must be a JSON object");
    RunConfig cfg;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& key = it.key();
        const ordered_json& v = it.value();
        if (key == "epsilon") cfg.setup.epsilon = as_number(v, key);
        else if (key == "alpha_re") cfg.setup.alpha.real(as_number(v, key));
        else if (key == "alpha_im") cfg.setup.alpha.imag(as_number(v, key));
        else if (key == "g") { cfg.setup.g = as_number(v, key); cfg.g_explicit = true; }
        else if (key == "phi") cfg.setup.phi = as_number(v, key);
        else if (key == "meter_dq") cfg.setup.meter.dq = as_number(v, key);
        else if (key == "meter_q0") cfg.setup.meter.q0 = as_number(v, key);
        else if (key == "meter_p0") cfg.setup.meter.p0 = as_number(v, key);
        else if (key == "postselect") {
            if (!v.is_string()) throw config_error("config key 'postselect' must be a string");
            cfg.setup.mode = parse_mode(v.get<std::string>());
        } else if (key == "eta") cfg.setup.eta = as_number(v, key);
        else if (key == "cutoff_s") cfg.setup.cutoff_s = as_int(v, key);
        else if (key == "cutoff_sprime") cfg.setup.cutoff_sprime = as_int(v, key);
        else if (key == "cutoff_d") cfg.setup.cutoff_d = as_int(v, key);
        else if (key == "format") {
            if (!v.is_string()) throw config_error("config key 'format' must be a string");
            std::string f = v.get<std::string>();
            if (f == "csv") cfg.format = ReportFormat::csv;
            else if (f == "json") cfg.format = ReportFormat::json;
            else throw config_error("format must be csv or json");
        } else if (key == "out") {
            if (!v.is_string()) throw config_error("config key 'out' must be a string");
            cfg.out_path = v.get<std::string>();
        } else if (key == "sweep") {
            if (!v.is_array()) throw config_error("config key 'sweep' must be an array");
            for (const auto& s : v) {
                if (!s.is_string()) throw config_error("sweep entries must be strings");
                cfg.axes.push_back(parse_sweep_axis(s.get<std::string>()));
            }
        } else if (key == "records") {
            if (!v.is_array()) throw config_error("config key 'records' must be an array");
            for (const auto& r : v) {
                if (!r.is_object()) throw config_error("records entries must be objects");
                ShiftRecord rec;
                if (!r.contains("meter_dq") || !r.contains("delta_q") || !r.contains("delta_p"))
                    throw config_error("record needs meter_dq, delta_q, delta_p");
                rec.meter_dq = as_number(r.at("meter_dq"), "records.meter_dq");
                rec.delta_q = as_number(r.at("delta_q"), "records.delta_q");
                rec.delta_p = as_number(r.at("delta_p"), "records.delta_p");
                cfg.records.push_back(rec);
            }
        } else {
            throw config_error("unknown config key: " + key);
        }
    }
    // a plain "threshold" with eta < 1 means efficiency-scaled threshold detection
    if (cfg.setup.mode == PostselectMode::threshold && cfg.setup.eta < 1.0)
        cfg.setup.mode = PostselectMode::threshold_with_efficiency;
    return cfg;
}

void apply_axis_value(SetupConfig& setup, const std::string& axis, double value) {
    if (axis == "epsilon") setup.epsilon = value;
    else if (axis == "g") setup.g = value;
    else if (axis == "alpha-re") setup.alpha.real(value);
    else if (axis == "alpha-im") setup.alpha.imag(value);
    else if (axis == "phi") setup.phi = value;
    else if (axis == "meter-dq") setup.meter.dq = value;
    else if (axis == "meter-q0") setup.meter.q0 = value;
    else if (axis == "meter-p0") setup.meter.p0 = value;
    else if (axis == "eta") setup.eta = value;
    else throw config_error("unknown sweep axis: " + axis);
}

std::vector<double> axis_values(const SweepAxis& axis) {
    std::vector<double> out;
    if (axis.count == 1) {
        out.push_back(axis.min);
        return out;
    }
    if (axis.log && (axis.min <= 0.0 || axis.max <= 0.0))
        throw config_error("log sweep needs positive endpoints");
    for (int k = 0; k < axis.count; ++k) {
        double t = double(k) / double(axis.count - 1);
        out.push_back(axis.log ? axis.min * std::pow(axis.max / axis.min, t)
                               : axis.min + (axis.max - axis.min) * t);
    }
    return out;
}

static const char* const kColumns[] = {
    "point", "epsilon", "alpha_re", "alpha_im", "g", "phi", "meter_dq", "meter_q0", "meter_p0",
    "postselect", "eta", "cutoff_sprime", "cutoff_s", "cutoff_d", "overlap_abs", "overlap_approx",
    "aw_closed_re", "aw_closed_im", "bw_closed_re", "bw_closed_im", "aw_numeric_re",
    "aw_numeric_im", "bw_numeric_re", "bw_numeric_im", "dq_closed", "dp_closed",
    "dq_first_order", "dp_first_order", "dq_exact", "dp_exact", "dq0_first_order",
    "dp0_first_order", "dq0_exact", "dp0_exact", "p_closed", "p_first_order", "p_exact", "k_q",
    "k_p", "a_q", "a_p", "a_q_wv", "a_p_wv", "snr_q_without", "snr_q_with", "snr_p_without",
    "snr_p_with", "diag_g_norm_a_dp", "diag_g_norm_b_dq", "diag_ratio_a", "diag_ratio_b",
    "diag_flag", "status", "error"};

std::string render_report_csv(const std::vector<ReportPoint>& points) {
    std::ostringstream os;
    os << "# schema=" << kReportSchema << "\n";
    for (std::size_t c = 0; c < std::size(kColumns); ++c)
        os << (c ? "," : "") << kColumns[c];
    os << "\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const ReportPoint& pt = points[i];
        const SetupConfig& s = pt.setup;
        const ExperimentReport& r = pt.report;
        bool ex = r.exact_tier_present;
        std::vector<std::string> cells;
        cells.push_back(std::to_string(i));
        for (double v : {s.epsilon, s.alpha.real(), s.alpha.imag(), s.g, s.phi, s.meter.dq,
                         s.meter.q0, s.meter.p0})
            cells.push_back(fmt(v));
        cells.push_back(mode_name(s.mode));
        cells.push_back(fmt(s.eta));
        cells.push_back(std::to_string(s.cutoff_sprime));
        cells.push_back(std::to_string(s.cutoff_s));
        cells.push_back(std::to_string(s.cutoff_d));
        for (double v : {r.overlap_abs, r.overlap_approx, r.wv_closed.a_w.real(),
                         r.wv_closed.a_w.imag(), r.wv_closed.b_w.real(), r.wv_closed.b_w.imag(),
                         r.aw_numeric.real(), r.aw_numeric.imag(), r.bw_numeric.real(),
                         r.bw_numeric.imag(), r.dq_closed, r.dp_closed, r.dq_first_order,
                         r.dp_first_order, ex ? r.dq_exact : nan, ex ? r.dp_exact : nan,
                         r.dq0_first_order, r.dp0_first_order, ex ? r.dq0_exact : nan,
                         ex ? r.dp0_exact : nan, r.p_closed, r.p_first_order,
                         ex ? r.p_exact : nan, r.amplification.k_q, r.amplification.k_p,
                         r.amplification.a_q, r.amplification.a_p, r.amplification.a_q_wv,
                         r.amplification.a_p_wv, r.amplification.snr_q_without,
                         r.amplification.snr_q_with, r.amplification.snr_p_without,
                         r.amplification.snr_p_with, r.diagnostics.g_norm_a_dp,
                         r.diagnostics.g_norm_b_dq, r.diagnostics.ratio_a, r.diagnostics.ratio_b})
            cells.push_back(fmt(v));
        cells.push_back(flag_name(r.diagnostics.flag));
        cells.push_back(sanitize(pt.status));
        cells.push_back(sanitize(!pt.error.empty() ? pt.error : r.exact_tier_error));
        for (std::size_t c = 0; c < cells.size(); ++c) os << (c ? "," : "") << cells[c];
        os << "\n";
    }
    return os.str();
}

std::string render_report_json(const RunConfig& cfg, const std::vector<ReportPoint>& points) {
    ordered_json doc;
    doc["schema"] = kReportSchema;
    ordered_json jc;
    jc["epsilon"] = jnum(cfg.setup.epsilon);
    jc["alpha_re"] = jnum(cfg.setup.alpha.real());
    jc["alpha_im"] = jnum(cfg.setup.alpha.imag());
    jc["g"] = jnum(cfg.setup.g);
    jc["phi"] = jnum(cfg.setup.phi);
    jc["meter_dq"] = jnum(cfg.setup.meter.dq);
    jc["meter_q0"] = jnum(cfg.setup.meter.q0);
    jc["meter_p0"] = jnum(cfg.setup.meter.p0);
    jc["postselect"] = mode_name(cfg.setup.mode);
    jc["eta"] = jnum(cfg.setup.eta);
    jc["cutoff_sprime"] = cfg.setup.cutoff_sprime;
    jc["cutoff_s"] = cfg.setup.cutoff_s;
    jc["cutoff_d"] = cfg.setup.cutoff_d;
    ordered_json jaxes = ordered_json::array();
    for (const auto& axis : cfg.axes) {
        ordered_json ja;
        ja["name"] = axis.name;
        ja["min"] = jnum(axis.min);
        ja["max"] = jnum(axis.max);
        ja["count"] = axis.count;
        ja["scale"] = axis.log ? "log" : "lin";
        jaxes.push_back(ja);
    }
    jc["sweep"] = jaxes;
    doc["config"] = jc;
    ordered_json jpoints = ordered_json::array();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& pt : points) {
        const ExperimentReport& r = pt.report;
        bool ex = r.exact_tier_present;
        ordered_json jp;
        jp["epsilon"] = jnum(pt.setup.epsilon);
        jp["alpha_re"] = jnum(pt.setup.alpha.real());
        jp["alpha_im"] = jnum(pt.setup.alpha.imag());
        jp["g"] = jnum(pt.setup.g);
        jp["phi"] = jnum(pt.setup.phi);
        jp["meter_dq"] = jnum(pt.setup.meter.dq);
        jp["meter_q0"] = jnum(pt.setup.meter.q0);
        jp["meter_p0"] = jnum(pt.setup.meter.p0);
        jp["postselect"] = mode_name(pt.setup.mode);
        jp["eta"] = jnum(pt.setup.eta);
        jp["overlap_abs"] = jnum(r.overlap_abs);
        jp["overlap_approx"] = jnum(r.overlap_approx);
        jp["aw_closed"] = {jnum(r.wv_closed.a_w.real()), jnum(r.wv_closed.a_w.imag())};
        jp["bw_closed"] = {jnum(r.wv_closed.b_w.real()), jnum(r.wv_closed.b_w.imag())};
        jp["aw_numeric"] = {jnum(r.aw_numeric.real()), jnum(r.aw_numeric.imag())};
        jp["bw_numeric"] = {jnum(r.bw_numeric.real()), jnum(r.bw_numeric.imag())};
        jp["dq_closed"] = jnum(r.dq_closed);
        jp["dp_closed"] = jnum(r.dp_closed);
        jp["dq_first_order"] = jnum(r.dq_first_order);
        jp["dp_first_order"] = jnum(r.dp_first_order);
        jp["dq_exact"] = jnum(ex ? r.dq_exact : nan);
        jp["dp_exact"] = jnum(ex ? r.dp_exact : nan);
        jp["dq0_first_order"] = jnum(r.dq0_first_order);
        jp["dp0_first_order"] = jnum(r.dp0_first_order);
        jp["dq0_exact"] = jnum(ex ? r.dq0_exact : nan);
        jp["dp0_exact"] = jnum(ex ? r.dp0_exact : nan);
        jp["p_closed"] = jnum(r.p_closed);
        jp["p_first_order"] = jnum(r.p_first_order);
        jp["p_exact"] = jnum(ex ? r.p_exact : nan);
        jp["k_q"] = jnum(r.amplification.k_q);
        jp["k_p"] = jnum(r.amplification.k_p);
        jp["a_q"] = jnum(r.amplification.a_q);
        jp["a_p"] = jnum(r.amplification.a_p);
        jp["a_q_wv"] = jnum(r.amplification.a_q_wv);
        jp["a_p_wv"] = jnum(r.amplification.a_p_wv);
        jp["snr_q_without"] = jnum(r.amplification.snr_q_without);
        jp["snr_q_with"] = jnum(r.amplification.snr_q_with);
        jp["snr_p_without"] = jnum(r.amplification.snr_p_without);
        jp["snr_p_with"] = jnum(r.amplification.snr_p_with);
        jp["diag_g_norm_a_dp"] = jnum(r.diagnostics.g_norm_a_dp);
        jp["diag_g_norm_b_dq"] = jnum(r.diagnostics.g_norm_b_dq);
        jp["diag_ratio_a"] = jnum(r.diagnostics.ratio_a);
        jp["diag_ratio_b"] = jnum(r.diagnostics.ratio_b);
        jp["diag_flag"] = flag_name(r.diagnostics.flag);
        jp["status"] = pt.status;
        jp["error"] = !pt.error.empty() ? pt.error : r.exact_tier_error;
        jpoints.push_back(jp);
    }
    doc["points"] = jpoints;
    return doc.dump(2) + "\n";
}

std::string render_inversion_json(const InversionResult& result, std::size_t n_records,
                                  double g) {
    ordered_json doc;
    doc["schema"] = "qwm.invert/1";
    doc["g"] = jnum(g);
    doc["n_records"] = n_records;
    doc["aw_re"] = jnum(result.a_w.value.real());
    doc["aw_im"] = jnum(result.a_w.value.imag());
    doc["bw_re"] = jnum(result.b_w.value.real());
    doc["bw_im"] = jnum(result.b_w.value.imag());
    doc["residual"] = jnum(result.residual);
    return doc.dump(2) + "\n";
}

void write_atomic(const std::string& path, const std::string& payload) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw config_error("cannot open output file: " + tmp);
        out << payload;
        out.flush();
        if (!out) {
            std::remove(tmp.c_str());
            throw config_error("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw config_error("rename failed: " + path + " (" + std::strerror(errno) + ")");
    }
}

} // namespace qwm
