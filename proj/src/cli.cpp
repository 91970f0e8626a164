#include "qwm/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "qwm/report.hpp"
#include "qwm/selfcheck.hpp"

namespace qwm {

namespace {

struct Overrides {
    std::string config_path;
    std::string out_path;
    std::string format;
    std::optional<int> cutoff_s, cutoff_d;
    std::optional<double> g, epsilon, alpha_re, alpha_im, phi;
    std::optional<double> meter_dq, meter_q0, meter_p0, eta;
    std::string postselect;
    std::vector<std::string> sweeps;
    std::optional<int> check_cutoff_s, check_cutoff_d;
    std::optional<unsigned> seed;
};

void add_common_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "JSON config file");
    cmd->add_option("--out", ov.out_path, "output file (default: stdout)");
    cmd->add_option("--format", ov.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--cutoff-s", ov.cutoff_s, "system mode cutoffs (s' and s)");
    cmd->add_option("--cutoff-d", ov.cutoff_d, "meter mode cutoff");
    cmd->add_option("--g", ov.g, "coupling strength");
    cmd->add_option("--epsilon", ov.epsilon, "beamsplitter bias");
    cmd->add_option("--alpha-re", ov.alpha_re, "Re(alpha)");
    cmd->add_option("--alpha-im", ov.alpha_im, "Im(alpha)");
    cmd->add_option("--phi", ov.phi, "quadrature family angle");
    cmd->add_option("--meter-dq", ov.meter_dq, "meter q spread");
    cmd->add_option("--meter-q0", ov.meter_q0, "meter q offset");
    cmd->add_option("--meter-p0", ov.meter_p0, "meter p offset");
    cmd->add_option("--postselect", ov.postselect, "ideal|threshold")
        ->check(CLI::IsMember({"ideal", "threshold", "threshold_with_efficiency"}));
    cmd->add_option("--eta", ov.eta, "detector efficiency");
}

RunConfig build_config(const Overrides& ov) {
    RunConfig cfg;
    if (!ov.config_path.empty()) {
        std::ifstream in(ov.config_path, std::ios::binary);
        if (!in) throw config_error("cannot read config file: " + ov.config_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        cfg = parse_config_json(buf.str());
    }
    if (ov.cutoff_s) {
        cfg.setup.cutoff_s = *ov.cutoff_s;
        cfg.setup.cutoff_sprime = *ov.cutoff_s;
    }
    if (ov.cutoff_d) cfg.setup.cutoff_d = *ov.cutoff_d;
    if (ov.g) { cfg.setup.g = *ov.g; cfg.g_explicit = true; }
    if (ov.epsilon) cfg.setup.epsilon = *ov.epsilon;
    if (ov.alpha_re) cfg.setup.alpha.real(*ov.alpha_re);
    if (ov.alpha_im) cfg.setup.alpha.imag(*ov.alpha_im);
    if (ov.phi) cfg.setup.phi = *ov.phi;
    if (ov.meter_dq) cfg.setup.meter.dq = *ov.meter_dq;
    if (ov.meter_q0) cfg.setup.meter.q0 = *ov.meter_q0;
    if (ov.meter_p0) cfg.setup.meter.p0 = *ov.meter_p0;
    if (ov.eta) cfg.setup.eta = *ov.eta;
    if (!ov.postselect.empty()) {
        if (ov.postselect == "ideal") cfg.setup.mode = PostselectMode::ideal_single_photon;
        else if (ov.postselect == "threshold")
            cfg.setup.mode = cfg.setup.eta < 1.0 ? PostselectMode::threshold_with_efficiency
                                                 : PostselectMode::threshold;
        else cfg.setup.mode = PostselectMode::threshold_with_efficiency;
    }
    if (!ov.out_path.empty()) cfg.out_path = ov.out_path;
    if (!ov.format.empty()) cfg.format = ov.format == "json" ? ReportFormat::json
                                                             : ReportFormat::csv;
    for (const auto& s : ov.sweeps) cfg.axes.push_back(parse_sweep_axis(s));
    return cfg;
}

void emit(const RunConfig& cfg, const std::string& payload) {
    if (cfg.out_path.empty())
        std::cout << payload;
    else
        write_atomic(cfg.out_path, payload);
}

int cmd_run(const Overrides& ov) {
    RunConfig cfg = build_config(ov);
    if (!cfg.axes.empty()) throw config_error("run takes no sweep axes; use the sweep command");
    ReportPoint pt;
    pt.setup = cfg.setup;
    pt.report = run_experiment(cfg.setup, true);
    std::vector<ReportPoint> points{pt};
    emit(cfg, cfg.format == ReportFormat::json ? render_report_json(cfg, points)
                                               : render_report_csv(points));
    return 0;
}

int cmd_sweep(const Overrides& ov) {
    RunConfig cfg = build_config(ov);
    if (cfg.axes.empty() || cfg.axes.size() > 2)
        throw config_error("sweep needs 1 or 2 axes (--sweep AXIS:MIN:MAX:COUNT:lin|log)");
    std::vector<std::vector<double>> grids;
    for (const auto& axis : cfg.axes) grids.push_back(axis_values(axis));
    std::vector<ReportPoint> points;
    std::vector<int> idx(cfg.axes.size(), 0);
    // outer-to-inner nesting in the order the axes were given
    auto run_point = [&](const std::vector<int>& at) {
        ReportPoint pt;
        pt.setup = cfg.setup;
        for (std::size_t a = 0; a < cfg.axes.size(); ++a)
            apply_axis_value(pt.setup, cfg.axes[a].name, grids[a][at[a]]);
        try {
            pt.report = run_experiment(pt.setup, true);
        } catch (const error& e) {
            pt.status = "error";
            pt.error = e.what();
        } catch (const std::invalid_argument& e) {
            pt.status = "error";
            pt.error = e.what();
        }
        points.push_back(std::move(pt));
    };
    if (cfg.axes.size() == 1) {
        for (int i = 0; i < (int)grids[0].size(); ++i) run_point({i});
    } else {
        for (int i = 0; i < (int)grids[0].size(); ++i)
            for (int j = 0; j < (int)grids[1].size(); ++j) run_point({i, j});
    }
    emit(cfg, cfg.format == ReportFormat::json ? render_report_json(cfg, points)
                                               : render_report_csv(points));
    return 0;
}

int cmd_invert(const Overrides& ov) {
    RunConfig cfg = build_config(ov);
    if (cfg.records.size() < 2)
        throw config_error("invert needs >= 2 records with distinct meter_dq in the config");
    if (!cfg.g_explicit || !(cfg.setup.g > 0.0))
        throw config_error("invert needs g > 0 (config key or --g)");
    InversionResult result = recover_weak_values_lsq(cfg.records, cfg.setup.g);
    emit(cfg, render_inversion_json(result, cfg.records.size(), cfg.setup.g));
    return 0;
}

int cmd_check(const Overrides& ov) {
    CheckOptions opts;
    if (ov.cutoff_s) opts.cutoff_s = *ov.cutoff_s;
    if (ov.cutoff_d) opts.cutoff_d = *ov.cutoff_d;
    if (ov.seed) opts.seed = *ov.seed;
    std::vector<CheckResult> results = run_self_checks(opts);
    bool all_pass = true;
    for (const auto& res : results) {
        std::cout << (res.pass ? "PASS" : "FAIL") << " " << res.name << " margin=" << res.margin
                  << " (" << res.detail << ")\n";
        all_pass = all_pass && res.pass;
    }
    std::cout << (all_pass ? "all checks passed" : "some checks FAILED") << "\n";
    return all_pass ? 0 : 5;
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"joint weak-measurement simulator (truncated Fock spaces)"};
    app.require_subcommand(1);
    Overrides ov;

    CLI::App* run = app.add_subcommand("run", "single experiment, all tiers");
    add_common_flags(run, ov);

    CLI::App* sweep = app.add_subcommand("sweep", "grid of experiments");
    add_common_flags(sweep, ov);
    sweep->add_option("--sweep", ov.sweeps, "axis spec AXIS:MIN:MAX:COUNT:lin|log (max 2)");

    CLI::App* invert = app.add_subcommand("invert", "recover weak values from shift records");
    add_common_flags(invert, ov);

    CLI::App* check = app.add_subcommand("check", "run invariant self-checks");
    check->add_option("--cutoff-s", ov.check_cutoff_s, "force system cutoff");
    check->add_option("--cutoff-d", ov.check_cutoff_d, "force meter cutoff");
    check->add_option("--seed", ov.seed, "RNG seed for randomized checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(ov);
        if (sweep->parsed()) return cmd_sweep(ov);
        if (invert->parsed()) return cmd_invert(ov);
        if (check->parsed()) {
            Overrides cov = ov;
            cov.cutoff_s = ov.check_cutoff_s;
            cov.cutoff_d = ov.check_cutoff_d;
            return cmd_check(cov);
        }
        return 2;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace qwm
