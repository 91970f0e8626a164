#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string("\"") + QWM_CLI_PATH + "\" " + args +
                      " > cli_stdout.tmp 2> cli_stderr.tmp";
    int rc = std::system(cmd.c_str());
    CliResult res;
    res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = slurp("cli_stdout.tmp");
    res.err = slurp("cli_stderr.tmp");
    return res;
}

bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return in.good();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

// CSV layout: comment line, header line, data rows
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Csv parse_csv(const std::string& text) {
    Csv csv;
    std::vector<std::string> ls = lines_of(text);
    REQUIRE(ls.size() >= 3);
    REQUIRE(ls[0].rfind("# schema=", 0) == 0);
    csv.header = split(ls[1], ',');
    for (std::size_t k = 2; k < ls.size(); ++k)
        if (!ls[k].empty()) csv.rows.push_back(split(ls[k], ','));
    return csv;
}

double cell(const Csv& csv, std::size_t row, const std::string& col) {
    for (std::size_t c = 0; c < csv.header.size(); ++c)
        if (csv.header[c] == col) {
            REQUIRE(row < csv.rows.size());
            REQUIRE(c < csv.rows[row].size());
            return std::stod(csv.rows[row][c]);
        }
    FAIL("missing column " << col);
    return 0.0;
}

std::string text_cell(const Csv& csv, std::size_t row, const std::string& col) {
    for (std::size_t c = 0; c < csv.header.size(); ++c)
        if (csv.header[c] == col) return csv.rows[row][c];
    FAIL("missing column " << col);
    return {};
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

} // namespace

TEST_CASE("run: headline amplification row") {
    CliResult res = run_cli("run --epsilon 0.01 --alpha-re 0.01 --g 1e-6");
    REQUIRE(res.code == 0);
    Csv csv = parse_csv(res.out);
    REQUIRE(csv.rows.size() == 1);
    CHECK(text_cell(csv, 0, "status") == "ok");
    double k_q = cell(csv, 0, "k_q");
    CHECK(std::abs(k_q - 1e6) / 1e6 < 0.03);
    double a_q = cell(csv, 0, "a_q");
    CHECK(std::abs(a_q - 100.0) < 5.0);
    CHECK(text_cell(csv, 0, "diag_flag") == "pass");
}

TEST_CASE("run: json format carries the schema") {
    CliResult res = run_cli("run --epsilon 0.01 --alpha-re 0.1 --g 1e-6 --format json");
    REQUIRE(res.code == 0);
    nlohmann::json doc = nlohmann::json::parse(res.out);
    CHECK(doc["schema"] == "qwm.report/1");
    CHECK(doc["config"]["epsilon"].get<double>() == doctest::Approx(0.01));
    REQUIRE(doc["points"].size() == 1);
    CHECK(doc["points"][0]["dq_exact"].is_number());
    CHECK(doc["points"][0]["dq_exact"].get<double>() == doctest::Approx(-1e-3).epsilon(0.01));
}

TEST_CASE("run: g=0 gives a zero-shift row") {
    CliResult res = run_cli("run --epsilon 0.01 --alpha-re 0.1 --g 0");
    REQUIRE(res.code == 0);
    Csv csv = parse_csv(res.out);
    CHECK(std::abs(cell(csv, 0, "dq_exact")) < 1e-12);
    CHECK(std::abs(cell(csv, 0, "dp_exact")) < 1e-12);
    CHECK(std::abs(cell(csv, 0, "dq_first_order")) < 1e-15);
    CHECK(text_cell(csv, 0, "status") == "ok");
}

TEST_CASE("run: error exit codes and output atomicity") {
    std::remove("cli_out.csv");

    write_file("cli_bad.json", "this is {{{ not json");
    CliResult bad = run_cli("run --config cli_bad.json --out cli_out.csv");
    CHECK(bad.code == 2);
    CHECK_FALSE(file_exists("cli_out.csv"));

    write_file("cli_unknown.json", "{\"bogus_key\": 1}");
    CliResult unknown = run_cli("run --config cli_unknown.json --out cli_out.csv");
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("bogus_key") != std::string::npos);
    CHECK_FALSE(file_exists("cli_out.csv"));

    CliResult missing = run_cli("run --config cli_no_such_file.json");
    CHECK(missing.code == 2);

    CliResult trunc = run_cli("run --epsilon 0.01 --alpha-re 2.5 --g 1e-6 --out cli_out.csv");
    CHECK(trunc.code == 3);
    CHECK_FALSE(file_exists("cli_out.csv"));

    CliResult sing = run_cli("run --epsilon 0 --alpha-re 0.1 --g 1e-6 --out cli_out.csv");
    CHECK(sing.code == 4);
    CHECK_FALSE(file_exists("cli_out.csv"));

    CliResult nodir = run_cli("run --epsilon 0.01 --alpha-re 0.1 --g 1e-6 "
                              "--out cli_missing_dir/report.csv");
    CHECK(nodir.code == 2);
}

TEST_CASE("run: deterministic output bytes") {
    std::string args = "run --epsilon 0.01 --alpha-re 0.1 --alpha-im 0.02 --g 1e-6";
    CliResult first = run_cli(args);
    CliResult second = run_cli(args);
    REQUIRE(first.code == 0);
    REQUIRE(second.code == 0);
    CHECK(first.out == second.out);
}

TEST_CASE("sweep: closed-form shift column scales as 1/epsilon") {
    CliResult res = run_cli("sweep --alpha-re 0.1 --g 1e-8 "
                            "--sweep epsilon:0.001:0.01:3:log");
    REQUIRE(res.code == 0);
    Csv csv = parse_csv(res.out);
    REQUIRE(csv.rows.size() == 3);
    double step = std::sqrt(10.0);
    for (int k = 0; k < 2; ++k) {
        double r_closed = cell(csv, k, "dq_closed") / cell(csv, k + 1, "dq_closed");
        CHECK(std::abs(r_closed - step) < 1e-9 * step);
        double r_k = cell(csv, k, "k_q") / cell(csv, k + 1, "k_q");
        CHECK(std::abs(r_k - step) / step < 0.02);
    }
    CHECK(cell(csv, 0, "epsilon") == doctest::Approx(0.001));
    CHECK(cell(csv, 2, "epsilon") == doctest::Approx(0.01));
}

TEST_CASE("sweep: single-point sweep equals the run row") {
    std::string common = "--epsilon 0.02 --alpha-re 0.1 --g 1e-6";
    CliResult run = run_cli("run " + common);
    CliResult sweep = run_cli("sweep --alpha-re 0.1 --g 1e-6 --sweep epsilon:0.02:0.02:1:lin");
    REQUIRE(run.code == 0);
    REQUIRE(sweep.code == 0);
    CHECK(run.out == sweep.out);
}

TEST_CASE("sweep: failed point is flagged in-row, sweep continues") {
    CliResult res = run_cli("sweep --alpha-re 0.1 --g 1e-6 --sweep epsilon:0:0.01:2:lin");
    REQUIRE(res.code == 0);
    Csv csv = parse_csv(res.out);
    REQUIRE(csv.rows.size() == 2);
    CHECK(text_cell(csv, 0, "status") == "error");
    CHECK_FALSE(text_cell(csv, 0, "error").empty());
    CHECK(text_cell(csv, 1, "status") == "ok");

    CliResult none = run_cli("sweep --alpha-re 0.1 --g 1e-6");
    CHECK(none.code == 2);
    CliResult many = run_cli("sweep --alpha-re 0.1 --g 1e-6 --sweep epsilon:0.01:0.02:2:lin "
                             "--sweep g:1e-7:1e-6:2:log --sweep phi:0:1:2:lin");
    CHECK(many.code == 2);
}

TEST_CASE("invert: recovery, residual, and singular input") {
    // records generated from the first-order forward formulas:
    // dq = 2g Im(B) dq^2 + g Re(A),  dp = 2g Im(A)/(4 dq^2) - g Re(B)
    double g = 1e-6;
    double re_a = -500.05, im_a = 12.0, re_b = 3.0, im_b = -499.95;
    std::ostringstream cfg;
    cfg << std::setprecision(17) << "{\"g\": " << g << ", \"records\": [";
    bool first = true;
    for (double dq : {0.70710678118654752, 0.4, 1.2}) {
        double vq = dq * dq, vp = 1.0 / (4.0 * vq);
        if (!first) cfg << ", ";
        first = false;
        cfg << "{\"meter_dq\": " << dq << ", \"delta_q\": " << 2 * g * im_b * vq + g * re_a
            << ", \"delta_p\": " << 2 * g * im_a * vp - g * re_b << "}";
    }
    cfg << "]}";
    write_file("cli_invert.json", cfg.str());

    CliResult res = run_cli("invert --config cli_invert.json");
    REQUIRE(res.code == 0);
    nlohmann::json doc = nlohmann::json::parse(res.out);
    CHECK(doc["schema"] == "qwm.invert/1");
    CHECK(doc["n_records"] == 3);
    CHECK(doc["aw_re"].get<double>() == doctest::Approx(re_a).epsilon(1e-9));
    CHECK(doc["aw_im"].get<double>() == doctest::Approx(im_a).epsilon(1e-9));
    CHECK(doc["bw_re"].get<double>() == doctest::Approx(re_b).epsilon(1e-9));
    CHECK(doc["bw_im"].get<double>() == doctest::Approx(im_b).epsilon(1e-9));
    CHECK(doc["residual"].get<double>() < 1e-12);

    write_file("cli_invert_eq.json",
               "{\"g\": 1e-6, \"records\": ["
               "{\"meter_dq\": 0.5, \"delta_q\": 1e-4, \"delta_p\": 1e-4},"
               "{\"meter_dq\": 0.5, \"delta_q\": 2e-4, \"delta_p\": 2e-4}]}");
    CliResult eq = run_cli("invert --config cli_invert_eq.json");
    CHECK(eq.code == 4);

    write_file("cli_invert_nog.json",
               "{\"records\": ["
               "{\"meter_dq\": 0.5, \"delta_q\": 1e-4, \"delta_p\": 1e-4},"
               "{\"meter_dq\": 0.7, \"delta_q\": 2e-4, \"delta_p\": 2e-4}]}");
    CliResult nog = run_cli("invert --config cli_invert_nog.json");
    CHECK(nog.code == 2);
}

TEST_CASE("check: all invariants pass at defaults, fail at forced small cutoffs") {
    CliResult ok = run_cli("check");
    CHECK(ok.code == 0);
    CHECK(ok.out.find("PASS ") != std::string::npos);
    CHECK(ok.out.find("FAIL") == std::string::npos);
    CHECK(ok.out.find("all checks passed") != std::string::npos);

    CliResult again = run_cli("check");
    CHECK(again.out == ok.out); // fixed seeds: deterministic

    CliResult forced = run_cli("check --cutoff-s 3 --cutoff-d 3");
    CHECK(forced.code == 5);
    CHECK(forced.out.find("FAIL") != std::string::npos);
}

TEST_CASE("bad invocations return the config exit code") {
    CliResult nosub = run_cli("");
    CHECK(nosub.code == 2);
    CliResult badflag = run_cli("run --no-such-flag 1");
    CHECK(badflag.code == 2);
    CliResult badaxis = run_cli("sweep --sweep epsilon:0.1:0.2:nonsense:lin");
    CHECK(badaxis.code == 2);
}
