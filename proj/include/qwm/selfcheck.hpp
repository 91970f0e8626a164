#pragma once

#include <string>
#include <vector>

namespace qwm {

struct CheckResult {
    std::string name;
    bool pass = false;
    double margin = 0.0; // tolerance minus observed deviation (negative on fail)
    std::string detail;
};

struct CheckOptions {
    int cutoff_s = 0; // 0 = per-check defaults; small forced values surface truncation failures
    int cutoff_d = 0;
    unsigned seed = 12345;
};

std::vector<CheckResult> run_self_checks(const CheckOptions& opts = {});

} // namespace qwm
