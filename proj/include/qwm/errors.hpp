#pragma once

#include <stdexcept>
#include <string>

namespace qwm {

// exit codes shared by the CLI: 2 config, 3 numerical/truncation, 4 singular, 5 invariant
struct error : std::runtime_error {
    int exit_code;
    error(const std::string& msg, int code) : std::runtime_error(msg), exit_code(code) {}
};

struct config_error : error {
    explicit config_error(const std::string& msg) : error(msg, 2) {}
};

// truncated space too small for the requested construction
struct truncation_error : error {
    explicit truncation_error(const std::string& msg) : error(msg, 3) {}
};

// nominally-real quantity carries a large imaginary residue, non-finite entries, etc.
struct numerical_error : error {
    explicit numerical_error(const std::string& msg) : error(msg, 3) {}
};

// degenerate configuration: coincident meter spreads, vanishing postselection trace
struct singular_error : error {
    explicit singular_error(const std::string& msg) : error(msg, 4) {}
};

struct invariant_error : error {
    explicit invariant_error(const std::string& msg) : error(msg, 5) {}
};

} // namespace qwm
