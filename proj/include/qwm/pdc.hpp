#pragma once

#include <optional>
#include <string>
#include <utility>

#include "qwm/weak.hpp"

namespace qwm {

enum class PostselectMode { ideal_single_photon, threshold, threshold_with_efficiency };

// interferometric setup: modes s' and s carry the split coherent input,
// mode d is the meter; coupling acts on s (x) d, s' is a spectator
struct SetupConfig {
    Complex alpha{0.0, 0.0};
    double epsilon = 0.0; // beamsplitter bias, 0 < epsilon < 1
    double g = 0.0;
    double phi = 0.0;
    GaussianMeterSpec meter{};
    PostselectMode mode = PostselectMode::ideal_single_photon;
    double eta = 1.0;
    int cutoff_sprime = 8;
    int cutoff_s = 8;
    int cutoff_d = 24;
};

struct ClosedFormWeakValues {
    Complex a_w, b_w;
};

struct ExperimentReport {
    // closed-form tier
    ClosedFormWeakValues wv_closed{};
    double dq_closed = 0.0, dp_closed = 0.0;
    double p_closed = 0.0; // epsilon^2 |alpha|^2
    // numeric weak values on the Fock model
    Complex aw_numeric{}, bw_numeric{};
    // first-order tier (numeric weak values + meter moments)
    double dq_first_order = 0.0, dp_first_order = 0.0;
    double p_first_order = 0.0;
    // exact tier
    double dq_exact = 0.0, dp_exact = 0.0;
    double p_exact = 0.0;
    double dq0_exact = 0.0, dp0_exact = 0.0;
    double dq0_first_order = 0.0, dp0_first_order = 0.0;
    // overlap
    double overlap_abs = 0.0;    // numeric |<psi_f|psi_i>| (or generalized analog)
    double overlap_approx = 0.0; // epsilon |alpha|
    AmplificationReport amplification{};
    ValidityDiagnostics diagnostics{};
    bool exact_tier_present = false;
    std::string exact_tier_error; // never silently dropped: failures are flagged here
};

StateVector preselected_state(const SetupConfig& cfg);

// rank-1 projector onto (|1,0> - i|0,1>)/sqrt2 of s'(x)s
PostselectionOperator ideal_postselection(const FockSpace& sys2);

// eta (I - |0><0|) on the dark port, conjugated into the s',s basis by the 50-50 splitter
PostselectionOperator threshold_postselection(const FockSpace& sys2, double eta);

// ideal: A_w = -1/(2 e a) - a/2,  B_w = -i/(2 e a) + i a/2
// threshold: A_w = -1/(2 e a) - Re a,  B_w = -i/(2 e a) - i Im a
ClosedFormWeakValues closed_form_weak_values(const SetupConfig& cfg);

// dq = -(g/e)(Re a/|a|^2)(dq^2 + 1/2),  dp = (g/e)(Im a/|a|^2)(dp^2 + 1/2)
std::pair<double, double> predicted_shifts(const SetupConfig& cfg);

// closed-form amplification bookkeeping only (milliseconds at any parameters)
AmplificationReport closed_form_amplification(const SetupConfig& cfg, long n_readouts = 1);

// squeezed-regime gain formula dq^2/(epsilon |alpha|^2), valid when dq^2 >> 1/2
double squeezed_signal_gain(const SetupConfig& cfg);

// all tiers: closed form, numeric weak values + first order, exact evolution
ExperimentReport run_experiment(const SetupConfig& cfg, bool with_exact = true);

struct TwoPrepResult {
    WeakValue a_w, b_w;                 // recovered from exact shifts
    ClosedFormWeakValues truth;         // closed forms for the configured mode
    ShiftRecord rec1, rec2;             // the exact shift records fed to the inversion
};

TwoPrepResult two_prep_protocol(const SetupConfig& cfg, double dq1, double dq2);

} // namespace qwm
