#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "qwm/fock.hpp"

namespace qwm {

struct CouplingConfig {
    double g = 0.0;   // impulse coupling strength, >= 0
    double phi = 0.0; // quadrature-family angle
};

struct WeakValue {
    Complex value;
};

// Hermitian with spectrum in [0, 1] (projector, possibly efficiency-scaled)
struct PostselectionOperator {
    Operator op;
};

PostselectionOperator make_postselection(const Operator& op);

struct ShiftRecord {
    double meter_dq = 0.0; // dq of the Gaussian meter preparation
    double delta_q = 0.0;
    double delta_p = 0.0;
};

struct AmplificationReport {
    double k_q = 0.0, k_p = 0.0;         // signal amplification: shift ratio with/without postselection
    double a_q = 0.0, a_p = 0.0;         // SNR amplification K*sqrt(P)
    double a_q_wv = 0.0, a_p_wv = 0.0;   // same, assembled from weak values (when supplied)
    double p_success = 0.0;
    double snr_q_without = 0.0, snr_q_with = 0.0;
    double snr_p_without = 0.0, snr_p_with = 0.0;
    long n_readouts = 0;
    bool k_q_defined = false, k_p_defined = false; // false when the unconditional shift vanishes
    bool wv_route_present = false;
};

enum class ValidityFlag { pass, warn, fail };

struct ValidityDiagnostics {
    double g_norm_a_dp = 0.0;
    double g_norm_b_dq = 0.0;
    double overlap = 0.0;  // |<psi_f|psi_i>| or sqrt(tr(Pi_f rho_s))
    double ratio_a = 0.0;  // g||A|| dp / overlap
    double ratio_b = 0.0;
    int cutoff = 0;        // truncation at which the operator norms were taken
    ValidityFlag flag = ValidityFlag::pass;
};

// exact U = exp(-i g (A'(x)p' + B'(x)q')) on sys (x) meter at the configured phi
Operator coupling_unitary(const CouplingConfig& cfg, const FockSpace& sys, const FockSpace& meter);

// generator g(A'(x)p' + B'(x)q') without exponentiation (for vector-path evolution)
Operator coupling_generator(const CouplingConfig& cfg, const FockSpace& sys, const FockSpace& meter);

// generalized weak value tr(Pi_f Omega rho)/tr(Pi_f rho); floor guards near-orthogonal selection
WeakValue weak_value(const PostselectionOperator& post, const Operator& obs,
                     const DensityOperator& pre, double floor = 1e-12);

// pure-state form <psi_f|Omega|psi_i>/<psi_f|psi_i>
Complex pure_weak_value(const StateVector& post, const Operator& obs, const StateVector& pre,
                        double floor = 1e-12);

// rho_d' = tr_s[Pi_f U (rho_s (x) rho_d) U†]; returns (unnormalized meter state, P = tr rho_d')
std::pair<DensityOperator, double> evolve_and_postselect(const Operator& u,
                                                         const DensityOperator& pre_sys,
                                                         const DensityOperator& meter,
                                                         const PostselectionOperator& post);

// conditional mean shift of M between prepared and postselected meter states
double pointer_shift_exact(const Operator& m, const DensityOperator& meter_out_unnormalized,
                           const DensityOperator& meter_in);

// first-order shifts with general meter moments and commutator expectation:
//   dq = 2g Im(B_w) var_q + g Re(A_w) <-i[q,p]> + g Im(A_w) cov_sym
//   dp = 2g Im(A_w) var_p - g Re(B_w) <-i[q,p]> + g Im(B_w) cov_sym
std::pair<double, double> pointer_shift_first_order(const WeakValue& a_w, const WeakValue& b_w,
                                                    const MeterMoments& mom, double g,
                                                    Complex commutator_qp);

// P ~= |ovl|^2 (1 + 2g <p> Im A_w + 2g <q> Im B_w)
double success_probability_first_order(double overlap_sq, const WeakValue& a_w,
                                       const WeakValue& b_w, double mean_p, double mean_q,
                                       double g);

struct NoPostselectionShifts {
    double dq_exact = 0.0, dp_exact = 0.0;
    double dq_fo = 0.0, dp_fo = 0.0; // g<A>, -g<B>
};

NoPostselectionShifts no_postselection_shifts(const DensityOperator& pre_sys,
                                              const DensityOperator& meter,
                                              const CouplingConfig& cfg);

// two-preparation inversion:
//   2g Im A_w = (dp1 - dp2)/(dp1^2 - dp2^2)   [meter spreads dp_i = 1/(2 dq_i)]
//   2g Im B_w = (dq1 - dq2)/(dq1^2 - dq2^2)
//   g Re A_w  = (dq1^2 dq_shift2 - dq2^2 dq_shift1)/(dq1^2 - dq2^2)
//   g Re B_w  = (dp2^2 dp_shift1 - dp1^2 dp_shift2)/(dp1^2 - dp2^2)
std::pair<WeakValue, WeakValue> recover_weak_values(const ShiftRecord& rec1,
                                                    const ShiftRecord& rec2, double g);

struct InversionResult {
    WeakValue a_w, b_w;
    double residual = 0.0; // rms misfit of the overdetermined solve
};

// least-squares over >= 2 records
InversionResult recover_weak_values_lsq(const std::vector<ShiftRecord>& records, double g);

ValidityDiagnostics validity_diagnostics(const CouplingConfig& cfg, const Operator& a,
                                         const Operator& b, const MeterMoments& mom,
                                         double overlap);

// inputs for the weak-value route to the SNR factors:
// a_q = [2 Im(B_w) var_q + Re(A_w)] / <A>_i * overlap, and the p analog
struct WeakValueRoute {
    WeakValue a_w, b_w;
    double mean_a = 0.0; // <A>_i
    double mean_b = 0.0;
    double overlap = 0.0;
};

// optional weak values enable the cross-checked weak-value route for the SNR factors
AmplificationReport amplification_report(double dq, double dp, double dq0, double dp0, double p,
                                         const MeterMoments& mom, long n_readouts,
                                         const std::optional<WeakValueRoute>& wv = std::nullopt);

} // namespace qwm
