#include "qwm/pdc.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace qwm {

namespace {

const Complex kI{0.0, 1.0};
const double kSqrt2 = std::sqrt(2.0);

void validate_setup(const SetupConfig& cfg) {
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon < 1.0))
        throw std::invalid_argument("setup: epsilon must lie in [0, 1)");
    if (!(cfg.eta > 0.0 && cfg.eta <= 1.0))
        throw std::invalid_argument("setup: eta must lie in (0, 1]");
    if (cfg.g < 0.0 || !std::isfinite(cfg.g))
        throw std::invalid_argument("setup: g must be finite and >= 0");
    if (cfg.cutoff_sprime < 2 || cfg.cutoff_s < 2 || cfg.cutoff_d < 2)
        throw std::invalid_argument("setup: cutoffs must be >= 2");
    if (!(cfg.meter.dq > 0.0)) throw std::invalid_argument("setup: meter dq must be > 0");
    if (!std::isfinite(cfg.alpha.real()) || !std::isfinite(cfg.alpha.imag()))
        throw std::invalid_argument("setup: alpha must be finite");
}

double eta_of(const SetupConfig& cfg) {
    return cfg.mode == PostselectMode::threshold_with_efficiency ? cfg.eta : 1.0;
}

PostselectionOperator postselection_of(const SetupConfig& cfg, const FockSpace& sys2) {
    if (cfg.mode == PostselectMode::ideal_single_photon) return ideal_postselection(sys2);
    return threshold_postselection(sys2, eta_of(cfg));
}

// applies exp(-i (I_{s'} (x) H)) to the full-space vector without forming the
// big exponential: the vector is reshaped so each s' block is a column, and a
// scaled Taylor series is run on all blocks at once
void apply_factored_exponential(const Matrix& h, Vector& psi, int block_dim, int n_blocks) {
    double norm1 = h.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = norm1 > 0.5 ? static_cast<int>(std::ceil(std::log2(norm1 / 0.5))) : 0;
    Complex step = -kI / std::pow(2.0, squarings);
    Eigen::Map<Matrix> blocks(psi.data(), block_dim, n_blocks);
    for (int s = 0; s < (1 << squarings); ++s) {
        Matrix term = blocks;
        Matrix acc = blocks;
        for (int k = 1; k <= 80; ++k) {
            term = (step / double(k)) * (h * term).eval();
            acc += term;
            if (term.cwiseAbs().maxCoeff() <= 1e-16 * acc.cwiseAbs().maxCoeff()) break;
        }
        blocks = acc;
    }
}

struct ExactTier {
    double dq, dp, p;
    double dq0, dp0;
    DensityOperator meter_out; // unnormalized
};

ExactTier exact_pipeline(const SetupConfig& cfg, const StateVector& pre,
                         const StateVector& meter_state, const PostselectionOperator& post,
                         const FockSpace& s, const FockSpace& d) {
    int n_sp = cfg.cutoff_sprime, n_s = s.dim(), n_d = d.dim();
    Operator h_sd = coupling_generator({cfg.g, cfg.phi}, s, d);
    Vector psi = Eigen::kroneckerProduct(pre.v, meter_state.v).eval();
    apply_factored_exponential(h_sd.m, psi, n_s * n_d, n_sp);
    // rows = composite (s', s) index, columns = meter index
    Eigen::Map<Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        psi.data(), n_sp * n_s, n_d);
    Matrix rho_post = (m.adjoint() * (post.op.m * m)).conjugate();
    Matrix rho_nopost = (m.adjoint() * m).conjugate();
    ExactTier out{0, 0, 0, 0, 0, DensityOperator{}};
    out.p = rho_post.trace().real();
    if (out.p < -1e-10 || out.p > 1.0 + 1e-10)
        throw numerical_error("run_experiment: exact probability outside [0, 1]");
    rho_post = ((rho_post + rho_post.adjoint()) / 2.0).eval();
    rho_nopost = ((rho_nopost + rho_nopost.adjoint()) / 2.0).eval();
    out.meter_out = make_density(d, rho_post, false);
    DensityOperator meter_marginal = make_density(d, rho_nopost, false);
    DensityOperator meter_in = pure_density(meter_state);
    auto [qm, pm] = meter_quadratures(d, cfg.phi);
    out.dq = pointer_shift_exact(qm, out.meter_out, meter_in);
    out.dp = pointer_shift_exact(pm, out.meter_out, meter_in);
    out.dq0 = pointer_shift_exact(qm, meter_marginal, meter_in);
    out.dp0 = pointer_shift_exact(pm, meter_marginal, meter_in);
    return out;
}

} // namespace

StateVector preselected_state(const SetupConfig& cfg) {
    validate_setup(cfg);
    FockSpace sp = make_space(cfg.cutoff_sprime);
    FockSpace s = make_space(cfg.cutoff_s);
    Complex amp_sp = cfg.alpha * (1.0 - cfg.epsilon) / kSqrt2;
    Complex amp_s = kI * cfg.alpha * (1.0 + cfg.epsilon) / kSqrt2;
    return tensor({coherent_state(sp, amp_sp), coherent_state(s, amp_s)});
}

PostselectionOperator ideal_postselection(const FockSpace& sys2) {
    if (sys2.num_factors() != 2)
        throw std::invalid_argument("ideal_postselection: need a two-mode space");
    StateVector one_zero = basis_state(sys2, {1, 0});
    StateVector zero_one = basis_state(sys2, {0, 1});
    Vector psi_f = (one_zero.v - kI * zero_one.v) / kSqrt2;
    return make_postselection({sys2, psi_f * psi_f.adjoint()});
}

PostselectionOperator threshold_postselection(const FockSpace& sys2, double eta) {
    if (!(eta > 0.0 && eta <= 1.0))
        throw std::invalid_argument("threshold_postselection: eta must lie in (0, 1]");
    if (sys2.num_factors() != 2 || sys2.factors[0] != sys2.factors[1])
        throw std::invalid_argument("threshold_postselection: need two equal-cutoff modes");
    int n = sys2.factors[0];
    Operator bs = beamsplitter_5050(sys2, BeamsplitterConvention::symmetric_i);
    Matrix dark = Matrix::Identity(n, n);
    dark(0, 0) = 0.0; // at least one photon in the dark output port
    Matrix proj = Eigen::kroneckerProduct(dark, Matrix::Identity(n, n)).eval();
    Matrix m = eta * (bs.m.adjoint() * proj * bs.m);
    return make_postselection({sys2, m});
}

ClosedFormWeakValues closed_form_weak_values(const SetupConfig& cfg) {
    validate_setup(cfg);
    Complex ea = cfg.epsilon * cfg.alpha;
    if (std::abs(ea) <= 1e-300)
        throw singular_error("closed_form_weak_values: epsilon*alpha vanishes");
    Complex lead = -1.0 / (2.0 * ea);
    ClosedFormWeakValues out;
    if (cfg.mode == PostselectMode::ideal_single_photon) {
        out.a_w = lead - cfg.alpha / 2.0;
        out.b_w = kI * lead + kI * cfg.alpha / 2.0;
    } else {
        out.a_w = lead - cfg.alpha.real();
        out.b_w = kI * lead - kI * cfg.alpha.imag();
    }
    return out;
}

std::pair<double, double> predicted_shifts(const SetupConfig& cfg) {
    validate_setup(cfg);
    double a2 = std::norm(cfg.alpha);
    if (!(cfg.epsilon > 0.0) || a2 <= 0.0)
        throw singular_error("predicted_shifts: epsilon and alpha must be nonzero");
    double vq = cfg.meter.dq * cfg.meter.dq;
    double vp = cfg.meter.dp() * cfg.meter.dp();
    double dq = -(cfg.g / cfg.epsilon) * (cfg.alpha.real() / a2) * (vq + 0.5);
    double dp = (cfg.g / cfg.epsilon) * (cfg.alpha.imag() / a2) * (vp + 0.5);
    return {dq, dp};
}

AmplificationReport closed_form_amplification(const SetupConfig& cfg, long n_readouts) {
    validate_setup(cfg);
    double a2 = std::norm(cfg.alpha);
    if (!(cfg.epsilon > 0.0) || a2 <= 0.0)
        throw singular_error("closed_form_amplification: epsilon and alpha must be nonzero");
    auto [dq, dp] = predicted_shifts(cfg);
    // unconditional shifts in the interferometer variables: dq0 = -g Re(alpha), dp0 = g Im(alpha)
    double dq0 = -cfg.g * cfg.alpha.real();
    double dp0 = cfg.g * cfg.alpha.imag();
    double abs_a = std::abs(cfg.alpha);
    double overlap = cfg.epsilon * abs_a *
                     std::exp(-a2 * (1.0 + cfg.epsilon * cfg.epsilon) / 2.0);
    double p = eta_of(cfg) * overlap * overlap;
    MeterMoments mom;
    mom.var_q = cfg.meter.dq * cfg.meter.dq;
    mom.var_p = cfg.meter.dp() * cfg.meter.dp();
    mom.mean_q = cfg.meter.q0;
    mom.mean_p = cfg.meter.p0;
    ClosedFormWeakValues wv = closed_form_weak_values(cfg);
    // <A>_i = -sqrt2 Im(beta_s), <B>_i = sqrt2 Re(beta_s) with beta_s = i alpha(1+eps)/sqrt2
    Complex beta_s = kI * cfg.alpha * (1.0 + cfg.epsilon) / kSqrt2;
    WeakValueRoute route{WeakValue{wv.a_w}, WeakValue{wv.b_w}, -kSqrt2 * beta_s.imag(),
                         kSqrt2 * beta_s.real(), overlap};
    return amplification_report(dq, dp, dq0, dp0, p, mom, n_readouts, route);
}

double squeezed_signal_gain(const SetupConfig& cfg) {
    double a2 = std::norm(cfg.alpha);
    if (!(cfg.epsilon > 0.0) || a2 <= 0.0)
        throw singular_error("squeezed_signal_gain: epsilon and alpha must be nonzero");
    return cfg.meter.dq * cfg.meter.dq / (cfg.epsilon * a2);
}

ExperimentReport run_experiment(const SetupConfig& cfg, bool with_exact) {
    validate_setup(cfg);
    ExperimentReport rep;
    FockSpace sp = make_space(cfg.cutoff_sprime);
    FockSpace s = make_space(cfg.cutoff_s);
    FockSpace d = make_space(cfg.cutoff_d);
    FockSpace sys2 = product_space({sp, s});

    StateVector pre = preselected_state(cfg);
    StateVector meter_state = gaussian_meter_state(d, cfg.meter);
    PostselectionOperator post = postselection_of(cfg, sys2);

    // closed-form tier
    rep.wv_closed = closed_form_weak_values(cfg);
    std::tie(rep.dq_closed, rep.dp_closed) = predicted_shifts(cfg);
    rep.p_closed = cfg.epsilon * cfg.epsilon * std::norm(cfg.alpha);
    rep.overlap_approx = cfg.epsilon * std::abs(cfg.alpha);

    // numeric weak values of A = I (x) A_s, B = I (x) B_s
    auto [a_s, b_s] = system_quadratures(s, cfg.phi);
    Matrix eye_sp = Matrix::Identity(sp.dim(), sp.dim());
    Operator a_full = tensor({Operator{sp, eye_sp}, a_s});
    Operator b_full = tensor({Operator{sp, eye_sp}, b_s});
    DensityOperator rho_pre = pure_density(pre);
    double sel = ((post.op.m * rho_pre.m).trace()).real();
    if (sel <= 1e-12)
        throw singular_error("run_experiment: vanishing postselection probability at g=0");
    rep.overlap_abs = std::sqrt(sel / eta_of(cfg)); // efficiency does not affect validity
    rep.aw_numeric = weak_value(post, a_full, rho_pre).value;
    rep.bw_numeric = weak_value(post, b_full, rho_pre).value;

    // first-order tier with numeric weak values and the meter's own moments
    auto [qm, pm] = meter_quadratures(d, cfg.phi);
    MeterMoments mom = moments(meter_state, qm, pm);
    Complex comm = meter_state.v.dot((qm.m * pm.m - pm.m * qm.m) * meter_state.v);
    std::tie(rep.dq_first_order, rep.dp_first_order) = pointer_shift_first_order(
        WeakValue{rep.aw_numeric}, WeakValue{rep.bw_numeric}, mom, cfg.g, comm);
    rep.p_first_order =
        eta_of(cfg) * success_probability_first_order(rep.overlap_abs * rep.overlap_abs,
                                                      WeakValue{rep.aw_numeric},
                                                      WeakValue{rep.bw_numeric},
                                                      mom.mean_p, mom.mean_q, cfg.g);
    double mean_a = (a_s.m * partial_trace_keep_trailing(rho_pre, 1).m).trace().real();
    double mean_b = (b_s.m * partial_trace_keep_trailing(rho_pre, 1).m).trace().real();
    rep.dq0_first_order = cfg.g * mean_a;
    rep.dp0_first_order = -cfg.g * mean_b;

    rep.diagnostics = validity_diagnostics({cfg.g, cfg.phi}, a_full, b_full, mom,
                                           rep.overlap_abs);

    // exact tier
    double amp_dq = rep.dq_first_order, amp_dp = rep.dp_first_order;
    double amp_dq0 = rep.dq0_first_order, amp_dp0 = rep.dp0_first_order;
    double amp_p = rep.p_first_order;
    if (with_exact) {
        try {
            ExactTier exact = exact_pipeline(cfg, pre, meter_state, post, s, d);
            rep.dq_exact = exact.dq;
            rep.dp_exact = exact.dp;
            rep.p_exact = exact.p;
            rep.dq0_exact = exact.dq0;
            rep.dp0_exact = exact.dp0;
            rep.exact_tier_present = true;
            amp_dq = exact.dq;
            amp_dp = exact.dp;
            amp_dq0 = exact.dq0;
            amp_dp0 = exact.dp0;
            amp_p = exact.p;
        } catch (const error& e) {
            rep.exact_tier_present = false;
            rep.exact_tier_error = e.what();
        }
    } else {
        rep.exact_tier_error = "exact tier disabled";
    }

    WeakValueRoute route{WeakValue{rep.aw_numeric}, WeakValue{rep.bw_numeric}, mean_a, mean_b,
                         rep.overlap_abs};
    rep.amplification = amplification_report(amp_dq, amp_dp, amp_dq0, amp_dp0, amp_p, mom, 1,
                                             route);
    return rep;
}

TwoPrepResult two_prep_protocol(const SetupConfig& cfg, double dq1, double dq2) {
    if (std::abs(dq1 * dq1 - dq2 * dq2) <= 1e-9)
        throw singular_error("two_prep_protocol: coincident meter spreads");
    TwoPrepResult out;
    ShiftRecord* recs[2] = {&out.rec1, &out.rec2};
    double spreads[2] = {dq1, dq2};
    for (int k = 0; k < 2; ++k) {
        SetupConfig run_cfg = cfg;
        run_cfg.meter.dq = spreads[k];
        Complex beta{run_cfg.meter.q0 / kSqrt2, run_cfg.meter.p0 / kSqrt2};
        run_cfg.cutoff_d = std::max(cfg.cutoff_d, suggest_cutoff(beta, spreads[k]));
        ExperimentReport rep = run_experiment(run_cfg, true);
        if (!rep.exact_tier_present)
            throw truncation_error("two_prep_protocol: exact tier failed: " +
                                   rep.exact_tier_error);
        *recs[k] = ShiftRecord{spreads[k], rep.dq_exact, rep.dp_exact};
    }
    auto [a_w, b_w] = recover_weak_values(out.rec1, out.rec2, cfg.g);
    out.a_w = a_w;
    out.b_w = b_w;
    out.truth = closed_form_weak_values(cfg);
    return out;
}

} // namespace qwm
