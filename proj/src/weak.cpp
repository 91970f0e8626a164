#include "qwm/weak.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace qwm {

namespace {

const Complex kI{0.0, 1.0};
const double kInf = std::numeric_limits<double>::infinity();
const double kNan = std::numeric_limits<double>::quiet_NaN();

double real_checked(Complex z, const char* what, double tol = 1e-10) {
    if (std::abs(z.imag()) > tol * std::max(1.0, std::abs(z))) {
        std::ostringstream os;
        os << what << ": imaginary residue " << z.imag();
        throw numerical_error(os.str());
    }
    return z.real();
}

} // namespace

PostselectionOperator make_postselection(const Operator& op) {
    double scale = std::max(1.0, op.m.cwiseAbs().maxCoeff());
    if ((op.m - op.m.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw numerical_error("postselection operator: not Hermitian within tolerance");
    Eigen::SelfAdjointEigenSolver<Matrix> es(op.m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 || es.eigenvalues().maxCoeff() > 1.0 + 1e-10)
        throw numerical_error("postselection operator: spectrum outside [0, 1]");
    return {op};
}

Operator coupling_generator(const CouplingConfig& cfg, const FockSpace& sys,
                            const FockSpace& meter) {
    auto [aprime, bprime] = system_quadratures(sys, cfg.phi);
    auto [qprime, pprime] = meter_quadratures(meter, cfg.phi);
    Operator ap = tensor({aprime, pprime});
    Operator bq = tensor({bprime, qprime});
    return {ap.space, cfg.g * (ap.m + bq.m)};
}

Operator coupling_unitary(const CouplingConfig& cfg, const FockSpace& sys,
                          const FockSpace& meter) {
    if (cfg.g < 0.0 || !std::isfinite(cfg.g))
        throw std::invalid_argument("coupling_unitary: g must be finite and >= 0");
    Operator gen = coupling_generator(cfg, sys, meter);
    return matrix_exponential({gen.space, -kI * gen.m});
}

WeakValue weak_value(const PostselectionOperator& post, const Operator& obs,
                     const DensityOperator& pre, double floor) {
    if (post.op.space != pre.space || obs.space != pre.space)
        throw std::invalid_argument("weak_value: space mismatch");
    Complex denom = (post.op.m * pre.m).trace();
    if (std::abs(denom) <= floor)
        throw singular_error("weak_value: near-orthogonal pre/post selection");
    Complex numer = (post.op.m * obs.m * pre.m).trace();
    return {numer / denom};
}

Complex pure_weak_value(const StateVector& post, const Operator& obs, const StateVector& pre,
                        double floor) {
    Complex denom = post.v.dot(pre.v); // Eigen dot conjugates the left argument
    if (std::abs(denom) <= floor)
        throw singular_error("pure_weak_value: near-orthogonal pre/post selection");
    return post.v.dot(obs.m * pre.v) / denom;
}

std::pair<DensityOperator, double> evolve_and_postselect(const Operator& u,
                                                         const DensityOperator& pre_sys,
                                                         const DensityOperator& meter,
                                                         const PostselectionOperator& post) {
    FockSpace full = product_space({pre_sys.space, meter.space});
    if (u.space.dim() != full.dim() || post.op.space != pre_sys.space)
        throw std::invalid_argument("evolve_and_postselect: dimension mismatch");
    Matrix rho = Eigen::kroneckerProduct(pre_sys.m, meter.m).eval();
    Matrix evolved = u.m * rho * u.m.adjoint();
    Matrix eye_d = Matrix::Identity(meter.space.dim(), meter.space.dim());
    Matrix weighted =
        Eigen::kroneckerProduct(post.op.m, eye_d).eval() * evolved;
    DensityOperator full_out{full, weighted, false};
    DensityOperator meter_out =
        partial_trace_keep_trailing(full_out, meter.space.num_factors());
    double p = real_checked(meter_out.m.trace(), "evolve_and_postselect probability");
    if (p < -1e-10 || p > 1.0 + 1e-10)
        throw numerical_error("evolve_and_postselect: probability outside [0, 1]");
    // symmetrize away the tiny anti-Hermitian residue of tr_s[(Pi x I) rho']
    meter_out.m = ((meter_out.m + meter_out.m.adjoint()) / 2.0).eval();
    return {make_density(meter_out.space, meter_out.m, false), p};
}

double pointer_shift_exact(const Operator& m, const DensityOperator& meter_out_unnormalized,
                           const DensityOperator& meter_in) {
    double tr_out = real_checked(meter_out_unnormalized.m.trace(), "pointer_shift_exact trace");
    if (tr_out <= 1e-12)
        throw singular_error("pointer_shift_exact: vanishing postselection trace");
    double tr_in = real_checked(meter_in.m.trace(), "pointer_shift_exact input trace");
    double out = real_checked((m.m * meter_out_unnormalized.m).trace(), "pointer_shift_exact <M>'") / tr_out;
    double in = real_checked((m.m * meter_in.m).trace(), "pointer_shift_exact <M>") / tr_in;
    return out - in;
}

std::pair<double, double> pointer_shift_first_order(const WeakValue& a_w, const WeakValue& b_w,
                                                    const MeterMoments& mom, double g,
                                                    Complex commutator_qp) {
    double comm = (-kI * commutator_qp).real(); // <-i[q,p]>, = 1 in the ideal case
    double dq = 2.0 * g * b_w.value.imag() * mom.var_q + g * a_w.value.real() * comm +
                g * a_w.value.imag() * mom.cov_sym;
    double dp = 2.0 * g * a_w.value.imag() * mom.var_p - g * b_w.value.real() * comm +
                g * b_w.value.imag() * mom.cov_sym;
    return {dq, dp};
}

double success_probability_first_order(double overlap_sq, const WeakValue& a_w,
                                       const WeakValue& b_w, double mean_p, double mean_q,
                                       double g) {
    if (overlap_sq < 0.0 || overlap_sq > 1.0)
        throw std::invalid_argument("success_probability_first_order: overlap_sq outside [0, 1]");
    return overlap_sq *
           (1.0 + 2.0 * g * mean_p * a_w.value.imag() + 2.0 * g * mean_q * b_w.value.imag());
}

NoPostselectionShifts no_postselection_shifts(const DensityOperator& pre_sys,
                                              const DensityOperator& meter,
                                              const CouplingConfig& cfg) {
    auto [aprime, bprime] = system_quadratures(pre_sys.space, cfg.phi);
    auto [qprime, pprime] = meter_quadratures(meter.space, cfg.phi);
    NoPostselectionShifts out;
    double mean_a = real_checked((aprime.m * pre_sys.m).trace(), "no_postselection <A>");
    double mean_b = real_checked((bprime.m * pre_sys.m).trace(), "no_postselection <B>");
    out.dq_fo = cfg.g * mean_a;
    out.dp_fo = -cfg.g * mean_b; // p_out = p - gB under U = exp(-ig(A p + B q))
    Operator u = coupling_unitary(cfg, pre_sys.space, meter.space);
    Matrix eye_s = Matrix::Identity(pre_sys.space.dim(), pre_sys.space.dim());
    PostselectionOperator keep_all{{pre_sys.space, eye_s}};
    auto [meter_out, p] = evolve_and_postselect(u, pre_sys, meter, keep_all);
    (void)p;
    out.dq_exact = pointer_shift_exact(qprime, meter_out, meter);
    out.dp_exact = pointer_shift_exact(pprime, meter_out, meter);
    return out;
}

std::pair<WeakValue, WeakValue> recover_weak_values(const ShiftRecord& rec1,
                                                    const ShiftRecord& rec2, double g) {
    if (!(g > 0.0)) throw std::invalid_argument("recover_weak_values: g must be > 0");
    if (!(rec1.meter_dq > 0.0) || !(rec2.meter_dq > 0.0))
        throw std::invalid_argument("recover_weak_values: meter dq must be > 0");
    double vq1 = rec1.meter_dq * rec1.meter_dq, vq2 = rec2.meter_dq * rec2.meter_dq;
    if (std::abs(vq1 - vq2) <= 1e-9)
        throw singular_error("recover_weak_values: coincident meter spreads");
    double vp1 = 1.0 / (4.0 * vq1), vp2 = 1.0 / (4.0 * vq2);
    double im_a = (rec1.delta_p - rec2.delta_p) / (vp1 - vp2) / (2.0 * g);
    double im_b = (rec1.delta_q - rec2.delta_q) / (vq1 - vq2) / (2.0 * g);
    double re_a = (vq1 * rec2.delta_q - vq2 * rec1.delta_q) / (vq1 - vq2) / g;
    double re_b = (vp2 * rec1.delta_p - vp1 * rec2.delta_p) / (vp1 - vp2) / g;
    return {WeakValue{{re_a, im_a}}, WeakValue{{re_b, im_b}}};
}

InversionResult recover_weak_values_lsq(const std::vector<ShiftRecord>& records, double g) {
    if (!(g > 0.0)) throw std::invalid_argument("recover_weak_values_lsq: g must be > 0");
    if (records.size() < 2)
        throw std::invalid_argument("recover_weak_values_lsq: need >= 2 records");
    double vq_min = kInf, vq_max = -kInf;
    for (const auto& rec : records) {
        if (!(rec.meter_dq > 0.0))
            throw std::invalid_argument("recover_weak_values_lsq: meter dq must be > 0");
        double vq = rec.meter_dq * rec.meter_dq;
        vq_min = std::min(vq_min, vq);
        vq_max = std::max(vq_max, vq);
    }
    if (vq_max - vq_min <= 1e-9)
        throw singular_error("recover_weak_values_lsq: coincident meter spreads");
    // dq_i = (2g Im B) vq_i + (g Re A);  dp_i = (2g Im A) vp_i - (g Re B)
    const int n = static_cast<int>(records.size());
    Eigen::MatrixXd design_q(n, 2), design_p(n, 2);
    Eigen::VectorXd rhs_q(n), rhs_p(n);
    for (int i = 0; i < n; ++i) {
        double vq = records[i].meter_dq * records[i].meter_dq;
        design_q(i, 0) = vq;
        design_q(i, 1) = 1.0;
        design_p(i, 0) = 1.0 / (4.0 * vq);
        design_p(i, 1) = -1.0;
        rhs_q(i) = records[i].delta_q;
        rhs_p(i) = records[i].delta_p;
    }
    Eigen::Vector2d sol_q = design_q.colPivHouseholderQr().solve(rhs_q);
    Eigen::Vector2d sol_p = design_p.colPivHouseholderQr().solve(rhs_p);
    double rss = (design_q * sol_q - rhs_q).squaredNorm() + (design_p * sol_p - rhs_p).squaredNorm();
    InversionResult out;
    out.a_w = WeakValue{{sol_q(1) / g, sol_p(0) / (2.0 * g)}};
    out.b_w = WeakValue{{sol_p(1) / g, sol_q(0) / (2.0 * g)}};
    out.residual = std::sqrt(rss / (2.0 * n));
    return out;
}

ValidityDiagnostics validity_diagnostics(const CouplingConfig& cfg, const Operator& a,
                                         const Operator& b, const MeterMoments& mom,
                                         double overlap) {
    if (overlap < 0.0) throw std::invalid_argument("validity_diagnostics: overlap must be >= 0");
    ValidityDiagnostics d;
    double dp = std::sqrt(std::max(0.0, mom.var_p));
    double dq = std::sqrt(std::max(0.0, mom.var_q));
    d.g_norm_a_dp = cfg.g * spectral_norm(a) * dp;
    d.g_norm_b_dq = cfg.g * spectral_norm(b) * dq;
    d.overlap = overlap;
    d.cutoff = a.space.dim();
    d.ratio_a = overlap > 0.0 ? d.g_norm_a_dp / overlap : kInf;
    d.ratio_b = overlap > 0.0 ? d.g_norm_b_dq / overlap : kInf;
    double worst = std::max({d.g_norm_a_dp, d.g_norm_b_dq, d.ratio_a, d.ratio_b});
    if (overlap <= 0.0 || worst >= 0.5)
        d.flag = ValidityFlag::fail;
    else if (worst >= 0.1)
        d.flag = ValidityFlag::warn;
    else
        d.flag = ValidityFlag::pass;
    return d;
}

AmplificationReport amplification_report(double dq, double dp, double dq0, double dp0, double p,
                                         const MeterMoments& mom, long n_readouts,
                                         const std::optional<WeakValueRoute>& wv) {
    if (p < -1e-12 || p > 1.0 + 1e-12)
        throw std::invalid_argument("amplification_report: probability outside [0, 1]");
    p = std::min(1.0, std::max(0.0, p));
    if (n_readouts < 1) throw std::invalid_argument("amplification_report: n_readouts must be >= 1");
    AmplificationReport rep;
    rep.p_success = p;
    rep.n_readouts = n_readouts;
    double sq = std::sqrt(std::max(0.0, mom.var_q));
    double sp = std::sqrt(std::max(0.0, mom.var_p));
    double root_n = std::sqrt(double(n_readouts));
    double root_np = std::sqrt(double(n_readouts) * p);
    rep.k_q_defined = dq0 != 0.0;
    rep.k_p_defined = dp0 != 0.0;
    rep.k_q = rep.k_q_defined ? dq / dq0 : kNan;
    rep.k_p = rep.k_p_defined ? dp / dp0 : kNan;
    rep.a_q = rep.k_q_defined ? rep.k_q * std::sqrt(p) : kNan;
    rep.a_p = rep.k_p_defined ? rep.k_p * std::sqrt(p) : kNan;
    rep.snr_q_without = sq > 0.0 ? dq0 / (sq / root_n) : kNan;
    rep.snr_p_without = sp > 0.0 ? dp0 / (sp / root_n) : kNan;
    rep.snr_q_with = sq > 0.0 && p > 0.0 ? dq / (sq / root_np) : kNan;
    rep.snr_p_with = sp > 0.0 && p > 0.0 ? dp / (sp / root_np) : kNan;
    if (wv) {
        rep.wv_route_present = true;
        double shift_q_fo = 2.0 * wv->b_w.value.imag() * mom.var_q + wv->a_w.value.real();
        double shift_p_fo = 2.0 * wv->a_w.value.imag() * mom.var_p - wv->b_w.value.real();
        rep.a_q_wv = wv->mean_a != 0.0 ? shift_q_fo / wv->mean_a * wv->overlap : kNan;
        rep.a_p_wv = wv->mean_b != 0.0 ? shift_p_fo / (-wv->mean_b) * wv->overlap : kNan;
    } else {
        rep.a_q_wv = kNan;
        rep.a_p_wv = kNan;
    }
    return rep;
}

} // namespace qwm
