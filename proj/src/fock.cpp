#include "qwm/fock.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace qwm {

namespace {

const double kSqrt2 = std::sqrt(2.0);
const Complex kI{0.0, 1.0};

void require_single_mode(const FockSpace& space, const char* who) {
    if (space.num_factors() != 1) {
        std::ostringstream os;
        os << who << ": expected a single-mode space, got " << space.num_factors() << " factors";
        throw std::invalid_argument(os.str());
    }
}

double imag_residue_checked(Complex z, const char* what, double tol = 1e-10) {
    if (std::abs(z.imag()) > tol * std::max(1.0, std::abs(z))) {
        std::ostringstream os;
        os << what << ": imaginary residue " << z.imag() << " exceeds tolerance";
        throw numerical_error(os.str());
    }
    return z.real();
}

MeterMoments moments_impl(const Matrix& rho, double trace, const Operator& q, const Operator& p) {
    auto expect = [&](const Matrix& obs, const char* what) {
        return imag_residue_checked((obs * rho).trace() / trace, what);
    };
    MeterMoments mom;
    mom.mean_q = expect(q.m, "moments <q>");
    mom.mean_p = expect(p.m, "moments <p>");
    mom.var_q = expect(q.m * q.m, "moments <qq>") - mom.mean_q * mom.mean_q;
    mom.var_p = expect(p.m * p.m, "moments <pp>") - mom.mean_p * mom.mean_p;
    mom.cov_sym = expect(q.m * p.m + p.m * q.m, "moments <{q,p}>") - 2.0 * mom.mean_q * mom.mean_p;
    return mom;
}

} // namespace

FockSpace make_space(int cutoff) {
    if (cutoff < 2) throw std::invalid_argument("make_space: cutoff must be >= 2");
    return FockSpace{{cutoff}};
}

FockSpace product_space(const std::vector<FockSpace>& parts) {
    FockSpace out;
    for (const auto& part : parts)
        out.factors.insert(out.factors.end(), part.factors.begin(), part.factors.end());
    if (out.factors.empty()) throw std::invalid_argument("product_space: no factors");
    return out;
}

Operator annihilation(const FockSpace& space) {
    require_single_mode(space, "annihilation");
    int n = space.dim();
    Matrix m = Matrix::Zero(n, n);
    for (int k = 1; k < n; ++k) m(k - 1, k) = std::sqrt(double(k));
    return {space, m};
}

std::pair<Operator, Operator> system_quadratures(const FockSpace& space, double phi) {
    Operator a = annihilation(space);
    Matrix fwd = std::exp(-kI * phi) * a.m;
    Matrix bwd = std::exp(kI * phi) * a.m.adjoint();
    Operator bprime{space, (fwd + bwd) / kSqrt2};
    Operator aprime{space, kI * (fwd - bwd) / kSqrt2};
    return {aprime, bprime};
}

std::pair<Operator, Operator> meter_quadratures(const FockSpace& space, double phi) {
    Operator a = annihilation(space);
    Matrix fwd = std::exp(kI * phi) * a.m;
    Matrix bwd = std::exp(-kI * phi) * a.m.adjoint();
    Operator qprime{space, (fwd + bwd) / kSqrt2};
    Operator pprime{space, kI * (bwd - fwd) / kSqrt2};
    return {qprime, pprime};
}

StateVector coherent_state(const FockSpace& space, Complex amplitude) {
    require_single_mode(space, "coherent_state");
    int n = space.dim();
    Vector v(n);
    Complex c = 1.0; // unnormalized alpha^k/sqrt(k!)
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        if (k > 0) c *= amplitude / std::sqrt(double(k));
        v[k] = c;
        sum += std::norm(c);
    }
    double total = std::exp(std::norm(amplitude)); // sum over the untruncated series
    double tail = 1.0 - sum / total;
    if (tail > 1e-8) {
        std::ostringstream os;
        os << "coherent_state: tail mass " << tail << " at cutoff " << n << " for |amplitude|="
           << std::abs(amplitude);
        throw truncation_error(os.str());
    }
    v /= std::sqrt(sum);
    return {space, v};
}

Operator displacement_operator(const FockSpace& space, Complex beta) {
    Operator a = annihilation(space);
    Matrix gen = beta * a.m.adjoint() - std::conj(beta) * a.m;
    return matrix_exponential({space, gen});
}

Operator squeeze_operator(const FockSpace& space, Complex xi) {
    Operator a = annihilation(space);
    Matrix a2 = a.m * a.m;
    Matrix gen = (std::conj(xi) * a2 - xi * a2.adjoint()) / 2.0;
    return matrix_exponential({space, gen});
}

StateVector gaussian_meter_state(const FockSpace& space, const GaussianMeterSpec& spec) {
    require_single_mode(space, "gaussian_meter_state");
    if (!(spec.dq > 0.0)) throw std::invalid_argument("gaussian_meter_state: dq must be > 0");
    double r = -0.5 * std::log(2.0 * spec.dq * spec.dq);
    Complex beta{spec.q0 / kSqrt2, spec.p0 / kSqrt2};
    Vector v = Vector::Zero(space.dim());
    v[0] = 1.0;
    v = squeeze_operator(space, r).m * v;
    v = displacement_operator(space, beta).m * v;
    StateVector state{space, v};

    auto [q, p] = meter_quadratures(space, 0.0);
    MeterMoments mom = moments(state, q, p);
    double vq = spec.dq * spec.dq;
    double vp = spec.dp() * spec.dp();
    // truncation contaminates the anti-squeezed quadrature first; gate scales with it
    double tol = std::max(1e-6, 5e-3 * std::max({1.0, vq, vp}));
    double worst = std::max({std::abs(mom.mean_q - spec.q0), std::abs(mom.mean_p - spec.p0),
                             std::abs(mom.var_q - vq), std::abs(mom.var_p - vp),
                             std::abs(mom.cov_sym)});
    if (worst > tol) {
        std::ostringstream os;
        os << "gaussian_meter_state: moment deviation " << worst << " exceeds " << tol
           << " at cutoff " << space.dim() << " (dq=" << spec.dq << ")";
        throw truncation_error(os.str());
    }
    return state;
}

Operator tensor(const std::vector<Operator>& factors) {
    if (factors.size() < 2) throw std::invalid_argument("tensor: need >= 2 factors");
    Matrix m = factors[0].m;
    std::vector<FockSpace> spaces{factors[0].space};
    for (std::size_t k = 1; k < factors.size(); ++k) {
        m = Eigen::kroneckerProduct(m, factors[k].m).eval();
        spaces.push_back(factors[k].space);
    }
    return {product_space(spaces), m};
}

StateVector tensor(const std::vector<StateVector>& factors) {
    if (factors.size() < 2) throw std::invalid_argument("tensor: need >= 2 factors");
    Vector v = factors[0].v;
    std::vector<FockSpace> spaces{factors[0].space};
    for (std::size_t k = 1; k < factors.size(); ++k) {
        v = Eigen::kroneckerProduct(v, factors[k].v).eval();
        spaces.push_back(factors[k].space);
    }
    return {product_space(spaces), v};
}

Operator matrix_exponential(const Operator& x) {
    if (!x.m.allFinite()) throw numerical_error("matrix_exponential: non-finite entries");
    return {x.space, x.m.exp()};
}

MeterMoments moments(const StateVector& state, const Operator& q, const Operator& p) {
    if (q.space != state.space || p.space != state.space)
        throw std::invalid_argument("moments: operator/state space mismatch");
    Matrix rho = state.v * state.v.adjoint();
    return moments_impl(rho, state.v.squaredNorm(), q, p);
}

MeterMoments moments(const DensityOperator& state, const Operator& q, const Operator& p) {
    if (q.space != state.space || p.space != state.space)
        throw std::invalid_argument("moments: operator/state space mismatch");
    double tr = imag_residue_checked(state.m.trace(), "moments trace");
    if (tr <= 1e-12) throw singular_error("moments: vanishing trace");
    return moments_impl(state.m, tr, q, p);
}

Operator beamsplitter_5050(const FockSpace& two_mode_space, BeamsplitterConvention convention) {
    (void)convention; // single convention implemented; enum keeps call sites explicit
    if (two_mode_space.num_factors() != 2 ||
        two_mode_space.factors[0] != two_mode_space.factors[1])
        throw std::invalid_argument("beamsplitter_5050: need two equal-cutoff modes");
    FockSpace mode{{two_mode_space.factors[0]}};
    Operator a = annihilation(mode);
    Matrix hop = Eigen::kroneckerProduct(a.m.adjoint(), a.m).eval() +
                 Eigen::kroneckerProduct(a.m, a.m.adjoint()).eval();
    const double theta = M_PI / 4.0;
    Operator gen{two_mode_space, kI * theta * hop};
    return matrix_exponential(gen);
}

DensityOperator pure_density(const StateVector& psi) {
    return {psi.space, psi.v * psi.v.adjoint(), true};
}

DensityOperator make_density(const FockSpace& space, const Matrix& m, bool unit_trace) {
    if (m.rows() != space.dim() || m.cols() != space.dim())
        throw std::invalid_argument("make_density: dimension mismatch");
    double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw numerical_error("make_density: not Hermitian within tolerance");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * scale)
        throw numerical_error("make_density: negative eigenvalue beyond tolerance");
    if (unit_trace && std::abs(m.trace() - 1.0) > 1e-10)
        throw numerical_error("make_density: trace differs from 1");
    return {space, m, unit_trace};
}

DensityOperator partial_trace_keep_trailing(const DensityOperator& rho, int keep) {
    int nf = rho.space.num_factors();
    if (keep < 1 || keep >= nf)
        throw std::invalid_argument("partial_trace_keep_trailing: bad factor count");
    int lead = 1, trail = 1;
    for (int k = 0; k < nf - keep; ++k) lead *= rho.space.factors[k];
    for (int k = nf - keep; k < nf; ++k) trail *= rho.space.factors[k];
    Matrix out = Matrix::Zero(trail, trail);
    for (int i = 0; i < lead; ++i)
        out += rho.m.block(i * trail, i * trail, trail, trail);
    FockSpace space{{rho.space.factors.end() - keep, rho.space.factors.end()}};
    return {space, out, rho.unit_trace};
}

StateVector basis_state(const FockSpace& space, const std::vector<int>& occupation) {
    if (static_cast<int>(occupation.size()) != space.num_factors())
        throw std::invalid_argument("basis_state: occupation length mismatch");
    int idx = 0;
    for (int k = 0; k < space.num_factors(); ++k) {
        if (occupation[k] < 0 || occupation[k] >= space.factors[k])
            throw std::invalid_argument("basis_state: occupation exceeds cutoff");
        idx = idx * space.factors[k] + occupation[k];
    }
    Vector v = Vector::Zero(space.dim());
    v[idx] = 1.0;
    return {space, v};
}

Matrix restrict_levels(const Operator& op, int drop) {
    std::vector<int> keep_idx;
    int nf = op.space.num_factors();
    int dim = op.space.dim();
    for (int idx = 0; idx < dim; ++idx) {
        int rest = idx;
        bool keep = true;
        for (int k = nf - 1; k >= 0; --k) {
            int level = rest % op.space.factors[k];
            rest /= op.space.factors[k];
            if (level >= op.space.factors[k] - drop) { keep = false; break; }
        }
        if (keep) keep_idx.push_back(idx);
    }
    Matrix out(keep_idx.size(), keep_idx.size());
    for (std::size_t r = 0; r < keep_idx.size(); ++r)
        for (std::size_t c = 0; c < keep_idx.size(); ++c)
            out(r, c) = op.m(keep_idx[r], keep_idx[c]);
    return out;
}

double spectral_norm(const Operator& op) {
    return op.m.jacobiSvd().singularValues()(0);
}

int suggest_cutoff(Complex amplitude, double dq) {
    if (!(dq > 0.0)) throw std::invalid_argument("suggest_cutoff: dq must be > 0");
    double r = -0.5 * std::log(2.0 * dq * dq);
    double t = std::tanh(std::abs(r));
    double scale = std::max({1.0, dq * dq, 1.0 / (4.0 * dq * dq)});
    double target = 1e-4 * scale; // variance-error budget, 50x under the constructor gate
    int pairs = 0;
    if (t > 0.0) {
        // squeezed-vacuum pair weights w_m = |<2m|S|0>|^2; remaining variance error
        // bounded by the geometric tail of (2m+1) w_m
        double w = 1.0 / std::cosh(std::abs(r));
        double m = 0.0;
        while (true) {
            double w_next = w * t * t * (2.0 * m + 1.0) / (2.0 * m + 2.0);
            double bound = (2.0 * m + 3.0) * w_next / (1.0 - t * t);
            if (bound < target || m > 4000.0) { pairs = static_cast<int>(m) + 2; break; }
            w = w_next;
            m += 1.0;
        }
    }
    double b = std::abs(amplitude) * std::exp(std::abs(r));
    int n_disp = static_cast<int>(std::ceil(b * b + 8.0 * b + 8.0));
    return std::max(16, 2 * pairs + n_disp);
}

} // namespace qwm
