#pragma once

#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qwm/errors.hpp"

namespace qwm {

typedef std::complex<double> Complex;
typedef Eigen::MatrixXcd Matrix;
typedef Eigen::VectorXcd Vector;

// truncated mode (or tensor product of modes); composite basis index is
// row-major over the factor list: idx = (i0*N1 + i1)*N2 + i2 ...
struct FockSpace {
    std::vector<int> factors;

    int dim() const {
        int d = 1;
        for (int n : factors) d *= n;
        return d;
    }
    int num_factors() const { return static_cast<int>(factors.size()); }
    bool operator==(const FockSpace& o) const { return factors == o.factors; }
    bool operator!=(const FockSpace& o) const { return !(*this == o); }
};

FockSpace make_space(int cutoff);
FockSpace product_space(const std::vector<FockSpace>& parts);

struct Operator {
    FockSpace space;
    Matrix m;
};

struct StateVector {
    FockSpace space;
    Vector v; // unit norm after construction
};

struct DensityOperator {
    FockSpace space;
    Matrix m;
    bool unit_trace = true; // postselected (unnormalized) states carry false
};

// (q0, p0, dq) of a Gaussian meter; dp = 1/(2 dq) is derived
struct GaussianMeterSpec {
    double q0 = 0.0;
    double p0 = 0.0;
    double dq = 0.70710678118654752; // 1/sqrt(2): symmetric minimum-uncertainty
    double dp() const { return 1.0 / (2.0 * dq); }
};

struct MeterMoments {
    double mean_q = 0.0;
    double mean_p = 0.0;
    double var_q = 0.0;
    double var_p = 0.0;
    double cov_sym = 0.0; // <{q-<q>, p-<p>}> (anti-commutator, symmetrized)
};

Operator annihilation(const FockSpace& space);

// system pair at angle phi: B' = (e^{-i phi} a + e^{i phi} a†)/sqrt2,
//                           A' = i (e^{-i phi} a - e^{i phi} a†)/sqrt2
std::pair<Operator, Operator> system_quadratures(const FockSpace& space, double phi);

// meter pair, opposite phi placement: q' = (e^{i phi} a + e^{-i phi} a†)/sqrt2,
//                                     p' = i (e^{-i phi} a† - e^{i phi} a)/sqrt2
std::pair<Operator, Operator> meter_quadratures(const FockSpace& space, double phi);

StateVector coherent_state(const FockSpace& space, Complex amplitude);

Operator displacement_operator(const FockSpace& space, Complex beta);
Operator squeeze_operator(const FockSpace& space, Complex xi);

// displaced squeezed vacuum with r = -ln(2 dq^2)/2, beta = (q0 + i p0)/sqrt2;
// moments checked against the spec'd targets, truncation_error on miss
StateVector gaussian_meter_state(const FockSpace& space, const GaussianMeterSpec& spec);

Operator tensor(const std::vector<Operator>& factors);
StateVector tensor(const std::vector<StateVector>& factors);

Operator matrix_exponential(const Operator& x);

MeterMoments moments(const StateVector& state, const Operator& q, const Operator& p);
MeterMoments moments(const DensityOperator& state, const Operator& q, const Operator& p);

enum class BeamsplitterConvention {
    // b3 = (b1 + i b2)/sqrt2, b4 = (i b1 + b2)/sqrt2 on coherent amplitudes
    symmetric_i,
};

Operator beamsplitter_5050(const FockSpace& two_mode_space, BeamsplitterConvention convention);

DensityOperator pure_density(const StateVector& psi);

// validated density construction (Hermiticity/positivity gates)
DensityOperator make_density(const FockSpace& space, const Matrix& m, bool unit_trace);

// reduced state over the trailing `keep` factors (traces out the leading ones)
DensityOperator partial_trace_keep_trailing(const DensityOperator& rho, int keep);

StateVector basis_state(const FockSpace& space, const std::vector<int>& occupation);

// drop the top `drop` levels of every factor (projection onto the
// truncation-safe subspace, composed back as a full-size matrix is avoided:
// the result lives on the smaller space)
Matrix restrict_levels(const Operator& op, int drop);

double spectral_norm(const Operator& op);

// cutoff large enough that the displaced-squeezed moment gate passes with margin
int suggest_cutoff(Complex amplitude, double dq);

} // namespace qwm
