#pragma once

#include <span>
#include <vector>

#include "json.hpp"

#include "cmpstomo/types.hpp"

namespace cmpstomo {

/// Translation-invariant continuous MPS of one bosonic species, given by
/// its d x d variational matrices Q and R.
class CmpsState {
public:
    CmpsState() = default;
    CmpsState(CMatrix q, CMatrix r);

    const CMatrix& q() const { return q_; }
    const CMatrix& r() const { return r_; }
    Index bond_dim() const { return q_.rows(); }

private:
    CMatrix q_;
    CMatrix r_;
};

void to_json(nlohmann::json& j, const CmpsState& state);
void from_json(const nlohmann::json& j, CmpsState& state);

/// Eigendecomposition of the transfer matrix. Eigenvalues are ordered by
/// descending real part (ties by descending imaginary part), so index 0 is
/// the dominant eigenvalue.
struct TransferSpectrum {
    CVector eigenvalues;
    CMatrix right;         // X, columns are right eigenvectors
    CMatrix left_inverse;  // X^-1, rows are the dual left eigenvectors
    bool normalized = false;
};

/// M and M^-1 in the eigenbasis of the transfer matrix.
struct ResidueTensor {
    CMatrix m;
    CMatrix m_inv;
};

/// Permutation sorting `values` by descending real part; entries whose real
/// parts agree to a relative 1e-9 are ordered by descending imaginary part.
std::vector<Index> spectral_order(const CVector& values);

// Kronecker convention used throughout: (A (x) B)[i*d + j, k*d + l] =
// A[i, k] * B[j, l], the first factor acting on the conjugated copy.
CMatrix kron(const CMatrix& a, const CMatrix& b);

/// T = conj(Q) (x) 1 + 1 (x) Q + conj(R) (x) R.
CMatrix transfer_matrix(const CmpsState& state);

/// Shifts Q by -Re(lambda_max)/2 so that the dominant transfer-matrix
/// eigenvalue becomes zero. Throws DegenerateSpectrum if the two leading
/// eigenvalues share their real part.
CmpsState normalize(const CmpsState& state);

/// True when the dominant eigenvalue of T is zero to within `tol`.
bool is_normalized(const CmpsState& state, double tol = 1e-9);

TransferSpectrum spectral_decompose(const CmpsState& state);

/// M = X^-1 (conj(R)^{1/2} (x) R^{-1/2}) X and its inverse, built from
/// the principal square root of R.
ResidueTensor residues_in_diagonal_basis(const CmpsState& state,
                                         const TransferSpectrum& spectrum);

struct CorrelatorValue {
    double value = 0.0;
    double discarded_imag = 0.0;
};

/// Evaluates the n-point phase correlator at ascending positions x_1..x_n
/// by chaining matrix exponentials of T between alternating half-power
/// factors. The infinite-length boundary is the rank-one projector onto
/// the null space of T. n must be even.
CorrelatorValue eval_correlator_direct(const CmpsState& state,
                                       std::span<const double> positions);

/// Same correlator from the diagonal-basis expansion, contracted as a
/// chain of matrix-vector products:
///   e_1^T M D(t_1) M^-1 D(t_2) M ... D(t_{n-1}) M^-1 e_1,
/// with D(t) = diag(exp(lambda * t)). `gaps` holds t_1..t_{n-1}.
Complex correlator_chain(const CMatrix& m, const CMatrix& m_inv,
                         const CVector& eigenvalues,
                         std::span<const double> gaps);

double eval_correlator_diagonal(const ResidueTensor& residues,
                                const TransferSpectrum& spectrum,
                                std::span<const double> gaps);

/// Expansion coefficient rho_{k_1..k_{n-1}} (zero-based indices) of the
/// correlator in products of exponentials exp(lambda_{k_j} t_j).
Complex rho_coefficient(const CMatrix& m, const CMatrix& m_inv,
                        std::span<const Index> k);

/// Two-point residues r_k = M[0,k] * M^-1[k,0]; C2(t) = sum_k r_k e^{lambda_k t}.
CVector two_point_residues(const CMatrix& m, const CMatrix& m_inv);

}  // namespace cmpstomo
