//! Small dense complex linear algebra for one and two qubits, and the
//! Pauli/Bloch view of a two-qubit density matrix.
//!
//! Basis ordering is `|ij>` with Alice's qubit first, so the row index of a
//! 4x4 matrix is `2*i + j`.

use std::fmt;

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix4, SMatrix, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

/// Absolute tolerance on Hermiticity, trace and eigenvalue positivity.
pub const STATE_TOL: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

/// Pauli matrix `sigma_{i}` for `i` in `0..3` (x, y, z).
pub fn pauli(i: usize) -> Mat2 {
    let i_ = C64::new(0.0, 1.0);
    match i {
        0 => Mat2::new(ZERO, ONE, ONE, ZERO),
        1 => Mat2::new(ZERO, -i_, i_, ZERO),
        2 => Mat2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// `v . sigma` for a real 3-vector.
pub fn bloch_operator(v: &Vector3<f64>) -> Mat2 {
    pauli(0) * c(v.x) + pauli(1) * c(v.y) + pauli(2) * c(v.z)
}

/// `(1 + v.sigma)/2`, the projector (or mixed state) with Bloch vector `v`.
pub fn qubit_state(v: &Vector3<f64>) -> Mat2 {
    (identity2() + bloch_operator(v)) * c(0.5)
}

/// Bloch vector `Tr(M sigma_i)` of a 2x2 operator.
pub fn bloch_vector(m: &Mat2) -> Vector3<f64> {
    Vector3::from_fn(|i, _| (m * pauli(i)).trace().re)
}

pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    a.kronecker(b)
}

pub fn hermiticity_defect<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..N {
        for j in 0..N {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_hermitian<const N: usize>(m: &SMatrix<C64, N, N>) -> Result<()> {
    let defect = hermiticity_defect(m);
    if defect > STATE_TOL || !defect.is_finite() {
        return Err(SteerError::NotHermitian { defect });
    }
    Ok(())
}

/// `(M + M^dag)/2`.
pub fn hermitize<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    (m + m.adjoint()) * c(0.5)
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues in descending
/// order. Column `k` of `vectors` is the eigenvector of `values[k]`.
#[derive(Clone, Debug)]
pub struct HermitianEigen<const N: usize> {
    pub values: [f64; N],
    pub vectors: SMatrix<C64, N, N>,
}

impl<const N: usize> HermitianEigen<N> {
    pub fn reconstruct(&self) -> SMatrix<C64, N, N> {
        let d = SMatrix::<C64, N, N>::from_fn(|i, j| if i == j { c(self.values[i]) } else { ZERO });
        self.vectors * d * self.vectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.values[N - 1]
    }

    /// Applies `f` to the spectrum: `V f(D) V^dag`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SMatrix<C64, N, N> {
        let d = SMatrix::<C64, N, N>::from_fn(|i, j| if i == j { c(f(self.values[i])) } else { ZERO });
        self.vectors * d * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition via nalgebra's symmetric QR iteration.
pub fn eig_hermitian<const N: usize>(m: &SMatrix<C64, N, N>) -> Result<HermitianEigen<N>> {
    check_hermitian(m)?;
    let h = hermitize(m);
    let dynamic = DMatrix::from_fn(N, N, |i, j| h[(i, j)]);
    let eig = SymmetricEigen::try_new(dynamic, f64::EPSILON, 10_000)
        .ok_or_else(|| SteerError::Precondition("eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut values = [0.0; N];
    let mut vectors = SMatrix::<C64, N, N>::from_element(ZERO);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        for k in 0..N {
            vectors[(k, dst)] = eig.eigenvectors[(k, src)];
        }
    }
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues only, descending.
pub fn eigvals_hermitian<const N: usize>(m: &SMatrix<C64, N, N>) -> Result<[f64; N]> {
    Ok(eig_hermitian(m)?.values)
}

/// `(1/2) * sum |eig(A - B)|`.
pub fn trace_distance<const N: usize>(a: &SMatrix<C64, N, N>, b: &SMatrix<C64, N, N>) -> Result<f64> {
    let vals = eigvals_hermitian(&(a - b))?;
    Ok(0.5 * vals.iter().map(|x| x.abs()).sum::<f64>())
}

/// Hermiticity, trace and positivity diagnostics for a candidate density matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub hermiticity_defect: f64,
    pub trace_defect: f64,
    pub min_eigenvalue: f64,
    pub valid: bool,
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut problems = Vec::new();
        if self.hermiticity_defect > STATE_TOL || !self.hermiticity_defect.is_finite() {
            problems.push(format!("hermiticity defect {:.3e}", self.hermiticity_defect));
        }
        if self.trace_defect > STATE_TOL || !self.trace_defect.is_finite() {
            problems.push(format!("trace defect {:.3e}", self.trace_defect));
        }
        if self.min_eigenvalue < -STATE_TOL || !self.min_eigenvalue.is_finite() {
            problems.push(format!("negative eigenvalue {:.3e}", self.min_eigenvalue));
        }
        if problems.is_empty() {
            write!(f, "valid")
        } else {
            write!(f, "{}", problems.join(", "))
        }
    }
}

pub fn is_valid_state<const N: usize>(m: &SMatrix<C64, N, N>) -> ValidityReport {
    let hermiticity_defect = hermiticity_defect(m);
    let trace_defect = (m.trace() - ONE).norm();
    let min_eigenvalue = if hermiticity_defect <= STATE_TOL {
        eig_hermitian(m).map(|e| e.min()).unwrap_or(f64::NAN)
    } else {
        // Positivity of the Hermitian part is still informative.
        eig_hermitian(&hermitize(m)).map(|e| e.min()).unwrap_or(f64::NAN)
    };
    let valid = hermiticity_defect <= STATE_TOL && trace_defect <= STATE_TOL && min_eigenvalue >= -STATE_TOL;
    ValidityReport {
        hermiticity_defect,
        trace_defect,
        min_eigenvalue,
        valid,
    }
}

/// Alice's and Bob's Bloch vectors plus the correlation matrix
/// `T_ij = Tr(rho sigma_i (x) sigma_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliForm {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub t: Matrix3<f64>,
}

impl PauliForm {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, t: Matrix3<f64>) -> Self {
        Self { a, b, t }
    }

    pub fn maximally_mixed() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), Matrix3::zeros())
    }

    /// `(1/4)(1 + a.sigma (x) 1 + 1 (x) b.sigma + sum T_ij sigma_i (x) sigma_j)`.
    pub fn compose(&self) -> Mat4 {
        let id = identity2();
        let mut m = Mat4::identity();
        for i in 0..3 {
            m += kron(&pauli(i), &id) * c(self.a[i]);
            m += kron(&id, &pauli(i)) * c(self.b[i]);
            for j in 0..3 {
                if self.t[(i, j)] != 0.0 {
                    m += kron(&pauli(i), &pauli(j)) * c(self.t[(i, j)]);
                }
            }
        }
        m * c(0.25)
    }

    /// Largest of `||a||`, `||b||` and the singular values of `T`.
    pub fn max_component_norm(&self) -> f64 {
        let s = self.t.singular_values();
        self.a.norm().max(self.b.norm()).max(s.max())
    }
}

pub fn pauli_decompose(rho: &Mat4) -> Result<PauliForm> {
    check_hermitian(rho)?;
    let id = identity2();
    let tr = |op: Mat4| (rho * op).trace().re;
    let a = Vector3::from_fn(|i, _| tr(kron(&pauli(i), &id)));
    let b = Vector3::from_fn(|i, _| tr(kron(&id, &pauli(i))));
    let t = Matrix3::from_fn(|i, j| tr(kron(&pauli(i), &pauli(j))));
    Ok(PauliForm { a, b, t })
}

pub fn pauli_compose(form: &PauliForm) -> Mat4 {
    form.compose()
}

/// `Tr_A`, leaving Bob's 2x2 marginal.
pub fn partial_trace_alice(rho: &Mat4) -> Mat2 {
    Mat2::from_fn(|k, l| rho[(k, l)] + rho[(2 + k, 2 + l)])
}

/// `Tr_B`, leaving Alice's 2x2 marginal.
pub fn partial_trace_bob(rho: &Mat4) -> Mat2 {
    Mat2::from_fn(|i, j| rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)])
}

/// Transpose on Bob's factor.
pub fn partial_transpose_bob(rho: &Mat4) -> Mat4 {
    Mat4::from_fn(|r, s| {
        let (i, k) = (r / 2, r % 2);
        let (j, l) = (s / 2, s % 2);
        rho[(2 * i + l, 2 * j + k)]
    })
}

/// Smallest eigenvalue of the partial transpose. Negative iff entangled
/// (two qubits).
pub fn ppt_min_eigenvalue(rho: &Mat4) -> Result<f64> {
    Ok(eig_hermitian(&partial_transpose_bob(rho))?.min())
}

/// A validated two-qubit density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitState(Mat4);

impl TwoQubitState {
    pub fn new(matrix: Mat4) -> Result<Self> {
        let report = is_valid_state(&matrix);
        if !report.valid {
            if report.hermiticity_defect > STATE_TOL {
                return Err(SteerError::NotHermitian {
                    defect: report.hermiticity_defect,
                });
            }
            return Err(SteerError::InvalidState(report));
        }
        Ok(Self(hermitize(&matrix)))
    }

    pub fn from_pauli(form: &PauliForm) -> Result<Self> {
        Self::new(form.compose())
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat4::identity() * c(0.25))
    }

    /// Projector onto a (not necessarily normalized) pure state vector.
    pub fn pure(psi: [C64; 4]) -> Result<Self> {
        let v = nalgebra::Vector4::from(psi);
        let n = v.norm();
        if n == 0.0 {
            return Err(SteerError::Precondition("zero state vector".into()));
        }
        let v = v / c(n);
        Self::new(v * v.adjoint())
    }

    /// `|phi+> = (|00> + |11>)/sqrt 2`.
    pub fn phi_plus() -> Self {
        let h = c(std::f64::consts::FRAC_1_SQRT_2);
        Self::pure([h, ZERO, ZERO, h]).expect("phi+ is a valid state")
    }

    /// `p |psi-><psi-| + (1-p) 1/4`.
    pub fn werner(p: f64) -> Result<Self> {
        let h = c(std::f64::consts::FRAC_1_SQRT_2);
        let psi = nalgebra::Vector4::new(ZERO, h, -h, ZERO);
        Self::new(psi * psi.adjoint() * c(p) + Mat4::identity() * c((1.0 - p) / 4.0))
    }

    pub fn product(alice: &Mat2, bob: &Mat2) -> Result<Self> {
        Self::new(kron(alice, bob))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn pauli_form(&self) -> PauliForm {
        pauli_decompose(&self.0).expect("validated state is Hermitian")
    }

    pub fn alice_marginal(&self) -> Mat2 {
        partial_trace_bob(&self.0)
    }

    pub fn bob_marginal(&self) -> Mat2 {
        partial_trace_alice(&self.0)
    }

    pub fn ppt_min_eigenvalue(&self) -> f64 {
        ppt_min_eigenvalue(&self.0).expect("partial transpose of a Hermitian matrix is Hermitian")
    }

    /// PPT test with a 1e-12 margin; exact for two qubits.
    pub fn is_entangled(&self) -> bool {
        self.ppt_min_eigenvalue() < -1e-12
    }

    /// Convex mixture `w self + (1-w) other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        Self::new(self.0 * c(w) + other.0 * c(1.0 - w))
    }
}

/// Ordered eigenvalues `alpha >= beta` of a sub-normalized 2x2 operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigPair {
    pub alpha: f64,
    pub beta: f64,
}

impl EigPair {
    pub fn new(x: f64, y: f64) -> Self {
        if x >= y {
            Self { alpha: x, beta: y }
        } else {
            Self { alpha: y, beta: x }
        }
    }

    pub fn of(m: &Mat2) -> Result<Self> {
        let v = eigvals_hermitian(m)?;
        Ok(Self::new(v[0], v[1]))
    }

    pub fn sum(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `(alpha + beta)^2 - 2 beta`; the cap model reproduces the pair iff
    /// this is non-positive.
    pub fn cap_excess(&self) -> f64 {
        self.sum() * self.sum() - 2.0 * self.beta
    }
}
