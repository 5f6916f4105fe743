//! Reduction of an arbitrary two-qubit state to the canonical form
//! `(1/4)(1 + a.sigma (x) 1 + sum_i t_i sigma_i (x) sigma_i)`.
//!
//! Two steps, both of which preserve (un)steerability from Alice to Bob:
//! whitening Bob's marginal with `1 (x) rho_B^{-1/2}`, then local rotations
//! bringing the correlation matrix to diagonal form.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Result, SteerError};
use crate::qubit_algebra::{
    c, eig_hermitian, hermitize, identity2, kron, partial_trace_alice, pauli_decompose, Mat4, PauliForm, TwoQubitState,
};

/// Smallest admissible eigenvalue of Bob's marginal.
pub const RANK_TOL: f64 = 1e-8;

/// Equality threshold used when detecting degenerate `|t_i|`.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Alice's Bloch vector and the diagonal of the correlation matrix of a
/// state whose Bob marginal is maximally mixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalState {
    pub a: Vector3<f64>,
    pub t: Vector3<f64>,
}

impl CanonicalState {
    pub fn new(a: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self { a, t }
    }

    pub fn werner(p: f64) -> Self {
        Self::new(Vector3::zeros(), Vector3::repeat(-p))
    }

    pub fn correlation(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.t)
    }

    pub fn pauli_form(&self) -> PauliForm {
        PauliForm::new(self.a, Vector3::zeros(), self.correlation())
    }

    pub fn matrix(&self) -> Mat4 {
        self.pauli_form().compose()
    }

    /// The reconstructed 4x4 state, if it is positive semidefinite.
    pub fn to_state(&self) -> Result<TwoQubitState> {
        TwoQubitState::new(self.matrix())
    }

    pub fn is_valid(&self) -> bool {
        self.to_state().is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalizationRecord {
    pub canonical: CanonicalState,
    /// `R_A` with `a_canonical = R_A a` and `diag(t) = R_A T R_B^T`.
    pub alice_rotation: Matrix3<f64>,
    pub bob_rotation: Matrix3<f64>,
    pub whitening_applied: bool,
}

/// `1 (x) rho_B^{-1/2} rho 1 (x) rho_B^{-1/2}`, renormalized.
pub fn bob_whitening(rho: &TwoQubitState) -> Result<TwoQubitState> {
    let eig = eig_hermitian(&rho.bob_marginal())?;
    if eig.min() <= RANK_TOL {
        return Err(SteerError::BobMarginalPure {
            min_eigenvalue: eig.min(),
        });
    }
    let inv_sqrt = eig.map(|x| 1.0 / x.sqrt());
    let k = kron(&identity2(), &inv_sqrt);
    let out = k * rho.matrix() * k;
    let tr = out.trace().re;
    TwoQubitState::new(out * c(1.0 / tr))
}

/// Signed SVD of the correlation matrix of a state with `b = 0`.
///
/// Rotations are forced into SO(3); any reflection is absorbed into the sign
/// of a `t` entry. Axes are ordered by descending `|t_i|`, except that when
/// exactly two magnitudes coincide the odd one is placed on `z`. When all
/// three coincide the free rotation is used to put `a` on `+z`.
pub fn diagonalize_correlation(form: &PauliForm) -> Result<CanonicalizationRecord> {
    if form.b.norm() > STATE_B_TOL {
        return Err(SteerError::Precondition(format!(
            "Bob's Bloch vector must vanish, got norm {:.3e}",
            form.b.norm()
        )));
    }
    let svd = form.t.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.transpose();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut u_s = Matrix3::zeros();
    let mut v_s = Matrix3::zeros();
    let mut t = Vector3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        v_s.set_column(dst, &v.column(src));
        t[dst] = svd.singular_values[src];
    }
    if u_s.determinant() < 0.0 {
        u_s.column_mut(2).neg_mut();
        t[2] = -t[2];
    }
    if v_s.determinant() < 0.0 {
        v_s.column_mut(2).neg_mut();
        t[2] = -t[2];
    }
    let mut r_a = u_s.transpose();
    let mut r_b = v_s.transpose();

    let mag = t.abs();
    let eq01 = (mag[0] - mag[1]).abs() <= DEGENERACY_TOL;
    let eq12 = (mag[1] - mag[2]).abs() <= DEGENERACY_TOL;
    if eq12 && !eq01 {
        // cyclic (even) relabelling x<-y, y<-z, z<-x keeps det = +1
        let perm = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
        r_a = perm * r_a;
        r_b = perm * r_b;
        t = perm * t;
    }

    if eq01 && eq12 && (mag[0] - mag[2]).abs() <= 1e-10 {
        let a_rot = r_a * form.a;
        if a_rot.norm() > 1e-14 {
            let q = rotation_to_z(&a_rot);
            let signs = Matrix3::from_diagonal(&t.map(|x| if x < 0.0 { -1.0 } else { 1.0 }));
            r_a = q * r_a;
            r_b = signs * q * signs * r_b;
            let d = r_a * form.t * r_b.transpose();
            t = d.diagonal();
        }
    }

    Ok(CanonicalizationRecord {
        canonical: CanonicalState::new(r_a * form.a, t),
        alice_rotation: r_a,
        bob_rotation: r_b,
        whitening_applied: false,
    })
}

const STATE_B_TOL: f64 = 1e-9;

fn rotation_to_z(v: &Vector3<f64>) -> Matrix3<f64> {
    let z = Vector3::z();
    match Rotation3::rotation_between(v, &z) {
        Some(r) => *r.matrix(),
        // antiparallel
        None => *Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).matrix(),
    }
}

/// Whitening followed by diagonalization.
pub fn canonicalize(rho: &TwoQubitState) -> Result<CanonicalizationRecord> {
    canonicalize_matrix(rho.matrix())
}

/// Same as [`canonicalize`] for a Hermitian matrix that need not be
/// positive; only Bob's marginal must be positive definite. Used to score
/// candidates during searches.
pub fn canonicalize_matrix(m: &Mat4) -> Result<CanonicalizationRecord> {
    let form = pauli_decompose(m)?;
    let (mut form, applied) = if form.b.norm() <= 1e-14 {
        (form, false)
    } else {
        let eig = eig_hermitian(&partial_trace_alice(m))?;
        if eig.min() <= RANK_TOL {
            return Err(SteerError::BobMarginalPure {
                min_eigenvalue: eig.min(),
            });
        }
        let inv_sqrt = eig.map(|x| 1.0 / x.sqrt());
        let k = kron(&identity2(), &inv_sqrt);
        let out = k * m * k;
        let tr = out.trace().re;
        (pauli_decompose(&hermitize(&(out * c(1.0 / tr))))?, true)
    };
    form.b = Vector3::zeros();
    let mut record = diagonalize_correlation(&form)?;
    record.whitening_applied = applied;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit_algebra::{qubit_state, Mat2, C64};
    use std::f64::consts::FRAC_PI_4;

    fn family(p: f64, chi: f64) -> TwoQubitState {
        let (cc, ss) = (chi.cos(), chi.sin());
        let z = C64::new(0.0, 0.0);
        let psi = nalgebra::Vector4::new(c(cc), z, z, c(ss));
        let rho_a = Mat2::new(c(cc * cc), z, z, c(ss * ss));
        TwoQubitState::new(psi * psi.adjoint() * c(p) + kron(&rho_a, &(identity2() * c(0.5))) * c(1.0 - p)).unwrap()
    }

    fn is_rotation(r: &Matrix3<f64>) -> bool {
        (r * r.transpose() - Matrix3::identity()).norm() < 1e-12 && (r.determinant() - 1.0).abs() < 1e-12
    }

    #[test]
    fn whitening_leaves_werner_unchanged() {
        let w = TwoQubitState::werner(0.4).unwrap();
        let out = bob_whitening(&w).unwrap();
        assert!((out.matrix() - w.matrix()).norm() < 1e-14);
    }

    #[test]
    fn whitening_family_gives_closed_form() {
        let (p, chi) = (0.7, 0.35);
        let out = bob_whitening(&family(p, chi)).unwrap().pauli_form();
        assert!(out.b.norm() < 1e-9);
        let c2 = (2.0 * chi).cos();
        let den = 1.0 - p * p * c2 * c2;
        let a_z = (1.0 - p * p) * c2 / den;
        let t_z = p * (1.0 - c2 * c2) / den;
        let t_x = (p * p * (1.0 - c2 * c2) / den).sqrt();
        assert!((out.a.z - a_z).abs() < 1e-12);
        assert!((out.t[(2, 2)] - t_z).abs() < 1e-12);
        assert!((out.t[(0, 0)].abs() - t_x).abs() < 1e-12);
        assert!((out.t[(1, 1)].abs() - t_x).abs() < 1e-12);
    }

    #[test]
    fn whitening_rejects_pure_bob_marginal() {
        let zero = qubit_state(&Vector3::z());
        let prod = TwoQubitState::product(&zero, &zero).unwrap();
        assert!(matches!(bob_whitening(&prod), Err(SteerError::BobMarginalPure { .. })));
        assert!(matches!(canonicalize(&prod), Err(SteerError::BobMarginalPure { .. })));
    }

    #[test]
    fn diagonalize_axial_family() {
        let p = 0.8;
        let c2 = 0.4_f64;
        let s2 = (1.0 - c2 * c2).sqrt();
        let form = PauliForm::new(
            Vector3::new(0.0, 0.0, 0.5),
            Vector3::zeros(),
            Matrix3::from_diagonal(&Vector3::new(p * s2, -p * s2, p)),
        );
        let rec = diagonalize_correlation(&form).unwrap();
        let t = rec.canonical.t;
        assert!((t.x.abs() - t.y.abs()).abs() < 1e-12);
        assert!((t.z.abs() - p).abs() < 1e-12);
        assert!(
            (rec.canonical.a - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12
                || (rec.canonical.a + Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12
        );
    }

    #[test]
    fn diagonalize_rotated_diagonal() {
        let r = *Rotation3::from_euler_angles(0.3, -1.1, 2.0).matrix();
        let t = r * Matrix3::from_diagonal(&Vector3::new(0.3, 0.2, 0.1)) * r.transpose();
        let rec = diagonalize_correlation(&PauliForm::new(Vector3::zeros(), Vector3::zeros(), t)).unwrap();
        let got = rec.canonical.t.abs();
        assert!((got - Vector3::new(0.3, 0.2, 0.1)).norm() < 1e-12);
        assert!(is_rotation(&rec.alice_rotation) && is_rotation(&rec.bob_rotation));
        let d = rec.alice_rotation * t * rec.bob_rotation.transpose();
        assert!((d - Matrix3::from_diagonal(&rec.canonical.t)).norm() < 1e-12);
    }

    #[test]
    fn diagonalize_zero_correlations_aligns_a() {
        let a = Vector3::new(0.3, -0.2, 0.4);
        let rec = diagonalize_correlation(&PauliForm::new(a, Vector3::zeros(), Matrix3::zeros())).unwrap();
        assert_eq!(rec.canonical.t, Vector3::zeros());
        assert!((rec.canonical.a - Vector3::new(0.0, 0.0, a.norm())).norm() < 1e-12);
        assert!(is_rotation(&rec.alice_rotation));
    }

    #[test]
    fn diagonalize_requires_b_zero() {
        let form = PauliForm::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 0.1), Matrix3::zeros());
        assert!(matches!(
            diagonalize_correlation(&form),
            Err(SteerError::Precondition(_))
        ));
    }

    #[test]
    fn canonicalize_family_matches_closed_form() {
        for &(p, chi) in &[(0.8, 0.2), (0.5, 0.6), (0.95, 0.05), (0.3, FRAC_PI_4)] {
            let rec = canonicalize(&family(p, chi)).unwrap();
            let c2 = (2.0 * chi).cos();
            let den = 1.0 - p * p * c2 * c2;
            let a_z = (1.0 - p * p) * c2 / den;
            let t_z = p * (1.0 - c2 * c2) / den;
            let t_x = (p * p * (1.0 - c2 * c2) / den).sqrt();
            let cs = rec.canonical;
            let mut mags = [cs.t.x.abs(), cs.t.y.abs(), cs.t.z.abs()];
            mags.sort_by(f64::total_cmp);
            let mut want = [t_x, t_x, t_z];
            want.sort_by(f64::total_cmp);
            for (g, w) in mags.iter().zip(want) {
                assert!((g - w).abs() < 1e-9, "{p} {chi}: {mags:?} vs {want:?}");
            }
            assert!((cs.a.norm() - a_z.abs()).abs() < 1e-9);
            assert!(cs.is_valid());
        }
    }

    #[test]
    fn canonicalize_werner_half() {
        let rec = canonicalize(&family(0.5, FRAC_PI_4)).unwrap();
        assert!(rec.canonical.a.norm() < 1e-12);
        for i in 0..3 {
            assert!((rec.canonical.t[i].abs() - 0.5).abs() < 1e-12);
        }
        assert!(!rec.whitening_applied);
    }

    #[test]
    fn canonicalize_maximally_mixed() {
        let rec = canonicalize(&TwoQubitState::maximally_mixed()).unwrap();
        assert!(rec.canonical.a.norm() < 1e-15);
        assert!(rec.canonical.t.norm() < 1e-15);
    }
}
