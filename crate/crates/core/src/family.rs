//! The family `rho(p, chi) = p |psi_chi><psi_chi| + (1-p) rho^A_chi (x) 1/2`
//! with `|psi_chi> = cos chi |00> + sin chi |11>`: closed-form unsteerability
//! boundary, one-way steering, and the POVM construction whose filtered
//! version violates CHSH above `p ~ 0.83353`.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use nalgebra::{Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical_form::{canonicalize, CanonicalState};
use crate::criterion::{evaluate_criterion, CriterionOptions};
use crate::error::{Result, SteerError};
use crate::qubit_algebra::{c, identity2, kron, qubit_state, Mat2, Mat4, TwoQubitState, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub p: f64,
    pub chi: f64,
}

impl FamilyParams {
    /// `p` in `[0, 1]`, `chi` in `(0, pi/4]`.
    pub fn new(p: f64, chi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SteerError::OutOfRange(format!("p = {p} outside [0, 1]")));
        }
        if !(chi > 0.0 && chi <= FRAC_PI_4 + 1e-12) {
            return Err(SteerError::OutOfRange(format!("chi = {chi} outside (0, pi/4]")));
        }
        Ok(Self {
            p,
            chi: chi.min(FRAC_PI_4),
        })
    }

    fn cos2chi(&self) -> f64 {
        (2.0 * self.chi).cos()
    }
}

fn psi_chi(chi: f64) -> Vector4<C64> {
    let z = C64::new(0.0, 0.0);
    Vector4::new(c(chi.cos()), z, z, c(chi.sin()))
}

fn rho_a_chi(chi: f64) -> Mat2 {
    let z = C64::new(0.0, 0.0);
    Mat2::new(c(chi.cos().powi(2)), z, z, c(chi.sin().powi(2)))
}

pub fn family_state(params: FamilyParams) -> TwoQubitState {
    let psi = psi_chi(params.chi);
    let m =
        psi * psi.adjoint() * c(params.p) + kron(&rho_a_chi(params.chi), &(identity2() * c(0.5))) * c(1.0 - params.p);
    TwoQubitState::new(m).expect("family members are valid states")
}

/// `(2p - 1) / ((2 - p) p^3)`.
pub fn ansatz_rhs(p: f64) -> f64 {
    (2.0 * p - 1.0) / ((2.0 - p) * p.powi(3))
}

/// `cos^2(2 chi) >= (2p-1)/((2-p)p^3)`. The comparison allows 1e-12 of
/// slack so that points constructed on the boundary test as inside.
pub fn unsteerable_ab_condition(params: FamilyParams) -> bool {
    if params.p <= 0.5 {
        return true;
    }
    params.cos2chi().powi(2) >= ansatz_rhs(params.p) - 1e-12
}

/// The `chi` on the boundary curve for a given `p` in `[1/2, 1)`.
pub fn ansatz_chi(p: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&p) {
        return Err(SteerError::OutOfRange(format!("ansatz needs p in [1/2, 1), got {p}")));
    }
    let rhs = ansatz_rhs(p);
    if !(0.0..=1.0).contains(&rhs) {
        return Err(SteerError::OutOfRange(format!(
            "ansatz right-hand side {rhs} outside [0, 1]"
        )));
    }
    let chi = 0.5 * rhs.sqrt().acos();
    if chi <= 0.0 {
        return Err(SteerError::OutOfRange(format!("ansatz chi collapses to 0 at p = {p}")));
    }
    Ok(chi)
}

/// Canonical form of `rho(p, chi)` in closed form:
/// `a = (0, 0, a_z)`, `t = (T_x, -T_x, T_z)`.
pub fn family_canonical(params: FamilyParams) -> CanonicalState {
    let p = params.p;
    let c2 = params.cos2chi();
    let den = 1.0 - p * p * c2 * c2;
    let a_z = (1.0 - p * p) * c2 / den;
    let t_z = p * (1.0 - c2 * c2) / den;
    let t_x = (p * p * (1.0 - c2 * c2) / den).sqrt();
    CanonicalState::new(Vector3::new(0.0, 0.0, a_z), Vector3::new(t_x, -t_x, t_z))
}

/// Sum of the two largest eigenvalues of `T^T T`; CHSH is violated iff
/// this exceeds 1.
pub fn horodecki_chsh(rho: &TwoQubitState) -> f64 {
    let t = rho.pauli_form().t;
    let mut s: Vec<f64> = t.singular_values().iter().map(|x| x * x).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s[0] + s[1]
}

/// Local filter `F_chi = diag(1/cos chi, 1/sin chi)` on Alice, renormalized.
pub fn filter_chi(rho: &TwoQubitState, chi: f64) -> Result<TwoQubitState> {
    if !(chi > 0.0 && chi <= FRAC_PI_4 + 1e-12) {
        return Err(SteerError::OutOfRange(format!("chi = {chi} outside (0, pi/4]")));
    }
    let z = C64::new(0.0, 0.0);
    let f = kron(&Mat2::new(c(1.0 / chi.cos()), z, z, c(1.0 / chi.sin())), &identity2());
    let out = f * rho.matrix() * f;
    let tr = out.trace().re;
    TwoQubitState::new(out * c(1.0 / tr))
}

/// `(1/2) rho(p, chi) + (1/2) |0><0| (x) rho_B`.
pub fn povm_one_way_state(params: FamilyParams) -> TwoQubitState {
    let rho = family_state(params);
    let zero = qubit_state(&Vector3::z());
    let m = rho.matrix() * c(0.5) + kron(&zero, &rho.bob_marginal()) * c(0.5);
    TwoQubitState::new(m).expect("mixture of valid states")
}

/// The filtered POVM state, built directly:
/// `[cos^2 chi (p |phi+><phi+| + (1-p) 1/4) + (1/2)|0><0| (x) rho_B] / (cos^2 chi + 1/2)`.
pub fn filtered_povm_state_closed_form(params: FamilyParams) -> TwoQubitState {
    let cc = params.chi.cos().powi(2);
    let werner_like = TwoQubitState::phi_plus().matrix() * c(params.p) + Mat4::identity() * c((1.0 - params.p) / 4.0);
    let rho_b = family_state(params).bob_marginal();
    let zero = qubit_state(&Vector3::z());
    let m = (werner_like * c(cc) + kron(&zero, &rho_b) * c(0.5)) * c(1.0 / (cc + 0.5));
    TwoQubitState::new(m).expect("mixture of valid states")
}

fn threshold_predicate(p: f64) -> Result<bool> {
    let chi = ansatz_chi(p)?;
    let params = FamilyParams::new(p, chi)?;
    let rho_f = filter_chi(&povm_one_way_state(params), chi)?;
    Ok(horodecki_chsh(&rho_f) > 1.0)
}

/// Whether the filtered POVM state on the boundary curve at `p` violates
/// CHSH.
pub fn povm_chsh_predicate(p: f64) -> Result<bool> {
    threshold_predicate(p)
}

pub const THRESHOLD_BRACKET: (f64, f64) = (0.51, 0.999);

/// Bisects for the smallest `p` on the boundary curve whose filtered POVM
/// state violates CHSH.
pub fn povm_chsh_threshold(tol: f64) -> Result<f64> {
    if tol.is_nan() || tol < 1e-6 {
        return Err(SteerError::OutOfRange(format!("tolerance must be >= 1e-6, got {tol}")));
    }
    let (mut lo, mut hi) = THRESHOLD_BRACKET;
    // single false -> true switch across the bracket
    let probes: Vec<bool> = (0..=32)
        .map(|i| threshold_predicate(lo + (hi - lo) * i as f64 / 32.0))
        .collect::<Result<_>>()?;
    if probes[0] || !probes[32] {
        return Err(SteerError::Bracket(format!(
            "predicate is {} at {lo} and {} at {hi}",
            probes[0], probes[32]
        )));
    }
    if probes.windows(2).any(|w| w[0] && !w[1]) {
        return Err(SteerError::Bracket(
            "predicate is not monotone across the bracket".into(),
        ));
    }
    for _ in 0..60 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if threshold_predicate(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Separable,
    BothUnsteerable,
    OneWay,
    Unresolved,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::Separable => "Separable",
            Region::BothUnsteerable => "BothUnsteerable",
            Region::OneWay => "OneWay",
            Region::Unresolved => "Unresolved",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub p: f64,
    pub chi: f64,
    pub entangled: bool,
    pub unsteerable_a_to_b: bool,
    pub steerable_b_to_a: bool,
    /// The B->A flag is taken from known results on filtered Werner states,
    /// not from a steering test run here.
    pub steerable_b_to_a_provenance: String,
    pub one_way: bool,
    pub chsh_value: f64,
    pub criterion_max: f64,
    pub ppt_min_eigenvalue: f64,
    pub region_label: Region,
}

pub fn classify(params: FamilyParams, opts: &CriterionOptions) -> Result<ClassificationRecord> {
    let rho = family_state(params);
    let entangled = params.p > 1.0 / 3.0;
    let unsteerable_a_to_b = unsteerable_ab_condition(params);
    let steerable_b_to_a = params.p > 0.5;
    let one_way = unsteerable_a_to_b && steerable_b_to_a;
    let region_label = if !entangled {
        Region::Separable
    } else if !steerable_b_to_a {
        Region::BothUnsteerable
    } else if one_way {
        Region::OneWay
    } else {
        Region::Unresolved
    };
    let canonical = canonicalize(&rho)?.canonical;
    let criterion_max = evaluate_criterion(&canonical, opts)?.max_value;
    Ok(ClassificationRecord {
        p: params.p,
        chi: params.chi,
        entangled,
        unsteerable_a_to_b,
        steerable_b_to_a,
        steerable_b_to_a_provenance: "analytic-citation".into(),
        one_way,
        chsh_value: horodecki_chsh(&rho),
        criterion_max,
        ppt_min_eigenvalue: rho.ppt_min_eigenvalue(),
        region_label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub p_range: (f64, f64),
    pub chi_range: (f64, f64),
    pub p_steps: usize,
    pub chi_steps: usize,
}

impl ScanSpec {
    /// `p` over `[0, 1]`, `chi` over `[pi/(4 chi_steps), pi/4]`.
    pub fn full(p_steps: usize, chi_steps: usize) -> Self {
        Self {
            p_range: (0.0, 1.0),
            chi_range: (FRAC_PI_4 / chi_steps.max(1) as f64, FRAC_PI_4),
            p_steps,
            chi_steps,
        }
    }

    fn axis(range: (f64, f64), steps: usize) -> Vec<f64> {
        match steps {
            0 => vec![],
            1 => vec![range.0],
            _ => (0..steps)
                .map(|i| range.0 + (range.1 - range.0) * i as f64 / (steps - 1) as f64)
                .collect(),
        }
    }

    pub fn points(&self) -> Result<Vec<FamilyParams>> {
        let ps = Self::axis(self.p_range, self.p_steps);
        let chis = Self::axis(self.chi_range, self.chi_steps);
        let mut out = Vec::with_capacity(ps.len() * chis.len());
        for &p in &ps {
            for &chi in &chis {
                out.push(FamilyParams::new(p, chi)?);
            }
        }
        Ok(out)
    }
}

/// Classifies every grid point; rows come back ordered by `(p, chi)`.
pub fn scan_grid(spec: &ScanSpec, opts: &CriterionOptions) -> Result<Vec<ClassificationRecord>> {
    spec.points()?.into_par_iter().map(|pt| classify(pt, opts)).collect()
}

pub const CSV_HEADER: [&str; 8] = [
    "p",
    "chi",
    "entangled",
    "unsteerable_AB",
    "steerable_BA",
    "region_label",
    "criterion_max",
    "chsh_M",
];

/// Formats with 9 significant digits, `%.9g` style.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (_, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let (mant, _) = sci.split_once('e').unwrap();
        let mant = trim_zeros(mant);
        return format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_scan_csv<W: Write>(rows: &[ClassificationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| SteerError::Input(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            sig9(r.p),
            sig9(r.chi),
            r.entangled.to_string(),
            r.unsteerable_a_to_b.to_string(),
            r.steerable_b_to_a.to_string(),
            r.region_label.label().to_string(),
            sig9(r.criterion_max),
            sig9(r.chsh_value),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| SteerError::Input(e.to_string()))?;
    Ok(())
}
