//! Certifying unsteerability of states that fail the criterion directly, by
//! writing them as `p sigma + (1 - p) rho_sep` with `sigma` certified and
//! `rho_sep` separable.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical_form::{canonicalize, canonicalize_matrix};
use crate::criterion::{evaluate_criterion, CriterionOptions, CriterionReport, Verdict};
use crate::error::{Result, SteerError};
use crate::qubit_algebra::{
    c, eigvals_hermitian, is_valid_state, kron, pauli, qubit_state, Mat4, TwoQubitState, ValidityReport,
};

pub const RECONSTRUCTION_TOL: f64 = 1e-9;
pub const PPT_TOL: f64 = 1e-12;
const MIN_P: f64 = 1e-3;
const PRODUCTS: usize = 4;
const RESTART_BUDGET: usize = 1000;
const BATCH: usize = 8;
const SUCCESS_SCORE: f64 = 1e-9;
const MIN_STEP: f64 = 1e-13;

/// One term of the separable part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeparableComponent {
    /// `(1 + sign sigma_k (x) sigma_k) / 4`.
    ClassicalCorrelation { axis: usize, sign: f64, weight: f64 },
    /// Product of two pure qubit states with the given Bloch vectors.
    Product {
        alice: [f64; 3],
        bob: [f64; 3],
        weight: f64,
    },
}

impl SeparableComponent {
    pub fn weight(&self) -> f64 {
        match self {
            Self::ClassicalCorrelation { weight, .. } | Self::Product { weight, .. } => *weight,
        }
    }

    fn matrix(&self) -> Mat4 {
        match self {
            Self::ClassicalCorrelation { axis, sign, .. } => {
                let s = pauli(*axis);
                (Mat4::identity() + kron(&s, &s) * c(*sign)) * c(0.25)
            }
            Self::Product { alice, bob, .. } => {
                kron(&qubit_state(&Vector3::from(*alice)), &qubit_state(&Vector3::from(*bob)))
            }
        }
    }
}

pub fn separable_mixture(components: &[SeparableComponent]) -> Mat4 {
    components
        .iter()
        .fold(Mat4::zeros(), |acc, k| acc + k.matrix() * c(k.weight()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub p: f64,
    #[serde(with = "crate::io::state")]
    pub sigma: TwoQubitState,
    #[serde(with = "crate::io::state")]
    pub rho_sep: TwoQubitState,
    pub components: Vec<SeparableComponent>,
    pub certificate: CriterionReport,
    /// Restart that produced the decomposition; `None` for the trivial one.
    pub restart: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub reconstruction_error: f64,
    pub rho_sep_ppt_min_eigenvalue: f64,
    pub sigma_validity: ValidityReport,
    pub sigma_verdict: Option<Verdict>,
    pub passed: bool,
}

/// `(rho - (1 - p) rho_sep) / p` together with its validity report.
pub fn extract_sigma(rho: &TwoQubitState, p: f64, rho_sep: &TwoQubitState) -> Result<(Mat4, ValidityReport)> {
    extract_sigma_matrix(rho.matrix(), p, rho_sep.matrix())
}

fn extract_sigma_matrix(rho: &Mat4, p: f64, rho_sep: &Mat4) -> Result<(Mat4, ValidityReport)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SteerError::OutOfRange(format!("p must lie in (0, 1], got {p}")));
    }
    let sigma = (rho - rho_sep * c(1.0 - p)) * c(1.0 / p);
    let report = is_valid_state(&sigma);
    Ok((sigma, report))
}

/// End-to-end check of a decomposition, independent of how it was found.
pub fn verify_decomposition(rho: &TwoQubitState, dec: &Decomposition) -> Result<DecompositionCheck> {
    let recon = dec.sigma.matrix() * c(dec.p) + dec.rho_sep.matrix() * c(1.0 - dec.p);
    let reconstruction_error = (recon - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rho_sep_ppt_min_eigenvalue = dec.rho_sep.ppt_min_eigenvalue();
    let sigma_validity = is_valid_state(dec.sigma.matrix());
    let sigma_verdict = match canonicalize(&dec.sigma) {
        Ok(rec) => Some(evaluate_criterion(&rec.canonical, &CriterionOptions::default())?.verdict),
        Err(_) => None,
    };
    let passed = dec.p > 0.0
        && dec.p <= 1.0
        && reconstruction_error <= RECONSTRUCTION_TOL
        && rho_sep_ppt_min_eigenvalue >= -PPT_TOL
        && sigma_validity.valid
        && sigma_verdict == Some(Verdict::CertifiedUnsteerable);
    Ok(DecompositionCheck {
        reconstruction_error,
        rho_sep_ppt_min_eigenvalue,
        sigma_validity,
        sigma_verdict,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Family {
    Axis { axis: usize, sign: f64 },
    General,
}

impl Family {
    fn dim(self) -> usize {
        match self {
            Self::Axis { .. } => 1,
            Self::General => 1 + 6 + 5 * PRODUCTS,
        }
    }

    fn start(self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![rng.random_range(0.05..1.0)];
        if self == Self::General {
            x.extend((0..6 + PRODUCTS).map(|_| rng.random_range(0.0..1.0)));
            for _ in 0..2 * PRODUCTS {
                x.push((1.0 - 2.0 * rng.random::<f64>()).acos());
                x.push(rng.random_range(0.0..std::f64::consts::TAU));
            }
        }
        x
    }

    fn initial_step(self, i: usize) -> f64 {
        match (self, i) {
            (_, 0) => 0.1,
            (Self::General, i) if i <= 6 + PRODUCTS => 0.1,
            _ => 0.3,
        }
    }

    fn decode(self, x: &[f64]) -> (f64, Vec<SeparableComponent>) {
        let p = x[0];
        match self {
            Self::Axis { axis, sign } => (
                p,
                vec![SeparableComponent::ClassicalCorrelation {
                    axis,
                    sign,
                    weight: 1.0,
                }],
            ),
            Self::General => {
                let raw = &x[1..7 + PRODUCTS];
                let total: f64 = raw.iter().map(|y| y * y).sum();
                let weight = |i: usize| {
                    if total > 0.0 {
                        raw[i] * raw[i] / total
                    } else {
                        1.0 / raw.len() as f64
                    }
                };
                let mut out = Vec::with_capacity(raw.len());
                for axis in 0..3 {
                    for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
                        out.push(SeparableComponent::ClassicalCorrelation {
                            axis,
                            sign,
                            weight: weight(2 * axis + j),
                        });
                    }
                }
                let angles = &x[7 + PRODUCTS..];
                let bloch = |t: f64, f: f64| [t.sin() * f.cos(), t.sin() * f.sin(), t.cos()];
                for k in 0..PRODUCTS {
                    let a = &angles[4 * k..4 * k + 4];
                    out.push(SeparableComponent::Product {
                        alice: bloch(a[0], a[1]),
                        bob: bloch(a[2], a[3]),
                        weight: weight(6 + k),
                    });
                }
                out.retain(|k| k.weight() > 0.0);
                (p, out)
            }
        }
    }
}

fn cheap_options() -> CriterionOptions {
    CriterionOptions {
        grid_n: 400,
        refine_iters: 60,
        seeds: 4,
        ..CriterionOptions::default()
    }
}

/// `max(criterion max - 1, PSD defect)` of the candidate `sigma`.
fn score(rho: &Mat4, p: f64, sep: &Mat4, opts: &CriterionOptions) -> f64 {
    let Ok((sigma, _)) = extract_sigma_matrix(rho, p, sep) else {
        return f64::INFINITY;
    };
    let defect = match eigvals_hermitian(&sigma) {
        Ok(ev) => (-ev[3]).max(0.0),
        Err(_) => return f64::INFINITY,
    };
    let crit = canonicalize_matrix(&sigma)
        .and_then(|rec| evaluate_criterion(&rec.canonical, opts))
        .map(|r| r.max_value);
    match crit {
        Ok(v) => (v - 1.0).max(defect),
        Err(_) => 10.0 + defect,
    }
}

fn try_certify(
    rho: &TwoQubitState,
    p: f64,
    components: Vec<SeparableComponent>,
    restart: usize,
) -> Option<Decomposition> {
    let sep = TwoQubitState::new(separable_mixture(&components)).ok()?;
    let (sigma, report) = extract_sigma(rho, p, &sep).ok()?;
    if !report.valid {
        return None;
    }
    let sigma = TwoQubitState::new(sigma).ok()?;
    let rec = canonicalize(&sigma).ok()?;
    let certificate = evaluate_criterion(&rec.canonical, &CriterionOptions::default()).ok()?;
    let dec = Decomposition {
        p,
        sigma,
        rho_sep: sep,
        components,
        certificate,
        restart: Some(restart),
    };
    verify_decomposition(rho, &dec).ok()?.passed.then_some(dec)
}

/// Coordinate descent from one random start. Returns a verified
/// decomposition or `None` once the step sizes collapse or the evaluation
/// budget runs out.
fn run_restart(rho: &TwoQubitState, family: Family, budget: usize, seed: u64, index: usize) -> Option<Decomposition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let opts = cheap_options();
    let m = rho.matrix();
    let eval = |x: &[f64]| {
        let (p, comps) = family.decode(x);
        score(m, p, &separable_mixture(&comps), &opts)
    };

    let mut x = family.start(&mut rng);
    let mut best = eval(&x);
    let mut used = 1;
    let mut steps: Vec<f64> = (0..family.dim()).map(|i| family.initial_step(i)).collect();
    let mut last_attempt = f64::INFINITY;

    while used < budget {
        if best <= SUCCESS_SCORE && best < last_attempt {
            last_attempt = best;
            let (p, comps) = family.decode(&x);
            if let Some(dec) = try_certify(rho, p, comps, index) {
                return Some(dec);
            }
        }
        if steps.iter().all(|&h| h < MIN_STEP) {
            break;
        }
        for i in 0..x.len() {
            if used >= budget {
                break;
            }
            if steps[i] < MIN_STEP {
                continue;
            }
            let mut moved = false;
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] += dir * steps[i];
                if i == 0 {
                    trial[0] = trial[0].clamp(MIN_P, 1.0);
                    if trial[0] == x[0] {
                        continue;
                    }
                }
                let v = eval(&trial);
                used += 1;
                if v < best {
                    best = v;
                    x = trial;
                    moved = true;
                    break;
                }
                if used >= budget {
                    break;
                }
            }
            if !moved {
                steps[i] *= 0.5;
            }
        }
    }
    if best <= SUCCESS_SCORE && best < last_attempt {
        let (p, comps) = family.decode(&x);
        return try_certify(rho, p, comps, index);
    }
    None
}

/// Searches for a decomposition `rho = p sigma + (1 - p) rho_sep` with
/// `sigma` certified unsteerable and `rho_sep` separable.
///
/// `budget` counts criterion evaluations. Restarts run in parallel batches;
/// the successful restart with the smallest index wins, so the result does
/// not depend on the thread count.
pub fn strengthen(rho: &TwoQubitState, budget: usize, seed: u64) -> Option<Decomposition> {
    if let Ok(rec) = canonicalize(rho) {
        if let Ok(certificate) = evaluate_criterion(&rec.canonical, &CriterionOptions::default()) {
            if certificate.verdict == Verdict::CertifiedUnsteerable {
                return Some(Decomposition {
                    p: 1.0,
                    sigma: rho.clone(),
                    rho_sep: TwoQubitState::maximally_mixed(),
                    components: Vec::new(),
                    certificate,
                    restart: None,
                });
            }
        }
    }

    let mut axes: Vec<Family> = (0..3)
        .flat_map(|axis| [1.0, -1.0].map(|sign| Family::Axis { axis, sign }))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    axes.shuffle(&mut rng);
    let family_of = |i: usize| axes.get(i).copied().unwrap_or(Family::General);

    let restarts = budget.div_ceil(RESTART_BUDGET);
    let mut start = 0;
    while start < restarts {
        let end = (start + BATCH).min(restarts);
        let found = (start..end)
            .into_par_iter()
            .map(|i| {
                let share = RESTART_BUDGET.min(budget - i * RESTART_BUDGET);
                run_restart(rho, family_of(i), share, seed, i)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .next();
        if found.is_some() {
            return found;
        }
        start = end;
    }
    None
}

/// The worked example: equal mixture of the isotropic state with
/// `T = diag(1/2, -1/2, 1/2)` and the z classically correlated state.
pub fn worked_example() -> TwoQubitState {
    let cc = separable_mixture(&[SeparableComponent::ClassicalCorrelation {
        axis: 2,
        sign: 1.0,
        weight: 1.0,
    }]);
    let zz = kron(&pauli(2), &pauli(2));
    let xx = kron(&pauli(0), &pauli(0));
    let yy = kron(&pauli(1), &pauli(1));
    let iso = (Mat4::identity() + (xx - yy + zz) * c(0.5)) * c(0.25);
    TwoQubitState::new((iso + cc) * c(0.5)).expect("valid example")
}
