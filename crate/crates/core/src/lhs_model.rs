//! The local hidden state model behind the criterion: hidden pure states
//! uniform on the Bloch sphere, and for each measurement a spherical-cap
//! response function, possibly mixed with the constant outcome -1.
//!
//! A cap `{lambda : s.lambda >= c}` prepares the sub-normalized operator
//! `alpha' |s><s| + beta' |-s><-s|` with
//! `beta' = (1-c)^2/8` and `alpha' = sqrt(2 beta') - beta'`.
//! Mixing with weight `w` scales both along the ray from the origin, so a
//! target `(alpha, beta)` is reachable iff `(alpha+beta)^2 <= 2 beta`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical_form::CanonicalState;
use crate::criterion::{steered_eigs, steered_state, MeasurementDirection};
use crate::error::{Result, SteerError};
use crate::qubit_algebra::{c, identity2, qubit_state, trace_distance, EigPair, Mat2};

/// Slack on `(alpha+beta)^2 - 2 beta` before a target is declared
/// unreachable. Targets inside the slack are clipped to `w = 1`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

pub const MIN_SAMPLES: usize = 1000;

const CHUNK: usize = 8192;

/// Output +1 iff the hidden Bloch vector lies in the cap `s.lambda >= c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapResponse {
    pub s_hat: [f64; 3],
    pub c: f64,
}

impl CapResponse {
    pub fn new(s_hat: Vector3<f64>, c: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&c) {
            return Err(SteerError::OutOfRange(format!("cap threshold {c} outside [-1, 1]")));
        }
        let n = s_hat.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(SteerError::Precondition(format!(
                "cap axis must be a unit vector, norm {n}"
            )));
        }
        Ok(Self {
            s_hat: [s_hat.x, s_hat.y, s_hat.z],
            c,
        })
    }

    pub fn axis(&self) -> Vector3<f64> {
        Vector3::from(self.s_hat)
    }

    /// Cap half-angle `arccos c`.
    pub fn angle(&self) -> f64 {
        self.c.acos()
    }

    #[inline]
    pub fn contains(&self, lambda: &Vector3<f64>) -> bool {
        // sgn(0) counts as +1
        self.axis().dot(lambda) - self.c >= 0.0
    }
}

/// With probability `w` answer according to `cap`, otherwise answer -1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedResponse {
    pub cap: CapResponse,
    pub w: f64,
}

impl MixedResponse {
    /// `p(+ | lambda)`.
    #[inline]
    pub fn p_plus(&self, lambda: &Vector3<f64>) -> f64 {
        if self.cap.contains(lambda) {
            self.w
        } else {
            0.0
        }
    }

    /// The operator `int sigma_lambda p(+|lambda) dlambda`, integrating over
    /// the cap in closed form.
    pub fn prepared_operator(&self) -> Mat2 {
        let cos_c = self.cap.angle().cos();
        let sum = (1.0 - cos_c) / 2.0;
        let diff = (1.0 - cos_c * cos_c) / 4.0;
        let alpha = (sum + diff) / 2.0;
        let beta = (sum - diff) / 2.0;
        let s = self.cap.axis();
        (qubit_state(&s) * c(alpha) + qubit_state(&-s) * c(beta)) * c(self.w)
    }
}

/// Eigenvalues prepared by a pure cap of threshold `c`.
pub fn cap_eigenvalues(c: f64) -> Result<EigPair> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(SteerError::OutOfRange(format!("cap threshold {c} outside [-1, 1]")));
    }
    let beta = (1.0 - c) * (1.0 - c) / 8.0;
    let alpha = (2.0 * beta).sqrt() - beta;
    Ok(EigPair { alpha, beta })
}

/// The ray construction: `c = (r-3)/(r+1)` with `r = alpha/beta`, and
/// `w = (alpha+beta)^2 / (2 beta)`.
pub fn fit_response(target: EigPair, s_hat: Vector3<f64>) -> Result<MixedResponse> {
    let EigPair { alpha, beta } = target;
    if alpha < beta || beta < -FEASIBILITY_TOL {
        return Err(SteerError::Precondition(format!(
            "need alpha >= beta >= 0, got ({alpha}, {beta})"
        )));
    }
    let beta = beta.max(0.0);
    if target.cap_excess() > FEASIBILITY_TOL {
        return Err(SteerError::NotReproducible {
            alpha,
            beta,
            direction: None,
        });
    }
    if beta <= 1e-300 {
        // alpha ~ 0 as well: nothing to prepare
        return Ok(MixedResponse {
            cap: CapResponse::new(s_hat, 1.0)?,
            w: 0.0,
        });
    }
    let r = alpha / beta;
    let c = ((r - 3.0) / (r + 1.0)).clamp(-1.0, 1.0);
    let w = ((alpha + beta) * (alpha + beta) / (2.0 * beta)).clamp(0.0, 1.0);
    Ok(MixedResponse {
        cap: CapResponse::new(s_hat, c)?,
        w,
    })
}

/// Samples Alice's outcome (+1 or -1) for hidden state `lambda`; `coin` is
/// uniform in `[0, 1)`.
pub fn respond(resp: &MixedResponse, lambda: &Vector3<f64>, coin: f64) -> i8 {
    if coin < resp.w && resp.cap.contains(lambda) {
        1
    } else {
        -1
    }
}

/// The response function the model assigns to measurement `x`.
pub fn response_for(state: &CanonicalState, x: &MeasurementDirection) -> Result<MixedResponse> {
    let tx = state.t.component_mul(x.vector());
    let s_hat = if tx.norm() > 1e-15 {
        tx.normalize()
    } else {
        Vector3::z()
    };
    fit_response(steered_eigs(state, x), s_hat).map_err(|e| match e {
        SteerError::NotReproducible { alpha, beta, .. } => SteerError::NotReproducible {
            alpha,
            beta,
            direction: Some(x.to_array()),
        },
        other => other,
    })
}

/// `sigma^LHS_{+|x}` computed from the cap integrals.
pub fn analytic_lhs_steered(state: &CanonicalState, x: &MeasurementDirection) -> Result<Mat2> {
    Ok(response_for(state, x)?.prepared_operator())
}

/// `sigma^LHS_{-|x}`, prepared by the complementary response.
pub fn analytic_lhs_steered_minus(state: &CanonicalState, x: &MeasurementDirection) -> Result<Mat2> {
    Ok(identity2() * c(0.5) - analytic_lhs_steered(state, x)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: [f64; 3],
    pub analytic_dist: f64,
    pub empirical_dist: f64,
    pub p_plus_exact: f64,
    pub p_plus_empirical: f64,
    pub cap_threshold: f64,
    pub mixing_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhsVerificationReport {
    pub n: usize,
    pub seed: u64,
    /// Acceptance threshold `5/sqrt(n)` on every empirical distance.
    pub empirical_tolerance: f64,
    /// Trace distance of `(1/n) sum |lambda><lambda|` from `1/2`.
    pub marginal_dist: f64,
    pub directions: Vec<DirectionReport>,
    pub passed: bool,
}

#[derive(Clone, Default)]
struct ChunkSums {
    marginal: Vector3<f64>,
    p: Vec<f64>,
    p_lambda: Vec<Vector3<f64>>,
    plus_count: Vec<u64>,
}

impl ChunkSums {
    fn new(k: usize) -> Self {
        Self {
            marginal: Vector3::zeros(),
            p: vec![0.0; k],
            p_lambda: vec![Vector3::zeros(); k],
            plus_count: vec![0; k],
        }
    }

    fn absorb(&mut self, other: &Self) {
        self.marginal += other.marginal;
        for i in 0..self.p.len() {
            self.p[i] += other.p[i];
            self.p_lambda[i] += other.p_lambda[i];
            self.plus_count[i] += other.plus_count[i];
        }
    }
}

/// Runs the model on `n` uniformly drawn hidden states and compares the
/// empirical assemblage with the quantum one. Each block of samples draws
/// from its own ChaCha stream, so the result does not depend on the
/// thread count.
pub fn simulate_assemblage(
    state: &CanonicalState,
    directions: &[MeasurementDirection],
    n: usize,
    seed: u64,
) -> Result<LhsVerificationReport> {
    if n < MIN_SAMPLES {
        return Err(SteerError::OutOfRange(format!(
            "need at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    let responses = directions
        .iter()
        .map(|x| response_for(state, x))
        .collect::<Result<Vec<_>>>()?;
    let k = directions.len();
    let chunks = n.div_ceil(CHUNK);

    let partial: Vec<ChunkSums> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ci as u64);
            let len = CHUNK.min(n - ci * CHUNK);
            let mut sums = ChunkSums::new(k);
            for _ in 0..len {
                let lambda = Vector3::from(UnitSphere.sample(&mut rng));
                let coin: f64 = rng.random();
                sums.marginal += lambda;
                for (d, resp) in responses.iter().enumerate() {
                    let pp = resp.p_plus(&lambda);
                    if pp > 0.0 {
                        sums.p[d] += pp;
                        sums.p_lambda[d] += lambda * pp;
                    }
                    if respond(resp, &lambda, coin) == 1 {
                        sums.plus_count[d] += 1;
                    }
                }
            }
            sums
        })
        .collect();

    let mut total = ChunkSums::new(k);
    for part in &partial {
        total.absorb(part);
    }

    let nf = n as f64;
    let marginal_dist = (total.marginal / nf).norm() / 2.0;
    let mut reports = Vec::with_capacity(k);
    for (d, x) in directions.iter().enumerate() {
        let quantum = steered_state(state, x);
        let analytic = responses[d].prepared_operator();
        let empirical =
            (identity2() * c(total.p[d]) + crate::qubit_algebra::bloch_operator(&total.p_lambda[d])) * c(0.5 / nf);
        reports.push(DirectionReport {
            direction: x.to_array(),
            analytic_dist: trace_distance(&analytic, &quantum)?,
            empirical_dist: trace_distance(&empirical, &quantum)?,
            p_plus_exact: quantum.trace().re,
            p_plus_empirical: total.plus_count[d] as f64 / nf,
            cap_threshold: responses[d].cap.c,
            mixing_weight: responses[d].w,
        });
    }
    let empirical_tolerance = 5.0 / nf.sqrt();
    let passed = reports
        .iter()
        .all(|r| r.empirical_dist <= empirical_tolerance && r.analytic_dist <= 1e-10);
    Ok(LhsVerificationReport {
        n,
        seed,
        empirical_tolerance,
        marginal_dist,
        directions: reports,
        passed,
    })
}

/// Least-squares slope of `log(mean empirical distance)` against `log n`.
/// The mean runs over all directions and over `replicas` independent
/// seeds derived from `seed`.
pub fn convergence_slope(
    state: &CanonicalState,
    directions: &[MeasurementDirection],
    sample_sizes: &[usize],
    seed: u64,
    replicas: usize,
) -> Result<f64> {
    let mut points = Vec::with_capacity(sample_sizes.len());
    for &n in sample_sizes {
        let mut acc = 0.0;
        let mut count = 0usize;
        for r in 0..replicas.max(1) {
            let rep = simulate_assemblage(state, directions, n, seed.wrapping_add(1_000_003 * r as u64))?;
            for d in &rep.directions {
                acc += d.empirical_dist;
                count += 1;
            }
        }
        points.push(((n as f64).ln(), (acc / count as f64).ln()));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Uniform sample helper shared with callers that want raw hidden states.
pub fn sample_hidden_states(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Vector3::from(UnitSphere.sample(&mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cap_eigenvalue_examples() {
        let e = cap_eigenvalues(1.0).unwrap();
        assert_eq!((e.alpha, e.beta), (0.0, 0.0));
        let e = cap_eigenvalues(-1.0).unwrap();
        assert!(close(e.alpha, 0.5, 1e-15) && close(e.beta, 0.5, 1e-15));
        let e = cap_eigenvalues(0.0).unwrap();
        assert!(close(e.alpha, 0.375, 1e-15) && close(e.beta, 0.125, 1e-15));
        assert!(cap_eigenvalues(1.5).is_err());
    }

    #[test]
    fn cap_integrals_match_curve() {
        for i in 0..=20 {
            let cth = -1.0 + i as f64 / 10.0;
            let resp = MixedResponse {
                cap: CapResponse::new(Vector3::z(), cth).unwrap(),
                w: 1.0,
            };
            let e = EigPair::of(&resp.prepared_operator()).unwrap();
            let want = cap_eigenvalues(cth).unwrap();
            assert!(close(e.alpha, want.alpha, 1e-14) && close(e.beta, want.beta, 1e-14));
        }
    }

    #[test]
    fn fit_examples() {
        let r = fit_response(EigPair::new(0.375, 0.125), Vector3::z()).unwrap();
        assert!(close(r.cap.c, 0.0, 1e-15) && close(r.w, 1.0, 1e-15));
        let r = fit_response(EigPair::new(0.5, 0.5), Vector3::z()).unwrap();
        assert!(close(r.cap.c, -1.0, 1e-15) && close(r.w, 1.0, 1e-15));
        let err = fit_response(EigPair::new(0.5, 0.0), Vector3::z()).unwrap_err();
        assert!(matches!(err, SteerError::NotReproducible { .. }));
        let r = fit_response(EigPair::new(0.25, 0.25), Vector3::z()).unwrap();
        assert!(close(r.cap.c, -1.0, 1e-15) && close(r.w, 0.5, 1e-15));
        let r = fit_response(EigPair::new(0.0, 0.0), Vector3::x()).unwrap();
        assert_eq!(r.w, 0.0);
    }

    #[test]
    fn fit_reproduces_target_exactly() {
        for &(a, b) in &[(0.3, 0.2), (0.12, 0.04), (0.26, 0.24), (0.05, 0.01)] {
            let target = EigPair::new(a, b);
            let r = fit_response(target, Vector3::x()).unwrap();
            let cap = cap_eigenvalues(r.cap.c).unwrap();
            assert!(close(r.w * cap.alpha, a, 1e-15) && close(r.w * cap.beta, b, 1e-15));
        }
    }

    #[test]
    fn respond_examples() {
        let hemi = MixedResponse {
            cap: CapResponse::new(Vector3::z(), 0.0).unwrap(),
            w: 1.0,
        };
        assert_eq!(respond(&hemi, &Vector3::z(), 0.3), 1);
        assert_eq!(respond(&hemi, &-Vector3::z(), 0.3), -1);
        assert_eq!(respond(&hemi, &Vector3::x(), 0.3), 1);
        let never = MixedResponse { w: 0.0, ..hemi };
        assert_eq!(respond(&never, &Vector3::z(), 0.0), -1);
    }

    #[test]
    fn analytic_examples() {
        let w = CanonicalState::werner(0.5);
        for x in MeasurementDirection::fibonacci(30) {
            let d = trace_distance(&analytic_lhs_steered(&w, &x).unwrap(), &steered_state(&w, &x)).unwrap();
            assert!(d < 1e-12);
        }
        let mm = CanonicalState::new(Vector3::zeros(), Vector3::zeros());
        let op = analytic_lhs_steered(&mm, &MeasurementDirection::y()).unwrap();
        assert!((op - identity2() * c(0.25)).norm() < 1e-15);
    }

    #[test]
    fn analytic_rejects_steerable_direction() {
        let rho_c = CanonicalState::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        let err = analytic_lhs_steered(&rho_c, &MeasurementDirection::z()).unwrap_err();
        match err {
            SteerError::NotReproducible { direction: Some(d), .. } => assert_eq!(d, [0.0, 0.0, 1.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn outputs_complete_to_bob_marginal() {
        let st = CanonicalState::new(Vector3::new(0.0, 0.1, 0.2), Vector3::new(0.3, -0.2, 0.1));
        let x = MeasurementDirection::new(Vector3::new(0.4, 0.1, -0.3)).unwrap();
        let sum = analytic_lhs_steered(&st, &x).unwrap() + analytic_lhs_steered_minus(&st, &x).unwrap();
        assert!((sum - identity2() * c(0.5)).norm() < 1e-15);
        let minus = MeasurementDirection::new(-x.vector()).unwrap();
        let d = trace_distance(
            &analytic_lhs_steered_minus(&st, &x).unwrap(),
            &steered_state(&st, &minus),
        )
        .unwrap();
        assert!(d < 1e-12);
    }

    #[test]
    fn simulate_rejects_small_n() {
        let w = CanonicalState::werner(0.5);
        assert!(simulate_assemblage(&w, &MeasurementDirection::axes(), 10, 1).is_err());
    }

    #[test]
    fn simulate_maximally_mixed() {
        let mm = CanonicalState::new(Vector3::zeros(), Vector3::zeros());
        let rep = simulate_assemblage(&mm, &MeasurementDirection::axes(), 100_000, 3).unwrap();
        for d in &rep.directions {
            assert!(d.empirical_dist < 1e-2, "{d:?}");
            assert!((d.p_plus_empirical - d.p_plus_exact).abs() <= 4.0 / (1e5_f64).sqrt());
        }
        assert!(rep.marginal_dist <= 4.0 / (1e5_f64).sqrt());
    }

    #[test]
    fn simulate_is_reproducible() {
        let w = CanonicalState::werner(0.5);
        let a = simulate_assemblage(&w, &MeasurementDirection::axes(), 20_000, 11).unwrap();
        let b = simulate_assemblage(&w, &MeasurementDirection::axes(), 20_000, 11).unwrap();
        assert_eq!(a, b);
        let c2 = simulate_assemblage(&w, &MeasurementDirection::axes(), 20_000, 12).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn simulate_names_failing_direction() {
        let rho_c = CanonicalState::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        let err =
            simulate_assemblage(&rho_c, &[MeasurementDirection::x(), MeasurementDirection::z()], 5000, 0).unwrap_err();
        assert!(err.to_string().contains("(0.000000, 0.000000, 1.000000)"), "{err}");
    }
}
