//! The unsteerability criterion
//! `max_x [(a.x)^2 + 2 ||T x||] <= 1` for a canonical state, evaluated
//! either in closed form (axially symmetric states) or by a certified
//! sphere search, plus assemblage primitives.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical_form::{CanonicalState, DEGENERACY_TOL};
use crate::error::{Result, SteerError};
use crate::qubit_algebra::{bloch_operator, c, identity2, kron, partial_trace_alice, EigPair, Mat2, TwoQubitState};
use crate::sphere::{covering_radius, fibonacci_lattice};

/// A unit Bloch vector labelling Alice's projective measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct MeasurementDirection(Vector3<f64>);

impl MeasurementDirection {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 1e-300) {
            return Err(SteerError::Precondition(format!("cannot normalize direction {v:?}")));
        }
        Ok(Self(v / n))
    }

    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        Self(crate::sphere::from_spherical(theta, phi))
    }

    pub fn x() -> Self {
        Self(Vector3::x())
    }

    pub fn y() -> Self {
        Self(Vector3::y())
    }

    pub fn z() -> Self {
        Self(Vector3::z())
    }

    pub fn axes() -> Vec<Self> {
        crate::sphere::axis_directions().into_iter().map(Self).collect()
    }

    pub fn fibonacci(n: usize) -> Vec<Self> {
        fibonacci_lattice(n).into_iter().map(Self).collect()
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }
}

impl From<MeasurementDirection> for [f64; 3] {
    fn from(d: MeasurementDirection) -> Self {
        d.to_array()
    }
}

impl TryFrom<[f64; 3]> for MeasurementDirection {
    type Error = SteerError;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(Vector3::from(v))
    }
}

/// `sigma_{+|x} = (1/4)[(1 + a.x) 1 + (T x).sigma]`.
pub fn steered_state(state: &CanonicalState, x: &MeasurementDirection) -> Mat2 {
    let x = x.vector();
    let tx = state.t.component_mul(x);
    (identity2() * c(1.0 + state.a.dot(x)) + bloch_operator(&tx)) * c(0.25)
}

/// `alpha, beta = (1 + a.x +- ||T x||)/4`.
pub fn steered_eigs(state: &CanonicalState, x: &MeasurementDirection) -> EigPair {
    let ax = state.a.dot(x.vector());
    let n = state.t.component_mul(x.vector()).norm();
    EigPair::new((1.0 + ax + n) / 4.0, (1.0 + ax - n) / 4.0)
}

/// `(a.x)^2 + 2 ||T x||`.
pub fn criterion_value_at(state: &CanonicalState, x: &MeasurementDirection) -> f64 {
    Maximand::from_canonical(state).value(x.vector())
}

/// The criterion function for a general (not necessarily diagonal)
/// correlation matrix.
#[derive(Clone, Debug)]
pub struct Maximand {
    a: Vector3<f64>,
    t: Matrix3<f64>,
    tt: Matrix3<f64>,
}

impl Maximand {
    /// `t[(i, j)] = Tr(rho sigma_i (x) sigma_j)`; Bob's steered Bloch vector
    /// is `t^T x`.
    pub fn new(a: Vector3<f64>, t: Matrix3<f64>) -> Self {
        let t = t.transpose();
        Self {
            a,
            t,
            tt: t.transpose() * t,
        }
    }

    pub fn from_canonical(state: &CanonicalState) -> Self {
        Self::new(state.a, state.correlation())
    }

    #[inline]
    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        let ax = self.a.dot(x);
        ax * ax + 2.0 * (self.t * x).norm()
    }

    /// Euclidean gradient; `None` where `T x` vanishes for nonzero `T`.
    pub fn gradient(&self, x: &Vector3<f64>) -> Option<Vector3<f64>> {
        let linear = self.a * (2.0 * self.a.dot(x));
        if self.tt.norm() < 1e-28 {
            return Some(linear);
        }
        let n = (self.t * x).norm();
        if n < 1e-14 {
            return None;
        }
        Some(linear + self.tt * x * (2.0 / n))
    }

    /// `2 ||a||^2 + 2 sigma_max(T)`, a Lipschitz constant on the sphere.
    pub fn lipschitz(&self) -> f64 {
        2.0 * self.a.norm_squared() + 2.0 * self.t.singular_values().max()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    CertifiedUnsteerable,
    CriterionViolated,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    AxialClosedForm,
    GridRefine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOptions {
    pub grid_n: usize,
    pub refine_iters: usize,
    /// Number of best lattice points used as ascent seeds.
    pub seeds: usize,
    /// Slack on the comparison with 1, absorbing rounding in states that
    /// sit exactly on the boundary.
    pub tolerance: f64,
    /// Skip the axial closed form even when it applies.
    pub force_grid: bool,
}

impl Default for CriterionOptions {
    fn default() -> Self {
        Self {
            grid_n: 20_000,
            refine_iters: 200,
            seeds: 16,
            tolerance: 1e-9,
            force_grid: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub max_value: f64,
    pub argmax: MeasurementDirection,
    pub certified_upper_bound: f64,
    pub verdict: Verdict,
    pub method: Method,
    pub lipschitz: Option<f64>,
    pub covering_radius: Option<f64>,
    pub options: CriterionOptions,
}

/// Maximizes the criterion over the sphere and classifies the state.
///
/// Axially symmetric states (`|t_i| = |t_j|` and `a` along the remaining
/// axis) are maximized exactly over `u = cos^2 theta`, where the maximand
/// `u a_k^2 + 2 sqrt(t_i^2 + u (t_k^2 - t_i^2))` is concave. Everything
/// else goes through a Fibonacci lattice, local ascent from the best
/// lattice points, and a Lipschitz certificate
/// `grid_max + L * covering_radius`.
pub fn evaluate_criterion(state: &CanonicalState, opts: &CriterionOptions) -> Result<CriterionReport> {
    if opts.grid_n < 100 {
        return Err(SteerError::Precondition(format!(
            "grid_n must be >= 100, got {}",
            opts.grid_n
        )));
    }
    if !opts.force_grid {
        if let Some((max_value, argmax)) = axial_maximum(state) {
            let verdict = if max_value <= 1.0 + opts.tolerance {
                Verdict::CertifiedUnsteerable
            } else {
                Verdict::CriterionViolated
            };
            return Ok(CriterionReport {
                max_value,
                argmax: MeasurementDirection::new(argmax)?,
                certified_upper_bound: max_value,
                verdict,
                method: Method::AxialClosedForm,
                lipschitz: None,
                covering_radius: None,
                options: *opts,
            });
        }
    }
    Ok(grid_refine(&Maximand::from_canonical(state), opts))
}

fn axial_maximum(state: &CanonicalState) -> Option<(f64, Vector3<f64>)> {
    for (k, i, j) in [(2usize, 0usize, 1usize), (0, 1, 2), (1, 2, 0)] {
        let sym = (state.t[i].abs() - state.t[j].abs()).abs() <= DEGENERACY_TOL
            && state.a[i].abs() <= DEGENERACY_TOL
            && state.a[j].abs() <= DEGENERACY_TOL;
        if !sym {
            continue;
        }
        let aa = state.a[k] * state.a[k];
        let xx = 0.5 * (state.t[i] * state.t[i] + state.t[j] * state.t[j]);
        let zz = state.t[k] * state.t[k];
        let f = |u: f64| u * aa + 2.0 * (xx + u * (zz - xx)).max(0.0).sqrt();

        // theta = 0 first so that ties resolve to the symmetry axis
        let mut candidates = vec![1.0, 0.0];
        if xx > zz && aa > 0.0 {
            let u = xx / (xx - zz) - (xx - zz) / (aa * aa);
            if (0.0..=1.0).contains(&u) {
                candidates.push(u);
            }
        }
        let (u_best, f_best) = candidates
            .into_iter()
            .map(|u| (u, f(u)))
            .fold(
                (1.0, f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        let mut dir = Vector3::zeros();
        dir[k] = u_best.sqrt();
        dir[i] = (1.0 - u_best).max(0.0).sqrt();
        return Some((f_best, dir));
    }
    None
}

fn lex_less(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    for i in 0..3 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// `(value, direction)` ordering: larger value first, then the
/// lexicographically smaller direction.
fn better(a: (f64, &Vector3<f64>), b: (f64, &Vector3<f64>)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && lex_less(a.1, b.1))
}

fn grid_refine(m: &Maximand, opts: &CriterionOptions) -> CriterionReport {
    let lattice = fibonacci_lattice(opts.grid_n);
    let values: Vec<f64> = lattice.par_iter().map(|x| m.value(x)).collect();

    let mut idx: Vec<usize> = (0..lattice.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let grid_max = values[idx[0]];

    let seeds: Vec<usize> = idx.iter().copied().take(opts.seeds.max(1)).collect();
    let refined: Vec<(f64, Vector3<f64>)> = seeds
        .par_iter()
        .map(|&s| ascend(m, lattice[s], opts.refine_iters))
        .collect();

    let (mut best_val, mut best_dir) = (grid_max, lattice[idx[0]]);
    for (v, d) in &refined {
        if better((*v, d), (best_val, &best_dir)) {
            best_val = *v;
            best_dir = *d;
        }
    }

    let lipschitz = m.lipschitz();
    let delta = covering_radius(opts.grid_n);
    let bound = (grid_max + lipschitz * delta).max(best_val);
    let verdict = if bound <= 1.0 + opts.tolerance {
        Verdict::CertifiedUnsteerable
    } else if best_val > 1.0 + opts.tolerance {
        Verdict::CriterionViolated
    } else {
        Verdict::Inconclusive
    };
    CriterionReport {
        max_value: best_val,
        argmax: MeasurementDirection(best_dir),
        certified_upper_bound: bound,
        verdict,
        method: Method::GridRefine,
        lipschitz: Some(lipschitz),
        covering_radius: Some(delta),
        options: *opts,
    }
}

/// Projected gradient ascent on the sphere with backtracking.
fn ascend(m: &Maximand, start: Vector3<f64>, iters: usize) -> (f64, Vector3<f64>) {
    let mut x = start;
    let mut f = m.value(&x);
    let mut step = 0.1;
    let mut kicks_left = 3;
    for _ in 0..iters {
        let Some(g) = m.gradient(&x) else {
            if kicks_left == 0 {
                break;
            }
            kicks_left -= 1;
            let kick = if x.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            x = (x + kick * 1e-6).normalize();
            f = m.value(&x);
            continue;
        };
        let tangent = g - x * g.dot(&x);
        if tangent.norm() < 1e-15 {
            break;
        }
        let mut s = step * 2.0;
        let mut moved = false;
        while s * tangent.norm() > 1e-12 {
            let cand = (x + tangent * s).normalize();
            let fc = m.value(&cand);
            if fc > f {
                x = cand;
                f = fc;
                step = s;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (f, x)
}

/// `sigma_{+-|x} = Tr_A[(M_{+-|x} (x) 1) rho]` with `M_{+-|x} = (1 +- x.sigma)/2`.
pub fn assemblage(rho: &TwoQubitState, directions: &[MeasurementDirection]) -> Vec<(Mat2, Mat2)> {
    directions
        .iter()
        .map(|x| {
            let proj = bloch_operator(x.vector()) * c(0.5);
            let plus = identity2() * c(0.5) + proj;
            let minus = identity2() * c(0.5) - proj;
            let sp = partial_trace_alice(&(kron(&plus, &identity2()) * rho.matrix()));
            let sm = partial_trace_alice(&(kron(&minus, &identity2()) * rho.matrix()));
            (sp, sm)
        })
        .collect()
}
