//! Joint measurability of dichotomic qubit POVMs
//! `M_+ = (k 1 + m.sigma)/2`, via the steering bridge with `rho = 1/2`:
//! the assemblage `sigma_{+-|x} = M_{+-|x}/2` is reproduced by the cap model
//! iff `k(k-2) + 2||m|| <= 0`, and the cap model's hidden states then act as
//! a continuous parent POVM `G_lambda = |lambda><lambda| / (2 pi)`.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SteerError};
use crate::lhs_model::{fit_response, MixedResponse};
use crate::qubit_algebra::{bloch_operator, c, identity2, EigPair, Mat2};
use crate::sphere::fibonacci_lattice;

const JM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPovm", into = "RawPovm")]
pub struct DichotomicQubitPovm {
    k: f64,
    m: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPovm {
    k: f64,
    m: [f64; 3],
}

impl TryFrom<RawPovm> for DichotomicQubitPovm {
    type Error = SteerError;

    fn try_from(r: RawPovm) -> Result<Self> {
        Self::new(r.k, Vector3::from(r.m))
    }
}

impl From<DichotomicQubitPovm> for RawPovm {
    fn from(p: DichotomicQubitPovm) -> Self {
        RawPovm {
            k: p.k,
            m: [p.m.x, p.m.y, p.m.z],
        }
    }
}

impl DichotomicQubitPovm {
    /// Requires `||m|| <= k <= 2 - ||m||`, i.e. both effects positive.
    pub fn new(k: f64, m: Vector3<f64>) -> Result<Self> {
        let n = m.norm();
        if !(k.is_finite() && n.is_finite()) || n > k + JM_TOL || k > 2.0 - n + JM_TOL {
            return Err(SteerError::Precondition(format!(
                "invalid dichotomic POVM: need ||m|| <= k <= 2 - ||m||, got k = {k}, ||m|| = {n}"
            )));
        }
        Ok(Self { k, m })
    }

    /// `(1 +- eta n.sigma)/2`.
    pub fn unsharp(eta: f64, n: &Vector3<f64>) -> Result<Self> {
        Self::new(1.0, n.normalize() * eta)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn m(&self) -> &Vector3<f64> {
        &self.m
    }

    pub fn plus_effect(&self) -> Mat2 {
        (identity2() * c(self.k) + bloch_operator(&self.m)) * c(0.5)
    }

    pub fn minus_effect(&self) -> Mat2 {
        identity2() - self.plus_effect()
    }

    /// The same measurement with outcomes swapped: `(2 - k, -m)`.
    pub fn relabeled(&self) -> Self {
        Self {
            k: 2.0 - self.k,
            m: -self.m,
        }
    }
}

/// `k(k-2) + 2||m||`.
pub fn jm_value(povm: &DichotomicQubitPovm) -> f64 {
    povm.k * (povm.k - 2.0) + 2.0 * povm.m.norm()
}

pub fn jm_sufficient(povm: &DichotomicQubitPovm) -> bool {
    jm_value(povm) <= JM_TOL
}

/// `sigma_{+-} = M_{+-}/2`.
pub fn povm_to_assemblage(povm: &DichotomicQubitPovm) -> (Mat2, Mat2) {
    (povm.plus_effect() * c(0.5), povm.minus_effect() * c(0.5))
}

/// Cap post-processing of the parent POVM that reproduces `M_+`.
pub fn parent_postprocessing(povm: &DichotomicQubitPovm) -> Result<MixedResponse> {
    let n = povm.m.norm();
    let s_hat = if n > 1e-15 { povm.m / n } else { Vector3::z() };
    let target = EigPair::new((povm.k + n) / 4.0, (povm.k - n) / 4.0);
    fit_response(target, s_hat)
}

/// A continuous family of POVMs indexed by a direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BuiltinFamily {
    /// `M_{+|n} = (1 + eta n.sigma)/2` for every unit `n`.
    Unsharp { eta: f64 },
    /// One fixed measurement.
    Constant { k: f64, m: [f64; 3] },
    /// `k_n = k0 + k1.n`, `m_n = eta n + v`. Only sampled; certifies when a
    /// non-positive `bound` on the condition is supplied.
    Affine {
        k0: f64,
        k1: [f64; 3],
        eta: f64,
        v: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
}

impl BuiltinFamily {
    fn affine_member(k0: f64, k1: &[f64; 3], eta: f64, v: &[f64; 3], n: &Vector3<f64>) -> Result<DichotomicQubitPovm> {
        DichotomicQubitPovm::new(k0 + Vector3::from(*k1).dot(n), n * eta + Vector3::from(*v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PovmFamily {
    Builtin(BuiltinFamily),
    List(Vec<DichotomicQubitPovm>),
}

impl PovmFamily {
    pub fn from_json(text: &str) -> Result<Self> {
        let fam: Self = serde_json::from_str(text).map_err(|e| SteerError::Input(e.to_string()))?;
        fam.validate()?;
        Ok(fam)
    }

    fn validate(&self) -> Result<()> {
        match self {
            PovmFamily::Builtin(BuiltinFamily::Unsharp { eta }) => {
                if !(0.0..=1.0).contains(eta) {
                    return Err(SteerError::OutOfRange(format!("eta = {eta} outside [0, 1]")));
                }
            }
            PovmFamily::Builtin(BuiltinFamily::Constant { k, m }) => {
                DichotomicQubitPovm::new(*k, Vector3::from(*m))?;
            }
            PovmFamily::Builtin(BuiltinFamily::Affine { k0, k1, eta, v, .. }) => {
                if ![*k0, *eta].iter().chain(k1).chain(v).all(|x| x.is_finite()) {
                    return Err(SteerError::Input("non-finite affine family parameter".into()));
                }
            }
            PovmFamily::List(list) => {
                if list.is_empty() {
                    return Err(SteerError::Input("empty POVM list".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JmVerdict {
    /// The sufficient condition holds for every member of the family.
    CertifiedJointlyMeasurable,
    /// Some member fails the sufficient condition (no claim either way
    /// about joint measurability).
    NotCertified,
    /// Every sampled member passes, but no bound covers the unsampled ones.
    SampledOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JmReport {
    pub verdict: JmVerdict,
    pub samples: usize,
    pub passing: usize,
    /// Largest `k(k-2) + 2||m||` seen.
    pub worst_value: f64,
    /// The same after swapping outcome labels on every member.
    pub worst_value_relabeled: f64,
    /// How the verdict was reached.
    pub basis: String,
}

fn tally(members: &[DichotomicQubitPovm]) -> (usize, f64, f64) {
    let passing = members.iter().filter(|p| jm_sufficient(p)).count();
    let worst = members.iter().map(jm_value).fold(f64::NEG_INFINITY, f64::max);
    let worst_rel = members
        .iter()
        .map(|p| jm_value(&p.relabeled()))
        .fold(f64::NEG_INFINITY, f64::max);
    (passing, worst, worst_rel)
}

/// Tests a family on `grid_n` Fibonacci directions and certifies it when
/// the condition is direction independent or the family is finite.
pub fn jm_family_sampler(family: &PovmFamily, grid_n: usize) -> Result<JmReport> {
    family.validate()?;
    match family {
        PovmFamily::Builtin(BuiltinFamily::Unsharp { eta }) => {
            let members = fibonacci_lattice(grid_n.max(1))
                .par_iter()
                .map(|n| DichotomicQubitPovm::unsharp(*eta, n))
                .collect::<Result<Vec<_>>>()?;
            let (passing, worst, worst_rel) = tally(&members);
            // k = 1 for every member: the condition is 2 eta - 1 <= 0
            let exact = 2.0 * eta - 1.0;
            Ok(JmReport {
                verdict: if exact <= JM_TOL {
                    JmVerdict::CertifiedJointlyMeasurable
                } else {
                    JmVerdict::NotCertified
                },
                samples: members.len(),
                passing,
                worst_value: worst,
                worst_value_relabeled: worst_rel,
                basis: format!("direction-independent: 2*eta - 1 = {exact}"),
            })
        }
        PovmFamily::Builtin(BuiltinFamily::Constant { k, m }) => {
            let p = DichotomicQubitPovm::new(*k, Vector3::from(*m))?;
            finite(&[p], "single measurement")
        }
        PovmFamily::Builtin(BuiltinFamily::Affine { k0, k1, eta, v, bound }) => {
            jm_custom_family(|n| BuiltinFamily::affine_member(*k0, k1, *eta, v, n), *bound, grid_n)
        }
        PovmFamily::List(list) => finite(list, "finite set, every member checked"),
    }
}

fn finite(members: &[DichotomicQubitPovm], basis: &str) -> Result<JmReport> {
    let (passing, worst, worst_rel) = tally(members);
    Ok(JmReport {
        verdict: if passing == members.len() {
            JmVerdict::CertifiedJointlyMeasurable
        } else {
            JmVerdict::NotCertified
        },
        samples: members.len(),
        passing,
        worst_value: worst,
        worst_value_relabeled: worst_rel,
        basis: basis.into(),
    })
}

/// Samples an arbitrary family `x -> M_x`. `bound`, if given, must be an
/// upper bound on `k_x(k_x - 2) + 2||m_x||` over all `x`; only then can the
/// report certify.
pub fn jm_custom_family<F>(family: F, bound: Option<f64>, grid_n: usize) -> Result<JmReport>
where
    F: Fn(&Vector3<f64>) -> Result<DichotomicQubitPovm> + Sync,
{
    let members = fibonacci_lattice(grid_n.max(1))
        .par_iter()
        .map(&family)
        .collect::<Result<Vec<_>>>()?;
    let (passing, worst, worst_rel) = tally(&members);
    let (verdict, basis) = if passing < members.len() {
        (JmVerdict::NotCertified, "sampled member fails".to_string())
    } else {
        match bound {
            Some(b) if b <= JM_TOL => (JmVerdict::CertifiedJointlyMeasurable, format!("user bound {b}")),
            Some(b) => (JmVerdict::SampledOnly, format!("user bound {b} is positive")),
            None => (JmVerdict::SampledOnly, "no global bound supplied".to_string()),
        }
    };
    Ok(JmReport {
        verdict,
        samples: members.len(),
        passing,
        worst_value: worst,
        worst_value_relabeled: worst_rel,
        basis,
    })
}
