//! JSON encodings shared by the command line and the reports.
//!
//! Matrices are written as row-major nested arrays of `[re, im]` pairs.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SteerError};
use crate::qubit_algebra::{Mat4, PauliForm, TwoQubitState, C64};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &Mat4) -> JsonMatrix {
    (0..4)
        .map(|i| (0..4).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &JsonMatrix) -> Result<Mat4> {
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(SteerError::Input("matrix must be 4x4".into()));
    }
    let mut m = Mat4::zeros();
    for (i, row) in rows.iter().enumerate() {
        for (j, &[re, im]) in row.iter().enumerate() {
            if !re.is_finite() || !im.is_finite() {
                return Err(SteerError::Input(format!("non-finite entry at ({i}, {j})")));
            }
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

/// `#[serde(with = "steerlab_core::io::mat4")]`
pub mod mat4 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat4, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat4, D::Error> {
        let rows = JsonMatrix::deserialize(d)?;
        matrix_from_json(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serializes a validated state as its matrix.
pub mod state {
    use super::*;

    pub fn serialize<S: Serializer>(st: &TwoQubitState, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_json(st.matrix()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<TwoQubitState, D::Error> {
        let m = mat4::deserialize(d)?;
        TwoQubitState::new(m).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliJson {
    pub a: [f64; 3],
    pub b: [f64; 3],
    #[serde(rename = "T")]
    pub t: [[f64; 3]; 3],
}

impl From<&PauliForm> for PauliJson {
    fn from(f: &PauliForm) -> Self {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = f.t[(i, j)];
            }
        }
        Self {
            a: f.a.into(),
            b: f.b.into(),
            t,
        }
    }
}

impl From<&PauliJson> for PauliForm {
    fn from(p: &PauliJson) -> Self {
        let t = Matrix3::from_fn(|i, j| p.t[i][j]);
        PauliForm::new(Vector3::from(p.a), Vector3::from(p.b), t)
    }
}

/// A state file holds exactly one of `matrix` or `pauli`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauli: Option<PauliJson>,
}

impl StateFile {
    pub fn from_matrix(m: &Mat4) -> Self {
        Self {
            matrix: Some(matrix_to_json(m)),
            pauli: None,
        }
    }

    pub fn from_pauli(f: &PauliForm) -> Self {
        Self {
            matrix: None,
            pauli: Some(f.into()),
        }
    }

    pub fn to_state(&self) -> Result<TwoQubitState> {
        match (&self.matrix, &self.pauli) {
            (Some(m), None) => TwoQubitState::new(matrix_from_json(m)?),
            (None, Some(p)) => {
                let form = PauliForm::from(p);
                if form.max_component_norm().is_nan() {
                    return Err(SteerError::Input("non-finite Pauli coefficient".into()));
                }
                TwoQubitState::from_pauli(&form)
            }
            _ => Err(SteerError::Input(
                "state file must contain exactly one of \"matrix\" or \"pauli\"".into(),
            )),
        }
    }
}

pub fn parse_state_json(text: &str) -> Result<TwoQubitState> {
    let file: StateFile = serde_json::from_str(text).map_err(|e| SteerError::Input(format!("malformed JSON: {e}")))?;
    file.to_state()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let w = TwoQubitState::werner(0.3).unwrap();
        let text = serde_json::to_string(&StateFile::from_matrix(w.matrix())).unwrap();
        let back = parse_state_json(&text).unwrap();
        assert_eq!(back.matrix(), w.matrix());
    }

    #[test]
    fn pauli_input() {
        let text = r#"{"pauli": {"a": [0,0,0], "b": [0,0,0], "T": [[-0.5,0,0],[0,-0.5,0],[0,0,-0.5]]}}"#;
        let st = parse_state_json(text).unwrap();
        let w = TwoQubitState::werner(0.5).unwrap();
        assert!((st.matrix() - w.matrix()).norm() < 1e-15);
    }

    #[test]
    fn rejects_both_or_neither() {
        assert!(matches!(parse_state_json("{}"), Err(SteerError::Input(_))));
        let w = StateFile::from_matrix(TwoQubitState::maximally_mixed().matrix());
        let mut both = w.clone();
        both.pauli = Some((&PauliForm::maximally_mixed()).into());
        let text = serde_json::to_string(&both).unwrap();
        assert!(matches!(parse_state_json(&text), Err(SteerError::Input(_))));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_shape() {
        assert!(parse_state_json(r#"{"matrix": [[[1,0]]], "extra": 1}"#).is_err());
        assert!(matches!(
            parse_state_json(r#"{"matrix": [[[1,0]]]}"#),
            Err(SteerError::Input(_))
        ));
        assert!(matches!(parse_state_json("not json"), Err(SteerError::Input(_))));
    }

    #[test]
    fn trace_defect_reported() {
        let mut m = *TwoQubitState::maximally_mixed().matrix();
        m[(0, 0)] += C64::new(0.1, 0.0);
        let text = serde_json::to_string(&StateFile::from_matrix(&m)).unwrap();
        let err = parse_state_json(&text).unwrap_err();
        assert!(err.to_string().contains("trace"), "{err}");
    }
}
