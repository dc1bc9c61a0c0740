//! JSON scenario and measurement files.
//!
//! Matrices are nested row-major arrays, vectors are flat arrays, and every
//! document carries `"version": 1`. Floats are written with round-trip
//! precision, so loading a saved scenario reproduces it bit for bit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{NominalInput, Scenario};
use crate::error::{Error, Result};
use crate::plant::{IoWindow, LtiSystem, SafetySet};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SafetyDoc {
    h: Vec<Vec<f64>>,
    g: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NominalDoc {
    Zero,
    Sinusoid { amplitude: f64 },
    Random { scale: f64, seed: u64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    version: u32,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    safety: SafetyDoc,
    s: usize,
    q: usize,
    attacked: Vec<usize>,
    fake_states: Vec<Vec<f64>>,
    fake_assignment: Vec<usize>,
    x_true: Vec<f64>,
    u_nom: NominalDoc,
    seed: u64,
    horizon: usize,
    gamma: f64,
    window: usize,
}

/// Recorded inputs `u(0..t)` and outputs `y(0..=t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoData {
    pub version: u32,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl IoData {
    pub fn from_window(win: &IoWindow) -> Self {
        IoData {
            version: SCENARIO_VERSION,
            inputs: win.inputs().map(|u| u.iter().copied().collect()).collect(),
            outputs: win.outputs().map(|y| y.iter().copied().collect()).collect(),
        }
    }

    pub fn to_window(&self) -> Result<IoWindow> {
        let vecs = |rows: &[Vec<f64>]| rows.iter().map(|r| DVector::from_column_slice(r)).collect();
        IoWindow::from_sequences(vecs(&self.inputs), vecs(&self.outputs))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_version(text)?;
        serde_json::from_str(text).map_err(parse_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse(format!("line {}, column {}: {}", e.line(), e.column(), e))
}

fn check_version(text: &str) -> Result<()> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(parse_error)?;
    match probe.version {
        Some(SCENARIO_VERSION) => Ok(()),
        Some(found) => Err(Error::UnsupportedVersion {
            found,
            expected: SCENARIO_VERSION,
        }),
        None => Err(Error::Parse("missing field `version`".into())),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(field: &str, rows: &[Vec<f64>], cols_if_empty: usize) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(cols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("field `{field}`: ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(msg),
        other => Error::Parse(format!("field `{name}`: {other}")),
    })
}

impl Scenario {
    pub fn to_json(&self) -> String {
        let doc = ScenarioDoc {
            version: SCENARIO_VERSION,
            a: rows_of(self.sys.a()),
            b: rows_of(self.sys.b()),
            c: rows_of(self.sys.c()),
            safety: SafetyDoc {
                h: rows_of(self.safety.h()),
                g: self.safety.g().iter().copied().collect(),
            },
            s: self.s,
            q: self.q,
            attacked: self.attacked.clone(),
            fake_states: self.fake_states.iter().map(|f| f.iter().copied().collect()).collect(),
            fake_assignment: self.fake_assignment.clone(),
            x_true: self.x_true.iter().copied().collect(),
            u_nom: match self.u_nom {
                NominalInput::Zero => NominalDoc::Zero,
                NominalInput::Sinusoid { amplitude } => NominalDoc::Sinusoid { amplitude },
                NominalInput::Random { scale, seed } => NominalDoc::Random { scale, seed },
            },
            seed: self.seed,
            horizon: self.horizon,
            gamma: self.gamma,
            window: self.window,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("plain data serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        check_version(text)?;
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(parse_error)?;
        let a = matrix("a", &doc.a, 0)?;
        let n = a.nrows();
        let b = matrix("b", &doc.b, 0)?;
        let c = matrix("c", &doc.c, n)?;
        let sys = field("a/b/c", LtiSystem::new(a, b, c))?;
        let x_true = vector(&doc.x_true);
        if x_true.len() != n {
            return Err(Error::Parse(format!("field `x_true`: expected {n} entries")));
        }
        let h = matrix("safety.h", &doc.safety.h, n)?;
        let g = vector(&doc.safety.g);
        let safety = SafetySet::new(h.clone(), g.clone()).or_else(|_| SafetySet::with_witness(h, g, &x_true));
        let safety = field("safety", safety)?;
        let fake_states: Vec<DVector<f64>> = doc.fake_states.iter().map(|f| vector(f)).collect();
        if fake_states.iter().any(|f| f.len() != n) {
            return Err(Error::Parse(format!("field `fake_states`: expected {n} entries each")));
        }
        let scenario = Scenario {
            sys,
            safety,
            s: doc.s,
            q: doc.q,
            attacked: doc.attacked,
            fake_states,
            fake_assignment: doc.fake_assignment,
            x_true,
            u_nom: match doc.u_nom {
                NominalDoc::Zero => NominalInput::Zero,
                NominalDoc::Sinusoid { amplitude } => NominalInput::Sinusoid { amplitude },
                NominalDoc::Random { scale, seed } => NominalInput::Random { scale, seed },
            },
            seed: doc.seed,
            horizon: doc.horizon,
            gamma: doc.gamma,
            window: doc.window,
        };
        if scenario.attacked.len() > scenario.s {
            return Err(Error::Parse(format!(
                "field `attacked`: {} sensors exceed s = {}",
                scenario.attacked.len(),
                scenario.s
            )));
        }
        if scenario.fake_assignment.len() != scenario.attacked.len()
            || scenario
                .fake_assignment
                .iter()
                .any(|&k| k >= scenario.fake_states.len())
            || scenario.attacked.iter().any(|&i| i >= scenario.sys.p())
        {
            return Err(Error::Parse(
                "field `fake_assignment`: inconsistent with `attacked`".into(),
            ));
        }
        Ok(scenario)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }
}
