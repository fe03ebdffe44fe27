//! Input files.
//!
//! Complex numbers are `[re, im]` pairs and matrices are row-major, so a 2x2
//! operator is `[[[re, im], [re, im]], [[re, im], [re, im]]]`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use weakpovm::algebra::{ket_norm_sqr, normalize_ket};
use weakpovm::engine::StateSampler;
use weakpovm::povm::validate_povm;
use weakpovm::{ComplexMatrix2, HermitianOp, Ket, Povm, Tolerances};

use crate::{CliError, CliResult};

/// `{"elements": [...], "labels": [...]}`; labels are optional display names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmFile {
    pub elements: Vec<ComplexMatrix2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// A validated POVM with its display labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedPovm {
    pub povm: Povm,
    pub labels: Vec<String>,
}

/// `{"ket": [a, b]}`, `{"density": M}` or `"haar"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Ket(Ket),
    Density(ComplexMatrix2),
    /// Uniformly random pure states, averaging to `I/2`.
    Haar,
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Largest `|m_rc - conj(m_cr)|` and its entry.
fn worst_hermitian_entry(m: &ComplexMatrix2) -> (f64, (usize, usize)) {
    let mut worst = (0.0, (0, 0));
    for (r, c) in [(0, 0), (0, 1), (1, 1)] {
        let d = (m.at(r, c) - m.at(c, r).conj()).norm();
        if d > worst.0 {
            worst = (d, (r, c));
        }
    }
    worst
}

pub fn povm_from_file(file: &PovmFile, tol: &Tolerances) -> CliResult<LoadedPovm> {
    let mut elements = Vec::with_capacity(file.elements.len());
    for (index, m) in file.elements.iter().enumerate() {
        if !m.is_finite() {
            return Err(CliError::Element {
                index,
                message: "non-finite entry".into(),
            });
        }
        let (residual, (r, c)) = worst_hermitian_entry(m);
        if residual > tol.hermitian {
            return Err(CliError::Element {
                index,
                message: format!(
                    "not Hermitian: entry ({r}, {c}) = {} but conj of ({c}, {r}) = {} (residual {residual:e})",
                    m.at(r, c),
                    m.at(c, r).conj()
                ),
            });
        }
        elements.push(HermitianOp::hermitize(m));
    }
    let labels = match &file.labels {
        Some(l) => {
            if l.len() != elements.len() {
                return Err(CliError::Usage(format!(
                    "{} labels for {} elements",
                    l.len(),
                    elements.len()
                )));
            }
            for (i, a) in l.iter().enumerate() {
                if l[..i].contains(a) {
                    return Err(CliError::Usage(format!("duplicate label {a:?}")));
                }
            }
            l.clone()
        }
        None => (0..elements.len()).map(|i| i.to_string()).collect(),
    };
    let povm = validate_povm(elements, tol).map_err(|e| match e {
        weakpovm::Error::NotPositive {
            index,
            min_eigenvalue,
        } => CliError::Element {
            index,
            message: format!("not positive-semidefinite (min eigenvalue {min_eigenvalue:e})"),
        },
        e => CliError::Core(e),
    })?;
    Ok(LoadedPovm { povm, labels })
}

pub fn load_povm_file(path: &Path, tol: &Tolerances) -> CliResult<LoadedPovm> {
    let file: PovmFile = parse(path, &read(path)?)?;
    povm_from_file(&file, tol)
}

/// Reads `--state`: either the literal `haar` or a JSON file.
pub fn load_state(arg: &str) -> CliResult<StateSpec> {
    if arg == "haar" {
        return Ok(StateSpec::Haar);
    }
    let path = Path::new(arg);
    parse(path, &read(path)?)
}

/// Pure states are normalized; a density matrix becomes its eigen-ensemble.
pub fn sampler_for(spec: &StateSpec, tol: &Tolerances) -> CliResult<StateSampler> {
    match spec {
        StateSpec::Ket(k) => {
            let n = ket_norm_sqr(k);
            if !n.is_finite() || n < 1e-24 {
                return Err(CliError::Usage(format!("state vector has norm^2 {n}")));
            }
            let ket = normalize_ket(k).ok_or_else(|| CliError::Usage("zero state vector".into()))?;
            Ok(StateSampler::pure(ket)?)
        }
        StateSpec::Density(m) => {
            let rho = HermitianOp::new(*m, tol)?;
            Ok(StateSampler::from_density(&rho, tol)?)
        }
        StateSpec::Haar => Ok(StateSampler::Haar),
    }
}

pub fn povm_file_of(povm: &Povm, labels: Option<Vec<String>>) -> PovmFile {
    PovmFile {
        elements: povm.elements().iter().map(|e| *e.matrix()).collect(),
        labels,
    }
}
