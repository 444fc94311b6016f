//! TOML problem files.
//!
//! ```toml
//! schema_version = 1
//! name = "scalar"
//! dimension = 1
//! length = 3.14159
//! perturbation_shift = 0.0   # optional, K
//! path = "shift"             # optional: "shift" | "fade"
//!
//! [boundary]
//! preset = "dirichlet"       # or r0 = [[..]], r1 = [[..]]
//!
//! [coefficients.p]
//! kind = "constant"
//! values = [[1.0]]
//!
//! [coefficients.c0]
//! kind = "polynomial"
//! terms = [[[-4.0]], [[0.5]]]
//!
//! [rectangle]                # optional default Ω
//! t_min = 0.0
//! t_max = 1.0
//! s_min = -10.0
//! s_max = 10.0
//! ```
//!
//! Missing `q`, `s`, `c0` default to zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundaryCondition, BoundaryPreset, CoefficientField, GridField, PathKind, ProblemSpec, Rectangle};
use crate::error::{Error, Result};
use crate::linalg::RMat;

pub const SCHEMA_VERSION: u32 = 1;

/// A parsed problem file: the problem and its optional default rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub spec: ProblemSpec,
    pub rectangle: Option<Rectangle>,
}

type Rows = Vec<Vec<f64>>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dimension: usize,
    length: f64,
    #[serde(default)]
    perturbation_shift: f64,
    #[serde(default)]
    path: PathKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spectral_floor: Option<f64>,
    boundary: RawBoundary,
    coefficients: RawCoefficients,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rectangle: Option<Rectangle>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<BoundaryPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r0: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r1: Option<Rows>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    p: RawField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<RawField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<RawField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c0: Option<RawField>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawField {
    Constant { values: Rows },
    Polynomial { terms: Vec<Rows> },
    Grid { nodes: Vec<f64>, values: Vec<Rows> },
}

fn to_matrix(rows: &Rows, what: &str) -> Result<RMat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse(format!("{what}: ragged matrix rows")));
    }
    Ok(RMat::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &RMat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl RawField {
    fn into_field(self, what: &str) -> Result<CoefficientField> {
        Ok(match self {
            RawField::Constant { values } => CoefficientField::Constant(to_matrix(&values, what)?),
            RawField::Polynomial { terms } => CoefficientField::Polynomial(
                terms.iter().map(|t| to_matrix(t, what)).collect::<Result<_>>()?,
            ),
            RawField::Grid { nodes, values } => {
                let values = values.iter().map(|t| to_matrix(t, what)).collect::<Result<Vec<_>>>()?;
                CoefficientField::Grid(GridField::new(nodes, values))
            }
        })
    }

    fn from_field(f: &CoefficientField) -> Self {
        match f {
            CoefficientField::Constant(m) => RawField::Constant { values: to_rows(m) },
            CoefficientField::Polynomial(terms) => RawField::Polynomial {
                terms: terms.iter().map(to_rows).collect(),
            },
            CoefficientField::Grid(g) => RawField::Grid {
                nodes: g.nodes().to_vec(),
                values: g.values().iter().map(to_rows).collect(),
            },
        }
    }
}

/// Parses a problem file and validates the result.
pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let raw: Raw = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            raw.schema_version
        )));
    }
    let n = raw.dimension;
    let field = |f: Option<RawField>, what: &str| match f {
        Some(f) => f.into_field(what),
        None => Ok(CoefficientField::zeros(n)),
    };
    let boundary = match (raw.boundary.preset, raw.boundary.r0, raw.boundary.r1) {
        (Some(BoundaryPreset::Custom), _, _) | (None, Some(_), None) | (None, None, Some(_)) => {
            return Err(Error::Parse("custom boundary needs both r0 and r1".into()))
        }
        (Some(preset), None, None) => BoundaryCondition::preset(preset, n),
        (None, Some(r0), Some(r1)) => BoundaryCondition::custom(to_matrix(&r0, "r0")?, to_matrix(&r1, "r1")?),
        (None, None, None) => return Err(Error::Parse("boundary: give a preset or r0/r1".into())),
        (Some(_), _, _) => return Err(Error::Parse("boundary: give either a preset or r0/r1, not both".into())),
    };
    let spec = ProblemSpec {
        name: raw.name,
        n,
        length: raw.length,
        p: raw.coefficients.p.into_field("p")?,
        q: field(raw.coefficients.q, "q")?,
        s: field(raw.coefficients.s, "s")?,
        c0: field(raw.coefficients.c0, "c0")?,
        boundary,
        perturbation_shift: raw.perturbation_shift,
        path: raw.path,
        spectral_floor: raw.spectral_floor,
        reparametrization: None,
    };
    spec.check()?;
    if let Some(r) = &raw.rectangle {
        r.check()?;
    }
    Ok(ProblemFile {
        spec,
        rectangle: raw.rectangle,
    })
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

/// Serialises a problem in the file schema.
pub fn write_problem(spec: &ProblemSpec, rectangle: Option<&Rectangle>) -> String {
    let boundary = match spec.boundary.classify() {
        BoundaryPreset::Custom => RawBoundary {
            preset: None,
            r0: Some(to_rows(&spec.boundary.r0)),
            r1: Some(to_rows(&spec.boundary.r1)),
        },
        preset => RawBoundary {
            preset: Some(preset),
            r0: None,
            r1: None,
        },
    };
    let raw = Raw {
        schema_version: SCHEMA_VERSION,
        name: spec.name.clone(),
        dimension: spec.n,
        length: spec.length,
        perturbation_shift: spec.perturbation_shift,
        path: spec.path,
        spectral_floor: spec.spectral_floor,
        boundary,
        coefficients: RawCoefficients {
            p: RawField::from_field(&spec.p),
            q: Some(RawField::from_field(&spec.q)),
            s: Some(RawField::from_field(&spec.s)),
            c0: Some(RawField::from_field(&spec.c0)),
        },
        rectangle: rectangle.copied(),
    };
    toml::to_string(&raw).expect("problem serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
schema_version = 1
name = "scalar"
dimension = 1
length = 3.0

[boundary]
preset = "dirichlet"

[coefficients.p]
kind = "constant"
values = [[1.0]]

[coefficients.c0]
kind = "polynomial"
terms = [[[-4.0]], [[0.5]]]
"#;

    #[test]
    fn parses_minimal_file_with_defaults() {
        let f = parse_problem(SCALAR).unwrap();
        assert_eq!(f.spec.n, 1);
        assert!(f.spec.boundary.is_dirichlet());
        assert_eq!(f.spec.q.eval(1.0)[(0, 0)], 0.0);
        assert_eq!(f.spec.c0.eval(2.0)[(0, 0)], -3.0);
        assert!(f.rectangle.is_none());
    }

    #[test]
    fn round_trip() {
        let f = parse_problem(SCALAR).unwrap();
        let rect = Rectangle::new(0.0, 1.0, -2.0, 2.0).unwrap();
        let text = write_problem(&f.spec, Some(&rect));
        let g = parse_problem(&text).unwrap();
        assert_eq!(g.spec, f.spec);
        assert_eq!(g.rectangle, Some(rect));
    }

    #[test]
    fn rejects_bad_version_and_invalid_data() {
        let bad = SCALAR.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(parse_problem(&bad), Err(Error::Parse(_))));
        let zero_p = SCALAR.replace("values = [[1.0]]", "values = [[0.0]]");
        assert!(matches!(parse_problem(&zero_p), Err(Error::Invalid(_))));
        let ragged = SCALAR.replace("values = [[1.0]]", "values = [[1.0, 2.0], [1.0]]");
        assert!(matches!(parse_problem(&ragged), Err(Error::Parse(_))));
    }

    #[test]
    fn custom_boundary_is_classified() {
        let text = SCALAR.replace(
            "preset = \"dirichlet\"",
            "r0 = [[1.0, 0.0], [0.0, 0.0]]\nr1 = [[0.0, 0.0], [1.0, 0.0]]",
        );
        let f = parse_problem(&text).unwrap();
        assert_eq!(f.spec.boundary.preset, BoundaryPreset::Neumann);
    }
}
