//! JSON description of bodies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Body, LpExponent, PolytopeSource, Shape};
use crate::linalg::SpdMatrix;
use crate::{Error, Matrix, Result, Vector};

/// The `p` field of an `lp-ball`: a number or the string `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Number(f64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BodySpec {
    HPolytope { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    VPolytope { vertices: Vec<Vec<f64>> },
    Ellipsoid { shape: Vec<Vec<f64>>, center: Vec<f64> },
    LpBall { p: PValue, n: usize, radius: f64 },
}

fn parse_error(location: impl Into<String>, message: impl ToString) -> Error {
    Error::Parse { location: location.into(), message: message.to_string() }
}

fn vectors(field: &str, rows: &[Vec<f64>]) -> Result<Vec<Vector>> {
    let Some(first) = rows.first() else { return Err(parse_error(field, "must not be empty")) };
    let n = first.len();
    if n == 0 {
        return Err(parse_error(format!("{field}[0]"), "must not be empty"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != n {
                return Err(parse_error(format!("{field}[{i}]"), format!("expected {n} entries, found {}", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(parse_error(format!("{field}[{i}]"), "entries must be finite"));
            }
            Ok(Vector::from_column_slice(r))
        })
        .collect()
}

impl BodySpec {
    pub fn to_body(&self) -> Result<Body> {
        match self {
            BodySpec::HPolytope { normals, offsets } => {
                let a = vectors("normals", normals)?;
                if offsets.len() != a.len() {
                    return Err(parse_error(
                        "offsets",
                        format!("expected {} entries, found {}", a.len(), offsets.len()),
                    ));
                }
                for (j, (row, &b)) in a.iter().zip(offsets).enumerate() {
                    if row.norm() == 0.0 {
                        return Err(parse_error(format!("normals[{j}]"), "must be nonzero"));
                    }
                    if !(b > 0.0) {
                        return Err(parse_error(format!("offsets[{j}]"), "must be positive so the origin is interior"));
                    }
                }
                Body::h_polytope(&a, offsets).map_err(|e| match e {
                    Error::Unbounded => parse_error("normals", "halfspaces do not bound a polytope"),
                    other => parse_error("normals", other),
                })
            }
            BodySpec::VPolytope { vertices } => {
                let v = vectors("vertices", vertices)?;
                Body::v_polytope(&v).map_err(|e| parse_error("vertices", e))
            }
            BodySpec::Ellipsoid { shape, center } => {
                let rows = vectors("shape", shape)?;
                let n = rows.len();
                if rows[0].len() != n {
                    return Err(parse_error("shape", "must be square"));
                }
                if center.len() != n {
                    return Err(parse_error("center", format!("expected {n} entries, found {}", center.len())));
                }
                let m = Matrix::from_fn(n, n, |i, j| rows[i][j]);
                let s = SpdMatrix::new(m).map_err(|e| parse_error("shape", e))?;
                Body::ellipsoid(s, Vector::from_column_slice(center)).map_err(|e| parse_error("center", e))
            }
            BodySpec::LpBall { p, n, radius } => {
                let p = match p {
                    PValue::Number(x) if *x == 1.0 => LpExponent::One,
                    PValue::Number(x) if *x == 2.0 => LpExponent::Two,
                    PValue::Number(x) if *x == 4.0 => LpExponent::Four,
                    PValue::Text(s) if s == "inf" => LpExponent::Infinity,
                    _ => return Err(parse_error("p", "must be one of 1, 2, 4, \"inf\"")),
                };
                if *n == 0 {
                    return Err(parse_error("n", "must be positive"));
                }
                Body::lp_ball(p, *n, *radius).map_err(|e| parse_error("radius", e))
            }
        }
    }

    pub fn from_body(body: &Body) -> BodySpec {
        let rows = |vs: &[Vector]| vs.iter().map(|v| v.iter().copied().collect()).collect();
        match body.shape() {
            Shape::Polytope(p) => match p.source() {
                PolytopeSource::Halfspaces => BodySpec::HPolytope {
                    normals: p.facets().iter().map(|f| f.normal.iter().copied().collect()).collect(),
                    offsets: p.facets().iter().map(|f| f.offset).collect(),
                },
                PolytopeSource::Vertices => BodySpec::VPolytope { vertices: rows(p.vertices()) },
            },
            Shape::Ellipsoid { shape, center } => BodySpec::Ellipsoid {
                shape: shape.matrix().row_iter().map(|r| r.iter().copied().collect()).collect(),
                center: center.iter().copied().collect(),
            },
            Shape::LpBall { p, radius, .. } => BodySpec::LpBall {
                p: match p {
                    LpExponent::Infinity => PValue::Text("inf".into()),
                    other => PValue::Number(other.value()),
                },
                n: body.dim(),
                radius: *radius,
            },
        }
    }
}

/// Parses a body from its JSON description.
pub fn parse_body(text: &str) -> Result<Body> {
    let spec: BodySpec =
        serde_json::from_str(text).map_err(|e| parse_error(format!("line {}, column {}", e.line(), e.column()), e))?;
    spec.to_body()
}

pub fn load_body(path: &Path) -> Result<Body> {
    let text = std::fs::read_to_string(path)?;
    parse_body(&text).map_err(|e| match e {
        Error::Parse { location, message } => {
            Error::Parse { location: format!("{}: {location}", path.display()), message }
        }
        other => other,
    })
}
