//! Declarative field descriptions as they appear in run configurations.

use serde::{Deserialize, Serialize};

/// One expression or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exprs {
    One(String),
    Many(Vec<String>),
}

impl Exprs {
    pub fn to_vec(&self) -> Vec<String> {
        match self {
            Exprs::One(s) => vec![s.clone()],
            Exprs::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionSpec {
    Interval([f64; 2]),
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`.
    Box([[f64; 2]; 2]),
    /// Vertices of a convex polygon, either orientation.
    Polygon(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub region: RegionSpec,
    /// `d` expressions in `x`.
    pub value: Exprs,
    /// Row-major `d × N` expressions; finite differences when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Exprs>,
}

/// A declared jump, checked against the traces of the adjacent pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    /// Location in 1D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<f64>,
    /// Segment `[[x0, y0], [x1, y1]]` in 2D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<[[f64; 2]; 2]>,
    pub minus: Vec<f64>,
    pub plus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorSpec {
    pub depth: u32,
    pub interval: [f64; 2],
    pub mass: f64,
    #[serde(default = "unit_direction")]
    pub direction: Vec<f64>,
}

fn unit_direction() -> Vec<f64> {
    vec![1.0]
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// `[lo, hi]` per axis.
    pub domain: Vec<[f64; 2]>,
    #[serde(default = "one")]
    pub target_dim: usize,
    pub pieces: Vec<PieceSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jumps: Vec<JumpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cantor: Option<CantorSpec>,
}

impl FieldSpec {
    /// `u = lo` on the left of `at`, `u = hi` on the right, on `(0, 1)`.
    pub fn step(at: f64, lo: f64, hi: f64) -> Self {
        FieldSpec {
            domain: vec![[0.0, 1.0]],
            target_dim: 1,
            pieces: vec![
                PieceSpec { region: RegionSpec::Interval([0.0, at]), value: Exprs::One(fmt(lo)), gradient: None },
                PieceSpec { region: RegionSpec::Interval([at, 1.0]), value: Exprs::One(fmt(hi)), gradient: None },
            ],
            jumps: Vec::new(),
            cantor: None,
        }
    }

    /// One smooth piece on `(0, 1)`.
    pub fn smooth(value: &str, gradient: Option<&str>) -> Self {
        FieldSpec {
            domain: vec![[0.0, 1.0]],
            target_dim: 1,
            pieces: vec![PieceSpec {
                region: RegionSpec::Interval([0.0, 1.0]),
                value: Exprs::One(value.into()),
                gradient: gradient.map(|g| Exprs::One(g.into())),
            }],
            jumps: Vec::new(),
            cantor: None,
        }
    }

    /// The depth-`depth` staircase from 0 to `mass` on `(0, 1)`.
    pub fn staircase(depth: u32, mass: f64) -> Self {
        FieldSpec {
            cantor: Some(CantorSpec { depth, interval: [0.0, 1.0], mass, direction: vec![1.0] }),
            ..FieldSpec::smooth("0", Some("0"))
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// The companion field `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpFieldSpec {
    /// `m` expressions in `x`.
    pub value: Exprs,
}

impl LpFieldSpec {
    pub fn zero() -> Self {
        LpFieldSpec { value: Exprs::One("0".into()) }
    }
}
