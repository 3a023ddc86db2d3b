//! Structured BV fields: smooth pieces on intervals, boxes and convex
//! polygons, jumps along shared piece boundaries, and an optional truncated
//! Cantor staircase in 1D.

pub mod spec;

use serde::Serialize;

use crate::density::Exponent;
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, VarDims};
use crate::linalg::{gauss_legendre, norm, KahanSum};

pub use spec::{CantorSpec, Exprs, FieldSpec, JumpSpec, LpFieldSpec, PieceSpec, RegionSpec};

const TRACE_TOL: f64 = 1e-10;
const GEOM_TOL: f64 = 1e-12;
const MAX_CANTOR_DEPTH: u32 = 20;

/// A smooth vector-valued map of `x` with an optional exact gradient.
#[derive(Debug, Clone)]
pub struct ValueMap {
    values: Vec<Expr>,
    gradient: Option<Vec<Expr>>,
    space_dim: usize,
}

impl ValueMap {
    pub fn parse(values: &[String], gradient: Option<&[String]>, space_dim: usize) -> Result<Self> {
        let vd = VarDims::spatial(space_dim);
        let values = values.iter().map(|s| Expr::parse(s, vd)).collect::<Result<Vec<_>>>()?;
        let gradient = match gradient {
            None => None,
            Some(g) => {
                if g.len() != values.len() * space_dim {
                    return Err(Error::DimensionMismatch {
                        what: "gradient expressions",
                        expected: values.len() * space_dim,
                        got: g.len(),
                    });
                }
                Some(g.iter().map(|s| Expr::parse(s, vd)).collect::<Result<Vec<_>>>()?)
            }
        };
        Ok(ValueMap { values, gradient, space_dim })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        let env = Env::spatial(x);
        for (o, e) in out.iter_mut().zip(&self.values) {
            *o = e.eval(&env);
        }
    }

    /// Row-major `len × N` Jacobian; central differences with step `1e-6 (1 + |x_j|)` when no
    /// gradient was supplied.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.space_dim;
        if let Some(g) = &self.gradient {
            let env = Env::spatial(x);
            for (o, e) in out.iter_mut().zip(g) {
                *o = e.eval(&env);
            }
            return;
        }
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = 1e-6 * (1.0 + x[j].abs());
            for (i, e) in self.values.iter().enumerate() {
                xp[j] = x[j] + h;
                let plus = e.eval(&Env::spatial(&xp));
                xp[j] = x[j] - h;
                let minus = e.eval(&Env::spatial(&xp));
                xp[j] = x[j];
                out[i * n + j] = (plus - minus) / (2.0 * h);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Region {
    Interval(f64, f64),
    Box([f64; 2], [f64; 2]),
    /// Counter-clockwise convex polygon.
    Polygon(Vec<[f64; 2]>),
}

impl Region {
    fn from_spec(spec: &RegionSpec, space_dim: usize) -> Result<Region> {
        let region = match spec {
            RegionSpec::Interval([a, b]) if space_dim == 1 => {
                if !(a < b) {
                    return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
                }
                Region::Interval(*a, *b)
            }
            RegionSpec::Box([x, y]) if space_dim == 2 => {
                if !(x[0] < x[1] && y[0] < y[1]) {
                    return Err(Error::InvalidArgument(format!("empty box {x:?} x {y:?}")));
                }
                Region::Box(*x, *y)
            }
            RegionSpec::Polygon(v) if space_dim == 2 => {
                if v.len() < 3 {
                    return Err(Error::InvalidArgument("polygon needs at least 3 vertices".into()));
                }
                let mut v = v.clone();
                if signed_area(&v) < 0.0 {
                    v.reverse();
                }
                if signed_area(&v) <= GEOM_TOL || !is_convex(&v) {
                    return Err(Error::InvalidArgument("polygon must be convex with positive area".into()));
                }
                Region::Polygon(v)
            }
            _ => return Err(Error::InvalidDimensions(format!("region {spec:?} does not fit N = {space_dim}"))),
        };
        Ok(region)
    }

    /// Counter-clockwise vertices (2D only).
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        match self {
            Region::Interval(..) => Vec::new(),
            Region::Box(x, y) => vec![[x[0], y[0]], [x[1], y[0]], [x[1], y[1]], [x[0], y[1]]],
            Region::Polygon(v) => v.clone(),
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            Region::Interval(a, b) => b - a,
            _ => signed_area(&self.vertices()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Interval(a, b) => *a <= x[0] && x[0] <= *b,
            Region::Box(bx, by) => bx[0] <= x[0] && x[0] <= bx[1] && by[0] <= x[1] && x[1] <= by[1],
            Region::Polygon(v) => {
                (0..v.len()).all(|i| cross(v[i], v[(i + 1) % v.len()], [x[0], x[1]]) >= -GEOM_TOL)
            }
        }
    }

    /// Midpoint-rule nodes and weights with `n` subdivisions per axis
    /// (polygons: `n²` subtriangles per fan triangle, centroid rule).
    pub fn quadrature(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        match self {
            Region::Interval(a, b) => {
                let h = (b - a) / n as f64;
                (0..n).map(|i| (vec![a + (i as f64 + 0.5) * h], h)).collect()
            }
            Region::Box(bx, by) => {
                let (hx, hy) = ((bx[1] - bx[0]) / n as f64, (by[1] - by[0]) / n as f64);
                let mut out = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        out.push((vec![bx[0] + (i as f64 + 0.5) * hx, by[0] + (j as f64 + 0.5) * hy], hx * hy));
                    }
                }
                out
            }
            Region::Polygon(v) => {
                let mut out = Vec::new();
                for k in 1..v.len() - 1 {
                    triangle_quadrature(v[0], v[k], v[k + 1], n, &mut out);
                }
                out
            }
        }
    }
}

fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]).sum::<f64>()
}

fn is_convex(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    (0..n).all(|i| cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) >= -GEOM_TOL)
}

fn triangle_quadrature(a: [f64; 2], b: [f64; 2], c: [f64; 2], n: usize, out: &mut Vec<(Vec<f64>, f64)>) {
    let area = 0.5 * cross(a, b, c).abs() / (n * n) as f64;
    let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
    let at = |s: f64, t: f64| vec![a[0] + s * e1[0] + t * e2[0], a[1] + s * e1[1] + t * e2[1]];
    let h = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..n - i {
            let (s, t) = (i as f64 * h, j as f64 * h);
            out.push((at(s + h / 3.0, t + h / 3.0), area));
            if i + j + 1 < n {
                out.push((at(s + 2.0 * h / 3.0, t + 2.0 * h / 3.0), area));
            }
        }
    }
}

/// Area of the intersection of two convex CCW polygons.
fn intersection_area(p: &[[f64; 2]], q: &[[f64; 2]]) -> f64 {
    let mut poly = p.to_vec();
    for i in 0..q.len() {
        let (a, b) = (q[i], q[(i + 1) % q.len()]);
        let input = std::mem::take(&mut poly);
        for k in 0..input.len() {
            let (s, e) = (input[k], input[(k + 1) % input.len()]);
            let (cs, ce) = (cross(a, b, s), cross(a, b, e));
            if ce >= 0.0 {
                if cs < 0.0 {
                    poly.push(lerp_point(s, e, cs / (cs - ce)));
                }
                poly.push(e);
            } else if cs >= 0.0 {
                poly.push(lerp_point(s, e, cs / (cs - ce)));
            }
        }
        if poly.is_empty() {
            return 0.0;
        }
    }
    signed_area(&poly).abs()
}

fn lerp_point(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

#[derive(Debug, Clone)]
pub struct Piece {
    pub region: Region,
    pub map: ValueMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JumpGeometry {
    Point(f64),
    Segment([f64; 2], [f64; 2]),
}

/// A jump between two pieces. `ν` points from the `minus` piece to the
/// `plus` piece.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord {
    pub geometry: JumpGeometry,
    pub nu: Vec<f64>,
    pub minus_piece: usize,
    pub plus_piece: usize,
}

impl JumpRecord {
    /// `H^{N−1}` measure of the jump geometry.
    pub fn measure(&self) -> f64 {
        match &self.geometry {
            JumpGeometry::Point(_) => 1.0,
            JumpGeometry::Segment(a, b) => ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt(),
        }
    }

    pub fn midpoint(&self) -> Vec<f64> {
        match &self.geometry {
            JumpGeometry::Point(x) => vec![*x],
            JumpGeometry::Segment(a, b) => vec![0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
        }
    }

    /// Gauss nodes on the geometry with `H^{N−1}` weights.
    pub fn quadrature(&self, points: usize) -> Vec<(Vec<f64>, f64)> {
        match &self.geometry {
            JumpGeometry::Point(x) => vec![(vec![*x], 1.0)],
            JumpGeometry::Segment(a, b) => {
                let (nodes, weights) = gauss_legendre(points.max(1));
                let half = 0.5 * self.measure();
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(s, w)| (lerp_point(*a, *b, 0.5 * (s + 1.0)).to_vec(), w * half))
                    .collect()
            }
        }
    }
}

/// Truncated Cantor-Vitali staircase carrying `mass` in direction `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CantorComponent {
    pub depth: u32,
    pub direction: Vec<f64>,
    pub interval: (f64, f64),
    pub mass: f64,
}

impl CantorComponent {
    /// The depth-`L` staircase, rising from 0 at the left end to 1 at the right end.
    pub fn staircase(&self, x: f64) -> f64 {
        let (a, b) = self.interval;
        if x <= a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        let mut s = (x - a) / (b - a);
        let mut value = 0.0;
        let mut scale = 0.5;
        for _ in 0..self.depth {
            if s < 1.0 / 3.0 {
                s *= 3.0;
            } else if s > 2.0 / 3.0 {
                value += scale;
                s = 3.0 * s - 2.0;
            } else {
                return value + scale;
            }
            scale *= 0.5;
        }
        value + 2.0 * scale * s
    }

    /// The `2^L` intervals on which the staircase rises.
    pub fn rising_intervals(&self) -> Vec<(f64, f64)> {
        let (a, b) = self.interval;
        let mut out = vec![(a, b)];
        for _ in 0..self.depth {
            out = out
                .into_iter()
                .flat_map(|(l, r)| {
                    let w = (r - l) / 3.0;
                    [(l, l + w), (r - w, r)]
                })
                .collect();
        }
        out
    }

    /// Number of interior intervals on which the staircase is flat.
    pub fn flat_intervals(&self) -> usize {
        (1usize << self.depth) - 1
    }
}

/// A piecewise smooth BV field with jumps and an optional Cantor staircase.
#[derive(Debug, Clone)]
pub struct PiecewiseBVField {
    pub space_dim: usize,
    pub target_dim: usize,
    pub domain: Vec<(f64, f64)>,
    pub pieces: Vec<Piece>,
    pub jumps: Vec<JumpRecord>,
    pub cantor: Option<CantorComponent>,
}

impl PiecewiseBVField {
    /// Index of a piece containing `x` (the first one on shared boundaries).
    pub fn piece_at(&self, x: &[f64]) -> Option<usize> {
        self.pieces.iter().position(|p| p.region.contains(x))
    }

    fn cantor_shift(&self, x: &[f64], out: &mut [f64]) {
        if let Some(c) = &self.cantor {
            let s = c.mass * c.staircase(x[0]);
            for (o, a) in out.iter_mut().zip(&c.direction) {
                *o += s * a;
            }
        }
    }

    /// Value of piece `i`'s map at `x`, including the staircase.
    pub fn piece_value(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.pieces[i].map.value(x, out);
        self.cantor_shift(x, out);
    }

    /// Gradient of piece `i`'s map (the absolutely continuous part).
    pub fn piece_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.pieces[i].map.gradient(x, out);
    }

    /// `u(x)`; outside the domain the nearest piece is used.
    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let i = self.piece_at(x).unwrap_or_else(|| self.nearest_piece(x));
        let mut out = vec![0.0; self.target_dim];
        self.piece_value(i, x, &mut out);
        out
    }

    fn nearest_piece(&self, x: &[f64]) -> usize {
        let clamped: Vec<f64> = x.iter().zip(&self.domain).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect();
        self.piece_at(&clamped).unwrap_or(0)
    }

    pub fn trace_minus(&self, j: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target_dim];
        self.piece_value(self.jumps[j].minus_piece, x, &mut out);
        out
    }

    pub fn trace_plus(&self, j: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target_dim];
        self.piece_value(self.jumps[j].plus_piece, x, &mut out);
        out
    }

    pub fn domain_measure(&self) -> f64 {
        self.domain.iter().map(|(a, b)| b - a).product()
    }
}

/// The companion `L^p` field `v`.
#[derive(Debug, Clone)]
pub struct LpField {
    pub space_dim: usize,
    pub field_dim: usize,
    pub exponent: Exponent,
    map: ValueMap,
}

impl LpField {
    pub fn new(spec: &LpFieldSpec, space_dim: usize, exponent: Exponent) -> Result<Self> {
        let map = ValueMap::parse(&spec.value.to_vec(), None, space_dim)?;
        Ok(LpField { space_dim, field_dim: map.len(), exponent, map })
    }

    pub fn zero(space_dim: usize, field_dim: usize, exponent: Exponent) -> Self {
        let spec = LpFieldSpec { value: Exprs::Many(vec!["0".into(); field_dim]) };
        LpField::new(&spec, space_dim, exponent).expect("constant expressions parse")
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        self.map.value(x, out)
    }

    /// `∫ |v|^p` (or `sup |v|` for `p = ∞`) over the field's pieces.
    pub fn norm_p(&self, u: &PiecewiseBVField, quadrature: &Quadrature) -> Result<f64> {
        let mut v = vec![0.0; self.field_dim];
        let mut acc = KahanSum::default();
        let mut sup: f64 = 0.0;
        for p in &u.pieces {
            for (x, w) in p.region.quadrature(quadrature.n) {
                self.value(&x, &mut v);
                let a = norm(&v);
                if !a.is_finite() {
                    return Err(Error::NonfiniteValue { value: a });
                }
                match self.exponent {
                    Exponent::Finite(p) => acc.add(w * a.powf(p)),
                    Exponent::Infinity => sup = sup.max(a),
                }
            }
        }
        Ok(match self.exponent {
            Exponent::Finite(_) => acc.value(),
            Exponent::Infinity => sup,
        })
    }
}

/// Builds and validates a field.
pub fn build_field(spec: &FieldSpec) -> Result<PiecewiseBVField> {
    let n = spec.domain.len();
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidDimensions(format!("fields need N in {{1,2}}, got {n}")));
    }
    if spec.target_dim == 0 {
        return Err(Error::InvalidDimensions("target_dim must be positive".into()));
    }
    if spec.pieces.is_empty() {
        return Err(Error::InvalidArgument("a field needs at least one piece".into()));
    }
    let domain: Vec<(f64, f64)> = spec.domain.iter().map(|[a, b]| (*a, *b)).collect();
    if domain.iter().any(|(a, b)| !(a < b)) {
        return Err(Error::InvalidArgument(format!("empty domain {:?}", spec.domain)));
    }
    let mut pieces = Vec::with_capacity(spec.pieces.len());
    for p in &spec.pieces {
        let values = p.value.to_vec();
        if values.len() != spec.target_dim {
            return Err(Error::DimensionMismatch { what: "piece value", expected: spec.target_dim, got: values.len() });
        }
        let grad = p.gradient.as_ref().map(|g| g.to_vec());
        pieces.push(Piece { region: Region::from_spec(&p.region, n)?, map: ValueMap::parse(&values, grad.as_deref(), n)? });
    }
    let cantor = match &spec.cantor {
        None => None,
        Some(_) if n == 2 => return Err(Error::CantorIn2d),
        Some(c) => Some(build_cantor(c, spec.target_dim, domain[0])?),
    };
    check_tiling(&pieces, &domain)?;
    let mut field = PiecewiseBVField { space_dim: n, target_dim: spec.target_dim, domain, pieces, jumps: Vec::new(), cantor };
    field.jumps = if n == 1 { jumps_1d(&field) } else { jumps_2d(&field) };
    for declared in &spec.jumps {
        check_declared(&field, declared)?;
    }
    Ok(field)
}

fn build_cantor(c: &CantorSpec, d: usize, domain: (f64, f64)) -> Result<CantorComponent> {
    if c.depth == 0 || c.depth > MAX_CANTOR_DEPTH {
        return Err(Error::InvalidArgument(format!("cantor depth must be in 1..={MAX_CANTOR_DEPTH}")));
    }
    if !(c.mass > 0.0 && c.mass.is_finite()) {
        return Err(Error::InvalidArgument(format!("cantor mass must be positive, got {}", c.mass)));
    }
    if c.direction.len() != d {
        return Err(Error::DimensionMismatch { what: "cantor direction", expected: d, got: c.direction.len() });
    }
    if (norm(&c.direction) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("cantor direction must be a unit vector".into()));
    }
    let [a, b] = c.interval;
    if !(domain.0 <= a && a < b && b <= domain.1) {
        return Err(Error::InvalidArgument(format!("cantor interval {:?} outside the domain", c.interval)));
    }
    Ok(CantorComponent { depth: c.depth, direction: c.direction.clone(), interval: (a, b), mass: c.mass })
}

fn check_tiling(pieces: &[Piece], domain: &[(f64, f64)]) -> Result<()> {
    let total: f64 = domain.iter().map(|(a, b)| b - a).product();
    let tol = 1e-9 * total.max(1.0);
    if domain.len() == 1 {
        let mut iv: Vec<(f64, f64)> = pieces
            .iter()
            .map(|p| match p.region {
                Region::Interval(a, b) => (a, b),
                _ => unreachable!(),
            })
            .collect();
        iv.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in iv.windows(2) {
            if w[1].0 < w[0].1 - GEOM_TOL {
                return Err(Error::RegionOverlap(format!("[{}, {}] and [{}, {}]", w[0].0, w[0].1, w[1].0, w[1].1)));
            }
            if w[1].0 > w[0].1 + GEOM_TOL {
                return Err(Error::InvalidArgument(format!("gap between {} and {}", w[0].1, w[1].0)));
            }
        }
        let (lo, hi) = domain[0];
        if (iv[0].0 - lo).abs() > GEOM_TOL || (iv[iv.len() - 1].1 - hi).abs() > GEOM_TOL {
            return Err(Error::InvalidArgument("pieces do not cover the domain".into()));
        }
        return Ok(());
    }
    let verts: Vec<Vec<[f64; 2]>> = pieces.iter().map(|p| p.region.vertices()).collect();
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            let a = intersection_area(&verts[i], &verts[j]);
            if a > tol {
                return Err(Error::RegionOverlap(format!("pieces {i} and {j} share area {a:e}")));
            }
        }
    }
    let domain_poly = Region::Box([domain[0].0, domain[0].1], [domain[1].0, domain[1].1]).vertices();
    let inside: f64 = verts.iter().map(|v| intersection_area(v, &domain_poly)).sum();
    let covered: f64 = pieces.iter().map(|p| p.region.measure()).sum();
    if (covered - inside).abs() > tol {
        return Err(Error::InvalidArgument("pieces extend outside the domain".into()));
    }
    if (covered - total).abs() > tol {
        return Err(Error::InvalidArgument(format!("pieces cover area {covered} of {total}")));
    }
    Ok(())
}

fn traces_differ(field: &PiecewiseBVField, a: usize, b: usize, points: &[Vec<f64>]) -> bool {
    let d = field.target_dim;
    let (mut ua, mut ub) = (vec![0.0; d], vec![0.0; d]);
    points.iter().any(|x| {
        field.pieces[a].map.value(x, &mut ua);
        field.pieces[b].map.value(x, &mut ub);
        ua.iter().zip(&ub).any(|(p, q)| (p - q).abs() > TRACE_TOL)
    })
}

fn jumps_1d(field: &PiecewiseBVField) -> Vec<JumpRecord> {
    let bounds = |p: &Piece| match p.region {
        Region::Interval(a, b) => (a, b),
        _ => unreachable!(),
    };
    let mut order: Vec<usize> = (0..field.pieces.len()).collect();
    order.sort_by(|&i, &j| bounds(&field.pieces[i]).0.total_cmp(&bounds(&field.pieces[j]).0));
    let mut jumps = Vec::new();
    for w in order.windows(2) {
        let at = bounds(&field.pieces[w[0]]).1;
        if traces_differ(field, w[0], w[1], &[vec![at]]) {
            jumps.push(JumpRecord { geometry: JumpGeometry::Point(at), nu: vec![1.0], minus_piece: w[0], plus_piece: w[1] });
        }
    }
    jumps
}

fn jumps_2d(field: &PiecewiseBVField) -> Vec<JumpRecord> {
    let verts: Vec<Vec<[f64; 2]>> = field.pieces.iter().map(|p| p.region.vertices()).collect();
    let mut jumps = Vec::new();
    for a in 0..verts.len() {
        for b in a + 1..verts.len() {
            for ea in 0..verts[a].len() {
                let (p0, p1) = (verts[a][ea], verts[a][(ea + 1) % verts[a].len()]);
                for eb in 0..verts[b].len() {
                    let (q0, q1) = (verts[b][eb], verts[b][(eb + 1) % verts[b].len()]);
                    let Some((s0, s1)) = shared_segment(p0, p1, q0, q1) else { continue };
                    let len = ((s1[0] - s0[0]).powi(2) + (s1[1] - s0[1]).powi(2)).sqrt();
                    let (dx, dy) = ((p1[0] - p0[0]) / norm2(p0, p1), (p1[1] - p0[1]) / norm2(p0, p1));
                    // outward normal of piece a (counter-clockwise boundary)
                    let nu = vec![dy, -dx];
                    let rec = JumpRecord { geometry: JumpGeometry::Segment(s0, s1), nu, minus_piece: a, plus_piece: b };
                    let mut probes: Vec<Vec<f64>> = rec.quadrature(4).into_iter().map(|(x, _)| x).collect();
                    probes.push(rec.midpoint());
                    if len > GEOM_TOL && traces_differ(field, a, b, &probes) {
                        jumps.push(rec);
                    }
                }
            }
        }
    }
    jumps
}

fn norm2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Overlap of two collinear, oppositely oriented edges.
fn shared_segment(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let len = norm2(p0, p1);
    let scale = len.max(1.0);
    if cross(p0, p1, q0).abs() > 1e-12 * scale * len || cross(p0, p1, q1).abs() > 1e-12 * scale * len {
        return None;
    }
    let dir = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
    let proj = |q: [f64; 2]| (q[0] - p0[0]) * dir[0] + (q[1] - p0[1]) * dir[1];
    let (t0, t1) = (proj(q0), proj(q1));
    if t1 >= t0 {
        return None;
    }
    let (lo, hi) = (t1.max(0.0), t0.min(len));
    if hi - lo <= GEOM_TOL * scale {
        return None;
    }
    let at = |t: f64| [p0[0] + t * dir[0], p0[1] + t * dir[1]];
    Some((at(lo), at(hi)))
}

fn check_declared(field: &PiecewiseBVField, declared: &JumpSpec) -> Result<()> {
    let d = field.target_dim;
    if declared.minus.len() != d || declared.plus.len() != d {
        return Err(Error::DimensionMismatch {
            what: "declared jump traces",
            expected: d,
            got: declared.minus.len().min(declared.plus.len()),
        });
    }
    let (probe, matches): (Vec<f64>, Vec<usize>) = match (declared.at, declared.segment, field.space_dim) {
        (Some(at), None, 1) => (
            vec![at],
            (0..field.jumps.len())
                .filter(|&j| matches!(field.jumps[j].geometry, JumpGeometry::Point(p) if (p - at).abs() <= GEOM_TOL))
                .collect(),
        ),
        (None, Some([a, b]), 2) => {
            let mid = vec![0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let hits = (0..field.jumps.len())
                .filter(|&j| match field.jumps[j].geometry {
                    JumpGeometry::Segment(s0, s1) => {
                        cross(s0, s1, [mid[0], mid[1]]).abs() <= 1e-9 && {
                            let t = ((mid[0] - s0[0]) * (s1[0] - s0[0]) + (mid[1] - s0[1]) * (s1[1] - s0[1]))
                                / norm2(s0, s1).powi(2);
                            (0.0..=1.0).contains(&t)
                        }
                    }
                    _ => false,
                })
                .collect();
            (mid, hits)
        }
        _ => return Err(Error::InvalidArgument("declared jump needs `at` in 1D or `segment` in 2D".into())),
    };
    let Some(&j) = matches.first() else {
        return Err(Error::TraceMismatch(format!("no jump of the pieces at {probe:?}")));
    };
    let (plus, minus) = (field.trace_plus(j, &probe), field.trace_minus(j, &probe));
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TRACE_TOL);
    if close(&plus, &declared.plus) && close(&minus, &declared.minus) {
        return Ok(());
    }
    Err(Error::TraceMismatch(format!(
        "declared ({:?}, {:?}) but pieces give ({minus:?}, {plus:?}) at {probe:?}",
        declared.minus, declared.plus
    )))
}

/// Quadrature controls: `n` midpoint subdivisions per piece and axis,
/// `jump_points` Gauss nodes per jump segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quadrature {
    pub n: usize,
    #[serde(default = "default_jump_points")]
    pub jump_points: usize,
}

fn default_jump_points() -> usize {
    4
}

impl Quadrature {
    pub fn default_for(space_dim: usize) -> Self {
        Quadrature { n: if space_dim == 1 { 1024 } else { 64 }, jump_points: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecompositionFlag {
    /// The Cantor part is carried by a finite-depth staircase.
    CantorSurrogate,
    /// Bulk mass changes by more than 1e-3 (relative) when the grid is halved.
    QuadratureUnderresolved,
}

#[derive(Debug, Clone, Serialize)]
pub struct BulkSample {
    pub x: Vec<f64>,
    pub weight: f64,
    pub piece: usize,
    pub u: Vec<f64>,
    /// Row-major `d × N`.
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpSample {
    pub x: Vec<f64>,
    pub weight: f64,
    pub record: usize,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CantorSample {
    pub x: Vec<f64>,
    pub weight: f64,
    pub u: Vec<f64>,
    /// `dD^c u / d|D^c u|`, row-major `d × N`.
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeDecomposition {
    pub bulk: Vec<BulkSample>,
    pub jumps: Vec<JumpSample>,
    pub cantor: Vec<CantorSample>,
    pub bulk_mass: f64,
    pub jump_mass: f64,
    pub cantor_mass: f64,
    /// Mass the staircase carries on its rising intervals (tagged, counted as Cantor).
    pub surrogate_bulk_mass: f64,
    pub flags: Vec<DecompositionFlag>,
}

impl DerivativeDecomposition {
    pub fn total_mass(&self) -> f64 {
        self.bulk_mass + self.jump_mass + self.cantor_mass
    }
}

fn bulk_samples(u: &PiecewiseBVField, n: usize) -> Vec<BulkSample> {
    let (d, nd) = (u.target_dim, u.space_dim);
    let mut out = Vec::new();
    for (i, p) in u.pieces.iter().enumerate() {
        for (x, weight) in p.region.quadrature(n) {
            let mut val = vec![0.0; d];
            let mut grad = vec![0.0; d * nd];
            u.piece_value(i, &x, &mut val);
            u.piece_gradient(i, &x, &mut grad);
            out.push(BulkSample { x, weight, piece: i, u: val, grad });
        }
    }
    out
}

fn bulk_mass(samples: &[BulkSample]) -> f64 {
    samples.iter().map(|s| s.weight * norm(&s.grad)).collect::<KahanSum>().value()
}

/// Splits `Du` into its absolutely continuous, jump and Cantor parts.
pub fn decompose_derivative(u: &PiecewiseBVField, quadrature: &Quadrature) -> Result<DerivativeDecomposition> {
    if quadrature.n == 0 {
        return Err(Error::SamplingEmpty("quadrature.n"));
    }
    let bulk = bulk_samples(u, quadrature.n);
    if let Some(s) = bulk.iter().find(|s| s.u.iter().chain(&s.grad).any(|v| !v.is_finite())) {
        return Err(Error::NonfiniteValue { value: s.grad.iter().chain(&s.u).copied().find(|v| !v.is_finite()).unwrap() });
    }
    let bulk_m = bulk_mass(&bulk);
    let mut flags = Vec::new();
    if quadrature.n >= 2 {
        let coarse = bulk_mass(&bulk_samples(u, quadrature.n / 2));
        if (coarse - bulk_m).abs() > 1e-3 * bulk_m.max(1e-12) {
            flags.push(DecompositionFlag::QuadratureUnderresolved);
        }
    }
    let mut jumps = Vec::new();
    for (j, rec) in u.jumps.iter().enumerate() {
        for (x, weight) in rec.quadrature(quadrature.jump_points) {
            let (plus, minus) = (u.trace_plus(j, &x), u.trace_minus(j, &x));
            jumps.push(JumpSample { x, weight, record: j, plus, minus, nu: rec.nu.clone() });
        }
    }
    let jump_mass = jumps
        .iter()
        .map(|s| s.weight * s.plus.iter().zip(&s.minus).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect::<KahanSum>()
        .value();
    let mut cantor = Vec::new();
    let mut cantor_mass = 0.0;
    if let Some(c) = &u.cantor {
        flags.push(DecompositionFlag::CantorSurrogate);
        let intervals = c.rising_intervals();
        let weight = c.mass / intervals.len() as f64;
        for (l, r) in intervals {
            let x = vec![0.5 * (l + r)];
            let val = u.value(&x);
            cantor.push(CantorSample { x, weight, u: val, density: c.direction.clone() });
        }
        cantor_mass = cantor.iter().map(|s| s.weight).collect::<KahanSum>().value();
    }
    Ok(DerivativeDecomposition {
        bulk,
        jumps,
        cantor,
        bulk_mass: bulk_m,
        jump_mass,
        cantor_mass,
        surrogate_bulk_mass: cantor_mass,
        flags,
    })
}

/// `|Du|(Ω)`.
pub fn total_variation(u: &PiecewiseBVField, quadrature: &Quadrature) -> Result<f64> {
    Ok(decompose_derivative(u, quadrature)?.total_mass())
}
