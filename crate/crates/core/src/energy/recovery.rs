//! Explicit approximating sequences: the compressed cell minimiser across a
//! planar interface and mollification.

use serde::Serialize;

use super::{recession_for, EnergyMode, EnergySettings};
use crate::bv::{JumpGeometry, LpField, PiecewiseBVField, Region};
use crate::cell::CellField;
use crate::density::{Exponent, Integrand};
use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, mul_transpose_into, KahanSum};
use crate::surface::{make_rotation, solve_kinfty, solve_kp, CellSolution, JumpData};

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryValue {
    pub k: usize,
    pub value: f64,
    /// Width `1/(2k+1)` of the transition layer.
    pub layer_width: f64,
    pub layer_energy: f64,
    pub outside_energy: f64,
}

/// A two-piece step with a flat interface.
struct Step {
    /// Axis normal to the interface.
    axis: usize,
    /// Interface position along `axis`.
    s: f64,
    nu: Vec<f64>,
    minus: usize,
    plus: usize,
    c: Vec<f64>,
    d: Vec<f64>,
}

fn not_step(why: &str) -> Error {
    Error::NotAStepField(why.to_string())
}

fn step_of(u: &PiecewiseBVField) -> Result<Step> {
    if u.pieces.len() != 2 || u.jumps.len() != 1 {
        return Err(not_step("need exactly two pieces and one jump"));
    }
    if u.cantor.is_some() {
        return Err(not_step("field has a Cantor part"));
    }
    let rec = &u.jumps[0];
    let nd = u.space_dim;
    let mut grad = vec![0.0; u.target_dim * nd];
    for (i, p) in u.pieces.iter().enumerate() {
        let probes: Vec<Vec<f64>> = match &p.region {
            Region::Interval(a, b) => [0.25, 0.5, 0.75].iter().map(|t| vec![a + t * (b - a)]).collect(),
            Region::Box(bx, by) => [0.25, 0.5, 0.75]
                .iter()
                .map(|t| vec![bx[0] + t * (bx[1] - bx[0]), by[0] + (1.0 - t) * (by[1] - by[0])])
                .collect(),
            Region::Polygon(_) => return Err(not_step("polygon pieces")),
        };
        for x in probes {
            u.piece_gradient(i, &x, &mut grad);
            if grad.iter().any(|g| g.abs() > 1e-9) {
                return Err(not_step("pieces must be constant"));
            }
        }
    }
    let (axis, s) = match &rec.geometry {
        JumpGeometry::Point(s) => (0, *s),
        JumpGeometry::Segment(a, b) => {
            let axis = rec.nu.iter().position(|v| v.abs() == 1.0).ok_or_else(|| not_step("interface not axis-aligned"))?;
            let lat = 1 - axis;
            let (lo, hi) = u.domain[lat];
            let (t0, t1) = (a[lat].min(b[lat]), a[lat].max(b[lat]));
            if (t0 - lo).abs() > 1e-12 || (t1 - hi).abs() > 1e-12 {
                return Err(not_step("interface must cross the whole domain"));
            }
            (axis, a[axis])
        }
    };
    let mid = rec.midpoint();
    Ok(Step {
        axis,
        s,
        nu: rec.nu.clone(),
        minus: rec.minus_piece,
        plus: rec.plus_piece,
        c: u.trace_plus(0, &mid),
        d: u.trace_minus(0, &mid),
    })
}

/// Best cell solution for the jump of a step field, at `b = 0`.
fn step_cell(u: &PiecewiseBVField, f: &Integrand, mode: EnergyMode, settings: &EnergySettings) -> Result<(Step, CellSolution)> {
    let step = step_of(u)?;
    let rec = recession_for(f, mode, &settings.schedule)?;
    let jd = JumpData {
        x: u.jumps[0].midpoint(),
        b: vec![0.0; f.dims().field_dim],
        c: step.c.clone(),
        d: step.d.clone(),
        nu: step.nu.clone(),
    };
    let sol = match mode {
        EnergyMode::P => solve_kp(&rec, &jd, &settings.solver)?,
        EnergyMode::Infty => solve_kinfty(&rec, &jd, &settings.solver)?,
    };
    Ok((step, sol))
}

/// `J(u_k, v_k)` for the sequence that places the cell minimiser, compressed
/// by `1/(2k+1)`, across the interface of a step field.
pub fn recovery_estimate(
    u: &PiecewiseBVField,
    v: &LpField,
    f: &Integrand,
    mode: EnergyMode,
    k: usize,
    settings: &EnergySettings,
) -> Result<RecoveryValue> {
    let (step, cell) = step_cell(u, f, mode, settings)?;
    recovery_with_cell(u, v, f, &step, &cell.field, k, settings)
}

/// Values for several `k` sharing one cell solve.
pub(crate) fn recovery_ladder(
    u: &PiecewiseBVField,
    v: &LpField,
    f: &Integrand,
    mode: EnergyMode,
    ks: &[usize],
    settings: &EnergySettings,
) -> Result<Vec<RecoveryValue>> {
    let (step, cell) = step_cell(u, f, mode, settings)?;
    ks.iter().map(|&k| recovery_with_cell(u, v, f, &step, &cell.field, k, settings)).collect()
}

fn recovery_with_cell(
    u: &PiecewiseBVField,
    v: &LpField,
    f: &Integrand,
    step: &Step,
    cell: &CellField,
    k: usize,
    settings: &EnergySettings,
) -> Result<RecoveryValue> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let eps = 1.0 / (2 * k + 1) as f64;
    let amp = match f.dims().exponent {
        Exponent::Finite(p) => ((2 * k + 1) as f64).powf(1.0 / p),
        Exponent::Infinity => 1.0,
    };
    let nd = u.space_dim;
    let (d, m) = (u.target_dim, f.dims().field_dim);
    let rot = make_rotation(&step.nu)?;
    let (gnodes, gweights) = gauss_legendre(3);

    // transition layer |x_axis − s| ≤ ε/2, split into the lattice cells of the compressed cube
    let n = cell.n;
    let h = eps / n as f64;
    let (lat_lo, lat_hi, lat_cells) = if nd == 1 {
        (0.0, 0.0, 1)
    } else {
        let (lo, hi) = u.domain[1 - step.axis];
        (lo, hi, ((hi - lo) / h).ceil() as usize)
    };
    let mut layer = KahanSum::default();
    let (mut w, mut gz, mut gx) = (vec![0.0; d], vec![0.0; d * nd], vec![0.0; d * nd]);
    let mut vb = vec![0.0; m];
    let mut x = vec![0.0; nd];
    let mut y = vec![0.0; nd];
    let mut z = vec![0.0; nd];
    for jn in 0..n {
        for jl in 0..lat_cells {
            let (l0, l1) = if nd == 1 { (0.0, 0.0) } else { (lat_lo + jl as f64 * h, (lat_lo + (jl + 1) as f64 * h).min(lat_hi)) };
            for (qa, wa) in gnodes.iter().zip(&gweights) {
                let t = -0.5 * eps + (jn as f64 + 0.5 + 0.5 * qa) * h;
                x[step.axis] = step.s + t;
                let lat_pts: &[(f64, f64)] = &if nd == 1 {
                    vec![(0.0, 1.0)]
                } else {
                    gnodes.iter().zip(&gweights).map(|(qb, wb)| (l0 + (0.5 + 0.5 * qb) * (l1 - l0), 0.5 * wb * (l1 - l0))).collect::<Vec<_>>()
                };
                for &(l, wl) in lat_pts {
                    if nd == 2 {
                        x[1 - step.axis] = l;
                    }
                    // y = (x − x0)/ε, z = Rᵀ y + 1/2, lateral component wrapped
                    for i in 0..nd {
                        let x0 = if i == step.axis { step.s } else { lat_lo };
                        y[i] = (x[i] - x0) / eps;
                    }
                    for i in 0..nd {
                        z[i] = (0..nd).map(|r| rot[r * nd + i] * y[r]).sum::<f64>() + 0.5;
                    }
                    if nd == 2 {
                        z[0] = z[0].rem_euclid(1.0);
                    }
                    z[nd - 1] = z[nd - 1].clamp(0.0, 1.0);
                    cell.eval(&z, &mut w, &mut gz);
                    if nd == 1 {
                        gx[..d].iter_mut().zip(&gz).for_each(|(o, g)| *o = g * rot[0] / eps);
                    } else {
                        mul_transpose_into(&gz, &rot, d, nd, &mut gx);
                        gx.iter_mut().for_each(|g| *g /= eps);
                    }
                    v.value(&x, &mut vb);
                    let eta = cell.eta_at(&z);
                    for (a, e) in vb.iter_mut().zip(eta) {
                        *a += amp * e;
                    }
                    let weight = 0.5 * wa * h * wl;
                    layer.add(weight * f.evaluate(&x, &w, &vb, &gx)?);
                }
            }
        }
    }

    // outside the layer each piece keeps its constant value
    let mut outside = KahanSum::default();
    let mut grad = vec![0.0; d * nd];
    for (i, side) in [(step.minus, -1.0), (step.plus, 1.0)] {
        let region = clip_outside(&u.pieces[i].region, step.axis, step.s, 0.5 * eps, side * step.nu[step.axis]);
        let Some(region) = region else { continue };
        for (xq, wq) in region.quadrature(settings.quadrature.n) {
            u.piece_value(i, &xq, &mut w);
            u.piece_gradient(i, &xq, &mut grad);
            v.value(&xq, &mut vb);
            outside.add(wq * f.evaluate(&xq, &w, &vb, &grad)?);
        }
    }
    let (layer, outside) = (layer.value(), outside.value());
    Ok(RecoveryValue { k, value: layer + outside, layer_width: eps, layer_energy: layer, outside_energy: outside })
}

/// Part of `region` on the `side` of the layer `|x_axis − s| ≤ half`.
fn clip_outside(region: &Region, axis: usize, s: f64, half: f64, side: f64) -> Option<Region> {
    let (lo, hi) = if side > 0.0 { (s + half, f64::INFINITY) } else { (f64::NEG_INFINITY, s - half) };
    match region {
        Region::Interval(a, b) => {
            let (a, b) = (a.max(lo), b.min(hi));
            (a < b).then_some(Region::Interval(a, b))
        }
        Region::Box(bx, by) => {
            let mut r = [*bx, *by];
            r[axis] = [r[axis][0].max(lo), r[axis][1].min(hi)];
            (r[axis][0] < r[axis][1]).then_some(Region::Box(r[0], r[1]))
        }
        Region::Polygon(_) => None,
    }
}

const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

/// Standard bump `ρ(y) = C exp(−1/(1−y²))` on `(−1, 1)` and its derivative.
fn bump(y: f64) -> (f64, f64) {
    if y.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - y * y;
    let r = (-1.0 / q).exp() / BUMP_MASS;
    (r, r * (-2.0 * y / (q * q)))
}

/// `J(u ∗ ρ_ε, v)` on a one-dimensional field.
pub fn mollified_energy(u: &PiecewiseBVField, v: &LpField, f: &Integrand, eps: f64, panels: usize) -> Result<f64> {
    if u.space_dim != 1 {
        return Err(Error::InvalidDimensions("mollified ladder is implemented for N = 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let d = u.target_dim;
    let breaks: Vec<f64> = u
        .jumps
        .iter()
        .filter_map(|j| match j.geometry {
            JumpGeometry::Point(s) => Some(s),
            _ => None,
        })
        .collect();
    let (gn, gw) = gauss_legendre(48);
    let mollify = |x: f64, val: &mut [f64], der: &mut [f64]| {
        val.iter_mut().for_each(|a| *a = 0.0);
        der.iter_mut().for_each(|a| *a = 0.0);
        // integrate over y in (−ε, ε), split where x − y crosses a jump
        let mut cuts = vec![-eps, eps];
        cuts.extend(breaks.iter().map(|s| x - s).filter(|y| y.abs() < eps));
        cuts.sort_by(f64::total_cmp);
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            for (t, w) in gn.iter().zip(&gw) {
                let y = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let (r, dr) = bump(y / eps);
                let uv = u.value(&[x - y]);
                let wt = 0.5 * (b - a) * w / eps;
                for i in 0..d {
                    val[i] += wt * r * uv[i];
                    der[i] += wt * dr / eps * uv[i];
                }
            }
        }
    };
    let (lo, hi) = u.domain[0];
    let mut cuts = vec![lo, hi];
    for s in &breaks {
        cuts.extend([s - eps, s + eps].iter().filter(|c| **c > lo && **c < hi));
    }
    cuts.sort_by(f64::total_cmp);
    let (qn, qw) = gauss_legendre(8);
    let mut acc = KahanSum::default();
    let (mut val, mut der) = (vec![0.0; d], vec![0.0; d]);
    let mut vb = vec![0.0; v.field_dim];
    for seg in cuts.windows(2) {
        let len = seg[1] - seg[0];
        if len <= 0.0 {
            continue;
        }
        let h = len / panels as f64;
        for pnl in 0..panels {
            let a = seg[0] + pnl as f64 * h;
            for (t, w) in qn.iter().zip(&qw) {
                let x = a + 0.5 * h * (1.0 + t);
                mollify(x, &mut val, &mut der);
                v.value(&[x], &mut vb);
                acc.add(0.5 * h * w * f.evaluate(&[x], &val, &vb, &der)?);
            }
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bv::{build_field, FieldSpec};
    use crate::density::{catalog, Dimensions};

    fn scalar(name: &str) -> Integrand {
        catalog(name, Dimensions::scalar(Exponent::Finite(2.0))).unwrap()
    }

    fn settings() -> EnergySettings {
        let mut s = EnergySettings::default_for(1);
        s.solver.grid_n = 16;
        s.solver.multistart = 1;
        s
    }

    #[test]
    fn bump_is_normalised() {
        let (n, w) = gauss_legendre(64);
        let mass: f64 = n.iter().zip(&w).map(|(y, w)| w * bump(*y).0).sum();
        assert!((mass - 1.0).abs() < 1e-10, "{mass}");
    }

    #[test]
    fn recovery_exact_for_homogeneous_density() {
        let u = build_field(&FieldSpec::step(0.5, 0.0, 1.0)).unwrap();
        let v = LpField::zero(1, 1, Exponent::Finite(2.0));
        for k in [1, 4, 16] {
            let r = recovery_estimate(&u, &v, &scalar("p-norm-sum"), EnergyMode::P, k, &settings()).unwrap();
            assert!((r.value - 1.0).abs() < 1e-9, "{k}: {}", r.value);
        }
    }

    #[test]
    fn recovery_for_area_density_matches_formula() {
        let u = build_field(&FieldSpec::step(0.5, 0.0, 1.0)).unwrap();
        let v = LpField::zero(1, 1, Exponent::Finite(2.0));
        for k in [4, 16] {
            let r = recovery_estimate(&u, &v, &scalar("area-like"), EnergyMode::P, k, &settings()).unwrap();
            let eps = 1.0 / (2 * k + 1) as f64;
            let exact = 1.0 - eps + (1.0 + eps * eps).sqrt();
            assert!((r.value - exact).abs() < 1e-6, "{} {}", r.value, exact);
        }
    }

    #[test]
    fn recovery_in_two_dimensions() {
        let spec = FieldSpec {
            domain: vec![[0.0, 1.0], [0.0, 1.0]],
            target_dim: 1,
            pieces: vec![
                crate::bv::PieceSpec {
                    region: crate::bv::RegionSpec::Box([[0.0, 0.5], [0.0, 1.0]]),
                    value: crate::bv::Exprs::One("0".into()),
                    gradient: None,
                },
                crate::bv::PieceSpec {
                    region: crate::bv::RegionSpec::Box([[0.5, 1.0], [0.0, 1.0]]),
                    value: crate::bv::Exprs::One("1".into()),
                    gradient: None,
                },
            ],
            jumps: vec![],
            cantor: None,
        };
        let u = build_field(&spec).unwrap();
        let f = catalog("p-norm-sum", Dimensions::new(2, 1, 1, Exponent::Finite(2.0)).unwrap()).unwrap();
        let v = LpField::zero(2, 1, Exponent::Finite(2.0));
        let mut s = EnergySettings::default_for(2);
        s.solver = crate::cell::SolverSettings { grid_n: 4, multistart: 1, ..Default::default() };
        s.quadrature.n = 8;
        let r = recovery_estimate(&u, &v, &f, EnergyMode::P, 2, &s).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn not_a_step() {
        let u = build_field(&FieldSpec::smooth("x", None)).unwrap();
        let v = LpField::zero(1, 1, Exponent::Finite(2.0));
        assert!(matches!(
            recovery_estimate(&u, &v, &scalar("p-norm-sum"), EnergyMode::P, 2, &settings()),
            Err(Error::NotAStepField(_))
        ));
    }

    #[test]
    fn mollified_step() {
        let u = build_field(&FieldSpec::step(0.5, 0.0, 1.0)).unwrap();
        let v = LpField::zero(1, 1, Exponent::Finite(2.0));
        let e = mollified_energy(&u, &v, &scalar("p-norm-sum"), 0.05, 16).unwrap();
        assert!((e - 1.0).abs() < 1e-7, "{e}");
        let e = mollified_energy(&u, &v, &scalar("area-like"), 0.01, 16).unwrap();
        assert!(e > 1.98 && e < 2.0, "{e}");
        let smooth = build_field(&FieldSpec::smooth("x^2", None)).unwrap();
        let e = mollified_energy(&smooth, &v, &scalar("p-norm-sum"), 0.01, 16).unwrap();
        assert!((e - 1.0).abs() < 1e-6, "{e}");
    }
}
