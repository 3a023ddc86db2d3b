//! Jump cell problems `K_p`, `K_∞`, `K_r` on the rotated unit cube `Q_ν`.
//!
//! Every problem is solved on the reference cube `Q = (−1/2, 1/2)^N` mapped
//! to `(0,1)^N`: the profile `w` is pinned to `d` on `z_N = 0` and to `c` on
//! `z_N = 1`, periodic in `z_1`, and the physical gradient is `∇_z w Rᵀ`.

use serde::Serialize;

use crate::cell::{
    prolong, random_starts, run_starts, AmplitudeBall, CellField, CellObjective, CellSpec, EtaStart, Lateral,
    Lattice, SolverSettings, StartReport, UArgument,
};
use crate::density::{Integrand, RecessionDensity, RecessionMode};
use crate::error::{Error, Result};
use crate::linalg::{norm, outer};
use crate::optim::LocalObjective;

/// `R ∈ SO(N)` with `R e_N = ν` (row-major). A Householder reflection taking
/// `e_N` to `ν`, with its first column negated.
pub fn make_rotation(nu: &[f64]) -> Result<Vec<f64>> {
    let n = nu.len();
    if n == 0 || nu.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateNormal);
    }
    let len = norm(nu);
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::NonunitNormal { norm: len });
    }
    if n == 1 {
        return Ok(vec![nu[0]]);
    }
    let mut r = vec![0.0; n * n];
    let mut v: Vec<f64> = nu.iter().map(|x| -x).collect();
    v[n - 1] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv == 0.0 {
        for i in 0..n {
            r[i * n + i] = 1.0;
        }
        return Ok(r);
    }
    if nu[n - 1] == -1.0 {
        for i in 0..n {
            r[i * n + i] = -1.0;
        }
        r[0] = -1.0;
        return Ok(r);
    }
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            r[i * n + j] = id - 2.0 * v[i] * v[j] / vv;
        }
    }
    for i in 0..n {
        r[i * n] = -r[i * n];
    }
    Ok(r)
}

/// Data of one jump: point, mean of `η`, traces `c` (at `y·ν = 1/2`) and
/// `d` (at `y·ν = −1/2`), normal.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct JumpData {
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub nu: Vec<f64>,
}

impl JumpData {
    fn check(&self, f: &Integrand) -> Result<()> {
        let dims = f.dims();
        let shape = [
            ("x", dims.space_dim, self.x.len()),
            ("b", dims.field_dim, self.b.len()),
            ("c", dims.target_dim, self.c.len()),
            ("d", dims.target_dim, self.d.len()),
            ("nu", dims.space_dim, self.nu.len()),
        ];
        for (what, expected, got) in shape {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }

    /// `(c − d) ⊗ ν`, row-major `d × N`.
    pub fn jump_matrix(&self) -> Vec<f64> {
        let diff: Vec<f64> = self.c.iter().zip(&self.d).map(|(a, b)| a - b).collect();
        outer(&diff, &self.nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellKind {
    Kp,
    Kinf,
    Kr,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Kp => "Kp",
            CellKind::Kinf => "Kinf",
            CellKind::Kr => "Kr",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSolution {
    pub kind: CellKind,
    pub value: f64,
    /// `w` nodes and `η` cells (with the mean `b` included).
    pub field: CellField,
    pub grid_n: usize,
    /// `max_k |mean(η)_k − b_k|`.
    pub residual: f64,
    /// `|value(n) − value(n/2)|` plus the recession-surrogate spread at the minimiser.
    pub err_est: f64,
    /// `|K(b) − K(0)|` for `K_∞`.
    pub b_spread: Option<f64>,
    pub r: Option<f64>,
    pub starts: Vec<StartReport>,
    pub best_start: usize,
    pub converged: bool,
    pub ball_active: bool,
}

struct Level {
    obj: CellObjective,
    vars: Vec<f64>,
    value: f64,
    run: crate::cell::CellRun,
}

fn cell_spec(f: &Integrand, jd: &JumpData, grid_n: usize, ball: Option<AmplitudeBall>) -> Result<CellSpec> {
    jd.check(f)?;
    let n = jd.x.len();
    Ok(CellSpec {
        lattice: Lattice::new(n, grid_n, Lateral::Periodic)?,
        x: jd.x.clone(),
        u_arg: UArgument::Field,
        b0: jd.b.clone(),
        xi0: vec![0.0; f.dims().target_dim * n],
        rotation: make_rotation(&jd.nu)?,
        face_values: [jd.d.clone(), jd.c.clone()],
        ball,
    })
}

fn solve_level(
    f: &Integrand,
    jd: &JumpData,
    grid_n: usize,
    ball: Option<&AmplitudeBall>,
    settings: &SolverSettings,
    coarse: Option<&Level>,
) -> Result<Level> {
    let obj = CellObjective::new(f, cell_spec(f, jd, grid_n, ball.cloned())?)?;
    let initial = obj.linear_profile();
    let mut starts = vec![initial.clone()];
    if let Some(c) = coarse {
        starts.push(prolong(&c.obj, &c.vars, &obj));
    }
    let jump: f64 = jd.c.iter().zip(&jd.d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let node_r = 0.5 * jump.max(1.0);
    let eta_r = 2.0 * norm(&jd.b).max(1.0);
    let eta_r = ball.map_or(eta_r, |b| eta_r.min(b.radius));
    starts.extend(random_starts(&obj, &initial, settings.multistart, settings.seed, node_r, EtaStart::Uniform(eta_r)));
    let run = run_starts(&obj, &starts, &settings.descent)?;
    Ok(Level { vars: run.vars.clone(), value: run.value, obj, run })
}

/// Cell infimum of `f` for the jump `jd` on `settings.grid_n`, warm-started
/// from the solve on `grid_n / 2` which also gives the error estimate.
fn solve_cell(
    f: &Integrand,
    last: Option<&Integrand>,
    jd: &JumpData,
    ball: Option<AmplitudeBall>,
    settings: &SolverSettings,
    kind: CellKind,
) -> Result<CellSolution> {
    let n = settings.grid_n;
    let coarse = if n >= 4 { Some(solve_level(f, jd, n / 2, ball.as_ref(), settings, None)?) } else { None };
    let fine = solve_level(f, jd, n, ball.as_ref(), settings, coarse.as_ref())?;
    let mut err_est = coarse.as_ref().map_or(0.0, |c| (fine.value - c.value).abs());
    if let Some(last) = last {
        let spec = cell_spec(last, jd, n, ball.clone())?;
        let alt = CellObjective::new(last, spec)?;
        err_est += (fine.value - alt.energy(&fine.vars)).abs();
    }
    let field = fine.obj.field(&fine.vars, &jd.b);
    let mean = field.eta_mean();
    let residual = mean.iter().zip(&jd.b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(CellSolution {
        kind,
        value: fine.value,
        grid_n: n,
        residual,
        err_est,
        b_spread: None,
        r: None,
        best_start: fine.run.best_start,
        converged: fine.run.converged,
        ball_active: fine.obj.ball_active(&fine.vars),
        starts: fine.run.starts,
        field,
    })
}

/// The recession surrogate evaluated at the last schedule point only.
fn last_point_integrand(rec: &RecessionDensity) -> Integrand {
    let r = rec.clone();
    Integrand::new(format!("{}@last", rec.integrand().name()), rec.dims(), move |x, u, b, xi| {
        r.eval_last(x, u, b, xi)
    })
    .with_dependence(rec.depends_on_x(), rec.depends_on_u())
}

fn require_mode(rec: &RecessionDensity, mode: RecessionMode) -> Result<()> {
    if rec.mode() != mode {
        return Err(Error::InvalidArgument(format!("expected a recession density in mode {mode:?}")));
    }
    Ok(())
}

/// `K_p(x, b, c, d, ν)`.
pub fn solve_kp(rec: &RecessionDensity, jd: &JumpData, settings: &SolverSettings) -> Result<CellSolution> {
    require_mode(rec, RecessionMode::POne)?;
    solve_cell(rec.integrand(), Some(&last_point_integrand(rec)), jd, None, settings, CellKind::Kp)
}

/// `K_∞(x, b, c, d, ν)`; also solves at `b = 0` and reports the spread.
pub fn solve_kinfty(rec: &RecessionDensity, jd: &JumpData, settings: &SolverSettings) -> Result<CellSolution> {
    require_mode(rec, RecessionMode::InftyOne)?;
    let last = last_point_integrand(rec);
    let mut sol = solve_cell(rec.integrand(), Some(&last), jd, None, settings, CellKind::Kinf)?;
    let spread = if jd.b.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        let zero = JumpData { b: vec![0.0; jd.b.len()], ..jd.clone() };
        let at_zero = solve_cell(rec.integrand(), Some(&last), &zero, None, settings, CellKind::Kinf)?;
        (sol.value - at_zero.value).abs()
    };
    sol.b_spread = Some(spread);
    Ok(sol)
}

/// `K_r`: `K_∞` with `|η| ≤ |b| + r` on every cell.
pub fn solve_kr(rec: &RecessionDensity, jd: &JumpData, r: f64, settings: &SolverSettings) -> Result<CellSolution> {
    require_mode(rec, RecessionMode::InftyOne)?;
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("r must be nonnegative, got {r}")));
    }
    let ball = AmplitudeBall { center: jd.b.iter().map(|v| -v).collect(), radius: norm(&jd.b) + r };
    let mut sol =
        solve_cell(rec.integrand(), Some(&last_point_integrand(rec)), jd, Some(ball), settings, CellKind::Kr)?;
    sol.r = Some(r);
    Ok(sol)
}

/// `f^∞(x, b, (c − d) ⊗ ν)` for densities without `u`-dependence.
pub fn closed_form_k(rec: &RecessionDensity, jd: &JumpData) -> Result<f64> {
    if rec.depends_on_u() {
        return Err(Error::UDependentDensity);
    }
    jd.check(rec.integrand())?;
    make_rotation(&jd.nu)?;
    rec.evaluate(&jd.x, &jd.c, &jd.b, &jd.jump_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{catalog, recession_infty, recession_p, Dimensions, Exponent, Schedule};

    fn transpose_mul(r: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| r[k * n + i] * r[k * n + j]).sum();
            }
        }
        out
    }

    fn jump(c: f64, d: f64, b: f64) -> JumpData {
        JumpData { x: vec![0.5], b: vec![b], c: vec![c], d: vec![d], nu: vec![1.0] }
    }

    fn settings(grid_n: usize, multistart: usize) -> SolverSettings {
        SolverSettings { grid_n, multistart, seed: 7, ..Default::default() }
    }

    fn tv() -> Integrand {
        Integrand::from_expression("norm(xi)", Dimensions::scalar(Exponent::Finite(2.0))).unwrap()
    }

    #[test]
    fn rotations() {
        assert_eq!(make_rotation(&[0.0, 1.0]).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        let r = make_rotation(&[1.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, 1.0, -1.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = make_rotation(&[s, s]).unwrap();
        let rtr = transpose_mul(&r, 2);
        for (k, v) in rtr.iter().enumerate() {
            let id = if k % 3 == 0 { 1.0 } else { 0.0 };
            assert!((v - id).abs() < 1e-14);
        }
        assert!((r[1] - s).abs() < 1e-15 && (r[3] - s).abs() < 1e-15);
        assert!((r[0] * r[3] - r[1] * r[2] - 1.0).abs() < 1e-14);
        assert_eq!(make_rotation(&[0.0, -1.0]).unwrap(), vec![-1.0, 0.0, 0.0, -1.0]);
        assert_eq!(make_rotation(&[-1.0]).unwrap(), vec![-1.0]);
        assert!(matches!(make_rotation(&[1.0, 1.0]), Err(Error::NonunitNormal { .. })));
        assert!(matches!(make_rotation(&[f64::NAN, 1.0]), Err(Error::DegenerateNormal)));
    }

    #[test]
    fn total_variation_cell_value() {
        let rec = recession_p(&tv(), &Schedule::default()).unwrap();
        let sol = solve_kp(&rec, &jump(1.0, 0.0, 0.0), &settings(16, 2)).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-9, "{}", sol.value);
        assert_eq!(closed_form_k(&rec, &jump(1.0, 0.0, 0.0)).unwrap(), 1.0);
        let sol = solve_kp(&rec, &jump(0.3, 0.3, 0.0), &settings(8, 2)).unwrap();
        assert!(sol.value.abs() < 1e-12);
    }

    #[test]
    fn traces_are_pinned_and_mean_holds() {
        let f = catalog("p-norm-sum", Dimensions::new(2, 1, 1, Exponent::Finite(2.0)).unwrap()).unwrap();
        let rec = recession_p(&f, &Schedule::default()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let jd = JumpData { x: vec![0.5, 0.5], b: vec![0.4], c: vec![1.0], d: vec![-0.5], nu: vec![s, s] };
        let sol = solve_kp(&rec, &jd, &settings(4, 1)).unwrap();
        let w = &sol.field.nodes;
        for i in 0..5 {
            assert_eq!(w[i], -0.5);
            assert_eq!(w[20 + i], 1.0);
            assert_eq!(w[i * 5], w[i * 5 + 4]);
        }
        assert!(sol.residual <= 1e-12, "{}", sol.residual);
        // K_p ≤ f^∞(b, (c−d)⊗ν) via the linear profile with η ≡ b
        let upper = closed_form_k(&rec, &jd).unwrap();
        assert!(sol.value <= upper + 1e-9 && sol.value >= 1.5 - 1e-9, "{}", sol.value);
    }

    /// `∫ (1 + w(u)) |u'|` over monotone piecewise-linear profiles from 0 to 1.
    fn profile_energy(nodes: &[f64]) -> f64 {
        let weight = |s: f64| 1.0 + (s * (1.0 - s)).clamp(0.0, 1.0);
        let mut e = 0.0;
        let h = 1.0 / (nodes.len() - 1) as f64;
        for w in nodes.windows(2) {
            let slope = (w[1] - w[0]) / h;
            let q = 200;
            for k in 0..q {
                let s = w[0] + (w[1] - w[0]) * (k as f64 + 0.5) / q as f64;
                e += weight(s) * slope.abs() * h / q as f64;
            }
        }
        e
    }

    #[test]
    fn brute_force_monotone_profiles_give_seven_sixths() {
        let levels = 5;
        let mut best = f64::INFINITY;
        let mut worst: f64 = 0.0;
        // six interior nodes on a 5-level grid, nondecreasing
        let mut idx = [0usize; 6];
        loop {
            let mut nodes = vec![0.0];
            nodes.extend(idx.iter().map(|&k| k as f64 / (levels - 1) as f64));
            nodes.push(1.0);
            let e = profile_energy(&nodes);
            best = best.min(e);
            worst = worst.max(e);
            let mut pos = 5;
            loop {
                if idx[pos] + 1 < levels {
                    idx[pos] += 1;
                    let v = idx[pos];
                    idx[pos + 1..].iter_mut().for_each(|k| *k = v);
                    break;
                }
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
                pos -= 1;
            }
            if pos == usize::MAX {
                break;
            }
        }
        assert!((best - 7.0 / 6.0).abs() < 1e-5, "{best}");
        assert!((worst - 7.0 / 6.0).abs() < 1e-5, "{worst}");
    }

    #[test]
    fn u_weighted_cell_value() {
        let f = catalog("u-weighted-tv", Dimensions::scalar(Exponent::Finite(2.0))).unwrap();
        let rec = recession_p(&f, &Schedule::default()).unwrap();
        let sol = solve_kp(&rec, &jump(1.0, 0.0, 0.0), &settings(16, 4)).unwrap();
        assert!((sol.value - 7.0 / 6.0).abs() < 1e-6, "{}", sol.value);
        assert!(matches!(closed_form_k(&rec, &jump(1.0, 0.0, 0.0)), Err(Error::UDependentDensity)));
    }

    #[test]
    fn kinfty_b_independence_and_kr_ladder() {
        let f = catalog("u-weighted-tv", Dimensions::scalar(Exponent::Finite(2.0))).unwrap();
        let rec = recession_infty(&f, &Schedule::default()).unwrap();
        let s = settings(8, 2);
        let k5 = solve_kinfty(&rec, &jump(1.0, 0.0, 5.0), &s).unwrap();
        assert!(k5.b_spread.unwrap() <= 2.0 * k5.err_est, "{:?} {}", k5.b_spread, k5.err_est);
        let mut prev = f64::INFINITY;
        for r in [0.0, 1.0, 4.0] {
            let kr = solve_kr(&rec, &jump(1.0, 0.0, 1.0), r, &s).unwrap();
            assert!(kr.value <= prev + 1e-8);
            prev = kr.value;
        }
        assert!(matches!(solve_kp(&rec, &jump(1.0, 0.0, 0.0), &s), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn closed_form_joint_density() {
        let f = catalog("sqrt-joint", Dimensions::scalar(Exponent::Finite(2.0))).unwrap();
        let rec = recession_p(&f, &Schedule::default()).unwrap();
        let jd = jump(1.0, 0.0, 1.0);
        let k = closed_form_k(&rec, &jd).unwrap();
        assert!((k - 2f64.sqrt()).abs() < 1e-9);
        let sol = solve_kp(&rec, &jd, &settings(32, 2)).unwrap();
        assert!((sol.value - k).abs() <= 0.02 * k, "{} {}", sol.value, k);
    }
}
