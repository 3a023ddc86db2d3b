//! Discrete cell problems on the unit cube shared by the envelope and the
//! jump-density solvers.
//!
//! The cube `(0,1)^N` is split into `n^N` cells. The vector field `w` (or
//! `φ`) is piecewise multilinear with nodal unknowns; the field `η` is
//! constant per cell. Nodes on the faces `z_N ∈ {0, 1}` are pinned; lateral
//! faces (`z_1` in 2D) are either pinned or identified periodically.
//!
//! Energies are integrated with the tensor 2-point Gauss rule, which is exact
//! for the gradients of multilinear fields.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::density::Integrand;
use crate::error::{Error, Result};
use crate::linalg::mul_transpose_into;
use crate::optim::{minimize, DescentSettings, DescentStatus, LocalObjective, Projection};
use crate::seed;

const MAX_COMPONENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lateral {
    /// Lateral faces pinned to zero (used with zero pins on every face).
    Pinned,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub dim: usize,
    pub n: usize,
    pub lateral: Lateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Free(usize),
    /// 0: face `z_N = 0`, 1: face `z_N = 1` (or any pinned lateral node).
    Fixed(usize),
}

impl Lattice {
    pub fn new(dim: usize, n: usize, lateral: Lateral) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidDimensions(format!("cell problems need N in {{1,2}}, got {dim}")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid_n must be at least 2, got {n}")));
        }
        Ok(Lattice { dim, n, lateral })
    }

    pub fn n_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn n_nodes(&self) -> usize {
        (self.n + 1).pow(self.dim as u32)
    }

    fn node_id(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * (self.n + 1) + i
        }
    }

    /// Slot of every node; periodic copies share the slot of `i = 0`.
    fn slots(&self) -> (Vec<Slot>, usize) {
        let n = self.n;
        let mut slots = vec![Slot::Fixed(0); self.n_nodes()];
        let mut free = 0;
        if self.dim == 1 {
            for (k, s) in slots.iter_mut().enumerate() {
                *s = if k == 0 {
                    Slot::Fixed(0)
                } else if k == n {
                    Slot::Fixed(1)
                } else {
                    free += 1;
                    Slot::Free(free - 1)
                };
            }
            return (slots, free);
        }
        for j in 0..=n {
            for i in 0..=n {
                let id = self.node_id(i, j);
                slots[id] = if j == 0 {
                    Slot::Fixed(0)
                } else if j == n {
                    Slot::Fixed(1)
                } else if i == 0 || i == n {
                    match self.lateral {
                        Lateral::Pinned => Slot::Fixed(0),
                        Lateral::Periodic if i == n => slots[self.node_id(0, j)],
                        Lateral::Periodic => {
                            free += 1;
                            Slot::Free(free - 1)
                        }
                    }
                } else {
                    free += 1;
                    Slot::Free(free - 1)
                };
            }
        }
        (slots, free)
    }

    /// Corner node ids of a cell, in the order (0,0), (1,0), (0,1), (1,1).
    fn corners(&self, cell: usize) -> Vec<usize> {
        if self.dim == 1 {
            vec![cell, cell + 1]
        } else {
            let (i, j) = (cell % self.n, cell / self.n);
            vec![
                self.node_id(i, j),
                self.node_id(i + 1, j),
                self.node_id(i, j + 1),
                self.node_id(i + 1, j + 1),
            ]
        }
    }
}

/// How the `u` argument of the density is formed.
#[derive(Debug, Clone, PartialEq)]
pub enum UArgument {
    /// `u` is held fixed (envelope problems).
    Fixed(Vec<f64>),
    /// `u` is the value of the nodal field (jump cell problems).
    Field,
}

/// Constraint `|η̃_c − center| ≤ radius` on every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Everything defining one discrete cell energy
/// `Σ_c ∫_c f(x, u, b0 + η̃_c, ξ0 + ∇_z w Rᵀ)`.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub lattice: Lattice,
    pub x: Vec<f64>,
    pub u_arg: UArgument,
    pub b0: Vec<f64>,
    pub xi0: Vec<f64>,
    /// Row-major `N × N` rotation; gradients are mapped with `∇_y = ∇_z Rᵀ`.
    pub rotation: Vec<f64>,
    /// Pinned values on the faces `z_N = 0` and `z_N = 1`.
    pub face_values: [Vec<f64>; 2],
    pub ball: Option<AmplitudeBall>,
}

/// The discrete energy as a [`LocalObjective`].
pub struct CellObjective {
    density: Integrand,
    spec: CellSpec,
    d: usize,
    m: usize,
    n_free: usize,
    corner_slots: Vec<Vec<Slot>>,
    elems: Vec<Vec<usize>>,
    quad: Vec<([f64; 2], f64)>,
    volume: f64,
}

impl CellObjective {
    pub fn new(density: &Integrand, spec: CellSpec) -> Result<Self> {
        let dims = density.dims();
        let (nd, d, m) = (dims.space_dim, dims.target_dim, dims.field_dim);
        if spec.lattice.dim != nd {
            return Err(Error::DimensionMismatch { what: "lattice", expected: nd, got: spec.lattice.dim });
        }
        if d > MAX_COMPONENTS || m > MAX_COMPONENTS {
            return Err(Error::InvalidDimensions(format!("cell solvers support d, m <= {MAX_COMPONENTS}")));
        }
        let shape = [
            ("x", nd, spec.x.len()),
            ("b", m, spec.b0.len()),
            ("xi", d * nd, spec.xi0.len()),
            ("rotation", nd * nd, spec.rotation.len()),
            ("face value", d, spec.face_values[0].len()),
            ("face value", d, spec.face_values[1].len()),
        ];
        for (what, expected, got) in shape {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        if let UArgument::Fixed(u) = &spec.u_arg {
            if u.len() != d {
                return Err(Error::DimensionMismatch { what: "u", expected: d, got: u.len() });
            }
        }
        let lat = spec.lattice;
        let (slots, n_free) = lat.slots();
        let n_cells = lat.n_cells();
        let corner_slots: Vec<Vec<Slot>> =
            (0..n_cells).map(|c| lat.corners(c).into_iter().map(|id| slots[id]).collect()).collect();
        let mut elems = vec![Vec::new(); n_free * d + n_cells * m];
        for (c, cs) in corner_slots.iter().enumerate() {
            for slot in cs {
                if let Slot::Free(k) = slot {
                    for comp in 0..d {
                        let v = k * d + comp;
                        if !elems[v].contains(&c) {
                            elems[v].push(c);
                        }
                    }
                }
            }
            for comp in 0..m {
                elems[n_free * d + c * m + comp].push(c);
            }
        }
        let g = 0.5 / 3f64.sqrt();
        let gauss = [0.5 - g, 0.5 + g];
        let quad = match (nd, &spec.u_arg) {
            // integrand is constant on each cell
            (1, UArgument::Fixed(_)) => vec![([0.5, 0.0], 1.0)],
            (1, UArgument::Field) => gauss.iter().map(|&s| ([s, 0.0], 0.5)).collect(),
            _ => {
                let mut q = Vec::with_capacity(4);
                for &t in &gauss {
                    for &s in &gauss {
                        q.push(([s, t], 0.25));
                    }
                }
                q
            }
        };
        let volume = (1.0 / lat.n as f64).powi(nd as i32);
        Ok(CellObjective { density: density.clone(), spec, d, m, n_free, corner_slots, elems, quad, volume })
    }

    pub fn spec(&self) -> &CellSpec {
        &self.spec
    }

    pub fn n_node_vars(&self) -> usize {
        self.n_free * self.d
    }

    pub fn eta_offset(&self) -> usize {
        self.n_free * self.d
    }

    #[inline]
    fn corner_value(&self, vars: &[f64], slot: Slot, comp: usize) -> f64 {
        match slot {
            Slot::Free(k) => vars[k * self.d + comp],
            Slot::Fixed(face) => self.spec.face_values[face][comp],
        }
    }

    /// Initial nodal unknowns interpolating linearly between the faces in `z_N`.
    pub fn linear_profile(&self) -> Vec<f64> {
        let lat = self.spec.lattice;
        let (slots, _) = lat.slots();
        let mut vars = vec![0.0; self.n_vars()];
        let n = lat.n;
        for id in 0..lat.n_nodes() {
            if let Slot::Free(k) = slots[id] {
                let j = if lat.dim == 1 { id } else { id / (n + 1) };
                let t = j as f64 / n as f64;
                for comp in 0..self.d {
                    let (lo, hi) = (self.spec.face_values[0][comp], self.spec.face_values[1][comp]);
                    vars[k * self.d + comp] = lo + t * (hi - lo);
                }
            }
        }
        vars
    }

    /// Full nodal field (every lattice node, periodic copies included).
    pub fn node_field(&self, vars: &[f64]) -> Vec<f64> {
        let (slots, _) = self.spec.lattice.slots();
        let mut out = Vec::with_capacity(slots.len() * self.d);
        for s in slots {
            for comp in 0..self.d {
                out.push(self.corner_value(vars, s, comp));
            }
        }
        out
    }

    /// Cell values of `shift + η̃`.
    pub fn eta_field(&self, vars: &[f64], shift: &[f64]) -> Vec<f64> {
        let off = self.eta_offset();
        vars[off..]
            .chunks(self.m)
            .flat_map(|c| c.iter().zip(shift).map(|(a, s)| a + s).collect::<Vec<_>>())
            .collect()
    }

    /// The discrete fields of `vars` with `shift` added to every η cell.
    pub fn field(&self, vars: &[f64], shift: &[f64]) -> CellField {
        CellField {
            dim: self.spec.lattice.dim,
            n: self.spec.lattice.n,
            d: self.d,
            m: self.m,
            nodes: self.node_field(vars),
            eta: self.eta_field(vars, shift),
        }
    }

    pub fn projection(&self) -> EtaProjection {
        EtaProjection {
            offset: self.eta_offset(),
            cells: self.spec.lattice.n_cells(),
            m: self.m,
            ball: self.spec.ball.clone(),
        }
    }

    /// Whether any cell sits on the amplitude ball.
    pub fn ball_active(&self, vars: &[f64]) -> bool {
        let Some(ball) = &self.spec.ball else { return false };
        vars[self.eta_offset()..].chunks(self.m).any(|c| {
            let r: f64 = c.iter().zip(&ball.center).map(|(a, z)| (a - z) * (a - z)).sum::<f64>().sqrt();
            r >= ball.radius * (1.0 - 1e-9)
        })
    }
}

impl LocalObjective for CellObjective {
    fn n_vars(&self) -> usize {
        self.n_free * self.d + self.spec.lattice.n_cells() * self.m
    }

    fn n_elems(&self) -> usize {
        self.spec.lattice.n_cells()
    }

    fn elems_of_var(&self, var: usize) -> &[usize] {
        &self.elems[var]
    }

    fn elem_energy(&self, vars: &[f64], cell: usize) -> f64 {
        let (d, m) = (self.d, self.m);
        let nd = self.spec.lattice.dim;
        let hinv = self.spec.lattice.n as f64;
        let slots = &self.corner_slots[cell];
        let mut corner = [[0.0f64; MAX_COMPONENTS]; 4];
        for (k, s) in slots.iter().enumerate() {
            for comp in 0..d {
                corner[k][comp] = self.corner_value(vars, *s, comp);
            }
        }
        let mut b = [0.0f64; MAX_COMPONENTS];
        let eoff = self.eta_offset() + cell * m;
        for k in 0..m {
            b[k] = self.spec.b0[k] + vars[eoff + k];
        }
        let mut u = [0.0f64; MAX_COMPONENTS];
        let mut grad = [0.0f64; 2 * MAX_COMPONENTS];
        let mut xi = [0.0f64; 2 * MAX_COMPONENTS];
        let mut acc = 0.0;
        for &([s, t], weight) in &self.quad {
            for comp in 0..d {
                if nd == 1 {
                    let (w0, w1) = (corner[0][comp], corner[1][comp]);
                    u[comp] = w0 + s * (w1 - w0);
                    grad[comp] = (w1 - w0) * hinv;
                } else {
                    let (w00, w10, w01, w11) = (corner[0][comp], corner[1][comp], corner[2][comp], corner[3][comp]);
                    u[comp] = w00 * (1.0 - s) * (1.0 - t) + w10 * s * (1.0 - t) + w01 * (1.0 - s) * t + w11 * s * t;
                    grad[comp * 2] = ((1.0 - t) * (w10 - w00) + t * (w11 - w01)) * hinv;
                    grad[comp * 2 + 1] = ((1.0 - s) * (w01 - w00) + s * (w11 - w10)) * hinv;
                }
            }
            let k = d * nd;
            if nd == 1 {
                xi[..k].copy_from_slice(&grad[..k]);
            } else {
                mul_transpose_into(&grad[..k], &self.spec.rotation, d, nd, &mut xi[..k]);
            }
            for (x, x0) in xi[..k].iter_mut().zip(&self.spec.xi0) {
                *x += x0;
            }
            let u_arg: &[f64] = match &self.spec.u_arg {
                UArgument::Fixed(u0) => u0,
                UArgument::Field => &u[..d],
            };
            acc += weight * self.density.eval(&self.spec.x, u_arg, &b[..m], &xi[..k]);
        }
        acc * self.volume
    }
}

/// Projection onto `{mean η̃ = 0}` intersected with the optional amplitude balls.
#[derive(Debug, Clone)]
pub struct EtaProjection {
    offset: usize,
    cells: usize,
    m: usize,
    ball: Option<AmplitudeBall>,
}

impl EtaProjection {
    fn mean_zero(&self, v: &mut [f64]) {
        let eta = &mut v[self.offset..];
        for comp in 0..self.m {
            let mean = eta.iter().skip(comp).step_by(self.m).sum::<f64>() / self.cells as f64;
            eta.iter_mut().skip(comp).step_by(self.m).for_each(|x| *x -= mean);
        }
    }

    fn clip(&self, v: &mut [f64], ball: &AmplitudeBall) {
        for c in v[self.offset..].chunks_mut(self.m) {
            let r: f64 = c.iter().zip(&ball.center).map(|(a, z)| (a - z) * (a - z)).sum::<f64>().sqrt();
            if r > ball.radius {
                let s = ball.radius / r;
                for (a, z) in c.iter_mut().zip(&ball.center) {
                    *a = z + (*a - z) * s;
                }
            }
        }
    }

    /// Mean and ball residuals of the η̃ block.
    pub fn residuals(&self, v: &[f64]) -> (f64, f64) {
        let eta = &v[self.offset..];
        let mut mean_res: f64 = 0.0;
        for comp in 0..self.m {
            let mean = eta.iter().skip(comp).step_by(self.m).sum::<f64>() / self.cells as f64;
            mean_res = mean_res.max(mean.abs());
        }
        let ball_res = match &self.ball {
            None => 0.0,
            Some(ball) => eta
                .chunks(self.m)
                .map(|c| {
                    let r: f64 = c.iter().zip(&ball.center).map(|(a, z)| (a - z) * (a - z)).sum::<f64>().sqrt();
                    (r - ball.radius).max(0.0)
                })
                .fold(0.0, f64::max),
        };
        (mean_res, ball_res)
    }

    /// Exact projection for scalar η: find the shift λ with
    /// `Σ clip(y_c − λ) = 0` by bisection.
    fn project_scalar(&self, v: &mut [f64], ball: &AmplitudeBall) {
        let (lo, hi) = (ball.center[0] - ball.radius, ball.center[0] + ball.radius);
        let eta = &mut v[self.offset..];
        let total = |lam: f64, eta: &[f64]| eta.iter().map(|y| (y - lam).clamp(lo, hi)).sum::<f64>();
        let ymin = eta.iter().copied().fold(f64::INFINITY, f64::min);
        let ymax = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut a, mut b) = (ymin - hi, ymax - lo);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if total(mid, eta) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
        }
        let lam = 0.5 * (a + b);
        eta.iter_mut().for_each(|y| *y = (*y - lam).clamp(lo, hi));
    }
}

impl Projection for EtaProjection {
    fn project(&self, v: &mut [f64]) {
        match &self.ball {
            None => self.mean_zero(v),
            Some(ball) if self.m == 1 => {
                self.project_scalar(v, ball);
                // absorb the bisection's last-bit error
                let (mean_res, _) = self.residuals(v);
                if mean_res > 0.0 {
                    self.mean_zero(v);
                }
            }
            Some(ball) => {
                // mean, clip, re-project: alternating projections
                for _ in 0..50 {
                    self.mean_zero(v);
                    self.clip(v, ball);
                    let (mean_res, ball_res) = self.residuals(v);
                    if mean_res < 1e-12 && ball_res < 1e-12 {
                        break;
                    }
                }
                self.mean_zero(v);
            }
        }
    }

    fn project_tangent(&self, dir: &mut [f64]) {
        self.mean_zero(dir);
    }
}

/// Grid and multistart controls shared by the cell solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    pub grid_n: usize,
    /// Random starts in addition to the deterministic start.
    pub multistart: usize,
    pub seed: u64,
    #[serde(skip)]
    pub descent: DescentSettings,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { grid_n: 16, multistart: 8, seed: 0, descent: DescentSettings::default() }
    }
}

impl SolverSettings {
    pub fn with_grid(mut self, grid_n: usize) -> Self {
        self.grid_n = grid_n;
        self
    }
}

/// Distribution of the η̃ entries of a random start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaStart {
    Uniform(f64),
    /// Cells take `levels` equispaced values in `[-radius, radius]`, each
    /// value on the same number of cells (up to one).
    Levels { radius: f64, levels: usize },
}

/// `count` perturbations of `initial`; start `j` draws from stream `j + 1` of `seed`.
pub fn random_starts(
    obj: &CellObjective,
    initial: &[f64],
    count: usize,
    seed_value: u64,
    node_radius: f64,
    eta: EtaStart,
) -> Vec<Vec<f64>> {
    let n_node = obj.n_node_vars();
    (0..count)
        .map(|j| {
            let mut rng = seed::rng(seed_value, j as u64 + 1);
            let mut x = initial.to_vec();
            for v in x[..n_node].iter_mut() {
                if node_radius > 0.0 {
                    *v += rng.gen_range(-node_radius..node_radius);
                }
            }
            match eta {
                EtaStart::Uniform(r) if r > 0.0 => {
                    x[n_node..].iter_mut().for_each(|v| *v += rng.gen_range(-r..r));
                }
                EtaStart::Uniform(_) => {}
                EtaStart::Levels { radius, levels } => {
                    // balanced: every level used equally often, in random cell order
                    let levels = levels.max(2);
                    let mut cells: Vec<usize> = (0..obj.spec.lattice.n_cells()).collect();
                    cells.shuffle(&mut rng);
                    for (k, c) in cells.into_iter().enumerate() {
                        let level = -radius + 2.0 * radius * (k % levels) as f64 / (levels - 1) as f64;
                        for comp in 0..obj.m {
                            x[n_node + c * obj.m + comp] += level;
                        }
                    }
                }
            }
            x
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    pub index: usize,
    pub value: f64,
    pub iterations: usize,
    pub status: DescentStatus,
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub vars: Vec<f64>,
    pub value: f64,
    pub best_start: usize,
    pub starts: Vec<StartReport>,
    pub converged: bool,
}

/// Runs descent from every start (in parallel) and keeps the lowest final
/// value; ties go to the lowest start index. Starts that hit a non-finite
/// energy are reported and skipped.
pub fn run_starts(obj: &CellObjective, starts: &[Vec<f64>], descent: &DescentSettings) -> Result<CellRun> {
    let proj = obj.projection();
    let results: Vec<_> = starts.par_iter().map(|x0| minimize(obj, &proj, x0, descent)).collect();
    let mut best: Option<usize> = None;
    let mut reports = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        reports.push(StartReport { index: i, value: r.value, iterations: r.iterations, status: r.status });
        if r.status == DescentStatus::NonFinite {
            continue;
        }
        if best.is_none_or(|b| r.value < results[b].value) {
            best = Some(i);
        }
    }
    let best = best.ok_or(Error::AllStartsFailed)?;
    let r = &results[best];
    Ok(CellRun {
        vars: r.vars.clone(),
        value: r.value,
        best_start: best,
        converged: r.status == DescentStatus::Converged,
        starts: reports,
    })
}

/// A solved cell field that can be evaluated anywhere in the unit cube.
#[derive(Debug, Clone, Serialize)]
pub struct CellField {
    pub dim: usize,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    /// Nodal values, `(n+1)^N × d`, node `(i, j)` at `j (n+1) + i`.
    pub nodes: Vec<f64>,
    /// Cell values, `n^N × m`, cell `(i, j)` at `j n + i`.
    pub eta: Vec<f64>,
}

impl CellField {
    fn locate(&self, z: f64) -> (usize, f64) {
        let n = self.n as f64;
        let s = (z.clamp(0.0, 1.0) * n).min(n - 1e-12);
        let i = (s.floor() as usize).min(self.n - 1);
        (i, s - i as f64)
    }

    /// Value and reference gradient `∇_z w` (row-major `d × N`) at `z ∈ [0,1]^N`.
    pub fn eval(&self, z: &[f64], value: &mut [f64], grad: &mut [f64]) {
        let n = self.n;
        let d = self.d;
        if self.dim == 1 {
            let (i, s) = self.locate(z[0]);
            for c in 0..d {
                let (w0, w1) = (self.nodes[i * d + c], self.nodes[(i + 1) * d + c]);
                value[c] = w0 + s * (w1 - w0);
                grad[c] = (w1 - w0) * n as f64;
            }
            return;
        }
        let (i, s) = self.locate(z[0]);
        let (j, t) = self.locate(z[1]);
        let id = |a: usize, b: usize| b * (n + 1) + a;
        for c in 0..d {
            let w00 = self.nodes[id(i, j) * d + c];
            let w10 = self.nodes[id(i + 1, j) * d + c];
            let w01 = self.nodes[id(i, j + 1) * d + c];
            let w11 = self.nodes[id(i + 1, j + 1) * d + c];
            value[c] = w00 * (1.0 - s) * (1.0 - t) + w10 * s * (1.0 - t) + w01 * (1.0 - s) * t + w11 * s * t;
            grad[c * 2] = ((1.0 - t) * (w10 - w00) + t * (w11 - w01)) * n as f64;
            grad[c * 2 + 1] = ((1.0 - s) * (w01 - w00) + s * (w11 - w10)) * n as f64;
        }
    }

    pub fn eta_at(&self, z: &[f64]) -> &[f64] {
        let (i, _) = self.locate(z[0]);
        let cell = if self.dim == 1 {
            i
        } else {
            let (j, _) = self.locate(z[1]);
            j * self.n + i
        };
        &self.eta[cell * self.m..(cell + 1) * self.m]
    }

    pub fn eta_mean(&self) -> Vec<f64> {
        let cells = self.eta.len() / self.m;
        (0..self.m)
            .map(|c| self.eta.iter().skip(c).step_by(self.m).sum::<f64>() / cells as f64)
            .collect()
    }
}

/// Maps a coarse solution onto the lattice with `2n` cells per axis; the
/// nodal field is interpolated, cell values are injected.
pub fn prolong(coarse: &CellObjective, vars: &[f64], fine: &CellObjective) -> Vec<f64> {
    let field = coarse.field(vars, &vec![0.0; coarse.m]);
    let lat = fine.spec.lattice;
    let (slots, _) = lat.slots();
    let mut out = vec![0.0; fine.n_vars()];
    let nf = lat.n as f64;
    let mut val = vec![0.0; fine.d];
    let mut grad = vec![0.0; fine.d * lat.dim];
    for (id, slot) in slots.iter().enumerate() {
        if let Slot::Free(k) = slot {
            let z: Vec<f64> = if lat.dim == 1 {
                vec![id as f64 / nf]
            } else {
                vec![(id % (lat.n + 1)) as f64 / nf, (id / (lat.n + 1)) as f64 / nf]
            };
            field.eval(&z, &mut val, &mut grad);
            out[k * fine.d..(k + 1) * fine.d].copy_from_slice(&val);
        }
    }
    let off = fine.eta_offset();
    for c in 0..lat.n_cells() {
        let z: Vec<f64> = if lat.dim == 1 {
            vec![(c as f64 + 0.5) / nf]
        } else {
            vec![((c % lat.n) as f64 + 0.5) / nf, ((c / lat.n) as f64 + 0.5) / nf]
        };
        let e = field.eta_at(&z);
        out[off + c * fine.m..off + (c + 1) * fine.m].copy_from_slice(e);
    }
    out
}
