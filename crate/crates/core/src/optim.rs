//! Projected L-BFGS for objectives that are sums of local element energies.
//!
//! Gradients are central finite differences with step
//! `h = 1e-6 (1 + |x_i|)`; because each variable only touches a few
//! elements, a full gradient costs `O(n)` element evaluations.

use crate::linalg::{dot, KahanSum};

/// `E(x) = Σ_e E_e(x)` where `E_e` reads only a few entries of `x`.
pub trait LocalObjective: Sync {
    fn n_vars(&self) -> usize;
    fn n_elems(&self) -> usize;
    fn elem_energy(&self, vars: &[f64], elem: usize) -> f64;
    /// Elements whose energy depends on variable `var`.
    fn elems_of_var(&self, var: usize) -> &[usize];

    fn energy(&self, vars: &[f64]) -> f64 {
        (0..self.n_elems()).map(|e| self.elem_energy(vars, e)).collect::<KahanSum>().value()
    }
}

/// Feasible set `C = A ∩ B` with `A` affine. `project_tangent` projects onto
/// the linear part of `A`, `project` onto `C`.
pub trait Projection {
    fn project(&self, vars: &mut [f64]);
    fn project_tangent(&self, dir: &mut [f64]);
}

/// No constraints.
pub struct Unconstrained;

impl Projection for Unconstrained {
    fn project(&self, _: &mut [f64]) {}
    fn project_tangent(&self, _: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentSettings {
    pub max_iter: usize,
    /// Stop when `(E_k − E_{k+1}) ≤ rel_tol · |E_k|`.
    pub rel_tol: f64,
    pub memory: usize,
    pub fd_rel_step: f64,
}

impl Default for DescentSettings {
    fn default() -> Self {
        DescentSettings { max_iter: 500, rel_tol: 1e-10, memory: 8, fd_rel_step: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DescentStatus {
    Converged,
    MaxIterations,
    /// No step along the search direction decreased the energy.
    Stalled,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub vars: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: DescentStatus,
}

pub fn fd_gradient<O: LocalObjective + ?Sized>(obj: &O, vars: &mut [f64], rel_step: f64, grad: &mut [f64]) {
    for v in 0..obj.n_vars() {
        let orig = vars[v];
        let h = rel_step * (1.0 + orig.abs());
        let elems = obj.elems_of_var(v);
        vars[v] = orig + h;
        let plus: f64 = elems.iter().map(|&e| obj.elem_energy(vars, e)).sum();
        vars[v] = orig - h;
        let minus: f64 = elems.iter().map(|&e| obj.elem_energy(vars, e)).sum();
        vars[v] = orig;
        grad[v] = (plus - minus) / (2.0 * h);
    }
}

struct Memory {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    cap: usize,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.cap == 0 {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    /// Two-loop recursion: returns `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let beta = rho * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimises `obj` over the feasible set of `proj`, starting from `x0`.
pub fn minimize<O, P>(obj: &O, proj: &P, x0: &[f64], settings: &DescentSettings) -> DescentResult
where
    O: LocalObjective + ?Sized,
    P: Projection + ?Sized,
{
    let n = obj.n_vars();
    let mut x = x0.to_vec();
    proj.project(&mut x);
    let mut fx = obj.energy(&x);
    if !fx.is_finite() {
        return DescentResult { vars: x, value: fx, iterations: 0, status: DescentStatus::NonFinite };
    }
    if n == 0 {
        return DescentResult { vars: x, value: fx, iterations: 0, status: DescentStatus::Converged };
    }
    let mut g = vec![0.0; n];
    fd_gradient(obj, &mut x, settings.fd_rel_step, &mut g);
    proj.project_tangent(&mut g);
    let mut mem = Memory { s: Vec::new(), y: Vec::new(), cap: settings.memory };
    let mut status = DescentStatus::MaxIterations;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];

    while iterations < settings.max_iter {
        if g.iter().any(|v| !v.is_finite()) {
            status = DescentStatus::NonFinite;
            break;
        }
        if g.iter().all(|v| *v == 0.0) {
            status = DescentStatus::Converged;
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            let steepest = attempt == 1 || mem.s.is_empty();
            let mut d = if steepest { g.iter().map(|v| -v).collect() } else { mem.direction(&g) };
            proj.project_tangent(&mut d);
            let mut slope = dot(&d, &g);
            if !(slope < 0.0) {
                d = g.iter().map(|v| -v).collect();
                slope = dot(&d, &g);
            }
            let mut alpha = if steepest {
                let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                (1.0 / gmax).min(1.0)
            } else {
                1.0
            };
            for _ in 0..50 {
                for i in 0..n {
                    trial[i] = x[i] + alpha * d[i];
                }
                proj.project(&mut trial);
                let ft = obj.energy(&trial);
                if !ft.is_finite() {
                    return DescentResult { vars: x, value: fx, iterations, status: DescentStatus::NonFinite };
                }
                let moved: f64 = trial.iter().zip(&x).zip(&g).map(|((t, xi), gi)| (t - xi) * gi).sum();
                if ft < fx && ft <= fx + 1e-4 * moved {
                    accepted = Some(ft);
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            mem.clear();
            if steepest {
                break;
            }
        }
        let Some(f_new) = accepted else {
            status = DescentStatus::Stalled;
            break;
        };
        iterations += 1;
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        x.copy_from_slice(&trial);
        let mut g_new = vec![0.0; n];
        fd_gradient(obj, &mut x, settings.fd_rel_step, &mut g_new);
        proj.project_tangent(&mut g_new);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            mem.push(s, y);
        }
        g = g_new;
        let decrease = fx - f_new;
        fx = f_new;
        if decrease <= settings.rel_tol * fx.abs().max(f64::MIN_POSITIVE) {
            status = DescentStatus::Converged;
            break;
        }
    }
    DescentResult { vars: x, value: fx, iterations, status }
}
