//! Sample-based certificates for the growth `(H1)_p`, continuity `(H2)_p`
//! and recession-rate `(H3)_p` hypotheses. These are checks on a finite
//! probe cloud, not proofs; the report carries the cloud it used.

use rand::Rng;
use serde::Serialize;

use super::recession::{recession_p, Schedule};
use super::{with_scaled, Dimensions, Integrand, Point};
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::seed;

/// Fitted `C` above which `(H1)_p` is reported as failing.
pub const GROWTH_FAIL_THRESHOLD: f64 = 100.0;

/// Seeded probe points: the origin, two axis cases and uniform samples with
/// `x ∈ (0,1)^N`, `u ∈ [-2,2]^d`, `b ∈ [-3,3]^m`, `ξ ∈ [-3,3]^{d×N}`.
pub fn probe_cloud(dims: Dimensions, count: usize, seed_value: u64) -> Vec<Point> {
    let mut rng = seed::rng(seed_value, 0);
    let (n, d, m, k) = (dims.space_dim, dims.target_dim, dims.field_dim, dims.xi_len());
    let mut sample = |len: usize, lo: f64, hi: f64| -> Vec<f64> { (0..len).map(|_| rng.gen_range(lo..hi)).collect() };
    let mut out = Vec::with_capacity(count + 3);
    out.push(Point::new(vec![0.5; n], vec![0.0; d], vec![0.0; m], vec![0.0; k]));
    let x = sample(n, 0.0, 1.0);
    let u = sample(d, -2.0, 2.0);
    out.push(Point::new(x, u, vec![0.0; m], sample(k, -3.0, 3.0)));
    let x = sample(n, 0.0, 1.0);
    let u = sample(d, -2.0, 2.0);
    out.push(Point::new(x, u, sample(m, -3.0, 3.0), vec![0.0; k]));
    for _ in 0..count {
        let x = sample(n, 0.0, 1.0);
        let u = sample(d, -2.0, 2.0);
        let b = sample(m, -3.0, 3.0);
        let xi = sample(k, -3.0, 3.0);
        out.push(Point::new(x, u, b, xi));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplePlan {
    pub points: Vec<Point>,
    /// Scales used for the recession-rate check.
    pub t_grid: Vec<f64>,
    /// Scales `(t^{1/p} b, t ξ)` at which the growth bounds are probed.
    pub growth_scales: Vec<f64>,
    /// Perturbation sizes for the empirical modulus of continuity.
    pub deltas: Vec<f64>,
    pub seed: u64,
}

impl SamplePlan {
    pub fn seeded(dims: Dimensions, count: usize, seed_value: u64) -> Self {
        SamplePlan {
            points: probe_cloud(dims, count, seed_value),
            t_grid: vec![1.0, 10.0, 100.0],
            growth_scales: vec![1.0, 1e2, 1e4],
            deltas: vec![1e-3, 1e-2, 1e-1],
            seed: seed_value,
        }
    }

    pub fn default_for(dims: Dimensions) -> Self {
        SamplePlan::seeded(dims, 64, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    Declared,
    Empirical,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthCheck {
    /// Smallest `C` for which both bounds hold on every probe.
    pub c_fit: f64,
    pub holds: bool,
    /// Probes violating the declared growth constant, if one was declared.
    pub declared_violations: Option<usize>,
}

impl GrowthCheck {
    /// Whether both bounds hold on the probes with the given constant.
    pub fn holds_with(&self, c: f64) -> bool {
        self.c_fit <= c * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModulusEntry {
    pub delta: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateCheck {
    pub tau: f64,
    pub c_prime: f64,
    pub l: f64,
    /// Largest `|f(t^{1/p}b,tξ)/t − f̂| t^τ / (|b|^{(1−τ)p} + |ξ|^{1−τ})`.
    pub max_ratio: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub density: String,
    pub p: f64,
    pub h1: GrowthCheck,
    pub h2: Vec<ModulusEntry>,
    pub h3: RateCheck,
    pub plan: SamplePlan,
}

fn checked(v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::NonfiniteValue { value: v })
    }
}

/// Probes `(H1)_p`–`(H3)_p` for `f` with exponent `p`.
pub fn check_hypotheses_p(f: &Integrand, plan: &SamplePlan, p: f64) -> Result<HypothesisReport> {
    if plan.points.is_empty() {
        return Err(Error::SamplingEmpty("no probe points"));
    }
    if plan.t_grid.is_empty() || plan.growth_scales.is_empty() {
        return Err(Error::SamplingEmpty("empty scale grid"));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("exponent must exceed 1, got {p}")));
    }
    for pt in &plan.points {
        pt.check(f.dims())?;
    }
    let h1 = growth_check(f, plan, p)?;
    let h2 = modulus_table(f, plan, p)?;
    let h3 = rate_check(f, plan, p)?;
    Ok(HypothesisReport { density: f.name().to_string(), p, h1, h2, h3, plan: plan.clone() })
}

fn growth_check(f: &Integrand, plan: &SamplePlan, p: f64) -> Result<GrowthCheck> {
    let mut c_fit: f64 = 0.0;
    let mut violations = 0usize;
    for pt in &plan.points {
        for &t in &plan.growth_scales {
            let s = t.powf(1.0 / p);
            let (value, big_b) = with_scaled(&pt.b, s, |b| {
                with_scaled(&pt.xi, t, |xi| (f.eval(&pt.x, &pt.u, b, xi), norm(b).powf(p) + norm(xi)))
            });
            let value = checked(value)?;
            let upper = value / (1.0 + big_b);
            // B/C − C ≤ f  ⇔  C ≥ (√(f² + 4B) − f)/2
            let lower = ((value * value + 4.0 * big_b).sqrt() - value) / 2.0;
            let needed = upper.max(lower);
            c_fit = c_fit.max(needed);
            if let Some(c) = f.growth_constant {
                if needed > c * (1.0 + 1e-12) {
                    violations += 1;
                }
            }
        }
    }
    Ok(GrowthCheck {
        c_fit,
        holds: c_fit <= GROWTH_FAIL_THRESHOLD,
        declared_violations: f.growth_constant.map(|_| violations),
    })
}

fn modulus_table(f: &Integrand, plan: &SamplePlan, p: f64) -> Result<Vec<ModulusEntry>> {
    let mut rng = seed::rng(plan.seed, 1);
    let (n, d) = (f.dims().space_dim, f.dims().target_dim);
    let mut table = Vec::with_capacity(plan.deltas.len());
    for &delta in &plan.deltas {
        let mut omega: f64 = 0.0;
        for pt in &plan.points {
            let dx: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let du: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scale = norm(&dx) + norm(&du);
            if scale == 0.0 {
                continue;
            }
            let x2: Vec<f64> = pt.x.iter().zip(&dx).map(|(a, e)| (a + delta * e / scale).clamp(0.0, 1.0)).collect();
            let u2: Vec<f64> = pt.u.iter().zip(&du).map(|(a, e)| a + delta * e / scale).collect();
            let v1 = checked(f.eval(&pt.x, &pt.u, &pt.b, &pt.xi))?;
            let v2 = checked(f.eval(&x2, &u2, &pt.b, &pt.xi))?;
            let weight = 1.0 + norm(&pt.b).powf(p) + norm(&pt.xi);
            omega = omega.max((v1 - v2).abs() / weight);
        }
        table.push(ModulusEntry { delta, omega });
    }
    Ok(table)
}

const TAU_CANDIDATES: [f64; 4] = [1.0, 0.75, 0.5, 0.25];

fn pow0(r: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        r.powf(e)
    }
}

fn rate_check(f: &Integrand, plan: &SamplePlan, p: f64) -> Result<RateCheck> {
    let rec = recession_p(f, &Schedule::default())?;
    let l = f.recession_params.map(|r| r.l).unwrap_or(1.0);
    // errors[i][j] = |f(t_j^{1/p} b, t_j ξ)/t_j − f̂|, NaN when below the threshold L
    let mut errors = Vec::with_capacity(plan.points.len());
    for pt in &plan.points {
        let nb = norm(&pt.b);
        let nx = norm(&pt.xi);
        if nb == 0.0 && nx == 0.0 {
            continue;
        }
        let limit = rec.eval(&pt.x, &pt.u, &pt.b, &pt.xi);
        let mut row = Vec::with_capacity(plan.t_grid.len());
        for &t in &plan.t_grid {
            if t * nx + t * nb.powf(p) <= l {
                row.push(f64::NAN);
                continue;
            }
            let v = with_scaled(&pt.b, t.powf(1.0 / p), |b| {
                with_scaled(&pt.xi, t, |xi| f.eval(&pt.x, &pt.u, b, xi))
            });
            row.push((checked(v)? / t - limit).abs());
        }
        errors.push((nb, nx, row));
    }
    let ratios = |tau: f64| -> Vec<Vec<f64>> {
        errors
            .iter()
            .map(|(nb, nx, row)| {
                let denom = pow0(*nb, (1.0 - tau) * p) + pow0(*nx, 1.0 - tau);
                row.iter()
                    .zip(&plan.t_grid)
                    .map(|(e, t)| if e.is_nan() { f64::NAN } else { e * t.powf(tau) / denom })
                    .collect()
            })
            .collect()
    };
    let max_of = |rows: &[Vec<f64>]| rows.iter().flatten().filter(|v| !v.is_nan()).fold(0.0f64, |a, b| a.max(*b));

    let (tau, label) = match f.recession_params {
        Some(params) => (params.tau, Label::Declared),
        None => {
            // largest τ along which no probe's ratio grows by more than 2x
            let mut chosen = *TAU_CANDIDATES.last().unwrap();
            for tau in TAU_CANDIDATES {
                let rows = ratios(tau);
                let bounded = rows.iter().all(|row| {
                    let valid: Vec<f64> = row.iter().copied().filter(|v| !v.is_nan()).collect();
                    match valid.split_last() {
                        Some((last, head)) if !head.is_empty() => {
                            let ref_max = head.iter().copied().fold(0.0f64, f64::max);
                            *last <= 2.0 * ref_max + 1e-12
                        }
                        _ => true,
                    }
                });
                if bounded {
                    chosen = tau;
                    break;
                }
            }
            (chosen, Label::Empirical)
        }
    };
    let max_ratio = max_of(&ratios(tau));
    let c_prime = match f.recession_params {
        Some(params) => params.c_prime,
        None => max_ratio,
    };
    Ok(RateCheck { tau, c_prime, l, max_ratio, label })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{catalog, Exponent};

    fn dims(p: f64) -> Dimensions {
        Dimensions::scalar(Exponent::Finite(p))
    }

    #[test]
    fn p_norm_sum_holds_with_unit_constant() {
        let f = catalog("p-norm-sum", dims(2.0)).unwrap();
        let report = check_hypotheses_p(&f, &SamplePlan::default_for(f.dims()), 2.0).unwrap();
        assert!(report.h1.holds);
        assert!(report.h1.holds_with(1.0), "c_fit = {}", report.h1.c_fit);
        assert_eq!(report.h1.declared_violations, Some(0));
        assert!(report.h2.iter().all(|e| e.omega == 0.0));
        assert!(report.h3.max_ratio < 1e-12);
    }

    #[test]
    fn area_like_rate_is_bounded_with_tau_one() {
        let f = catalog("area-like", dims(2.0)).unwrap();
        let report = check_hypotheses_p(&f, &SamplePlan::default_for(f.dims()), 2.0).unwrap();
        assert_eq!(report.h3.tau, 1.0);
        assert_eq!(report.h3.label, Label::Empirical);
        // |√(1+t²ξ²)/t − |ξ|| ≤ 1/t, denominator |b|⁰ + |ξ|⁰ = 2
        assert!(report.h3.max_ratio <= 0.5 + 1e-4, "{}", report.h3.max_ratio);
    }

    #[test]
    fn slow_rate_fits_smaller_tau() {
        let f = catalog("double-well-b", dims(4.0)).unwrap();
        let report = check_hypotheses_p(&f, &SamplePlan::default_for(f.dims()), 4.0).unwrap();
        assert!(report.h1.holds);
        assert!(report.h3.tau <= 0.5 + 1e-12, "tau = {}", report.h3.tau);
    }

    #[test]
    fn superlinear_growth_fails() {
        let f = catalog("double-well-b", dims(2.0)).unwrap();
        let report = check_hypotheses_p(&f, &SamplePlan::default_for(f.dims()), 2.0).unwrap();
        assert!(!report.h1.holds);
    }

    #[test]
    fn x_dependence_shows_in_modulus() {
        let f = Integrand::new("xw", dims(2.0), |x, _, b, xi| (1.0 + x[0]) * (b[0] * b[0] + xi[0].abs()));
        let report = check_hypotheses_p(&f, &SamplePlan::default_for(f.dims()), 2.0).unwrap();
        let omegas: Vec<f64> = report.h2.iter().map(|e| e.omega).collect();
        assert!(omegas[0] > 0.0 && omegas[0] <= 1e-3 + 1e-12);
        assert!(omegas.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn negative_density_is_rejected() {
        let f = Integrand::new("neg", dims(2.0), |_, _, _, _| -1.0);
        let err = check_hypotheses_p(&f, &SamplePlan::default_for(f.dims()), 2.0).unwrap_err();
        assert!(matches!(err, Error::NonfiniteValue { .. }));
    }

    #[test]
    fn empty_plan_is_rejected() {
        let f = catalog("p-norm-sum", dims(2.0)).unwrap();
        let mut plan = SamplePlan::default_for(f.dims());
        plan.points.clear();
        assert!(matches!(check_hypotheses_p(&f, &plan, 2.0), Err(Error::SamplingEmpty(_))));
    }
}
