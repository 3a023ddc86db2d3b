//! Recession functions `f^∞_p` (scaling `(t^{1/p} b, t ξ)`) and `f^∞`
//! (scaling `ξ` only), approximated by the maximum of `f(·)/t` over the tail
//! of a geometric schedule.

use std::sync::Arc;

use super::{with_scaled, Dimensions, Exponent, Integrand, Point};
use crate::error::{Error, Result};
use super::hypotheses::probe_cloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RecessionMode {
    /// `(p,1)`-homogeneous: `g(t^{1/p} b, t ξ) = t g(b, ξ)`.
    POne,
    /// `(∞,1)`-homogeneous: `g(b, t ξ) = t g(b, ξ)`.
    InftyOne,
}

/// Geometric `t`-grid and the limsup surrogate parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub points: Vec<f64>,
    /// Number of trailing points the maximum is taken over.
    pub tail: usize,
    /// Relative tolerance on the last-two-sample gap.
    pub tol: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { points: vec![1e2, 1e3, 1e4, 1e5, 1e6], tail: 3, tol: 1e-6 }
    }
}

impl Schedule {
    pub fn geometric(start: f64, ratio: f64, count: usize) -> Self {
        let points = (0..count).map(|i| start * ratio.powi(i as i32)).collect();
        Schedule { points, ..Schedule::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.points.len() < 2 || self.tail == 0 {
            return Err(Error::InvalidArgument("schedule needs at least two points and a tail".into()));
        }
        if self.points.windows(2).any(|w| !(w[1] > w[0])) || self.points[0] <= 0.0 {
            return Err(Error::InvalidArgument("schedule must be positive and increasing".into()));
        }
        Ok(())
    }

    fn tail_points(&self) -> &[f64] {
        let k = self.tail.min(self.points.len());
        &self.points[self.points.len() - k..]
    }
}

/// A recession density together with its certificates.
#[derive(Debug, Clone)]
pub struct RecessionDensity {
    density: Integrand,
    source: Integrand,
    mode: RecessionMode,
    schedule: Schedule,
    /// Largest relative homogeneity defect over the probe cloud.
    pub homogeneity_certificate: f64,
    /// Largest relative last-two-sample gap over the probe cloud.
    pub max_gap: f64,
    /// `false` when `max_gap` exceeds the schedule tolerance (NOT_CONVERGED).
    pub converged: bool,
    /// Largest relative spread of `g(x, u, ·, ξ)` over probed `b` values; only
    /// computed in mode `InftyOne`.
    pub b_spread: Option<f64>,
}

struct Surrogate {
    source: Integrand,
    mode: RecessionMode,
    inv_p: f64,
    tail: Vec<f64>,
}

impl Surrogate {
    #[inline]
    fn ratio(&self, t: f64, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> f64 {
        with_scaled(xi, t, |sxi| match self.mode {
            RecessionMode::POne => {
                with_scaled(b, t.powf(self.inv_p), |sb| self.source.eval(x, u, sb, sxi) / t)
            }
            RecessionMode::InftyOne => self.source.eval(x, u, b, sxi) / t,
        })
    }

    fn is_zero_argument(&self, b: &[f64], xi: &[f64]) -> bool {
        let xi_zero = xi.iter().all(|v| *v == 0.0);
        match self.mode {
            RecessionMode::POne => xi_zero && b.iter().all(|v| *v == 0.0),
            RecessionMode::InftyOne => xi_zero,
        }
    }

    #[inline]
    fn value(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> f64 {
        if self.is_zero_argument(b, xi) {
            return 0.0;
        }
        self.tail
            .iter()
            .map(|&t| self.ratio(t, x, u, b, xi))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn value_and_gap(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> (f64, f64) {
        if self.is_zero_argument(b, xi) {
            return (0.0, 0.0);
        }
        let k = self.tail.len();
        let ratios: Vec<f64> = self.tail.iter().map(|&t| self.ratio(t, x, u, b, xi)).collect();
        let value = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (last, prev) = (ratios[k - 1], ratios[k.saturating_sub(2)]);
        let scale = last.abs().max(prev.abs());
        let gap = if scale < 1e-14 { 0.0 } else { (last - prev).abs() / scale };
        (value, gap)
    }
}

impl RecessionDensity {
    pub fn mode(&self) -> RecessionMode {
        self.mode
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn dims(&self) -> Dimensions {
        self.density.dims()
    }

    /// The recession function as an ordinary integrand.
    pub fn integrand(&self) -> &Integrand {
        &self.density
    }

    /// The density the recession was taken of.
    pub fn source(&self) -> &Integrand {
        &self.source
    }

    pub fn depends_on_u(&self) -> bool {
        self.density.depends_on_u()
    }

    pub fn depends_on_x(&self) -> bool {
        self.density.depends_on_x()
    }

    #[inline]
    pub fn eval(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> f64 {
        self.density.eval(x, u, b, xi)
    }

    pub fn evaluate(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> Result<f64> {
        self.density.evaluate(x, u, b, xi)
    }

    /// Value at the last schedule point only. The difference to
    /// [`RecessionDensity::eval`] estimates the error of the surrogate.
    pub fn eval_last(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> f64 {
        let s = self.surrogate();
        if s.is_zero_argument(b, xi) {
            return 0.0;
        }
        s.ratio(*self.schedule.points.last().unwrap(), x, u, b, xi)
    }

    /// Value and relative last-two-sample gap at one query.
    pub fn evaluate_with_gap(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> Result<(f64, f64)> {
        self.dims().check_point(x, u, b, xi)?;
        let (v, gap) = self.surrogate().value_and_gap(x, u, b, xi);
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::NonfiniteValue { value: v });
        }
        Ok((v, gap))
    }

    /// Same as [`RecessionDensity::evaluate_with_gap`] but reports
    /// `NotConverged`-style failure as an error when the gap is above the
    /// schedule tolerance. The value is still carried in the error message.
    pub fn evaluate_converged(&self, point: &Point) -> Result<f64> {
        let (v, gap) = self.evaluate_with_gap(&point.x, &point.u, &point.b, &point.xi)?;
        if gap > self.schedule.tol {
            return Err(Error::InvalidArgument(format!(
                "NOT_CONVERGED: value {v} with relative gap {gap:e} above {:e}",
                self.schedule.tol
            )));
        }
        Ok(v)
    }

    fn surrogate(&self) -> Surrogate {
        Surrogate {
            source: self.source.clone(),
            mode: self.mode,
            inv_p: self.source.dims().exponent.reciprocal(),
            tail: self.schedule.tail_points().to_vec(),
        }
    }

    /// Relative homogeneity defect at one point and scale:
    /// `|g(s b, t ξ) − t g(b, ξ)| / (t (1 + g(b, ξ)))`.
    pub fn homogeneity_defect(&self, point: &Point, t: f64) -> f64 {
        let (x, u, b, xi) = (&point.x[..], &point.u[..], &point.b[..], &point.xi[..]);
        let g = self.eval(x, u, b, xi);
        let scaled = with_scaled(xi, t, |sxi| match self.mode {
            RecessionMode::POne => {
                let s = t.powf(self.source.dims().exponent.reciprocal());
                with_scaled(b, s, |sb| self.eval(x, u, sb, sxi))
            }
            RecessionMode::InftyOne => self.eval(x, u, b, sxi),
        });
        (scaled - t * g).abs() / (t * (1.0 + g))
    }
}

/// `(p,1)`-recession function of `f`.
pub fn recession_p(f: &Integrand, schedule: &Schedule) -> Result<RecessionDensity> {
    if let Exponent::Infinity = f.dims().exponent {
        return Err(Error::InvalidArgument("recession_p needs a finite exponent".into()));
    }
    build(f, schedule, RecessionMode::POne)
}

/// Standard recession function in `ξ`.
pub fn recession_infty(f: &Integrand, schedule: &Schedule) -> Result<RecessionDensity> {
    build(f, schedule, RecessionMode::InftyOne)
}

/// Scales at which homogeneity is certified.
pub const CERTIFICATE_SCALES: [f64; 3] = [2.0, 10.0, 100.0];

fn build(f: &Integrand, schedule: &Schedule, mode: RecessionMode) -> Result<RecessionDensity> {
    schedule.validate()?;
    let surrogate = Arc::new(Surrogate {
        source: f.clone(),
        mode,
        inv_p: f.dims().exponent.reciprocal(),
        tail: schedule.tail_points().to_vec(),
    });
    let tag = match mode {
        RecessionMode::POne => "rec_p",
        RecessionMode::InftyOne => "rec_inf",
    };
    let s = surrogate.clone();
    let density = Integrand::new(format!("{tag}({})", f.name()), f.dims(), move |x, u, b, xi| {
        s.value(x, u, b, xi)
    })
    .with_dependence(f.depends_on_x(), f.depends_on_u());

    let mut rec = RecessionDensity {
        density,
        source: f.clone(),
        mode,
        schedule: schedule.clone(),
        homogeneity_certificate: 0.0,
        max_gap: 0.0,
        converged: true,
        b_spread: None,
    };

    let cloud = probe_cloud(f.dims(), 24, 0x5eed);
    for point in &cloud {
        let (v, gap) = surrogate.value_and_gap(&point.x, &point.u, &point.b, &point.xi);
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::NonfiniteValue { value: v });
        }
        rec.max_gap = rec.max_gap.max(gap);
        for t in CERTIFICATE_SCALES {
            rec.homogeneity_certificate = rec.homogeneity_certificate.max(rec.homogeneity_defect(point, t));
        }
    }
    rec.converged = rec.max_gap <= schedule.tol;

    if mode == RecessionMode::InftyOne {
        let mut spread: f64 = 0.0;
        for point in cloud.iter().take(8) {
            let values: Vec<f64> = cloud
                .iter()
                .take(8)
                .map(|other| surrogate.value(&point.x, &point.u, &other.b, &point.xi))
                .collect();
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            spread = spread.max((hi - lo) / (1.0 + hi.abs()));
        }
        rec.b_spread = Some(spread);
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::catalog;

    fn dims() -> Dimensions {
        Dimensions::scalar(Exponent::Finite(2.0))
    }

    fn q(f: &RecessionDensity, b: f64, xi: f64) -> f64 {
        f.evaluate(&[0.5], &[0.0], &[b], &[xi]).unwrap()
    }

    #[test]
    fn homogeneous_input_is_a_fixed_point() {
        let f = catalog("p-norm-sum", dims()).unwrap();
        let r = recession_p(&f, &Schedule::default()).unwrap();
        assert!((q(&r, 1.0, 2.0) - 3.0).abs() < 1e-12);
        assert!(r.converged);
        assert!(r.homogeneity_certificate < 1e-12);
    }

    #[test]
    fn area_like_limits() {
        let f = catalog("area-like", dims()).unwrap();
        let r = recession_p(&f, &Schedule::default()).unwrap();
        // √(1+t²ξ²)/t − |ξ| ≤ 1/(2 t² |ξ|) at t = 1e4
        assert!((q(&r, 1.0, 2.0) - 3.0).abs() < 1e-8);
        let ri = recession_infty(&f, &Schedule::default()).unwrap();
        assert!((q(&ri, 0.0, 2.0) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn sqrt_joint_limits() {
        let f = catalog("sqrt-joint", dims()).unwrap();
        let r = recession_p(&f, &Schedule::default()).unwrap();
        assert!((q(&r, 1.0, 1.0) - 2f64.sqrt()).abs() < 1e-9);
        let ri = recession_infty(&f, &Schedule::default()).unwrap();
        // √(1 + t²)/t → 1
        assert!((q(&ri, 1.0, 1.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn infty_recession_is_b_independent_for_arctan() {
        let f = Integrand::new("atan", dims(), |_, _, b, xi| {
            (1.0 + xi[0] * xi[0]).sqrt() + b[0].abs().atan()
        });
        let r = recession_infty(&f, &Schedule::default()).unwrap();
        for b in [0.0, 1.0, -7.0] {
            assert!((q(&r, b, 2.0) - 2.0).abs() < 1e-3, "b = {b}");
        }
        assert!(r.b_spread.unwrap() < 1e-3);
    }

    #[test]
    fn zero_law() {
        let f = catalog("area-like", dims()).unwrap();
        let r = recession_p(&f, &Schedule::default()).unwrap();
        assert_eq!(q(&r, 0.0, 0.0), 0.0);
        let ri = recession_infty(&f, &Schedule::default()).unwrap();
        assert_eq!(q(&ri, 3.0, 0.0), 0.0);
        let tv = Integrand::new("tv", dims(), |_, _, _, xi| xi[0].abs());
        assert_eq!(q(&recession_infty(&tv, &Schedule::default()).unwrap(), 0.0, 0.0), 0.0);
    }

    #[test]
    fn slow_convergence_is_flagged() {
        // (√t b² − 1)²/t + |ξ| converges like t^{-1/2} under p = 4 scaling
        let dims4 = Dimensions::scalar(Exponent::Finite(4.0));
        let f = catalog("double-well-b", dims4).unwrap();
        let r = recession_p(&f, &Schedule::default()).unwrap();
        assert!(!r.converged);
        let (v, gap) = r.evaluate_with_gap(&[0.5], &[0.0], &[1.0], &[0.0]).unwrap();
        assert!(gap > 1e-6 && (v - 1.0).abs() < 3e-3);
    }

    #[test]
    fn rejects_bad_schedules() {
        let f = catalog("p-norm-sum", dims()).unwrap();
        let bad = Schedule { points: vec![10.0, 5.0], tail: 1, tol: 1e-6 };
        assert!(recession_p(&f, &bad).is_err());
        let inf = catalog("p-norm-sum", Dimensions::scalar(Exponent::Infinity)).unwrap();
        assert!(recession_p(&inf, &Schedule::default()).is_err());
    }
}
