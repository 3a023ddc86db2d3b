//! Convex-quasiconvex envelopes by discrete cell minimisation.
//!
//! `CQf(x, u, b, ξ)` is approximated by the infimum over piecewise-multilinear
//! `φ` vanishing on the boundary of the unit cube and zero-mean
//! piecewise-constant `η` of the cell average of `f(x, u, b + η, ξ + ∇φ)`.

use serde::Serialize;

use crate::cell::{
    prolong, random_starts, run_starts, AmplitudeBall, CellObjective, CellSpec, EtaStart, Lateral, Lattice,
    SolverSettings, StartReport, UArgument,
};
use crate::density::{recession_p, Integrand, Point, RecessionDensity, Schedule};
use crate::error::{Error, Result};
use crate::linalg::norm;

/// Oscillation amplitude cap relative to `1 + |b|`.
pub const AMPLITUDE_CAP: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct EnvelopeProblem {
    pub density: Integrand,
    pub point: Point,
    pub grid_n: usize,
    /// Number of equispaced η values random starts are drawn from.
    pub oscillation_levels: usize,
    pub multistart: usize,
    pub seed: u64,
    pub tol: f64,
}

impl EnvelopeProblem {
    pub fn new(density: &Integrand, point: Point) -> Self {
        EnvelopeProblem {
            density: density.clone(),
            point,
            grid_n: 16,
            oscillation_levels: 2,
            multistart: 8,
            seed: 0,
            tol: 1e-6,
        }
    }

    pub fn with_settings(mut self, settings: &SolverSettings) -> Self {
        self.grid_n = settings.grid_n;
        self.multistart = settings.multistart;
        self.seed = settings.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(Error::InvalidArgument(format!("grid_n must be at least 2, got {}", self.grid_n)));
        }
        if self.multistart < 1 {
            return Err(Error::InvalidArgument("multistart must be at least 1".into()));
        }
        if self.oscillation_levels < 2 {
            return Err(Error::InvalidArgument("oscillation_levels must be at least 2".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        self.point.check(self.density.dims())
    }

    fn objective(&self) -> Result<CellObjective> {
        let dims = self.density.dims();
        let n = dims.space_dim;
        let zero = vec![0.0; dims.target_dim];
        let mut rotation = vec![0.0; n * n];
        for i in 0..n {
            rotation[i * n + i] = 1.0;
        }
        let spec = CellSpec {
            lattice: Lattice::new(n, self.grid_n, Lateral::Pinned)?,
            x: self.point.x.clone(),
            u_arg: UArgument::Fixed(self.point.u.clone()),
            b0: self.point.b.clone(),
            xi0: self.point.xi.clone(),
            rotation,
            face_values: [zero.clone(), zero],
            ball: Some(AmplitudeBall {
                center: vec![0.0; dims.field_dim],
                radius: AMPLITUDE_CAP * (1.0 + norm(&self.point.b)),
            }),
        };
        CellObjective::new(&self.density, spec)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeSolution {
    pub value: f64,
    pub f_value: f64,
    /// `f(point) − value`.
    pub gap_to_f: f64,
    pub grid_n: usize,
    /// Nodal values of `φ`, row-major over the `(n+1)^N` lattice.
    pub phi: Vec<f64>,
    /// Cell values of `η` (without `b`).
    pub eta: Vec<f64>,
    pub starts: Vec<StartReport>,
    pub best_start: usize,
    pub converged: bool,
    /// The oscillation amplitude cap is active at the minimiser.
    pub cap_active: bool,
    #[serde(skip)]
    vars: Vec<f64>,
}

/// Approximates `CQf` at `prob.point`.
pub fn cq_envelope(prob: &EnvelopeProblem) -> Result<EnvelopeSolution> {
    solve(prob, None)
}

/// As [`cq_envelope`], with the minimiser of a solve on half the grid added
/// as a warm start.
pub fn cq_envelope_refined(prob: &EnvelopeProblem, coarse: &EnvelopeSolution) -> Result<EnvelopeSolution> {
    solve(prob, Some(coarse))
}

fn solve(prob: &EnvelopeProblem, coarse: Option<&EnvelopeSolution>) -> Result<EnvelopeSolution> {
    prob.validate()?;
    let f_value = prob.density.evaluate_at(&prob.point)?;
    let obj = prob.objective()?;
    let zero = vec![0.0; crate::optim::LocalObjective::n_vars(&obj)];
    let mut starts = vec![zero.clone()];
    if let Some(c) = coarse {
        if 2 * c.grid_n == prob.grid_n {
            let mut cp = prob.clone();
            cp.grid_n = c.grid_n;
            let coarse_obj = cp.objective()?;
            starts.push(prolong(&coarse_obj, &c.vars, &obj));
        }
    }
    let radius = 2.0 * norm(&prob.point.b).max(norm(&prob.point.xi)).max(1.0);
    let eta = EtaStart::Levels { radius, levels: prob.oscillation_levels };
    starts.extend(random_starts(&obj, &zero, prob.multistart, prob.seed, radius, eta));
    let run = run_starts(&obj, &starts, &Default::default())?;
    let field = obj.field(&run.vars, &vec![0.0; prob.point.b.len()]);
    Ok(EnvelopeSolution {
        value: run.value,
        f_value,
        gap_to_f: f_value - run.value,
        grid_n: prob.grid_n,
        phi: field.nodes,
        eta: field.eta,
        starts: run.starts,
        best_start: run.best_start,
        converged: run.converged,
        cap_active: obj.ball_active(&run.vars),
        vars: run.vars,
    })
}

/// Whether `f` is convex-quasiconvex at `point` up to `tol`, with the defect
/// `f(point) − CQf(point)`.
pub fn is_cq_at(
    f: &Integrand,
    point: &Point,
    grid_n: usize,
    multistart: usize,
    seed: u64,
    tol: f64,
) -> Result<(bool, f64)> {
    let prob = EnvelopeProblem { grid_n, multistart, seed, tol, ..EnvelopeProblem::new(f, point.clone()) };
    let sol = cq_envelope(&prob)?;
    Ok((sol.gap_to_f <= tol, sol.gap_to_f))
}

/// The envelope as an integrand; every evaluation runs a cell solve. Failed
/// solves evaluate to NaN.
pub fn envelope_integrand(f: &Integrand, settings: &SolverSettings, tol: f64) -> Integrand {
    let f = f.clone();
    let settings = *settings;
    let name = format!("cq({})", f.name());
    let dims = f.dims();
    let (dx, du) = (f.depends_on_x(), f.depends_on_u());
    Integrand::new(name, dims, move |x, u, b, xi| {
        let point = Point::new(x.to_vec(), u.to_vec(), b.to_vec(), xi.to_vec());
        let prob = EnvelopeProblem { tol, ..EnvelopeProblem::new(&f, point) }.with_settings(&settings);
        cq_envelope(&prob).map(|s| s.value).unwrap_or(f64::NAN)
    })
    .with_dependence(dx, du)
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderExchange {
    pub point: Point,
    /// Recession of the envelope.
    pub recession_of_envelope: f64,
    /// Envelope of the recession.
    pub envelope_of_recession: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct CqRecession {
    /// `(CQf)^∞_p` as a recession density.
    pub recession: RecessionDensity,
    pub queries: Vec<OrderExchange>,
    /// Largest discrepancy between the two orders over the queries.
    pub certificate: f64,
}

/// `(p,1)`-recession of the envelope, computed in both orders at `queries`.
pub fn cq_recession_p(
    f: &Integrand,
    schedule: &Schedule,
    settings: &SolverSettings,
    tol: f64,
    queries: &[Point],
) -> Result<CqRecession> {
    let cq = envelope_integrand(f, settings, tol);
    let recession = recession_p(&cq, schedule)?;
    let rec_f = recession_p(f, schedule)?;
    let mut rows = Vec::with_capacity(queries.len());
    for q in queries {
        let a = recession.evaluate(&q.x, &q.u, &q.b, &q.xi)?;
        let prob = EnvelopeProblem { tol, ..EnvelopeProblem::new(rec_f.integrand(), q.clone()) }.with_settings(settings);
        let b = cq_envelope(&prob)?.value;
        rows.push(OrderExchange {
            point: q.clone(),
            recession_of_envelope: a,
            envelope_of_recession: b,
            discrepancy: (a - b).abs(),
        });
    }
    let certificate = rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
    Ok(CqRecession { recession, queries: rows, certificate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{catalog, Dimensions, Exponent};

    fn scalar(name: &str, p: f64) -> Integrand {
        catalog(name, Dimensions::scalar(Exponent::Finite(p))).unwrap()
    }

    fn at(b: f64, xi: f64) -> Point {
        Point::new(vec![0.5], vec![0.0], vec![b], vec![xi])
    }

    fn problem(f: &Integrand, point: Point, grid_n: usize) -> EnvelopeProblem {
        EnvelopeProblem { grid_n, ..EnvelopeProblem::new(f, point) }
    }

    /// Lower convex hull of `g` on a grid, evaluated at `t`.
    fn convex_hull_at(g: impl Fn(f64) -> f64, lo: f64, hi: f64, count: usize, t: f64) -> f64 {
        let pts: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let s = lo + (hi - lo) * i as f64 / (count - 1) as f64;
                (s, g(s))
            })
            .collect();
        let mut best = f64::INFINITY;
        for a in &pts {
            for b in &pts {
                if a.0 <= t && t <= b.0 {
                    let v = if b.0 == a.0 { a.1 } else { a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0) };
                    best = best.min(v);
                }
            }
        }
        best
    }

    #[test]
    fn convex_density_is_its_own_envelope() {
        let f = Integrand::from_expression("b^2 + xi^2", Dimensions::scalar(Exponent::Finite(2.0))).unwrap();
        let sol = cq_envelope(&problem(&f, at(1.0, 1.0), 8)).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-8, "{}", sol.value);
        assert!(sol.gap_to_f.abs() < 1e-8);
    }

    #[test]
    fn double_well_in_b_is_flattened() {
        let f = scalar("double-well-b", 2.0);
        let sol = cq_envelope(&problem(&f, at(0.0, 0.0), 16)).unwrap();
        assert!(sol.value >= 0.0 && sol.value < 0.02, "{}", sol.value);
        assert!(!sol.cap_active);
    }

    #[test]
    fn double_well_in_xi_matches_hull() {
        let f = scalar("double-well-xi", 2.0);
        let oracle = convex_hull_at(|s| (s * s - 1.0).powi(2), -2.0, 2.0, 2001, 0.0);
        assert!(oracle.abs() < 1e-12);
        let sol = cq_envelope(&problem(&f, at(0.0, 0.0), 16)).unwrap();
        assert!((sol.value - oracle).abs() < 0.05, "{}", sol.value);
        let oracle_half = convex_hull_at(|s| (s * s - 1.0).powi(2), -2.0, 2.0, 2001, 1.5);
        let sol = cq_envelope(&problem(&f, at(0.0, 1.5), 16)).unwrap();
        assert!((sol.value - oracle_half).abs() < 1e-6, "{} {}", sol.value, oracle_half);
    }

    #[test]
    fn non_cq_point_is_detected() {
        let f = Integrand::from_expression("(xi^2 - 1)^2", Dimensions::scalar(Exponent::Finite(2.0))).unwrap();
        let (flag, defect) = is_cq_at(&f, &at(0.0, 0.0), 16, 8, 1, 1e-6).unwrap();
        assert!(!flag);
        assert!((defect - 1.0).abs() < 0.05, "{defect}");
        let g = scalar("sqrt-joint", 2.0);
        let (flag, defect) = is_cq_at(&g, &at(1.0, 1.0), 16, 8, 1, 1e-6).unwrap();
        assert!(flag, "{defect}");
    }

    #[test]
    fn refinement_with_warm_start_does_not_increase() {
        let f = scalar("double-well-xi", 2.0);
        let coarse = cq_envelope(&problem(&f, at(0.3, 0.2), 8)).unwrap();
        let fine = cq_envelope_refined(&problem(&f, at(0.3, 0.2), 16), &coarse).unwrap();
        assert!(fine.value <= coarse.value + 1e-6, "{} {}", fine.value, coarse.value);
    }

    #[test]
    fn envelope_is_separately_convex_in_b() {
        let f = scalar("double-well-b", 2.0);
        let v = |b: f64| cq_envelope(&problem(&f, at(b, 0.5), 8)).unwrap().value;
        let (b0, b1) = (-0.4, 1.3);
        assert!(v(0.5 * (b0 + b1)) <= 0.5 * (v(b0) + v(b1)) + 1e-4);
    }

    #[test]
    fn two_dimensional_envelope_of_convex_density() {
        let dims = Dimensions::new(2, 1, 1, Exponent::Finite(2.0)).unwrap();
        let f = catalog("p-norm-sum", dims).unwrap();
        let point = Point::new(vec![0.5, 0.5], vec![0.0], vec![0.7], vec![1.0, -0.5]);
        let sol = cq_envelope(&EnvelopeProblem { multistart: 2, ..problem(&f, point, 4) }).unwrap();
        assert!(sol.gap_to_f.abs() < 1e-6, "{}", sol.gap_to_f);
    }

    #[test]
    fn rejects_invalid_problems() {
        let f = scalar("p-norm-sum", 2.0);
        assert!(cq_envelope(&problem(&f, at(0.0, 0.0), 1)).is_err());
        let mut p = problem(&f, at(0.0, 0.0), 4);
        p.oscillation_levels = 1;
        assert!(cq_envelope(&p).is_err());
        let bad = Point::new(vec![0.5], vec![0.0], vec![0.0, 1.0], vec![0.0]);
        assert!(matches!(cq_envelope(&problem(&f, bad, 4)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn order_exchange_for_homogeneous_convex_density() {
        let f = scalar("p-norm-sum", 2.0);
        let settings = SolverSettings { grid_n: 4, multistart: 2, ..Default::default() };
        let queries = vec![at(1.0, 2.0), at(0.0, 0.0)];
        let r = cq_recession_p(&f, &Schedule::default(), &settings, 1e-6, &queries).unwrap();
        assert!((r.queries[0].recession_of_envelope - 3.0).abs() < 1e-6);
        assert_eq!(r.queries[1].recession_of_envelope, 0.0);
        assert_eq!(r.queries[1].envelope_of_recession, 0.0);
        assert!(r.certificate < 2e-6, "{}", r.certificate);
    }
}
