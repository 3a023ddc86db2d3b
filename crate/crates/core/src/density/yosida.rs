//! Yosida transform `f_λ(x,u,b,ξ) = sup_{(x',u')} f(x',u',b,ξ) − λC(|x−x'| + |u−u'|)(1 + |b| + |ξ|)`
//! with the supremum taken over a caller-supplied finite grid.

use super::{Integrand, Point};
use crate::error::{Error, Result};
use crate::linalg::norm;

/// Tensor grid over a box in `Ω × ℝ^d`. Each axis has `steps + 1` equally
/// spaced nodes including both ends (a degenerate axis with `lo == hi` has
/// one node).
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub x_steps: usize,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    pub u_steps: usize,
}

impl SearchGrid {
    fn axes(lo: &[f64], hi: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidArgument("grid bounds have different lengths".into()));
        }
        lo.iter()
            .zip(hi)
            .map(|(&a, &b)| {
                if !(a <= b) {
                    return Err(Error::SamplingEmpty("grid axis with lo > hi"));
                }
                if a == b {
                    return Ok(vec![a]);
                }
                if steps == 0 {
                    return Err(Error::SamplingEmpty("grid axis with zero steps"));
                }
                Ok((0..=steps).map(|i| a + (b - a) * i as f64 / steps as f64).collect())
            })
            .collect()
    }

    /// All grid nodes as `(x', u')` pairs.
    pub fn nodes(&self) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let xs = cartesian(&Self::axes(&self.x_lo, &self.x_hi, self.x_steps)?);
        let us = cartesian(&Self::axes(&self.u_lo, &self.u_hi, self.u_steps)?);
        if xs.is_empty() || us.is_empty() {
            return Err(Error::SamplingEmpty("search grid has no nodes"));
        }
        let mut out = Vec::with_capacity(xs.len() * us.len());
        for x in &xs {
            for u in &us {
                out.push((x.clone(), u.clone()));
            }
        }
        Ok(out)
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct YosidaValue {
    pub value: f64,
    pub argmax_x: Vec<f64>,
    pub argmax_u: Vec<f64>,
}

/// The query's own `(x, u)` is always part of the candidate set, so the
/// result is never below `f` at the query.
pub fn yosida_transform(f: &Integrand, lambda: f64, c: f64, grid: &SearchGrid, query: &Point) -> Result<YosidaValue> {
    if !(lambda > 0.0 && c > 0.0) {
        return Err(Error::InvalidArgument("lambda and C must be positive".into()));
    }
    query.check(f.dims())?;
    let weight = 1.0 + norm(&query.b) + norm(&query.xi);
    let mut best = YosidaValue {
        value: f.evaluate(&query.x, &query.u, &query.b, &query.xi)?,
        argmax_x: query.x.clone(),
        argmax_u: query.u.clone(),
    };
    for (x2, u2) in grid.nodes()? {
        if x2.len() != query.x.len() || u2.len() != query.u.len() {
            return Err(Error::DimensionMismatch { what: "search grid", expected: query.x.len(), got: x2.len() });
        }
        let dist = norm(&diff(&query.x, &x2)) + norm(&diff(&query.u, &u2));
        let v = f.evaluate(&x2, &u2, &query.b, &query.xi)? - lambda * c * dist * weight;
        if v > best.value {
            best = YosidaValue { value: v, argmax_x: x2, argmax_u: u2 };
        }
    }
    Ok(best)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{catalog, Dimensions, Exponent};

    fn dims() -> Dimensions {
        Dimensions::scalar(Exponent::Finite(2.0))
    }

    fn grid(steps: usize) -> SearchGrid {
        SearchGrid {
            x_lo: vec![0.0],
            x_hi: vec![1.0],
            x_steps: steps,
            u_lo: vec![-1.0],
            u_hi: vec![1.0],
            u_steps: 4,
        }
    }

    #[test]
    fn translation_invariant_density_is_unchanged() {
        let f = catalog("area-like", dims()).unwrap();
        let q = Point::new(vec![0.3], vec![0.2], vec![1.0], vec![2.0]);
        for lambda in [0.1, 1.0, 10.0] {
            let y = yosida_transform(&f, lambda, 1.0, &grid(10), &q).unwrap();
            assert_eq!(y.value, f.evaluate_at(&q).unwrap());
        }
    }

    #[test]
    fn monotone_in_lambda() {
        let f = Integrand::new("xu", dims(), |x, u, b, xi| (x[0] + u[0].abs()) * (b[0].abs() + xi[0].abs()));
        let q = Point::new(vec![0.2], vec![0.0], vec![1.0], vec![1.0]);
        let mut last = f64::INFINITY;
        for lambda in [0.01, 0.1, 0.5, 1.0, 5.0] {
            let v = yosida_transform(&f, lambda, 1.0, &grid(20), &q).unwrap().value;
            assert!(v <= last + 1e-15);
            assert!(v >= f.evaluate_at(&q).unwrap());
            last = v;
        }
    }

    #[test]
    fn x_weighted_density_against_dense_oracle() {
        // f(x,b,ξ) = x(|b| + |ξ|) on (0,1)
        let f = Integrand::new("xw", dims(), |x, _, b, xi| x[0] * (b[0].abs() + xi[0].abs()));
        let (b, xi) = (0.5, 1.5);
        let weight = 1.0 + b + xi;
        for (lambda, c) in [(0.2, 1.0), (0.6, 1.0), (2.0, 1.0), (50.0, 1.0)] {
            let g = SearchGrid { x_lo: vec![0.0], x_hi: vec![1.0], x_steps: 200, u_lo: vec![0.0], u_hi: vec![0.0], u_steps: 0 };
            let q = Point::new(vec![0.25], vec![0.0], vec![b], vec![xi]);
            let v = yosida_transform(&f, lambda, c, &g, &q).unwrap().value;
            // brute force on a much finer grid
            let oracle = (0..=20000)
                .map(|i| {
                    let x2 = i as f64 / 20000.0;
                    x2 * (b + xi) - lambda * c * (0.25f64 - x2).abs() * weight
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((v - oracle).abs() < 1e-2 * (b + xi), "lambda = {lambda}");
            let gap = v - f.evaluate_at(&q).unwrap();
            assert!(gap >= 0.0);
            if lambda * c * weight >= b + xi {
                assert!(gap <= 1e-12);
            }
        }
    }

    #[test]
    fn lipschitz_estimate_holds_on_samples() {
        let f = Integrand::new("xs", dims(), |x, u, b, xi| (1.0 + (3.0 * x[0]).sin().abs() + u[0] * u[0]) * (b[0] * b[0] + xi[0].abs()));
        let lambda = 2.0;
        let (b, xi) = (0.7, -1.2);
        let pts: Vec<f64> = (0..6).map(|i| 0.1 + 0.15 * i as f64).collect();
        let val = |x: f64| {
            let q = Point::new(vec![x], vec![0.1], vec![b], vec![xi]);
            yosida_transform(&f, lambda, 1.0, &grid(40), &q).unwrap().value
        };
        for &a in &pts {
            for &c in &pts {
                let lhs = (val(a) - val(c)).abs();
                let rhs = lambda * (a - c).abs() * (1.0 + b + xi.abs());
                // grid sup is exact up to the discretisation of the candidate set
                assert!(lhs <= rhs + 0.05, "{a} {c}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn empty_grid_is_rejected() {
        let f = catalog("area-like", dims()).unwrap();
        let q = Point::new(vec![0.3], vec![0.2], vec![1.0], vec![2.0]);
        let mut g = grid(10);
        g.x_steps = 0;
        assert!(matches!(yosida_transform(&f, 1.0, 1.0, &g, &q), Err(Error::SamplingEmpty(_))));
    }
}
