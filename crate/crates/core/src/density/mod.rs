//! Integrands `f(x, u, b, ξ)` on `Ω × ℝ^d × ℝ^m × ℝ^{d×N}`, their
//! recession functions, hypothesis checks and the Yosida transform.
//!
//! `ξ` is always passed as a row-major `d × N` slice, `ξ[i*N + j] = ∂u_i/∂x_j`,
//! and `|ξ|` is the Frobenius norm.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var, VarDims};

pub mod catalog;
pub mod hypotheses;
pub mod recession;
pub mod yosida;

pub use catalog::{catalog, CATALOG_NAMES};
pub use hypotheses::{check_hypotheses_p, HypothesisReport, SamplePlan};
pub use recession::{recession_infty, recession_p, RecessionDensity, RecessionMode, Schedule};
pub use yosida::{yosida_transform, SearchGrid, YosidaValue};

/// Growth exponent `p ∈ (1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    /// `1/p`, zero for `p = ∞`.
    pub fn reciprocal(self) -> f64 {
        match self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinity => 0.0,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn parse(s: &str) -> Result<Exponent> {
        let t = s.trim().to_ascii_lowercase();
        if t == "inf" || t == "infinity" || t == "∞" {
            return Ok(Exponent::Infinity);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad exponent `{s}`")))?;
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else {
            Ok(Exponent::Finite(p))
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    pub space_dim: usize,
    pub target_dim: usize,
    pub field_dim: usize,
    pub exponent: Exponent,
}

impl Dimensions {
    pub fn new(space_dim: usize, target_dim: usize, field_dim: usize, exponent: Exponent) -> Result<Self> {
        if !(1..=2).contains(&space_dim) {
            return Err(Error::InvalidDimensions(format!("space_dim must be 1 or 2, got {space_dim}")));
        }
        if target_dim == 0 || field_dim == 0 {
            return Err(Error::InvalidDimensions("target_dim and field_dim must be positive".into()));
        }
        if let Exponent::Finite(p) = exponent {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::InvalidDimensions(format!("exponent must exceed 1, got {p}")));
            }
        }
        Ok(Dimensions { space_dim, target_dim, field_dim, exponent })
    }

    /// Scalar problem `N = d = m = 1`.
    pub fn scalar(exponent: Exponent) -> Self {
        Dimensions { space_dim: 1, target_dim: 1, field_dim: 1, exponent }
    }

    pub fn xi_len(&self) -> usize {
        self.target_dim * self.space_dim
    }

    pub fn var_dims(&self) -> VarDims {
        VarDims::density(self.space_dim, self.target_dim, self.field_dim)
    }

    pub fn check_point(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> Result<()> {
        let checks = [
            ("x", self.space_dim, x.len()),
            ("u", self.target_dim, u.len()),
            ("b", self.field_dim, b.len()),
            ("xi", self.xi_len(), xi.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }
}

pub type DensityMap = dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> f64 + Send + Sync;

/// Constants `(c′, L, τ)` of the recession rate hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecessionParams {
    pub c_prime: f64,
    pub l: f64,
    pub tau: f64,
}

/// A nonnegative density `f(x, u, b, ξ)`.
#[derive(Clone)]
pub struct Integrand {
    name: String,
    dims: Dimensions,
    map: Arc<DensityMap>,
    pub growth_constant: Option<f64>,
    pub recession_params: Option<RecessionParams>,
    depends_on_x: bool,
    depends_on_u: bool,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("depends_on_x", &self.depends_on_x)
            .field("depends_on_u", &self.depends_on_u)
            .finish()
    }
}

impl Integrand {
    /// Wraps a map. The density is assumed to depend on both `x` and `u`
    /// until told otherwise with [`Integrand::with_dependence`].
    pub fn new<F>(name: impl Into<String>, dims: Dimensions, map: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Integrand {
            name: name.into(),
            dims,
            map: Arc::new(map),
            growth_constant: None,
            recession_params: None,
            depends_on_x: true,
            depends_on_u: true,
        }
    }

    pub fn with_dependence(mut self, depends_on_x: bool, depends_on_u: bool) -> Self {
        self.depends_on_x = depends_on_x;
        self.depends_on_u = depends_on_u;
        self
    }

    pub fn with_growth_constant(mut self, c: f64) -> Self {
        self.growth_constant = Some(c);
        self
    }

    pub fn with_recession_params(mut self, params: RecessionParams) -> Self {
        self.recession_params = Some(params);
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Density from an expression in `x`, `u`, `b`, `xi` and `p`; see
    /// [`crate::expr`] for the grammar.
    pub fn from_expression(source: &str, dims: Dimensions) -> Result<Self> {
        let expr = Expr::parse(source, dims.var_dims())?;
        let p = dims.exponent.as_f64();
        let (dx, du) = (expr.uses(Var::X), expr.uses(Var::U));
        let name = source.to_string();
        Ok(Integrand::new(name, dims, move |x, u, b, xi| {
            expr.eval(&Env { x, u, b, xi, p })
        })
        .with_dependence(dx, du))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn depends_on_x(&self) -> bool {
        self.depends_on_x
    }

    pub fn depends_on_u(&self) -> bool {
        self.depends_on_u
    }

    /// Raw evaluation without argument or value checks.
    #[inline]
    pub fn eval(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> f64 {
        (self.map)(x, u, b, xi)
    }

    /// Checked evaluation: argument shapes must match and the value must be
    /// finite and nonnegative.
    pub fn evaluate(&self, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> Result<f64> {
        self.dims.check_point(x, u, b, xi)?;
        let value = self.eval(x, u, b, xi);
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(Error::NonfiniteValue { value })
        }
    }

    pub fn evaluate_at(&self, point: &Point) -> Result<f64> {
        self.evaluate(&point.x, &point.u, &point.b, &point.xi)
    }
}

/// `f(x, u, b, ξ)` with shape and value checks.
pub fn evaluate_density(f: &Integrand, x: &[f64], u: &[f64], b: &[f64], xi: &[f64]) -> Result<f64> {
    f.evaluate(x, u, b, xi)
}

/// A point `(x, u, b, ξ)` of the density's domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub xi: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, u: Vec<f64>, b: Vec<f64>, xi: Vec<f64>) -> Self {
        Point { x, u, b, xi }
    }

    /// `x` at the centre of the unit cube, `u = 0`.
    pub fn at(dims: Dimensions, b: Vec<f64>, xi: Vec<f64>) -> Self {
        Point {
            x: vec![0.5; dims.space_dim],
            u: vec![0.0; dims.target_dim],
            b,
            xi,
        }
    }

    pub fn check(&self, dims: Dimensions) -> Result<()> {
        dims.check_point(&self.x, &self.u, &self.b, &self.xi)
    }
}

/// Runs `f` on a stack copy of `v` scaled by `s` when it is small enough.
#[inline]
pub(crate) fn with_scaled<R>(v: &[f64], s: f64, f: impl FnOnce(&[f64]) -> R) -> R {
    let mut buf = [0.0f64; 16];
    if v.len() <= buf.len() {
        let out = &mut buf[..v.len()];
        for (o, a) in out.iter_mut().zip(v) {
            *o = a * s;
        }
        f(out)
    } else {
        let out: Vec<f64> = v.iter().map(|a| a * s).collect();
        f(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    fn p_norm_sum() -> Integrand {
        Integrand::new("p-norm-sum", Dimensions::scalar(Exponent::Finite(2.0)), |_, _, b, xi| {
            norm(b).powi(2) + norm(xi)
        })
    }

    #[test]
    fn evaluates_user_maps() {
        let f = p_norm_sum();
        assert_eq!(evaluate_density(&f, &[0.5], &[0.0], &[1.0], &[2.0]).unwrap(), 3.0);
        assert_eq!(evaluate_density(&f, &[0.5], &[0.0], &[0.0], &[0.0]).unwrap(), 0.0);
        let g = Integrand::from_expression("sqrt(norm(b)^4 + norm(xi)^2)", f.dims()).unwrap();
        assert_eq!(g.evaluate(&[0.5], &[0.0], &[1.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn evaluation_errors() {
        let f = p_norm_sum();
        assert!(matches!(
            f.evaluate(&[0.5], &[0.0], &[1.0, 2.0], &[2.0]),
            Err(Error::DimensionMismatch { what: "b", .. })
        ));
        let neg = Integrand::new("neg", f.dims(), |_, _, _, _| -1.0);
        assert!(matches!(neg.evaluate(&[0.5], &[0.0], &[0.0], &[0.0]), Err(Error::NonfiniteValue { .. })));
        let nan = Integrand::new("nan", f.dims(), |_, _, _, _| f64::NAN);
        assert!(matches!(nan.evaluate(&[0.5], &[0.0], &[0.0], &[0.0]), Err(Error::NonfiniteValue { .. })));
    }

    #[test]
    fn dimension_validation() {
        assert!(Dimensions::new(3, 1, 1, Exponent::Finite(2.0)).is_err());
        assert!(Dimensions::new(1, 0, 1, Exponent::Finite(2.0)).is_err());
        assert!(Dimensions::new(1, 1, 1, Exponent::Finite(1.0)).is_err());
        assert!(Dimensions::new(2, 2, 3, Exponent::Infinity).is_ok());
        assert_eq!(Exponent::parse("inf").unwrap(), Exponent::Infinity);
        assert_eq!(Exponent::parse("2.5").unwrap(), Exponent::Finite(2.5));
    }

    #[test]
    fn expression_dependence_flags() {
        let dims = Dimensions::scalar(Exponent::Finite(2.0));
        let f = Integrand::from_expression("(1 + abs(u)) * abs(xi) + b^p", dims).unwrap();
        assert!(f.depends_on_u() && !f.depends_on_x());
        assert_eq!(f.evaluate(&[0.1], &[1.0], &[2.0], &[3.0]).unwrap(), 10.0);
    }
}
