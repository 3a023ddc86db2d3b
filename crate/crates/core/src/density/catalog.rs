//! Named densities addressable from run configurations.
//!
//! The `|b|^p` terms use the density's exponent; for `p = ∞` they fall back
//! to `|b|²`. `double-well-b` grows like `|b|⁴` and is meant to be used with
//! `p = 4`.

use super::{Dimensions, Exponent, Integrand};
use crate::error::{Error, Result};
use crate::linalg::norm;

pub const CATALOG_NAMES: [&str; 6] = [
    "p-norm-sum",
    "sqrt-joint",
    "area-like",
    "double-well-xi",
    "double-well-b",
    "u-weighted-tv",
];

/// Power used for the `|b|^p` terms of catalog densities.
pub fn b_power(exponent: Exponent) -> f64 {
    match exponent {
        Exponent::Finite(p) => p,
        Exponent::Infinity => 2.0,
    }
}

#[inline]
fn pow(r: f64, q: f64) -> f64 {
    if q == 2.0 {
        r * r
    } else {
        r.powf(q)
    }
}

/// `clamp(u₁(1 − u₁), 0, 1)`.
#[inline]
pub fn u_weight(u: &[f64]) -> f64 {
    (u[0] * (1.0 - u[0])).clamp(0.0, 1.0)
}

pub fn catalog(name: &str, dims: Dimensions) -> Result<Integrand> {
    let q = b_power(dims.exponent);
    let f = match name {
        "p-norm-sum" => Integrand::new(name, dims, move |_, _, b, xi| pow(norm(b), q) + norm(xi))
            .with_growth_constant(1.0),
        "sqrt-joint" => Integrand::new(name, dims, move |_, _, b, xi| {
            let nb = pow(norm(b), q);
            let nx = norm(xi);
            (nb * nb + nx * nx).sqrt()
        }),
        "area-like" => Integrand::new(name, dims, move |_, _, b, xi| {
            let nx = norm(xi);
            (1.0 + nx * nx).sqrt() + pow(norm(b), q)
        }),
        "double-well-xi" => Integrand::new(name, dims, move |_, _, b, xi| {
            let nx = norm(xi);
            let w = nx * nx - 1.0;
            w * w + pow(norm(b), q)
        }),
        "double-well-b" => Integrand::new(name, dims, |_, _, b, xi| {
            let nb = norm(b);
            let w = nb * nb - 1.0;
            w * w + norm(xi)
        }),
        "u-weighted-tv" => {
            if dims.target_dim < 1 {
                return Err(Error::InvalidDimensions("u-weighted-tv needs d >= 1".into()));
            }
            return Ok(Integrand::new(name, dims, move |_, u, b, xi| {
                (1.0 + u_weight(u)) * norm(xi) + pow(norm(b), q)
            })
            .with_dependence(false, true));
        }
        _ => return Err(Error::UnknownDensity(name.to_string())),
    };
    Ok(f.with_dependence(false, false))
}
