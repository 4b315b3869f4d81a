//! Frozen-coefficient heat kernel `H^{ξ,τ}` and its closed-form derivatives.

use std::f64::consts::PI;

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};

/// Exponent arguments below this underflow to exactly zero.
pub const UNDERFLOW: f64 = -745.0;

/// Kernel value and first two space derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatDerivs {
    pub h: f64,
    pub hx: f64,
    pub hxx: f64,
}

/// `(4πk·dt)^{-1/2} exp(-dx²/(4k·dt))`; no argument checks.
#[inline]
pub fn heat(dx: f64, dt: f64, k: f64) -> f64 {
    let a = -dx * dx / (4.0 * k * dt);
    if a < UNDERFLOW {
        0.0
    } else {
        a.exp() / (4.0 * PI * k * dt).sqrt()
    }
}

/// Value and `x`-derivative.
#[inline]
pub fn heat_dx(dx: f64, dt: f64, k: f64) -> (f64, f64) {
    let h = heat(dx, dt, k);
    (h, -dx / (2.0 * k * dt) * h)
}

#[inline]
pub fn heat_derivs(dx: f64, dt: f64, k: f64) -> HeatDerivs {
    let h = heat(dx, dt, k);
    let c = 1.0 / (2.0 * k * dt);
    HeatDerivs {
        h,
        hx: -dx * c * h,
        hxx: (dx * dx * c * c - c) * h,
    }
}

/// `H^{ξ,τ}(x - ξ, t - τ)` with the coefficient frozen at the source point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenKernel {
    pub xi: f64,
    pub tau: f64,
    pub k_frozen: f64,
}

impl FrozenKernel {
    pub fn new(xi: f64, tau: f64, k_frozen: f64) -> Result<Self> {
        if !(k_frozen > 0.0 && k_frozen.is_finite()) {
            return Err(Error::InvalidArgument(format!("frozen coefficient {k_frozen} must be positive")));
        }
        Ok(Self { xi, tau, k_frozen })
    }

    pub fn from_field(field: &CoefficientField, xi: f64, tau: f64) -> Self {
        Self {
            xi,
            tau,
            k_frozen: field.evaluate(xi, tau),
        }
    }

    fn gap(&self, t: f64) -> Result<f64> {
        let dt = t - self.tau;
        if dt > 0.0 {
            Ok(dt)
        } else {
            Err(Error::NonPositiveTimeSeparation { dt })
        }
    }

    pub fn h_eval(&self, x: f64, t: f64) -> Result<f64> {
        Ok(heat(x - self.xi, self.gap(t)?, self.k_frozen))
    }

    pub fn h_dx(&self, x: f64, t: f64) -> Result<f64> {
        Ok(heat_derivs(x - self.xi, self.gap(t)?, self.k_frozen).hx)
    }

    pub fn h_dxx(&self, x: f64, t: f64) -> Result<f64> {
        Ok(heat_derivs(x - self.xi, self.gap(t)?, self.k_frozen).hxx)
    }

    /// Time derivative from its own closed form, `H·(dx²/(4k dt²) - 1/(2dt))`.
    pub fn h_dt(&self, x: f64, t: f64) -> Result<f64> {
        let dt = self.gap(t)?;
        let dx = x - self.xi;
        let h = heat(dx, dt, self.k_frozen);
        Ok(h * (dx * dx / (4.0 * self.k_frozen * dt * dt) - 0.5 / dt))
    }

    /// `|H_x(x2) - H_x(x1)| / |x2 - x1|^α` at time `t`.
    pub fn holder_quotient_hx(&self, x1: f64, x2: f64, t: f64, alpha: f64) -> Result<f64> {
        if x1 == x2 {
            return Err(Error::InvalidArgument("holder quotient needs distinct points".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
        }
        let d = (self.h_dx(x2, t)? - self.h_dx(x1, t)?).abs();
        Ok(d / (x2 - x1).abs().powf(alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gaussian_space_integral, QuadratureConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn peak_value_is_one() {
        let k = FrozenKernel::new(0.4, 0.1, 1.0).unwrap();
        let v = k.h_eval(0.4, 0.1 + 1.0 / (4.0 * PI)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_gap() {
        let k = FrozenKernel::new(0.0, 0.5, 1.0).unwrap();
        assert!(matches!(k.h_eval(0.0, 0.5), Err(Error::NonPositiveTimeSeparation { .. })));
        assert!(k.h_dx(0.0, 0.2).is_err());
        assert!(FrozenKernel::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn unit_mass() {
        let cfg = QuadratureConfig::default();
        for dt in [1e-4f64, 1e-2, 1.0, 10.0] {
            let k = FrozenKernel::new(0.2, 0.0, 1.7).unwrap();
            let w = (2.0 * 1.7 * dt).sqrt();
            let m = gaussian_space_integral(|x| k.h_eval(x, dt).unwrap(), 0.2, w, &cfg).unwrap();
            assert!((m.value - 1.0).abs() < 1e-8, "dt={dt}: {}", m.value);
        }
    }

    #[test]
    fn symmetric_and_heat_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let kf = rng.random_range(0.3..3.0);
            let xi = rng.random_range(-2.0..2.0);
            let k = FrozenKernel::new(xi, 0.0, kf).unwrap();
            let t: f64 = rng.random_range(1e-3..2.0);
            let x = xi + rng.random_range(-3.0..3.0) * t.sqrt();
            let a = k.h_eval(x, t).unwrap();
            let b = k.h_eval(2.0 * xi - x, t).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            let r = k.h_dt(x, t).unwrap() - kf * k.h_dxx(x, t).unwrap();
            let scale = k.h_eval(xi, t).unwrap() / t;
            assert!(r.abs() <= 1e-12 * scale, "residual {r} vs scale {scale}");
        }
    }

    #[test]
    fn dx_matches_central_difference() {
        let k = FrozenKernel::new(0.0, 0.0, 0.8).unwrap();
        assert_eq!(k.h_dx(0.0, 0.3).unwrap(), 0.0);
        for &(x, t) in &[(0.3, 0.2), (-0.7, 0.5), (1.1, 1.3)] {
            let h = 1e-5;
            let fd = (k.h_eval(x + h, t).unwrap() - k.h_eval(x - h, t).unwrap()) / (2.0 * h);
            let an = k.h_dx(x, t).unwrap();
            assert!(((fd - an) / an).abs() < 1e-6);
        }
    }

    #[test]
    fn underflow_is_exact_zero() {
        assert_eq!(heat(100.0, 1e-3, 1.0), 0.0);
        assert_eq!(heat_derivs(100.0, 1e-3, 1.0).hxx, 0.0);
    }

    #[test]
    fn holder_quotient() {
        let k = FrozenKernel::new(0.5, 0.0, 1.0).unwrap();
        let q = k.holder_quotient_hx(0.2, 0.8, 0.1, 0.3).unwrap();
        let direct = (k.h_dx(0.8, 0.1).unwrap() - k.h_dx(0.2, 0.1).unwrap()).abs() / 0.6f64.powf(0.3);
        assert!((q - direct).abs() < 1e-14);
        let small = k.holder_quotient_hx(0.2, 0.9, 0.1, 1e-12).unwrap();
        let plain = (k.h_dx(0.9, 0.1).unwrap() - k.h_dx(0.2, 0.1).unwrap()).abs();
        assert!((small - plain).abs() < 1e-9 * plain);
        assert!(k.holder_quotient_hx(0.2, 0.2, 0.1, 0.5).is_err());
    }

    #[test]
    fn dx_is_odd_about_source() {
        // so a pair symmetric about ξ has quotient 2|H_x(x2)| / |x2 - x1|^α, not 0
        let k = FrozenKernel::new(0.5, 0.0, 1.0).unwrap();
        let a = k.h_dx(0.2, 0.1).unwrap();
        let b = k.h_dx(0.8, 0.1).unwrap();
        assert!((a + b).abs() < 1e-14);
        let q = k.holder_quotient_hx(0.2, 0.8, 0.1, 0.5).unwrap();
        assert!((q - 2.0 * b.abs() / 0.6f64.sqrt()).abs() < 1e-12 * q);
    }

    #[test]
    fn delta_recovery() {
        let cfg = QuadratureConfig::default();
        let phi = |x: f64| (-(x * x)).exp() * (1.0 + 0.3 * x);
        let x = 0.25;
        let mut prev = f64::INFINITY;
        for s in [1e-1f64, 1e-2, 1e-3] {
            let w = (2.0 * s).sqrt();
            let v = gaussian_space_integral(|xi| heat(x - xi, s, 1.0) * phi(xi), x, w, &cfg).unwrap();
            let err = (v.value - phi(x)).abs();
            assert!(err < prev && err < 3.0 * s, "s={s}: {err}");
            prev = err;
        }
    }
}
