//! Diffusion coefficient fields `k(x, t)` and the Ericksen–Leslie coefficient
//! functions `g`, `h`, `c²`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_space, Feature, QuadratureConfig};

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Box `[-halfwidth, halfwidth] × [0, horizon]` used for sampling-based estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDomain {
    pub halfwidth: f64,
    pub horizon: f64,
}

/// Leslie viscosities `α₁..α₆` and Frank constants `K₁`, `K₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeslieParameters {
    pub alpha: [f64; 6],
    pub k1: f64,
    pub k3: f64,
}

impl LeslieParameters {
    /// Checks Parodi's relation `α₆ − α₅ = α₂ + α₃`, without which the two
    /// closed forms of `h` differ.
    pub fn new(alpha: [f64; 6], k1: f64, k3: f64) -> Result<Self> {
        let p = Self { alpha, k1, k3 };
        let scale = alpha.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        let defect = (alpha[5] - alpha[4]) - (alpha[1] + alpha[2]);
        if defect.abs() > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "Leslie parameters violate Parodi's relation by {defect:e}"
            )));
        }
        Ok(p)
    }

    /// Parameters with `α₅` fixed by Parodi's relation.
    pub fn parodi(a1: f64, a2: f64, a3: f64, a4: f64, a6: f64, k1: f64, k3: f64) -> Self {
        Self {
            alpha: [a1, a2, a3, a4, a6 - a2 - a3, a6],
            k1,
            k3,
        }
    }

    pub fn gamma1(&self) -> f64 {
        self.alpha[2] - self.alpha[1]
    }

    pub fn gamma2(&self) -> f64 {
        self.alpha[5] - self.alpha[4]
    }

    /// Bound on `|g''|`, used to pad sampled extrema.
    fn g_second_derivative_bound(&self) -> f64 {
        let [a1, a2, a3, _, a5, a6] = self.alpha;
        2.0 * a1.abs() + (a5 - a2 - a3 - a6).abs()
    }
}

pub fn eval_g(p: &LeslieParameters, theta: f64) -> f64 {
    let [a1, a2, a3, a4, a5, a6] = p.alpha;
    let (s, c) = theta.sin_cos();
    let (s2, c2) = (s * s, c * c);
    a1 * s2 * c2 + 0.5 * (a5 - a2) * s2 + 0.5 * (a3 + a6) * c2 + 0.5 * a4
}

fn eval_g_prime(p: &LeslieParameters, theta: f64) -> f64 {
    let [a1, a2, a3, _, a5, a6] = p.alpha;
    0.5 * a1 * (4.0 * theta).sin() + 0.5 * (a5 - a2 - a3 - a6) * (2.0 * theta).sin()
}

/// `h(θ) = (γ₁ + γ₂ cos 2θ)/2`.
pub fn eval_h(p: &LeslieParameters, theta: f64) -> f64 {
    0.5 * (p.gamma1() + p.gamma2() * (2.0 * theta).cos())
}

/// `h(θ) = α₃cos²θ − α₂sin²θ`.
pub fn eval_h_direct(p: &LeslieParameters, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    p.alpha[2] * c * c - p.alpha[1] * s * s
}

/// `c²(θ) = K₁cos²θ + K₃sin²θ`.
pub fn eval_c2(p: &LeslieParameters, theta: f64) -> Result<f64> {
    if !(p.k1 > 0.0 && p.k3 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Frank constants must be positive (K1 = {}, K3 = {})",
            p.k1, p.k3
        )));
    }
    let (s, c) = theta.sin_cos();
    Ok(p.k1 * c * c + p.k3 * s * s)
}

/// Prescribed director angle fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaField {
    Constant { theta: f64 },
    /// `amp·sin(freq·x + phase)`
    SinX { amp: f64, freq: f64, phase: f64 },
    /// `base + amp·exp(−((x − center)/width)²)·cos(omega·t)`
    LocalizedBump {
        base: f64,
        amp: f64,
        center: f64,
        width: f64,
        omega: f64,
    },
}

impl ThetaField {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match *self {
            ThetaField::Constant { theta } => theta,
            ThetaField::SinX { amp, freq, phase } => amp * (freq * x + phase).sin(),
            ThetaField::LocalizedBump {
                base,
                amp,
                center,
                width,
                omega,
            } => base + amp * (-((x - center) / width).powi(2)).exp() * (omega * t).cos(),
        }
    }

    fn range(&self) -> (f64, f64) {
        match *self {
            ThetaField::Constant { theta } => (theta, theta),
            ThetaField::SinX { amp, freq, .. } if freq != 0.0 => (-amp.abs(), amp.abs()),
            ThetaField::SinX { amp, phase, .. } => {
                let v = amp * phase.sin();
                (v, v)
            }
            ThetaField::LocalizedBump { base, amp, .. } => (base - amp.abs(), base + amp.abs()),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ThetaField::Constant { theta } => theta.is_finite(),
            ThetaField::SinX { amp, freq, phase } => amp.is_finite() && freq.is_finite() && phase.is_finite(),
            ThetaField::LocalizedBump {
                base,
                amp,
                center,
                width,
                omega,
            } => [base, amp, center, omega].iter().all(|v| v.is_finite()) && width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad director field {self:?}")))
        }
    }
}

#[derive(Clone)]
enum FieldKind {
    Constant(f64),
    /// `k_left + (k_right − k_left)·S((x − center)/width + 1/2)` with the quintic
    /// smootherstep `S`.
    Smoothstep {
        center: f64,
        width: f64,
        k_left: f64,
        k_right: f64,
    },
    Leslie {
        params: LeslieParameters,
        theta: ThetaField,
    },
    /// `base + amp·min(|x − center|, radius)^β`
    Cusp {
        base: f64,
        amp: f64,
        center: f64,
        radius: f64,
        beta: f64,
    },
    Custom {
        k: ScalarFn,
        k_dx: Option<ScalarFn>,
        breaks: Vec<f64>,
    },
}

/// An evaluable diffusion coefficient with positive bounds and Hölder data.
#[derive(Clone)]
pub struct CoefficientField {
    kind: FieldKind,
    k_lower: f64,
    k_upper: f64,
    beta: f64,
    holder_constant: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            FieldKind::Constant(_) => "constant",
            FieldKind::Smoothstep { .. } => "smoothstep",
            FieldKind::Leslie { .. } => "leslie",
            FieldKind::Cusp { .. } => "cusp",
            FieldKind::Custom { .. } => "custom",
        };
        f.debug_struct("CoefficientField")
            .field("kind", &name)
            .field("k_lower", &self.k_lower)
            .field("k_upper", &self.k_upper)
            .field("beta", &self.beta)
            .field("holder_constant", &self.holder_constant)
            .finish()
    }
}

#[inline]
fn smootherstep(s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let v = s * s * s * (s * (6.0 * s - 15.0) + 10.0);
    let d = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    (v, d)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {v} must be positive and finite")))
    }
}

impl CoefficientField {
    pub fn constant(k: f64) -> Result<Self> {
        positive("k", k)?;
        Ok(Self {
            kind: FieldKind::Constant(k),
            k_lower: k,
            k_upper: k,
            beta: 1.0,
            holder_constant: 0.0,
        })
    }

    /// Smooth monotone transition from `k_left` to `k_right` over `[center − width/2, center + width/2]`.
    pub fn smoothstep(center: f64, width: f64, k_left: f64, k_right: f64) -> Result<Self> {
        positive("width", width)?;
        positive("k_left", k_left)?;
        positive("k_right", k_right)?;
        Ok(Self {
            kind: FieldKind::Smoothstep {
                center,
                width,
                k_left,
                k_right,
            },
            k_lower: k_left.min(k_right),
            k_upper: k_left.max(k_right),
            beta: 1.0,
            holder_constant: (k_right - k_left).abs() * 1.875 / width,
        })
    }

    /// Coefficient with a `|x − center|^β` cusp; `β ∈ (1/2, 1]` keeps `k_x` square integrable.
    pub fn cusp(base: f64, amp: f64, center: f64, radius: f64, beta: f64) -> Result<Self> {
        positive("base", base)?;
        positive("radius", radius)?;
        if !(beta > 0.5 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("cusp exponent {beta} outside (1/2, 1]")));
        }
        let top = base + amp * radius.powf(beta);
        positive("cusp minimum", base.min(top))?;
        Ok(Self {
            kind: FieldKind::Cusp {
                base,
                amp,
                center,
                radius,
                beta,
            },
            k_lower: base.min(top),
            k_upper: base.max(top),
            beta,
            holder_constant: amp.abs(),
        })
    }

    /// `k = g∘θ`. Bounds come from dense sampling of `g` over the range of `θ`,
    /// padded by a curvature bound; the Hölder constant is estimated from samples.
    pub fn from_theta(params: &LeslieParameters, theta: ThetaField, domain: SampleDomain) -> Result<Self> {
        theta.validate()?;
        let pad = |dth: f64| params.g_second_derivative_bound() * dth * dth / 8.0;
        let n = 4096;
        let dth = std::f64::consts::PI / n as f64;
        let global_min = (0..=n).map(|i| eval_g(params, i as f64 * dth)).fold(f64::INFINITY, f64::min) - pad(dth);
        if !(global_min > 0.0) {
            return Err(Error::Inadmissible(format!(
                "min over theta of g is {global_min:.6}, diffusion degenerates"
            )));
        }
        let (lo, hi) = theta.range();
        let (k_lower, k_upper) = if hi > lo {
            let m = 4096;
            let d = (hi - lo) / m as f64;
            let vals: Vec<f64> = (0..=m).map(|i| eval_g(params, lo + i as f64 * d)).collect();
            let mn = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let mx = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ((mn - pad(d)).max(global_min), mx + pad(d))
        } else {
            let v = eval_g(params, lo);
            (v, v)
        };
        let mut field = Self {
            kind: FieldKind::Leslie {
                params: *params,
                theta,
            },
            k_lower,
            k_upper,
            beta: 1.0,
            holder_constant: 0.0,
        };
        if hi > lo {
            field.holder_constant = field.estimate_holder_constant(domain, 10_000, 0x5eed);
        }
        Ok(field)
    }

    /// Closure-backed field. Bounds and the Hölder constant are estimated by
    /// sampling `domain`; `k_dx` defaults to central differences.
    pub fn custom(
        k: ScalarFn,
        k_dx: Option<ScalarFn>,
        beta: f64,
        breaks: Vec<f64>,
        domain: SampleDomain,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!("Hölder exponent {beta} outside (0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0ef);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..10_000 {
            let x = rng.random_range(-domain.halfwidth..=domain.halfwidth);
            let t = rng.random_range(0.0..=domain.horizon);
            let v = k(x, t);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::Inadmissible(format!("sampled k ranges over [{lo}, {hi}]")));
        }
        let mut field = Self {
            kind: FieldKind::Custom { k, k_dx, breaks },
            k_lower: lo,
            k_upper: hi,
            beta,
            holder_constant: 0.0,
        };
        field.holder_constant = field.estimate_holder_constant(domain, 10_000, 0x5eed);
        Ok(field)
    }

    #[inline]
    pub fn evaluate(&self, x: f64, t: f64) -> f64 {
        match &self.kind {
            FieldKind::Constant(k) => *k,
            FieldKind::Smoothstep {
                center,
                width,
                k_left,
                k_right,
            } => k_left + (k_right - k_left) * smootherstep((x - center) / width + 0.5).0,
            FieldKind::Leslie { params, theta } => eval_g(params, theta.eval(x, t)),
            FieldKind::Cusp {
                base,
                amp,
                center,
                radius,
                beta,
            } => base + amp * (x - center).abs().min(*radius).powf(*beta),
            FieldKind::Custom { k, .. } => k(x, t),
        }
    }

    pub fn evaluate_dx(&self, x: f64, t: f64) -> f64 {
        match &self.kind {
            FieldKind::Constant(_) => 0.0,
            FieldKind::Smoothstep {
                center,
                width,
                k_left,
                k_right,
            } => (k_right - k_left) * smootherstep((x - center) / width + 0.5).1 / width,
            FieldKind::Leslie { params, theta } => {
                let h = 1e-6;
                let dth = (theta.eval(x + h, t) - theta.eval(x - h, t)) / (2.0 * h);
                eval_g_prime(params, theta.eval(x, t)) * dth
            }
            FieldKind::Cusp {
                amp,
                center,
                radius,
                beta,
                ..
            } => {
                let d = x - center;
                if d == 0.0 || d.abs() >= *radius {
                    0.0
                } else {
                    amp * beta * d.abs().powf(beta - 1.0) * d.signum()
                }
            }
            FieldKind::Custom { k, k_dx, .. } => match k_dx {
                Some(d) => d(x, t),
                None => {
                    let h = 1e-6;
                    (k(x + h, t) - k(x - h, t)) / (2.0 * h)
                }
            },
        }
    }

    pub fn k_lower(&self) -> f64 {
        self.k_lower
    }

    pub fn k_upper(&self) -> f64 {
        self.k_upper
    }

    pub fn holder_exponent(&self) -> f64 {
        self.beta
    }

    pub fn holder_constant(&self) -> f64 {
        self.holder_constant
    }

    /// True when `k` does not depend on `(x, t)`.
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            FieldKind::Constant(_) => true,
            FieldKind::Leslie { theta, .. } => matches!(theta, ThetaField::Constant { .. }),
            _ => self.k_lower == self.k_upper,
        }
    }

    /// Points where `k` is not smooth in `x`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            FieldKind::Cusp { center, radius, .. } => vec![center - radius, *center, center + radius],
            FieldKind::Custom { breaks, .. } => breaks.clone(),
            _ => Vec::new(),
        }
    }

    /// Intervals where `k` varies on a short scale.
    pub fn features(&self) -> Vec<Feature> {
        match &self.kind {
            FieldKind::Smoothstep { center, width, .. } => vec![Feature {
                lo: center - 0.5 * width,
                hi: center + 0.5 * width,
                scale: 0.25 * width,
            }],
            FieldKind::Cusp { center, radius, .. } => vec![Feature {
                lo: center - radius,
                hi: center + radius,
                scale: 0.25 * radius,
            }],
            FieldKind::Leslie {
                theta: ThetaField::LocalizedBump { center, width, .. },
                ..
            } => vec![Feature {
                lo: center - 3.0 * width,
                hi: center + 3.0 * width,
                scale: 0.25 * width,
            }],
            FieldKind::Leslie {
                theta: ThetaField::SinX { freq, .. },
                ..
            } if *freq != 0.0 => vec![Feature {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                scale: 0.25 / freq.abs(),
            }],
            _ => Vec::new(),
        }
    }

    /// Largest Hölder quotient over random same-time pairs (exponent β) and
    /// same-point pairs (exponent β/2). Separations are log-uniform.
    pub fn estimate_holder_constant(&self, domain: SampleDomain, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = domain.halfwidth;
        let mut best: f64 = 0.0;
        for i in 0..pairs {
            let x = rng.random_range(-l..=l);
            let t = rng.random_range(0.0..=domain.horizon);
            if i % 2 == 0 {
                let d = 10f64.powf(rng.random_range(-4.0..(2.0 * l).log10()));
                let x2 = (x + d).min(l);
                if x2 > x {
                    let q = (self.evaluate(x2, t) - self.evaluate(x, t)).abs() / (x2 - x).powf(self.beta);
                    best = best.max(q);
                }
            } else if domain.horizon > 0.0 {
                let d = 10f64.powf(rng.random_range(-4.0..domain.horizon.log10().max(-3.9)));
                let t2 = (t + d).min(domain.horizon);
                if t2 > t {
                    let q = (self.evaluate(x, t2) - self.evaluate(x, t)).abs() / (t2 - t).powf(0.5 * self.beta);
                    best = best.max(q);
                }
            }
        }
        best
    }

    /// `‖k_x(·, t)‖_{L²(−L, L)}` by quadrature.
    pub fn kx_l2_norm(&self, halfwidth: f64, t: f64) -> f64 {
        let cfg = QuadratureConfig::default();
        let mut breaks = self.breakpoints();
        breaks.retain(|b| b.abs() < halfwidth);
        let v = integrate_space::<1>(-halfwidth, halfwidth, 0.05, &self.features(), &breaks, &cfg, |x| {
            let d = self.evaluate_dx(x, t);
            [d * d]
        })[0];
        v.sqrt()
    }

    /// Admissibility gate: positive finite bounds and `k_x ∈ L^∞_t L²_x` on the
    /// truncated domain. Returns the largest sampled `‖k_x(·, t)‖_{L²}`.
    pub fn check_admissible(&self, domain: SampleDomain) -> Result<f64> {
        if !(self.k_lower > 0.0 && self.k_upper.is_finite() && self.k_upper >= self.k_lower) {
            return Err(Error::Inadmissible(format!(
                "bounds [{}, {}] are not positive and ordered",
                self.k_lower, self.k_upper
            )));
        }
        let mut worst: f64 = 0.0;
        for i in 0..=8 {
            let t = domain.horizon * i as f64 / 8.0;
            let n = self.kx_l2_norm(domain.halfwidth, t);
            if !n.is_finite() {
                return Err(Error::Inadmissible(format!("k_x is not square integrable at t = {t}")));
            }
            worst = worst.max(n);
        }
        Ok(worst)
    }
}

/// `field_from_theta` with the default sampling box `[-5, 5] × [0, 1]`.
pub fn field_from_theta(params: &LeslieParameters, theta: ThetaField) -> Result<CoefficientField> {
    CoefficientField::from_theta(
        params,
        theta,
        SampleDomain {
            halfwidth: 5.0,
            horizon: 1.0,
        },
    )
}
