//! Forcing terms, initial data and the cumulative forcing `G = ∫_{-L}^x f²`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::ScalarFn;
use crate::quadrature::{integrate_space, integrate_time, Feature, QuadratureConfig};

/// Cubic Lagrange table on a uniform grid, zero outside its range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    pub x0: f64,
    pub dx: f64,
    pub values: Arc<Vec<f64>>,
    /// Length scale on which the tabulated function varies.
    pub scale: f64,
}

impl TabulatedProfile {
    pub fn x_end(&self) -> f64 {
        self.x0 + (self.values.len() - 1) as f64 * self.dx
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = (x - self.x0) / self.dx;
        if !(pos >= 0.0 && pos <= (n - 1) as f64) {
            return 0.0;
        }
        let i0 = (pos.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let t = pos - i0 as f64;
        let (t1, t2, t3) = (t - 1.0, t - 2.0, t - 3.0);
        let v = &self.values;
        -t1 * t2 * t3 / 6.0 * v[i0] + t * t2 * t3 * 0.5 * v[i0 + 1] - t * t1 * t3 * 0.5 * v[i0 + 2]
            + t * t1 * t2 / 6.0 * v[i0 + 3]
    }
}

/// Spatial profile `p(x)` of a separable forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `amp·exp(−((x − center)/width)²)`
    Gaussian { amp: f64, center: f64, width: f64 },
    /// `amp·r((x − left)/ramp)·r((right − x)/ramp)` with `r(s) = clamp(s, 0, 1)^exponent`:
    /// a plateau with `C^{0,exponent}` corners at `left` and `right`.
    RoughPulse {
        amp: f64,
        left: f64,
        right: f64,
        ramp: f64,
        exponent: f64,
    },
    #[serde(skip)]
    Table(TabulatedProfile),
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Gaussian { amp, center, width } => amp * (-((x - center) / width).powi(2)).exp(),
            Profile::RoughPulse {
                amp,
                left,
                right,
                ramp,
                exponent,
            } => {
                let r = |s: f64| s.clamp(0.0, 1.0).powf(*exponent);
                amp * r((x - left) / ramp) * r((right - x) / ramp)
            }
            Profile::Table(t) => t.eval(x),
        }
    }

    /// Interval outside which the profile is zero or negligible.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Profile::Gaussian { center, width, .. } => (center - 10.0 * width, center + 10.0 * width),
            Profile::RoughPulse { left, right, .. } => (*left, *right),
            Profile::Table(t) => (t.x0, t.x_end()),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::RoughPulse {
                left, right, ramp, ..
            } => vec![*left, left + ramp, right - ramp, *right],
            _ => Vec::new(),
        }
    }

    pub fn feature(&self) -> Feature {
        let (lo, hi) = self.support();
        let scale = match self {
            Profile::Gaussian { width, .. } => 0.5 * width,
            Profile::RoughPulse { ramp, .. } => 0.5 * ramp,
            Profile::Table(t) => t.scale,
        };
        Feature { lo, hi, scale }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Profile::Gaussian { width, .. } if !(*width > 0.0) => Err(format!("gaussian width {width} must be positive")),
            Profile::RoughPulse {
                left,
                right,
                ramp,
                exponent,
                ..
            } => {
                if !(*ramp > 0.0 && right - left >= 2.0 * ramp) {
                    Err("rough pulse needs ramp > 0 and right - left >= 2 ramp".into())
                } else if !(*exponent > 0.0 && *exponent <= 1.0) {
                    Err(format!("corner exponent {exponent} outside (0, 1]"))
                } else {
                    Ok(())
                }
            }
            Profile::Table(t) if t.values.len() < 4 || !(t.dx > 0.0) => Err("tabulated profile needs 4 nodes".into()),
            _ => Ok(()),
        }
    }
}

/// Time envelope `mean + amp·cos(omega·t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub mean: f64,
    #[serde(default)]
    pub amp: f64,
    #[serde(default)]
    pub omega: f64,
}

impl Envelope {
    pub fn constant(v: f64) -> Self {
        Self {
            mean: v,
            amp: 0.0,
            omega: 0.0,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.mean + self.amp * (self.omega * t).cos()
    }
}

/// Closure-backed forcing.
#[derive(Clone)]
pub struct CustomForcing {
    pub f: ScalarFn,
    pub breaks: Vec<f64>,
    pub features: Vec<Feature>,
    /// Interval outside which `f` vanishes, if known.
    pub support: Option<(f64, f64)>,
}

#[derive(Clone)]
pub enum Forcing {
    Zero,
    Separable { profile: Profile, envelope: Envelope },
    Custom(CustomForcing),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Separable { profile, envelope } => f
                .debug_struct("Separable")
                .field("profile", profile)
                .field("envelope", envelope)
                .finish(),
            Forcing::Custom(c) => f.debug_struct("Custom").field("breaks", &c.breaks).finish(),
        }
    }
}

impl Forcing {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Forcing::Custom(CustomForcing {
            f: Arc::new(f),
            breaks: Vec::new(),
            features: Vec::new(),
            support: None,
        })
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Separable { profile, envelope } => profile.eval(x) * envelope.eval(t),
            Forcing::Custom(c) => (c.f)(x, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::Separable { profile, envelope } => {
                matches!(profile, Profile::Gaussian { amp, .. } | Profile::RoughPulse { amp, .. } if *amp == 0.0)
                    || (envelope.mean == 0.0 && envelope.amp == 0.0)
            }
            Forcing::Custom(_) => false,
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Forcing::Separable { profile, .. } => profile.breakpoints(),
            Forcing::Custom(c) => c.breaks.clone(),
            Forcing::Zero => Vec::new(),
        }
    }

    pub fn features(&self) -> Vec<Feature> {
        match self {
            Forcing::Separable { profile, .. } => vec![profile.feature()],
            Forcing::Custom(c) => c.features.clone(),
            Forcing::Zero => Vec::new(),
        }
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Forcing::Zero => None,
            Forcing::Separable { profile, .. } => Some(profile.support()),
            Forcing::Custom(c) => c.support,
        }
    }

    /// Pointwise sum, as a closure forcing.
    pub fn sum(a: &Forcing, b: &Forcing) -> Forcing {
        let (fa, fb) = (a.clone(), b.clone());
        let mut breaks = a.breakpoints();
        breaks.extend(b.breakpoints());
        let mut features = a.features();
        features.extend(b.features());
        let support = match (a.support(), b.support()) {
            (Some(x), Some(y)) => Some((x.0.min(y.0), x.1.max(y.1))),
            (s, None) if b.is_zero() => s,
            (None, s) if a.is_zero() => s,
            _ => None,
        };
        Forcing::Custom(CustomForcing {
            f: Arc::new(move |x, t| fa.eval(x, t) + fb.eval(x, t)),
            breaks,
            features,
            support,
        })
    }
}

/// Cumulative integral `P(x) = ∫_{lo}^x q` with cubic Hermite interpolation
/// between nodes that include every breakpoint of `q`.
#[derive(Debug, Clone)]
pub struct Cumulative {
    xs: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Cumulative {
    pub fn build(q: impl Fn(f64) -> f64, lo: f64, hi: f64, spacing: f64, breaks: &[f64]) -> Self {
        if !(hi > lo) {
            return Self {
                xs: vec![lo],
                values: vec![0.0],
                slopes: vec![0.0],
            };
        }
        let mut cuts = vec![lo, hi];
        cuts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut xs = vec![lo];
        let mut at_cut = vec![true];
        for w in cuts.windows(2) {
            let n = ((w[1] - w[0]) / spacing).ceil().max(1.0) as usize;
            for i in 1..n {
                xs.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
                at_cut.push(false);
            }
            xs.push(w[1]);
            at_cut.push(true);
        }
        let cfg = QuadratureConfig {
            space_points: 12,
            ..Default::default()
        };
        let mut values = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            let (a, b) = (xs[i - 1], xs[i]);
            // cells touching a cut are graded toward both ends
            let cell = if at_cut[i - 1] || at_cut[i] {
                integrate_time::<1>(a, b, 0.0, 0.0, &cfg, |n| [q(n.s)])[0]
            } else {
                integrate_space::<1>(a, b, b - a, &[], &[], &cfg, |z| [q(z)])[0]
            };
            values[i] = values[i - 1] + cell;
        }
        // one-sided limits at breakpoints are not needed: q is continuous wherever it is used here
        let slopes = xs.iter().map(|&x| q(x)).collect();
        Self { xs, values, slopes }
    }

    pub fn total(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return self.values[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.values[i] + h10 * h * self.slopes[i] + h01 * self.values[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Whether the problem carries the cumulative forcing `G` built from `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GMode {
    #[default]
    FromF,
    Zero,
}

/// `G(x, t) = ∫_{lower}^x f(z, t)² dz` by direct quadrature.
pub fn build_g(f: &Forcing, lower: f64, x: f64, t: f64) -> f64 {
    if x <= lower || f.is_zero() {
        return 0.0;
    }
    let (lo, hi) = match f.support() {
        Some((a, b)) => (lower.max(a), x.min(b)),
        None => (lower, x),
    };
    if !(hi > lo) {
        return 0.0;
    }
    let cfg = QuadratureConfig {
        space_points: 12,
        ..Default::default()
    };
    let res = f.features().iter().map(|ft| ft.scale).fold(0.05, f64::min);
    let features = f.features();
    let mut cuts = vec![lo, hi];
    cuts.extend(f.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
    cuts.sort_by(f64::total_cmp);
    let q = |z: f64| {
        let v = f.eval(z, t);
        [v * v]
    };
    let mut total = 0.0;
    // pieces next to a cut are graded: the profile may be only Hölder there
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let e = res.min(0.5 * (b - a));
        total += integrate_time::<1>(a, a + e, 0.0, 0.0, &cfg, |n| q(n.s))[0];
        total += integrate_time::<1>(b - e, b, 0.0, 0.0, &cfg, |n| q(n.s))[0];
        if b - a > 2.0 * e {
            total += integrate_space::<1>(a + e, b - e, res, &features, &[], &cfg, q)[0];
        }
    }
    total
}

/// The `G` term of a problem.
#[derive(Debug, Clone)]
pub enum GTerm {
    Zero,
    /// `envelope(t)²·P(x)` with `P` the cumulative integral of `profile²`.
    Separable { envelope: Envelope, cumulative: Cumulative, breaks: Vec<f64>, feature: Feature },
    Quadrature { forcing: Forcing, lower: f64 },
}

impl GTerm {
    pub fn from_forcing(f: &Forcing, lower: f64) -> Self {
        match f {
            _ if f.is_zero() => GTerm::Zero,
            Forcing::Separable { profile, envelope } => {
                let (a, b) = profile.support();
                let feature = profile.feature();
                let breaks = profile.breakpoints();
                let cumulative = Cumulative::build(
                    |z| profile.eval(z).powi(2),
                    lower.max(a),
                    b,
                    0.1 * feature.scale,
                    &breaks,
                );
                GTerm::Separable {
                    envelope: *envelope,
                    cumulative,
                    breaks,
                    feature,
                }
            }
            _ => GTerm::Quadrature {
                forcing: f.clone(),
                lower,
            },
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            GTerm::Zero => 0.0,
            GTerm::Separable {
                envelope, cumulative, ..
            } => envelope.eval(t).powi(2) * cumulative.eval(x),
            GTerm::Quadrature { forcing, lower } => build_g(forcing, *lower, x, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, GTerm::Zero)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            GTerm::Separable { breaks, .. } => breaks.clone(),
            GTerm::Quadrature { forcing, .. } => forcing.breakpoints(),
            GTerm::Zero => Vec::new(),
        }
    }

    pub fn features(&self) -> Vec<Feature> {
        match self {
            GTerm::Separable { feature, .. } => vec![*feature],
            GTerm::Quadrature { forcing, .. } => forcing.features(),
            GTerm::Zero => Vec::new(),
        }
    }
}

/// Closure-backed initial datum with its derivative.
#[derive(Clone)]
pub struct CustomDatum {
    pub w0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dw0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub breaks: Vec<f64>,
    pub features: Vec<Feature>,
    pub support: Option<(f64, f64)>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    Zero,
    /// `amp·exp(−(x − center)²/(2σ²))`
    Gaussian { amp: f64, center: f64, sigma: f64 },
    #[serde(skip)]
    Custom(CustomDatum),
}

impl fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialDatum::Zero => write!(f, "Zero"),
            InitialDatum::Gaussian { amp, center, sigma } => f
                .debug_struct("Gaussian")
                .field("amp", amp)
                .field("center", center)
                .field("sigma", sigma)
                .finish(),
            InitialDatum::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl InitialDatum {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialDatum::Zero => 0.0,
            InitialDatum::Gaussian { amp, center, sigma } => amp * (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp(),
            InitialDatum::Custom(c) => (c.w0)(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            InitialDatum::Zero => 0.0,
            InitialDatum::Gaussian { center, sigma, .. } => -(x - center) / (sigma * sigma) * self.eval(x),
            InitialDatum::Custom(c) => (c.dw0)(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            InitialDatum::Zero => true,
            InitialDatum::Gaussian { amp, .. } => *amp == 0.0,
            InitialDatum::Custom(_) => false,
        }
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            InitialDatum::Zero => None,
            InitialDatum::Gaussian { center, sigma, .. } => Some((center - 12.0 * sigma, center + 12.0 * sigma)),
            InitialDatum::Custom(c) => c.support,
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            InitialDatum::Custom(c) => c.breaks.clone(),
            _ => Vec::new(),
        }
    }

    pub fn features(&self) -> Vec<Feature> {
        match self {
            InitialDatum::Gaussian { center, sigma, .. } => vec![Feature {
                lo: center - 8.0 * sigma,
                hi: center + 8.0 * sigma,
                scale: 0.5 * sigma,
            }],
            InitialDatum::Custom(c) => c.features.clone(),
            InitialDatum::Zero => Vec::new(),
        }
    }

    /// Sup norm sampled on `[-halfwidth, halfwidth]`.
    pub fn sup_norm(&self, halfwidth: f64) -> f64 {
        (0..=4000)
            .map(|i| self.eval(-halfwidth + 2.0 * halfwidth * i as f64 / 4000.0).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pulse() -> Profile {
        Profile::RoughPulse {
            amp: 1.0,
            left: -0.6,
            right: 0.4,
            ramp: 0.1,
            exponent: 0.25,
        }
    }

    #[test]
    fn rough_pulse_shape() {
        let p = pulse();
        assert!(p.validate().is_ok());
        assert_eq!(p.eval(-0.7), 0.0);
        assert_eq!(p.eval(0.0), 1.0);
        assert_relative_eq!(p.eval(-0.6 + 0.1 * 0.0625), 0.5, max_relative = 1e-14);
        assert_eq!(p.breakpoints(), vec![-0.6, -0.5, 0.30000000000000004, 0.4]);
    }

    #[test]
    fn cumulative_matches_closed_form() {
        // ∫ of p² for the pulse: plateau 0.8 plus two ramps of 0.1·∫_0^1 s^{1/2} ds = 0.1·2/3
        let f = Forcing::Separable {
            profile: pulse(),
            envelope: Envelope::constant(1.0),
        };
        let g = GTerm::from_forcing(&f, -5.0);
        let total = 0.8 + 2.0 * 0.1 * 2.0 / 3.0;
        assert_relative_eq!(g.eval(5.0, 0.0), total, max_relative = 1e-6);
        assert_relative_eq!(build_g(&f, -5.0, 5.0, 0.0), total, max_relative = 1e-6);
        assert_eq!(g.eval(-1.0, 0.3), 0.0);
        // G_x = f² away from corners
        for x in [-0.3, 0.0, 0.2] {
            let h = 1e-4;
            let d = (g.eval(x + h, 0.0) - g.eval(x - h, 0.0)) / (2.0 * h);
            assert!((d - f.eval(x, 0.0).powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn g_is_monotone_and_scales_with_envelope() {
        let f = Forcing::Separable {
            profile: Profile::Gaussian {
                amp: 2.0,
                center: 0.3,
                width: 0.5,
            },
            envelope: Envelope {
                mean: 1.0,
                amp: 0.5,
                omega: 3.0,
            },
        };
        let g = GTerm::from_forcing(&f, -6.0);
        let t = 0.4;
        let mut prev = -1.0;
        for i in 0..400 {
            let x = -3.0 + 6.0 * i as f64 / 399.0;
            let v = g.eval(x, t);
            assert!(v >= prev - 1e-14 && v >= 0.0, "{x}: {v} < {prev}");
            prev = v;
        }
        // ∫ 4 e^{-2((x-c)/w)²} = 4 w sqrt(π/2)
        let e2 = (1.0 + 0.5 * (1.2f64).cos()).powi(2);
        assert_relative_eq!(g.eval(6.0, t), e2 * 4.0 * 0.5 * (std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-8);
        assert_relative_eq!(g.eval(0.7, t), build_g(&f, -6.0, 0.7, t), max_relative = 1e-7);
    }

    #[test]
    fn zero_forcing_gives_zero_g() {
        let g = GTerm::from_forcing(&Forcing::Zero, -5.0);
        assert!(g.is_zero());
        assert_eq!(build_g(&Forcing::Zero, -5.0, 1.0, 0.2), 0.0);
    }

    #[test]
    fn tabulated_profile_interpolates() {
        let xs: Vec<f64> = (0..101).map(|i| (-1.0 + 0.02 * i as f64).sin()).collect();
        let t = TabulatedProfile {
            x0: -1.0,
            dx: 0.02,
            values: Arc::new(xs),
            scale: 0.5,
        };
        assert!((t.eval(0.123) - 0.123f64.sin()).abs() < 1e-8);
        assert_eq!(t.eval(1.5), 0.0);
    }

    #[test]
    fn sum_is_pointwise() {
        let a = Forcing::Separable {
            profile: pulse(),
            envelope: Envelope::constant(2.0),
        };
        let b = Forcing::custom(|x, t| x * t);
        let s = Forcing::sum(&a, &b);
        assert_eq!(s.eval(0.1, 0.5), a.eval(0.1, 0.5) + 0.05);
        assert_eq!(s.breakpoints().len(), 4);
    }

    #[test]
    fn gaussian_datum_derivative() {
        let w = InitialDatum::Gaussian {
            amp: 1.5,
            center: 0.2,
            sigma: 0.4,
        };
        let h = 1e-6;
        let fd = (w.eval(0.5 + h) - w.eval(0.5 - h)) / (2.0 * h);
        assert!((fd - w.deriv(0.5)).abs() < 1e-8);
        assert_relative_eq!(w.sup_norm(3.0), 1.5, max_relative = 1e-6);
    }
}
