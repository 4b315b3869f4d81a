//! Gauss-Legendre rules and the composite integrators everything else is built on.
//!
//! Space integrals run over truncated Gaussian windows split into panels at
//! breakpoints and at the edges of "feature" intervals where the integrand
//! varies on a shorter scale. Time integrals with endpoint singularities use a
//! graded substitution on each half of the interval.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_RULE: usize = 64;

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![2.0],
            };
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let step = p / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

/// Cached rule with `n` nodes, `1 <= n <= 64`.
pub fn rule(n: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=MAX_RULE).map(GaussLegendre::new).collect());
    assert!((1..=MAX_RULE).contains(&n), "Gauss-Legendre order {n} out of range");
    &rules[n - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gaussian windows are truncated at this many standard deviations.
    pub space_halfwidth_sigmas: f64,
    /// Gauss points per space panel.
    pub space_points: usize,
    /// Panel length in units of the local resolution.
    pub space_panel_scale: f64,
    pub max_space_panels: usize,
    /// Gauss points per time panel.
    pub time_points: usize,
    /// Panels per half of a graded time interval.
    pub time_panels: usize,
    pub singular_exponent_cap: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_refinements: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            space_halfwidth_sigmas: 8.0,
            space_points: 8,
            space_panel_scale: 2.0,
            max_space_panels: 2000,
            time_points: 8,
            time_panels: 2,
            singular_exponent_cap: 0.95,
            abs_tol: 1e-12,
            rel_tol: 1e-8,
            max_refinements: 5,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("quadrature: {m}")));
        if !(self.space_halfwidth_sigmas >= 4.0) {
            return bad("space_halfwidth_sigmas must be >= 4");
        }
        if !(1..=MAX_RULE).contains(&self.space_points) || !(1..=MAX_RULE).contains(&self.time_points) {
            return bad("points per panel must lie in 1..=64");
        }
        if !(self.space_panel_scale > 0.0) || self.max_space_panels == 0 || self.time_panels == 0 {
            return bad("panel parameters must be positive");
        }
        if !(0.0..1.0).contains(&self.singular_exponent_cap) {
            return bad("singular_exponent_cap must lie in [0, 1)");
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    /// Same rule with panels halved in size.
    pub fn refined(&self) -> Self {
        Self {
            space_panel_scale: self.space_panel_scale * 0.5,
            max_space_panels: self.max_space_panels * 2,
            time_panels: self.time_panels * 2,
            ..*self
        }
    }

    /// Same rule with panels doubled in size.
    pub fn coarsened(&self) -> Self {
        Self {
            space_panel_scale: self.space_panel_scale * 2.0,
            time_panels: (self.time_panels / 2).max(1),
            ..*self
        }
    }

    /// Substitution power for an endpoint behaving like `gap^{-p}`.
    fn grading(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, self.singular_exponent_cap);
        (1.0 / (1.0 - p)).max(2.0)
    }
}

/// A value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Quadrature node of a time integral over `[t0, t1]`. The gaps to both ends
/// are carried separately so kernels near either endpoint keep full precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeNode {
    pub s: f64,
    pub since: f64,
    pub until: f64,
}

/// Interval `[lo, hi]` on which an integrand varies on length scale `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub lo: f64,
    pub hi: f64,
    pub scale: f64,
}

/// Space window for one time slice of a Volterra layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub resolution: f64,
}

impl Window {
    /// `center ± m·width`, resolved at `width`.
    pub fn gaussian(center: f64, width: f64, cfg: &QuadratureConfig) -> Self {
        let m = cfg.space_halfwidth_sigmas * width;
        Self {
            lo: center - m,
            hi: center + m,
            resolution: width,
        }
    }

    pub fn intersect(self, other: Window) -> Self {
        Self {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
            resolution: self.resolution.min(other.resolution),
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }
}

#[inline]
fn add_scaled<const N: usize>(acc: &mut [f64; N], w: f64, v: &[f64; N]) {
    for k in 0..N {
        acc[k] += w * v[k];
    }
}

/// Composite Gauss-Legendre over `[a, b]`. Panels are cut at every breakpoint
/// and feature edge inside the interval; each piece uses panels no longer than
/// `space_panel_scale` times the finest applicable resolution.
pub fn integrate_space<const N: usize>(
    a: f64,
    b: f64,
    resolution: f64,
    features: &[Feature],
    breaks: &[f64],
    cfg: &QuadratureConfig,
    mut f: impl FnMut(f64) -> [f64; N],
) -> [f64; N] {
    let mut acc = [0.0; N];
    if !(b > a) {
        return acc;
    }
    let mut cuts: Vec<f64> = Vec::with_capacity(2 + breaks.len() + 2 * features.len());
    cuts.push(a);
    cuts.push(b);
    cuts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    for ft in features {
        for x in [ft.lo, ft.hi] {
            if x > a && x < b {
                cuts.push(x);
            }
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let gl = rule(cfg.space_points);
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let mut res = resolution;
        for ft in features {
            if ft.lo < hi && ft.hi > lo {
                res = res.min(ft.scale);
            }
        }
        let len = hi - lo;
        let panels = ((len / (cfg.space_panel_scale * res)).ceil() as usize).clamp(1, cfg.max_space_panels);
        let h = len / panels as f64;
        for p in 0..panels {
            let c = lo + (p as f64 + 0.5) * h;
            let r = 0.5 * h;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let v = f(c + r * x);
                add_scaled(&mut acc, r * w, &v);
            }
        }
    }
    acc
}

/// `∫_{t0}^{t1} f(s) ds` for integrands behaving like `(s - t0)^{-p_lower}` and
/// `(t1 - s)^{-p_upper}` at the ends. The interval is split at its midpoint
/// and each half is mapped by `gap = h·v^q` with `q = max(2, 1/(1 - p))`.
pub fn integrate_time<const N: usize>(
    t0: f64,
    t1: f64,
    p_lower: f64,
    p_upper: f64,
    cfg: &QuadratureConfig,
    mut f: impl FnMut(TimeNode) -> [f64; N],
) -> [f64; N] {
    let mut acc = [0.0; N];
    let len = t1 - t0;
    if !(len > 0.0) {
        return acc;
    }
    let h = 0.5 * len;
    let gl = rule(cfg.time_points);
    let np = cfg.time_panels;
    for (upper, q) in [(false, cfg.grading(p_lower)), (true, cfg.grading(p_upper))] {
        for p in 0..np {
            let c = (p as f64 + 0.5) / np as f64;
            let r = 0.5 / np as f64;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let v = c + r * x;
                let gap = h * v.powf(q);
                let jac = h * q * v.powf(q - 1.0) * r * w;
                let node = if upper {
                    TimeNode {
                        s: t1 - gap,
                        since: len - gap,
                        until: gap,
                    }
                } else {
                    TimeNode {
                        s: t0 + gap,
                        since: gap,
                        until: len - gap,
                    }
                };
                let val = f(node);
                add_scaled(&mut acc, jac, &val);
            }
        }
    }
    acc
}

/// Tracks the first non-finite sample seen by an integrand.
#[derive(Default)]
struct FiniteGuard {
    bad: Option<(String, f64)>,
}

impl FiniteGuard {
    fn check(&mut self, v: f64, loc: impl FnOnce() -> String) -> f64 {
        if !v.is_finite() && self.bad.is_none() {
            self.bad = Some((loc(), v));
        }
        v
    }

    fn finish(self) -> Result<()> {
        match self.bad {
            None => Ok(()),
            Some((location, value)) => Err(Error::NonFiniteIntegrand { location, value }),
        }
    }
}

/// Integral of `f` over `center ± m·width`, where `f` already contains its
/// Gaussian weight. The error estimate combines the change under halving the
/// panel count with the size of the integrand at the truncation points.
pub fn gaussian_space_integral(
    f: impl Fn(f64) -> f64,
    center: f64,
    width: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("window width {width} must be positive")));
    }
    let w = Window::gaussian(center, width, cfg);
    let mut guard = FiniteGuard::default();
    let fine = integrate_space::<1>(w.lo, w.hi, width, &[], &[], cfg, |x| {
        [guard.check(f(x), || format!("xi = {x}"))]
    })[0];
    guard.finish()?;
    let coarse = integrate_space::<1>(w.lo, w.hi, width, &[], &[], &cfg.coarsened(), |x| [f(x)])[0];
    let tail = (f(w.lo).abs() + f(w.hi).abs()) * width;
    Ok(Estimate {
        value: fine,
        error: (fine - coarse).abs() + tail,
    })
}

/// `∫_{t0}^{t1} (t1 - τ)^{-p} φ(τ) dτ` through `u = (t1 - τ)^{1-p}`, which turns
/// the weight into a constant; the `u` integral uses `time_panels` panels.
pub fn singular_time_integral(
    phi: impl Fn(f64) -> f64,
    t0: f64,
    t1: f64,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "singular exponent {p} outside [0, 1): the endpoint singularity is not integrable"
        )));
    }
    if t1 < t0 {
        return Err(Error::InvalidArgument(format!("empty interval [{t0}, {t1}]")));
    }
    let a = 1.0 - p;
    let umax = (t1 - t0).powf(a);
    let gl = rule(cfg.time_points);
    let np = cfg.time_panels;
    let h = umax / np as f64;
    let mut guard = FiniteGuard::default();
    let mut acc = 0.0;
    for k in 0..np {
        let c = (k as f64 + 0.5) * h;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let u = c + 0.5 * h * x;
            let tau = t1 - u.powf(1.0 / a);
            acc += 0.5 * h * w * guard.check(phi(tau), || format!("tau = {tau}"));
        }
    }
    guard.finish()?;
    Ok(acc / a)
}

/// Shape of a space-time layer `∫_τ^t ∫ K(y,s) F(y,s) dy ds`.
pub struct Layer<'a> {
    pub tau: f64,
    pub t: f64,
    /// Singular exponent of the space-integrated integrand at `s = τ`.
    pub lower_exponent: f64,
    /// Singular exponent at `s = t`.
    pub upper_exponent: f64,
    pub window: &'a dyn Fn(TimeNode) -> Window,
    pub breaks: &'a [f64],
}

/// Iterated integral, space first. Refines both panel families until two
/// successive results agree to `rel_tol`.
pub fn spacetime_volterra_layer(
    kernel: impl Fn(f64, TimeNode) -> f64,
    density: impl Fn(f64, TimeNode) -> f64,
    layer: &Layer<'_>,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    let eval = |c: &QuadratureConfig| -> Result<f64> {
        let mut guard = FiniteGuard::default();
        let v = integrate_time::<1>(layer.tau, layer.t, layer.lower_exponent, layer.upper_exponent, c, |node| {
            let w = (layer.window)(node);
            if w.is_empty() {
                return [0.0];
            }
            integrate_space::<1>(w.lo, w.hi, w.resolution, &[], layer.breaks, c, |y| {
                let v = kernel(y, node) * density(y, node);
                [guard.check(v, || format!("(y, s) = ({y}, {})", node.s))]
            })
        })[0];
        guard.finish()?;
        Ok(v)
    };
    let mut c = *cfg;
    let mut prev = eval(&c)?;
    let mut diff = f64::INFINITY;
    for _ in 0..cfg.max_refinements {
        c = c.refined();
        let next = eval(&c)?;
        diff = (next - prev).abs();
        if diff <= cfg.abs_tol + cfg.rel_tol * next.abs() {
            return Ok(Estimate {
                value: next,
                error: diff,
            });
        }
        prev = next;
    }
    Err(Error::QuadratureTolerance {
        refinements: cfg.max_refinements,
        estimate: diff,
        target: cfg.abs_tol + cfg.rel_tol * prev.abs(),
    })
}
