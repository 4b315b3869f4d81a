//! Fundamental solution `Γ = H + ∫∫ H Φ` with `Φ` from the iterated-kernel series.
//!
//! `K₁(y,s;ξ,τ) = (k(ξ,τ) − k(y,s))·H_xx + γH` is the defect of the frozen kernel
//! under the true operator. With `T₁ = K₁` and `T_{m+1} = ∫∫ K₁(·;η,σ) T_m(η,σ)`,
//! `Φ = Σ_m σ^m T_m` for a sign `σ = ±1`. `T₁` is evaluated in closed form;
//! `T_m` for `m ≥ 2` is tabulated per source point in the similarity variables
//! `z = (y − ξ)/√(s − τ)` and `u = √((s − τ)/S)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::kernel::{heat, heat_derivs, heat_dx};
use crate::quadrature::{integrate_space, integrate_time, Feature, QuadratureConfig, Window};
use crate::table::{Extension, Table};

/// Sign of the first iterated kernel in the series for `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhiSign {
    /// Pick the sign whose `Γ` has the smaller PDE residual at probe points.
    #[default]
    Auto,
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParametrixConfig {
    pub max_series_terms: usize,
    /// Series stops once a term's weighted sup norm drops below this fraction
    /// of the first term's.
    pub term_tol: f64,
    pub min_time_separation: f64,
    pub sign: PhiSign,
    /// Nodes of the similarity coordinate `z` in the `Φ` tables.
    pub z_nodes: usize,
    /// Nodes of the time coordinate `u` in every table.
    pub u_nodes: usize,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        Self {
            max_series_terms: 6,
            term_tol: 1e-8,
            min_time_separation: 1e-6,
            sign: PhiSign::Auto,
            z_nodes: 129,
            u_nodes: 24,
        }
    }
}

impl ParametrixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=12).contains(&self.max_series_terms) {
            return Err(Error::InvalidArgument(format!(
                "max_series_terms = {} outside 1..=12",
                self.max_series_terms
            )));
        }
        if !(self.term_tol > 0.0 && self.min_time_separation > 0.0) {
            return Err(Error::InvalidArgument("term_tol and min_time_separation must be positive".into()));
        }
        if self.z_nodes < 8 || self.u_nodes < 6 {
            return Err(Error::InvalidArgument("tables need z_nodes >= 8 and u_nodes >= 6".into()));
        }
        Ok(())
    }
}

/// Truncation record of an iterated-kernel series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesInfo {
    /// Number of terms kept, counting `T₁`.
    pub terms: usize,
    /// The term cap was reached before `term_tol`.
    pub capped: bool,
    /// Weighted sup norms of the kept terms.
    pub term_norms: Vec<f64>,
}

struct PhiTables {
    span: f64,
    kscale: f64,
    /// `u`-weight of the summed tables.
    weight: f64,
    sum_negative: Option<Table<1>>,
    sum_positive: Option<Table<1>>,
    info: SeriesInfo,
}

/// Evaluates `Γ`, `Γ_x` and `Φ` for a fixed coefficient field and `γ`.
pub struct GammaEvaluator {
    field: CoefficientField,
    gamma: f64,
    horizon: f64,
    config: ParametrixConfig,
    quadrature: QuadratureConfig,
    sign: f64,
    breaks: Vec<f64>,
    features: Vec<Feature>,
    cache: Mutex<HashMap<(u64, u64), Arc<PhiTables>>>,
}

impl std::fmt::Debug for GammaEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GammaEvaluator")
            .field("field", &self.field)
            .field("gamma", &self.gamma)
            .field("horizon", &self.horizon)
            .field("sign", &self.sign)
            .finish()
    }
}

/// Sample of a kernel for bound fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSample {
    pub dx: f64,
    pub dt: f64,
    pub value: f64,
}

/// `|v| ≤ C·Δt^{−p}·exp(−dΔx²/(4Δt))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBound {
    pub c: f64,
    pub d: f64,
    pub violations: usize,
}

impl GaussianBound {
    pub fn bound(&self, dx: f64, dt: f64, power: f64) -> f64 {
        self.c * dt.powf(-power) * (-self.d * dx * dx / (4.0 * dt)).exp()
    }

    /// Samples exceeding `margin` times the bound, non-finite values included.
    pub fn violations(&self, samples: &[BoundSample], power: f64, margin: f64) -> usize {
        samples
            .iter()
            .filter(|s| !s.value.is_finite() || s.value.abs() > margin * self.bound(s.dx, s.dt, power) * (1.0 + 1e-12))
            .count()
    }
}

/// Relative slack on `C` when picking the largest admissible `d`.
pub const BOUND_SLACK: f64 = 0.1;

/// Fits `(C, d)` by grid search over `d ∈ (0, 1/(2k_upper)]`: for each `d` the
/// smallest valid `C` is the sample maximum, and the largest `d` whose `C`
/// stays within [`BOUND_SLACK`] of the overall minimum is kept. The rate is
/// capped at half the heat-kernel rate because iterated kernels carry
/// polynomial factors in `Δx²/Δt` that defeat the sharp rate in the far tails.
pub fn fit_gaussian_bound(samples: &[BoundSample], singular_power: f64, k_upper: f64) -> Result<GaussianBound> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to fit".into()));
    }
    if !(k_upper > 0.0) {
        return Err(Error::InvalidArgument(format!("k_upper = {k_upper} must be positive")));
    }
    if let Some(s) = samples.iter().find(|s| !(s.dt > 0.0)) {
        return Err(Error::InvalidArgument(format!("sample with dt = {} <= 0", s.dt)));
    }
    let finite: Vec<&BoundSample> = samples.iter().filter(|s| s.value.is_finite()).collect();
    let c_of = |d: f64| {
        finite
            .iter()
            .map(|s| s.value.abs() * s.dt.powf(singular_power) * (d * s.dx * s.dx / (4.0 * s.dt)).exp())
            .fold(0.0, f64::max)
    };
    let n = 200;
    let grid: Vec<(f64, f64)> = (1..=n)
        .map(|i| {
            let d = 0.5 * i as f64 / n as f64 / k_upper;
            (d, c_of(d))
        })
        .collect();
    let cmin = grid.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let (d, c) = grid
        .iter()
        .rev()
        .find(|g| g.1 <= (1.0 + BOUND_SLACK) * cmin)
        .copied()
        .unwrap_or(grid[0]);
    let mut fit = GaussianBound { c, d, violations: 0 };
    fit.violations = fit.violations(samples, singular_power, 1.0);
    Ok(fit)
}

impl GammaEvaluator {
    /// Resolves an automatic sign immediately, which costs one coarse `Φ` table.
    pub fn new(
        field: CoefficientField,
        gamma: f64,
        horizon: f64,
        config: ParametrixConfig,
        quadrature: QuadratureConfig,
    ) -> Result<Self> {
        config.validate()?;
        quadrature.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        let mut ev = Self {
            breaks: field.breakpoints(),
            features: field.features(),
            field,
            gamma,
            horizon,
            config,
            quadrature,
            sign: -1.0,
            cache: Mutex::new(HashMap::new()),
        };
        ev.sign = match config.sign {
            PhiSign::Negative => -1.0,
            PhiSign::Positive => 1.0,
            PhiSign::Auto => ev.calibrate_sign()?,
        };
        Ok(ev)
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn config(&self) -> &ParametrixConfig {
        &self.config
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quadrature
    }

    /// Sign actually used for `Φ`, `−1` or `+1`.
    pub fn sign(&self) -> f64 {
        self.sign
    }

    /// `Φ ≡ 0`: constant coefficient and no zeroth-order term.
    pub fn is_trivial(&self) -> bool {
        self.field.is_constant() && self.gamma == 0.0
    }

    pub(crate) fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub(crate) fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Singular exponent of space-integrated `K₁` at either end.
    pub(crate) fn kernel_exponent(&self) -> f64 {
        if self.field.is_constant() {
            0.0
        } else {
            1.0 - 0.5 * self.field.holder_exponent()
        }
    }

    /// Window of a kernel centered at `center` after time `gap`.
    #[inline]
    pub(crate) fn window(&self, center: f64, gap: f64) -> Window {
        let m = self.quadrature.space_halfwidth_sigmas * (2.0 * self.field.k_upper() * gap).sqrt();
        Window {
            lo: center - m,
            hi: center + m,
            resolution: (2.0 * self.field.k_lower() * gap).sqrt(),
        }
    }

    /// `K₁(y,s;η,σ)` given `k(y,s)`, `k(η,σ)` and `s − σ`.
    #[inline]
    pub(crate) fn k1(&self, ky: f64, keta: f64, dy: f64, gap: f64) -> f64 {
        if ky == keta {
            if self.gamma == 0.0 {
                0.0
            } else {
                self.gamma * heat(dy, gap, keta)
            }
        } else {
            let d = heat_derivs(dy, gap, keta);
            (keta - ky) * d.hxx + self.gamma * d.h
        }
    }

    pub fn lh_kernel(&self, y: f64, s: f64, xi: f64, tau: f64) -> Result<f64> {
        let gap = s - tau;
        if !(gap > 0.0) {
            return Err(Error::NonPositiveTimeSeparation { dt: gap });
        }
        Ok(self.k1(self.field.evaluate(y, s), self.field.evaluate(xi, tau), y - xi, gap))
    }

    fn check_target(&self, t: f64, tau: f64) -> Result<()> {
        let gap = t - tau;
        if !(gap >= self.config.min_time_separation) {
            return Err(Error::InvalidArgument(format!(
                "t − τ = {gap:e} below min_time_separation {:e}",
                self.config.min_time_separation
            )));
        }
        if tau < 0.0 || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "(t, τ) = ({t}, {tau}) outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    fn tables(&self, xi: f64, tau: f64) -> Result<Arc<PhiTables>> {
        let key = (xi.to_bits(), tau.to_bits());
        if let Some(t) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(t.clone());
        }
        // built without holding the lock: table construction runs on the rayon pool
        let built = Arc::new(self.build_tables(xi, tau)?);
        let mut cache = self.cache.lock().expect("cache poisoned");
        Ok(cache.entry(key).or_insert(built).clone())
    }

    fn term_weight(&self, m: usize) -> f64 {
        (3.0 - m as f64 * self.field.holder_exponent()).max(0.0)
    }

    fn build_tables(&self, xi: f64, tau: f64) -> Result<PhiTables> {
        let span = self.horizon - tau;
        let kscale = 0.25 / self.field.k_upper();
        let info1 = SeriesInfo {
            terms: 1,
            capped: false,
            term_norms: vec![],
        };
        if self.is_trivial() || !(span > 0.0) {
            return Ok(PhiTables {
                span: span.max(0.0),
                kscale,
                weight: 0.0,
                sum_negative: None,
                sum_positive: None,
                info: info1,
            });
        }
        let nz = self.config.z_nodes;
        let nu = self.config.u_nodes;
        let zmax = self.quadrature.space_halfwidth_sigmas * (2.0 * self.field.k_upper()).sqrt();
        let dz = 2.0 * zmax / (nz - 1) as f64;
        let kxi = self.field.evaluate(xi, tau);
        let beta = self.field.holder_exponent();
        let p1 = self.kernel_exponent();
        let q = &self.quadrature;

        // weighted sup norm of T₁ on the table nodes
        let mut n1: f64 = 0.0;
        for j in 0..nu {
            let u = (j + 1) as f64 / nu as f64;
            let gap = span * u * u;
            for i in 0..nz {
                let z = -zmax + i as f64 * dz;
                let y = xi + z * gap.sqrt();
                let v = self.k1(self.field.evaluate(y, tau + gap), kxi, y - xi, gap);
                n1 = n1.max((v * u.powi(3) * (z * z * kscale).exp()).abs());
            }
        }

        let mut terms: Vec<Table<1>> = Vec::new();
        let mut norms = vec![n1];
        let mut capped = false;
        for m in 1..self.config.max_series_terms {
            if n1 == 0.0 {
                break;
            }
            // build T_{m+1} from T_m
            let em = self.term_weight(m);
            let em1 = self.term_weight(m + 1);
            let prev = terms.last();
            let p_lower = if self.field.is_constant() {
                0.0
            } else {
                (1.0 - 0.5 * m as f64 * beta).max(0.0)
            };
            let table = Table::<1>::try_from_fn(-zmax, dz, nz, nu, Extension::Zero, |z, u| {
                let gap_total = span * u * u;
                let sq = gap_total.sqrt();
                let y = xi + z * sq;
                let s = tau + gap_total;
                let ky = self.field.evaluate(y, s);
                let v = integrate_time::<1>(tau, s, p_lower, p1, q, |node| {
                    let (lo_gap, up_gap) = (node.since, node.until);
                    let w = self.window(y, up_gap).intersect(self.window(xi, lo_gap));
                    if w.is_empty() {
                        return [0.0];
                    }
                    let sq_lo = lo_gap.sqrt();
                    let u_lo = (lo_gap / span).sqrt();
                    let inv_w = u_lo.powf(-em);
                    integrate_space::<1>(w.lo, w.hi, w.resolution, &self.features, &self.breaks, q, |eta| {
                        let keta = self.field.evaluate(eta, node.s);
                        let outer = self.k1(ky, keta, y - eta, up_gap);
                        if outer == 0.0 {
                            return [0.0];
                        }
                        let inner = match prev {
                            None => self.k1(keta, kxi, eta - xi, lo_gap),
                            Some(t) => {
                                let zz = (eta - xi) / sq_lo;
                                t.interp(zz, u_lo)[0] * (-zz * zz * kscale).exp() * inv_w
                            }
                        };
                        [outer * inner]
                    })
                })[0];
                Ok([u.powf(em1) * (z * z * kscale).exp() * v])
            })?;
            // common weight u³ for the norm
            let mut nm: f64 = 0.0;
            for j in 0..nu {
                let u = table.node_u(j);
                let w = u.powf(3.0 - em1);
                for i in 0..nz {
                    nm = nm.max((table.get(i, j)[0] * w).abs());
                }
            }
            let kept = m + 1;
            if kept >= 3 && nm > norms[kept - 2] {
                return Err(Error::NonContraction {
                    term: kept,
                    previous: norms[kept - 2],
                    current: nm,
                });
            }
            norms.push(nm);
            terms.push(table);
            if nm < self.config.term_tol * n1 {
                break;
            }
            if kept == self.config.max_series_terms {
                capped = true;
            }
        }
        if self.config.max_series_terms == 1 && n1 > 0.0 {
            capped = true;
        }

        let weight = self.term_weight(2);
        let (sum_negative, sum_positive) = if terms.is_empty() {
            (None, None)
        } else {
            let mut neg = Table::<1>::zeros(-zmax, dz, nz, nu, Extension::Zero);
            let mut pos = neg.clone();
            for (idx, t) in terms.iter().enumerate() {
                let m = idx + 2;
                let shift = weight - self.term_weight(m);
                let mut scaled = t.clone();
                if shift != 0.0 {
                    scaled.scale_rows(|u| u.powf(shift));
                }
                pos.add_scaled(1.0, &scaled);
                neg.add_scaled(if m % 2 == 0 { 1.0 } else { -1.0 }, &scaled);
            }
            (Some(neg), Some(pos))
        };
        Ok(PhiTables {
            span,
            kscale,
            weight,
            sum_negative,
            sum_positive,
            info: SeriesInfo {
                terms: norms.len(),
                capped,
                term_norms: norms,
            },
        })
    }

    /// `Φ(y,s;ξ,τ)` given `k(y,s)`, `k(ξ,τ)` and `s − τ`.
    #[inline]
    fn phi_with(&self, tables: &PhiTables, sign: f64, y: f64, xi: f64, ky: f64, kxi: f64, gap: f64) -> f64 {
        let first = sign * self.k1(ky, kxi, y - xi, gap);
        let sum = if sign < 0.0 {
            &tables.sum_negative
        } else {
            &tables.sum_positive
        };
        match sum {
            None => first,
            Some(t) => {
                let z = (y - xi) / gap.sqrt();
                let u = (gap / tables.span).sqrt();
                first + t.interp(z, u)[0] * (-z * z * tables.kscale).exp() * u.powf(-tables.weight)
            }
        }
    }

    pub fn phi_eval(&self, y: f64, s: f64, xi: f64, tau: f64) -> Result<f64> {
        self.check_target(s, tau)?;
        if self.is_trivial() {
            return Ok(0.0);
        }
        let tables = self.tables(xi, tau)?;
        let (ky, kxi) = (self.field.evaluate(y, s), self.field.evaluate(xi, tau));
        Ok(self.phi_with(&tables, self.sign, y, xi, ky, kxi, s - tau))
    }

    /// Truncation record of the series for source `(ξ, τ)`.
    pub fn series_info(&self, xi: f64, tau: f64) -> Result<SeriesInfo> {
        Ok(self.tables(xi, tau)?.info.clone())
    }

    fn gamma_pair_signed(&self, sign: f64, x: f64, t: f64, xi: f64, tau: f64) -> Result<(f64, f64)> {
        self.check_target(t, tau)?;
        let kxi = self.field.evaluate(xi, tau);
        let (h, hx) = heat_dx(x - xi, t - tau, kxi);
        if self.is_trivial() {
            return Ok((h, hx));
        }
        let tables = self.tables(xi, tau)?;
        let q = &self.quadrature;
        let corr = integrate_time::<2>(tau, t, self.kernel_exponent(), 0.5, q, |node| {
            let w = self.window(x, node.until).intersect(self.window(xi, node.since));
            if w.is_empty() {
                return [0.0; 2];
            }
            integrate_space::<2>(w.lo, w.hi, w.resolution, &self.features, &self.breaks, q, |y| {
                let ky = self.field.evaluate(y, node.s);
                let phi = self.phi_with(&tables, sign, y, xi, ky, kxi, node.since);
                let (g, gx) = heat_dx(x - y, node.until, ky);
                [g * phi, gx * phi]
            })
        });
        Ok((h + corr[0], hx + corr[1]))
    }

    /// `(Γ, Γ_x)` at `(x, t)` for source `(ξ, τ)`.
    pub fn gamma_pair(&self, x: f64, t: f64, xi: f64, tau: f64) -> Result<(f64, f64)> {
        self.gamma_pair_signed(self.sign, x, t, xi, tau)
    }

    pub fn gamma_eval(&self, x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
        Ok(self.gamma_pair(x, t, xi, tau)?.0)
    }

    pub fn gamma_dx_eval(&self, x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
        Ok(self.gamma_pair(x, t, xi, tau)?.1)
    }

    fn residual_signed(&self, sign: f64, x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
        let dt = t - tau;
        let hx = 0.02 * dt.sqrt();
        let ht = 0.02 * dt;
        let g = |x: f64, t: f64| self.gamma_pair_signed(sign, x, t, xi, tau).map(|p| p.0);
        let g0 = g(x, t)?;
        let gxx = (g(x + hx, t)? - 2.0 * g0 + g(x - hx, t)?) / (hx * hx);
        let gt = (g(x, t + ht)? - g(x, t - ht)?) / (2.0 * ht);
        Ok(gt - self.field.evaluate(x, t) * gxx + self.gamma * g0)
    }

    /// Finite-difference residual `Γ_t − kΓ_xx + γΓ` at `(x, t)`; needs
    /// `t + 0.02(t − τ) ≤ horizon`.
    pub fn pde_residual(&self, x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
        self.residual_signed(self.sign, x, t, xi, tau)
    }

    /// Same residual for the bare parametrix `H`, which is exactly `K₁(x,t;ξ,τ)`.
    pub fn parametrix_residual(&self, x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
        self.lh_kernel(x, t, xi, tau)
    }

    /// Location where `|k_x(·, 0)|` peaks, on a coarse scan.
    fn steepest_point(&self) -> f64 {
        let mut best = (0.0, 0.0);
        for i in 0..=2000 {
            let x = -10.0 + 0.01 * i as f64;
            let d = self.field.evaluate_dx(x, 0.0).abs();
            if d > best.1 {
                best = (x, d);
            }
        }
        best.0
    }

    fn calibrate_sign(&self) -> Result<f64> {
        if self.is_trivial() {
            return Ok(-1.0);
        }
        let delta = 0.25 * self.horizon.min(0.5);
        let probe = GammaEvaluator {
            field: self.field.clone(),
            gamma: self.gamma,
            horizon: 1.05 * delta,
            config: ParametrixConfig {
                max_series_terms: self.config.max_series_terms.min(4),
                z_nodes: 65,
                u_nodes: 12,
                sign: PhiSign::Negative,
                ..self.config
            },
            quadrature: self.quadrature,
            sign: -1.0,
            breaks: self.breaks.clone(),
            features: self.features.clone(),
            cache: Mutex::new(HashMap::new()),
        };
        let xi = self.steepest_point();
        let spread = (2.0 * self.field.k_upper() * delta).sqrt();
        let mut totals = [0.0; 2];
        for (k, sign) in [-1.0, 1.0].into_iter().enumerate() {
            for c in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                totals[k] += probe.residual_signed(sign, xi + c * spread, delta, xi, 0.0)?.abs();
            }
        }
        Ok(if totals[1] < totals[0] { 1.0 } else { -1.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::FrozenKernel;

    #[test]
    fn lh_kernel_reduces_for_constant_coefficient() {
        let f = CoefficientField::constant(1.3).unwrap();
        let ev = GammaEvaluator::new(f.clone(), 0.0, 1.0, ParametrixConfig::default(), QuadratureConfig::default()).unwrap();
        assert_eq!(ev.lh_kernel(0.3, 0.5, 0.0, 0.1).unwrap(), 0.0);
        let ev = GammaEvaluator::new(f, 0.7, 1.0, ParametrixConfig::default(), QuadratureConfig::default()).unwrap();
        let h = FrozenKernel::new(0.0, 0.1, 1.3).unwrap().h_eval(0.3, 0.5).unwrap();
        assert!((ev.lh_kernel(0.3, 0.5, 0.0, 0.1).unwrap() - 0.7 * h).abs() < 1e-15);
        assert!(ev.lh_kernel(0.3, 0.1, 0.0, 0.1).is_err());
    }

    #[test]
    fn lh_kernel_recomposes_from_parts() {
        let f = CoefficientField::smoothstep(0.0, 1.0, 0.5, 2.0).unwrap();
        let cfg = ParametrixConfig {
            sign: PhiSign::Negative,
            ..Default::default()
        };
        let ev = GammaEvaluator::new(f.clone(), 0.0, 1.0, cfg, QuadratureConfig::default()).unwrap();
        let (y, s, xi, tau) = (0.2, 0.3, -0.1, 0.05);
        let kern = FrozenKernel::from_field(&f, xi, tau);
        let expect = (f.evaluate(xi, tau) - f.evaluate(y, s)) * kern.h_dxx(y, s).unwrap();
        assert!((ev.lh_kernel(y, s, xi, tau).unwrap() - expect).abs() < 1e-14 * expect.abs());
    }

    #[test]
    fn trivial_series_gives_heat_kernel() {
        let f = CoefficientField::constant(1.0).unwrap();
        let ev = GammaEvaluator::new(f, 0.0, 1.0, ParametrixConfig::default(), QuadratureConfig::default()).unwrap();
        assert_eq!(ev.phi_eval(0.1, 0.5, 0.0, 0.0).unwrap(), 0.0);
        let g = ev.gamma_eval(0.4, 0.3, 0.1, 0.0).unwrap();
        assert_eq!(g, heat(0.3, 0.3, 1.0));
    }

    #[test]
    fn constant_gamma_closed_form() {
        let f = CoefficientField::constant(1.0).unwrap();
        let cfg = ParametrixConfig {
            max_series_terms: 12,
            ..Default::default()
        };
        let ev = GammaEvaluator::new(f, 1.0, 0.5, cfg, QuadratureConfig::default()).unwrap();
        assert_eq!(ev.sign(), -1.0);
        for &(x, t) in &[(0.1, 0.5), (0.5, 0.2), (-0.3, 0.01)] {
            let g = ev.gamma_eval(x, t, 0.0, 0.0).unwrap();
            let exact = (-t).exp() * heat(x, t, 1.0);
            assert!(((g - exact) / exact).abs() < 1e-5, "({x},{t}): {g} vs {exact}");
            let phi = ev.phi_eval(x, t, 0.0, 0.0).unwrap();
            let phi_exact = -(-t).exp() * heat(x, t, 1.0);
            assert!(((phi - phi_exact) / phi_exact).abs() < 1e-5, "phi ({x},{t}): {phi} vs {phi_exact}");
        }
    }

    #[test]
    fn fit_recovers_heat_kernel_constants() {
        let k = 1.5;
        let mut samples = Vec::new();
        for i in 0..20 {
            for j in 0..10 {
                let dt = 0.01 + 0.05 * j as f64;
                let dx = -2.0 + 0.2 * i as f64;
                samples.push(BoundSample {
                    dx,
                    dt,
                    value: heat(dx, dt, k),
                });
            }
        }
        let fit = fit_gaussian_bound(&samples, 0.5, k).unwrap();
        assert_eq!(fit.violations, 0);
        assert!((fit.c - 1.0 / (4.0 * std::f64::consts::PI * k).sqrt()).abs() < 1e-12);
        assert!((fit.d - 0.5 / k).abs() < 1e-12);
        let zeros: Vec<_> = samples.iter().map(|s| BoundSample { value: 0.0, ..*s }).collect();
        let z = fit_gaussian_bound(&zeros, 0.5, k).unwrap();
        assert_eq!((z.c, z.violations), (0.0, 0));
        assert!(fit_gaussian_bound(&[], 0.5, k).is_err());
        let bad = [BoundSample {
            dx: 0.0,
            dt: 0.1,
            value: f64::NAN,
        }];
        assert_eq!(fit_gaussian_bound(&bad, 0.5, k).unwrap().violations, 1);
    }
}
