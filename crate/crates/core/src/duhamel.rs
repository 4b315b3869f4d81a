//! Duhamel assembly `w = W + W_G + W_f` and its `x`-derivative.
//!
//! Instead of evaluating `Γ` per source point, the `Φ` part of every term is
//! pushed onto the data: with `V[d](x,t) = ∫₀ᵗ∫ H^{y,s}(x,t) d(y,s) dy ds`,
//!
//! ```text
//! W   = ∫ H^{ξ,0}(x,t) w₀(ξ) dξ + V[δ₀],   δ₀ = ∫ Φ(·;ξ,0) w₀(ξ) dξ
//! W_q = V[q] + V[δ_q],                    δ_q = ∫∫ Φ(·;ξ,τ) q(ξ,τ) dξ dτ
//! ```
//!
//! and the densities `δ` satisfy the same iterated-kernel series as `Φ`, so
//! they are tabulated once per problem.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::data::{Forcing, GMode, GTerm, InitialDatum};
use crate::error::{Error, Result};
use crate::kernel::heat_dx;
use crate::parametrix::{GammaEvaluator, SeriesInfo};
use crate::quadrature::{integrate_space, integrate_time, Feature};
use crate::table::{Extension, Table};

/// Cauchy problem `w_t − k w_xx + γw = f + G`, `w(·,0) = w₀`, truncated to `[−L, L]`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub field: CoefficientField,
    pub gamma: f64,
    pub forcing: Forcing,
    pub g_mode: GMode,
    pub initial: InitialDatum,
    pub horizon: f64,
    pub halfwidth: f64,
    g: GTerm,
}

/// Data tails allowed at `±L`, relative to the data's size.
const TAIL_TOL: f64 = 1e-8;

impl ProblemSpec {
    pub fn new(
        field: CoefficientField,
        gamma: f64,
        forcing: Forcing,
        g_mode: GMode,
        initial: InitialDatum,
        horizon: f64,
        halfwidth: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
        }
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("halfwidth {halfwidth} must be positive")));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be finite".into()));
        }
        let scale = initial.sup_norm(halfwidth);
        for x in [-halfwidth, halfwidth] {
            if initial.eval(x).abs() > TAIL_TOL * scale.max(1e-300) || initial.deriv(x).abs() > TAIL_TOL * scale.max(1e-300) {
                return Err(Error::SupportOutsideGrid(format!(
                    "initial datum does not decay at x = {x}: w0 = {:e}",
                    initial.eval(x)
                )));
            }
        }
        if let Forcing::Separable { profile, .. } = &forcing {
            profile.validate().map_err(Error::InvalidArgument)?;
            let (a, b) = profile.support();
            let peak = (0..=400)
                .map(|i| profile.eval(a + (b - a) * i as f64 / 400.0).abs())
                .fold(0.0, f64::max);
            for x in [-halfwidth, halfwidth] {
                if profile.eval(x).abs() > TAIL_TOL * peak {
                    return Err(Error::SupportOutsideGrid(format!("forcing does not decay at x = {x}")));
                }
            }
        }
        let g = match g_mode {
            GMode::FromF => GTerm::from_forcing(&forcing, -halfwidth),
            GMode::Zero => GTerm::Zero,
        };
        Ok(Self {
            field,
            gamma,
            forcing,
            g_mode,
            initial,
            horizon,
            halfwidth,
            g,
        })
    }

    /// Same problem with another forcing; `G` is rebuilt from it.
    pub fn with_forcing(&self, forcing: Forcing) -> Result<Self> {
        Self::new(
            self.field.clone(),
            self.gamma,
            forcing,
            self.g_mode,
            self.initial.clone(),
            self.horizon,
            self.halfwidth,
        )
    }

    pub fn g_term(&self) -> &GTerm {
        &self.g
    }

    /// `f + G` at `(x, t)`.
    #[inline]
    pub fn source(&self, x: f64, t: f64) -> f64 {
        self.forcing.eval(x, t) + self.g.eval(x, t)
    }

    fn data_breaks(&self) -> Vec<f64> {
        let mut b = self.forcing.breakpoints();
        b.extend(self.g.breakpoints());
        b.extend(self.initial.breakpoints());
        b
    }

    fn data_features(&self) -> Vec<Feature> {
        let mut f = self.forcing.features();
        f.extend(self.g.features());
        f.extend(self.initial.features());
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelConfig {
    /// Node spacing of the density tables in `x`.
    pub density_spacing: f64,
    pub density_u_nodes: usize,
    /// Overrides the evaluator's `max_series_terms` for the densities.
    pub max_density_terms: Option<usize>,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        Self {
            density_spacing: 0.05,
            density_u_nodes: 24,
            max_density_terms: None,
        }
    }
}

/// Term decomposition at one node.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Terms {
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "W_G")]
    pub w_g: f64,
    #[serde(rename = "W_f")]
    pub w_f: f64,
    #[serde(rename = "W_x")]
    pub w_x: f64,
    #[serde(rename = "W_Gx")]
    pub w_gx: f64,
    #[serde(rename = "W_fx")]
    pub w_fx: f64,
}

impl Terms {
    pub fn value(&self) -> f64 {
        self.w + self.w_g + self.w_f
    }

    pub fn dx(&self) -> f64 {
        self.w_x + self.w_gx + self.w_fx
    }
}

/// Which forcing term to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    F,
    G,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl Grid {
    /// `nx` points on `[x0, x1]` and `nt` points on `[t0, t1]`, endpoints included.
    pub fn uniform(x0: f64, x1: f64, nx: usize, t0: f64, t1: f64, nt: usize) -> Result<Self> {
        if nx < 2 || nt < 1 || !(x1 > x0) || !(t1 >= t0) {
            return Err(Error::InvalidArgument(format!(
                "degenerate grid [{x0}, {x1}]x{nx} by [{t0}, {t1}]x{nt}"
            )));
        }
        let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![b];
            }
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        };
        Ok(Self {
            xs: lin(x0, x1, nx),
            ts: lin(t0, t1, nt),
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples of `w`, `w_x` on a grid, time-major: index `j·nx + i` for `(x_i, t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub grid: Grid,
    pub w: Vec<f64>,
    pub w_x: Vec<f64>,
    pub terms: Option<Vec<Terms>>,
}

impl SolutionField {
    pub fn nx(&self) -> usize {
        self.grid.xs.len()
    }

    pub fn nt(&self) -> usize {
        self.grid.ts.len()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn w_at(&self, i: usize, j: usize) -> f64 {
        self.w[self.index(i, j)]
    }

    /// Row of values at time index `j`.
    pub fn row(&self, values: &[f64], j: usize) -> Vec<f64> {
        values[j * self.nx()..(j + 1) * self.nx()].to_vec()
    }

    /// Column of values at space index `i`.
    pub fn column(&self, values: &[f64], i: usize) -> Vec<f64> {
        (0..self.nt()).map(|j| values[self.index(i, j)]).collect()
    }

    /// Cubic Lagrange interpolation of `w` (or `w_x`) in both directions.
    pub fn interpolate(&self, values: &[f64], x: f64, t: f64) -> Result<f64> {
        let (xs, ts) = (&self.grid.xs, &self.grid.ts);
        let out = |c: f64, v: &[f64]| c < v[0] - 1e-12 || c > v[v.len() - 1] + 1e-12;
        if out(x, xs) || out(t, ts) {
            return Err(Error::SupportOutsideGrid(format!("({x}, {t}) outside the sampled grid")));
        }
        let weights = |c: f64, v: &[f64]| -> (usize, Vec<f64>) {
            let n = v.len();
            let m = n.min(4);
            let k = v.partition_point(|&p| p <= c).saturating_sub(1);
            let i0 = k.saturating_sub((m - 1) / 2).min(n - m);
            let nodes = &v[i0..i0 + m];
            let w = (0..m)
                .map(|a| {
                    (0..m)
                        .filter(|&b| b != a)
                        .map(|b| (c - nodes[b]) / (nodes[a] - nodes[b]))
                        .product()
                })
                .collect();
            (i0, w)
        };
        let (ix, wx) = weights(x, xs);
        let (it, wt) = weights(t, ts);
        let mut acc = 0.0;
        for (b, wb) in wt.iter().enumerate() {
            for (a, wa) in wx.iter().enumerate() {
                acc += wa * wb * values[self.index(ix + a, it + b)];
            }
        }
        Ok(acc)
    }

    /// CSV with columns `x,t,w,w_x` plus the six term columns when available.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["x", "t", "w", "w_x"];
        if self.terms.is_some() {
            header.extend(["W", "W_G", "W_f", "W_x", "W_Gx", "W_fx"]);
        }
        wr.write_record(&header)?;
        for j in 0..self.nt() {
            for i in 0..self.nx() {
                let n = self.index(i, j);
                let mut rec = vec![self.grid.xs[i], self.grid.ts[j], self.w[n], self.w_x[n]];
                if let Some(terms) = &self.terms {
                    let tm = terms[n];
                    rec.extend([tm.w, tm.w_g, tm.w_f, tm.w_x, tm.w_gx, tm.w_fx]);
                }
                wr.write_record(rec.iter().map(|v| format!("{v:e}")))?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Assembles Duhamel terms for one problem. Densities are built on construction.
pub struct DuhamelSolver {
    ev: Arc<GammaEvaluator>,
    spec: Arc<ProblemSpec>,
    config: DuhamelConfig,
    densities: Option<Table<3>>,
    density_info: SeriesInfo,
    /// Time weight of stored densities, `u^{2−β}·δ`.
    weight: f64,
    breaks: Vec<f64>,
    features: Vec<Feature>,
}

impl std::fmt::Debug for DuhamelSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DuhamelSolver")
            .field("evaluator", &self.ev)
            .field("spec", &self.spec)
            .field("density_info", &self.density_info)
            .finish()
    }
}

impl DuhamelSolver {
    pub fn new(ev: Arc<GammaEvaluator>, spec: Arc<ProblemSpec>, config: DuhamelConfig) -> Result<Self> {
        if ev.horizon() < spec.horizon * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "evaluator horizon {} is shorter than the problem's {}",
                ev.horizon(),
                spec.horizon
            )));
        }
        if ev.gamma() != spec.gamma {
            return Err(Error::InvalidArgument("evaluator and problem disagree on gamma".into()));
        }
        for i in 0..=8 {
            let x = -spec.halfwidth + spec.halfwidth * i as f64 / 4.0;
            let t = spec.horizon * i as f64 / 8.0;
            if ev.field().evaluate(x, t) != spec.field.evaluate(x, t) {
                return Err(Error::InvalidArgument(format!(
                    "evaluator and problem disagree on k at ({x}, {t})"
                )));
            }
        }
        if !(config.density_spacing > 0.0) || config.density_u_nodes < 6 {
            return Err(Error::InvalidArgument("density tables need positive spacing and >= 6 u-nodes".into()));
        }
        let mut breaks = ev.breaks().to_vec();
        breaks.extend(spec.data_breaks());
        let mut features = ev.features().to_vec();
        features.extend(spec.data_features());
        let mut solver = Self {
            weight: 2.0 - ev.field().holder_exponent(),
            ev,
            spec,
            config,
            densities: None,
            density_info: SeriesInfo {
                terms: 0,
                capped: false,
                term_norms: vec![],
            },
            breaks,
            features,
        };
        solver.build_densities()?;
        Ok(solver)
    }

    pub fn evaluator(&self) -> &GammaEvaluator {
        &self.ev
    }

    /// Handle for building further solvers on the same kernel.
    pub fn evaluator_arc(&self) -> Arc<GammaEvaluator> {
        self.ev.clone()
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    /// Truncation record of the density series; empty when `Φ ≡ 0`.
    pub fn density_info(&self) -> &SeriesInfo {
        &self.density_info
    }

    fn build_densities(&mut self) -> Result<()> {
        let spec = &*self.spec;
        let ev = &*self.ev;
        let no_data = spec.initial.is_zero() && spec.forcing.is_zero() && spec.g.is_zero();
        if ev.is_trivial() || no_data {
            return Ok(());
        }
        let l = spec.halfwidth;
        let na = ((2.0 * l / self.config.density_spacing).ceil() as usize + 1).max(8);
        let da = 2.0 * l / (na - 1) as f64;
        let nu = self.config.density_u_nodes;
        let span = spec.horizon;
        let sign = ev.sign();
        let p1 = ev.kernel_exponent();
        let beta = ev.field().holder_exponent();
        let q = ev.quadrature();
        let field = ev.field();
        let (breaks, features) = (&self.breaks, &self.features);
        let weight = self.weight;
        let w0_support = spec.initial.support();
        let q_lo = spec.forcing.support().map(|s| s.0).unwrap_or(-l).max(-l);
        let q_hi = if spec.g.is_zero() {
            spec.forcing.support().map(|s| s.1).unwrap_or(l)
        } else {
            f64::INFINITY
        };

        // first term: K₁ applied to the data
        let first = Table::<3>::try_from_fn(-l, da, na, nu, Extension::Clamp, |y, u| {
            let s = span * u * u;
            let ky = field.evaluate(y, s);
            let mut a0 = 0.0;
            if let Some((lo, hi)) = w0_support {
                let w = ev.window(y, s);
                let (lo, hi) = (w.lo.max(lo), w.hi.min(hi));
                a0 = integrate_space::<1>(lo, hi, w.resolution, features, breaks, q, |xi| {
                    [ev.k1(ky, field.evaluate(xi, 0.0), y - xi, s) * spec.initial.eval(xi)]
                })[0];
            }
            let fq = if spec.forcing.is_zero() && spec.g.is_zero() {
                [0.0; 2]
            } else {
                integrate_time::<2>(0.0, s, 0.0, p1, q, |node| {
                    let w = ev.window(y, node.until);
                    let (lo, hi) = (w.lo.max(q_lo), w.hi.min(q_hi));
                    integrate_space::<2>(lo, hi, w.resolution, features, breaks, q, |eta| {
                        let k1 = ev.k1(ky, field.evaluate(eta, node.s), y - eta, node.until);
                        [k1 * spec.forcing.eval(eta, node.s), k1 * spec.g.eval(eta, node.s)]
                    })
                })
            };
            let c = sign * u.powf(weight);
            Ok([c * a0, c * fq[0], c * fq[1]])
        })?;

        let max_terms = self.config.max_density_terms.unwrap_or(ev.config().max_series_terms);
        let n1 = first.sup_norm();
        let mut norms = vec![n1];
        let mut total = first.clone();
        let mut prev = first;
        let mut capped = max_terms == 1 && n1 > 0.0;
        let p_lower = if field.is_constant() { 0.0 } else { 1.0 - 0.5 * beta };
        for m in 1..max_terms {
            if n1 == 0.0 {
                break;
            }
            let src = &prev;
            let next = Table::<3>::try_from_fn(-l, da, na, nu, Extension::Clamp, |y, u| {
                let s = span * u * u;
                let ky = field.evaluate(y, s);
                let v = integrate_time::<3>(0.0, s, p_lower, p1, q, |node| {
                    let w = ev.window(y, node.until);
                    let us = (node.s / span).sqrt();
                    let inv = us.powf(-weight);
                    integrate_space::<3>(w.lo, w.hi, w.resolution, features, breaks, q, |eta| {
                        let k1 = ev.k1(ky, field.evaluate(eta, node.s), y - eta, node.until);
                        let d = src.interp(eta, us);
                        [k1 * d[0] * inv, k1 * d[1] * inv, k1 * d[2] * inv]
                    })
                });
                let c = sign * u.powf(weight);
                Ok([c * v[0], c * v[1], c * v[2]])
            })?;
            let nm = next.sup_norm();
            norms.push(nm);
            total.add_scaled(1.0, &next);
            prev = next;
            if nm < ev.config().term_tol * n1 {
                break;
            }
            if m + 1 == max_terms {
                capped = true;
            }
        }
        self.density_info = SeriesInfo {
            terms: norms.len(),
            capped,
            term_norms: norms,
        };
        self.densities = Some(total);
        Ok(())
    }

    /// All terms at one node. `t = 0` returns the initial datum.
    pub fn node(&self, x: f64, t: f64) -> Result<Terms> {
        self.node_inner(x, t).map_err(|e| Error::Node {
            x,
            t,
            source: Box::new(e),
        })
    }

    fn node_inner(&self, x: f64, t: f64) -> Result<Terms> {
        let spec = &*self.spec;
        if !(t >= 0.0 && t <= spec.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, {}]", spec.horizon)));
        }
        if t == 0.0 {
            return Ok(Terms {
                w: spec.initial.eval(x),
                w_x: spec.initial.deriv(x),
                ..Default::default()
            });
        }
        let ev = &*self.ev;
        let field = ev.field();
        let q = ev.quadrature();
        let (breaks, features) = (&self.breaks, &self.features);

        let mut p = [0.0; 2];
        if let Some((lo, hi)) = spec.initial.support() {
            let w = ev.window(x, t);
            p = integrate_space::<2>(w.lo.max(lo), w.hi.min(hi), w.resolution, features, breaks, q, |xi| {
                let (h, hx) = heat_dx(x - xi, t, field.evaluate(xi, 0.0));
                let v = spec.initial.eval(xi);
                [h * v, hx * v]
            });
        }

        let has_forcing = !(spec.forcing.is_zero() && spec.g.is_zero());
        if !has_forcing && self.densities.is_none() {
            return Ok(Terms {
                w: p[0],
                w_x: p[1],
                ..Default::default()
            });
        }
        let span = spec.horizon;
        let weight = self.weight;
        let dens = self.densities.as_ref();
        let p_lower = if dens.is_some() { ev.kernel_exponent() } else { 0.0 };
        let v = integrate_time::<10>(0.0, t, p_lower, 0.5, q, |node| {
            let w = ev.window(x, node.until);
            let u = (node.s / span).sqrt();
            let inv = u.powf(-weight);
            integrate_space::<10>(w.lo, w.hi, w.resolution, features, breaks, q, |y| {
                let (h, hx) = heat_dx(x - y, node.until, field.evaluate(y, node.s));
                let f = spec.forcing.eval(y, node.s);
                let g = spec.g.eval(y, node.s);
                let d = match dens {
                    Some(tab) => {
                        let d = tab.interp(y, u);
                        [d[0] * inv, d[1] * inv, d[2] * inv]
                    }
                    None => [0.0; 3],
                };
                [
                    h * f,
                    hx * f,
                    h * g,
                    hx * g,
                    h * d[0],
                    hx * d[0],
                    h * d[1],
                    hx * d[1],
                    h * d[2],
                    hx * d[2],
                ]
            })
        });
        let terms = Terms {
            w: p[0] + v[4],
            w_x: p[1] + v[5],
            w_f: v[0] + v[6],
            w_fx: v[1] + v[7],
            w_g: v[2] + v[8],
            w_gx: v[3] + v[9],
        };
        let all = [terms.w, terms.w_x, terms.w_f, terms.w_fx, terms.w_g, terms.w_gx];
        if let Some(bad) = all.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand {
                location: "Duhamel node".into(),
                value: *bad,
            });
        }
        Ok(terms)
    }

    /// `(W, W_x)`.
    pub fn term_initial(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let tm = self.node(x, t)?;
        Ok((tm.w, tm.w_x))
    }

    /// `(W_f, W_{f,x})` or `(W_G, W_{G,x})`.
    pub fn term_forcing(&self, x: f64, t: f64, which: Source) -> Result<(f64, f64)> {
        let tm = self.node(x, t)?;
        Ok(match which {
            Source::F => (tm.w_f, tm.w_fx),
            Source::G => (tm.w_g, tm.w_gx),
        })
    }

    /// Every node of `grid`, in parallel; the first failing node aborts.
    pub fn solve(&self, grid: &Grid) -> Result<SolutionField> {
        let l = self.spec.halfwidth;
        if let Some(x) = grid.xs.iter().find(|x| x.abs() > l) {
            return Err(Error::SupportOutsideGrid(format!("grid point x = {x} outside [-{l}, {l}]")));
        }
        let nx = grid.xs.len();
        let terms = (0..grid.len())
            .into_par_iter()
            .map(|n| self.node(grid.xs[n % nx], grid.ts[n / nx]))
            .collect::<Result<Vec<_>>>()?;
        Ok(SolutionField {
            grid: grid.clone(),
            w: terms.iter().map(Terms::value).collect(),
            w_x: terms.iter().map(Terms::dx).collect(),
            terms: Some(terms),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Envelope, Profile};
    use crate::parametrix::ParametrixConfig;
    use crate::quadrature::QuadratureConfig;

    fn solver(field: CoefficientField, gamma: f64, forcing: Forcing, initial: InitialDatum, g: GMode) -> DuhamelSolver {
        let spec = ProblemSpec::new(field.clone(), gamma, forcing, g, initial, 0.5, 5.0).unwrap();
        let ev = GammaEvaluator::new(field, gamma, 0.5, ParametrixConfig::default(), QuadratureConfig::default()).unwrap();
        DuhamelSolver::new(Arc::new(ev), Arc::new(spec), DuhamelConfig::default()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let s = solver(
            CoefficientField::smoothstep(0.0, 1.0, 0.5, 2.0).unwrap(),
            0.3,
            Forcing::Zero,
            InitialDatum::Zero,
            GMode::FromF,
        );
        let tm = s.node(0.3, 0.2).unwrap();
        assert_eq!(tm, Terms::default());
    }

    #[test]
    fn gaussian_spreads_exactly_for_unit_coefficient() {
        let sigma: f64 = 0.4;
        let s = solver(
            CoefficientField::constant(1.0).unwrap(),
            0.0,
            Forcing::Zero,
            InitialDatum::Gaussian {
                amp: 1.0,
                center: 0.0,
                sigma,
            },
            GMode::Zero,
        );
        for &(x, t) in &[(0.0, 0.1), (0.7, 0.3), (-1.5, 0.5), (0.2, 1e-4)] {
            let var: f64 = sigma * sigma + 2.0 * t;
            let exact = sigma / var.sqrt() * (-x * x / (2.0 * var)).exp();
            let (w, wx) = s.term_initial(x, t).unwrap();
            assert!((w - exact).abs() < 1e-9, "({x},{t}) {w} vs {exact}");
            assert!((wx + x / var * exact).abs() < 1e-8);
        }
        assert_eq!(s.node(0.3, 0.0).unwrap().w, (-0.09f64 / 0.32).exp());
    }

    #[test]
    fn unit_source_gives_elapsed_time() {
        let s = solver(
            CoefficientField::constant(1.0).unwrap(),
            0.0,
            Forcing::custom(|_, _| 1.0),
            InitialDatum::Zero,
            GMode::Zero,
        );
        for t in [0.05, 0.3] {
            let (v, dv) = s.term_forcing(0.0, t, Source::F).unwrap();
            assert!((v - t).abs() < 1e-9, "{v} vs {t}");
            assert!(dv.abs() < 1e-12);
        }
    }

    #[test]
    fn node_errors_carry_coordinates() {
        let s = solver(
            CoefficientField::constant(1.0).unwrap(),
            0.0,
            Forcing::Zero,
            InitialDatum::Zero,
            GMode::Zero,
        );
        match s.node(0.1, 0.9) {
            Err(Error::Node { x, t, .. }) => assert_eq!((x, t), (0.1, 0.9)),
            other => panic!("{other:?}"),
        }
        let grid = Grid::uniform(-6.0, 0.0, 3, 0.1, 0.2, 2).unwrap();
        assert!(s.solve(&grid).is_err());
    }

    #[test]
    fn csv_has_term_columns() {
        let s = solver(
            CoefficientField::constant(1.0).unwrap(),
            0.5,
            Forcing::Separable {
                profile: Profile::Gaussian {
                    amp: 1.0,
                    center: 0.0,
                    width: 0.5,
                },
                envelope: Envelope::constant(1.0),
            },
            InitialDatum::Zero,
            GMode::FromF,
        );
        let field = s.solve(&Grid::uniform(-1.0, 1.0, 3, 0.1, 0.2, 2).unwrap()).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,t,w,w_x,W,W_G,W_f,W_x,W_Gx,W_fx");
        assert_eq!(lines.len(), 7);
        let tm = field.terms.as_ref().unwrap()[4];
        assert!((field.w[4] - (tm.w + tm.w_g + tm.w_f)).abs() == 0.0);
    }

    #[test]
    fn initial_tail_is_checked() {
        let r = ProblemSpec::new(
            CoefficientField::constant(1.0).unwrap(),
            0.0,
            Forcing::Zero,
            GMode::Zero,
            InitialDatum::Gaussian {
                amp: 1.0,
                center: 0.0,
                sigma: 2.0,
            },
            0.5,
            3.0,
        );
        assert!(matches!(r, Err(Error::SupportOutsideGrid(_))));
    }
}
