//! Spatial mollification of the forcing and the `ε → 0` convergence study.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_g, CustomForcing, Forcing, Profile, TabulatedProfile};
use crate::duhamel::{DuhamelConfig, DuhamelSolver, Grid, ProblemSpec};
use crate::error::{Error, Result};
use crate::parametrix::GammaEvaluator;
use crate::quadrature::{integrate_space, integrate_time, Feature, QuadratureConfig};

/// `∫_{−1}^{1} exp(−1/(1 − z²)) dz`.
pub const BUMP_MASS: f64 = 0.443_993_816_168_079_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierConfig {
    pub epsilon: f64,
}

impl MollifierConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be positive")));
        }
        Ok(Self { epsilon })
    }

    /// `ρ_ε(z) = ρ(z/ε)/ε`.
    #[inline]
    pub fn rho(&self, z: f64) -> f64 {
        let s = z / self.epsilon;
        if s.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s * s)).exp() / (BUMP_MASS * self.epsilon)
        }
    }

    fn quadrature() -> QuadratureConfig {
        QuadratureConfig {
            space_points: 16,
            ..Default::default()
        }
    }

    /// `∫ρ_ε(x − z) g(z) dz`, panels cut at `breaks`.
    pub fn convolve(&self, g: impl Fn(f64) -> f64, x: f64, breaks: &[f64]) -> f64 {
        let e = self.epsilon;
        integrate_space::<1>(x - e, x + e, 0.05 * e, &[], breaks, &Self::quadrature(), |z| [self.rho(x - z) * g(z)])[0]
    }

    /// `∫ρ_ε`, by quadrature.
    pub fn mass(&self) -> f64 {
        self.convolve(|_| 1.0, 0.0, &[])
    }
}

/// `f^ε(x,t) = ∫ρ_ε(x − z) f(z,t) dz`, in `x` only. Separable forcings are
/// tabulated once; closure forcings convolve on every call.
pub fn mollify_f(f: &Forcing, cfg: &MollifierConfig) -> Forcing {
    let e = cfg.epsilon;
    match f {
        Forcing::Zero => Forcing::Zero,
        Forcing::Separable { profile, envelope } => {
            let (a, b) = profile.support();
            let (x0, x1) = (a - e, b + e);
            let dx = e / 40.0;
            let n = ((x1 - x0) / dx).ceil() as usize + 1;
            let breaks = profile.breakpoints();
            let values: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| cfg.convolve(|z| profile.eval(z), x0 + i as f64 * dx, &breaks))
                .collect();
            let scale = match profile {
                Profile::Gaussian { width, .. } => 0.5 * width,
                _ => 0.25 * e,
            };
            Forcing::Separable {
                profile: Profile::Table(TabulatedProfile {
                    x0,
                    dx,
                    values: Arc::new(values),
                    scale,
                }),
                envelope: *envelope,
            }
        }
        Forcing::Custom(c) => {
            let inner = f.clone();
            let breaks = c.breaks.clone();
            let cfg = *cfg;
            let features = c
                .features
                .iter()
                .map(|ft| Feature {
                    lo: ft.lo - e,
                    hi: ft.hi + e,
                    scale: ft.scale.max(0.25 * e),
                })
                .chain(breaks.iter().map(|&b| Feature {
                    lo: b - e,
                    hi: b + e,
                    scale: 0.25 * e,
                }))
                .collect();
            Forcing::Custom(CustomForcing {
                f: Arc::new(move |x, t| cfg.convolve(|z| inner.eval(z, t), x, &breaks)),
                breaks: Vec::new(),
                features,
                support: c.support.map(|(a, b)| (a - e, b + e)),
            })
        }
    }
}

/// `G^ε(x,t) = ∫_{−L}^x (f^ε)²`.
pub fn build_g_eps(f: &Forcing, cfg: &MollifierConfig, lower: f64, x: f64, t: f64) -> f64 {
    build_g(&mollify_f(f, cfg), lower, x, t)
}

/// `‖a − b‖` in `L²([−L, L] × [0, T])`.
pub fn forcing_l2_gap(a: &Forcing, b: &Forcing, halfwidth: f64, horizon: f64) -> f64 {
    let mut breaks = a.breakpoints();
    breaks.extend(b.breakpoints());
    let mut features = a.features();
    features.extend(b.features());
    let cfg = QuadratureConfig {
        space_points: 12,
        ..Default::default()
    };
    let v = integrate_time::<1>(0.0, horizon, 0.0, 0.0, &cfg, |node| {
        integrate_space::<1>(-halfwidth, halfwidth, 0.1, &features, &breaks, &cfg, |x| {
            let d = a.eval(x, node.s) - b.eval(x, node.s);
            [d * d]
        })
    })[0];
    v.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MollifyRow {
    pub epsilon: f64,
    /// `‖f^ε − f‖` in `L²`.
    pub data_l2_gap: f64,
    /// `‖w^ε − w^{ε_prev}‖_∞` on the grid; NaN for the first row.
    pub solution_sup_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MollifyReport {
    pub rows: Vec<MollifyRow>,
}

impl MollifyReport {
    fn gaps(&self) -> Vec<f64> {
        self.rows.iter().skip(1).map(|r| r.solution_sup_gap).collect()
    }

    /// Solution increments strictly decrease; identical solutions (all gaps
    /// zero) count as Cauchy.
    pub fn is_cauchy(&self) -> bool {
        self.flagged().is_empty()
    }

    /// Indices of rows whose increment fails to decrease.
    pub fn flagged(&self) -> Vec<usize> {
        let g = self.gaps();
        (1..g.len())
            .filter(|&i| !(g[i] < g[i - 1] || (g[i] == 0.0 && g[i - 1] == 0.0)))
            .map(|i| i + 1)
            .collect()
    }

    /// Last increment over the first.
    pub fn contraction(&self) -> f64 {
        let g = self.gaps();
        match (g.first(), g.last()) {
            (Some(a), Some(b)) if *a > 0.0 => b / a,
            _ => 0.0,
        }
    }

    pub fn data_gaps_decrease(&self) -> bool {
        self.rows.windows(2).all(|p| p[1].data_l2_gap < p[0].data_l2_gap)
    }

    /// CSV with columns `epsilon,data_l2_gap,solution_sup_gap`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wr.write_record(["epsilon", "data_l2_gap", "solution_sup_gap"])?;
        for r in &self.rows {
            wr.write_record([r.epsilon, r.data_l2_gap, r.solution_sup_gap].map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Solves with `(f^ε, G^ε)` for each `ε` and reports successive sup-gaps.
pub fn convergence_study(
    ev: Arc<GammaEvaluator>,
    spec: &ProblemSpec,
    epsilons: &[f64],
    grid: &Grid,
    config: DuhamelConfig,
) -> Result<MollifyReport> {
    if epsilons.is_empty() || epsilons.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::InvalidArgument("epsilons must be non-empty and strictly decreasing".into()));
    }
    let solved = epsilons
        .par_iter()
        .map(|&e| {
            let cfg = MollifierConfig::new(e)?;
            let fe = mollify_f(&spec.forcing, &cfg);
            let gap = forcing_l2_gap(&fe, &spec.forcing, spec.halfwidth, spec.horizon);
            let sub = Arc::new(spec.with_forcing(fe)?);
            let solver = DuhamelSolver::new(ev.clone(), sub, config)?;
            Ok((gap, solver.solve(grid)?.w))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = solved
        .iter()
        .enumerate()
        .map(|(i, (gap, w))| MollifyRow {
            epsilon: epsilons[i],
            data_l2_gap: *gap,
            solution_sup_gap: if i == 0 {
                f64::NAN
            } else {
                w.iter().zip(&solved[i - 1].1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            },
        })
        .collect();
    Ok(MollifyReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Envelope;

    fn pulse() -> Forcing {
        Forcing::Separable {
            profile: Profile::RoughPulse {
                amp: 1.0,
                left: -0.6,
                right: 0.4,
                ramp: 0.1,
                exponent: 0.25,
            },
            envelope: Envelope::constant(1.0),
        }
    }

    #[test]
    fn unit_mass_and_support() {
        for e in [0.2, 0.1, 0.05, 0.025, 1e-3] {
            let m = MollifierConfig::new(e).unwrap();
            assert!((m.mass() - 1.0).abs() < 1e-10, "{e}: {}", m.mass());
            assert_eq!(m.rho(e), 0.0);
            assert!(m.rho(0.99 * e) > 0.0);
        }
        assert!(MollifierConfig::new(0.0).is_err());
    }

    #[test]
    fn linear_functions_are_fixed() {
        let m = MollifierConfig::new(0.1).unwrap();
        let f = mollify_f(&Forcing::custom(|x, t| 2.0 * x - 1.0 + t), &m);
        for x in [-1.0, 0.0, 0.37] {
            assert!((f.eval(x, 0.5) - (2.0 * x - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn step_is_smoothed_inside_the_band() {
        let m = MollifierConfig::new(0.1).unwrap();
        let step = CustomForcing {
            f: Arc::new(|x, _| if x > 0.0 { 1.0 } else { 0.0 }),
            breaks: vec![0.0],
            features: vec![],
            support: None,
        };
        let f = mollify_f(&Forcing::Custom(step), &m);
        assert_eq!(f.eval(-0.1, 0.0), 0.0);
        assert!((f.eval(0.1, 0.0) - 1.0).abs() < 1e-12);
        assert!((f.eval(0.0, 0.0) - 0.5).abs() < 1e-12);
        assert!(f.eval(0.05, 0.0) > 0.5 && f.eval(0.05, 0.0) < 1.0);
    }

    #[test]
    fn abs_value_at_origin_vanishes_with_epsilon() {
        // direct quadrature of ∫ρ_ε(z)|z| dz
        let mut prev = f64::INFINITY;
        for e in [0.2, 0.1, 0.05] {
            let m = MollifierConfig::new(e).unwrap();
            let v = m.convolve(|z| z.abs(), 0.0, &[0.0]);
            // ∫|z|ρ = (e^{-1} − E₁(1))/BUMP_MASS for the unit bump
            let oracle = e * ((-1.0f64).exp() - 0.219_383_934_395_520_29) / BUMP_MASS;
            assert!((v - oracle).abs() < 1e-12 && v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn mollified_pulse_gaps_and_g() {
        let f = pulse();
        let mut prev = f64::INFINITY;
        for e in [0.2, 0.1, 0.05, 0.025] {
            let m = MollifierConfig::new(e).unwrap();
            let fe = mollify_f(&f, &m);
            let gap = forcing_l2_gap(&fe, &f, 5.0, 1.0);
            assert!(gap < prev, "{e}: {gap} !< {prev}");
            prev = gap;
            let gt = crate::data::GTerm::from_forcing(&fe, -5.0);
            let mut last = -1.0;
            for i in 0..200 {
                let x = -1.0 + 2.0 * i as f64 / 199.0;
                let g = gt.eval(x, 0.3);
                assert!(g >= last - 1e-12, "{x}: {g} < {last}");
                assert!((g - build_g_eps(&f, &m, -5.0, x, 0.3)).abs() < 1e-6);
                last = g;
            }
            let total = forcing_l2_gap(&fe, &Forcing::Zero, 5.0, 1.0).powi(2);
            assert!(last <= total * (1.0 + 1e-6), "{last} > {total}");
        }
    }

    #[test]
    fn smooth_g_converges_linearly_or_better() {
        let f = Forcing::Separable {
            profile: Profile::Gaussian {
                amp: 1.0,
                center: 0.0,
                width: 0.5,
            },
            envelope: Envelope::constant(1.0),
        };
        let err = |e: f64| {
            let m = MollifierConfig::new(e).unwrap();
            let fe = mollify_f(&f, &m);
            (0..41)
                .map(|i| {
                    let x = -2.0 + 0.1 * i as f64;
                    (build_g(&fe, -5.0, x, 0.0) - build_g(&f, -5.0, x, 0.0)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (err(0.1), err(0.05));
        assert!(b < 0.6 * a, "{a} {b}");
        assert_eq!(build_g_eps(&Forcing::Zero, &MollifierConfig::new(0.1).unwrap(), -5.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn report_flags_non_cauchy_rows() {
        let row = |e, g| MollifyRow {
            epsilon: e,
            data_l2_gap: e,
            solution_sup_gap: g,
        };
        let r = MollifyReport {
            rows: vec![row(0.2, f64::NAN), row(0.1, 1.0), row(0.05, 0.5), row(0.025, 0.6)],
        };
        assert!(!r.is_cauchy());
        assert_eq!(r.flagged(), vec![3]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("epsilon,data_l2_gap,solution_sup_gap\n2e-1,"));
        assert!(s.lines().nth(1).unwrap().ends_with("NaN"));
    }
}
