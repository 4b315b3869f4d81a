//! Independent oracles: a Crank–Nicolson solver and the weak-form residual.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duhamel::{Grid, ProblemSpec, SolutionField};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_space, integrate_time, QuadratureConfig};

/// Uniform finite-difference grid on `[−L, L] × [0, T]` with `nx` cells and `nt` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FDGrid {
    pub halfwidth: f64,
    pub horizon: f64,
    pub nx: usize,
    pub nt: usize,
}

impl FDGrid {
    pub fn new(halfwidth: f64, horizon: f64, nx: usize, nt: usize) -> Result<Self> {
        if nx < 16 || nt < 16 {
            return Err(Error::InvalidArgument(format!("FD grid {nx}x{nt} needs at least 16 cells each way")));
        }
        if !(halfwidth > 0.0 && horizon > 0.0) {
            return Err(Error::InvalidArgument("FD grid needs positive halfwidth and horizon".into()));
        }
        Ok(Self {
            halfwidth,
            horizon,
            nx,
            nt,
        })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.halfwidth / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// `k_max·dt/dx²`, recorded for information only.
    pub fn mesh_ratio(&self, k_upper: f64) -> f64 {
        k_upper * self.dt() / (self.dx() * self.dx())
    }
}

/// Thomas algorithm for `a_i x_{i−1} + b_i x_i + c_i x_{i+1} = d_i`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    let n = d.len();
    let mut beta = b[0];
    if beta == 0.0 {
        return Err(Error::SingularSystem(0));
    }
    d[0] /= beta;
    for i in 1..n {
        scratch[i] = c[i - 1] / beta;
        beta = b[i] - a[i] * scratch[i];
        if beta == 0.0 {
            return Err(Error::SingularSystem(i));
        }
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= scratch[i + 1] * d[i + 1];
    }
    Ok(())
}

/// Crank–Nicolson for `w_t = k w_xx − γw + f + G` with `k` frozen at each
/// slab's midpoint. Boundary values follow the far-field ODE
/// `b' = −γb + (f + G)(±L, t)`, which is homogeneous Dirichlet for decaying
/// data and tracks the non-decaying `G` on the right.
pub fn crank_nicolson_solve(spec: &ProblemSpec, grid: FDGrid) -> Result<SolutionField> {
    let (nx, nt) = (grid.nx, grid.nt);
    let (dx, dt) = (grid.dx(), grid.dt());
    let l = grid.halfwidth;
    let xs: Vec<f64> = (0..=nx).map(|i| -l + i as f64 * dx).collect();
    let ts: Vec<f64> = (0..=nt).map(|n| n as f64 * dt).collect();
    let gamma = spec.gamma;
    let npts = nx + 1;
    let mut w: Vec<f64> = xs.iter().map(|&x| spec.initial.eval(x)).collect();
    let mut out = Vec::with_capacity(npts * (nt + 1));
    out.extend_from_slice(&w);
    let mut src_old: Vec<f64> = xs.iter().map(|&x| spec.source(x, 0.0)).collect();
    let m = nx - 1;
    let (mut a, mut b, mut c, mut d, mut scratch) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for n in 0..nt {
        let t_mid = ts[n] + 0.5 * dt;
        let t_new = ts[n + 1];
        let src_new: Vec<f64> = xs.iter().map(|&x| spec.source(x, t_new)).collect();
        let mut bnd = [0.0; 2];
        for (s, &i) in [0usize, nx].iter().enumerate() {
            bnd[s] = ((1.0 - 0.5 * gamma * dt) * w[i] + 0.5 * dt * (src_old[i] + src_new[i])) / (1.0 + 0.5 * gamma * dt);
        }
        for r in 0..m {
            let i = r + 1;
            let mu = spec.field.evaluate(xs[i], t_mid) * dt / (dx * dx);
            let g = 0.5 * gamma * dt;
            a[r] = -0.5 * mu;
            c[r] = -0.5 * mu;
            b[r] = 1.0 + mu + g;
            d[r] = w[i] + 0.5 * mu * (w[i - 1] - 2.0 * w[i] + w[i + 1]) - g * w[i] + 0.5 * dt * (src_old[i] + src_new[i]);
        }
        d[0] += 0.5 * spec.field.evaluate(xs[1], t_mid) * dt / (dx * dx) * bnd[0];
        d[m - 1] += 0.5 * spec.field.evaluate(xs[nx - 1], t_mid) * dt / (dx * dx) * bnd[1];
        thomas(&a, &b, &c, &mut d, &mut scratch)?;
        w[0] = bnd[0];
        w[nx] = bnd[1];
        w[1..nx].copy_from_slice(&d);
        out.extend_from_slice(&w);
        src_old = src_new;
    }
    let mut w_x = vec![0.0; out.len()];
    for n in 0..=nt {
        let row = &out[n * npts..(n + 1) * npts];
        let dst = &mut w_x[n * npts..(n + 1) * npts];
        dst[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dx);
        dst[nx] = (3.0 * row[nx] - 4.0 * row[nx - 1] + row[nx - 2]) / (2.0 * dx);
        for i in 1..nx {
            dst[i] = (row[i + 1] - row[i - 1]) / (2.0 * dx);
        }
    }
    Ok(SolutionField {
        grid: Grid { xs, ts },
        w: out,
        w_x,
        terms: None,
    })
}

/// Standard bump `exp(−1/(1 − z²))` on `|z| < 1` and its derivative.
#[inline]
fn bump(z: f64) -> (f64, f64) {
    if z.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let s = 1.0 - z * z;
    let b = (-1.0 / s).exp();
    (b, -2.0 * z / (s * s) * b)
}

/// Product of bumps `A·b((x − cx)/rx)·b((t − ct)/rt)` with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub seed: u64,
    pub amp: f64,
    pub cx: f64,
    pub rx: f64,
    pub ct: f64,
    pub rt: f64,
}

impl TestFunction {
    /// Random bump with support inside `x_range × t_range`.
    pub fn random(seed: u64, x_range: (f64, f64), t_range: (f64, f64)) -> Result<Self> {
        let (xl, tl) = (x_range.1 - x_range.0, t_range.1 - t_range.0);
        if !(xl > 0.0 && tl > 0.0) {
            return Err(Error::InvalidArgument("test-function ranges must be non-empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rx = xl * rng.random_range(0.1..0.4);
        let rt = tl * rng.random_range(0.15..0.45);
        Ok(Self {
            seed,
            amp: rng.random_range(0.5..2.0),
            cx: rng.random_range(x_range.0 + rx..x_range.1 - rx),
            rx,
            ct: rng.random_range(t_range.0 + rt..t_range.1 - rt),
            rt,
        })
    }

    /// `(φ, φ_x, φ_t)`.
    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> (f64, f64, f64) {
        let (bx, dbx) = bump((x - self.cx) / self.rx);
        let (bt, dbt) = bump((t - self.ct) / self.rt);
        (
            self.amp * bx * bt,
            self.amp * dbx / self.rx * bt,
            self.amp * bx * dbt / self.rt,
        )
    }

    pub fn support(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.cx - self.rx, self.cx + self.rx),
            (self.ct - self.rt, self.ct + self.rt),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakResidual {
    pub phi_seed: u64,
    /// `∫∫ −φ_t w + (kφ)_x w_x + γφw − (f + G)φ`.
    pub residual: f64,
    /// Sum of the absolute values of the four integrals.
    pub normalization: f64,
}

impl WeakResidual {
    pub fn normalized(&self) -> f64 {
        if self.normalization == 0.0 {
            0.0
        } else {
            self.residual.abs() / self.normalization
        }
    }
}

/// Weak-form residual of a sampled field against one test function. The
/// field is interpolated (bicubic) to Gauss-Legendre nodes on the support of
/// `φ`, so the sharp edges of the bump do not limit the quadrature.
pub fn weak_residual(field: &SolutionField, spec: &ProblemSpec, phi: &TestFunction) -> Result<WeakResidual> {
    let ((x0, x1), (t0, t1)) = phi.support();
    let (xs, ts) = (&field.grid.xs, &field.grid.ts);
    if phi.amp == 0.0 {
        return Ok(WeakResidual {
            phi_seed: phi.seed,
            residual: 0.0,
            normalization: 0.0,
        });
    }
    if x0 < xs[0] || x1 > xs[xs.len() - 1] || t0 < ts[0] || t1 > ts[ts.len() - 1] {
        return Err(Error::SupportOutsideGrid(format!(
            "test function support [{x0}, {x1}]x[{t0}, {t1}] escapes the field grid"
        )));
    }
    let cfg = QuadratureConfig {
        space_points: 12,
        time_points: 12,
        time_panels: 4,
        ..Default::default()
    };
    let mut breaks = spec.forcing.breakpoints();
    breaks.extend(spec.g_term().breakpoints());
    let mut features = spec.forcing.features();
    features.extend(spec.g_term().features());
    let mut failure = None;
    let parts = integrate_time::<4>(t0, t1, 0.0, 0.0, &cfg, |node| {
        let t = node.s;
        integrate_space::<4>(x0, x1, 0.1 * phi.rx, &features, &breaks, &cfg, |x| {
            let (p, px, pt) = phi.eval(x, t);
            if p == 0.0 && px == 0.0 && pt == 0.0 {
                return [0.0; 4];
            }
            let (w, wx) = match (field.interpolate(&field.w, x, t), field.interpolate(&field.w_x, x, t)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    failure.get_or_insert(e);
                    return [0.0; 4];
                }
            };
            let k = spec.field.evaluate(x, t);
            let kx = spec.field.evaluate_dx(x, t);
            [
                -pt * w,
                (kx * p + k * px) * wx,
                spec.gamma * p * w,
                -spec.source(x, t) * p,
            ]
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(WeakResidual {
        phi_seed: phi.seed,
        residual: parts.iter().sum(),
        normalization: parts.iter().map(|v| v.abs()).sum(),
    })
}

/// Residuals for a panel of test functions, in parallel.
pub fn weak_residual_panel(field: &SolutionField, spec: &ProblemSpec, phis: &[TestFunction]) -> Result<Vec<WeakResidual>> {
    phis.par_iter().map(|p| weak_residual(field, spec, p)).collect()
}

/// CSV with columns `phi_seed,residual,normalization`.
pub fn write_residual_csv(rows: &[WeakResidual], out: impl Write) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    wr.write_record(["phi_seed", "residual", "normalization"])?;
    for r in rows {
        wr.write_record([r.phi_seed.to_string(), format!("{:e}", r.residual), format!("{:e}", r.normalization)])?;
    }
    wr.flush()?;
    Ok(())
}

/// `max_x |w(x,t) − w₀(x)|` over `x_panel` for each time in `times`.
pub fn initial_trace_check(
    w: impl Fn(f64, f64) -> Result<f64> + Sync,
    spec: &ProblemSpec,
    times: &[f64],
    x_panel: &[f64],
) -> Result<Vec<f64>> {
    if times.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::InvalidArgument("trace times must decrease toward 0".into()));
    }
    times
        .iter()
        .map(|&t| {
            x_panel
                .par_iter()
                .map(|&x| Ok((w(x, t)? - spec.initial.eval(x)).abs()))
                .collect::<Result<Vec<f64>>>()
                .map(|v| v.into_iter().fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientField;
    use crate::data::{Forcing, GMode, InitialDatum};

    fn gaussian_spec(k: f64) -> ProblemSpec {
        ProblemSpec::new(
            CoefficientField::constant(k).unwrap(),
            0.0,
            Forcing::Zero,
            GMode::Zero,
            InitialDatum::Gaussian {
                amp: 1.0,
                center: 0.0,
                sigma: 0.4,
            },
            0.5,
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn thomas_solves_small_system() {
        let (a, b, c) = ([0.0, 1.0, 1.0], [4.0, 4.0, 4.0], [1.0, 1.0, 0.0]);
        let mut d = [5.0, 6.0, 5.0];
        thomas(&a, &b, &c, &mut d, &mut [0.0; 3]).unwrap();
        for v in d {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let mut d = [1.0, 1.0];
        assert!(thomas(&[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &mut d, &mut [0.0; 2]).is_err());
    }

    #[test]
    fn zero_problem_stays_zero() {
        let spec = ProblemSpec::new(
            CoefficientField::smoothstep(0.0, 1.0, 0.5, 2.0).unwrap(),
            0.5,
            Forcing::Zero,
            GMode::FromF,
            InitialDatum::Zero,
            0.5,
            5.0,
        )
        .unwrap();
        let f = crank_nicolson_solve(&spec, FDGrid::new(5.0, 0.5, 64, 32).unwrap()).unwrap();
        assert!(f.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gaussian_variance_growth() {
        let spec = gaussian_spec(1.0);
        let f = crank_nicolson_solve(&spec, FDGrid::new(5.0, 0.5, 512, 512).unwrap()).unwrap();
        let j = f.nt() - 1;
        let var: f64 = 0.16 + 1.0;
        let mut err: f64 = 0.0;
        for (i, &x) in f.grid.xs.iter().enumerate() {
            let exact = 0.4 / var.sqrt() * (-x * x / (2.0 * var)).exp();
            err = err.max((f.w_at(i, j) - exact).abs());
        }
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn second_order_on_manufactured_solution() {
        // w* = e^{-t} cos(x)·e^{-x²/4} with k = 1 + 0.3 sin(x), γ = 0.5
        let k = |x: f64| 1.0 + 0.3 * x.sin();
        let ws = |x: f64, t: f64| (-t).exp() * x.cos() * (-x * x / 4.0).exp();
        let wxx = |x: f64, t: f64| {
            let e = (-t).exp() * (-x * x / 4.0).exp();
            e * (-x.cos() + x * x.sin() + (x * x / 4.0 - 0.5) * x.cos())
        };
        let gamma = 0.5;
        let field = CoefficientField::custom(
            std::sync::Arc::new(move |x, _| k(x)),
            Some(std::sync::Arc::new(|x: f64, _| 0.3 * x.cos())),
            1.0,
            vec![],
            crate::coeffs::SampleDomain {
                halfwidth: 10.0,
                horizon: 0.5,
            },
        )
        .unwrap();
        let forcing = Forcing::custom(move |x, t| -ws(x, t) - k(x) * wxx(x, t) + gamma * ws(x, t));
        let initial = InitialDatum::Custom(crate::data::CustomDatum {
            w0: std::sync::Arc::new(move |x| ws(x, 0.0)),
            dw0: std::sync::Arc::new(|x: f64| (-x * x / 4.0).exp() * (-x.sin() - 0.5 * x * x.cos())),
            breaks: vec![],
            features: vec![],
            support: Some((-10.0, 10.0)),
        });
        let spec = ProblemSpec::new(field, gamma, forcing, GMode::Zero, initial, 0.5, 10.0).unwrap();
        let err = |n: usize| {
            let f = crank_nicolson_solve(&spec, FDGrid::new(10.0, 0.5, n, n).unwrap()).unwrap();
            let j = f.nt() - 1;
            f.grid
                .xs
                .iter()
                .enumerate()
                .map(|(i, &x)| (f.w_at(i, j) - ws(x, 0.5)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(128), err(256), err(512));
        let (o1, o2) = ((e1 / e2).log2(), (e2 / e3).log2());
        assert!(o1 >= 1.8 && o2 >= 1.8, "orders {o1} {o2} from {e1} {e2} {e3}");
    }

    #[test]
    fn bump_test_functions() {
        let p = TestFunction::random(7, (-2.0, 2.0), (0.05, 0.45)).unwrap();
        let ((x0, x1), (t0, t1)) = p.support();
        assert!(x0 >= -2.0 && x1 <= 2.0 && t0 >= 0.05 && t1 <= 0.45);
        assert_eq!(p.eval(x0 - 0.01, p.ct).0, 0.0);
        let (x, t, h) = (p.cx + 0.3 * p.rx, p.ct - 0.2 * p.rt, 1e-6);
        let (_, px, pt) = p.eval(x, t);
        assert!((px - (p.eval(x + h, t).0 - p.eval(x - h, t).0) / (2.0 * h)).abs() < 1e-6 * px.abs().max(1.0));
        assert!((pt - (p.eval(x, t + h).0 - p.eval(x, t - h).0) / (2.0 * h)).abs() < 1e-6 * pt.abs().max(1.0));
        assert_eq!(p, TestFunction::random(7, (-2.0, 2.0), (0.05, 0.45)).unwrap());
    }

    #[test]
    fn weak_residual_of_exact_solution_and_perturbation() {
        let spec = gaussian_spec(1.0);
        let grid = Grid::uniform(-3.0, 3.0, 241, 0.0, 0.5, 101).unwrap();
        let exact = |x: f64, t: f64| {
            let var = 0.16 + 2.0 * t;
            let v = 0.4 / f64::sqrt(var) * (-x * x / (2.0 * var)).exp();
            (v, -x / var * v)
        };
        let mut w = Vec::new();
        let mut w_x = Vec::new();
        for &t in &grid.ts {
            for &x in &grid.xs {
                let (v, d) = exact(x, t);
                w.push(v);
                w_x.push(d);
            }
        }
        let field = SolutionField {
            grid: grid.clone(),
            w,
            w_x,
            terms: None,
        };
        let phi = TestFunction::random(3, (-2.5, 2.5), (0.05, 0.45)).unwrap();
        let r = weak_residual(&field, &spec, &phi).unwrap();
        assert!(r.normalized() < 1e-5, "{r:?}");
        // perturb by a bump under φ
        let mut bumped = field.clone();
        for (j, &t) in grid.ts.iter().enumerate() {
            for (i, &x) in grid.xs.iter().enumerate() {
                let (b, bx) = bump((x - phi.cx) / phi.rx);
                let n = bumped.index(i, j);
                bumped.w[n] += 0.1 * b * t;
                bumped.w_x[n] += 0.1 * bx / phi.rx * t;
            }
        }
        let rb = weak_residual(&bumped, &spec, &phi).unwrap();
        assert!(rb.residual.abs() >= 10.0 * r.residual.abs());
        let zero = TestFunction { amp: 0.0, ..phi };
        assert_eq!(weak_residual(&field, &spec, &zero).unwrap().residual, 0.0);
        let wide = TestFunction { rx: 10.0, ..phi };
        assert!(weak_residual(&field, &spec, &wide).is_err());
    }

    #[test]
    fn trace_check_on_exact_solution() {
        let spec = gaussian_spec(1.0);
        let w = |x: f64, t: f64| {
            let var = 0.16 + 2.0 * t;
            Ok(0.4 / f64::sqrt(var) * (-x * x / (2.0 * var)).exp())
        };
        let panel: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let e = initial_trace_check(w, &spec, &[0.1, 0.01, 0.001], &panel).unwrap();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        let zero = ProblemSpec::new(
            CoefficientField::constant(1.0).unwrap(),
            0.0,
            Forcing::Zero,
            GMode::Zero,
            InitialDatum::Zero,
            0.5,
            5.0,
        )
        .unwrap();
        assert_eq!(initial_trace_check(|_, _| Ok(0.0), &zero, &[0.1, 0.01], &panel).unwrap(), vec![0.0, 0.0]);
        assert!(initial_trace_check(w, &spec, &[0.01, 0.1], &panel).is_err());
    }
}
