//! Discrete `L∞`, `L²` and Hölder measurements, exponent fitting, and the
//! elementary inequality `1 − e^{−a} ≤ a^λ/λ`.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::duhamel::{DuhamelSolver, SolutionField, Terms};
use crate::error::{Error, Result};
use crate::quadrature::rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    X,
    T,
}

/// Values on a tensor grid, time-major (`values[j·nx + i]` at `(x_i, t_j)`).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
}

impl FieldSamples {
    pub fn new(xs: Vec<f64>, ts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != xs.len() * ts.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {}x{} grid",
                values.len(),
                xs.len(),
                ts.len()
            )));
        }
        Ok(Self { xs, ts, values })
    }

    /// One line in `x`, sampled from `f`.
    pub fn from_fn_x(xs: Vec<f64>, f: impl Fn(f64) -> f64) -> Self {
        let values = xs.iter().map(|&x| f(x)).collect();
        Self {
            xs,
            ts: vec![0.0],
            values,
        }
    }

    pub fn w(field: &SolutionField) -> Self {
        Self {
            xs: field.grid.xs.clone(),
            ts: field.grid.ts.clone(),
            values: field.w.clone(),
        }
    }

    pub fn w_x(field: &SolutionField) -> Self {
        Self {
            xs: field.grid.xs.clone(),
            ts: field.grid.ts.clone(),
            values: field.w_x.clone(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// Lines of `(coordinates, values)` along `dir`.
    fn lines(&self, dir: Direction) -> Vec<(Vec<f64>, Vec<f64>)> {
        let (nx, nt) = (self.xs.len(), self.ts.len());
        match dir {
            Direction::X => (0..nt)
                .map(|j| (self.xs.clone(), self.values[j * nx..(j + 1) * nx].to_vec()))
                .collect(),
            Direction::T => (0..nx)
                .map(|i| (self.ts.clone(), (0..nt).map(|j| self.values[j * nx + i]).collect()))
                .collect(),
        }
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid `L²` norm over the sampled rectangle (over the line if `ts` has one point).
    pub fn l2(&self) -> f64 {
        let wx = trapezoid(&self.xs);
        let wt = if self.ts.len() > 1 { trapezoid(&self.ts) } else { vec![1.0] };
        let nx = self.xs.len();
        let mut acc = 0.0;
        for (j, a) in wt.iter().enumerate() {
            for (i, b) in wx.iter().enumerate() {
                acc += a * b * self.values[j * nx + i].powi(2);
            }
        }
        acc.sqrt()
    }
}

fn trapezoid(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (v[i + 1] - v[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seminorm {
    pub value: f64,
    pub pairs: usize,
}

/// `max |v(p₂) − v(p₁)|/|p₂ − p₁|^α` over same-line pairs. Index offsets are
/// grouped in dyadic bins `[2^b, 2^{b+1})`; each bin contributes at most
/// `pair_budget` pairs per line, spread evenly when it holds more.
pub fn holder_seminorm(s: &FieldSamples, alpha: f64, dir: Direction, pair_budget: usize) -> Result<Seminorm> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")));
    }
    if pair_budget == 0 {
        return Err(Error::InvalidArgument("pair budget must be positive".into()));
    }
    let lines = s.lines(dir);
    if lines.first().is_none_or(|l| l.0.len() < 2) {
        return Err(Error::InvalidArgument("degenerate grid: fewer than 2 samples per line".into()));
    }
    let per_line: Vec<(f64, usize)> = lines
        .par_iter()
        .map(|(c, v)| {
            let n = c.len();
            let mut best: f64 = 0.0;
            let mut count = 0;
            let mut lo = 1;
            while lo < n {
                let hi = (2 * lo).min(n);
                // pairs (i, i + d) for d in [lo, hi), enumerated d-major
                let total: usize = (lo..hi).map(|d| n - d).sum();
                let take = total.min(pair_budget);
                let mut visit = |k: usize| {
                    let mut k = k;
                    for d in lo..hi {
                        if k < n - d {
                            let (a, b) = (k, k + d);
                            let q = (v[b] - v[a]).abs() / (c[b] - c[a]).abs().powf(alpha);
                            best = best.max(q);
                            return;
                        }
                        k -= n - d;
                    }
                };
                for m in 0..take {
                    visit(m * total / take);
                }
                count += take;
                lo = hi;
            }
            (best, count)
        })
        .collect();
    Ok(Seminorm {
        value: per_line.iter().fold(0.0, |m, p| m.max(p.0)),
        pairs: per_line.iter().map(|p| p.1).sum(),
    })
}

/// Relative change under mesh halving below 25%.
pub fn is_grid_stable(coarse: f64, fine: f64) -> bool {
    if coarse == 0.0 {
        return fine == 0.0;
    }
    (fine / coarse - 1.0).abs() < 0.25
}

/// Average `log₂` growth per halving below which a seminorm counts as bounded
/// when fitting exponents.
pub const STABLE_SLOPE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderFit {
    /// Largest stable `α`, or 0 when none is.
    pub exponent: f64,
    pub found: bool,
    /// `(α, mean log₂ growth per halving)`.
    pub slopes: Vec<(f64, f64)>,
}

/// Largest `α` in `alpha_grid` whose seminorm stays bounded along `ladder`
/// (coarse to fine, each a halving of the previous mesh), judged by the mean
/// `log₂` growth per halving against [`STABLE_SLOPE`].
pub fn fit_holder_exponent(ladder: &[FieldSamples], dir: Direction, alpha_grid: &[f64], pair_budget: usize) -> Result<HolderFit> {
    if ladder.len() < 2 {
        return Err(Error::InvalidArgument("exponent fitting needs at least two meshes".into()));
    }
    if alpha_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::InvalidArgument("alpha grid must lie in (0, 1)".into()));
    }
    let mut slopes = Vec::with_capacity(alpha_grid.len());
    for &a in alpha_grid {
        let s = ladder
            .iter()
            .map(|f| holder_seminorm(f, a, dir, pair_budget).map(|v| v.value))
            .collect::<Result<Vec<_>>>()?;
        let growth: Vec<f64> = s
            .windows(2)
            .map(|p| {
                if p[0] == 0.0 && p[1] == 0.0 {
                    0.0
                } else {
                    (p[1] / p[0]).log2()
                }
            })
            .collect();
        slopes.push((a, growth.iter().sum::<f64>() / growth.len() as f64));
    }
    let best = slopes
        .iter()
        .filter(|(_, g)| *g <= STABLE_SLOPE)
        .map(|(a, _)| *a)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))));
    Ok(HolderFit {
        exponent: best.unwrap_or(0.0),
        found: best.is_some(),
        slopes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub linf: f64,
    pub l2: f64,
    /// `(direction, α, seminorm)` on the finest mesh.
    pub holder_seminorms: Vec<(Direction, f64, f64)>,
    pub fitted_exponent_x: f64,
    pub fitted_exponent_t: f64,
    pub pairs_sampled: usize,
}

impl NormReport {
    /// Norms of the finest mesh in `ladder`; exponents fitted across it.
    pub fn compute(ladder: &[FieldSamples], alphas: &[f64], alpha_grid: &[f64], pair_budget: usize) -> Result<Self> {
        let fine = ladder
            .last()
            .ok_or_else(|| Error::InvalidArgument("empty mesh ladder".into()))?;
        let mut holder_seminorms = Vec::new();
        let mut pairs = 0;
        for dir in [Direction::X, Direction::T] {
            for &a in alphas {
                let s = holder_seminorm(fine, a, dir, pair_budget)?;
                pairs += s.pairs;
                holder_seminorms.push((dir, a, s.value));
            }
        }
        let fx = fit_holder_exponent(ladder, Direction::X, alpha_grid, pair_budget)?;
        let ft = fit_holder_exponent(ladder, Direction::T, alpha_grid, pair_budget)?;
        Ok(Self {
            linf: fine.linf(),
            l2: fine.l2(),
            holder_seminorms,
            fitted_exponent_x: fx.exponent,
            fitted_exponent_t: ft.exponent,
            pairs_sampled: pairs,
        })
    }

    /// CSV with columns `metric,direction,alpha,value`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wr.write_record(["metric", "direction", "alpha", "value"])?;
        let e = |v: f64| format!("{v:e}");
        wr.write_record(["linf", "", "", &e(self.linf)])?;
        wr.write_record(["l2", "", "", &e(self.l2)])?;
        for (d, a, v) in &self.holder_seminorms {
            let d = match d {
                Direction::X => "x",
                Direction::T => "t",
            };
            wr.write_record(["holder", d, &e(*a), &e(*v)])?;
        }
        wr.write_record(["fitted_exponent", "x", "", &e(self.fitted_exponent_x)])?;
        wr.write_record(["fitted_exponent", "t", "", &e(self.fitted_exponent_t)])?;
        wr.write_record(["pairs_sampled", "", "", &self.pairs_sampled.to_string()])?;
        wr.flush()?;
        Ok(())
    }
}

impl fmt::Display for NormReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "L∞ norm        {:.6e}", self.linf)?;
        writeln!(f, "L² norm        {:.6e}", self.l2)?;
        for (d, a, v) in &self.holder_seminorms {
            writeln!(f, "C^{a:.2} in {:<2}   {v:.6e}", format!("{d:?}").to_lowercase())?;
        }
        writeln!(f, "exponent in x  {:.2}", self.fitted_exponent_x)?;
        writeln!(f, "exponent in t  {:.2}", self.fitted_exponent_t)?;
        write!(f, "pairs sampled  {}", self.pairs_sampled)
    }
}

/// `L²(Ω_δ)` norms of three forcing terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Row {
    pub delta: f64,
    pub w_f: f64,
    pub w_fx: f64,
    pub w_gx: f64,
}

impl L2Row {
    fn values(&self) -> [f64; 3] {
        [self.w_f, self.w_fx, self.w_gx]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2Study {
    /// Norms over the whole horizon.
    pub full: L2Row,
    pub rows: Vec<L2Row>,
}

impl L2Study {
    /// Every norm strictly decreases along the deltas (zero columns excepted).
    pub fn strictly_decreasing(&self) -> bool {
        (0..3).all(|k| {
            let col: Vec<f64> = self.rows.iter().map(|r| r.values()[k]).collect();
            col.iter().all(|v| *v == 0.0) || col.windows(2).all(|p| p[1] < p[0])
        })
    }

    /// Last row over the full-horizon row, per column; 0 for zero columns.
    pub fn final_fractions(&self) -> [f64; 3] {
        let last = self.rows.last().map(|r| r.values()).unwrap_or([0.0; 3]);
        let full = self.full.values();
        [0, 1, 2].map(|k| if full[k] == 0.0 { 0.0 } else { last[k] / full[k] })
    }

    /// CSV with columns `delta,W_f,W_fx,W_Gx`; the first row is the full horizon.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wr.write_record(["delta", "W_f", "W_fx", "W_Gx"])?;
        for r in std::iter::once(&self.full).chain(&self.rows) {
            wr.write_record([r.delta, r.w_f, r.w_fx, r.w_gx].map(|v| format!("{v:e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn l2_row(solver: &DuhamelSolver, delta: f64, xs: &[f64]) -> Result<L2Row> {
    let wx = trapezoid(xs);
    // geometric panels toward t = 0, 8 Gauss-Legendre points each
    let gl = rule(8);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut hi = delta;
    for k in 0..7 {
        let lo = if k == 6 { 0.0 } else { 0.5 * hi };
        let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (z, w) in gl.nodes.iter().zip(&gl.weights) {
            nodes.push(c + h * z);
            weights.push(h * w);
        }
        hi = lo;
    }
    let terms: Vec<Terms> = nodes
        .par_iter()
        .flat_map_iter(|&t| xs.iter().map(move |&x| (x, t)))
        .map(|(x, t)| solver.node(x, t))
        .collect::<Result<_>>()?;
    let mut acc = [0.0; 3];
    for (j, wt) in weights.iter().enumerate() {
        for (i, w) in wx.iter().enumerate() {
            let tm = &terms[j * xs.len() + i];
            acc[0] += wt * w * tm.w_f.powi(2);
            acc[1] += wt * w * tm.w_fx.powi(2);
            acc[2] += wt * w * tm.w_gx.powi(2);
        }
    }
    Ok(L2Row {
        delta,
        w_f: acc[0].sqrt(),
        w_fx: acc[1].sqrt(),
        w_gx: acc[2].sqrt(),
    })
}

/// `L²(Ω_δ)` norms of `W_f`, `W_{f,x}`, `W_{G,x}` for each `δ`, with
/// `Ω_δ = [x₀, x_n] × (0, δ]`; time by graded Gauss-Legendre, space by
/// trapezoid on `xs`.
pub fn l2_smallness_study(solver: &DuhamelSolver, deltas: &[f64], xs: &[f64]) -> Result<L2Study> {
    if deltas.is_empty() || deltas.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::InvalidArgument("deltas must be non-empty and strictly decreasing".into()));
    }
    let horizon = solver.spec().horizon;
    if deltas[0] > horizon {
        return Err(Error::InvalidArgument(format!("delta {} exceeds the horizon {horizon}", deltas[0])));
    }
    let full = l2_row(solver, horizon, xs)?;
    let rows = deltas.iter().map(|&d| l2_row(solver, d, xs)).collect::<Result<_>>()?;
    Ok(L2Study { full, rows })
}

/// `max |W_{f,x}|` over `xs` and `t ∈ (0, T]` (four time levels) for each `T`.
pub fn forcing_gradient_sup(solver: &DuhamelSolver, horizons: &[f64], xs: &[f64]) -> Result<Vec<f64>> {
    horizons
        .iter()
        .map(|&big_t| {
            let pts: Vec<(f64, f64)> = [0.25, 0.5, 0.75, 1.0]
                .iter()
                .flat_map(|c| xs.iter().map(move |&x| (x, c * big_t)))
                .collect();
            pts.par_iter()
                .map(|&(x, t)| solver.node(x, t).map(|tm| tm.w_fx.abs()))
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().fold(0.0, f64::max))
        })
        .collect()
}

/// Samples violating `1 − e^{−a} ≤ a^λ/λ`.
pub fn lemma_inequality_check(samples: &[(f64, f64)]) -> Result<usize> {
    if let Some(bad) = samples.iter().find(|(a, l)| !(*a >= 0.0 && *l > 0.0 && *l <= 1.0)) {
        return Err(Error::InvalidArgument(format!("sample {bad:?} outside a >= 0, 0 < λ <= 1")));
    }
    Ok(samples
        .par_iter()
        .filter(|(a, l)| -(-a).exp_m1() > a.powf(*l) / l)
        .count())
}

/// `n` random `(a, λ)` pairs plus the boundary `a = 0`, the case `λ = 1` and
/// the extremum family `a = 1 − λ`.
pub fn lemma_samples(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let a = if rng.random_bool(0.5) {
                rng.random_range(0.0..5.0)
            } else {
                10f64.powf(rng.random_range(-12.0..3.0))
            };
            (a, rng.random_range(f64::EPSILON..=1.0))
        })
        .collect();
    for i in 1..=99 {
        let l = i as f64 / 100.0;
        out.push((1.0 - l, l));
        out.push((0.0, l));
    }
    for a in [0.0, 1e-300, 1e-8, 0.5, 1.0, 10.0, 700.0] {
        out.push((a, 1.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, f: impl Fn(f64) -> f64) -> FieldSamples {
        FieldSamples::from_fn_x((0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect(), f)
    }

    #[test]
    fn constant_and_linear_fields() {
        let c = line(65, |_| 3.0);
        assert_eq!(holder_seminorm(&c, 0.5, Direction::X, 100).unwrap().value, 0.0);
        let l = line(65, |x| -2.5 * x + 1.0);
        assert!((holder_seminorm(&l, 1.0, Direction::X, 100).unwrap().value - 2.5).abs() < 1e-12);
        assert!(holder_seminorm(&l, 0.0, Direction::X, 100).is_err());
        assert!(holder_seminorm(&line(1, |x| x), 0.5, Direction::X, 100).is_err());
    }

    #[test]
    fn square_root_cusp() {
        let f = |x: f64| x.abs().sqrt();
        let s = holder_seminorm(&line(257, f), 0.5, Direction::X, 10_000).unwrap();
        assert!((s.value - 1.0).abs() < 0.1, "{}", s.value);
        // above the true exponent the seminorm grows like h^{-(α - 1/2)}
        let a = holder_seminorm(&line(257, f), 0.6, Direction::X, 10_000).unwrap().value;
        let b = holder_seminorm(&line(513, f), 0.6, Direction::X, 10_000).unwrap().value;
        assert!((b / a - 2f64.powf(0.1)).abs() < 0.01, "{a} {b}");
        let ladder: Vec<_> = [65, 129, 257, 513].iter().map(|&n| line(n, f)).collect();
        let alphas: Vec<f64> = (1..20).map(|i| 0.05 * i as f64).collect();
        let fit = fit_holder_exponent(&ladder, Direction::X, &alphas, 10_000).unwrap();
        assert!(fit.found && (0.45..=0.55).contains(&fit.exponent), "{fit:?}");
        let scaled: Vec<_> = ladder.iter().map(|s| s.scaled(3.0)).collect();
        assert_eq!(fit_holder_exponent(&scaled, Direction::X, &alphas, 10_000).unwrap().exponent, fit.exponent);
    }

    #[test]
    fn smooth_field_fits_largest_alpha() {
        let ladder: Vec<_> = [33, 65, 129].iter().map(|&n| line(n, |x| (2.0 * x).sin())).collect();
        let fit = fit_holder_exponent(&ladder, Direction::X, &[0.2, 0.5, 0.9], 1000).unwrap();
        assert_eq!(fit.exponent, 0.9);
    }

    #[test]
    fn stability_rule() {
        assert!(is_grid_stable(1.0, 1.2));
        assert!(!is_grid_stable(1.0, 1.3));
        assert!(!is_grid_stable(1.0, 0.7));
        assert!(is_grid_stable(0.0, 0.0));
    }

    #[test]
    fn time_direction_uses_columns() {
        let xs = vec![0.0, 1.0];
        let ts = vec![0.0, 0.25, 1.0];
        // v = t in the first column, constant in the second
        let s = FieldSamples::new(xs, ts, vec![0.0, 5.0, 0.25, 5.0, 1.0, 5.0]).unwrap();
        assert!((holder_seminorm(&s, 1.0, Direction::T, 10).unwrap().value - 1.0).abs() < 1e-15);
        assert!((holder_seminorm(&s, 1.0, Direction::X, 10).unwrap().value - 5.0).abs() < 1e-15);
        assert!(FieldSamples::new(vec![0.0], vec![0.0], vec![]).is_err());
    }

    #[test]
    fn lemma_examples() {
        assert_eq!(lemma_inequality_check(&[(0.0, 0.5)]).unwrap(), 0);
        for a in [0.1f64, 1.0, 3.0] {
            assert!(1.0 - (-a).exp() <= a);
        }
        for i in 1..10 {
            let l = i as f64 / 10.0;
            let a: f64 = 1.0 - l;
            assert!(1.0 - (-a).exp() < a.powf(l) / l);
        }
        assert_eq!(lemma_inequality_check(&lemma_samples(10_000, 1)).unwrap(), 0);
        assert!(lemma_inequality_check(&[(-1.0, 0.5)]).is_err());
    }

    #[test]
    fn report_csv_and_display() {
        let ladder: Vec<_> = [33, 65].iter().map(|&n| line(n, |x| x.abs().sqrt())).collect();
        let r = NormReport::compute(&ladder, &[0.4], &[0.3, 0.5, 0.7], 1000);
        // single time level: the t direction is degenerate
        assert!(r.is_err());
        let grid = |n: usize| {
            let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
            let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let values = ts.iter().flat_map(|t| xs.iter().map(move |x| x.abs().sqrt() + t)).collect();
            FieldSamples::new(xs, ts, values).unwrap()
        };
        let r = NormReport::compute(&[grid(17), grid(33)], &[0.4], &[0.3, 0.5, 0.7], 1000).unwrap();
        assert!(r.linf > 1.9 && r.l2 > 0.0 && r.pairs_sampled > 0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("metric,direction,alpha,value\nlinf,,,"));
        assert!(format!("{r}").contains("exponent in x"));
    }
}
