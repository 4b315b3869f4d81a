use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roughheat::coeffs::SampleDomain;
use roughheat::data::{Forcing, InitialDatum};
use roughheat::duhamel::{DuhamelSolver, Grid, ProblemSpec, SolutionField};
use roughheat::mollify::convergence_study;
use roughheat::norms::{fit_holder_exponent, holder_seminorm, l2_smallness_study, lemma_inequality_check, lemma_samples, Direction, FieldSamples, NormReport};
use roughheat::parametrix::{fit_gaussian_bound, BoundSample, GammaEvaluator};
use roughheat::reference::{crank_nicolson_solve, initial_trace_check, weak_residual_panel, write_residual_csv, FDGrid, TestFunction};

use crate::config::RunConfig;
use crate::output::{self, Output};
use crate::Failure;

pub struct Run {
    pub cfg: RunConfig,
    pub spec: Arc<ProblemSpec>,
    pub out: Output,
    pub seed: u64,
}

fn numeric(e: roughheat::Error) -> Failure {
    Failure::Numeric(e.into())
}

impl Run {
    fn solver(&self) -> Result<DuhamelSolver, Failure> {
        let ev = GammaEvaluator::new(
            self.spec.field.clone(),
            self.spec.gamma,
            self.spec.horizon,
            self.cfg.parametrix,
            self.cfg.quadrature,
        )
        .map_err(numeric)?;
        DuhamelSolver::new(Arc::new(ev), self.spec.clone(), self.cfg.duhamel).map_err(numeric)
    }

    fn grid(&self) -> Result<Grid, Failure> {
        self.cfg.grid.build(self.spec.horizon).map_err(Failure::Config)
    }
}

/// Every other node of `field`, when both sizes are odd.
fn subsample(field: &SolutionField, values: &[f64]) -> Option<FieldSamples> {
    let (nx, nt) = (field.nx(), field.nt());
    if nx % 2 == 0 || nt % 2 == 0 || nx < 5 || nt < 5 {
        return None;
    }
    let xs = field.grid.xs.iter().step_by(2).copied().collect();
    let ts = field.grid.ts.iter().step_by(2).copied().collect();
    let v = (0..nt)
        .step_by(2)
        .flat_map(|j| (0..nx).step_by(2).map(move |i| values[field.index(i, j)]))
        .collect();
    FieldSamples::new(xs, ts, v).ok()
}

pub fn solve(run: &Run) -> Result<(), Failure> {
    let solver = run.solver()?;
    let grid = run.grid()?;
    let field = solver.solve(&grid).map_err(numeric)?;
    run.out.write("solution.csv", |w| field.write_csv(w))?;
    run.out.text("solution.gp", &output::solution_plot())?;

    // norm sidecar: the solved mesh and a twice-coarser one
    let coarse = match (subsample(&field, &field.w), subsample(&field, &field.w_x)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let g = run
                .cfg
                .grid
                .build_with(run.spec.horizon, grid.xs.len().div_ceil(2), grid.ts.len().div_ceil(2))
                .map_err(Failure::Config)?;
            let c = solver.solve(&g).map_err(numeric)?;
            (FieldSamples::w(&c), FieldSamples::w_x(&c))
        }
    };
    let st = &run.cfg.study;
    let mut text = String::new();
    for (name, file, ladder) in [
        ("w", "norms_w.csv", [coarse.0, FieldSamples::w(&field)]),
        ("w_x", "norms_wx.csv", [coarse.1, FieldSamples::w_x(&field)]),
    ] {
        match NormReport::compute(&ladder, &st.alphas, &st.alpha_grid, st.pair_budget) {
            Ok(r) => {
                run.out.write(file, |w| r.write_csv(w))?;
                let _ = write!(text, "[{name}]\n{r}\n\n");
            }
            Err(e) => eprintln!("norm report for {name} skipped: {e}"),
        }
    }
    if !text.is_empty() {
        run.out.text("norms.txt", &text)?;
    }
    println!(
        "solved {} nodes ({} series terms); outputs in {}",
        grid.len(),
        solver.density_info().terms,
        run.out.dir().display()
    );
    Ok(())
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
    note: String,
}

fn closed_form(spec: &ProblemSpec) -> Option<impl Fn(f64, f64) -> f64> {
    if !spec.field.is_constant() || !matches!(spec.forcing, Forcing::Zero) {
        return None;
    }
    let &InitialDatum::Gaussian { amp, center, sigma } = &spec.initial else {
        return None;
    };
    let k = spec.field.k_lower();
    let gamma = spec.gamma;
    Some(move |x: f64, t: f64| {
        let v = sigma * sigma + 2.0 * k * t;
        (-gamma * t).exp() * amp * (sigma * sigma / v).sqrt() * (-(x - center).powi(2) / (2.0 * v)).exp()
    })
}

fn relative_linf(field: &SolutionField, exact: impl Fn(f64, f64) -> roughheat::Result<f64>) -> roughheat::Result<f64> {
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (j, &t) in field.grid.ts.iter().enumerate() {
        for (i, &x) in field.grid.xs.iter().enumerate() {
            let e = exact(x, t)?;
            err = err.max((field.w_at(i, j) - e).abs());
            scale = scale.max(e.abs());
        }
    }
    Ok(if scale == 0.0 { err } else { err / scale })
}

fn bound_check(ev: &GammaEvaluator, run: &Run) -> roughheat::Result<(usize, String)> {
    let v = &run.cfg.verify;
    let horizon = run.spec.horizon;
    let (lo, hi) = (run.cfg.grid.x_min, run.cfg.grid.x_max);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    // kinds: Γ, Γ_x, Φ; even sources fit, odd sources are held out
    let mut fit: [Vec<BoundSample>; 3] = Default::default();
    let mut held: [Vec<BoundSample>; 3] = Default::default();
    for s in 0..v.bound_sources {
        let xi = rng.random_range(lo..hi);
        let tau = rng.random_range(0.0..0.6 * horizon);
        for _ in 0..v.bound_targets {
            let dt = 10f64.powf(rng.random_range(-3.0..(horizon - tau).log10()));
            let x = xi + rng.random_range(-1.5..1.5);
            let (g, gx) = ev.gamma_pair(x, tau + dt, xi, tau)?;
            let phi = ev.phi_eval(x, tau + dt, xi, tau)?;
            let bins = if s % 2 == 0 { &mut fit } else { &mut held };
            for (k, value) in [g, gx, phi].into_iter().enumerate() {
                bins[k].push(BoundSample { dx: x - xi, dt, value });
            }
        }
    }
    let beta = run.spec.field.holder_exponent();
    let powers = [0.5, 1.0, (3.0 - beta) / 2.0];
    let k_upper = run.spec.field.k_upper();
    let mut total = 0;
    let mut note = Vec::new();
    for (k, label) in ["G", "G_x", "Phi"].iter().enumerate() {
        let b = fit_gaussian_bound(&fit[k], powers[k], k_upper)?;
        let bad = b.violations + b.violations(&held[k], powers[k], 2.0);
        total += bad;
        note.push(format!("{label}: C={:.3e} d={:.3} violations={bad}", b.c, b.d));
    }
    Ok((total, note.join("; ")))
}

pub fn verify(run: &Run) -> Result<(), Failure> {
    let v = &run.cfg.verify;
    let spec = &run.spec;
    let solver = run.solver()?;
    let grid = run.grid()?;
    let field = solver.solve(&grid).map_err(numeric)?;
    let mut checks = Vec::new();

    if let Some(exact) = closed_form(spec) {
        let rel = relative_linf(&field, |x, t| Ok(exact(x, t))).map_err(numeric)?;
        checks.push(Check {
            name: "closed_form",
            value: rel,
            threshold: v.closed_form_tol,
            pass: rel <= v.closed_form_tol,
            note: "relative Linf against the damped Gaussian".into(),
        });
    }

    let fd = FDGrid::new(spec.halfwidth, spec.horizon, v.reference_nx, v.reference_nt).map_err(|e| Failure::Config(format!("verify.reference_nx: {e}")))?;
    let cn = crank_nicolson_solve(spec, fd).map_err(numeric)?;
    let rel = relative_linf(&field, |x, t| cn.interpolate(&cn.w, x, t)).map_err(numeric)?;
    checks.push(Check {
        name: "oracle_agreement",
        value: rel,
        threshold: v.oracle_tol,
        pass: rel <= v.oracle_tol,
        note: format!("relative Linf against Crank-Nicolson {}x{}", v.reference_nx, v.reference_nt),
    });

    let (x0, x1) = (grid.xs[0], grid.xs[grid.xs.len() - 1]);
    let margin = 0.05 * (x1 - x0);
    let t_range = (grid.ts[0], grid.ts[grid.ts.len() - 1]);
    let phis = (0..v.test_functions as u64)
        .map(|i| TestFunction::random(run.seed.wrapping_add(i), (x0 + margin, x1 - margin), t_range))
        .collect::<roughheat::Result<Vec<_>>>()
        .map_err(|e| Failure::Config(format!("grid: {e}")))?;
    let rows = weak_residual_panel(&field, spec, &phis).map_err(numeric)?;
    run.out.write("residuals.csv", |w| write_residual_csv(&rows, w))?;
    let worst = rows.iter().map(|r| r.normalized()).fold(0.0, f64::max);
    checks.push(Check {
        name: "weak_residual",
        value: worst,
        threshold: v.residual_tol,
        pass: worst <= v.residual_tol,
        note: format!("max normalized residual over {} test functions", rows.len()),
    });

    let (bad, note) = bound_check(solver.evaluator(), run).map_err(numeric)?;
    checks.push(Check {
        name: "gaussian_bounds",
        value: bad as f64,
        threshold: 0.0,
        pass: bad == 0,
        note,
    });

    let w0 = spec.initial.sup_norm(spec.halfwidth);
    if w0 > 0.0 {
        let errs = initial_trace_check(|x, t| solver.node(x, t).map(|n| n.value()), spec, &v.trace_times, &grid.xs)
            .map_err(|e| match e {
                roughheat::Error::InvalidArgument(m) => Failure::Config(format!("verify.trace_times: {m}")),
                e => numeric(e),
            })?;
        let last = errs.last().copied().unwrap_or(f64::INFINITY);
        let limit = v.trace_fraction * w0;
        checks.push(Check {
            name: "initial_trace",
            value: last,
            threshold: limit,
            pass: errs.windows(2).all(|p| p[1] < p[0]) && last < limit,
            note: format!("max errors {}", errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ")),
        });
    }

    let samples = lemma_samples(v.lemma_samples, run.seed);
    let bad = lemma_inequality_check(&samples).map_err(numeric)?;
    checks.push(Check {
        name: "lemma",
        value: bad as f64,
        threshold: 0.0,
        pass: bad == 0,
        note: format!("{} samples", samples.len()),
    });

    run.out.write("verify.csv", |w| {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["check", "value", "threshold", "pass", "note"])?;
        for c in &checks {
            wr.write_record([c.name, &format!("{:e}", c.value), &format!("{:e}", c.threshold), if c.pass { "true" } else { "false" }, &c.note])?;
        }
        wr.flush().map_err(|e| roughheat::Error::Csv(e.to_string()))
    })?;
    for c in &checks {
        println!("{:<4} {:<18} {:>11.3e}  (limit {:.1e})  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold, c.note);
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(failed))
    }
}

pub fn study_mollify(run: &Run) -> Result<(), Failure> {
    let solver = run.solver()?;
    let grid = run.grid()?;
    let rep = convergence_study(solver.evaluator_arc(), &run.spec, &run.cfg.study.epsilons, &grid, run.cfg.duhamel).map_err(|e| match e {
        roughheat::Error::InvalidArgument(m) => Failure::Config(format!("study.epsilons: {m}")),
        e => numeric(e),
    })?;
    run.out.write("mollify.csv", |w| rep.write_csv(w))?;
    run.out.text("mollify.gp", &output::mollify_plot())?;
    for r in &rep.rows {
        println!("epsilon {:<8} data gap {:.3e}  solution gap {:.3e}", r.epsilon, r.data_l2_gap, r.solution_sup_gap);
    }
    println!("last/first solution gap {:.3}", rep.contraction());
    if rep.is_cauchy() {
        Ok(())
    } else {
        let flagged = rep.flagged().iter().map(|i| format!("gap at epsilon {} did not shrink", rep.rows[*i].epsilon)).collect();
        Err(Failure::Assertion(flagged))
    }
}

pub fn study_l2decay(run: &Run) -> Result<(), Failure> {
    let solver = run.solver()?;
    let grid = run.grid()?;
    let study = l2_smallness_study(&solver, &run.cfg.study.deltas, &grid.xs).map_err(|e| match e {
        roughheat::Error::InvalidArgument(m) => Failure::Config(format!("study.deltas: {m}")),
        e => numeric(e),
    })?;
    run.out.write("l2decay.csv", |w| study.write_csv(w))?;
    run.out.text("l2decay.gp", &output::l2decay_plot())?;
    for r in std::iter::once(&study.full).chain(&study.rows) {
        println!("delta {:<6} W_f {:.3e}  W_fx {:.3e}  W_Gx {:.3e}", r.delta, r.w_f, r.w_fx, r.w_gx);
    }
    let fr = study.final_fractions();
    let mut failed = Vec::new();
    if !study.strictly_decreasing() {
        failed.push("norms do not strictly decrease along deltas".to_string());
    }
    for (name, f) in ["W_f", "W_fx", "W_Gx"].iter().zip(fr) {
        if f >= 0.1 {
            failed.push(format!("{name} ends at {f:.3} of its full-horizon norm (limit 0.1)"));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(failed))
    }
}

pub fn study_holder(run: &Run) -> Result<(), Failure> {
    let st = &run.cfg.study;
    let solver = run.solver()?;
    let mut w = Vec::new();
    let mut wx = Vec::new();
    for &[nx, nt] in &st.ladder {
        let g = run.cfg.grid.build_with(run.spec.horizon, nx, nt).map_err(Failure::Config)?;
        let f = solver.solve(&g).map_err(numeric)?;
        w.push(FieldSamples::w(&f));
        wx.push(FieldSamples::w_x(&f));
    }
    let config = |e: roughheat::Error| match e {
        roughheat::Error::InvalidArgument(m) => Failure::Config(format!("study: {m}")),
        e => numeric(e),
    };
    let mut seminorms = Vec::new();
    let mut fits = Vec::new();
    let mut failed = Vec::new();
    for (name, ladder) in [("w", &w), ("w_x", &wx)] {
        for (dir, dname, target) in [(Direction::X, "x", st.target_x), (Direction::T, "t", st.target_t)] {
            for &a in &st.alphas {
                for (m, f) in ladder.iter().enumerate() {
                    let s = holder_seminorm(f, a, dir, st.pair_budget).map_err(config)?;
                    seminorms.push((name, dname, a, st.ladder[m], s.value));
                }
            }
            let fit = fit_holder_exponent(ladder, dir, &st.alpha_grid, st.pair_budget).map_err(config)?;
            println!("{name:<3} in {dname}: fitted exponent {:.2}{}", fit.exponent, if fit.found { "" } else { " (no stable alpha)" });
            if let Some([lo, hi]) = target {
                if !(fit.found && (lo..=hi).contains(&fit.exponent)) {
                    failed.push(format!("{name} in {dname}: exponent {:.2} outside [{lo}, {hi}]", fit.exponent));
                }
            }
            fits.push((name, dname, fit));
        }
    }
    run.out.write("holder.csv", |out| {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wr.write_record(["field", "direction", "alpha", "nx", "nt", "seminorm"])?;
        for (name, d, a, [nx, nt], v) in &seminorms {
            wr.write_record([name.to_string(), d.to_string(), format!("{a:e}"), nx.to_string(), nt.to_string(), format!("{v:e}")])?;
        }
        wr.flush().map_err(|e| roughheat::Error::Csv(e.to_string()))
    })?;
    run.out.write("holder_fit.csv", |out| {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        wr.write_record(["field", "direction", "alpha", "mean_log2_growth", "fitted_exponent"])?;
        for (name, d, fit) in &fits {
            for (a, g) in &fit.slopes {
                wr.write_record([name.to_string(), d.to_string(), format!("{a:e}"), format!("{g:e}"), format!("{:e}", fit.exponent)])?;
            }
        }
        wr.flush().map_err(|e| roughheat::Error::Csv(e.to_string()))
    })?;
    run.out.text("holder.gp", &output::holder_plot())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(failed))
    }
}

/// Sanity check of the coefficient against the sampling box, run before any solve.
pub fn admissible(run: &Run) -> Result<(), Failure> {
    run.spec
        .field
        .check_admissible(SampleDomain {
            halfwidth: run.spec.halfwidth,
            horizon: run.spec.horizon,
        })
        .map(|_| ())
        .map_err(|e| Failure::Config(format!("problem.coefficient: {e}")))
}
