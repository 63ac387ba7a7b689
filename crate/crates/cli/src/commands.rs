//! The four commands. Each one computes every output in memory and returns it;
//! nothing is written unless the whole run succeeds.

use ddlab_core::covariance::scale_trace_inverse;
use ddlab_core::designs::{gen_responses, DesignSample, EntryLaw, MeasureSpec, SurrogateSampler};
use ddlab_core::dpcheck::{
    all_sizes, verify_closure, verify_dp, verify_normalization, verify_poisson_identity,
    ClosureMode, DpReport, MatrixGenerator, SizeLaw,
};
use ddlab_core::experiments::{
    adaptive_trials, curve_point, discrepancy, loglog_slope, mse_monte_carlo_iid, under_size,
    CurvePoint, DiscrepancyKind, DiscrepancyPoint, McSummary,
};
use ddlab_core::montecarlo::{derive_seed, map_chunks, MeanAccumulator};
use ddlab_core::{csv_float, Matrix, RegressionProblem, Vector};

use crate::config::{self, RunConfig, SweepMode, WeightSpec};
use crate::svg::{Chart, Series};
use crate::CliError;

/// Files to write (name, contents), lines for standard output and warnings.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub svgs: Vec<(String, String)>,
    pub report: Vec<String>,
    pub warnings: Vec<String>,
}

pub const CURVE_TRIALS: usize = 1000;
pub const DISCREPANCY_TRIALS: usize = 250;
pub const DP_TRIALS: usize = 100_000;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn with_header(command: &str, cfg: &RunConfig, body: &str) -> String {
    format!("{}{body}", config::header(command, cfg))
}

fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from(CurvePoint::CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&p.csv_row());
        out.push('\n');
    }
    out
}

fn kappa_tag(kappa: f64) -> String {
    format!("{kappa}").replace('.', "p")
}

pub fn curve(cfg: &RunConfig) -> Result<Output, CliError> {
    let c = &cfg.curve;
    if c.kappa.is_empty() {
        return Err(invalid("curve needs at least one kappa"));
    }
    if !(c.sigma2 >= 0.0 && c.sigma2.is_finite()) {
        return Err(invalid(format!("sigma2 must be >= 0, got {}", c.sigma2)));
    }
    let grid = c.grid()?;
    if c.mode == SweepMode::D && matches!(c.w_star, WeightSpec::Explicit(_)) {
        return Err(invalid("an explicit w_star cannot be used when d varies"));
    }
    let trials = c.mc.then_some(cfg.trials());
    let mut out = Output::default();
    for (ki, &kappa) in c.kappa.iter().enumerate() {
        let seed = derive_seed(cfg.seed, ki as u64);
        let build = |d: usize| -> Result<RegressionProblem, CliError> {
            let s = config::spectrum(&c.profile, d, kappa)?;
            let s = scale_trace_inverse(&s, d as f64)?;
            config::problem(s, c.sigma2, c.snr, &c.w_star)
        };
        let mut points = Vec::with_capacity(grid.len());
        let mut null = 0.0;
        for &v in &grid {
            let (d, n) = match c.mode {
                SweepMode::N => (c.d, v),
                SweepMode::D => (v, c.n),
            };
            let p = build(d)?;
            null = p.null_mse();
            let mut point = curve_point(&p, n)?;
            if let Some(t) = trials {
                let m = MeasureSpec::gaussian(p.spectrum.clone());
                let est = mse_monte_carlo_iid(&p, &m, n, t, derive_seed(seed, v as u64))?;
                point.mse_mc = Some(McSummary::from(&est));
            }
            points.push(point);
        }
        let (axis, fixed) = match c.mode {
            SweepMode::N => ("n", format!("d={}", c.d)),
            SweepMode::D => ("d", format!("n={}", c.n)),
        };
        let name = format!("curve_{axis}_kappa{}", kappa_tag(kappa));
        let peak = points
            .iter()
            .max_by(|a, b| a.mse_surrogate.total_cmp(&b.mse_surrogate))
            .expect("non-empty grid");
        out.report.push(format!(
            "kappa={kappa} {fixed}: {} rows, surrogate peak {} at n={}, d={}",
            points.len(),
            peak.mse_surrogate,
            peak.n,
            peak.d
        ));
        out.files.push((format!("{name}.csv"), with_header("curve", cfg, &curve_csv(&points))));
        let xs = |p: &CurvePoint| match c.mode {
            SweepMode::N => p.n as f64,
            SweepMode::D => p.d as f64,
        };
        let mut series = vec![Series {
            label: "surrogate".into(),
            points: points.iter().map(|p| (xs(p), p.mse_surrogate)).collect(),
            errors: None,
            line: true,
        }];
        if trials.is_some() {
            let mc: Vec<&McSummary> = points.iter().filter_map(|p| p.mse_mc.as_ref()).collect();
            series.push(Series {
                label: "i.i.d. Monte Carlo".into(),
                points: points
                    .iter()
                    .zip(&mc)
                    .map(|(p, m)| (xs(p), m.mean))
                    .collect(),
                errors: Some(mc.iter().map(|m| 3.0 * m.std_error).collect()),
                line: false,
            });
        }
        let chart = Chart {
            title: format!("{} kappa={kappa} {fixed}", c.profile),
            x_label: axis.into(),
            y_label: "MSE".into(),
            log_x: false,
            log_y: false,
            y_max: Some(4.0 * null.max(c.sigma2).max(f64::MIN_POSITIVE)),
            series,
            hlines: vec![("null estimator".into(), null)],
        };
        out.svgs.push((format!("{name}.svg"), chart.render()));
    }
    Ok(out)
}

pub fn discrepancy_cmd(cfg: &RunConfig) -> Result<Output, CliError> {
    let c = &cfg.discrepancy;
    let kind: DiscrepancyKind = c.kind.parse()?;
    if c.aspects.is_empty() || c.dims.is_empty() {
        return Err(invalid("discrepancy needs at least one aspect and one dimension"));
    }
    if !(c.target > 0.0) {
        return Err(invalid(format!("target must be positive, got {}", c.target)));
    }
    for &a in &c.aspects {
        for &d in &c.dims {
            under_size(d, a)?;
        }
    }
    let mut out = Output::default();
    let mut rows = String::from(DiscrepancyPoint::CSV_HEADER);
    rows.push('\n');
    let mut series = Vec::new();
    for (ai, &aspect) in c.aspects.iter().enumerate() {
        let mut points = Vec::new();
        for &d in &c.dims {
            let s = config::spectrum(&c.profile, d, c.kappa)?;
            let seed = derive_seed(derive_seed(cfg.seed, ai as u64), d as u64);
            let p = if kind == DiscrepancyKind::Bias && d > c.bias_max_d {
                let mut p = discrepancy(kind, &s, aspect, cfg.trials(), seed)?;
                p.flagged = true;
                out.warnings.push(format!(
                    "d={d} exceeds bias_max_d={}: ran {} trials without escalation, row flagged",
                    c.bias_max_d, cfg.trials()
                ));
                p
            } else {
                adaptive_trials(
                    |t| discrepancy(kind, &s, aspect, t, seed),
                    cfg.trials(),
                    c.target,
                    c.cap,
                )?
            };
            if p.flagged && d <= c.bias_max_d {
                out.warnings.push(format!(
                    "d={d} aspect={aspect}: CI half-width {:.1}% above target at cap {}, row flagged",
                    100.0 * p.rel_halfwidth(),
                    c.cap
                ));
            }
            rows.push_str(&p.csv_row());
            rows.push('\n');
            points.push(p);
        }
        match loglog_slope(&points) {
            Ok(fit) => out.report.push(format!(
                "{kind} aspect={aspect}: slope {:.4} intercept {:.4} r2 {:.4} ({} excluded)",
                fit.slope, fit.intercept, fit.r2, fit.excluded
            )),
            Err(e) => out.warnings.push(format!("{kind} aspect={aspect}: no slope ({e})")),
        }
        series.push(Series {
            label: format!("aspect {aspect}"),
            points: points.iter().map(|p| (p.d as f64, p.value)).collect(),
            errors: Some(points.iter().map(|p| 0.5 * (p.ci_high - p.ci_low)).collect()),
            line: true,
        });
    }
    let name = format!("discrepancy_{kind}");
    out.files.push((format!("{name}.csv"), with_header("discrepancy", cfg, &rows)));
    let chart = Chart {
        title: format!("{kind} discrepancy, {}", c.profile),
        x_label: "d".into(),
        y_label: "discrepancy".into(),
        log_x: true,
        log_y: true,
        y_max: None,
        series,
        hlines: Vec::new(),
    };
    out.svgs.push((format!("{name}.svg"), chart.render()));
    Ok(out)
}

pub const SCENARIOS: [&str; 8] = [
    "gaussian_entries",
    "rank1_scaled",
    "rank2_scaled_counterexample",
    "poisson_gram",
    "fixed_gram",
    "normalization",
    "closure_sum",
    "closure_product",
];

fn rank_r(d: usize, r: usize) -> Matrix {
    let mut z = Matrix::zeros(d, d);
    for k in 0..r {
        let u = Vector::from_fn(d, |i, _| ((i + 1) * (k + 1)) as f64 % 5.0 - 1.5);
        let v = Vector::from_fn(d, |i, _| if (i + k) % 2 == 0 { 1.0 } else { -0.5 });
        z += u * v.transpose();
    }
    z
}

fn report_lines(r: &DpReport, out: &mut Output) {
    out.report.push(format!(
        "{}: verdict {} (max |z| {:.3}, threshold {:.3}, {} minors, {} trials)",
        r.generator,
        r.verdict,
        r.max_abs_z,
        r.threshold,
        r.records.len(),
        r.trials
    ));
    if let Some(t) = r.target {
        out.report.push(format!("target det = {t}"));
    }
    if let Some(n) = &r.note {
        out.report.push(format!("note: {n}"));
    }
}

pub fn dp_verify(cfg: &RunConfig) -> Result<Output, CliError> {
    let c = &cfg.dp_verify;
    if !SCENARIOS.contains(&c.scenario.as_str()) {
        return Err(invalid(format!(
            "unknown scenario {:?} (expected one of {})",
            c.scenario,
            SCENARIOS.join(", ")
        )));
    }
    if c.d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let d = if c.eigenvalues.is_empty() { c.d } else { c.eigenvalues.len() };
    let measure = || -> Result<MeasureSpec, CliError> {
        let s = if c.eigenvalues.is_empty() {
            config::spectrum(&c.profile, d, c.kappa)?
        } else {
            ddlab_core::Spectrum::new(c.eigenvalues.clone())?
        };
        Ok(MeasureSpec::gaussian(s))
    };
    let two = vec![0.0, 2.0];
    let (t, seed) = (cfg.trials(), cfg.seed);
    let mut out = Output::default();
    let report = match c.scenario.as_str() {
        "gaussian_entries" => verify_dp(&MatrixGenerator::gaussian_entries(d), &all_sizes(d), t, seed)?,
        "rank1_scaled" => verify_dp(&MatrixGenerator::scaled(rank_r(d, 1), two)?, &all_sizes(d), t, seed)?,
        "rank2_scaled_counterexample" => {
            if d < 2 {
                return Err(invalid("the rank-2 counterexample needs d >= 2"));
            }
            verify_dp(&MatrixGenerator::scaled(rank_r(d, 2), two)?, &all_sizes(d), t, seed)?
        }
        "poisson_gram" => verify_poisson_identity(&measure()?, SizeLaw::Poisson(c.gamma), t, seed)?,
        "fixed_gram" => verify_poisson_identity(&measure()?, SizeLaw::Fixed(d), t, seed)?,
        "closure_sum" => verify_closure(
            &MatrixGenerator::scaled(rank_r(d, 1), two)?,
            &MatrixGenerator::gaussian_entries(d),
            ClosureMode::Sum,
            t,
            seed,
        )?,
        "closure_product" => verify_closure(
            &MatrixGenerator::gaussian_entries(d),
            &MatrixGenerator::gaussian_entries(d),
            ClosureMode::Product,
            t,
            seed,
        )?,
        _ => {
            let (est, target) = verify_normalization(&measure()?, c.gamma, t, seed)?;
            let z = if est.std_error > 0.0 {
                (est.mean - target) / est.std_error
            } else {
                0.0
            };
            let body = format!(
                "d,gamma,mc_mean,mc_se,target,z\n{d},{}\n",
                [c.gamma, est.mean, est.std_error, target, z].map(csv_float).join(",")
            );
            out.report.push(format!(
                "normalization: E det(X X^T) = {} +- {} vs target {target} (z = {z:.3})",
                est.mean, est.std_error
            ));
            out.files.push(("dp_normalization.csv".into(), with_header("dp-verify", cfg, &body)));
            return Ok(out);
        }
    };
    report_lines(&report, &mut out);
    out.files.push((
        format!("dp_{}.csv", c.scenario),
        with_header("dp-verify", cfg, &report.to_csv()),
    ));
    Ok(out)
}

pub fn sample(cfg: &RunConfig) -> Result<Output, CliError> {
    let c = &cfg.sample;
    if c.n == 0 || c.d == 0 || c.repeat == 0 {
        return Err(invalid("n, d and repeat must be at least 1"));
    }
    let law: EntryLaw = c.law.parse()?;
    let s = config::spectrum(&c.profile, c.d, c.kappa)?;
    let p = config::problem(s.clone(), c.sigma2, c.snr, &c.w_star)?;
    let steps = (c.chain_steps > 0).then_some(c.chain_steps);
    let sampler = SurrogateSampler::new(MeasureSpec::new(s, law), c.n, steps)?;
    let first = sampler.draw_indexed(cfg.seed, 0)?;
    let stats: Vec<(usize, f64)> = map_chunks(c.repeat, |range| {
        range
            .map(|i| {
                let draw = sampler.draw_indexed(cfg.seed, i as u64)?;
                Ok((draw.k(), draw.acceptance_rate()))
            })
            .collect::<Result<Vec<_>, ddlab_core::Error>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?
    .into_iter()
    .flatten()
    .collect();
    let y = gen_responses(&first.x, &p.w_star, c.sigma2, derive_seed(cfg.seed, 1))?;
    let design = DesignSample::new(first.x.clone(), y)?;
    let regime = match c.n.cmp(&c.d) {
        std::cmp::Ordering::Less => "under",
        std::cmp::Ordering::Equal => "interpolating",
        std::cmp::Ordering::Greater => "over",
    };
    let mut summary = format!(
        "regime = \"{regime}\"\nn = {}\nd = {}\nk = {}\nchain_rows = {}\nchain_steps = {}\nacceptance_rate = {}\n",
        c.n,
        c.d,
        first.k(),
        first.chain_rows,
        first.proposals,
        first.acceptance_rate()
    );
    out_summary_repeat(&mut summary, &stats);
    let mut out = Output::default();
    out.report.push(format!(
        "{regime}-determined draw: k = {} rows (chain acceptance {:.3})",
        first.k(),
        first.acceptance_rate()
    ));
    if c.repeat > 1 {
        let mut sizes = String::from("index,k,acceptance_rate\n");
        for (i, (k, a)) in stats.iter().enumerate() {
            sizes.push_str(&format!("{i},{k},{}\n", csv_float(*a)));
        }
        out.files.push(("sample_sizes.csv".into(), with_header("sample", cfg, &sizes)));
        out.report.push(summary.lines().filter(|l| l.starts_with("mean_k")).collect::<Vec<_>>().join(""));
    }
    out.files.push(("sample.csv".into(), with_header("sample", cfg, &design.to_csv())));
    out.files.push(("sample_summary.txt".into(), with_header("sample", cfg, &summary)));
    Ok(out)
}

fn out_summary_repeat(summary: &mut String, stats: &[(usize, f64)]) {
    if stats.len() < 2 {
        return;
    }
    let mut acc = MeanAccumulator::new(2);
    for (k, a) in stats {
        acc.push(&[*k as f64, *a]);
    }
    let est = acc.finish(&Vector::zeros(2));
    summary.push_str(&format!(
        "repeat = {}\nmean_k = {}\nse_k = {}\nmean_acceptance_rate = {}\n",
        stats.len(),
        est.mean[0],
        est.std_error[0],
        est.mean[1]
    ));
}
