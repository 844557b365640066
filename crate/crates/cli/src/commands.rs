use crate::args::*;
use crate::manifest::Run;
use freedenoise_core::convolution::{
    free_add_convolve_with, free_mult_convolve_circle_with, free_mult_convolve_positive_with, ConvolutionConfig, ConvolutionOutput,
};
use freedenoise_core::denoiser::{self, value_range, CFreeCase, DenoiserCurve, ScalarFn};
use freedenoise_core::export::{self, num, schema};
use freedenoise_core::overlap::{overlap_from, OverlapTable};
use freedenoise_core::transforms::{self, BoundarySamples, CircleSamples, InversionOptions, TransformKind};
use freedenoise_core::{Complex64 as C, Error, Measure, MeasureSpec, Result};
use freedenoise_lab::experiment::{self, Estimator, EmpiricalCurve, MIN_BIN};
use freedenoise_lab::{ExperimentConfig, Model, SignalSpec};
use serde_json::json;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

fn measure(run: &mut Run, role: &str, path: &Path) -> Result<Measure> {
    MeasureSpec::from_json(&run.read(role, path)?)?.build()
}

fn required<'a, T>(v: &'a Option<T>, flag: &str, kind: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::InvalidInput(format!("--kind {kind} needs --{flag}")))
}

fn convolve_op(op: Op, mu: &Measure, nu: &Measure, cfg: &ConvolutionConfig) -> Result<ConvolutionOutput> {
    match op {
        Op::Add => free_add_convolve_with(mu, nu, cfg),
        Op::Mult => free_mult_convolve_positive_with(mu, nu, cfg),
        Op::Circle => free_mult_convolve_circle_with(mu, nu, cfg),
    }
}

fn csv_file(run: &mut Run, file: &str, schema: &str, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    run.write(file, |b| {
        render(b)?;
        Ok(schema.into())
    })
}

pub fn convolve(a: &ConvolveArgs, run: &mut Run) -> Result<()> {
    let mu = measure(run, "mu", &a.mu)?;
    let nu = measure(run, "nu", &a.nu)?;
    let cfg = a.grid.config();
    run.param("convolution", cfg);
    let out = convolve_op(a.op, &mu, &nu, &cfg)?;
    run.diag("defect", out.defect);
    run.diag("note", &out.note);
    run.write("result.json", |b| {
        b.extend(export::measure_json(&out.result)?.as_bytes());
        b.push(b'\n');
        Ok(schema::MEASURE_JSON.into())
    })?;
    csv_file(run, "atoms.csv", schema::ATOM_TABLE, |b| export::write_atom_table(b, &out.atom_table))?;
    csv_file(run, "subordination.csv", schema::SUBORDINATION, |b| export::write_subordination(b, &out.subordination))?;
    csv_file(run, "density.csv", schema::DENSITY, |b| export::write_density(b, &out.result))
}

fn curve_diagnostics(run: &mut Run, curve: &DenoiserCurve, expected: Option<C>, range: Option<(f64, f64)>) {
    let cons = curve.conservation();
    run.diag("conservation", [cons.re, cons.im]);
    if let Some(e) = expected {
        run.diag("conservation_expected", [e.re, e.im]);
        run.diag("conservation_error", (cons - e).norm());
    }
    if let Some((lo, hi)) = range {
        run.diag("range_violation", curve.range_violation(lo, hi));
    }
    run.diag("imaginary_residue", curve.residue);
    run.diag("cross_check", curve.cross_check);
    run.diag("gaps", curve.gaps.len());
}

pub fn denoise(a: &DenoiseArgs, run: &mut Run) -> Result<()> {
    let f = ScalarFn::parse(&a.f)?;
    let cfg = a.grid.config();
    run.param("f", &f);
    let kind = format!("{:?}", a.kind).to_lowercase();
    let curve = match a.kind {
        DenoiseKind::Additive | DenoiseKind::Mult | DenoiseKind::Circle => {
            let mu = measure(run, "mu", required(&a.mu, "mu", &kind)?)?;
            let nu = measure(run, "nu", required(&a.nu, "nu", &kind)?)?;
            run.param("convolution", cfg);
            let op = match a.kind {
                DenoiseKind::Additive => Op::Add,
                DenoiseKind::Mult => Op::Mult,
                _ => Op::Circle,
            };
            let conv = convolve_op(op, &mu, &nu, &cfg)?;
            run.diag("defect", conv.defect);
            let curve = match (op, &f) {
                (Op::Add, ScalarFn::Identity) => denoiser::additive_identity_from(&conv)?,
                (Op::Add, _) => denoiser::additive_general_from(&mu, &conv, |x| f.eval(x))?,
                (Op::Mult, ScalarFn::Identity) => denoiser::multiplicative_identity_from(&mu, &conv)?,
                (Op::Mult, _) => denoiser::multiplicative_general_from(&mu, &conv, |x| f.eval(x))?,
                (Op::Circle, _) => denoiser::circle_from(&mu, &conv, |th| f.eval_circle(th), !f.is_real_on_circle())?,
            };
            let (expected, range) = if op == Op::Circle {
                (mu.integrate_complex(|th| f.eval_circle(th))?, None)
            } else {
                (C::new(mu.integrate(|x| f.eval(x))?, 0.0), Some(value_range(&mu, |x| f.eval(x))))
            };
            curve_diagnostics(run, &curve, Some(expected), range);
            curve
        }
        DenoiseKind::TweedieAdd | DenoiseKind::LedoitPeche => {
            if f != ScalarFn::Identity {
                return Err(Error::UnsupportedCase(format!("--kind {kind} denoises f = id only")));
            }
            let target = measure(run, "target", required(&a.target, "target", &kind)?)?;
            let curve = if a.kind == DenoiseKind::TweedieAdd {
                let s2 = *required(&a.sigma2, "sigma2", &kind)?;
                run.param("sigma2", s2);
                denoiser::denoise_tweedie_additive(&target, s2)?
            } else {
                let lambda = *required(&a.lambda, "lambda", &kind)?;
                run.param("lambda", lambda);
                denoiser::denoise_ledoit_peche(&target, lambda)?
            };
            curve_diagnostics(run, &curve, None, None);
            curve
        }
        DenoiseKind::Cfree => {
            let name = required(&a.case, "case", &kind)?.clone();
            let signal = match &a.signal {
                Some(p) => Some(measure(run, "signal", p)?),
                None => None,
            };
            run.param("case", &name);
            run.param("tau", a.tau);
            let out = denoiser::denoise_cfree_radon_nikodym(&CFreeCase::parse(&name, signal, a.tau)?)?;
            run.diag("chi_mass", out.chi_mass);
            curve_diagnostics(run, &out.curve, None, None);
            out.curve
        }
    };
    run.write("curve.csv", |b| Ok(export::write_denoiser_curve(b, &curve)?.into()))
}

pub fn overlap(a: &OverlapArgs, run: &mut Run) -> Result<()> {
    let mu = measure(run, "mu", &a.mu)?;
    let nu = measure(run, "nu", &a.nu)?;
    let cfg = a.grid.config();
    run.param("convolution", cfg);
    let conv = convolve_op(a.setting, &mu, &nu, &cfg)?;
    let table = overlap_from(&mu, &conv)?;
    let (rows, cols) = stochasticity(&table);
    run.diag("defect", conv.defect);
    run.diag("max_row_defect", rows);
    run.diag("max_column_defect", cols);
    run.diag("gaps", table.gaps.len());
    csv_file(run, "overlap.csv", schema::OVERLAP_TABLE, |b| export::write_overlap_table(b, &table))?;
    csv_file(run, "overlap_branches.csv", schema::OVERLAP_BRANCHES, |b| export::write_overlap_branches(b, &table))
}

/// Largest |∫o(s,·) − 1| over rows and |∫o(·,t)dμ − 1| over columns.
fn stochasticity(t: &OverlapTable) -> (f64, f64) {
    let rows = (0..t.s_grid.len()).map(|i| (t.row_mass(i) - 1.0).abs()).fold(0.0, f64::max);
    let cols = (0..t.t_grid.len()).map(|j| (t.column_mass(j) - 1.0).abs()).fold(0.0, f64::max);
    (rows, cols)
}

pub fn transform(a: &TransformArgs, run: &mut Run) -> Result<()> {
    let m = measure(run, "measure", &a.measure)?;
    if a.points < 2 {
        return Err(Error::InvalidInput("--points must be ≥ 2".into()));
    }
    if !(a.eps > 0.0 && a.eps < 1.0) {
        return Err(Error::InvalidInput(format!("--eps {} outside (0, 1)", a.eps)));
    }
    let kind = match a.kind {
        TransformName::Cauchy => TransformKind::Cauchy,
        TransformName::Moment => TransformKind::Moment,
        TransformName::Boolean => TransformKind::BooleanCumulant,
        TransformName::Reciprocal => TransformKind::Reciprocal,
        TransformName::Hilbert => TransformKind::Hilbert,
    };
    let circle = m.domain().is_circle();
    let (lo, hi) = if circle {
        (a.from.unwrap_or(0.0), a.to.unwrap_or(TAU))
    } else {
        let (s0, s1) = m.support();
        let pad = 0.1 * (s1 - s0).max(1e-3);
        (a.from.unwrap_or(s0 - pad), a.to.unwrap_or(s1 + pad))
    };
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("empty grid [{lo}, {hi}]")));
    }
    // the circle grid is periodic: 2π itself is not repeated
    let steps = if circle { a.points } else { a.points - 1 };
    let t: Vec<f64> = (0..a.points).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
    run.param("grid", json!({ "from": lo, "to": hi, "points": a.points }));
    run.param("eps", a.eps);
    run.param("point", if circle { "(1-eps)·exp(-iθ)" } else { "t + i·eps" });
    let rows = t
        .iter()
        .map(|&x| {
            let z = if circle { C::from_polar(1.0 - a.eps, -x) } else { C::new(x, a.eps) };
            transforms::evaluate(&m, kind, z).map(|g| (x, a.eps, g))
        })
        .collect::<Result<Vec<_>>>()?;
    csv_file(run, "transform.csv", schema::TRANSFORM, |b| export::write_transform(b, &rows))?;
    if a.invert {
        let opts = InversionOptions { domain: m.domain(), ..InversionOptions::default() };
        run.param("inversion", json!({ "atol_atom": opts.atol_atom, "max_defect": opts.max_defect }));
        let inv = if circle {
            transforms::poisson_invert(&CircleSamples::from_measure(&m, t, a.eps), &opts)?
        } else {
            transforms::stieltjes_invert(&BoundarySamples::from_measure(&m, t, a.eps), &opts)?
        };
        run.diag("inversion_defect", inv.defect);
        run.write("inverted.json", |b| {
            b.extend(export::measure_json(&inv.measure)?.as_bytes());
            b.push(b'\n');
            Ok(schema::MEASURE_JSON.into())
        })?;
        csv_file(run, "inverted_density.csv", schema::DENSITY, |b| export::write_density(b, &inv.measure))?;
    }
    Ok(())
}

const LOSSES: &str = "losses/1";
const EMPIRICAL_CURVE: &str = "empirical_curve/1";
const DEVIATION: &str = "curve_deviation/1";
const MOMENTS: &str = "moments/1";
const SUMMARY: &str = "simulate_summary/1";

fn experiment_config(a: &SimulateArgs, run: &mut Run) -> Result<ExperimentConfig> {
    if let Some(p) = &a.config {
        return ExperimentConfig::from_json(&run.read("config", p)?);
    }
    let model = match a.model.ok_or_else(|| Error::InvalidInput("simulate needs --model or --config".into()))? {
        ModelName::Goe => Model::Goe { sigma2: a.sigma2, complex: false },
        ModelName::Gue => Model::Goe { sigma2: a.sigma2, complex: true },
        ModelName::Wishart => Model::Wishart { gamma: a.gamma },
        ModelName::Haar => Model::Haar,
    };
    let path = a.signal.as_ref().ok_or_else(|| Error::InvalidInput("simulate needs --signal".into()))?;
    let signal: SignalSpec =
        serde_json::from_str(&run.read("signal", path)?).map_err(|e| Error::InvalidInput(format!("signal JSON: {e}")))?;
    let n = match (&signal, a.n) {
        (_, Some(n)) => n,
        (SignalSpec::Eigenvalues { eigenvalues }, None) => eigenvalues.len(),
        _ => return Err(Error::InvalidInput("simulate needs --n".into())),
    };
    let cfg = ExperimentConfig { model, signal, n, trials: a.trials, seed: a.seed };
    cfg.validate()?;
    Ok(cfg)
}

/// A curve CSV as written by `denoise`: bulk rows interpolated, atom and zero
/// rows exact, gap rows skipped.
pub fn estimator_from_csv(name: &str, text: &str) -> Result<Estimator> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |e: &dyn std::fmt::Display| Error::InvalidInput(format!("curve CSV: {e}"));
    let header = r.headers().map_err(|e| bad(&e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ti, hi, bi) = match (col("t"), col("h"), col("branch")) {
        (Some(t), Some(h), Some(b)) => (t, h, b),
        _ => return Err(bad(&"needs t, h and branch columns")),
    };
    let imag = col("h_imag");
    let (mut bulk, mut exact) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        let field = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|_| bad(&format!("bad number {:?}", &rec[i]))) };
        if &rec[bi] == "gap" {
            continue;
        }
        let h = C::new(field(hi)?, imag.map(field).transpose()?.unwrap_or(0.0));
        match &rec[bi] {
            "bulk" => bulk.push((field(ti)?, h)),
            "atom" | "zero" => exact.push((field(ti)?, h)),
            other => return Err(bad(&format!("unknown branch {other:?}"))),
        }
    }
    Estimator::from_points(name, bulk, exact)
}

pub fn simulate(a: &SimulateArgs, run: &mut Run) -> Result<()> {
    let cfg = experiment_config(a, run)?;
    run.param("experiment", &cfg);
    run.param("min_bin_samples", MIN_BIN);
    run.param("curve_tolerance", "max(0.05·max(|h|,1), 3 s.e.)");
    run.param("moment_tolerance", "3 s.e.");
    let h = match &a.compare {
        Some(p) => estimator_from_csv("h", &run.read("compare", p)?)?,
        None => match experiment::free_denoiser_curve(&cfg) {
            Ok(curve) => {
                run.write("analytic.csv", |b| Ok(export::write_denoiser_curve(b, &curve)?.into()))?;
                Estimator::from_curve("h", &curve)?
            }
            Err(Error::UnsupportedCase(why)) => {
                run.diag("analytic", why);
                let id = Estimator::identity(&cfg);
                Estimator::new("h", move |t| id.eval(t))
            }
            Err(e) => return Err(e),
        },
    };
    let mut estimators = vec![h.clone()];
    if cfg.model != Model::Haar {
        estimators.push(Estimator::linear_shrinkage(&cfg)?);
    }
    let (board, trials) = experiment::scoreboard(&cfg, &estimators)?;
    run.write("losses.csv", |b| {
        board.write_csv(b)?;
        Ok(LOSSES.into())
    })?;

    let moments = experiment::moment_bridge(&cfg, &trials)?;
    run.write("moments.csv", |b| {
        write_moments(b, &moments)?;
        Ok(MOMENTS.into())
    })?;

    let mut curve_summary = serde_json::Value::Null;
    match EmpiricalCurve::from_trials(&trials) {
        Ok(curve) => {
            run.write("curve.csv", |b| {
                curve.write_csv(b)?;
                Ok(EMPIRICAL_CURVE.into())
            })?;
            let dev = curve.compare(&h);
            run.write("deviation.csv", |b| {
                write_deviation(b, &dev)?;
                Ok(DEVIATION.into())
            })?;
            curve_summary = json!({
                "bins": curve.bins.len(),
                "compared": dev.len(),
                "passed": dev.iter().filter(|d| d.pass).count(),
                "max_gap": dev.iter().map(|d| (d.mean_xi - d.mean_h).norm()).fold(0.0, f64::max),
            });
        }
        Err(Error::InsufficientData(why)) => run.diag("curve", why),
        Err(e) => return Err(e),
    }

    let summary = json!({
        "losses": board.summary.iter().map(|s| json!({ "estimator": s.estimator, "mean": s.mean, "stderr": s.stderr })).collect::<Vec<_>>(),
        "oracle_violations": board.oracle_violations.len(),
        "curve": curve_summary,
        "moments": { "compared": moments.len(), "passed": moments.iter().filter(|m| m.pass).count() },
    });
    run.write("summary.json", |b| {
        serde_json::to_writer_pretty(&mut *b, &summary).map_err(|e| Error::Io(e.to_string()))?;
        b.push(b'\n');
        Ok(SUMMARY.into())
    })
}

fn io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_moments<W: Write>(w: W, rows: &[experiment::MomentCheck]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["p", "q", "mean", "mean_imag", "stderr", "predicted", "predicted_imag", "pass"]).map_err(io)?;
    for m in rows {
        out.write_record([
            m.p.to_string(),
            m.q.to_string(),
            num(m.mean.re),
            num(m.mean.im),
            num(m.stderr),
            num(m.predicted.re),
            num(m.predicted.im),
            u8::from(m.pass).to_string(),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

fn write_deviation<W: Write>(w: W, rows: &[experiment::BinDeviation]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_center", "n", "mean_xi", "mean_h", "gap", "stderr", "tolerance", "pass"]).map_err(io)?;
    for d in rows {
        out.write_record([
            num(d.center),
            d.n.to_string(),
            num(d.mean_xi.re),
            num(d.mean_h.re),
            num((d.mean_xi - d.mean_h).norm()),
            num(d.stderr),
            num(d.tolerance),
            u8::from(d.pass).to_string(),
        ])
        .map_err(io)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}
