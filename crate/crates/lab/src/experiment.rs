//! Trials, loss tables, binned oracle curves and the moment bridge.

use crate::linalg;
use crate::model::{sample_model, ExperimentConfig, Model, Sample};
use crate::moments::{self, PAIRS};
use crate::oracle::{decompose, Decomposition, Oracle};
use freedenoise_core::convolution::{free_add_convolve, free_mult_convolve_positive};
use freedenoise_core::denoiser::{denoise_circle, denoise_ledoit_peche, denoise_tweedie_additive, DenoiserCurve, ScalarFn};
use freedenoise_core::export::num;
use freedenoise_core::overlap::{empirical_overlap, freedman_diaconis, EmpiricalOverlap};
use freedenoise_core::{Error, Measure, Result};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use std::io::Write;
use std::sync::Arc;

pub const ORACLE: &str = "oracle";
pub const IDENTITY: &str = "identity";
/// Bins with fewer samples are reported but never compared.
pub const MIN_BIN: usize = 20;
pub const MIN_CURVE_TRIALS: usize = 10;

/// A named shrinkage function g, applied to eigenvalues (angles on the
/// circle).
#[derive(Clone)]
pub struct Estimator {
    pub name: String,
    f: Arc<dyn Fn(f64) -> C + Send + Sync>,
}

impl std::fmt::Debug for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Estimator").field("name", &self.name).finish()
    }
}

impl Estimator {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> C + Send + Sync + 'static) -> Self {
        Estimator { name: name.into(), f: Arc::new(f) }
    }

    pub fn real(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, move |t| C::new(f(t), 0.0))
    }

    /// g(λ) = λ, or g(θ) = e^{iθ} for a unitary.
    pub fn identity(cfg: &ExperimentConfig) -> Self {
        match cfg.model {
            Model::Haar => Self::new(IDENTITY, |th| C::from_polar(1.0, th)),
            _ => Self::real(IDENTITY, |t| t),
        }
    }

    /// Piecewise-linear reading of an analytic curve: bulk nodes
    /// interpolated, held constant beyond the hull, atom and zero branches
    /// taken at their exact location.
    pub fn from_curve(name: impl Into<String>, curve: &DenoiserCurve) -> Result<Self> {
        let bulk = curve.t_grid.iter().zip(curve.h_values.iter().zip(&curve.h_imag)).map(|(&t, (&a, &b))| (t, C::new(a, b))).collect();
        let mut exact: Vec<(f64, C)> = curve.atom_values.iter().map(|a| (a.gamma, C::new(a.h, a.h_imag))).collect();
        if let Some(z) = curve.zero_value {
            exact.push((0.0, C::new(z.h, 0.0)));
        }
        Self::from_points(name, bulk, exact)
    }

    /// Same reading from raw (t, h) points; `bulk` must be sorted by t.
    pub fn from_points(name: impl Into<String>, bulk: Vec<(f64, C)>, exact: Vec<(f64, C)>) -> Result<Self> {
        if bulk.is_empty() {
            return Err(Error::InsufficientData("denoiser curve has no bulk nodes".into()));
        }
        if bulk.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidInput("curve nodes must be sorted".into()));
        }
        let (t, h): (Vec<f64>, Vec<C>) = bulk.into_iter().unzip();
        let scale = t.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        Ok(Self::new(name, move |x| {
            if let Some((_, v)) = exact.iter().find(|(g, _)| (x - g).abs() <= 1e-9 * scale) {
                return *v;
            }
            let k = t.partition_point(|&s| s < x);
            if k == 0 {
                return h[0];
            }
            if k == t.len() {
                return h[k - 1];
            }
            let a = (x - t[k - 1]) / (t[k] - t[k - 1]);
            h[k - 1] * (1.0 - a) + h[k] * a
        }))
    }

    /// Best affine function of C in L²: φ(a) + Cov(a, c)/Var(c)·(λ − φ(c)),
    /// from the free moments.
    pub fn linear_shrinkage(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.model == Model::Haar {
            return Err(Error::UnsupportedCase("linear shrinkage of a unitary".into()));
        }
        let ma = cfg.signal_eigenvalues()?.iter().sum::<f64>() / cfg.n as f64;
        let mc = moments::free_prediction(cfg, 0, 1)?.re;
        let cov = moments::free_prediction(cfg, 1, 1)?.re - ma * mc;
        let var = moments::free_prediction(cfg, 0, 2)?.re - mc * mc;
        let slope = if var > 0.0 { cov / var } else { 0.0 };
        Ok(Self::real("linear", move |t| ma + slope * (t - mc)))
    }

    pub fn eval(&self, t: f64) -> C {
        (self.f)(t)
    }
}

/// The free denoiser for the model's limit, in the coordinates of the
/// observed eigenvalues: Tweedie on μ⊞σ_{σ²} (additive), Ledoit–Péché on
/// μ⊠π_γ read at γλ (Wishart), the circle identity denoiser against Haar.
pub fn free_denoiser_curve(cfg: &ExperimentConfig) -> Result<DenoiserCurve> {
    let mu = cfg.signal_measure()?;
    match cfg.model {
        Model::Goe { sigma2, .. } => {
            if sigma2 == 0.0 {
                return Err(Error::UnsupportedCase("no noise: the denoiser is the identity".into()));
            }
            let target = free_add_convolve(&mu, &Measure::semicircle(sigma2)?)?.result;
            denoise_tweedie_additive(&target, sigma2)
        }
        Model::Wishart { gamma } => {
            let target = free_mult_convolve_positive(&mu, &Measure::free_poisson(gamma)?)?.result;
            let mut c = denoise_ledoit_peche(&target, gamma)?;
            c.t_grid.iter_mut().chain(c.gaps.iter_mut()).for_each(|t| *t /= gamma);
            c.atom_values.iter_mut().for_each(|a| a.gamma /= gamma);
            Ok(c)
        }
        Model::Haar => denoise_circle(&mu, &Measure::haar()?, &ScalarFn::Identity),
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    /// sorted observed eigenvalues (angles on the circle)
    pub eigenvalues: Vec<f64>,
    /// ξᵢ, tie-grouped
    pub oracle_values: Vec<C>,
    /// N⁻¹‖A − g(C)‖²_F per estimator, the oracle first
    pub losses: Vec<(String, f64)>,
    /// N⁻¹Tr(AᵖCᑫ) over [`PAIRS`]
    pub moments: Vec<C>,
}

impl TrialResult {
    pub fn loss(&self, name: &str) -> Option<f64> {
        self.losses.iter().find(|(n, _)| n == name).map(|(_, l)| *l)
    }
}

/// Losses through the projection identity
/// ‖A − g(C)‖² = ‖A − P(A)‖² + Σᵢ|ξᵢ − g(λᵢ)|², P(A) = Σᵢ ξᵢ vᵢvᵢ*.
fn losses(sample: &Sample, o: &Oracle, estimators: &[Estimator]) -> Vec<(String, f64)> {
    let n = sample.n as f64;
    let a2 = pairwise_sum(&sample.a.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>());
    let p2 = pairwise_sum(&o.xi.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>());
    let residual = (a2 - p2).max(0.0) / n;
    let mut out = vec![(ORACLE.to_string(), residual)];
    for e in estimators {
        let d: Vec<f64> = o.points.iter().zip(&o.xi).map(|(&t, x)| (e.eval(t) - x).norm_sqr()).collect();
        out.push((e.name.clone(), residual + pairwise_sum(&d) / n));
    }
    out
}

/// Sample, decompose and score one trial.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, estimators: &[Estimator]) -> Result<TrialResult> {
    let sample = sample_model(cfg, trial)?;
    let d = decompose(&sample.c, sample.n)?;
    Ok(score(&sample, &d, trial, estimators))
}

fn score(sample: &Sample, d: &Decomposition, trial: usize, estimators: &[Estimator]) -> TrialResult {
    let o = sample.oracle(d);
    TrialResult {
        trial,
        losses: losses(sample, &o, estimators),
        moments: moments::empirical_moments(sample, d),
        eigenvalues: o.points,
        oracle_values: o.xi,
    }
}

/// All trials of a config, in parallel; results come back in trial order and
/// do not depend on the thread count.
pub fn run(cfg: &ExperimentConfig, estimators: &[Estimator]) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            linalg::sequential_kernels();
            run_trial(cfg, t, estimators)
        })
        .collect()
}

/// Σ|⟨eₖ, vₗ⟩|²/N δ_(aₖ, λₗ) for one trial of a real-spectrum model.
pub fn trial_overlap(cfg: &ExperimentConfig, trial: usize) -> Result<EmpiricalOverlap> {
    let sample = sample_model(cfg, trial)?;
    let d = decompose(&sample.c, sample.n)?;
    let n = sample.n;
    let sq = d.squared_overlaps();
    // sq is column-per-eigenvector; the table wants row k = basis vector k
    let mut rows = vec![0.0; n * n];
    for l in 0..n {
        for k in 0..n {
            rows[k * n + l] = sq[l * n + k];
        }
    }
    let lambda: Vec<f64> = match cfg.model {
        Model::Haar => sample.a.iter().map(|z| z.arg().rem_euclid(std::f64::consts::TAU)).collect(),
        _ => sample.a.iter().map(|z| z.re).collect(),
    };
    empirical_overlap(&lambda, &d.points, &rows)
}

/// Cascade summation: the same bits for the same inputs whatever the
/// thread layout that produced them.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = pairwise_sum(x) / n;
    if x.len() < 2 {
        return (m, f64::NAN);
    }
    let v = pairwise_sum(&x.iter().map(|v| (v - m) * (v - m)).collect::<Vec<_>>()) / (n - 1.0);
    (m, (v / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSummary {
    pub estimator: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct Scoreboard {
    /// (estimator, trial, loss) in trial order
    pub rows: Vec<(String, usize, f64)>,
    pub summary: Vec<LossSummary>,
    /// (trial, estimator) pairs where the oracle lost; empty by the
    /// projection property
    pub oracle_violations: Vec<(usize, String)>,
}

impl Scoreboard {
    pub fn from_trials(trials: &[TrialResult]) -> Self {
        let mut rows = Vec::new();
        let mut violations = Vec::new();
        for t in trials {
            let oracle = t.losses[0].1;
            for (name, l) in &t.losses {
                rows.push((name.clone(), t.trial, *l));
                if *l < oracle * (1.0 - 1e-12) {
                    violations.push((t.trial, name.clone()));
                }
            }
        }
        let names: Vec<String> = trials.first().map(|t| t.losses.iter().map(|(n, _)| n.clone()).collect()).unwrap_or_default();
        let summary = names
            .iter()
            .map(|name| {
                let x: Vec<f64> = trials.iter().filter_map(|t| t.loss(name)).collect();
                let (mean, stderr) = mean_se(&x);
                LossSummary { estimator: name.clone(), mean, stderr }
            })
            .collect();
        Scoreboard { rows, summary, oracle_violations: violations }
    }

    pub fn get(&self, name: &str) -> Option<&LossSummary> {
        self.summary.iter().find(|s| s.estimator == name)
    }

    /// estimator, trial, loss
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(["estimator", "trial", "loss"]).map_err(io)?;
        for (name, trial, loss) in &self.rows {
            out.write_record([name.clone(), trial.to_string(), num(*loss)]).map_err(io)?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Loss table for the given estimators plus the identity and the oracle.
pub fn scoreboard(cfg: &ExperimentConfig, estimators: &[Estimator]) -> Result<(Scoreboard, Vec<TrialResult>)> {
    let mut all = vec![Estimator::identity(cfg)];
    all.extend(estimators.iter().filter(|e| e.name != IDENTITY && e.name != ORACLE).cloned());
    let trials = run(cfg, &all)?;
    Ok((Scoreboard::from_trials(&trials), trials))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub mean_xi: C,
    pub stderr: f64,
    pub n: usize,
}

/// Oracle values binned by observed eigenvalue over all trials.
#[derive(Debug, Clone)]
pub struct EmpiricalCurve {
    pub bins: Vec<CurveBin>,
    samples: Vec<(f64, C)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinDeviation {
    pub center: f64,
    pub n: usize,
    pub mean_xi: C,
    pub mean_h: C,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn complex_se(x: &[C]) -> (C, f64) {
    let (re, sr) = mean_se(&x.iter().map(|z| z.re).collect::<Vec<_>>());
    let (im, si) = mean_se(&x.iter().map(|z| z.im).collect::<Vec<_>>());
    (C::new(re, im), sr.hypot(si))
}

impl EmpiricalCurve {
    pub fn from_trials(trials: &[TrialResult]) -> Result<Self> {
        if trials.len() < MIN_CURVE_TRIALS {
            return Err(Error::InsufficientData(format!("{} trials, need {MIN_CURVE_TRIALS}", trials.len())));
        }
        let mut samples: Vec<(f64, C)> =
            trials.iter().flat_map(|t| t.eigenvalues.iter().copied().zip(t.oracle_values.iter().copied())).collect();
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let edges = freedman_diaconis(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
        let mut bins = Vec::with_capacity(edges.len().saturating_sub(1));
        let mut start = 0;
        for k in 0..edges.len().saturating_sub(1) {
            let last = k + 2 == edges.len();
            let end = if last { samples.len() } else { start + samples[start..].partition_point(|s| s.0 < edges[k + 1]) };
            let xi: Vec<C> = samples[start..end].iter().map(|s| s.1).collect();
            let (mean_xi, stderr) = if xi.is_empty() { (C::new(f64::NAN, 0.0), f64::NAN) } else { complex_se(&xi) };
            bins.push(CurveBin { lo: edges[k], hi: edges[k + 1], center: 0.5 * (edges[k] + edges[k + 1]), mean_xi, stderr, n: xi.len() });
            start = end;
        }
        Ok(EmpiricalCurve { bins, samples })
    }

    pub fn populated(&self) -> impl Iterator<Item = &CurveBin> {
        self.bins.iter().filter(|b| b.n >= MIN_BIN)
    }

    /// A single bin, refused when it is too sparse to estimate.
    pub fn bin(&self, k: usize) -> Result<&CurveBin> {
        let b = self.bins.get(k).ok_or_else(|| Error::InvalidInput(format!("no bin {k}")))?;
        if b.n < MIN_BIN {
            return Err(Error::InsufficientData(format!("bin {k} holds {} samples, need {MIN_BIN}", b.n)));
        }
        Ok(b)
    }

    /// Per populated bin: mean ξ against the mean of h over the same
    /// eigenvalues; passes when the gap is within max(5%·max(|h|, 1), 3 s.e.),
    /// the s.e. taken from the per-eigenvalue differences.
    pub fn compare(&self, h: &Estimator) -> Vec<BinDeviation> {
        let mut out = Vec::new();
        let mut start = 0;
        for b in &self.bins {
            let s = &self.samples[start..start + b.n];
            start += b.n;
            if b.n < MIN_BIN {
                continue;
            }
            let hv: Vec<C> = s.iter().map(|(t, _)| h.eval(*t)).collect();
            let diff: Vec<C> = s.iter().zip(&hv).map(|((_, x), hh)| x - hh).collect();
            let (mean_h, _) = complex_se(&hv);
            let (gap, stderr) = complex_se(&diff);
            let tolerance = (0.05 * mean_h.norm().max(1.0)).max(3.0 * stderr);
            out.push(BinDeviation { center: b.center, n: b.n, mean_xi: b.mean_xi, mean_h, stderr, tolerance, pass: gap.norm() <= tolerance });
        }
        out
    }

    /// bin_center, mean_xi, stderr, n (plus mean_xi_imag for complex ξ)
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let complex = self.bins.iter().any(|b| b.mean_xi.im != 0.0);
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        if complex {
            out.write_record(["bin_center", "mean_xi", "mean_xi_imag", "stderr", "n"]).map_err(io)?;
        } else {
            out.write_record(["bin_center", "mean_xi", "stderr", "n"]).map_err(io)?;
        }
        for b in &self.bins {
            let mut rec = vec![num(b.center), num(b.mean_xi.re)];
            if complex {
                rec.push(num(b.mean_xi.im));
            }
            rec.extend([num(b.stderr), b.n.to_string()]);
            out.write_record(&rec).map_err(io)?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn empirical_denoiser_curve(cfg: &ExperimentConfig) -> Result<EmpiricalCurve> {
    if cfg.trials < MIN_CURVE_TRIALS {
        return Err(Error::InsufficientData(format!("{} trials, need {MIN_CURVE_TRIALS}", cfg.trials)));
    }
    EmpiricalCurve::from_trials(&run(cfg, &[])?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub p: usize,
    pub q: usize,
    pub mean: C,
    pub stderr: f64,
    pub predicted: C,
    pub pass: bool,
}

/// Empirical N⁻¹Tr(AᵖCᑫ) across trials against the free prediction, within
/// 3 s.e. (an exactly deterministic moment must match to rounding).
pub fn moment_bridge(cfg: &ExperimentConfig, trials: &[TrialResult]) -> Result<Vec<MomentCheck>> {
    PAIRS
        .iter()
        .enumerate()
        .map(|(k, &(p, q))| {
            let x: Vec<C> = trials.iter().map(|t| t.moments[k]).collect();
            let (mean, stderr) = complex_se(&x);
            let predicted = moments::free_prediction(cfg, p, q)?;
            let slack = 3.0 * stderr.max(1e-12 * predicted.norm().max(1.0));
            Ok(MomentCheck { p, q, mean, stderr, predicted, pass: (mean - predicted).norm() <= slack })
        })
        .collect()
}
