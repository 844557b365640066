use crate::linalg;
use freedenoise_core::{Error, Measure, MeasureSpec, Result, SupportDomain};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    /// C = A + B, B Wigner with entry variance σ²/N; real symmetric (GOE)
    /// unless `complex` (GUE).
    Goe {
        sigma2: f64,
        #[serde(default)]
        complex: bool,
    },
    /// C = Σ^{1/2}(XX*/p)Σ^{1/2}, X N×p standard complex Gaussian, p = round(γN).
    Wishart { gamma: f64 },
    /// C = UV, U = diag of signal phases, V Haar.
    Haar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Eigenvalues { eigenvalues: Vec<f64> },
    Measure(MeasureSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub signal: SignalSpec,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("experiment JSON: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("N = {} < 2", self.n)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be ≥ 1".into()));
        }
        match self.model {
            Model::Goe { sigma2, .. } if !(sigma2 >= 0.0 && sigma2.is_finite()) => {
                return Err(Error::InvalidInput(format!("σ² = {sigma2}")));
            }
            Model::Wishart { gamma } if !(gamma > 0.0 && gamma.is_finite()) || self.p() == 0 => {
                return Err(Error::InvalidInput(format!("Wishart aspect γ = {gamma} gives p = 0")));
            }
            _ => {}
        }
        if let SignalSpec::Eigenvalues { eigenvalues } = &self.signal {
            if eigenvalues.len() != self.n {
                return Err(Error::DimensionMismatch(format!("{} signal eigenvalues for N = {}", eigenvalues.len(), self.n)));
            }
        }
        let domain = self.domain();
        let d = self.signal_eigenvalues()?;
        if domain == SupportDomain::NonNegativeReals && d.iter().any(|&x| x < 0.0) {
            return Err(Error::DomainViolation("covariance spectrum must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of samples of the Wishart model.
    pub fn p(&self) -> usize {
        match self.model {
            Model::Wishart { gamma } => (gamma * self.n as f64).round() as usize,
            _ => 0,
        }
    }

    pub fn domain(&self) -> SupportDomain {
        match self.model {
            Model::Goe { .. } => SupportDomain::RealLine,
            Model::Wishart { .. } => SupportDomain::NonNegativeReals,
            Model::Haar => SupportDomain::UnitCircle,
        }
    }

    /// Signal law as a measure (an explicit spectrum becomes N equal atoms).
    pub fn signal_measure(&self) -> Result<Measure> {
        match &self.signal {
            SignalSpec::Measure(spec) => {
                let m = spec.build()?;
                if m.domain() != self.domain() {
                    return Err(Error::DomainViolation(format!("signal on {:?}, model needs {:?}", m.domain(), self.domain())));
                }
                Ok(m)
            }
            SignalSpec::Eigenvalues { eigenvalues } => {
                let w = 1.0 / eigenvalues.len() as f64;
                let atoms: Vec<(f64, f64)> = eigenvalues.iter().map(|&x| (x, w)).collect();
                Measure::discrete(self.domain(), &atoms)
            }
        }
    }

    /// Diagonal of A: quantiles at (i + ½)/N, or the explicit list (sorted).
    pub fn signal_eigenvalues(&self) -> Result<Vec<f64>> {
        match &self.signal {
            SignalSpec::Eigenvalues { eigenvalues } => {
                let mut v = eigenvalues.clone();
                v.sort_by(f64::total_cmp);
                Ok(v)
            }
            SignalSpec::Measure(_) => {
                let m = self.signal_measure()?;
                Ok((0..self.n).map(|i| m.quantile((i as f64 + 0.5) / self.n as f64)).collect())
            }
        }
    }

    /// Per-trial generator: the master seed picks the key, the trial index
    /// the stream, so trials are independent of execution order.
    pub fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(trial as u64);
        r
    }
}

/// Observed matrix, column-major.
#[derive(Debug, Clone)]
pub enum Observed {
    Real(Vec<f64>),
    Hermitian(Vec<C>),
    /// normal (unitary) matrix
    Normal(Vec<C>),
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub n: usize,
    /// A (or U) is diagonal in the standard basis
    pub a: Vec<C>,
    pub c: Observed,
}

pub fn sample_model(cfg: &ExperimentConfig, trial: usize) -> Result<Sample> {
    let n = cfg.n;
    let d = cfg.signal_eigenvalues()?;
    let mut rng = cfg.rng(trial);
    match cfg.model {
        Model::Goe { sigma2, complex } => {
            let s = (sigma2 / n as f64).sqrt();
            let a: Vec<C> = d.iter().map(|&x| C::new(x, 0.0)).collect();
            if complex {
                let mut c = vec![C::new(0.0, 0.0); n * n];
                for j in 0..n {
                    for i in j..n {
                        let x = if i == j { C::new(rng.sample::<f64, _>(StandardNormal), 0.0) } else { linalg::complex_gaussian(&mut rng) };
                        c[j * n + i] = x * s;
                        c[i * n + j] = (x * s).conj();
                    }
                    c[j * n + j] += d[j];
                }
                Ok(Sample { n, a, c: Observed::Hermitian(c) })
            } else {
                let mut c = vec![0.0; n * n];
                for j in 0..n {
                    for i in j..n {
                        // diagonal entries have variance 2σ²/N in the GOE
                        let g: f64 = rng.sample(StandardNormal);
                        let x = if i == j { g * s * std::f64::consts::SQRT_2 } else { g * s };
                        c[j * n + i] = x;
                        c[i * n + j] = x;
                    }
                    c[j * n + j] += d[j];
                }
                Ok(Sample { n, a, c: Observed::Real(c) })
            }
        }
        Model::Wishart { .. } => {
            let p = cfg.p();
            let sq: Vec<f64> = d.iter().map(|x| x.max(0.0).sqrt()).collect();
            let mut x = vec![C::new(0.0, 0.0); n * p];
            for col in 0..p {
                for (i, si) in sq.iter().enumerate() {
                    x[col * n + i] = linalg::complex_gaussian(&mut rng) * si;
                }
            }
            let c = linalg::gram(&x, n, p, p as f64);
            Ok(Sample { n, a: d.iter().map(|&x| C::new(x, 0.0)).collect(), c: Observed::Hermitian(c) })
        }
        Model::Haar => {
            let u: Vec<C> = d.iter().map(|&th| C::from_polar(1.0, th)).collect();
            let mut v = linalg::haar_unitary(&mut rng, n)?;
            for j in 0..n {
                for (i, ui) in u.iter().enumerate() {
                    v[j * n + i] *= ui;
                }
            }
            Ok(Sample { n, a: u, c: Observed::Normal(v) })
        }
    }
}
