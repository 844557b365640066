//! Mixed moments φ(aᵖcᑫ) of a signal and a free noise, computed by centering
//! words letter by letter, and their finite-N empirical counterparts.

use crate::model::{ExperimentConfig, Model, Sample};
use crate::oracle::Decomposition;
use freedenoise_core::Result;
use num_complex::Complex64 as C;

/// Moment pairs (p, q) with q ≥ 1 and p + q ≤ 4.
pub const PAIRS: [(usize, usize); 10] = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (3, 1)];

const MAX_DEGREE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    A,
    B,
}

/// A polynomial in one variable, coefficients by degree.
type Poly = Vec<C>;

fn monomial(k: usize) -> Poly {
    let mut p = vec![C::new(0.0, 0.0); k + 1];
    p[k] = C::new(1.0, 0.0);
    p
}

fn mul(p: &Poly, q: &Poly) -> Poly {
    let mut r = vec![C::new(0.0, 0.0); p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            r[i + j] += a * b;
        }
    }
    r
}

/// Two freely independent variables given by their moments m₀..m₈.
pub struct FreePair {
    a: Vec<C>,
    b: Vec<C>,
}

impl FreePair {
    pub fn new(a: Vec<C>, b: Vec<C>) -> Self {
        assert!(a.len() > MAX_DEGREE && b.len() > MAX_DEGREE);
        FreePair { a, b }
    }

    fn phi(&self, side: Side, p: &Poly) -> C {
        assert!(p.len() <= MAX_DEGREE + 1, "word degree above {MAX_DEGREE}");
        let m = if side == Side::A { &self.a } else { &self.b };
        p.iter().zip(m).map(|(c, x)| c * x).sum()
    }

    /// φ of a product of letters. Each letter is written x = x° + φ(x); every
    /// term with at least one constant is a shorter word, and the all-centred
    /// alternating term vanishes by freeness.
    fn word(&self, letters: &[(Side, Poly)]) -> C {
        let mut w: Vec<(Side, Poly)> = Vec::with_capacity(letters.len());
        for (s, p) in letters {
            match w.last_mut() {
                Some((ls, lp)) if ls == s => *lp = mul(lp, p),
                _ => w.push((*s, p.clone())),
            }
        }
        match w.len() {
            0 => C::new(1.0, 0.0),
            1 => self.phi(w[0].0, &w[0].1),
            n => {
                let means: Vec<C> = w.iter().map(|(s, p)| self.phi(*s, p)).collect();
                let centred: Vec<(Side, Poly)> = w
                    .iter()
                    .zip(&means)
                    .map(|((s, p), m)| {
                        let mut p = p.clone();
                        p[0] -= m;
                        (*s, p)
                    })
                    .collect();
                let mut acc = C::new(0.0, 0.0);
                for mask in 0..(1u32 << n) - 1 {
                    let coef: C = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| means[i]).product();
                    if coef == C::new(0.0, 0.0) {
                        continue;
                    }
                    let sub: Vec<(Side, Poly)> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| centred[i].clone()).collect();
                    acc += coef * self.word(&sub);
                }
                acc
            }
        }
    }

    /// φ(aᵖ(a + b)ᑫ)
    pub fn additive(&self, p: usize, q: usize) -> C {
        (0..1u32 << q)
            .map(|bits| {
                let mut w = vec![(Side::A, monomial(p))];
                w.extend((0..q).map(|i| if bits & (1 << i) != 0 { (Side::B, monomial(1)) } else { (Side::A, monomial(1)) }));
                self.word(&w)
            })
            .sum()
    }

    /// φ(aᵖ(a^{1/2} b a^{1/2})ᑫ) = φ(a^{p+1} b (a b)^{q−1}); the same word
    /// gives φ(uᵖ(uv)ᑫ) for unitaries.
    pub fn multiplicative(&self, p: usize, q: usize) -> C {
        if q == 0 {
            return self.a[p];
        }
        let mut w = vec![(Side::A, monomial(p + 1)), (Side::B, monomial(1))];
        for _ in 1..q {
            w.push((Side::A, monomial(1)));
            w.push((Side::B, monomial(1)));
        }
        self.word(&w)
    }
}

fn catalan(k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * 2.0 * (2 * i + 1) as f64 / (i + 2) as f64)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

/// Semicircle of variance σ².
pub fn semicircle_moments(sigma2: f64) -> Vec<C> {
    (0..=MAX_DEGREE).map(|k| C::new(if k % 2 == 1 { 0.0 } else { catalan(k / 2) * sigma2.powi(k as i32 / 2) }, 0.0)).collect()
}

/// Marchenko–Pastur law of mean 1 and ratio c (the limit of XX*/p with
/// c = N/p): mₖ = Σᵣ C(k,r)C(k−1,r)cʳ/(r+1).
pub fn marchenko_pastur_moments(c: f64) -> Vec<C> {
    let mut m = vec![C::new(1.0, 0.0)];
    m.extend((1..=MAX_DEGREE).map(|k| C::new((0..k).map(|r| binom(k, r) * binom(k - 1, r) * c.powi(r as i32) / (r + 1) as f64).sum(), 0.0)));
    m
}

/// Haar unitary: all nonzero moments vanish.
pub fn haar_moments() -> Vec<C> {
    let mut m = vec![C::new(0.0, 0.0); MAX_DEGREE + 1];
    m[0] = C::new(1.0, 0.0);
    m
}

fn spectrum_moments(a: &[C]) -> Vec<C> {
    (0..=MAX_DEGREE).map(|k| a.iter().map(|x| x.powu(k as u32)).sum::<C>() / a.len() as f64).collect()
}

/// Free prediction of N⁻¹Tr(AᵖCᑫ) for the configured model, with A's moments
/// taken from its actual finite-N spectrum.
pub fn free_prediction(cfg: &ExperimentConfig, p: usize, q: usize) -> Result<C> {
    let d = cfg.signal_eigenvalues()?;
    let a: Vec<C> = match cfg.model {
        Model::Haar => d.iter().map(|&th| C::from_polar(1.0, th)).collect(),
        _ => d.iter().map(|&x| C::new(x, 0.0)).collect(),
    };
    let am = spectrum_moments(&a);
    Ok(match cfg.model {
        Model::Goe { sigma2, .. } => FreePair::new(am, semicircle_moments(sigma2)).additive(p, q),
        Model::Wishart { .. } => FreePair::new(am, marchenko_pastur_moments(cfg.n as f64 / cfg.p() as f64)).multiplicative(p, q),
        Model::Haar => FreePair::new(am, haar_moments()).multiplicative(p, q),
    })
}

/// N⁻¹Tr(AᵖCᑫ) = N⁻¹Σᵢ λᵢᑫ Σⱼ aⱼᵖ|vᵢ(j)|² for every pair in [`PAIRS`].
pub fn empirical_moments(sample: &Sample, d: &Decomposition) -> Vec<C> {
    let n = sample.n;
    let mut s = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..n {
        let v = &d.vectors[i * n..(i + 1) * n];
        let mut sp = [C::new(0.0, 0.0); 4];
        for (a, x) in sample.a.iter().zip(v) {
            let w = x.norm_sqr();
            let mut ap = C::new(w, 0.0);
            for slot in sp.iter_mut() {
                *slot += ap;
                ap *= a;
            }
        }
        let mut lq = C::new(1.0, 0.0);
        for row in s.iter_mut() {
            lq *= d.values[i];
            for (acc, x) in row.iter_mut().zip(&sp) {
                *acc += lq * x;
            }
        }
    }
    // s[q−1][p]
    PAIRS.iter().map(|&(p, q)| s[q - 1][p] / n as f64).collect()
}
