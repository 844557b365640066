//! Free denoisers h(t) = E(f(a) | observed = t) for the additive, ℝ₊ and
//! circle settings, plus the Tweedie, Ledoit–Péché, limit-ratio and
//! c-free routes.

use crate::convolution::{free_add_convolve, free_mult_convolve_circle, free_mult_convolve_positive, ConvolutionOutput};
use crate::error::{Error, Result};
use crate::measure::{chebyshev_grid, Measure, SupportDomain};
use crate::overlap::{bulk_points, node_density};
use crate::subordination::{omega_additive_with, SolverConfig, SubordinationKind, ZeroLimit};
use crate::transforms::{extrapolate, extrapolate_c, g_eval, hilbert, stieltjes_invert, BoundarySamples, InversionOptions, WeightedMeasure, DEFAULT_EPS};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    FiberIntegral,
    ClosedFormIdentityF,
    TweedieAdditive,
    LedoitPeche,
    LimitFormula,
    CFreeRadonNikodym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Bulk,
    Atom,
    Zero,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Bulk => "bulk",
            Branch::Atom => "atom",
            Branch::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomValue {
    pub gamma: f64,
    pub h: f64,
    /// nonzero only for complex-valued f on the circle
    pub h_imag: f64,
    /// target mass at γ
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroValue {
    pub h: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiserCurve {
    pub method: Method,
    pub t_grid: Vec<f64>,
    pub h_values: Vec<f64>,
    /// imaginary parts; kept only where f itself is complex (circle)
    pub h_imag: Vec<f64>,
    /// target mass carried by each bulk node
    pub weights: Vec<f64>,
    pub atom_values: Vec<AtomValue>,
    pub zero_value: Option<ZeroValue>,
    /// flagged points excluded from the bulk
    pub gaps: Vec<f64>,
    /// largest discarded imaginary residue
    pub residue: f64,
    /// largest disagreement with a secondary route, when one was run
    pub cross_check: Option<f64>,
}

impl DenoiserCurve {
    fn bulk(method: Method) -> Self {
        DenoiserCurve {
            method,
            t_grid: vec![],
            h_values: vec![],
            h_imag: vec![],
            weights: vec![],
            atom_values: vec![],
            zero_value: None,
            gaps: vec![],
            residue: 0.0,
            cross_check: None,
        }
    }

    fn push(&mut self, t: f64, h: C, w: f64, complex_f: bool) {
        if !complex_f {
            self.residue = self.residue.max(h.im.abs());
        }
        self.t_grid.push(t);
        self.h_values.push(h.re);
        self.h_imag.push(if complex_f { h.im } else { 0.0 });
        self.weights.push(w);
    }

    fn report_residue(&self) {
        if self.residue > 1e-8 {
            log::warn!("denoiser imaginary residue {:.3e} discarded", self.residue);
        }
    }

    /// ∫ h d(target): bulk quadrature plus atom and zero branches.
    pub fn conservation(&self) -> C {
        let mut acc = C::new(0.0, 0.0);
        for k in 0..self.t_grid.len() {
            acc += C::new(self.h_values[k], self.h_imag[k]) * self.weights[k];
        }
        for a in &self.atom_values {
            acc += C::new(a.h, a.h_imag) * a.mass;
        }
        if let Some(z) = self.zero_value {
            acc += z.h * z.mass;
        }
        acc
    }

    /// Largest excursion of h outside [lo, hi].
    pub fn range_violation(&self, lo: f64, hi: f64) -> f64 {
        let out = |h: f64| (lo - h).max(h - hi).max(0.0);
        let mut v = self.h_values.iter().fold(0.0f64, |m, &h| m.max(out(h)));
        for a in &self.atom_values {
            v = v.max(out(a.h));
        }
        if let Some(z) = self.zero_value {
            v = v.max(out(z.h));
        }
        v
    }

    /// Linear interpolation in the bulk; None outside the bulk hull.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let g = &self.t_grid;
        if g.is_empty() || t < g[0] || t > g[g.len() - 1] {
            return None;
        }
        let k = g.partition_point(|&x| x < t);
        if g[k] == t || k == 0 {
            return Some(self.h_values[k]);
        }
        let a = (t - g[k - 1]) / (g[k] - g[k - 1]);
        Some((1.0 - a) * self.h_values[k - 1] + a * self.h_values[k])
    }

    /// sup |h − other| over this curve's bulk nodes inside `window` where
    /// both are defined.
    pub fn sup_diff(&self, other: &DenoiserCurve, window: (f64, f64)) -> f64 {
        self.t_grid
            .iter()
            .zip(&self.h_values)
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .filter_map(|(&t, &h)| other.value_at(t).map(|o| (h - o).abs()))
            .fold(0.0, f64::max)
    }

    /// (t, h, branch) rows sorted by t, atoms at their exact γ.
    pub fn rows(&self) -> Vec<(f64, f64, Branch)> {
        let mut r: Vec<(f64, f64, Branch)> = self.t_grid.iter().zip(&self.h_values).map(|(&t, &h)| (t, h, Branch::Bulk)).collect();
        r.extend(self.atom_values.iter().map(|a| (a.gamma, a.h, Branch::Atom)));
        if let Some(z) = self.zero_value {
            r.push((0.0, z.h, Branch::Zero));
        }
        r.sort_by(|a, b| a.0.total_cmp(&b.0));
        r
    }
}

/// Test functions selectable from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarFn {
    Identity,
    /// 1 on [lo, hi]
    Indicator { lo: f64, hi: f64 },
    /// Σ c_k x^k (on the circle Σ c_k e^{ikθ})
    Poly(Vec<f64>),
}

impl ScalarFn {
    /// `id`, `indicator:a,b`, `poly:c0,c1,...`
    pub fn parse(s: &str) -> Result<Self> {
        let nums = |body: &str| -> Result<Vec<f64>> {
            body.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number {x:?} in {s:?}"))))
                .collect()
        };
        match s.split_once(':') {
            None if s == "id" => Ok(ScalarFn::Identity),
            Some(("indicator", body)) => match nums(body)?[..] {
                [lo, hi] if lo <= hi => Ok(ScalarFn::Indicator { lo, hi }),
                _ => Err(Error::InvalidInput(format!("indicator needs a,b with a ≤ b: {s:?}"))),
            },
            Some(("poly", body)) => Ok(ScalarFn::Poly(nums(body)?)),
            _ => Err(Error::InvalidInput(format!("unknown function {s:?}"))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Identity => x,
            ScalarFn::Indicator { lo, hi } => f64::from(x >= *lo && x <= *hi),
            ScalarFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
        }
    }

    /// Value at the point e^{iθ}.
    pub fn eval_circle(&self, theta: f64) -> C {
        match self {
            ScalarFn::Identity => C::from_polar(1.0, theta),
            ScalarFn::Indicator { .. } => C::new(self.eval(theta), 0.0),
            ScalarFn::Poly(c) => c.iter().enumerate().map(|(k, &ck)| C::from_polar(ck, k as f64 * theta)).sum(),
        }
    }

    pub fn is_real_on_circle(&self) -> bool {
        match self {
            ScalarFn::Identity => false,
            ScalarFn::Indicator { .. } => true,
            ScalarFn::Poly(c) => c.iter().skip(1).all(|&x| x == 0.0),
        }
    }
}

/// min and max of f over the atoms and density nodes of μ.
pub fn value_range(mu: &Measure, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut pts: Vec<f64> = mu.atoms().iter().map(|a| a.loc).collect();
    if let Some(d) = mu.density() {
        pts.extend(d.grid().iter().zip(d.values()).filter(|(_, &v)| v > 0.0).map(|(&t, _)| t));
    }
    pts.iter().map(|&x| f(x)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn require(conv: &ConvolutionOutput, kind: SubordinationKind) -> Result<()> {
    if conv.subordination.kind != kind {
        return Err(Error::UnsupportedCase(format!("expected a {kind:?} convolution, got {:?}", conv.subordination.kind)));
    }
    Ok(())
}

fn target_mass(conv: &ConvolutionOutput, loc: f64) -> f64 {
    conv.result.atom_mass(loc, 0.0)
}

fn start(method: Method, conv: &ConvolutionOutput) -> (DenoiserCurve, Vec<(usize, f64, f64)>) {
    let (pts, gaps) = bulk_points(conv);
    let mut c = DenoiserCurve::bulk(method);
    c.gaps = gaps;
    (c, pts)
}

fn line_atoms(c: &mut DenoiserCurve, conv: &ConvolutionOutput, f: impl Fn(f64) -> f64, skip_zero: bool) {
    for r in &conv.atom_table {
        if skip_zero && r.gamma == 0.0 {
            continue;
        }
        c.atom_values.push(AtomValue { gamma: r.gamma, h: f(r.alpha), h_imag: 0.0, mass: target_mass(conv, r.gamma) });
    }
}

// ---------------------------------------------------------------- additive

pub fn denoise_additive_general(mu: &Measure, nu: &Measure, f: impl Fn(f64) -> f64) -> Result<DenoiserCurve> {
    additive_general_from(mu, &free_add_convolve(mu, nu)?, f)
}

/// Fiber integral −(1/(πf_{μ⊞ν}(t))) Im ∫ f(s)/(ω(t)−s) dμ(s); f(α) at atoms.
pub fn additive_general_from(mu: &Measure, conv: &ConvolutionOutput, f: impl Fn(f64) -> f64) -> Result<DenoiserCurve> {
    require(conv, SubordinationKind::Additive)?;
    let wm = WeightedMeasure::new(mu, |s| C::new(f(s), 0.0));
    let (mut c, pts) = start(Method::FiberIntegral, conv);
    let sub = &conv.subordination;
    for (k, t, w) in pts {
        let i = wm.cauchy(sub.boundary1[k]);
        c.push(t, C::new(-i.im / (PI * node_density(conv, k)), 0.0), w, false);
    }
    line_atoms(&mut c, conv, &f, false);
    Ok(c)
}

pub fn denoise_additive_identity(mu: &Measure, nu: &Measure) -> Result<DenoiserCurve> {
    additive_identity_from(&free_add_convolve(mu, nu)?)
}

/// h(t) = −Im(ω(t)G_{μ⊞ν}(t))/(π f_{μ⊞ν}(t)); α at atoms.
pub fn additive_identity_from(conv: &ConvolutionOutput) -> Result<DenoiserCurve> {
    require(conv, SubordinationKind::Additive)?;
    let (mut c, pts) = start(Method::ClosedFormIdentityF, conv);
    let sub = &conv.subordination;
    for (k, t, w) in pts {
        let g = extrapolate_c(sub.target[0][k], sub.target[1][k]);
        let h = -(sub.boundary1[k] * g).im / (PI * node_density(conv, k));
        c.push(t, C::new(h, 0.0), w, false);
    }
    line_atoms(&mut c, conv, |a| a, false);
    Ok(c)
}

/// h(t) = t − 2πσ²H(t), from the observed distribution alone.
pub fn denoise_tweedie_additive(target: &Measure, sigma2: f64) -> Result<DenoiserCurve> {
    if target.domain().is_circle() {
        return Err(Error::DomainViolation("Tweedie denoiser needs a measure on the line".into()));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance {sigma2}")));
    }
    let mut c = DenoiserCurve::bulk(Method::TweedieAdditive);
    let eps = DEFAULT_EPS * target.radius().max(1.0);
    if let Some(d) = target.density() {
        for (k, ((&t, &v), &w)) in d.grid().iter().zip(d.values()).zip(d.weights()).enumerate() {
            if v > 0.0 {
                let e = eps.min(1e-3 * node_gap(d.grid(), k));
                c.push(t, C::new(t - TAU * sigma2 * hilbert(target, t, e), 0.0), v * w, false);
            }
        }
    }
    if !target.atoms().is_empty() {
        log::info!("Tweedie route ignores {} atom(s) of the target", target.atoms().len());
    }
    Ok(c)
}

/// Smallest gap between grid[k] and its neighbours; ε below a small
/// fraction of it keeps the two-level extrapolation in its asymptotic range
/// (graded nodes sit next to cusps and edges).
fn node_gap(grid: &[f64], k: usize) -> f64 {
    let l = if k > 0 { grid[k] - grid[k - 1] } else { f64::INFINITY };
    let r = if k + 1 < grid.len() { grid[k + 1] - grid[k] } else { f64::INFINITY };
    l.min(r)
}

/// lim Im(G(t+iε)ω(t+iε))/Im G(t+iε), extrapolated from ε and ε/2.
pub fn denoise_additive_limit_formula(mu: &Measure, nu: &Measure, t: f64, eps: f64) -> Result<f64> {
    let cfg = SolverConfig::default();
    let ratio = |e: f64| -> Result<f64> {
        let (w1, _) = omega_additive_with(mu, nu, C::new(t, e), &cfg)?;
        let g = g_eval(mu, w1).0;
        Ok((g * w1).im / g.im)
    };
    let (r0, r1) = (ratio(eps)?, ratio(0.5 * eps)?);
    let tol = 0.1 * r1.abs().max(1e-3);
    if (r0 - r1).abs() > tol {
        return Err(Error::UnstableLimit { t, coarse: r0, fine: r1 });
    }
    Ok(extrapolate(r0, r1))
}

/// The limit ratio on the bulk nodes (from the stored ε-levels) and at the
/// atoms (fresh solves).
pub fn additive_limit_from(mu: &Measure, nu: &Measure, conv: &ConvolutionOutput) -> Result<DenoiserCurve> {
    require(conv, SubordinationKind::Additive)?;
    let (mut c, pts) = start(Method::LimitFormula, conv);
    let sub = &conv.subordination;
    for (k, t, w) in pts {
        let r = |l: usize| (sub.target[l][k] * sub.omega1[l][k]).im / sub.target[l][k].im;
        c.push(t, C::new(extrapolate(r(0), r(1)), 0.0), w, false);
    }
    let eps = crate::subordination::boundary_eps(SubordinationKind::Additive, mu, nu, &SolverConfig::default());
    for r in &conv.atom_table {
        let h = denoise_additive_limit_formula(mu, nu, r.gamma, eps)?;
        c.atom_values.push(AtomValue { gamma: r.gamma, h, h_imag: 0.0, mass: target_mass(conv, r.gamma) });
    }
    Ok(c)
}

// ---------------------------------------------------------------- ℝ₊

/// ν({0}) when it exceeds μ({0}) (read off the ⊠ zero atom, which carries
/// the larger of the two), else None.
fn dominant_noise_zero(mu: &Measure, conv: &ConvolutionOutput) -> Option<f64> {
    let m = target_mass(conv, 0.0);
    (m > mu.mass_at_zero()).then_some(m)
}

pub fn denoise_multiplicative_general(mu: &Measure, nu: &Measure, f: impl Fn(f64) -> f64) -> Result<DenoiserCurve> {
    multiplicative_general_from(mu, &free_mult_convolve_positive(mu, nu)?, f)
}

/// −(1/(πt f(t))) Im ∫ f(s)/(1−ω(1/t)s) dμ(s); f(α) at positive atoms;
/// the t = 0 branches.
pub fn multiplicative_general_from(mu: &Measure, conv: &ConvolutionOutput, f: impl Fn(f64) -> f64) -> Result<DenoiserCurve> {
    require(conv, SubordinationKind::MultiplicativePositive)?;
    let wm = WeightedMeasure::new(mu, |s| C::new(f(s), 0.0));
    let (mut c, pts) = start(Method::FiberIntegral, conv);
    let sub = &conv.subordination;
    for (k, t, w) in pts {
        let om = sub.boundary1[k];
        let v = om.inv();
        let i = v * wm.cauchy(v);
        c.push(t, C::new(-i.im / (PI * t * node_density(conv, k)), 0.0), w, false);
    }
    line_atoms(&mut c, conv, &f, true);
    let m0 = target_mass(conv, 0.0);
    if m0 > 0.0 {
        let h = match (dominant_noise_zero(mu, conv), sub.zero_limit) {
            (Some(n0), Some(ZeroLimit::Value(u))) => {
                // (1/ν({0})) ∫ f(s)/(1 − s·u) dμ(s), u < 0
                let i = wm.cauchy(C::new(1.0 / u, 0.0)) / u;
                i.re / n0
            }
            (Some(_), _) => return Err(Error::UndefinedAtPoint { t: 0.0 }),
            (None, _) => f(0.0),
        };
        c.zero_value = Some(ZeroValue { h, mass: m0 });
    }
    Ok(c)
}

pub fn denoise_multiplicative_identity(mu: &Measure, nu: &Measure) -> Result<DenoiserCurve> {
    multiplicative_identity_from(mu, &free_mult_convolve_positive(mu, nu)?)
}

/// −(1/(πt f(t))) Im(ψ_{μ⊠ν}(1/t)/ω(1/t)); 1/ω(1/γ) = α at atoms;
/// (ν₀−1)/(ν₀ψ_μ⁻¹(ν₀−1)) or 0 at t = 0. The multiplicative limit ratio is
/// evaluated alongside and its largest deviation kept in `cross_check`.
pub fn multiplicative_identity_from(mu: &Measure, conv: &ConvolutionOutput) -> Result<DenoiserCurve> {
    require(conv, SubordinationKind::MultiplicativePositive)?;
    let (mut c, pts) = start(Method::ClosedFormIdentityF, conv);
    let sub = &conv.subordination;
    let mut worst = 0.0f64;
    for (k, t, w) in pts {
        let g = extrapolate_c(sub.target[0][k], sub.target[1][k]);
        let psi = t * g - 1.0;
        let h = -(psi / sub.boundary1[k]).im / (PI * t * node_density(conv, k));
        let e = sub.eps[k];
        let ratio = |l: usize, e: f64| {
            let z = C::new(t, e);
            let g = sub.target[l][k];
            ((g - z.inv()) / sub.omega1[l][k]).im / g.im
        };
        let lim = extrapolate(ratio(0, e), ratio(1, 0.5 * e));
        worst = worst.max((lim - h).abs());
        c.push(t, C::new(h, 0.0), w, false);
    }
    if worst > 1e-2 {
        log::warn!("multiplicative identity and limit-ratio routes differ by {worst:.3e}");
    }
    c.cross_check = Some(worst);
    line_atoms(&mut c, conv, |a| a, true);
    let m0 = target_mass(conv, 0.0);
    if m0 > 0.0 {
        let h = match (dominant_noise_zero(mu, conv), sub.zero_limit) {
            (Some(n0), Some(ZeroLimit::Value(u))) => (n0 - 1.0) / (n0 * u),
            (Some(_), _) => return Err(Error::UndefinedAtPoint { t: 0.0 }),
            (None, _) => 0.0,
        };
        c.zero_value = Some(ZeroValue { h, mass: m0 });
    }
    Ok(c)
}

/// h(t) = λt/|λ−1+tG(t)|² from the observed distribution alone; for λ < 1
/// the zero atom gets −λ/((1−λ)G_ac(0)).
pub fn denoise_ledoit_peche(target: &Measure, lambda: f64) -> Result<DenoiserCurve> {
    if target.domain() != SupportDomain::NonNegativeReals {
        return Err(Error::DomainViolation("Ledoit–Péché denoiser needs a measure on [0, ∞)".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("ratio λ = {lambda}")));
    }
    let mut c = DenoiserCurve::bulk(Method::LedoitPeche);
    let eps = DEFAULT_EPS * target.radius().max(1.0);
    if let Some(d) = target.density() {
        for (k, ((&t, &v), &w)) in d.grid().iter().zip(d.values()).zip(d.weights()).enumerate() {
            if v > 0.0 && t > 0.0 {
                let e = eps.min(1e-3 * node_gap(d.grid(), k));
                let g = extrapolate_c(g_eval(target, C::new(t, e)).0, g_eval(target, C::new(t, 0.5 * e)).0);
                c.push(t, C::new(lambda * t / (lambda - 1.0 + t * g).norm_sqr(), 0.0), v * w, false);
            }
        }
    }
    let m0 = target.mass_at_zero();
    if lambda < 1.0 && m0 > 0.0 {
        let gac = ac_cauchy_at_zero(target)?;
        c.zero_value = Some(ZeroValue { h: -lambda / ((1.0 - lambda) * gac), mass: m0 });
    }
    for a in target.atoms().iter().filter(|a| a.loc > 0.0) {
        log::info!("Ledoit–Péché route has no branch for the atom at {}", a.loc);
    }
    Ok(c)
}

/// G of the absolutely continuous part at 0 (support away from 0).
fn ac_cauchy_at_zero(m: &Measure) -> Result<f64> {
    let d = m.density().ok_or(Error::UndefinedAtPoint { t: 0.0 })?;
    if d.grid().iter().zip(d.values()).any(|(&t, &v)| t <= 0.0 && v > 0.0) {
        return Err(Error::UndefinedAtPoint { t: 0.0 });
    }
    let k = m.line_kernel().ok_or(Error::UndefinedAtPoint { t: 0.0 })?;
    Ok(k.eval(C::new(0.0, 0.0)).0.re)
}

// ---------------------------------------------------------------- circle

pub fn denoise_circle(mu: &Measure, nu: &Measure, f: &ScalarFn) -> Result<DenoiserCurve> {
    circle_from(mu, &free_mult_convolve_circle(mu, nu)?, |th| f.eval_circle(th), !f.is_real_on_circle())
}

/// h(θ) = ∫ f(s) o(s,θ) dμ(s) with o = Re((1+ω(t̄)s)/(1−ω(t̄)s))/(2πf(θ));
/// f(α) at atoms. h is complex when f is.
pub fn circle_from(mu: &Measure, conv: &ConvolutionOutput, f: impl Fn(f64) -> C, complex_f: bool) -> Result<DenoiserCurve> {
    require(conv, SubordinationKind::MultiplicativeCircle)?;
    let wf = WeightedMeasure::new(mu, &f);
    let wfc = WeightedMeasure::new(mu, |s| f(s).conj());
    // ∫ g(s)(1+ωs)/(1−ωs) dμ(s)
    let a = |wm: &WeightedMeasure, om: C| wm.total() + 2.0 * wm.circle_psi(om);
    let (mut c, pts) = start(Method::FiberIntegral, conv);
    let sub = &conv.subordination;
    for (k, t, w) in pts {
        let om = sub.boundary1[k];
        let h = 0.5 * (a(&wf, om) + a(&wfc, om).conj()) / (TAU * node_density(conv, k));
        c.push(t, h, w, complex_f);
    }
    for r in &conv.atom_table {
        let h = f(r.alpha);
        c.atom_values.push(AtomValue { gamma: r.gamma, h: h.re, h_imag: h.im, mass: target_mass(conv, r.gamma) });
    }
    c.report_residue();
    Ok(c)
}

// ---------------------------------------------------------------- c-free

#[derive(Debug, Clone)]
pub enum CFreeCase {
    /// a, b free copies of ½δ₀+½δ₂, observed a+b, f = id
    AdditiveArcsine,
    /// observed pap with p a free projection of trace τ, f = id
    Compression { signal: Measure, tau: f64 },
}

impl CFreeCase {
    pub fn parse(name: &str, signal: Option<Measure>, tau: Option<f64>) -> Result<Self> {
        match name {
            "arcsine" | "additive-arcsine" => Ok(CFreeCase::AdditiveArcsine),
            "compression" => match (signal, tau) {
                (Some(signal), Some(tau)) => Ok(CFreeCase::Compression { signal, tau }),
                _ => Err(Error::InvalidInput("compression needs a signal measure and τ".into())),
            },
            other => Err(Error::UnsupportedCase(format!("no closed-form c-free state for {other:?}"))),
        }
    }
}

/// Output of the c-free route: the curve and the total mass of μ^χ
/// (1 − τ + τ·mean(a) for the compression).
#[derive(Debug, Clone)]
pub struct CFreeOutput {
    pub curve: DenoiserCurve,
    pub chi_mass: f64,
}

/// h = dμ^χ/dμ^φ, with μ^χ obtained by Stieltjes inversion of its Cauchy
/// transform.
pub fn denoise_cfree_radon_nikodym(case: &CFreeCase) -> Result<CFreeOutput> {
    match case {
        CFreeCase::AdditiveArcsine => cfree_arcsine(),
        CFreeCase::Compression { signal, tau } => cfree_compression(signal, *tau),
    }
}

fn cfree_arcsine() -> Result<CFreeOutput> {
    let half = Measure::discrete(SupportDomain::RealLine, &[(0.0, 0.5), (2.0, 0.5)])?;
    let conv = free_add_convolve(&half, &half)?;
    // G^χ = 1/F with F(z) = z/2 + √z·√(z−4)/2 − 2
    let g_chi = |z: C| (0.5 * z + 0.5 * z.sqrt() * (z - 4.0).sqrt() - 2.0).inv();
    let eps = DEFAULT_EPS * 4.0;
    let (grid, weights) = chebyshev_grid(0.0, 4.0, 2048);
    let samples = BoundarySamples {
        g: [
            grid.iter().map(|&t| g_chi(C::new(t, eps))).collect(),
            grid.iter().map(|&t| g_chi(C::new(t, 0.5 * eps))).collect(),
        ],
        t: grid,
        eps,
        weights: Some(weights),
    };
    let inv = stieltjes_invert(&samples, &InversionOptions { max_defect: 0.05, ..Default::default() })?;
    let chi_mass = 1.0 + inv.defect;
    let (mut c, pts) = start(Method::CFreeRadonNikodym, &conv);
    let sub = &conv.subordination;
    for (k, t, w) in pts {
        let e = sub.eps[k];
        let dchi = -extrapolate_c(g_chi(C::new(t, e)), g_chi(C::new(t, 0.5 * e))).im / PI;
        c.push(t, C::new(dchi / node_density(&conv, k), 0.0), w, false);
    }
    Ok(CFreeOutput { curve: c, chi_mass })
}

fn cfree_compression(signal: &Measure, tau: f64) -> Result<CFreeOutput> {
    if !(0.0..=1.0).contains(&tau) || tau == 0.0 {
        return Err(Error::InvalidInput(format!("projection trace τ = {tau}")));
    }
    let p = if tau == 1.0 {
        Measure::point_mass(SupportDomain::NonNegativeReals, 1.0)?
    } else {
        Measure::discrete(SupportDomain::NonNegativeReals, &[(0.0, 1.0 - tau), (1.0, tau)])?
    };
    let conv = free_mult_convolve_positive(signal, &p)?;
    let sub = &conv.subordination;
    // G^χ(z) = (1−τ)/z + z(G(z) − 1/z)
    let g_chi = |z: C, g: C| (1.0 - tau) / z + z * (g - z.inv());
    let (mut c, pts) = start(Method::CFreeRadonNikodym, &conv);
    let mut chi_mass = 0.0;
    for (k, t, w) in pts {
        let e = sub.eps[k];
        let v = |l: usize, e: f64| g_chi(C::new(t, e), sub.target[l][k]);
        let dchi = -extrapolate_c(v(0, e), v(1, 0.5 * e)).im / PI;
        let dphi = node_density(&conv, k);
        chi_mass += dchi / dphi * w;
        c.push(t, C::new(dchi / dphi, 0.0), w, false);
    }
    for r in conv.atom_table.iter().filter(|r| r.gamma > 0.0) {
        // χ puts γ·(target mass) at a positive atom γ
        c.atom_values.push(AtomValue { gamma: r.gamma, h: r.gamma, h_imag: 0.0, mass: r.mass });
        chi_mass += r.gamma * r.mass;
    }
    let m0 = target_mass(&conv, 0.0);
    if m0 > 0.0 {
        // residue of G^χ at 0: lim −ε Im G^χ(iε)
        let e = 1e-7;
        let res = |e: f64| {
            let z = C::new(0.0, e);
            -e * g_chi(z, g_eval(&conv.result, z).0).im
        };
        let chi0 = extrapolate(res(e), res(0.5 * e));
        chi_mass += chi0;
        c.zero_value = Some(ZeroValue { h: chi0 / m0, mass: m0 });
    }
    Ok(CFreeOutput { curve: c, chi_mass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(d: SupportDomain, a: &[(f64, f64)]) -> Measure {
        Measure::discrete(d, a).unwrap()
    }

    fn half02() -> Measure {
        disc(SupportDomain::RealLine, &[(0.0, 0.5), (2.0, 0.5)])
    }

    fn sup_vs(c: &DenoiserCurve, window: (f64, f64), h: impl Fn(f64) -> f64) -> f64 {
        c.t_grid
            .iter()
            .zip(&c.h_values)
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .map(|(&t, &v)| (v - h(t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn additive_constant_and_indicator() {
        let mu = half02();
        let conv = free_add_convolve(&mu, &mu).unwrap();
        let one = additive_general_from(&mu, &conv, |_| 1.0).unwrap();
        assert!(sup_vs(&one, (0.0, 4.0), |_| 1.0) < 1e-6);
        let ind = additive_general_from(&mu, &conv, |s| f64::from(s == 2.0)).unwrap();
        assert!(sup_vs(&ind, (0.2, 3.8), |t| t / 4.0) < 1e-3);
        assert!((ind.conservation().re - 0.5).abs() < 1e-3);
    }

    #[test]
    fn arcsine_identity_routes() {
        let mu = half02();
        let conv = free_add_convolve(&mu, &mu).unwrap();
        let h = additive_identity_from(&conv).unwrap();
        assert!(sup_vs(&h, (0.2, 3.8), |t| t / 2.0) < 1e-3);
        assert!(h.range_violation(0.0, 2.0) < 1e-6);
        let g = additive_general_from(&mu, &conv, |s| s).unwrap();
        assert!(h.sup_diff(&g, (0.0, 4.0)) < 1e-6);
        let cf = denoise_cfree_radon_nikodym(&CFreeCase::AdditiveArcsine).unwrap();
        assert!(sup_vs(&cf.curve, (0.2, 3.8), |t| t / 2.0) < 1e-3);
        assert!(cf.curve.sup_diff(&h, (0.2, 3.8)) < 2e-3);
        assert!((cf.chi_mass - 1.0).abs() < 1e-3, "{}", cf.chi_mass);
    }

    #[test]
    fn additive_atom_branch() {
        let mu = disc(SupportDomain::RealLine, &[(0.0, 0.75), (2.0, 0.25)]);
        let conv = free_add_convolve(&mu, &mu).unwrap();
        let h = additive_identity_from(&conv).unwrap();
        let a = h.atom_values.iter().find(|a| a.gamma == 0.0).unwrap();
        assert_eq!(a.h, 0.0);
        let lim = denoise_additive_limit_formula(&mu, &mu, 0.0, 1e-6).unwrap();
        assert!(lim.abs() < 1e-2, "{lim}");
        let g = additive_general_from(&mu, &conv, |s| s * s + 1.0).unwrap();
        assert_eq!(g.atom_values[0].h, 1.0);
        assert!((h.conservation().re - 0.5).abs() < 1e-3);
    }

    #[test]
    fn semicircle_shrinkage_and_tweedie() {
        let (v1, v2) = (1.0, 0.5);
        let mu = Measure::semicircle(v1).unwrap();
        let nu = Measure::semicircle(v2).unwrap();
        let conv = free_add_convolve(&mu, &nu).unwrap();
        let h = additive_identity_from(&conv).unwrap();
        let r = 2.0 * (v1 + v2).sqrt();
        assert!(sup_vs(&h, (-r, r), |t| t * v1 / (v1 + v2)) < 1e-3);
        let tw = denoise_tweedie_additive(&conv.result, v2).unwrap();
        assert!(sup_vs(&tw, (-r, r), |t| t * v1 / (v1 + v2)) < 1e-3);
        let same = denoise_tweedie_additive(&conv.result, 0.0).unwrap();
        assert!(sup_vs(&same, (-r, r), |t| t) == 0.0);
        // ⊞-power: sc(1) and sc(1)^{⊞2} = sc(2)
        let h = denoise_additive_identity(&mu, &Measure::semicircle(2.0).unwrap()).unwrap();
        assert!(sup_vs(&h, (-10.0, 10.0), |t| t / 3.0) < 1e-3);
    }

    #[test]
    fn tweedie_matches_subordination() {
        let mu = disc(SupportDomain::RealLine, &[(-1.0, 0.5), (1.0, 0.5)]);
        let conv = free_add_convolve(&mu, &Measure::semicircle(1.0).unwrap()).unwrap();
        let h = additive_identity_from(&conv).unwrap();
        let tw = denoise_tweedie_additive(&conv.result, 1.0).unwrap();
        let d = h.sup_diff(&tw, (-10.0, 10.0));
        assert!(d < 2e-3, "{d}");
        assert!(h.conservation().re.abs() < 1e-3);
        assert!(h.range_violation(-1.0, 1.0) < 1e-6);
    }

    #[test]
    fn limit_formula() {
        let mu = half02();
        let v = denoise_additive_limit_formula(&mu, &mu, 2.0, 1e-6).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "{v}");
        let c = Measure::point_mass(SupportDomain::RealLine, 0.7).unwrap();
        let sc = Measure::semicircle(1.0).unwrap();
        let v = denoise_additive_limit_formula(&sc, &c, 0.3, 1e-6).unwrap();
        assert!((v - (0.3 - 0.7)).abs() < 1e-6, "{v}");
        let conv = free_add_convolve(&mu, &mu).unwrap();
        let l = additive_limit_from(&mu, &mu, &conv).unwrap();
        assert!(sup_vs(&l, (0.2, 3.8), |t| t / 2.0) < 1e-3);
    }

    #[test]
    fn multiplicative_routes() {
        let mu = disc(SupportDomain::NonNegativeReals, &[(1.0, 0.5), (3.0, 0.5)]);
        let nu = Measure::free_poisson(2.0).unwrap();
        let conv = free_mult_convolve_positive(&mu, &nu).unwrap();
        let one = multiplicative_general_from(&mu, &conv, |_| 1.0).unwrap();
        assert!(sup_vs(&one, (0.0, 1e3), |_| 1.0) < 1e-6);
        let h = multiplicative_identity_from(&mu, &conv).unwrap();
        let g = multiplicative_general_from(&mu, &conv, |s| s).unwrap();
        assert!(h.sup_diff(&g, (0.0, 1e3)) < 1e-6);
        assert!((h.conservation().re - 2.0).abs() < 1e-3, "{}", h.conservation());
        assert!(h.range_violation(1.0, 3.0) < 1e-6);
        assert!(h.cross_check.unwrap() < 1e-2);
    }

    #[test]
    fn multiplicative_dilation_and_zero() {
        let mu = Measure::free_poisson(2.0).unwrap();
        let c = Measure::point_mass(SupportDomain::NonNegativeReals, 2.5).unwrap();
        let h = denoise_multiplicative_identity(&mu, &c).unwrap();
        assert!(sup_vs(&h, (0.0, 1e3), |t| t / 2.5) < 1e-6);
        // μ({0}) ≥ ν({0}) → f(0)
        let mu = disc(SupportDomain::NonNegativeReals, &[(0.0, 0.6), (1.0, 0.4)]);
        let nu = Measure::free_poisson(0.5).unwrap();
        let conv = free_mult_convolve_positive(&mu, &nu).unwrap();
        let h = multiplicative_identity_from(&mu, &conv).unwrap();
        assert_eq!(h.zero_value.unwrap().h, 0.0);
        let g = multiplicative_general_from(&mu, &conv, |s| s + 3.0).unwrap();
        assert_eq!(g.zero_value.unwrap().h, 3.0);
        assert!((h.conservation().re - 0.4).abs() < 1e-3);
        // μ({0}) < ν({0})
        let mu = disc(SupportDomain::NonNegativeReals, &[(0.0, 0.2), (1.0, 0.8)]);
        let conv = free_mult_convolve_positive(&mu, &nu).unwrap();
        let h = multiplicative_identity_from(&mu, &conv).unwrap();
        let g = multiplicative_general_from(&mu, &conv, |s| s).unwrap();
        let (hz, gz) = (h.zero_value.unwrap().h, g.zero_value.unwrap().h);
        assert!((hz - gz).abs() < 1e-10, "{hz} {gz}");
        assert!(hz > 0.0 && hz < 1.0);
        assert!((h.conservation().re - 0.8).abs() < 1e-3, "{}", h.conservation());
    }

    #[test]
    fn ledoit_peche() {
        for lambda in [0.5, 2.0] {
            let nu = Measure::free_poisson(lambda).unwrap();
            let one = Measure::point_mass(SupportDomain::NonNegativeReals, 1.0).unwrap();
            let lp = denoise_ledoit_peche(&nu, lambda).unwrap();
            assert!(sup_vs(&lp, (0.0, 1e3), |_| 1.0) < 2e-3, "{lambda}");
            let mu = disc(SupportDomain::NonNegativeReals, &[(1.0, 0.5), (2.0, 0.5)]);
            let conv = free_mult_convolve_positive(&mu, &nu).unwrap();
            let lp = denoise_ledoit_peche(&conv.result, lambda).unwrap();
            let h = multiplicative_identity_from(&mu, &conv).unwrap();
            let d = lp.sup_diff(&h, (0.0, 1e3));
            assert!(d < 2e-3, "{lambda}: {d}");
            if lambda < 1.0 {
                let (a, b) = (lp.zero_value.unwrap().h, h.zero_value.unwrap().h);
                assert!((a - b).abs() < 1e-2, "{a} {b}");
            }
            let _ = one;
        }
    }

    #[test]
    fn circle_cases() {
        let u = SupportDomain::UnitCircle;
        let mu = Measure::haar().unwrap();
        let nu = disc(u, &[(0.3, 0.5), (1.1, 0.5)]);
        let one = denoise_circle(&nu, &mu, &ScalarFn::Poly(vec![1.0])).unwrap();
        assert!(sup_vs(&one, (0.0, TAU), |_| 1.0) < 1e-6);
        // rotation: h(t) = t·c̄
        let c = 0.8;
        let rot = denoise_circle(&nu, &Measure::point_mass(u, c).unwrap(), &ScalarFn::Identity).unwrap();
        for a in &rot.atom_values {
            let want = C::from_polar(1.0, a.gamma - c);
            assert!((C::new(a.h, a.h_imag) - want).norm() < 1e-12);
        }
        let pm = disc(u, &[(0.0, 0.5), (PI, 0.5)]);
        let other = disc(u, &[(0.2, 0.5), (0.9, 0.5)]);
        for (a, b) in [(&pm, &pm), (&nu, &mu), (&nu, &other)] {
            let h = denoise_circle(a, b, &ScalarFn::Identity).unwrap();
            let want = a.moment(1);
            assert!((h.conservation() - want).norm() < 1e-3, "{} vs {want}", h.conservation());
        }
    }

    #[test]
    fn compression() {
        let a = Measure::free_poisson(1.0).unwrap();
        let out = denoise_cfree_radon_nikodym(&CFreeCase::Compression { signal: a, tau: 0.5 }).unwrap();
        let z = out.curve.zero_value.unwrap();
        assert!((z.mass - 0.5).abs() < 1e-12);
        assert!((z.h - 1.0).abs() < 1e-6, "{}", z.h);
        assert!(sup_vs(&out.curve, (0.0, 1e3), |t| t) < 1e-6);
        assert!((out.chi_mass - 1.0).abs() < 1e-3, "{}", out.chi_mass);
        assert!(matches!(CFreeCase::parse("quadratic", None, None), Err(Error::UnsupportedCase(_))));
    }

    #[test]
    fn scalar_fn_parse() {
        assert_eq!(ScalarFn::parse("id").unwrap(), ScalarFn::Identity);
        assert_eq!(ScalarFn::parse("indicator:1,2").unwrap().eval(1.5), 1.0);
        assert_eq!(ScalarFn::parse("poly:1,0,2").unwrap().eval(3.0), 19.0);
        assert!(ScalarFn::parse("indicator:2,1").is_err());
        assert!(ScalarFn::parse("sin").is_err());
    }
}
