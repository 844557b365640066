//! Subordination functions for ⊞, for ⊠ on ℝ₊ and for ⊠ on the circle.
//!
//! Fixed points are found by Picard iteration of the usual analytic
//! self-maps, with a safeguarded Newton step on w − Φ(w). Boundary values
//! come from continuation in ε and along the grid.

use crate::error::{Error, Result};
use crate::measure::{Measure, SupportDomain};
use crate::transforms::{extrapolate_c, g_eval, psi_parts, DEFAULT_EPS};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubordinationKind {
    Additive,
    MultiplicativePositive,
    MultiplicativeCircle,
}

impl SubordinationKind {
    fn check(self, mu: &Measure, nu: &Measure) -> Result<()> {
        let ok = |m: &Measure| match self {
            SubordinationKind::Additive => m.domain() != SupportDomain::UnitCircle,
            SubordinationKind::MultiplicativePositive => m.domain() == SupportDomain::NonNegativeReals || m.support().0 >= 0.0,
            SubordinationKind::MultiplicativeCircle => m.domain().is_circle(),
        };
        if ok(mu) && ok(nu) {
            Ok(())
        } else {
            Err(Error::DomainViolation(format!("{self:?} subordination needs matching measure domains")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// residual tolerance, relative to 1 + |w|
    pub tol: f64,
    pub max_iter: usize,
    /// non-contracting Picard steps before damping by ½
    pub damp_after: usize,
    /// boundary offset, relative to max(1, support radius)
    pub eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-12, max_iter: 10_000, damp_after: 200, eps: DEFAULT_EPS }
    }
}

/// h(w) = F(w) − w and its derivative.
fn h_add(m: &Measure, w: C) -> (C, C) {
    let (g, gp) = g_eval(m, w);
    let f = g.inv();
    (f - w, -gp * f * f - 1.0)
}

/// k(w) = η(w)/w and its derivative.
fn k_mult(m: &Measure, w: C) -> (C, C) {
    let p = psi_parts(m, w);
    let d = (p.psi + 1.0).inv();
    (p.pw * d, (p.dpw * (p.psi + 1.0) - p.pw * p.dpsi) * d * d)
}

/// Fixed point of `phi` (which returns Φ(w), Φ'(w)) from `w0`.
fn fixed_point(phi: &dyn Fn(C) -> (C, C), valid: &dyn Fn(C) -> bool, w0: C, cfg: &SolverConfig) -> Result<C> {
    let mut w = w0;
    let (mut p, mut dp) = phi(w);
    let mut prev = f64::INFINITY;
    let mut stalls = 0;
    let mut damped = false;
    let mut best = (f64::INFINITY, w, 0);
    for it in 0..cfg.max_iter {
        let res = (p - w).norm();
        if !res.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        if res < 0.999 * best.0 {
            best = (res, w, it);
        } else if it - best.2 > 100 {
            // stagnation at the round-off floor (large intermediate values)
            if best.0 <= 1e-8 * (1.0 + best.1.norm()) {
                return Ok(best.1);
            }
            return Err(Error::NoConvergence { iterations: it, residual: best.0 });
        }
        let den = C::new(1.0, 0.0) - dp;
        let step = (p - w) / den;
        let tol = cfg.tol * (1.0 + w.norm());
        // the residual alone understates the error when Φ'(w) is close to 1
        if res <= tol && (step.norm() <= tol || res <= 1e-3 * tol) {
            let wn = w + step;
            return Ok(if step.is_finite() && valid(wn) { wn } else if valid(p) { p } else { w });
        }
        if step.is_finite() {
            // backtracking Newton; Picard is the fallback
            let mut lam = 1.0;
            let mut took = false;
            while lam > 1e-3 {
                let wn = w + lam * step;
                if valid(wn) {
                    let (pn, dpn) = phi(wn);
                    if (pn - wn).norm() < res {
                        (w, p, dp) = (wn, pn, dpn);
                        took = true;
                        break;
                    }
                }
                lam *= 0.25;
            }
            if took {
                continue;
            }
        }
        if res >= prev {
            stalls += 1;
            damped |= stalls >= cfg.damp_after;
        }
        prev = res;
        let next = if damped { 0.5 * (w + p) } else { p };
        if !valid(next) {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        w = next;
        (p, dp) = phi(w);
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, residual: (p - w).norm() })
}

/// One solve in canonical order: (ω₁ for `a`, ω₂ for `b`).
fn solve(kind: SubordinationKind, a: &Measure, b: &Measure, z: C, w0: C, cfg: &SolverConfig) -> Result<(C, C)> {
    if let Some(r) = closed_form(kind, a, b, z) {
        return Ok(r);
    }
    match kind {
        SubordinationKind::Additive => {
            let phi = |w: C| {
                let (ha, dha) = h_add(a, w);
                let (hb, dhb) = h_add(b, z + ha);
                (z + hb, dhb * dha)
            };
            let w = fixed_point(&phi, &|w: C| w.im > 0.0, w0, cfg)?;
            Ok((w, z + h_add(a, w).0))
        }
        SubordinationKind::MultiplicativePositive => {
            let real = z.im == 0.0;
            let phi = |w: C| {
                let (ka, dka) = k_mult(a, w);
                let (kb, dkb) = k_mult(b, z * ka);
                let (p, dp) = (z * kb, z * z * dkb * dka);
                if real {
                    (C::new(p.re, 0.0), C::new(dp.re, 0.0))
                } else {
                    (p, dp)
                }
            };
            let valid = |w: C| if real { w.re < 0.0 && w.im == 0.0 } else { w.im > 0.0 };
            let w = fixed_point(&phi, &valid, w0, cfg)?;
            Ok((w, z * k_mult(a, w).0))
        }
        SubordinationKind::MultiplicativeCircle => {
            let phi = |w: C| {
                let (ka, dka) = k_mult(a, w);
                let (kb, dkb) = k_mult(b, z * ka);
                (z * kb, z * z * dkb * dka)
            };
            let w = fixed_point(&phi, &|w: C| w.norm() < 1.0, w0, cfg).map_err(|e| {
                if a.moment(1).norm() < 1e-12 || b.moment(1).norm() < 1e-12 {
                    Error::DegenerateFirstMoment
                } else {
                    e
                }
            })?;
            Ok((w, z * k_mult(a, w).0))
        }
    }
}

/// Translation / dilation / rotation when one side is a point mass.
fn closed_form(kind: SubordinationKind, a: &Measure, b: &Measure, z: C) -> Option<(C, C)> {
    let (ca, cb) = (a.as_point_mass(), b.as_point_mass());
    match kind {
        SubordinationKind::Additive => match (ca, cb) {
            (_, Some(c)) => {
                let w1 = z - c;
                Some((w1, z + h_add(a, w1).0))
            }
            (Some(c), None) => {
                let w2 = z - c;
                Some((z + h_add(b, w2).0, w2))
            }
            _ => None,
        },
        _ => {
            let unit = |c: f64| if kind == SubordinationKind::MultiplicativeCircle { C::from_polar(1.0, c) } else { C::new(c, 0.0) };
            match (ca, cb) {
                (_, Some(c)) => {
                    let w1 = z * unit(c);
                    Some((w1, z * k_mult(a, w1).0))
                }
                (Some(c), None) => {
                    let w2 = z * unit(c);
                    Some((z * k_mult(b, w2).0, w2))
                }
                _ => None,
            }
        }
    }
}

fn canonical<'a>(mu: &'a Measure, nu: &'a Measure) -> (&'a Measure, &'a Measure, bool) {
    if mu.canonical_cmp(nu) == Ordering::Greater {
        (nu, mu, true)
    } else {
        (mu, nu, false)
    }
}

fn swap_if(r: (C, C), swapped: bool) -> (C, C) {
    if swapped {
        (r.1, r.0)
    } else {
        r
    }
}

/// Solve at `z(ε_target)`, descending ε by factors of 4 from `eps0` when no
/// usable guess is available.
fn solve_path(
    kind: SubordinationKind,
    a: &Measure,
    b: &Measure,
    z_of: &dyn Fn(f64) -> C,
    eps: f64,
    eps0: f64,
    guess: Option<C>,
    cfg: &SolverConfig,
) -> Result<(C, C)> {
    if let Some(g) = guess {
        if let Ok(r) = solve(kind, a, b, z_of(eps), g, cfg) {
            return Ok(r);
        }
    }
    let mut e = eps0.max(eps);
    let mut w = z_of(e);
    loop {
        let r = solve(kind, a, b, z_of(e), w, cfg)?;
        if e <= eps {
            return Ok(r);
        }
        w = r.0;
        e = (0.25 * e).max(eps);
    }
}

/// (ω₁(z), ω₂(z)) for μ ⊞ ν, Im z > 0.
pub fn omega_additive(mu: &Measure, nu: &Measure, z: C) -> Result<(C, C)> {
    omega_additive_with(mu, nu, z, &SolverConfig::default())
}

pub fn omega_additive_with(mu: &Measure, nu: &Measure, z: C, cfg: &SolverConfig) -> Result<(C, C)> {
    SubordinationKind::Additive.check(mu, nu)?;
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(Error::InvalidInput(format!("additive subordination needs Im z > 0, got {z}")));
    }
    let (a, b, sw) = canonical(mu, nu);
    let scale = 1.0f64.max(a.radius() + b.radius());
    let z_of = |e: f64| C::new(z.re, e);
    let r = solve_path(SubordinationKind::Additive, a, b, &z_of, z.im, scale, None, cfg)?;
    Ok(swap_if(r, sw))
}

/// (ω₁(z), ω₂(z)) for μ ⊠ ν on ℝ₊, z ∈ ℂ \ [0, ∞).
pub fn omega_multiplicative_positive(mu: &Measure, nu: &Measure, z: C) -> Result<(C, C)> {
    omega_multiplicative_positive_with(mu, nu, z, &SolverConfig::default())
}

pub fn omega_multiplicative_positive_with(mu: &Measure, nu: &Measure, z: C, cfg: &SolverConfig) -> Result<(C, C)> {
    let kind = SubordinationKind::MultiplicativePositive;
    kind.check(mu, nu)?;
    if !(z.re.is_finite() && z.im.is_finite()) || (z.im == 0.0 && z.re >= 0.0) {
        return Err(Error::InvalidInput(format!("multiplicative subordination needs z ∉ [0, ∞), got {z}")));
    }
    let (a, b, sw) = canonical(mu, nu);
    let r = if z.im == 0.0 {
        solve(kind, a, b, z, z, cfg)?
    } else {
        // work in ℂ⁺ along the ray through z, pushed away from ℝ₊ first
        let zu = if z.im > 0.0 { z } else { z.conj() };
        let r0 = zu.norm();
        let th = zu.arg();
        let z_of = |e: f64| C::from_polar(r0, e);
        let th0 = th.max(std::f64::consts::FRAC_PI_2);
        let r = solve_path(kind, a, b, &z_of, th, th0, None, cfg)?;
        if z.im > 0.0 {
            r
        } else {
            (r.0.conj(), r.1.conj())
        }
    };
    Ok(swap_if(r, sw))
}

/// (ω₁(z), ω₂(z)) for μ ⊠ ν on the circle, |z| < 1.
pub fn omega_circle(mu: &Measure, nu: &Measure, z: C) -> Result<(C, C)> {
    omega_circle_with(mu, nu, z, &SolverConfig::default())
}

pub fn omega_circle_with(mu: &Measure, nu: &Measure, z: C, cfg: &SolverConfig) -> Result<(C, C)> {
    let kind = SubordinationKind::MultiplicativeCircle;
    kind.check(mu, nu)?;
    if !(z.norm() < 1.0) {
        return Err(Error::InvalidInput(format!("circle subordination needs |z| < 1, got {z}")));
    }
    if z == C::new(0.0, 0.0) {
        return Ok((z, z));
    }
    let (a, b, sw) = canonical(mu, nu);
    let (r, th) = (z.norm(), z.arg());
    let z_of = |e: f64| C::from_polar(1.0 - e, th);
    let r = solve_path(kind, a, b, &z_of, 1.0 - r, 0.5f64.max(1.0 - r), None, cfg)?;
    Ok(swap_if(r, sw))
}

/// lim ω(z) as z → −∞ along the negative axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZeroLimit {
    Value(f64),
    MinusInfinity,
}

impl ZeroLimit {
    pub fn value(self) -> Option<f64> {
        match self {
            ZeroLimit::Value(v) => Some(v),
            ZeroLimit::MinusInfinity => None,
        }
    }
}

/// ψ_μ restricted to (−∞, 0).
pub fn psi_negative(m: &Measure, u: f64) -> f64 {
    psi_parts(m, C::new(u, 0.0)).psi.re
}

/// ψ_μ⁻¹(ν({0}) − 1) if μ({0}) < ν({0}), else −∞.
pub fn omega_zero_limit(mu: &Measure, nu: &Measure) -> ZeroLimit {
    let (m0, n0) = (mu.mass_at_zero(), nu.mass_at_zero());
    if m0 >= n0 {
        return ZeroLimit::MinusInfinity;
    }
    let target = n0 - 1.0;
    // ψ(−e^s) decreases from 0 to μ({0}) − 1 as s goes from −∞ to ∞
    let f = |s: f64| psi_negative(mu, -s.exp()) - target;
    let (mut lo, mut hi) = (-40.0, 40.0);
    while f(lo) < 0.0 && lo > -700.0 {
        lo -= 40.0;
    }
    while f(hi) > 0.0 && hi < 700.0 {
        hi += 40.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (ul, uh) = (-lo.exp(), -hi.exp());
    ZeroLimit::Value(if f(lo).abs() <= f(hi).abs() { ul } else { uh })
}

/// Atom of the convolution predicted by the pairing criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomPair {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Pairs (α, β) with μ({α}) + ν({β}) > 1, located at α+β, αβ (> 0) or the
/// angle α+β.
pub fn atom_pairs(kind: SubordinationKind, mu: &Measure, nu: &Measure) -> Vec<AtomPair> {
    let mut out = Vec::new();
    for x in mu.atoms() {
        for y in nu.atoms() {
            if x.mass + y.mass <= 1.0 {
                continue;
            }
            let gamma = match kind {
                SubordinationKind::Additive => x.loc + y.loc,
                SubordinationKind::MultiplicativePositive => x.loc * y.loc,
                SubordinationKind::MultiplicativeCircle => (x.loc + y.loc).rem_euclid(TAU),
            };
            if kind == SubordinationKind::MultiplicativePositive && gamma <= 0.0 {
                continue;
            }
            out.push(AtomPair { gamma, alpha: x.loc, beta: y.loc });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomLimit {
    pub gamma: f64,
    pub omega1: C,
    pub omega2: C,
}

/// Boundary values of ω on a grid.
///
/// Evaluation points per grid value x and offset e ∈ {ε, ε/2, ε/4}:
/// additive z = x + ie; ℝ₊ z = 1/(x + ie) (so stored ω approximate
/// ω(1/x) from ℂ⁻); circle z = (1 − e)e^{−ix}.
#[derive(Debug, Clone)]
pub struct SubordinationResult {
    pub kind: SubordinationKind,
    pub grid: Vec<f64>,
    /// offset ε per grid point
    pub eps: Vec<f64>,
    /// ω₁, ω₂ at offsets ε and ε/2
    pub omega1: [Vec<C>; 2],
    pub omega2: [Vec<C>; 2],
    /// extrapolated boundary values
    pub boundary1: Vec<C>,
    pub boundary2: Vec<C>,
    /// G of the convolution at x + ie (line cases) or ψ at (1−e)e^{−ix}
    /// (circle), for e = ε, ε/2
    pub target: [Vec<C>; 2],
    pub resolved: Vec<bool>,
    /// extrapolation agreed with the ε/2, ε/4 pair
    pub stable: Vec<bool>,
    pub in_u: Vec<bool>,
    pub regular_set: Vec<(f64, f64)>,
    pub atom_limits: Vec<AtomLimit>,
    pub zero_limit: Option<ZeroLimit>,
}

impl SubordinationResult {
    /// Density of the convolution implied by the extrapolated target values.
    pub fn density(&self) -> Vec<f64> {
        let pi = std::f64::consts::PI;
        (0..self.grid.len())
            .map(|k| {
                if !self.resolved[k] {
                    return f64::NAN;
                }
                let v = extrapolate_c(self.target[0][k], self.target[1][k]);
                match self.kind {
                    SubordinationKind::MultiplicativeCircle => (2.0 * v.re + 1.0) / TAU,
                    _ => -v.im / pi,
                }
            })
            .collect()
    }
}

fn scale_of(kind: SubordinationKind, a: &Measure, b: &Measure) -> f64 {
    match kind {
        SubordinationKind::Additive => 1.0f64.max(a.radius() + b.radius()),
        SubordinationKind::MultiplicativePositive => 1.0f64.max(a.radius() * b.radius()),
        SubordinationKind::MultiplicativeCircle => 1.0,
    }
}

/// Absolute boundary offset used for a pair.
pub fn boundary_eps(kind: SubordinationKind, mu: &Measure, nu: &Measure, cfg: &SolverConfig) -> f64 {
    match kind {
        SubordinationKind::MultiplicativeCircle => cfg.eps,
        _ => cfg.eps * scale_of(kind, mu, nu),
    }
}

struct Probe<'a> {
    kind: SubordinationKind,
    a: &'a Measure,
    b: &'a Measure,
    scale: f64,
    cfg: &'a SolverConfig,
}

impl Probe<'_> {
    /// Solve at grid value x, offset e (in the conjugated frame for ℝ₊).
    fn at(&self, x: f64, e: f64, guess: Option<C>) -> Result<(C, C)> {
        match self.kind {
            SubordinationKind::Additive => {
                let z_of = |e: f64| C::new(x, e);
                solve_path(self.kind, self.a, self.b, &z_of, e, self.scale, guess, self.cfg)
            }
            SubordinationKind::MultiplicativePositive => {
                let z_of = |e: f64| C::new(x, -e).inv();
                solve_path(self.kind, self.a, self.b, &z_of, e, self.scale.max(x), guess, self.cfg)
            }
            SubordinationKind::MultiplicativeCircle => {
                let z_of = |e: f64| C::from_polar(1.0 - e, -x);
                solve_path(self.kind, self.a, self.b, &z_of, e, 0.5, guess, self.cfg)
            }
        }
    }

    /// Output-frame ω pair and target value from a solve in the work frame.
    fn finish(&self, x: f64, e: f64, r: (C, C)) -> (C, C, C) {
        match self.kind {
            SubordinationKind::Additive => {
                let g = g_eval(self.a, r.0).0;
                (r.0, r.1, g)
            }
            SubordinationKind::MultiplicativePositive => {
                let psi = psi_parts(self.a, r.0).psi.conj();
                let g = (psi + 1.0) / C::new(x, e);
                (r.0.conj(), r.1.conj(), g)
            }
            SubordinationKind::MultiplicativeCircle => {
                let psi = psi_parts(self.a, r.0).psi;
                (r.0, r.1, psi)
            }
        }
    }
}

/// Sample ω at three offsets on `grid`, extrapolate, and classify points.
pub fn extend_to_boundary(
    kind: SubordinationKind,
    mu: &Measure,
    nu: &Measure,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<SubordinationResult> {
    boundary(kind, mu, nu, grid, None, cfg, true)
}

/// As `extend_to_boundary`, with optional per-point caps on ε (used next to
/// support edges) and optionally skipping atom and zero limits.
pub(crate) fn boundary(
    kind: SubordinationKind,
    mu: &Measure,
    nu: &Measure,
    grid: &[f64],
    eps_cap: Option<&[f64]>,
    cfg: &SolverConfig,
    limits: bool,
) -> Result<SubordinationResult> {
    kind.check(mu, nu)?;
    if kind == SubordinationKind::MultiplicativePositive && grid.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidInput("ℝ₊ boundary grid must be positive (t = 0 has its own branch)".into()));
    }
    let (a, b, sw) = canonical(mu, nu);
    let eps = boundary_eps(kind, a, b, cfg);
    let probe = Probe { kind, a, b, scale: scale_of(kind, a, b), cfg };
    let n = grid.len();
    let nan = C::new(f64::NAN, f64::NAN);
    let mut w1 = [vec![nan; n], vec![nan; n]];
    let mut w2 = [vec![nan; n], vec![nan; n]];
    let mut target = [vec![nan; n], vec![nan; n]];
    let mut resolved = vec![false; n];
    let mut stable = vec![false; n];
    let mut b1 = vec![nan; n];
    let mut b2 = vec![nan; n];
    let mut guess: Option<C> = None;
    let mut eps_at = vec![eps; n];
    for (k, &x) in grid.iter().enumerate() {
        let e0 = eps_cap.map_or(eps, |c| eps.min(c[k]));
        eps_at[k] = e0;
        let levels = [e0, 0.5 * e0, 0.25 * e0];
        let mut sols = Vec::with_capacity(3);
        let mut g = guess;
        for &e in &levels {
            match probe.at(x, e, g) {
                Ok(r) => {
                    g = Some(r.0);
                    sols.push((e, r));
                }
                Err(err) => {
                    log::debug!("subordination unresolved at {x}: {err}");
                    break;
                }
            }
        }
        if sols.len() < 2 {
            guess = None;
            continue;
        }
        guess = Some(sols[0].1 .0);
        for l in 0..2 {
            let (e, r) = sols[l];
            let (o1, o2, t) = probe.finish(x, e, r);
            w1[l][k] = o1;
            w2[l][k] = o2;
            target[l][k] = t;
        }
        resolved[k] = true;
        b1[k] = extrapolate_c(w1[0][k], w1[1][k]);
        b2[k] = extrapolate_c(w2[0][k], w2[1][k]);
        if sols.len() == 3 {
            let (e, r) = sols[2];
            let o = probe.finish(x, e, r).0;
            let again = extrapolate_c(w1[1][k], o);
            stable[k] = (again - b1[k]).norm() < 1e-4 * (1.0 + b1[k].norm());
        }
    }
    let mut res = SubordinationResult {
        kind,
        grid: grid.to_vec(),
        eps: eps_at,
        omega1: w1,
        omega2: w2,
        boundary1: b1,
        boundary2: b2,
        target,
        resolved,
        stable,
        in_u: vec![false; n],
        regular_set: Vec::new(),
        atom_limits: Vec::new(),
        zero_limit: None,
    };
    let dens = res.density();
    let fmax = dens.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, &v| m.max(v));
    for k in 0..n {
        let w = res.boundary1[k];
        let interior = match kind {
            SubordinationKind::Additive => w.im > 1e-6,
            SubordinationKind::MultiplicativePositive => -w.im > 1e-6 * w.norm(),
            SubordinationKind::MultiplicativeCircle => w.norm() < 1.0 - 1e-6,
        };
        res.in_u[k] = res.resolved[k] && res.stable[k] && interior && dens[k] > 1e-8 * fmax;
    }
    res.regular_set = runs(&res.grid, &res.in_u);
    for p in atom_pairs(kind, a, b).into_iter().filter(|_| limits) {
        let x = p.gamma;
        let r0 = probe.at(x, eps, None).and_then(|r| Ok((r, probe.at(x, 0.5 * eps, Some(r.0))?)));
        if let Ok((r0, r1)) = r0 {
            let f0 = probe.finish(x, eps, r0);
            let f1 = probe.finish(x, 0.5 * eps, r1);
            res.atom_limits.push(AtomLimit {
                gamma: p.gamma,
                omega1: extrapolate_c(f0.0, f1.0),
                omega2: extrapolate_c(f0.1, f1.1),
            });
        }
    }
    if limits && kind == SubordinationKind::MultiplicativePositive {
        res.zero_limit = Some(omega_zero_limit(mu, nu));
    }
    if sw {
        std::mem::swap(&mut res.omega1, &mut res.omega2);
        std::mem::swap(&mut res.boundary1, &mut res.boundary2);
        for l in &mut res.atom_limits {
            std::mem::swap(&mut l.omega1, &mut l.omega2);
        }
    }
    Ok(res)
}

/// Maximal runs of `true` as closed grid intervals.
fn runs(grid: &[f64], flag: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for k in 0..grid.len() {
        match (flag[k], start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((grid[s], grid[k - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid[s], grid[grid.len() - 1]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{cauchy, psi};
    use crate::SupportDomain::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn semicircle_pair_closed_form() {
        let s = Measure::semicircle(1.0).unwrap();
        let (w1, w2) = omega_additive(&s, &s, c(0.0, 3.0)).unwrap();
        let want = c(0.0, (9.0 + 17f64.sqrt()) / 4.0);
        // limited by the sampled semicircle, not the solver
        assert!((w1 - want).norm() < 1e-6, "{w1}");
        assert!((w1 - w2).norm() < 1e-12);
        // off axis: ω(z) = (3z + √(z²−8))/4
        let z = c(0.7, 0.2);
        let (w1, _) = omega_additive(&s, &s, z).unwrap();
        let r = 8f64.sqrt();
        let want = (3.0 * z + (z - r).sqrt() * (z + r).sqrt()) / 4.0;
        assert!((w1 - want).norm() < 1e-6, "{w1} vs {want}");
    }

    #[test]
    fn additive_translation() {
        let mu = Measure::discrete(RealLine, &[(-1.0, 0.3), (2.0, 0.7)]).unwrap();
        let nu = Measure::point_mass(RealLine, 1.5).unwrap();
        for z in [c(0.3, 1e-3), c(-4.0, 2.0)] {
            let (w1, w2) = omega_additive(&mu, &nu, z).unwrap();
            assert_eq!(w1, z - 1.5);
            let (v1, v2) = omega_additive(&nu, &mu, z).unwrap();
            assert_eq!((v1, v2), (w2, w1));
        }
    }

    #[test]
    fn additive_identities_and_asymptotics() {
        let mu = Measure::discrete(RealLine, &[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let nu = Measure::semicircle(1.0).unwrap();
        for z in [c(0.1, 0.05), c(2.5, 0.5), c(-0.8, 1e-4)] {
            let (w1, w2) = omega_additive(&mu, &nu, z).unwrap();
            assert!(w1.im >= z.im && w2.im >= z.im);
            let g1 = cauchy(&mu, w1).unwrap();
            let g2 = cauchy(&nu, w2).unwrap();
            assert!((g1 - g2).norm() < 1e-8, "{g1} {g2}");
            assert!((w1 + w2 - z - g1.inv()).norm() < 1e-8 * (1.0 + w1.norm()));
        }
        let y = 1e3 * 2.0;
        let (w1, _) = omega_additive(&mu, &nu, c(0.0, y)).unwrap();
        assert!((w1 / c(0.0, y) - 1.0).norm() < 1e-2);
    }

    #[test]
    fn swap_is_exact() {
        let mu = Measure::discrete(RealLine, &[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let nu = Measure::semicircle(1.0).unwrap();
        let z = c(0.4, 0.01);
        let a = omega_additive(&mu, &nu, z).unwrap();
        let b = omega_additive(&nu, &mu, z).unwrap();
        assert_eq!(a, (b.1, b.0));
    }

    fn two_point() -> Measure {
        Measure::discrete(NonNegativeReals, &[(1.0, 0.5), (2.0, 0.5)]).unwrap()
    }

    #[test]
    fn multiplicative_unit_and_free_poisson() {
        let one = Measure::point_mass(NonNegativeReals, 1.0).unwrap();
        let nu = Measure::free_poisson(2.0).unwrap();
        let z = c(-0.3, 0.4);
        let (w1, w2) = omega_multiplicative_positive(&one, &nu, z).unwrap();
        assert!((w2 - z).norm() < 1e-10);
        assert!((psi(&one, w1).unwrap() - psi(&nu, z).unwrap()).norm() < 1e-10);

        let mu = two_point();
        for lam in [0.5, 2.0] {
            // fine sampling: the identity is exact only for the true law
            let nu = Measure::free_poisson_with(lam, 65536).unwrap();
            for z in [c(-1.0, 0.5), c(0.3, 0.2), c(2.0, 0.3)] {
                let (w1, _) = omega_multiplicative_positive(&mu, &nu, z).unwrap();
                let p = psi(&mu, w1).unwrap();
                assert!((w1 - z * (lam + p)).norm() < 1e-8, "λ={lam} z={z}: {w1} vs {}", z * (lam + p));
                assert!(w1.arg() >= z.arg() - 1e-12);
            }
        }
    }

    #[test]
    fn multiplicative_product_identity() {
        let mu = two_point();
        let nu = Measure::free_poisson(0.5).unwrap();
        let z = c(-1.0, 0.5);
        let (w1, w2) = omega_multiplicative_positive(&mu, &nu, z).unwrap();
        let p1 = psi(&mu, w1).unwrap();
        let p2 = psi(&nu, w2).unwrap();
        assert!((p1 - p2).norm() < 1e-8);
        let eta = p1 / (1.0 + p1);
        assert!((w1 * w2 - z * eta).norm() < 1e-8);
        // real negative z stays real
        let (w1, w2) = omega_multiplicative_positive(&mu, &nu, c(-2.0, 0.0)).unwrap();
        assert!(w1.im == 0.0 && w1.re < 0.0 && w2.re < 0.0);
        assert!((psi(&mu, w1).unwrap() - psi(&nu, w2).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn zero_limit() {
        let mu = two_point();
        let nu = Measure::free_poisson(0.5).unwrap();
        assert_eq!(omega_zero_limit(&nu, &mu), ZeroLimit::MinusInfinity);
        let p = Measure::free_poisson(2.0).unwrap();
        assert_eq!(omega_zero_limit(&mu, &p), ZeroLimit::MinusInfinity);
        let u = omega_zero_limit(&mu, &nu).value().unwrap();
        assert!((psi_negative(&mu, u) + 0.5).abs() < 1e-10);
        // ½(u/(1−u) + 2u/(1−2u)) = −½  ⇔  u² = ½
        assert!((u + 0.5f64.sqrt()).abs() < 1e-12, "{u}");
    }

    #[test]
    fn circle_cases() {
        let nu = Measure::point_mass(UnitCircle, 0.7).unwrap();
        let mu = Measure::haar().unwrap();
        let z = c(0.3, -0.4);
        let (w1, _) = omega_circle(&mu, &nu, z).unwrap();
        assert!((w1 - C::from_polar(1.0, 0.7) * z).norm() < 1e-14);

        let pm = Measure::discrete(UnitCircle, &[(0.0, 0.5), (std::f64::consts::PI, 0.5)]).unwrap();
        let (w1, w2) = omega_circle(&pm, &pm, c(0.5, 0.0)).unwrap();
        assert!(w1.norm() < 1e-10 && w2.norm() < 1e-10);
        assert!(psi(&pm, w1).unwrap().norm() < 1e-8);
        assert_eq!(omega_circle(&pm, &mu, c(0.0, 0.0)).unwrap(), (c(0.0, 0.0), c(0.0, 0.0)));

        let a = Measure::discrete(UnitCircle, &[(0.3, 0.6), (2.0, 0.4)]).unwrap();
        let b = Measure::discrete(UnitCircle, &[(1.0, 0.3), (5.0, 0.7)]).unwrap();
        let z = c(0.6, 0.5);
        let (w1, w2) = omega_circle(&a, &b, z).unwrap();
        assert!(w1.norm() <= z.norm() + 1e-12);
        let (p1, p2) = (psi(&a, w1).unwrap(), psi(&b, w2).unwrap());
        assert!((p1 - p2).norm() < 1e-8);
        assert!((w1 * w2 - z * p1 / (1.0 + p1)).norm() < 1e-8);
    }

    #[test]
    fn boundary_arcsine() {
        let mu = Measure::discrete(RealLine, &[(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let grid: Vec<f64> = (1..80).map(|k| 4.0 * k as f64 / 80.0).collect();
        let r = extend_to_boundary(SubordinationKind::Additive, &mu, &mu, &grid, &SolverConfig::default()).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            assert!(r.in_u[k], "t = {t}");
            let z = c(t, 0.0);
            let want = (z + (z * (z - 4.0)).sqrt()) / 2.0;
            let want = if want.im < 0.0 { want.conj() } else { want };
            assert!((r.boundary1[k] - want).norm() < 1e-6, "{t}: {} vs {want}", r.boundary1[k]);
        }
        assert_eq!(r.regular_set.len(), 1);
        let k = grid.iter().position(|&t| t == 2.0).unwrap();
        assert!((r.boundary1[k] - c(1.0, 1.0)).norm() < 1e-8, "{}", r.boundary1[k]);
    }

    #[test]
    fn boundary_atom_and_translation() {
        let mu = Measure::discrete(RealLine, &[(0.0, 0.75), (2.0, 0.25)]).unwrap();
        let r = extend_to_boundary(SubordinationKind::Additive, &mu, &mu, &[0.5, 1.0], &SolverConfig::default()).unwrap();
        assert_eq!(r.atom_limits.len(), 1);
        assert_eq!(r.atom_limits[0].gamma, 0.0);
        assert!(r.atom_limits[0].omega1.norm() < 1e-4, "{}", r.atom_limits[0].omega1);

        let s = Measure::semicircle(1.0).unwrap();
        let d = Measure::point_mass(RealLine, 0.5).unwrap();
        let grid = [-1.0, 0.0, 2.0, 3.0];
        let r = extend_to_boundary(SubordinationKind::Additive, &s, &d, &grid, &SolverConfig::default()).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            assert!((r.boundary1[k] - c(t - 0.5, 0.0)).norm() < 1e-12);
            assert_eq!(r.in_u[k], false);
        }
    }

    #[test]
    fn boundary_multiplicative_and_circle() {
        let mu = two_point();
        let nu = Measure::free_poisson(2.0).unwrap();
        let grid: Vec<f64> = (1..60).map(|k| 0.2 * k as f64).collect();
        let r = extend_to_boundary(SubordinationKind::MultiplicativePositive, &mu, &nu, &grid, &SolverConfig::default()).unwrap();
        assert!(r.resolved.iter().all(|&x| x));
        assert!(r.in_u.iter().any(|&x| x));
        let r2 = extend_to_boundary(SubordinationKind::MultiplicativePositive, &nu, &mu, &grid, &SolverConfig::default()).unwrap();
        assert_eq!(r.boundary1, r2.boundary2);
        assert_eq!(r.target[0], r2.target[0]);

        let a = Measure::discrete(UnitCircle, &[(0.3, 0.6), (2.0, 0.4)]).unwrap();
        let h = Measure::haar().unwrap();
        let th: Vec<f64> = (0..64).map(|k| TAU * k as f64 / 64.0).collect();
        let r = extend_to_boundary(SubordinationKind::MultiplicativeCircle, &a, &h, &th, &SolverConfig::default()).unwrap();
        for d in r.density() {
            assert!((d - 1.0 / TAU).abs() < 1e-6, "{d}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn omega_increases_imaginary_part(x in -4.0f64..4.0, y in 1e-3f64..3.0, p in 0.05f64..0.95, c0 in -2.0f64..2.0) {
            let mu = Measure::discrete(RealLine, &[(c0, p), (c0 + 1.0, 1.0 - p)]).unwrap();
            let nu = Measure::semicircle(0.5).unwrap();
            let z = C::new(x, y);
            let (w1, w2) = omega_additive(&mu, &nu, z).unwrap();
            prop_assert!(w1.im >= z.im * (1.0 - 1e-12));
            prop_assert!(w2.im >= z.im * (1.0 - 1e-12));
            let g = cauchy(&mu, w1).unwrap();
            prop_assert!((g - cauchy(&nu, w2).unwrap()).norm() < 1e-8);
        }

        #[test]
        fn circle_omega_in_disk(r in 0.0f64..0.99, th in 0.0f64..6.28, p in 0.05f64..0.95) {
            let a = Measure::discrete(UnitCircle, &[(0.5, p), (3.0, 1.0 - p)]).unwrap();
            let b = Measure::discrete(UnitCircle, &[(1.0, 0.5), (4.0, 0.5)]).unwrap();
            let z = C::from_polar(r, th);
            let (w1, w2) = omega_circle(&a, &b, z).unwrap();
            prop_assert!(w1.norm() <= r + 1e-12 && w2.norm() <= r + 1e-12);
        }
    }
}
