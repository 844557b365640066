//! Compactly supported probability measures: atoms plus a sampled density.

use crate::error::{Error, Result};
use crate::kernel::{gl16, CircleKernel, LineKernel};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

pub const DEFAULT_GRID: usize = 2048;
const MASS_TOL: f64 = 1e-6;
const SERIES_TERMS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportDomain {
    #[serde(rename = "real")]
    RealLine,
    #[serde(rename = "nonneg")]
    NonNegativeReals,
    #[serde(rename = "circle")]
    UnitCircle,
}

impl SupportDomain {
    pub fn is_circle(self) -> bool {
        self == SupportDomain::UnitCircle
    }

    fn contains(self, x: f64) -> bool {
        match self {
            SupportDomain::RealLine => x.is_finite(),
            SupportDomain::NonNegativeReals => x.is_finite() && x >= 0.0,
            SupportDomain::UnitCircle => (0.0..TAU).contains(&x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub loc: f64,
    pub mass: f64,
}

/// Sampled density of the absolutely continuous part.
///
/// Values are read piecewise-linearly between grid points (that is what the
/// Cauchy kernels integrate); `weights` are the quadrature weights used by
/// `integrate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Density {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.grid.len()
    }
    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Piecewise-linear value at x (zero outside the grid).
    pub fn at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&t| t <= x).clamp(1, g.len() - 1);
        let (a, b) = (g[k - 1], g[k]);
        let s = if b > a { (x - a) / (b - a) } else { 0.0 };
        self.values[k - 1] + (self.values[k] - self.values[k - 1]) * s
    }

    fn mass(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

pub fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = 0.5 * (grid[k + 1] - grid[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

/// Chebyshev first-kind nodes on [a, b] with θ-midpoint (Fejér-type)
/// weights r·sinθ_k·π/n, bracketed by the two endpoints at weight zero.
/// Integrates densities with inverse-square-root edges spectrally.
pub fn chebyshev_grid(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let dth = PI / n as f64;
    let mut grid = Vec::with_capacity(n + 2);
    let mut weights = Vec::with_capacity(n + 2);
    grid.push(a);
    weights.push(0.0);
    for k in 0..n {
        let th = (k as f64 + 0.5) * dth;
        grid.push(c - r * th.cos());
        weights.push(r * th.sin() * dth);
    }
    grid.push(b);
    weights.push(0.0);
    (grid, weights)
}

#[derive(Debug, Clone)]
pub struct Measure {
    domain: SupportDomain,
    atoms: Vec<Atom>,
    density: Option<Density>,
    support: (f64, f64),
    line: Option<LineKernel>,
    circle: Option<CircleKernel>,
    // raw moments (real) or Fourier moments (circle), atoms included
    moments: Vec<C>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// JSON form of a measure.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<SupportDomain>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renormalize: bool,
}

impl MeasureSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("measure JSON: {e}")))
    }

    pub fn build(&self) -> Result<Measure> {
        if let Some(b) = &self.builtin {
            if !self.atoms.is_empty() || self.density.is_some() {
                return Err(Error::InvalidInput("builtin cannot be combined with atoms/density".into()));
            }
            let m = Measure::builtin(&b.name, &b.params)?;
            if let Some(d) = self.domain {
                if d != m.domain() {
                    return Err(Error::DomainViolation(format!("builtin `{}` lives on {:?}", b.name, m.domain())));
                }
            }
            return Ok(m);
        }
        let domain = self.domain.unwrap_or(SupportDomain::RealLine);
        match &self.density {
            Some(d) if d.weights.is_some() => {
                let w = d.weights.clone().unwrap_or_default();
                let (m, defect) = Measure::from_quadrature(domain, self.atoms.clone(), d.grid.clone(), d.values.clone(), w)?;
                if defect.abs() > MASS_TOL && !self.renormalize {
                    return Err(Error::Normalization { total: 1.0 + defect });
                }
                Ok(m)
            }
            Some(d) => Measure::new(domain, self.atoms.clone(), Some((d.grid.clone(), d.values.clone())), self.renormalize),
            None => Measure::new(domain, self.atoms.clone(), None, self.renormalize),
        }
    }
}

fn validate_atoms(domain: SupportDomain, atoms: &mut [Atom]) -> Result<()> {
    for a in atoms.iter() {
        if !(a.mass.is_finite() && a.mass > 0.0) {
            return Err(Error::InvalidInput(format!("atom mass {} must be positive", a.mass)));
        }
        if !domain.contains(a.loc) {
            return Err(Error::DomainViolation(format!("atom at {} outside {:?}", a.loc, domain)));
        }
    }
    atoms.sort_by(|a, b| a.loc.total_cmp(&b.loc));
    if atoms.windows(2).any(|w| w[0].loc == w[1].loc) {
        return Err(Error::InvalidInput("atom locations must be pairwise distinct".into()));
    }
    Ok(())
}

fn validate_density(domain: SupportDomain, grid: &[f64], values: &[f64], weights: &[f64]) -> Result<()> {
    if grid.len() != values.len() || grid.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "density grid {} / values {} / weights {}",
            grid.len(),
            values.len(),
            weights.len()
        )));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidInput("density grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("density grid must be strictly increasing".into()));
    }
    if values.iter().chain(weights).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput("density values and weights must be finite and nonnegative".into()));
    }
    let ok = match domain {
        SupportDomain::UnitCircle => grid[0] >= 0.0 && grid[grid.len() - 1] <= TAU,
        _ => grid.iter().all(|&t| domain.contains(t)),
    };
    if !ok {
        return Err(Error::DomainViolation(format!("density grid outside {:?}", domain)));
    }
    Ok(())
}

impl Measure {
    /// Build from user data: trapezoid weights, mass checked against 1.
    pub fn new(
        domain: SupportDomain,
        atoms: Vec<Atom>,
        density: Option<(Vec<f64>, Vec<f64>)>,
        renormalize: bool,
    ) -> Result<Measure> {
        let (grid, values) = density.unwrap_or_default();
        let weights = trapezoid_weights(&grid);
        if atoms.is_empty() && grid.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let (m, defect) = Self::from_quadrature(domain, atoms, grid, values, weights)?;
        if defect.abs() > MASS_TOL && !renormalize {
            return Err(Error::Normalization { total: 1.0 + defect });
        }
        Ok(m)
    }

    /// Build with explicit quadrature weights; always renormalizes and
    /// returns the defect (total − 1) found before renormalizing.
    pub fn from_quadrature(
        domain: SupportDomain,
        mut atoms: Vec<Atom>,
        grid: Vec<f64>,
        values: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<(Measure, f64)> {
        validate_atoms(domain, &mut atoms)?;
        let density = if grid.is_empty() {
            None
        } else {
            validate_density(domain, &grid, &values, &weights)?;
            Some(Density { grid, values, weights })
        };
        let total: f64 = atoms.iter().map(|a| a.mass).sum::<f64>() + density.as_ref().map_or(0.0, |d| d.mass());
        if !(total > 0.0) {
            return Err(Error::EmptyMeasure);
        }
        // leave exact inputs alone rather than perturb them by an ulp
        let total = if (total - 1.0).abs() <= 4.0 * f64::EPSILON { 1.0 } else { total };
        for a in atoms.iter_mut() {
            a.mass /= total;
        }
        let density = density.map(|mut d| {
            d.values.iter_mut().for_each(|v| *v /= total);
            d
        });
        Ok((Self::assemble(domain, atoms, density), total - 1.0))
    }

    fn assemble(domain: SupportDomain, atoms: Vec<Atom>, density: Option<Density>) -> Measure {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &atoms {
            lo = lo.min(a.loc);
            hi = hi.max(a.loc);
        }
        if let Some(d) = &density {
            let n = d.grid.len();
            let first = d.values.iter().position(|&v| v > 0.0);
            let last = d.values.iter().rposition(|&v| v > 0.0);
            if let (Some(f), Some(l)) = (first, last) {
                lo = lo.min(d.grid[f.saturating_sub(1)]);
                hi = hi.max(d.grid[(l + 1).min(n - 1)]);
            }
        }
        if domain.is_circle() {
            lo = 0.0;
            hi = TAU;
        }
        let cv = |d: &Density| d.values.iter().map(|&v| C::new(v, 0.0)).collect::<Vec<_>>();
        let (line, circle) = match (&density, domain) {
            (Some(d), SupportDomain::UnitCircle) => (None, Some(CircleKernel::new(&d.grid, &cv(d)))),
            (Some(d), _) => (Some(LineKernel::new(&d.grid, &cv(d))), None),
            (None, _) => (None, None),
        };
        let moments = if domain.is_circle() {
            let mut m = circle.as_ref().map_or(vec![C::new(0.0, 0.0); 9], |k| k.moments(8));
            for (n, mn) in m.iter_mut().enumerate() {
                for a in &atoms {
                    *mn += a.mass * C::from_polar(1.0, n as f64 * a.loc);
                }
            }
            m
        } else {
            let mut m = line
                .as_ref()
                .map_or(vec![C::new(0.0, 0.0); SERIES_TERMS + 1], |k| k.raw_moments(SERIES_TERMS));
            for (k, mk) in m.iter_mut().enumerate() {
                for a in &atoms {
                    mk.re += a.mass * a.loc.powi(k as i32);
                }
            }
            m
        };
        Measure { domain, atoms, density, support: (lo, hi), line, circle, moments }
    }

    pub fn point_mass(domain: SupportDomain, loc: f64) -> Result<Measure> {
        Self::new(domain, vec![Atom { loc, mass: 1.0 }], None, false)
    }

    /// Purely atomic measure from (location, mass) pairs.
    pub fn discrete(domain: SupportDomain, atoms: &[(f64, f64)]) -> Result<Measure> {
        Self::new(domain, atoms.iter().map(|&(loc, mass)| Atom { loc, mass }).collect(), None, false)
    }

    pub fn domain(&self) -> SupportDomain {
        self.domain
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// max |t| over the support (1 on the circle).
    pub fn radius(&self) -> f64 {
        if self.domain.is_circle() {
            1.0
        } else {
            self.support.0.abs().max(self.support.1.abs())
        }
    }

    pub fn atom_mass(&self, loc: f64, tol: f64) -> f64 {
        self.atoms.iter().filter(|a| (a.loc - loc).abs() <= tol).fold(0.0, |s, a| s + a.mass)
    }

    pub fn mass_at_zero(&self) -> f64 {
        self.atom_mass(0.0, 0.0)
    }

    /// Location of the single atom if this is a point mass.
    pub fn as_point_mass(&self) -> Option<f64> {
        let dens = self.density.as_ref().map_or(0.0, |d| d.mass());
        if self.atoms.len() == 1 && dens == 0.0 {
            Some(self.atoms[0].loc)
        } else {
            None
        }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.density.as_ref().map_or(0.0, |d| d.at(x))
    }

    /// Σ_atoms f(loc)·mass + Σ_k w_k v_k f(t_k).
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for a in &self.atoms {
            let v = f(a.loc);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { at: a.loc });
            }
            acc += v * a.mass;
        }
        if let Some(d) = &self.density {
            for ((&t, &v), &w) in d.grid.iter().zip(&d.values).zip(&d.weights) {
                if v == 0.0 || w == 0.0 {
                    continue;
                }
                let y = f(t);
                if !y.is_finite() {
                    return Err(Error::NonFiniteIntegrand { at: t });
                }
                acc += y * v * w;
            }
        }
        Ok(acc)
    }

    pub fn integrate_complex(&self, f: impl Fn(f64) -> C) -> Result<C> {
        let re = self.integrate(|t| f(t).re)?;
        let im = self.integrate(|t| f(t).im)?;
        Ok(C::new(re, im))
    }

    /// ∫ t^k dμ on the line; ∫ ζ^k dμ on the circle.
    pub fn moment(&self, k: usize) -> C {
        if self.domain.is_circle() {
            if k < self.moments.len() {
                return self.moments[k];
            }
            return self.integrate_complex(|th| C::from_polar(1.0, k as f64 * th)).unwrap_or_default();
        }
        C::new(self.integrate(|t| t.powi(k as i32)).unwrap_or(f64::NAN), 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.moment(1).re
    }

    pub fn variance(&self) -> f64 {
        let m1 = self.mean();
        self.integrate(|t| (t - m1) * (t - m1)).unwrap_or(f64::NAN)
    }

    pub(crate) fn series_moments(&self) -> &[C] {
        &self.moments
    }

    pub(crate) fn line_kernel(&self) -> Option<&LineKernel> {
        self.line.as_ref()
    }

    pub(crate) fn circle_kernel(&self) -> Option<&CircleKernel> {
        self.circle.as_ref()
    }

    /// Real z hits the support (atoms or positive density).
    pub(crate) fn touches(&self, x: f64) -> bool {
        self.atoms.iter().any(|a| a.loc == x) || self.line.as_ref().is_some_and(|k| k.covers(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc: f64 = self.atoms.iter().filter(|a| a.loc <= x).map(|a| a.mass).sum();
        if let Some(d) = &self.density {
            // exact for the piecewise-linear reading, rescaled to the quadrature mass
            let g = &d.grid;
            let v = &d.values;
            let mut pl = 0.0;
            let mut pl_total = 0.0;
            for k in 0..g.len() - 1 {
                let cell = 0.5 * (v[k] + v[k + 1]) * (g[k + 1] - g[k]);
                pl_total += cell;
                if g[k + 1] <= x {
                    pl += cell;
                } else if g[k] < x {
                    let h = g[k + 1] - g[k];
                    let s = x - g[k];
                    let vx = v[k] + (v[k + 1] - v[k]) * s / h;
                    pl += 0.5 * (v[k] + vx) * s;
                }
            }
            if pl_total > 0.0 {
                acc += pl / pl_total * d.mass();
            }
        }
        acc.min(1.0)
    }

    /// Generalized inverse of the cdf.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self.support;
        if self.domain.is_circle() {
            lo = 0.0;
            hi = TAU;
        }
        if p <= 0.0 {
            return lo;
        }
        if let Some(a) = self.atoms.iter().find(|a| {
            let before = self.cdf(a.loc) - a.mass;
            before < p && p <= before + a.mass + 1e-15
        }) {
            return a.loc;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Push-forward under t ↦ c·t (c > 0) or t ↦ t + c, angle ↦ angle + c.
    fn mapped(&self, map: impl Fn(f64) -> f64, jac: f64, domain: SupportDomain) -> Result<Measure> {
        let wrap = |x: f64| if domain.is_circle() { x.rem_euclid(TAU) } else { x };
        let atoms: Vec<Atom> = self.atoms.iter().map(|a| Atom { loc: wrap(map(a.loc)), mass: a.mass }).collect();
        match &self.density {
            None => Ok(Self::from_quadrature(domain, atoms, vec![], vec![], vec![])?.0),
            Some(d) if domain.is_circle() => {
                // rotate by resampling on the same angular grid
                let shift = map(0.0);
                let values: Vec<f64> = d.grid.iter().map(|&t| d.at((t - shift).rem_euclid(TAU))).collect();
                Ok(Self::from_quadrature(domain, atoms, d.grid.clone(), values, d.weights.clone())?.0)
            }
            Some(d) => {
                let grid: Vec<f64> = d.grid.iter().map(|&t| map(t)).collect();
                let values: Vec<f64> = d.values.iter().map(|v| v / jac).collect();
                let weights: Vec<f64> = d.weights.iter().map(|w| w * jac).collect();
                Ok(Self::from_quadrature(domain, atoms, grid, values, weights)?.0)
            }
        }
    }

    pub fn translate(&self, c: f64) -> Result<Measure> {
        if self.domain != SupportDomain::RealLine {
            return Err(Error::DomainViolation("translation needs a real-line measure".into()));
        }
        self.mapped(|t| t + c, 1.0, self.domain)
    }

    pub fn dilate(&self, c: f64) -> Result<Measure> {
        if !(c > 0.0) {
            return Err(Error::InvalidInput("dilation factor must be positive".into()));
        }
        self.mapped(|t| c * t, c, self.domain)
    }

    pub fn rotate(&self, angle: f64) -> Result<Measure> {
        if !self.domain.is_circle() {
            return Err(Error::DomainViolation("rotation needs a circle measure".into()));
        }
        self.mapped(|t| t + angle, 1.0, self.domain)
    }

    pub fn ac_mass(&self) -> f64 {
        self.density.as_ref().map_or(0.0, |d| d.mass())
    }

    /// Total order used to canonicalize pairs.
    pub(crate) fn canonical_cmp(&self, other: &Measure) -> Ordering {
        let key = |m: &Measure| {
            let mut v: Vec<f64> = Vec::new();
            v.push(m.atoms.len() as f64);
            for a in &m.atoms {
                v.push(a.loc);
                v.push(a.mass);
            }
            if let Some(d) = &m.density {
                v.push(d.grid.len() as f64);
                v.extend(&d.grid);
                v.extend(&d.values);
            }
            v
        };
        let (a, b) = (key(self), key(other));
        for (x, y) in a.iter().zip(&b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        a.len().cmp(&b.len())
    }

    pub fn to_spec(&self) -> MeasureSpec {
        MeasureSpec {
            domain: Some(self.domain),
            atoms: self.atoms.clone(),
            density: self.density.as_ref().map(|d| DensitySpec {
                grid: d.grid.clone(),
                values: d.values.clone(),
                weights: Some(d.weights.clone()),
            }),
            builtin: None,
            renormalize: false,
        }
    }

    // ---- builtins ----

    pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Measure> {
        let n = match params.get("n") {
            Some(&n) if n >= 16.0 && n.fract() == 0.0 => n as usize,
            Some(&n) => return Err(Error::InvalidInput(format!("grid size {n} must be an integer ≥ 16"))),
            None => DEFAULT_GRID,
        };
        let get = |k: &str, default: Option<f64>| -> Result<f64> {
            params
                .get(k)
                .copied()
                .or(default)
                .ok_or_else(|| Error::InvalidInput(format!("builtin `{name}` needs parameter `{k}`")))
        };
        match name {
            "semicircle" => Self::semicircle_with(get("var", Some(1.0))?, get("center", Some(0.0))?, n),
            "free_poisson" | "marchenko_pastur" => Self::free_poisson_with(get("lambda", None)?, n),
            "arcsine" => Self::arcsine_with(n),
            "haar" => Self::haar_with(n),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn semicircle(var: f64) -> Result<Measure> {
        Self::semicircle_with(var, 0.0, DEFAULT_GRID)
    }

    pub fn semicircle_with(var: f64, center: f64, n: usize) -> Result<Measure> {
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::InvalidInput("semicircle variance must be positive".into()));
        }
        let r = 2.0 * var.sqrt();
        let rho = move |t: f64| {
            let x = t - center;
            (r * r - x * x).max(0.0).sqrt() / (2.0 * PI * var)
        };
        sampled(SupportDomain::RealLine, vec![], center - r, center + r, n, rho, (false, false))
    }

    pub fn free_poisson(lambda: f64) -> Result<Measure> {
        Self::free_poisson_with(lambda, DEFAULT_GRID)
    }

    pub fn free_poisson_with(lambda: f64, n: usize) -> Result<Measure> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput("free Poisson rate must be positive".into()));
        }
        let a = (1.0 - lambda.sqrt()).powi(2);
        let b = (1.0 + lambda.sqrt()).powi(2);
        let rho = move |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            ((b - t) * (t - a)).max(0.0).sqrt() / (2.0 * PI * t)
        };
        let atoms = if lambda < 1.0 { vec![Atom { loc: 0.0, mass: 1.0 - lambda }] } else { vec![] };
        // λ = 1 puts a 1/√t singularity at the left edge
        sampled(SupportDomain::NonNegativeReals, atoms, a, b, n, rho, (lambda == 1.0, false))
    }

    pub fn arcsine() -> Result<Measure> {
        Self::arcsine_with(DEFAULT_GRID)
    }

    pub fn arcsine_with(n: usize) -> Result<Measure> {
        let rho = |t: f64| {
            if t <= 0.0 || t >= 4.0 {
                return 0.0;
            }
            1.0 / (PI * (t * (4.0 - t)).sqrt())
        };
        sampled(SupportDomain::NonNegativeReals, vec![], 0.0, 4.0, n, rho, (true, true))
    }

    pub fn haar() -> Result<Measure> {
        Self::haar_with(DEFAULT_GRID)
    }

    pub fn haar_with(n: usize) -> Result<Measure> {
        let grid: Vec<f64> = (0..n).map(|k| TAU * k as f64 / (n - 1) as f64).collect();
        let values = vec![1.0 / TAU; n];
        let weights = trapezoid_weights(&grid);
        Ok(Self::from_quadrature(SupportDomain::UnitCircle, vec![], grid, values, weights)?.0)
    }
}

/// ∫_a^b ρ for ρ with an inverse square-root singularity at `a` (or `b` if
/// `right`), via t = a + u² and composite Gauss–Legendre in u.
fn singular_mass(rho: &dyn Fn(f64) -> f64, a: f64, b: f64, right: bool) -> f64 {
    let (gx, gw) = gl16();
    let s = (b - a).sqrt();
    let panels = 64;
    let hp = s / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        for (x, w) in gx.iter().zip(gw) {
            let u = hp * (p as f64 + 0.5 * (x + 1.0));
            let t = if right { b - u * u } else { a + u * u };
            acc += 0.5 * hp * w * 2.0 * u * rho(t);
        }
    }
    acc
}

/// Chebyshev-clustered sampling of a closed-form density on [a, b].
///
/// At an inverse-square-root edge the trapezoid rule on this grid loses
/// O(1/n) of mass in the first few cells; the exact mass of that half of
/// the support is restored through the (otherwise infinite) edge value.
fn sampled(
    domain: SupportDomain,
    atoms: Vec<Atom>,
    a: f64,
    b: f64,
    n: usize,
    rho: impl Fn(f64) -> f64,
    singular: (bool, bool),
) -> Result<Measure> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut grid: Vec<f64> = (0..n).map(|k| c - r * (PI * k as f64 / (n - 1) as f64).cos()).collect();
    grid[0] = a;
    grid[n - 1] = b;
    let mut values: Vec<f64> = grid.iter().map(|&t| rho(t)).collect();
    values[0] = 0.0;
    values[n - 1] = 0.0;
    let half = n / 2;
    if singular.0 {
        let exact = singular_mass(&rho, grid[0], grid[half], false);
        let mut trap = 0.0;
        for k in 1..half {
            trap += 0.5 * (values[k] + values[k + 1]) * (grid[k + 1] - grid[k]);
        }
        let h0 = grid[1] - grid[0];
        values[0] = (2.0 * (exact - trap) / h0 - values[1]).max(0.0);
    }
    if singular.1 {
        let exact = singular_mass(&rho, grid[half], grid[n - 1], true);
        let mut trap = 0.0;
        for k in half..n - 2 {
            trap += 0.5 * (values[k] + values[k + 1]) * (grid[k + 1] - grid[k]);
        }
        let h0 = grid[n - 1] - grid[n - 2];
        values[n - 1] = (2.0 * (exact - trap) / h0 - values[n - 2]).max(0.0);
    }
    let weights = trapezoid_weights(&grid);
    // the closed form fixes the continuous mass exactly; absorb what is left there
    let target = 1.0 - atoms.iter().map(|a| a.mass).sum::<f64>();
    let got: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    values.iter_mut().for_each(|v| *v *= target / got);
    Ok(Measure::from_quadrature(domain, atoms, grid, values, weights)?.0)
}
