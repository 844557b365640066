//! Analytic transforms G, ψ, η, F, H and their inversion.

use crate::error::{Error, Result};
use crate::kernel::{CircleKernel, LineKernel};
use crate::measure::{trapezoid_weights, Atom, Measure, SupportDomain};
use num_complex::Complex64 as C;
use std::f64::consts::{PI, TAU};

/// Relative default for the boundary offset ε (times max(1, support radius)).
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Cauchy,
    Moment,
    BooleanCumulant,
    Reciprocal,
    Hilbert,
}

/// G and G' without any support check.
pub(crate) fn g_eval(m: &Measure, z: C) -> (C, C) {
    let mut g = C::new(0.0, 0.0);
    let mut gp = C::new(0.0, 0.0);
    for a in m.atoms() {
        let inv = (z - a.loc).inv();
        g += a.mass * inv;
        gp -= a.mass * inv * inv;
    }
    if let Some(k) = m.line_kernel() {
        let (kg, kgp) = k.eval(z);
        g += kg;
        gp += kgp;
    }
    (g, gp)
}

fn check_pole(m: &Measure, z: C) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite evaluation point {z}")));
    }
    if z.im == 0.0 && m.touches(z.re) {
        return Err(Error::PoleOnSupport { re: z.re, im: z.im });
    }
    Ok(())
}

/// ψ and pieces used by the multiplicative iterations:
/// ψ(w), ψ'(w), ψ(w)/w and its derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PsiParts {
    pub psi: C,
    pub dpsi: C,
    pub pw: C,
    pub dpw: C,
}

fn series(coef: &[C], w: C) -> PsiParts {
    // ψ = Σ_{k≥1} c_k w^k
    let n = coef.len();
    let mut pw = C::new(0.0, 0.0);
    let mut dpw = C::new(0.0, 0.0);
    for k in (1..n).rev() {
        pw = pw * w + coef[k];
    }
    for k in (2..n).rev() {
        dpw = dpw * w + coef[k] * (k as f64 - 1.0);
    }
    let psi = pw * w;
    let mut dpsi = C::new(0.0, 0.0);
    for k in (1..n).rev() {
        dpsi = dpsi * w + coef[k] * k as f64;
    }
    PsiParts { psi, dpsi, pw, dpw }
}

fn from_psi(psi: C, dpsi: C, w: C) -> PsiParts {
    let v = w.inv();
    PsiParts { psi, dpsi, pw: psi * v, dpw: dpsi * v - psi * v * v }
}

pub(crate) fn psi_parts(m: &Measure, w: C) -> PsiParts {
    if m.domain().is_circle() {
        return circle_psi_parts(m, w);
    }
    if w.norm() * m.radius() < 0.05 {
        return series(m.series_moments(), w);
    }
    let v = w.inv();
    let (g, gp) = g_eval(m, v);
    let psi = v * g - 1.0;
    let dpsi = -(g + v * gp) * v * v;
    from_psi(psi, dpsi, w)
}

fn circle_psi_inside(m: &Measure, w: C) -> (C, C) {
    let mut psi = C::new(0.0, 0.0);
    let mut dpsi = C::new(0.0, 0.0);
    for a in m.atoms() {
        let z = C::from_polar(1.0, a.loc);
        let q = (C::new(1.0, 0.0) - w * z).inv();
        psi += a.mass * w * z * q;
        dpsi += a.mass * z * q * q;
    }
    if let Some(k) = m.circle_kernel() {
        let (p, dp) = k.eval(w);
        psi += p;
        dpsi += dp;
    }
    (psi, dpsi)
}

fn circle_psi_parts(m: &Measure, w: C) -> PsiParts {
    let r = w.norm();
    if r < 1e-3 {
        return series(m.series_moments(), w);
    }
    if r <= 1.0 {
        let (psi, dpsi) = circle_psi_inside(m, w);
        return from_psi(psi, dpsi, w);
    }
    // ψ(w) = −1 − conj ψ(1/w̄)
    let u = w.inv().conj();
    let (p, dp) = circle_psi_inside(m, u);
    let psi = -1.0 - p.conj();
    let dpsi = dp.conj() / (w * w);
    from_psi(psi, dpsi, w)
}

pub fn cauchy(m: &Measure, z: C) -> Result<C> {
    Ok(cauchy_with_derivative(m, z)?.0)
}

pub fn cauchy_with_derivative(m: &Measure, z: C) -> Result<(C, C)> {
    if m.domain().is_circle() {
        if z.norm() == 1.0 && m.atoms().iter().any(|a| (C::from_polar(1.0, a.loc) - z).norm() == 0.0) {
            return Err(Error::PoleOnSupport { re: z.re, im: z.im });
        }
        // G(z) = (ψ(1/z) + 1)/z
        let w = z.inv();
        let p = circle_psi_parts(m, w);
        let g = (p.psi + 1.0) * w;
        let gp = -(p.psi + 1.0) * w * w - p.dpsi * w * w * w;
        return Ok((g, gp));
    }
    check_pole(m, z)?;
    Ok(g_eval(m, z))
}

pub fn reciprocal_cauchy(m: &Measure, z: C) -> Result<C> {
    Ok(cauchy(m, z)?.inv())
}

pub fn psi(m: &Measure, z: C) -> Result<C> {
    if z == C::new(0.0, 0.0) {
        return Ok(z);
    }
    if m.domain().is_circle() {
        if z.norm() == 1.0 {
            check_circle_pole(m, z)?;
        }
    } else {
        check_pole(m, z.inv())?;
    }
    Ok(psi_parts(m, z).psi)
}

fn check_circle_pole(m: &Measure, z: C) -> Result<()> {
    // 1/z on the unit circle hits the support
    let th = (-z.arg()).rem_euclid(TAU);
    let hit = m.atoms().iter().any(|a| a.loc == th) || m.density_at(th) > 0.0;
    if hit {
        return Err(Error::PoleOnSupport { re: z.re, im: z.im });
    }
    Ok(())
}

pub fn eta(m: &Measure, z: C) -> Result<C> {
    let p = psi(m, z)?;
    Ok(p / (p + 1.0))
}

/// (1/π)·Re G(t+i0), Richardson-extrapolated from ε and ε/2.
pub fn hilbert(m: &Measure, t: f64, eps: f64) -> f64 {
    let g1 = g_eval(m, C::new(t, eps)).0.re;
    let g2 = g_eval(m, C::new(t, 0.5 * eps)).0.re;
    (2.0 * g2 - g1) / PI
}

/// Evaluate one transform at each point of a grid.
pub fn evaluate(m: &Measure, kind: TransformKind, z: C) -> Result<C> {
    match kind {
        TransformKind::Cauchy => cauchy(m, z),
        TransformKind::Moment => psi(m, z),
        TransformKind::BooleanCumulant => eta(m, z),
        TransformKind::Reciprocal => reciprocal_cauchy(m, z),
        TransformKind::Hilbert => Ok(C::new(hilbert(m, z.re, z.im.abs().max(f64::MIN_POSITIVE)), 0.0)),
    }
}

/// ∫ f(s)·(kernel) dμ(s) for a (possibly complex) weight f, by product
/// integration of the piecewise-linear f·density.
#[derive(Debug, Clone)]
pub struct WeightedMeasure {
    domain: SupportDomain,
    atoms: Vec<(f64, C)>,
    line: Option<LineKernel>,
    circle: Option<CircleKernel>,
    total: C,
}

impl WeightedMeasure {
    pub fn new(m: &Measure, f: impl Fn(f64) -> C) -> Self {
        let atoms: Vec<(f64, C)> = m.atoms().iter().map(|a| (a.loc, a.mass * f(a.loc))).collect();
        let mut total: C = atoms.iter().map(|a| a.1).sum();
        let (mut line, mut circle) = (None, None);
        if let Some(d) = m.density() {
            let fv: Vec<C> = d.grid().iter().map(|&t| f(t)).collect();
            total += fv.iter().zip(d.values()).zip(d.weights()).map(|((f, v), w)| f * (v * w)).sum::<C>();
            if m.domain().is_circle() {
                let v: Vec<C> = fv.iter().zip(d.values()).map(|(f, &x)| f * x).collect();
                circle = Some(CircleKernel::new(d.grid(), &v));
            } else {
                line = Some(LineKernel::product(d.grid(), &fv, d.values()));
            }
        }
        WeightedMeasure { domain: m.domain(), atoms, line, circle, total }
    }

    /// ∫ f dμ (quadrature weights).
    pub fn total(&self) -> C {
        self.total
    }

    /// ∫ f(s)/(z−s) dμ(s).
    pub fn cauchy(&self, z: C) -> C {
        let mut g: C = self.atoms.iter().map(|&(s, w)| w / (z - s)).sum();
        if let Some(k) = &self.line {
            g += k.eval(z).0;
        }
        g
    }

    /// ∫ f(ζ) wζ/(1−wζ) dμ(ζ) on the circle, |w| < 1.
    pub fn circle_psi(&self, w: C) -> C {
        debug_assert!(self.domain.is_circle());
        let mut p: C = self
            .atoms
            .iter()
            .map(|&(th, m)| {
                let z = C::from_polar(1.0, th);
                m * w * z / (1.0 - w * z)
            })
            .sum();
        if let Some(k) = &self.circle {
            p += k.eval(w).0;
        }
        p
    }
}

/// Boundary samples of a Cauchy transform at two offsets ε and ε/2.
#[derive(Debug, Clone)]
pub struct BoundarySamples {
    pub t: Vec<f64>,
    pub eps: f64,
    /// G(t+iε) and G(t+iε/2).
    pub g: [Vec<C>; 2],
    /// quadrature weights on `t`; trapezoid if absent
    pub weights: Option<Vec<f64>>,
}

impl BoundarySamples {
    pub fn from_measure(m: &Measure, t: Vec<f64>, eps: f64) -> Self {
        let g0 = t.iter().map(|&x| g_eval(m, C::new(x, eps)).0).collect();
        let g1 = t.iter().map(|&x| g_eval(m, C::new(x, 0.5 * eps)).0).collect();
        BoundarySamples { t, eps, g: [g0, g1], weights: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InversionOptions {
    pub atol_atom: f64,
    pub max_defect: f64,
    pub domain: SupportDomain,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions { atol_atom: 1e-3, max_defect: 0.02, domain: SupportDomain::RealLine }
    }
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub measure: Measure,
    /// total − 1 before renormalization
    pub defect: f64,
}

pub(crate) fn extrapolate(coarse: f64, fine: f64) -> f64 {
    2.0 * fine - coarse
}

pub(crate) fn extrapolate_c(coarse: C, fine: C) -> C {
    fine * 2.0 - coarse
}

/// Recover atoms and density from boundary values of G.
pub fn stieltjes_invert(s: &BoundarySamples, opts: &InversionOptions) -> Result<Inversion> {
    let n = s.t.len();
    if n < 2 || s.g[0].len() != n || s.g[1].len() != n {
        return Err(Error::DimensionMismatch("boundary samples".into()));
    }
    let eps = [s.eps, 0.5 * s.eps];
    let res: Vec<[f64; 2]> = (0..n).map(|k| [-eps[0] * s.g[0][k].im, -eps[1] * s.g[1][k].im]).collect();
    let mut atoms = Vec::new();
    for k in 0..n {
        let r = res[k];
        if r[1] <= opts.atol_atom || (r[1] - r[0]).abs() > 0.2 * r[1] {
            continue;
        }
        let left = if k > 0 { res[k - 1][1] } else { f64::NEG_INFINITY };
        let right = if k + 1 < n { res[k + 1][1] } else { f64::NEG_INFINITY };
        if r[1] >= left && r[1] >= right {
            atoms.push(Atom { loc: s.t[k], mass: extrapolate(r[0], r[1]).max(0.0) });
        }
    }
    let values: Vec<f64> = (0..n)
        .map(|k| {
            let mut im = [s.g[0][k].im, s.g[1][k].im];
            for (l, e) in eps.iter().enumerate() {
                for a in &atoms {
                    im[l] -= (a.mass / C::new(s.t[k] - a.loc, *e)).im;
                }
            }
            (-extrapolate(im[0], im[1]) / PI).max(0.0)
        })
        .collect();
    let weights = s.weights.clone().unwrap_or_else(|| trapezoid_weights(&s.t));
    let (measure, defect) = Measure::from_quadrature(opts.domain, atoms, s.t.clone(), values, weights)?;
    if defect.abs() > opts.max_defect {
        return Err(Error::MassDefect { defect });
    }
    if defect.abs() > 1e-6 {
        log::info!("stieltjes inversion renormalized (defect {defect:e})");
    }
    Ok(Inversion { measure, defect })
}

/// Boundary samples of ψ on the circle at radii 1−ε and 1−ε/2, taken at
/// z = r·e^{−iθ}.
#[derive(Debug, Clone)]
pub struct CircleSamples {
    pub theta: Vec<f64>,
    pub eps: f64,
    pub psi: [Vec<C>; 2],
}

impl CircleSamples {
    pub fn from_measure(m: &Measure, theta: Vec<f64>, eps: f64) -> Self {
        let at = |r: f64| theta.iter().map(|&th| psi_parts(m, C::from_polar(r, -th)).psi).collect();
        let p0 = at(1.0 - eps);
        let p1 = at(1.0 - 0.5 * eps);
        CircleSamples { theta, eps, psi: [p0, p1] }
    }
}

/// Poisson-kernel retrieval of a circle measure on a uniform periodic grid
/// θ_k = 2πk/n (the endpoint 2π is appended).
pub fn poisson_invert(s: &CircleSamples, opts: &InversionOptions) -> Result<Inversion> {
    let n = s.theta.len();
    let eps = [s.eps, 0.5 * s.eps];
    let p: Vec<[f64; 2]> = (0..n).map(|k| [2.0 * s.psi[0][k].re + 1.0, 2.0 * s.psi[1][k].re + 1.0]).collect();
    let mut atoms = Vec::new();
    for k in 0..n {
        let r = [p[k][0] * eps[0] / (2.0 - eps[0]), p[k][1] * eps[1] / (2.0 - eps[1])];
        if r[1] <= opts.atol_atom || (r[1] - r[0]).abs() > 0.2 * r[1] {
            continue;
        }
        let l = p[(k + n - 1) % n][1];
        let rr = p[(k + 1) % n][1];
        if p[k][1] >= l && p[k][1] >= rr {
            atoms.push(Atom { loc: s.theta[k], mass: extrapolate(r[0], r[1]).max(0.0) });
        }
    }
    let mut values: Vec<f64> = (0..n)
        .map(|k| {
            let mut v = p[k];
            for (l, e) in eps.iter().enumerate() {
                let z = C::from_polar(1.0 - e, -s.theta[k]);
                for a in &atoms {
                    let g = C::from_polar(1.0, a.loc);
                    v[l] -= 2.0 * (a.mass * z * g / (1.0 - z * g)).re + a.mass;
                }
            }
            (extrapolate(v[0], v[1]) / TAU).max(0.0)
        })
        .collect();
    let mut grid = s.theta.clone();
    grid.push(TAU);
    values.push(values[0]);
    let weights = trapezoid_weights(&grid);
    let (measure, defect) = Measure::from_quadrature(SupportDomain::UnitCircle, atoms, grid, values, weights)?;
    if defect.abs() > opts.max_defect {
        return Err(Error::MassDefect { defect });
    }
    Ok(Inversion { measure, defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn semicircle_g(z: C, v: f64) -> C {
        let r = 2.0 * v.sqrt();
        (z - (z - r).sqrt() * (z + r).sqrt()) / (2.0 * v)
    }

    #[test]
    fn cauchy_examples() {
        let d0 = Measure::point_mass(SupportDomain::RealLine, 0.0).unwrap();
        assert!((cauchy(&d0, c(0.0, 1.0)).unwrap() - c(0.0, -1.0)).norm() < 1e-15);
        let pm = Measure::discrete(SupportDomain::RealLine, &[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((cauchy(&pm, c(2.0, 0.0)).unwrap() - c(2.0 / 3.0, 0.0)).norm() < 1e-15);
        let sc = Measure::semicircle(1.0).unwrap();
        let g = cauchy(&sc, c(0.0, 2.0)).unwrap();
        assert!((g - c(0.0, 1.0 - 2f64.sqrt())).norm() < 1e-6, "{g}");
        assert!(matches!(cauchy(&pm, c(1.0, 0.0)), Err(Error::PoleOnSupport { .. })));
        assert!(matches!(cauchy(&sc, c(0.3, 0.0)), Err(Error::PoleOnSupport { .. })));
        assert!(cauchy(&sc, c(3.0, 0.0)).is_ok());
    }

    #[test]
    fn semicircle_cauchy_near_axis() {
        let sc = Measure::semicircle(1.0).unwrap();
        for &t in &[-1.9, -1.0, 0.0, 0.7, 1.5, 2.5] {
            let z = c(t, 1e-7);
            let g = g_eval(&sc, z).0;
            let e = semicircle_g(z, 1.0);
            assert!((g - e).norm() < 2e-6, "t={t} {g} {e}");
        }
    }

    #[test]
    fn psi_eta_examples() {
        let d1 = Measure::point_mass(SupportDomain::NonNegativeReals, 1.0).unwrap();
        assert!((psi(&d1, c(0.5, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        assert!((eta(&d1, c(0.5, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-14);
        let fp = Measure::free_poisson(1.0).unwrap();
        assert_eq!(psi(&fp, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        let p = psi(&fp, c(-1.0, 0.0)).unwrap();
        // quadrature oracle of ∫ zt/(1−zt) with the closed-form density, t = 4 sin²(u/2)... use u-substitution t = 4 sin²φ
        let n = 20000;
        let mut q = 0.0;
        for k in 0..n {
            let ph = (k as f64 + 0.5) * (PI / 2.0) / n as f64;
            let t = 4.0 * ph.sin().powi(2);
            // density √(4−t)/(2π√t), dt = 8 sinφ cosφ dφ → (2cosφ/(2π·2sinφ))·8 sinφ cosφ = (4/π)cos²φ
            let dens = 4.0 / PI * ph.cos().powi(2) * (PI / 2.0) / n as f64;
            q += -t / (1.0 + t) * dens;
        }
        assert!(p.re > -1.0 && p.re < 0.0);
        assert!((p.re - q).abs() < 1e-6, "{p} {q}");
    }

    #[test]
    fn psi_series_and_direct_agree() {
        let fp = Measure::free_poisson(2.0).unwrap();
        let r = fp.radius();
        for &s in &[0.04, 0.06] {
            let w = c(0.3, 0.8) * (s / r);
            let a = series(fp.series_moments(), w);
            let v = w.inv();
            let (g, _) = g_eval(&fp, v);
            let direct = v * g - 1.0;
            assert!((a.psi - direct).norm() < 1e-12 * direct.norm().max(1e-300) + 1e-15, "{} {}", a.psi, direct);
        }
    }

    #[test]
    fn hilbert_examples() {
        let sc = Measure::semicircle(2.0).unwrap();
        for &t in &[-2.0, -0.5, 0.3, 1.9] {
            let h = hilbert(&sc, t, 1e-6);
            assert!((h - t / (2.0 * PI * 2.0)).abs() < 1e-4, "t={t} {h}");
        }
        let pm = Measure::discrete(SupportDomain::RealLine, &[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!(hilbert(&pm, 0.0, 1e-6).abs() < 1e-12);
        let a = Measure::arcsine().unwrap();
        assert!(hilbert(&a, 2.0, 1e-6).abs() < 1e-6);
    }

    #[test]
    fn conjugate_symmetry_and_decay() {
        for m in [Measure::semicircle(1.0).unwrap(), Measure::free_poisson(0.5).unwrap(), Measure::arcsine().unwrap()] {
            for z in [c(0.3, 0.2), c(-1.0, 2.0), c(5.0, 0.01)] {
                let a = cauchy(&m, z).unwrap();
                let b = cauchy(&m, z.conj()).unwrap();
                assert!((a.conj() - b).norm() < 1e-13);
                assert!(a.im < 0.0);
            }
            let y = 1e3 * m.radius().max(1.0);
            let zg = c(0.0, y) * cauchy(&m, c(0.0, y)).unwrap();
            assert!((zg - 1.0).norm() < 1e-3);
        }
    }

    #[test]
    fn circle_transforms() {
        let h = Measure::haar().unwrap();
        assert!(psi(&h, c(0.3, 0.4)).unwrap().norm() < 1e-12);
        let m = Measure::discrete(SupportDomain::UnitCircle, &[(0.0, 0.5), (PI, 0.5)]).unwrap();
        let z = c(0.5, 0.0);
        // ψ = ½·z/(1−z) + ½·(−z)/(1+z) = z²/(1−z²)
        assert!((psi(&m, z).unwrap() - z * z / (1.0 - z * z)).norm() < 1e-14);
        assert!(eta(&m, c(0.6, 0.3)).unwrap().norm() < 1.0);
        // reflection branch
        let w = c(1.5, 0.7);
        let direct = z * 0.0 + (w * w) / (1.0 - w * w);
        assert!((psi(&m, w).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn round_trip_builtins() {
        let cases: Vec<(Measure, Box<dyn Fn(f64) -> f64>)> = vec![
            (Measure::semicircle(1.0).unwrap(), Box::new(|t: f64| (4.0 - t * t).max(0.0).sqrt() / (2.0 * PI))),
            (
                Measure::free_poisson(0.5).unwrap(),
                Box::new(|t: f64| {
                    let (a, b) = ((1.0 - 0.5f64.sqrt()).powi(2), (1.0 + 0.5f64.sqrt()).powi(2));
                    if t <= 0.0 {
                        0.0
                    } else {
                        ((b - t) * (t - a)).max(0.0).sqrt() / (2.0 * PI * t)
                    }
                }),
            ),
        ];
        for (m, rho) in cases {
            let (lo, hi) = m.support();
            let h = (hi - lo) / 800.0;
            let t: Vec<f64> = (0..841).map(|k| lo + (k as f64 - 20.0) * h).collect();
            let s = BoundarySamples::from_measure(&m, t.clone(), 1e-6 * m.radius());
            let inv = stieltjes_invert(&s, &InversionOptions::default()).unwrap();
            for &x in &t {
                if x - lo > 0.05 && hi - x > 0.05 && !m.atoms().iter().any(|a| (a.loc - x).abs() < 1e-9) {
                    assert!((inv.measure.density_at(x) - rho(x)).abs() < 5e-3, "x={x}");
                }
            }
            for a in m.atoms() {
                assert!((inv.measure.atom_mass(a.loc, 1e-9) - a.mass).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn two_point_inversion_finds_atoms() {
        let m = Measure::discrete(SupportDomain::RealLine, &[(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let t: Vec<f64> = (0..=400).map(|k| -1.0 + 4.0 * k as f64 / 400.0).collect();
        let s = BoundarySamples::from_measure(&m, t, 1e-3);
        let inv = stieltjes_invert(&s, &InversionOptions::default()).unwrap();
        assert_eq!(inv.measure.atoms().len(), 2);
        for a in inv.measure.atoms() {
            assert!((a.mass - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn arcsine_inversion_l1() {
        let m = Measure::arcsine().unwrap();
        let (t, w) = crate::measure::chebyshev_grid(0.0, 4.0, 4000);
        let n = t.len();
        let mut s = BoundarySamples::from_measure(&m, t.clone(), 1e-6);
        s.weights = Some(w);
        let inv = stieltjes_invert(&s, &InversionOptions::default()).unwrap();
        let mut l1 = 0.0;
        for k in 0..n - 1 {
            let x = 0.5 * (t[k] + t[k + 1]);
            let exact = 1.0 / (PI * (x * (4.0 - x)).sqrt());
            l1 += (inv.measure.density_at(x) - exact).abs() * (t[k + 1] - t[k]);
        }
        assert!(l1 < 1e-2, "L1 {l1}");
    }

    #[test]
    fn haar_poisson_inversion() {
        let h = Measure::haar().unwrap();
        let n = 256;
        let th: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
        let s = CircleSamples::from_measure(&h, th, 1e-6);
        let inv = poisson_invert(&s, &InversionOptions::default()).unwrap();
        assert!(inv.measure.atoms().is_empty());
        for &v in inv.measure.density().unwrap().values() {
            assert!((v - 1.0 / TAU).abs() < 1e-9);
        }
        let m = Measure::discrete(SupportDomain::UnitCircle, &[(0.0, 0.25), (PI, 0.75)]).unwrap();
        let th: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
        let s = CircleSamples::from_measure(&m, th, 1e-6);
        let inv = poisson_invert(&s, &InversionOptions::default()).unwrap();
        assert_eq!(inv.measure.atoms().len(), 2);
        assert!((inv.measure.atom_mass(PI, 1e-12) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn weighted_measure_matches_direct_sum() {
        let m = Measure::semicircle(1.0).unwrap();
        let w = WeightedMeasure::new(&m, |s| C::new(s, 0.0));
        let z = c(0.4, 0.3);
        // ∫ s/(z−s) dμ = zG − 1
        let g = g_eval(&m, z).0;
        assert!((w.cauchy(z) - (z * g - 1.0)).norm() < 1e-12, "{}", (w.cauchy(z) - (z * g - 1.0)).norm());
        assert!(w.total().norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn g_maps_upper_half_plane_down(x in -5.0f64..5.0, y in 1e-6f64..10.0, a in 0.05f64..0.95, loc in -3.0f64..3.0) {
            let m = Measure::discrete(SupportDomain::RealLine, &[(loc, a), (loc + 1.0, 1.0 - a)]).unwrap();
            let g = cauchy(&m, c(x, y)).unwrap();
            prop_assert!(g.im < 0.0);
            let g2 = cauchy(&m, c(x, -y)).unwrap();
            prop_assert!((g.conj() - g2).norm() <= 1e-12 * g.norm());
        }

        #[test]
        fn eta_is_psi_over_one_plus_psi(x in -3.0f64..3.0, y in 0.01f64..3.0) {
            let m = Measure::free_poisson(2.0).unwrap();
            let z = c(x, y);
            let p = psi(&m, z).unwrap();
            let e = eta(&m, z).unwrap();
            prop_assert!((e - p / (p + 1.0)).norm() < 1e-12 * (1.0 + e.norm()));
        }

        #[test]
        fn circle_eta_maps_disk_into_disk(r in 0.0f64..0.999, th in 0.0f64..TAU, a in 0.05f64..0.95) {
            let m = Measure::discrete(SupportDomain::UnitCircle, &[(0.3, a), (2.0, 1.0 - a)]).unwrap();
            let e = eta(&m, C::from_polar(r, th)).unwrap();
            prop_assert!(e.norm() < 1.0);
        }
    }
}
