//! Free convolutions μ⊞ν, μ⊠ν on ℝ₊ and μ⊠ν on the circle as `Measure`s.
//!
//! Line cases: locate the support on a coarse scan, refine its edges by
//! bisection at a tiny offset, then evaluate the subordinated transform on
//! Chebyshev nodes per support component. Atoms sit where the pairing
//! criterion puts them; their masses are read off residues.

use crate::error::{Error, Result};
use crate::measure::{chebyshev_grid, trapezoid_weights, Atom, Measure, SupportDomain};
use crate::subordination::{atom_pairs, boundary, SolverConfig, SubordinationKind, SubordinationResult};
use crate::transforms::{extrapolate, extrapolate_c};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionConfig {
    pub solver: SolverConfig,
    /// density nodes in total (split over support components)
    pub nodes: usize,
    /// uniform scan used to find support components
    pub scan: usize,
    pub max_defect: f64,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        ConvolutionConfig { solver: SolverConfig::default(), nodes: 2048, scan: 512, max_defect: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct ConvolutionOutput {
    pub result: Measure,
    /// ω on the density nodes of `result`
    pub subordination: SubordinationResult,
    pub atom_table: Vec<AtomRow>,
    /// total − 1 before renormalizing the density
    pub defect: f64,
    pub note: String,
}

pub fn free_add_convolve(mu: &Measure, nu: &Measure) -> Result<ConvolutionOutput> {
    free_add_convolve_with(mu, nu, &ConvolutionConfig::default())
}

pub fn free_add_convolve_with(mu: &Measure, nu: &Measure, cfg: &ConvolutionConfig) -> Result<ConvolutionOutput> {
    line_convolve(SubordinationKind::Additive, mu, nu, cfg)
}

pub fn free_mult_convolve_positive(mu: &Measure, nu: &Measure) -> Result<ConvolutionOutput> {
    free_mult_convolve_positive_with(mu, nu, &ConvolutionConfig::default())
}

pub fn free_mult_convolve_positive_with(mu: &Measure, nu: &Measure, cfg: &ConvolutionConfig) -> Result<ConvolutionOutput> {
    line_convolve(SubordinationKind::MultiplicativePositive, mu, nu, cfg)
}

pub fn free_mult_convolve_circle(mu: &Measure, nu: &Measure) -> Result<ConvolutionOutput> {
    free_mult_convolve_circle_with(mu, nu, &ConvolutionConfig::default())
}

/// Closed forms when one factor is a point mass.
fn trivial(kind: SubordinationKind, mu: &Measure, nu: &Measure) -> Option<Result<Measure>> {
    let (m, c) = match (mu.as_point_mass(), nu.as_point_mass()) {
        (_, Some(c)) => (mu, c),
        (Some(c), None) => (nu, c),
        _ => return None,
    };
    Some(match kind {
        SubordinationKind::Additive => m.translate(c),
        SubordinationKind::MultiplicativePositive if c == 0.0 => Measure::point_mass(SupportDomain::NonNegativeReals, 0.0),
        SubordinationKind::MultiplicativePositive => m.dilate(c).and_then(|d| relabel(d, SupportDomain::NonNegativeReals)),
        SubordinationKind::MultiplicativeCircle => m.rotate(c),
    })
}

fn relabel(m: Measure, domain: SupportDomain) -> Result<Measure> {
    if m.domain() == domain {
        return Ok(m);
    }
    let (grid, values, weights) = match m.density() {
        Some(d) => (d.grid().to_vec(), d.values().to_vec(), d.weights().to_vec()),
        None => (vec![], vec![], vec![]),
    };
    Ok(Measure::from_quadrature(domain, m.atoms().to_vec(), grid, values, weights)?.0)
}

fn out_domain(kind: SubordinationKind, mu: &Measure) -> SupportDomain {
    match kind {
        SubordinationKind::Additive => mu.domain(),
        SubordinationKind::MultiplicativePositive => SupportDomain::NonNegativeReals,
        SubordinationKind::MultiplicativeCircle => SupportDomain::UnitCircle,
    }
}

fn hull(kind: SubordinationKind, mu: &Measure, nu: &Measure) -> (f64, f64) {
    let (a, b) = (mu.support(), nu.support());
    match kind {
        SubordinationKind::Additive => (a.0 + b.0, a.1 + b.1),
        _ => (a.0.max(0.0) * b.0.max(0.0), a.1 * b.1),
    }
}

/// Residue mass −ε·Im G(γ+iε), extrapolated over ε, ε/2.
fn residue(r: &SubordinationResult, k: usize) -> f64 {
    let e = r.eps[k];
    let m0 = -e * r.target[0][k].im;
    let m1 = -0.5 * e * r.target[1][k].im;
    extrapolate(m0, m1)
}

fn line_convolve(kind: SubordinationKind, mu: &Measure, nu: &Measure, cfg: &ConvolutionConfig) -> Result<ConvolutionOutput> {
    let domain = out_domain(kind, mu);
    if let Some(m) = trivial(kind, mu, nu) {
        return finish_trivial(kind, mu, nu, m?, cfg);
    }
    let scfg = cfg.solver;
    let (lo, hi) = hull(kind, mu, nu);
    let scale = 1.0f64.max(lo.abs().max(hi.abs()));

    // atoms
    let mut atoms = Vec::new();
    let mut table = Vec::new();
    if kind == SubordinationKind::MultiplicativePositive {
        let m0 = mu.mass_at_zero().max(nu.mass_at_zero());
        if m0 > 0.0 {
            atoms.push(Atom { loc: 0.0, mass: m0 });
            table.push(AtomRow { gamma: 0.0, alpha: 0.0, beta: 0.0, mass: m0 });
        }
    }
    for p in atom_pairs(kind, mu, nu) {
        let r = boundary(kind, mu, nu, &[p.gamma], None, &scfg, false)?;
        if !r.resolved[0] {
            return Err(Error::NoConvergence { iterations: scfg.max_iter, residual: f64::NAN });
        }
        let mut mass = residue(&r, 0);
        if kind == SubordinationKind::MultiplicativePositive {
            // the zero atom's pole sits at distance γ: remove its share
            let m0: f64 = atoms.iter().filter(|a| a.loc == 0.0).map(|a| a.mass).sum();
            let e = r.eps[0];
            let share = |e: f64| -e * (m0 / C::new(p.gamma, e)).im;
            mass -= extrapolate(share(e), share(0.5 * e));
        }
        if mass > 0.0 {
            atoms.push(Atom { loc: p.gamma, mass });
            table.push(AtomRow { gamma: p.gamma, alpha: p.alpha, beta: p.beta, mass });
        } else {
            log::warn!("pairing criterion predicts an atom at {} but its residue is {mass:e}", p.gamma);
        }
    }

    // support components
    let fine = SolverConfig { eps: scfg.eps * 1e-6, ..scfg };
    let probe = |x: f64| -> f64 {
        boundary(kind, mu, nu, &[x], None, &fine, false).map(|r| r.density()[0]).unwrap_or(f64::NAN)
    };
    let m = cfg.scan.max(16);
    let xs: Vec<f64> = (0..m).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / m as f64).collect();
    let scan = boundary(kind, mu, nu, &xs, None, &fine, false)?;
    let dens: Vec<f64> = scan
        .density()
        .into_iter()
        .zip(&xs)
        .map(|(f, &x)| if atoms.iter().any(|a| (a.loc - x).abs() < 1e-9 * scale) { f64::NAN } else { f })
        .collect();
    let fmax = dens.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &b| a.max(b));
    let thr = 1e-9 * fmax;
    let pos = |f: f64| f.is_finite() && f > thr;
    let edges = borderline_points(kind, mu, nu);
    let mut comps: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    while k < m {
        if !pos(dens[k]) {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < m && (pos(dens[k + 1]) || (dens[k + 1].is_nan() && k + 2 < m && pos(dens[k + 2]))) {
            k += 1;
        }
        let a_out = if start == 0 { lo } else { xs[start - 1] };
        let b_out = if k + 1 == m { hi } else { xs[k + 1] };
        let a = refine_edge(&probe, a_out, xs[start], thr, start == 0, scale);
        let b = refine_edge(&probe, b_out, xs[k], thr, k + 1 == m, scale);
        comps.push((snap_edge(a, &edges, 1e-4 * scale, false), snap_edge(b, &edges, 1e-4 * scale, false)));
        k += 1;
    }
    // deep interior minima (cusps, nearly closed gaps) become component
    // boundaries so that nodes cluster there; a smooth minimum is flat
    // across the scan window and stays interior
    let probe_n = |x: f64| -> f64 {
        boundary(kind, mu, nu, &[x], None, &scfg, false).map(|r| r.density()[0]).unwrap_or(f64::NAN)
    };
    let mut cuts = Vec::new();
    for k in 2..m.saturating_sub(2) {
        let w = &dens[k - 2..=k + 2];
        let c = w[2];
        if w.iter().all(|&v| pos(v)) && w[1] >= c && w[0] > c && w[3] > c && w[4] > c && c < 0.25 * fmax && c < 0.7 * w[0].min(w[4]) {
            // shrink the bracket and ε together: the smoothed density's
            // minimum drifts from the true one by O(ε)
            let (mut a, mut b) = (xs[k - 1], xs[k + 1]);
            let mut x = golden_min(&probe_n, a, b, 1e-3 * (b - a));
            while b - a > 1e-13 * scale {
                let w = 0.05 * (b - a);
                (a, b) = (x - w, x + w);
                let c = SolverConfig { eps: (1e-3 * w / scale).max(1e-18), ..scfg };
                let p = |y: f64| boundary(kind, mu, nu, &[y], None, &c, false).map(|r| r.density()[0]).unwrap_or(f64::NAN);
                x = golden_min(&p, a, b, 1e-3 * (b - a));
            }
            cuts.push(x);
        }
    }
    if !cuts.is_empty() {
        comps = comps
            .into_iter()
            .flat_map(|(a, b)| {
                let mut pts = vec![a];
                pts.extend(cuts.iter().copied().filter(|&x| x > a && x < b));
                pts.push(b);
                pts.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
            })
            .collect();
    }
    if fmax > 0.0 && comps.is_empty() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::NAN });
    }

    // density on Chebyshev nodes
    let total_len: f64 = comps.iter().map(|c| c.1 - c.0).sum();
    let mut grid = Vec::new();
    let mut weights = Vec::new();
    let mut interior = Vec::new();
    let mut ranges = Vec::new();
    for &(a, b) in &comps {
        let n = ((cfg.nodes as f64 * (b - a) / total_len).round() as usize).max(32);
        let (mut g, mut w) = chebyshev_grid(a, b, n);
        // graded nodes next to a cut resolve cusp-like behaviour; they carry
        // no quadrature weight
        let mut graded = Vec::new();
        for (end, inner) in [(a, g[6.min(n)]), (b, g[n + 1 - 6.min(n)])] {
            if cuts.contains(&end) {
                // below ~1e-9 the solves lose accuracy near a cusp
                let mut d = 0.5 * (inner - end);
                while d.abs() > 1e-9 * scale {
                    graded.push(end + d);
                    d *= 0.5;
                }
            }
        }
        if !graded.is_empty() {
            let mut pairs: Vec<(f64, f64)> = g.into_iter().zip(w).chain(graded.into_iter().map(|t| (t, 0.0))).collect();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            (g, w) = pairs.into_iter().unzip();
        }
        let n = g.len() - 2;
        // components may share an endpoint; keep the grid strictly increasing
        let skip = usize::from(grid.last().is_some_and(|&l: &f64| l >= g[0]));
        let first = grid.len() + 1 - skip;
        grid.extend_from_slice(&g[skip..]);
        weights.extend_from_slice(&w[skip..]);
        interior.extend(first..first + n);
        ranges.push((first - 1, first + n));
    }
    let nodes: Vec<f64> = interior.iter().map(|&i| grid[i]).collect();
    // extrapolation in ε needs ε ≪ distance to the nearest edge
    let caps: Vec<f64> = nodes
        .iter()
        .map(|&t| comps.iter().map(|c| (t - c.0).abs().min((c.1 - t).abs())).fold(f64::INFINITY, f64::min) * 1e-3)
        .collect();
    let sub = boundary(kind, mu, nu, &nodes, Some(&caps), &scfg, true)?;
    let mut values = vec![0.0; grid.len()];
    let mut flagged = 0;
    for (j, &i) in interior.iter().enumerate() {
        if !sub.resolved[j] {
            flagged += 1;
            continue;
        }
        let t = grid[i];
        let mut g = [sub.target[0][j], sub.target[1][j]];
        for (l, gl) in g.iter_mut().enumerate() {
            let e = sub.eps[j] * if l == 0 { 1.0 } else { 0.5 };
            for a in &atoms {
                *gl -= a.mass / C::new(t - a.loc, e);
            }
        }
        values[i] = (-extrapolate_c(g[0], g[1]).im / PI).max(0.0);
    }
    // unresolved weightless nodes would read as dips
    let keep: Vec<bool> = (0..grid.len()).map(|i| weights[i] > 0.0 || values[i] > 0.0 || !interior.contains(&i)).collect();
    let mut ranges = ranges;
    if keep.iter().any(|k| !k) {
        let mut new_index = vec![0usize; grid.len()];
        let mut c = 0;
        for (i, &k) in keep.iter().enumerate() {
            new_index[i] = c;
            c += usize::from(k);
        }
        ranges.iter_mut().for_each(|r| *r = (new_index[r.0], new_index[r.1]));
        let filt = |v: &[f64]| v.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect::<Vec<f64>>();
        (grid, values, weights) = (filt(&grid), filt(&values), filt(&weights));
    }
    // a cut's own value: linear extrapolation from each side, averaged
    for i in 0..grid.len() {
        if cuts.contains(&grid[i]) && i >= 2 && i + 2 < grid.len() {
            let lin = |j: usize, k: usize| values[j] + (values[j] - values[k]) * (grid[i] - grid[j]) / (grid[j] - grid[k]);
            let cap = values[i - 1].min(values[i + 1]);
            values[i] = (0.5 * (lin(i - 1, i - 2) + lin(i + 1, i + 2))).clamp(0.0, cap);
        }
    }
    let mut extra = Vec::new();
    for &(s, e) in &ranges {
        extra.extend(singular_edge_nodes(&grid[s..=e], &mut values[s..=e], [!cuts.contains(&grid[s]), !cuts.contains(&grid[e])]));
    }
    let (grid, values, weights) = close_gaps(grid, values, weights, &ranges);
    let (grid, mut values, weights) = insert_nodes(grid, values, weights, extra);
    let atom_mass: f64 = atoms.iter().map(|a| a.mass).sum();
    let dens_mass: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    let defect = atom_mass + dens_mass - 1.0;
    if defect.abs() > cfg.max_defect {
        return Err(Error::MassDefect { defect });
    }
    if defect.abs() > 1e-6 {
        log::info!("{kind:?} convolution renormalized (defect {defect:e})");
    }
    if dens_mass > 0.0 {
        let s = (1.0 - atom_mass) / dens_mass;
        values.iter_mut().for_each(|v| *v *= s);
    }
    let result = if grid.is_empty() || dens_mass <= 0.0 {
        Measure::from_quadrature(domain, atoms, vec![], vec![], vec![])?.0
    } else {
        Measure::from_quadrature(domain, atoms, grid, values, weights)?.0
    };
    let note = exceptional_note(&sub, flagged);
    Ok(ConvolutionOutput { result, subordination: sub, atom_table: table, defect, note })
}

/// Minimizer of a unimodal function on [a, b] by golden-section search.
fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc.is_nan() || fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisection between a point off the support (`out`) and one on it (`inside`).
fn refine_edge(probe: &dyn Fn(f64) -> f64, out: f64, inside: f64, thr: f64, at_hull: bool, scale: f64) -> f64 {
    let (mut o, mut i) = (out, inside);
    if at_hull {
        // the hull end itself may be the edge; only probe strictly inside it
        let f = probe(o + 1e-12 * scale * (i - o).signum());
        if f.is_finite() && f > thr {
            return o;
        }
    }
    for _ in 0..60 {
        if (i - o).abs() <= 1e-13 * scale {
            break;
        }
        let mid = 0.5 * (o + i);
        let f = probe(mid);
        if f.is_finite() && f > thr {
            i = mid;
        } else {
            o = mid;
        }
    }
    o
}

/// At an inverse-square-root edge put the mass the piecewise-linear reading
/// misses into the edge value (the Fejér weights already integrate it).
/// Weightless nodes resolving an integrable singular edge (density rising
/// toward the edge) for the piecewise-linear interpolant: power laws fitted
/// between the first computed nodes, a geometric ladder below the first
/// node, and an edge value giving the last sliver the model's mass.
/// Returns the extra (x, value) pairs; only `values[edge]` is modified.
fn singular_edge_nodes(grid: &[f64], values: &mut [f64], ends: [bool; 2]) -> Vec<(f64, f64)> {
    const RATIO: f64 = 1.05;
    let n = grid.len();
    let mut extra = Vec::new();
    if n < 12 {
        return extra;
    }
    for (side, on) in ends.into_iter().enumerate() {
        let m = 32.min(n / 2);
        let idx: Vec<usize> = if side == 0 { (0..m).collect() } else { (n - m..n).rev().collect() };
        let (e, k1, k2) = (idx[0], idx[1], idx[2]);
        if !on || !(values[k1] > values[k2] && values[k2] > 0.0) {
            continue;
        }
        let dir = if side == 0 { 1.0 } else { -1.0 };
        let d = |k: usize| (grid[k] - grid[e]).abs();
        let mut push = |dist: f64, v: f64| extra.push((grid[e] + dir * dist, v));
        // between computed nodes while the density still falls inward
        for w in idx[1..].windows(2) {
            let (va, vb) = (values[w[0]], values[w[1]]);
            if !(va > vb && vb > 0.0) {
                break;
            }
            let (da, db) = (d(w[0]), d(w[1]));
            let q = (va / vb).ln() / (db / da).ln();
            let mut x = da * RATIO;
            while x < db / RATIO.sqrt() {
                push(x, va * (x / da).powf(-q));
                x *= RATIO;
            }
        }
        let (d1, d2) = (d(k1), d(k2));
        let p = ((values[k1] / values[k2]).ln() / (d2 / d1).ln()).clamp(0.0, 0.95);
        let c = values[k1] * d1.powf(p);
        let dmin = 1e-4 * d1;
        let mut x = d1 / RATIO;
        while x > dmin {
            push(x, c * x.powf(-p));
            x /= RATIO;
        }
        let x = x * RATIO;
        let sliver = c * x.powf(1.0 - p) / (1.0 - p);
        values[e] = (2.0 * sliver / x - c * x.powf(-p)).max(0.0);
    }
    extra
}

/// Merge weightless nodes into a grid.
fn insert_nodes(grid: Vec<f64>, values: Vec<f64>, weights: Vec<f64>, extra: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if extra.is_empty() {
        return (grid, values, weights);
    }
    let mut all: Vec<(f64, f64, f64)> = grid.into_iter().zip(values).zip(weights).map(|((g, v), w)| (g, v, w)).collect();
    all.extend(extra.into_iter().map(|(x, v)| (x, v, 0.0)));
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.dedup_by(|a, b| a.0 == b.0);
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for (g, v, w) in all {
        out.0.push(g);
        out.1.push(v);
        out.2.push(w);
    }
    out
}

/// Zero nodes just outside the edges of separated components, so the
/// piecewise-linear interpolant does not bridge a gap between two
/// (possibly large) edge values.
fn close_gaps(grid: Vec<f64>, values: Vec<f64>, weights: Vec<f64>, ranges: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut after = vec![None; grid.len()];
    let mut before = vec![None; grid.len()];
    for w in ranges.windows(2) {
        let (e, s) = (w[0].1, w[1].0);
        if s > e && (values[e] > 0.0 || values[s] > 0.0) {
            let d = 1e-9 * (grid[s] - grid[e]);
            after[e] = Some(grid[e] + d);
            before[s] = Some(grid[s] - d);
        }
    }
    let n = grid.len();
    let (mut g, mut v, mut wt) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        if let Some(x) = before[i] {
            g.push(x);
            v.push(0.0);
            wt.push(0.0);
        }
        g.push(grid[i]);
        v.push(values[i]);
        wt.push(weights[i]);
        if let Some(x) = after[i] {
            g.push(x);
            v.push(0.0);
            wt.push(0.0);
        }
    }
    (g, v, wt)
}

/// Locations γ(α, β) of atom pairs whose masses sum to exactly one: no
/// atom forms there, but the density has an inverse-square-root edge that
/// threshold bisection on a smoothed density cannot place precisely.
fn borderline_points(kind: SubordinationKind, mu: &Measure, nu: &Measure) -> Vec<f64> {
    let mut out = Vec::new();
    for x in mu.atoms() {
        for y in nu.atoms() {
            if (x.mass + y.mass - 1.0).abs() <= 1e-9 {
                out.push(match kind {
                    SubordinationKind::Additive => x.loc + y.loc,
                    SubordinationKind::MultiplicativePositive => x.loc * y.loc,
                    SubordinationKind::MultiplicativeCircle => (x.loc + y.loc).rem_euclid(TAU),
                });
            }
        }
    }
    out
}

/// Moves a refined edge onto a nearby borderline location (for the circle,
/// the nearest lift of it).
fn snap_edge(x: f64, points: &[f64], tol: f64, periodic: bool) -> f64 {
    let lift = |p: f64| if periodic { p + TAU * ((x - p) / TAU).round() } else { p };
    points.iter().map(|&p| lift(p)).filter(|&p| (p - x).abs() <= tol).min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap_or(x)
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn exceptional_note(sub: &SubordinationResult, flagged: usize) -> String {
    let unstable = sub.resolved.iter().zip(&sub.stable).filter(|(r, s)| **r && !**s).count();
    format!(
        "{} of {} nodes unresolved, {} unstable under ε-refinement; {} interval(s) in U",
        flagged,
        sub.grid.len(),
        unstable,
        sub.regular_set.len()
    )
}

fn finish_trivial(
    kind: SubordinationKind,
    mu: &Measure,
    nu: &Measure,
    result: Measure,
    cfg: &ConvolutionConfig,
) -> Result<ConvolutionOutput> {
    let mut table = Vec::new();
    for a in result.atoms() {
        let (alpha, beta) = match (mu.as_point_mass(), nu.as_point_mass()) {
            (_, Some(c)) => (snap(mu, preimage(kind, a.loc, c)), c),
            (Some(c), _) => (c, snap(nu, preimage(kind, a.loc, c))),
            _ => unreachable!(),
        };
        table.push(AtomRow { gamma: a.loc, alpha, beta, mass: a.mass });
    }
    let nodes: Vec<f64> = result
        .density()
        .map(|d| {
            d.grid()
                .iter()
                .zip(d.values())
                .filter(|(&t, &v)| v > 0.0 && (kind != SubordinationKind::MultiplicativePositive || t > 0.0))
                .map(|(&t, _)| t)
                .collect()
        })
        .unwrap_or_default();
    let sub = boundary(kind, mu, nu, &nodes, None, &cfg.solver, true)?;
    let note = "point-mass factor: closed-form translation/dilation/rotation".to_string();
    Ok(ConvolutionOutput { result, subordination: sub, atom_table: table, defect: 0.0, note })
}

/// Replace a computed preimage by the exact atom location it rounds to.
fn snap(m: &Measure, x: f64) -> f64 {
    let dist = |a: f64| {
        let d = (a - x).abs();
        if m.domain().is_circle() { d.min(TAU - d) } else { d }
    };
    m.atoms()
        .iter()
        .map(|a| a.loc)
        .filter(|&a| dist(a) <= 1e-9 * (1.0 + x.abs()))
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .unwrap_or(x)
}

fn preimage(kind: SubordinationKind, gamma: f64, c: f64) -> f64 {
    match kind {
        SubordinationKind::Additive => gamma - c,
        SubordinationKind::MultiplicativePositive => {
            if c == 0.0 {
                0.0
            } else {
                gamma / c
            }
        }
        SubordinationKind::MultiplicativeCircle => (gamma - c).rem_euclid(TAU),
    }
}

pub fn free_mult_convolve_circle_with(mu: &Measure, nu: &Measure, cfg: &ConvolutionConfig) -> Result<ConvolutionOutput> {
    let kind = SubordinationKind::MultiplicativeCircle;
    if let Some(m) = trivial(kind, mu, nu) {
        return finish_trivial(kind, mu, nu, m?, cfg);
    }
    let scfg = cfg.solver;
    let mut atoms = Vec::new();
    let mut table = Vec::new();
    let poisson = |r: &SubordinationResult, k: usize, l: usize| 2.0 * r.target[l][k].re + 1.0;
    for p in atom_pairs(kind, mu, nu) {
        let r = boundary(kind, mu, nu, &[p.gamma], None, &scfg, false)?;
        if !r.resolved[0] {
            return Err(Error::NoConvergence { iterations: scfg.max_iter, residual: f64::NAN });
        }
        let e = r.eps[0];
        let m0 = poisson(&r, 0, 0) * e / (2.0 - e);
        let m1 = poisson(&r, 0, 1) * 0.5 * e / (2.0 - 0.5 * e);
        let mass = extrapolate(m0, m1);
        if mass > 0.0 {
            atoms.push(Atom { loc: p.gamma, mass });
            table.push(AtomRow { gamma: p.gamma, alpha: p.alpha, beta: p.beta, mass });
        }
    }
    // density at boundary node k of `sub`, atoms' Poisson kernels removed
    let bulk = |sub: &SubordinationResult, k: usize| -> f64 {
        let theta = sub.grid[k];
        let mut v = [poisson(sub, k, 0), poisson(sub, k, 1)];
        for (l, vl) in v.iter_mut().enumerate() {
            let e = sub.eps[k] * if l == 0 { 1.0 } else { 0.5 };
            let z = C::from_polar(1.0 - e, -theta);
            for a in &atoms {
                let g = C::from_polar(1.0, a.loc);
                *vl -= a.mass * (2.0 * (z * g / (1.0 - z * g)).re + 1.0);
            }
        }
        (extrapolate(v[0], v[1]) / TAU).max(0.0)
    };

    // arcs of the support: runs of a fine-ε scan, edges refined by bisection
    let fine = SolverConfig { eps: scfg.eps * 1e-6, ..scfg };
    let probe = |x: f64| -> f64 {
        boundary(kind, mu, nu, &[x.rem_euclid(TAU)], None, &fine, false).map(|r| r.density()[0]).unwrap_or(f64::NAN)
    };
    let m = cfg.scan.max(16);
    let xs: Vec<f64> = (0..m).map(|k| TAU * (k as f64 + 0.5) / m as f64).collect();
    let scan = boundary(kind, mu, nu, &xs, None, &fine, false)?;
    let near_atom = |x: f64| atoms.iter().any(|a| circle_dist(a.loc, x) < 1e-9);
    let dens: Vec<f64> = scan.density().into_iter().zip(&xs).map(|(f, &x)| if near_atom(x) { f64::NAN } else { f }).collect();
    let fmax = dens.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &b| a.max(b));
    let thr = 1e-9 * fmax;
    let pos = |f: f64| f.is_finite() && f > thr;
    let gap = (0..m).find(|&k| !pos(dens[k]) && !dens[k].is_nan());

    let edges = borderline_points(kind, mu, nu);
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    if let Some(k0) = gap {
        // walk once around the circle starting in a gap, angles unwrapped
        let at = |j: usize| xs[(k0 + j) % m] + TAU * ((k0 + j) / m) as f64;
        let d = |j: usize| dens[(k0 + j) % m];
        let mut j = 1;
        while j < m {
            if !pos(d(j)) {
                j += 1;
                continue;
            }
            let start = j;
            while j + 1 < m && (pos(d(j + 1)) || (d(j + 1).is_nan() && j + 2 < m && pos(d(j + 2)))) {
                j += 1;
            }
            let a = refine_edge(&probe, at(start - 1), at(start), thr, false, 1.0);
            let b = refine_edge(&probe, at(j + 1), at(j), thr, false, 1.0);
            arcs.push((snap_edge(a, &edges, 1e-4, true), snap_edge(b, &edges, 1e-4, true)));
            j += 1;
        }
    }
    if fmax > 0.0 && gap.is_some() && arcs.is_empty() {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::NAN });
    }

    let (grid, values, weights, sub, flagged) = if gap.is_none() {
        // full support: periodic trapezoid on a uniform grid
        let n = cfg.nodes.max(16);
        let theta: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
        let sub = boundary(kind, mu, nu, &theta, None, &scfg, true)?;
        let mut values = vec![0.0; n + 1];
        let mut flagged = 0;
        for k in 0..n {
            if sub.resolved[k] {
                values[k] = bulk(&sub, k);
            } else {
                flagged += 1;
            }
        }
        values[n] = values[0];
        let mut grid = theta;
        grid.push(TAU);
        let weights = trapezoid_weights(&grid);
        (grid, values, weights, sub, flagged)
    } else {
        // Chebyshev nodes per arc; an arc through θ = 0 is split there
        let mut pieces: Vec<(f64, f64, [bool; 2])> = Vec::new();
        for &(a, b) in &arcs {
            let shift = TAU * (a / TAU).floor();
            let (a, b) = (a - shift, b - shift);
            if b > TAU {
                pieces.push((0.0, b - TAU, [false, true]));
                pieces.push((a, TAU, [true, false]));
            } else {
                pieces.push((a, b, [true, true]));
            }
        }
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let total_len: f64 = pieces.iter().map(|p| p.1 - p.0).sum();
        let mut grid = Vec::new();
        let mut weights = Vec::new();
        let mut ranges = Vec::new();
        for &(a, b, _) in &pieces {
            let n = ((cfg.nodes as f64 * (b - a) / total_len).round() as usize).max(32);
            let (g, w) = chebyshev_grid(a, b, n);
            let skip = usize::from(grid.last().is_some_and(|&l: &f64| l >= g[0]));
            let first = grid.len() - skip;
            grid.extend_from_slice(&g[skip..]);
            weights.extend_from_slice(&w[skip..]);
            ranges.push((first, grid.len() - 1));
        }
        // interior nodes plus split points (solved directly, not edges)
        let split = |t: f64| t == 0.0 || t == TAU;
        let solve: Vec<usize> = (0..grid.len())
            .filter(|&i| weights[i] > 0.0 || (split(grid[i]) && pieces.iter().any(|p| p.2 != [true, true])))
            .collect();
        let nodes: Vec<f64> = solve.iter().map(|&i| grid[i].rem_euclid(TAU)).collect();
        let caps: Vec<f64> = nodes
            .iter()
            .map(|&t| arcs.iter().map(|&(a, b)| circle_dist(t, a).min(circle_dist(t, b))).fold(f64::INFINITY, f64::min) * 1e-3)
            .collect();
        let sub = boundary(kind, mu, nu, &nodes, Some(&caps), &scfg, true)?;
        let mut values = vec![0.0; grid.len()];
        let mut flagged = 0;
        for (j, &i) in solve.iter().enumerate() {
            if sub.resolved[j] {
                values[i] = bulk(&sub, j);
            } else {
                flagged += 1;
            }
        }
        let mut extra = Vec::new();
        for (&(s, e), p) in ranges.iter().zip(&pieces) {
            extra.extend(singular_edge_nodes(&grid[s..=e], &mut values[s..=e], p.2));
        }
        let (grid, values, weights) = close_gaps(grid, values, weights, &ranges);
        let (grid, values, weights) = insert_nodes(grid, values, weights, extra);
        (grid, values, weights, sub, flagged)
    };
    let mut values = values;
    let atom_mass: f64 = atoms.iter().map(|a| a.mass).sum();
    let dens_mass: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    let defect = atom_mass + dens_mass - 1.0;
    if defect.abs() > cfg.max_defect {
        return Err(Error::MassDefect { defect });
    }
    if defect.abs() > 1e-6 {
        log::info!("circle convolution renormalized (defect {defect:e})");
    }
    let result = if dens_mass > 1e-12 {
        let s = (1.0 - atom_mass) / dens_mass;
        values.iter_mut().for_each(|v| *v *= s);
        Measure::from_quadrature(SupportDomain::UnitCircle, atoms, grid, values, weights)?.0
    } else {
        Measure::from_quadrature(SupportDomain::UnitCircle, atoms, vec![], vec![], vec![])?.0
    };
    let note = exceptional_note(&sub, flagged);
    Ok(ConvolutionOutput { result, subordination: sub, atom_table: table, defect, note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SupportDomain::*;

    fn sup_err(m: &Measure, exact: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let d = m.density().unwrap();
        d.grid()
            .iter()
            .zip(d.values())
            .filter(|(&t, _)| t > lo && t < hi)
            .map(|(&t, &v)| (v - exact(t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn arcsine_from_two_points() {
        let mu = Measure::discrete(RealLine, &[(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let out = free_add_convolve(&mu, &mu).unwrap();
        assert!(out.atom_table.is_empty());
        assert!(out.result.atoms().is_empty());
        let (lo, hi) = out.result.support();
        assert!(lo.abs() < 1e-9 && (hi - 4.0).abs() < 1e-9, "{lo} {hi}");
        let e = sup_err(&out.result, |t| 1.0 / (PI * (t * (4.0 - t)).sqrt()), 0.2, 3.8);
        assert!(e < 1e-6, "{e}");
        assert!(out.defect.abs() < 1e-6, "{}", out.defect);
        assert!((out.result.mean() - 2.0).abs() < 1e-6);
        assert!((out.result.variance() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn semicircles_add() {
        let s = Measure::semicircle(1.0).unwrap();
        let out = free_add_convolve(&s, &s).unwrap();
        let f0 = out.result.density_at(0.0);
        assert!((f0 - 1.0 / (PI * 2f64.sqrt())).abs() < 5e-3);
        let e = sup_err(&out.result, |t| (8.0 - t * t).max(0.0).sqrt() / (4.0 * PI), -2.7, 2.7);
        assert!(e < 1e-4, "{e}");
        assert!(out.result.mean().abs() < 1e-4);
        assert!((out.result.variance() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn atom_from_pairing() {
        let mu = Measure::discrete(RealLine, &[(0.0, 0.75), (2.0, 0.25)]).unwrap();
        let out = free_add_convolve(&mu, &mu).unwrap();
        assert_eq!(out.atom_table.len(), 1);
        let row = out.atom_table[0];
        assert_eq!((row.gamma, row.alpha, row.beta), (0.0, 0.0, 0.0));
        assert!((row.mass - 0.5).abs() < 1e-2, "{}", row.mass);
        assert!((out.result.mean() - 1.0).abs() < 1e-4);
        assert!((out.result.variance() - 2.0 * 0.75).abs() < 1e-4);
    }

    #[test]
    fn commutative() {
        let mu = Measure::discrete(RealLine, &[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let nu = Measure::semicircle(1.0).unwrap();
        let a = free_add_convolve(&mu, &nu).unwrap();
        let b = free_add_convolve(&nu, &mu).unwrap();
        assert_eq!(a.atom_table, b.atom_table);
        assert_eq!(a.result.density().unwrap().values(), b.result.density().unwrap().values());
        assert_eq!(a.subordination.boundary1, b.subordination.boundary2);
    }

    #[test]
    fn multiplicative_positive() {
        let one = Measure::point_mass(NonNegativeReals, 1.0).unwrap();
        let fp = Measure::free_poisson(1.0).unwrap();
        let out = free_mult_convolve_positive(&one, &fp).unwrap();
        let (d, e) = (out.result.density().unwrap(), fp.density().unwrap());
        assert_eq!(d.grid(), e.grid());
        assert!(d.values().iter().zip(e.values()).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs()));

        let mu = Measure::discrete(NonNegativeReals, &[(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let nu = Measure::free_poisson(2.0).unwrap();
        let out = free_mult_convolve_positive(&mu, &nu).unwrap();
        assert!(out.result.atoms().is_empty());
        assert!((out.result.mean() - 3.0).abs() < 1e-4, "{}", out.result.mean());
        // second moment of a⊠b: m2(a)m1(b)² + m1(a)²m2(b) − m1(a)²m1(b)²
        let (a1, a2, b1, b2) = (1.5, 2.5, 2.0, 6.0);
        let m2 = a2 * b1 * b1 + a1 * a1 * b2 - a1 * a1 * b1 * b1;
        assert!((out.result.moment(2).re - m2).abs() < 1e-3, "{}", out.result.moment(2));

        let mu0 = Measure::discrete(NonNegativeReals, &[(0.0, 0.3), (1.0, 0.4), (2.0, 0.3)]).unwrap();
        let nu0 = Measure::free_poisson(0.5).unwrap();
        let out = free_mult_convolve_positive(&mu0, &nu0).unwrap();
        assert_eq!(out.result.atoms()[0], Atom { loc: 0.0, mass: 0.5 });
        assert_eq!(out.atom_table[0].mass, 0.5);
        assert!((out.result.mean() - 0.5 * 1.0).abs() < 1e-4, "{}", out.result.mean());
    }

    #[test]
    fn circle() {
        let h = Measure::haar().unwrap();
        let nu = Measure::discrete(UnitCircle, &[(0.3, 0.6), (2.0, 0.4)]).unwrap();
        let out = free_mult_convolve_circle(&nu, &h).unwrap();
        for &v in out.result.density().unwrap().values() {
            assert!((v - 1.0 / TAU).abs() < 5e-3);
        }
        let pm = Measure::discrete(UnitCircle, &[(0.0, 0.5), (PI, 0.5)]).unwrap();
        let out = free_mult_convolve_circle(&pm, &pm).unwrap();
        assert!(out.result.atoms().is_empty());
        assert!(out.result.moment(1).norm() < 1e-6 && out.result.moment(2).norm() < 1e-6);

        let d = Measure::point_mass(UnitCircle, 1.0).unwrap();
        let out = free_mult_convolve_circle(&nu, &d).unwrap();
        assert!((out.result.atoms()[0].loc - 1.3).abs() < 1e-15);

        let a = Measure::discrete(UnitCircle, &[(0.2, 0.7), (1.0, 0.3)]).unwrap();
        let b = Measure::discrete(UnitCircle, &[(0.1, 0.8), (3.0, 0.2)]).unwrap();
        let out = free_mult_convolve_circle(&a, &b).unwrap();
        // (0.2, 0.1) and (1.0, 0.1) both pass the pairing test
        assert_eq!(out.atom_table.len(), 2);
        assert!((out.atom_table[0].gamma - 0.3).abs() < 1e-15);
        assert!((out.atom_table[1].gamma - 1.1).abs() < 1e-15);
        assert!((out.result.moment(1) - a.moment(1) * b.moment(1)).norm() < 1e-4);
    }
}
