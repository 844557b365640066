//! Overlap functions o(s,t), the kernels k_s, and the empirical overlap
//! measure of two spectral decompositions.

use crate::convolution::{free_add_convolve, free_mult_convolve_circle, free_mult_convolve_positive, ConvolutionOutput};
use crate::error::{Error, Result};
use crate::measure::{Atom, Measure};
use crate::subordination::{SubordinationKind, ZeroLimit};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Value of o at an atom γ of the target: 1/μ({α}) on the row s = α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomBranch {
    pub gamma: f64,
    pub alpha: f64,
    pub value: f64,
    /// target mass at γ
    pub mass: f64,
}

/// ℝ₊ branches at t = 0, where the target has an atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroBranches {
    /// o(s, 0) for each s of the table (s = 0 included if present)
    pub at_zero: Vec<f64>,
    /// o(0, 0) = 1/(μ⊠ν)({0})
    pub origin: f64,
    /// (μ⊠ν)({0})
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct OverlapTable {
    pub kind: SubordinationKind,
    pub s_grid: Vec<f64>,
    /// μ-mass carried by each s (atom mass or density × quadrature weight)
    pub s_weights: Vec<f64>,
    /// bulk points of the target (those in U)
    pub t_grid: Vec<f64>,
    /// target density × quadrature weight at each t
    pub t_weights: Vec<f64>,
    /// values[i][j] = o(s_i, t_j)
    pub values: Vec<Vec<f64>>,
    pub atom_branches: Vec<AtomBranch>,
    pub zero_branches: Option<ZeroBranches>,
    /// target nodes with positive density left out of U
    pub gaps: Vec<f64>,
}

impl OverlapTable {
    /// ∫ o(s_i, t) d(target)(t), atoms and the t = 0 branch included.
    pub fn row_mass(&self, i: usize) -> f64 {
        let s = self.s_grid[i];
        let mut acc: f64 = self.values[i].iter().zip(&self.t_weights).map(|(o, w)| o * w).sum();
        for b in &self.atom_branches {
            if b.alpha == s {
                acc += b.value * b.mass;
            }
        }
        if let Some(z) = &self.zero_branches {
            acc += z.at_zero[i] * z.mass;
        }
        acc
    }

    /// ∫ o(s, t_j) dμ(s).
    pub fn column_mass(&self, j: usize) -> f64 {
        self.values.iter().zip(&self.s_weights).map(|(row, w)| row[j] * w).sum()
    }

    /// Bilinear interpolation in the bulk table.
    pub fn value_at(&self, s: f64, t: f64) -> f64 {
        let (i0, i1, a) = bracket(&self.s_grid, s);
        let (j0, j1, b) = bracket(&self.t_grid, t);
        let v = |i: usize, j: usize| self.values[i][j];
        (1.0 - a) * ((1.0 - b) * v(i0, j0) + b * v(i0, j1)) + a * ((1.0 - b) * v(i1, j0) + b * v(i1, j1))
    }
}

fn bracket(g: &[f64], x: f64) -> (usize, usize, f64) {
    let n = g.len();
    if n == 1 || x <= g[0] {
        return (0, 0, 0.0);
    }
    if x >= g[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let k = g.partition_point(|&v| v <= x) - 1;
    (k, k + 1, (x - g[k]) / (g[k + 1] - g[k]))
}

/// The conditioning points of μ: its atoms and the density nodes where the
/// density is positive, each with the μ-mass it carries.
pub fn conditioning_points(mu: &Measure) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = mu.atoms().iter().map(|a| (a.loc, a.mass)).collect();
    if let Some(d) = mu.density() {
        for ((&t, &v), &w) in d.grid().iter().zip(d.values()).zip(d.weights()) {
            if v > 0.0 && w > 0.0 && !mu.atoms().iter().any(|a| a.loc == t) {
                pts.push((t, v * w));
            }
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

/// Bulk points of a convolution output: (index into the subordination grid,
/// t, density × weight).
pub(crate) fn bulk_points(conv: &ConvolutionOutput) -> (Vec<(usize, f64, f64)>, Vec<f64>) {
    let sub = &conv.subordination;
    let mut pts = Vec::new();
    let mut gaps = Vec::new();
    let Some(d) = conv.result.density() else {
        return (pts, gaps);
    };
    let circle = sub.kind == SubordinationKind::MultiplicativeCircle;
    let mut j = 0;
    for (k, &t) in sub.grid.iter().enumerate() {
        // subordination nodes are a subsequence of the density grid
        while j < d.len() && d.grid()[j] < t {
            j += 1;
        }
        if j == d.len() || d.grid()[j] != t {
            continue;
        }
        let mut m = d.values()[j] * d.weights()[j];
        if circle && t == 0.0 {
            // the periodic copy at 2π is not a subordination node
            m += d.grid().iter().zip(d.values()).zip(d.weights()).filter(|((&g, _), _)| g >= TAU).map(|((_, v), w)| v * w).sum::<f64>();
        }
        if sub.in_u[k] {
            pts.push((k, t, m));
        } else if d.values()[j] > 0.0 {
            gaps.push(t);
        }
    }
    (pts, gaps)
}

/// Density of the target at subordination node k (extrapolated, atoms not
/// removed — they are negligible in U by construction).
pub(crate) fn node_density(conv: &ConvolutionOutput, k: usize) -> f64 {
    conv.result.density_at(conv.subordination.grid[k])
}

pub fn overlap_additive(mu: &Measure, nu: &Measure) -> Result<OverlapTable> {
    let conv = free_add_convolve(mu, nu)?;
    overlap_from(mu, &conv)
}

pub fn overlap_multiplicative(mu: &Measure, nu: &Measure) -> Result<OverlapTable> {
    let conv = free_mult_convolve_positive(mu, nu)?;
    overlap_from(mu, &conv)
}

pub fn overlap_circle(mu: &Measure, nu: &Measure) -> Result<OverlapTable> {
    let conv = free_mult_convolve_circle(mu, nu)?;
    overlap_from(mu, &conv)
}

/// Bulk value of o(s, t) given the boundary ω at t and the target density f.
pub fn bulk_overlap(kind: SubordinationKind, w: C, s: f64, t: f64, f: f64) -> f64 {
    match kind {
        SubordinationKind::Additive => -(1.0 / (w - s)).im / (PI * f),
        SubordinationKind::MultiplicativePositive => -(1.0 / (1.0 - w * s)).im / (PI * t * f),
        SubordinationKind::MultiplicativeCircle => {
            let ws = w * C::from_polar(1.0, s);
            ((1.0 + ws) / (1.0 - ws)).re / (TAU * f)
        }
    }
}

/// Overlap table of (μ, ν) from an existing convolution output of μ with ν.
pub fn overlap_from(mu: &Measure, conv: &ConvolutionOutput) -> Result<OverlapTable> {
    let (s_grid, s_weights) = conditioning_points(mu);
    overlap_on(mu, conv, s_grid, s_weights)
}

/// As `overlap_from` on a caller-chosen s grid (weights are used only by
/// `column_mass`).
pub fn overlap_on(mu: &Measure, conv: &ConvolutionOutput, s_grid: Vec<f64>, s_weights: Vec<f64>) -> Result<OverlapTable> {
    if s_grid.len() != s_weights.len() {
        return Err(Error::DimensionMismatch("s grid / weights".into()));
    }
    let sub = &conv.subordination;
    let kind = sub.kind;
    let (pts, gaps) = bulk_points(conv);
    let t_grid: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let t_weights: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let values: Vec<Vec<f64>> = s_grid
        .iter()
        .map(|&s| {
            pts.iter()
                .map(|&(k, t, _)| bulk_overlap(kind, sub.boundary1[k], s, t, node_density(conv, k)))
                .collect()
        })
        .collect();
    let atom_branches = atom_branches(mu, conv);
    let zero_branches = zero_branches(mu, conv, &s_grid);
    Ok(OverlapTable { kind, s_grid, s_weights, t_grid, t_weights, values, atom_branches, zero_branches, gaps })
}

fn atom_branches(mu: &Measure, conv: &ConvolutionOutput) -> Vec<AtomBranch> {
    let kind = conv.subordination.kind;
    conv.atom_table
        .iter()
        .filter(|r| !(kind == SubordinationKind::MultiplicativePositive && r.gamma == 0.0))
        .map(|r| {
            let m = mu.atom_mass(r.alpha, 0.0);
            check_atom_limit(conv, r.gamma, r.alpha);
            AtomBranch { gamma: r.gamma, alpha: r.alpha, value: 1.0 / m, mass: target_mass(&conv.result, r.gamma) }
        })
        .collect()
}

fn target_mass(m: &Measure, loc: f64) -> f64 {
    m.atoms().iter().filter(|a| a.loc == loc).map(|a| a.mass).sum()
}

/// The indicator in the atom branch is decided by the pairing; the limit of
/// ω at γ is only compared against it.
fn check_atom_limit(conv: &ConvolutionOutput, gamma: f64, alpha: f64) {
    let sub = &conv.subordination;
    let Some(l) = sub.atom_limits.iter().find(|l| l.gamma == gamma) else {
        return;
    };
    let (got, want) = match sub.kind {
        SubordinationKind::Additive => (l.omega1, C::new(alpha, 0.0)),
        SubordinationKind::MultiplicativePositive => (l.omega1, C::new(1.0 / alpha, 0.0)),
        SubordinationKind::MultiplicativeCircle => (l.omega1, C::from_polar(1.0, -alpha)),
    };
    let tol = 1e-6 * (1.0 + want.norm());
    if (got - want).norm() > tol {
        log::info!("ω limit at atom {gamma}: {got} (expected {want})");
    }
}

fn zero_branches(mu: &Measure, conv: &ConvolutionOutput, s_grid: &[f64]) -> Option<ZeroBranches> {
    if conv.subordination.kind != SubordinationKind::MultiplicativePositive {
        return None;
    }
    let mass = target_mass(&conv.result, 0.0);
    if mass == 0.0 {
        return None;
    }
    // the ⊠ zero atom carries max(μ({0}), ν({0})), so ν({0}) > μ({0}) iff the
    // target's zero mass exceeds μ's
    let m0 = mu.mass_at_zero();
    let n0 = if mass > m0 { mass } else { 0.0 };
    let limit = conv.subordination.zero_limit.unwrap_or(ZeroLimit::MinusInfinity);
    let at_zero = s_grid
        .iter()
        .map(|&s| {
            if s == 0.0 {
                1.0 / mass
            } else {
                match limit {
                    ZeroLimit::Value(u) if n0 > m0 => 1.0 / (n0 * (1.0 - s * u)),
                    _ => 0.0,
                }
            }
        })
        .collect();
    Some(ZeroBranches { at_zero, origin: 1.0 / mass, mass })
}

/// k_s: the conditional law of the observed element given a = s.
#[derive(Debug, Clone)]
pub struct KernelMeasure {
    pub s: f64,
    pub measure: Measure,
    /// mass before renormalization
    pub mass: f64,
}

/// k_s for the additive case: density −(1/π) Im 1/(ω(t) − s) on the bulk,
/// atoms μ⊞ν({γ})/μ({s}) where ω(γ) = s.
pub fn kernel_measure_additive(mu: &Measure, conv: &ConvolutionOutput, s: f64) -> Result<KernelMeasure> {
    if conv.subordination.kind != SubordinationKind::Additive {
        return Err(Error::UnsupportedCase("kernel_measure_additive needs an additive convolution".into()));
    }
    let sub = &conv.subordination;
    let mut atoms = Vec::new();
    for b in atom_branches(mu, conv) {
        if b.alpha == s {
            atoms.push(Atom { loc: b.gamma, mass: b.mass * b.value });
        }
    }
    let d = conv.result.density();
    let (grid, weights) = match d {
        Some(d) => (d.grid().to_vec(), d.weights().to_vec()),
        None => (vec![], vec![]),
    };
    let mut values = vec![0.0; grid.len()];
    let mut j = 0;
    for (k, &t) in sub.grid.iter().enumerate() {
        while j < grid.len() && grid[j] < t {
            j += 1;
        }
        if j < grid.len() && grid[j] == t && sub.resolved[k] {
            values[j] = (-(1.0 / (sub.boundary1[k] - s)).im / PI).max(0.0);
        }
    }
    let mass = atoms.iter().map(|a| a.mass).sum::<f64>() + values.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>();
    let (measure, _) = Measure::from_quadrature(conv.result.domain(), atoms, grid, values, weights)?;
    Ok(KernelMeasure { s, measure, mass })
}

/// Σ_{k,l} |⟨u_k, v_l⟩|²/N · δ_(λ_k, ρ_l).
#[derive(Debug, Clone)]
pub struct EmpiricalOverlap {
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    /// weights[k][l], summing to 1
    pub weights: Vec<Vec<f64>>,
}

/// `sq_overlaps[k*N + l]` = |⟨u_k, v_l⟩|² for unit eigenvectors u_k of x and
/// v_l of y.
pub fn empirical_overlap(lambda: &[f64], rho: &[f64], sq_overlaps: &[f64]) -> Result<EmpiricalOverlap> {
    let n = lambda.len();
    if rho.len() != n || sq_overlaps.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "{} and {} eigenvalues with {} overlaps",
            n,
            rho.len(),
            sq_overlaps.len()
        )));
    }
    let inv = 1.0 / n as f64;
    let weights = sq_overlaps.chunks(n).map(|r| r.iter().map(|v| v * inv).collect()).collect();
    Ok(EmpiricalOverlap { lambda: lambda.to_vec(), rho: rho.to_vec(), weights })
}

impl EmpiricalOverlap {
    pub fn marginal_x(&self) -> Vec<f64> {
        self.weights.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let n = self.rho.len();
        (0..n).map(|l| self.weights.iter().map(|r| r[l]).sum()).collect()
    }

    /// Mass per (s-bin, t-bin) and the matching product of marginals; their
    /// ratio estimates the overlap function.
    pub fn histogram(&self, s_edges: &[f64], t_edges: &[f64]) -> Histogram2 {
        let (ns, nt) = (s_edges.len().saturating_sub(1), t_edges.len().saturating_sub(1));
        let mut joint = vec![vec![0.0; nt]; ns];
        let mut ms = vec![0.0; ns];
        let mut mt = vec![0.0; nt];
        let bin = |edges: &[f64], x: f64| {
            if x < edges[0] || x > edges[edges.len() - 1] {
                return None;
            }
            Some((edges.partition_point(|&e| e <= x).max(1) - 1).min(edges.len() - 2))
        };
        let inv = 1.0 / self.lambda.len() as f64;
        let sb: Vec<Option<usize>> = self.lambda.iter().map(|&x| bin(s_edges, x)).collect();
        let tb: Vec<Option<usize>> = self.rho.iter().map(|&x| bin(t_edges, x)).collect();
        for (k, row) in self.weights.iter().enumerate() {
            if let Some(i) = sb[k] {
                ms[i] += inv;
                for (l, &w) in row.iter().enumerate() {
                    if let Some(j) = tb[l] {
                        joint[i][j] += w;
                    }
                }
            }
        }
        for b in tb.iter().flatten() {
            mt[*b] += inv;
        }
        Histogram2 { s_edges: s_edges.to_vec(), t_edges: t_edges.to_vec(), joint, s_marginal: ms, t_marginal: mt }
    }
}

#[derive(Debug, Clone)]
pub struct Histogram2 {
    pub s_edges: Vec<f64>,
    pub t_edges: Vec<f64>,
    pub joint: Vec<Vec<f64>>,
    pub s_marginal: Vec<f64>,
    pub t_marginal: Vec<f64>,
}

impl Histogram2 {
    /// joint / (marginal × marginal); NaN where a marginal is empty.
    pub fn ratio(&self) -> Vec<Vec<f64>> {
        self.joint
            .iter()
            .zip(&self.s_marginal)
            .map(|(row, &ps)| row.iter().zip(&self.t_marginal).map(|(&j, &pt)| j / (ps * pt)).collect())
            .collect()
    }
}

/// Freedman–Diaconis bin edges for a sample.
pub fn freedman_diaconis(sample: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = sample.iter().copied().filter(|v| v.is_finite()).collect();
    if x.is_empty() {
        return vec![];
    }
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let q = |p: f64| x[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let iqr = q(0.75) - q(0.25);
    let (lo, hi) = (x[0], x[n - 1]);
    let h = 2.0 * iqr / (n as f64).cbrt();
    let bins = if h > 0.0 { (((hi - lo) / h).ceil() as usize).clamp(1, 10_000) } else { 1 };
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}
