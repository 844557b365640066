//! Product-integration kernels for piecewise-linear densities.
//!
//! `LineKernel` evaluates ∫ v(s)/(z−s) ds exactly for a piecewise-linear v,
//! switching to panel multipole expansions for far-away panels. `CircleKernel`
//! does the same for ∫ v(θ) wζ/(1−wζ) dθ, ζ = e^{iθ}.

use num_complex::Complex64 as C;
use std::sync::OnceLock;

const NTERMS: usize = 25;
const CELLS_PER_PANEL: usize = 32;
const FAR: f64 = 3.0;
const GL_POINTS: usize = 16;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

pub(crate) fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(GL_POINTS))
}

/// log(1+u), accurate for small |u|.
pub(crate) fn clog1p(u: C) -> C {
    let (x, y) = (u.re, u.im);
    C::new(0.5 * (2.0 * x + x * x + y * y).ln_1p(), y.atan2(1.0 + x))
}

/// log(p/q) for p, q in a common open half-plane.
fn log_ratio(p: C, q: C) -> C {
    let u = (p - q) / q;
    if u.norm_sqr() < 0.25 {
        clog1p(u)
    } else {
        p.ln() - q.ln()
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    a: f64,
    b: f64,
    va: C,
    vb: C,
}

impl Cell {
    fn h(&self) -> f64 {
        self.b - self.a
    }
    fn mid(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
    fn fm(&self) -> C {
        (self.va + self.vb) * 0.5
    }
    fn slope(&self) -> C {
        (self.vb - self.va) / self.h()
    }
}

/// Drop all-zero cells and merge runs of collinear cells.
fn build_cells(grid: &[f64], values: &[C]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = Vec::new();
    for k in 0..grid.len().saturating_sub(1) {
        let c = Cell { a: grid[k], b: grid[k + 1], va: values[k], vb: values[k + 1] };
        if c.va == C::new(0.0, 0.0) && c.vb == C::new(0.0, 0.0) {
            continue;
        }
        if let Some(last) = cells.last_mut() {
            if last.b == c.a && last.vb == c.va {
                let (s1, s2) = (last.slope(), c.slope());
                let scale = s1.norm().max(s2.norm()).max(1e-300);
                if (s1 - s2).norm() <= 1e-13 * scale || (s1.norm() == 0.0 && s2.norm() == 0.0) {
                    last.b = c.b;
                    last.vb = c.vb;
                    continue;
                }
            }
        }
        cells.push(c);
    }
    cells
}

/// Quadratic piece c0 + c1(s−m) + c2(s−m)² on [a, b], m the midpoint.
#[derive(Debug, Clone, Copy)]
struct QCell {
    a: f64,
    b: f64,
    c: [C; 3],
}

impl QCell {
    fn h(&self) -> f64 {
        self.b - self.a
    }
    fn mid(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
    fn at(&self, s: f64) -> C {
        let u = s - self.mid();
        self.c[0] + (self.c[1] + self.c[2] * u) * u
    }
}

#[derive(Debug, Clone)]
struct Panel {
    c: f64,
    r: f64,
    lo: usize,
    hi: usize,
    m: [C; NTERMS],
}

#[derive(Debug, Clone)]
pub(crate) struct LineKernel {
    cells: Vec<QCell>,
    panels: Vec<Panel>,
}

impl LineKernel {
    /// Piecewise-linear v with nodal values `values`.
    pub fn new(grid: &[f64], values: &[C]) -> Self {
        let cells = build_cells(grid, values)
            .into_iter()
            .map(|c| QCell { a: c.a, b: c.b, c: [c.fm(), c.slope(), C::new(0.0, 0.0)] })
            .collect();
        Self::from_cells(cells)
    }

    /// Product f·ρ of two piecewise-linear functions on the same grid.
    pub fn product(grid: &[f64], f: &[C], rho: &[f64]) -> Self {
        let mut cells = Vec::new();
        for k in 0..grid.len().saturating_sub(1) {
            if rho[k] == 0.0 && rho[k + 1] == 0.0 {
                continue;
            }
            let h = grid[k + 1] - grid[k];
            let (fm, fs) = ((f[k] + f[k + 1]) * 0.5, (f[k + 1] - f[k]) / h);
            let (rm, rs) = (0.5 * (rho[k] + rho[k + 1]), (rho[k + 1] - rho[k]) / h);
            cells.push(QCell { a: grid[k], b: grid[k + 1], c: [fm * rm, fm * rs + fs * rm, fs * rs] });
        }
        Self::from_cells(cells)
    }

    fn from_cells(cells: Vec<QCell>) -> Self {
        let (gx, gw) = gl16();
        let mut panels = Vec::new();
        let mut lo = 0;
        while lo < cells.len() {
            let hi = (lo + CELLS_PER_PANEL).min(cells.len());
            let a = cells[lo].a;
            let b = cells[hi - 1].b;
            let c = 0.5 * (a + b);
            let r = 0.5 * (b - a);
            let mut m = [C::new(0.0, 0.0); NTERMS];
            for cell in &cells[lo..hi] {
                let (hm, mid) = (0.5 * cell.h(), cell.mid());
                for (x, w) in gx.iter().zip(gw) {
                    let s = mid + hm * x;
                    let f = cell.at(s) * (hm * w);
                    let d = s - c;
                    let mut p = 1.0;
                    for mj in m.iter_mut() {
                        *mj += f * p;
                        p *= d;
                    }
                }
            }
            panels.push(Panel { c, r, lo, hi, m });
            lo = hi;
        }
        LineKernel { cells, panels }
    }

    /// Whether real x lies in a cell carrying weight.
    pub fn covers(&self, x: f64) -> bool {
        self.cells.iter().any(|c| c.a <= x && x <= c.b)
    }

    /// (∫ v(s)/(z−s) ds, d/dz of it).
    pub fn eval(&self, z: C) -> (C, C) {
        let mut g = C::new(0.0, 0.0);
        let mut gp = C::new(0.0, 0.0);
        for p in &self.panels {
            let w = z - p.c;
            if w.norm() > FAR * p.r {
                let inv = w.inv();
                let mut s = C::new(0.0, 0.0);
                let mut sp = C::new(0.0, 0.0);
                for j in (0..NTERMS).rev() {
                    s = s * inv + p.m[j];
                    sp = sp * inv + p.m[j] * (j as f64 + 1.0);
                }
                g += s * inv;
                gp -= sp * inv * inv;
            } else {
                for cell in &self.cells[p.lo..p.hi] {
                    let h = cell.h();
                    let za = z - cell.a;
                    let zb = z - cell.b;
                    let d = log_ratio(za, zb);
                    let w = z - cell.mid();
                    let [c0, c1, c2] = cell.c;
                    // ∫(s−m)^j/(z−s): d, wd − h, w(wd − h)
                    let i1 = w * d - h;
                    g += c0 * d + c1 * i1 + c2 * (w * i1);
                    let dd = -h / (za * zb);
                    let di1 = d + w * dd;
                    gp += c0 * dd + c1 * di1 + c2 * (i1 + w * di1);
                }
            }
        }
        (g, gp)
    }

    /// Raw moments ∫ s^k v(s) ds for k < 25.
    pub fn raw_moments(&self, kmax: usize) -> Vec<C> {
        let kmax = kmax.min(NTERMS - 1);
        let mut out = vec![C::new(0.0, 0.0); kmax + 1];
        for p in &self.panels {
            for (k, o) in out.iter_mut().enumerate() {
                let mut binom = 1.0;
                for j in 0..=k {
                    *o += p.m[j] * binom * p.c.powi((k - j) as i32);
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct CCell {
    ea: C,
    eb: C,
    em: C,
    h: f64,
    fm: C,
    slope: C,
    m: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CircleKernel {
    cells: Vec<CCell>,
}

impl CircleKernel {
    pub fn new(grid: &[f64], values: &[C]) -> Self {
        let cells = build_cells(grid, values)
            .into_iter()
            .map(|c| CCell {
                ea: C::from_polar(1.0, c.a),
                eb: C::from_polar(1.0, c.b),
                em: C::from_polar(1.0, c.mid()),
                h: c.h(),
                fm: c.fm(),
                slope: c.slope(),
                m: c.mid(),
            })
            .collect();
        CircleKernel { cells }
    }

    /// (∫ v(θ) wζ/(1−wζ) dθ, d/dw of it) for |w| < 1.
    pub fn eval(&self, w: C) -> (C, C) {
        let i = C::new(0.0, 1.0);
        let one = C::new(1.0, 0.0);
        let mut psi = C::new(0.0, 0.0);
        let mut dpsi = C::new(0.0, 0.0);
        for c in &self.cells {
            let qa = one - w * c.ea;
            let qb = one - w * c.eb;
            let qm = one - w * c.em;
            let la = clog1p(-w * c.ea);
            let lb = clog1p(-w * c.eb);
            let lm = clog1p(-w * c.em);
            let diff = log_ratio(qb, qa);
            let lin = (la + lb - lm * 2.0) * (c.h / 3.0);
            psi += i * (c.fm * diff + c.slope * lin);
            let dla = -c.ea / qa;
            let dlb = -c.eb / qb;
            let dlm = -c.em / qm;
            let dlin = (dla + dlb - dlm * 2.0) * (c.h / 3.0);
            dpsi += i * (c.fm * (dlb - dla) + c.slope * dlin);
        }
        (psi, dpsi)
    }

    /// Fourier moments ∫ v(θ) e^{inθ} dθ, n = 0..=nmax.
    pub fn moments(&self, nmax: usize) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); nmax + 1];
        for c in &self.cells {
            out[0] += c.fm * c.h;
            for (n, o) in out.iter_mut().enumerate().skip(1) {
                let nf = n as f64;
                let x = 0.5 * nf * c.h;
                let e = C::from_polar(1.0, nf * c.m);
                let i0 = e * (2.0 * x.sin() / nf);
                let i1 = e * C::new(0.0, -(c.h * x.cos() - 2.0 * x.sin() / nf) / nf);
                *o += c.fm * i0 + c.slope * i1;
            }
        }
        out
    }
}
