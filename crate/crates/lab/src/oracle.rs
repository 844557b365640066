use crate::linalg;
use crate::model::{Observed, Sample};
use freedenoise_core::{Error, Result};
use num_complex::Complex64 as C;
use std::f64::consts::TAU;

/// Eigen-decomposition of an observed matrix, sorted by eigenvalue (by
/// angle in [0, 2π) for a unitary).
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub n: usize,
    /// real eigenvalue or angle
    pub points: Vec<f64>,
    /// eigenvalue in ℂ (λ or e^{iθ})
    pub values: Vec<C>,
    /// eigenvectors as columns
    pub vectors: Vec<C>,
}

impl Decomposition {
    /// |⟨eⱼ, vᵢ⟩|², column i
    pub fn squared_overlaps(&self) -> Vec<f64> {
        self.vectors.iter().map(|z| z.norm_sqr()).collect()
    }
}

pub fn decompose(c: &Observed, n: usize) -> Result<Decomposition> {
    let (points, values, vectors) = match c {
        Observed::Real(m) => {
            let (w, v) = linalg::sym_eig(m.clone(), n)?;
            let vals = w.iter().map(|&x| C::new(x, 0.0)).collect();
            (w, vals, v.into_iter().map(|x| C::new(x, 0.0)).collect())
        }
        Observed::Hermitian(m) => {
            let (w, v) = linalg::herm_eig(m.clone(), n)?;
            let vals = w.iter().map(|&x| C::new(x, 0.0)).collect();
            (w, vals, v)
        }
        Observed::Normal(m) => {
            let (w, z) = linalg::unitary_eig(m.clone(), n)?;
            let ang: Vec<f64> = w.iter().map(|x| x.arg().rem_euclid(TAU)).collect();
            (ang, w, z)
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| points[i].total_cmp(&points[j]));
    let mut vecs = Vec::with_capacity(n * n);
    for &i in &order {
        vecs.extend_from_slice(&vectors[i * n..(i + 1) * n]);
    }
    Ok(Decomposition {
        n,
        points: order.iter().map(|&i| points[i]).collect(),
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: vecs,
    })
}

/// Per-eigenvector oracle values ξᵢ = ⟨vᵢ, A vᵢ⟩ at the sorted eigenvalues.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub points: Vec<f64>,
    pub values: Vec<C>,
    pub xi: Vec<C>,
}

/// Average ξ over numerically tied eigenvalues (|Δ| ≤ tol, consecutive).
pub fn group_ties(points: &[f64], xi: &mut [C], tol: f64) {
    let mut s = 0;
    while s < points.len() {
        let mut e = s + 1;
        while e < points.len() && points[e] - points[e - 1] <= tol {
            e += 1;
        }
        if e - s > 1 {
            let mean = xi[s..e].iter().sum::<C>() / (e - s) as f64;
            xi[s..e].iter_mut().for_each(|x| *x = mean);
        }
        s = e;
    }
}

fn tie_tol(d: &Decomposition) -> f64 {
    1e-10 * d.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

/// Oracle values for dense A and C.
pub fn oracle_rie(a: &Observed, c: &Observed, n: usize) -> Result<Oracle> {
    let len = |m: &Observed| match m {
        Observed::Real(v) => v.len(),
        Observed::Hermitian(v) | Observed::Normal(v) => v.len(),
    };
    if len(a) != n * n || len(c) != n * n {
        return Err(Error::DimensionMismatch(format!("A has {} entries, C has {}, N = {n}", len(a), len(c))));
    }
    let d = decompose(c, n)?;
    let entry = |i: usize, j: usize| -> C {
        match a {
            Observed::Real(v) => C::new(v[j * n + i], 0.0),
            Observed::Hermitian(v) | Observed::Normal(v) => v[j * n + i],
        }
    };
    let mut xi: Vec<C> = (0..n)
        .map(|k| {
            let v = &d.vectors[k * n..(k + 1) * n];
            let mut acc = C::new(0.0, 0.0);
            for j in 0..n {
                let av: C = (0..n).map(|i| entry(j, i) * v[i]).sum();
                acc += v[j].conj() * av;
            }
            acc
        })
        .collect();
    group_ties(&d.points, &mut xi, tie_tol(&d));
    Ok(Oracle { points: d.points, values: d.values, xi })
}

impl Sample {
    /// Oracle values using that A is diagonal: ξᵢ = Σⱼ aⱼ|vᵢ(j)|².
    pub fn oracle(&self, d: &Decomposition) -> Oracle {
        let n = self.n;
        let mut xi: Vec<C> = (0..n)
            .map(|k| d.vectors[k * n..(k + 1) * n].iter().zip(&self.a).map(|(v, a)| a * v.norm_sqr()).sum())
            .collect();
        group_ties(&d.points, &mut xi, tie_tol(d));
        Oracle { points: d.points.clone(), values: d.values.clone(), xi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_matrices() {
        // C = A → ξᵢ = λᵢ
        let a = vec![2.0, 0.5, 0.5, -1.0];
        let o = oracle_rie(&Observed::Real(a.clone()), &Observed::Real(a), 2).unwrap();
        for (p, x) in o.points.iter().zip(&o.xi) {
            assert!((x.re - p).abs() < 1e-14 && x.im == 0.0);
        }
    }

    #[test]
    fn commuting_diagonals() {
        let a = vec![1.0, 0.0, 0.0, 5.0];
        let c = vec![7.0, 0.0, 0.0, 3.0];
        let o = oracle_rie(&Observed::Real(a), &Observed::Real(c), 2).unwrap();
        assert_eq!(o.points, [3.0, 7.0]);
        assert_eq!(o.xi, [C::new(5.0, 0.0), C::new(1.0, 0.0)]);
    }

    #[test]
    fn two_by_two_by_hand() {
        // A = diag(0,1), C = A + [[0,1],[1,0]]: eigenvectors of [[0,1],[1,1]]
        let a = vec![0.0, 0.0, 0.0, 1.0];
        let c = vec![0.0, 1.0, 1.0, 1.0];
        let o = oracle_rie(&Observed::Real(a), &Observed::Real(c), 2).unwrap();
        let s5 = 5f64.sqrt();
        for (l, x) in o.points.iter().zip(&o.xi) {
            // v ∝ (1, λ): ξ = λ²/(1+λ²)
            assert!((x.re - l * l / (1.0 + l * l)).abs() < 1e-14);
        }
        assert!((o.points[0] - (1.0 - s5) / 2.0).abs() < 1e-14);
        assert!(matches!(oracle_rie(&Observed::Real(vec![0.0; 4]), &Observed::Real(vec![0.0; 9]), 2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn ties_are_averaged() {
        // C = I: one eigenspace, ξ = Tr A / N for every vector
        let a = vec![1.0, 0.0, 0.0, 3.0];
        let c = vec![1.0, 0.0, 0.0, 1.0];
        let o = oracle_rie(&Observed::Real(a), &Observed::Real(c), 2).unwrap();
        assert!(o.xi.iter().all(|x| (x.re - 2.0).abs() < 1e-14));
    }
}
