//! Dense decompositions on column-major storage.

use faer::{Mat, Par, Side};
use freedenoise_core::{Error, Result};
use num_complex::Complex64 as C;
use rand::Rng;
use rand_distr::StandardNormal;

/// Keep the kernels single-threaded: trials run in parallel already, and a
/// fixed reduction order keeps results bit-reproducible.
pub fn sequential_kernels() {
    faer::set_global_parallelism(Par::Seq);
}

fn evd_err(e: impl std::fmt::Debug) -> Error {
    log::error!("eigendecomposition failed: {e:?}");
    Error::NoConvergence { iterations: 0, residual: f64::NAN }
}

fn to_mat<T: Copy>(a: &[T], n: usize) -> Mat<T>
where
    T: faer::traits::ComplexField,
{
    Mat::from_fn(n, n, |i, j| a[j * n + i])
}

fn from_mat<T: Copy>(m: faer::MatRef<'_, T>) -> Vec<T> {
    let (r, c) = (m.nrows(), m.ncols());
    (0..r * c).map(|k| m[(k % r, k / r)]).collect()
}

/// Eigenvalues ascending, eigenvectors as columns (lower triangle read).
pub fn sym_eig(a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n);
    let e = to_mat(&a, n).self_adjoint_eigen(Side::Lower).map_err(evd_err)?;
    let w = e.S().column_vector().iter().copied().collect();
    Ok((w, from_mat(e.U())))
}

/// Hermitian eigenproblem (lower triangle read).
pub fn herm_eig(a: Vec<C>, n: usize) -> Result<(Vec<f64>, Vec<C>)> {
    assert_eq!(a.len(), n * n);
    let e = to_mat(&a, n).self_adjoint_eigen(Side::Lower).map_err(evd_err)?;
    let w = e.S().column_vector().iter().map(|z| z.re).collect();
    Ok((w, from_mat(e.U())))
}

/// Eigenpairs of a unitary matrix. The eigenvalues of a Haar sample are
/// simple, so unit-normalised eigenvectors are orthonormal up to rounding
/// divided by the spectral gap.
pub fn unitary_eig(a: Vec<C>, n: usize) -> Result<(Vec<C>, Vec<C>)> {
    assert_eq!(a.len(), n * n);
    let e = to_mat(&a, n).eigen().map_err(evd_err)?;
    let w: Vec<C> = e.S().column_vector().iter().copied().collect();
    let mut v = from_mat(e.U());
    for col in v.chunks_mut(n) {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.iter_mut().for_each(|z| *z /= norm);
    }
    Ok((w, v))
}

/// Standard complex Gaussian: E|z|² = 1.
pub fn complex_gaussian(rng: &mut impl Rng) -> C {
    let (x, y): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
    C::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar unitary: QR of a complex Ginibre matrix with R's diagonal phases
/// moved into Q.
pub fn haar_unitary(rng: &mut impl Rng, n: usize) -> Result<Vec<C>> {
    let a: Vec<C> = (0..n * n).map(|_| complex_gaussian(rng)).collect();
    let qr = to_mat(&a, n).qr();
    let r = qr.R();
    let mut q = from_mat(qr.compute_Q().as_ref());
    for (j, col) in q.chunks_mut(n).enumerate() {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C::new(1.0, 0.0) };
        col.iter_mut().for_each(|x| *x *= ph);
    }
    Ok(q)
}

/// X X* / scale for X n×p (column-major), full matrix.
pub fn gram(x: &[C], n: usize, p: usize, scale: f64) -> Vec<C> {
    assert_eq!(x.len(), n * p);
    let xm = Mat::from_fn(n, p, |i, j| x[j * n + i]);
    let g = &xm * xm.adjoint();
    let s = 1.0 / scale;
    from_mat(g.as_ref()).into_iter().map(|z| z * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn symmetric_eigenpairs() {
        // [[2,1],[1,2]] → 1, 3
        let (w, v) = sym_eig(vec![2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 3.0).abs() < 1e-14);
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn large_symmetric_residual() {
        // the blocked paths only kick in for larger n
        let n = 300;
        let mut r = rng();
        let mut a = vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                let x: f64 = r.sample(StandardNormal);
                a[j * n + i] = x;
                a[i * n + j] = x;
            }
        }
        let (w, v) = sym_eig(a.clone(), n).unwrap();
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        assert!((w.iter().sum::<f64>() - trace).abs() < 1e-9);
        for k in [0, n / 2, n - 1] {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[j * n + i] * v[k * n + j]).sum();
                assert!((av - w[k] * v[k * n + i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn haar_is_unitary() {
        let n = 12;
        let u = haar_unitary(&mut rng(), n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let dot: C = (0..n).map(|k| u[i * n + k].conj() * u[j * n + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_eigenvectors_are_orthonormal() {
        let n = 40;
        let u = haar_unitary(&mut rng(), n).unwrap();
        let (w, z) = unitary_eig(u.clone(), n).unwrap();
        for (k, wk) in w.iter().enumerate() {
            assert!((wk.norm() - 1.0).abs() < 1e-12);
            for i in 0..n {
                let uz: C = (0..n).map(|j| u[j * n + i] * z[k * n + j]).sum();
                assert!((uz - wk * z[k * n + i]).norm() < 1e-10);
            }
            for l in 0..k {
                let dot: C = (0..n).map(|i| z[l * n + i].conj() * z[k * n + i]).sum();
                assert!(dot.norm() < 1e-8);
            }
        }
    }

    #[test]
    fn gram_matches_direct_product() {
        let (n, p) = (3, 5);
        let mut r = rng();
        let x: Vec<C> = (0..n * p).map(|_| complex_gaussian(&mut r)).collect();
        let c = gram(&x, n, p, 2.0);
        for i in 0..n {
            for j in 0..n {
                let d: C = (0..p).map(|k| x[k * n + i] * x[k * n + j].conj()).sum::<C>() / 2.0;
                assert!((c[j * n + i] - d).norm() < 1e-13);
            }
        }
        let (w, _) = herm_eig(c, n).unwrap();
        assert!(w.iter().all(|&l| l > -1e-12));
    }
}
