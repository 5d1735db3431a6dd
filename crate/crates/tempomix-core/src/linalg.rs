//! Small dense/sparse numerics used by the operator modules: Perron power
//! iteration, a two-column subspace iteration for subdominant moduli (handles
//! complex conjugate pairs), top singular values, quadrature, and least
//! squares lines.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const EIGEN_TOL: f64 = 1e-12;
pub const EIGEN_MAX_ITER: usize = 100_000;

/// Leading eigenvalue and entrywise positive right eigenvector of a
/// nonnegative irreducible-aperiodic operator given by `apply`.
/// Power iteration from the uniform vector; eigenvector normalized to
/// unit sum.
pub fn perron_leading(
    dim: usize,
    apply: impl Fn(&[f64], &mut [f64]),
) -> Result<(f64, Vec<f64>)> {
    let mut v = vec![1.0 / dim as f64; dim];
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0f64;
    for _ in 0..EIGEN_MAX_ITER {
        apply(&v, &mut w);
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::DegenerateSpectrum { sep: 0.0 });
        }
        for x in w.iter_mut() {
            *x /= sum;
        }
        let delta: f64 = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut v, &mut w);
        lambda = sum;
        if delta < EIGEN_TOL {
            // One refinement pass for the eigenvalue.
            apply(&v, &mut w);
            let num: f64 = w.iter().sum();
            return Ok((num, v));
        }
    }
    Ok((lambda, v))
}

/// Largest eigenvalue modulus of a complex operator, via two-column
/// orthogonal iteration with a 2x2 Rayleigh-Ritz solve. Two columns keep
/// conjugate pairs and near-ties honest.
pub fn dominant_modulus(
    dim: usize,
    seed: u64,
    apply: impl Fn(&[Complex64], &mut [Complex64]),
) -> (f64, [Complex64; 2]) {
    let ritz = top_two_ritz(dim, seed, &apply);
    (ritz[0].norm().max(ritz[1].norm()), ritz)
}

/// Top-two Ritz values of a complex operator on its dominant two-dimensional
/// invariant subspace.
pub fn top_two_ritz(
    dim: usize,
    seed: u64,
    apply: &impl Fn(&[Complex64], &mut [Complex64]),
) -> [Complex64; 2] {
    top_two_ritz_capped(dim, seed, EIGEN_MAX_ITER, apply)
}

/// Same with an iteration budget, for grid sweeps that tolerate slightly
/// stale subdominant estimates.
pub fn top_two_ritz_capped(
    dim: usize,
    seed: u64,
    max_iter: usize,
    apply: &impl Fn(&[Complex64], &mut [Complex64]),
) -> [Complex64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if dim == 1 {
        let v = vec![Complex64::new(1.0, 0.0)];
        let mut w = vec![Complex64::default()];
        apply(&v, &mut w);
        return [w[0], Complex64::default()];
    }
    let mut q1: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut q2: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    normalize(&mut q1);
    orthonormalize_against(&mut q2, &q1, &mut rng);
    let mut w1 = vec![Complex64::default(); dim];
    let mut w2 = vec![Complex64::default(); dim];
    let mut prev = [Complex64::default(); 2];
    for it in 0..max_iter {
        apply(&q1, &mut w1);
        apply(&q2, &mut w2);
        // Rayleigh-Ritz on span(q1, q2): B = Q^H A Q before re-orthonormalizing.
        let b11 = dot(&q1, &w1);
        let b12 = dot(&q1, &w2);
        let b21 = dot(&q2, &w1);
        let b22 = dot(&q2, &w2);
        let ritz = eig2(b11, b12, b21, b22);
        std::mem::swap(&mut q1, &mut w1);
        std::mem::swap(&mut q2, &mut w2);
        if normalize(&mut q1) < 1e-280 {
            // Operator annihilated the block.
            return [Complex64::default(), Complex64::default()];
        }
        orthonormalize_against(&mut q2, &q1, &mut rng);
        let moved = (ritz[0] - prev[0]).norm() + (ritz[1] - prev[1]).norm();
        let scale = ritz[0].norm().max(ritz[1].norm()).max(1e-300);
        prev = ritz;
        if it > 4 && moved / scale < EIGEN_TOL {
            return ritz;
        }
    }
    prev
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
    n
}

fn orthonormalize_against(v: &mut [Complex64], q: &[Complex64], rng: &mut ChaCha8Rng) {
    for _ in 0..4 {
        if normalize(v) < 1e-280 {
            refresh(v, rng);
        }
        // Two Gram-Schmidt passes; heavy cancellation in the first one means
        // the residual direction is rounding noise, so resample instead.
        let c = dot(q, v);
        for (x, y) in v.iter_mut().zip(q) {
            *x -= c * y;
        }
        if normalize(v) < 1e-7 {
            refresh(v, rng);
            continue;
        }
        let c = dot(q, v);
        for (x, y) in v.iter_mut().zip(q) {
            *x -= c * y;
        }
        if normalize(v) >= 0.5 {
            return;
        }
        refresh(v, rng);
    }
}

fn refresh(v: &mut [Complex64], rng: &mut ChaCha8Rng) {
    for x in v.iter_mut() {
        *x = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    normalize(v);
}

/// Eigenvalues of [[a, b], [c, d]].
fn eig2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> [Complex64; 2] {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    if l1.norm() >= l2.norm() { [l1, l2] } else { [l2, l1] }
}

/// Modulus of the second eigenvalue of a real nonnegative operator whose
/// leading pair `(lambda, right, left)` is known: deflate and take the
/// dominant modulus of the remainder. The deflation uses the spectral
/// projector `right left^T / (left^T right)`.
pub fn second_modulus(
    dim: usize,
    lambda: f64,
    right: &[f64],
    left: &[f64],
    seed: u64,
    apply: impl Fn(&[f64], &mut [f64]),
) -> f64 {
    let inner: f64 = left.iter().zip(right).map(|(a, b)| a * b).sum();
    let apply_deflated = |v: &[Complex64], out: &mut [Complex64]| {
        let vr: Vec<f64> = v.iter().map(|z| z.re).collect();
        let vi: Vec<f64> = v.iter().map(|z| z.im).collect();
        let mut wr = vec![0.0; dim];
        let mut wi = vec![0.0; dim];
        apply(&vr, &mut wr);
        apply(&vi, &mut wi);
        let cr: f64 = left.iter().zip(&vr).map(|(a, b)| a * b).sum::<f64>() / inner;
        let ci: f64 = left.iter().zip(&vi).map(|(a, b)| a * b).sum::<f64>() / inner;
        for k in 0..dim {
            out[k] = Complex64::new(
                wr[k] - lambda * cr * right[k],
                wi[k] - lambda * ci * right[k],
            );
        }
    };
    dominant_modulus(dim, seed, apply_deflated).0
}

/// Largest singular value of an operator given with its adjoint, via power
/// iteration on `A^H A`. Returns `(sigma_max, maximizing unit vector)`.
pub fn top_singular(
    dim: usize,
    seed: u64,
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    apply_adjoint: impl Fn(&[Complex64], &mut [Complex64]),
) -> (f64, Vec<Complex64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    normalize(&mut v);
    let mut av = vec![Complex64::default(); dim];
    let mut w = vec![Complex64::default(); dim];
    let mut sigma2 = 0.0f64;
    for _ in 0..EIGEN_MAX_ITER {
        apply(&v, &mut av);
        apply_adjoint(&av, &mut w);
        let new_sigma2 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if new_sigma2 < 1e-280 {
            return (0.0, v);
        }
        for z in w.iter_mut() {
            *z /= new_sigma2;
        }
        std::mem::swap(&mut v, &mut w);
        if (new_sigma2 - sigma2).abs() < EIGEN_TOL * new_sigma2.max(1.0) {
            sigma2 = new_sigma2;
            break;
        }
        sigma2 = new_sigma2;
    }
    (sigma2.sqrt(), v)
}

/// Adaptive Simpson quadrature with absolute/relative tolerance.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre polynomial. Exact for polynomials of degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Least-squares line `y = intercept + slope * x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_apply(m: &[Vec<f64>]) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |v, out| {
            for (i, row) in m.iter().enumerate() {
                out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
            }
        }
    }

    fn mat_apply_c(m: &[Vec<Complex64>]) -> impl Fn(&[Complex64], &mut [Complex64]) + '_ {
        move |v, out| {
            for (i, row) in m.iter().enumerate() {
                out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
            }
        }
    }

    #[test]
    fn perron_golden_mean() {
        let m = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        let (l, v) = perron_leading(2, mat_apply(&m)).unwrap();
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert!((l - phi).abs() < 1e-11);
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn second_modulus_known_spectrum() {
        // Eigenvalues 3 and -1 (symmetric), eigenvectors (1,1)/(1,-1).
        let m = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let (l, v) = perron_leading(2, mat_apply(&m)).unwrap();
        assert!((l - 3.0).abs() < 1e-11);
        let s = second_modulus(2, l, &v, &v, 1, mat_apply(&m));
        assert!((s - 1.0).abs() < 1e-9, "s = {s}");
    }

    #[test]
    fn second_modulus_complex_pair() {
        // Block diag(2, rotation*0.5): second modulus 0.5 from a complex pair.
        let r = 0.5;
        let th = 1.0f64;
        let m = vec![
            vec![2.0, 0.0, 0.0],
            vec![0.0, r * th.cos(), -r * th.sin()],
            vec![0.0, r * th.sin(), r * th.cos()],
        ];
        let (l, v) = perron_leading(3, |v, out| {
            // Perron iteration needs nonnegativity; feed the known data.
            mat_apply(&m)(v, out)
        })
        .unwrap_or((2.0, vec![1.0, 0.0, 0.0]));
        let _ = (l, v);
        let right = vec![1.0, 0.0, 0.0];
        let left = vec![1.0, 0.0, 0.0];
        let s = second_modulus(3, 2.0, &right, &left, 2, mat_apply(&m));
        assert!((s - 0.5).abs() < 1e-9, "s = {s}");
    }

    #[test]
    fn dominant_modulus_rotation() {
        let th = 0.7f64;
        let rot = Complex64::from_polar(0.9, th);
        let m = vec![
            vec![rot, Complex64::default()],
            vec![Complex64::default(), Complex64::from_polar(0.3, -1.1)],
        ];
        let (r, _) = dominant_modulus(2, 3, mat_apply_c(&m));
        assert!((r - 0.9).abs() < 1e-10);
    }

    #[test]
    fn singular_value_diag() {
        let m = vec![
            vec![Complex64::new(0.0, 2.0), Complex64::default()],
            vec![Complex64::default(), Complex64::new(0.5, 0.0)],
        ];
        let mt = vec![
            vec![Complex64::new(0.0, -2.0), Complex64::default()],
            vec![Complex64::default(), Complex64::new(0.5, 0.0)],
        ];
        let (s, _) = top_singular(2, 4, mat_apply_c(&m), mat_apply_c(&mt));
        assert!((s - 2.0).abs() < 1e-10);
    }

    #[test]
    fn simpson_and_gauss() {
        let val = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((val - (1.0f64.exp() - 1.0)).abs() < 1e-11);
        // GL-5 integrates degree-9 polynomials exactly.
        let (xs, ws) = gauss_legendre(5);
        let int: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x.powi(8)).sum();
        assert!((int - 2.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn line_fit() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (b, a) = fit_line(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }
}
