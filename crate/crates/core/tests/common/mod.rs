//! Reference computations written without the crate's linear algebra, used
//! to check it. Plain `Vec<Vec<f64>>` throughout.

#![allow(dead_code)]

pub mod uci;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type Mat = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Mat {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

/// Characteristic polynomial coefficients, highest degree first (monic),
/// by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[0] = 1.0;
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A·M_{k−1} + c_{k−1}·I
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += coeffs[k - 1];
        }
        let am = matmul(a, &next);
        let tr: f64 = (0..n).map(|i| am[i][i]).sum();
        coeffs[k] = -tr / k as f64;
        m = next;
    }
    coeffs
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of a monic polynomial: Durand–Kerner, then Newton polishing.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let bound = 1.0 + coeffs[1..].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| seed.powu(k as u32) * bound.min(2.0))
        .collect();
    for _ in 0..5000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, _) = horner(coeffs, z[i]);
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            let step = p / denom;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..5 {
            let (p, dp) = horner(coeffs, *r);
            if dp.norm() == 0.0 {
                break;
            }
            *r -= p / dp;
        }
    }
    z
}

pub fn oracle_spectral_radius(a: &DMatrix<f64>) -> f64 {
    poly_roots(&char_poly(&to_rows(a)))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(s: &Mat) -> Vec<f64> {
    let n = s.len();
    let mut a = s.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub fn oracle_sigma_max(a: &DMatrix<f64>) -> f64 {
    let rows = to_rows(a);
    let n = a.ncols();
    let ata: Mat = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| rows.iter().map(|r| r[i] * r[j]).sum())
                .collect()
        })
        .collect();
    jacobi_eigenvalues(&ata)
        .into_iter()
        .fold(0.0, f64::max)
        .max(0.0)
        .sqrt()
}

/// Solves `A·X = B` by Gauss–Jordan elimination with partial pivoting.
pub fn solve(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Mat = a
        .iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().chain(rb).copied().collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..n + m {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Exponentially weighted ridge solution that RLS with forgetting factor
/// `lambda` and `S⁻¹(0) = δ⁻¹·I` reaches after samples `xs`, `ys`:
/// sample n gets weight `λ^(N−n)` and the prior `δ·I` decays to `λ^N·δ·I`.
/// Returns `W_out` as rows (N_Y × F).
pub fn oracle_weighted_ridge(xs: &[Vec<f64>], ys: &[Vec<f64>], delta: f64, lambda: f64) -> Mat {
    let n = xs.len();
    let f = xs[0].len();
    let ny = ys[0].len();
    let mut r = vec![vec![0.0; f]; f];
    let mut p = vec![vec![0.0; ny]; f];
    for (k, (x, y)) in xs.iter().zip(ys).enumerate() {
        let w = lambda.powi((n - 1 - k) as i32);
        for i in 0..f {
            for j in 0..f {
                r[i][j] += w * x[i] * x[j];
            }
            for j in 0..ny {
                p[i][j] += w * x[i] * y[j];
            }
        }
    }
    let prior = lambda.powi(n as i32) * delta;
    for (i, row) in r.iter_mut().enumerate() {
        row[i] += prior;
    }
    // R is symmetric, so W_outᵀ = R⁻¹·P
    let wt = solve(&r, &p);
    (0..ny)
        .map(|o| (0..f).map(|i| wt[i][o]).collect())
        .collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &Mat) -> f64 {
    let mut m = 0.0f64;
    for (i, row) in b.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m = m.max((a[(i, j)] - v).abs());
        }
    }
    m
}

/// Upper tail `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for k in successes..=n {
        total += binom(n, k);
    }
    total / 2f64.powi(n as i32)
}

pub fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
