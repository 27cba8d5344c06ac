//! Linear readout `y = W_out·x`, its online RLS trainer and a closed-form
//! ridge solver used for batch fits and as the RLS reference.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Forgetting factor used unless configured otherwise.
pub const DEFAULT_LAMBDA: f64 = 0.9999995;

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub w_out: DMatrix<f64>,
}

impl Readout {
    pub fn zeros(n_outputs: usize, n_features: usize) -> Self {
        Readout {
            w_out: DMatrix::zeros(n_outputs, n_features),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.w_out.ncols()
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                context: "readout input",
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(&self.w_out * x)
    }

    /// `predict` on a slice, writing into `out` (length N_Y).
    #[inline]
    pub(crate) fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            let col = self.w_out.column(j);
            for (o, &w) in out.iter_mut().zip(col.iter()) {
                *o += w * xj;
            }
        }
    }
}

/// Running inverse-correlation estimate `S⁻¹(n)` of RLS.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    pub s_inv: DMatrix<f64>,
    pub lambda: f64,
    pub delta: f64,
    pub n: u64,
    phi: Vec<f64>,
    pred: Vec<f64>,
}

/// `S⁻¹(0) = δ⁻¹·I`.
pub fn rls_init(delta: f64, n_features: usize, lambda: f64) -> Result<RlsState> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidHyperparameter(format!(
            "lambda must lie in (0, 1], got {lambda}"
        )));
    }
    Ok(RlsState {
        s_inv: DMatrix::identity(n_features, n_features) / delta,
        lambda,
        delta,
        n: 0,
        phi: vec![0.0; n_features],
        pred: Vec::new(),
    })
}

impl RlsState {
    pub fn n_features(&self) -> usize {
        self.s_inv.nrows()
    }

    /// One RLS update on `(x, y*)`; returns the a-priori error `e(n)`.
    ///
    /// ```text
    /// e    = y* − W_out·x
    /// Φ    = S⁻¹·x                        (N_R vector)
    /// K    = Φ / (λ + Φᵀx)                (scalar denominator)
    /// S⁻¹ ← λ⁻¹ (S⁻¹ − K·Φᵀ)              (outer product)
    /// W_out ← W_out + e·Kᵀ
    /// ```
    ///
    /// `K·Φᵀ = Φ·Φᵀ / (λ + Φᵀx)` is symmetric, so only the upper triangle is
    /// computed and mirrored; `S⁻¹` stays exactly symmetric.
    pub fn step(
        &mut self,
        readout: &mut Readout,
        x: &[f64],
        y_target: &[f64],
        error_out: &mut [f64],
    ) -> Result<()> {
        let n = self.n_features();
        if x.len() != n || readout.n_features() != n {
            return Err(Error::DimensionMismatch {
                context: "RLS features",
                expected: n,
                got: x.len(),
            });
        }
        let n_y = readout.n_outputs();
        if y_target.len() != n_y || error_out.len() != n_y {
            return Err(Error::DimensionMismatch {
                context: "RLS targets",
                expected: n_y,
                got: y_target.len(),
            });
        }
        self.pred.resize(n_y, 0.0);
        readout.predict_into(x, &mut self.pred);
        for ((e, &y), &p) in error_out.iter_mut().zip(y_target).zip(&self.pred) {
            *e = y - p;
        }

        // S⁻¹ is symmetric, so S⁻¹·x can be accumulated column by column
        self.phi.iter_mut().for_each(|p| *p = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = self.s_inv.column(j);
            for (p, &s) in self.phi.iter_mut().zip(col.iter()) {
                *p += s * xj;
            }
        }
        let denom = self.lambda + self.phi.iter().zip(x).map(|(p, xi)| p * xi).sum::<f64>();
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::NumericalBreakdown(format!(
                "RLS gain denominator {denom} at step {}",
                self.n + 1
            )));
        }
        let inv_lambda = 1.0 / self.lambda;
        for j in 0..n {
            let kj = self.phi[j] / denom;
            for i in 0..=j {
                let v = (self.s_inv[(i, j)] - self.phi[i] * kj) * inv_lambda;
                self.s_inv[(i, j)] = v;
            }
        }
        for j in 0..n {
            for i in (j + 1)..n {
                self.s_inv[(i, j)] = self.s_inv[(j, i)];
            }
        }
        for j in 0..n {
            let kj = self.phi[j] / denom;
            if kj == 0.0 {
                continue;
            }
            let mut col = readout.w_out.column_mut(j);
            for (w, &e) in col.iter_mut().zip(error_out.iter()) {
                *w += e * kj;
            }
        }
        self.n += 1;
        Ok(())
    }
}

/// Vector-typed convenience around [`RlsState::step`].
pub fn rls_step(
    rls: &mut RlsState,
    readout: &mut Readout,
    x: &DVector<f64>,
    y_target: &DVector<f64>,
) -> Result<DVector<f64>> {
    let mut e = DVector::zeros(y_target.len());
    rls.step(readout, x.as_slice(), y_target.as_slice(), e.as_mut_slice())?;
    Ok(e)
}

/// `W_out = Yᵀ X (XᵀX + δI)⁻¹`, the minimizer of `Σ‖y − W x‖² + δ‖W‖²_F`.
///
/// `states` is `N × N_F`, `targets` is `N × N_Y`.
pub fn ridge_fit(states: &DMatrix<f64>, targets: &DMatrix<f64>, delta: f64) -> Result<Readout> {
    check_design(states, targets)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!(
            "ridge delta must be non-negative, got {delta}"
        )));
    }
    let mut gram = states.transpose() * states;
    for i in 0..gram.nrows() {
        gram[(i, i)] += delta;
    }
    let rhs = states.transpose() * targets;
    let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
    let w_t = chol.solve(&rhs);
    Ok(Readout {
        w_out: w_t.transpose(),
    })
}

/// Least-squares readout through the Moore–Penrose pseudo-inverse; handles
/// rank-deficient designs without regularization.
pub fn ridge_fit_pinv(states: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<Readout> {
    check_design(states, targets)?;
    let pinv = states
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|_| Error::SingularSystem)?;
    Ok(Readout {
        w_out: (pinv * targets).transpose(),
    })
}

fn check_design(states: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
    if states.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if states.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            context: "ridge targets (rows)",
            expected: states.nrows(),
            got: targets.nrows(),
        });
    }
    Ok(())
}

/// `E = (1/N_Y) Σ_t λ^(T−t) ‖y*(t) − y(t)‖²` over `T × N_Y` matrices.
pub fn discounted_error(preds: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if preds.shape() != targets.shape() {
        return Err(Error::DimensionMismatch {
            context: "discounted error shapes",
            expected: targets.len(),
            got: preds.len(),
        });
    }
    let mut acc = DiscountedError::new(lambda);
    let mut e = vec![0.0; preds.ncols()];
    for t in 0..preds.nrows() {
        for (j, ej) in e.iter_mut().enumerate() {
            *ej = targets[(t, j)] - preds[(t, j)];
        }
        acc.push(&e);
    }
    Ok(acc.value(preds.ncols()))
}

/// Incremental form of [`discounted_error`]: `E_n = λ·E_(n−1) + ‖e(n)‖²`.
#[derive(Debug, Clone, Copy)]
pub struct DiscountedError {
    lambda: f64,
    sum: f64,
}

impl DiscountedError {
    pub fn new(lambda: f64) -> Self {
        DiscountedError { lambda, sum: 0.0 }
    }

    pub fn push(&mut self, error: &[f64]) {
        self.sum = self.lambda * self.sum + error.iter().map(|e| e * e).sum::<f64>();
    }

    pub fn value(&self, n_outputs: usize) -> f64 {
        if n_outputs == 0 {
            0.0
        } else {
            self.sum / n_outputs as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_examples() {
        let r = Readout::zeros(2, 3);
        assert_eq!(
            r.predict(&DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap(),
            DVector::zeros(2)
        );
        let r = Readout {
            w_out: DMatrix::identity(2, 2),
        };
        assert_eq!(
            r.predict(&DVector::from_vec(vec![0.3, -0.2])).unwrap(),
            DVector::from_vec(vec![0.3, -0.2])
        );
        let r = Readout {
            w_out: DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
        };
        assert_eq!(r.predict(&DVector::from_element(3, 1.0)).unwrap()[0], 6.0);
        assert!(r.predict(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn init_examples() {
        assert_eq!(
            rls_init(1.0, 3, 1.0).unwrap().s_inv,
            DMatrix::identity(3, 3)
        );
        let s = rls_init(0.01, 2, 1.0).unwrap().s_inv;
        assert!((s[(0, 0)] - 100.0).abs() < 1e-12 && (s[(1, 1)] - 100.0).abs() < 1e-12);
        assert_eq!(s[(0, 1)], 0.0);
        assert!(matches!(
            rls_init(0.0, 2, 1.0),
            Err(Error::InvalidHyperparameter(_))
        ));
        assert!(rls_init(1.0, 2, 0.0).is_err());
        assert!(rls_init(1.0, 2, 1.1).is_err());
    }

    #[test]
    fn single_step_by_hand() {
        let mut rls = rls_init(1.0, 2, 1.0).unwrap();
        let mut r = Readout::zeros(1, 2);
        let e = rls_step(
            &mut rls,
            &mut r,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert_eq!(e[0], 1.0);
        assert_eq!(r.w_out, DMatrix::from_row_slice(1, 2, &[0.5, 0.0]));
        assert_eq!(
            rls.s_inv,
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])
        );
        assert_eq!(rls.n, 1);
    }

    #[test]
    fn zero_error_step_keeps_weights() {
        let mut rls = rls_init(1.0, 2, 1.0).unwrap();
        let mut r = Readout {
            w_out: DMatrix::from_row_slice(1, 2, &[0.5, -1.0]),
        };
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let y = DVector::from_element(1, -0.5);
        let e = rls_step(&mut rls, &mut r, &x, &y).unwrap();
        assert_eq!(e[0], 0.0);
        assert_eq!(r.w_out, DMatrix::from_row_slice(1, 2, &[0.5, -1.0]));
        assert_ne!(rls.s_inv, DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_state_only_scales_inverse() {
        let lambda = 0.5;
        let mut rls = rls_init(1.0, 2, lambda).unwrap();
        let mut r = Readout {
            w_out: DMatrix::from_row_slice(1, 2, &[0.2, 0.1]),
        };
        rls_step(
            &mut rls,
            &mut r,
            &DVector::zeros(2),
            &DVector::from_element(1, 3.0),
        )
        .unwrap();
        assert_eq!(r.w_out, DMatrix::from_row_slice(1, 2, &[0.2, 0.1]));
        assert_eq!(rls.s_inv, DMatrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn breakdown_detected() {
        let mut rls = rls_init(1.0, 1, 1.0).unwrap();
        rls.s_inv[(0, 0)] = -5.0;
        let mut r = Readout::zeros(1, 1);
        assert!(matches!(
            rls_step(
                &mut rls,
                &mut r,
                &DVector::from_element(1, 1.0),
                &DVector::from_element(1, 1.0)
            ),
            Err(Error::NumericalBreakdown(_))
        ));
    }

    #[test]
    fn ridge_examples() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(ridge_fit(&x, &y, 0.0), Err(Error::SingularSystem)));
        let r = ridge_fit_pinv(&x, &y).unwrap();
        assert!((r.w_out[(0, 0)] - 1.0).abs() < 1e-12 && r.w_out[(0, 1)].abs() < 1e-12);

        let x = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 0.4);
        let r = ridge_fit(&x, &DMatrix::zeros(5, 2), 0.5).unwrap();
        assert_eq!(r.w_out, DMatrix::zeros(2, 3));
    }

    #[test]
    fn discounted_error_examples() {
        let p = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        let t = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!((discounted_error(&p, &t, 0.5).unwrap() - 4.5).abs() < 1e-15);
        assert_eq!(discounted_error(&t, &t, 0.3).unwrap(), 0.0);
        let p = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let t = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        assert_eq!(discounted_error(&p, &t, 0.01).unwrap(), 2.5);
    }
}
