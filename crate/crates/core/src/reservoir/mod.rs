//! The fixed leaky-integrator reservoir.
//!
//! State update, for inputs `u(t)`:
//!
//! ```text
//! x(t) = (1 − a)·x(t−1) + a·f(W_in·u(t) + W_h·x(t−1))
//! ```
//!
//! `W_h` is drawn sparse and uniform, then scaled so that the leaky-integrated
//! matrix `W̃ = (1 − a)·I + a·W_h` has spectral radius `ρ*`.

mod spectral;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use spectral::{
    eigenvalues, largest_singular_value, spectral_radius, spectral_radius_iterative, DENSE_LIMIT,
    POWER_MAX_ITER, POWER_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub n_inputs: usize,
    pub n_reservoir: usize,
    pub leak_rate: f64,
    /// Probability that a recurrent entry is nonzero.
    pub connectivity: f64,
    pub input_scale: f64,
    pub recurrent_init_bound: f64,
    pub spectral_target: f64,
    #[serde(default)]
    pub activation: Activation,
    pub seed: u64,
}

impl ReservoirConfig {
    /// Defaults: 10% connectivity, weights in [−0.4, 0.4], ρ(W̃) = 0.99.
    pub fn new(n_inputs: usize, n_reservoir: usize, leak_rate: f64) -> Self {
        ReservoirConfig {
            n_inputs,
            n_reservoir,
            leak_rate,
            connectivity: 0.1,
            input_scale: 0.4,
            recurrent_init_bound: 0.4,
            spectral_target: 0.99,
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_inputs == 0 || self.n_reservoir == 0 {
            return bad("reservoir dimensions must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.leak_rate) {
            return bad(format!("leak_rate {} outside [0, 1]", self.leak_rate));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return bad(format!("connectivity {} outside (0, 1]", self.connectivity));
        }
        if !(self.spectral_target > 0.0 && self.spectral_target < 1.0) {
            return bad(format!(
                "spectral_target {} outside (0, 1)",
                self.spectral_target
            ));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad(format!("input_scale {} must be positive", self.input_scale));
        }
        if !(self.recurrent_init_bound > 0.0 && self.recurrent_init_bound.is_finite()) {
            return bad(format!(
                "recurrent_init_bound {} must be positive",
                self.recurrent_init_bound
            ));
        }
        Ok(())
    }
}

/// Compressed-row copy of `W_h` used by the state update.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_ptr = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            row_ptr,
            cols,
            vals,
        }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&j, &w)| w * x[j])
            .sum()
    }
}

/// Input and recurrent weights after ESP rescaling. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    w_in: DMatrix<f64>,
    w_h: DMatrix<f64>,
    rescale_factor: f64,
    achieved_rho: f64,
    activation: Activation,
    csr: Csr,
}

impl ReservoirWeights {
    /// Assembles weights from already-rescaled parts (e.g. a loaded model).
    pub fn from_parts(
        w_in: DMatrix<f64>,
        w_h: DMatrix<f64>,
        rescale_factor: f64,
        achieved_rho: f64,
        activation: Activation,
    ) -> Result<Self> {
        if !w_h.is_square() {
            return Err(Error::DimensionMismatch {
                context: "recurrent weights (columns)",
                expected: w_h.nrows(),
                got: w_h.ncols(),
            });
        }
        if w_in.nrows() != w_h.nrows() {
            return Err(Error::DimensionMismatch {
                context: "input weights (rows)",
                expected: w_h.nrows(),
                got: w_in.nrows(),
            });
        }
        let csr = Csr::from_dense(&w_h);
        Ok(ReservoirWeights {
            w_in,
            w_h,
            rescale_factor,
            achieved_rho,
            activation,
            csr,
        })
    }

    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn w_h(&self) -> &DMatrix<f64> {
        &self.w_h
    }

    pub fn rescale_factor(&self) -> f64 {
        self.rescale_factor
    }

    pub fn achieved_rho(&self) -> f64 {
        self.achieved_rho
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_inputs(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn n_reservoir(&self) -> usize {
        self.w_h.nrows()
    }

    /// Fraction of nonzero recurrent entries.
    pub fn density(&self) -> f64 {
        self.csr.vals.len() as f64 / (self.w_h.len() as f64)
    }

    /// Copy with the listed input columns zeroed.
    pub fn without_inputs(&self, columns: &[usize]) -> Result<Self> {
        let mut w = self.clone();
        for &c in columns {
            if c >= w.w_in.ncols() {
                return Err(Error::InvalidFeatureIndex {
                    index: c,
                    n_inputs: w.w_in.ncols(),
                });
            }
            w.w_in.column_mut(c).fill(0.0);
        }
        Ok(w)
    }

    /// One in-place step of the leaky update. `pre` is scratch of length N_R.
    #[inline]
    pub fn advance(&self, x: &mut [f64], u: &[f64], a: f64, pre: &mut [f64]) {
        let n_r = self.n_reservoir();
        debug_assert_eq!(x.len(), n_r);
        debug_assert_eq!(u.len(), self.n_inputs());
        for (i, p) in pre.iter_mut().enumerate().take(n_r) {
            let mut acc = 0.0;
            for (j, &uj) in u.iter().enumerate() {
                acc += self.w_in[(i, j)] * uj;
            }
            *p = acc + self.csr.row_dot(i, x);
        }
        for (xi, &p) in x.iter_mut().zip(pre.iter()) {
            *xi = (1.0 - a) * *xi + a * self.activation.apply(p);
        }
    }
}

/// Draws `W_in` and the pre-rescale `W_h` from the config seed.
///
/// Draw order is fixed (all of `W_in` row-major, then `W_h` row-major with a
/// Bernoulli draw per entry followed by a value draw for kept entries), so two
/// configs differing only in leak rate share the same raw topology.
pub fn draw_raw_weights(config: &ReservoirConfig) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);
    let (n_r, n_u) = (config.n_reservoir, config.n_inputs);
    let s_in = config.input_scale;
    let mut w_in = DMatrix::zeros(n_r, n_u);
    for i in 0..n_r {
        for j in 0..n_u {
            w_in[(i, j)] = rng.random_range(-s_in..=s_in);
        }
    }
    let bound = config.recurrent_init_bound;
    let mut w_h = DMatrix::zeros(n_r, n_r);
    for i in 0..n_r {
        for j in 0..n_r {
            if rng.random::<f64>() < config.connectivity {
                let mut v = rng.random_range(-bound..=bound);
                // keep the sparsity pattern exact: a kept entry is never 0
                while v == 0.0 {
                    v = rng.random_range(-bound..=bound);
                }
                w_h[(i, j)] = v;
            }
        }
    }
    Ok((w_in, w_h))
}

/// Full construction: raw draw followed by [`rescale_to_esp`].
pub fn init_weights(config: &ReservoirConfig) -> Result<ReservoirWeights> {
    let (w_in, w_h) = draw_raw_weights(config)?;
    rescale_raw(config, w_in, &w_h)
}

/// Rescales an existing raw draw for the leak rate in `config`.
pub fn rescale_raw(
    config: &ReservoirConfig,
    w_in: DMatrix<f64>,
    w_h_raw: &DMatrix<f64>,
) -> Result<ReservoirWeights> {
    let mu = eigenvalues(w_h_raw)?;
    let (c, rho) = esp_scale_factor(&mu, config.leak_rate, config.spectral_target, w_h_raw)?;
    ReservoirWeights::from_parts(w_in, w_h_raw * c, c, rho, config.activation)
}

/// `(1 − a)·I + a·W_h`.
pub fn leaky_matrix(w_h: &DMatrix<f64>, a: f64) -> DMatrix<f64> {
    assert!(w_h.is_square(), "leaky matrix of a non-square matrix");
    let mut m = w_h * a;
    for i in 0..m.nrows() {
        m[(i, i)] += 1.0 - a;
    }
    m
}

/// Finds `c > 0` with `ρ((1 − a)·I + a·c·W_h) = ρ*` and returns `(c·W_h, c)`.
pub fn rescale_to_esp(w_h: &DMatrix<f64>, a: f64, rho_target: f64) -> Result<(DMatrix<f64>, f64)> {
    let mu = eigenvalues(w_h)?;
    let (c, _) = esp_scale_factor(&mu, a, rho_target, w_h)?;
    Ok((w_h * c, c))
}

const BRACKET_DOUBLINGS: usize = 200;
const BISECTION_STEPS: usize = 200;

/// Eigenvalues of `W̃(c)` are `(1 − a) + c·a·μ_i`, so
/// `g(c) = max_i |(1 − a) + c·a·μ_i|` is convex with `g(0) = 1 − a`.
/// Bisects for the upper crossing of `ρ*`; returns `(c, g(c))`.
fn esp_scale_factor(
    mu: &[Complex64],
    a: f64,
    rho_target: f64,
    w_h: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    if a == 0.0 {
        return Err(Error::InvalidLeak);
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "leak rate {a} outside (0, 1]"
        )));
    }
    if !(rho_target > 0.0 && rho_target < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "spectral target {rho_target} outside (0, 1)"
        )));
    }
    if 1.0 - a >= rho_target {
        return Err(Error::RescaleInfeasible(format!(
            "1 - a = {} already reaches the target {rho_target}",
            1.0 - a
        )));
    }
    let mu_max = mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = w_h.norm().max(1.0);
    if !(mu_max > 1e-12 * scale) {
        return Err(Error::RescaleInfeasible(
            "recurrent matrix has no nonzero eigenvalue".into(),
        ));
    }
    let g = |c: f64| {
        mu.iter()
            .map(|&m| (Complex64::new(1.0 - a, 0.0) + m * (c * a)).norm())
            .fold(0.0, f64::max)
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / mu_max;
    let mut doublings = 0;
    while g(hi) <= rho_target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > BRACKET_DOUBLINGS {
            return Err(Error::RescaleInfeasible(
                "spectral radius never reaches the target".into(),
            ));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= rho_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (g_lo, g_hi) = (g(lo), g(hi));
    let (c, rho) = if (g_lo - rho_target).abs() <= (g_hi - rho_target).abs() {
        (lo, g_lo)
    } else {
        (hi, g_hi)
    };
    if c <= 0.0 {
        return Err(Error::RescaleInfeasible("degenerate scale factor".into()));
    }
    Ok((c, rho))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub x: DVector<f64>,
    pub t: usize,
}

impl ReservoirState {
    pub fn zeros(n_reservoir: usize) -> Self {
        ReservoirState {
            x: DVector::zeros(n_reservoir),
            t: 0,
        }
    }
}

/// Applies one leaky update and returns the next state.
pub fn update_state(
    state: &ReservoirState,
    u: &DVector<f64>,
    w: &ReservoirWeights,
    a: f64,
) -> Result<ReservoirState> {
    if u.len() != w.n_inputs() {
        return Err(Error::DimensionMismatch {
            context: "input vector",
            expected: w.n_inputs(),
            got: u.len(),
        });
    }
    if state.x.len() != w.n_reservoir() {
        return Err(Error::DimensionMismatch {
            context: "reservoir state",
            expected: w.n_reservoir(),
            got: state.x.len(),
        });
    }
    let mut next = state.clone();
    let mut pre = vec![0.0; w.n_reservoir()];
    w.advance(next.x.as_mut_slice(), u.as_slice(), a, &mut pre);
    next.t += 1;
    Ok(next)
}

/// Drives the reservoir over a `T × N_U` input matrix; row `t` of the result
/// is the state after `t + 1` updates. Starts from zero when `x0` is `None`.
pub fn run_sequence(
    w: &ReservoirWeights,
    a: f64,
    seq: &DMatrix<f64>,
    x0: Option<&ReservoirState>,
) -> Result<DMatrix<f64>> {
    let mut states = DMatrix::zeros(seq.nrows(), w.n_reservoir());
    drive(w, a, seq, x0, |t, x| {
        states.row_mut(t).copy_from_slice(x);
    })?;
    Ok(states)
}

/// Streams the states of a run to `visit(t, x(t))` without storing them.
pub fn drive(
    w: &ReservoirWeights,
    a: f64,
    seq: &DMatrix<f64>,
    x0: Option<&ReservoirState>,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    if seq.nrows() == 0 {
        return Err(Error::EmptySequence);
    }
    if seq.ncols() != w.n_inputs() {
        return Err(Error::DimensionMismatch {
            context: "sequence columns",
            expected: w.n_inputs(),
            got: seq.ncols(),
        });
    }
    let n_r = w.n_reservoir();
    let mut x = match x0 {
        Some(s) if s.x.len() != n_r => {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: n_r,
                got: s.x.len(),
            })
        }
        Some(s) => s.x.as_slice().to_vec(),
        None => vec![0.0; n_r],
    };
    let mut pre = vec![0.0; n_r];
    let mut u = vec![0.0; seq.ncols()];
    for t in 0..seq.nrows() {
        for (j, uj) in u.iter_mut().enumerate() {
            *uj = seq[(t, j)];
        }
        w.advance(&mut x, &u, a, &mut pre);
        visit(t, &x);
    }
    Ok(())
}
