//! Regime inference from the observed order flow.
//!
//! Between arrivals the joint law of (regime, "no arrival yet") evolves by
//! the sub-stochastic semigroup `e^{t(Q - Λ)}`, where `Q` is the regime
//! generator and `Λ = diag(λ_i)`. For a belief `π` held at the last event,
//!
//! * `m(t, π) = π e^{t(Q-Λ)}` is the unnormalized flow: `m_i` is the joint
//!   probability of being in regime `i` at `t` with no arrival in between;
//! * `Σ_i m_i(t, π)` is the probability of seeing no arrival for `t`;
//! * `x(t, π) = m / Σ m` is the belief conditional on that silence;
//! * an arrival of size `y` at `t` tilts the belief to
//!   `Π_i ∝ λ_i ν_i(y) x_i(t, π)`.
//!
//! The matrix exponential uses Padé scaling-and-squaring with degree chosen
//! by the 1-norm (degrees 3/5/7/9/13), which is exact to near machine
//! precision for the small, well-scaled generators that arise here.

use crate::error::{Error, Result};
use crate::model::{Belief, RegimeModel};

/// 1-norm thresholds below which each Padé degree is accurate to unit
/// roundoff.
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let ail = a[i * m + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += ail * b[l * m + j];
            }
        }
    }
    out
}

fn norm_1(a: &[f64], m: usize) -> f64 {
    (0..m)
        .map(|j| (0..m).map(|i| a[i * m + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn identity(m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i * m + i] = 1.0;
    }
    out
}

/// Solve `A X = B` for square `A` (m x m) and matrix `B` (m x m) by Gaussian
/// elimination with partial pivoting. `A` and `B` are consumed as workspace.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Result<Vec<f64>> {
    for col in 0..m {
        let pivot_row = (col..m)
            .max_by(|&r, &s| {
                a[r * m + col]
                    .abs()
                    .partial_cmp(&a[s * m + col].abs())
                    .expect("finite pivots")
            })
            .expect("non-empty pivot range");
        let pivot = a[pivot_row * m + col];
        if pivot.abs() < 1e-300 {
            return Err(Error::NumericGuard(
                "singular system in matrix exponential solve".into(),
            ));
        }
        if pivot_row != col {
            for j in 0..m {
                a.swap(col * m + j, pivot_row * m + j);
                b.swap(col * m + j, pivot_row * m + j);
            }
        }
        for row in (col + 1)..m {
            let factor = a[row * m + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..m {
                a[row * m + j] -= factor * a[col * m + j];
            }
            for j in 0..m {
                b[row * m + j] -= factor * b[col * m + j];
            }
        }
    }
    // back substitution
    for col in (0..m).rev() {
        let diag = a[col * m + col];
        for j in 0..m {
            b[col * m + j] /= diag;
        }
        for row in 0..col {
            let factor = a[row * m + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..m {
                b[row * m + j] -= factor * b[col * m + j];
            }
        }
    }
    Ok(b)
}

/// Evaluate the degree-`d` diagonal Padé approximant of `e^A` for
/// `d ∈ {3, 5, 7, 9}` given the coefficient table.
fn pade_low(a: &[f64], m: usize, b: &[f64]) -> Result<Vec<f64>> {
    let a2 = mat_mul(a, a, m);
    // even powers a^0, a^2, a^4, ...
    let mut powers = vec![identity(m), a2];
    while powers.len() * 2 < b.len() {
        let next = mat_mul(powers.last().expect("non-empty"), &powers[1], m);
        powers.push(next);
    }
    let mut u_poly = vec![0.0; m * m];
    let mut v = vec![0.0; m * m];
    for (j, pw) in powers.iter().enumerate() {
        let (bo, be) = (b[2 * j + 1], b[2 * j]);
        for idx in 0..m * m {
            u_poly[idx] += bo * pw[idx];
            v[idx] += be * pw[idx];
        }
    }
    let u = mat_mul(a, &u_poly, m);
    let mut lhs = vec![0.0; m * m]; // V - U
    let mut rhs = vec![0.0; m * m]; // V + U
    for idx in 0..m * m {
        lhs[idx] = v[idx] - u[idx];
        rhs[idx] = v[idx] + u[idx];
    }
    solve_linear(lhs, rhs, m)
}

/// Degree-13 Padé approximant using the factored evaluation scheme.
fn pade_13(a: &[f64], m: usize) -> Result<Vec<f64>> {
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let a2 = mat_mul(a, a, m);
    let a4 = mat_mul(&a2, &a2, m);
    let a6 = mat_mul(&a2, &a4, m);
    let id = identity(m);
    let mm = m * m;

    let mut inner_u = vec![0.0; mm];
    let mut inner_v = vec![0.0; mm];
    for idx in 0..mm {
        inner_u[idx] = B[13] * a6[idx] + B[11] * a4[idx] + B[9] * a2[idx];
        inner_v[idx] = B[12] * a6[idx] + B[10] * a4[idx] + B[8] * a2[idx];
    }
    let hi_u = mat_mul(&a6, &inner_u, m);
    let hi_v = mat_mul(&a6, &inner_v, m);
    let mut u_poly = vec![0.0; mm];
    let mut v = vec![0.0; mm];
    for idx in 0..mm {
        u_poly[idx] = hi_u[idx] + B[7] * a6[idx] + B[5] * a4[idx] + B[3] * a2[idx] + B[1] * id[idx];
        v[idx] = hi_v[idx] + B[6] * a6[idx] + B[4] * a4[idx] + B[2] * a2[idx] + B[0] * id[idx];
    }
    let u = mat_mul(a, &u_poly, m);
    let mut lhs = vec![0.0; mm];
    let mut rhs = vec![0.0; mm];
    for idx in 0..mm {
        lhs[idx] = v[idx] - u[idx];
        rhs[idx] = v[idx] + u[idx];
    }
    solve_linear(lhs, rhs, m)
}

/// Matrix exponential `e^A` of a square matrix in row-major order.
pub fn matrix_exponential(a: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 || a.len() != m * m {
        return Err(Error::Config(format!(
            "matrix exponential needs a square matrix, got {} entries for m={m}",
            a.len()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(
            "matrix exponential of non-finite entries".into(),
        ));
    }
    if m == 1 {
        return Ok(vec![a[0].exp()]);
    }
    const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
    const B5: [f64; 6] = [30_240.0, 15_120.0, 3_360.0, 420.0, 30.0, 1.0];
    const B7: [f64; 8] = [
        17_297_280.0,
        8_648_640.0,
        1_995_840.0,
        277_200.0,
        25_200.0,
        1_512.0,
        56.0,
        1.0,
    ];
    const B9: [f64; 10] = [
        17_643_225_600.0,
        8_821_612_800.0,
        2_075_673_600.0,
        302_702_400.0,
        30_270_240.0,
        2_162_160.0,
        110_880.0,
        3_960.0,
        90.0,
        1.0,
    ];
    let norm = norm_1(a, m);
    if norm <= THETA_3 {
        return pade_low(a, m, &B3);
    }
    if norm <= THETA_5 {
        return pade_low(a, m, &B5);
    }
    if norm <= THETA_7 {
        return pade_low(a, m, &B7);
    }
    if norm <= THETA_9 {
        return pade_low(a, m, &B9);
    }
    let s = ((norm / THETA_13).log2().ceil().max(0.0)) as u32;
    let scale = 0.5f64.powi(s as i32);
    let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
    let mut result = pade_13(&scaled, m)?;
    for _ in 0..s {
        result = mat_mul(&result, &result, m);
    }
    Ok(result)
}

/// `Q - Λ`: the generator of the joint (regime, no-arrival) evolution.
pub(crate) fn flow_generator(model: &RegimeModel) -> Vec<f64> {
    let m = model.num_regimes();
    let mut g = model.generator().to_vec();
    for i in 0..m {
        g[i * m + i] -= model.intensity(i);
    }
    g
}

/// `e^{t(Q-Λ)}` for a model, `t ≥ 0`.
pub fn flow_matrix(model: &RegimeModel, t: f64) -> Result<Vec<f64>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!(
            "flow time must be non-negative, got {t}"
        )));
    }
    let m = model.num_regimes();
    let gen = flow_generator(model);
    let scaled: Vec<f64> = gen.iter().map(|x| x * t).collect();
    matrix_exponential(&scaled, m)
}

/// Row-vector times matrix: `(w M)_j = Σ_i w_i M_ij`.
pub(crate) fn row_times(w: &[f64], mat: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for i in 0..m {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for j in 0..m {
            out[j] += wi * mat[i * m + j];
        }
    }
    out
}

/// Unnormalized flow `m(t, π) = π e^{t(Q-Λ)}`: joint weights of (regime now,
/// no arrival during `[0, t]`).
pub fn unnormalized_flow(model: &RegimeModel, t: f64, pi: &Belief) -> Result<Vec<f64>> {
    let m = model.num_regimes();
    if pi.len() != m {
        return Err(Error::Config(format!(
            "belief has {} entries for a model with {m} regimes",
            pi.len()
        )));
    }
    let mat = flow_matrix(model, t)?;
    Ok(row_times(pi.weights(), &mat, m))
}

/// Belief conditional on seeing no arrival during `[0, t]`.
pub fn conditional_flow(model: &RegimeModel, t: f64, pi: &Belief) -> Result<Belief> {
    let m = unnormalized_flow(model, t, pi)?;
    let total: f64 = m.iter().sum();
    if !(total > 1e-300) {
        return Err(Error::NumericGuard(format!(
            "no-arrival probability underflowed at t={t}; belief update is undefined"
        )));
    }
    Belief::new(m.iter().map(|x| x / total).collect())
}

/// Belief immediately after observing an arrival of size `y`:
/// `Π_i ∝ λ_i ν_i(y) π_i`.
pub fn jump_update(model: &RegimeModel, pi: &Belief, y: usize) -> Result<Belief> {
    let m = model.num_regimes();
    if pi.len() != m {
        return Err(Error::Config(format!(
            "belief has {} entries for a model with {m} regimes",
            pi.len()
        )));
    }
    if y == 0 {
        return Err(Error::Domain("arrival sizes are positive integers".into()));
    }
    let w: Vec<f64> = (0..m)
        .map(|i| model.intensity(i) * model.sizes(i).pmf(y) * pi.weights()[i])
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 1e-300) {
        return Err(Error::NumericGuard(format!(
            "arrival of size {y} has zero probability under the current belief"
        )));
    }
    Belief::new(w.iter().map(|x| x / total).collect())
}

/// Density (in `t`) of the first arrival happening at `t`:
/// `Σ_i λ_i m_i(t, π)`.
pub fn arrival_density(model: &RegimeModel, t: f64, pi: &Belief) -> Result<f64> {
    let m = unnormalized_flow(model, t, pi)?;
    Ok(m.iter()
        .zip(model.intensities())
        .map(|(mi, li)| mi * li)
        .sum())
}

/// Precomputed flow matrices for a fixed step size: the solvers advance
/// beliefs by `dt` and weight arrivals at the midpoint `dt/2`; the
/// simulator's executor asks for exact gaps via [`FlowCache::at`].
#[derive(Debug, Clone)]
pub struct FlowCache {
    m: usize,
    generator: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl FlowCache {
    /// Build the cache for step `dt`.
    pub fn new(model: &RegimeModel, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!(
                "flow step must be positive, got {dt}"
            )));
        }
        let m = model.num_regimes();
        let generator = flow_generator(model);
        let scaled: Vec<f64> = generator.iter().map(|x| x * dt).collect();
        let full = matrix_exponential(&scaled, m)?;
        let half_scaled: Vec<f64> = generator.iter().map(|x| x * (0.5 * dt)).collect();
        let half = matrix_exponential(&half_scaled, m)?;
        Ok(Self {
            m,
            generator,
            full,
            half,
        })
    }

    /// Number of regimes.
    pub fn num_regimes(&self) -> usize {
        self.m
    }

    /// `w e^{dt(Q-Λ)}` for an unnormalized weight row `w`.
    pub fn step(&self, w: &[f64]) -> Vec<f64> {
        row_times(w, &self.full, self.m)
    }

    /// `w e^{(dt/2)(Q-Λ)}`.
    pub fn half_step(&self, w: &[f64]) -> Vec<f64> {
        row_times(w, &self.half, self.m)
    }

    /// Exact flow matrix `e^{u(Q-Λ)}` for an arbitrary gap `u ≥ 0`.
    pub fn at(&self, u: f64) -> Result<Vec<f64>> {
        if !(u.is_finite() && u >= 0.0) {
            return Err(Error::Domain(format!(
                "flow gap must be non-negative, got {u}"
            )));
        }
        let scaled: Vec<f64> = self.generator.iter().map(|x| x * u).collect();
        matrix_exponential(&scaled, self.m)
    }
}
