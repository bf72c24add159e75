//! Continuous-quantity limit for power depth functions.
//!
//! When inventory is a real quantity and `F(a) = c·a^γ`, the value function
//! factorizes as `v(x, T) = F(x) u(T)` with a scalar profile solving
//!
//! ```text
//! u'(T) = λ u [ (1 + u^{1/(γ-1)})^{-(γ-1)} - 1 ],    u(0) = 1,
//! ```
//!
//! and the optimal sale fraction per arrival is
//! `a(T) = u^{1/(γ-1)} / (1 + u^{1/(γ-1)})` (one half at the deadline,
//! shrinking as the horizon grows). The fraction also solves its own ODE
//!
//! ```text
//! a'(T) = λ/(γ-1) · a (1-a) [ (1-a)^{γ-1} - 1 ],     a(0) = 1/2,
//! ```
//!
//! which this module integrates independently as a cross-check. Both are
//! integrated with RK4; the coefficient `c` never enters (it folds back in
//! through `F` when scaling values).

use std::io::Write;

use crate::base::{validate_grid, validate_lambda};
use crate::error::{Error, Result};
use crate::model::DepthFunction;
use crate::util::fmt_sig10;

/// Scalar value profile `u(T)` and sale fraction `a(T)` on a uniform grid.
#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    gamma: f64,
    lambda: f64,
    dt: f64,
    u: Vec<f64>,
    a_frac: Vec<f64>,
}

impl ContinuousSolution {
    /// Depth exponent the profile was solved for.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Arrival intensity.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Time step of the grid.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps (`n_steps + 1` grid values).
    pub fn n_steps(&self) -> usize {
        self.u.len() - 1
    }

    /// Largest grid time.
    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    /// Grid values of `u`.
    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    /// Grid values of the sale fraction.
    pub fn a_values(&self) -> &[f64] {
        &self.a_frac
    }

    fn interp(&self, table: &[f64], t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon() + 1e-9 * self.dt) {
            return Err(Error::Domain(format!(
                "time {t} outside the solved horizon [0, {}]",
                self.horizon()
            )));
        }
        let x = (t / self.dt).min((table.len() - 1) as f64);
        let j = (x.floor() as usize).min(table.len() - 2);
        let w = x - j as f64;
        Ok((1.0 - w) * table[j] + w * table[j + 1])
    }

    /// `u(t)` by linear interpolation.
    pub fn u_at(&self, t: f64) -> Result<f64> {
        self.interp(&self.u, t)
    }

    /// Sale fraction `a(t)` by linear interpolation.
    pub fn a_at(&self, t: f64) -> Result<f64> {
        self.interp(&self.a_frac, t)
    }

    /// Write the profiles as CSV (`T,u,a`, 10 significant digits).
    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &str) -> std::io::Result<()> {
        if !provenance.is_empty() {
            writeln!(w, "# {provenance}")?;
        }
        writeln!(w, "T,u,a")?;
        for j in 0..self.u.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt_sig10(j as f64 * self.dt),
                fmt_sig10(self.u[j]),
                fmt_sig10(self.a_frac[j])
            )?;
        }
        Ok(())
    }
}

fn rk4_step(y: f64, dt: f64, rhs: impl Fn(f64) -> f64) -> f64 {
    let k1 = rhs(y);
    let k2 = rhs(y + 0.5 * dt * k1);
    let k3 = rhs(y + 0.5 * dt * k2);
    let k4 = rhs(y + dt * k3);
    y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrate the continuous-limit profiles up to `t_max` with RK4 steps of
/// size `dt`, cross-checking the sale fraction against its own ODE.
pub fn solve_continuous(
    lambda: f64,
    gamma: f64,
    t_max: f64,
    dt: f64,
) -> Result<ContinuousSolution> {
    validate_lambda(lambda)?;
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::Domain(format!(
            "depth exponent must exceed 1, got {gamma}"
        )));
    }
    let n_steps = validate_grid(1, t_max, dt)?;
    let p = 1.0 / (gamma - 1.0);
    let u_rhs = |u: f64| -> f64 { lambda * u * ((1.0 + u.powf(p)).powf(-(gamma - 1.0)) - 1.0) };
    let a_rhs =
        |a: f64| -> f64 { lambda * p * a * (1.0 - a) * ((1.0 - a).powf(gamma - 1.0) - 1.0) };
    let to_frac = |u: f64| -> f64 {
        let r = u.powf(p);
        r / (1.0 + r)
    };

    let mut u = Vec::with_capacity(n_steps + 1);
    let mut a_frac = Vec::with_capacity(n_steps + 1);
    let mut u_cur = 1.0f64;
    let mut a_cur = 0.5f64;
    let mut worst_gap = 0.0f64;
    for j in 0..=n_steps {
        if !(u_cur.is_finite() && u_cur > 0.0 && a_cur.is_finite()) {
            return Err(Error::NumericGuard(format!(
                "continuous profile left its domain at T={}",
                j as f64 * dt
            )));
        }
        u.push(u_cur);
        a_frac.push(to_frac(u_cur));
        worst_gap = worst_gap.max((to_frac(u_cur) - a_cur).abs());
        u_cur = rk4_step(u_cur, dt, u_rhs);
        a_cur = rk4_step(a_cur, dt, a_rhs);
    }
    if worst_gap > 1e-8 {
        return Err(Error::NumericGuard(format!(
            "sale-fraction routes disagree by {worst_gap:.3e} (> 1e-8); \
             reduce dt or check parameters"
        )));
    }
    Ok(ContinuousSolution {
        gamma,
        lambda,
        dt,
        u,
        a_frac,
    })
}

/// Value of a real inventory `x` under the continuous limit: `F(x) · u(T)`.
/// The depth function's exponent must match the solution's.
pub fn scaled_value(
    depth: &DepthFunction,
    solution: &ContinuousSolution,
    x: f64,
    t: f64,
) -> Result<f64> {
    if (depth.gamma() - solution.gamma).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "depth exponent {} does not match the solved profile's {}",
            depth.gamma(),
            solution.gamma
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "inventory must be non-negative, got {x}"
        )));
    }
    Ok(depth.eval(x)? * solution.u_at(t)?)
}

/// Approximate the discrete problem: `v ≈ F(k)·u(T)` and the trade
/// `a ≈ round(k · a(T))`, clamped to `[1, max(1, ⌊k/2⌋)]`.
pub fn approximate_discrete(
    solution: &ContinuousSolution,
    depth: &DepthFunction,
    k: usize,
    t: f64,
) -> Result<(f64, u32)> {
    if k == 0 {
        return Err(Error::Domain("approximation needs k >= 1".into()));
    }
    let v = scaled_value(depth, solution, k as f64, t)?;
    let raw = (k as f64 * solution.a_at(t)?).round() as i64;
    let hi = ((k / 2) as i64).max(1);
    let a = raw.clamp(1, hi) as u32;
    Ok((v, a))
}
