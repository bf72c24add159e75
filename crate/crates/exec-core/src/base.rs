//! Single-regime solver: dynamic programming on the (inventory, time) grid,
//! action thresholds, small-inventory closed forms, and distribution-level
//! cost bounds.
//!
//! With one regime, arrivals are Poisson(`λ`) and the value function solves
//! the backward recursion
//!
//! ```text
//! ∂_T v(k,T) = -λ G(k,T),    v(k,0) = F(k),
//! G(k,T)     = v(k,T) - min_{a ∈ {0..k}} [ v(k-a,T) + F(a) ],
//! ```
//!
//! integrated by explicit Euler on a uniform grid `T_j = j·Δt` (time is
//! measured to maturity, so integration runs *forward* in `j`). The optimal
//! trade at an arrival is the smallest minimizer over `{1..k}` of
//! `v(k-a,T) + F(a)`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::DepthFunction;
use crate::util::{floor_index, fmt_sig10};

/// Steps between full argmin sweeps; between them the warm-started
/// candidate set `{a_prev - 1, a_prev}` is used.
pub(crate) const FULL_SWEEP_EVERY: usize = 10;

/// Value surface `v[k][j]` and action surface `a[k][j]` on the grid
/// `k ∈ {0..k_max}`, `T_j = j·dt`, for one arrival intensity.
#[derive(Debug, Clone)]
pub struct PolicySurface {
    k_max: usize,
    dt: f64,
    n_steps: usize,
    lambda: f64,
    depth: DepthFunction,
    /// j-major: `v[j*(k_max+1) + k]`.
    v: Vec<f64>,
    a: Vec<u32>,
}

impl PolicySurface {
    /// Largest inventory on the grid.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Time step.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps (`n_steps + 1` grid nodes).
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Largest grid time to maturity, `n_steps · dt`.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Arrival intensity the surface was solved for.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Depth function the surface was solved for.
    pub fn depth(&self) -> DepthFunction {
        self.depth
    }

    /// Grid time of step `j`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Value `v(k, T_j)`.
    pub fn value(&self, k: usize, j: usize) -> f64 {
        self.v[j * (self.k_max + 1) + k]
    }

    /// Optimal trade at an arrival with inventory `k` and time `T_j` left;
    /// zero only at `k = 0`.
    pub fn action(&self, k: usize, j: usize) -> u32 {
        self.a[j * (self.k_max + 1) + k]
    }

    /// Value at the nearest grid time not exceeding `t` (floor lookup).
    pub fn value_at(&self, k: usize, t: f64) -> f64 {
        self.value(k, floor_index(t, self.dt, self.n_steps))
    }

    /// Action at the nearest grid time not exceeding `t` (floor lookup).
    pub fn action_at(&self, k: usize, t: f64) -> u32 {
        self.action(k, floor_index(t, self.dt, self.n_steps))
    }

    /// Write the surface as CSV (`k,T,v,a`, row-major over `k` then `T`,
    /// 10 significant digits). `provenance` becomes a leading `#` comment.
    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &str) -> std::io::Result<()> {
        if !provenance.is_empty() {
            writeln!(w, "# {provenance}")?;
        }
        writeln!(w, "k,T,v,a")?;
        for k in 0..=self.k_max {
            for j in 0..=self.n_steps {
                writeln!(
                    w,
                    "{},{},{},{}",
                    k,
                    fmt_sig10(self.time(j)),
                    fmt_sig10(self.value(k, j)),
                    self.action(k, j)
                )?;
            }
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        k_max: usize,
        dt: f64,
        n_steps: usize,
        lambda: f64,
        depth: DepthFunction,
        v: Vec<f64>,
        a: Vec<u32>,
    ) -> Self {
        debug_assert_eq!(v.len(), (k_max + 1) * (n_steps + 1));
        debug_assert_eq!(a.len(), v.len());
        Self {
            k_max,
            dt,
            n_steps,
            lambda,
            depth,
            v,
            a,
        }
    }
}

/// One-step gain `G = v_row[k] - min_{a ∈ {0..k}} (v_row[k-a] + F(a))`
/// together with the smallest minimizer over `{0..k}`.
///
/// `v_row` holds values at a fixed time for inventories `0..=k`.
pub fn gain(v_row: &[f64], k: usize, depth: &DepthFunction) -> Result<(f64, u32)> {
    if v_row.len() <= k {
        return Err(Error::Config(format!(
            "value row has {} entries, needs at least {}",
            v_row.len(),
            k + 1
        )));
    }
    if k == 0 {
        return Ok((0.0, 0));
    }
    let mut best = v_row[k]; // a = 0
    let mut best_a = 0u32;
    for a in 1..=k {
        let c = v_row[k - a] + depth.cost(a as f64);
        if c < best {
            best = c;
            best_a = a as u32;
        }
    }
    Ok((v_row[k] - best, best_a))
}

/// Smallest minimizer over `{1..k}` of `v_row[k-a] + F(a)` and its objective
/// value, scanning only `candidates` (assumed sorted ascending, within `1..=k`).
#[inline]
pub(crate) fn best_trade(
    v_row: &[f64],
    k: usize,
    f: &[f64],
    candidates: impl Iterator<Item = usize>,
) -> (f64, u32) {
    let mut best = f64::INFINITY;
    let mut best_a = 1u32;
    for a in candidates {
        let c = v_row[k - a] + f[a];
        if c < best {
            best = c;
            best_a = a as u32;
        }
    }
    (best, best_a)
}

/// Smallest minimizer over `{1..k}` with warm starting: scan everything when
/// `full`, otherwise only `{prev-1, prev}` (optimal trades shrink by unit
/// steps as `T` grows). Ties always resolve to the smaller action.
pub(crate) fn warm_argmin(row: &[f64], k: usize, f: &[f64], prev: u32, full: bool) -> (f64, u32) {
    let (mut obj, mut act) = if full {
        best_trade(row, k, f, 1..=k)
    } else {
        let p = (prev as usize).clamp(1, k);
        let lo = p.saturating_sub(1).max(1);
        best_trade(row, k, f, lo..=p)
    };
    // smallest-minimizer tie rule: step down while the smaller action does
    // at least as well (also heals a warm window that lagged a unit drop)
    while act > 1 {
        let c = row[k - (act as usize - 1)] + f[act as usize - 1];
        if c <= obj {
            obj = c;
            act -= 1;
        } else {
            break;
        }
    }
    (obj, act)
}

pub(crate) fn validate_grid(k_max: usize, t_max: f64, dt: f64) -> Result<usize> {
    if k_max == 0 {
        return Err(Error::Domain("inventory grid needs k_max >= 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(t_max.is_finite() && t_max >= dt) {
        return Err(Error::Domain(format!(
            "horizon must cover at least one step, got T_max={t_max}, dt={dt}"
        )));
    }
    if dt > 0.1 {
        log::warn!("time step {dt} is coarse; values carry O(dt) integration error");
    }
    let n_steps = (t_max / dt).round().max(1.0) as usize;
    if ((n_steps as f64 * dt) - t_max).abs() > 1e-9 * t_max.max(1.0) {
        log::warn!(
            "horizon {t_max} is not a multiple of dt={dt}; grid ends at {}",
            n_steps as f64 * dt
        );
    }
    Ok(n_steps)
}

pub(crate) fn validate_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!(
            "arrival intensity must be positive, got {lambda}"
        )));
    }
    Ok(())
}

/// Solve the single-regime problem on `k ∈ {0..k_max}`, `T ∈ [0, t_max]`
/// with explicit Euler steps of size `dt`.
///
/// The recorded action `a[k][j]` is the smallest minimizer over `{1..k}` of
/// `v(k-a, T_j) + F(a)` (so `a[k][0] = ⌊k/2⌋` for `k ≥ 2`, and `a[1][j] = 1`).
/// The argmin is warm-started from the previous step's action (optimal
/// trades shrink by unit steps as `T` grows) with a full sweep every
/// 10 steps.
pub fn solve_base(
    lambda: f64,
    depth: &DepthFunction,
    k_max: usize,
    t_max: f64,
    dt: f64,
) -> Result<PolicySurface> {
    validate_lambda(lambda)?;
    let n_steps = validate_grid(k_max, t_max, dt)?;
    let kk = k_max + 1;
    let f = depth.table(k_max);
    let mut v = vec![0.0; kk * (n_steps + 1)];
    let mut a = vec![0u32; kk * (n_steps + 1)];
    v[..kk].copy_from_slice(&f);

    let lam_dt = lambda * dt;
    let mut prev_a = vec![1u32; kk];
    for j in 0..=n_steps {
        let (rows, future) = v.split_at_mut((j + 1) * kk);
        let row = &rows[j * kk..];
        let mut next = future.get_mut(..kk);
        for k in 1..=k_max {
            let full = j % FULL_SWEEP_EVERY == 0;
            let (obj, act) = warm_argmin(row, k, &f, prev_a[k], full);
            if obj.is_nan() {
                return Err(Error::NumericGuard(format!(
                    "non-finite objective at k={k}, T={}",
                    j as f64 * dt
                )));
            }
            a[j * kk + k] = act;
            prev_a[k] = act;
            if let Some(next_row) = next.as_deref_mut() {
                let g = (row[k] - obj).max(0.0);
                next_row[k] = row[k] - lam_dt * g;
            }
        }
    }
    Ok(PolicySurface::from_parts(
        k_max, dt, n_steps, lambda, *depth, v, a,
    ))
}

/// Grid times where the optimal action `a(k, ·)` steps down, reported at the
/// first grid node holding the lower action.
///
/// When the horizon is long enough that `a(k, T_max) = 1`, a surface for
/// inventory `k ≥ 2` has exactly `⌊k/2⌋ - 1` thresholds.
pub fn thresholds(surface: &PolicySurface, k: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 1..=surface.n_steps() {
        if surface.action(k, j) < surface.action(k, j - 1) {
            out.push(surface.time(j));
        }
    }
    out
}

/// Exact value function for `k ≤ 3` (any strictly convex depth function):
///
/// ```text
/// v(1,T) = F(1)
/// v(2,T) = 2F(1)(1 - e^{-λT}) + F(2) e^{-λT}
/// v(3,T) = F(3) e^{-λT} + F(2) λT e^{-λT} + F(1)(3 - 3e^{-λT} - 2λT e^{-λT})
/// ```
///
/// For these inventories the optimal trade is one unit at every arrival
/// (splitting 2 at the terminal tie included), which closes the recursion.
pub fn closed_form_small_k(lambda: f64, depth: &DepthFunction, k: usize, t: f64) -> Result<f64> {
    validate_lambda(lambda)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!(
            "time to maturity must be non-negative, got {t}"
        )));
    }
    let f1 = depth.cost(1.0);
    let e = (-lambda * t).exp();
    match k {
        0 => Ok(0.0),
        1 => Ok(f1),
        2 => Ok(2.0 * f1 * (1.0 - e) + depth.cost(2.0) * e),
        3 => {
            let lt = lambda * t;
            Ok(
                depth.cost(3.0) * e
                    + depth.cost(2.0) * lt * e
                    + f1 * (3.0 - 3.0 * e - 2.0 * lt * e),
            )
        }
        _ => Err(Error::Domain(format!(
            "closed forms cover k <= 3, requested k={k}"
        ))),
    }
}

/// Sub-grid refinement of action thresholds by bisecting the closed-form
/// indifference condition. Exact only while both continuation values have
/// closed forms, i.e. `k ≤ 4`: `k ≤ 3` has no thresholds, and `k = 4` has
/// the single root of `v(3,t) + F(1) = v(2,t) + F(2)`.
pub fn refine_thresholds(lambda: f64, depth: &DepthFunction, k: usize) -> Result<Vec<f64>> {
    validate_lambda(lambda)?;
    match k {
        0..=3 => Ok(Vec::new()),
        4 => {
            let gap = |t: f64| -> f64 {
                let v3 = closed_form_small_k(lambda, depth, 3, t).expect("k=3 closed form");
                let v2 = closed_form_small_k(lambda, depth, 2, t).expect("k=2 closed form");
                (v3 + depth.cost(1.0)) - (v2 + depth.cost(2.0))
            };
            // trading 2 is optimal at T=0 (gap >= 0) and 1 for large T (gap < 0)
            let mut lo = 0.0;
            let mut hi = 1.0;
            while gap(hi) > 0.0 {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::NumericGuard(
                        "threshold bisection found no sign change".into(),
                    ));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(vec![0.5 * (lo + hi)])
        }
        _ => Err(Error::Domain(format!(
            "threshold refinement needs closed-form continuations (k <= 4), requested k={k}"
        ))),
    }
}

/// Distribution of the number of arrivals in `[0, T]`, either analytic or
/// estimated from simulated paths.
#[derive(Debug, Clone)]
pub struct CountDistribution {
    /// `probs[n] = P(N = n)`.
    pub probs: Vec<f64>,
    /// Aggregated mass `P(N ≥ probs.len())`.
    pub tail: f64,
    /// Number of Monte Carlo paths behind an empirical table (`None` when
    /// analytic).
    pub n_paths: Option<u64>,
}

impl CountDistribution {
    /// Poisson counts with the given mean, tabulated until the remaining
    /// tail falls below 1e-12 and at least `n_min` entries exist.
    pub fn poisson(mean: f64, n_min: usize) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Domain(format!(
                "Poisson mean must be positive, got {mean}"
            )));
        }
        let mut probs = Vec::with_capacity(n_min + 16);
        let mut term = (-mean).exp();
        let mut cum = 0.0;
        let mut n = 0usize;
        while probs.len() < n_min || 1.0 - cum > 1e-12 {
            probs.push(term);
            cum += term;
            n += 1;
            term *= mean / n as f64;
            if n > 1_000_000 {
                return Err(Error::NumericGuard(
                    "Poisson count table failed to converge".into(),
                ));
            }
        }
        Ok(Self {
            probs,
            tail: (1.0 - cum).max(0.0),
            n_paths: None,
        })
    }

    /// Empirical table from a histogram of observed counts.
    pub fn from_counts(histogram: &[u64]) -> Result<Self> {
        let total: u64 = histogram.iter().sum();
        if total == 0 {
            return Err(Error::Domain("empty count histogram".into()));
        }
        let probs = histogram.iter().map(|c| *c as f64 / total as f64).collect();
        Ok(Self {
            probs,
            tail: 0.0,
            n_paths: Some(total),
        })
    }

    /// `P(N = n)`; zero beyond the table (the tail is aggregated separately).
    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// Total probability mass (should be 1 up to rounding).
    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail
    }

    /// Expectation of a payoff `g(N)`, with a Monte Carlo standard error
    /// when the table is empirical. `g` must be constant for
    /// `n ≥ const_from` so the aggregated tail can be priced exactly.
    fn expectation(
        &self,
        g: impl Fn(usize) -> f64,
        const_from: usize,
    ) -> Result<(f64, Option<f64>)> {
        let total = self.total();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NumericGuard(format!(
                "count distribution mass is {total}, expected 1"
            )));
        }
        if self.tail > 0.0 && self.probs.len() < const_from {
            return Err(Error::Config(format!(
                "count table ends at n={} but payoff varies through n={}",
                self.probs.len() - 1,
                const_from
            )));
        }
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for (n, p) in self.probs.iter().enumerate() {
            let gn = g(n);
            mean += p * gn;
            mean_sq += p * gn * gn;
        }
        let g_tail = g(const_from.max(self.probs.len()));
        mean += self.tail * g_tail;
        mean_sq += self.tail * g_tail * g_tail;
        let se = self
            .n_paths
            .map(|n| ((mean_sq - mean * mean).max(0.0) / n as f64).sqrt());
        Ok((mean, se))
    }
}

/// A bound value together with its Monte Carlo standard error (when the
/// underlying count distribution is empirical).
#[derive(Debug, Clone, Copy)]
pub struct BoundEstimate {
    /// Bound value.
    pub value: f64,
    /// Standard error of the estimate; `None` for analytic count tables.
    pub std_error: Option<f64>,
}

/// Cost a clairvoyant pays when told `N(T) = n` in advance: `n+1` equal
/// blocks of `k/(n+1)` units (allowed non-integer, but no block below one
/// unit), so `k` unit blocks once `n ≥ k-1`.
pub fn genie_payoff(depth: &DepthFunction, k: usize, n: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if n < k - 1 {
        let pieces = (n + 1) as f64;
        pieces * depth.cost(k as f64 / pieces)
    } else {
        k as f64 * depth.cost(1.0)
    }
}

/// Realized cost of the constant-`c` strategy given `n` arrivals: sell
/// `min(c, remaining)` at each arrival, liquidate the rest at the deadline.
pub fn constant_strategy_payoff(depth: &DepthFunction, k: usize, c: usize, n: usize) -> f64 {
    debug_assert!(c >= 1);
    let q = k / c;
    let r = k - q * c;
    let cut = if r > 0 { q + 1 } else { q };
    if n >= cut {
        q as f64 * depth.cost(c as f64) + depth.cost(r as f64)
    } else {
        n as f64 * depth.cost(c as f64) + depth.cost((k - n * c) as f64)
    }
}

/// Clairvoyant ("genie") lower bound on `v(k, T)`: the expectation of
/// [`genie_payoff`] over the arrival-count distribution.
pub fn lower_bound(
    counts: &CountDistribution,
    depth: &DepthFunction,
    k: usize,
) -> Result<BoundEstimate> {
    let (value, std_error) =
        counts.expectation(|n| genie_payoff(depth, k, n), k.saturating_sub(1))?;
    Ok(BoundEstimate { value, std_error })
}

/// Constant-strategy upper bound on `v(k, T)`: the cheapest expected cost
/// over block sizes `c ∈ {1..k}`, returned with the optimal `c`.
pub fn upper_bound(
    counts: &CountDistribution,
    depth: &DepthFunction,
    k: usize,
) -> Result<(BoundEstimate, usize)> {
    if k == 0 {
        return Ok((
            BoundEstimate {
                value: 0.0,
                std_error: None,
            },
            1,
        ));
    }
    let mut best: Option<(f64, Option<f64>, usize)> = None;
    for c in 1..=k {
        let cut = k / c + usize::from(k % c != 0);
        let (value, se) = counts.expectation(|n| constant_strategy_payoff(depth, k, c, n), cut)?;
        if best.map_or(true, |(bv, _, _)| value < bv) {
            best = Some((value, se, c));
        }
    }
    let (value, std_error, c) = best.expect("k >= 1 so some c exists");
    Ok((BoundEstimate { value, std_error }, c))
}
