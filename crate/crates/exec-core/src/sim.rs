//! Order-flow simulation and pathwise policy execution.
//!
//! Paths are simulated exactly: regime holding times are exponential with
//! rate `−q_ii`, transitions follow the embedded chain, and within a
//! regime-`i` sojourn arrivals form a Poisson process of rate `λ_i` with
//! i.i.d. sizes from `ν_i`. Executing a policy along a path replays the
//! inventory dynamics: at each arrival the policy is consulted for a sale
//! amount (optionally capped by the order size), and whatever remains at
//! the deadline is liquidated in one block.
//!
//! Randomness is counter-based: every path derives from `(seed, stream)`
//! where `stream` is the path index, so parallel batches are replayable
//! path-for-path regardless of scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::base::{CountDistribution, PolicySurface};
use crate::error::{Error, Result};
use crate::filter::{conditional_flow, jump_update};
use crate::markov::RegimePolicySurface;
use crate::model::{Belief, DepthFunction, RegimeModel};
use crate::partial::BeliefPolicySurface;
use crate::util::{floor_index, kahan_sum};

/// How a simulated chain is initialized.
#[derive(Debug, Clone)]
pub enum StartState {
    /// Start in a known regime (0-based index).
    Regime(usize),
    /// Draw the starting regime from a belief.
    Mixed(Belief),
}

impl StartState {
    fn draw<R: Rng>(&self, m: usize, rng: &mut R) -> Result<usize> {
        match self {
            StartState::Regime(i) => {
                if *i >= m {
                    return Err(Error::Config(format!(
                        "start regime {i} out of range for {m} regimes"
                    )));
                }
                Ok(*i)
            }
            StartState::Mixed(pi) => {
                if pi.len() != m {
                    return Err(Error::Config(format!(
                        "start belief has {} entries, model has {m} regimes",
                        pi.len()
                    )));
                }
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for (i, w) in pi.weights().iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return Ok(i);
                    }
                }
                Ok(m - 1)
            }
        }
    }
}

/// A single matching order: arrival epoch, size, and the regime that
/// produced it (hidden from filtered executors).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEvent {
    /// Arrival time in `[0, T)`.
    pub time: f64,
    /// Order size (≥ 1).
    pub size: usize,
    /// Regime in force at the arrival.
    pub regime: usize,
}

/// One simulated realization of the modulated order flow.
#[derive(Debug, Clone)]
pub struct OrderFlowPath {
    horizon: f64,
    events: Vec<FlowEvent>,
    regime_path: Vec<(f64, usize)>,
    seed: u64,
    stream: u64,
}

impl OrderFlowPath {
    /// Deadline the path was simulated up to.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Arrivals in increasing time order.
    pub fn events(&self) -> &[FlowEvent] {
        &self.events
    }

    /// Number of arrivals before the deadline.
    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    /// Regime trajectory as `(switch time, regime)`, starting at `t = 0`.
    pub fn regime_path(&self) -> &[(f64, usize)] {
        &self.regime_path
    }

    /// Base seed the path was drawn from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream id (path index within a batch).
    pub fn stream(&self) -> u64 {
        self.stream
    }
}

fn exp_draw<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    loop {
        // 1 - U ∈ (0, 1], so the log is finite; redraw the measure-zero 0
        let g = -(1.0 - rng.random::<f64>()).ln() / rate;
        if g > 0.0 {
            return g;
        }
    }
}

fn next_regime<R: Rng>(model: &RegimeModel, i: usize, rng: &mut R) -> usize {
    let total = -model.rate(i, i);
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = i;
    for j in 0..model.num_regimes() {
        if j == i {
            continue;
        }
        let q = model.rate(i, j);
        if q <= 0.0 {
            continue;
        }
        last = j;
        acc += q;
        if u < acc {
            return j;
        }
    }
    last
}

/// Simulate one order-flow path exactly, deterministic in `(seed, stream)`.
pub fn simulate_path(
    model: &RegimeModel,
    t_max: f64,
    start: &StartState,
    seed: u64,
    stream: u64,
) -> Result<OrderFlowPath> {
    model.validate()?;
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::Domain(format!(
            "horizon must be finite and >= 0, got {t_max}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut regime = start.draw(model.num_regimes(), &mut rng)?;
    let mut events = Vec::new();
    let mut regime_path = vec![(0.0, regime)];
    let mut t = 0.0;
    while t < t_max {
        let hold = -model.rate(regime, regime);
        let sojourn_end = if hold > 0.0 {
            t + exp_draw(&mut rng, hold)
        } else {
            f64::INFINITY
        };
        let seg_end = sojourn_end.min(t_max);
        let lam = model.intensity(regime);
        if lam > 0.0 {
            let mut s = t + exp_draw(&mut rng, lam);
            // events exactly at the deadline are excluded (P-null tie)
            while s < seg_end {
                let size = model.sizes(regime).sample(rng.random::<f64>());
                events.push(FlowEvent {
                    time: s,
                    size,
                    regime,
                });
                s += exp_draw(&mut rng, lam);
            }
        }
        if sojourn_end >= t_max {
            break;
        }
        t = sojourn_end;
        regime = next_regime(model, regime, &mut rng);
        regime_path.push((t, regime));
    }
    Ok(OrderFlowPath {
        horizon: t_max,
        events,
        regime_path,
        seed,
        stream,
    })
}

/// Which solved policy drives the execution (or a fixed-size benchmark).
#[derive(Debug, Clone, Copy)]
pub enum PolicyRef<'a> {
    /// Single-regime surface: actions looked up by `(inventory, T−t)`.
    Base(&'a PolicySurface),
    /// Full-observation surface: actions read the path's current regime.
    Regime(&'a RegimePolicySurface),
    /// Belief surface: actions use the filtered belief, never the regime.
    Belief(&'a BeliefPolicySurface),
    /// Sell `min(c, inventory)` at every arrival.
    Constant(usize),
}

/// Pathwise account of executing a policy: trades, leftover, total cost.
#[derive(Debug, Clone)]
pub struct ExecutionReport {
    trades: Vec<(f64, usize)>,
    leftover: usize,
    total_cost: f64,
    beliefs: Vec<Belief>,
}

impl ExecutionReport {
    /// Executed trades as `(time, amount)`, amounts ≥ 1.
    pub fn trades(&self) -> &[(f64, usize)] {
        &self.trades
    }

    /// Inventory liquidated in one block at the deadline.
    pub fn leftover(&self) -> usize {
        self.leftover
    }

    /// `Σ F(amount) + F(leftover)`.
    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    /// Post-arrival beliefs at each decision (filtered executions only).
    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }
}

fn check_surface(
    depth: &DepthFunction,
    surface_depth: &DepthFunction,
    horizon: f64,
    k_max: usize,
    path: &OrderFlowPath,
    k: usize,
) -> Result<()> {
    if depth != surface_depth {
        return Err(Error::Config(
            "depth function does not match the one the policy was solved with".into(),
        ));
    }
    if horizon + 1e-9 < path.horizon() {
        return Err(Error::Config(format!(
            "policy horizon {horizon} is shorter than the path horizon {}",
            path.horizon()
        )));
    }
    if k > k_max {
        return Err(Error::Config(format!(
            "initial inventory {k} exceeds the policy's k_max {k_max}"
        )));
    }
    Ok(())
}

/// Execute a policy along a simulated path.
///
/// At each arrival the policy is asked for a sale amount given the current
/// inventory and time-to-go (plus regime or belief where applicable); the
/// fill is capped by the inventory and, when `constrained`, by the order
/// size. With a belief policy, `filter_start` seeds the filter, which is
/// advanced by the conditional flow between arrivals and the jump update at
/// them — the executor never reads the path's hidden regimes.
pub fn execute(
    model: &RegimeModel,
    path: &OrderFlowPath,
    policy: &PolicyRef<'_>,
    depth: &DepthFunction,
    k: usize,
    constrained: bool,
    filter_start: Option<&Belief>,
) -> Result<ExecutionReport> {
    match policy {
        PolicyRef::Belief(s) => {
            let pi0 = filter_start.ok_or_else(|| {
                Error::Config("a belief policy needs a starting belief to filter from".into())
            })?;
            if pi0.len() != model.num_regimes() || s.mesh().num_regimes() != model.num_regimes() {
                return Err(Error::Config(format!(
                    "belief/model regime count mismatch: belief {}, mesh {}, model {}",
                    pi0.len(),
                    s.mesh().num_regimes(),
                    model.num_regimes()
                )));
            }
            let d = s.depth();
            check_surface(depth, &d, s.horizon(), s.k_max(), path, k)?;
        }
        PolicyRef::Base(s) => {
            if filter_start.is_some() {
                return Err(Error::Config(
                    "filtered execution needs a belief policy".into(),
                ));
            }
            let d = s.depth();
            check_surface(depth, &d, s.horizon(), s.k_max(), path, k)?;
        }
        PolicyRef::Regime(s) => {
            if filter_start.is_some() {
                return Err(Error::Config(
                    "filtered execution needs a belief policy".into(),
                ));
            }
            if s.num_regimes() != model.num_regimes() {
                return Err(Error::Config(format!(
                    "policy has {} regimes, model has {}",
                    s.num_regimes(),
                    model.num_regimes()
                )));
            }
            let d = s.depth();
            check_surface(depth, &d, s.horizon(), s.k_max(), path, k)?;
        }
        PolicyRef::Constant(c) => {
            if filter_start.is_some() {
                return Err(Error::Config(
                    "filtered execution needs a belief policy".into(),
                ));
            }
            if *c == 0 {
                return Err(Error::Domain("constant strategy needs c >= 1".into()));
            }
        }
    }

    let f = depth.table(k);
    let mut inv = k;
    let mut cost = 0.0;
    let mut trades = Vec::new();
    let mut beliefs = Vec::new();
    let mut belief = filter_start.cloned();
    let mut last_t = 0.0;
    for ev in &path.events {
        if inv == 0 {
            break;
        }
        let remaining_t = path.horizon - ev.time;
        let action = match policy {
            PolicyRef::Base(s) => s.action_at(inv, remaining_t) as usize,
            PolicyRef::Regime(s) => s.action_at(ev.regime, inv, remaining_t) as usize,
            PolicyRef::Constant(c) => *c,
            PolicyRef::Belief(s) => {
                let pi = belief.take().expect("belief state initialized above");
                let moved = conditional_flow(model, ev.time - last_t, &pi)?;
                let post = jump_update(model, &moved, ev.size)?;
                let j = floor_index(remaining_t, s.dt(), s.n_steps());
                let (_, a) = s.best_action(inv, j, &post, ev.size)?;
                beliefs.push(post.clone());
                belief = Some(post);
                a as usize
            }
        };
        let mut fill = action.min(inv);
        if constrained {
            fill = fill.min(ev.size);
        }
        if fill > 0 {
            cost += f[fill];
            trades.push((ev.time, fill));
            inv -= fill;
        }
        last_t = ev.time;
    }
    cost += f[inv];
    debug_assert_eq!(trades.iter().map(|(_, a)| a).sum::<usize>() + inv, k);
    Ok(ExecutionReport {
        trades,
        leftover: inv,
        total_cost: cost,
        beliefs,
    })
}

/// Empirical distribution of the number of arrivals before `t_max`.
pub fn count_distribution(
    model: &RegimeModel,
    t_max: f64,
    start: &StartState,
    n_paths: usize,
    seed: u64,
) -> Result<CountDistribution> {
    if n_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    model.validate()?;
    let counts = (0..n_paths)
        .into_par_iter()
        .map(|p| simulate_path(model, t_max, start, seed, p as u64).map(|path| path.num_events()))
        .collect::<Result<Vec<_>>>()?;
    let max_n = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0u64; max_n + 1];
    for n in counts {
        hist[n] += 1;
    }
    CountDistribution::from_counts(&hist)
}

/// Everything a Monte Carlo batch needs besides the model and policy.
#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Initial inventory.
    pub k: usize,
    /// Deadline.
    pub t_max: f64,
    /// Chain initialization.
    pub start: StartState,
    /// Cap fills at the arriving order's size.
    pub constrained: bool,
    /// Belief the filter starts from (belief policies only).
    pub filter_start: Option<Belief>,
    /// Number of independent paths.
    pub n_paths: usize,
    /// Base seed; path `p` uses stream `p`.
    pub seed: u64,
}

/// Outcome of one executed path.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathRecord {
    /// Stream id (path index).
    pub stream: u64,
    /// Number of arrivals on the path.
    pub n_events: usize,
    /// Pathwise execution cost.
    pub cost: f64,
}

/// Simulate and execute `spec.n_paths` independent paths in parallel.
/// Record order and contents are deterministic in the seed.
pub fn execute_batch(
    model: &RegimeModel,
    policy: &PolicyRef<'_>,
    depth: &DepthFunction,
    spec: &RunSpec,
) -> Result<Vec<PathRecord>> {
    if spec.n_paths == 0 {
        return Err(Error::Config("need at least one path".into()));
    }
    model.validate()?;
    (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            let path = simulate_path(model, spec.t_max, &spec.start, spec.seed, p as u64)?;
            let report = execute(
                model,
                &path,
                policy,
                depth,
                spec.k,
                spec.constrained,
                spec.filter_start.as_ref(),
            )?;
            Ok(PathRecord {
                stream: p as u64,
                n_events: path.num_events(),
                cost: report.total_cost(),
            })
        })
        .collect()
}

/// Write per-path records as CSV (`seed,stream,n_events,cost`).
pub fn write_records_csv<W: Write>(
    records: &[PathRecord],
    seed: u64,
    w: &mut W,
    provenance: &str,
) -> std::io::Result<()> {
    if !provenance.is_empty() {
        writeln!(w, "# {provenance}")?;
    }
    writeln!(w, "seed,stream,n_events,cost")?;
    for r in records {
        writeln!(
            w,
            "{seed},{},{},{}",
            r.stream,
            r.n_events,
            crate::util::fmt_sig10(r.cost)
        )?;
    }
    Ok(())
}

const HIST_BUCKETS: usize = 30;

/// Monte Carlo cost estimate with a fixed-width cost histogram.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    mean: f64,
    std_error: Option<f64>,
    bucket_width: f64,
    histogram: Vec<(f64, u64)>,
    n_paths: usize,
}

impl McEstimate {
    /// Sample mean cost.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean (`None` for a single path).
    pub fn std_error(&self) -> Option<f64> {
        self.std_error
    }

    /// Histogram as `(bucket left edge, count)`; bucket width is fixed.
    pub fn histogram(&self) -> &[(f64, u64)] {
        &self.histogram
    }

    /// Width of each histogram bucket.
    pub fn bucket_width(&self) -> f64 {
        self.bucket_width
    }

    /// Number of paths behind the estimate.
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// JSON summary (mean, s.e., histogram buckets).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Summarize per-path costs into a mean, standard error, and histogram.
pub fn summarize(records: &[PathRecord]) -> McEstimate {
    let n = records.len();
    let mean = kahan_sum(records.iter().map(|r| r.cost)) / n as f64;
    let std_error = if n >= 2 {
        let ss = kahan_sum(records.iter().map(|r| (r.cost - mean) * (r.cost - mean)));
        Some((ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
    } else {
        None
    };
    let lo = records.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
    let hi = records
        .iter()
        .map(|r| r.cost)
        .fold(f64::NEG_INFINITY, f64::max);
    let (bucket_width, histogram) = if hi > lo {
        let width = (hi - lo) / HIST_BUCKETS as f64;
        let mut counts = vec![0u64; HIST_BUCKETS];
        for r in records {
            let b = (((r.cost - lo) / width) as usize).min(HIST_BUCKETS - 1);
            counts[b] += 1;
        }
        (
            width,
            counts
                .iter()
                .enumerate()
                .map(|(b, c)| (lo + b as f64 * width, *c))
                .collect(),
        )
    } else {
        (0.0, vec![(lo, n as u64)])
    };
    McEstimate {
        mean,
        std_error,
        bucket_width,
        histogram,
        n_paths: n,
    }
}

/// Batched simulate-and-execute: mean cost, standard error, histogram.
/// Deterministic in `spec.seed`.
pub fn mc_cost(
    model: &RegimeModel,
    policy: &PolicyRef<'_>,
    depth: &DepthFunction,
    spec: &RunSpec,
) -> Result<McEstimate> {
    Ok(summarize(&execute_batch(model, policy, depth, spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::solve_base;
    use crate::markov::solve_markov;
    use crate::model::SizeDistribution;
    use crate::partial::solve_partial;

    fn demo_model() -> RegimeModel {
        RegimeModel::new(
            vec![-2.0, 2.0, 0.0, 1.0, -4.0, 3.0, 0.0, 2.0, -2.0],
            vec![3.0, 3.0, 1.0],
            vec![
                SizeDistribution::truncated_poisson(8.0, 60).unwrap(),
                SizeDistribution::truncated_poisson(4.0, 40).unwrap(),
                SizeDistribution::truncated_poisson(4.0, 40).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn paths_are_reproducible_and_well_formed() {
        let model = demo_model();
        for p in 0..40 {
            let a = simulate_path(&model, 1.0, &StartState::Regime(0), 7, p).unwrap();
            let b = simulate_path(&model, 1.0, &StartState::Regime(0), 7, p).unwrap();
            assert_eq!(a.events(), b.events());
            assert_eq!(a.regime_path(), b.regime_path());
            // strictly increasing epochs in [0, T), sizes >= 1
            let mut prev = 0.0;
            for ev in a.events() {
                assert!(ev.time > prev && ev.time < 1.0);
                assert!(ev.size >= 1);
                prev = ev.time;
            }
            assert_eq!(a.regime_path()[0], (0.0, 0));
            // each event's regime matches the trajectory at its epoch
            for ev in a.events() {
                let current = a
                    .regime_path()
                    .iter()
                    .take_while(|(s, _)| *s <= ev.time)
                    .last()
                    .unwrap()
                    .1;
                assert_eq!(ev.regime, current);
            }
        }
        // different seed or stream moves the path
        let a = simulate_path(&model, 1.0, &StartState::Regime(0), 7, 1).unwrap();
        let c = simulate_path(&model, 1.0, &StartState::Regime(0), 8, 1).unwrap();
        assert_ne!(a.events(), c.events());
    }

    #[test]
    fn silent_regime_produces_no_events() {
        let model = RegimeModel::new(
            vec![0.0],
            vec![0.0],
            vec![SizeDistribution::from_pmf(vec![1.0]).unwrap()],
        )
        .unwrap();
        for p in 0..20 {
            let path = simulate_path(&model, 5.0, &StartState::Regime(0), 3, p).unwrap();
            assert_eq!(path.num_events(), 0);
            assert_eq!(path.regime_path(), &[(0.0, 0)]);
        }
    }

    #[test]
    fn poisson_count_statistics() {
        // m=1, lambda=1, T=1: counts are Poisson(1)
        let model = RegimeModel::poisson(1.0).unwrap();
        let n_paths = 20_000;
        let dist = count_distribution(&model, 1.0, &StartState::Regime(0), n_paths, 11).unwrap();
        let e1 = (-1.0f64).exp();
        for (n, want) in [(0usize, e1), (1, e1), (2, e1 / 2.0), (3, e1 / 6.0)] {
            let got = dist.prob(n);
            let se = (want * (1.0 - want) / n_paths as f64).sqrt();
            assert!(
                (got - want).abs() < 3.0 * se + 1e-12,
                "P(N={n}): got {got}, want {want} (3 s.e. = {:.2e})",
                3.0 * se
            );
        }
    }

    #[test]
    fn zero_horizon_is_a_point_mass_at_zero() {
        let dist = count_distribution(&demo_model(), 0.0, &StartState::Regime(1), 500, 5).unwrap();
        assert_eq!(dist.prob(0), 1.0);
    }

    #[test]
    fn busier_regime_sees_more_arrivals() {
        // §4-style model: regime 1 (λ=3) vs regime 3 (λ=1)
        let model = demo_model();
        let n_paths = 5_000;
        let mean_events = |start: usize, seed: u64| -> f64 {
            let total: usize = (0..n_paths)
                .map(|p| {
                    simulate_path(&model, 1.0, &StartState::Regime(start), seed, p as u64)
                        .unwrap()
                        .num_events()
                })
                .sum();
            total as f64 / n_paths as f64
        };
        let busy = mean_events(0, 21);
        let quiet = mean_events(2, 22);
        assert!(
            busy > quiet + 0.3,
            "regime-1 start should see clearly more arrivals: {busy} vs {quiet}"
        );
    }

    #[test]
    fn mixed_start_draws_every_regime() {
        let model = demo_model();
        let start = StartState::Mixed(Belief::uniform(3));
        let mut seen = [false; 3];
        for p in 0..200 {
            let path = simulate_path(&model, 0.1, &start, 9, p).unwrap();
            seen[path.regime_path()[0].1] = true;
        }
        assert_eq!(seen, [true; 3]);
    }

    #[test]
    fn execution_conserves_inventory_and_costs_add_up() {
        let model = demo_model();
        let depth = DepthFunction::quadratic();
        let surface = solve_markov(&model, &depth, 12, 1.0, 0.01, false).unwrap();
        let policy = PolicyRef::Regime(&surface);
        for p in 0..60 {
            let path = simulate_path(&model, 1.0, &StartState::Regime(0), 13, p).unwrap();
            let report = execute(&model, &path, &policy, &depth, 12, false, None).unwrap();
            let sold: usize = report.trades().iter().map(|(_, a)| a).sum();
            assert_eq!(sold + report.leftover(), 12);
            // same accumulation order as the executor: trades, then leftover
            let mut want = 0.0;
            for (_, a) in report.trades() {
                want += depth.eval(*a as f64).unwrap();
            }
            want += depth.eval(report.leftover() as f64).unwrap();
            assert_eq!(report.total_cost(), want);
            // trades only happen at arrival epochs
            for (t, _) in report.trades() {
                assert!(path.events().iter().any(|ev| ev.time == *t));
            }
        }
    }

    #[test]
    fn no_events_costs_full_block_and_k1_costs_one_unit() {
        let model = RegimeModel::poisson(1.0).unwrap();
        let depth = DepthFunction::quadratic();
        let surface = solve_base(1.0, &depth, 20, 1.0, 0.01).unwrap();
        let policy = PolicyRef::Base(&surface);
        // hand-built empty path
        let empty = OrderFlowPath {
            horizon: 1.0,
            events: vec![],
            regime_path: vec![(0.0, 0)],
            seed: 0,
            stream: 0,
        };
        let report = execute(&model, &empty, &policy, &depth, 20, false, None).unwrap();
        assert_eq!(report.leftover(), 20);
        assert_eq!(report.total_cost(), 200.0);
        // k=1 always ends up costing F(1), traded or not
        for p in 0..40 {
            let path = simulate_path(&model, 1.0, &StartState::Regime(0), 17, p).unwrap();
            let report = execute(&model, &path, &policy, &depth, 1, false, None).unwrap();
            assert_eq!(report.total_cost(), 0.5);
            assert_eq!(report.trades().len() + report.leftover(), 1);
        }
    }

    #[test]
    fn constrained_fills_respect_order_sizes() {
        let model = RegimeModel::new(
            vec![0.0],
            vec![4.0],
            vec![SizeDistribution::from_pmf(vec![1.0]).unwrap()], // all orders size 1
        )
        .unwrap();
        let depth = DepthFunction::quadratic();
        let surface = solve_base(4.0, &depth, 10, 1.0, 0.01).unwrap();
        let policy = PolicyRef::Base(&surface);
        for p in 0..20 {
            let path = simulate_path(&model, 1.0, &StartState::Regime(0), 23, p).unwrap();
            let report = execute(&model, &path, &policy, &depth, 10, true, None).unwrap();
            for (_, a) in report.trades() {
                assert_eq!(*a, 1, "unit-size orders cap every constrained fill at 1");
            }
        }
    }

    #[test]
    fn filtered_execution_tracks_beliefs() {
        let model = demo_model();
        let depth = DepthFunction::quadratic();
        let surface = solve_partial(&model, &depth, 8, 0.5, 0.02, 0.25, false).unwrap();
        let policy = PolicyRef::Belief(&surface);
        let prior = Belief::corner(3, 0);
        let mut executed_some = false;
        for p in 0..30 {
            let path = simulate_path(&model, 0.5, &StartState::Regime(0), 29, p).unwrap();
            let report = execute(&model, &path, &policy, &depth, 8, false, Some(&prior)).unwrap();
            let sold: usize = report.trades().iter().map(|(_, a)| a).sum();
            assert_eq!(sold + report.leftover(), 8);
            // one belief per consulted arrival, each normalized
            assert!(report.beliefs().len() <= path.num_events());
            for pi in report.beliefs() {
                let total: f64 = pi.weights().iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
            if !report.beliefs().is_empty() {
                executed_some = true;
            }
        }
        assert!(executed_some);
    }

    #[test]
    fn mode_mismatches_are_rejected() {
        let model = demo_model();
        let depth = DepthFunction::quadratic();
        let base = solve_base(1.0, &depth, 10, 1.0, 0.01).unwrap();
        let partial = solve_partial(&model, &depth, 6, 0.2, 0.02, 0.5, false).unwrap();
        let path = simulate_path(&model, 0.2, &StartState::Regime(0), 31, 0).unwrap();
        let prior = Belief::uniform(3);
        // belief policy without a filter prior
        let err = execute(
            &model,
            &path,
            &PolicyRef::Belief(&partial),
            &depth,
            6,
            false,
            None,
        );
        assert!(matches!(err, Err(Error::Config(_))));
        // filter prior with a non-belief policy
        let err = execute(
            &model,
            &path,
            &PolicyRef::Base(&base),
            &depth,
            6,
            false,
            Some(&prior),
        );
        assert!(matches!(err, Err(Error::Config(_))));
        // depth mismatch
        let cubic = DepthFunction::new(0.5, 3.0).unwrap();
        let err = execute(
            &model,
            &path,
            &PolicyRef::Base(&base),
            &cubic,
            6,
            false,
            None,
        );
        assert!(matches!(err, Err(Error::Config(_))));
        // inventory beyond the solved surface
        let err = execute(
            &model,
            &path,
            &PolicyRef::Base(&base),
            &depth,
            11,
            false,
            None,
        );
        assert!(matches!(err, Err(Error::Config(_))));
        // path longer than the policy horizon
        let long = simulate_path(&model, 2.0, &StartState::Regime(0), 31, 0).unwrap();
        let err = execute(
            &model,
            &long,
            &PolicyRef::Base(&base),
            &depth,
            6,
            false,
            None,
        );
        assert!(matches!(err, Err(Error::Config(_))));
        // constant strategy must trade something
        let err = execute(
            &model,
            &path,
            &PolicyRef::Constant(0),
            &depth,
            6,
            false,
            None,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn mc_cost_is_deterministic_and_reports_se() {
        let model = RegimeModel::poisson(1.0).unwrap();
        let depth = DepthFunction::quadratic();
        let surface = solve_base(1.0, &depth, 10, 1.0, 0.01).unwrap();
        let policy = PolicyRef::Base(&surface);
        let spec = RunSpec {
            k: 10,
            t_max: 1.0,
            start: StartState::Regime(0),
            constrained: false,
            filter_start: None,
            n_paths: 4_000,
            seed: 37,
        };
        let a = mc_cost(&model, &policy, &depth, &spec).unwrap();
        let b = mc_cost(&model, &policy, &depth, &spec).unwrap();
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.std_error(), b.std_error());
        assert!(a.std_error().unwrap() > 0.0);
        let total: u64 = a.histogram().iter().map(|(_, c)| c).sum();
        assert_eq!(total as usize, spec.n_paths);
        // single path: mean is that path's cost, s.e. is undefined
        let one = RunSpec {
            n_paths: 1,
            ..spec.clone()
        };
        let est = mc_cost(&model, &policy, &depth, &one).unwrap();
        assert!(est.std_error().is_none());
        let path = simulate_path(&model, 1.0, &StartState::Regime(0), 37, 0).unwrap();
        let report = execute(&model, &path, &policy, &depth, 10, false, None).unwrap();
        assert_eq!(est.mean(), report.total_cost());
    }

    #[test]
    fn simulated_cost_matches_solver_value() {
        // closure smoke test: executing the solved policy over many paths
        // reproduces v(k, T) up to Monte Carlo noise and O(dt) solver bias
        let model = RegimeModel::poisson(1.0).unwrap();
        let depth = DepthFunction::quadratic();
        let surface = solve_base(1.0, &depth, 10, 1.0, 0.001).unwrap();
        let policy = PolicyRef::Base(&surface);
        let spec = RunSpec {
            k: 10,
            t_max: 1.0,
            start: StartState::Regime(0),
            constrained: false,
            filter_start: None,
            n_paths: 50_000,
            seed: 41,
        };
        let est = mc_cost(&model, &policy, &depth, &spec).unwrap();
        let v = surface.value_at(10, 1.0);
        let band = 3.0 * est.std_error().unwrap() + 5e-3 * v;
        assert!(
            (est.mean() - v).abs() < band,
            "MC {} vs solver {v} (band {band})",
            est.mean()
        );
    }

    #[test]
    fn records_csv_layout() {
        let model = RegimeModel::poisson(1.0).unwrap();
        let depth = DepthFunction::quadratic();
        let surface = solve_base(1.0, &depth, 5, 1.0, 0.01).unwrap();
        let policy = PolicyRef::Base(&surface);
        let spec = RunSpec {
            k: 5,
            t_max: 1.0,
            start: StartState::Regime(0),
            constrained: false,
            filter_start: None,
            n_paths: 3,
            seed: 43,
        };
        let records = execute_batch(&model, &policy, &depth, &spec).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].stream, 2);
        let mut buf = Vec::new();
        write_records_csv(&records, 43, &mut buf, "demo").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# demo");
        assert_eq!(lines[1], "seed,stream,n_events,cost");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("43,0,"));
    }
}
