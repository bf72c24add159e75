//! Browser bindings for the liquidation solvers. Each export takes plain
//! numbers, runs a solve inside the wasm module, and returns a JSON string
//! (an `{"error": ...}` object on bad input) so the page needs no binding
//! glue beyond `JSON.parse`. Input guardrails keep a mistyped parameter
//! from freezing the tab with a huge grid.

#![warn(missing_docs)]

use std::cell::RefCell;

use exec_core::base::solve_base;
use exec_core::continuous::solve_continuous;
use exec_core::markov::solve_markov;
use exec_core::model::{DepthFunction, RegimeModel, SizeDistribution};
use exec_core::partial::{solve_partial, BeliefPolicySurface};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// The three-regime demo setup: moderately persistent regimes, busy large
/// orders in regime 1, calmer flow elsewhere, quadratic depth.
fn demo_model() -> (DepthFunction, RegimeModel) {
    let model = RegimeModel::new(
        vec![-2.0, 2.0, 0.0, 1.0, -4.0, 3.0, 0.0, 2.0, -2.0],
        vec![3.0, 3.0, 1.0],
        vec![
            SizeDistribution::truncated_poisson(8.0, 60).unwrap(),
            SizeDistribution::truncated_poisson(4.0, 40).unwrap(),
            SizeDistribution::truncated_poisson(4.0, 40).unwrap(),
        ],
    )
    .unwrap();
    (DepthFunction::quadratic(), model)
}

fn err_json(detail: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": detail.to_string() }).to_string()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo payload serializes")
}

/// Single-regime value/action surface as a heatmap payload: grid times plus
/// one row per inventory level for values and for trade sizes.
#[wasm_bindgen]
pub fn base_surface(lambda: f64, k_max: usize, t_max: f64, dt: f64) -> String {
    if !(1..=80).contains(&k_max) {
        return err_json("inventory must lie in 1..=80");
    }
    if !(t_max.is_finite() && t_max > 0.0 && t_max <= 5.0) {
        return err_json("deadline must lie in (0, 5]");
    }
    if !(dt.is_finite() && dt >= 1e-3) {
        return err_json("time step must be at least 0.001");
    }
    let depth = DepthFunction::quadratic();
    let surface = match solve_base(lambda, &depth, k_max, t_max, dt) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    #[derive(Serialize)]
    struct Out {
        k_max: usize,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        actions: Vec<Vec<u32>>,
    }
    let times: Vec<f64> = (0..=surface.n_steps()).map(|j| surface.time(j)).collect();
    let values = (0..=k_max)
        .map(|k| {
            (0..=surface.n_steps())
                .map(|j| surface.value(k, j))
                .collect()
        })
        .collect();
    let actions = (0..=k_max)
        .map(|k| {
            (0..=surface.n_steps())
                .map(|j| surface.action(k, j))
                .collect()
        })
        .collect();
    to_json(&Out {
        k_max,
        times,
        values,
        actions,
    })
}

/// Fully observed values per regime at full inventory, for the comparison
/// strip under the heatmap: `v(K, T; i)` against the single-regime value.
#[wasm_bindgen]
pub fn regime_values(k_max: usize, t_max: f64, dt: f64, constrained: bool) -> String {
    if !(1..=40).contains(&k_max) {
        return err_json("inventory must lie in 1..=40");
    }
    if !(t_max.is_finite() && t_max > 0.0 && t_max <= 2.0) {
        return err_json("deadline must lie in (0, 2]");
    }
    if !(dt.is_finite() && dt >= 5e-3) {
        return err_json("time step must be at least 0.005");
    }
    let (depth, model) = demo_model();
    let surface = match solve_markov(&model, &depth, k_max, t_max, dt, constrained) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    #[derive(Serialize)]
    struct Out {
        times: Vec<f64>,
        /// One series per regime: value at full inventory over time.
        series: Vec<Vec<f64>>,
    }
    let times: Vec<f64> = (0..=surface.n_steps()).map(|j| surface.time(j)).collect();
    let series = (0..3)
        .map(|i| {
            (0..=surface.n_steps())
                .map(|j| surface.value(i, k_max, j))
                .collect()
        })
        .collect();
    to_json(&Out { times, series })
}

const FIELD_K_MAX: usize = 20;
const FIELD_T_MAX: f64 = 1.0;
const FIELD_DT: f64 = 0.02;
const FIELD_H: f64 = 0.1;

thread_local! {
    /// One belief surface per constraint mode, solved on first use; wasm
    /// runs single-threaded so a thread-local cache is process-wide there.
    static FIELD_CACHE: RefCell<[Option<BeliefPolicySurface>; 2]> = RefCell::new([None, None]);
}

/// Belief-simplex action field for the demo model: every mesh node's
/// barycentric weights with the trade size and value at inventory `k` and
/// time-to-maturity `t`. The underlying surface is solved once per
/// constraint mode and cached.
#[wasm_bindgen]
pub fn simplex_actions(k: usize, t: f64, constrained: bool) -> String {
    if !(1..=FIELD_K_MAX).contains(&k) {
        return err_json(format!("inventory must lie in 1..={FIELD_K_MAX}"));
    }
    if !(t.is_finite() && (0.0..=FIELD_T_MAX).contains(&t)) {
        return err_json(format!("time must lie in [0, {FIELD_T_MAX}]"));
    }
    FIELD_CACHE.with(|cell| {
        let mut cache = cell.borrow_mut();
        let slot = &mut cache[constrained as usize];
        if slot.is_none() {
            let (depth, model) = demo_model();
            match solve_partial(
                &model,
                &depth,
                FIELD_K_MAX,
                FIELD_T_MAX,
                FIELD_DT,
                FIELD_H,
                constrained,
            ) {
                Ok(s) => *slot = Some(s),
                Err(e) => return err_json(e),
            }
        }
        let surface = slot.as_ref().expect("just filled");
        let j = ((t / FIELD_DT) + 1e-9).floor() as usize;
        let j = j.min(surface.n_steps());
        #[derive(Serialize)]
        struct Node {
            weights: Vec<f64>,
            value: f64,
            action: u32,
        }
        #[derive(Serialize)]
        struct Out {
            k: usize,
            t_grid: f64,
            constrained: bool,
            nodes: Vec<Node>,
        }
        let mesh = surface.mesh();
        let nodes = (0..mesh.num_nodes())
            .map(|r| Node {
                weights: mesh.node(r).weights().to_vec(),
                value: surface.value(r, k, j),
                action: surface.action(r, k, j),
            })
            .collect();
        to_json(&Out {
            k,
            t_grid: surface.time(j),
            constrained,
            nodes,
        })
    })
}

/// Scaling-limit profiles: `u(T)` (value multiplier on `F(k)`) and the
/// sale fraction `a(T)` for large inventories.
#[wasm_bindgen]
pub fn continuous_profile(lambda: f64, gamma: f64, t_max: f64) -> String {
    if !(lambda.is_finite() && lambda > 0.0 && lambda <= 50.0) {
        return err_json("intensity must lie in (0, 50]");
    }
    if !(gamma.is_finite() && gamma > 1.0 && gamma <= 6.0) {
        return err_json("depth exponent must lie in (1, 6]");
    }
    if !(t_max.is_finite() && t_max > 0.0 && t_max <= 5.0) {
        return err_json("deadline must lie in (0, 5]");
    }
    let solution = match solve_continuous(lambda, gamma, t_max, 1e-3) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    #[derive(Serialize)]
    struct Out {
        times: Vec<f64>,
        u: Vec<f64>,
        a: Vec<f64>,
    }
    // thin the 1e-3 grid to keep the payload small; the curves are smooth
    let stride = (solution.n_steps() / 500).max(1);
    let mut times = Vec::new();
    let mut u = Vec::new();
    let mut a = Vec::new();
    for j in (0..=solution.n_steps()).step_by(stride) {
        times.push(j as f64 * solution.dt());
        u.push(solution.u_values()[j]);
        a.push(solution.a_values()[j]);
    }
    to_json(&Out { times, u, a })
}
