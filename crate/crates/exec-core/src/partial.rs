//! Partially observed solver: dynamic programming on the belief simplex.
//!
//! The trader never sees the regime; the belief `π` (posterior over regimes)
//! is itself the state, updated by silence between arrivals and tilted by
//! observed sizes. Values live on a simplex mesh (see [`crate::mesh`]) and
//! one backward step applies the first-jump decomposition over `[0, Δt]`:
//!
//! ```text
//! v(k, T_{j+1}, π) = (Σ_i m_i(Δt,π)) · v(k, T_j, x(Δt,π))
//!   + Δt · Σ_y [Σ_i m_i(Δt/2,π) λ_i ν_i(y)]
//!          · min_{a ∈ A(k,y)} [ F(a) + v(k-a, T_j, Π(x(Δt/2,π), y)) ]
//! ```
//!
//! — the exact no-arrival term plus a midpoint quadrature of the
//! first-arrival integral, with inner values interpolated on the mesh at
//! step `j`. `A(k,y)` is `{1..k}` unconstrained or `{1..min(k,y)}` when
//! fills are capped by the arrival size. With one regime the step reduces
//! to explicit Euler on `∂_T v = -λ G` up to `O(Δt²)` per step.
//!
//! All flow quantities (stay weights, per-size jump weights and jump-target
//! interpolation cells) depend only on the node, not on `(k, j)`, and are
//! precomputed once, leaving a multiply-accumulate inner loop.

use std::io::Write;

use crate::base::validate_grid;
use crate::error::{Error, Result};
use crate::filter::FlowCache;
use crate::mesh::{BeliefMesh, CellWeights};
use crate::model::{Belief, DepthFunction, RegimeModel};
use crate::util::{floor_index, fmt_sig10};

/// Value and action surfaces over (belief node, inventory, time step).
#[derive(Debug, Clone)]
pub struct BeliefPolicySurface {
    mesh: BeliefMesh,
    k_max: usize,
    dt: f64,
    n_steps: usize,
    depth: DepthFunction,
    constrained: bool,
    /// idx: `(j*nn + r)*(k_max+1) + k`.
    v: Vec<f64>,
    a: Vec<u32>,
}

impl BeliefPolicySurface {
    /// The belief mesh the surface is defined on.
    pub fn mesh(&self) -> &BeliefMesh {
        &self.mesh
    }

    /// Largest inventory on the grid.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Time step.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Largest grid time to maturity.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Whether fills were capped by the arrival size.
    pub fn constrained(&self) -> bool {
        self.constrained
    }

    /// Depth function the surface was solved for.
    pub fn depth(&self) -> DepthFunction {
        self.depth
    }

    /// Grid time of step `j`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    #[inline]
    fn idx(&self, r: usize, k: usize, j: usize) -> usize {
        (j * self.mesh.num_nodes() + r) * (self.k_max + 1) + k
    }

    /// Value at mesh node `r`.
    pub fn value(&self, r: usize, k: usize, j: usize) -> f64 {
        self.v[self.idx(r, k, j)]
    }

    /// Posted trade at mesh node `r` (the size the trader would submit just
    /// before an arrival, marginalized over the unseen arrival size).
    pub fn action(&self, r: usize, k: usize, j: usize) -> u32 {
        self.a[self.idx(r, k, j)]
    }

    /// Barycentric-linear value and nearest-node action at an arbitrary
    /// belief.
    pub fn interpolate(&self, k: usize, j: usize, pi: &Belief) -> Result<(f64, u32)> {
        let cell = self.mesh.locate(pi)?;
        let mut v = 0.0;
        for (r, w) in cell.iter() {
            v += w * self.value(r, k, j);
        }
        Ok((v, self.action(cell.nearest(), k, j)))
    }

    /// Interpolated value at the nearest grid time not exceeding `t`.
    pub fn value_at(&self, k: usize, t: f64, pi: &Belief) -> Result<f64> {
        let j = floor_index(t, self.dt, self.n_steps);
        Ok(self.interpolate(k, j, pi)?.0)
    }

    /// Best trade against step-`j` continuation values for a belief held
    /// *after* observing an arrival of size `y`: the smallest minimizer of
    /// `F(a) + v(k-a, T_j, π)` over `{1..k}`, capped at `y` when the surface
    /// is constrained. Returns `(cost, action)`.
    pub fn best_action(&self, k: usize, j: usize, pi: &Belief, y: usize) -> Result<(f64, u32)> {
        if k == 0 {
            return Err(Error::Domain(
                "no trade is possible with empty inventory".into(),
            ));
        }
        if y == 0 {
            return Err(Error::Domain("arrival sizes are positive integers".into()));
        }
        let cell = self.mesh.locate(pi)?;
        let cap = if self.constrained { k.min(y) } else { k };
        let mut best = f64::INFINITY;
        let mut best_a = 1u32;
        for a in 1..=cap {
            let mut cont = 0.0;
            for (r, w) in cell.iter() {
                cont += w * self.value(r, k - a, j);
            }
            let obj = self.depth.cost(a as f64) + cont;
            if obj < best {
                best = obj;
                best_a = a as u32;
            }
        }
        Ok((best, best_a))
    }

    /// Write the surface as CSV
    /// (`k,T,node,pi_1..pi_m,v,a`, 10 significant digits).
    pub fn write_csv<W: Write>(&self, w: &mut W, provenance: &str) -> std::io::Result<()> {
        if !provenance.is_empty() {
            writeln!(w, "# {provenance}")?;
        }
        let m = self.mesh.num_regimes();
        let belief_cols: Vec<String> = (1..=m).map(|i| format!("pi_{i}")).collect();
        writeln!(w, "k,T,node,{},v,a", belief_cols.join(","))?;
        for k in 0..=self.k_max {
            for j in 0..=self.n_steps {
                for r in 0..self.mesh.num_nodes() {
                    let pi: Vec<String> = self
                        .mesh
                        .node(r)
                        .weights()
                        .iter()
                        .map(|x| fmt_sig10(*x))
                        .collect();
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        k,
                        fmt_sig10(self.time(j)),
                        r,
                        pi.join(","),
                        fmt_sig10(self.value(r, k, j)),
                        self.action(r, k, j)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Per-node flow data reused by every `(k, j)`.
struct NodeFlows {
    /// `Σ_i m_i(Δt, node)`: probability of no arrival during a step.
    p_stay: Vec<f64>,
    /// Interpolation cell of the silent-step belief `x(Δt, node)`.
    stay: Vec<CellWeights>,
    /// `Σ_i m_i(Δt/2, node) λ_i ν_i(y)` flattened as `r*y_max + (y-1)`.
    jump_w: Vec<f64>,
    /// Interpolation cell of the post-jump belief, same layout.
    jump: Vec<CellWeights>,
    /// Cell of the size-marginalized post-jump belief (action recording).
    marginal: Vec<CellWeights>,
    y_max: usize,
}

fn precompute_flows(model: &RegimeModel, mesh: &BeliefMesh, dt: f64) -> Result<NodeFlows> {
    let m = model.num_regimes();
    let nn = mesh.num_nodes();
    let y_max = model.max_y();
    let cache = FlowCache::new(model, dt)?;
    let mut flows = NodeFlows {
        p_stay: Vec::with_capacity(nn),
        stay: Vec::with_capacity(nn),
        jump_w: Vec::with_capacity(nn * y_max),
        jump: Vec::with_capacity(nn * y_max),
        marginal: Vec::with_capacity(nn),
        y_max,
    };
    for r in 0..nn {
        let node = mesh.node(r).weights();
        let full = cache.step(node);
        let p_stay: f64 = full.iter().sum();
        if !(p_stay > 0.0) {
            return Err(Error::NumericGuard(format!(
                "no-arrival probability vanished over one step at node {r}"
            )));
        }
        let x: Vec<f64> = full.iter().map(|z| z / p_stay).collect();
        flows.p_stay.push(p_stay);
        flows.stay.push(mesh.locate(&Belief::new(x)?)?);

        let half = cache.half_step(node);
        let mut marginal = vec![0.0; m];
        for y in 1..=y_max {
            let mut w = 0.0;
            let mut tilt = vec![0.0; m];
            for i in 0..m {
                let z = half[i] * model.intensity(i) * model.sizes(i).pmf(y);
                tilt[i] = z;
                w += z;
            }
            flows.jump_w.push(w);
            if w > 0.0 {
                for (mg, t) in marginal.iter_mut().zip(&tilt) {
                    *mg += t;
                }
                let post: Vec<f64> = tilt.iter().map(|z| z / w).collect();
                flows.jump.push(mesh.locate(&Belief::new(post)?)?);
            } else {
                // zero arrival probability for this size at this node; the
                // weight annihilates the term, the cell is a placeholder
                flows.jump.push(CellWeights::single(r));
            }
        }
        let total: f64 = marginal.iter().sum();
        if total > 0.0 {
            let post: Vec<f64> = marginal.iter().map(|z| z / total).collect();
            flows.marginal.push(mesh.locate(&Belief::new(post)?)?);
        } else {
            flows.marginal.push(CellWeights::single(r));
        }
    }
    Ok(flows)
}

/// Solve the partially observed problem on the belief mesh.
///
/// `h` is the mesh spacing (`1/h` subdivisions per simplex edge);
/// `constrained` caps fills at the arrival's own size. Meshes are limited
/// to `m ≤ 4` regimes.
pub fn solve_partial(
    model: &RegimeModel,
    depth: &DepthFunction,
    k_max: usize,
    t_max: f64,
    dt: f64,
    h: f64,
    constrained: bool,
) -> Result<BeliefPolicySurface> {
    let n_steps = validate_grid(k_max, t_max, dt)?;
    let m = model.num_regimes();
    let mesh = BeliefMesh::with_spacing(m, h)?;
    let nn = mesh.num_nodes();
    let kk = k_max + 1;
    let f = depth.table(k_max);
    let flows = precompute_flows(model, &mesh, dt)?;
    let y_max = flows.y_max;

    let mut v = vec![0.0; (n_steps + 1) * nn * kk];
    let mut a = vec![0u32; (n_steps + 1) * nn * kk];

    // terminal values and actions: v = F(k), a = floor(k/2) split (for k >= 2)
    for r in 0..nn {
        v[r * kk..(r + 1) * kk].copy_from_slice(&f);
        for k in 1..=k_max {
            let mut best = f64::INFINITY;
            let mut best_a = 1u32;
            for ai in 1..=k {
                let obj = f[ai] + f[k - ai];
                if obj < best {
                    best = obj;
                    best_a = ai as u32;
                }
            }
            a[r * kk + k] = best_a;
        }
    }

    // interpolated continuation buffers, refilled each step
    let stride = nn * kk;
    let mut jump_cont = vec![0.0; nn * y_max * kk];
    let mut stay_cont = vec![0.0; nn * kk];
    let mut marg_cont = vec![0.0; kk];

    for j in 0..n_steps {
        let (past, future) = v.split_at_mut((j + 1) * stride);
        let prev = &past[j * stride..];
        let next = &mut future[..stride];

        // interpolate every continuation row once per step
        jump_cont.iter_mut().for_each(|x| *x = 0.0);
        stay_cont.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..nn {
            for (vert, w) in flows.stay[r].iter() {
                let src = &prev[vert * kk..(vert + 1) * kk];
                let dst = &mut stay_cont[r * kk..(r + 1) * kk];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
            for y in 1..=y_max {
                let e = r * y_max + (y - 1);
                if flows.jump_w[e] == 0.0 {
                    continue;
                }
                for (vert, w) in flows.jump[e].iter() {
                    let src = &prev[vert * kk..(vert + 1) * kk];
                    let dst = &mut jump_cont[e * kk..(e + 1) * kk];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }

        for r in 0..nn {
            // size-marginalized continuation row for action recording
            marg_cont.iter_mut().for_each(|x| *x = 0.0);
            for (vert, w) in flows.marginal[r].iter() {
                let src = &prev[vert * kk..(vert + 1) * kk];
                for (d, s) in marg_cont.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
            for k in 1..=k_max {
                let mut jump_sum = 0.0;
                for y in 1..=y_max {
                    let e = r * y_max + (y - 1);
                    let wy = flows.jump_w[e];
                    if wy == 0.0 {
                        continue;
                    }
                    let cont = &jump_cont[e * kk..(e + 1) * kk];
                    let cap = if constrained { k.min(y) } else { k };
                    let mut best = f64::INFINITY;
                    for ai in 1..=cap {
                        let obj = f[ai] + cont[k - ai];
                        if obj < best {
                            best = obj;
                        }
                    }
                    jump_sum += wy * best;
                }
                let value = flows.p_stay[r] * stay_cont[r * kk + k] + dt * jump_sum;
                if !value.is_finite() {
                    return Err(Error::NumericGuard(format!(
                        "non-finite value at node {r}, k={k}, step {}",
                        j + 1
                    )));
                }
                next[r * kk + k] = value;

                // posted order size: best full-fill trade against the
                // marginalized post-jump belief
                let mut best = f64::INFINITY;
                let mut best_a = 1u32;
                for ai in 1..=k {
                    let obj = f[ai] + marg_cont[k - ai];
                    if obj < best {
                        best = obj;
                        best_a = ai as u32;
                    }
                }
                a[(j + 1) * stride + r * kk + k] = best_a;
            }
        }
    }

    Ok(BeliefPolicySurface {
        mesh,
        k_max,
        dt,
        n_steps,
        depth: *depth,
        constrained,
        v,
        a,
    })
}
