//! Regular simplex mesh over beliefs, with barycentric interpolation.
//!
//! Nodes are the rational beliefs `z/n` with non-negative integer counts
//! `z` summing to `n` (spacing `h = 1/n`). An arbitrary belief is expressed
//! as a convex combination of the `m` vertices of its surrounding cell in
//! the standard staircase (Freudenthal) triangulation: map the belief to
//! staircase coordinates `x_i = n Σ_{j>i} π_j`, split into integer and
//! fractional parts, and walk one unit step per coordinate in order of
//! decreasing fractional part. The resulting weights are non-negative, sum
//! to one, and reproduce the belief exactly.
//!
//! Node count grows like `n^{m-1}/(m-1)!`, so meshes are limited to `m ≤ 4`
//! regimes; more regimes need a different value-function representation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::Belief;

/// Largest number of regimes a mesh will represent.
pub const MAX_MESH_REGIMES: usize = 4;

/// Convex weights over (at most `m`) mesh nodes describing one belief.
#[derive(Debug, Clone, Copy)]
pub struct CellWeights {
    verts: [usize; MAX_MESH_REGIMES],
    weights: [f64; MAX_MESH_REGIMES],
    len: u8,
}

impl CellWeights {
    /// Number of nodes with positive weight.
    pub fn len(&self) -> usize {
        self.len as usize
    }

    /// True when no node carries weight (never produced by a valid mesh).
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Iterate `(node_index, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len as usize).map(move |r| (self.verts[r], self.weights[r]))
    }

    /// Cell placing all weight on one node.
    pub(crate) fn single(idx: usize) -> Self {
        Self {
            verts: [idx, 0, 0, 0],
            weights: [1.0, 0.0, 0.0, 0.0],
            len: 1,
        }
    }

    /// Node carrying the largest weight.
    pub fn nearest(&self) -> usize {
        let mut best = 0usize;
        for r in 1..self.len as usize {
            if self.weights[r] > self.weights[best] {
                best = r;
            }
        }
        self.verts[best]
    }
}

/// Discretized belief simplex.
#[derive(Debug, Clone)]
pub struct BeliefMesh {
    m: usize,
    n: usize,
    counts: Vec<[u16; MAX_MESH_REGIMES]>,
    beliefs: Vec<Belief>,
    index: HashMap<[u16; MAX_MESH_REGIMES], usize>,
}

impl BeliefMesh {
    /// Mesh for `m` regimes with `n` subdivisions per edge (`h = 1/n`).
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("mesh needs at least one regime".into()));
        }
        if m > MAX_MESH_REGIMES {
            return Err(Error::Config(format!(
                "belief mesh supports at most {MAX_MESH_REGIMES} regimes; m={m} would need \
                 on the order of n^{} nodes",
                m - 1
            )));
        }
        if n == 0 || n > u16::MAX as usize {
            return Err(Error::Domain(format!(
                "mesh subdivisions out of range: {n}"
            )));
        }
        let mut counts = Vec::new();
        let mut stack = [0u16; MAX_MESH_REGIMES];
        enumerate_counts(m, n, 0, n, &mut stack, &mut counts);
        let mut index = HashMap::with_capacity(counts.len());
        let mut beliefs = Vec::with_capacity(counts.len());
        for (idx, c) in counts.iter().enumerate() {
            index.insert(*c, idx);
            let w: Vec<f64> = (0..m).map(|i| c[i] as f64 / n as f64).collect();
            beliefs.push(Belief::new(w)?);
        }
        Ok(Self {
            m,
            n,
            counts,
            beliefs,
            index,
        })
    }

    /// Mesh with spacing `h` (rounded to the nearest `1/n`).
    pub fn with_spacing(m: usize, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0 && h <= 1.0) {
            return Err(Error::Domain(format!(
                "mesh spacing must lie in (0, 1], got {h}"
            )));
        }
        let n = (1.0 / h).round().max(1.0) as usize;
        if ((1.0 / h) - n as f64).abs() > 1e-9 {
            log::warn!("mesh spacing {h} is not 1/integer; using n={n} subdivisions");
        }
        Self::new(m, n)
    }

    /// Number of regimes.
    pub fn num_regimes(&self) -> usize {
        self.m
    }

    /// Subdivisions per edge.
    pub fn subdivisions(&self) -> usize {
        self.n
    }

    /// Node spacing `1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of mesh nodes.
    pub fn num_nodes(&self) -> usize {
        self.beliefs.len()
    }

    /// Belief at a node.
    pub fn node(&self, idx: usize) -> &Belief {
        &self.beliefs[idx]
    }

    /// All node beliefs, in enumeration order.
    pub fn nodes(&self) -> &[Belief] {
        &self.beliefs
    }

    /// Integer counts of a node (first `m` entries meaningful).
    pub fn node_counts(&self, idx: usize) -> &[u16] {
        &self.counts[idx][..self.m]
    }

    /// Index of the node with the given counts, if it exists.
    pub fn index_of(&self, counts: &[u16]) -> Option<usize> {
        if counts.len() != self.m {
            return None;
        }
        let mut key = [0u16; MAX_MESH_REGIMES];
        key[..self.m].copy_from_slice(counts);
        self.index.get(&key).copied()
    }

    /// Barycentric weights of the cell containing `pi`.
    pub fn locate(&self, pi: &Belief) -> Result<CellWeights> {
        let m = self.m;
        if pi.len() != m {
            return Err(Error::Config(format!(
                "belief has {} entries for a {m}-regime mesh",
                pi.len()
            )));
        }
        if m == 1 {
            return Ok(CellWeights {
                verts: [0; 4],
                weights: [1.0, 0.0, 0.0, 0.0],
                len: 1,
            });
        }
        let n = self.n as f64;
        let w = pi.weights();
        // staircase coordinates x_i = n * sum_{j>i} pi_j, i = 0..m-2
        let mut x = [0.0f64; MAX_MESH_REGIMES - 1];
        let mut suffix = 0.0;
        for i in (1..m).rev() {
            suffix += w[i];
            x[i - 1] = (n * suffix).clamp(0.0, n);
        }
        let d = m - 1;
        let mut z = [0i64; MAX_MESH_REGIMES - 1];
        let mut f = [0.0f64; MAX_MESH_REGIMES - 1];
        for i in 0..d {
            z[i] = (x[i].floor() as i64).min(self.n as i64);
            f[i] = x[i] - z[i] as f64;
        }
        // visit coordinates in order of decreasing fractional part
        let mut order = [0usize; MAX_MESH_REGIMES - 1];
        for (i, o) in order.iter_mut().enumerate().take(d) {
            *o = i;
        }
        order[..d].sort_by(|&a, &b| {
            f[b].partial_cmp(&f[a])
                .expect("finite fracs")
                .then(a.cmp(&b))
        });

        let mut verts = [0usize; MAX_MESH_REGIMES];
        let mut weights = [0.0f64; MAX_MESH_REGIMES];
        let mut len = 0u8;
        let mut vert = z;
        let mut total = 0.0;
        for r in 0..=d {
            let weight = if r == 0 {
                1.0 - f[order[0]]
            } else if r < d {
                f[order[r - 1]] - f[order[r]]
            } else {
                f[order[d - 1]]
            };
            if r > 0 {
                vert[order[r - 1]] += 1;
            }
            if weight > 1e-14 {
                if let Some(idx) = self.staircase_index(&vert) {
                    verts[len as usize] = idx;
                    weights[len as usize] = weight;
                    total += weight;
                    len += 1;
                } else {
                    debug_assert!(
                        weight < 1e-9,
                        "significant weight {weight} on a vertex outside the mesh"
                    );
                }
            }
        }
        if total <= 0.0 {
            return Err(Error::NumericGuard(
                "belief interpolation produced no cell".into(),
            ));
        }
        for r in 0..len as usize {
            weights[r] /= total;
        }
        Ok(CellWeights {
            verts,
            weights,
            len,
        })
    }

    /// Mesh node closest to `pi` (largest barycentric weight).
    pub fn nearest(&self, pi: &Belief) -> Result<usize> {
        Ok(self.locate(pi)?.nearest())
    }

    /// Convert staircase-coordinate vertex to a node index, if valid.
    fn staircase_index(&self, vert: &[i64; MAX_MESH_REGIMES - 1]) -> Option<usize> {
        let m = self.m;
        let n = self.n as i64;
        let mut zb = [0i64; MAX_MESH_REGIMES];
        zb[0] = n - vert[0];
        for i in 1..m - 1 {
            zb[i] = vert[i - 1] - vert[i];
        }
        zb[m - 1] = vert[m - 2];
        let mut key = [0u16; MAX_MESH_REGIMES];
        for i in 0..m {
            if zb[i] < 0 || zb[i] > n {
                return None;
            }
            key[i] = zb[i] as u16;
        }
        self.index.get(&key).copied()
    }
}

fn enumerate_counts(
    m: usize,
    n: usize,
    pos: usize,
    remaining: usize,
    stack: &mut [u16; MAX_MESH_REGIMES],
    out: &mut Vec<[u16; MAX_MESH_REGIMES]>,
) {
    if pos == m - 1 {
        stack[pos] = remaining as u16;
        out.push(*stack);
        return;
    }
    for c in 0..=remaining {
        stack[pos] = c as u16;
        enumerate_counts(m, n, pos + 1, remaining - c, stack, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        let mut r = 1usize;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    }

    /// Deterministic beliefs for property checks.
    fn pseudo_beliefs(m: usize, count: usize) -> Vec<Belief> {
        let mut state = 0x9E3779B97F4A7C15u64 ^ (m as u64);
        let mut out = Vec::new();
        for _ in 0..count {
            let mut w: Vec<f64> = (0..m)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64).max(1e-9)
                })
                .collect();
            let s: f64 = w.iter().sum();
            for x in &mut w {
                *x /= s;
            }
            out.push(Belief::new(w).unwrap());
        }
        out
    }

    #[test]
    fn node_counts_match_combinatorics() {
        assert_eq!(BeliefMesh::new(1, 10).unwrap().num_nodes(), 1);
        assert_eq!(BeliefMesh::new(2, 10).unwrap().num_nodes(), 11);
        assert_eq!(BeliefMesh::new(3, 20).unwrap().num_nodes(), binomial(22, 2));
        assert_eq!(BeliefMesh::new(4, 5).unwrap().num_nodes(), binomial(8, 3));
        assert!(BeliefMesh::new(5, 5).is_err());
        assert!(BeliefMesh::new(0, 5).is_err());
        assert!(BeliefMesh::new(3, 0).is_err());
    }

    #[test]
    fn with_spacing_rounds_to_subdivisions() {
        let a = BeliefMesh::with_spacing(3, 0.05).unwrap();
        assert_eq!(a.subdivisions(), 20);
        assert_eq!(a.spacing(), 0.05);
        assert!(BeliefMesh::with_spacing(3, 0.0).is_err());
        assert!(BeliefMesh::with_spacing(3, 1.5).is_err());
    }

    #[test]
    fn interpolation_reproduces_the_belief() {
        for m in 2..=4usize {
            let mesh = BeliefMesh::new(m, 20).unwrap();
            for pi in pseudo_beliefs(m, 200) {
                let cell = mesh.locate(&pi).unwrap();
                let mut total = 0.0;
                let mut recon = vec![0.0; m];
                for (idx, w) in cell.iter() {
                    total += w;
                    for (r, b) in recon.iter_mut().zip(mesh.node(idx).weights()) {
                        *r += w * b;
                    }
                }
                assert!((total - 1.0).abs() < 1e-12, "weights must sum to 1");
                for (r, p) in recon.iter().zip(pi.weights()) {
                    assert!((r - p).abs() < 1e-11, "m={m}: reconstructed {r} vs {p}");
                }
            }
        }
    }

    #[test]
    fn mesh_nodes_map_to_themselves() {
        let mesh = BeliefMesh::new(3, 20).unwrap();
        for idx in 0..mesh.num_nodes() {
            let cell = mesh.locate(mesh.node(idx)).unwrap();
            assert_eq!(cell.len(), 1, "node {idx} should be its own cell");
            assert_eq!(cell.iter().next().unwrap().0, idx);
            assert_eq!(mesh.nearest(mesh.node(idx)).unwrap(), idx);
        }
    }

    #[test]
    fn uniform_belief_splits_across_center_cell() {
        let mesh = BeliefMesh::new(3, 20).unwrap();
        let cell = mesh.locate(&Belief::uniform(3)).unwrap();
        assert_eq!(cell.len(), 3);
        let mut got: Vec<(Vec<u16>, f64)> = cell
            .iter()
            .map(|(i, w)| (mesh.node_counts(i).to_vec(), w))
            .collect();
        got.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, w) in &got {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        let keys: Vec<Vec<u16>> = got.into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec![vec![6, 7, 7], vec![7, 6, 7], vec![7, 7, 6]]);
    }

    #[test]
    fn nearest_prefers_dominant_vertex() {
        let mesh = BeliefMesh::new(3, 20).unwrap();
        // slightly perturbed node (10, 6, 4)/20
        let pi = Belief::new(vec![0.504, 0.298, 0.198]).unwrap();
        let idx = mesh.nearest(&pi).unwrap();
        assert_eq!(mesh.node_counts(idx), &[10, 6, 4]);
    }

    #[test]
    fn index_round_trip() {
        let mesh = BeliefMesh::new(4, 7).unwrap();
        for idx in 0..mesh.num_nodes() {
            let counts = mesh.node_counts(idx).to_vec();
            assert_eq!(mesh.index_of(&counts), Some(idx));
        }
        assert_eq!(mesh.index_of(&[8, 0, 0, 0]), None);
        assert_eq!(mesh.index_of(&[1, 2]), None);
    }

    #[test]
    fn corners_and_edges_locate_exactly() {
        let mesh = BeliefMesh::new(3, 10).unwrap();
        for i in 0..3 {
            let cell = mesh.locate(&Belief::corner(3, i)).unwrap();
            assert_eq!(cell.len(), 1);
            let (idx, w) = cell.iter().next().unwrap();
            assert_eq!(w, 1.0);
            let mut want = [0u16; 3];
            want[i] = 10;
            assert_eq!(mesh.node_counts(idx), &want);
        }
        // midpoint of an edge
        let cell = mesh
            .locate(&Belief::new(vec![0.55, 0.45, 0.0]).unwrap())
            .unwrap();
        for (idx, _) in cell.iter() {
            assert_eq!(mesh.node_counts(idx)[2], 0, "edge point stays on the edge");
        }
    }
}
