//! Prefractal graphs of `G^(M)`, their renormalized Laplacians and the
//! spectral calculus (Dirichlet restriction, fractional powers, heat traces)
//! that turns them into discrete Brownian and stable generators.

use std::collections::HashMap;
use std::sync::OnceLock;

use faer::Mat;

use crate::error::{domain, LabError, Result};
use crate::gasket::{
    corner_offset, lattice_point, is_attachment_corner, is_corner, words, Address, Point,
};
use crate::linalg::{self, SymmetricEigen};

/// Time renormalization per halving of the cell side.
pub const WALK_TIME_FACTOR: f64 = 5.0;

/// Desk-scale guardrails. Each can be overridden through an environment
/// variable (`GASKET_LAB_MAX_BLOWUP`, `GASKET_LAB_MAX_DEPTH`,
/// `GASKET_LAB_MAX_DIM`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_blowup: u32,
    pub max_depth: u32,
    pub max_dense_dim: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_blowup: 6, max_depth: 7, max_dense_dim: 4000 }
    }
}

impl Limits {
    pub fn from_env() -> Self {
        let mut l = Limits::default();
        let read = |name: &str| std::env::var(name).ok().and_then(|v| v.trim().parse::<u64>().ok());
        if let Some(v) = read("GASKET_LAB_MAX_BLOWUP") {
            l.max_blowup = v as u32;
        }
        if let Some(v) = read("GASKET_LAB_MAX_DEPTH") {
            l.max_depth = v as u32;
        }
        if let Some(v) = read("GASKET_LAB_MAX_DIM") {
            l.max_dense_dim = v as usize;
        }
        l
    }

    pub fn check_dense(&self, dim: usize) -> Result<()> {
        if dim > self.max_dense_dim {
            return Err(LabError::Resource(format!(
                "dense matrix dimension {dim} exceeds max_dense_dim={} (GASKET_LAB_MAX_DIM)",
                self.max_dense_dim
            )));
        }
        Ok(())
    }
}

/// Number of vertices of the depth-`m` prefractal graph.
pub fn vertex_count(depth: u32) -> usize {
    3 * (3usize.pow(depth) + 1) / 2
}

/// Prefractal graph of `G^(M)` whose cells are the `3^m` depth-`m` triangles
/// of side `2^(M-m)`.
#[derive(Debug, Clone)]
pub struct LevelGraph {
    pub blowup: u32,
    pub depth: u32,
    /// Lattice coordinates in units of the cell side, sorted by `(j, i)`.
    pub lattice: Vec<(i64, i64)>,
    /// Undirected edges `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    pub neighbors: Vec<Vec<usize>>,
    /// `mu`-mass carried by each vertex.
    pub weights: Vec<f64>,
    index: HashMap<(i64, i64), usize>,
    /// First (cell word, corner) containing each vertex.
    owner: Vec<(Vec<u8>, u8)>,
}

impl LevelGraph {
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn side(&self) -> f64 {
        2f64.powi(self.blowup as i32 - self.depth as i32)
    }

    pub fn cell_measure(&self) -> f64 {
        3f64.powi(self.blowup as i32 - self.depth as i32)
    }

    pub fn point(&self, v: usize) -> Point {
        let (i, j) = self.lattice[v];
        lattice_point(i, j, self.side())
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|v| self.point(v)).collect()
    }

    pub fn index_of(&self, i: i64, j: i64) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    /// Canonical vertex address: the lexicographically first cell having
    /// this vertex as a corner.
    pub fn vertex_address(&self, v: usize) -> Address {
        let (w, c) = &self.owner[v];
        Address::vertex(self.blowup, w.clone(), *c)
    }

    pub fn vertex_of_address(&self, addr: &Address) -> Option<usize> {
        if addr.blowup != self.blowup || addr.depth() > self.depth as usize {
            return None;
        }
        let (i, j) = addr.lattice();
        let scale = 1i64 << (self.depth as usize - addr.depth());
        self.index_of(i * scale, j * scale)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn is_corner(&self, v: usize) -> bool {
        let (i, j) = self.lattice[v];
        is_corner(i, j, self.depth as usize)
    }

    /// One of the two corners joining `G^(M)` to the rest of the gasket.
    pub fn is_exterior_boundary(&self, v: usize) -> bool {
        let (i, j) = self.lattice[v];
        is_attachment_corner(i, j, self.depth as usize)
    }

    /// All vertices but the three corners: the free set of the Dirichlet
    /// problem on `G^(M)`.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| !self.is_corner(v)).collect()
    }

    /// The vertex at the origin `(0,0)`.
    pub fn origin(&self) -> usize {
        self.index_of(0, 0).expect("origin is always a vertex")
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same graph with the vertex list relabeled: used to confirm that two
    /// graphs share the same combinatorics.
    pub fn isomorphic_to(&self, other: &LevelGraph) -> bool {
        self.depth == other.depth && self.lattice == other.lattice && self.edges == other.edges
    }
}

/// Builds the depth-`m` prefractal graph of `G^(M)` under the default limits.
pub fn build_graph(blowup: u32, depth: u32) -> Result<LevelGraph> {
    build_graph_with(blowup, depth, &Limits::from_env())
}

pub fn build_graph_with(blowup: u32, depth: u32, limits: &Limits) -> Result<LevelGraph> {
    if blowup > limits.max_blowup || depth > limits.max_depth {
        return Err(LabError::Resource(format!(
            "graph (M={blowup}, m={depth}) exceeds guardrails M<={}, m<={}",
            limits.max_blowup, limits.max_depth
        )));
    }
    let depth_us = depth as usize;
    let mut owner_map: HashMap<(i64, i64), (Vec<u8>, u8)> = HashMap::new();
    let mut cell_count: HashMap<(i64, i64), u32> = HashMap::new();
    let mut raw_edges = Vec::with_capacity(3 * 3usize.pow(depth));
    for w in words(depth_us) {
        let (i, j) = crate::gasket::anchor_of_digits(&w);
        let corners: Vec<(i64, i64)> = (0..3u8)
            .map(|c| {
                let (di, dj) = corner_offset(c);
                (i + di, j + dj)
            })
            .collect();
        for (c, &p) in corners.iter().enumerate() {
            owner_map.entry(p).or_insert_with(|| (w.clone(), c as u8));
            *cell_count.entry(p).or_insert(0) += 1;
        }
        raw_edges.push((corners[0], corners[1]));
        raw_edges.push((corners[1], corners[2]));
        raw_edges.push((corners[0], corners[2]));
    }
    let mut lattice: Vec<(i64, i64)> = owner_map.keys().copied().collect();
    lattice.sort_by_key(|&(i, j)| (j, i));
    let index: HashMap<(i64, i64), usize> =
        lattice.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let mut edges: Vec<(usize, usize)> = raw_edges
        .into_iter()
        .map(|(p, q)| {
            let (a, b) = (index[&p], index[&q]);
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    let mut neighbors = vec![Vec::new(); lattice.len()];
    for &(a, b) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    let share = 3f64.powi(blowup as i32 - depth as i32) / 3.0;
    let weights = lattice.iter().map(|p| cell_count[p] as f64 * share).collect();
    let owner = lattice.iter().map(|p| owner_map[p].clone()).collect();
    Ok(LevelGraph { blowup, depth, lattice, edges, neighbors, weights, index, owner })
}

/// Dense symmetric operator together with the power of 5 applied as time
/// renormalization.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    pub matrix: Mat<f64>,
    pub time_scale_exponent: i32,
    eigen: OnceLock<SymmetricEigen>,
}

impl SymmetricOperator {
    pub fn new(matrix: Mat<f64>, time_scale_exponent: i32) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return domain("operator matrix must be square");
        }
        Ok(Self { matrix, time_scale_exponent, eigen: OnceLock::new() })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Full eigendecomposition, computed once and cached.
    pub fn eigen(&self) -> Result<&SymmetricEigen> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let e = linalg::symmetric_eigen(&self.matrix)?;
        Ok(self.eigen.get_or_init(|| e))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, c: f64) -> SymmetricOperator {
        let m = Mat::from_fn(self.dim(), self.dim(), |i, j| c * self.matrix[(i, j)]);
        SymmetricOperator { matrix: m, time_scale_exponent: self.time_scale_exponent, eigen: OnceLock::new() }
    }

    pub fn fingerprint(&self) -> String {
        linalg::fingerprint(&self.matrix)
    }
}

/// `L = 5^(m-M) (D - A)`.
pub fn laplacian(g: &LevelGraph) -> SymmetricOperator {
    laplacian_renormalized(g, WALK_TIME_FACTOR)
}

/// Laplacian with an explicit per-level time factor (fault injection uses a
/// perturbed factor; production code always goes through [`laplacian`]).
pub fn laplacian_renormalized(g: &LevelGraph, factor: f64) -> SymmetricOperator {
    let exp = g.depth as i32 - g.blowup as i32;
    let scale = factor.powi(exp);
    let n = g.len();
    let mut m = Mat::<f64>::zeros(n, n);
    for v in 0..n {
        m[(v, v)] = scale * g.degree(v) as f64;
    }
    for &(a, b) in &g.edges {
        m[(a, b)] -= scale;
        m[(b, a)] -= scale;
    }
    SymmetricOperator { matrix: m, time_scale_exponent: exp, eigen: OnceLock::new() }
}

/// Principal submatrix on `keep` (killing every other vertex).
pub fn dirichlet_restrict(op: &SymmetricOperator, keep: &[usize]) -> Result<SymmetricOperator> {
    if keep.is_empty() {
        return domain("empty keep set: the killed spectrum is empty");
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= op.dim()) {
        return domain(format!("keep index {bad} out of range for dimension {}", op.dim()));
    }
    Ok(SymmetricOperator {
        matrix: linalg::principal_submatrix(&op.matrix, keep),
        time_scale_exponent: op.time_scale_exponent,
        eigen: OnceLock::new(),
    })
}

/// Spectral power `op^exponent` for a positive semidefinite `op`.
pub fn fractional_power(op: &SymmetricOperator, exponent: f64) -> Result<SymmetricOperator> {
    if !(exponent > 0.0 && exponent <= 1.0) {
        return domain(format!("fractional exponent must lie in (0,1], got {exponent}"));
    }
    let e = op.eigen()?;
    check_psd(e, op)?;
    // rounding noise around a zero eigenvalue would be inflated by the power
    let floor = 1e-12 * e.values.last().copied().unwrap_or(0.0).abs();
    let m = e.apply_fn(|x| if x <= floor { 0.0 } else { x.powf(exponent) });
    SymmetricOperator::new(m, op.time_scale_exponent)
}

fn check_psd(e: &SymmetricEigen, op: &SymmetricOperator) -> Result<()> {
    let Some(&lo) = e.values.first() else { return Ok(()) };
    let hi = e.values.last().copied().unwrap_or(0.0).abs().max(1.0);
    if lo < -1e-10 * hi {
        return Err(LabError::Numeric(format!(
            "operator {} is not positive semidefinite (smallest eigenvalue {lo:e})",
            op.fingerprint()
        )));
    }
    Ok(())
}

/// Ascending eigenvalues, truncated to the `k` smallest when given.
pub fn spectrum(op: &SymmetricOperator, k: Option<usize>) -> Result<Vec<f64>> {
    let mut v = match op.eigen.get() {
        Some(e) => e.values.clone(),
        None => linalg::symmetric_eigenvalues(&op.matrix)?,
    };
    if let Some(k) = k {
        v.truncate(k);
    }
    Ok(v)
}

/// `sum_n exp(-lambda_n t) = Tr exp(-t op)`.
pub fn heat_trace(op: &SymmetricOperator, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("heat trace needs t > 0, got {t}"));
    }
    Ok(trace_from_spectrum(&spectrum(op, None)?, t))
}

pub fn trace_from_spectrum(values: &[f64], t: f64) -> f64 {
    crate::stats::pairwise_sum(&values.iter().map(|&l| (-l * t).exp()).collect::<Vec<_>>())
}

/// Heat kernel density with respect to `mu`:
/// `p(t,x,y) = exp(-t op)_{xy} / sqrt(w_x w_y)`.
pub fn weighted_kernel(op: &SymmetricOperator, weights: &[f64], t: f64) -> Result<Mat<f64>> {
    if weights.len() != op.dim() {
        return domain("weight vector does not match operator dimension");
    }
    if !(t > 0.0) {
        return domain(format!("heat kernel needs t > 0, got {t}"));
    }
    let k = op.eigen()?.apply_fn(|l| (-l * t).exp());
    Ok(Mat::from_fn(op.dim(), op.dim(), |i, j| k[(i, j)] / (weights[i] * weights[j]).sqrt()))
}

/// `mu`-average of the on-diagonal kernel, `sum_x w_x p(t,x,x) / sum_x w_x`.
pub fn mean_diagonal_kernel(op: &SymmetricOperator, weights: &[f64], t: f64) -> Result<f64> {
    let e = op.eigen()?;
    let total: f64 = weights.iter().sum();
    let n = op.dim();
    let mut acc = 0.0;
    for x in 0..n {
        let mut kxx = 0.0;
        for k in 0..n {
            let v = e.vectors[(x, k)];
            kxx += v * v * (-e.values[k] * t).exp();
        }
        acc += kxx;
    }
    // sum_x w_x * K_xx / w_x
    Ok(acc / total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_graph_counts() {
        for (m, nv, ne) in [(0, 3, 3), (1, 6, 9), (2, 15, 27)] {
            let g = build_graph(0, m).unwrap();
            assert_eq!(g.len(), nv);
            assert_eq!(g.edges.len(), ne);
            assert_eq!(vertex_count(m), nv);
        }
    }

    #[test]
    fn counts_and_weights_up_to_depth_six() {
        for m in 0..=6 {
            for blowup in 0..=2 {
                let g = build_graph(blowup, m).unwrap();
                assert_eq!(g.len(), 3 * (3usize.pow(m) + 1) / 2);
                assert_eq!(g.edges.len(), 3usize.pow(m + 1));
                assert!(g.neighbors.iter().all(|n| n.len() <= 4));
                let total = g.total_weight();
                assert!((total - 3f64.powi(blowup as i32)).abs() < 1e-9 * total);
            }
        }
    }

    #[test]
    fn graph_is_connected() {
        let g = build_graph(1, 4).unwrap();
        let mut seen = vec![false; g.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &g.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn blowups_share_combinatorics() {
        let a = build_graph(1, 3).unwrap();
        let b = build_graph(0, 3).unwrap();
        assert!(a.isomorphic_to(&b));
        assert_eq!(a.side(), 2.0 * b.side());
    }

    #[test]
    fn guardrail() {
        assert!(matches!(build_graph(0, 9), Err(LabError::Resource(_))));
        assert!(matches!(build_graph(7, 1), Err(LabError::Resource(_))));
    }

    #[test]
    fn triangle_laplacian_spectrum() {
        let g = build_graph(0, 0).unwrap();
        let l = laplacian(&g);
        let s = spectrum(&l, None).unwrap();
        assert!(s[0].abs() < 1e-14);
        assert!((s[1] - 3.0).abs() < 1e-14 && (s[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_constant_kernel() {
        let g = build_graph(0, 3).unwrap();
        let l = laplacian(&g);
        for i in 0..l.dim() {
            let s: f64 = (0..l.dim()).map(|j| l.get(i, j)).sum();
            assert!(s.abs() < 1e-9);
        }
        let e = l.eigen().unwrap();
        assert!(e.values[0].abs() < 1e-9);
        let v0 = e.vectors[(0, 0)];
        for i in 0..l.dim() {
            assert!((e.vectors[(i, 0)] - v0).abs() < 1e-10);
        }
    }

    #[test]
    fn kill_one_triangle_vertex() {
        let g = build_graph(0, 0).unwrap();
        let h = dirichlet_restrict(&laplacian(&g), &[1, 2]).unwrap();
        assert_eq!(h.get(0, 0), 2.0);
        assert_eq!(h.get(0, 1), -1.0);
        let s = spectrum(&h, None).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14 && (s[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn restriction_edge_cases() {
        let g = build_graph(0, 1).unwrap();
        let l = laplacian(&g);
        let all: Vec<usize> = (0..g.len()).collect();
        let r = dirichlet_restrict(&l, &all).unwrap();
        assert_eq!(linalg::fingerprint(&r.matrix), l.fingerprint());
        assert!(matches!(dirichlet_restrict(&l, &[]), Err(LabError::Domain(_))));
        assert!(dirichlet_restrict(&l, &[99]).is_err());
    }

    #[test]
    fn dirichlet_scaling_is_exactly_five() {
        for m in 2..=4 {
            let g1 = build_graph(1, m).unwrap();
            let g0 = build_graph(0, m).unwrap();
            let l1 = dirichlet_restrict(&laplacian(&g1), &g1.interior_vertices()).unwrap();
            let l0 = dirichlet_restrict(&laplacian(&g0), &g0.interior_vertices()).unwrap();
            let a = spectrum(&l1, Some(1)).unwrap()[0];
            let b = spectrum(&l0, Some(1)).unwrap()[0];
            assert!((b / a - 5.0).abs() < 1e-10, "m={m}: ratio {}", b / a);
        }
    }

    #[test]
    fn fractional_power_examples() {
        let d = SymmetricOperator::new(Mat::from_fn(1, 1, |_, _| 4.0), 0).unwrap();
        assert!((fractional_power(&d, 0.5).unwrap().get(0, 0) - 2.0).abs() < 1e-14);

        let h = SymmetricOperator::new(
            Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { -1.0 }),
            0,
        )
        .unwrap();
        let r = fractional_power(&h, 0.5).unwrap();
        let want = (1.0 + 3f64.sqrt()) / 2.0;
        assert!((r.get(0, 0) - want).abs() < 1e-14);
        assert!(r.get(0, 0) < 2f64.sqrt());

        let five = fractional_power(&h.scaled(5.0), 0.5).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((five.get(i, j) - 5f64.sqrt() * r.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fractional_power_rejects_indefinite() {
        let h = SymmetricOperator::new(Mat::from_fn(2, 2, |i, j| if i == j { 0.0 } else { 1.0 }), 0)
            .unwrap();
        assert!(matches!(fractional_power(&h, 0.5), Err(LabError::Numeric(_))));
        assert!(fractional_power(&h, 1.5).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let id = SymmetricOperator::new(Mat::<f64>::identity(4, 4), 0).unwrap();
        assert_eq!(spectrum(&id, None).unwrap(), vec![1.0; 4]);
        assert_eq!(spectrum(&id, Some(2)).unwrap().len(), 2);
        let g = build_graph(0, 2).unwrap();
        let l = laplacian(&g);
        let a = spectrum(&l, None).unwrap();
        let b = spectrum(&l.scaled(5.0), None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((5.0 * x - y).abs() < 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn heat_trace_examples() {
        let one = SymmetricOperator::new(Mat::from_fn(1, 1, |_, _| 1.0), 0).unwrap();
        assert!((heat_trace(&one, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        let h = SymmetricOperator::new(
            Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { -1.0 }),
            0,
        )
        .unwrap();
        assert!((heat_trace(&h, 1.0).unwrap() - 0.417_666).abs() < 1e-6);
        assert!((heat_trace(&h, 1e-12).unwrap() - 2.0).abs() < 1e-10);
        assert!(heat_trace(&h, 0.0).is_err());
    }

    #[test]
    fn vertex_addresses_round_trip() {
        let g = build_graph(2, 4).unwrap();
        for v in 0..g.len() {
            let a = g.vertex_address(v);
            assert_eq!(g.vertex_of_address(&a), Some(v));
            let p = a.to_point();
            assert!(p.dist(&g.point(v)) < 1e-12);
        }
    }

    #[test]
    fn boundary_vertices_of_level_one() {
        let g = build_graph(0, 0).unwrap();
        assert!(g.interior_vertices().is_empty());
        let g = build_graph(0, 2).unwrap();
        assert_eq!(g.interior_vertices().len(), 12);
        assert_eq!((0..g.len()).filter(|&v| g.is_exterior_boundary(v)).count(), 2);
    }
}
