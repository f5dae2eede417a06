//! Stable sausage volumes, the annealed survival functional, and the
//! comparison of averaged survival with averaged traces.

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::gasket::{cells, Point};
use crate::graph::{LevelGraph, SymmetricOperator};
use crate::ids::{cloud_seed, Ambient};
use crate::obstacles::{free_vertices, sample_cloud, Cloud, PointGrid};
use crate::rng::{stream_seed, worker_rng};
use crate::stable::{simulate_stable_path, PathSample, RandomWalk};
use crate::stats::{pairwise_sum, MeanStderr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SausageEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub x0: usize,
    pub t: f64,
    pub nu: f64,
    pub a: f64,
    pub alpha: f64,
    pub blowup: u32,
    pub depth: u32,
    pub dt: f64,
}

/// For each graph vertex, the depth-`m_s` cells whose anchor lies within
/// closed distance `a`. The sausage of a path is the union of the lists of
/// the vertices it visits; obstacle centers are the anchors of uniformly
/// drawn depth-`m_s` cells, so a path survives a cloud exactly when no
/// center falls into its sausage.
#[derive(Debug, Clone)]
pub struct BallTable {
    pub a: f64,
    pub sample_depth: u32,
    pub cell_measure: f64,
    lists: Vec<Vec<u32>>,
    n_cells: usize,
}

impl BallTable {
    pub fn new(graph: &LevelGraph, a: f64, sample_depth: u32) -> Result<Self> {
        if !(a >= 2.0 * graph.side()) {
            return domain(format!(
                "radius a={a} below twice the cell side {}; refine the graph",
                graph.side()
            ));
        }
        if sample_depth < graph.depth {
            return domain("sampling depth must be at least the graph depth");
        }
        let anchors: Vec<Point> = cells(graph.blowup, sample_depth as usize).map(|c| c.to_point()).collect();
        let n_cells = anchors.len();
        let grid = PointGrid::new(anchors, a);
        let lists = (0..graph.len())
            .map(|v| grid.within(&graph.point(v), a).into_iter().map(|k| k as u32).collect())
            .collect();
        Ok(Self {
            a,
            sample_depth,
            cell_measure: 3f64.powi(graph.blowup as i32 - sample_depth as i32),
            lists,
            n_cells,
        })
    }

    /// `mu`-mass of the cells within `a` of vertex `v`.
    pub fn ball_measure(&self, v: usize) -> f64 {
        self.lists[v].len() as f64 * self.cell_measure
    }

    pub fn counter(&self) -> SausageCounter<'_> {
        SausageCounter { table: self, mark: vec![0; self.n_cells], generation: 0 }
    }
}

/// Reusable union counter over a [`BallTable`].
pub struct SausageCounter<'t> {
    table: &'t BallTable,
    mark: Vec<u32>,
    generation: u32,
}

impl SausageCounter<'_> {
    /// `mu`-volumes of the sausages of the successive prefixes ending at
    /// each index of `ends` (ascending) of `positions`.
    pub fn prefix_volumes(&mut self, positions: &[usize], ends: &[usize]) -> Vec<f64> {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.generation = 1;
        }
        let g = self.generation;
        let mut count = 0usize;
        let mut out = Vec::with_capacity(ends.len());
        let mut next = 0usize;
        let mut last = usize::MAX;
        for (k, &v) in positions.iter().enumerate() {
            if v != last {
                for &c in &self.table.lists[v] {
                    let slot = &mut self.mark[c as usize];
                    if *slot != g {
                        *slot = g;
                        count += 1;
                    }
                }
                last = v;
            }
            while next < ends.len() && ends[next] == k {
                out.push(count as f64 * self.table.cell_measure);
                next += 1;
            }
        }
        out
    }

    pub fn volume(&mut self, positions: &[usize]) -> f64 {
        if positions.is_empty() {
            return 0.0;
        }
        self.prefix_volumes(positions, &[positions.len() - 1])[0]
    }
}

/// `mu(X^a_[0,t])` of a path, by cell-set union at sampling depth
/// `sample_depth`.
pub fn sausage_volume(graph: &LevelGraph, path: &PathSample, a: f64, sample_depth: u32) -> Result<f64> {
    let table = BallTable::new(graph, a, sample_depth)?;
    Ok(table.counter().volume(&path.positions))
}

/// Grid indices of the path times closest to each requested time.
fn grid_ends(times: &[f64], t_grid: &[f64]) -> Vec<usize> {
    t_grid
        .iter()
        .map(|&t| times.iter().rposition(|&u| u <= t * (1.0 + 1e-12)).unwrap_or(0))
        .collect()
}

/// Settings shared by the Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub alpha: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Grid step; `None` means `t_max / 1024`.
    pub dt: Option<f64>,
}

impl McSettings {
    pub fn step(&self, horizon: f64) -> f64 {
        self.dt.unwrap_or(horizon / 1024.0).max(f64::MIN_POSITIVE)
    }
}

/// Sausage volumes `vol[path][t]` on a time grid, one path per sample.
pub fn sausage_volumes(
    walk: &RandomWalk<'_>,
    table: &BallTable,
    x0: usize,
    t_grid: &[f64],
    mc: &McSettings,
) -> Result<Vec<Vec<f64>>> {
    if t_grid.iter().any(|&t| t < 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return domain("t-grid must be nonnegative and increasing");
    }
    let horizon = t_grid.last().copied().unwrap_or(0.0);
    let dt = mc.step(horizon.max(f64::MIN_POSITIVE));
    let base = stream_seed(mc.seed, "paths");
    (0..mc.n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = worker_rng(base, k as u64);
            let path = simulate_stable_path(walk, x0, horizon, dt, mc.alpha, &mut rng)?;
            let ends = grid_ends(&path.times, t_grid);
            Ok(table.counter().prefix_volumes(&path.positions, &ends))
        })
        .collect()
}

/// `E_x0[exp(-nu mu(X^a_[0,t]))]` at each grid time, from common paths.
pub fn sausage_functional_curve(
    walk: &RandomWalk<'_>,
    table: &BallTable,
    x0: usize,
    t_grid: &[f64],
    nu: f64,
    mc: &McSettings,
) -> Result<Vec<SausageEstimate>> {
    if !(nu >= 0.0) {
        return domain(format!("intensity must be >= 0, got {nu}"));
    }
    let vols = sausage_volumes(walk, table, x0, t_grid, mc)?;
    let horizon = t_grid.last().copied().unwrap_or(0.0);
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let xs: Vec<f64> = vols.iter().map(|v| (-nu * v[ti]).exp()).collect();
            let m = MeanStderr::of(&xs);
            SausageEstimate {
                mean: m.mean,
                stderr: m.stderr,
                n_samples: m.n,
                x0,
                t,
                nu,
                a: table.a,
                alpha: mc.alpha,
                blowup: walk.graph.blowup,
                depth: walk.graph.depth,
                dt: mc.step(horizon.max(f64::MIN_POSITIVE)),
            }
        })
        .collect())
}

/// `E_x0[exp(-nu mu(X^a_[0,t]))]` at a single time.
#[allow(clippy::too_many_arguments)]
pub fn sausage_functional(
    graph: &LevelGraph,
    x0: usize,
    t: f64,
    nu: f64,
    a: f64,
    sample_depth: u32,
    mc: &McSettings,
) -> Result<SausageEstimate> {
    let table = BallTable::new(graph, a, sample_depth)?;
    let walk = RandomWalk::new(graph);
    Ok(sausage_functional_curve(&walk, &table, x0, &[t], nu, mc)?.remove(0))
}

/// Fraction of paths from `x0` that avoid every vertex within the closed
/// obstacle balls of `cloud` (and the attachment corners when `kill_exterior`)
/// up to each grid time.
pub fn survival_curve(
    walk: &RandomWalk<'_>,
    x0: usize,
    t_grid: &[f64],
    cloud: &Cloud,
    kill_exterior: bool,
    mc: &McSettings,
) -> Result<Vec<SausageEstimate>> {
    let graph = walk.graph;
    let free = free_vertices(graph, cloud, cloud.radius)?;
    let mut alive = vec![false; graph.len()];
    for v in free {
        alive[v] = !(kill_exterior && graph.is_exterior_boundary(v));
    }
    let horizon = t_grid.last().copied().unwrap_or(0.0);
    let dt = mc.step(horizon.max(f64::MIN_POSITIVE));
    let base = stream_seed(mc.seed, "paths");
    let death: Vec<f64> = (0..mc.n_samples)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut rng = worker_rng(base, k as u64);
            let path = simulate_stable_path(walk, x0, horizon, dt, mc.alpha, &mut rng)?;
            Ok(path
                .positions
                .iter()
                .position(|&v| !alive[v])
                .map_or(f64::INFINITY, |i| path.times[i]))
        })
        .collect::<Result<_>>()?;
    Ok(t_grid
        .iter()
        .map(|&t| {
            let xs: Vec<f64> = death.iter().map(|&d| if d > t { 1.0 } else { 0.0 }).collect();
            let m = MeanStderr::of(&xs);
            SausageEstimate {
                mean: m.mean,
                stderr: m.stderr,
                n_samples: m.n,
                x0,
                t,
                nu: cloud.intensity,
                a: cloud.radius,
                alpha: mc.alpha,
                blowup: graph.blowup,
                depth: graph.depth,
                dt,
            }
        })
        .collect())
}

/// Survival up to `t` among a fixed cloud.
pub fn survival_probability(
    graph: &LevelGraph,
    x0: usize,
    t: f64,
    cloud: &Cloud,
    kill_exterior: bool,
    mc: &McSettings,
) -> Result<SausageEstimate> {
    let walk = RandomWalk::new(graph);
    Ok(survival_curve(&walk, x0, &[t], cloud, kill_exterior, mc)?.remove(0))
}

/// Annealed survival estimated by drawing a fresh cloud for every path
/// (no exterior killing): the obstacle side of the Fubini identity
/// `E_x[exp(-nu mu(X^a))] = P_x x Q[no obstacle hit]`.
#[allow(clippy::too_many_arguments)]
pub fn annealed_survival(
    walk: &RandomWalk<'_>,
    x0: usize,
    t: f64,
    nu: f64,
    a: f64,
    sample_depth: u32,
    mc: &McSettings,
) -> Result<SausageEstimate> {
    let graph = walk.graph;
    let dt = mc.step(t.max(f64::MIN_POSITIVE));
    let paths = stream_seed(mc.seed, "paths");
    let clouds = stream_seed(mc.seed, "annealed-clouds");
    let xs: Vec<f64> = (0..mc.n_samples)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut rng = worker_rng(paths, k as u64);
            let path = simulate_stable_path(walk, x0, t, dt, mc.alpha, &mut rng)?;
            let cloud = sample_cloud(graph.blowup, nu, a, sample_depth, clouds.wrapping_add(k as u64))?;
            let grid = PointGrid::new(cloud.points(), a);
            let hit = path.positions.iter().any(|&v| grid.any_within(&graph.point(v), a));
            Ok(if hit { 0.0 } else { 1.0 })
        })
        .collect::<Result<_>>()?;
    let m = MeanStderr::of(&xs);
    Ok(SausageEstimate {
        mean: m.mean,
        stderr: m.stderr,
        n_samples: m.n,
        x0,
        t,
        nu,
        a,
        alpha: mc.alpha,
        blowup: graph.blowup,
        depth: graph.depth,
        dt,
    })
}

/// One grid time of the survival/trace comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalTraceRow {
    pub t: f64,
    /// `B`: cloud mean of `int P_x[tau > t] mu~(dx)`.
    pub survival: MeanStderr,
    /// `A`: cloud mean of `Tr exp(-t F_K)`.
    pub trace: MeanStderr,
    /// `A - B` per cloud, averaged.
    pub gap: MeanStderr,
}

impl SurvivalTraceRow {
    /// `B <= A + 3` joint standard errors.
    pub fn holds(&self) -> bool {
        let joint = (self.survival.stderr.powi(2) + self.trace.stderr.powi(2)).sqrt();
        self.survival.mean <= self.trace.mean + 3.0 * joint
    }
}

/// `(B, A)` of one killed generator: survival integrated against the
/// normalized measure `mu~ = mu / 3^M`, and the trace of the semigroup.
pub fn survival_and_trace(
    op: &SymmetricOperator,
    weights: &[f64],
    volume: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if op.dim() == 0 {
        return Ok((0.0, 0.0));
    }
    let e = op.eigen()?;
    let n = op.dim();
    let decay: Vec<f64> = e.values.iter().map(|l| (-l * t).exp()).collect();
    // K 1 = V diag(decay) V^T 1
    let proj: Vec<f64> = (0..n).map(|k| pairwise_sum(&(0..n).map(|i| e.vectors[(i, k)]).collect::<Vec<_>>())).collect();
    let mut b = Vec::with_capacity(n);
    for (x, w) in weights.iter().enumerate().take(n) {
        let row: Vec<f64> = (0..n).map(|k| e.vectors[(x, k)] * decay[k] * proj[k]).collect();
        b.push(w / volume * pairwise_sum(&row));
    }
    Ok((pairwise_sum(&b), pairwise_sum(&decay)))
}

/// Cloud averages of `B(t)` and `A(t)` on the padded ambient.
pub fn averaged_survival_vs_trace(
    ambient: &Ambient,
    nu: f64,
    a: f64,
    sample_depth: u32,
    t_grid: &[f64],
    n_clouds: usize,
    seed: u64,
) -> Result<Vec<SurvivalTraceRow>> {
    if n_clouds == 0 {
        return domain("need at least one cloud");
    }
    let per_cloud: Vec<Vec<(f64, f64)>> = (0..n_clouds)
        .into_par_iter()
        .map(|k| -> Result<Vec<(f64, f64)>> {
            let cloud = sample_cloud(ambient.blowup, nu, a, sample_depth, cloud_seed(seed, k))?;
            let keep = ambient.keep_set(Some(&cloud), true)?;
            let weights: Vec<f64> = keep.iter().map(|&v| ambient.graph.weights[v]).collect();
            let op = if keep.is_empty() {
                SymmetricOperator::new(faer::Mat::zeros(0, 0), 0)?
            } else {
                ambient.killed_stable(&keep)?
            };
            t_grid.iter().map(|&t| survival_and_trace(&op, &weights, ambient.volume(), t)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let b: Vec<f64> = per_cloud.iter().map(|c| c[ti].0).collect();
            let a: Vec<f64> = per_cloud.iter().map(|c| c[ti].1).collect();
            let g: Vec<f64> = per_cloud.iter().map(|c| c[ti].1 - c[ti].0).collect();
            SurvivalTraceRow { t, survival: MeanStderr::of(&b), trace: MeanStderr::of(&a), gap: MeanStderr::of(&g) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;

    fn mc(n: usize, seed: u64) -> McSettings {
        McSettings { alpha: 1.0, n_samples: n, seed, dt: None }
    }

    #[test]
    fn constant_path_volume_is_a_ball() {
        let g = build_graph(0, 4).unwrap();
        let table = BallTable::new(&g, 0.25, 8).unwrap();
        let x = g.index_of(4, 4).unwrap();
        let v = table.counter().volume(&[x, x, x]);
        assert_eq!(v, table.ball_measure(x));
        let df = crate::gasket::constants(1.0).unwrap().d_f;
        let ratio = v / 0.25f64.powf(df);
        assert!(ratio > 0.3 && ratio < 3.0, "{ratio}");
    }

    #[test]
    fn full_visit_covers_the_gasket() {
        let g = build_graph(0, 3).unwrap();
        let table = BallTable::new(&g, 0.25, 6).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        assert!((table.counter().volume(&all) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolution_rule() {
        let g = build_graph(0, 3).unwrap();
        assert!(BallTable::new(&g, 0.2, 6).is_err());
        assert!(BallTable::new(&g, 0.25, 2).is_err());
    }

    #[test]
    fn prefix_volumes_grow() {
        let g = build_graph(1, 5).unwrap();
        let table = BallTable::new(&g, 0.25, 9).unwrap();
        let walk = RandomWalk::new(&g);
        let grid = [0.0, 0.05, 0.1, 0.2, 0.4];
        let vols = sausage_volumes(&walk, &table, 0, &grid, &mc(50, 3)).unwrap();
        for v in &vols {
            assert!(v.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(v[0], table.ball_measure(0));
        }
    }

    #[test]
    fn functional_edge_cases() {
        let g = build_graph(0, 4).unwrap();
        let r = sausage_functional(&g, 0, 0.5, 0.0, 0.25, 8, &mc(20, 1)).unwrap();
        assert_eq!((r.mean, r.stderr), (1.0, 0.0));
        let r0 = sausage_functional(&g, 3, 0.0, 2.0, 0.25, 8, &mc(20, 1)).unwrap();
        let table = BallTable::new(&g, 0.25, 8).unwrap();
        assert!((r0.mean - (-2.0 * table.ball_measure(3)).exp()).abs() < 1e-15);
    }

    #[test]
    fn survival_edge_cases() {
        let g = build_graph(1, 4).unwrap();
        let cloud = Cloud {
            blowup: 1,
            intensity: 1.0,
            radius: 0.3,
            sample_depth: 6,
            centers: crate::gasket::cells(1, 6).collect(),
            marks: vec![0.0; 729],
            seed: 0,
        };
        let s = survival_probability(&g, 5, 0.5, &cloud, true, &mc(10, 2)).unwrap();
        assert_eq!(s.mean, 0.0);
        let empty = sample_cloud(1, 0.0, 0.3, 6, 0).unwrap();
        let walk = RandomWalk::new(&g);
        let x0 = g.index_of(4, 4).unwrap();
        let curve = survival_curve(&walk, x0, &[0.01, 0.1, 1.0], &empty, true, &mc(200, 2)).unwrap();
        assert!(curve.windows(2).all(|w| w[1].mean <= w[0].mean));
        let nokill = survival_curve(&walk, x0, &[1.0], &empty, false, &mc(50, 2)).unwrap();
        assert_eq!(nokill[0].mean, 1.0);
    }

    #[test]
    fn survival_trace_free_case() {
        let amb = Ambient::new(1, 3, 1, 1.0).unwrap();
        let rows = averaged_survival_vs_trace(&amb, 0.0, 0.25, 7, &[0.1, 1.0, 10.0], 2, 0).unwrap();
        for r in &rows {
            assert_eq!(r.survival.stderr, 0.0);
            assert!(r.survival.mean <= r.trace.mean, "{r:?}");
        }
    }

    #[test]
    fn survival_trace_matches_direct_matrix() {
        let amb = Ambient::new(1, 3, 1, 1.0).unwrap();
        let keep = amb.keep_set(None, true).unwrap();
        let op = amb.killed_stable(&keep).unwrap();
        let w: Vec<f64> = keep.iter().map(|&v| amb.graph.weights[v]).collect();
        let (b, a) = survival_and_trace(&op, &w, 3.0, 0.7).unwrap();
        let k = crate::linalg::expm_neg(&op.matrix, 0.7);
        let direct_b: f64 = (0..keep.len())
            .map(|x| w[x] / 3.0 * (0..keep.len()).map(|y| k[(x, y)]).sum::<f64>())
            .sum();
        assert!((b - direct_b).abs() < 1e-12);
        assert!((a - crate::linalg::trace(&k)).abs() < 1e-12);
    }
}
