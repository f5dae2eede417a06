//! Killed stable spectra among obstacles, the empirical integrated density
//! of states and its Laplace transform, the variational functional behind
//! the upper constant, and obstacle-enlargement diagnostics.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, LabError, Result};
use crate::gasket::{constants, words};
use crate::graph::{
    build_graph_with, dirichlet_restrict, fractional_power, laplacian, laplacian_renormalized,
    trace_from_spectrum, LevelGraph, Limits, SymmetricOperator, WALK_TIME_FACTOR,
};
use crate::linalg;
use crate::obstacles::{
    enlarged_free_set, free_vertices, sample_cloud, sample_cloud_with_count, Classification, ClassifyParams, Cloud,
};
use crate::rng::{stream_seed, worker_rng};
use crate::stats::{pairwise_sum, MeanStderr};

/// `G^(M)` at depth `m` sitting in the corner of the padded ambient
/// `G^(M+pad)` at depth `m+pad` (same cell side), with the Brownian and
/// stable generators of the ambient.
///
/// Killing a set is restriction of the ambient stable generator, so jumps
/// that leave `G^(M)` are seen up to the padding.
pub struct Ambient {
    pub blowup: u32,
    pub depth: u32,
    pub pad: u32,
    pub alpha: f64,
    pub graph: LevelGraph,
    pub padded: LevelGraph,
    /// Index in `padded` of each vertex of `graph`.
    pub embed: Vec<usize>,
    pub brownian: SymmetricOperator,
    pub stable: SymmetricOperator,
}

impl Ambient {
    pub fn new(blowup: u32, depth: u32, pad: u32, alpha: f64) -> Result<Self> {
        Self::build(blowup, depth, pad, alpha, WALK_TIME_FACTOR, &Limits::from_env())
    }

    /// Ambient with an explicit per-level time factor (fault injection).
    pub fn build(
        blowup: u32,
        depth: u32,
        pad: u32,
        alpha: f64,
        time_factor: f64,
        limits: &Limits,
    ) -> Result<Self> {
        constants(alpha)?;
        let graph = build_graph_with(blowup, depth, limits)?;
        let padded = build_graph_with(blowup + pad, depth + pad, limits)?;
        limits.check_dense(padded.len())?;
        let embed = graph
            .lattice
            .iter()
            .map(|&(i, j)| padded.index_of(i, j).expect("G^(M) sits in the corner of its padding"))
            .collect();
        let brownian = if time_factor == WALK_TIME_FACTOR {
            laplacian(&padded)
        } else {
            laplacian_renormalized(&padded, time_factor)
        };
        let stable = fractional_power(&brownian, alpha / 2.0)?;
        Ok(Self { blowup, depth, pad, alpha, graph, padded, embed, brownian, stable })
    }

    /// Shared instance per `(M, m, pad, alpha)` for the process lifetime.
    pub fn cached(blowup: u32, depth: u32, pad: u32, alpha: f64) -> Result<Arc<Ambient>> {
        type Cache = Mutex<HashMap<(u32, u32, u32, u64), Arc<OnceLock<Arc<Ambient>>>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let slot = CACHE
            .get_or_init(Default::default)
            .lock()
            .unwrap()
            .entry((blowup, depth, pad, alpha.to_bits()))
            .or_default()
            .clone();
        if let Some(a) = slot.get() {
            return Ok(a.clone());
        }
        let built = Arc::new(Ambient::new(blowup, depth, pad, alpha)?);
        Ok(slot.get_or_init(|| built).clone())
    }

    /// Free vertices of `G^(M)`: outside the closed obstacle balls and, when
    /// `kill_exterior`, off the two corners where `G^(M)` meets the rest of
    /// the gasket.
    pub fn keep_set(&self, cloud: Option<&Cloud>, kill_exterior: bool) -> Result<Vec<usize>> {
        let free = match cloud {
            Some(c) => free_vertices(&self.graph, c, c.radius)?,
            None => (0..self.graph.len()).collect(),
        };
        Ok(free.into_iter().filter(|&v| !kill_exterior || !self.graph.is_exterior_boundary(v)).collect())
    }

    fn lift(&self, keep: &[usize]) -> Vec<usize> {
        keep.iter().map(|&v| self.embed[v]).collect()
    }

    /// Stable generator killed outside `keep` (vertices of `graph`).
    pub fn killed_stable(&self, keep: &[usize]) -> Result<SymmetricOperator> {
        dirichlet_restrict(&self.stable, &self.lift(keep))
    }

    /// Brownian generator killed outside `keep`.
    pub fn killed_brownian(&self, keep: &[usize]) -> Result<SymmetricOperator> {
        dirichlet_restrict(&self.brownian, &self.lift(keep))
    }

    pub fn volume(&self) -> f64 {
        3f64.powi(self.blowup as i32)
    }
}

/// Sorted eigenvalues of a killed stable generator with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KilledSpectrum {
    pub values: Vec<f64>,
    pub blowup: u32,
    pub depth: u32,
    pub pad: u32,
    pub alpha: f64,
    pub cloud_seed: Option<u64>,
    pub radius: f64,
}

pub fn killed_spectrum(ambient: &Ambient, cloud: &Cloud) -> Result<KilledSpectrum> {
    let keep = ambient.keep_set(Some(cloud), true)?;
    let values = if keep.is_empty() {
        Vec::new()
    } else {
        linalg::symmetric_eigenvalues(&ambient.killed_stable(&keep)?.matrix)?
    };
    Ok(KilledSpectrum {
        values,
        blowup: ambient.blowup,
        depth: ambient.depth,
        pad: ambient.pad,
        alpha: ambient.alpha,
        cloud_seed: Some(cloud.seed),
        radius: cloud.radius,
    })
}

/// `l(M, omega)`: the killed spectrum counted with weight `3^-M`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalIds {
    pub spectrum: KilledSpectrum,
}

impl EmpiricalIds {
    pub fn new(spectrum: KilledSpectrum) -> Self {
        Self { spectrum }
    }

    pub fn normalization(&self) -> f64 {
        3f64.powi(-(self.spectrum.blowup as i32))
    }

    pub fn total_mass(&self) -> f64 {
        self.spectrum.values.len() as f64 * self.normalization()
    }
}

/// `l([0, lambda]) = 3^-M #{n : lambda_n <= lambda}`.
pub fn ids_cdf(ids: &EmpiricalIds, lambda: f64) -> f64 {
    let count = ids.spectrum.values.partition_point(|&l| l <= lambda);
    count as f64 * ids.normalization()
}

/// `3^-M sum_n exp(-lambda_n t)`.
pub fn laplace_transform(ids: &EmpiricalIds, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("Laplace transform needs t > 0, got {t}"));
    }
    Ok(ids.normalization() * trace_from_spectrum(&ids.spectrum.values, t))
}

/// `|sum_n exp(-lambda_n t) - Tr exp(-t op)|`, the second term computed by
/// scaling and squaring without any eigendecomposition.
pub fn trace_identity_gap(op: &SymmetricOperator, t: f64) -> Result<f64> {
    let values = linalg::symmetric_eigenvalues(&op.matrix)?;
    let spectral = trace_from_spectrum(&values, t);
    let direct = linalg::trace(&linalg::expm_neg(&op.matrix, t));
    Ok((spectral - direct).abs())
}

/// Parameters recorded with an averaged curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveMeta {
    pub nu: f64,
    pub a: f64,
    pub alpha: f64,
    pub blowup: u32,
    pub depth: u32,
    pub pad: u32,
    pub sample_depth: u32,
    pub n_clouds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Sampled `t -> L_M(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceCurve {
    pub points: Vec<CurvePoint>,
    pub meta: CurveMeta,
}

impl LaplaceCurve {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Smallest second difference of `log L` in the grid index; the curve is
    /// log-convex when this is `>= -tol` on a geometric grid.
    pub fn min_log_second_difference(&self) -> f64 {
        let logs: Vec<f64> = self.points.iter().map(|p| p.value.ln()).collect();
        let ts: Vec<f64> = self.times();
        let mut worst = f64::INFINITY;
        for k in 1..logs.len().saturating_sub(1) {
            // divided differences, valid on any increasing grid
            let s1 = (logs[k] - logs[k - 1]) / (ts[k] - ts[k - 1]);
            let s2 = (logs[k + 1] - logs[k]) / (ts[k + 1] - ts[k]);
            worst = worst.min(s2 - s1);
        }
        worst
    }
}

/// Per-cloud Laplace transforms `L(M, omega)(t)` on a grid.
pub fn cloud_laplace_values(ambient: &Ambient, cloud: &Cloud, t_grid: &[f64]) -> Result<Vec<f64>> {
    let ids = EmpiricalIds::new(killed_spectrum(ambient, cloud)?);
    t_grid.iter().map(|&t| laplace_transform(&ids, t)).collect()
}

/// Seed of cloud `k` in an ensemble with master `seed`.
pub fn cloud_seed(seed: u64, k: usize) -> u64 {
    stream_seed(seed, "clouds").wrapping_add(k as u64)
}

/// Cloud-averaged Laplace transform `L_M(t) = E[L(M, omega)(t)]`.
#[allow(clippy::too_many_arguments)]
pub fn averaged_laplace(
    ambient: &Ambient,
    nu: f64,
    a: f64,
    sample_depth: u32,
    t_grid: &[f64],
    n_clouds: usize,
    seed: u64,
) -> Result<LaplaceCurve> {
    let grid = coupled_laplace(ambient, &[nu], &[a], sample_depth, t_grid, n_clouds, seed)?;
    Ok(grid.into_iter().next().unwrap())
}

/// Curves for every `(nu, a)` pair from one ensemble of clouds at the
/// largest intensity, thinned and re-radiused per pair (common random
/// numbers). Output order: `nus` outer, `radii` inner.
#[allow(clippy::too_many_arguments)]
pub fn coupled_laplace(
    ambient: &Ambient,
    nus: &[f64],
    radii: &[f64],
    sample_depth: u32,
    t_grid: &[f64],
    n_clouds: usize,
    seed: u64,
) -> Result<Vec<LaplaceCurve>> {
    let per_cloud = coupled_cloud_values(ambient, nus, radii, sample_depth, t_grid, n_clouds, seed)?;
    let mut curves = Vec::new();
    for (ni, &nu) in nus.iter().enumerate() {
        for (ai, &a) in radii.iter().enumerate() {
            let idx = ni * radii.len() + ai;
            let points = t_grid
                .iter()
                .enumerate()
                .map(|(ti, &t)| {
                    let xs: Vec<f64> = per_cloud.iter().map(|c| c[idx][ti]).collect();
                    let m = MeanStderr::of(&xs);
                    CurvePoint { t, value: m.mean, stderr: m.stderr }
                })
                .collect();
            curves.push(LaplaceCurve {
                points,
                meta: CurveMeta {
                    nu,
                    a,
                    alpha: ambient.alpha,
                    blowup: ambient.blowup,
                    depth: ambient.depth,
                    pad: ambient.pad,
                    sample_depth,
                    n_clouds,
                    seed,
                },
            });
        }
    }
    Ok(curves)
}

/// `values[cloud][pair][t]` for the coupled `(nu, a)` grid.
#[allow(clippy::too_many_arguments)]
pub fn coupled_cloud_values(
    ambient: &Ambient,
    nus: &[f64],
    radii: &[f64],
    sample_depth: u32,
    t_grid: &[f64],
    n_clouds: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if n_clouds == 0 {
        return domain("need at least one cloud");
    }
    if nus.is_empty() || radii.is_empty() {
        return domain("need at least one intensity and one radius");
    }
    if let Some(t) = t_grid.iter().find(|&&t| !(t > 0.0)) {
        return domain(format!("t-grid entries must be > 0, got {t}"));
    }
    let nu_max = nus.iter().cloned().fold(0.0, f64::max);
    let a_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..n_clouds)
        .into_par_iter()
        .map(|k| -> Result<Vec<Vec<f64>>> {
            let base = sample_cloud(ambient.blowup, nu_max, a_min, sample_depth, cloud_seed(seed, k))?;
            let mut out = Vec::with_capacity(nus.len() * radii.len());
            for &nu in nus {
                let thin = base.thinned(nu)?;
                for &a in radii {
                    out.push(cloud_laplace_values(ambient, &thin.with_radius(a), t_grid)?);
                }
            }
            Ok(out)
        })
        .collect()
}

/// Clouds of one stratum `{N = count}` of the Poisson center count.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub count: usize,
    pub probability: f64,
    pub spectra: Vec<KilledSpectrum>,
}

/// Ensemble stratified by the number of centers:
/// `E[f] = sum_n P(N = n) E[f | N = n]` over `n <= n_max`, each stratum
/// sampled with clouds of exactly `n` uniform centers. Low-count strata
/// carry the large-`t` and small-`lambda` behaviour that plain averages
/// over a few hundred clouds never see.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedEnsemble {
    pub meta: CurveMeta,
    pub strata: Vec<Stratum>,
    /// `P(N > n_max)`, left out of every estimate.
    pub truncated_mass: f64,
}

fn poisson_log_pmf(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mean + n as f64 * mean.ln() - statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// `(count, probability, clouds)` per stratum: counts up to the first `n`
/// with `P(N > n) < tail`, two clouds per random stratum (one for the
/// deterministic empty stratum), the rest allotted in proportion to the
/// probabilities by largest remainder.
pub fn stratum_allocation(mean: f64, n_clouds: usize, tail: f64) -> Result<Vec<(usize, f64, usize)>> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return domain(format!("Poisson mean must be finite and >= 0, got {mean}"));
    }
    let mut probs = Vec::new();
    let mut cum = 0.0;
    loop {
        let p = poisson_log_pmf(mean, probs.len()).exp();
        probs.push(p);
        cum += p;
        if 1.0 - cum < tail && probs.len() as f64 > mean {
            break;
        }
    }
    let base: Vec<usize> = (0..probs.len()).map(|n| if n == 0 { 1 } else { 2 }).collect();
    let need: usize = base.iter().sum();
    if n_clouds < need {
        return domain(format!("stratified ensemble needs at least {need} clouds, got {n_clouds}"));
    }
    let spare = (n_clouds - need) as f64;
    let total: f64 = probs[1..].iter().sum();
    let mut alloc = base;
    let mut rem: Vec<(f64, usize)> = Vec::new();
    let mut given = 0;
    for n in 1..probs.len() {
        let share = if total > 0.0 { spare * probs[n] / total } else { 0.0 };
        alloc[n] += share.floor() as usize;
        given += share.floor() as usize;
        rem.push((share - share.floor(), n));
    }
    rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, n) in rem.iter().take(n_clouds - need - given) {
        alloc[n] += 1;
    }
    Ok(probs.into_iter().zip(alloc).enumerate().map(|(n, (p, k))| (n, p, k)).collect())
}

/// Seed of the `j`-th cloud of stratum `count`.
pub fn stratum_seed(seed: u64, count: usize, j: usize) -> u64 {
    stream_seed(seed, "strata").wrapping_add(((count as u64) << 32) | j as u64)
}

pub fn stratified_ensemble(
    ambient: &Ambient,
    nu: f64,
    a: f64,
    sample_depth: u32,
    n_clouds: usize,
    seed: u64,
) -> Result<StratifiedEnsemble> {
    let alloc = stratum_allocation(nu * ambient.volume(), n_clouds, 1e-12)?;
    let jobs: Vec<(usize, usize)> =
        alloc.iter().flat_map(|&(n, _, k)| (0..k).map(move |j| (n, j))).collect();
    let spectra: Vec<KilledSpectrum> = jobs
        .par_iter()
        .map(|&(n, j)| {
            let cloud = sample_cloud_with_count(ambient.blowup, nu, a, sample_depth, n, stratum_seed(seed, n, j))?;
            killed_spectrum(ambient, &cloud)
        })
        .collect::<Result<_>>()?;
    let mut it = spectra.into_iter();
    let strata: Vec<Stratum> = alloc
        .iter()
        .map(|&(count, probability, k)| Stratum { count, probability, spectra: it.by_ref().take(k).collect() })
        .collect();
    let covered: f64 = strata.iter().map(|s| s.probability).sum();
    Ok(StratifiedEnsemble {
        meta: CurveMeta {
            nu,
            a,
            alpha: ambient.alpha,
            blowup: ambient.blowup,
            depth: ambient.depth,
            pad: ambient.pad,
            sample_depth,
            n_clouds,
            seed,
        },
        strata,
        truncated_mass: (1.0 - covered).max(0.0),
    })
}

impl StratifiedEnsemble {
    /// Stratified mean and standard error of a per-cloud statistic.
    pub fn estimate(&self, f: impl Fn(&KilledSpectrum) -> f64) -> (f64, f64) {
        let (mut mean, mut var) = (0.0, 0.0);
        for s in &self.strata {
            let xs: Vec<f64> = s.spectra.iter().map(&f).collect();
            let m = MeanStderr::of(&xs);
            mean += s.probability * m.mean;
            var += (s.probability * m.stderr).powi(2);
        }
        (mean, var.sqrt())
    }

    pub fn laplace(&self, t_grid: &[f64]) -> Result<LaplaceCurve> {
        let norm = 3f64.powi(-(self.meta.blowup as i32));
        let points = t_grid
            .iter()
            .map(|&t| {
                if !(t > 0.0) {
                    return domain(format!("t-grid entries must be > 0, got {t}"));
                }
                let (value, stderr) = self.estimate(|sp| norm * trace_from_spectrum(&sp.values, t));
                Ok(CurvePoint { t, value, stderr })
            })
            .collect::<Result<_>>()?;
        Ok(LaplaceCurve { points, meta: self.meta.clone() })
    }

    /// Expected IDS `E l(M, omega)([0, lambda])`.
    pub fn ids_cdf(&self, lambda: f64) -> f64 {
        let norm = 3f64.powi(-(self.meta.blowup as i32));
        self.estimate(|sp| norm * sp.values.partition_point(|&l| l <= lambda) as f64).0
    }

    /// `(lambda, E l([0, lambda]))` at every eigenvalue of the ensemble.
    pub fn ids_table(&self) -> Vec<(f64, f64)> {
        let mut all: Vec<f64> =
            self.strata.iter().flat_map(|s| s.spectra.iter().flat_map(|sp| sp.values.iter().cloned())).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all.into_iter().map(|l| (l, self.ids_cdf(l))).collect()
    }

    pub fn n_clouds(&self) -> usize {
        self.strata.iter().map(|s| s.spectra.len()).sum()
    }
}

/// `(lambda, mean_k l(M, omega_k)([0, lambda]))` at every eigenvalue of the
/// clouds used by [`averaged_laplace`].
pub fn averaged_ids_table(
    ambient: &Ambient,
    nu: f64,
    a: f64,
    sample_depth: u32,
    n_clouds: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_clouds == 0 {
        return domain("need at least one cloud");
    }
    let spectra: Vec<KilledSpectrum> = (0..n_clouds)
        .into_par_iter()
        .map(|k| killed_spectrum(ambient, &sample_cloud(ambient.blowup, nu, a, sample_depth, cloud_seed(seed, k))?))
        .collect::<Result<_>>()?;
    let mut all: Vec<f64> = spectra.iter().flat_map(|s| s.values.iter().cloned()).collect();
    all.sort_by(f64::total_cmp);
    let scale = 3f64.powi(-(ambient.blowup as i32)) / n_clouds as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &l) in all.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == l => last.1 = scale * (i + 1) as f64,
            _ => out.push((l, scale * (i + 1) as f64)),
        }
    }
    Ok(out)
}

/// Principal eigenvalues `(lambda_1 stable, lambda_1 Brownian)` of the same
/// killed set on one cloud; `None` if nothing is free.
pub fn principal_pair(ambient: &Ambient, cloud: &Cloud) -> Result<Option<(f64, f64)>> {
    let keep = ambient.keep_set(Some(cloud), true)?;
    if keep.is_empty() {
        return Ok(None);
    }
    let s = linalg::symmetric_eigenvalues(&ambient.killed_stable(&keep)?.matrix)?[0];
    let b = linalg::symmetric_eigenvalues(&ambient.killed_brownian(&keep)?.matrix)?[0];
    Ok(Some((s, b)))
}

/// Reflecting stable generator on `G^(0)` at depth `m` together with the
/// membership of its vertices in depth-`k` cells.
pub struct VariationalContext {
    pub alpha: f64,
    pub depth: u32,
    pub cell_depth: u32,
    pub graph: LevelGraph,
    pub stable: SymmetricOperator,
    /// Depth-`k` cell indices (lexicographic) touching each vertex.
    pub vertex_cells: Vec<Vec<usize>>,
}

impl VariationalContext {
    pub fn new(alpha: f64, depth: u32, cell_depth: u32) -> Result<Self> {
        constants(alpha)?;
        if cell_depth > depth {
            return domain(format!("cell depth {cell_depth} exceeds graph depth {depth}"));
        }
        let graph = build_graph_with(0, depth, &Limits::from_env())?;
        let stable = fractional_power(&laplacian(&graph), alpha / 2.0)?;
        let mut vertex_cells = vec![Vec::new(); graph.len()];
        let k = cell_depth as usize;
        for w in words(depth as usize) {
            let cell = w[..k].iter().fold(0usize, |acc, &d| 3 * acc + d as usize);
            let (i, j) = crate::gasket::anchor_of_digits(&w);
            for c in 0..3u8 {
                let (di, dj) = crate::gasket::corner_offset(c);
                let v = graph.index_of(i + di, j + dj).expect("corner is a vertex");
                if !vertex_cells[v].contains(&cell) {
                    vertex_cells[v].push(cell);
                }
            }
        }
        Ok(Self { alpha, depth, cell_depth, graph, stable, vertex_cells })
    }

    pub fn n_cells(&self) -> usize {
        3usize.pow(self.cell_depth)
    }

    /// `(lambda_0(U), mu(U))` for the union `U` of the flagged cells; the
    /// process is killed at vertices touching a cell outside `U`.
    pub fn evaluate(&self, cells: &[bool]) -> Result<(f64, f64)> {
        if cells.len() != self.n_cells() {
            return domain("cell flag vector has the wrong length");
        }
        let mu = cells.iter().filter(|&&c| c).count() as f64 / self.n_cells() as f64;
        let keep: Vec<usize> = (0..self.graph.len())
            .filter(|&v| self.vertex_cells[v].iter().all(|&c| cells[c]))
            .collect();
        let lambda = if keep.is_empty() {
            f64::INFINITY
        } else {
            linalg::symmetric_eigenvalues(&dirichlet_restrict(&self.stable, &keep)?.matrix)?[0].max(0.0)
        };
        Ok((lambda, mu))
    }

    pub fn value(&self, cells: &[bool]) -> Result<f64> {
        let (l, mu) = self.evaluate(cells)?;
        Ok(l + 2f64.powf(-constants(self.alpha)?.d_alpha) * mu)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub value: f64,
    pub lambda0: f64,
    pub measure: f64,
    /// Words of the depth-`k` cells forming the minimizer.
    pub best: Vec<Vec<u8>>,
    pub evaluations: usize,
}

fn flags_to_words(flags: &[bool], k: u32) -> Vec<Vec<u8>> {
    words(k as usize).zip(flags).filter(|(_, &f)| f).map(|(w, _)| w).collect()
}

fn words_to_flags(set: &[Vec<u8>], k: u32) -> Result<Vec<bool>> {
    let mut flags = vec![false; 3usize.pow(k)];
    for w in set {
        if w.len() != k as usize || w.iter().any(|&d| d > 2) {
            return domain(format!("candidate cell {w:?} is not a depth-{k} word"));
        }
        flags[w.iter().fold(0usize, |acc, &d| 3 * acc + d as usize)] = true;
    }
    Ok(flags)
}

/// Minimizes `lambda_0(U) + 2^-d_alpha mu(U)` over the given candidate
/// unions of depth-`k` cells.
pub fn variational_functional(
    ctx: &VariationalContext,
    candidates: &[Vec<Vec<u8>>],
) -> Result<VariationalResult> {
    if candidates.is_empty() {
        return domain("empty candidate family");
    }
    let mut best: Option<VariationalResult> = None;
    for (n, cand) in candidates.iter().enumerate() {
        let flags = words_to_flags(cand, ctx.cell_depth)?;
        let (l, mu) = ctx.evaluate(&flags)?;
        let v = l + 2f64.powf(-constants(ctx.alpha)?.d_alpha) * mu;
        if best.as_ref().is_none_or(|b| v < b.value) {
            best = Some(VariationalResult {
                value: v,
                lambda0: l,
                measure: mu,
                best: cand.clone(),
                evaluations: n + 1,
            });
        }
    }
    let mut b = best.unwrap();
    b.evaluations = candidates.len();
    Ok(b)
}

/// Greedy descent from the full set and from `restarts` random subsets,
/// toggling one cell at a time while the value decreases.
pub fn variational_search(ctx: &VariationalContext, restarts: usize, seed: u64) -> Result<VariationalResult> {
    let n = ctx.n_cells();
    let mut starts = vec![vec![true; n]];
    let mut rng = worker_rng(stream_seed(seed, "variational"), 0);
    for _ in 0..restarts {
        let p: f64 = rng.gen_range(0.3..0.95);
        starts.push((0..n).map(|_| rng.gen::<f64>() < p).collect());
    }
    let mut evaluations = 0usize;
    let mut best: Option<(f64, Vec<bool>)> = None;
    for mut cur in starts {
        let mut val = ctx.value(&cur)?;
        evaluations += 1;
        loop {
            let mut improved = None;
            for c in 0..n {
                cur[c] = !cur[c];
                if cur.iter().any(|&f| f) {
                    let v = ctx.value(&cur)?;
                    evaluations += 1;
                    if v < val - 1e-15 && improved.is_none_or(|(_, bv)| v < bv) {
                        improved = Some((c, v));
                    }
                }
                cur[c] = !cur[c];
            }
            match improved {
                Some((c, v)) => {
                    cur[c] = !cur[c];
                    val = v;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
            best = Some((val, cur));
        }
    }
    let (_, flags) = best.unwrap();
    let (l, mu) = ctx.evaluate(&flags)?;
    Ok(VariationalResult {
        value: ctx.value(&flags)?,
        lambda0: l,
        measure: mu,
        best: flags_to_words(&flags, ctx.cell_depth),
        evaluations,
    })
}

/// `(mu(U_j), lambda_0(U_j))` along nested unions that add cells in
/// lexicographic order.
pub fn nested_tradeoff(ctx: &VariationalContext) -> Result<Vec<(f64, f64)>> {
    let n = ctx.n_cells();
    let mut flags = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        flags[c] = true;
        let (l, mu) = ctx.evaluate(&flags)?;
        out.push((mu, l));
    }
    Ok(out)
}

/// Smallest admissible `R` of the enlargement theorem:
/// `max(3+, (1 + 2 c3 e^K (1 + c4 (1 + K/delta)))^(1/s))`.
pub fn min_r(c3: f64, c4: f64, k: f64, delta: f64, s: f64) -> Result<f64> {
    if [c3, c4, k, delta, s].iter().any(|&x| !(x > 0.0)) {
        return domain("min_R needs positive inputs");
    }
    let r = (1.0 + 2.0 * c3 * k.exp() * (1.0 + c4 * (1.0 + k / delta))).powf(1.0 / s);
    Ok(r.max(3f64.next_up()))
}

/// Principal eigenvalues with the true and the enlarged obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct EnlargementReport {
    pub lambda_theta: f64,
    pub lambda_b: f64,
    pub k: f64,
    pub delta: f64,
    pub b: f64,
    pub eps: f64,
    pub good: usize,
    pub centers: usize,
    /// `lambda_b ∧ K <= lambda_Theta ∧ K + delta`.
    pub holds: bool,
}

/// Compares principal eigenvalues of the reflecting stable generator on
/// `graph` killed on the `a eps` obstacles (`Theta`) and on the `b eps`
/// balls around good centers (`Theta_b`). Empty free sets give `+inf`.
#[allow(clippy::too_many_arguments)]
pub fn check_enlargement(
    graph: &LevelGraph,
    stable: &SymmetricOperator,
    cloud: &Cloud,
    classification: &Classification,
    b: f64,
    eps: f64,
    k: f64,
    delta: f64,
) -> Result<EnlargementReport> {
    if stable.dim() != graph.len() {
        return domain("operator does not match graph");
    }
    let principal = |keep: &[usize]| -> Result<f64> {
        if keep.is_empty() {
            return Ok(f64::INFINITY);
        }
        Ok(linalg::symmetric_eigenvalues(&dirichlet_restrict(stable, keep)?.matrix)?[0].max(0.0))
    };
    let theta = free_vertices(graph, cloud, cloud.radius)?;
    let theta_b = enlarged_free_set(graph, cloud, classification, b, eps)?;
    let lt = principal(&theta)?;
    let lb = principal(&theta_b)?;
    Ok(EnlargementReport {
        lambda_theta: lt,
        lambda_b: lb,
        k,
        delta,
        b,
        eps,
        good: classification.good_count(),
        centers: cloud.len(),
        holds: lb.min(k) <= lt.min(k) + delta,
    })
}

/// Classification followed by [`check_enlargement`] on the reflecting
/// generator of `graph`.
pub fn enlargement_sweep(
    graph: &LevelGraph,
    alpha: f64,
    cloud: &Cloud,
    params: ClassifyParams,
    k: f64,
    eps_values: &[f64],
) -> Result<Vec<EnlargementReport>> {
    let stable = fractional_power(&laplacian(graph), alpha / 2.0)?;
    eps_values
        .iter()
        .map(|&eps| {
            let p = ClassifyParams { eps, ..params };
            let scaled = cloud.with_radius(cloud.radius / params.eps * eps);
            let cl = crate::obstacles::classify_points(&scaled, graph, p)?;
            check_enlargement(graph, &stable, &scaled, &cl, p.b, eps, k, p.delta)
        })
        .collect()
}

/// Obstacle-free `3^-M Tr exp(-t F_K)` with only the exterior killed.
pub fn free_laplace(ambient: &Ambient, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::Domain(format!("t must be > 0, got {t}")));
    }
    let keep = ambient.keep_set(None, true)?;
    let values = linalg::symmetric_eigenvalues(&ambient.killed_stable(&keep)?.matrix)?;
    Ok(pairwise_sum(&values.iter().map(|l| (-l * t).exp()).collect::<Vec<_>>()) / ambient.volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::Address;

    fn spectrum(values: Vec<f64>, blowup: u32) -> EmpiricalIds {
        EmpiricalIds::new(KilledSpectrum {
            values,
            blowup,
            depth: 0,
            pad: 0,
            alpha: 1.0,
            cloud_seed: None,
            radius: 0.1,
        })
    }

    #[test]
    fn cdf_examples() {
        let ids = spectrum(vec![1.0, 2.0], 1);
        assert!((ids_cdf(&ids, 1.5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ids_cdf(&ids, 0.5), 0.0);
        assert!((ids_cdf(&ids, 2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((ids_cdf(&ids, 9.0) - ids.total_mass()).abs() < 1e-15);
    }

    #[test]
    fn laplace_examples() {
        let ids = spectrum(vec![1.0], 0);
        assert!((laplace_transform(&ids, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(laplace_transform(&spectrum(vec![], 2), 1.0).unwrap(), 0.0);
        assert!(laplace_transform(&ids, 0.0).is_err());
    }

    #[test]
    fn min_r_examples() {
        let e = std::f64::consts::E;
        assert!((min_r(1.0, 1.0, 1.0, 1.0, 1.0).unwrap() - (1.0 + 6.0 * e)).abs() < 1e-12);
        assert!((min_r(1.0, 1.0, 1.0, 1.0, 2.0).unwrap() - (1.0 + 6.0 * e).sqrt()).abs() < 1e-12);
        let tiny = min_r(1e-12, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(tiny > 3.0 && tiny < 3.0 + 1e-12);
        assert!(min_r(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ambient_embedding_and_killing() {
        let amb = Ambient::new(0, 2, 1, 1.0).unwrap();
        assert_eq!(amb.padded.len(), crate::graph::vertex_count(3));
        for (v, &p) in amb.embed.iter().enumerate() {
            assert_eq!(amb.graph.lattice[v], amb.padded.lattice[p]);
        }
        let keep = amb.keep_set(None, true).unwrap();
        assert_eq!(keep.len(), 13);
        // a single free vertex: the 1x1 principal submatrix
        let one = amb.killed_stable(&keep[..1]).unwrap();
        assert_eq!(one.get(0, 0), amb.stable.get(amb.embed[keep[0]], amb.embed[keep[0]]));
    }

    #[test]
    fn full_cover_gives_empty_spectrum() {
        let amb = Ambient::new(0, 2, 1, 1.0).unwrap();
        let centers: Vec<Address> = crate::gasket::cells(0, 5).collect();
        let marks = vec![0.0; centers.len()];
        let cloud = Cloud { blowup: 0, intensity: 1.0, radius: 0.1, sample_depth: 5, centers, marks, seed: 9 };
        let s = killed_spectrum(&amb, &cloud).unwrap();
        assert!(s.values.is_empty());
        assert_eq!(laplace_transform(&EmpiricalIds::new(s), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn trace_identity_small() {
        let amb = Ambient::new(1, 3, 1, 1.0).unwrap();
        let cloud = sample_cloud(1, 2.0, 0.2, 7, 5).unwrap();
        let keep = amb.keep_set(Some(&cloud), true).unwrap();
        let op = amb.killed_stable(&keep).unwrap();
        for t in [0.1, 1.0, 10.0] {
            assert!(trace_identity_gap(&op, t).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn chen_song_small() {
        let amb = Ambient::new(1, 3, 1, 1.2).unwrap();
        for s in 0..5 {
            let cloud = sample_cloud(1, 1.0, 0.2, 7, s).unwrap();
            if let Some((st, bm)) = principal_pair(&amb, &cloud).unwrap() {
                assert!(st <= bm.powf(0.6) * (1.0 + 1e-12), "{st} vs {bm}");
            }
        }
    }

    #[test]
    fn averaged_curve_properties() {
        let amb = Ambient::new(1, 3, 1, 1.0).unwrap();
        let grid = [0.5, 1.0, 2.0, 4.0];
        let free = averaged_laplace(&amb, 0.0, 0.2, 7, &grid, 3, 1).unwrap();
        for (p, &t) in free.points.iter().zip(&grid) {
            assert_eq!(p.stderr, 0.0);
            assert!((p.value - free_laplace(&amb, t).unwrap()).abs() < 1e-14);
        }
        let a = averaged_laplace(&amb, 2.0, 0.2, 7, &grid, 6, 1).unwrap();
        let b = averaged_laplace(&amb, 2.0, 0.2, 7, &grid, 6, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.values().windows(2).all(|w| w[1] <= w[0]));
        assert!(a.min_log_second_difference() >= -1e-8);
    }

    #[test]
    fn coupled_monotonicity() {
        let amb = Ambient::new(1, 3, 1, 1.0).unwrap();
        let grid = [0.5, 2.0];
        let v = coupled_cloud_values(&amb, &[0.5, 2.0], &[0.15, 0.3], 8, &grid, 8, 4).unwrap();
        for cloud in &v {
            #[allow(clippy::needless_range_loop)]
            for t in 0..grid.len() {
                // (nu, a) order: (0.5,0.15) (0.5,0.3) (2,0.15) (2,0.3)
                assert!(cloud[2][t] <= cloud[0][t]);
                assert!(cloud[3][t] <= cloud[1][t]);
                assert!(cloud[1][t] <= cloud[0][t]);
                assert!(cloud[3][t] <= cloud[2][t]);
            }
        }
    }

    #[test]
    fn scaling_consistency_of_free_curves() {
        // L on G^(1)@m equals L on G^(0)@m at time t / 5^(alpha/2), divided by 3
        let alpha = 1.5;
        let a1 = Ambient::new(1, 3, 1, alpha).unwrap();
        let a0 = Ambient::new(0, 3, 1, alpha).unwrap();
        for t in [0.3, 1.0, 3.0] {
            let l1 = free_laplace(&a1, t).unwrap();
            let l0 = free_laplace(&a0, t / 5f64.powf(alpha / 2.0)).unwrap();
            assert!((l1 - l0 / 3.0).abs() < 1e-12, "{l1} vs {}", l0 / 3.0);
        }
    }

    #[test]
    fn variational_full_set_and_positivity() {
        let ctx = VariationalContext::new(1.0, 3, 1).unwrap();
        let full = vec![vec![0u8], vec![1], vec![2]];
        let r = variational_functional(&ctx, std::slice::from_ref(&full)).unwrap();
        let d_alpha = constants(1.0).unwrap().d_alpha;
        assert!(r.lambda0.abs() < 1e-10);
        assert!((r.value - r.lambda0 - 2f64.powf(-d_alpha)).abs() < 1e-14);
        let two = vec![vec![0u8], vec![1]];
        let r2 = variational_functional(&ctx, &[two, full]).unwrap();
        assert!(r2.value > 0.0);
        assert!(variational_functional(&ctx, &[]).is_err());
        let trade = nested_tradeoff(&ctx).unwrap();
        assert!(trade.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 <= w[0].1));
    }

    #[test]
    fn variational_search_finds_no_worse_than_full() {
        let ctx = VariationalContext::new(1.0, 3, 2).unwrap();
        let r = variational_search(&ctx, 3, 1).unwrap();
        let full = ctx.value(&[true; 9]).unwrap();
        assert!(r.value <= full + 1e-15 && r.value > 0.0);
    }

    #[test]
    fn enlargement_trivial_cases() {
        let g = crate::graph::build_graph(0, 3).unwrap();
        let stable = fractional_power(&laplacian(&g), 0.5).unwrap();
        let cloud = sample_cloud(0, 6.0, 0.06, 7, 3).unwrap();
        let params = ClassifyParams { r: 4.0, b: 4.0, delta: 0.5, eps: 0.02, kappa: 3.0, r0: 1.0 };
        let mut cl = crate::obstacles::classify_points(&cloud, &g, params).unwrap();
        cl.good = vec![false; cloud.len()];
        let r = check_enlargement(&g, &stable, &cloud, &cl, 4.0, 0.02, 10.0, 0.5).unwrap();
        assert!(r.lambda_b <= r.lambda_theta + 1e-12 && r.holds);
        cl.good = vec![true; cloud.len()];
        let same = check_enlargement(&g, &stable, &cloud, &cl, 3.0, 0.02, 10.0, 0.5).unwrap();
        assert_eq!(same.lambda_b, same.lambda_theta);
        assert!(same.holds);
    }
}
