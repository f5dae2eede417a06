//! The `alpha/2`-stable subordinator and subordinated random walks on
//! prefractal graphs.

use std::f64::consts::PI;
use std::sync::OnceLock;

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{domain, LabError, Result};
use crate::gasket::project0;
use crate::graph::{
    fractional_power, laplacian_renormalized, weighted_kernel, LevelGraph, Limits, WALK_TIME_FACTOR,
};
use crate::linalg::{self, SymmetricEigen};
use crate::quadrature::gauss_legendre;
use crate::rng::{worker_rng, LabRng};
use crate::stats::MeanStderr;

/// Stability index of the process together with the seed of its subordinator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinatorSpec {
    pub alpha: f64,
    pub seed: u64,
}

impl SubordinatorSpec {
    pub fn new(alpha: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, seed })
    }

    /// Index `alpha/2` of the subordinator.
    pub fn index(&self) -> f64 {
        self.alpha / 2.0
    }

    pub fn rng(&self) -> LabRng {
        worker_rng(self.seed, 0)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return domain(format!("alpha must lie in (0,2), got {alpha}"));
    }
    Ok(())
}

/// Positive `beta`-stable variable with Laplace transform `exp(-u^beta)`,
/// by the Chambers-Mallows-Stuck (Kanter) transform of a uniform angle and a
/// unit exponential.
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = PI * rng.gen::<f64>();
        let w: f64 = Exp1.sample(rng);
        if u <= 0.0 || w <= 0.0 {
            continue;
        }
        let s = (beta * u).sin() / u.sin().powf(1.0 / beta)
            * (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta);
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

/// One increment `S_dt` of the `alpha/2`-stable subordinator, using the
/// scaling `S_dt = dt^(2/alpha) S_1`.
pub fn sample_subordinator_increment<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R) -> f64 {
    dt.powf(2.0 / alpha) * sample_positive_stable(alpha / 2.0, rng)
}

/// Kanter's function `A(theta)` for the positive `beta`-stable law.
#[cfg(test)]
fn kanter_a(beta: f64, theta: f64) -> f64 {
    let s = theta.sin();
    ((beta * theta).sin() / s).powf(1.0 / (1.0 - beta)) * ((1.0 - beta) * theta).sin()
        / (beta * theta).sin()
}

/// `A(pi - phi)`, accurate for small `phi`.
fn kanter_a_reflected(beta: f64, phi: f64) -> f64 {
    let sb = (beta * (PI - phi)).sin();
    (sb / phi.sin()).powf(1.0 / (1.0 - beta)) * ((1.0 - beta) * (PI - phi)).sin() / sb
}

/// Density `eta_1(u)` of the `1/2`-stable subordinator at time one.
pub fn half_stable_density(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    u.powf(-1.5) * (-0.25 / u).exp() / (2.0 * PI.sqrt())
}

/// Density `eta_t(u)` of `S_t`.
///
/// `eta_t(u) = t^(-2/alpha) eta_1(t^(-2/alpha) u)`; `eta_1` is the closed
/// form at `alpha = 1` and otherwise Kanter's integral over `(0, pi)` on a
/// Gauss-Legendre rule of 64 nodes, doubled until two successive rules agree
/// to `1e-8` relative.
pub fn subordinator_density(alpha: f64, t: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t > 0.0 && u > 0.0) {
        return domain(format!("subordinator density needs t, u > 0 (t={t}, u={u})"));
    }
    let scale = t.powf(-2.0 / alpha);
    Ok(scale * unit_time_density(alpha, scale * u)?)
}

fn unit_time_density(alpha: f64, x: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Ok(half_stable_density(x));
    }
    let beta = alpha / 2.0;
    let p = beta / (1.0 - beta);
    let big = x.powf(-p);
    // A is increasing on (0, pi) from A(0+) to infinity
    let a0 = beta.powf(1.0 / (1.0 - beta)) * (1.0 - beta) / beta;
    if a0 * big > 745.0 {
        return Ok(0.0);
    }
    // integrate in s = ln(pi - theta): the mass sits where A * big ~ 1, which
    // for large x is a thin layer at theta = pi of width proportional to pi - theta
    let cutoff = {
        let (mut lo, mut hi) = (0.0f64, PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if kanter_a_reflected(beta, mid) * big > 800.0 { lo = mid } else { hi = mid }
        }
        hi.max(1e-300)
    };
    let pref = p * big / x / PI;
    let integrand = |s: f64| {
        let phi = s.exp();
        let a = kanter_a_reflected(beta, phi);
        let v = a * (-a * big).exp() * phi;
        if v.is_finite() { v } else { 0.0 }
    };
    let (lo, hi) = (cutoff.ln(), PI.ln());
    let mut nodes = 64;
    let mut prev = integrate(&integrand, lo, hi, nodes);
    while nodes < 8192 {
        nodes *= 2;
        let next = integrate(&integrand, lo, hi, nodes);
        if (next - prev).abs() <= 1e-8 * next.abs() || next.abs() < 1e-300 {
            return Ok(pref * next);
        }
        prev = next;
    }
    Err(LabError::Numeric(format!(
        "subordinator density quadrature did not converge (alpha={alpha}, u={x})"
    )))
}

fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let (x, w) = (&rule.0, &rule.1);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

/// Density of `S_1` from the Bromwich integral collapsed onto the branch cut
/// of `exp(-s^beta)`:
/// `eta_1(u) = (1/pi) int_0^inf exp(-u r - r^beta cos(pi beta)) sin(r^beta sin(pi beta)) dr`.
///
/// Accurate while the integrand does not grow (`beta <= 1/2`) or `u` is of
/// order one; it serves as an independent cross-check of
/// [`subordinator_density`].
pub fn subordinator_density_bromwich(alpha: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(u > 0.0) {
        return domain("bromwich density needs u > 0");
    }
    let beta = alpha / 2.0;
    let (c, s) = ((PI * beta).cos(), (PI * beta).sin());
    // r = y^k removes the r^beta singularity at the origin
    let k = (1.0 / beta).ceil().max(2.0);
    let g = |y: f64| {
        let r = y.powf(k);
        let rb = r.powf(beta);
        k * y.powf(k - 1.0) * (-u * r - rb * c).exp() * (rb * s).sin()
    };
    let upper = (60.0 / u).powf(1.0 / k);
    let pieces = 400;
    let h = upper / pieces as f64;
    let total: f64 = (0..pieces)
        .map(|p| integrate(&g, p as f64 * h, (p + 1) as f64 * h, 32))
        .sum();
    Ok(total / PI)
}

/// Simple random walk on a level graph, with an exact spectral sampler for
/// step counts too large to simulate one step at a time.
pub struct RandomWalk<'g> {
    pub graph: &'g LevelGraph,
    pub max_explicit_steps: u64,
    spectral: OnceLock<Result<WalkSpectrum>>,
}

struct WalkSpectrum {
    eigen: SymmetricEigen,
    sqrt_degree: Vec<f64>,
}

impl<'g> RandomWalk<'g> {
    pub fn new(graph: &'g LevelGraph) -> Self {
        Self { graph, max_explicit_steps: 200_000, spectral: OnceLock::new() }
    }

    /// Walk steps per unit of Brownian time: `5^(m - M)`.
    pub fn steps_per_time(&self) -> f64 {
        5f64.powi(self.graph.depth as i32 - self.graph.blowup as i32)
    }

    fn spectrum(&self) -> Result<&WalkSpectrum> {
        let r = self.spectral.get_or_init(|| {
            let g = self.graph;
            Limits::from_env().check_dense(g.len()).map_err(|_| {
                LabError::Resource(format!(
                    "step count above {} needs the spectral sampler, but the graph has {} vertices; reduce m or t",
                    self.max_explicit_steps,
                    g.len()
                ))
            })?;
            let sqrt_degree: Vec<f64> = (0..g.len()).map(|v| (g.degree(v) as f64).sqrt()).collect();
            let mut n = Mat::<f64>::zeros(g.len(), g.len());
            for &(a, b) in &g.edges {
                let x = 1.0 / (sqrt_degree[a] * sqrt_degree[b]);
                n[(a, b)] = x;
                n[(b, a)] = x;
            }
            Ok(WalkSpectrum { eigen: linalg::symmetric_eigen(&n)?, sqrt_degree })
        });
        r.as_ref().map_err(|e| match e {
            LabError::Resource(m) => LabError::Resource(m.clone()),
            other => LabError::Numeric(other.to_string()),
        })
    }

    /// Position after `steps` further steps from `from`.
    pub fn advance(&self, from: usize, steps: u64, rng: &mut LabRng) -> Result<usize> {
        if steps <= self.max_explicit_steps {
            let mut v = from;
            for _ in 0..steps {
                let nb = &self.graph.neighbors[v];
                v = nb[rng.gen_range(0..nb.len())];
            }
            return Ok(v);
        }
        let spec = self.spectrum()?;
        let e = &spec.eigen;
        let n = e.dim();
        let odd = steps % 2 == 1;
        let k = steps as f64;
        let pw: Vec<f64> = e
            .values
            .iter()
            .map(|&l| {
                let m = l.abs().min(1.0).powf(k);
                if l < 0.0 && odd { -m } else { m }
            })
            .collect();
        let coef: Vec<f64> = (0..n).map(|i| pw[i] * e.vectors[(from, i)]).collect();
        let mut probs = vec![0.0; n];
        for (y, p) in probs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, c) in coef.iter().enumerate() {
                acc += c * e.vectors[(y, i)];
            }
            *p = (acc * spec.sqrt_degree[y] / spec.sqrt_degree[from]).max(0.0);
        }
        let total: f64 = probs.iter().sum();
        let mut target = rng.gen::<f64>() * total;
        for (y, p) in probs.iter().enumerate() {
            target -= p;
            if target < 0.0 {
                return Ok(y);
            }
        }
        Ok(n - 1)
    }
}

/// A subordinated walk sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub positions: Vec<usize>,
    /// Subordinator value `S_u` at each grid time.
    pub subordinator: Vec<f64>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Prefix up to (and including) grid time `t`.
    pub fn prefix(&self, t: f64) -> PathSample {
        let n = self.times.iter().take_while(|&&u| u <= t * (1.0 + 1e-12)).count().max(1);
        PathSample {
            times: self.times[..n].to_vec(),
            positions: self.positions[..n].to_vec(),
            subordinator: self.subordinator[..n].to_vec(),
        }
    }
}

/// Time grid `0, dt, 2dt, ..., horizon`.
pub fn time_grid(horizon: f64, dt: f64) -> Vec<f64> {
    if horizon <= 0.0 {
        return vec![0.0];
    }
    let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|k| (k as f64 * dt).min(horizon)).collect()
}

/// Subordinated walk `X_u = Z_{floor(S_u 5^(m-M))}` on the grid of step `dt`.
pub fn simulate_stable_path(
    walk: &RandomWalk<'_>,
    x0: usize,
    horizon: f64,
    dt: f64,
    alpha: f64,
    rng: &mut LabRng,
) -> Result<PathSample> {
    check_alpha(alpha)?;
    if x0 >= walk.graph.len() {
        return domain(format!("start vertex {x0} not in graph"));
    }
    if !(dt > 0.0) || horizon < 0.0 {
        return domain(format!("need dt > 0 and t >= 0 (dt={dt}, t={horizon})"));
    }
    let times = time_grid(horizon, dt);
    let rate = walk.steps_per_time();
    let mut positions = Vec::with_capacity(times.len());
    let mut subordinator = Vec::with_capacity(times.len());
    positions.push(x0);
    subordinator.push(0.0);
    let mut s = 0.0;
    let mut steps_done = 0u64;
    let mut pos = x0;
    for w in times.windows(2) {
        s += sample_subordinator_increment(alpha, w[1] - w[0], rng);
        let target = s * rate;
        if !target.is_finite() || target > 1e18 {
            return Err(LabError::Resource(format!(
                "step count {target:e} overflows; reduce m or t"
            )));
        }
        let target = target.floor() as u64;
        pos = walk.advance(pos, target - steps_done, rng)?;
        steps_done = target;
        positions.push(pos);
        subordinator.push(s);
    }
    Ok(PathSample { times, positions, subordinator })
}

/// `P_x[ sup_{s <= t} |X_s - X_0| > r ]` on the grid, for each radius.
#[allow(clippy::too_many_arguments)]
pub fn exit_probabilities(
    walk: &RandomWalk<'_>,
    x0: usize,
    horizon: f64,
    dt: f64,
    alpha: f64,
    radii: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MeanStderr>> {
    use rayon::prelude::*;
    let origin = walk.graph.point(x0);
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let sups: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let mut rng = worker_rng(seed, k as u64);
            let times = time_grid(horizon, dt);
            let rate = walk.steps_per_time();
            let (mut s, mut done, mut pos, mut sup) = (0.0, 0u64, x0, 0f64);
            for w in times.windows(2) {
                s += sample_subordinator_increment(alpha, w[1] - w[0], &mut rng);
                let target = (s * rate).min(1e18).floor() as u64;
                pos = walk.advance(pos, target - done, &mut rng)?;
                done = target;
                sup = sup.max(walk.graph.point(pos).dist(&origin));
                if sup > rmax {
                    break;
                }
            }
            Ok(sup)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(radii
        .iter()
        .map(|&r| {
            let hits: Vec<f64> = sups.iter().map(|&s| if s > r { 1.0 } else { 0.0 }).collect();
            MeanStderr::of(&hits)
        })
        .collect())
}

/// Histogram of `pi_0(X_t)` over the vertices of `G^(0)` at the graph's
/// resolution, from `n_paths` walks started at `x0`.
pub fn projected_endpoint_counts(
    walk: &RandomWalk<'_>,
    x0: usize,
    horizon: f64,
    dt: f64,
    alpha: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let g = walk.graph;
    if g.depth < g.blowup {
        return domain("projection needs cells no larger than unit triangles");
    }
    let unit = crate::graph::build_graph_with(0, g.depth - g.blowup, &Limits { max_blowup: u32::MAX, max_depth: u32::MAX, max_dense_dim: usize::MAX })?;
    let category: Vec<usize> = (0..g.len())
        .map(|v| {
            let p = project0(&g.vertex_address(v));
            unit.vertex_of_address(&p).expect("projection lands on a unit-gasket vertex")
        })
        .collect();
    let mut counts = vec![0u64; unit.len()];
    for k in 0..n_paths {
        let mut rng = worker_rng(seed, k as u64);
        let path = simulate_stable_path(walk, x0, horizon, dt, alpha, &mut rng)?;
        counts[category[*path.positions.last().unwrap()]] += 1;
    }
    Ok(counts)
}

/// Outcome of comparing the stable heat kernels of `G^(1)` and `G^(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelScalingReport {
    pub alpha: f64,
    pub t: f64,
    pub depth: u32,
    pub time_factor: f64,
    /// `max |p_1(t, 2x, 2y) - p_0(t / factor, x, y) / 3|`.
    pub max_abs_deviation: f64,
    pub max_kernel: f64,
    /// Largest asymmetry of either weighted kernel matrix.
    pub max_asymmetry: f64,
}

/// Checks `p(t, 2x, 2y) = p(t / 5^(alpha/2), x, y) / 3` between the stable
/// kernels of `big = G^(1)@m` and `small = G^(0)@m`.
pub fn kernel_scaling_check(
    small: &LevelGraph,
    big: &LevelGraph,
    alpha: f64,
    t: f64,
) -> Result<KernelScalingReport> {
    kernel_scaling_with_factor(small, big, alpha, t, 5f64.powf(alpha / 2.0))
}

/// [`kernel_scaling_check`] with an arbitrary time factor (negative controls).
pub fn kernel_scaling_with_factor(
    small: &LevelGraph,
    big: &LevelGraph,
    alpha: f64,
    t: f64,
    time_factor: f64,
) -> Result<KernelScalingReport> {
    kernel_scaling_inner(small, big, alpha, t, time_factor, WALK_TIME_FACTOR)
}

/// [`kernel_scaling_check`] on generators renormalized by `level_factor`
/// per level instead of 5 (fault injection).
pub fn kernel_scaling_renormalized(
    small: &LevelGraph,
    big: &LevelGraph,
    alpha: f64,
    t: f64,
    level_factor: f64,
) -> Result<KernelScalingReport> {
    kernel_scaling_inner(small, big, alpha, t, 5f64.powf(alpha / 2.0), level_factor)
}

fn kernel_scaling_inner(
    small: &LevelGraph,
    big: &LevelGraph,
    alpha: f64,
    t: f64,
    time_factor: f64,
    level_factor: f64,
) -> Result<KernelScalingReport> {
    check_alpha(alpha)?;
    if small.blowup != 0 || big.blowup != 1 || !small.isomorphic_to(big) {
        return domain("kernel scaling check needs G^(0)@m and G^(1)@m at the same depth");
    }
    let f0 = fractional_power(&laplacian_renormalized(small, level_factor), alpha / 2.0)?;
    let f1 = fractional_power(&laplacian_renormalized(big, level_factor), alpha / 2.0)?;
    let p1 = weighted_kernel(&f1, &big.weights, t)?;
    let p0 = weighted_kernel(&f0, &small.weights, t / time_factor)?;
    let n = small.len();
    let mut dev = 0f64;
    let mut top = 0f64;
    let mut asym = 0f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((p1[(i, j)] - p0[(i, j)] / 3.0).abs());
            top = top.max(p1[(i, j)].abs());
            asym = asym.max((p1[(i, j)] - p1[(j, i)]).abs()).max((p0[(i, j)] - p0[(j, i)]).abs());
        }
    }
    Ok(KernelScalingReport {
        alpha,
        t,
        depth: small.depth,
        time_factor,
        max_abs_deviation: dev,
        max_kernel: top,
        max_asymmetry: asym,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::stats::ks_two_sample;

    #[test]
    fn laplace_transform_at_alpha_one() {
        let mut rng = worker_rng(11, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| (-sample_subordinator_increment(1.0, 1.0, &mut rng)).exp())
            .collect();
        let m = MeanStderr::of(&xs);
        assert!((m.mean - (-1f64).exp()).abs() <= 3.0 * m.stderr, "{m:?}");
    }

    #[test]
    fn increments_are_positive() {
        let mut rng = worker_rng(3, 0);
        for alpha in [0.2, 0.5, 1.0, 1.5, 1.9] {
            for _ in 0..10_000 {
                let s = sample_subordinator_increment(alpha, 0.01, &mut rng);
                assert!(s > 0.0 && s.is_finite());
            }
        }
    }

    #[test]
    fn time_scaling_in_law() {
        // alpha = 1: S_4 has the law of 16 S_1
        let mut rng = worker_rng(5, 0);
        let a: Vec<f64> = (0..20_000).map(|_| sample_subordinator_increment(1.0, 4.0, &mut rng)).collect();
        let b: Vec<f64> =
            (0..20_000).map(|_| 16.0 * sample_subordinator_increment(1.0, 1.0, &mut rng)).collect();
        let (_, p) = ks_two_sample(&a, &b);
        assert!(p > 0.01, "p = {p}");
        // and not the law of 4 S_1 (negative control)
        let c: Vec<f64> =
            (0..20_000).map(|_| 4.0 * sample_subordinator_increment(1.0, 1.0, &mut rng)).collect();
        assert!(ks_two_sample(&a, &c).1 < 1e-6);
    }

    #[test]
    fn closed_form_density() {
        assert!((half_stable_density(1.0) - 0.219_695).abs() < 1e-6);
        // alpha = 1 closed form vs the branch-cut Bromwich integral
        for u in [0.3, 1.0, 2.5] {
            let b = subordinator_density_bromwich(1.0, u).unwrap();
            assert!((b - half_stable_density(u)).abs() < 1e-7, "u={u}: {b}");
        }
    }

    #[test]
    fn kanter_density_matches_closed_form_and_bromwich() {
        // Kanter's integral evaluated at beta = 1/2 reproduces the closed form
        let beta: f64 = 0.5;
        for x in [0.2f64, 1.0, 3.0] {
            let p = beta / (1.0 - beta);
            let big = x.powf(-p);
            let f = |th: f64| {
                let a = kanter_a(beta, th);
                a * (-a * big).exp()
            };
            let v = p * big / x / PI * integrate(&f, 0.0, PI, 256);
            assert!((v - half_stable_density(x)).abs() < 1e-9, "x={x}");
        }
        for u in [0.5, 1.0, 2.0] {
            let k = subordinator_density(0.5, 1.0, u).unwrap();
            let b = subordinator_density_bromwich(0.5, u).unwrap();
            assert!((k - b).abs() < 1e-6 * k.max(1e-3), "u={u}: {k} vs {b}");
        }
        for u in [1.0, 2.0] {
            let k = subordinator_density(1.5, 1.0, u).unwrap();
            let b = subordinator_density_bromwich(1.5, u).unwrap();
            assert!((k - b).abs() < 1e-5, "u={u}: {k} vs {b}");
        }
    }

    #[test]
    fn density_normalizes() {
        // int_0^inf eta_1 = 1, on a log grid u = e^s
        for alpha in [1.0, 0.5, 1.5] {
            let f = |s: f64| {
                let u = s.exp();
                u * subordinator_density(alpha, 1.0, u).unwrap()
            };
            let pieces = 120;
            let (lo, hi) = (-12.0f64, 40.0f64);
            let h = (hi - lo) / pieces as f64;
            let total: f64 =
                (0..pieces).map(|p| integrate(&f, lo + p as f64 * h, lo + (p + 1) as f64 * h, 16)).sum();
            let tol = if alpha < 1.0 { 1e-3 } else { 1e-6 };
            assert!((total - 1.0).abs() < tol, "alpha={alpha}: {total}");
        }
    }

    #[test]
    fn density_scaling() {
        for (t, u) in [(2.0, 3.0), (0.5, 0.1)] {
            let lhs = subordinator_density(1.0, t, u).unwrap();
            let s: f64 = t.powf(-2.0);
            let rhs = s * half_stable_density(s * u);
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300));
        }
        assert!(subordinator_density(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_horizon_path() {
        let g = build_graph(0, 3).unwrap();
        let w = RandomWalk::new(&g);
        let mut rng = worker_rng(1, 0);
        let p = simulate_stable_path(&w, 4, 0.0, 0.1, 1.0, &mut rng).unwrap();
        assert_eq!(p.positions, vec![4]);
        assert_eq!(p.subordinator, vec![0.0]);
    }

    #[test]
    fn paths_are_reproducible_and_monotone() {
        let g = build_graph(1, 4).unwrap();
        let w = RandomWalk::new(&g);
        let a = simulate_stable_path(&w, 0, 1.0, 1.0 / 64.0, 1.2, &mut worker_rng(9, 2)).unwrap();
        let b = simulate_stable_path(&w, 0, 1.0, 1.0 / 64.0, 1.2, &mut worker_rng(9, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 65);
        assert!(a.subordinator.windows(2).all(|s| s[1] >= s[0]));
        for w2 in a.positions.windows(2) {
            assert!(w2[1] < g.len());
        }
    }

    #[test]
    fn spectral_sampler_matches_explicit_walk() {
        let g = build_graph(0, 2).unwrap();
        let mut spectral = RandomWalk::new(&g);
        spectral.max_explicit_steps = 0;
        let explicit = RandomWalk::new(&g);
        let n = 20_000;
        let mut a = vec![0u64; g.len()];
        let mut b = vec![0u64; g.len()];
        let mut rng = worker_rng(4, 0);
        for _ in 0..n {
            a[spectral.advance(0, 7, &mut rng).unwrap()] += 1;
            b[explicit.advance(0, 7, &mut rng).unwrap()] += 1;
        }
        let (_, p) = crate::stats::chi_square_homogeneity(&a, &b);
        assert!(p > 0.001, "p = {p}");
        // stationary limit is proportional to degree
        let v = spectral.advance(0, u64::MAX / 2, &mut rng).unwrap();
        assert!(v < g.len());
    }

    #[test]
    fn kernel_scaling_small() {
        let g0 = build_graph(0, 2).unwrap();
        let g1 = build_graph(1, 2).unwrap();
        let r = kernel_scaling_check(&g0, &g1, 1.0, 0.2).unwrap();
        assert!(r.max_abs_deviation <= 1e-10, "{r:?}");
        assert!(r.max_asymmetry < 1e-12);
        let bad = kernel_scaling_with_factor(&g0, &g1, 1.0, 0.2, 1.01 * 5f64.sqrt()).unwrap();
        assert!(bad.max_abs_deviation > 1e3 * r.max_abs_deviation.max(1e-14));
        let g2 = build_graph(0, 3).unwrap();
        assert!(kernel_scaling_check(&g2, &g1, 1.0, 0.2).is_err());
    }
}
