//! Scaling and consistency invariants at reduced sizes. With `perturb` the
//! per-level renormalization is 1% off, so the scaling checks must fail.

use crate::error::Result;
use crate::fit::{brownian_dirichlet_eigenvalue, fit_stretched_exponential, m0_scale};
use crate::graph::{
    build_graph, dirichlet_restrict, laplacian_renormalized, spectrum, vertex_count, Limits,
    WALK_TIME_FACTOR,
};
use crate::ids::{
    averaged_laplace, coupled_cloud_values, free_laplace, principal_pair, stratum_allocation, trace_identity_gap,
    Ambient,
};
use crate::obstacles::{sample_cloud, Cloud};
use crate::rng::worker_rng;
use crate::sausage::{annealed_survival, averaged_survival_vs_trace, sausage_functional_curve, BallTable, McSettings};
use crate::stable::{kernel_scaling_renormalized, sample_subordinator_increment, RandomWalk};
use crate::stats::MeanStderr;

const SIGMAS: f64 = 4.5;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check { name, pass: false, detail: format!("error: {e}") },
    }
}

pub fn run_all(seed: u64, perturb: bool) -> Vec<Check> {
    let factor = if perturb { WALK_TIME_FACTOR * 1.01 } else { WALK_TIME_FACTOR };
    vec![
        check("vertex_count", || {
            let ok = (0..=5).all(|m| build_graph(0, m).map(|g| g.len() == vertex_count(m)).unwrap_or(false))
                && (0..=5).all(|m| vertex_count(m) == 3 * (3usize.pow(m) + 1) / 2);
            Ok((ok, "m = 0..5".into()))
        }),
        check("total_weight", || {
            let mut worst = 0f64;
            for big in 0..=2u32 {
                for m in big..=big + 3 {
                    let g = build_graph(big, m)?;
                    worst = worst.max((g.total_weight() - 3f64.powi(big as i32)).abs());
                }
            }
            Ok((worst < 1e-9, format!("max deviation {worst:e}")))
        }),
        check("laplacian_rows", || {
            let g = build_graph(1, 3)?;
            let l = laplacian_renormalized(&g, factor);
            let mut row = 0f64;
            for i in 0..l.dim() {
                row = row.max((0..l.dim()).map(|j| l.get(i, j)).sum::<f64>().abs());
            }
            Ok((row < 1e-10 && l.max_asymmetry() < 1e-12, format!("max row sum {row:e}")))
        }),
        check("dirichlet_ratio", || {
            let mut worst = 0f64;
            for m in 2..=3 {
                let g1 = build_graph(1, m)?;
                let g0 = build_graph(0, m)?;
                let a = spectrum(&dirichlet_restrict(&laplacian_renormalized(&g1, factor), &g1.interior_vertices())?, Some(1))?[0];
                let b = spectrum(&dirichlet_restrict(&laplacian_renormalized(&g0, factor), &g0.interior_vertices())?, Some(1))?[0];
                worst = worst.max((b / a - 5.0).abs());
            }
            Ok((worst <= 1e-10, format!("max |ratio - 5| {worst:e}")))
        }),
        check("kernel_scaling", || {
            let g0 = build_graph(0, 2)?;
            let g1 = build_graph(1, 2)?;
            let mut worst = 0f64;
            for alpha in [0.5, 1.0, 1.5] {
                let r = kernel_scaling_renormalized(&g0, &g1, alpha, 0.2, factor)?;
                worst = worst.max(r.max_abs_deviation);
            }
            Ok((worst <= 1e-10, format!("max deviation {worst:e}")))
        }),
        check("free_curve_scaling", || {
            let alpha = 1.5;
            let limits = Limits::from_env();
            let a1 = Ambient::build(1, 3, 1, alpha, factor, &limits)?;
            let a0 = Ambient::build(0, 3, 1, alpha, factor, &limits)?;
            let mut worst = 0f64;
            for t in [0.3, 1.0, 3.0] {
                let l1 = free_laplace(&a1, t)?;
                let l0 = free_laplace(&a0, t / 5f64.powf(alpha / 2.0))?;
                worst = worst.max((l1 - l0 / 3.0).abs());
            }
            Ok((worst <= 1e-10, format!("max deviation {worst:e}")))
        }),
        check("dirichlet_depth_one", || {
            let l = brownian_dirichlet_eigenvalue(1)?;
            Ok(((l - 10.0).abs() < 1e-10, format!("{l}")))
        }),
        check("subordinator_laplace", || {
            let mut rng = worker_rng(seed, 0);
            let mut worst = 0f64;
            let mut ok = true;
            for (alpha, t) in [(1.0, 1.0), (0.5, 2.0), (1.5, 0.5)] {
                let xs: Vec<f64> =
                    (0..20_000).map(|_| (-sample_subordinator_increment(alpha, t, &mut rng)).exp()).collect();
                let m = MeanStderr::of(&xs);
                let z = (m.mean - (-t).exp()).abs() / m.stderr;
                worst = worst.max(z);
                ok &= z <= SIGMAS;
            }
            Ok((ok, format!("max z {worst:.2}")))
        }),
        check("subordinator_positive", || {
            let mut rng = worker_rng(seed, 1);
            let ok = [0.2, 1.0, 1.9].iter().all(|&alpha| {
                (0..2000).all(|_| {
                    let s = sample_subordinator_increment(alpha, 0.01, &mut rng);
                    s > 0.0 && s.is_finite()
                })
            });
            Ok((ok, "alpha 0.2, 1, 1.9".into()))
        }),
        check("trace_identity", || {
            let amb = Ambient::cached(1, 3, 1, 1.0)?;
            let mut worst = 0f64;
            for k in 0..3 {
                let cloud = sample_cloud(1, 2.0, 0.2, 7, seed.wrapping_add(k))?;
                let keep = amb.keep_set(Some(&cloud), true)?;
                if keep.is_empty() {
                    continue;
                }
                let op = amb.killed_stable(&keep)?;
                for t in [0.1, 1.0, 10.0] {
                    worst = worst.max(trace_identity_gap(&op, t)?);
                }
            }
            Ok((worst <= 1e-10, format!("max gap {worst:e}")))
        }),
        check("chen_song", || {
            let alpha = 1.2;
            let amb = Ambient::cached(1, 3, 1, alpha)?;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..5 {
                let cloud = sample_cloud(1, 1.0, 0.2, 7, seed.wrapping_add(k))?;
                if let Some((st, bm)) = principal_pair(&amb, &cloud)? {
                    worst = worst.max(st / bm.powf(alpha / 2.0) - 1.0);
                }
            }
            Ok((worst <= 1e-12, format!("max relative excess {worst:e}")))
        }),
        check("laplace_monotone_log_convex", || {
            let amb = Ambient::cached(1, 3, 1, 1.0)?;
            let c = averaged_laplace(&amb, 2.0, 0.2, 7, &[0.5, 1.0, 2.0, 4.0, 8.0], 6, seed)?;
            let mono = c.values().windows(2).all(|w| w[1] <= w[0]);
            let d2 = c.min_log_second_difference();
            Ok((mono && d2 >= -1e-8, format!("min second difference {d2:e}")))
        }),
        check("laplace_deterministic", || {
            let amb = Ambient::cached(1, 3, 1, 1.0)?;
            let a = averaged_laplace(&amb, 2.0, 0.2, 7, &[1.0, 2.0], 4, seed)?;
            let b = averaged_laplace(&amb, 2.0, 0.2, 7, &[1.0, 2.0], 4, seed)?;
            Ok((a == b, "two identical runs".into()))
        }),
        check("coupled_monotonicity", || {
            let amb = Ambient::cached(1, 3, 1, 1.0)?;
            let grid = [0.5, 2.0];
            let v = coupled_cloud_values(&amb, &[0.5, 2.0], &[0.15, 0.3], 8, &grid, 6, seed)?;
            let ok = v.iter().all(|c| {
                (0..grid.len()).all(|t| {
                    c[2][t] <= c[0][t] && c[3][t] <= c[1][t] && c[1][t] <= c[0][t] && c[3][t] <= c[2][t]
                })
            });
            Ok((ok, format!("{} clouds", v.len())))
        }),
        check("survival_below_trace", || {
            let amb = Ambient::cached(1, 3, 1, 1.0)?;
            let rows = averaged_survival_vs_trace(&amb, 1.0, 0.2, 7, &[0.5, 2.0, 8.0], 6, seed)?;
            let ok = rows.iter().all(|r| r.survival.mean <= r.trace.mean + 1e-12);
            let gap = rows.iter().map(|r| r.gap.mean).fold(f64::INFINITY, f64::min);
            Ok((ok, format!("min mean gap {gap:e}")))
        }),
        check("sausage_functional_range", || {
            let g = build_graph(1, 4)?;
            let walk = RandomWalk::new(&g);
            let table = BallTable::new(&g, 0.25, 7)?;
            let mc = McSettings { alpha: 1.0, n_samples: 200, seed, dt: Some(1.0 / 64.0) };
            let est = sausage_functional_curve(&walk, &table, 0, &[0.0, 0.5, 1.0, 2.0], 1.0, &mc)?;
            let ok = est.iter().all(|e| (0.0..=1.0).contains(&e.mean)) && est.windows(2).all(|w| w[1].mean <= w[0].mean);
            Ok((ok, format!("value at t=2: {:.4}", est[3].mean)))
        }),
        check("fubini_identity", || {
            let g = build_graph(1, 4)?;
            let walk = RandomWalk::new(&g);
            let table = BallTable::new(&g, 0.25, 7)?;
            let mc = McSettings { alpha: 1.0, n_samples: 4000, seed, dt: Some(1.0 / 64.0) };
            let s = sausage_functional_curve(&walk, &table, 0, &[1.0], 1.0, &mc)?.remove(0);
            let a = annealed_survival(&walk, 0, 1.0, 1.0, 0.25, 7, &mc)?;
            let joint = (s.stderr.powi(2) + a.stderr.powi(2)).sqrt();
            let z = (s.mean - a.mean).abs() / joint.max(1e-300);
            Ok((z <= SIGMAS, format!("sausage {:.4} annealed {:.4} z {z:.2}", s.mean, a.mean)))
        }),
        check("cloud_poisson_mean", || {
            let counts: Vec<f64> = (0..400)
                .map(|k| sample_cloud(1, 2.0, 0.2, 6, seed.wrapping_add(k)).map(|c| c.len() as f64))
                .collect::<Result<_>>()?;
            let m = MeanStderr::of(&counts);
            let z = (m.mean - 6.0).abs() / m.stderr;
            Ok((z <= SIGMAS, format!("mean {:.3} (expected 6) z {z:.2}", m.mean)))
        }),
        check("cloud_csv_round_trip", || {
            let c = sample_cloud(1, 3.0, 0.2, 6, seed)?;
            let back = Cloud::from_csv(&c.to_csv(None))?;
            Ok((back == c, format!("{} centers", c.len())))
        }),
        check("strata_allocation", || {
            let alloc = stratum_allocation(27.0, 200, 1e-12)?;
            let total: usize = alloc.iter().map(|s| s.2).sum();
            let mass: f64 = alloc.iter().map(|s| s.1).sum();
            Ok((total == 200 && mass <= 1.0 + 1e-12 && mass > 1.0 - 1e-10, format!("{} strata", alloc.len())))
        }),
        check("spectrum_sum", || {
            let g = build_graph(0, 3)?;
            let l = laplacian_renormalized(&g, WALK_TIME_FACTOR);
            let sum: f64 = spectrum(&l, None)?.iter().sum();
            let diag: f64 = (0..l.dim()).map(|i| l.get(i, i)).sum();
            let dev = (sum - diag).abs() / diag;
            Ok((dev < 1e-12, format!("relative {dev:e}")))
        }),
        check("m0_scale", || {
            let c = crate::gasket::constants(1.0)?;
            let t = 2f64.powf(3.0 * c.d_alpha);
            let m = m0_scale(t, 1.0, 1.0)?;
            Ok((m == 3, format!("m0 = {m}")))
        }),
        check("stretched_fit_recovery", || {
            let gamma = 0.4;
            let times: Vec<f64> = (0..12).map(|k| 2f64.powf(k as f64 / 2.0)).collect();
            let values: Vec<f64> = times.iter().map(|t| 0.3 * (-1.7 * t.powf(gamma)).exp()).collect();
            let f = fit_stretched_exponential(&times, &values, gamma)?;
            Ok(((f.c_hat - 1.7).abs() < 1e-9, format!("c_hat {}", f.c_hat)))
        }),
    ]
}
