//! Validation and execution of the experiment commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{Command, ExperimentConfig, Reader};
use super::output::{num, RunDir, Table};
use super::selftest;
use crate::error::{LabError, Result};
use crate::fit::{
    fit_stretched_exponential, lambda_bm_estimate, lifschitz_slope, lower_bound_certificate, volume_constant,
    certificate_constant,
};
use crate::gasket::constants;
use crate::graph::{build_graph_with, spectrum, Limits, WALK_TIME_FACTOR};
use crate::ids::{
    averaged_ids_table, averaged_laplace, cloud_seed, enlargement_sweep, stratified_ensemble, variational_search,
    Ambient, VariationalContext,
};
use crate::obstacles::{classify_points, doubling_constant, sample_cloud, ClassifyParams};
use crate::rng::stream_seed;
use crate::sausage::{
    annealed_survival, averaged_survival_vs_trace, sausage_functional_curve, sausage_volumes, survival_curve,
    BallTable, McSettings,
};
use crate::stable::RandomWalk;
use crate::stats::MeanStderr;

/// Result of a completed run. `failures` is nonempty only for checks that
/// are meant to gate (the self-test).
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
    pub report: String,
}

/// Smallest sampling depth `>= depth` with cell side `2^(M - m_s) < a / 4`.
pub fn auto_sample_depth(blowup: u32, depth: u32, a: f64) -> u32 {
    let mut ms = depth;
    while 2f64.powi(blowup as i32 - ms as i32) >= a / 4.0 && ms < 64 {
        ms += 1;
    }
    ms
}

struct Common {
    alpha: f64,
    blowup: u32,
    depth: u32,
    nu: f64,
    a: f64,
    sample_depth: u32,
    seed: u64,
    limits: Limits,
}

fn common(r: &mut Reader<'_>, cfg: &ExperimentConfig, resolved: &mut Vec<(&'static str, String)>) -> Common {
    let alpha = r.f64("alpha");
    r.check(alpha > 0.0 && alpha < 2.0, "alpha", "must lie in (0,2)");
    let blowup = r.u32("M");
    let depth = r.u32("m");
    let nu = r.f64("nu");
    r.check(nu >= 0.0, "nu", "must be >= 0");
    let a = r.f64("a");
    r.check(a > 0.0, "a", "must be > 0");
    let limits = r.limits();
    r.check(blowup <= limits.max_blowup, "M", format!("exceeds the guardrail max_blowup={}", limits.max_blowup));
    r.check(depth <= limits.max_depth, "m", format!("exceeds the guardrail max_depth={}", limits.max_depth));
    let sample_depth = match r.auto_u32("m_s") {
        Some(v) => v,
        None => {
            let v = auto_sample_depth(blowup, depth, a);
            if cfg.get("m_s") == "auto" && a > 0.0 {
                resolved.push(("m_s", v.to_string()));
            }
            v
        }
    };
    let seed = r.u64("seed");
    Common { alpha, blowup, depth, nu, a, sample_depth, seed, limits }
}

fn mc_settings(r: &mut Reader<'_>, alpha: f64, seed: u64) -> McSettings {
    let n = r.usize("n_paths");
    r.check(n >= 1, "n_paths", "must be >= 1");
    let dt = r.auto_f64("dt");
    if let Some(d) = dt {
        r.check(d > 0.0, "dt", "must be > 0");
    }
    McSettings { alpha, n_samples: n, seed, dt }
}

fn t_grid(r: &mut Reader<'_>, positive: bool) -> Vec<f64> {
    let g = r.list("t_grid");
    r.check(g.windows(2).all(|w| w[1] > w[0]), "t_grid", "must be increasing");
    if positive {
        r.check(g.iter().all(|&t| t > 0.0), "t_grid", "entries must be > 0");
    } else {
        r.check(g.iter().all(|&t| t >= 0.0), "t_grid", "entries must be >= 0");
    }
    g
}

enum Plan {
    Spectrum { c: Common, pad: u32, exterior: bool, brownian: bool, count: Option<usize> },
    Ids { c: Common, pad: u32, n_clouds: usize, grid: Vec<f64>, stratified: bool },
    Sausage { c: Common, x0: (i64, i64), grid: Vec<f64>, mc: McSettings, refine: bool },
    Survival { c: Common, pad: u32, x0: (i64, i64), grid: Vec<f64>, mc: McSettings, kill_exterior: bool, n_clouds: usize },
    Enlarge { c: Common, params: ClassifyParams, kappa_auto: bool, k: f64, eps: Vec<f64> },
    Fit(FitParams),
    Selftest { seed: u64, perturb: bool },
}

struct FitParams {
    input: PathBuf,
    ids_input: Option<PathBuf>,
    gamma: Option<f64>,
    lambda_bm_depth: u32,
    cvol_depth: u32,
    var_depth: u32,
    var_cells: u32,
    var_restarts: usize,
    seed: u64,
    max_cdf: f64,
}

fn validate(cfg: &mut ExperimentConfig) -> Result<Plan> {
    let mut resolved = Vec::new();
    let snapshot = cfg.clone();
    let mut r = snapshot.reader();
    let plan = match cfg.command {
        Command::Spectrum => {
            let c = common(&mut r, &snapshot, &mut resolved);
            let pad = r.u32("pad");
            let exterior = r.choice("boundary", &["none", "exterior"]) == "exterior";
            let brownian = r.choice("operator", &["stable", "brownian"]) == "brownian";
            let count = if snapshot.get("count") == "all" { None } else { Some(r.usize("count")) };
            Plan::Spectrum { c, pad, exterior, brownian, count }
        }
        Command::Ids => {
            let c = common(&mut r, &snapshot, &mut resolved);
            let pad = r.u32("pad");
            let n_clouds = r.usize("n_clouds");
            r.check(n_clouds >= 1, "n_clouds", "must be >= 1");
            let grid = t_grid(&mut r, true);
            let stratified = r.choice("estimator", &["stratified", "plain"]) == "stratified";
            Plan::Ids { c, pad, n_clouds, grid, stratified }
        }
        Command::Sausage => {
            let c = common(&mut r, &snapshot, &mut resolved);
            let x0 = r.lattice("x0");
            let grid = t_grid(&mut r, false);
            let mut mc = mc_settings(&mut r, c.alpha, c.seed);
            if mc.dt.is_none() {
                // t_max / 1024 leaves a visible jump bias in the volume
                let dt = grid.last().copied().unwrap_or(0.0) / 16384.0;
                if dt > 0.0 {
                    mc.dt = Some(dt);
                    resolved.push(("dt", dt.to_string()));
                }
            }
            let refine = r.bool("refine");
            Plan::Sausage { c, x0, grid, mc, refine }
        }
        Command::Survival => {
            let c = common(&mut r, &snapshot, &mut resolved);
            let pad = r.u32("pad");
            let x0 = r.lattice("x0");
            let grid = t_grid(&mut r, true);
            let mc = mc_settings(&mut r, c.alpha, c.seed);
            let kill_exterior = r.bool("kill_exterior");
            let n_clouds = r.usize("n_clouds");
            Plan::Survival { c, pad, x0, grid, mc, kill_exterior, n_clouds }
        }
        Command::EnlargeCheck => {
            let mut eps = r.list("eps");
            r.check(eps.iter().all(|&e| e > 0.0), "eps", "entries must be > 0");
            eps.sort_by(|x, y| y.total_cmp(x));
            let mut c = common(&mut r, &snapshot, &mut resolved);
            let e_min = eps.last().copied().unwrap_or(1.0);
            if snapshot.get("m_s") == "auto" {
                c.sample_depth = auto_sample_depth(c.blowup, c.depth, c.a * e_min);
                resolved.retain(|(k, _)| *k != "m_s");
                resolved.push(("m_s", c.sample_depth.to_string()));
            }
            let rr = r.f64("R");
            r.check(rr > 3.0, "R", "must be > 3");
            let b = r.f64("b");
            r.check(b > c.a, "b", "must exceed a");
            let delta = r.f64("delta");
            r.check(delta > 0.0, "delta", "must be > 0");
            let kappa = r.auto_f64("kappa");
            if let Some(k) = kappa {
                r.check(k > 0.0, "kappa", "must be > 0");
            }
            let r0 = r.f64("R0");
            r.check(r0 > 0.0, "R0", "must be > 0");
            let k = r.f64("K");
            r.check(k > 0.0, "K", "must be > 0");
            let params =
                ClassifyParams { r: rr, b, delta, eps: eps.first().copied().unwrap_or(1.0), kappa: kappa.unwrap_or(1.0), r0 };
            Plan::Enlarge { c, params, kappa_auto: kappa.is_none(), k, eps }
        }
        Command::Fit => {
            let input = PathBuf::from(r.text("input"));
            let ids_input = match snapshot.get("ids_input") {
                "none" => None,
                p => Some(PathBuf::from(p)),
            };
            let gamma = r.auto_f64("gamma");
            if let Some(g) = gamma {
                r.check(g > 0.0 && g < 1.0, "gamma", "must lie in (0,1)");
            }
            let lambda_bm_depth = r.u32("lambda_bm_depth");
            r.check(lambda_bm_depth >= 3, "lambda_bm_depth", "must be >= 3");
            let cvol_depth = r.u32("cvol_depth");
            let var_depth = r.u32("var_depth");
            let var_cells = r.u32("var_cells");
            r.check(var_cells <= var_depth, "var_cells", "must not exceed var_depth");
            let var_restarts = r.usize("var_restarts");
            let seed = r.u64("seed");
            let max_cdf = r.f64("lifschitz_max_cdf");
            r.check(max_cdf > 0.0 && max_cdf < 1.0, "lifschitz_max_cdf", "must lie in (0,1)");
            let limits = r.limits();
            for (key, d) in [("lambda_bm_depth", lambda_bm_depth), ("var_depth", var_depth)] {
                r.check(d <= limits.max_depth, key, format!("exceeds the guardrail max_depth={}", limits.max_depth));
            }
            Plan::Fit(FitParams {
                input,
                ids_input,
                gamma,
                lambda_bm_depth,
                cvol_depth,
                var_depth,
                var_cells,
                var_restarts,
                seed,
                max_cdf,
            })
        }
        Command::Selftest => Plan::Selftest { seed: r.u64("seed"), perturb: r.bool("perturb") },
    };
    r.finish()?;
    for (k, v) in resolved {
        cfg.resolve(k, v);
    }
    Ok(plan)
}

fn derived_seeds(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let Ok(seed) = cfg.get("seed").parse::<u64>() else { return Vec::new() };
    let streams: &[&str] = match cfg.command {
        Command::Spectrum | Command::EnlargeCheck => &["clouds"],
        Command::Ids => &["clouds", "strata"],
        Command::Sausage => &["paths"],
        Command::Survival => &["clouds", "paths", "annealed-clouds"],
        Command::Fit => &["variational"],
        Command::Selftest => &[],
    };
    streams.iter().map(|s| (format!("seed.{s}"), stream_seed(seed, s).to_string())).collect()
}

/// Validates `cfg`, then writes the manifest, CSVs and report into `out`.
pub fn run(cfg: &mut ExperimentConfig, out: &Path) -> Result<Outcome> {
    let plan = validate(cfg)?;
    let mut dir = RunDir::create(out, cfg.header())?;
    dir.write_text("manifest.txt", &cfg.manifest(&derived_seeds(cfg)))?;
    let mut outcome = execute(plan, &mut dir)?;
    let mut report = format!("# gasket-lab {}\n\n", cfg.command);
    report.push_str("## Parameters\n\n| key | value |\n|---|---|\n");
    for (k, v) in cfg.pairs() {
        let _ = writeln!(report, "| {k} | {v} |");
    }
    report.push_str("\n## Results\n\n");
    report.push_str(&outcome.report);
    report.push_str("\n## Files\n\n");
    for f in &dir.files {
        let _ = writeln!(report, "- {f}");
    }
    dir.write_text("report.md", &report)?;
    outcome.report = report;
    Ok(outcome)
}

fn table_row(report: &mut String, name: &str, value: impl std::fmt::Display) {
    let _ = writeln!(report, "| {name} | {value} |");
}

fn execute(plan: Plan, dir: &mut RunDir) -> Result<Outcome> {
    let mut rep = String::from("| quantity | value |\n|---|---|\n");
    let mut failures = Vec::new();
    match plan {
        Plan::Spectrum { c, pad, exterior, brownian, count } => {
            let amb = Ambient::build(c.blowup, c.depth, pad, c.alpha, WALK_TIME_FACTOR, &c.limits)?;
            let cloud = if c.nu > 0.0 {
                Some(sample_cloud(c.blowup, c.nu, c.a, c.sample_depth, cloud_seed(c.seed, 0))?)
            } else {
                None
            };
            let keep = amb.keep_set(cloud.as_ref(), exterior)?;
            let values = if keep.is_empty() {
                Vec::new()
            } else {
                let op = if brownian { amb.killed_brownian(&keep)? } else { amb.killed_stable(&keep)? };
                spectrum(&op, count)?
            };
            let rows: Vec<Vec<String>> =
                values.iter().enumerate().map(|(i, &l)| vec![(i + 1).to_string(), num(l)]).collect();
            dir.write_csv("spectrum.csv", &["index", "eigenvalue"], &rows)?;
            if let Some(cl) = &cloud {
                dir.write_prefixed("cloud.csv", &cl.to_csv(None))?;
                table_row(&mut rep, "obstacle centers", cl.len());
            }
            table_row(&mut rep, "graph vertices", amb.graph.len());
            table_row(&mut rep, "free vertices", keep.len());
            table_row(&mut rep, "eigenvalues reported", values.len());
            if let (Some(first), Some(last)) = (values.first(), values.last()) {
                table_row(&mut rep, "smallest eigenvalue", num(*first));
                table_row(&mut rep, "largest reported eigenvalue", num(*last));
            }
        }
        Plan::Ids { c, pad, n_clouds, grid, stratified } => {
            let amb = Ambient::build(c.blowup, c.depth, pad, c.alpha, WALK_TIME_FACTOR, &c.limits)?;
            let (curve, table) = if stratified {
                let ens = stratified_ensemble(&amb, c.nu, c.a, c.sample_depth, n_clouds, c.seed)?;
                let rows: Vec<Vec<String>> = ens
                    .strata
                    .iter()
                    .map(|s| vec![s.count.to_string(), num(s.probability), s.spectra.len().to_string()])
                    .collect();
                dir.write_csv("strata.csv", &["count", "probability", "clouds"], &rows)?;
                table_row(&mut rep, "strata", ens.strata.len());
                table_row(&mut rep, "truncated Poisson mass", num(ens.truncated_mass));
                (ens.laplace(&grid)?, ens.ids_table())
            } else {
                (
                    averaged_laplace(&amb, c.nu, c.a, c.sample_depth, &grid, n_clouds, c.seed)?,
                    averaged_ids_table(&amb, c.nu, c.a, c.sample_depth, n_clouds, c.seed)?,
                )
            };
            let rows: Vec<Vec<String>> =
                curve.points.iter().map(|p| vec![num(p.t), num(p.value), num(p.stderr)]).collect();
            dir.write_csv("laplace.csv", &["t", "value", "stderr"], &rows)?;
            let rows: Vec<Vec<String>> = table.iter().map(|&(l, f)| vec![num(l), num(f)]).collect();
            dir.write_csv("ids.csv", &["lambda", "cdf"], &rows)?;
            table_row(&mut rep, "estimator", if stratified { "stratified" } else { "plain" });
            table_row(&mut rep, "clouds", n_clouds);
            if let (Some(f), Some(l)) = (curve.points.first(), curve.points.last()) {
                table_row(&mut rep, format!("L({})", f.t).as_str(), num(f.value));
                table_row(&mut rep, format!("L({})", l.t).as_str(), num(l.value));
            }
            table_row(&mut rep, "min second difference of log L", num(curve.min_log_second_difference()));
            if let Some(&(l, _)) = table.first() {
                table_row(&mut rep, "smallest eigenvalue", num(l));
            }
        }
        Plan::Sausage { c, x0, grid, mc, refine } => {
            let g = build_graph_with(c.blowup, c.depth, &c.limits)?;
            let x = g
                .index_of(x0.0, x0.1)
                .ok_or_else(|| LabError::Domain(format!("x0 = {},{} is not a vertex of the graph", x0.0, x0.1)))?;
            let table = BallTable::new(&g, c.a, c.sample_depth)?;
            let walk = RandomWalk::new(&g);
            let vols = sausage_volumes(&walk, &table, x, &grid, &mc)?;
            let est = sausage_functional_curve(&walk, &table, x, &grid, c.nu, &mc)?;
            let mean_volume =
                |vols: &[Vec<f64>], ti: usize| MeanStderr::of(&vols.iter().map(|p| p[ti]).collect::<Vec<_>>());
            let rows: Vec<Vec<String>> = est
                .iter()
                .enumerate()
                .map(|(ti, e)| {
                    let v = mean_volume(&vols, ti);
                    vec![num(e.t), num(e.mean), num(e.stderr), e.n_samples.to_string(), num(v.mean), num(v.stderr)]
                })
                .collect();
            dir.write_csv("sausage.csv", &["t", "mean", "stderr", "n", "mean_volume", "volume_stderr"], &rows)?;
            let dt = mc.step(grid.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE));
            table_row(&mut rep, "paths", mc.n_samples);
            table_row(&mut rep, "grid step dt", num(dt));
            if refine {
                let half = McSettings { dt: Some(dt / 2.0), ..mc };
                let fine = sausage_volumes(&walk, &table, x, &grid, &half)?;
                let mut worst = 0f64;
                let rows: Vec<Vec<String>> = (0..grid.len())
                    .map(|ti| {
                        let (a, b) = (mean_volume(&vols, ti).mean, mean_volume(&fine, ti).mean);
                        let rel = if a > 0.0 { (b - a).abs() / a } else { 0.0 };
                        worst = worst.max(rel);
                        vec![num(grid[ti]), num(dt), num(a), num(dt / 2.0), num(b), num(rel)]
                    })
                    .collect();
                dir.write_csv(
                    "sensitivity.csv",
                    &["t", "dt", "mean_volume", "dt_half", "mean_volume_half", "relative_change"],
                    &rows,
                )?;
                table_row(&mut rep, "max relative volume change at dt/2", num(worst));
                if worst > 0.02 {
                    rep.push_str("\nWARNING: halving dt moves the mean volume by more than 2%; jump bias is unresolved at this dt.\n\n");
                }
            }
            let positive: Vec<_> = est.iter().filter(|e| e.t > 0.0 && e.mean > 0.0).collect();
            if positive.len() >= 4 {
                let gamma = constants(c.alpha)?.time_exponent();
                let ts: Vec<f64> = positive.iter().map(|e| e.t).collect();
                let vs: Vec<f64> = positive.iter().map(|e| e.mean).collect();
                let f = fit_stretched_exponential(&ts, &vs, gamma)?;
                table_row(&mut rep, "stretched-exponential rate (upper half)", num(f.c_hat));
                table_row(&mut rep, "fit R^2", num(f.r2));
            }
        }
        Plan::Survival { c, pad, x0, grid, mc, kill_exterior, n_clouds } => {
            let g = build_graph_with(c.blowup, c.depth, &c.limits)?;
            let x = g
                .index_of(x0.0, x0.1)
                .ok_or_else(|| LabError::Domain(format!("x0 = {},{} is not a vertex of the graph", x0.0, x0.1)))?;
            let walk = RandomWalk::new(&g);
            let cloud = sample_cloud(c.blowup, c.nu, c.a, c.sample_depth, cloud_seed(c.seed, 0))?;
            dir.write_prefixed("cloud.csv", &cloud.to_csv(None))?;
            let quenched = survival_curve(&walk, x, &grid, &cloud, kill_exterior, &mc)?;
            let table = BallTable::new(&g, c.a, c.sample_depth)?;
            let sausage = sausage_functional_curve(&walk, &table, x, &grid, c.nu, &mc)?;
            let mut rows = Vec::new();
            for (ti, &t) in grid.iter().enumerate() {
                let ann = annealed_survival(&walk, x, t, c.nu, c.a, c.sample_depth, &mc)?;
                rows.push(vec![
                    num(t),
                    num(quenched[ti].mean),
                    num(quenched[ti].stderr),
                    num(ann.mean),
                    num(ann.stderr),
                    num(sausage[ti].mean),
                    num(sausage[ti].stderr),
                ]);
            }
            dir.write_csv(
                "survival.csv",
                &["t", "quenched", "quenched_stderr", "annealed", "annealed_stderr", "sausage", "sausage_stderr"],
                &rows,
            )?;
            table_row(&mut rep, "obstacle centers", cloud.len());
            if n_clouds > 0 {
                let amb = Ambient::build(c.blowup, c.depth, pad, c.alpha, WALK_TIME_FACTOR, &c.limits)?;
                let cmp = averaged_survival_vs_trace(&amb, c.nu, c.a, c.sample_depth, &grid, n_clouds, c.seed)?;
                let rows: Vec<Vec<String>> = cmp
                    .iter()
                    .map(|r| {
                        vec![
                            num(r.t),
                            num(r.survival.mean),
                            num(r.survival.stderr),
                            num(r.trace.mean),
                            num(r.trace.stderr),
                            num(r.gap.mean),
                            r.holds().to_string(),
                        ]
                    })
                    .collect();
                dir.write_csv(
                    "trace.csv",
                    &["t", "survival", "survival_stderr", "trace", "trace_stderr", "gap", "holds"],
                    &rows,
                )?;
                table_row(&mut rep, "survival <= trace on the grid", cmp.iter().all(|r| r.holds()));
            }
        }
        Plan::Enlarge { c, mut params, kappa_auto, k, eps } => {
            let g = build_graph_with(c.blowup, c.depth, &c.limits)?;
            if kappa_auto {
                params.kappa = doubling_constant(&g, params.r0);
            }
            let cloud = sample_cloud(c.blowup, c.nu, c.a * params.eps, c.sample_depth, cloud_seed(c.seed, 0))?;
            let cls = classify_points(&cloud, &g, params)?;
            dir.write_prefixed("cloud.csv", &cloud.to_csv(Some(&cls)))?;
            let reports = enlargement_sweep(&g, c.alpha, &cloud, params, k, &eps)?;
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        num(r.eps),
                        num(r.lambda_theta),
                        num(r.lambda_b),
                        r.good.to_string(),
                        r.centers.to_string(),
                        r.holds.to_string(),
                    ]
                })
                .collect();
            dir.write_csv("enlargement.csv", &["eps", "lambda_theta", "lambda_b", "good", "centers", "holds"], &rows)?;
            table_row(&mut rep, "kappa", num(params.kappa));
            table_row(&mut rep, "admissible scales at the largest eps", format!("{:?}", params.admissible_scales()));
            table_row(&mut rep, "inequality holds at every eps", reports.iter().all(|r| r.holds));
            rep.push_str("\nThe inequality is a diagnostic: it is only guaranteed below an unknown eps_0.\n");
        }
        Plan::Fit(p) => fit(p, dir, &mut rep)?,
        Plan::Selftest { seed, perturb } => {
            let checks = selftest::run_all(seed, perturb);
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|ch| vec![ch.name.to_string(), if ch.pass { "PASS" } else { "FAIL" }.to_string(), ch.detail.replace(',', ";")])
                .collect();
            dir.write_csv("selftest.csv", &["invariant", "status", "detail"], &rows)?;
            for ch in &checks {
                println!("{} {} ({})", if ch.pass { "PASS" } else { "FAIL" }, ch.name, ch.detail);
                table_row(&mut rep, ch.name, format!("{} ({})", if ch.pass { "PASS" } else { "FAIL" }, ch.detail));
                if !ch.pass {
                    failures.push(ch.name.to_string());
                }
            }
        }
    }
    Ok(Outcome { failures, report: rep })
}

fn parse_param<T: std::str::FromStr>(t: &Table, key: &str) -> Result<T> {
    t.param(key)?.parse().map_err(|_| LabError::Parse(format!("bad {key} in input header")))
}

fn fit(p: FitParams, dir: &mut RunDir, rep: &mut String) -> Result<()> {
    let input = Table::read(&p.input)?;
    let alpha: f64 = parse_param(&input, "alpha")?;
    let nu: f64 = parse_param(&input, "nu")?;
    let a: f64 = parse_param(&input, "a")?;
    let blowup: u32 = parse_param(&input, "M")?;
    let sample_depth: u32 = parse_param(&input, "m_s")?;
    let c = constants(alpha)?;
    let times = input.column("t")?;
    let values = input.column("value").or_else(|_| input.column("mean"))?;
    let gamma = p.gamma.unwrap_or(c.time_exponent());

    let f = fit_stretched_exponential(&times, &values, gamma)?;
    let rows: Vec<Vec<String>> = f.residuals.iter().map(|&(t, y, yf)| vec![num(t), num(y), num(yf)]).collect();
    dir.write_csv("fit.csv", &["t", "log_value", "fitted_log_value"], &rows)?;

    let fine = lambda_bm_estimate(p.lambda_bm_depth)?;
    let coarse = lambda_bm_estimate(p.lambda_bm_depth - 1)?;
    let c1 = certificate_constant(fine.extrapolated, alpha);
    let c1_coarse = certificate_constant(coarse.extrapolated, alpha);
    let c_vol = volume_constant(blowup, a, sample_depth, p.cvol_depth)?;
    let cert = lower_bound_certificate(&times, &values, fine.extrapolated, nu, a, alpha, c_vol)?;
    let rows: Vec<Vec<String>> = cert
        .rows
        .iter()
        .map(|r| vec![num(r.t), r.m0.to_string(), num(r.value), num(r.bound), num(r.margin)])
        .collect();
    dir.write_csv("certificate.csv", &["t", "M0", "value", "bound", "margin"], &rows)?;

    let ctx = VariationalContext::new(alpha, p.var_depth, p.var_cells)?;
    let var = variational_search(&ctx, p.var_restarts, p.seed)?;
    let d1 = 2f64.powf(c.d_alpha - c.d_f) * var.value;
    let scale = nu.powf(c.intensity_exponent());
    let (lower, upper) = (d1 * scale, c1 * scale);

    let mut summary: Vec<(String, String)> = vec![
        ("gamma".into(), num(gamma)),
        ("c_hat".into(), num(f.c_hat)),
        ("c_hat_stderr".into(), num(f.c_stderr)),
        ("c_hat_ci95_lo".into(), num(f.c_hat - 1.96 * f.c_stderr)),
        ("c_hat_ci95_hi".into(), num(f.c_hat + 1.96 * f.c_stderr)),
        ("r2".into(), num(f.r2)),
        ("fit_t_min".into(), num(f.t_range.0)),
        ("fit_t_max".into(), num(f.t_range.1)),
        ("lambda_bm".into(), num(fine.extrapolated)),
        ("lambda_bm_coarse".into(), num(coarse.extrapolated)),
        ("C1".into(), num(c1)),
        ("C1_relative_change".into(), num((c1 - c1_coarse).abs() / c1)),
        ("c_vol".into(), num(c_vol)),
        ("certificate_rows".into(), cert.rows.len().to_string()),
        ("certificate_violations".into(), cert.violations().to_string()),
        ("variational_minimum".into(), num(var.value)),
        ("D1".into(), num(d1)),
        ("sandwich_lower".into(), num(lower)),
        ("sandwich_upper".into(), num(upper)),
        ("in_sandwich".into(), (lower <= f.c_hat && f.c_hat <= upper).to_string()),
    ];
    table_row(rep, "fitted rate c_hat", format!("{} (R^2 {})", num(f.c_hat), num(f.r2)));
    table_row(rep, "sandwich", format!("[{}, {}]", num(lower), num(upper)));
    table_row(rep, "certificate violations", format!("{} of {}", cert.violations(), cert.rows.len()));

    if let Some(path) = &p.ids_input {
        let ids = Table::read(path)?;
        let lambdas = ids.column("lambda")?;
        let cdf = ids.column("cdf")?;
        let window: Vec<usize> = (0..lambdas.len()).filter(|&i| cdf[i] > 0.0 && cdf[i] <= p.max_cdf).collect();
        let (lo, hi) = match (window.first(), window.last()) {
            (Some(&i), Some(&j)) => (lambdas[i], lambdas[j]),
            _ => return Err(LabError::Domain("IDS has no point in the tail window".into())),
        };
        let target = -c.lifschitz_exponent();
        let l = lifschitz_slope(&lambdas, &cdf, lo, hi)?;
        let poly: Vec<f64> = lambdas.iter().map(|&x| p.max_cdf * (x / hi).powf(c.d_s / 2.0)).collect();
        let control = lifschitz_slope(&lambdas, &poly, lo, hi)?;
        let rows: Vec<Vec<String>> = window
            .iter()
            .map(|&i| vec![num(lambdas[i]), num(cdf[i]), num(lambdas[i].ln()), num((-cdf[i].ln()).ln())])
            .collect();
        dir.write_csv("lifschitz.csv", &["lambda", "cdf", "log_lambda", "log_minus_log_cdf"], &rows)?;
        summary.extend([
            ("lifschitz_slope".into(), num(l.slope)),
            ("lifschitz_slope_stderr".into(), num(l.slope_stderr)),
            ("lifschitz_slope_ci_lo".into(), num(l.ci().0)),
            ("lifschitz_slope_ci_hi".into(), num(l.ci().1)),
            ("lifschitz_r2".into(), num(l.r2)),
            ("lifschitz_target".into(), num(target)),
            ("lifschitz_window_lo".into(), num(l.window.0)),
            ("lifschitz_window_hi".into(), num(l.window.1)),
            ("lifschitz_within_25pct".into(), l.matches(target, 0.25).to_string()),
            ("polynomial_control_slope".into(), num(control.slope)),
            ("polynomial_control_rejected".into(), (!control.matches(target, 0.25)).to_string()),
        ]);
        table_row(
            rep,
            "Lifschitz slope",
            format!("{} over [{}, {}], target {}", num(l.slope), num(l.window.0), num(l.window.1), num(target)),
        );
    }
    let rows: Vec<Vec<String>> = summary.into_iter().map(|(k, v)| vec![k, v]).collect();
    dir.write_csv("summary.csv", &["quantity", "value"], &rows)?;
    Ok(())
}
