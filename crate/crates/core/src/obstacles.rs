//! Poissonian obstacle clouds, free vertex sets and the good/bad
//! classification used when obstacles are enlarged.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{domain, LabError, Result};
use crate::gasket::{Address, Point, SQRT3_2};
use crate::graph::LevelGraph;
use crate::rng::{worker_rng, LabRng};

/// Bucketed point set answering "which points lie within `r` of `p`".
#[derive(Debug, Clone)]
pub struct PointGrid {
    bucket: f64,
    points: Vec<Point>,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl PointGrid {
    pub fn new(points: Vec<Point>, bucket: f64) -> Self {
        let bucket = if bucket > 0.0 { bucket } else { 1.0 };
        let mut map: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            map.entry(key(p, bucket)).or_default().push(k);
        }
        Self { bucket, points, map }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Indices of points at distance `<= r` from `p`, ascending.
    pub fn within(&self, p: &Point, r: f64) -> Vec<usize> {
        let span = (r / self.bucket).ceil() as i64;
        let (cx, cy) = key(p, self.bucket);
        let mut out = Vec::new();
        for bx in cx - span..=cx + span {
            for by in cy - span..=cy + span {
                if let Some(ix) = self.map.get(&(bx, by)) {
                    out.extend(ix.iter().copied().filter(|&k| self.points[k].dist(p) <= r));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn any_within(&self, p: &Point, r: f64) -> bool {
        let span = (r / self.bucket).ceil() as i64;
        let (cx, cy) = key(p, self.bucket);
        for bx in cx - span..=cx + span {
            for by in cy - span..=cy + span {
                if let Some(ix) = self.map.get(&(bx, by)) {
                    if ix.iter().any(|&k| self.points[k].dist(p) <= r) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

fn key(p: &Point, bucket: f64) -> (i64, i64) {
    ((p.x / bucket).floor() as i64, (p.y / bucket).floor() as i64)
}

/// A sampled Poisson cloud of obstacle centers.
///
/// Centers are anchors of uniformly chosen depth-`sample_depth` cells of
/// `G^(M)`; each carries a uniform mark used to thin the cloud to a smaller
/// intensity with common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    pub blowup: u32,
    pub intensity: f64,
    pub radius: f64,
    pub sample_depth: u32,
    pub centers: Vec<Address>,
    pub marks: Vec<f64>,
    pub seed: u64,
}

impl Cloud {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.centers.iter().map(Address::to_point).collect()
    }

    /// Same centers with a different obstacle radius.
    pub fn with_radius(&self, radius: f64) -> Cloud {
        Cloud { radius, ..self.clone() }
    }

    /// The coupled cloud of intensity `nu <= self.intensity`: centers whose
    /// mark falls below `nu / intensity`.
    pub fn thinned(&self, nu: f64) -> Result<Cloud> {
        if !(0.0..=self.intensity).contains(&nu) {
            return domain(format!("thinning needs 0 <= nu <= {}, got {nu}", self.intensity));
        }
        let p = if self.intensity > 0.0 { nu / self.intensity } else { 0.0 };
        let keep: Vec<usize> = (0..self.len()).filter(|&k| self.marks[k] < p).collect();
        Ok(Cloud {
            intensity: nu,
            centers: keep.iter().map(|&k| self.centers[k].clone()).collect(),
            marks: keep.iter().map(|&k| self.marks[k]).collect(),
            ..self.clone()
        })
    }

    /// Number of centers inside the cell with the given digit prefix.
    pub fn count_in_cell(&self, prefix: &[u8]) -> usize {
        self.centers.iter().filter(|c| c.digits.starts_with(prefix)).count()
    }

    /// CSV text: a `#` header with the sampling parameters, then one row per
    /// center, with an optional good/bad column.
    pub fn to_csv(&self, classification: Option<&Classification>) -> String {
        let mut s = format!(
            "# M={} nu={} a={} m_s={} seed={}\n",
            self.blowup, self.intensity, self.radius, self.sample_depth, self.seed
        );
        s.push_str(if classification.is_some() { "address,x,y,mark,good\n" } else { "address,x,y,mark\n" });
        for (k, c) in self.centers.iter().enumerate() {
            let p = c.to_point();
            let _ = write!(s, "{c},{},{},{}", p.x, p.y, self.marks[k]);
            if let Some(cl) = classification {
                let _ = write!(s, ",{}", if cl.good[k] { "good" } else { "bad" });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Cloud> {
        // every leading `#` line contributes; later lines win
        let mut lines = text.lines().peekable();
        let mut kv = HashMap::new();
        while let Some(header) = lines.next_if(|l| l.starts_with('#')) {
            for tok in header.trim_start_matches('#').split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    kv.insert(k, v);
                }
            }
        }
        let get = |k: &str| -> Result<&str> {
            kv.get(k).copied().ok_or_else(|| LabError::Parse(format!("cloud header lacks {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| LabError::Parse(format!("bad {k} in cloud header")))
        };
        let blowup = num("M")? as u32;
        let mut cloud = Cloud {
            blowup,
            intensity: num("nu")?,
            radius: num("a")?,
            sample_depth: num("m_s")? as u32,
            centers: Vec::new(),
            marks: Vec::new(),
            seed: get("seed")?.parse().map_err(|_| LabError::Parse("bad seed".into()))?,
        };
        if kv.is_empty() {
            return Err(LabError::Parse("cloud file lacks its # header".into()));
        }
        for line in lines.skip(1).filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 4 {
                return Err(LabError::Parse(format!("short cloud row {line:?}")));
            }
            cloud.centers.push(cols[0].parse()?);
            cloud.marks.push(cols[3].parse().map_err(|_| LabError::Parse(format!("bad mark in {line:?}")))?);
        }
        Ok(cloud)
    }
}

/// Poisson cloud of intensity `nu * mu` on `G^(M)`.
///
/// Needs the sampling cells to be fine compared with the radius:
/// `2^(M - m_s) < a / 4`.
pub fn sample_cloud(blowup: u32, nu: f64, a: f64, sample_depth: u32, seed: u64) -> Result<Cloud> {
    check_cloud_params(blowup, nu, a, sample_depth)?;
    let mut rng = worker_rng(seed, 0);
    let mean = nu * 3f64.powi(blowup as i32);
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| LabError::Numeric(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    Ok(fill_cloud(blowup, nu, a, sample_depth, count, seed, &mut rng))
}

/// The Poisson cloud conditioned on holding exactly `count` centers, i.e.
/// `count` independent uniform cells.
pub fn sample_cloud_with_count(
    blowup: u32,
    nu: f64,
    a: f64,
    sample_depth: u32,
    count: usize,
    seed: u64,
) -> Result<Cloud> {
    check_cloud_params(blowup, nu, a, sample_depth)?;
    let mut rng = worker_rng(seed, 0);
    Ok(fill_cloud(blowup, nu, a, sample_depth, count, seed, &mut rng))
}

fn check_cloud_params(blowup: u32, nu: f64, a: f64, sample_depth: u32) -> Result<()> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return domain(format!("intensity must be >= 0, got {nu}"));
    }
    if !(a > 0.0) {
        return domain(format!("obstacle radius must be > 0, got {a}"));
    }
    let side = 2f64.powi(blowup as i32 - sample_depth as i32);
    if side >= a / 4.0 {
        return domain(format!(
            "sampling depth {sample_depth} too coarse: cell side {side} must be < a/4 = {}",
            a / 4.0
        ));
    }
    Ok(())
}

fn fill_cloud(
    blowup: u32,
    nu: f64,
    a: f64,
    sample_depth: u32,
    count: usize,
    seed: u64,
    rng: &mut LabRng,
) -> Cloud {
    let mut centers = Vec::with_capacity(count);
    let mut marks = Vec::with_capacity(count);
    for _ in 0..count {
        let digits: Vec<u8> = (0..sample_depth).map(|_| rng.gen_range(0..3u8)).collect();
        centers.push(Address::cell(blowup, digits));
        marks.push(rng.gen::<f64>());
    }
    Cloud { blowup, intensity: nu, radius: a, sample_depth, centers, marks, seed }
}

/// Vertices at distance `> r` from every center.
pub fn free_vertices(graph: &LevelGraph, cloud: &Cloud, r: f64) -> Result<Vec<usize>> {
    if graph.blowup != cloud.blowup {
        return domain(format!(
            "graph blowup {} differs from cloud blowup {}",
            graph.blowup, cloud.blowup
        ));
    }
    let grid = PointGrid::new(cloud.points(), r.max(graph.side()));
    Ok((0..graph.len()).filter(|&v| !grid.any_within(&graph.point(v), r)).collect())
}

/// Centroid of each graph-depth cell, the sample points used for `mu`
/// counting.
pub fn cell_centroids(graph: &LevelGraph) -> Vec<Point> {
    let side = graph.side();
    crate::gasket::words(graph.depth as usize)
        .map(|w| {
            let p = Address::cell(graph.blowup, w).to_point();
            Point { x: p.x + 0.5 * side, y: p.y + side * SQRT3_2 / 3.0 }
        })
        .collect()
}

/// `mu`-mass of the closed ball, counted in graph-depth cells whose centroid
/// lies inside it.
pub fn ball_measure(graph: &LevelGraph, cells: &PointGrid, center: &Point, r: f64) -> f64 {
    cells.within(center, r).len() as f64 * graph.cell_measure()
}

/// Empirical doubling constant `max mu(B(x,r)) / mu(B(x,r/3))` over graph
/// vertices `x` and radii `r = r0 3^-k` down to the cell scale.
pub fn doubling_constant(graph: &LevelGraph, r0: f64) -> f64 {
    let cells = PointGrid::new(cell_centroids(graph), graph.side());
    let mut radii = Vec::new();
    let mut r = r0;
    while r / 3.0 >= graph.side() {
        radii.push(r);
        r /= 3.0;
    }
    let mut kappa = 1f64;
    for v in 0..graph.len() {
        let x = graph.point(v);
        for &r in &radii {
            let small = ball_measure(graph, &cells, &x, r / 3.0);
            if small > 0.0 {
                kappa = kappa.max(ball_measure(graph, &cells, &x, r) / small);
            }
        }
    }
    kappa
}

/// Parameters of the good/bad rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyParams {
    pub r: f64,
    pub b: f64,
    pub delta: f64,
    pub eps: f64,
    pub kappa: f64,
    pub r0: f64,
}

impl ClassifyParams {
    /// Scales `l = 0, 1, ...` with `10 eps b R^l <= R0`.
    pub fn admissible_scales(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut l = 0u32;
        while 10.0 * self.eps * self.b * self.r.powi(l as i32) <= self.r0 && l < 64 {
            out.push(l);
            l += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub params: ClassifyParams,
    pub good: Vec<bool>,
    pub scales: Vec<u32>,
}

impl Classification {
    pub fn good_count(&self) -> usize {
        self.good.iter().filter(|&&g| g).count()
    }
}

/// Labels each center good iff for every admissible scale `l` the ball
/// `F = B(x_i, 10 eps b R^l)` satisfies
/// `mu(F ∩ U_j B(x_j, b eps)) >= (delta / kappa) mu(F)`.
///
/// The obstacle radius `a eps` is the cloud radius, so `b > a` reads
/// `b eps > cloud.radius`. Without admissible scales every center is good.
pub fn classify_points(
    cloud: &Cloud,
    graph: &LevelGraph,
    params: ClassifyParams,
) -> Result<Classification> {
    let ClassifyParams { r, b, delta, eps, kappa, .. } = params;
    let mut bad = Vec::new();
    if !(r > 3.0) {
        bad.push(format!("R must exceed 3, got {r}"));
    }
    if !(eps > 0.0 && delta > 0.0 && kappa > 0.0) {
        bad.push("eps, delta, kappa must be positive".to_string());
    }
    if !(b * eps > cloud.radius) {
        bad.push(format!("need b > a, i.e. b*eps = {} > radius {}", b * eps, cloud.radius));
    }
    if !bad.is_empty() {
        return Err(LabError::Validation(bad));
    }
    if graph.blowup != cloud.blowup {
        return domain("graph and cloud blowups differ");
    }
    let scales = params.admissible_scales();
    let centroids = cell_centroids(graph);
    let centers = cloud.points();
    let center_grid = PointGrid::new(centers.clone(), (b * eps).max(graph.side()));
    let covered: Vec<bool> = centroids.iter().map(|p| center_grid.any_within(p, b * eps)).collect();
    let cells = PointGrid::new(centroids, graph.side());
    let good = centers
        .iter()
        .map(|x| {
            scales.iter().all(|&l| {
                let rad = 10.0 * eps * b * r.powi(l as i32);
                let inside = cells.within(x, rad);
                let hit = inside.iter().filter(|&&c| covered[c]).count() as f64;
                hit >= delta / kappa * inside.len() as f64
            })
        })
        .collect();
    Ok(Classification { params, good, scales })
}

/// `Theta_b`: vertices outside the `b eps` balls around good centers only.
pub fn enlarged_free_set(
    graph: &LevelGraph,
    cloud: &Cloud,
    classification: &Classification,
    b: f64,
    eps: f64,
) -> Result<Vec<usize>> {
    if classification.good.len() != cloud.len() {
        return domain("classification was computed for a different cloud");
    }
    let good: Vec<Point> = cloud
        .points()
        .into_iter()
        .zip(&classification.good)
        .filter(|(_, &g)| g)
        .map(|(p, _)| p)
        .collect();
    let rad = b * eps;
    let grid = PointGrid::new(good, rad.max(graph.side()));
    Ok((0..graph.len()).filter(|&v| !grid.any_within(&graph.point(v), rad)).collect())
}
