//! Stretched-exponential fits, the explicit lower-bound certificate, the
//! Tauberian exponent map and Lifschitz slopes.

use crate::error::{domain, LabError, Result};
use crate::gasket::{cells, constants, Point, SQRT3_2};
use crate::graph::{build_graph_with, dirichlet_restrict, laplacian, Limits};
use crate::linalg;
use crate::stats::{linear_fit, LinearFit};

/// `M_0 = floor(log2(t / nu) / d_alpha)`, the largest integer with
/// `2^M_0 <= (t / nu)^(1/d_alpha)`.
pub fn m0_scale(t: f64, nu: f64, alpha: f64) -> Result<i64> {
    if !(t > 0.0 && nu > 0.0) {
        return domain(format!("M0 needs t, nu > 0 (t={t}, nu={nu})"));
    }
    let d_alpha = constants(alpha)?.d_alpha;
    let x = (t / nu).log2() / d_alpha;
    // absorb rounding at exact powers
    let m0 = (x + 1e-12 * x.abs().max(1.0)).floor() as i64;
    let r = (t / nu).powf(1.0 / d_alpha);
    let tol = 1e-10 * r;
    debug_assert!(2f64.powi(m0 as i32) <= r + tol && r < 2f64.powi(m0 as i32 + 1) + tol);
    Ok(m0)
}

/// Principal Dirichlet eigenvalue (killed at the three corners) of the
/// Brownian generator on `G^(0)` at depth `m`.
pub fn brownian_dirichlet_eigenvalue(depth: u32) -> Result<f64> {
    let g = build_graph_with(0, depth, &Limits::from_env())?;
    let keep = g.interior_vertices();
    if keep.is_empty() {
        return domain("depth 0 has no interior vertex");
    }
    Ok(linalg::symmetric_eigenvalues(&dirichlet_restrict(&laplacian(&g), &keep)?.matrix)?[0])
}

/// Richardson extrapolation in `5^-m` from depths `m-1` and `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianEigenEstimate {
    pub depth: u32,
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

pub fn lambda_bm_estimate(depth: u32) -> Result<BrownianEigenEstimate> {
    if depth < 2 {
        return domain("extrapolation needs depth >= 2");
    }
    let coarse = brownian_dirichlet_eigenvalue(depth - 1)?;
    let fine = brownian_dirichlet_eigenvalue(depth)?;
    Ok(BrownianEigenEstimate { depth, coarse, fine, extrapolated: (5.0 * fine - coarse) / 4.0 })
}

/// `C_1 = 5^(alpha/2) lambda_BM^(alpha/2) + 1`.
pub fn certificate_constant(lambda_bm: f64, alpha: f64) -> f64 {
    5f64.powf(alpha / 2.0) * lambda_bm.powf(alpha / 2.0) + 1.0
}

fn dist_to_segment(p: &Point, a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let s = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    Point { x: a.x + s * dx, y: a.y + s * dy }.dist(p)
}

/// Euclidean distance from `p` to the solid triangle with corners `v`.
fn dist_to_triangle(p: &Point, v: &[Point; 3]) -> f64 {
    let cross = |a: &Point, b: &Point| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let (c0, c1, c2) = (cross(&v[0], &v[1]), cross(&v[1], &v[2]), cross(&v[2], &v[0]));
    if (c0 >= 0.0 && c1 >= 0.0 && c2 >= 0.0) || (c0 <= 0.0 && c1 <= 0.0 && c2 <= 0.0) {
        return 0.0;
    }
    dist_to_segment(p, &v[0], &v[1])
        .min(dist_to_segment(p, &v[1], &v[2]))
        .min(dist_to_segment(p, &v[2], &v[0]))
}

/// Volume constant `c_vol = max_T (mu(T^a) - mu(T)) / a^d_f` over the
/// cells `T` of `G^(0)` down to depth `max_k`, with `mu(T^a)` counted in
/// depth-`sample_depth` cells of `G^(M)` whose anchor lies within `a` of `T`.
pub fn volume_constant(blowup: u32, a: f64, sample_depth: u32, max_k: u32) -> Result<f64> {
    if blowup == 0 {
        return domain("neighborhoods of G^(0) need a blowup M >= 1");
    }
    if !(a > 0.0) {
        return domain("a must be positive");
    }
    let d_f = constants(1.0)?.d_f;
    let anchors: Vec<Point> = cells(blowup, sample_depth as usize).map(|c| c.to_point()).collect();
    let cell_mu = 3f64.powi(blowup as i32 - sample_depth as i32);
    let mut best = f64::NEG_INFINITY;
    for k in 0..=max_k as usize {
        for t in cells(0, k) {
            let o = t.to_point();
            let s = t.side();
            let tri = [o, Point { x: o.x + s, y: o.y }, Point { x: o.x + 0.5 * s, y: o.y + SQRT3_2 * s }];
            let count = anchors.iter().filter(|p| dist_to_triangle(p, &tri) <= a).count();
            let excess = count as f64 * cell_mu - t.measure();
            best = best.max(excess / a.powf(d_f));
        }
    }
    Ok(best)
}

/// One grid time of the certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateRow {
    pub t: f64,
    pub m0: i64,
    pub value: f64,
    pub bound: f64,
    /// `value - bound`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub c1: f64,
    pub lambda_bm: f64,
    pub c_vol: f64,
    /// Rows with `M_0(t) >= 1`.
    pub rows: Vec<CertificateRow>,
}

impl CertificateReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.margin < 0.0).count()
    }
}

/// Explicit lower bound
/// `L(t) >= exp(-C_1 t^g nu^(1-g)) exp(-nu c_vol a^d_f) (nu / t)^g`,
/// `g = d_f / d_alpha`, at each grid time with `M_0(t) >= 1`.
pub fn lower_bound_certificate(
    times: &[f64],
    values: &[f64],
    lambda_bm: f64,
    nu: f64,
    a: f64,
    alpha: f64,
    c_vol: f64,
) -> Result<CertificateReport> {
    if times.len() != values.len() {
        return domain("times and values differ in length");
    }
    let c = constants(alpha)?;
    let g = c.time_exponent();
    let c1 = certificate_constant(lambda_bm, alpha);
    let mut rows = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        let m0 = m0_scale(t, nu, alpha)?;
        if m0 < 1 {
            continue;
        }
        let bound = (-c1 * t.powf(g) * nu.powf(1.0 - g)).exp()
            * (-nu * c_vol * a.powf(c.d_f)).exp()
            * (nu / t).powf(g);
        rows.push(CertificateRow { t, m0, value: v, bound, margin: v - bound });
    }
    Ok(CertificateReport { c1, lambda_bm, c_vol, rows })
}

/// Least-squares fit of `log value = -c t^gamma + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub gamma: f64,
    pub c_hat: f64,
    pub intercept: f64,
    pub r2: f64,
    pub c_stderr: f64,
    pub t_range: (f64, f64),
    /// `(t, log value, fitted log value)` on the fitted window.
    pub residuals: Vec<(f64, f64, f64)>,
}

/// Fits the upper half of the grid (by index).
pub fn fit_stretched_exponential(times: &[f64], values: &[f64], gamma: f64) -> Result<FitReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma must lie in (0,1), got {gamma}"));
    }
    if times.len() != values.len() {
        return domain("times and values differ in length");
    }
    if let Some(v) = values.iter().find(|&&v| !(v > 0.0)) {
        return domain(format!("curve must be strictly positive, found {v}"));
    }
    let start = times.len() / 2;
    let (ts, vs) = (&times[start..], &values[start..]);
    let x: Vec<f64> = ts.iter().map(|t| t.powf(gamma)).collect();
    let y: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let f = linear_fit(&x, &y).ok_or_else(|| LabError::Domain("need two distinct times to fit".into()))?;
    Ok(FitReport {
        gamma,
        c_hat: -f.slope,
        intercept: f.intercept,
        r2: f.r2,
        c_stderr: f.slope_stderr,
        t_range: (ts[0], *ts.last().unwrap()),
        residuals: ts.iter().zip(&x).zip(&y).map(|((&t, &xi), &yi)| (t, yi, f.slope * xi + f.intercept)).collect(),
    })
}

/// `gamma / (1 - gamma)`: the Lifschitz exponent matching a Laplace
/// exponent `gamma`.
pub fn tauberian_convert(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma must lie in (0,1), got {gamma}"));
    }
    Ok(gamma / (1.0 - gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifschitzReport {
    pub slope: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    pub fit: LinearFit,
}

impl LifschitzReport {
    /// 95% interval on the slope (normal approximation).
    pub fn ci(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_stderr, self.slope + 1.96 * self.slope_stderr)
    }

    /// Whether the slope lies within `rel` of `target` (relative).
    pub fn matches(&self, target: f64, rel: f64) -> bool {
        (self.slope - target).abs() <= rel * target.abs()
    }
}

/// Fits `log(-log l([0,lambda]))` against `log lambda` over the points with
/// `0 < l < 1` in `[lo, hi]`.
pub fn lifschitz_slope(lambdas: &[f64], cdf: &[f64], lo: f64, hi: f64) -> Result<LifschitzReport> {
    if lambdas.len() != cdf.len() {
        return domain("lambda and cdf tables differ in length");
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (&l, &c) in lambdas.iter().zip(cdf) {
        if l >= lo && l <= hi && l > 0.0 && c > 0.0 && c < 1.0 {
            x.push(l.ln());
            y.push((-c.ln()).ln());
        }
    }
    if x.len() < 3 {
        return domain(format!("IDS window [{lo}, {hi}] holds {} usable points", x.len()));
    }
    let fit = linear_fit(&x, &y).ok_or_else(|| LabError::Domain("degenerate lambda window".into()))?;
    Ok(LifschitzReport {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        r2: fit.r2,
        window: (x[0].exp(), x.last().unwrap().exp()),
        n_points: x.len(),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m0_examples() {
        assert_eq!(m0_scale(1.0, 1.0, 1.0).unwrap(), 0);
        assert_eq!(m0_scale(1000.0, 1.0, 1.0).unwrap(), 3);
        let d = constants(1.0).unwrap().d_alpha;
        assert_eq!(m0_scale(2f64.powf(d), 1.0, 1.0).unwrap(), 1);
        assert_eq!(m0_scale(2f64.powf(2.0 * d) * 0.999, 1.0, 1.0).unwrap(), 1);
        assert!(m0_scale(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dirichlet_eigenvalue_depth_one() {
        // interior triangle of degree-4 vertices: 5 * (4 - 2)
        assert!((brownian_dirichlet_eigenvalue(1).unwrap() - 10.0).abs() < 1e-12);
        let e = lambda_bm_estimate(4).unwrap();
        assert!(e.fine > e.coarse && e.extrapolated > e.fine);
    }

    #[test]
    fn certificate_self_test() {
        let alpha = 1.0;
        let c = constants(alpha).unwrap();
        let (lam, nu, a, cv): (f64, f64, f64, f64) = (10.0, 1.0, 0.125, 2.0);
        let c1 = certificate_constant(lam, alpha);
        let times: Vec<f64> = (0..12).map(|k| 2f64.powf(k as f64 / 2.0)).collect();
        let g = c.time_exponent();
        let values: Vec<f64> = times
            .iter()
            .map(|&t| (-c1 * t.powf(g) * nu).exp() * (-nu * cv * a.powf(c.d_f)).exp() * (nu / t).powf(g))
            .collect();
        let r = lower_bound_certificate(&times, &values, lam, nu, a, alpha, cv).unwrap();
        assert!(!r.rows.is_empty());
        assert!(r.rows.iter().all(|row| row.m0 >= 1 && row.margin.abs() <= 1e-15 * row.bound.max(1e-300)));
        assert_eq!(r.violations(), 0);
        // obstacle-free curve at a tiny intensity
        let free = vec![0.5; times.len()];
        let r = lower_bound_certificate(&times, &free, lam, 1e-6, a, alpha, cv).unwrap();
        assert_eq!(r.violations(), 0);
    }

    #[test]
    fn synthetic_fit() {
        let times: Vec<f64> = (0..17).map(|k| 2f64.powf(k as f64 / 2.0)).collect();
        let values: Vec<f64> = times.iter().map(|t| (-2.0 * t.powf(0.5772)).exp()).collect();
        let f = fit_stretched_exponential(&times, &values, 0.5772).unwrap();
        assert!((f.c_hat - 2.0).abs() < 1e-6);
        assert!(f.r2 > 1.0 - 1e-12);
        let g = fit_stretched_exponential(&times, &values, 0.6772).unwrap();
        assert!(g.r2 < f.r2);
        assert!(fit_stretched_exponential(&times, &[0.0; 17], 0.5).is_err());
    }

    #[test]
    fn tauberian_examples() {
        assert_eq!(tauberian_convert(0.5).unwrap(), 1.0);
        for alpha in [0.5, 1.0, 1.5] {
            let c = constants(alpha).unwrap();
            let got = tauberian_convert(c.time_exponent()).unwrap();
            assert!((got - c.d_s / alpha).abs() < 1e-12);
        }
        assert!(tauberian_convert(0.3).unwrap() < tauberian_convert(0.4).unwrap());
        assert!(tauberian_convert(1.0).is_err());
    }

    #[test]
    fn lifschitz_synthetic_and_negative_control() {
        let c = constants(1.0).unwrap();
        let target = -c.d_s;
        let lambdas: Vec<f64> = (0..40).map(|k| 10f64.powf(-3.0 + k as f64 * 0.05)).collect();
        let stretched: Vec<f64> = lambdas.iter().map(|l| (-0.1 * l.powf(target)).exp()).collect();
        let r = lifschitz_slope(&lambdas, &stretched, 1e-3, 0.9).unwrap();
        assert!((r.slope - target).abs() < 1e-10);
        let poly: Vec<f64> = lambdas.iter().map(|l| l.powf(c.d_s / 2.0)).collect();
        let p = lifschitz_slope(&lambdas, &poly, 1e-3, 0.5).unwrap();
        assert!(!p.matches(target, 0.25), "{p:?}");
        assert!(lifschitz_slope(&[], &[], 0.0, 1.0).is_err());
    }

    #[test]
    fn volume_constant_is_positive() {
        let c = volume_constant(1, 0.25, 6, 2).unwrap();
        assert!(c > 0.0 && c < 20.0, "{c}");
    }
}
