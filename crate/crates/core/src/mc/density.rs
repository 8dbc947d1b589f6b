//! Kernel density estimate of 2-D samples and the Gaussian sandwich fit
//! `K₁e^{−L₁|z|²} ≤ p̂(z) ≤ K₂e^{−L₂|z|²}`.

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::parallel::map_indexed;

/// Fewest samples accepted by [`density_fit`].
pub const MIN_SAMPLES: usize = 10_000;
/// Kernel truncation radius in bandwidths.
pub const KERNEL_CUTOFF: f64 = 5.0;
/// Inner radius of the fitting annulus.
pub const ANNULUS_INNER: f64 = 0.5;
/// Angular sectors used by the envelope regression.
pub const FIT_SECTORS: usize = 16;
/// Sectors with fewer resolved points are skipped.
pub const SECTOR_MIN_POINTS: usize = 4;
/// `L₂` below this flags a tail that is not Gaussian.
pub const FLAT_TAIL_LIMIT: f64 = 0.05;

/// Exponents refitted at a scaled bandwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandwidthFit {
    pub factor: f64,
    pub l1: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityFit {
    pub grid: Vec<Point2>,
    pub p_hat: Vec<f64>,
    pub k1: f64,
    pub l1: f64,
    pub k2: f64,
    pub l2: f64,
    /// Per-axis kernel widths.
    pub bandwidth: (f64, f64),
    /// Estimates at or below this value are not used.
    pub noise_floor: f64,
    pub non_gaussian_tail: bool,
    /// Refits at 0.5× and 2× the bandwidth.
    pub sensitivity: Vec<BandwidthFit>,
}

impl DensityFit {
    pub fn lower_env(&self, z: Point2) -> f64 {
        self.k1 * (-self.l1 * z.norm_sq()).exp()
    }

    pub fn upper_env(&self, z: Point2) -> f64 {
        self.k2 * (-self.l2 * z.norm_sq()).exp()
    }

    /// Whether the sandwich holds at every resolved grid point with `|z| ≤ radius`.
    pub fn envelope_holds(&self, radius: f64) -> bool {
        self.grid.iter().zip(&self.p_hat).all(|(&z, &p)| {
            if z.norm() > radius || p <= self.noise_floor {
                return true;
            }
            let slack = 1e-12 * p;
            self.lower_env(z) <= p + slack && p <= self.upper_env(z) + slack
        })
    }

    /// Resolved grid points with `|z| ≤ radius`.
    pub fn resolved_points(&self, radius: f64) -> usize {
        self.grid
            .iter()
            .zip(&self.p_hat)
            .filter(|(z, &p)| z.norm() <= radius && p > self.noise_floor)
            .count()
    }
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Silverman widths `σ_i n^{-1/6}` of a product Gaussian kernel.
pub fn silverman_bandwidth(samples: &[Point2]) -> (f64, f64) {
    let n = samples.len() as f64;
    let (_, s1) = mean_std(samples.iter().map(|p| p.x1));
    let (_, s2) = mean_std(samples.iter().map(|p| p.x2));
    let f = n.powf(-1.0 / 6.0);
    (s1 * f, s2 * f)
}

/// Samples bucketed by cell, for kernel evaluation near a box.
struct Buckets {
    lo: Point2,
    cell: (f64, f64),
    dims: (usize, usize),
    starts: Vec<usize>,
    points: Vec<Point2>,
}

impl Buckets {
    fn new(samples: &[Point2], lo: Point2, hi: Point2, cell: (f64, f64)) -> Self {
        let dims = (
            (((hi.x1 - lo.x1) / cell.0).ceil() as usize).max(1),
            (((hi.x2 - lo.x2) / cell.1).ceil() as usize).max(1),
        );
        let index = |p: &Point2| -> Option<usize> {
            if p.x1 < lo.x1 || p.x2 < lo.x2 || p.x1 >= hi.x1 || p.x2 >= hi.x2 {
                return None;
            }
            let i = (((p.x1 - lo.x1) / cell.0) as usize).min(dims.0 - 1);
            let j = (((p.x2 - lo.x2) / cell.1) as usize).min(dims.1 - 1);
            Some(i * dims.1 + j)
        };
        let mut counts = vec![0usize; dims.0 * dims.1 + 1];
        for p in samples {
            if let Some(c) = index(p) {
                counts[c + 1] += 1;
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut points = vec![Point2::ZERO; *counts.last().unwrap()];
        for p in samples {
            if let Some(c) = index(p) {
                points[fill[c]] = *p;
                fill[c] += 1;
            }
        }
        Self {
            lo,
            cell,
            dims,
            starts: counts,
            points,
        }
    }

    fn kernel_sum(&self, z: Point2, h: (f64, f64)) -> f64 {
        let ci = ((z.x1 - self.lo.x1) / self.cell.0).floor() as i64;
        let cj = ((z.x2 - self.lo.x2) / self.cell.1).floor() as i64;
        let (r1, r2) = (KERNEL_CUTOFF * h.0, KERNEL_CUTOFF * h.1);
        let mut total = 0.0;
        for i in (ci - 1)..=(ci + 1) {
            if i < 0 || i >= self.dims.0 as i64 {
                continue;
            }
            for j in (cj - 1)..=(cj + 1) {
                if j < 0 || j >= self.dims.1 as i64 {
                    continue;
                }
                let c = i as usize * self.dims.1 + j as usize;
                for p in &self.points[self.starts[c]..self.starts[c + 1]] {
                    let d1 = p.x1 - z.x1;
                    let d2 = p.x2 - z.x2;
                    if d1.abs() <= r1 && d2.abs() <= r2 {
                        let a = d1 / h.0;
                        let b = d2 / h.1;
                        total += (-0.5 * (a * a + b * b)).exp();
                    }
                }
            }
        }
        total
    }
}

/// Square grid of `grid_n × grid_n` points on `[−r, r]²`, row-major in `z₁`.
pub fn square_grid(radius: f64, grid_n: usize) -> Vec<Point2> {
    let n = grid_n.max(2);
    let step = 2.0 * radius / (n - 1) as f64;
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            g.push(Point2::new(-radius + i as f64 * step, -radius + j as f64 * step));
        }
    }
    g
}

/// Product-Gaussian kernel estimate at every grid point.
pub fn kde(samples: &[Point2], grid: &[Point2], h: (f64, f64), threads: Option<usize>) -> Vec<f64> {
    let (mut lo, mut hi) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
    for z in grid {
        lo = Point2::new(lo.x1.min(z.x1), lo.x2.min(z.x2));
        hi = Point2::new(hi.x1.max(z.x1), hi.x2.max(z.x2));
    }
    let pad = Point2::new(KERNEL_CUTOFF * h.0, KERNEL_CUTOFF * h.1);
    let cell = (KERNEL_CUTOFF * h.0, KERNEL_CUTOFF * h.1);
    let buckets = Buckets::new(samples, lo - pad, hi + pad * 1.000001, cell);
    let norm = 1.0 / (samples.len() as f64 * std::f64::consts::TAU * h.0 * h.1);
    map_indexed(threads, grid.len(), |i| buckets.kernel_sum(grid[i], h) * norm)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `(L₁, L₂)`: least-squares slopes of `−log p̂` against `|z|²` in each angular sector of
/// the annulus; the steepest sector gives `L₁`, the flattest `L₂`.
///
/// Sectors rather than radial bins: the noise floor truncates each ray at some radius but
/// leaves the slope along it unbiased, while radial-bin extremes end up pinned to the floor.
fn fit_exponents(grid: &[Point2], p: &[f64], floor: f64, radius: f64) -> Result<(f64, f64)> {
    let (a, b) = (ANNULUS_INNER * ANNULUS_INNER, radius * radius);
    let mut xs = vec![Vec::new(); FIT_SECTORS];
    let mut ys = vec![Vec::new(); FIT_SECTORS];
    for (z, &v) in grid.iter().zip(p) {
        let r2 = z.norm_sq();
        if v <= floor || r2 < a || r2 > b {
            continue;
        }
        let turn = z.x2.atan2(z.x1) / std::f64::consts::TAU + 0.5;
        let k = ((turn * FIT_SECTORS as f64) as usize).min(FIT_SECTORS - 1);
        xs[k].push(r2);
        ys[k].push(-v.ln());
    }
    let slopes: Vec<f64> = (0..FIT_SECTORS)
        .filter(|&k| xs[k].len() >= SECTOR_MIN_POINTS)
        .map(|k| least_squares_slope(&xs[k], &ys[k]))
        .filter(|s| s.is_finite())
        .collect();
    if slopes.len() < 2 {
        return Err(Error::Range(format!(
            "only {} annulus sectors hold {SECTOR_MIN_POINTS}+ resolved grid points; refine the grid or add samples",
            slopes.len()
        )));
    }
    let l1 = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l2 = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((l1, l2))
}

fn envelope_constants(grid: &[Point2], p: &[f64], floor: f64, l1: f64, l2: f64) -> (f64, f64) {
    let mut k1 = f64::INFINITY;
    let mut k2: f64 = 0.0;
    for (z, &v) in grid.iter().zip(p) {
        if v <= floor {
            continue;
        }
        let r2 = z.norm_sq();
        k1 = k1.min(v * (l1 * r2).exp());
        k2 = k2.max(v * (l2 * r2).exp());
    }
    (k1, k2)
}

/// Sensitivity refits use these bandwidth multipliers.
pub const SENSITIVITY_FACTORS: [f64; 2] = [0.5, 2.0];

/// Fits the Gaussian sandwich to a kernel estimate on a `grid_n × grid_n` grid over
/// `[−grid_radius, grid_radius]²`.
pub fn density_fit(samples: &[Point2], grid_radius: f64, grid_n: usize) -> Result<DensityFit> {
    density_fit_with(samples, grid_radius, grid_n, None)
}

/// [`density_fit`] with an explicit worker count.
pub fn density_fit_with(
    samples: &[Point2],
    grid_radius: f64,
    grid_n: usize,
    threads: Option<usize>,
) -> Result<DensityFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: samples.len(),
            need: MIN_SAMPLES,
        });
    }
    if !(grid_radius >= ANNULUS_INNER) {
        return Err(Error::Config(format!(
            "grid radius {grid_radius} leaves the annulus {ANNULUS_INNER} ≤ |z| ≤ r empty"
        )));
    }
    if grid_n < 3 {
        return Err(Error::Config("grid needs at least 3 points per axis".into()));
    }
    let n = samples.len() as f64;
    let h = silverman_bandwidth(samples);
    let grid = square_grid(grid_radius, grid_n);
    let fit_at = |f: f64| -> Result<(Vec<f64>, f64, f64, f64)> {
        let hh = (h.0 * f, h.1 * f);
        let p = kde(samples, &grid, hh, threads);
        let floor = 10.0 / (n * hh.0 * hh.1);
        let (l1, l2) = fit_exponents(&grid, &p, floor, grid_radius)?;
        Ok((p, floor, l1, l2))
    };
    let (p_hat, noise_floor, l1, l2) = fit_at(1.0)?;
    let (k1, k2) = envelope_constants(&grid, &p_hat, noise_floor, l1, l2);
    let sensitivity = SENSITIVITY_FACTORS
        .iter()
        .map(|&f| fit_at(f).map(|(_, _, l1, l2)| BandwidthFit { factor: f, l1, l2 }))
        .collect::<Result<Vec<_>>>()?;
    let non_gaussian_tail = l2 < FLAT_TAIL_LIMIT;
    if non_gaussian_tail {
        warn!("fitted L2 = {l2:.3e} is below {FLAT_TAIL_LIMIT}: tail is not Gaussian");
    }
    Ok(DensityFit {
        grid,
        p_hat,
        k1,
        l1,
        k2,
        l2,
        bandwidth: h,
        noise_floor,
        non_gaussian_tail,
        sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_samples(n: usize, seed: u64) -> Vec<Point2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    }

    #[test]
    fn kde_integrates_to_one() {
        let s = normal_samples(20_000, 3);
        let h = silverman_bandwidth(&s);
        let grid = square_grid(6.0, 121);
        let p = kde(&s, &grid, h, Some(2));
        let cell = (12.0f64 / 120.0).powi(2);
        let mass: f64 = p.iter().sum::<f64>() * cell;
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
    }

    #[test]
    fn uniform_disk_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = Vec::new();
        while s.len() < 100_000 {
            let p = Point2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if p.norm() <= 2.0 {
                s.push(p);
            }
        }
        let fit = density_fit(&s, 1.5, 41).unwrap();
        assert!(fit.non_gaussian_tail, "L2 = {}", fit.l2);
    }

    #[test]
    fn empty_annulus_and_few_samples() {
        let s = normal_samples(10_000, 1);
        assert!(matches!(density_fit(&s, 0.4, 21), Err(Error::Config(_))));
        assert!(matches!(
            density_fit(&s[..100], 2.0, 21),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn envelope_valid_by_construction() {
        let s = normal_samples(50_000, 5);
        let fit = density_fit(&s, 3.0, 31).unwrap();
        assert!(fit.k1 > 0.0 && fit.k1 <= fit.k2 && fit.l2 <= fit.l1);
        assert!(fit.envelope_holds(f64::INFINITY));
    }
}
