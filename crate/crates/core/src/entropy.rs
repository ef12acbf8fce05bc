//! Layout entropy of a screen's element centers.
//!
//! ```text
//! E = N^w_N · (w_1D · mean_j H_1D(θ_j) + w_2D · H_2D)
//! ```
//!
//! `H_1D(θ_j)` is the histogram entropy of the centers projected on
//! `u_j = (sin θ_j, cos θ_j)` with `θ_j = (j-1)π/D`, so `θ_1 = 0` projects on
//! the vertical axis. `H_2D` is the entropy of center counts over an `M × M`
//! grid. Natural logarithms throughout; empty bins contribute zero.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::NormPoint;
use crate::schema::Difficulty;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EntropyConfig<T> {
    /// Number of projection directions `D`.
    pub directions: usize,
    /// Bins per projection `B`.
    pub bins: usize,
    /// Grid side `M`.
    pub grid: usize,
    pub w_n: T,
    pub w_1d: T,
    pub w_2d: T,
}

impl<T: Scalar> Default for EntropyConfig<T> {
    fn default() -> Self {
        Self {
            directions: 4,
            bins: 16,
            grid: 8,
            w_n: T::of(0.5),
            w_1d: T::of(0.5),
            w_2d: T::of(0.5),
        }
    }
}

impl<T: Scalar> EntropyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| {
            Err(Error::Config {
                path: format!("entropy.{key}"),
                msg,
            })
        };
        if self.directions < 1 {
            return bad("directions", "must be at least 1".into());
        }
        if self.bins < 2 {
            return bad("bins", "must be at least 2".into());
        }
        if self.grid < 2 {
            return bad("grid", "must be at least 2".into());
        }
        for (k, w) in [("w_n", self.w_n), ("w_1d", self.w_1d), ("w_2d", self.w_2d)] {
            if !(w >= T::zero()) {
                return bad(k, format!("weight {w} must be non-negative"));
            }
        }
        if self.w_1d + self.w_2d <= T::zero() {
            return bad("w_2d", "w_1d + w_2d must be positive".into());
        }
        Ok(())
    }

    /// Projection angle of direction `j` (0-based).
    pub fn angle(&self, j: usize) -> T {
        T::of_usize(j) * T::PI() / T::of_usize(self.directions)
    }
}

/// Equal-width bins over `[lo, hi]`. Values outside the range fall into the
/// nearest edge bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
}

impl<T: Scalar> Bins<T> {
    pub fn index(&self, v: T) -> usize {
        let rel = (v - self.lo) / (self.hi - self.lo) * T::of_usize(self.count);
        let i = rel.floor().to_isize().unwrap_or(0);
        i.clamp(0, self.count as isize - 1) as usize
    }
}

/// Shannon entropy of a count histogram, `ln N - Σ (c/N) ln c`.
///
/// Written in count form so that a single occupied bin gives exactly 0 and
/// one item per bin gives exactly `ln N`.
pub fn entropy_of_counts<T: Scalar>(counts: &[usize]) -> T {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return T::zero();
    }
    let nf = T::of_usize(n);
    let weighted = counts
        .iter()
        .filter(|&&c| c > 1)
        .fold(T::zero(), |acc, &c| {
            let cf = T::of_usize(c);
            acc + cf / nf * cf.ln()
        });
    (nf.ln() - weighted).max(T::zero())
}

pub fn histogram_entropy<T: Scalar>(values: &[T], bins: &Bins<T>) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Validation("entropy of an empty sample is undefined".into()));
    }
    let mut counts = vec![0usize; bins.count];
    for &v in values {
        counts[bins.index(v)] += 1;
    }
    Ok(entropy_of_counts(&counts))
}

fn snap<T: Scalar>(v: T) -> T {
    if v.abs() < T::of(1e-12) {
        T::zero()
    } else {
        v
    }
}

fn unit_vector<T: Scalar>(theta: T) -> (T, T) {
    (snap(theta.sin()), snap(theta.cos()))
}

/// `x·sin θ + y·cos θ`.
pub fn project_center<T: Scalar>(p: &NormPoint<T>, theta: T) -> T {
    let (s, c) = unit_vector(theta);
    p.x * s + p.y * c
}

/// Range of `x·sin θ + y·cos θ` over the unit square.
pub fn projection_range<T: Scalar>(theta: T) -> (T, T) {
    let (s, c) = unit_vector(theta);
    let z = T::zero();
    (s.min(z) + c.min(z), s.max(z) + c.max(z))
}

/// Per-direction projection entropies and their mean.
pub fn h1d_avg<T: Scalar>(centers: &[NormPoint<T>], cfg: &EntropyConfig<T>) -> Result<(Vec<T>, T)> {
    let mut per_dir = Vec::with_capacity(cfg.directions);
    for j in 0..cfg.directions {
        let theta = cfg.angle(j);
        let (lo, hi) = projection_range(theta);
        let bins = Bins {
            lo,
            hi,
            count: cfg.bins,
        };
        let z: Vec<T> = centers.iter().map(|p| project_center(p, theta)).collect();
        per_dir.push(histogram_entropy(&z, &bins)?);
    }
    let mean = per_dir.iter().fold(T::zero(), |a, &h| a + h) / T::of_usize(cfg.directions);
    Ok((per_dir, mean))
}

/// Grid cell of a point: `min(floor(v·M), M-1)` per axis.
pub fn grid_cell<T: Scalar>(p: &NormPoint<T>, m: usize) -> (usize, usize) {
    let idx = |v: T| {
        let i = (v * T::of_usize(m)).floor().to_isize().unwrap_or(0);
        i.clamp(0, m as isize - 1) as usize
    };
    (idx(p.x), idx(p.y))
}

pub fn h2d_grid<T: Scalar>(centers: &[NormPoint<T>], m: usize) -> Result<T> {
    if centers.is_empty() {
        return Err(Error::Validation("entropy of an empty sample is undefined".into()));
    }
    let mut counts = vec![0usize; m * m];
    for p in centers {
        let (cx, cy) = grid_cell(p, m);
        counts[cy * m + cx] += 1;
    }
    Ok(entropy_of_counts(&counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport<T> {
    pub image_id: String,
    pub n: usize,
    pub h1d_per_direction: Vec<T>,
    pub h1d_avg: T,
    pub h2d: T,
    pub e_layout: T,
    pub bucket: Option<Difficulty>,
    pub total_pixels: u64,
    #[serde(default)]
    pub degenerate: bool,
}

/// Full entropy decomposition for one screen. An empty center set yields a
/// zero report flagged `degenerate`.
pub fn layout_entropy<T: Scalar>(
    centers: &[NormPoint<T>],
    image_id: &str,
    image_size: (u32, u32),
    cfg: &EntropyConfig<T>,
) -> Result<EntropyReport<T>> {
    cfg.validate()?;
    let total_pixels = resolution_priority(image_size);
    if centers.is_empty() {
        return Ok(EntropyReport {
            image_id: image_id.to_string(),
            n: 0,
            h1d_per_direction: vec![T::zero(); cfg.directions],
            h1d_avg: T::zero(),
            h2d: T::zero(),
            e_layout: T::zero(),
            bucket: None,
            total_pixels,
            degenerate: true,
        });
    }
    let (per_dir, avg) = h1d_avg(centers, cfg)?;
    let h2d = h2d_grid(centers, cfg.grid)?;
    let n = centers.len();
    let e_layout = T::of_usize(n).powf(cfg.w_n) * (cfg.w_1d * avg + cfg.w_2d * h2d);
    Ok(EntropyReport {
        image_id: image_id.to_string(),
        n,
        h1d_per_direction: per_dir,
        h1d_avg: avg,
        h2d,
        e_layout,
        bucket: None,
        total_pixels,
        degenerate: false,
    })
}

/// Assigns Easy/Medium/Hard by quantiles of `e_layout`.
///
/// With reports sorted by `(e_layout, image_id)`, the easy threshold is the
/// value at rank `ceil(q_easy·n) - 1` and the hard threshold the value at rank
/// `ceil(q_hard·n) - 1`. Values at or below the easy threshold are Easy, values
/// strictly above the hard threshold are Hard, so ties land in the lower bucket.
pub fn bucket_dataset<T: Scalar>(reports: &mut [EntropyReport<T>], quantiles: (f64, f64)) -> Result<()> {
    let (q_easy, q_hard) = quantiles;
    if !(0.0 < q_easy && q_easy < q_hard && q_hard < 1.0) {
        return Err(Error::Validation(format!(
            "bucket quantiles must satisfy 0 < q_easy < q_hard < 1, got ({q_easy}, {q_hard})"
        )));
    }
    if reports.is_empty() {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&reports[a], &reports[b]);
        ra.e_layout
            .partial_cmp(&rb.e_layout)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ra.image_id.cmp(&rb.image_id))
    });
    let n = reports.len();
    let rank = |q: f64| ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    let t_easy = reports[order[rank(q_easy)]].e_layout;
    let t_hard = reports[order[rank(q_hard)]].e_layout;
    for r in reports.iter_mut() {
        r.bucket = Some(if r.e_layout <= t_easy {
            Difficulty::Easy
        } else if r.e_layout > t_hard {
            Difficulty::Hard
        } else {
            Difficulty::Medium
        });
    }
    Ok(())
}

/// Total pixel count `W·H`.
pub fn resolution_priority(image_size: (u32, u32)) -> u64 {
    image_size.0 as u64 * image_size.1 as u64
}

/// Report indices ordered hardest bucket first, then by descending total
/// pixels, then by image id.
pub fn priority_order<T: Scalar>(reports: &[EntropyReport<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..reports.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&reports[a], &reports[b]);
        rb.bucket
            .cmp(&ra.bucket)
            .then(rb.total_pixels.cmp(&ra.total_pixels))
            .then_with(|| ra.image_id.cmp(&rb.image_id))
    });
    idx
}
