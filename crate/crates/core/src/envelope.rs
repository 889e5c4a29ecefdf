//! Lower envelopes of scatter data and their log-spaced sampling.
//!
//! For a cloud of `(resource, error)` points, the envelope at budget `r` is
//! the smallest error among all points with resource at most `r`: the best
//! any configuration achieved without exceeding the budget. As a function
//! of `r` it is a nonincreasing step function; law fitting samples it on a
//! geometric grid between the smallest and largest observed resource.

use crate::error::{Error, Result};

/// Validate and sort a point set for envelope queries.
fn checked_sorted(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if points.is_empty() {
        return Err(Error::invalid("envelope needs at least one point"));
    }
    for &(r, e) in points {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("resource values must be positive, got {r}")));
        }
        if !e.is_finite() {
            return Err(Error::invalid("error values must be finite"));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(sorted)
}

/// Envelope value at a single budget `r`. Errors when `r` lies below the
/// smallest resource in the set (the envelope is undefined there).
pub fn lower_envelope(points: &[(f64, f64)], r: f64) -> Result<f64> {
    let sorted = checked_sorted(points)?;
    if !(r.is_finite() && r >= sorted[0].0) {
        return Err(Error::invalid(format!(
            "budget {r} is below the smallest resource {}",
            sorted[0].0
        )));
    }
    let mut best = f64::INFINITY;
    for &(ri, ei) in &sorted {
        if ri > r {
            break;
        }
        best = best.min(ei);
    }
    Ok(best)
}

/// Geometric grid of `k + 1` points from `r_min` to `r_max` inclusive:
/// the j-th point is `r_min^(1 - j/k) * r_max^(j/k)`.
pub fn interpolation_grid(r_min: f64, r_max: f64, k: usize) -> Result<Vec<f64>> {
    if !(r_min.is_finite() && r_max.is_finite() && r_min > 0.0 && r_min < r_max) {
        return Err(Error::invalid(format!("need 0 < r_min < r_max, got {r_min} and {r_max}")));
    }
    if k == 0 {
        return Err(Error::invalid("grid needs at least one interval"));
    }
    let (la, lb) = (r_min.ln(), r_max.ln());
    let mut grid: Vec<f64> = (0..=k)
        .map(|j| {
            let t = j as f64 / k as f64;
            ((1.0 - t) * la + t * lb).exp()
        })
        .collect();
    // Pin the endpoints exactly; exp(ln(x)) can land one ulp off, which
    // would leave the extreme data points outside their own grid.
    grid[0] = r_min;
    grid[k] = r_max;
    Ok(grid)
}

/// An envelope evaluated on its geometric grid, ready for law fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeSamples {
    /// Grid abscissae, ascending, `k + 1` of them.
    pub r: Vec<f64>,
    /// Envelope values on the grid; nonincreasing and positive.
    pub e: Vec<f64>,
}

impl EnvelopeSamples {
    pub fn intervals(&self) -> usize {
        self.r.len() - 1
    }
}

/// Default grid resolution used throughout: 100 intervals.
pub const DEFAULT_GRID_INTERVALS: usize = 100;

/// Sample the lower envelope of `points` on a `k`-interval geometric grid
/// spanning the observed resource range. Envelope values must stay
/// positive, since law fitting works in log space.
pub fn envelope_samples(points: &[(f64, f64)], k: usize) -> Result<EnvelopeSamples> {
    let sorted = checked_sorted(points)?;
    let r_min = sorted[0].0;
    let r_max = sorted[sorted.len() - 1].0;
    if !(r_min < r_max) {
        return Err(Error::invalid("envelope grid needs at least two distinct resource values"));
    }
    let grid = interpolation_grid(r_min, r_max, k)?;
    // Prefix minima over the sorted points; walk both sequences once.
    let mut e = Vec::with_capacity(grid.len());
    let mut best = f64::INFINITY;
    let mut idx = 0;
    for &r in &grid {
        while idx < sorted.len() && sorted[idx].0 <= r {
            best = best.min(sorted[idx].1);
            idx += 1;
        }
        e.push(best);
    }
    // The first grid point sits exactly on r_min; guard against a rounding
    // step leaving it uncovered.
    if e[0].is_infinite() {
        e[0] = sorted[0].1;
    }
    if e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateData("envelope values must be positive for log-space fits".into()));
    }
    Ok(EnvelopeSamples { r: grid, e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example() {
        let pts = [(1.0, 0.5), (2.0, 0.7), (4.0, 0.3)];
        assert_eq!(lower_envelope(&pts, 1.0).unwrap(), 0.5);
        assert_eq!(lower_envelope(&pts, 3.0).unwrap(), 0.5);
        assert_eq!(lower_envelope(&pts, 4.0).unwrap(), 0.3);
        assert_eq!(lower_envelope(&pts, 100.0).unwrap(), 0.3);
        assert!(lower_envelope(&pts, 0.5).is_err());
    }

    #[test]
    fn grid_is_exactly_geometric() {
        let g = interpolation_grid(1.0, 1e4, 4).unwrap();
        let expect = [1.0, 10.0, 100.0, 1000.0, 10000.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
        }
        assert!(interpolation_grid(1.0, 1.0, 4).is_err());
        assert!(interpolation_grid(-1.0, 10.0, 4).is_err());
        assert!(interpolation_grid(1.0, 10.0, 0).is_err());
    }

    #[test]
    fn grid_endpoints_and_ratios() {
        let g = interpolation_grid(3.7, 8123.9, 100).unwrap();
        assert_eq!(g.len(), 101);
        assert!((g[0] - 3.7).abs() < 1e-12 * 3.7);
        assert!((g[100] - 8123.9).abs() < 1e-9 * 8123.9);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12 * ratio);
        }
    }

    #[test]
    fn envelope_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..300 {
            let count = rng.random_range(2..40);
            let pts: Vec<(f64, f64)> = (0..count)
                .map(|_| {
                    (
                        10f64.powf(rng.random_range(0.0..6.0)),
                        10f64.powf(rng.random_range(-3.0..1.0)),
                    )
                })
                .collect();
            let r_max = pts.iter().map(|p| p.0).fold(0.0, f64::max);
            let r_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            if r_min == r_max {
                continue;
            }
            let env = envelope_samples(&pts, 37).unwrap();
            for (j, &r) in env.r.iter().enumerate() {
                // Direct definition: min error over points with resource <= r.
                // Scale r up a hair so the grid endpoint rounding cannot
                // exclude the defining point itself.
                let brute = pts
                    .iter()
                    .filter(|p| p.0 <= r * (1.0 + 1e-12))
                    .map(|p| p.1)
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(env.e[j], brute, "grid point {j}");
            }
            // Monotone nonincreasing.
            for w in env.e.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn envelope_needs_spread_and_positivity() {
        assert!(envelope_samples(&[(1.0, 0.5)], 10).is_err());
        assert!(envelope_samples(&[(1.0, 0.5), (1.0, 0.6)], 10).is_err());
        assert!(envelope_samples(&[(1.0, 0.0), (2.0, 0.5)], 10).is_err());
        assert!(envelope_samples(&[(1.0, 0.5), (2.0, -0.1)], 10).is_err());
        assert!(envelope_samples(&[], 10).is_err());
        assert!(envelope_samples(&[(0.0, 0.5), (2.0, 0.4)], 10).is_err());
    }

    #[test]
    fn step_function_semantics_between_points() {
        // Just below a cheaper-and-better point the envelope still reads the
        // older value.
        let pts = [(10.0, 1.0), (100.0, 0.1)];
        assert_eq!(lower_envelope(&pts, 99.999).unwrap(), 1.0);
        assert_eq!(lower_envelope(&pts, 100.0).unwrap(), 0.1);
    }
}
