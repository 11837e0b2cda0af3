//! Random regional geography and the distance/density mobility matrix.
//!
//! Region centers are drawn uniformly in a square of side `extent`. Each
//! region owns the Voronoi cell of its center clipped to the square, so the
//! cell areas tile the domain exactly. Populations are log-uniform and
//! densities follow from the realized cell areas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::scalar::Real;

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Geography<T> {
    /// Region centers `[x, y]`.
    pub centers: Vec<[T; 2]>,
    pub areas: Vec<T>,
    pub populations: Vec<T>,
    pub densities: Vec<T>,
    /// Side length of the square domain.
    pub extent: T,
}

impl<T: Real> Geography<T> {
    /// Builds a geography from explicit centers and populations.
    pub fn from_parts(centers: Vec<[T; 2]>, populations: Vec<T>, extent: T) -> Result<Self> {
        let n = centers.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 regions, got {n}")));
        }
        if populations.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: populations.len(),
            });
        }
        if !(extent > T::zero()) {
            return Err(Error::invalid("extent must be positive"));
        }
        for c in &centers {
            if !(c[0] > T::zero() && c[0] < extent && c[1] > T::zero() && c[1] < extent) {
                return Err(Error::Geometry(format!(
                    "center ({}, {}) outside the open domain",
                    c[0], c[1]
                )));
            }
        }
        if let Some((i, j)) = closest_pair_below(&centers, T::lit(1e-9) * extent) {
            return Err(Error::Geometry(format!("centers {i} and {j} coincide")));
        }
        if populations.iter().any(|p| !(*p > T::zero())) {
            return Err(Error::invalid("populations must be positive"));
        }
        let areas = voronoi_areas(&centers, extent);
        let densities = populations.iter().zip(&areas).map(|(&p, &a)| p / a).collect();
        Ok(Self {
            centers,
            areas,
            populations,
            densities,
            extent,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn total_population(&self) -> T {
        self.populations.iter().copied().sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> T {
        let (a, b) = (self.centers[i], self.centers[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

fn closest_pair_below<T: Real>(centers: &[[T; 2]], tol: T) -> Option<(usize, usize)> {
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d = (centers[i][0] - centers[j][0]).hypot(centers[i][1] - centers[j][1]);
            if d < tol {
                return Some((i, j));
            }
        }
    }
    None
}

/// Draws `n` populations with `ln N ~ U(ln lo, ln hi)`.
pub fn sample_populations<T: Real>(n: usize, lo: T, hi: T, rng: &mut SimRng) -> Result<Vec<T>> {
    if !(lo > T::zero() && lo < hi) {
        return Err(Error::invalid(format!(
            "population range requires 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|_| {
            let u = T::lit(rng.random::<f64>());
            // exp/ln can round a hair outside the interval
            (ln_lo + u * (ln_hi - ln_lo)).exp().max(lo).min(hi)
        })
        .collect())
}

/// Samples centers, Voronoi areas, populations and densities from `seed`.
pub fn sample_geography<T: Real>(
    n: usize,
    extent: T,
    population_range: (T, T),
    seed: u64,
) -> Result<Geography<T>> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 regions, got {n}")));
    }
    if !(extent > T::zero()) {
        return Err(Error::invalid("extent must be positive"));
    }
    let mut rng = rng::seeded(seed);
    let min_sep = T::lit(1e-9) * extent;
    for _ in 0..MAX_RESAMPLES {
        let centers: Vec<[T; 2]> = (0..n)
            .map(|_| [open_unit::<T>(&mut rng) * extent, open_unit::<T>(&mut rng) * extent])
            .collect();
        if closest_pair_below(&centers, min_sep).is_some() {
            continue;
        }
        let populations = sample_populations(n, population_range.0, population_range.1, &mut rng)?;
        return Geography::from_parts(centers, populations, extent);
    }
    Err(Error::Geometry(format!(
        "no draw with separated centers after {MAX_RESAMPLES} attempts"
    )))
}

fn open_unit<T: Real>(rng: &mut SimRng) -> T {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return T::lit(u);
        }
    }
}

/// Voronoi cell of `centers[i]` clipped to `[0, extent]^2`, counter-clockwise.
pub fn voronoi_cell<T: Real>(centers: &[[T; 2]], i: usize, extent: T) -> Vec<[T; 2]> {
    let z = T::zero();
    let mut poly = vec![[z, z], [extent, z], [extent, extent], [z, extent]];
    let ci = centers[i];
    let half = T::lit(0.5);
    for (j, cj) in centers.iter().enumerate() {
        if j == i {
            continue;
        }
        // keep points closer to ci: (cj - ci) . p <= (|cj|^2 - |ci|^2) / 2
        let normal = [cj[0] - ci[0], cj[1] - ci[1]];
        let offset = half * (cj[0] * cj[0] + cj[1] * cj[1] - ci[0] * ci[0] - ci[1] * ci[1]);
        poly = clip_half_plane(&poly, normal, offset);
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Sutherland-Hodgman clip of a convex polygon against `normal . p <= offset`.
fn clip_half_plane<T: Real>(poly: &[[T; 2]], normal: [T; 2], offset: T) -> Vec<[T; 2]> {
    let side = |p: &[T; 2]| normal[0] * p[0] + normal[1] * p[1] - offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        if sa <= T::zero() {
            out.push(a);
        }
        if (sa < T::zero() && sb > T::zero()) || (sa > T::zero() && sb < T::zero()) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

pub fn polygon_area<T: Real>(poly: &[[T; 2]]) -> T {
    let mut twice = T::zero();
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    (twice * T::lit(0.5)).abs()
}

pub fn voronoi_areas<T: Real>(centers: &[[T; 2]], extent: T) -> Vec<T> {
    (0..centers.len())
        .map(|i| polygon_area(&voronoi_cell(centers, i, extent)))
        .collect()
}

/// `f(x) = 1 - 1/(x+1)^3`: zero at the origin, saturating at one.
pub fn mobility_damping<T: Real>(x: T) -> T {
    let d = x + T::one();
    T::one() - T::one() / (d * d * d)
}

/// Row-major `n x n` mobility weights; `m[i][j]` is the weight from `i` toward `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MobilityMatrix<T> {
    pub n: usize,
    pub m: Vec<T>,
    pub sigma: T,
}

impl<T: Real> MobilityMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            m: vec![T::zero(); n * n],
            sigma: T::one(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>, sigma: T) -> Result<Self> {
        let n = rows.len();
        let mut m = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
            m.extend(r);
        }
        Ok(Self { n, m, sigma })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.m[i * self.n + j]
    }

    /// `M + M^T`, the symmetric coupling that enters the force of infection.
    pub fn symmetric_usage(&self) -> Vec<T> {
        let n = self.n;
        let mut c = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                c[i * n + j] = self.get(i, j) + self.get(j, i);
            }
        }
        c
    }
}

/// Distance and destination-density mobility weights.
pub fn mobility_matrix<T: Real>(geo: &Geography<T>, sigma: T) -> Result<MobilityMatrix<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let n = geo.len();
    let half = T::lit(0.5);
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = geo.distance(i, j);
            if !(d > T::zero()) {
                return Err(Error::Geometry(format!("centers {i} and {j} coincide")));
            }
            let rho = geo.densities[j];
            let attraction = T::one() + half * rho / (sigma + rho);
            m[i * n + j] = mobility_damping(attraction / (d * d));
        }
    }
    Ok(MobilityMatrix { n, m, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo2(a: [f64; 2], b: [f64; 2], pops: [f64; 2]) -> Geography<f64> {
        Geography::from_parts(vec![a, b], pops.to_vec(), 4.0).unwrap()
    }

    #[test]
    fn rejects_single_region() {
        assert!(sample_geography::<f64>(1, 4.0, (1e3, 1e4), 0).is_err());
    }

    #[test]
    fn bisector_splits_square_in_half() {
        let g = geo2([1.0, 2.0], [3.0, 2.0], [1000.0, 2000.0]);
        assert!((g.areas[0] - 8.0).abs() < 1e-12);
        assert!((g.areas[1] - 8.0).abs() < 1e-12);
        assert!((g.densities[1] - 250.0).abs() < 1e-12);
    }

    #[test]
    fn areas_tile_the_domain() {
        for seed in 0..20 {
            let g = sample_geography::<f64>(10, 4.0, (1e3, 1e4), seed).unwrap();
            let total: f64 = g.areas.iter().sum();
            assert!((total - 16.0).abs() <= 1e-9 * 16.0, "seed {seed}: {total}");
            for i in 0..g.len() {
                let rel = (g.densities[i] * g.areas[i] - g.populations[i]).abs() / g.populations[i];
                assert!(rel <= 1e-12);
                assert!(g.centers[i].iter().all(|&c| c > 0.0 && c < 4.0));
            }
        }
    }

    #[test]
    fn sampling_is_bitwise_reproducible() {
        let a = sample_geography::<f64>(10, 4.0, (1e3, 1e4), 99).unwrap();
        let b = sample_geography::<f64>(10, 4.0, (1e3, 1e4), 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn populations_stay_in_range() {
        let mut rng = rng::seeded(3);
        let p = sample_populations::<f64>(10_000, 1e3, 1e4, &mut rng).unwrap();
        assert!(p.iter().all(|&x| (1e3..=1e4).contains(&x)));
        let mut rng = rng::seeded(3);
        let c = 5.0;
        let q = sample_populations::<f64>(1, c, c + 1e-12, &mut rng).unwrap();
        assert!((q[0] - c).abs() < 1e-11);
        assert!(sample_populations::<f64>(1, 2.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn damping_values() {
        assert_eq!(mobility_damping(0.0f64), 0.0);
        assert!((mobility_damping(1.0f64) - 0.875).abs() < 1e-15);
        assert!((1.0 - mobility_damping(1e6f64)).abs() <= 1e-17);
    }

    #[test]
    fn mobility_with_zero_density_destination() {
        // rho_j -> 0 is approached with a tiny destination population
        let g = geo2([1.0, 2.0], [2.0, 2.0], [1000.0, 1e-300]);
        let m = mobility_matrix(&g, 62.5).unwrap();
        assert!((m.get(0, 1) - 0.875).abs() < 1e-12);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn mobility_saturates_with_dense_destination() {
        let g = geo2([1.0, 2.0], [3.0, 2.0], [1000.0, 1e300]);
        let m = mobility_matrix(&g, 1.0).unwrap();
        let expect = mobility_damping(1.5 / 4.0);
        assert!((m.get(0, 1) - expect).abs() < 1e-12);
    }

    #[test]
    fn float32_geography_tiles_domain() {
        let g = sample_geography::<f32>(10, 4.0, (1e3, 1e4), 5).unwrap();
        let total: f32 = g.areas.iter().sum();
        assert!((total - 16.0).abs() < 1e-4);
    }
}
