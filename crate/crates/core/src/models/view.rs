use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim::OutbreakDataset;

/// Min-max scaling of one channel to `[0, 1]` over the training window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Normalizer<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> Normalizer<T> {
    /// Fits a normalizer; constant channels get `max = min + 1`.
    pub fn fit(values: impl IntoIterator<Item = T>) -> Self {
        let mut min = T::infinity();
        let mut max = T::neg_infinity();
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !(max > min) {
            max = min + T::one();
        }
        Self { min, max }
    }

    #[inline]
    pub fn range(&self) -> T {
        self.max - self.min
    }

    #[inline]
    pub fn apply(&self, x: T) -> T {
        (x - self.min) / self.range()
    }

    #[inline]
    pub fn invert(&self, z: T) -> T {
        z * self.range() + self.min
    }
}

/// One target region with its neighbors, for a single initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetView<T> {
    pub init: usize,
    pub region: usize,
    /// Neighbor region indices in ascending order.
    pub neighbors: Vec<usize>,
    pub days: usize,
    /// Target `(S, I, R)` for every day; day `d` is element `d - 1`.
    pub target: Vec<[T; 3]>,
    /// Raw neighbor channels, `days x 3 * neighbors.len()`, ordered
    /// `(S, I, R)` per neighbor.
    pub neighbor_series: Vec<T>,
    pub target_pop: T,
    pub neighbor_pops: Vec<T>,
    /// Inclusive 1-based training window.
    pub train_days: (usize, usize),
    pub target_norm: [Normalizer<T>; 3],
    pub neighbor_norm: Vec<Normalizer<T>>,
}

impl<T: Real> TargetView<T> {
    pub fn neighbor_channels(&self) -> usize {
        3 * self.neighbors.len()
    }

    pub fn neighbor_row(&self, day: usize) -> &[T] {
        let c = self.neighbor_channels();
        &self.neighbor_series[(day - 1) * c..day * c]
    }

    /// Observed target states over an inclusive day span.
    pub fn observed(&self, span: (usize, usize)) -> &[[T; 3]] {
        &self.target[span.0 - 1..span.1]
    }

    pub fn normalize_target(&self, u: &[T]) -> [T; 3] {
        [0, 1, 2].map(|c| self.target_norm[c].apply(u[c]))
    }

    /// Continuous-time accessor over the normalized neighbor channels.
    pub fn neighbor_signal(&self) -> NeighborSignal<T> {
        let c = self.neighbor_channels();
        let samples = self
            .neighbor_series
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(&self.neighbor_norm).map(|(&x, n)| n.apply(x)))
            .collect();
        NeighborSignal {
            first_day: T::one(),
            channels: c,
            samples,
        }
    }

    pub fn check_span(&self, span: (usize, usize)) -> Result<()> {
        if span.0 < 1 || span.1 > self.days || span.1 <= span.0 {
            return Err(Error::invalid(format!(
                "span {span:?} outside days 1..={}",
                self.days
            )));
        }
        Ok(())
    }
}

/// Splits a dataset into target and neighbors and fits normalizers on the
/// training window only.
pub fn make_target_view<T: Real>(
    data: &OutbreakDataset<T>,
    init: usize,
    region: usize,
    train_days: (usize, usize),
) -> Result<TargetView<T>> {
    if init >= data.n_init {
        return Err(Error::invalid(format!(
            "initialization {init} out of range (have {})",
            data.n_init
        )));
    }
    if region >= data.n_regions {
        return Err(Error::invalid(format!(
            "region {region} out of range (have {})",
            data.n_regions
        )));
    }
    if train_days.0 < 1 || train_days.1 > data.days || train_days.1 <= train_days.0 {
        return Err(Error::invalid(format!(
            "training window {train_days:?} outside days 1..={}",
            data.days
        )));
    }
    let days = data.days;
    let neighbors: Vec<usize> = (0..data.n_regions).filter(|&r| r != region).collect();
    let target: Vec<[T; 3]> = (1..=days).map(|d| data.state(init, region, d)).collect();
    let c = 3 * neighbors.len();
    let mut neighbor_series = Vec::with_capacity(days * c);
    for d in 0..days {
        for &nb in &neighbors {
            for comp in 0..3 {
                neighbor_series.push(data.series(init, nb, comp)[d]);
            }
        }
    }
    let (lo, hi) = (train_days.0 - 1, train_days.1);
    let target_norm =
        [0, 1, 2].map(|comp| Normalizer::fit(target[lo..hi].iter().map(|s| s[comp])));
    let neighbor_norm = (0..c)
        .map(|ch| Normalizer::fit((lo..hi).map(|d| neighbor_series[d * c + ch])))
        .collect();
    let pops = data.populations();
    Ok(TargetView {
        init,
        region,
        neighbor_pops: neighbors.iter().map(|&r| pops[r]).collect(),
        neighbors,
        days,
        target,
        neighbor_series,
        target_pop: pops[region],
        train_days,
        target_norm,
        neighbor_norm,
    })
}

/// Piecewise-linear interpolation of daily samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSignal<T> {
    pub first_day: T,
    pub channels: usize,
    /// `days x channels`.
    pub samples: Vec<T>,
}

impl<T: Real> NeighborSignal<T> {
    pub fn days(&self) -> usize {
        self.samples.len() / self.channels
    }

    fn row(&self, k: usize) -> &[T] {
        &self.samples[k * self.channels..(k + 1) * self.channels]
    }

    /// Writes the interpolated channels at time `t` (days) into `out`.
    /// Times outside the sampled range are clamped to the end points.
    pub fn sample(&self, t: T, out: &mut [T]) {
        let last = self.days() - 1;
        let x = (t - self.first_day).max(T::zero());
        let k = x.floor().to_usize().unwrap_or(usize::MAX);
        if k >= last {
            out.copy_from_slice(self.row(last));
            return;
        }
        let frac = x - T::from_usize_lossy(k);
        if frac == T::zero() {
            out.copy_from_slice(self.row(k));
            return;
        }
        let (a, b) = (self.row(k), self.row(k + 1));
        for ((o, &lo), &hi) in out.iter_mut().zip(a).zip(b) {
            *o = lo + frac * (hi - lo);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Provenance, Scenario, SirParams};

    fn toy_dataset() -> OutbreakDataset<f64> {
        let prov = Provenance {
            scenario: Scenario::NoRecovered,
            params: SirParams::new(0.3, 0.1).unwrap(),
            sigma: 1.0,
            populations: vec![100.0, 200.0, 300.0],
            geography_seed: 0,
            master_seed: 0,
            init_seeds: vec![0],
            n_infected: 10,
            dt_internal: 0.25,
        };
        let mut d = OutbreakDataset::zeros(1, 3, 6, prov);
        for r in 0..3 {
            let n = [100.0, 200.0, 300.0][r];
            for day in 0..6 {
                let i = if r == 2 { 0.0 } else { (day + r) as f64 };
                d.series_mut(0, r, 0)[day] = n - i;
                d.series_mut(0, r, 1)[day] = i;
                d.series_mut(0, r, 2)[day] = 0.0;
            }
        }
        d
    }

    #[test]
    fn neighbors_exclude_target() {
        let d = toy_dataset();
        let v = make_target_view(&d, 0, 1, (1, 3)).unwrap();
        assert_eq!(v.neighbors, vec![0, 2]);
        assert_eq!(v.neighbor_channels(), 6);
        assert_eq!(v.neighbor_row(2), &[99.0, 1.0, 0.0, 300.0, 0.0, 0.0]);
        assert!(make_target_view(&d, 1, 0, (1, 3)).is_err());
        assert!(make_target_view(&d, 0, 3, (1, 3)).is_err());
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let d = toy_dataset();
        let v = make_target_view(&d, 0, 0, (1, 3)).unwrap();
        // recovered channel of the target is identically zero
        assert_eq!(v.target_norm[2], Normalizer { min: 0.0, max: 1.0 });
        assert_eq!(v.target_norm[2].apply(0.0), 0.0);
    }

    #[test]
    fn training_window_maps_into_unit_interval() {
        let d = toy_dataset();
        let v = make_target_view(&d, 0, 0, (2, 4)).unwrap();
        for day in 2..=4 {
            for (x, n) in v.neighbor_row(day).iter().zip(&v.neighbor_norm) {
                let z = n.apply(*x);
                assert!((0.0..=1.0).contains(&z));
                assert!((n.invert(z) - x).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn signal_reproduces_daily_samples() {
        let d = toy_dataset();
        let v = make_target_view(&d, 0, 0, (1, 6)).unwrap();
        let sig = v.neighbor_signal();
        let mut out = vec![0.0; 6];
        for day in 1..=6 {
            sig.sample(day as f64, &mut out);
            assert_eq!(&out[..], &sig.samples[(day - 1) * 6..day * 6]);
        }
        sig.sample(2.5, &mut out);
        let mid = 0.5 * (sig.samples[7] + sig.samples[13]);
        assert!((out[1] - mid).abs() < 1e-15);
        sig.sample(99.0, &mut out);
        assert_eq!(&out[..], &sig.samples[30..36]);
    }
}
