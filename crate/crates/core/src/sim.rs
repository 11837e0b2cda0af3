//! Ground-truth multi-region SIR simulation.
//!
//! Regions are coupled through the force of infection
//! `lambda_i = beta I_i / N_i + sum_{j != i} (M_ij + M_ji) beta I_j / N_j`,
//! compartments are continuous, and the only random element is the initial
//! placement of infected (and optionally recovered) individuals.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geography::{Geography, MobilityMatrix};
use crate::ode::integrate_rk4_with;
use crate::rng::{self, Purpose, StreamKey};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SirParams<T> {
    /// Transmission rate, 1/day.
    pub beta: T,
    /// Recovery rate, 1/day.
    pub gamma: T,
}

impl<T: Real> SirParams<T> {
    pub fn new(beta: T, gamma: T) -> Result<Self> {
        if !(beta >= T::zero() && gamma >= T::zero()) {
            return Err(Error::invalid(format!(
                "SIR rates must be nonnegative, got beta = {beta}, gamma = {gamma}"
            )));
        }
        Ok(Self { beta, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegionState<T> {
    pub s: T,
    pub i: T,
    pub r: T,
}

impl<T: Real> RegionState<T> {
    pub fn total(&self) -> T {
        self.s + self.i + self.r
    }

    pub fn to_array(self) -> [T; 3] {
        [self.s, self.i, self.r]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self {
            s: a[0],
            i: a[1],
            r: a[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoRecovered,
    QuarterRecovered,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::NoRecovered, Scenario::QuarterRecovered];

    pub fn index(self) -> u8 {
        match self {
            Scenario::NoRecovered => 0,
            Scenario::QuarterRecovered => 1,
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Scenario::NoRecovered => "no_recovered",
            Scenario::QuarterRecovered => "quarter_recovered",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.slug() == s)
    }

    /// Fraction of the total population that starts recovered.
    pub fn recovered_fraction(self) -> f64 {
        match self {
            Scenario::NoRecovered => 0.0,
            Scenario::QuarterRecovered => 0.25,
        }
    }
}

/// Per-region force of infection for region `i`.
pub fn force_of_infection<T: Real>(
    states: &[RegionState<T>],
    params: &SirParams<T>,
    pops: &[T],
    m: &MobilityMatrix<T>,
    i: usize,
) -> T {
    let mut lambda = params.beta * states[i].i / pops[i];
    for (j, st) in states.iter().enumerate() {
        if j != i {
            lambda += (m.get(i, j) + m.get(j, i)) * params.beta * st.i / pops[j];
        }
    }
    lambda
}

/// Right-hand side of the coupled system over the packed state
/// `[S_0, I_0, R_0, S_1, ...]`.
#[derive(Debug, Clone)]
pub struct GraphSir<T> {
    pub params: SirParams<T>,
    pub pops: Vec<T>,
    /// `M + M^T`, row-major.
    coupling: Vec<T>,
    pressure: Vec<T>,
}

impl<T: Real> GraphSir<T> {
    pub fn new(params: SirParams<T>, pops: Vec<T>, m: &MobilityMatrix<T>) -> Result<Self> {
        if m.n != pops.len() {
            return Err(Error::DimensionMismatch {
                expected: pops.len(),
                actual: m.n,
            });
        }
        let n = pops.len();
        Ok(Self {
            params,
            pops,
            coupling: m.symmetric_usage(),
            pressure: vec![T::zero(); n],
        })
    }

    pub fn regions(&self) -> usize {
        self.pops.len()
    }

    pub fn derivative(&mut self, u: &[T], du: &mut [T]) {
        let n = self.pops.len();
        let beta = self.params.beta;
        let gamma = self.params.gamma;
        for j in 0..n {
            self.pressure[j] = beta * u[3 * j + 1] / self.pops[j];
        }
        for i in 0..n {
            let row = &self.coupling[i * n..(i + 1) * n];
            let mut lambda = self.pressure[i];
            for (j, (&c, &q)) in row.iter().zip(&self.pressure).enumerate() {
                if j != i {
                    lambda += c * q;
                }
            }
            let (s, inf) = (u[3 * i], u[3 * i + 1]);
            let new_inf = lambda * s;
            let rec = gamma * inf;
            du[3 * i] = -new_inf;
            du[3 * i + 1] = new_inf - rec;
            du[3 * i + 2] = rec;
        }
    }
}

/// Per-region `(dS, dI, dR)` of the ground-truth system.
pub fn ground_truth_derivative<T: Real>(
    states: &[RegionState<T>],
    params: &SirParams<T>,
    pops: &[T],
    m: &MobilityMatrix<T>,
) -> Vec<[T; 3]> {
    (0..states.len())
        .map(|i| {
            let lambda = force_of_infection(states, params, pops, m, i);
            let inf = lambda * states[i].s;
            let rec = params.gamma * states[i].i;
            [-inf, inf - rec, rec]
        })
        .collect()
}

/// Clamps tiny negative undershoot and restores each region's population.
pub fn project_nonnegative<T: Real>(t: T, u: &mut [T], pops: &[T]) -> Result<()> {
    let tol = T::lit(1e-9);
    for (region, (chunk, &n)) in u.chunks_exact_mut(3).zip(pops).enumerate() {
        let mut clamped = false;
        for x in chunk.iter_mut() {
            if *x < T::zero() {
                if *x < -tol * n {
                    return Err(Error::Undershoot {
                        region,
                        t: t.to_f64_lossy(),
                        value: x.to_f64_lossy(),
                    });
                }
                *x = T::zero();
                clamped = true;
            }
        }
        if clamped {
            let total: T = chunk.iter().copied().sum();
            let scale = n / total;
            chunk.iter_mut().for_each(|x| *x *= scale);
        }
    }
    Ok(())
}

/// Draws initial infected (and recovered) counts proportionally to population.
pub fn sample_initial_conditions<T: Real>(
    geo: &Geography<T>,
    scenario: Scenario,
    n_infected: usize,
    seed: u64,
) -> Result<Vec<RegionState<T>>> {
    sample_initial_conditions_with(geo, scenario.recovered_fraction(), n_infected, seed)
}

pub fn sample_initial_conditions_with<T: Real>(
    geo: &Geography<T>,
    recovered_fraction: f64,
    n_infected: usize,
    seed: u64,
) -> Result<Vec<RegionState<T>>> {
    if n_infected < 1 {
        return Err(Error::invalid("at least one initially infected individual required"));
    }
    if !(0.0..1.0).contains(&recovered_fraction) {
        return Err(Error::invalid(format!(
            "recovered fraction must lie in [0, 1), got {recovered_fraction}"
        )));
    }
    let weights: Vec<f64> = geo.populations.iter().map(|p| p.to_f64_lossy()).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let n = geo.len();
    let mut infected = vec![0usize; n];
    for _ in 0..n_infected {
        infected[picker.sample(&mut rng)] += 1;
    }
    let mut recovered = vec![0usize; n];
    let total = geo.total_population().to_f64_lossy();
    let n_recovered = (recovered_fraction * total).round() as usize;
    for _ in 0..n_recovered {
        recovered[picker.sample(&mut rng)] += 1;
    }
    geo.populations
        .iter()
        .enumerate()
        .map(|(k, &pop)| {
            let i = T::from_usize_lossy(infected[k]);
            let r = T::from_usize_lossy(recovered[k]);
            let s = pop - i - r;
            if s < T::zero() {
                return Err(Error::InvalidDraw(format!(
                    "region {k} would start with negative susceptibles ({s})"
                )));
            }
            Ok(RegionState { s, i, r })
        })
        .collect()
}

/// Provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Provenance<T> {
    pub scenario: Scenario,
    pub params: SirParams<T>,
    pub sigma: T,
    pub populations: Vec<T>,
    pub geography_seed: u64,
    pub master_seed: u64,
    /// Seed used for each initialization's initial-condition draw.
    pub init_seeds: Vec<u64>,
    pub n_infected: usize,
    pub dt_internal: T,
}

/// Daily trajectories `[init][region][compartment][day]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutbreakDataset<T> {
    pub n_init: usize,
    pub n_regions: usize,
    pub days: usize,
    pub states: Vec<T>,
    pub provenance: Provenance<T>,
}

impl<T: Real> OutbreakDataset<T> {
    pub fn zeros(n_init: usize, n_regions: usize, days: usize, provenance: Provenance<T>) -> Self {
        Self {
            n_init,
            n_regions,
            days,
            states: vec![T::zero(); n_init * n_regions * 3 * days],
            provenance,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n_init, self.n_regions, 3, self.days]
    }

    #[inline]
    fn offset(&self, init: usize, region: usize, comp: usize) -> usize {
        ((init * self.n_regions + region) * 3 + comp) * self.days
    }

    /// Daily series of one compartment; day `d` (1-based) is element `d - 1`.
    pub fn series(&self, init: usize, region: usize, comp: usize) -> &[T] {
        let o = self.offset(init, region, comp);
        &self.states[o..o + self.days]
    }

    pub fn series_mut(&mut self, init: usize, region: usize, comp: usize) -> &mut [T] {
        let o = self.offset(init, region, comp);
        &mut self.states[o..o + self.days]
    }

    /// `(S, I, R)` of a region on a 1-based day.
    pub fn state(&self, init: usize, region: usize, day: usize) -> [T; 3] {
        let d = day - 1;
        [0, 1, 2].map(|c| self.series(init, region, c)[d])
    }

    pub fn populations(&self) -> &[T] {
        &self.provenance.populations
    }
}

/// Settings for [`simulate_outbreak`].
#[derive(Debug, Clone)]
pub struct SimulationSpec<T> {
    pub params: SirParams<T>,
    pub n_init: usize,
    pub days: usize,
    pub n_infected: usize,
    pub dt_internal: T,
    pub master_seed: u64,
    pub geography_seed: u64,
}

/// Integrates one initialization from day 1 to `days`.
pub fn simulate_single<T: Real>(
    system: &GraphSir<T>,
    initial: &[RegionState<T>],
    days: usize,
    dt_internal: T,
) -> Result<Vec<[T; 3]>> {
    if days < 2 {
        return Err(Error::invalid("need at least two days"));
    }
    let mut sys = system.clone();
    let pops = sys.pops.clone();
    let u0: Vec<T> = initial.iter().flat_map(|s| s.to_array()).collect();
    let traj = integrate_rk4_with(
        |_, u, du| sys.derivative(u, du),
        &u0,
        (T::one(), T::from_usize_lossy(days)),
        dt_internal,
        T::one(),
        |t, u| project_nonnegative(t, u, &pops),
    )?;
    // days x regions
    Ok(traj
        .states
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect())
}

/// Simulates `n_init` outbreaks for one scenario on a fixed geography.
pub fn simulate_outbreak<T: Real>(
    geo: &Geography<T>,
    m: &MobilityMatrix<T>,
    scenario: Scenario,
    spec: &SimulationSpec<T>,
) -> Result<OutbreakDataset<T>> {
    let system = GraphSir::new(spec.params, geo.populations.clone(), m)?;
    let n = geo.len();
    let init_seeds: Vec<u64> = (0..spec.n_init)
        .map(|k| {
            rng::derive_seed(
                spec.master_seed,
                StreamKey::new(Purpose::InitialCondition)
                    .scenario(scenario.index())
                    .init(k as u16),
            )
        })
        .collect();
    let runs: Vec<Result<Vec<[T; 3]>>> = init_seeds
        .par_iter()
        .map(|&seed| {
            let wrap = |e: Error| Error::Simulation {
                seed,
                region: match &e {
                    Error::Undershoot { region, .. } => Some(*region),
                    _ => None,
                },
                source: Box::new(e),
            };
            let initial = sample_initial_conditions(geo, scenario, spec.n_infected, seed).map_err(wrap)?;
            simulate_single(&system, &initial, spec.days, spec.dt_internal).map_err(wrap)
        })
        .collect();
    let provenance = Provenance {
        scenario,
        params: spec.params,
        sigma: m.sigma,
        populations: geo.populations.clone(),
        geography_seed: spec.geography_seed,
        master_seed: spec.master_seed,
        init_seeds,
        n_infected: spec.n_infected,
        dt_internal: spec.dt_internal,
    };
    let mut data = OutbreakDataset::zeros(spec.n_init, n, spec.days, provenance);
    for (k, run) in runs.into_iter().enumerate() {
        let rows = run?;
        for d in 0..spec.days {
            for r in 0..n {
                let st = rows[d * n + r];
                for c in 0..3 {
                    data.series_mut(k, r, c)[d] = st[c];
                }
            }
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geography::{mobility_matrix, sample_geography};

    fn state(s: f64, i: f64, r: f64) -> RegionState<f64> {
        RegionState { s, i, r }
    }

    #[test]
    fn force_of_infection_cases() {
        let params = SirParams::new(0.3, 0.1).unwrap();
        let pops = [100.0, 200.0];
        let zero = MobilityMatrix::zeros(2);
        let quiet = [state(100.0, 0.0, 0.0), state(200.0, 0.0, 0.0)];
        assert_eq!(force_of_infection(&quiet, &params, &pops, &zero, 0), 0.0);

        let half = [state(50.0, 50.0, 0.0), state(200.0, 0.0, 0.0)];
        assert!((force_of_infection(&half, &params, &pops, &zero, 0) - 0.15).abs() < 1e-15);

        let m = MobilityMatrix::from_rows(vec![vec![0.0, 0.5], vec![0.5, 0.0]], 1.0).unwrap();
        let remote = [state(100.0, 0.0, 0.0), state(0.0, 200.0, 0.0)];
        assert!((force_of_infection(&remote, &params, &pops, &m, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn derivative_limits_and_conservation() {
        let geo = sample_geography::<f64>(5, 4.0, (1e3, 1e4), 1).unwrap();
        let m = mobility_matrix(&geo, 2500.0).unwrap();
        let states: Vec<_> = geo
            .populations
            .iter()
            .map(|&p| state(0.6 * p, 0.3 * p, 0.1 * p))
            .collect();
        let off = SirParams::new(0.0, 0.0).unwrap();
        for d in ground_truth_derivative(&states, &off, &geo.populations, &m) {
            assert_eq!(d, [0.0, 0.0, 0.0]);
        }
        let decay = SirParams::new(0.0, 0.2).unwrap();
        for (d, st) in ground_truth_derivative(&states, &decay, &geo.populations, &m).iter().zip(&states) {
            assert_eq!(d[0], 0.0);
            assert!((d[1] + 0.2 * st.i).abs() < 1e-12);
            assert!((d[2] - 0.2 * st.i).abs() < 1e-12);
        }
        let live = SirParams::new(0.3, 0.1).unwrap();
        let ders = ground_truth_derivative(&states, &live, &geo.populations, &m);
        for d in &ders {
            let scale = d[0].abs().max(d[2].abs());
            assert!((d[0] + d[1] + d[2]).abs() <= 4.0 * f64::EPSILON * scale);
        }
        // packed kernel agrees with the per-region definition
        let mut sys = GraphSir::new(live, geo.populations.clone(), &m).unwrap();
        let u: Vec<f64> = states.iter().flat_map(|s| s.to_array()).collect();
        let mut du = vec![0.0; u.len()];
        sys.derivative(&u, &mut du);
        for (k, d) in ders.iter().enumerate() {
            for c in 0..3 {
                assert!((du[3 * k + c] - d[c]).abs() <= 1e-12 * d[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn initial_conditions_per_scenario() {
        let geo = sample_geography::<f64>(10, 4.0, (1e3, 1e4), 2).unwrap();
        let none = sample_initial_conditions(&geo, Scenario::NoRecovered, 10, 5).unwrap();
        let infected: f64 = none.iter().map(|s| s.i).sum();
        assert_eq!(infected, 10.0);
        assert!(none.iter().all(|s| s.r == 0.0));
        let quarter = sample_initial_conditions(&geo, Scenario::QuarterRecovered, 10, 5).unwrap();
        let rec: f64 = quarter.iter().map(|s| s.r).sum();
        assert_eq!(rec, (0.25 * geo.total_population()).round());
        for (s, &p) in quarter.iter().zip(&geo.populations) {
            assert!((s.total() - p).abs() < 1e-9 * p);
        }
    }

    #[test]
    fn initial_draw_rejects_bad_arguments() {
        let geo = sample_geography::<f64>(3, 4.0, (1e3, 1e4), 2).unwrap();
        assert!(sample_initial_conditions_with(&geo, 1.0, 10, 0).is_err());
        assert!(sample_initial_conditions_with(&geo, 0.0, 0, 0).is_err());
        // a tiny region that receives more infected than it holds
        let tiny = Geography::from_parts(
            vec![[1.0, 1.0], [3.0, 3.0]],
            vec![1.5, 1.5],
            4.0,
        )
        .unwrap();
        let err = (0..50).find_map(|seed| sample_initial_conditions_with(&tiny, 0.0, 10, seed).err());
        assert!(matches!(err, Some(Error::InvalidDraw(_))));
    }

    #[test]
    fn projection_clamps_and_rejects() {
        let pops = [1000.0];
        let mut u = [1000.0 + 1e-7, 0.0, -1e-7];
        project_nonnegative(0.0, &mut u, &pops).unwrap();
        assert_eq!(u[2], 0.0);
        assert!((u.iter().sum::<f64>() - 1000.0).abs() < 1e-9);
        let mut bad = [1001.0, 0.0, -1.0];
        assert!(project_nonnegative(0.0, &mut bad, &pops).is_err());
    }

    #[test]
    fn simulated_shape_and_conservation() {
        let geo = sample_geography::<f64>(4, 4.0, (1e3, 1e4), 11).unwrap();
        let m = mobility_matrix(&geo, 2500.0).unwrap();
        let spec = SimulationSpec {
            params: SirParams::new(0.1, 0.1).unwrap(),
            n_init: 3,
            days: 120,
            n_infected: 10,
            dt_internal: 0.25,
            master_seed: 7,
            geography_seed: 11,
        };
        let data = simulate_outbreak(&geo, &m, Scenario::QuarterRecovered, &spec).unwrap();
        assert_eq!(data.shape(), [3, 4, 3, 120]);
        for k in 0..3 {
            for r in 0..4 {
                let n = geo.populations[r];
                let s = data.series(k, r, 0);
                let rr = data.series(k, r, 2);
                for d in 0..120 {
                    let total = s[d] + data.series(k, r, 1)[d] + rr[d];
                    assert!((total - n).abs() <= 1e-6 * n);
                    if d > 0 {
                        assert!(s[d] <= s[d - 1]);
                        assert!(rr[d] >= rr[d - 1]);
                    }
                }
            }
        }
    }

    #[test]
    fn uncoupled_uninfected_regions_stay_constant() {
        let geo = sample_geography::<f64>(3, 4.0, (1e3, 1e4), 4).unwrap();
        let system = GraphSir::new(
            SirParams::new(0.3, 0.1).unwrap(),
            geo.populations.clone(),
            &MobilityMatrix::zeros(3),
        )
        .unwrap();
        let mut init: Vec<_> = geo.populations.iter().map(|&p| state(p, 0.0, 0.0)).collect();
        init[0] = state(geo.populations[0] - 10.0, 10.0, 0.0);
        let rows = simulate_single(&system, &init, 500, 0.25).unwrap();
        for d in 0..500 {
            for r in 1..3 {
                assert_eq!(rows[d * 3 + r], init[r].to_array());
            }
        }
    }
}
