//! Mean-field machinery: success rates, join probabilities, fixed points and
//! stability, the growth threshold, critical population, and sweep tables.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{ClubParams, Population, TypeDistribution};
use crate::error::{Error, Result};
use crate::scenarios::{zipf_distribution, zipf_norm, ScenarioSpec, ShiftSpec, ZipfSpec};

/// Uniform bracketing grid for the fixed-point solver.
const FIXED_POINT_GRID: usize = 1024;
/// Bisection refinement, absolute in `n`.
const BISECT_TOL: f64 = 1e-12;
/// Residual bound every returned fixed point must satisfy.
const RESIDUAL_TOL: f64 = 1e-9;
/// Log-grid resolution for the `d > 1` critical-population scan.
const CRITICAL_GRID: usize = 2048;
/// Default ceiling on membership size when scanning for the tangency.
pub const DEFAULT_CRITICAL_CEILING: f64 = 1e12;

/// Mean-field view of a club: aggregate supply, per-peer demand curves, mean
/// payload and shared parameters. The population size `N` is carried as a
/// real so the same demand mixture can be rescaled across a family of
/// population sizes (sweeps, tangency scans).
#[derive(Debug, Clone)]
pub struct MeanFieldModel {
    supply: TypeDistribution,
    aggregate_demand: TypeDistribution,
    peer_demands: Vec<TypeDistribution>,
    population_size: f64,
    mean_payload: f64,
    params: ClubParams,
}

/// One equilibrium membership size with its stability classification.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoint {
    pub n_eq: f64,
    pub p_bar: f64,
    pub stable: bool,
    /// Set when the slope sits on the stability boundary `1/N` (metastable).
    pub marginal: bool,
    pub slope: f64,
}

/// The bifurcation point for `d > 1`: smallest population admitting positive
/// fixed points, and the tangency membership level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    #[serde(rename = "n_crit")]
    pub membership: f64,
    #[serde(rename = "N_crit")]
    pub population: f64,
    pub tangency_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Growth,
    Shrinkage,
    Boundary,
}

/// One cell of the direction-field grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhasePoint {
    pub n_frac: f64,
    pub p_bar: f64,
    pub phase: Phase,
}

impl MeanFieldModel {
    /// Builds the model from an explicit population, caching the aggregates.
    pub fn from_population(pop: &Population, params: ClubParams) -> Result<Self> {
        let all: Vec<usize> = (0..pop.len()).collect();
        Ok(Self {
            supply: pop.aggregate_supply(&all)?,
            aggregate_demand: pop.aggregate_demand(&all)?,
            peer_demands: pop.peers().iter().map(|p| p.demand().clone()).collect(),
            population_size: pop.len() as f64,
            mean_payload: pop.mean_payload(),
            params,
        })
    }

    /// Homogeneous family: every peer shares the aggregate demand curve.
    pub fn homogeneous(
        supply: TypeDistribution,
        demand: TypeDistribution,
        population_size: f64,
        mean_payload: f64,
        params: ClubParams,
    ) -> Result<Self> {
        if supply.s_max() != demand.s_max() {
            return Err(Error::Parameter(format!(
                "supply spans {} types but demand spans {}",
                supply.s_max(),
                demand.s_max()
            )));
        }
        if !(population_size.is_finite() && population_size > 0.0) {
            return Err(Error::Parameter(format!(
                "population size must be positive, got {population_size}"
            )));
        }
        if !(mean_payload.is_finite() && mean_payload > 0.0) {
            return Err(Error::Parameter(format!(
                "mean payload must be positive, got {mean_payload}"
            )));
        }
        Ok(Self {
            peer_demands: vec![demand.clone()],
            aggregate_demand: demand,
            supply,
            population_size,
            mean_payload,
            params,
        })
    }

    pub fn from_scenario(spec: &ScenarioSpec) -> Result<Self> {
        let (g, h) = spec.distributions()?;
        Self::homogeneous(g, h, spec.n_peers, spec.k, spec.params()?)
    }

    /// Same demand mixture and parameters at a different population size.
    pub fn with_population_size(&self, population_size: f64) -> Result<Self> {
        if !(population_size.is_finite() && population_size > 0.0) {
            return Err(Error::Parameter(format!(
                "population size must be positive, got {population_size}"
            )));
        }
        let mut clone = self.clone();
        clone.population_size = population_size;
        Ok(clone)
    }

    pub fn population_size(&self) -> f64 {
        self.population_size
    }

    pub fn mean_payload(&self) -> f64 {
        self.mean_payload
    }

    pub fn params(&self) -> ClubParams {
        self.params
    }

    pub fn supply(&self) -> &TypeDistribution {
        &self.supply
    }

    pub fn aggregate_demand(&self) -> &TypeDistribution {
        &self.aggregate_demand
    }

    pub fn peer_count(&self) -> usize {
        self.peer_demands.len()
    }

    fn k_rho(&self) -> f64 {
        self.mean_payload * self.params.search_efficiency()
    }

    fn success_over(&self, demand: &TypeDistribution, n: f64) -> f64 {
        let krho = self.k_rho();
        demand
            .probs()
            .iter()
            .zip(self.supply.probs())
            .map(|(h, g)| h * (1.0 - (-n * krho * g).exp()))
            .sum()
    }

    /// Per-instance success rate `p_i(n) = E_{h_i}[1 - exp(-n k rho g(s))]`.
    pub fn success_rate(&self, peer: usize, n: f64) -> f64 {
        self.success_over(&self.peer_demands[peer], n)
    }

    /// Join probability `P_i(n) = p_i(n)^d`.
    pub fn join_probability(&self, peer: usize, n: f64) -> f64 {
        self.success_rate(peer, n).powi(self.params.request_size() as i32)
    }

    /// `P-bar(n)`: join probability averaged over the peer mixture.
    pub fn mean_join_probability(&self, n: f64) -> f64 {
        let d = self.params.request_size() as i32;
        let sum: f64 = self
            .peer_demands
            .iter()
            .map(|h| self.success_over(h, n).powi(d))
            .sum();
        sum / self.peer_demands.len() as f64
    }

    /// Analytic derivative of `P-bar` in `n`:
    /// `(d k rho / N) sum_i p_i^(d-1) E_{h_i}[g(s) exp(-n k rho g(s))]`.
    pub fn slope(&self, n: f64) -> f64 {
        let krho = self.k_rho();
        let d = self.params.request_size();
        let g = self.supply.probs();
        let mut acc = 0.0;
        for demand in &self.peer_demands {
            let p = self.success_over(demand, n);
            let mut expectation = 0.0;
            for (h, &gs) in demand.probs().iter().zip(g) {
                expectation += h * gs * (-n * krho * gs).exp();
            }
            acc += p.powi(d as i32 - 1) * expectation;
        }
        d as f64 * krho * acc / self.peer_demands.len() as f64
    }

    /// Control parameter `pi = N k rho sum_s h(s) g(s)` over the aggregate
    /// demand.
    pub fn control_parameter(&self) -> f64 {
        let inner: f64 = self
            .aggregate_demand
            .probs()
            .iter()
            .zip(self.supply.probs())
            .map(|(h, g)| h * g)
            .sum();
        self.population_size * self.k_rho() * inner
    }

    /// The `k rho` product at which `pi = 1` for this population.
    pub fn critical_k_rho(&self) -> f64 {
        let inner: f64 = self
            .aggregate_demand
            .probs()
            .iter()
            .zip(self.supply.probs())
            .map(|(h, g)| h * g)
            .sum();
        1.0 / (self.population_size * inner)
    }

    /// Empty membership is unstable iff requests are simple (`d = 1`) and the
    /// control parameter reaches 1.
    pub fn empty_membership_unstable(&self) -> bool {
        self.params.request_size() == 1 && self.control_parameter() >= 1.0
    }

    /// All solutions of `P-bar(n) = n/N` on `[0, N]`, classified and sorted
    /// ascending; `n = 0` is always included.
    ///
    /// Sign changes are bracketed on a uniform grid and refined by bisection
    /// to 1e-12 absolute in `n`.
    pub fn fixed_points(&self) -> Result<Vec<FixedPoint>> {
        let n_pop = self.population_size;
        let f = |n: f64| self.mean_join_probability(n) - n / n_pop;

        let mut roots: Vec<f64> = Vec::new();
        // n = 0 is an exact root; the departure sign there comes from the
        // analytic slope so that a root inside the first grid cell is still
        // bracketed.
        let mut prev_x = 0.0;
        let mut prev_sign = sign(self.slope(0.0) - 1.0 / n_pop);
        for i in 1..=FIXED_POINT_GRID {
            let x = n_pop * i as f64 / FIXED_POINT_GRID as f64;
            let v = f(x);
            let s = sign(v);
            if s == 0 {
                roots.push(x);
            } else if prev_sign != 0 && s != prev_sign {
                roots.push(bisect(&f, prev_x, x, prev_sign));
            }
            if s != 0 {
                prev_sign = s;
            }
            prev_x = x;
        }
        roots.retain(|&r| r > BISECT_TOL);
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * n_pop.max(1.0));

        let mut points = vec![self.classify(0.0)];
        for r in roots {
            let fp = self.classify(r);
            let residual = (fp.p_bar - r / n_pop).abs();
            if residual > RESIDUAL_TOL {
                return Err(Error::SolverFailure {
                    detail: format!("fixed point at n = {r} did not converge"),
                    residual,
                });
            }
            points.push(fp);
        }
        if self.params.request_size() == 1 {
            // Concavity of P-bar admits at most one positive crossing.
            debug_assert!(points.len() <= 2);
        }
        Ok(points)
    }

    fn classify(&self, n: f64) -> FixedPoint {
        let slope = self.slope(n);
        let p_bar = if n == 0.0 { 0.0 } else { self.mean_join_probability(n) };
        FixedPoint {
            n_eq: n,
            p_bar,
            stable: slope < 1.0 / self.population_size,
            marginal: (slope * self.population_size - 1.0).abs() < 1e-9,
            slope,
        }
    }

    /// Smallest population admitting positive fixed points.
    ///
    /// For `d = 1` the threshold has the closed form
    /// `N_crit = 1 / (k rho sum h g)` with the tangency at the origin. For
    /// `d > 1` the tangency point minimizes `n / P-bar(n)` over `n > 0`; the
    /// minimizer is `n_crit` and the minimum is `N_crit`.
    pub fn critical_population(&self) -> Result<CriticalPoint> {
        self.critical_population_bounded(DEFAULT_CRITICAL_CEILING)
    }

    pub fn critical_population_bounded(&self, ceiling: f64) -> Result<CriticalPoint> {
        if !(ceiling.is_finite() && ceiling > 0.0) {
            return Err(Error::Parameter(format!(
                "ceiling must be positive, got {ceiling}"
            )));
        }
        if self.params.request_size() == 1 {
            let inner: f64 = self
                .aggregate_demand
                .probs()
                .iter()
                .zip(self.supply.probs())
                .map(|(h, g)| h * g)
                .sum();
            let denom = self.k_rho() * inner;
            if denom <= 0.0 || !denom.is_finite() {
                return Err(Error::NoCriticalPopulation { ceiling });
            }
            return Ok(CriticalPoint {
                membership: 0.0,
                population: 1.0 / denom,
                tangency_residual: 0.0,
            });
        }

        // Scan n / P-bar(n) on a log grid, then refine the bracketed minimum
        // by golden-section search in log space.
        let floor: f64 = 1e-6;
        let ratio = |n: f64| {
            let p = self.mean_join_probability(n);
            if p > 0.0 {
                n / p
            } else {
                f64::INFINITY
            }
        };
        let log_step = (ceiling / floor).ln() / (CRITICAL_GRID - 1) as f64;
        let grid_n = |i: usize| floor * (log_step * i as f64).exp();
        let mut best_i = 0;
        let mut best = f64::INFINITY;
        for i in 0..CRITICAL_GRID {
            let r = ratio(grid_n(i));
            if r < best {
                best = r;
                best_i = i;
            }
        }
        if !best.is_finite() || best_i + 1 >= CRITICAL_GRID {
            return Err(Error::NoCriticalPopulation { ceiling });
        }
        if best_i == 0 {
            return Err(Error::SolverFailure {
                detail: "critical scan floor too high".into(),
                residual: best,
            });
        }

        let mut a = grid_n(best_i - 1).ln();
        let mut b = grid_n(best_i + 1).ln();
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = ratio(c.exp());
        let mut fd = ratio(d.exp());
        while b - a > 1e-12 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = ratio(c.exp());
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = ratio(d.exp());
            }
        }
        let n_crit = (0.5 * (a + b)).exp();
        let population = ratio(n_crit);
        let residual = (self.slope(n_crit) - self.mean_join_probability(n_crit) / n_crit).abs();
        Ok(CriticalPoint {
            membership: n_crit,
            population,
            tangency_residual: residual,
        })
    }

    /// Fixed points across a range of population sizes (`d >= 2`).
    pub fn bifurcation_scan(&self, populations: &[f64]) -> Result<Vec<(f64, Vec<FixedPoint>)>> {
        if self.params.request_size() < 2 {
            return Err(Error::Parameter(
                "bifurcation scan is defined for d >= 2".into(),
            ));
        }
        populations
            .iter()
            .map(|&n| Ok((n, self.with_population_size(n)?.fixed_points()?)))
            .collect()
    }

    /// Direction-field grid over `n in [0, N]` at `resolution` points.
    pub fn phase_field(&self, resolution: usize) -> Result<Vec<PhasePoint>> {
        if resolution < 2 {
            return Err(Error::Parameter("resolution must be at least 2".into()));
        }
        let points = (0..resolution)
            .map(|i| {
                let n_frac = i as f64 / (resolution - 1) as f64;
                let p_bar = self.mean_join_probability(n_frac * self.population_size);
                let phase = if p_bar > n_frac {
                    Phase::Growth
                } else if p_bar < n_frac {
                    Phase::Shrinkage
                } else {
                    Phase::Boundary
                };
                PhasePoint { n_frac, p_bar, phase }
            })
            .collect();
        Ok(points)
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, sign_a: i8) -> f64 {
    while b - a > BISECT_TOL {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break; // interval exhausted at float resolution
        }
        if sign(f(m)) == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

// ---------------------------------------------------------------------------
// Sweep tables
// ---------------------------------------------------------------------------

/// One row of a critical-population sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NcritRow {
    pub beta: f64,
    pub s_max: usize,
    pub delta: i64,
    pub k_rho: f64,
    #[serde(rename = "N_crit")]
    pub critical_population: f64,
}

/// Critical population over a `(beta, s_max)` grid for simple requests.
///
/// The perfect-match case uses the closed form `1 / (k rho |g|^2)`; with a
/// shift the inner product of the mismatched pair is evaluated directly.
/// Rows are ordered lexicographically in `(beta, s_max)`.
pub fn ncrit_sweep(
    betas: &[f64],
    s_maxes: &[usize],
    k_rho: f64,
    shift: Option<&ShiftSpec>,
) -> Result<Vec<NcritRow>> {
    if !(k_rho.is_finite() && k_rho > 0.0) {
        return Err(Error::Parameter(format!(
            "k rho must be positive, got {k_rho}"
        )));
    }
    let mut rows = Vec::with_capacity(betas.len() * s_maxes.len());
    for &beta in betas {
        for &s_max in s_maxes {
            let spec = ZipfSpec::new(beta, s_max)?;
            let (delta, critical_population) = match shift {
                None => {
                    let norm = zipf_norm(&spec);
                    (0, 1.0 / (k_rho * norm * norm))
                }
                Some(shift) => {
                    let g = zipf_distribution(&spec);
                    let (g, h) = crate::scenarios::shifted_demand(&g, beta, shift)?;
                    let inner: f64 =
                        h.probs().iter().zip(g.probs()).map(|(a, b)| a * b).sum();
                    if inner <= 0.0 {
                        return Err(Error::NoCriticalPopulation {
                            ceiling: DEFAULT_CRITICAL_CEILING,
                        });
                    }
                    (shift.delta, 1.0 / (k_rho * inner))
                }
            };
            rows.push(NcritRow {
                beta,
                s_max,
                delta,
                k_rho,
                critical_population,
            });
        }
    }
    Ok(rows)
}

/// One row of an equilibrium sweep: the largest stable fixed point fraction
/// at a given population size (0 when no positive fixed point exists).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquilibriumRow {
    pub beta: f64,
    pub s_max: usize,
    #[serde(rename = "N")]
    pub population: f64,
    pub k_rho: f64,
    pub n_eq_frac: f64,
    pub p_bar: f64,
}

/// Equilibrium membership fraction over a `(beta, N)` grid for the
/// perfect-match Zipf scenario with simple requests.
pub fn equilibrium_sweep(
    betas: &[f64],
    s_max: usize,
    populations: &[f64],
    k_rho: f64,
) -> Result<Vec<EquilibriumRow>> {
    let params = ClubParams::new(1.0, 1)?;
    let cells: Vec<(f64, f64)> = betas
        .iter()
        .flat_map(|&b| populations.iter().map(move |&n| (b, n)))
        .collect();
    cells
        .par_iter()
        .map(|&(beta, population)| {
            let g = zipf_distribution(&ZipfSpec::new(beta, s_max)?);
            let model =
                MeanFieldModel::homogeneous(g.clone(), g, population, k_rho, params)?;
            let points = model.fixed_points()?;
            let top = points.iter().rfind(|p| p.n_eq > 0.0 && p.stable);
            let (n_eq_frac, p_bar) = match top {
                Some(p) => (p.n_eq / population, p.p_bar),
                None => (0.0, 0.0),
            };
            Ok(EquilibriumRow {
                beta,
                s_max,
                population,
                k_rho,
                n_eq_frac,
                p_bar,
            })
        })
        .collect()
}
