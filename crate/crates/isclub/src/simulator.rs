//! Stochastic agent-based realization of club dynamics: materialized
//! payloads, synchronous request rounds, join/leave decisions, and seeded
//! ensembles.
//!
//! Each round every peer draws `d` demand instances from its own demand
//! distribution and evaluates them against a snapshot of the current members'
//! shared chunks; membership updates are applied simultaneously. A peer's own
//! payload is excluded from its search unless `self_supply` is set. With no
//! exogenous content the empty club is absorbing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ClubParams, Population};
use crate::error::{Error, Result};
use crate::sig10;

/// How peer payloads are materialized from `g_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadMode {
    /// Exactly `K_i` chunks drawn i.i.d. from `g_i`.
    #[default]
    FixedMultinomial,
    /// Independent `Poisson(K_i g_i(s))` count per type; matches the
    /// analytic derivation in expectation.
    Poisson,
}

/// Simulation controls. Per-seed ensemble streams derive from `seed` by the
/// fixed splitting rule `seed_j = seed XOR j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub rounds: u64,
    pub burn_in: u64,
    #[serde(default)]
    pub payload_mode: PayloadMode,
    #[serde(default)]
    pub self_supply: bool,
}

impl SimConfig {
    pub fn new(seed: u64, rounds: u64, burn_in: u64) -> Result<Self> {
        let cfg = Self {
            seed,
            rounds,
            burn_in,
            payload_mode: PayloadMode::default(),
            self_supply: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // rounds = 0 is allowed and records the initial state only.
        if self.rounds > 0 && self.burn_in >= self.rounds {
            return Err(Error::Parameter(format!(
                "burn-in {} must be smaller than rounds {}",
                self.burn_in, self.rounds
            )));
        }
        if self.rounds == 0 && self.burn_in != 0 {
            return Err(Error::Parameter(
                "burn-in must be 0 when rounds is 0".into(),
            ));
        }
        Ok(())
    }
}

/// Who starts inside the club.
#[derive(Debug, Clone)]
pub enum InitialMembership {
    /// Round(fraction * N) peers chosen uniformly by the seeded generator.
    Fraction(f64),
    Explicit(Vec<usize>),
}

/// Live simulation state: payload counts, current membership and the shared
/// content snapshot.
#[derive(Debug, Clone)]
pub struct SimState {
    params: ClubParams,
    self_supply: bool,
    /// Per peer, per type chunk counts.
    payload_counts: Vec<Vec<u64>>,
    /// Per peer cumulative demand distribution for inverse-CDF draws.
    demand_cdfs: Vec<Vec<f64>>,
    membership: Vec<bool>,
    /// Copies of each type currently shared by members.
    shared_counts: Vec<u64>,
    round: u64,
    rng: ChaCha8Rng,
}

/// Per-round bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct RoundRecord {
    pub joins: u64,
    pub leaves: u64,
    pub successes: u64,
}

/// Draws payloads and the initial membership; deterministic given the seed.
pub fn init(
    pop: &Population,
    params: ClubParams,
    cfg: &SimConfig,
    initial: &InitialMembership,
) -> Result<SimState> {
    cfg.validate()?;
    let n = pop.len();
    let s_max = pop.s_max();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut payload_counts = Vec::with_capacity(n);
    for peer in pop.peers() {
        let mut counts = vec![0u64; s_max];
        match cfg.payload_mode {
            PayloadMode::FixedMultinomial => {
                let cdf = cumulative(peer.supply().probs());
                for _ in 0..peer.payload_size() {
                    counts[draw_index(&cdf, rng.random())] += 1;
                }
            }
            PayloadMode::Poisson => {
                for (count, &g) in counts.iter_mut().zip(peer.supply().probs()) {
                    let lambda = peer.payload_size() as f64 * g;
                    if lambda > 0.0 {
                        let poisson = rand_distr::Poisson::new(lambda)
                            .map_err(|e| Error::Parameter(format!("poisson: {e}")))?;
                        *count = poisson.sample(&mut rng) as u64;
                    }
                }
            }
        }
        payload_counts.push(counts);
    }

    let mut membership = vec![false; n];
    match initial {
        InitialMembership::Fraction(f) => {
            if !(0.0..=1.0).contains(f) {
                return Err(Error::Parameter(format!(
                    "initial fraction must lie in [0, 1], got {f}"
                )));
            }
            let count = (f * n as f64).round() as usize;
            // Partial Fisher-Yates: the first `count` slots are the sample.
            let mut indices: Vec<usize> = (0..n).collect();
            for i in 0..count {
                let j = i + rng.random_range(0..n - i);
                indices.swap(i, j);
            }
            for &i in &indices[..count] {
                membership[i] = true;
            }
        }
        InitialMembership::Explicit(set) => {
            for &i in set {
                if i >= n {
                    return Err(Error::Parameter(format!(
                        "initial member index {i} out of range for {n} peers"
                    )));
                }
                membership[i] = true;
            }
        }
    }

    let demand_cdfs = pop
        .peers()
        .iter()
        .map(|p| cumulative(p.demand().probs()))
        .collect();

    let mut shared_counts = vec![0u64; s_max];
    for (member, counts) in membership.iter().zip(&payload_counts) {
        if *member {
            for (total, &c) in shared_counts.iter_mut().zip(counts) {
                *total += c;
            }
        }
    }

    Ok(SimState {
        params,
        self_supply: cfg.self_supply,
        payload_counts,
        demand_cdfs,
        membership,
        shared_counts,
        round: 0,
        rng,
    })
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn draw_index(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl SimState {
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn size(&self) -> u64 {
        self.membership.iter().filter(|&&m| m).count() as u64
    }

    pub fn payload_total(&self, peer: usize) -> u64 {
        self.payload_counts[peer].iter().sum()
    }

    /// One synchronous round: every peer draws `d` demand instances against
    /// the current snapshot; next-round membership equals request success.
    pub fn step(&mut self) -> RoundRecord {
        let n = self.membership.len();
        let d = self.params.request_size();
        let rho = self.params.search_efficiency();
        let mut next = vec![false; n];
        let mut successes = 0u64;

        for (i, next_member) in next.iter_mut().enumerate() {
            let mut ok = true;
            for _ in 0..d {
                let s = draw_index(&self.demand_cdfs[i], self.rng.random());
                let mut available = self.shared_counts[s];
                if self.membership[i] && !self.self_supply {
                    available -= self.payload_counts[i][s];
                }
                // Each shared copy is found independently with probability
                // rho, so the instance succeeds unless every copy is missed.
                let p_hit = 1.0 - (1.0 - rho).powi(available as i32);
                ok &= self.rng.random::<f64>() < p_hit;
            }
            *next_member = ok;
            if ok {
                successes += 1;
            }
        }

        let mut joins = 0u64;
        let mut leaves = 0u64;
        for (i, (&was, &now)) in self.membership.iter().zip(&next).enumerate() {
            match (was, now) {
                (false, true) => {
                    joins += 1;
                    for (total, &c) in self.shared_counts.iter_mut().zip(&self.payload_counts[i]) {
                        *total += c;
                    }
                }
                (true, false) => {
                    leaves += 1;
                    for (total, &c) in self.shared_counts.iter_mut().zip(&self.payload_counts[i]) {
                        *total -= c;
                    }
                }
                _ => {}
            }
        }
        self.membership = next;
        self.round += 1;
        RoundRecord {
            joins,
            leaves,
            successes,
        }
    }
}

/// Time series of one run. Index `t` covers rounds `0..=T`; row 0 is the
/// initial state with zero flows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sizes: Vec<u64>,
    pub joins: Vec<u64>,
    pub leaves: Vec<u64>,
    pub success_rate: Vec<f64>,
}

impl Trajectory {
    pub fn rounds(&self) -> u64 {
        (self.sizes.len() - 1) as u64
    }

    pub fn final_size(&self) -> u64 {
        *self.sizes.last().unwrap()
    }

    /// Mean membership fraction after `burn_in`, restricted to the
    /// pre-absorption part of the path (the empty club is absorbing). Paths
    /// that die inside the burn-in window average their whole pre-absorption
    /// stretch; a path that starts empty scores 0.
    pub fn equilibrium_frac(&self, n_peers: usize, burn_in: u64) -> f64 {
        let end = self
            .sizes
            .iter()
            .position(|&s| s == 0)
            .unwrap_or(self.sizes.len());
        let start = ((burn_in + 1) as usize).min(end);
        let window = if start < end {
            &self.sizes[start..end]
        } else if end > 1 {
            &self.sizes[1..end]
        } else {
            return 0.0;
        };
        let mean: f64 = window.iter().map(|&s| s as f64).sum::<f64>() / window.len() as f64;
        mean / n_peers as f64
    }

    /// CSV rows `round,size,joins,leaves,success_rate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,size,joins,leaves,success_rate\n");
        for t in 0..self.sizes.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                self.sizes[t],
                self.joins[t],
                self.leaves[t],
                sig10(self.success_rate[t])
            ));
        }
        out
    }
}

/// Runs `rounds` synchronous rounds, recording the trajectory.
pub fn run(state: &mut SimState, rounds: u64) -> Trajectory {
    let n = state.membership.len() as f64;
    let mut traj = Trajectory {
        sizes: vec![state.size()],
        joins: vec![0],
        leaves: vec![0],
        success_rate: vec![0.0],
    };
    for _ in 0..rounds {
        let rec = state.step();
        traj.sizes.push(state.size());
        traj.joins.push(rec.joins);
        traj.leaves.push(rec.leaves);
        traj.success_rate.push(rec.successes as f64 / n);
    }
    traj
}

/// Ensemble summary across seeds: per-round mean and spread of the
/// membership fraction, absorption counts, and the equilibrium-level
/// statistics.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub n_seeds: u64,
    pub n_peers: usize,
    /// Per-round mean of `size/N` across seeds (unconditional).
    pub mean_frac: Vec<f64>,
    /// Per-round population standard deviation of `size/N` across seeds.
    pub std_frac: Vec<f64>,
    /// Seeds whose final state is the empty club.
    pub absorbed_seeds: u64,
    pub sustained_seeds: u64,
    /// Mean over seeds of the per-seed pre-absorption equilibrium fraction.
    pub mean_equilibrium_frac: f64,
    pub std_equilibrium_frac: f64,
}

impl EnsembleSummary {
    /// CSV rows `round,mean_frac,std_frac`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,mean_frac,std_frac\n");
        for t in 0..self.mean_frac.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                t,
                sig10(self.mean_frac[t]),
                sig10(self.std_frac[t])
            ));
        }
        out
    }
}

/// Runs `n_seeds` independent simulations (seed_j = seed XOR j) and reduces
/// them in seed order, so the summary is deterministic regardless of how the
/// runs are scheduled.
pub fn ensemble(
    pop: &Population,
    params: ClubParams,
    cfg: &SimConfig,
    initial: &InitialMembership,
    n_seeds: u64,
) -> Result<EnsembleSummary> {
    if n_seeds < 1 {
        return Err(Error::Parameter("ensemble needs at least one seed".into()));
    }
    cfg.validate()?;
    let trajectories: Vec<Trajectory> = (0..n_seeds)
        .into_par_iter()
        .map(|j| {
            let cfg_j = SimConfig {
                seed: cfg.seed ^ j,
                ..cfg.clone()
            };
            let mut state = init(pop, params, &cfg_j, initial)?;
            Ok(run(&mut state, cfg_j.rounds))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_peers = pop.len();
    let rows = trajectories[0].sizes.len();
    let mut mean_frac = vec![0.0; rows];
    let mut std_frac = vec![0.0; rows];
    for t in 0..rows {
        let mut sum = 0.0;
        for traj in &trajectories {
            sum += traj.sizes[t] as f64 / n_peers as f64;
        }
        let mean = sum / n_seeds as f64;
        let mut var = 0.0;
        for traj in &trajectories {
            let dev = traj.sizes[t] as f64 / n_peers as f64 - mean;
            var += dev * dev;
        }
        mean_frac[t] = mean;
        std_frac[t] = (var / n_seeds as f64).sqrt();
    }

    let absorbed_seeds = trajectories.iter().filter(|t| t.final_size() == 0).count() as u64;
    let eq_fracs: Vec<f64> = trajectories
        .iter()
        .map(|t| t.equilibrium_frac(n_peers, cfg.burn_in))
        .collect();
    let mean_eq = eq_fracs.iter().sum::<f64>() / n_seeds as f64;
    let var_eq = eq_fracs
        .iter()
        .map(|f| (f - mean_eq) * (f - mean_eq))
        .sum::<f64>()
        / n_seeds as f64;

    Ok(EnsembleSummary {
        n_seeds,
        n_peers,
        mean_frac,
        std_frac,
        absorbed_seeds,
        sustained_seeds: n_seeds - absorbed_seeds,
        mean_equilibrium_frac: mean_eq,
        std_equilibrium_frac: var_eq.sqrt(),
    })
}
