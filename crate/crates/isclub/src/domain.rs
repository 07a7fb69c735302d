//! Distributions over the chunk-type domain, peer profiles, and the
//! supply/demand aggregation algebra.
//!
//! Types are identified by integer rank. Index `i` of a distribution holds the
//! probability of rank `s = i + 1`; after [`Population::canonicalize_sranks`]
//! the rank order coincides with descending aggregate supply (s-rank).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `sum(probs) == 1` for distributions built in-process.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Looser tolerance accepted on spec-file input; entries are renormalized
/// exactly after validation.
pub const INPUT_NORMALIZATION_TOL: f64 = 1e-6;

/// A probability mass function over the type-rank domain `{1..s_max}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TypeDistribution {
    probs: Vec<f64>,
}

impl TypeDistribution {
    /// Validates non-negativity and normalization to within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty type domain".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Distribution(format!(
                    "entry {p} at rank {} is not a probability",
                    i + 1
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Distribution(format!(
                "entries sum to {sum}, expected 1 within {NORMALIZATION_TOL:e}"
            )));
        }
        Ok(Self { probs })
    }

    /// Accepts weights whose sum is within 1e-6 of 1 (the spec-file input
    /// tolerance) and renormalizes them exactly.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Distribution("empty type domain".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Distribution(format!(
                    "entry {w} at rank {} is not a probability",
                    i + 1
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > INPUT_NORMALIZATION_TOL {
            return Err(Error::Distribution(format!(
                "entries sum to {sum}, expected 1 within {INPUT_NORMALIZATION_TOL:e}"
            )));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(s_max: usize) -> Self {
        Self {
            probs: vec![1.0 / s_max as f64; s_max],
        }
    }

    /// All mass on the type at 0-based `index`.
    pub fn point_mass(s_max: usize, index: usize) -> Self {
        let mut probs = vec![0.0; s_max];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn s_max(&self) -> usize {
        self.probs.len()
    }

    /// Probability of the type at 0-based `index` (rank `index + 1`).
    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// 2-norm of the mass function; a skewness measure (1/sqrt(s_max) for
    /// uniform, 1 for a point mass).
    pub fn norm(&self) -> f64 {
        self.probs.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// Relabels types: entry at old index `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut probs = vec![0.0; self.probs.len()];
        for (old, &new) in perm.iter().enumerate() {
            probs[new] = self.probs[old];
        }
        Self { probs }
    }

    /// True iff `self` is non-increasing in rank.
    pub fn is_non_increasing(&self) -> bool {
        self.probs.windows(2).all(|w| w[0] >= w[1])
    }
}

/// One peer: payload size `K_i`, supply distribution `g_i`, demand rate `M_i`
/// and demand distribution `h_i`.
#[derive(Debug, Clone)]
pub struct PeerProfile {
    payload_size: u64,
    supply: TypeDistribution,
    demand_rate: f64,
    demand: TypeDistribution,
}

impl PeerProfile {
    pub fn new(
        payload_size: u64,
        supply: TypeDistribution,
        demand_rate: f64,
        demand: TypeDistribution,
    ) -> Result<Self> {
        if !(demand_rate.is_finite() && demand_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "demand rate must be positive, got {demand_rate}"
            )));
        }
        if supply.s_max() != demand.s_max() {
            return Err(Error::Parameter(format!(
                "supply has {} types but demand has {}",
                supply.s_max(),
                demand.s_max()
            )));
        }
        Ok(Self {
            payload_size,
            supply,
            demand_rate,
            demand,
        })
    }

    pub fn payload_size(&self) -> u64 {
        self.payload_size
    }

    pub fn supply(&self) -> &TypeDistribution {
        &self.supply
    }

    pub fn demand_rate(&self) -> f64 {
        self.demand_rate
    }

    pub fn demand(&self) -> &TypeDistribution {
        &self.demand
    }
}

/// Shared club parameters: search efficiency `rho` and request size `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClubParams {
    search_efficiency: f64,
    request_size: u32,
}

impl ClubParams {
    pub fn new(search_efficiency: f64, request_size: u32) -> Result<Self> {
        if !(search_efficiency.is_finite()
            && search_efficiency > 0.0
            && search_efficiency <= 1.0)
        {
            return Err(Error::Parameter(format!(
                "search efficiency must lie in (0, 1], got {search_efficiency}"
            )));
        }
        if request_size < 1 {
            return Err(Error::Parameter("request size must be at least 1".into()));
        }
        Ok(Self {
            search_efficiency,
            request_size,
        })
    }

    pub fn search_efficiency(&self) -> f64 {
        self.search_efficiency
    }

    pub fn request_size(&self) -> u32 {
        self.request_size
    }
}

/// The peer population, optionally carrying type labels for reporting.
#[derive(Debug, Clone)]
pub struct Population {
    peers: Vec<PeerProfile>,
    type_labels: Option<Vec<String>>,
}

impl Population {
    pub fn new(peers: Vec<PeerProfile>) -> Result<Self> {
        Self::build(peers, None)
    }

    pub fn with_labels(peers: Vec<PeerProfile>, labels: Vec<String>) -> Result<Self> {
        Self::build(peers, Some(labels))
    }

    fn build(peers: Vec<PeerProfile>, type_labels: Option<Vec<String>>) -> Result<Self> {
        let Some(first) = peers.first() else {
            return Err(Error::Parameter("population must have at least one peer".into()));
        };
        let s_max = first.supply.s_max();
        if peers.iter().any(|p| p.supply.s_max() != s_max) {
            return Err(Error::Parameter(
                "all peers must share one type domain".into(),
            ));
        }
        if peers.iter().all(|p| p.payload_size == 0) {
            return Err(Error::Parameter(
                "mean payload must be positive; all peers have empty payloads".into(),
            ));
        }
        if let Some(labels) = &type_labels {
            if labels.len() != s_max {
                return Err(Error::Parameter(format!(
                    "{} type labels given for {s_max} types",
                    labels.len()
                )));
            }
        }
        Ok(Self { peers, type_labels })
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one peer
    }

    pub fn peers(&self) -> &[PeerProfile] {
        &self.peers
    }

    pub fn peer(&self, index: usize) -> &PeerProfile {
        &self.peers[index]
    }

    pub fn s_max(&self) -> usize {
        self.peers[0].supply.s_max()
    }

    pub fn type_labels(&self) -> Option<&[String]> {
        self.type_labels.as_deref()
    }

    /// Mean payload `k = sum K_i / N`; positive by construction.
    pub fn mean_payload(&self) -> f64 {
        self.peers.iter().map(|p| p.payload_size as f64).sum::<f64>() / self.peers.len() as f64
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        for &i in subset {
            if i >= self.peers.len() {
                return Err(Error::Parameter(format!(
                    "peer index {i} out of range for population of {}",
                    self.peers.len()
                )));
            }
        }
        Ok(())
    }

    /// Payload-weighted mixture of member supply distributions,
    /// `g_G(s) = sum K_i g_i(s) / sum K_i`.
    pub fn aggregate_supply(&self, subset: &[usize]) -> Result<TypeDistribution> {
        self.check_subset(subset)?;
        if subset.is_empty() {
            return Err(Error::NoSupplyMass);
        }
        let total: f64 = subset
            .iter()
            .map(|&i| self.peers[i].payload_size as f64)
            .sum();
        if total <= 0.0 {
            return Err(Error::NoSupplyMass);
        }
        let mut probs = vec![0.0; self.s_max()];
        for &i in subset {
            let w = self.peers[i].payload_size as f64 / total;
            for (acc, &p) in probs.iter_mut().zip(self.peers[i].supply.probs()) {
                *acc += w * p;
            }
        }
        TypeDistribution::new(probs)
    }

    /// Demand-rate-weighted mixture of member demand distributions,
    /// `h_G(s) = sum M_i h_i(s) / sum M_i`.
    pub fn aggregate_demand(&self, subset: &[usize]) -> Result<TypeDistribution> {
        self.check_subset(subset)?;
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let total: f64 = subset.iter().map(|&i| self.peers[i].demand_rate).sum();
        let mut probs = vec![0.0; self.s_max()];
        for &i in subset {
            let w = self.peers[i].demand_rate / total;
            for (acc, &p) in probs.iter_mut().zip(self.peers[i].demand.probs()) {
                *acc += w * p;
            }
        }
        TypeDistribution::new(probs)
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.peers.len()).collect()
    }

    /// Relabels types so that the aggregate supply is non-increasing in rank
    /// (supply-rank order). Ties keep their original label order. Returns the
    /// relabeled population and the permutation `old index -> new index`.
    pub fn canonicalize_sranks(&self) -> (Population, Vec<usize>) {
        let g = self
            .aggregate_supply(&self.all_indices())
            .expect("a valid population has supply mass");
        let s_max = self.s_max();
        let mut order: Vec<usize> = (0..s_max).collect();
        order.sort_by(|&a, &b| {
            g.prob(b)
                .partial_cmp(&g.prob(a))
                .expect("probabilities are finite")
                .then(a.cmp(&b))
        });
        let mut perm = vec![0; s_max];
        for (new, &old) in order.iter().enumerate() {
            perm[old] = new;
        }
        let peers = self
            .peers
            .iter()
            .map(|p| PeerProfile {
                payload_size: p.payload_size,
                supply: p.supply.permuted(&perm),
                demand_rate: p.demand_rate,
                demand: p.demand.permuted(&perm),
            })
            .collect();
        let type_labels = self.type_labels.as_ref().map(|labels| {
            let mut out = vec![String::new(); s_max];
            for (old, &new) in perm.iter().enumerate() {
                out[new] = labels[old].clone();
            }
            out
        });
        (Population { peers, type_labels }, perm)
    }

    /// Permutation `type index -> popularity rank` (0-based), ranking types by
    /// descending aggregate demand with ties broken by ascending rank.
    pub fn popularity_ranks(&self) -> Vec<usize> {
        let h = self
            .aggregate_demand(&self.all_indices())
            .expect("population is non-empty");
        let s_max = self.s_max();
        let mut order: Vec<usize> = (0..s_max).collect();
        order.sort_by(|&a, &b| {
            h.prob(b)
                .partial_cmp(&h.prob(a))
                .expect("probabilities are finite")
                .then(a.cmp(&b))
        });
        let mut ranks = vec![0; s_max];
        for (rank, &idx) in order.iter().enumerate() {
            ranks[idx] = rank;
        }
        ranks
    }
}

// ---------------------------------------------------------------------------
// Population spec file (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct PopulationSpecFile {
    types: Vec<String>,
    rho: f64,
    d: u32,
    peers: Vec<PeerSpecFile>,
}

#[derive(Debug, Deserialize)]
struct PeerSpecFile {
    #[serde(rename = "K")]
    payload: u64,
    #[serde(rename = "M")]
    demand_rate: f64,
    g: Vec<f64>,
    h: Vec<f64>,
}

/// Parses a population spec:
/// `{ "types": [...], "rho": f, "d": n, "peers": [{ "K", "M", "g", "h" }] }`.
/// Distribution entries may be off-normalized by up to 1e-6 and are
/// renormalized exactly.
pub fn parse_population_spec(text: &str) -> Result<(Population, ClubParams)> {
    let file: PopulationSpecFile =
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
    let params = ClubParams::new(file.rho, file.d)?;
    let s_max = file.types.len();
    let mut peers = Vec::with_capacity(file.peers.len());
    for (i, p) in file.peers.into_iter().enumerate() {
        if p.g.len() != s_max || p.h.len() != s_max {
            return Err(Error::Spec(format!(
                "peer {i}: distributions must have {s_max} entries to match \"types\""
            )));
        }
        let supply = TypeDistribution::from_weights(p.g)
            .map_err(|e| Error::Spec(format!("peer {i} supply: {e}")))?;
        let demand = TypeDistribution::from_weights(p.h)
            .map_err(|e| Error::Spec(format!("peer {i} demand: {e}")))?;
        let peer = PeerProfile::new(p.payload, supply, p.demand_rate, demand)
            .map_err(|e| Error::Spec(format!("peer {i}: {e}")))?;
        peers.push(peer);
    }
    let pop = Population::with_labels(peers, file.types).map_err(|e| Error::Spec(e.to_string()))?;
    Ok((pop, params))
}

/// Loads a population spec from a file path.
pub fn load_population_spec(path: &std::path::Path) -> Result<(Population, ClubParams)> {
    let text = std::fs::read_to_string(path)?;
    parse_population_spec(&text)
}
