//! Parametric scenario generators: truncated Zipf supply, shifted-demand
//! mismatch, and popularity-rank demand conversion.

use serde::{Deserialize, Serialize};

use crate::domain::{ClubParams, PeerProfile, Population, TypeDistribution};
use crate::error::{Error, Result};

/// Truncated Zipf shape: `g(s) = c s^(-beta)` on `1 <= s <= s_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfSpec {
    beta: f64,
    s_max: usize,
}

impl ZipfSpec {
    pub fn new(beta: f64, s_max: usize) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Parameter(format!(
                "zipf exponent must be finite and non-negative, got {beta}"
            )));
        }
        if s_max < 1 {
            return Err(Error::Parameter("s_max must be at least 1".into()));
        }
        Ok(Self { beta, s_max })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }
}

/// `c s^(-beta)` with `c = (sum s^(-beta))^(-1)`; non-increasing in rank.
pub fn zipf_distribution(spec: &ZipfSpec) -> TypeDistribution {
    let weights: Vec<f64> = (1..=spec.s_max)
        .map(|s| (s as f64).powf(-spec.beta))
        .collect();
    let sum: f64 = weights.iter().sum();
    TypeDistribution::new(weights.into_iter().map(|w| w / sum).collect())
        .expect("zipf weights normalize")
}

/// 2-norm of the truncated Zipf distribution, `c sqrt(sum s^(-2 beta))`.
pub fn zipf_norm(spec: &ZipfSpec) -> f64 {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in 1..=spec.s_max {
        let w = (s as f64).powf(-spec.beta);
        sum += w;
        sum_sq += w * w;
    }
    sum_sq.sqrt() / sum
}

/// Which side of the market carries the shifted (excess) types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    SupplyLead,
    DemandLead,
}

/// Rank shift between supply and demand. Positive `delta` concentrates the
/// excess types in the highest ranks, negative in the lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftSpec {
    pub delta: i64,
    pub direction: ShiftDirection,
}

impl ShiftSpec {
    pub fn new(delta: i64, direction: ShiftDirection) -> Self {
        Self { delta, direction }
    }
}

/// Builds the mismatched pair `(supply, demand)` for a rank shift.
///
/// The shifted distribution is zero on the first `delta` ranks and
/// `c'(s-delta)^(-beta)` above them for `delta >= 0`; for `delta < 0` it is
/// the same Zipf shape truncated to the first `s_max + delta` ranks and
/// renormalized. For `demand_lead` the demand is the shifted side; for
/// `supply_lead` the roles are exchanged.
pub fn shifted_demand(
    g: &TypeDistribution,
    beta: f64,
    shift: &ShiftSpec,
) -> Result<(TypeDistribution, TypeDistribution)> {
    let s_max = g.s_max();
    if shift.delta.unsigned_abs() as usize >= s_max {
        return Err(Error::EmptyOverlap {
            delta: shift.delta,
            s_max,
        });
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Parameter(format!(
            "zipf exponent must be finite and non-negative, got {beta}"
        )));
    }
    let mut weights = vec![0.0; s_max];
    if shift.delta >= 0 {
        let delta = shift.delta as usize;
        for (j, w) in weights.iter_mut().skip(delta).enumerate() {
            *w = ((j + 1) as f64).powf(-beta);
        }
    } else {
        let support = s_max - shift.delta.unsigned_abs() as usize;
        for (j, w) in weights.iter_mut().take(support).enumerate() {
            *w = ((j + 1) as f64).powf(-beta);
        }
    }
    let sum: f64 = weights.iter().sum();
    let shifted = TypeDistribution::new(weights.into_iter().map(|w| w / sum).collect())
        .expect("shifted weights normalize");
    match shift.direction {
        ShiftDirection::DemandLead => Ok((g.clone(), shifted)),
        ShiftDirection::SupplyLead => Ok((shifted, g.clone())),
    }
}

/// Joint distribution `phi(r, s)` coupling popularity ranks to supply ranks.
/// The row marginal `f(r) = sum_s phi(r, s)` is derived on construction.
#[derive(Debug, Clone)]
pub struct RankCoupling {
    joint: Vec<Vec<f64>>,
    marginal_f: TypeDistribution,
}

impl RankCoupling {
    /// `joint[r][s]` over p-rank rows and s-rank columns; must be square,
    /// non-negative and sum to 1 within 1e-9.
    pub fn new(joint: Vec<Vec<f64>>) -> Result<Self> {
        let s_max = joint.len();
        if s_max == 0 {
            return Err(Error::Distribution("empty coupling".into()));
        }
        if joint.iter().any(|row| row.len() != s_max) {
            return Err(Error::Distribution(
                "coupling rows and columns must both span s_max".into(),
            ));
        }
        let mut total = 0.0;
        for row in &joint {
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Distribution(format!(
                        "coupling entry {v} is not a probability"
                    )));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > crate::domain::NORMALIZATION_TOL {
            return Err(Error::Distribution(format!(
                "coupling sums to {total}, expected 1"
            )));
        }
        let marginals: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
        let marginal_f = TypeDistribution::new(marginals)?;
        Ok(Self { joint, marginal_f })
    }

    /// Identity coupling weighted by `f`: supply follows demand perfectly.
    pub fn perfect_following(f: &TypeDistribution) -> Self {
        let s_max = f.s_max();
        let mut joint = vec![vec![0.0; s_max]; s_max];
        for (r, row) in joint.iter_mut().enumerate() {
            row[r] = f.prob(r);
        }
        Self {
            joint,
            marginal_f: f.clone(),
        }
    }

    pub fn joint(&self) -> &[Vec<f64>] {
        &self.joint
    }

    pub fn marginal_f(&self) -> &TypeDistribution {
        &self.marginal_f
    }
}

/// Converts a p-rank demand distribution to the s-rank domain:
/// `h_i(s) = sum_r phi(r, s) / f(r) * f_i(r)`.
pub fn demand_from_pranks(
    f_i: &TypeDistribution,
    coupling: &RankCoupling,
) -> Result<TypeDistribution> {
    let s_max = coupling.marginal_f.s_max();
    if f_i.s_max() != s_max {
        return Err(Error::Parameter(format!(
            "peer demand has {} p-ranks but the coupling spans {s_max}",
            f_i.s_max()
        )));
    }
    let mut probs = vec![0.0; s_max];
    for r in 0..s_max {
        let mass = f_i.prob(r);
        if mass == 0.0 {
            continue;
        }
        let f_r = coupling.marginal_f.prob(r);
        if f_r == 0.0 {
            return Err(Error::UndefinedConversion { rank: r + 1 });
        }
        let w = mass / f_r;
        for (p, &phi) in probs.iter_mut().zip(&coupling.joint[r]) {
            *p += w * phi;
        }
    }
    // The conversion conserves the mass of f_i exactly up to rounding; the
    // coupling invariants admit up to 1e-9 slack, so renormalize through the
    // input-tolerance constructor.
    TypeDistribution::from_weights(probs)
}

/// Inner product, norms and normalized similarity of a demand/supply pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchStatistics {
    pub inner: f64,
    pub norm_h: f64,
    pub norm_g: f64,
    pub similarity: f64,
}

/// `inner = sum h(s) g(s)` and `similarity = inner / (|h| |g|)`, so that
/// `inner = norm_h * norm_g * similarity` holds to rounding.
pub fn match_statistics(h: &TypeDistribution, g: &TypeDistribution) -> Result<MatchStatistics> {
    if h.s_max() != g.s_max() {
        return Err(Error::Parameter(format!(
            "demand spans {} types but supply spans {}",
            h.s_max(),
            g.s_max()
        )));
    }
    let inner: f64 = h.probs().iter().zip(g.probs()).map(|(a, b)| a * b).sum();
    let norm_h = h.norm();
    let norm_g = g.norm();
    Ok(MatchStatistics {
        inner,
        norm_h,
        norm_g,
        similarity: inner / (norm_h * norm_g),
    })
}

// ---------------------------------------------------------------------------
// Scenario spec file (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ZipfPerfect,
    ZipfShift,
}

fn default_direction() -> ShiftDirection {
    ShiftDirection::DemandLead
}

/// Homogeneous scenario file:
/// `{ "kind", "beta", "s_max", "delta", "direction", "N", "k", "rho", "d" }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub beta: f64,
    pub s_max: usize,
    #[serde(default)]
    pub delta: i64,
    #[serde(default = "default_direction")]
    pub direction: ShiftDirection,
    #[serde(rename = "N")]
    pub n_peers: f64,
    pub k: f64,
    pub rho: f64,
    pub d: u32,
}

impl ScenarioSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        ZipfSpec::new(self.beta, self.s_max)?;
        ClubParams::new(self.rho, self.d)?;
        if !(self.n_peers.is_finite() && self.n_peers > 0.0) {
            return Err(Error::Parameter(format!(
                "population size must be positive, got {}",
                self.n_peers
            )));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Parameter(format!(
                "mean payload must be positive, got {}",
                self.k
            )));
        }
        if self.kind == ScenarioKind::ZipfShift && self.delta.unsigned_abs() as usize >= self.s_max
        {
            return Err(Error::EmptyOverlap {
                delta: self.delta,
                s_max: self.s_max,
            });
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ClubParams> {
        ClubParams::new(self.rho, self.d)
    }

    /// The scenario's aggregate `(supply, demand)` pair.
    pub fn distributions(&self) -> Result<(TypeDistribution, TypeDistribution)> {
        let g = zipf_distribution(&ZipfSpec::new(self.beta, self.s_max)?);
        match self.kind {
            ScenarioKind::ZipfPerfect => Ok((g.clone(), g)),
            ScenarioKind::ZipfShift => {
                shifted_demand(&g, self.beta, &ShiftSpec::new(self.delta, self.direction))
            }
        }
    }

    /// Materializes the homogeneous population for simulation: `N` identical
    /// peers with integer payload `k`.
    pub fn population(&self) -> Result<(Population, ClubParams)> {
        let params = self.params()?;
        let n = self.n_peers.round();
        if (self.n_peers - n).abs() > 1e-9 || n < 1.0 {
            return Err(Error::Parameter(format!(
                "simulation needs an integer population size, got {}",
                self.n_peers
            )));
        }
        let k = self.k.round();
        if (self.k - k).abs() > 1e-9 || k < 1.0 {
            return Err(Error::Parameter(format!(
                "simulation needs an integer mean payload, got {}",
                self.k
            )));
        }
        let (g, h) = self.distributions()?;
        let peer = PeerProfile::new(k as u64, g, 1.0, h)?;
        let pop = Population::new(vec![peer; n as usize])?;
        Ok((pop, params))
    }
}
