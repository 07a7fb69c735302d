//! Shared in-crate test fixtures.

use crate::domain::{PeerProfile, Population, TypeDistribution};

pub const SUPPLY_ROWS: [[f64; 5]; 6] = [
    [0.4, 0.3, 0.1, 0.1, 0.1],
    [0.4, 0.2, 0.2, 0.15, 0.05],
    [0.3, 0.3, 0.2, 0.1, 0.1],
    [0.2, 0.3, 0.3, 0.15, 0.05],
    [0.5, 0.05, 0.2, 0.15, 0.1],
    [0.1, 0.4, 0.1, 0.1, 0.3],
];

pub const DEMAND_ROWS: [[f64; 5]; 6] = [
    [0.1, 0.4, 0.3, 0.1, 0.1],
    [0.05, 0.5, 0.1, 0.3, 0.05],
    [0.1, 0.2, 0.3, 0.2, 0.2],
    [0.1, 0.4, 0.3, 0.15, 0.05],
    [0.1, 0.4, 0.2, 0.2, 0.1],
    [0.2, 0.3, 0.1, 0.2, 0.2],
];

/// The six-peer music club with identical payload sizes `k` and unit demand
/// rates.
pub fn music_club(payload_size: u64) -> Population {
    let peers = SUPPLY_ROWS
        .iter()
        .zip(DEMAND_ROWS.iter())
        .map(|(g, h)| {
            PeerProfile::new(
                payload_size,
                TypeDistribution::new(g.to_vec()).unwrap(),
                1.0,
                TypeDistribution::new(h.to_vec()).unwrap(),
            )
            .unwrap()
        })
        .collect();
    Population::with_labels(
        peers,
        ["Pop", "Classical", "Oldies", "World", "Alternative"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .unwrap()
}
