//! Property tests for the aggregation algebra, scenario generators and the
//! mean-field solvers.

use proptest::prelude::*;

use isclub::analytics::MeanFieldModel;
use isclub::domain::{ClubParams, PeerProfile, Population, TypeDistribution};
use isclub::scenarios::{
    demand_from_pranks, match_statistics, shifted_demand, zipf_distribution, RankCoupling,
    ShiftDirection, ShiftSpec, ZipfSpec,
};

fn distribution(s_max: usize) -> impl Strategy<Value = TypeDistribution> {
    prop::collection::vec(0.0f64..1.0, s_max)
        .prop_filter("needs mass", |w| w.iter().sum::<f64>() > 0.05)
        .prop_map(|w| {
            let sum: f64 = w.iter().sum();
            TypeDistribution::new(w.into_iter().map(|x| x / sum).collect()).unwrap()
        })
}

prop_compose! {
    fn population()(s_max in 2usize..6)(
        s_max in Just(s_max),
        supplies in prop::collection::vec(distribution(s_max), 1..7),
        payloads in prop::collection::vec(0u64..5, 7),
        rates in prop::collection::vec(0.2f64..4.0, 7),
    ) -> Population {
        let _ = s_max;
        let n = supplies.len();
        let mut peers = Vec::with_capacity(n);
        for (i, g) in supplies.iter().enumerate() {
            // Reuse another peer's supply as this peer's demand for variety.
            let h = supplies[(i + 1) % n].clone();
            let k = if i == 0 { payloads[i].max(1) } else { payloads[i] };
            peers.push(PeerProfile::new(k, g.clone(), rates[i], h).unwrap());
        }
        Population::new(peers).unwrap()
    }
}

// Random model with unit demand rates, so the Theorem-1 identity between the
// control parameter and the slope at the origin is exact.
prop_compose! {
    fn mean_field_model()(s_max in 2usize..6)(
        s_max in Just(s_max),
        supplies in prop::collection::vec(distribution(s_max), 1..7),
        demands in prop::collection::vec(distribution(s_max), 7),
        payloads in prop::collection::vec(1u64..4, 7),
        rho in 0.05f64..1.0,
        d in 1u32..4,
        n_scale in 1usize..9,
    ) -> MeanFieldModel {
        let _ = s_max;
        let n = supplies.len();
        let mut peers = Vec::with_capacity(n);
        for (i, g) in supplies.iter().enumerate() {
            peers.push(PeerProfile::new(payloads[i], g.clone(), 1.0, demands[i].clone()).unwrap());
        }
        // Repeat the peer set to reach larger populations.
        let peers: Vec<_> = std::iter::repeat_with(|| peers.clone())
            .take(n_scale)
            .flatten()
            .collect();
        let pop = Population::new(peers).unwrap();
        MeanFieldModel::from_population(&pop, ClubParams::new(rho, d).unwrap()).unwrap()
    }
}

proptest! {
    #[test]
    fn aggregation_is_idempotent_on_shared_distributions(
        q in distribution(5),
        payloads in prop::collection::vec(1u64..9, 1..6),
        rates in prop::collection::vec(0.1f64..5.0, 6),
    ) {
        let peers: Vec<_> = payloads
            .iter()
            .zip(&rates)
            .map(|(&k, &m)| PeerProfile::new(k, q.clone(), m, q.clone()).unwrap())
            .collect();
        let n = peers.len();
        let pop = Population::new(peers).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let g = pop.aggregate_supply(&all).unwrap();
        let h = pop.aggregate_demand(&all).unwrap();
        for i in 0..5 {
            prop_assert!((g.prob(i) - q.prob(i)).abs() < 1e-12);
            prop_assert!((h.prob(i) - q.prob(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregates_stay_convex_and_normalized(pop in population()) {
        let all: Vec<usize> = (0..pop.len()).collect();
        let g = pop.aggregate_supply(&all).unwrap();
        let h = pop.aggregate_demand(&all).unwrap();
        for dist in [&g, &h] {
            let sum: f64 = dist.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
        for s in 0..pop.s_max() {
            let contributors: Vec<f64> = pop
                .peers()
                .iter()
                .filter(|p| p.payload_size() > 0)
                .map(|p| p.supply().prob(s))
                .collect();
            let lo = contributors.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = contributors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(g.prob(s) >= lo - 1e-12 && g.prob(s) <= hi + 1e-12);
        }
    }

    #[test]
    fn canonicalization_sorts_and_inverts_exactly(pop in population()) {
        let (canon, perm) = pop.canonicalize_sranks();
        let all: Vec<usize> = (0..canon.len()).collect();
        prop_assert!(canon.aggregate_supply(&all).unwrap().is_non_increasing());

        // Inverse permutation recovers the original distributions exactly.
        let mut inverse = vec![0usize; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        for (orig, relabeled) in pop.peers().iter().zip(canon.peers()) {
            let back = relabeled.supply().permuted(&inverse);
            prop_assert_eq!(back.probs(), orig.supply().probs());
            let back = relabeled.demand().permuted(&inverse);
            prop_assert_eq!(back.probs(), orig.demand().probs());
        }
    }

    #[test]
    fn zipf_is_non_increasing(beta in 0.0f64..3.0, s_max in 1usize..300) {
        let d = zipf_distribution(&ZipfSpec::new(beta, s_max).unwrap());
        prop_assert!(d.is_non_increasing());
        let sum: f64 = d.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shifts_conserve_mass_on_a_contiguous_segment(
        beta in 0.0f64..2.0,
        s_max in 3usize..60,
        frac in -0.9f64..0.9,
        lead in prop::bool::ANY,
    ) {
        let delta = (frac * s_max as f64) as i64;
        let direction = if lead { ShiftDirection::SupplyLead } else { ShiftDirection::DemandLead };
        let g = zipf_distribution(&ZipfSpec::new(beta, s_max).unwrap());
        let (supply, demand) = shifted_demand(&g, beta, &ShiftSpec::new(delta, direction)).unwrap();
        for dist in [&supply, &demand] {
            let sum: f64 = dist.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            // Nonzero entries form one contiguous rank interval.
            let nz: Vec<usize> = (0..s_max).filter(|&i| dist.prob(i) > 0.0).collect();
            prop_assert!(!nz.is_empty());
            prop_assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len());
        }
    }

    #[test]
    fn prank_conversion_preserves_normalization(
        rows in prop::collection::vec(prop::collection::vec(0.001f64..1.0, 4), 4),
        f_i in distribution(4),
    ) {
        let total: f64 = rows.iter().flatten().sum();
        let joint: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| v / total).collect())
            .collect();
        let coupling = RankCoupling::new(joint).unwrap();
        let h = demand_from_pranks(&f_i, &coupling).unwrap();
        let sum: f64 = h.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn match_identity_holds(h in distribution(6), g in distribution(6)) {
        let stats = match_statistics(&h, &g).unwrap();
        prop_assert!((stats.inner - stats.norm_h * stats.norm_g * stats.similarity).abs() < 1e-12);
        prop_assert!(stats.similarity >= 0.0 && stats.similarity <= 1.0 + 1e-12);
    }

    #[test]
    fn mean_join_probability_is_monotone_and_concave_for_simple_requests(
        model in mean_field_model(),
    ) {
        // Concavity applies to d = 1; monotonicity holds for every d.
        let n_pop = model.population_size();
        let grid: Vec<f64> = (0..=32).map(|i| n_pop * i as f64 / 32.0).collect();
        let values: Vec<f64> = grid.iter().map(|&n| model.mean_join_probability(n)).collect();
        for w in values.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        if model.params().request_size() == 1 {
            for i in 0..values.len() - 2 {
                let mid = model.mean_join_probability(0.5 * (grid[i] + grid[i + 2]));
                prop_assert!(mid >= 0.5 * (values[i] + values[i + 2]) - 1e-12);
            }
        }
    }

    #[test]
    fn threshold_equivalence_and_slope_identity(model in mean_field_model()) {
        let n_pop = model.population_size();
        let d = model.params().request_size();
        let pi = model.control_parameter();
        // Theorem-1 proof identity (unit demand rates): pi = N * slope(0).
        if d == 1 {
            prop_assert!((model.slope(0.0) * n_pop - pi).abs() < 1e-12);
        } else {
            prop_assert_eq!(model.slope(0.0), 0.0);
        }
        prop_assert_eq!(
            model.empty_membership_unstable(),
            d == 1 && model.slope(0.0) * n_pop >= 1.0 - 1e-12 && pi >= 1.0
        );
    }

    #[test]
    fn fixed_points_satisfy_residual_and_uniqueness(model in mean_field_model()) {
        let n_pop = model.population_size();
        let points = model.fixed_points().unwrap();
        prop_assert!(points[0].n_eq == 0.0);
        for p in &points {
            prop_assert!((p.p_bar - p.n_eq / n_pop).abs() < 1e-9);
            prop_assert_eq!(p.stable, p.slope < 1.0 / n_pop);
        }
        if model.params().request_size() == 1 {
            let positive = points.iter().filter(|p| p.n_eq > 0.0).count();
            prop_assert!(positive <= 1);
        }
    }

    #[test]
    fn analytic_slope_matches_finite_differences(
        model in mean_field_model(),
        n_frac in 0.0f64..1.0,
    ) {
        let n = n_frac * model.population_size();
        let h = 1e-4;
        let fd = (model.mean_join_probability(n + h) - model.mean_join_probability(n - h))
            / (2.0 * h);
        prop_assert!((model.slope(n) - fd).abs() < 1e-6);
    }

    #[test]
    fn critical_population_matches_dense_scan(
        beta in 0.1f64..1.2,
        s_max in 10usize..120,
        d in 2u32..4,
        rho in 0.3f64..1.0,
    ) {
        let g = zipf_distribution(&ZipfSpec::new(beta, s_max).unwrap());
        let params = ClubParams::new(rho, d).unwrap();
        let model =
            MeanFieldModel::homogeneous(g.clone(), g.clone(), 10.0, 1.0, params).unwrap();
        let crit = model.critical_population().unwrap();

        // Independent evaluation of n / P(n) on a dense log grid.
        let pbar = |n: f64| -> f64 {
            g.probs()
                .iter()
                .map(|&gs| gs * (1.0 - (-n * rho * gs).exp()))
                .sum::<f64>()
                .powi(d as i32)
        };
        let mut best = f64::INFINITY;
        for i in 0..40_000 {
            let n = 1e-2 * (16.0 * i as f64 / 39_999.0).exp();
            let r = n / pbar(n);
            if r < best {
                best = r;
            }
        }
        prop_assert!(
            (crit.population - best).abs() / best < 1e-3,
            "solver {} vs scan {}",
            crit.population,
            best
        );
        prop_assert!(crit.tangency_residual < 1e-6);
    }

    #[test]
    fn analytics_depend_on_the_k_rho_product_only(
        q in distribution(4),
        h in distribution(4),
        rho in 0.1f64..0.5,
        d in 1u32..3,
    ) {
        let make = |k: u64, rho: f64| {
            let peer = PeerProfile::new(k, q.clone(), 1.0, h.clone()).unwrap();
            let pop = Population::new(vec![peer; 5]).unwrap();
            MeanFieldModel::from_population(&pop, ClubParams::new(rho, d).unwrap()).unwrap()
        };
        let a = make(1, rho);
        let b = make(2, rho / 2.0);
        prop_assert!((a.control_parameter() - b.control_parameter()).abs() < 1e-12);
        let fa = a.fixed_points().unwrap();
        let fb = b.fixed_points().unwrap();
        prop_assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            prop_assert!((x.n_eq - y.n_eq).abs() < 1e-9);
        }
    }
}
