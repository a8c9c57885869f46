//! Randomized checks of the environment, metrics and oracle invariants.

use evcharge::env::{EvProfile, PriceCoefficients, PriceModel, Scenario};
use evcharge::marl::{evaluate, init_agents, TrainConfig};
use evcharge::metrics::{aggregate, par};
use evcharge::oracle::{check_feasible, solve, verify_optimal, OracleError, OracleInstance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn default_prices() -> PriceModel {
    Scenario::default().price_model().unwrap()
}

proptest! {
    #[test]
    fn price_is_convex(l1 in 0.0f64..200.0, l2 in 0.0f64..200.0, theta in 0.001f64..0.999, hour in 0usize..24) {
        prop_assume!((l1 - l2).abs() > 1e-3);
        let m = default_prices();
        let mid = m.price(theta * l1 + (1.0 - theta) * l2, hour).unwrap();
        let chord = theta * m.price(l1, hour).unwrap() + (1.0 - theta) * m.price(l2, hour).unwrap();
        prop_assert!(mid < chord);
    }

    #[test]
    fn battery_bounded_monotone_and_masked(seed in any::<u64>(), agents in 1usize..5) {
        let s = Scenario { agents, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profiles = s.episode_profiles(&mut rng).unwrap();
        let net = s.network(profiles.clone()).unwrap();
        let (mut state, _) = net.reset();
        loop {
            let actions: Vec<f64> = profiles.iter().map(|p| rng.gen_range(0.0..=p.max_rate)).collect();
            let out = net.step(&state, &actions).unwrap();
            let plugged_sum: f64 = profiles
                .iter()
                .zip(&actions)
                .filter(|(p, _)| p.is_plugged(state.hour))
                .map(|(_, a)| a)
                .sum();
            prop_assert!((out.total_demand - plugged_sum).abs() <= 1e-12 * plugged_sum.max(1.0));
            for (i, p) in profiles.iter().enumerate() {
                let b = out.state.batteries[i];
                prop_assert!(b >= 0.0 && b <= p.capacity);
                prop_assert!(b >= state.batteries[i]);
            }
            state = out.state;
            if out.done {
                break;
            }
        }
    }

    #[test]
    fn traces_are_deterministic(seed in any::<u64>()) {
        let s = Scenario::default();
        let run = || {
            let profiles = s.episode_profiles(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let net = s.network(profiles).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            net.rollout(|_, _| Ok(rng.gen_range(0.0..=10.0))).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn par_at_least_one_and_one_only_when_constant(
        series in proptest::collection::vec(0.0f64..100.0, 1..48),
    ) {
        prop_assume!(series.iter().any(|&v| v > 0.0));
        let p = par(&series).unwrap();
        prop_assert!(p >= 1.0 - 1e-12);
        let constant = series.iter().all(|&v| v == series[0]);
        if !constant {
            prop_assert!(p > 1.0);
        }
    }

    #[test]
    fn constant_series_par_is_one(v in 1e-6f64..1e6, len in 1usize..48) {
        prop_assert_eq!(par(&vec![v; len]).unwrap(), 1.0);
    }
}

#[test]
fn report_bills_cover_network_cost() {
    let s = Scenario::default();
    let agents = init_agents(&s, &TrainConfig::default()).unwrap();
    let r = evaluate(&agents, &s, 5, 3, 0.05).unwrap();
    let kappa = s.price_model().unwrap().kappa();
    let billed: f64 = r.per_agent_cost.iter().sum();
    assert!((billed - kappa * r.total_network_cost).abs() <= 1e-9 * r.total_network_cost);
}

#[test]
fn aggregate_of_copies_is_the_report() {
    let s = Scenario::default();
    let agents = init_agents(&s, &TrainConfig::default()).unwrap();
    let r = evaluate(&agents, &s, 2, 0, 0.05).unwrap();
    let agg = aggregate(&vec![r.clone(); 4]).unwrap();
    assert_eq!(agg.runs, 4);
    assert_eq!(agg.par.std, 0.0);
    assert!((agg.par.mean - r.par).abs() <= 1e-12 * r.par);
    assert!((agg.network_cost.mean - r.total_network_cost).abs() <= 1e-12 * r.total_network_cost);
    assert!(agg.per_agent_cost.iter().all(|f| f.std == 0.0));
}

fn tiny_instance(rng: &mut ChaCha8Rng) -> OracleInstance {
    let horizon = rng.gen_range(1..=3);
    let agents = rng.gen_range(1..=2);
    let profiles = (0..agents)
        .map(|_| {
            let arrival = rng.gen_range(0..horizon);
            let departure = rng.gen_range(arrival + 1..=horizon);
            let b0 = rng.gen_range(0.0..10.0);
            EvProfile {
                arrival_hour: arrival,
                departure_hour: departure,
                battery_at_arrival: b0,
                expected_battery: b0 + rng.gen_range(0.0..15.0),
                capacity: 40.0,
                efficiency: rng.gen_range(0.8..=1.0),
                max_rate: 10.0,
            }
        })
        .collect();
    let coeffs = (0..horizon)
        .map(|_| PriceCoefficients::new(rng.gen_range(0.001..0.05), rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.05)))
        .collect();
    OracleInstance::new(profiles, PriceModel::new(coeffs, 1.0).unwrap(), horizon, 1.0, vec![0.0, 5.0, 10.0]).unwrap()
}

#[test]
fn oracle_certificate_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut solved = 0;
    for _ in 0..200 {
        let inst = tiny_instance(&mut rng);
        match solve(&inst) {
            Ok(sol) => {
                assert!(check_feasible(&sol.schedule, &inst).unwrap());
                assert!(verify_optimal(&inst, &sol).unwrap());
                let again = solve(&inst).unwrap();
                assert_eq!((&again.schedule, again.cost.to_bits(), again.par.to_bits()), (&sol.schedule, sol.cost.to_bits(), sol.par.to_bits()));
                solved += 1;
            }
            Err(OracleError::Infeasible) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(solved > 100);
}

#[test]
fn symmetric_instances_are_flat_to_grid_resolution() {
    for (agents, hours, need) in [(2, 3, 10.0), (2, 3, 15.0), (3, 2, 10.0), (2, 2, 5.0)] {
        let p = EvProfile {
            arrival_hour: 0,
            departure_hour: hours,
            battery_at_arrival: 0.0,
            expected_battery: need,
            capacity: 50.0,
            efficiency: 1.0,
            max_rate: 10.0,
        };
        let prices = PriceModel::uniform(hours, PriceCoefficients::new(0.01, 0.05, 0.01), 1.0).unwrap();
        let inst = OracleInstance::new(vec![p; agents], prices, hours, 1.0, vec![0.0, 5.0, 10.0]).unwrap();
        let sol = solve(&inst).unwrap();
        // Smallest achievable spread of a total load split into multiples
        // of 5 kW across the hours.
        let total: f64 = sol.loads.iter().sum();
        let units = (total / 5.0).round() as usize;
        let min_spread = if units % hours == 0 { 0.0 } else { 5.0 };
        let max = sol.loads.iter().cloned().fold(f64::MIN, f64::max);
        let min = sol.loads.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(max - min, min_spread, "{agents} agents over {hours} hours: loads {:?}", sol.loads);
    }
}
