use mimo_coord::chanmodel::{dense_drop, derive_seed, iid_channels, pathloss_db, DeploymentSpec};
use mimo_coord::coord::{run, run_from, run_with, init_filters, AlgorithmId, InitPolicy, RunOptions};
use mimo_coord::netmodel::{dlt_objective, sum_rate};
use mimo_coord::{NetworkConfig, Side};
use proptest::prelude::*;

fn cfg(cells: usize, users: usize, m: usize, n: usize, d: usize, snr_db: f64) -> NetworkConfig {
    NetworkConfig::new(cells, users, m, n, d).unwrap().with_noise(10f64.powf(-snr_db / 10.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_update_meets_its_power_budget(
        seed in any::<u64>(),
        algo in prop::sample::select(AlgorithmId::ALL.to_vec()),
        snr in 0.0f64..30.0,
    ) {
        let c = cfg(2, 2, 4, 4, 2, snr).with_powers(2.0, 0.5);
        let ch = iid_channels(&c, seed);
        let (fb, trace) = run(algo, &c, &ch, 3, seed).unwrap();
        for e in &trace.entries {
            prop_assert!(e.filter_norm_dev <= 1e-9);
        }
        prop_assert!(fb.check(&c).is_ok());
    }

    #[test]
    fn guarded_max_dlt_never_decreases(seed in any::<u64>(), snr in 0.0f64..30.0) {
        let c = cfg(3, 2, 4, 4, 2, snr);
        let ch = iid_channels(&c, seed);
        let opts = RunOptions { monotone_guard: true, ..RunOptions::default() };
        let (_, trace) = run_with(AlgorithmId::MaxDlt, &c, &ch, 6, &opts).unwrap();
        for w in trace.entries.windows(2) {
            prop_assert!(w[1].dlt_fwd >= w[0].dlt_fwd - 1e-8 * w[0].dlt_fwd.abs());
        }
    }

    #[test]
    fn forward_and_reverse_bounds_agree(seed in any::<u64>(), p in 0.2f64..5.0, sigma2 in 0.01f64..3.0) {
        let c = cfg(2, 3, 3, 4, 2, 0.0).with_powers(p, p).with_noise(sigma2);
        let ch = iid_channels(&c, seed);
        let fb = init_filters(&c, &ch, InitPolicy::Random, seed).unwrap();
        let f = dlt_objective(&c, &ch, &fb, Side::Forward).unwrap();
        let r = dlt_objective(&c, &ch, &fb, Side::Reverse).unwrap();
        prop_assert!((f - r).abs() <= 1e-9 * f.abs().max(r.abs()));
    }

    #[test]
    fn pathloss_grows_with_distance(a in 1.0f64..500.0, b in 1.0f64..500.0) {
        let spec = DeploymentSpec::dense(4);
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(pathloss_db(near, &spec, 0.0).unwrap() <= pathloss_db(far, &spec, 0.0).unwrap());
    }
}

#[test]
fn parallel_phases_reproduce_serial_trace() {
    let c = cfg(3, 2, 4, 4, 2, 15.0);
    let ch = iid_channels(&c, 11);
    for algo in [AlgorithmId::Aims, AlgorithmId::AimsRa, AlgorithmId::MaxDlt, AlgorithmId::MaxSinr] {
        let serial = run_with(algo, &c, &ch, 4, &RunOptions::default()).unwrap();
        let parallel = run_with(algo, &c, &ch, 4, &RunOptions { parallel: true, ..RunOptions::default() }).unwrap();
        assert_eq!(serial.0, parallel.0, "{algo}");
        for (a, b) in serial.1.entries.iter().zip(&parallel.1.entries) {
            assert_eq!(a.sum_rate.to_bits(), b.sum_rate.to_bits());
            assert_eq!(a.dlt_fwd.to_bits(), b.dlt_fwd.to_bits());
        }
    }
}

#[test]
fn trace_prefix_matches_shorter_run() {
    let c = cfg(2, 2, 4, 4, 2, 20.0);
    let ch = iid_channels(&c, 3);
    let (_, long) = run(AlgorithmId::MaxDlt, &c, &ch, 6, 0).unwrap();
    let (fb, short) = run(AlgorithmId::MaxDlt, &c, &ch, 3, 0).unwrap();
    assert_eq!(long.entries.len(), 7);
    assert_eq!(long.entries[3].sum_rate.to_bits(), short.last().sum_rate.to_bits());
    assert_eq!(sum_rate(&c, &ch, &fb).unwrap().to_bits(), short.last().sum_rate.to_bits());
}

#[test]
fn resuming_from_a_bank_continues_the_run() {
    let c = cfg(3, 1, 4, 4, 2, 10.0);
    let ch = iid_channels(&c, 8);
    let (mid, _) = run(AlgorithmId::Aims, &c, &ch, 2, 0).unwrap();
    let (resumed, _) = run_from(AlgorithmId::Aims, &c, &ch, 2, mid, &RunOptions::default()).unwrap();
    let (direct, _) = run(AlgorithmId::Aims, &c, &ch, 4, 0).unwrap();
    assert_eq!(resumed, direct);
}

#[test]
fn coordination_beats_uncoordinated_in_dense_drop() {
    let base = NetworkConfig::new(4, 3, 4, 8, 2).unwrap();
    let spec = DeploymentSpec::dense(4);
    let (ch, geo) = dense_drop(&base, &spec, derive_seed(9, 0, 0)).unwrap();
    assert_eq!(geo.bs_positions.len(), 4);
    let c = base.with_noise(mimo_coord::chanmodel::calibrate_noise(&ch, &NetworkConfig::new(4, 3, 4, 8, 2).unwrap(), 19.0));
    let (_, coord) = run(AlgorithmId::MaxDlt, &c, &ch, 3, 0).unwrap();
    let (_, unc) = run(AlgorithmId::Uncoordinated, &c, &ch, 3, 0).unwrap();
    assert!(coord.last().sum_rate > unc.last().sum_rate);
    assert_eq!(unc.entries.len(), 1);
}
