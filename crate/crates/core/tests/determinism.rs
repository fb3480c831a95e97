use mimo_ae::evaluation::{sweep, to_csv_string, EvalConfig, Scenario, ScenarioKind};
use mimo_ae::fronthaul::Precision;

fn small_config(threads: usize, seed: u64) -> EvalConfig {
    let mut cfg = EvalConfig {
        threads: Some(threads),
        ..EvalConfig::default()
    };
    cfg.system.m = 16;
    cfg.system.k = 2;
    cfg.system.master_seed = seed;
    cfg.autoencoder.max_epochs = 10;
    cfg
}

fn scenarios() -> Vec<Scenario> {
    vec![Scenario::full(), Scenario::autoencoder(4), Scenario::array_reduced(4), Scenario::admm(2)]
}

#[test]
fn csv_is_independent_of_thread_count_and_scenario_order() {
    let snrs = [0.0, 10.0];
    let one = to_csv_string(&sweep(&small_config(1, 11), &scenarios(), &snrs, 3).unwrap()).unwrap();
    let mut reversed = scenarios();
    reversed.reverse();
    let three = to_csv_string(&sweep(&small_config(3, 11), &reversed, &snrs, 3).unwrap()).unwrap();
    assert_eq!(one, three);

    let other_seed = to_csv_string(&sweep(&small_config(1, 12), &scenarios(), &snrs, 3).unwrap()).unwrap();
    assert_ne!(one, other_seed);
}

#[test]
fn full_bandwidth_evm_does_not_increase_with_snr() {
    let snrs = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
    let records = sweep(&small_config(1, 5), &[Scenario::full()], &snrs, 50).unwrap();
    assert_eq!(records.len(), snrs.len());
    for pair in records.windows(2) {
        assert!(pair[0].snr_db < pair[1].snr_db);
        assert!(pair[1].evm_percent <= pair[0].evm_percent, "{pair:?}");
    }
}

#[test]
fn wire_precision_changes_only_autoencoder_rows() {
    let snrs = [5.0];
    let f32_rows = sweep(&small_config(1, 2), &scenarios(), &snrs, 2).unwrap();
    let f64_rows = sweep(
        &EvalConfig {
            precision: Precision::F64,
            ..small_config(1, 2)
        },
        &scenarios(),
        &snrs,
        2,
    )
    .unwrap();
    for (a, b) in f32_rows.iter().zip(&f64_rows) {
        assert_eq!(a.scenario, b.scenario);
        if a.scenario.kind != ScenarioKind::AeCentralized {
            assert_eq!(a, b);
        } else {
            assert!((a.evm_percent - b.evm_percent).abs() < 1e-3 * a.evm_percent);
        }
    }
}
