//! Scratch throughput probe. Run with `--ignored --nocapture`.

use std::time::Instant;

use sps_core::datagen::{build_test_dataset, build_train_dataset, DatasetSpec};
use sps_core::sps::train::accuracy_on;
use sps_core::sps::{train, SpsConfig, Variant};

#[test]
#[ignore]
fn accuracy_vs_epochs() {
    let spec = DatasetSpec::new(25, 20240501);
    let train_set = build_train_dataset(&spec).unwrap();
    let test_set = build_test_dataset(&spec).unwrap();
    println!("train samples {}  test samples {}", train_set.n_samples(), test_set.n_samples());
    let all_test: Vec<usize> = (0..test_set.n_samples()).collect();
    let hidden: Vec<usize> = (0..test_set.n_samples())
        .filter(|&i| test_set.samples[i].flags.target_hidden)
        .collect();

    for (variant, seed) in [(Variant::Bel, 1u64), (Variant::NoBel, 1u64)] {
        for epochs in [8usize, 16, 24] {
            let mut cfg = SpsConfig::new(variant, 0.001, seed);
            cfg.max_epochs = epochs;
            cfg.early_stop_patience = 1000;
            let t = Instant::now();
            let (mut model, _) = train(&train_set, &cfg).unwrap();
            let global = accuracy_on(&mut model, &test_set, &all_test).unwrap();
            let hid = accuracy_on(&mut model, &test_set, &hidden).unwrap();
            println!(
                "{:6} epochs={:2}  global={:.2}  hidden={:.2}  ({:.0?}s)",
                variant.name(),
                epochs,
                global,
                hid,
                t.elapsed()
            );
        }
    }
}
