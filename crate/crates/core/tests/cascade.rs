mod common;

use agm_core::cascade::{fit_cascade_with, out_of_fold_proba, StackingConfig};
use agm_core::data::stratified_split;
use agm_core::seed::{derive, stream};
use agm_core::{
    augment_features, determine_width, fit_cascade, fit_two_layer_stacking, inner_split,
    layer_vote, AgmConfig, Classifier, DefaultFactory, EvalOn, FeatureMode, LearnerSpec, Matrix,
    PcaFit, StopReason, Version, WidthProbeState,
};
use common::*;
use proptest::prelude::*;

fn hist(cascade_acc: &[f64]) -> Vec<usize> {
    cascade_acc.iter().map(|a| (a * VAL_ROWS as f64).round() as usize).collect()
}

#[test]
fn rising_then_falling_keeps_the_peak() {
    let m = run_scripted_depth(&[8, 9, 8, 10], 3);
    assert_eq!(m.acc_history(), &[0.8, 0.9, 0.8]);
    assert_eq!(m.layers().len(), 2);
    assert_eq!(m.stop_reason(), StopReason::Drop);
}

#[test]
fn plateau_exhausts_patience_and_prunes_to_first_layer() {
    let m = run_scripted_depth(&[8, 8, 8, 8, 8, 8], 3);
    assert_eq!(m.layers_grown(), 4);
    assert_eq!(m.layers().len(), 1);
    assert_eq!(m.stop_reason(), StopReason::Patience);
}

#[test]
fn rising_sequence_hits_the_layer_cap() {
    let m = run_scripted_depth(&[7, 8, 9], 3);
    assert_eq!(m.layers().len(), 3);
    assert_eq!(m.stop_reason(), StopReason::Cap);
}

#[test]
fn patience_is_not_refilled_by_improvements() {
    // ties at layers 2, 4 and 6 spend the whole budget of 3
    let m = run_scripted_depth(&[5, 5, 6, 6, 7, 7, 8, 9], 3);
    assert_eq!(m.layers_grown(), 6);
    assert_eq!(m.layers().len(), 5);
}

#[test]
fn stopping_rule_matches_simulation_on_all_short_sequences() {
    for patience in [1, 2, 3] {
        for_each_sequence(4, |seq| {
            let m = run_scripted_depth(seq, patience);
            let (grown, reason) = simulate_depth(seq, patience);
            assert_eq!(m.layers_grown(), grown, "{seq:?} patience {patience}");
            assert_eq!(m.stop_reason(), reason, "{seq:?} patience {patience}");
            assert_eq!(hist(m.acc_history()), seq[..grown], "{seq:?}");
            assert_eq!(m.layers().len(), simulate_kept(seq, grown), "{seq:?}");
        });
    }
}

fn scripted_width(script: &[usize], state: &mut WidthProbeState, global: bool) -> usize {
    let ds = label_dataset();
    let config = AgmConfig {
        max_width: script.len(),
        global_acc_w: global,
        ..scripted_config(Version::V3)
    };
    let split = inner_split(&ds, &config).unwrap();
    let factory = ScriptedFactory::new(scored_spec(), script);
    determine_width(
        &factory,
        split.train.features(),
        split.train.labels(),
        split.holdout.features(),
        split.holdout.labels(),
        2,
        &config,
        state,
        0,
    )
    .unwrap()
}

#[test]
fn width_examples() {
    let mut s = WidthProbeState::default();
    assert_eq!(scripted_width(&[6, 7, 6], &mut s, false), 2);
    assert_eq!(s.best_acc, 0.7);
    assert_eq!(scripted_width(&[5, 5], &mut s, false), 1);
    assert_eq!(scripted_width(&[0, 3], &mut s, false), 1);
    assert_eq!(s.width, 0);
}

#[test]
fn global_width_threshold_carries_over() {
    let mut s = WidthProbeState::default();
    assert_eq!(scripted_width(&[6, 8, 7], &mut s, true), 2);
    // 0.7 no longer beats the carried-over 0.8
    assert_eq!(scripted_width(&[7, 9], &mut s, true), 1);
    assert_eq!(s.width, 0);
    assert_eq!(s.best_acc, 0.8);
}

#[test]
fn width_rule_matches_simulation_on_all_short_sequences() {
    for_each_sequence(4, |seq| {
        let mut s = WidthProbeState::default();
        assert_eq!(scripted_width(seq, &mut s, false), simulate_width(seq, seq.len()), "{seq:?}");
    });
}

#[test]
fn adaptive_cascade_uses_probe_width_and_fixed_versions_do_not() {
    // probe scores 0.3, 0.4 then 0.2: width 2; both base models then score 0.9
    let factory = ScriptedFactory::new(scored_spec(), &[3, 4, 2, 9, 9]);
    let config = AgmConfig {
        max_layers: 1,
        ..scripted_config(Version::V3)
    };
    let m = fit_cascade_with(&factory, &label_dataset(), &config).unwrap();
    assert_eq!(m.widths(), vec![2]);
    assert_eq!(m.acc_history(), &[0.9]);

    for v in [Version::V1, Version::V2] {
        let factory = ScriptedFactory::new(scored_spec(), &[9; 12]);
        let config = AgmConfig {
            fixed_width: 3,
            max_layers: 4,
            ..scripted_config(v)
        };
        let m = fit_cascade_with(&factory, &label_dataset(), &config).unwrap();
        assert!(m.layers().iter().all(|l| l.width() == 3));
    }
}

fn small_config(version: Version, seed: u64) -> AgmConfig {
    AgmConfig {
        base_model_set: vec![
            "random-forest-8".parse().unwrap(),
            "extra-trees-8".parse().unwrap(),
            "gbdt-5".parse().unwrap(),
        ],
        probe_model: "tree-d3".parse().unwrap(),
        val_model: "random-forest-8".parse().unwrap(),
        max_layers: 4,
        max_width: 4,
        seed,
        ..AgmConfig::with_version(version)
    }
}

#[test]
fn v1_never_rotates_and_later_pca_layers_shrink_width_within_range() {
    let ds = blobs(30, 4, 3, 1.5, 11);
    let m = fit_cascade(&ds, &AgmConfig { max_layers: 3, patience: 5, ..small_config(Version::V1, 1) }).unwrap();
    assert!(m.pca_ks().iter().all(Option::is_none));

    let m = fit_cascade(&ds, &AgmConfig { max_layers: 3, patience: 5, ..small_config(Version::V2, 1) }).unwrap();
    for (i, layer) in m.layers().iter().enumerate() {
        match &layer.pca {
            None => assert_eq!(i, 0),
            Some(p) => {
                let w = layer.expected_input_width;
                assert!(p.k() >= w.div_ceil(2) && p.k() <= w, "layer {i}: k {} of {w}", p.k());
            }
        }
    }
}

#[test]
fn consecutive_layer_widths_follow_augmentation_arithmetic() {
    let ds = blobs(25, 5, 3, 1.0, 3);
    for mode in [FeatureMode::Probability, FeatureMode::Label] {
        for version in [Version::V1, Version::V2, Version::V3] {
            let config = AgmConfig {
                feature_mode: mode,
                patience: 5,
                ..small_config(version, 9)
            };
            let m = fit_cascade(&ds, &config).unwrap();
            let block = mode.block_width(3);
            let mut expected = 5;
            for layer in m.layers() {
                assert_eq!(layer.expected_input_width, expected);
                expected = layer.model_input_width() + layer.width() * block;
            }
        }
    }
}

#[test]
fn fitting_is_deterministic_for_a_fixed_seed() {
    let ds = blobs(20, 4, 3, 1.0, 5);
    let a = fit_cascade(&ds, &small_config(Version::V3, 4)).unwrap();
    let b = fit_cascade(&ds, &small_config(Version::V3, 4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_layer_single_model_predicts_like_its_model() {
    let ds = blobs(20, 3, 2, 1.0, 8);
    let config = AgmConfig {
        fixed_width: 1,
        max_layers: 1,
        ..small_config(Version::V1, 2)
    };
    let m = fit_cascade(&ds, &config).unwrap();
    let model = &m.layers()[0].models[0];
    assert_eq!(m.predict(ds.features()).unwrap(), model.predict(ds.features()).unwrap());
    assert_eq!(m.predict_proba(ds.features()).unwrap(), model.predict_proba(ds.features()).unwrap());
}

#[test]
fn model_kinds_do_not_depend_on_width() {
    let ds = blobs(20, 4, 3, 1.0, 6);
    let narrow = fit_cascade(&ds, &AgmConfig { fixed_width: 2, max_layers: 1, ..small_config(Version::V1, 3) }).unwrap();
    let wide = fit_cascade(&ds, &AgmConfig { fixed_width: 5, max_layers: 1, ..small_config(Version::V1, 3) }).unwrap();
    assert_eq!(narrow.layers()[0].kinds[..], wide.layers()[0].kinds[..2]);
}

#[test]
fn fit_seeds_are_distinct_per_model() {
    let factory = ScriptedFactory::new(scored_spec(), &[5; 9]);
    let config = AgmConfig {
        fixed_width: 3,
        max_layers: 3,
        patience: 5,
        ..scripted_config(Version::V1)
    };
    fit_cascade_with(&factory, &label_dataset(), &config).unwrap();
    let seeds = factory.seeds.borrow();
    assert_eq!(seeds.len(), 9);
    assert_eq!(seeds[4], derive(config.seed, stream::MODEL_FIT, (1 << 32) | 1));
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    assert_eq!(unique.len(), 9);
}

fn replay_case(i: u64) -> (agm_core::Dataset, AgmConfig) {
    let versions = [Version::V1, Version::V2, Version::V3];
    let classes = 2 + (i % 3) as usize;
    let ds = blobs(16 + 2 * i as usize, 3 + (i % 4) as usize, classes, 0.8 + 0.1 * i as f64, 100 + i);
    let config = AgmConfig {
        feature_mode: if i % 4 == 3 { FeatureMode::Label } else { FeatureMode::Probability },
        pca_fit: if i % 5 == 2 { PcaFit::Joint } else { PcaFit::Train },
        eval_on: if i % 7 == 6 { EvalOn::Train } else { EvalOn::Val },
        global_acc_w: i % 3 == 1,
        probe_oof_folds: (i % 6 == 5).then_some(3),
        ..small_config(versions[(i % 3) as usize], 1000 + i)
    };
    (ds, config)
}

#[test]
fn prediction_replays_recorded_accuracy() {
    for i in 0..8 {
        let (ds, config) = replay_case(i);
        let m = fit_cascade(&ds, &config).unwrap();
        let split = inner_split(&ds, &config).unwrap();
        let part = match config.eval_on {
            EvalOn::Val => &split.holdout,
            EvalOn::Train => &split.train,
        };
        let pred = m.predict(part.features()).unwrap();
        let last = m.layers().last().unwrap();
        assert_eq!(accuracy(&pred, part.labels()), last.val_accuracy, "case {i}");
    }
}

#[test]
fn augmentation_shapes() {
    let x = Matrix::zeros(4, 3);
    let p = Matrix::zeros(4, 2);
    let l = Matrix::zeros(4, 1);
    assert_eq!(augment_features(&x, &[p.clone(), p], FeatureMode::Probability).unwrap().cols(), 7);
    assert_eq!(augment_features(&x, &[l.clone(), l], FeatureMode::Label).unwrap().cols(), 5);
    assert_eq!(augment_features(&x, &[], FeatureMode::Probability).unwrap(), x);
}

proptest! {
    #[test]
    fn layer_vote_matches_summed_argmax(seed in any::<u64>()) {
        let mut rng = agm_core::seed::rng(seed);
        let blocks: Vec<Matrix> = (0..5).map(|_| {
            let mut m = random_matrix(20, 4, &mut rng);
            for r in 0..20 {
                let row: Vec<f64> = m.row(r).iter().map(|v| v.exp()).collect();
                let s: f64 = row.iter().sum();
                for (c, v) in row.iter().enumerate() {
                    m.set(r, c, v / s);
                }
            }
            m
        }).collect();
        let (labels, mean) = layer_vote(&blocks).unwrap();
        for (r, &label) in labels.iter().enumerate() {
            let sums: Vec<f64> = (0..4).map(|c| blocks.iter().map(|b| b.get(r, c)).sum()).collect();
            let mut best = 0;
            for c in 1..4 {
                if sums[c] > sums[best] {
                    best = c;
                }
            }
            prop_assert_eq!(label, best);
            for (c, s) in sums.iter().enumerate() {
                prop_assert!((mean.get(r, c) - s / 5.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn layer_vote_tie_goes_to_lowest_class() {
    let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
    let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
    let (l, p) = layer_vote(&[a, b]).unwrap();
    assert_eq!(l, vec![0]);
    assert_eq!(p.row(0), &[0.5, 0.5]);
}

#[test]
fn out_of_fold_blocks_cover_each_row_once_and_leak_less() {
    // noisy labels: in-sample trees memorize them, held-out folds cannot
    let mut ds = blobs(40, 3, 2, 0.3, 21);
    let labels: Vec<String> = ds.labels().iter().enumerate()
        .map(|(i, &l)| if i % 3 == 0 { format!("c{}", 1 - l) } else { format!("c{l}") })
        .collect();
    ds = agm_core::Dataset::from_raw_labels(ds.features().clone(), &labels).unwrap();
    let spec: LearnerSpec = "tree".parse().unwrap();
    let oof = out_of_fold_proba(&DefaultFactory, &spec, ds.features(), ds.labels(), 2, 5, 3).unwrap();
    assert_eq!(oof.rows(), ds.n_samples());
    for r in 0..oof.rows() {
        assert!((oof.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let model = agm_core::LearnerFactory::fit(&DefaultFactory, &spec, ds.features(), ds.labels(), 2, 3).unwrap();
    let in_sample = model.predict_proba(ds.features()).unwrap();
    let truth_mass = |p: &Matrix| -> f64 {
        ds.labels().iter().enumerate().map(|(r, &l)| p.get(r, l)).sum::<f64>() / p.rows() as f64
    };
    assert!(truth_mass(&oof) < truth_mass(&in_sample));
    assert_eq!(truth_mass(&in_sample), 1.0);
}

#[test]
fn stacking_is_deterministic_and_predicts_on_the_simplex() {
    let ds = blobs(30, 4, 3, 1.2, 31);
    let split = stratified_split(&ds, 0.2, 0).unwrap();
    let config = StackingConfig {
        base: "random-forest-10".parse().unwrap(),
        seed: 5,
        ..StackingConfig::default()
    };
    let a = fit_two_layer_stacking(&split.train, &config).unwrap();
    let b = fit_two_layer_stacking(&split.train, &config).unwrap();
    let pa = a.predict_proba(split.holdout.features()).unwrap();
    assert_eq!(pa, b.predict_proba(split.holdout.features()).unwrap());
    for r in 0..pa.rows() {
        assert!((pa.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
