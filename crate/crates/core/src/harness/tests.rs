use super::*;
use crate::estimator::{BankConfig, EstimatorBank};
use crate::rng;
use crate::trainer::InnerConfig;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;

fn small_bank(d: usize) -> EstimatorBank {
    EstimatorBank::new(
        d,
        &BankConfig {
            hidden: 8,
            steps: 4,
            ..BankConfig::default()
        },
        3,
    )
    .unwrap()
}

fn quick_inner() -> InnerConfig {
    InnerConfig {
        steps: 10,
        ..InnerConfig::default()
    }
}

#[test]
fn table_validates_and_groups() {
    let rows = vec![
        ("b".to_string(), vec![0.1, 0.2]),
        ("a".to_string(), vec![0.3, 0.4]),
        ("b".to_string(), vec![0.5, 0.6]),
    ];
    let t = FeatureTable::new(2, rows.clone()).unwrap();
    assert_eq!(t.labels(), vec!["b", "a"]);
    let g = t.grouped();
    assert_eq!(g[0].1, vec![vec![0.1, 0.2], vec![0.5, 0.6]]);
    assert!(FeatureTable::new(3, rows).is_err());
    assert!(FeatureTable::new(1, vec![(String::new(), vec![0.0])]).is_err());
    assert!(FeatureTable::new(1, vec![("x".into(), vec![f64::NAN])]).is_err());
    assert!(FeatureTable::new(4, vec![]).unwrap().is_empty());
}

#[test]
fn ball_ingestion_round_trips() {
    let c = Curvature::new(-0.5).unwrap();
    let t = FeatureTable::from_ball(2, vec![("a".into(), vec![0.3, -0.4])], c).unwrap();
    let p = &t.points(c)[0].1[0];
    assert!((p.coords()[0] - 0.3).abs() < 1e-14 && (p.coords()[1] + 0.4).abs() < 1e-14);
    assert_eq!(t.curvature(), Some(-0.5));
    assert!(FeatureTable::from_ball(1, vec![("a".into(), vec![2.0])], c).is_err());
}

#[test]
fn confidence_interval() {
    let (m, h) = mean_ci95(&[0.0, 1.0]);
    assert_eq!(m, 0.5);
    assert!((h - 1.96 * (0.5f64 / 2.0).sqrt()).abs() < 1e-15);
    assert_eq!(mean_ci95(&[0.3]), (0.3, 0.0));
}

#[test]
fn single_class_without_spread_is_one_point() {
    let spec = SyntheticTreeSpec {
        branching: vec![1],
        leaves: 1,
        samples_per_class: 5,
        class_spread: 0.0,
        within_spread: 0.0,
        dim: 3,
        ..SyntheticTreeSpec::default()
    };
    let t = generate_tree_data(&spec).unwrap();
    assert_eq!(t.len(), 5);
    for (_, v) in t.rows() {
        assert_eq!(v, &t.rows()[0].1);
    }
}

#[test]
fn generated_points_are_inside_and_reproducible() {
    let spec = SyntheticTreeSpec {
        class_spread: 3.0,
        within_spread: 2.0,
        seed: 4,
        ..SyntheticTreeSpec::default()
    };
    let t = generate_tree_data(&spec).unwrap();
    assert_eq!(t.labels().len(), 8);
    assert_eq!(t.len(), 8 * spec.samples_per_class);
    let c = Curvature::new(spec.curvature).unwrap();
    for (_, pts) in t.points(c) {
        for p in pts {
            assert!(p.norm() < c.radius());
        }
    }
    assert_eq!(t, generate_tree_data(&spec).unwrap());
    assert!(generate_tree_data(&SyntheticTreeSpec { leaves: 9, ..spec.clone() }).is_err());
    assert!(generate_tree_data(&SyntheticTreeSpec { leaves: 0, ..spec.clone() }).is_err());
    assert!(generate_tree_data(&SyntheticTreeSpec { class_spread: -1.0, ..spec }).is_err());
}

#[test]
fn siblings_are_closer_than_cousins() {
    let (mut sib, mut cousin) = ((0.0, 0usize), (0.0, 0usize));
    for seed in 0..100 {
        let spec = SyntheticTreeSpec {
            samples_per_class: 1,
            within_spread: 0.0,
            seed,
            ..SyntheticTreeSpec::default()
        };
        let t = generate_tree_data(&spec).unwrap();
        let c = spec.curvature;
        let protos: Vec<Vec<f64>> = t.rows().iter().map(|(_, v)| raw::expm0(v, c)).collect();
        let per = spec.branching[1];
        for i in 0..protos.len() {
            for j in i + 1..protos.len() {
                let d = raw::distance(&protos[i], &protos[j], c);
                if i / per == j / per {
                    sib = (sib.0 + d, sib.1 + 1);
                } else {
                    cousin = (cousin.0 + d, cousin.1 + 1);
                }
            }
        }
    }
    assert!(sib.0 / (sib.1 as f64) < cousin.0 / (cousin.1 as f64));
}

fn two_far_classes(d: usize) -> FeatureTable {
    let mut rows = Vec::new();
    let mut r = rng::seeded(1);
    for (label, sign) in [("left", -1.0), ("right", 1.0)] {
        for _ in 0..10 {
            let mut v: Vec<f64> = rng::standard_normal(&mut r, d).iter().map(|x| 0.05 * x).collect();
            v[0] += sign * 1.5;
            rows.push((label.to_string(), v));
        }
    }
    FeatureTable::new(d, rows).unwrap()
}

#[test]
fn episode_sampling_is_seeded() {
    let t = two_far_classes(3);
    let spec = EpisodeSpec {
        ways: 2,
        shots: 2,
        queries: 3,
        episodes: 1,
        seed: 9,
    };
    let g = t.grouped();
    let a = sample_episode(&g, &spec, 0).unwrap();
    assert_eq!(a, sample_episode(&g, &spec, 0).unwrap());
    assert_ne!(a, sample_episode(&g, &spec, 1).unwrap());
    assert_eq!(a.support.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![2, 2]);
    assert_eq!(a.targets, vec![0, 0, 0, 1, 1, 1]);
    let too_many = EpisodeSpec { queries: 9, ..spec };
    assert!(matches!(sample_episode(&g, &too_many, 0), Err(Error::InsufficientData(_))));
    assert!(EpisodeSpec { ways: 1, ..spec }.validate().is_err());
    assert!(EpisodeSpec { shots: 0, ..spec }.validate().is_err());
    assert!(EpisodeSpec { queries: 0, ..spec }.validate().is_err());
}

#[test]
fn separated_classes_score_perfectly_in_every_mode() {
    let t = two_far_classes(3);
    let bank = small_bank(3);
    let spec = EpisodeSpec {
        ways: 2,
        shots: 1,
        queries: 5,
        episodes: 10,
        seed: 2,
    };
    for mode in Mode::ALL {
        let m = run_episodes(&bank, &t, &spec, mode, &quick_inner()).unwrap();
        assert_eq!(m.mean_acc, 1.0, "{mode}");
        assert_eq!(m.accuracies.len(), 10);
    }
}

#[test]
fn identical_classes_score_at_chance() {
    let mut r = rng::seeded(5);
    let rows = (0..3)
        .flat_map(|k| (0..40).map(move |i| (k, i)))
        .map(|(k, _)| (format!("k{k}"), rng::standard_normal(&mut r, 2).iter().map(|x| 0.3 * x).collect()))
        .collect();
    let t = FeatureTable::new(2, rows).unwrap();
    let spec = EpisodeSpec {
        ways: 3,
        shots: 2,
        queries: 10,
        episodes: 100,
        seed: 1,
    };
    let m = run_episodes(&small_bank(2), &t, &spec, Mode::NoAug, &quick_inner()).unwrap();
    assert!((m.mean_acc - 1.0 / 3.0).abs() < 2.0 * m.ci95 + 0.02, "{} +- {}", m.mean_acc, m.ci95);
}

#[test]
fn no_aug_never_calls_the_networks() {
    let t = generate_tree_data(&SyntheticTreeSpec {
        dim: 4,
        ..SyntheticTreeSpec::default()
    })
    .unwrap();
    let bank = small_bank(4);
    let spec = EpisodeSpec {
        episodes: 5,
        ..EpisodeSpec::default()
    };
    run_episodes(&bank, &t, &spec, Mode::NoAug, &quick_inner()).unwrap();
    assert_eq!(bank.calls(), 0);
    run_episodes(&bank, &t, &spec, Mode::SeenAug, &quick_inner()).unwrap();
    assert_eq!(bank.calls(), 5);
    let a = run_episodes(&bank, &t, &spec, Mode::DualAug, &quick_inner()).unwrap();
    assert_eq!(bank.calls(), 15);
    assert_eq!(a, run_episodes(&bank, &t, &spec, Mode::DualAug, &quick_inner()).unwrap());
}

#[test]
fn modes_parse() {
    for m in Mode::ALL {
        assert_eq!(m.name().parse::<Mode>().unwrap(), m);
    }
    assert!("both".parse::<Mode>().is_err());
}

fn stage(prefix: &str, offset: f64, d: usize, seed: u64) -> FeatureTable {
    let mut r = rng::seeded(seed);
    let mut rows = Vec::new();
    for k in 0..2 {
        for _ in 0..12 {
            let mut v: Vec<f64> = rng::standard_normal(&mut r, d).iter().map(|x| 0.1 * x).collect();
            v[k] += offset;
            rows.push((format!("{prefix}{k}"), v));
        }
    }
    FeatureTable::new(d, rows).unwrap()
}

#[test]
fn replay_single_stage_trains_on_all_data() {
    let bank = small_bank(3);
    let s = stage("a", 1.0, 3, 1);
    let cfg = ReplayConfig {
        mode: Mode::NoAug,
        inner: quick_inner(),
        ..ReplayConfig::default()
    };
    let out = run_replay_lite(&bank, core::slice::from_ref(&s), &cfg).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].classes, 2);
    assert_eq!(out[0].accuracy, out[0].first_stage_accuracy);
    assert_eq!(out[0].accuracy, 1.0);
}

#[test]
fn replay_runs_over_stages() {
    let bank = small_bank(3);
    let stages = [stage("a", 1.0, 3, 1), stage("b", -1.0, 3, 2)];
    for mode in Mode::ALL {
        let cfg = ReplayConfig {
            mode,
            inner: quick_inner(),
            buffer_per_class: 3,
            ..ReplayConfig::default()
        };
        let out = run_replay_lite(&bank, &stages, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].classes, 4);
        assert!(out.iter().all(|s| (0.0..=1.0).contains(&s.accuracy)));
    }
    let dup = [stage("a", 1.0, 3, 1), stage("a", -1.0, 3, 2)];
    assert!(matches!(
        run_replay_lite(&bank, &dup, &ReplayConfig::default()),
        Err(Error::DuplicateLabel(_))
    ));
}
