use handtrack::eval::dataset::{default_rig, synthesize};
use handtrack::eval::sweep::{sweep, SweepParam};
use handtrack::eval::{
    frame_error, hand_error, success_curve, track_source, GenerateOptions, Scenario, SequenceReport, Stats,
};
use handtrack::scene::{hand, Pose};
use handtrack::tracker::TrackerConfig;
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;

#[test]
fn single_value_sweep_equals_tracking() {
    let seq = synthesize(&GenerateOptions::new(Scenario::SingleHand, 2, 8), &default_rig()).unwrap();
    let config = TrackerConfig {
        particles: 6,
        generations: 4,
        seed: 3,
        ..TrackerConfig::default()
    };
    let rows = sweep(&seq, SweepParam::Beta, &["100".into()], &config, 1).unwrap();
    let direct = track_source(&seq, &config).unwrap().report(&seq).unwrap().unwrap();
    assert_eq!(rows[0].reports[0], direct);
    assert_eq!(rows[0].stats.mean, direct.mean);
}

#[test]
fn grand_mean_of_equal_length_runs() {
    let runs: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 6.0], vec![3.0, 3.0, 3.0], vec![0.5, 9.5, 2.0]];
    let reports: Vec<SequenceReport> = runs
        .iter()
        .map(|r| {
            SequenceReport::new(
                r.iter()
                    .map(|&e| handtrack::eval::FrameError {
                        per_object: vec![e],
                        mean: e,
                    })
                    .collect(),
            )
        })
        .collect();
    let of_means = Stats::of(&reports.iter().map(|r| r.mean).collect::<Vec<_>>()).mean;
    let all: Vec<f64> = runs.concat();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    assert!((of_means - grand).abs() < 1e-12);
}

proptest! {
    #[test]
    fn success_curve_is_monotone(errors in prop::collection::vec(0.0f64..80.0, 0..40)) {
        let mut thresholds: Vec<f64> = (0..30).map(|k| k as f64 * 2.5).collect();
        thresholds.push(f64::INFINITY);
        let curve = success_curve(&errors, &thresholds);
        for w in curve.windows(2) {
            prop_assert!(w[1].1 >= w[0].1);
        }
        if !errors.is_empty() {
            prop_assert_eq!(curve.last().unwrap().1, 1.0);
        }
    }

    #[test]
    fn hand_error_ignores_a_shared_rigid_motion(
        seed in 0u64..1000,
        t in prop::array::uniform3(-500.0f64..500.0),
        r in prop::array::uniform3(-3.0f64..3.0),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let model = hand::builtin_right_hand();
        let (lo, hi) = model.bounds();
        let mut pose = |z: f64| {
            let angles = (7..lo.len()).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
            let q = UnitQuaternion::from_euler_angles(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            Pose::new(Vector3::new(rng.random_range(-50.0..50.0), 0.0, z), q, angles)
        };
        let (a, b) = (pose(600.0), pose(620.0));
        let g = Isometry3::from_parts(Translation3::new(t[0], t[1], t[2]), UnitQuaternion::from_euler_angles(r[0], r[1], r[2]));
        let before = hand_error(&model, &a, &b);
        let after = hand_error(&model, &a.transformed(&g), &b.transformed(&g));
        prop_assert!((before - after).abs() < 1e-9 * before.max(1.0));
    }
}

#[test]
fn scene_error_averages_entries() {
    let seq = synthesize(&GenerateOptions::new(Scenario::TwoHands, 1, 1), &default_rig()).unwrap();
    let truth = seq.truth[0].clone();
    let mut moved = truth.clone();
    moved.entries[0].pose.position.x += 6.0;
    let err = frame_error(&moved, &truth).unwrap();
    assert!((err.per_object[0] - 6.0).abs() < 1e-9);
    assert_eq!(err.per_object[1], 0.0);
    assert!((err.mean - 3.0).abs() < 1e-9);
}
