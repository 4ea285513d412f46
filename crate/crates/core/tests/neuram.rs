use neuram::models;
use neuram::neuram::{
    neuram_loss, reduction_errors, train_neuram, Architecture, ExactParabolaArtifact, LatentMaps, NeurAMArtifact,
    SearchConfig, TrainConfig,
};
use neuram::nn::FitConfig;
use proptest::prelude::*;
use std::sync::OnceLock;

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        fit: FitConfig { epochs: 500, learning_rate: 5e-3, ..FitConfig::default() },
        architecture: Architecture::uniform(2, 6),
        search: SearchConfig::disabled(),
    }
}

fn trained() -> &'static NeurAMArtifact {
    static A: OnceLock<NeurAMArtifact> = OnceLock::new();
    A.get_or_init(|| train_neuram(&models::model("q1").unwrap(), 200, &quick_cfg(11)).unwrap())
}

#[test]
fn exact_parabola_reduction_has_zero_loss() {
    let a = ExactParabolaArtifact::new();
    let m = models::model("parabola").unwrap();
    let batch: Vec<(Vec<f64>, f64)> =
        m.sample(10_000, 1).unwrap().into_iter().map(|x| (x.clone(), models::parabola(&x))).collect();
    let loss = neuram_loss(&a.maps, &batch).unwrap();
    assert!(loss.total() < 1e-28, "{loss:?}");
    // straight-line recomputation without the trait
    let mut direct = 0.0;
    for (x, y) in &batch {
        let t = x[0] * x[0] + x[1];
        let (p0, p1) = ((t / 2.0).sqrt(), t / 2.0);
        let tt = p0 * p0 + p1;
        let (q0, q1) = ((tt / 2.0).sqrt(), tt / 2.0);
        direct += (y - tt).powi(2) + (y - t).powi(2) + (p0 - q0).powi(2) + (p1 - q1).powi(2);
    }
    assert!((direct / 1e4 - loss.total()).abs() < 1e-30);
}

#[test]
fn perturbed_parabola_reduction_has_positive_loss() {
    struct Shifted;
    impl LatentMaps for Shifted {
        fn dim(&self) -> usize {
            2
        }
        fn encode(&self, x: &[f64]) -> f64 {
            x[0] * x[0] + x[1] + 0.1
        }
        fn decode(&self, t: f64) -> Vec<f64> {
            vec![(0.5 * t).sqrt(), 0.5 * t]
        }
        fn surrogate(&self, t: f64) -> f64 {
            t
        }
        fn encode_grad(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * x[0], 1.0]
        }
        fn decode_deriv(&self, t: f64) -> Vec<f64> {
            vec![0.25 / (0.5 * t).sqrt(), 0.5]
        }
        fn surrogate_deriv(&self, _t: f64) -> f64 {
            1.0
        }
    }
    let batch = vec![(vec![0.5, 0.5], 0.75)];
    let l = neuram_loss(&Shifted, &batch).unwrap();
    // t = 0.85, D(t) re-encodes to 0.95, D of that re-encodes further apart
    assert!((l.surrogate - 0.01).abs() < 1e-15);
    assert!((l.projected_surrogate - 0.04).abs() < 1e-15);
    assert!(l.reprojection > 0.0);
}

#[test]
fn latent_interval_spans_the_training_encodings() {
    let a = trained();
    let xs = models::model("q1").unwrap().sample(200, 11).unwrap();
    let ts: Vec<f64> = xs.iter().map(|x| a.encode_raw(x).unwrap()).collect();
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((a.latent_interval.lo, a.latent_interval.hi), (lo, hi));
}

#[test]
fn decomposition_identities() {
    let a = trained();
    let m = models::model("q1").unwrap();
    for x in m.sample(50, 99).unwrap() {
        let t = a.encode_raw(&x).unwrap();
        assert_eq!(a.surrogate_eval(&x).unwrap(), a.latent_surrogate(t));
        let p = a.project(&x).unwrap();
        assert_eq!(p, a.decode_raw(t));
        assert!(m.check_domain(&p).is_ok());
    }
    let e = reduction_errors(a, &m, &m.sample(100, 5).unwrap()).unwrap();
    assert!(e.mse_e1 >= 0.0 && e.mae_e2 * e.mae_e2 <= e.mse_e2 * (1.0 + 1e-12));
}

#[test]
fn saved_artifact_round_trips_bitwise() {
    let a = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.json");
    a.save(&path).unwrap();
    let b = NeurAMArtifact::load(&path).unwrap();
    assert_eq!(a, &b);
    for x in models::model("q1").unwrap().sample(20, 3).unwrap() {
        assert_eq!(a.surrogate_eval(&x).unwrap().to_bits(), b.surrogate_eval(&x).unwrap().to_bits());
    }
    let mut broken = a.to_json().unwrap();
    broken.truncate(broken.len() / 2);
    assert!(NeurAMArtifact::from_json(&broken).is_err());
}

#[test]
fn training_is_reproducible_and_seed_dependent() {
    let m = models::model("q3").unwrap();
    let mut cfg = quick_cfg(4);
    cfg.fit.epochs = 50;
    let a = train_neuram(&m, 40, &cfg).unwrap();
    let b = train_neuram(&m, 40, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed = 5;
    assert_ne!(a.maps, train_neuram(&m, 40, &cfg).unwrap().maps);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn out_of_domain_inputs_are_refused(x0 in 1.0001f64..5.0, x1 in -1.0f64..1.0) {
        let a = trained();
        prop_assert!(a.encode_raw(&[x0, x1]).is_err());
        prop_assert!(a.surrogate_eval(&[x1]).is_err());
    }

    #[test]
    fn decoded_points_stay_in_the_box(t in -50.0f64..50.0) {
        let p = trained().decode_raw(t);
        prop_assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
