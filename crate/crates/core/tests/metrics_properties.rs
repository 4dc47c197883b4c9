#[path = "support/oracles.rs"]
mod oracles;

use oracles::brute_metrics;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seaice_core::metrics::{read_confusion_csv, render_report, ConfusionMatrix, CONFUSION_CSV, METRICS_JSON};

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("class {i}")).collect()
}

/// Predictions over `k` classes; some classes may never appear as truth.
fn labelled() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (1usize..7, 1usize..200)
        .prop_flat_map(|(k, n)| (Just(k), prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
}

proptest! {
    #[test]
    fn matches_brute_force_exactly((k, t, p) in labelled()) {
        let cm = ConfusionMatrix::from_labels(&t, &p, names(k)).unwrap();
        let b = brute_metrics(k, &t, &p);
        prop_assert_eq!(cm.total(), t.len() as u64);
        prop_assert_eq!(cm.accuracy().unwrap(), b.accuracy);
        prop_assert_eq!(cm.weighted_f1().unwrap(), b.weighted_f1);
        for (c, m) in cm.per_class().iter().enumerate() {
            prop_assert_eq!(m.precision, b.precision[c]);
            prop_assert_eq!(m.recall, b.recall[c]);
            prop_assert_eq!(m.f1, b.f1[c]);
            prop_assert_eq!(m.support, b.support[c]);
            for (j, &n) in b.counts[c].iter().enumerate() {
                prop_assert_eq!(cm.get(c, j), n);
            }
            prop_assert_eq!(m.recall_undefined, m.support == 0);
        }
    }

    #[test]
    fn algebraic_identities((k, t, p) in labelled()) {
        let cm = ConfusionMatrix::from_labels(&t, &p, names(k)).unwrap();
        let n = cm.total() as f64;
        let per = cm.per_class();
        let via_recall: f64 = per.iter().map(|m| m.support as f64 * m.recall).sum::<f64>() / n;
        prop_assert!((via_recall - cm.accuracy().unwrap()).abs() < 1e-12);
        let w = cm.weighted_f1().unwrap();
        let supported: Vec<f64> = per.iter().filter(|m| m.support > 0).map(|m| m.f1).collect();
        let lo = supported.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = supported.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(w >= lo - 1e-12 && w <= hi + 1e-12);
        for m in &per {
            for r in [m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn relabeling_invariance((k, t, p) in labelled(), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..k).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let t2: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        let a = ConfusionMatrix::from_labels(&t, &p, names(k)).unwrap();
        let b = ConfusionMatrix::from_labels(&t2, &p2, names(k)).unwrap();
        prop_assert_eq!(a.accuracy().unwrap(), b.accuracy().unwrap());
        prop_assert!((a.weighted_f1().unwrap() - b.weighted_f1().unwrap()).abs() < 1e-12);
        let (pa, pb) = (a.per_class(), b.per_class());
        for c in 0..k {
            prop_assert_eq!(pa[c].f1, pb[perm[c]].f1);
            prop_assert_eq!(pa[c].precision, pb[perm[c]].precision);
        }
    }

    #[test]
    fn shards_sum_to_whole((k, t, p) in labelled(), cut in 0usize..200) {
        let cut = cut.min(t.len());
        let mut a = ConfusionMatrix::from_labels(&t[..cut], &p[..cut], names(k)).unwrap();
        let b = ConfusionMatrix::from_labels(&t[cut..], &p[cut..], names(k)).unwrap();
        a.merge(&b).unwrap();
        prop_assert_eq!(a, ConfusionMatrix::from_labels(&t, &p, names(k)).unwrap());
    }
}

#[test]
fn uniform_random_predictions_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let k = 6;
    let n = 20_000;
    let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let acc = ConfusionMatrix::from_labels(&t, &p, names(k))
        .unwrap()
        .accuracy()
        .unwrap();
    // Binomial standard error is about 0.0026; allow four of them.
    assert!((acc - 1.0 / k as f64).abs() < 0.0105, "{acc}");
}

#[test]
fn thousand_random_pairs_count_correctly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..4)).collect();
    let p: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..4)).collect();
    let cm = ConfusionMatrix::from_labels(&t, &p, names(4)).unwrap();
    assert_eq!(cm.total(), 1000);
    for c in 0..4 {
        assert_eq!(cm.support(c), t.iter().filter(|&&x| x == c).count() as u64);
    }
}

#[test]
fn report_files_agree_with_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t: Vec<usize> = (0..300).map(|_| rng.gen_range(0..5)).collect();
    let p: Vec<usize> = t
        .iter()
        .map(|&c| if rng.gen_bool(0.7) { c } else { rng.gen_range(0..5) })
        .collect();
    let cm = ConfusionMatrix::from_labels(&t, &p, names(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    render_report(&cm, &cm.report().unwrap(), dir.path()).unwrap();
    let back = read_confusion_csv(&dir.path().join(CONFUSION_CSV)).unwrap();
    assert_eq!(back, cm);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(METRICS_JSON)).unwrap()).unwrap();
    assert_eq!(
        json["accuracy"].as_f64().unwrap(),
        back.trace() as f64 / back.total() as f64
    );
}
