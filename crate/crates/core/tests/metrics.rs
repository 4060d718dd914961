use mage_core::eval::{confusion, metrics_from_confusion, MetricsRecord};
use proptest::prelude::*;

fn pairs() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..5).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 1..60)))
}

fn metrics(k: usize, pairs: &[(usize, usize)]) -> MetricsRecord {
    let (truth, predicted): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    metrics_from_confusion(&confusion(&truth, &predicted, k).unwrap()).unwrap()
}

fn close(a: MetricsRecord, b: MetricsRecord) -> bool {
    [
        (a.accuracy, b.accuracy),
        (a.precision, b.precision),
        (a.recall, b.recall),
        (a.f1, b.f1),
    ]
    .iter()
    .all(|(x, y)| (x - y).abs() < 1e-12)
}

proptest! {
    #[test]
    fn metrics_ignore_sample_order((k, data) in pairs(), seed in any::<u64>()) {
        let mut shuffled = data.clone();
        mage_core::math::Rng::new(seed).shuffle(&mut shuffled);
        prop_assert!(close(metrics(k, &data), metrics(k, &shuffled)));
    }

    #[test]
    fn metrics_ignore_consistent_relabeling((k, data) in pairs(), seed in any::<u64>()) {
        let relabel = mage_core::math::Rng::new(seed).permutation(k);
        let renamed: Vec<(usize, usize)> = data.iter().map(|&(t, p)| (relabel[t], relabel[p])).collect();
        let (a, b) = (metrics(k, &data), metrics(k, &renamed));
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert!(close(a, b));
    }

    #[test]
    fn metrics_lie_in_the_unit_interval((k, data) in pairs()) {
        let m = metrics(k, &data);
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
