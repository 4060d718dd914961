use std::collections::BTreeSet;

use mage_core::data::{
    load_records, make_shuffle_plan, read_binary, read_records, stratified_split_indices, write_binary, write_records,
    Dataset, EmbeddingRecord, MinMaxScaler, ShufflePlan,
};
use mage_core::math::{Matrix, Rng};
use proptest::prelude::*;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..6).prop_flat_map(|dim| {
        let record = (
            "[a-z0-9_-]{1,12}",
            prop::sample::select(vec!["kin", "swa", "tso", "ha", "yo"]),
            0usize..3,
            prop::collection::vec(-100.0f32..100.0, dim),
        )
            .prop_map(|(id, lang, label, vec)| EmbeddingRecord {
                id,
                language: lang.to_string(),
                label,
                vector: vec.into_iter().map(f64::from).collect(),
            });
        prop::collection::vec(record, 0..20).prop_map(|records| Dataset::from_records(records).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_and_binary_round_trip_exactly(data in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let (jsonl, bin) = (dir.path().join("d.jsonl"), dir.path().join("d.bin"));
        write_records(&data, &jsonl).unwrap();
        write_binary(&data, &bin).unwrap();
        for back in [read_records(&jsonl), read_binary(&bin), load_records(&bin), load_records(&jsonl)] {
            let back = back.unwrap();
            prop_assert_eq!(back.records(), data.records());
        }
    }

    #[test]
    fn double_precision_vectors_survive_within_single_precision(
        values in prop::collection::vec(-8.0f64..8.0, 1..64),
    ) {
        let record = EmbeddingRecord { id: "a".into(), language: "kin".into(), label: 1, vector: values.clone() };
        let data = Dataset::from_records(vec![record]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_records(&data, &path).unwrap();
        let back = read_records(&path).unwrap();
        for (a, b) in back.records()[0].vector.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn scaler_maps_fit_data_into_unit_box_and_inverts(
        seed in any::<u64>(),
        rows in 2usize..30,
        cols in 1usize..8,
    ) {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| 10.0 * rng.normal()).collect()).unwrap();
        let scaler = MinMaxScaler::fit(&x).unwrap();
        let scaled = scaler.apply(&x).unwrap();
        prop_assert!(scaled.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let back = scaler.invert(&scaled).unwrap();
        prop_assert!(back.sub(&x).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn stratified_split_partitions_every_class(
        seed in any::<u64>(),
        counts in prop::collection::vec(2usize..40, 1..4),
        fraction in 0.05f64..0.95,
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let (a, b) = stratified_split_indices(&labels, fraction, &mut Rng::new(seed)).unwrap();
        let all: BTreeSet<usize> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(all.len(), labels.len());
        prop_assert_eq!(a.len() + b.len(), labels.len());
        for (class, &n) in counts.iter().enumerate() {
            let in_b = b.iter().filter(|&&i| labels[i] == class).count();
            let expected = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(in_b, expected);
        }
        let again = stratified_split_indices(&labels, fraction, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!((a, b), again);
    }

    #[test]
    fn shuffle_plan_orders_are_permutations(
        base_seed in any::<u64>(),
        n_shuffles in 1usize..5,
        n_iterations in 1usize..5,
        len in 1usize..50,
    ) {
        let plan = ShufflePlan { n_shuffles, n_iterations, base_seed };
        let runs = make_shuffle_plan(&plan, len).unwrap();
        prop_assert_eq!(runs.len(), n_shuffles * n_iterations);
        for run in &runs {
            let mut sorted = run.order.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..len).collect::<Vec<_>>());
        }
        prop_assert_eq!(runs, make_shuffle_plan(&plan, len).unwrap());
    }
}

#[test]
fn record_order_is_preserved() {
    let records: Vec<EmbeddingRecord> = (0..5)
        .rev()
        .map(|i| EmbeddingRecord {
            id: format!("r{i}"),
            language: "swa".into(),
            label: i % 3,
            vector: vec![i as f64; 3],
        })
        .collect();
    let data = Dataset::from_records(records).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    write_records(&data, &path).unwrap();
    assert_eq!(read_records(&path).unwrap().ids(), ["r4", "r3", "r2", "r1", "r0"]);
}
