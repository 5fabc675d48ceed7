use proptest::prelude::*;
use skd_core::autodiff::Tensor;
use skd_core::data::{generate_synthetic, load_csv, write_csv, BatchIterator, Split, SyntheticSpec};
use skd_core::metrics::{average_agreement, logit_delta_stats, AgreementInput};

fn spec(seed: u64, s: usize, c: usize, n: usize) -> SyntheticSpec {
    SyntheticSpec {
        superclasses: s,
        classes_per_superclass: c,
        features: 3,
        samples_per_class: n,
        seed,
        ..Default::default()
    }
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-20.0f64..20.0, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn epochs_partition_the_dataset(seed in 0u64..1000, n in 1usize..12, bs in 1usize..20) {
        let (train, _) = generate_synthetic(&spec(seed, 2, 2, n)).unwrap();
        let mut it = BatchIterator::new(&train, bs, seed).unwrap();
        for _ in 0..2 {
            let mut seen: Vec<usize> = it.epoch_batches().into_iter().flat_map(|b| b.indices).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..train.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn batch_order_is_seed_determined(seed in 0u64..1000) {
        let (train, _) = generate_synthetic(&spec(0, 2, 2, 10)).unwrap();
        let order = |s| BatchIterator::new(&train, 7, s).unwrap().epoch_batches().into_iter().flat_map(|b| b.indices).collect::<Vec<_>>();
        prop_assert_eq!(order(seed), order(seed));
    }

    #[test]
    fn csv_round_trip(seed in 0u64..1000, n in 1usize..8) {
        let (train, _) = generate_synthetic(&spec(seed, 2, 3, n)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_csv(&train, &p).unwrap();
        let back = load_csv(&p, train.classes(), Split::Train).unwrap();
        prop_assert_eq!(back.labels(), train.labels());
        prop_assert_eq!(back.superclasses(), train.superclasses());
        prop_assert!(back.features().max_abs_diff(train.features()) < 1e-9);
    }

    #[test]
    fn agreement_is_symmetric_and_bounded(a in matrix(5, 4), b in matrix(5, 4)) {
        let ab = average_agreement(&AgreementInput::from_logits(&a, &b).unwrap());
        let ba = average_agreement(&AgreementInput::from_logits(&b, &a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(average_agreement(&AgreementInput::from_logits(&a, &a).unwrap()), 1.0);
    }

    #[test]
    fn delta_means_recombine_to_the_grand_mean(d in matrix(6, 5), labels in prop::collection::vec(0usize..5, 6)) {
        let s = logit_delta_stats(&d, &labels).unwrap();
        let grand = d.data().iter().sum::<f64>() / 30.0;
        let recombined = (s.target_mean + 4.0 * s.others_mean) / 5.0;
        prop_assert!((grand - recombined).abs() < 1e-12);
        prop_assert_eq!(s.count, 6);
    }
}
