use proptest::prelude::*;
use tensor_lsm::tensor::{CategoricalDataset, DenseTensor};

fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
    prop::collection::vec(1usize..=4, 2..=4).prop_flat_map(|dims| {
        let len: usize = dims.iter().product();
        prop::collection::vec(0.0f64..1.0, len).prop_map(move |v| DenseTensor::new(dims.clone(), v).unwrap())
    })
}

fn dataset_strategy() -> impl Strategy<Value = CategoricalDataset> {
    (prop::collection::vec(2usize..=4, 1..=4), 1usize..200).prop_flat_map(|(cards, n)| {
        let cols = cards.len();
        let cells: Vec<BoxedStrategy<u32>> =
            (0..n * cols).map(|i| (0..cards[i % cols] as u32).boxed()).collect();
        cells.prop_map(move |codes| {
            let names = (0..cols).map(|i| format!("X{}", i + 1)).collect();
            CategoricalDataset::from_flat(names, cards.clone(), codes).unwrap()
        })
    })
}

/// Positions of `axes` once the others are summed out in a first pass.
fn relabel(axes: &[usize], dropped: usize) -> Vec<usize> {
    axes.iter().map(|&a| if a > dropped { a - 1 } else { a }).collect()
}

proptest! {
    #[test]
    fn empirical_tables_sum_to_one(data in dataset_strategy()) {
        let all: Vec<usize> = (0..data.n_vars()).collect();
        let t = data.contingency(&all).unwrap();
        let counts: Vec<f64> = t.values().iter().map(|p| p * data.n_rows() as f64).collect();
        prop_assert!(counts.iter().all(|c| (c - c.round()).abs() < 1e-9));
        prop_assert!((t.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginalization_commutes(t in tensor_strategy(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>()) {
        let n = t.n_axes();
        prop_assume!(n >= 3);
        let a = a.index(n);
        let b = b.index(n);
        prop_assume!(a != b);
        let keep_all: Vec<usize> = (0..n).filter(|&x| x != a && x != b).collect();
        let once = t.marginalize(&keep_all).unwrap();
        let first: Vec<usize> = (0..n).filter(|&x| x != a).collect();
        let step = t.marginalize(&first).unwrap();
        let twice = step.marginalize(&relabel(&keep_all, a)).unwrap();
        prop_assert_eq!(once.dims(), twice.dims());
        for (x, y) in once.values().iter().zip(twice.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matricize_inverts_by_permutation(t in tensor_strategy(), mask in 1u32..15) {
        let n = t.n_axes();
        let rows: Vec<usize> = (0..n).filter(|a| mask >> a & 1 == 1).collect();
        prop_assume!(!rows.is_empty() && rows.len() < n);
        let m = t.matricize(&rows).unwrap();
        let mut sorted_m = m.values().to_vec();
        let mut sorted_t = t.values().to_vec();
        sorted_m.sort_by(f64::total_cmp);
        sorted_t.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted_m, sorted_t);

        let mut order = rows.clone();
        order.extend((0..n).filter(|a| !rows.contains(a)));
        let dims: Vec<usize> = order.iter().map(|&a| t.dims()[a]).collect();
        let mut inverse = vec![0; n];
        for (k, &a) in order.iter().enumerate() {
            inverse[a] = k;
        }
        let back = DenseTensor::new(dims, m.values().to_vec()).unwrap().permute(&inverse).unwrap();
        prop_assert_eq!(back.values(), t.values());
    }
}
