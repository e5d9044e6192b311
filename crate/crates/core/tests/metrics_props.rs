use proptest::prelude::*;
use tensor_lsm::discovery::{Cluster, MeasurementModel};
use tensor_lsm::graph::PartialDag;
use tensor_lsm::metrics::{align_structure, match_latents, score_measurement, score_structure, Matching};
use tensor_lsm::sim::{build_spec, Measurement, Structure};

/// Learned clusters from a per-variable label: `None` drops the variable.
fn clusters_from_labels(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let k = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    (0..k)
        .map(|c| (0..labels.len()).filter(|&v| labels[v] == Some(c)).collect::<Vec<_>>())
        .filter(|c| !c.is_empty())
        .collect()
}

fn model(groups: &[Vec<usize>]) -> MeasurementModel {
    MeasurementModel {
        clusters: groups
            .iter()
            .enumerate()
            .map(|(i, g)| Cluster { latent: format!("L{}", i + 1), members: g.clone(), support: 2 })
            .collect(),
    }
}

/// Largest total overlap over every partial injective map from learned to
/// true clusters, by direct enumeration.
fn best_total_overlap(truth: &[Vec<usize>], learned: &[Vec<usize>]) -> usize {
    fn go(l: usize, truth: &[Vec<usize>], learned: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
        if l == learned.len() {
            return 0;
        }
        let mut best = go(l + 1, truth, learned, used);
        for t in 0..truth.len() {
            if !used[t] {
                used[t] = true;
                let ov = learned[l].iter().filter(|x| truth[t].contains(x)).count();
                best = best.max(ov + go(l + 1, truth, learned, used));
                used[t] = false;
            }
        }
        best
    }
    go(0, truth, learned, &mut vec![false; truth.len()])
}

fn labels() -> impl Strategy<Value = Vec<Option<usize>>> {
    prop::collection::vec(prop::option::weighted(0.9, 0usize..6), 12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn corrupted_clusters_match_definition(labels in labels()) {
        let spec = build_spec(Structure::Sm3, Measurement::Mm1, &[2], 3, 0).unwrap();
        let truth = spec.clusters();
        let learned = clusters_from_labels(&labels);
        let assigned: usize = learned.iter().map(Vec::len).sum();
        let best = best_total_overlap(&truth, &learned);

        let ex = score_measurement(&spec, &model(&learned), Matching::Exhaustive);
        prop_assert_eq!(ex.mismeasurement.unwrap().count, assigned - best);
        let m = match_latents(&truth, &learned, Matching::Exhaustive);
        let matched = m.iter().flatten().count();
        prop_assert_eq!(ex.latent_omission.unwrap().count, truth.len() - matched);
        prop_assert_eq!(ex.latent_commission.unwrap().count, learned.len() - matched);

        let greedy = score_measurement(&spec, &model(&learned), Matching::Greedy);
        prop_assert!(greedy.mismeasurement.unwrap().count >= assigned - best);
        for r in [greedy.latent_omission, greedy.latent_commission, greedy.mismeasurement] {
            let v = r.unwrap().value.unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn scores_ignore_learned_label_order(labels in labels(), order in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let spec = build_spec(Structure::Sm3, Measurement::Mm1, &[2], 3, 0).unwrap();
        let learned = clusters_from_labels(&labels);
        let permuted: Vec<Vec<usize>> = order.iter().filter_map(|&i| learned.get(i).cloned()).collect();
        let a = score_measurement(&spec, &model(&learned), Matching::Exhaustive);
        let b = score_measurement(&spec, &model(&permuted), Matching::Exhaustive);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn aligned_structure_ignores_learned_label_order(
        edges in prop::collection::vec((0usize..4, 0usize..4, any::<bool>()), 0..6),
        order in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let names: Vec<String> = (1..=4).map(|i| format!("L{i}")).collect();
        let mut truth = PartialDag::empty(names.clone());
        truth.add_directed(0, 1).unwrap();
        truth.add_directed(2, 1).unwrap();
        truth.add_undirected(2, 3).unwrap();
        // Learned graph over labels A..D; A..D are matched to true 0..3.
        let learned_names: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let mut learned = PartialDag::empty(learned_names.clone());
        for &(a, b, dir) in &edges {
            if a != b && !learned.adjacent(a, b) {
                if dir && a < b {
                    learned.add_directed(a, b).unwrap();
                } else {
                    learned.add_undirected(a, b).unwrap();
                }
            }
        }
        let identity: Vec<Option<usize>> = (0..4).map(Some).collect();
        let base = score_structure(&truth, &align_structure(&learned, &identity, &names).unwrap()).unwrap();

        // Same graph with the learned nodes listed in another order.
        let mut shuffled = PartialDag::empty(order.iter().map(|&i| learned_names[i].clone()).collect());
        let pos = |x: usize| order.iter().position(|&i| i == x).unwrap();
        for &(a, b) in learned.directed_edges() {
            shuffled.add_directed(pos(a), pos(b)).unwrap();
        }
        for &(a, b) in learned.undirected_edges() {
            shuffled.add_undirected(pos(a), pos(b)).unwrap();
        }
        let matching: Vec<Option<usize>> = order.iter().map(|&i| Some(i)).collect();
        let again = score_structure(&truth, &align_structure(&shuffled, &matching, &names).unwrap()).unwrap();
        prop_assert_eq!(base, again);
    }
}

#[test]
fn perfect_recovery_scores_zero() {
    let spec = build_spec(Structure::Collider, Measurement::Mm1, &[2], 3, 0).unwrap();
    let truth = spec.latent_dag().cpdag();
    let r = score_measurement(&spec, &model(&spec.clusters()), Matching::Greedy)
        .merge(score_structure(&truth, &truth).unwrap());
    for (name, v) in r.columns() {
        assert_eq!(v.unwrap().value, Some(0.0), "{name}");
    }
}
