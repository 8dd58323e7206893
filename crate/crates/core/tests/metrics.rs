use hashreid::hamming::{pack_codes, rank_gallery, CodeMatrix, RankedList};
use hashreid::metrics::{average_precision, cmc_curve, evaluate, EvalOptions};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn list(q: usize, indices: Vec<usize>) -> RankedList {
    RankedList {
        query_index: q,
        distances: vec![0; indices.len()],
        indices,
    }
}

fn codes(rows: &[&[i8]], labels: Vec<u32>) -> CodeMatrix {
    let k = rows[0].len();
    pack_codes(&rows.concat(), k, labels).unwrap()
}

#[test]
fn ap_fixtures() {
    let ap = average_precision(&list(0, vec![0, 1, 2]), 1, &[1, 0, 1]).unwrap();
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    for r in 1..=6 {
        let mut labels = vec![0; 6];
        labels[r - 1] = 1;
        let ap = average_precision(&list(0, (0..6).collect()), 1, &labels).unwrap();
        assert!((ap - 1.0 / r as f64).abs() < 1e-15);
    }
    assert_eq!(average_precision(&list(0, vec![0, 1]), 1, &[1, 1]), Some(1.0));
}

#[test]
fn cmc_fixtures() {
    let rankings = [list(0, vec![0, 1, 2]), list(1, vec![1, 0, 2])];
    assert_eq!(cmc_curve(&rankings, &[5, 6], &[5, 9, 6], 3), vec![0.5, 0.5, 1.0]);
    let rankings = [list(0, vec![0, 1]), list(1, vec![1, 0])];
    assert_eq!(cmc_curve(&rankings, &[5, 6], &[5, 6], 4), vec![1.0; 4]);
}

#[test]
fn self_retrieval_fixture() {
    // Four distinct codes, two per label; self-matches excluded.
    let set = codes(&[&[1, 1, 1], &[1, 1, -1], &[-1, -1, -1], &[1, -1, -1]], vec![0, 1, 0, 1]);
    let report = evaluate(
        &set,
        &set,
        3,
        EvalOptions {
            exclude_self: true,
            threads: 1,
        },
    )
    .unwrap();
    // Hand enumeration of the rankings after removing each query itself:
    // q0 -> [1(1), 3(2), 2(3)]: match 2 at rank 3
    // q1 -> [0(1), 3(1), 2(2)]: match 3 at rank 2
    // q2 -> [3(1), 1(2), 0(3)]: match 0 at rank 3
    // q3 -> [1(1), 2(1), 0(2)]: match 1 at rank 1
    let expected = (1.0 / 3.0 + 1.0 / 2.0 + 1.0 / 3.0 + 1.0) / 4.0;
    assert!((report.map - expected).abs() < 1e-15, "{report:?}");
    assert_eq!(report.cmc, vec![0.25, 0.5, 1.0]);
    assert_eq!((report.num_queries, report.num_queries_skipped), (4, 0));
}

#[test]
fn all_relevant_gallery() {
    let q = codes(&[&[1, -1]], vec![7]);
    let g = codes(&[&[1, 1], &[-1, -1], &[1, -1]], vec![7, 7, 7]);
    let r = evaluate(&q, &g, 3, EvalOptions::default()).unwrap();
    assert_eq!((r.map, r.cmc.clone()), (1.0, vec![1.0; 3]));
}

#[test]
fn empty_inputs_are_rejected() {
    let g = codes(&[&[1, 1]], vec![0]);
    let empty = CodeMatrix::from_packed(2, vec![], vec![]).unwrap();
    assert!(evaluate(&empty, &g, 1, EvalOptions::default()).is_err());
    assert!(evaluate(&g, &empty, 1, EvalOptions::default()).is_err());
}

#[test]
fn random_ranking_map_matches_the_harmonic_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 30;
    let mut labels = vec![0u32; n];
    labels[7] = 1;
    let mut order: Vec<usize> = (0..n).collect();
    let trials = 10_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        order.shuffle(&mut rng);
        let ap = average_precision(&list(0, order.clone()), 1, &labels).unwrap();
        sum += ap;
        sum_sq += ap * ap;
    }
    let mean = sum / trials as f64;
    let se = ((sum_sq / trials as f64 - mean * mean) / trials as f64).sqrt();
    let expected = (1..=n).map(|i| 1.0 / i as f64).sum::<f64>() / n as f64;
    assert!((mean - expected).abs() <= 3.0 * se, "{mean} vs {expected} (se {se})");
}

proptest! {
    #[test]
    fn gallery_order_does_not_change_the_report(seed in any::<u64>()) {
        // Item i sits at distance i from the query, so the ranking has no ties
        // and only depends on the codes, never on gallery positions.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, n) = (32, 25);
        let query: Vec<i8> = (0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let mut flat = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut bits: Vec<usize> = (0..k).collect();
            bits.shuffle(&mut rng);
            let mut item = query.clone();
            for &b in &bits[..i] {
                item[b] = -item[b];
            }
            flat.extend(item);
        }
        let glabels: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let queries = pack_codes(&query, k, vec![rng.random_range(0..4)]).unwrap();
        let gallery = pack_codes(&flat, k, glabels.clone()).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pflat: Vec<i8> = perm.iter().flat_map(|&i| flat[i * k..(i + 1) * k].to_vec()).collect();
        let shuffled = pack_codes(&pflat, k, perm.iter().map(|&i| glabels[i]).collect()).unwrap();
        let a = evaluate(&queries, &gallery, 10, EvalOptions::default());
        let b = evaluate(&queries, &shuffled, 10, EvalOptions::default());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.map - b.map).abs() < 1e-12);
                prop_assert_eq!(a.cmc, b.cmc);
                prop_assert_eq!(a.num_queries_skipped, b.num_queries_skipped);
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn cmc_is_monotone_and_bounds_single_relevant_map(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let flat: Vec<i8> = (0..(n + 1) * 5).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let mut glabels = vec![0u32; n];
        glabels[rng.random_range(0..n)] = 1;
        let gallery = pack_codes(&flat[5..], 5, glabels).unwrap();
        let q = pack_codes(&flat[..5], 5, vec![1]).unwrap();
        let r = evaluate(&q, &gallery, n, EvalOptions::default()).unwrap();
        prop_assert!(r.cmc.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.map <= r.cmc[n - 1]);
        let ranked = rank_gallery(q.item(0), &gallery, None).unwrap();
        prop_assert_eq!(ranked.indices.len(), n);
    }
}
