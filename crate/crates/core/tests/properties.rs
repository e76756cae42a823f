//! Randomized invariants over the numeric and metric kernels.

use proptest::prelude::*;

use kgcoder::entropy::{shannon_entropy, unigram_distribution};
use kgcoder::ingest::TokenSequence;
use kgcoder::metrics::{f1_scores, precision_recall_at_k};
use kgcoder::Matrix64;

fn matrix_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix64> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-50.0..50.0f64, r * c)
            .prop_map(move |data| Matrix64::from_vec(r, c, data).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(m in matrix_strategy(6, 8)) {
        let s = m.row_softmax();
        for r in 0..s.rows() {
            let sum: f64 = s.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for &v in s.row(r) {
                prop_assert!(v > 0.0 && v <= 1.0);
            }
        }
    }

    #[test]
    fn transpose_is_involutive(m in matrix_strategy(6, 8)) {
        prop_assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn entropy_bounded_and_order_free(
        tokens in proptest::collection::vec(0..12u8, 1..120)
    ) {
        let words: Vec<String> = tokens.iter().map(|t| format!("w{t}")).collect();
        let support = {
            let mut s = words.clone();
            s.sort();
            s.dedup();
            s.len()
        };
        let h = shannon_entropy(
            &unigram_distribution::<f64>(&TokenSequence::from_tokens(words.clone())).unwrap(),
        );
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (support as f64).log2() + 1e-12);

        let mut reversed = words;
        reversed.reverse();
        let h_rev = shannon_entropy(
            &unigram_distribution::<f64>(&TokenSequence::from_tokens(reversed)).unwrap(),
        );
        prop_assert!((h - h_rev).abs() < 1e-12);
    }

    #[test]
    fn f1_bounds_and_perfection(
        truth in proptest::collection::vec(
            proptest::collection::vec(any::<bool>(), 5), 1..20
        )
    ) {
        let (macro_f1, micro_f1) = f1_scores(&truth, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&macro_f1));
        // self-prediction is perfect unless a label never occurs
        prop_assert!(micro_f1 == 1.0 || truth.iter().all(|r| r.iter().all(|&v| !v)));
    }

    #[test]
    fn precision_at_k_bounded(
        probs in proptest::collection::vec(
            proptest::collection::vec(0.0..1.0f64, 6), 1..15
        ),
        k in 1..=6usize,
    ) {
        let truth: Vec<Vec<bool>> = probs
            .iter()
            .map(|row| row.iter().map(|&p| p > 0.5).collect())
            .collect();
        let (p, r) = precision_recall_at_k(&truth, &probs, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0).contains(&r));
    }
}
