//! Ranking metrics for link prediction.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Scores of held-out true edges and of sampled non-edges.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredPairs {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkMetrics {
    pub auc: f64,
    pub ap: f64,
}

fn check(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidGraph("ranking metrics need at least one positive and one negative".into()));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::NonFinite { what: "ranking scores".into() });
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative, ties ½.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Midrank sum of positives (1-based ranks).
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Mean precision at the rank of each positive, in descending score order.
/// Ties keep input order, positives before negatives.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, &(_, is_pos)) in all.iter().enumerate() {
        if is_pos {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(total / pos.len() as f64)
}

pub fn evaluate(pairs: &ScoredPairs) -> Result<LinkMetrics> {
    Ok(LinkMetrics { auc: auc(&pairs.pos, &pairs.neg)?, ap: average_precision(&pairs.pos, &pairs.neg)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut u = 0.0;
        for p in pos {
            for n in neg {
                u += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        u / (pos.len() * neg.len()) as f64
    }

    /// Precision at each positive, positives placed first among equal scores.
    fn brute_ap(pos: &[f64], neg: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, p) in pos.iter().enumerate() {
            let above_pos = pos.iter().enumerate().filter(|(j, q)| *q > p || (*q == p && *j <= i)).count();
            let above_neg = neg.iter().filter(|q| *q > p).count();
            total += above_pos as f64 / (above_pos + above_neg) as f64;
        }
        total / pos.len() as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.8, 0.2], &[0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.3; 4], &[0.3; 5]).unwrap(), 0.5);
        assert!(auc(&[], &[0.1]).is_err());
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.5], &[0.7]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert_eq!(average_precision(&[0.9, 0.8], &[0.1, 0.2, 0.3]).unwrap(), 1.0);
        for m in 1..6 {
            let neg = vec![0.9; m];
            assert!((average_precision(&[0.1], &neg).unwrap() - 1.0 / (m + 1) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_scorer_is_perfect_and_constant_is_chance() {
        let m = evaluate(&ScoredPairs { pos: vec![1.0; 5], neg: vec![0.0; 5] }).unwrap();
        assert_eq!((m.auc, m.ap), (1.0, 1.0));
        assert_eq!(auc(&[0.5; 7], &[0.5; 7]).unwrap(), 0.5);
    }

    fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
        // Coarse grid so ties are common.
        proptest::collection::vec((0u8..20).prop_map(|v| v as f64 / 20.0), 1..max)
    }

    proptest! {
        #[test]
        fn auc_matches_mann_whitney(pos in scores(100), neg in scores(100)) {
            prop_assert!((auc(&pos, &neg).unwrap() - brute_auc(&pos, &neg)).abs() < 1e-12);
        }

        #[test]
        fn ap_matches_definition(pos in scores(25), neg in scores(25)) {
            prop_assert!((average_precision(&pos, &neg).unwrap() - brute_ap(&pos, &neg)).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_monotone_transform(pos in scores(50), neg in scores(50)) {
            let f = |v: &Vec<f64>| v.iter().map(|x| (3.0 * x - 1.0).exp()).collect::<Vec<_>>();
            let (a, b) = (evaluate(&ScoredPairs { pos: pos.clone(), neg: neg.clone() }).unwrap(),
                          evaluate(&ScoredPairs { pos: f(&pos), neg: f(&neg) }).unwrap());
            prop_assert!((a.auc - b.auc).abs() < 1e-12 && (a.ap - b.ap).abs() < 1e-12);
        }
    }
}
