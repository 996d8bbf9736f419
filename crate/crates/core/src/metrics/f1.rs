use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::PartyLabel;

/// 2x2 counts indexed `[true][predicted]` with Republican = 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (PartyLabel, PartyLabel)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for &(t, p) in pairs {
            m.record(t, p);
        }
        m
    }

    pub fn record(&mut self, truth: PartyLabel, pred: PartyLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    /// Records a pair of class indices (0 or 1) for non-party binary tasks.
    pub fn record_index(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn from_indices<'a>(pairs: impl IntoIterator<Item = &'a (usize, usize)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for &(t, p) in pairs {
            m.record_index(t, p);
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts[0][1] == 0 && self.counts[1][0] == 0
    }

    /// F1 of one class; 0 when the class is absent from truth and prediction.
    pub fn f1(&self, class: PartyLabel) -> f64 {
        let k = class.index();
        let tp = self.counts[k][k];
        let fn_ = self.counts[k][1 - k];
        let fp = self.counts[1 - k][k];
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    pub fn macro_f1(&self) -> f64 {
        PartyLabel::BOTH.iter().map(|&c| self.f1(c)).sum::<f64>() / 2.0
    }

    pub fn accuracy(&self) -> f64 {
        (self.counts[0][0] + self.counts[1][1]) as f64 / self.total() as f64
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..2 {
            for j in 0..2 {
                self.counts[i][j] += rhs.counts[i][j];
            }
        }
    }
}

/// Mean of the two per-class F1 scores.
pub fn macro_f1(pairs: &[(PartyLabel, PartyLabel)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::TooFew("macro_f1", 1));
    }
    Ok(ConfusionMatrix::from_pairs(pairs).macro_f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub f1: f64,
    pub n: usize,
    /// Fewer than the requested minimum number of items.
    pub low_support: bool,
    pub confusion: ConfusionMatrix,
}

/// Macro F1 per group. Groups smaller than `min_support` are flagged but
/// still reported.
pub fn grouped_f1<K: Ord + Clone>(
    items: &[(K, PartyLabel, PartyLabel)],
    min_support: usize,
) -> Result<BTreeMap<K, GroupScore>, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::TooFew("grouped_f1", 1));
    }
    let mut mats: BTreeMap<K, ConfusionMatrix> = BTreeMap::new();
    for (k, t, p) in items {
        mats.entry(k.clone()).or_default().record(*t, *p);
    }
    Ok(mats
        .into_iter()
        .map(|(k, m)| {
            let n = m.total() as usize;
            (k, GroupScore { f1: m.macro_f1(), n, low_support: n < min_support, confusion: m })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use PartyLabel::{Democratic as D, Republican as R};

    #[test]
    fn hand_examples() {
        assert_eq!(macro_f1(&[(R, R), (D, D)]).unwrap(), 1.0);
        // class R: tp=1 fp=0 fn=1 -> 2/3; class D: tp=2 fp=1 fn=0 -> 4/5
        let f = macro_f1(&[(R, R), (R, D), (D, D), (D, D)]).unwrap();
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((f - 0.733_333_333_333_333_3).abs() < 1e-12);
        assert!(macro_f1(&[]).is_err());
        // absent class scores zero
        assert_eq!(macro_f1(&[(R, R), (R, R)]).unwrap(), 0.5);
    }

    #[test]
    fn random_classifier_is_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<_> = (0..10_000)
            .map(|i| (if i % 2 == 0 { R } else { D }, if rng.gen::<bool>() { R } else { D }))
            .collect();
        let f = macro_f1(&pairs).unwrap();
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn grouped_examples() {
        let items = vec![("a", R, R), ("a", D, D), ("b", R, R), ("b", D, D), ("b", D, D)];
        let g = grouped_f1(&items, 3).unwrap();
        assert_eq!(g["a"].f1, 1.0);
        assert!(g["a"].low_support);
        assert!(!g["b"].low_support);
        let single: Vec<_> = items.iter().map(|&(_, t, p)| ("x", t, p)).collect();
        let pairs: Vec<_> = items.iter().map(|&(_, t, p)| (t, p)).collect();
        assert_eq!(grouped_f1(&single, 1).unwrap()["x"].f1, macro_f1(&pairs).unwrap());
    }

    #[test]
    fn monotone_confidence_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut items = Vec::new();
        for i in 0..4000 {
            let t = if i % 2 == 0 { R } else { D };
            items.push((5u8, t, t));
            items.push((1u8, t, if rng.gen::<bool>() { R } else { D }));
        }
        let g = grouped_f1(&items, 1).unwrap();
        assert_eq!(g[&5].f1, 1.0);
        assert!((g[&1].f1 - 0.5).abs() < 0.03);
    }

    fn party() -> impl Strategy<Value = PartyLabel> {
        prop::bool::ANY.prop_map(|b| if b { R } else { D })
    }

    proptest! {
        #[test]
        fn relabel_invariance(pairs in prop::collection::vec((party(), party()), 1..60)) {
            let flipped: Vec<_> = pairs.iter().map(|&(t, p)| (t.other(), p.other())).collect();
            prop_assert!((macro_f1(&pairs).unwrap() - macro_f1(&flipped).unwrap()).abs() < 1e-12);
        }

        // Restricted to inputs where both classes occur: with one class absent
        // it scores 0, so a perfect single-class list has macro F1 0.5.
        #[test]
        fn perfect_iff_diagonal(pairs in prop::collection::vec((party(), party()), 1..60)) {
            let m = ConfusionMatrix::from_pairs(&pairs);
            let both = pairs.iter().any(|p| p.0 == R || p.1 == R) && pairs.iter().any(|p| p.0 == D || p.1 == D);
            prop_assume!(both);
            prop_assert_eq!(m.macro_f1() == 1.0, m.is_diagonal());
        }

        #[test]
        fn pooled_equals_sum_of_groups(items in prop::collection::vec((0u8..4, party(), party()), 1..80)) {
            let groups = grouped_f1(&items, 1).unwrap();
            let sum = groups.values().fold(ConfusionMatrix::default(), |acc, g| acc + g.confusion);
            let pooled: Vec<_> = items.iter().map(|&(_, t, p)| (t, p)).collect();
            prop_assert_eq!(sum, ConfusionMatrix::from_pairs(&pooled));
        }
    }
}
