//! User-level verdicts from text-level predictions.
//!
//! All comparisons are done on integer sums, so results do not depend on
//! the order of the predictions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::backend::Prediction;
use crate::corpus::PartyLabel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("cannot aggregate an empty prediction list")]
    Empty,
    #[error("confidence {0} outside 1..=5")]
    Confidence(u8),
    #[error("unknown aggregation method {0:?}")]
    UnknownMethod(String),
}

/// Anything carrying a party and an integer confidence.
pub trait Scored {
    fn party(&self) -> PartyLabel;
    fn confidence(&self) -> u8;
}

impl Scored for Prediction {
    fn party(&self) -> PartyLabel {
        self.party
    }
    fn confidence(&self) -> u8 {
        self.confidence
    }
}

impl Scored for (PartyLabel, u8) {
    fn party(&self) -> PartyLabel {
        self.0
    }
    fn confidence(&self) -> u8 {
        self.1
    }
}

impl<T: Scored> Scored for &T {
    fn party(&self) -> PartyLabel {
        (**self).party()
    }
    fn confidence(&self) -> u8 {
        (**self).confidence()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    Majority,
    ConfidenceWeighted,
    MaximumConfidence,
}

impl AggregationMethod {
    pub const ALL: [AggregationMethod; 3] =
        [AggregationMethod::Majority, AggregationMethod::ConfidenceWeighted, AggregationMethod::MaximumConfidence];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMethod::Majority => "majority",
            AggregationMethod::ConfidenceWeighted => "confidence_weighted",
            AggregationMethod::MaximumConfidence => "maximum_confidence",
        }
    }

    pub fn apply<P: Scored>(self, user_id: &str, preds: &[P]) -> Result<UserVerdict, AggregateError> {
        match self {
            AggregationMethod::Majority => majority_vote(user_id, preds),
            AggregationMethod::ConfidenceWeighted => confidence_weighted(user_id, preds),
            AggregationMethod::MaximumConfidence => maximum_confidence(user_id, preds),
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMethod {
    type Err = AggregateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregationMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AggregateError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Direct,
    Fallback,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserVerdict {
    pub user_id: String,
    pub method: AggregationMethod,
    /// `None` when unresolved; serialized as `"unresolved"`.
    #[serde(serialize_with = "ser_party", deserialize_with = "de_party")]
    pub party: Option<PartyLabel>,
    /// 0 = Democratic, 1 = Republican; only for the confidence-weighted method.
    pub alignment_score: Option<f64>,
    pub n_texts_used: usize,
    pub resolution: Resolution,
}

fn ser_party<S: Serializer>(party: &Option<PartyLabel>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(party.map_or("unresolved", PartyLabel::as_str))
}

fn de_party<'de, D: Deserializer<'de>>(d: D) -> Result<Option<PartyLabel>, D::Error> {
    let s = String::deserialize(d)?;
    if s == "unresolved" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(serde::de::Error::custom)
}

fn check<P: Scored>(preds: &[P]) -> Result<(), AggregateError> {
    if preds.is_empty() {
        return Err(AggregateError::Empty);
    }
    match preds.iter().map(Scored::confidence).find(|c| !(1..=5).contains(c)) {
        Some(c) => Err(AggregateError::Confidence(c)),
        None => Ok(()),
    }
}

fn counts<'a, P: Scored + 'a>(preds: impl IntoIterator<Item = &'a P>) -> (usize, usize) {
    preds.into_iter().fold((0, 0), |(r, d), p| match p.party() {
        PartyLabel::Republican => (r + 1, d),
        PartyLabel::Democratic => (r, d + 1),
    })
}

/// Sums of confidences for (Republican, Democratic).
fn weights<P: Scored>(preds: &[P]) -> (u64, u64) {
    preds.iter().fold((0, 0), |(r, d), p| match p.party() {
        PartyLabel::Republican => (r + u64::from(p.confidence()), d),
        PartyLabel::Democratic => (r, d + u64::from(p.confidence())),
    })
}

fn larger<T: Ord>(rep: T, dem: T) -> Option<PartyLabel> {
    match rep.cmp(&dem) {
        std::cmp::Ordering::Greater => Some(PartyLabel::Republican),
        std::cmp::Ordering::Less => Some(PartyLabel::Democratic),
        std::cmp::Ordering::Equal => None,
    }
}

fn verdict(
    user_id: &str,
    method: AggregationMethod,
    party: Option<PartyLabel>,
    resolution: Resolution,
    n: usize,
    score: Option<f64>,
) -> UserVerdict {
    let resolution = if party.is_none() { Resolution::Unresolved } else { resolution };
    UserVerdict { user_id: user_id.to_string(), method, party, alignment_score: score, n_texts_used: n, resolution }
}

/// Modal label; a count tie falls back to the confidence-weighted rule.
pub fn majority_vote<P: Scored>(user_id: &str, preds: &[P]) -> Result<UserVerdict, AggregateError> {
    check(preds)?;
    let (r, d) = counts(preds);
    let (party, resolution) = match larger(r, d) {
        Some(p) => (Some(p), Resolution::Direct),
        None => {
            let (wr, wd) = weights(preds);
            (larger(wr, wd), Resolution::Fallback)
        }
    };
    Ok(verdict(user_id, AggregationMethod::Majority, party, resolution, preds.len(), None))
}

/// Confidence-weighted alignment score `s = Σ c·y / Σ c`; exactly 0.5 is
/// unresolved.
pub fn confidence_weighted<P: Scored>(user_id: &str, preds: &[P]) -> Result<UserVerdict, AggregateError> {
    check(preds)?;
    let (wr, wd) = weights(preds);
    let score = wr as f64 / (wr + wd) as f64;
    Ok(verdict(user_id, AggregationMethod::ConfidenceWeighted, larger(wr, wd), Resolution::Direct, preds.len(), Some(score)))
}

/// Majority over the texts sharing the highest confidence; a tie there
/// falls back to a plain count majority over all texts.
pub fn maximum_confidence<P: Scored>(user_id: &str, preds: &[P]) -> Result<UserVerdict, AggregateError> {
    check(preds)?;
    let top = preds.iter().map(Scored::confidence).max().expect("non-empty");
    let subset: Vec<&P> = preds.iter().filter(|p| p.confidence() == top).collect();
    let (r, d) = counts(subset.iter().copied());
    let (party, resolution) = match larger(r, d) {
        Some(p) => (Some(p), Resolution::Direct),
        None => {
            let (r, d) = counts(preds);
            (larger(r, d), Resolution::Fallback)
        }
    };
    Ok(verdict(user_id, AggregationMethod::MaximumConfidence, party, resolution, subset.len(), None))
}

/// Applies `method` to every user's predictions, in user-id order.
pub fn aggregate_users<P: Scored>(
    by_user: &BTreeMap<String, Vec<P>>,
    method: AggregationMethod,
) -> Result<Vec<UserVerdict>, AggregateError> {
    by_user.iter().filter(|(_, p)| !p.is_empty()).map(|(u, p)| method.apply(u, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PartyLabel::{Democratic as D, Republican as R};

    fn v(preds: &[(PartyLabel, u8)], m: AggregationMethod) -> (Option<PartyLabel>, Resolution) {
        let out = m.apply("u", preds).unwrap();
        (out.party, out.resolution)
    }

    #[test]
    fn majority_examples() {
        let m = AggregationMethod::Majority;
        assert_eq!(v(&[(R, 1), (R, 1), (D, 1)], m), (Some(R), Resolution::Direct));
        assert_eq!(v(&[(R, 5), (D, 1)], m), (Some(R), Resolution::Fallback));
        assert_eq!(v(&[(R, 3), (D, 3)], m), (None, Resolution::Unresolved));
        assert_eq!(majority_vote("u", &[(R, 1), (D, 2), (D, 2)]).unwrap().n_texts_used, 3);
    }

    #[test]
    fn weighted_examples() {
        let out = confidence_weighted("u", &[(R, 5), (D, 1), (D, 1)]).unwrap();
        assert_eq!(out.party, Some(R));
        assert!((out.alignment_score.unwrap() - 5.0 / 7.0).abs() < 1e-12);
        let out = confidence_weighted("u", &[(D, 4), (D, 2)]).unwrap();
        assert_eq!((out.party, out.alignment_score), (Some(D), Some(0.0)));
        // divergence case
        let preds = [(R, 5), (D, 2), (D, 2)];
        let out = confidence_weighted("u", &preds).unwrap();
        assert!((out.alignment_score.unwrap() - 5.0 / 9.0).abs() < 1e-12);
        assert_eq!(out.party, Some(R));
        assert_eq!(majority_vote("u", &preds).unwrap().party, Some(D));
        let out = confidence_weighted("u", &[(R, 2), (D, 2)]).unwrap();
        assert_eq!((out.party, out.resolution), (None, Resolution::Unresolved));
    }

    #[test]
    fn max_confidence_examples() {
        let m = AggregationMethod::MaximumConfidence;
        assert_eq!(v(&[(R, 5), (D, 3), (D, 3)], m), (Some(R), Resolution::Direct));
        assert_eq!(maximum_confidence("u", &[(R, 5), (D, 3), (D, 3)]).unwrap().n_texts_used, 1);
        assert_eq!(v(&[(R, 4), (D, 4), (D, 2)], m), (Some(D), Resolution::Fallback));
        assert_eq!(v(&[(R, 4), (D, 4)], m), (None, Resolution::Unresolved));
        let same = [(R, 3), (D, 3), (R, 3)];
        assert_eq!(v(&same, m), v(&same, AggregationMethod::Majority));
    }

    #[test]
    fn errors() {
        let empty: [(PartyLabel, u8); 0] = [];
        for m in AggregationMethod::ALL {
            assert_eq!(m.apply("u", &empty), Err(AggregateError::Empty));
        }
        assert_eq!(majority_vote("u", &[(R, 0)]), Err(AggregateError::Confidence(0)));
        assert_eq!(majority_vote("u", &[(R, 6)]), Err(AggregateError::Confidence(6)));
    }

    #[test]
    fn verdict_json_shape() {
        let out = maximum_confidence("u1", &[(R, 4), (D, 4)]).unwrap();
        let json = serde_json::to_value(&out).unwrap();
        assert_eq!(json["party"], "unresolved");
        assert_eq!(json["method"], "maximum_confidence");
        assert_eq!(json["alignment_score"], serde_json::Value::Null);
        assert_eq!(json["resolution"], "unresolved");
        let back: UserVerdict = serde_json::from_value(json).unwrap();
        assert_eq!(back, out);
        let w = confidence_weighted("u2", &[(R, 4)]).unwrap();
        let back: UserVerdict = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    /// Straight-line restatement of the three rules in floating point.
    fn oracle(preds: &[(PartyLabel, u8)], m: AggregationMethod) -> (Option<PartyLabel>, usize, Option<f64>) {
        let vote = |ps: &[(PartyLabel, u8)]| {
            let r = ps.iter().filter(|p| p.0 == R).count() as i64;
            let d = ps.len() as i64 - r;
            if r > d {
                Some(R)
            } else if d > r {
                Some(D)
            } else {
                None
            }
        };
        let total: f64 = preds.iter().map(|p| p.1 as f64).sum();
        let rep: f64 = preds.iter().filter(|p| p.0 == R).map(|p| p.1 as f64).sum();
        let s = rep / total;
        let by_score = if s > 0.5 {
            Some(R)
        } else if s < 0.5 {
            Some(D)
        } else {
            None
        };
        match m {
            AggregationMethod::Majority => (vote(preds).or(by_score), preds.len(), None),
            AggregationMethod::ConfidenceWeighted => (by_score, preds.len(), Some(s)),
            AggregationMethod::MaximumConfidence => {
                let top = preds.iter().map(|p| p.1).max().unwrap();
                let sub: Vec<_> = preds.iter().copied().filter(|p| p.1 == top).collect();
                (vote(&sub).or_else(|| vote(preds)), sub.len(), None)
            }
        }
    }

    fn multisets(max_len: usize) -> Vec<Vec<(PartyLabel, u8)>> {
        let kinds: Vec<(PartyLabel, u8)> = [R, D].into_iter().flat_map(|p| (1..=5).map(move |c| (p, c))).collect();
        let mut out = Vec::new();
        fn rec(kinds: &[(PartyLabel, u8)], start: usize, left: usize, cur: &mut Vec<(PartyLabel, u8)>, out: &mut Vec<Vec<(PartyLabel, u8)>>) {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            if left == 0 {
                return;
            }
            for k in start..kinds.len() {
                cur.push(kinds[k]);
                rec(kinds, k, left - 1, cur, out);
                cur.pop();
            }
        }
        rec(&kinds, 0, max_len, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn exhaustive_oracle_equivalence() {
        let all = multisets(9);
        // sum over k=1..=9 of C(k+9, 9) = C(19, 9) - 1
        assert_eq!(all.len(), 92_378 - 1);
        for preds in &all {
            for m in AggregationMethod::ALL {
                let got = m.apply("u", preds).unwrap();
                let (party, n, score) = oracle(preds, m);
                assert_eq!(got.party, party, "{m} {preds:?}");
                assert_eq!(got.n_texts_used, n);
                match (got.alignment_score, score) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                    (None, None) => {}
                    other => panic!("score mismatch {other:?}"),
                }
            }
            let maj = majority_vote("u", preds).unwrap().n_texts_used;
            let max = maximum_confidence("u", preds).unwrap().n_texts_used;
            let uniform = preds.iter().all(|p| p.1 == preds[0].1);
            assert!(max <= maj);
            assert_eq!(max == maj, uniform);
        }
    }

    fn arb_preds() -> impl Strategy<Value = Vec<(PartyLabel, u8)>> {
        prop::collection::vec((prop::bool::ANY.prop_map(|b| if b { R } else { D }), 1u8..=5), 1..30)
    }

    proptest! {
        #[test]
        fn permutation_invariance(preds in arb_preds(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = preds.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            for m in AggregationMethod::ALL {
                prop_assert_eq!(m.apply("u", &preds).unwrap(), m.apply("u", &shuffled).unwrap());
            }
        }

        #[test]
        fn label_symmetry(preds in arb_preds()) {
            let flipped: Vec<_> = preds.iter().map(|&(p, c)| (p.other(), c)).collect();
            for m in AggregationMethod::ALL {
                let a = m.apply("u", &preds).unwrap();
                let b = m.apply("u", &flipped).unwrap();
                prop_assert_eq!(a.party.map(PartyLabel::other), b.party);
                prop_assert_eq!(a.resolution, b.resolution);
                if let (Some(x), Some(y)) = (a.alignment_score, b.alignment_score) {
                    prop_assert!((x - (1.0 - y)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn unanimity(party in prop::bool::ANY, confs in prop::collection::vec(1u8..=5, 1..20)) {
            let p = if party { R } else { D };
            let preds: Vec<_> = confs.iter().map(|&c| (p, c)).collect();
            for m in AggregationMethod::ALL {
                let out = m.apply("u", &preds).unwrap();
                prop_assert_eq!(out.party, Some(p));
                prop_assert_eq!(out.resolution, Resolution::Direct);
            }
        }

        #[test]
        fn equal_confidence_weighted_matches_majority(parties in prop::collection::vec(prop::bool::ANY, 1..20), c in 1u8..=5) {
            let preds: Vec<_> = parties.iter().map(|&b| (if b { R } else { D }, c)).collect();
            let w = confidence_weighted("u", &preds).unwrap();
            let m = majority_vote("u", &preds).unwrap();
            prop_assert_eq!(w.party, m.party);
        }
    }
}
