use std::collections::BTreeMap;

use super::MetricsError;

fn tally<'a, T: Ord + 'a>(labels: impl IntoIterator<Item = &'a T>) -> BTreeMap<&'a T, usize> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

/// Cohen's kappa with marginal-product chance agreement. When chance
/// agreement is 1 (both raters constant and equal) kappa is 1.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Length(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::TooFew("cohen_kappa", 1));
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let ta = tally(a);
    let tb = tally(b);
    let p_e: f64 = ta.iter().map(|(k, &ca)| ca as f64 / n * tb.get(k).copied().unwrap_or(0) as f64 / n).sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa over an items x raters matrix.
pub fn fleiss_kappa<T: Ord>(ratings: &[Vec<T>]) -> Result<f64, MetricsError> {
    let first = ratings.first().ok_or(MetricsError::TooFew("fleiss_kappa", 1))?;
    let raters = first.len();
    if raters < 2 {
        return Err(MetricsError::TooFew("fleiss_kappa raters", 2));
    }
    for (item, row) in ratings.iter().enumerate() {
        if row.len() != raters {
            return Err(MetricsError::Ragged { item, got: row.len(), expected: raters });
        }
    }
    let n = raters as f64;
    let items = ratings.len() as f64;
    let mut totals: BTreeMap<&T, usize> = BTreeMap::new();
    let mut p_bar = 0.0;
    for row in ratings {
        let t = tally(row);
        let sq: usize = t.values().map(|c| c * c).sum();
        p_bar += (sq as f64 - n) / (n * (n - 1.0));
        for (k, c) in t {
            *totals.entry(k).or_insert(0) += c;
        }
    }
    p_bar /= items;
    let p_e: f64 = totals.values().map(|&c| (c as f64 / (items * n)).powi(2)).sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Accuracy of per-item modal ratings against `truth`; tied items count
/// as incorrect.
pub fn majority_vote_accuracy<T: Ord>(ratings: &[Vec<T>], truth: &[T]) -> Result<f64, MetricsError> {
    if ratings.len() != truth.len() {
        return Err(MetricsError::Length(ratings.len(), truth.len()));
    }
    if ratings.is_empty() {
        return Err(MetricsError::TooFew("majority_vote_accuracy", 1));
    }
    let correct = ratings
        .iter()
        .zip(truth)
        .filter(|(row, t)| {
            let counts = tally(row.iter());
            let best = counts.values().copied().max().unwrap_or(0);
            let mut modal = counts.iter().filter(|(_, &c)| c == best);
            matches!((modal.next(), modal.next()), (Some((k, _)), None) if *k == *t)
        })
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const R: char = 'R';
    const D: char = 'D';

    #[test]
    fn cohen_examples() {
        assert_eq!(cohen_kappa(&[R, D, R], &[R, D, R]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[R, R], &[R, R]).unwrap(), 1.0);
        // p_o = 0.75, p_e = 0.5*0.25 + 0.5*0.75 = 0.5
        let k = cohen_kappa(&[R, R, D, D], &[R, D, D, D]).unwrap();
        assert!((k - 0.5).abs() < 1e-12);
        assert!(cohen_kappa(&[R], &[R, D]).is_err());
    }

    #[test]
    fn cohen_chance_agreement() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let a: Vec<char> = (0..10_000).map(|i| if i % 3 == 0 { R } else { D }).collect();
        let b: Vec<char> = (0..10_000).map(|_| if rng.gen::<bool>() { R } else { D }).collect();
        assert!(cohen_kappa(&a, &b).unwrap().abs() <= 0.03);
    }

    /// Fleiss by explicit pairwise-agreement counting.
    fn fleiss_by_pairs(ratings: &[Vec<char>]) -> f64 {
        let n = ratings[0].len();
        let items = ratings.len();
        let mut agree_pairs = 0usize;
        for row in ratings {
            for i in 0..n {
                for j in 0..n {
                    if i != j && row[i] == row[j] {
                        agree_pairs += 1;
                    }
                }
            }
        }
        let p_bar = agree_pairs as f64 / (items * n * (n - 1)) as f64;
        let all: Vec<char> = ratings.iter().flatten().copied().collect();
        let p_r = all.iter().filter(|&&c| c == R).count() as f64 / all.len() as f64;
        let p_e = p_r * p_r + (1.0 - p_r) * (1.0 - p_r);
        (p_bar - p_e) / (1.0 - p_e)
    }

    #[test]
    fn fleiss_examples() {
        let unanimous = vec![vec![R, R, R], vec![D, D, D]];
        assert_eq!(fleiss_kappa(&unanimous).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![R, R], vec![R, R]]).unwrap(), 1.0);
        // P_i = 1, 1/3, 1/3, 1 -> P_bar = 2/3; p_R = 7/12 -> P_e = 74/144
        let fixture = vec![vec![R, R, R], vec![R, R, D], vec![R, R, D], vec![D, D, D]];
        let k = fleiss_kappa(&fixture).unwrap();
        assert!((k - 11.0 / 35.0).abs() < 1e-12, "{k}");
        assert!((k - 0.314_285_714_285_714_3).abs() < 1e-12);
        assert!((k - fleiss_by_pairs(&fixture)).abs() < 1e-12);
        let two = vec![vec![R, D], vec![R, R], vec![D, D], vec![D, R], vec![R, R]];
        assert!((fleiss_kappa(&two).unwrap() - fleiss_by_pairs(&two)).abs() < 1e-12);
        assert!(matches!(fleiss_kappa(&[vec![R, R], vec![R]]), Err(MetricsError::Ragged { item: 1, .. })));
    }

    #[test]
    fn majority_accuracy_examples() {
        assert_eq!(majority_vote_accuracy(&[vec![R, R, R], vec![D, D, D]], &[R, D]).unwrap(), 1.0);
        assert_eq!(majority_vote_accuracy(&[vec![R, R, D], vec![D, R, D]], &[R, D]).unwrap(), 1.0);
        assert_eq!(majority_vote_accuracy(&[vec![R, D], vec![D, R]], &[R, D]).unwrap(), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn self_agreement(a in proptest::collection::vec(0u8..2, 2..50)) {
            proptest::prop_assume!(a.contains(&0) && a.contains(&1));
            proptest::prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn fleiss_matches_pairwise(rows in proptest::collection::vec(proptest::collection::vec(proptest::bool::ANY, 4), 2..20)) {
            let ratings: Vec<Vec<char>> = rows.iter().map(|r| r.iter().map(|&b| if b { R } else { D }).collect()).collect();
            let all: Vec<char> = ratings.iter().flatten().copied().collect();
            proptest::prop_assume!(all.contains(&R) && all.contains(&D));
            proptest::prop_assert!((fleiss_kappa(&ratings).unwrap() - fleiss_by_pairs(&ratings)).abs() < 1e-12);
        }
    }
}
