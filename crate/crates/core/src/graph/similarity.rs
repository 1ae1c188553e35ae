use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// Weight of the shared-diagnosis reward.
    pub a: f64,
    /// Constant added to each inverse occurrence count.
    pub c: f64,
    pub k: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { a: 5.0, c: 0.001, k: 3 }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.c >= 0.0) || !self.a.is_finite() || !self.c.is_finite() {
            return Err(Error::Config(format!(
                "similarity needs a > 0 and c >= 0, got a={} c={}",
                self.a, self.c
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        Ok(())
    }
}

/// Checks that every column used by some row has a positive count.
pub fn check_counts(rows: &[Vec<usize>], counts: &[usize]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        for &mu in row {
            match counts.get(mu) {
                Some(&d) if d > 0 => {}
                Some(_) => {
                    return Err(Error::Data(format!(
                        "diagnosis column {mu} is present in row {i} but has zero occurrence count"
                    )))
                }
                None => {
                    return Err(Error::Index {
                        what: "occurrence count",
                        index: mu,
                        len: counts.len(),
                    })
                }
            }
        }
    }
    Ok(())
}

/// `a * sum_shared (1/d_mu + c) - (|D_i| + |D_j|)` over sorted column lists.
/// Shared terms are summed in ascending column order.
pub fn similarity_score(row_i: &[usize], row_j: &[usize], counts: &[usize], a: f64, c: f64) -> Result<f64> {
    let mut shared = 0.0;
    let (mut p, mut q) = (0, 0);
    while p < row_i.len() && q < row_j.len() {
        match row_i[p].cmp(&row_j[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let mu = row_i[p];
                let d = *counts.get(mu).ok_or(Error::Index {
                    what: "occurrence count",
                    index: mu,
                    len: counts.len(),
                })?;
                if d == 0 {
                    return Err(Error::Data(format!(
                        "diagnosis column {mu} is present but has zero occurrence count"
                    )));
                }
                shared += 1.0 / d as f64 + c;
                p += 1;
                q += 1;
            }
        }
    }
    Ok(a * shared - (row_i.len() + row_j.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        let (a, c) = (5.0, 0.001);
        assert_eq!(similarity_score(&[], &[0], &[1, 1, 1], a, c).unwrap(), -1.0);
        let s = similarity_score(&[2], &[2], &[1, 1, 2], a, c).unwrap();
        assert!((s - 0.505).abs() < 1e-12, "{s}");
        let s = similarity_score(&[0, 1], &[0], &[2, 4, 3], a, c).unwrap();
        assert!((s + 0.495).abs() < 1e-12, "{s}");
    }

    #[test]
    fn zero_count_is_a_data_error() {
        assert!(matches!(
            similarity_score(&[1], &[1], &[3, 0], 5.0, 0.001),
            Err(Error::Data(_))
        ));
        assert!(check_counts(&[vec![0], vec![1]], &[2, 0]).is_err());
    }

    fn sorted_set() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::btree_set(0usize..12, 0..8).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn symmetric(i in sorted_set(), j in sorted_set(), d in proptest::collection::vec(1usize..50, 12)) {
            prop_assert_eq!(
                similarity_score(&i, &j, &d, 5.0, 0.001).unwrap(),
                similarity_score(&j, &i, &d, 5.0, 0.001).unwrap()
            );
        }

        #[test]
        fn rarer_shared_diagnosis_scores_higher(d in 1usize..1000, a in 0.1f64..10.0, c in 0.0f64..1.0) {
            let counts_rare = [d];
            let counts_common = [d + 1];
            prop_assert!(
                similarity_score(&[0], &[0], &counts_rare, a, c).unwrap()
                    > similarity_score(&[0], &[0], &counts_common, a, c).unwrap()
            );
        }

        #[test]
        fn unshared_diagnosis_costs_exactly_one(
            i in sorted_set(),
            j in sorted_set(),
            d in proptest::collection::vec(1usize..50, 13),
        ) {
            // Column 12 is outside both rows, so adding it to i is unshared.
            let before = similarity_score(&i, &j, &d, 5.0, 0.001).unwrap();
            let mut extended = i.clone();
            extended.push(12);
            let after = similarity_score(&extended, &j, &d, 5.0, 0.001).unwrap();
            prop_assert!((after - (before - 1.0)).abs() < 1e-12);
        }

        #[test]
        fn scaling_a_keeps_shared_term_ordering(
            i in sorted_set(),
            j in sorted_set(),
            l in sorted_set(),
            d in proptest::collection::vec(1usize..50, 12),
            scale in 0.1f64..10.0,
        ) {
            // Shared term alone: score + |D_i| + |D_j| with c = 0.
            let shared = |x: &[usize], y: &[usize], a: f64| {
                similarity_score(x, y, &d, a, 0.0).unwrap() + (x.len() + y.len()) as f64
            };
            let before = shared(&i, &j, 5.0).partial_cmp(&shared(&i, &l, 5.0));
            let after = shared(&i, &j, 5.0 * scale).partial_cmp(&shared(&i, &l, 5.0 * scale));
            if (shared(&i, &j, 1.0) - shared(&i, &l, 1.0)).abs() > 1e-9 {
                prop_assert_eq!(before, after);
            }
        }
    }
}
