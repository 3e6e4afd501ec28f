use serde::{Deserialize, Serialize};

use super::EvalError;

/// Square count matrix; rows are actual classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: &[&str]) -> Self {
        let n = classes.len();
        ConfusionMatrix { classes: classes.iter().map(|s| s.to_string()).collect(), counts: vec![vec![0; n]; n] }
    }

    pub fn from_counts(classes: &[&str], counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        if counts.len() != classes.len() || counts.iter().any(|r| r.len() != classes.len()) {
            return Err(EvalError::Shape(format!("expected a {n}x{n} count table", n = classes.len())));
        }
        Ok(ConfusionMatrix { classes: classes.iter().map(|s| s.to_string()).collect(), counts })
    }

    /// Tallies `(truth, prediction)` pairs over `classes.len()` classes.
    pub fn from_predictions(truths: &[usize], preds: &[usize], classes: &[&str]) -> Result<Self, EvalError> {
        if truths.len() != preds.len() {
            return Err(EvalError::LengthMismatch { truths: truths.len(), preds: preds.len() });
        }
        let n = classes.len();
        let mut m = ConfusionMatrix::zeros(classes);
        for (&a, &p) in truths.iter().zip(preds) {
            if a >= n || p >= n {
                return Err(EvalError::ClassOutOfRange { class: a.max(p), n });
            }
            m.counts[a][p] += 1;
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n()).map(|i| self.counts[i][i]).sum()
    }

    pub fn misclassified(&self) -> u64 {
        self.total() - self.trace()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        (0..self.n()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Sums blocks of cells: class `i` becomes `mapping[i]`, a class of `into`.
    pub fn merge(&self, mapping: &[usize], into: &[&str]) -> Result<ConfusionMatrix, EvalError> {
        if mapping.len() != self.n() {
            return Err(EvalError::PartialMapping { mapped: mapping.len(), n: self.n() });
        }
        if let Some(&bad) = mapping.iter().find(|&&t| t >= into.len()) {
            return Err(EvalError::ClassOutOfRange { class: bad, n: into.len() });
        }
        let mut out = ConfusionMatrix::zeros(into);
        for (a, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                out.counts[mapping[a]][mapping[p]] += c;
            }
        }
        Ok(out)
    }

    /// Trace over total.
    pub fn accuracy(&self) -> Result<f64, EvalError> {
        match self.total() {
            0 => Err(EvalError::Empty),
            total => Ok(self.trace() as f64 / total as f64),
        }
    }
}

/// `floor(fraction · 100)`. The epsilon keeps exact values such as 0.29 from
/// flooring to 28 through binary representation error.
pub fn floored_percent(fraction: f64) -> u32 {
    (fraction * 100.0 + 1e-9).floor() as u32
}

/// Percentage rounded half-up to two decimals (0.975655 → 97.57).
pub fn percent_2dp(fraction: f64) -> f64 {
    (fraction * 10_000.0 + 0.5).floor() / 100.0
}

/// Per-side accuracy of a 6-class matrix in the fixed class order (reverse
/// rows 0..3, obverse rows 3..6). An observation on a side counts as correct
/// when the predicted denomination matches, whichever side was predicted.
/// Returns `(obverse, reverse)`.
pub fn per_side_accuracy(m6: &ConfusionMatrix) -> Result<(f64, f64), EvalError> {
    if m6.n() != 6 {
        return Err(EvalError::Shape(format!("per-side accuracy needs 6 classes, got {}", m6.n())));
    }
    let side = |rows: std::ops::Range<usize>, name: &'static str| {
        let mut correct = 0;
        let mut total = 0;
        for a in rows {
            let denom = a % 3;
            correct += m6.get(a, denom) + m6.get(a, denom + 3);
            total += m6.counts[a].iter().sum::<u64>();
        }
        if total == 0 {
            Err(EvalError::EmptySide(name))
        } else {
            Ok(correct as f64 / total as f64)
        }
    };
    Ok((side(3..6, "obverse")?, side(0..3, "reverse")?))
}

/// Text used in reports to document the per-side definition.
pub const PER_SIDE_DEFINITION: &str =
    "rows restricted to one side; correct when the predicted denomination matches, ignoring predicted side";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{denomination_mapping, CLASS3_NAMES, CLASS6_NAMES};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ABC: [&str; 3] = ["a", "b", "c"];

    #[test]
    fn empty_and_identity() {
        let m = ConfusionMatrix::from_predictions(&[], &[], &ABC).unwrap();
        assert_eq!(m.total(), 0);
        assert!(matches!(m.accuracy(), Err(EvalError::Empty)));
        let m = ConfusionMatrix::from_predictions(&[0, 1, 2], &[0, 1, 2], &ABC).unwrap();
        assert_eq!(m.counts(), &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(m.accuracy().unwrap(), 1.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(ConfusionMatrix::from_predictions(&[0], &[], &ABC), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(
            ConfusionMatrix::from_predictions(&[3], &[0], &ABC),
            Err(EvalError::ClassOutOfRange { class: 3, n: 3 })
        ));
        assert!(ConfusionMatrix::from_counts(&ABC, vec![vec![0; 3]; 2]).is_err());
    }

    #[test]
    fn matches_brute_force_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truths: Vec<usize> = (0..100).map(|_| rng.random_range(0..6)).collect();
        let preds: Vec<usize> = (0..100).map(|_| rng.random_range(0..6)).collect();
        let m = ConfusionMatrix::from_predictions(&truths, &preds, &CLASS6_NAMES).unwrap();
        for a in 0..6 {
            for p in 0..6 {
                let direct = truths.iter().zip(&preds).filter(|&(&t, &q)| t == a && q == p).count();
                assert_eq!(m.get(a, p), direct as u64);
            }
        }
        assert_eq!(m.total(), 100);
    }

    #[test]
    fn merge_errors_and_trivial_mappings() {
        let m = ConfusionMatrix::from_predictions(&[0, 1, 2, 2], &[0, 2, 2, 1], &ABC).unwrap();
        assert_eq!(m.merge(&[0, 1, 2], &ABC).unwrap(), m);
        let one = m.merge(&[0, 0, 0], &["all"]).unwrap();
        assert_eq!(one.counts(), &[vec![4]]);
        assert!(matches!(m.merge(&[0, 1], &ABC), Err(EvalError::PartialMapping { .. })));
        assert!(m.merge(&[0, 1, 3], &ABC).is_err());
    }

    #[test]
    fn floor_and_truncation() {
        assert_eq!(floored_percent(0.975654), 97);
        assert_eq!(floored_percent(0.9497), 94);
        assert_eq!(floored_percent(1.0), 100);
        assert_eq!(floored_percent(0.29), 29);
        assert_eq!(percent_2dp(12182.0 / 12446.0), 97.88);
        assert_eq!(percent_2dp(11821.0 / 12446.0), 94.98);
        assert_eq!(percent_2dp(1.0), 100.0);
    }

    #[test]
    fn per_side_perfect_and_errors() {
        let mut counts = vec![vec![0; 6]; 6];
        for (i, row) in counts.iter_mut().enumerate() {
            row[i] = 10 + i as u64;
        }
        let m = ConfusionMatrix::from_counts(&CLASS6_NAMES, counts).unwrap();
        assert_eq!(per_side_accuracy(&m).unwrap(), (1.0, 1.0));
        let m3 = ConfusionMatrix::zeros(&ABC);
        assert!(per_side_accuracy(&m3).is_err());
        let mut only_rev = vec![vec![0; 6]; 6];
        only_rev[0][0] = 1;
        let m = ConfusionMatrix::from_counts(&CLASS6_NAMES, only_rev).unwrap();
        assert!(matches!(per_side_accuracy(&m), Err(EvalError::EmptySide("obverse"))));
    }

    fn arb_matrix6() -> impl Strategy<Value = ConfusionMatrix> {
        prop::collection::vec(prop::collection::vec(0u64..500, 6), 6)
            .prop_map(|c| ConfusionMatrix::from_counts(&CLASS6_NAMES, c).unwrap())
    }

    proptest! {
        #[test]
        fn merge_preserves_total_and_never_lowers_accuracy(m in arb_matrix6(), map in prop::collection::vec(0usize..3, 6)) {
            let arbitrary = m.merge(&map, &CLASS3_NAMES).unwrap();
            prop_assert_eq!(arbitrary.total(), m.total());
            let merged = m.merge(&denomination_mapping(), &CLASS3_NAMES).unwrap();
            prop_assert_eq!(merged.total(), m.total());
            if m.total() > 0 {
                prop_assert!(merged.accuracy().unwrap() >= m.accuracy().unwrap());
            }
        }

        #[test]
        fn floor_never_exceeds_two_decimal_percent(f in 0.0f64..=1.0) {
            prop_assert!(floored_percent(f) as f64 <= percent_2dp(f));
            prop_assert!(floored_percent(f) as f64 <= (f * 10_000.0).round() / 100.0);
        }
    }
}
