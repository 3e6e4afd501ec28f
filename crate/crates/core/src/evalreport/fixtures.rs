//! The four published confusion-matrix tables, embedded verbatim (totals
//! included) from `fixtures/*.tsv`, with the matching accuracy-table row.

use super::{ConfusionMatrix, EvalError};

/// One published result: both confusion panels plus the accuracy-table values.
#[derive(Clone, Debug)]
pub struct PublishedResult {
    pub table: u8,
    pub architecture: &'static str,
    pub source: &'static str,
    /// "Both" column, percent with two decimals.
    pub both_percent: f64,
    /// "Both (floor)" column.
    pub both_floor: u32,
    /// Misclassification count stated in the discussion of the table.
    pub misclassified: u64,
}

pub const PUBLISHED: [PublishedResult; 4] = [
    PublishedResult {
        table: 3,
        architecture: "Inception V3",
        source: include_str!("../../fixtures/table3_inception_v3.tsv"),
        both_percent: 97.57,
        both_floor: 97,
        misclassified: 303,
    },
    PublishedResult {
        table: 4,
        architecture: "VGG16",
        source: include_str!("../../fixtures/table4_vgg16.tsv"),
        both_percent: 97.87,
        both_floor: 97,
        misclassified: 264,
    },
    PublishedResult {
        table: 5,
        architecture: "ResNet50",
        source: include_str!("../../fixtures/table5_resnet50.tsv"),
        both_percent: 94.97,
        both_floor: 94,
        misclassified: 625,
    },
    PublishedResult {
        table: 6,
        architecture: "MobileNet V2",
        source: include_str!("../../fixtures/table6_mobilenet_v2.tsv"),
        both_percent: 77.03,
        both_floor: 77,
        misclassified: 2859,
    },
];

/// Published test-set size shared by all four tables.
pub const PUBLISHED_TEST_TOTAL: u64 = 12446;

impl PublishedResult {
    /// `(six_class, three_class)` panels, checked against their printed totals.
    pub fn matrices(&self) -> Result<(ConfusionMatrix, ConfusionMatrix), EvalError> {
        let blocks = parse_blocks(self.source)?;
        match <[ConfusionMatrix; 2]>::try_from(blocks) {
            Ok([six, three]) => Ok((six, three)),
            Err(blocks) => Err(EvalError::Fixture(format!("expected 2 panels, found {}", blocks.len()))),
        }
    }
}

/// Parses blank-line separated blocks of
/// `Actual <names…> Total` / `<name> <counts…> <row total>` / `Total <col totals…> <grand>`.
/// `#` lines are comments.
pub fn parse_blocks(text: &str) -> Result<Vec<ConfusionMatrix>, EvalError> {
    let bad = |msg: String| EvalError::Fixture(msg);
    let mut out = Vec::new();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    for block in lines.split(|l| l.trim().is_empty()).filter(|b| !b.is_empty()) {
        let header: Vec<&str> = block[0].split('\t').collect();
        if header.len() < 3 || header[0] != "Actual" || header[header.len() - 1] != "Total" {
            return Err(bad(format!("bad header {:?}", block[0])));
        }
        let names = &header[1..header.len() - 1];
        let n = names.len();
        if block.len() != n + 2 {
            return Err(bad(format!("expected {} rows, got {}", n + 2, block.len())));
        }
        let mut rows = Vec::with_capacity(n + 1);
        for (i, line) in block[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let expect_name = if i < n { names[i] } else { "Total" };
            if fields.len() != n + 2 || fields[0] != expect_name {
                return Err(bad(format!("bad row {line:?}")));
            }
            let values: Vec<u64> = fields[1..]
                .iter()
                .map(|v| v.parse().map_err(|_| bad(format!("bad count {v:?}"))))
                .collect::<Result<_, _>>()?;
            rows.push(values);
        }
        let totals = rows.pop().expect("n + 1 rows");
        let counts: Vec<Vec<u64>> = rows.iter().map(|r| r[..n].to_vec()).collect();
        let m = ConfusionMatrix::from_counts(names, counts)?;
        let row_totals: Vec<u64> = rows.iter().map(|r| r[n]).collect();
        if m.row_totals() != row_totals || m.column_totals() != totals[..n] || m.total() != totals[n] {
            return Err(bad(format!("printed totals disagree with cells in block {names:?}")));
        }
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse_with_consistent_totals() {
        for p in &PUBLISHED {
            let (six, three) = p.matrices().unwrap();
            assert_eq!((six.n(), three.n()), (6, 3));
            assert_eq!(six.total(), PUBLISHED_TEST_TOTAL);
            assert_eq!(three.total(), PUBLISHED_TEST_TOTAL);
            assert_eq!(three.misclassified(), p.misclassified, "table {}", p.table);
        }
    }

    #[test]
    fn parser_rejects_inconsistent_totals() {
        let text = "Actual\ta\tb\tTotal\na\t1\t2\t3\nb\t0\t4\t4\nTotal\t1\t6\t8\n";
        assert!(parse_blocks(text).is_err());
        let ok = text.replace("\t8\n", "\t7\n");
        assert_eq!(parse_blocks(&ok).unwrap()[0].total(), 7);
    }

    #[test]
    fn spot_values() {
        let (six, three) = PUBLISHED[0].matrices().unwrap();
        assert_eq!(six.get(0, 0), 2412);
        assert_eq!(six.get(3, 4), 60);
        assert_eq!(three.get(0, 0), 4624);
        let (six, _) = PUBLISHED[2].matrices().unwrap();
        assert_eq!(six.get(1, 0), 127);
        assert_eq!(six.get(4, 3), 95);
    }
}
