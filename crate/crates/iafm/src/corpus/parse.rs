//! Canonical TSV parsing and the column-mapping shim for tutor exports.

use super::{CorpusError, Dataset, ObservationRow, Provenance, ProvenanceStep};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

/// Names the source columns holding the four canonical fields, and the
/// outcome encodings accepted as correct/incorrect. Everything else in the
/// outcome column counts as unknown and is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub student: String,
    pub kc: String,
    pub order: String,
    pub outcome: String,
    pub correct_values: Vec<String>,
    pub incorrect_values: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            student: "student".into(),
            kc: "kc".into(),
            order: "order".into(),
            outcome: "outcome".into(),
            correct_values: vec!["1".into(), "correct".into()],
            incorrect_values: vec!["0".into(), "incorrect".into()],
        }
    }
}

impl ColumnMapping {
    /// Load a mapping from a `key=value` file. Recognized keys: `student`,
    /// `kc`, `order`, `outcome`, `correct_values`, `incorrect_values` (the
    /// last two comma-separated). Unrecognized keys are an error.
    pub fn from_file(path: &Path) -> Result<ColumnMapping, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_spec(&text)
    }

    pub fn from_str_spec(text: &str) -> Result<ColumnMapping, CorpusError> {
        let mut mapping = ColumnMapping::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CorpusError::BadMapping(format!("line {}: expected key=value", lineno + 1))
            })?;
            let value = value.trim();
            match key.trim() {
                "student" => mapping.student = value.into(),
                "kc" => mapping.kc = value.into(),
                "order" => mapping.order = value.into(),
                "outcome" => mapping.outcome = value.into(),
                "correct_values" => {
                    mapping.correct_values =
                        value.split(',').map(|v| v.trim().to_string()).collect()
                }
                "incorrect_values" => {
                    mapping.incorrect_values =
                        value.split(',').map(|v| v.trim().to_string()).collect()
                }
                other => {
                    return Err(CorpusError::BadMapping(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(mapping)
    }

    fn classify_outcome(&self, raw: &str) -> Option<u8> {
        let lowered = raw.trim().to_ascii_lowercase();
        if self.correct_values.iter().any(|v| v.to_ascii_lowercase() == lowered) {
            Some(1)
        } else if self.incorrect_values.iter().any(|v| v.to_ascii_lowercase() == lowered) {
            Some(0)
        } else {
            None
        }
    }
}

struct RawRow {
    student: String,
    kc: String,
    order_raw: String,
    outcome: u8,
    source_rank: u64,
}

/// Parse a tab-separated practice log into a [`Dataset`].
///
/// Rows are normalized to (student, kc, order) ordering with opportunities
/// recomputed from scratch. Rows with an empty KC, an empty student id, or
/// an outcome outside the mapping's accepted encodings are dropped and the
/// counts recorded in provenance. If every order value is a non-negative
/// integer the values themselves become `order_index` (so canonical files
/// round-trip); otherwise rows are ranked by the order field lexically and
/// `order_index` is the source-row rank.
pub fn parse_transactions<R: Read>(
    mut raw: R,
    mapping: &ColumnMapping,
    name: &str,
) -> Result<Dataset, CorpusError> {
    let mut text = String::new();
    raw.read_to_string(&mut text).map_err(|source| CorpusError::Io {
        path: name.to_string(),
        source,
    })?;
    parse_transactions_str(&text, mapping, name)
}

/// String-input variant of [`parse_transactions`].
pub fn parse_transactions_str(
    text: &str,
    mapping: &ColumnMapping,
    name: &str,
) -> Result<Dataset, CorpusError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or(CorpusError::Empty { context: "no header row".into() })?
        .trim_end_matches('\r');
    let columns: Vec<&str> = header.split('\t').collect();
    let index_of = |wanted: &str| -> Result<usize, CorpusError> {
        columns
            .iter()
            .position(|c| c.trim() == wanted)
            .ok_or_else(|| CorpusError::MissingColumn { column: wanted.to_string() })
    };
    let student_col = index_of(&mapping.student)?;
    let kc_col = index_of(&mapping.kc)?;
    let order_col = index_of(&mapping.order)?;
    let outcome_col = index_of(&mapping.outcome)?;

    let mut dropped_missing_kc = 0u64;
    let mut dropped_missing_student = 0u64;
    let mut dropped_unknown_outcome = 0u64;
    let mut raw_rows: Vec<RawRow> = Vec::new();
    let mut all_integer_orders = true;

    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let needed = student_col.max(kc_col).max(order_col).max(outcome_col);
        if fields.len() <= needed {
            return Err(CorpusError::Ragged {
                line: lineno + 2,
                expected: columns.len(),
                found: fields.len(),
            });
        }
        let student = fields[student_col].trim();
        let kc = fields[kc_col].trim();
        let order_raw = fields[order_col].trim();
        if kc.is_empty() {
            dropped_missing_kc += 1;
            continue;
        }
        if student.is_empty() {
            dropped_missing_student += 1;
            continue;
        }
        let outcome = match mapping.classify_outcome(fields[outcome_col]) {
            Some(v) => v,
            None => {
                dropped_unknown_outcome += 1;
                continue;
            }
        };
        if order_raw.parse::<u64>().is_err() {
            all_integer_orders = false;
        }
        raw_rows.push(RawRow {
            student: student.to_string(),
            kc: kc.to_string(),
            order_raw: order_raw.to_string(),
            outcome,
            source_rank: raw_rows.len() as u64,
        });
    }

    // Sort key within a pair: the integer order value when the whole file is
    // integer-ordered, otherwise the lexical order string with source order
    // breaking ties (ties across pairs are harmless either way).
    if all_integer_orders {
        raw_rows.sort_by(|a, b| {
            let (oa, ob) = (
                a.order_raw.parse::<u64>().expect("checked integer"),
                b.order_raw.parse::<u64>().expect("checked integer"),
            );
            (&a.student, &a.kc, oa, a.source_rank).cmp(&(&b.student, &b.kc, ob, b.source_rank))
        });
    } else {
        raw_rows.sort_by(|a, b| {
            (&a.student, &a.kc, &a.order_raw, a.source_rank).cmp(&(
                &b.student,
                &b.kc,
                &b.order_raw,
                b.source_rank,
            ))
        });
    }

    // Ambiguous chronology: the same (student, kc, order) triple twice.
    let mut seen: BTreeMap<(&str, &str, &str), u64> = BTreeMap::new();
    for r in &raw_rows {
        if let Some(&first) = seen.get(&(r.student.as_str(), r.kc.as_str(), r.order_raw.as_str()))
        {
            return Err(CorpusError::AmbiguousOrder {
                student: r.student.clone(),
                kc: r.kc.clone(),
                order: r.order_raw.clone(),
                first_row: first as usize + 1,
            });
        }
        seen.insert((&r.student, &r.kc, &r.order_raw), r.source_rank);
    }
    drop(seen);

    let rows: Vec<ObservationRow> = raw_rows
        .iter()
        .map(|r| ObservationRow {
            student_id: r.student.clone(),
            kc_id: r.kc.clone(),
            order_index: if all_integer_orders {
                r.order_raw.parse::<u64>().expect("checked integer")
            } else {
                r.source_rank
            },
            opportunity: 0,
            outcome: r.outcome,
        })
        .collect();

    let mut provenance = Provenance::new(name);
    provenance.steps.push(ProvenanceStep::Parsed {
        dropped_missing_kc,
        dropped_unknown_outcome,
        dropped_missing_student,
    });
    Ok(Dataset::from_rows(name, rows, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::pairs;

    fn parse(text: &str) -> Result<Dataset, CorpusError> {
        parse_transactions_str(text, &ColumnMapping::default(), "t")
    }

    #[test]
    fn three_line_file_two_students_one_kc() {
        let d = parse("student\tkc\torder\toutcome\na\tk\t1\t1\nb\tk\t2\t1\nb\tk\t5\t1\n")
            .unwrap();
        assert_eq!(d.rows.len(), 3);
        let opp: Vec<u32> = d.rows.iter().map(|r| r.opportunity).collect();
        assert_eq!(opp, vec![0, 0, 1]);
        d.validate().unwrap();
    }

    #[test]
    fn empty_kc_row_dropped_and_counted() {
        let d = parse("student\tkc\torder\toutcome\na\tk\t1\t1\nb\t\t2\t1\n").unwrap();
        assert_eq!(d.rows.len(), 1);
        assert_eq!(d.provenance.parse_drop_count(), 1);
    }

    #[test]
    fn unknown_outcome_dropped() {
        let d = parse(
            "student\tkc\torder\toutcome\na\tk\t1\tCorrect\na\tk\t2\tINCORRECT\na\tk\t3\thint\n",
        )
        .unwrap();
        assert_eq!(d.rows.len(), 2);
        assert_eq!(d.rows[0].outcome, 1);
        assert_eq!(d.rows[1].outcome, 0);
        assert_eq!(d.provenance.parse_drop_count(), 1);
    }

    #[test]
    fn shuffled_file_parses_identically_to_sorted() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut body: Vec<String> = Vec::new();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for i in 0..1000u64 {
            let s = format!("s{}", i % 23);
            let k = format!("k{}", i % 11);
            body.push(format!("{s}\t{k}\t{i}\t{}", i % 2));
        }
        let sorted_text = format!("student\tkc\torder\toutcome\n{}\n", body.join("\n"));
        body.shuffle(&mut rng);
        let shuffled_text = format!("student\tkc\torder\toutcome\n{}\n", body.join("\n"));
        let a = parse(&sorted_text).unwrap();
        let b = parse(&shuffled_text).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn missing_mapped_column_is_named() {
        let err = parse("student\tkc\toutcome\na\tk\t1\n").unwrap_err();
        match err {
            CorpusError::MissingColumn { column } => assert_eq!(column, "order"),
            other => panic!("expected MissingColumn, got {other}"),
        }
    }

    #[test]
    fn duplicate_triple_is_ambiguous() {
        let err = parse("student\tkc\torder\toutcome\na\tk\t1\t1\na\tk\t1\t0\n").unwrap_err();
        assert!(matches!(err, CorpusError::AmbiguousOrder { .. }), "{err}");
    }

    #[test]
    fn timestamp_orders_rank_lexically() {
        let d = parse(
            "student\tkc\torder\toutcome\n\
             a\tk\t2021-01-02 10:00:00\t0\n\
             a\tk\t2021-01-01 09:00:00\t1\n",
        )
        .unwrap();
        // the 09:00 attempt comes first
        assert_eq!(d.rows[0].outcome, 1);
        assert_eq!(d.rows[0].opportunity, 0);
        assert_eq!(d.rows[1].outcome, 0);
        assert_eq!(d.rows[1].opportunity, 1);
    }

    #[test]
    fn mapping_file_adapts_headers() {
        let mapping = ColumnMapping::from_str_spec(
            "student=Anon Student Id\nkc=KC (Default)\norder=Time\noutcome=First Attempt\n\
             correct_values=correct\nincorrect_values=incorrect,hint",
        )
        .unwrap();
        let d = parse_transactions_str(
            "Anon Student Id\tKC (Default)\tTime\tFirst Attempt\ns\tk\t3\thint\ns\tk\t4\tcorrect\n",
            &mapping,
            "export",
        )
        .unwrap();
        assert_eq!(d.rows.len(), 2);
        assert_eq!(d.rows[0].outcome, 0);
        assert_eq!(d.rows[1].outcome, 1);
    }

    #[test]
    fn canonical_round_trip_is_identity() {
        let d = parse(
            "student\tkc\torder\toutcome\nb\tk\t7\t0\na\tk\t1\t1\na\tj\t2\t0\na\tk\t9\t1\n",
        )
        .unwrap();
        let text = d.to_canonical_tsv();
        let d2 = parse(&text).unwrap();
        assert_eq!(d.rows, d2.rows);
        assert_eq!(pairs(&d), pairs(&d2));
    }
}
