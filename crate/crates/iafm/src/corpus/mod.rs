//! Practice-log ingestion, preprocessing, and pair-length description.
//!
//! The analytic unit throughout is the (student, KC) pair: one student's
//! chronological attempts at tasks tagged with one knowledge component. A
//! [`Dataset`] keeps its rows sorted by (student, kc, order) with the
//! opportunity counter recomputed from that ordering, so every downstream
//! consumer sees `opportunity = 0..L-1` within each pair regardless of the
//! order rows arrived in.

mod parse;

pub use parse::{parse_transactions, parse_transactions_str, ColumnMapping};

use crate::stats;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use thiserror::Error;

/// One practice attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationRow {
    pub student_id: String,
    pub kc_id: String,
    /// Chronological key within the source log. Unique within a pair.
    pub order_index: u64,
    /// Number of earlier attempts by this student on this KC.
    pub opportunity: u32,
    /// 1 = correct on first try, 0 = not.
    pub outcome: u8,
}

/// What produced a dataset and what has been done to it since.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub steps: Vec<ProvenanceStep>,
}

impl Provenance {
    pub fn new(source: impl Into<String>) -> Self {
        Provenance { source: source.into(), steps: Vec::new() }
    }

    /// Total rows dropped at parse time, if this dataset came from a parse.
    pub fn parse_drop_count(&self) -> u64 {
        self.steps
            .iter()
            .map(|s| match s {
                ProvenanceStep::Parsed {
                    dropped_missing_kc,
                    dropped_unknown_outcome,
                    dropped_missing_student,
                } => dropped_missing_kc + dropped_unknown_outcome + dropped_missing_student,
                _ => 0,
            })
            .sum()
    }
}

/// Auditable record of one pipeline step applied to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ProvenanceStep {
    Parsed {
        dropped_missing_kc: u64,
        dropped_unknown_outcome: u64,
        dropped_missing_student: u64,
    },
    Preprocessed {
        min_students: u32,
        min_opportunities: u32,
        kcs_removed: u64,
        rows_removed: u64,
    },
    Truncated {
        depth: u32,
        rows_dropped: u64,
    },
    Stratified {
        threshold: u32,
        stratum: String,
    },
    Windowed {
        length: u32,
        seed: u64,
        reindexed: bool,
        rows_dropped: u64,
    },
    Simulated {
        seed: u64,
    },
}

/// A corpus of practice attempts, held in canonical (student, kc, order)
/// order with per-pair opportunity counts 0..L-1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub rows: Vec<ObservationRow>,
    pub provenance: Provenance,
}

/// One (student, KC) attempt sequence; `row_range` indexes into the owning
/// dataset's rows, which are chronological within the range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PracticePair {
    pub student_id: String,
    pub kc_id: String,
    pub length: u32,
    pub row_range: Range<usize>,
}

impl PracticePair {
    pub fn row_indices(&self) -> Range<usize> {
        self.row_range.clone()
    }
}

/// Pair-length and size descriptives for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dataset: String,
    pub n_students: u64,
    pub n_kcs: u64,
    pub n_obs: u64,
    pub pair_length_median: f64,
    pub pair_length_max: u32,
    pub obs_per_student_median: f64,
    pub threshold: u32,
    /// Fraction of pairs with length strictly greater than `threshold`.
    pub pct_pairs_gt: f64,
    /// Fraction of observations living in pairs with length > `threshold`.
    pub pct_obs_gt: f64,
    /// Cumulative distribution of pair lengths: (length, fraction of pairs
    /// with L <= length), nondecreasing, ending at 1.
    pub ecdf: Vec<(u32, f64)>,
}

impl CorpusStats {
    /// ECDF evaluated at `x`: fraction of pairs with length <= x.
    pub fn ecdf_at(&self, x: u32) -> f64 {
        let mut value = 0.0;
        for &(len, frac) in &self.ecdf {
            if len <= x {
                value = frac;
            } else {
                break;
            }
        }
        value
    }

    /// Single-row CSV with the descriptive column set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataset,n_students,n_kcs,n_obs,pair_length_median,pair_length_max,\
             obs_per_student_median,threshold,pct_pairs_gt,pct_obs_gt\n",
        );
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            self.dataset,
            self.n_students,
            self.n_kcs,
            self.n_obs,
            self.pair_length_median,
            self.pair_length_max,
            self.obs_per_student_median,
            self.threshold,
            self.pct_pairs_gt,
            self.pct_obs_gt
        ));
        out
    }

    /// Two-column CSV of the pair-length ECDF.
    pub fn ecdf_csv(&self) -> String {
        let mut out = String::from("length,cum_fraction\n");
        for &(len, frac) in &self.ecdf {
            out.push_str(&format!("{},{}\n", len, frac));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing mapped column '{column}' in header")]
    MissingColumn { column: String },
    #[error(
        "ambiguous chronology: duplicate (student, kc, order) = ({student}, {kc}, {order}), \
         first at data row {first_row}"
    )]
    AmbiguousOrder { student: String, kc: String, order: String, first_row: usize },
    #[error("data row {line} has {found} fields; header has {expected}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("empty dataset: {context}")]
    Empty { context: String },
    #[error("invalid column mapping: {0}")]
    BadMapping(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Dataset {
    /// Build a dataset from rows in any order: sorts by (student, kc,
    /// order_index) with ties kept in the given order, then recomputes
    /// opportunities.
    pub fn from_rows(
        name: impl Into<String>,
        mut rows: Vec<ObservationRow>,
        provenance: Provenance,
    ) -> Dataset {
        rows.sort_by(|a, b| {
            (&a.student_id, &a.kc_id, a.order_index).cmp(&(&b.student_id, &b.kc_id, b.order_index))
        });
        let mut d = Dataset { name: name.into(), rows, provenance };
        d.recompute_opportunities();
        d
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn student_ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.student_id.as_str()).collect()
    }

    pub fn kc_ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.kc_id.as_str()).collect()
    }

    /// Reassign `opportunity = 0..L-1` within each (student, kc) run.
    /// Rows must already be in canonical order.
    pub(crate) fn recompute_opportunities(&mut self) {
        let mut t = 0u32;
        for i in 0..self.rows.len() {
            if i > 0
                && self.rows[i].student_id == self.rows[i - 1].student_id
                && self.rows[i].kc_id == self.rows[i - 1].kc_id
            {
                t += 1;
            } else {
                t = 0;
            }
            self.rows[i].opportunity = t;
        }
    }

    /// Check the representation invariants; used by tests and debug builds.
    pub fn validate(&self) -> Result<(), String> {
        for w in self.rows.windows(2) {
            let key = |r: &ObservationRow| (r.student_id.clone(), r.kc_id.clone(), r.order_index);
            if key(&w[0]) > key(&w[1]) {
                return Err("rows out of canonical order".into());
            }
            if w[0].student_id == w[1].student_id
                && w[0].kc_id == w[1].kc_id
                && w[0].order_index == w[1].order_index
            {
                return Err(format!(
                    "duplicate order_index {} in pair ({}, {})",
                    w[0].order_index, w[0].student_id, w[0].kc_id
                ));
            }
        }
        let mut expected = 0u32;
        for (i, r) in self.rows.iter().enumerate() {
            if r.student_id.is_empty() || r.kc_id.is_empty() {
                return Err(format!("row {i}: empty id"));
            }
            if r.outcome > 1 {
                return Err(format!("row {i}: non-binary outcome {}", r.outcome));
            }
            if i > 0
                && self.rows[i].student_id == self.rows[i - 1].student_id
                && self.rows[i].kc_id == self.rows[i - 1].kc_id
            {
                expected += 1;
            } else {
                expected = 0;
            }
            if r.opportunity != expected {
                return Err(format!(
                    "row {i}: opportunity {} != expected {expected}",
                    r.opportunity
                ));
            }
        }
        Ok(())
    }

    /// Canonical TSV serialization: header `student kc order outcome`,
    /// tab-delimited, LF endings, rows in canonical order.
    pub fn to_canonical_tsv(&self) -> String {
        let mut out = String::from("student\tkc\torder\toutcome\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.student_id, r.kc_id, r.order_index, r.outcome
            ));
        }
        out
    }
}

/// Decompose a dataset into its (student, KC) pairs, in canonical order.
/// Pair lengths always sum to `d.n_obs()`.
pub fn pairs(d: &Dataset) -> Vec<PracticePair> {
    let mut out = Vec::new();
    let rows = &d.rows;
    let mut start = 0usize;
    for i in 1..=rows.len() {
        let boundary = i == rows.len()
            || rows[i].student_id != rows[start].student_id
            || rows[i].kc_id != rows[start].kc_id;
        if boundary {
            out.push(PracticePair {
                student_id: rows[start].student_id.clone(),
                kc_id: rows[start].kc_id.clone(),
                length: (i - start) as u32,
                row_range: start..i,
            });
            start = i;
        }
    }
    out
}

/// Retain only KCs practiced by at least `min_students` distinct students
/// and with at least one pair of length >= `min_opportunities`. The filter
/// is applied once per KC, not iterated to a fixed point; the provenance
/// step records what was removed.
pub fn preprocess(
    d: &Dataset,
    min_students: u32,
    min_opportunities: u32,
) -> Result<Dataset, CorpusError> {
    #[derive(Default)]
    struct KcTally<'a> {
        students: BTreeSet<&'a str>,
        max_pair_len: u32,
    }
    let mut tallies: BTreeMap<&str, KcTally> = BTreeMap::new();
    for p in pairs(d) {
        let entry = tallies.entry(&d.rows[p.row_range.start].kc_id).or_default();
        entry.students.insert(&d.rows[p.row_range.start].student_id);
        entry.max_pair_len = entry.max_pair_len.max(p.length);
    }

    let mut keep: BTreeSet<&str> = BTreeSet::new();
    let mut rejections: Vec<String> = Vec::new();
    for (kc, tally) in &tallies {
        let enough_students = tally.students.len() as u32 >= min_students;
        let enough_practice = tally.max_pair_len >= min_opportunities;
        if enough_students && enough_practice {
            keep.insert(kc);
        } else {
            let mut why = Vec::new();
            if !enough_students {
                why.push(format!("{} students < {}", tally.students.len(), min_students));
            }
            if !enough_practice {
                why.push(format!(
                    "max pair length {} < {}",
                    tally.max_pair_len, min_opportunities
                ));
            }
            rejections.push(format!("{kc}: {}", why.join("; ")));
        }
    }

    let retained: Vec<ObservationRow> = d
        .rows
        .iter()
        .filter(|r| keep.contains(r.kc_id.as_str()))
        .cloned()
        .collect();
    if retained.is_empty() {
        return Err(CorpusError::Empty {
            context: format!(
                "no KC survives preprocessing (min_students={min_students}, \
                 min_opportunities={min_opportunities}); rejected: [{}]",
                rejections.join(" | ")
            ),
        });
    }

    let rows_removed = (d.rows.len() - retained.len()) as u64;
    let kcs_removed = (tallies.len() - keep.len()) as u64;
    let mut provenance = d.provenance.clone();
    provenance.steps.push(ProvenanceStep::Preprocessed {
        min_students,
        min_opportunities,
        kcs_removed,
        rows_removed,
    });
    Ok(Dataset::from_rows(d.name.clone(), retained, provenance))
}

/// Pair-length descriptives: interpolated medians, max, and the share of
/// pairs/observations beyond `threshold`, plus the pair-length ECDF.
pub fn describe(d: &Dataset, threshold: u32) -> Result<CorpusStats, CorpusError> {
    if d.rows.is_empty() {
        return Err(CorpusError::Empty { context: "describe on empty dataset".into() });
    }
    let pair_list = pairs(d);
    let lengths: Vec<f64> = pair_list.iter().map(|p| p.length as f64).collect();
    let n_obs = d.rows.len() as u64;

    let mut per_student: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &d.rows {
        *per_student.entry(r.student_id.as_str()).or_insert(0) += 1;
    }
    let obs_counts: Vec<f64> = per_student.values().map(|&c| c as f64).collect();

    let pairs_gt = pair_list.iter().filter(|p| p.length > threshold).count();
    let obs_gt: u64 = pair_list
        .iter()
        .filter(|p| p.length > threshold)
        .map(|p| p.length as u64)
        .sum();

    let mut sorted_lengths: Vec<u32> = pair_list.iter().map(|p| p.length).collect();
    sorted_lengths.sort_unstable();
    let n_pairs = sorted_lengths.len();
    let mut ecdf = Vec::new();
    let mut i = 0;
    while i < n_pairs {
        let len = sorted_lengths[i];
        let mut j = i;
        while j < n_pairs && sorted_lengths[j] == len {
            j += 1;
        }
        ecdf.push((len, j as f64 / n_pairs as f64));
        i = j;
    }

    Ok(CorpusStats {
        dataset: d.name.clone(),
        n_students: per_student.len() as u64,
        n_kcs: d.kc_ids().len() as u64,
        n_obs,
        pair_length_median: stats::median(&lengths),
        pair_length_max: *sorted_lengths.last().expect("nonempty"),
        obs_per_student_median: stats::median(&obs_counts),
        threshold,
        pct_pairs_gt: pairs_gt as f64 / n_pairs as f64,
        pct_obs_gt: obs_gt as f64 / n_obs as f64,
        ecdf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, k: &str, order: u64, y: u8) -> ObservationRow {
        ObservationRow {
            student_id: s.into(),
            kc_id: k.into(),
            order_index: order,
            opportunity: 0,
            outcome: y,
        }
    }

    fn dataset(rows: Vec<ObservationRow>) -> Dataset {
        Dataset::from_rows("test", rows, Provenance::new("test"))
    }

    #[test]
    fn pairs_single_row() {
        let d = dataset(vec![row("s1", "k1", 0, 1)]);
        let ps = pairs(&d);
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].length, 1);
    }

    #[test]
    fn pairs_lengths_sum_to_n_obs() {
        // two students x two KCs, lengths 3/5/2/7
        let mut rows = Vec::new();
        for (s, k, l) in [("a", "x", 3), ("a", "y", 5), ("b", "x", 2), ("b", "y", 7)] {
            for t in 0..l {
                rows.push(row(s, k, t, 1));
            }
        }
        let d = dataset(rows);
        let ps = pairs(&d);
        assert_eq!(ps.len(), 4);
        let mut lens: Vec<u32> = ps.iter().map(|p| p.length).collect();
        lens.sort_unstable();
        assert_eq!(lens, vec![2, 3, 5, 7]);
        assert_eq!(ps.iter().map(|p| p.length as usize).sum::<usize>(), d.n_obs());
    }

    #[test]
    fn pairs_random_corpus_matches_hash_set_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        for _ in 0..400 {
            let s = format!("s{}", rng.gen_range(0..13));
            let k = format!("k{}", rng.gen_range(0..7));
            rows.push(row(&s, &k, rng.gen_range(0..1_000_000), rng.gen_range(0..2)));
        }
        // dedupe (s, k, order) triples so from_rows sees unambiguous chronology
        rows.sort_by_key(|r| (r.student_id.clone(), r.kc_id.clone(), r.order_index));
        rows.dedup_by_key(|r| (r.student_id.clone(), r.kc_id.clone(), r.order_index));
        let d = dataset(rows.clone());

        let distinct: std::collections::HashSet<(String, String)> = rows
            .iter()
            .map(|r| (r.student_id.clone(), r.kc_id.clone()))
            .collect();
        let ps = pairs(&d);
        assert_eq!(ps.len(), distinct.len());
        assert_eq!(ps.iter().map(|p| p.length as usize).sum::<usize>(), d.n_obs());
        d.validate().unwrap();
    }

    #[test]
    fn preprocess_removes_kc_below_min_students() {
        let mut rows = Vec::new();
        for s in 0..9 {
            for t in 0..5 {
                rows.push(row(&format!("s{s}"), "few", t, 1));
            }
        }
        for s in 0..12 {
            for t in 0..5 {
                rows.push(row(&format!("s{s}"), "ok", t, 1));
            }
        }
        let d = dataset(rows);
        let out = preprocess(&d, 10, 2).unwrap();
        assert_eq!(out.kc_ids().into_iter().collect::<Vec<_>>(), vec!["ok"]);
    }

    #[test]
    fn preprocess_removes_kc_with_only_singleton_pairs() {
        let mut rows = Vec::new();
        for s in 0..12 {
            rows.push(row(&format!("s{s}"), "short", 0, 1));
        }
        for s in 0..12 {
            for t in 0..3 {
                rows.push(row(&format!("s{s}"), "long", t, 1));
            }
        }
        let d = dataset(rows);
        let out = preprocess(&d, 10, 2).unwrap();
        assert_eq!(out.kc_ids().into_iter().collect::<Vec<_>>(), vec!["long"]);
    }

    #[test]
    fn preprocess_matches_brute_force_filter_on_synthetic_corpus() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for kc in 0..20 {
            let n_students = rng.gen_range(5..20);
            for s in 0..n_students {
                let len = rng.gen_range(1..5);
                for t in 0..len {
                    rows.push(row(&format!("s{s}"), &format!("k{kc}"), t, 1));
                }
            }
        }
        let d = dataset(rows.clone());

        // brute force over the raw rows
        let mut by_kc: BTreeMap<String, (BTreeSet<String>, BTreeMap<String, u32>)> =
            BTreeMap::new();
        for r in &rows {
            let e = by_kc.entry(r.kc_id.clone()).or_default();
            e.0.insert(r.student_id.clone());
            *e.1.entry(r.student_id.clone()).or_insert(0) += 1;
        }
        let expect: BTreeSet<String> = by_kc
            .iter()
            .filter(|(_, (students, pair_lens))| {
                students.len() >= 10 && pair_lens.values().any(|&l| l >= 2)
            })
            .map(|(k, _)| k.clone())
            .collect();

        match preprocess(&d, 10, 2) {
            Ok(out) => {
                let got: BTreeSet<String> =
                    out.kc_ids().into_iter().map(String::from).collect();
                assert_eq!(got, expect);
            }
            Err(CorpusError::Empty { .. }) => assert!(expect.is_empty()),
            Err(e) => panic!("unexpected error: {e}"),
        }
    }

    #[test]
    fn preprocess_is_idempotent() {
        let mut rows = Vec::new();
        for kc in 0..4 {
            for s in 0..12 {
                for t in 0..3 {
                    rows.push(row(&format!("s{s}"), &format!("k{kc}"), t, (s + t) as u8 % 2));
                }
            }
        }
        let d = dataset(rows);
        let once = preprocess(&d, 10, 2).unwrap();
        let twice = preprocess(&once, 10, 2).unwrap();
        assert_eq!(once.rows, twice.rows);
    }

    #[test]
    fn preprocess_empty_result_reports_reasons() {
        let d = dataset(vec![row("s1", "k1", 0, 1)]);
        let err = preprocess(&d, 10, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("k1"), "reasons should name the KC: {msg}");
        assert!(msg.contains("1 students < 10"), "{msg}");
    }

    #[test]
    fn describe_constant_lengths() {
        let mut rows = Vec::new();
        for s in ["a", "b", "c"] {
            for t in 0..2 {
                rows.push(row(s, "k", t, 1));
            }
        }
        let d = dataset(rows);
        let st = describe(&d, 10).unwrap();
        assert_eq!(st.pct_pairs_gt, 0.0);
        assert_eq!(st.pct_obs_gt, 0.0);
        assert_eq!(st.pair_length_median, 2.0);
        assert_eq!(st.pair_length_max, 2);
    }

    #[test]
    fn describe_matches_brute_force_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let mut rows = Vec::new();
        let mut lens: Vec<u32> = Vec::new();
        for i in 0..500 {
            let len = rng.gen_range(1..40u32);
            lens.push(len);
            // unique (student, kc) per pair
            for t in 0..len {
                rows.push(row(&format!("s{}", i % 37), &format!("k{i}"), t as u64, 1));
            }
        }
        let d = dataset(rows.clone());
        let st = describe(&d, 10).unwrap();

        let lens_f: Vec<f64> = lens.iter().map(|&l| l as f64).collect();
        let n_obs: u64 = lens.iter().map(|&l| l as u64).sum();
        assert_eq!(st.n_obs, n_obs);
        assert_eq!(st.pair_length_median, crate::stats::median(&lens_f));
        assert_eq!(st.pair_length_max, *lens.iter().max().unwrap());
        let gt: Vec<u32> = lens.iter().copied().filter(|&l| l > 10).collect();
        assert_eq!(st.pct_pairs_gt, gt.len() as f64 / lens.len() as f64);
        assert_eq!(
            st.pct_obs_gt,
            gt.iter().map(|&l| l as u64).sum::<u64>() as f64 / n_obs as f64
        );

        // per-student median oracle
        let mut per_student: BTreeMap<String, u64> = BTreeMap::new();
        for r in &rows {
            *per_student.entry(r.student_id.clone()).or_insert(0) += 1;
        }
        let counts: Vec<f64> = per_student.values().map(|&c| c as f64).collect();
        assert_eq!(st.obs_per_student_median, crate::stats::median(&counts));
    }

    #[test]
    fn ecdf_at_threshold_complements_pct_pairs_gt() {
        let mut rows = Vec::new();
        for (i, len) in [3u32, 10, 11, 14, 2].iter().enumerate() {
            for t in 0..*len {
                rows.push(row("s", &format!("k{i}"), t as u64, 1));
            }
        }
        let d = dataset(rows);
        let st = describe(&d, 10).unwrap();
        assert!((st.ecdf_at(10) - (1.0 - st.pct_pairs_gt)).abs() < 1e-15);
        assert_eq!(st.ecdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn describe_empty_errors() {
        let d = dataset(Vec::new());
        assert!(matches!(describe(&d, 10), Err(CorpusError::Empty { .. })));
    }
}
