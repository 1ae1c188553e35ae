use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::records::PatientRecord;
use crate::error::{Error, Result};

/// Sparse binary `N x m` matrix stored as sorted column lists per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisMatrix {
    n_cols: usize,
    rows: Vec<Vec<usize>>,
}

impl DiagnosisMatrix {
    /// Columns in each row are sorted and deduplicated.
    pub fn new(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            if let Some(&c) = row.last() {
                if c >= n_cols {
                    return Err(Error::Index {
                        what: "diagnosis column",
                        index: c,
                        len: n_cols,
                    });
                }
            }
        }
        Ok(Self { n_cols, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for &c in &self.rows[i] {
            out[c] = 1.0;
        }
        out
    }

    /// Number of rows with each column set.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols];
        for row in &self.rows {
            for &c in row {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Coordinate-list text: `N m nnz` header, then one `row col` line per
    /// entry.
    pub fn to_coo(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n_rows(), self.n_cols, self.nnz());
        for (i, row) in self.rows.iter().enumerate() {
            for c in row {
                out.push_str(&format!("{i} {c}\n"));
            }
        }
        out
    }

    pub fn from_coo(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("diagnosis COO: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("invalid header")))
            .collect::<Result<_>>()?;
        let [n, m, nnz] = header[..] else {
            return Err(bad("header must be `N m nnz`"));
        };
        let mut rows = vec![Vec::new(); n];
        let mut seen = 0;
        for line in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            let (Some(Ok(i)), Some(Ok(j)), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(&format!("invalid entry `{line}`")));
            };
            if i >= n {
                return Err(bad(&format!("row {i} out of range")));
            }
            rows[i].push(j);
            seen += 1;
        }
        if seen != nnz {
            return Err(bad(&format!("header promises {nnz} entries, found {seen}")));
        }
        Self::new(m, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyEntry {
    /// `|`-joined path prefix.
    pub code: String,
    pub column: usize,
    /// Training patients carrying the code (`d_mu`).
    pub count: usize,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisVocabulary {
    entries: Vec<VocabularyEntry>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub threshold: f64,
}

impl DiagnosisVocabulary {
    pub fn from_entries(entries: Vec<VocabularyEntry>, threshold: f64) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.column != i {
                return Err(Error::Data(format!(
                    "vocabulary entry `{}` has column {} at position {i}",
                    e.code, e.column
                )));
            }
            if e.count == 0 {
                return Err(Error::Data(format!("vocabulary entry `{}` has zero count", e.code)));
            }
            if e.parent.is_some_and(|p| p >= entries.len()) {
                return Err(Error::Data(format!("vocabulary entry `{}` has a dangling parent", e.code)));
            }
            index.insert(e.code.clone(), i);
        }
        Ok(Self {
            entries,
            index,
            threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabularyEntry] {
        &self.entries
    }

    pub fn column(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    /// Occurrence counts `d_mu` indexed by column.
    pub fn counts(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.count).collect()
    }

    /// Ancestor columns of `column`, nearest first.
    pub fn ancestors(&self, column: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.entries[column].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.entries[p].parent;
        }
        out
    }

    /// Retained columns for one code path.
    pub fn encode_path(&self, path: &[String]) -> Vec<usize> {
        (1..=path.len())
            .filter_map(|l| self.column(&path[..l].join("|")))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["code", "column", "count", "parent"])
            .expect("in-memory write");
        for e in &self.entries {
            let parent = e.parent.map_or(String::new(), |p| p.to_string());
            w.write_record([e.code.as_str(), &e.column.to_string(), &e.count.to_string(), &parent])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
    }

    pub fn from_csv(text: &str, threshold: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Data(format!("vocabulary: {e}")))?;
            let num = |i: usize| {
                row[i]
                    .parse::<usize>()
                    .map_err(|_| Error::Data(format!("vocabulary: invalid integer `{}`", &row[i])))
            };
            entries.push(VocabularyEntry {
                code: row[0].to_string(),
                column: num(1)?,
                count: num(2)?,
                parent: if row[3].is_empty() { None } else { Some(num(3)?) },
            });
        }
        Self::from_entries(entries, threshold)
    }
}

/// Every prefix of every diagnosis path recorded before `horizon_hours`.
fn patient_codes(record: &PatientRecord, horizon_hours: f64) -> Result<BTreeSet<String>> {
    let mut codes = BTreeSet::new();
    for d in &record.diagnoses {
        if d.path.is_empty() || d.path.iter().any(|p| p.is_empty()) {
            return Err(Error::Data(format!(
                "patient {}: malformed diagnosis path `{}`",
                record.patient_id,
                d.joined()
            )));
        }
        if d.hour < horizon_hours {
            for l in 1..=d.path.len() {
                codes.insert(d.path[..l].join("|"));
            }
        }
    }
    Ok(codes)
}

/// Builds the vocabulary from the `train` rows and encodes every record.
///
/// A code is retained when its training prevalence strictly exceeds
/// `threshold`. Since a prefix occurs in at least as many patients as any of
/// its extensions, ancestors of retained codes are retained too. Columns are
/// ordered by code string, which places parents before children.
pub fn encode_diagnoses(
    records: &[PatientRecord],
    train: &[usize],
    threshold: f64,
    horizon_hours: f64,
) -> Result<(DiagnosisMatrix, DiagnosisVocabulary)> {
    if train.is_empty() {
        return Err(Error::Data("diagnosis vocabulary needs training patients".into()));
    }
    let per_patient: Vec<BTreeSet<String>> = records
        .iter()
        .map(|r| patient_codes(r, horizon_hours))
        .collect::<Result<_>>()?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in train {
        for code in &per_patient[i] {
            *counts.entry(code.as_str()).or_default() += 1;
        }
    }
    let n_train = train.len() as f64;
    let retained: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c as f64 / n_train > threshold)
        .collect();
    let columns: HashMap<&str, usize> =
        retained.iter().enumerate().map(|(i, &(code, _))| (code, i)).collect();
    let entries = retained
        .iter()
        .enumerate()
        .map(|(i, &(code, count))| VocabularyEntry {
            code: code.to_string(),
            column: i,
            count,
            parent: code
                .rsplit_once('|')
                .and_then(|(parent, _)| columns.get(parent).copied()),
        })
        .collect();
    let vocab = DiagnosisVocabulary::from_entries(entries, threshold)?;
    let rows = per_patient
        .iter()
        .map(|codes| codes.iter().filter_map(|c| vocab.column(c)).collect())
        .collect();
    Ok((DiagnosisMatrix::new(vocab.len(), rows)?, vocab))
}
