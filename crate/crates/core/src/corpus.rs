//! Labeled requirement-pair datasets: loading, label normalization,
//! subsampling and cross-validation fold plans.
//!
//! Two on-disk formats are accepted. JSONL carries one object per line with
//! keys `id` (optional), `sentence1`, `sentence2` and `gold_label`
//! (optional). CSV requires a header row naming `sentence1` and `sentence2`;
//! `id` and `gold_label` columns are optional.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown label {raw:?} at line {line}")]
    UnknownLabel { line: usize, raw: String },
    #[error("empty text in field {field} at line {line}")]
    EmptyText { line: usize, field: &'static str },
    #[error("duplicate pair id {0:?}")]
    DuplicateId(String),
    #[error("cannot infer dataset format from {0}; expected .jsonl or .csv")]
    UnknownFormat(PathBuf),
    #[error("sample size {requested} outside 1..={available}")]
    NTooLarge { requested: usize, available: usize },
    #[error("{items} items cannot fill {n_folds} non-empty folds")]
    TooFewSamples { items: usize, n_folds: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
}

/// Gold relation between two requirements. Integer codes are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Conflict = 0,
    Duplicate = 1,
    Neutral = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Conflict, Label::Duplicate, Label::Neutral];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Label> {
        Label::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Conflict => "Conflict",
            Label::Duplicate => "Duplicate",
            Label::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    /// Accepts the normalized names and the NLI names they replace
    /// (entailment → Duplicate, contradiction → Conflict), ignoring case.
    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "conflict" | "contradiction" => Ok(Label::Conflict),
            "duplicate" | "entailment" => Ok(Label::Duplicate),
            "neutral" => Ok(Label::Neutral),
            _ => Err(UnknownLabel(raw.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementPair {
    pub id: String,
    pub text1: String,
    pub text2: String,
    pub label: Option<Label>,
}

/// An ordered, id-unique collection of requirement pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: String,
    pairs: Vec<RequirementPair>,
    label_counts: BTreeMap<Label, usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, pairs: Vec<RequirementPair>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for pair in &pairs {
            if !seen.insert(pair.id.as_str()) {
                return Err(CorpusError::DuplicateId(pair.id.clone()));
            }
        }
        let mut label_counts = BTreeMap::new();
        for label in pairs.iter().filter_map(|p| p.label) {
            *label_counts.entry(label).or_insert(0) += 1;
        }
        Ok(Self {
            name: name.into(),
            pairs,
            label_counts,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pairs: Vec::new(),
            label_counts: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pairs(&self) -> &[RequirementPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn label_counts(&self) -> &BTreeMap<Label, usize> {
        &self.label_counts
    }

    pub fn count(&self, label: Label) -> usize {
        self.label_counts.get(&label).copied().unwrap_or(0)
    }

    /// Labels with at least one pair, in code order.
    pub fn labels_present(&self) -> Vec<Label> {
        self.label_counts.keys().copied().collect()
    }

    pub fn into_pairs(self) -> Vec<RequirementPair> {
        self.pairs
    }

    /// Pairs at `indices`, in that order.
    pub fn select(&self, name: impl Into<String>, indices: &[usize]) -> Result<Dataset, CorpusError> {
        let pairs = indices.iter().map(|&i| self.pairs[i].clone()).collect();
        Dataset::new(name, pairs)
    }

    /// Copy with every id rewritten to `"{prefix}/{id}"`.
    pub fn namespaced(&self, prefix: &str) -> Dataset {
        let pairs = self
            .pairs
            .iter()
            .map(|p| RequirementPair {
                id: format!("{prefix}/{}", p.id),
                ..p.clone()
            })
            .collect();
        Dataset {
            name: self.name.clone(),
            pairs,
            label_counts: self.label_counts.clone(),
        }
    }

    /// Concatenates datasets in order. Fails on id collisions across inputs.
    pub fn concat(name: impl Into<String>, parts: &[Dataset]) -> Result<Dataset, CorpusError> {
        let pairs = parts.iter().flat_map(|d| d.pairs.iter().cloned()).collect();
        Dataset::new(name, pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(DatasetFormat::Jsonl),
            "csv" => Some(DatasetFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    sentence1: String,
    sentence2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_label: Option<String>,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Loads a dataset, inferring the format from the file extension.
pub fn load_dataset_auto(path: &Path) -> Result<Dataset, CorpusError> {
    let format = DatasetFormat::from_path(path)
        .ok_or_else(|| CorpusError::UnknownFormat(path.to_path_buf()))?;
    load_dataset(path, format)
}

/// Loads a dataset. Texts are trimmed, labels normalized, and missing ids are
/// synthesized from the zero-based record index.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let records = match format {
        DatasetFormat::Jsonl => read_jsonl(BufReader::new(file)).map_err(|e| match e {
            ReadError::Io(source) => io_err(source),
            ReadError::Corpus(e) => e,
        })?,
        DatasetFormat::Csv => read_csv(file)?,
    };
    let mut pairs = Vec::with_capacity(records.len());
    for (index, (line, raw)) in records.into_iter().enumerate() {
        pairs.push(normalize_record(line, index, raw)?);
    }
    Dataset::new(dataset_name(path), pairs)
}

enum ReadError {
    Io(std::io::Error),
    Corpus(CorpusError),
}

fn read_jsonl(reader: impl BufRead) -> Result<Vec<(usize, RawRecord)>, ReadError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(ReadError::Io)?;
        let body = line.trim();
        if body.is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(body).map_err(|e| {
            ReadError::Corpus(CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })
        })?;
        out.push((line_no, record));
    }
    Ok(out)
}

fn read_csv(file: File) -> Result<Vec<(usize, RawRecord)>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = Vec::new();
    for result in reader.deserialize::<RawRecord>() {
        let record = result.map_err(|e| CorpusError::MalformedRecord {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        // header is line 1
        let line = out.len() + 2;
        out.push((line, record));
    }
    Ok(out)
}

fn normalize_record(line: usize, index: usize, raw: RawRecord) -> Result<RequirementPair, CorpusError> {
    let text1 = raw.sentence1.trim();
    if text1.is_empty() {
        return Err(CorpusError::EmptyText { line, field: "sentence1" });
    }
    let text2 = raw.sentence2.trim();
    if text2.is_empty() {
        return Err(CorpusError::EmptyText { line, field: "sentence2" });
    }
    let label = match raw.gold_label.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<Label>()
                .map_err(|UnknownLabel(raw)| CorpusError::UnknownLabel { line, raw })?,
        ),
    };
    let id = match raw.id {
        Some(id) if !id.trim().is_empty() => id.trim().to_string(),
        _ => index.to_string(),
    };
    Ok(RequirementPair {
        id,
        text1: text1.to_string(),
        text2: text2.to_string(),
        label,
    })
}

/// Writes `dataset` as JSONL with normalized label names.
pub fn write_jsonl(dataset: &Dataset, writer: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for pair in dataset.pairs() {
        let record = RawRecord {
            id: Some(pair.id.clone()),
            sentence1: pair.text1.clone(),
            sentence2: pair.text2.clone(),
            gold_label: pair.label.map(|l| l.name().to_string()),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Uniform sample of `n` pairs without replacement. The result is named
/// `"{name}({n})"`.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset, CorpusError> {
    if n == 0 || n > dataset.len() {
        return Err(CorpusError::NTooLarge {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, dataset.len(), n).into_vec();
    dataset.select(format!("{}({})", dataset.name(), n), &indices)
}

/// Assignment of every dataset index to one of `n_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub stratified: bool,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Partitions `dataset` into `n_folds` folds.
///
/// Indices are shuffled with `seed` (per label when `stratified`), laid out
/// label group after label group, and dealt round-robin. Dealing one
/// continuous sequence keeps both the per-label and the total fold sizes
/// within one of each other.
pub fn make_folds(
    dataset: &Dataset,
    n_folds: usize,
    stratified: bool,
    seed: u64,
) -> Result<FoldPlan, CorpusError> {
    let labels: Vec<Option<Label>> = dataset.pairs().iter().map(|p| p.label).collect();
    make_label_folds(&labels, n_folds, stratified, seed)
}

/// [`make_folds`] over a bare label sequence.
pub fn make_label_folds(
    labels: &[Option<Label>],
    n_folds: usize,
    stratified: bool,
    seed: u64,
) -> Result<FoldPlan, CorpusError> {
    if n_folds < 2 {
        return Err(CorpusError::InvalidFoldCount(n_folds));
    }
    if labels.len() < n_folds {
        return Err(CorpusError::TooFewSamples {
            items: labels.len(),
            n_folds,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let mut groups: BTreeMap<Option<Label>, Vec<usize>> = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            groups.entry(*label).or_default().push(i);
        }
        for (label, members) in groups.iter_mut() {
            if members.len() < n_folds {
                log::warn!(
                    "sparse class {}: {} pairs for {} folds",
                    label.map(|l| l.name()).unwrap_or("unlabeled"),
                    members.len(),
                    n_folds
                );
            }
            members.shuffle(&mut rng);
        }
        groups.into_values().flatten().collect()
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut assignments = vec![0; labels.len()];
    for (position, &index) in order.iter().enumerate() {
        assignments[index] = position % n_folds;
    }
    Ok(FoldPlan {
        n_folds,
        seed,
        stratified,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: usize, label: Option<Label>) -> RequirementPair {
        RequirementPair {
            id: id.to_string(),
            text1: format!("requirement {id} a"),
            text2: format!("requirement {id} b"),
            label,
        }
    }

    fn labeled(counts: &[(Label, usize)]) -> Dataset {
        let mut pairs = Vec::new();
        for &(label, n) in counts {
            for _ in 0..n {
                pairs.push(pair(pairs.len(), Some(label)));
            }
        }
        Dataset::new("t", pairs).unwrap()
    }

    fn write_tmp(suffix: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn nli_labels_are_renamed() {
        let f = write_tmp(
            ".jsonl",
            concat!(
                r#"{"gold_label":"entailment","sentence1":"A","sentence2":"B"}"#, "\n",
                r#"{"gold_label":"contradiction","sentence1":" C ","sentence2":"D"}"#, "\r\n",
                "\n",
                r#"{"gold_label":"neutral","sentence1":"E","sentence2":"F"}"#, "\n",
            ),
        );
        let d = load_dataset(f.path(), DatasetFormat::Jsonl).unwrap();
        let labels: Vec<_> = d.pairs().iter().map(|p| p.label.unwrap()).collect();
        assert_eq!(labels, [Label::Duplicate, Label::Conflict, Label::Neutral]);
        assert_eq!(d.pairs()[1].text1, "C");
        assert_eq!(d.pairs()[2].id, "2");
        assert_eq!(d.count(Label::Duplicate), 1);
    }

    #[test]
    fn unknown_label_is_named() {
        let f = write_tmp(".jsonl", r#"{"gold_label":"maybe","sentence1":"A","sentence2":"B"}"#);
        match load_dataset(f.path(), DatasetFormat::Jsonl) {
            Err(CorpusError::UnknownLabel { raw, line }) => {
                assert_eq!(raw, "maybe");
                assert_eq!(line, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_empty_records() {
        let f = write_tmp(".jsonl", "{\"sentence1\":\"A\",\"sentence2\":\"B\"}\n{oops\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Jsonl),
            Err(CorpusError::MalformedRecord { line: 2, .. })
        ));
        let f = write_tmp(".jsonl", "{\"sentence1\":\"  \",\"sentence2\":\"B\"}\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Jsonl),
            Err(CorpusError::EmptyText { line: 1, field: "sentence1" })
        ));
        let f = write_tmp(".jsonl", "{\"sentence1\":\"A\"}\n");
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Jsonl),
            Err(CorpusError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp(
            ".jsonl",
            "{\"id\":\"x\",\"sentence1\":\"A\",\"sentence2\":\"B\"}\n{\"id\":\"x\",\"sentence1\":\"C\",\"sentence2\":\"D\"}\n",
        );
        assert!(matches!(
            load_dataset(f.path(), DatasetFormat::Jsonl),
            Err(CorpusError::DuplicateId(id)) if id == "x"
        ));
    }

    #[test]
    fn csv_with_optional_columns() {
        let f = write_tmp(
            ".csv",
            "sentence1,sentence2,gold_label\r\n\"The system shall log, always\",B,Conflict\r\nC,D,\r\n",
        );
        let d = load_dataset_auto(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.pairs()[0].text1, "The system shall log, always");
        assert_eq!(d.pairs()[0].label, Some(Label::Conflict));
        assert_eq!(d.pairs()[1].label, None);
        assert_eq!(d.pairs()[1].id, "1");

        let f = write_tmp(".csv", "id,sentence1,sentence2,gold_label\nr1,A,B,duplicate\nr2,C,D,huh\n");
        assert!(matches!(
            load_dataset_auto(f.path()),
            Err(CorpusError::UnknownLabel { line: 3, .. })
        ));
        let f = write_tmp(".csv", "text,other\nA,B\n");
        assert!(matches!(load_dataset_auto(f.path()), Err(CorpusError::MalformedRecord { .. })));
    }

    #[test]
    fn label_parsing_is_case_insensitive() {
        for (raw, want) in [
            ("Entailment", Label::Duplicate),
            ("CONTRADICTION", Label::Conflict),
            ("nEuTrAl", Label::Neutral),
            ("conflict", Label::Conflict),
            ("Duplicate", Label::Duplicate),
        ] {
            assert_eq!(raw.parse::<Label>().unwrap(), want);
        }
        for raw in ["-", "contradict", "neutral2", "yes"] {
            assert!(raw.parse::<Label>().is_err());
        }
        for l in Label::ALL {
            assert_eq!(Label::from_code(l.code()), Some(l));
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = labeled(&[(Label::Conflict, 3), (Label::Neutral, 2)]).into_pairs();
        d.push(pair(99, None));
        let d = Dataset::new("roundtrip", d).unwrap();
        let path = dir.path().join("roundtrip.jsonl");
        write_jsonl(&d, File::create(&path).unwrap()).unwrap();
        assert_eq!(load_dataset(&path, DatasetFormat::Jsonl).unwrap(), d);
    }

    #[test]
    fn subsample_contract() {
        let d = labeled(&[(Label::Conflict, 40), (Label::Duplicate, 30), (Label::Neutral, 30)]);
        let a = subsample(&d, 25, 7).unwrap();
        let b = subsample(&d, 25, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 25);
        assert_eq!(a.name(), "t(25)");

        let full = subsample(&d, 100, 1).unwrap();
        let mut ids: Vec<_> = full.pairs().iter().map(|p| p.id.clone()).collect();
        let mut want: Vec<_> = d.pairs().iter().map(|p| p.id.clone()).collect();
        ids.sort();
        want.sort();
        assert_eq!(ids, want);

        assert!(matches!(subsample(&d, 101, 1), Err(CorpusError::NTooLarge { .. })));
        assert!(matches!(subsample(&d, 0, 1), Err(CorpusError::NTooLarge { .. })));
    }

    #[test]
    fn folds_even_split() {
        let d = labeled(&[(Label::Neutral, 100)]);
        let plan = make_folds(&d, 5, false, 3).unwrap();
        assert_eq!(plan.fold_sizes(), vec![20; 5]);
        assert_eq!(plan, make_folds(&d, 5, false, 3).unwrap());
    }

    #[test]
    fn folds_stratified_proportional() {
        let d = labeled(&[(Label::Conflict, 60), (Label::Duplicate, 30), (Label::Neutral, 10)]);
        let plan = make_folds(&d, 5, true, 11).unwrap();
        for fold in 0..5 {
            let test = plan.test_indices(fold);
            let count = |l| test.iter().filter(|&&i| d.pairs()[i].label == Some(l)).count();
            assert_eq!(
                (count(Label::Conflict), count(Label::Duplicate), count(Label::Neutral)),
                (12, 6, 2)
            );
        }
    }

    #[test]
    fn folds_errors_and_sparse_classes() {
        let d = labeled(&[(Label::Conflict, 2)]);
        assert!(matches!(make_folds(&d, 3, true, 0), Err(CorpusError::TooFewSamples { .. })));
        assert!(matches!(make_folds(&d, 1, true, 0), Err(CorpusError::InvalidFoldCount(1))));

        let d = labeled(&[(Label::Conflict, 10), (Label::Neutral, 2)]);
        let plan = make_folds(&d, 3, true, 0).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn folds_partition_and_balance(
                labels in proptest::collection::vec(proptest::option::weighted(0.9, 0usize..3), 6..120),
                n_folds in prop::sample::select(vec![2usize, 3, 5]),
                stratified in any::<bool>(),
                seed in any::<u64>(),
            ) {
                let pairs = labels.iter().enumerate()
                    .map(|(i, l)| pair(i, l.and_then(Label::from_code)))
                    .collect();
                let d = Dataset::new("p", pairs).unwrap();
                let plan = make_folds(&d, n_folds, stratified, seed).unwrap();
                prop_assert_eq!(plan.assignments.len(), d.len());

                let mut seen = vec![false; d.len()];
                for fold in 0..n_folds {
                    for i in plan.test_indices(fold) {
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                    }
                }
                prop_assert!(seen.iter().all(|&s| s));

                let sizes = plan.fold_sizes();
                prop_assert!(sizes.iter().all(|&s| s > 0));
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

                if stratified {
                    for label in [None, Some(Label::Conflict), Some(Label::Duplicate), Some(Label::Neutral)] {
                        let mut per = vec![0usize; n_folds];
                        for (i, p) in d.pairs().iter().enumerate() {
                            if p.label == label {
                                per[plan.assignments[i]] += 1;
                            }
                        }
                        prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
                    }
                }
            }
        }
    }
}
