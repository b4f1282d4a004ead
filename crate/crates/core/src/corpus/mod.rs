//! Dataset model: instances, prompt/paper pairs, splits and subsamples.
//!
//! Two on-disk formats are accepted:
//!
//! - JSON lines, one instance per line, with the fields `id`, `prompt`,
//!   `most_relevant`, `second_most_relevant`, `second_least_relevant` and
//!   `least_relevant`; each candidate carries `title`, `abstract` and
//!   `related_work`.
//! - CSV of pre-expanded pairs with the header
//!   `group_id,candidate_index,prompt,paper_text,rank`.
//!
//! Splits, subsamples and folds always move whole instances so that the four
//! pairs of a prompt stay together.

pub mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::{self, Stream};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: duplicate instance id `{id}`")]
    DuplicateId { id: String, line: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("group `{group_id}`: {reason}")]
    InvalidGroup { group_id: String, reason: String },
    #[error("invalid instance `{id}`: {reason}")]
    InvalidInstance { id: String, reason: String },
    #[error("relevance rank {0} is outside 0..=3")]
    InvalidRank(i64),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    FractionOutOfRange(f64),
    #[error("need at least {need} instances, got {got}")]
    TooFewInstances { need: usize, got: usize },
    #[error("requested {requested} pairs ({instances} instances) but only {available} instances are available")]
    SubsampleTooLarge {
        requested: usize,
        instances: usize,
        available: usize,
    },
    #[error("fold count {folds} is invalid for {items} instances")]
    InvalidFolds { folds: usize, items: usize },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Ordinal relevance class: 0 is least relevant, 3 most relevant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RelevanceRank(u8);

impl RelevanceRank {
    pub const LEAST: RelevanceRank = RelevanceRank(0);
    pub const SECOND_LEAST: RelevanceRank = RelevanceRank(1);
    pub const SECOND_MOST: RelevanceRank = RelevanceRank(2);
    pub const MOST: RelevanceRank = RelevanceRank(3);
    pub const ALL: [RelevanceRank; 4] = [Self::LEAST, Self::SECOND_LEAST, Self::SECOND_MOST, Self::MOST];

    pub fn new(value: u8) -> Result<Self> {
        if value <= 3 {
            Ok(RelevanceRank(value))
        } else {
            Err(CorpusError::InvalidRank(value as i64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for RelevanceRank {
    type Error = CorpusError;
    fn try_from(value: u8) -> Result<Self> {
        RelevanceRank::new(value)
    }
}

impl From<RelevanceRank> for u8 {
    fn from(rank: RelevanceRank) -> u8 {
        rank.0
    }
}

impl fmt::Display for RelevanceRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The four relevance categories of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Most,
    SecondMost,
    SecondLeast,
    Least,
}

impl Category {
    /// Declaration order, which is also the storage order inside [`Instance`].
    pub const ALL: [Category; 4] = [
        Category::Most,
        Category::SecondMost,
        Category::SecondLeast,
        Category::Least,
    ];

    pub fn rank(self) -> RelevanceRank {
        match self {
            Category::Most => RelevanceRank::MOST,
            Category::SecondMost => RelevanceRank::SECOND_MOST,
            Category::SecondLeast => RelevanceRank::SECOND_LEAST,
            Category::Least => RelevanceRank::LEAST,
        }
    }

    pub fn from_rank(rank: RelevanceRank) -> Category {
        match rank.value() {
            3 => Category::Most,
            2 => Category::SecondMost,
            1 => Category::SecondLeast,
            _ => Category::Least,
        }
    }

    /// Field name in the JSON-lines format.
    pub fn field_name(self) -> &'static str {
        match self {
            Category::Most => "most_relevant",
            Category::SecondMost => "second_most_relevant",
            Category::SecondLeast => "second_least_relevant",
            Category::Least => "least_relevant",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePaper {
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub related_work: String,
}

impl CandidatePaper {
    pub fn new(title: impl Into<String>, abstract_text: impl Into<String>, related_work: impl Into<String>) -> Self {
        CandidatePaper {
            title: title.into(),
            abstract_text: abstract_text.into(),
            related_work: related_work.into(),
        }
    }

    /// `title \n abstract \n related_work`.
    pub fn paper_text(&self) -> String {
        format!("{}\n{}\n{}", self.title, self.abstract_text, self.related_work)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.title.trim().is_empty() {
            return Err("candidate title is empty".into());
        }
        if self.abstract_text.trim().is_empty() && self.related_work.trim().is_empty() {
            return Err("candidate has neither abstract nor related work".into());
        }
        Ok(())
    }
}

/// One prompt with exactly one candidate paper per relevance category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub prompt: String,
    candidates: [CandidatePaper; 4],
}

impl Instance {
    /// `candidates` are given in [`Category::ALL`] order (most relevant first).
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, candidates: [CandidatePaper; 4]) -> Result<Self> {
        let instance = Instance {
            id: id.into(),
            prompt: prompt.into(),
            candidates,
        };
        instance.validate().map_err(|reason| CorpusError::InvalidInstance {
            id: instance.id.clone(),
            reason,
        })?;
        Ok(instance)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.prompt.trim().is_empty() {
            return Err("empty prompt".into());
        }
        for cat in Category::ALL {
            self.candidate(cat)
                .validate()
                .map_err(|e| format!("{}: {e}", cat.field_name()))?;
        }
        Ok(())
    }

    pub fn candidate(&self, category: Category) -> &CandidatePaper {
        &self.candidates[category.slot()]
    }

    /// Category held at each candidate position.
    ///
    /// Positions are a fixed permutation of the categories chosen by
    /// `fnv1a64(id) % 24`, indexing the 24 permutations of
    /// `[most, second_most, second_least, least]` in lexicographic order of
    /// their category indices. Deterministic tie-breaks that prefer low
    /// positions therefore carry no information about the true ranks.
    pub fn candidate_order(&self) -> [Category; 4] {
        candidate_order_for(&self.id)
    }
}

/// See [`Instance::candidate_order`].
pub fn candidate_order_for(id: &str) -> [Category; 4] {
    let mut hasher = FnvHasher::default();
    hasher.write(id.as_bytes());
    let mut code = (hasher.finish() % 24) as usize;
    // Lehmer code -> permutation, lexicographic order.
    let mut pool: Vec<usize> = (0..4).collect();
    let mut out = [Category::Most; 4];
    let mut radix = 6;
    for (pos, slot) in out.iter_mut().enumerate() {
        let pick = code / radix;
        code %= radix;
        *slot = Category::ALL[pool.remove(pick)];
        if pos < 3 {
            radix /= 3 - pos;
        }
    }
    out
}

/// One supervised prompt/paper row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub group_id: String,
    pub candidate_index: u8,
    pub prompt: String,
    pub paper_text: String,
    pub rank: RelevanceRank,
}

/// The four pairs of one instance, ordered by `candidate_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairGroup {
    pub group_id: String,
    pub pairs: [PairRecord; 4],
}

impl PairGroup {
    pub fn from_instance(instance: &Instance) -> Self {
        let order = instance.candidate_order();
        let pairs = std::array::from_fn(|i| {
            let cat = order[i];
            PairRecord {
                group_id: instance.id.clone(),
                candidate_index: i as u8,
                prompt: instance.prompt.clone(),
                paper_text: instance.candidate(cat).paper_text(),
                rank: cat.rank(),
            }
        });
        PairGroup {
            group_id: instance.id.clone(),
            pairs,
        }
    }

    pub fn prompt(&self) -> &str {
        &self.pairs[0].prompt
    }

    pub fn ranks(&self) -> [RelevanceRank; 4] {
        std::array::from_fn(|i| self.pairs[i].rank)
    }
}

/// Expands instances into pairs: four per instance, in instance order, then
/// candidate position.
pub fn expand_pairs(instances: &[Instance]) -> Vec<PairRecord> {
    instances
        .iter()
        .flat_map(|inst| PairGroup::from_instance(inst).pairs)
        .collect()
}

pub fn expand_groups(instances: &[Instance]) -> Vec<PairGroup> {
    instances.iter().map(PairGroup::from_instance).collect()
}

/// Regroups flat pair rows, keeping the order in which groups first appear.
pub fn group_pairs(pairs: Vec<PairRecord>) -> Result<Vec<PairGroup>> {
    let mut order: Vec<String> = Vec::new();
    let mut buckets: HashMap<String, Vec<PairRecord>> = HashMap::new();
    for pair in pairs {
        if !buckets.contains_key(&pair.group_id) {
            order.push(pair.group_id.clone());
        }
        buckets.entry(pair.group_id.clone()).or_default().push(pair);
    }
    order
        .into_iter()
        .map(|gid| {
            let mut rows = buckets.remove(&gid).unwrap_or_default();
            let bad = |reason: String| CorpusError::InvalidGroup {
                group_id: gid.clone(),
                reason,
            };
            if rows.len() != 4 {
                return Err(bad(format!("expected 4 pairs, found {}", rows.len())));
            }
            rows.sort_by_key(|p| p.candidate_index);
            let positions: Vec<u8> = rows.iter().map(|p| p.candidate_index).collect();
            if positions != [0, 1, 2, 3] {
                return Err(bad(format!("candidate indices {positions:?} are not 0..=3")));
            }
            let ranks: HashSet<RelevanceRank> = rows.iter().map(|p| p.rank).collect();
            if ranks.len() != 4 {
                return Err(bad("ranks are not a permutation of 0..=3".into()));
            }
            if rows.iter().any(|p| p.prompt != rows[0].prompt) {
                return Err(bad("pairs disagree on the prompt".into()));
            }
            let pairs: [PairRecord; 4] = rows.try_into().map_err(|_| bad("expected 4 pairs".into()))?;
            Ok(PairGroup { group_id: gid, pairs })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// JSON lines
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawCandidate {
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    related_work: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<serde_json::Value>,
    prompt: Option<String>,
    most_relevant: Option<RawCandidate>,
    second_most_relevant: Option<RawCandidate>,
    second_least_relevant: Option<RawCandidate>,
    least_relevant: Option<RawCandidate>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    prompt: &'a str,
    most_relevant: &'a CandidatePaper,
    second_most_relevant: &'a CandidatePaper,
    second_least_relevant: &'a CandidatePaper,
    least_relevant: &'a CandidatePaper,
}

/// A record that could not be turned into an [`Instance`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRecord {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub instances: Vec<Instance>,
    pub rejected: Vec<RejectedRecord>,
}

fn id_to_string(value: serde_json::Value) -> Option<String> {
    match value {
        serde_json::Value::String(s) if !s.is_empty() => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn convert_record(raw: RawRecord) -> std::result::Result<Instance, String> {
    let id = raw
        .id
        .and_then(id_to_string)
        .ok_or_else(|| "missing or invalid `id`".to_string())?;
    let prompt = raw.prompt.ok_or_else(|| "missing `prompt`".to_string())?;
    let slots = [
        raw.most_relevant,
        raw.second_most_relevant,
        raw.second_least_relevant,
        raw.least_relevant,
    ];
    let mut candidates = Vec::with_capacity(4);
    for (cat, slot) in Category::ALL.into_iter().zip(slots) {
        let raw = slot.ok_or_else(|| format!("missing `{}`", cat.field_name()))?;
        let title = raw
            .title
            .ok_or_else(|| format!("`{}` has no title", cat.field_name()))?;
        candidates.push(CandidatePaper {
            title,
            abstract_text: raw.abstract_text.unwrap_or_default(),
            related_work: raw.related_work.unwrap_or_default(),
        });
    }
    let candidates: [CandidatePaper; 4] = candidates.try_into().expect("four categories");
    let instance = Instance { id, prompt, candidates };
    instance.validate()?;
    Ok(instance)
}

/// Parses the JSON-lines instance format.
///
/// Blank lines are skipped. Malformed or incomplete records are collected in
/// [`ParseOutcome::rejected`] with their line numbers; a repeated id aborts
/// the parse.
pub fn parse_instances<R: BufRead>(source: R) -> Result<ParseOutcome> {
    let mut outcome = ParseOutcome::default();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(convert_record);
        match parsed {
            Ok(instance) => {
                if !seen.insert(instance.id.clone()) {
                    return Err(CorpusError::DuplicateId {
                        id: instance.id,
                        line: line_no,
                    });
                }
                outcome.instances.push(instance);
            }
            Err(reason) => outcome.rejected.push(RejectedRecord { line: line_no, reason }),
        }
    }
    Ok(outcome)
}

pub fn write_instances<W: Write>(mut sink: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        let rec = OutRecord {
            id: &inst.id,
            prompt: &inst.prompt,
            most_relevant: inst.candidate(Category::Most),
            second_most_relevant: inst.candidate(Category::SecondMost),
            second_least_relevant: inst.candidate(Category::SecondLeast),
            least_relevant: inst.candidate(Category::Least),
        };
        serde_json::to_writer(&mut sink, &rec)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV pairs
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct CsvPairRow {
    group_id: String,
    candidate_index: u8,
    prompt: String,
    paper_text: String,
    rank: i64,
}

pub fn read_pairs_csv<R: Read>(source: R) -> Result<Vec<PairRecord>> {
    let mut reader = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize::<CsvPairRow>() {
        let row = row?;
        let rank = u8::try_from(row.rank)
            .ok()
            .and_then(|r| RelevanceRank::new(r).ok())
            .ok_or(CorpusError::InvalidRank(row.rank))?;
        out.push(PairRecord {
            group_id: row.group_id,
            candidate_index: row.candidate_index,
            prompt: row.prompt,
            paper_text: row.paper_text,
            rank,
        });
    }
    Ok(out)
}

pub fn write_pairs_csv<W: Write>(sink: W, pairs: &[PairRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    for pair in pairs {
        writer.serialize(pair)?;
    }
    writer.flush()?;
    Ok(())
}

/// A dataset file loaded into instance groups.
#[derive(Debug, Default)]
pub struct LoadedDataset {
    pub groups: Vec<PairGroup>,
    pub rejected: Vec<RejectedRecord>,
}

/// Loads `.csv` files as pre-expanded pairs and anything else as JSON lines.
pub fn load_dataset(path: &Path) -> Result<LoadedDataset> {
    let file = File::open(path)?;
    let is_csv = path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
    if is_csv {
        let groups = group_pairs(read_pairs_csv(BufReader::new(file))?)?;
        Ok(LoadedDataset {
            groups,
            rejected: Vec::new(),
        })
    } else {
        let outcome = parse_instances(BufReader::new(file))?;
        Ok(LoadedDataset {
            groups: expand_groups(&outcome.instances),
            rejected: outcome.rejected,
        })
    }
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default = "SplitSpec::default_fraction")]
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec { train_fraction, seed };
        spec.validate()?;
        Ok(spec)
    }

    fn default_fraction() -> f64 {
        0.8
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(CorpusError::FractionOutOfRange(self.train_fraction))
        }
    }

    /// `round(train_fraction * n)`, kept within `1..n` so neither side is empty.
    pub fn train_count(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Shuffled instance-level train/test split. Both sides keep input order.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    spec.validate()?;
    if items.len() < 2 {
        return Err(CorpusError::TooFewInstances {
            need: 2,
            got: items.len(),
        });
    }
    let n_train = spec.train_count(items.len());
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seeds::rng(spec.seed, Stream::Split, 0));
    let mut in_train = vec![false; items.len()];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(items.len() - n_train);
    for (item, keep) in items.iter().zip(in_train) {
        if keep {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok((train, test))
}

/// Number of whole instances needed to cover `n_pairs` pairs.
pub fn instances_for_pairs(n_pairs: usize) -> usize {
    n_pairs.div_ceil(4)
}

/// Uniform sample without replacement of `ceil(n_pairs / 4)` whole instances,
/// returned in input order.
pub fn subsample<T: Clone>(items: &[T], n_pairs: usize, seed: u64) -> Result<Vec<T>> {
    let k = instances_for_pairs(n_pairs);
    if k == 0 || k > items.len() {
        return Err(CorpusError::SubsampleTooLarge {
            requested: n_pairs,
            instances: k,
            available: items.len(),
        });
    }
    let mut picked = index::sample(&mut seeds::rng(seed, Stream::Subsample, n_pairs as u64), items.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}

/// Assigns `n` items to `folds` contiguous chunks of a seeded shuffle.
/// Returns the member indices of each fold (sorted).
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(CorpusError::InvalidFolds { folds, items: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seed, Stream::Folds, 0));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut members = order[start..start + len].to_vec();
        members.sort_unstable();
        out.push(members);
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    pub(crate) fn sample_instance(id: &str) -> Instance {
        Instance::new(
            id,
            format!("Write a survey about topic {id}"),
            [
                CandidatePaper::new("Most", "abstract m", "rw m"),
                CandidatePaper::new("Second most", "abstract sm", ""),
                CandidatePaper::new("Second least", "", "rw sl"),
                CandidatePaper::new("Least", "abstract l", "rw l"),
            ],
        )
        .unwrap()
    }

    const EXAMPLE: &str = r#"{"id":"covid-1","prompt":"Write a systematic survey or overview about the prevalence and determinants of beliefs in conspiracy theories related to the COVID-19 pandemic in a nationally representative sample of internet users.","most_relevant":{"title":"The Determinants of Conspiracy Beliefs Related to the COVID-19 Pandemic in a Nationally Representative Sample of Internet Users","abstract":"An overwhelming flood of misinformation is accompanying the pandemic of COVID-19.","related_work":"The COVID-19 pandemic has given rise to a concerning prevalence of misinformation."},"second_most_relevant":{"title":"The science of fake news","abstract":"Addressing fake news requires a multidisciplinary effort.","related_work":"Addressing the issue of fake news requires a multidisciplinary effort."},"second_least_relevant":{"title":"Subsidy strategy of pharmaceutical e-commerce platform based on two-sided market theory","abstract":"With the development of economic globalization and information technology.","related_work":"Previous research has extensively examined the subsidy strategy."},"least_relevant":{"title":"Pedagogy in Cyberspace: The Dynamics of Online Discourse","abstract":"This article elaborates a model for understanding pedagogy in online educational forums.","related_work":"The concept of thought and language being distinct from each other is explored."}}"#;

    #[test]
    fn parses_full_record() {
        let out = parse_instances(Cursor::new(EXAMPLE)).unwrap();
        assert_eq!(out.instances.len(), 1);
        assert!(out.rejected.is_empty());
        let inst = &out.instances[0];
        assert_eq!(inst.id, "covid-1");
        assert!(inst.candidate(Category::Most).title.starts_with("The Determinants"));
        assert!(inst.candidate(Category::Least).title.starts_with("Pedagogy"));
    }

    #[test]
    fn empty_stream_is_empty() {
        let out = parse_instances(Cursor::new("")).unwrap();
        assert!(out.instances.is_empty());
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn missing_category_is_rejected_with_line() {
        let mut value: serde_json::Value = serde_json::from_str(EXAMPLE).unwrap();
        value.as_object_mut().unwrap().remove("least_relevant");
        let src = format!("\n{}\n", value);
        let out = parse_instances(Cursor::new(src)).unwrap();
        assert!(out.instances.is_empty());
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].line, 2);
        assert!(out.rejected[0].reason.contains("least_relevant"));
    }

    #[test]
    fn malformed_json_is_rejected_not_fatal() {
        let src = format!("{{not json\n{EXAMPLE}\n");
        let out = parse_instances(Cursor::new(src)).unwrap();
        assert_eq!(out.instances.len(), 1);
        assert_eq!(out.rejected[0].line, 1);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let src = format!("{EXAMPLE}\n{EXAMPLE}\n");
        match parse_instances(Cursor::new(src)) {
            Err(CorpusError::DuplicateId { id, line }) => {
                assert_eq!(id, "covid-1");
                assert_eq!(line, 2);
            }
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn numeric_ids_are_accepted() {
        let mut value: serde_json::Value = serde_json::from_str(EXAMPLE).unwrap();
        value["id"] = serde_json::json!(42);
        let out = parse_instances(Cursor::new(value.to_string())).unwrap();
        assert_eq!(out.instances[0].id, "42");
    }

    #[test]
    fn candidate_without_text_is_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(EXAMPLE).unwrap();
        value["most_relevant"]["abstract"] = serde_json::json!("");
        value["most_relevant"]["related_work"] = serde_json::Value::Null;
        let out = parse_instances(Cursor::new(value.to_string())).unwrap();
        assert_eq!(out.rejected.len(), 1);
    }

    #[test]
    fn one_instance_expands_to_four_ranks() {
        let pairs = expand_pairs(&[sample_instance("a")]);
        assert_eq!(pairs.len(), 4);
        let mut ranks: Vec<u8> = pairs.iter().map(|p| p.rank.value()).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![0, 1, 2, 3]);
        let idx: Vec<u8> = pairs.iter().map(|p| p.candidate_index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_instances_give_two_per_rank() {
        let pairs = expand_pairs(&[sample_instance("a"), sample_instance("b")]);
        assert_eq!(pairs.len(), 8);
        for r in RelevanceRank::ALL {
            assert_eq!(pairs.iter().filter(|p| p.rank == r).count(), 2);
        }
    }

    #[test]
    fn paper_text_joins_fields_with_newlines() {
        let c = CandidatePaper::new("T", "A", "R");
        assert_eq!(c.paper_text(), "T\nA\nR");
    }

    #[test]
    fn candidate_order_is_permutation_and_varies() {
        let mut distinct = HashSet::new();
        for i in 0..200 {
            let order = candidate_order_for(&format!("inst-{i}"));
            let set: HashSet<Category> = order.iter().copied().collect();
            assert_eq!(set.len(), 4);
            distinct.insert(order);
        }
        assert_eq!(distinct.len(), 24);
    }

    #[test]
    fn candidate_order_decodes_lexicographically() {
        // Every code 0..24 must map to a distinct permutation; code 0 is the identity.
        let mut hits = vec![0; 24];
        let perms: Vec<[usize; 4]> = {
            let mut v = Vec::new();
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        for d in 0..4 {
                            let p = [a, b, c, d];
                            let s: HashSet<_> = p.iter().collect();
                            if s.len() == 4 {
                                v.push(p);
                            }
                        }
                    }
                }
            }
            v
        };
        for i in 0..500 {
            let id = format!("x{i}");
            let mut h = FnvHasher::default();
            h.write(id.as_bytes());
            let code = (h.finish() % 24) as usize;
            let order = candidate_order_for(&id).map(|c| c.slot());
            assert_eq!(order, perms[code]);
            hits[code] += 1;
        }
        assert!(hits.iter().all(|&h| h > 0));
    }

    #[test]
    fn group_pairs_roundtrip_and_validation() {
        let pairs = expand_pairs(&[sample_instance("a"), sample_instance("b")]);
        let groups = group_pairs(pairs.clone()).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0], PairGroup::from_instance(&sample_instance("a")));

        let mut broken = pairs.clone();
        broken[1].rank = broken[0].rank;
        assert!(matches!(group_pairs(broken), Err(CorpusError::InvalidGroup { .. })));
        assert!(group_pairs(pairs[..3].to_vec()).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let pairs = expand_pairs(&[sample_instance("a"), sample_instance("b,with comma")]);
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &pairs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("group_id,candidate_index,prompt,paper_text,rank\n"));
        assert_eq!(read_pairs_csv(Cursor::new(buf)).unwrap(), pairs);
    }

    #[test]
    fn csv_rank_out_of_range() {
        let src = "group_id,candidate_index,prompt,paper_text,rank\ng,0,p,t,7\n";
        assert!(matches!(
            read_pairs_csv(Cursor::new(src)),
            Err(CorpusError::InvalidRank(7))
        ));
    }

    #[test]
    fn split_sizes_match_reference_counts() {
        let ids: Vec<usize> = (0..25_164).collect();
        let spec = SplitSpec::new(0.8, 1).unwrap();
        let (train, test) = split(&ids, &spec).unwrap();
        assert_eq!(train.len() * 4, 80_524);
        assert_eq!(test.len() * 4, 20_132);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0).is_err());
        let spec = SplitSpec {
            train_fraction: 1.5,
            seed: 0,
        };
        assert!(matches!(
            split(&[1, 2, 3], &spec),
            Err(CorpusError::FractionOutOfRange(_))
        ));
    }

    #[test]
    fn split_needs_two_items() {
        let spec = SplitSpec::new(0.8, 0).unwrap();
        assert!(split(&[1], &spec).is_err());
        let (train, test) = split(&[1, 2], &spec).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn subsample_reference_sizes() {
        let items: Vec<usize> = (0..20_131).collect();
        assert_eq!(subsample(&items, 5_032, 3).unwrap().len(), 1_258);
        assert_eq!(subsample(&items, 78, 3).unwrap().len(), 20);
        assert_eq!(subsample(&items, 157, 3).unwrap().len(), 40);
        assert_eq!(subsample(&items, 80_524, 3).unwrap(), items);
        assert!(subsample(&items, 80_525, 3).is_err());
        assert!(subsample(&items, 0, 3).is_err());
    }

    #[test]
    fn kfold_partitions() {
        let folds = kfold_indices(10, 3, 5).unwrap();
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(kfold_indices(2, 3, 0).is_err());
        assert!(kfold_indices(5, 1, 0).is_err());
    }
}
