//! Event log ingestion, consecutive-play pair extraction, day-based splits,
//! vocabularies and the pair sets consumed by training and evaluation.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, DataError};
use crate::scoring::Query;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// One play: `user` played `item` at `timestamp` (UTC seconds).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub user: String,
    pub timestamp: i64,
    pub item: String,
}

impl Event {
    pub fn new(user: &str, timestamp: i64, item: &str) -> Self {
        Event {
            user: user.to_string(),
            timestamp,
            item: item.to_string(),
        }
    }

    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(SECONDS_PER_DAY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeFormat {
    Epoch,
    Iso,
}

fn parse_iso(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

/// Parses `user<TAB>timestamp<TAB>item` lines. The timestamp format (integer
/// epoch seconds or ISO-8601) is fixed by the first line of the file.
pub fn parse_events<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Event>, DataError> {
    let mut events = Vec::new();
    let mut format = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let err = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let (user, ts, item) = (fields[0], fields[1].trim(), fields[2]);
        if user.is_empty() || item.is_empty() {
            return Err(err("empty user or item token".into()));
        }
        let fmt = *format.get_or_insert(if ts.parse::<i64>().is_ok() {
            TimeFormat::Epoch
        } else {
            TimeFormat::Iso
        });
        let timestamp = match fmt {
            TimeFormat::Epoch => ts.parse::<i64>().ok(),
            TimeFormat::Iso => parse_iso(ts),
        }
        .ok_or_else(|| err(format!("unparseable timestamp `{ts}` (file uses {fmt:?} timestamps)")))?;
        events.push(Event::new(user, timestamp, item));
    }
    Ok(events)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>, DataError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_events(BufReader::new(f), path)
}

/// Pairs of consecutive plays by the same user, `(earlier item, later item)`.
///
/// Each user's events must be contiguous with non-decreasing timestamps;
/// anything else is reported, never re-sorted.
pub fn extract_pairs(events: &[Event]) -> Result<Vec<(String, String)>, DataError> {
    let mut finished: HashSet<&str> = HashSet::new();
    let mut pairs = Vec::new();
    for (i, w) in events.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if a.user == b.user {
            if b.timestamp < a.timestamp {
                return Err(DataError::Invalid(format!(
                    "events not sorted: user `{}` goes back in time at event {}",
                    b.user,
                    i + 2
                )));
            }
            pairs.push((a.item.clone(), b.item.clone()));
        } else {
            finished.insert(&a.user);
            if finished.contains(b.user.as_str()) {
                return Err(DataError::Invalid(format!(
                    "events not sorted: user `{}` reappears at event {}",
                    b.user,
                    i + 2
                )));
            }
        }
    }
    Ok(pairs)
}

/// Every `modulus`-th calendar day, counted from the earliest day, is held
/// out for testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRule {
    pub test_day_modulus: i64,
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule { test_day_modulus: 5 }
    }
}

impl SplitRule {
    pub fn new(test_day_modulus: i64) -> Result<Self, ConfigError> {
        if test_day_modulus < 2 {
            return Err(ConfigError::Invalid(format!(
                "test day modulus must be at least 2, got {test_day_modulus}"
            )));
        }
        Ok(SplitRule { test_day_modulus })
    }

    pub fn is_test_day(&self, day_index: i64) -> bool {
        day_index.rem_euclid(self.test_day_modulus) == self.test_day_modulus - 1
    }
}

/// Splits events into (train, test) by UTC calendar day, keeping order.
pub fn split_by_day(events: &[Event], rule: SplitRule) -> (Vec<Event>, Vec<Event>) {
    let Some(first) = events.iter().map(Event::day).min() else {
        return (Vec::new(), Vec::new());
    };
    events
        .iter()
        .cloned()
        .partition(|e| !rule.is_test_day(e.day() - first))
}

/// Token to dense index map in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Writes `token<TAB>index` lines.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut v = Vocab::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            let err = |message: String| DataError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (token, idx) = line
                .split_once('\t')
                .ok_or_else(|| err("expected token<TAB>index".into()))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad index `{idx}`")))?;
            if idx != v.len() || v.get(token).is_some() {
                return Err(err(format!("index {idx} for `{token}` is not dense and unique")));
            }
            v.insert(token);
        }
        Ok(v)
    }
}

/// Query and item vocabularies in first-occurrence order.
pub fn build_vocab(pairs: &[(String, String)]) -> Result<(Vocab, Vocab), ConfigError> {
    if pairs.is_empty() {
        return Err(ConfigError::Empty("pair list"));
    }
    let mut queries = Vocab::default();
    let mut items = Vocab::default();
    for (q, d) in pairs {
        queries.insert(q);
        items.insert(d);
    }
    Ok((queries, items))
}

/// Moves `count` uniformly chosen pairs into a validation set. Both outputs
/// keep the input order.
pub fn hold_out_validation<P: Clone>(pairs: &[P], count: usize, seed: u64) -> Result<(Vec<P>, Vec<P>), ConfigError> {
    if count > 0 && count >= pairs.len() {
        return Err(ConfigError::Invalid(format!(
            "validation size {count} must be smaller than the {} training pairs",
            pairs.len()
        )));
    }
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = vec![false; pairs.len()];
    for &i in &idx[..count] {
        held[i] = true;
    }
    let (valid, train): (Vec<_>, Vec<_>) = pairs
        .iter()
        .zip(&held)
        .partition(|(_, &h)| h);
    Ok((
        train.into_iter().map(|(p, _)| p.clone()).collect(),
        valid.into_iter().map(|(p, _)| p.clone()).collect(),
    ))
}

pub fn drop_self_pairs(pairs: Vec<(String, String)>) -> Vec<(String, String)> {
    pairs.into_iter().filter(|(q, d)| q != d).collect()
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(String, String)]) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for (q, d) in pairs {
        writeln!(w, "{q}\t{d}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads `query_token<TAB>item_token` lines.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 2 non-empty tab-separated fields, found {}", fields.len()),
            });
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    Ok(pairs)
}

/// Query vectors keyed by query token, for queries described by features
/// rather than by identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    index: HashMap<String, usize>,
    ids: Vec<String>,
    vectors: Vec<Query>,
    dim: usize,
}

impl FeatureTable {
    pub fn get(&self, token: &str) -> Option<&Query> {
        self.index.get(token).map(|&i| &self.vectors[i])
    }

    /// Feature dimension `D_q`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Query)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }
}

/// Reads dense query vectors: `id<TAB>v_0 v_1 ... v_{D_q - 1}` per line.
/// Every line must have the same length and at least one non-zero value.
pub fn read_feature_queries(path: impl AsRef<Path>) -> Result<FeatureTable, DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut table = FeatureTable::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let err = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| err("expected id<TAB>values".into()))?;
        let values = values
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad value `{v}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if table.vectors.is_empty() {
            table.dim = values.len();
        } else if values.len() != table.dim {
            return Err(err(format!("expected {} values, found {}", table.dim, values.len())));
        }
        if table.index.contains_key(id) {
            return Err(err(format!("duplicate query id `{id}`")));
        }
        let q = Query::sparse(values.into_iter().enumerate()).map_err(|e| err(e.to_string()))?;
        table.index.insert(id.to_string(), table.vectors.len());
        table.ids.push(id.to_string());
        table.vectors.push(q);
    }
    if table.is_empty() {
        return Err(DataError::Invalid(format!("{}: no feature vectors", path.display())));
    }
    Ok(table)
}

/// A `(query, positive item)` pair; `query` indexes `PairSet::queries`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub query: usize,
    pub item: usize,
}

/// Training or evaluation pairs over distinct queries.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    queries: Vec<Query>,
    pairs: Vec<Pair>,
    query_dim: usize,
    items: usize,
}

impl PairSet {
    pub fn new(queries: Vec<Query>, pairs: Vec<Pair>, query_dim: usize, items: usize) -> Result<Self, ConfigError> {
        for q in &queries {
            q.check(query_dim)?;
        }
        for p in &pairs {
            if p.query >= queries.len() {
                return Err(ConfigError::Invalid(format!(
                    "pair references query {} of {}",
                    p.query,
                    queries.len()
                )));
            }
            if p.item >= items {
                return Err(ConfigError::ItemOutOfRange { item: p.item, items });
            }
        }
        Ok(PairSet {
            queries,
            pairs,
            query_dim,
            items,
        })
    }

    /// Pairs of one-hot queries given as `(query index, item index)`.
    /// Distinct queries are numbered in first-occurrence order.
    pub fn from_one_hot(indexed: &[(usize, usize)], query_dim: usize, items: usize) -> Result<Self, ConfigError> {
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut queries = Vec::new();
        let mut pairs = Vec::with_capacity(indexed.len());
        for &(q, d) in indexed {
            let query = *slot.entry(q).or_insert_with(|| {
                queries.push(Query::one_hot(q));
                queries.len() - 1
            });
            pairs.push(Pair { query, item: d });
        }
        Self::new(queries, pairs, query_dim, items)
    }

    /// Maps token pairs through the vocabularies. Pairs with an unknown
    /// query or item are dropped and counted.
    pub fn from_tokens(pairs: &[(String, String)], queries: &Vocab, items: &Vocab) -> Result<(Self, usize), ConfigError> {
        let mut skipped = 0;
        let mut indexed = Vec::with_capacity(pairs.len());
        for (q, d) in pairs {
            match (queries.get(q), items.get(d)) {
                (Some(q), Some(d)) => indexed.push((q, d)),
                _ => skipped += 1,
            }
        }
        Ok((Self::from_one_hot(&indexed, queries.len(), items.len())?, skipped))
    }

    /// Like [`PairSet::from_tokens`], with query vectors taken from a
    /// feature table.
    pub fn from_feature_tokens(
        pairs: &[(String, String)],
        features: &FeatureTable,
        items: &Vocab,
    ) -> Result<(Self, usize), ConfigError> {
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut queries = Vec::new();
        let mut out = Vec::with_capacity(pairs.len());
        let mut skipped = 0;
        for (q, d) in pairs {
            let (Some(vector), Some(item)) = (features.get(q), items.get(d)) else {
                skipped += 1;
                continue;
            };
            let query = *slot.entry(q.as_str()).or_insert_with(|| {
                queries.push(vector.clone());
                queries.len() - 1
            });
            out.push(Pair { query, item });
        }
        Ok((Self::new(queries, out, features.dim(), items.len())?, skipped))
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn query(&self, i: usize) -> &Query {
        &self.queries[i]
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn items(&self) -> usize {
        self.items
    }
}

/// How many training pairs to move into the validation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidationSize {
    Count(usize),
    Fraction(f64),
}

impl ValidationSize {
    pub fn resolve(self, train_pairs: usize) -> Result<usize, ConfigError> {
        match self {
            ValidationSize::Count(n) => Ok(n),
            ValidationSize::Fraction(f) if (0.0..1.0).contains(&f) => Ok((f * train_pairs as f64).round() as usize),
            ValidationSize::Fraction(f) => Err(ConfigError::Invalid(format!(
                "validation fraction {f} must lie in [0, 1)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub rule: SplitRule,
    pub validation: ValidationSize,
    pub seed: u64,
    /// Remove `(A, A)` pairs from the training and validation pairs.
    pub drop_self_pairs: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            rule: SplitRule::default(),
            validation: ValidationSize::Fraction(0.1),
            seed: 0,
            drop_self_pairs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub train: Vec<(String, String)>,
    pub valid: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
    /// Vocabularies over training and validation pairs.
    pub queries: Vocab,
    pub items: Vocab,
    pub train_events: usize,
    pub test_events: usize,
}

/// Day split, per-split pair extraction, vocabularies and validation
/// hold-out.
pub fn ingest(events: &[Event], opts: &IngestOptions) -> Result<Ingested, DataError> {
    let (train_events, test_events) = split_by_day(events, opts.rule);
    let mut train = extract_pairs(&train_events)?;
    let test = extract_pairs(&test_events)?;
    if opts.drop_self_pairs {
        train = drop_self_pairs(train);
    }
    let (queries, items) = build_vocab(&train).map_err(|e| DataError::Invalid(e.to_string()))?;
    let count = opts
        .validation
        .resolve(train.len())
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let (train, valid) =
        hold_out_validation(&train, count, opts.seed).map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(Ingested {
        train,
        valid,
        test,
        queries,
        items,
        train_events: train_events.len(),
        test_events: test_events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn p(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn consecutive_pairs_of_one_user() {
        let ev = vec![Event::new("u", 1, "A"), Event::new("u", 2, "B"), Event::new("u", 3, "C")];
        assert_eq!(extract_pairs(&ev).unwrap(), vec![p("A", "B"), p("B", "C")]);
    }

    #[test]
    fn pairs_never_cross_users() {
        let ev = vec![Event::new("u", 1, "A"), Event::new("v", 2, "B")];
        assert!(extract_pairs(&ev).unwrap().is_empty());
    }

    #[test]
    fn self_pairs_are_kept() {
        let ev = vec![Event::new("u", 1, "A"), Event::new("u", 2, "A")];
        assert_eq!(extract_pairs(&ev).unwrap(), vec![p("A", "A")]);
        assert!(drop_self_pairs(vec![p("A", "A"), p("A", "B")]) == vec![p("A", "B")]);
    }

    #[test]
    fn unsorted_input_is_an_error() {
        let ev = vec![Event::new("u", 5, "A"), Event::new("u", 2, "B")];
        assert!(extract_pairs(&ev).is_err());
        let ev = vec![Event::new("u", 1, "A"), Event::new("v", 2, "B"), Event::new("u", 3, "C")];
        assert!(extract_pairs(&ev).is_err());
    }

    #[test]
    fn pair_count_is_plays_minus_one_per_user() {
        let mut ev = Vec::new();
        let plays = [3usize, 1, 0, 7, 2];
        for (u, &n) in plays.iter().enumerate() {
            for t in 0..n {
                ev.push(Event::new(&format!("u{u}"), t as i64, &format!("i{}", t % 3)));
            }
        }
        let want: usize = plays.iter().map(|&n| n.saturating_sub(1)).sum();
        assert_eq!(extract_pairs(&ev).unwrap().len(), want);
    }

    #[test]
    fn every_fifth_day_goes_to_test() {
        let base = 1_700_000_000 / SECONDS_PER_DAY * SECONDS_PER_DAY;
        let ev: Vec<Event> = (0..10)
            .map(|d| Event::new("u", base + d * SECONDS_PER_DAY + 100, &format!("day{}", d + 1)))
            .collect();
        let (train, test) = split_by_day(&ev, SplitRule::default());
        let names: Vec<&str> = test.iter().map(|e| e.item.as_str()).collect();
        assert_eq!(names, vec!["day5", "day10"]);
        assert_eq!(train.len() + test.len(), ev.len());
    }

    #[test]
    fn single_day_is_all_train() {
        let ev = vec![Event::new("u", 10, "A"), Event::new("u", 20, "B")];
        let (train, test) = split_by_day(&ev, SplitRule::default());
        assert_eq!(train.len(), 2);
        assert!(test.is_empty());
    }

    #[test]
    fn no_pair_spans_train_and_test() {
        let day = SECONDS_PER_DAY;
        // day index 0 (train) then day index 1 (test with modulus 2)
        let ev = vec![Event::new("u", day - 1, "A"), Event::new("u", day + 1, "B")];
        let (train, test) = split_by_day(&ev, SplitRule::new(2).unwrap());
        assert!(extract_pairs(&train).unwrap().is_empty());
        assert!(extract_pairs(&test).unwrap().is_empty());
    }

    #[test]
    fn modulus_below_two_is_rejected() {
        assert!(SplitRule::new(1).is_err());
    }

    #[test]
    fn vocab_in_first_occurrence_order() {
        let (q, d) = build_vocab(&[p("A", "B"), p("B", "A")]).unwrap();
        assert_eq!(q.get("A"), Some(0));
        assert_eq!(q.get("B"), Some(1));
        assert_eq!(d.get("B"), Some(0));
        assert_eq!(d.get("A"), Some(1));
        let (q, d) = build_vocab(&[p("x", "y")]).unwrap();
        assert_eq!((q.len(), d.len()), (1, 1));
        assert_eq!(build_vocab(&[p("A", "B"), p("B", "A")]).unwrap(), build_vocab(&[p("A", "B"), p("B", "A")]).unwrap());
        assert!(build_vocab(&[]).is_err());
    }

    #[test]
    fn validation_holdout() {
        let pairs: Vec<usize> = (0..50).collect();
        let (t, v) = hold_out_validation(&pairs, 0, 1).unwrap();
        assert_eq!(t, pairs);
        assert!(v.is_empty());
        let (t, v) = hold_out_validation(&pairs, 10, 1).unwrap();
        assert_eq!((t.len(), v.len()), (40, 10));
        assert!(v.iter().all(|x| !t.contains(x)));
        assert_eq!(hold_out_validation(&pairs, 10, 1).unwrap(), (t, v));
        assert!(hold_out_validation(&pairs, 50, 1).is_err());
    }

    #[test]
    fn parses_epoch_and_iso_files() {
        let path = Path::new("events.tsv");
        let ev = parse_events(Cursor::new("u\t100\tA\nu\t200\tB\n"), path).unwrap();
        assert_eq!(ev[1], Event::new("u", 200, "B"));
        let ev = parse_events(Cursor::new("u\t2009-05-04T23:08:57Z\tA\n"), path).unwrap();
        assert_eq!(ev[0].timestamp, 1_241_478_537);
        let ev = parse_events(Cursor::new("u\t1970-01-02T00:00:00\tA\n"), path).unwrap();
        assert_eq!(ev[0].timestamp, 86_400);
    }

    #[test]
    fn timestamp_format_is_fixed_per_file() {
        let err = parse_events(Cursor::new("u\t100\tA\nu\t2009-05-04T23:08:57Z\tB\n"), Path::new("e")).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }));
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let err = parse_events(Cursor::new("u\t1\tA\nu\t2\n"), Path::new("e.tsv")).unwrap_err();
        assert_eq!(err.to_string(), "e.tsv:2: expected 3 tab-separated fields, found 2");
    }

    #[test]
    fn token_pairs_skip_unknown_tokens() {
        let (q, d) = build_vocab(&[p("A", "B"), p("B", "C")]).unwrap();
        let (set, skipped) = PairSet::from_tokens(&[p("A", "C"), p("Z", "B"), p("B", "Q")], &q, &d).unwrap();
        assert_eq!(skipped, 2);
        assert_eq!(set.len(), 1);
        assert_eq!(set.pairs()[0], Pair { query: 0, item: 1 });
        assert_eq!(set.query(0), &Query::one_hot(0));
    }

    #[test]
    fn one_hot_queries_are_deduplicated() {
        let set = PairSet::from_one_hot(&[(3, 0), (1, 1), (3, 2)], 4, 3).unwrap();
        assert_eq!(set.queries().len(), 2);
        assert_eq!(set.pairs()[2].query, 0);
        assert!(PairSet::from_one_hot(&[(4, 0)], 4, 3).is_err());
        assert!(PairSet::from_one_hot(&[(0, 3)], 4, 3).is_err());
    }

    #[test]
    fn vocab_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tsv");
        let (q, _) = build_vocab(&[p("A", "B"), p("C", "B")]).unwrap();
        q.write_tsv(&path).unwrap();
        assert_eq!(Vocab::read_tsv(&path).unwrap(), q);
        std::fs::write(&path, "A\t1\n").unwrap();
        assert!(Vocab::read_tsv(&path).is_err());
    }

    #[test]
    fn feature_queries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        std::fs::write(&path, "q0\t0 1.5 0\nq1\t2 0 -1\n").unwrap();
        let qs = read_feature_queries(&path).unwrap();
        assert_eq!(qs.get("q0").unwrap(), &Query::sparse([(1, 1.5)]).unwrap());
        assert_eq!(qs.get("q1").unwrap().nnz(), 2);
        assert_eq!(qs.dim(), 3);

        let mut items = Vocab::default();
        items.insert("a");
        let pairs = vec![("q1".to_string(), "a".to_string()), ("zz".to_string(), "a".to_string())];
        let (set, skipped) = PairSet::from_feature_tokens(&pairs, &qs, &items).unwrap();
        assert_eq!((set.len(), skipped, set.query_dim()), (1, 1, 3));

        std::fs::write(&path, "q0\t0 1.5 0\nq1\t2 0\n").unwrap();
        assert!(read_feature_queries(&path).is_err());
    }

    #[test]
    fn ingest_splits_and_holds_out() {
        let day = SECONDS_PER_DAY;
        let mut events = Vec::new();
        for d in 0..5 {
            for (i, item) in ["a", "b", "a", "c"].iter().enumerate() {
                events.push(Event::new("u", d * day + i as i64, item));
            }
        }
        let opts = IngestOptions {
            validation: ValidationSize::Count(2),
            ..Default::default()
        };
        let out = ingest(&events, &opts).unwrap();
        assert_eq!(out.train_events, 16);
        assert_eq!(out.test_events, 4);
        assert_eq!(out.train.len() + out.valid.len(), 15);
        assert_eq!(out.valid.len(), 2);
        assert_eq!(out.test.len(), 3);
        assert_eq!(out.queries.tokens(), ["a", "b", "c"]);

        let again = ingest(&events, &opts).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn ingest_can_drop_self_pairs() {
        let events: Vec<Event> = ["a", "a", "b"].iter().enumerate().map(|(i, it)| Event::new("u", i as i64, it)).collect();
        let opts = IngestOptions {
            validation: ValidationSize::Count(0),
            drop_self_pairs: true,
            ..Default::default()
        };
        assert_eq!(ingest(&events, &opts).unwrap().train, vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn validation_fraction_bounds() {
        assert_eq!(ValidationSize::Fraction(0.1).resolve(50).unwrap(), 5);
        assert!(ValidationSize::Fraction(1.0).resolve(50).is_err());
    }
}
