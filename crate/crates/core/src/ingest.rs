//! Coded event logs: parsing, validation, and assembly into per-author
//! behavior sequences.
//!
//! A log row carries one coded event for one author. Rows are grouped into
//! four [`Collection`]s, one per `(role, stage)` pair. The individual stage
//! holds turn 0; the collaborative stage concatenates an author's own turns
//! (1 and 3 for native speakers, 2 and 4 for non-native speakers).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the six coded behavior categories.
///
/// The declaration order is the canonical ordinal used for every tie-break
/// in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    Writing,
    NoteTaking,
    WordsmithCrosslingual,
    WordsmithEnglish,
    ActiveSearch,
    PassiveSearch,
}

impl EventType {
    pub const ALL: [EventType; 6] = [
        EventType::Writing,
        EventType::NoteTaking,
        EventType::WordsmithCrosslingual,
        EventType::WordsmithEnglish,
        EventType::ActiveSearch,
        EventType::PassiveSearch,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<EventType> {
        Self::ALL.get(ordinal).copied()
    }

    /// Identifier used in log files (`WordsmithCrosslingual`).
    pub fn name(self) -> &'static str {
        match self {
            EventType::Writing => "Writing",
            EventType::NoteTaking => "NoteTaking",
            EventType::WordsmithCrosslingual => "WordsmithCrosslingual",
            EventType::WordsmithEnglish => "WordsmithEnglish",
            EventType::ActiveSearch => "ActiveSearch",
            EventType::PassiveSearch => "PassiveSearch",
        }
    }

    /// Abbreviation used in compact renderings (`WC`).
    pub fn code(self) -> &'static str {
        match self {
            EventType::Writing => "W",
            EventType::NoteTaking => "NT",
            EventType::WordsmithCrosslingual => "WC",
            EventType::WordsmithEnglish => "WE",
            EventType::ActiveSearch => "AS",
            EventType::PassiveSearch => "PS",
        }
    }

    /// Human-facing label used in prompts and legends (`Wordsmith-Crosslingual`).
    pub fn label(self) -> &'static str {
        match self {
            EventType::Writing => "Writing",
            EventType::NoteTaking => "Note-Taking",
            EventType::WordsmithCrosslingual => "Wordsmith-Crosslingual",
            EventType::WordsmithEnglish => "Wordsmith-English",
            EventType::ActiveSearch => "Active-Search",
            EventType::PassiveSearch => "Passive-Search",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for EventType {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| IngestError::UnknownCategory { line: 0, value: s.to_string() })
    }
}

/// Linguistic background of an author.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "NS")]
    Native,
    #[serde(rename = "NNS")]
    NonNative,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Native, Role::NonNative];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Native => "NS",
            Role::NonNative => "NNS",
        }
    }

    /// Whether `turn` is one of this role's collaborative turns.
    pub fn owns_turn(self, turn: u8) -> bool {
        match self {
            Role::Native => turn == 1 || turn == 3,
            Role::NonNative => turn == 2 || turn == 4,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NS" => Ok(Role::Native),
            "NNS" => Ok(Role::NonNative),
            other => Err(format!("unknown author role {other:?}")),
        }
    }
}

/// An author, identified by team and role. Displays as `NS-8`.
///
/// Ordering is `(team, role)`, which is the author index order used by every
/// deterministic tie-break.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuthorId {
    pub team: u32,
    pub role: Role,
}

impl AuthorId {
    pub fn new(team: u32, role: Role) -> Self {
        AuthorId { team, role }
    }
}

impl fmt::Display for AuthorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.role, self.team)
    }
}

impl FromStr for AuthorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (role, team) = s.split_once('-').ok_or_else(|| format!("malformed author id {s:?}"))?;
        let role = role.parse()?;
        let team: u32 = team.parse().map_err(|_| format!("malformed team in author id {s:?}"))?;
        if team == 0 {
            return Err(format!("team must be positive in author id {s:?}"));
        }
        Ok(AuthorId { team, role })
    }
}

impl Serialize for AuthorId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AuthorId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Individual,
    Collaborative,
}

impl StageKind {
    pub const ALL: [StageKind; 2] = [StageKind::Individual, StageKind::Collaborative];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Individual => "individual",
            StageKind::Collaborative => "collaborative",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "individual" => Ok(StageKind::Individual),
            "collaborative" => Ok(StageKind::Collaborative),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

/// Names one of the four collections. Displays as `NNS-collaborative`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CollectionKey {
    pub role: Role,
    pub stage: StageKind,
}

impl CollectionKey {
    pub const ALL: [CollectionKey; 4] = [
        CollectionKey { role: Role::Native, stage: StageKind::Individual },
        CollectionKey { role: Role::Native, stage: StageKind::Collaborative },
        CollectionKey { role: Role::NonNative, stage: StageKind::Individual },
        CollectionKey { role: Role::NonNative, stage: StageKind::Collaborative },
    ];

    pub fn new(role: Role, stage: StageKind) -> Self {
        CollectionKey { role, stage }
    }
}

impl fmt::Display for CollectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.role, self.stage)
    }
}

impl FromStr for CollectionKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (role, stage) = s.split_once('-').ok_or_else(|| format!("malformed collection {s:?}"))?;
        Ok(CollectionKey { role: role.parse()?, stage: stage.parse()? })
    }
}

/// A single coded event. Times are seconds from the start of its turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub category: EventType,
    pub activity_label: String,
    pub turn: u8,
    pub start_s: f64,
    pub end_s: f64,
}

impl Event {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Total order used to sequence events: turn, start, end, category, label.
    fn sequence_cmp(&self, other: &Event) -> Ordering {
        self.turn
            .cmp(&other.turn)
            .then(self.start_s.total_cmp(&other.start_s))
            .then(self.end_s.total_cmp(&other.end_s))
            .then(self.category.cmp(&other.category))
            .then_with(|| self.activity_label.cmp(&other.activity_label))
    }
}

/// One parsed log row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub author: AuthorId,
    pub event: Event,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Json,
}

impl LogFormat {
    /// Guess the format from a file name; anything not ending in `.json` is CSV.
    pub fn from_path(path: &str) -> LogFormat {
        if path.to_ascii_lowercase().ends_with(".json") {
            LogFormat::Json
        } else {
            LogFormat::Csv
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("required column {0:?} is missing")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: unknown event category {value:?}")]
    UnknownCategory { line: u64, value: String },
    #[error("line {line}: event ends before it starts")]
    NegativeDuration { line: u64 },
    #[error("{author} has an event in turn {turn}, which belongs to the other role")]
    RoleTurnMismatch { author: AuthorId, turn: u8 },
    #[error("collection has no sequences")]
    EmptyCollection,
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::InvalidUtf8 => "InvalidUtf8",
            IngestError::MissingColumn(_) => "MissingColumn",
            IngestError::MalformedRow { .. } => "MalformedRow",
            IngestError::UnknownCategory { .. } => "UnknownCategory",
            IngestError::NegativeDuration { .. } => "NegativeDuration",
            IngestError::RoleTurnMismatch { .. } => "RoleTurnMismatch",
            IngestError::EmptyCollection => "EmptyCollection",
        }
    }
}

pub const COLUMNS: [&str; 7] =
    ["team_id", "author_role", "turn", "event_category", "activity_label", "start_s", "end_s"];

/// Parse a coded event log.
pub fn parse_event_log(bytes: &[u8], format: LogFormat) -> Result<Vec<LogRecord>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|_| IngestError::InvalidUtf8)?;
    match format {
        LogFormat::Csv => parse_csv(text),
        LogFormat::Json => parse_json(text),
    }
}

fn parse_csv(text: &str) -> Result<Vec<LogRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            IngestError::MalformedRow { line, reason: e.to_string() }
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<&str, IngestError> {
            row.get(index[i]).ok_or_else(|| IngestError::MalformedRow {
                line,
                reason: format!("missing value for {}", COLUMNS[i]),
            })
        };
        let raw = RawRow {
            team_id: parse_field(field(0)?.trim(), "team_id", line)?,
            author_role: field(1)?.trim().to_string(),
            turn: parse_field(field(2)?.trim(), "turn", line)?,
            event_category: field(3)?.trim().to_string(),
            activity_label: field(4)?.to_string(),
            start_s: parse_field(field(5)?.trim(), "start_s", line)?,
            end_s: parse_field(field(6)?.trim(), "end_s", line)?,
        };
        records.push(raw.validate(line)?);
    }
    Ok(records)
}

fn parse_field<T: FromStr>(value: &str, column: &str, line: u64) -> Result<T, IngestError> {
    value.parse().map_err(|_| IngestError::MalformedRow {
        line,
        reason: format!("cannot parse {column} from {value:?}"),
    })
}

fn parse_json(text: &str) -> Result<Vec<LogRecord>, IngestError> {
    let rows: Vec<serde_json::Value> = serde_json::from_str(text)
        .map_err(|e| IngestError::MalformedRow { line: e.line() as u64, reason: e.to_string() })?;
    rows.into_iter()
        .enumerate()
        .map(|(i, value)| {
            let line = i as u64 + 1;
            if let Some(obj) = value.as_object() {
                if let Some(missing) = COLUMNS.iter().find(|c| !obj.contains_key(**c)) {
                    return Err(IngestError::MissingColumn(missing.to_string()));
                }
            }
            let raw: RawRow = serde_json::from_value(value)
                .map_err(|e| IngestError::MalformedRow { line, reason: e.to_string() })?;
            raw.validate(line)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    team_id: u32,
    author_role: String,
    turn: u8,
    event_category: String,
    activity_label: String,
    start_s: f64,
    end_s: f64,
}

impl RawRow {
    fn validate(self, line: u64) -> Result<LogRecord, IngestError> {
        let malformed = |reason: String| IngestError::MalformedRow { line, reason };
        if self.team_id == 0 {
            return Err(malformed("team_id must be positive".into()));
        }
        let role: Role = self.author_role.parse().map_err(malformed)?;
        if self.turn > 4 {
            return Err(malformed(format!("turn {} is outside 0..=4", self.turn)));
        }
        let category: EventType = self
            .event_category
            .parse()
            .map_err(|_| IngestError::UnknownCategory { line, value: self.event_category.clone() })?;
        if !self.start_s.is_finite() || !self.end_s.is_finite() || self.start_s < 0.0 {
            return Err(malformed("times must be finite and non-negative".into()));
        }
        if self.end_s < self.start_s {
            return Err(IngestError::NegativeDuration { line });
        }
        Ok(LogRecord {
            author: AuthorId::new(self.team_id, role),
            event: Event {
                category,
                activity_label: self.activity_label,
                turn: self.turn,
                start_s: self.start_s,
                end_s: self.end_s,
            },
        })
    }
}

/// Write records back out in the given format. `parse_event_log` inverts this.
pub fn serialize_event_log(records: &[LogRecord], format: LogFormat) -> Vec<u8> {
    match format {
        LogFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(COLUMNS).expect("writing to a Vec cannot fail");
            for r in records {
                writer
                    .write_record([
                        r.author.team.to_string(),
                        r.author.role.to_string(),
                        r.event.turn.to_string(),
                        r.event.category.name().to_string(),
                        r.event.activity_label.clone(),
                        r.event.start_s.to_string(),
                        r.event.end_s.to_string(),
                    ])
                    .expect("writing to a Vec cannot fail");
            }
            writer.into_inner().expect("flushing a Vec cannot fail")
        }
        LogFormat::Json => {
            let rows: Vec<RawRow> = records
                .iter()
                .map(|r| RawRow {
                    team_id: r.author.team,
                    author_role: r.author.role.to_string(),
                    turn: r.event.turn,
                    event_category: r.event.category.name().to_string(),
                    activity_label: r.event.activity_label.clone(),
                    start_s: r.event.start_s,
                    end_s: r.event.end_s,
                })
                .collect();
            serde_json::to_vec_pretty(&rows).expect("rows always serialize")
        }
    }
}

/// The ordered events of one author in one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSequence {
    pub author: AuthorId,
    pub stage: StageKind,
    pub events: Vec<Event>,
}

impl BehaviorSequence {
    pub fn categories(&self) -> Vec<EventType> {
        self.events.iter().map(|e| e.category).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// All sequences sharing a role and a stage, sorted by author.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub role: Role,
    pub stage: StageKind,
    pub sequences: Vec<BehaviorSequence>,
}

impl Collection {
    /// Build a collection from sequences, sorting them by author.
    ///
    /// Panics if a sequence does not match `role`/`stage` or an author repeats.
    pub fn new(role: Role, stage: StageKind, mut sequences: Vec<BehaviorSequence>) -> Self {
        sequences.sort_by_key(|s| s.author);
        for s in &sequences {
            assert!(s.author.role == role && s.stage == stage, "sequence {} does not belong to {role}-{stage}", s.author);
        }
        assert!(sequences.windows(2).all(|w| w[0].author != w[1].author), "duplicate author in collection");
        Collection { role, stage, sequences }
    }

    pub fn key(&self) -> CollectionKey {
        CollectionKey::new(self.role, self.stage)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn authors(&self) -> Vec<AuthorId> {
        self.sequences.iter().map(|s| s.author).collect()
    }

    pub fn index_of(&self, author: AuthorId) -> Option<usize> {
        self.sequences.binary_search_by_key(&author, |s| s.author).ok()
    }

    pub fn get(&self, author: AuthorId) -> Option<&BehaviorSequence> {
        self.index_of(author).map(|i| &self.sequences[i])
    }

    /// Category lists of every sequence, in author order.
    pub fn category_lists(&self) -> Vec<Vec<EventType>> {
        self.sequences.iter().map(BehaviorSequence::categories).collect()
    }
}

/// The four collections of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collections {
    collections: Vec<Collection>,
}

impl Collections {
    pub fn get(&self, key: CollectionKey) -> &Collection {
        self.collections
            .iter()
            .find(|c| c.key() == key)
            .expect("all four collections are always present")
    }

    pub fn iter(&self) -> impl Iterator<Item = &Collection> {
        self.collections.iter()
    }
}

/// Group validated records into the four `(role, stage)` collections.
pub fn assemble_collections(records: &[LogRecord]) -> Result<Collections, IngestError> {
    let mut grouped: BTreeMap<(AuthorId, StageKind), Vec<Event>> = BTreeMap::new();
    for r in records {
        let stage = match r.event.turn {
            0 => StageKind::Individual,
            t if r.author.role.owns_turn(t) => StageKind::Collaborative,
            t => return Err(IngestError::RoleTurnMismatch { author: r.author, turn: t }),
        };
        grouped.entry((r.author, stage)).or_default().push(r.event.clone());
    }

    let mut collections: Vec<Collection> = CollectionKey::ALL
        .iter()
        .map(|k| Collection { role: k.role, stage: k.stage, sequences: Vec::new() })
        .collect();
    for ((author, stage), mut events) in grouped {
        events.sort_by(Event::sequence_cmp);
        warn_overlaps(author, &events);
        let target = collections
            .iter_mut()
            .find(|c| c.role == author.role && c.stage == stage)
            .expect("every key has a collection");
        target.sequences.push(BehaviorSequence { author, stage, events });
    }
    Ok(Collections { collections })
}

fn warn_overlaps(author: AuthorId, events: &[Event]) {
    for pair in events.windows(2) {
        if pair[0].turn == pair[1].turn && pair[1].start_s < pair[0].end_s {
            log::warn!(
                "{author}: overlapping events in turn {} at {}s and {}s",
                pair[0].turn,
                pair[0].start_s,
                pair[1].start_s
            );
        }
    }
}

/// Totals for one role and category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityCell {
    pub role: Role,
    pub category: EventType,
    pub hours: f64,
    pub count: u64,
    /// Share of the role's total duration, in percent.
    pub duration_pct: f64,
    /// Share of the role's total event count, in percent.
    pub count_pct: f64,
}

/// Duration and frequency of each category per role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityTable {
    pub cells: Vec<ActivityCell>,
}

impl ActivityTable {
    pub fn cell(&self, role: Role, category: EventType) -> &ActivityCell {
        self.cells
            .iter()
            .find(|c| c.role == role && c.category == category)
            .expect("table covers every role and category")
    }
}

pub fn activity_table<'a>(collections: impl IntoIterator<Item = &'a Collection>) -> ActivityTable {
    let mut seconds = [[0.0f64; 6]; 2];
    let mut counts = [[0u64; 6]; 2];
    for c in collections {
        let r = c.role as usize;
        for e in c.sequences.iter().flat_map(|s| &s.events) {
            seconds[r][e.category.ordinal()] += e.duration_s();
            counts[r][e.category.ordinal()] += 1;
        }
    }

    let mut cells = Vec::with_capacity(12);
    for role in Role::ALL {
        let r = role as usize;
        let total_s: f64 = seconds[r].iter().sum();
        let total_n: u64 = counts[r].iter().sum();
        for category in EventType::ALL {
            let k = category.ordinal();
            cells.push(ActivityCell {
                role,
                category,
                hours: seconds[r][k] / 3600.0,
                count: counts[r][k],
                duration_pct: percent(seconds[r][k], total_s),
                count_pct: percent(counts[r][k] as f64, total_n as f64),
            });
        }
    }
    ActivityTable { cells }
}

fn percent(part: f64, total: f64) -> f64 {
    if total > 0.0 {
        100.0 * part / total
    } else {
        0.0
    }
}

/// Event-count statistics of a collection. `std` is the population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub sequences: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn sequence_stats(c: &Collection) -> Result<SequenceStats, IngestError> {
    let lengths: Vec<usize> = c.sequences.iter().map(BehaviorSequence::len).collect();
    let (Some(&min), Some(&max)) = (lengths.iter().min(), lengths.iter().max()) else {
        return Err(IngestError::EmptyCollection);
    };
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<usize>() as f64 / n;
    let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok(SequenceStats { sequences: lengths.len(), min, max, mean, std: var.sqrt() })
}
