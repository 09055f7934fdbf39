//! In-memory datasets and sessions, mirrored to a data directory when one is
//! configured.
//!
//! Layout under the data directory:
//!
//! ```text
//! datasets/<id>.csv | datasets/<id>.json   uploaded logs, as received
//! sessions/<id>.json                      saved session files
//! audit.jsonl                             generation prompts and responses
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use penflow_core::consensus::CollectionAnalysis;
use penflow_core::ingest::{assemble_collections, parse_event_log, CollectionKey, Collections, LogFormat, LogRecord};
use penflow_core::session::{load_session, save_session, SessionState};
use penflow_core::Error;
use sha2::{Digest, Sha256};

use crate::error::ApiError;

pub struct Dataset {
    pub id: String,
    pub format: LogFormat,
    pub records: Vec<LogRecord>,
    pub collections: Collections,
    alpha: f64,
    analyses: Mutex<HashMap<CollectionKey, Arc<CollectionAnalysis>>>,
}

/// Content address of an uploaded log.
pub fn dataset_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn extension(format: LogFormat) -> &'static str {
    match format {
        LogFormat::Csv => "csv",
        LogFormat::Json => "json",
    }
}

impl Dataset {
    pub fn parse(bytes: &[u8], format: LogFormat, alpha: f64) -> Result<Dataset, Error> {
        let records = parse_event_log(bytes, format)?;
        let collections = assemble_collections(&records)?;
        Ok(Dataset {
            id: dataset_id(bytes),
            format,
            records,
            collections,
            alpha,
            analyses: Mutex::new(HashMap::new()),
        })
    }

    /// Clustering state of one collection, computed on first use.
    pub fn analysis(&self, key: CollectionKey) -> Result<Arc<CollectionAnalysis>, Error> {
        let mut cache = self.analyses.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(a) = cache.get(&key) {
            return Ok(a.clone());
        }
        let a = Arc::new(CollectionAnalysis::new(self.collections.get(key).clone(), self.alpha)?);
        cache.insert(key, a.clone());
        Ok(a)
    }
}

/// Guess the format from the first non-blank byte.
pub fn sniff_format(bytes: &[u8]) -> LogFormat {
    match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'[') | Some(b'{') => LogFormat::Json,
        _ => LogFormat::Csv,
    }
}

pub struct Store {
    data_dir: Option<PathBuf>,
    alpha: f64,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    default_dataset: RwLock<Option<String>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<SessionState>>>>,
    next_session: Mutex<u64>,
}

impl Store {
    pub fn new(data_dir: Option<PathBuf>, alpha: f64) -> Store {
        Store {
            data_dir,
            alpha,
            datasets: RwLock::new(BTreeMap::new()),
            default_dataset: RwLock::new(None),
            sessions: RwLock::new(BTreeMap::new()),
            next_session: Mutex::new(1),
        }
    }

    /// Open a data directory, creating it if needed, and load what it holds.
    /// Unreadable files are skipped with a warning.
    pub fn open(data_dir: &Path, alpha: f64) -> io::Result<Store> {
        fs::create_dir_all(data_dir.join("datasets"))?;
        fs::create_dir_all(data_dir.join("sessions"))?;
        let store = Store::new(Some(data_dir.to_path_buf()), alpha);

        let mut entries: Vec<PathBuf> =
            fs::read_dir(data_dir.join("datasets"))?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| has_ext(p, &["csv", "json"])).collect();
        entries.sort();
        for path in entries {
            let format = LogFormat::from_path(&path.to_string_lossy());
            match fs::read(&path).map_err(|e| e.to_string()).and_then(|b| {
                Dataset::parse(&b, format, alpha).map_err(|e| e.to_string())
            }) {
                Ok(d) => store.insert_dataset(d),
                Err(e) => log::warn!("skipping dataset {}: {e}", path.display()),
            }
        }

        let mut entries: Vec<PathBuf> =
            fs::read_dir(data_dir.join("sessions"))?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| has_ext(p, &["json"])).collect();
        entries.sort();
        for path in entries {
            match fs::read(&path).map_err(|e| e.to_string()).and_then(|b| load_session(&b).map_err(|e| e.to_string())) {
                Ok(s) => {
                    if let Some(n) = s.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                        let mut next = store.next_session.lock().unwrap_or_else(|e| e.into_inner());
                        *next = (*next).max(n + 1);
                    }
                    store.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
                Err(e) => log::warn!("skipping session {}: {e}", path.display()),
            }
        }
        Ok(store)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn insert_dataset(&self, d: Dataset) {
        let id = d.id.clone();
        self.datasets.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), Arc::new(d));
        *self.default_dataset.write().unwrap_or_else(|e| e.into_inner()) = Some(id);
    }

    /// Parse, store and persist a log. Uploading identical bytes again
    /// replaces the dataset with an identical one.
    pub fn add_dataset(&self, bytes: &[u8], format: LogFormat) -> Result<Arc<Dataset>, ApiError> {
        let d = Dataset::parse(bytes, format, self.alpha)?;
        if let Some(dir) = &self.data_dir {
            let path = dir.join("datasets").join(format!("{}.{}", d.id, extension(format)));
            write_atomic(&path, bytes).map_err(|e| ApiError::internal(format!("cannot store dataset: {e}")))?;
        }
        let id = d.id.clone();
        self.insert_dataset(d);
        Ok(self.dataset(&id).expect("just inserted"))
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        self.datasets
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_dataset(id))
    }

    /// The most recently added dataset.
    pub fn default_dataset(&self) -> Result<Arc<Dataset>, ApiError> {
        let id = self.default_dataset.read().unwrap_or_else(|e| e.into_inner()).clone();
        match id {
            Some(id) => self.dataset(&id),
            None => Err(ApiError::unknown_dataset("(none loaded)")),
        }
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.datasets.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn new_session_id(&self) -> String {
        let mut next = self.next_session.lock().unwrap_or_else(|e| e.into_inner());
        let id = format!("s{next}");
        *next += 1;
        id
    }

    pub fn insert_session(&self, state: SessionState) -> Result<Arc<Mutex<SessionState>>, ApiError> {
        self.persist_session(&state)?;
        let handle = Arc::new(Mutex::new(state));
        let id = handle.lock().unwrap_or_else(|e| e.into_inner()).id.clone();
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, handle.clone());
        Ok(handle)
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<SessionState>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    pub fn persist_session(&self, state: &SessionState) -> Result<(), ApiError> {
        if let Some(dir) = &self.data_dir {
            let path = dir.join("sessions").join(format!("{}.json", state.id));
            write_atomic(&path, &save_session(state)).map_err(|e| ApiError::internal(format!("cannot save session: {e}")))?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn has_ext(path: &Path, exts: &[&str]) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e))
}
