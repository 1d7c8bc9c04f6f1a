use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::warn;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;

pub const DEFAULT_TTL: Duration = Duration::from_secs(7 * 24 * 3600);

/// One line of a cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub host: String,
    pub text: String,
    /// Epoch seconds.
    pub fetched_at: i64,
    pub body: String,
}

/// Response cache keyed by (host, query text), with an optional append-only
/// file per host. Later records for the same key shadow earlier ones.
pub struct ResponseCache {
    ttl_secs: i64,
    clock: Arc<dyn Clock>,
    entries: RwLock<HashMap<(String, String), (i64, String)>>,
    dir: Option<PathBuf>,
    files: Mutex<HashMap<String, File>>,
}

impl ResponseCache {
    pub fn in_memory(ttl: Duration, clock: Arc<dyn Clock>) -> Self {
        ResponseCache {
            ttl_secs: ttl.as_secs() as i64,
            clock,
            entries: RwLock::new(HashMap::new()),
            dir: None,
            files: Mutex::new(HashMap::new()),
        }
    }

    /// Opens (creating if needed) a cache directory and loads every
    /// `*.jsonl` record file in it.
    pub fn open(
        dir: impl AsRef<Path>,
        ttl: Duration,
        clock: Arc<dyn Clock>,
    ) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut cache = ResponseCache::in_memory(ttl, clock);
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        {
            let mut entries = cache.entries.write();
            for path in paths {
                for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                    let line = line?;
                    match serde_json::from_str::<CacheRecord>(&line) {
                        Ok(r) => {
                            entries.insert((r.host, r.text), (r.fetched_at, r.body));
                        }
                        Err(e) => warn!(
                            "{}:{}: skipping bad cache record: {e}",
                            path.display(),
                            n + 1
                        ),
                    }
                }
            }
        }
        cache.dir = Some(dir);
        Ok(cache)
    }

    fn now_secs(&self) -> i64 {
        self.clock.now_millis().div_euclid(1_000)
    }

    pub fn get(&self, host: &str, text: &str) -> Option<String> {
        let entries = self.entries.read();
        let (fetched_at, body) = entries.get(&(host.to_string(), text.to_string()))?;
        (self.now_secs() - fetched_at < self.ttl_secs).then(|| body.clone())
    }

    pub fn put(&self, host: &str, text: &str, body: &str) -> std::io::Result<()> {
        let record = CacheRecord {
            host: host.to_string(),
            text: text.to_string(),
            fetched_at: self.now_secs(),
            body: body.to_string(),
        };
        if let Some(dir) = &self.dir {
            let mut files = self.files.lock();
            let file = match files.get_mut(host) {
                Some(f) => f,
                None => {
                    let path = dir.join(format!("{}.jsonl", file_stem(host)));
                    let f = OpenOptions::new().create(true).append(true).open(path)?;
                    files.entry(host.to_string()).or_insert(f)
                }
            };
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(file, "{line}")?;
        }
        self.entries
            .write()
            .insert((record.host, record.text), (record.fetched_at, record.body));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn file_stem(host: &str) -> String {
    host.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
