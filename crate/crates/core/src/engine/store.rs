use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, LineWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::definitions::WindowSpec;
use crate::runtime::{StreamElement, Value};

/// One stored element as it appears in query output and the persistence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub ts: i64,
    pub source: String,
    pub values: Vec<Value>,
}

impl Row {
    fn new(source: &str, element: &StreamElement) -> Self {
        Row {
            ts: element.timestamp_ms,
            source: source.to_string(),
            values: element.values.clone(),
        }
    }

    pub fn element(&self) -> StreamElement {
        StreamElement {
            timestamp_ms: self.ts,
            values: self.values.clone(),
        }
    }
}

/// Reads a persistence file back into rows.
pub fn replay(path: &Path) -> io::Result<Vec<Row>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(rows)
}

struct Persistence {
    path: PathBuf,
    out: LineWriter<File>,
    failed: bool,
}

/// Append-only element sequence with an optional JSON-lines mirror.
pub struct SensorStore {
    rows: RwLock<Vec<Row>>,
    persistence: Option<Mutex<Persistence>>,
}

impl std::fmt::Debug for SensorStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SensorStore").field("len", &self.len()).finish()
    }
}

impl Default for SensorStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl SensorStore {
    pub fn in_memory() -> Self {
        SensorStore {
            rows: RwLock::new(Vec::new()),
            persistence: None,
        }
    }

    /// Opens (or creates) a persistence file and restores its rows.
    ///
    /// A torn final line left by a crash is cut off before appending resumes.
    pub fn persistent(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut rows = Vec::new();
        let mut good = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                match serde_json::from_str::<Row>(line.trim_end()) {
                    Ok(row) => rows.push(row),
                    Err(_) if line.trim().is_empty() => {}
                    Err(e) => {
                        log::warn!("{}: dropping unreadable tail: {e}", path.display());
                        break;
                    }
                }
                good += n as u64;
            }
        }
        if file.seek(SeekFrom::End(0))? != good {
            file.set_len(good)?;
        }
        Ok(SensorStore {
            rows: RwLock::new(rows),
            persistence: Some(Mutex::new(Persistence {
                path: path.to_path_buf(),
                out: LineWriter::new(file),
                failed: false,
            })),
        })
    }

    pub fn append(&self, source: &str, element: &StreamElement) {
        let row = Row::new(source, element);
        let mut rows = self.rows.write().unwrap();
        if let Some(p) = &self.persistence {
            let mut p = p.lock().unwrap();
            let line = serde_json::to_string(&row).expect("rows always serialize");
            if let Err(e) = writeln!(p.out, "{line}") {
                if !std::mem::replace(&mut p.failed, true) {
                    log::warn!("{}: persistence stopped: {e}", p.path.display());
                }
            }
        }
        rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<Row> {
        self.rows.read().unwrap().clone()
    }

    /// The last `n` rows, newest last.
    pub fn latest(&self, n: usize) -> Vec<Row> {
        let rows = self.rows.read().unwrap();
        rows[rows.len().saturating_sub(n)..].to_vec()
    }

    /// Window contents as of the most recent slide boundary.
    pub fn window(&self, spec: WindowSpec) -> Vec<StreamElement> {
        let rows = self.rows.read().unwrap();
        let end = rows.len() - rows.len() % spec.slide.max(1);
        rows[end.saturating_sub(spec.size)..end]
            .iter()
            .map(Row::element)
            .collect()
    }

    pub fn flush(&self) -> io::Result<()> {
        match &self.persistence {
            Some(p) => p.lock().unwrap().out.flush(),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(i: i64) -> StreamElement {
        StreamElement {
            timestamp_ms: i,
            values: vec![Value::Int(i)],
        }
    }

    fn ids(elements: &[StreamElement]) -> Vec<i64> {
        elements.iter().map(|e| e.timestamp_ms).collect()
    }

    #[test]
    fn window_examples() {
        let store = SensorStore::in_memory();
        let w31 = WindowSpec::new(3, 1).unwrap();
        let w22 = WindowSpec::new(2, 2).unwrap();
        store.append("a", &el(1));
        store.append("a", &el(2));
        assert_eq!(ids(&store.window(w31)), [1, 2]);
        for i in 3..=5 {
            store.append("a", &el(i));
        }
        assert_eq!(ids(&store.window(w31)), [3, 4, 5]);
        assert_eq!(ids(&store.window(w22)), [3, 4]);
    }

    #[test]
    fn latest_rows() {
        let store = SensorStore::in_memory();
        assert!(store.latest(3).is_empty());
        for i in 0..4 {
            store.append("s", &el(i));
        }
        assert!(store.latest(0).is_empty());
        assert_eq!(store.latest(2).iter().map(|r| r.ts).collect::<Vec<_>>(), [2, 3]);
        assert_eq!(store.latest(99).len(), 4);
    }

    #[test]
    fn persistence_replays_and_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vs.jsonl");
        let store = SensorStore::persistent(&path).unwrap();
        store.append("a", &StreamElement {
            timestamp_ms: 7,
            values: vec![Value::Float(1.0), Value::Text("x\ny".into()), Value::Bool(true)],
        });
        store.append("b", &el(8));
        store.flush().unwrap();
        assert_eq!(replay(&path).unwrap(), store.rows());
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with(r#"{"ts":7,"source":"a","values":[1.0,"x\ny",true]}"#));
        drop(store);

        // simulate a crash mid-write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"ts":9,"sour"#).unwrap();
        let reopened = SensorStore::persistent(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        reopened.append("c", &el(10));
        reopened.flush().unwrap();
        assert_eq!(replay(&path).unwrap(), reopened.rows());
    }
}
