use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::definitions::{is_identifier, parse_sdd, serialize_sdd, validate_sdd, SensorDeviceDefinition};

use super::RegistryError;

const SUFFIX: &str = ".sdd.xml";

/// Directory of definitions, one canonical `<name>.sdd.xml` file per name.
///
/// Files that do not parse, or whose internal name disagrees with the file
/// name, are moved to `quarantine/` and never served.
#[derive(Debug, Clone)]
pub struct LocalStore {
    root: PathBuf,
}

impl LocalStore {
    /// Opens `root` (created if missing) and quarantines bad files.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let store = LocalStore { root: root.into() };
        std::fs::create_dir_all(&store.root)?;
        let names = store.names()?;
        log::info!("local definition store {}: {} definition(s)", store.root.display(), names.len());
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}{SUFFIX}"))
    }

    fn quarantine(&self, path: &Path, why: &str) {
        let dir = self.root.join("quarantine");
        let target = dir.join(path.file_name().expect("store paths have file names"));
        log::warn!("quarantining {}: {why}", path.display());
        if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::rename(path, &target)) {
            log::warn!("cannot quarantine {}: {e}", path.display());
        }
    }

    /// Loads and checks one file; bad files are quarantined.
    fn load(&self, name: &str, path: &Path) -> Option<SensorDeviceDefinition> {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                return None;
            }
        };
        match parse_sdd(&text) {
            Ok(sdd) if sdd.name == name => Some(sdd),
            Ok(sdd) => {
                self.quarantine(path, &format!("declares name `{}`", sdd.name));
                None
            }
            Err(e) => {
                self.quarantine(path, &e.to_string());
                None
            }
        }
    }

    /// Valid definition names currently stored, sorted.
    pub fn names(&self) -> io::Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(&self.root)? {
            let path = entry?.path();
            if !path.is_file() {
                continue;
            }
            let Some(file) = path.file_name().and_then(|f| f.to_str()) else { continue };
            let Some(name) = file.strip_suffix(SUFFIX) else { continue };
            if !is_identifier(name) {
                self.quarantine(&path, "file name is not a definition name");
                continue;
            }
            if self.load(name, &path).is_some() {
                names.push(name.to_string());
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn get(&self, name: &str) -> Option<SensorDeviceDefinition> {
        if !is_identifier(name) {
            return None;
        }
        self.load(name, &self.path_for(name))
    }

    /// Every valid definition, sorted by name.
    pub fn all(&self) -> io::Result<Vec<SensorDeviceDefinition>> {
        Ok(self.names()?.iter().filter_map(|n| self.get(n)).collect())
    }

    /// Writes the canonical form atomically: readers see the old file or the
    /// new one, never a mix.
    pub fn put(&self, sdd: &SensorDeviceDefinition) -> Result<(), RegistryError> {
        let violations = validate_sdd(sdd);
        if !violations.is_empty() {
            return Err(RegistryError::Invalid(violations));
        }
        let mut tmp = tempfile::Builder::new()
            .prefix(".incoming-")
            .tempfile_in(&self.root)?;
        tmp.write_all(serialize_sdd(sdd).as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path_for(&sdd.name)).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn remove(&self, name: &str) -> io::Result<bool> {
        if !is_identifier(name) {
            return Ok(false);
        }
        match std::fs::remove_file(self.path_for(name)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(e),
        }
    }
}
