use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::definitions::{LibraryRequirement, SensorDeviceDefinition};

const HTTP_TIMEOUT: Duration = Duration::from_secs(30);
const MAX_ARTIFACT_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Fetched(PathBuf),
    Cached(PathBuf),
    ChecksumMismatch { expected: String, actual: String },
    Unreachable(String),
    SkippedPlatform,
}

/// One outcome per library requirement, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibraryFetchReport {
    pub outcomes: Vec<(String, FetchOutcome)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn download(source: &str) -> Result<Vec<u8>, String> {
    let url = url::Url::parse(source).map_err(|e| format!("{source}: {e}"))?;
    match url.scheme() {
        "file" => {
            let path = url
                .to_file_path()
                .map_err(|_| format!("{source}: not a local path"))?;
            std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))
        }
        "http" | "https" => {
            let response = ureq::AgentBuilder::new()
                .timeout(HTTP_TIMEOUT)
                .build()
                .get(source)
                .call()
                .map_err(|e| format!("{source}: {e}"))?;
            let mut body = Vec::new();
            response
                .into_reader()
                .take(MAX_ARTIFACT_BYTES)
                .read_to_end(&mut body)
                .map_err(|e| format!("{source}: {e}"))?;
            Ok(body)
        }
        other => Err(format!("{source}: unsupported scheme `{other}`")),
    }
}

/// Writes `bytes` to `dest` through a temp file in the same directory.
///
/// Returns `false` when another writer placed the file first.
fn place(dest: &Path, bytes: &[u8]) -> io::Result<bool> {
    let dir = dest.parent().expect("cache entries live in a directory");
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    match tmp.persist_noclobber(dest) {
        Ok(_) => Ok(true),
        Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(e.error),
    }
}

fn cached_copy_is_valid(path: &Path, checksum: &str) -> bool {
    std::fs::read(path)
        .map(|bytes| sha256_hex(&bytes) == checksum)
        .unwrap_or(false)
}

fn fetch_one(req: &LibraryRequirement, cache_dir: &Path) -> FetchOutcome {
    let expected = req.checksum.as_ref().map(|c| c.to_ascii_lowercase());
    if let Some(sum) = &expected {
        let path = cache_dir.join(sum).join(&req.package_name);
        if cached_copy_is_valid(&path, sum) {
            return FetchOutcome::Cached(path);
        }
    }
    let bytes = match download(&req.source_url) {
        Ok(b) => b,
        Err(e) => return FetchOutcome::Unreachable(e),
    };
    let actual = sha256_hex(&bytes);
    if let Some(sum) = expected {
        if sum != actual {
            return FetchOutcome::ChecksumMismatch {
                expected: sum,
                actual,
            };
        }
    }
    let path = cache_dir.join(&actual).join(&req.package_name);
    if req.checksum.is_none() && cached_copy_is_valid(&path, &actual) {
        return FetchOutcome::Cached(path);
    }
    match place(&path, &bytes) {
        Ok(true) => FetchOutcome::Fetched(path),
        Ok(false) => FetchOutcome::Cached(path),
        Err(e) => FetchOutcome::Unreachable(format!("cache write {}: {e}", path.display())),
    }
}

/// Downloads every library whose platform matches into a content-addressed cache.
///
/// Requirements tagged `any` match every platform. Only an unwritable cache
/// directory fails the call; per-library problems are reported as outcomes.
pub fn fetch_libraries(
    sdd: &SensorDeviceDefinition,
    platform_tag: &str,
    cache_dir: &Path,
) -> io::Result<LibraryFetchReport> {
    std::fs::create_dir_all(cache_dir)?;
    // probe writability up front
    tempfile::NamedTempFile::new_in(cache_dir)?;

    let outcomes = sdd
        .libraries
        .iter()
        .map(|req| {
            let outcome = if req.platform_tag != platform_tag && req.platform_tag != "any" {
                FetchOutcome::SkippedPlatform
            } else {
                fetch_one(req, cache_dir)
            };
            (req.package_name.clone(), outcome)
        })
        .collect();
    Ok(LibraryFetchReport { outcomes })
}
