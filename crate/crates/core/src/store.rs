//! Plain-directory case store.
//!
//! ```text
//! <root>/cases/<case-id>/case.json
//!                       /image.<png|jpg>
//!                       /outputs/...
//! ```
//!
//! Every write goes to a temp file in the target directory and is renamed
//! into place. Writers of one case serialize on `<case-dir>/.lock`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};
use thiserror::Error;

use crate::canonical;
use crate::case::{parse_case_id, CaseId, CaseRecord, DigestMismatch, DrawingArtifact, MediaType};

pub const CASES_DIR: &str = "cases";
pub const CASE_FILE: &str = "case.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("case {0} is already stored")]
    Duplicate(String),
    #[error("case {0} is not in the store")]
    NotFound(String),
    #[error("case {id}: {source}")]
    Digest { id: String, source: DigestMismatch },
    #[error("{0} exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("case {0} is locked by another writer")]
    Locked(String),
    #[error("output path {0:?} must be relative and stay inside the case directory")]
    BadPath(String),
    #[error("case.json in {dir} names {found}")]
    Misfiled { dir: PathBuf, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Image metadata kept in `case.json`; the bytes live next to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub file: String,
    pub media_type: MediaType,
    pub sha256: String,
}

/// On-disk form of a [`CaseRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub id: CaseId,
    pub image: ImageEntry,
    pub subject_note: String,
    #[serde(default)]
    pub expert_label: Option<String>,
    #[serde(default)]
    pub expert_interpretation: Option<String>,
    #[serde(default)]
    pub stage_outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRef {
    pub case_id: String,
    pub dir: PathBuf,
}

/// Write `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<(), StoreError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    if force {
        tmp.persist(path).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e.error,
        })?;
    } else {
        tmp.persist_noclobber(path).map_err(|e| {
            if e.error.kind() == io::ErrorKind::AlreadyExists {
                StoreError::Exists(path.to_path_buf())
            } else {
                StoreError::Io {
                    path: path.to_path_buf(),
                    source: e.error,
                }
            }
        })?;
    }
    Ok(())
}

pub fn write_json_atomic<T: Serialize + ?Sized>(
    path: &Path,
    value: &T,
    force: bool,
) -> Result<(), StoreError> {
    let text = canonical::to_canonical_json(value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, text.as_bytes(), force)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&raw).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Exclusive per-case writer lock, released on drop.
#[derive(Debug)]
pub struct CaseLock {
    path: PathBuf,
}

impl CaseLock {
    fn acquire(dir: &Path, id: &str) -> Result<Self, StoreError> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(id.to_string()))
            }
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }
}

impl Drop for CaseLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn check_relative(rel: &str) -> Result<&Path, StoreError> {
    let p = Path::new(rel);
    let ok = !rel.is_empty()
        && p.components().all(|c| matches!(c, Component::Normal(_)))
        && p.file_name().is_some_and(|n| n != LOCK_FILE && n != CASE_FILE);
    if ok {
        Ok(p)
    } else {
        Err(StoreError::BadPath(rel.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct CaseStore {
    root: PathBuf,
    index: BTreeMap<String, PathBuf>,
}

impl CaseStore {
    /// Opens (creating if needed) the store at `root` and indexes it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let cases = root.join(CASES_DIR);
        fs::create_dir_all(&cases).map_err(io_err(&cases))?;
        let mut store = Self {
            root,
            index: BTreeMap::new(),
        };
        store.rebuild_index()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &BTreeMap<String, PathBuf> {
        &self.index
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Re-scans `cases/`; a directory counts when it holds a `case.json`
    /// whose id matches the directory name.
    pub fn rebuild_index(&mut self) -> Result<(), StoreError> {
        let cases = self.root.join(CASES_DIR);
        let mut index = BTreeMap::new();
        for entry in fs::read_dir(&cases).map_err(io_err(&cases))? {
            let entry = entry.map_err(io_err(&cases))?;
            let dir = entry.path();
            let Some(name) = dir.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if !dir.join(CASE_FILE).is_file() || parse_case_id(name).is_err() {
                continue;
            }
            let manifest: CaseManifest = read_json(&dir.join(CASE_FILE))?;
            if manifest.id.as_str() != name {
                return Err(StoreError::Misfiled {
                    dir,
                    found: manifest.id.to_string(),
                });
            }
            index.insert(name.to_string(), dir);
        }
        self.index = index;
        Ok(())
    }

    pub fn case_dir(&self, id: &str) -> PathBuf {
        self.root.join(CASES_DIR).join(id)
    }

    fn dir_of(&self, id: &str) -> Result<&PathBuf, StoreError> {
        self.index
            .get(id)
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn lock(&self, id: &str) -> Result<CaseLock, StoreError> {
        CaseLock::acquire(self.dir_of(id)?, id)
    }

    /// Stores a new case. With `force`, an existing case of the same id is
    /// replaced.
    pub fn store_case(&mut self, record: &CaseRecord, force: bool) -> Result<StoredRef, StoreError> {
        let id = record.id.as_str().to_string();
        let dir = self.case_dir(&id);
        if !force && (self.index.contains_key(&id) || dir.join(CASE_FILE).exists()) {
            return Err(StoreError::Duplicate(id));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let _lock = CaseLock::acquire(&dir, &id)?;
        let image_file = format!("image.{}", record.image.media_type().extension());
        write_atomic(&dir.join(&image_file), record.image.bytes(), true)?;
        let manifest = CaseManifest {
            id: record.id.clone(),
            image: ImageEntry {
                file: image_file,
                media_type: record.image.media_type(),
                sha256: record.image.sha256().to_string(),
            },
            subject_note: record.subject_note.clone(),
            expert_label: record.expert_label.clone(),
            expert_interpretation: record.expert_interpretation.clone(),
            stage_outputs: record.stage_outputs.clone(),
        };
        // case.json last: a crash before this leaves no indexed case
        write_json_atomic(&dir.join(CASE_FILE), &manifest, true)?;
        self.index.insert(id.clone(), dir.clone());
        Ok(StoredRef { case_id: id, dir })
    }

    pub fn load_case(&self, id: &str) -> Result<CaseRecord, StoreError> {
        let dir = self.dir_of(id)?;
        let manifest: CaseManifest = read_json(&dir.join(CASE_FILE))?;
        let image_path = dir.join(check_relative(&manifest.image.file)?);
        let bytes = fs::read(&image_path).map_err(io_err(&image_path))?;
        let image = DrawingArtifact::from_parts(bytes, manifest.image.media_type, &manifest.image.sha256)
            .map_err(|source| StoreError::Digest {
                id: id.to_string(),
                source,
            })?;
        Ok(CaseRecord {
            id: manifest.id,
            image,
            subject_note: manifest.subject_note,
            expert_label: manifest.expert_label,
            expert_interpretation: manifest.expert_interpretation,
            stage_outputs: manifest.stage_outputs,
        })
    }

    pub fn load_all(&self) -> Result<Vec<CaseRecord>, StoreError> {
        self.index.keys().map(|id| self.load_case(id)).collect()
    }

    /// Absolute path of a case-relative output.
    pub fn output_path(&self, id: &str, rel: &str) -> Result<PathBuf, StoreError> {
        Ok(self.dir_of(id)?.join(check_relative(rel)?))
    }

    pub fn has_output(&self, id: &str, rel: &str) -> Result<bool, StoreError> {
        Ok(self.output_path(id, rel)?.exists())
    }

    /// Writes raw bytes below the case directory. The caller holds the lock.
    pub fn write_output(
        &self,
        _lock: &CaseLock,
        id: &str,
        rel: &str,
        bytes: &[u8],
        force: bool,
    ) -> Result<PathBuf, StoreError> {
        let path = self.output_path(id, rel)?;
        write_atomic(&path, bytes, force)?;
        Ok(path)
    }

    pub fn write_output_json<T: Serialize + ?Sized>(
        &self,
        lock: &CaseLock,
        id: &str,
        rel: &str,
        value: &T,
        force: bool,
    ) -> Result<PathBuf, StoreError> {
        let path = self.output_path(id, rel)?;
        let text = canonical::to_canonical_json(value).map_err(|source| StoreError::Json {
            path: path.clone(),
            source,
        })?;
        self.write_output(lock, id, rel, text.as_bytes(), force)
    }

    pub fn read_output(&self, id: &str, rel: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.output_path(id, rel)?;
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn read_output_json<T: DeserializeOwned>(&self, id: &str, rel: &str) -> Result<T, StoreError> {
        read_json(&self.output_path(id, rel)?)
    }

    /// Records `stage -> rel` in the case manifest.
    pub fn set_stage_outputs(
        &self,
        _lock: &CaseLock,
        id: &str,
        entries: &[(&str, &str)],
    ) -> Result<(), StoreError> {
        let path = self.dir_of(id)?.join(CASE_FILE);
        let mut manifest: CaseManifest = read_json(&path)?;
        for (stage, rel) in entries {
            manifest.stage_outputs.insert(stage.to_string(), rel.to_string());
        }
        write_json_atomic(&path, &manifest, true)
    }
}
