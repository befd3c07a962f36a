use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::http::StatusCode;

use fairlens::data::{dataset_hash, load_csv};
use fairlens::{Error, GroupedOutcomes};

use crate::error::{ApiError, ErrorBody};

#[derive(Debug)]
pub struct Dataset {
    pub id: String,
    pub data: GroupedOutcomes,
}

/// Append-only map from content hash to parsed dataset, optionally mirrored to a directory
/// as `<id>.csv` files.
#[derive(Debug, Default)]
pub struct DatasetStore {
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    dir: Option<PathBuf>,
}

fn parse(bytes: &[u8]) -> Result<Dataset, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty dataset body"));
    }
    let data = load_csv(bytes).map_err(|e| match e {
        Error::Validation(issues) => ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: "dataset failed validation".into(),
                issues,
            },
        },
        other => ApiError::new(StatusCode::BAD_REQUEST, other.to_string()),
    })?;
    Ok(Dataset {
        id: dataset_hash(bytes),
        data,
    })
}

impl DatasetStore {
    /// Store backed by `dir` (created if needed); every `<hash>.csv` whose contents match
    /// its name is loaded.
    pub fn open(dir: Option<PathBuf>) -> Result<Self, ApiError> {
        let store = Self {
            datasets: RwLock::default(),
            dir,
        };
        if let Some(dir) = &store.dir {
            std::fs::create_dir_all(dir).map_err(Error::from)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(Error::from)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            paths.sort();
            for path in paths {
                let bytes = std::fs::read(&path).map_err(Error::from)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                match parse(&bytes) {
                    Ok(ds) if ds.id == stem => {
                        store.write().insert(ds.id.clone(), Arc::new(ds));
                    }
                    _ => eprintln!("skipping {}: not a stored dataset", path.display()),
                }
            }
        }
        Ok(store)
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, Arc<Dataset>>> {
        self.datasets.write().unwrap_or_else(|p| p.into_inner())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Arc<Dataset>>> {
        self.datasets.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn ids(&self) -> Vec<String> {
        self.read().keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        self.read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no dataset `{id}`")))
    }

    /// Parse and store; uploading identical bytes again returns the stored dataset.
    pub fn insert(&self, bytes: &[u8]) -> Result<Arc<Dataset>, ApiError> {
        let id = dataset_hash(bytes);
        if let Some(ds) = self.read().get(&id) {
            return Ok(ds.clone());
        }
        let ds = Arc::new(parse(bytes)?);
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{id}.csv.tmp"));
            std::fs::write(&tmp, bytes).map_err(Error::from)?;
            std::fs::rename(&tmp, dir.join(format!("{id}.csv"))).map_err(Error::from)?;
        }
        Ok(self.write().entry(id).or_insert(ds).clone())
    }
}
