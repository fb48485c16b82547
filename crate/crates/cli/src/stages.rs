//! Stage execution with content-hash caching. Every stage records a
//! manifest of input/param/output hashes; a stage re-runs only when
//! something upstream actually changed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn sha256_str(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    format!("{:x}", hasher.finalize())
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct Manifest {
    stage: String,
    /// Logical input name -> content hash.
    inputs: BTreeMap<String, String>,
    params_hash: String,
    /// Artifact name (relative to the output directory) -> content hash.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageState {
    Ran,
    Cached,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct StageStatus {
    pub name: &'static str,
    pub state: StageState,
}

impl StageStatus {
    pub fn describe(&self) -> String {
        let state = match self.state {
            StageState::Ran => "ran",
            StageState::Cached => "cached",
            StageState::Skipped => "skipped",
        };
        format!("{}: {}", self.name, state)
    }
}

/// One pipeline stage: named inputs (external files or upstream artifacts),
/// a serialized parameter subset, and the artifacts it produces.
pub struct Stage<'a> {
    pub name: &'static str,
    pub inputs: Vec<(String, PathBuf)>,
    pub params: String,
    /// Artifact names relative to `out_dir`.
    pub outputs: Vec<String>,
    pub run: Box<dyn FnOnce() -> Result<()> + 'a>,
}

fn manifest_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join("manifests").join(format!("{stage}.json"))
}

fn hash_inputs(inputs: &[(String, PathBuf)]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (name, path) in inputs {
        let hash = sha256_file(path)
            .with_context(|| format!("input {name} ({})", path.display()))?;
        map.insert(name.clone(), hash);
    }
    Ok(map)
}

fn is_up_to_date(
    out_dir: &Path,
    stage: &Stage,
    input_hashes: &BTreeMap<String, String>,
    params_hash: &str,
) -> bool {
    let Ok(raw) = fs::read_to_string(manifest_path(out_dir, stage.name)) else {
        return false;
    };
    let Ok(manifest) = serde_json::from_str::<Manifest>(&raw) else {
        return false;
    };
    if manifest.params_hash != params_hash || &manifest.inputs != input_hashes {
        return false;
    }
    if manifest.outputs.len() != stage.outputs.len()
        || stage.outputs.iter().any(|o| !manifest.outputs.contains_key(o))
    {
        return false;
    }
    for (name, recorded) in &manifest.outputs {
        match sha256_file(&out_dir.join(name)) {
            Ok(actual) if actual == *recorded => {}
            _ => return false,
        }
    }
    true
}

/// Execute a stage unless its manifest proves it is current. Errors carry
/// the stage name.
pub fn execute(out_dir: &Path, stage: Stage) -> Result<StageStatus> {
    let name = stage.name;
    execute_inner(out_dir, stage).with_context(|| format!("stage {name} failed"))
}

fn execute_inner(out_dir: &Path, stage: Stage) -> Result<StageStatus> {
    let input_hashes = hash_inputs(&stage.inputs)?;
    let params_hash = sha256_str(&stage.params);
    if is_up_to_date(out_dir, &stage, &input_hashes, &params_hash) {
        return Ok(StageStatus { name: stage.name, state: StageState::Cached });
    }

    (stage.run)()?;

    let mut outputs = BTreeMap::new();
    for name in &stage.outputs {
        let path = out_dir.join(name);
        let hash = sha256_file(&path)
            .with_context(|| format!("stage did not produce {}", path.display()))?;
        outputs.insert(name.clone(), hash);
    }
    let manifest = Manifest {
        stage: stage.name.to_string(),
        inputs: input_hashes,
        params_hash,
        outputs,
    };
    let path = manifest_path(out_dir, stage.name);
    fs::create_dir_all(path.parent().expect("manifest dir"))?;
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(StageStatus { name: stage.name, state: StageState::Ran })
}

/// Exclusive access to an output directory for the duration of a run.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(out_dir: &Path) -> Result<RunLock> {
        fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create {}", out_dir.display()))?;
        let path = out_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is locked by another run (delete {} if stale)",
                out_dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("cannot lock {}", out_dir.display())),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
