//! Versioned, integrity-checked model store.
//!
//! Packages are kept as container bytes, either in memory or in a directory:
//!
//! ```text
//! <root>/index.txt
//! <root>/<model_id>/<version>.lcmp
//! ```
//!
//! The index holds one `key=value` record per entry and is rewritten through
//! a temporary file and a rename. Every fetch decodes the stored bytes, which
//! re-verifies both checksums.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::container::check_token;
use crate::kpi::{descriptor_divergence, DivergenceWeights, InputDescriptor};
use crate::models::{ModelDescriptor, ModelKey, ModelKind, ModelPackage};
use crate::{Error, Result};

pub const INDEX_FILE: &str = "index.txt";
pub const PACKAGE_EXT: &str = "lcmp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryStatus {
    Available,
    Active,
    Retired,
}

impl fmt::Display for EntryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryStatus::Available => "available",
            EntryStatus::Active => "active",
            EntryStatus::Retired => "retired",
        })
    }
}

impl FromStr for EntryStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "available" => Ok(EntryStatus::Available),
            "active" => Ok(EntryStatus::Active),
            "retired" => Ok(EntryStatus::Retired),
            other => Err(Error::Format(format!("unknown entry status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub key: ModelKey,
    pub kind: ModelKind,
    pub functionality_tag: String,
    pub status: EntryStatus,
    pub stored_at_slot: u64,
    /// Descriptor read when the entry was stored or loaded; `None` if the
    /// stored bytes could not be decoded when the registry was opened.
    pub descriptor: Option<ModelDescriptor>,
}

#[derive(Debug)]
enum Backend {
    Memory(BTreeMap<ModelKey, Vec<u8>>),
    Dir(PathBuf),
}

#[derive(Debug)]
pub struct Registry {
    backend: Backend,
    entries: BTreeMap<ModelKey, RegistryEntry>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// True iff both descriptors carry the same associated ID.
pub fn verify_pairing(encoder: &ModelDescriptor, decoder: &ModelDescriptor) -> Result<bool> {
    match (&encoder.associated_id, &decoder.associated_id) {
        (Some(e), Some(d)) => Ok(e == d || decoder.source_ids.iter().any(|s| s == e)),
        _ => Err(Error::Pairing("both sides must carry an associated ID".into())),
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Registry { backend: Backend::Memory(BTreeMap::new()), entries: BTreeMap::new() }
    }

    /// Opens (creating if needed) a directory-backed registry.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let mut reg = Registry { backend: Backend::Dir(root.clone()), entries: BTreeMap::new() };
        let index = root.join(INDEX_FILE);
        if !index.exists() {
            return Ok(reg);
        }
        let text = fs::read_to_string(&index)?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut entry = parse_index_line(line).map_err(|e| Error::Format(format!("{}:{}: {e}", index.display(), n + 1)))?;
            entry.descriptor = reg.read_bytes(&entry.key).ok().and_then(|b| ModelPackage::from_bytes(&b).ok()).map(|p| p.descriptor);
            reg.entries.insert(entry.key.clone(), entry);
        }
        Ok(reg)
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Dir(p) => Some(p),
            Backend::Memory(_) => None,
        }
    }

    pub fn package_path(&self, key: &ModelKey) -> Option<PathBuf> {
        self.root().map(|r| r.join(&key.model_id).join(format!("{}.{PACKAGE_EXT}", key.version)))
    }

    fn read_bytes(&self, key: &ModelKey) -> Result<Vec<u8>> {
        match &self.backend {
            Backend::Memory(m) => m.get(key).cloned().ok_or_else(|| Error::NotFound(key.to_string())),
            Backend::Dir(_) => {
                let path = self.package_path(key).expect("dir backend");
                fs::read(&path).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => Error::NotFound(format!("{key} ({})", path.display())),
                    _ => Error::Io(e),
                })
            }
        }
    }

    fn persist_index(&self) -> Result<()> {
        let Backend::Dir(root) = &self.backend else { return Ok(()) };
        let mut out = String::from("# lcm registry index v1\n");
        for e in self.entries.values() {
            out.push_str(&format!(
                "model_id={} version={} kind={} tag={} status={} stored_at_slot={}\n",
                e.key.model_id, e.key.version, e.kind, e.functionality_tag, e.status, e.stored_at_slot
            ));
        }
        write_atomic(&root.join(INDEX_FILE), out.as_bytes())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn store(&mut self, package: &ModelPackage, stored_at_slot: u64) -> Result<ModelKey> {
        package.verify()?;
        let d = &package.descriptor;
        check_token(&d.model_id, "model_id")?;
        check_token(&d.functionality_tag, "functionality_tag")?;
        let key = package.key();
        if self.entries.contains_key(&key) {
            return Err(Error::Duplicate(key.to_string()));
        }
        let bytes = package.to_bytes();
        match &mut self.backend {
            Backend::Memory(m) => {
                m.insert(key.clone(), bytes);
            }
            Backend::Dir(root) => {
                let dir = root.join(&key.model_id);
                fs::create_dir_all(&dir)?;
                write_atomic(&dir.join(format!("{}.{PACKAGE_EXT}", key.version)), &bytes)?;
            }
        }
        self.entries.insert(
            key.clone(),
            RegistryEntry {
                key: key.clone(),
                kind: package.kind,
                functionality_tag: d.functionality_tag.clone(),
                status: EntryStatus::Available,
                stored_at_slot,
                descriptor: Some(d.clone()),
            },
        );
        self.persist_index()?;
        Ok(key)
    }

    fn load(&self, key: &ModelKey) -> Result<ModelPackage> {
        let bytes = self.read_bytes(key)?;
        let pkg = ModelPackage::from_bytes(&bytes).map_err(|e| match e {
            Error::Integrity(m) => Error::Integrity(format!("{key}: {m}")),
            Error::Format(m) => Error::Integrity(format!("{key}: {m}")),
            other => other,
        })?;
        if pkg.key() != *key {
            return Err(Error::Integrity(format!("{key}: file holds {}", pkg.key())));
        }
        Ok(pkg)
    }

    pub fn entry(&self, key: &ModelKey) -> Option<&RegistryEntry> {
        self.entries.get(key)
    }

    /// With `version = None`, the highest non-retired version.
    pub fn fetch_by_id(&self, model_id: &str, version: Option<u32>) -> Result<ModelPackage> {
        let key = match version {
            Some(v) => ModelKey::new(model_id, v),
            None => self
                .entries
                .values()
                .filter(|e| e.key.model_id == model_id && e.status != EntryStatus::Retired)
                .map(|e| e.key.clone())
                .max()
                .ok_or_else(|| Error::NotFound(model_id.to_string()))?,
        };
        if !self.entries.contains_key(&key) {
            return Err(Error::NotFound(key.to_string()));
        }
        self.load(&key)
    }

    /// Highest-version non-retired package with the tag; ties go to the
    /// lowest model ID.
    pub fn fetch_by_functionality(&self, tag: &str) -> Result<ModelPackage> {
        let key = self
            .entries
            .values()
            .filter(|e| e.functionality_tag == tag && e.status != EntryStatus::Retired)
            .min_by(|a, b| b.key.version.cmp(&a.key.version).then(a.key.model_id.cmp(&b.key.model_id)))
            .map(|e| e.key.clone())
            .ok_or_else(|| Error::NotFound(format!("functionality {tag:?}")))?;
        self.load(&key)
    }

    /// Nearest stored input descriptor among non-retired entries of `kind`
    /// accepted by `filter`. Ties go to the newest version, then the lowest
    /// model ID.
    pub fn nearest_by_descriptor(
        &self,
        query: &InputDescriptor,
        kind: ModelKind,
        weights: &DivergenceWeights,
        filter: impl Fn(&RegistryEntry) -> bool,
    ) -> Result<Option<(ModelKey, f64)>> {
        let mut best: Option<(ModelKey, f64)> = None;
        for e in self.entries.values() {
            if e.kind != kind || e.status == EntryStatus::Retired || !filter(e) {
                continue;
            }
            let Some(stored) = e.descriptor.as_ref().and_then(|d| d.input_descriptor.as_ref()) else { continue };
            let Ok(div) = descriptor_divergence(query, stored, weights) else { continue };
            let better = match &best {
                None => true,
                Some((k, b)) => {
                    div < *b || (div == *b && (e.key.version > k.version || (e.key.version == k.version && e.key.model_id < k.model_id)))
                }
            };
            if better {
                best = Some((e.key.clone(), div));
            }
        }
        Ok(best)
    }

    pub fn fetch_by_descriptor(
        &self,
        query: &InputDescriptor,
        kind: ModelKind,
        max_divergence: f64,
        weights: &DivergenceWeights,
    ) -> Result<Option<(ModelPackage, f64)>> {
        match self.nearest_by_descriptor(query, kind, weights, |_| true)? {
            Some((key, div)) if div <= max_divergence => Ok(Some((self.load(&key)?, div))),
            _ => Ok(None),
        }
    }

    /// Greatest non-retired stored version below `current`.
    pub fn previous_version(&self, model_id: &str, current: u32) -> Option<u32> {
        self.entries
            .values()
            .filter(|e| e.key.model_id == model_id && e.key.version < current && e.status != EntryStatus::Retired)
            .map(|e| e.key.version)
            .max()
    }

    pub fn active(&self, tag: &str) -> Option<&RegistryEntry> {
        self.entries.values().find(|e| e.functionality_tag == tag && e.status == EntryStatus::Active)
    }

    /// Verifies and activates `key`, demoting any other active entry with the
    /// same functionality tag. Returns the verified package.
    pub fn activate(&mut self, key: &ModelKey) -> Result<ModelPackage> {
        let entry = self.entries.get(key).ok_or_else(|| Error::NotFound(key.to_string()))?;
        if entry.status == EntryStatus::Retired {
            return Err(Error::invalid(format!("{key} is retired")));
        }
        let pkg = self.load(key)?;
        let tag = entry.functionality_tag.clone();
        for e in self.entries.values_mut() {
            if e.functionality_tag == tag && e.status == EntryStatus::Active {
                e.status = EntryStatus::Available;
            }
        }
        self.entries.get_mut(key).expect("checked").status = EntryStatus::Active;
        self.persist_index()?;
        Ok(pkg)
    }

    pub fn deactivate(&mut self, key: &ModelKey) -> Result<()> {
        let e = self.entries.get_mut(key).ok_or_else(|| Error::NotFound(key.to_string()))?;
        if e.status == EntryStatus::Active {
            e.status = EntryStatus::Available;
        }
        self.persist_index()
    }

    pub fn retire(&mut self, key: &ModelKey) -> Result<()> {
        let e = self.entries.get_mut(key).ok_or_else(|| Error::NotFound(key.to_string()))?;
        e.status = EntryStatus::Retired;
        self.persist_index()
    }

    /// Deletes retired entries and their files; returns the removed keys.
    pub fn gc(&mut self) -> Result<Vec<ModelKey>> {
        let removed: Vec<ModelKey> =
            self.entries.values().filter(|e| e.status == EntryStatus::Retired).map(|e| e.key.clone()).collect();
        for key in &removed {
            match &mut self.backend {
                Backend::Memory(m) => {
                    m.remove(key);
                }
                Backend::Dir(_) => {
                    let path = self.package_path(key).expect("dir backend");
                    if path.exists() {
                        fs::remove_file(&path)?;
                    }
                    if let Some(dir) = path.parent() {
                        if fs::read_dir(dir)?.next().is_none() {
                            fs::remove_dir(dir)?;
                        }
                    }
                }
            }
            self.entries.remove(key);
        }
        self.persist_index()?;
        Ok(removed)
    }

    pub fn list(&self) -> Vec<&RegistryEntry> {
        self.entries.values().collect()
    }

    /// Re-verifies every stored package.
    pub fn verify_all(&self) -> Vec<(ModelKey, Result<()>)> {
        self.entries.keys().map(|k| (k.clone(), self.load(k).map(|_| ()))).collect()
    }

    /// Largest nearest-neighbour divergence over the probes: how far a query
    /// can be from every stored model of `kind`. `None` if no model of the
    /// kind carries an input descriptor.
    pub fn coverage_gap(&self, probes: &[InputDescriptor], kind: ModelKind, weights: &DivergenceWeights) -> Result<Option<f64>> {
        let mut worst: Option<f64> = None;
        for p in probes {
            match self.nearest_by_descriptor(p, kind, weights, |_| true)? {
                Some((_, d)) => worst = Some(worst.map_or(d, |w: f64| w.max(d))),
                None => return Ok(None),
            }
        }
        Ok(worst)
    }
}

fn parse_index_line(line: &str) -> Result<RegistryEntry> {
    let mut fields = BTreeMap::new();
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Format(format!("bad field {tok:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Format(format!("missing field {k:?}")));
    let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::Format(format!("bad number in {k:?}"))) };
    Ok(RegistryEntry {
        key: ModelKey::new(get("model_id")?, num("version")? as u32),
        kind: get("kind")?.parse()?,
        functionality_tag: get("tag")?.to_string(),
        status: get("status")?.parse()?,
        stored_at_slot: num("stored_at_slot")?,
        descriptor: None,
    })
}
