//! File-backed store with four tables: `Metamodel`, `Method`,
//! `MethodInstance` and `SupportiveTechniques`.
//!
//! Layout of a store directory:
//!
//! ```text
//! manifest.toml                 store-format version, current metamodel
//! metamodel.toml                [[metamodel]] rows
//! method.toml                   [[method]] rows
//! method_instance.toml          [[instance]] rows
//! supportive_techniques.toml    [[binding]] rows (M1 and M0 technique bindings)
//! store.lock                    advisory lock file
//! ```
//!
//! Every write takes an exclusive lock on `store.lock`, stages the changed
//! tables as `*.tmp`, records them in a `commit` journal and only then renames
//! them into place. A store opened after a crash either completes the
//! journaled renames or discards the staged files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{parse_document, write_document, CatalogDocument};
use crate::conformance::{check_conformance, has_errors, ValidationIssue};
use crate::error::CatalogError;
use crate::metamodel::{
    FragmentInclusion, FragmentKind, Metamodel, MethodFragment, MethodInstance, MethodModel, MigrationType,
    SequenceEdge, TechniqueBinding, Waiver,
};

pub const STORE_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.toml";
const LOCK: &str = "store.lock";
const JOURNAL: &str = "commit";

/// The store files that hold records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TableFile {
    Manifest,
    Metamodel,
    Method,
    MethodInstance,
    SupportiveTechniques,
}

impl TableFile {
    pub const ALL: [TableFile; 5] = [
        TableFile::Manifest,
        TableFile::Metamodel,
        TableFile::Method,
        TableFile::MethodInstance,
        TableFile::SupportiveTechniques,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TableFile::Manifest => MANIFEST,
            TableFile::Metamodel => "metamodel.toml",
            TableFile::Method => "method.toml",
            TableFile::MethodInstance => "method_instance.toml",
            TableFile::SupportiveTechniques => "supportive_techniques.toml",
        }
    }

    fn from_file_name(name: &str) -> Option<TableFile> {
        TableFile::ALL.into_iter().find(|t| t.file_name() == name)
    }
}

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("no {table} record `{id}`")]
    NotFound { table: &'static str, id: String },
    #[error("integrity error: {message}")]
    Integrity {
        message: String,
        issues: Vec<ValidationIssue>,
    },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("corrupt store file {file}: {source}")]
    Corrupt { file: &'static str, source: CatalogError },
    #[error("storage error at {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl RepositoryError {
    pub fn code(&self) -> &'static str {
        match self {
            RepositoryError::NotFound { .. } => "NOT_FOUND",
            RepositoryError::Integrity { .. } => "INTEGRITY_ERROR",
            RepositoryError::Conflict(_) => "CONFLICT",
            RepositoryError::Corrupt { .. } => "CORRUPT_STORE",
            RepositoryError::Io { .. } => "STORAGE_ERROR",
        }
    }

    fn integrity(message: impl Into<String>) -> Self {
        RepositoryError::Integrity {
            message: message.into(),
            issues: Vec::new(),
        }
    }
}

type Result<T> = std::result::Result<T, RepositoryError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RepositoryError + '_ {
    move |source| RepositoryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Manifest {
    store_format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    current_metamodel: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct MetamodelRow {
    version: u32,
    document: CatalogDocument,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetamodelTable {
    #[serde(default)]
    metamodel: Vec<MetamodelRow>,
}

/// A method row. Technique bindings live in the SupportiveTechniques table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct MethodRow {
    id: String,
    name: String,
    #[serde(default)]
    description: String,
    metamodel_version: u32,
    migration_types: BTreeSet<MigrationType>,
    phases: Vec<String>,
    #[serde(default)]
    members: Vec<FragmentInclusion>,
    #[serde(default)]
    user_fragments: Vec<MethodFragment>,
    #[serde(default)]
    relationships: Vec<crate::metamodel::FragmentRelationship>,
    #[serde(default)]
    sequences: Vec<SequenceEdge>,
    #[serde(default)]
    waivers: Vec<Waiver>,
}

impl MethodRow {
    fn from_model(m: &MethodModel) -> MethodRow {
        MethodRow {
            id: m.id.clone(),
            name: m.name.clone(),
            description: m.description.clone(),
            metamodel_version: m.metamodel_version,
            migration_types: m.migration_types.clone(),
            phases: m.phases.clone(),
            members: m.members.clone(),
            user_fragments: m.user_fragments.clone(),
            relationships: m.relationships.clone(),
            sequences: m.sequences.clone(),
            waivers: m.waivers.clone(),
        }
    }

    fn into_model(self, technique_bindings: BTreeSet<TechniqueBinding>) -> MethodModel {
        MethodModel {
            id: self.id,
            name: self.name,
            description: self.description,
            migration_types: self.migration_types,
            phases: self.phases,
            members: self.members,
            user_fragments: self.user_fragments,
            relationships: self.relationships,
            sequences: self.sequences,
            technique_bindings,
            metamodel_version: self.metamodel_version,
            waivers: self.waivers,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodTable {
    #[serde(default)]
    method: Vec<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct InstanceRow {
    id: String,
    method: String,
    #[serde(default)]
    enactment_notes: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceTable {
    #[serde(default)]
    instance: Vec<InstanceRow>,
}

/// Modeling level a binding belongs to: a method (M1) or an enactment (M0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BindingLevel {
    M1,
    M0,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct BindingRow {
    level: BindingLevel,
    owner: String,
    task: String,
    technique: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BindingTable {
    #[serde(default)]
    binding: Vec<BindingRow>,
}

impl BindingTable {
    fn of(&self, level: BindingLevel, owner: &str) -> BTreeSet<TechniqueBinding> {
        self.binding
            .iter()
            .filter(|b| b.level == level && b.owner == owner)
            .map(|b| TechniqueBinding::new(b.task.clone(), b.technique.clone()))
            .collect()
    }

    fn replace(&mut self, level: BindingLevel, owner: &str, bindings: &BTreeSet<TechniqueBinding>) {
        self.binding.retain(|b| !(b.level == level && b.owner == owner));
        self.binding.extend(bindings.iter().map(|b| BindingRow {
            level,
            owner: owner.to_string(),
            task: b.task.clone(),
            technique: b.technique.clone(),
        }));
        self.binding.sort();
    }
}

/// Summary row returned by [`Store::list_methods`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MethodIndex {
    pub id: String,
    pub name: String,
    pub migration_types: BTreeSet<MigrationType>,
    pub fragment_count: usize,
}

fn parse_table<T: DeserializeOwned>(file: TableFile, bytes: &[u8]) -> Result<T> {
    parse_document(bytes).map_err(|source| RepositoryError::Corrupt {
        file: file.file_name(),
        source,
    })
}

/// Parses one store file and checks its record grammar. Used by `verify`
/// and by the fuzz targets.
pub fn check_table(file: TableFile, bytes: &[u8]) -> std::result::Result<(), CatalogError> {
    fn go<T: DeserializeOwned>(bytes: &[u8]) -> std::result::Result<(), CatalogError> {
        parse_document::<T>(bytes).map(drop)
    }
    match file {
        TableFile::Manifest => go::<Manifest>(bytes),
        TableFile::Metamodel => {
            let table: MetamodelTable = parse_document(bytes)?;
            for row in table.metamodel {
                row.document.into_metamodel()?;
            }
            Ok(())
        }
        TableFile::Method => go::<MethodTable>(bytes),
        TableFile::MethodInstance => go::<InstanceTable>(bytes),
        TableFile::SupportiveTechniques => go::<BindingTable>(bytes),
    }
}

/// In-memory image of the four tables.
#[derive(Debug, Clone, Default)]
struct Tables {
    manifest: Option<Manifest>,
    metamodels: MetamodelTable,
    methods: MethodTable,
    instances: InstanceTable,
    bindings: BindingTable,
}

/// Parsed table plus the exact bytes it came from.
type Slot<T> = Option<(Option<Vec<u8>>, T)>;

/// Parsed tables keyed by file content, so unchanged files are not parsed
/// again. Content equality keeps this correct across processes.
#[derive(Debug, Default)]
struct TableCache {
    manifest: Slot<Option<Manifest>>,
    metamodels: Slot<MetamodelTable>,
    methods: Slot<MethodTable>,
    instances: Slot<InstanceTable>,
    bindings: Slot<BindingTable>,
}

fn cached<T: Clone>(
    slot: &mut Slot<T>,
    bytes: Option<Vec<u8>>,
    parse: impl FnOnce(&[u8]) -> Result<T>,
    absent: T,
) -> Result<T> {
    if let Some((seen, value)) = slot {
        if *seen == bytes {
            return Ok(value.clone());
        }
    }
    let value = match &bytes {
        Some(b) => parse(b)?,
        None => absent,
    };
    *slot = Some((bytes, value.clone()));
    Ok(value)
}

/// A handle on a store directory. Cheap to clone; holds no open files
/// between calls.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    cache: Arc<Mutex<TableCache>>,
}

struct Guard {
    _file: File,
}

impl Store {
    /// Opens a store directory, creating an empty store when it does not
    /// exist, and recovers any interrupted commit.
    pub fn open(root: impl AsRef<Path>) -> Result<Store> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let store = Store {
            root,
            cache: Arc::default(),
        };
        let _guard = store.lock(true)?;
        store.recover()?;
        let manifest_path = store.path(MANIFEST);
        if manifest_path.exists() {
            let manifest: Manifest = parse_table(
                TableFile::Manifest,
                &fs::read(&manifest_path).map_err(io_err(&manifest_path))?,
            )?;
            if manifest.store_format != STORE_FORMAT_VERSION {
                return Err(RepositoryError::Corrupt {
                    file: MANIFEST,
                    source: CatalogError::Parse(format!(
                        "unsupported store-format {} (expected {STORE_FORMAT_VERSION})",
                        manifest.store_format
                    )),
                });
            }
        } else {
            let tables = Tables {
                manifest: Some(Manifest {
                    store_format: STORE_FORMAT_VERSION,
                    current_metamodel: None,
                }),
                ..Tables::default()
            };
            store.commit(&tables, &TableFile::ALL)?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn lock(&self, exclusive: bool) -> Result<Guard> {
        let path = self.path(LOCK);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        if exclusive {
            file.lock().map_err(io_err(&path))?;
        } else {
            file.lock_shared().map_err(io_err(&path))?;
        }
        Ok(Guard { _file: file })
    }

    /// Completes a journaled commit or discards staged files. Caller holds
    /// the exclusive lock.
    fn recover(&self) -> Result<()> {
        let journal = self.path(JOURNAL);
        if journal.exists() {
            let listed = fs::read_to_string(&journal).map_err(io_err(&journal))?;
            for name in listed.lines().filter(|l| TableFile::from_file_name(l).is_some()) {
                let staged = self.path(&format!("{name}.tmp"));
                if staged.exists() {
                    fs::rename(&staged, self.path(name)).map_err(io_err(&staged))?;
                }
            }
            fs::remove_file(&journal).map_err(io_err(&journal))?;
        }
        for t in TableFile::ALL {
            let staged = self.path(&format!("{}.tmp", t.file_name()));
            if staged.exists() {
                fs::remove_file(&staged).map_err(io_err(&staged))?;
            }
        }
        let journal_tmp = self.path(&format!("{JOURNAL}.tmp"));
        if journal_tmp.exists() {
            fs::remove_file(&journal_tmp).map_err(io_err(&journal_tmp))?;
        }
        Ok(())
    }

    fn read_file(&self, file: TableFile) -> Result<Option<Vec<u8>>> {
        let path = self.path(file.file_name());
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn load(&self) -> Result<Tables> {
        fn table<T: DeserializeOwned + Default + Clone>(
            store: &Store,
            slot: &mut Slot<T>,
            file: TableFile,
        ) -> Result<T> {
            cached(slot, store.read_file(file)?, |b| parse_table(file, b), T::default())
        }
        let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        let manifest_bytes = self.read_file(TableFile::Manifest)?;
        Ok(Tables {
            manifest: cached(
                &mut cache.manifest,
                manifest_bytes,
                |b| parse_table(TableFile::Manifest, b).map(Some),
                None,
            )?,
            metamodels: table(self, &mut cache.metamodels, TableFile::Metamodel)?,
            methods: table(self, &mut cache.methods, TableFile::Method)?,
            instances: table(self, &mut cache.instances, TableFile::MethodInstance)?,
            bindings: table(self, &mut cache.bindings, TableFile::SupportiveTechniques)?,
        })
    }

    /// Records freshly committed bytes so the next load skips parsing them.
    fn remember(&self, tables: &Tables, file: TableFile, bytes: Vec<u8>) {
        let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        let bytes = Some(bytes);
        match file {
            TableFile::Manifest => cache.manifest = Some((bytes, tables.manifest.clone())),
            TableFile::Metamodel => cache.metamodels = Some((bytes, tables.metamodels.clone())),
            TableFile::Method => cache.methods = Some((bytes, tables.methods.clone())),
            TableFile::MethodInstance => cache.instances = Some((bytes, tables.instances.clone())),
            TableFile::SupportiveTechniques => cache.bindings = Some((bytes, tables.bindings.clone())),
        }
    }

    fn encode(tables: &Tables, file: TableFile) -> Vec<u8> {
        match file {
            TableFile::Manifest => write_document(tables.manifest.as_ref().expect("manifest present")),
            TableFile::Metamodel => write_document(&tables.metamodels),
            TableFile::Method => write_document(&tables.methods),
            TableFile::MethodInstance => write_document(&tables.instances),
            TableFile::SupportiveTechniques => write_document(&tables.bindings),
        }
    }

    fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
        let mut f = File::create(path).map_err(io_err(path))?;
        f.write_all(bytes).map_err(io_err(path))?;
        f.sync_all().map_err(io_err(path))
    }

    /// Stages `files`, journals them, then renames them into place.
    fn commit(&self, tables: &Tables, files: &[TableFile]) -> Result<()> {
        let mut written = Vec::with_capacity(files.len());
        for &file in files {
            let staged = self.path(&format!("{}.tmp", file.file_name()));
            let bytes = Self::encode(tables, file);
            Self::write_synced(&staged, &bytes)?;
            written.push((file, bytes));
        }
        let listing: String = files.iter().map(|f| format!("{}\n", f.file_name())).collect();
        let journal_tmp = self.path(&format!("{JOURNAL}.tmp"));
        Self::write_synced(&journal_tmp, listing.as_bytes())?;
        let journal = self.path(JOURNAL);
        fs::rename(&journal_tmp, &journal).map_err(io_err(&journal))?;
        self.recover()?;
        for (file, bytes) in written {
            self.remember(tables, file, bytes);
        }
        Ok(())
    }

    /// Runs `f` on a consistent snapshot under a shared lock.
    fn read<T>(&self, f: impl FnOnce(&Tables) -> Result<T>) -> Result<T> {
        let guard = self.lock(false)?;
        if self.path(JOURNAL).exists() {
            drop(guard);
            let _exclusive = self.lock(true)?;
            self.recover()?;
            return f(&self.load()?);
        }
        f(&self.load()?)
    }

    /// Runs `f` under the exclusive lock and commits the tables it reports
    /// as changed.
    fn write<T>(&self, f: impl FnOnce(&mut Tables) -> Result<(T, Vec<TableFile>)>) -> Result<T> {
        let _guard = self.lock(true)?;
        self.recover()?;
        let mut tables = self.load()?;
        if tables.manifest.is_none() {
            tables.manifest = Some(Manifest {
                store_format: STORE_FORMAT_VERSION,
                current_metamodel: None,
            });
        }
        let (value, changed) = f(&mut tables)?;
        if !changed.is_empty() {
            self.commit(&tables, &changed)?;
        }
        Ok(value)
    }

    fn metamodel_in(tables: &Tables, version: u32) -> Result<Metamodel> {
        let row = tables
            .metamodels
            .metamodel
            .iter()
            .find(|r| r.version == version)
            .ok_or_else(|| RepositoryError::NotFound {
                table: "Metamodel",
                id: version.to_string(),
            })?;
        row.document
            .clone()
            .into_metamodel()
            .map_err(|source| RepositoryError::Corrupt {
                file: TableFile::Metamodel.file_name(),
                source,
            })
    }

    /// Stores a metamodel version and optionally marks it current.
    /// Re-installing an identical version is a no-op; a different metamodel
    /// under an existing version number is a conflict.
    pub fn install_metamodel(&self, metamodel: &Metamodel, make_current: bool) -> Result<()> {
        let document = CatalogDocument::from_metamodel(metamodel);
        let version = metamodel.version();
        self.write(|t| {
            let mut changed = Vec::new();
            match t.metamodels.metamodel.iter().find(|r| r.version == version) {
                Some(row) if row.document == document => {}
                Some(_) => {
                    return Err(RepositoryError::Conflict(format!(
                        "metamodel version {version} is already installed with different content"
                    )))
                }
                None => {
                    t.metamodels.metamodel.push(MetamodelRow { version, document });
                    t.metamodels.metamodel.sort_by_key(|r| r.version);
                    changed.push(TableFile::Metamodel);
                }
            }
            let manifest = t.manifest.as_mut().expect("manifest present");
            if make_current && manifest.current_metamodel != Some(version) {
                manifest.current_metamodel = Some(version);
                changed.push(TableFile::Manifest);
            }
            Ok(((), changed))
        })
    }

    /// The metamodel marked current, if any.
    pub fn current_metamodel(&self) -> Result<Option<Metamodel>> {
        self.read(|t| match t.manifest.as_ref().and_then(|m| m.current_metamodel) {
            Some(v) => Self::metamodel_in(t, v).map(Some),
            None => Ok(None),
        })
    }

    pub fn metamodel(&self, version: u32) -> Result<Metamodel> {
        self.read(|t| Self::metamodel_in(t, version))
    }

    pub fn metamodel_versions(&self) -> Result<Vec<u32>> {
        self.read(|t| Ok(t.metamodels.metamodel.iter().map(|r| r.version).collect()))
    }

    /// Saves or overwrites a method. Methods with Error-severity
    /// conformance issues are rejected.
    pub fn save_method(&self, method: &MethodModel) -> Result<String> {
        self.write(|t| {
            let mm = match Self::metamodel_in(t, method.metamodel_version) {
                Err(RepositoryError::NotFound { .. }) => {
                    return Err(RepositoryError::integrity(format!(
                        "method `{}` references metamodel version {}, which is not installed",
                        method.id, method.metamodel_version
                    )))
                }
                other => other?,
            };
            let issues = check_conformance(method, &mm);
            if has_errors(&issues) {
                return Err(RepositoryError::Integrity {
                    message: format!("method `{}` does not conform to the metamodel", method.id),
                    issues,
                });
            }
            if method.id.trim().is_empty() {
                return Err(RepositoryError::integrity("method id must not be empty"));
            }
            let row = MethodRow::from_model(method);
            let rows = &mut t.methods.method;
            match rows.binary_search_by(|r| r.id.as_str().cmp(&method.id)) {
                Ok(i) => rows[i] = row,
                Err(i) => rows.insert(i, row),
            }
            t.bindings
                .replace(BindingLevel::M1, &method.id, &method.technique_bindings);
            // Enactments keep only choices that still name bindable tasks.
            let members: BTreeSet<&str> = method.members.iter().map(|m| m.fragment.as_str()).collect();
            let instance_ids: Vec<String> = t
                .instances
                .instance
                .iter()
                .filter(|i| i.method == method.id)
                .map(|i| i.id.clone())
                .collect();
            for iid in instance_ids {
                let kept: BTreeSet<TechniqueBinding> = t
                    .bindings
                    .of(BindingLevel::M0, &iid)
                    .into_iter()
                    .filter(|b| members.contains(b.task.as_str()))
                    .collect();
                t.bindings.replace(BindingLevel::M0, &iid, &kept);
            }
            Ok((
                method.id.clone(),
                vec![TableFile::Method, TableFile::SupportiveTechniques],
            ))
        })
    }

    fn method_in(t: &Tables, id: &str) -> Result<MethodModel> {
        t.methods
            .method
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.clone().into_model(t.bindings.of(BindingLevel::M1, id)))
            .ok_or_else(|| RepositoryError::NotFound {
                table: "Method",
                id: id.to_string(),
            })
    }

    pub fn load_method(&self, id: &str) -> Result<MethodModel> {
        self.read(|t| Self::method_in(t, id))
    }

    pub fn contains_method(&self, id: &str) -> Result<bool> {
        self.read(|t| Ok(t.methods.method.iter().any(|r| r.id == id)))
    }

    /// `base` if no stored method uses it, else the first free `base-N`
    /// for N >= 2.
    pub fn free_method_id(&self, base: &str) -> Result<String> {
        self.read(|t| {
            let taken = |id: &str| t.methods.method.iter().any(|r| r.id == id);
            if !taken(base) {
                return Ok(base.to_string());
            }
            Ok((2..)
                .map(|n| format!("{base}-{n}"))
                .find(|c| !taken(c))
                .expect("unbounded id search"))
        })
    }

    /// Index records sorted by id.
    pub fn list_methods(&self) -> Result<Vec<MethodIndex>> {
        self.read(|t| {
            Ok(t.methods
                .method
                .iter()
                .map(|r| MethodIndex {
                    id: r.id.clone(),
                    name: r.name.clone(),
                    migration_types: r.migration_types.clone(),
                    fragment_count: r.members.len(),
                })
                .collect())
        })
    }

    /// Saves or overwrites an enactment record. The method must exist and
    /// every chosen technique must be a catalog technique bound to a task
    /// of that method.
    pub fn save_instance(&self, instance: &MethodInstance) -> Result<String> {
        self.write(|t| {
            if instance.id.trim().is_empty() {
                return Err(RepositoryError::integrity("instance id must not be empty"));
            }
            let method = match Self::method_in(t, &instance.method) {
                Err(RepositoryError::NotFound { .. }) => {
                    return Err(RepositoryError::integrity(format!(
                        "instance `{}` references unknown method `{}`",
                        instance.id, instance.method
                    )))
                }
                other => other?,
            };
            let mm = Self::metamodel_in(t, method.metamodel_version)?;
            for b in &instance.chosen_techniques {
                let task_ok = method
                    .resolve(&mm, &b.task)
                    .is_some_and(|f| f.kind == FragmentKind::Task && method.is_member(&f.id));
                if !task_ok {
                    return Err(RepositoryError::integrity(format!(
                        "`{}` is not a task of method `{}`",
                        b.task, method.id
                    )));
                }
                if mm.fragment(&b.technique).map(|f| f.kind) != Some(FragmentKind::Technique) {
                    return Err(RepositoryError::integrity(format!(
                        "`{}` is not a catalog technique",
                        b.technique
                    )));
                }
            }
            let row = InstanceRow {
                id: instance.id.clone(),
                method: instance.method.clone(),
                enactment_notes: instance.enactment_notes.clone(),
            };
            let rows = &mut t.instances.instance;
            match rows.binary_search_by(|r| r.id.as_str().cmp(&instance.id)) {
                Ok(i) => rows[i] = row,
                Err(i) => rows.insert(i, row),
            }
            t.bindings
                .replace(BindingLevel::M0, &instance.id, &instance.chosen_techniques);
            Ok((
                instance.id.clone(),
                vec![TableFile::MethodInstance, TableFile::SupportiveTechniques],
            ))
        })
    }

    pub fn load_instance(&self, id: &str) -> Result<MethodInstance> {
        self.read(|t| {
            t.instances
                .instance
                .iter()
                .find(|r| r.id == id)
                .map(|r| MethodInstance {
                    id: r.id.clone(),
                    method: r.method.clone(),
                    chosen_techniques: t.bindings.of(BindingLevel::M0, id),
                    enactment_notes: r.enactment_notes.clone(),
                })
                .ok_or_else(|| RepositoryError::NotFound {
                    table: "MethodInstance",
                    id: id.to_string(),
                })
        })
    }

    /// Instance ids, optionally restricted to one method, sorted.
    pub fn list_instances(&self, method: Option<&str>) -> Result<Vec<String>> {
        self.read(|t| {
            Ok(t.instances
                .instance
                .iter()
                .filter(|r| method.is_none_or(|m| r.method == m))
                .map(|r| r.id.clone())
                .collect())
        })
    }

    /// Checks cross-table referential integrity. Returns one line per
    /// problem; an empty list means the store is consistent.
    pub fn verify(&self) -> Result<Vec<String>> {
        self.read(|t| {
            let mut problems = Vec::new();
            let versions: BTreeSet<u32> = t.metamodels.metamodel.iter().map(|r| r.version).collect();
            if let Some(current) = t.manifest.as_ref().and_then(|m| m.current_metamodel) {
                if !versions.contains(&current) {
                    problems.push(format!("current metamodel {current} is not installed"));
                }
            }
            let mut metamodels = BTreeMap::new();
            for v in &versions {
                match Self::metamodel_in(t, *v) {
                    Ok(mm) => {
                        metamodels.insert(*v, mm);
                    }
                    Err(e) => problems.push(e.to_string()),
                }
            }
            let mut methods = BTreeMap::new();
            for r in &t.methods.method {
                let m = r.clone().into_model(t.bindings.of(BindingLevel::M1, &r.id));
                match metamodels.get(&r.metamodel_version) {
                    None => problems.push(format!(
                        "method `{}` references missing metamodel {}",
                        r.id, r.metamodel_version
                    )),
                    Some(mm) => {
                        for issue in check_conformance(&m, mm)
                            .into_iter()
                            .filter(|i| i.severity == crate::conformance::Severity::Error)
                        {
                            problems.push(format!("method `{}`: {issue}", r.id));
                        }
                    }
                }
                methods.insert(r.id.clone(), m);
            }
            let instances: BTreeSet<&str> = t.instances.instance.iter().map(|r| r.id.as_str()).collect();
            for r in &t.instances.instance {
                if !methods.contains_key(&r.method) {
                    problems.push(format!("instance `{}` references missing method `{}`", r.id, r.method));
                }
            }
            for b in &t.bindings.binding {
                let owner_ok = match b.level {
                    BindingLevel::M1 => methods.contains_key(&b.owner),
                    BindingLevel::M0 => instances.contains(b.owner.as_str()),
                };
                if !owner_ok {
                    problems.push(format!(
                        "{:?} binding {} -> {} has unknown owner `{}`",
                        b.level, b.task, b.technique, b.owner
                    ));
                }
            }
            Ok(problems)
        })
    }
}
