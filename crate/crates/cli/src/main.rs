mod render;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use methodwb_core::conformance::{has_errors, tally};
use methodwb_core::engine::{check_text, explain_inclusion, list_rules};
use methodwb_core::interchange::{export_records, import_records, import_xml_with, ImportOptions, InterchangeError};
use methodwb_core::metamodel::{
    parse_migration_types, relationship_set, FragmentKind, Metamodel, MethodInstance, MethodModel, MigrationType,
    RelationshipType, TechniqueBinding,
};
use methodwb_core::repository::{RepositoryError, Store};
use methodwb_core::tailoring::{parse_action_script, replay, ReplayError, TailoringError};
use methodwb_core::{
    check_conformance, export_xml, instantiate, shipped_catalog, CatalogError, InstantiationError, UnknownFragment,
    ValidationIssue,
};
use serde::Serialize;

/// Exit status for command-line misuse.
const EXIT_USAGE: u8 = 64;
/// Exit status when a method has conformance errors.
const EXIT_NONCONFORMING: u8 = 2;

#[derive(Parser)]
#[command(
    name = "methodwb",
    version,
    about = "Compose, tailor and validate cloud-migration methods"
)]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "METHODWB_STORE", default_value = ".methodwb")]
    store: PathBuf,
    /// Output style.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the method-fragment catalog.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Create, tailor, validate and exchange methods.
    #[command(subcommand)]
    Method(MethodCmd),
    /// Record and list enactments of stored methods.
    #[command(subcommand)]
    Instance(InstanceCmd),
    /// Inspect the transformation rules.
    #[command(subcommand)]
    Rules(RulesCmd),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory served under /app.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// List fragments, sorted by id.
    List {
        #[arg(long)]
        kind: Option<FragmentKind>,
        /// Phase id or name.
        #[arg(long)]
        phase: Option<String>,
    },
    /// Show one fragment with its applicability and relationships.
    Show { id: String },
    /// List catalog relationships.
    Relationships {
        #[arg(long = "type")]
        rel_type: Option<RelationshipType>,
    },
}

#[derive(Subcommand)]
enum MethodCmd {
    /// Instantiate a method from migration types and phases.
    Create {
        #[arg(long, default_value = "New method")]
        name: String,
        #[arg(long, default_value = "")]
        description: String,
        /// Comma-separated migration types, e.g. II,V.
        #[arg(long, value_parser = parse_types)]
        types: BTreeSet<MigrationType>,
        /// Comma-separated phase ids or names, or `all`.
        #[arg(long, value_delimiter = ',', required = true)]
        phases: Vec<String>,
        /// Write the method as XML instead of saving it to the store.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a tailoring action script.
    Tailor {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        script: PathBuf,
        /// Where to write a file-based result; defaults to the input file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report conformance issues. Exits 2 when any is an error.
    Validate {
        #[command(flatten)]
        target: Target,
    },
    /// Print a method.
    Show {
        #[command(flatten)]
        target: Target,
    },
    /// List stored methods.
    List,
    /// Write a stored method as XML (`-` for standard output).
    Export {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        xml: PathBuf,
    },
    /// Import a method document (XML, or records) into the store.
    Import {
        file: PathBuf,
        /// Accept a document written against another metamodel version.
        #[arg(long)]
        force: bool,
        /// Overwrite a stored method with the same id.
        #[arg(long)]
        replace: bool,
    },
}

#[derive(Args)]
struct Target {
    /// Stored method id, or a path to a method document.
    method: String,
}

#[derive(Subcommand)]
enum InstanceCmd {
    /// Record an enactment with chosen techniques.
    Create {
        method: String,
        #[arg(long)]
        id: Option<String>,
        /// TASK=TECHNIQUE, repeatable.
        #[arg(long = "bind", value_parser = parse_binding)]
        bindings: Vec<TechniqueBinding>,
        #[arg(long, default_value = "")]
        notes: String,
    },
    /// List enactments, optionally of one method.
    List { method: Option<String> },
}

#[derive(Subcommand)]
enum RulesCmd {
    /// List rules in id order.
    List,
    /// Explain whether and why a fragment is included.
    Explain {
        fragment: String,
        #[arg(long, value_parser = parse_types)]
        types: BTreeSet<MigrationType>,
    },
}

fn parse_types(s: &str) -> Result<BTreeSet<MigrationType>, String> {
    let types = parse_migration_types(s).map_err(|e| e.to_string())?;
    if types.is_empty() {
        return Err("at least one migration type is required".into());
    }
    Ok(types)
}

fn parse_binding(s: &str) -> Result<TechniqueBinding, String> {
    let (task, technique) = s.split_once('=').ok_or("expected TASK=TECHNIQUE")?;
    Ok(TechniqueBinding::new(task.trim(), technique.trim()))
}

/// An error whose exit status and code are fixed by the command.
#[derive(Debug)]
struct Failure {
    code: &'static str,
    exit: u8,
    message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

struct App {
    store_dir: PathBuf,
    format: Format,
    out: String,
}

impl App {
    fn print(&mut self, s: impl AsRef<str>) {
        self.out.push_str(s.as_ref());
    }

    fn emit<T: Serialize>(&mut self, records: &T, table: impl FnOnce() -> String) {
        let text = match self.format {
            Format::Records => render::records(records),
            Format::Table => table(),
        };
        self.print(text);
    }

    fn open_store(&self) -> Result<Store> {
        let store = Store::open(&self.store_dir)?;
        if store.current_metamodel()?.is_none() {
            store.install_metamodel(&shipped_catalog(), true)?;
        }
        Ok(store)
    }

    /// The store's current metamodel, or the shipped catalog when no store
    /// exists yet. Read-only commands never create a store.
    fn metamodel(&self) -> Result<Metamodel> {
        if self.store_dir.join("manifest.toml").is_file() {
            if let Some(mm) = Store::open(&self.store_dir)?.current_metamodel()? {
                return Ok(mm);
            }
        }
        Ok(shipped_catalog())
    }

    fn metamodel_for(&self, method: &MethodModel) -> Result<Metamodel> {
        let current = self.metamodel()?;
        if current.version() == method.metamodel_version {
            return Ok(current);
        }
        Ok(Store::open(&self.store_dir)?.metamodel(method.metamodel_version)?)
    }

    fn load(&self, target: &Target, force: bool) -> Result<Loaded> {
        let path = Path::new(&target.method);
        if path.is_file() {
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let method = parse_method_document(&bytes, &self.metamodel()?, force)?;
            Ok(Loaded::File(path.to_path_buf(), method))
        } else {
            let store = Store::open(&self.store_dir)?;
            let method = store.load_method(&target.method)?;
            Ok(Loaded::Stored(store, method))
        }
    }

    fn run(&mut self, command: Command) -> Result<u8> {
        match command {
            Command::Catalog(c) => self.catalog(c),
            Command::Method(c) => self.method(c),
            Command::Instance(c) => self.instance(c),
            Command::Rules(c) => self.rules(c),
            Command::Serve { addr, static_dir } => {
                let state = methodwb_service::AppState::new(self.open_store()?)?;
                let router = methodwb_service::router(state, static_dir);
                methodwb_service::serve_blocking(addr, router).context("service stopped")?;
                Ok(0)
            }
        }
    }

    fn catalog(&mut self, cmd: CatalogCmd) -> Result<u8> {
        let mm = self.metamodel()?;
        match cmd {
            CatalogCmd::List { kind, phase } => {
                let phase = match phase {
                    Some(p) => Some(
                        mm.resolve_phase(&p)
                            .map(|f| f.id.clone())
                            .ok_or_else(|| failure("UNKNOWN_PHASE", 1, format!("unknown phase `{p}`")))?,
                    ),
                    None => None,
                };
                let mut list: Vec<_> = mm
                    .fragments()
                    .iter()
                    .filter(|f| kind.is_none_or(|k| f.kind == k))
                    .filter(|f| phase.is_none() || f.phase == phase)
                    .collect();
                list.sort_by(|a, b| a.id.cmp(&b.id));
                #[derive(Serialize)]
                struct Doc<'a> {
                    fragment: &'a [&'a methodwb_core::MethodFragment],
                }
                self.emit(&Doc { fragment: &list }, || render::fragment_rows(&list));
            }
            CatalogCmd::Show { id } => {
                let fragment = mm.fragment(&id).ok_or_else(|| UnknownFragment(id.clone()))?;
                let per_type = explain_inclusion(&mm, &MigrationType::ALL.into(), &id)?.per_type;
                let rels: Vec<_> = mm
                    .relationships()
                    .iter()
                    .filter(|r| r.source == id || r.target == id)
                    .cloned()
                    .collect();
                let techniques = mm.techniques_for(&id);
                #[derive(Serialize)]
                #[serde(rename_all = "kebab-case")]
                struct Doc<'a> {
                    fragment: &'a methodwb_core::MethodFragment,
                    techniques: &'a [&'a str],
                    applicability: &'a [methodwb_core::engine::TypeApplicability],
                    relationship: &'a [methodwb_core::FragmentRelationship],
                }
                let doc = Doc {
                    fragment,
                    techniques: &techniques,
                    applicability: &per_type,
                    relationship: &rels,
                };
                self.emit(&doc, || {
                    let mut out = format!(
                        "id: {}\nname: {}\nkind: {}\n",
                        fragment.id,
                        fragment.name,
                        fragment.kind.as_str()
                    );
                    if let Some(p) = &fragment.phase {
                        out.push_str(&format!("phase: {p}\n"));
                    }
                    out.push_str(&format!("definition: {}\n\n", fragment.definition));
                    out.push_str(&render::applicability_rows(&per_type));
                    if !rels.is_empty() {
                        out.push('\n');
                        out.push_str(&render::relationship_rows(&rels));
                    }
                    if !techniques.is_empty() {
                        out.push_str(&format!("\ntechniques: {}\n", techniques.join(", ")));
                    }
                    out
                });
            }
            CatalogCmd::Relationships { rel_type } => {
                let rels = relationship_set(&mm, rel_type);
                #[derive(Serialize)]
                struct Doc<'a> {
                    relationship: &'a [methodwb_core::FragmentRelationship],
                }
                self.emit(&Doc { relationship: &rels }, || render::relationship_rows(&rels));
            }
        }
        Ok(0)
    }

    fn show_method(&mut self, m: &MethodModel, mm: &Metamodel, issues: &[ValidationIssue]) {
        match self.format {
            Format::Records => self.print(String::from_utf8(export_records(m)).expect("UTF-8")),
            Format::Table => {
                self.print(render::method(m, mm));
                self.print("\n");
                self.print(render::issues(issues));
            }
        }
    }

    fn method(&mut self, cmd: MethodCmd) -> Result<u8> {
        match cmd {
            MethodCmd::Create {
                name,
                description,
                types,
                phases,
                out,
            } => {
                let (mm, store) = match &out {
                    Some(_) => (self.metamodel()?, None),
                    None => {
                        let store = self.open_store()?;
                        (store.current_metamodel()?.expect("installed"), Some(store))
                    }
                };
                let mut m = instantiate(&mm, &name, &types, &phases)?;
                check_text("description", &description)?;
                m.description = description;
                match (store, out) {
                    (Some(store), _) => {
                        m.id = store.free_method_id(&m.id)?;
                        store.save_method(&m)?;
                    }
                    (None, Some(path)) => write_output(&path, &export_xml(&m, &mm)?)?,
                    (None, None) => unreachable!(),
                }
                let issues = check_conformance(&m, &mm);
                self.show_method(&m, &mm, &issues);
                Ok(0)
            }
            MethodCmd::Tailor { target, script, out } => {
                let loaded = self.load(&target, false)?;
                let mm = self.metamodel_for(loaded.method())?;
                let bytes = fs::read(&script).with_context(|| format!("reading {}", script.display()))?;
                let actions = parse_action_script(&bytes)?;
                let result = replay(loaded.method(), &mm, &actions)?;
                match loaded {
                    Loaded::Stored(store, _) => {
                        store.save_method(&result.method)?;
                    }
                    Loaded::File(path, _) => {
                        let xml = export_xml(&result.method, &mm)?;
                        write_output(out.as_deref().unwrap_or(&path), &xml)?;
                    }
                }
                self.show_method(&result.method, &mm, &result.issues);
                Ok(0)
            }
            MethodCmd::Validate { target } => {
                let issues = match self.load(&target, false) {
                    Ok(loaded) => {
                        let mm = self.metamodel_for(loaded.method())?;
                        check_conformance(loaded.method(), &mm)
                    }
                    Err(e) => match e.downcast::<InterchangeError>() {
                        Ok(InterchangeError::Integrity(issues)) => issues,
                        Ok(other) => return Err(other.into()),
                        Err(e) => return Err(e),
                    },
                };
                #[derive(Serialize)]
                struct Doc<'a> {
                    errors: usize,
                    warnings: usize,
                    issue: &'a [ValidationIssue],
                }
                let (errors, warnings) = tally(&issues);
                self.emit(
                    &Doc {
                        errors,
                        warnings,
                        issue: &issues,
                    },
                    || render::issues(&issues),
                );
                Ok(if has_errors(&issues) { EXIT_NONCONFORMING } else { 0 })
            }
            MethodCmd::Show { target } => {
                let loaded = self.load(&target, false)?;
                let mm = self.metamodel_for(loaded.method())?;
                let issues = check_conformance(loaded.method(), &mm);
                self.show_method(loaded.method(), &mm, &issues);
                Ok(0)
            }
            MethodCmd::List => {
                let list = Store::open(&self.store_dir)?.list_methods()?;
                #[derive(Serialize)]
                struct Doc<'a> {
                    method: &'a [methodwb_core::repository::MethodIndex],
                }
                self.emit(&Doc { method: &list }, || {
                    let rows: Vec<Vec<String>> = list
                        .iter()
                        .map(|m| {
                            vec![
                                m.id.clone(),
                                methodwb_core::metamodel::format_migration_types(&m.migration_types),
                                m.fragment_count.to_string(),
                                m.name.clone(),
                            ]
                        })
                        .collect();
                    render::table(&["ID", "TYPES", "FRAGMENTS", "NAME"], &rows)
                });
                Ok(0)
            }
            MethodCmd::Export { target, xml } => {
                let loaded = self.load(&target, false)?;
                let mm = self.metamodel_for(loaded.method())?;
                write_output(&xml, &export_xml(loaded.method(), &mm)?)?;
                Ok(0)
            }
            MethodCmd::Import { file, force, replace } => {
                let store = self.open_store()?;
                let mm = store.current_metamodel()?.expect("installed");
                let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
                let m = parse_method_document(&bytes, &mm, force)?;
                if !replace && store.contains_method(&m.id)? {
                    bail!(failure(
                        "CONFLICT",
                        1,
                        format!("method `{}` already exists; pass --replace to overwrite", m.id)
                    ));
                }
                store.save_method(&m)?;
                let mm = self.metamodel_for(&m)?;
                let issues = check_conformance(&m, &mm);
                self.show_method(&m, &mm, &issues);
                Ok(0)
            }
        }
    }

    fn instance(&mut self, cmd: InstanceCmd) -> Result<u8> {
        let store = Store::open(&self.store_dir)?;
        match cmd {
            InstanceCmd::Create {
                method,
                id,
                bindings,
                notes,
            } => {
                store.load_method(&method)?;
                let existing = store.list_instances(None)?;
                let id = id.unwrap_or_else(|| {
                    (1..)
                        .map(|n| format!("{method}-run-{n}"))
                        .find(|c| !existing.contains(c))
                        .expect("unbounded id search")
                });
                let instance = MethodInstance {
                    id,
                    method,
                    chosen_techniques: bindings.into_iter().collect(),
                    enactment_notes: notes,
                };
                store.save_instance(&instance)?;
                self.emit(&instance, || render::instance(&instance));
            }
            InstanceCmd::List { method } => {
                let instances = store
                    .list_instances(method.as_deref())?
                    .iter()
                    .map(|i| store.load_instance(i))
                    .collect::<Result<Vec<_>, _>>()?;
                #[derive(Serialize)]
                struct Doc<'a> {
                    instance: &'a [MethodInstance],
                }
                self.emit(&Doc { instance: &instances }, || {
                    instances.iter().map(render::instance).collect()
                });
            }
        }
        Ok(0)
    }

    fn rules(&mut self, cmd: RulesCmd) -> Result<u8> {
        let mm = self.metamodel()?;
        match cmd {
            RulesCmd::List => {
                let rules = list_rules(&mm);
                #[derive(Serialize)]
                struct Doc<'a> {
                    rule: &'a [&'a methodwb_core::TransformationRule],
                }
                self.emit(&Doc { rule: &rules }, || render::rule_rows(&rules));
            }
            RulesCmd::Explain { fragment, types } => {
                let e = explain_inclusion(&mm, &types, &fragment)?;
                self.emit(&e, || render::explanation(&e));
            }
        }
        Ok(0)
    }
}

enum Loaded {
    Stored(Store, MethodModel),
    File(PathBuf, MethodModel),
}

impl Loaded {
    fn method(&self) -> &MethodModel {
        match self {
            Loaded::Stored(_, m) | Loaded::File(_, m) => m,
        }
    }
}

/// XML when the document starts with `<`, structured-text records otherwise.
fn parse_method_document(bytes: &[u8], mm: &Metamodel, force: bool) -> Result<MethodModel> {
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'<') || bytes.starts_with(b"\xEF\xBB\xBF") {
        return Ok(import_xml_with(bytes, mm, ImportOptions { force_version: force })?);
    }
    let mut m = import_records(bytes)?;
    m.normalize(mm);
    let issues = check_conformance(&m, mm);
    if has_errors(&issues) {
        return Err(InterchangeError::Integrity(issues).into());
    }
    Ok(m)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.as_os_str() == "-" {
        std::io::stdout().write_all(bytes)?;
        return Ok(());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn failure(code: &'static str, exit: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        exit,
        message: message.into(),
    }
}

/// Code and exit status for an error, taken from the first typed error in
/// its chain.
fn classify(err: &anyhow::Error) -> (&'static str, u8, String, Vec<ValidationIssue>) {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return (f.code, f.exit, f.message.clone(), Vec::new());
        }
        if let Some(e) = cause.downcast_ref::<RepositoryError>() {
            return match e {
                RepositoryError::Integrity { issues, .. } => {
                    (e.code(), EXIT_NONCONFORMING, e.to_string(), issues.clone())
                }
                _ => (e.code(), 1, e.to_string(), Vec::new()),
            };
        }
        if let Some(e) = cause.downcast_ref::<InterchangeError>() {
            return match e {
                InterchangeError::Integrity(issues) => (e.code(), EXIT_NONCONFORMING, e.to_string(), issues.clone()),
                _ => (e.code(), 1, e.to_string(), Vec::new()),
            };
        }
        if let Some(e) = cause.downcast_ref::<ReplayError>() {
            let msg = format!("action {} ({}): {}", e.index + 1, e.error.subject, e.error.message);
            return (e.error.kind.code(), 1, msg, Vec::new());
        }
        if let Some(e) = cause.downcast_ref::<TailoringError>() {
            return (e.kind.code(), 1, e.message.clone(), Vec::new());
        }
        if let Some(e) = cause.downcast_ref::<InstantiationError>() {
            return (e.code(), 1, e.to_string(), Vec::new());
        }
        if let Some(e) = cause.downcast_ref::<CatalogError>() {
            return (e.code(), 1, e.to_string(), Vec::new());
        }
        if let Some(e) = cause.downcast_ref::<UnknownFragment>() {
            return ("NOT_FOUND", 1, e.to_string(), Vec::new());
        }
    }
    ("ERROR", 1, format!("{err:#}"), Vec::new())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text);
            eprint!("error[USAGE]: {text}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut app = App {
        store_dir: cli.store,
        format: cli.format,
        out: String::new(),
    };
    let result = app.run(cli.command);
    let _ = std::io::stdout().write_all(app.out.as_bytes());
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let (code, exit, message, issues) = classify(&err);
            let mut stderr = std::io::stderr().lock();
            let _ = writeln!(stderr, "error[{code}]: {}", message.replace('\n', " "));
            for i in &issues {
                let _ = writeln!(
                    stderr,
                    "  {} {} {}: {}",
                    i.severity.as_str(),
                    i.code.as_str(),
                    i.subjects.join(","),
                    i.message
                );
            }
            ExitCode::from(exit)
        }
    }
}
