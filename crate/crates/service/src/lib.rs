//! HTTP/JSON facade over the workbench core.
//!
//! Response bodies use the core's serde representations (kebab-case keys)
//! and are described by `schemas/api.schema.json`. Errors always carry
//! `{code, message, subjects}`.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use methodwb_core::conformance::tally;
use methodwb_core::engine::{check_text, explain_inclusion, list_rules, TypeApplicability};
use methodwb_core::interchange::{export_xml, import_xml_with, ImportOptions, InterchangeError};
use methodwb_core::metamodel::{
    relationship_set, FragmentKind, FragmentRelationship, Metamodel, MethodFragment, MethodInstance, MethodModel,
    MigrationType, RelationshipType, TechniqueBinding,
};
use methodwb_core::repository::{MethodIndex, RepositoryError, Store};
use methodwb_core::tailoring::{apply, TailoringAction, TailoringError};
use methodwb_core::{
    check_conformance, instantiate, shipped_catalog, InstantiationError, Severity, TransformationRule, UnknownFragment,
    ValidationIssue,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use tower_http::services::ServeDir;

/// Error body returned with every non-2xx status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub subjects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, subjects: Vec<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                subjects,
                line: None,
                column: None,
            },
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, Vec::new())
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message, Vec::new())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn issue_subjects(issues: &[ValidationIssue]) -> Vec<String> {
    let set: BTreeSet<String> = issues
        .iter()
        .filter(|i| i.severity == Severity::Error)
        .flat_map(|i| i.subjects.iter().cloned())
        .collect();
    set.into_iter().collect()
}

impl From<RepositoryError> for ApiError {
    fn from(e: RepositoryError) -> Self {
        let code = e.code();
        match e {
            RepositoryError::NotFound { ref id, .. } => {
                let id = id.clone();
                ApiError::new(StatusCode::NOT_FOUND, code, e.to_string(), vec![id])
            }
            RepositoryError::Integrity { ref issues, .. } => {
                let subjects = issue_subjects(issues);
                ApiError::new(StatusCode::CONFLICT, code, e.to_string(), subjects)
            }
            RepositoryError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, code, e.to_string(), vec![]),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code, e.to_string(), vec![]),
        }
    }
}

impl From<InstantiationError> for ApiError {
    fn from(e: InstantiationError) -> Self {
        let subjects = match &e {
            InstantiationError::UnknownPhase(p) => vec![p.clone()],
            _ => Vec::new(),
        };
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string(), subjects)
    }
}

impl From<TailoringError> for ApiError {
    fn from(e: TailoringError) -> Self {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            e.kind.code(),
            e.message.clone(),
            vec![e.subject.clone()],
        )
    }
}

impl From<InterchangeError> for ApiError {
    fn from(e: InterchangeError) -> Self {
        let code = e.code();
        match e {
            InterchangeError::Parse { line, column, .. } => {
                let mut err = ApiError::bad_request(code, e.to_string());
                err.body.line = Some(line);
                err.body.column = Some(column);
                err
            }
            InterchangeError::VersionMismatch { .. } => ApiError::bad_request(code, e.to_string()),
            InterchangeError::Integrity(ref issues) => {
                let subjects = issue_subjects(issues);
                ApiError::new(StatusCode::CONFLICT, code, e.to_string(), subjects)
            }
        }
    }
}

impl From<UnknownFragment> for ApiError {
    fn from(e: UnknownFragment) -> Self {
        let id = e.0.clone();
        ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", e.to_string(), vec![id])
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Shared {
    store: Store,
    metamodel: Metamodel,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

/// Handle shared by all request handlers.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Wraps a store, installing the shipped catalog as the current
    /// metamodel when the store has none.
    pub fn new(store: Store) -> Result<AppState, RepositoryError> {
        let metamodel = match store.current_metamodel()? {
            Some(mm) => mm,
            None => {
                let mm = shipped_catalog();
                store.install_metamodel(&mm, true)?;
                mm
            }
        };
        Ok(AppState(Arc::new(Shared {
            store,
            metamodel,
            locks: Mutex::new(HashMap::new()),
        })))
    }

    fn lock_for(&self, key: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.0.locks.lock().expect("lock table poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    /// Runs blocking store work off the async executor.
    async fn blocking<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Shared) -> ApiResult<T> + Send + 'static,
    ) -> ApiResult<T> {
        let shared = self.0.clone();
        tokio::task::spawn_blocking(move || f(&shared))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }
}

impl Shared {
    fn metamodel_for(&self, method: &MethodModel) -> ApiResult<Metamodel> {
        if method.metamodel_version == self.metamodel.version() {
            Ok(self.metamodel.clone())
        } else {
            Ok(self.store.metamodel(method.metamodel_version)?)
        }
    }

    fn envelope(&self, method: MethodModel) -> ApiResult<MethodEnvelope> {
        let mm = self.metamodel_for(&method)?;
        let issues = check_conformance(&method, &mm);
        Ok(MethodEnvelope { method, issues })
    }
}

fn parse_json<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("PARSE_ERROR", format!("invalid JSON body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodEnvelope {
    pub method: MethodModel,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: usize,
    pub warnings: usize,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FragmentDetail {
    pub fragment: MethodFragment,
    pub applicability: Vec<TypeApplicability>,
    pub relationships: Vec<FragmentRelationship>,
    /// Techniques that operationalize this task.
    pub techniques: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateMethod {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(alias = "migration-types")]
    migration_types: BTreeSet<MigrationType>,
    phases: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateInstance {
    #[serde(default)]
    id: Option<String>,
    #[serde(default, alias = "chosen-techniques")]
    chosen_techniques: BTreeSet<TechniqueBinding>,
    #[serde(default, alias = "enactment-notes")]
    enactment_notes: String,
}

#[derive(Debug, Deserialize)]
struct FragmentQuery {
    kind: Option<String>,
    phase: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RelationshipQuery {
    #[serde(rename = "type")]
    rel_type: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ImportQuery {
    #[serde(default)]
    force: bool,
    #[serde(default)]
    replace: bool,
}

async fn list_fragments(
    State(state): State<AppState>,
    Query(q): Query<FragmentQuery>,
) -> ApiResult<Json<Vec<MethodFragment>>> {
    let mm = &state.0.metamodel;
    let kind = match q.kind.as_deref() {
        Some(k) => Some(
            k.parse::<FragmentKind>()
                .map_err(|e| ApiError::bad_request("INVALID_QUERY", e.to_string()))?,
        ),
        None => None,
    };
    let phase = match q.phase.as_deref() {
        Some(p) => Some(mm.resolve_phase(p).map(|f| f.id.clone()).ok_or_else(|| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "UNKNOWN_PHASE",
                format!("unknown phase `{p}`"),
                vec![p.to_string()],
            )
        })?),
        None => None,
    };
    let mut out: Vec<MethodFragment> = mm
        .fragments()
        .iter()
        .filter(|f| kind.is_none_or(|k| f.kind == k))
        .filter(|f| phase.as_ref().is_none_or(|p| f.phase.as_ref() == Some(p)))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Json(out))
}

async fn fragment_detail(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<FragmentDetail>> {
    let mm = &state.0.metamodel;
    let fragment = mm.fragment(&id).cloned().ok_or_else(|| UnknownFragment(id.clone()))?;
    let applicability = explain_inclusion(mm, &MigrationType::ALL.into(), &id)?.per_type;
    let relationships = mm
        .relationships()
        .iter()
        .filter(|r| r.source == id || r.target == id)
        .cloned()
        .collect();
    let techniques = mm.techniques_for(&id).into_iter().map(String::from).collect();
    Ok(Json(FragmentDetail {
        fragment,
        applicability,
        relationships,
        techniques,
    }))
}

async fn list_relationships(
    State(state): State<AppState>,
    Query(q): Query<RelationshipQuery>,
) -> ApiResult<Json<Vec<FragmentRelationship>>> {
    let rel_type = match q.rel_type.as_deref() {
        Some(t) => Some(
            t.parse::<RelationshipType>()
                .map_err(|e| ApiError::bad_request("INVALID_QUERY", e.to_string()))?,
        ),
        None => None,
    };
    Ok(Json(relationship_set(&state.0.metamodel, rel_type)))
}

async fn rules(State(state): State<AppState>) -> Json<Vec<TransformationRule>> {
    Json(list_rules(&state.0.metamodel).into_iter().cloned().collect())
}

async fn create_method(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<MethodEnvelope>)> {
    let req: CreateMethod = parse_json(&body)?;
    let guard = state.lock_for("");
    let _held = guard.lock().await;
    let env = state
        .blocking(move |s| {
            let mut method = instantiate(&s.metamodel, &req.name, &req.migration_types, &req.phases)?;
            check_text("description", &req.description)?;
            method.description = req.description;
            method.id = s.store.free_method_id(&method.id)?;
            s.store.save_method(&method)?;
            s.envelope(method)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(env)))
}

async fn list_methods(State(state): State<AppState>) -> ApiResult<Json<Vec<MethodIndex>>> {
    Ok(Json(state.blocking(|s| Ok(s.store.list_methods()?)).await?))
}

async fn get_method(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<MethodEnvelope>> {
    let env = state
        .blocking(move |s| {
            let m = s.store.load_method(&id)?;
            s.envelope(m)
        })
        .await?;
    Ok(Json(env))
}

async fn post_action(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<MethodEnvelope>> {
    let action: TailoringAction = parse_json(&body)?;
    let guard = state.lock_for(&id);
    let _held = guard.lock().await;
    let env = state
        .blocking(move |s| {
            let method = s.store.load_method(&id)?;
            let mm = s.metamodel_for(&method)?;
            let result = apply(&method, &mm, &action)?;
            s.store.save_method(&result.method)?;
            Ok(MethodEnvelope {
                method: result.method,
                issues: result.issues,
            })
        })
        .await?;
    Ok(Json(env))
}

async fn validate(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ValidationReport>> {
    let env = state
        .blocking(move |s| {
            let m = s.store.load_method(&id)?;
            s.envelope(m)
        })
        .await?;
    let (errors, warnings) = tally(&env.issues);
    Ok(Json(ValidationReport {
        errors,
        warnings,
        issues: env.issues,
    }))
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = state
        .blocking(move |s| {
            let m = s.store.load_method(&id)?;
            let mm = s.metamodel_for(&m)?;
            Ok(export_xml(&m, &mm)?)
        })
        .await?;
    Ok(([(header::CONTENT_TYPE, "application/xml; charset=utf-8")], bytes).into_response())
}

async fn import(
    State(state): State<AppState>,
    Query(q): Query<ImportQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<MethodEnvelope>)> {
    let method = import_xml_with(&body, &state.0.metamodel, ImportOptions { force_version: q.force })?;
    let guard = state.lock_for(&method.id);
    let _held = guard.lock().await;
    let env = state
        .blocking(move |s| {
            if !q.replace && s.store.contains_method(&method.id)? {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "CONFLICT",
                    format!("method `{}` already exists; pass replace=true to overwrite", method.id),
                    vec![method.id.clone()],
                ));
            }
            s.store.save_method(&method)?;
            s.envelope(method)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(env)))
}

async fn create_instance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<MethodInstance>)> {
    let req: CreateInstance = parse_json(&body)?;
    let guard = state.lock_for(&id);
    let _held = guard.lock().await;
    let instance = state
        .blocking(move |s| {
            s.store.load_method(&id)?;
            let existing = s.store.list_instances(None)?;
            let instance_id = match req.id {
                Some(i) => i,
                None => (1..)
                    .map(|n| format!("{id}-run-{n}"))
                    .find(|c| !existing.contains(c))
                    .expect("unbounded id search"),
            };
            let instance = MethodInstance {
                id: instance_id,
                method: id,
                chosen_techniques: req.chosen_techniques,
                enactment_notes: req.enactment_notes,
            };
            s.store.save_instance(&instance)?;
            Ok(instance)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(instance)))
}

async fn list_instances(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<MethodInstance>>> {
    let list = state
        .blocking(move |s| {
            s.store.load_method(&id)?;
            s.store
                .list_instances(Some(&id))?
                .iter()
                .map(|i| Ok(s.store.load_instance(i)?))
                .collect()
        })
        .await?;
    Ok(Json(list))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such route", Vec::new())
}

/// Builds the router. When `static_dir` is given, its files are served
/// under `/app`.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/catalog/fragments", get(list_fragments))
        .route("/catalog/fragments/{id}", get(fragment_detail))
        .route("/catalog/relationships", get(list_relationships))
        .route("/catalog/rules", get(rules))
        .route("/methods", get(list_methods).post(create_method))
        .route("/methods/import", post(import))
        .route("/methods/{id}", get(get_method))
        .route("/methods/{id}/actions", post(post_action))
        .route("/methods/{id}/validate", post(validate))
        .route("/methods/{id}/export.xml", get(export))
        .route("/methods/{id}/instances", get(list_instances).post(create_instance))
        .fallback(not_found)
        .with_state(state);
    if let Some(dir) = static_dir {
        app = app.nest_service("/app", ServeDir::new(dir));
    }
    app
}

/// Serves `router` on `addr` until the process is stopped.
pub fn serve_blocking(addr: SocketAddr, router: Router) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router).await
    })
}
