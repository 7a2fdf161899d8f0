//! HTTP API over an immutable model and report.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use resflu_core::data::{preprocess, Frame, Keypoint, SkeletonSequence, KEYPOINTS};
use resflu_core::reasoning::{assess_flu, bias_risk, risk_from_rates, ImpactCosts};
use resflu_core::report::ReportDocument;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::commands::{parse_cohort_value, Model};

const BODY_LIMIT: usize = 16 * 1024 * 1024;

pub struct AppState {
    pub model: Model,
    pub report: ReportDocument,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

/// Parses a JSON body without looking at the content type.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/report", get(report))
        .route("/api/classify", post(classify))
        .route("/api/whatif", post(whatif))
        .route("/api/{*rest}", get(not_found).post(not_found))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(axum::routing::any(not_found))),
        None => api.fallback(not_found),
    }
}

async fn not_found(uri: Uri) -> ApiError {
    ApiError { status: StatusCode::NOT_FOUND, message: format!("no route for {}", uri.path()) }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn report(State(state): State<Arc<AppState>>) -> Json<ReportDocument> {
    Json(state.report.clone())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub frames: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize)]
pub struct ClassifyResponse {
    /// Block heads first, fusion last.
    pub heads: Vec<Vec<f64>>,
    pub rank1: String,
    pub classes: Vec<String>,
}

async fn classify(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ClassifyResponse>, ApiError> {
    let request: ClassifyRequest = parse_body(&body)?;
    let mut frames: Vec<Frame> = Vec::with_capacity(request.frames.len());
    for (i, f) in request.frames.iter().enumerate() {
        if f.len() != KEYPOINTS {
            return Err(ApiError::bad_request(format!("frame {i} has {} keypoints, expected {KEYPOINTS}", f.len())));
        }
        frames.push(std::array::from_fn(|k| Keypoint::new(f[k][0], f[k][1])));
    }
    let sequence = SkeletonSequence::new(frames).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let worker = state.clone();
    let prediction = tokio::task::spawn_blocking(move || {
        let features = preprocess(&sequence, worker.model.config.seq_len)?;
        Ok::<_, anyhow::Error>(worker.model.predict(&features)?)
    })
    .await
    .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() })?
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(ClassifyResponse {
        rank1: state.model.classes[prediction.rank1].clone(),
        heads: prediction.heads,
        classes: state.model.classes.clone(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WhatIfRequest {
    pub alpha: f64,
    pub beta: f64,
    pub p_cough: f64,
    pub p_sneeze: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// `attribute=value`, or absent / `baseline` for the whole test set.
    pub cohort: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct WhatIfResponse {
    pub risk: f64,
    pub p_flu_base: f64,
    pub p_flu_adjusted: f64,
    /// Baseline risk minus this risk, both under the requested costs.
    pub bias_vs_baseline: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub cohort: String,
}

pub fn whatif_response(report: &ReportDocument, request: &WhatIfRequest) -> Result<WhatIfResponse, ApiError> {
    let costs = ImpactCosts::new(request.alpha, request.beta).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let base = &report.baseline.metrics;
    let (cohort, metrics) = match request.cohort.as_deref() {
        None | Some("baseline") => ("baseline".to_string(), base),
        Some(spec) => {
            let (attr, value) = parse_cohort_value(spec).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let row = report
                .cohort(attr, &value)
                .ok_or_else(|| ApiError::bad_request(format!("report has no cohort {spec}")))?;
            let m =
                row.metrics.as_ref().ok_or_else(|| ApiError::bad_request(format!("cohort {spec} has no samples")))?;
            (format!("{attr}={value}"), m)
        }
    };
    let sensitivity = request.sensitivity.unwrap_or(metrics.sensitivity);
    let specificity = request.specificity.unwrap_or(metrics.specificity);
    let bad = |e: resflu_core::reasoning::ReasoningError| ApiError::bad_request(e.to_string());
    let risk = risk_from_rates(costs, sensitivity, specificity).map_err(bad)?.risk;
    let base_risk = risk_from_rates(costs, base.sensitivity, base.specificity).map_err(bad)?.risk;
    let flu = assess_flu(request.p_cough, request.p_sneeze, risk).map_err(bad)?;
    Ok(WhatIfResponse {
        risk,
        p_flu_base: flu.p_flu_base,
        p_flu_adjusted: flu.p_flu_adjusted,
        bias_vs_baseline: bias_risk(base_risk, risk),
        sensitivity,
        specificity,
        cohort,
    })
}

async fn whatif(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<WhatIfResponse>, ApiError> {
    let request: WhatIfRequest = parse_body(&body)?;
    Ok(Json(whatif_response(&state.report, &request)?))
}
