//! Read-only JSON prediction endpoint over preloaded models.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use candlenet_core::experiment::config::parse_volume_flag;
use candlenet_core::experiment::{load_series, predict_for_date, Cell, Classifier, Model};
use candlenet_core::market_data::Series;
use candlenet_core::window::DatasetSpec;
use candlenet_core::{Error, Result};

use crate::commands::{load_config, parse_date, Answer};
use crate::CommonArgs;

struct Loaded {
    model: Model,
    spec: DatasetSpec,
}

pub struct AppState {
    series: BTreeMap<String, Series>,
    models: BTreeMap<(usize, usize, bool, Classifier), Loaded>,
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [("content-type", "application/json")], body).into_response()
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": msg.into() }).to_string();
    json(status, body)
}

async fn health() -> Response {
    json(StatusCode::OK, r#"{"status":"ok"}"#.to_string())
}

/// Status and message of a rejected request.
type Reject = (StatusCode, String);

fn bad(msg: impl std::fmt::Display) -> Reject {
    (StatusCode::BAD_REQUEST, msg.to_string())
}

fn param<'a>(q: &'a HashMap<String, String>, key: &str) -> std::result::Result<&'a str, Reject> {
    q.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing query parameter '{key}'")))
}

fn number(q: &HashMap<String, String>, key: &str) -> std::result::Result<usize, Reject> {
    let v = param(q, key)?;
    v.parse().map_err(|_| bad(format!("'{key}' must be a positive integer, got '{v}'")))
}

fn answer(state: &AppState, q: &HashMap<String, String>) -> std::result::Result<Answer, Reject> {
    let ticker = param(q, "ticker")?;
    let date = parse_date(param(q, "date")?).map_err(bad)?;
    let period = number(q, "period")?;
    let dim = number(q, "dim")?;
    let vol = parse_volume_flag(param(q, "vol")?).map_err(bad)?;
    let classifiers = match q.get("classifier") {
        Some(c) => vec![c.parse::<Classifier>().map_err(bad)?],
        None => vec![Classifier::Cnn, Classifier::RandomForest, Classifier::Knn],
    };
    let series =
        state.series.get(ticker).ok_or_else(|| (StatusCode::NOT_FOUND, format!("unknown ticker '{ticker}'")))?;
    let loaded = classifiers
        .iter()
        .find_map(|&c| state.models.get(&(period, dim, vol, c)))
        .ok_or_else(|| (StatusCode::NOT_FOUND, format!("no model for period {period}, dim {dim}, vol {vol}")))?;
    let p = predict_for_date(&loaded.model, series, date, &loaded.spec)
        .map_err(|e| (StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(Answer { label: p.label.as_str(), prob: p.probability, window_end: p.window_end.to_string() })
}

async fn predict(
    State(state): State<Arc<AppState>>,
    q: std::result::Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Response {
    let q = match q {
        Ok(Query(q)) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let work = tokio::task::spawn_blocking(move || match answer(&state, &q) {
        Ok(a) => json(StatusCode::OK, serde_json::to_string(&a).expect("plain struct serializes")),
        Err((status, msg)) => error(status, msg),
    });
    work.await.unwrap_or_else(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new().route("/health", get(health)).route("/predict", get(predict)).fallback(not_found).with_state(state)
}

/// Every `*.csv` in the data directory plus every grid cell with a checkpoint on disk.
fn load_state(args: &CommonArgs) -> Result<AppState> {
    let cfg = load_config(args)?;
    let mut series = BTreeMap::new();
    let entries =
        std::fs::read_dir(&cfg.data_dir).map_err(|e| Error::Data(format!("{}: {e}", cfg.data_dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let s = load_series(&path)?;
            series.insert(s.ticker().to_string(), s);
        }
    }
    let mut models = BTreeMap::new();
    for cell in &cfg.grid {
        let Cell { classifier, period, dimension, volume } = *cell;
        let path = cell.checkpoint_path(&cfg.out_dir);
        if !path.exists() {
            continue;
        }
        let spec = cell.dataset_spec(cfg.horizon)?;
        let model = Model::load(cell, &spec, &path)?;
        eprintln!("loaded {}", path.display());
        models.insert((period, dimension, volume, classifier), Loaded { model, spec });
    }
    if models.is_empty() {
        return Err(Error::Data(format!("no checkpoints for the configured grid in {}", cfg.out_dir.display())));
    }
    Ok(AppState { series, models })
}

pub fn run(args: &CommonArgs, host: &str, port: u16) -> Result<()> {
    let state = Arc::new(load_state(args)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
