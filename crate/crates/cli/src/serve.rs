//! Read-only HTTP service for a bundle directory.
//!
//! `GET /api/bundle` returns `bundle.json`; every other `GET` path is
//! resolved as a file under the directory. Paths that escape it are refused
//! with 403.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use percent_encoding::percent_decode_str;

use crate::args::ServeArgs;

pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug)]
struct Root(PathBuf);

/// Routes for the directory `dir`, which must exist.
pub fn router(dir: &Path) -> Result<Router> {
    let root = dir
        .canonicalize()
        .with_context(|| format!("bundle directory {}", dir.display()))?;
    if !root.is_dir() {
        anyhow::bail!("{} is not a directory", root.display());
    }
    Ok(Router::new()
        .route("/api/bundle", get(api_bundle))
        .fallback(get(static_file))
        .with_state(Arc::new(Root(root))))
}

async fn api_bundle(State(root): State<Arc<Root>>) -> Response {
    send(&root.0.join(BUNDLE_FILE), "application/json").await
}

async fn static_file(State(root): State<Arc<Root>>, uri: Uri) -> Response {
    let Ok(decoded) = percent_decode_str(uri.path()).decode_utf8() else {
        return StatusCode::BAD_REQUEST.into_response();
    };
    let Some(rel) = relative_path(&decoded) else {
        return StatusCode::FORBIDDEN.into_response();
    };
    let mut path = root.0.join(rel);
    if path.is_dir() {
        path.push("index.html");
    }
    // Symlinks may still point outside the root.
    match path.canonicalize() {
        Ok(real) if !real.starts_with(&root.0) => return StatusCode::FORBIDDEN.into_response(),
        Ok(_) => {}
        Err(_) => return StatusCode::NOT_FOUND.into_response(),
    }
    let mime = mime_guess::from_path(&path).first_or_octet_stream();
    send(&path, mime.as_ref()).await
}

/// The request path as a relative path with only normal components, or
/// `None` when it would leave the root.
fn relative_path(decoded: &str) -> Option<PathBuf> {
    if decoded.contains('\\') || decoded.contains('\0') {
        return None;
    }
    let mut out = PathBuf::new();
    for c in Path::new(decoded.trim_start_matches('/')).components() {
        match c {
            Component::Normal(p) => out.push(p),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(out)
}

async fn send(path: &Path, mime: &str) -> Response {
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, mime.to_string())], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND.into_response(),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

pub fn cmd_serve(a: ServeArgs) -> Result<()> {
    let app = router(&a.bundle_dir)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|_| crate::usage(format!("invalid --host/--port {}:{}", a.host, a.port)))?;
    let rt = tokio::runtime::Runtime::new().context("starting async runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        eprintln!("serving {} on http://{}", a.bundle_dir.display(), listener.local_addr()?);
        axum::serve(listener, app).await.context("server stopped")
    })
}
