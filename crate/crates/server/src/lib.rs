//! Websocket front end for the lockstep simulation.
//!
//! `GET /ws` upgrades to a websocket carrying the JSON messages defined in
//! [`shoal_core::sim_server::api`]: `frame` payloads at the stream rate,
//! and one reply per inbound command. `GET /health` answers `ok`.

mod runner;

use std::future::Future;
use std::net::SocketAddr;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use shoal_core::sim_server::{parse_command, SimError, Simulation};
use thiserror::Error;
use tokio::sync::broadcast::error::RecvError;

pub use runner::{RunOptions, RunSummary, SimClient, SimRunner, COMMAND_QUEUE, FRAME_BUFFER};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind API address {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("API service failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Parses `:8080`, `8080` or `host:port`; a bare port binds all interfaces.
pub fn parse_api_addr(text: &str) -> Result<SocketAddr, String> {
    let t = text.trim();
    let full = if let Some(port) = t.strip_prefix(':') {
        format!("0.0.0.0:{port}")
    } else if t.chars().all(|c| c.is_ascii_digit()) {
        format!("0.0.0.0:{t}")
    } else {
        t.to_string()
    };
    full.parse().map_err(|e| format!("bad API address {text:?}: {e}"))
}

pub fn router(client: SimClient) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(client)
}

async fn upgrade(ws: WebSocketUpgrade, State(client): State<SimClient>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, client))
}

async fn session(mut socket: WebSocket, client: SimClient) {
    let mut frames = client.subscribe();
    loop {
        tokio::select! {
            inbound = socket.recv() => {
                let text = match inbound {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Binary(b))) => String::from_utf8_lossy(&b).into_owned(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match parse_command(&text) {
                    Ok(cmd) => client.send(cmd).await,
                    Err(e) => e,
                };
                if socket.send(Message::Text(reply.to_json().into())).await.is_err() {
                    break;
                }
            }
            frame = frames.recv() => match frame {
                Ok(json) => {
                    if socket.send(Message::Text(json.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(n)) => log::debug!("client lagged; skipped {n} frames"),
                Err(RecvError::Closed) => break,
            },
        }
    }
}

/// Serves the API on an already-bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    client: SimClient,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(client)).with_graceful_shutdown(shutdown).await
}

/// Runs `sim` on its tick thread with the API at `addr` (if any) until the
/// duration elapses, the tick loop faults, or Ctrl-C.
pub fn run(sim: Simulation, opts: RunOptions, addr: Option<SocketAddr>) -> Result<RunSummary, ServerError> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = match addr {
        Some(a) => Some(
            rt.block_on(tokio::net::TcpListener::bind(a))
                .map_err(|source| ServerError::Bind { addr: a.to_string(), source })?,
        ),
        None => None,
    };
    let runner = SimRunner::spawn(sim, opts);
    if let Some(l) = &listener {
        log::info!("streaming API on ws://{}/ws", l.local_addr()?);
    }
    rt.block_on(async {
        let finished = runner.finished();
        let stop = async {
            tokio::select! {
                _ = finished => {}
                _ = tokio::signal::ctrl_c() => log::info!("interrupted"),
            }
        };
        match listener {
            Some(l) => serve_on(l, runner.client(), stop).await,
            None => {
                stop.await;
                Ok(())
            }
        }
    })?;
    Ok(runner.join()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn api_addresses() {
        assert_eq!(parse_api_addr(":8080").unwrap(), "0.0.0.0:8080".parse().unwrap());
        assert_eq!(parse_api_addr("9000").unwrap().port(), 9000);
        assert_eq!(parse_api_addr("127.0.0.1:1").unwrap(), "127.0.0.1:1".parse().unwrap());
        assert!(parse_api_addr("nope").is_err());
    }
}
