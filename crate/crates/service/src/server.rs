//! WebSocket front end: one reader and one writer task per client.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::JoinHandle;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use crate::session::{ClientId, Command, Outbox, Session, SessionConfig};
use crate::wire::{ErrorCode, ErrorPayload, Inbound, WIRE_VERSION};
use crate::ServiceError;

/// Environment variable that overrides the listen address.
pub const LISTEN_ENV: &str = "MAGSWARM_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8765";

/// A bound server whose session actor is already running.
pub struct Server {
    listener: TcpListener,
    commands: Sender<Command>,
    actor: Option<JoinHandle<()>>,
    next_client: Arc<AtomicU64>,
}

impl Server {
    pub async fn bind(addr: &str, config: SessionConfig) -> Result<Self, ServiceError> {
        let session = Session::new(config)?;
        let listener = TcpListener::bind(addr).await?;
        let (commands, rx) = std::sync::mpsc::channel();
        let actor = std::thread::Builder::new()
            .name("magswarm-session".into())
            .spawn(move || session.run(rx))?;
        Ok(Self {
            listener,
            commands,
            actor: Some(actor),
            next_client: Arc::new(AtomicU64::new(1)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServiceError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts clients until `shutdown` resolves, then stops the actor.
    pub async fn run_until<F: std::future::Future<Output = ()>>(mut self, shutdown: F) -> Result<(), ServiceError> {
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                accepted = self.listener.accept() => {
                    let (stream, peer) = accepted?;
                    let id = self.next_client.fetch_add(1, Ordering::Relaxed);
                    let commands = self.commands.clone();
                    tokio::spawn(async move {
                        if let Err(e) = serve_client(stream, id, commands).await {
                            tracing::warn!("client {peer}: {e}");
                        }
                    });
                }
            }
        }
        let _ = self.commands.send(Command::Shutdown);
        if let Some(actor) = self.actor.take() {
            let _ = tokio::task::spawn_blocking(move || actor.join()).await;
        }
        Ok(())
    }

    pub async fn run(self) -> Result<(), ServiceError> {
        self.run_until(std::future::pending()).await
    }
}

async fn serve_client(stream: TcpStream, client: ClientId, commands: Sender<Command>) -> Result<(), ServiceError> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let outbox = Outbox::new();
    commands
        .send(Command::Connect { client, outbox: outbox.clone() })
        .map_err(|_| ServiceError::SessionClosed)?;

    let writer_box = outbox.clone();
    let writer = tokio::spawn(async move {
        while let Some(text) = writer_box.next().await {
            if sink.send(Message::text(text.to_string())).await.is_err() {
                break;
            }
        }
        writer_box.close();
        let _ = sink.close().await;
    });

    while let Some(msg) = source.next().await {
        let text = match msg {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(Message::Binary(_)) => {
                let error = ErrorPayload::new(ErrorCode::Malformed, "binary messages are not accepted");
                let _ = commands.send(Command::Reject { client, error });
                continue;
            }
            Ok(_) => continue,
        };
        let cmd = match serde_json::from_str::<Inbound>(text.as_str()) {
            Ok(Inbound { version: Some(v), .. }) if v != WIRE_VERSION => Command::Reject {
                client,
                error: ErrorPayload::new(ErrorCode::UnsupportedVersion, format!("version {v}, server speaks {WIRE_VERSION}")),
            },
            Ok(inbound) => Command::Message { client, message: inbound.message },
            Err(e) => Command::Reject { client, error: ErrorPayload::new(ErrorCode::Malformed, e.to_string()) },
        };
        if commands.send(cmd).is_err() || outbox.is_closed() {
            break;
        }
    }
    let _ = commands.send(Command::Disconnect { client });
    outbox.close();
    let _ = writer.await;
    Ok(())
}
