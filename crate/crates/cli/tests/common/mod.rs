#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;

use futures_util::{SinkExt, StreamExt};
use pathsense::protocol::{ClientMessage, ClockMode, ConnectionOptions, ServerMessage};
use pathsense_cli::server::{serve, ServeOptions};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

pub async fn spawn_server(clock: ClockMode, data_dir: Option<&Path>) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let opts = ServeOptions { data_dir: data_dir.map(Path::to_path_buf), clock, connection: ConnectionOptions::default() };
    tokio::spawn(serve(listener, opts));
    addr
}

/// Sends each message as its own text frame, then reads replies until the
/// session's metrics arrive (or `stop_after` lines have been read).
pub async fn exchange(addr: SocketAddr, inbound: &[ClientMessage], stop_after: Option<usize>) -> Vec<String> {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.unwrap();
    for m in inbound {
        ws.send(Message::text(m.to_line())).await.unwrap();
    }
    let mut lines = Vec::new();
    while let Some(msg) = ws.next().await {
        let Message::Text(t) = msg.unwrap() else { continue };
        let line = t.to_string();
        let done = matches!(serde_json::from_str::<ServerMessage>(&line).unwrap(), ServerMessage::Metrics(_));
        lines.push(line);
        if done || stop_after.is_some_and(|n| lines.len() >= n) {
            break;
        }
    }
    let _ = ws.close(None).await;
    lines
}

pub fn parse_lines(text: &str) -> Vec<ClientMessage> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| pathsense::protocol::parse_client_message(l).unwrap())
        .collect()
}
