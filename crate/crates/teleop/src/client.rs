//! Blocking headless client, used by scripted sessions and tests.

use std::net::TcpStream;

use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::protocol::{decode_server, encode_client, ClientMessage, ControlMessage, KeyStates, ServerMessage};
use crate::TeleopError;

pub struct Client {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl Client {
    /// Connects to `ws://addr` and returns the server greeting.
    pub fn connect(addr: &str) -> Result<(Self, ServerMessage), TeleopError> {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}"))?;
        let mut client = Self { ws };
        let hello = client.recv()?;
        Ok((client, hello))
    }

    pub fn send(&mut self, msg: &ClientMessage) -> Result<(), TeleopError> {
        self.ws.send(Message::Binary(encode_client(msg).into()))?;
        Ok(())
    }

    /// Sends raw bytes, bypassing the encoder.
    pub fn send_raw(&mut self, bytes: Vec<u8>) -> Result<(), TeleopError> {
        self.ws.send(Message::Binary(bytes.into()))?;
        Ok(())
    }

    pub fn control(&mut self, keys: KeyStates, client_time: f64) -> Result<(), TeleopError> {
        self.send(&ClientMessage::Control(ControlMessage {
            key_states: keys,
            client_time,
        }))
    }

    /// Next protocol message; other WebSocket traffic is skipped.
    pub fn recv(&mut self) -> Result<ServerMessage, TeleopError> {
        loop {
            match self.ws.read()? {
                Message::Binary(b) => return Ok(decode_server(&b)?),
                Message::Close(_) => return Err(TeleopError::Closed),
                _ => {}
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
