//! JSON Lines wire protocol between the explainer and an external model.
//!
//! ```text
//! -> {"type":"hello","protocol":1}
//! <- {"type":"ready","n_classes":2,"accepts":"graph"}
//! -> {"type":"predict","id":7,"input":{...graph or series...}}
//! <- {"type":"prediction","id":7,"probs":[0.1,0.9]}
//! <- {"type":"error","id":7,"message":"..."}
//! ```
//!
//! Ids are unique per connection and responses may arrive in any order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{Graph, GraphSeries, Target};
use crate::model::{BlackBoxModel, InputKind};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        protocol: u32,
    },
    Ready {
        n_classes: usize,
        accepts: InputKind,
    },
    Predict {
        id: u64,
        input: Value,
    },
    Prediction {
        id: u64,
        probs: Vec<f64>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("message serialization is infallible");
        s.push('\n');
        s
    }
}

/// Serves `model` over a line-oriented stream until EOF. Requests are answered
/// in arrival order; malformed lines get an error message and the connection
/// stays open.
pub fn serve<M, R, W>(model: &M, reader: R, mut writer: W) -> std::io::Result<()>
where
    M: BlackBoxModel + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Message>(&line) {
            Ok(Message::Hello { protocol }) if protocol == PROTOCOL_VERSION => Message::Ready {
                n_classes: model.n_classes(),
                accepts: model.accepts(),
            },
            Ok(Message::Hello { protocol }) => Message::Error {
                id: None,
                message: format!("unsupported protocol version {protocol}"),
            },
            Ok(Message::Predict { id, input }) => match evaluate_value(model, &input) {
                Ok(probs) => Message::Prediction { id, probs },
                Err(message) => Message::Error { id: Some(id), message },
            },
            Ok(other) => Message::Error {
                id: None,
                message: format!("unexpected message {other:?}"),
            },
            Err(e) => Message::Error {
                id: serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_u64)),
                message: format!("malformed request: {e}"),
            },
        };
        writer.write_all(reply.to_line().as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

fn evaluate_value<M: BlackBoxModel + ?Sized>(model: &M, input: &Value) -> Result<Vec<f64>, String> {
    match model.accepts() {
        InputKind::Graph => {
            let g = Graph::from_value(input, "$.input").map_err(|e| e.to_string())?;
            model.evaluate(Target::Graph(&g)).map_err(|e| e.to_string())
        }
        InputKind::Series => {
            let s = GraphSeries::from_value(input, "$.input").map_err(|e| e.to_string())?;
            model.evaluate(Target::Series(&s)).map_err(|e| e.to_string())
        }
    }
}
