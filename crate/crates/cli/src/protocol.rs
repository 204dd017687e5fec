use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::Args;
use hsic_explain::benchmarks::generators::{cycle, gen_glasses, wheel};
use hsic_explain::model::external::DEFAULT_TIMEOUT;
use hsic_explain::model::protocol;
use hsic_explain::{Endpoint, ExternalModel, Graph, GraphSeries, InputKind, PredictionVector};
use serde_json::Value;

use crate::explain::builtin_model;
use crate::Failure;

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// exec:<command> or tcp:<host:port>.
    #[arg(long)]
    endpoint: String,
    /// graph or series.
    #[arg(long, default_value = "graph")]
    accepts: String,
    #[arg(long, default_value_t = 2)]
    n_classes: usize,
    /// Seconds to wait for each reply.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// builtin:<hub|bridge|pattern|series-chunk>[:option].
    #[arg(long)]
    model: String,
    /// Listen on host:port instead of using stdin/stdout.
    #[arg(long)]
    listen: Option<String>,
}

fn canned(accepts: InputKind) -> Vec<Value> {
    let to_value = |json: String| serde_json::from_str::<Value>(&json).expect("canonical JSON");
    match accepts {
        InputKind::Graph => [cycle(5), wheel(6), gen_glasses(3, 4).0]
            .iter()
            .map(|g| to_value(g.to_json()))
            .collect(),
        InputKind::Series => (3..6)
            .map(|n| {
                let snap = |v: f64| Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)), vec![vec![v]; n]).unwrap();
                to_value(GraphSeries::new(vec![snap(0.0), snap(1.0)]).unwrap().to_json())
            })
            .collect(),
    }
}

/// Handshake, then three distinct predictions issued concurrently so that a
/// server answering out of order is exercised; each reply must be a
/// probability vector and must come back under its own id.
pub fn check(a: CheckArgs) -> Result<(), Failure> {
    let endpoint: Endpoint = a.endpoint.parse()?;
    let accepts: InputKind = a.accepts.parse()?;
    let timeout = a.timeout.map_or(DEFAULT_TIMEOUT, Duration::from_secs_f64);
    let model = Arc::new(ExternalModel::connect(&endpoint, accepts, a.n_classes, timeout)?);
    println!("ok handshake n_classes={} accepts={}", a.n_classes, accepts);

    let inputs = canned(accepts);
    let handles: Vec<_> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, input)| {
            let model = Arc::clone(&model);
            thread::spawn(move || (i, model.request(input)))
        })
        .collect();
    let mut failure = None;
    for h in handles {
        let (i, reply) = h.join().expect("request thread");
        let checked = reply.and_then(|probs| PredictionVector::new(probs, a.n_classes));
        match checked {
            Ok(p) => println!("ok prediction {i} probs={:?}", p.probs()),
            Err(e) => {
                println!("fail prediction {i}: {e}");
                failure.get_or_insert(e);
            }
        }
    }
    match failure {
        None => {
            println!("protocol check passed");
            Ok(())
        }
        Some(e) => Err(e.into()),
    }
}

pub fn serve(a: ServeArgs) -> Result<(), Failure> {
    let name = a
        .model
        .strip_prefix("builtin:")
        .ok_or_else(|| Failure::input("invalid_argument", "serve only hosts builtin:<name> models"))?;
    let model = builtin_model(name)?;
    let io = |e: std::io::Error| Failure::model("model_transport", e);
    match a.listen {
        None => {
            let stdin = std::io::stdin().lock();
            protocol::serve(model.as_ref(), stdin, std::io::stdout().lock()).map_err(io)
        }
        Some(addr) => {
            let listener = TcpListener::bind(&addr).map_err(|e| Failure::input("io", format!("{addr}: {e}")))?;
            let local = listener.local_addr().map_err(io)?;
            // scripts read this line to learn an ephemeral port
            println!("listening {local}");
            std::io::stdout().flush().map_err(io)?;
            for stream in listener.incoming() {
                let stream = stream.map_err(io)?;
                let reader = BufReader::new(stream.try_clone().map_err(io)?);
                if let Err(e) = protocol::serve(model.as_ref(), reader, stream) {
                    log::warn!("connection ended: {e}");
                }
            }
            Ok(())
        }
    }
}
