use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use hsic_explain::benchmarks::generators::{cycle, wheel};
use hsic_explain::model::protocol::{serve, Message, PROTOCOL_VERSION};
use hsic_explain::{
    explain, predict, BlackBoxModel, Endpoint, ExplainRequest, ExplainSettings, ExternalModel, GroupSource,
    HubOracle, InputKind, KernelConfig, Method, ModelError, PerturbationKind, PerturbationScheme, SolverConfig,
    Target, UnitKindName,
};
use serde_json::Value;

fn listener() -> (TcpListener, Endpoint) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    (l, Endpoint::Tcp(addr.to_string()))
}

fn write(stream: &mut TcpStream, msg: &Message) {
    stream.write_all(msg.to_line().as_bytes()).unwrap();
    stream.flush().unwrap();
}

/// Answers the handshake, then hands every parsed message to `on_message`.
fn scripted_server<F>(l: TcpListener, n_classes: usize, mut on_message: F) -> thread::JoinHandle<()>
where
    F: FnMut(&mut TcpStream, Message) + Send + 'static,
{
    thread::spawn(move || {
        let (mut stream, _) = l.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        for line in reader.lines() {
            let Ok(line) = line else { return };
            match serde_json::from_str::<Message>(&line).unwrap() {
                Message::Hello { protocol } => {
                    assert_eq!(protocol, PROTOCOL_VERSION);
                    write(&mut stream, &Message::Ready { n_classes, accepts: InputKind::Graph });
                }
                other => on_message(&mut stream, other),
            }
        }
    })
}

fn node_count(input: &Value) -> usize {
    input["num_nodes"].as_u64().unwrap() as usize
}

#[test]
fn out_of_order_replies_reach_their_callers() {
    let (l, endpoint) = listener();
    let mut pending = Vec::new();
    let server = scripted_server(l, 2, move |stream, msg| {
        if let Message::Predict { id, input } = msg {
            pending.push((id, node_count(&input)));
            if pending.len() == 3 {
                // reply newest first; each answer encodes the graph size
                for (id, n) in pending.drain(..).rev() {
                    let p = n as f64 / 100.0;
                    write(stream, &Message::Prediction { id, probs: vec![1.0 - p, p] });
                }
            }
        }
    });
    let model = Arc::new(ExternalModel::connect(&endpoint, InputKind::Graph, 2, Duration::from_secs(10)).unwrap());
    let handles: Vec<_> = [5usize, 7, 9]
        .into_iter()
        .map(|n| {
            let model = Arc::clone(&model);
            thread::spawn(move || (n, predict(model.as_ref(), Target::Graph(&cycle(n))).unwrap()))
        })
        .collect();
    for h in handles {
        let (n, pred) = h.join().unwrap();
        assert!((pred.probs()[1] - n as f64 / 100.0).abs() < 1e-12);
    }
    assert_eq!(model.requests_sent(), 3);
    drop(model);
    server.join().unwrap();
}

#[test]
fn equal_inputs_hit_the_wire_once() {
    let (l, endpoint) = listener();
    scripted_server(l, 2, |stream, msg| {
        if let Message::Predict { id, .. } = msg {
            write(stream, &Message::Prediction { id, probs: vec![0.3, 0.7] });
        }
    });
    let model = ExternalModel::connect(&endpoint, InputKind::Graph, 2, Duration::from_secs(10)).unwrap();
    let g = wheel(6);
    let a = predict(&model, Target::Graph(&g)).unwrap();
    let b = predict(&model, Target::Graph(&g.clone())).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.requests_sent(), 1);
    predict(&model, Target::Graph(&wheel(7))).unwrap();
    assert_eq!(model.requests_sent(), 2);
}

#[test]
fn class_count_mismatch_fails_handshake() {
    let (l, endpoint) = listener();
    scripted_server(l, 3, |_, _| {});
    let err = ExternalModel::connect(&endpoint, InputKind::Graph, 2, Duration::from_secs(10)).unwrap_err();
    assert!(matches!(err, ModelError::ClassMismatch { expected: 2, actual: 3 }), "{err}");
}

#[test]
fn silent_model_times_out() {
    let (l, endpoint) = listener();
    scripted_server(l, 2, |_, _| {});
    let model = ExternalModel::connect(&endpoint, InputKind::Graph, 2, Duration::from_millis(200)).unwrap();
    let err = model.evaluate(Target::Graph(&cycle(4))).unwrap_err();
    assert!(matches!(err, ModelError::Timeout(_)), "{err}");
}

#[test]
fn remote_errors_and_bad_probabilities_surface() {
    let (l, endpoint) = listener();
    scripted_server(l, 2, |stream, msg| {
        if let Message::Predict { id, input } = msg {
            let reply = if node_count(&input) == 4 {
                Message::Error { id: Some(id), message: "boom".into() }
            } else {
                Message::Prediction { id, probs: vec![0.9, 0.9] }
            };
            write(stream, &reply);
        }
    });
    let model = ExternalModel::connect(&endpoint, InputKind::Graph, 2, Duration::from_secs(10)).unwrap();
    let err = predict(&model, Target::Graph(&cycle(4))).unwrap_err();
    assert!(matches!(err, ModelError::Remote { ref message, .. } if message == "boom"), "{err}");
    let err = predict(&model, Target::Graph(&cycle(5))).unwrap_err();
    assert!(matches!(err, ModelError::NonSimplex(_)), "{err}");
}

#[test]
fn served_oracle_explains_like_the_builtin() {
    let (l, endpoint) = listener();
    thread::spawn(move || {
        let (stream, _) = l.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        serve(&HubOracle::default(), reader, stream).unwrap();
    });
    let remote = ExternalModel::connect(&endpoint, InputKind::Graph, 2, Duration::from_secs(10)).unwrap();
    let g = wheel(9);
    let settings = ExplainSettings {
        unit_kind: UnitKindName::Node,
        scheme: PerturbationScheme::new(PerturbationKind::RemoveNodes { k: 2 }, 101, 3),
        kernels: KernelConfig::default(),
        method: Method::L1,
        groups: GroupSource::default(),
        solver: SolverConfig::with_lambda(1e-6),
    };
    let local = HubOracle::default();
    let a = explain(&ExplainRequest { target: Target::Graph(&g), model: &local, settings: settings.clone() }).unwrap();
    let b = explain(&ExplainRequest { target: Target::Graph(&g), model: &remote, settings }).unwrap();
    assert_eq!(a, b);
    assert!(remote.requests_sent() <= 101);
}
