use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use hsic_explain::kernel::DEFAULT_ZERO_NORM_TOLERANCE;
use hsic_explain::model::external::DEFAULT_TIMEOUT;
use hsic_explain::perturbation::DEFAULT_M_SAMPLES;
use hsic_explain::{
    explain, generate, output_gram, unit_gram, Bandwidth, BlackBoxModel, BridgeOracle, BridgeRule, Endpoint,
    ExplainRequest, ExplainSettings, ExternalModel, GraphSeries, Graph, GroupSource, HubOracle, HubRule,
    InputKernel, InputKind, KernelConfig, Method, OwnedTarget, PatternOracle, PerturbationKind, PerturbationScheme,
    SeriesChunkOracle, SolverConfig, UnitId, UnitKind, UnitKindName,
};
use serde::Deserialize;
use serde_json::Value;

use crate::Failure;

#[derive(Args, Debug, Clone, Default)]
pub struct TargetArgs {
    /// Graph JSON file.
    #[arg(long, conflicts_with = "series")]
    graph: Option<PathBuf>,
    /// Graph series JSON file.
    #[arg(long)]
    series: Option<PathBuf>,
    /// builtin:<hub|bridge|pattern|series-chunk>[:option], exec:<command>, or tcp:<host:port>.
    #[arg(long)]
    model: Option<String>,
    /// Class count expected from an external model.
    #[arg(long)]
    n_classes: Option<usize>,
    /// Seconds to wait for each external prediction.
    #[arg(long)]
    timeout: Option<f64>,
    /// node, edge, or node-time.
    #[arg(long)]
    units: Option<String>,
    /// Perturbation preset (e.g. remove-nodes:2) or scheme JSON.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m_samples: Option<usize>,
    /// auto, delta, gaussian, or gaussian:<sigma>.
    #[arg(long)]
    input_kernel: Option<String>,
    /// JSON file with defaults for any of these options; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// l1, group, or fused.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// walks:<n>,<len> or file:<path> (JSON list of unit-id lists).
    #[arg(long)]
    groups: Option<String>,
}

#[derive(Args, Debug)]
pub struct GramArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Unit whose Gram matrix to print, e.g. node:3 or edge:0-4.
    #[arg(long, required_unless_present = "output", conflicts_with = "output")]
    unit: Option<String>,
    /// Print the model-output Gram matrix instead.
    #[arg(long)]
    output: bool,
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    graph: Option<PathBuf>,
    series: Option<PathBuf>,
    model: Option<String>,
    n_classes: Option<usize>,
    timeout: Option<f64>,
    units: Option<String>,
    scheme: Option<Value>,
    seed: Option<u64>,
    m_samples: Option<usize>,
    input_kernel: Option<String>,
    kernels: Option<KernelConfig>,
    method: Option<String>,
    lambda: Option<f64>,
    mu: Option<f64>,
    groups: Option<String>,
    solver: Option<SolverConfig>,
}

pub fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input("io", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input("config", format!("{}: {e}", path.display())))
}

/// Everything needed to query a model about one target.
struct Resolved {
    target: OwnedTarget,
    model: Box<dyn BlackBoxModel>,
    settings: ExplainSettings,
}

fn parse<T: std::str::FromStr>(what: &'static str, s: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| Failure::input("invalid_argument", format!("{what}: {e}")))
}

fn load_target(graph: Option<PathBuf>, series: Option<PathBuf>) -> Result<OwnedTarget, Failure> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Failure::input("io", format!("cannot read {}: {e}", p.display())))
    };
    match (graph, series) {
        (Some(_), Some(_)) => Err(Failure::input("usage", "give --graph or --series, not both")),
        (Some(p), None) => Ok(OwnedTarget::Graph(Graph::from_json(&read(&p)?)?)),
        (None, Some(p)) => Ok(OwnedTarget::Series(GraphSeries::from_json(&read(&p)?)?)),
        (None, None) => Err(Failure::input("usage", "one of --graph or --series is required")),
    }
}

pub fn builtin_model(spec: &str) -> Result<Box<dyn BlackBoxModel>, Failure> {
    let (name, option) = spec.split_once(':').map_or((spec, None), |(n, o)| (n, Some(o)));
    let bad = || Failure::input("invalid_argument", format!("unknown builtin model `{spec}`"));
    Ok(match (name, option) {
        ("hub", None | Some("any")) => Box::new(HubOracle::default()),
        ("hub", Some("graded")) => Box::new(HubOracle::default().with_rule(HubRule::Graded)),
        ("bridge", None | Some("cut-edge")) => Box::new(BridgeOracle::default()),
        ("bridge", Some("junction")) => Box::new(BridgeOracle::default().with_rule(BridgeRule::Junction)),
        ("pattern", None) => Box::new(PatternOracle::new(4, hsic_explain::model::oracles::DEFAULT_EPSILON)?),
        ("pattern", Some(n)) => Box::new(PatternOracle::new(
            parse("pattern target count", n)?,
            hsic_explain::model::oracles::DEFAULT_EPSILON,
        )?),
        ("series-chunk", None) => Box::new(SeriesChunkOracle::default()),
        _ => return Err(bad()),
    })
}

fn load_model(
    spec: &str,
    accepts: InputKind,
    n_classes: usize,
    timeout: Duration,
) -> Result<Box<dyn BlackBoxModel>, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_model(name);
    }
    let endpoint: Endpoint = spec.parse()?;
    Ok(Box::new(ExternalModel::connect(&endpoint, accepts, n_classes, timeout)?))
}

fn parse_input_kernel(s: &str) -> Result<InputKernel, Failure> {
    Ok(match s {
        "auto" => InputKernel::Auto,
        "delta" => InputKernel::Delta,
        "gaussian" => InputKernel::Gaussian(Bandwidth::Median),
        _ => match s.strip_prefix("gaussian:") {
            Some(sigma) => {
                let sigma: f64 = parse("gaussian bandwidth", sigma)?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Failure::input("invalid_argument", format!("bandwidth {sigma} must be positive")));
                }
                InputKernel::Gaussian(Bandwidth::Fixed(sigma))
            }
            None => return Err(Failure::input("invalid_argument", format!("unknown input kernel `{s}`"))),
        },
    })
}

fn parse_scheme(v: &Value) -> Result<PerturbationScheme, Failure> {
    match v {
        Value::String(s) if s.trim_start().starts_with('{') => {
            parse_scheme(&serde_json::from_str(s).map_err(|e| Failure::input("invalid_argument", format!("scheme: {e}")))?)
        }
        Value::String(s) => Ok(PerturbationScheme::new(parse::<PerturbationKind>("scheme", s)?, DEFAULT_M_SAMPLES, 0)),
        other => serde_json::from_value(other.clone()).map_err(|e| Failure::input("invalid_argument", format!("scheme: {e}"))),
    }
}

fn default_scheme(kind: UnitKind) -> PerturbationKind {
    match kind {
        UnitKind::Edge => PerturbationKind::RemoveEdges { k: 3 },
        _ => PerturbationKind::RemoveNodes { k: 2 },
    }
}

fn parse_groups(s: &str, seed: u64) -> Result<GroupSource, Failure> {
    if let Some(rest) = s.strip_prefix("walks:") {
        let (n, len) = rest
            .split_once(',')
            .ok_or_else(|| Failure::input("invalid_argument", format!("groups `{s}` must be walks:<n>,<len>")))?;
        return Ok(GroupSource::Walks {
            n_walks: Some(parse("walk count", n)?),
            walk_len: parse("walk length", len)?,
            seed,
        });
    }
    if let Some(path) = s.strip_prefix("file:") {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::input("io", format!("cannot read {path}: {e}")))?;
        let groups: Vec<Vec<String>> = serde_json::from_str(&text)
            .map_err(|e| Failure::input("schema", format!("{path}: expected a list of unit-id lists: {e}")))?;
        return Ok(GroupSource::Explicit { groups });
    }
    Err(Failure::input("invalid_argument", format!("groups `{s}` must be walks:<n>,<len> or file:<path>")))
}

fn resolve(
    t: TargetArgs,
    method: Option<String>,
    lambda: Option<f64>,
    mu: Option<f64>,
    groups: Option<String>,
) -> Result<Resolved, Failure> {
    let cfg: ConfigFile = read_config(t.config.as_deref())?;
    let (graph, series) = if t.graph.is_some() || t.series.is_some() {
        (t.graph, t.series)
    } else {
        (cfg.graph, cfg.series)
    };
    let target = load_target(graph, series)?;
    let is_series = matches!(target, OwnedTarget::Series(_));

    let units: UnitKindName = match t.units.or(cfg.units) {
        Some(u) => parse::<UnitKind>("units", &u)?.into(),
        None if is_series => UnitKindName::NodeTime,
        None => UnitKindName::Node,
    };
    let mut scheme = match t.scheme.map(Value::String).or(cfg.scheme) {
        Some(v) => parse_scheme(&v)?,
        None => PerturbationScheme::new(default_scheme(units.into()), DEFAULT_M_SAMPLES, 0),
    };
    if let Some(seed) = t.seed.or(cfg.seed) {
        scheme.seed = seed;
    }
    if let Some(m) = t.m_samples.or(cfg.m_samples) {
        scheme.m_samples = m;
    }
    let mut kernels = cfg.kernels.unwrap_or_default();
    if let Some(k) = t.input_kernel.or(cfg.input_kernel) {
        kernels.input_kernel = parse_input_kernel(&k)?;
    }
    if kernels.zero_norm_tolerance <= 0.0 {
        kernels.zero_norm_tolerance = DEFAULT_ZERO_NORM_TOLERANCE;
    }
    let method: Method = match method.or(cfg.method) {
        Some(m) => parse("method", &m)?,
        None => Method::L1,
    };
    let mut solver = cfg.solver.unwrap_or_default();
    if let Some(l) = lambda.or(cfg.lambda) {
        solver.lambda = l;
    }
    if let Some(m) = mu.or(cfg.mu) {
        solver.mu = m;
    }
    let groups = match groups.or(cfg.groups) {
        Some(g) => parse_groups(&g, scheme.seed)?,
        None => GroupSource::Walks {
            n_walks: None,
            walk_len: hsic_explain::explainer::DEFAULT_WALK_LEN,
            seed: scheme.seed,
        },
    };
    let settings = ExplainSettings { unit_kind: units, scheme, kernels, method, groups, solver };

    let spec = t
        .model
        .or(cfg.model)
        .ok_or_else(|| Failure::input("usage", "--model is required"))?;
    let accepts = if is_series { InputKind::Series } else { InputKind::Graph };
    let timeout = match t.timeout.or(cfg.timeout) {
        Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
        Some(s) => return Err(Failure::input("invalid_argument", format!("timeout {s} must be positive"))),
        None => DEFAULT_TIMEOUT,
    };
    let model = load_model(&spec, accepts, t.n_classes.or(cfg.n_classes).unwrap_or(2), timeout)?;
    Ok(Resolved { target, model, settings })
}

pub fn run(a: ExplainArgs) -> Result<(), Failure> {
    let r = resolve(a.target, a.method, a.lambda, a.mu, a.groups)?;
    let e = explain(&ExplainRequest {
        target: r.target.as_target(),
        model: r.model.as_ref(),
        settings: r.settings,
    })?;
    println!("{}", e.to_json());
    Ok(())
}

pub fn gram(a: GramArgs) -> Result<(), Failure> {
    let r = resolve(a.target, None, None, None, None)?;
    r.settings.scheme.validate()?;
    r.settings.kernels.validate()?;
    let kind: UnitKind = r.settings.unit_kind.into();
    let dataset = generate(r.target.as_target(), r.model.as_ref(), &r.settings.scheme, kind)?;
    let k = if a.output {
        output_gram(&dataset, &r.settings.kernels)?
    } else {
        let unit: UnitId = parse("unit", a.unit.as_deref().unwrap_or_default())?;
        let idx = dataset
            .units
            .iter()
            .position(|u| *u == unit)
            .ok_or_else(|| Failure::input("invalid_argument", format!("unit {unit} is not a {} unit of the target", kind.name())))?;
        unit_gram(&dataset.unit_features[idx], &r.settings.kernels)?
    };
    print!("{}", k.to_csv());
    Ok(())
}
