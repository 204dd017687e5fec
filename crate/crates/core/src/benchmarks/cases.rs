//! Benchmark cases: instance sets, per-case settings, and the harness that
//! selects regularization on validation instances and scores test instances.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::generators::{
    barabasi_albert, gen_glasses, gen_grid_pattern, gen_series, gen_two_connected, wheel, wheel_hub, Component,
    GridPattern,
};
use super::metrics::{aacc, mean_std, oacc, precision_at, top_k_acc};
use crate::error::{Error, Result};
use crate::explainer::{
    default_grid, prepare, random_explanation, rank_units, select_from_prepared, ExplainRequest, ExplainSettings,
    GroupSource, Prepared, UnitKindName,
};
use crate::graph::{OwnedTarget, UnitId};
use crate::kernel::{InputKernel, KernelConfig};
use crate::model::{BlackBoxModel, BridgeOracle, BridgeRule, HubOracle, HubRule, PatternOracle, SeriesChunkOracle};
use crate::perturbation::{PerturbationKind, PerturbationScheme};
use crate::solvers::{Explanation, Method, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseId {
    /// Single hub in wheel graphs.
    HubOne,
    /// Two hubs in two wheels joined by a bridge.
    HubTwo,
    /// Bridge edge between two cycles.
    Bridge,
    /// Feature-1 patterns on a 4×4 grid.
    GridPattern,
    /// Active chunk at one time step of a graph series.
    SeriesChunk,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [
        CaseId::HubOne,
        CaseId::HubTwo,
        CaseId::Bridge,
        CaseId::GridPattern,
        CaseId::SeriesChunk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::HubOne => "hub-one",
            CaseId::HubTwo => "hub-two",
            CaseId::Bridge => "bridge",
            CaseId::GridPattern => "grid-pattern",
            CaseId::SeriesChunk => "series-chunk",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown case `{s}`")))
    }
}

/// A scored method: one of the solvers, or the random baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchMethod {
    Solver(Method),
    Random,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Solver(m) => m.name(),
            BenchMethod::Random => "random",
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            Ok(BenchMethod::Random)
        } else {
            s.parse().map(BenchMethod::Solver)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricSpec {
    TopK(usize),
    AAcc(usize),
    OAcc(usize),
    PrecisionAt(usize),
    /// Precision at the number of ground-truth units.
    PrecisionAtTruth,
}

impl MetricSpec {
    pub fn name(self) -> String {
        match self {
            MetricSpec::TopK(k) => format!("top{k}_acc"),
            MetricSpec::AAcc(k) => format!("aacc@{k}"),
            MetricSpec::OAcc(k) => format!("oacc@{k}"),
            MetricSpec::PrecisionAt(k) => format!("precision@{k}"),
            MetricSpec::PrecisionAtTruth => "precision@tn".to_string(),
        }
    }

    pub fn eval(self, e: &Explanation, truth: &[UnitId]) -> f64 {
        match self {
            MetricSpec::TopK(k) => top_k_acc(&rank_units(e, k), truth, k),
            MetricSpec::AAcc(k) => aacc(&rank_units(e, k), truth, k),
            MetricSpec::OAcc(k) => oacc(&rank_units(e, k), truth, k),
            MetricSpec::PrecisionAt(k) => precision_at(&rank_units(e, k), truth, k),
            MetricSpec::PrecisionAtTruth => {
                let k = truth.len().max(1);
                precision_at(&rank_units(e, k), truth, k)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub target: OwnedTarget,
    pub truth: Vec<UnitId>,
}

/// Everything needed to run one case for one seed.
pub struct CaseSetup {
    pub id: CaseId,
    pub model: Box<dyn BlackBoxModel>,
    /// Method-independent settings; `method` and `solver` are overwritten per run.
    pub settings: ExplainSettings,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
    pub metrics: Vec<MetricSpec>,
    pub selection_metric: MetricSpec,
}

#[derive(Clone, Debug, Default)]
pub struct CaseOptions {
    /// Cap on test instances per seed.
    pub max_instances: Option<usize>,
    /// Overrides the case's kernel configuration.
    pub kernels: Option<KernelConfig>,
    /// Overrides the case's perturbation kind.
    pub perturbation: Option<PerturbationKind>,
    /// Overrides the sample count M.
    pub m_samples: Option<usize>,
    /// Base solver settings for grid points (tolerance, iterations).
    pub solver: Option<SolverConfig>,
}

fn settings(unit_kind: UnitKindName, kind: PerturbationKind, m: usize, kernels: KernelConfig) -> ExplainSettings {
    ExplainSettings {
        unit_kind,
        scheme: PerturbationScheme::new(kind, m, 0),
        kernels,
        method: Method::L1,
        groups: GroupSource::default(),
        solver: SolverConfig::default(),
    }
}

fn graph_instance((g, truth): (crate::graph::Graph, Vec<UnitId>)) -> Instance {
    Instance {
        target: OwnedTarget::Graph(g),
        truth,
    }
}

/// Noise defaults for the feature-noise cases. On the grid, noising two of
/// the 16 nodes per sample keeps zero nodes that cross the threshold from
/// masking pattern nodes that drop below it.
pub const GRID_NOISE: PerturbationKind = PerturbationKind::FeatureNoise {
    node_fraction: 0.125,
    noise_std: 1.0,
};
pub const SERIES_NOISE: PerturbationKind = PerturbationKind::WalkFeatureNoise {
    walk_len: 3,
    noise_std: 1.0,
};

/// Builds the instances and settings of `case` for `seed`.
pub fn setup(case: CaseId, seed: u64, opts: &CaseOptions) -> CaseSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
    let mut setup = match case {
        CaseId::HubOne => CaseSetup {
            id: case,
            model: Box::new(HubOracle::default()),
            settings: settings(
                UnitKindName::Node,
                PerturbationKind::RemoveNodes { k: 2 },
                201,
                KernelConfig::default(),
            ),
            validation: (6..=8).map(|n| graph_instance((wheel(n), vec![UnitId::Node(wheel_hub(n))]))).collect(),
            test: (9..=21).map(|n| graph_instance((wheel(n), vec![UnitId::Node(wheel_hub(n))]))).collect(),
            metrics: vec![MetricSpec::TopK(1), MetricSpec::TopK(3)],
            selection_metric: MetricSpec::TopK(1),
        },
        CaseId::HubTwo => {
            let ww = |l: usize, r: usize, rng: &mut ChaCha8Rng| {
                graph_instance(gen_two_connected(Component::Wheel, Component::Wheel, l, r, rng))
            };
            let validation = vec![ww(7, 8, &mut rng), ww(8, 7, &mut rng)];
            let test = (0..20)
                .map(|_| {
                    let l = rng.random_range(6..=16);
                    let r = rng.random_range(6..=16);
                    ww(l, r, &mut rng)
                })
                .collect();
            CaseSetup {
                id: case,
                model: Box::new(HubOracle::default().with_rule(HubRule::Graded)),
                settings: settings(
                    UnitKindName::Node,
                    PerturbationKind::RemoveNodes { k: 4 },
                    201,
                    KernelConfig::default(),
                ),
                validation,
                test,
                metrics: vec![
                    MetricSpec::AAcc(2),
                    MetricSpec::AAcc(6),
                    MetricSpec::OAcc(2),
                    MetricSpec::OAcc(6),
                ],
                selection_metric: MetricSpec::AAcc(6),
            }
        }
        CaseId::Bridge => {
            let validation = [(3, 3), (3, 4), (4, 4)]
                .into_iter()
                .map(|(a, b)| graph_instance(gen_glasses(a, b)))
                .collect();
            let test = (0..20)
                .map(|_| {
                    let a = rng.random_range(3..=10);
                    let b = rng.random_range(3..=10);
                    graph_instance(gen_glasses(a, b))
                })
                .collect();
            CaseSetup {
                id: case,
                model: Box::new(BridgeOracle::default().with_rule(BridgeRule::Junction)),
                settings: settings(
                    UnitKindName::Edge,
                    PerturbationKind::RemoveEdges { k: 3 },
                    201,
                    KernelConfig::default(),
                ),
                validation,
                test,
                metrics: vec![MetricSpec::TopK(2), MetricSpec::TopK(5)],
                selection_metric: MetricSpec::TopK(2),
            }
        }
        CaseId::GridPattern => {
            let mut draw = |pattern, n: usize| -> Vec<Instance> {
                (0..n).map(|_| graph_instance(gen_grid_pattern(pattern, &mut rng))).collect()
            };
            let mut validation = draw(GridPattern::Rectangle, 2);
            validation.extend(draw(GridPattern::Line, 2));
            let mut test = draw(GridPattern::Rectangle, 10);
            test.extend(draw(GridPattern::Line, 10));
            CaseSetup {
                id: case,
                model: Box::new(PatternOracle::new(4, crate::model::oracles::DEFAULT_EPSILON).expect("valid epsilon")),
                settings: settings(UnitKindName::Node, GRID_NOISE, 201, KernelConfig::default()),
                validation,
                test,
                metrics: vec![MetricSpec::PrecisionAt(4)],
                selection_metric: MetricSpec::PrecisionAt(4),
            }
        }
        CaseId::SeriesChunk => {
            let structure = barabasi_albert(20, 2, &mut rng);
            let mut draw = |n: usize| -> Vec<Instance> {
                (0..n)
                    .map(|_| {
                        let (s, truth) = gen_series(&structure, true, &mut rng);
                        Instance {
                            target: OwnedTarget::Series(s),
                            truth,
                        }
                    })
                    .collect()
            };
            let validation = draw(5);
            let test = draw(20);
            CaseSetup {
                id: case,
                model: Box::new(SeriesChunkOracle::default()),
                settings: settings(
                    UnitKindName::NodeTime,
                    SERIES_NOISE,
                    251,
                    KernelConfig {
                        input_kernel: InputKernel::Delta,
                        ..KernelConfig::default()
                    },
                ),
                validation,
                test,
                metrics: vec![MetricSpec::PrecisionAtTruth],
                selection_metric: MetricSpec::PrecisionAtTruth,
            }
        }
    };
    if let Some(k) = opts.kernels {
        setup.settings.kernels = k;
    }
    if let Some(kind) = opts.perturbation {
        setup.settings.scheme.kind = kind;
    }
    if let Some(m) = opts.m_samples {
        setup.settings.scheme.m_samples = m;
    }
    if let Some(s) = opts.solver {
        setup.settings.solver = s;
    }
    if let Some(cap) = opts.max_instances {
        setup.test.truncate(cap);
    }
    setup
}

/// Aggregated metric over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub case: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceResult {
    pub seed: u64,
    pub index: usize,
    pub method: String,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub top: Vec<UnitId>,
    pub truth: Vec<UnitId>,
    pub metrics: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionRecord {
    pub seed: u64,
    pub method: String,
    pub lambda: f64,
    pub mu: Option<f64>,
    pub validation_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: CaseId,
    pub reports: Vec<MetricReport>,
    pub selections: Vec<SelectionRecord>,
    pub instances: Vec<InstanceResult>,
    pub errors: Vec<String>,
}

impl CaseReport {
    pub fn metric(&self, method: &str, metric: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.method == method && r.metric == metric)
    }

    /// Rows `case,method,metric,mean,stddev,n` without a header.
    pub fn csv_rows(&self) -> String {
        self.reports
            .iter()
            .map(|r| format!("{},{},{},{:.6},{:.6},{}\n", r.case, r.method, r.metric, r.mean, r.stddev, r.n))
            .collect()
    }
}

pub const CSV_HEADER: &str = "case,method,metric,mean,stddev,n\n";

fn instance_seed(seed: u64, split: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(split * 10_007).wrapping_add(index as u64)
}

fn prepare_all(setup: &CaseSetup, instances: &[Instance], seed: u64, split: u64) -> Vec<Result<Prepared>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut settings = setup.settings.clone();
            let s = instance_seed(seed, split, i);
            settings.scheme.seed = s;
            if let GroupSource::Walks { seed: ws, .. } = &mut settings.groups {
                *ws = s;
            }
            prepare(&ExplainRequest {
                target: inst.target.as_target(),
                model: setup.model.as_ref(),
                settings,
            })
        })
        .collect()
}

/// Runs `methods` on `case` for every seed and aggregates the metrics.
pub fn run_case(case: CaseId, methods: &[BenchMethod], seeds: &[u64], opts: &CaseOptions) -> Result<CaseReport> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one method and one seed".into()));
    }
    let mut instances = Vec::new();
    let mut selections = Vec::new();
    let mut errors = Vec::new();
    let mut metric_names = Vec::new();
    // per (method, metric): per-seed means and instance counts
    let mut per_seed: Vec<Vec<(Vec<f64>, usize)>> = vec![Vec::new(); methods.len()];

    for &seed in seeds {
        let setup = setup(case, seed, opts);
        if metric_names.is_empty() {
            metric_names = setup.metrics.iter().map(|m| m.name()).collect();
            for slot in &mut per_seed {
                *slot = vec![(Vec::new(), 0); setup.metrics.len()];
            }
        }
        let validation: Vec<(Prepared, Vec<UnitId>)> = prepare_all(&setup, &setup.validation, seed, 1)
            .into_iter()
            .zip(&setup.validation)
            .map(|(p, inst)| p.map(|p| (p, inst.truth.clone())))
            .collect::<Result<_>>()?;
        let prepared = prepare_all(&setup, &setup.test, seed, 2);

        for (mi, &method) in methods.iter().enumerate() {
            let config = match method {
                BenchMethod::Solver(m) => {
                    let grid = default_grid(m, &setup.settings.solver);
                    let metric = setup.selection_metric;
                    let sel = select_from_prepared(&validation, m, &grid, |e, t| metric.eval(e, t))?;
                    selections.push(SelectionRecord {
                        seed,
                        method: method.name().to_string(),
                        lambda: sel.config.lambda,
                        mu: (m == Method::Fused).then_some(sel.config.mu),
                        validation_metric: sel.metric,
                    });
                    Some(sel.config)
                }
                BenchMethod::Random => None,
            };
            let results: Vec<Result<(Explanation, Vec<f64>)>> = prepared
                .par_iter()
                .zip(&setup.test)
                .enumerate()
                .map(|(i, (prep, inst))| {
                    let e = match (method, &config) {
                        (BenchMethod::Solver(m), Some(cfg)) => match prep {
                            Ok(p) => p.solve(m, cfg),
                            Err(e) => return Err(Error::InvalidArgument(e.to_string())),
                        },
                        _ => {
                            let units = inst.target.as_target().units(setup.settings.unit_kind.into())?;
                            random_explanation(&units, instance_seed(seed, 3, i))
                        }
                    };
                    let values = setup.metrics.iter().map(|m| m.eval(&e, &inst.truth)).collect();
                    Ok((e, values))
                })
                .collect();
            let mut sums = vec![0.0; setup.metrics.len()];
            let mut count = 0;
            for (i, (r, inst)) in results.into_iter().zip(&setup.test).enumerate() {
                match r {
                    Ok((e, values)) => {
                        for (s, v) in sums.iter_mut().zip(&values) {
                            *s += v;
                        }
                        count += 1;
                        let k = inst.truth.len().max(6);
                        instances.push(InstanceResult {
                            seed,
                            index: i,
                            method: method.name().to_string(),
                            lambda: config.map(|c| c.lambda),
                            mu: config.filter(|_| method == BenchMethod::Solver(Method::Fused)).map(|c| c.mu),
                            top: rank_units(&e, k),
                            truth: inst.truth.clone(),
                            metrics: metric_names.iter().cloned().zip(values).collect(),
                        });
                    }
                    Err(err) => errors.push(format!("{case} seed {seed} instance {i} ({method}): {err}")),
                }
            }
            for (slot, s) in per_seed[mi].iter_mut().zip(&sums) {
                if count > 0 {
                    slot.0.push(s / count as f64);
                }
                slot.1 += count;
            }
        }
    }

    let mut reports = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        for (name, (means, n)) in metric_names.iter().zip(&per_seed[mi]) {
            let (mean, stddev) = mean_std(means);
            reports.push(MetricReport {
                case: case.name().to_string(),
                method: method.name().to_string(),
                metric: name.clone(),
                mean,
                stddev,
                n: *n,
            });
        }
    }
    Ok(CaseReport {
        case,
        reports,
        selections,
        instances,
        errors,
    })
}
