use std::path::PathBuf;

use clap::Args;
use hsic_explain::benchmarks::{run_case, BenchMethod, CaseId, CaseOptions, CaseReport, CSV_HEADER};
use hsic_explain::{KernelConfig, PerturbationKind, SolverConfig};
use serde::Deserialize;

use crate::explain::read_config;
use crate::Failure;

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Case ids, comma separated: hub-one, hub-two, bridge, grid-pattern, series-chunk.
    #[arg(long, value_delimiter = ',', conflicts_with = "all")]
    case: Vec<String>,
    /// Run every case.
    #[arg(long)]
    all: bool,
    /// Methods, comma separated (l1, group, fused, random). Default: all four.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Seeds, comma separated. Default: 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Directory for report.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on test instances per seed.
    #[arg(long)]
    max_instances: Option<usize>,
    /// Override every case's perturbation (preset syntax).
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    m_samples: Option<usize>,
    /// JSON file with defaults for these options; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    cases: Option<Vec<String>>,
    all: Option<bool>,
    methods: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    max_instances: Option<usize>,
    scheme: Option<String>,
    m_samples: Option<usize>,
    kernels: Option<KernelConfig>,
    solver: Option<SolverConfig>,
}

fn nonempty<T>(flag: Vec<T>) -> Option<Vec<T>> {
    (!flag.is_empty()).then_some(flag)
}

pub fn run(a: BenchmarkArgs) -> Result<(), Failure> {
    let cfg: ConfigFile = read_config(a.config.as_deref())?;
    let cases: Vec<CaseId> = if a.all || (a.case.is_empty() && cfg.all.unwrap_or(false)) {
        CaseId::ALL.to_vec()
    } else {
        let names = nonempty(a.case)
            .or(cfg.cases)
            .ok_or_else(|| Failure::input("usage", "give --case <id> or --all"))?;
        names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?
    };
    let methods: Vec<BenchMethod> = match nonempty(a.methods).or(cfg.methods) {
        Some(ms) => ms.iter().map(|m| m.parse()).collect::<Result<_, _>>()?,
        None => ["l1", "group", "fused", "random"].iter().map(|m| m.parse().unwrap()).collect(),
    };
    let seeds = nonempty(a.seeds).or(cfg.seeds).unwrap_or_else(|| vec![0, 1, 2]);
    let perturbation = match a.scheme.or(cfg.scheme) {
        Some(s) => Some(s.parse::<PerturbationKind>()?),
        None => None,
    };
    let opts = CaseOptions {
        max_instances: a.max_instances.or(cfg.max_instances),
        kernels: cfg.kernels,
        perturbation,
        m_samples: a.m_samples.or(cfg.m_samples),
        solver: cfg.solver,
    };

    let mut reports: Vec<CaseReport> = Vec::new();
    for case in cases {
        log::info!("running {case}");
        reports.push(run_case(case, &methods, &seeds, &opts)?);
    }

    let mut csv = String::from(CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.csv_rows());
    }
    print!("{csv}");
    if let Some(dir) = a.out.or(cfg.out) {
        let io = |e: std::io::Error| Failure::input("io", format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(&dir).map_err(io)?;
        std::fs::write(dir.join("report.csv"), &csv).map_err(io)?;
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        std::fs::write(dir.join("report.json"), json + "\n").map_err(io)?;
    }

    let errors: Vec<&String> = reports.iter().flat_map(|r| &r.errors).collect();
    for e in &errors {
        eprintln!("instance error: {e}");
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::model("instance_errors", format!("{} instance(s) failed", errors.len())))
    }
}
