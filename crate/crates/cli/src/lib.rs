//! Command-line front end for the `memnet` library.
//!
//! Every command writes machine-readable artifacts (CSV or JSON) and a run
//! manifest from which the run can be repeated with `memnet rerun`. Human
//! summaries go to standard error; standard output carries JSON only.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memnet::capacity::{self, CapacityQuery};
use memnet::construct::{self, ConstructionConfig};
use memnet::geometry::{self, SeparationMode};
use memnet::lowerbound::{self, Hyperplane, PairMode, PressureConfig};
use memnet::netcore::{self, ThresholdLayer, MARGIN_WARNING};
use memnet::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SEED_ENV: &str = "MEMNET_SEED";

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONTRACT: i32 = 2;
    pub const RETRIES: i32 = 3;
    pub const INVARIANT: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(
    name = "memnet",
    version,
    about = "Construct and audit memorizing threshold networks"
)]
pub struct Cli {
    /// Where to write the run manifest. Defaults to `manifest.json` beside
    /// the primary output; commands that only print embed it in their JSON.
    #[arg(long, global = true)]
    pub manifest_out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a δ-separated dataset with random labels.
    Generate(GenerateArgs),
    /// Construct a network memorizing a dataset.
    Build(BuildArgs),
    /// Evaluate a network on a dataset.
    Eval(EvalArgs),
    /// Count neurons and weights of a network.
    Audit(AuditArgs),
    /// Write a clustered lower-bound dataset, optionally with the
    /// first-layer pressure experiment.
    Lowerbound(LowerboundArgs),
    /// Count point pairs split by a set of hyperplanes.
    Separate(SeparateArgs),
    /// Bit-complexity bounds for memorizing n points.
    Bits(BitsArgs),
    /// Network size across a list of δ values.
    Sweep(SweepArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Angular,
    Distance,
}

impl Mode {
    fn with_delta(self, delta: f64) -> memnet::Result<SeparationMode> {
        match self {
            Mode::Angular => SeparationMode::angular(delta),
            Mode::Distance => SeparationMode::distance(delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairs {
    /// Only pairs with different labels.
    Opposite,
    /// Every pair.
    All,
}

impl From<Pairs> for PairMode {
    fn from(p: Pairs) -> Self {
        match p {
            Pairs::Opposite => PairMode::OppositeLabels,
            Pairs::All => PairMode::AllPairs,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, value_enum, default_value = "distance")]
    pub mode: Mode,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BuildArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "distance")]
    pub mode: Mode,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `report.json` beside `--out`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = construct::DEFAULT_EPS)]
    pub eps1: f64,
    #[arg(long, default_value_t = construct::DEFAULT_EPS)]
    pub eps2: f64,
    #[arg(long, default_value_t = construct::DEFAULT_MAX_RETRIES)]
    pub max_retries: usize,
    #[arg(long, default_value_t = construct::DEFAULT_C_DIST)]
    pub c_dist: f64,
    #[arg(long, default_value_t = construct::DEFAULT_DOUBLING_AFTER)]
    pub doubling_after: usize,
}

impl BuildArgs {
    fn config(&self) -> memnet::Result<ConstructionConfig> {
        let mut cfg = ConstructionConfig::new(self.mode.with_delta(self.delta)?, self.seed);
        cfg.eps1 = self.eps1;
        cfg.eps2 = self.eps2;
        cfg.max_retries = self.max_retries;
        cfg.c_dist = self.c_dist;
        cfg.doubling_after = self.doubling_after;
        cfg.validate()?;
        Ok(cfg)
    }

    fn report_path(&self) -> PathBuf {
        self.report.clone().unwrap_or_else(|| sibling(&self.out, "report.json"))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Per-point predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Accuracy summary JSON; printed to stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Also report first-layer margins below 1e-12 on these points.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LowerboundArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write this many random hyperplanes (w ~ N(0, I), b ~ N(0, 1)).
    #[arg(long, requires = "planes_out")]
    pub planes: Option<usize>,
    #[arg(long)]
    pub planes_out: Option<PathBuf>,
    /// Run the pressure experiment with this many first-layer trials.
    #[arg(long, requires = "report")]
    pub pressure_trials: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 12.0)]
    pub band_constant: f64,
    #[arg(long, default_value_t = 8.0)]
    pub t: f64,
    /// Planes sampled for the near-center fraction.
    #[arg(long, default_value_t = 10_000)]
    pub band_planes: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SeparateArgs {
    #[arg(long)]
    pub points: PathBuf,
    /// JSON list of `{"normal": [...], "offset": b}`; normals are rescaled
    /// to unit length.
    #[arg(long)]
    pub planes: PathBuf,
    #[arg(long, value_enum, default_value = "opposite")]
    pub mode: Pairs,
    /// Also compute the exact minimum number of planes (d = 2, n ≤ 12).
    #[arg(long)]
    pub min: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BitsArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub d: u64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    /// Comma-separated δ values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub deltas: Vec<f64>,
    /// Seeds per δ.
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    /// Base seed; cell k uses a seed derived from it and k.
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "distance")]
    pub mode: Mode,
    /// Row table CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON with the fitted slope; printed to stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write artifacts here (same file names) instead of the recorded paths.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub wall_clock_secs: f64,
    pub tool_version: String,
}

/// A failed command: exit code plus the JSON printed on stdout.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: exit::CONTRACT,
            kind: "usage",
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure {
            code: exit::IO,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "exit_code": self.code, "message": self.message } })
    }
}

impl From<memnet::Error> for Failure {
    fn from(e: memnet::Error) -> Self {
        use memnet::Error as E;
        let (code, kind) = match &e {
            E::Io(_) => (exit::IO, "io"),
            E::Parse { .. } => (exit::CONTRACT, "parse"),
            E::NotSeparated(_) => (exit::CONTRACT, "not_separated"),
            E::InvalidInput(_) | E::DimensionMismatch { .. } | E::ZeroNorm { .. } => (exit::CONTRACT, "invalid_input"),
            E::Precondition(_) => (exit::CONTRACT, "precondition"),
            E::Infeasible { .. } => (exit::CONTRACT, "infeasible"),
            E::RetriesExhausted { .. } => (exit::RETRIES, "retries_exhausted"),
            E::InvariantBreach(_) => (exit::INVARIANT, "invariant_breach"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// What a command produced.
struct Done {
    seed: Option<u64>,
    artifacts: BTreeMap<String, PathBuf>,
    /// Directory for the default manifest; `None` for print-only commands.
    home: Option<PathBuf>,
    stdout: Option<Value>,
    summary: String,
}

impl Done {
    fn new(seed: Option<u64>, summary: String) -> Self {
        Done {
            seed,
            artifacts: BTreeMap::new(),
            home: None,
            stdout: None,
            summary,
        }
    }

    fn artifact(mut self, name: &str, path: &Path) -> Self {
        if self.home.is_none() {
            self.home = Some(path.parent().map(Path::to_path_buf).unwrap_or_default());
        }
        self.artifacts.insert(name.to_string(), path.to_path_buf());
        self
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Outcome<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn read_bytes(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn read_dataset(path: &Path) -> Outcome<geometry::CsvDataset> {
    let f = File::open(path).map_err(|e| Failure::io(path, e))?;
    geometry::read_csv(BufReader::new(f)).map_err(|e| in_file(path, e))
}

fn read_network(path: &Path) -> Outcome<netcore::ThresholdNetwork> {
    netcore::deserialize(&read_bytes(path)?).map_err(|e| in_file(path, e))
}

fn in_file(path: &Path, e: memnet::Error) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn cmd_generate(a: &GenerateArgs) -> Outcome<Done> {
    let mode = a.mode.with_delta(a.delta)?;
    let ds = geometry::generate_separated_dataset(a.n, a.d, mode, a.seed)?;
    let mut w = create(&a.out)?;
    geometry::write_csv(&ds, None, &mut w)?;
    w.flush().map_err(|e| Failure::io(&a.out, e))?;
    let ones = ds.labels().iter().filter(|l| **l).count();
    let summary = format!(
        "generated {} points in d={} ({} separation {}), {} labelled 1",
        ds.len(),
        ds.dim(),
        mode.name(),
        a.delta,
        ones
    );
    Ok(Done::new(Some(a.seed), summary).artifact("dataset", &a.out))
}

fn cmd_build(a: &BuildArgs) -> Outcome<Done> {
    let ds = read_dataset(&a.dataset)?.dataset;
    let cfg = a.config()?;
    let built = construct::construct_memorizer(&ds, &cfg)?;
    let report_path = a.report_path();
    write_bytes(&a.out, &netcore::serialize(&built.network))?;
    write_json(&report_path, &built.report)?;
    let r = &built.report;
    let summary = format!(
        "memorized {} points: {} layers, {} neurons (bound {}), {} weights; coding width {} after {} retries",
        r.n, r.totals.layers, r.totals.neurons, r.neuron_bound, r.totals.weights, r.d1, r.first_layer_retries
    );
    Ok(Done::new(Some(a.seed), summary)
        .artifact("network", &a.out)
        .artifact("report", &report_path))
}

#[derive(Debug, Serialize)]
struct PredictionRow {
    index: usize,
    label: u8,
    prediction: u8,
}

fn cmd_eval(a: &EvalArgs) -> Outcome<Done> {
    let net = read_network(&a.net)?;
    let ds = read_dataset(&a.dataset)?.dataset;
    let xs: Vec<&[f64]> = ds.features().collect();
    let preds = net.forward_batch(&xs)?;
    let labels = ds.labels();
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    for (i, (y, p)) in labels.iter().zip(&preds).enumerate() {
        w.serialize(PredictionRow {
            index: i,
            label: *y as u8,
            prediction: *p as u8,
        })
        .map_err(|e| Failure::io(&a.out, e.into()))?;
    }
    w.flush().map_err(|e| Failure::io(&a.out, e))?;
    let wrong: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != preds[i]).collect();
    let n = labels.len();
    let value = json!({
        "n": n,
        "correct": n - wrong.len(),
        "accuracy": (n - wrong.len()) as f64 / n as f64,
        "misclassified": wrong,
    });
    let summary = format!("{} of {} points classified correctly", n - wrong.len(), n);
    let mut done = Done::new(None, summary).artifact("predictions", &a.out);
    match &a.summary {
        Some(p) => {
            write_json(p, &value)?;
            done = done.artifact("summary", p);
        }
        None => done.stdout = Some(value),
    }
    Ok(done)
}

fn cmd_audit(a: &AuditArgs) -> Outcome<Done> {
    let net = read_network(&a.net)?;
    let totals = netcore::audit(&net);
    let layers: Vec<Value> = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({
                "index": i,
                "domain": l.domain(),
                "rows": l.rows(),
                "cols": l.cols(),
                "nonzero_weights": l.nonzero_weights(),
                "max_abs_integer_weight": l.max_abs_integer(),
            })
        })
        .collect();
    let warnings = match &a.dataset {
        Some(p) => {
            let ds = read_dataset(p)?.dataset;
            let xs: Vec<&[f64]> = ds.features().collect();
            Some(netcore::margin_warnings(&net, &xs, MARGIN_WARNING)?)
        }
        None => None,
    };
    let summary = format!(
        "{} layers, {} neurons, {} weights{}",
        totals.layers,
        totals.neurons,
        totals.weights,
        warnings
            .as_ref()
            .map(|w| format!(", {} margin warnings", w.len()))
            .unwrap_or_default()
    );
    let value = json!({ "totals": totals, "layers": layers, "margin_warnings": warnings });
    let mut done = Done::new(None, summary);
    match &a.out {
        Some(p) => {
            write_json(p, &value)?;
            done = done.artifact("audit", p);
        }
        None => done.stdout = Some(value),
    }
    Ok(done)
}

fn random_planes(n: usize, d: usize, seed: u64) -> memnet::Result<Vec<Hyperplane>> {
    let mut rng = rng::step_rng(rng::derive_seed(seed, 1), rng::stream::PRESSURE_PLANES);
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            Hyperplane::from_affine(&w, rng.sample(StandardNormal))
        })
        .collect()
}

fn cmd_lowerbound(a: &LowerboundArgs) -> Outcome<Done> {
    let cds = lowerbound::build_cluster_dataset(a.n, a.d, a.delta, a.seed)?;
    let mut w = create(&a.out)?;
    geometry::write_csv(&cds.to_dataset()?, Some(&cds.cluster_of), &mut w)?;
    w.flush().map_err(|e| Failure::io(&a.out, e))?;
    let mut summary = format!(
        "{} clusters of {} points in d={}",
        cds.centers.len(),
        a.n / cds.centers.len(),
        a.d
    );
    let mut done = Done::new(Some(a.seed), String::new()).artifact("dataset", &a.out);
    if let (Some(count), Some(path)) = (a.planes, &a.planes_out) {
        write_json(path, &random_planes(count, a.d, a.seed)?)?;
        done = done.artifact("planes", path);
    }
    if let (Some(trials), Some(path)) = (a.pressure_trials, &a.report) {
        let mut cfg = PressureConfig::new(trials, a.seed);
        cfg.band_constant = a.band_constant;
        cfg.t = a.t;
        cfg.planes = a.band_planes;
        let report = lowerbound::first_layer_pressure_experiment(&cds, &cfg)?;
        summary.push_str(&format!(
            "; near-center fraction {:.4}, mean coding width {:.1}",
            report.near_center_fraction, report.mean_m_used
        ));
        write_json(path, &report)?;
        done = done.artifact("pressure", path);
    }
    done.summary = summary;
    Ok(done)
}

#[derive(Deserialize)]
struct PlaneSpec {
    normal: Vec<f64>,
    offset: f64,
}

fn cmd_separate(a: &SeparateArgs) -> Outcome<Done> {
    let ds = read_dataset(&a.points)?.dataset;
    let specs: Vec<PlaneSpec> = serde_json::from_slice(&read_bytes(&a.planes)?).map_err(|e| Failure {
        code: exit::CONTRACT,
        kind: "parse",
        message: format!("{}: line {} column {}: {e}", a.planes.display(), e.line(), e.column()),
    })?;
    let planes = specs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.normal.len() != ds.dim() {
                return Err(Failure::from(memnet::Error::DimensionMismatch {
                    expected: ds.dim(),
                    got: p.normal.len(),
                }));
            }
            Hyperplane::from_affine(&p.normal, p.offset)
                .map_err(|e| in_file(&a.planes, e))
                .map_err(|mut f| {
                    f.message = format!("plane {i}: {}", f.message);
                    f
                })
        })
        .collect::<Outcome<Vec<_>>>()?;
    let points: Vec<Vec<f64>> = ds.features().map(<[f64]>::to_vec).collect();
    let labels = ds.labels();
    let count = lowerbound::count_separated_pairs(&points, &labels, &planes, a.mode.into())?;
    let min = if a.min {
        Some(lowerbound::min_hyperplanes_bruteforce(&points, &labels, a.mode.into())?)
    } else {
        None
    };
    let summary = format!(
        "{} of {} pairs separated by {} planes{}",
        count.separated,
        count.total,
        planes.len(),
        min.map(|m| format!("; minimum possible {m}")).unwrap_or_default()
    );
    let value = json!({
        "separated": count.separated,
        "total": count.total,
        "on_plane": count.on_plane,
        "min_hyperplanes": min,
    });
    let mut done = Done::new(None, summary);
    match &a.out {
        Some(p) => {
            write_json(p, &value)?;
            done = done.artifact("separation", p);
        }
        None => done.stdout = Some(value),
    }
    Ok(done)
}

fn cmd_bits(a: &BitsArgs) -> Outcome<Done> {
    let r = capacity::capacity_report(&CapacityQuery::new(a.n, a.d, a.delta)?)?;
    let value = json!({
        "lower_bits": r.lower.bits,
        "upper_bits": r.upper.bits,
        "flags": {
            "lower_degenerate": r.lower.degenerate,
            "upper_degenerate": r.upper.degenerate,
            "packing_lower_clamped": r.packing.lower_clamped,
            "bound_on_bound": true,
        },
        "packing_log2": { "lower": r.packing.lower_log2, "upper": r.packing.upper_log2 },
    });
    let summary = format!("between {:.3} and {:.3} bits", r.lower.bits, r.upper.bits);
    let mut done = Done::new(None, summary);
    match &a.out {
        Some(p) => {
            write_json(p, &value)?;
            done = done.artifact("bits", p);
        }
        None => done.stdout = Some(value),
    }
    Ok(done)
}

/// One cell of a sweep. Numeric fields are empty when the cell failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub seed_index: usize,
    pub seed: u64,
    pub status: String,
    pub first_layer_neurons: Option<usize>,
    pub first_layer_m_start: Option<usize>,
    pub total_neurons: Option<usize>,
    pub total_weights: Option<usize>,
    pub neuron_bound: Option<usize>,
    pub retries: Option<usize>,
    pub max_abs_integer_weight: Option<i64>,
    pub integer_weight_bound: Option<i64>,
}

fn sweep_cell(a: &SweepArgs, delta: f64, seed_index: usize) -> SweepRow {
    let seed = rng::derive_seed(a.seed, seed_index as u64);
    let mut row = SweepRow {
        delta,
        seed_index,
        seed,
        ..SweepRow::default()
    };
    let result = a.mode.with_delta(delta).and_then(|mode| {
        let ds = geometry::generate_separated_dataset(a.n, a.d, mode, seed)?;
        construct::construct_memorizer(&ds, &ConstructionConfig::new(mode, seed))
    });
    match result {
        Ok(c) => {
            let r = c.report;
            // the output layer's bias is the only integer entry that is not a weight
            let max_w = c.network.layers()[1..]
                .iter()
                .filter_map(|l| match l {
                    ThresholdLayer::Integer(il) => (0..il.rows()).flat_map(|i| il.row(i).map(|(_, v)| v.abs())).max(),
                    ThresholdLayer::Real(_) => None,
                })
                .max();
            row.status = "ok".into();
            row.first_layer_neurons = Some(r.d1);
            row.first_layer_m_start = Some(r.first_layer_m_start);
            row.total_neurons = Some(r.totals.neurons);
            row.total_weights = Some(r.totals.weights);
            row.neuron_bound = Some(r.neuron_bound);
            row.retries = Some(r.first_layer_retries + r.compression_retries);
            row.max_abs_integer_weight = max_w;
            row.integer_weight_bound = Some(r.integer_weight_bound);
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

/// Least-squares slope of ln(first-layer width) against ln(1/δ) over the
/// successful rows; `None` with fewer than two distinct δ.
pub fn loglog_slope(rows: &[SweepRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.first_layer_neurons.map(|m| ((1.0 / r.delta).ln(), (m as f64).ln())))
        .collect();
    let first = pts.first()?.0;
    if pts.iter().all(|p| p.0 == first) {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn cmd_sweep(a: &SweepArgs) -> Outcome<Done> {
    if a.deltas.is_empty() {
        return Err(Failure::usage("--deltas needs at least one value"));
    }
    if a.seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    let cells: Vec<(f64, usize)> = a
        .deltas
        .iter()
        .flat_map(|&d| (0..a.seeds).map(move |s| (d, s)))
        .collect();
    let rows: Vec<SweepRow> = cells.par_iter().map(|&(d, s)| sweep_cell(a, d, s)).collect();
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::io(&a.out, e.into()))?;
    }
    w.flush().map_err(|e| Failure::io(&a.out, e))?;
    let slope = loglog_slope(&rows);
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let within = rows
        .iter()
        .all(|r| r.total_neurons.zip(r.neuron_bound).is_none_or(|(t, b)| t <= b));
    let value = json!({
        "rows": rows.len(),
        "failed": failed,
        "slope": slope,
        "neurons_within_bound": within,
    });
    let summary = format!(
        "{} cells ({} failed), slope {}",
        rows.len(),
        failed,
        slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "undefined".into())
    );
    let mut done = Done::new(Some(a.seed), summary).artifact("table", &a.out);
    match &a.summary {
        Some(p) => {
            write_json(p, &value)?;
            done = done.artifact("summary", p);
        }
        None => done.stdout = Some(value),
    }
    Ok(done)
}

/// A command that can be recorded in a manifest.
enum Recorded {
    Generate(GenerateArgs),
    Build(BuildArgs),
    Eval(EvalArgs),
    Audit(AuditArgs),
    Lowerbound(LowerboundArgs),
    Separate(SeparateArgs),
    Bits(BitsArgs),
    Sweep(SweepArgs),
}

impl Recorded {
    fn name(&self) -> &'static str {
        match self {
            Recorded::Generate(_) => "generate",
            Recorded::Build(_) => "build",
            Recorded::Eval(_) => "eval",
            Recorded::Audit(_) => "audit",
            Recorded::Lowerbound(_) => "lowerbound",
            Recorded::Separate(_) => "separate",
            Recorded::Bits(_) => "bits",
            Recorded::Sweep(_) => "sweep",
        }
    }

    fn params(&self) -> Value {
        let v = match self {
            Recorded::Generate(a) => serde_json::to_value(a),
            Recorded::Build(a) => serde_json::to_value(a),
            Recorded::Eval(a) => serde_json::to_value(a),
            Recorded::Audit(a) => serde_json::to_value(a),
            Recorded::Lowerbound(a) => serde_json::to_value(a),
            Recorded::Separate(a) => serde_json::to_value(a),
            Recorded::Bits(a) => serde_json::to_value(a),
            Recorded::Sweep(a) => serde_json::to_value(a),
        };
        v.expect("arguments serialize")
    }

    fn from_manifest(m: &RunManifest) -> Outcome<Self> {
        fn parse<T: for<'de> Deserialize<'de>>(v: &Value) -> Outcome<T> {
            serde_json::from_value(v.clone()).map_err(|e| Failure {
                code: exit::CONTRACT,
                kind: "parse",
                message: format!("manifest params: {e}"),
            })
        }
        let p = &m.params;
        Ok(match m.command.as_str() {
            "generate" => Recorded::Generate(parse(p)?),
            "build" => Recorded::Build(parse(p)?),
            "eval" => Recorded::Eval(parse(p)?),
            "audit" => Recorded::Audit(parse(p)?),
            "lowerbound" => Recorded::Lowerbound(parse(p)?),
            "separate" => Recorded::Separate(parse(p)?),
            "bits" => Recorded::Bits(parse(p)?),
            "sweep" => Recorded::Sweep(parse(p)?),
            other => return Err(Failure::usage(format!("manifest names unknown command {other:?}"))),
        })
    }

    /// Output paths, so a rerun can move them.
    fn outputs(&mut self) -> Vec<&mut PathBuf> {
        let mut out: Vec<&mut PathBuf> = Vec::new();
        match self {
            Recorded::Generate(a) => out.push(&mut a.out),
            Recorded::Build(a) => {
                // pin the default so it follows --out-dir
                a.report = Some(a.report_path());
                out.push(&mut a.out);
                out.extend(a.report.as_mut());
            }
            Recorded::Eval(a) => {
                out.push(&mut a.out);
                out.extend(a.summary.as_mut());
            }
            Recorded::Audit(a) => out.extend(a.out.as_mut()),
            Recorded::Lowerbound(a) => {
                out.push(&mut a.out);
                out.extend(a.planes_out.as_mut());
                out.extend(a.report.as_mut());
            }
            Recorded::Separate(a) => out.extend(a.out.as_mut()),
            Recorded::Bits(a) => out.extend(a.out.as_mut()),
            Recorded::Sweep(a) => {
                out.push(&mut a.out);
                out.extend(a.summary.as_mut());
            }
        }
        out
    }

    fn run(&self) -> Outcome<Done> {
        match self {
            Recorded::Generate(a) => cmd_generate(a),
            Recorded::Build(a) => cmd_build(a),
            Recorded::Eval(a) => cmd_eval(a),
            Recorded::Audit(a) => cmd_audit(a),
            Recorded::Lowerbound(a) => cmd_lowerbound(a),
            Recorded::Separate(a) => cmd_separate(a),
            Recorded::Bits(a) => cmd_bits(a),
            Recorded::Sweep(a) => cmd_sweep(a),
        }
    }
}

fn read_manifest(path: &Path) -> Outcome<RunManifest> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| Failure {
        code: exit::CONTRACT,
        kind: "parse",
        message: format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()),
    })
}

fn resolve(cli: Cli) -> Outcome<(Recorded, Option<PathBuf>)> {
    let rec = match cli.command {
        Command::Generate(a) => Recorded::Generate(a),
        Command::Build(a) => Recorded::Build(a),
        Command::Eval(a) => Recorded::Eval(a),
        Command::Audit(a) => Recorded::Audit(a),
        Command::Lowerbound(a) => Recorded::Lowerbound(a),
        Command::Separate(a) => Recorded::Separate(a),
        Command::Bits(a) => Recorded::Bits(a),
        Command::Sweep(a) => Recorded::Sweep(a),
        Command::Rerun(r) => {
            let mut rec = Recorded::from_manifest(&read_manifest(&r.manifest)?)?;
            if let Some(dir) = &r.out_dir {
                for p in rec.outputs() {
                    let name = p.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
                    *p = dir.join(name);
                }
            }
            return Ok((rec, cli.manifest_out));
        }
    };
    Ok((rec, cli.manifest_out))
}

/// Runs one invocation, writing JSON to `stdout` and the human summary to
/// `stderr`. Returns the process exit code.
pub fn execute<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return exit::OK;
            }
            let _ = write!(stderr, "{}", e.render());
            let f = Failure::usage(e.kind().to_string());
            let _ = writeln!(stdout, "{}", f.to_json());
            return f.code;
        }
    };
    match run(cli) {
        Ok((summary, out)) => {
            if let Some(v) = out {
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&v).expect("json"));
            }
            let _ = writeln!(stderr, "{summary}");
            exit::OK
        }
        Err(f) => {
            let _ = writeln!(stdout, "{}", f.to_json());
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn run(cli: Cli) -> Outcome<(String, Option<Value>)> {
    let (rec, manifest_path) = resolve(cli)?;
    let start = Instant::now();
    let done = rec.run()?;
    let manifest = RunManifest {
        command: rec.name().to_string(),
        params: rec.params(),
        seed: done.seed,
        artifacts: done.artifacts,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let target = manifest_path.or_else(|| done.home.map(|h| h.join("manifest.json")));
    let mut stdout = done.stdout;
    match target {
        Some(p) => write_json(&p, &manifest)?,
        None => {
            let v = stdout.get_or_insert_with(|| json!({}));
            if let Value::Object(map) = v {
                map.insert("manifest".into(), serde_json::to_value(&manifest).expect("json"));
            }
        }
    }
    Ok((done.summary, stdout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(delta: f64, m: Option<usize>) -> SweepRow {
        SweepRow {
            delta,
            first_layer_neurons: m,
            ..SweepRow::default()
        }
    }

    #[test]
    fn slope_of_exact_inverse_law_is_one() {
        let rows: Vec<SweepRow> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&d| row(d, Some((100.0 / d) as usize)))
            .collect();
        assert!((loglog_slope(&rows).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_needs_two_deltas() {
        assert_eq!(loglog_slope(&[row(0.1, Some(5)), row(0.1, Some(7))]), None);
        assert_eq!(loglog_slope(&[row(0.1, Some(5)), row(0.2, None)]), None);
        assert_eq!(loglog_slope(&[]), None);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        use memnet::Error as E;
        assert_eq!(Failure::from(E::NotSeparated("x".into())).code, exit::CONTRACT);
        let io = E::Io(std::io::Error::other("x"));
        assert_eq!(Failure::from(io).code, exit::IO);
        let r = E::RetriesExhausted {
            step: "first_layer",
            attempts: 1,
            detail: String::new(),
        };
        assert_eq!(Failure::from(r).code, exit::RETRIES);
        assert_eq!(Failure::from(E::InvariantBreach("x".into())).code, exit::INVARIANT);
    }

    #[test]
    fn outputs_follow_out_dir() {
        let mut rec = Recorded::Build(BuildArgs {
            dataset: "in/ds.csv".into(),
            mode: Mode::Distance,
            delta: 0.2,
            seed: 1,
            out: "old/net.json".into(),
            report: None,
            eps1: 0.1,
            eps2: 0.1,
            max_retries: 20,
            c_dist: 13.0,
            doubling_after: 3,
        });
        let outs: Vec<PathBuf> = rec.outputs().into_iter().map(|p| p.clone()).collect();
        assert_eq!(
            outs,
            vec![PathBuf::from("old/net.json"), PathBuf::from("old/report.json")]
        );
    }
}
