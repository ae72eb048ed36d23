use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::codec::{deserialize, serialize, MAGIC};
use crate::error::{Error, Result};
use crate::factorizer::{CompressOptions, InitStrategy};
use crate::linalg::DenseMatrix;
use crate::pipeline::bench::{parse_sweep, run_bench, BenchConfig};
use crate::pipeline::report::{to_csv_string, to_json_string, RunRecord};
use crate::pipeline::run::{evaluate_lowrank, evaluate_sparse, run_unit, Artifact, Member, Method, RunConfig};
use crate::pipeline::synth::{generate_synthetic, SynthKind, SynthSpec};
use crate::pipeline::tensors::{decode_tensors, ingest_tensors, write_tensors, Dtype, TensorSet, TENSOR_MAGIC};
use crate::planner::{plan_lowrank, plan_sparse_grouped, MaskMode};
use crate::whitening::WhitenMethod;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Calibration tensor shared by every layer that has no calibration of its own.
/// A layer `name` picks up `x.name` first.
pub const SHARED_CALIBRATION: &str = "x";

#[derive(Parser, Debug)]
#[command(name = "cospadi", version, about = "Activation-aware sparse dictionary compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the sizing plan for a layer as JSON.
    Plan(PlanArgs),
    /// Compress the layers of a tensor file.
    Compress(CompressArgs),
    /// Recompute errors and multiply counts from stored artifacts.
    Eval(EvalArgs),
    /// Write a synthetic weight/calibration pair (tensors `w` and `x`).
    Synth(SynthArgs),
    /// Run a comparison grid on synthetic instances.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    d1: usize,
    /// Columns per layer.
    #[arg(long)]
    d2: usize,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    #[arg(long, default_value = "no_mask")]
    mode: MaskMode,
    /// cospadi or lowrank.
    #[arg(long, default_value = "cospadi")]
    method: String,
    #[arg(long, default_value_t = 1)]
    group_size: usize,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    #[arg(long, default_value = "no_mask")]
    mask_mode: MaskMode,
    #[arg(long, default_value_t = 0)]
    truncate_bits: u32,
    #[arg(long, default_value_t = 60)]
    iters: usize,
    #[arg(long, default_value_t = 8)]
    power_iters: usize,
    #[arg(long, default_value = "column_sample")]
    init: InitStrategy,
    #[arg(long, default_value = "cholesky")]
    whiten: WhitenMethod,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
}

impl FitArgs {
    fn run_config(&self, method: Method, gamma: f64, seed: u64) -> RunConfig {
        RunConfig {
            method,
            gamma,
            rho: self.rho,
            mask_mode: self.mask_mode,
            truncate_bits: self.truncate_bits,
            options: CompressOptions {
                whiten: self.whiten,
                damping: self.damping,
                iters: self.iters,
                power_iters: self.power_iters,
                init: self.init,
                seed,
                ..CompressOptions::default()
            },
        }
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    report_csv: Option<PathBuf>,
    #[arg(long)]
    report_json: Option<PathBuf>,
}

impl ReportArgs {
    fn emit(&self, records: &[RunRecord]) -> Result<()> {
        if let Some(p) = &self.report_csv {
            std::fs::write(p, to_csv_string(records)?)?;
        }
        if let Some(p) = &self.report_json {
            std::fs::write(p, to_json_string(records)?)?;
        }
        if self.report_csv.is_none() && self.report_json.is_none() {
            print!("{}", to_csv_string(records)?);
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value = "cospadi")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated layer names sharing one dictionary; repeatable.
    #[arg(long)]
    group: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    compressed: Vec<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Args, Debug)]
struct SynthShape {
    #[arg(long, default_value = "union_of_subspaces")]
    kind: SynthKind,
    #[arg(long)]
    d1: usize,
    #[arg(long)]
    d2: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    cond: f64,
    /// Subspace dimension.
    #[arg(long, default_value_t = 3)]
    rank: usize,
    #[arg(long, default_value_t = 4)]
    subspaces: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Student-t degrees of freedom.
    #[arg(long, default_value_t = 3.0)]
    dof: f64,
}

impl SynthShape {
    fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            kind: self.kind,
            d1: self.d1,
            d2: self.d2,
            n: self.n,
            rank: self.rank,
            subspaces: self.subspaces,
            noise: self.noise,
            cond: self.cond,
            dof: self.dof,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    shape: SynthShape,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// `gamma=start:stop:step` or `gamma=a,b,c`.
    #[arg(long, default_value = "gamma=0.2:0.5:0.1")]
    sweep: String,
    #[arg(long, default_value = "2")]
    rho_list: String,
    #[arg(long, default_value = "cospadi,svd-data-aware")]
    methods: String,
    #[arg(long, default_value = "0")]
    seeds: String,
    #[command(flatten)]
    shape: SynthShape,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    report: ReportArgs,
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code.
pub fn run_cli(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = thread_pool().and_then(|pool| match pool {
        Some(pool) => pool.install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_DATA
            }
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let threads = match std::env::var("COSPADI_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("COSPADI_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    if threads == 0 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Plan(a) => cmd_plan(&a),
        Command::Compress(a) => cmd_compress(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let plan = match a.method.as_str() {
        "cospadi" => plan_sparse_grouped(a.d1, a.d2, a.group_size, a.gamma, a.rho, a.mode)?,
        "lowrank" => plan_lowrank(a.d1, a.d2, a.gamma)?,
        other => return Err(Error::InvalidConfig(format!("unknown plan method {other:?}"))),
    };
    println!("{}", serde_json::to_string_pretty(&plan).map_err(|e| Error::Io(e.to_string()))?);
    Ok(())
}

fn calibration_for<'a>(calib: &'a TensorSet, layer: &str) -> Result<&'a DenseMatrix> {
    let own = format!("{SHARED_CALIBRATION}.{layer}");
    calib
        .get(&own)
        .or_else(|| calib.get(SHARED_CALIBRATION))
        .ok_or_else(|| Error::Ingest {
            tensor: layer.to_string(),
            reason: format!("no calibration tensor named {own:?} or {SHARED_CALIBRATION:?}"),
        })
}

fn is_calibration_name(name: &str) -> bool {
    name == SHARED_CALIBRATION || name.starts_with("x.")
}

/// Layers of a weight file, excluding calibration tensors.
fn layer_names(weights: &TensorSet) -> Vec<String> {
    weights
        .names()
        .iter()
        .filter(|n| !is_calibration_name(n))
        .cloned()
        .collect()
}

/// Splits layers into compression units: each `--group` is one unit, every
/// remaining layer its own. Units are ordered by their first member.
fn units(layers: &[String], groups: &[String]) -> Result<Vec<Vec<String>>> {
    let mut assigned: Vec<Option<usize>> = vec![None; layers.len()];
    let mut out: Vec<Vec<String>> = Vec::new();
    for g in groups {
        let members: Vec<String> = g.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if members.is_empty() {
            return Err(Error::InvalidConfig(format!("empty group {g:?}")));
        }
        for m in &members {
            let pos = layers
                .iter()
                .position(|l| l == m)
                .ok_or_else(|| Error::InvalidConfig(format!("group member {m:?} is not a layer of the weight file")))?;
            if assigned[pos].is_some() {
                return Err(Error::InvalidConfig(format!("layer {m:?} appears in more than one group")));
            }
            assigned[pos] = Some(out.len());
        }
        out.push(members);
    }
    let mut ordered = Vec::new();
    let mut emitted = vec![false; out.len()];
    for (i, layer) in layers.iter().enumerate() {
        match assigned[i] {
            Some(g) if !emitted[g] => {
                emitted[g] = true;
                ordered.push(out[g].clone());
            }
            Some(_) => {}
            None => ordered.push(vec![layer.clone()]),
        }
    }
    Ok(ordered)
}

fn artifact_path(out: &Path, unit: &[String], total_units: usize) -> PathBuf {
    if total_units == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{}.cospadi", unit.join("+")))
}

fn cmd_compress(a: &CompressArgs) -> Result<()> {
    let weights = ingest_tensors(&a.weights)?;
    let calib = ingest_tensors(&a.calib)?;
    let layers = layer_names(&weights);
    if layers.is_empty() {
        return Err(Error::Ingest {
            tensor: "<file>".into(),
            reason: "weight file holds no layers".into(),
        });
    }
    let units = units(&layers, &a.group)?;
    if a.method != Method::Cospadi && units.iter().any(|u| u.len() > 1) {
        return Err(Error::InvalidConfig("layer groups apply to the cospadi method only".into()));
    }
    let cfg = a.fit.run_config(a.method, a.gamma, a.seed);
    let mut records = Vec::new();
    let mut lowrank: Vec<(String, DenseMatrix, DenseMatrix)> = Vec::new();
    for unit in &units {
        let members = unit
            .iter()
            .map(|name| Ok((name.as_str(), weights.require(name)?, calibration_for(&calib, name)?)))
            .collect::<Result<Vec<Member<'_>>>>()?;
        let result = run_unit(&members, &cfg)?;
        match result.artifact {
            Artifact::Sparse(p) => {
                let path = artifact_path(&a.out, unit, units.len());
                std::fs::write(&path, serialize(&p)?)?;
                eprintln!("wrote {}", path.display());
            }
            Artifact::LowRank { name, b, c } => lowrank.push((name, b, c)),
        }
        records.extend(result.records);
    }
    if !lowrank.is_empty() {
        let names: Vec<(String, String)> = lowrank.iter().map(|(n, _, _)| (format!("{n}.b"), format!("{n}.c"))).collect();
        let mut entries = Vec::new();
        for ((_, b, c), (nb, nc)) in lowrank.iter().zip(&names) {
            entries.push((nb.as_str(), b, Dtype::Bf16));
            entries.push((nc.as_str(), c, Dtype::Bf16));
        }
        write_tensors(&a.out, &entries)?;
        eprintln!("wrote {}", a.out.display());
    }
    a.report.emit(&records)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let weights = ingest_tensors(&a.weights)?;
    let calib = ingest_tensors(&a.calib)?;
    let mut records = Vec::new();
    for path in &a.compressed {
        let start = Instant::now();
        let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if bytes.starts_with(MAGIC) {
            let packed = deserialize(&bytes)?;
            let members = packed
                .layers
                .iter()
                .map(|l| Ok((l.name.as_str(), weights.require(&l.name)?, calibration_for(&calib, &l.name)?)))
                .collect::<Result<Vec<Member<'_>>>>()?;
            let mut rows = evaluate_sparse(&packed, &members, 0.0)?;
            let elapsed = start.elapsed().as_secs_f64();
            rows.iter_mut().for_each(|r| r.wall_seconds = elapsed);
            records.extend(rows);
        } else if bytes.starts_with(TENSOR_MAGIC) {
            let factors = decode_tensors(&bytes)?;
            if !factors.names().iter().any(|n| n.ends_with(".b")) {
                return Err(Error::Ingest {
                    tensor: path.display().to_string(),
                    reason: "file holds no low-rank factors".into(),
                });
            }
            for name in factors.names().iter().filter_map(|n| n.strip_suffix(".b")) {
                let b = factors.require(&format!("{name}.b"))?;
                let c = factors.require(&format!("{name}.c"))?;
                let mut rec = evaluate_lowrank(
                    name,
                    b,
                    c,
                    weights.require(name)?,
                    calibration_for(&calib, name)?,
                    0.0,
                )?;
                rec.wall_seconds = start.elapsed().as_secs_f64();
                records.push(rec);
            }
        } else {
            return Err(Error::NotACospadiFile);
        }
    }
    a.report.emit(&records)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let (w, x) = generate_synthetic(&a.shape.spec(a.seed))?;
    write_tensors(&a.out, &[("w", &w, Dtype::F64), (SHARED_CALIBRATION, &x, Dtype::F64)])?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> Result<Vec<T>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse {what} {s:?}")))
        })
        .collect()
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let gammas = match a.sweep.split_once('=') {
        Some(("gamma", range)) => parse_sweep(range)?,
        _ => return Err(Error::InvalidConfig(format!("sweep must look like gamma=..., got {:?}", a.sweep))),
    };
    let methods = a
        .methods
        .split(',')
        .map(|m| m.trim().parse())
        .collect::<Result<Vec<Method>>>()?;
    let cfg = BenchConfig {
        synth: a.shape.spec(0),
        gammas,
        rhos: parse_sweep(&a.rho_list)?,
        methods,
        seeds: parse_list(&a.seeds, "seed")?,
        base: a.fit.run_config(Method::Cospadi, 0.0, 0),
    };
    a.report.emit(&run_bench(&cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn unit_grouping() {
        let layers = s(&["q", "k", "v", "o"]);
        assert_eq!(
            units(&layers, &s(&["k,v"])).unwrap(),
            vec![s(&["q"]), s(&["k", "v"]), s(&["o"])]
        );
        assert_eq!(
            units(&layers, &s(&["o,q"])).unwrap(),
            vec![s(&["o", "q"]), s(&["k"]), s(&["v"])]
        );
        assert!(units(&layers, &s(&["q,k", "k,v"])).is_err());
        assert!(units(&layers, &s(&["z"])).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_cli(&s(&["cospadi", "plan", "--bogus"])), EXIT_CONFIG);
        assert_eq!(run_cli(&s(&["cospadi"])), EXIT_CONFIG);
        assert_eq!(run_cli(&s(&["cospadi", "plan", "--d1", "4", "--d2", "4", "--gamma", "1.5"])), EXIT_CONFIG);
    }
}
