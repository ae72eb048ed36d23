use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pipeline::report::RunRecord;
use crate::pipeline::run::{run_unit, Method, RunConfig};
use crate::pipeline::synth::{generate_synthetic, SynthSpec};

/// Comparison grid over synthetic instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Instance template; its seed is replaced by each entry of `seeds`.
    pub synth: SynthSpec,
    pub gammas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Template for every cell; method, gamma, rho and seed are overridden.
    pub base: RunConfig,
}

/// Cells in output order: seed, then gamma, then method, then rho (sparse
/// method only).
pub fn bench_cells(cfg: &BenchConfig) -> Vec<(u64, RunConfig)> {
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        for &gamma in &cfg.gammas {
            for &method in &cfg.methods {
                let rhos: &[f64] = if method == Method::Cospadi { &cfg.rhos } else { &[f64::NAN] };
                for &rho in rhos {
                    let mut run = cfg.base.clone();
                    run.method = method;
                    run.gamma = gamma;
                    if method == Method::Cospadi {
                        run.rho = rho;
                    }
                    run.options.seed = seed;
                    cells.push((seed, run));
                }
            }
        }
    }
    cells
}

/// Runs every cell in parallel; rows come back in configuration order.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<RunRecord>> {
    if cfg.gammas.is_empty() || cfg.methods.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidConfig("bench grid is empty".into()));
    }
    if cfg.methods.contains(&Method::Cospadi) && cfg.rhos.is_empty() {
        return Err(Error::InvalidConfig("the cospadi method needs at least one k/s ratio".into()));
    }
    let instances = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut spec = cfg.synth.clone();
            spec.seed = seed;
            generate_synthetic(&spec).map(|wx| (seed, wx))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = bench_cells(cfg)
        .par_iter()
        .map(|(seed, run)| {
            let (_, (w, x)) = instances.iter().find(|(s, _)| s == seed).expect("instance per seed");
            let name = format!("{}_s{seed}", cfg.synth.kind.as_str());
            run_unit(&[(name.as_str(), w, x)], run).map(|u| u.records)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Parses `start:stop:step` (inclusive) or a comma list.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("cannot parse sweep {spec:?}"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.len() {
        1 => spec.split(',').map(parse).collect(),
        3 => {
            let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(bad()),
    }
}
