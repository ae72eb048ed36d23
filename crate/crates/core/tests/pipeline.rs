mod common;

use common::{random, rel_close};
use cospadi::factorizer::{compress_layer, CompressOptions};
use cospadi::linalg::DenseMatrix;
use cospadi::pipeline::bench::{run_bench, BenchConfig};
use cospadi::pipeline::cli::run_cli;
use cospadi::pipeline::report::{read_csv, strip_timing, to_csv_string};
use cospadi::pipeline::tensors::{decode_tensors, encode_tensors};
use cospadi::pipeline::{
    compress_group, generate_synthetic, ingest_tensors, run_unit, write_tensors, Artifact, Dtype, LayerGroup, Method,
    RunConfig, SynthKind, SynthSpec,
};
use cospadi::planner::{plan_sparse, plan_sparse_grouped, MaskMode};
use cospadi::Error;

fn opts() -> CompressOptions {
    CompressOptions {
        iters: 20,
        ..CompressOptions::default()
    }
}

#[test]
fn singleton_group_matches_single_layer_bitwise() {
    let w = random(12, 30, 1);
    let x = random(60, 12, 2);
    let plan = plan_sparse(12, 30, 0.3, 2.0, MaskMode::NoMask).unwrap();
    let single = compress_layer(&w, &x, &plan, &opts()).unwrap();
    let g = LayerGroup::new("g", vec!["w".into()], vec![w.clone()], vec![x.clone()]).unwrap();
    let grouped = compress_group(&g, &plan, &opts()).unwrap();
    assert_eq!(grouped.factorization.dictionary, single.factorization.dictionary);
    assert_eq!(grouped.factorization.codes, single.factorization.codes);
}

#[test]
fn duplicate_layers_get_identical_slices() {
    let w = random(10, 20, 3);
    let x = random(50, 10, 4);
    let g = LayerGroup::new("g", vec!["a".into(), "b".into()], vec![w.clone(), w.clone()], vec![x.clone(), x]).unwrap();
    let plan = plan_sparse_grouped(10, 20, 2, 0.3, 2.0, MaskMode::NoMask).unwrap();
    let out = compress_group(&g, &plan, &opts()).unwrap();
    assert_eq!(out.factorization.layer_codes(0), out.factorization.layer_codes(1));
    assert_eq!(out.layer_errors[0], out.layer_errors[1]);
}

#[test]
fn grouped_objective_splits_over_layers() {
    let ws: Vec<DenseMatrix> = (0..3).map(|i| random(10, 14, 10 + i)).collect();
    let xs: Vec<DenseMatrix> = (0..3).map(|i| random(30, 10, 20 + i)).collect();
    let g = LayerGroup::new("g", vec!["a".into(), "b".into(), "c".into()], ws.clone(), xs).unwrap();
    let plan = plan_sparse_grouped(10, 14, 3, 0.3, 2.0, MaskMode::NoMask).unwrap();
    let out = compress_group(&g, &plan, &opts()).unwrap();
    let x_g = g.stacked_calibration();
    let per_layer: f64 = (0..3)
        .map(|i| {
            let approx = out.factorization.layer_codes(i).reconstruct(&out.factorization.dictionary).unwrap();
            x_g.matmul(&ws[i].sub(&approx).unwrap()).unwrap().frobenius_norm().powi(2)
        })
        .sum();
    let total = out.report.final_objective().powi(2);
    assert!(rel_close(total, per_layer, 1e-7), "{total} vs {per_layer}");
}

#[test]
fn mismatched_groups_are_rejected() {
    let a = random(10, 14, 1);
    let b = random(8, 14, 2);
    let x = random(30, 10, 3);
    assert!(matches!(
        LayerGroup::new("g", vec!["a".into(), "b".into()], vec![a.clone(), b], vec![x.clone(), x.clone()]),
        Err(Error::GroupShape(_))
    ));
    let g = LayerGroup::new("g", vec!["a".into()], vec![a], vec![x]).unwrap();
    let plan = plan_sparse_grouped(10, 14, 2, 0.3, 2.0, MaskMode::NoMask).unwrap();
    assert!(matches!(compress_group(&g, &plan, &opts()), Err(Error::GroupShape(_))));
}

#[test]
fn synthetic_generators_are_seeded_and_shaped() {
    for kind in [SynthKind::SharedSubspace, SynthKind::UnionOfSubspaces, SynthKind::HeavyTailed] {
        let spec = SynthSpec {
            seed: 7,
            ..SynthSpec::new(kind, 16, 24, 40)
        };
        let (w, x) = generate_synthetic(&spec).unwrap();
        assert_eq!(w.shape(), (16, 24));
        assert_eq!(x.shape(), (40, 16));
        assert_eq!(generate_synthetic(&spec).unwrap(), (w.clone(), x));
        let other = generate_synthetic(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(other.0, w);
    }
    let bad = SynthSpec::new(SynthKind::UnionOfSubspaces, 8, 24, 40);
    assert!(generate_synthetic(&SynthSpec { subspaces: 4, rank: 3, ..bad }).is_err());
    assert!(generate_synthetic(&SynthSpec::new(SynthKind::SharedSubspace, 16, 24, 8)).is_err());
}

#[test]
fn low_rank_synthetic_weights_compress_to_near_zero_error() {
    let spec = SynthSpec {
        rank: 2,
        seed: 1,
        ..SynthSpec::new(SynthKind::SharedSubspace, 8, 8, 32)
    };
    let (w, x) = generate_synthetic(&spec).unwrap();
    let out = run_unit(&[("w", &w, &x)], &RunConfig::new(Method::SvdDataAware, 0.5)).unwrap();
    assert_eq!(out.records[0].r, Some(2));
    assert!(out.records[0].relative_activation_error < 1e-2);
}

#[test]
fn tensor_files_roundtrip_each_dtype() {
    let a = random(3, 5, 1);
    let bytes = encode_tensors(&[("a64", &a, Dtype::F64), ("a32", &a, Dtype::F32), ("a16", &a, Dtype::Bf16)]).unwrap();
    let set = decode_tensors(&bytes).unwrap();
    assert_eq!(set.names(), ["a64", "a32", "a16"]);
    assert_eq!(set.get("a64").unwrap(), &a);
    assert!(set.get("a32").unwrap().max_abs_diff(&a) < 1e-6 * a.max_abs());
    assert!(set.get("a16").unwrap().max_abs_diff(&a) < 1e-2 * a.max_abs());
    for cut in [1, 9, bytes.len() - 1] {
        assert!(decode_tensors(&bytes[..cut]).is_err());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.bin");
    write_tensors(&path, &[("a", &a, Dtype::F64)]).unwrap();
    assert_eq!(ingest_tensors(&path).unwrap().require("a").unwrap(), &a);
    assert!(matches!(ingest_tensors(&path).unwrap().require("b"), Err(Error::Ingest { .. })));
}

#[test]
fn csv_reports_roundtrip() {
    let w = random(8, 16, 1);
    let x = random(30, 8, 2);
    let rec = run_unit(&[("w", &w, &x)], &RunConfig::new(Method::Cospadi, 0.3)).unwrap().records;
    let text = to_csv_string(&rec).unwrap();
    assert_eq!(read_csv(&text).unwrap(), rec);
    assert_eq!(strip_timing(&text).lines().count(), 2);
}

#[test]
fn bench_is_deterministic_modulo_timing() {
    let cfg = BenchConfig {
        synth: SynthSpec::new(SynthKind::UnionOfSubspaces, 12, 24, 48),
        gammas: vec![0.2, 0.4],
        rhos: vec![2.0],
        methods: vec![Method::Cospadi, Method::SvdDataAware],
        seeds: vec![0, 1],
        base: RunConfig {
            options: opts(),
            ..RunConfig::new(Method::Cospadi, 0.2)
        },
    };
    let a = run_bench(&cfg).unwrap();
    let b = run_bench(&cfg).unwrap();
    assert_eq!(a.len(), 8);
    assert_eq!(strip_timing(&to_csv_string(&a).unwrap()), strip_timing(&to_csv_string(&b).unwrap()));
    assert_eq!(a[0].method, "cospadi");
    assert_eq!(a[1].method, "svd-data-aware");
}

fn argv(parts: &[&str]) -> Vec<String> {
    std::iter::once("cospadi").chain(parts.iter().copied()).map(String::from).collect()
}

#[test]
fn cli_compress_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let data = p("data.bin");
    assert_eq!(run_cli(&argv(&["synth", "--d1", "12", "--d2", "24", "--n", "48", "--seed", "3", "--out", &data])), 0);
    for method in ["cospadi", "svd-data-aware"] {
        let out = p(&format!("{method}.out"));
        let (c_csv, e_csv) = (p(&format!("{method}.c.csv")), p(&format!("{method}.e.csv")));
        let code = run_cli(&argv(&[
            "compress", "--weights", &data, "--calib", &data, "--gamma", "0.3", "--method", method, "--iters", "10", "--out",
            &out, "--report-csv", &c_csv,
        ]));
        assert_eq!(code, 0, "{method}");
        assert_eq!(
            run_cli(&argv(&["eval", "--weights", &data, "--calib", &data, "--compressed", &out, "--report-csv", &e_csv])),
            0
        );
        let c = read_csv(&std::fs::read_to_string(&c_csv).unwrap()).unwrap();
        let e = read_csv(&std::fs::read_to_string(&e_csv).unwrap()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].activation_error_fro, e[0].activation_error_fro);
        assert_eq!(c[0].multiply_count, e[0].multiply_count);
    }
    assert_eq!(run_cli(&argv(&["compress", "--weights", &data, "--calib", &data, "--gamma", "1.5", "--out", &p("x")])), 2);
    assert_eq!(run_cli(&argv(&["eval", "--weights", &data, "--calib", &data, "--compressed", &data])), 3);
    assert_eq!(run_cli(&argv(&["eval", "--weights", &p("missing"), "--calib", &data, "--compressed", &data])), 3);
}

#[test]
fn cli_groups_write_one_artifact_per_unit() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (a, b, c) = (random(8, 12, 1), random(8, 12, 2), random(8, 12, 3));
    let x = random(30, 8, 4);
    write_tensors(dir.path().join("w.bin").as_path(), &[("a", &a, Dtype::F64), ("b", &b, Dtype::F64), ("c", &c, Dtype::F32)]).unwrap();
    write_tensors(dir.path().join("x.bin").as_path(), &[("x", &x, Dtype::F64)]).unwrap();
    let code = run_cli(&argv(&[
        "compress", "--weights", &p("w.bin"), "--calib", &p("x.bin"), "--gamma", "0.3", "--iters", "5", "--group", "a,b", "--out",
        &p("m.cospadi"), "--report-csv", &p("r.csv"),
    ]));
    assert_eq!(code, 0);
    let bytes = std::fs::read(dir.path().join("m.a+b.cospadi")).unwrap();
    let packed = cospadi::codec::deserialize(&bytes).unwrap();
    assert_eq!(packed.layers.iter().map(|l| l.name.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert!(dir.path().join("m.c.cospadi").exists());
    let rows = read_csv(&std::fs::read_to_string(p("r.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    let code = run_cli(&argv(&["compress", "--weights", &p("w.bin"), "--calib", &p("x.bin"), "--gamma", "0.3", "--group", "a,zz", "--out", &p("n")]));
    assert_eq!(code, 2);
}

#[test]
fn run_unit_artifacts_match_the_method() {
    let w = random(8, 16, 1);
    let x = random(30, 8, 2);
    assert!(matches!(run_unit(&[("w", &w, &x)], &RunConfig::new(Method::Cospadi, 0.3)).unwrap().artifact, Artifact::Sparse(_)));
    assert!(matches!(run_unit(&[("w", &w, &x)], &RunConfig::new(Method::Svd, 0.3)).unwrap().artifact, Artifact::LowRank { .. }));
}
