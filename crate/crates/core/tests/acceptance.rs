//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use sigma_lowrank::conv::{
    conv_direct, conv_im2col, cp_forward, im2col, tucker2_forward, ConvSpec, Image,
};
use sigma_lowrank::covariance::{sigma_norm, Normalization, SigmaAccumulator};
use sigma_lowrank::decomp::{
    cp_als, cp_als_sigma, cp_rank_max, greedy_deflation_sigma, svd_sigma, tucker2_als,
    tucker2_als_sigma, wals_tucker2, AlsConfig, Init, SigmaProblem,
};
use sigma_lowrank::linalg::{truncated_svd, SymSolveConfig};
use sigma_lowrank::pipeline::{write_matrix, write_tensor, Array};
use sigma_lowrank::rank::{r_alpha, vbmf_rank};
use sigma_lowrank::tensor::{cp_reconstruct, tucker2_reconstruct};
use sigma_lowrank::{Mat, SigmaRoot, Tensor4};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let spent = start.elapsed();
    ensure(spent < limit, || {
        format!("took {spent:.1?}, limit {limit:?}")
    })
}

fn exact_root(sigma: &Mat) -> SigmaRoot {
    let cfg = SymSolveConfig {
        epsilon_scale: 0.0,
        ..Default::default()
    };
    SigmaRoot::from_sigma_auto(sigma, &cfg).unwrap()
}

fn functional_norm_identity() -> Result<String, String> {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dims = rand_dims(&mut r, [4, 4, 3, 3]);
        let spec = ConvSpec::valid(dims);
        let k = rand_tensor(&mut r, dims);
        let kt = rand_tensor(&mut r, dims);
        let mut acc = SigmaAccumulator::new(dims[1] * dims[2] * dims[3]);
        let (mut sq, mut positions) = (0.0, 0usize);
        for _ in 0..200 {
            let data = (0..dims[1] * 64)
                .map(|_| r.random_range(-1.0..1.0))
                .collect();
            let x = Image::new(dims[1], 8, 8, data).unwrap();
            acc.add_patches(&im2col(&x, &spec).unwrap()).unwrap();
            let y = conv_direct(&k, &x, &spec).unwrap();
            let yt = conv_direct(&kt, &x, &spec).unwrap();
            sq += y
                .data()
                .iter()
                .zip(yt.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            positions += y.height() * y.width();
        }
        let empirical = (sq / positions as f64).sqrt();
        let root = exact_root(&acc.finalize(Normalization::Mean).unwrap());
        let ours = sigma_norm(&k, &kt, &root).unwrap();
        worst = worst.max((ours - empirical).abs() / empirical);
    }
    ensure(worst <= 1e-6, || {
        format!("worst relative gap {worst:e} > 1e-6")
    })?;
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "20 instances, worst relative gap {worst:.2e}, {:.1?}",
        start.elapsed()
    ))
}

fn fixed_sweeps(seed: u64) -> AlsConfig {
    AlsConfig {
        max_sweeps: 25,
        rel_tol: f64::MIN_POSITIVE,
        init: Init::Random(seed),
        ..Default::default()
    }
}

fn frobenius_reduction() -> Result<String, String> {
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let dims = [
            r.random_range(2..=4),
            r.random_range(2..=3),
            r.random_range(2..=3),
            r.random_range(1..=3),
        ];
        let k = rand_tensor(&mut r, dims);
        let id = SigmaRoot::identity(dims[1] * dims[2] * dims[3]);
        let floor = 1e-9 * k.frobenius_norm();

        let rank = r.random_range(1..=3usize.min(cp_rank_max(dims)));
        let cfg = fixed_sweeps(i);
        let a = cp_als(&k, rank, &cfg).unwrap().final_objective();
        let b = cp_als_sigma(&k, &id, rank, &cfg).unwrap().final_objective();
        let gap = (a - b).abs() / a.max(floor);
        ensure(gap <= 1e-6, || {
            format!("CP instance {i} {dims:?} R={rank}: {a} vs {b}")
        })?;
        worst = worst.max(gap);

        let rt = r.random_range(1..dims[0]);
        let rs = r.random_range(1..=dims[1]);
        let a = tucker2_als(&k, rt, rs, &cfg).unwrap().final_objective();
        let b = tucker2_als_sigma(&k, &id, rt, rs, &cfg)
            .unwrap()
            .final_objective();
        let gap = (a - b).abs() / a.max(floor);
        ensure(gap <= 1e-6, || {
            format!("Tucker2 instance {i} {dims:?} ({rt},{rs}): {a} vs {b}")
        })?;
        worst = worst.max(gap);
    }
    Ok(format!(
        "20 CP + 20 Tucker2 instances, worst relative gap {worst:.2e}"
    ))
}

fn oracle_equivalence() -> Result<String, String> {
    let mut r = rng(303);
    let solver = SymSolveConfig::default();
    let (mut cases, mut updates, mut worst) = (0, 0, 0.0f64);
    while cases < 60 {
        let dims = rand_dims(&mut r, [4, 3, 3, 3]);
        let d = dims[1] * dims[2] * dims[3];
        let rows = dims[0] * d;
        let root = random_root(&mut r, d);
        let k = rand_tensor(&mut r, dims);
        let problem = SigmaProblem::new(&k, &root).unwrap();

        let rank = r.random_range(1..=3usize.min(cp_rank_max(dims)));
        let f = random_cp(&mut r, dims, rank);
        let cp_entries = rows * rank * dims.iter().max().unwrap();
        let (rt, rs) = (r.random_range(1..=dims[0]), r.random_range(1..=dims[1]));
        let tk = random_tucker(&mut r, dims, rt, rs);
        let core_entries = rows * rt * rs * dims[2] * dims[3];
        if cp_entries.max(core_entries) > 10_000 {
            continue;
        }
        cases += 1;
        for mode in 1..=4 {
            let got = problem.cp_update(&f, mode, &solver).unwrap();
            let want = cp_oracle(&k, &root, &f, mode);
            let dev = rel_diff(&got, &want);
            ensure(dev <= 1e-8, || {
                format!("CP mode {mode} on {dims:?} R={rank}: deviation {dev:e}")
            })?;
            worst = worst.max(dev);
            updates += 1;
        }
        let checks = [
            rel_diff(
                &problem.tucker2_update_t(&tk).unwrap(),
                &tucker_oracle_t(&k, &root, &tk),
            ),
            rel_diff(
                &problem.tucker2_update_s(&tk, &solver).unwrap(),
                &tucker_oracle_s(&k, &root, &tk),
            ),
            rel_diff_t(
                &problem.tucker2_update_core(&tk).unwrap(),
                &tucker_oracle_core(&k, &root, &tk),
            ),
        ];
        for (b, dev) in ["U_T", "U_S", "G"].iter().zip(checks) {
            ensure(dev <= 1e-8, || {
                format!("Tucker2 {b} on {dims:?} ({rt},{rs}): deviation {dev:e}")
            })?;
            worst = worst.max(dev);
            updates += 1;
        }
    }
    Ok(format!(
        "{cases} cases, {updates} updates, worst deviation {worst:.2e}"
    ))
}

fn non_increasing(trace: &[f64]) -> Option<usize> {
    trace.windows(2).position(|w| w[1] > w[0] * (1.0 + 1e-8))
}

fn monotone_descent() -> Result<String, String> {
    let mut r = rng(404);
    let mut traces = 0;
    for trial in 0..100u64 {
        let dims = rand_dims(&mut r, [4, 3, 3, 3]);
        let d = dims[1] * dims[2] * dims[3];
        let k = rand_tensor(&mut r, dims);
        let root = random_root(&mut r, d);
        let cfg = if trial % 2 == 0 {
            AlsConfig::default()
        } else {
            AlsConfig::default().with_init(Init::Random(trial))
        };
        let rank = r.random_range(1..=3usize.min(cp_rank_max(dims)));
        let (rt, rs) = (r.random_range(1..=dims[0]), r.random_range(1..=dims[1]));
        let h = Tensor4::from_fn(dims, |_, _, _, _| r.random_range(0.0..2.0));
        let runs = [
            ("cp_als", cp_als(&k, rank, &cfg).map(|o| o.trace)),
            (
                "tucker2_als",
                tucker2_als(&k, rt, rs, &cfg).map(|o| o.trace),
            ),
            (
                "cp_als_sigma",
                cp_als_sigma(&k, &root, rank, &cfg).map(|o| o.trace),
            ),
            (
                "tucker2_als_sigma",
                tucker2_als_sigma(&k, &root, rt, rs, &cfg).map(|o| o.trace),
            ),
            (
                "wals_tucker2",
                wals_tucker2(&k, &h, rt, rs, &cfg).map(|o| o.trace),
            ),
        ];
        for (name, trace) in runs {
            let trace = trace.map_err(|e| format!("{name} failed on trial {trial}: {e}"))?;
            if let Some(i) = non_increasing(&trace) {
                return Err(format!(
                    "{name} trial {trial}: sweep {i} rises {} -> {}",
                    trace[i],
                    trace[i + 1]
                ));
            }
            traces += 1;
        }
    }
    Ok(format!("100 trials, {traces} traces non-increasing"))
}

fn greedy_dominance() -> Result<String, String> {
    let start = Instant::now();
    let mut r = rng(505);
    let dims = [4, 3, 3, 3];
    let rank = 3;
    let mut factors = Vec::new();
    for trial in 0..30 {
        let sigma = sigma_with_condition(&mut r, 27, 1e3);
        let root =
            SigmaRoot::from_sigma(&sigma, &SymSolveConfig::default(), Default::default()).unwrap();
        let f = gauss_cp(&mut r, dims, rank);
        let clean = cp_reconstruct(&f);
        let noise = rand_tensor(&mut r, dims);
        let k = clean
            .add(&noise.scale(0.05 * clean.frobenius_norm() / noise.frobenius_norm()))
            .unwrap();
        let cfg = AlsConfig::default();
        let als = cp_als_sigma(&k, &root, rank, &cfg)
            .unwrap()
            .final_objective();
        let greedy = *greedy_deflation_sigma(&k, &root, rank, &cfg)
            .unwrap()
            .residual_trace
            .last()
            .unwrap();
        ensure(als <= greedy * (1.0 + 1e-12), || {
            format!("trial {trial}: ALS {als} > greedy {greedy}")
        })?;
        factors.push(greedy / als);
    }
    let mean = factors.iter().sum::<f64>() / factors.len() as f64;
    let min = factors.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(mean >= 1.5, || {
        format!("mean improvement factor {mean:.3} < 1.5")
    })?;
    within(Duration::from_secs(120), start)?;
    Ok(format!(
        "30/30 trials ALS <= greedy, improvement factor mean {mean:.2} (min {min:.2}), {:.1?}",
        start.elapsed()
    ))
}

fn gauss_cp(
    r: &mut rand_chacha::ChaCha8Rng,
    dims: [usize; 4],
    rank: usize,
) -> sigma_lowrank::CpFactors {
    let g = |n: usize, r: &mut rand_chacha::ChaCha8Rng| Mat::from_fn(n, rank, |_, _| gauss(r));
    sigma_lowrank::CpFactors::new(g(dims[0], r), g(dims[1], r), g(dims[2], r), g(dims[3], r))
        .unwrap()
}

fn svd_sigma_optimality() -> Result<String, String> {
    let mut r = rng(606);
    for trial in 0..20 {
        let w = Mat::from_fn(5, 5, |_, _| gauss(&mut r));
        let rank = r.random_range(1..=4);
        let cond = 10f64.powf(r.random_range(1.0..4.0));
        let sigma = sigma_with_condition(&mut r, 5, cond);
        let root =
            SigmaRoot::from_sigma(&sigma, &SymSolveConfig::default(), Default::default()).unwrap();
        let l = root.factor();
        let obj = |approx: &Mat| ((&w - approx) * l).norm();
        let f = svd_sigma(&w, &root, rank).map_err(|e| e.to_string())?;
        let best = obj(&f.reconstruct());
        for c in 0..1000 {
            let (a, b) = (
                Mat::from_fn(5, rank, |_, _| gauss(&mut r)),
                Mat::from_fn(rank, 5, |_, _| gauss(&mut r)),
            );
            // half blind candidates, half perturbations of the returned optimum
            let cand = if c % 2 == 0 {
                a * b
            } else {
                let scale = 10f64.powf(r.random_range(-6.0..0.0));
                (&f.a + a * scale) * (&f.b + b * scale)
            };
            let v = obj(&cand);
            ensure(best <= v * (1.0 + 1e-12), || {
                format!("trial {trial}: candidate {c} beats svd_sigma, {v} < {best}")
            })?;
        }
        let plain = obj(&truncated_svd(&w, rank).unwrap().reconstruct());
        ensure(best <= plain * (1.0 + 1e-12), || {
            format!("trial {trial}: plain SVD {plain} < {best}")
        })?;
    }
    Ok("20 problems x 1000 candidates, never beaten; never worse than plain truncated SVD".into())
}

fn vbmf_recovery() -> Result<String, String> {
    let mut r = rng(707);
    let (mut exact, mut over) = (0, 0);
    let mut misses = Vec::new();
    for _ in 0..50 {
        let (l, m) = (r.random_range(20..=120), r.random_range(20..=120));
        let rank = r.random_range(0..=8usize.min(l.min(m) / 4));
        let edge = (l as f64).sqrt() + (m as f64).sqrt();
        let sv: Vec<f64> = (0..rank)
            .map(|_| edge * r.random_range(20.0f64..100.0).sqrt())
            .collect();
        let u = orthonormal(&mut r, l, rank.max(1));
        let v = orthonormal(&mut r, m, rank.max(1));
        let mut y = Mat::from_fn(l, m, |_, _| gauss(&mut r));
        for (k, s) in sv.iter().enumerate() {
            y += *s * u.column(k) * v.column(k).transpose();
        }
        let got = vbmf_rank(&y, None).unwrap();
        if got == rank {
            exact += 1;
        } else {
            misses.push(format!("{l}x{m} r={rank} got {got}"));
        }
        if got > rank + 1 {
            over += 1;
        }
    }
    ensure(exact >= 48, || format!("only {exact}/50 exact: {misses:?}"))?;
    ensure(over == 0, || {
        format!("{over} estimates exceed r+1: {misses:?}")
    })?;
    for rmax in 1..=60 {
        for rv in 0..=rmax {
            ensure(r_alpha(rv, rmax, 1.0).unwrap() == rv.max(1), || {
                format!("r_alpha({rv},{rmax},1)")
            })?;
            ensure(r_alpha(rv, rmax, 0.0).unwrap() == rmax, || {
                format!("r_alpha({rv},{rmax},0)")
            })?;
        }
    }
    ensure(r_alpha(10, 100, 0.8).unwrap() == 28, || {
        "r_alpha(10,100,0.8) != 28".into()
    })?;
    Ok(format!(
        "{exact}/50 exact, none above r+1; r_alpha endpoints exact"
    ))
}

fn conv_equivalences() -> Result<String, String> {
    let mut r = rng(808);
    let (mut worst_f, mut worst_m) = (0.0f64, 0.0f64);
    for case in 0..50 {
        let dims = [
            r.random_range(1..=5),
            r.random_range(1..=4),
            r.random_range(1..=3),
            r.random_range(1..=3),
        ];
        let spec = if case % 2 == 0 || dims[2] % 2 == 0 || dims[3] % 2 == 0 {
            ConvSpec::valid(dims)
        } else {
            ConvSpec::same(dims).unwrap()
        };
        let (hh, ww) = (r.random_range(dims[2]..=9), r.random_range(dims[3]..=9));
        let x = Image::new(
            dims[1],
            hh,
            ww,
            (0..dims[1] * hh * ww)
                .map(|_| r.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let rank = r.random_range(1..=4);
        let cp = random_cp(&mut r, dims, rank);
        let (rt, rs) = (r.random_range(1..=dims[0]), r.random_range(1..=dims[1]));
        let tk = random_tucker(&mut r, dims, rt, rs);
        let pairs = [
            (
                cp_forward(&cp, &x, &spec).unwrap(),
                conv_direct(&cp_reconstruct(&cp), &x, &spec).unwrap(),
            ),
            (
                tucker2_forward(&tk, &x, &spec).unwrap(),
                conv_direct(&tucker2_reconstruct(&tk), &x, &spec).unwrap(),
            ),
        ];
        for (a, b) in &pairs {
            let dev = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            worst_f = worst_f.max(dev);
        }
        let k = rand_tensor(&mut r, dims);
        let a = conv_im2col(&k, &x, &spec).unwrap();
        let b = conv_direct(&k, &x, &spec).unwrap();
        let dev = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        worst_m = worst_m.max(dev);
    }
    ensure(worst_f <= 1e-10, || {
        format!("factorized forward deviation {worst_f:e}")
    })?;
    ensure(worst_m <= 1e-12, || format!("im2col deviation {worst_m:e}"))?;
    Ok(format!(
        "50 cases, factorized max deviation {worst_f:.1e}, im2col {worst_m:.1e}"
    ))
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sigma-lowrank"))
}

fn write_layer(dir: &Path, name: &str, value: Array) {
    write_tensor(dir.join(name), &value).unwrap();
}

fn parameter_accounting() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(909);
    write_layer(
        dir.path(),
        "conv0.npy",
        Array::Tensor(rand_tensor(&mut r, [4, 3, 3, 3])),
    );
    write_layer(
        dir.path(),
        "conv1.npy",
        Array::Tensor(rand_tensor(&mut r, [6, 4, 3, 3])),
    );
    write_layer(dir.path(), "fc.npy", Array::Matrix(rand_mat(&mut r, 10, 8)));
    let manifest = r#"{"model": "three", "layers": [
        {"name": "conv0", "kind": "conv", "kernel_file": "conv0.npy", "dims": [4, 3, 3, 3], "skip": true},
        {"name": "conv1", "kind": "conv", "kernel_file": "conv1.npy", "dims": [6, 4, 3, 3]},
        {"name": "fc", "kind": "linear", "kernel_file": "fc.npy", "dims": [10, 8]}
    ]}"#;
    fs::write(dir.path().join("manifest.json"), manifest).unwrap();
    let out = dir.path().join("out");
    let status = cli()
        .args([
            "compress",
            "--method",
            "cp",
            "--norm",
            "frobenius",
            "--alpha",
            "0",
            "--sweeps",
            "5",
        ])
        .arg("--manifest")
        .arg(dir.path().join("manifest.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    ensure(status.status.success(), || {
        String::from_utf8_lossy(&status.stderr).into_owned()
    })?;
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();

    // alpha = 0 selects R_max: CP R = 6*4*3*3 / 6 = 36, SVD R = min(10, 8) = 8
    let original = 4 * 3 * 3 * 3 + 6 * 4 * 3 * 3 + 10 * 8;
    let compressed = 4 * 3 * 3 * 3 + 36 * (6 + 4 + 3 + 3) + 8 * (10 + 8);
    let ratio = original as f64 / compressed as f64;
    let totals = &report["totals"];
    ensure(totals["original_params"] == original, || {
        format!("original {}", totals["original_params"])
    })?;
    ensure(totals["compressed_params"] == compressed, || {
        format!("compressed {}", totals["compressed_params"])
    })?;
    ensure(totals["compression_ratio"].as_f64() == Some(ratio), || {
        format!("ratio {} vs {ratio}", totals["compression_ratio"])
    })?;
    let per_layer: Vec<u64> = report["layers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["compressed_params"].as_u64().unwrap())
        .collect();
    ensure(per_layer == vec![108, 576, 144], || {
        format!("per-layer counts {per_layer:?}")
    })?;
    Ok(format!(
        "ratio {original}/{compressed} = {ratio} reproduced exactly"
    ))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(1010);
    let layers = [
        ("c1", [6, 4, 3, 3]),
        ("c2", [8, 6, 3, 3]),
        ("c3", [5, 8, 1, 1]),
    ];
    let mut entries = Vec::new();
    for (name, dims) in layers {
        write_layer(
            dir.path(),
            &format!("{name}.npy"),
            Array::Tensor(rand_tensor(&mut r, dims)),
        );
        let d = dims[1] * dims[2] * dims[3];
        write_matrix(
            dir.path().join(format!("{name}.patches.npy")),
            &rand_mat(&mut r, d, 300),
        )
        .unwrap();
        entries.push(format!(
            r#"{{"name": "{name}", "kind": "conv", "kernel_file": "{name}.npy", "dims": {dims:?}, "patches_file": "{name}.patches.npy"}}"#
        ));
    }
    let manifest = format!(r#"{{"model": "det", "layers": [{}]}}"#, entries.join(","));
    fs::write(dir.path().join("manifest.json"), manifest).unwrap();
    let out = dir.path().join("out");
    let run = |jobs: &str| -> Result<(Vec<u8>, Vec<Vec<u8>>), String> {
        let o = cli()
            .args([
                "compress", "--method", "tucker2", "--norm", "sigma", "--alpha", "0.7", "--seed",
                "7",
            ])
            .args(["--init", "random", "--jobs", jobs])
            .arg("--manifest")
            .arg(dir.path().join("manifest.json"))
            .arg("--out")
            .arg(&out)
            .env_remove("SIGMA_LOWRANK_THREADS")
            .output()
            .unwrap();
        ensure(o.status.success(), || {
            String::from_utf8_lossy(&o.stderr).into_owned()
        })?;
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        Ok((
            fs::read(out.join("report.json")).unwrap(),
            files.iter().map(|p| fs::read(p).unwrap()).collect(),
        ))
    };
    let first = run("1")?;
    let second = run("1")?;
    let parallel = run("3")?;
    ensure(first.0 == second.0, || {
        "reports differ between identical runs".into()
    })?;
    ensure(first.0 == parallel.0, || {
        "report differs with --jobs 3".into()
    })?;
    ensure(first.1 == second.1 && first.1 == parallel.1, || {
        "factor files differ".into()
    })?;
    Ok(format!(
        "3 runs (jobs 1, 1, 3): reports of {} bytes identical, {} output files identical",
        first.0.len(),
        first.1.len()
    ))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("functional-norm identity", functional_norm_identity),
        ("frobenius reduction", frobenius_reduction),
        ("dense-P oracle equivalence", oracle_equivalence),
        ("monotone descent", monotone_descent),
        ("greedy dominance", greedy_dominance),
        ("svd_sigma optimality", svd_sigma_optimality),
        ("vbmf recovery", vbmf_recovery),
        ("conv equivalences", conv_equivalences),
        ("parameter accounting", parameter_accounting),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!(
                "acceptance {name}: PASS ({detail}) [{:.1?}]",
                start.elapsed()
            ),
            Err(why) => {
                failed += 1;
                println!("acceptance {name}: FAIL ({why}) [{:.1?}]", start.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
