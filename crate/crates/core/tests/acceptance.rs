//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails. `ACCEPTANCE_ONLY=1,3` restricts the run.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use adgan_core::autodiff::{grad_check, BatchNormMode, BnRunning, Tape, Var};
use adgan_core::data::{load_hsc, save_hsc, synth_dataset, SplitCounts, SynthSpec};
use adgan_core::evaluation::{
    diversity_report, invert_map, map_image, metrics, png_bytes, real_within_class_distance, ConfusionMatrix,
    Palette,
};
use adgan_core::model::{
    acgan_losses, adgan_d_loss, adgan_g_loss, load_checkpoint, save_checkpoint, vanilla_gan_losses, AcganInputs,
    AdganModel, ArchConfig, LossMode,
};
use adgan_core::pipeline::{evaluate, prepare, ExperimentConfig, Prepared};
use adgan_core::regularization::{adapdrop_with_centers, RegularizerKind};
use adgan_core::rng;
use adgan_core::training::train;
use adgan_core::Tensor;
use rand::Rng as _;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

const GRAD_TOL: f64 = 1e-4;
const INSTANCES: usize = 20;

fn randn(shape: &[usize], r: &mut rng::Rng) -> Tensor {
    Tensor::randn(shape, 1.0, r)
}

fn labels(n: usize, k: usize, r: &mut rng::Rng) -> Vec<u16> {
    (0..n).map(|_| r.random_range(1..=k as u16)).collect()
}

/// Worst relative error over `INSTANCES` random cases of one op.
fn worst<F>(name: &str, seed: u64, mut case: F) -> (String, f64)
where
    F: FnMut(&mut rng::Rng) -> f64,
{
    let mut r = rng::stream(&[seed, 0xc1]);
    let w = (0..INSTANCES).map(|_| case(&mut r)).fold(0.0, f64::max);
    (name.to_string(), w)
}

fn gc<F>(f: F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> adgan_core::Result<Var>,
{
    grad_check(f, inputs, 1e-5).expect("grad check runs").max_rel_error
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut results = Vec::new();

    results.push(worst("conv2d", 1, |r| {
        let stride = r.random_range(1..=2);
        let pad = r.random_range(0..=1);
        let x = randn(&[2, 2, 6, 6], r);
        let w = randn(&[3, 2, 3, 3], r);
        let proj: Vec<f64> = (0..2 * 3 * 36).map(|_| r.random_range(-1.0..1.0)).collect();
        gc(
            move |t, v| {
                let y = t.conv2d(v[0], v[1], stride, pad)?;
                let n = t.value(y).len();
                t.weighted_sum(y, proj[..n].to_vec())
            },
            &[x, w],
        )
    }));
    results.push(worst("conv_transpose2d", 2, |r| {
        let stride = r.random_range(1..=2);
        let pad = r.random_range(0..=1);
        let x = randn(&[2, 3, 3, 3], r);
        let w = randn(&[3, 2, 4, 4], r);
        let proj: Vec<f64> = (0..2 * 2 * 100).map(|_| r.random_range(-1.0..1.0)).collect();
        gc(
            move |t, v| {
                let y = t.conv_transpose2d(v[0], v[1], stride, pad)?;
                let n = t.value(y).len();
                t.weighted_sum(y, proj[..n].to_vec())
            },
            &[x, w],
        )
    }));
    results.push(worst("batch_norm", 3, |r| {
        let train = r.random_bool(0.7);
        let x = randn(&[3, 2, 3, 3], r);
        let g = Tensor::uniform(&[2], 0.5, 1.5, r);
        let b = randn(&[2], r);
        let mut running = BnRunning::new(2);
        running.mean = vec![r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)];
        running.var = vec![r.random_range(0.5..2.0), r.random_range(0.5..2.0)];
        let proj: Vec<f64> = (0..54).map(|_| r.random_range(-1.0..1.0)).collect();
        gc(
            move |t, v| {
                let mode = if train {
                    BatchNormMode::Train { track_running: false }
                } else {
                    BatchNormMode::Eval
                };
                let mut run = running.clone();
                let y = t.batch_norm(v[0], v[1], v[2], &mut run, mode, 0.1, 1e-5)?;
                t.weighted_sum(y, proj.clone())
            },
            &[x, g, b],
        )
    }));
    results.push(worst("channel_bias", 4, |r| {
        let x = randn(&[2, 3, 2, 2], r);
        let b = randn(&[3], r);
        let proj: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
        gc(
            move |t, v| {
                let y = t.channel_bias(v[0], v[1])?;
                t.weighted_sum(y, proj.clone())
            },
            &[x, b],
        )
    }));
    for (name, which) in [("leaky_relu", 0), ("relu", 1), ("tanh", 2), ("half_tanh", 3)] {
        results.push(worst(name, 10 + which, |r| {
            // Keep inputs away from the kink so central differences are valid.
            let x = Tensor::from_fn(&[2, 2, 3, 3], |_| {
                let m: f64 = r.random_range(0.05..2.0);
                if r.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            });
            let proj: Vec<f64> = (0..36).map(|_| r.random_range(-1.0..1.0)).collect();
            gc(
                move |t, v| {
                    let y = match which {
                        0 => t.leaky_relu(v[0], 0.2),
                        1 => t.relu(v[0]),
                        2 => t.tanh(v[0]),
                        _ => {
                            let h = t.tanh(v[0]);
                            t.scale(h, 0.5)
                        }
                    };
                    t.weighted_sum(y, proj.clone())
                },
                &[x],
            )
        }));
    }
    results.push(worst("softmax_cross_entropy", 20, |r| {
        let x = randn(&[5, 4], r);
        let targets: Vec<usize> = (0..5).map(|_| r.random_range(0..4)).collect();
        gc(move |t, v| t.softmax_cross_entropy(v[0], &targets), &[x])
    }));
    results.push(worst("adapdrop_normalize_multiply", 21, |r| {
        let x = randn(&[2, 1, 5, 5], r);
        let f: Vec<f64> = (0..50).map(|_| if r.random_bool(0.7) { 1.3 } else { 0.0 }).collect();
        let proj: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
        gc(
            move |t, v| {
                let y = t.normalize_multiply(v[0], 25, f.clone())?;
                t.weighted_sum(y, proj.clone())
            },
            &[x],
        )
    }));
    results.push(worst("adgan_d_loss", 30, |r| {
        let (n, k) = (6, 3);
        let lr = randn(&[n, k + 1], r);
        let lf = randn(&[n, k + 1], r);
        let lab = labels(n, k, r);
        gc(move |t, v| adgan_d_loss(t, v[0], &lab, v[1]), &[lr, lf])
    }));
    results.push(worst("adgan_g_loss", 31, |r| {
        let (n, k) = (6, 3);
        let lf = randn(&[n, k + 1], r);
        let lab = labels(n, k, r);
        gc(move |t, v| adgan_g_loss(t, v[0], &lab), &[lf])
    }));
    for (name, g_side) in [("acgan_d_objective", false), ("acgan_g_objective", true)] {
        results.push(worst(name, 32 + g_side as u64, |r| {
            let (n, k) = (5, 3);
            let inputs = [randn(&[n, 2], r), randn(&[n, 2], r), randn(&[n, k], r), randn(&[n, k], r)];
            let (lr, lf) = (labels(n, k, r), labels(n, k, r));
            gc(
                move |t, v| {
                    let l = acgan_losses(
                        t,
                        &AcganInputs {
                            source_real: v[0],
                            source_fake: v[1],
                            class_real: v[2],
                            class_fake: v[3],
                            labels_real: &lr,
                            labels_fake: &lf,
                        },
                    )?;
                    Ok(if g_side { l.g_objective } else { l.d_objective })
                },
                &inputs,
            )
        }));
    }
    for (name, g_side) in [("vanilla_d_loss", false), ("vanilla_g_loss", true)] {
        results.push(worst(name, 34 + g_side as u64, |r| {
            let inputs = [randn(&[5, 2], r), randn(&[5, 2], r)];
            gc(
                move |t, v| {
                    let (ld, lg) = vanilla_gan_losses(t, v[0], v[1])?;
                    Ok(if g_side { lg } else { ld })
                },
                &inputs,
            )
        }));
    }
    let secs = start.elapsed().as_secs_f64();
    let bad: Vec<String> = results
        .iter()
        .filter(|(_, e)| !(*e < GRAD_TOL))
        .map(|(n, e)| format!("{n}={e:.2e}"))
        .collect();
    let max = results.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    check(
        bad.is_empty() && secs < 120.0,
        format!(
            "{} ops x {INSTANCES} instances, max rel err {max:.2e} (< {GRAD_TOL:.0e}), {secs:.1}s{}",
            results.len(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut r = rng::stream(&[2, 0xad]);
    let ks = [0u32, 30, 40, 45, 100];
    let (mut max_diff, mut mask_mismatch, mut count_checks, mut count_bad) = (0.0f64, 0usize, 0usize, 0usize);
    for _ in 0..1000 {
        let h = r.random_range(8..=32);
        let w = r.random_range(8..=32);
        let b = [3usize, 5, 7][r.random_range(0..3)];
        let k = ks[r.random_range(0..ks.len())];
        // Coarse values force ties inside blocks.
        let coarse = r.random_bool(0.3);
        let plane: Vec<f64> = (0..h * w)
            .map(|_| {
                let v: f64 = r.random_range(-3.0..3.0);
                if coarse {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        let half = b / 2;
        let n_centers = r.random_range(0..=6);
        let centers: Vec<(usize, usize)> = (0..n_centers)
            .map(|_| (r.random_range(half..h - half), r.random_range(half..w - half)))
            .collect();
        let (out, mask) = adapdrop_with_centers(&plane, h, w, &centers, b, k as f64);
        let (want, keep) = common::brute_adapdrop(&plane, h, w, &centers, b, k);
        if mask.keep != keep {
            mask_mismatch += 1;
        }
        for (a, e) in out.iter().zip(&want) {
            max_diff = max_diff.max((a - e).abs());
        }
        let disjoint = centers.iter().enumerate().all(|(i, a)| {
            centers[..i]
                .iter()
                .all(|c| a.0.abs_diff(c.0) >= b || a.1.abs_diff(c.1) >= b)
        });
        if disjoint {
            let expect = ((k as usize) * b * b).div_ceil(100);
            for &(cy, cx) in &centers {
                count_checks += 1;
                let dropped = (cy - half..=cy + half)
                    .flat_map(|y| (cx - half..=cx + half).map(move |x| y * w + x))
                    .filter(|&i| !mask.keep[i])
                    .count();
                if dropped != expect {
                    count_bad += 1;
                }
            }
        }
    }
    check(
        max_diff <= 1e-12 && mask_mismatch == 0 && count_bad == 0 && count_checks > 0,
        format!(
            "1000 planes: max |diff| {max_diff:.1e}, mask mismatches {mask_mismatch}, per-block drop counts {}/{count_checks} exact",
            count_checks - count_bad
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut r = rng::stream(&[3, 0x3e]);
    let (mut worst, mut count_bad) = (0.0f64, 0usize);
    for _ in 0..1000 {
        let k = r.random_range(2..=9);
        let sparse = r.random_bool(0.3);
        let m: Vec<u64> = (0..k * k)
            .map(|_| if sparse && r.random_bool(0.6) { 0 } else { r.random_range(0..500) })
            .collect();
        if m.iter().sum::<u64>() == 0 {
            continue;
        }
        let rows: Vec<Vec<u64>> = m.chunks(k).map(<[u64]>::to_vec).collect();
        let rep = metrics(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        let o = common::oracle_metrics(k, &m);
        if rep.total != o.total || rep.support != o.support {
            count_bad += 1;
        }
        for (a, e) in rep.per_class.iter().zip(&o.per_class) {
            match (a, e) {
                (Some(a), Some(e)) => worst = worst.max((a - e).abs()),
                (None, None) => {}
                _ => count_bad += 1,
            }
        }
        worst = worst
            .max((rep.oa - o.oa).abs())
            .max((rep.aa - o.aa).abs())
            .max((rep.kappa - o.kappa).abs());
    }
    let hand = metrics(&ConfusionMatrix::from_rows(&[vec![40, 10], vec![20, 30]]).unwrap()).unwrap();
    let hand_ok = (hand.kappa - 0.4).abs() < 1e-12 && (hand.oa - 0.7).abs() < 1e-12 && (hand.aa - 0.7).abs() < 1e-12;
    check(
        worst <= 1e-12 && count_bad == 0 && hand_ok,
        format!(
            "1000 matrices: count mismatches {count_bad}, max ratio diff {worst:.1e}; hand case OA {:.4} AA {:.4} kappa {:.4}",
            hand.oa, hand.aa, hand.kappa
        ),
    )
}

// ------------------------------------------------------- 4, 5, 6, 8

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const MINORITY: usize = 2;

/// Desk-scale experiment on the default synthetic scene.
fn desk_config(seed: u64, mode: LossMode, reg: RegularizerKind) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        seed,
        split: SplitCounts::Total(300),
        ..ExperimentConfig::default()
    };
    c.train.arch = ArchConfig {
        patch_size: 15,
        base_width: 8,
        loss_mode: mode,
        ..ArchConfig::default()
    };
    c.train.regularizer.kind = reg;
    c.train.epochs = 30;
    c.train.batch_size = 32;
    c.train.checkpoint_every = 0;
    c.resolve().expect("desk config is valid")
}

struct Run {
    oa: f64,
    minority_recall: f64,
    secs: f64,
    model: AdganModel,
    prep: Prepared,
}

fn desk_run(seed: u64, mode: LossMode, reg: RegularizerKind) -> Run {
    let cfg = desk_config(seed, mode, reg);
    let start = Instant::now();
    let prep = prepare(&cfg).expect("prepare");
    let outcome = train(&prep.train, None, &cfg.train, None).expect("train");
    let secs = start.elapsed().as_secs_f64();
    let mut model = outcome.best.model;
    model.set_training(false);
    let (report, _) = evaluate(&mut model, &prep, &cfg.classify).expect("evaluate");
    eprintln!(
        "  seed {seed} {mode} {reg:?}: OA {:.4} minority recall {:.3} ({secs:.0}s)",
        report.test.oa,
        report.test.per_class[MINORITY].unwrap_or(0.0)
    );
    Run {
        oa: report.test.oa,
        minority_recall: report.test.per_class[MINORITY].unwrap_or(0.0),
        secs,
        model,
        prep,
    }
}

struct DeskRuns {
    adgan: Vec<Run>,
    acgan: Vec<Run>,
    unregularized: Vec<Run>,
}

fn desk_runs() -> &'static DeskRuns {
    static RUNS: OnceLock<DeskRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let all = |mode, reg| SEEDS.iter().map(|&s| desk_run(s, mode, reg)).collect::<Vec<_>>();
        DeskRuns {
            adgan: all(LossMode::Adgan, RegularizerKind::Adapdrop),
            acgan: all(LossMode::Acgan, RegularizerKind::Adapdrop),
            unregularized: all(LossMode::Adgan, RegularizerKind::None),
        }
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_4() -> Outcome {
    let runs = &desk_runs().adgan;
    let passing = runs.iter().filter(|r| r.oa >= 0.90).count();
    let slowest = runs.iter().map(|r| r.secs).fold(0.0, f64::max);
    let oas: Vec<String> = runs.iter().map(|r| format!("{:.4}", r.oa)).collect();
    check(
        passing >= 4 && slowest < 900.0,
        format!("held-out OA per seed [{}], {passing}/5 >= 0.90, slowest run {slowest:.0}s", oas.join(", ")),
    )
}

fn criterion_5() -> Outcome {
    let d = desk_runs();
    let a = mean(d.adgan.iter().map(|r| r.minority_recall));
    let c = mean(d.acgan.iter().map(|r| r.minority_recall));
    check(
        a - c >= 0.0,
        format!("mean minority recall adgan {a:.4}, acgan {c:.4}, gap {:+.4}", a - c),
    )
}

fn criterion_6() -> Outcome {
    let d = desk_runs();
    let with = mean(d.adgan.iter().map(|r| r.oa));
    let without = mean(d.unregularized.iter().map(|r| r.oa));
    check(
        with >= without - 0.02,
        format!("mean OA adapdrop {with:.4}, none {without:.4}, difference {:+.4}", with - without),
    )
}

fn criterion_8() -> Outcome {
    let runs = &desk_runs().adgan;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut worst_ratio = f64::INFINITY;
    for (seed, run) in SEEDS.iter().zip(runs) {
        let mut model = run.model.clone();
        for c in 1..=model.num_classes() as u16 {
            let rep = diversity_report(&mut model, c, 32, *seed, None).expect("diversity");
            let real = real_within_class_distance(&run.prep.patches, c, 200).expect("real distance");
            let ratio = rep.mean_pairwise_distance / real;
            worst_ratio = worst_ratio.min(ratio);
            if !(rep.sample_variance > 0.0 && ratio > 0.10) {
                ok = false;
                lines.push(format!("seed {seed} class {c}: var {:.2e} ratio {ratio:.3}", rep.sample_variance));
            }
        }
    }
    check(
        ok,
        format!(
            "5 models x 3 classes, min generated/real diversity ratio {worst_ratio:.3} (> 0.10){}",
            if lines.is_empty() { String::new() } else { format!("; failing: {}", lines.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 7

fn run_cli(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_adgan"))
        .args(args)
        .current_dir(dir)
        .env("ADGAN_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn adgan");
    assert!(out.status.success(), "adgan {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"train": {"arch": {"patch_size": 15, "base_width": 8}, "epochs": 3, "batch_size": 32}, "seed": 11}"#;
    fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    for run in ["a", "b"] {
        let data = format!("{run}/data");
        run_cli(&["synth", "--out", &data], tmp.path());
        run_cli(&["train", "--config", "cfg.json", "--data", &data, "--out", run], tmp.path());
        run_cli(&["eval", "--config", "cfg.json", "--data", &data, "--out", run], tmp.path());
    }
    let same = |rel: &str| fs::read(tmp.path().join("a").join(rel)).unwrap() == fs::read(tmp.path().join("b").join(rel)).unwrap();
    let mut files = vec!["eval/metrics.json".to_string()];
    for e in fs::read_dir(tmp.path().join("a/checkpoints")).unwrap() {
        files.push(format!("checkpoints/{}", e.unwrap().file_name().to_string_lossy()));
    }
    files.sort();
    let differing: Vec<&String> = files.iter().filter(|f| !same(f)).collect();
    check(
        differing.is_empty() && files.len() >= 4,
        format!(
            "{} files compared (metrics JSON + checkpoints), {} differ",
            files.len(),
            differing.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synth_dataset(&SynthSpec::default()).unwrap();
    save_hsc(&tmp.path().join("h1"), &ds).unwrap();
    let back = load_hsc(&tmp.path().join("h1")).unwrap();
    save_hsc(&tmp.path().join("h2"), &back).unwrap();
    let hsc_ok = back == ds
        && ["meta.json", "cube.bin", "labels.bin"].iter().all(|f| {
            fs::read(tmp.path().join("h1").join(f)).unwrap() == fs::read(tmp.path().join("h2").join(f)).unwrap()
        });

    let mut cfg = desk_config(9, LossMode::Adgan, RegularizerKind::Adapdrop);
    cfg.train.epochs = 1;
    let prep = prepare(&cfg).unwrap();
    let out = train(&prep.train, None, &cfg.train, None).unwrap();
    let p1 = tmp.path().join("c1.ckpt");
    let p2 = tmp.path().join("c2.ckpt");
    save_checkpoint(&p1, &out.last).unwrap();
    let loaded = load_checkpoint(&p1).unwrap();
    save_checkpoint(&p2, &loaded).unwrap();
    let ckpt_ok = loaded == out.last && fs::read(&p1).unwrap() == fs::read(&p2).unwrap();

    let mut r = rng::stream(&[9, 0x9e]);
    let mut map_ok = true;
    for _ in 0..50 {
        let k = r.random_range(1..=20usize);
        let (w, h) = (r.random_range(1..=40usize), r.random_range(1..=40usize));
        let raster = adgan_core::data::LabelRaster::new(
            w,
            h,
            (0..w * h).map(|_| r.random_range(0..=k as u16)).collect(),
        )
        .unwrap();
        let pal = Palette::default_for(k);
        let img = image::load_from_memory(&png_bytes(&map_image(&raster, &pal).unwrap()).unwrap())
            .unwrap()
            .to_rgb8();
        map_ok &= invert_map(&img, &pal).unwrap() == raster;
    }
    check(
        hsc_ok && ckpt_ok && map_ok,
        format!("HSC bit-identical {hsc_ok}, checkpoint bit-identical {ckpt_ok}, 50 maps invert exactly {map_ok}"),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient correctness", criterion_1),
        (2, "AdapDrop oracle equivalence", criterion_2),
        (3, "metrics oracle equivalence", criterion_3),
        (4, "end-to-end learning", criterion_4),
        (5, "imbalance trend", criterion_5),
        (6, "regularizer non-degradation", criterion_6),
        (7, "determinism", criterion_7),
        (8, "anti-collapse diagnostic", criterion_8),
        (9, "format round-trips", criterion_9),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let line = match &outcome {
            Ok(d) => format!("criterion {n} ({name}): PASS: {d}"),
            Err(d) => {
                failed += 1;
                format!("criterion {n} ({name}): FAIL: {d}")
            }
        };
        println!("{line}");
        lines.push(line);
    }
    println!("\nacceptance summary");
    for l in &lines {
        println!("{l}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
