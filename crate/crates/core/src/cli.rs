//! Command-line driver.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{save_hsc, synth_dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::evaluation::{diversity_report, render_map, sample_grid, write_png, Palette};
use crate::model::{load_checkpoint, LossMode};
use crate::pipeline::{evaluate, prepare, DatasetSource, ExperimentConfig, Prepared};
use crate::regularization::{adapdrop, dropblock, dropout, sample_masks, RegularizerConfig, RegularizerKind};
use crate::tensor::Tensor;
use crate::training::train;

#[derive(Debug, Parser)]
#[command(name = "adgan", version, about = "Adversarial hyperspectral patch classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment config (or a run manifest). Unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset directory in HSC format; overrides the config's dataset.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// adgan, acgan or vanilla.
    #[arg(long = "loss-mode", global = true)]
    pub loss_mode: Option<LossMode>,
    /// none, dropout, dropblock or adapdrop.
    #[arg(long, global = true)]
    pub reg: Option<RegularizerKind>,
    #[arg(long = "b-size", global = true)]
    pub b_size: Option<usize>,
    /// Percent of each block dropped by AdapDrop.
    #[arg(long, global = true)]
    pub k: Option<f64>,
    #[arg(long = "patch-size", global = true)]
    pub patch_size: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled scene in HSC format to --out.
    Synth,
    /// Reduce, normalize, cut patches and split; writes the cache to --out/prepare.
    Prepare,
    /// Train and write checkpoints and logs to --out.
    Train,
    /// Classify the scene with a checkpoint; writes --out/eval.
    Eval {
        /// Defaults to --out/checkpoints/best.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sample grid and diversity statistics; writes --out/generate.
    Generate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Samples per class.
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
    /// Masks and outputs of dropout, DropBlock and AdapDrop on one plane, as PGM.
    DemoDrop {
        /// JSON 2-D array of numbers; a built-in 27x27 plane otherwise.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train and evaluate over a grid of one setting; writes --out/sweep.csv.
    Sweep {
        /// b_size, k, patch_size or depth.
        #[arg(long, default_value = "b_size")]
        param: String,
        /// Comma-separated values; a default grid otherwise.
        #[arg(long)]
        values: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Generate { .. } => "generate",
            Command::DemoDrop { .. } => "demo-drop",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.dataset = DatasetSource::Hsc(d.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    let t = &mut cfg.train;
    if let Some(m) = common.loss_mode {
        t.arch.loss_mode = m;
    }
    if let Some(r) = common.reg {
        t.regularizer.kind = r;
    }
    if let Some(b) = common.b_size {
        t.regularizer.b_size = b;
    }
    if let Some(k) = common.k {
        t.regularizer.k = k;
    }
    if let Some(s) = common.patch_size {
        t.arch.patch_size = s;
    }
    if let Some(e) = common.epochs {
        t.epochs = e;
    }
    if let Some(b) = common.batch_size {
        t.batch_size = b;
    }
    cfg.resolve()
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
    };
    write_text(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&m)? + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.out_dir
        .clone()
        .ok_or_else(|| Error::Config("an output directory is required (--out)".into()))
}

/// Runs one parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    let out = out_dir(&cfg)?;
    let name = cli.command.name();
    match cli.command {
        Command::Synth => cmd_synth(&cfg, &out),
        Command::Prepare => cmd_prepare(&cfg, &out),
        Command::Train => cmd_train(&cfg, &out),
        Command::Eval { checkpoint } => cmd_eval(&cfg, &out, checkpoint),
        Command::Generate { checkpoint, n } => cmd_generate(&cfg, &out, checkpoint, n),
        Command::DemoDrop { input } => cmd_demo_drop(&cfg, &out, input),
        Command::Sweep { param, values } => cmd_sweep(&cfg, &out, &param, values.as_deref()),
    }
    .inspect(|_| log::info!("{name} finished; outputs in {}", out.display()))
}

fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    // The scene seed belongs to the spec so that on-disk and in-memory
    // synthetic scenes agree.
    let spec = match &cfg.dataset {
        DatasetSource::Synth(s) => s.clone(),
        DatasetSource::Hsc(_) => SynthSpec::default(),
    };
    let ds = synth_dataset(&spec)?;
    save_hsc(out, &ds)?;
    let resolved = ExperimentConfig {
        dataset: DatasetSource::Synth(spec),
        ..cfg.clone()
    };
    write_manifest(out, "synth", &resolved)
}

fn write_f64s(path: &Path, data: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cmd_prepare(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("prepare");
    mkdir(&dir)?;
    let prep = prepare(cfg)?;
    save_hsc(
        &dir.join("reduced"),
        &crate::data::HsiDataset::new(prep.cube3.clone(), prep.dataset.labels.clone())?,
    )?;
    for (name, set) in [("train", &prep.train), ("test", &prep.test)] {
        write_f64s(&dir.join(format!("{name}_patches.bin")), &set.data)?;
        let meta = serde_json::json!({
            "count": set.len(),
            "bands": set.bands,
            "size": set.size,
            "labels": set.labels,
            "centers": set.centers,
        });
        write_text(&dir.join(format!("{name}.json")), &serde_json::to_string(&meta)?)?;
    }
    write_manifest(&dir, "prepare", cfg)
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let prep = prepare(cfg)?;
    let ckdir = out.join("checkpoints");
    mkdir(&ckdir)?;
    let outcome = train(&prep.train, Some(&prep.test), &cfg.train, Some(&ckdir))?;
    write_text(&out.join("train_log.csv"), &outcome.log.to_csv())?;
    write_text(&out.join("train_summary.json"), &outcome.log.summary_json()?)?;
    write_manifest(out, "train", cfg)
}

fn load_model(out: &Path, checkpoint: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<crate::model::AdganModel> {
    let path = checkpoint.unwrap_or_else(|| out.join("checkpoints").join("best.ckpt"));
    let mut model = load_checkpoint(&path)?.model;
    if model.arch != cfg.train.arch {
        return Err(Error::Config(format!(
            "checkpoint {} was trained with a different architecture than the config",
            path.display()
        )));
    }
    model.set_training(false);
    Ok(model)
}

fn cmd_eval(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<PathBuf>) -> Result<()> {
    let dir = out.join("eval");
    mkdir(&dir)?;
    let prep = prepare(cfg)?;
    let mut model = load_model(out, checkpoint, cfg)?;
    let (report, scene) = evaluate(&mut model, &prep, &cfg.classify)?;
    write_text(&dir.join("metrics.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let csv = format!(
        "# test\n{}# all_labeled\n{}",
        report.test.to_csv(),
        report.all_labeled.to_csv()
    );
    write_text(&dir.join("metrics.csv"), &csv)?;
    // A fake verdict is stored as class K + 1 and needs its own color.
    let palette = Palette::default_for(model.num_classes() + 1);
    render_map(&scene.prediction, &palette, &dir.join("map.png"))?;
    render_map(&prep.dataset.labels, &palette, &dir.join("reference.png"))?;
    write_text(&dir.join("palette.txt"), &palette.to_text())?;
    write_manifest(&dir, "eval", cfg)
}

fn cmd_generate(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<PathBuf>, n: usize) -> Result<()> {
    let dir = out.join("generate");
    mkdir(&dir)?;
    let prep: Prepared = prepare(cfg)?;
    let mut model = load_model(out, checkpoint, cfg)?;
    let classes: Vec<u16> = (1..=model.num_classes() as u16).collect();
    write_png(&dir.join("grid.png"), &sample_grid(&mut model, &classes, n, cfg.seed)?)?;
    let reports = classes
        .iter()
        .map(|&c| diversity_report(&mut model, c, n.max(2), cfg.seed, Some(&prep.train)))
        .collect::<Result<Vec<_>>>()?;
    write_text(&dir.join("diversity.json"), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    write_manifest(&dir, "generate", cfg)
}

/// Binary PGM (P5) with values min-max scaled to 0..255.
pub fn pgm_bytes(h: usize, w: usize, plane: &[f64]) -> Vec<u8> {
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(plane.iter().map(|v| (((v - lo) / range) * 255.0).round() as u8));
    out
}

fn default_plane(n: usize) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let mut v = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (dy, dx) = (y as f64 - c, x as f64 - c);
            let bump = (-(dx * dx + dy * dy) / (2.0 * (n as f64 / 4.0).powi(2))).exp();
            v.push(bump + 0.3 * (x as f64 * 0.7).sin() * (y as f64 * 0.4).cos());
        }
    }
    v
}

fn load_plane(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("expected a 2-D number array: {e}")))?;
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(Error::format(path, "plane must be a nonempty rectangular array"));
    }
    Ok((h, w, rows.concat()))
}

fn cmd_demo_drop(cfg: &ExperimentConfig, out: &Path, input: Option<PathBuf>) -> Result<()> {
    mkdir(out)?;
    let (h, w, plane) = match input {
        Some(p) => load_plane(&p)?,
        None => (27, 27, default_plane(27)),
    };
    let a = Tensor::new(vec![h, w], plane.clone())?;
    let reg = &cfg.train.regularizer;
    write_bytes(&out.join("input.pgm"), &pgm_bytes(h, w, &plane))?;

    let p = 1.0 - reg.keep_prob;
    let dmask = dropout(&Tensor::new(vec![h, w], vec![1.0; h * w])?, p, cfg.seed)?;
    let keep: Vec<f64> = dmask.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    write_bytes(&out.join("dropout_mask.pgm"), &pgm_bytes(h, w, &keep))?;
    write_bytes(&out.join("dropout_output.pgm"), &pgm_bytes(h, w, dropout(&a, p, cfg.seed)?.data()))?;

    for (name, kind) in [("dropblock", RegularizerKind::Dropblock), ("adapdrop", RegularizerKind::Adapdrop)] {
        let rc = RegularizerConfig {
            kind,
            ..reg.clone()
        };
        let mask = &sample_masks(&a, &rc, cfg.seed)?[0];
        let keep: Vec<f64> = mask.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        let y = if kind == RegularizerKind::Adapdrop {
            adapdrop(&a, &rc, cfg.seed)?
        } else {
            dropblock(&a, &rc, cfg.seed)?
        };
        write_bytes(&out.join(format!("{name}_mask.pgm")), &pgm_bytes(h, w, &keep))?;
        write_bytes(&out.join(format!("{name}_output.pgm")), &pgm_bytes(h, w, y.data()))?;
    }
    write_manifest(out, "demo-drop", cfg)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Default grid for a sweep parameter.
pub fn default_grid(param: &str) -> Result<Vec<f64>> {
    Ok(match param {
        "b_size" => vec![3.0, 5.0, 7.0, 9.0, 11.0],
        "k" => vec![30.0, 35.0, 40.0, 45.0],
        "patch_size" => vec![11.0, 15.0, 19.0, 23.0, 27.0, 31.0],
        "depth" => vec![3.0, 4.0, 5.0, 6.0, 7.0],
        other => return Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
    })
}

/// `cfg` with one setting replaced.
pub fn with_setting(cfg: &ExperimentConfig, param: &str, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    let as_int = || -> Result<usize> {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(Error::Config(format!("{param} needs a nonnegative integer, got {value}")))
        }
    };
    match param {
        "b_size" => c.train.regularizer.b_size = as_int()?,
        "k" => c.train.regularizer.k = value,
        "patch_size" => c.train.arch.patch_size = as_int()?,
        "depth" => {
            let d = as_int()?;
            c.train.arch.depth = d;
            // Keep the regularized layers inside the shallower networks.
            let last = d.saturating_sub(1).max(1);
            c.train.arch.g_reg_layer = c.train.arch.g_reg_layer.min(last);
            c.train.arch.d_reg_layer = c.train.arch.d_reg_layer.min(last);
        }
        other => return Err(Error::Config(format!("unknown sweep parameter `{other}`"))),
    }
    c.resolve()
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, param: &str, values: Option<&str>) -> Result<()> {
    let grid = match values {
        Some(v) => v
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("sweep value `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?,
        None => default_grid(param)?,
    };
    mkdir(out)?;
    let mut csv = String::from("param,value,oa,aa,kappa\n");
    for v in grid {
        let c = with_setting(cfg, param, v)?;
        let prep = prepare(&c)?;
        let mut model = train(&prep.train, None, &c.train, None)?.best.model;
        model.set_training(false);
        let (report, _) = evaluate(&mut model, &prep, &c.classify)?;
        log::info!("{param}={v}: OA {:.4}", report.test.oa);
        csv.push_str(&format!(
            "{param},{v},{},{},{}\n",
            report.test.oa, report.test.aa, report.test.kappa
        ));
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    write_manifest(out, "sweep", cfg)
}

/// Single-line JSON error report.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args`, runs, and returns the process exit code. Errors go to
/// stderr as one JSON line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_json("usage", first));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "adgan", "train", "--out", "x", "--reg", "dropblock", "--b-size", "5", "--loss-mode", "acgan",
            "--patch-size", "15", "--epochs", "3", "--batch-size", "8", "--seed", "9", "--k", "20",
        ])
        .unwrap();
        let cfg = resolve_config(&cli.common).unwrap();
        assert_eq!(cfg.train.regularizer.kind, RegularizerKind::Dropblock);
        assert_eq!(cfg.train.regularizer.b_size, 5);
        assert_eq!(cfg.train.regularizer.k, 20.0);
        assert_eq!(cfg.train.arch.loss_mode, LossMode::Acgan);
        assert_eq!(cfg.train.arch.patch_size, 15);
        assert_eq!((cfg.train.epochs, cfg.train.batch_size), (3, 8));
        assert_eq!((cfg.seed, cfg.train.seed), (9, 9));
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(Cli::try_parse_from(["adgan", "train", "--reg", "maxpool"]).is_err());
        let cli = Cli::try_parse_from(["adgan", "train", "--out", "x", "--b-size", "4"]).unwrap();
        assert_eq!(resolve_config(&cli.common).unwrap_err().kind(), "config");
        let cli = Cli::try_parse_from(["adgan", "train", "--out", "x", "--patch-size", "16"]).unwrap();
        assert_eq!(resolve_config(&cli.common).unwrap_err().kind(), "config");
    }

    #[test]
    fn error_line_is_single_line_json() {
        let s = error_json("io", "no such file\nsecond line");
        assert!(!s.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["error"], "io");
    }

    #[test]
    fn sweep_grid_settings() {
        let base = ExperimentConfig::default();
        assert_eq!(default_grid("b_size").unwrap().len(), 5);
        assert!(default_grid("width").is_err());
        let c = with_setting(&base, "depth", 3.0).unwrap();
        assert_eq!((c.train.arch.g_reg_layer, c.train.arch.d_reg_layer), (2, 2));
        assert!(with_setting(&base, "b_size", 4.0).is_err());
    }

    #[test]
    fn pgm_header_and_scaling() {
        let b = pgm_bytes(1, 3, &[0.0, 0.5, 1.0]);
        assert!(b.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&b[b.len() - 3..], &[0, 128, 255]);
    }
}
