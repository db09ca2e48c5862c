//! Experiment configuration and the data → split → train → evaluate chain
//! shared by the command line and the bindings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    extract_patches, load_hsc, prepare_cube, synth_dataset, stratified_split, HsiCube, HsiDataset, PatchSet,
    SplitCounts, SplitSpec, SynthSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{classify_scene, metrics, raster_from_centers, ClassifyOptions, MetricsReport, SceneResult};
use crate::model::AdganModel;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synth(SynthSpec),
    Hsc(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self::Synth(SynthSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub pca_components: usize,
    pub split: SplitCounts,
    pub train: TrainConfig,
    pub classify: ClassifyOptions,
    /// Root seed; drives the split and, through `train.seed`, training.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            pca_components: 3,
            split: SplitCounts::Total(300),
            train: TrainConfig::default(),
            classify: ClassifyOptions::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file. A run manifest is accepted too; its resolved
    /// `config` is used.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match value.get("config") {
            Some(c) if value.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) | Error::InvalidArgument(m) => Error::Config(format!("{}: {m}", path.display())),
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    /// Propagates the root seed and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        if self.pca_components == 0 {
            return Err(Error::Config("pca_components must be positive".into()));
        }
        if self.train.arch.channels != self.pca_components {
            return Err(Error::Config(format!(
                "arch.channels ({}) must equal pca_components ({})",
                self.train.arch.channels, self.pca_components
            )));
        }
        if let DatasetSource::Synth(s) = &self.dataset {
            s.validate()?;
        }
        if self.train.arch.patch_size % 2 == 0 {
            return Err(Error::Config(format!(
                "patch size must be odd, got {}",
                self.train.arch.patch_size
            )));
        }
        self.train.validate()?;
        Ok(self)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            counts: self.split.clone(),
            seed: self.seed,
        }
    }
}

pub fn load_dataset(src: &DatasetSource) -> Result<HsiDataset> {
    match src {
        DatasetSource::Synth(spec) => synth_dataset(spec),
        DatasetSource::Hsc(path) => load_hsc(path),
    }
}

/// Reduced cube, every labeled patch and the stratified split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: HsiDataset,
    pub cube3: HsiCube,
    pub patches: PatchSet,
    pub train: PatchSet,
    pub test: PatchSet,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dataset = load_dataset(&cfg.dataset)?;
    let k = dataset.labels.num_classes() as usize;
    if k != cfg.train.arch.num_classes {
        return Err(Error::Config(format!(
            "dataset has {k} classes but arch.num_classes is {}",
            cfg.train.arch.num_classes
        )));
    }
    let cube3 = prepare_cube(&dataset.cube, cfg.pca_components)?;
    let patches = extract_patches(&cube3, &dataset.labels, cfg.train.arch.patch_size)?;
    let (train, test) = stratified_split(&patches, &cfg.split_spec())?;
    Ok(Prepared {
        dataset,
        cube3,
        patches,
        train,
        test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Held-out pixels only.
    pub test: MetricsReport,
    /// Every labeled pixel, training pixels included.
    pub all_labeled: MetricsReport,
}

/// Scene results for the held-out pixels and for all labeled pixels.
pub fn evaluate(model: &mut AdganModel, prep: &Prepared, opts: &ClassifyOptions) -> Result<(EvalReport, SceneResult)> {
    let labels = &prep.dataset.labels;
    let test_raster = raster_from_centers(labels.width, labels.height, &prep.test.centers, &prep.test.labels);
    let all = classify_scene(model, &prep.cube3, labels, opts)?;
    let test = if prep.test.is_empty() {
        None
    } else {
        Some(metrics(&classify_scene(model, &prep.cube3, &test_raster, opts)?.confusion)?)
    };
    let all_labeled = metrics(&all.confusion)?;
    Ok((
        EvalReport {
            test: test.unwrap_or_else(|| all_labeled.clone()),
            all_labeled,
        },
        all,
    ))
}
