use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use crate::data::cube::{HsiCube, LabelRaster};
use crate::data::patches::{check_patch_size, extract_patch, PatchSet};
use crate::error::{Error, Result};
use crate::model::AdganModel;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyOptions {
    pub batch_size: usize,
    /// Let the fake logit compete in the argmax (ADGAN mode only). Fake
    /// verdicts count as misclassifications.
    pub include_fake: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            batch_size: 100,
            include_fake: false,
        }
    }
}

fn check_ready(model: &AdganModel) -> Result<()> {
    if model.is_training() {
        return Err(Error::invalid(
            "model is in training mode; classification needs eval mode",
        ));
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("model parameters".into()));
    }
    Ok(())
}

fn tally(cm: &mut ConfusionMatrix, reference: u16, predicted: u16) -> Result<()> {
    // A fake verdict has no column; record it against another class so it
    // still counts as an error.
    if predicted as usize > cm.k {
        let wrong = if reference == 1 { 2 } else { 1 };
        cm.add(reference, wrong)
    } else {
        cm.add(reference, predicted)
    }
}

/// Predicted class ids for every patch of `set`.
pub fn classify_patches(model: &mut AdganModel, set: &PatchSet, opts: &ClassifyOptions) -> Result<Vec<u16>> {
    check_ready(model)?;
    let bs = opts.batch_size.max(1);
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(bs) {
        let x = set.batch(chunk)?;
        out.extend(model.predict(&x, opts.include_fake)?);
    }
    Ok(out)
}

pub fn confusion_for(model: &mut AdganModel, set: &PatchSet, opts: &ClassifyOptions) -> Result<ConfusionMatrix> {
    let pred = classify_patches(model, set, opts)?;
    let mut cm = ConfusionMatrix::new(model.num_classes());
    for (&r, &p) in set.labels.iter().zip(&pred) {
        tally(&mut cm, r, p)?;
    }
    Ok(cm)
}

/// Classification of every labeled pixel of `labels`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneResult {
    /// Predicted class per pixel; 0 where `labels` is 0.
    pub prediction: LabelRaster,
    pub confusion: ConfusionMatrix,
}

/// Classifies each labeled pixel of `labels` from its `S × S` patch of
/// `cube3`, in row-major order and batches of `opts.batch_size`.
pub fn classify_scene(
    model: &mut AdganModel,
    cube3: &HsiCube,
    labels: &LabelRaster,
    opts: &ClassifyOptions,
) -> Result<SceneResult> {
    check_ready(model)?;
    let s = model.arch.patch_size;
    if cube3.bands != model.arch.channels {
        return Err(Error::ShapeMismatch {
            op: "classify_scene bands",
            lhs: vec![cube3.bands],
            rhs: vec![model.arch.channels],
        });
    }
    if cube3.width != labels.width || cube3.height != labels.height {
        return Err(Error::ShapeMismatch {
            op: "classify_scene raster",
            lhs: vec![cube3.height, cube3.width],
            rhs: vec![labels.height, labels.width],
        });
    }
    if labels.num_classes() as usize > model.num_classes() {
        return Err(Error::invalid(format!(
            "labels reach class {} but the model has {}",
            labels.num_classes(),
            model.num_classes()
        )));
    }
    check_patch_size(cube3, s)?;
    let positions: Vec<usize> = (0..labels.labels.len()).filter(|&i| labels.labels[i] != 0).collect();
    let plen = cube3.bands * s * s;
    let bs = opts.batch_size.max(1);
    let mut prediction = LabelRaster::unlabeled(labels.width, labels.height);
    let mut cm = ConfusionMatrix::new(model.num_classes());
    for chunk in positions.chunks(bs) {
        let mut data = vec![0.0; chunk.len() * plen];
        for (j, &p) in chunk.iter().enumerate() {
            extract_patch(cube3, p / labels.width, p % labels.width, s, &mut data[j * plen..(j + 1) * plen]);
        }
        let x = Tensor::new(vec![chunk.len(), cube3.bands, s, s], data)?;
        let pred = model.predict(&x, opts.include_fake)?;
        for (&p, &c) in chunk.iter().zip(&pred) {
            prediction.labels[p] = c;
            tally(&mut cm, labels.labels[p], c)?;
        }
    }
    Ok(SceneResult {
        prediction,
        confusion: cm,
    })
}

/// Label raster keeping only the pixels at `centers` (`(y, x)` pairs).
pub fn raster_from_centers(width: usize, height: usize, centers: &[(usize, usize)], labels: &[u16]) -> LabelRaster {
    let mut r = LabelRaster::unlabeled(width, height);
    for (&(y, x), &l) in centers.iter().zip(labels) {
        r.labels[y * width + x] = l;
    }
    r
}
