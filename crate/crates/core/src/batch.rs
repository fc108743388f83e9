//! Stateless functions over flat numeric buffers, for foreign-language
//! bindings. Boxes are packed as `[cx, cy, w, h, θ]` per row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{map_at, Detection, GroundTruth, MapReport, Protocol};
use crate::geometry::{rotated_nms, skew_iou, NmsMode};
use crate::loss::{abfl, abfl_grad, AbflConfig};
use crate::obb::OrientedBoxLE;

pub const BOX_STRIDE: usize = 5;

/// Element-wise loss and gradient.
pub fn batch_abfl(
    theta_pred: &[f64],
    theta_gt: &[f64],
    cfg: &AbflConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if theta_pred.len() != theta_gt.len() {
        return Err(Error::Shape(format!(
            "theta_pred has {} entries, theta_gt has {}",
            theta_pred.len(),
            theta_gt.len()
        )));
    }
    let mut loss = Vec::with_capacity(theta_pred.len());
    let mut grad = Vec::with_capacity(theta_pred.len());
    for (&p, &g) in theta_pred.iter().zip(theta_gt) {
        loss.push(abfl(p, g, cfg)?);
        grad.push(abfl_grad(p, g, cfg)?);
    }
    Ok((loss, grad))
}

/// Unpacks a `[cx, cy, w, h, θ]*` buffer.
pub fn boxes_from_buffer(buf: &[f64]) -> Result<Vec<OrientedBoxLE>> {
    if !buf.len().is_multiple_of(BOX_STRIDE) {
        return Err(Error::Shape(format!(
            "box buffer length {} is not a multiple of {BOX_STRIDE}",
            buf.len()
        )));
    }
    buf.chunks_exact(BOX_STRIDE)
        .map(|r| OrientedBoxLE::new(r[0], r[1], r[2], r[3], r[4]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouMode {
    /// `iou[i] = IoU(a[i], b[i])`.
    Elementwise,
    /// Row-major `len(a) × len(b)` matrix.
    Pairwise,
}

pub fn batch_skew_iou(boxes_a: &[f64], boxes_b: &[f64], mode: IouMode) -> Result<Vec<f64>> {
    let a = boxes_from_buffer(boxes_a)?;
    let b = boxes_from_buffer(boxes_b)?;
    match mode {
        IouMode::Elementwise => {
            if a.len() != b.len() {
                return Err(Error::Shape(format!(
                    "element-wise IoU needs equal counts, got {} and {}",
                    a.len(),
                    b.len()
                )));
            }
            Ok(a.iter().zip(&b).map(|(x, y)| skew_iou(x, y)).collect())
        }
        IouMode::Pairwise => Ok(a
            .iter()
            .flat_map(|x| b.iter().map(move |y| skew_iou(x, y)))
            .collect()),
    }
}

/// Scored, classed boxes on integer-labelled images.
#[derive(Debug, Clone, Copy)]
pub struct DetectionBuffers<'a> {
    pub boxes: &'a [f64],
    pub scores: &'a [f64],
    pub classes: &'a [u32],
    pub images: &'a [u32],
}

#[derive(Debug, Clone, Copy)]
pub struct GroundTruthBuffers<'a> {
    pub boxes: &'a [f64],
    pub classes: &'a [u32],
    pub difficulty: &'a [u8],
    pub images: &'a [u32],
}

fn check_len(name: &str, len: usize, want: usize) -> Result<()> {
    if len == want {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{name} has {len} entries, expected {want}"
        )))
    }
}

impl DetectionBuffers<'_> {
    fn unpack(&self) -> Result<Vec<Detection>> {
        let boxes = boxes_from_buffer(self.boxes)?;
        check_len("scores", self.scores.len(), boxes.len())?;
        check_len("classes", self.classes.len(), boxes.len())?;
        check_len("images", self.images.len(), boxes.len())?;
        boxes
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                Detection::new(
                    b,
                    self.classes[i] as usize,
                    self.scores[i],
                    self.images[i].to_string(),
                )
            })
            .collect()
    }
}

impl GroundTruthBuffers<'_> {
    fn unpack(&self) -> Result<Vec<GroundTruth>> {
        let boxes = boxes_from_buffer(self.boxes)?;
        check_len("classes", self.classes.len(), boxes.len())?;
        check_len("difficulty", self.difficulty.len(), boxes.len())?;
        check_len("images", self.images.len(), boxes.len())?;
        boxes
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                GroundTruth::new(
                    b,
                    self.classes[i] as usize,
                    self.difficulty[i],
                    self.images[i].to_string(),
                )
            })
            .collect()
    }
}

/// Kept indices, best score first.
pub fn batch_rotated_nms(
    dets: DetectionBuffers,
    iou_thresh: f64,
    mode: NmsMode,
) -> Result<Vec<usize>> {
    rotated_nms(&dets.unpack()?, iou_thresh, mode)
}

pub fn batch_map_at(
    dets: DetectionBuffers,
    gts: GroundTruthBuffers,
    thresholds: &[f64],
    protocol: Protocol,
) -> Result<MapReport> {
    map_at(&dets.unpack()?, &gts.unpack()?, thresholds, protocol)
}
