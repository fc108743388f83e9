use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::geometry::{rotated_nms, NmsMode};
use crate::obb::OrientedBoxLE;

use super::PatchSpec;

pub const DEFAULT_MERGE_IOU: f64 = 0.1;

/// Maps a detection from patch coordinates back to the original image.
pub fn project_detection(det: &Detection, spec: &PatchSpec) -> Result<Detection> {
    if !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(Error::Config(format!(
            "scale must be positive, got {}",
            spec.scale
        )));
    }
    let b = &det.bbox;
    let s = spec.scale;
    let bbox = OrientedBoxLE::new(
        (b.cx + spec.origin_x as f64) / s,
        (b.cy + spec.origin_y as f64) / s,
        b.w / s,
        b.h / s,
        b.theta,
    )?;
    Ok(Detection {
        bbox,
        ..det.clone()
    })
}

/// Concatenates per-patch lists and runs class-aware NMS per image.
///
/// Output is grouped by image id (sorted) and ranked by score within each.
pub fn merge_detections(
    per_patch: &[Vec<Detection>],
    nms_iou_thresh: f64,
) -> Result<Vec<Detection>> {
    let mut by_image: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in per_patch.iter().flatten() {
        by_image.entry(d.image_id.as_str()).or_default().push(d);
    }
    let groups: Vec<Vec<&Detection>> = by_image.into_values().collect();
    let merged = groups
        .par_iter()
        .map(|dets| {
            let owned: Vec<Detection> = dets.iter().map(|d| (*d).clone()).collect();
            let keep = rotated_nms(&owned, nms_iou_thresh, NmsMode::ClassAware)?;
            Ok(keep
                .into_iter()
                .map(|i| owned[i].clone())
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merged.into_iter().flatten().collect())
}
