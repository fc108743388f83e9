use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// A square crop of the (possibly resized) image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    /// Top-left corner in the resized image.
    pub origin_x: u32,
    pub origin_y: u32,
    pub patch_size: u32,
    /// Resize factor applied to the image before cropping.
    pub scale: f64,
}

/// Crop origins along one axis.
///
/// Origins step by `patch_size − overlap` while the patch stays short of the
/// edge; a last origin at `dim − patch_size` (or 0) closes the gap.
pub fn tile_origins(dim: u32, patch_size: u32, overlap: u32) -> Result<Vec<u32>> {
    if patch_size == 0 {
        return Err(Error::Config("patch_size must be positive".into()));
    }
    if overlap >= patch_size {
        return Err(Error::Config(format!(
            "overlap {overlap} must be smaller than patch_size {patch_size}"
        )));
    }
    let stride = (patch_size - overlap) as u64;
    let (dim, patch) = (dim as u64, patch_size as u64);
    let mut origins = Vec::new();
    let mut o = 0u64;
    while o + patch < dim {
        origins.push(o as u32);
        o += stride;
    }
    let last = dim.saturating_sub(patch) as u32;
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    Ok(origins)
}

/// Full-resolution grid, rows first.
pub fn tile_grid(width: u32, height: u32, patch_size: u32, overlap: u32) -> Result<Vec<PatchSpec>> {
    grid_at(width, height, patch_size, overlap, 1.0)
}

fn grid_at(
    width: u32,
    height: u32,
    patch_size: u32,
    overlap: u32,
    scale: f64,
) -> Result<Vec<PatchSpec>> {
    let xs = tile_origins(width, patch_size, overlap)?;
    let ys = tile_origins(height, patch_size, overlap)?;
    Ok(ys
        .iter()
        .flat_map(|&y| {
            xs.iter().map(move |&x| PatchSpec {
                origin_x: x,
                origin_y: y,
                patch_size,
                scale,
            })
        })
        .collect())
}

/// Grids over the image resized by each scale (dimensions rounded to the
/// nearest pixel), with `overlap = patch_size − stride`.
pub fn multiscale_grid(
    width: u32,
    height: u32,
    scales: &[f64],
    patch_size: u32,
    stride: u32,
) -> Result<Vec<PatchSpec>> {
    if stride == 0 || stride > patch_size {
        return Err(Error::Config(format!(
            "stride must lie in 1..={patch_size}, got {stride}"
        )));
    }
    let mut out = Vec::new();
    for &s in scales {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {s}")));
        }
        let w = resized(width, s)?;
        let h = resized(height, s)?;
        out.extend(grid_at(w, h, patch_size, patch_size - stride, s)?);
    }
    Ok(out)
}

fn resized(dim: u32, scale: f64) -> Result<u32> {
    let v = (dim as f64 * scale).round();
    if v > u32::MAX as f64 {
        return Err(Error::Config(format!("resized dimension {v} is too large")));
    }
    Ok(v as u32)
}

/// `image__scale__x___y`, the naming used by the common DOTA split tools.
pub fn patch_id(image_id: &str, spec: &PatchSpec) -> String {
    format!(
        "{}__{}__{}___{}",
        image_id, spec.scale, spec.origin_x, spec.origin_y
    )
}

/// Inverse of [`patch_id`]; the patch size is not encoded and must be given.
pub fn parse_patch_id(id: &str, patch_size: u32) -> Result<(String, PatchSpec)> {
    let bad = || Error::Parse {
        line: 0,
        msg: format!("malformed patch id `{id}`"),
    };
    let (head, y) = id.rsplit_once("___").ok_or_else(bad)?;
    let (rest, x) = head.rsplit_once("__").ok_or_else(bad)?;
    let (image, scale) = rest.rsplit_once("__").ok_or_else(bad)?;
    let scale: f64 = scale.parse().map_err(|_| bad())?;
    if image.is_empty() || !(scale > 0.0 && scale.is_finite()) {
        return Err(bad());
    }
    Ok((
        image.to_string(),
        PatchSpec {
            origin_x: x.parse().map_err(|_| bad())?,
            origin_y: y.parse().map_err(|_| bad())?,
            patch_size,
            scale,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub id: String,
    #[serde(flatten)]
    pub spec: PatchSpec,
}

/// Patch list for one image, for an external cropper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub schema_version: u32,
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub patch_size: u32,
    pub patches: Vec<PatchEntry>,
}

impl GridManifest {
    pub fn new(
        image_id: &str,
        width: u32,
        height: u32,
        patch_size: u32,
        specs: &[PatchSpec],
    ) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            image_id: image_id.to_string(),
            width,
            height,
            patch_size,
            patches: specs
                .iter()
                .map(|s| PatchEntry {
                    id: patch_id(image_id, s),
                    spec: *s,
                })
                .collect(),
        }
    }
}
