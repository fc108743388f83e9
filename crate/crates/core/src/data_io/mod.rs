//! DOTA text formats, patch tiling and cross-patch merging.

mod annotations;
mod merge;
mod tiling;

pub use annotations::{
    format_submission, parse_dota_annotations, parse_submission, AnnotationFile, AnnotationRecord,
};
pub use merge::{merge_detections, project_detection, DEFAULT_MERGE_IOU};
pub use tiling::{
    multiscale_grid, parse_patch_id, patch_id, tile_grid, tile_origins, GridManifest, PatchEntry,
    PatchSpec, MANIFEST_SCHEMA_VERSION,
};

/// Class id given to names missing from the table in non-strict parsing.
pub const UNKNOWN_CLASS_ID: usize = usize::MAX;

pub const DOTA_CLASSES: [&str; 15] = [
    "plane",
    "baseball-diamond",
    "bridge",
    "ground-track-field",
    "small-vehicle",
    "large-vehicle",
    "ship",
    "tennis-court",
    "basketball-court",
    "storage-tank",
    "soccer-ball-field",
    "roundabout",
    "harbor",
    "swimming-pool",
    "helicopter",
];

/// Maps class names to contiguous ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> crate::Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains(char::is_whitespace) {
                return Err(crate::Error::Config(format!("invalid class name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(crate::Error::Config(format!("duplicate class name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn dota() -> Self {
        Self {
            names: DOTA_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::dota()
    }
}
