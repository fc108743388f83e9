//! Oriented bounding boxes, von Mises angle losses and rotated-detection
//! evaluation.
//!
//! The crate is organised bottom-up:
//!
//! * [`obb`] — long-edge and OpenCV box conventions, conversions, corners and
//!   the `(t, b, l, r, θ)` regression encoding.
//! * [`geometry`] — convex clipping, exact rotated IoU and rotated NMS.
//! * [`circular`] — modified Bessel function, von Mises density and circular
//!   distance.
//! * [`loss`] — the boundary-free angle loss, its variants and baselines.
//! * [`fit`] — small gradient-descent experiments around the angle boundary.
//! * [`eval`] — detection matching, VOC07 / COCO-style AP and mAP.
//! * [`data_io`] — DOTA text formats, patch tiling and cross-patch merging.
//! * [`batch`] — slice-oriented entry points for foreign callers.

pub mod batch;
pub mod circular;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod fit;
pub mod geometry;
pub mod loss;
pub mod obb;

pub use error::{Error, Result};
