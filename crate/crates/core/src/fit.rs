//! Fixed-step gradient descent on a single angle (or a single box) under the
//! available angle losses, for comparing how each behaves across the
//! `±π/2` seam.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circular::{circular_distance, wrapped_gap, LE_PERIOD};
use crate::error::{Error, Result};
use crate::geometry::skew_iou;
use crate::loss::{self, AbflConfig, LossWeights};
use crate::obb::{box_to_regression, regression_to_box, wrap_le, OrientedBoxLE, RegressionVector};

/// Raw angles beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 10.0 * PI;
pub const MAX_STEPS_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Abfl,
    AbflAst,
    /// Smooth-L1 on the raw angle difference, no wrapping anywhere.
    SmoothL1Raw,
    Strategy2,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Abfl,
        LossKind::AbflAst,
        LossKind::SmoothL1Raw,
        LossKind::Strategy2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Abfl => "abfl",
            LossKind::AbflAst => "abfl_ast",
            LossKind::SmoothL1Raw => "smooth_l1_raw",
            LossKind::Strategy2 => "strategy2",
        }
    }

    /// Whether iterates are wrapped back into `[−π/2, π/2)` after each step.
    pub fn renormalizes(self) -> bool {
        matches!(self, LossKind::Abfl | LossKind::AbflAst)
    }

    fn is_circular(self) -> bool {
        self != LossKind::SmoothL1Raw
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss_kind: LossKind,
    pub step_size: f64,
    pub max_steps: usize,
    /// Stop once the circular error drops below this (radians).
    pub tol: f64,
    /// Offset applied to starts sitting on a stationary maximum.
    pub init_jitter: f64,
    /// Box aspect ratio fed to the near-square variant.
    pub aspect_ratio: Option<f64>,
    pub smooth_l1_beta: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Abfl,
            step_size: 0.01,
            max_steps: 5000,
            tol: 1e-3,
            init_jitter: 1e-3,
            aspect_ratio: None,
            smooth_l1_beta: 1.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.max_steps == 0 || self.max_steps > MAX_STEPS_LIMIT {
            return Err(Error::Config(format!(
                "max_steps must lie in 1..={MAX_STEPS_LIMIT}, got {}",
                self.max_steps
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return Err(Error::Config(format!(
                "init_jitter must be >= 0, got {}",
                self.init_jitter
            )));
        }
        if !(self.smooth_l1_beta > 0.0 && self.smooth_l1_beta.is_finite()) {
            return Err(Error::Config(format!(
                "smooth_l1_beta must be positive, got {}",
                self.smooth_l1_beta
            )));
        }
        if let Some(r) = self.aspect_ratio {
            if !(r >= 1.0 && r.is_finite()) {
                return Err(Error::Config(format!("aspect_ratio must be >= 1, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub theta: f64,
    pub loss: f64,
    pub grad: f64,
}

/// `steps[0]` is the starting state; each iteration appends one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub loss_kind: LossKind,
    pub theta_gt: f64,
    /// Start after any jitter.
    pub theta_init: f64,
    pub jittered: bool,
    pub steps: Vec<TrajectoryStep>,
    pub iterations: usize,
    pub path_length: f64,
    pub final_theta: f64,
    pub final_circular_error: f64,
    pub converged: bool,
    pub diverged: bool,
    /// Iterations whose loss exceeded the previous one.
    pub loss_increases: usize,
}

/// Loss and derivative of the selected kind at one angle.
struct AngleObjective<'a> {
    kind: LossKind,
    cfg: &'a AbflConfig,
    aspect: Option<f64>,
    beta: f64,
}

impl<'a> AngleObjective<'a> {
    fn new(kind: LossKind, cfg: &'a AbflConfig, aspect: Option<f64>, beta: f64) -> Result<Self> {
        if kind == LossKind::AbflAst {
            if cfg.ast().is_none() {
                return Err(Error::Config(
                    "abfl_ast needs an aspect-ratio threshold".into(),
                ));
            }
            if aspect.is_none() {
                return Err(Error::Config("abfl_ast needs the box aspect ratio".into()));
            }
        }
        Ok(Self {
            kind,
            cfg,
            aspect,
            beta,
        })
    }

    fn eval(&self, theta: f64, gt: f64) -> Result<(f64, f64)> {
        Ok(match self.kind {
            LossKind::Abfl => (
                loss::abfl(theta, gt, self.cfg)?,
                loss::abfl_grad(theta, gt, self.cfg)?,
            ),
            LossKind::AbflAst => {
                let r = self.aspect.unwrap_or(1.0);
                (
                    loss::abfl_ast(theta, gt, r, self.cfg)?,
                    loss::abfl_ast_grad(theta, gt, r, self.cfg)?,
                )
            }
            LossKind::Strategy2 => (
                loss::abfl_strategy2(theta, gt, self.cfg)?,
                loss::abfl_strategy2_grad(theta, gt, self.cfg)?,
            ),
            LossKind::SmoothL1Raw => (
                loss::smooth_l1(theta, gt, self.beta)?,
                loss::smooth_l1_grad(theta, gt, self.beta)?,
            ),
        })
    }

    /// Gap from the nearest stationary maximum, if the loss has one.
    fn gap_to_maximum(&self, theta: f64, gt: f64) -> Option<f64> {
        let d = theta - gt;
        match self.kind {
            LossKind::SmoothL1Raw => None,
            LossKind::AbflAst if self.square_branch() => {
                Some((wrapped_gap(d, FRAC_PI_2) - FRAC_PI_4).abs())
            }
            _ => Some(FRAC_PI_2 - wrapped_gap(d, PI)),
        }
    }

    fn square_branch(&self) -> bool {
        matches!((self.aspect, self.cfg.ast()), (Some(r), Some(t)) if r < t)
    }
}

fn jitter_start(obj: &AngleObjective, theta: f64, gt: f64, cfg: &FitConfig) -> (f64, bool) {
    if cfg.init_jitter == 0.0 {
        return (theta, false);
    }
    match obj.gap_to_maximum(theta, gt) {
        Some(g) if g <= cfg.init_jitter => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (theta + sign * cfg.init_jitter, true)
        }
        _ => (theta, false),
    }
}

fn angle_error(theta: f64, gt: f64) -> f64 {
    wrapped_gap(theta - gt, LE_PERIOD)
}

/// Runs `θ ← θ − step·∂L/∂θ` from `theta_init` towards `theta_gt`.
pub fn fit_angle(
    theta_gt: f64,
    theta_init: f64,
    cfg: &FitConfig,
    loss_cfg: &AbflConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(theta_gt.is_finite() && theta_init.is_finite()) {
        return Err(Error::Domain("angles must be finite".into()));
    }
    let obj = AngleObjective::new(
        cfg.loss_kind,
        loss_cfg,
        cfg.aspect_ratio,
        cfg.smooth_l1_beta,
    )?;
    let kind = cfg.loss_kind;
    let (start, jittered) = jitter_start(&obj, theta_init, theta_gt, cfg);
    let mut theta = if kind.renormalizes() {
        wrap_le(start)
    } else {
        start
    };

    let (l0, g0) = obj.eval(theta, theta_gt)?;
    let mut steps = vec![TrajectoryStep {
        theta,
        loss: l0,
        grad: g0,
    }];
    let mut path_length = 0.0;
    let mut loss_increases = 0;
    let mut converged = angle_error(theta, theta_gt) < cfg.tol;
    let mut diverged = false;

    while !converged && !diverged && steps.len() <= cfg.max_steps {
        let prev = *steps.last().expect("trajectory starts non-empty");
        let moved = prev.theta - cfg.step_size * prev.grad;
        let next = if kind.renormalizes() {
            wrap_le(moved)
        } else {
            moved
        };
        path_length += if kind.is_circular() {
            wrapped_gap(next - prev.theta, PI)
        } else {
            (next - prev.theta).abs()
        };
        theta = next;
        if !theta.is_finite() || theta.abs() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
        let (l, g) = obj.eval(theta, theta_gt)?;
        if l > prev.loss + 4.0 * f64::EPSILON {
            loss_increases += 1;
        }
        steps.push(TrajectoryStep {
            theta,
            loss: l,
            grad: g,
        });
        converged = angle_error(theta, theta_gt) < cfg.tol;
    }

    let final_theta = steps.last().map_or(theta, |s| s.theta);
    Ok(Trajectory {
        loss_kind: kind,
        theta_gt,
        theta_init: start,
        jittered,
        iterations: steps.len() - 1,
        steps,
        path_length,
        final_theta,
        final_circular_error: angle_error(final_theta, theta_gt),
        converged,
        diverged,
        loss_increases,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStep {
    pub theta: f64,
    /// Weighted regression plus angle loss.
    pub loss: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxTrajectory {
    pub loss_kind: LossKind,
    pub steps: Vec<BoxStep>,
    pub iterations: usize,
    pub final_box: OrientedBoxLE,
    pub final_iou: f64,
    pub min_iou: f64,
    pub final_circular_error: f64,
    pub converged: bool,
    pub diverged: bool,
}

/// Joint descent on the side distances (smooth-L1 against `gt`'s targets at
/// the sample point) and the angle, weighted by `weights.reg` and
/// `weights.angle`.
///
/// Stops once every side residual and the circular angle error are below
/// `cfg.tol`.
pub fn fit_box(
    gt: &OrientedBoxLE,
    init: &RegressionVector,
    cfg: &FitConfig,
    loss_cfg: &AbflConfig,
    weights: &LossWeights,
) -> Result<BoxTrajectory> {
    cfg.validate()?;
    if !(weights.reg >= 0.0 && weights.angle >= 0.0) {
        return Err(Error::Config("loss weights must be >= 0".into()));
    }
    let target = box_to_regression(gt, init.px, init.py)?;
    let target_sides = [target.t, target.b, target.l, target.r];
    let aspect = cfg.aspect_ratio.or(Some(gt.aspect_ratio()));
    let obj = AngleObjective::new(cfg.loss_kind, loss_cfg, aspect, cfg.smooth_l1_beta)?;
    let kind = cfg.loss_kind;

    let mut sides = [init.t, init.b, init.l, init.r];
    let (start, _) = jitter_start(&obj, init.theta, gt.theta, cfg);
    let mut theta = if kind.renormalizes() {
        wrap_le(start)
    } else {
        start
    };

    let current_box = |sides: &[f64; 4], theta: f64| {
        regression_to_box(&RegressionVector {
            px: init.px,
            py: init.py,
            t: sides[0],
            b: sides[1],
            l: sides[2],
            r: sides[3],
            theta,
        })
    };
    let objective = |sides: &[f64; 4], theta: f64| -> Result<(f64, [f64; 4], f64)> {
        let mut reg = 0.0;
        let mut side_grads = [0.0; 4];
        for k in 0..4 {
            reg += loss::smooth_l1(sides[k], target_sides[k], cfg.smooth_l1_beta)?;
            side_grads[k] =
                weights.reg * loss::smooth_l1_grad(sides[k], target_sides[k], cfg.smooth_l1_beta)?;
        }
        let (a, g) = obj.eval(theta, gt.theta)?;
        Ok((
            weights.reg * reg + weights.angle * a,
            side_grads,
            weights.angle * g,
        ))
    };
    let done = |sides: &[f64; 4], theta: f64| {
        angle_error(theta, gt.theta) < cfg.tol
            && sides
                .iter()
                .zip(&target_sides)
                .all(|(s, t)| (s - t).abs() < cfg.tol)
    };

    let mut fitted = current_box(&sides, theta)?;
    let (mut l, mut side_grads, mut theta_grad) = objective(&sides, theta)?;
    let first_iou = skew_iou(&fitted, gt);
    let mut steps = vec![BoxStep {
        theta,
        loss: l,
        iou: first_iou,
    }];
    let mut min_iou = first_iou;
    let mut converged = done(&sides, theta);
    let mut diverged = false;

    while !converged && steps.len() <= cfg.max_steps {
        for k in 0..4 {
            // sides stay non-negative so the box remains valid
            sides[k] = (sides[k] - cfg.step_size * side_grads[k]).max(0.0);
        }
        let moved = theta - cfg.step_size * theta_grad;
        theta = if kind.renormalizes() {
            wrap_le(moved)
        } else {
            moved
        };
        if !theta.is_finite() || theta.abs() > DIVERGENCE_LIMIT {
            diverged = true;
            break;
        }
        fitted = match current_box(&sides, theta) {
            Ok(b) => b,
            Err(_) => {
                diverged = true;
                break;
            }
        };
        (l, side_grads, theta_grad) = objective(&sides, theta)?;
        let iou = skew_iou(&fitted, gt);
        min_iou = min_iou.min(iou);
        steps.push(BoxStep {
            theta,
            loss: l,
            iou,
        });
        converged = done(&sides, theta);
    }

    let final_iou = skew_iou(&fitted, gt);
    Ok(BoxTrajectory {
        loss_kind: kind,
        iterations: steps.len() - 1,
        steps,
        final_box: fitted,
        final_iou,
        min_iou,
        final_circular_error: angle_error(theta, gt.theta),
        converged,
        diverged,
    })
}

/// All `(θ_gt, θ_init)` pairs over `n` evenly spaced angles in `[−π/2, π/2)`.
pub fn uniform_grid(n: usize) -> Vec<(f64, f64)> {
    let angles: Vec<f64> = (0..n)
        .map(|k| -FRAC_PI_2 + PI * k as f64 / n as f64)
        .collect();
    angles
        .iter()
        .flat_map(|&g| angles.iter().map(move |&i| (g, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub loss_kind: LossKind,
    pub theta_gt: f64,
    pub theta_init: f64,
    pub final_error: f64,
    pub path_length: f64,
    pub steps: usize,
    pub converged: bool,
    pub diverged: bool,
    pub jittered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub loss_kind: LossKind,
    pub pairs: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub mean_path_length: Option<f64>,
    pub divergences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BoundaryReport {
    pub rows: Vec<BoundaryRow>,
    pub summary: Vec<KindSummary>,
}

/// Runs [`fit_angle`] for every pair and loss kind. Cells run in parallel;
/// cell `i` uses seed `cfg.seed + i`, so results do not depend on scheduling.
pub fn boundary_report(
    pairs: &[(f64, f64)],
    kinds: &[LossKind],
    cfg: &FitConfig,
    loss_cfg: &AbflConfig,
) -> Result<BoundaryReport> {
    cfg.validate()?;
    let cells: Vec<(LossKind, usize)> = kinds
        .iter()
        .flat_map(|&k| (0..pairs.len()).map(move |i| (k, i)))
        .collect();
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(kind, i))| {
            let (gt, init) = pairs[i];
            let cell_cfg = FitConfig {
                loss_kind: kind,
                seed: cfg.seed.wrapping_add(cell as u64),
                ..cfg.clone()
            };
            let t = fit_angle(gt, init, &cell_cfg, loss_cfg)?;
            Ok(BoundaryRow {
                loss_kind: kind,
                theta_gt: gt,
                theta_init: init,
                final_error: t.final_circular_error,
                path_length: t.path_length,
                steps: t.iterations,
                converged: t.converged,
                diverged: t.diverged,
                jittered: t.jittered,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = kinds
        .iter()
        .map(|&kind| {
            let mine: Vec<&BoundaryRow> = rows.iter().filter(|r| r.loss_kind == kind).collect();
            let n = mine.len();
            let successes = mine.iter().filter(|r| r.converged).count();
            KindSummary {
                loss_kind: kind,
                pairs: n,
                successes,
                success_rate: (n > 0).then(|| successes as f64 / n as f64),
                mean_path_length: (n > 0)
                    .then(|| mine.iter().map(|r| r.path_length).sum::<f64>() / n as f64),
                divergences: mine.iter().filter(|r| r.diverged).count(),
            }
        })
        .collect();
    Ok(BoundaryReport { rows, summary })
}

/// Circular distance between a pair's endpoints, for filtering report rows.
pub fn pair_gap(theta_gt: f64, theta_init: f64) -> f64 {
    circular_distance(theta_gt, theta_init, LE_PERIOD).unwrap_or(f64::NAN)
}
