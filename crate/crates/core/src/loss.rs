//! Boundary-free angle loss built on the von Mises density.
//!
//! With `Δ = θ_pred − θ_gt` the loss is
//!
//! ```text
//! L(Δ) = 1 − e^{κ cos(λΔ)} / (2π I₀(κ) γ)
//! ```
//!
//! with `λ = 2` for the long-edge convention, so `L` has period π and is
//! continuous across the `±π/2` wrap of the box angle. The subtracted term is
//! exposed as the *similarity* `s(Δ) = f(Δ)/γ`; every loss here is `1 − s`
//! (or `1 − s(Δ) − s(Δ + π/2)` for near-square boxes) clamped at zero.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::circular::{exact_gamma, KAPPA_MAX};
use crate::error::{Error, Result};

/// Published `(κ, γ)` pairs.
pub const GAMMA_TABLE: [(f64, f64); 7] = [
    (2.0, 0.52),
    (3.0, 0.66),
    (5.0, 0.87),
    (10.0, 1.3),
    (20.0, 1.8),
    (30.0, 2.2),
    (50.0, 2.9),
];

pub const DEFAULT_KAPPA: f64 = 10.0;
pub const DEFAULT_AST: f64 = 1.3;
pub const DEFAULT_ANGLE_WEIGHT: f64 = 0.2;
/// Period adjustment for the long-edge convention, `2π / π`.
pub const LAMBDA_LE: f64 = 2.0;

/// Looks up γ for one of the published κ values.
pub fn table_gamma(kappa: f64) -> Option<f64> {
    GAMMA_TABLE
        .iter()
        .find(|(k, _)| *k == kappa)
        .map(|(_, g)| *g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// γ from the published table; κ must be one of the seven listed values.
    Table,
    /// γ = e^κ / (2π I₀(κ)), which puts the minimum exactly at zero.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Plain,
    /// Out-of-range predictions pay `|θ_pred| / (π/2)` instead.
    Strategy2,
}

/// Immutable angle-loss configuration. γ is resolved at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbflConfig {
    kappa: f64,
    gamma_mode: GammaMode,
    gamma: f64,
    lambda: f64,
    strategy: Strategy,
    ast: Option<f64>,
    loss_weight: f64,
    /// `exact_gamma(κ) / γ`, the similarity at Δ = 0.
    peak: f64,
}

impl Default for AbflConfig {
    fn default() -> Self {
        AbflConfig::new(DEFAULT_KAPPA, GammaMode::Exact)
            .and_then(|c| c.with_ast(Some(DEFAULT_AST)))
            .expect("default configuration is valid")
    }
}

impl AbflConfig {
    pub fn new(kappa: f64, gamma_mode: GammaMode) -> Result<Self> {
        if !kappa.is_finite() || !(0.0..=KAPPA_MAX).contains(&kappa) {
            return Err(Error::Config(format!(
                "kappa must lie in [0, {KAPPA_MAX}], got {kappa}"
            )));
        }
        let exact = exact_gamma(kappa)?;
        let gamma = match gamma_mode {
            GammaMode::Exact => exact,
            GammaMode::Table => table_gamma(kappa).ok_or_else(|| {
                Error::Config(format!(
                    "table gamma mode needs kappa in {{2, 3, 5, 10, 20, 30, 50}}, got {kappa}"
                ))
            })?,
        };
        Ok(Self {
            kappa,
            gamma_mode,
            gamma,
            lambda: LAMBDA_LE,
            strategy: Strategy::Plain,
            ast: None,
            loss_weight: DEFAULT_ANGLE_WEIGHT,
            peak: exact / gamma,
        })
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Sets the aspect-ratio threshold below which the near-square loss
    /// applies. Must exceed 1.
    pub fn with_ast(mut self, ast: Option<f64>) -> Result<Self> {
        if let Some(t) = ast {
            if !t.is_finite() || t <= 1.0 {
                return Err(Error::Config(format!(
                    "aspect-ratio threshold must exceed 1, got {t}"
                )));
            }
        }
        self.ast = ast;
        Ok(self)
    }

    pub fn with_loss_weight(mut self, w: f64) -> Result<Self> {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Config(format!("loss weight must be >= 0, got {w}")));
        }
        self.loss_weight = w;
        Ok(self)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma_mode(&self) -> GammaMode {
        self.gamma_mode
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn ast(&self) -> Option<f64> {
        self.ast
    }

    pub fn loss_weight(&self) -> f64 {
        self.loss_weight
    }
}

fn check_angles(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "angles must be finite, got pred={a}, gt={b}"
        )))
    }
}

/// `f(Δ)/γ = e^{κ cos(λΔ)} / (2π I₀(κ) γ)`.
///
/// Evaluated as `peak · e^{κ(cos(λΔ) − 1)}` so that it never overflows and
/// equals `peak` exactly at `Δ = 0`.
pub fn similarity(delta: f64, cfg: &AbflConfig) -> f64 {
    cfg.peak * (cfg.kappa * ((cfg.lambda * delta).cos() - 1.0)).exp()
}

/// Derivative of [`similarity`] with respect to Δ.
pub fn similarity_grad(delta: f64, cfg: &AbflConfig) -> f64 {
    -cfg.lambda * cfg.kappa * (cfg.lambda * delta).sin() * similarity(delta, cfg)
}

/// Similarity of the near-square loss, `s(Δ) + s(Δ + π/2)`.
pub fn similarity_square(delta: f64, cfg: &AbflConfig) -> f64 {
    similarity(delta, cfg) + similarity(delta + FRAC_PI_2, cfg)
}

pub fn similarity_square_grad(delta: f64, cfg: &AbflConfig) -> f64 {
    similarity_grad(delta, cfg) + similarity_grad(delta + FRAC_PI_2, cfg)
}

/// The plain angle loss.
pub fn abfl(theta_pred: f64, theta_gt: f64, cfg: &AbflConfig) -> Result<f64> {
    check_angles(theta_pred, theta_gt)?;
    Ok((1.0 - similarity(theta_pred - theta_gt, cfg)).max(0.0))
}

/// `dL/dθ_pred` of the unclamped plain loss:
/// `λκ sin(λΔ) e^{κ cos(λΔ)} / (2π I₀(κ) γ)`.
pub fn abfl_grad(theta_pred: f64, theta_gt: f64, cfg: &AbflConfig) -> Result<f64> {
    check_angles(theta_pred, theta_gt)?;
    Ok(-similarity_grad(theta_pred - theta_gt, cfg))
}

/// Plain loss for `|θ_pred| ≤ π/2`, linear penalty `|θ_pred|/(π/2)` outside.
///
/// The two branches do not meet at `|θ_pred| = π/2`; the jump is left as is.
pub fn abfl_strategy2(theta_pred: f64, theta_gt: f64, cfg: &AbflConfig) -> Result<f64> {
    check_angles(theta_pred, theta_gt)?;
    if theta_pred.abs() <= FRAC_PI_2 {
        abfl(theta_pred, theta_gt, cfg)
    } else {
        Ok(theta_pred.abs() / FRAC_PI_2)
    }
}

pub fn abfl_strategy2_grad(theta_pred: f64, theta_gt: f64, cfg: &AbflConfig) -> Result<f64> {
    check_angles(theta_pred, theta_gt)?;
    if theta_pred.abs() <= FRAC_PI_2 {
        abfl_grad(theta_pred, theta_gt, cfg)
    } else {
        Ok(theta_pred.signum() * 2.0 / PI)
    }
}

/// Maps an unbounded network output into `(−π/2, π/2)` with `atan`,
/// returning the angle and `dθ/dx` for the chain rule.
pub fn squash_to_angle(x: f64) -> (f64, f64) {
    (x.atan(), 1.0 / (1.0 + x * x))
}

/// Near-square variant. Boxes with `aspect_ratio ≥ ast` get the plain loss;
/// squarer boxes also forgive a quarter-turn:
/// `1 − s(Δ) − s(Δ + π/2)`, clamped at zero.
pub fn abfl_ast(
    theta_pred: f64,
    theta_gt: f64,
    aspect_ratio: f64,
    cfg: &AbflConfig,
) -> Result<f64> {
    check_angles(theta_pred, theta_gt)?;
    if use_plain_branch(aspect_ratio, cfg)? {
        return abfl(theta_pred, theta_gt, cfg);
    }
    Ok((1.0 - similarity_square(theta_pred - theta_gt, cfg)).max(0.0))
}

pub fn abfl_ast_grad(
    theta_pred: f64,
    theta_gt: f64,
    aspect_ratio: f64,
    cfg: &AbflConfig,
) -> Result<f64> {
    check_angles(theta_pred, theta_gt)?;
    if use_plain_branch(aspect_ratio, cfg)? {
        return abfl_grad(theta_pred, theta_gt, cfg);
    }
    Ok(-similarity_square_grad(theta_pred - theta_gt, cfg))
}

fn use_plain_branch(aspect_ratio: f64, cfg: &AbflConfig) -> Result<bool> {
    let ast = cfg
        .ast
        .ok_or_else(|| Error::Config("aspect-ratio threshold is not set".into()))?;
    if !aspect_ratio.is_finite() || aspect_ratio < 1.0 {
        return Err(Error::Domain(format!(
            "aspect ratio must be >= 1, got {aspect_ratio}"
        )));
    }
    Ok(aspect_ratio >= ast)
}

/// Angle loss and gradient with the configured strategy, applying the
/// near-square branch when both an aspect ratio and a threshold are given.
pub fn angle_loss(
    theta_pred: f64,
    theta_gt: f64,
    aspect_ratio: Option<f64>,
    cfg: &AbflConfig,
) -> Result<(f64, f64)> {
    if cfg.strategy == Strategy::Strategy2 && theta_pred.abs() > FRAC_PI_2 {
        return Ok((
            abfl_strategy2(theta_pred, theta_gt, cfg)?,
            abfl_strategy2_grad(theta_pred, theta_gt, cfg)?,
        ));
    }
    match (aspect_ratio, cfg.ast) {
        (Some(r), Some(_)) => Ok((
            abfl_ast(theta_pred, theta_gt, r, cfg)?,
            abfl_ast_grad(theta_pred, theta_gt, r, cfg)?,
        )),
        _ => Ok((
            abfl(theta_pred, theta_gt, cfg)?,
            abfl_grad(theta_pred, theta_gt, cfg)?,
        )),
    }
}

/// Smooth-L1 (Huber with slope 1): quadratic below `beta`, linear above.
pub fn smooth_l1(pred: f64, gt: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = (pred - gt).abs();
    Ok(if d < beta {
        0.5 * d * d / beta
    } else {
        d - 0.5 * beta
    })
}

pub fn smooth_l1_grad(pred: f64, gt: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = pred - gt;
    Ok(if d.abs() < beta { d / beta } else { d.signum() })
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("beta must be positive, got {beta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub reg: f64,
    pub angle: f64,
    pub aux: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 1.0,
            reg: 1.0,
            angle: DEFAULT_ANGLE_WEIGHT,
            aux: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg: f64,
    pub angle: f64,
    pub aux: f64,
    pub weights: LossWeights,
    pub total: f64,
}

/// Weighted sum of the four detector loss terms.
pub fn total_loss(
    cls: f64,
    reg: f64,
    angle: f64,
    aux: f64,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let w = [weights.cls, weights.reg, weights.angle, weights.aux];
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Config(format!(
            "loss weights must be >= 0, got {w:?}"
        )));
    }
    if ![cls, reg, angle, aux].iter().all(|x| x.is_finite()) {
        return Err(Error::Domain("loss terms must be finite".into()));
    }
    let total = weights.cls * cls + weights.reg * reg + weights.angle * angle + weights.aux * aux;
    Ok(LossBreakdown {
        cls,
        reg,
        angle,
        aux,
        weights,
        total,
    })
}
