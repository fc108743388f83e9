use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use abfl_core::data_io::{
    format_submission, merge_detections, multiscale_grid, parse_dota_annotations, parse_submission,
    project_detection, tile_grid, ClassTable, GridManifest, PatchSpec,
};
use abfl_core::eval::{coco_thresholds, map_at, Detection, GroundTruth, MapReport};
use abfl_core::fit::{boundary_report, fit_angle, uniform_grid, FitConfig, LossKind, Trajectory};
use abfl_core::loss::{abfl, abfl_ast, abfl_ast_grad, abfl_grad, AbflConfig, GammaMode};
use abfl_core::Error;

use crate::{
    BoundaryArgs, Command, EvalArgs, FitArgs, Format, LossCurveArgs, MergeArgs, SimulateArgs,
    TileArgs, SCHEMA_VERSION,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::LossCurve(a) => loss_curve(a),
        Command::Simulate(a) => simulate(a),
        Command::BoundaryReport(a) => boundary(a),
        Command::Eval(a) => eval(a),
        Command::Tile(a) => tile(a),
        Command::Merge(a) => merge(a),
    }
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Shortest round-trip form, scientific for very large or small values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_string(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes)?)
}

fn loss_curve(a: LossCurveArgs) -> Result<()> {
    let mode: GammaMode = a.gamma_mode.into();
    let cfgs = a
        .kappa
        .iter()
        .map(|&k| AbflConfig::new(k, mode)?.with_ast(a.ast))
        .collect::<abfl_core::Result<Vec<_>>>()?;
    let mut header = vec!["delta".to_string(), "delta_deg".to_string()];
    for k in &a.kappa {
        header.push(format!("loss_k{k}"));
        header.push(format!("grad_k{k}"));
        if a.ast.is_some() {
            header.push(format!("loss_ast_k{k}"));
            header.push(format!("grad_ast_k{k}"));
        }
    }
    let n = a.samples as usize;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let d = if n == 1 {
            0.0
        } else {
            -PI + 2.0 * PI * i as f64 / (n - 1) as f64
        };
        let mut row = vec![num(d), num(d.to_degrees())];
        for c in &cfgs {
            row.push(num(abfl(d, 0.0, c)?));
            row.push(num(abfl_grad(d, 0.0, c)?));
            if a.ast.is_some() {
                row.push(num(abfl_ast(d, 0.0, a.aspect, c)?));
                row.push(num(abfl_ast_grad(d, 0.0, a.aspect, c)?));
            }
        }
        rows.push(row);
    }
    emit(a.out.as_deref(), &csv_string(&header, rows)?)
}

fn fit_configs(f: &FitArgs, kind: LossKind) -> Result<(FitConfig, AbflConfig)> {
    let cfg = FitConfig {
        loss_kind: kind,
        step_size: f.step_size,
        max_steps: f.steps,
        tol: f.tol.to_radians(),
        init_jitter: f.jitter.to_radians(),
        aspect_ratio: f.aspect,
        smooth_l1_beta: f.beta,
        seed: f.seed,
    };
    cfg.validate()?;
    let loss = AbflConfig::new(f.kappa, f.gamma_mode.into())?.with_ast(Some(f.ast))?;
    Ok((cfg, loss))
}

#[derive(Serialize)]
struct StepOut {
    step: usize,
    theta_deg: f64,
    loss: f64,
    grad: f64,
}

#[derive(Serialize)]
struct SimulateOut {
    schema_version: u32,
    loss: LossKind,
    kappa: f64,
    gamma_mode: GammaMode,
    theta_gt_deg: f64,
    theta_init_deg: f64,
    jittered: bool,
    iterations: usize,
    converged: bool,
    diverged: bool,
    loss_increases: usize,
    final_theta_deg: f64,
    final_error_deg: f64,
    path_length_deg: f64,
    steps: Vec<StepOut>,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (cfg, loss) = fit_configs(&a.fit, a.loss.into())?;
    let t: Trajectory = fit_angle(a.gt.to_radians(), a.init.to_radians(), &cfg, &loss)?;
    let steps: Vec<StepOut> = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| StepOut {
            step: i,
            theta_deg: s.theta.to_degrees(),
            loss: s.loss,
            grad: s.grad,
        })
        .collect();
    let content = match a.fit.format {
        Format::Json => to_json(&SimulateOut {
            schema_version: SCHEMA_VERSION,
            loss: t.loss_kind,
            kappa: loss.kappa(),
            gamma_mode: loss.gamma_mode(),
            theta_gt_deg: a.gt,
            theta_init_deg: t.theta_init.to_degrees(),
            jittered: t.jittered,
            iterations: t.iterations,
            converged: t.converged,
            diverged: t.diverged,
            loss_increases: t.loss_increases,
            final_theta_deg: t.final_theta.to_degrees(),
            final_error_deg: t.final_circular_error.to_degrees(),
            path_length_deg: t.path_length.to_degrees(),
            steps,
        })?,
        Format::Csv => csv_string(
            &["step", "theta_deg", "loss", "grad"].map(String::from),
            steps.iter().map(|s| {
                vec![
                    s.step.to_string(),
                    num(s.theta_deg),
                    num(s.loss),
                    num(s.grad),
                ]
            }),
        )?,
    };
    emit(a.fit.out.as_deref(), &content)
}

#[derive(Serialize)]
struct RowOut {
    loss: LossKind,
    theta_gt_deg: f64,
    theta_init_deg: f64,
    final_error_deg: f64,
    path_length_deg: f64,
    steps: usize,
    converged: bool,
    diverged: bool,
    jittered: bool,
}

#[derive(Serialize)]
struct SummaryOut {
    loss: LossKind,
    pairs: usize,
    successes: usize,
    success_rate: Option<f64>,
    mean_path_length_deg: Option<f64>,
    divergences: usize,
}

#[derive(Serialize)]
struct BoundaryOut {
    schema_version: u32,
    kappa: f64,
    gamma_mode: GammaMode,
    grid: usize,
    summary: Vec<SummaryOut>,
    rows: Vec<RowOut>,
}

fn boundary(a: BoundaryArgs) -> Result<()> {
    let (cfg, loss) = fit_configs(&a.fit, LossKind::Abfl)?;
    let kinds: Vec<LossKind> = a.losses.iter().map(|&l| l.into()).collect();
    let report = boundary_report(&uniform_grid(a.grid), &kinds, &cfg, &loss)?;
    let rows: Vec<RowOut> = report
        .rows
        .iter()
        .map(|r| RowOut {
            loss: r.loss_kind,
            theta_gt_deg: r.theta_gt.to_degrees(),
            theta_init_deg: r.theta_init.to_degrees(),
            final_error_deg: r.final_error.to_degrees(),
            path_length_deg: r.path_length.to_degrees(),
            steps: r.steps,
            converged: r.converged,
            diverged: r.diverged,
            jittered: r.jittered,
        })
        .collect();
    let content = match a.fit.format {
        Format::Json => to_json(&BoundaryOut {
            schema_version: SCHEMA_VERSION,
            kappa: loss.kappa(),
            gamma_mode: loss.gamma_mode(),
            grid: a.grid,
            summary: report
                .summary
                .iter()
                .map(|s| SummaryOut {
                    loss: s.loss_kind,
                    pairs: s.pairs,
                    successes: s.successes,
                    success_rate: s.success_rate,
                    mean_path_length_deg: s.mean_path_length.map(f64::to_degrees),
                    divergences: s.divergences,
                })
                .collect(),
            rows,
        })?,
        Format::Csv => csv_string(
            &[
                "loss",
                "theta_gt_deg",
                "theta_init_deg",
                "final_error_deg",
                "path_length_deg",
                "steps",
                "converged",
                "diverged",
                "jittered",
            ]
            .map(String::from),
            rows.iter().map(|r| {
                vec![
                    r.loss.name().to_string(),
                    num(r.theta_gt_deg),
                    num(r.theta_init_deg),
                    num(r.final_error_deg),
                    num(r.path_length_deg),
                    r.steps.to_string(),
                    r.converged.to_string(),
                    r.diverged.to_string(),
                    r.jittered.to_string(),
                ]
            }),
        )?,
    };
    emit(a.fit.out.as_deref(), &content)
}

/// `*.txt` files in `dir`, sorted by name.
fn text_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in
        fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?
    {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads `Task1_<class>.txt` files; unknown classes fail unless `lenient`.
fn load_detections(dir: &Path, table: &ClassTable, lenient: bool) -> Result<Vec<Detection>> {
    let mut dets = Vec::new();
    for path in text_files(dir)? {
        let name = stem(&path);
        let class = name.strip_prefix("Task1_").unwrap_or(&name);
        let Some(class_id) = table.id(class) else {
            if lenient {
                continue;
            }
            return Err(Error::Config(format!(
                "detection file {} names unknown class `{class}`",
                path.display()
            ))
            .into());
        };
        let parsed = parse_submission(&read(&path)?, class_id)
            .with_context(|| format!("parsing {}", path.display()))?;
        dets.extend(parsed);
    }
    Ok(dets)
}

#[derive(Serialize)]
struct ClassOut {
    class: String,
    class_id: usize,
    n_gt: usize,
    n_det: usize,
    ap: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct EvalOut {
    schema_version: u32,
    protocol: abfl_core::eval::Protocol,
    thresholds: Vec<f64>,
    map50: Option<f64>,
    map75: Option<f64>,
    map: Option<f64>,
    map_per_threshold: Vec<Option<f64>>,
    classes: Vec<ClassOut>,
}

fn eval(a: EvalArgs) -> Result<()> {
    let table = ClassTable::dota();
    let mut gts: Vec<GroundTruth> = Vec::new();
    for path in text_files(&a.gt_dir)? {
        let parsed = parse_dota_annotations(&read(&path)?, &stem(&path), &table, !a.lenient)
            .with_context(|| format!("parsing {}", path.display()))?;
        gts.extend(parsed);
    }
    let dets = load_detections(&a.det_dir, &table, a.lenient)?;
    let thresholds = a.thresholds.clone().unwrap_or_else(coco_thresholds);
    let r: MapReport = map_at(&dets, &gts, &thresholds, a.protocol.into())?;
    let out = EvalOut {
        schema_version: SCHEMA_VERSION,
        protocol: r.protocol,
        thresholds: r.thresholds,
        map50: r.map50,
        map75: r.map75,
        map: r.map,
        map_per_threshold: r.map_per_threshold,
        classes: r
            .classes
            .into_iter()
            .map(|c| ClassOut {
                class: table.name(c.class_id).unwrap_or("unknown").to_string(),
                class_id: c.class_id,
                n_gt: c.n_gt,
                n_det: c.n_det,
                ap: c.ap,
            })
            .collect(),
    };
    emit(a.out.as_deref(), &to_json(&out)?)
}

fn tile(a: TileArgs) -> Result<()> {
    let specs = match &a.scales {
        Some(scales) => {
            let stride = match a.stride {
                Some(s) => s,
                None => a
                    .patch
                    .checked_sub(a.overlap)
                    .filter(|s| *s > 0)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "overlap {} must be smaller than patch {}",
                            a.overlap, a.patch
                        ))
                    })?,
            };
            multiscale_grid(a.width, a.height, scales, a.patch, stride)?
        }
        None => tile_grid(a.width, a.height, a.patch, a.overlap)?,
    };
    let manifest = GridManifest::new(&a.image_id, a.width, a.height, a.patch, &specs);
    emit(a.out.as_deref(), &to_json(&manifest)?)
}

fn merge(a: MergeArgs) -> Result<()> {
    let mut patches: HashMap<String, (String, PatchSpec)> = HashMap::new();
    for path in &a.manifest {
        let m: GridManifest = serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        if m.schema_version != abfl_core::data_io::MANIFEST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "manifest {} has schema version {}",
                path.display(),
                m.schema_version
            ))
            .into());
        }
        for p in m.patches {
            patches.insert(p.id, (m.image_id.clone(), p.spec));
        }
    }

    let table = ClassTable::dota();
    let mut projected = Vec::new();
    for d in load_detections(&a.dets, &table, false)? {
        let (image, spec) = patches.get(&d.image_id).ok_or_else(|| {
            Error::Config(format!("patch `{}` is not in any manifest", d.image_id))
        })?;
        let mut p = project_detection(&d, spec)?;
        p.image_id = image.clone();
        projected.push(p);
    }
    let merged = merge_detections(&[projected], a.nms_iou)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (class, content) in format_submission(&merged, &table)? {
        let path = a.out.join(format!("Task1_{class}.txt"));
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
