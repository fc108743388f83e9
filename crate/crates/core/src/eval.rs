//! Rotated-detection matching and average precision.
//!
//! Matching follows the usual VOC/DOTA rules with SkewIoU as the overlap:
//! detections are visited by descending score, each claims the best still
//! unmatched ground truth when the overlap reaches the threshold, and
//! detections that only hit a `difficulty = 1` object are dropped from both
//! counts. Score ties keep input order. No score cut-off is applied.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::skew_iou;
use crate::obb::OrientedBoxLE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: OrientedBoxLE,
    pub class_id: usize,
    pub score: f64,
    pub image_id: String,
}

impl Detection {
    pub fn new(
        bbox: OrientedBoxLE,
        class_id: usize,
        score: f64,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Domain(format!(
                "score must lie in [0, 1], got {score}"
            )));
        }
        Ok(Self {
            bbox,
            class_id,
            score,
            image_id: image_id.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: OrientedBoxLE,
    pub class_id: usize,
    /// 0 = normal, 1 = difficult (ignored during evaluation).
    pub difficulty: u8,
    pub image_id: String,
}

impl GroundTruth {
    pub fn new(
        bbox: OrientedBoxLE,
        class_id: usize,
        difficulty: u8,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        if difficulty > 1 {
            return Err(Error::Domain(format!(
                "difficulty must be 0 or 1, got {difficulty}"
            )));
        }
        Ok(Self {
            bbox,
            class_id,
            difficulty,
            image_id: image_id.into(),
        })
    }

    pub fn is_ignored(&self) -> bool {
        self.difficulty != 0
    }
}

/// Indices sorted by descending score; equal scores keep input order.
pub fn rank_by_score(scores: impl IntoIterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.into_iter().collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchFlag {
    Tp,
    Fp,
    /// Best qualifying overlap is with a difficult object.
    Ignored,
}

/// Matches detections of one image and class against its ground truths.
///
/// Returns `(detection index, flag)` in ranked order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> Vec<(usize, MatchFlag)> {
    let order = rank_by_score(dets.iter().map(|d| d.score));
    let ignored: Vec<bool> = gts.iter().map(GroundTruth::is_ignored).collect();
    let ious: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            gts.iter()
                .map(|g| skew_iou(&dets[i].bbox, &g.bbox))
                .collect()
        })
        .collect();
    let mut matched = vec![false; gts.len()];
    order
        .iter()
        .zip(&ious)
        .map(|(&i, row)| (i, match_one(row, &ignored, &mut matched, iou_thresh)))
        .collect()
}

fn match_one(ious: &[f64], ignored: &[bool], matched: &mut [bool], thresh: f64) -> MatchFlag {
    let mut best: Option<(usize, f64)> = None;
    for (g, &iou) in ious.iter().enumerate() {
        if ignored[g] || matched[g] {
            continue;
        }
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    if let Some((g, iou)) = best {
        if iou >= thresh {
            matched[g] = true;
            return MatchFlag::Tp;
        }
    }
    let hits_ignored = ious
        .iter()
        .zip(ignored)
        .any(|(&iou, &ign)| ign && iou >= thresh);
    if hits_ignored {
        MatchFlag::Ignored
    } else {
        MatchFlag::Fp
    }
}

/// Precision/recall along a ranked detection list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` after each ranked, non-ignored detection.
    pub points: Vec<(f64, f64)>,
    pub tp: Vec<bool>,
    pub n_gt: usize,
}

impl PrCurve {
    /// Builds the curve from ranked flags; ignored detections are skipped.
    pub fn from_flags(flags: &[MatchFlag], n_gt: usize) -> Self {
        let tp: Vec<bool> = flags
            .iter()
            .filter(|f| **f != MatchFlag::Ignored)
            .map(|f| *f == MatchFlag::Tp)
            .collect();
        let mut points = Vec::with_capacity(tp.len());
        let (mut ctp, mut cfp) = (0usize, 0usize);
        for &t in &tp {
            if t {
                ctp += 1;
            } else {
                cfp += 1;
            }
            let recall = if n_gt == 0 {
                0.0
            } else {
                ctp as f64 / n_gt as f64
            };
            points.push((recall, ctp as f64 / (ctp + cfp) as f64));
        }
        Self { points, tp, n_gt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// 11-point interpolation at recall 0, 0.1, …, 1.
    #[default]
    Voc07,
    /// 101-point interpolation at recall 0, 0.01, …, 1.
    Coco101,
}

impl Protocol {
    fn levels(self) -> usize {
        match self {
            Protocol::Voc07 => 10,
            Protocol::Coco101 => 100,
        }
    }
}

/// Interpolated AP; `None` when the class has no countable ground truth.
///
/// At each recall level the precision is the maximum precision over all
/// points with recall at or above that level (0 if none).
pub fn average_precision(pr: &PrCurve, protocol: Protocol) -> Option<f64> {
    if pr.n_gt == 0 {
        return None;
    }
    // envelope from the right: best precision at or beyond each rank
    let mut envelope: Vec<f64> = pr.points.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let n = protocol.levels();
    let mut sum = 0.0;
    let mut idx = 0;
    for k in 0..=n {
        let level = k as f64 / n as f64;
        while idx < pr.points.len() && pr.points[idx].0 < level {
            idx += 1;
        }
        if idx < pr.points.len() {
            sum += envelope[idx];
        }
    }
    Some(sum / (n + 1) as f64)
}

/// COCO-style IoU thresholds 0.50, 0.55, …, 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: usize,
    pub n_gt: usize,
    pub n_det: usize,
    /// One entry per threshold; `None` for classes without ground truth.
    pub ap: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub protocol: Protocol,
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassAp>,
    /// Mean AP over classes with ground truth, per threshold.
    pub map_per_threshold: Vec<Option<f64>>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    /// Mean of `map_per_threshold`.
    pub map: Option<f64>,
}

/// Per-class AP at every threshold, with the usual mAP aggregates.
pub fn map_at(
    dets: &[Detection],
    gts: &[GroundTruth],
    thresholds: &[f64],
    protocol: Protocol,
) -> Result<MapReport> {
    if thresholds.is_empty() {
        return Err(Error::Config(
            "at least one IoU threshold is required".into(),
        ));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Config(format!(
            "IoU threshold must lie in (0, 1], got {t}"
        )));
    }
    if gts.is_empty() {
        return Err(Error::Domain("no ground truth to evaluate against".into()));
    }
    if let Some(d) = dets.iter().find(|d| !d.score.is_finite()) {
        return Err(Error::Domain(format!("non-finite score {}", d.score)));
    }

    let classes: BTreeSet<usize> = gts
        .iter()
        .map(|g| g.class_id)
        .chain(dets.iter().map(|d| d.class_id))
        .collect();
    let classes: Vec<usize> = classes.into_iter().collect();

    let per_class: Vec<ClassAp> = classes
        .par_iter()
        .map(|&c| evaluate_class(c, dets, gts, thresholds, protocol))
        .collect();

    let map_per_threshold: Vec<Option<f64>> = (0..thresholds.len())
        .map(|t| mean(per_class.iter().filter_map(|c| c.ap[t])))
        .collect();
    let pick = |target: f64| {
        thresholds
            .iter()
            .position(|t| (t - target).abs() < 1e-9)
            .and_then(|i| map_per_threshold[i])
    };
    Ok(MapReport {
        protocol,
        thresholds: thresholds.to_vec(),
        map50: pick(0.5),
        map75: pick(0.75),
        map: mean(map_per_threshold.iter().flatten().copied()),
        map_per_threshold,
        classes: per_class,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn evaluate_class(
    class_id: usize,
    dets: &[Detection],
    gts: &[GroundTruth],
    thresholds: &[f64],
    protocol: Protocol,
) -> ClassAp {
    let mut by_image: HashMap<&str, Vec<&GroundTruth>> = HashMap::new();
    for g in gts.iter().filter(|g| g.class_id == class_id) {
        by_image.entry(g.image_id.as_str()).or_default().push(g);
    }
    let n_gt = by_image
        .values()
        .flatten()
        .filter(|g| !g.is_ignored())
        .count();

    let class_dets: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class_id).collect();
    let order = rank_by_score(class_dets.iter().map(|d| d.score));
    // overlaps are threshold independent, so compute them once
    let ious: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let d = class_dets[i];
            by_image
                .get(d.image_id.as_str())
                .map_or_else(Vec::new, |g| {
                    g.iter().map(|g| skew_iou(&d.bbox, &g.bbox)).collect()
                })
        })
        .collect();
    let ignored: HashMap<&str, Vec<bool>> = by_image
        .iter()
        .map(|(k, v)| (*k, v.iter().map(|g| g.is_ignored()).collect()))
        .collect();

    let ap = thresholds
        .iter()
        .map(|&t| {
            let mut matched: HashMap<&str, Vec<bool>> = by_image
                .iter()
                .map(|(k, v)| (*k, vec![false; v.len()]))
                .collect();
            let flags: Vec<MatchFlag> = order
                .iter()
                .zip(&ious)
                .map(|(&i, row)| {
                    let img = class_dets[i].image_id.as_str();
                    match (matched.get_mut(img), ignored.get(img)) {
                        (Some(m), Some(ign)) => match_one(row, ign, m, t),
                        _ => MatchFlag::Fp,
                    }
                })
                .collect();
            average_precision(&PrCurve::from_flags(&flags, n_gt), protocol)
        })
        .collect();

    ClassAp {
        class_id,
        n_gt,
        n_det: class_dets.len(),
        ap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, h: f64) -> OrientedBoxLE {
        OrientedBoxLE::new(cx, 0.0, 1.0, h, 0.0).unwrap()
    }

    fn det(b: OrientedBoxLE, score: f64, class_id: usize, img: &str) -> Detection {
        Detection::new(b, class_id, score, img).unwrap()
    }

    fn gt(b: OrientedBoxLE, class_id: usize, difficulty: u8, img: &str) -> GroundTruth {
        GroundTruth::new(b, class_id, difficulty, img).unwrap()
    }

    /// Box sharing the centre of `bx(0, 1)` with IoU exactly `iou` (< 1).
    fn with_iou(iou: f64) -> OrientedBoxLE {
        bx(0.0, 1.0 / iou)
    }

    #[test]
    fn constructors_validate() {
        assert!(Detection::new(bx(0.0, 2.0), 0, 1.5, "a").is_err());
        assert!(Detection::new(bx(0.0, 2.0), 0, f64::NAN, "a").is_err());
        assert!(GroundTruth::new(bx(0.0, 2.0), 0, 2, "a").is_err());
    }

    #[test]
    fn match_examples() {
        let g = [gt(bx(0.0, 1.0), 0, 0, "a")];
        let d = [det(with_iou(0.9), 0.9, 0, "a")];
        assert_eq!(match_detections(&d, &g, 0.5), vec![(0, MatchFlag::Tp)]);

        let d = [
            det(with_iou(0.2), 0.9, 0, "a"),
            det(with_iou(0.9), 0.8, 0, "a"),
        ];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m, vec![(0, MatchFlag::Fp), (1, MatchFlag::Tp)]);

        let g = [gt(bx(0.0, 1.0), 0, 1, "a")];
        let d = [det(with_iou(0.8), 0.9, 0, "a")];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m, vec![(0, MatchFlag::Ignored)]);
        let flags: Vec<MatchFlag> = m.iter().map(|x| x.1).collect();
        let n_gt = g.iter().filter(|g| !g.is_ignored()).count();
        assert_eq!(n_gt, 0);
        let pr = PrCurve::from_flags(&flags, n_gt);
        assert!(pr.points.is_empty());
        assert_eq!(average_precision(&pr, Protocol::Voc07), None);
    }

    #[test]
    fn each_gt_matched_once() {
        let g = [gt(bx(0.0, 1.0), 0, 0, "a")];
        let d = [
            det(bx(0.0, 1.0), 0.9, 0, "a"),
            det(bx(0.0, 1.0), 0.8, 0, "a"),
        ];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m, vec![(0, MatchFlag::Tp), (1, MatchFlag::Fp)]);
    }

    #[test]
    fn iou_threshold_is_inclusive() {
        let g = [gt(bx(0.0, 1.0), 0, 0, "a")];
        let d = [det(bx(0.0, 2.0), 0.9, 0, "a")];
        assert_eq!(skew_iou(&d[0].bbox, &g[0].bbox), 0.5);
        assert_eq!(match_detections(&d, &g, 0.5)[0].1, MatchFlag::Tp);
    }

    #[test]
    fn ap_examples() {
        use MatchFlag::*;
        let one = PrCurve::from_flags(&[Tp], 1);
        assert_eq!(average_precision(&one, Protocol::Voc07), Some(1.0));
        assert_eq!(average_precision(&one, Protocol::Coco101), Some(1.0));

        let fp_tp = PrCurve::from_flags(&[Fp, Tp], 1);
        assert_eq!(fp_tp.points, vec![(0.0, 0.0), (1.0, 0.5)]);
        let ap = average_precision(&fp_tp, Protocol::Voc07).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);

        let half = PrCurve::from_flags(&[Tp], 2);
        let ap = average_precision(&half, Protocol::Voc07).unwrap();
        assert!((ap - 6.0 / 11.0).abs() < 1e-12);
        let ap = average_precision(&half, Protocol::Coco101).unwrap();
        assert!((ap - 51.0 / 101.0).abs() < 1e-12);

        let none = PrCurve::from_flags(&[], 3);
        assert_eq!(average_precision(&none, Protocol::Voc07), Some(0.0));
    }

    #[test]
    fn protocols_agree_on_constant_precision() {
        use MatchFlag::*;
        for n in 1..6 {
            let all_tp = PrCurve::from_flags(&vec![Tp; n], n);
            assert_eq!(
                average_precision(&all_tp, Protocol::Voc07),
                average_precision(&all_tp, Protocol::Coco101)
            );
            let all_fp = PrCurve::from_flags(&vec![Fp; n], n);
            assert_eq!(
                average_precision(&all_fp, Protocol::Voc07),
                average_precision(&all_fp, Protocol::Coco101)
            );
        }
    }

    #[test]
    fn map_examples() {
        let g = vec![gt(bx(0.0, 1.0), 0, 0, "a")];
        let d = vec![det(bx(0.0, 1.0), 0.9, 0, "a")];
        let r = map_at(&d, &g, &coco_thresholds(), Protocol::Voc07).unwrap();
        assert_eq!((r.map50, r.map75, r.map), (Some(1.0), Some(1.0), Some(1.0)));

        let d = vec![det(with_iou(0.72), 0.9, 0, "a")];
        assert!((skew_iou(&d[0].bbox, &g[0].bbox) - 0.72).abs() < 1e-12);
        let r = map_at(&d, &g, &coco_thresholds(), Protocol::Voc07).unwrap();
        assert_eq!(r.map50, Some(1.0));
        assert_eq!(r.map75, Some(0.0));
        assert_eq!(r.map, Some(0.5));
        let aps: Vec<f64> = r.classes[0].ap.iter().map(|a| a.unwrap()).collect();
        assert_eq!(aps, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let g = vec![gt(bx(0.0, 1.0), 0, 0, "a"), gt(bx(10.0, 1.0), 1, 0, "a")];
        let d = vec![
            det(bx(0.0, 1.0), 0.9, 0, "a"),
            det(bx(30.0, 1.0), 0.9, 1, "a"),
        ];
        let r = map_at(&d, &g, &[0.5], Protocol::Voc07).unwrap();
        assert_eq!(r.map50, Some(0.5));
        assert_eq!(r.map75, None);
    }

    #[test]
    fn map_errors_and_exclusions() {
        let d = vec![det(bx(0.0, 1.0), 0.9, 0, "a")];
        assert!(map_at(&d, &[], &[0.5], Protocol::Voc07).is_err());
        let g = vec![gt(bx(0.0, 1.0), 0, 0, "a")];
        assert!(map_at(&d, &g, &[], Protocol::Voc07).is_err());
        assert!(map_at(&d, &g, &[1.5], Protocol::Voc07).is_err());
        // a class with detections but no ground truth stays out of the mean
        let d = vec![
            det(bx(0.0, 1.0), 0.9, 0, "a"),
            det(bx(5.0, 1.0), 0.9, 7, "a"),
        ];
        let r = map_at(&d, &g, &[0.5], Protocol::Voc07).unwrap();
        assert_eq!(r.map50, Some(1.0));
        assert_eq!(r.classes.len(), 2);
        assert_eq!(r.classes[1].ap, vec![None]);
    }

    #[test]
    fn detections_only_match_their_image() {
        let g = vec![gt(bx(0.0, 1.0), 0, 0, "a")];
        let d = vec![det(bx(0.0, 1.0), 0.9, 0, "b")];
        let r = map_at(&d, &g, &[0.5], Protocol::Voc07).unwrap();
        assert_eq!(r.map50, Some(0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scene() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>)> {
            let g = proptest::collection::vec((0.0..20.0f64, 1.0..3.0f64, 0usize..2, 0u8..2), 1..6);
            let d = proptest::collection::vec(
                (0.0..20.0f64, 1.0..3.0f64, 0usize..2, 0.0..1.0f64),
                0..10,
            );
            (g, d).prop_map(|(g, d)| {
                let gts = g
                    .into_iter()
                    .map(|(x, h, c, diff)| gt(bx(x, h), c, diff, "a"))
                    .collect();
                let dets = d
                    .into_iter()
                    .map(|(x, h, c, s)| det(bx(x, h), s, c, "a"))
                    .collect();
                (dets, gts)
            })
        }

        proptest! {
            #[test]
            fn ap_invariant_to_input_order((dets, gts) in scene(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut distinct = dets.clone();
                for (i, d) in distinct.iter_mut().enumerate() {
                    d.score = (d.score * 1000.0).floor() / 1000.0 + i as f64 * 1e-6;
                }
                let base = map_at(&distinct, &gts, &[0.5], Protocol::Voc07).unwrap();
                let mut shuffled = distinct.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let other = map_at(&shuffled, &gts, &[0.5], Protocol::Voc07).unwrap();
                prop_assert_eq!(base.map50, other.map50);
            }

            #[test]
            fn lowest_ranked_additions((dets, gts) in scene()) {
                use MatchFlag::*;
                let flags: Vec<MatchFlag> = match_detections(&dets, &gts, 0.5).iter().map(|x| x.1).collect();
                let n_gt = gts.iter().filter(|g| !g.is_ignored()).count().max(1);
                for p in [Protocol::Voc07, Protocol::Coco101] {
                    let base = average_precision(&PrCurve::from_flags(&flags, n_gt), p).unwrap();
                    let mut with_fp = flags.clone();
                    with_fp.push(Fp);
                    let ap_fp = average_precision(&PrCurve::from_flags(&with_fp, n_gt), p).unwrap();
                    prop_assert!(ap_fp <= base);
                    let tps = flags.iter().filter(|f| **f == Tp).count();
                    if tps < n_gt {
                        let mut with_tp = flags.clone();
                        with_tp.push(Tp);
                        let ap_tp = average_precision(&PrCurve::from_flags(&with_tp, n_gt), p).unwrap();
                        prop_assert!(ap_tp >= base);
                    }
                }
            }

            #[test]
            fn single_threshold_map_is_class_mean((dets, gts) in scene()) {
                let r = map_at(&dets, &gts, &[0.5], Protocol::Coco101).unwrap();
                let aps: Vec<f64> = r.classes.iter().filter_map(|c| c.ap[0]).collect();
                if aps.is_empty() {
                    prop_assert_eq!(r.map50, None);
                } else {
                    let m = aps.iter().sum::<f64>() / aps.len() as f64;
                    prop_assert!((r.map50.unwrap() - m).abs() < 1e-12);
                }
                for c in &r.classes {
                    if let Some(ap) = c.ap[0] { prop_assert!((0.0..=1.0).contains(&ap)); }
                }
            }
        }
    }
}
