use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::{Detection, GroundTruth};
use crate::obb::{corners_to_le, Point};

use super::{ClassTable, UNKNOWN_CLASS_ID};

const METADATA_PREFIXES: [&str; 2] = ["imagesource:", "gsd:"];

/// One `x1 y1 … x4 y4 class difficulty` line, kept as written.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub corners: [f64; 8],
    pub class_name: String,
    pub difficulty: u8,
}

impl AnnotationRecord {
    pub fn quad(&self) -> [Point; 4] {
        let c = &self.corners;
        [
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ]
    }
}

/// A DOTA label file: leading metadata lines followed by records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationFile {
    pub metadata: Vec<String>,
    pub records: Vec<AnnotationRecord>,
}

impl AnnotationFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = AnnotationFile::default();
        let mut in_header = true;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if in_header && METADATA_PREFIXES.iter().any(|p| line.starts_with(p)) {
                file.metadata.push(line.to_string());
                continue;
            }
            in_header = false;
            file.records.push(parse_record(line, idx + 1)?);
        }
        Ok(file)
    }

    /// Writes metadata verbatim and coordinates with six decimals.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for m in &self.metadata {
            out.push_str(m);
            out.push('\n');
        }
        for r in &self.records {
            for c in &r.corners {
                out.push_str(&format!("{c:.6} "));
            }
            out.push_str(&format!("{} {}\n", r.class_name, r.difficulty));
        }
        out
    }

    /// Converts records to ground truths. In strict mode unknown classes are
    /// an error; otherwise they get [`UNKNOWN_CLASS_ID`].
    pub fn to_ground_truth(
        &self,
        image_id: &str,
        table: &ClassTable,
        strict: bool,
    ) -> Result<Vec<GroundTruth>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let class_id = match table.id(&r.class_name) {
                    Some(id) => id,
                    None if strict => {
                        return Err(Error::Parse {
                            line: i + 1 + self.metadata.len(),
                            msg: format!("unknown class `{}`", r.class_name),
                        })
                    }
                    None => UNKNOWN_CLASS_ID,
                };
                let bbox = corners_to_le(&r.quad())?;
                GroundTruth::new(bbox, class_id, r.difficulty, image_id)
            })
            .collect()
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<AnnotationRecord> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 10 {
        return Err(err(format!("expected 10 fields, found {}", tokens.len())));
    }
    let mut corners = [0.0; 8];
    for (slot, tok) in corners.iter_mut().zip(&tokens[..8]) {
        *slot = parse_coord(tok).map_err(&err)?;
    }
    let difficulty = match tokens[9] {
        "0" => 0,
        "1" => 1,
        other => return Err(err(format!("difficulty must be 0 or 1, got `{other}`"))),
    };
    Ok(AnnotationRecord {
        corners,
        class_name: tokens[8].to_string(),
        difficulty,
    })
}

fn parse_coord(tok: &str) -> std::result::Result<f64, String> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("invalid coordinate `{tok}`")),
    }
}

/// Parses label text into ground truths for one image.
pub fn parse_dota_annotations(
    text: &str,
    image_id: &str,
    table: &ClassTable,
    strict: bool,
) -> Result<Vec<GroundTruth>> {
    let file = AnnotationFile::parse(text)?;
    // report unknown classes with their true line numbers
    if strict {
        let mut record = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || METADATA_PREFIXES.iter().any(|p| line.starts_with(p)) {
                continue;
            }
            let r = &file.records[record];
            record += 1;
            if table.id(&r.class_name).is_none() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("unknown class `{}`", r.class_name),
                });
            }
        }
    }
    file.to_ground_truth(image_id, table, strict)
}

/// Renders detections as per-class submission files keyed by class name,
/// one `image_id score x1 y1 … x4 y4` line each.
pub fn format_submission(
    dets: &[Detection],
    table: &ClassTable,
) -> Result<BTreeMap<String, String>> {
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    for d in dets {
        let name = table
            .name(d.class_id)
            .ok_or_else(|| Error::Config(format!("class id {} is not in the table", d.class_id)))?;
        if d.image_id.contains(char::is_whitespace) {
            return Err(Error::Domain(format!(
                "image id `{}` contains whitespace",
                d.image_id
            )));
        }
        let out = files.entry(name.to_string()).or_default();
        out.push_str(&format!("{} {:.6}", d.image_id, d.score));
        for p in d.bbox.corners() {
            out.push_str(&format!(" {:.6} {:.6}", p.x, p.y));
        }
        out.push('\n');
    }
    Ok(files)
}

/// Reads one per-class submission file back into detections.
pub fn parse_submission(text: &str, class_id: usize) -> Result<Vec<Detection>> {
    let mut dets = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: idx + 1, msg };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", tokens.len())));
        }
        let score = parse_coord(tokens[1]).map_err(&err)?;
        let mut c = [0.0; 8];
        for (slot, tok) in c.iter_mut().zip(&tokens[2..]) {
            *slot = parse_coord(tok).map_err(&err)?;
        }
        let quad = [
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ];
        let bbox = corners_to_le(&quad).map_err(|e| err(e.to_string()))?;
        let det =
            Detection::new(bbox, class_id, score, tokens[0]).map_err(|e| err(e.to_string()))?;
        dets.push(det);
    }
    Ok(dets)
}
