//! Annotation and detection ingestion, and the on-disk map format.
//!
//! Maps are stored as raw little-endian `f32` values in row-major order with
//! a JSON sidecar at `<path>.json`:
//!
//! ```json
//! {"width":8,"height":8,"dtype":"f32le","layout":"row-major"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boxes::GtBox;
use crate::error::{Error, Result};
use crate::eval::{Detection, GroundTruth};
use crate::map::ScalarMap;

pub const CSV_HEADER: [&str; 7] = ["image_id", "width", "height", "x1", "y1", "x2", "y2"];

/// Boxes of one image, validated against its size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<GtBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationFormat {
    Csv,
    Json,
}

impl AnnotationFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(e) if e == "csv" => Ok(Self::Csv),
            Some(e) if e == "json" => Ok(Self::Json),
            _ => Err(Error::validation(format!(
                "{}: cannot infer annotation format, expected .csv or .json",
                path.display()
            ))),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_annotations(path: &Path, format: AnnotationFormat) -> Result<Vec<AnnotationRecord>> {
    let text = read_to_string(path)?;
    let origin = path.display().to_string();
    match format {
        AnnotationFormat::Csv => parse_annotations_csv(&text, &origin),
        AnnotationFormat::Json => parse_annotations_json(&text, &origin),
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    image_id: String,
    width: usize,
    height: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

fn validated_box(
    coords: [f64; 4],
    width: usize,
    height: usize,
    origin: impl FnOnce() -> String,
) -> Result<GtBox> {
    GtBox::new(coords[0], coords[1], coords[2], coords[3])
        .and_then(|b| b.check_within(width as f64, height as f64).map(|_| b))
        .map_err(|e| Error::parse(origin(), e))
}

fn check_image(
    id: &str,
    width: usize,
    height: usize,
    origin: impl FnOnce() -> String,
) -> Result<()> {
    if id.is_empty() {
        return Err(Error::parse(origin(), "empty image_id"));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(
            origin(),
            format!("image '{id}' has zero size {width}x{height}"),
        ));
    }
    Ok(())
}

/// One row per box, grouped by `image_id`; records come back sorted by id.
pub fn parse_annotations_csv(text: &str, origin: &str) -> Result<Vec<AnnotationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(format!("{origin}:1"), e))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::parse(
            format!("{origin}:1"),
            format!("expected header '{}'", CSV_HEADER.join(",")),
        ));
    }

    let mut records: std::collections::BTreeMap<String, AnnotationRecord> = Default::default();
    for raw in reader.records() {
        let raw = raw.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("{origin}:{line}"), e)
        })?;
        let line = raw.position().map_or(0, |p| p.line());
        let row: CsvRow = raw
            .deserialize(Some(&header))
            .map_err(|e| Error::parse(format!("{origin}:{line}"), e))?;
        let at = || format!("{origin}:{line}");
        check_image(&row.image_id, row.width, row.height, at)?;
        let gt = validated_box([row.x1, row.y1, row.x2, row.y2], row.width, row.height, at)?;
        let rec = records
            .entry(row.image_id.clone())
            .or_insert_with(|| AnnotationRecord {
                image_id: row.image_id.clone(),
                width: row.width,
                height: row.height,
                boxes: Vec::new(),
            });
        if (rec.width, rec.height) != (row.width, row.height) {
            return Err(Error::parse(
                at(),
                format!(
                    "image '{}' declared as {}x{} earlier, {}x{} here",
                    row.image_id, rec.width, rec.height, row.width, row.height
                ),
            ));
        }
        rec.boxes.push(gt);
    }
    Ok(records.into_values().collect())
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    image_id: String,
    width: usize,
    height: usize,
    boxes: Vec<[f64; 4]>,
}

/// Array of `{image_id, width, height, boxes: [[x1, y1, x2, y2], ...]}`.
pub fn parse_annotations_json(text: &str, origin: &str) -> Result<Vec<AnnotationRecord>> {
    let raw: Vec<JsonRecord> = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("{origin}:{}", e.line()), e))?;
    let mut out = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        let rec_origin = || format!("{origin}: record {i} ('{}')", r.image_id);
        check_image(&r.image_id, r.width, r.height, rec_origin)?;
        let boxes = r
            .boxes
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                validated_box(c, r.width, r.height, || {
                    format!("{origin}: record {i} ('{}') box {j}", r.image_id)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(AnnotationRecord {
            image_id: r.image_id,
            width: r.width,
            height: r.height,
            boxes,
        });
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if let Some(w) = out.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(Error::parse(
            origin,
            format!("duplicate image_id '{}'", w[0].image_id),
        ));
    }
    Ok(out)
}

pub fn ground_truth(records: &[AnnotationRecord]) -> GroundTruth {
    records
        .iter()
        .map(|r| (r.image_id.clone(), r.boxes.clone()))
        .collect()
}

/// JSON array of `{image_id, box: [x1, y1, x2, y2], score}`.
pub fn parse_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = read_to_string(path)?;
    parse_detections_str(&text, &path.display().to_string())
}

pub fn parse_detections_str(text: &str, origin: &str) -> Result<Vec<Detection>> {
    serde_json::from_str(text).map_err(|e| Error::parse(format!("{origin}:{}", e.line()), e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapHeader {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
    pub layout: String,
}

impl MapHeader {
    fn for_map(map: &ScalarMap) -> Self {
        Self {
            width: map.width(),
            height: map.height(),
            dtype: "f32le".into(),
            layout: "row-major".into(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Raw little-endian bytes of the map values.
pub fn encode_map(map: &ScalarMap) -> Vec<u8> {
    map.values().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Sidecar JSON text for `map`.
pub fn encode_sidecar(map: &ScalarMap) -> String {
    serde_json::to_string(&MapHeader::for_map(map)).expect("header serializes")
}

pub fn decode_map(bytes: &[u8], header: &MapHeader) -> Result<ScalarMap> {
    if header.dtype != "f32le" || header.layout != "row-major" {
        return Err(Error::validation(format!(
            "unsupported map encoding {}/{}",
            header.dtype, header.layout
        )));
    }
    let expected = header.width * header.height * 4;
    if bytes.len() != expected {
        return Err(Error::validation(format!(
            "map data is {} bytes but sidecar declares {}x{} ({expected} bytes)",
            bytes.len(),
            header.width,
            header.height
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ScalarMap::from_vec(header.width, header.height, values)
}

pub fn write_map(path: &Path, map: &ScalarMap) -> Result<()> {
    fs::write(path, encode_map(map)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, encode_sidecar(map)).map_err(|e| Error::io(side, e))
}

pub fn read_map(path: &Path) -> Result<ScalarMap> {
    let side = sidecar_path(path);
    let header: MapHeader = serde_json::from_str(&read_to_string(&side)?)
        .map_err(|e| Error::parse(side.display().to_string(), e))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes, &header)
}

/// Binary PGM (P5) with `round(clamp(v, 0, 1) * 255)` quantization.
pub fn encode_pgm(map: &ScalarMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(
        map.values()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(path: &Path, map: &ScalarMap) -> Result<()> {
    fs::write(path, encode_pgm(map)).map_err(|e| Error::io(path, e))
}
