//! File plumbing: PNG/PPM image codecs, bilinear resizing, dataset
//! manifests, deterministic splits, and the COCO-style JSON interchange for
//! ground truth and detection results.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{BBox, DetectionBox, GroundTruthBox};
use crate::image_tensor::ImageTensor;

/// COCO category ids of the "vehicle" supercategory: bicycle, car,
/// motorcycle, airplane, bus, train, truck, boat.
pub const VEHICLE_CATEGORY_IDS: [u32; 8] = [2, 3, 4, 5, 6, 7, 8, 9];

// ---------------------------------------------------------------------------
// image codecs
// ---------------------------------------------------------------------------

/// Decodes a PNG or binary PPM (P6) file into a [0, 1] RGB tensor.
///
/// Grayscale images are replicated to three channels; alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        decode_ppm(path, &bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data: Vec<f32> = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        ImageTensor::from_data(w, h, data)
    } else {
        Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "unsupported format; expected PNG or binary PPM (P6)".into(),
        })
    }
}

fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<ImageTensor> {
    let fail = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let mut pos = 2; // past "P6"

    // whitespace and '#' comments separate header tokens
    let mut next_token = |pos: &mut usize| -> Result<usize> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(fail(format!("PPM header: expected integer at byte {start}")));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| fail(format!("PPM header: bad integer at byte {start}")))
    };

    let width = next_token(&mut pos)?;
    let height = next_token(&mut pos)?;
    let maxval = next_token(&mut pos)?;
    if maxval != 255 {
        return Err(fail(format!("PPM maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(fail(format!("PPM dims {width}x{height} are invalid")));
    }
    // exactly one whitespace byte separates header and raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fail(format!("PPM header: missing raster separator at byte {pos}")));
    }
    pos += 1;
    let need = width * height * 3;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(fail(format!(
            "PPM raster truncated: need {need} bytes, found {}",
            raster.len()
        )));
    }
    let data: Vec<f32> = raster[..need].iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::from_data(width, height, data)
}

/// Quantizes with `round(v * 255)` and writes PNG or PPM by extension.
pub fn save_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = image
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => image::save_buffer_with_format(
            path,
            &bytes,
            image.width() as u32,
            image.height() as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }),
        "ppm" => {
            let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write!(f, "P6\n{} {}\n255\n", image.width(), image.height())
                .and_then(|_| f.write_all(&bytes))
                .map_err(|e| Error::io(path, e))
        }
        other => Err(Error::Parameter(format!(
            "unsupported image extension '{other}' for {}; use .png or .ppm",
            path.display()
        ))),
    }
}

// ---------------------------------------------------------------------------
// resizing
// ---------------------------------------------------------------------------

/// Bilinear resize with half-pixel-center alignment; identity when the
/// target size equals the source size.
pub fn resize_bilinear(image: &ImageTensor, out_w: usize, out_h: usize) -> Result<ImageTensor> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Parameter(format!(
            "resize target must be at least 1x1, got {out_w}x{out_h}"
        )));
    }
    if out_w == image.width() && out_h == image.height() {
        return Ok(image.clone());
    }
    let (in_w, in_h) = (image.width(), image.height());
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    let mut out = ImageTensor::zeros(out_w, out_h);
    for y in 0..out_h {
        let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let ty = src_y - y0 as f64;
        for x in 0..out_w {
            let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let tx = src_x - x0 as f64;
            let p00 = image.pixel(x0, y0);
            let p10 = image.pixel(x1, y0);
            let p01 = image.pixel(x0, y1);
            let p11 = image.pixel(x1, y1);
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
                let bottom = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
                px[c] = (top * (1.0 - ty) + bottom * ty) as f32;
            }
            out.set_pixel(x, y, px);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// manifests and splits
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub path: PathBuf,
    pub width: u32,
    pub height: u32,
}

/// An ordered list of images with unique ids, optionally tagged with the
/// split it belongs to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub split: Option<String>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id) {
                return Err(Error::Parse(format!("duplicate image id {} in manifest", e.id)));
            }
        }
        Ok(Self {
            entries,
            split: None,
        })
    }

    pub fn ids(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Writes one `{id, path, width, height}` JSON object per line.
pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in &manifest.entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a JSON-lines manifest, resolving relative paths against the
/// manifest's directory and verifying every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("manifest line {}: {e}", i + 1)))?;
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        if !entry.path.exists() {
            return Err(Error::Parse(format!(
                "manifest line {}: referenced file does not exist: {}",
                i + 1,
                entry.path.display()
            )));
        }
        entries.push(entry);
    }
    DatasetManifest::new(entries)
}

/// Seeded shuffle followed by a prefix split; `|train| = round(fraction *
/// total)`. The result is a partition of the input, stable per seed.
pub fn split_dataset(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if manifest.is_empty() {
        return Err(Error::Config("cannot split an empty manifest".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..manifest.entries.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((fraction * manifest.entries.len() as f64).round() as usize)
        .min(manifest.entries.len());
    let mut train: Vec<ManifestEntry> = order[..n_train]
        .iter()
        .map(|&i| manifest.entries[i].clone())
        .collect();
    let mut val: Vec<ManifestEntry> = order[n_train..]
        .iter()
        .map(|&i| manifest.entries[i].clone())
        .collect();
    train.sort_by_key(|e| e.id);
    val.sort_by_key(|e| e.id);
    let mut train = DatasetManifest::new(train)?;
    train.split = Some("train".into());
    let mut val = DatasetManifest::new(val)?;
    val.split = Some("val".into());
    Ok((train, val))
}

// ---------------------------------------------------------------------------
// COCO-style JSON interchange
// ---------------------------------------------------------------------------

/// Ground-truth boxes grouped by image, plus the category table.
#[derive(Clone, Debug, Default)]
pub struct AnnotationSet {
    pub boxes_by_image: BTreeMap<u64, Vec<GroundTruthBox>>,
    pub categories: BTreeMap<u32, String>,
    /// `(width, height)` for images that declared dimensions.
    pub image_dims: BTreeMap<u64, (u32, u32)>,
    /// All image ids listed in the file, including unannotated ones.
    pub image_ids: BTreeSet<u64>,
    pub warnings: Vec<String>,
}

impl AnnotationSet {
    pub fn all_boxes(&self) -> Vec<GroundTruthBox> {
        self.boxes_by_image.values().flatten().cloned().collect()
    }

    pub fn total_boxes(&self) -> usize {
        self.boxes_by_image.values().map(Vec::len).sum()
    }

    /// Image ids holding at least one annotation from `categories`.
    pub fn images_with_categories(&self, categories: &[u32]) -> Vec<u64> {
        self.boxes_by_image
            .iter()
            .filter(|(_, boxes)| boxes.iter().any(|b| categories.contains(&b.category_id)))
            .map(|(&id, _)| id)
            .collect()
    }

    /// Restricts the set to the given image ids.
    pub fn filter_images(&self, keep: &BTreeSet<u64>) -> AnnotationSet {
        AnnotationSet {
            boxes_by_image: self
                .boxes_by_image
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(&id, v)| (id, v.clone()))
                .collect(),
            categories: self.categories.clone(),
            image_dims: self
                .image_dims
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(&id, &d)| (id, d))
                .collect(),
            image_ids: self.image_ids.intersection(keep).copied().collect(),
            warnings: Vec::new(),
        }
    }
}

fn field<'a>(
    value: &'a serde_json::Value,
    name: &str,
    what: &str,
    index: usize,
) -> Result<&'a serde_json::Value> {
    value.get(name).ok_or_else(|| {
        Error::Parse(format!("{what} record {index}: missing required field '{name}'"))
    })
}

fn as_u64(value: &serde_json::Value, name: &str, what: &str, index: usize) -> Result<u64> {
    value.as_u64().ok_or_else(|| {
        Error::Parse(format!(
            "{what} record {index}: field '{name}' is not a non-negative integer"
        ))
    })
}

fn as_f64(value: &serde_json::Value, name: &str, what: &str, index: usize) -> Result<f64> {
    value.as_f64().ok_or_else(|| {
        Error::Parse(format!("{what} record {index}: field '{name}' is not a number"))
    })
}

fn parse_bbox(value: &serde_json::Value, what: &str, index: usize) -> Result<BBox> {
    let arr = value.as_array().ok_or_else(|| {
        Error::Parse(format!("{what} record {index}: field 'bbox' is not an array"))
    })?;
    if arr.len() != 4 {
        return Err(Error::Parse(format!(
            "{what} record {index}: field 'bbox' must have 4 elements, has {}",
            arr.len()
        )));
    }
    let mut v = [0.0f64; 4];
    for (i, e) in arr.iter().enumerate() {
        v[i] = e.as_f64().ok_or_else(|| {
            Error::Parse(format!("{what} record {index}: bbox[{i}] is not a number"))
        })?;
    }
    Ok(BBox::new(v[0], v[1], v[2], v[3]))
}

/// Parses a COCO-style ground-truth object. Crowd annotations are skipped
/// with a warning; boxes are clamped to the image bounds when dimensions
/// are known, and degenerate boxes are dropped with a warning.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

/// `load_annotations` on an in-memory JSON string.
pub fn parse_annotations(text: &str) -> Result<AnnotationSet> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("ground truth: {e}")))?;
    let mut set = AnnotationSet::default();

    let images = field(&root, "images", "ground truth", 0)?
        .as_array()
        .ok_or_else(|| Error::Parse("ground truth: 'images' is not an array".into()))?;
    for (i, img) in images.iter().enumerate() {
        let id = as_u64(field(img, "id", "image", i)?, "id", "image", i)?;
        set.image_ids.insert(id);
        if let (Some(w), Some(h)) = (img.get("width"), img.get("height")) {
            let w = as_u64(w, "width", "image", i)?;
            let h = as_u64(h, "height", "image", i)?;
            set.image_dims.insert(id, (w as u32, h as u32));
        }
    }

    if let Some(cats) = root.get("categories") {
        let cats = cats
            .as_array()
            .ok_or_else(|| Error::Parse("ground truth: 'categories' is not an array".into()))?;
        for (i, c) in cats.iter().enumerate() {
            let id = as_u64(field(c, "id", "category", i)?, "id", "category", i)? as u32;
            let name = field(c, "name", "category", i)?
                .as_str()
                .ok_or_else(|| {
                    Error::Parse(format!("category record {i}: field 'name' is not a string"))
                })?
                .to_string();
            set.categories.insert(id, name);
        }
    }

    let annotations = field(&root, "annotations", "ground truth", 0)?
        .as_array()
        .ok_or_else(|| Error::Parse("ground truth: 'annotations' is not an array".into()))?;
    for (i, a) in annotations.iter().enumerate() {
        let image_id = as_u64(
            field(a, "image_id", "annotation", i)?,
            "image_id",
            "annotation",
            i,
        )?;
        if !set.image_ids.contains(&image_id) {
            return Err(Error::Parse(format!(
                "annotation record {i}: image_id {image_id} not present in 'images'"
            )));
        }
        if a.get("iscrowd").and_then(|v| v.as_i64()).unwrap_or(0) == 1 {
            set.warnings
                .push(format!("annotation record {i}: skipping crowd annotation"));
            continue;
        }
        let category_id = as_u64(
            field(a, "category_id", "annotation", i)?,
            "category_id",
            "annotation",
            i,
        )? as u32;
        let mut bbox = parse_bbox(field(a, "bbox", "annotation", i)?, "annotation", i)?;
        if let Some(&(w, h)) = set.image_dims.get(&image_id) {
            let x1 = (bbox.x + bbox.w).min(w as f64);
            let y1 = (bbox.y + bbox.h).min(h as f64);
            bbox.x = bbox.x.max(0.0);
            bbox.y = bbox.y.max(0.0);
            bbox.w = x1 - bbox.x;
            bbox.h = y1 - bbox.y;
        }
        if bbox.w <= 0.0 || bbox.h <= 0.0 {
            set.warnings.push(format!(
                "annotation record {i}: dropping box with no area after clamping"
            ));
            continue;
        }
        set.boxes_by_image
            .entry(image_id)
            .or_default()
            .push(GroundTruthBox {
                image_id,
                category_id,
                bbox,
            });
    }
    Ok(set)
}

/// Parses a COCO-results-style detection array.
pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionBox>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text)
}

/// `load_detections` on an in-memory JSON string.
pub fn parse_detections(text: &str) -> Result<Vec<DetectionBox>> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("detections: {e}")))?;
    let arr = root
        .as_array()
        .ok_or_else(|| Error::Parse("detections: top level must be an array".into()))?;
    let mut out = Vec::with_capacity(arr.len());
    for (i, d) in arr.iter().enumerate() {
        let image_id = as_u64(
            field(d, "image_id", "detection", i)?,
            "image_id",
            "detection",
            i,
        )?;
        let category_id = as_u64(
            field(d, "category_id", "detection", i)?,
            "category_id",
            "detection",
            i,
        )? as u32;
        let bbox = parse_bbox(field(d, "bbox", "detection", i)?, "detection", i)?;
        let score = as_f64(field(d, "score", "detection", i)?, "score", "detection", i)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Parse(format!(
                "detection record {i}: score {score} outside [0, 1]"
            )));
        }
        if bbox.w <= 0.0 || bbox.h <= 0.0 {
            return Err(Error::Parse(format!(
                "detection record {i}: bbox has non-positive dims {}x{}",
                bbox.w, bbox.h
            )));
        }
        out.push(DetectionBox {
            image_id,
            category_id,
            bbox,
            score,
        });
    }
    Ok(out)
}

/// Writes ground truth in the COCO-subset layout the loaders accept.
pub fn save_annotations(
    path: impl AsRef<Path>,
    images: &[(u64, u32, u32)],
    boxes: &[GroundTruthBox],
    categories: &[(u32, &str)],
) -> Result<()> {
    let path = path.as_ref();
    let images_json: Vec<serde_json::Value> = images
        .iter()
        .map(|&(id, w, h)| serde_json::json!({"id": id, "width": w, "height": h}))
        .collect();
    let ann_json: Vec<serde_json::Value> = boxes
        .iter()
        .map(|b| {
            serde_json::json!({
                "image_id": b.image_id,
                "category_id": b.category_id,
                "bbox": [b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h],
                "iscrowd": 0,
            })
        })
        .collect();
    let cat_json: Vec<serde_json::Value> = categories
        .iter()
        .map(|&(id, name)| serde_json::json!({"id": id, "name": name}))
        .collect();
    let root = serde_json::json!({
        "images": images_json,
        "annotations": ann_json,
        "categories": cat_json,
    });
    fs::write(path, serde_json::to_string_pretty(&root).expect("serializes"))
        .map_err(|e| Error::io(path, e))
}

/// Writes detections in the COCO-results array layout.
pub fn save_detections(path: impl AsRef<Path>, dets: &[DetectionBox]) -> Result<()> {
    let path = path.as_ref();
    let json: Vec<serde_json::Value> = dets
        .iter()
        .map(|d| {
            serde_json::json!({
                "image_id": d.image_id,
                "category_id": d.category_id,
                "bbox": [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
                "score": d.score,
            })
        })
        .collect();
    fs::write(
        path,
        serde_json::to_string_pretty(&json).expect("serializes"),
    )
    .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn ppm_decode_scales_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[
            0, 128, 255, 10, 20, 30, //
            40, 50, 60, 70, 80, 90,
        ]);
        fs::write(&path, &bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        assert_eq!(img.pixel(0, 0), [0.0, 128.0 / 255.0, 1.0]);
        assert_eq!(img.pixel(1, 1), [70.0 / 255.0, 80.0 / 255.0, 90.0 / 255.0]);
    }

    #[test]
    fn ppm_rejects_bad_maxval_and_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        fs::write(&path, b"P6\n2 2\n65535\n").unwrap();
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("maxval"), "{err}");

        fs::write(&path, b"P6\n2 2\n255\nxx").unwrap();
        let err = load_image(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn png_round_trip_preserves_quantized_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = ImageTensor::zeros(5, 4);
        for (i, v) in img.as_mut_slice().iter_mut().enumerate() {
            *v = (i % 256) as f32 / 255.0;
        }
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn quantization_rounds_half_up() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("q.ppm");
        let mut img = ImageTensor::zeros(1, 1);
        img.set_pixel(0, 0, [0.5, 1.0, 0.0]);
        save_image(&img, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let raster = &bytes[bytes.len() - 3..];
        assert_eq!(raster, &[128, 255, 0]);
    }

    #[test]
    fn grayscale_png_replicates_channels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let gray = image::GrayImage::from_fn(3, 2, |x, y| image::Luma([(x * 40 + y * 10) as u8]));
        gray.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let [r, g, b] = img.pixel(x, y);
                assert_eq!(r, g);
                assert_eq!(g, b);
                assert_eq!(r, (x * 40 + y * 10) as f32 / 255.0);
            }
        }
    }

    #[test]
    fn unknown_extension_rejected() {
        let img = ImageTensor::zeros(2, 2);
        assert!(save_image(&img, "/tmp/x.jpeg").is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let mut img = ImageTensor::zeros(4, 4);
        for v in img.as_mut_slice() {
            *v = 0.3;
        }
        assert_eq!(resize_bilinear(&img, 4, 4).unwrap(), img);
        let up = resize_bilinear(&img, 8, 8).unwrap();
        assert!(up.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn resize_ramp_matches_hand_samples() {
        // v(x, y) = (x + 4y) / 20 on a 4x4 grid
        let mut img = ImageTensor::zeros(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let v = (x + 4 * y) as f32 / 20.0;
                img.set_pixel(x, y, [v, v, v]);
            }
        }
        let out = resize_bilinear(&img, 2, 2).unwrap();
        // destination centers sample source coords 0.5 and 2.5; bilinear of a
        // ramp is the ramp value at the sample point: (x + 4y)/20
        for (dy, sy) in [(0usize, 0.5f32), (1, 2.5)] {
            for (dx, sx) in [(0usize, 0.5f32), (1, 2.5)] {
                let expect = (sx + 4.0 * sy) / 20.0;
                let got = out.pixel(dx, dy)[0];
                assert!((got - expect).abs() < 1e-6, "({dx},{dy}): {got} vs {expect}");
            }
        }
    }

    fn manifest_of(n: usize) -> DatasetManifest {
        DatasetManifest::new(
            (0..n as u64)
                .map(|id| ManifestEntry {
                    id,
                    path: PathBuf::from(format!("img_{id}.png")),
                    width: 8,
                    height: 8,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let m = manifest_of(10);
        let (train, val) = split_dataset(&m, 0.8, 42).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(val.len(), 2);
        let (train2, val2) = split_dataset(&m, 0.8, 42).unwrap();
        assert_eq!(train, train2);
        assert_eq!(val, val2);
        let mut all: Vec<u64> = train.ids().into_iter().chain(val.ids()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<u64>>());
        let (train3, _) = split_dataset(&m, 0.8, 43).unwrap();
        assert_ne!(train.ids(), train3.ids());
    }

    #[test]
    fn split_rejects_empty_and_bad_fraction() {
        let empty = DatasetManifest::default();
        assert!(split_dataset(&empty, 0.8, 1).is_err());
        let m = manifest_of(4);
        assert!(split_dataset(&m, 0.0, 1).is_err());
        assert!(split_dataset(&m, 1.0, 1).is_err());
    }

    #[test]
    fn manifest_round_trip_and_missing_file_check() {
        let dir = tempdir().unwrap();
        let img_path = dir.path().join("a.png");
        save_image(&ImageTensor::zeros(2, 2), &img_path).unwrap();
        let m = DatasetManifest::new(vec![ManifestEntry {
            id: 7,
            path: img_path.clone(),
            width: 2,
            height: 2,
        }])
        .unwrap();
        let mpath = dir.path().join("manifest.jsonl");
        save_manifest(&m, &mpath).unwrap();
        let loaded = load_manifest(&mpath).unwrap();
        assert_eq!(loaded.entries[0].id, 7);

        fs::remove_file(&img_path).unwrap();
        let err = load_manifest(&mpath).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let e = ManifestEntry {
            id: 1,
            path: PathBuf::from("x.png"),
            width: 1,
            height: 1,
        };
        assert!(DatasetManifest::new(vec![e.clone(), e]).is_err());
    }

    const MINIMAL_GT: &str = r#"{
        "images": [{"id": 1, "width": 100, "height": 80, "file_name": "a.png"}],
        "annotations": [{"image_id": 1, "category_id": 3, "bbox": [10, 20, 30, 40], "extra": true}],
        "categories": [{"id": 3, "name": "car"}]
    }"#;

    #[test]
    fn minimal_ground_truth_parses() {
        let set = parse_annotations(MINIMAL_GT).unwrap();
        assert_eq!(set.total_boxes(), 1);
        assert_eq!(set.categories.get(&3).map(String::as_str), Some("car"));
        let b = &set.boxes_by_image[&1][0];
        assert_eq!(b.bbox, BBox::new(10.0, 20.0, 30.0, 40.0));
        assert!(set.warnings.is_empty());
    }

    #[test]
    fn crowd_annotations_skipped_with_warning() {
        let text = r#"{
            "images": [{"id": 1}],
            "annotations": [
                {"image_id": 1, "category_id": 3, "bbox": [0, 0, 5, 5], "iscrowd": 1},
                {"image_id": 1, "category_id": 3, "bbox": [10, 10, 5, 5], "iscrowd": 0}
            ],
            "categories": [{"id": 3, "name": "car"}]
        }"#;
        let set = parse_annotations(text).unwrap();
        assert_eq!(set.total_boxes(), 1);
        assert_eq!(set.warnings.len(), 1);
        assert!(set.warnings[0].contains("crowd"));
    }

    #[test]
    fn missing_field_errors_name_field_and_record() {
        let text = r#"{
            "images": [{"id": 1}],
            "annotations": [
                {"image_id": 1, "category_id": 3, "bbox": [0, 0, 5, 5]},
                {"image_id": 1, "category_id": 3}
            ],
            "categories": []
        }"#;
        let err = parse_annotations(text).unwrap_err().to_string();
        assert!(err.contains("record 1"), "{err}");
        assert!(err.contains("'bbox'"), "{err}");
    }

    #[test]
    fn annotation_for_unlisted_image_rejected() {
        let text = r#"{
            "images": [{"id": 1}],
            "annotations": [{"image_id": 2, "category_id": 3, "bbox": [0, 0, 5, 5]}],
            "categories": []
        }"#;
        let err = parse_annotations(text).unwrap_err().to_string();
        assert!(err.contains("image_id 2"), "{err}");
    }

    #[test]
    fn bbox_clamped_to_image_bounds() {
        let text = r#"{
            "images": [{"id": 1, "width": 50, "height": 50}],
            "annotations": [{"image_id": 1, "category_id": 3, "bbox": [-5, 40, 20, 30]}],
            "categories": []
        }"#;
        let set = parse_annotations(text).unwrap();
        let b = &set.boxes_by_image[&1][0];
        assert_eq!(b.bbox, BBox::new(0.0, 40.0, 15.0, 10.0));
    }

    #[test]
    fn detections_parse_and_validate() {
        let dets =
            parse_detections(r#"[{"image_id": 5, "category_id": 1, "bbox": [1, 2, 3, 4], "score": 0.75}]"#)
                .unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].score, 0.75);

        assert!(parse_detections("[]").unwrap().is_empty());

        let err = parse_detections(r#"[{"image_id": 5, "category_id": 1, "bbox": [1, 2, 3, 4]}]"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("'score'"), "{err}");

        let err =
            parse_detections(r#"[{"image_id": 5, "category_id": 1, "bbox": [1, 2, 3, 4], "score": 1.5}]"#)
                .unwrap_err()
                .to_string();
        assert!(err.contains("outside"), "{err}");
    }

    #[test]
    fn annotation_and_detection_files_round_trip() {
        let dir = tempdir().unwrap();
        let gt_path = dir.path().join("gt.json");
        let det_path = dir.path().join("det.json");
        let boxes = vec![GroundTruthBox {
            image_id: 1,
            category_id: 2,
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
        }];
        save_annotations(&gt_path, &[(1, 64, 64)], &boxes, &[(1, "box"), (2, "disk")]).unwrap();
        let set = load_annotations(&gt_path).unwrap();
        assert_eq!(set.all_boxes(), boxes);
        assert_eq!(set.categories.len(), 2);

        let dets = vec![DetectionBox {
            image_id: 1,
            category_id: 2,
            bbox: BBox::new(1.0, 2.0, 3.0, 4.0),
            score: 0.5,
        }];
        save_detections(&det_path, &dets).unwrap();
        assert_eq!(load_detections(&det_path).unwrap(), dets);
    }

    #[test]
    fn vehicle_filter_selects_images() {
        let text = r#"{
            "images": [{"id": 1}, {"id": 2}, {"id": 3}],
            "annotations": [
                {"image_id": 1, "category_id": 3, "bbox": [0, 0, 5, 5]},
                {"image_id": 2, "category_id": 18, "bbox": [0, 0, 5, 5]},
                {"image_id": 3, "category_id": 9, "bbox": [0, 0, 5, 5]}
            ],
            "categories": [{"id": 3, "name": "car"}, {"id": 18, "name": "dog"}, {"id": 9, "name": "boat"}]
        }"#;
        let set = parse_annotations(text).unwrap();
        assert_eq!(set.images_with_categories(&VEHICLE_CATEGORY_IDS), vec![1, 3]);
    }
}
