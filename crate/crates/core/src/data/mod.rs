//! Synthetic datasets and their on-disk forms.
//!
//! Image datasets are stored as a directory of binary PPM files plus
//! `manifest.csv` (file name, label and generation parameters). Transactions
//! are a single CSV with header `id,f0,...,f{d-1},label`.

mod faces;
mod transactions;

pub use faces::{
    gen_faces, render_face, sample_face, AnomalyKind, FaceParams, FaceRecord, Feature, ImageDataset,
    Injection, FACE_SIZE,
};
pub use transactions::{gen_transactions, TransactionDataset, TransactionParams};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degrade::DegradationParams;
use crate::error::{ensure, Error, Result};
use crate::io::{create_dir_all, netpbm, read_bytes, write_atomic};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestRow {
    filename: String,
    label: u8,
    kind: String,
    background_top: String,
    background_bottom: String,
    skin: String,
    center_row: f64,
    center_col: f64,
    radius_row: f64,
    radius_col: f64,
    eye_dx: f64,
    eye_row: f64,
    eye_radius: f64,
    mouth_row: f64,
    mouth_half_width: f64,
    smile: f64,
    glasses: u8,
    occlusion_quadrant: Option<usize>,
    occlusion_top: Option<usize>,
    occlusion_left: Option<usize>,
    occlusion_size: Option<usize>,
    occlusion_color: Option<String>,
    missing_feature: Option<String>,
    sigma: Option<f64>,
    r: Option<f64>,
    delta: Option<f64>,
    q: Option<f64>,
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn parse_hex(s: &str) -> Result<[u8; 3]> {
    let bad = || Error::Contract(format!("bad color {s:?}"));
    let digits = s.strip_prefix('#').filter(|d| d.len() == 6).ok_or_else(bad)?;
    let mut out = [0u8; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&digits[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

impl ManifestRow {
    fn new(filename: String, label: u8, rec: &FaceRecord) -> Self {
        let f = &rec.face;
        let mut row = ManifestRow {
            filename,
            label,
            kind: rec.injection.as_ref().map_or("normal", |i| i.kind().as_str()).to_string(),
            background_top: hex(f.background_top),
            background_bottom: hex(f.background_bottom),
            skin: hex(f.skin),
            center_row: f.center_row,
            center_col: f.center_col,
            radius_row: f.radius_row,
            radius_col: f.radius_col,
            eye_dx: f.eye_dx,
            eye_row: f.eye_row,
            eye_radius: f.eye_radius,
            mouth_row: f.mouth_row,
            mouth_half_width: f.mouth_half_width,
            smile: f.smile,
            glasses: u8::from(f.glasses),
            occlusion_quadrant: None,
            occlusion_top: None,
            occlusion_left: None,
            occlusion_size: None,
            occlusion_color: None,
            missing_feature: None,
            sigma: None,
            r: None,
            delta: None,
            q: None,
        };
        match &rec.injection {
            None => {}
            Some(Injection::Occlusion { quadrant, top, left, size, color }) => {
                row.occlusion_quadrant = Some(*quadrant);
                row.occlusion_top = Some(*top);
                row.occlusion_left = Some(*left);
                row.occlusion_size = Some(*size);
                row.occlusion_color = Some(hex(*color));
            }
            Some(Injection::MissingFeature(feature)) => row.missing_feature = Some(feature.as_str().into()),
            Some(Injection::Degradation(p)) => {
                row.sigma = Some(p.sigma);
                row.r = Some(p.r);
                row.delta = Some(p.delta);
                row.q = Some(p.q);
            }
        }
        row
    }

    fn record(&self) -> Result<FaceRecord> {
        let face = FaceParams {
            background_top: parse_hex(&self.background_top)?,
            background_bottom: parse_hex(&self.background_bottom)?,
            skin: parse_hex(&self.skin)?,
            center_row: self.center_row,
            center_col: self.center_col,
            radius_row: self.radius_row,
            radius_col: self.radius_col,
            eye_dx: self.eye_dx,
            eye_row: self.eye_row,
            eye_radius: self.eye_radius,
            mouth_row: self.mouth_row,
            mouth_half_width: self.mouth_half_width,
            smile: self.smile,
            glasses: self.glasses != 0,
        };
        let missing = |what: &str| Error::Contract(format!("{}: missing {what}", self.filename));
        let injection = match self.kind.as_str() {
            "normal" => None,
            kind => Some(match kind.parse::<AnomalyKind>()? {
                AnomalyKind::Occlusion => Injection::Occlusion {
                    quadrant: self.occlusion_quadrant.ok_or_else(|| missing("occlusion_quadrant"))?,
                    top: self.occlusion_top.ok_or_else(|| missing("occlusion_top"))?,
                    left: self.occlusion_left.ok_or_else(|| missing("occlusion_left"))?,
                    size: self.occlusion_size.ok_or_else(|| missing("occlusion_size"))?,
                    color: parse_hex(self.occlusion_color.as_deref().ok_or_else(|| missing("occlusion_color"))?)?,
                },
                AnomalyKind::MissingFeature => Injection::MissingFeature(
                    self.missing_feature.as_deref().ok_or_else(|| missing("missing_feature"))?.parse()?,
                ),
                AnomalyKind::Degradation => Injection::Degradation(DegradationParams {
                    sigma: self.sigma.ok_or_else(|| missing("sigma"))?,
                    r: self.r.ok_or_else(|| missing("r"))?,
                    delta: self.delta.ok_or_else(|| missing("delta"))?,
                    q: self.q.ok_or_else(|| missing("q"))?,
                }),
            }),
        };
        Ok(FaceRecord { face, injection })
    }
}

pub fn image_filename(i: usize) -> String {
    format!("face_{i:05}.ppm")
}

/// Writes every image as PPM and the manifest into `dir` (created if needed).
pub fn save_image_dataset(dir: &Path, ds: &ImageDataset) -> Result<()> {
    ds.validate()?;
    create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, ((img, &label), rec)) in ds.images.iter().zip(&ds.labels).zip(&ds.provenance).enumerate() {
        let name = image_filename(i);
        netpbm::write_image(&dir.join(&name), img)?;
        w.serialize(ManifestRow::new(name, label, rec))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(dir.join(MANIFEST), e.into_error()))?;
    write_atomic(&dir.join(MANIFEST), &bytes)
}

pub fn load_image_dataset(dir: &Path) -> Result<ImageDataset> {
    let bytes = read_bytes(&dir.join(MANIFEST))?;
    let mut ds = ImageDataset { images: Vec::new(), labels: Vec::new(), provenance: Vec::new() };
    for row in csv::Reader::from_reader(bytes.as_slice()).deserialize::<ManifestRow>() {
        let row = row?;
        ds.images.push(netpbm::read_image(&dir.join(&row.filename))?);
        ds.labels.push(row.label);
        ds.provenance.push(row.record()?);
    }
    ds.validate()?;
    Ok(ds)
}

pub fn write_transactions(path: &Path, rows: &Tensor, labels: &[u8]) -> Result<()> {
    ensure!(rows.shape().len() == 2, Shape, "transaction rows must be n x d");
    let (n, d) = (rows.shape()[0], rows.shape()[1]);
    ensure!(labels.len() == n, Shape, "{} labels for {n} rows", labels.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend((0..d).map(|j| format!("f{j}")));
    header.push("label".into());
    w.write_record(&header)?;
    for (i, (row, label)) in rows.data().chunks_exact(d).zip(labels).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Reads a transaction CSV into `(n x d rows, labels)`.
pub fn read_transactions(path: &Path) -> Result<(Tensor, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let d = header.len().saturating_sub(2);
    ensure!(
        d >= 1 && &header[0] == "id" && &header[header.len() - 1] == "label",
        Contract,
        "{}: expected header id,f0,...,label",
        path.display()
    );
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Contract(format!("{} row {}: bad {what}", path.display(), line + 1));
        for j in 0..d {
            data.push(rec[j + 1].trim().parse::<f64>().map_err(|_| bad("feature"))?);
        }
        labels.push(rec[d + 1].trim().parse::<u8>().map_err(|_| bad("label"))?);
    }
    ensure!(!labels.is_empty(), Contract, "{}: no rows", path.display());
    Ok((Tensor::new(vec![labels.len(), d], data)?, labels))
}

/// Standardized features are fed to a tanh-output generator as `tanh(x / 2)`.
pub const SQUASH_SCALE: f64 = 2.0;

pub fn squash_rows(rows: &Tensor) -> Result<Tensor> {
    rows.map(|v| (v / SQUASH_SCALE).tanh())
}

/// Inverse of [`squash_rows`]; values are clamped just inside `(-1, 1)`.
pub fn unsquash_rows(rows: &Tensor) -> Result<Tensor> {
    let lim = 1.0 - 1e-12;
    rows.map(|v| SQUASH_SCALE * v.clamp(-lim, lim).atanh())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_faces(12, 5, 0.5, &AnomalyKind::ALL).unwrap();
        save_image_dataset(dir.path(), &ds).unwrap();
        assert_eq!(load_image_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn transactions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tx.csv");
        let ds = gen_transactions(20, 3, 2, 0.1).unwrap();
        write_transactions(&path, &ds.rows, &ds.labels).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,f0,f1,f2,label\n0,"));
        let (rows, labels) = read_transactions(&path).unwrap();
        assert_eq!(rows, ds.rows);
        assert_eq!(labels, ds.labels);
    }

    #[test]
    fn squash_inverts() {
        let t = Tensor::from_vec(vec![-5.0, -0.3, 0.0, 2.0, 7.5]);
        let back = unsquash_rows(&squash_rows(&t).unwrap()).unwrap();
        assert!(back.max_abs_diff(&t) < 1e-9);
    }

    #[test]
    fn colors() {
        assert_eq!(hex([255, 0, 16]), "#ff0010");
        assert_eq!(parse_hex("#ff0010").unwrap(), [255, 0, 16]);
        assert!(parse_hex("ff0010").is_err());
    }
}
