//! Procedural face-like images with injected anomalies.

use std::fmt;
use std::str::FromStr;

use crate::degrade::{degrade, sample_degradation, DegradationParams};
use crate::error::{ensure, Error, Result};
use crate::image::Image;
use crate::rng::Prng;

pub const FACE_SIZE: usize = 32;

const SKIN_TONES: [[f64; 3]; 5] = [
    [224.0, 172.0, 105.0],
    [241.0, 194.0, 125.0],
    [198.0, 134.0, 66.0],
    [141.0, 85.0, 36.0],
    [255.0, 219.0, 172.0],
];
const BACKGROUNDS: [[f64; 3]; 4] =
    [[90.0, 110.0, 150.0], [150.0, 150.0, 150.0], [110.0, 140.0, 100.0], [160.0, 130.0, 110.0]];
const EYE: [f64; 3] = [30.0, 30.0, 40.0];
const MOUTH: [f64; 3] = [120.0, 30.0, 40.0];
const FRAME: [f64; 3] = [20.0, 20.0, 20.0];
const OCCLUDERS: [[u8; 3]; 6] =
    [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 0, 255], [0, 255, 255], [255, 255, 0]];
const SUPERSAMPLE: usize = 3;

/// Geometry and colors of one rendered face, in pixels of a 32x32 canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceParams {
    pub background_top: [u8; 3],
    pub background_bottom: [u8; 3],
    pub skin: [u8; 3],
    pub center_row: f64,
    pub center_col: f64,
    pub radius_row: f64,
    pub radius_col: f64,
    pub eye_dx: f64,
    pub eye_row: f64,
    pub eye_radius: f64,
    pub mouth_row: f64,
    pub mouth_half_width: f64,
    /// Mouth curvature in `[-1, 1]`; positive values smile.
    pub smile: f64,
    pub glasses: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    Occlusion,
    MissingFeature,
    Degradation,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [AnomalyKind::Occlusion, AnomalyKind::MissingFeature, AnomalyKind::Degradation];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnomalyKind::Occlusion => "occlusion",
            AnomalyKind::MissingFeature => "missing_feature",
            AnomalyKind::Degradation => "degradation",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown anomaly kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    LeftEye,
    RightEye,
    Mouth,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::LeftEye, Feature::RightEye, Feature::Mouth];

    pub fn as_str(&self) -> &'static str {
        match self {
            Feature::LeftEye => "left_eye",
            Feature::RightEye => "right_eye",
            Feature::Mouth => "mouth",
        }
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown face feature {s:?}")))
    }
}

/// Record of the corruption applied to an anomalous image.
#[derive(Debug, Clone, PartialEq)]
pub enum Injection {
    /// Saturated square inside quadrant `quadrant` (0 top-left, 1 top-right,
    /// 2 bottom-left, 3 bottom-right).
    Occlusion { quadrant: usize, top: usize, left: usize, size: usize, color: [u8; 3] },
    MissingFeature(Feature),
    Degradation(DegradationParams),
}

impl Injection {
    pub fn kind(&self) -> AnomalyKind {
        match self {
            Injection::Occlusion { .. } => AnomalyKind::Occlusion,
            Injection::MissingFeature(_) => AnomalyKind::MissingFeature,
            Injection::Degradation(_) => AnomalyKind::Degradation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub face: FaceParams,
    pub injection: Option<Injection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub images: Vec<Image>,
    /// 0 normal, 1 anomalous.
    pub labels: Vec<u8>,
    pub provenance: Vec<FaceRecord>,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Checks that labels agree with injection records.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.images.len() == self.labels.len() && self.labels.len() == self.provenance.len(),
            Contract,
            "dataset columns differ in length"
        );
        for (i, (l, p)) in self.labels.iter().zip(&self.provenance).enumerate() {
            ensure!(
                (*l == 1) == p.injection.is_some() && *l <= 1,
                Contract,
                "row {i}: label {l} disagrees with provenance"
            );
        }
        Ok(())
    }
}

fn jitter(rng: &mut Prng, center: f64, spread: f64) -> f64 {
    rng.uniform_range(center - spread, center + spread)
}

fn near(rng: &mut Prng, base: [f64; 3], spread: f64) -> [u8; 3] {
    base.map(|c| (c + jitter(rng, 0.0, spread)).round().clamp(0.0, 255.0) as u8)
}

pub fn sample_face(rng: &mut Prng) -> FaceParams {
    let tone = SKIN_TONES[rng.index(SKIN_TONES.len())];
    let skin = near(rng, tone, 10.0);
    let bg = rng.index(BACKGROUNDS.len());
    let center_row = jitter(rng, 16.0, 1.5);
    let center_col = jitter(rng, 16.0, 1.5);
    FaceParams {
        background_top: near(rng, BACKGROUNDS[bg], 15.0),
        background_bottom: near(rng, BACKGROUNDS[bg].map(|c| c * 0.7), 15.0),
        skin,
        center_row,
        center_col,
        radius_row: jitter(rng, 12.0, 1.0),
        radius_col: jitter(rng, 9.5, 1.0),
        eye_dx: jitter(rng, 4.0, 0.5),
        eye_row: center_row - jitter(rng, 3.0, 0.5),
        eye_radius: jitter(rng, 1.7, 0.3),
        mouth_row: center_row + jitter(rng, 5.0, 0.5),
        mouth_half_width: jitter(rng, 4.0, 0.7),
        smile: rng.uniform_range(-1.0, 1.0),
        glasses: rng.bernoulli(0.3),
    }
}

fn shade(p: &FaceParams, y: f64, x: f64, missing: Option<Feature>) -> [f64; 3] {
    let t = (y / FACE_SIZE as f64).clamp(0.0, 1.0);
    let mut c: [f64; 3] =
        std::array::from_fn(|i| p.background_top[i] as f64 * (1.0 - t) + p.background_bottom[i] as f64 * t);
    let (dy, dx) = ((y - p.center_row) / p.radius_row, (x - p.center_col) / p.radius_col);
    if dy * dy + dx * dx > 1.0 {
        return c;
    }
    c = p.skin.map(f64::from);
    for (side, feature) in [(-1.0, Feature::LeftEye), (1.0, Feature::RightEye)] {
        let (ey, ex) = (y - p.eye_row, x - (p.center_col + side * p.eye_dx));
        if missing != Some(feature) && ey * ey + ex * ex <= p.eye_radius * p.eye_radius {
            c = EYE;
        }
    }
    let u = (x - p.center_col) / p.mouth_half_width;
    if missing != Some(Feature::Mouth) && u.abs() <= 1.0 {
        let curve = p.mouth_row + 1.5 * p.smile * (0.5 - u * u);
        if (y - curve).abs() <= 0.8 {
            c = MOUTH;
        }
    }
    if p.glasses {
        let half = p.eye_radius + 1.3;
        for side in [-1.0, 1.0] {
            let (ey, ex) = ((y - p.eye_row).abs(), (x - (p.center_col + side * p.eye_dx)).abs());
            if ey <= half && ex <= half && (half - ey <= 0.6 || half - ex <= 0.6) {
                c = FRAME;
            }
        }
        let bridge = p.eye_dx - half;
        if (y - p.eye_row).abs() <= 0.4 && (x - p.center_col).abs() <= bridge {
            c = FRAME;
        }
    }
    c
}

/// Renders a face, optionally leaving one feature out, with 3x3 supersampling.
pub fn render_face(p: &FaceParams, missing: Option<Feature>) -> Image {
    let n = FACE_SIZE;
    let mut pixels = Vec::with_capacity(n * n * 3);
    let s = SUPERSAMPLE as f64;
    for row in 0..n {
        for col in 0..n {
            let mut acc = [0.0; 3];
            for a in 0..SUPERSAMPLE {
                for b in 0..SUPERSAMPLE {
                    let y = row as f64 + (a as f64 + 0.5) / s;
                    let x = col as f64 + (b as f64 + 0.5) / s;
                    let c = shade(p, y, x, missing);
                    for i in 0..3 {
                        acc[i] += c[i];
                    }
                }
            }
            pixels.extend(acc.map(|v| (v / (s * s)).round().clamp(0.0, 255.0) as u8));
        }
    }
    Image::new(n, n, 3, pixels).expect("fixed canvas")
}

fn inject(face: &FaceParams, kind: AnomalyKind, rng: &mut Prng) -> Result<(Image, Injection)> {
    Ok(match kind {
        AnomalyKind::Occlusion => {
            let half = FACE_SIZE / 2;
            let quadrant = rng.index(4);
            let size = 10 + rng.index(4);
            let top = (quadrant / 2) * half + rng.index(half - size + 1);
            let left = (quadrant % 2) * half + rng.index(half - size + 1);
            let color = OCCLUDERS[rng.index(OCCLUDERS.len())];
            let mut img = render_face(face, None);
            for r in top..top + size {
                for c in left..left + size {
                    img.pixel_mut(r, c).copy_from_slice(&color);
                }
            }
            (img, Injection::Occlusion { quadrant, top, left, size, color })
        }
        AnomalyKind::MissingFeature => {
            let feature = Feature::ALL[rng.index(Feature::ALL.len())];
            (render_face(face, Some(feature)), Injection::MissingFeature(feature))
        }
        AnomalyKind::Degradation => {
            let params = sample_degradation(rng);
            let clean = render_face(face, None).to_unit();
            let img = Image::from_unit(&degrade(&clean, &params, rng)?)?;
            (img, Injection::Degradation(params))
        }
    })
}

/// `n` faces of which exactly `round(n * anomaly_rate)` are anomalous, each
/// with a kind drawn uniformly from `kinds`.
pub fn gen_faces(n: usize, seed: u64, anomaly_rate: f64, kinds: &[AnomalyKind]) -> Result<ImageDataset> {
    ensure!(n >= 1, Contract, "dataset size must be positive");
    ensure!((0.0..1.0).contains(&anomaly_rate), Contract, "anomaly rate {anomaly_rate} outside [0, 1)");
    let n_anomalies = (n as f64 * anomaly_rate).round() as usize;
    ensure!(n_anomalies == 0 || !kinds.is_empty(), Contract, "anomalies requested without kinds");

    let mut rng = Prng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut anomalous = vec![false; n];
    for &i in &order[..n_anomalies] {
        anomalous[i] = true;
    }

    let mut ds = ImageDataset { images: Vec::with_capacity(n), labels: Vec::with_capacity(n), provenance: Vec::new() };
    for flag in anomalous {
        let mut item_rng = rng.fork();
        let face = sample_face(&mut item_rng);
        let (img, injection) = if flag {
            let kind = kinds[item_rng.index(kinds.len())];
            let (img, inj) = inject(&face, kind, &mut item_rng)?;
            (img, Some(inj))
        } else {
            (render_face(&face, None), None)
        };
        ds.images.push(img);
        ds.labels.push(u8::from(flag));
        ds.provenance.push(FaceRecord { face, injection });
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_anomaly_count() {
        let ds = gen_faces(1000, 1, 0.1, &AnomalyKind::ALL).unwrap();
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 100);
        ds.validate().unwrap();
        let ds = gen_faces(7, 1, 0.0, &[]).unwrap();
        assert!(ds.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_faces(30, 9, 0.3, &AnomalyKind::ALL).unwrap(), gen_faces(30, 9, 0.3, &AnomalyKind::ALL).unwrap());
        assert_ne!(gen_faces(5, 1, 0.0, &[]).unwrap().images, gen_faces(5, 2, 0.0, &[]).unwrap().images);
    }

    #[test]
    fn occlusion_stays_in_quadrant() {
        let ds = gen_faces(200, 3, 0.5, &[AnomalyKind::Occlusion]).unwrap();
        for (img, rec) in ds.images.iter().zip(&ds.provenance) {
            if let Some(Injection::Occlusion { quadrant, top, left, size, color }) = rec.injection {
                assert_eq!((top / 16) * 2 + left / 16, quadrant);
                assert_eq!(((top + size - 1) / 16) * 2 + (left + size - 1) / 16, quadrant);
                assert_eq!(img.pixel(top, left), color);
            }
        }
    }

    #[test]
    fn missing_feature_changes_pixels() {
        let face = sample_face(&mut Prng::new(4));
        let full = render_face(&face, None);
        for f in Feature::ALL {
            assert_ne!(render_face(&face, Some(f)), full);
        }
    }

    #[test]
    fn bad_arguments() {
        assert!(gen_faces(0, 1, 0.0, &[]).is_err());
        assert!(gen_faces(10, 1, 1.0, &AnomalyKind::ALL).is_err());
        assert!(gen_faces(10, 1, 0.5, &[]).is_err());
    }
}
