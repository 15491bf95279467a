//! Synthetic digit-like data and the abrupt corruptions used to inject drift.
//!
//! Features are laid out on a square-ish grid (`width = ceil(sqrt(dim))`,
//! row-major) so the corruptions can act spatially, in the spirit of the
//! zigzag, canny-edge and glass-blur corruptions of MNIST-C.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayViewMut1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Provenance};
use crate::error::{FlareError, Result};

/// Per-pixel noise of a clean sample.
const PIXEL_NOISE: f64 = 0.25;
const BACKGROUND: f64 = 0.05;
const ZIGZAG_LINES: usize = 3;
const STROKE: f64 = 0.95;
const STROKES_PER_CLASS: usize = 3;
const GAIN_MIN: f64 = 0.6;

/// Spatial layout of a flat feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub dim: usize,
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn for_dim(dim: usize) -> Self {
        let width = (dim as f64).sqrt().ceil() as usize;
        let height = dim.div_ceil(width);
        Self { dim, width, height }
    }

    fn index(&self, r: isize, c: isize) -> Option<usize> {
        if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
            return None;
        }
        let i = r as usize * self.width + c as usize;
        (i < self.dim).then_some(i)
    }

    /// Value at `(r, c)`, clamping coordinates to the nearest valid pixel.
    fn at(&self, x: &[f64], r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.height as isize - 1);
        let c = c.clamp(0, self.width as isize - 1);
        match self.index(r, c) {
            Some(i) => x[i],
            None => x[self.dim - 1],
        }
    }

    fn coords(&self, i: usize) -> (isize, isize) {
        ((i / self.width) as isize, (i % self.width) as isize)
    }
}

/// Class-conditional generator: each class owns a stroke prototype and
/// samples are the prototype plus pixel noise, clipped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    classes: usize,
    grid: Grid,
    prototypes: Array2<f64>,
}

impl SyntheticTask {
    pub fn new(classes: usize, dim: usize, seed: u64) -> Result<Self> {
        if classes <= 2 {
            return Err(FlareError::config(format!(
                "need more than 2 classes, got {classes}"
            )));
        }
        if dim < 4 {
            return Err(FlareError::config(format!("feature dimension {dim} is below 4")));
        }
        let grid = Grid::for_dim(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prototypes = Array2::from_elem((classes, dim), BACKGROUND);
        for mut proto in prototypes.rows_mut() {
            for _ in 0..STROKES_PER_CLASS {
                let r0 = rng.gen_range(0..grid.height) as f64;
                let c0 = rng.gen_range(0..grid.width) as f64;
                let r1 = rng.gen_range(0..grid.height) as f64;
                let c1 = rng.gen_range(0..grid.width) as f64;
                let steps = 2 * grid.width.max(grid.height);
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    let r = (r0 + t * (r1 - r0)).round() as isize;
                    let c = (c0 + t * (c1 - c0)).round() as isize;
                    if let Some(i) = grid.index(r, c) {
                        proto[i] = STROKE;
                    }
                }
            }
        }
        Ok(Self {
            classes,
            grid,
            prototypes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    /// `n` samples with balanced, shuffled labels.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledDataset> {
        if n < self.classes {
            return Err(FlareError::config(format!(
                "n = {n} must be at least the number of classes ({})",
                self.classes
            )));
        }
        let mut labels: Vec<usize> = (0..n).map(|i| i % self.classes).collect();
        rand::seq::SliceRandom::shuffle(&mut labels[..], rng);
        let noise = Normal::new(0.0, PIXEL_NOISE).expect("valid sigma");
        let mut x = Array2::zeros((n, self.grid.dim));
        for (mut row, &label) in x.rows_mut().into_iter().zip(&labels) {
            let proto = self.prototypes.row(label);
            let gain = rng.gen_range(GAIN_MIN..1.0);
            for (v, &p) in row.iter_mut().zip(proto.iter()) {
                *v = (p * gain + noise.sample(rng)).clamp(0.0, 1.0);
            }
        }
        LabeledDataset::new(x, labels, self.classes, Provenance::Clean)
    }
}

/// Samples `n` points from a fresh task; task layout and samples both follow `seed`.
pub fn generate_synthetic_dataset(classes: usize, dim: usize, n: usize, seed: u64) -> Result<LabeledDataset> {
    let task = SyntheticTask::new(classes, dim, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    task.sample(n, &mut rng)
}

/// Abrupt corruption applied to every sample of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    /// Gaussian pixel noise with standard deviation `sigma` in `[0, 1]`.
    AdditiveNoise { sigma: f64 },
    /// Bright zigzag line drawn across the image; `intensity` in `[0, 1]`.
    StructuredOverlay { intensity: f64 },
    /// Binary gradient-magnitude map; `threshold` in `(0, 1]`.
    EdgeExtract { threshold: f64 },
    /// Blur, local pixel shuffling within `radius` (1..=4), blur again.
    LocalShuffleBlur { radius: usize },
}

impl CorruptionKind {
    pub const NAMES: [&'static str; 4] = ["additive_noise", "zigzag", "canny_edges", "glass_blur"];

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::AdditiveNoise { .. } => "additive_noise",
            CorruptionKind::StructuredOverlay { .. } => "zigzag",
            CorruptionKind::EdgeExtract { .. } => "canny_edges",
            CorruptionKind::LocalShuffleBlur { .. } => "glass_blur",
        }
    }

    /// Default severities, calibrated against a clean-trained model.
    pub fn default_noise() -> Self {
        CorruptionKind::AdditiveNoise { sigma: 0.5 }
    }

    pub fn default_zigzag() -> Self {
        CorruptionKind::StructuredOverlay { intensity: 1.0 }
    }

    pub fn default_edges() -> Self {
        CorruptionKind::EdgeExtract { threshold: 0.2 }
    }

    pub fn default_glass_blur() -> Self {
        CorruptionKind::LocalShuffleBlur { radius: 1 }
    }

    /// The three image-style corruptions, in the order drifts are injected.
    pub fn drift_sequence() -> [CorruptionKind; 3] {
        [Self::default_zigzag(), Self::default_edges(), Self::default_glass_blur()]
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CorruptionKind::AdditiveNoise { sigma } => (0.0..=1.0).contains(&sigma),
            CorruptionKind::StructuredOverlay { intensity } => (0.0..=1.0).contains(&intensity),
            CorruptionKind::EdgeExtract { threshold } => threshold > 0.0 && threshold <= 1.0,
            CorruptionKind::LocalShuffleBlur { radius } => (1..=4).contains(&radius),
        };
        if ok {
            Ok(())
        } else {
            Err(FlareError::config(format!("corruption severity out of bounds: {self:?}")))
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = FlareError;

    /// Accepts a kind name with its default severity, or `name:severity`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, severity) = match s.split_once(':') {
            Some((n, v)) => {
                let v: f64 = v
                    .parse()
                    .map_err(|_| FlareError::config(format!("invalid severity in {s:?}")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let kind = match (name, severity) {
            ("additive_noise" | "noise", None) => Self::default_noise(),
            ("additive_noise" | "noise", Some(sigma)) => CorruptionKind::AdditiveNoise { sigma },
            ("zigzag" | "structured_overlay", None) => Self::default_zigzag(),
            ("zigzag" | "structured_overlay", Some(intensity)) => {
                CorruptionKind::StructuredOverlay { intensity }
            }
            ("canny_edges" | "edge_extract", None) => Self::default_edges(),
            ("canny_edges" | "edge_extract", Some(threshold)) => CorruptionKind::EdgeExtract { threshold },
            ("glass_blur" | "local_shuffle_blur", None) => Self::default_glass_blur(),
            ("glass_blur" | "local_shuffle_blur", Some(r)) => {
                if r.fract() != 0.0 || r < 0.0 {
                    return Err(FlareError::config(format!("glass blur radius must be an integer, got {r}")));
                }
                CorruptionKind::LocalShuffleBlur { radius: r as usize }
            }
            _ => {
                return Err(FlareError::config(format!(
                    "unknown corruption kind {name:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Corrupts every sample; labels, sample count and the `[0, 1]` range are preserved.
pub fn apply_corruption(data: &LabeledDataset, kind: CorruptionKind, seed: u64) -> Result<LabeledDataset> {
    kind.validate()?;
    let grid = Grid::for_dim(data.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = data.features().to_owned();
    for row in x.rows_mut() {
        corrupt_row(row, kind, grid, &mut rng);
    }
    x.mapv_inplace(|v| v.clamp(0.0, 1.0));
    LabeledDataset::new(
        x,
        data.labels().to_vec(),
        data.classes(),
        Provenance::Corrupted(kind.name().to_string()),
    )
}

fn corrupt_row(mut row: ArrayViewMut1<'_, f64>, kind: CorruptionKind, grid: Grid, rng: &mut ChaCha8Rng) {
    match kind {
        CorruptionKind::AdditiveNoise { sigma } => {
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("validated sigma");
                row.mapv_inplace(|v| v + noise.sample(rng));
            }
        }
        CorruptionKind::StructuredOverlay { intensity } => {
            let h = grid.height as isize;
            let amplitude = (h / 3).max(1);
            for _ in 0..ZIGZAG_LINES {
                let r0 = rng.gen_range(0..h);
                let phase = rng.gen_range(0..2 * amplitude);
                for c in 0..grid.width as isize {
                    // Triangle wave in the row coordinate.
                    let t = (c + phase) % (2 * amplitude);
                    let dr = if t < amplitude { t } else { 2 * amplitude - t };
                    let r = (r0 + dr) % h;
                    if let Some(i) = grid.index(r, c) {
                        row[i] += intensity * (1.0 - row[i]);
                    }
                }
            }
        }
        CorruptionKind::EdgeExtract { threshold } => {
            let src = row.to_vec();
            for i in 0..grid.dim {
                let (r, c) = grid.coords(i);
                let gx = (grid.at(&src, r, c + 1) - grid.at(&src, r, c - 1)) / 2.0;
                let gy = (grid.at(&src, r + 1, c) - grid.at(&src, r - 1, c)) / 2.0;
                row[i] = if (gx * gx + gy * gy).sqrt() > threshold { 1.0 } else { 0.0 };
            }
        }
        CorruptionKind::LocalShuffleBlur { radius } => {
            blur(&mut row, grid);
            let r = radius as isize;
            let mut buf = row.to_vec();
            for i in 0..grid.dim {
                let (y, x) = grid.coords(i);
                let dy = rng.gen_range(-r..=r);
                let dx = rng.gen_range(-r..=r);
                if let Some(j) = grid.index(y + dy, x + dx) {
                    buf.swap(i, j);
                }
            }
            for (v, b) in row.iter_mut().zip(buf) {
                *v = b;
            }
            blur(&mut row, grid);
        }
    }
}

/// 3x3 blur with weights 4 (centre), 2 (edge) and 1 (corner), normalised.
fn blur(row: &mut ArrayViewMut1<'_, f64>, grid: Grid) {
    let src = row.to_vec();
    for i in 0..grid.dim {
        let (r, c) = grid.coords(i);
        let mut acc = 0.0;
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                let w = match (dr.abs(), dc.abs()) {
                    (0, 0) => 4.0,
                    (0, _) | (_, 0) => 2.0,
                    _ => 1.0,
                };
                acc += w * grid.at(&src, r + dr, c + dc);
            }
        }
        row[i] = acc / 16.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub time_s: u64,
    pub sensor: usize,
    pub corruption: CorruptionKind,
}

/// Abrupt drifts: from `time_s` on, the sensor's stream carries `corruption`
/// until the next event for that sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DriftSchedule {
    pub events: Vec<DriftEvent>,
}

impl DriftSchedule {
    pub fn new(events: Vec<DriftEvent>) -> Self {
        Self { events }
    }

    pub fn validate(&self, num_sensors: usize) -> Result<()> {
        for pair in self.events.windows(2) {
            if pair[1].time_s <= pair[0].time_s {
                return Err(FlareError::config(format!(
                    "drift times must be strictly increasing ({} then {})",
                    pair[0].time_s, pair[1].time_s
                )));
            }
        }
        for e in &self.events {
            if e.sensor >= num_sensors {
                return Err(FlareError::config(format!(
                    "drift targets sensor {} but only {num_sensors} exist",
                    e.sensor
                )));
            }
            e.corruption.validate()?;
        }
        Ok(())
    }
}
