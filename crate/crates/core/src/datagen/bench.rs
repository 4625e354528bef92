//! Ten-class procedural texture set used as the downstream benchmark.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::raster::SUPERSAMPLE;
use super::shapes::{contrasting, random_rgb, MIN_CONTRAST};
use super::{check_fraction, check_resolution, item_seed, train_count, Dataset, Item, Split, Target, Task};
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchClass {
    HorizontalStripes,
    VerticalStripes,
    DiagonalStripes,
    AntiDiagonalStripes,
    Checkerboard,
    Rings,
    Dots,
    Grid,
    Cross,
    Disc,
}

impl BenchClass {
    pub const ALL: [BenchClass; 10] = [
        BenchClass::HorizontalStripes,
        BenchClass::VerticalStripes,
        BenchClass::DiagonalStripes,
        BenchClass::AntiDiagonalStripes,
        BenchClass::Checkerboard,
        BenchClass::Rings,
        BenchClass::Dots,
        BenchClass::Grid,
        BenchClass::Cross,
        BenchClass::Disc,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchClass::HorizontalStripes => "h_stripes",
            BenchClass::VerticalStripes => "v_stripes",
            BenchClass::DiagonalStripes => "diag_stripes",
            BenchClass::AntiDiagonalStripes => "antidiag_stripes",
            BenchClass::Checkerboard => "checkerboard",
            BenchClass::Rings => "rings",
            BenchClass::Dots => "dots",
            BenchClass::Grid => "grid",
            BenchClass::Cross => "cross",
            BenchClass::Disc => "disc",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

/// Seeded geometry of one pattern; `inside(x, y)` selects the foreground colour.
struct Pattern {
    class: BenchClass,
    period: f64,
    phase: (f64, f64),
    angle: f64,
    center: (f64, f64),
    size: f64,
}

impl Pattern {
    fn sample(class: BenchClass, (height, width): (usize, usize), rng: &mut impl Rng) -> Self {
        let short = height.min(width) as f64;
        let period = short * rng.random_range(0.1..0.2);
        Self {
            class,
            period,
            phase: (rng.random_range(0.0..period), rng.random_range(0.0..period)),
            angle: rng.random_range(-PI / 18.0..PI / 18.0),
            center: (width as f64 * rng.random_range(0.3..0.7), height as f64 * rng.random_range(0.3..0.7)),
            size: short * rng.random_range(0.2..0.35),
        }
    }

    fn band(&self, t: f64, duty: f64) -> bool {
        (t / self.period).rem_euclid(1.0) < duty
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        // Rotate by the small jitter angle around the centre.
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c - dy * s + self.phase.0;
        let v = dx * s + dy * c + self.phase.1;
        match self.class {
            BenchClass::HorizontalStripes => self.band(v, 0.5),
            BenchClass::VerticalStripes => self.band(u, 0.5),
            BenchClass::DiagonalStripes => self.band((u + v) * FRAC_PI_4.cos(), 0.5),
            BenchClass::AntiDiagonalStripes => self.band((u - v) * FRAC_PI_4.cos(), 0.5),
            BenchClass::Checkerboard => self.band(u, 0.5) != self.band(v, 0.5),
            BenchClass::Rings => self.band(dx.hypot(dy), 0.5),
            BenchClass::Dots => {
                let fu = (u / self.period).rem_euclid(1.0) - 0.5;
                let fv = (v / self.period).rem_euclid(1.0) - 0.5;
                fu.hypot(fv) < 0.3
            }
            BenchClass::Grid => self.band(u, 0.25) || self.band(v, 0.25),
            BenchClass::Cross => {
                let (a, b) = (dx * c - dy * s, dx * s + dy * c);
                let arm = self.size * 0.3;
                (a.abs() < arm && b.abs() < self.size * 1.2) || (b.abs() < arm && a.abs() < self.size * 1.2)
            }
            BenchClass::Disc => dx.hypot(dy) < self.size,
        }
    }
}

/// One `3×H×W` benchmark image.
pub fn gen_bench_image(class: BenchClass, resolution: (usize, usize), seed: u64) -> Result<Tensor> {
    check_resolution(resolution)?;
    let (height, width) = resolution;
    let mut rng = rng_from(seed);
    let pattern = Pattern::sample(class, resolution, &mut rng);
    let background = random_rgb(&mut rng);
    let fill = contrasting(&mut rng, &[background], MIN_CONTRAST);
    let plane = height * width;
    let samples = (SUPERSAMPLE * SUPERSAMPLE) as f32;
    let mut rgb = vec![0.0; 3 * plane];
    let normal = Normal::new(0.0f32, 0.02).expect("valid sigma");
    let mut noise = rng_from(derive(seed, "noise"));
    for row in 0..height {
        for col in 0..width {
            let mut hits = 0u32;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = col as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    let y = row as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                    hits += u32::from(pattern.inside(x, y));
                }
            }
            let cov = hits as f32 / samples;
            for ch in 0..3 {
                let v = background[ch] + cov * (fill[ch] - background[ch]);
                rgb[ch * plane + row * width + col] = (v + normal.sample(&mut noise)).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(vec![3, height, width], rgb)
}

#[derive(Debug, Clone, Copy)]
pub struct BenchPlan {
    pub per_class: usize,
    pub resolution: (usize, usize),
    pub seed: u64,
    pub train_fraction: f64,
}

impl BenchPlan {
    pub fn new(per_class: usize, resolution: (usize, usize), seed: u64, train_fraction: f64) -> Result<Self> {
        check_fraction(train_fraction)?;
        check_resolution(resolution)?;
        if per_class < 2 {
            return Err(Error::InvalidDataset("per_class must be at least 2".into()));
        }
        Ok(Self { per_class, resolution, seed, train_fraction })
    }

    pub fn len(&self) -> usize {
        self.per_class * BenchClass::ALL.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn item(&self, index: usize) -> Result<Item> {
        let k = BenchClass::ALL.len();
        let class = BenchClass::ALL[index % k];
        Ok(Item {
            input: gen_bench_image(class, self.resolution, item_seed(self.seed, index))?,
            target: Target::Class(class.id()),
            split: if index / k < train_count(self.per_class, self.train_fraction) {
                Split::Train
            } else {
                Split::Test
            },
        })
    }
}

/// `10·per_class` items laid out like [`super::gen_shape_dataset`].
pub fn gen_bench_dataset(
    per_class: usize,
    resolution: (usize, usize),
    seed: u64,
    train_fraction: f64,
) -> Result<Dataset> {
    let plan = BenchPlan::new(per_class, resolution, seed, train_fraction)?;
    let items = (0..plan.len()).map(|i| plan.item(i)).collect::<Result<_>>()?;
    Ok(Dataset { items, task: Task::Classification, class_names: BenchClass::names(), resolution, seed })
}
