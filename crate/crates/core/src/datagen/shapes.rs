use std::f64::consts::TAU;

use rand::Rng;

use super::raster::{gray, Polygon, Rgb, Scene};
use super::{check_fraction, check_resolution, item_seed, train_count, Dataset, Item, Split, Target, Task};
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng as SeededRng};
use crate::tensor::Tensor;

/// The nine shape classes, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeClass {
    Triangle,
    Square,
    Pentagon,
    Hexagon,
    Heptagon,
    Octagon,
    Nonagon,
    Circle,
    Star,
}

pub const CIRCLE_SEGMENTS: usize = 64;
pub const STAR_INNER_RATIO: f64 = 0.45;

impl ShapeClass {
    pub const ALL: [ShapeClass; 9] = [
        ShapeClass::Triangle,
        ShapeClass::Square,
        ShapeClass::Pentagon,
        ShapeClass::Hexagon,
        ShapeClass::Heptagon,
        ShapeClass::Octagon,
        ShapeClass::Nonagon,
        ShapeClass::Circle,
        ShapeClass::Star,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Triangle => "triangle",
            ShapeClass::Square => "square",
            ShapeClass::Pentagon => "pentagon",
            ShapeClass::Hexagon => "hexagon",
            ShapeClass::Heptagon => "heptagon",
            ShapeClass::Octagon => "octagon",
            ShapeClass::Nonagon => "nonagon",
            ShapeClass::Circle => "circle",
            ShapeClass::Star => "star",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }

    pub fn polygon(self, center: (f64, f64), radius: f64, rotation: f64) -> Polygon {
        match self {
            ShapeClass::Circle => Polygon::regular(center, radius, CIRCLE_SEGMENTS, rotation),
            ShapeClass::Star => Polygon::star(center, radius, STAR_INNER_RATIO, rotation),
            k => Polygon::regular(center, radius, k.id() + 3, rotation),
        }
    }
}

/// Minimum grayscale separation between a fill and its background.
pub(crate) const MIN_CONTRAST: f32 = 0.3;

/// Gray-level separation band for shape fills; keeps Sobel responses comparable
/// across images so one threshold fits all.
pub const SHAPE_CONTRAST: (f32, f32) = (0.40, 0.46);

pub(crate) fn random_rgb(rng: &mut impl Rng) -> Rgb {
    [rng.random(), rng.random(), rng.random()]
}

/// A colour whose gray level differs from every one of `others` by at least `min`.
pub(crate) fn contrasting(rng: &mut impl Rng, others: &[Rgb], min: f32) -> Rgb {
    loop {
        let c = random_rgb(rng);
        if others.iter().all(|&o| (gray(c) - gray(o)).abs() >= min) {
            return c;
        }
    }
}

/// A random hue whose gray level sits exactly `contrast` above or below `background`'s.
pub(crate) fn with_contrast(rng: &mut impl Rng, background: Rgb, contrast: f32) -> Rgb {
    let base = gray(background);
    let up = base + contrast <= 1.0;
    let down = base - contrast >= 0.0;
    let brighter = match (up, down) {
        (true, true) => rng.random::<bool>(),
        (up, _) => up,
    };
    let target = if brighter { base + contrast } else { base - contrast };
    let hue = random_rgb(rng);
    let g = gray(hue);
    let chroma = hue.map(|c| c - g);
    let mut scale = 1.0f32;
    for d in chroma {
        if d > 0.0 {
            scale = scale.min((1.0 - target) / d);
        } else if d < 0.0 {
            scale = scale.min(target / -d);
        }
    }
    chroma.map(|d| (target + scale * d).clamp(0.0, 1.0))
}

/// Everything needed to render one shape image.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    pub class: ShapeClass,
    /// Centre in pixel coordinates `(x, y)`.
    pub center: (f64, f64),
    /// Circumradius in pixels.
    pub radius: f64,
    pub rotation: f64,
    pub fill: Rgb,
    pub background: Rgb,
}

impl ShapeParams {
    /// Seeded draw: centre in the central 60% of the frame, diameter 25–45% of
    /// the shorter side, uniform rotation, random-hue fill at a [`SHAPE_CONTRAST`] gray offset from
    /// a uniform background.
    pub fn sample(class: ShapeClass, (height, width): (usize, usize), seed: u64) -> Self {
        let mut rng: SeededRng = rng_from(seed);
        let short = height.min(width) as f64;
        let center = (width as f64 * rng.random_range(0.2..0.8), height as f64 * rng.random_range(0.2..0.8));
        let radius = short * rng.random_range(0.25..0.45) / 2.0;
        let rotation = rng.random_range(0.0..TAU);
        let background = random_rgb(&mut rng);
        let contrast = rng.random_range(SHAPE_CONTRAST.0..=SHAPE_CONTRAST.1);
        let fill = with_contrast(&mut rng, background, contrast);
        Self { class, center, radius, rotation, fill, background }
    }

    pub fn scene(&self) -> Scene {
        Scene {
            background: self.background,
            layers: vec![(self.class.polygon(self.center, self.radius, self.rotation), self.fill)],
        }
    }

    /// `(3×H×W image, 1×H×W boundary)`.
    pub fn render(&self, (height, width): (usize, usize)) -> (Tensor, Tensor) {
        let r = self.scene().render(height, width);
        (
            Tensor::new(vec![3, height, width], r.rgb).expect("rgb planes"),
            Tensor::new(vec![1, height, width], r.boundary).expect("boundary plane"),
        )
    }
}

/// One seeded shape image and its analytic boundary.
pub fn gen_shape_image(class: ShapeClass, resolution: (usize, usize), seed: u64) -> Result<(Tensor, Tensor)> {
    check_resolution(resolution)?;
    Ok(ShapeParams::sample(class, resolution, seed).render(resolution))
}

/// `9·per_class` items; item `i` has class `i mod 9`, and the first
/// `floor(per_class·train_fraction)` items of each class are training items.
pub fn gen_shape_dataset(
    per_class: usize,
    resolution: (usize, usize),
    seed: u64,
    train_fraction: f64,
) -> Result<Dataset> {
    let plan = ShapePlan::new(per_class, resolution, seed, train_fraction)?;
    let items = (0..plan.len()).map(|i| plan.item(i)).collect();
    Ok(Dataset { items, task: Task::Classification, class_names: ShapeClass::names(), resolution, seed })
}

/// Lazily evaluated shape dataset; `item(i)` equals `gen_shape_dataset(..).items[i]`.
#[derive(Debug, Clone, Copy)]
pub struct ShapePlan {
    pub per_class: usize,
    pub resolution: (usize, usize),
    pub seed: u64,
    pub train_fraction: f64,
}

impl ShapePlan {
    pub fn new(per_class: usize, resolution: (usize, usize), seed: u64, train_fraction: f64) -> Result<Self> {
        check_fraction(train_fraction)?;
        check_resolution(resolution)?;
        if per_class < 2 {
            return Err(Error::InvalidDataset("per_class must be at least 2".into()));
        }
        Ok(Self { per_class, resolution, seed, train_fraction })
    }

    pub fn len(&self) -> usize {
        self.per_class * ShapeClass::ALL.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn train_per_class(&self) -> usize {
        train_count(self.per_class, self.train_fraction)
    }

    pub fn item(&self, index: usize) -> Item {
        let k = ShapeClass::ALL.len();
        let class = ShapeClass::ALL[index % k];
        let (input, _) =
            ShapeParams::sample(class, self.resolution, item_seed(self.seed, index)).render(self.resolution);
        Item {
            input,
            target: Target::Class(class.id()),
            split: if index / k < self.train_per_class() { Split::Train } else { Split::Test },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_classes_in_canonical_order() {
        assert_eq!(ShapeClass::ALL.len(), 9);
        assert_eq!(
            ShapeClass::names(),
            ["triangle", "square", "pentagon", "hexagon", "heptagon", "octagon", "nonagon", "circle", "star"]
        );
        for (i, c) in ShapeClass::ALL.iter().enumerate() {
            assert_eq!(c.id(), i);
            assert_eq!(ShapeClass::from_id(i), Some(*c));
        }
    }

    #[test]
    fn vertex_counts() {
        for class in ShapeClass::ALL {
            let n = class.polygon((0.0, 0.0), 1.0, 0.0).vertices().len();
            let want = match class {
                ShapeClass::Circle => 64,
                ShapeClass::Star => 10,
                k => k.id() + 3,
            };
            assert_eq!(n, want, "{class:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_shape_image(ShapeClass::Star, (32, 32), 5).unwrap();
        let b = gen_shape_image(ShapeClass::Star, (32, 32), 5).unwrap();
        assert!(a.0.bit_eq(&b.0) && a.1.bit_eq(&b.1));
        let c = gen_shape_image(ShapeClass::Star, (32, 32), 6).unwrap();
        assert!(!a.0.bit_eq(&c.0));
    }

    #[test]
    fn sampled_params_respect_ranges() {
        for seed in 0..200 {
            let p = ShapeParams::sample(ShapeClass::Hexagon, (64, 48), seed);
            assert!((0.2 * 48.0..0.8 * 48.0).contains(&p.center.0));
            assert!((0.2 * 64.0..0.8 * 64.0).contains(&p.center.1));
            assert!((0.125 * 48.0..0.225 * 48.0).contains(&p.radius));
            let c = (gray(p.fill) - gray(p.background)).abs();
            assert!(c >= SHAPE_CONTRAST.0 - 1e-5 && c <= SHAPE_CONTRAST.1 + 1e-5, "{c}");
            assert!(p.fill.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn small_resolution_rejected() {
        assert!(matches!(gen_shape_image(ShapeClass::Square, (15, 64), 0), Err(Error::ResolutionTooSmall { .. })));
    }

    #[test]
    fn dataset_counts_and_split() {
        let ds = gen_shape_dataset(10, (16, 16), 3, 0.9).unwrap();
        assert_eq!(ds.len(), 90);
        assert_eq!(ds.class_histogram(), vec![10; 9]);
        for c in 0..9 {
            let train = ds.items.iter().filter(|i| i.class() == Some(c) && i.split == Split::Train).count();
            assert_eq!(train, 9);
        }
        ds.validate().unwrap();
        assert!(matches!(gen_shape_dataset(10, (16, 16), 3, 1.0), Err(Error::InvalidFraction(_))));
        assert!(gen_shape_dataset(1, (16, 16), 3, 0.5).is_err());
    }
}
