use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::raster::{Polygon, Scene};
use super::shapes::{contrasting, random_rgb, CIRCLE_SEGMENTS};
use super::{check_fraction, check_resolution, item_seed, train_count, Dataset, Item, Split, Target, Task};
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from};
use crate::tensor::Tensor;

/// Minimum grayscale separation of each primitive from the background.
const PRIMITIVE_CONTRAST: f32 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSceneConfig {
    /// Number of primitives composited per scene.
    pub complexity: usize,
    /// Standard deviation of the additive Gaussian pixel noise; 0 disables it.
    pub noise_sigma: f32,
}

impl Default for EdgeSceneConfig {
    fn default() -> Self {
        Self { complexity: 3, noise_sigma: 0.02 }
    }
}

fn primitive(rng: &mut impl Rng, short: f64, width: f64, height: f64) -> Polygon {
    let center = (width * rng.random_range(0.1..0.9), height * rng.random_range(0.1..0.9));
    let rotation = rng.random_range(0.0..TAU);
    match rng.random_range(0..3) {
        0 => {
            let sides = rng.random_range(3..=8);
            Polygon::regular(center, short * rng.random_range(0.08..0.2), sides, rotation)
        }
        1 => Polygon::regular(center, short * rng.random_range(0.06..0.2), CIRCLE_SEGMENTS, rotation),
        _ => Polygon::bar(center, short * rng.random_range(0.3..0.7), rng.random_range(1.5..3.0), rotation),
    }
}

/// The primitive layout of one scene, before rendering.
pub fn edge_scene_layout(config: &EdgeSceneConfig, (height, width): (usize, usize), seed: u64) -> Scene {
    let mut rng = rng_from(seed);
    let short = height.min(width) as f64;
    let background = random_rgb(&mut rng);
    let layers = (0..config.complexity)
        .map(|_| {
            let poly = primitive(&mut rng, short, width as f64, height as f64);
            (poly, contrasting(&mut rng, &[background], PRIMITIVE_CONTRAST))
        })
        .collect();
    Scene { background, layers }
}

/// One composite scene `(3×H×W image, 1×H×W visible-boundary map)`.
pub fn gen_edge_scene(config: &EdgeSceneConfig, resolution: (usize, usize), seed: u64) -> Result<(Tensor, Tensor)> {
    check_resolution(resolution)?;
    if config.complexity == 0 {
        return Err(Error::InvalidDataset("complexity must be at least 1".into()));
    }
    let (height, width) = resolution;
    let rendered = edge_scene_layout(config, resolution, seed).render(height, width);
    let mut rgb = rendered.rgb;
    if config.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0f32, config.noise_sigma).map_err(|e| Error::InvalidHyperparameter(e.to_string()))?;
        let mut rng = rng_from(derive(seed, "noise"));
        for v in &mut rgb {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok((Tensor::new(vec![3, height, width], rgb)?, Tensor::new(vec![1, height, width], rendered.boundary)?))
}

/// Lazily evaluated edge dataset; the first `floor(count·train_fraction)` items train.
#[derive(Debug, Clone, Copy)]
pub struct EdgePlan {
    pub count: usize,
    pub resolution: (usize, usize),
    pub seed: u64,
    pub config: EdgeSceneConfig,
    pub train_fraction: f64,
}

impl EdgePlan {
    pub fn new(
        count: usize,
        resolution: (usize, usize),
        seed: u64,
        config: EdgeSceneConfig,
        train_fraction: f64,
    ) -> Result<Self> {
        check_fraction(train_fraction)?;
        check_resolution(resolution)?;
        if count < 2 {
            return Err(Error::InvalidDataset("count must be at least 2".into()));
        }
        if config.complexity == 0 {
            return Err(Error::InvalidDataset("complexity must be at least 1".into()));
        }
        Ok(Self { count, resolution, seed, config, train_fraction })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn train_len(&self) -> usize {
        train_count(self.count, self.train_fraction)
    }

    pub fn item(&self, index: usize) -> Result<Item> {
        let (input, target) = gen_edge_scene(&self.config, self.resolution, item_seed(self.seed, index))?;
        Ok(Item {
            input,
            target: Target::Map(target),
            split: if index < self.train_len() { Split::Train } else { Split::Test },
        })
    }
}

pub fn gen_edge_dataset(
    count: usize,
    resolution: (usize, usize),
    seed: u64,
    config: EdgeSceneConfig,
    train_fraction: f64,
) -> Result<Dataset> {
    let plan = EdgePlan::new(count, resolution, seed, config, train_fraction)?;
    let items = (0..plan.len()).map(|i| plan.item(i)).collect::<Result<_>>()?;
    Ok(Dataset { items, task: Task::EdgeMap, class_names: Vec::new(), resolution, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_shape() {
        let ds = gen_edge_dataset(250, (16, 16), 1, EdgeSceneConfig::default(), 0.8).unwrap();
        assert_eq!(ds.count(Split::Train), 200);
        assert_eq!(ds.count(Split::Test), 50);
        ds.validate().unwrap();
    }

    #[test]
    fn single_primitive_target_is_its_boundary() {
        let config = EdgeSceneConfig { complexity: 1, noise_sigma: 0.0 };
        let (image, target) = gen_edge_scene(&config, (32, 32), 4).unwrap();
        let scene = edge_scene_layout(&config, (32, 32), 4);
        let alone = Scene { background: scene.background, layers: scene.layers.clone() }.render(32, 32);
        assert_eq!(target.data(), alone.boundary.as_slice());
        assert_eq!(image.data(), alone.rgb.as_slice());
    }

    #[test]
    fn noise_is_seeded_and_bounded() {
        let config = EdgeSceneConfig::default();
        let a = gen_edge_scene(&config, (24, 24), 2).unwrap();
        let b = gen_edge_scene(&config, (24, 24), 2).unwrap();
        assert!(a.0.bit_eq(&b.0));
        assert!(a.0.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let clean = gen_edge_scene(&EdgeSceneConfig { noise_sigma: 0.0, ..config }, (24, 24), 2).unwrap();
        assert!(!a.0.bit_eq(&clean.0));
        assert!(a.1.bit_eq(&clean.1));
    }
}
