//! Curriculum datasets.
//!
//! Generators are pure functions of their seed: item `i` of a dataset with
//! seed `s` is rendered from its own stream `mix(s, i)`, so items can be
//! produced in any order (or streamed to disk) with identical results.

mod bench;
mod edges;
mod folder;
pub mod netpbm;
pub mod raster;
mod shapes;
mod sobel;

use rand::seq::SliceRandom;

pub use bench::{gen_bench_dataset, gen_bench_image, BenchClass, BenchPlan};
pub use edges::{edge_scene_layout, gen_edge_dataset, gen_edge_scene, EdgePlan, EdgeSceneConfig};
pub use folder::{load_image_folder, resize_bilinear, write_dataset, DatasetWriter, LoadOptions};
pub use shapes::{
    gen_shape_dataset, gen_shape_image, ShapeClass, ShapeParams, ShapePlan, CIRCLE_SEGMENTS, STAR_INNER_RATIO,
};
pub use sobel::{sobel_edge_map, sobel_magnitude, DEFAULT_SOBEL_THRESHOLD};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    EdgeMap,
    Classification,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::EdgeMap => "edge_map",
            Task::Classification => "classification",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `1×H×W` edge map with values in `[0, 1]`.
    Map(Tensor),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    /// `C×H×W` image in `[0, 1]`.
    pub input: Tensor,
    pub target: Target,
    pub split: Split,
}

impl Item {
    pub fn class(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            Target::Map(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<Item>,
    pub task: Task,
    /// Ordered class names; empty for edge-map datasets.
    pub class_names: Vec<String>,
    pub resolution: (usize, usize),
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.items.iter().enumerate().filter(|(_, it)| it.split == split).map(|(i, _)| i).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.items.iter().filter(|it| it.split == split).count()
    }

    /// Items per class id (classification only).
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.class_names.len()];
        for item in &self.items {
            if let Some(c) = item.class() {
                hist[c] += 1;
            }
        }
        hist
    }

    /// Checks the dataset invariants: one input shape, ids below the class count,
    /// single-channel edge targets in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let first = self.items.first().ok_or(Error::EmptyDataset)?;
        let shape = first.input.shape().to_vec();
        for (i, item) in self.items.iter().enumerate() {
            if item.input.shape() != shape.as_slice() {
                return Err(Error::InvalidDataset(format!("item {i} has a different input shape")));
            }
            match (&item.target, self.task) {
                (Target::Class(c), Task::Classification) if *c < self.class_names.len() => {}
                (Target::Map(m), Task::EdgeMap)
                    if m.shape() == [1, shape[1], shape[2]] && m.data().iter().all(|v| (0.0..=1.0).contains(v)) => {}
                _ => return Err(Error::InvalidDataset(format!("item {i} has an invalid target"))),
            }
        }
        Ok(())
    }

    /// Deterministic permutation of the items; splits and targets travel with them.
    pub fn shuffle(mut self, seed: u64) -> Result<Self> {
        if self.items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.items.shuffle(&mut rng::rng_from(rng::derive(seed, "shuffle")));
        Ok(self)
    }

    /// The items of one split, in order.
    pub fn subset(&self, split: Split) -> Result<Self> {
        if self.items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            items: self.items.iter().filter(|it| it.split == split).cloned().collect(),
            task: self.task,
            class_names: self.class_names.clone(),
            resolution: self.resolution,
            seed: self.seed,
        })
    }
}

pub(crate) fn check_fraction(train_fraction: f64) -> Result<()> {
    if train_fraction > 0.0 && train_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidFraction(train_fraction))
    }
}

pub(crate) fn check_resolution((height, width): (usize, usize)) -> Result<()> {
    const MIN: usize = 16;
    if height < MIN || width < MIN {
        return Err(Error::ResolutionTooSmall { height, width, min: MIN });
    }
    Ok(())
}

pub(crate) fn item_seed(seed: u64, index: usize) -> u64 {
    rng::mix(seed, index as u64)
}

/// Number of training items out of `n` (rounded down).
pub(crate) fn train_count(n: usize, train_fraction: f64) -> usize {
    (n as f64 * train_fraction).floor() as usize
}
