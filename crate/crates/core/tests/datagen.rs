use std::f64::consts::FRAC_PI_2;

use dpt_core::datagen::{
    gen_edge_dataset, gen_edge_scene, gen_shape_dataset, gen_shape_image, sobel_edge_map, EdgeSceneConfig, ShapeClass,
    ShapeParams, Split, Task, DEFAULT_SOBEL_THRESHOLD,
};
use dpt_core::Tensor;

const RES: (usize, usize) = (64, 64);

fn ones(t: &Tensor) -> Vec<bool> {
    t.data().iter().map(|&v| v > 0.5).collect()
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    inter as f64 / union as f64
}

fn square(center: (f64, f64), radius: f64) -> ShapeParams {
    ShapeParams {
        class: ShapeClass::Square,
        center,
        radius,
        rotation: 0.0,
        fill: [0.9, 0.8, 0.7],
        background: [0.2, 0.3, 0.1],
    }
}

#[test]
fn axis_aligned_square_outline_matches_perimeter() {
    for (center, radius) in [((32.3, 31.6), 12.0), ((30.0, 33.7), 9.5), ((28.45, 35.2), 15.1)] {
        let (_, boundary) = square(center, radius).render(RES);
        let count = ones(&boundary).iter().filter(|&&b| b).count();
        let half = radius / 2f64.sqrt();
        let side = 2.0 * half;
        // Exact cell count: two rows and two columns of cells crossed, corners shared.
        let span = |lo: f64, hi: f64| (hi.floor() - lo.floor()) as usize + 1;
        let nx = span(center.0 - half, center.0 + half);
        let ny = span(center.1 - half, center.1 + half);
        assert_eq!(count, 2 * nx + 2 * ny - 4);
        assert!((count as f64 - 4.0 * side).abs() <= 8.0, "{count} vs {}", 4.0 * side);
        // Every marked pixel sits on one of the four lines.
        let b = ones(&boundary);
        let (x0, x1) = ((center.0 - half).floor() as usize, (center.0 + half).floor() as usize);
        let (y0, y1) = ((center.1 - half).floor() as usize, (center.1 + half).floor() as usize);
        for row in 0..64 {
            for col in 0..64 {
                let on_outline = ((col == x0 || col == x1) && (y0..=y1).contains(&row))
                    || ((row == y0 || row == y1) && (x0..=x1).contains(&col));
                assert_eq!(b[row * 64 + col], on_outline, "({row}, {col})");
            }
        }
    }
}

/// Rotates an `N×N` mask a quarter turn clockwise in image coordinates.
fn rot90(mask: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for row in 0..n {
        for col in 0..n {
            out[col * n + (n - 1 - row)] = mask[row * n + col];
        }
    }
    out
}

#[test]
fn circle_boundary_is_quarter_turn_invariant() {
    for seed in 0..30 {
        let p = ShapeParams::sample(ShapeClass::Circle, RES, seed);
        let turned =
            ShapeParams { center: (64.0 - p.center.1, p.center.0), rotation: p.rotation + FRAC_PI_2, ..p.clone() };
        let a = rot90(&ones(&p.render(RES).1), 64);
        let b = ones(&turned.render(RES).1);
        let total = a.iter().filter(|&&x| x).count();
        let mismatched = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(mismatched as f64 <= 0.02 * total as f64, "seed {seed}: {mismatched}/{total}");

        // The same holds against the unrotated image when the circle is centred.
        let centred = ShapeParams { center: (32.0, 32.0), ..p.clone() };
        let m = ones(&centred.render(RES).1);
        let r = rot90(&m, 64);
        let total = m.iter().filter(|&&x| x).count();
        let mismatched = m.iter().zip(&r).filter(|(x, y)| x != y).count();
        assert!(mismatched as f64 <= 0.02 * total as f64, "centred seed {seed}: {mismatched}/{total}");
    }
}

#[test]
fn shape_boundaries_are_closed() {
    for class in ShapeClass::ALL {
        for seed in 0..25 {
            let (_, boundary) = gen_shape_image(class, RES, seed).unwrap();
            let b = ones(&boundary);
            for row in 0..64isize {
                for col in 0..64isize {
                    if !b[(row * 64 + col) as usize] {
                        continue;
                    }
                    let mut neighbours = 0;
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (y, x) = (row + dy, col + dx);
                            if (dy, dx) != (0, 0)
                                && (0..64).contains(&y)
                                && (0..64).contains(&x)
                                && b[(y * 64 + x) as usize]
                            {
                                neighbours += 1;
                            }
                        }
                    }
                    assert!(neighbours >= 2, "{class:?} seed {seed} pixel ({row}, {col})");
                }
            }
        }
    }
}

#[test]
fn sobel_agrees_with_analytic_boundary() {
    let mut worst = f64::INFINITY;
    for class in ShapeClass::ALL {
        for seed in 0..50 {
            let (image, boundary) = gen_shape_image(class, RES, seed).unwrap();
            let score = iou(&ones(&sobel_edge_map(&image, DEFAULT_SOBEL_THRESHOLD)), &ones(&boundary));
            assert!(score >= 0.5, "{class:?} seed {seed}: IoU {score:.3}");
            worst = worst.min(score);
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn edge_targets_are_sparse() {
    let config = EdgeSceneConfig::default();
    for seed in 0..100 {
        let (_, target) = gen_edge_scene(&config, RES, seed).unwrap();
        let frac = ones(&target).iter().filter(|&&b| b).count() as f64 / (64.0 * 64.0);
        assert!(frac < 0.15, "seed {seed}: {frac:.3}");
        assert!(frac > 0.0, "seed {seed}: empty target");
    }
}

#[test]
fn desk_scale_corpora_have_the_stated_shapes() {
    let shapes = gen_shape_dataset(100, RES, 3, 0.9).unwrap();
    assert_eq!(shapes.len(), 900);
    assert_eq!(shapes.class_histogram(), vec![100; 9]);
    assert_eq!(shapes.count(Split::Train), 810);
    shapes.validate().unwrap();
    for c in 0..9 {
        let train = shapes.items.iter().filter(|it| it.class() == Some(c) && it.split == Split::Train).count();
        assert_eq!(train, 90);
    }

    let edges = gen_edge_dataset(250, RES, 3, EdgeSceneConfig::default(), 0.8).unwrap();
    assert_eq!(edges.task, Task::EdgeMap);
    assert_eq!((edges.count(Split::Train), edges.count(Split::Test)), (200, 50));
    edges.validate().unwrap();
}

#[test]
fn regeneration_is_bit_identical() {
    let a = gen_edge_dataset(6, (32, 32), 11, EdgeSceneConfig::default(), 0.5).unwrap();
    let b = gen_edge_dataset(6, (32, 32), 11, EdgeSceneConfig::default(), 0.5).unwrap();
    assert_eq!(a, b);
    let c = gen_shape_dataset(2, (32, 32), 11, 0.5).unwrap();
    let d = gen_shape_dataset(2, (32, 32), 11, 0.5).unwrap();
    assert_eq!(c, d);
}
