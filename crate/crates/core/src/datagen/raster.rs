//! Supersampled polygon rasterization.
//!
//! Pixel `(row, col)` covers `[col, col+1) × [row, row+1)` in image
//! coordinates (x right, y down). Each pixel is sampled on a regular
//! `SUPERSAMPLE × SUPERSAMPLE` grid; a pixel's colour is the coverage-weighted
//! mix of the layers hitting its samples. The boundary mask marks every pixel
//! crossed by the visible part of a polygon outline, minus one-pixel spurs
//! (sharp vertices whose two edges meet inside a single pixel).

use std::f64::consts::{PI, TAU};

pub const SUPERSAMPLE: usize = 4;

/// Arc-length step, in pixels, used when tracing outlines.
const TRACE_STEP: f64 = 0.05;

pub type Rgb = [f32; 3];

pub fn gray(c: Rgb) -> f32 {
    (c[0] + c[1] + c[2]) / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
    bbox: (f64, f64, f64, f64),
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Self {
        let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &vertices {
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
        }
        Self { vertices, bbox }
    }

    /// Regular `sides`-gon with circumradius `radius`; at rotation 0 the top edge is horizontal.
    pub fn regular(center: (f64, f64), radius: f64, sides: usize, rotation: f64) -> Self {
        Self::new(
            (0..sides)
                .map(|i| {
                    let a = rotation - PI / 2.0 + PI / sides as f64 + TAU * i as f64 / sides as f64;
                    (center.0 + radius * a.cos(), center.1 + radius * a.sin())
                })
                .collect(),
        )
    }

    /// Five-pointed star alternating `radius` and `inner_ratio·radius`.
    pub fn star(center: (f64, f64), radius: f64, inner_ratio: f64, rotation: f64) -> Self {
        Self::new(
            (0..10)
                .map(|i| {
                    let r = if i % 2 == 0 { radius } else { radius * inner_ratio };
                    let a = rotation - PI / 2.0 + TAU * i as f64 / 10.0;
                    (center.0 + r * a.cos(), center.1 + r * a.sin())
                })
                .collect(),
        )
    }

    /// Rectangle of `length × width` centred on `center`, long axis at `angle`.
    pub fn bar(center: (f64, f64), length: f64, width: f64, angle: f64) -> Self {
        let (dx, dy) = (angle.cos(), angle.sin());
        let (hl, hw) = (length / 2.0, width / 2.0);
        Self::new(
            [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
                .iter()
                .map(|&(u, v)| (center.0 + u * dx - v * dy, center.1 + u * dy + v * dx))
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Even-odd point containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if x < self.bbox.0 || x > self.bbox.2 || y < self.bbox.1 || y > self.bbox.3 {
            return false;
        }
        let mut inside = false;
        let n = self.vertices.len();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = self.vertices[i];
            let (xj, yj) = self.vertices[j];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// A stack of filled polygons over a uniform background.
#[derive(Debug, Clone)]
pub struct Scene {
    pub background: Rgb,
    /// Bottom to top.
    pub layers: Vec<(Polygon, Rgb)>,
}

/// Rendered scene: `3×H×W` colour planes and the `H×W` boundary mask.
pub struct Rendered {
    pub rgb: Vec<f32>,
    pub boundary: Vec<f32>,
}

impl Scene {
    pub fn render(&self, height: usize, width: usize) -> Rendered {
        let plane = height * width;
        let mut rgb = vec![0.0; 3 * plane];
        let mut boundary = vec![0.0; plane];
        let samples = (SUPERSAMPLE * SUPERSAMPLE) as f32;
        let mut counts = vec![0u32; self.layers.len() + 1];
        for row in 0..height {
            for col in 0..width {
                counts.iter_mut().for_each(|c| *c = 0);
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let x = col as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        let y = row as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        let top = self.layers.iter().rposition(|(poly, _)| poly.contains(x, y)).map_or(0, |i| i + 1);
                        counts[top] += 1;
                    }
                }
                let idx = row * width + col;
                for ch in 0..3 {
                    let mut v = counts[0] as f32 * self.background[ch];
                    for (layer, &n) in self.layers.iter().zip(&counts[1..]) {
                        v += n as f32 * layer.1[ch];
                    }
                    rgb[ch * plane + idx] = v / samples;
                }
            }
        }
        for (i, (poly, _)) in self.layers.iter().enumerate() {
            let above = &self.layers[i + 1..];
            let n = poly.vertices.len();
            for k in 0..n {
                let (x0, y0) = poly.vertices[k];
                let (x1, y1) = poly.vertices[(k + 1) % n];
                let steps = ((x1 - x0).hypot(y1 - y0) / TRACE_STEP).ceil().max(1.0) as usize;
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
                    if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                        continue;
                    }
                    if above.iter().any(|(p, _)| p.contains(x, y)) {
                        continue;
                    }
                    boundary[y as usize * width + x as usize] = 1.0;
                }
            }
        }
        prune_spurs(&mut boundary, height, width);
        Rendered { rgb, boundary }
    }
}

/// Repeatedly clears interior mask pixels with fewer than two 8-neighbours.
fn prune_spurs(mask: &mut [f32], height: usize, width: usize) {
    let degree = |mask: &[f32], row: usize, col: usize| {
        let mut n = 0;
        for y in row.saturating_sub(1)..=(row + 1).min(height - 1) {
            for x in col.saturating_sub(1)..=(col + 1).min(width - 1) {
                if (y, x) != (row, col) && mask[y * width + x] > 0.0 {
                    n += 1;
                }
            }
        }
        n
    };
    let mut pending: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] > 0.0).collect();
    while !pending.is_empty() {
        let mut next = Vec::new();
        for idx in pending {
            let (row, col) = (idx / width, idx % width);
            if mask[idx] == 0.0 || row == 0 || col == 0 || row + 1 == height || col + 1 == width {
                continue;
            }
            if degree(mask, row, col) < 2 {
                mask[idx] = 0.0;
                for y in row - 1..=row + 1 {
                    for x in col - 1..=col + 1 {
                        next.push(y * width + x);
                    }
                }
            }
        }
        pending = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_of_square_and_star_notch() {
        let sq = Polygon::regular((10.0, 10.0), 5.0, 4, 0.0);
        assert!(sq.contains(10.0, 10.0));
        assert!(sq.contains(13.0, 13.0));
        assert!(!sq.contains(14.0, 10.0 - 3.6));
        let star = Polygon::star((0.0, 0.0), 10.0, 0.45, 0.0);
        assert!(star.contains(0.0, -9.0)); // inside the top point
        assert!(!star.contains(0.0, 8.0)); // bottom notch between two points
    }

    #[test]
    fn boundary_traces_the_outline() {
        let scene = Scene {
            background: [0.0; 3],
            layers: vec![(Polygon::new(vec![(2.5, 2.5), (6.5, 2.5), (6.5, 6.5), (2.5, 6.5)]), [1.0; 3])],
        };
        let r = scene.render(9, 9);
        // Edge pixels are half covered, interior fully, outside not at all.
        assert_eq!(r.rgb[4 * 9 + 4], 1.0);
        assert_eq!(r.rgb[2 * 9 + 4], 0.5);
        assert_eq!(r.rgb[0], 0.0);
        assert_eq!(r.boundary[2 * 9 + 4], 1.0);
        assert_eq!(r.boundary[4 * 9 + 4], 0.0);
        assert_eq!(r.boundary.iter().filter(|&&b| b > 0.0).count(), 16);
    }

    #[test]
    fn spurs_are_pruned_but_frame_ends_kept() {
        let mut m = vec![0.0f32; 25];
        // A ring around the centre plus a tail running into the top frame edge.
        for i in [6, 7, 8, 11, 13, 16, 17, 18, 2] {
            m[i] = 1.0;
        }
        prune_spurs(&mut m, 5, 5);
        assert_eq!(m.iter().filter(|&&v| v > 0.0).count(), 9);
        let mut spur = vec![0.0f32; 25];
        for i in [6, 12, 18] {
            spur[i] = 1.0;
        }
        prune_spurs(&mut spur, 5, 5);
        assert!(spur.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn occluded_outline_is_hidden() {
        let big = Polygon::new(vec![(1.5, 1.5), (8.5, 1.5), (8.5, 8.5), (1.5, 8.5)]);
        let small = Polygon::new(vec![(0.5, 3.5), (5.5, 3.5), (5.5, 6.5), (0.5, 6.5)]);
        let r = Scene { background: [0.0; 3], layers: vec![(big, [0.5; 3]), (small, [1.0; 3])] }.render(10, 10);
        // The left side of the big square at x=1.5 is hidden under the small one for y in (3.5, 6.5).
        assert_eq!(r.boundary[5 * 10 + 1], 0.0);
        assert_eq!(r.boundary[2 * 10 + 1], 1.0);
        assert_eq!(r.boundary[5 * 10], 1.0);
    }
}
