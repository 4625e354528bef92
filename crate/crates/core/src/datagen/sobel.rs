use crate::tensor::Tensor;

/// Default magnitude threshold for [`sobel_edge_map`].
pub const DEFAULT_SOBEL_THRESHOLD: f32 = 0.34;

/// Sobel gradient magnitude of the channel-mean image, `H×W`.
///
/// Kernels are scaled by 1/4 so a unit step yields magnitude 1 on both
/// pixels straddling it. Borders are replicate-padded.
pub fn sobel_magnitude(image: &Tensor) -> Vec<f32> {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let plane = h * w;
    let d = image.data();
    let gray: Vec<f32> = (0..plane).map(|i| (0..c).map(|ch| d[ch * plane + i]).sum::<f32>() / c as f32).collect();
    let at = |y: isize, x: isize| -> f32 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        gray[y * w + x]
    };
    let mut mag = vec![0.0; plane];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            mag[y as usize * w + x as usize] = gx.hypot(gy) / 4.0;
        }
    }
    mag
}

/// Binary `1×H×W` map: 1 where the Sobel magnitude exceeds `threshold`.
pub fn sobel_edge_map(image: &Tensor, threshold: f32) -> Tensor {
    let s = image.shape();
    let mag = sobel_magnitude(image);
    let data = mag.into_iter().map(|m| if m > threshold { 1.0 } else { 0.0 }).collect();
    Tensor::new(vec![1, s[1], s[2]], data).expect("edge map shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let img = Tensor::full(&[3, 10, 10], 0.4);
        assert!(sobel_edge_map(&img, 0.0).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_stays_next_to_the_step() {
        let (h, w, c) = (8, 12, 5);
        let img = Tensor::from_fn(&[1, h, w], |i| if i % w >= c { 1.0 } else { 0.0 });
        let map = sobel_edge_map(&img, 0.1);
        for (i, &v) in map.data().iter().enumerate() {
            if v > 0.0 {
                assert!((c - 1..=c + 1).contains(&(i % w)), "column {}", i % w);
            }
        }
        // Both pixels straddling the step carry the full magnitude.
        let mag = sobel_magnitude(&img);
        assert_eq!(mag[3 * w + c - 1], 1.0);
        assert_eq!(mag[3 * w + c], 1.0);
        assert_eq!(mag[3 * w + c + 1], 0.0);
    }
}
