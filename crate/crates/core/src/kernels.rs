//! Low-level dense kernels shared by the layer implementations.

/// `c = alpha·op(a)·op(b) + beta·c` for row-major operands.
///
/// `a` is `m×k` (or `k×m` when `trans_a`), `b` is `k×n` (or `n×k` when `trans_b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m·k, k·n and m·n elements and the strides
    // describe row-major (or transposed row-major) views within those bounds.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Patch geometry of a strided, zero-padded square window over a `C×H×W` image.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Patches {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Patches {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Source pixel of patch row `(c, ki, kj)` at output position `(oy, ox)`, if inside the image.
    #[inline]
    fn source(&self, ki: usize, kj: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.padding)?;
        let x = (ox * self.stride + kj).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }

    /// Unfolds `image` (`C×H×W`) into `cols` (`C·k·k × OH·OW`).
    pub fn im2col(&self, image: &[f32], cols: &mut [f32]) {
        let ncols = self.cols();
        let plane = self.height * self.width;
        for c in 0..self.channels {
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let row = (c * self.kernel + ki) * self.kernel + kj;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_height {
                        for ox in 0..self.out_width {
                            dst[oy * self.out_width + ox] = match self.source(ki, kj, oy, ox) {
                                Some((y, x)) => image[c * plane + y * self.width + x],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Patches::im2col`]: accumulates `cols` into `image`.
    pub fn col2im(&self, cols: &[f32], image: &mut [f32]) {
        let ncols = self.cols();
        let plane = self.height * self.width;
        for c in 0..self.channels {
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let row = (c * self.kernel + ki) * self.kernel + kj;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_height {
                        for ox in 0..self.out_width {
                            if let Some((y, x)) = self.source(ki, kj, oy, ox) {
                                image[c * plane + y * self.width + x] += src[oy * self.out_width + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
