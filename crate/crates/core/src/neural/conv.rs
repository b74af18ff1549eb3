//! 3D convolution (cross-correlation) via im2col and SGEMM.
//!
//! The im2col buffer is built in chunks of output depth planes so that
//! whole-volume inference does not materialise a multi-gigabyte matrix.

use super::{NeuralError, Result, Tensor};

/// Upper bound on im2col buffer elements per chunk.
const COL_BUDGET: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        ConvGeometry {
            stride: [stride; 3],
            padding: [padding; 3],
        }
    }

    /// Same-size output for an odd cubic kernel at stride 1.
    pub fn same(kernel: usize) -> Self {
        ConvGeometry::new(1, kernel / 2)
    }

    pub fn output_dims(&self, input: [usize; 3], kernel: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if self.stride[a] == 0 || padded < kernel[a] {
                return Err(NeuralError::Shape(format!(
                    "kernel {kernel:?} does not fit input {input:?} with padding {:?}",
                    self.padding
                )));
            }
            out[a] = (padded - kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

pub struct Conv3dGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Vec<f32>,
}

struct Layout {
    cin: usize,
    cout: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    output: [usize; 3],
    geom: ConvGeometry,
}

impl Layout {
    fn new(x: &Tensor, w: &Tensor, geom: ConvGeometry) -> Result<Self> {
        let [cout, cin_w, kd, kh, kw] = w.shape();
        if x.channels() != cin_w {
            return Err(NeuralError::Shape(format!(
                "input has {} channels, weight expects {cin_w}",
                x.channels()
            )));
        }
        let kernel = [kd, kh, kw];
        let output = geom.output_dims(x.spatial(), kernel)?;
        Ok(Layout {
            cin: cin_w,
            cout,
            input: x.spatial(),
            kernel,
            output,
            geom,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn out_plane(&self) -> usize {
        self.output[1] * self.output[2]
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Output depth planes per chunk.
    fn chunk_depth(&self) -> usize {
        (COL_BUDGET / (self.k() * self.out_plane()).max(1)).clamp(1, self.output[0])
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.geom.stride == [1, 1, 1] && self.geom.padding == [0, 0, 0]
    }

    /// Fills `col` (K × chunk columns) for output depths `[d0, d1)`.
    fn im2col(&self, x: &[f32], d0: usize, d1: usize, col: &mut [f32]) {
        let [id, ih, iw] = self.input;
        let [kd, kh, kw] = self.kernel;
        let [_, oh, ow] = self.output;
        let [sd, sh, sw] = self.geom.stride;
        let [pd, ph, pw] = self.geom.padding;
        let ncols = (d1 - d0) * oh * ow;
        let mut row = 0;
        for c in 0..self.cin {
            let xc = &x[c * id * ih * iw..(c + 1) * id * ih * iw];
            for a in 0..kd {
                for b in 0..kh {
                    for e in 0..kw {
                        let dst = &mut col[row * ncols..(row + 1) * ncols];
                        let mut p = 0;
                        for od in d0..d1 {
                            let zd = (od * sd + a) as isize - pd as isize;
                            for oy in 0..oh {
                                let zy = (oy * sh + b) as isize - ph as isize;
                                let valid_row =
                                    zd >= 0 && (zd as usize) < id && zy >= 0 && (zy as usize) < ih;
                                if !valid_row {
                                    dst[p..p + ow].iter_mut().for_each(|v| *v = 0.0);
                                    p += ow;
                                    continue;
                                }
                                let base = (zd as usize * ih + zy as usize) * iw;
                                for ox in 0..ow {
                                    let zx = (ox * sw + e) as isize - pw as isize;
                                    dst[p] = if zx >= 0 && (zx as usize) < iw {
                                        xc[base + zx as usize]
                                    } else {
                                        0.0
                                    };
                                    p += 1;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// Scatter-adds `col` back into `dx` (inverse of [`Layout::im2col`]).
    fn col2im(&self, col: &[f32], d0: usize, d1: usize, dx: &mut [f32]) {
        let [id, ih, iw] = self.input;
        let [kd, kh, kw] = self.kernel;
        let [_, oh, ow] = self.output;
        let [sd, sh, sw] = self.geom.stride;
        let [pd, ph, pw] = self.geom.padding;
        let ncols = (d1 - d0) * oh * ow;
        let mut row = 0;
        for c in 0..self.cin {
            let xc = &mut dx[c * id * ih * iw..(c + 1) * id * ih * iw];
            for a in 0..kd {
                for b in 0..kh {
                    for e in 0..kw {
                        let src = &col[row * ncols..(row + 1) * ncols];
                        let mut p = 0;
                        for od in d0..d1 {
                            let zd = (od * sd + a) as isize - pd as isize;
                            for oy in 0..oh {
                                let zy = (oy * sh + b) as isize - ph as isize;
                                if zd < 0 || zd as usize >= id || zy < 0 || zy as usize >= ih {
                                    p += ow;
                                    continue;
                                }
                                let base = (zd as usize * ih + zy as usize) * iw;
                                for ox in 0..ow {
                                    let zx = (ox * sw + e) as isize - pw as isize;
                                    if zx >= 0 && (zx as usize) < iw {
                                        xc[base + zx as usize] += src[p];
                                    }
                                    p += 1;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }
}

/// `C (m×n) = alpha·A (m×k) · B (k×n) + beta·C` with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: isize,
    csa: isize,
    b: &[f32],
    rsb: isize,
    csb: isize,
    beta: f32,
    c: &mut [f32],
    rsc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices whose extents cover every index reached by
    // the given dimensions and strides.
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
            rsc,
            1,
        );
    }
}

/// Cross-correlates `x (N, Cin, D, H, W)` with `w (Cout, Cin, kd, kh, kw)`.
pub fn conv3d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&[f32]>,
    geom: ConvGeometry,
) -> Result<Tensor> {
    let l = Layout::new(x, w, geom)?;
    if let Some(b) = bias {
        if b.len() != l.cout {
            return Err(NeuralError::Shape(format!(
                "bias has {} entries, expected {}",
                b.len(),
                l.cout
            )));
        }
    }
    let [od, oh, ow] = l.output;
    let mut out = Tensor::zeros([x.batch(), l.cout, od, oh, ow]);
    let k = l.k();
    let p_total = l.out_len();
    let plane = l.out_plane();
    let chunk = l.chunk_depth();
    let mut col = vec![
        0.0f32;
        if l.is_pointwise() {
            0
        } else {
            k * chunk * plane
        }
    ];

    for n in 0..x.batch() {
        let xs = x.sample(n);
        let ys = out.sample_mut(n);
        if l.is_pointwise() {
            gemm(
                l.cout,
                k,
                p_total,
                w.data(),
                k as isize,
                1,
                xs,
                p_total as isize,
                1,
                0.0,
                ys,
                p_total as isize,
            );
        } else {
            let mut d0 = 0;
            while d0 < od {
                let d1 = (d0 + chunk).min(od);
                let ncols = (d1 - d0) * plane;
                l.im2col(xs, d0, d1, &mut col[..k * ncols]);
                gemm(
                    l.cout,
                    k,
                    ncols,
                    w.data(),
                    k as isize,
                    1,
                    &col[..k * ncols],
                    ncols as isize,
                    1,
                    0.0,
                    &mut ys[d0 * plane..],
                    p_total as isize,
                );
                d0 = d1;
            }
        }
        if let Some(b) = bias {
            for (co, bv) in b.iter().enumerate() {
                ys[co * p_total..(co + 1) * p_total]
                    .iter_mut()
                    .for_each(|v| *v += bv);
            }
        }
    }
    Ok(out)
}

/// Exact gradients of [`conv3d_forward`] with respect to input, weight and bias.
pub fn conv3d_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    geom: ConvGeometry,
) -> Result<Conv3dGrads> {
    let l = Layout::new(x, w, geom)?;
    let [od, oh, ow] = l.output;
    if dout.shape() != [x.batch(), l.cout, od, oh, ow] {
        return Err(NeuralError::Shape(format!(
            "output gradient shape {:?} does not match forward output",
            dout.shape()
        )));
    }
    let k = l.k();
    let p_total = l.out_len();
    let plane = l.out_plane();
    let chunk = l.chunk_depth();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = vec![0.0f32; l.cout];
    let mut col = vec![0.0f32; k * chunk * plane];
    let mut dcol = vec![0.0f32; k * chunk * plane];
    let in_len = l.in_len();

    for n in 0..x.batch() {
        let xs = x.sample(n);
        let gs = dout.sample(n);
        for (co, b) in db.iter_mut().enumerate() {
            *b += gs[co * p_total..(co + 1) * p_total].iter().sum::<f32>();
        }
        let dxs = &mut dx.sample_mut(n)[..l.cin * in_len];
        if l.is_pointwise() {
            // dW += G · Xᵀ ; dX = Wᵀ · G
            gemm(
                l.cout,
                p_total,
                k,
                gs,
                p_total as isize,
                1,
                xs,
                1,
                p_total as isize,
                1.0,
                dw.data_mut(),
                k as isize,
            );
            gemm(
                k,
                l.cout,
                p_total,
                w.data(),
                1,
                k as isize,
                gs,
                p_total as isize,
                1,
                0.0,
                dxs,
                p_total as isize,
            );
            continue;
        }
        let mut d0 = 0;
        while d0 < od {
            let d1 = (d0 + chunk).min(od);
            let ncols = (d1 - d0) * plane;
            let col = &mut col[..k * ncols];
            l.im2col(xs, d0, d1, col);
            let g = &gs[d0 * plane..];
            // dW (Cout×K) += G_chunk (Cout×ncols) · colᵀ (ncols×K)
            gemm(
                l.cout,
                ncols,
                k,
                g,
                p_total as isize,
                1,
                col,
                1,
                ncols as isize,
                1.0,
                dw.data_mut(),
                k as isize,
            );
            // dcol (K×ncols) = Wᵀ (K×Cout) · G_chunk (Cout×ncols)
            let dcol = &mut dcol[..k * ncols];
            gemm(
                k,
                l.cout,
                ncols,
                w.data(),
                1,
                k as isize,
                g,
                p_total as isize,
                1,
                0.0,
                dcol,
                ncols as isize,
            );
            l.col2im(dcol, d0, d1, dxs);
            d0 = d1;
        }
    }
    Ok(Conv3dGrads { dx, dw, db })
}
