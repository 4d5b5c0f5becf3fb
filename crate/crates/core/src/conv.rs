//! Reference stride-1 2-D convolution: direct loops, im2col matrix product,
//! and the factorized CP / Tucker2 layer sequences.
//!
//! Kernels are applied as cross-correlation, `Y[t,y,x] = Σ K[t,s,i,j] X[s,y+i,x+j]`
//! over the (optionally zero-padded) input; this is the centered-offset form
//! with the output index shifted by the kernel half-width.

use crate::error::{Error, Result};
use crate::tensor::{unfold_mode, CpFactors, Mat, Tensor4, Tucker2Factors};

/// Multi-channel image, stored `(channel, row, col)` with columns fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "image {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    /// Channels on rows, spatial positions on columns.
    pub fn to_matrix(&self) -> Mat {
        Mat::from_row_slice(self.channels, self.height * self.width, &self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn padded(&self, ph: usize, pw: usize) -> Image {
        if ph == 0 && pw == 0 {
            return self.clone();
        }
        let mut out = Image::zeros(self.channels, self.height + 2 * ph, self.width + 2 * pw);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    *out.at_mut(c, y + ph, x + pw) = self.get(c, y, x);
                }
            }
        }
        out
    }
}

/// Stride-1 convolution geometry with symmetric zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: [usize; 4],
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvSpec {
    pub fn valid(kernel: [usize; 4]) -> Self {
        ConvSpec {
            kernel,
            pad_h: 0,
            pad_w: 0,
        }
    }

    /// `(H-1)/2`, `(W-1)/2` padding; needs odd kernel sides.
    pub fn same(kernel: [usize; 4]) -> Result<Self> {
        let [_, _, h, w] = kernel;
        if h % 2 == 0 || w % 2 == 0 {
            return Err(Error::shape(format!(
                "same padding needs odd kernel sides, got {h}x{w}"
            )));
        }
        Ok(ConvSpec {
            kernel,
            pad_h: (h - 1) / 2,
            pad_w: (w - 1) / 2,
        })
    }

    pub fn output_hw(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let [_, _, h, w] = self.kernel;
        let (hp, wp) = (height + 2 * self.pad_h, width + 2 * self.pad_w);
        if h > hp || w > wp {
            return Err(Error::shape(format!(
                "kernel {h}x{w} larger than padded image {hp}x{wp}"
            )));
        }
        Ok((hp - h + 1, wp - w + 1))
    }

    fn check_image(&self, x: &Image) -> Result<(usize, usize)> {
        if x.channels != self.kernel[1] {
            return Err(Error::shape(format!(
                "kernel expects {} input channels, image has {}",
                self.kernel[1], x.channels
            )));
        }
        self.output_hw(x.height, x.width)
    }
}

/// Unfold every receptive field into a column, rows ordered `(s, h, w)`.
pub fn im2col(x: &Image, spec: &ConvSpec) -> Result<Mat> {
    let (oh, ow) = spec.check_image(x)?;
    let [_, s, kh, kw] = spec.kernel;
    let xp = x.padded(spec.pad_h, spec.pad_w);
    let mut out = Mat::zeros(s * kh * kw, oh * ow);
    for y in 0..oh {
        for xx in 0..ow {
            let col = y * ow + xx;
            let mut row = 0;
            for c in 0..s {
                for i in 0..kh {
                    for j in 0..kw {
                        out[(row, col)] = xp.get(c, y + i, xx + j);
                        row += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_kernel(k: &Tensor4, spec: &ConvSpec) -> Result<()> {
    if k.dims() != spec.kernel {
        return Err(Error::shape(format!(
            "kernel dims {:?} differ from conv spec {:?}",
            k.dims(),
            spec.kernel
        )));
    }
    Ok(())
}

// valid convolution of an already padded image
fn conv_valid(k: &Tensor4, xp: &Image) -> Image {
    let [t, s, kh, kw] = k.dims();
    let (oh, ow) = (xp.height - kh + 1, xp.width - kw + 1);
    let mut out = Image::zeros(t, oh, ow);
    for to in 0..t {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for c in 0..s {
                    for i in 0..kh {
                        for j in 0..kw {
                            acc += k.get(to, c, i, j) * xp.get(c, y + i, x + j);
                        }
                    }
                }
                *out.at_mut(to, y, x) = acc;
            }
        }
    }
    out
}

pub fn conv_direct(k: &Tensor4, x: &Image, spec: &ConvSpec) -> Result<Image> {
    check_kernel(k, spec)?;
    spec.check_image(x)?;
    Ok(conv_valid(k, &x.padded(spec.pad_h, spec.pad_w)))
}

/// `unfold(K, 1) · im2col(x)` reshaped into an image.
pub fn conv_im2col(k: &Tensor4, x: &Image, spec: &ConvSpec) -> Result<Image> {
    check_kernel(k, spec)?;
    let (oh, ow) = spec.check_image(x)?;
    let y = unfold_mode(k, 1)? * im2col(x, spec)?;
    Image::new(k.dims()[0], oh, ow, y.transpose().as_slice().to_vec())
}

// 1x1 convolution: out[o] = Σ_c m[o, c] x[c]
fn pointwise(m: &Mat, x: &Image) -> Image {
    let y = m * x.to_matrix();
    Image {
        channels: m.nrows(),
        height: x.height,
        width: x.width,
        data: y.transpose().as_slice().to_vec(),
    }
}

/// 1x1 (`U_S`ᵀ), depthwise `H x 1` (`U_H`), depthwise `1 x W` (`U_W`), 1x1 (`U_T`).
pub fn cp_forward(f: &CpFactors, x: &Image, spec: &ConvSpec) -> Result<Image> {
    if f.dims() != spec.kernel {
        return Err(Error::shape(format!(
            "CP factors for {:?} do not match conv spec {:?}",
            f.dims(),
            spec.kernel
        )));
    }
    let (oh, ow) = spec.check_image(x)?;
    let r = f.rank();
    let [_, _, kh, kw] = spec.kernel;
    let xp = x.padded(spec.pad_h, spec.pad_w);

    let z1 = pointwise(&f.u_s.transpose(), &xp);

    let mut z2 = Image::zeros(r, oh, z1.width);
    for c in 0..r {
        for y in 0..oh {
            for xx in 0..z1.width {
                let acc: f64 = (0..kh).map(|i| f.u_h[(i, c)] * z1.get(c, y + i, xx)).sum();
                *z2.at_mut(c, y, xx) = acc;
            }
        }
    }

    let mut z3 = Image::zeros(r, oh, ow);
    for c in 0..r {
        for y in 0..oh {
            for xx in 0..ow {
                let acc: f64 = (0..kw).map(|j| f.u_w[(j, c)] * z2.get(c, y, xx + j)).sum();
                *z3.at_mut(c, y, xx) = acc;
            }
        }
    }

    Ok(pointwise(&f.u_t, &z3))
}

/// 1x1 (`U_S`ᵀ), full `H x W` convolution with the core, 1x1 (`U_T`).
pub fn tucker2_forward(f: &Tucker2Factors, x: &Image, spec: &ConvSpec) -> Result<Image> {
    if f.dims() != spec.kernel {
        return Err(Error::shape(format!(
            "Tucker2 factors for {:?} do not match conv spec {:?}",
            f.dims(),
            spec.kernel
        )));
    }
    spec.check_image(x)?;
    let xp = x.padded(spec.pad_h, spec.pad_w);
    let z1 = pointwise(&f.u_s.transpose(), &xp);
    let z2 = conv_valid(&f.core, &z1);
    Ok(pointwise(&f.u_t, &z2))
}

/// Weight counts of the layer sequences built by [`cp_forward`] / [`tucker2_forward`].
pub fn cp_param_count(f: &CpFactors) -> usize {
    f.param_count()
}

pub fn tucker2_param_count(f: &Tucker2Factors) -> usize {
    f.param_count()
}
