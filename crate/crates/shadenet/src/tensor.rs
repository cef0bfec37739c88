//! Dense 3D tensors in channel-major layout.
//!
//! A [`Tensor`] is a `(channels, height, width)` grid of `f32` values stored
//! as all of channel 0's rows, then channel 1's, and so on. Every layer,
//! loss and image buffer in the crate is built on this one type.

use crate::error::{Error, Result};

/// Mirror axis for [`Tensor::flip`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror left-right (columns reversed).
    Horizontal,
    /// Mirror top-bottom (rows reversed).
    Vertical,
}

/// Dense `(channels, height, width)` tensor of `f32` values.
///
/// Row 0 is the top of the image. Tensors are immutable once returned from
/// an operation; all ops allocate a fresh result.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    /// All-zero tensor of the given shape.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Constant-valued tensor of the given shape.
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Wraps existing channel-major data. Errors if the length does not
    /// match the shape or any value is non-finite.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("tensor data contains non-finite values"));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
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

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub(crate) fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// One channel plane as a contiguous row-major slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// One row of one channel.
    pub fn row(&self, c: usize, y: usize) -> &[f32] {
        let start = (c * self.height + y) * self.width;
        &self.data[start..start + self.width]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f32> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies channels `range` into a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor> {
        if start + count > self.channels {
            return Err(Error::shape(format!(
                "channel slice {}..{} out of range for {} channels",
                start,
                start + count,
                self.channels
            )));
        }
        let plane = self.height * self.width;
        let data = self.data[start * plane..(start + count) * plane].to_vec();
        Ok(Tensor {
            channels: count,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Stacks `self`'s channels before `other`'s. Spatial shapes must match.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::shape(format!(
                "concat requires equal spatial dims, got {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Rotates every channel by `quarter_turns` quarter turns
    /// counter-clockwise (row 0 is the image top). Negative and large values
    /// are normalized mod 4.
    pub fn rot90(&self, quarter_turns: i32) -> Tensor {
        let turns = quarter_turns.rem_euclid(4);
        match turns {
            0 => self.clone(),
            1 => self.rotated(|y, x, h, w| {
                // out[y][x] = in[x][w_in - 1 - y]; out is (w_in, h_in)
                let _ = h;
                (x, w - 1 - y)
            }),
            2 => {
                let mut out = Tensor::zeros(self.channels, self.height, self.width);
                for c in 0..self.channels {
                    for y in 0..self.height {
                        for x in 0..self.width {
                            let v = self.get(c, self.height - 1 - y, self.width - 1 - x);
                            out.set(c, y, x, v);
                        }
                    }
                }
                out
            }
            3 => self.rotated(|y, x, h, _w| {
                // out[y][x] = in[h_in - 1 - x][y]; out is (w_in, h_in)
                (h - 1 - x, y)
            }),
            _ => unreachable!(),
        }
    }

    fn rotated(&self, src: impl Fn(usize, usize, usize, usize) -> (usize, usize)) -> Tensor {
        // Quarter turns swap height and width.
        let (oh, ow) = (self.width, self.height);
        let mut out = Tensor::zeros(self.channels, oh, ow);
        for c in 0..self.channels {
            for y in 0..oh {
                for x in 0..ow {
                    let (sy, sx) = src(y, x, self.height, self.width);
                    out.set(c, y, x, self.get(c, sy, sx));
                }
            }
        }
        out
    }

    /// Mirrors every channel along the given axis.
    pub fn flip(&self, axis: FlipAxis) -> Tensor {
        let mut out = Tensor::zeros(self.channels, self.height, self.width);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    let v = match axis {
                        FlipAxis::Horizontal => self.get(c, y, self.width - 1 - x),
                        FlipAxis::Vertical => self.get(c, self.height - 1 - y, x),
                    };
                    out.set(c, y, x, v);
                }
            }
        }
        out
    }

    /// Copies the `size`×`size` window with top-left corner `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, size: usize) -> Result<Tensor> {
        if top + size > self.height || left + size > self.width {
            return Err(Error::shape(format!(
                "crop {}x{} at ({},{}) exceeds {}x{}",
                size, size, top, left, self.height, self.width
            )));
        }
        let mut out = Tensor::zeros(self.channels, size, size);
        for c in 0..self.channels {
            for y in 0..size {
                let src = &self.row(c, top + y)[left..left + size];
                out.channel_mut(c)[y * size..(y + 1) * size].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "add requires equal shapes, got {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        })
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }
}

/// Ordered list of equally shaped tensors, the mini-batch carrier.
#[derive(Debug, Clone)]
pub struct Batch {
    items: Vec<Tensor>,
}

impl Batch {
    /// Errors on an empty list or mismatched shapes.
    pub fn new(items: Vec<Tensor>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("batch must be non-empty"))?;
        let shape = first.shape();
        if items.iter().any(|t| t.shape() != shape) {
            return Err(Error::shape("batch items must share one shape"));
        }
        Ok(Batch { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Tensor] {
        &self.items
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.items[0].shape()
    }
}
