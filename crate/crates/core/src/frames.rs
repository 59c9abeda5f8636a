//! Dense `T×H×W` stacks stored in raster order (frame, row, column).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frames<T> {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T> Frames<T> {
    pub fn from_vec(frames: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if frames * height * width != data.len() {
            return Err(Error::Shape(format!(
                "{frames}x{height}x{width} needs {} values, got {}",
                frames * height * width,
                data.len()
            )));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, t: usize, h: usize, w: usize) -> usize {
        (t * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, t: usize, h: usize, w: usize) -> &T {
        &self.data[self.offset(t, h, w)]
    }

    /// Signed lookup; anything outside the volume yields `None`.
    #[inline]
    pub fn get_signed(&self, t: isize, h: isize, w: isize) -> Option<&T> {
        if t < 0 || h < 0 || w < 0 {
            return None;
        }
        let (t, h, w) = (t as usize, h as usize, w as usize);
        if t >= self.frames || h >= self.height || w >= self.width {
            return None;
        }
        Some(self.get(t, h, w))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Frames<U> {
        Frames {
            frames: self.frames,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn frame(&self, t: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }
}

impl<T: Clone> Frames<T> {
    pub fn filled(frames: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![value; frames * height * width],
        }
    }

    /// Keeps frames whose index is a multiple of `step`.
    pub fn subsample_frames(&self, step: usize) -> Self {
        let n = self.height * self.width;
        let mut data = Vec::new();
        let mut kept = 0;
        for t in (0..self.frames).step_by(step.max(1)) {
            data.extend_from_slice(&self.data[t * n..(t + 1) * n]);
            kept += 1;
        }
        Self {
            frames: kept,
            height: self.height,
            width: self.width,
            data,
        }
    }
}
