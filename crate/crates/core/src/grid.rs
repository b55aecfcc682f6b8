//! Dense time-frequency grids stored frame-major.

use crate::error::{Error, Result};

/// A `bins x frames` grid where each frame's bins are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct TfGrid<T = f64> {
    bins: usize,
    frames: usize,
    data: Vec<T>,
}

impl<T: Clone> TfGrid<T> {
    pub fn filled(bins: usize, frames: usize, value: T) -> Self {
        Self {
            bins,
            frames,
            data: vec![value; bins * frames],
        }
    }
}

impl<T> TfGrid<T> {
    pub fn from_vec(bins: usize, frames: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::DimensionMismatch {
                what: "grid data length",
                expected: bins * frames,
                actual: data.len(),
            });
        }
        Ok(Self { bins, frames, data })
    }

    /// Builds a grid from per-frame rows, all of which must have the same length.
    pub fn from_frames<I, F>(frames: I) -> Result<Self>
    where
        I: IntoIterator<Item = F>,
        F: IntoIterator<Item = T>,
    {
        let mut data = Vec::new();
        let mut bins = None;
        let mut count = 0;
        for frame in frames {
            let before = data.len();
            data.extend(frame);
            let len = data.len() - before;
            match bins {
                None => bins = Some(len),
                Some(b) if b != len => {
                    return Err(Error::DimensionMismatch {
                        what: "frame length",
                        expected: b,
                        actual: len,
                    })
                }
                _ => {}
            }
            count += 1;
        }
        Ok(Self {
            bins: bins.unwrap_or(0),
            frames: count,
            data,
        })
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn frame(&self, n: usize) -> &[T] {
        &self.data[n * self.bins..(n + 1) * self.bins]
    }

    #[inline]
    pub fn frame_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.data[n * self.bins..(n + 1) * self.bins]
    }

    pub fn iter_frames(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        // chunks_exact panics on zero, and a zero-bin grid has no frames worth iterating
        let bins = self.bins.max(1);
        self.data
            .chunks_exact(bins)
            .take(if self.bins == 0 { 0 } else { self.frames })
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> TfGrid<U> {
        TfGrid {
            bins: self.bins,
            frames: self.frames,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> TfGrid<T> {
    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> T {
        self.data[frame * self.bins + bin]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, value: T) {
        self.data[frame * self.bins + bin] = value;
    }
}

impl TfGrid<f64> {
    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}
