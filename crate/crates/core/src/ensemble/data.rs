use std::ops::Range;

use nalgebra::DMatrix;

use super::params::DerivedScaling;
use super::stream::{Domain, StreamKey};
use crate::error::{Error, Result};

/// Default number of feature columns per streamed block.
pub const DEFAULT_BLOCK_SIZE: usize = 4096;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Regenerates unfavored feature columns on demand.
///
/// Column `j` is the raw (unweighted) feature `z_j` over the training rows;
/// indices are 0-based and the unfavored range is `s..d`.
#[derive(Clone, Copy, Debug)]
pub struct UnfavoredSpec {
    pub base_seed: u64,
    pub trial_index: u64,
    pub block_size: usize,
    n: usize,
    s: usize,
    d: usize,
    key: StreamKey,
}

impl UnfavoredSpec {
    pub fn features(&self) -> Range<usize> {
        self.s..self.d
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size.max(1);
        self
    }

    /// Writes columns `start..start + width` into a column-major buffer of
    /// `n * width` entries.
    pub fn fill(&self, start: usize, width: usize, out: &mut [f64]) {
        fill_columns(&self.key, self.n, start, width, out);
    }

    /// Iterates over `range` in blocks of at most `block_size` columns.
    pub fn blocks(&self, range: Range<usize>) -> Result<UnfavoredBlocks<'_>> {
        if range.start < self.s || range.end > self.d || range.start > range.end {
            return Err(Error::IndexOutOfRange {
                start: range.start,
                end: range.end,
                lo: self.s,
                hi: self.d,
            });
        }
        Ok(UnfavoredBlocks {
            spec: self,
            next: range.start,
            end: range.end,
        })
    }
}

fn fill_columns(key: &StreamKey, n: usize, start: usize, width: usize, out: &mut [f64]) {
    assert!(out.len() >= n * width);
    for (c, column) in out.chunks_exact_mut(n).take(width).enumerate() {
        key.fill_normals((start + c) as u64, 0, column);
    }
}

/// A block of raw feature columns.
#[derive(Clone, Debug)]
pub struct FeatureBlock {
    pub start: usize,
    pub columns: DMatrix<f64>,
}

pub struct UnfavoredBlocks<'a> {
    spec: &'a UnfavoredSpec,
    next: usize,
    end: usize,
}

impl Iterator for UnfavoredBlocks<'_> {
    type Item = FeatureBlock;

    fn next(&mut self) -> Option<FeatureBlock> {
        if self.next >= self.end {
            return None;
        }
        let width = self.spec.block_size.min(self.end - self.next);
        let mut columns = DMatrix::zeros(self.spec.n, width);
        self.spec.fill(self.next, width, columns.as_mut_slice());
        let block = FeatureBlock {
            start: self.next,
            columns,
        };
        self.next += width;
        Some(block)
    }
}

/// One training draw from the bi-level ensemble.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub scaling: DerivedScaling,
    /// `n x s` unweighted favored features.
    pub favored: DMatrix<f64>,
    pub unfavored: UnfavoredSpec,
    pub labels: Vec<usize>,
    /// `n x k` centered one-hot targets.
    pub y_centered: DMatrix<f64>,
}

impl TrainingSet {
    pub fn generate(scaling: &DerivedScaling, seed: u64) -> Self {
        Self::generate_indexed(scaling, seed, 0)
    }

    pub fn generate_indexed(scaling: &DerivedScaling, base_seed: u64, trial_index: u64) -> Self {
        let (n, s, k) = (scaling.n, scaling.s, scaling.k);
        let key = StreamKey::new(Domain::Training, base_seed, trial_index);
        let mut favored = DMatrix::zeros(n, s);
        fill_columns(&key, n, 0, s, favored.as_mut_slice());
        let labels: Vec<usize> = (0..n)
            .map(|i| argmax((0..k).map(|m| favored[(i, m)])))
            .collect();
        let inv_k = 1.0 / k as f64;
        let y_centered = DMatrix::from_fn(n, k, |i, m| {
            if labels[i] == m {
                1.0 - inv_k
            } else {
                -inv_k
            }
        });
        Self {
            scaling: *scaling,
            favored,
            unfavored: UnfavoredSpec {
                base_seed,
                trial_index,
                block_size: DEFAULT_BLOCK_SIZE,
                n,
                s,
                d: scaling.d,
                key,
            },
            labels,
            y_centered,
        }
    }

    pub fn n(&self) -> usize {
        self.scaling.n
    }

    pub fn k(&self) -> usize {
        self.scaling.k
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// `n x k` uncentered one-hot label matrix.
    pub fn one_hot(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k(), |i, m| f64::from(u8::from(self.labels[i] == m)))
    }

    /// Any raw feature column, favored or not.
    pub fn feature(&self, j: usize) -> Vec<f64> {
        if j < self.scaling.s {
            self.favored.column(j).iter().copied().collect()
        } else {
            let mut out = vec![0.0; self.n()];
            self.unfavored.fill(j, 1, &mut out);
            out
        }
    }

    /// Dense `n x d` weighted feature matrix. Test and oracle use only.
    pub fn dense_weighted(&self, cap: usize) -> Result<DMatrix<f64>> {
        let (n, d) = (self.n(), self.scaling.d);
        if n * d > cap {
            return Err(Error::CapExceeded { n: n * d, cap });
        }
        let mut x = DMatrix::zeros(n, d);
        for j in 0..d {
            let w = self.scaling.lambda(j).sqrt();
            let col = self.feature(j);
            for i in 0..n {
                x[(i, j)] = w * col[i];
            }
        }
        Ok(x)
    }
}

/// A test point: the label-defining coordinates are materialized, the rest
/// are regenerated from the owning [`TestBatch`].
#[derive(Clone, Debug, PartialEq)]
pub struct TestPoint {
    pub index: usize,
    pub label_part: Vec<f64>,
    pub true_label: usize,
}

/// A batch of test points sharing one key.
#[derive(Clone, Debug)]
pub struct TestBatch {
    pub seed: u64,
    pub points: Vec<TestPoint>,
    k: usize,
    d: usize,
    key: StreamKey,
}

impl TestBatch {
    pub fn sample(scaling: &DerivedScaling, seed: u64, count: usize) -> Self {
        let key = StreamKey::new(Domain::Test, seed, 0);
        let k = scaling.k;
        let points = (0..count)
            .map(|index| {
                let mut label_part = vec![0.0; k];
                key.fill_normals(index as u64, 0, &mut label_part);
                let true_label = argmax(label_part.iter().copied());
                TestPoint {
                    index,
                    label_part,
                    true_label,
                }
            })
            .collect();
        Self {
            seed,
            points,
            k,
            d: scaling.d,
            key,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Unweighted coordinates `range` of point `index`.
    pub fn coordinates(&self, index: usize, range: Range<usize>) -> Vec<f64> {
        assert!(range.end <= self.d);
        let mut out = vec![0.0; range.len()];
        self.key.fill_normals(index as u64, range.start as u64, &mut out);
        out
    }

    /// Writes coordinates `start..start + width` of every point into a
    /// column-major `width x len` buffer (one column per point).
    pub fn fill(&self, start: usize, width: usize, out: &mut [f64]) {
        assert!(out.len() >= width * self.len());
        for (p, column) in out.chunks_exact_mut(width).take(self.len()).enumerate() {
            self.key
                .fill_normals(self.points[p].index as u64, start as u64, column);
        }
    }

    pub fn label_dimension(&self) -> usize {
        self.k
    }

    /// `count` standard normals private to point `index`, independent of
    /// all of its coordinates.
    pub fn tail_normals(&self, index: usize, count: usize) -> Vec<f64> {
        let key = StreamKey::new(Domain::TestTail, self.seed, 0);
        let mut out = vec![0.0; count];
        key.fill_normals(index as u64, 0, &mut out);
        out
    }
}
