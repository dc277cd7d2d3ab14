//! Integer boxes on Z^d and row-major indexing over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed integer box `lo[k] ..= hi[k]` in every coordinate.
///
/// Cells are stored row-major: the last coordinate varies fastest, which is
/// also lexicographic order on the integer vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl IntBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(crate::error::invalid("window", "zero-dimensional box"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(crate::error::invalid(
                "window",
                "lower corner exceeds upper corner",
            ));
        }
        Ok(Self { lo, hi })
    }

    /// The symmetric box `[-r, r]^d`.
    pub fn symmetric(dim: usize, r: i64) -> Self {
        Self {
            lo: vec![-r; dim],
            hi: vec![r; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis] + 1) as usize
    }

    pub fn shape(&self) -> Vec<usize> {
        (0..self.dim()).map(|k| self.extent(k)).collect()
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|k| self.extent(k)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn contains_box(&self, other: &IntBox) -> bool {
        other.dim() == self.dim() && self.contains(&other.lo) && self.contains(&other.hi)
    }

    /// Row-major offset of `p`, which must lie in the box.
    pub fn offset(&self, p: &[i64]) -> usize {
        let mut off = 0usize;
        for k in 0..self.dim() {
            off = off * self.extent(k) + (p[k] - self.lo[k]) as usize;
        }
        off
    }

    /// Writes the point at row-major `offset` into `out`.
    pub fn point_into(&self, mut offset: usize, out: &mut [i64]) {
        for k in (0..self.dim()).rev() {
            let e = self.extent(k);
            out[k] = self.lo[k] + (offset % e) as i64;
            offset /= e;
        }
    }

    pub fn point(&self, offset: usize) -> Vec<i64> {
        let mut p = vec![0; self.dim()];
        self.point_into(offset, &mut p);
        p
    }

    /// Visits every point in lexicographic order.
    pub fn for_each(&self, mut f: impl FnMut(usize, &[i64])) {
        let d = self.dim();
        let mut p = self.lo.clone();
        let n = self.len();
        for off in 0..n {
            f(off, &p);
            for k in (0..d).rev() {
                if p[k] < self.hi[k] {
                    p[k] += 1;
                    break;
                }
                p[k] = self.lo[k];
            }
        }
    }

    pub fn translate(&self, v: &[i64]) -> IntBox {
        IntBox {
            lo: self.lo.iter().zip(v).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(v).map(|(a, b)| a + b).collect(),
        }
    }
}

impl std::fmt::Display for IntBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| format!("[{l},{h}]"))
            .collect();
        write!(f, "{}", parts.join("x"))
    }
}
