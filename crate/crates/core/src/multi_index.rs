//! Multi-indices `α ∈ ℕ^D` with `|α| ≤ M` and their storage layout.
//!
//! Coefficients are stored in graded lexicographic order: every index of order
//! `n` precedes every index of order `n + 1`, and within one order the indices
//! are sorted lexicographically *descending*, so the first index of order `n`
//! is `(n, 0, 0)` and the last one is `(0, 0, n)`. Axes are numbered from zero
//! throughout the crate.

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// Largest supported velocity dimension.
pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    comps: [u16; MAX_DIM],
    dim: u8,
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(dim))
    }
}

impl MultiIndex {
    /// Builds an index from its components; the dimension is `comps.len()`.
    pub fn new(comps: &[usize]) -> Result<Self> {
        check_dim(comps.len())?;
        let mut c = [0u16; MAX_DIM];
        for (dst, &src) in c.iter_mut().zip(comps) {
            *dst = u16::try_from(src).map_err(|_| Error::InvalidConfig(format!("index component {src} too large")))?;
        }
        Ok(Self { comps: c, dim: comps.len() as u8 })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { comps: [0; MAX_DIM], dim: dim as u8 })
    }

    /// `n · e_axis`.
    pub fn axis(dim: usize, axis: usize, n: usize) -> Result<Self> {
        let mut comps = [0usize; MAX_DIM];
        if axis >= dim {
            return Err(Error::InvalidConfig(format!("axis {axis} out of range for dimension {dim}")));
        }
        comps[axis] = n;
        Self::new(&comps[..dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// `|α| = Σ_d α_d`.
    #[inline]
    pub fn order(&self) -> usize {
        self.comps.iter().map(|&c| c as usize).sum()
    }

    #[inline]
    pub fn get(&self, axis: usize) -> usize {
        self.comps[axis] as usize
    }

    pub fn components(&self) -> impl Iterator<Item = usize> + '_ {
        self.comps[..self.dim()].iter().map(|&c| c as usize)
    }

    /// `α + δ·e_axis`, or `None` when a component would become negative.
    ///
    /// `None` models the convention that Hermite functions with a negative
    /// index vanish.
    pub fn shift(&self, axis: usize, delta: i32) -> Option<Self> {
        if axis >= self.dim() {
            return None;
        }
        let c = self.comps[axis] as i32 + delta;
        if c < 0 || c > u16::MAX as i32 {
            return None;
        }
        let mut out = *self;
        out.comps[axis] = c as u16;
        Some(out)
    }

    /// Applies several axis shifts at once; absent if any intermediate or final
    /// component is negative.
    pub fn offset(&self, shifts: &[(usize, i32)]) -> Option<Self> {
        let mut delta = [0i32; MAX_DIM];
        for &(axis, d) in shifts {
            if axis >= self.dim() {
                return None;
            }
            delta[axis] += d;
        }
        let mut out = *self;
        for axis in 0..self.dim() {
            let c = self.comps[axis] as i32 + delta[axis];
            if c < 0 {
                return None;
            }
            out.comps[axis] = c as u16;
        }
        Some(out)
    }

    /// `α! = Π_d α_d!` as a float.
    pub fn factorial(&self) -> f64 {
        self.components().map(|c| (1..=c).map(|k| k as f64).product::<f64>()).product()
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.components().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// `binomial(n, k)` in exact integer arithmetic.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of indices with `|α| ≤ max_order` in `dim` dimensions.
pub fn count(max_order: usize, dim: usize) -> usize {
    binomial(max_order + dim, dim)
}

/// All indices with `|α| ≤ max_order`, in storage order.
pub fn enumerate(max_order: usize, dim: usize) -> Result<Vec<MultiIndex>> {
    check_dim(dim)?;
    let mut out = Vec::with_capacity(count(max_order, dim));
    for n in 0..=max_order {
        push_grade(n, dim, &mut out);
    }
    Ok(out)
}

fn push_grade(n: usize, dim: usize, out: &mut Vec<MultiIndex>) {
    let mk = |c: [usize; MAX_DIM]| MultiIndex { comps: [c[0] as u16, c[1] as u16, c[2] as u16], dim: dim as u8 };
    match dim {
        1 => out.push(mk([n, 0, 0])),
        2 => {
            for a in (0..=n).rev() {
                out.push(mk([a, n - a, 0]));
            }
        }
        _ => {
            for a in (0..=n).rev() {
                for b in (0..=n - a).rev() {
                    out.push(mk([a, b, n - a - b]));
                }
            }
        }
    }
}

const ABSENT: u32 = u32::MAX;

/// Bijective numbering of the indices `|α| ≤ M` plus precomputed neighbour
/// tables for the shifts used by the moment equations.
#[derive(Clone, Debug)]
pub struct MomentLayout {
    max_order: usize,
    dim: usize,
    indices: Vec<MultiIndex>,
    grade_start: Vec<usize>,
    // dense (M+1)^D cube -> ordinal
    lookup: Vec<u32>,
    // ordinal * MAX_DIM + axis -> ordinal of α - e_axis
    down: Vec<u32>,
    // ordinal * MAX_DIM + axis -> ordinal of α + e_axis (absent when order > M)
    up: Vec<u32>,
}

impl MomentLayout {
    pub fn new(max_order: usize, dim: usize) -> Result<Self> {
        let indices = enumerate(max_order, dim)?;
        let side = max_order + 1;
        let mut lookup = vec![ABSENT; side.pow(dim as u32)];
        let mut grade_start = Vec::with_capacity(max_order + 2);
        let mut last_order = usize::MAX;
        for (k, a) in indices.iter().enumerate() {
            if a.order() != last_order {
                grade_start.push(k);
                last_order = a.order();
            }
            lookup[Self::cube_pos(side, a)] = k as u32;
        }
        grade_start.push(indices.len());

        let mut layout = Self { max_order, dim, indices, grade_start, lookup, down: Vec::new(), up: Vec::new() };
        let n = layout.indices.len();
        let mut down = vec![ABSENT; n * MAX_DIM];
        let mut up = vec![ABSENT; n * MAX_DIM];
        for k in 0..n {
            let a = layout.indices[k];
            for axis in 0..dim {
                if let Some(b) = a.shift(axis, -1) {
                    down[k * MAX_DIM + axis] = layout.find(&b).map_or(ABSENT, |o| o as u32);
                }
                if let Some(b) = a.shift(axis, 1) {
                    up[k * MAX_DIM + axis] = layout.find(&b).map_or(ABSENT, |o| o as u32);
                }
            }
        }
        layout.down = down;
        layout.up = up;
        Ok(layout)
    }

    #[inline]
    fn cube_pos(side: usize, a: &MultiIndex) -> usize {
        a.components().fold(0, |acc, c| acc * side + c)
    }

    #[inline]
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored coefficients, `binomial(M + D, D)`.
    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Ordinals of all indices of order `n` (empty when `n > M`).
    pub fn grade(&self, n: usize) -> Range<usize> {
        if n > self.max_order {
            let end = self.len();
            return end..end;
        }
        self.grade_start[n]..self.grade_start[n + 1]
    }

    /// Ordinal of `α`, or `None` when `|α| > M`.
    #[inline]
    pub fn find(&self, a: &MultiIndex) -> Option<usize> {
        if a.dim() != self.dim || a.order() > self.max_order {
            return None;
        }
        let k = self.lookup[Self::cube_pos(self.max_order + 1, a)];
        (k != ABSENT).then_some(k as usize)
    }

    /// Ordinal of `α`; errors when `|α| > M` or the dimension disagrees.
    pub fn ordinal(&self, a: &MultiIndex) -> Result<usize> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: a.dim() });
        }
        self.find(a).ok_or(Error::OrderTooHigh { order: a.order(), max: self.max_order })
    }

    /// Inverse of [`ordinal`](Self::ordinal).
    pub fn unrank(&self, k: usize) -> Result<MultiIndex> {
        self.indices.get(k).copied().ok_or(Error::OrdinalOutOfRange { ordinal: k, count: self.len() })
    }

    /// Ordinal of `α_k - e_axis`, if that index exists.
    #[inline]
    pub fn down(&self, k: usize, axis: usize) -> Option<usize> {
        let o = self.down[k * MAX_DIM + axis];
        (o != ABSENT).then_some(o as usize)
    }

    /// Ordinal of `α_k + e_axis`, if that index is stored (order ≤ M).
    #[inline]
    pub fn up(&self, k: usize, axis: usize) -> Option<usize> {
        let o = self.up[k * MAX_DIM + axis];
        (o != ABSENT).then_some(o as usize)
    }

    /// Ordinal of `α_k` shifted by `shifts`, if the result is stored.
    pub fn shifted(&self, k: usize, shifts: &[(usize, i32)]) -> Option<usize> {
        self.indices[k].offset(shifts).and_then(|b| self.find(&b))
    }

    /// Ordinal of `e_axis` (a first-order index).
    pub fn unit(&self, axis: usize) -> usize {
        self.grade_start[1] + axis
    }

    /// Ordinal of `n·e_axis`, if stored.
    pub fn pure(&self, axis: usize, n: usize) -> Option<usize> {
        MultiIndex::axis(self.dim, axis, n).ok().and_then(|a| self.find(&a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate(3, 3).unwrap().len(), 20);
        assert_eq!(enumerate(0, 1).unwrap(), vec![MultiIndex::new(&[0]).unwrap()]);
        // brute force: pairs (a, b) with a + b ≤ 2
        let brute = (0..=2).flat_map(|a| (0..=2).map(move |b| (a, b))).filter(|(a, b)| a + b <= 2).count();
        assert_eq!(enumerate(2, 2).unwrap().len(), brute);
        assert_eq!(brute, 6);
    }

    #[test]
    fn rejects_bad_dimension() {
        assert_eq!(enumerate(3, 0), Err(Error::InvalidDimension(0)));
        assert_eq!(enumerate(3, 4), Err(Error::InvalidDimension(4)));
        assert!(MomentLayout::new(2, 5).is_err());
    }

    #[test]
    fn graded_descending_lex() {
        let idx = enumerate(2, 3).unwrap();
        let shown: Vec<String> = idx.iter().map(|a| a.to_string()).collect();
        assert_eq!(shown, ["(0,0,0)", "(1,0,0)", "(0,1,0)", "(0,0,1)", "(2,0,0)", "(1,1,0)", "(1,0,1)", "(0,2,0)", "(0,1,1)", "(0,0,2)"]);
    }

    #[test]
    fn shift_examples() {
        let a = MultiIndex::new(&[1, 0, 0]).unwrap();
        assert_eq!(a.shift(0, -1), Some(MultiIndex::new(&[0, 0, 0]).unwrap()));
        let b = MultiIndex::new(&[0, 1, 0]).unwrap();
        assert_eq!(b.shift(0, -1), None);
        let c = MultiIndex::new(&[2, 0, 1]).unwrap();
        assert_eq!(c.shift(2, 2), Some(MultiIndex::new(&[2, 0, 3]).unwrap()));
    }

    #[test]
    fn ordinal_examples() {
        let layout = MomentLayout::new(4, 3).unwrap();
        assert_eq!(layout.ordinal(&MultiIndex::zero(3).unwrap()).unwrap(), 0);
        let last = *layout.indices().last().unwrap();
        assert_eq!(layout.ordinal(&last).unwrap(), layout.len() - 1);
        let too_high = MultiIndex::new(&[5, 0, 0]).unwrap();
        assert_eq!(layout.ordinal(&too_high), Err(Error::OrderTooHigh { order: 5, max: 4 }));
        for k in 0..layout.len() {
            assert_eq!(layout.ordinal(&layout.unrank(k).unwrap()).unwrap(), k);
        }
        assert!(layout.unrank(layout.len()).is_err());
    }

    #[test]
    fn neighbour_tables_agree_with_shift() {
        let layout = MomentLayout::new(5, 3).unwrap();
        for (k, a) in layout.indices().iter().enumerate() {
            for axis in 0..3 {
                assert_eq!(layout.down(k, axis), a.shift(axis, -1).and_then(|b| layout.find(&b)));
                assert_eq!(layout.up(k, axis), a.shift(axis, 1).and_then(|b| layout.find(&b)));
            }
        }
        assert_eq!(layout.grade(2).len(), 6);
        assert_eq!(layout.unit(1), layout.find(&MultiIndex::new(&[0, 1, 0]).unwrap()).unwrap());
    }

    proptest! {
        #[test]
        fn round_trip_all(m in 0usize..=15, d in 1usize..=3) {
            let layout = MomentLayout::new(m, d).unwrap();
            prop_assert_eq!(layout.len(), count(m, d));
            // brute-force count over the cube
            let side = m + 1;
            let brute = (0..side.pow(d as u32))
                .filter(|&p| {
                    let mut p = p;
                    let mut s = 0;
                    for _ in 0..d { s += p % side; p /= side; }
                    s <= m
                })
                .count();
            prop_assert_eq!(brute, layout.len());
            for (k, a) in layout.indices().iter().enumerate() {
                prop_assert_eq!(layout.unrank(layout.ordinal(a).unwrap()).unwrap(), *a);
                prop_assert_eq!(layout.ordinal(a).unwrap(), k);
                // graded
                if k > 0 {
                    prop_assert!(layout.indices()[k - 1].order() <= a.order());
                }
            }
        }

        #[test]
        fn shift_inverse(c0 in 0usize..6, c1 in 0usize..6, c2 in 0usize..6, axis in 0usize..3, delta in prop::sample::select(vec![-2i32, -1, 1, 2])) {
            let a = MultiIndex::new(&[c0, c1, c2]).unwrap();
            if let Some(b) = a.shift(axis, delta) {
                prop_assert_eq!(b.shift(axis, -delta), Some(a));
                prop_assert_eq!(b.order() as i64, a.order() as i64 + delta as i64);
            } else {
                prop_assert!((a.get(axis) as i32) + delta < 0);
            }
        }
    }
}
