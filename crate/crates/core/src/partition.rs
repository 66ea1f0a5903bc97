//! Box partitions along one axis, refinement of a chosen cell, and
//! shrinking of a box to the hull of cells not excluded by experiments.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lfr::{Interval, UncertaintyBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("axis {axis} out of range for a box of dimension {dim}")]
    InvalidAxis { axis: usize, dim: usize },
    #[error("a partition needs at least one cell")]
    ZeroCells,
    #[error("cell index {index} out of range ({len} cells)")]
    InvalidIndex { index: usize, len: usize },
    #[error("expected {expected} records, got {got}")]
    RecordCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    parent: UncertaintyBox,
    axis: usize,
    cells: Vec<UncertaintyBox>,
}

/// `n` equal sub-intervals of `iv`; neighbours share endpoints exactly and
/// the outer endpoints equal those of `iv`.
pub fn split_interval(iv: Interval, n: usize) -> Vec<Interval> {
    let cut = |k: usize| {
        if k == 0 {
            iv.lo
        } else if k == n {
            iv.hi
        } else {
            iv.lo + iv.width() * k as f64 / n as f64
        }
    };
    (0..n).map(|k| Interval { lo: cut(k), hi: cut(k + 1) }).collect()
}

fn check_axis(bbox: &UncertaintyBox, axis: usize) -> Result<(), PartitionError> {
    if axis >= bbox.dim() {
        return Err(PartitionError::InvalidAxis { axis, dim: bbox.dim() });
    }
    Ok(())
}

/// Splits `bbox` into `n` equal cells along `axis`.
pub fn uniform_split(bbox: &UncertaintyBox, axis: usize, n: usize) -> Result<Partition, PartitionError> {
    check_axis(bbox, axis)?;
    if n == 0 {
        return Err(PartitionError::ZeroCells);
    }
    let cells = split_interval(bbox.interval(axis), n).into_iter().map(|iv| bbox.with_interval(axis, iv)).collect();
    Ok(Partition { parent: bbox.clone(), axis, cells })
}

/// Evidence about one cell: its inflated bound and the measured cost of the
/// gain certified on it (`None` when no experiment was run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEvidence {
    pub gamma_eps: f64,
    pub cost: Option<f64>,
}

impl CellEvidence {
    /// A cell survives unless a finite measured cost exceeds its bound.
    pub fn survives(&self) -> bool {
        match self.cost {
            Some(l) if self.gamma_eps.is_finite() => l <= self.gamma_eps,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkResult {
    pub bbox: UncertaintyBox,
    pub survivors: Vec<usize>,
    /// Set when no cell survived and the parent box was returned unchanged.
    pub fallback: bool,
}

impl Partition {
    pub fn parent(&self) -> &UncertaintyBox {
        &self.parent
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn cells(&self) -> &[UncertaintyBox] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the first cell containing `delta`.
    pub fn locate(&self, delta: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(delta))
    }

    /// Replaces cell `best` by its `n`-way split along `axis`.
    pub fn refine(&self, best: usize, axis: usize, n: usize) -> Result<Partition, PartitionError> {
        if best >= self.cells.len() {
            return Err(PartitionError::InvalidIndex { index: best, len: self.cells.len() });
        }
        let sub = uniform_split(&self.cells[best], axis, n)?;
        let mut cells = self.cells[..best].to_vec();
        cells.extend(sub.cells);
        cells.extend_from_slice(&self.cells[best + 1..]);
        Ok(Partition { parent: self.parent.clone(), axis, cells })
    }

    /// Keeps the cells whose evidence does not exclude them and returns the
    /// parent box with the split axis replaced by the hull of survivors.
    pub fn shrink(&self, records: &[CellEvidence]) -> Result<ShrinkResult, PartitionError> {
        if records.len() != self.cells.len() {
            return Err(PartitionError::RecordCount { expected: self.cells.len(), got: records.len() });
        }
        let survivors: Vec<usize> = (0..records.len()).filter(|&k| records[k].survives()).collect();
        if survivors.is_empty() {
            warn!("every cell was excluded by its measured cost; keeping the box unchanged");
            return Ok(ShrinkResult { bbox: self.parent.clone(), survivors, fallback: true });
        }
        let hull = survivors
            .iter()
            .map(|&k| self.cells[k].interval(self.axis))
            .reduce(|a, b| a.hull(&b))
            .expect("nonempty survivors");
        Ok(ShrinkResult { bbox: self.parent.with_interval(self.axis, hull), survivors, fallback: false })
    }

    /// Whether the cells tile the parent exactly along the split axis
    /// (sorted cells sharing endpoints, matching outer endpoints).
    pub fn covers_parent(&self) -> bool {
        let mut ivs: Vec<Interval> = self.cells.iter().map(|c| c.interval(self.axis)).collect();
        ivs.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        let p = self.parent.interval(self.axis);
        let chained = ivs.windows(2).all(|w| w[0].hi == w[1].lo);
        let others = self.cells.iter().all(|c| {
            (0..c.dim()).filter(|&a| a != self.axis).all(|a| c.interval(a).is_subset_of(&self.parent.interval(a)))
        });
        !ivs.is_empty() && chained && others && ivs[0].lo == p.lo && ivs[ivs.len() - 1].hi == p.hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn split_in_two() {
        let p = uniform_split(&UncertaintyBox::unit(1), 0, 2).unwrap();
        assert_eq!(p.cells()[0].interval(0), iv(-1.0, 0.0));
        assert_eq!(p.cells()[1].interval(0), iv(0.0, 1.0));
    }

    #[test]
    fn single_cell_is_the_box() {
        let b = UncertaintyBox::unit(3);
        let p = uniform_split(&b, 1, 1).unwrap();
        assert_eq!(p.cells(), &[b]);
    }

    #[test]
    fn six_cells_of_width_one_third() {
        let b = UncertaintyBox::unit(3);
        let p = uniform_split(&b, 2, 6).unwrap();
        assert_eq!(p.len(), 6);
        for c in p.cells() {
            assert!((c.interval(2).width() - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(c.interval(0), b.interval(0));
            assert_eq!(c.interval(1), b.interval(1));
        }
        assert!(p.covers_parent());
    }

    #[test]
    fn refine_of_single_cell_equals_split() {
        let b = UncertaintyBox::unit(2);
        let single = uniform_split(&b, 0, 1).unwrap();
        assert_eq!(single.refine(0, 1, 4).unwrap(), uniform_split(&b, 1, 4).unwrap());
    }

    #[test]
    fn refine_preserves_coverage_and_shrinks_by_n_squared() {
        let b = UncertaintyBox::unit(1);
        let p = uniform_split(&b, 0, 2).unwrap();
        let w0 = p.cells()[1].interval(0).width();
        let p = p.refine(1, 0, 2).unwrap();
        assert!(p.covers_parent());
        let p = p.refine(2, 0, 2).unwrap();
        assert!(p.covers_parent());
        assert_eq!(p.len(), 4);
        assert_eq!(w0 / p.cells()[2].interval(0).width(), 4.0);
    }

    #[test]
    fn refine_rejects_bad_index() {
        let p = uniform_split(&UncertaintyBox::unit(1), 0, 2).unwrap();
        assert!(matches!(p.refine(2, 0, 2), Err(PartitionError::InvalidIndex { .. })));
        assert!(matches!(uniform_split(&UncertaintyBox::unit(1), 1, 2), Err(PartitionError::InvalidAxis { .. })));
        assert!(matches!(uniform_split(&UncertaintyBox::unit(1), 0, 0), Err(PartitionError::ZeroCells)));
    }

    #[test]
    fn shrink_keeps_box_when_everything_survives() {
        let b = UncertaintyBox::unit(2);
        let p = uniform_split(&b, 0, 3).unwrap();
        let rec = vec![CellEvidence { gamma_eps: 2.0, cost: Some(1.0) }; 3];
        let s = p.shrink(&rec).unwrap();
        assert_eq!(s.bbox, b);
        assert_eq!(s.survivors, vec![0, 1, 2]);
    }

    #[test]
    fn shrink_to_hull_of_survivors() {
        let b = UncertaintyBox::unit(1);
        let p = uniform_split(&b, 0, 6).unwrap();
        // survivors are the second and fifth cells
        let rec: Vec<CellEvidence> = (0..6)
            .map(|k| CellEvidence { gamma_eps: 1.0, cost: Some(if k == 1 || k == 4 { 0.5 } else { 1.5 }) })
            .collect();
        let s = p.shrink(&rec).unwrap();
        assert_eq!(s.survivors, vec![1, 4]);
        assert_eq!(s.bbox.interval(0).lo, p.cells()[1].interval(0).lo);
        assert_eq!(s.bbox.interval(0).hi, p.cells()[4].interval(0).hi);
        assert!(s.bbox.is_subset_of(&b));
    }

    #[test]
    fn infeasible_cells_always_survive() {
        let p = uniform_split(&UncertaintyBox::unit(1), 0, 3).unwrap();
        let rec = vec![
            CellEvidence { gamma_eps: 1.0, cost: Some(2.0) },
            CellEvidence { gamma_eps: f64::INFINITY, cost: None },
            CellEvidence { gamma_eps: 1.0, cost: Some(2.0) },
        ];
        let s = p.shrink(&rec).unwrap();
        assert_eq!(s.survivors, vec![1]);
        assert_eq!(s.bbox.interval(0), p.cells()[1].interval(0));
    }

    #[test]
    fn empty_survivor_set_falls_back() {
        let b = UncertaintyBox::unit(1);
        let p = uniform_split(&b, 0, 2).unwrap();
        let rec = vec![CellEvidence { gamma_eps: 1.0, cost: Some(2.0) }; 2];
        let s = p.shrink(&rec).unwrap();
        assert!(s.fallback);
        assert_eq!(s.bbox, b);
        assert!(matches!(p.shrink(&rec[..1]), Err(PartitionError::RecordCount { .. })));
    }
}
