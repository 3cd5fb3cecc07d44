use std::ops::Range;
use std::sync::Arc;

use super::MixingMatrix;
use crate::error::{Error, Result};

/// Piecewise-constant assignment of mixing matrices to epochs.
///
/// Ranges are half-open, contiguous, and cover `[0, T)` exactly.
#[derive(Clone, Debug)]
pub struct TopologySchedule {
    entries: Vec<(Range<usize>, Arc<MixingMatrix>)>,
}

impl TopologySchedule {
    pub fn new(entries: Vec<(Range<usize>, Arc<MixingMatrix>)>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::invalid("topology schedule is empty"));
        };
        let n = first.1.n();
        let mut expected_start = 0;
        for (range, m) in &entries {
            if range.start != expected_start {
                return Err(Error::invalid(format!(
                    "schedule range {range:?} does not start at epoch {expected_start}"
                )));
            }
            if range.end <= range.start {
                return Err(Error::invalid(format!("schedule range {range:?} is empty")));
            }
            if m.n() != n {
                return Err(Error::invalid(format!("schedule mixes worker counts {n} and {}", m.n())));
            }
            expected_start = range.end;
        }
        Ok(Self { entries })
    }

    /// One matrix for every epoch in `[0, epochs)`.
    pub fn constant(matrix: MixingMatrix, epochs: usize) -> Result<Self> {
        Self::new(vec![(0..epochs, Arc::new(matrix))])
    }

    /// Boundaries given as `(until_epoch, matrix)`; each entry runs up to but
    /// excluding `until_epoch`.
    pub fn from_boundaries(parts: Vec<(usize, MixingMatrix)>) -> Result<Self> {
        let mut start = 0;
        let mut entries = Vec::with_capacity(parts.len());
        for (until, m) in parts {
            entries.push((start..until, Arc::new(m)));
            start = until;
        }
        Self::new(entries)
    }

    /// Number of epochs covered.
    pub fn horizon(&self) -> usize {
        self.entries.last().map_or(0, |(r, _)| r.end)
    }

    pub fn workers(&self) -> usize {
        self.entries[0].1.n()
    }

    pub fn entries(&self) -> &[(Range<usize>, Arc<MixingMatrix>)] {
        &self.entries
    }

    pub fn lookup(&self, epoch: usize) -> Result<&MixingMatrix> {
        self.entries
            .iter()
            .find(|(r, _)| r.contains(&epoch))
            .map(|(_, m)| m.as_ref())
            .ok_or_else(|| Error::invalid(format!("epoch {epoch} is outside the schedule [0, {})", self.horizon())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_full_mesh, build_ring};

    fn mesh_then_ring() -> TopologySchedule {
        TopologySchedule::from_boundaries(vec![(50, build_full_mesh(4).unwrap()), (100, build_ring(4).unwrap())])
            .unwrap()
    }

    #[test]
    fn half_open_boundaries() {
        let s = mesh_then_ring();
        assert_eq!(s.lookup(49).unwrap().rho(), 1.0);
        assert!(s.lookup(50).unwrap().label().starts_with("ring"));
        assert!(s.lookup(99).unwrap().label().starts_with("ring"));
        assert!(s.lookup(100).is_err());
        assert_eq!(s.horizon(), 100);
    }

    #[test]
    fn single_entry() {
        let s = TopologySchedule::constant(build_ring(5).unwrap(), 7).unwrap();
        for e in 0..7 {
            assert_eq!(s.lookup(e).unwrap().n(), 5);
        }
    }

    #[test]
    fn rejects_gaps_and_mixed_sizes() {
        let gap = TopologySchedule::new(vec![
            (0..3, Arc::new(build_full_mesh(3).unwrap())),
            (4..6, Arc::new(build_full_mesh(3).unwrap())),
        ]);
        assert!(gap.is_err());
        let mixed =
            TopologySchedule::from_boundaries(vec![(3, build_full_mesh(3).unwrap()), (6, build_full_mesh(4).unwrap())]);
        assert!(mixed.is_err());
        assert!(TopologySchedule::new(vec![]).is_err());
    }
}
