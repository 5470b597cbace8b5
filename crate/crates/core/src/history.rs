//! Bounded history of recent iterations.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("index {index} outside the retained window [{lo}, {hi}]")]
    OutOfWindow { index: usize, lo: usize, hi: usize },
    #[error("index {index} has not been recorded yet")]
    Missing { index: usize },
    #[error("records must be pushed in order: expected index {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },
}

/// Ring of the last `T + 1` records, indexed by iteration number.
///
/// Slot contents are whatever the owner needs: full iterates for the
/// consistent-read simulator, single-coordinate deltas for the
/// inconsistent-read one.
#[derive(Clone, Debug)]
pub struct HistoryRing<S> {
    slots: Vec<Option<(usize, S)>>,
    next: usize,
}

impl<S> HistoryRing<S> {
    /// A ring that can serve indices `k − T ..= k`.
    pub fn new(delay_bound: usize) -> Self {
        let mut slots = Vec::with_capacity(delay_bound + 1);
        slots.resize_with(delay_bound + 1, || None);
        HistoryRing { slots, next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn delay_bound(&self) -> usize {
        self.slots.len() - 1
    }

    /// Index the next `push` must carry.
    pub fn next_index(&self) -> usize {
        self.next
    }

    pub fn push(&mut self, index: usize, value: S) -> Result<(), HistoryError> {
        self.check_order(index)?;
        let cap = self.capacity();
        self.slots[index % cap] = Some((index, value));
        self.next += 1;
        Ok(())
    }

    /// Record `index`, reusing the evicted slot's storage when there is one.
    pub fn push_with(
        &mut self,
        index: usize,
        init: impl FnOnce() -> S,
        update: impl FnOnce(&mut S),
    ) -> Result<(), HistoryError> {
        self.check_order(index)?;
        let cap = self.capacity();
        let slot = &mut self.slots[index % cap];
        match slot {
            Some((tag, value)) => {
                *tag = index;
                update(value);
            }
            None => {
                let mut value = init();
                update(&mut value);
                *slot = Some((index, value));
            }
        }
        self.next += 1;
        Ok(())
    }

    /// Record `j`, valid while `max(0, k_now − T) ≤ j ≤ k_now`.
    pub fn get(&self, j: usize, k_now: usize) -> Result<&S, HistoryError> {
        let lo = k_now.saturating_sub(self.delay_bound());
        if j < lo || j > k_now {
            return Err(HistoryError::OutOfWindow {
                index: j,
                lo,
                hi: k_now,
            });
        }
        match &self.slots[j % self.capacity()] {
            Some((tag, value)) if *tag == j => Ok(value),
            _ => Err(HistoryError::Missing { index: j }),
        }
    }

    fn check_order(&self, index: usize) -> Result<(), HistoryError> {
        if index != self.next {
            return Err(HistoryError::OutOfOrder {
                expected: self.next,
                got: index,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn filled(t: usize, upto: usize) -> HistoryRing<usize> {
        let mut ring = HistoryRing::new(t);
        for k in 0..=upto {
            ring.push(k, k * 10).unwrap();
        }
        ring
    }

    #[test]
    fn in_window_retrieval() {
        let ring = filled(2, 5);
        assert_eq!(ring.get(3, 5), Ok(&30));
    }

    #[test]
    fn older_than_window_rejected() {
        let ring = filled(2, 5);
        assert_eq!(
            ring.get(2, 5),
            Err(HistoryError::OutOfWindow {
                index: 2,
                lo: 3,
                hi: 5
            })
        );
    }

    #[test]
    fn warm_up_window_is_clamped() {
        let ring = filled(2, 1);
        assert_eq!(ring.get(0, 1), Ok(&0));
    }

    #[test]
    fn pushes_must_be_sequential() {
        let mut ring = HistoryRing::new(1);
        ring.push(0, ()).unwrap();
        assert_eq!(
            ring.push(2, ()),
            Err(HistoryError::OutOfOrder {
                expected: 1,
                got: 2
            })
        );
    }

    #[test]
    fn push_with_reuses_storage() {
        let mut ring: HistoryRing<Vec<f64>> = HistoryRing::new(0);
        ring.push_with(0, || vec![0.0; 3], |v| v[0] = 1.0).unwrap();
        ring.push_with(1, || unreachable!(), |v| v[1] = 2.0)
            .unwrap();
        assert_eq!(ring.get(1, 1), Ok(&vec![1.0, 2.0, 0.0]));
        assert!(ring.get(0, 1).is_err());
    }

    proptest! {
        #[test]
        fn never_serves_outside_window(
            t in 0usize..6,
            len in 1usize..40,
            queries in proptest::collection::vec((0usize..45, any::<bool>()), 1..60),
        ) {
            let mut ring = HistoryRing::new(t);
            for k in 0..len {
                ring.push(k, k).unwrap();
            }
            for (j, ahead) in queries {
                // Owners query either at the newest record or one past it.
                let k_now = if ahead { len } else { len - 1 };
                let in_window = j + t >= k_now && j <= k_now;
                match ring.get(j, k_now) {
                    Ok(&v) => {
                        prop_assert_eq!(v, j);
                        prop_assert!(in_window);
                    }
                    Err(HistoryError::Missing { index }) => {
                        prop_assert!(in_window);
                        prop_assert_eq!(index, len);
                    }
                    Err(_) => prop_assert!(!in_window),
                }
            }
        }
    }
}
