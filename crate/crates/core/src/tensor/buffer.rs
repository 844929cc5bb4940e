use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::vector::UpdateVector;

/// FIFO store of the most recent aggregates, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferMatrix {
    rows: VecDeque<UpdateVector>,
    capacity: usize,
}

impl BufferMatrix {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("buffer capacity must be positive"));
        }
        Ok(Self {
            rows: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    /// Appends `row`, evicting the oldest row when full.
    pub fn push(&mut self, row: UpdateVector) -> Result<()> {
        if let Some(first) = self.rows.front() {
            if first.dim() != row.dim() {
                return Err(Error::DimensionMismatch {
                    index: self.rows.len(),
                    expected: first.dim(),
                    found: row.dim(),
                });
            }
        }
        if self.rows.len() == self.capacity {
            self.rows.pop_front();
        }
        self.rows.push_back(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    pub fn rows(&self) -> impl Iterator<Item = &UpdateVector> {
        self.rows.iter()
    }

    pub fn to_vec(&self) -> Vec<UpdateVector> {
        self.rows.iter().cloned().collect()
    }
}
