use serde::{Deserialize, Serialize};

/// Channels per (weapon, target) cell: feasibility, time-to-go, value.
pub const CHANNELS: usize = 3;

/// Observation grid stored channel-major as `[channel][weapon][target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementTensor {
    m_max: usize,
    n_max: usize,
    data: Vec<f64>,
}

impl EngagementTensor {
    /// Tensor with every entry masked to −1.
    pub fn masked(m_max: usize, n_max: usize) -> Self {
        Self { m_max, n_max, data: vec![-1.0; CHANNELS * m_max * n_max] }
    }

    pub fn from_data(m_max: usize, n_max: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == CHANNELS * m_max * n_max).then_some(Self { m_max, n_max, data })
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn index(&self, i: usize, j: usize, c: usize) -> usize {
        assert!(i < self.m_max && j < self.n_max && c < CHANNELS, "cell ({i}, {j}, {c}) out of range");
        (c * self.m_max + i) * self.n_max + j
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(i, j, c)]
    }

    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let k = self.index(i, j, c);
        self.data[k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
