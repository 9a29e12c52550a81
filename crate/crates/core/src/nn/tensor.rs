use super::NnError;

/// Channel-major 2-D buffer: `channels` rows of `len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1 {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor1 {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if channels == 0 || len == 0 || channels.checked_mul(len) != Some(data.len()) {
            return Err(NnError::ShapeMismatch(format!(
                "{} values for shape ({channels}, {len})",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            len,
            data,
        })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        assert!(channels > 0 && len > 0, "empty tensor");
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(NnError::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), len, rows.concat())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.len)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.len).map(<[f64]>::to_vec).collect()
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.len + t]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor1) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Stacks `self` on top of `other` along the channel axis.
    pub fn concat_channels(&self, other: &Tensor1) -> Result<Tensor1, NnError> {
        if self.len != other.len {
            return Err(NnError::ShapeMismatch(format!(
                "concat lengths {} and {}",
                self.len, other.len
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor1::new(self.channels + other.channels, self.len, data)
    }

    /// Inverse of `concat_channels`: the first `c` channels and the rest.
    pub(crate) fn split_channels(self, c: usize) -> (Tensor1, Tensor1) {
        let mut head = self.data;
        let tail = head.split_off(c * self.len);
        (
            Tensor1 {
                channels: c,
                len: self.len,
                data: head,
            },
            Tensor1 {
                channels: self.channels - c,
                len: self.len,
                data: tail,
            },
        )
    }

    /// Zero-pads on the right to `new_len`.
    pub fn padded(&self, new_len: usize) -> Tensor1 {
        assert!(new_len >= self.len);
        let mut out = Tensor1::zeros(self.channels, new_len);
        for c in 0..self.channels {
            out.row_mut(c)[..self.len].copy_from_slice(self.row(c));
        }
        out
    }

    pub fn cropped(&self, new_len: usize) -> Tensor1 {
        assert!(new_len >= 1 && new_len <= self.len);
        let mut out = Tensor1::zeros(self.channels, new_len);
        for c in 0..self.channels {
            out.row_mut(c).copy_from_slice(&self.row(c)[..new_len]);
        }
        out
    }
}
