use std::ops::Range;

/// Variable-length per-frame rows in one flat buffer. Row `t` (1-indexed)
/// holds one value per HMM state of frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRows {
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl Default for FrameRows {
    fn default() -> Self {
        FrameRows {
            offsets: vec![0],
            data: Vec::new(),
        }
    }
}

impl FrameRows {
    /// Zero-filled rows with the given lengths.
    pub fn zeros(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        let mut total = 0;
        for len in lengths {
            total += len;
            offsets.push(total);
        }
        FrameRows {
            offsets,
            data: vec![0.0; total],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: impl IntoIterator<Item = R>) -> Self {
        let mut out = FrameRows {
            offsets: vec![0],
            data: Vec::new(),
        };
        for r in rows {
            out.push(r.as_ref());
        }
        out
    }

    pub fn push(&mut self, row: &[f64]) {
        self.data.extend_from_slice(row);
        self.offsets.push(self.data.len());
    }

    /// Number of frames.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn span(&self, t: usize) -> Range<usize> {
        self.offsets[t - 1]..self.offsets[t]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[self.span(t)]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        let span = self.span(t);
        &mut self.data[span]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.offsets.windows(2).map(|w| &self.data[w[0]..w[1]])
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}
