use crate::blockgraph::BitMatrix;

/// Bit set of the sites holding `+1`, laid out like a [`BitMatrix`] row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct PlusMask {
    words: Vec<u64>,
}

impl PlusMask {
    pub(crate) fn from_spins(spins: &[i8]) -> Self {
        let mut words = vec![0u64; spins.len().div_ceil(64)];
        for (i, &s) in spins.iter().enumerate() {
            if s > 0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        PlusMask { words }
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, plus: bool) {
        let bit = 1u64 << (i % 64);
        if plus {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    #[inline]
    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }
}

/// `sum_{j in row} sigma_j` restricted to the given word range.
#[inline]
pub(crate) fn signed_row_sum(row: &[u64], plus: &[u64], words: std::ops::Range<usize>) -> i64 {
    let mut total = 0u32;
    let mut up = 0u32;
    for k in words {
        let r = row[k];
        total += r.count_ones();
        up += (r & plus[k]).count_ones();
    }
    2 * i64::from(up) - i64::from(total)
}

/// `sum_{j in row} sigma_j` over the full row.
#[inline]
pub(crate) fn signed_sum(m: &BitMatrix, i: usize, plus: &PlusMask) -> i64 {
    let row = m.row(i);
    signed_row_sum(row, plus.words(), 0..row.len())
}
