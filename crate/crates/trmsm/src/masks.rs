//! Attention validity masks built from a conversation's speaker sequence.
//!
//! Masks are stored as boolean matrices (`true` = attendable) and only
//! converted to the -inf convention inside `masked_softmax`. Three masks
//! are derived per conversation: the conventional mask (all positions),
//! the intra-speaker mask (same speaker only) and the inter-speaker mask
//! (other speakers only). An optional context window `(x, y)` restricts
//! every mask to the x prior and y posterior utterances.

use crate::error::{Error, Result};

/// Boolean validity matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    valid: Vec<bool>,
}

impl Mask {
    pub fn all_true(rows: usize, cols: usize) -> Mask {
        Mask {
            rows,
            cols,
            valid: vec![true; rows * cols],
        }
    }

    pub fn all_false(rows: usize, cols: usize) -> Mask {
        Mask {
            rows,
            cols,
            valid: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Mask {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut valid = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged mask rows");
            valid.extend_from_slice(row);
        }
        Mask { rows: r, cols: c, valid }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: bool) {
        self.valid[i * self.cols + j] = v;
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mask {
            rows: self.rows,
            cols: self.cols,
            valid: self
                .valid
                .iter()
                .zip(&other.valid)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mask {
            rows: self.rows,
            cols: self.cols,
            valid: self
                .valid
                .iter()
                .zip(&other.valid)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    /// Valid-position count for each row.
    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| (0..self.cols).filter(|&j| self.get(i, j)).count())
            .collect()
    }

    /// CSV of 0/1 entries, one mask row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let row: Vec<&str> = (0..self.cols)
                .map(|j| if self.get(i, j) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// The three per-conversation masks plus the window they were built with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSet {
    pub conventional: Mask,
    pub intra: Mask,
    pub inter: Mask,
    pub window: Option<(usize, usize)>,
}

/// Build the conventional / intra-speaker / inter-speaker masks for a
/// speaker sequence. `window = (x, y)` keeps positions `i-x ..= i+y` for
/// query `i` and is intersected into all three masks.
pub fn build_masks<S: AsRef<str>>(speakers: &[S], window: Option<(usize, usize)>) -> Result<MaskSet> {
    let n = speakers.len();
    if n == 0 {
        return Err(Error::Data("empty speaker sequence".into()));
    }
    let mut conventional = Mask::all_true(n, n);
    if let Some((x, y)) = window {
        for i in 0..n {
            for j in 0..n {
                let lo = i.saturating_sub(x);
                let hi = i + y;
                conventional.set(i, j, j >= lo && j <= hi);
            }
        }
    }
    let mut intra = Mask::all_false(n, n);
    let mut inter = Mask::all_false(n, n);
    for i in 0..n {
        for j in 0..n {
            if !conventional.get(i, j) {
                continue;
            }
            if speakers[i].as_ref() == speakers[j].as_ref() {
                intra.set(i, j, true);
            } else {
                inter.set(i, j, true);
            }
        }
    }
    Ok(MaskSet {
        conventional,
        intra,
        inter,
        window,
    })
}

/// Per-row valid counts and fully-masked flags for each mask.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MaskStats {
    pub conventional_counts: Vec<usize>,
    pub intra_counts: Vec<usize>,
    pub inter_counts: Vec<usize>,
    pub conventional_fully_masked: Vec<bool>,
    pub intra_fully_masked: Vec<bool>,
    pub inter_fully_masked: Vec<bool>,
}

pub fn mask_stats(m: &MaskSet) -> MaskStats {
    let cc = m.conventional.row_counts();
    let ra = m.intra.row_counts();
    let er = m.inter.row_counts();
    MaskStats {
        conventional_fully_masked: cc.iter().map(|&c| c == 0).collect(),
        intra_fully_masked: ra.iter().map(|&c| c == 0).collect(),
        inter_fully_masked: er.iter().map(|&c| c == 0).collect(),
        conventional_counts: cc,
        intra_counts: ra,
        inter_counts: er,
    }
}
