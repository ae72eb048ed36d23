use crate::codec::bf16::{to_bf16, truncate_mantissa, Bf16Word, MANTISSA_BITS};
use crate::error::{Error, Result};
use crate::factorizer::{CompressedFactorization, LayerSlice, SparseCodes, SparseColumn};
use crate::linalg::DenseMatrix;
use crate::planner::{mask_words, sparse_words, MaskMode};

/// Bit-packed factorization.
///
/// * `dict_payload`: `d1·k` bf16 words, dictionary in row-major order.
/// * `mask`: `ceil(k·d2/16)` words; entry `(atom i, column j)` is flat bit
///   `j·k + i`, stored in word `flat / 16` at bit `flat % 16` (bit 0 = LSB).
///   Padding bits past `k·d2` are zero.
/// * `value_payload`: one bf16 word per set mask bit, column by column in
///   ascending atom order. Mantissa truncation applies to these words only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedFactorization {
    pub d1: usize,
    pub d2: usize,
    pub k: usize,
    pub s: usize,
    pub mask_mode: MaskMode,
    pub truncated_bits: u32,
    pub layers: Vec<LayerSlice>,
    /// Free-form run metadata carried in the container header.
    pub meta: Vec<(String, String)>,
    pub dict_payload: Vec<u16>,
    pub mask: Vec<u16>,
    pub value_payload: Vec<u16>,
}

/// Values that did not fit in bf16 range during packing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConversionReport {
    pub saturated: usize,
    /// Nonzero coefficients that rounded (or truncated) to zero and were dropped from the mask.
    pub flushed_to_zero: usize,
}

impl PackedFactorization {
    /// Words counted by the storage accounting of `mask_mode`.
    pub fn accounted_words(&self) -> u64 {
        sparse_words(self.d1, self.d2, self.k, self.value_payload.len(), self.mask_mode)
    }

    /// Words actually present in the payload (the mask is always stored).
    pub fn payload_words(&self) -> u64 {
        (self.dict_payload.len() + self.mask.len() + self.value_payload.len()) as u64
    }

    pub fn column_popcount(&self, j: usize) -> usize {
        (0..self.k).filter(|&i| mask_bit(&self.mask, j * self.k + i)).count()
    }
}

fn mask_bit(mask: &[u16], flat: usize) -> bool {
    mask[flat / 16] >> (flat % 16) & 1 == 1
}

pub fn pack(
    cf: &CompressedFactorization,
    truncate_bits: u32,
    mask_mode: MaskMode,
) -> Result<(PackedFactorization, ConversionReport)> {
    if truncate_bits > MANTISSA_BITS {
        return Err(Error::InvalidConfig(format!(
            "can truncate at most {MANTISSA_BITS} mantissa bits, got {truncate_bits}"
        )));
    }
    let (d1, d2, k, s) = (cf.d1(), cf.d2(), cf.k(), cf.s());
    let mut report = ConversionReport::default();
    let dict_payload = cf
        .dictionary
        .as_slice()
        .iter()
        .map(|&v| {
            let (w, sat) = to_bf16(v);
            report.saturated += sat as usize;
            w.bits()
        })
        .collect();

    let mut mask = vec![0u16; mask_words(k, d2) as usize];
    let mut value_payload = Vec::with_capacity(cf.codes.nnz());
    for j in 0..d2 {
        let (atoms, values) = cf.codes.column(j);
        if atoms.len() > s {
            return Err(Error::CorruptCodes {
                column: j,
                count: atoms.len(),
                budget: s,
            });
        }
        for (&i, &v) in atoms.iter().zip(values) {
            let (w, sat) = to_bf16(v);
            report.saturated += sat as usize;
            let w = truncate_mantissa(w, truncate_bits);
            if w.is_zero() {
                report.flushed_to_zero += 1;
                continue;
            }
            let flat = j * k + i;
            mask[flat / 16] |= 1 << (flat % 16);
            value_payload.push(w.bits());
        }
    }
    Ok((
        PackedFactorization {
            d1,
            d2,
            k,
            s,
            mask_mode,
            truncated_bits: truncate_bits,
            layers: cf.layers.clone(),
            meta: Vec::new(),
            dict_payload,
            mask,
            value_payload,
        },
        report,
    ))
}

/// Inverse of [`pack`], revalidating payload lengths and mask consistency.
/// Offsets in errors are byte offsets into the dict/mask/values payload.
pub fn unpack(p: &PackedFactorization) -> Result<CompressedFactorization> {
    let (d1, d2, k, s) = (p.d1, p.d2, p.k, p.s);
    if d1 == 0 || k == 0 || s == 0 || s > k {
        return Err(Error::CorruptPayload {
            offset: 0,
            reason: format!("invalid sizes d1={d1} d2={d2} k={k} s={s}"),
        });
    }
    let dict_words = d1 * k;
    if p.dict_payload.len() != dict_words {
        return Err(Error::CorruptPayload {
            offset: 2 * p.dict_payload.len().min(dict_words),
            reason: format!("dictionary holds {} words, expected {dict_words}", p.dict_payload.len()),
        });
    }
    let mask_start = 2 * dict_words;
    let expected_mask = mask_words(k, d2) as usize;
    if p.mask.len() != expected_mask {
        return Err(Error::CorruptPayload {
            offset: mask_start + 2 * p.mask.len().min(expected_mask),
            reason: format!("mask holds {} words, expected {expected_mask}", p.mask.len()),
        });
    }
    let total_bits = k * d2;
    for flat in total_bits..expected_mask * 16 {
        if mask_bit(&p.mask, flat) {
            return Err(Error::CorruptPayload {
                offset: mask_start + 2 * (flat / 16),
                reason: "padding bits set in mask".into(),
            });
        }
    }
    let popcount: usize = p.mask.iter().map(|w| w.count_ones() as usize).sum();
    let values_start = mask_start + 2 * expected_mask;
    if popcount != p.value_payload.len() {
        return Err(Error::CorruptPayload {
            offset: values_start + 2 * popcount.min(p.value_payload.len()),
            reason: format!(
                "mask marks {popcount} nonzeros but {} values are stored",
                p.value_payload.len()
            ),
        });
    }

    let dict: Vec<f64> = p.dict_payload.iter().map(|&b| Bf16Word(b).to_f64()).collect();
    if let Some(pos) = dict.iter().position(|v| !v.is_finite()) {
        return Err(Error::CorruptPayload {
            offset: 2 * pos,
            reason: "non-finite dictionary entry".into(),
        });
    }
    let dictionary = DenseMatrix::from_vec_unchecked(d1, k, dict);

    let mut cursor = 0usize;
    let mut columns = Vec::with_capacity(d2);
    for j in 0..d2 {
        let mut col = SparseColumn::default();
        for i in 0..k {
            if mask_bit(&p.mask, j * k + i) {
                let word = Bf16Word(p.value_payload[cursor]);
                let v = word.to_f64();
                if word.is_zero() || !v.is_finite() {
                    return Err(Error::CorruptPayload {
                        offset: values_start + 2 * cursor,
                        reason: "stored coefficient is zero or non-finite".into(),
                    });
                }
                col.support.push(i);
                col.values.push(v);
                cursor += 1;
            }
        }
        if col.nnz() > s {
            return Err(Error::CorruptPayload {
                offset: mask_start + 2 * ((j * k) / 16),
                reason: format!("column {j} has {} nonzeros, budget {s}", col.nnz()),
            });
        }
        columns.push(col);
    }
    let codes = SparseCodes::from_columns(k, s, columns)?;
    let layers = if p.layers.is_empty() {
        vec![LayerSlice {
            name: "layer".into(),
            cols: d2,
        }]
    } else {
        p.layers.clone()
    };
    CompressedFactorization::with_layers(dictionary, codes, p.mask_mode, layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_entry(k: usize) -> CompressedFactorization {
        let codes = SparseCodes::from_columns(
            k,
            1,
            vec![
                SparseColumn::normalized(vec![(0, 1.5)]),
                SparseColumn::default(),
            ],
        )
        .unwrap();
        CompressedFactorization::new(DenseMatrix::identity(k), codes, MaskMode::WithMask, "w").unwrap()
    }

    #[test]
    fn mask_bit_layout() {
        let (p, _) = pack(&single_entry(16), 0, MaskMode::WithMask).unwrap();
        assert_eq!(p.mask.len(), 2);
        assert_eq!(p.mask[0], 0x0001);
        assert_eq!(p.mask[1], 0);
        assert_eq!(p.value_payload, vec![to_bf16(1.5).0.bits()]);
    }

    #[test]
    fn empty_codes() {
        let cf = CompressedFactorization::new(
            DenseMatrix::identity(3),
            SparseCodes::empty(3, 5, 2),
            MaskMode::NoMask,
            "w",
        )
        .unwrap();
        let (p, _) = pack(&cf, 0, MaskMode::NoMask).unwrap();
        assert!(p.mask.iter().all(|&w| w == 0));
        assert!(p.value_payload.is_empty());
        assert_eq!(unpack(&p).unwrap().codes.nnz(), 0);
    }

    #[test]
    fn detects_corruption() {
        let (p, _) = pack(&single_entry(4), 0, MaskMode::WithMask).unwrap();
        let mut cut = p.clone();
        cut.value_payload.clear();
        assert!(matches!(unpack(&cut), Err(Error::CorruptPayload { .. })));
        let mut short = p.clone();
        short.dict_payload.pop();
        assert!(matches!(unpack(&short), Err(Error::CorruptPayload { offset: 30, .. })));
        let mut pad = p.clone();
        pad.mask[0] |= 1 << 15; // k·d2 = 8 bits, bit 15 is padding
        assert!(matches!(unpack(&pad), Err(Error::CorruptPayload { .. })));
        let mut over = p;
        over.mask[0] |= 0b10;
        over.value_payload.push(to_bf16(2.0).0.bits());
        assert!(matches!(unpack(&over), Err(Error::CorruptPayload { .. })));
    }

    #[test]
    fn rejects_overfull_columns_and_bad_truncation() {
        let cf = single_entry(4);
        assert!(matches!(pack(&cf, 8, MaskMode::WithMask), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn truncated_values_follow_elementwise_rule() {
        let values = [1.2345, -0.0071, 3.99, 1e-3];
        let columns = values
            .iter()
            .map(|&v| SparseColumn::normalized(vec![(1, v)]))
            .collect();
        let codes = SparseCodes::from_columns(2, 1, columns).unwrap();
        let cf = CompressedFactorization::new(DenseMatrix::identity(2), codes, MaskMode::WithMask, "w").unwrap();
        let back = unpack(&pack(&cf, 2, MaskMode::WithMask).unwrap().0).unwrap();
        for (&orig, &got) in values.iter().zip(back.codes.values()) {
            assert_eq!(got, truncate_mantissa(to_bf16(orig).0, 2).to_f64());
        }
    }
}
