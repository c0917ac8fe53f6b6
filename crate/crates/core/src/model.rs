//! Validated problem data: distributions, distortion matrices and instances.
//!
//! Everything here is immutable once constructed. Source laws may contain
//! zero entries (empirical types often do); the solvers strip those symbols
//! internally and report per-symbol quantities over the full alphabet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

/// A probability vector on a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Invalid("pmf is empty".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Invalid(format!("pmf entry {i} is not finite")));
            }
            if p < 0.0 {
                return Err(Error::Invalid(format!("negative probability at index {i}")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Invalid("pmf not normalized".into()));
        }
        Ok(Self { probs })
    }

    /// Builds a pmf from nonnegative weights, normalizing them.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(
                "weights must be nonnegative with positive sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// The empirical distribution of a count vector.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::from_weights(&w)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Invalid("pmf is empty".into()));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len())
            .filter(|&i| self.probs[i] > 0.0)
            .collect()
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(f)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, v)| p * v)
            .sum()
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.probs
    }
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &Pmf) -> f64 {
    p.probs
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| -q * q.ln())
        .sum()
}

/// A nonnegative distortion matrix, rows indexed by source symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DistortionMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistortionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Invalid("distortion matrix has no rows".into()));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::Invalid("distortion matrix has no columns".into()));
        }
        let mut values = Vec::with_capacity(n * m);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Invalid(format!(
                    "distortion matrix row {x} has wrong length"
                )));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Invalid(format!(
                    "negative or non-finite distortion in row {x}"
                )));
            }
            if !row.contains(&0.0) {
                return Err(Error::Invalid(
                    "row lacks zero-distortion reproduction".into(),
                ));
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            rows: n,
            cols: m,
            values,
        })
    }

    pub fn hamming(size: usize) -> Self {
        let mut values = vec![1.0; size * size];
        for i in 0..size {
            values[i * size + i] = 0.0;
        }
        Self {
            rows: size,
            cols: size,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.cols + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.cols..(x + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(|r| r.to_vec()).collect()
    }

    /// Smallest expected distortion of a constant reproduction, and its column.
    pub fn max_useful_distortion(&self, px: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for y in 0..self.cols {
            let e: f64 = (0..self.rows).map(|x| px[x] * self.get(x, y)).sum();
            if e < best.0 {
                best = (e, y);
            }
        }
        best
    }
}

impl TryFrom<Vec<Vec<f64>>> for DistortionMatrix {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DistortionMatrix> for Vec<Vec<f64>> {
    fn from(d: DistortionMatrix) -> Self {
        d.to_rows()
    }
}

/// Unvalidated instance as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance {
    pub px: Vec<f64>,
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    #[serde(rename = "D1")]
    pub dist1: f64,
    #[serde(rename = "D2")]
    pub dist2: f64,
}

/// A validated two-decoder source instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceInstance {
    px: Pmf,
    d1: DistortionMatrix,
    d2: DistortionMatrix,
    dist1: f64,
    dist2: f64,
}

/// Checks every invariant of `raw`, reporting the first violation.
pub fn validate_instance(raw: &RawInstance) -> Result<SourceInstance> {
    let px = Pmf::new(raw.px.clone())?;
    if px.alphabet_size() < 2 {
        return Err(Error::Invalid(
            "source alphabet must have at least 2 symbols".into(),
        ));
    }
    let d1 = DistortionMatrix::new(raw.d1.clone())?;
    let d2 = DistortionMatrix::new(raw.d2.clone())?;
    SourceInstance::new(px, d1, d2, raw.dist1, raw.dist2)
}

impl SourceInstance {
    pub fn new(
        px: Pmf,
        d1: DistortionMatrix,
        d2: DistortionMatrix,
        dist1: f64,
        dist2: f64,
    ) -> Result<Self> {
        if px.alphabet_size() < 2 {
            return Err(Error::Invalid(
                "source alphabet must have at least 2 symbols".into(),
            ));
        }
        if d1.rows() != px.alphabet_size() || d2.rows() != px.alphabet_size() {
            return Err(Error::Invalid(
                "distortion matrix rows must match the source alphabet".into(),
            ));
        }
        for (name, v) in [("D1", dist1), ("D2", dist2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-positive distortion level {name}"
                )));
            }
        }
        Ok(Self {
            px,
            d1,
            d2,
            dist1,
            dist2,
        })
    }

    /// Binary or larger source with Hamming distortion for both decoders.
    pub fn hamming(px: &[f64], dist1: f64, dist2: f64) -> Result<Self> {
        let px = Pmf::new(px.to_vec())?;
        let k = px.alphabet_size();
        Self::new(
            px,
            DistortionMatrix::hamming(k),
            DistortionMatrix::hamming(k),
            dist1,
            dist2,
        )
    }

    pub fn px(&self) -> &Pmf {
        &self.px
    }
    pub fn d1(&self) -> &DistortionMatrix {
        &self.d1
    }
    pub fn d2(&self) -> &DistortionMatrix {
        &self.d2
    }
    pub fn dist1(&self) -> f64 {
        self.dist1
    }
    pub fn dist2(&self) -> f64 {
        self.dist2
    }

    pub fn with_px(&self, px: Pmf) -> Result<Self> {
        Self::new(px, self.d1.clone(), self.d2.clone(), self.dist1, self.dist2)
    }

    pub fn with_levels(&self, dist1: f64, dist2: f64) -> Result<Self> {
        Self::new(
            self.px.clone(),
            self.d1.clone(),
            self.d2.clone(),
            dist1,
            dist2,
        )
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            px: self.px.probs().to_vec(),
            d1: self.d1.to_rows(),
            d2: self.d2.to_rows(),
            dist1: self.dist1,
            dist2: self.dist2,
        }
    }
}

/// A rate pair (first-stage rate, sum rate) in nats per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
}

impl RatePoint {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1 >= 0.0) || !r2.is_finite() {
            return Err(Error::Invalid("rates must be finite with R1 >= 0".into()));
        }
        Ok(Self { r1, r2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ham2() -> Vec<Vec<f64>> {
        vec![vec![0.0, 1.0], vec![1.0, 0.0]]
    }

    #[test]
    fn accepts_binary_hamming() {
        let raw = RawInstance {
            px: vec![0.2, 0.8],
            d1: ham2(),
            d2: ham2(),
            dist1: 0.1,
            dist2: 0.05,
        };
        let inst = validate_instance(&raw).unwrap();
        assert_eq!(validate_instance(&inst.to_raw()).unwrap(), inst);
    }

    #[test]
    fn rejects_unnormalized() {
        let raw = RawInstance {
            px: vec![0.5, 0.6],
            d1: ham2(),
            d2: ham2(),
            dist1: 0.1,
            dist2: 0.05,
        };
        let err = validate_instance(&raw).unwrap_err().to_string();
        assert!(err.contains("pmf not normalized"), "{err}");
    }

    #[test]
    fn rejects_row_without_zero() {
        let raw = RawInstance {
            px: vec![0.5, 0.5],
            d1: vec![vec![0.3, 0.2], vec![0.1, 0.4]],
            d2: ham2(),
            dist1: 0.1,
            dist2: 0.05,
        };
        let err = validate_instance(&raw).unwrap_err().to_string();
        assert!(
            err.contains("row lacks zero-distortion reproduction"),
            "{err}"
        );
    }

    #[test]
    fn rejects_negative_probability_and_level() {
        let raw = RawInstance {
            px: vec![-0.1, 1.1],
            d1: ham2(),
            d2: ham2(),
            dist1: 0.1,
            dist2: 0.05,
        };
        assert!(validate_instance(&raw)
            .unwrap_err()
            .to_string()
            .contains("negative probability"));
        let raw = RawInstance {
            px: vec![0.5, 0.5],
            d1: ham2(),
            d2: ham2(),
            dist1: 0.0,
            dist2: 0.05,
        };
        assert!(validate_instance(&raw)
            .unwrap_err()
            .to_string()
            .contains("non-positive distortion level"));
    }

    #[test]
    fn entropy_values() {
        assert!((entropy(&Pmf::new(vec![0.5, 0.5]).unwrap()) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&Pmf::new(vec![1.0, 0.0]).unwrap()), 0.0);
        let q = Pmf::new(vec![1.0 / 3.0, 0.25, 0.25, 1.0 / 6.0]).unwrap();
        assert!((entropy(&q) - 1.357_977_855).abs() < 1e-8);
    }

    #[test]
    fn json_field_names() {
        let s = r#"{"px":[0.2,0.8],"d1":[[0,1],[1,0]],"d2":[[0,1],[1,0]],"D1":0.1,"D2":0.05}"#;
        let raw: RawInstance = serde_json::from_str(s).unwrap();
        assert_eq!(raw.dist1, 0.1);
        let missing = r#"{"px":[0.2,0.8],"d1":[[0,1],[1,0]],"d2":[[0,1],[1,0]],"D1":0.1}"#;
        let err = serde_json::from_str::<RawInstance>(missing)
            .unwrap_err()
            .to_string();
        assert!(err.contains("D2"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn entropy_bounded(w in proptest::collection::vec(0.0f64..1.0, 2..8)) {
                prop_assume!(w.iter().sum::<f64>() > 1e-6);
                let p = Pmf::from_weights(&w).unwrap();
                let h = entropy(&p);
                prop_assert!(h >= 0.0);
                prop_assert!(h <= (p.alphabet_size() as f64).ln() + 1e-12);
            }
        }
    }
}
