//! Objective intelligibility measures and their `[0, 1]` normalization.
//!
//! The reference signal is always the unmodified speech and the degraded
//! signal is the processed speech plus the masker.

mod estoi;
mod siib;

pub use estoi::{estoi, ESTOI_RATE, SEGMENT_FRAMES};
pub use siib::{siib, siib_with, SiibConfig};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default SIIB value (bits/s) mapped to a normalized score of 1.
pub const DEFAULT_R_MAX: f64 = 750.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Siib,
    Estoi,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Siib => write!(f, "SIIB"),
            Metric::Estoi => write!(f, "ESTOI"),
        }
    }
}

/// Ordered, non-empty set of target metrics. SIIB always precedes ESTOI,
/// and the length is the discriminator's output width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Metric>", into = "Vec<Metric>")]
pub struct MetricSelection(Vec<Metric>);

impl MetricSelection {
    pub fn new(siib: bool, estoi: bool) -> Result<Self> {
        let mut v = Vec::new();
        if siib {
            v.push(Metric::Siib);
        }
        if estoi {
            v.push(Metric::Estoi);
        }
        if v.is_empty() {
            return Err(Error::InvalidArgument("at least one metric must be selected".into()));
        }
        Ok(Self(v))
    }

    pub fn siib_only() -> Self {
        Self(vec![Metric::Siib])
    }

    pub fn siib_estoi() -> Self {
        Self(vec![Metric::Siib, Metric::Estoi])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn metrics(&self) -> &[Metric] {
        &self.0
    }

    pub fn contains(&self, m: Metric) -> bool {
        self.0.contains(&m)
    }
}

impl TryFrom<Vec<Metric>> for MetricSelection {
    type Error = Error;

    fn try_from(v: Vec<Metric>) -> Result<Self> {
        let sel = Self::new(v.contains(&Metric::Siib), v.contains(&Metric::Estoi))?;
        if sel.0 != v {
            return Err(Error::InvalidArgument(format!("metric selection {v:?} must be [siib, estoi] ordered")));
        }
        Ok(sel)
    }
}

impl From<MetricSelection> for Vec<Metric> {
    fn from(s: MetricSelection) -> Self {
        s.0
    }
}

/// Tunables of the score computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricConfig {
    pub r_max: f64,
    pub siib: SiibConfig,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { r_max: DEFAULT_R_MAX, siib: SiibConfig::default() }
    }
}

/// Scores of one processed utterance. Unselected metrics are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub estoi: Option<f64>,
    pub siib_raw: Option<f64>,
    pub siib_norm: Option<f64>,
}

impl MetricScores {
    /// Normalized scores in selection order (the discriminator's targets).
    pub fn targets(&self, sel: &MetricSelection) -> Vec<f64> {
        sel.metrics()
            .iter()
            .map(|m| match m {
                Metric::Siib => self.siib_norm.unwrap_or(f64::NAN),
                Metric::Estoi => self.estoi.unwrap_or(f64::NAN),
            })
            .collect()
    }
}

/// Linear clamp of a SIIB rate onto `[0, 1]`.
pub fn normalize_siib(raw: f64, r_max: f64) -> Result<f64> {
    if !(raw >= 0.0) {
        return Err(Error::InvalidArgument(format!("SIIB must be non-negative, got {raw}")));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidArgument(format!("R_max must be positive, got {r_max}")));
    }
    Ok((raw / r_max).clamp(0.0, 1.0))
}

/// Intelligibility of `processed` heard in `noise`, relative to `unprocessed`.
pub fn q_scores<S: Real>(
    processed: &Waveform<S>,
    unprocessed: &Waveform<S>,
    noise: &Waveform<S>,
    sel: &MetricSelection,
    cfg: &MetricConfig,
) -> Result<MetricScores> {
    if processed.len() != unprocessed.len() || processed.len() != noise.len() {
        return Err(Error::ShapeMismatch(format!(
            "processed {}, unprocessed {}, noise {} samples",
            processed.len(),
            unprocessed.len(),
            noise.len()
        )));
    }
    let processed = processed.cast::<f64>();
    let reference = unprocessed.cast::<f64>();
    let degraded = processed.add(&noise.cast::<f64>())?;
    let mut out = MetricScores::default();
    if sel.contains(Metric::Siib) {
        let raw = siib_with(&reference, &degraded, &cfg.siib)?;
        out.siib_raw = Some(raw);
        out.siib_norm = Some(normalize_siib(raw, cfg.r_max)?);
    }
    if sel.contains(Metric::Estoi) {
        out.estoi = Some(estoi(&reference, &degraded)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_siib_examples() {
        assert_eq!(normalize_siib(0.0, 750.0).unwrap(), 0.0);
        assert_eq!(normalize_siib(375.0, 750.0).unwrap(), 0.5);
        assert_eq!(normalize_siib(1500.0, 750.0).unwrap(), 1.0);
        assert!(normalize_siib(-1.0, 750.0).is_err());
        assert!(normalize_siib(1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn normalize_siib_is_monotone_and_bounded(a in 0.0f64..3000.0, b in 0.0f64..3000.0) {
            let (na, nb) = (normalize_siib(a, 750.0).unwrap(), normalize_siib(b, 750.0).unwrap());
            prop_assert!((0.0..=1.0).contains(&na));
            if a <= b {
                prop_assert!(na <= nb);
            }
        }
    }

    #[test]
    fn selection_order_is_fixed() {
        assert_eq!(MetricSelection::siib_estoi().metrics(), &[Metric::Siib, Metric::Estoi]);
        assert!(MetricSelection::new(false, false).is_err());
        let json = serde_json::to_string(&MetricSelection::siib_estoi()).unwrap();
        assert_eq!(json, r#"["siib","estoi"]"#);
        assert!(serde_json::from_str::<MetricSelection>(r#"["estoi","siib"]"#).is_err());
        assert!(serde_json::from_str::<MetricSelection>(r#"[]"#).is_err());
    }

    #[test]
    fn siib_ceiling_exceeds_default_r_max() {
        assert!(SiibConfig::default().ceiling() > DEFAULT_R_MAX);
    }

    #[test]
    fn q_scores_rejects_length_mismatch() {
        let a = Waveform::<f64>::zeros(100, 16000);
        let b = Waveform::<f64>::zeros(101, 16000);
        assert!(q_scores(&a, &a, &b, &MetricSelection::siib_only(), &MetricConfig::default()).is_err());
    }
}
