//! Flat scalar records shared by the CLI and the acceptance suite.

use crate::dimension::{DimensionEstimate, DimensionMethod};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 7] = [
    "quantity",
    "method",
    "value",
    "se",
    "reference",
    "tolerance",
    "pass",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub quantity: String,
    pub method: String,
    pub value: f64,
    /// Present on every stochastic number.
    pub se: Option<f64>,
    pub reference: Option<f64>,
    /// Present on every comparison.
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
    #[serde(default)]
    pub settings: serde_json::Map<String, serde_json::Value>,
}

impl EstimateReport {
    pub fn exact(quantity: impl Into<String>, method: impl Into<String>, value: f64) -> Self {
        Self {
            quantity: quantity.into(),
            method: method.into(),
            value,
            se: None,
            reference: None,
            tolerance: None,
            pass: None,
            settings: Default::default(),
        }
    }

    /// Compare against `reference` with an absolute tolerance.
    pub fn against(mut self, reference: f64, tolerance: f64) -> Self {
        self.reference = Some(reference);
        self.tolerance = Some(tolerance);
        self.pass = Some((self.value - reference).abs() <= tolerance);
        self
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self
    }

    /// Record a pass flag decided elsewhere.
    pub fn with_check(mut self, pass: bool, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self.pass = Some(pass);
        self
    }

    pub fn setting(mut self, key: &str, value: impl Serialize) -> Self {
        self.settings.insert(
            key.to_owned(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    /// Dimension estimate compared with its reference at `tolerance`.
    pub fn from_dimension(
        quantity: impl Into<String>,
        est: &DimensionEstimate,
        tolerance: f64,
    ) -> Self {
        let method = match est.method {
            DimensionMethod::BlockEntropySlope => "block-entropy-slope",
            DimensionMethod::GaussianSurrogate => "gaussian-surrogate",
            DimensionMethod::RateDistortion => "rate-distortion",
        };
        let mut r = Self::exact(quantity, method, est.value);
        if est.method != DimensionMethod::RateDistortion {
            r = r
                .with_se(est.se)
                .setting("m_ladder", &est.m_ladder)
                .setting("k", est.k)
                .setting("R", est.paths);
        } else {
            r = r.setting("d_ladder", &est.d_ladder);
        }
        r = r
            .setting("spread", est.spread)
            .setting("in_range", est.in_range);
        match est.reference {
            Some(d) => r.against(d, tolerance),
            None => r,
        }
    }

    pub fn passed(&self) -> bool {
        self.pass != Some(false)
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// CSV with the fixed columns; settings are left to the JSON form.
pub fn write_csv<W: Write>(reports: &[EstimateReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.quantity.clone(),
            r.method.clone(),
            r.value.to_string(),
            opt(&r.se),
            opt(&r.reference),
            opt(&r.tolerance),
            opt(&r.pass),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "quantity,method,value,se,reference,tolerance,pass\n"
        );
    }

    #[test]
    fn csv_row_and_json_round_trip() {
        let r = EstimateReport::exact("d", "rank-integral", 0.5)
            .against(0.5, 1e-6)
            .setting("grid", 4096);
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "d,rank-integral,0.5,,0.5,0.000001,true"
        );
        let back: EstimateReport =
            serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn comparison_flags() {
        assert_eq!(
            EstimateReport::exact("x", "m", 1.0).against(1.2, 0.1).pass,
            Some(false)
        );
        assert!(EstimateReport::exact("x", "m", 1.0).passed());
    }
}
