use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of [`MetricReport::csv_row`].
pub const CSV_COLUMNS: [&str; 12] = [
    "variant",
    "params",
    "config_hash",
    "fmd",
    "div_all",
    "bc",
    "fed",
    "div_face",
    "jaw_l1",
    "lmk_l1",
    "lvd",
    "clips",
];

/// One evaluation of one model. A `None` metric could not be computed; the
/// reason is recorded in `notes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: String,
    pub params: u64,
    pub config_hash: String,
    pub fmd: Option<f64>,
    pub fed: Option<f64>,
    pub div_all: Option<f64>,
    pub div_face: Option<f64>,
    pub bc: Option<f64>,
    pub jaw_l1: Option<f64>,
    pub lmk_l1: Option<f64>,
    pub lvd: Option<f64>,
    pub clips: usize,
    pub seed: u64,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn empty(variant: impl Into<String>, params: u64, config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            variant: variant.into(),
            params,
            config_hash: config_hash.into(),
            fmd: None,
            fed: None,
            div_all: None,
            div_face: None,
            bc: None,
            jaw_l1: None,
            lmk_l1: None,
            lvd: None,
            clips: 0,
            seed,
            notes: Vec::new(),
        }
    }

    /// Name and value of every metric column.
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("fmd", self.fmd),
            ("div_all", self.div_all),
            ("bc", self.bc),
            ("fed", self.fed),
            ("div_face", self.div_face),
            ("jaw_l1", self.jaw_l1),
            ("lmk_l1", self.lmk_l1),
            ("lvd", self.lvd),
        ]
    }

    /// Checks the value ranges: every metric non-negative, `bc` at most 1.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.metrics() {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Numerical(format!("{name} = {v} is not a non-negative number")));
                }
            }
        }
        if self.bc.is_some_and(|b| b > 1.0) {
            return Err(Error::Numerical(format!("bc = {:?} exceeds 1", self.bc)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metric report: {e}")))
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Missing metrics are empty cells.
    pub fn csv_row(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
        let mut cells = vec![self.variant.clone(), self.params.to_string(), self.config_hash.clone()];
        cells.extend(self.metrics().iter().map(|(_, v)| cell(*v)));
        cells.push(self.clips.to_string());
        cells.join(",")
    }
}
