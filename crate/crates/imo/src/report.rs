//! `metrics.json` and `plot_rel.csv`.

use std::collections::BTreeMap;
use std::path::Path;

use imo_core::eval::RelativeErrors;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub trans_pct: Vec<f64>,
    pub rot_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ate_t_m: f64,
    /// `None` for position-only estimates.
    pub ate_r_deg: Option<f64>,
    /// Keyed by sub-trajectory length in metres, e.g. `"10"`.
    pub rel: BTreeMap<String, DistanceReport>,
}

/// `10.0 → "10"`, `12.5 → "12.5"`.
pub fn distance_key(d: f64) -> String {
    format!("{d}")
}

impl Metrics {
    pub fn new(ate_t_m: f64, ate_r_deg: Option<f64>, rel: &RelativeErrors) -> Self {
        let rel = rel
            .per_distance
            .iter()
            .map(|d| {
                (
                    distance_key(d.distance),
                    DistanceReport {
                        trans_pct: d.trans_pct.clone(),
                        rot_deg: if ate_r_deg.is_some() { d.rot_deg.clone() } else { Vec::new() },
                    },
                )
            })
            .collect();
        Self {
            ate_t_m,
            ate_r_deg,
            rel,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("metrics.json"), json + "\n")?;
        let mut w = csv::Writer::from_path(dir.join("plot_rel.csv"))?;
        w.write_record(["distance", "kind", "value"])?;
        let mut rows: Vec<(f64, &String, &DistanceReport)> = self
            .rel
            .iter()
            .map(|(k, v)| (k.parse().unwrap_or(f64::NAN), k, v))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, key, r) in rows {
            for (kind, values) in [("trans_pct", &r.trans_pct), ("rot_deg", &r.rot_deg)] {
                for v in values {
                    w.write_record([key.as_str(), kind, &crate::format::fmt_f64(*v)])?;
                }
            }
        }
        w.flush()
    }

    /// One plain-text table row: label, ATE_T in metres, ATE_R in degrees.
    pub fn table_row(&self, label: &str) -> String {
        let r = self
            .ate_r_deg
            .map(|r| format!("{r:>10.3}"))
            .unwrap_or_else(|| format!("{:>10}", "-"));
        format!("{label:<24}{:>10.3}{r}", self.ate_t_m)
    }
}

pub fn table_header() -> String {
    format!("{:<24}{:>10}{:>10}", "run", "ATE_T [m]", "ATE_R [°]")
}
