use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One exported metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// Ordered collection of metric values for a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: Vec<MetricRecord>,
}

impl MetricReport {
    pub fn push(&mut self, run_id: &str, method: &str, metric: impl Into<String>, value: f64) {
        self.records.push(MetricRecord {
            run_id: run_id.to_owned(),
            method: method.to_owned(),
            metric: metric.into(),
            value,
        });
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.records.iter().find(|r| r.metric == metric).map(|r| r.value)
    }

    /// Flat `{metric: value}` object; later duplicates win.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> = self.records.iter().map(|r| (r.metric.as_str(), r.value)).collect();
        let mut s = serde_json::to_string_pretty(&map).expect("metric map serialises");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("run_id,method,metric,value\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.run_id, r.method, r.metric, r.value);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports() {
        let mut r = MetricReport::default();
        r.push("run", "mse", "emd", 0.25);
        r.push("run", "mse", "coverage", 1.0);
        assert_eq!(r.to_csv(), "run_id,method,metric,value\nrun,mse,emd,0.25\nrun,mse,coverage,1\n");
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["emd"], 0.25);
        assert_eq!(r.get("coverage"), Some(1.0));
    }
}
