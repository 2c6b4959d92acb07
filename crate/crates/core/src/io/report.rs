//! Report serialization: the per-record JSON report (schema-checked), the
//! per-beat, per-sample and marker CSVs, and the cross-record comparison.

use std::sync::OnceLock;

use jsonschema::JSONSchema;
use serde::{Deserialize, Serialize};

use crate::error::{BcgError, Result};
use crate::fiducials::Extremum;
use crate::io::pipeline::{PipelineOutput, TraceSet};
use crate::metrics::EvalReport;
use crate::sigcore::{median, Trace};

pub const SCHEMA_VERSION: u32 = 1;

/// JSON Schema of [`RecordReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub schema_version: u32,
    pub record_id: String,
    pub fs: f64,
    pub samples: usize,
    /// R-peaks found over the whole record.
    pub beats_detected: usize,
    /// R-peaks inside the scored interior.
    pub beats_scored: usize,
    /// R-to-expected-J latency used for scoring.
    pub j_latency_ms: Option<f64>,
    pub reports: Vec<EvalReport>,
}

impl RecordReport {
    pub fn from_output(out: &PipelineOutput) -> Self {
        let fs = out.traces.raw.fs();
        let j_latency_ms = out
            .scoped
            .r_peaks
            .first()
            .zip(out.scoped.expected_j.first())
            .map(|(&r, &j)| (j as f64 - r as f64) * 1000.0 / fs);
        Self {
            schema_version: SCHEMA_VERSION,
            record_id: out.record_id.clone(),
            fs,
            samples: out.traces.raw.len(),
            beats_detected: out.truth.len(),
            beats_scored: out.scoped.len(),
            j_latency_ms,
            reports: out.reports().into_iter().cloned().collect(),
        }
    }

    /// Pretty JSON, validated before it is returned.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        validate_report(&value)?;
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// Parses and validates report JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        validate_report(&value)?;
        Ok(serde_json::from_value(value)?)
    }
}

fn compiled_schema() -> &'static JSONSchema {
    static SCHEMA: OnceLock<JSONSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let doc: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).expect("schema is JSON");
        JSONSchema::compile(&doc).expect("schema compiles")
    })
}

/// Checks `value` against the report schema and the count identities the
/// schema cannot express.
pub fn validate_report(value: &serde_json::Value) -> Result<()> {
    if let Err(errors) = compiled_schema().validate(value) {
        let msgs: Vec<String> = errors
            .map(|e| format!("{} at `{}`", e, e.instance_path))
            .collect();
        return Err(BcgError::Schema(msgs.join("; ")));
    }
    let scored = value["beats_scored"].as_u64();
    for (n, r) in value["reports"]
        .as_array()
        .into_iter()
        .flatten()
        .enumerate()
    {
        let count = |k: &str| r[k].as_u64().unwrap_or(0);
        let (tp, fp, fn_) = (count("tp"), count("fp"), count("fn"));
        let total = count("beats_total");
        if tp + fn_ != total || Some(total) != scored {
            return Err(BcgError::Schema(format!(
                "reports[{n}]: tp + fn = {} but beats_total = {total} and beats_scored = {scored:?}",
                tp + fn_
            )));
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let close = |k: &str, want: f64| (r[k].as_f64().unwrap_or(f64::NAN) - want).abs() <= 1e-9;
        if !close("recall", ratio(tp, tp + fn_)) || !close("precision", ratio(tp, tp + fp)) {
            return Err(BcgError::Schema(format!(
                "reports[{n}]: recall/precision disagree with the counts"
            )));
        }
    }
    Ok(())
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w)?;
    let bytes = w.into_inner().map_err(|e| BcgError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn idx(e: Option<Extremum>) -> String {
    opt(e.map(|e| e.index))
}

/// One row per (variant, scored beat).
pub fn beats_csv(out: &PipelineOutput) -> Result<String> {
    csv_string(|w| {
        w.write_record([
            "record_id",
            "variant",
            "rule",
            "beat",
            "r_peak",
            "expected_j",
            "detected_j",
            "selected_i",
            "h",
            "i",
            "j",
            "k",
            "l",
            "shorter_j",
            "lost_k",
            "i_prom",
            "j_prom",
            "ij_prom",
        ])?;
        for v in &out.variants {
            let (variant, rule) = (v.report.variant.as_str(), v.report.rule.as_str());
            for row in &v.rows {
                let c = row.cycle.as_ref();
                w.write_record([
                    out.record_id.clone(),
                    variant.to_string(),
                    rule.to_string(),
                    row.beat.to_string(),
                    row.r_peak.to_string(),
                    row.expected_j.to_string(),
                    opt(row.detected_j),
                    opt(row.selected_i),
                    idx(c.and_then(|c| c.h)),
                    idx(c.and_then(|c| c.i)),
                    idx(c.and_then(|c| c.j)),
                    idx(c.and_then(|c| c.k)),
                    idx(c.and_then(|c| c.l)),
                    opt(c.map(|c| c.shorter_j)),
                    opt(c.map(|c| c.lost_k)),
                    opt(row.i_prom),
                    opt(row.j_prom),
                    opt(row.ij_prom),
                ])?;
            }
        }
        Ok(())
    })
}

/// Every trace variant, one row per sample.
pub fn traces_csv(traces: &TraceSet) -> Result<String> {
    let all = traces.all();
    let fs = traces.raw.fs();
    csv_string(|w| {
        let mut header = vec!["sample".to_string(), "time_s".to_string()];
        header.extend(all.iter().map(|t| t.kind().as_str().to_string()));
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for n in 0..traces.raw.len() {
            row.clear();
            row.push(n.to_string());
            row.push((n as f64 / fs).to_string());
            row.extend(all.iter().map(|t| t.samples()[n].to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Fiducial markers for overlay plots: R-peaks on the ECG, expected J on
/// bcg, and per variant the detections and labelled H..L points.
pub fn markers_csv(out: &PipelineOutput) -> Result<String> {
    let fs = out.traces.raw.fs();
    csv_string(|w| {
        w.write_record([
            "record_id",
            "trace",
            "marker",
            "beat",
            "sample",
            "time_s",
            "amplitude",
        ])?;
        let mut put = |trace: &Trace, marker: &str, beat: usize, n: usize| {
            w.write_record([
                out.record_id.clone(),
                trace.kind().as_str().to_string(),
                marker.to_string(),
                beat.to_string(),
                n.to_string(),
                (n as f64 / fs).to_string(),
                trace.samples()[n].to_string(),
            ])
        };
        for (b, (&r, &j)) in out
            .scoped
            .r_peaks
            .iter()
            .zip(&out.scoped.expected_j)
            .enumerate()
        {
            put(&out.traces.ecg, "r_peak", b, r)?;
            put(&out.traces.bcg, "expected_j", b, j)?;
        }
        for v in &out.variants {
            let trace = out.traces.get(v.report.variant);
            for row in &v.rows {
                if let Some(n) = row.detected_j {
                    put(trace, "detected_j", row.beat, n)?;
                }
                if let Some(n) = row.selected_i {
                    put(trace, "selected_i", row.beat, n)?;
                }
                if let Some(c) = &row.cycle {
                    for (name, p) in ["h", "i", "j", "k", "l"]
                        .iter()
                        .zip([c.h, c.i, c.j, c.k, c.l])
                    {
                        if let Some(p) = p {
                            put(trace, name, row.beat, p.index)?;
                        }
                    }
                }
            }
        }
        Ok(())
    })
}

/// Per-record rows for every (variant, rule), followed by `ALL` rows that
/// pool the counts and take medians of the per-record medians and ratios.
pub fn compare_csv(records: &[RecordReport]) -> Result<String> {
    let f = |v: Option<f64>| opt(v);
    csv_string(|w| {
        w.write_record([
            "record_id",
            "variant",
            "rule",
            "beats_total",
            "cycles",
            "tp",
            "fp",
            "fn",
            "recall",
            "precision",
            "i_prom",
            "j_prom",
            "ij_prom",
            "ij_delay_ms",
            "jk_delay_ms",
            "shorter_j_ratio",
            "lost_k_ratio",
        ])?;
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for rec in records {
            for r in &rec.reports {
                let key = (r.variant.as_str(), r.rule.as_str());
                if !pairs.contains(&key) {
                    pairs.push(key);
                }
                w.write_record([
                    r.record_id.clone(),
                    key.0.to_string(),
                    key.1.to_string(),
                    r.beats_total.to_string(),
                    r.cycles.to_string(),
                    r.tp.to_string(),
                    r.fp.to_string(),
                    r.fn_.to_string(),
                    r.recall.to_string(),
                    r.precision.to_string(),
                    f(r.i_prom.median),
                    f(r.j_prom.median),
                    f(r.ij_prom.median),
                    f(r.ij_delay_ms.median),
                    f(r.jk_delay_ms.median),
                    r.shorter_j_ratio.to_string(),
                    r.lost_k_ratio.to_string(),
                ])?;
            }
        }
        for (variant, rule) in pairs {
            let group: Vec<&EvalReport> = records
                .iter()
                .flat_map(|rec| &rec.reports)
                .filter(|r| r.variant.as_str() == variant && r.rule.as_str() == rule)
                .collect();
            let sum = |g: fn(&EvalReport) -> usize| group.iter().map(|r| g(r)).sum::<usize>();
            let med = |g: fn(&EvalReport) -> Option<f64>| {
                let v: Vec<f64> = group.iter().filter_map(|r| g(r)).collect();
                (!v.is_empty()).then(|| median(&v))
            };
            let (tp, fp, fn_) = (sum(|r| r.tp), sum(|r| r.fp), sum(|r| r.fn_));
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            w.write_record([
                "ALL".to_string(),
                variant.to_string(),
                rule.to_string(),
                sum(|r| r.beats_total).to_string(),
                sum(|r| r.cycles).to_string(),
                tp.to_string(),
                fp.to_string(),
                fn_.to_string(),
                ratio(tp, tp + fn_).to_string(),
                ratio(tp, tp + fp).to_string(),
                f(med(|r| r.i_prom.median)),
                f(med(|r| r.j_prom.median)),
                f(med(|r| r.ij_prom.median)),
                f(med(|r| r.ij_delay_ms.median)),
                f(med(|r| r.jk_delay_ms.median)),
                f(med(|r| Some(r.shorter_j_ratio))),
                f(med(|r| Some(r.lost_k_ratio))),
            ])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Rule, Series};
    use crate::sigcore::TraceKind;

    fn eval(tp: usize, fp: usize, fn_: usize) -> EvalReport {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        EvalReport {
            record_id: "r".into(),
            variant: TraceKind::Bcj,
            rule: Rule::MaxJ,
            i_prom: vec![1.5, 2.5].into(),
            j_prom: Series::default(),
            ij_prom: vec![3.0].into(),
            recall: ratio(tp, tp + fn_),
            precision: ratio(tp, tp + fp),
            ij_delay_ms: vec![100.0].into(),
            jk_delay_ms: Series::default(),
            ij_skipped: 0,
            jk_skipped: 1,
            shorter_j_ratio: 0.25,
            lost_k_ratio: 0.0,
            cycles: 1,
            beats_total: tp + fn_,
            tp,
            fp,
            fn_,
        }
    }

    fn record(reports: Vec<EvalReport>) -> RecordReport {
        RecordReport {
            schema_version: SCHEMA_VERSION,
            record_id: "r".into(),
            fs: 1000.0,
            samples: 10,
            beats_detected: 5,
            beats_scored: reports.first().map_or(0, |r| r.beats_total),
            j_latency_ms: None,
            reports,
        }
    }

    #[test]
    fn json_round_trip_validates() {
        let r = record(vec![eval(3, 1, 1)]);
        let text = r.to_json().unwrap();
        assert!(text.contains("\"fn\": 1"));
        assert!(text.contains("\"median\": null"));
        assert_eq!(RecordReport::from_json(&text).unwrap(), r);
    }

    #[test]
    fn schema_rejects_missing_and_extra_fields() {
        let mut v = serde_json::to_value(record(vec![eval(3, 1, 1)])).unwrap();
        v["reports"][0]
            .as_object_mut()
            .unwrap()
            .remove("lost_k_ratio");
        let err = validate_report(&v).unwrap_err().to_string();
        assert!(err.contains("lost_k_ratio"), "{err}");

        let mut v = serde_json::to_value(record(vec![])).unwrap();
        v["extra"] = 1.into();
        assert!(validate_report(&v).is_err());
    }

    #[test]
    fn schema_rejects_out_of_range_and_inconsistent_counts() {
        let mut v = serde_json::to_value(record(vec![eval(3, 1, 1)])).unwrap();
        v["reports"][0]["recall"] = 1.5.into();
        assert!(validate_report(&v).is_err());

        let mut v = serde_json::to_value(record(vec![eval(3, 1, 1)])).unwrap();
        v["reports"][0]["tp"] = 2.into();
        assert!(validate_report(&v).is_err());
    }

    #[test]
    fn non_finite_series_values_serialize_as_null() {
        let mut e = eval(1, 0, 0);
        e.i_prom = Series {
            values: vec![f64::NAN],
            median: None,
            mean: None,
        };
        let text = record(vec![e]).to_json().unwrap();
        assert!(text.contains("null"));
    }

    #[test]
    fn compare_pools_counts() {
        let a = record(vec![eval(3, 1, 1)]);
        let b = record(vec![eval(5, 0, 0)]);
        let text = compare_csv(&[a, b]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3]
            .starts_with("ALL,bcj,max_j,9,2,8,1,1,0.8888888888888888,0.8888888888888888,2,"));
    }
}
