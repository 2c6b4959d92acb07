//! End-to-end evaluation of one record: filtering, transforms, R-peak truth,
//! the paired J rule per variant and every metric family.

use serde::{Deserialize, Serialize};

use crate::ecg::{detect_r_peaks, BeatTruth, RPeakConfig};
use crate::error::Result;
use crate::fiducials::{
    find_extrema, implied_j, label_cycle_in, locate_i_min_i_in, locate_j_max_ij_in,
    locate_j_max_j_in, CyclePoints, Extremum, FiducialConfig,
};
use crate::metrics::{
    delay_stats, i_prominence_in, ij_prominence_in, j_prominence_in, phenomenon_ratios,
    score_detection, EvalReport, Rule,
};
use crate::sigcore::{bandpass, ms_to_samples, BandSpec, Record, Trace, TraceKind};
use crate::transforms::{bcc, bcd, bcr_with_coarse, coarse, AlphaPolicy, BcrParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub bcg_band: BandSpec,
    pub bcj_band: BandSpec,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            bcg_band: BandSpec::BCG,
            bcj_band: BandSpec::BCJ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub alpha: AlphaPolicy,
    pub bcr: BcrParams,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            alpha: AlphaPolicy::MATCH_RANGE,
            bcr: BcrParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Rival window for the prominence ratios; also the edge margin
    /// excluded from every statistic.
    pub prominence_t_ms: f64,
    /// Detection matching tolerance around the expected J.
    pub match_tol_ms: f64,
    /// Derive the expected J latency from the R-aligned bcg ensemble;
    /// otherwise use the ECG section's `j_latency_ms`.
    pub estimate_j_latency: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            prominence_t_ms: 500.0,
            match_tol_ms: 50.0,
            estimate_j_latency: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filters: FilterConfig,
    pub transforms: TransformConfig,
    pub fiducials: FiducialConfig,
    pub ecg: RPeakConfig,
    pub metrics: MetricsConfig,
}

/// Every derived trace of one record.
#[derive(Debug, Clone)]
pub struct TraceSet {
    pub raw: Trace,
    pub ecg: Trace,
    pub bcg: Trace,
    pub bcj: Trace,
    pub bcc: Trace,
    pub bcd: Trace,
    pub coarse: Trace,
    pub bcr: Trace,
}

impl TraceSet {
    pub fn get(&self, kind: TraceKind) -> &Trace {
        match kind {
            TraceKind::Raw => &self.raw,
            TraceKind::Ecg => &self.ecg,
            TraceKind::Bcg => &self.bcg,
            TraceKind::Bcj => &self.bcj,
            TraceKind::Bcc => &self.bcc,
            TraceKind::Bcd => &self.bcd,
            TraceKind::Coarse => &self.coarse,
            TraceKind::Bcr => &self.bcr,
        }
    }

    /// Traces in export column order.
    pub fn all(&self) -> [&Trace; 8] {
        [
            &self.raw,
            &self.ecg,
            &self.bcg,
            &self.bcj,
            &self.bcc,
            &self.bcd,
            &self.coarse,
            &self.bcr,
        ]
    }
}

/// The (variant, rule) pairs evaluated for every record.
pub const PAIRED_RULES: [(TraceKind, Rule); 4] = [
    (TraceKind::Bcj, Rule::MaxJ),
    (TraceKind::Bcc, Rule::MinI),
    (TraceKind::Bcd, Rule::MinI),
    (TraceKind::Bcr, Rule::MaxIj),
];

/// Normalises the record and computes every trace variant.
pub fn compute_traces(record: &Record, cfg: &PipelineConfig) -> Result<TraceSet> {
    let rec = record.normalized()?;
    let raw = rec.bcg_trace();
    let ecg = rec.ecg_trace();
    let bcg = bandpass(&raw, cfg.filters.bcg_band)?.with_kind(TraceKind::Bcg);
    let bcj = bandpass(&raw, cfg.filters.bcj_band)?.with_kind(TraceKind::Bcj);
    let bcc_t = bcc(&bcj, cfg.transforms.alpha)?;
    let bcd_t = bcd(&bcj, cfg.transforms.alpha)?;
    let lag = cfg.transforms.bcr.validate(bcj.fs())?;
    let coarse_t = coarse(&bcj, &cfg.transforms.bcr)?;
    let bcr_t = bcr_with_coarse(&bcj, &coarse_t, lag)?;
    Ok(TraceSet {
        raw,
        ecg,
        bcg,
        bcj,
        bcc: bcc_t,
        bcd: bcd_t,
        coarse: coarse_t,
        bcr: bcr_t,
    })
}

/// ECG-derived beats with the expected J set, restricted to the scored
/// interior of the record.
pub fn beat_truth(traces: &TraceSet, cfg: &PipelineConfig) -> Result<(BeatTruth, BeatTruth)> {
    let mut truth = detect_r_peaks(&traces.ecg, &cfg.ecg)?;
    let n = traces.raw.len();
    let fs = traces.raw.fs();
    let edge = ms_to_samples(cfg.metrics.prominence_t_ms, fs).max(cfg.transforms.bcr.validate(fs)?);
    if cfg.metrics.estimate_j_latency {
        let interior = truth.restricted(edge, n.saturating_sub(edge));
        if let Some(lat) = interior.estimate_j_latency(&traces.bcg) {
            truth = truth.with_j_latency(lat);
        }
    }
    let scoped = truth.restricted(edge, n.saturating_sub(edge));
    Ok((truth, scoped))
}

/// One beat's detection and labelled cycle for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRow {
    pub beat: usize,
    pub r_peak: usize,
    pub expected_j: usize,
    pub detected_j: Option<usize>,
    /// Selected I for the min(i) rule.
    pub selected_i: Option<usize>,
    pub cycle: Option<CyclePoints>,
    pub i_prom: Option<f64>,
    pub j_prom: Option<f64>,
    pub ij_prom: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub report: EvalReport,
    pub detections: Vec<Option<Extremum>>,
    pub rows: Vec<BeatRow>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub record_id: String,
    pub traces: TraceSet,
    pub truth: BeatTruth,
    pub scoped: BeatTruth,
    pub variants: Vec<VariantResult>,
}

impl PipelineOutput {
    pub fn reports(&self) -> Vec<&EvalReport> {
        self.variants.iter().map(|v| &v.report).collect()
    }

    pub fn report(&self, kind: TraceKind) -> Option<&EvalReport> {
        self.variants
            .iter()
            .map(|v| &v.report)
            .find(|r| r.variant == kind)
    }
}

/// Detections of `rule` on `x`, one slot per scoped beat. For min(i) the
/// second vector holds the selected I, and the J is the first peak after it
/// on the `reference` (bcj) extrema: a curvature trace peaks at inflections,
/// not at J.
pub fn detect(
    extrema: &[Extremum],
    reference: &[Extremum],
    scoped: &BeatTruth,
    rule: Rule,
) -> (Vec<Option<Extremum>>, Vec<Option<Extremum>>) {
    match rule {
        Rule::MaxJ => (locate_j_max_j_in(extrema, scoped), vec![None; scoped.len()]),
        Rule::MaxIj => (
            locate_j_max_ij_in(extrema, scoped),
            vec![None; scoped.len()],
        ),
        Rule::MinI => {
            let is = locate_i_min_i_in(extrema, scoped);
            let js = is
                .iter()
                .map(|i| i.and_then(|i| implied_j(reference, &i)))
                .collect();
            (js, is)
        }
    }
}

/// Nearest peak to `target` within `tol` samples.
fn nearest_peak(extrema: &[Extremum], target: usize, tol: usize) -> Option<Extremum> {
    let a = extrema.partition_point(|e| e.index + tol < target);
    extrema[a..]
        .iter()
        .take_while(|e| e.index <= target + tol)
        .filter(|e| e.is_peak())
        .min_by_key(|e| e.index.abs_diff(target))
        .copied()
}

/// Cycles labelled around the peak nearest each expected J.
pub fn truth_cycles(
    x: &Trace,
    extrema: &[Extremum],
    scoped: &BeatTruth,
    cfg: &PipelineConfig,
) -> Result<Vec<Option<CyclePoints>>> {
    let tol = ms_to_samples(cfg.metrics.match_tol_ms, x.fs());
    (0..scoped.len())
        .map(|b| {
            nearest_peak(extrema, scoped.expected_j[b], tol)
                .map(|j| label_cycle_in(x, extrema, &j, scoped.r_peaks[b], &cfg.fiducials))
                .transpose()
        })
        .collect()
}

pub fn evaluate_variant(
    x: &Trace,
    reference: &[Extremum],
    rule: Rule,
    scoped: &BeatTruth,
    cfg: &PipelineConfig,
) -> Result<VariantResult> {
    let extrema = find_extrema(x, cfg.fiducials.min_separation_ms);
    let (detections, selected_i) = detect(&extrema, reference, scoped, rule);
    let score = score_detection(&detections, scoped, cfg.metrics.match_tol_ms);
    let cycles = truth_cycles(x, &extrema, scoped, cfg)?;
    let span = ms_to_samples(cfg.metrics.prominence_t_ms, x.fs());

    let mut rows = Vec::with_capacity(scoped.len());
    let (mut ip, mut jp, mut ijp) = (Vec::new(), Vec::new(), Vec::new());
    for b in 0..scoped.len() {
        let cycle = cycles[b].clone();
        let (mut i_prom, mut j_prom, mut ij_prom) = (None, None, None);
        if let Some(c) = &cycle {
            if c.i.is_some() {
                i_prom = Some(i_prominence_in(c, &extrema, span)?);
            }
            j_prom = Some(j_prominence_in(c, &extrema, span)?);
            if c.i.is_some() {
                ij_prom = Some(ij_prominence_in(c, &extrema, span)?);
            }
        }
        ip.extend(i_prom);
        jp.extend(j_prom);
        ijp.extend(ij_prom);
        rows.push(BeatRow {
            beat: b,
            r_peak: scoped.r_peaks[b],
            expected_j: scoped.expected_j[b],
            detected_j: detections[b].map(|e| e.index),
            selected_i: selected_i[b].map(|e| e.index),
            cycle,
            i_prom,
            j_prom,
            ij_prom,
        });
    }

    let labelled: Vec<CyclePoints> = cycles.into_iter().flatten().collect();
    let delays = delay_stats(&labelled, x.fs());
    let (shorter_j_ratio, lost_k_ratio) = phenomenon_ratios(&labelled);
    let report = EvalReport {
        record_id: x.record_id().to_string(),
        variant: x.kind(),
        rule,
        i_prom: ip.into(),
        j_prom: jp.into(),
        ij_prom: ijp.into(),
        recall: score.recall,
        precision: score.precision,
        ij_delay_ms: delays.ij_ms.into(),
        jk_delay_ms: delays.jk_ms.into(),
        ij_skipped: delays.ij_skipped,
        jk_skipped: delays.jk_skipped,
        shorter_j_ratio,
        lost_k_ratio,
        cycles: labelled.len(),
        beats_total: scoped.len(),
        tp: score.tp,
        fp: score.fp,
        fn_: score.fn_,
    };
    Ok(VariantResult {
        report,
        detections,
        rows,
    })
}

/// Full evaluation: one report per paired (variant, rule).
pub fn run_pipeline(record: &Record, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let traces = compute_traces(record, cfg)?;
    let (truth, scoped) = beat_truth(&traces, cfg)?;
    let reference = find_extrema(&traces.bcj, cfg.fiducials.min_separation_ms);
    let variants = PAIRED_RULES
        .iter()
        .map(|&(kind, rule)| evaluate_variant(traces.get(kind), &reference, rule, &scoped, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineOutput {
        record_id: record.id.clone(),
        traces,
        truth,
        scoped,
        variants,
    })
}
