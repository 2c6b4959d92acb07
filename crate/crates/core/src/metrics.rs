//! Evaluation metrics: prominence ratios, detection recall/precision,
//! I-J / J-K delays and phenomenon ratios.

use serde::{Deserialize, Serialize};

use crate::ecg::BeatTruth;
use crate::error::{BcgError, Result};
use crate::fiducials::{find_extrema, rises, CyclePoints, Extremum, FiducialConfig, Polarity};
use crate::sigcore::{mean, median, ms_to_samples, Trace, TraceKind};

/// Prominence value used when a fiducial has no rival in its window.
pub const PROMINENCE_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MaxJ,
    MinI,
    MaxIj,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::MaxJ => "max_j",
            Rule::MinI => "min_i",
            Rule::MaxIj => "max_ij",
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn ratio_capped(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).min(PROMINENCE_CAP)
    } else {
        PROMINENCE_CAP
    }
}

fn rivals(
    extrema: &[Extremum],
    own: usize,
    polarity: Polarity,
    span: usize,
) -> impl Iterator<Item = &Extremum> {
    let lo = own.saturating_sub(span);
    let hi = own + span;
    let a = extrema.partition_point(|e| e.index < lo);
    extrema[a..]
        .iter()
        .take_while(move |e| e.index <= hi)
        .filter(move |e| e.polarity == polarity && e.index != own)
}

/// |I| over the strongest rival valley depth within +-T of I.
pub fn i_prominence(c: &CyclePoints, x: &Trace, t_ms: f64) -> Result<f64> {
    let extrema = find_extrema(x, FiducialConfig::default().min_separation_ms);
    i_prominence_in(c, &extrema, ms_to_samples(t_ms, x.fs()))
}

pub fn i_prominence_in(c: &CyclePoints, extrema: &[Extremum], span: usize) -> Result<f64> {
    let i =
        c.i.ok_or_else(|| BcgError::InvalidInput("i-prominence needs an I point".into()))?;
    let rival = rivals(extrema, i.index, Polarity::Valley, span)
        .map(|v| v.amplitude.abs())
        .fold(0.0, f64::max);
    Ok(ratio_capped(i.amplitude.abs(), rival))
}

/// |J| over the tallest rival peak within +-T of J.
pub fn j_prominence(c: &CyclePoints, x: &Trace, t_ms: f64) -> Result<f64> {
    let extrema = find_extrema(x, FiducialConfig::default().min_separation_ms);
    j_prominence_in(c, &extrema, ms_to_samples(t_ms, x.fs()))
}

pub fn j_prominence_in(c: &CyclePoints, extrema: &[Extremum], span: usize) -> Result<f64> {
    let j =
        c.j.ok_or_else(|| BcgError::InvalidInput("j-prominence needs a J point".into()))?;
    let rival = rivals(extrema, j.index, Polarity::Peak, span)
        .map(|p| p.amplitude.abs())
        .fold(0.0, f64::max);
    Ok(ratio_capped(j.amplitude.abs(), rival))
}

/// I-to-J rise over the largest rival valley-to-peak rise lying within
/// `[I - T, J + T]`.
pub fn ij_prominence(c: &CyclePoints, x: &Trace, t_ms: f64) -> Result<f64> {
    let extrema = find_extrema(x, FiducialConfig::default().min_separation_ms);
    ij_prominence_in(c, &extrema, ms_to_samples(t_ms, x.fs()))
}

pub fn ij_prominence_in(c: &CyclePoints, extrema: &[Extremum], span: usize) -> Result<f64> {
    let (Some(i), Some(j)) = (c.i, c.j) else {
        return Err(BcgError::InvalidInput(
            "ij-prominence needs I and J points".into(),
        ));
    };
    let lo = i.index.saturating_sub(span);
    let hi = j.index + span;
    let a = extrema.partition_point(|e| e.index < lo);
    let b = extrema.partition_point(|e| e.index <= hi);
    let rival = rises(&extrema[a..b])
        .filter(|(v, p)| !(v.index == i.index && p.index == j.index))
        .map(|(v, p)| p.amplitude - v.amplitude)
        .fold(0.0, f64::max);
    Ok(ratio_capped(j.amplitude - i.amplitude, rival))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
}

fn safe_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy nearest matching of detections to expected J positions.
///
/// Pairs within `tol_ms` are taken closest first, each detection and each
/// beat used at most once. Unmatched detections are false positives and
/// unmatched beats false negatives.
pub fn score_detection(
    detected: &[Option<Extremum>],
    truth: &BeatTruth,
    tol_ms: f64,
) -> DetectionScore {
    let tol = ms_to_samples(tol_ms.max(0.0), truth.fs);
    let dets: Vec<usize> = detected.iter().flatten().map(|e| e.index).collect();
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (d, &di) in dets.iter().enumerate() {
        // Expected J positions are sorted, so only a contiguous run can match.
        let lo = truth.expected_j.partition_point(|&e| e + tol < di);
        for (b, &e) in truth.expected_j.iter().enumerate().skip(lo) {
            if e > di + tol {
                break;
            }
            pairs.push((di.abs_diff(e), d, b));
        }
    }
    pairs.sort_unstable();
    let mut used_d = vec![false; dets.len()];
    let mut used_b = vec![false; truth.expected_j.len()];
    let mut tp = 0;
    for (_, d, b) in pairs {
        if !used_d[d] && !used_b[b] {
            used_d[d] = true;
            used_b[b] = true;
            tp += 1;
        }
    }
    let fp = dets.len() - tp;
    let fn_ = truth.expected_j.len() - tp;
    DetectionScore {
        tp,
        fp,
        fn_,
        recall: safe_ratio(tp, tp + fn_),
        precision: safe_ratio(tp, tp + fp),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub ij_ms: Vec<f64>,
    pub jk_ms: Vec<f64>,
    pub ij_skipped: usize,
    pub jk_skipped: usize,
}

pub fn delay_stats(cycles: &[CyclePoints], fs: f64) -> DelayStats {
    let mut out = DelayStats::default();
    let ms = |a: usize, b: usize| (b as f64 - a as f64) * 1000.0 / fs;
    for c in cycles {
        match (c.i, c.j) {
            (Some(i), Some(j)) => out.ij_ms.push(ms(i.index, j.index)),
            _ => out.ij_skipped += 1,
        }
        match (c.j, c.k) {
            (Some(j), Some(k)) if !c.lost_k => out.jk_ms.push(ms(j.index, k.index)),
            _ => out.jk_skipped += 1,
        }
    }
    out
}

/// Fractions of cycles flagged shorter-J and lost-K; zero for no cycles.
pub fn phenomenon_ratios(cycles: &[CyclePoints]) -> (f64, f64) {
    let n = cycles.len();
    (
        safe_ratio(cycles.iter().filter(|c| c.shorter_j).count(), n),
        safe_ratio(cycles.iter().filter(|c| c.lost_k).count(), n),
    )
}

/// Per-beat values with median and mean (null when empty).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<f64>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
}

impl From<Vec<f64>> for Series {
    fn from(values: Vec<f64>) -> Self {
        let (median, mean) = if values.is_empty() {
            (None, None)
        } else {
            (Some(median(&values)), Some(mean(&values)))
        };
        Self {
            values,
            median,
            mean,
        }
    }
}

/// Metric bundle for one (variant, rule) pair of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub record_id: String,
    pub variant: TraceKind,
    pub rule: Rule,
    pub i_prom: Series,
    pub j_prom: Series,
    pub ij_prom: Series,
    pub recall: f64,
    pub precision: f64,
    pub ij_delay_ms: Series,
    pub jk_delay_ms: Series,
    pub ij_skipped: usize,
    pub jk_skipped: usize,
    pub shorter_j_ratio: f64,
    pub lost_k_ratio: f64,
    pub cycles: usize,
    pub beats_total: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Field names every serialized [`EvalReport`] carries.
pub const REPORT_FIELDS: &[&str] = &[
    "record_id",
    "variant",
    "rule",
    "i_prom",
    "j_prom",
    "ij_prom",
    "recall",
    "precision",
    "ij_delay_ms",
    "jk_delay_ms",
    "ij_skipped",
    "jk_skipped",
    "shorter_j_ratio",
    "lost_k_ratio",
    "cycles",
    "beats_total",
    "tp",
    "fp",
    "fn",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiducials::Polarity::{Peak, Valley};
    use proptest::prelude::*;

    fn e(index: usize, amplitude: f64, polarity: Polarity) -> Extremum {
        Extremum {
            index,
            amplitude,
            polarity,
        }
    }

    fn cyc(i: Option<Extremum>, j: Option<Extremum>, k: Option<Extremum>) -> CyclePoints {
        CyclePoints {
            h: None,
            i,
            j,
            k,
            l: None,
            shorter_j: false,
            lost_k: false,
            truth_anchor: 0,
        }
    }

    fn truth(expected: Vec<usize>, fs: f64) -> BeatTruth {
        BeatTruth {
            r_peaks: expected.clone(),
            windows: expected.iter().map(|&x| (x, x + 1)).collect(),
            expected_j: expected,
            fs,
        }
    }

    #[test]
    fn i_prominence_examples() {
        let i = e(500, -1.0, Valley);
        let ex = vec![
            e(200, -0.5, Valley),
            i,
            e(800, -0.25, Valley),
            e(650, 0.9, Peak),
        ];
        let c = cyc(Some(i), None, None);
        assert!((i_prominence_in(&c, &ex, 500).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(i_prominence_in(&c, &[i], 500).unwrap(), PROMINENCE_CAP);
        assert!(i_prominence_in(&cyc(None, None, None), &ex, 500).is_err());
    }

    #[test]
    fn j_prominence_examples() {
        let j = e(500, 1.0, Peak);
        let ex = vec![e(300, 0.8, Peak), j, e(700, 0.3, Peak)];
        let c = cyc(None, Some(j), None);
        assert!((j_prominence_in(&c, &ex, 500).unwrap() - 1.25).abs() < 1e-12);
        let shorter = vec![e(400, 1.2, Peak), j, e(600, 0.7, Peak)];
        assert!(j_prominence_in(&c, &shorter, 500).unwrap() < 1.0);
    }

    #[test]
    fn ij_prominence_examples() {
        let i = e(500, -0.5, Valley);
        let j = e(550, 1.0, Peak);
        let ex = vec![
            e(300, -0.3, Valley),
            e(350, 0.3, Peak),
            e(400, -0.4, Valley),
            e(450, 0.5, Peak),
            i,
            j,
            e(600, -0.2, Valley),
            e(650, 0.2, Peak),
        ];
        let c = cyc(Some(i), Some(j), None);
        // Rise 1.5 against rivals {0.6, 0.9, 0.4}.
        assert!((ij_prominence_in(&c, &ex, 500).unwrap() - 1.5 / 0.9).abs() < 1e-3);
        assert_eq!(ij_prominence_in(&c, &[i, j], 500).unwrap(), PROMINENCE_CAP);
        assert!(ij_prominence_in(&cyc(Some(i), None, None), &ex, 500).is_err());
    }

    #[test]
    fn detection_examples() {
        let tr = truth((0..10).map(|k| 1000 + 1000 * k).collect(), 1000.0);
        let all: Vec<Option<Extremum>> = tr
            .expected_j
            .iter()
            .map(|&x| Some(e(x + 5, 1.0, Peak)))
            .collect();
        let s = score_detection(&all, &tr, 50.0);
        assert_eq!((s.tp, s.fp, s.fn_), (10, 0, 0));
        assert_eq!((s.recall, s.precision), (1.0, 1.0));

        let mut some = all.clone();
        some[3] = Some(e(tr.expected_j[3] + 200, 1.0, Peak));
        some[7] = None;
        let s = score_detection(&some, &tr, 50.0);
        assert_eq!((s.tp, s.fp, s.fn_), (8, 1, 2));
        assert!((s.recall - 0.8).abs() < 1e-12);
        assert!((s.precision - 8.0 / 9.0).abs() < 1e-12);

        let s = score_detection(&vec![None; 10], &tr, 50.0);
        assert_eq!((s.recall, s.precision), (0.0, 0.0));
    }

    #[test]
    fn delay_examples() {
        let fs = 1000.0;
        let c = cyc(
            Some(e(280, -1.0, Valley)),
            Some(e(340, 1.0, Peak)),
            Some(e(420, -0.5, Valley)),
        );
        let lost = cyc(Some(e(1280, -1.0, Valley)), Some(e(1340, 1.0, Peak)), None);
        let d = delay_stats(&[c, lost], fs);
        assert_eq!(d.ij_ms, vec![60.0, 60.0]);
        assert_eq!(d.jk_ms, vec![80.0]);
        assert_eq!(d.jk_skipped, 1);
    }

    #[test]
    fn ratio_examples() {
        let cycles = vec![cyc(None, None, None); 10];
        assert_eq!(phenomenon_ratios(&cycles), (0.0, 0.0));
        assert_eq!(phenomenon_ratios(&[]), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn detection_counts_are_consistent(
            beats in proptest::collection::btree_set(0usize..100_000, 0..40),
            offsets in proptest::collection::vec(proptest::option::of(-120i64..120), 40),
            shift in 0usize..5000,
        ) {
            let expected: Vec<usize> = beats.into_iter().map(|b| b + 200).collect();
            let tr = truth(expected.clone(), 1000.0);
            let dets: Vec<Option<Extremum>> = expected
                .iter()
                .zip(&offsets)
                .map(|(&x, o)| o.map(|o| e((x as i64 + o) as usize, 1.0, Peak)))
                .collect();
            let s = score_detection(&dets, &tr, 50.0);
            let n_det = dets.iter().flatten().count();
            prop_assert_eq!(s.tp + s.fn_, expected.len());
            prop_assert_eq!(s.tp + s.fp, n_det);
            prop_assert!((0.0..=1.0).contains(&s.recall) && (0.0..=1.0).contains(&s.precision));

            let shifted = truth(expected.iter().map(|x| x + shift).collect(), 1000.0);
            let sdets: Vec<Option<Extremum>> = dets
                .iter()
                .map(|d| d.map(|d| e(d.index + shift, 1.0, Peak)))
                .collect();
            prop_assert_eq!(score_detection(&sdets, &shifted, 50.0), s);
        }
    }
}
