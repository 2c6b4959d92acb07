//! Ground-truth beat anchors from the time-aligned ECG channel.
//!
//! R-peaks come from an energy detector: 5-20 Hz band-pass, squaring,
//! a centred 150 ms moving average and an adaptive threshold at 0.4 of the
//! rolling 2 s 95th percentile, with a 300 ms refractory period.

use serde::{Deserialize, Serialize};

use crate::error::{BcgError, Result};
use crate::sigcore::{
    bandpass, ms_to_samples, peak_to_peak, quantile_sorted, BandSpec, Trace, TraceKind,
};

/// Per-beat R-peaks, J search windows and the expected J position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatTruth {
    pub r_peaks: Vec<usize>,
    /// Half-open `[start, end)` J search windows, one per R-peak.
    pub windows: Vec<(usize, usize)>,
    /// Reference J sample per beat used for scoring detections.
    pub expected_j: Vec<usize>,
    pub fs: f64,
}

impl BeatTruth {
    /// Builds windows `[r, min(r + window, next r, len))`.
    pub fn from_r_peaks(
        r_peaks: Vec<usize>,
        fs: f64,
        len: usize,
        window_ms: f64,
        j_latency_ms: f64,
    ) -> Self {
        let width = ms_to_samples(window_ms, fs);
        let windows = r_peaks
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let next = r_peaks.get(k + 1).copied().unwrap_or(len);
                (r, (r + width).min(next).min(len))
            })
            .collect();
        let lat = ms_to_samples(j_latency_ms, fs);
        let expected_j = r_peaks.iter().map(|&r| r + lat).collect();
        Self {
            r_peaks,
            windows,
            expected_j,
            fs,
        }
    }

    pub fn len(&self) -> usize {
        self.r_peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_peaks.is_empty()
    }

    /// Sets every expected J to `r + latency` samples.
    pub fn with_j_latency(mut self, latency: usize) -> Self {
        self.expected_j = self.r_peaks.iter().map(|&r| r + latency).collect();
        self
    }

    /// Keeps only the beats whose expected J lies in `[lo, hi)`.
    pub fn restricted(&self, lo: usize, hi: usize) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| self.expected_j[k] >= lo && self.expected_j[k] < hi)
            .collect();
        Self {
            r_peaks: keep.iter().map(|&k| self.r_peaks[k]).collect(),
            windows: keep.iter().map(|&k| self.windows[k]).collect(),
            expected_j: keep.iter().map(|&k| self.expected_j[k]).collect(),
            fs: self.fs,
        }
    }

    /// R-to-J latency, in samples, of the maximum of the R-aligned ensemble
    /// average of `bcg` over the beat windows.
    pub fn estimate_j_latency(&self, bcg: &Trace) -> Option<usize> {
        let common = self
            .windows
            .iter()
            .map(|&(s, e)| e.saturating_sub(s))
            .filter(|&w| w > 0)
            .min()?;
        let x = bcg.samples();
        let mut acc = vec![0.0; common];
        let mut count = 0usize;
        for &(s, e) in &self.windows {
            if e - s < common || s + common > x.len() {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(&x[s..s + common]) {
                *a += v;
            }
            count += 1;
        }
        if count == 0 {
            return None;
        }
        acc.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RPeakConfig {
    pub band: BandSpec,
    pub integration_ms: f64,
    pub threshold_factor: f64,
    pub percentile: f64,
    pub rolling_s: f64,
    pub refractory_ms: f64,
    /// J search window length after each R-peak.
    pub window_ms: f64,
    /// Default R-to-J latency for the expected J before any estimate.
    pub j_latency_ms: f64,
    pub min_duration_s: f64,
}

impl Default for RPeakConfig {
    fn default() -> Self {
        Self {
            band: BandSpec {
                low_hz: 5.0,
                high_hz: 20.0,
            },
            integration_ms: 150.0,
            threshold_factor: 0.4,
            percentile: 95.0,
            rolling_s: 2.0,
            refractory_ms: 300.0,
            window_ms: 400.0,
            j_latency_ms: 280.0,
            min_duration_s: 5.0,
        }
    }
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let half = width / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(n);
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

/// Rolling percentile over a centred window, evaluated every `step` samples
/// and held in between.
fn rolling_percentile(x: &[f64], window: usize, step: usize, pct: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    let half = window / 2;
    let mut start = 0;
    while start < n {
        let end = (start + step).min(n);
        let centre = (start + end) / 2;
        let a = centre.saturating_sub(half);
        let b = (centre + half).min(n);
        let mut buf = x[a..b].to_vec();
        buf.sort_by(f64::total_cmp);
        let q = quantile_sorted(&buf, pct / 100.0);
        out[start..end].iter_mut().for_each(|v| *v = q);
        start = end;
    }
    out
}

pub fn detect_r_peaks(ecg: &Trace, cfg: &RPeakConfig) -> Result<BeatTruth> {
    if ecg.kind() != TraceKind::Ecg {
        return Err(BcgError::InvalidInput(format!(
            "R-peak detection expects an ecg trace, got {}",
            ecg.kind()
        )));
    }
    let fs = ecg.fs();
    let needed = (cfg.min_duration_s * fs).ceil() as usize;
    if ecg.len() < needed {
        return Err(BcgError::TooShort {
            what: "R-peak detection",
            needed,
            got: ecg.len(),
        });
    }

    if peak_to_peak(ecg.samples()) <= 0.0 {
        return Err(BcgError::EmptyTruth);
    }
    let filtered = bandpass(ecg, cfg.band)?;
    let f = filtered.samples();
    let energy: Vec<f64> = f.iter().map(|v| v * v).collect();
    let mwi = moving_average(&energy, ms_to_samples(cfg.integration_ms, fs).max(1));
    let peak_energy = mwi.iter().cloned().fold(0.0, f64::max);
    if peak_energy <= f64::MIN_POSITIVE {
        return Err(BcgError::EmptyTruth);
    }
    let window = ((cfg.rolling_s * fs) as usize).max(1);
    let step = (window / 8).max(1);
    let thr = rolling_percentile(&mwi, window, step, cfg.percentile);
    let floor = 1e-6 * peak_energy;

    // Candidate per supra-threshold run: the band-passed maximum inside it.
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    let n = mwi.len();
    while i < n {
        let t = (cfg.threshold_factor * thr[i]).max(floor);
        if mwi[i] > t {
            let start = i;
            while i < n && mwi[i] > (cfg.threshold_factor * thr[i]).max(floor) {
                i += 1;
            }
            let (arg, val) = (start..i)
                .map(|k| (k, f[k]))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            candidates.push((arg, val));
        } else {
            i += 1;
        }
    }

    let refractory = ms_to_samples(cfg.refractory_ms, fs);
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    for c in candidates {
        match peaks.last_mut() {
            Some(last) if c.0 - last.0 < refractory => {
                if c.1 > last.1 {
                    *last = c;
                }
            }
            _ => peaks.push(c),
        }
    }
    if peaks.is_empty() {
        return Err(BcgError::EmptyTruth);
    }
    let r: Vec<usize> = peaks.into_iter().map(|p| p.0).collect();
    Ok(BeatTruth::from_r_peaks(
        r,
        fs,
        ecg.len(),
        cfg.window_ms,
        cfg.j_latency_ms,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mexican-hat QRS stand-in centred on each planted beat.
    fn synthetic_ecg(fs: f64, secs: f64, period_s: f64, offset_s: f64) -> (Vec<f64>, Vec<usize>) {
        let n = (fs * secs) as usize;
        let mut x = vec![0.0; n];
        let mut planted = Vec::new();
        let mut t = offset_s;
        let s = 0.012 * fs;
        while t < secs - 0.1 {
            let c = (t * fs).round() as usize;
            planted.push(c);
            let span = (5.0 * s) as usize;
            let lo = c.saturating_sub(span);
            for (i, v) in x.iter_mut().enumerate().take(c + span).skip(lo) {
                let u = (i as f64 - c as f64) / s;
                *v += (1.0 - u * u) * (-0.5 * u * u).exp();
            }
            t += period_s;
        }
        (x, planted)
    }

    fn ecg(x: Vec<f64>, fs: f64) -> Trace {
        Trace::new(x, fs, TraceKind::Ecg, "e").unwrap()
    }

    #[test]
    fn finds_one_peak_per_second() {
        let fs = 1000.0;
        let (x, planted) = synthetic_ecg(fs, 20.0, 1.0, 0.5);
        let truth = detect_r_peaks(&ecg(x, fs), &RPeakConfig::default()).unwrap();
        assert_eq!(truth.r_peaks.len(), planted.len());
        for (r, p) in truth.r_peaks.iter().zip(&planted) {
            assert!((*r as i64 - *p as i64).abs() <= 10);
        }
        let gaps: Vec<f64> = truth
            .r_peaks
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .collect();
        assert!((crate::sigcore::median(&gaps) - 1000.0).abs() <= 10.0);
    }

    #[test]
    fn windows_are_disjoint_and_start_at_r() {
        let fs = 500.0;
        let (x, _) = synthetic_ecg(fs, 12.0, 0.35, 0.3);
        let truth = detect_r_peaks(&ecg(x, fs), &RPeakConfig::default()).unwrap();
        for (k, w) in truth.windows.iter().enumerate() {
            assert_eq!(w.0, truth.r_peaks[k]);
            assert!(w.1 > w.0);
            if let Some(next) = truth.windows.get(k + 1) {
                assert!(w.1 <= next.0);
            }
        }
        assert!(truth
            .r_peaks
            .windows(2)
            .all(|w| w[1] - w[0] >= ms_to_samples(300.0, fs)));
    }

    #[test]
    fn scale_and_offset_do_not_matter() {
        let fs = 1000.0;
        let (x, _) = synthetic_ecg(fs, 10.0, 0.8, 0.4);
        let a = detect_r_peaks(&ecg(x.clone(), fs), &RPeakConfig::default()).unwrap();
        let b = detect_r_peaks(
            &ecg(x.iter().map(|v| 4.2 * v - 3.0).collect(), fs),
            &RPeakConfig::default(),
        )
        .unwrap();
        assert_eq!(a.r_peaks, b.r_peaks);
    }

    #[test]
    fn flat_line_has_no_truth() {
        let t = ecg(vec![0.7; 10_000], 1000.0);
        assert!(matches!(
            detect_r_peaks(&t, &RPeakConfig::default()),
            Err(BcgError::EmptyTruth)
        ));
    }

    #[test]
    fn short_ecg_is_rejected() {
        let t = ecg(vec![0.0; 4000], 1000.0);
        assert!(matches!(
            detect_r_peaks(&t, &RPeakConfig::default()),
            Err(BcgError::TooShort { .. })
        ));
    }

    #[test]
    fn ensemble_latency() {
        let fs = 100.0;
        let r = vec![100, 200, 300, 400];
        let truth = BeatTruth::from_r_peaks(r.clone(), fs, 500, 400.0, 0.0);
        let mut x = vec![0.0; 500];
        for &p in &r {
            x[p + 27] = 1.0;
        }
        let bcg = Trace::new(x, fs, TraceKind::Bcg, "b").unwrap();
        assert_eq!(truth.estimate_j_latency(&bcg), Some(27));
        let restricted = truth.with_j_latency(27).restricted(150, 400);
        assert_eq!(restricted.r_peaks, vec![200, 300]);
    }
}
