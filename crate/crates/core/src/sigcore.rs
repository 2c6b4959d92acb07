//! Signal containers, zero-phase band-pass filtering and per-sample
//! differentiation.
//!
//! Everything downstream (transforms, fiducial rules, metrics) works on
//! [`Trace`] values produced here. All functions are pure.

use std::f64::consts::PI;
use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{BcgError, Result};

/// What a trace holds. Checked by the transforms and locate rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Raw,
    Bcg,
    Bcj,
    Bcc,
    Bcd,
    Bcr,
    Coarse,
    Ecg,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Raw => "raw",
            TraceKind::Bcg => "bcg",
            TraceKind::Bcj => "bcj",
            TraceKind::Bcc => "bcc",
            TraceKind::Bcd => "bcd",
            TraceKind::Bcr => "bcr",
            TraceKind::Coarse => "coarse",
            TraceKind::Ecg => "ecg",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A uniformly sampled, finite, non-empty real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<f64>,
    fs: f64,
    kind: TraceKind,
    record_id: String,
}

impl Trace {
    pub fn new(
        samples: Vec<f64>,
        fs: f64,
        kind: TraceKind,
        record_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(BcgError::TooShort {
                what: "trace",
                needed: 1,
                got: 0,
            });
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(BcgError::InvalidInput(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(BcgError::InvalidInput(format!(
                "non-finite sample at index {pos}"
            )));
        }
        Ok(Self {
            samples,
            fs,
            kind,
            record_id: record_id.into(),
        })
    }

    /// Derived trace sharing fs and record id. Callers guarantee finiteness.
    pub(crate) fn derive(&self, samples: Vec<f64>, kind: TraceKind) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Self {
            samples,
            fs: self.fs,
            kind,
            record_id: self.record_id.clone(),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn kind(&self) -> TraceKind {
        self.kind
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same trace relabelled with another kind.
    pub fn with_kind(mut self, kind: TraceKind) -> Self {
        self.kind = kind;
        self
    }

    /// Multiplies every sample by `factor` (which must be finite).
    pub fn scaled(&self, factor: f64) -> Self {
        self.derive(self.samples.iter().map(|v| v * factor).collect(), self.kind)
    }

    pub fn ms_to_samples(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.fs)
    }

    pub fn samples_to_ms(&self, n: f64) -> f64 {
        n * 1000.0 / self.fs
    }
}

pub fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round().max(0.0) as usize
}

/// A time-aligned ECG/BCG pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub fs: f64,
    pub ecg: Vec<f64>,
    pub bcg: Vec<f64>,
}

impl Record {
    pub fn new(id: impl Into<String>, fs: f64, ecg: Vec<f64>, bcg: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if ecg.len() != bcg.len() {
            return Err(BcgError::InvalidInput(format!(
                "record {id}: ecg has {} samples but bcg has {}",
                ecg.len(),
                bcg.len()
            )));
        }
        // Trace::new carries the remaining checks.
        Trace::new(ecg.clone(), fs, TraceKind::Ecg, id.as_str())?;
        Trace::new(bcg.clone(), fs, TraceKind::Raw, id.as_str())?;
        Ok(Self { id, fs, ecg, bcg })
    }

    pub fn len(&self) -> usize {
        self.bcg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bcg.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn ecg_trace(&self) -> Trace {
        Trace {
            samples: self.ecg.clone(),
            fs: self.fs,
            kind: TraceKind::Ecg,
            record_id: self.id.clone(),
        }
    }

    pub fn bcg_trace(&self) -> Trace {
        Trace {
            samples: self.bcg.clone(),
            fs: self.fs,
            kind: TraceKind::Raw,
            record_id: self.id.clone(),
        }
    }

    /// Both channels passed through [`normalize_amplitude`].
    pub fn normalized(&self) -> Result<Self> {
        let ecg = normalize_amplitude(&self.ecg_trace())?.into_samples();
        let bcg = normalize_amplitude(&self.bcg_trace())?.into_samples();
        Ok(Self {
            id: self.id.clone(),
            fs: self.fs,
            ecg,
            bcg,
        })
    }
}

/// Pass band edges in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    /// The 2-10 Hz band used for `bcg`.
    pub const BCG: BandSpec = BandSpec {
        low_hz: 2.0,
        high_hz: 10.0,
    };
    /// The narrow 2-6 Hz J-peak band used for `bcj`.
    pub const BCJ: BandSpec = BandSpec {
        low_hz: 2.0,
        high_hz: 6.0,
    };

    pub fn new(low_hz: f64, high_hz: f64) -> Result<Self> {
        let band = Self { low_hz, high_hz };
        if !(low_hz.is_finite() && high_hz.is_finite() && low_hz > 0.0 && high_hz > low_hz) {
            return Err(band.invalid(f64::NAN, "need 0 < low < high"));
        }
        Ok(band)
    }

    fn invalid(&self, fs: f64, reason: &'static str) -> BcgError {
        BcgError::InvalidBand {
            low_hz: self.low_hz,
            high_hz: self.high_hz,
            fs,
            reason,
        }
    }

    pub fn validate_for(&self, fs: f64) -> Result<()> {
        if !(self.low_hz.is_finite() && self.low_hz > 0.0 && self.high_hz > self.low_hz) {
            return Err(self.invalid(fs, "need 0 < low < high"));
        }
        if self.high_hz >= fs / 2.0 {
            return Err(self.invalid(fs, "upper edge at or above Nyquist"));
        }
        Ok(())
    }

    /// Designed tap count: at least two cycles of the lower edge on each side
    /// of the centre tap.
    pub fn design_taps(&self, fs: f64) -> usize {
        2 * (2.0 * fs / self.low_hz).ceil() as usize + 1
    }

    /// Shortest filter we are willing to apply once the length cap kicks in:
    /// one cycle of the lower edge.
    fn min_taps(&self, fs: f64) -> usize {
        2 * (fs / (2.0 * self.low_hz)).ceil() as usize + 1
    }
}

/// Windowed-sinc (Hamming) band-pass FIR, odd length, unit gain at the
/// geometric band centre.
pub fn design_bandpass(band: BandSpec, fs: f64, taps: usize) -> Vec<f64> {
    assert!(taps % 2 == 1, "tap count must be odd");
    let lo = band.low_hz / fs;
    let hi = band.high_hz / fs;
    let mid = (taps - 1) as f64 / 2.0;
    let sinc_lp = |fc: f64, m: f64| {
        if m == 0.0 {
            2.0 * fc
        } else {
            (2.0 * PI * fc * m).sin() / (PI * m)
        }
    };
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let m = n as f64 - mid;
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            w * (sinc_lp(hi, m) - sinc_lp(lo, m))
        })
        .collect();
    let centre = (band.low_hz * band.high_hz).sqrt();
    let gain = fir_gain(&h, centre / fs);
    h.iter_mut().for_each(|v| *v /= gain);
    h
}

/// Magnitude response of a symmetric FIR at normalised frequency `f`
/// (cycles/sample).
pub fn fir_gain(taps: &[f64], f: f64) -> f64 {
    let mid = (taps.len() - 1) as f64 / 2.0;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, h)| {
            let phase = -2.0 * PI * f * (n as f64 - mid);
            (re + h * phase.cos(), im + h * phase.sin())
        });
    (re * re + im * im).sqrt()
}

/// Tap count actually used for a trace of `len` samples.
pub fn effective_taps(band: BandSpec, fs: f64, len: usize) -> Result<usize> {
    let designed = band.design_taps(fs);
    let mut cap = len / 4;
    if cap.is_multiple_of(2) {
        cap = cap.saturating_sub(1);
    }
    let taps = designed.min(cap);
    let min = band.min_taps(fs);
    if taps < min {
        return Err(BcgError::TooShort {
            what: "band-pass filter",
            needed: 4 * min,
            got: len,
        });
    }
    Ok(taps)
}

/// Zero-phase band-pass filter.
///
/// Applies a linear-phase FIR once and removes its group delay, so output
/// sample `i` lines up with input sample `i`. Edges are extended by mirror
/// reflection before filtering.
pub fn bandpass(x: &Trace, band: BandSpec) -> Result<Trace> {
    band.validate_for(x.fs)?;
    let taps = effective_taps(band, x.fs, x.len())?;
    let h = design_bandpass(band, x.fs, taps);
    let y = filter_zero_phase(x.samples(), &h);
    Ok(x.derive(y, x.kind))
}

/// Convolves `x` with the symmetric kernel `h` and compensates its delay.
/// Requires `h.len()` odd and `h.len() / 2 < x.len()`.
pub(crate) fn filter_zero_phase(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let pad = (h.len() - 1) / 2;
    debug_assert!(pad < n);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| x[k.min(n - 1)]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| x[(n - 1).saturating_sub(k)]));

    let full = fft_convolve(&ext, h);
    full[2 * pad..2 * pad + n].to_vec()
}

fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut fa: Vec<Complex<f64>> = a.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fb.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (p, q) in fa.iter_mut().zip(&fb) {
        *p *= q;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Central first difference in amplitude-per-sample units, one-sided at the
/// two endpoints.
pub fn derivative(x: &Trace) -> Result<Trace> {
    Ok(x.derive(derivative_samples(x.samples())?, x.kind))
}

pub(crate) fn derivative_samples(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(BcgError::TooShort {
            what: "derivative",
            needed: 3,
            got: n,
        });
    }
    let mut d = Vec::with_capacity(n);
    d.push(x[1] - x[0]);
    d.extend(x.windows(3).map(|w| (w[2] - w[0]) / 2.0));
    d.push(x[n - 1] - x[n - 2]);
    Ok(d)
}

/// Maps the trace to zero median and unit inter-quartile range.
///
/// Falls back to the peak-to-peak range as scale when the IQR is negligible
/// (sparse signals such as a clean ECG), which keeps the map affine.
pub fn normalize_amplitude(x: &Trace) -> Result<Trace> {
    let s = x.samples();
    let range = peak_to_peak(s);
    if range <= 0.0 {
        return Err(BcgError::DegenerateSignal("trace is constant"));
    }
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let scale = if iqr > 1e-6 * range { iqr } else { range };
    Ok(x.derive(s.iter().map(|v| (v - median) / scale).collect(), x.kind))
}

pub fn peak_to_peak(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if x.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Median of unsorted data; NaN for an empty slice.
pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}
