//! Synthetic ECG + BCG records with known fiducial positions.
//!
//! Each beat renders five Gaussian lobes (H, I, J, K, L) at fixed latencies
//! after the beat onset, and a QRS-like wavelet on the ECG channel at the
//! onset itself. The planted positions are returned as ground truth.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{BcgError, Result};
use crate::fiducials::{CyclePoints, Extremum, Polarity};
use crate::sigcore::{mean, ms_to_samples, Record};

/// One Gaussian lobe: signed amplitude, centre latency after beat onset and
/// standard deviation, both in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amplitude: f64,
    pub latency_ms: f64,
    pub width_ms: f64,
}

impl Wave {
    pub const fn new(amplitude: f64, latency_ms: f64, width_ms: f64) -> Self {
        Self {
            amplitude,
            latency_ms,
            width_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexTemplate {
    pub h: Wave,
    pub i: Wave,
    pub j: Wave,
    pub k: Wave,
    pub l: Wave,
}

impl ComplexTemplate {
    pub fn waves(&self) -> [Wave; 5] {
        [self.h, self.i, self.j, self.k, self.l]
    }

    /// Same latencies with the I lobe narrower than the K lobe, so the
    /// H-I-J angle is sharper than the J-K-L angle.
    pub fn sharper_i() -> Self {
        let mut t = Self::default();
        t.i = Wave::new(-1.0, t.i.latency_ms, 12.0);
        t.k.width_ms = 65.0;
        t
    }

    /// Narrow K close to a broad L. Once most of the K energy moves to the
    /// narrow part, a J-band trace no longer resolves it.
    pub fn buried_k() -> Self {
        Self {
            k: Wave::new(-0.7, 340.0, 20.0),
            l: Wave::new(0.7, 388.0, 58.0),
            ..Self::default()
        }
    }
}

impl Default for ComplexTemplate {
    fn default() -> Self {
        Self {
            h: Wave::new(0.25, 80.0, 35.0),
            i: Wave::new(-0.6, 180.0, 28.0),
            j: Wave::new(1.0, 280.0, 35.0),
            k: Wave::new(-0.6, 360.0, 25.0),
            l: Wave::new(0.4, 440.0, 50.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub fs: f64,
    pub duration_s: f64,
    pub hr_bpm: f64,
    /// Standard deviation of the Gaussian jitter on each beat onset.
    pub hrv_jitter_ms: f64,
    pub template: ComplexTemplate,
    /// Fraction of beats whose H or L lobe is raised 20% above J.
    pub shorter_j_fraction: f64,
    /// Fraction of the K depth carried by a zero-area half-width component
    /// (energy near 8 Hz); the rest stays in a lobe of the template width.
    pub k_band_energy: f64,
    /// Additive white noise SNR per channel; infinite disables noise.
    pub noise_snr_db: f64,
    pub seed: u64,
    /// Onset of the first beat.
    pub first_onset_ms: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            fs: 1000.0,
            duration_s: 120.0,
            hr_bpm: 60.0,
            hrv_jitter_ms: 0.0,
            template: ComplexTemplate::default(),
            shorter_j_fraction: 0.0,
            k_band_energy: 0.0,
            noise_snr_db: f64::INFINITY,
            seed: 0,
            first_onset_ms: 1000.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.fs.is_finite() && self.fs >= 100.0) {
            bad.push(format!("fs must be >= 100 Hz (got {})", self.fs));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            bad.push(format!(
                "duration_s must be positive (got {})",
                self.duration_s
            ));
        }
        if !(30.0..=180.0).contains(&self.hr_bpm) {
            bad.push(format!("hr_bpm must be in [30, 180] (got {})", self.hr_bpm));
        }
        if !(self.hrv_jitter_ms >= 0.0 && self.hrv_jitter_ms.is_finite()) {
            bad.push(format!(
                "hrv_jitter_ms must be non-negative (got {})",
                self.hrv_jitter_ms
            ));
        }
        for (name, v) in [
            ("shorter_j_fraction", self.shorter_j_fraction),
            ("k_band_energy", self.k_band_energy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                bad.push(format!("{name} must be in [0, 1] (got {v})"));
            }
        }
        if self.noise_snr_db.is_nan() {
            bad.push("noise_snr_db must not be NaN".into());
        }
        if !(self.first_onset_ms.is_finite() && self.first_onset_ms >= 0.0) {
            bad.push("first_onset_ms must be non-negative".into());
        }
        let w = self.template.waves();
        if !w.windows(2).all(|p| p[0].latency_ms < p[1].latency_ms) {
            bad.push("template latencies must satisfy H < I < J < K < L".into());
        }
        if w.iter()
            .any(|w| !(w.width_ms.is_finite() && w.width_ms > 0.0) || !w.amplitude.is_finite())
        {
            bad.push("template widths must be positive and amplitudes finite".into());
        }
        if w[0].latency_ms < 0.0 {
            bad.push("template latencies must be non-negative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(BcgError::InvalidSpec(bad))
        }
    }

    pub fn record_id(&self) -> String {
        format!("synth-{}", self.seed)
    }
}

/// Generated record plus the planted cycle of every beat.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub record: Record,
    pub truth: Vec<CyclePoints>,
    /// Beat onsets (the planted R-peak positions).
    pub onsets: Vec<usize>,
}

fn add_lobe(x: &mut [f64], fs: f64, centre: f64, amplitude: f64, width_ms: f64) {
    let sigma = width_ms * fs / 1000.0;
    let reach = (6.0 * sigma).ceil() as isize;
    let c = centre.round() as isize;
    let n = x.len() as isize;
    for i in (c - reach).max(0)..(c + reach + 1).min(n) {
        let u = (i as f64 - centre) / sigma;
        x[i as usize] += amplitude * (-0.5 * u * u).exp();
    }
}

fn add_noise(x: &mut [f64], snr_db: f64, rng: &mut ChaCha8Rng) {
    if !snr_db.is_finite() {
        return;
    }
    let power = mean(&x.iter().map(|v| v * v).collect::<Vec<_>>());
    let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    if sd > 0.0 {
        let normal = Normal::new(0.0, sd).expect("finite sd");
        x.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let fs = spec.fs;
    let n = (spec.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ibi_ms = 60_000.0 / spec.hr_bpm;
    let tail_ms = spec.template.l.latency_ms + 3.0 * spec.template.l.width_ms;

    // Onsets with Gaussian jitter, kept at least 300 ms apart.
    let jitter = Normal::new(0.0, spec.hrv_jitter_ms.max(1e-12)).expect("valid sd");
    let mut onsets_ms: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let mut t = spec.first_onset_ms + k as f64 * ibi_ms;
        if spec.hrv_jitter_ms > 0.0 {
            t += jitter.sample(&mut rng);
        }
        if let Some(&prev) = onsets_ms.last() {
            t = t.max(prev + 300.0);
        }
        if t + tail_ms >= spec.duration_s * 1000.0 {
            break;
        }
        onsets_ms.push(t);
        k += 1;
    }

    let beats = onsets_ms.len();
    let shorter_count = (spec.shorter_j_fraction * beats as f64).round() as usize;
    let mut order: Vec<usize> = (0..beats).collect();
    order.shuffle(&mut rng);
    let mut shorter = vec![None; beats];
    for &b in &order[..shorter_count] {
        // true: raise H, false: raise L.
        shorter[b] = Some(rng.gen_bool(0.5));
    }

    let tpl = spec.template;
    let mut bcg = vec![0.0; n];
    let mut ecg = vec![0.0; n];
    let mut truth = Vec::with_capacity(beats);
    let mut onsets = Vec::with_capacity(beats);
    let to_samples = |ms: f64| ms * fs / 1000.0;

    for (b, &t0) in onsets_ms.iter().enumerate() {
        let mut amps = tpl.waves().map(|w| w.amplitude);
        match shorter[b] {
            Some(true) => amps[0] = 1.2 * amps[2],
            Some(false) => amps[4] = 1.2 * amps[2],
            None => {}
        }
        let waves = tpl.waves();
        let mut points = [None; 5];
        for (w, (wave, &amp)) in waves.iter().zip(amps.iter()).enumerate() {
            let centre = to_samples(t0 + wave.latency_ms);
            if w == 3 {
                let e = spec.k_band_energy;
                add_lobe(&mut bcg, fs, centre, (1.0 - e) * amp, wave.width_ms);
                // Zero-area difference of Gaussians: same centre depth, but
                // its energy sits above the narrow J band.
                add_lobe(&mut bcg, fs, centre, 2.0 * e * amp, wave.width_ms / 2.0);
                add_lobe(&mut bcg, fs, centre, -e * amp, wave.width_ms);
            } else {
                add_lobe(&mut bcg, fs, centre, amp, wave.width_ms);
            }
            points[w] = Some(Extremum {
                index: centre.round() as usize,
                amplitude: amp,
                polarity: if amp >= 0.0 {
                    Polarity::Peak
                } else {
                    Polarity::Valley
                },
            });
        }

        let r = to_samples(t0);
        add_lobe(&mut ecg, fs, r, 1.0, 10.0);
        add_lobe(&mut ecg, fs, r - to_samples(25.0), -0.15, 8.0);
        add_lobe(&mut ecg, fs, r + to_samples(25.0), -0.25, 8.0);
        add_lobe(&mut ecg, fs, r + to_samples(250.0), 0.2, 40.0);

        onsets.push(r.round() as usize);
        truth.push(CyclePoints {
            h: points[0],
            i: points[1],
            j: points[2],
            k: points[3],
            l: points[4],
            shorter_j: shorter[b].is_some(),
            lost_k: false,
            truth_anchor: r.round() as usize,
        });
    }

    add_noise(&mut bcg, spec.noise_snr_db, &mut rng);
    add_noise(&mut ecg, spec.noise_snr_db, &mut rng);

    let record = Record::new(spec.record_id(), fs, ecg, bcg)?;
    Ok(SynthOutput {
        record,
        truth,
        onsets,
    })
}

/// Planted position of `wave` (0 = H .. 4 = L) for each beat, in samples.
pub fn planted_indices(out: &SynthOutput, wave: usize) -> Vec<usize> {
    out.truth
        .iter()
        .filter_map(|c| [c.h, c.i, c.j, c.k, c.l][wave].map(|e| e.index))
        .collect()
}

/// Latency of the J lobe in samples.
pub fn j_latency_samples(spec: &SynthSpec) -> usize {
    ms_to_samples(spec.template.j.latency_ms, spec.fs)
}
