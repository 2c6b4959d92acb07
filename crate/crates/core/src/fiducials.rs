//! Extremum scanning, H-I-J-K-L labelling, the three J-locating rules and
//! the shorter-J / lost-K detectors.

use serde::{Deserialize, Serialize};

use crate::ecg::BeatTruth;
use crate::error::{BcgError, Result};
use crate::sigcore::{ms_to_samples, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Peak,
    Valley,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub amplitude: f64,
    pub polarity: Polarity,
}

impl Extremum {
    pub fn is_peak(&self) -> bool {
        self.polarity == Polarity::Peak
    }

    pub fn is_valley(&self) -> bool {
        self.polarity == Polarity::Valley
    }
}

/// Labelled fiducials of one cardiac cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePoints {
    pub h: Option<Extremum>,
    pub i: Option<Extremum>,
    pub j: Option<Extremum>,
    pub k: Option<Extremum>,
    pub l: Option<Extremum>,
    pub shorter_j: bool,
    pub lost_k: bool,
    /// Sample index of the governing R-peak.
    pub truth_anchor: usize,
}

impl CyclePoints {
    /// Indices of the present points, in H..L order.
    pub fn present_indices(&self) -> Vec<usize> {
        [self.h, self.i, self.j, self.k, self.l]
            .iter()
            .flatten()
            .map(|e| e.index)
            .collect()
    }

    pub fn is_ordered(&self) -> bool {
        self.present_indices().windows(2).all(|w| w[0] < w[1])
    }
}

/// Tunables for labelling and phenomenon detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiducialConfig {
    /// Same-polarity extrema closer than this are merged.
    pub min_separation_ms: f64,
    /// Search bound around J when labelling a cycle.
    pub label_span_ms: f64,
    /// Relative K depth below which K counts as lost.
    pub lost_k_depth_ratio: f64,
}

impl Default for FiducialConfig {
    fn default() -> Self {
        Self {
            min_separation_ms: 60.0,
            label_span_ms: 500.0,
            lost_k_depth_ratio: 0.1,
        }
    }
}

/// Strict local extrema with plateau handling: a flat top (bottom) counts
/// once, at its first sample, when both sides fall (rise) away from it.
fn scan_extrema(x: &[f64]) -> Vec<Extremum> {
    let n = x.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i] == x[i - 1] {
            i += 1;
            continue;
        }
        // Walk across a plateau starting at i.
        let mut end = i;
        while end + 1 < n && x[end + 1] == x[i] {
            end += 1;
        }
        if end + 1 >= n {
            break;
        }
        let rising_in = x[i] > x[i - 1];
        let falling_out = x[end + 1] < x[i];
        if rising_in && falling_out {
            out.push(Extremum {
                index: i,
                amplitude: x[i],
                polarity: Polarity::Peak,
            });
        } else if !rising_in && !falling_out {
            out.push(Extremum {
                index: i,
                amplitude: x[i],
                polarity: Polarity::Valley,
            });
        }
        i = end + 1;
    }
    out
}

/// Greedy same-polarity suppression: strongest first (highest peak, lowest
/// valley, earliest index on ties); an extremum survives if no already kept
/// one of its polarity lies within `min_sep` samples.
fn suppress(extrema: Vec<Extremum>, min_sep: usize) -> Vec<Extremum> {
    if min_sep == 0 || extrema.len() < 2 {
        return extrema;
    }
    let mut order: Vec<usize> = (0..extrema.len()).collect();
    let strength = |e: &Extremum| match e.polarity {
        Polarity::Peak => e.amplitude,
        Polarity::Valley => -e.amplitude,
    };
    order.sort_by(|&a, &b| {
        strength(&extrema[b])
            .total_cmp(&strength(&extrema[a]))
            .then(extrema[a].index.cmp(&extrema[b].index))
    });
    let mut kept = vec![false; extrema.len()];
    let mut kept_peaks: Vec<usize> = Vec::new();
    let mut kept_valleys: Vec<usize> = Vec::new();
    for idx in order {
        let e = &extrema[idx];
        let list = match e.polarity {
            Polarity::Peak => &mut kept_peaks,
            Polarity::Valley => &mut kept_valleys,
        };
        // `list` stays sorted, so only the neighbours of the insertion point matter.
        let pos = list.partition_point(|&k| k < e.index);
        let near_left = pos > 0 && e.index - list[pos - 1] < min_sep;
        let near_right = pos < list.len() && list[pos] - e.index < min_sep;
        if !(near_left || near_right) {
            list.insert(pos, e.index);
            kept[idx] = true;
        }
    }
    extrema
        .into_iter()
        .zip(kept)
        .filter_map(|(e, k)| k.then_some(e))
        .collect()
}

/// All local extrema of `x`, thinned by same-polarity suppression, sorted by
/// index.
pub fn find_extrema(x: &Trace, min_separation_ms: f64) -> Vec<Extremum> {
    let min_sep = ms_to_samples(min_separation_ms.max(0.0), x.fs());
    suppress(scan_extrema(x.samples()), min_sep)
}

fn in_window(extrema: &[Extremum], start: usize, end: usize) -> &[Extremum] {
    let a = extrema.partition_point(|e| e.index < start);
    let b = extrema.partition_point(|e| e.index < end);
    &extrema[a..b]
}

/// max(j): per beat window, the highest peak.
pub fn locate_j_max_j(x: &Trace, anchors: &BeatTruth) -> Vec<Option<Extremum>> {
    let extrema = find_extrema(x, FiducialConfig::default().min_separation_ms);
    locate_j_max_j_in(&extrema, anchors)
}

pub fn locate_j_max_j_in(extrema: &[Extremum], anchors: &BeatTruth) -> Vec<Option<Extremum>> {
    anchors
        .windows
        .iter()
        .map(|&(s, e)| {
            in_window(extrema, s, e)
                .iter()
                .filter(|p| p.is_peak())
                .fold(None, |best: Option<Extremum>, p| match best {
                    Some(b) if b.amplitude >= p.amplitude => Some(b),
                    _ => Some(*p),
                })
        })
        .collect()
}

/// min(i): per beat window, the deepest valley.
pub fn locate_i_min_i(x: &Trace, anchors: &BeatTruth) -> Vec<Option<Extremum>> {
    let extrema = find_extrema(x, FiducialConfig::default().min_separation_ms);
    locate_i_min_i_in(&extrema, anchors)
}

pub fn locate_i_min_i_in(extrema: &[Extremum], anchors: &BeatTruth) -> Vec<Option<Extremum>> {
    anchors
        .windows
        .iter()
        .map(|&(s, e)| {
            in_window(extrema, s, e)
                .iter()
                .filter(|v| v.is_valley())
                .fold(None, |best: Option<Extremum>, v| match best {
                    Some(b) if b.amplitude <= v.amplitude => Some(b),
                    _ => Some(*v),
                })
        })
        .collect()
}

/// The J implied by a selected I: the first peak after it.
pub fn implied_j(extrema: &[Extremum], i: &Extremum) -> Option<Extremum> {
    let from = extrema.partition_point(|e| e.index <= i.index);
    extrema[from..].iter().find(|e| e.is_peak()).copied()
}

/// max(ij): per beat window, the peak ending the largest valley-to-peak rise.
pub fn locate_j_max_ij(x: &Trace, anchors: &BeatTruth) -> Vec<Option<Extremum>> {
    let extrema = find_extrema(x, FiducialConfig::default().min_separation_ms);
    locate_j_max_ij_in(&extrema, anchors)
}

pub fn locate_j_max_ij_in(extrema: &[Extremum], anchors: &BeatTruth) -> Vec<Option<Extremum>> {
    anchors
        .windows
        .iter()
        .map(|&(s, e)| {
            let best = rises(in_window(extrema, s, e)).fold(
                None,
                |best: Option<(f64, Extremum)>, (v, p)| {
                    let rise = p.amplitude - v.amplitude;
                    match best {
                        Some((r, _)) if r >= rise => best,
                        _ => Some((rise, *p)),
                    }
                },
            );
            best.map(|(_, p)| p)
        })
        .collect()
}

/// Consecutive valley -> peak pairs.
pub fn rises(extrema: &[Extremum]) -> impl Iterator<Item = (&Extremum, &Extremum)> {
    extrema
        .windows(2)
        .filter(|w| w[0].is_valley() && w[1].is_peak())
        .map(|w| (&w[0], &w[1]))
}

fn is_peak_at(x: &[f64], j: usize) -> bool {
    if j == 0 || j + 1 >= x.len() || x[j] <= x[j - 1] {
        return false;
    }
    let mut end = j;
    while end + 1 < x.len() && x[end + 1] == x[j] {
        end += 1;
    }
    end + 1 < x.len() && x[end + 1] < x[j]
}

/// Labels H, I, J, K, L around the peak at `j` and sets both phenomenon
/// flags.
pub fn label_cycle(x: &Trace, j: &Extremum) -> Result<CyclePoints> {
    let cfg = FiducialConfig::default();
    let extrema = find_extrema(x, cfg.min_separation_ms);
    label_cycle_in(x, &extrema, j, 0, &cfg)
}

/// [`label_cycle`] against precomputed extrema.
pub fn label_cycle_in(
    x: &Trace,
    extrema: &[Extremum],
    j: &Extremum,
    truth_anchor: usize,
    cfg: &FiducialConfig,
) -> Result<CyclePoints> {
    if j.index >= x.len() || !is_peak_at(x.samples(), j.index) {
        return Err(BcgError::InvalidFiducial {
            index: j.index,
            reason: "J must be a local maximum of the trace",
        });
    }
    let span = x.ms_to_samples(cfg.label_span_ms);
    let lo = j.index.saturating_sub(span);
    let hi = j.index + span;

    let split = extrema.partition_point(|e| e.index < j.index);
    let before = &extrema[..split];
    let after_start = extrema.partition_point(|e| e.index <= j.index);
    let after = &extrema[after_start..];

    let last_before = |pol: Polarity, limit: usize| {
        before
            .iter()
            .rev()
            .take_while(|e| e.index >= lo)
            .find(|e| e.polarity == pol && e.index < limit)
            .copied()
    };
    let first_after = |pol: Polarity, from: usize| {
        after
            .iter()
            .take_while(|e| e.index <= hi)
            .find(|e| e.polarity == pol && e.index > from)
            .copied()
    };

    let i = last_before(Polarity::Valley, j.index);
    let h = i.and_then(|i| last_before(Polarity::Peak, i.index));
    let k = first_after(Polarity::Valley, j.index);
    let l = k.and_then(|k| first_after(Polarity::Peak, k.index));

    let mut c = CyclePoints {
        h,
        i,
        j: Some(Extremum {
            index: j.index,
            amplitude: x.samples()[j.index],
            polarity: Polarity::Peak,
        }),
        k,
        l,
        shorter_j: false,
        lost_k: false,
        truth_anchor,
    };
    c.shorter_j = is_shorter_j(&c)?;
    c.lost_k = is_lost_k(&c, cfg.lost_k_depth_ratio)?;
    Ok(c)
}

/// J lower than the preceding (H) or following (L) maximum.
pub fn is_shorter_j(c: &CyclePoints) -> Result<bool> {
    let j =
        c.j.ok_or_else(|| BcgError::InvalidInput("shorter-J test needs a J point".into()))?;
    let taller = |p: Option<Extremum>| p.is_some_and(|p| p.amplitude > j.amplitude);
    Ok(taller(c.h) || taller(c.l))
}

/// K absent, or its depth below the J-L chord smaller than `depth_ratio`
/// times the I-J rise. Without L the chord is flat at the J level; without I
/// the J amplitude stands in for the rise.
pub fn is_lost_k(c: &CyclePoints, depth_ratio: f64) -> Result<bool> {
    let j =
        c.j.ok_or_else(|| BcgError::InvalidInput("lost-K test needs a J point".into()))?;
    let Some(k) = c.k else {
        return Ok(true);
    };
    let chord = match c.l {
        Some(l) if l.index > k.index => {
            let t = (k.index - j.index) as f64 / (l.index - j.index) as f64;
            j.amplitude + (l.amplitude - j.amplitude) * t
        }
        _ => j.amplitude,
    };
    let depth = chord - k.amplitude;
    let scale = match c.i {
        Some(i) => j.amplitude - i.amplitude,
        None => j.amplitude.abs(),
    };
    Ok(depth < depth_ratio * scale)
}
