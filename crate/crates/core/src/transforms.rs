//! The three J-peak enhancing transforms of a `bcj` trace.
//!
//! * `bcc`: negated curvature, `-|x''| / (1 + x'^2)^(3/2) * alpha`
//! * `bcd`: inverted second derivative, `-x'' * alpha`
//! * `bcr`: rising-phase ratio, `bcj[i] * C[i] / C[i - T]` with `C` the
//!   coarse envelope built by [`coarse`].
//!
//! Derivatives are per sample, so on amplitude-normalised input the slope
//! term of the curvature stays small next to one.

use serde::{Deserialize, Serialize};

use crate::error::{BcgError, Result};
use crate::sigcore::{
    bandpass, derivative_samples, mean, peak_to_peak, BandSpec, Trace, TraceKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Rescale so the output peak-to-peak equals the input peak-to-peak.
    MatchRange,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaPolicy {
    pub mode: AlphaMode,
    pub value: f64,
}

impl AlphaPolicy {
    pub const MATCH_RANGE: AlphaPolicy = AlphaPolicy {
        mode: AlphaMode::MatchRange,
        value: 1.0,
    };

    pub fn fixed(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(BcgError::InvalidInput(format!(
                "fixed alpha must be positive, got {value}"
            )));
        }
        Ok(Self {
            mode: AlphaMode::Fixed,
            value,
        })
    }

    fn resolve(&self, input: &[f64], raw: &[f64]) -> f64 {
        match self.mode {
            AlphaMode::Fixed => self.value,
            AlphaMode::MatchRange => {
                let (out, inp) = (peak_to_peak(raw), peak_to_peak(input));
                // A transform of rounding noise is not rescaled up to the input range.
                if out > 1e-12 * inp {
                    inp / out
                } else {
                    1.0
                }
            }
        }
    }
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        Self::MATCH_RANGE
    }
}

/// Bias added to the filtered envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    /// Mean absolute value of the filtered envelope over the whole record.
    Auto,
    /// Mean of the rectified signal before filtering, i.e. the level the
    /// band-pass removed.
    RectifiedMean,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcrParams {
    /// Lag between the current and the reference envelope sample.
    pub t_ms: f64,
    /// Power applied to the rectified signal.
    pub power: u32,
    pub bias: Bias,
    pub coarse_band: BandSpec,
    /// Lower clamp on the envelope, keeps the ratio finite.
    pub floor: f64,
    /// Clamp relative to the bias. Troughs of the filtered envelope between
    /// beats otherwise turn into large gains.
    pub rel_floor: f64,
}

impl Default for BcrParams {
    fn default() -> Self {
        Self {
            t_ms: 300.0,
            power: 1,
            bias: Bias::Auto,
            coarse_band: BandSpec {
                low_hz: 0.5,
                high_hz: 2.0,
            },
            floor: 1e-3,
            rel_floor: 1.0,
        }
    }
}

impl BcrParams {
    pub fn validate(&self, fs: f64) -> Result<usize> {
        let mut bad = Vec::new();
        if !(self.t_ms.is_finite() && self.t_ms > 0.0) {
            bad.push(format!("t_ms must be positive, got {}", self.t_ms));
        }
        let lag = (self.t_ms * fs / 1000.0).round();
        if lag < 1.0 {
            bad.push(format!(
                "t_ms = {} is below one sample at {fs} Hz",
                self.t_ms
            ));
        }
        if self.power < 1 {
            bad.push("power must be at least 1".into());
        }
        if !(self.floor.is_finite() && self.floor > 0.0) {
            bad.push(format!("floor must be positive, got {}", self.floor));
        }
        if !(self.rel_floor.is_finite() && self.rel_floor >= 0.0) {
            bad.push(format!(
                "rel_floor must be non-negative, got {}",
                self.rel_floor
            ));
        }
        if let Bias::Value(b) = self.bias {
            if !b.is_finite() {
                bad.push("bias must be finite".into());
            }
        }
        if bad.is_empty() {
            Ok(lag as usize)
        } else {
            Err(BcgError::InvalidInput(bad.join("; ")))
        }
    }
}

fn expect_bcj(x: &Trace, op: &str) -> Result<()> {
    if x.kind() == TraceKind::Bcj {
        Ok(())
    } else {
        Err(BcgError::InvalidInput(format!(
            "{op} expects a bcj trace, got {}",
            x.kind()
        )))
    }
}

/// Curvature transform. Every output sample is `<= 0`.
pub fn bcc(x_bcj: &Trace, alpha: AlphaPolicy) -> Result<Trace> {
    expect_bcj(x_bcj, "bcc")?;
    let d1 = derivative_samples(x_bcj.samples())?;
    let d2 = derivative_samples(&d1)?;
    let raw: Vec<f64> = d1
        .iter()
        .zip(&d2)
        .map(|(s, c)| -c.abs() / (1.0 + s * s).powf(1.5))
        .collect();
    let a = alpha.resolve(x_bcj.samples(), &raw);
    Ok(x_bcj.derive(raw.into_iter().map(|v| v * a).collect(), TraceKind::Bcc))
}

/// Inverted second derivative transform.
pub fn bcd(x_bcj: &Trace, alpha: AlphaPolicy) -> Result<Trace> {
    expect_bcj(x_bcj, "bcd")?;
    let d1 = derivative_samples(x_bcj.samples())?;
    let raw: Vec<f64> = derivative_samples(&d1)?.into_iter().map(|v| -v).collect();
    let a = alpha.resolve(x_bcj.samples(), &raw);
    Ok(x_bcj.derive(raw.into_iter().map(|v| v * a).collect(), TraceKind::Bcd))
}

/// Coarse envelope: `max(BPF(|x|^P) + B, max(floor, rel_floor * B))`.
///
/// The bias is added after filtering; the band-pass would remove a constant
/// added before it.
pub fn coarse(x_bcj: &Trace, params: &BcrParams) -> Result<Trace> {
    expect_bcj(x_bcj, "coarse")?;
    params.validate(x_bcj.fs())?;
    let rectified: Vec<f64> = x_bcj
        .samples()
        .iter()
        .map(|v| v.abs().powi(params.power as i32))
        .collect();
    let level = mean(&rectified);
    let filtered = bandpass(
        &x_bcj.derive(rectified, TraceKind::Coarse),
        params.coarse_band,
    )?;
    let f = filtered.samples();
    let bias = match params.bias {
        Bias::Auto => mean(&f.iter().map(|v| v.abs()).collect::<Vec<_>>()),
        Bias::RectifiedMean => level,
        Bias::Value(b) => b,
    };
    let floor = params.floor.max(params.rel_floor * bias);
    let c = f.iter().map(|v| (v + bias).max(floor)).collect();
    Ok(x_bcj.derive(c, TraceKind::Coarse))
}

/// Rising-phase ratio transform from a precomputed envelope.
///
/// Samples before the lag have no reference envelope and pass through.
pub fn bcr_with_coarse(x_bcj: &Trace, envelope: &Trace, lag: usize) -> Result<Trace> {
    expect_bcj(x_bcj, "bcr")?;
    if x_bcj.len() <= lag {
        return Err(BcgError::TooShort {
            what: "bcr",
            needed: lag + 1,
            got: x_bcj.len(),
        });
    }
    if envelope.len() != x_bcj.len() {
        return Err(BcgError::InvalidInput(
            "envelope and bcj lengths differ".into(),
        ));
    }
    let x = x_bcj.samples();
    let c = envelope.samples();
    let out = (0..x.len())
        .map(|i| {
            if i < lag {
                x[i]
            } else {
                x[i] * c[i] / c[i - lag]
            }
        })
        .collect();
    Ok(x_bcj.derive(out, TraceKind::Bcr))
}

pub fn bcr(x_bcj: &Trace, params: &BcrParams) -> Result<Trace> {
    let lag = params.validate(x_bcj.fs())?;
    expect_bcj(x_bcj, "bcr")?;
    if x_bcj.len() <= lag {
        return Err(BcgError::TooShort {
            what: "bcr",
            needed: lag + 1,
            got: x_bcj.len(),
        });
    }
    let envelope = coarse(x_bcj, params)?;
    bcr_with_coarse(x_bcj, &envelope, lag)
}
