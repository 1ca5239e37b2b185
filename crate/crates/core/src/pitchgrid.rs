//! Logarithmic pitch lattice and Hz/cents/bin conversions.
//!
//! The default grid spans [51.91, 830.61] Hz with 384 bins at 12.5 cents
//! each (4 octaves). Bin centers sit at `f_min * 2^(k * cents_per_bin / 1200)`
//! with `f_min` itself the first center, so the nominal upper edge is the
//! boundary of the last bin rather than a center.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Target encoding selected by the training objective.
///
/// - `M1`: categorical bin index (classification).
/// - `M2R2`: continuous cents above `f_min`, quantized to the nearest bin
///   center (regression on quantized targets).
/// - `R1`: raw frequency in Hz, no quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetMode {
    M1,
    M2R2,
    R1,
}

/// The logarithmic frequency lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchGrid {
    pub f_min: f64,
    pub n_bins: usize,
    pub cents_per_bin: f64,
}

impl Default for PitchGrid {
    fn default() -> Self {
        PitchGrid {
            f_min: 51.91,
            n_bins: 384,
            cents_per_bin: 12.5,
        }
    }
}

/// Per-frame ground truth: voicing flag plus the target in the encoding of
/// the active [`TargetMode`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTarget {
    pub voiced: bool,
    /// Categorical bin index (M1 mode); `None` when unvoiced or not in M1 mode.
    pub bin_index: Option<usize>,
    /// Continuous cents above `f_min` (M2/R2 mode); `None` when unvoiced or
    /// not in that mode.
    pub cents_value: Option<f64>,
    /// Raw Hz target (R1 mode); 0.0 when unvoiced.
    pub hz_value: f64,
}

impl FrameTarget {
    /// The unvoiced target, identical in every mode.
    pub fn unvoiced() -> Self {
        FrameTarget {
            voiced: false,
            bin_index: None,
            cents_value: None,
            hz_value: 0.0,
        }
    }

    /// Ground-truth f0 in Hz under `grid`; 0.0 when unvoiced.
    ///
    /// For M1 and M2/R2 targets this is the quantized bin-center frequency;
    /// for R1 it is the raw stored Hz.
    pub fn f0_hz(&self, grid: &PitchGrid) -> f64 {
        if !self.voiced {
            return 0.0;
        }
        if let Some(c) = self.cents_value {
            grid.cents_to_hz(c)
        } else if let Some(k) = self.bin_index {
            grid.bin_to_hz(k).expect("bin index valid by construction")
        } else {
            self.hz_value
        }
    }
}

impl PitchGrid {
    /// Grid with the default 4-octave span redistributed over `n_bins`
    /// (desk-scale configs use coarser lattices like 64 x 75 cents).
    pub fn with_bins(n_bins: usize) -> Result<Self> {
        PitchGrid::new(51.91, n_bins, 4800.0 / n_bins as f64)
    }

    /// Build a validated grid.
    pub fn new(f_min: f64, n_bins: usize, cents_per_bin: f64) -> Result<Self> {
        let grid = PitchGrid {
            f_min,
            n_bins,
            cents_per_bin,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0) || !self.f_min.is_finite() {
            return Err(Error::config(format!("f_min must be positive, got {}", self.f_min)));
        }
        if self.n_bins < 2 {
            return Err(Error::config(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        if !(self.cents_per_bin > 0.0) || !self.cents_per_bin.is_finite() {
            return Err(Error::config(format!(
                "cents_per_bin must be positive, got {}",
                self.cents_per_bin
            )));
        }
        Ok(())
    }

    /// Total grid span in cents (`n_bins * cents_per_bin`).
    pub fn span_cents(&self) -> f64 {
        self.n_bins as f64 * self.cents_per_bin
    }

    /// Exclusive upper edge: the last bin center plus one bin width.
    pub fn upper_edge_hz(&self) -> f64 {
        self.f_min * (self.span_cents() / 1200.0).exp2()
    }

    /// Center frequency of bin `k`: `f_min * 2^(k * cents_per_bin / 1200)`.
    pub fn bin_to_hz(&self, k: usize) -> Result<f64> {
        if k >= self.n_bins {
            return Err(Error::config(format!(
                "bin index {} out of range [0, {})",
                k, self.n_bins
            )));
        }
        Ok(self.f_min * (k as f64 * self.cents_per_bin / 1200.0).exp2())
    }

    /// Cents above `f_min`: `1200 * log2(f / f_min)`.
    pub fn hz_to_cents(&self, f: f64) -> Result<f64> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::numeric(format!("frequency must be positive, got {f}")));
        }
        Ok(1200.0 * (f / self.f_min).log2())
    }

    /// Inverse of [`hz_to_cents`](Self::hz_to_cents).
    pub fn cents_to_hz(&self, cents: f64) -> f64 {
        self.f_min * (cents / 1200.0).exp2()
    }

    /// Nearest bin index for `f`, clamped to `[0, n_bins - 1]`.
    ///
    /// Exact half-way values round toward the higher bin.
    pub fn hz_to_bin(&self, f: f64) -> Result<usize> {
        let cents = self.hz_to_cents(f)?;
        // floor(x + 0.5) rounds half-way cases up
        let k = (cents / self.cents_per_bin + 0.5).floor();
        Ok(k.clamp(0.0, (self.n_bins - 1) as f64) as usize)
    }

    /// Build the per-frame training target for a ground-truth `f0` (0 = unvoiced).
    ///
    /// Out-of-range voiced frequencies clamp to the edge bins.
    pub fn make_frame_target(&self, f0: f64, mode: TargetMode) -> Result<FrameTarget> {
        if !f0.is_finite() || f0 < 0.0 {
            return Err(Error::numeric(format!("f0 must be finite and >= 0, got {f0}")));
        }
        if f0 == 0.0 {
            return Ok(FrameTarget::unvoiced());
        }
        let mut t = FrameTarget {
            voiced: true,
            bin_index: None,
            cents_value: None,
            hz_value: 0.0,
        };
        match mode {
            TargetMode::M1 => {
                t.bin_index = Some(self.hz_to_bin(f0)?);
            }
            TargetMode::M2R2 => {
                t.cents_value = Some(self.hz_to_bin(f0)? as f64 * self.cents_per_bin);
            }
            TargetMode::R1 => {
                t.hz_value = f0;
            }
        }
        Ok(t)
    }
}
