use super::PruneMask;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2;

/// Stochastic uniform quantizer with `2^bits` knobs spanning
/// `[g_min, g_max]` of the absolute gradient values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizerSpec {
    bits: u32,
}

impl QuantizerSpec {
    pub const MAX_BITS: u32 = 32;

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(Error::input(format!(
                "quantizer bits {bits} not in [1, {}]",
                Self::MAX_BITS
            )));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn knob_count(&self) -> u64 {
        1u64 << self.bits
    }

    pub fn interval_count(&self) -> u64 {
        self.knob_count() - 1
    }
}

/// Knob grid for one tensor.
struct Grid {
    g_min: f64,
    g_max: f64,
    step: f64,
    intervals: u64,
}

impl Grid {
    fn knob(&self, u: u64) -> f64 {
        if u == 0 {
            self.g_min
        } else if u >= self.intervals {
            self.g_max
        } else {
            self.g_min + u as f64 * self.step
        }
    }

    /// Index of the knob at or just below `a`.
    fn lower_index(&self, a: f64) -> u64 {
        let s = ((a - self.g_min) / self.step).floor();
        let mut lo = if s <= 0.0 {
            0
        } else {
            (s as u64).min(self.intervals)
        };
        while lo > 0 && self.knob(lo) > a {
            lo -= 1;
        }
        while lo < self.intervals && self.knob(lo + 1) <= a {
            lo += 1;
        }
        lo
    }

    fn quantize(&self, g: f64, rng: &mut Rng) -> f64 {
        let a = g.abs();
        let lo = self.lower_index(a);
        let n_lo = self.knob(lo);
        if a == n_lo {
            return g;
        }
        let n_hi = self.knob(lo + 1);
        let p_up = (a - n_lo) / (n_hi - n_lo);
        let level = if rng.uniform() < p_up { n_hi } else { n_lo };
        if g < 0.0 {
            -level
        } else {
            level
        }
    }
}

/// Quantizes every entry of `grad`; the range is taken over all entries.
pub fn quantize(grad: &Tensor2, spec: &QuantizerSpec, rng: &mut Rng) -> Tensor2 {
    quantize_support(grad, None, spec, rng)
}

/// Quantizes the entries kept by `mask`. The knob range is computed over the
/// kept support only; pruned entries are returned unchanged.
pub fn quantize_masked(
    grad: &Tensor2,
    mask: &PruneMask,
    spec: &QuantizerSpec,
    rng: &mut Rng,
) -> Result<Tensor2> {
    if mask.shape() != grad.shape() {
        return Err(Error::dim(format!(
            "mask is {:?} but gradient is {:?}",
            mask.shape(),
            grad.shape()
        )));
    }
    Ok(quantize_support(grad, Some(mask.keep()), spec, rng))
}

fn quantize_support(
    grad: &Tensor2,
    support: Option<&[bool]>,
    spec: &QuantizerSpec,
    rng: &mut Rng,
) -> Tensor2 {
    let in_support = |i: usize| support.is_none_or(|s| s[i]);
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for (i, &g) in grad.data().iter().enumerate() {
        if in_support(i) {
            g_min = g_min.min(g.abs());
            g_max = g_max.max(g.abs());
        }
    }
    // Empty support or a single-valued range: the rounding probabilities are
    // 0/0, pass through.
    if !(g_max > g_min) {
        return grad.clone();
    }
    let intervals = spec.interval_count();
    let grid = Grid {
        g_min,
        g_max,
        step: (g_max - g_min) / intervals as f64,
        intervals,
    };
    let mut out = grad.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if in_support(i) {
            *v = grid.quantize(*v, rng);
        }
    }
    out
}
