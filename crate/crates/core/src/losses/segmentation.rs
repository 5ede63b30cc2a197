//! Overlap losses on soft foreground probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::volume::{BinaryMask, Volume, Voxel};

pub const DEFAULT_SMOOTH: f64 = 1e-5;

/// Foreground probabilities in `[0, 1]` on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume<T>(Volume<T>);

impl<T: Real + Voxel> ProbabilityVolume<T> {
    pub fn new(volume: Volume<T>) -> Result<Self> {
        if volume.voxels().iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self(volume))
    }

    /// Hard mask as a 0/1 probability map.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self(mask.map(|b| if b { T::one() } else { T::zero() }))
    }

    pub fn volume(&self) -> &Volume<T> {
        &self.0
    }

    pub fn into_volume(self) -> Volume<T> {
        self.0
    }
}

/// Which overlap loss, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegLoss {
    Dice {
        smooth: f64,
    },
    /// `alpha` weights false negatives, `beta` false positives. Raising
    /// `alpha` above `beta` favours recall, which helps when the
    /// foreground is a tiny fraction of the volume.
    Tversky {
        alpha: f64,
        beta: f64,
        smooth: f64,
    },
}

impl Default for SegLoss {
    fn default() -> Self {
        SegLoss::Dice { smooth: DEFAULT_SMOOTH }
    }
}

impl SegLoss {
    pub fn tversky_default() -> Self {
        SegLoss::Tversky {
            alpha: 0.5,
            beta: 0.5,
            smooth: DEFAULT_SMOOTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        let valid = match *self {
            SegLoss::Dice { smooth } => ok(smooth),
            SegLoss::Tversky { alpha, beta, smooth } => ok(alpha) && ok(beta) && ok(smooth),
        };
        if !valid {
            return Err(Error::InvalidConfig(format!(
                "loss parameters must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(c_i, c_g, c_p, smooth)` of the denominator
    /// `2 (c_i Σpg + c_g Σg + c_p Σp) + smooth`.
    fn weights<T: Real>(&self) -> (T, T, T, T) {
        match *self {
            SegLoss::Dice { smooth } => (T::zero(), T::half(), T::half(), T::lit(smooth)),
            SegLoss::Tversky { alpha, beta, smooth } => {
                (T::lit(1.0 - alpha - beta), T::lit(alpha), T::lit(beta), T::lit(smooth))
            }
        }
    }

    fn numerator_denominator<T: Real>(&self, p: &[T], g: &[bool]) -> (T, T) {
        let Sums { overlap, pred, target } = sums(p, g);
        let two = T::two();
        match *self {
            SegLoss::Dice { smooth } => {
                let s = T::lit(smooth);
                (two * overlap + s, pred + target + s)
            }
            SegLoss::Tversky { .. } => {
                let (ci, cg, cp, s) = self.weights::<T>();
                (two * overlap + s, two * (ci * overlap + cg * target + cp * pred) + s)
            }
        }
    }

    pub(crate) fn value_unchecked<T: Real>(&self, p: &[T], g: &[bool]) -> T {
        let (num, den) = self.numerator_denominator(p, g);
        T::one() - num / den
    }

    pub(crate) fn grad_unchecked<T: Real>(&self, p: &[T], g: &[bool]) -> Vec<T> {
        let (num, den) = self.numerator_denominator(p, g);
        let den2 = den * den;
        let two = T::two();
        match *self {
            SegLoss::Dice { .. } => g
                .iter()
                .map(|&gv| {
                    let dn = if gv { two } else { T::zero() };
                    -(dn * den - num) / den2
                })
                .collect(),
            SegLoss::Tversky { .. } => {
                let (ci, _, cp, _) = self.weights::<T>();
                g.iter()
                    .map(|&gv| {
                        let (dn, dd) = if gv {
                            (two, two * (ci + cp))
                        } else {
                            (T::zero(), two * cp)
                        };
                        -(dn * den - num * dd) / den2
                    })
                    .collect()
            }
        }
    }

    /// Loss value; lies in `[0, 1]` for probabilities in `[0, 1]`.
    pub fn value<T: Real + Voxel>(&self, pred: &ProbabilityVolume<T>, target: &BinaryMask) -> Result<T> {
        self.validate()?;
        pred.volume().grid().ensure_same(target.grid(), "segmentation loss")?;
        Ok(self.value_unchecked(pred.volume().voxels(), target.voxels()))
    }
}

struct Sums<T> {
    overlap: T,
    pred: T,
    target: T,
}

fn sums<T: Real>(p: &[T], g: &[bool]) -> Sums<T> {
    let mut s = Sums {
        overlap: T::zero(),
        pred: T::zero(),
        target: T::zero(),
    };
    for (&pv, &gv) in p.iter().zip(g) {
        s.pred = s.pred + pv;
        if gv {
            s.overlap = s.overlap + pv;
            s.target = s.target + T::one();
        }
    }
    s
}

/// `1 - (2 Σpg + s) / (Σp + Σg + s)`.
pub fn soft_dice_loss<T: Real + Voxel>(pred: &ProbabilityVolume<T>, target: &BinaryMask, smooth: f64) -> Result<T> {
    SegLoss::Dice { smooth }.value(pred, target)
}

/// `1 - (2 TP + s) / (2 (TP + α FN + β FP) + s)` with soft counts.
///
/// The factor two keeps `α = β = 0.5` identical to [`soft_dice_loss`];
/// with `smooth = 0` it is the usual `TP / (TP + α FN + β FP)` ratio.
pub fn tversky_loss<T: Real + Voxel>(
    pred: &ProbabilityVolume<T>,
    target: &BinaryMask,
    alpha: f64,
    beta: f64,
    smooth: f64,
) -> Result<T> {
    SegLoss::Tversky { alpha, beta, smooth }.value(pred, target)
}

/// Gradient of the loss with respect to every predicted probability.
pub fn seg_loss_grad<T: Real + Voxel>(
    loss: &SegLoss,
    pred: &ProbabilityVolume<T>,
    target: &BinaryMask,
) -> Result<Volume<T>> {
    loss.validate()?;
    pred.volume().grid().ensure_same(target.grid(), "segmentation loss")?;
    Ok(pred
        .volume()
        .with_data(loss.grad_unchecked(pred.volume().voxels(), target.voxels())))
}
