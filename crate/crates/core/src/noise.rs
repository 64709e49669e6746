//! Three-point noise atoms `e_k` and the per-scale law families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Centered law on `{-v, 0, +v}` with `P(+v) = P(-v) = p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePointLaw {
    v: f64,
    p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawMoments {
    pub l1: f64,
    pub l2sq: f64,
}

impl ThreePointLaw {
    pub fn new(v: f64, p: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite() && p > 0.0 && p <= 0.5) {
            return Err(Error::InvalidLaw { v, p });
        }
        Ok(Self { v, p })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn moments(&self) -> LawMoments {
        LawMoments { l1: 2.0 * self.v * self.p, l2sq: 2.0 * self.v * self.v * self.p }
    }

    /// Maps a uniform `u` in `[0,1)` to `+v`, `-v` or `0`.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        if u < self.p {
            self.v
        } else if u < 2.0 * self.p {
            -self.v
        } else {
            0.0
        }
    }

    /// Draws the atom addressed by `key`.
    pub fn sample(&self, key: &StreamKey) -> f64 {
        self.quantile(key.uniform())
    }
}

/// `{l1 = 2vp, l2sq = 2v^2 p}`.
pub fn law_moments(law: &ThreePointLaw) -> LawMoments {
    law.moments()
}

/// Draws the atom addressed by `key`.
pub fn sample_atom(law: &ThreePointLaw, key: &StreamKey) -> f64 {
    law.sample(key)
}

/// How `(v_k, p_k)` depend on the scale index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum LawFamily {
    /// `v_k = k^2 log(k+1)^2`, `p_k = 1 / (2 k^2 log(k+1)^4)`.
    L1NotL2,
    /// `v_k = k^alpha`, `p_k = 1 / (2 k^5 log(k+1)^2)`, `alpha > 4`.
    Superlinear { alpha: f64 },
    /// The same law at every scale.
    Custom { v: f64, p: f64 },
}

impl LawFamily {
    pub fn superlinear(alpha: f64) -> Result<Self> {
        let fam = LawFamily::Superlinear { alpha };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LawFamily::L1NotL2 => Ok(()),
            LawFamily::Superlinear { alpha } => {
                if alpha > 4.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("alpha must exceed 4, got {alpha}")))
                }
            }
            LawFamily::Custom { v, p } => ThreePointLaw::new(v, p).map(|_| ()),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LawFamily::L1NotL2 => "l1-not-l2",
            LawFamily::Superlinear { .. } => "superlinear",
            LawFamily::Custom { .. } => "custom",
        }
    }

    /// Raw `(v_k, p_k)` from the family formula, without checking that it is a
    /// probability law.
    pub fn scale_parameters(&self, k: u32) -> Result<(f64, f64)> {
        self.validate()?;
        if k == 0 {
            return Err(Error::InvalidParameter("scale index k must be >= 1".into()));
        }
        let kf = k as f64;
        let lg = (kf + 1.0).ln();
        Ok(match *self {
            LawFamily::L1NotL2 => (kf * kf * lg * lg, 1.0 / (2.0 * kf * kf * lg.powi(4))),
            LawFamily::Superlinear { alpha } => (kf.powf(alpha), 1.0 / (2.0 * kf.powi(5) * lg * lg)),
            LawFamily::Custom { v, p } => (v, p),
        })
    }

    /// Formula values of `||e_k||_1` and `||e_k||_2^2`, `2 v_k p_k` and
    /// `2 v_k^2 p_k`, defined even where `p_k > 1/2`.
    pub fn scale_moments(&self, k: u32) -> Result<LawMoments> {
        let (v, p) = self.scale_parameters(k)?;
        Ok(LawMoments { l1: 2.0 * v * p, l2sq: 2.0 * v * v * p })
    }

    /// The law of `e_k`; rejects scales where `p_k > 1/2`.
    pub fn law_for_scale(&self, k: u32) -> Result<ThreePointLaw> {
        let (v, p) = self.scale_parameters(k)?;
        if p > 0.5 {
            return Err(Error::InadmissibleScale { family: self.tag().to_string(), k, p });
        }
        ThreePointLaw::new(v, p)
    }

    /// Smallest `k` with `p_k <= 1/2`. Both example families have `p_k`
    /// decreasing in `k`.
    pub fn first_admissible_k(&self) -> u32 {
        (1..)
            .find(|&k| self.law_for_scale(k).is_ok())
            .expect("p_k -> 0 for every built-in family")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_by_substitution() {
        let m = ThreePointLaw::new(2.0, 0.25).unwrap().moments();
        assert_eq!(m.l1, 1.0);
        assert_eq!(m.l2sq, 2.0);
    }

    #[test]
    fn superlinear_k1_formula_moments() {
        let fam = LawFamily::superlinear(5.0).unwrap();
        let m = fam.scale_moments(1).unwrap();
        let target = 1.0 / 2f64.ln().powi(2);
        assert!((m.l1 - target).abs() < 1e-14);
        assert!((m.l2sq - target).abs() < 1e-14);
        let (v, p) = fam.scale_parameters(1).unwrap();
        assert_eq!(v, 1.0);
        assert!((p - 1.0 / (2.0 * 2f64.ln().powi(2))).abs() < 1e-15);
        // p_1 > 1/2, so this is not a law
        assert!(matches!(fam.law_for_scale(1), Err(Error::InadmissibleScale { k: 1, .. })));
    }

    #[test]
    fn l1_not_l2_k2_moments() {
        let law = LawFamily::L1NotL2.law_for_scale(2).unwrap();
        let m = law.moments();
        assert!((m.l1 - 1.0 / 3f64.ln().powi(2)).abs() < 1e-14);
        assert!((m.l1 - 0.8286).abs() < 1e-4);
        assert!((m.l2sq - 4.0).abs() < 1e-13);
    }

    #[test]
    fn l1_not_l2_k1_parameters() {
        let (v, p) = LawFamily::L1NotL2.scale_parameters(1).unwrap();
        let l2 = 2f64.ln();
        assert!((v - l2 * l2).abs() < 1e-15);
        assert!((p - 1.0 / (2.0 * l2.powi(4))).abs() < 1e-12);
        assert!(p > 2.0);
    }

    #[test]
    fn parameter_errors() {
        assert!(LawFamily::superlinear(4.0).is_err());
        assert!(LawFamily::L1NotL2.law_for_scale(0).is_err());
        assert!(ThreePointLaw::new(1.0, 0.51).is_err());
        assert!(ThreePointLaw::new(0.0, 0.2).is_err());
        assert!(ThreePointLaw::new(1.0, 0.0).is_err());
        assert!(ThreePointLaw::new(1.0, 0.5).is_ok());
    }

    #[test]
    fn first_admissible_scales() {
        assert_eq!(LawFamily::L1NotL2.first_admissible_k(), 2);
        assert_eq!(LawFamily::Superlinear { alpha: 5.0 }.first_admissible_k(), 2);
        assert_eq!(LawFamily::Custom { v: 1.0, p: 0.5 }.first_admissible_k(), 1);
    }

    #[test]
    fn sampler_frequencies() {
        let law = ThreePointLaw::new(3.0, 0.1).unwrap();
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let x = law.sample(&StreamKey::new(99, 1, i, 0, 0));
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let second = s2 / n as f64;
        // sd of a single draw is sqrt(1.8)
        assert!(mean.abs() < 5.0 * (1.8f64 / n as f64).sqrt());
        assert!((second - 1.8).abs() < 0.05 * 1.8);
    }

    #[test]
    fn symmetric_law_mean() {
        let law = ThreePointLaw::new(1.0, 0.5).unwrap();
        let n = 1_000_000;
        let s: f64 = (0..n).map(|i| law.sample(&StreamKey::new(3, 2, 0, i, 1))).sum();
        assert!((s / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }
}
