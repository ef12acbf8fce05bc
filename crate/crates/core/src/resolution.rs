//! Train and inference resolution caps.
//!
//! Caps are per-dimension: an image larger than the cap on either axis is
//! downscaled by `min(cap_w / w, cap_h / h)`, keeping its aspect ratio. The
//! scale is kept as an exact ratio so resized sizes are computed without
//! floating point and repeated application is a fixed point.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::schema::GroundingSample;
use crate::{Error, Result};

pub type Scale = Ratio<u64>;

const TAG_PREFIX: &str = "resized:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionPolicy {
    pub train_cap: (u32, u32),
    pub infer_cap: (u32, u32),
}

impl Default for ResolutionPolicy {
    fn default() -> Self {
        Self {
            train_cap: (3072, 3072),
            infer_cap: (2000, 2000),
        }
    }
}

impl ResolutionPolicy {
    pub fn validate(&self) -> Result<()> {
        for (key, cap) in [("train_cap", self.train_cap), ("infer_cap", self.infer_cap)] {
            if cap.0 == 0 || cap.1 == 0 {
                return Err(Error::Config {
                    path: format!("resolution.{key}"),
                    msg: format!("cap {cap:?} must be positive"),
                });
            }
        }
        Ok(())
    }

    pub fn cap(&self, mode: Mode) -> (u32, u32) {
        match mode {
            Mode::Train => self.train_cap,
            Mode::Infer => self.infer_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "infer" => Ok(Mode::Infer),
            other => Err(Error::Validation(format!("unknown mode `{other}` (train|infer)"))),
        }
    }
}

/// Fits `image_size` inside `cap`. Returns the new size and the exact scale.
pub fn cap_resize(image_size: (u32, u32), cap: (u32, u32)) -> ((u32, u32), Scale) {
    let (w, h) = (image_size.0.max(1) as u64, image_size.1.max(1) as u64);
    let (cw, ch) = (cap.0.max(1) as u64, cap.1.max(1) as u64);
    if w <= cw && h <= ch {
        return (image_size, Scale::from_integer(1));
    }
    let sx = Scale::new(cw, w);
    let sy = Scale::new(ch, h);
    let s = sx.min(sy);
    let dim = |v: u64| ((v * s.numer() / s.denom()).max(1)) as u32;
    ((dim(w), dim(h)), s)
}

/// Applied scale recorded in a sample's tags, 1 when absent.
pub fn recorded_scale(sample: &GroundingSample) -> Scale {
    sample
        .stage_tags
        .iter()
        .find_map(|t| t.strip_prefix(TAG_PREFIX))
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| Scale::from_integer(1))
}

/// Pixel-space box `(x0, y0, x1, y1)` carried alongside a sample.
pub type PixelBox = [f64; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Resized {
    pub sample: GroundingSample,
    /// Scale applied by this call.
    pub scale: Scale,
}

impl Resized {
    pub fn scale_f64(&self) -> f64 {
        *self.scale.numer() as f64 / *self.scale.denom() as f64
    }

    pub fn scale_pixel_box(&self, b: &PixelBox) -> PixelBox {
        let s = self.scale_f64();
        [b[0] * s, b[1] * s, b[2] * s, b[3] * s]
    }
}

/// Replaces the sample's image size per the mode's cap.
///
/// Normalized annotations are untouched. The `resized:<scale>` tag holds the
/// cumulative scale relative to the original image, so applying the same
/// policy twice leaves the sample unchanged.
pub fn apply_policy(sample: &GroundingSample, mode: Mode, policy: &ResolutionPolicy) -> Resized {
    let (size, scale) = cap_resize(sample.image_size, policy.cap(mode));
    let total = recorded_scale(sample) * scale;
    let mut out = sample.clone();
    out.image_size = size;
    out.stage_tags.retain(|t| !t.starts_with(TAG_PREFIX));
    out.stage_tags.insert(format!("{TAG_PREFIX}{total}"));
    Resized { sample: out, scale }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Annotation;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn sample(size: (u32, u32)) -> GroundingSample {
        let annotation = Annotation::from_coords(&[0.123, 0.456, 0.789, 0.999]).unwrap();
        GroundingSample {
            id: "s".into(),
            image_ref: "s.png".into(),
            image_size: size,
            instruction: "x".into(),
            task: annotation.task(),
            annotation,
            source: "t".into(),
            stage_tags: BTreeSet::new(),
        }
    }

    #[test]
    fn cap_examples() {
        assert_eq!(cap_resize((1920, 1080), (2000, 2000)), ((1920, 1080), Scale::from_integer(1)));
        assert_eq!(cap_resize((4000, 3000), (2000, 2000)), ((2000, 1500), Scale::new(1, 2)));
        assert_eq!(cap_resize((3000, 6000), (2000, 2000)), ((1000, 2000), Scale::new(1, 3)));
    }

    #[test]
    fn policy_examples() {
        let policy = ResolutionPolicy::default();
        let s = sample((2560, 1920));
        let r = apply_policy(&s, Mode::Train, &policy);
        assert_eq!(r.sample.image_size, (2560, 1920));
        assert!(r.sample.stage_tags.contains("resized:1"));

        let r = apply_policy(&sample((4000, 3000)), Mode::Infer, &policy);
        assert_eq!(r.sample.image_size, (2000, 1500));
        assert_eq!(r.sample.annotation, s.annotation);
        assert!(r.sample.stage_tags.contains("resized:1/2"));
        assert_eq!(r.scale_pixel_box(&[400.0, 300.0, 800.0, 600.0]), [200.0, 150.0, 400.0, 300.0]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("train".parse::<Mode>().unwrap(), Mode::Train);
        assert!("both".parse::<Mode>().is_err());
    }

    proptest! {
        #[test]
        fn idempotent(w in 1u32..10_000, h in 1u32..10_000, cw in 1u32..5000, ch in 1u32..5000) {
            let policy = ResolutionPolicy { train_cap: (cw, ch), infer_cap: (cw, ch) };
            let once = apply_policy(&sample((w, h)), Mode::Train, &policy).sample;
            let twice = apply_policy(&once, Mode::Train, &policy).sample;
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn aspect_preserved(w in 1u32..10_000, h in 1u32..10_000, cw in 1u32..5000, ch in 1u32..5000) {
            let ((nw, nh), s) = cap_resize((w, h), (cw, ch));
            prop_assert!(nw <= w && nh <= h);
            // the 1 px floor distorts arbitrarily; only check unclamped sizes
            prop_assume!(s * (w.min(h) as u64) >= Scale::from_integer(1));
            let (nwf, nhf) = (nw as f64, nh as f64);
            let err = (nwf / nhf - w as f64 / h as f64).abs();
            // flooring each side by < 1 px bounds the drift by max(1, nw/nh) / nh
            let bound = (nwf / nhf).max(1.0) / nhf;
            prop_assert!(err <= bound + 1e-12, "{w}x{h} -> {nw}x{nh}");
        }

        #[test]
        fn larger_cap_never_smaller(w in 1u32..10_000, h in 1u32..10_000, c in 1u32..5000, extra in 0u32..3000) {
            let (a, _) = cap_resize((w, h), (c, c));
            let (b, _) = cap_resize((w, h), (c + extra, c + extra));
            prop_assert!(b.0 >= a.0 && b.1 >= a.1);
        }
    }
}
