//! Bounding-box arithmetic and the aspect-preserving crop-and-pad transform
//! used for region images and coordinate mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::ser_f6;
use crate::types::{round_half_up, BBox};

/// Square canvas side every region crop is embedded into.
pub const DEFAULT_TARGET_SIDE: i64 = 336;

/// Isotropic scale-then-pad embedding of a `width x height` image into a
/// `target x target` square: scaled by the long side, short side centered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadTransform {
    #[serde(serialize_with = "ser_f6")]
    pub scale: f64,
    pub pad_x: i64,
    pub pad_y: i64,
    pub target: i64,
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0);
    let iy = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Transform embedding `width x height` content into a `target` square.
/// Scale = target / long side; the short axis is centered with the leading
/// pad floored.
pub fn compute_pad_transform(width: i64, height: i64, target: i64) -> Result<PadTransform> {
    if width <= 0 || height <= 0 || target <= 0 {
        return Err(Error::Usage(format!(
            "pad transform needs positive dimensions, got {width}x{height} target {target}"
        )));
    }
    let long = width.max(height) as f64;
    let scale = target as f64 / long;
    let scaled_w = round_half_up(width as f64 * scale);
    let scaled_h = round_half_up(height as f64 * scale);
    Ok(PadTransform {
        scale,
        pad_x: (target - scaled_w) / 2,
        pad_y: (target - scaled_h) / 2,
        target,
    })
}

/// Map a box from the original frame into the padded square: scale each
/// coordinate, round half-up, then offset by the pad.
pub fn map_bbox_to_padded(b: &BBox, t: &PadTransform) -> Result<BBox> {
    let x1 = round_half_up(b.x1() as f64 * t.scale) + t.pad_x;
    let y1 = round_half_up(b.y1() as f64 * t.scale) + t.pad_y;
    let x2 = round_half_up(b.x2() as f64 * t.scale) + t.pad_x;
    let y2 = round_half_up(b.y2() as f64 * t.scale) + t.pad_y;
    BBox::from_pixels(x1, y1, x2, y2).map_err(|_| {
        Error::Construction(format!("box {b} degenerates under scale {}", t.scale))
    })
}

/// Inverse of [`map_bbox_to_padded`]: strip the pad, divide by the scale,
/// round to nearest. Round-trip error is at most one pixel per coordinate
/// for scales of at least one half (content no more than twice the target).
pub fn unmap_bbox_from_padded(b: &BBox, t: &PadTransform) -> Result<BBox> {
    let back = |v: i64, pad: i64| round_half_up((v - pad) as f64 / t.scale);
    BBox::from_pixels(
        back(b.x1(), t.pad_x),
        back(b.y1(), t.pad_y),
        back(b.x2(), t.pad_x),
        back(b.y2(), t.pad_y),
    )
    .map_err(|_| Error::Construction(format!("box {b} degenerates under inverse scale")))
}

/// Clamp a requested crop to the image; errors when nothing remains.
pub fn crop_spec(b: &BBox, width: i64, height: i64) -> Result<BBox> {
    if width <= 0 || height <= 0 {
        return Err(Error::Usage(format!("invalid image dims {width}x{height}")));
    }
    let x1 = b.x1().max(0);
    let y1 = b.y1().max(0);
    let x2 = b.x2().min(width);
    let y2 = b.y2().min(height);
    if x1 >= x2 || y1 >= y2 {
        return Err(Error::OutOfBounds(format!(
            "box {b} lies outside {width}x{height} image"
        )));
    }
    BBox::from_pixels(x1, y1, x2, y2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: i64, y1: i64, x2: i64, y2: i64) -> BBox {
        BBox::from_pixels(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_identity_disjoint_partial() {
        let a = bb(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20, 20, 30, 30)), 0.0);
        let v = iou(&a, &bb(5, 5, 15, 15));
        assert!((v - 25.0 / 175.0).abs() < 1e-12);
    }

    #[test]
    fn pad_transform_identity() {
        let t = compute_pad_transform(336, 336, 336).unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!((t.pad_x, t.pad_y), (0, 0));
    }

    #[test]
    fn pad_transform_wide_image() {
        let t = compute_pad_transform(672, 336, 336).unwrap();
        assert_eq!(t.scale, 0.5);
        assert_eq!((t.pad_x, t.pad_y), (0, 84));
    }

    #[test]
    fn pad_transform_tall_image() {
        let t = compute_pad_transform(100, 400, 336).unwrap();
        assert!((t.scale - 0.84).abs() < 1e-12);
        assert_eq!((t.pad_x, t.pad_y), (126, 0));
    }

    #[test]
    fn pad_transform_rejects_bad_dims() {
        assert!(compute_pad_transform(0, 10, 336).is_err());
        assert!(compute_pad_transform(10, -1, 336).is_err());
    }

    #[test]
    fn map_scales_and_offsets() {
        let t = compute_pad_transform(672, 336, 336).unwrap();
        let m = map_bbox_to_padded(&bb(100, 100, 200, 200), &t).unwrap();
        assert_eq!((m.x1(), m.y1(), m.x2(), m.y2()), (50, 134, 100, 184));
    }

    #[test]
    fn map_identity_transform_is_noop() {
        let t = compute_pad_transform(336, 336, 336).unwrap();
        let b = bb(10, 20, 30, 40);
        assert_eq!(map_bbox_to_padded(&b, &t).unwrap(), b);
    }

    #[test]
    fn map_degenerate_after_rounding_errors() {
        // 1px box at odd coordinates collapses under a 0.5 downscale
        let t = compute_pad_transform(672, 672, 336).unwrap();
        assert!(map_bbox_to_padded(&bb(101, 101, 102, 102), &t).is_err());
    }

    #[test]
    fn map_is_monotone_on_nested_boxes() {
        let t = compute_pad_transform(500, 400, 336).unwrap();
        let outer = map_bbox_to_padded(&bb(10, 10, 400, 350), &t).unwrap();
        let inner = map_bbox_to_padded(&bb(50, 50, 300, 300), &t).unwrap();
        assert!(outer.x1() <= inner.x1() && outer.y1() <= inner.y1());
        assert!(outer.x2() >= inner.x2() && outer.y2() >= inner.y2());
    }

    #[test]
    fn output_stays_within_target_square() {
        let t = compute_pad_transform(640, 480, 336).unwrap();
        let m = map_bbox_to_padded(&bb(0, 0, 640, 480), &t).unwrap();
        assert!(m.x1() >= 0 && m.y1() >= 0);
        assert!(m.x2() <= t.target && m.y2() <= t.target);
    }

    #[test]
    fn crop_spec_clamps() {
        assert_eq!(crop_spec(&bb(10, 10, 50, 50), 100, 100).unwrap(), bb(10, 10, 50, 50));
        assert_eq!(crop_spec(&bb(-5, -5, 50, 50), 100, 100).unwrap(), bb(0, 0, 50, 50));
        assert!(matches!(
            crop_spec(&bb(200, 200, 300, 300), 100, 100),
            Err(Error::OutOfBounds(_))
        ));
    }
}
