//! Rotated-box detection head decoding, ArIoU-based suppression and
//! Green-Blue-Depth input encoding.
//!
//! Network inference is not part of this crate: raw prediction grids are read
//! from scene files (or synthesized) and decoded here.

use std::cmp::Ordering;

use image::{ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::rotgeom::{ariou, RotatedBox2D};

/// The nine fixed prior angles, in degrees.
pub const ANCHOR_ANGLES: [f64; 9] = [10.0, 30.0, 50.0, 70.0, 90.0, 110.0, 130.0, 150.0, 170.0];

/// Prior sizes paired positionally with [`ANCHOR_ANGLES`] when no anchor set
/// is configured (the usual nine one-stage detector clusters, in pixels).
pub const DEFAULT_ANCHOR_SIZES: [(f64, f64); 9] = [
    (10.0, 13.0),
    (16.0, 30.0),
    (33.0, 23.0),
    (30.0, 61.0),
    (62.0, 45.0),
    (59.0, 119.0),
    (116.0, 90.0),
    (156.0, 198.0),
    (373.0, 326.0),
];

/// Upper bound on decoded box sides, in pixels.
pub const DEFAULT_MAX_BOX_SIZE: f64 = 1.0e5;

/// Single-channel depth image in meters.
pub type DepthImage = ImageBuffer<Luma<f32>, Vec<f32>>;

/// Prior box: size in pixels and a fixed angle in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl Anchor {
    pub fn new(w: f64, h: f64, theta: f64) -> Self {
        Self { w, h, theta }
    }

    fn validate(&self) -> Result<()> {
        if self.w > 0.0 && self.h > 0.0 && self.w.is_finite() && self.h.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "anchor sizes must be positive, got ({}, {})",
                self.w, self.h
            )))
        }
    }
}

/// Pairs each size with the fixed angle at the same position.
pub fn anchors_from_sizes(sizes: &[(f64, f64)]) -> Result<Vec<Anchor>> {
    if sizes.len() != ANCHOR_ANGLES.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} anchor sizes, got {}",
            ANCHOR_ANGLES.len(),
            sizes.len()
        )));
    }
    let anchors: Vec<Anchor> = sizes
        .iter()
        .zip(ANCHOR_ANGLES)
        .map(|(&(w, h), theta)| Anchor::new(w, h, theta))
        .collect();
    anchors.iter().try_for_each(Anchor::validate)?;
    Ok(anchors)
}

pub fn default_anchors() -> Vec<Anchor> {
    anchors_from_sizes(&DEFAULT_ANCHOR_SIZES).expect("default anchor sizes are valid")
}

/// One detected object.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub class_name: String,
    pub score: f64,
    pub bbox: RotatedBox2D,
}

impl Detection {
    pub fn new(
        class_id: usize,
        class_name: impl Into<String>,
        score: f64,
        bbox: RotatedBox2D,
    ) -> Self {
        Self {
            class_id,
            class_name: class_name.into(),
            score,
            bbox,
        }
    }
}

/// Descending score, then smaller `(cy, cx)` first, then class id.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.cy().total_cmp(&b.bbox.cy()))
        .then(a.bbox.cx().total_cmp(&b.bbox.cx()))
        .then(a.class_id.cmp(&b.class_id))
}

/// Raw head output laid out as `grid_h x grid_w x anchors x (5 + classes)`.
///
/// Each anchor slot holds `t_x, t_y, t_w, t_h, objectness, class logits...`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawPredictionGrid {
    pub grid_w: usize,
    pub grid_h: usize,
    pub num_anchors: usize,
    pub num_classes: usize,
    pub stride: f64,
    pub class_names: Vec<String>,
    pub values: Vec<f64>,
}

impl RawPredictionGrid {
    /// All-zero grid with every objectness logit at -1000.
    pub fn empty(
        grid_w: usize,
        grid_h: usize,
        num_anchors: usize,
        class_names: Vec<String>,
        stride: f64,
    ) -> Self {
        let num_classes = class_names.len();
        let mut grid = Self {
            grid_w,
            grid_h,
            num_anchors,
            num_classes,
            stride,
            class_names,
            values: vec![0.0; grid_w * grid_h * num_anchors * (5 + num_classes)],
        };
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                for a in 0..num_anchors {
                    grid.slot_mut(gx, gy, a)[4] = -1000.0;
                }
            }
        }
        grid
    }

    pub fn slot_len(&self) -> usize {
        5 + self.num_classes
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.grid_h, self.grid_w, self.num_anchors, self.slot_len()]
    }

    fn offset(&self, gx: usize, gy: usize, anchor: usize) -> usize {
        ((gy * self.grid_w + gx) * self.num_anchors + anchor) * self.slot_len()
    }

    pub fn slot(&self, gx: usize, gy: usize, anchor: usize) -> &[f64] {
        let o = self.offset(gx, gy, anchor);
        &self.values[o..o + self.slot_len()]
    }

    pub fn slot_mut(&mut self, gx: usize, gy: usize, anchor: usize) -> &mut [f64] {
        let o = self.offset(gx, gy, anchor);
        let n = self.slot_len();
        &mut self.values[o..o + n]
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.grid_w * self.grid_h * self.num_anchors * self.slot_len();
        if self.values.len() != expected {
            return Err(Error::InvalidInput(format!(
                "grid holds {} values, shape {:?} needs {expected}",
                self.values.len(),
                self.shape()
            )));
        }
        if !(self.stride.is_finite() && self.stride > 0.0) {
            return Err(Error::InvalidInput(format!(
                "stride must be positive, got {}",
                self.stride
            )));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.num_classes {
            return Err(Error::InvalidInput(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite grid value at index {i}"
            )));
        }
        Ok(())
    }

    fn class_name(&self, id: usize) -> String {
        self.class_names
            .get(id)
            .cloned()
            .unwrap_or_else(|| format!("class{id}"))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Decodes one anchor slot into an image-space box.
///
/// The center is confined to its cell; width and height scale the prior by
/// `exp(t)` (clamped to `max_box_size`); the angle is the prior angle.
pub fn decode_cell(
    t: [f64; 4],
    cell: (usize, usize),
    anchor: &Anchor,
    stride: f64,
    max_box_size: f64,
) -> RotatedBox2D {
    let bx = (sigmoid(t[0]) + cell.0 as f64) * stride;
    let by = (sigmoid(t[1]) + cell.1 as f64) * stride;
    let bw = (anchor.w * t[2].exp()).min(max_box_size);
    let bh = (anchor.h * t[3].exp()).min(max_box_size);
    RotatedBox2D::new(bx, by, bw, bh, anchor.theta)
}

/// Decodes every cell and anchor, keeping detections scoring at least
/// `conf_threshold`, sorted by [`rank_order`].
pub fn decode_grid(
    grid: &RawPredictionGrid,
    anchors: &[Anchor],
    conf_threshold: f64,
) -> Result<Vec<Detection>> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("anchor list is empty".into()));
    }
    if !(0.0..=1.0).contains(&conf_threshold) {
        return Err(Error::InvalidArgument(format!(
            "confidence threshold {conf_threshold} outside [0, 1]"
        )));
    }
    anchors.iter().try_for_each(Anchor::validate)?;
    grid.validate()?;
    if grid.num_anchors != anchors.len() {
        return Err(Error::InvalidInput(format!(
            "grid has {} anchors per cell, {} anchors supplied",
            grid.num_anchors,
            anchors.len()
        )));
    }
    if grid.num_classes == 0 {
        return Err(Error::InvalidInput("grid has no class logits".into()));
    }

    let mut out = Vec::new();
    for gy in 0..grid.grid_h {
        for gx in 0..grid.grid_w {
            for (a, anchor) in anchors.iter().enumerate() {
                let slot = grid.slot(gx, gy, a);
                let (best, logit) =
                    slot[5..]
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                        );
                let score = sigmoid(slot[4]) * sigmoid(logit);
                if score < conf_threshold {
                    continue;
                }
                let bbox = decode_cell(
                    [slot[0], slot[1], slot[2], slot[3]],
                    (gx, gy),
                    anchor,
                    grid.stride,
                    DEFAULT_MAX_BOX_SIZE,
                );
                if bbox.is_degenerate() {
                    continue;
                }
                out.push(Detection::new(best, grid.class_name(best), score, bbox));
            }
        }
    }
    out.sort_by(rank_order);
    Ok(out)
}

/// Greedy same-class suppression using ArIoU as the overlap measure.
pub fn nms_ariou(dets: &[Detection], threshold: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "NMS threshold {threshold} outside [0, 1]"
        )));
    }
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && ariou(&k.bbox, &d.bbox) >= threshold);
        if !suppressed {
            kept.push(d.clone());
        }
    }
    Ok(kept)
}

/// Replaces the red channel with normalized depth: output is
/// `(green, blue, depth8)`. Non-positive or non-finite depth encodes as 0.
pub fn make_gbd(rgb: &RgbImage, depth: &DepthImage, d_min: f64, d_max: f64) -> Result<RgbImage> {
    if rgb.dimensions() != depth.dimensions() {
        return Err(Error::InvalidInput(format!(
            "rgb is {:?} but depth is {:?}",
            rgb.dimensions(),
            depth.dimensions()
        )));
    }
    if d_min.is_nan() || d_max.is_nan() || d_min >= d_max {
        return Err(Error::InvalidArgument(format!(
            "depth range [{d_min}, {d_max}] is empty"
        )));
    }
    let (w, h) = rgb.dimensions();
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let Rgb([_, g, b]) = *rgb.get_pixel(x, y);
        let d = depth.get_pixel(x, y)[0] as f64;
        Rgb([g, b, encode_depth(d, d_min, d_max)])
    }))
}

/// Round-half-up quantization of depth into `0..=255`.
pub fn encode_depth(d: f64, d_min: f64, d_max: f64) -> u8 {
    if !(d.is_finite() && d > 0.0) {
        return 0;
    }
    let x = ((d - d_min) / (d_max - d_min)).clamp(0.0, 1.0);
    (255.0 * x + 0.5).floor() as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn decode_zero_offsets() {
        let b = decode_cell(
            [0.0; 4],
            (0, 0),
            &Anchor::new(10.0, 20.0, 30.0),
            1.0,
            DEFAULT_MAX_BOX_SIZE,
        );
        assert_eq!(b, RotatedBox2D::new(0.5, 0.5, 10.0, 20.0, 30.0));
    }

    #[test]
    fn decode_hand_substitution() {
        let b = decode_cell(
            [0.0, 0.0, 2f64.ln(), 0.0],
            (3, 4),
            &Anchor::new(10.0, 20.0, 90.0),
            32.0,
            DEFAULT_MAX_BOX_SIZE,
        );
        assert_abs_diff_eq!(b.cx(), 112.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.cy(), 144.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.w(), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.h(), 20.0, epsilon = 1e-12);
        assert_eq!(b.theta(), 90.0);
    }

    #[test]
    fn decode_saturation_and_clamp() {
        let a = Anchor::new(10.0, 10.0, 50.0);
        let b = decode_cell([1e3, -1e3, 1e3, 0.0], (2, 5), &a, 8.0, 500.0);
        assert_eq!(b.cx(), 24.0);
        assert_eq!(b.cy(), 40.0);
        assert_eq!(b.w(), 500.0);
    }

    type Hot = ((usize, usize, usize), f64, [f64; 4]);

    fn grid_with(hot: &[Hot]) -> RawPredictionGrid {
        let mut g =
            RawPredictionGrid::empty(4, 3, 9, vec!["rectangle".into(), "towel".into()], 16.0);
        for &((gx, gy, a), p, t) in hot {
            let slot = g.slot_mut(gx, gy, a);
            slot[..4].copy_from_slice(&t);
            // objectness and class chosen so the product is p.
            slot[4] = logit(p.sqrt());
            slot[5] = logit(p.sqrt());
            slot[6] = -5.0;
        }
        g
    }

    #[test]
    fn decode_grid_cases() {
        let anchors = default_anchors();
        let empty = grid_with(&[]);
        assert!(decode_grid(&empty, &anchors, 1e-6).unwrap().is_empty());

        let single = grid_with(&[((1, 2, 4), 0.95, [0.3, -0.2, 0.1, 0.4])]);
        let dets = decode_grid(&single, &anchors, 0.5).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(
            dets[0].bbox,
            decode_cell(
                [0.3, -0.2, 0.1, 0.4],
                (1, 2),
                &anchors[4],
                16.0,
                DEFAULT_MAX_BOX_SIZE
            )
        );
        assert_eq!(dets[0].class_name, "rectangle");

        let three = grid_with(&[
            ((0, 0, 0), 0.6, [0.0; 4]),
            ((3, 2, 8), 0.9, [0.0; 4]),
            ((2, 1, 3), 0.7, [0.0; 4]),
            ((1, 1, 1), 0.4, [0.0; 4]),
        ]);
        let dets = decode_grid(&three, &anchors, 0.5).unwrap();
        let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        assert_eq!(scores.len(), 3);
        for (s, e) in scores.iter().zip([0.9, 0.7, 0.6]) {
            assert_abs_diff_eq!(*s, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn decode_grid_rejects_shape_mismatch() {
        let g = grid_with(&[]);
        let anchors = &default_anchors()[..5];
        assert!(matches!(
            decode_grid(&g, anchors, 0.5),
            Err(Error::InvalidInput(_))
        ));
        let mut bad = grid_with(&[]);
        bad.values.pop();
        assert!(matches!(
            decode_grid(&bad, &default_anchors(), 0.5),
            Err(Error::InvalidInput(_))
        ));
        assert!(decode_grid(&g, &[], 0.5).is_err());
        assert!(decode_grid(&g, &default_anchors(), 1.5).is_err());
    }

    fn det(score: f64, b: RotatedBox2D) -> Detection {
        Detection::new(0, "rectangle", score, b)
    }

    #[test]
    fn nms_cases() {
        let b = RotatedBox2D::new(50.0, 50.0, 20.0, 40.0, 30.0);
        let out = nms_ariou(&[det(0.8, b), det(0.9, b)], 0.5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, 0.9);

        let r = RotatedBox2D::new(50.0, 50.0, 20.0, 40.0, 120.0);
        assert_eq!(
            nms_ariou(&[det(0.9, b), det(0.8, r)], 0.5).unwrap().len(),
            2
        );

        let far = RotatedBox2D::new(500.0, 50.0, 20.0, 40.0, 30.0);
        assert_eq!(
            nms_ariou(&[det(0.9, b), det(0.8, far)], 0.5).unwrap().len(),
            2
        );

        // Different classes never suppress each other.
        let mut other = det(0.7, b);
        other.class_id = 1;
        assert_eq!(nms_ariou(&[det(0.9, b), other], 0.5).unwrap().len(), 2);
    }

    #[test]
    fn nms_tie_break_is_positional() {
        let a = RotatedBox2D::new(10.0, 20.0, 5.0, 5.0, 10.0);
        let b = RotatedBox2D::new(5.0, 30.0, 5.0, 5.0, 10.0);
        let out = nms_ariou(&[det(0.5, b), det(0.5, a)], 0.5).unwrap();
        assert_eq!(out[0].bbox, a);
    }

    #[test]
    fn gbd_encoding() {
        let rgb = RgbImage::from_pixel(3, 1, Rgb([100, 150, 200]));
        let depth = DepthImage::from_vec(3, 1, vec![0.5, 1.0, 0.0]).unwrap();
        let gbd = make_gbd(&rgb, &depth, 0.5, 1.5).unwrap();
        assert_eq!(gbd.get_pixel(0, 0).0, [150, 200, 0]);
        assert_eq!(gbd.get_pixel(1, 0).0, [150, 200, 128]);
        assert_eq!(gbd.get_pixel(2, 0).0, [150, 200, 0]);
        assert_eq!(encode_depth(f64::NAN, 0.5, 1.5), 0);
        assert_eq!(encode_depth(9.0, 0.5, 1.5), 255);

        let wrong = DepthImage::new(2, 1);
        assert!(matches!(
            make_gbd(&rgb, &wrong, 0.5, 1.5),
            Err(Error::InvalidInput(_))
        ));
        assert!(make_gbd(&rgb, &depth, 1.0, 1.0).is_err());
    }

    fn arb_det() -> impl Strategy<Value = Detection> {
        (
            0.0..1.0f64,
            0.0..100.0f64,
            0.0..100.0f64,
            1.0..40.0f64,
            1.0..40.0f64,
            0usize..9,
            0usize..2,
        )
            .prop_map(|(s, x, y, w, h, a, c)| {
                Detection::new(c, "c", s, RotatedBox2D::new(x, y, w, h, ANCHOR_ANGLES[a]))
            })
    }

    proptest! {
        #[test]
        fn decoded_center_stays_in_cell(
            t in prop::array::uniform4(-20.0..20.0f64),
            cx in 0usize..50, cy in 0usize..50, a in 0usize..9, stride in 1.0..64.0f64,
        ) {
            let anchor = default_anchors()[a];
            let b = decode_cell(t, (cx, cy), &anchor, stride, DEFAULT_MAX_BOX_SIZE);
            prop_assert!(b.cx() > cx as f64 * stride && b.cx() < (cx + 1) as f64 * stride);
            prop_assert!(b.cy() > cy as f64 * stride && b.cy() < (cy + 1) as f64 * stride);
            prop_assert!(ANCHOR_ANGLES.contains(&b.theta()));
        }

        #[test]
        fn nms_idempotent_and_ordered(dets in prop::collection::vec(arb_det(), 0..30), thr in 0.05..0.95f64) {
            let once = nms_ariou(&dets, thr).unwrap();
            let twice = nms_ariou(&once, thr).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.len() <= dets.len());
            prop_assert!(once.windows(2).all(|w| w[0].score >= w[1].score));
        }

        #[test]
        fn gbd_keeps_green_blue(px in prop::collection::vec(prop::array::uniform3(any::<u8>()), 6), d in prop::collection::vec(0.0..3.0f32, 6)) {
            let rgb = RgbImage::from_fn(3, 2, |x, y| Rgb(px[(y * 3 + x) as usize]));
            let depth = DepthImage::from_vec(3, 2, d).unwrap();
            let out = make_gbd(&rgb, &depth, 0.2, 2.0).unwrap();
            for (i, o) in out.pixels().zip(rgb.pixels()) {
                prop_assert_eq!(i[0], o[1]);
                prop_assert_eq!(i[1], o[2]);
            }
        }
    }
}
