//! Bounding-box machinery: anchor-relative encodings with sin/cos direction
//! pairs, rotated BEV IoU, greedy NMS, anchor matching, and the
//! evidence-mass JIoU.

use crate::evmap::EvidentialMap;
use crate::geom::{convex_intersection_area, signed_area};
use crate::grid::GridSpec;
use crate::scene_sim::{normalize_angle, OrientedBox3};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Anchor-relative regression targets: location offsets normalized by the
/// anchor footprint diagonal, log dimension ratios, and two sin/cos offset
/// pairs (original and reversed anchor direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxEncoding {
    pub loc: [f64; 3],
    pub dim: [f64; 3],
    pub dir: [f64; 4],
}

/// Anchor dimensions (l, w, h) used throughout: a standard car footprint.
pub const ANCHOR_DIMS: [f64; 3] = [4.41, 1.98, 1.64];

/// Anchors for a set of BEV locations: two per location with yaws 0 and 90
/// degrees, all with `ANCHOR_DIMS`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<OrientedBox3>,
}

impl AnchorSet {
    pub fn generate(locations: &[(f64, f64)], z: f64) -> Self {
        let [l, w, h] = ANCHOR_DIMS;
        let mut anchors = Vec::with_capacity(locations.len() * 2);
        for &(x, y) in locations {
            anchors.push(OrientedBox3::new(x, y, z, l, w, h, 0.0));
            anchors.push(OrientedBox3::new(
                x,
                y,
                z,
                l,
                w,
                h,
                std::f64::consts::FRAC_PI_2,
            ));
        }
        Self { anchors }
    }
}

pub fn encode_box(gt: &OrientedBox3, anchor: &OrientedBox3) -> BoxEncoding {
    let d_xy = anchor.diag_xy();
    let loc = [
        (gt.x - anchor.x) / d_xy,
        (gt.y - anchor.y) / d_xy,
        (gt.z - anchor.z) / anchor.h,
    ];
    let dim = [
        (gt.l / anchor.l).ln(),
        (gt.w / anchor.w).ln(),
        (gt.h / anchor.h).ln(),
    ];
    let reversed = anchor.yaw + std::f64::consts::PI;
    let dir = [
        gt.yaw.cos() - anchor.yaw.cos(),
        gt.yaw.sin() - anchor.yaw.sin(),
        gt.yaw.cos() - reversed.cos(),
        gt.yaw.sin() - reversed.sin(),
    ];
    BoxEncoding { loc, dim, dir }
}

/// Invert the encoding. Of the two direction pairs the one with the smaller
/// offset norm is selected and the angle is recovered from the anchor (or
/// reversed anchor) direction plus that offset.
pub fn decode_box(enc: &BoxEncoding, anchor: &OrientedBox3) -> OrientedBox3 {
    let d_xy = anchor.diag_xy();
    let x = enc.loc[0] * d_xy + anchor.x;
    let y = enc.loc[1] * d_xy + anchor.y;
    let z = enc.loc[2] * anchor.h + anchor.z;
    let l = enc.dim[0].exp() * anchor.l;
    let w = enc.dim[1].exp() * anchor.w;
    let h = enc.dim[2].exp() * anchor.h;
    let norm_orig = enc.dir[0] * enc.dir[0] + enc.dir[1] * enc.dir[1];
    let norm_rev = enc.dir[2] * enc.dir[2] + enc.dir[3] * enc.dir[3];
    let (base, off_cos, off_sin) = if norm_orig <= norm_rev {
        (anchor.yaw, enc.dir[0], enc.dir[1])
    } else {
        (anchor.yaw + std::f64::consts::PI, enc.dir[2], enc.dir[3])
    };
    let yaw = normalize_angle((base.sin() + off_sin).atan2(base.cos() + off_cos));
    OrientedBox3::new(x, y, z, l, w, h, yaw)
}

/// Footprint IoU of two oriented boxes (heights ignored).
pub fn rotated_iou_bev(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    let fa = a.footprint();
    let fb = b.footprint();
    let inter = convex_intersection_area(&fa, &fb);
    let area_a = signed_area(&fa).abs();
    let area_b = signed_area(&fb).abs();
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    Positive,
    Negative,
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorMatches {
    /// Per-anchor assignment by the IoU thresholds.
    pub kinds: Vec<MatchKind>,
    /// Indices of the (at most 512) negatives kept for training, ascending.
    pub sampled_negatives: Vec<usize>,
}

pub const MATCH_POS_IOU: f64 = 0.4;
pub const MATCH_NEG_IOU: f64 = 0.2;
pub const NEGATIVES_KEPT: usize = 512;

/// Assign anchors against ground truth: IoU >= 0.4 positive, <= 0.2
/// negative, otherwise ignored; negatives are subsampled to 512 with the
/// seeded uniform choice.
pub fn match_anchors(anchors: &[OrientedBox3], gts: &[OrientedBox3], seed: u64) -> AnchorMatches {
    let kinds: Vec<MatchKind> = anchors
        .iter()
        .map(|a| {
            let best = gts
                .iter()
                .map(|g| rotated_iou_bev(a, g))
                .fold(0.0f64, f64::max);
            if best >= MATCH_POS_IOU {
                MatchKind::Positive
            } else if best <= MATCH_NEG_IOU {
                MatchKind::Negative
            } else {
                MatchKind::Ignore
            }
        })
        .collect();
    let negatives: Vec<usize> = kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| **k == MatchKind::Negative)
        .map(|(i, _)| i)
        .collect();
    let sampled_negatives = if negatives.len() <= NEGATIVES_KEPT {
        negatives
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = sample_indices(&mut rng, negatives.len(), NEGATIVES_KEPT).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| negatives[i]).collect()
    };
    AnchorMatches {
        kinds,
        sampled_negatives,
    }
}

/// Greedy NMS by descending score (ties keep the lower index first);
/// returns kept input indices in selection order.
pub fn nms(boxes: &[OrientedBox3], scores: &[f64], iou_thr: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len());
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept
            .iter()
            .all(|&j| rotated_iou_bev(&boxes[i], &boxes[j]) <= iou_thr)
        {
            kept.push(i);
        }
    }
    kept
}

/// Evidence-mass IoU: rasterize the map's foreground evidence over the grid
/// and compare the mass inside det-and-gt against det-or-gt. Returns 0 when
/// the union carries no mass.
pub fn jiou(
    det: &OrientedBox3,
    gt: &OrientedBox3,
    object_map: &EvidentialMap,
    spec: &GridSpec,
) -> f64 {
    let mut mass_inter = 0.0;
    let mut mass_union = 0.0;
    for (_, _, center) in spec.iter_cells() {
        let in_det = det.contains_xy(center);
        let in_gt = gt.contains_xy(center);
        if !(in_det || in_gt) {
            continue;
        }
        let (e, _) = object_map.evidence_at(center);
        mass_union += e[0];
        if in_det && in_gt {
            mass_inter += e[0];
        }
    }
    if mass_union <= 0.0 {
        0.0
    } else {
        (mass_inter / mass_union).clamp(0.0, 1.0)
    }
}
