//! The continuous-space evidential BEV map. Each center point carries
//! per-class evidence outputs and per-class spatial variances; a query point
//! draws evidence from all centers within the distribution range `nu`,
//! weighted by the density ratio exp(-m/2) of each center's diagonal
//! Gaussian, and the accumulated evidence parameterizes a Dirichlet.

use crate::geom::Vec2;
use crate::grid::{Grid, GridSpec};
use crate::scene_sim::{PointCloud, PointLabel};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Class count per map layer: [foreground, background].
pub const K: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MapLayer {
    Road,
    Object,
}

impl MapLayer {
    /// The point label that counts as foreground for this layer.
    pub fn fg_label(self) -> PointLabel {
        match self {
            MapLayer::Road => PointLabel::Road,
            MapLayer::Object => PointLabel::Vehicle,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MapLayer::Road => "road",
            MapLayer::Object => "object",
        }
    }
}

/// A map-resident point with per-class evidence outputs `o_cls` and
/// per-class per-axis variance outputs `o_var` (before the variance floor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterPoint {
    pub pos: Vec2,
    pub o_cls: [f64; K],
    pub o_var: [[f64; 2]; K],
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("no observable centers after filtering")]
    NoObservableCenters,
    #[error("map parameters invalid: nu and sigma0_sq must be positive")]
    BadParams,
    #[error("center {index} has negative outputs")]
    NegativeOutputs { index: usize },
}

/// Dirichlet summary at one queried point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletResult {
    pub alpha: [f64; K],
    pub strength: f64,
    pub p_hat: [f64; K],
    pub u: f64,
    pub observed: bool,
}

impl DirichletResult {
    pub fn from_evidence(e: [f64; K], observed: bool) -> Self {
        let alpha = [e[0] + 1.0, e[1] + 1.0];
        let strength = alpha[0] + alpha[1];
        Self {
            alpha,
            strength,
            p_hat: [alpha[0] / strength, alpha[1] / strength],
            u: K as f64 / strength,
            observed,
        }
    }
}

/// Density ratio of the center's class-k Gaussian at `x` versus its mode:
/// exp(-m/2) with m the squared Mahalanobis distance under the diagonal
/// covariance o_var[k] + sigma0_sq.
pub fn density_weight(x: Vec2, center: &CenterPoint, class: usize, sigma0_sq: f64) -> f64 {
    let d = x - center.pos;
    let vx = center.o_var[class][0] + sigma0_sq;
    let vy = center.o_var[class][1] + sigma0_sq;
    let m = d.x * d.x / vx + d.y * d.y / vy;
    (-0.5 * m).exp()
}

/// Uniform-bucket spatial index with cell size `nu`; a radius-`nu` query
/// only has to scan the 3x3 bucket neighborhood.
#[derive(Debug, Clone)]
struct BucketIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl BucketIndex {
    fn build(positions: impl Iterator<Item = Vec2>, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in positions.enumerate() {
            buckets
                .entry(Self::key(p, cell))
                .or_default()
                .push(i as u32);
        }
        Self { cell, buckets }
    }

    fn key(p: Vec2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn candidates<'a>(&'a self, x: Vec2) -> impl Iterator<Item = u32> + 'a {
        let (bx, by) = Self::key(x, self.cell);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                self.buckets
                    .get(&(bx + dx, by + dy))
                    .into_iter()
                    .flatten()
                    .copied()
            })
        })
    }
}

/// The evidential map: immutable after construction; queries are pure.
#[derive(Debug, Clone)]
pub struct EvidentialMap {
    centers: Vec<CenterPoint>,
    nu: f64,
    sigma0_sq: f64,
    layer: MapLayer,
    index: BucketIndex,
}

impl EvidentialMap {
    pub fn new(
        centers: Vec<CenterPoint>,
        nu: f64,
        sigma0_sq: f64,
        layer: MapLayer,
    ) -> Result<Self, MapError> {
        if nu <= 0.0 || sigma0_sq <= 0.0 || nu.is_nan() || sigma0_sq.is_nan() {
            return Err(MapError::BadParams);
        }
        for (index, c) in centers.iter().enumerate() {
            let neg_cls = c.o_cls.iter().any(|&v| v < 0.0 || !v.is_finite());
            let neg_var = c
                .o_var
                .iter()
                .any(|row| row.iter().any(|&v| v < 0.0 || !v.is_finite()));
            if neg_cls || neg_var {
                return Err(MapError::NegativeOutputs { index });
            }
        }
        let index = BucketIndex::build(centers.iter().map(|c| c.pos), nu);
        Ok(Self {
            centers,
            nu,
            sigma0_sq,
            layer,
            index,
        })
    }

    pub fn centers(&self) -> &[CenterPoint] {
        &self.centers
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }

    pub fn layer(&self) -> MapLayer {
        self.layer
    }

    /// Indices of centers strictly within `nu` of `x`, ascending. Sorting
    /// fixes the evidence summation order, keeping queries bit-reproducible.
    pub fn neighbor_indices(&self, x: Vec2) -> Vec<u32> {
        let nu_sq = self.nu * self.nu;
        let mut out: Vec<u32> = self
            .index
            .candidates(x)
            .filter(|&i| self.centers[i as usize].pos.distance_sq(x) < nu_sq)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn density_weight(&self, x: Vec2, center_index: usize, class: usize) -> f64 {
        density_weight(x, &self.centers[center_index], class, self.sigma0_sq)
    }

    /// Accumulated per-class evidence at `x` plus the observed flag
    /// (true iff any center lies within `nu`).
    pub fn evidence_at(&self, x: Vec2) -> ([f64; K], bool) {
        let nbr = self.neighbor_indices(x);
        let mut e = [0.0; K];
        for &i in &nbr {
            let c = &self.centers[i as usize];
            for (k, ek) in e.iter_mut().enumerate() {
                *ek += density_weight(x, c, k, self.sigma0_sq) * c.o_cls[k];
            }
        }
        (e, !nbr.is_empty())
    }

    pub fn dirichlet_at(&self, x: Vec2) -> DirichletResult {
        let (e, observed) = self.evidence_at(x);
        DirichletResult::from_evidence(e, observed)
    }

    /// Evaluate the Dirichlet at every cell center of `spec`.
    pub fn rasterize(&self, spec: &GridSpec) -> RasterMaps {
        self.rasterize_evidence(spec).to_raster()
    }

    /// Per-cell evidence grid, the exchange format for CPM selection.
    pub fn rasterize_evidence(&self, spec: &GridSpec) -> EvidenceGrid {
        let mut e = Vec::with_capacity(spec.len());
        let mut observed = Vec::with_capacity(spec.len());
        for (_, _, center) in spec.iter_cells() {
            let (ev, obs) = self.evidence_at(center);
            e.push(ev);
            observed.push(obs);
        }
        EvidenceGrid {
            spec: *spec,
            e,
            observed,
        }
    }

    /// Add synthetic centers on a `step`-spaced lattice disc of `radius`
    /// around each center, copying the source's variances and its evidence
    /// scaled by exp(-r^2 / (2 sigma0_sq)). New centers closer than step/2
    /// to any kept center are dropped. radius = 0 returns the map unchanged.
    pub fn expand_centers(&self, radius: f64, step: f64) -> EvidentialMap {
        assert!(radius >= 0.0 && step > 0.0);
        if radius == 0.0 || self.centers.is_empty() {
            return self.clone();
        }
        let reach = (radius / step).floor() as i64 + 1;
        let r_steps_sq = (radius / step) * (radius / step) + 1e-9;
        let mut offsets = Vec::new();
        for i in -reach..=reach {
            for j in -reach..=reach {
                if (i, j) == (0, 0) {
                    continue;
                }
                if (i * i + j * j) as f64 <= r_steps_sq {
                    offsets.push(Vec2::new(i as f64 * step, j as f64 * step));
                }
            }
        }

        let dedup_cell = step / 2.0;
        let mut dedup: HashMap<(i64, i64), Vec<Vec2>> = HashMap::new();
        let occupied = |p: Vec2, insert: bool, dedup: &mut HashMap<(i64, i64), Vec<Vec2>>| {
            let key = BucketIndex::key(p, dedup_cell);
            let limit_sq = dedup_cell * dedup_cell;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(v) = dedup.get(&(key.0 + dx, key.1 + dy)) {
                        if v.iter().any(|&q| q.distance_sq(p) < limit_sq) {
                            return true;
                        }
                    }
                }
            }
            if insert {
                dedup.entry(key).or_default().push(p);
            }
            false
        };

        let mut centers = self.centers.clone();
        for c in &self.centers {
            occupied(c.pos, true, &mut dedup);
        }
        for src in &self.centers {
            for off in &offsets {
                let pos = src.pos + *off;
                if occupied(pos, false, &mut dedup) {
                    continue;
                }
                occupied(pos, true, &mut dedup);
                let decay = (-off.norm_sq() / (2.0 * self.sigma0_sq)).exp();
                centers.push(CenterPoint {
                    pos,
                    o_cls: [src.o_cls[0] * decay, src.o_cls[1] * decay],
                    o_var: src.o_var,
                });
            }
        }
        EvidentialMap::new(centers, self.nu, self.sigma0_sq, self.layer)
            .expect("expansion preserves validity")
    }

    /// Debug snapshot: x,y,o_fg,o_bg,var_fg_x,var_fg_y,var_bg_x,var_bg_y.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("x,y,o_fg,o_bg,var_fg_x,var_fg_y,var_bg_x,var_bg_y\n");
        for c in &self.centers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.pos.x,
                c.pos.y,
                c.o_cls[0],
                c.o_cls[1],
                c.o_var[0][0],
                c.o_var[0][1],
                c.o_var[1][0],
                c.o_var[1][1]
            ));
        }
        out
    }
}

/// Dirichlet summaries rasterized onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMaps {
    pub p_fg: Grid<f64>,
    pub u: Grid<f64>,
    pub observed: Grid<bool>,
}

/// Per-cell evidence with observed flags; fusing payloads and re-deriving
/// Dirichlet grids both go through this form.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceGrid {
    pub spec: GridSpec,
    pub e: Vec<[f64; K]>,
    pub observed: Vec<bool>,
}

impl EvidenceGrid {
    pub fn dirichlet(&self, idx: usize) -> DirichletResult {
        DirichletResult::from_evidence(self.e[idx], self.observed[idx])
    }

    pub fn to_raster(&self) -> RasterMaps {
        let n = self.spec.len();
        let mut p_fg = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        for i in 0..n {
            let d = self.dirichlet(i);
            p_fg.push(d.p_hat[0]);
            u.push(d.u);
        }
        RasterMaps {
            p_fg: Grid {
                spec: self.spec,
                data: p_fg,
            },
            u: Grid {
                spec: self.spec,
                data: u,
            },
            observed: Grid {
                spec: self.spec,
                data: self.observed.clone(),
            },
        }
    }
}

/// How to initialize center outputs when building a map from a cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Same outputs for every center.
    Constant {
        o_cls: [f64; K],
        o_var: [[f64; 2]; K],
    },
    /// Evidence `strong` for the class matching the center's majority label
    /// (per the layer's foreground definition), `weak` for the other class;
    /// all variance outputs start at `var0`. A positive `var0` keeps the
    /// variances trainable (the fit's relu sub-gradient is zero at zero).
    LabelHeuristic { strong: f64, weak: f64, var0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub layer: MapLayer,
    pub nu: f64,
    pub sigma0_sq: f64,
    /// BEV voxel size for center placement.
    pub center_voxel: f64,
    pub init: InitScheme,
}

impl BuildConfig {
    pub fn new(layer: MapLayer) -> Self {
        Self {
            layer,
            nu: 2.0,
            sigma0_sq: 0.01,
            center_voxel: 0.4,
            init: InitScheme::LabelHeuristic {
                strong: 2.0,
                weak: 0.1,
                var0: 0.0,
            },
        }
    }
}

/// Build a map whose centers are the BEV voxel-downsampled cloud positions.
/// Free-space points participate in the road layer only. Outputs start from
/// `cfg.init`; a fit pass refines them.
pub fn build_from_cloud(cloud: &PointCloud, cfg: &BuildConfig) -> Result<EvidentialMap, MapError> {
    let voxel = cfg.center_voxel;
    assert!(voxel > 0.0);
    let mut groups: BTreeMap<(i64, i64), (Vec2, usize, [usize; 3])> = BTreeMap::new();
    for p in &cloud.points {
        if cfg.layer == MapLayer::Object && p.is_free_space() {
            continue;
        }
        let key = ((p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64);
        let entry = groups.entry(key).or_insert((Vec2::ZERO, 0, [0; 3]));
        entry.0 = entry.0 + p.xy();
        entry.1 += 1;
        entry.2[p.label as usize] += 1;
    }
    if groups.is_empty() {
        return Err(MapError::NoObservableCenters);
    }
    let fg_label = cfg.layer.fg_label();
    let centers = groups
        .values()
        .map(|(sum, n, label_counts)| {
            let pos = *sum * (1.0 / *n as f64);
            let majority = label_counts
                .iter()
                .enumerate()
                .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
                .map(|(i, _)| i)
                .unwrap_or(2);
            let is_fg = majority == fg_label as usize;
            let (o_cls, o_var) = match cfg.init {
                InitScheme::Constant { o_cls, o_var } => (o_cls, o_var),
                InitScheme::LabelHeuristic { strong, weak, var0 } => {
                    let o_cls = if is_fg {
                        [strong, weak]
                    } else {
                        [weak, strong]
                    };
                    (o_cls, [[var0; 2]; K])
                }
            };
            CenterPoint { pos, o_cls, o_var }
        })
        .collect();
    EvidentialMap::new(centers, cfg.nu, cfg.sigma0_sq, cfg.layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_sim::MeasurePoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn center(x: f64, y: f64, o_cls: [f64; 2], var: f64) -> CenterPoint {
        CenterPoint {
            pos: Vec2::new(x, y),
            o_cls,
            o_var: [[var; 2]; 2],
        }
    }

    fn map_of(centers: Vec<CenterPoint>, nu: f64, sigma0_sq: f64) -> EvidentialMap {
        EvidentialMap::new(centers, nu, sigma0_sq, MapLayer::Road).unwrap()
    }

    #[test]
    fn weight_at_center_is_one() {
        let c = center(1.0, -2.0, [3.0, 1.0], 0.5);
        assert_eq!(density_weight(Vec2::new(1.0, -2.0), &c, 0, 0.01), 1.0);
    }

    #[test]
    fn weight_unit_variance_one_meter() {
        // Effective variance exactly 1 on both axes.
        let c = center(0.0, 0.0, [1.0, 1.0], 0.99);
        let w = density_weight(Vec2::new(1.0, 0.0), &c, 0, 0.01);
        assert!((w - (-0.5f64).exp()).abs() < 1e-12);
        assert!((w - 0.6065306597126334).abs() < 1e-9);
    }

    #[test]
    fn weight_matches_matrix_inverse_oracle() {
        // sigma_x^2 = 0.5, sigma_y^2 = 2, offset (1, 2).
        let c = CenterPoint {
            pos: Vec2::ZERO,
            o_cls: [1.0, 1.0],
            o_var: [[0.49, 1.99], [0.0, 0.0]],
        };
        let sigma0_sq = 0.01;
        let x = Vec2::new(1.0, 2.0);
        // Oracle: explicit 2x2 inverse of the diagonal covariance.
        let cov = [[0.49 + sigma0_sq, 0.0], [0.0, 1.99 + sigma0_sq]];
        let det = cov[0][0] * cov[1][1];
        let inv = [[cov[1][1] / det, 0.0], [0.0, cov[0][0] / det]];
        let m = x.x * x.x * inv[0][0] + x.y * x.y * inv[1][1];
        let expected = (-0.5 * m).exp();
        let w = density_weight(x, &c, 0, sigma0_sq);
        assert!((w - expected).abs() < 1e-15);
        assert!((w - (-2.0f64).exp()).abs() < 1e-12);
        assert!((w - 0.1353352832366127).abs() < 1e-9);
    }

    #[test]
    fn evidence_single_center_at_query() {
        let map = map_of(vec![center(2.0, 3.0, [3.0, 1.0], 0.0)], 2.0, 0.01);
        let (e, observed) = map.evidence_at(Vec2::new(2.0, 3.0));
        assert!(observed);
        assert!((e[0] - 3.0).abs() < 1e-12);
        assert!((e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evidence_empty_neighborhood() {
        let map = map_of(vec![center(10.0, 10.0, [3.0, 1.0], 0.0)], 2.0, 0.01);
        let (e, observed) = map.evidence_at(Vec2::ZERO);
        assert!(!observed);
        assert_eq!(e, [0.0, 0.0]);
        let d = map.dirichlet_at(Vec2::ZERO);
        assert_eq!(d.u, 1.0);
        assert_eq!(d.alpha, [1.0, 1.0]);
    }

    #[test]
    fn evidence_two_equidistant_centers() {
        // Both 1 m from the probe, unit effective variance, o_cls (2, 0).
        let map = map_of(
            vec![
                center(1.0, 0.0, [2.0, 0.0], 0.99),
                center(-1.0, 0.0, [2.0, 0.0], 0.99),
            ],
            2.0,
            0.01,
        );
        let (e, _) = map.evidence_at(Vec2::ZERO);
        // Hand evaluation: 2 centers * weight e^(-1/2) * evidence 2.
        let expected = 2.0 * 2.0 * (-0.5f64).exp();
        assert!((e[0] - expected).abs() < 1e-12);
        assert!((e[0] - 2.4261226388505335).abs() < 1e-9);
        assert_eq!(e[1], 0.0);
    }

    #[test]
    fn dirichlet_arithmetic() {
        let d = DirichletResult::from_evidence([0.0, 0.0], true);
        assert_eq!(d.p_hat, [0.5, 0.5]);
        assert_eq!(d.u, 1.0);

        let d = DirichletResult::from_evidence([3.0, 1.0], true);
        assert_eq!(d.alpha, [4.0, 2.0]);
        assert_eq!(d.strength, 6.0);
        assert!((d.p_hat[0] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((d.u - 1.0 / 3.0).abs() <= 1e-12);

        let d = DirichletResult::from_evidence([8.0, 0.0], true);
        assert!((d.p_hat[0] - 0.9).abs() <= 1e-12);
        assert!((d.u - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn normalization_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let e = [rng.gen::<f64>() * 50.0, rng.gen::<f64>() * 50.0];
            let d = DirichletResult::from_evidence(e, true);
            assert!((d.p_hat[0] + d.p_hat[1] - 1.0).abs() <= 1e-12);
            assert!(d.u > 0.0 && d.u <= 1.0);
        }
    }

    #[test]
    fn rasterize_empty_map() {
        let map = map_of(vec![], 2.0, 0.01);
        let spec = GridSpec::new(-2.0, -2.0, 0.4, 10, 10);
        let r = map.rasterize(&spec);
        assert!(r.u.data.iter().all(|&u| u == 1.0));
        assert!(r.observed.data.iter().all(|&o| !o));
    }

    #[test]
    fn rasterize_observed_matches_disc_oracle() {
        let map = map_of(vec![center(0.1, -0.3, [1.0, 0.5], 0.0)], 2.0, 0.01);
        let spec = GridSpec::new(-4.0, -4.0, 0.4, 20, 20);
        let r = map.rasterize(&spec);
        for (col, row, cell_center) in spec.iter_cells() {
            let within = cell_center.distance_sq(Vec2::new(0.1, -0.3)) < 4.0;
            assert_eq!(*r.observed.get(col, row), within, "cell ({col},{row})");
        }
    }

    #[test]
    fn rasterize_resolutions_agree_at_shared_centers() {
        let map = map_of(
            vec![
                center(0.3, 0.2, [2.0, 1.0], 0.2),
                center(1.1, -0.4, [0.5, 3.0], 0.1),
            ],
            2.0,
            0.25,
        );
        let coarse = GridSpec::new(-2.0, -2.0, 0.4, 10, 10);
        // Fine grid offset so every coarse cell center is also a fine center.
        let fine = GridSpec::new(-1.9, -1.9, 0.2, 20, 20);
        let rc = map.rasterize(&coarse);
        let rf = map.rasterize(&fine);
        let mut coincident = 0;
        for (col, row, p) in coarse.iter_cells() {
            if let Some((fc, fr)) = fine.cell_of(p) {
                let fine_center = fine.cell_center(fc, fr);
                // Centers may differ by rounding of the grid arithmetic;
                // the map is pointwise in continuous space, so values at
                // (nearly) the same point must (nearly) agree.
                if fine_center.distance(p) < 1e-12 {
                    coincident += 1;
                    assert!((rc.p_fg.get(col, row) - rf.p_fg.get(fc, fr)).abs() < 1e-9);
                    assert!((rc.u.get(col, row) - rf.u.get(fc, fr)).abs() < 1e-9);
                }
            }
        }
        assert!(coincident > 50, "only {coincident} coincident centers");
    }

    #[test]
    fn neighbor_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let centers: Vec<CenterPoint> = (0..400)
            .map(|_| {
                center(
                    rng.gen::<f64>() * 40.0 - 20.0,
                    rng.gen::<f64>() * 40.0 - 20.0,
                    [1.0, 1.0],
                    0.0,
                )
            })
            .collect();
        let map = map_of(centers.clone(), 2.0, 0.01);
        for _ in 0..1000 {
            let x = Vec2::new(
                rng.gen::<f64>() * 44.0 - 22.0,
                rng.gen::<f64>() * 44.0 - 22.0,
            );
            let mut brute: Vec<u32> = centers
                .iter()
                .enumerate()
                .filter(|(_, c)| c.pos.distance_sq(x) < 4.0)
                .map(|(i, _)| i as u32)
                .collect();
            brute.sort_unstable();
            assert_eq!(map.neighbor_indices(x), brute);
        }
    }

    #[test]
    fn evidence_is_additive_over_center_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut make = |n: usize| -> Vec<CenterPoint> {
            (0..n)
                .map(|_| {
                    center(
                        rng.gen::<f64>() * 6.0 - 3.0,
                        rng.gen::<f64>() * 6.0 - 3.0,
                        [rng.gen::<f64>() * 3.0, rng.gen::<f64>() * 3.0],
                        rng.gen::<f64>(),
                    )
                })
                .collect()
        };
        let a = make(30);
        let b = make(25);
        let union: Vec<CenterPoint> = a.iter().chain(b.iter()).copied().collect();
        let (ma, mb, mu) = (
            map_of(a, 2.0, 0.01),
            map_of(b, 2.0, 0.01),
            map_of(union, 2.0, 0.01),
        );
        for _ in 0..200 {
            let x = Vec2::new(rng.gen::<f64>() * 8.0 - 4.0, rng.gen::<f64>() * 8.0 - 4.0);
            let (ea, _) = ma.evidence_at(x);
            let (eb, _) = mb.evidence_at(x);
            let (eu, _) = mu.evidence_at(x);
            for k in 0..K {
                assert!((eu[k] - (ea[k] + eb[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adding_centers_never_raises_uncertainty() {
        let base = vec![center(0.0, 0.0, [1.0, 0.5], 0.2)];
        let map1 = map_of(base.clone(), 2.0, 0.01);
        let mut more = base;
        more.push(center(0.5, 0.5, [2.0, 0.0], 0.1));
        let map2 = map_of(more, 2.0, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let x = Vec2::new(rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0);
            assert!(map2.dirichlet_at(x).u <= map1.dirichlet_at(x).u + 1e-15);
        }
    }

    #[test]
    fn evidence_is_continuous_away_from_nu_boundary() {
        let map = map_of(vec![center(0.0, 0.0, [2.0, 1.0], 0.3)], 2.0, 0.25);
        let x = Vec2::new(0.7, -0.2);
        let (e0, _) = map.evidence_at(x);
        for delta in [1e-4, 1e-6, 1e-8] {
            let (e1, _) = map.evidence_at(x + Vec2::new(delta, delta));
            let diff = (e1[0] - e0[0]).abs() + (e1[1] - e0[1]).abs();
            assert!(diff < 20.0 * delta, "delta {delta}: diff {diff}");
        }
    }

    #[test]
    fn snapshot_csv_lists_every_center() {
        let map = map_of(
            vec![
                center(1.5, -2.0, [3.0, 0.5], 0.2),
                center(0.0, 0.0, [1.0, 1.0], 0.0),
            ],
            2.0,
            0.01,
        );
        let csv = map.snapshot_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "x,y,o_fg,o_bg,var_fg_x,var_fg_y,var_bg_x,var_bg_y"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], "1.5,-2,3,0.5,0.2,0.2,0.2,0.2");
    }

    #[test]
    fn expand_radius_zero_is_identity() {
        let map = map_of(vec![center(1.0, 1.0, [2.0, 0.5], 0.1)], 2.0, 0.01);
        let expanded = map.expand_centers(0.0, 0.6);
        assert_eq!(expanded.centers(), map.centers());
    }

    #[test]
    fn expand_single_center_matches_lattice_oracle() {
        let map = map_of(vec![center(0.0, 0.0, [4.0, 1.0], 0.1)], 2.0, 0.01);
        let expanded = map.expand_centers(1.2, 0.6);
        // Lattice oracle: offsets (i, j) != 0 with i^2 + j^2 <= (1.2/0.6)^2.
        let mut oracle = 0;
        for i in -2i64..=2 {
            for j in -2i64..=2 {
                if (i, j) != (0, 0) && i * i + j * j <= 4 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(oracle, 12);
        assert_eq!(expanded.centers().len(), 1 + oracle);
        for c in expanded.centers().iter().skip(1) {
            assert!(c.pos.norm() <= 1.2 + 1e-9);
            assert_eq!(c.o_var, map.centers()[0].o_var);
            let decay = (-c.pos.norm_sq() / (2.0 * 0.01)).exp();
            assert!((c.o_cls[0] - 4.0 * decay).abs() < 1e-12);
        }
    }

    #[test]
    fn expansion_never_decreases_evidence() {
        let map = map_of(
            vec![
                center(0.0, 0.0, [2.0, 1.0], 0.2),
                center(0.9, 0.3, [1.0, 2.0], 0.1),
            ],
            2.0,
            0.25,
        );
        let expanded = map.expand_centers(1.2, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let x = Vec2::new(rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0);
            let (e0, _) = map.evidence_at(x);
            let (e1, _) = expanded.evidence_at(x);
            assert!(e1[0] >= e0[0] - 1e-12 && e1[1] >= e0[1] - 1e-12);
        }
    }

    fn labeled_cloud() -> PointCloud {
        let mut points = Vec::new();
        for i in 0..10 {
            let x = i as f64 * 0.5;
            points.push(MeasurePoint::from_xyz(x, 0.0, -1.9, 0.4, PointLabel::Road));
        }
        points.push(MeasurePoint::from_xyz(
            1.0,
            2.0,
            -0.5,
            0.7,
            PointLabel::Vehicle,
        ));
        points.push(MeasurePoint::from_xyz(
            3.0,
            2.0,
            -1.8,
            -1.0,
            PointLabel::Other,
        ));
        PointCloud::new(points)
    }

    #[test]
    fn build_single_point_cloud() {
        let cloud = PointCloud::new(vec![MeasurePoint::from_xyz(
            1.23,
            -0.77,
            -1.9,
            0.2,
            PointLabel::Road,
        )]);
        let map = build_from_cloud(&cloud, &BuildConfig::new(MapLayer::Road)).unwrap();
        assert_eq!(map.centers().len(), 1);
        assert!((map.centers()[0].pos.x - 1.23).abs() < 1e-12);
        assert!((map.centers()[0].pos.y - (-0.77)).abs() < 1e-12);
    }

    #[test]
    fn build_constant_zero_evidence_gives_full_uncertainty() {
        let cfg = BuildConfig {
            init: InitScheme::Constant {
                o_cls: [0.0, 0.0],
                o_var: [[0.0; 2]; 2],
            },
            ..BuildConfig::new(MapLayer::Road)
        };
        let map = build_from_cloud(&labeled_cloud(), &cfg).unwrap();
        let spec = GridSpec::new(-1.0, -1.0, 0.4, 16, 10);
        let r = map.rasterize(&spec);
        for i in 0..spec.len() {
            if r.observed.data[i] {
                assert_eq!(r.u.data[i], 1.0);
            }
        }
    }

    #[test]
    fn build_center_count_matches_voxel_oracle() {
        let cloud = labeled_cloud();
        let map = build_from_cloud(&cloud, &BuildConfig::new(MapLayer::Road)).unwrap();
        let keys: std::collections::HashSet<(i64, i64)> = cloud
            .points
            .iter()
            .map(|p| ((p.x / 0.4).floor() as i64, (p.y / 0.4).floor() as i64))
            .collect();
        assert_eq!(map.centers().len(), keys.len());

        // Object layer drops the free-space point.
        let object = build_from_cloud(&cloud, &BuildConfig::new(MapLayer::Object)).unwrap();
        let keys_obj: std::collections::HashSet<(i64, i64)> = cloud
            .points
            .iter()
            .filter(|p| !p.is_free_space())
            .map(|p| ((p.x / 0.4).floor() as i64, (p.y / 0.4).floor() as i64))
            .collect();
        assert_eq!(object.centers().len(), keys_obj.len());
    }

    #[test]
    fn build_rejects_empty() {
        let empty = PointCloud::default();
        assert_eq!(
            build_from_cloud(&empty, &BuildConfig::new(MapLayer::Road)).unwrap_err(),
            MapError::NoObservableCenters
        );
        // Object layer with only free-space points is empty after filtering.
        let free_only = PointCloud::new(vec![MeasurePoint::from_xyz(
            1.0,
            1.0,
            -1.8,
            -1.0,
            PointLabel::Other,
        )]);
        assert_eq!(
            build_from_cloud(&free_only, &BuildConfig::new(MapLayer::Object)).unwrap_err(),
            MapError::NoObservableCenters
        );
    }
}
