//! Uncertainty-gated CPM exchange: request/response masks over shared grid
//! frames, the bit-exact payload codec, additive evidence fusion, and the
//! end-to-end pipeline plus CPM-size/IoU sweeps.

use crate::augment::{sample_free_space, FreeSpaceConfig};
use crate::evmap::{
    build_from_cloud, BuildConfig, EvidenceGrid, EvidentialMap, InitScheme, MapError, MapLayer,
};
use crate::fit::{fit_map, sample_targets, EpochLoss, FitConfig, FitError};
use crate::geom::Vec2;
use crate::grid::{Grid, GridSpec};
use crate::metrics::{iou, EvalInputs, IouMode, MetricsError};
use crate::scene_sim::{ground_truth_grids, raycast, to_agent_frame, Scenario, ScenarioError};
use crate::seed::{derive_seed, stage};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CpmDecodeError {
    #[error("payload truncated")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown layer tag {0}")]
    BadLayer(u8),
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error("cell ({col}, {row}) out of bounds")]
    CellOutOfBounds { col: u16, row: u16 },
    #[error("duplicate cell ({col}, {row})")]
    DuplicateCell { col: u16, row: u16 },
    #[error("cell ({col}, {row}) carries invalid evidence")]
    InvalidEvidence { col: u16, row: u16 },
}

#[derive(Debug, Error, PartialEq)]
pub enum CoopError {
    #[error("grid frames do not match")]
    FrameMismatch,
    #[error("road strategy requires a road mask")]
    MissingRoadMask,
    #[error("threshold must lie in [0, 1]")]
    BadThreshold,
    #[error("grid dimensions exceed the wire format's u16 range")]
    GridTooLarge,
    #[error(transparent)]
    Decode(#[from] CpmDecodeError),
}

/// Per-cell uncertainty with observed flags; unobserved cells carry u = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyGrid {
    pub spec: GridSpec,
    pub u: Vec<f64>,
    pub observed: Vec<bool>,
}

impl UncertaintyGrid {
    pub fn new(spec: GridSpec, u: Vec<f64>, observed: Vec<bool>) -> Self {
        assert_eq!(u.len(), spec.len());
        assert_eq!(observed.len(), spec.len());
        assert!(
            u.iter().zip(&observed).all(|(&uv, &obs)| obs || uv == 1.0),
            "unobserved cells must carry u = 1"
        );
        Self { spec, u, observed }
    }

    pub fn from_evidence(grid: &EvidenceGrid) -> Self {
        let u = (0..grid.spec.len()).map(|i| grid.dirichlet(i).u).collect();
        Self::new(grid.spec, u, grid.observed.clone())
    }
}

/// Boolean mask over a grid frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    pub spec: GridSpec,
    pub cells: Vec<bool>,
}

impl CellMask {
    pub fn new(spec: GridSpec, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), spec.len());
        Self { spec, cells }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_subset_of(&self, other: &CellMask) -> bool {
        self.spec.same_frame(&other.spec)
            && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }
}

/// Cells where the ego's uncertainty exceeds `u_ego`; unobserved cells have
/// u = 1 and are requested whenever u_ego < 1.
pub fn request_mask(ego: &UncertaintyGrid, u_ego: f64) -> CellMask {
    assert!((0.0..=1.0).contains(&u_ego), "u_ego must lie in [0, 1]");
    CellMask::new(ego.spec, ego.u.iter().map(|&u| u > u_ego).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareStrategy {
    All,
    Road,
}

impl ShareStrategy {
    pub fn name(self) -> &'static str {
        match self {
            ShareStrategy::All => "all",
            ShareStrategy::Road => "road",
        }
    }
}

/// Cells the cooperative agent answers: requested, observed by it, below
/// its own uncertainty threshold, and (road strategy) on the road mask.
pub fn response_mask(
    coop: &UncertaintyGrid,
    request: &CellMask,
    u_coop: f64,
    strategy: ShareStrategy,
    road_mask: Option<&CellMask>,
) -> Result<CellMask, CoopError> {
    if !(0.0..=1.0).contains(&u_coop) {
        return Err(CoopError::BadThreshold);
    }
    if !coop.spec.same_frame(&request.spec) {
        return Err(CoopError::FrameMismatch);
    }
    let road = match (strategy, road_mask) {
        (ShareStrategy::Road, Some(mask)) => {
            if !mask.spec.same_frame(&coop.spec) {
                return Err(CoopError::FrameMismatch);
            }
            Some(mask)
        }
        (ShareStrategy::Road, None) => return Err(CoopError::MissingRoadMask),
        (ShareStrategy::All, _) => None,
    };
    let cells = (0..coop.spec.len())
        .map(|i| {
            request.cells[i]
                && coop.observed[i]
                && coop.u[i] < u_coop
                && road.is_none_or(|m| m.cells[i])
        })
        .collect();
    Ok(CellMask::new(coop.spec, cells))
}

// --- wire format -------------------------------------------------------

pub const CPM_MAGIC: [u8; 4] = *b"CPM1";
pub const CPM_VERSION: u8 = 1;
/// Header bytes: magic + version + agent + frame + layer + origin (2 f32)
/// + cell size + dims (2 u16) + cell count.
pub const CPM_HEADER_LEN: usize = 34;
pub const CPM_CELL_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpmCell {
    pub col: u16,
    pub row: u16,
    pub e_fg: f32,
    pub e_bg: f32,
}

/// A decoded collective perception message: sparse evidence over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CpmPayload {
    pub agent_id: u32,
    pub frame_id: u32,
    pub layer: MapLayer,
    pub origin_x: f32,
    pub origin_y: f32,
    pub cell_size: f32,
    pub width: u16,
    pub height: u16,
    pub cells: Vec<CpmCell>,
}

impl CpmPayload {
    /// Select masked cells of an evidence grid into a payload, row-major.
    pub fn from_grid(
        grid: &EvidenceGrid,
        mask: &CellMask,
        agent_id: u32,
        frame_id: u32,
        layer: MapLayer,
    ) -> Result<CpmPayload, CoopError> {
        if !grid.spec.same_frame(&mask.spec) {
            return Err(CoopError::FrameMismatch);
        }
        if grid.spec.width > u16::MAX as usize || grid.spec.height > u16::MAX as usize {
            return Err(CoopError::GridTooLarge);
        }
        let mut cells = Vec::new();
        for row in 0..grid.spec.height {
            for col in 0..grid.spec.width {
                let i = grid.spec.index(col, row);
                if mask.cells[i] {
                    cells.push(CpmCell {
                        col: col as u16,
                        row: row as u16,
                        e_fg: grid.e[i][0] as f32,
                        e_bg: grid.e[i][1] as f32,
                    });
                }
            }
        }
        Ok(CpmPayload {
            agent_id,
            frame_id,
            layer,
            origin_x: grid.spec.origin_x as f32,
            origin_y: grid.spec.origin_y as f32,
            cell_size: grid.spec.cell_size as f32,
            width: grid.spec.width as u16,
            height: grid.spec.height as u16,
            cells,
        })
    }

    pub fn encoded_len(&self) -> usize {
        CPM_HEADER_LEN + CPM_CELL_LEN * self.cells.len()
    }

    /// True when the payload's frame equals the grid's (compared at f32
    /// precision, the wire resolution).
    pub fn frame_matches(&self, spec: &GridSpec) -> bool {
        self.origin_x == spec.origin_x as f32
            && self.origin_y == spec.origin_y as f32
            && self.cell_size == spec.cell_size as f32
            && self.width as usize == spec.width
            && self.height as usize == spec.height
    }
}

impl MapLayer {
    pub fn to_wire(self) -> u8 {
        match self {
            MapLayer::Road => 0,
            MapLayer::Object => 1,
        }
    }

    pub fn from_wire(tag: u8) -> Option<MapLayer> {
        match tag {
            0 => Some(MapLayer::Road),
            1 => Some(MapLayer::Object),
            _ => None,
        }
    }
}

/// Serialize to the little-endian wire format.
pub fn encode_cpm(payload: &CpmPayload) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.encoded_len());
    out.extend_from_slice(&CPM_MAGIC);
    out.push(CPM_VERSION);
    out.extend_from_slice(&payload.agent_id.to_le_bytes());
    out.extend_from_slice(&payload.frame_id.to_le_bytes());
    out.push(payload.layer.to_wire());
    out.extend_from_slice(&payload.origin_x.to_le_bytes());
    out.extend_from_slice(&payload.origin_y.to_le_bytes());
    out.extend_from_slice(&payload.cell_size.to_le_bytes());
    out.extend_from_slice(&payload.width.to_le_bytes());
    out.extend_from_slice(&payload.height.to_le_bytes());
    out.extend_from_slice(&(payload.cells.len() as u32).to_le_bytes());
    for cell in &payload.cells {
        out.extend_from_slice(&cell.col.to_le_bytes());
        out.extend_from_slice(&cell.row.to_le_bytes());
        out.extend_from_slice(&cell.e_fg.to_le_bytes());
        out.extend_from_slice(&cell.e_bg.to_le_bytes());
    }
    debug_assert_eq!(out.len(), payload.encoded_len());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CpmDecodeError> {
        if self.pos + n > self.bytes.len() {
            return Err(CpmDecodeError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CpmDecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CpmDecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CpmDecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CpmDecodeError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parse and validate a wire payload; rejects bad magic or version,
/// truncation, trailing bytes, and cells that are duplicated, out of
/// bounds, or carry negative/non-finite evidence.
pub fn decode_cpm(bytes: &[u8]) -> Result<CpmPayload, CpmDecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CPM_MAGIC {
        return Err(CpmDecodeError::BadMagic);
    }
    let version = r.u8()?;
    if version != CPM_VERSION {
        return Err(CpmDecodeError::BadVersion(version));
    }
    let agent_id = r.u32()?;
    let frame_id = r.u32()?;
    let layer_tag = r.u8()?;
    let layer = MapLayer::from_wire(layer_tag).ok_or(CpmDecodeError::BadLayer(layer_tag))?;
    let origin_x = r.f32()?;
    let origin_y = r.f32()?;
    let cell_size = r.f32()?;
    let width = r.u16()?;
    let height = r.u16()?;
    let n_cells = r.u32()? as usize;
    let mut cells = Vec::with_capacity(n_cells.min(1 << 20));
    let mut seen = std::collections::HashSet::with_capacity(n_cells.min(1 << 20));
    for _ in 0..n_cells {
        let col = r.u16()?;
        let row = r.u16()?;
        let e_fg = r.f32()?;
        let e_bg = r.f32()?;
        if col >= width || row >= height {
            return Err(CpmDecodeError::CellOutOfBounds { col, row });
        }
        if !seen.insert((col, row)) {
            return Err(CpmDecodeError::DuplicateCell { col, row });
        }
        if !(e_fg >= 0.0 && e_bg >= 0.0 && e_fg.is_finite() && e_bg.is_finite()) {
            return Err(CpmDecodeError::InvalidEvidence { col, row });
        }
        cells.push(CpmCell {
            col,
            row,
            e_fg,
            e_bg,
        });
    }
    if r.pos != bytes.len() {
        return Err(CpmDecodeError::TrailingBytes);
    }
    Ok(CpmPayload {
        agent_id,
        frame_id,
        layer,
        origin_x,
        origin_y,
        cell_size,
        width,
        height,
        cells,
    })
}

/// Add received evidence into the ego grid; listed cells become observed and
/// their Dirichlet re-derives from the fused evidence.
pub fn fuse(ego: &EvidenceGrid, payload: &CpmPayload) -> Result<EvidenceGrid, CoopError> {
    if !payload.frame_matches(&ego.spec) {
        return Err(CoopError::FrameMismatch);
    }
    let mut fused = ego.clone();
    for cell in &payload.cells {
        let i = fused.spec.index(cell.col as usize, cell.row as usize);
        fused.e[i][0] += cell.e_fg as f64;
        fused.e[i][1] += cell.e_bg as f64;
        fused.observed[i] = true;
    }
    Ok(fused)
}

// --- pipeline ----------------------------------------------------------

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Coop(#[from] CoopError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("scenario needs at least {needed} agents, has {actual}")]
    TooFewAgents { needed: usize, actual: usize },
}

/// Stage configuration for the scenario-to-grids pipeline.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub grid_res: f64,
    pub nu: f64,
    /// Variance floor per layer; the road layer uses a wider floor to close
    /// ring gaps, the object layer a tighter one to keep box edges crisp.
    pub road_sigma0_sq: f64,
    pub object_sigma0_sq: f64,
    pub center_voxel: f64,
    pub free_space: FreeSpaceConfig,
    pub init: InitScheme,
    pub road_fit: FitConfig,
    pub object_fit: FitConfig,
    /// Post-fit coordinate expansion (radius, step) for the object layer.
    pub object_expansion: Option<(f64, f64)>,
    pub layers: Vec<MapLayer>,
    pub seed_override: Option<u64>,
    /// Worker cap for per-agent stages; 0 means the hardware count.
    pub threads: usize,
}

impl PipelineConfig {
    pub fn sigma0_sq(&self, layer: MapLayer) -> f64 {
        match layer {
            MapLayer::Road => self.road_sigma0_sq,
            MapLayer::Object => self.object_sigma0_sq,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid_res: 0.4,
            nu: 2.0,
            road_sigma0_sq: 0.25,
            object_sigma0_sq: 0.04,
            center_voxel: 0.4,
            free_space: FreeSpaceConfig::default(),
            init: InitScheme::LabelHeuristic {
                strong: 2.0,
                weak: 0.1,
                var0: 0.05,
            },
            // The desk-scale maps need a hotter schedule than the fit
            // module's documented default to reach calibrated evidence.
            road_fit: FitConfig {
                lr: 0.2,
                ..FitConfig::road_default()
            },
            object_fit: FitConfig {
                lr: 0.2,
                ..FitConfig::object_default()
            },
            object_expansion: None,
            layers: vec![MapLayer::Road, MapLayer::Object],
            seed_override: None,
            threads: 0,
        }
    }
}

/// One agent's fitted map and grids for one layer.
#[derive(Debug, Clone)]
pub struct AgentLayerOutput {
    pub layer: MapLayer,
    pub map: EvidentialMap,
    pub curve: Vec<EpochLoss>,
    pub evidence: EvidenceGrid,
}

/// Everything the sweep and the CLI need from one pipeline run. The
/// scenario inside is re-expressed in the ego frame.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub scenario: Scenario,
    pub grid: GridSpec,
    pub ego_index: usize,
    pub gt_road: Grid<bool>,
    pub gt_vehicle: Grid<bool>,
    /// Indexed `[agent][layer position in config.layers]`.
    pub per_agent: Vec<Vec<AgentLayerOutput>>,
    pub layers: Vec<MapLayer>,
}

impl PipelineOutput {
    pub fn layer_output(&self, agent: usize, layer: MapLayer) -> Option<&AgentLayerOutput> {
        self.per_agent[agent].iter().find(|o| o.layer == layer)
    }

    pub fn gt_for(&self, layer: MapLayer) -> &Grid<bool> {
        match layer {
            MapLayer::Road => &self.gt_road,
            MapLayer::Object => &self.gt_vehicle,
        }
    }

    pub fn road_mask(&self) -> CellMask {
        CellMask::new(self.grid, self.gt_road.data.clone())
    }

    pub fn coop_indices(&self) -> Vec<usize> {
        (0..self.per_agent.len())
            .filter(|&i| i != self.ego_index)
            .collect()
    }
}

fn grid_for_scenario(scenario: &Scenario, nu: f64, res: f64) -> GridSpec {
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut take = |p: Vec2| {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    };
    for poly in &scenario.roads {
        for &v in &poly.vertices {
            take(v);
        }
    }
    for v in &scenario.vehicles {
        for c in v.footprint() {
            take(c);
        }
    }
    for a in &scenario.agents {
        take(a.pos());
    }
    let margin = Vec2::new(nu, nu);
    GridSpec::covering(min - margin, max + margin, res)
}

fn run_agent(
    scenario: &Scenario,
    agent_index: usize,
    grid: &GridSpec,
    cfg: &PipelineConfig,
) -> Result<Vec<AgentLayerOutput>, PipelineError> {
    let ego_index = scenario.ego_index();
    let own = raycast(scenario, agent_index)?;
    let free = sample_free_space(&own, [0.0; 3], &cfg.free_space);
    let mut merged = own;
    merged.extend(&free);
    let cloud = to_agent_frame(
        &merged,
        &scenario.agents[agent_index],
        &scenario.agents[ego_index],
    );

    let mut outputs = Vec::with_capacity(cfg.layers.len());
    for &layer in &cfg.layers {
        let build_cfg = BuildConfig {
            layer,
            nu: cfg.nu,
            sigma0_sq: cfg.sigma0_sq(layer),
            center_voxel: cfg.center_voxel,
            init: cfg.init,
        };
        let map = build_from_cloud(&cloud, &build_cfg)?;
        let (fit_cfg, stage_tag) = match layer {
            MapLayer::Road => (&cfg.road_fit, stage::TARGETS_ROAD),
            MapLayer::Object => (&cfg.object_fit, stage::TARGETS_OBJECT),
        };
        let seed = derive_seed(scenario.seed, &[stage_tag, agent_index as u64]);
        let targets = sample_targets(
            &cloud,
            &scenario.roads,
            &scenario.vehicles,
            &map,
            fit_cfg,
            seed,
        )?;
        let (fitted, curve) = fit_map(&map, &targets, fit_cfg)?;
        let final_map = match (layer, cfg.object_expansion) {
            (MapLayer::Object, Some((radius, step))) => fitted.expand_centers(radius, step),
            _ => fitted,
        };
        let evidence = final_map.rasterize_evidence(grid);
        outputs.push(AgentLayerOutput {
            layer,
            map: final_map,
            curve,
            evidence,
        });
    }
    Ok(outputs)
}

fn worker_count(requested: usize, jobs: usize) -> usize {
    let hardware = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = if requested == 0 { hardware } else { requested };
    cap.clamp(1, jobs.max(1))
}

/// Run raycast, augmentation, map building, fitting and rasterization for
/// every agent. Per-agent work may run on up to `cfg.threads` workers;
/// results are assembled in agent order, so the output is deterministic.
pub fn run_pipeline(
    scenario: &Scenario,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    scenario.validate()?;
    let mut scenario = scenario.clone();
    if let Some(seed) = cfg.seed_override {
        scenario.seed = seed;
    }
    let ego_index = scenario.ego_index();
    let local = scenario.in_agent_frame(ego_index)?;
    let grid = grid_for_scenario(&local, cfg.nu, cfg.grid_res);
    let (gt_road, gt_vehicle) = ground_truth_grids(&local, &grid);

    let n = local.agents.len();
    let workers = worker_count(cfg.threads, n);
    let mut results: Vec<Option<Result<Vec<AgentLayerOutput>, PipelineError>>> =
        (0..n).map(|_| None).collect();
    if workers <= 1 {
        for (i, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_agent(&local, i, &grid, cfg));
        }
    } else {
        let chunk = n.div_ceil(workers);
        std::thread::scope(|scope| {
            for (chunk_idx, slots) in results.chunks_mut(chunk).enumerate() {
                let local = &local;
                let grid = &grid;
                scope.spawn(move || {
                    for (offset, slot) in slots.iter_mut().enumerate() {
                        let agent = chunk_idx * chunk + offset;
                        *slot = Some(run_agent(local, agent, grid, cfg));
                    }
                });
            }
        });
    }
    let mut per_agent = Vec::with_capacity(n);
    for slot in results {
        per_agent.push(slot.expect("all agents processed")?);
    }
    Ok(PipelineOutput {
        scenario: local,
        grid,
        ego_index,
        gt_road,
        gt_vehicle,
        per_agent,
        layers: cfg.layers.clone(),
    })
}

// --- sweep -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// None marks the no-selection baseline row (written as -1 in CSV).
    pub u_ego: Option<f64>,
    pub layer: MapLayer,
    pub baseline_bytes: usize,
    pub selected_bytes: usize,
    pub iou_all: f64,
    pub iou_obs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u_ego,layer,baseline_bytes,selected_bytes,iou_all,iou_obs\n");
        for r in &self.rows {
            let u = r.u_ego.map_or(-1.0, |v| v);
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                u,
                r.layer.name(),
                r.baseline_bytes,
                r.selected_bytes,
                r.iou_all,
                r.iou_obs
            ));
        }
        out
    }

    pub fn row(&self, u_ego: Option<f64>, layer: MapLayer) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.layer == layer && r.u_ego == u_ego)
    }
}

/// Result of one request/response/fusion round for a layer.
#[derive(Debug, Clone)]
pub struct FusionRound {
    pub fused: EvidenceGrid,
    /// (cooperative agent index, its selected payload), in agent order.
    pub payloads: Vec<(usize, CpmPayload)>,
}

impl FusionRound {
    pub fn total_bytes(&self) -> usize {
        self.payloads.iter().map(|(_, p)| p.encoded_len()).sum()
    }
}

/// Run the request/response selection at `u_ego` (None = baseline: share
/// every observed cell) and fuse every cooperative agent's payload into the
/// ego grid.
pub fn fuse_selection(
    out: &PipelineOutput,
    layer: MapLayer,
    u_ego: Option<f64>,
    u_coop: f64,
    strategy: ShareStrategy,
) -> Result<FusionRound, PipelineError> {
    let ego = out
        .layer_output(out.ego_index, layer)
        .expect("layer was produced");
    let request = u_ego.map(|u| {
        let ego_unc = UncertaintyGrid::from_evidence(&ego.evidence);
        request_mask(&ego_unc, u)
    });
    let road_mask = out.road_mask();
    let mut fused = ego.evidence.clone();
    let mut payloads = Vec::new();
    for coop_idx in out.coop_indices() {
        let coop = out
            .layer_output(coop_idx, layer)
            .expect("layer was produced");
        let mask = match &request {
            Some(req) => {
                let coop_unc = UncertaintyGrid::from_evidence(&coop.evidence);
                response_mask(
                    &coop_unc,
                    req,
                    u_coop,
                    strategy,
                    (strategy == ShareStrategy::Road).then_some(&road_mask),
                )?
            }
            // Baseline: share every observed cell, no selection.
            None => CellMask::new(coop.evidence.spec, coop.evidence.observed.clone()),
        };
        let payload = CpmPayload::from_grid(&coop.evidence, &mask, coop_idx as u32, 0, layer)?;
        fused = fuse(&fused, &payload)?;
        payloads.push((coop_idx, payload));
    }
    Ok(FusionRound { fused, payloads })
}

fn score(
    out: &PipelineOutput,
    layer: MapLayer,
    grid: &EvidenceGrid,
    u_thr: f64,
) -> Result<(f64, f64), PipelineError> {
    let raster = grid.to_raster();
    let inputs = EvalInputs::new(
        &raster.p_fg,
        &raster.u,
        &raster.observed,
        out.gt_for(layer),
        u_thr,
    )?;
    Ok((iou(&inputs, IouMode::All), iou(&inputs, IouMode::Obs)))
}

/// Sweep the ego threshold over `u_egos` for every produced layer,
/// measuring CPM bytes and fused-map IoUs; a baseline row per layer shares
/// every observed cell.
pub fn sweep_from_output(
    out: &PipelineOutput,
    u_egos: &[f64],
    strategy: ShareStrategy,
    u_coop: f64,
    u_thr: f64,
) -> Result<SweepTable, PipelineError> {
    if out.per_agent.len() < 2 {
        return Err(PipelineError::TooFewAgents {
            needed: 2,
            actual: out.per_agent.len(),
        });
    }
    let mut rows = Vec::new();
    for &layer in &out.layers {
        let baseline = fuse_selection(out, layer, None, u_coop, strategy)?;
        let baseline_bytes = baseline.total_bytes();
        let (iou_all, iou_obs) = score(out, layer, &baseline.fused, u_thr)?;
        rows.push(SweepRow {
            u_ego: None,
            layer,
            baseline_bytes,
            selected_bytes: baseline_bytes,
            iou_all,
            iou_obs,
        });
        for &u_ego in u_egos {
            let round = fuse_selection(out, layer, Some(u_ego), u_coop, strategy)?;
            let (iou_all, iou_obs) = score(out, layer, &round.fused, u_thr)?;
            rows.push(SweepRow {
                u_ego: Some(u_ego),
                layer,
                baseline_bytes,
                selected_bytes: round.total_bytes(),
                iou_all,
                iou_obs,
            });
        }
    }
    Ok(SweepTable { rows })
}

/// Full pipeline plus threshold sweep over a scenario.
pub fn sweep(
    scenario: &Scenario,
    u_egos: &[f64],
    strategy: ShareStrategy,
    cfg: &PipelineConfig,
    u_coop: f64,
    u_thr: f64,
) -> Result<SweepTable, PipelineError> {
    if scenario.agents.len() < 2 {
        return Err(PipelineError::TooFewAgents {
            needed: 2,
            actual: scenario.agents.len(),
        });
    }
    let out = run_pipeline(scenario, cfg)?;
    sweep_from_output(&out, u_egos, strategy, u_coop, u_thr)
}
