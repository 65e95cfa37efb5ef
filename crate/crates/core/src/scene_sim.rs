//! Synthetic 2D driving scenes and plan-view LiDAR simulation.
//!
//! A scenario holds road polygons, oriented vehicle boxes and agent poses.
//! LiDAR is emulated in plan view with fixed ground-ring radii: each ray
//! either hits the first vehicle rectangle along its bearing or drops ground
//! returns at every ring radius closer than that hit. All geometry is in
//! meters; yaw is counterclockwise from +x in a right-handed frame.

use crate::geom::{ray_segment_distance, Polygon, Vec2};
use crate::grid::{Grid, GridSpec};
use crate::seed::{derive_seed, stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Semantic class of a measurement point. The discriminant order is the
/// tie-break order for majority votes (lowest wins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PointLabel {
    Road = 0,
    Vehicle = 1,
    Other = 2,
}

/// One measurement point carrying the input feature vector
/// [x, y, z, d, cos_theta, sin_theta, intensity].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// 3D range from the sensor origin; kept consistent with (x, y, z).
    pub d: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    /// Reflection intensity; -1 marks synthetic free-space samples.
    pub intensity: f64,
    pub label: PointLabel,
}

impl MeasurePoint {
    /// Build a point from coordinates, deriving d and the bearing terms.
    pub fn from_xyz(x: f64, y: f64, z: f64, intensity: f64, label: PointLabel) -> Self {
        let d = (x * x + y * y + z * z).sqrt();
        let planar = (x * x + y * y).sqrt();
        let (cos_theta, sin_theta) = if planar > 0.0 {
            (x / planar, y / planar)
        } else {
            (1.0, 0.0)
        };
        Self {
            x,
            y,
            z,
            d,
            cos_theta,
            sin_theta,
            intensity,
            label,
        }
    }

    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_free_space(&self) -> bool {
        self.intensity == -1.0
    }

    pub fn feature(&self) -> [f64; 7] {
        [
            self.x,
            self.y,
            self.z,
            self.d,
            self.cos_theta,
            self.sin_theta,
            self.intensity,
        ]
    }
}

/// A set of measurement points expressed in one sensor frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<MeasurePoint>,
}

impl PointCloud {
    pub fn new(points: Vec<MeasurePoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    /// Points that are actual reflections (not free-space samples).
    pub fn reflected(&self) -> PointCloud {
        PointCloud::new(
            self.points
                .iter()
                .copied()
                .filter(|p| !p.is_free_space())
                .collect(),
        )
    }
}

/// A 3D oriented box; yaw rotates the length axis from +x, counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl OrientedBox3 {
    pub fn new(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            l,
            w,
            h,
            yaw,
        }
    }

    pub fn center_xy(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Footprint corners in world coordinates, counterclockwise.
    pub fn footprint(&self) -> [Vec2; 4] {
        let c = self.center_xy();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        let local = [
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
            Vec2::new(-hl, -hw),
            Vec2::new(hl, -hw),
        ];
        local.map(|p| c + p.rotated(self.yaw))
    }

    pub fn contains_xy(&self, p: Vec2) -> bool {
        let local = (p - self.center_xy()).rotated(-self.yaw);
        local.x.abs() <= self.l / 2.0 && local.y.abs() <= self.w / 2.0
    }

    /// Distance from a point to the footprint outline (zero on the outline,
    /// positive both inside and outside).
    pub fn edge_distance_xy(&self, p: Vec2) -> f64 {
        let local = (p - self.center_xy()).rotated(-self.yaw);
        let dx = local.x.abs() - self.l / 2.0;
        let dy = local.y.abs() - self.w / 2.0;
        if dx <= 0.0 && dy <= 0.0 {
            -dx.max(dy)
        } else {
            (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt()
        }
    }

    /// Footprint diagonal, the location-offset normalizer of the box codec.
    pub fn diag_xy(&self) -> f64 {
        (self.l * self.l + self.w * self.w).sqrt()
    }
}

/// LiDAR emulation parameters; ground rings stand in for elevation angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub n_rays: u32,
    pub ring_radii: Vec<f64>,
    pub max_range: f64,
    pub mount_height: f64,
}

/// An agent pose with its sensor; exactly one agent per scenario is the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub is_ego: bool,
    pub lidar: LidarSpec,
}

impl AgentSpec {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// A complete scene: roads, vehicles, agents, and the master seed all
/// randomness derives from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub roads: Vec<Polygon>,
    pub vehicles: Vec<OrientedBox3>,
    pub agents: Vec<AgentSpec>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("road polygon {index} has fewer than 3 vertices")]
    PolygonTooSmall { index: usize },
    #[error("road polygon {index} is self-intersecting")]
    PolygonNotSimple { index: usize },
    #[error("scenario must have exactly one ego agent, found {count}")]
    EgoCount { count: usize },
    #[error("agent {index} pose is not on any road polygon")]
    AgentOffRoad { index: usize },
    #[error("agent {index}: n_rays must be >= 4")]
    TooFewRays { index: usize },
    #[error("agent {index}: ring_radii must be strictly increasing and <= max_range")]
    BadRings { index: usize },
    #[error("vehicle {index}: dimensions must be positive")]
    BadVehicleDims { index: usize },
    #[error("vehicle {index}: yaw must lie in (-pi, pi]")]
    BadVehicleYaw { index: usize },
    #[error("agent index {index} out of range ({count} agents)")]
    BadAgentIndex { index: usize, count: usize },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (index, poly) in self.roads.iter().enumerate() {
            if poly.vertices.len() < 3 {
                return Err(ScenarioError::PolygonTooSmall { index });
            }
            if !poly.is_simple() {
                return Err(ScenarioError::PolygonNotSimple { index });
            }
        }
        for (index, v) in self.vehicles.iter().enumerate() {
            if v.l <= 0.0 || v.w <= 0.0 || v.h <= 0.0 {
                return Err(ScenarioError::BadVehicleDims { index });
            }
            if v.yaw <= -std::f64::consts::PI || v.yaw > std::f64::consts::PI {
                return Err(ScenarioError::BadVehicleYaw { index });
            }
        }
        let ego_count = self.agents.iter().filter(|a| a.is_ego).count();
        if ego_count != 1 {
            return Err(ScenarioError::EgoCount { count: ego_count });
        }
        for (index, agent) in self.agents.iter().enumerate() {
            if agent.lidar.n_rays < 4 {
                return Err(ScenarioError::TooFewRays { index });
            }
            let radii = &agent.lidar.ring_radii;
            let increasing = radii.windows(2).all(|w| w[0] < w[1]);
            let in_range = radii.iter().all(|&r| r > 0.0 && r <= agent.lidar.max_range);
            if !increasing || !in_range {
                return Err(ScenarioError::BadRings { index });
            }
            if !self.roads.iter().any(|r| r.contains(agent.pos())) {
                return Err(ScenarioError::AgentOffRoad { index });
            }
        }
        Ok(())
    }

    pub fn ego_index(&self) -> usize {
        self.agents
            .iter()
            .position(|a| a.is_ego)
            .expect("validated scenario has an ego agent")
    }

    pub fn on_road(&self, p: Vec2) -> bool {
        self.roads.iter().any(|r| r.contains(p))
    }

    /// Re-express the whole scene in the frame of one agent (that agent ends
    /// up at the origin with yaw 0). Rigid plan-view transform; box heights
    /// and the seed are unchanged.
    pub fn in_agent_frame(&self, agent_index: usize) -> Result<Scenario, ScenarioError> {
        let reference = self
            .agents
            .get(agent_index)
            .ok_or(ScenarioError::BadAgentIndex {
                index: agent_index,
                count: self.agents.len(),
            })?
            .clone();
        let to_local = |p: Vec2| (p - reference.pos()).rotated(-reference.yaw);
        let roads = self
            .roads
            .iter()
            .map(|poly| Polygon::new(poly.vertices.iter().map(|&v| to_local(v)).collect()))
            .collect();
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| {
                let c = to_local(v.center_xy());
                OrientedBox3 {
                    x: c.x,
                    y: c.y,
                    yaw: normalize_angle(v.yaw - reference.yaw),
                    ..*v
                }
            })
            .collect();
        let agents = self
            .agents
            .iter()
            .map(|a| {
                let p = to_local(a.pos());
                AgentSpec {
                    x: p.x,
                    y: p.y,
                    yaw: normalize_angle(a.yaw - reference.yaw),
                    ..a.clone()
                }
            })
            .collect();
        Ok(Scenario {
            roads,
            vehicles,
            agents,
            seed: self.seed,
        })
    }
}

/// Wrap an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut r = a % tau;
    if r <= -std::f64::consts::PI {
        r += tau;
    } else if r > std::f64::consts::PI {
        r -= tau;
    }
    r
}

/// Simulate one revolution of the agent's LiDAR. The returned cloud is in
/// that agent's sensor frame (origin at the agent, x along its yaw, z zero
/// at mount height). Per ray: ground returns at every ring radius strictly
/// closer than the first vehicle hit, then the vehicle point if the hit is
/// within range. Intensities are drawn from a seed derived from
/// (scenario.seed, agent_index), so reruns are bit-identical.
pub fn raycast(scenario: &Scenario, agent_index: usize) -> Result<PointCloud, ScenarioError> {
    let agent = scenario
        .agents
        .get(agent_index)
        .ok_or(ScenarioError::BadAgentIndex {
            index: agent_index,
            count: scenario.agents.len(),
        })?;
    let lidar = &agent.lidar;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        scenario.seed,
        &[stage::RAYCAST, agent_index as u64],
    ));
    let mut points = Vec::new();

    for ray in 0..lidar.n_rays {
        let local_bearing = ray as f64 * std::f64::consts::TAU / lidar.n_rays as f64;
        let world_dir = Vec2::new(1.0, 0.0).rotated(agent.yaw + local_bearing);
        let local_dir = Vec2::new(1.0, 0.0).rotated(local_bearing);

        // Planar distance to the nearest vehicle rectangle along this ray.
        let mut hit: Option<(f64, &OrientedBox3)> = None;
        for vehicle in &scenario.vehicles {
            let corners = vehicle.footprint();
            for i in 0..4 {
                if let Some(t) =
                    ray_segment_distance(agent.pos(), world_dir, corners[i], corners[(i + 1) % 4])
                {
                    if hit.is_none_or(|(best, _)| t < best) {
                        hit = Some((t, vehicle));
                    }
                }
            }
        }
        let hit_dist = hit.map_or(f64::INFINITY, |(t, _)| t);

        for &radius in &lidar.ring_radii {
            if radius >= hit_dist {
                break;
            }
            let world_pos = agent.pos() + world_dir * radius;
            let label = if scenario.on_road(world_pos) {
                PointLabel::Road
            } else {
                PointLabel::Other
            };
            let local = local_dir * radius;
            let intensity = rng.gen::<f64>();
            points.push(MeasurePoint::from_xyz(
                local.x,
                local.y,
                -lidar.mount_height,
                intensity,
                label,
            ));
        }

        if let Some((t, vehicle)) = hit {
            if t < lidar.max_range {
                let local = local_dir * t;
                let z = vehicle.z - lidar.mount_height;
                let intensity = rng.gen::<f64>();
                points.push(MeasurePoint::from_xyz(
                    local.x,
                    local.y,
                    z,
                    intensity,
                    PointLabel::Vehicle,
                ));
            }
        }
    }
    Ok(PointCloud::new(points))
}

/// Re-express a cloud captured by `from` in the sensor frame of `to`.
/// Planar rigid motion; z is shifted by the mount-height difference and the
/// range and bearing fields are recomputed in the new frame.
pub fn to_agent_frame(cloud: &PointCloud, from: &AgentSpec, to: &AgentSpec) -> PointCloud {
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let world = from.pos() + p.xy().rotated(from.yaw);
            let local = (world - to.pos()).rotated(-to.yaw);
            let z = p.z + from.lidar.mount_height - to.lidar.mount_height;
            MeasurePoint::from_xyz(local.x, local.y, z, p.intensity, p.label)
        })
        .collect();
    PointCloud::new(points)
}

/// Binary ground-truth grids: a cell is road-true iff its center lies inside
/// any road polygon, vehicle-true iff inside any vehicle footprint.
pub fn ground_truth_grids(scenario: &Scenario, spec: &GridSpec) -> (Grid<bool>, Grid<bool>) {
    let road = Grid::from_fn(*spec, |_, _, center| scenario.on_road(center));
    let vehicle = Grid::from_fn(*spec, |_, _, center| {
        scenario.vehicles.iter().any(|v| v.contains_xy(center))
    });
    (road, vehicle)
}
