//! Deterministic synthetic world: wall texture, tile pixel sampling, robot
//! kinematics with odometry noise and falls, and landmark observations.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::colour::{rgb_to_ycrcb, PixelRGB, PixelYCrCb};
use crate::error::{Error, Result};
use crate::geometry::{CameraFrame, CameraModel, CylinderParams, Occluder, TileGrid, TileId, ViewPose};
use crate::selfloc::{FieldMap, LandmarkObservation, Pose2D};

/// Independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Texture = 1,
    Motion = 2,
    Landmarks = 3,
    Pixels = 4,
    SelfLoc = 5,
    Orientation = 6,
    Warmup = 7,
}

/// Words reserved per frame inside a stream.
const FRAME_WORDS: u128 = 1 << 24;

/// Generator for `stream`, positioned at the start of `frame`'s block.
pub fn substream(seed: u64, stream: Stream, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.set_word_pos(u128::from(frame) * FRAME_WORDS);
    rng
}

/// A coloured rectangle of wall, in azimuth and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub azimuth_start: f64,
    pub azimuth_width: f64,
    pub z_range: (f64, f64),
    pub colour: PixelRGB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub base: PixelRGB,
    /// Placed first, in order; later patches paint over earlier ones.
    pub patches: Vec<Patch>,
    /// Additional patches with seed-drawn placement, coloured from [`PALETTE`].
    pub random_patches: usize,
    /// Repeat the texture every half turn.
    pub periodic: bool,
    /// Per-pixel chroma noise standard deviation, in 8-bit levels.
    pub noise_std: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            base: PixelRGB::new(128, 128, 128),
            patches: Vec::new(),
            random_patches: 12,
            periodic: false,
            noise_std: 4.0,
        }
    }
}

pub const PALETTE: [PixelRGB; 12] = [
    PixelRGB::new(220, 40, 40),
    PixelRGB::new(40, 180, 60),
    PixelRGB::new(40, 70, 220),
    PixelRGB::new(230, 220, 50),
    PixelRGB::new(50, 210, 210),
    PixelRGB::new(210, 60, 200),
    PixelRGB::new(240, 140, 30),
    PixelRGB::new(120, 50, 170),
    PixelRGB::new(150, 230, 60),
    PixelRGB::new(250, 160, 190),
    PixelRGB::new(30, 120, 120),
    PixelRGB::new(130, 80, 40),
];

/// Noise scales of the simulated sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    /// Odometry standard deviation as a fraction of the commanded motion.
    pub odometry_fraction: f64,
    pub range_base: f64,
    pub range_fraction: f64,
    pub bearing: f64,
    pub max_range: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            odometry_fraction: 0.1,
            range_base: 0.1,
            range_fraction: 0.05,
            bearing: 0.05,
            max_range: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub field: FieldMap,
    pub cylinder: CylinderParams,
    pub camera: CameraModel,
    pub texture: TextureSpec,
    pub noise: SensorNoise,
    pub occluders: Vec<Occluder>,
    /// Pixels sampled per visible tile.
    pub samples_per_tile: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            field: FieldMap::default(),
            cylinder: CylinderParams::default(),
            camera: CameraModel::default(),
            texture: TextureSpec::default(),
            noise: SensorNoise::default(),
            occluders: Vec::new(),
            samples_per_tile: 64,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        self.cylinder.validate()?;
        self.camera.validate()?;
        if !self.field.is_point_symmetric(1e-9) {
            return Err(Error::invalid("landmark layout must be point-symmetric"));
        }
        let n = &self.noise;
        let nonneg = [n.odometry_fraction, n.range_base, n.range_fraction, n.bearing, self.texture.noise_std];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !(n.max_range > 0.0 && n.max_range.is_finite()) {
            return Err(Error::invalid("sensor noise levels must be finite and non-negative"));
        }
        if self.samples_per_tile == 0 {
            return Err(Error::invalid("sim.samples_per_tile must be at least 1"));
        }
        for p in &self.texture.patches {
            if !(p.azimuth_width > 0.0 && p.azimuth_width < TAU && p.z_range.1 > p.z_range.0) {
                return Err(Error::invalid(format!("degenerate texture patch {p:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PlacedPatch {
    start: f64,
    width: f64,
    z_range: (f64, f64),
    colour: PixelYCrCb,
}

/// A synthesized wall texture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    base: PixelYCrCb,
    patches: Vec<PlacedPatch>,
    periodic: bool,
    pub noise_std: f64,
}

impl Texture {
    fn period(&self) -> f64 {
        if self.periodic {
            PI
        } else {
            TAU
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Noise-free colour at a wall point.
    pub fn colour_at(&self, azimuth: f64, z: f64) -> PixelYCrCb {
        let period = self.period();
        let a = azimuth.rem_euclid(period);
        self.patches
            .iter()
            .rev()
            .find(|p| {
                (a - p.start).rem_euclid(period) < p.width && z >= p.z_range.0 && z < p.z_range.1
            })
            .map_or(self.base, |p| p.colour)
    }
}

/// Builds the texture: declared patches, then seed-placed ones.
pub fn synthesize_background(spec: &TextureSpec, cylinder: &CylinderParams, seed: u64) -> Texture {
    let period = if spec.periodic { PI } else { TAU };
    let mut patches: Vec<PlacedPatch> = spec
        .patches
        .iter()
        .map(|p| PlacedPatch {
            start: p.azimuth_start.rem_euclid(period),
            width: p.azimuth_width,
            z_range: p.z_range,
            colour: rgb_to_ycrcb(p.colour),
        })
        .collect();
    let mut rng = substream(seed, Stream::Texture, 0);
    let mid = 0.5 * (cylinder.z_min + cylinder.z_max);
    let bands = [(cylinder.z_min, mid), (mid, cylinder.z_max), (cylinder.z_min, cylinder.z_max)];
    for i in 0..spec.random_patches {
        let start = rng.random_range(0.0..period);
        let width = rng.random_range(20f64.to_radians()..60f64.to_radians());
        let band = bands[rng.random_range(0..bands.len())];
        patches.push(PlacedPatch {
            start,
            width,
            z_range: band,
            colour: rgb_to_ycrcb(PALETTE[i % PALETTE.len()]),
        });
    }
    Texture {
        base: rgb_to_ycrcb(spec.base),
        patches,
        periodic: spec.periodic,
        noise_std: spec.noise_std,
    }
}

fn noisy(c: PixelYCrCb, noise: &Option<Normal<f64>>, rng: &mut impl Rng) -> PixelYCrCb {
    let Some(n) = noise else {
        return c;
    };
    let jitter = |v: u8, rng: &mut _| (f64::from(v) + n.sample(rng)).round().clamp(0.0, 255.0) as u8;
    let cr = jitter(c.cr, rng);
    let cb = jitter(c.cb, rng);
    PixelYCrCb::new(c.y, cr, cb)
}

fn chroma_noise(std: f64) -> Option<Normal<f64>> {
    (std > 0.0).then(|| Normal::new(0.0, std).expect("finite non-negative std"))
}

fn sample_in_tile(grid: &TileGrid, tile: TileId, rng: &mut impl Rng) -> (f64, f64) {
    let (a0, a1) = grid.azimuth_span(tile.col);
    let (z0, z1) = grid.height_span(tile.row);
    (rng.random_range(a0..a1), rng.random_range(z0..z1))
}

/// `k` pixels drawn uniformly over the wall area of `tile`, with chroma noise.
///
/// The viewpoint only selects which tiles are sampled; the pixels themselves
/// come straight from the texture.
pub fn render_tile_samples(
    _true_view: &ViewPose,
    grid: &TileGrid,
    tile: TileId,
    texture: &Texture,
    noise_std: f64,
    k: usize,
    rng: &mut impl Rng,
) -> Vec<PixelYCrCb> {
    let noise = chroma_noise(noise_std);
    (0..k)
        .map(|_| {
            let (a, z) = sample_in_tile(grid, tile, rng);
            noisy(texture.colour_at(a, z), &noise, rng)
        })
        .collect()
}

/// Pixels of the image region where the robot expects `tile`.
///
/// Points are drawn over the tile under the believed camera, projected to
/// the image, and the true camera's ray through that pixel decides which wall
/// point is actually seen. With a correct belief this equals
/// [`render_tile_samples`] up to rounding.
#[allow(clippy::too_many_arguments)]
pub fn render_perceived_tile(
    believed: &CameraFrame,
    truth: &CameraFrame,
    grid: &TileGrid,
    tile: TileId,
    texture: &Texture,
    noise_std: f64,
    k: usize,
    rng: &mut impl Rng,
) -> Vec<PixelYCrCb> {
    let noise = chroma_noise(noise_std);
    (0..k)
        .map(|_| {
            let (a, z) = sample_in_tile(grid, tile, rng);
            let seen = believed
                .project(grid.wall_point(a, z))
                .and_then(|(px, py)| truth.hit_wall(grid, px, py));
            let colour = match seen {
                Some((ta, tz)) => texture.colour_at(ta, tz),
                None => texture.base,
            };
            noisy(colour, &noise, rng)
        })
        .collect()
}

/// Binary PPM of the texture unrolled over azimuth (x) and height (y, top row first).
pub fn panorama_ppm(texture: &Texture, cylinder: &CylinderParams, width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for j in 0..height {
        let z = cylinder.z_max - (j as f64 + 0.5) / height as f64 * (cylinder.z_max - cylinder.z_min);
        for i in 0..width {
            let a = (i as f64 + 0.5) / width as f64 * TAU;
            let p = texture.colour_at(a, z);
            out.extend_from_slice(&ycrcb_to_rgb(p));
        }
    }
    out
}

fn ycrcb_to_rgb(p: PixelYCrCb) -> [u8; 3] {
    let y = f64::from(p.y);
    let cr = f64::from(p.cr) - 128.0;
    let cb = f64::from(p.cb) - 128.0;
    let c = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    [
        c(y + 1.402 * cr),
        c(y - 0.344_136 * cb - 0.714_136 * cr),
        c(y + 1.772 * cb),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    HeadOnly,
    PenaltyWalk,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::HeadOnly => "head-only",
            ScenarioKind::PenaltyWalk => "penalty-walk",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "head-only" => Some(ScenarioKind::HeadOnly),
            "penalty-walk" => Some(ScenarioKind::PenaltyWalk),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitKind {
    #[serde(rename = "correct")]
    CorrectPose,
    #[serde(rename = "reflected")]
    ReflectedPose,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::CorrectPose => "correct",
            InitKind::ReflectedPose => "reflected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "correct" => Some(InitKind::CorrectPose),
            "reflected" => Some(InitKind::ReflectedPose),
            _ => None,
        }
    }
}

/// Head sweep and walking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub head_amplitude: f64,
    /// rad/s
    pub head_rate: f64,
    /// m/s
    pub walk_speed: f64,
    /// rad/s
    pub turn_rate: f64,
    pub head_only_start: Pose2D,
    pub penalty_spot: f64,
}

impl Default for Motion {
    fn default() -> Self {
        Self {
            head_amplitude: 60f64.to_radians(),
            head_rate: 20f64.to_radians(),
            walk_speed: 0.15,
            turn_rate: 0.6,
            head_only_start: Pose2D::new(-1.0, -1.5, FRAC_PI_2),
            penalty_spot: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub duration_frames: u64,
    pub init: InitKind,
    pub frame_rate: f64,
    /// Start from the reflection of the nominal start pose.
    pub mirrored_start: bool,
    /// Frame at which the robot falls over, if any.
    pub fall_frame: Option<u64>,
    pub motion: Motion,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, init: InitKind) -> Self {
        Self {
            kind,
            duration_frames: 2000,
            init,
            frame_rate: 10.0,
            mirrored_start: false,
            fall_frame: None,
            motion: Motion::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_frames == 0 {
            return Err(Error::invalid("scenario duration must be positive"));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::invalid("frame rate must be positive"));
        }
        let m = &self.motion;
        if ![m.head_amplitude, m.head_rate, m.walk_speed, m.turn_rate, m.penalty_spot]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            return Err(Error::invalid("motion parameters must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn start_pose(&self) -> Pose2D {
        let p = match self.kind {
            ScenarioKind::HeadOnly => self.motion.head_only_start,
            ScenarioKind::PenaltyWalk => Pose2D::new(-self.motion.penalty_spot, 0.0, 0.0),
        };
        if self.mirrored_start {
            p.reflect()
        } else {
            p
        }
    }

    /// Triangle wave starting at zero and rising.
    pub fn head_yaw(&self, frame: u64) -> f64 {
        let a = self.motion.head_amplitude;
        if a <= 0.0 || self.motion.head_rate <= 0.0 {
            return 0.0;
        }
        let u = (self.motion.head_rate * frame as f64 * self.dt()).rem_euclid(4.0 * a);
        if u < a {
            u
        } else if u < 3.0 * a {
            2.0 * a - u
        } else {
            u - 4.0 * a
        }
    }

    fn fall_frames(&self) -> u64 {
        (2.0 * self.frame_rate).round() as u64
    }
}

/// Everything the robot senses in one frame, plus the hidden truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBundle {
    pub frame: u64,
    pub true_pose: Pose2D,
    /// Robot-frame `(forward, left, turn)` since the previous frame.
    pub odometry: (f64, f64, f64),
    pub head_yaw: f64,
    pub fall: bool,
    pub observations: Vec<LandmarkObservation>,
    pub tile_samples: Vec<(TileId, Vec<PixelYCrCb>)>,
}

/// Hidden simulator state carried between frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub pose: Pose2D,
    /// Index of the penalty spot being walked to, in the robot's own belief.
    target: Option<bool>,
    /// Set once the fall has been signalled.
    fall_done: bool,
}

impl WorldState {
    pub fn start(scenario: &Scenario) -> Self {
        Self {
            pose: scenario.start_pose(),
            target: None,
            fall_done: false,
        }
    }
}

/// Commanded robot-frame displacement for one frame.
fn command(scenario: &Scenario, state: &mut WorldState, belief: &Pose2D) -> (f64, f64, f64) {
    if scenario.kind == ScenarioKind::HeadOnly {
        return (0.0, 0.0, 0.0);
    }
    let m = &scenario.motion;
    let dt = scenario.dt();
    let spot = |positive: bool| if positive { (m.penalty_spot, 0.0) } else { (-m.penalty_spot, 0.0) };
    let dist = |t: (f64, f64)| (t.0 - belief.x).hypot(t.1 - belief.y);
    let positive = *state
        .target
        .get_or_insert_with(|| dist(spot(true)) >= dist(spot(false)));
    let positive = if dist(spot(positive)) < 0.15 {
        state.target = Some(!positive);
        !positive
    } else {
        positive
    };
    let goal = spot(positive);
    let bearing = angle::diff((goal.1 - belief.y).atan2(goal.0 - belief.x), belief.heading);
    let turn = (1.5 * bearing).clamp(-m.turn_rate, m.turn_rate) * dt;
    let forward = if bearing.abs() < 0.35 { m.walk_speed } else { 0.2 * m.walk_speed } * dt;
    (forward, 0.0, turn)
}

fn odometry_noise(delta: (f64, f64, f64), frac: f64, rng: &mut impl Rng) -> (f64, f64, f64) {
    let stds = [
        frac * delta.0.abs(),
        0.5 * frac * delta.0.abs(),
        frac * delta.2.abs() + 0.05 * frac * delta.0.abs(),
    ];
    let mut draw = |s: f64| {
        if s > 0.0 {
            Normal::new(0.0, s).expect("finite std").sample(rng)
        } else {
            0.0
        }
    };
    let n = [draw(stds[0]), draw(stds[1]), draw(stds[2])];
    (delta.0 + n[0], delta.1 + n[1], delta.2 + n[2])
}

/// Landmarks within range and inside the camera's horizontal field of view,
/// as seen from `pose` with the head turned by `head_yaw`.
pub fn observe_landmarks(
    pose: &Pose2D,
    head_yaw: f64,
    world: &WorldSpec,
    rng: &mut impl Rng,
) -> Vec<LandmarkObservation> {
    let n = &world.noise;
    let half_fov = 0.5 * world.camera.horizontal_fov;
    let mut truth: Vec<_> = world
        .field
        .landmarks
        .iter()
        .filter_map(|l| {
            let (dx, dy) = (l.position.0 - pose.x, l.position.1 - pose.y);
            let range = dx.hypot(dy);
            let bearing = angle::diff(dy.atan2(dx), pose.heading);
            (range <= n.max_range && angle::diff(bearing, head_yaw).abs() <= half_fov)
                .then_some((l.class, range, bearing))
        })
        .collect();
    // Noise is drawn in a pose-independent order so reflected poses see paired draws.
    truth.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    truth
        .into_iter()
        .map(|(class, range, bearing)| {
            let sr = n.range_base + n.range_fraction * range;
            let sb = n.bearing;
            let dr = if sr > 0.0 { Normal::new(0.0, sr).expect("finite std").sample(rng) } else { 0.0 };
            let db = if sb > 0.0 { Normal::new(0.0, sb).expect("finite std").sample(rng) } else { 0.0 };
            LandmarkObservation {
                landmark_class: class,
                bearing: angle::wrap(bearing + db),
                range: (range + dr).max(0.0),
                noise_std: (sr.max(1e-3), sb.max(1e-3)),
            }
        })
        .collect()
}

/// Advances the world by one frame. Frame 0 reports the start pose unchanged.
///
/// `belief` is the robot's own current pose estimate; the walking scenario
/// steers by it. Tile samples are left empty; see [`sense_tiles`].
pub fn step_world(
    scenario: &Scenario,
    frame: u64,
    world: &WorldSpec,
    state: &mut WorldState,
    belief: &Pose2D,
) -> FrameBundle {
    let mut motion_rng = substream(world.seed, Stream::Motion, frame);
    let mut fall = false;
    let mut delta = (0.0, 0.0, 0.0);
    let mut head_frame = frame;
    if frame > 0 {
        match scenario.fall_frame {
            Some(f) if !state.fall_done && frame >= f => {
                head_frame = f;
                if frame >= f + scenario.fall_frames() {
                    let jolt = motion_rng.random_range(-30f64.to_radians()..=30f64.to_radians());
                    state.pose = Pose2D::new(state.pose.x, state.pose.y, state.pose.heading + jolt);
                    state.fall_done = true;
                    fall = true;
                    head_frame = frame;
                }
            }
            _ => {
                delta = command(scenario, state, belief);
                state.pose = state.pose.compose(delta);
            }
        }
    }
    let odometry = odometry_noise(delta, world.noise.odometry_fraction, &mut motion_rng);
    let head_yaw = scenario.head_yaw(head_frame);
    let mut lm_rng = substream(world.seed, Stream::Landmarks, frame);
    let observations = if fall {
        Vec::new()
    } else {
        observe_landmarks(&state.pose, head_yaw, world, &mut lm_rng)
    };
    FrameBundle {
        frame,
        true_pose: state.pose,
        odometry,
        head_yaw,
        fall,
        observations,
        tile_samples: Vec::new(),
    }
}

/// Fills `bundle.tile_samples` for the tiles the robot expects to see under
/// `believed_view`.
pub fn sense_tiles(
    world: &WorldSpec,
    grid: &TileGrid,
    texture: &Texture,
    bundle: &mut FrameBundle,
    believed_view: &ViewPose,
    tiles: &[TileId],
) {
    let truth = ViewPose::new(
        (bundle.true_pose.x, bundle.true_pose.y),
        bundle.true_pose.heading,
        bundle.head_yaw,
        believed_view.head_pitch,
    );
    let believed = CameraFrame::new(believed_view, &world.camera);
    let truth = CameraFrame::new(&truth, &world.camera);
    let mut rng = substream(world.seed, Stream::Pixels, bundle.frame);
    bundle.tile_samples = tiles
        .iter()
        .map(|&id| {
            let px = render_perceived_tile(
                &believed,
                &truth,
                grid,
                id,
                texture,
                texture.noise_std,
                world.samples_per_tile,
                &mut rng,
            );
            (id, px)
        })
        .collect();
}
