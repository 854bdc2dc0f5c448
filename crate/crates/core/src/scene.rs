//! Experiment geometry: loudspeaker ring, bright and dark zones, their
//! control and monitor grids, virtual-source sampling and grid masks.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{GapMode, SceneConfig};
use crate::error::{PszError, Result};
use crate::geometry::Point3;
use crate::room::{FrequencyGrid, RoomSpec};

/// Side length of the full control grid the named masks are defined on.
pub const CONTROL_GRID_SIDE: usize = 12;

/// Rectangular listening zone lying in the horizontal plane `z = center.z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub center: Point3,
    /// Extent along x.
    pub width: f64,
    /// Extent along y.
    pub height: f64,
}

impl ZoneSpec {
    pub fn new(center: Point3, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(PszError::InvalidInput(format!(
                "zone size must be positive, got {width} x {height}"
            )));
        }
        Ok(ZoneSpec {
            center,
            width,
            height,
        })
    }
}

/// Regular grid of points covering a zone footprint, stored row-major with
/// x as the slow axis: point `(ix, iy)` is at index `ix * ny + iy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointGrid {
    pub points: Vec<Point3>,
    pub nx: usize,
    pub ny: usize,
    /// Spacing along x and y in metres.
    pub spacing: [f64; 2],
}

impl PointGrid {
    /// An `nx x ny` grid whose corner points sit on the zone corners.
    pub fn over_zone(zone: &ZoneSpec, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(PszError::InvalidInput(
                "grid needs at least one point per side".into(),
            ));
        }
        let step = |extent: f64, n: usize| if n > 1 { extent / (n - 1) as f64 } else { 0.0 };
        let spacing = [step(zone.width, nx), step(zone.height, ny)];
        let x0 = if nx > 1 {
            zone.center.x - zone.width / 2.0
        } else {
            zone.center.x
        };
        let y0 = if ny > 1 {
            zone.center.y - zone.height / 2.0
        } else {
            zone.center.y
        };
        let mut points = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                points.push(Point3::new(
                    x0 + ix as f64 * spacing[0],
                    y0 + iy as f64 * spacing[1],
                    zone.center.z,
                ));
            }
        }
        Ok(PointGrid {
            points,
            nx,
            ny,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny + iy
    }
}

/// Loudspeakers evenly spaced on a horizontal circle. Speaker `l` sits at
/// angle `2 pi l / L` measured from +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudspeakerArray {
    pub positions: Vec<Point3>,
    pub center: Point3,
    pub radius: f64,
}

impl LoudspeakerArray {
    pub fn circular(center: Point3, radius: f64, count: usize) -> Result<Self> {
        if count == 0 || !(radius > 0.0 && radius.is_finite()) {
            return Err(PszError::InvalidInput(format!(
                "array needs a positive radius and at least one speaker, got r = {radius}, L = {count}"
            )));
        }
        let positions = (0..count)
            .map(|l| {
                let angle = 2.0 * PI * l as f64 / count as f64;
                Point3::new(
                    center.x + radius * angle.cos(),
                    center.y + radius * angle.sin(),
                    center.z,
                )
            })
            .collect();
        Ok(LoudspeakerArray {
            positions,
            center,
            radius,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Index of the speaker closest to `p`; ties go to the lower index.
    pub fn nearest(&self, p: &Point3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.positions.iter().enumerate() {
            let d = s.distance(p);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// `(name, points per side, interval in grid steps)` for every named mask,
/// from the full grid down to a single point.
const MASK_TABLE: [(&str, usize, usize); 10] = [
    ("Grid-12", 12, 1),
    ("Grid-6", 6, 2),
    ("Grid-4", 4, 3),
    ("Grid-3#1", 3, 4),
    ("Grid-3#2", 3, 3),
    ("Grid-3#3", 3, 2),
    ("Grid-2#1", 2, 6),
    ("Grid-2#2", 2, 4),
    ("Grid-2#3", 2, 1),
    ("Grid-1", 1, 0),
];

/// Names of all masks, densest first.
pub const MASK_NAMES: [&str; 10] = [
    "Grid-12", "Grid-6", "Grid-4", "Grid-3#1", "Grid-3#2", "Grid-3#3", "Grid-2#1", "Grid-2#2",
    "Grid-2#3", "Grid-1",
];

/// A square sub-grid of the 12 x 12 control grid. The same side indices are
/// used on both axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPattern {
    pub name: String,
    pub side_indices: Vec<usize>,
    pub grid_side: usize,
}

impl MaskPattern {
    /// Kept cells as flat row-major indices into the full grid, ascending.
    pub fn flat_indices(&self) -> Vec<usize> {
        let n = self.grid_side;
        self.side_indices
            .iter()
            .flat_map(|&ix| self.side_indices.iter().map(move |&iy| ix * n + iy))
            .collect()
    }

    pub fn point_count(&self) -> usize {
        self.side_indices.len() * self.side_indices.len()
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        self.side_indices.binary_search(&ix).is_ok() && self.side_indices.binary_search(&iy).is_ok()
    }
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Looks up a named mask. Each pattern is `count` indices `interval` apart,
/// shifted so it sits in the middle of the 0..=11 axis:
/// `offset = floor((11 - (count - 1) * interval) / 2)`.
pub fn mask_indices(name: &str) -> Result<MaskPattern> {
    let &(name, count, interval) = MASK_TABLE
        .iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| PszError::UnknownMask(name.to_string()))?;
    let last = CONTROL_GRID_SIDE - 1;
    let span = (count - 1) * interval;
    let offset = (last - span) / 2;
    Ok(MaskPattern {
        name: name.to_string(),
        side_indices: (0..count).map(|i| offset + i * interval).collect(),
        grid_side: CONTROL_GRID_SIDE,
    })
}

pub fn all_masks() -> Vec<MaskPattern> {
    MASK_NAMES
        .iter()
        .map(|n| mask_indices(n).expect("table names are valid"))
        .collect()
}

/// Complex values on a zone grid, indexed `(frequency, ix, iy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor {
    data: Vec<Complex64>,
    n_freqs: usize,
    nx: usize,
    ny: usize,
}

impl GridTensor {
    pub fn new(data: Vec<Complex64>, n_freqs: usize, nx: usize, ny: usize) -> Result<Self> {
        if data.len() != n_freqs * nx * ny {
            return Err(PszError::shape(
                "grid tensor",
                format!("{n_freqs} x {nx} x {ny}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(GridTensor {
            data,
            n_freqs,
            nx,
            ny,
        })
    }

    pub fn zeros(n_freqs: usize, nx: usize, ny: usize) -> Self {
        GridTensor {
            data: vec![Complex64::new(0.0, 0.0); n_freqs * nx * ny],
            n_freqs,
            nx,
            ny,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_freqs, self.nx, self.ny]
    }

    pub fn n_freqs(&self) -> usize {
        self.n_freqs
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn at(&self, k: usize, ix: usize, iy: usize) -> Complex64 {
        self.data[(k * self.nx + ix) * self.ny + iy]
    }

    /// All grid values at frequency `k`, row-major.
    pub fn frequency(&self, k: usize) -> &[Complex64] {
        let n = self.cells();
        &self.data[k * n..(k + 1) * n]
    }
}

/// Zeroes every cell outside the mask; kept cells are copied unchanged.
pub fn apply_mask(tensor: &GridTensor, pattern: &MaskPattern) -> Result<GridTensor> {
    let [k_len, nx, ny] = tensor.shape();
    if nx != pattern.grid_side || ny != pattern.grid_side {
        return Err(PszError::shape(
            "masked control tensor",
            format!("{0} x {0} grid", pattern.grid_side),
            format!("{nx} x {ny}"),
        ));
    }
    let zero = Complex64::new(0.0, 0.0);
    let keep: Vec<bool> = (0..nx * ny)
        .map(|i| pattern.contains(i / ny, i % ny))
        .collect();
    let mut data = tensor.data.clone();
    for k in 0..k_len {
        for (v, &kept) in data[k * nx * ny..(k + 1) * nx * ny].iter_mut().zip(&keep) {
            if !kept {
                *v = zero;
            }
        }
    }
    GridTensor::new(data, k_len, nx, ny)
}

/// Draws a point uniformly over the annulus `r_min <= r <= r_max` around
/// `center`, in the plane `z = center.z`.
pub fn sample_virtual_source<R: Rng + ?Sized>(
    rng: &mut R,
    center: Point3,
    r_min: f64,
    r_max: f64,
) -> Point3 {
    let angle = 2.0 * PI * rng.random::<f64>();
    let u: f64 = rng.random();
    let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
    Point3::new(
        center.x + r * angle.cos(),
        center.y + r * angle.sin(),
        center.z,
    )
}

/// The full experimental layout derived from a [`SceneConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: RoomSpec,
    pub array: LoudspeakerArray,
    pub bright: ZoneSpec,
    pub dark: ZoneSpec,
    pub control_bright: PointGrid,
    pub control_dark: PointGrid,
    pub monitor_bright: PointGrid,
    pub monitor_dark: PointGrid,
    pub freqs: FrequencyGrid,
    pub max_order: u32,
    pub source_annulus: (f64, f64),
    /// Centre of the source annulus, at plane height.
    pub origin: Point3,
}

impl Scene {
    pub fn from_config(cfg: &SceneConfig) -> Result<Self> {
        make_scene(cfg)
    }

    /// Bright control points followed by dark control points.
    pub fn control_points(&self) -> Vec<Point3> {
        [
            &self.control_bright.points[..],
            &self.control_dark.points[..],
        ]
        .concat()
    }

    /// Bright monitor points followed by dark monitor points.
    pub fn monitor_points(&self) -> Vec<Point3> {
        [
            &self.monitor_bright.points[..],
            &self.monitor_dark.points[..],
        ]
        .concat()
    }

    /// Speaker used as the array-effort reference: the one nearest the
    /// bright-zone centre.
    pub fn reference_speaker(&self) -> usize {
        self.array.nearest(&self.bright.center)
    }

    pub fn sample_virtual_source<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        sample_virtual_source(
            rng,
            self.origin,
            self.source_annulus.0,
            self.source_annulus.1,
        )
    }
}

/// Builds the loudspeaker array, zones and grids. Zones are centred on the
/// room's y midline, placed symmetrically about the room centre along x with
/// the bright zone on the -x side.
pub fn make_scene(cfg: &SceneConfig) -> Result<Scene> {
    let room = cfg.room_spec()?;
    room.reflection_coefficient()?;
    let freqs = cfg.frequency_grid()?;
    let z = cfg.zones.plane_height;
    let rc = room.center();
    let origin = Point3::new(rc.x, rc.y, z);

    let array = LoudspeakerArray::circular(origin, cfg.array.radius, cfg.array.count)?;

    let [w, h] = cfg.zones.size;
    let separation = match cfg.zones.gap_mode {
        GapMode::EdgeToEdge => cfg.zones.gap + w,
        GapMode::CenterToCenter => cfg.zones.gap,
    };
    if !(cfg.zones.gap.is_finite() && separation > w) {
        return Err(PszError::InvalidInput(format!(
            "zones overlap: centre separation {separation} m with zone width {w} m"
        )));
    }
    let bright = ZoneSpec::new(Point3::new(rc.x - separation / 2.0, rc.y, z), w, h)?;
    let dark = ZoneSpec::new(Point3::new(rc.x + separation / 2.0, rc.y, z), w, h)?;

    let (nc, nm) = (cfg.zones.control_points, cfg.zones.monitor_points);
    let control_bright = PointGrid::over_zone(&bright, nc, nc)?;
    let control_dark = PointGrid::over_zone(&dark, nc, nc)?;
    let monitor_bright = PointGrid::over_zone(&bright, nm, nm)?;
    let monitor_dark = PointGrid::over_zone(&dark, nm, nm)?;

    let (r_min, r_max) = (cfg.sources.r_min, cfg.sources.r_max);
    if !(r_min >= 0.0 && r_max >= r_min && r_max.is_finite()) {
        return Err(PszError::InvalidInput(format!(
            "source annulus must satisfy 0 <= r_min <= r_max, got [{r_min}, {r_max}]"
        )));
    }
    // The annulus is inside the room iff its outer circle is.
    let reach = [
        origin.x - r_max,
        origin.x + r_max,
        origin.y - r_max,
        origin.y + r_max,
    ];
    if reach[0] <= 0.0 || reach[1] >= room.dims[0] || reach[2] <= 0.0 || reach[3] >= room.dims[1] {
        return Err(PszError::InvalidInput(format!(
            "source annulus radius {r_max} m leaves the room"
        )));
    }

    let scene = Scene {
        room,
        array,
        bright,
        dark,
        control_bright,
        control_dark,
        monitor_bright,
        monitor_dark,
        freqs,
        max_order: cfg.max_order()?,
        source_annulus: (r_min, r_max),
        origin,
    };
    let all = scene
        .array
        .positions
        .iter()
        .chain(scene.control_points().iter())
        .chain(scene.monitor_points().iter())
        .copied()
        .collect::<Vec<_>>();
    if let Some(p) = all.iter().find(|p| !room.contains(p)) {
        return Err(PszError::InvalidInput(format!(
            "scene point {p:?} lies outside the room"
        )));
    }
    Ok(scene)
}
