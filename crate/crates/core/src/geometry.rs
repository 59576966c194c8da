//! Machine layout and finite-difference grids.
//!
//! Coordinates: in the mould `x` runs from the ingot mid-plane (0) to the
//! ingot surface (`l`) and on into the wall, `z` points down from the
//! meniscus (0) to the mould exit (`big_z`). Curvilinear sections use
//! `(r, phi)` with `phi` measured from the section entry; the rectilinear
//! section uses `x` along the strand and `z` across it.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MouldGeometry {
    /// Half-thickness of the ingot [m].
    pub l: f64,
    /// Ingot height inside the mould [m].
    pub big_z: f64,
    /// Outer (water-side) coordinate of the mould wall [m].
    pub d: f64,
    /// Top of the wall, measured on the `z` axis (negative: above the meniscus) [m].
    pub z0: f64,
    /// Effective air-gap thickness [m].
    pub delta: f64,
}

impl MouldGeometry {
    pub fn validate(&self) -> Result<()> {
        let Self { l, big_z, d, z0, delta } = *self;
        if !(l > 0.0 && big_z > 0.0 && delta > 0.0) {
            return Err(CoreError::Config("mould l, big_z and delta must be positive".into()));
        }
        if !(d > l + delta) {
            return Err(CoreError::Config(format!(
                "mould wall coordinate d = {d} must exceed l + delta = {}",
                l + delta
            )));
        }
        if !(z0 <= 0.0) {
            return Err(CoreError::Config(format!("wall top z0 = {z0} must be at or above the meniscus (<= 0)")));
        }
        Ok(())
    }
}

/// Spray nozzles along one face of a section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NozzleRow {
    /// Nozzle axis coordinates (rad on curved sections, m on the straight one).
    #[serde(default)]
    pub nozzles: Vec<f64>,
    /// Footprint half-width, same unit as the axes.
    pub w: f64,
}

/// Surface node classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum Membership {
    /// Outside every footprint; the heat-transfer coefficient is the baseline.
    K,
    /// Under nozzle `nozzle` with signed offset `y` from its axis.
    B { nozzle: usize, y: f64 },
}

impl Membership {
    pub fn is_b(&self) -> bool {
        matches!(self, Membership::B { .. })
    }

    pub fn offset(&self) -> Option<f64> {
        match self {
            Membership::K => None,
            Membership::B { y, .. } => Some(*y),
        }
    }
}

// Footprint edges are inclusive; this absorbs grid round-off at |y| = w.
const EDGE_TOL: f64 = 1e-9;

impl NozzleRow {
    pub fn empty(w: f64) -> Self {
        Self { nozzles: Vec::new(), w }
    }

    pub fn validate(&self, span: f64) -> Result<()> {
        if !(self.w > 0.0) {
            return Err(CoreError::Config(format!("nozzle footprint half-width w = {} must be > 0", self.w)));
        }
        let mut axes = self.nozzles.clone();
        axes.sort_by(f64::total_cmp);
        for &a in &axes {
            if a - self.w < -EDGE_TOL || a + self.w > span + EDGE_TOL {
                return Err(CoreError::Config(format!(
                    "nozzle footprint [{}, {}] leaves the section [0, {span}]",
                    a - self.w,
                    a + self.w
                )));
            }
        }
        for p in axes.windows(2) {
            if p[1] - p[0] <= 2.0 * self.w {
                return Err(CoreError::Config(format!(
                    "nozzle footprints around {} and {} overlap (w = {})",
                    p[0], p[1], self.w
                )));
            }
        }
        Ok(())
    }

    /// K/B classification of a surface coordinate.
    pub fn classify(&self, s: f64) -> Membership {
        let nearest = self
            .nozzles
            .iter()
            .enumerate()
            .map(|(i, &a)| (i, s - a))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        match nearest {
            Some((nozzle, y)) if y.abs() <= self.w + EDGE_TOL => Membership::B { nozzle, y: y.clamp(-self.w, self.w) },
            _ => Membership::K,
        }
    }

    /// Signed offset from the nearest nozzle axis; an error when `s` is in K.
    pub fn nearest_nozzle_offset(&self, s: f64) -> Result<f64> {
        self.classify(s).offset().ok_or_else(|| {
            CoreError::Precondition(format!("surface coordinate {s} is not under any nozzle footprint"))
        })
    }
}

/// Piecewise-constant water discharge schedule `tau -> G`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DischargeSchedule(pub Vec<[f64; 2]>);

impl DischargeSchedule {
    pub fn discharge_at(&self, tau: f64) -> Option<f64> {
        self.0.iter().take_while(|p| p[0] <= tau).last().map(|p| p[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvilinearSection {
    pub index_m: usize,
    /// Inner radius [m].
    pub r_m: f64,
    /// Angular extent [rad].
    pub phi_span: f64,
    pub inner: NozzleRow,
    pub outer: NozzleRow,
    #[serde(default)]
    pub discharge: DischargeSchedule,
}

impl CurvilinearSection {
    /// Angular withdrawal velocity for casting speed `v`, taken at mid-thickness.
    pub fn theta(&self, v: f64, l: f64) -> f64 {
        v / (self.r_m + l)
    }

    pub fn row(&self, face: Face) -> &NozzleRow {
        match face {
            Face::Inner => &self.inner,
            Face::Outer => &self.outer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectilinearSection {
    /// Inner surface coordinate [m].
    pub z_p: f64,
    /// Strand length to the end of the section [m].
    pub x_f: f64,
    pub inner: NozzleRow,
    pub outer: NozzleRow,
}

impl RectilinearSection {
    pub fn row(&self, face: Face) -> &NozzleRow {
        match face {
            Face::Inner => &self.inner,
            Face::Outer => &self.outer,
        }
    }
}

/// Sections in casting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MachineLayout {
    pub mould: MouldGeometry,
    pub curvilinear: Vec<CurvilinearSection>,
    pub rectilinear: Option<RectilinearSection>,
}

impl Default for MachineLayout {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// Same values as the bundled layout file.
impl Default for MouldGeometry {
    fn default() -> Self {
        Self { l: 0.1, big_z: 0.8, d: 0.1255, z0: -0.1, delta: 0.0005 }
    }
}

/// Strict form of [`MachineLayout`] for whole layout files, which must not
/// fall back on the bundled layout.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    mould: MouldGeometry,
    #[serde(default)]
    curvilinear: Vec<CurvilinearSection>,
    #[serde(default)]
    rectilinear: Option<RectilinearSection>,
}

const DEFAULT_LAYOUT: &str = include_str!("../data/layout.toml");

impl MachineLayout {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: LayoutFile = toml::from_str(text).map_err(|e| CoreError::Config(format!("layout file: {e}")))?;
        Ok(Self { mould: f.mould, curvilinear: f.curvilinear, rectilinear: f.rectilinear })
    }

    /// Desk-scale slab caster: 0.2 m thick strand, two curved sections, one straight.
    pub fn desk_scale() -> Self {
        Self::from_toml(DEFAULT_LAYOUT).expect("bundled layout file is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.mould.validate()?;
        for (m, s) in self.curvilinear.iter().enumerate() {
            if !(s.r_m > 0.0 && s.phi_span > 0.0) {
                return Err(CoreError::Config(format!("curvilinear section {} needs r_m > 0 and phi_span > 0", m + 1)));
            }
            s.inner.validate(s.phi_span)?;
            s.outer.validate(s.phi_span)?;
        }
        if let Some(r) = &self.rectilinear {
            if !(r.x_f > 0.0) {
                return Err(CoreError::Config(format!("rectilinear x_f = {} must be > 0", r.x_f)));
            }
            r.inner.validate(r.x_f)?;
            r.outer.validate(r.x_f)?;
        }
        Ok(())
    }

    pub fn section(&self, id: SectionId) -> Result<()> {
        let ok = match id {
            SectionId::Mould => true,
            SectionId::Curvilinear(m) => m >= 1 && m <= self.curvilinear.len(),
            SectionId::Rectilinear => self.rectilinear.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::Precondition(format!("machine has no section {id}")))
        }
    }
}

/// Which cooled face of a secondary-cooling section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    /// `r = r_m` on curved sections, `z = z_p` on the straight one.
    #[default]
    Inner,
    Outer,
}

/// Section identifier; curvilinear sections are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SectionId {
    Mould,
    Curvilinear(usize),
    Rectilinear,
}

impl std::fmt::Display for SectionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SectionId::Mould => f.write_str("mould"),
            SectionId::Curvilinear(m) => write!(f, "curvilinear{m}"),
            SectionId::Rectilinear => f.write_str("rectilinear"),
        }
    }
}

impl std::str::FromStr for SectionId {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mould" => Ok(SectionId::Mould),
            "rectilinear" => Ok(SectionId::Rectilinear),
            _ => s
                .strip_prefix("curvilinear")
                .and_then(|n| n.parse().ok())
                .filter(|m| *m >= 1)
                .map(SectionId::Curvilinear)
                .ok_or_else(|| CoreError::Config(format!("unknown section id {s:?}"))),
        }
    }
}

impl TryFrom<String> for SectionId {
    type Error = CoreError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SectionId> for String {
    fn from(id: SectionId) -> String {
        id.to_string()
    }
}

/// Discretization steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Transverse (radial) step through the ingot thickness [m].
    pub q: f64,
    /// Vertical step in the mould [m].
    pub dz: f64,
    /// Transverse step through the mould wall [m].
    pub wall_dx: f64,
    /// Angular step on curvilinear sections [rad].
    pub dphi: f64,
    /// Step along the rectilinear section [m].
    pub dx_rect: f64,
    /// Time step [s]; zero or negative selects 90 % of the stability bound.
    pub dt: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { q: 0.01, dz: 0.02, wall_dx: 0.0125, dphi: 0.005, dx_rect: 0.1, dt: 0.25 }
    }
}

/// Uniform 1D node set.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl Axis {
    fn spanning(what: &str, start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(CoreError::Config(format!("{what}: grid step must be > 0")));
        }
        let len = end - start;
        let intervals = (len / step).round();
        if intervals < 1.0 || (intervals * step - len).abs() > 1e-9 * len.abs().max(1.0) {
            return Err(CoreError::Config(format!(
                "{what}: extent {len} is not a whole multiple of the step {step}"
            )));
        }
        Ok(Self { start, step, n: intervals as usize + 1 })
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.coord(self.n - 1)
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }
}

/// Surface nodes of one cooled face with their K/B classification.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub coords: Vec<f64>,
    pub membership: Vec<Membership>,
}

impl SurfaceGrid {
    fn classify(axis: &Axis, row: &NozzleRow) -> Self {
        let coords = axis.coords();
        let membership = coords.iter().map(|&s| row.classify(s)).collect();
        Self { coords, membership }
    }

    pub fn k_count(&self) -> usize {
        self.membership.iter().filter(|m| !m.is_b()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MouldGrid {
    /// Ingot, `x` from the mid-plane to the surface.
    pub ingot_x: Axis,
    pub ingot_z: Axis,
    /// Wall, `x` from `l + delta` to `d`.
    pub wall_x: Axis,
    pub wall_z: Axis,
    /// Index of the wall row at the meniscus (`z = 0`).
    pub meniscus_row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionGrid {
    pub id: SectionId,
    /// Through-thickness axis: radius on curved sections, `z` on the straight one.
    pub across: Axis,
    /// Along-strand axis: angle on curved sections, `x` on the straight one.
    pub along: Axis,
    pub inner: SurfaceGrid,
    pub outer: SurfaceGrid,
}

impl SectionGrid {
    pub fn surface(&self, face: Face) -> &SurfaceGrid {
        match face {
            Face::Inner => &self.inner,
            Face::Outer => &self.outer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineGrids {
    pub mould: MouldGrid,
    pub curvilinear: Vec<SectionGrid>,
    pub rectilinear: Option<SectionGrid>,
}

impl MachineGrids {
    pub fn section(&self, id: SectionId) -> Option<&SectionGrid> {
        match id {
            SectionId::Mould => None,
            SectionId::Curvilinear(m) => self.curvilinear.get(m.wrapping_sub(1)),
            SectionId::Rectilinear => self.rectilinear.as_ref(),
        }
    }
}

/// Node coordinates and surface classification for every section.
pub fn build_grids(layout: &MachineLayout, spec: &GridSpec) -> Result<MachineGrids> {
    layout.validate()?;
    let m = &layout.mould;
    let ingot_x = Axis::spanning("ingot half-thickness", 0.0, m.l, spec.q)?;
    if ingot_x.n < 3 {
        return Err(CoreError::Config(format!(
            "only {} nodes across the half-thickness; the boundary stencil needs at least 3",
            ingot_x.n
        )));
    }
    let ingot_z = Axis::spanning("mould height", 0.0, m.big_z, spec.dz)?;
    let wall_x = Axis::spanning("mould wall", m.l + m.delta, m.d, spec.wall_dx)?;
    let wall_z = if m.z0 < 0.0 {
        Axis::spanning("mould wall above meniscus", m.z0, m.big_z, spec.dz)?
    } else {
        ingot_z.clone()
    };
    let meniscus_row = ((-m.z0) / spec.dz).round() as usize;
    if (wall_z.coord(meniscus_row)).abs() > 1e-9 {
        return Err(CoreError::Config("wall top z0 must be a whole number of dz steps above the meniscus".into()));
    }

    let thickness = |what: &str, start: f64| Axis::spanning(what, start, start + 2.0 * m.l, spec.q);
    let curvilinear = layout
        .curvilinear
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let id = SectionId::Curvilinear(i + 1);
            let across = thickness(&format!("{id} thickness"), s.r_m)?;
            let along = Axis::spanning(&format!("{id} angular span"), 0.0, s.phi_span, spec.dphi)?;
            Ok(SectionGrid {
                id,
                inner: SurfaceGrid::classify(&along, &s.inner),
                outer: SurfaceGrid::classify(&along, &s.outer),
                across,
                along,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rectilinear = layout
        .rectilinear
        .as_ref()
        .map(|s| {
            let across = thickness("rectilinear thickness", s.z_p)?;
            let along = Axis::spanning("rectilinear length", 0.0, s.x_f, spec.dx_rect)?;
            Ok::<_, CoreError>(SectionGrid {
                id: SectionId::Rectilinear,
                inner: SurfaceGrid::classify(&along, &s.inner),
                outer: SurfaceGrid::classify(&along, &s.outer),
                across,
                along,
            })
        })
        .transpose()?;
    Ok(MachineGrids {
        mould: MouldGrid { ingot_x, ingot_z, wall_x, wall_z, meniscus_row },
        curvilinear,
        rectilinear,
    })
}
