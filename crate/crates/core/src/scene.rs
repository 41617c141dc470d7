//! Propagation environment: planar rectangular facets carrying materials.
//!
//! Scenes are loaded from a JSON document or generated procedurally by
//! [`build_factory`], which lays out a walled warehouse hall with rows of
//! storage racks. A [`Scene`] is immutable once built and can be shared
//! read-only between worker threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{arr3, vec3, Vec3};

/// Relative tolerance on the facet-local coordinates when testing whether a
/// point lies on a finite facet.
const FACET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("surface {index} references unknown material \"{material}\"")]
    DanglingMaterial { index: usize, material: String },
    #[error("surface {index} is degenerate: {reason}")]
    DegenerateSurface { index: usize, reason: String },
    #[error("material \"{id}\" is invalid: {reason}")]
    InvalidMaterial { id: String, reason: String },
    #[error("material \"{0}\" is defined more than once")]
    DuplicateMaterial(String),
    #[error("invalid factory parameters: {0}")]
    InvalidFactory(String),
    #[error("factory layout error: {0}")]
    Layout(String),
}

/// Electromagnetic description of a facet material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub id: String,
    /// Relative permittivity (dimensionless, >= 1).
    #[serde(rename = "eps_r")]
    pub relative_permittivity: f64,
    /// Conductivity in S/m.
    #[serde(rename = "sigma")]
    pub conductivity: f64,
    /// Flat loss applied each time a ray passes through the facet (dB).
    #[serde(rename = "trans_loss_db")]
    pub transmission_loss_db: f64,
}

impl Material {
    pub fn new(id: impl Into<String>, eps_r: f64, sigma: f64, trans_loss_db: f64) -> Self {
        Self {
            id: id.into(),
            relative_permittivity: eps_r,
            conductivity: sigma,
            transmission_loss_db: trans_loss_db,
        }
    }

    fn validate(&self) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidMaterial {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if !(self.relative_permittivity.is_finite() && self.relative_permittivity >= 1.0) {
            return Err(bad("eps_r must be finite and >= 1"));
        }
        if !(self.conductivity.is_finite() && self.conductivity >= 0.0) {
            return Err(bad("sigma must be finite and >= 0"));
        }
        if !(self.transmission_loss_db.is_finite() && self.transmission_loss_db >= 0.0) {
            return Err(bad("trans_loss_db must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A finite rectangular facet `origin + s·u + t·v`, `s, t ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    origin: Vec3,
    edge_u: Vec3,
    edge_v: Vec3,
    material_id: String,
    normal: Vec3,
    inv_u2: f64,
    inv_v2: f64,
}

impl Surface {
    /// Builds a facet, rejecting non-orthogonal or zero-length edges.
    pub fn new(
        origin: Vec3,
        edge_u: Vec3,
        edge_v: Vec3,
        material_id: impl Into<String>,
    ) -> Result<Self, String> {
        let (lu, lv) = (edge_u.norm(), edge_v.norm());
        if !(origin.iter().chain(edge_u.iter()).chain(edge_v.iter())).all(|c| c.is_finite()) {
            return Err("non-finite coordinates".into());
        }
        if lu == 0.0 || lv == 0.0 {
            return Err("zero-length edge".into());
        }
        if edge_u.dot(&edge_v).abs() >= 1e-9 * lu * lv {
            return Err("edges u and v are not perpendicular".into());
        }
        let cross = edge_u.cross(&edge_v);
        if cross.norm() == 0.0 {
            return Err("zero area".into());
        }
        Ok(Self {
            origin,
            edge_u,
            edge_v,
            material_id: material_id.into(),
            normal: cross.normalize(),
            inv_u2: 1.0 / (lu * lu),
            inv_v2: 1.0 / (lv * lv),
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn edge_u(&self) -> Vec3 {
        self.edge_u
    }

    pub fn edge_v(&self) -> Vec3 {
        self.edge_v
    }

    pub fn material_id(&self) -> &str {
        &self.material_id
    }

    /// Unit normal `normalize(u × v)`.
    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    /// Signed distance of `p` from the facet's infinite plane.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(&(p - self.origin))
    }

    /// Facet-local coordinates `(s, t)` of the projection of `p`.
    pub fn local_coords(&self, p: &Vec3) -> (f64, f64) {
        let d = p - self.origin;
        (
            d.dot(&self.edge_u) * self.inv_u2,
            d.dot(&self.edge_v) * self.inv_v2,
        )
    }

    /// True when the projection of `p` falls on the closed facet.
    pub fn contains_projection(&self, p: &Vec3) -> bool {
        let (s, t) = self.local_coords(p);
        (-FACET_TOLERANCE..=1.0 + FACET_TOLERANCE).contains(&s)
            && (-FACET_TOLERANCE..=1.0 + FACET_TOLERANCE).contains(&t)
    }

    pub fn corners(&self) -> [Vec3; 4] {
        [
            self.origin,
            self.origin + self.edge_u,
            self.origin + self.edge_u + self.edge_v,
            self.origin + self.edge_v,
        ]
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }

    /// True when the interiors of the two boxes intersect.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] < other.max[i] && other.min[i] < self.max[i])
    }
}

/// Validated propagation environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    surfaces: Vec<Surface>,
    materials: BTreeMap<String, Material>,
    bounds: Option<Aabb>,
}

impl Scene {
    pub fn empty() -> Self {
        Self {
            surfaces: Vec::new(),
            materials: BTreeMap::new(),
            bounds: None,
        }
    }

    /// Builds a scene, checking that every material resolves and is valid.
    pub fn new(surfaces: Vec<Surface>, materials: Vec<Material>) -> Result<Self, SceneError> {
        let mut by_id = BTreeMap::new();
        for m in materials {
            m.validate()?;
            if by_id.contains_key(&m.id) {
                return Err(SceneError::DuplicateMaterial(m.id));
            }
            by_id.insert(m.id.clone(), m);
        }
        for (index, s) in surfaces.iter().enumerate() {
            if !by_id.contains_key(&s.material_id) {
                return Err(SceneError::DanglingMaterial {
                    index,
                    material: s.material_id.clone(),
                });
            }
        }
        let bounds =
            surfaces
                .iter()
                .flat_map(|s| s.corners())
                .fold(None, |acc: Option<Aabb>, c| {
                    Some(match acc {
                        None => Aabb { min: c, max: c },
                        Some(b) => Aabb {
                            min: b.min.inf(&c),
                            max: b.max.sup(&c),
                        },
                    })
                });
        Ok(Self {
            surfaces,
            materials: by_id,
            bounds,
        })
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn surface(&self, index: usize) -> &Surface {
        &self.surfaces[index]
    }

    pub fn materials(&self) -> &BTreeMap<String, Material> {
        &self.materials
    }

    pub fn material(&self, id: &str) -> Option<&Material> {
        self.materials.get(id)
    }

    /// Material of the surface at `index`; always resolves for a validated scene.
    pub fn surface_material(&self, index: usize) -> &Material {
        &self.materials[&self.surfaces[index].material_id]
    }

    /// Bounding box of all surfaces, `None` for an empty scene.
    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    /// Serializes the scene as an explicit (surface-list) document.
    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            materials: self.materials.values().cloned().collect(),
            surfaces: self
                .surfaces
                .iter()
                .map(|s| SurfaceDoc {
                    origin: arr3(&s.origin),
                    u: arr3(&s.edge_u),
                    v: arr3(&s.edge_v),
                    material: s.material_id.clone(),
                })
                .collect(),
            factory: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("scene documents always serialize")
    }
}

/// One facet in a scene document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceDoc {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub material: String,
}

/// JSON encoding of a scene: explicit materials and surfaces, optionally
/// extended by a generated factory hall.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    #[serde(default)]
    pub materials: Vec<Material>,
    #[serde(default)]
    pub surfaces: Vec<SurfaceDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factory: Option<FactoryParams>,
}

impl SceneDocument {
    /// Validates the document. Factory surfaces come first, followed by the
    /// explicit ones; the factory's default materials are added only when
    /// the document does not define them.
    pub fn into_scene(self) -> Result<Scene, SceneError> {
        let mut materials = self.materials;
        let mut surfaces = Vec::new();
        if let Some(params) = &self.factory {
            for m in default_factory_materials() {
                if !materials.iter().any(|x| x.id == m.id) {
                    materials.push(m);
                }
            }
            surfaces.extend(factory_surfaces(params)?);
        }
        let offset = surfaces.len();
        for (i, s) in self.surfaces.into_iter().enumerate() {
            let surface = Surface::new(vec3(s.origin), vec3(s.u), vec3(s.v), s.material).map_err(
                |reason| SceneError::DegenerateSurface {
                    index: offset + i,
                    reason,
                },
            )?;
            surfaces.push(surface);
        }
        Scene::new(surfaces, materials)
    }
}

/// Parses and validates a JSON scene document.
pub fn load_scene(document: &str) -> Result<Scene, SceneError> {
    let doc: SceneDocument = serde_json::from_str(document)?;
    doc.into_scene()
}

/// Parametric warehouse hall: four walls, floor and ceiling, plus a block of
/// rack boxes laid out in rows separated by aisles.
///
/// Racks extend along x (`rack_l`) and are `rack_w` deep along y. Within a row
/// consecutive racks are separated by `cross_aisle_w` (defaults to `aisle_w`);
/// rows are separated by `aisle_w`. When `layout_origin` is absent the rack
/// block is centered on the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactoryParams {
    pub floor_w: f64,
    pub floor_l: f64,
    pub wall_h: f64,
    pub rack_h: f64,
    pub rack_rows: usize,
    pub racks_per_row: usize,
    pub rack_w: f64,
    pub rack_l: f64,
    pub aisle_w: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_aisle_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout_origin: Option<[f64; 2]>,
    pub wall_material: String,
    pub rack_material: String,
}

impl Default for FactoryParams {
    fn default() -> Self {
        Self {
            floor_w: 60.0,
            floor_l: 40.0,
            wall_h: 5.0,
            rack_h: 4.4,
            rack_rows: 3,
            racks_per_row: 3,
            rack_w: 2.5,
            rack_l: 12.0,
            aisle_w: 3.5,
            cross_aisle_w: None,
            layout_origin: None,
            wall_material: "concrete".into(),
            rack_material: "rack".into(),
        }
    }
}

impl FactoryParams {
    pub fn rack_count(&self) -> usize {
        self.rack_rows * self.racks_per_row
    }

    fn validate(&self) -> Result<(), SceneError> {
        let dims = [
            ("floor_w", self.floor_w),
            ("floor_l", self.floor_l),
            ("wall_h", self.wall_h),
            ("rack_h", self.rack_h),
            ("rack_w", self.rack_w),
            ("rack_l", self.rack_l),
            ("aisle_w", self.aisle_w),
            ("cross_aisle_w", self.cross_aisle()),
        ];
        for (name, value) in dims {
            if !(value.is_finite() && value > 0.0) {
                return Err(SceneError::InvalidFactory(format!(
                    "{name} must be > 0 (got {value})"
                )));
            }
        }
        if self.rack_h >= self.wall_h {
            return Err(SceneError::InvalidFactory(format!(
                "rack_h ({}) must be below wall_h ({})",
                self.rack_h, self.wall_h
            )));
        }
        Ok(())
    }

    fn cross_aisle(&self) -> f64 {
        self.cross_aisle_w.unwrap_or(self.aisle_w)
    }

    /// Footprints of every rack, row-major (rows along y, racks along x).
    pub fn rack_boxes(&self) -> Result<Vec<Aabb>, SceneError> {
        self.validate()?;
        if self.rack_count() == 0 {
            return Ok(Vec::new());
        }
        let n = self.racks_per_row as f64;
        let rows = self.rack_rows as f64;
        let block_x = n * self.rack_l + (n - 1.0) * self.cross_aisle();
        let block_y = rows * self.rack_w + (rows - 1.0) * self.aisle_w;
        let [x0, y0] = self.layout_origin.unwrap_or([
            0.5 * (self.floor_w - block_x),
            0.5 * (self.floor_l - block_y),
        ]);
        let mut boxes = Vec::with_capacity(self.rack_count());
        for row in 0..self.rack_rows {
            let y = y0 + row as f64 * (self.rack_w + self.aisle_w);
            for k in 0..self.racks_per_row {
                let x = x0 + k as f64 * (self.rack_l + self.cross_aisle());
                boxes.push(Aabb {
                    min: Vec3::new(x, y, 0.0),
                    max: Vec3::new(x + self.rack_l, y + self.rack_w, self.rack_h),
                });
            }
        }
        for (i, b) in boxes.iter().enumerate() {
            if b.min.x <= 0.0
                || b.min.y <= 0.0
                || b.max.x >= self.floor_w
                || b.max.y >= self.floor_l
            {
                return Err(SceneError::Layout(format!(
                    "rack {i} spans x [{}, {}], y [{}, {}], outside the {} x {} m floor",
                    b.min.x, b.max.x, b.min.y, b.max.y, self.floor_w, self.floor_l
                )));
            }
        }
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].overlaps(&boxes[j]) {
                    return Err(SceneError::Layout(format!("racks {i} and {j} overlap")));
                }
            }
        }
        Ok(boxes)
    }
}

/// Materials a factory document falls back to when it does not define them.
pub fn default_factory_materials() -> Vec<Material> {
    vec![
        Material::new("concrete", 5.31, 0.1, 12.0),
        Material::new("rack", 1.0, 1.0e7, 10.0),
    ]
}

/// Generates the factory hall, using [`default_factory_materials`] for any
/// material id the caller does not supply.
pub fn build_factory(params: &FactoryParams) -> Result<Scene, SceneError> {
    let surfaces = factory_surfaces(params)?;
    Scene::new(surfaces, default_factory_materials())
}

fn factory_surfaces(p: &FactoryParams) -> Result<Vec<Surface>, SceneError> {
    let boxes = p.rack_boxes()?;
    let (w, l, h) = (p.floor_w, p.floor_l, p.wall_h);
    let wall = p.wall_material.as_str();
    let x = Vec3::x();
    let y = Vec3::y();
    let z = Vec3::z();
    // Normals face into the hall.
    let mut faces = vec![
        (Vec3::zeros(), x * w, y * l, wall),
        (Vec3::new(0.0, 0.0, h), y * l, x * w, wall),
        (Vec3::zeros(), z * h, x * w, wall),
        (Vec3::new(0.0, l, 0.0), x * w, z * h, wall),
        (Vec3::zeros(), y * l, z * h, wall),
        (Vec3::new(w, 0.0, 0.0), z * h, y * l, wall),
    ];
    let rack = p.rack_material.as_str();
    for b in &boxes {
        let d = b.max - b.min;
        let (lx, ly, lz) = (x * d.x, y * d.y, z * d.z);
        // Outward normals; the bottom face sits on the floor and is omitted.
        faces.push((Vec3::new(b.min.x, b.min.y, b.max.z), lx, ly, rack));
        faces.push((b.min, lx, lz, rack));
        faces.push((Vec3::new(b.min.x, b.max.y, b.min.z), lz, lx, rack));
        faces.push((b.min, lz, ly, rack));
        faces.push((Vec3::new(b.max.x, b.min.y, b.min.z), ly, lz, rack));
    }
    faces
        .into_iter()
        .enumerate()
        .map(|(index, (o, u, v, m))| {
            Surface::new(o, u, v, m)
                .map_err(|reason| SceneError::DegenerateSurface { index, reason })
        })
        .collect()
}
