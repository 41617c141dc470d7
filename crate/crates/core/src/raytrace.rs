//! Image-method multipath search.
//!
//! Every sequence of up to `max_reflections` facets (no facet twice in a row)
//! is tried: the transmitter is mirrored across each facet plane in turn and
//! the reflection points are recovered by walking back from the receiver
//! through the images. A candidate survives if every reflection point lies
//! on its finite facet with both neighbours on the same side of the plane,
//! and every sub-segment is either clear or, with transmission enabled,
//! passes straight through the blocking facets.

use thiserror::Error;

use crate::scene::{Scene, Surface};
use crate::{Vec3, SPEED_OF_LIGHT};

/// Hard cap on the reflection order.
pub const MAX_REFLECTION_ORDER: usize = 3;

/// Distance from a segment endpoint within which a crossing does not block.
pub const ENDPOINT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("reflection order {requested} exceeds the cap of {cap}")]
    OrderCapExceeded { requested: usize, cap: usize },
    #[error("transmitter and receiver coincide")]
    CoincidentEndpoints,
}

/// A single interaction along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interaction {
    Reflection {
        surface: usize,
        point: Vec3,
    },
    Transmission {
        surface: usize,
        point: Vec3,
    },
    /// Re-radiation by an RIS panel (only on cascaded paths).
    RisScatter {
        point: Vec3,
    },
}

impl Interaction {
    pub fn point(&self) -> Vec3 {
        match *self {
            Interaction::Reflection { point, .. }
            | Interaction::Transmission { point, .. }
            | Interaction::RisScatter { point } => point,
        }
    }

    pub fn surface(&self) -> Option<usize> {
        match *self {
            Interaction::Reflection { surface, .. } | Interaction::Transmission { surface, .. } => {
                Some(surface)
            }
            Interaction::RisScatter { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathTag {
    Conventional,
    Ris,
}

impl PathTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathTag::Conventional => "conventional",
            PathTag::Ris => "ris",
        }
    }
}

/// A geometric propagation path from `tx` to `rx`.
///
/// `departure_dir` is the unit propagation direction leaving `tx`;
/// `arrival_dir` is the unit propagation direction at `rx` (pointing into it).
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub tx: Vec3,
    pub rx: Vec3,
    pub interactions: Vec<Interaction>,
    pub length: f64,
    pub delay: f64,
    pub departure_dir: Vec3,
    pub arrival_dir: Vec3,
    pub tag: PathTag,
}

impl PropagationPath {
    /// Builds a path through the given interactions, deriving length, delay
    /// and the end directions from the vertex list.
    pub fn from_vertices(tx: Vec3, rx: Vec3, interactions: Vec<Interaction>, tag: PathTag) -> Self {
        let mut length = 0.0;
        let mut prev = tx;
        for p in interactions
            .iter()
            .map(Interaction::point)
            .chain(std::iter::once(rx))
        {
            length += (p - prev).norm();
            prev = p;
        }
        let first = interactions.first().map_or(rx, Interaction::point);
        let last = interactions.last().map_or(tx, Interaction::point);
        Self {
            tx,
            rx,
            interactions,
            length,
            delay: length / SPEED_OF_LIGHT,
            departure_dir: (first - tx).normalize(),
            arrival_dir: (rx - last).normalize(),
            tag,
        }
    }

    pub fn direct(tx: Vec3, rx: Vec3) -> Self {
        Self::from_vertices(tx, rx, Vec::new(), PathTag::Conventional)
    }

    /// `tx`, every interaction point, then `rx`.
    pub fn vertices(&self) -> Vec<Vec3> {
        let mut v = Vec::with_capacity(self.interactions.len() + 2);
        v.push(self.tx);
        v.extend(self.interactions.iter().map(Interaction::point));
        v.push(self.rx);
        v
    }

    pub fn reflection_count(&self) -> usize {
        self.interactions
            .iter()
            .filter(|i| matches!(i, Interaction::Reflection { .. }))
            .count()
    }

    /// Surface indices of all interactions, in path order.
    pub fn surface_key(&self) -> Vec<usize> {
        self.interactions
            .iter()
            .filter_map(Interaction::surface)
            .collect()
    }

    /// The same path traversed from `rx` to `tx`.
    pub fn reversed(&self) -> Self {
        let mut interactions = self.interactions.clone();
        interactions.reverse();
        Self::from_vertices(self.rx, self.tx, interactions, self.tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    pub max_reflections: usize,
    pub allow_transmission: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            max_reflections: 2,
            allow_transmission: true,
        }
    }
}

/// Reflects `p` across the infinite plane of `s`.
pub fn mirror_point(p: &Vec3, s: &Surface) -> Vec3 {
    p - 2.0 * s.signed_distance(p) * s.normal()
}

/// Parameter `t` in (0, 1) at which segment `a → b` crosses the facet, if it
/// does so away from both endpoints.
fn segment_crossing(s: &Surface, a: &Vec3, b: &Vec3, t_eps: f64) -> Option<f64> {
    let t = segment_crossing_plane(s, a, b, t_eps)?;
    s.contains_projection(&(a + t * (b - a))).then_some(t)
}

/// Facets crossed by segment `a → b`, sorted by distance from `a`.
/// Surfaces listed in `skip` (the facets the endpoints sit on) are ignored.
fn crossings(scene: &Scene, a: &Vec3, b: &Vec3, skip: [Option<usize>; 2]) -> Vec<(f64, usize)> {
    let len = (b - a).norm();
    let t_eps = ENDPOINT_EPSILON / len;
    let mut hits: Vec<(f64, usize)> = scene
        .surfaces()
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(&Some(*i)))
        .filter_map(|(i, s)| segment_crossing(s, a, b, t_eps).map(|t| (t, i)))
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    hits
}

/// True iff the open segment `a → b` crosses no facet. Touching a facet
/// within [`ENDPOINT_EPSILON`] of either endpoint does not count.
pub fn line_of_sight(scene: &Scene, a: &Vec3, b: &Vec3) -> bool {
    let len = (b - a).norm();
    if len == 0.0 {
        return true;
    }
    let t_eps = ENDPOINT_EPSILON / len;
    !scene
        .surfaces()
        .iter()
        .any(|s| segment_crossing(s, a, b, t_eps).is_some())
}

/// All specular paths from `tx` to `rx` up to `options.max_reflections`,
/// ordered by interaction count and then by surface-index tuple.
pub fn trace_paths(
    scene: &Scene,
    tx: &Vec3,
    rx: &Vec3,
    options: &TraceOptions,
) -> Result<Vec<PropagationPath>, TraceError> {
    if options.max_reflections > MAX_REFLECTION_ORDER {
        return Err(TraceError::OrderCapExceeded {
            requested: options.max_reflections,
            cap: MAX_REFLECTION_ORDER,
        });
    }
    if tx == rx {
        return Err(TraceError::CoincidentEndpoints);
    }
    let mut tracer = Tracer {
        scene,
        tx: *tx,
        rx: *rx,
        options,
        sequence: Vec::with_capacity(options.max_reflections),
        images: vec![*tx],
        paths: Vec::new(),
    };
    tracer.visit();
    let mut paths = tracer.paths;
    paths.sort_by_cached_key(|p| (p.interactions.len(), p.surface_key()));
    Ok(paths)
}

struct Tracer<'a> {
    scene: &'a Scene,
    tx: Vec3,
    rx: Vec3,
    options: &'a TraceOptions,
    sequence: Vec<usize>,
    images: Vec<Vec3>,
    paths: Vec<PropagationPath>,
}

impl Tracer<'_> {
    fn visit(&mut self) {
        if let Some(path) = self.build_path() {
            self.paths.push(path);
        }
        if self.sequence.len() == self.options.max_reflections {
            return;
        }
        let source = *self.images.last().expect("images start with tx");
        for (i, s) in self.scene.surfaces().iter().enumerate() {
            if self.sequence.last() == Some(&i) {
                continue;
            }
            // An image lying on the plane cannot produce a reflection off it.
            if s.signed_distance(&source).abs() <= ENDPOINT_EPSILON {
                continue;
            }
            self.sequence.push(i);
            self.images.push(mirror_point(&source, s));
            self.visit();
            self.images.pop();
            self.sequence.pop();
        }
    }

    /// Recovers reflection points for the current sequence and validates them.
    fn build_path(&self) -> Option<PropagationPath> {
        let k = self.sequence.len();
        let mut points = vec![Vec3::zeros(); k];
        let mut target = self.rx;
        for j in (0..k).rev() {
            let s = self.scene.surface(self.sequence[j]);
            let image = self.images[j + 1];
            let len = (target - image).norm();
            let t = segment_crossing_plane(s, &image, &target, ENDPOINT_EPSILON / len)?;
            let p = image + t * (target - image);
            if !s.contains_projection(&p) {
                return None;
            }
            points[j] = p;
            target = p;
        }
        // Specular validity: both neighbours strictly on the same side.
        for j in 0..k {
            let s = self.scene.surface(self.sequence[j]);
            let before = if j == 0 { self.tx } else { points[j - 1] };
            let after = if j + 1 == k { self.rx } else { points[j + 1] };
            let (da, db) = (s.signed_distance(&before), s.signed_distance(&after));
            if da * db <= 0.0 || da.abs() <= ENDPOINT_EPSILON || db.abs() <= ENDPOINT_EPSILON {
                return None;
            }
        }

        let mut interactions = Vec::with_capacity(k);
        let vertex = |j: usize| -> (Vec3, Option<usize>) {
            match j {
                0 => (self.tx, None),
                j if j == k + 1 => (self.rx, None),
                j => (points[j - 1], Some(self.sequence[j - 1])),
            }
        };
        for seg in 0..=k {
            let (a, sa) = vertex(seg);
            let (b, sb) = vertex(seg + 1);
            let hits = crossings(self.scene, &a, &b, [sa, sb]);
            if !hits.is_empty() {
                if !self.options.allow_transmission {
                    return None;
                }
                interactions.extend(hits.into_iter().map(|(t, surface)| {
                    Interaction::Transmission {
                        surface,
                        point: a + t * (b - a),
                    }
                }));
            }
            if seg < k {
                interactions.push(Interaction::Reflection {
                    surface: self.sequence[seg],
                    point: points[seg],
                });
            }
        }
        Some(PropagationPath::from_vertices(
            self.tx,
            self.rx,
            interactions,
            PathTag::Conventional,
        ))
    }
}

/// Like [`segment_crossing`] but against the infinite plane.
fn segment_crossing_plane(s: &Surface, a: &Vec3, b: &Vec3, t_eps: f64) -> Option<f64> {
    let da = s.signed_distance(a);
    let db = s.signed_distance(b);
    let denom = da - db;
    if denom == 0.0 || da * db > 0.0 {
        return None;
    }
    let t = da / denom;
    (t > t_eps && t < 1.0 - t_eps).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Material, Surface};

    fn pec() -> Material {
        Material::new("pec", 1.0, 1e12, 0.0)
    }

    fn scene_with(surfaces: Vec<Surface>) -> Scene {
        Scene::new(surfaces, vec![pec()]).unwrap()
    }

    /// Square facet in the plane `axis = offset`, spanning ±half around zero.
    fn big_plane_y(y: f64, half: f64) -> Surface {
        Surface::new(
            Vec3::new(-half, y, -half),
            Vec3::new(0.0, 0.0, 2.0 * half),
            Vec3::new(2.0 * half, 0.0, 0.0),
            "pec",
        )
        .unwrap()
    }

    fn wall_x5() -> Surface {
        Surface::new(
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(0.0, 10.0, 0.0),
            Vec3::new(0.0, 0.0, 5.0),
            "pec",
        )
        .unwrap()
    }

    #[test]
    fn line_of_sight_cases() {
        let empty = Scene::empty();
        assert!(line_of_sight(
            &empty,
            &Vec3::zeros(),
            &Vec3::new(1.0, 2.0, 3.0)
        ));
        let scene = scene_with(vec![wall_x5()]);
        assert!(!line_of_sight(
            &scene,
            &Vec3::new(0.0, 5.0, 1.0),
            &Vec3::new(10.0, 5.0, 1.0)
        ));
        assert!(line_of_sight(
            &scene,
            &Vec3::new(0.0, 15.0, 1.0),
            &Vec3::new(10.0, 15.0, 1.0)
        ));
        // Ending on the wall is not a blockage.
        assert!(line_of_sight(
            &scene,
            &Vec3::new(0.0, 5.0, 1.0),
            &Vec3::new(5.0, 5.0, 1.0)
        ));
    }

    #[test]
    fn mirror_examples() {
        let floor = Surface::new(Vec3::zeros(), Vec3::x(), Vec3::y(), "pec").unwrap();
        assert_eq!(
            mirror_point(&Vec3::new(1.0, 2.0, 3.0), &floor),
            Vec3::new(1.0, 2.0, -3.0)
        );
        let on = Vec3::new(7.0, -2.0, 0.0);
        assert_eq!(mirror_point(&on, &floor), on);
        assert_eq!(
            mirror_point(&Vec3::new(2.0, 0.0, 0.0), &wall_x5()),
            Vec3::new(8.0, 0.0, 0.0)
        );
    }

    #[test]
    fn empty_scene_has_only_direct_path() {
        let paths = trace_paths(
            &Scene::empty(),
            &Vec3::zeros(),
            &Vec3::new(3.0, 4.0, 0.0),
            &TraceOptions {
                max_reflections: 2,
                allow_transmission: false,
            },
        )
        .unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].length - 5.0).abs() < 1e-12);
        assert!((paths[0].delay * 1e9 - 16.678).abs() < 1e-3);
    }

    #[test]
    fn single_plane_gives_direct_and_image_path() {
        let scene = scene_with(vec![big_plane_y(0.0, 1e3)]);
        let opts = TraceOptions {
            max_reflections: 1,
            allow_transmission: false,
        };
        let paths = trace_paths(
            &scene,
            &Vec3::new(0.0, 2.0, 0.0),
            &Vec3::new(4.0, 2.0, 0.0),
            &opts,
        )
        .unwrap();
        assert_eq!(paths.len(), 2);
        assert!((paths[0].length - 4.0).abs() < 1e-12);
        assert!((paths[1].length - 32f64.sqrt()).abs() < 1e-12);
        assert!((paths[1].interactions[0].point() - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn parallel_planes_second_order() {
        let scene = scene_with(vec![big_plane_y(0.0, 1e3), big_plane_y(6.0, 1e3)]);
        let opts = TraceOptions {
            max_reflections: 2,
            allow_transmission: false,
        };
        let paths = trace_paths(
            &scene,
            &Vec3::new(0.0, 2.0, 0.0),
            &Vec3::new(4.0, 2.0, 0.0),
            &opts,
        )
        .unwrap();
        let orders: Vec<usize> = paths.iter().map(|p| p.interactions.len()).collect();
        assert_eq!(orders, vec![0, 1, 1, 2, 2]);
        // Images: y=-2 (off y=0), y=10 (off y=6); second order y=-10 and y=14.
        let expect = [
            4.0,
            32f64.sqrt(),
            (16.0 + 64.0f64).sqrt(),
            (16.0 + 144.0f64).sqrt(),
            (16.0 + 144.0f64).sqrt(),
        ];
        let mut lengths: Vec<f64> = paths.iter().map(|p| p.length).collect();
        lengths[1..3].sort_by(f64::total_cmp);
        for (l, e) in lengths.iter().zip(expect) {
            assert!((l - e).abs() < 1e-9, "{l} vs {e}");
        }
    }

    #[test]
    fn order_cap_is_enforced() {
        let opts = TraceOptions {
            max_reflections: 4,
            allow_transmission: false,
        };
        assert_eq!(
            trace_paths(&Scene::empty(), &Vec3::zeros(), &Vec3::x(), &opts),
            Err(TraceError::OrderCapExceeded {
                requested: 4,
                cap: 3
            })
        );
    }

    #[test]
    fn blocked_direct_path_becomes_transmission() {
        let scene = scene_with(vec![wall_x5()]);
        let tx = Vec3::new(0.0, 5.0, 1.0);
        let rx = Vec3::new(10.0, 5.0, 1.0);
        let blocked = TraceOptions {
            max_reflections: 0,
            allow_transmission: false,
        };
        assert!(trace_paths(&scene, &tx, &rx, &blocked).unwrap().is_empty());
        let through = TraceOptions {
            max_reflections: 0,
            allow_transmission: true,
        };
        let paths = trace_paths(&scene, &tx, &rx, &through).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(
            paths[0].interactions,
            vec![Interaction::Transmission {
                surface: 0,
                point: Vec3::new(5.0, 5.0, 1.0)
            }]
        );
        assert!((paths[0].length - 10.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_point_must_hit_finite_facet() {
        let small = Surface::new(
            Vec3::new(-1.0, 0.0, -1.0),
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(2.0, 0.0, 0.0),
            "pec",
        )
        .unwrap();
        let scene = scene_with(vec![small]);
        let opts = TraceOptions {
            max_reflections: 1,
            allow_transmission: false,
        };
        // Specular point at x=2 lies outside the 2 m facet centred on x=0.
        let paths = trace_paths(
            &scene,
            &Vec3::new(0.0, 2.0, 0.0),
            &Vec3::new(4.0, 2.0, 0.0),
            &opts,
        )
        .unwrap();
        assert_eq!(paths.len(), 1);
    }

    #[test]
    fn opposite_sides_do_not_reflect() {
        let scene = scene_with(vec![big_plane_y(0.0, 1e3)]);
        let opts = TraceOptions {
            max_reflections: 1,
            allow_transmission: true,
        };
        let paths = trace_paths(
            &scene,
            &Vec3::new(0.0, 2.0, 0.0),
            &Vec3::new(4.0, -2.0, 0.0),
            &opts,
        )
        .unwrap();
        assert_eq!(paths.len(), 1);
        assert!(matches!(
            paths[0].interactions[0],
            Interaction::Transmission { .. }
        ));
    }
}
