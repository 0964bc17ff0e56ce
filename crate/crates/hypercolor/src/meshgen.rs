//! Triangle meshes, icosphere generation, and the triangulation trick.
//!
//! A trained shape target network maps the unit ball onto an object's
//! surface. Feeding it the vertices of a subdivided icosahedron (and keeping
//! the sphere's face connectivity) therefore yields a watertight mesh of the
//! object; feeding the same vertices to the color target network colors its
//! vertices. Latent interpolation reuses this machinery to morph between two
//! encoded objects.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::color_stage::ColorModel;
use crate::nn::{self, FlatWeights, MlpSpec};
use crate::shape_stage::ShapeModel;
use crate::{Error, Result};

/// Safety cap on icosphere subdivision (level 7 is already 163 842 vertices).
pub const MAX_SUBDIVISIONS: u32 = 7;

/// Vertices, triangle faces, and optional per-vertex colors in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Array2<f64>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_colors: Option<Array2<f64>>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Array2<f64>,
        faces: Vec<[u32; 3]>,
        vertex_colors: Option<Array2<f64>>,
    ) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            vertex_colors,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.nrows();
        if self.vertices.ncols() != 3 {
            return Err(Error::ShapeMismatch {
                context: "mesh vertices",
                expected: "V x 3".into(),
                actual: format!("{} x {}", v, self.vertices.ncols()),
            });
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&ix| ix as usize >= v) {
                return Err(Error::InvalidSpec(format!(
                    "face {i} references vertex out of range: {f:?} (V = {v})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidSpec(format!("degenerate face {i}: {f:?}")));
            }
        }
        if let Some(colors) = &self.vertex_colors {
            if colors.dim() != (v, 3) {
                return Err(Error::ShapeMismatch {
                    context: "mesh vertex colors",
                    expected: format!("{v} x 3"),
                    actual: format!("{} x {}", colors.nrows(), colors.ncols()),
                });
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.nrows()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Undirected edges with the number of faces sharing each.
    pub fn edge_use_counts(&self) -> BTreeMap<(u32, u32), usize> {
        let mut edges = BTreeMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every edge shared by exactly two faces, with opposite orientation
    /// (consistent winding).
    pub fn is_watertight(&self) -> bool {
        let mut directed = BTreeMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *directed.entry((a, b)).or_insert(0usize) += 1;
            }
        }
        directed.values().all(|&c| c == 1)
            && directed.keys().all(|&(a, b)| directed.contains_key(&(b, a)))
    }

    /// `V - E + F`; 2 for a closed genus-0 surface.
    pub fn euler_characteristic(&self) -> i64 {
        let e = self.edge_use_counts().len() as i64;
        self.vertex_count() as i64 - e + self.face_count() as i64
    }
}

/// Regular icosahedron subdivided `subdivisions` times, all vertices on the
/// unit sphere. `V = 10 * 4^n + 2`, `F = 20 * 4^n`.
pub fn icosphere(subdivisions: u32) -> Result<TriangleMesh> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::InvalidSpec(format!(
            "subdivision level {subdivisions} exceeds cap {MAX_SUBDIVISIONS}"
        )));
    }
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let base: [[f64; 3]; 12] = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<[f64; 3]> = base.iter().map(|v| normalized(*v)).collect();
    // CCW when viewed from outside.
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for (i, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                mid[i] = *midpoint.entry(key).or_insert_with(|| {
                    let va = vertices[a as usize];
                    let vb = vertices[b as usize];
                    vertices.push(normalized([
                        (va[0] + vb[0]) / 2.0,
                        (va[1] + vb[1]) / 2.0,
                        (va[2] + vb[2]) / 2.0,
                    ]));
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }

    let flat: Vec<f64> = vertices.iter().flatten().copied().collect();
    let vertices = Array2::from_shape_vec((vertices.len(), 3), flat).unwrap();
    TriangleMesh::new(vertices, faces, None)
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// The triangulation trick: push the sphere's vertices through the shape
/// target network (and optionally the color target network), keeping the
/// face connectivity untouched.
pub fn triangulate(
    target_spec: &MlpSpec,
    theta: &FlatWeights,
    color: Option<(&MlpSpec, &FlatWeights)>,
    sphere: &TriangleMesh,
) -> Result<TriangleMesh> {
    for (i, row) in sphere.vertices.rows().into_iter().enumerate() {
        let n = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "sphere vertex {i} has norm {n}; expected unit sphere"
            )));
        }
    }
    let vertices = nn::forward(target_spec, theta, &sphere.vertices)?;
    let vertex_colors = match color {
        Some((spec, eta)) => Some(nn::forward(spec, eta, &sphere.vertices)?),
        None => None,
    };
    TriangleMesh::new(vertices, sphere.faces.clone(), vertex_colors)
}

/// Latent-space morph between two objects.
///
/// Both clouds are encoded in both stages with the latent mean (no sampling
/// noise), the two latents are interpolated linearly over `steps` values of
/// `t` in `[0, 1]`, and each pair is decoded to a colored mesh over a fixed
/// sphere. The endpoints are the exact encodings of `a` and `b`.
pub fn interpolate(
    shape_model: &ShapeModel,
    color_model: &ColorModel,
    cloud_a: &crate::io::ColoredPointCloud,
    cloud_b: &crate::io::ColoredPointCloud,
    steps: usize,
    sphere: &TriangleMesh,
) -> Result<Vec<TriangleMesh>> {
    if steps < 2 {
        return Err(Error::InvalidConfig {
            key: "steps".into(),
            message: format!("interpolation needs at least 2 steps, got {steps}"),
        });
    }
    let za = shape_model.encode_mean(&cloud_a.positions_cloud())?;
    let zb = shape_model.encode_mean(&cloud_b.positions_cloud())?;
    let ca = color_model.encode_mean(cloud_a)?;
    let cb = color_model.encode_mean(cloud_b)?;
    let mut frames = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let z = (1.0 - t) * &za + t * &zb;
        let c = (1.0 - t) * &ca + t * &cb;
        let theta = shape_model.decode_weights(&z)?;
        let eta = color_model.decode_weights(&c)?;
        frames.push(triangulate(
            shape_model.target_spec(),
            &theta,
            Some((color_model.color_spec(), &eta)),
            sphere,
        )?);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn icosahedron_counts() {
        let mesh = icosphere(0).unwrap();
        assert_eq!(mesh.vertex_count(), 12);
        assert_eq!(mesh.face_count(), 20);
    }

    #[test]
    fn subdivision_counts_closed_form() {
        for n in 0..=4 {
            let mesh = icosphere(n).unwrap();
            let pow = 4usize.pow(n);
            assert_eq!(mesh.vertex_count(), 10 * pow + 2);
            assert_eq!(mesh.face_count(), 20 * pow);
        }
    }

    #[test]
    fn euler_characteristic_is_two() {
        for n in 0..=3 {
            assert_eq!(icosphere(n).unwrap().euler_characteristic(), 2);
        }
    }

    #[test]
    fn icospheres_are_watertight() {
        for n in 0..=3 {
            let mesh = icosphere(n).unwrap();
            assert!(mesh.is_watertight());
            assert!(mesh.edge_use_counts().values().all(|&c| c == 2));
        }
    }

    #[test]
    fn vertices_lie_on_unit_sphere() {
        let mesh = icosphere(3).unwrap();
        for row in mesh.vertices.rows() {
            let n = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn subdivision_cap_is_enforced() {
        assert!(icosphere(MAX_SUBDIVISIONS + 1).is_err());
    }

    #[test]
    fn triangulate_identity_network_reproduces_sphere() {
        let spec = MlpSpec::new(vec![3, 3], vec![Activation::Identity]).unwrap();
        let mut values = vec![0.0; spec.param_count()];
        values[0] = 1.0;
        values[4] = 1.0;
        values[8] = 1.0;
        let theta = FlatWeights::new(values, &spec).unwrap();
        let sphere = icosphere(1).unwrap();
        let out = triangulate(&spec, &theta, None, &sphere).unwrap();
        assert_eq!(out.vertices, sphere.vertices);
        assert_eq!(out.faces, sphere.faces);
    }

    #[test]
    fn triangulate_constant_color_network() {
        let tspec = MlpSpec::new(vec![3, 3], vec![Activation::Identity]).unwrap();
        let theta = FlatWeights::zeros(&tspec);
        let cspec = MlpSpec::new(vec![3, 3], vec![Activation::Sigmoid]).unwrap();
        let eta = FlatWeights::zeros(&cspec); // sigmoid(0) = 0.5 everywhere
        let sphere = icosphere(1).unwrap();
        let out = triangulate(&tspec, &theta, Some((&cspec, &eta)), &sphere).unwrap();
        let colors = out.vertex_colors.unwrap();
        assert!(colors.iter().all(|&c| c == 0.5));
    }

    #[test]
    fn triangulate_preserves_topology_for_any_theta() {
        let spec = MlpSpec::with_hidden(3, &[8], 3, Activation::Relu, Activation::Identity)
            .unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let theta = FlatWeights::xavier(&spec, &mut rng);
        let sphere = icosphere(2).unwrap();
        let out = triangulate(&spec, &theta, None, &sphere).unwrap();
        assert_eq!(out.faces, sphere.faces);
        assert_eq!(out.edge_use_counts(), sphere.edge_use_counts());
        assert!(out.is_watertight());
    }

    #[test]
    fn triangulate_rejects_non_sphere_input() {
        let spec = MlpSpec::new(vec![3, 3], vec![Activation::Identity]).unwrap();
        let theta = FlatWeights::zeros(&spec);
        let mut sphere = icosphere(0).unwrap();
        sphere.vertices[[0, 0]] *= 2.0;
        assert!(triangulate(&spec, &theta, None, &sphere).is_err());
    }
}
