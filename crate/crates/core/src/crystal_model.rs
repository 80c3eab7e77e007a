//! Geometry of the coupled problem: FCC lattice, the cube of free atoms
//! with a Dirichlet shell, the inner atomistic cube, a graded tetrahedral
//! mesh of the continuum shell, bond classification and the effective
//! volumes `Ω_{T,r}`.
//!
//! Everything is stored in lattice coordinates `x ∈ Z³`. Region tests use
//! the doubled cubic coordinates `u = Bx` (`u = √2·A x` for the FCC basis),
//! in which sites are exactly the integer points with even coordinate sum
//! and the domains are the cubes `max|uᵢ| ≤ const`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bond_volume::len_tetra;
use crate::error::{LatvolError, Result};
use crate::lattice_geometry::{IntVec3, LatticeTet, TetClipper};

/// Version tag of serialized models.
pub const MODEL_FORMAT_VERSION: &str = "latvol-model/1";

/// `u = B x`.
pub const FCC_DOUBLED: [[i64; 3]; 3] = [[0, 1, 1], [1, 0, 1], [1, 1, 0]];

pub fn to_doubled(x: [i64; 3]) -> [i64; 3] {
    [x[1] + x[2], x[0] + x[2], x[0] + x[1]]
}

/// Inverse of [`to_doubled`]; `None` off the lattice (odd coordinate sum).
pub fn from_doubled(u: [i64; 3]) -> Option<[i64; 3]> {
    let s = u[0] + u[1] + u[2];
    if s % 2 != 0 {
        return None;
    }
    let h = s / 2;
    Some([h - u[0], h - u[1], h - u[2]])
}

/// `max |uᵢ|` of the doubled coordinates.
pub fn cube_norm(x: [i64; 3]) -> i64 {
    to_doubled(x).iter().map(|c| c.abs()).max().unwrap()
}

/// Physical lattice vectors as the columns of `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalBasis {
    pub columns: [[f64; 3]; 3],
}

impl CrystalBasis {
    pub fn new(columns: [[f64; 3]; 3]) -> Result<Self> {
        let b = CrystalBasis { columns };
        if b.det().abs() < 1e-14 {
            return Err(LatvolError::InvalidInput("singular lattice basis".into()));
        }
        Ok(b)
    }

    /// Face-centred cubic lattice with unit nearest-neighbour distance.
    pub fn fcc() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CrystalBasis { columns: [[0.0, h, h], [h, 0.0, h], [h, h, 0.0]] }
    }

    /// `A` as row-major matrix.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.columns[j][i]))
    }

    pub fn det(&self) -> f64 {
        det3(&self.matrix())
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let c = &self.columns;
        std::array::from_fn(|i| c[0][i] * x[0] + c[1][i] * x[1] + c[2][i] * x[2])
    }

    pub fn position(&self, x: [i64; 3]) -> [f64; 3] {
        self.apply(x.map(|v| v as f64))
    }

    fn inverse_frobenius(&self) -> f64 {
        let inv = inv3(&self.matrix());
        inv.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn inv3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let d = det3(m);
    let c = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
        m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
    };
    std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / d))
}

/// `R = {r ∈ Z³ \ {0} : |A r| ≤ cutoff}`, sorted, closed under `r ↦ −r`.
pub fn neighbor_set(basis: &CrystalBasis, cutoff: f64) -> Vec<[i64; 3]> {
    if cutoff <= 0.0 {
        return Vec::new();
    }
    let bound = (basis.inverse_frobenius() * cutoff).ceil() as i64;
    let mut out = Vec::new();
    for i in -bound..=bound {
        for j in -bound..=bound {
            for k in -bound..=bound {
                if (i, j, k) == (0, 0, 0) {
                    continue;
                }
                let p = basis.position([i, j, k]);
                if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= cutoff {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Lexicographically positive half of a symmetric neighbour set; each
/// undirected bond is represented once.
pub fn half_neighbor_set(r: &[[i64; 3]]) -> Vec<[i64; 3]> {
    r.iter().copied().filter(|v| lex_positive(*v)).collect()
}

fn lex_positive(v: [i64; 3]) -> bool {
    v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteKind {
    Atomistic,
    Continuum,
    Dirichlet,
}

/// Parameters of the cube problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Free atoms satisfy `max|uᵢ| < 2N`.
    pub n: i64,
    /// Atomistic atoms satisfy `max|uᵢ| < 2K`.
    pub k: i64,
    pub cutoff: f64,
    pub vacancy: bool,
    /// Width, in doubled units, of the uniformly fine mesh layer outside
    /// the atomistic cube; cell sizes double beyond it.
    pub fine_margin: i64,
}

impl ModelConfig {
    pub fn vacancy(n: i64, k: i64) -> Self {
        ModelConfig { n, k, cutoff: 3.2, vacancy: true, fine_margin: 4 }
    }

    pub fn perfect(n: i64, k: i64) -> Self {
        ModelConfig { vacancy: false, ..ModelConfig::vacancy(n, k) }
    }
}

/// Lattice sites and their roles.
#[derive(Clone, Debug)]
pub struct DomainDecomposition {
    pub sites: Vec<[i64; 3]>,
    pub kinds: Vec<SiteKind>,
    index: HashMap<[i64; 3], usize>,
}

impl DomainDecomposition {
    pub fn site_index(&self, x: [i64; 3]) -> Option<usize> {
        self.index.get(&x).copied()
    }

    pub fn count(&self, kind: SiteKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }
}

/// Tensor-product grid in doubled coordinates, Kuhn-split into
/// tetrahedra, with the atomistic cube removed.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Mesh {
    /// 1D node coordinates (even, doubled units), shared by all axes.
    pub grid: Vec<i64>,
    /// Vertices in lattice coordinates.
    pub vertices: Vec<[i64; 3]>,
    pub tets: Vec<[usize; 4]>,
    #[serde(skip)]
    vertex_of_grid: HashMap<[usize; 3], usize>,
}

impl Mesh {
    pub fn tet(&self, t: usize) -> [[i64; 3]; 4] {
        self.tets[t].map(|v| self.vertices[v])
    }

    pub fn lattice_tet(&self, t: usize) -> LatticeTet {
        LatticeTet::from_i64(self.tet(t))
    }

    pub fn min_spacing(&self) -> i64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(0)
    }

    pub fn max_spacing(&self) -> i64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }
}

/// 1D nodes: spacing 2 up to `2K + margin`, then doubling, clamped at `2N`.
fn grid_nodes(n: i64, k: i64, margin: i64) -> Vec<i64> {
    let outer = 2 * n;
    let fine = (2 * k + margin).min(outer);
    let mut pos: Vec<i64> = (0..=fine / 2).map(|i| 2 * i).collect();
    if *pos.last().unwrap() != fine {
        pos.push(fine);
    }
    let mut p = *pos.last().unwrap();
    let mut h = 4;
    while p < outer {
        p = (p + h).min(outer);
        pos.push(p);
        h *= 2;
    }
    let mut all: Vec<i64> = pos.iter().rev().map(|v| -v).collect();
    all.extend(pos.into_iter().skip(1));
    all
}

/// Vertex orders of the six Kuhn tetrahedra: paths from the low corner
/// adding one axis at a time.
const KUHN_PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn box_is_inner(grid: &[i64], b: [usize; 3], k: i64) -> bool {
    (0..3).all(|a| grid[b[a]] >= -2 * k && grid[b[a] + 1] <= 2 * k)
}

fn build_mesh(n: i64, k: i64, margin: i64) -> Mesh {
    if k >= n {
        return Mesh::default();
    }
    let grid = grid_nodes(n, k, margin);
    let g = grid.len();
    let mut vertices = Vec::new();
    let mut vertex_of_grid = HashMap::new();
    let mut vertex = |idx: [usize; 3], vertices: &mut Vec<[i64; 3]>| -> usize {
        *vertex_of_grid.entry(idx).or_insert_with(|| {
            let u = idx.map(|i| grid[i]);
            vertices.push(from_doubled(u).expect("even grid nodes are lattice sites"));
            vertices.len() - 1
        })
    };
    let mut tets = Vec::new();
    for i in 0..g - 1 {
        for j in 0..g - 1 {
            for l in 0..g - 1 {
                let b = [i, j, l];
                if box_is_inner(&grid, b, k) {
                    continue;
                }
                for perm in KUHN_PERMS {
                    let mut idx = b;
                    let mut tet = [0usize; 4];
                    tet[0] = vertex(idx, &mut vertices);
                    for (s, &axis) in perm.iter().enumerate() {
                        idx[axis] += 1;
                        tet[s + 1] = vertex(idx, &mut vertices);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    Mesh { grid, vertices, tets, vertex_of_grid }
}

/// Kuhn barycentric weights of a point in doubled coordinates, with the
/// containing box chosen outside the atomistic cube.
fn interpolate(mesh: &Mesh, k: i64, u: [i64; 3]) -> Vec<(usize, f64)> {
    let grid = &mesh.grid;
    let candidates = |c: i64| -> Vec<usize> {
        let mut out = Vec::new();
        for s in 0..grid.len() - 1 {
            if grid[s] <= c && c <= grid[s + 1] {
                out.push(s);
            }
        }
        out
    };
    let cand: [Vec<usize>; 3] = std::array::from_fn(|a| candidates(u[a]));
    for &i in &cand[0] {
        for &j in &cand[1] {
            for &l in &cand[2] {
                let b = [i, j, l];
                if box_is_inner(grid, b, k) {
                    continue;
                }
                let t: [f64; 3] = std::array::from_fn(|a| {
                    (u[a] - grid[b[a]]) as f64 / (grid[b[a] + 1] - grid[b[a]]) as f64
                });
                let mut order = [0usize, 1, 2];
                order.sort_by(|&p, &q| t[q].total_cmp(&t[p]));
                let lambda = [
                    1.0 - t[order[0]],
                    t[order[0]] - t[order[1]],
                    t[order[1]] - t[order[2]],
                    t[order[2]],
                ];
                let mut idx = b;
                let mut out = Vec::with_capacity(4);
                for s in 0..4 {
                    if s > 0 {
                        idx[order[s - 1]] += 1;
                    }
                    if lambda[s] != 0.0 {
                        out.push((mesh.vertex_of_grid[&idx], lambda[s]));
                    }
                }
                return out;
            }
        }
    }
    unreachable!("continuum site {u:?} outside the mesh")
}

/// One undirected bond `(x, x + r)` between sites `from` and `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub from: u32,
    pub to: u32,
    /// Index into the half neighbour set.
    pub dir: u16,
    /// Whether the open bond lies in the open continuum region.
    pub continuum: bool,
}

/// Bond sets of the decomposition.
#[derive(Clone, Debug)]
pub struct BondSets {
    pub bonds: Vec<Bond>,
    /// `#B_c` per direction.
    pub continuum_count: Vec<usize>,
}

impl BondSets {
    pub fn atomistic(&self) -> impl Iterator<Item = &Bond> {
        self.bonds.iter().filter(|b| !b.continuum)
    }

    pub fn continuum(&self) -> impl Iterator<Item = &Bond> {
        self.bonds.iter().filter(|b| b.continuum)
    }
}

/// Exact test of whether the open bond from `x` along `r` lies in the
/// open continuum shell `2K < max|uᵢ| < 2N` and belongs to the lattice.
pub fn bond_in_continuum(cfg: &ModelConfig, x: [i64; 3], r: [i64; 3]) -> bool {
    if cfg.k >= cfg.n {
        return false;
    }
    let u0 = to_doubled(x);
    let d = to_doubled(r);
    let u1 = [u0[0] + d[0], u0[1] + d[1], u0[2] + d[2]];
    let outer = 2 * cfg.n;
    let inner = 2 * cfg.k;
    if cfg.vacancy && (u0 == [0; 3] || u1 == [0; 3]) {
        return false;
    }
    for a in 0..3 {
        if u0[a].abs() > outer || u1[a].abs() > outer {
            return false;
        }
        if u0[a] == u1[a] && u0[a].abs() == outer {
            return false;
        }
    }
    // λ-interval (lo_n/lo_d, hi_n/hi_d) where the closed segment is in the
    // closed inner cube
    let (mut ln, mut ld, mut hn, mut hd) = (0i64, 1i64, 1i64, 1i64);
    for a in 0..3 {
        if d[a] == 0 {
            if u0[a].abs() > inner {
                return true;
            }
            continue;
        }
        // −inner ≤ u0 + λ d ≤ inner
        let (mut p, mut q) = (-inner - u0[a], inner - u0[a]);
        let mut den = d[a];
        if den < 0 {
            (p, q) = (-q, -p);
            den = -den;
        }
        if p * ld > ln * den {
            ln = p;
            ld = den;
        }
        if q * hd < hn * den {
            hn = q;
            hd = den;
        }
    }
    // empty, or touching only at a closed endpoint
    let empty = hn * ld < ln * hd;
    let at_start = hn <= 0;
    let at_end = ln >= ld;
    empty || at_start || at_end
}

/// `Ω_{T,r}` for every tetrahedron and every direction of the half
/// neighbour set, stored tet-major.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectiveVolumes {
    pub directions: Vec<[i64; 3]>,
    pub values: Vec<f64>,
}

impl EffectiveVolumes {
    pub fn get(&self, tet: usize, dir: usize) -> f64 {
        self.values[tet * self.directions.len() + dir]
    }

    pub fn row(&self, tet: usize) -> &[f64] {
        let m = self.directions.len();
        &self.values[tet * m..(tet + 1) * m]
    }

    pub fn tets(&self) -> usize {
        if self.directions.is_empty() {
            0
        } else {
            self.values.len() / self.directions.len()
        }
    }
}

/// Fully assembled coupled problem.
#[derive(Clone, Debug)]
pub struct CoupledModel {
    pub config: ModelConfig,
    pub basis: CrystalBasis,
    /// Half neighbour set `R₊`.
    pub directions: Vec<[i64; 3]>,
    pub domain: DomainDecomposition,
    pub mesh: Mesh,
    pub bonds: BondSets,
    pub omega: EffectiveVolumes,
    /// Reference positions (lattice coordinates) of the unknowns: mesh
    /// vertices first, then atomistic and Dirichlet sites that are not
    /// mesh vertices.
    pub nodes: Vec<[i64; 3]>,
    pub node_fixed: Vec<bool>,
    /// CSR map from sites to weighted nodes.
    pub site_ptr: Vec<usize>,
    pub site_nodes: Vec<(u32, f64)>,
    /// Barycentric gradients `∇λ_k` of each tetrahedron.
    pub tet_grads: Vec<[[f64; 3]; 4]>,
    pub tet_volumes: Vec<f64>,
    /// Bonds whose endpoints both depend only on fixed nodes.
    pub bond_fixed: Vec<bool>,
}

impl CoupledModel {
    pub fn site_weights(&self, s: usize) -> &[(u32, f64)] {
        &self.site_nodes[self.site_ptr[s]..self.site_ptr[s + 1]]
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.node_fixed[i]).collect()
    }

    /// Number of unconstrained nodes (atomistic sites plus free mesh
    /// vertices).
    pub fn dof(&self) -> usize {
        self.node_fixed.iter().filter(|f| !**f).count()
    }

    pub fn is_atomistic_only(&self) -> bool {
        self.mesh.tets.is_empty()
    }

    /// Replaces `Ω_{T,r}` by `|T|`, the plain Cauchy–Born weights.
    pub fn with_cauchy_born_volumes(&self) -> CoupledModel {
        let mut m = self.clone();
        let nd = m.directions.len();
        for t in 0..m.tet_volumes.len() {
            for d in 0..nd {
                m.omega.values[t * nd + d] = m.tet_volumes[t];
            }
        }
        m
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION.to_string(),
            config: self.config.clone(),
            basis: self.basis.clone(),
            neighbors: self.directions.clone(),
            vertices: self.mesh.vertices.clone(),
            tets: self.mesh.tets.clone(),
            sites: self.domain.sites.clone(),
            site_kinds: self.domain.kinds.clone(),
            omega_tet: (0..self.omega.tets())
                .flat_map(|t| std::iter::repeat_n(t, self.directions.len()))
                .collect(),
            omega_dir: (0..self.omega.tets())
                .flat_map(|_| 0..self.directions.len())
                .collect(),
            omega_value: self.omega.values.clone(),
        }
    }
}

/// Serialized form of a model: mesh, sites, neighbours and the `Ω` table
/// as parallel arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: String,
    pub config: ModelConfig,
    pub basis: CrystalBasis,
    pub neighbors: Vec<[i64; 3]>,
    pub vertices: Vec<[i64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub sites: Vec<[i64; 3]>,
    pub site_kinds: Vec<SiteKind>,
    pub omega_tet: Vec<usize>,
    pub omega_dir: Vec<usize>,
    pub omega_value: Vec<f64>,
}

/// Largest `max|(B r)ᵢ|` over the neighbour set.
pub fn interaction_width(r: &[[i64; 3]]) -> i64 {
    r.iter().map(|&v| cube_norm(v)).max().unwrap_or(0)
}

fn build_domain(cfg: &ModelConfig, width: i64) -> DomainDecomposition {
    let reach = 2 * cfg.n + width;
    let mut sites = Vec::new();
    let mut kinds = Vec::new();
    for u0 in -reach..=reach {
        for u1 in -reach..=reach {
            for u2 in -reach..=reach {
                let u = [u0, u1, u2];
                let Some(x) = from_doubled(u) else { continue };
                if cfg.vacancy && u == [0; 3] {
                    continue;
                }
                let m = cube_norm(x);
                let kind = if m >= 2 * cfg.n {
                    SiteKind::Dirichlet
                } else if m >= 2 * cfg.k {
                    SiteKind::Continuum
                } else {
                    SiteKind::Atomistic
                };
                sites.push(x);
                kinds.push(kind);
            }
        }
    }
    let index = sites.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    DomainDecomposition { sites, kinds, index }
}

fn classify_bonds_inner(
    cfg: &ModelConfig,
    domain: &DomainDecomposition,
    directions: &[[i64; 3]],
) -> BondSets {
    let mut bonds = Vec::new();
    let mut continuum_count = vec![0usize; directions.len()];
    for (s, &x) in domain.sites.iter().enumerate() {
        for (d, &r) in directions.iter().enumerate() {
            let y = [x[0] + r[0], x[1] + r[1], x[2] + r[2]];
            let Some(t) = domain.site_index(y) else { continue };
            let continuum = bond_in_continuum(cfg, x, r);
            if continuum {
                continuum_count[d] += 1;
            }
            bonds.push(Bond { from: s as u32, to: t as u32, dir: d as u16, continuum });
        }
    }
    BondSets { bonds, continuum_count }
}

/// Splits the bonds of the model into `B_a` and `B_c`.
pub fn classify_bonds(model: &CoupledModel) -> BondSets {
    classify_bonds_inner(&model.config, &model.domain, &model.directions)
}

/// Translation-normalized key of a tetrahedron.
fn shape_key(v: &[[i64; 3]; 4]) -> [[i64; 3]; 3] {
    std::array::from_fn(|k| std::array::from_fn(|c| v[k + 1][c] - v[0][c]))
}

/// `Ω_{T,r} = Len(T, r) − Σ ⨍ χ_T` over all lattice bonds of direction
/// `r` outside `B_c`. The correction is only evaluated for tetrahedra
/// within interaction range of the atomistic cube or the outer boundary.
pub fn effective_volumes(
    cfg: &ModelConfig,
    mesh: &Mesh,
    directions: &[[i64; 3]],
) -> Result<EffectiveVolumes> {
    let nd = directions.len();
    let width = interaction_width(directions);

    let mut shapes: Vec<[[i64; 3]; 3]> = mesh.tets.iter().enumerate().map(|(t, _)| shape_key(&mesh.tet(t))).collect();
    shapes.sort();
    shapes.dedup();
    let lens: Vec<Vec<f64>> = shapes
        .par_iter()
        .map(|s| {
            let tet = LatticeTet::from_i64([[0; 3], s[0], s[1], s[2]]);
            directions
                .iter()
                .map(|&r| len_tetra(&tet, &IntVec3::from(r)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let len_of: HashMap<[[i64; 3]; 3], &Vec<f64>> = shapes.iter().copied().zip(lens.iter()).collect();

    let rows: Vec<Vec<f64>> = (0..mesh.tets.len())
        .into_par_iter()
        .map(|t| {
            let v = mesh.tet(t);
            let mut row = len_of[&shape_key(&v)].clone();
            if !near_boundary(cfg, &v, width) {
                return Ok(row);
            }
            let clip = TetClipper::new(&v)
                .ok_or_else(|| LatvolError::MeshTiling(format!("degenerate tetrahedron {t}")))?;
            for (d, &r) in directions.iter().enumerate() {
                row[d] -= outside_bond_mass(cfg, &clip, r);
                if row[d] < -1e-9 {
                    return Err(LatvolError::NegativeVolume { tet: t, dir: r, value: row[d] });
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(rows.len() * nd);
    for r in rows {
        values.extend(r);
    }
    Ok(EffectiveVolumes { directions: directions.to_vec(), values })
}

/// `Σ ⨍ χ_T` over the lattice bonds of direction `r` that are not in `B_c`.
fn outside_bond_mass(cfg: &ModelConfig, clip: &TetClipper, r: [i64; 3]) -> f64 {
    let (lo, hi) = clip.base_point_range(r);
    let mut mass = 0.0;
    for x0 in lo[0]..=hi[0] {
        for x1 in lo[1]..=hi[1] {
            for x2 in lo[2]..=hi[2] {
                let w = clip.bond_average([x0, x1, x2], r);
                if w != 0.0 && !bond_in_continuum(cfg, [x0, x1, x2], r) {
                    mass += w;
                }
            }
        }
    }
    mass
}

/// Whether bonds of length `width` (doubled sup-norm) meeting the
/// tetrahedron can reach the atomistic cube or leave the open outer cube.
fn near_boundary(cfg: &ModelConfig, v: &[[i64; 3]; 4], width: i64) -> bool {
    let us = v.map(to_doubled);
    let lo: [i64; 3] = std::array::from_fn(|a| us.iter().map(|u| u[a]).min().unwrap() - width);
    let hi: [i64; 3] = std::array::from_fn(|a| us.iter().map(|u| u[a]).max().unwrap() + width);
    let inner = 2 * cfg.k;
    let outer = 2 * cfg.n;
    let clear_of_inner = (0..3).any(|a| lo[a] > inner || hi[a] < -inner);
    let inside_outer = (0..3).all(|a| lo[a] > -outer && hi[a] < outer);
    !(clear_of_inner && inside_outer)
}

fn tet_geometry(v: &[[i64; 3]; 4]) -> ([[f64; 3]; 4], f64) {
    // columns X_k − X_0; rows of the inverse are ∇λ_k
    let e: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|k| (v[k + 1][i] - v[0][i]) as f64));
    let inv = inv3(&e);
    let mut g = [[0.0; 3]; 4];
    for k in 0..3 {
        g[k + 1] = inv[k];
    }
    g[0] = std::array::from_fn(|c| -(g[1][c] + g[2][c] + g[3][c]));
    (g, det3(&e).abs() / 6.0)
}

fn validate(cfg: &ModelConfig, allow_full_atomistic: bool) -> Result<()> {
    if cfg.k < 1 || cfg.n < 1 {
        return Err(LatvolError::InvalidInput("N and K must be positive".into()));
    }
    if cfg.k > cfg.n || (!allow_full_atomistic && cfg.k >= cfg.n) {
        return Err(LatvolError::InvalidInput(format!("need K < N, got K={} N={}", cfg.k, cfg.n)));
    }
    if cfg.fine_margin < 0 || cfg.fine_margin % 2 != 0 {
        return Err(LatvolError::InvalidInput("fine_margin must be even and nonnegative".into()));
    }
    if cfg.cutoff <= 0.0 {
        return Err(LatvolError::InvalidInput("cutoff must be positive".into()));
    }
    Ok(())
}

/// Builds the full model from a config. `K = N` yields the purely
/// atomistic model on the same site set.
pub fn build_model(cfg: &ModelConfig, basis: &CrystalBasis) -> Result<CoupledModel> {
    validate(cfg, true)?;
    let full = neighbor_set(basis, cfg.cutoff);
    if full.is_empty() {
        return Err(LatvolError::InvalidInput("cutoff below the nearest-neighbour distance".into()));
    }
    let directions = half_neighbor_set(&full);
    let width = interaction_width(&directions);
    let domain = build_domain(cfg, width);
    let mesh = build_mesh(cfg.n, cfg.k, cfg.fine_margin);
    let bonds = classify_bonds_inner(cfg, &domain, &directions);
    let omega = effective_volumes(cfg, &mesh, &directions)?;

    let nv = mesh.vertices.len();
    let mut nodes = mesh.vertices.clone();
    let mut site_ptr = vec![0usize];
    let mut site_nodes = Vec::new();
    for (s, &x) in domain.sites.iter().enumerate() {
        let u = to_doubled(x);
        let vertex = if nv > 0 && cube_norm(x) <= 2 * cfg.n {
            let idx: Option<Vec<usize>> = u.iter().map(|c| mesh.grid.binary_search(c).ok()).collect();
            idx.and_then(|i| mesh.vertex_of_grid.get(&[i[0], i[1], i[2]]).copied())
        } else {
            None
        };
        match (domain.kinds[s], vertex) {
            (_, Some(v)) => site_nodes.push((v as u32, 1.0)),
            (SiteKind::Continuum, None) => {
                for (node, w) in interpolate(&mesh, cfg.k, u) {
                    site_nodes.push((node as u32, w));
                }
            }
            _ => {
                nodes.push(x);
                site_nodes.push(((nodes.len() - 1) as u32, 1.0));
            }
        }
        site_ptr.push(site_nodes.len());
    }
    let node_fixed: Vec<bool> = nodes.iter().map(|&x| cube_norm(x) >= 2 * cfg.n).collect();
    let site_is_fixed = |s: usize| {
        site_nodes[site_ptr[s]..site_ptr[s + 1]].iter().all(|&(n, _)| node_fixed[n as usize])
    };
    let bond_fixed = bonds
        .bonds
        .iter()
        .map(|b| site_is_fixed(b.from as usize) && site_is_fixed(b.to as usize))
        .collect();

    let (tet_grads, tet_volumes) = (0..mesh.tets.len()).map(|t| tet_geometry(&mesh.tet(t))).unzip();

    Ok(CoupledModel {
        config: cfg.clone(),
        basis: basis.clone(),
        directions,
        domain,
        mesh,
        bonds,
        omega,
        nodes,
        node_fixed,
        site_ptr,
        site_nodes,
        tet_grads,
        tet_volumes,
        bond_fixed,
    })
}

/// The cube problem with a vacancy at the origin; `2 ≤ K < N`.
pub fn build_vacancy_problem(n: i64, k: i64, basis: &CrystalBasis) -> Result<CoupledModel> {
    let cfg = ModelConfig::vacancy(n, k);
    validate(&cfg, false)?;
    if k < 2 {
        return Err(LatvolError::InvalidInput("need K >= 2".into()));
    }
    build_model(&cfg, basis)
}

/// Same geometry without the vacancy.
pub fn build_perfect_problem(n: i64, k: i64, basis: &CrystalBasis) -> Result<CoupledModel> {
    let cfg = ModelConfig::perfect(n, k);
    validate(&cfg, false)?;
    build_model(&cfg, basis)
}

/// Purely atomistic model on the same sites (`K = N`).
pub fn build_atomistic_problem(n: i64, vacancy: bool, basis: &CrystalBasis) -> Result<CoupledModel> {
    let cfg = ModelConfig { k: n, vacancy, ..ModelConfig::vacancy(n, n) };
    build_model(&cfg, basis)
}
