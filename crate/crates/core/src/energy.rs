//! Pair potentials and the two energies on a [`CoupledModel`]:
//!
//! * the atomistic energy `E(y) = Σ_{b∈B} φ(D_b y)`;
//! * the coupled energy `E^h(y) = Σ_{b∈B_a} φ(D_b y) + Σ_T Σ_r Ω_{T,r} φ(G_T r)`,
//!   where `G_T` is the gradient (with respect to lattice coordinates) of the
//!   piecewise affine interpolant on `T`.
//!
//! Unknowns are node values (see [`CoupledModel::nodes`]); site values are
//! fixed linear combinations of them. Reductions are chunked in a fixed
//! order so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal_model::CoupledModel;
use crate::error::{LatvolError, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Separations below this are treated as coincident atoms.
pub const MIN_SEPARATION: f64 = 1e-8;

const CHUNK: usize = 4096;

/// Two-body interaction `φ(z)` of the separation vector `z`.
pub trait PairPotential: Send + Sync {
    fn value(&self, z: Vec3) -> f64;
    fn gradient(&self, z: Vec3) -> Vec3;
    fn hessian(&self, z: Vec3) -> Mat3;
    fn cutoff(&self) -> f64;
}

/// `φ(z) = −2|z|⁻⁶ + |z|⁻¹²`, minimum −1 at `|z| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LennardJones {
    pub cutoff: f64,
}

impl Default for LennardJones {
    fn default() -> Self {
        LennardJones { cutoff: 3.2 }
    }
}

fn norm2(z: Vec3) -> f64 {
    z[0] * z[0] + z[1] * z[1] + z[2] * z[2]
}

impl PairPotential for LennardJones {
    fn value(&self, z: Vec3) -> f64 {
        let s3 = norm2(z).powi(3);
        -2.0 / s3 + 1.0 / (s3 * s3)
    }

    fn gradient(&self, z: Vec3) -> Vec3 {
        let s = norm2(z);
        let g = 12.0 * s.powi(-4) - 12.0 * s.powi(-7);
        z.map(|c| g * c)
    }

    fn hessian(&self, z: Vec3) -> Mat3 {
        let s = norm2(z);
        let g = 12.0 * s.powi(-4) - 12.0 * s.powi(-7);
        let dg = -48.0 * s.powi(-5) + 84.0 * s.powi(-8);
        std::array::from_fn(|i| {
            std::array::from_fn(|j| 2.0 * dg * z[i] * z[j] + if i == j { g } else { 0.0 })
        })
    }

    fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

/// Checked Lennard-Jones value.
pub fn lj(z: Vec3) -> Result<f64> {
    check_separation(z)?;
    Ok(LennardJones::default().value(z))
}

fn check_separation(z: Vec3) -> Result<()> {
    let d = norm2(z).sqrt();
    if d < MIN_SEPARATION || !d.is_finite() {
        return Err(LatvolError::Singularity { min: MIN_SEPARATION, dist: d });
    }
    Ok(())
}

pub(crate) fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn add3(a: &mut Vec3, b: Vec3, s: f64) {
    for i in 0..3 {
        a[i] += s * b[i];
    }
}

fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Which energy to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyKind {
    /// `E`: all bonds, no element terms.
    Atomistic,
    /// `E^h`: bonds of `B_a` plus the weighted element terms.
    Coupled,
}

/// Node values `y` together with the applied macroscopic gradient `F`
/// (acting on physical reference positions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    pub f: Mat3,
    pub y: Vec<Vec3>,
}

impl DeformationState {
    /// `y(x) = F·A·x` at every node.
    pub fn uniform(model: &CoupledModel, f: Mat3) -> Self {
        let y = model.nodes.iter().map(|&x| mat_vec(&f, model.basis.position(x))).collect();
        DeformationState { f, y }
    }

    /// Values at the lattice sites.
    pub fn site_values(&self, model: &CoupledModel) -> Vec<Vec3> {
        site_values(model, &self.y)
    }
}

pub(crate) fn site_values(model: &CoupledModel, y: &[Vec3]) -> Vec<Vec3> {
    (0..model.domain.sites.len())
        .into_par_iter()
        .map(|s| {
            let mut v = [0.0; 3];
            for &(n, w) in model.site_weights(s) {
                add3(&mut v, y[n as usize], w);
            }
            v
        })
        .collect()
}

/// Pulls a site-indexed vector back to nodes: `Pᵀ g`.
fn scatter_sites(model: &CoupledModel, g_sites: &[Vec3], out: &mut [Vec3]) {
    for (s, g) in g_sites.iter().enumerate() {
        for &(n, w) in model.site_weights(s) {
            add3(&mut out[n as usize], *g, w);
        }
    }
}

/// Energy value and gradient with respect to all node values; rows of
/// fixed nodes are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyAssembly {
    pub value: f64,
    pub gradient: Vec<Vec3>,
}

impl EnergyAssembly {
    pub fn max_norm(&self) -> f64 {
        self.gradient.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn include_bond(model: &CoupledModel, kind: EnergyKind, b: usize) -> bool {
    kind == EnergyKind::Atomistic || !model.bonds.bonds[b].continuum
}

fn check_state(model: &CoupledModel, y: &DeformationState) -> Result<()> {
    if y.y.len() != model.nodes.len() {
        return Err(LatvolError::InvalidInput(format!(
            "state has {} nodes, model has {}",
            y.y.len(),
            model.nodes.len()
        )));
    }
    if model.omega.tets() != model.mesh.tets.len() {
        return Err(LatvolError::MissingVolumes);
    }
    Ok(())
}

/// Element terms of one tetrahedron: `Σ_r Ω_{T,r} φ(G_T r)` and its
/// gradient with respect to the four vertex values.
fn element_energy(
    model: &CoupledModel,
    pot: &dyn PairPotential,
    y: &[Vec3],
    t: usize,
) -> Result<(f64, [Vec3; 4])> {
    let grads = &model.tet_grads[t];
    let verts = model.mesh.tets[t];
    let mut value = 0.0;
    let mut out = [[0.0; 3]; 4];
    for (d, &omega) in model.omega.row(t).iter().enumerate() {
        if omega == 0.0 {
            continue;
        }
        let r = model.directions[d].map(|v| v as f64);
        let c: [f64; 4] = std::array::from_fn(|k| grads[k][0] * r[0] + grads[k][1] * r[1] + grads[k][2] * r[2]);
        let mut z = [0.0; 3];
        for k in 0..4 {
            add3(&mut z, y[verts[k]], c[k]);
        }
        check_separation(z)?;
        value += omega * pot.value(z);
        let g = pot.gradient(z);
        for k in 0..4 {
            add3(&mut out[k], g, omega * c[k]);
        }
    }
    Ok((value, out))
}

/// Energy of the given kind.
pub fn assemble_energy(
    model: &CoupledModel,
    pot: &dyn PairPotential,
    state: &DeformationState,
    kind: EnergyKind,
) -> Result<EnergyAssembly> {
    check_state(model, state)?;
    let ys = state.site_values(model);
    let bonds = &model.bonds.bonds;

    // bond pass: per-chunk partial energies, per-bond forces
    let chunks: Vec<(f64, Vec<(usize, Vec3)>)> = (0..bonds.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|idx| {
            let mut e = 0.0;
            let mut forces = Vec::with_capacity(idx.len());
            for &b in idx {
                if !include_bond(model, kind, b) {
                    continue;
                }
                let bond = &bonds[b];
                let z = sub3(ys[bond.to as usize], ys[bond.from as usize]);
                check_separation(z)?;
                e += pot.value(z);
                if !model.bond_fixed[b] {
                    forces.push((b, pot.gradient(z)));
                }
            }
            Ok((e, forces))
        })
        .collect::<Result<_>>()?;

    let mut value = 0.0;
    let mut g_sites = vec![[0.0; 3]; ys.len()];
    for (e, forces) in &chunks {
        value += e;
        for &(b, g) in forces {
            add3(&mut g_sites[bonds[b].to as usize], g, 1.0);
            add3(&mut g_sites[bonds[b].from as usize], g, -1.0);
        }
    }
    let mut gradient = vec![[0.0; 3]; model.nodes.len()];
    scatter_sites(model, &g_sites, &mut gradient);

    if kind == EnergyKind::Coupled && !model.mesh.tets.is_empty() {
        let elems: Vec<(f64, [Vec3; 4])> = (0..model.mesh.tets.len())
            .into_par_iter()
            .map(|t| element_energy(model, pot, &state.y, t))
            .collect::<Result<_>>()?;
        for (t, (e, g)) in elems.iter().enumerate() {
            value += e;
            for k in 0..4 {
                add3(&mut gradient[model.mesh.tets[t][k]], g[k], 1.0);
            }
        }
    }
    for (n, g) in gradient.iter_mut().enumerate() {
        if model.node_fixed[n] {
            *g = [0.0; 3];
        }
    }
    Ok(EnergyAssembly { value, gradient })
}

/// `E(y)`, the atomistic energy of the site values of `y`.
pub fn atomistic_energy(
    model: &CoupledModel,
    pot: &dyn PairPotential,
    state: &DeformationState,
) -> Result<EnergyAssembly> {
    assemble_energy(model, pot, state, EnergyKind::Atomistic)
}

/// `E^h(y)`, the coupled energy.
pub fn coupled_energy(
    model: &CoupledModel,
    pot: &dyn PairPotential,
    state: &DeformationState,
) -> Result<EnergyAssembly> {
    assemble_energy(model, pot, state, EnergyKind::Coupled)
}

/// Second derivative at a fixed state, kept as per-bond and per-element
/// 3×3 blocks.
#[derive(Clone, Debug)]
pub struct HessianOperator<'m> {
    model: &'m CoupledModel,
    bond_blocks: Vec<(u32, u32, Mat3)>,
    /// Upper triangle of the 4×4 vertex block matrix of each element,
    /// in the order (0,0),(0,1),(0,2),(0,3),(1,1),(1,2),(1,3),(2,2),(2,3),(3,3).
    element_blocks: Vec<[Mat3; 10]>,
}

const PAIRS: [(usize, usize); 10] =
    [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)];

fn transpose(m: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| m[j][i]))
}

/// Hessian of the given energy at `state`.
pub fn assemble_hessian<'m>(
    model: &'m CoupledModel,
    pot: &dyn PairPotential,
    state: &DeformationState,
    kind: EnergyKind,
) -> Result<HessianOperator<'m>> {
    check_state(model, state)?;
    let ys = state.site_values(model);
    let bonds = &model.bonds.bonds;
    let bond_blocks: Vec<(u32, u32, Mat3)> = (0..bonds.len())
        .into_par_iter()
        .filter(|&b| include_bond(model, kind, b) && !model.bond_fixed[b])
        .map(|b| {
            let bond = &bonds[b];
            let z = sub3(ys[bond.to as usize], ys[bond.from as usize]);
            check_separation(z)?;
            Ok((bond.from, bond.to, pot.hessian(z)))
        })
        .collect::<Result<_>>()?;
    let element_blocks = if kind == EnergyKind::Coupled {
        (0..model.mesh.tets.len())
            .into_par_iter()
            .map(|t| {
                let grads = &model.tet_grads[t];
                let verts = model.mesh.tets[t];
                let mut blocks = [[[0.0; 3]; 3]; 10];
                for (d, &omega) in model.omega.row(t).iter().enumerate() {
                    if omega == 0.0 {
                        continue;
                    }
                    let r = model.directions[d].map(|v| v as f64);
                    let c: [f64; 4] =
                        std::array::from_fn(|k| grads[k][0] * r[0] + grads[k][1] * r[1] + grads[k][2] * r[2]);
                    let mut z = [0.0; 3];
                    for k in 0..4 {
                        add3(&mut z, state.y[verts[k]], c[k]);
                    }
                    check_separation(z)?;
                    let h = pot.hessian(z);
                    for (p, &(k, l)) in PAIRS.iter().enumerate() {
                        let s = omega * c[k] * c[l];
                        for i in 0..3 {
                            for j in 0..3 {
                                blocks[p][i][j] += s * h[i][j];
                            }
                        }
                    }
                }
                Ok(blocks)
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(HessianOperator { model, bond_blocks, element_blocks })
}

impl HessianOperator<'_> {
    pub fn model(&self) -> &CoupledModel {
        self.model
    }

    /// `H v` over all nodes; entries of `v` on fixed nodes are ignored and
    /// the result vanishes there.
    pub fn apply(&self, v: &[Vec3]) -> Vec<Vec3> {
        let model = self.model;
        let masked: Vec<Vec3> = v
            .iter()
            .enumerate()
            .map(|(n, x)| if model.node_fixed[n] { [0.0; 3] } else { *x })
            .collect();
        let vs = site_values(model, &masked);
        let per_bond: Vec<Vec3> = self
            .bond_blocks
            .par_iter()
            .map(|(s, t, h)| mat_vec(h, sub3(vs[*t as usize], vs[*s as usize])))
            .collect();
        let mut out_sites = vec![[0.0; 3]; vs.len()];
        for ((s, t, _), f) in self.bond_blocks.iter().zip(&per_bond) {
            add3(&mut out_sites[*t as usize], *f, 1.0);
            add3(&mut out_sites[*s as usize], *f, -1.0);
        }
        let mut out = vec![[0.0; 3]; model.nodes.len()];
        scatter_sites(model, &out_sites, &mut out);
        for (t, blocks) in self.element_blocks.iter().enumerate() {
            let verts = model.mesh.tets[t];
            for (p, &(k, l)) in PAIRS.iter().enumerate() {
                add3(&mut out[verts[k]], mat_vec(&blocks[p], masked[verts[l]]), 1.0);
                if k != l {
                    add3(&mut out[verts[l]], mat_vec(&transpose(&blocks[p]), masked[verts[k]]), 1.0);
                }
            }
        }
        for (n, o) in out.iter_mut().enumerate() {
            if model.node_fixed[n] {
                *o = [0.0; 3];
            }
        }
        out
    }

    /// Visits every 3×3 block `(node_p, node_q, block)` of the assembled
    /// matrix, duplicates included, restricted to free nodes.
    fn for_each_block(&self, mut visit: impl FnMut(usize, usize, &Mat3)) {
        let model = self.model;
        let mut combo: Vec<(usize, f64)> = Vec::with_capacity(8);
        for (s, t, h) in &self.bond_blocks {
            combo.clear();
            for &(n, w) in model.site_weights(*t as usize) {
                combo.push((n as usize, w));
            }
            for &(n, w) in model.site_weights(*s as usize) {
                combo.push((n as usize, -w));
            }
            for &(p, wp) in &combo {
                if model.node_fixed[p] {
                    continue;
                }
                for &(q, wq) in &combo {
                    if model.node_fixed[q] {
                        continue;
                    }
                    let blk: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| wp * wq * h[i][j]));
                    visit(p, q, &blk);
                }
            }
        }
        for (t, blocks) in self.element_blocks.iter().enumerate() {
            let verts = model.mesh.tets[t];
            for (pidx, &(k, l)) in PAIRS.iter().enumerate() {
                let (p, q) = (verts[k], verts[l]);
                if model.node_fixed[p] || model.node_fixed[q] {
                    continue;
                }
                visit(p, q, &blocks[pidx]);
                if k != l {
                    visit(q, p, &transpose(&blocks[pidx]));
                }
            }
        }
    }

    /// 3×3 diagonal blocks on every node (zero on fixed nodes).
    pub fn diagonal_blocks(&self) -> Vec<Mat3> {
        let mut out = vec![[[0.0; 3]; 3]; self.model.nodes.len()];
        self.for_each_block(|p, q, b| {
            if p == q {
                for i in 0..3 {
                    for j in 0..3 {
                        out[p][i][j] += b[i][j];
                    }
                }
            }
        });
        out
    }

    /// Scalar triplets `(row, col, value)` of the Hessian restricted to
    /// free nodes, indexed `3·free_index + component`. Duplicates are not
    /// merged and explicit zeros are kept, so the index sequence depends
    /// only on the model. With `lower_only`, entries above the diagonal
    /// are dropped.
    pub fn free_triplets(&self, lower_only: bool) -> (usize, Vec<(usize, usize, f64)>) {
        let model = self.model;
        let mut free_index = vec![usize::MAX; model.nodes.len()];
        let mut nfree = 0;
        for (n, fixed) in model.node_fixed.iter().enumerate() {
            if !fixed {
                free_index[n] = nfree;
                nfree += 1;
            }
        }
        let mut out = Vec::new();
        self.for_each_block(|p, q, b| {
            for i in 0..3 {
                for j in 0..3 {
                    let row = 3 * free_index[p] + i;
                    let col = 3 * free_index[q] + j;
                    if !lower_only || row >= col {
                        out.push((row, col, b[i][j]));
                    }
                }
            }
        });
        (3 * nfree, out)
    }

    /// Dense Hessian on free nodes; for small systems only.
    pub fn dense_free(&self) -> nalgebra::DMatrix<f64> {
        let (n, trips) = self.free_triplets(false);
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, j, v) in trips {
            m[(i, j)] += v;
        }
        m
    }
}

/// Result of [`patch_test`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchTestReport {
    /// Max-norm of `∇E^h(y_F)` over free nodes.
    pub ghost_force_maxnorm: f64,
    /// Mean `|∇φ(D_b y_F)|` over all bonds.
    pub mean_bond_force: f64,
    /// `ghost_force_maxnorm / mean_bond_force`.
    pub relative: f64,
}

/// Ghost forces of the coupled energy at the uniform state `y_F`.
pub fn patch_test(model: &CoupledModel, pot: &dyn PairPotential, f: Mat3) -> Result<PatchTestReport> {
    let state = DeformationState::uniform(model, f);
    let grad = coupled_energy(model, pot, &state)?;
    let ys = state.site_values(model);
    let bonds = &model.bonds.bonds;
    let total: f64 = bonds
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|b| norm2(pot.gradient(sub3(ys[b.to as usize], ys[b.from as usize]))).sqrt())
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let mean_bond_force = total / bonds.len().max(1) as f64;
    let ghost = grad.max_norm();
    Ok(PatchTestReport {
        ghost_force_maxnorm: ghost,
        mean_bond_force,
        relative: if mean_bond_force > 0.0 { ghost / mean_bond_force } else { ghost },
    })
}
