//! Equilibria of `E` and `E^h`, stability tests and the error measures
//! of the convergence study.

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::linalg::LltError;
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::Side;
use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crystal_model::{
    build_atomistic_problem, build_perfect_problem, build_vacancy_problem, half_neighbor_set, neighbor_set,
    CoupledModel, CrystalBasis,
};
use crate::energy::{
    assemble_energy, assemble_hessian, mat_vec, DeformationState, EnergyKind, HessianOperator, Mat3,
    PairPotential, Vec3,
};
use crate::error::{LatvolError, Result};

/// Line search applied to a Newton step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepDamping {
    /// Full steps only.
    None,
    /// Halve the step while the energy increases, at most this many times.
    Halving { max_halvings: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Target max-norm of the gradient on free nodes.
    pub gradient_tolerance: f64,
    pub step_damping: StepDamping,
    pub max_cg_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iterations: 30,
            gradient_tolerance: 1e-10,
            step_damping: StepDamping::Halving { max_halvings: 20 },
            max_cg_iterations: 5000,
        }
    }
}

impl NewtonConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(LatvolError::InvalidInput("gradient tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Gradient max-norm at every iterate, starting with `y₀`.
    pub residuals: Vec<f64>,
    pub energies: Vec<f64>,
    pub cg_iterations: Vec<usize>,
    pub halvings: Vec<usize>,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }

    /// Whether the last three residuals above `floor` satisfy
    /// `r_{k+1} ≤ c·r_k²` with a common constant, i.e. `log r` at least
    /// doubles in magnitude per step.
    pub fn is_quadratic_tail(&self, floor: f64) -> bool {
        let r: Vec<f64> = self.residuals.iter().copied().filter(|&v| v > floor).collect();
        if r.len() < 3 {
            return false;
        }
        let n = r.len();
        let (a, b, c) = (r[n - 3], r[n - 2], r[n - 1]);
        let c1 = b / (a * a);
        let c2 = c / (b * b);
        c2 <= 10.0 * c1.max(1.0)
    }
}

const CHUNK: usize = 4096;

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p[0] * q[0] + p[1] * q[1] + p[2] * q[2]).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn axpy(y: &mut [Vec3], s: f64, x: &[Vec3]) {
    y.par_iter_mut().zip(x).for_each(|(a, b)| {
        for i in 0..3 {
            a[i] += s * b[i];
        }
    });
}

/// Inverse 3×3 diagonal blocks; blocks that are not positive definite
/// fall back to the identity.
fn block_jacobi(h: &HessianOperator<'_>) -> Vec<Mat3> {
    h.diagonal_blocks()
        .into_iter()
        .map(|b| {
            let m = Matrix3::from_fn(|i, j| b[i][j]);
            match m.cholesky() {
                Some(c) => {
                    let inv = c.inverse();
                    std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]))
                }
                None => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            }
        })
        .collect()
}

/// Preconditioned CG for `H x = b`; stops at `‖r‖ ≤ tol·‖b‖`. Fails on
/// non-positive curvature.
fn pcg(h: &HessianOperator<'_>, b: &[Vec3], tol: f64, max_iter: usize) -> Result<(Vec<Vec3>, usize)> {
    let precond = block_jacobi(h);
    let apply_p = |r: &[Vec3]| -> Vec<Vec3> { r.par_iter().zip(&precond).map(|(v, m)| mat_vec(m, *v)).collect() };
    let n = b.len();
    let mut x = vec![[0.0; 3]; n];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut z = apply_p(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let hp = h.apply(&p);
        let curv = dot(&p, &hp);
        if !(curv > 0.0) {
            return Err(LatvolError::LinearSolve(format!(
                "non-positive curvature {:e} at CG iteration {it}; Hessian not positive definite",
                curv / dot(&p, &p)
            )));
        }
        let alpha = rz / curv;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &hp);
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        z = apply_p(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| {
            for c in 0..3 {
                pi[c] = zi[c] + beta * pi[c];
            }
        });
    }
    Err(LatvolError::LinearSolve(format!("CG did not converge in {max_iter} iterations")))
}

/// Newton's method for `∇E(y) = 0` on the free nodes of `model`, where
/// `E` is the energy selected by `kind`.
pub fn newton_solve(
    model: &CoupledModel,
    pot: &dyn PairPotential,
    kind: EnergyKind,
    y0: &DeformationState,
    cfg: &NewtonConfig,
) -> Result<(DeformationState, NewtonReport)> {
    cfg.validate()?;
    let mut state = y0.clone();
    let mut report = NewtonReport::default();
    let mut current = assemble_energy(model, pot, &state, kind)?;
    report.residuals.push(current.max_norm());
    report.energies.push(current.value);
    while current.max_norm() > cfg.gradient_tolerance {
        if report.iterations == cfg.max_iterations {
            return Err(LatvolError::NoConvergence {
                iterations: report.iterations,
                residual: current.max_norm(),
            });
        }
        let h = assemble_hessian(model, pot, &state, kind)?;
        let rhs: Vec<Vec3> = current.gradient.iter().map(|g| g.map(|c| -c)).collect();
        let gnorm = dot(&rhs, &rhs).sqrt();
        let forcing = gnorm.min(1e-4).max(1e-14);
        let (step, cg_it) = pcg(&h, &rhs, forcing, cfg.max_cg_iterations)?;

        let max_halvings = match cfg.step_damping {
            StepDamping::None => 0,
            StepDamping::Halving { max_halvings } => max_halvings,
        };
        let mut scale = 1.0;
        let mut halvings = 0;
        let (next_state, next) = loop {
            let mut trial = state.clone();
            axpy(&mut trial.y, scale, &step);
            let accepted = match assemble_energy(model, pot, &trial, kind) {
                Ok(e) => {
                    // near convergence energy changes fall below rounding;
                    // a smaller gradient is then accepted as progress
                    let slack = 1e-12 * (1.0 + current.value.abs());
                    if e.value <= current.value + slack || e.max_norm() < current.max_norm() {
                        Some(e)
                    } else {
                        None
                    }
                }
                Err(LatvolError::Singularity { .. }) => None,
                Err(e) => return Err(e),
            };
            match accepted {
                Some(e) => break (trial, e),
                None if halvings < max_halvings => {
                    scale *= 0.5;
                    halvings += 1;
                }
                None => {
                    return Err(LatvolError::NoConvergence {
                        iterations: report.iterations,
                        residual: current.max_norm(),
                    })
                }
            }
        };
        state = next_state;
        current = next;
        report.iterations += 1;
        report.residuals.push(current.max_norm());
        report.energies.push(current.value);
        report.cg_iterations.push(cg_it);
        report.halvings.push(halvings);
    }
    Ok((state, report))
}

/// Relative size below which a pivot counts as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Sparse Cholesky structure reused across matrices that share one
/// triplet index sequence.
#[derive(Clone, Debug)]
pub struct CholeskyPattern {
    n: usize,
    entries: usize,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    llt: SymbolicLlt<usize>,
}

impl CholeskyPattern {
    /// Pattern of the lower-triangle entries `indices` (duplicates
    /// allowed) plus the full diagonal.
    pub fn new(n: usize, indices: impl Iterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pairs: Vec<Pair<usize, usize>> = indices.map(|(row, col)| Pair::new(row, col)).collect();
        let entries = pairs.len();
        if pairs.iter().any(|p| p.row < p.col || p.row >= n) {
            return Err(LatvolError::InvalidInput("pattern entries must be lower triangular".into()));
        }
        pairs.extend((0..n).map(|i| Pair::new(i, i)));
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| LatvolError::LinearSolve(format!("{e:?}")))?;
        let llt = SymbolicLlt::try_new(symbolic.as_ref(), Side::Lower)
            .map_err(|e| LatvolError::LinearSolve(format!("{e:?}")))?;
        Ok(CholeskyPattern { n, entries, symbolic, argsort, llt })
    }

    /// Positive definiteness of the matrix with the given entry values
    /// (summed over duplicates), judged on `H − τ·I` with
    /// `τ = PIVOT_TOLERANCE·max|value|` so near-singular matrices count as
    /// not positive definite.
    pub fn is_positive_definite(&self, values: &[f64]) -> Result<bool> {
        if values.len() != self.entries {
            return Err(LatvolError::InvalidInput("value count does not match the pattern".into()));
        }
        if self.n == 0 {
            return Ok(true);
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(false);
        }
        let mut vals = values.to_vec();
        vals.extend(std::iter::repeat_n(-PIVOT_TOLERANCE * scale, self.n));
        let m = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, &vals)
            .map_err(|e| LatvolError::LinearSolve(format!("{e:?}")))?;
        match Llt::try_new_with_symbolic(self.llt.clone(), m.as_ref(), Side::Lower) {
            Ok(_) => Ok(true),
            Err(LltError::Numeric(_)) => Ok(false),
            Err(e) => Err(LatvolError::LinearSolve(format!("{e:?}"))),
        }
    }
}

/// Positive definiteness of the symmetric matrix given by lower-triangle
/// triplets (duplicates summed); see [`CholeskyPattern::is_positive_definite`].
pub fn is_positive_definite(n: usize, lower: &[(usize, usize, f64)]) -> Result<bool> {
    let pattern = CholeskyPattern::new(n, lower.iter().map(|t| (t.0, t.1)))?;
    let values: Vec<f64> = lower.iter().map(|t| t.2).collect();
    pattern.is_positive_definite(&values)
}

/// Whether the Hessian restricted to free nodes is positive definite.
pub fn is_stable(h: &HessianOperator<'_>) -> Result<bool> {
    let (n, trips) = h.free_triplets(true);
    is_positive_definite(n, &trips)
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

const ID3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Applied gradient of the stability experiments:
/// `(1+t, 0.05, 0.02; 0, 1+s, 0.01; 0, 0, 1)`.
pub fn stability_gradient(t: f64, s: f64) -> Mat3 {
    [[1.0 + t, 0.05, 0.02], [0.0, 1.0 + s, 0.01], [0.0, 0.0, 1.0]]
}

/// Applied gradient of the vacancy convergence study.
pub const CONVERGENCE_GRADIENT: Mat3 = [[1.0, 0.01, 0.02], [0.0, 1.0, 0.015], [0.0, 0.0, 1.0]];

/// `φ''(F·A·r)` for every direction of the half neighbour set.
fn bond_hessians(f: &Mat3, basis: &CrystalBasis, half: &[[i64; 3]], pot: &dyn PairPotential) -> Vec<Mat3> {
    half.iter().map(|&r| pot.hessian(mat_vec(f, basis.position(r)))).collect()
}

/// Smallest eigenvalue of the lattice-dynamics symbol
/// `H(k) = Σ_{r∈R₊} 4 sin²(k·r/2) φ''(F·A·r)` over the `m³` grid
/// `k ∈ −π + (2π/m)·Z³`, `k ≠ 0`, divided by `max_k ‖H(k)‖`.
pub fn fourier_min_eigenvalue(f: &Mat3, basis: &CrystalBasis, cutoff: f64, pot: &dyn PairPotential, m: usize) -> f64 {
    let half = half_neighbor_set(&neighbor_set(basis, cutoff));
    let blocks: Vec<Matrix3<f64>> = bond_hessians(f, basis, &half, pot)
        .iter()
        .map(|b| Matrix3::from_fn(|i, j| b[i][j]))
        .collect();
    // k·r = (2π/m)(i·r) − π·Σr, so cos(k·r) = (−1)^{Σr}·cos(2π((i·r) mod m)/m)
    let cos_table: Vec<f64> = (0..m).map(|n| (2.0 * std::f64::consts::PI * n as f64 / m as f64).cos()).collect();
    let parity: Vec<f64> = half.iter().map(|r| if (r[0] + r[1] + r[2]).rem_euclid(2) == 0 { 1.0 } else { -1.0 }).collect();
    let mi = m as i64;
    let zero = [m / 2; 3];
    let (min, max) = (0..m * m * m)
        .into_par_iter()
        .filter_map(|idx| {
            let i = [idx / (m * m), (idx / m) % m, idx % m];
            // H(k) = H(−k); −k sits at index (m − i) mod m
            let mirror = i.map(|c| (m - c) % m);
            if i == zero || (mirror[0] * m + mirror[1]) * m + mirror[2] < idx {
                return None;
            }
            let mut h = Matrix3::zeros();
            for ((r, b), p) in half.iter().zip(&blocks).zip(&parity) {
                let dot = (i[0] as i64 * r[0] + i[1] as i64 * r[1] + i[2] as i64 * r[2]).rem_euclid(mi);
                h += (2.0 - 2.0 * p * cos_table[dot as usize]) * b;
            }
            let ev = h.symmetric_eigenvalues();
            Some((ev.min(), ev.amax()))
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    min / max.max(f64::MIN_POSITIVE)
}

/// Stability of the infinite homogeneous lattice under `F`, judged on an
/// `m³` reciprocal grid.
pub fn atomistic_stability_fourier(
    f: &Mat3,
    basis: &CrystalBasis,
    cutoff: f64,
    pot: &dyn PairPotential,
    m: usize,
) -> bool {
    fourier_min_eigenvalue(f, basis, cutoff, pot, m) > PIVOT_TOLERANCE
}

/// Dense Hessian of the homogeneous lattice energy on the periodic torus
/// `Z³ / mZ³` at `y = F·A·x`. Its kernel always contains the three
/// translations.
pub fn torus_hessian(f: &Mat3, basis: &CrystalBasis, cutoff: f64, pot: &dyn PairPotential, m: usize) -> DMatrix<f64> {
    let half = half_neighbor_set(&neighbor_set(basis, cutoff));
    let blocks = bond_hessians(f, basis, &half, pot);
    let mi = m as i64;
    let idx = |x: [i64; 3]| -> usize {
        let w = x.map(|c| c.rem_euclid(mi) as usize);
        (w[0] * m + w[1]) * m + w[2]
    };
    let n = m * m * m;
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for a in 0..mi {
        for b in 0..mi {
            for c in 0..mi {
                let x = [a, b, c];
                for (r, blk) in half.iter().zip(&blocks) {
                    let p = idx(x);
                    let q = idx([a + r[0], b + r[1], c + r[2]]);
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = blk[i][j];
                            h[(3 * p + i, 3 * p + j)] += v;
                            h[(3 * q + i, 3 * q + j)] += v;
                            h[(3 * p + i, 3 * q + j)] -= v;
                            h[(3 * q + i, 3 * p + j)] -= v;
                        }
                    }
                }
            }
        }
    }
    h
}

/// Smallest eigenvalue of [`torus_hessian`] on the complement of the
/// translations, relative to the largest eigenvalue magnitude.
pub fn torus_min_eigenvalue(f: &Mat3, basis: &CrystalBasis, cutoff: f64, pot: &dyn PairPotential, m: usize) -> f64 {
    let mut h = torus_hessian(f, basis, cutoff, pot, m);
    let max = h.clone().symmetric_eigenvalues().amax();
    // lift the translation modes above the rest of the spectrum
    let n = h.nrows() / 3;
    let lift = (10.0 * max + 1.0) / n as f64;
    for p in 0..n {
        for q in 0..n {
            for c in 0..3 {
                h[(3 * p + c, 3 * q + c)] += lift;
            }
        }
    }
    h.symmetric_eigenvalues().min() / max
}

/// Parameter grid of a stability scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub t_range: [f64; 2],
    pub s_range: [f64; 2],
    pub step: f64,
}

impl Default for StabilityScan {
    fn default() -> Self {
        StabilityScan { t_range: [-0.2, 0.2], s_range: [-0.2, 0.2], step: 0.02 }
    }
}

impl StabilityScan {
    fn axis(range: [f64; 2], step: f64) -> Vec<f64> {
        let n = ((range[1] - range[0]) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| range[0] + step * i as f64).collect()
    }

    pub fn t_values(&self) -> Vec<f64> {
        Self::axis(self.t_range, self.step)
    }

    pub fn s_values(&self) -> Vec<f64> {
        Self::axis(self.s_range, self.step)
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || self.t_range[1] < self.t_range[0] || self.s_range[1] < self.s_range[0] {
            return Err(LatvolError::InvalidInput("bad stability scan ranges".into()));
        }
        Ok(())
    }
}

/// Verdicts on a `t × s` grid, indexed `[i_t][i_s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityGrid {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub stable: Vec<Vec<bool>>,
}

impl StabilityGrid {
    /// Every point stable in `other` is stable here.
    pub fn contains(&self, other: &StabilityGrid) -> bool {
        self.stable.iter().flatten().zip(other.stable.iter().flatten()).all(|(a, b)| *a || !*b)
    }

    pub fn stable_count(&self) -> usize {
        self.stable.iter().flatten().filter(|v| **v).count()
    }

    /// Marching-squares contour of the stable indicator at level ½, as
    /// segments between edge midpoints.
    pub fn boundary(&self) -> Vec<[[f64; 2]; 2]> {
        let mut out = Vec::new();
        let (nt, ns) = (self.t.len(), self.s.len());
        for i in 0..nt.saturating_sub(1) {
            for j in 0..ns.saturating_sub(1) {
                // corners counter-clockwise from (i, j)
                let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let v: Vec<bool> = c.iter().map(|&(a, b)| self.stable[a][b]).collect();
                let mid = |e: usize| {
                    let (p, q) = (c[e], c[(e + 1) % 4]);
                    [0.5 * (self.t[p.0] + self.t[q.0]), 0.5 * (self.s[p.1] + self.s[q.1])]
                };
                let crossings: Vec<usize> = (0..4).filter(|&e| v[e] != v[(e + 1) % 4]).collect();
                match crossings.len() {
                    2 => out.push([mid(crossings[0]), mid(crossings[1])]),
                    4 => {
                        // saddle: keep the stable corners separated
                        if v[0] {
                            out.push([mid(0), mid(1)]);
                            out.push([mid(2), mid(3)]);
                        } else {
                            out.push([mid(3), mid(0)]);
                            out.push([mid(1), mid(2)]);
                        }
                    }
                    _ => {}
                }
            }
        }
        out
    }
}

/// Directed Hausdorff-style distance from every point of `a` to the
/// nearest point of `b`, over segment endpoints.
pub fn boundary_distance(a: &[[[f64; 2]; 2]], b: &[[[f64; 2]; 2]]) -> f64 {
    let pts = |s: &[[[f64; 2]; 2]]| s.iter().flat_map(|seg| seg.iter().copied()).collect::<Vec<_>>();
    let (pa, pb) = (pts(a), pts(b));
    pa.iter()
        .map(|p| pb.iter().map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Coupled-model verdicts (`δ²E^h(y_F)` positive definite) on the grid.
pub fn stability_scan(model: &CoupledModel, pot: &dyn PairPotential, scan: &StabilityScan) -> Result<StabilityGrid> {
    scan.validate()?;
    let (t, s) = (scan.t_values(), scan.s_values());
    let points: Vec<(usize, usize)> = (0..t.len()).flat_map(|i| (0..s.len()).map(move |j| (i, j))).collect();
    let reference = DeformationState::uniform(model, ID3);
    let h = assemble_hessian(model, pot, &reference, EnergyKind::Coupled)?;
    let (n, trips) = h.free_triplets(true);
    let pattern = CholeskyPattern::new(n, trips.iter().map(|t| (t.0, t.1)))?;
    drop(trips);
    let verdicts: Vec<bool> = points
        .par_iter()
        .map(|&(i, j)| {
            let state = DeformationState::uniform(model, stability_gradient(t[i], s[j]));
            match assemble_hessian(model, pot, &state, EnergyKind::Coupled) {
                Ok(h) => {
                    let values: Vec<f64> = h.free_triplets(true).1.into_iter().map(|t| t.2).collect();
                    pattern.is_positive_definite(&values)
                }
                Err(LatvolError::Singularity { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(StabilityGrid { stable: verdicts.chunks(s.len()).map(|c| c.to_vec()).collect(), t, s })
}

/// Fourier verdicts for the infinite lattice on the grid.
pub fn fourier_scan(
    basis: &CrystalBasis,
    cutoff: f64,
    pot: &dyn PairPotential,
    scan: &StabilityScan,
    k_grid: usize,
) -> Result<StabilityGrid> {
    scan.validate()?;
    let (t, s) = (scan.t_values(), scan.s_values());
    let stable = t
        .iter()
        .map(|&ti| {
            s.iter()
                .map(|&sj| atomistic_stability_fourier(&stability_gradient(ti, sj), basis, cutoff, pot, k_grid))
                .collect()
        })
        .collect();
    Ok(StabilityGrid { t, s, stable })
}

/// Defect-free model for the stability experiment.
pub fn stability_model(n: i64, k: i64, basis: &CrystalBasis) -> Result<CoupledModel> {
    build_perfect_problem(n, k, basis)
}

/// `max_{b∈B} |D_b(y_h − y_exact)| / |A·r_b|`, with both states evaluated
/// at the sites of `exact_model` and the bonds taken from it.
pub fn w1inf_error(
    exact_model: &CoupledModel,
    y_exact: &DeformationState,
    model_h: &CoupledModel,
    y_h: &DeformationState,
) -> Result<f64> {
    let ye = y_exact.site_values(exact_model);
    let yh_own = y_h.site_values(model_h);
    let yh: Vec<Vec3> = exact_model
        .domain
        .sites
        .iter()
        .map(|&x| {
            model_h
                .domain
                .site_index(x)
                .map(|s| yh_own[s])
                .ok_or_else(|| LatvolError::InvalidInput(format!("site {x:?} missing from coupled model")))
        })
        .collect::<Result<_>>()?;
    let lengths: Vec<f64> = exact_model
        .directions
        .iter()
        .map(|&r| {
            let p = exact_model.basis.position(r);
            (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
        })
        .collect();
    let err = exact_model
        .bonds
        .bonds
        .par_iter()
        .map(|b| {
            let (s, t) = (b.from as usize, b.to as usize);
            let d: f64 = (0..3)
                .map(|c| ((yh[t][c] - yh[s][c]) - (ye[t][c] - ye[s][c])).powi(2))
                .sum::<f64>()
                .sqrt();
            d / lengths[b.dir as usize]
        })
        .reduce(|| 0.0, f64::max);
    Ok(err)
}

/// One row of the convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: i64,
    pub k: i64,
    pub dof: usize,
    pub w1inf_error: f64,
    pub energy_error: f64,
    pub newton_iterations: usize,
}

/// Atomistic reference solution of the vacancy problem.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub model: CoupledModel,
    pub state: DeformationState,
    pub energy: f64,
    pub report: NewtonReport,
}

pub fn solve_reference(
    n: i64,
    basis: &CrystalBasis,
    pot: &dyn PairPotential,
    f: Mat3,
    cfg: &NewtonConfig,
) -> Result<ReferenceSolution> {
    let model = build_atomistic_problem(n, true, basis)?;
    let y0 = DeformationState::uniform(&model, f);
    let (state, report) = newton_solve(&model, pot, EnergyKind::Atomistic, &y0, cfg)?;
    let energy = *report.energies.last().unwrap();
    Ok(ReferenceSolution { model, state, energy, report })
}

/// Solves the coupled vacancy problem at `(N, K)` and compares it with
/// the reference.
pub fn convergence_row(
    reference: &ReferenceSolution,
    k: i64,
    pot: &dyn PairPotential,
    f: Mat3,
    cfg: &NewtonConfig,
) -> Result<ConvergenceRow> {
    let n = reference.model.config.n;
    let model = build_vacancy_problem(n, k, &reference.model.basis)?;
    let y0 = DeformationState::uniform(&model, f);
    let (state, report) = newton_solve(&model, pot, EnergyKind::Coupled, &y0, cfg)?;
    let energy = *report.energies.last().unwrap();
    Ok(ConvergenceRow {
        n,
        k,
        dof: model.dof(),
        w1inf_error: w1inf_error(&reference.model, &reference.state, &model, &state)?,
        energy_error: (energy - reference.energy).abs(),
        newton_iterations: report.iterations,
    })
}

/// Convergence table over all `(N, K)` with `2 ≤ K < N`.
pub fn convergence_study(
    n_list: &[i64],
    k_list: &[i64],
    basis: &CrystalBasis,
    pot: &dyn PairPotential,
    f: Mat3,
    cfg: &NewtonConfig,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let reference = solve_reference(n, basis, pot, f, cfg)?;
        for &k in k_list.iter().filter(|&&k| k >= 2 && k < n) {
            rows.push(convergence_row(&reference, k, pot, f, cfg)?);
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Slopes of the W^{1,∞} and energy errors against DoF over the rows
/// with the given `N`.
pub fn convergence_slopes(rows: &[ConvergenceRow], n: i64) -> (f64, f64) {
    let sel: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.n == n).collect();
    let w: Vec<(f64, f64)> = sel.iter().map(|r| (r.dof as f64, r.w1inf_error)).collect();
    let e: Vec<(f64, f64)> = sel.iter().map(|r| (r.dof as f64, r.energy_error)).collect();
    (loglog_slope(&w), loglog_slope(&e))
}

/// CSV of the convergence table.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("N,K,DoF,w1inf_error,energy_error\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:e},{:e}\n", r.n, r.k, r.dof, r.w1inf_error, r.energy_error));
    }
    out
}

/// CSV of stability verdicts, one row per grid point and source.
pub fn stability_csv(grids: &[(&str, &StabilityGrid)]) -> String {
    let mut out = String::from("t,s,stable_flag,source\n");
    for (source, g) in grids {
        for (i, t) in g.t.iter().enumerate() {
            for (j, s) in g.s.iter().enumerate() {
                out.push_str(&format!("{t:.6},{s:.6},{},{source}\n", u8::from(g.stable[i][j])));
            }
        }
    }
    out
}
