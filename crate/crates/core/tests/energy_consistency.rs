use latvol::crystal_model::{build_atomistic_problem, build_perfect_problem, build_vacancy_problem, CoupledModel, CrystalBasis};
use latvol::energy::{
    assemble_energy, assemble_hessian, lj, patch_test, DeformationState, EnergyKind, LennardJones, Mat3,
    PairPotential, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ID: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn near_identity(rng: &mut ChaCha8Rng, amp: f64) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| ID[i][j] + rng.gen_range(-amp..amp)))
}

fn perturbed(model: &CoupledModel, rng: &mut ChaCha8Rng, amp: f64) -> DeformationState {
    let f = near_identity(rng, 0.02);
    let mut state = DeformationState::uniform(model, f);
    for (n, y) in state.y.iter_mut().enumerate() {
        if !model.node_fixed[n] {
            for c in y.iter_mut() {
                *c += rng.gen_range(-amp..amp);
            }
        }
    }
    state
}

fn random_direction(model: &CoupledModel, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..model.nodes.len())
        .map(|n| if model.node_fixed[n] { [0.0; 3] } else { std::array::from_fn(|_| rng.gen_range(-1.0..1.0)) })
        .collect()
}

fn shifted(state: &DeformationState, v: &[Vec3], eps: f64) -> DeformationState {
    let mut s = state.clone();
    for (y, d) in s.y.iter_mut().zip(v) {
        for c in 0..3 {
            y[c] += eps * d[c];
        }
    }
    s
}

/// Fourth-order central difference `(8(f(h) − f(−h)) − (f(2h) − f(−2h)))/(12h)`.
fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

fn check_derivatives(model: &CoupledModel, kind: EnergyKind, seed: u64) {
    let pot = LennardJones::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = perturbed(model, &mut rng, 0.03);
    let v = random_direction(model, &mut rng);
    let g = assemble_energy(model, &pot, &state, kind).unwrap();
    let analytic: f64 = g.gradient.iter().zip(&v).map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).sum();
    let fd = richardson(|e| assemble_energy(model, &pot, &shifted(&state, &v, e), kind).unwrap().value, 1e-4);
    assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "gradient: {fd} vs {analytic}");

    let h = assemble_hessian(model, &pot, &state, kind).unwrap();
    let hv = h.apply(&v);
    let scale = hv.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let grad_at = |e: f64| assemble_energy(model, &pot, &shifted(&state, &v, e), kind).unwrap().gradient;
    let (p1, m1, p2, m2) = (grad_at(1e-4), grad_at(-1e-4), grad_at(2e-4), grad_at(-2e-4));
    let mut worst = 0.0f64;
    for n in 0..hv.len() {
        for c in 0..3 {
            let fd = (8.0 * (p1[n][c] - m1[n][c]) - (p2[n][c] - m2[n][c])) / (12.0 * 1e-4);
            worst = worst.max((fd - hv[n][c]).abs());
        }
    }
    assert!(worst <= 1e-5 * scale, "Hessian action: {worst} vs scale {scale}");
}

#[test]
fn coupled_energy_derivatives() {
    let model = build_vacancy_problem(3, 2, &CrystalBasis::fcc()).unwrap();
    for seed in 0..3 {
        check_derivatives(&model, EnergyKind::Coupled, seed);
    }
}

#[test]
fn atomistic_energy_derivatives() {
    let model = build_atomistic_problem(3, true, &CrystalBasis::fcc()).unwrap();
    for seed in 10..13 {
        check_derivatives(&model, EnergyKind::Atomistic, seed);
    }
}

#[test]
fn lennard_jones_reference_values() {
    assert_eq!(lj([0.0, 0.0, -1.0]).unwrap(), -1.0);
    let s = 0.5f64.powf(1.0 / 6.0);
    assert!(lj([0.0, s, 0.0]).unwrap().abs() < 1e-12);
    let pot = LennardJones::default();
    let g = pot.gradient([0.6, 0.0, 0.8]);
    assert!(g.iter().all(|c| c.abs() < 1e-14));
    assert!(lj([0.0, 0.0, 0.0]).is_err());
    // radial: same value on a sphere
    assert!((pot.value([1.3, 0.0, 0.0]) - pot.value([0.0, 0.78, 1.04])).abs() < 1e-14);
}

#[test]
fn patch_test_is_consistent_and_cauchy_born_is_not() {
    let pot = LennardJones::default();
    let model = build_perfect_problem(4, 2, &CrystalBasis::fcc()).unwrap();
    let cb = model.with_cauchy_born_volumes();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let f = near_identity(&mut rng, 0.03);
        let ours = patch_test(&model, &pot, f).unwrap();
        let plain = patch_test(&cb, &pot, f).unwrap();
        assert!(ours.relative <= 1e-10, "{ours:?}");
        assert!(plain.relative > 1e3 * ours.relative.max(1e-12), "{plain:?}");
    }
    assert!(patch_test(&model, &pot, ID).unwrap().ghost_force_maxnorm <= 1e-10);
}

#[test]
fn uniform_deformation_is_atomistic_equilibrium() {
    let pot = LennardJones::default();
    let model = build_atomistic_problem(3, false, &CrystalBasis::fcc()).unwrap();
    let f = [[1.02, 0.01, 0.0], [0.0, 0.98, 0.02], [0.01, 0.0, 1.0]];
    let e = assemble_energy(&model, &pot, &DeformationState::uniform(&model, f), EnergyKind::Atomistic).unwrap();
    assert!(e.max_norm() < 1e-10, "{}", e.max_norm());
}

#[test]
fn hessian_is_symmetric() {
    let pot = LennardJones::default();
    let model = build_vacancy_problem(3, 2, &CrystalBasis::fcc()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let state = perturbed(&model, &mut rng, 0.02);
    for kind in [EnergyKind::Coupled, EnergyKind::Atomistic] {
        let h = assemble_hessian(&model, &pot, &state, kind).unwrap().dense_free();
        assert!((&h - h.transpose()).abs().max() <= 1e-12 * h.abs().max());
    }
}

#[test]
fn coincident_atoms_are_rejected() {
    let pot = LennardJones::default();
    let model = build_vacancy_problem(3, 2, &CrystalBasis::fcc()).unwrap();
    let mut state = DeformationState::uniform(&model, ID);
    let free = model.free_nodes();
    let far = *free.last().unwrap();
    let near = model.domain.site_index(model.nodes[far]).unwrap();
    // collapse a free node onto a bonded neighbour
    let bond = model.bonds.bonds.iter().find(|b| b.from as usize == near || b.to as usize == near).unwrap();
    let other = if bond.from as usize == near { bond.to } else { bond.from } as usize;
    state.y[far] = state.site_values(&model)[other];
    assert!(assemble_energy(&model, &pot, &state, EnergyKind::Atomistic).is_err());
}
