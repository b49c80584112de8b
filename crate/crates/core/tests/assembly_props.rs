use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resonances::assembly::{assemble_boundary_modes, assemble_mass, assemble_potential, OperatorBundle, QuadRule};
use resonances::mesh::{generate_disk_mesh, mesh_at_level, Mesh};
use resonances::potential::parse_potential;
use resonances::specfun::hankel1_seq;

const EXAMPLE4: &str = "support 1\npiece disk(0,0;1): exp(1/(r^2-2)) + i*exp(1/(r^2-4))";

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn levels(n: u32) -> Vec<Mesh> {
    (1..=n).map(|l| mesh_at_level(1.0, 0.2, l).unwrap()).collect()
}

#[test]
fn boundary_block_rank_is_at_most_2n_plus_1() {
    let mesh = generate_disk_mesh(1.0, 0.05).unwrap();
    let spec = parse_potential("support 1").unwrap();
    let b = OperatorBundle::assemble(&mesh, &spec, 20, QuadRule::ThreePoint).unwrap();
    let block = b.boundary_block(c(1.2, -0.8)).unwrap();
    let nb = block.len();
    assert!(nb > 41);
    let m = Mat::<Complex64>::from_fn(nb, nb, |i, j| block[i][j]);
    let sv = m.singular_values().unwrap();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count();
    assert!(rank <= 41, "numerical rank {rank}");
    assert!(rank >= 30, "numerical rank {rank}");
}

#[test]
fn dtn_term_lives_on_the_boundary() {
    let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
    let spec = parse_potential("support 1").unwrap();
    let b = OperatorBundle::assemble(&mesh, &spec, 20, QuadRule::ThreePoint).unwrap();
    let nodes = b.modes.nodes().to_vec();
    let k = c(-0.9, -1.3);
    let interior: Vec<Complex64> = (0..b.dim()).map(|i| if nodes.contains(&i) { c(0.0, 0.0) } else { c(1.0, 1.0) }).collect();
    assert!(b.apply_e(k, &interior).unwrap().iter().all(|v| *v == c(0.0, 0.0)));
    let ones = vec![c(1.0, 0.0); b.dim()];
    let e = b.apply_e(k, &ones).unwrap();
    for i in 0..b.dim() {
        if !nodes.contains(&i) {
            assert_eq!(e[i], c(0.0, 0.0));
        }
    }
}

#[test]
fn bilinear_form_is_holomorphic_in_k() {
    let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
    let spec = parse_potential(EXAMPLE4).unwrap();
    let b = OperatorBundle::assemble(&mesh, &spec, 20, QuadRule::SevenPoint).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let u: Vec<_> = (0..b.dim()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let v: Vec<_> = (0..b.dim()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let form = |k: Complex64| -> Complex64 { b.apply_f(k, &u).unwrap().iter().zip(&v).map(|(a, b)| a * b).sum() };
    let mut tested = 0;
    while tested < 20 {
        let k = c(rng.random_range(-4.0..4.0), rng.random_range(-4.0..-0.5));
        // stay away from zeros of H_n(k), where the form has poles
        let h = hankel1_seq(20, k).unwrap();
        if h.values().iter().any(|x| x.norm() < 1e-2) {
            continue;
        }
        tested += 1;
        // fourth-order central differences along both axes
        let diff = |dir: Complex64| {
            let h = 1e-3 * dir;
            (form(k - 2.0 * h) - 8.0 * form(k - h) + 8.0 * form(k + h) - form(k + 2.0 * h)) / (12.0 * 1e-3)
        };
        let dx = diff(c(1.0, 0.0));
        let dy = diff(c(0.0, 1.0));
        let dbar = 0.5 * (dx + c(0.0, 1.0) * dy);
        assert!(dbar.norm() <= 1e-6 * dx.norm(), "k={k}: {} vs {}", dbar.norm(), dx.norm());
    }
}

#[test]
fn mass_total_converges_to_pi() {
    let ms = levels(4);
    let consts: Vec<f64> = ms
        .iter()
        .map(|m| {
            let total: Complex64 = assemble_mass(m).values().iter().sum();
            (PI - total.re) / (m.h() * m.h())
        })
        .collect();
    for w in consts.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.15, "{consts:?}");
    }
}

#[test]
fn smooth_potential_integral_converges_at_second_order() {
    let spec = parse_potential(EXAMPLE4).unwrap();
    let totals: Vec<Complex64> = levels(4)
        .iter()
        .map(|m| assemble_potential(m, &spec, QuadRule::SevenPoint).unwrap().values().iter().sum())
        .collect();
    let d: Vec<f64> = totals.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!((2.8..=5.5).contains(&ratio), "differences {d:?}");
    }
}

#[test]
fn boundary_modes_are_nearly_orthogonal() {
    for m in levels(3) {
        let modes = assemble_boundary_modes(&m, 20);
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let nodes = modes.nodes();
        let local = |v: usize| nodes.binary_search(&v).unwrap();
        for e in m.boundary_edges() {
            edges.push((local(e.a), local(e.b), e.theta_b - e.theta_a));
        }
        let wdot = |x: &[f64], y: &[f64]| -> f64 {
            edges
                .iter()
                .map(|&(a, b, d)| d / 6.0 * (2.0 * x[a] * y[a] + x[a] * y[b] + x[b] * y[a] + 2.0 * x[b] * y[b]))
                .sum()
        };
        let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h2 = m.h() * m.h();
        for n in 0..=20 {
            for k in 0..n {
                let (cn, ck) = (modes.cos_local(n), modes.cos_local(k));
                let v = wdot(cn, ck).abs() / (norm(cn) * norm(ck));
                assert!(v <= h2, "level {} n={n} m={k}: {v:e}", m.level());
            }
        }
    }
}

#[test]
fn free_outgoing_wave_residual_shrinks_with_h() {
    // away from its source at the origin, H_0(k|x|) is an outgoing solution
    let spec = parse_potential("support 1").unwrap();
    let k = c(1.5, -0.4);
    let mut res = Vec::new();
    for m in levels(4) {
        let b = OperatorBundle::assemble(&m, &spec, 20, QuadRule::ThreePoint).unwrap();
        let u: Vec<Complex64> = m
            .vertices()
            .iter()
            .map(|p| {
                let r = p[0].hypot(p[1]).max(1e-3);
                hankel1_seq(0, k * r).unwrap().values()[0]
            })
            .collect();
        let fu = b.apply_f(k, &u).unwrap();
        let far: f64 = m
            .vertices()
            .iter()
            .zip(&fu)
            .filter(|(p, _)| p[0].hypot(p[1]) >= 0.5)
            .map(|(_, v)| v.norm_sqr())
            .sum::<f64>()
            .sqrt();
        res.push(far);
    }
    for w in res.windows(2) {
        assert!(w[1] < 0.7 * w[0], "{res:?}");
    }
}
