use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use meshgp::kernels::{BlockConditionals, CorrFamily, LatentFamily};
use meshgp::latent::{gather, gradient_full_conditional, joint_meshed_logdensity, MeshContext};
use meshgp::linalg::Matrix;
use meshgp::mesh::build_cubic_dag;
use meshgp::metrics::{maep, omega_corr, rmspe};
use meshgp::outcomes::{fisher_eta, loglik, sample, score_eta, Family};

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Gaussian),
        Just(Family::Poisson),
        Just(Family::Bernoulli),
        (1u32..20).prop_map(|trials| Family::Binomial { trials }),
        Just(Family::NegBinomial),
    ]
}

fn nuisance(f: Family, u: f64) -> f64 {
    match f {
        Family::Gaussian => 0.2 + 2.0 * u,
        Family::NegBinomial => 0.05 + 2.0 * u,
        _ => f64::NAN,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cubic_coloring_is_valid_and_acyclic(a in 1usize..7, b in 1usize..7, c in 1usize..5) {
        let g = build_cubic_dag(&[a, b, c]).unwrap();
        prop_assert!(g.coloring_is_valid());
        for i in 0..g.n_blocks() {
            prop_assert!(g.parents(i).iter().all(|&p| p < i));
            let blanket = g.markov_blanket(i).unwrap();
            prop_assert!(blanket.iter().all(|&j| g.color(j) != g.color(i)));
        }
        let again = build_cubic_dag(&[a, b, c]).unwrap();
        prop_assert_eq!(format!("{g:?}"), format!("{again:?}"));
    }

    #[test]
    fn score_matches_differences(f in family(), eta in -5.0f64..5.0, u in 0.0f64..1.0, seed in any::<u64>()) {
        let gamma = nuisance(f, u);
        let y = sample(f, eta, gamma, &mut ChaCha8Rng::seed_from_u64(seed));
        let h = 1e-5;
        let fd = (loglik(f, y, eta + h, gamma) - loglik(f, y, eta - h, gamma)) / (2.0 * h);
        let s = score_eta(f, y, eta, gamma);
        prop_assert!((s - fd).abs() / fd.abs().max(1.0) < 1e-6, "{f:?} y={y} eta={eta}: {s} vs {fd}");
    }

    #[test]
    fn fisher_positive_and_loglik_finite(f in family(), eta in -30.0f64..30.0, u in 0.0f64..1.0, seed in any::<u64>()) {
        let gamma = nuisance(f, u);
        let y = sample(f, eta.clamp(-5.0, 5.0), gamma, &mut ChaCha8Rng::seed_from_u64(seed));
        let fi = fisher_eta(f, eta, gamma);
        prop_assert!(fi > 0.0 && fi.is_finite());
        prop_assert!(loglik(f, y, eta, gamma).is_finite());
    }

    #[test]
    fn rmspe_dominates_maep(xs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
        let (p, t): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        let (r, m) = (rmspe(&p, &t).unwrap(), maep(&p, &t).unwrap());
        prop_assert!(m >= 0.0 && r >= m * (1.0 - 1e-12));
    }

    #[test]
    fn omega_diagonal_is_one(vals in prop::collection::vec(-3.0f64..3.0, 12..=12), draws in 1usize..5) {
        let lambda: Vec<Matrix<f64>> = (0..draws)
            .map(|d| Matrix::from_fn(4, 3, |j, h| if j < h { 0.0 } else if j == h { 0.5 + vals[j * 3 + h].abs() } else { vals[(j * 3 + h + d) % 12] }))
            .collect();
        let o = omega_corr(&lambda).unwrap();
        for j in 0..4 {
            prop_assert!((o[(j, j)] - 1.0).abs() <= 1e-12);
            for l in 0..4 {
                prop_assert!((o[(j, l)] - o[(l, j)]).abs() <= 1e-12 && o[(j, l)].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn density_ignores_parent_member_order(seed in any::<u64>(), per in 2usize..6, phi in 1.0f64..8.0) {
        use rand::Rng;
        use rand::seq::SliceRandom;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = build_cubic_dag(&[2, 2]).unwrap();
        let n = 4 * per;
        let mut cell = [[0usize; 2]; 4];
        for (x, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            cell[g.block_at(&[x, y]).unwrap()] = [x, y];
        }
        let coords = Matrix::from_fn(n, 2, |row, c| 0.5 * (cell[row / per][c] as f64 + r.random::<f64>()));
        let members: Vec<Vec<usize>> = (0..4).map(|b| (b * per..(b + 1) * per).collect()).collect();
        let v = Matrix::from_fn(n, 2, |_, _| r.random_range(-2.0..2.0));
        let density = |m: &[Vec<usize>]| {
            let bc = BlockConditionals::build(&g, &coords, m, CorrFamily::Exponential, &[phi, 2.0 * phi]).unwrap();
            let ctx = MeshContext { graph: &g, members: m, bc: &bc, latent: LatentFamily::Gaussian };
            joint_meshed_logdensity(&ctx, &v)
        };
        let mut shuffled = members.clone();
        for m in &mut shuffled {
            m.shuffle(&mut r);
        }
        let (a, b) = (density(&members), density(&shuffled));
        prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn student_t_location_is_gaussian_location(seed in any::<u64>(), nu in 2.1f64..60.0) {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = build_cubic_dag(&[2]).unwrap();
        let coords = Matrix::from_fn(8, 1, |i, _| i as f64 / 8.0 + 0.05 * r.random::<f64>());
        let members = vec![(0..4).collect::<Vec<_>>(), (4..8).collect()];
        let bc = BlockConditionals::build(&g, &coords, &members, CorrFamily::Exponential, &[3.0, 5.0]).unwrap();
        let mut v = Matrix::from_fn(8, 2, |_, _| r.random_range(-2.0..2.0));
        // place the leaf block at its conditional mean H v_[i]
        for h in 0..2 {
            let fc = bc.get(h, 1);
            let par: Vec<f64> = members[0].iter().map(|&row| v[(row, h)]).collect();
            let m = fc.h.mul_vec(&par);
            for (a, &row) in members[1].iter().enumerate() {
                v[(row, h)] = m[a];
            }
        }
        for latent in [LatentFamily::Gaussian, LatentFamily::StudentT { nu }] {
            let ctx = MeshContext { graph: &g, members: &members, bc: &bc, latent };
            let grad = gradient_full_conditional(&ctx, &v, None, 1);
            prop_assert_eq!(grad.len(), gather(&v, &members[1]).len());
            prop_assert!(grad.iter().all(|x| x.abs() < 1e-8), "{latent:?}: {grad:?}");
        }
    }
}
