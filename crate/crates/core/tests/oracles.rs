//! Independent reference computations for values that have no closed form
//! in the library itself.

use std::sync::Arc;

use ising_cavity::cavity::{fixed_point, IsingParams, SolverConfig};
use ising_cavity::degree_models::zeta::hurwitz_zeta;
use ising_cavity::degree_models::{forward, make_model, ForwardModel, ModelSpec};
use ising_cavity::observables::{magnetization, susceptibility_subcritical};
use ising_cavity::oracle::{sample_configuration_model, sample_galton_watson, RootLaw};
use ising_cavity::rng::SeedStream;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fm(spec: ModelSpec) -> Arc<ForwardModel> {
    Arc::new(forward(&make_model(&spec).unwrap()).unwrap())
}

fn xi_naive(beta: f64, h: f64) -> f64 {
    (beta.tanh() * h.tanh()).atanh()
}

/// Σ_{k≥q} k^{-s} by direct summation plus an Euler-Maclaurin tail.
fn zeta_brute(s: f64, q: u64) -> f64 {
    let n = 200_000u64;
    let head: f64 = (q..n).rev().map(|k| (k as f64).powf(-s)).sum();
    let nf = n as f64;
    head + nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s / 12.0 * nf.powf(-s - 1.0)
}

#[test]
fn hurwitz_zeta_matches_brute_force() {
    for &(s, q) in &[(3.5, 1u64), (4.5, 2), (2.5, 1), (5.0, 3)] {
        let a = hurwitz_zeta(s, q as f64);
        let b = zeta_brute(s, q);
        assert!((a - b).abs() < 1e-11 * b, "s={s} q={q}: {a} vs {b}");
    }
}

#[test]
fn power_law_nu_matches_direct_sum() {
    for &(tau, k_min) in &[(4.5, 1u32), (4.5, 2), (5.0, 2)] {
        let f = fm(ModelSpec::PowerLaw { tau, k_min });
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in (k_min as u64..2_000_000).rev() {
            let p = (k as f64).powf(-tau);
            let kf = k as f64;
            m1 += kf * p;
            m2 += kf * (kf - 1.0) * p;
        }
        let nu = m2 / m1;
        let got = f.nu().finite().unwrap();
        // tail beyond the cutoff is below 1e-6 relative for these exponents
        assert!((got - nu).abs() < 1e-5 * nu, "tau={tau} k_min={k_min}: {got} vs {nu}");
    }
}

#[test]
fn regular_subcritical_susceptibility_by_hand() {
    let f = fm(ModelSpec::Regular { d: 3 });
    let t = 0.2f64.tanh();
    let expected = 1.0 + 3.0 * t / (1.0 - 2.0 * t);
    let got = susceptibility_subcritical(&f, &IsingParams::new(0.2, 0.0).unwrap()).unwrap();
    assert!((got - expected).abs() < 1e-14);
    assert!((got - 1.9784).abs() < 1e-4);
}

#[test]
fn regular_magnetization_matches_scalar_bisection() {
    let (beta, b) = (0.7, 1e-8);
    // h* = B + 2 ξ(h*) on (0, 3]: g(h) = B + 2ξ(h) − h is positive near 0+
    let g = |h: f64| b + 2.0 * xi_naive(beta, h) - h;
    let (mut lo, mut hi) = (1e-3, 3.0);
    assert!(g(lo) > 0.0 && g(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_star = 0.5 * (lo + hi);
    let m_exact = (b + 3.0 * xi_naive(beta, h_star)).tanh();

    let f = fm(ModelSpec::Regular { d: 3 });
    let cfg = SolverConfig {
        population_size: 10_000,
        ..SolverConfig::default()
    };
    let pop = fixed_point(&f, IsingParams::new(beta, b).unwrap(), &cfg, SeedStream::new(5)).unwrap();
    let m = magnetization(f.parent(), &pop, 10_000, SeedStream::new(6)).unwrap();
    assert!((m.value - m_exact).abs() <= 3.0 * m.stderr, "{} vs {m_exact} (se {})", m.value, m.stderr);
}

#[test]
fn subcritical_magnetization_is_linear_in_field() {
    let f = fm(ModelSpec::Poisson { lambda: 3.0 });
    let (beta, b) = (0.2, 1e-8);
    let pop = fixed_point(&f, IsingParams::new(beta, b).unwrap(), &SolverConfig::default(), SeedStream::new(2)).unwrap();
    let m = magnetization(f.parent(), &pop, 200_000, SeedStream::new(3)).unwrap();
    let bh = beta.tanh();
    let bound = b * (1.0 + bh * 3.0 / (1.0 - bh * 3.0)) + 3.0 * m.stderr;
    assert!(m.value <= bound, "{} > {bound}", m.value);
    assert!(m.value > 0.0);
}

#[test]
fn galton_watson_generation_sizes() {
    // Poisson is its own forward law, so the depth-3 tree from a K-root has
    // mean size 1 + 2 + 4 + 8
    let spec = ModelSpec::Poisson { lambda: 2.0 };
    let model = make_model(&spec).unwrap();
    let f = forward(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sizes: Vec<f64> = (0..20_000)
        .map(|_| sample_galton_watson(&model, &f, 3, RootLaw::Forward, 1_000_000, &mut rng).unwrap().n() as f64)
        .collect();
    let n = sizes.len() as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let var = sizes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    assert!((mean - 15.0).abs() < 4.0 * (var / n).sqrt(), "mean {mean}");
}

#[test]
fn configuration_model_degrees() {
    let model = make_model(&ModelSpec::Poisson { lambda: 3.0 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cg = sample_configuration_model(&model, 20_000, &mut rng).unwrap();
    let target: u64 = cg.target_degrees.iter().sum();
    assert_eq!(target % 2, 0);
    let realized: usize = cg.graph.degrees().iter().sum();
    assert_eq!(realized, 2 * cg.graph.edges().len());
    assert_eq!(
        target as usize,
        realized + 2 * (cg.erased_self_loops + cg.erased_multi_edges)
    );
    let mean = realized as f64 / 20_000.0;
    // σ of the mean is sqrt(3/n) ≈ 0.012; erasures remove O(1) edges
    assert!((mean - 3.0).abs() < 0.05, "mean degree {mean}");
}

#[test]
fn forward_sampler_chi_squared() {
    let f = fm(ModelSpec::Poisson { lambda: 3.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 200_000usize;
    let mut counts = vec![0usize; 12];
    for _ in 0..n {
        let k = f.sample(&mut rng) as usize;
        counts[k.min(11)] += 1;
    }
    let mut expected: Vec<f64> = (0..11).map(|k| f.rho(k as u64) * n as f64).collect();
    expected.push(n as f64 - expected.iter().sum::<f64>());
    let stat: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    // 11 degrees of freedom, 99.9% quantile
    assert!(stat < 31.26, "chi^2 = {stat}");
}
