use ransom_core::rng::{Consumer, RngState, StreamRng};
use ransom_core::steps::{
    beta_mw_closed_form, estimate_moments, exponential_mws_closed_form, verify_stein, verify_stein_beta,
    verify_stein_exponential,
};
use ransom_core::StepDistribution;

const N: usize = 1_000_000;

fn rng(key: u64) -> StreamRng {
    RngState::new(17).split(Consumer::Step).fork(key).rng()
}

// g(s) = c0 + c1 s + ... + c4 s^4
fn poly(c: [f64; 5]) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64) {
    let g = move |s: f64| c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * c[4])));
    let dg = move |s: f64| c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * 4.0 * c[4]));
    (g, dg)
}

const POLYS: [[f64; 5]; 4] = [
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, -2.0, 3.0, 0.0, 0.0],
    [0.0, 0.5, -1.0, 2.0, 0.0],
    [2.0, 0.0, 1.0, -1.0, 0.5],
];

#[test]
fn exponential_identity_for_low_degree_polynomials() {
    for (i, &eta) in [0.01, 0.1, 0.5].iter().enumerate() {
        for (j, c) in POLYS.iter().enumerate() {
            let (g, dg) = poly(*c);
            let chk = verify_stein_exponential(g, dg, eta, N, &mut rng((i * 10 + j) as u64)).unwrap();
            assert!(chk.abs_err <= 4.0 * chk.std_err, "eta={eta} poly {j}: {chk:?}");
        }
    }
}

#[test]
fn beta_identity_for_low_degree_polynomials() {
    for (i, &eta) in [0.05, 0.2, 0.5].iter().enumerate() {
        for (j, c) in POLYS.iter().enumerate() {
            let (g, dg) = poly(*c);
            let chk = verify_stein_beta(g, dg, eta, N, &mut rng(100 + (i * 10 + j) as u64)).unwrap();
            assert!(chk.abs_err <= 4.0 * chk.std_err, "eta={eta} poly {j}: {chk:?}");
        }
    }
}

#[test]
fn square_matches_closed_forms() {
    // ∫ s² λ e^{-λ s} ds = 2/λ²
    let chk = verify_stein_exponential(|s| s * s, |s| 2.0 * s, 0.5, N, &mut rng(200)).unwrap();
    assert!((chk.lhs - 0.5).abs() < 5e-3 && (chk.rhs - 0.5).abs() < 5e-3);
    assert!((chk.lhs - chk.rhs).abs() <= 5e-3);
    // K = 4: 2/((K+1)(K+2)) = 1/15
    let chk = verify_stein_beta(|s| s * s, |s| 2.0 * s, 0.2, N, &mut rng(201)).unwrap();
    assert!((chk.lhs - 1.0 / 15.0).abs() < 5e-3 && (chk.rhs - 1.0 / 15.0).abs() < 5e-3);
}

#[test]
fn linear_g_gives_the_mean() {
    let chk = verify_stein_exponential(|s| s, |_| 1.0, 0.3, N, &mut rng(300)).unwrap();
    assert!((chk.lhs - 0.3).abs() < 4.0 * chk.std_err + 1e-3);
    assert!((chk.rhs - 0.3).abs() < 1e-9);
    let chk = verify_stein_beta(|s| s, |_| 1.0, 0.25, N, &mut rng(301)).unwrap();
    assert!((chk.lhs - 0.25).abs() < 2e-3 && (chk.rhs - 0.25).abs() < 2e-3);
}

#[test]
fn constant_g_is_zero_on_both_sides() {
    let d = StepDistribution::beta(0.3).unwrap();
    let chk = verify_stein(&d, |_| 7.0, |_| 0.0, 10_000, &mut rng(400));
    assert_eq!((chk.lhs, chk.rhs), (0.0, 0.0));
}

#[test]
fn sample_means_and_support() {
    let exp = StepDistribution::exponential(0.1).unwrap();
    let beta = StepDistribution::beta(0.1).unwrap();
    let (mut r1, mut r2) = (rng(500), rng(501));
    let (mut se, mut sb) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..N {
        let a = exp.sample(&mut r1);
        assert_eq!(a.w, 0.1);
        se += a.s;
        let b = beta.sample(&mut r2);
        sb += b.s;
        lo = lo.min(b.s);
        hi = hi.max(b.s);
    }
    assert!((se / N as f64 - 0.1).abs() < 3e-4);
    assert!((sb / N as f64 - 0.1).abs() < 3e-4);
    assert!(lo >= 0.0 && hi <= 1.0);
}

#[test]
fn beta_steps_pass_kolmogorov_smirnov() {
    // Beta(1, K) has CDF 1 - (1 - z)^K
    let eta = 0.2;
    let k = 1.0 / eta - 1.0;
    let d = StepDistribution::beta(eta).unwrap();
    let mut r = rng(600);
    let n = 20_000;
    let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut r).s).collect();
    xs.sort_by(f64::total_cmp);
    let stat = xs
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = 1.0 - (1.0 - z).powf(k);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // 0.1% critical value
    assert!(stat < 1.95 / (n as f64).sqrt(), "KS statistic {stat}");
}

// Composite Simpson on [0, b].
fn simpson(f: impl Fn(f64) -> f64, b: f64, n: usize) -> f64 {
    let h = b / n as f64;
    let mut acc = f(0.0) + f(b);
    for i in 1..n {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn exponential_mws_against_quadrature() {
    for q in [1.5, 2.0] {
        let quad = simpson(|u| (1.0 + u).powf(q) * (-u).exp(), 60.0, 60_000);
        assert!((exponential_mws_closed_form(q) - quad).abs() < 1e-9, "q={q}");
    }
    assert!((exponential_mws_closed_form(2.0) - 5.0).abs() < 1e-12);
}

#[test]
fn beta_mw_against_quadrature() {
    for (eta, q) in [(0.1, 2.0), (0.2, 1.5), (0.5, 2.0)] {
        let k: f64 = 1.0 / eta - 1.0;
        // E[((1-s)/(K eta))^q] with density K (1-s)^(K-1)
        let quad = simpson(|s| ((1.0 - s) / (k * eta)).powf(q) * k * (1.0 - s).powf(k - 1.0), 1.0, 20_000);
        assert!((beta_mw_closed_form(eta, q) - quad).abs() < 1e-8, "eta={eta} q={q}");
    }
}

#[test]
fn moment_constants() {
    let exp = StepDistribution::exponential(0.1).unwrap();
    let rep = estimate_moments(&exp, 2.0, N, &mut rng(700)).unwrap();
    assert!((rep.c_s - 2.0).abs() <= 0.02, "{rep:?}");
    assert_eq!(rep.m_w, 1.0);
    assert!((rep.m_ws - 5.0).abs() < 0.05, "{rep:?}");

    let beta = StepDistribution::beta(0.1).unwrap();
    let rep = estimate_moments(&beta, 2.0, N, &mut rng(701)).unwrap();
    assert!((rep.c_s - 20.0 / 11.0).abs() <= 0.02, "{rep:?}");
    assert!((rep.m_w - beta_mw_closed_form(0.1, 2.0)).abs() < 0.01, "{rep:?}");
    assert_eq!(beta.descent_constant(), 20.0 / 11.0);
}
