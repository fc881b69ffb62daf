use onset_core::analytics::{loss_cdf, no_loss_weight};
use onset_core::model::{LinkParams, WindowSpec};
use onset_core::queue::{
    diffusion_occupancy, run_diffusion_window, run_event_window, run_local_time_window, sample_ensemble, Backend,
    LossSample,
};
use onset_core::rng::StreamKey;
use onset_core::stats::{ks_statistic, ks_two_sample, MeanEstimate};

fn link(eta: f64, c: f64) -> LinkParams {
    LinkParams::new(1.0, eta, 1.0, c).unwrap()
}

fn phis(samples: &[LossSample]) -> Vec<f64> {
    samples.iter().map(|s| s.phi).collect()
}

#[test]
fn strong_free_flow_loses_nothing() {
    let window = WindowSpec::new(1e4, 1.0).unwrap();
    let mut rng = StreamKey::new(2).stream(0);
    for _ in 0..20 {
        let s = run_diffusion_window(&link(-0.5, 100.0), &window, 0.05, &mut rng).unwrap();
        assert!(s.lossless);
        let s = run_event_window(&link(-0.9, 100.0), &window, &mut rng).unwrap();
        assert_eq!(s.phi, 0.0);
    }
}

#[test]
fn critical_link_mean_is_inverse_buffer() {
    let l = link(0.0, 100.0);
    let window = WindowSpec::new(1e3, 1.0).unwrap();
    let diff = MeanEstimate::of(&phis(
        &sample_ensemble(&l, &window, 100_000, Backend::diffusion(), 5).unwrap(),
    ));
    assert!((diff.mean - 0.01).abs() < 3.0 * diff.stderr, "diffusion {diff:?}");
    // The event backend reports dropped/arrived per window, a ratio whose
    // O(1/K) bias needs a longer window to fall below the noise.
    let long = WindowSpec::new(1e4, 1.0).unwrap();
    let event = MeanEstimate::of(&phis(&sample_ensemble(&l, &long, 10_000, Backend::Event, 6).unwrap()));
    let diff = MeanEstimate::of(&phis(
        &sample_ensemble(&l, &long, 10_000, Backend::diffusion(), 7).unwrap(),
    ));
    assert!((event.mean - 0.01).abs() < 3.0 * event.stderr, "event {event:?}");
    let combined = (diff.stderr.powi(2) + event.stderr.powi(2)).sqrt();
    assert!((diff.mean - event.mean).abs() < 3.0 * combined, "{diff:?} vs {event:?}");
}

#[test]
fn overloaded_link_loses_its_imbalance() {
    let l = link(0.05, 1000.0);
    let window = WindowSpec::new(1e4, 1.0).unwrap();
    let event = MeanEstimate::of(&phis(&sample_ensemble(&l, &window, 4000, Backend::Event, 8).unwrap()));
    // Birth–death chain: top-slot probability η/(1 − (1 − η)^c).
    let exact = 0.05 / (1.0 - 0.95f64.powi(1000));
    assert!((event.mean - exact).abs() < 3.0 * event.stderr, "{event:?}");
    let diff = MeanEstimate::of(&phis(
        &sample_ensemble(&l, &window, 2000, Backend::diffusion(), 9).unwrap(),
    ));
    // Diffusion: occupation of [c − 1, c] under density ∝ e^(ηx).
    let exact = (1.0 - (-0.05f64).exp()) / (1.0 - (-50f64).exp());
    assert!(
        (diff.mean - exact).abs() < 3.0 * diff.stderr + 2e-4,
        "{diff:?} vs {exact}"
    );
    assert!((diff.mean / 0.05 - 1.0).abs() < 0.03);
}

#[test]
fn diffusion_stays_in_buffer_and_is_stationary() {
    let l = link(0.0, 20.0);
    let mut rng = StreamKey::new(3).stream(0);
    let hist = diffusion_occupancy(&l, 2e6, 0.05, 20, &mut rng).unwrap();
    for (i, h) in hist.iter().enumerate() {
        assert!((h - 0.05).abs() < 0.005, "bin {i}: {h}");
    }
    let l = link(0.5, 20.0);
    let hist = diffusion_occupancy(&l, 2e5, 0.02, 20, &mut rng).unwrap();
    let top = hist[19];
    let exact = (1.0 - (-0.5f64).exp()) / (1.0 - (-10f64).exp());
    assert!((top - exact).abs() < 0.02, "{top} vs {exact}");
}

#[test]
fn ensembles_are_reproducible() {
    let l = link(1e-3, 1000.0);
    let window = WindowSpec::new(1e4, 1.0).unwrap();
    for backend in [Backend::diffusion(), Backend::Event, Backend::LocalTime] {
        let a = sample_ensemble(&l, &window, 200, backend, 42).unwrap();
        let b = sample_ensemble(&l, &window, 200, backend, 42).unwrap();
        assert_eq!(a, b);
        let one = sample_ensemble(&l, &window, 1, backend, 42).unwrap();
        let direct = backend.run(&l, &window, &mut StreamKey::new(42).stream(0)).unwrap();
        assert_eq!(one, vec![direct]);
    }
}

#[test]
fn local_time_backend_matches_analytic_law() {
    let window = WindowSpec::new(1e4, 1.0).unwrap();
    for &eta in &[-1e-3, 0.0, 1e-3] {
        let l = link(eta, 1000.0);
        let samples = sample_ensemble(&l, &window, 100_000, Backend::LocalTime, 17).unwrap();
        let lambdas: Vec<f64> = samples.iter().map(|s| s.lambda).collect();
        let d = ks_statistic(&lambdas, |x| loss_cdf(x, 1e4, &l).unwrap());
        assert!(d < 0.01, "eta={eta}: KS {d}");
        let a = no_loss_weight(1e4, &l).unwrap();
        let empirical = samples.iter().filter(|s| s.lossless).count() as f64 / samples.len() as f64;
        assert!((a - empirical).abs() < 0.01, "eta={eta}: A {a} vs {empirical}");
    }
}

#[test]
fn diffusion_and_event_backends_agree() {
    let window = WindowSpec::new(1e3, 1.0).unwrap();
    let lam = |v: &[LossSample]| v.iter().map(|s| s.lambda).collect::<Vec<_>>();
    for (k, &eta) in [0.0, 1e-2, -1e-2].iter().enumerate() {
        let l = link(eta, 100.0);
        let d = sample_ensemble(&l, &window, 100_000, Backend::diffusion(), 30 + k as u64).unwrap();
        let e = sample_ensemble(&l, &window, 100_000, Backend::Event, 40 + k as u64).unwrap();
        let ks = ks_two_sample(&lam(&d), &lam(&e));
        println!("eta={eta}: KS {ks:.4}");
        assert!(ks <= 0.02, "eta={eta}: KS {ks}");
    }
}

#[test]
fn local_time_backend_agrees_with_diffusion() {
    let l = link(0.0, 200.0);
    let window = WindowSpec::new(1e3, 1.0).unwrap();
    let d = sample_ensemble(&l, &window, 20_000, Backend::diffusion(), 21).unwrap();
    let lt = sample_ensemble(&l, &window, 20_000, Backend::LocalTime, 23).unwrap();
    let lam = |v: &[LossSample]| v.iter().map(|s| s.lambda).collect::<Vec<_>>();
    assert!(ks_two_sample(&lam(&d), &lam(&lt)) < 0.03);
    let mut rng = StreamKey::new(1).stream(0);
    let s = run_local_time_window(&l, &window, &mut rng).unwrap();
    assert!(s.phi >= 0.0 && s.phi <= 1.0);
}
