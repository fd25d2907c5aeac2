use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomid_core::benchmark::fit_co2;
use roomid_core::blind::{
    baseline_identify, build_regressor, kernel_identify, lift, predict_output,
};
use roomid_core::{BlindIdProblem, KernelOptions};

fn rel_frob(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = b.iter().map(|y| y * y).sum();
    (d / n).sqrt()
}

#[test]
fn baseline_recovers_noiseless_rank_one_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let q: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..4.0)).collect();
        let a = rng.random_range(20..40);
        let b = rng.random_range(a + 20..80);
        let events = vec![a, b, 100];
        let p = BlindIdProblem::new(vec![0.0; 100], events.clone(), 5).unwrap();
        let y = predict_output(&q, &x, &p.event_matrix());
        let p = BlindIdProblem::new(y, events, 5).unwrap();
        let r = baseline_identify(&p).unwrap();
        let err = rel_frob(&lift(&r.q, &r.x), &lift(&q, &x));
        assert!(err <= 1e-8, "relative error {err}");
    }
}

#[test]
fn kernel_fits_noiseless_exponential_response() {
    let q0: Vec<f64> = (0..30).map(|k| 6.0 * 0.88f64.powi(k)).collect();
    let x0 = [0.0, 8.0, 3.0, 12.0];
    let events = vec![12, 60, 110, 181];
    let p = BlindIdProblem::new(vec![0.0; 181], events.clone(), 30).unwrap();
    let y = predict_output(&q0, &x0, &p.event_matrix());
    let p = BlindIdProblem::new(y.clone(), events, 30).unwrap();
    let r = kernel_identify(&p, &KernelOptions::default()).unwrap();
    let fit = fit_co2(&r.y_hat, &y).unwrap();
    assert!(fit >= 0.99, "fit {fit}");
    assert!(r.x.iter().all(|&v| v >= 0.0));
    let norm: f64 = r.q.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn kernel_output_is_scale_mode_invariant() {
    let q0: Vec<f64> = (0..20).map(|k| 0.9f64.powi(k)).collect();
    let x0 = [1.0, 4.0, 2.0];
    let events = vec![40, 90, 150];
    let p = BlindIdProblem::new(vec![0.0; 150], events.clone(), 20).unwrap();
    let mut y = predict_output(&q0, &x0, &p.event_matrix());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    y.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    let p = BlindIdProblem::new(y, events, 20).unwrap();
    let a = kernel_identify(&p, &KernelOptions::default()).unwrap();
    let opts = KernelOptions {
        scale_mode: roomid_core::ScaleMode::IntegerSnap,
        ..Default::default()
    };
    let b = kernel_identify(&p, &opts).unwrap();
    for (u, v) in a.y_hat.iter().zip(&b.y_hat) {
        assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
    }
    assert_eq!(a, kernel_identify(&p, &KernelOptions::default()).unwrap());
}

#[test]
fn regressor_reproduces_convolution() {
    let o = [0.0, 2.0, 2.0, 5.0, 5.0, 0.0];
    let q = [1.0, 0.5];
    let y = build_regressor(&o, 2) * nalgebra::DVector::from_column_slice(&q);
    assert_eq!(y.as_slice(), &[0.0, 0.0, 2.0, 3.0, 6.0, 7.5]);
}
