use ktcslds::transforms::{cdot, FourierOp, MaskedFourierOp, WaveletFamily, WaveletOp};
use ktcslds::{mat_frame, vec_frame, FrameGeometry};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const DRAWS: usize = 100;
const TOL: f64 = 1e-10;

fn real_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn complex_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

fn rel_gap(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

fn geometries() -> Vec<FrameGeometry> {
    [(8, 8), (16, 8), (4, 32), (32, 32)]
        .iter()
        .map(|&(a, b)| FrameGeometry::new(a, b).unwrap())
        .collect()
}

#[test]
fn dft_adjoint_dot_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for g in geometries() {
        let f = FourierOp::<f64>::new(g);
        for _ in 0..DRAWS {
            let x = complex_vec(&mut rng, g.n());
            let y = complex_vec(&mut rng, g.n());
            let lhs = cdot(&f.dft2_complex(&x).unwrap(), &y);
            let rhs = cdot(&x, &f.idft2(&y).unwrap());
            assert!(rel_gap(lhs, rhs) < TOL, "{g}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn dft_is_unitary_and_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = FrameGeometry::new(16, 32).unwrap();
    let f = FourierOp::<f64>::new(g);
    for _ in 0..DRAWS {
        let x = complex_vec(&mut rng, g.n());
        let fx = f.dft2_complex(&x).unwrap();
        let nx: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        let nf: f64 = fx.iter().map(|c| c.norm_sqr()).sum();
        assert!((nx - nf).abs() < TOL * nx);
        let back = f.idft2(&fx).unwrap();
        let err: f64 = back.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(err.sqrt() < TOL * nx.sqrt());
    }
}

#[test]
fn dft_matches_direct_sum() {
    // column-major pixel (i, j) -> i + nx j, bin (k1, k2) likewise
    let g = FrameGeometry::new(4, 8).unwrap();
    let f = FourierOp::<f64>::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = complex_vec(&mut rng, g.n());
    let fx = f.dft2_complex(&x).unwrap();
    let (nx, ny) = (4usize, 8usize);
    let scale = 1.0 / ((nx * ny) as f64).sqrt();
    for k2 in 0..ny {
        for k1 in 0..nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..ny {
                for i in 0..nx {
                    let phase = -2.0 * std::f64::consts::PI
                        * ((k1 * i) as f64 / nx as f64 + (k2 * j) as f64 / ny as f64);
                    acc += x[i + nx * j] * Complex64::from_polar(1.0, phase);
                }
            }
            assert!((acc * scale - fx[k1 + nx * k2]).norm() < 1e-12);
        }
    }
}

#[test]
fn masked_fourier_adjoint_dot_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for g in geometries() {
        for _ in 0..DRAWS {
            let m = rng.random_range(1..=g.n());
            let mut mask = sample(&mut rng, g.n(), m).into_vec();
            mask.sort_unstable();
            let op = MaskedFourierOp::new(FourierOp::<f64>::new(g), mask).unwrap();
            let x = complex_vec(&mut rng, g.n());
            let y = complex_vec(&mut rng, m);
            let lhs = cdot(&op.measure_complex(&x).unwrap(), &y);
            let rhs = cdot(&x, &op.measure_adjoint(&y).unwrap());
            assert!(rel_gap(lhs, rhs) < TOL, "{g}, m = {m}");
        }
    }
}

#[test]
fn masked_normal_operator_is_contractive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = FrameGeometry::square(16).unwrap();
    for _ in 0..20 {
        let mask = sample(&mut rng, g.n(), 40).into_vec();
        let op = MaskedFourierOp::new(FourierOp::<f64>::new(g), mask).unwrap();
        let x = complex_vec(&mut rng, g.n());
        let ax = op.measure_adjoint(&op.measure_complex(&x).unwrap()).unwrap();
        let nx: f64 = x.iter().map(|c| c.norm_sqr()).sum();
        let na: f64 = ax.iter().map(|c| c.norm_sqr()).sum();
        assert!(na <= nx * (1.0 + 1e-12));
    }
}

#[test]
fn wavelet_adjoint_dot_round_trip_and_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for g in geometries() {
        for family in [WaveletFamily::Haar, WaveletFamily::Daubechies4] {
            let op = WaveletOp::<f64>::full_depth(g, family);
            for _ in 0..DRAWS {
                let x = real_vec(&mut rng, g.n());
                let y = real_vec(&mut rng, g.n());
                let wx = op.forward(&x).unwrap();
                let lhs: f64 = wx.iter().zip(&y).map(|(a, b)| a * b).sum();
                let rhs: f64 = x.iter().zip(op.adjoint(&y).unwrap()).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < TOL * lhs.abs().max(1.0), "{g} {family:?}");

                let back = op.adjoint(&wx).unwrap();
                let err = back.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(err < TOL * nx);
                let nw = wx.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!((nw - nx).abs() < TOL * nx);
            }
        }
    }
}

#[test]
fn partial_depth_wavelets_are_orthonormal() {
    let g = FrameGeometry::square(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for levels in 1..=4 {
        let op = WaveletOp::<f64>::new(g, WaveletFamily::Daubechies4, levels).unwrap();
        let x = real_vec(&mut rng, g.n());
        let back = op.adjoint(&op.forward(&x).unwrap()).unwrap();
        let err: f64 = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "levels {levels}");
    }
}

#[test]
fn haar_constant_image_concentrates_in_one_coefficient() {
    let g = FrameGeometry::square(8).unwrap();
    let op = WaveletOp::<f64>::full_depth(g, WaveletFamily::Haar);
    let w = op.forward(&vec![1.0; g.n()]).unwrap();
    let nonzero = w.iter().filter(|v| v.abs() > 1e-12).count();
    assert_eq!(nonzero, 1);
    assert!((w.iter().map(|v| v.abs()).fold(0.0, f64::max) - 8.0).abs() < 1e-12);
}

#[test]
fn f32_operators_agree_with_f64() {
    let g = FrameGeometry::square(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = real_vec(&mut rng, g.n());
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let a = FourierOp::<f64>::new(g).dft2(&x).unwrap();
    let b = FourierOp::<f32>::new(g).dft2(&x32).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p.re - q.re as f64).abs() < 1e-5 && (p.im - q.im as f64).abs() < 1e-5);
    }
    let wa = WaveletOp::<f64>::full_depth(g, WaveletFamily::Daubechies4).forward(&x).unwrap();
    let wb = WaveletOp::<f32>::full_depth(g, WaveletFamily::Daubechies4).forward(&x32).unwrap();
    for (p, q) in wa.iter().zip(&wb) {
        assert!((p - *q as f64).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vec_mat_are_inverse(nx_pow in 1u32..6, ny_pow in 1u32..6, seed in any::<u64>()) {
        let g = FrameGeometry::new(1 << nx_pow, 1 << ny_pow).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = real_vec(&mut rng, g.n());
        let m = mat_frame(&g, &v).unwrap();
        prop_assert_eq!(m.shape(), (g.nx(), g.ny()));
        for k in 0..g.n() {
            let (i, j) = g.coords(k);
            prop_assert_eq!(m[(i, j)], v[k]);
            prop_assert_eq!(g.index(i, j), k);
        }
        let back = vec_frame(&g, &m).unwrap();
        prop_assert_eq!(back.as_slice(), &v[..]);
    }

    #[test]
    fn wavelet_matrix_form_is_columnwise(seed in any::<u64>(), d in 1usize..4) {
        let g = FrameGeometry::square(8).unwrap();
        let op = WaveletOp::<f64>::full_depth(g, WaveletFamily::Haar);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = DMatrix::from_fn(g.n(), d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = op.forward_matrix(&c).unwrap();
        for j in 0..d {
            let col = op.forward(c.column(j).as_slice()).unwrap();
            let got: Vec<f64> = w.column(j).iter().copied().collect();
            prop_assert_eq!(got, col);
        }
    }
}

#[test]
fn bad_geometries_are_rejected() {
    assert!(FrameGeometry::new(3, 4).is_err());
    assert!(FrameGeometry::new(0, 4).is_err());
    let g = FrameGeometry::square(4).unwrap();
    assert!(FourierOp::<f64>::new(g).dft2(&[0.0; 5]).is_err());
    assert!(MaskedFourierOp::new(FourierOp::<f64>::new(g), vec![16]).is_err());
}
