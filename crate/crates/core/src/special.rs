//! Special functions: scaled complementary error function, Faddeeva function and
//! the line shapes built on them.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use num_complex::Complex64;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// `exp(x^2) erfc(x)`, finite for all `x > -26`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 20.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    let inv2 = 1.0 / (x * x);
    let series = 1.0
        + inv2 * (-0.5 + inv2 * (0.75 + inv2 * (-1.875 + inv2 * (6.5625 + inv2 * -29.531_25))));
    FRAC_1_SQRT_PI / x * series
}

/// `exp(a) erfc(z)` without intermediate overflow.
pub fn exp_erfc(a: f64, z: f64) -> f64 {
    if z <= 0.0 {
        a.exp() * libm::erfc(z)
    } else {
        (a - z * z).exp() * erfcx(z)
    }
}

const WEIDEMAN_L: f64 = 4.756_828_460_010_884_3;
const WEIDEMAN_A: [f64; 32] = [
    2.572_253_408_124_569_3,
    2.263_537_299_900_267_8,
    1.825_669_629_632_481_3,
    1.345_544_169_234_545_1,
    0.901_925_489_364_8,
    0.546_013_972_063_934_2,
    0.295_444_510_715_087_3,
    0.140_607_162_268_937_85,
    0.057_304_403_529_837_19,
    0.019_006_155_784_845_476,
    0.004_519_541_105_349_286,
    3.925_913_607_007_896_5e-4,
    -2.453_298_027_001_811_9e-4,
    -1.307_544_925_460_985_4e-4,
    -2.140_961_920_181_826_3e-5,
    6.821_031_944_000_645e-6,
    4.401_531_731_530_374e-6,
    4.255_833_137_355_631_6e-7,
    -4.184_076_371_185_529e-7,
    -1.481_307_891_793_793e-7,
    2.293_043_903_089_130_6e-8,
    2.379_755_670_492_633_2e-8,
    8.124_889_174_050_19e-10,
    -3.208_015_220_602_108_9e-9,
    -5.231_022_115_795_881e-10,
    4.153_742_283_768_118e-10,
    1.165_823_850_551_327e-10,
    -5.544_247_434_751_948e-11,
    -2.154_362_353_454_026e-11,
    8.030_394_123_342_998e-12,
    3.741_034_357_970_914_7e-12,
    -1.303_348_124_509_092_5e-12,
];

/// Faddeeva function `w(z) = exp(-z^2) erfc(-iz)` for `Im z >= 0`
/// (Weideman's rational expansion with 32 terms).
pub fn faddeeva(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    let denom = Complex64::new(WEIDEMAN_L, 0.0) - i * z;
    let big_z = (Complex64::new(WEIDEMAN_L, 0.0) + i * z) / denom;
    let mut p = Complex64::new(0.0, 0.0);
    for &a in WEIDEMAN_A.iter().rev() {
        p = p * big_z + a;
    }
    p * 2.0 / (denom * denom) + FRAC_1_SQRT_PI / denom
}

/// Area-normalised Voigt profile with Gaussian std `sigma` and Lorentzian HWHM
/// `gamma`, evaluated at offset `x`, together with `d/dx` and `d/dsigma`.
pub fn voigt_with_derivatives(x: f64, sigma: f64, gamma: f64) -> (f64, f64, f64) {
    if sigma <= 0.0 {
        let d = x * x + gamma * gamma;
        let v = gamma / (PI * d);
        return (v, -2.0 * x * v / d, 0.0);
    }
    let scale = FRAC_1_SQRT_2 / sigma;
    let z = Complex64::new(x * scale, gamma * scale);
    let w = faddeeva(z);
    let dw = -z * w * 2.0 + Complex64::new(0.0, 2.0 * FRAC_1_SQRT_PI);
    let norm = 1.0 / (sigma * SQRT_2PI);
    let v = w.re * norm;
    let dv_dx = dw.re * scale * norm;
    // dz/dsigma = -z / sigma
    let dv_dsigma = (dw * (-z / sigma)).re * norm - v / sigma;
    (v, dv_dx, dv_dsigma)
}

pub fn voigt(x: f64, sigma: f64, gamma: f64) -> f64 {
    voigt_with_derivatives(x, sigma, gamma).0
}

/// Unit-area exponential decay starting at 0, convolved with a Gaussian of std `sigma`.
pub fn exp_gauss(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if t < 0.0 { 0.0 } else { (-t / tau).exp() / tau };
    }
    let a = 0.5 * (sigma / tau).powi(2) - t / tau;
    let z = (sigma / tau - t / sigma) * FRAC_1_SQRT_2;
    0.5 / tau * exp_erfc(a, z)
}

/// Unit-area two-sided exponential `exp(-|t|/tau) / (2 tau)` convolved with a
/// Gaussian of std `sigma`.
pub fn laplace_gauss(t: f64, tau: f64, sigma: f64) -> f64 {
    0.5 * (exp_gauss(t, tau, sigma) + exp_gauss(-t, tau, sigma))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}
