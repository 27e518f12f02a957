//! Special functions and one-dimensional quadrature.

use std::f64::consts::PI;

use crate::error::{Error, Result};

// Chebyshev expansions of exp(-x) I0(x) on [0, 8] and of
// exp(-x) sqrt(x) I0(x) on (8, inf), in the Cephes convention.
const I0_A: [f64; 30] = [
    -4.415_341_646_479_339_5E-18,
    3.330_794_518_822_238_4E-17,
    -2.431_279_846_547_955E-16,
    1.715_391_285_555_133E-15,
    -1.168_533_287_799_345_1E-14,
    7.676_185_498_604_936E-14,
    -4.856_446_783_111_929E-13,
    2.955_052_663_129_64E-12,
    -1.726_826_291_441_556E-11,
    9.675_809_035_373_237E-11,
    -5.189_795_601_635_263E-10,
    2.659_823_724_682_386_6E-9,
    -1.300_025_009_986_248E-8,
    6.046_995_022_541_919E-8,
    -2.670_793_853_940_612E-7,
    1.117_387_539_120_103_7E-6,
    -4.416_738_358_458_750_5E-6,
    1.644_844_807_072_889_6E-5,
    -5.754_195_010_082_104E-5,
    1.885_028_850_958_416_5E-4,
    -5.763_755_745_385_824E-4,
    1.639_475_616_941_335_7E-3,
    -4.324_309_995_050_576E-3,
    1.054_646_039_459_499_8E-2,
    -2.373_741_480_589_947E-2,
    4.930_528_423_967_071E-2,
    -9.490_109_704_804_764E-2,
    1.716_209_015_222_087_7E-1,
    -3.046_826_723_431_984E-1,
    6.767_952_744_094_761E-1,
];

const I0_B: [f64; 25] = [
    -7.233_180_487_874_754E-18,
    -4.830_504_485_944_182E-18,
    4.465_621_420_296_76E-17,
    3.461_222_867_697_461E-17,
    -2.827_623_980_516_583_6E-16,
    -3.425_485_619_677_219E-16,
    1.772_560_133_056_526_3E-15,
    3.811_680_669_352_622_4E-15,
    -9.554_846_698_828_307E-15,
    -4.150_569_347_287_222E-14,
    1.540_086_217_521_41E-14,
    3.852_778_382_742_142_6E-13,
    7.180_124_451_383_666E-13,
    -1.794_178_531_506_806_2E-12,
    -1.321_581_184_044_771_3E-11,
    -3.149_916_527_963_241_6E-11,
    1.188_914_710_784_643_9E-11,
    4.940_602_388_224_97E-10,
    3.396_232_025_708_386_5E-9,
    2.266_668_990_498_178E-8,
    2.048_918_589_469_063_8E-7,
    2.891_370_520_834_756_7E-6,
    6.889_758_346_916_825E-5,
    3.369_116_478_255_694_3E-3,
    8.044_904_110_141_088E-1,
];

fn chbevl(x: f64, coeffs: &[f64]) -> f64 {
    let mut b0 = coeffs[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for c in &coeffs[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x.mul_add(b1, *c) - b2;
    }
    0.5 * (b0 - b2)
}

/// Exponentially scaled modified Bessel function `exp(-|x|) I0(x)`.
pub fn i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 8.0 {
        chbevl(ax.mul_add(0.5, -2.0), &I0_A)
    } else {
        chbevl(32.0 / ax - 2.0, &I0_B) / ax.sqrt()
    }
}

/// Legendre polynomial `P_ell(x)` by the three-term recurrence.
pub fn legendre_p(ell: usize, x: f64) -> f64 {
    if ell == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..ell {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Gauss-Legendre nodes and weights on [-1, 1], nodes in increasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * z * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 0 { 0.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Integral of `f` over (0, inf) by the exp-sinh rule with step halving.
///
/// `f` must decay at least like `x^(-1-d)` at infinity and be integrable at 0.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: F, rel_tol: f64) -> Result<f64> {
    const T: f64 = 5.5;
    let node = |t: f64| {
        let x = (0.5 * PI * t.sinh()).exp();
        let dx = 0.5 * PI * t.cosh() * x;
        (x, dx)
    };
    let term = |t: f64| -> f64 {
        let (x, dx) = node(t);
        if x == 0.0 || dx == 0.0 || !x.is_finite() {
            return 0.0;
        }
        let v = f(x) * dx;
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    };
    let mut h = 0.5;
    let k_max = (T / h) as i64;
    let mut sum = 0.0;
    for k in -k_max..=k_max {
        sum += term(k as f64 * h);
    }
    let mut est = h * sum;
    for _level in 0..9 {
        let mut add = 0.0;
        let n_new = (T / h) as i64;
        for k in -n_new..n_new {
            add += term((k as f64 + 0.5) * h);
        }
        sum += add;
        h *= 0.5;
        let next = h * sum;
        if !next.is_finite() {
            return Err(Error::numerical("exp_sinh", "non-finite integrand"));
        }
        let done = (next - est).abs() <= rel_tol * next.abs() && h < 0.1;
        est = next;
        if done {
            return Ok(est);
        }
    }
    Ok(est)
}

fn axis_factor(r: f64, x: f64) -> f64 {
    2.0 * PI * i0e(r * x)
}

/// `int_{T^3} dt / (gap + sum_i r_i (1 - cos t_i))` for `r_i >= 0`, `gap >= 0`.
///
/// Uses `1/a = int_0^inf exp(-a x) dx` and the Bessel integral
/// `int_{-pi}^{pi} exp(r x cos t) dt = 2 pi I0(r x)`.
pub fn cosine_green(radii: [f64; 3], gap: f64) -> Result<f64> {
    if gap < 0.0 || radii.iter().any(|&r| r < 0.0) {
        return Err(Error::invalid(format!(
            "cosine_green needs nonnegative gap and radii, got {gap}, {radii:?}"
        )));
    }
    if gap == 0.0 && radii.iter().any(|&r| r == 0.0) {
        return Err(Error::numerical(
            "cosine_green",
            format!("divergent integral at zero gap with radii {radii:?}"),
        ));
    }
    exp_sinh(
        |x| {
            (-gap * x).exp()
                * axis_factor(radii[0], x)
                * axis_factor(radii[1], x)
                * axis_factor(radii[2], x)
        },
        1e-15,
    )
}

/// `cosine_green(radii, gap1) - cosine_green(radii, gap2)` without cancellation.
pub fn cosine_green_difference(radii: [f64; 3], gap1: f64, gap2: f64) -> Result<f64> {
    if gap1 == gap2 {
        return Ok(0.0);
    }
    if gap1 > gap2 {
        return cosine_green_difference(radii, gap2, gap1).map(|d| -d);
    }
    if gap1 < 0.0 || radii.iter().any(|&r| r < 0.0) {
        return Err(Error::invalid("cosine_green_difference: negative gap or radius"));
    }
    if gap1 == 0.0 && radii.iter().any(|&r| r == 0.0) {
        return Err(Error::numerical("cosine_green", "divergent integral at zero gap"));
    }
    let dg = gap2 - gap1;
    exp_sinh(
        |x| {
            -(-gap1 * x).exp()
                * (-dg * x).exp_m1()
                * axis_factor(radii[0], x)
                * axis_factor(radii[1], x)
                * axis_factor(radii[2], x)
        },
        1e-15,
    )
}
