use num_complex::Complex;

use crate::Real;

/// Roots of c3·x³ + c2·x² + c1·x + c0, real ones Newton-polished. A vanishing
/// leading coefficient falls back to the quadratic (or linear) formula.
pub fn cubic_roots<T: Real>(coefficients: [T; 4]) -> Vec<Complex<T>> {
    let [c3, c2, c1, c0] = coefficients;
    let scale = coefficients.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    if scale == T::zero() {
        return Vec::new();
    }
    if c3.abs() <= T::of(1e-13) * scale {
        return quadratic_roots(c2, c1, c0);
    }
    let (two, three) = (T::of(2.0), T::of(3.0));
    let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
    // x = y − a/3 gives y³ + p·y + q = 0
    let shift = a / three;
    let p = b - a * a / three;
    let q = two * a * a * a / T::of(27.0) - a * b / three + c;
    let disc = (q / two) * (q / two) + (p / three) * (p / three) * (p / three);
    let mut roots = Vec::with_capacity(3);
    if disc < T::zero() {
        let m = two * (-p / three).sqrt();
        let arg = (three * q / (p * m)).max(-T::one()).min(T::one());
        let theta = arg.acos() / three;
        for k in 0..3 {
            let y = m * (theta - T::of(2.0 * std::f64::consts::PI / 3.0 * k as f64)).cos();
            roots.push(Complex::new(y - shift, T::zero()));
        }
    } else {
        let s = disc.sqrt();
        let u = (-q / two + s).cbrt();
        let v = (-q / two - s).cbrt();
        let y = u + v;
        roots.push(Complex::new(y - shift, T::zero()));
        let im = three.sqrt() / two * (u - v);
        let re = -y / two - shift;
        if im.abs() <= T::of(1e-9) * (T::one() + re.abs()) {
            roots.push(Complex::new(re, T::zero()));
            roots.push(Complex::new(re, T::zero()));
        } else {
            roots.push(Complex::new(re, im));
            roots.push(Complex::new(re, -im));
        }
    }
    for r in roots.iter_mut().filter(|r| r.im == T::zero()) {
        r.re = polish(coefficients, r.re);
    }
    roots
}

fn quadratic_roots<T: Real>(a: T, b: T, c: T) -> Vec<Complex<T>> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= T::of(1e-13) * scale {
        return if b == T::zero() {
            Vec::new()
        } else {
            vec![Complex::new(-c / b, T::zero())]
        };
    }
    let two = T::of(2.0);
    let disc = b * b - T::of(4.0) * a * c;
    if disc < T::zero() {
        let re = -b / (two * a);
        let im = (-disc).sqrt() / (two * a);
        return vec![Complex::new(re, im), Complex::new(re, -im)];
    }
    // cancellation-free form
    let q = -(b + b.signum() * disc.sqrt()) / two;
    let mut out = vec![Complex::new(q / a, T::zero())];
    out.push(Complex::new(
        if q != T::zero() { c / q } else { T::zero() },
        T::zero(),
    ));
    out
}

pub(crate) fn eval<T: Real>(coefficients: [T; 4], x: T) -> T {
    let [c3, c2, c1, c0] = coefficients;
    ((c3 * x + c2) * x + c1) * x + c0
}

fn polish<T: Real>(coefficients: [T; 4], mut x: T) -> T {
    let [c3, c2, c1, _] = coefficients;
    for _ in 0..8 {
        let f = eval(coefficients, x);
        let df = (T::of(3.0) * c3 * x + T::of(2.0) * c2) * x + c1;
        if df == T::zero() {
            break;
        }
        let next = x - f / df;
        if eval(coefficients, next).abs() >= f.abs() {
            break;
        }
        x = next;
    }
    x
}
