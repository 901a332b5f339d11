//! One-dimensional quadrature used by the correlation functionals and the
//! exact semigroup checks.

/// Result of a quadrature: value and an estimate of the absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive Simpson with a Richardson error estimate `|S₂ − S₁| / 15` per
/// panel, started from at least `min_panels` equal panels. Each panel is
/// refined until its estimate is below its share `tol · width / (b − a)`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    min_panels: usize,
    max_depth: u32,
) -> Quadrature {
    if b <= a {
        return Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        };
    }
    let n = min_panels.max(1);
    let h = (b - a) / n as f64;
    let mut evals = 0usize;
    let mut eval = |x: f64, evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut nodes = Vec::with_capacity(2 * n + 1);
    for i in 0..=2 * n {
        nodes.push(eval(a + 0.5 * h * i as f64, &mut evals));
    }
    let mut value = 0.0;
    let mut error = 0.0;
    let panel_tol = tol / n as f64;
    for i in 0..n {
        let (x0, x1) = (a + h * i as f64, a + h * (i + 1) as f64);
        let (f0, fm, f1) = (nodes[2 * i], nodes[2 * i + 1], nodes[2 * i + 2]);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        let (v, e) = refine(
            &mut |x| eval(x, &mut evals),
            x0,
            x1,
            f0,
            fm,
            f1,
            whole,
            panel_tol,
            max_depth,
        );
        value += v;
        error += e;
    }
    Quadrature {
        value,
        error,
        evaluations: evals,
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    let est = diff.abs() / 15.0;
    if est <= tol || depth == 0 {
        return (left + right + diff / 15.0, est);
    }
    let (lv, le) = refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
    let (rv, re) = refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    (lv + rv, le + re)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // P_n(z) = p1, P_{n-1}(z) = p0
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre for vector-valued integrands. The error estimate
/// is the max-norm difference between `panels` and `2·panels`.
pub fn composite_gl_vec<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
) -> (Vec<f64>, f64) {
    let (x, w) = gauss_legendre(order);
    let mut run = |np: usize| -> Vec<f64> {
        let h = (b - a) / np as f64;
        let mut acc: Option<Vec<f64>> = None;
        for p in 0..np {
            let c = a + h * (p as f64 + 0.5);
            for (xi, wi) in x.iter().zip(&w) {
                let v = f(c + 0.5 * h * xi);
                let scale = 0.5 * h * wi;
                match acc.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&v).for_each(|(s, vi)| *s += scale * vi),
                    None => acc = Some(v.iter().map(|vi| scale * vi).collect()),
                }
            }
        }
        acc.unwrap_or_default()
    };
    if b <= a {
        let v = f(a);
        return (vec![0.0; v.len()], 0.0);
    }
    let coarse = run(panels);
    let fine = run(2 * panels);
    let err = coarse.iter().zip(&fine).map(|(c, f)| (c - f).abs()).fold(0.0, f64::max);
    (fine, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_exact() {
        let q = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12, 4, 20);
        assert!((q.value - 0.0).abs() < 1e-13);
    }

    #[test]
    fn simpson_peaked() {
        let q = adaptive_simpson(|x| (-(x * 200.0)).exp(), 0.0, 1.0, 1e-12, 64, 40);
        assert!((q.value - (1.0 - (-200.0f64).exp()) / 200.0).abs() < 1e-11);
        assert!(q.error < 1e-11);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        for n in [1, 2, 5, 12, 20] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 2;
            let exact = 2.0 / (deg + 1) as f64;
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((got - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn composite_vec() {
        let (v, e) = composite_gl_vec(|s| vec![s.sin(), s.exp()], 0.0, 3.0, 4, 12);
        assert!((v[0] - (1.0 - 3f64.cos())).abs() < 1e-14);
        assert!((v[1] - (3f64.exp() - 1.0)).abs() < 1e-12);
        assert!(e < 1e-12);
    }
}
