//! Shared numerical utilities: error function, Gaussian tails, adaptive
//! quadrature, weighted least squares, and the Kolmogorov distribution.

/// Complementary error function, double precision.
///
/// Series expansion below |x| = 3, Lentz continued fraction above; relative
/// accuracy ~1e-13 on both branches.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        // erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0usize;
        loop {
            n += 1;
            term *= -x2 / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) || n > 200 {
                break;
            }
        }
        1.0 - sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        // erfc(x) = e^{-x^2}/(x sqrt(pi)) * 1/(1 + 1/(2x^2)/(1 + 2/(2x^2)/(1 + ...)))
        let mut f = 1.0;
        for k in (1..=60).rev() {
            f = 1.0 + (k as f64 / (2.0 * x * x)) / f;
        }
        (-x * x).exp() / (x * std::f64::consts::PI.sqrt() * f)
    }
}

/// Standard normal upper tail `P(Z >= x)`.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    rec(f, a, fa, b, fb, fm, whole, tol, 40)
}

/// Weighted least-squares line fit `y ~ a + b x`; returns `(a, b, se_b)`.
///
/// `se_b` assumes the supplied weights are inverse variances.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), w.len());
    let sw: f64 = w.iter().sum();
    let mx: f64 = x.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() / sw;
    let my: f64 = y.iter().zip(w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    (a, b, (1.0 / sxx).sqrt())
}

/// Kolmogorov distribution tail `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 lambda^2}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut q = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        q += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * q).clamp(0.0, 1.0)
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value for statistic `d` on
/// sample sizes `n` and `m`.
pub fn ks_two_sample_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    kolmogorov_q(ne.sqrt() * d)
}

/// Median of an unsorted slice (averaged middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
