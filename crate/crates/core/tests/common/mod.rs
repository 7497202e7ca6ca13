//! Shared oracles for the integration tests: KS tests, quadrature and
//! Monte-Carlo z-scores.
#![allow(dead_code)]

pub mod toys;

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        total += if (k as i64) % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// One-sample KS statistic against a CDF and its asymptotic p-value.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    (d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sqrt_n = ne.sqrt();
    (d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Tabulated CDF of an unnormalised log density on `[lo, hi]`, built with
/// the trapezoid rule on `n` intervals.
pub struct GridCdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
    pub ln_norm: f64,
}

impl GridCdf {
    pub fn new(ln_density: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Self {
        let h = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
        let lv: Vec<f64> = xs.iter().map(|x| ln_density(*x)).collect();
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v: Vec<f64> = lv.iter().map(|l| (l - max).exp()).collect();
        let mut cum = vec![0.0; n + 1];
        for i in 1..=n {
            cum[i] = cum[i - 1] + 0.5 * h * (v[i - 1] + v[i]);
        }
        let total = cum[n];
        cum.iter_mut().for_each(|c| *c /= total);
        Self {
            xs,
            cum,
            ln_norm: total.ln() + max,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return 0.0;
        }
        let n = self.xs.len() - 1;
        if x >= self.xs[n] {
            return 1.0;
        }
        let h = self.xs[1] - self.xs[0];
        let i = (((x - self.xs[0]) / h) as usize).min(n - 1);
        let w = (x - self.xs[i]) / h;
        self.cum[i] + w * (self.cum[i + 1] - self.cum[i])
    }

    /// Mean under the tabulated density.
    pub fn mean(&self) -> f64 {
        let mut m = 0.0;
        for i in 1..self.xs.len() {
            m += 0.5 * (self.xs[i - 1] + self.xs[i]) * (self.cum[i] - self.cum[i - 1]);
        }
        m
    }
}

/// `ln ∫ exp(f)` over `[lo, hi]` by the composite Simpson rule.
pub fn ln_integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(lo + i as f64 * h)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * (v - max).exp();
    }
    (s * h / 3.0).ln() + max
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Variance of the sample mean of a correlated series by batch means.
pub fn batch_mean_variance(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * size..(b + 1) * size]))
        .collect();
    variance(&means) / batches as f64
}

/// z-score of the difference of means between an autocorrelated chain and
/// an independent sample.
pub fn z_score(chain: &[f64], iid: &[f64]) -> f64 {
    let v = batch_mean_variance(chain, 100) + variance(iid) / iid.len() as f64;
    (mean(chain) - mean(iid)) / v.sqrt()
}

/// Keep every `k`-th element.
pub fn thin(xs: &[f64], k: usize) -> Vec<f64> {
    xs.iter().step_by(k).copied().collect()
}

/// Prints the single line the acceptance harness greps for.
pub fn verdict(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {criterion}: {detail}");
}

/// Dense row-major square matrix product.
fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `Σ π_k A_k ⊗ A_k` assembled by hand, companions padded to the largest
/// order.
pub fn kron_stability_matrix(weights: &[f64], ar: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = ar.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let n = p * p;
    let mut out = vec![vec![0.0; n]; n];
    for (w, coeffs) in weights.iter().zip(ar) {
        let mut a = vec![vec![0.0; p]; p];
        for (j, c) in coeffs.iter().enumerate() {
            a[0][j] = *c;
        }
        for i in 1..p {
            a[i][i - 1] = 1.0;
        }
        for i1 in 0..p {
            for j1 in 0..p {
                for i2 in 0..p {
                    for j2 in 0..p {
                        out[i1 * p + i2][j1 * p + j2] += w * a[i1][j1] * a[i2][j2];
                    }
                }
            }
        }
    }
    out
}

/// Spectral radius by Gelfand's formula `lim ‖M^m‖^{1/m}`, using `2^40`
/// through repeated squaring with rescaling.
pub fn gelfand_radius(m: &[Vec<f64>]) -> f64 {
    let norm = |x: &[Vec<f64>]| x.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = m.to_vec();
    let mut log_scale = 0.0; // log of the factor divided out so far, per power
    let mut power = 1.0f64;
    for _ in 0..40 {
        let s = norm(&x);
        if s == 0.0 {
            return 0.0;
        }
        x.iter_mut().flatten().for_each(|v| *v /= s);
        log_scale += s.ln() / power;
        x = mat_mul(&x, &x);
        power *= 2.0;
    }
    let s = norm(&x);
    if s == 0.0 {
        return 0.0;
    }
    (log_scale + s.ln() / power).exp()
}
