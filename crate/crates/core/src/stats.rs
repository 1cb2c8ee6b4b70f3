//! Sample statistics used by the verification routines.
//!
//! Sums go through [`pairwise_sum`] so that results merged from independent
//! workers do not depend on the order in which chunks arrive, only on the
//! sample order.

/// Pairwise (cascade) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let mu = mean(v);
    let d: Vec<f64> = v.iter().map(|x| (x - mu) * (x - mu)).collect();
    pairwise_sum(&d) / (v.len() as f64 - 1.0)
}

pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&d) / (a.len() as f64 - 1.0)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    covariance(a, b) / (variance(a) * variance(b)).sqrt()
}

/// Large-sample standard error of a Pearson correlation estimate.
pub fn correlation_se(r: f64, n: usize) -> f64 {
    (1.0 - r * r) / (n as f64).sqrt()
}

/// Partial correlation of `a` and `b` given `c`.
pub fn partial_correlation(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let rab = correlation(a, b);
    let rac = correlation(a, c);
    let rbc = correlation(b, c);
    (rab - rac * rbc) / ((1.0 - rac * rac) * (1.0 - rbc * rbc)).sqrt()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One-sample Kolmogorov-Smirnov distance against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d.max((f - lo).abs()).max((hi - f).abs())
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Lattice size used by [`ks_two_sample_2d`].
pub const KS2D_LATTICE: usize = 256;

/// Two-sample two-dimensional KS statistic
/// `sup_{s,t} |F_a(s,t) - F_b(s,t)|`, with the supremum taken over a lattice of
/// thresholds at the pooled marginal quantiles (`lattice` per axis). This
/// is a lower bound for the full statistic that converges to it as the
/// lattice is refined.
pub fn ks_two_sample_2d(a: &[(f64, f64)], b: &[(f64, f64)], lattice: usize) -> f64 {
    let quantiles = |coord: fn(&(f64, f64)) -> f64| {
        let mut pooled: Vec<f64> = a.iter().chain(b).map(coord).collect();
        pooled.sort_by(f64::total_cmp);
        let n = pooled.len();
        let mut t: Vec<f64> = (1..=lattice)
            .map(|k| pooled[((k * n) / (lattice + 1)).min(n - 1)])
            .collect();
        t.dedup();
        t
    };
    let tx = quantiles(|p| p.0);
    let ty = quantiles(|p| p.1);
    let cum = |pts: &[(f64, f64)]| {
        let (kx, ky) = (tx.len() + 1, ty.len() + 1);
        let mut h = vec![0.0_f64; kx * ky];
        for p in pts {
            let ix = tx.partition_point(|&t| t < p.0);
            let iy = ty.partition_point(|&t| t < p.1);
            h[ix * ky + iy] += 1.0;
        }
        // prefix sums: c[ix][iy] = #{x <= tx[ix], y <= ty[iy]}
        for ix in 0..kx {
            for iy in 1..ky {
                h[ix * ky + iy] += h[ix * ky + iy - 1];
            }
        }
        for ix in 1..kx {
            for iy in 0..ky {
                h[ix * ky + iy] += h[(ix - 1) * ky + iy];
            }
        }
        let n = pts.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    };
    let (ca, cb) = (cum(a), cum(b));
    let ky = ty.len() + 1;
    let mut d = 0.0_f64;
    for ix in 0..tx.len() {
        for iy in 0..ty.len() {
            let k = ix * ky + iy;
            d = d.max((ca[k] - cb[k]).abs());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn moments_of_fixed_data() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&v), 2.5);
        assert!((variance(&v) - 5.0 / 3.0).abs() < 1e-15);
        let w = [2.0, 4.0, 6.0, 8.0];
        assert!((correlation(&v, &w) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ks_uniform_samples_are_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let d = ks_one_sample(&s, |x| x.clamp(0.0, 1.0));
        assert!(d < 0.015, "{d}");
        let shifted: Vec<f64> = s.iter().map(|x| x + 0.1).collect();
        assert!((ks_two_sample(&s, &shifted) - 0.1).abs() < 0.02);
        assert_eq!(ks_two_sample(&s, &s), 0.0);
    }

    #[test]
    fn ks2d_detects_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20000;
        let indep: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let indep2: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let dep: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                (u, u)
            })
            .collect();
        assert!(ks_two_sample_2d(&indep, &indep2, 64) < 0.03);
        assert!(ks_two_sample_2d(&indep, &dep, 64) > 0.2);
    }

    #[test]
    fn partial_correlation_of_chain_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let (mut a, mut b, mut c) = (vec![], vec![], vec![]);
        for _ in 0..n {
            let x: f64 = rng.random::<f64>() - 0.5;
            let y = 0.5 * x + rng.random::<f64>() - 0.5;
            let z = 0.5 * y + rng.random::<f64>() - 0.5;
            a.push(x);
            c.push(y);
            b.push(z);
        }
        assert!(correlation(&a, &b) > 0.05);
        assert!(partial_correlation(&a, &b, &c).abs() < 0.01);
    }
}
