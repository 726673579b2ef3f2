//! Small shared numerics: log-factorials, Poisson tails, root bracketing.

/// Table of ln(n!) for n = 0..=n_max, built by direct summation.
pub fn ln_factorial_table(n_max: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0_f64;
    table.push(0.0);
    for n in 1..=n_max {
        acc += (n as f64).ln();
        table.push(acc);
    }
    table
}

/// Upper tail of a Poisson distribution, `sum_{n > cutoff} e^{-lambda} lambda^n / n!`.
///
/// Summed term by term in log space so tails far below f64 epsilon are still
/// resolved (a cumulative-sum complement would round to zero).
pub fn poisson_tail(lambda: f64, cutoff: usize) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut ln_term = -lambda + (cutoff as f64 + 1.0) * lambda.ln() - ln_factorial(cutoff + 1);
    let mut term = ln_term.exp();
    let mut sum = 0.0;
    let mut n = cutoff + 1;
    while term > sum * 1e-18 + 1e-300 && n < cutoff + 10_000 {
        sum += term;
        n += 1;
        ln_term += lambda.ln() - (n as f64).ln();
        term = ln_term.exp();
    }
    sum
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Bisection for a root of `f` on `[lo, hi]`; requires a sign change.
///
/// Runs until the bracket width falls below `tol`. Panics if the bracket is
/// invalid, which would be a programming error at the call sites here.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    let fhi = f(hi);
    assert!(
        flo.signum() != fhi.signum(),
        "bisect: no sign change on [{lo}, {hi}]"
    );
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_against_direct_products() {
        let table = ln_factorial_table(20);
        assert_eq!(table[0], 0.0);
        assert_eq!(table[1], 0.0);
        let fact10: f64 = 3628800.0;
        assert!((table[10] - fact10.ln()).abs() < 1e-12);
    }

    #[test]
    fn poisson_tail_matches_complement_for_fat_tails() {
        // For a modest cutoff the tail is large enough to check against the
        // naive 1 - CDF computation.
        let lambda = 4.0;
        let cutoff = 6;
        let mut cdf = 0.0;
        let mut term = f64::exp(-lambda);
        for n in 0..=cutoff {
            if n > 0 {
                term *= lambda / n as f64;
            }
            cdf += term;
        }
        let tail = poisson_tail(lambda, cutoff);
        assert!((tail - (1.0 - cdf)).abs() < 1e-12);
    }

    #[test]
    fn poisson_tail_resolves_tiny_tails() {
        // lambda = 9, cutoff = 60: tail is ~1e-27, far below 1 - CDF resolution.
        let tail = poisson_tail(9.0, 60);
        assert!(tail > 0.0 && tail < 1e-20);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((root - 2.0_f64.sqrt()).abs() < 1e-12);
    }
}
