/// Both sides of `N−1 − (1−q)·Σ_{k<N} q^k (N−1−k) = (1−q^N)/(1−q) − 1`.
///
/// The left side is summed term by term; the right side uses the closed form.
/// Returns `None` unless `N ≥ 1` and `0 < q < 1`.
pub fn geometric_sum_check(n: usize, q: f64) -> Option<(f64, f64)> {
    if n == 0 || !(q > 0.0 && q < 1.0) {
        return None;
    }
    let nm1 = (n - 1) as f64;
    let mut sum = 0.0;
    let mut qk = 1.0;
    for k in 0..n {
        sum += qk * (nm1 - k as f64);
        qk *= q;
    }
    let lhs = nm1 - (1.0 - q) * sum;
    let rhs = (1.0 - q.powi(n as i32)) / (1.0 - q) - 1.0;
    Some((lhs, rhs))
}
