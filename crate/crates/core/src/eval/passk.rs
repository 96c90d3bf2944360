#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("pass@k needs 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")]
pub struct DomainError {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

/// Unbiased pass@k from `n` samples of which `c` passed:
/// `1 - C(n-c, k) / C(n, k)`, evaluated as a running product so no
/// binomial coefficient is ever formed.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, DomainError> {
    if c > n || k == 0 || k > n {
        return Err(DomainError { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let kf = k as f64;
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - kf / i as f64).product();
    Ok(1.0 - miss)
}
