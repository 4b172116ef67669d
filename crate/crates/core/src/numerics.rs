//! Small numeric kernels shared by the log-domain code paths.

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(values)))`; empty input gives `-inf`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    for v in values {
        acc.push(v);
    }
    acc.value()
}

/// Streaming log-sum-exp: running maximum plus a Neumaier-compensated sum
/// of the terms rescaled by that maximum.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    comp: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            let scale = (self.max - v).exp();
            self.sum *= scale;
            self.comp *= scale;
            self.max = v;
            self.add(1.0);
        } else {
            self.add((v - self.max).exp());
        }
    }

    #[inline]
    fn add(&mut self, t: f64) {
        let s = self.sum + t;
        if self.sum.abs() >= t.abs() {
            self.comp += (self.sum - s) + t;
        } else {
            self.comp += (t - s) + self.sum;
        }
        self.sum = s;
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.max + (self.sum + self.comp).ln()
    }
}

/// Logistic function evaluated on the side that cannot overflow.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pairwise (fixed binary tree) summation. The tree depends only on the
/// slice length, so the result is independent of how the inputs were
/// produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Binomial coefficient ratio `C(2n, n) / 4^n`, evaluated as a product.
pub fn central_binomial_over_4n(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * (2 * k - 1) as f64 / (2 * k) as f64)
}
