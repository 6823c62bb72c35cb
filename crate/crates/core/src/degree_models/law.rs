//! Inverse-CDF sampling of integer laws: an exact table for the bulk and an
//! analytic power-law continuation for unbounded heavy tails.

use rand::Rng;

/// Largest value a tail draw may return.
pub const MAX_VALUE: u64 = 1 << 40;

/// Continuous continuation of a discrete power-law tail.
///
/// The variable `j = k + shift` is drawn from the density
/// `x^{-exponent} (1 - correction / x)` on `[lower, ∞)` and rounded to the
/// nearest integer.
#[derive(Debug, Clone)]
pub(crate) struct PowerTail {
    pub lower: f64,
    pub exponent: f64,
    pub correction: f64,
    pub shift: u64,
    pub mass: f64,
}

impl PowerTail {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let inv = -1.0 / (self.exponent - 1.0);
        loop {
            // 1 - gen() lies in (0, 1]
            let v: f64 = 1.0 - rng.gen::<f64>();
            let x = self.lower * v.powf(inv);
            if self.correction > 0.0 && rng.gen::<f64>() >= 1.0 - self.correction / x {
                continue;
            }
            let j = if x >= MAX_VALUE as f64 {
                MAX_VALUE
            } else {
                x.round() as u64
            };
            return j.saturating_sub(self.shift);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DiscreteLaw {
    first: u64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    guide: Vec<u32>,
    tail: Option<PowerTail>,
}

impl DiscreteLaw {
    /// `pmf[i]` is the probability of `first + i`. The table mass plus the
    /// tail mass is expected to be one.
    pub fn new(first: u64, pmf: Vec<f64>, tail: Option<PowerTail>) -> Self {
        assert!(!pmf.is_empty());
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        let n = pmf.len();
        let mut guide = Vec::with_capacity(n);
        let mut i = 0usize;
        for g in 0..n {
            let level = g as f64 / n as f64;
            while i + 1 < n && cdf[i] <= level {
                i += 1;
            }
            guide.push(i as u32);
        }
        DiscreteLaw {
            first,
            pmf,
            cdf,
            guide,
            tail,
        }
    }

    pub fn degenerate(value: u64) -> Self {
        DiscreteLaw::new(value, vec![1.0], None)
    }

    pub fn first(&self) -> u64 {
        self.first
    }

    pub fn table(&self) -> &[f64] {
        &self.pmf
    }

    #[allow(dead_code)]
    pub fn tail_mass(&self) -> f64 {
        self.tail.as_ref().map_or(0.0, |t| t.mass)
    }

    /// Value at quantile `u ∈ [0, 1)`. Uniforms past the table mass fall
    /// into the analytic tail, which consumes further draws from `rng`.
    #[inline]
    pub fn quantile<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> u64 {
        let n = self.pmf.len();
        if u >= self.cdf[n - 1] {
            return match &self.tail {
                Some(t) => t.sample(rng),
                None => self.first + (n as u64 - 1),
            };
        }
        let g = ((u * n as f64) as usize).min(n - 1);
        let mut i = self.guide[g] as usize;
        while self.cdf[i] <= u {
            i += 1;
        }
        self.first + i as u64
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.pmf.len() == 1 && self.tail.is_none() {
            return self.first;
        }
        let u: f64 = rng.gen();
        self.quantile(u, rng)
    }
}
