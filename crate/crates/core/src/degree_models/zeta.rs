//! Hurwitz zeta and related power sums used by the power-law models.

/// B_{2j} / (2j)! for j = 1..=8.
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
    1.0 / 74_724_249_600.0,
    -3617.0 / 10_670_622_842_880_000.0,
];

const DIRECT_TERMS: usize = 24;

/// ζ(s, q) = Σ_{k≥0} (q + k)^{-s} for s > 1, q > 0.
///
/// The first terms are summed directly and the remainder is closed with an
/// Euler-Maclaurin expansion.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    assert!(s > 1.0, "hurwitz_zeta needs s > 1, got {s}");
    assert!(q > 0.0, "hurwitz_zeta needs q > 0, got {q}");
    let mut direct = 0.0;
    // Sum small terms first for accuracy.
    for k in (0..DIRECT_TERMS).rev() {
        direct += (q + k as f64).powf(-s);
    }
    let x = q + DIRECT_TERMS as f64;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times x^{-s-2j+1}
    let mut rising = s;
    let mut xpow = x.powf(-s - 1.0);
    let inv_x2 = 1.0 / (x * x);
    for (j, coeff) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        if j > 0 {
            let m = (2 * j) as f64;
            rising *= (s + m - 1.0) * (s + m);
            xpow *= inv_x2;
        }
        tail += coeff * rising * xpow;
    }
    direct + tail
}

const SERIES_START: u64 = 1000;

/// Σ_{j≥start} (j-1)^a j^{-s}, requiring s - a > 1 and start ≥ 1.
///
/// Terms below `SERIES_START` are summed directly; beyond it
/// (1 - 1/j)^a is expanded binomially, turning the remainder into a short
/// combination of Hurwitz zeta values.
pub fn shifted_power_tail(a: f64, s: f64, start: u64) -> f64 {
    assert!(s - a > 1.0, "series diverges: s - a = {}", s - a);
    let start = start.max(1);
    let mut direct = 0.0;
    if start < SERIES_START {
        for j in (start..SERIES_START).rev() {
            let base = (j - 1) as f64;
            let lead = if a == 0.0 { 1.0 } else { base.powf(a) };
            direct += lead * (j as f64).powf(-s);
        }
    }
    let j0 = start.max(SERIES_START) as f64;
    let mut binom = 1.0;
    let mut series = 0.0;
    for m in 0..10 {
        if m > 0 {
            binom *= (a - (m as f64 - 1.0)) / m as f64;
            if binom == 0.0 {
                break;
            }
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        series += sign * binom * hurwitz_zeta(s - a + m as f64, j0);
    }
    direct + series
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(s: f64, q: f64, n: usize) -> f64 {
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += (q + k as f64).powf(-s);
        }
        // integral tail of the remainder
        acc + (q + n as f64 - 0.5).powf(1.0 - s) / (s - 1.0)
    }

    #[test]
    fn riemann_values() {
        let pi = std::f64::consts::PI;
        assert!((hurwitz_zeta(2.0, 1.0) - pi * pi / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(4.0, 1.0) - pi.powi(4) / 90.0).abs() < 1e-14);
        // ζ(s, 2) = ζ(s) - 1
        assert!((hurwitz_zeta(2.0, 2.0) - (pi * pi / 6.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn matches_brute_force_sums() {
        for &(s, q) in &[(3.5, 1.0), (2.5, 3.0), (1.5, 2.0), (4.5, 10_001.0)] {
            let b = brute(s, q, 2_000_000);
            assert!((hurwitz_zeta(s, q) - b).abs() < 1e-11 * b.max(1e-300), "s={s} q={q}");
        }
    }

    #[test]
    fn shifted_tail_matches_direct_sum() {
        // Σ_{j≥5} (j-1)^0.7 j^{-3.5}
        let mut direct = 0.0;
        for j in (5..3_000_000u64).rev() {
            direct += ((j - 1) as f64).powf(0.7) * (j as f64).powf(-3.5);
        }
        direct += (3_000_000f64).powf(0.7 - 2.5) / 1.8;
        let v = shifted_power_tail(0.7, 3.5, 5);
        assert!((v - direct).abs() < 1e-10, "{v} vs {direct}");
        // a = 0 reduces to the Hurwitz zeta
        assert!((shifted_power_tail(0.0, 3.0, 7) - hurwitz_zeta(3.0, 7.0)).abs() < 1e-15);
    }
}
