//! ON/OFF-keying transmission layer. Absorbed counts per bit interval are
//! modelled as Poisson with a mean assembled from the cumulative absorption
//! curve, detection is by integer threshold, and average bit error rates are
//! computed by exact history enumeration (or seeded Monte Carlo).

use crate::error::{McError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::function::gamma::{gamma_lr, gamma_ur};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// ON/OFF-keying protocol parameters.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolSpec {
    /// Bits per transmission block.
    pub q: usize,
    /// Bit interval, s.
    pub t_b: f64,
    /// Prior probability of transmitting 0.
    pub p0: f64,
    /// Prior probability of transmitting 1.
    pub p1: f64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            q: 10,
            t_b: 0.8,
            p0: 0.5,
            p1: 0.5,
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(McError::Config("Q must be >= 1".into()));
        }
        if !(self.t_b > 0.0) {
            return Err(McError::Config("T_b must be > 0".into()));
        }
        if !(self.p0 >= 0.0 && self.p1 >= 0.0 && (self.p0 + self.p1 - 1.0).abs() <= 1e-12) {
            return Err(McError::Config("priors must satisfy P0 + P1 = 1".into()));
        }
        Ok(())
    }
}

/// Per-lag absorbed-fraction increments of the cumulative curve H, sampled
/// on the bit grid, plus the number of molecules released per ON bit.
#[derive(Debug, Clone)]
pub struct ChannelIncrements {
    delta_h: Vec<f64>,
    n_t: f64,
}

impl ChannelIncrements {
    pub fn new(delta_h: Vec<f64>, n_t: f64) -> Result<Self> {
        if delta_h.is_empty() {
            return Err(McError::Domain("need at least one increment".into()));
        }
        if !(n_t > 0.0) {
            return Err(McError::Domain("N_T must be > 0".into()));
        }
        let mut cleaned = delta_h;
        for d in &mut cleaned {
            if *d < -1e-12 {
                return Err(McError::Domain(format!(
                    "negative absorption increment {d}"
                )));
            }
            *d = d.max(0.0);
        }
        let total: f64 = cleaned.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(McError::Domain(format!(
                "increments sum to {total} > 1, not a fraction curve"
            )));
        }
        Ok(Self {
            delta_h: cleaned,
            n_t,
        })
    }

    /// Build increments dH_k = H((k+1) T_b) - H(k T_b), k = 0..Q-1, from a
    /// cumulative absorption curve.
    pub fn from_cumulative<F>(h: F, q: usize, t_b: f64, n_t: f64) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64>,
    {
        if q < 1 || !(t_b > 0.0) {
            return Err(McError::Config("need Q >= 1 and T_b > 0".into()));
        }
        let mut prev = 0.0;
        let mut delta = Vec::with_capacity(q);
        for k in 1..=q {
            let cur = h(k as f64 * t_b)?;
            delta.push(cur - prev);
            prev = cur;
        }
        Self::new(delta, n_t)
    }

    pub fn lags(&self) -> usize {
        self.delta_h.len()
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    /// Largest possible Poisson mean (all-ones history).
    pub fn chi_max(&self) -> f64 {
        self.n_t * self.delta_h.iter().sum::<f64>()
    }
}

/// How the detector picks its threshold.
#[derive(Debug, Clone, Copy)]
pub enum DetectorPolicy {
    Fixed(u64),
    /// Genie threshold minimizing the per-history error.
    PerHistoryOptimal,
    /// One threshold minimizing the block-average error.
    AverageOptimal,
}

/// Poisson mean of the count absorbed in the q-th interval for the full
/// transmitted history b_1..b_q (most recent bit last).
pub fn poisson_mean(history: &[u8], inc: &ChannelIncrements) -> Result<f64> {
    let q = history.len();
    if q == 0 || q > inc.lags() {
        return Err(McError::Domain(format!(
            "history length {q} outside 1..={}",
            inc.lags()
        )));
    }
    let mut sum = 0.0;
    for (g, &b) in history.iter().enumerate() {
        if b > 0 {
            // bit g+1 contributes the lag q-(g+1) increment
            sum += inc.delta_h[q - g - 1];
        }
    }
    Ok(inc.n_t * sum)
}

/// Poisson means of the current count conditioned on b_q = 0 and b_q = 1,
/// for the previous bits `prev` = b_1..b_{q-1}.
fn chi01(prev: &[u8], inc: &ChannelIncrements) -> Result<(f64, f64)> {
    let q = prev.len() + 1;
    if q > inc.lags() {
        return Err(McError::Domain(format!(
            "history needs {q} lags, increments provide {}",
            inc.lags()
        )));
    }
    let mut isi = 0.0;
    for (g, &b) in prev.iter().enumerate() {
        if b > 0 {
            isi += inc.delta_h[q - g - 1];
        }
    }
    let chi0 = inc.n_t * isi;
    Ok((chi0, chi0 + inc.n_t * inc.delta_h[0]))
}

/// P(N < psi) for N ~ Poisson(lambda), exact via the regularized upper
/// incomplete gamma.
fn pr_lt(psi: u64, lambda: f64) -> f64 {
    if psi == 0 {
        0.0
    } else if lambda == 0.0 {
        1.0
    } else {
        gamma_ur(psi as f64, lambda)
    }
}

/// P(N >= psi), computed from the lower tail so small values keep precision.
fn pr_ge(psi: u64, lambda: f64) -> f64 {
    if psi == 0 {
        1.0
    } else if lambda == 0.0 {
        0.0
    } else {
        gamma_lr(psi as f64, lambda)
    }
}

fn phi_from_means(chi0: f64, chi1: f64, psi: u64, spec: &ProtocolSpec) -> f64 {
    spec.p1 * pr_lt(psi, chi1) + spec.p0 * pr_ge(psi, chi0)
}

/// Error probability of the current bit given the previous bits and a fixed
/// threshold.
pub fn ber_given_history(
    prev: &[u8],
    psi: u64,
    inc: &ChannelIncrements,
    spec: &ProtocolSpec,
) -> Result<f64> {
    spec.validate()?;
    let (chi0, chi1) = chi01(prev, inc)?;
    Ok(phi_from_means(chi0, chi1, psi, spec))
}

fn brute_force_threshold(chi0: f64, chi1: f64, spec: &ProtocolSpec) -> u64 {
    let psi_max = (chi1.max(chi0) + 10.0 * chi1.max(chi0).sqrt()).ceil() as u64 + 1;
    let mut best = (0u64, f64::INFINITY);
    for psi in 0..=psi_max {
        let phi = phi_from_means(chi0, chi1, psi, spec);
        if phi < best.1 {
            best = (psi, phi);
        }
    }
    best.0
}

/// Threshold minimizing the per-history error. The closed form is the
/// Poisson likelihood-ratio threshold; it degenerates when the ISI mean is
/// zero, in which case an exhaustive scan is used instead.
pub fn optimal_threshold(
    prev: &[u8],
    inc: &ChannelIncrements,
    spec: &ProtocolSpec,
) -> Result<u64> {
    spec.validate()?;
    let (chi0, chi1) = chi01(prev, inc)?;
    if chi1 <= chi0 {
        return Err(McError::Domain(
            "uninformative channel: ON mean does not exceed OFF mean".into(),
        ));
    }
    if chi0 == 0.0 {
        return Ok(brute_force_threshold(chi0, chi1, spec));
    }
    let tau = ((spec.p0 / spec.p1).ln() + chi1 - chi0) / (chi1 / chi0).ln();
    Ok(tau.ceil().max(0.0) as u64)
}

/// All (weight-bearing) conditional means needed by the block average: one
/// (chi0, chi1, weight) triple per bit index and previous-bit history.
fn enumerate_means(inc: &ChannelIncrements, spec: &ProtocolSpec) -> Result<Vec<(f64, f64, f64)>> {
    if spec.q > 20 {
        return Err(McError::Config(
            "exact enumeration is capped at Q = 20; use the Monte Carlo mode".into(),
        ));
    }
    if spec.q > inc.lags() {
        return Err(McError::Domain(format!(
            "Q = {} needs {} increments, have {}",
            spec.q,
            spec.q,
            inc.lags()
        )));
    }
    let mut out = Vec::new();
    let mut prev = Vec::new();
    for q in 1..=spec.q {
        let weight = 1.0 / (spec.q as f64 * (1u64 << (q - 1)) as f64);
        for mask in 0u64..(1u64 << (q - 1)) {
            prev.clear();
            for g in 0..q - 1 {
                prev.push(((mask >> g) & 1) as u8);
            }
            let (c0, c1) = chi01(&prev, inc)?;
            out.push((c0, c1, weight));
        }
    }
    Ok(out)
}

fn average_from_means(means: &[(f64, f64, f64)], psi: u64, spec: &ProtocolSpec) -> f64 {
    let eval = |&(c0, c1, w): &(f64, f64, f64)| w * phi_from_means(c0, c1, psi, spec);
    #[cfg(feature = "parallel")]
    {
        // collect then sum in index order so the reduction is deterministic
        let terms: Vec<f64> = means.par_iter().map(eval).collect();
        terms.iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        means.iter().map(eval).sum()
    }
}

/// Block-average error at a fixed threshold, by exact enumeration of all
/// 2^(q-1) histories per bit (uniform history weighting).
pub fn average_ber(inc: &ChannelIncrements, psi: u64, spec: &ProtocolSpec) -> Result<f64> {
    spec.validate()?;
    let means = enumerate_means(inc, spec)?;
    Ok(average_from_means(&means, psi, spec))
}

/// Monte Carlo estimate of the block-average error from uniformly drawn
/// bit sequences; returns (mean, standard error).
pub fn average_ber_mc(
    inc: &ChannelIncrements,
    psi: u64,
    spec: &ProtocolSpec,
    sequences: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate()?;
    if spec.q > inc.lags() {
        return Err(McError::Domain(format!(
            "Q = {} needs {} increments, have {}",
            spec.q,
            spec.q,
            inc.lags()
        )));
    }
    if sequences < 2 {
        return Err(McError::Config("need at least 2 sequences".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut bits = vec![0u8; spec.q];
    for _ in 0..sequences {
        for b in &mut bits {
            *b = rng.gen_range(0..=1u8);
        }
        let mut block = 0.0;
        for q in 1..=spec.q {
            let (c0, c1) = chi01(&bits[..q - 1], inc)?;
            block += phi_from_means(c0, c1, psi, spec);
        }
        block /= spec.q as f64;
        sum += block;
        sum2 += block * block;
    }
    let n = sequences as f64;
    let mean = sum / n;
    let var = (sum2 - n * mean * mean).max(0.0) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Threshold minimizing the block-average error, with the error it attains.
/// Scans all integers up to mean + 10 sigma of the worst-case ISI load;
/// ties break toward the smaller threshold.
pub fn average_optimal_threshold(
    inc: &ChannelIncrements,
    spec: &ProtocolSpec,
) -> Result<(u64, f64)> {
    spec.validate()?;
    let means = enumerate_means(inc, spec)?;
    let chi_max = inc.chi_max();
    let psi_max = (chi_max + 10.0 * chi_max.sqrt()).ceil() as u64;
    let mut best = (0u64, f64::INFINITY);
    for psi in 0..=psi_max {
        let ber = average_from_means(&means, psi, spec);
        if ber < best.1 {
            best = (psi, ber);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::{self, ChannelParams};
    use rand_distr::{Distribution, Poisson};

    fn ptfr_increments(spec: &ProtocolSpec, n_t: f64, p: &ChannelParams) -> ChannelIncrements {
        ChannelIncrements::from_cumulative(
            |t| cir::h_fully_absorbing_cum(t, p),
            spec.q,
            spec.t_b,
            n_t,
        )
        .unwrap()
    }

    #[test]
    fn poisson_mean_basics() {
        let inc = ChannelIncrements::new(vec![0.3, 0.1, 0.05], 1000.0).unwrap();
        assert_eq!(poisson_mean(&[0, 0, 0], &inc).unwrap(), 0.0);
        assert!((poisson_mean(&[1], &inc).unwrap() - 300.0).abs() < 1e-12);
        // two consecutive ON bits telescope to N_T H(2 T_b)
        let chi = poisson_mean(&[1, 1], &inc).unwrap();
        assert!((chi - 1000.0 * (0.3 + 0.1)).abs() < 1e-9);
        assert!(poisson_mean(&[], &inc).is_err());
        assert!(poisson_mean(&[1, 1, 1, 1], &inc).is_err());
    }

    #[test]
    fn threshold_zero_gives_p0() {
        let spec = ProtocolSpec::default();
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        let phi = ber_given_history(&[1, 0, 1], 0, &inc, &spec).unwrap();
        assert_eq!(phi, spec.p0);
        let avg = average_ber(&inc, 0, &spec).unwrap();
        assert!((avg - spec.p0).abs() < 1e-12);
    }

    #[test]
    fn no_isi_unit_threshold_is_miss_probability() {
        let spec = ProtocolSpec::default();
        let inc = ChannelIncrements::new(vec![0.004], 1000.0).unwrap();
        let phi = ber_given_history(&[], 1, &inc, &spec).unwrap();
        assert!((phi - spec.p1 * (-4.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn phi_matches_poisson_draws() {
        let spec = ProtocolSpec::default();
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        let prev = [1u8, 0, 1, 1];
        let psi = 150u64;
        let want = ber_given_history(&prev, psi, &inc, &spec).unwrap();
        let (c0, c1) = chi01(&prev, &inc).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let d1 = Poisson::new(c1).unwrap();
        let d0 = Poisson::new(c0).unwrap();
        let n = 1_000_000usize;
        let mut errs = 0u64;
        for _ in 0..n {
            if rng.gen_bool(spec.p1) {
                if (d1.sample(&mut rng) as u64) < psi {
                    errs += 1;
                }
            } else if (d0.sample(&mut rng) as u64) >= psi {
                errs += 1;
            }
        }
        let est = errs as f64 / n as f64;
        let sigma = (want * (1.0 - want) / n as f64).sqrt();
        assert!(
            (est - want).abs() <= 3.0 * sigma,
            "est {est} vs {want}, sigma {sigma}"
        );
    }

    #[test]
    fn formula_threshold_equals_brute_force() {
        let spec = ProtocolSpec::default();
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let len = rng.gen_range(1..spec.q);
            let prev: Vec<u8> = (0..len).map(|_| rng.gen_range(0..=1)).collect();
            if prev.iter().all(|&b| b == 0) {
                continue; // chi0 = 0 takes the brute-force path by design
            }
            let f = optimal_threshold(&prev, &inc, &spec).unwrap();
            let (c0, c1) = chi01(&prev, &inc).unwrap();
            let bf = brute_force_threshold(c0, c1, &spec);
            assert_eq!(f, bf, "prev {prev:?}: formula {f} vs scan {bf}");
        }
    }

    #[test]
    fn threshold_scaling_follows_likelihood_rule() {
        let spec = ProtocolSpec::default();
        for &(c0, c1) in &[(40.0, 160.0), (80.0, 320.0), (5.0, 9.0), (10.0, 18.0)] {
            let bf = brute_force_threshold(c0, c1, &spec);
            let tau = ((spec.p0 / spec.p1).ln() + c1 - c0) / (c1 / c0).ln();
            assert_eq!(bf, tau.ceil() as u64, "c0={c0} c1={c1}");
        }
    }

    #[test]
    fn threshold_degenerate_cases() {
        let spec = ProtocolSpec::default();
        let inc = ChannelIncrements::new(vec![0.1, 0.0], 1000.0).unwrap();
        // zero ISI: brute-force path; optimum separates 0 and Poisson(100)
        let psi = optimal_threshold(&[0], &inc, &spec).unwrap();
        assert!(psi >= 1 && psi <= 100, "psi = {psi}");
        // uninformative: ON adds nothing at lag 0
        let flat = ChannelIncrements::new(vec![0.0, 0.1], 1000.0).unwrap();
        assert!(optimal_threshold(&[1], &flat, &spec).is_err());
    }

    #[test]
    fn average_ber_q1_reduction() {
        let spec = ProtocolSpec {
            q: 1,
            ..ProtocolSpec::default()
        };
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        for psi in [0u64, 50, 200, 400] {
            let a = average_ber(&inc, psi, &spec).unwrap();
            let b = ber_given_history(&[], psi, &inc, &spec).unwrap();
            assert!((a - b).abs() < 1e-15, "psi {psi}");
        }
    }

    #[test]
    fn average_ber_limits_and_range() {
        let spec = ProtocolSpec::default();
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        assert!((average_ber(&inc, 0, &spec).unwrap() - spec.p0).abs() < 1e-12);
        let huge = average_ber(&inc, 100_000, &spec).unwrap();
        assert!((huge - spec.p1).abs() < 1e-9);
        for psi in [10u64, 100, 300] {
            let b = average_ber(&inc, psi, &spec).unwrap();
            assert!((0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let spec = ProtocolSpec::default();
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        let (psi, exact) = average_optimal_threshold(&inc, &spec).unwrap();
        let (mc, se) = average_ber_mc(&inc, psi, &spec, 100_000, 3).unwrap();
        assert!(
            (mc - exact).abs() <= 3.0 * se.max(1e-12),
            "mc {mc} vs exact {exact}, se {se}"
        );
    }

    #[test]
    fn average_optimum_is_global_over_scan() {
        let spec = ProtocolSpec::default();
        let inc = ptfr_increments(&spec, 1000.0, &ChannelParams::default());
        let (psi, best) = average_optimal_threshold(&inc, &spec).unwrap();
        // local optimality plus spot checks across the scan range
        for cand in [psi.saturating_sub(1), psi + 1, 0, 10, 50, 150, 400] {
            let b = average_ber(&inc, cand, &spec).unwrap();
            assert!(b >= best - 1e-15, "cand {cand}: {b} < {best}");
        }
        assert!(psi > 0);
    }

    #[test]
    fn isi_free_average_matches_single_bit_map() {
        let spec = ProtocolSpec {
            q: 1,
            ..ProtocolSpec::default()
        };
        let inc = ChannelIncrements::new(vec![0.1], 2000.0).unwrap();
        let (avg_psi, _) = average_optimal_threshold(&inc, &spec).unwrap();
        let per = optimal_threshold(&[], &inc, &spec).unwrap();
        assert_eq!(avg_psi, per);
    }

    #[test]
    fn increments_validation() {
        assert!(ChannelIncrements::new(vec![], 100.0).is_err());
        assert!(ChannelIncrements::new(vec![0.1], 0.0).is_err());
        assert!(ChannelIncrements::new(vec![-0.01], 100.0).is_err());
        assert!(ChannelIncrements::new(vec![0.7, 0.7], 100.0).is_err());
        // tiny negatives from roundoff are clamped
        let inc = ChannelIncrements::new(vec![0.1, -1e-15], 100.0).unwrap();
        assert_eq!(poisson_mean(&[1, 0], &inc).unwrap(), 0.0);
    }
}
