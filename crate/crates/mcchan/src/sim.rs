//! Brownian particle-based simulator: the independent empirical check for
//! every analytic curve. Molecules take Gaussian steps; a step ending inside
//! the receiver sphere is resolved at the line-sphere crossing point, where
//! the molecule is absorbed (on a patch, or anywhere for the fully absorbing
//! receiver) or reflected back to its step-start position.

use crate::cir::{ChannelParams, CirSeries, Provenance, TxSpec};
use crate::error::{McError, Result};
use crate::geometry::ApLayout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Transmitter placement at distance r_0 from the receiver centre.
#[derive(Debug, Clone, Copy)]
pub enum TxPlacement {
    Fixed { theta: f64, phi: f64 },
    /// Direction resampled uniformly for every realization.
    UniformRandom,
}

/// Particle-simulation controls.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Channel time step, s.
    pub dt: f64,
    /// Time step for vesicles inside the transmitter, s.
    pub dt_tx: f64,
    /// Simulated horizon, s.
    pub horizon: f64,
    pub realizations: usize,
    /// Molecules (point TX) or vesicles (membrane-fusion TX) per realization.
    pub particles: usize,
    /// Output histogram bins over [0, horizon].
    pub bins: usize,
    pub seed: u64,
    pub placement: TxPlacement,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            dt_tx: 1e-5,
            horizon: 2.0,
            realizations: 200,
            particles: 1000,
            bins: 200,
            seed: 1,
            placement: TxPlacement::UniformRandom,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt_tx > 0.0) {
            return Err(McError::Config("time steps must be > 0".into()));
        }
        if !(self.horizon >= self.dt) {
            return Err(McError::Config("horizon must be >= dt".into()));
        }
        if self.realizations < 1 || self.particles < 1 || self.bins < 1 {
            return Err(McError::Config(
                "realizations, particles and bins must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Receiver model for the simulator.
#[derive(Debug, Clone, Copy)]
pub enum RxSpec<'a> {
    FullyAbsorbing,
    Patches(&'a ApLayout),
}

/// Patch index recorded for absorption on a fully absorbing surface.
pub const WHOLE_SURFACE: i32 = -1;

/// One absorption event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRecord {
    /// Absorption time, s (crossing-interpolated within the step).
    pub time: f64,
    /// Absorbing patch, or [`WHOLE_SURFACE`].
    pub patch: i32,
    pub realization: u32,
}

/// CSV export of raw absorption events.
pub fn hits_to_csv(records: &[HitRecord]) -> String {
    let mut out = String::from("# hits-csv v1\nabsorption_time_s,patch_index,realization\n");
    for r in records {
        out.push_str(&format!("{:.17e},{},{}\n", r.time, r.patch, r.realization));
    }
    out
}

/// Simulator output: binned series plus the raw events behind it.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub series: CirSeries,
    pub records: Vec<HitRecord>,
}

/// Membrane-fusion simulator output; `releases` holds the vesicle fusion
/// times of all realizations, for validating the analytic release profile.
#[derive(Debug, Clone)]
pub struct MfSimOutput {
    pub series: CirSeries,
    pub records: Vec<HitRecord>,
    pub releases: Vec<f64>,
}

fn norm2(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Uniformly distributed direction on the unit sphere.
pub fn sample_unit_direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// First crossing parameter tau in [0, 1] of the segment start -> end with
/// the sphere |x| = r, given |start| and |end| on opposite sides.
fn crossing_tau(start: [f64; 3], end: [f64; 3], r: f64) -> f64 {
    let d = sub(end, start);
    let a = norm2(d);
    let b = 2.0 * (start[0] * d[0] + start[1] * d[1] + start[2] * d[2]);
    let c = norm2(start) - r * r;
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let sq = disc.sqrt();
    // smaller root is the first crossing along the segment
    let tau = (-b - sq) / (2.0 * a);
    if (0.0..=1.0).contains(&tau) {
        tau
    } else {
        ((-b + sq) / (2.0 * a)).clamp(0.0, 1.0)
    }
}

fn point_at(start: [f64; 3], end: [f64; 3], tau: f64) -> [f64; 3] {
    [
        start[0] + tau * (end[0] - start[0]),
        start[1] + tau * (end[1] - start[1]),
        start[2] + tau * (end[2] - start[2]),
    ]
}

struct PatchGeom {
    centers: Vec<[f64; 3]>,
    radii: Vec<f64>,
}

impl PatchGeom {
    fn new(layout: &ApLayout) -> Self {
        let r = layout.rx_radius();
        Self {
            centers: layout.patches().iter().map(|p| p.center(r)).collect(),
            radii: layout.patches().iter().map(|p| p.radius).collect(),
        }
    }

    /// Patch containing the surface point `x` (chord-distance membership).
    fn hit(&self, x: [f64; 3]) -> Option<usize> {
        for i in 0..self.centers.len() {
            if norm2(sub(x, self.centers[i])).sqrt() <= self.radii[i] {
                return Some(i);
            }
        }
        None
    }
}

fn tx_center<R: Rng>(cfg: &SimConfig, r_0: f64, rng: &mut R) -> [f64; 3] {
    match cfg.placement {
        TxPlacement::Fixed { theta, phi } => {
            let (st, ct) = (theta.sin(), theta.cos());
            [r_0 * st * phi.cos(), r_0 * st * phi.sin(), r_0 * ct]
        }
        TxPlacement::UniformRandom => {
            let d = sample_unit_direction(rng);
            [r_0 * d[0], r_0 * d[1], r_0 * d[2]]
        }
    }
}

/// Walk one molecule from `start` at time `t0` until absorption, degradation
/// or the horizon; returns the absorption event if any.
#[allow(clippy::too_many_arguments)]
fn walk_molecule<R: Rng>(
    start: [f64; 3],
    t0: f64,
    p: &ChannelParams,
    patches: Option<&PatchGeom>,
    cfg: &SimConfig,
    realization: u32,
    rng: &mut R,
) -> Option<HitRecord> {
    let sigma = (2.0 * p.d_sigma * cfg.dt).sqrt();
    let p_die = if p.k_d > 0.0 {
        1.0 - (-p.k_d * cfg.dt).exp()
    } else {
        0.0
    };
    let r_rx2 = p.r_rx * p.r_rx;
    let n_steps = ((cfg.horizon - t0) / cfg.dt).floor() as u64;
    let mut pos = start;
    for k in 0..n_steps {
        if p_die > 0.0 && rng.gen::<f64>() < p_die {
            return None;
        }
        let from = pos;
        pos[0] += sigma * rng.sample::<f64, _>(StandardNormal);
        pos[1] += sigma * rng.sample::<f64, _>(StandardNormal);
        pos[2] += sigma * rng.sample::<f64, _>(StandardNormal);
        if norm2(pos) < r_rx2 {
            let tau = crossing_tau(from, pos, p.r_rx);
            let x = point_at(from, pos, tau);
            debug_assert!((norm2(x).sqrt() - p.r_rx).abs() <= 1e-9 * p.r_rx);
            let time = t0 + (k as f64 + tau) * cfg.dt;
            match patches {
                None => {
                    return Some(HitRecord {
                        time,
                        patch: WHOLE_SURFACE,
                        realization,
                    })
                }
                Some(geom) => {
                    if let Some(i) = geom.hit(x) {
                        return Some(HitRecord {
                            time,
                            patch: i as i32,
                            realization,
                        });
                    }
                    // off-patch: reflect to the step-start position
                    pos = from;
                }
            }
        }
    }
    None
}

fn bin_series(
    records: &[HitRecord],
    cfg: &SimConfig,
    total: u64,
    label: &str,
) -> CirSeries {
    let width = cfg.horizon / cfg.bins as f64;
    let mut counts = vec![0u64; cfg.bins];
    for r in records {
        let idx = ((r.time / width).ceil() as usize).max(1) - 1;
        counts[idx.min(cfg.bins - 1)] += 1;
    }
    let time: Vec<f64> = (1..=cfg.bins).map(|i| i as f64 * width).collect();
    let hitting_rate: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / (total as f64 * width))
        .collect();
    let mut cum = 0u64;
    let cumulative: Vec<f64> = counts
        .iter()
        .map(|&c| {
            cum += c;
            cum as f64 / total as f64
        })
        .collect();
    let h_inf = *cumulative.last().unwrap();
    CirSeries {
        time,
        hitting_rate,
        cumulative,
        h_inf,
        provenance: Provenance::Simulated { seed: cfg.seed },
        truncation: None,
        label: label.into(),
    }
}

fn run_realizations<F>(cfg: &SimConfig, f: F) -> Vec<Vec<HitRecord>>
where
    F: Fn(u32, &mut ChaCha12Rng) -> Vec<HitRecord> + Sync,
{
    let run = |r: u32| {
        // hierarchical seeding: one counter-based stream per realization, so
        // results do not depend on the execution schedule
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64 + 1);
        f(r, &mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        (0..cfg.realizations as u32)
            .into_par_iter()
            .map(run)
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.realizations as u32).map(run).collect()
    }
}

/// Point-release simulation against a patchy or fully absorbing receiver.
pub fn simulate_point_tx(
    p: &ChannelParams,
    rx: RxSpec<'_>,
    cfg: &SimConfig,
) -> Result<SimOutput> {
    p.validate()?;
    cfg.validate()?;
    let geom = match rx {
        RxSpec::FullyAbsorbing => None,
        RxSpec::Patches(layout) => {
            if (layout.rx_radius() - p.r_rx).abs() > 1e-12 * p.r_rx {
                return Err(McError::Domain(
                    "layout and channel disagree on the RX radius".into(),
                ));
            }
            Some(PatchGeom::new(layout))
        }
    };
    let per = run_realizations(cfg, |r, rng| {
        let tx = tx_center(cfg, p.r_0, rng);
        let mut hits = Vec::new();
        for _ in 0..cfg.particles {
            if let Some(h) = walk_molecule(tx, 0.0, p, geom.as_ref(), cfg, r, rng) {
                hits.push(h);
            }
        }
        hits
    });
    let records: Vec<HitRecord> = per.into_iter().flatten().collect();
    let total = (cfg.realizations * cfg.particles) as u64;
    let series = bin_series(&records, cfg, total, "pbs-point");
    Ok(SimOutput { series, records })
}

/// Membrane-fusion transmitter simulation: vesicles diffuse inside the TX
/// sphere, fuse on membrane contact with probability k_f sqrt(pi dt/D_v),
/// and release eta molecules at the fusion point; the TX body is ignored
/// afterwards.
pub fn simulate_mf_tx(
    p: &ChannelParams,
    rx: RxSpec<'_>,
    tx: &TxSpec,
    cfg: &SimConfig,
) -> Result<MfSimOutput> {
    p.validate()?;
    cfg.validate()?;
    tx.validate()?;
    let (r_t, d_v, k_f, eta) = match *tx {
        TxSpec::MembraneFusion {
            r_t, d_v, k_f, eta, ..
        } => (r_t, d_v, k_f, eta),
        TxSpec::Point { .. } => {
            return Err(McError::Domain(
                "simulate_mf_tx requires a membrane-fusion transmitter".into(),
            ))
        }
    };
    if r_t + p.r_rx >= 0.9 * p.r_0 {
        return Err(McError::Domain(
            "membrane-fusion geometry needs r_T + r_R < 0.9 r_0".into(),
        ));
    }
    let geom = match rx {
        RxSpec::FullyAbsorbing => None,
        RxSpec::Patches(layout) => {
            if (layout.rx_radius() - p.r_rx).abs() > 1e-12 * p.r_rx {
                return Err(McError::Domain(
                    "layout and channel disagree on the RX radius".into(),
                ));
            }
            Some(PatchGeom::new(layout))
        }
    };
    let p_fuse = (k_f * (std::f64::consts::PI * cfg.dt_tx / d_v).sqrt()).min(1.0);
    let sigma_v = (2.0 * d_v * cfg.dt_tx).sqrt();
    let n_tx_steps = (cfg.horizon / cfg.dt_tx).floor() as u64;
    let r_t2 = r_t * r_t;

    let per = run_realizations(cfg, |r, rng| {
        let center = tx_center(cfg, p.r_0, rng);
        let mut hits = Vec::new();
        let mut releases = Vec::new();
        for _ in 0..cfg.particles {
            // vesicle phase, coordinates relative to the TX centre
            let mut pos = [0.0f64; 3];
            let mut fusion: Option<(f64, [f64; 3])> = None;
            for k in 0..n_tx_steps {
                let from = pos;
                pos[0] += sigma_v * rng.sample::<f64, _>(StandardNormal);
                pos[1] += sigma_v * rng.sample::<f64, _>(StandardNormal);
                pos[2] += sigma_v * rng.sample::<f64, _>(StandardNormal);
                if norm2(pos) >= r_t2 {
                    let tau = crossing_tau(from, pos, r_t);
                    if rng.gen::<f64>() < p_fuse {
                        let x = point_at(from, pos, tau);
                        // project exactly onto the membrane
                        let n = norm2(x).sqrt();
                        let site = [
                            center[0] + x[0] / n * r_t,
                            center[1] + x[1] / n * r_t,
                            center[2] + x[2] / n * r_t,
                        ];
                        fusion = Some(((k as f64 + tau) * cfg.dt_tx, site));
                        break;
                    }
                    pos = from;
                }
            }
            if let Some((t_f, site)) = fusion {
                releases.push(t_f);
                for _ in 0..eta {
                    if let Some(h) = walk_molecule(site, t_f, p, geom.as_ref(), cfg, r, rng) {
                        hits.push(h);
                    }
                }
            }
        }
        // releases piggyback as pseudo-records to keep one merge path
        releases
            .into_iter()
            .map(|t| HitRecord {
                time: t,
                patch: i32::MIN,
                realization: r,
            })
            .chain(hits)
            .collect()
    });
    let mut records = Vec::new();
    let mut releases = Vec::new();
    for h in per.into_iter().flatten() {
        if h.patch == i32::MIN {
            releases.push(h.time);
        } else {
            records.push(h);
        }
    }
    let total = (cfg.realizations * cfg.particles) as u64 * eta;
    let series = bin_series(&records, cfg, total, "pbs-mf");
    Ok(MfSimOutput {
        series,
        records,
        releases,
    })
}

/// Mean cumulative absorbed fraction and realization-level standard error at
/// the given checkpoint times.
#[derive(Debug, Clone)]
pub struct CiSummary {
    pub time: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

fn per_realization_fractions(
    records: &[HitRecord],
    checkpoints: &[f64],
    realizations: usize,
    particles: usize,
) -> Vec<Vec<f64>> {
    let mut fractions = vec![vec![0.0f64; checkpoints.len()]; realizations];
    for r in records {
        for (j, &t) in checkpoints.iter().enumerate() {
            if r.time <= t {
                fractions[r.realization as usize][j] += 1.0;
            }
        }
    }
    for f in &mut fractions {
        for v in f.iter_mut() {
            *v /= particles as f64;
        }
    }
    fractions
}

/// Normal-approximation standard errors across realizations.
pub fn estimate_ci(
    records: &[HitRecord],
    checkpoints: &[f64],
    realizations: usize,
    particles: usize,
) -> Result<CiSummary> {
    if realizations < 2 {
        return Err(McError::Domain(
            "standard errors need at least 2 realizations".into(),
        ));
    }
    let fr = per_realization_fractions(records, checkpoints, realizations, particles);
    let n = realizations as f64;
    let mut mean = vec![0.0; checkpoints.len()];
    let mut se = vec![0.0; checkpoints.len()];
    for j in 0..checkpoints.len() {
        let m = fr.iter().map(|f| f[j]).sum::<f64>() / n;
        let var = fr.iter().map(|f| (f[j] - m) * (f[j] - m)).sum::<f64>() / (n - 1.0);
        mean[j] = m;
        se[j] = (var / n).sqrt();
    }
    Ok(CiSummary {
        time: checkpoints.to_vec(),
        mean,
        se,
    })
}

/// Bootstrap standard errors (resampling whole realizations).
pub fn estimate_ci_bootstrap(
    records: &[HitRecord],
    checkpoints: &[f64],
    realizations: usize,
    particles: usize,
    resamples: usize,
    seed: u64,
) -> Result<CiSummary> {
    if realizations < 2 {
        return Err(McError::Domain(
            "standard errors need at least 2 realizations".into(),
        ));
    }
    let fr = per_realization_fractions(records, checkpoints, realizations, particles);
    let n = realizations as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut boot_means = vec![Vec::with_capacity(resamples); checkpoints.len()];
    for _ in 0..resamples {
        let mut acc = vec![0.0; checkpoints.len()];
        for _ in 0..realizations {
            let pick = rng.gen_range(0..realizations);
            for j in 0..checkpoints.len() {
                acc[j] += fr[pick][j];
            }
        }
        for j in 0..checkpoints.len() {
            boot_means[j].push(acc[j] / n);
        }
    }
    let mean: Vec<f64> = (0..checkpoints.len())
        .map(|j| fr.iter().map(|f| f[j]).sum::<f64>() / n)
        .collect();
    let se: Vec<f64> = (0..checkpoints.len())
        .map(|j| {
            let bm = &boot_means[j];
            let m = bm.iter().sum::<f64>() / bm.len() as f64;
            (bm.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (bm.len() as f64 - 1.0)).sqrt()
        })
        .collect();
    Ok(CiSummary {
        time: checkpoints.to_vec(),
        mean,
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir;
    use crate::geometry::layout_fibonacci;

    fn quick_cfg() -> SimConfig {
        SimConfig {
            dt: 1e-3,
            horizon: 1.0,
            realizations: 40,
            particles: 250,
            bins: 50,
            seed: 7,
            placement: TxPlacement::UniformRandom,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = ChannelParams::default();
        let cfg = SimConfig {
            realizations: 6,
            particles: 50,
            ..quick_cfg()
        };
        let a = simulate_point_tx(&p, RxSpec::FullyAbsorbing, &cfg).unwrap();
        let b = simulate_point_tx(&p, RxSpec::FullyAbsorbing, &cfg).unwrap();
        assert_eq!(a.records, b.records);
        let cfg2 = SimConfig { seed: 8, ..cfg };
        let c = simulate_point_tx(&p, RxSpec::FullyAbsorbing, &cfg2).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn fully_absorbing_tracks_analytic() {
        let p = ChannelParams {
            k_d: 0.0,
            ..ChannelParams::default()
        };
        let cfg = quick_cfg();
        let out = simulate_point_tx(&p, RxSpec::FullyAbsorbing, &cfg).unwrap();
        let ci = estimate_ci(&out.records, &[0.25, 0.5, 1.0], cfg.realizations, cfg.particles)
            .unwrap();
        for (j, &t) in ci.time.iter().enumerate() {
            let want = cir::h_fully_absorbing_cum(t, &p).unwrap();
            let gap = (ci.mean[j] - want).abs();
            // generous gate: 4 SE plus the O(sqrt(dt)) reflection bias
            assert!(
                gap <= 4.0 * ci.se[j] + 0.02,
                "t={t}: sim {} vs analytic {want}, se {}",
                ci.mean[j],
                ci.se[j]
            );
        }
    }

    #[test]
    fn degradation_reduces_absorption() {
        let cfg = quick_cfg();
        let p0 = ChannelParams {
            k_d: 0.0,
            ..ChannelParams::default()
        };
        let p8 = ChannelParams { k_d: 8.0, ..p0 };
        let a = simulate_point_tx(&p0, RxSpec::FullyAbsorbing, &cfg).unwrap();
        let b = simulate_point_tx(&p8, RxSpec::FullyAbsorbing, &cfg).unwrap();
        assert!(b.series.h_inf < a.series.h_inf);
    }

    #[test]
    fn patch_count_ordering() {
        let p = ChannelParams::default();
        let cfg = SimConfig {
            realizations: 60,
            particles: 500,
            ..quick_cfg()
        };
        let mut prev = -1.0;
        for n in [1usize, 11] {
            let l = layout_fibonacci(p.r_rx, n, 0.05).unwrap();
            let out = simulate_point_tx(&p, RxSpec::Patches(&l), &cfg).unwrap();
            assert!(out.series.h_inf > prev, "n={n}");
            prev = out.series.h_inf;
        }
    }

    #[test]
    fn placement_uniform_over_octants() {
        // chi-square over octants at the 1% level (7 dof, critical 18.48)
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 4000;
        let mut counts = [0u32; 8];
        for _ in 0..n {
            let d = sample_unit_direction(&mut rng);
            let idx = (d[0] > 0.0) as usize | ((d[1] > 0.0) as usize) << 1
                | ((d[2] > 0.0) as usize) << 2;
            counts[idx] += 1;
        }
        let expect = n as f64 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect) * (c as f64 - expect) / expect)
            .sum();
        assert!(chi2 < 18.48, "chi2 = {chi2}");
    }

    #[test]
    fn mf_release_matches_analytic_cdf() {
        let p = ChannelParams::default();
        let tx = TxSpec::default_mf();
        let cfg = SimConfig {
            dt_tx: 1e-5,
            realizations: 40,
            particles: 120,
            horizon: 1.5,
            ..quick_cfg()
        };
        let out = simulate_mf_tx(&p, RxSpec::FullyAbsorbing, &tx, &cfg).unwrap();
        let n_ves = (cfg.realizations * cfg.particles) as f64;
        let ch = cir::MfChannel::new(&p, 1.85, &tx, 100).unwrap();
        let mut sup = 0.0f64;
        for &t in &[0.05, 0.1, 0.2, 0.4, 0.8, 1.2] {
            let emp = out.releases.iter().filter(|&&u| u <= t).count() as f64 / n_ves;
            let ana = ch.release_cum(t).unwrap();
            sup = sup.max((emp - ana).abs());
        }
        assert!(sup <= 0.025, "sup gap {sup}");
    }

    #[test]
    fn mf_fast_fusion_releases_earlier() {
        // clamped fusion probability: release times are stochastically
        // smaller than with slow fusion
        let p = ChannelParams::default();
        let cfg = SimConfig {
            dt_tx: 1e-4,
            realizations: 10,
            particles: 80,
            ..quick_cfg()
        };
        let slow = TxSpec::MembraneFusion {
            r_t: 5.0,
            d_v: 9.0,
            k_f: 5.0,
            n_v: 1,
            eta: 1,
        };
        let fast = TxSpec::MembraneFusion {
            r_t: 5.0,
            d_v: 9.0,
            k_f: 1e6,
            n_v: 1,
            eta: 1,
        };
        let a = simulate_mf_tx(&p, RxSpec::FullyAbsorbing, &slow, &cfg).unwrap();
        let b = simulate_mf_tx(&p, RxSpec::FullyAbsorbing, &fast, &cfg).unwrap();
        let med = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s[s.len() / 2]
        };
        assert!(med(&b.releases) < med(&a.releases));
    }

    #[test]
    fn ci_degenerate_cases() {
        // all hits in one bin
        let recs: Vec<HitRecord> = (0..10)
            .map(|r| HitRecord {
                time: 0.05,
                patch: 0,
                realization: r,
            })
            .collect();
        let ci = estimate_ci(&recs, &[0.01, 0.1], 10, 1).unwrap();
        assert_eq!(ci.mean[0], 0.0);
        assert_eq!(ci.mean[1], 1.0);
        assert_eq!(ci.se[1], 0.0);
        // uniform synthetic: every realization has the same fractions
        let recs: Vec<HitRecord> = (0..10)
            .flat_map(|r| {
                [0.1, 0.3, 0.5, 0.7].map(|t| HitRecord {
                    time: t,
                    patch: 0,
                    realization: r,
                })
            })
            .collect();
        let ci = estimate_ci(&recs, &[0.2, 0.6, 1.0], 10, 4).unwrap();
        assert_eq!(ci.mean[0], 0.25);
        assert_eq!(ci.mean[1], 0.75);
        assert_eq!(ci.se[2], 0.0);
        assert!(estimate_ci(&recs, &[0.2], 1, 4).is_err());
    }

    #[test]
    fn bootstrap_agrees_with_normal_se() {
        let p = ChannelParams::default();
        let cfg = quick_cfg();
        let l = layout_fibonacci(p.r_rx, 11, 0.05).unwrap();
        let out = simulate_point_tx(&p, RxSpec::Patches(&l), &cfg).unwrap();
        let pts = [0.25, 0.5, 1.0];
        let a = estimate_ci(&out.records, &pts, cfg.realizations, cfg.particles).unwrap();
        let b = estimate_ci_bootstrap(&out.records, &pts, cfg.realizations, cfg.particles, 500, 5)
            .unwrap();
        for j in 0..pts.len() {
            assert!((a.se[j] - b.se[j]).abs() <= 0.2 * a.se[j].max(1e-6), "j={j}");
        }
    }

    #[test]
    fn hits_csv_schema() {
        let recs = [HitRecord {
            time: 0.5,
            patch: 2,
            realization: 1,
        }];
        let csv = hits_to_csv(&recs);
        assert!(csv.starts_with("# hits-csv v1\n"));
        assert!(csv.contains("absorption_time_s,patch_index,realization\n"));
    }
}
