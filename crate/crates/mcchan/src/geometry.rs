//! Absorbing-patch layouts on the receiver sphere: explicit, Fibonacci
//! lattice, seeded random and region-restricted placements.

use crate::error::{McError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

/// Coverage ratio above which the homogenized capacitance formulas start to
/// drift from simulation.
pub const COVERAGE_VALIDITY_LIMIT: f64 = 0.2;

/// One circular absorbing patch on the receiver surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ap {
    /// Polar angle of the patch centre, rad in [0, pi].
    pub theta: f64,
    /// Azimuth of the patch centre, rad in [0, 2 pi).
    pub phi: f64,
    /// Disc radius in um.
    pub radius: f64,
}

impl Ap {
    /// Cartesian centre on a sphere of radius `r`.
    pub fn center(&self, r: f64) -> [f64; 3] {
        let (st, ct) = (self.theta.sin(), self.theta.cos());
        let (sp, cp) = (self.phi.sin(), self.phi.cos());
        [r * st * cp, r * st * sp, r * ct]
    }
}

/// A validated set of non-overlapping patches on a sphere of radius `rx_radius`.
#[derive(Debug, Clone)]
pub struct ApLayout {
    rx_radius: f64,
    patches: Vec<Ap>,
    coverage: f64,
}

fn chord(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

impl ApLayout {
    /// Validate angle ranges, patch sizes and the pairwise non-overlap rule
    /// |l_i - l_j| >= a_i + a_j (Euclidean distance between centre points).
    pub fn new(rx_radius: f64, patches: Vec<Ap>) -> Result<Self> {
        if rx_radius <= 0.0 {
            return Err(McError::Layout("rx radius must be > 0".into()));
        }
        if patches.is_empty() {
            return Err(McError::Layout("layout needs at least one patch".into()));
        }
        for (i, p) in patches.iter().enumerate() {
            if !(0.0..=PI).contains(&p.theta) {
                return Err(McError::Layout(format!(
                    "patch {i}: theta {} out of [0, pi]",
                    p.theta
                )));
            }
            if !(0.0..2.0 * PI).contains(&p.phi) {
                return Err(McError::Layout(format!(
                    "patch {i}: phi {} out of [0, 2 pi)",
                    p.phi
                )));
            }
            if p.radius <= 0.0 || p.radius >= rx_radius {
                return Err(McError::Layout(format!(
                    "patch {i}: radius {} out of (0, r_R)",
                    p.radius
                )));
            }
        }
        for i in 0..patches.len() {
            for j in (i + 1)..patches.len() {
                let d = chord(patches[i].center(rx_radius), patches[j].center(rx_radius));
                if d < patches[i].radius + patches[j].radius {
                    return Err(McError::Layout(format!(
                        "patches {i} and {j} overlap: separation {:.4} < {:.4}",
                        d,
                        patches[i].radius + patches[j].radius
                    )));
                }
            }
        }
        let coverage = patches.iter().map(|p| p.radius * p.radius).sum::<f64>()
            / (4.0 * rx_radius * rx_radius);
        Ok(Self {
            rx_radius,
            patches,
            coverage,
        })
    }

    pub fn rx_radius(&self) -> f64 {
        self.rx_radius
    }

    pub fn patches(&self) -> &[Ap] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Coverage ratio A = sum a_i^2 / (4 r_R^2).
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    /// True when the coverage exceeds the range where the homogenization
    /// formulas are known to be accurate.
    pub fn coverage_exceeds_validity(&self) -> bool {
        self.coverage > COVERAGE_VALIDITY_LIMIT
    }

    pub fn identical_sizes(&self) -> bool {
        let a0 = self.patches[0].radius;
        self.patches.iter().all(|p| (p.radius - a0).abs() <= 1e-12 * a0)
    }

    /// Serialize as one `theta phi radius` record per line (SI angles in rad,
    /// radius in um), preceded by a header comment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# ap-layout v1 rx_radius_um={:.17e} n_patches={} coverage={:.17e}\n",
            self.rx_radius,
            self.patches.len(),
            self.coverage
        ));
        out.push_str("# theta_rad phi_rad radius_um\n");
        for p in &self.patches {
            out.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p.theta, p.phi, p.radius));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rx_radius = None;
        let mut patches = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("rx_radius_um=") {
                        rx_radius = Some(v.parse::<f64>().map_err(|_| {
                            McError::Config(format!("bad rx_radius_um value: {v}"))
                        })?);
                    }
                }
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| McError::Config(format!("bad layout record: {line}")))?;
            if vals.len() != 3 {
                return Err(McError::Config(format!(
                    "layout record needs 3 fields, got {}",
                    vals.len()
                )));
            }
            patches.push(Ap {
                theta: vals[0],
                phi: vals[1],
                radius: vals[2],
            });
        }
        let rx_radius =
            rx_radius.ok_or_else(|| McError::Config("layout file missing rx_radius_um".into()))?;
        Self::new(rx_radius, patches)
    }
}

fn reduce_phi(phi: f64) -> f64 {
    let p = phi.rem_euclid(2.0 * PI);
    // rem_euclid can return 2 pi for tiny negative inputs
    if p >= 2.0 * PI {
        0.0
    } else {
        p
    }
}

/// Golden-ratio lattice angles for index `i` (1-based) out of `n`, with the
/// half-offset `B = (n - 1)/2` taken as an exact rational so even counts work
/// too.
fn fibonacci_angles(i: usize, n: usize) -> (f64, f64) {
    let b = (n as f64 - 1.0) / 2.0;
    let k = i as f64 - b - 1.0;
    let theta = PI / 2.0 - (2.0 * k / n as f64).asin();
    let phi = reduce_phi(4.0 * PI * k / (1.0 + 5.0f64.sqrt()));
    (theta, phi)
}

/// `n` equal patches evenly distributed over the whole sphere by the
/// Fibonacci lattice, with total coverage ratio `coverage`.
pub fn layout_fibonacci(rx_radius: f64, n: usize, coverage: f64) -> Result<ApLayout> {
    if n == 0 {
        return Err(McError::Layout("n must be >= 1".into()));
    }
    if coverage <= 0.0 {
        return Err(McError::Layout("coverage must be > 0".into()));
    }
    let a = 2.0 * rx_radius * (coverage / n as f64).sqrt();
    let patches = (1..=n)
        .map(|i| {
            let (theta, phi) = fibonacci_angles(i, n);
            Ap {
                theta,
                phi,
                radius: a,
            }
        })
        .collect();
    ApLayout::new(rx_radius, patches)
}

/// `n` equal patches with centres drawn uniformly on the sphere, re-drawn
/// until the non-overlap rule holds. Deterministic under `seed`.
pub fn layout_random(rx_radius: f64, n: usize, coverage: f64, seed: u64) -> Result<ApLayout> {
    if n == 0 {
        return Err(McError::Layout("n must be >= 1".into()));
    }
    let a = 2.0 * rx_radius * (coverage / n as f64).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let budget = 1000 * n;
    let mut attempts = 0usize;
    let mut placed: Vec<Ap> = Vec::with_capacity(n);
    while placed.len() < n {
        if attempts >= budget {
            return Err(McError::Layout(format!(
                "random placement budget exhausted after {attempts} draws; \
                 reduce coverage or the patch count"
            )));
        }
        attempts += 1;
        let cos_theta: f64 = rng.gen_range(-1.0..=1.0);
        let theta = cos_theta.acos();
        let phi = rng.gen_range(0.0..2.0 * PI);
        let cand = Ap {
            theta,
            phi,
            radius: a,
        };
        let ok = placed.iter().all(|p| {
            chord(p.center(rx_radius), cand.center(rx_radius)) >= p.radius + cand.radius
        });
        if ok {
            placed.push(cand);
        }
    }
    ApLayout::new(rx_radius, placed)
}

/// `n` equal patches evenly spaced inside the angular region
/// `theta_range x phi_range`, using the Fibonacci lattice remapped onto the
/// region's cos(theta) interval. Patch centres must lie in-region; discs may
/// straddle the boundary.
pub fn layout_region(
    rx_radius: f64,
    n: usize,
    coverage: f64,
    theta_range: (f64, f64),
    phi_range: (f64, f64),
) -> Result<ApLayout> {
    if n == 0 {
        return Err(McError::Layout("n must be >= 1".into()));
    }
    let (t0, t1) = theta_range;
    if !(0.0..=PI).contains(&t0) || !(0.0..=PI).contains(&t1) || t0 >= t1 {
        return Err(McError::Layout(format!(
            "theta range [{t0}, {t1}] must be an increasing sub-interval of [0, pi]"
        )));
    }
    let (p0, p1) = phi_range;
    if p0 < 0.0 || p1 > 2.0 * PI || p0 >= p1 {
        return Err(McError::Layout(format!(
            "phi range [{p0}, {p1}] must be an increasing sub-interval of [0, 2 pi]"
        )));
    }
    let a = 2.0 * rx_radius * (coverage / n as f64).sqrt();
    let (z_lo, z_hi) = (t1.cos(), t0.cos());
    let full_phi = (p1 - p0) >= 2.0 * PI - 1e-12;
    let patches: Vec<Ap> = (1..=n)
        .map(|i| {
            let b = (n as f64 - 1.0) / 2.0;
            let k = i as f64 - b - 1.0;
            // lattice z in (-1, 1) remapped to the region's cos-theta band
            let u = 0.5 * (2.0 * k / n as f64 + 1.0);
            let z = z_lo + u * (z_hi - z_lo);
            let golden = 4.0 * PI * k / (1.0 + 5.0f64.sqrt());
            let phi = if full_phi {
                reduce_phi(golden)
            } else {
                p0 + reduce_phi(golden) / (2.0 * PI) * (p1 - p0)
            };
            Ap {
                theta: z.acos(),
                phi,
                radius: a,
            }
        })
        .collect();
    ApLayout::new(rx_radius, patches).map_err(|e| match e {
        McError::Layout(msg) => McError::Layout(format!(
            "region too small for {n} patches at coverage {coverage}: {msg}"
        )),
        other => other,
    })
}

/// Validate an explicit list of `(theta, phi, radius)` patches.
pub fn layout_explicit(rx_radius: f64, patches: &[(f64, f64, f64)]) -> Result<ApLayout> {
    let patches = patches
        .iter()
        .map(|&(theta, phi, radius)| Ap {
            theta,
            phi,
            radius,
        })
        .collect();
    ApLayout::new(rx_radius, patches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_single_patch() {
        let l = layout_fibonacci(10.0, 1, 0.05).unwrap();
        let p = &l.patches()[0];
        assert!((p.theta - PI / 2.0).abs() < 1e-15);
        assert!(p.phi.abs() < 1e-15);
        assert!((p.radius - 2.0 * 10.0 * 0.05f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fibonacci_13_first_patch() {
        // direct evaluation of the lattice formula at i=1, B=6
        let l = layout_fibonacci(10.0, 13, 0.1).unwrap();
        let p = &l.patches()[0];
        assert!((p.theta - (PI / 2.0 + (12.0f64 / 13.0).asin())).abs() < 1e-13);
        assert!((p.theta - 2.7468015338900317).abs() < 1e-12);
        assert!((p.radius - 1.7541160386140584).abs() < 1e-12);
    }

    #[test]
    fn fibonacci_middle_patch_on_equator() {
        let l = layout_fibonacci(10.0, 3, 0.05).unwrap();
        assert!((l.patches()[1].theta - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_matches_request() {
        for &(n, cov) in &[(1usize, 0.05), (13, 0.1), (49, 0.15)] {
            let l = layout_fibonacci(10.0, n, cov).unwrap();
            assert!((l.coverage() - cov).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn random_layout_deterministic_under_seed() {
        let a = layout_random(10.0, 13, 0.1, 42).unwrap();
        let b = layout_random(10.0, 13, 0.1, 42).unwrap();
        assert_eq!(a.patches(), b.patches());
        let c = layout_random(10.0, 13, 0.1, 43).unwrap();
        assert_ne!(a.patches(), c.patches());
    }

    #[test]
    fn random_layout_area_uniform() {
        // mean of cos(theta) over many seeds should be 0 within 3 sigma
        let n_seeds = 1000;
        let mut sum = 0.0;
        let mut count = 0usize;
        for seed in 0..n_seeds {
            let l = layout_random(10.0, 13, 0.1, seed).unwrap();
            for p in l.patches() {
                sum += p.theta.cos();
                count += 1;
            }
        }
        let mean = sum / count as f64;
        // var of cos(theta) is 1/3 for uniform points
        let sigma = (1.0 / 3.0 / count as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean={mean} sigma={sigma}");
    }

    #[test]
    fn explicit_four_patch_setup() {
        // per-patch coverages 0.01..0.04 on the equator
        let r = 10.0;
        let radii: Vec<f64> = [0.01f64, 0.02, 0.03, 0.04]
            .iter()
            .map(|a| 2.0 * r * a.sqrt())
            .collect();
        let l = layout_explicit(
            r,
            &[
                (PI / 2.0, PI, radii[0]),
                (PI / 2.0, PI / 2.0, radii[1]),
                (PI / 2.0, 0.0, radii[2]),
                (PI / 2.0, 3.0 * PI / 2.0, radii[3]),
            ],
        )
        .unwrap();
        assert!((l.coverage() - 0.1).abs() < 1e-12);
        assert!((radii[0] - 2.0).abs() < 1e-12);
        assert!((radii[3] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_patches_rejected() {
        let err = layout_explicit(10.0, &[(1.0, 1.0, 2.0), (1.0, 1.0, 2.0)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0") && msg.contains("1"), "{msg}");
    }

    #[test]
    fn region_full_sphere_matches_fibonacci_z_spacing() {
        let reg = layout_region(10.0, 13, 0.1, (0.0, PI), (0.0, 2.0 * PI)).unwrap();
        let fib = layout_fibonacci(10.0, 13, 0.1).unwrap();
        // same azimuths; z remapped onto [-1, 1] (offset by half a cell
        // relative to the open-interval lattice)
        for (a, b) in reg.patches().iter().zip(fib.patches()) {
            assert!((a.phi - b.phi).abs() < 1e-12);
        }
        assert_eq!(reg.len(), fib.len());
    }

    #[test]
    fn region_40_percent_cap_valid() {
        // polar cap with 40% of the surface area: cos(theta) in [0.2, 1]
        let t_max = 0.2f64.acos();
        let l = layout_region(10.0, 13, 0.1, (0.0, t_max), (0.0, 2.0 * PI)).unwrap();
        assert_eq!(l.len(), 13);
        for p in l.patches() {
            assert!(p.theta <= t_max + 1e-12);
        }
    }

    #[test]
    fn region_beyond_pi_rejected() {
        // the documented band [2.812, 3.471] exceeds pi and cannot be a
        // polar-angle interval
        assert!(layout_region(10.0, 13, 0.1, (2.812, 3.471), (0.0, 2.0 * PI)).is_err());
    }

    #[test]
    fn text_round_trip() {
        let l = layout_fibonacci(10.0, 7, 0.05).unwrap();
        let back = ApLayout::from_text(&l.to_text()).unwrap();
        assert_eq!(l.patches(), back.patches());
        assert_eq!(l.rx_radius(), back.rx_radius());
    }
}
