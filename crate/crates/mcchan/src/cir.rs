//! Analytic channel impulse responses: hitting rate h(t) and cumulative
//! absorbed fraction H(t) for a fully absorbing receiver, a patchy receiver
//! homogenized to a uniform reaction rate, a spherical-shell release, and a
//! membrane-fusion transmitter driving the shell response through its vesicle
//! release-rate series.

use crate::error::{McError, Result};
use crate::geometry::ApLayout;
use crate::homogenization::{self, EffectiveRate};
use crate::numerics::{self, erfc, erfcx, exp_erfc, integrate, QuadratureSpec};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Diffusion-channel parameters. Lengths in um, times in s.
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    /// Receiver radius r_R, um.
    pub r_rx: f64,
    /// Transmitter-to-receiver centre distance r_0, um.
    pub r_0: f64,
    /// Molecule diffusion coefficient, um^2/s.
    pub d_sigma: f64,
    /// First-order degradation rate, 1/s.
    pub k_d: f64,
}

impl Default for ChannelParams {
    /// Reference parameter set used by the bundled experiments.
    fn default() -> Self {
        Self {
            r_rx: 10.0,
            r_0: 20.0,
            d_sigma: 79.4,
            k_d: 0.8,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_rx > 0.0 && self.r_0 > self.r_rx) {
            return Err(McError::Domain(format!(
                "need r_0 > r_R > 0, got r_R = {}, r_0 = {}",
                self.r_rx, self.r_0
            )));
        }
        if !(self.d_sigma > 0.0) {
            return Err(McError::Domain("D_sigma must be > 0".into()));
        }
        if !(self.k_d >= 0.0) {
            return Err(McError::Domain("k_d must be >= 0".into()));
        }
        Ok(())
    }

    /// epsilon = (r_0 - r_R)/sqrt(4 D), s^(1/2).
    fn eps(&self) -> f64 {
        (self.r_0 - self.r_rx) / (4.0 * self.d_sigma).sqrt()
    }

    /// beta = (r_0 - r_R) sqrt(k_d/D).
    fn beta(&self) -> f64 {
        (self.r_0 - self.r_rx) * (self.k_d / self.d_sigma).sqrt()
    }

    fn gamma(&self, w: f64) -> f64 {
        (w * self.r_rx + self.d_sigma) / (self.d_sigma * self.r_rx)
    }

    fn zeta(&self, w: f64) -> f64 {
        let g = self.gamma(w);
        g * g * self.d_sigma - self.k_d
    }

    fn varpi(&self, w: f64) -> f64 {
        self.gamma(w) * self.d_sigma.sqrt()
    }

    /// Nudge `w` off the measure-zero coincidence zeta(w) = 0, which several
    /// cumulative formulas divide by.
    fn dezeta(&self, w: f64) -> f64 {
        let g = self.gamma(w);
        if self.zeta(w).abs() < 1e-9 * g * g * self.d_sigma {
            w * (1.0 + 1e-6)
        } else {
            w
        }
    }
}

/// Transmitter description.
#[derive(Debug, Clone, Copy)]
pub enum TxSpec {
    /// Instantaneous point release of `n_sigma` molecules.
    Point { n_sigma: u64 },
    /// Spherical transmitter releasing `n_v` vesicles of `eta` molecules each
    /// from its centre; vesicles diffuse with `d_v` and fuse irreversibly
    /// with the membrane at rate `k_f`.
    MembraneFusion {
        /// Transmitter radius, um.
        r_t: f64,
        /// Vesicle diffusion coefficient, um^2/s.
        d_v: f64,
        /// Forward fusion rate, um/s.
        k_f: f64,
        n_v: u64,
        eta: u64,
    },
}

impl TxSpec {
    pub fn default_point() -> Self {
        TxSpec::Point { n_sigma: 1000 }
    }

    pub fn default_mf() -> Self {
        TxSpec::MembraneFusion {
            r_t: 5.0,
            d_v: 9.0,
            k_f: 30.0,
            n_v: 200,
            eta: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TxSpec::Point { n_sigma } => {
                if n_sigma < 1 {
                    return Err(McError::Domain("n_sigma must be >= 1".into()));
                }
            }
            TxSpec::MembraneFusion {
                r_t,
                d_v,
                k_f,
                n_v,
                eta,
            } => {
                if !(r_t > 0.0 && d_v > 0.0 && k_f > 0.0) {
                    return Err(McError::Domain(
                        "membrane-fusion TX needs positive r_T, D_v, k_f".into(),
                    ));
                }
                if n_v < 1 || eta < 1 {
                    return Err(McError::Domain("vesicle counts must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Total molecules released per transmission.
    pub fn total_molecules(&self) -> u64 {
        match *self {
            TxSpec::Point { n_sigma } => n_sigma,
            TxSpec::MembraneFusion { n_v, eta, .. } => n_v * eta,
        }
    }
}

fn check_shell_geometry(p: &ChannelParams, r_t: f64) -> Result<()> {
    if r_t + p.r_rx >= 0.9 * p.r_0 {
        return Err(McError::Domain(format!(
            "shell formulas need r_T + r_R < 0.9 r_0; got {} + {} vs 0.9 * {}",
            r_t, p.r_rx, p.r_0
        )));
    }
    Ok(())
}

/// How a CIR series was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Simulated { seed: u64 },
}

/// Hitting rate and cumulative absorbed fraction on a time grid, per released
/// molecule.
#[derive(Debug, Clone)]
pub struct CirSeries {
    /// Time grid, s.
    pub time: Vec<f64>,
    /// Expected hitting rate h(t), 1/s.
    pub hitting_rate: Vec<f64>,
    /// Expected absorbed fraction H(t).
    pub cumulative: Vec<f64>,
    /// Asymptotic absorbed fraction.
    pub h_inf: f64,
    pub provenance: Provenance,
    /// Series truncation, where a series was involved.
    pub truncation: Option<usize>,
    pub label: String,
}

impl CirSeries {
    /// CSV with one `# key=value` header line per metadata entry.
    pub fn to_csv(&self, metadata: &[(&str, String)]) -> String {
        let mut out = String::from("# cir-csv v1\n");
        out.push_str(&format!("# label={}\n", self.label));
        out.push_str(&format!("# h_inf={:.17e}\n", self.h_inf));
        if let Some(n) = self.truncation {
            out.push_str(&format!("# truncation={n}\n"));
        }
        if let Provenance::Simulated { seed } = self.provenance {
            out.push_str(&format!("# seed={seed}\n"));
        }
        for (k, v) in metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str("time_s,hitting_rate_per_s,cumulative_fraction\n");
        for i in 0..self.time.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e}\n",
                self.time[i], self.hitting_rate[i], self.cumulative[i]
            ));
        }
        out
    }
}

/// Logarithmic default grid resolving the CIR peak: 400 points on
/// [1e-3, 10] s.
pub fn default_time_grid() -> Vec<f64> {
    let (lo, hi, n) = (1e-3f64, 10.0f64, 400);
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn map_grid<F>(grid: &[f64], f: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        grid.par_iter().map(|&t| f(t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.iter().map(|&t| f(t)).collect()
    }
}

/// Hitting rate at a uniform-reaction-rate receiver, point release.
pub fn h_uniform(t: f64, w: f64, p: &ChannelParams) -> Result<f64> {
    p.validate()?;
    if !(t > 0.0) || w < 0.0 {
        return Err(McError::Domain("h_uniform needs t > 0, w >= 0".into()));
    }
    if w == 0.0 {
        return Ok(0.0);
    }
    let eps = p.eps();
    let g = p.gamma(w);
    let st = t.sqrt();
    // the reflected term's exponent gamma dr + zeta t - (eps/sqrt(t) +
    // gamma sqrt(D t))^2 collapses algebraically to -eps^2/t - k_d t; using
    // the collapsed form avoids cancellation between ~1e9-sized exponents at
    // large w
    let common = (-eps * eps / t - p.k_d * t).exp();
    let bracket = 1.0 / (std::f64::consts::PI * p.d_sigma * t).sqrt()
        - g * erfcx(eps / st + g * (p.d_sigma * t).sqrt());
    Ok(p.r_rx * w / p.r_0 * common * bracket)
}

/// Cumulative absorbed fraction for the uniform-rate receiver, point release.
pub fn h_uniform_cum(t: f64, w: f64, p: &ChannelParams) -> Result<f64> {
    p.validate()?;
    if !(t > 0.0) || w < 0.0 {
        return Err(McError::Domain("h_uniform_cum needs t > 0, w >= 0".into()));
    }
    if w == 0.0 {
        return Ok(0.0);
    }
    let w = p.dezeta(w);
    let eps = p.eps();
    let g = p.gamma(w);
    let st = t.sqrt();
    // every exponential-erfc product here shares the exact collapsed
    // exponent -eps^2/t - k_d t (see h_uniform)
    let common = (-eps * eps / t - p.k_d * t).exp();
    if p.k_d == 0.0 {
        // k_d -> 0 limit of the closed form; the generic expression divides
        // by sqrt(k_d). Written all-erfcx so the small-t bracket keeps full
        // relative precision: erfc(eps/st) = common * erfcx(eps/st) here.
        let bracket = common
            * (erfcx(eps / st) - erfcx(eps / st + g * (p.d_sigma * t).sqrt()));
        return Ok(p.r_rx * w / (p.r_0 * g * p.d_sigma) * bracket);
    }
    let zeta = p.zeta(w);
    let skt = (p.k_d * t).sqrt();
    let u_minus = eps / st - skt;
    // exp(-beta) erfc(u_minus) == common * erfcx(u_minus) exactly; the
    // second form keeps every term on the common * erfcx scale so nothing
    // O(1) has to cancel at small t. For u_minus < 0 erfcx grows like
    // 2 exp(u^2), so fall back to the erfc form there (no cancellation risk
    // once t is large enough to make u_minus negative).
    let c_erfcx_um = if u_minus >= 0.0 {
        common * erfcx(u_minus)
    } else {
        (-p.beta()).exp() * erfc(u_minus)
    };
    let x_kd = common * erfcx(eps / st + skt);
    let x_g = common * erfcx(eps / st + g * (p.d_sigma * t).sqrt());
    let alpha1 = (c_erfcx_um - x_kd) / (2.0 * (p.k_d * p.d_sigma).sqrt());
    let gd = g * g * (p.d_sigma / p.k_d).sqrt();
    // the +- g exp(-beta) / zeta pieces of the textbook grouping cancel
    // exactly, leaving only terms that vanish with t
    let alpha2 = (2.0 * g * x_g + (gd - g) * c_erfcx_um - (gd + g) * x_kd) / (2.0 * zeta);
    Ok(p.r_rx * w / p.r_0 * (alpha1 - alpha2))
}

/// Asymptotic absorbed fraction for the uniform-rate receiver.
pub fn h_uniform_inf(w: f64, p: &ChannelParams) -> Result<f64> {
    p.validate()?;
    if w < 0.0 {
        return Err(McError::Domain("w must be >= 0".into()));
    }
    // factored form without the removable zeta singularity:
    // r_R w exp(-beta) / (r_0 D (gamma + sqrt(k_d/D)))
    let g = p.gamma(w);
    let root = (p.k_d / p.d_sigma).sqrt();
    Ok(p.r_rx * w * (-p.beta()).exp() / (p.r_0 * p.d_sigma * (g + root)))
}

/// Hitting rate at a fully absorbing receiver, point release.
pub fn h_fully_absorbing(t: f64, p: &ChannelParams) -> Result<f64> {
    p.validate()?;
    if !(t > 0.0) {
        return Err(McError::Domain("t must be > 0".into()));
    }
    let dr = p.r_0 - p.r_rx;
    Ok(p.r_rx / p.r_0 * dr / (4.0 * std::f64::consts::PI * p.d_sigma * t.powi(3)).sqrt()
        * (-dr * dr / (4.0 * p.d_sigma * t) - p.k_d * t).exp())
}

/// Cumulative absorbed fraction at a fully absorbing receiver.
pub fn h_fully_absorbing_cum(t: f64, p: &ChannelParams) -> Result<f64> {
    p.validate()?;
    if !(t > 0.0) {
        return Err(McError::Domain("t must be > 0".into()));
    }
    let eps = p.eps();
    let st = t.sqrt();
    if p.k_d == 0.0 {
        return Ok(p.r_rx / p.r_0 * erfc(eps / st));
    }
    let beta = p.beta();
    let skt = (p.k_d * t).sqrt();
    Ok(p.r_rx / p.r_0
        * 0.5
        * ((-beta).exp() * erfc(eps / st - skt) + exp_erfc(beta, eps / st + skt)?))
}

/// Asymptotic fraction at a fully absorbing receiver: (r_R/r_0) exp(-beta).
pub fn h_fully_absorbing_inf(p: &ChannelParams) -> Result<f64> {
    p.validate()?;
    Ok(p.r_rx / p.r_0 * (-p.beta()).exp())
}

/// xi_1 term of the shell-release hitting rate, evaluated through the scaled
/// complementary error function.
fn xi1(t: f64, z: f64, w: f64, p: &ChannelParams) -> Result<f64> {
    // gamma z + zeta t - (varpi sqrt(t) + z/sqrt(4 D t))^2 collapses to
    // -k_d t - z^2/(4 D t) exactly
    let v = z / (4.0 * p.d_sigma * t).sqrt();
    Ok((-p.k_d * t - v * v).exp() * erfcx(p.varpi(w) * t.sqrt() + v))
}

/// xi_2 term of the shell-release cumulative fraction (k_d > 0 form).
fn xi2(t: f64, z: f64, w: f64, p: &ChannelParams) -> Result<f64> {
    let g = p.gamma(w);
    let varpi = p.varpi(w);
    let v = z / (4.0 * p.d_sigma * t).sqrt();
    // both exponential-erfc products collapse to the exact exponent
    // -k_d t - z^2/(4 D t)
    let common = (-p.k_d * t - v * v).exp();
    if p.k_d == 0.0 {
        // k_d -> 0 limit (the generic form divides by sqrt(k_d)); derived by
        // series expansion, checked against k_d = 1e-6 in the tests
        return Ok(common * erfcx(v + varpi * t.sqrt()) - (1.0 + g * z) * erfc(v)
            + 2.0 * varpi * t.sqrt() / std::f64::consts::PI.sqrt() * (-v * v).exp());
    }
    let skd = p.k_d.sqrt();
    let s = (p.k_d / p.d_sigma).sqrt();
    let skt = (p.k_d * t).sqrt();
    let c_minus = (varpi - skd) / (2.0 * skd);
    let c_plus = (varpi + skd) / (2.0 * skd);
    let e1 = common * erfcx(v + varpi * t.sqrt());
    let em = (-z * s).exp();
    Ok(e1 - c_minus * em * (1.0 - erfc(v - skt))
        + c_plus * (em - common * erfcx(v + skt))
        - em)
}

/// Hitting rate at the homogenized receiver when molecules start uniformly
/// distributed on a shell of radius `r_t` centred at distance r_0.
pub fn h_shell(t: f64, w_e: f64, p: &ChannelParams, r_t: f64) -> Result<f64> {
    p.validate()?;
    check_shell_geometry(p, r_t)?;
    if !(t > 0.0) {
        return Err(McError::Domain("t must be > 0".into()));
    }
    let z_minus = p.r_0 - r_t - p.r_rx;
    let z_plus = p.r_0 + r_t - p.r_rx;
    Ok(p.r_rx * w_e / (2.0 * r_t * p.r_0)
        * (xi1(t, z_minus, w_e, p)? - xi1(t, z_plus, w_e, p)?))
}

/// Cumulative absorbed fraction for the shell release.
pub fn h_shell_cum(t: f64, w_e: f64, p: &ChannelParams, r_t: f64) -> Result<f64> {
    p.validate()?;
    check_shell_geometry(p, r_t)?;
    if !(t > 0.0) {
        return Err(McError::Domain("t must be > 0".into()));
    }
    let w_e = p.dezeta(w_e);
    let z_minus = p.r_0 - r_t - p.r_rx;
    let z_plus = p.r_0 + r_t - p.r_rx;
    let denom = if p.k_d == 0.0 {
        let g = p.gamma(w_e);
        g * g * p.d_sigma
    } else {
        p.zeta(w_e)
    };
    Ok(p.r_rx * w_e / (2.0 * r_t * p.r_0 * denom)
        * (xi2(t, z_minus, w_e, p)? - xi2(t, z_plus, w_e, p)?))
}

/// Vesicle release series and the end-to-end membrane-fusion channel.
#[derive(Debug, Clone)]
pub struct MfChannel {
    pub p: ChannelParams,
    pub w_e: f64,
    pub r_t: f64,
    pub d_v: f64,
    pub k_f: f64,
    /// Eigenvalues lambda_n, 1/um.
    lambdas: Vec<f64>,
    /// lambda^3 j0(lambda r_T) / (2 lambda r_T - sin 2 lambda r_T).
    coefs: Vec<f64>,
    /// Release onset cutoff, s: below it the release probability is bounded
    /// by exp(-r_T^2/(4 D_v t)) < 4e-44 and treated as zero.
    pub t_cut: f64,
    pub truncation: usize,
}

impl MfChannel {
    pub fn new(p: &ChannelParams, w_e: f64, tx: &TxSpec, n_max: usize) -> Result<Self> {
        p.validate()?;
        tx.validate()?;
        let (r_t, d_v, k_f) = match *tx {
            TxSpec::MembraneFusion { r_t, d_v, k_f, .. } => (r_t, d_v, k_f),
            TxSpec::Point { .. } => {
                return Err(McError::Domain(
                    "MfChannel requires a membrane-fusion transmitter".into(),
                ))
            }
        };
        check_shell_geometry(p, r_t)?;
        if n_max < 35 {
            // with fewer terms the series validity window no longer overlaps
            // the sub-t_cut boundary layer
            return Err(McError::Accuracy(
                "membrane-fusion series needs n_max >= 35".into(),
            ));
        }
        let eig = numerics::solve_eigenvalues(r_t, d_v, k_f, n_max, 1e-8)?;
        let coefs: Vec<f64> = eig
            .roots
            .iter()
            .map(|&l| {
                let x = l * r_t;
                l.powi(3) * (x.sin() / x) / (2.0 * x - (2.0 * x).sin())
            })
            .collect();
        // exp(-r_T^2/(4 D_v t_cut)) = exp(-100)
        let t_cut = r_t * r_t / (400.0 * d_v);
        Ok(Self {
            p: *p,
            w_e: p.dezeta(w_e),
            r_t,
            d_v,
            k_f,
            lambdas: eig.roots,
            coefs,
            t_cut,
            truncation: n_max,
        })
    }

    /// Release-rate density f_r(t), 1/s: probability density that a vesicle
    /// released from the TX centre at t=0 fuses at time t.
    pub fn release_rate(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(McError::Domain("t must be > 0".into()));
        }
        if t <= self.t_cut {
            return Ok(0.0);
        }
        let scale = 4.0 * self.r_t * self.r_t * self.k_f;
        let mut sum = 0.0;
        for (l, c) in self.lambdas.iter().zip(&self.coefs) {
            sum += c * (-self.d_v * l * l * t).exp();
        }
        // geometric bound on the omitted tail
        let l_next = (self.truncation as f64 + 0.5) * std::f64::consts::PI / self.r_t;
        let tail = l_next / (2.0 * self.r_t * self.r_t) * (-self.d_v * l_next * l_next * t).exp()
            / (1.0 - (-2.0 * self.d_v * l_next * t * std::f64::consts::PI / self.r_t).exp());
        if tail.abs() > 1e-9 * sum.abs().max(1e-30) + 1e-12 {
            return Err(McError::Accuracy(format!(
                "release series not converged at t = {t}: tail bound {tail:e}; \
                 raise n_max"
            )));
        }
        Ok(scale * sum)
    }

    /// Fraction of vesicles fused by time t.
    pub fn release_cum(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(McError::Domain("t must be > 0".into()));
        }
        if t <= self.t_cut {
            return Ok(0.0);
        }
        // term-wise integral of the release series over [t_cut, t]
        let scale = 4.0 * self.r_t * self.r_t * self.k_f;
        let mut sum = 0.0;
        for (l, c) in self.lambdas.iter().zip(&self.coefs) {
            let a = self.d_v * l * l;
            sum += c / a * ((-a * self.t_cut).exp() - (-a * t).exp());
        }
        Ok(scale * sum)
    }

    /// Total release probability integral(f_r) over all time; equals 1 up to
    /// truncation error for an irreversible fusion reaction.
    pub fn release_total(&self) -> f64 {
        let scale = 4.0 * self.r_t * self.r_t * self.k_f;
        let mut sum = 0.0;
        for (l, c) in self.lambdas.iter().zip(&self.coefs) {
            let a = self.d_v * l * l;
            sum += c / a * (-a * self.t_cut).exp();
        }
        scale * sum
    }

    /// Per-eigenvalue time integral over [t_cut, t] of
    /// exp(-D_v lambda^2 u) * f(t - u), with the integrand's exponential
    /// window truncated once it has decayed by exp(-60).
    fn mode_integral<F>(&self, n: usize, t: f64, f: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let a = self.d_v * self.lambdas[n] * self.lambdas[n];
        let u_hi = t.min(self.t_cut + 60.0 / a);
        if u_hi <= self.t_cut {
            return Ok(0.0);
        }
        let k = (-a * self.t_cut).exp();
        if k == 0.0 {
            return Ok(0.0);
        }
        let spec = QuadratureSpec {
            rel_tol: 1e-9,
            abs_tol: 1e-16,
            max_subdivisions: 80,
        };
        let res = integrate(
            |u| {
                let tau = t - u;
                if tau <= 0.0 {
                    return 0.0;
                }
                match f(tau) {
                    Ok(v) => (-a * (u - self.t_cut)).exp() * v,
                    Err(_) => f64::NAN,
                }
            },
            self.t_cut,
            u_hi,
            &spec,
        )?;
        if res.value.is_nan() {
            return Err(McError::Accuracy(
                "non-finite integrand in the membrane-fusion mode integral".into(),
            ));
        }
        Ok(k * res.value)
    }

    fn series<F>(&self, t: f64, f: &F) -> Result<f64>
    where
        F: Fn(f64, f64) -> Result<f64>,
    {
        let z_minus = self.p.r_0 - self.r_t - self.p.r_rx;
        let z_plus = self.p.r_0 + self.r_t - self.p.r_rx;
        let mut sum = 0.0;
        let mut abs_sum = 0.0;
        for n in 0..self.lambdas.len() {
            let a = self.d_v * self.lambdas[n] * self.lambdas[n];
            if self.coefs[n].abs() * (-a * self.t_cut).exp() < 1e-18 * self.coefs[0].abs() {
                break;
            }
            let jm = self.mode_integral(n, t, |tau| f(tau, z_minus))?;
            let jp = self.mode_integral(n, t, |tau| f(tau, z_plus))?;
            let term = self.coefs[n] * (jm - jp);
            sum += term;
            abs_sum += term.abs();
        }
        // Shortly after t_cut the alternating mode terms cancel by many orders
        // of magnitude (the release density is still deep in its boundary
        // layer), so the per-mode quadrature errors can dominate the sum. In
        // that regime integrate the convolution directly: the modes then
        // cancel pointwise in u before the quadrature sees them.
        if abs_sum * 1e-9 > 1e-6 * sum.abs() {
            sum = self.series_direct(t, f, z_minus, z_plus, sum.abs())?;
        }
        Ok(sum)
    }

    fn series_direct<F>(&self, t: f64, f: &F, z_minus: f64, z_plus: f64, scale: f64) -> Result<f64>
    where
        F: Fn(f64, f64) -> Result<f64>,
    {
        let g = |u: f64| -> f64 {
            let mut s = 0.0;
            for (l, c) in self.lambdas.iter().zip(&self.coefs) {
                s += c * (-self.d_v * l * l * u).exp();
            }
            s
        };
        let spec = QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: (scale * 1e-9).max(1e-300),
            max_subdivisions: 2000,
        };
        let res = integrate(
            |u| {
                let tau = t - u;
                if tau <= 0.0 {
                    return 0.0;
                }
                match (f(tau, z_minus), f(tau, z_plus)) {
                    (Ok(vm), Ok(vp)) => g(u) * (vm - vp),
                    _ => f64::NAN,
                }
            },
            self.t_cut,
            t,
            &spec,
        )?;
        if res.value.is_nan() {
            return Err(McError::Accuracy(
                "non-finite integrand in the membrane-fusion convolution".into(),
            ));
        }
        Ok(res.value)
    }

    /// End-to-end hitting rate h_MF(t), 1/s per released molecule.
    pub fn hitting_rate(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(McError::Domain("t must be > 0".into()));
        }
        if t <= self.t_cut {
            return Ok(0.0);
        }
        let pre = 2.0 * self.r_t * self.p.r_rx * self.k_f * self.w_e / self.p.r_0;
        Ok(pre * self.series(t, &|tau, z| xi1(tau, z, self.w_e, &self.p))?)
    }

    /// End-to-end cumulative absorbed fraction H_MF(t).
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(McError::Domain("t must be > 0".into()));
        }
        if t <= self.t_cut {
            return Ok(0.0);
        }
        let denom = if self.p.k_d == 0.0 {
            let g = self.p.gamma(self.w_e);
            g * g * self.p.d_sigma
        } else {
            self.p.zeta(self.w_e)
        };
        let pre = 2.0 * self.r_t * self.p.r_rx * self.k_f * self.w_e / (self.p.r_0 * denom);
        Ok(pre * self.series(t, &|tau, z| xi2(tau, z, self.w_e, &self.p))?)
    }

    /// Asymptotic absorbed fraction, factored to avoid the removable
    /// zeta = 0 and k_d = 0 singularities of the direct expression.
    pub fn cumulative_inf(&self) -> f64 {
        let p = &self.p;
        if p.k_d == 0.0 {
            return p.r_rx * p.r_rx * self.w_e / (p.r_0 * (self.w_e * p.r_rx + p.d_sigma));
        }
        let s = (p.k_d / p.d_sigma).sqrt();
        let z_minus = p.r_0 - self.r_t - p.r_rx;
        let skd = p.k_d.sqrt();
        p.r_rx * self.w_e / (2.0 * self.r_t * p.r_0 * skd * (p.varpi(self.w_e) + skd))
            * (-((-z_minus * s).exp()) * (-2.0 * self.r_t * s).exp_m1())
    }
}

/// Point TX, fully absorbing RX baseline on a time grid.
pub fn cir_ptfr(grid: &[f64], p: &ChannelParams) -> Result<CirSeries> {
    let hitting_rate = map_grid(grid, |t| h_fully_absorbing(t, p))?;
    let cumulative = map_grid(grid, |t| h_fully_absorbing_cum(t, p))?;
    Ok(CirSeries {
        time: grid.to_vec(),
        hitting_rate,
        cumulative,
        h_inf: h_fully_absorbing_inf(p)?,
        provenance: Provenance::Analytic,
        truncation: None,
        label: "ptfr".into(),
    })
}

pub fn rate_for_layout(layout: &ApLayout, p: &ChannelParams) -> Result<EffectiveRate> {
    let cap = if layout.len() == 1 {
        homogenization::capacitance_single(layout.rx_radius(), layout.patches()[0].radius)?
    } else if layout.identical_sizes() {
        homogenization::capacitance_identical(layout)?
    } else {
        homogenization::capacitance_general(layout)?
    };
    homogenization::effective_rate(&cap, p.d_sigma, p.r_rx)
}

/// Point TX, patch-covered RX: homogenize the layout, then evaluate the
/// uniform-rate formulas at the effective rate.
pub fn cir_point_ap(grid: &[f64], layout: &ApLayout, p: &ChannelParams) -> Result<CirSeries> {
    if (layout.rx_radius() - p.r_rx).abs() > 1e-12 * p.r_rx {
        return Err(McError::Domain(
            "layout and channel disagree on the RX radius".into(),
        ));
    }
    let w_e = rate_for_layout(layout, p)?.w_e;
    let hitting_rate = map_grid(grid, |t| h_uniform(t, w_e, p))?;
    let cumulative = map_grid(grid, |t| h_uniform_cum(t, w_e, p))?;
    Ok(CirSeries {
        time: grid.to_vec(),
        hitting_rate,
        cumulative,
        h_inf: h_uniform_inf(w_e, p)?,
        provenance: Provenance::Analytic,
        truncation: None,
        label: "ptar".into(),
    })
}

/// Membrane-fusion TX, patch-covered RX.
pub fn cir_mf_ap(
    grid: &[f64],
    layout: &ApLayout,
    p: &ChannelParams,
    tx: &TxSpec,
    n_max: usize,
) -> Result<CirSeries> {
    if (layout.rx_radius() - p.r_rx).abs() > 1e-12 * p.r_rx {
        return Err(McError::Domain(
            "layout and channel disagree on the RX radius".into(),
        ));
    }
    let w_e = rate_for_layout(layout, p)?.w_e;
    let ch = MfChannel::new(p, w_e, tx, n_max)?;
    let hitting_rate = map_grid(grid, |t| ch.hitting_rate(t))?;
    let cumulative = map_grid(grid, |t| ch.cumulative(t))?;
    Ok(CirSeries {
        time: grid.to_vec(),
        hitting_rate,
        cumulative,
        h_inf: ch.cumulative_inf(),
        provenance: Provenance::Analytic,
        truncation: Some(n_max),
        label: "mtar".into(),
    })
}
