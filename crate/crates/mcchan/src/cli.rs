//! Batch reproduction surface: named experiments that write CSVs, a plot
//! script, and a run manifest. Configuration comes from an optional
//! `key = value` file plus `--set` overrides; unknown keys are rejected.

use crate::cir::{self, ChannelParams, TxSpec};
use crate::comms::{self, ChannelIncrements, ProtocolSpec};
use crate::error::{McError, Result};
use crate::geometry::{self, ApLayout};
use crate::homogenization;
use crate::sim::{self, RxSpec, SimConfig, TxPlacement};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Resolved experiment parameters. Units: lengths in micrometres, times in
/// seconds, diffusion in um^2/s, rates in 1/s (k_f in um/s).
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    // channel
    pub r_rx: f64,
    pub r_0: f64,
    pub d_sigma: f64,
    pub k_d: f64,
    // transmitter
    pub tx: String,
    pub n_sigma: u64,
    pub r_t: f64,
    pub d_v: f64,
    pub k_f: f64,
    pub n_v: u64,
    pub eta: u64,
    pub n_max: usize,
    // layout
    pub layout: String,
    pub n_p: usize,
    pub coverage: f64,
    pub layout_seed: u64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub layout_file: String,
    // particle simulation
    pub dt: f64,
    pub dt_tx: f64,
    pub horizon: f64,
    pub realizations: usize,
    pub particles: usize,
    pub bins: usize,
    pub seed: u64,
    pub placement: String,
    pub tx_theta: f64,
    pub tx_phi: f64,
    pub rx_model: String,
    // protocol
    pub q_bits: usize,
    pub t_b: f64,
    pub p0: f64,
    pub p1: f64,
    // sweeps
    pub n_p_list: Vec<usize>,
    pub coverage_list: Vec<f64>,
    pub t_b_list: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = ChannelParams::default();
        Self {
            r_rx: p.r_rx,
            r_0: p.r_0,
            d_sigma: p.d_sigma,
            k_d: p.k_d,
            tx: "point".into(),
            n_sigma: 1000,
            r_t: 5.0,
            d_v: 9.0,
            k_f: 30.0,
            n_v: 200,
            eta: 5,
            n_max: 100,
            layout: "fibonacci".into(),
            n_p: 13,
            coverage: 0.1,
            layout_seed: 1,
            theta_min: 0.0,
            theta_max: 1.369438406004566, // polar cap holding 40% of the area
            phi_min: 0.0,
            phi_max: std::f64::consts::TAU,
            layout_file: String::new(),
            dt: 1e-4,
            dt_tx: 1e-5,
            horizon: 2.0,
            realizations: 200,
            particles: 1000,
            bins: 200,
            seed: 1,
            placement: "random".into(),
            tx_theta: 0.0,
            tx_phi: 0.0,
            rx_model: "patches".into(),
            q_bits: 10,
            t_b: 0.8,
            p0: 0.5,
            p1: 0.5,
            n_p_list: (1..=30).collect(),
            coverage_list: vec![0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4],
            t_b_list: vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0],
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| McError::Config(format!("bad value {value:?} for key {key:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse(key, v))
        .collect::<Result<Vec<T>>>()
}

impl ExperimentConfig {
    /// Apply one `key = value` assignment; unknown keys are rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim();
        let v = value.trim();
        match k {
            "r_rx" => self.r_rx = parse(k, v)?,
            "r_0" => self.r_0 = parse(k, v)?,
            "d_sigma" => self.d_sigma = parse(k, v)?,
            "k_d" => self.k_d = parse(k, v)?,
            "tx" => self.tx = v.into(),
            "n_sigma" => self.n_sigma = parse(k, v)?,
            "r_t" => self.r_t = parse(k, v)?,
            "d_v" => self.d_v = parse(k, v)?,
            "k_f" => self.k_f = parse(k, v)?,
            "n_v" => self.n_v = parse(k, v)?,
            "eta" => self.eta = parse(k, v)?,
            "n_max" => self.n_max = parse(k, v)?,
            "layout" => self.layout = v.into(),
            "n_p" => self.n_p = parse(k, v)?,
            "coverage" => self.coverage = parse(k, v)?,
            "layout_seed" => self.layout_seed = parse(k, v)?,
            "theta_min" => self.theta_min = parse(k, v)?,
            "theta_max" => self.theta_max = parse(k, v)?,
            "phi_min" => self.phi_min = parse(k, v)?,
            "phi_max" => self.phi_max = parse(k, v)?,
            "layout_file" => self.layout_file = v.into(),
            "dt" => self.dt = parse(k, v)?,
            "dt_tx" => self.dt_tx = parse(k, v)?,
            "horizon" => self.horizon = parse(k, v)?,
            "realizations" => self.realizations = parse(k, v)?,
            "particles" => self.particles = parse(k, v)?,
            "bins" => self.bins = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "placement" => self.placement = v.into(),
            "tx_theta" => self.tx_theta = parse(k, v)?,
            "tx_phi" => self.tx_phi = parse(k, v)?,
            "rx_model" => self.rx_model = v.into(),
            "q_bits" => self.q_bits = parse(k, v)?,
            "t_b" => self.t_b = parse(k, v)?,
            "p0" => self.p0 = parse(k, v)?,
            "p1" => self.p1 = parse(k, v)?,
            "n_p_list" => self.n_p_list = parse_list(k, v)?,
            "coverage_list" => self.coverage_list = parse_list(k, v)?,
            "t_b_list" => self.t_b_list = parse_list(k, v)?,
            _ => return Err(McError::Config(format!("unknown config key {k:?}"))),
        }
        Ok(())
    }

    /// Parse a config file of `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                McError::Config(format!("line {}: expected key = value", i + 1))
            })?;
            self.apply(k, v)?;
        }
        Ok(())
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            r_rx: self.r_rx,
            r_0: self.r_0,
            d_sigma: self.d_sigma,
            k_d: self.k_d,
        }
    }

    pub fn mf_tx(&self) -> TxSpec {
        TxSpec::MembraneFusion {
            r_t: self.r_t,
            d_v: self.d_v,
            k_f: self.k_f,
            n_v: self.n_v,
            eta: self.eta,
        }
    }

    pub fn protocol(&self) -> ProtocolSpec {
        ProtocolSpec {
            q: self.q_bits,
            t_b: self.t_b,
            p0: self.p0,
            p1: self.p1,
        }
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let placement = match self.placement.as_str() {
            "random" => TxPlacement::UniformRandom,
            "fixed" => TxPlacement::Fixed {
                theta: self.tx_theta,
                phi: self.tx_phi,
            },
            other => {
                return Err(McError::Config(format!(
                    "placement must be random or fixed, got {other:?}"
                )))
            }
        };
        Ok(SimConfig {
            dt: self.dt,
            dt_tx: self.dt_tx,
            horizon: self.horizon,
            realizations: self.realizations,
            particles: self.particles,
            bins: self.bins,
            seed: self.seed,
            placement,
        })
    }

    pub fn build_layout(&self) -> Result<ApLayout> {
        self.build_layout_named(&self.layout, self.n_p)
    }

    fn build_layout_named(&self, kind: &str, n_p: usize) -> Result<ApLayout> {
        match kind {
            "fibonacci" => geometry::layout_fibonacci(self.r_rx, n_p, self.coverage),
            "random" => {
                geometry::layout_random(self.r_rx, n_p, self.coverage, self.layout_seed)
            }
            "region" => geometry::layout_region(
                self.r_rx,
                n_p,
                self.coverage,
                (self.theta_min, self.theta_max),
                (self.phi_min, self.phi_max),
            ),
            "single" => geometry::layout_fibonacci(self.r_rx, 1, self.coverage),
            "file" => ApLayout::from_text(&std::fs::read_to_string(&self.layout_file)?),
            other => Err(McError::Config(format!(
                "layout must be fibonacci|random|region|single|file, got {other:?}"
            ))),
        }
    }

    fn resolved_text(&self) -> String {
        format!(
            "r_rx = {}\nr_0 = {}\nd_sigma = {}\nk_d = {}\ntx = {}\nn_sigma = {}\n\
             r_t = {}\nd_v = {}\nk_f = {}\nn_v = {}\neta = {}\nn_max = {}\n\
             layout = {}\nn_p = {}\ncoverage = {}\nlayout_seed = {}\n\
             theta_min = {}\ntheta_max = {}\nphi_min = {}\nphi_max = {}\n\
             layout_file = {}\ndt = {}\ndt_tx = {}\nhorizon = {}\n\
             realizations = {}\nparticles = {}\nbins = {}\nseed = {}\n\
             placement = {}\ntx_theta = {}\ntx_phi = {}\nrx_model = {}\n\
             q_bits = {}\nt_b = {}\np0 = {}\np1 = {}\n",
            self.r_rx,
            self.r_0,
            self.d_sigma,
            self.k_d,
            self.tx,
            self.n_sigma,
            self.r_t,
            self.d_v,
            self.k_f,
            self.n_v,
            self.eta,
            self.n_max,
            self.layout,
            self.n_p,
            self.coverage,
            self.layout_seed,
            self.theta_min,
            self.theta_max,
            self.phi_min,
            self.phi_max,
            self.layout_file,
            self.dt,
            self.dt_tx,
            self.horizon,
            self.realizations,
            self.particles,
            self.bins,
            self.seed,
            self.placement,
            self.tx_theta,
            self.tx_phi,
            self.rx_model,
            self.q_bits,
            self.t_b,
            self.p0,
            self.p1,
        )
    }
}

#[derive(Parser, Debug)]
#[command(name = "mcchan", version, about = "Molecular channel-model experiments")]
pub struct Cli {
    /// Config file of key = value lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $MCCHAN_OUT or ./mcchan-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a single config key, e.g. --set k_d=0.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone, Copy)]
pub enum Cmd {
    /// Generate a patch layout file and its homogenization summary.
    Layout,
    /// Analytic impulse-response CSVs for the three TX-RX models.
    Cir,
    /// Asymptotic absorbed counts vs patch count and coverage.
    Asymptotic,
    /// Compare even, random, and region-confined patch distributions.
    CompareDistributions,
    /// Average bit error rate vs threshold and vs bit interval.
    Ber,
    /// Particle-based simulation with an analytic overlay.
    Simulate,
}

fn cmd_name(cmd: Cmd) -> &'static str {
    match cmd {
        Cmd::Layout => "layout",
        Cmd::Cir => "cir",
        Cmd::Asymptotic => "asymptotic",
        Cmd::CompareDistributions => "compare-distributions",
        Cmd::Ber => "ber",
        Cmd::Simulate => "simulate",
    }
}

type Outputs = Vec<(String, String)>;

fn meta(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    vec![
        ("r_rx_um", cfg.r_rx.to_string()),
        ("r_0_um", cfg.r_0.to_string()),
        ("d_sigma_um2_per_s", cfg.d_sigma.to_string()),
        ("k_d_per_s", cfg.k_d.to_string()),
    ]
}

fn cmd_layout(cfg: &ExperimentConfig) -> Result<Outputs> {
    let layout = cfg.build_layout()?;
    let p = cfg.channel();
    let rate = cir::rate_for_layout(&layout, &p)?;
    let s = homogenization::layout_metric_s(&layout);
    let mut summary = String::from("# layout-summary v1\nn_p,coverage,s_metric,w_e_um_per_s\n");
    let _ = writeln!(
        summary,
        "{},{:.17e},{:.17e},{:.17e}",
        layout.len(),
        layout.coverage(),
        s,
        rate.w_e
    );
    Ok(vec![
        ("layout.txt".into(), layout.to_text()),
        ("layout_summary.csv".into(), summary),
    ])
}

fn cmd_cir(cfg: &ExperimentConfig) -> Result<Outputs> {
    let p = cfg.channel();
    let layout = cfg.build_layout()?;
    let grid = cir::default_time_grid();
    let m = meta(cfg);
    let ptfr = cir::cir_ptfr(&grid, &p)?;
    let ptar = cir::cir_point_ap(&grid, &layout, &p)?;
    let mtar = cir::cir_mf_ap(&grid, &layout, &p, &cfg.mf_tx(), cfg.n_max)?;
    Ok(vec![
        ("ptfr.csv".into(), ptfr.to_csv(&m)),
        ("ptar.csv".into(), ptar.to_csv(&m)),
        ("mtar.csv".into(), mtar.to_csv(&m)),
        ("plot.gp".into(), plot_script(&["ptfr.csv", "ptar.csv", "mtar.csv"])),
    ])
}

fn cmd_asymptotic(cfg: &ExperimentConfig) -> Result<Outputs> {
    let p = cfg.channel();
    let n_sigma = cfg.n_sigma as f64;
    // absorbed-count ceiling vs patch count at fixed coverage
    let mut by_np =
        String::from("# asymptotic-np v1\nn_p,coverage,n_abs_identical,n_abs_meanfield,delta_h\n");
    let single = geometry::layout_fibonacci(cfg.r_rx, 1, cfg.coverage)?;
    for &n_p in &cfg.n_p_list {
        let layout = geometry::layout_fibonacci(cfg.r_rx, n_p, cfg.coverage)?;
        let w_e = cir::rate_for_layout(&layout, &p)?.w_e;
        let ident = n_sigma * cir::h_uniform_inf(w_e, &p)?;
        let kappa = layout.patches()[0].radius / cfg.r_rx;
        let mf_cap = homogenization::capacitance_meanfield(cfg.r_rx, n_p, kappa)?;
        let w_mf = homogenization::effective_rate(&mf_cap, cfg.d_sigma, cfg.r_rx)?.w_e;
        let mf = n_sigma * cir::h_uniform_inf(w_mf, &p)?;
        let dh = homogenization::delta_h(&layout, &single, cfg.d_sigma, cfg.k_d)?;
        let _ = writeln!(
            by_np,
            "{n_p},{:.17e},{:.17e},{:.17e},{:.17e}",
            cfg.coverage, ident, mf, dh
        );
    }
    // vs coverage at fixed patch count
    let mut by_cov = String::from(
        "# asymptotic-coverage v1\ncoverage,n_p,n_abs_identical,coverage_exceeds_validity\n",
    );
    for &cov in &cfg.coverage_list {
        let layout = geometry::layout_fibonacci(cfg.r_rx, cfg.n_p, cov)?;
        let w_e = cir::rate_for_layout(&layout, &p)?.w_e;
        let ident = n_sigma * cir::h_uniform_inf(w_e, &p)?;
        let _ = writeln!(
            by_cov,
            "{cov},{},{:.17e},{}",
            cfg.n_p,
            ident,
            layout.coverage_exceeds_validity()
        );
    }
    Ok(vec![
        ("asymptotic_np.csv".into(), by_np),
        ("asymptotic_coverage.csv".into(), by_cov),
        (
            "plot.gp".into(),
            plot_script(&["asymptotic_np.csv", "asymptotic_coverage.csv"]),
        ),
    ])
}

fn cmd_compare_distributions(cfg: &ExperimentConfig) -> Result<Outputs> {
    let p = cfg.channel();
    let n_sigma = cfg.n_sigma as f64;
    let kinds = ["fibonacci", "random", "region"];
    let mut summary = String::from(
        "# distribution-compare v1\nn_p,distribution,s_metric,delta_s_vs_even,n_abs_inf\n",
    );
    for &n_p in &cfg.n_p_list {
        let mut s_even = 0.0;
        for kind in kinds {
            let layout = self_or_skip(cfg.build_layout_named(kind, n_p))?;
            let Some(layout) = layout else { continue };
            let s = homogenization::layout_metric_s(&layout);
            if kind == "fibonacci" {
                s_even = s;
            }
            let w_e = cir::rate_for_layout(&layout, &p)?.w_e;
            let n_abs = n_sigma * cir::h_uniform_inf(w_e, &p)?;
            let _ = writeln!(
                summary,
                "{n_p},{kind},{:.17e},{:.17e},{:.17e}",
                s,
                s - s_even,
                n_abs
            );
        }
    }
    // cumulative curves at the configured n_p
    let grid = cir::default_time_grid();
    let m = meta(cfg);
    let mut out: Outputs = vec![("distribution_summary.csv".into(), summary)];
    for kind in kinds {
        if let Some(layout) = self_or_skip(cfg.build_layout_named(kind, cfg.n_p))? {
            let series = cir::cir_point_ap(&grid, &layout, &p)?;
            out.push((format!("h_{kind}.csv"), series.to_csv(&m)));
        }
    }
    out.push((
        "plot.gp".into(),
        plot_script(&["distribution_summary.csv", "h_fibonacci.csv", "h_random.csv", "h_region.csv"]),
    ));
    Ok(out)
}

/// Dense region or random layouts can fail to pack at high n_p; sweeps skip
/// those points instead of aborting.
fn self_or_skip(r: Result<ApLayout>) -> Result<Option<ApLayout>> {
    match r {
        Ok(l) => Ok(Some(l)),
        Err(McError::Layout(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

struct BerModel {
    tag: &'static str,
    n_t: f64,
    // cumulative absorption at a given time
    h: Box<dyn Fn(f64) -> Result<f64>>,
}

fn ber_models(cfg: &ExperimentConfig) -> Result<Vec<BerModel>> {
    let p = cfg.channel();
    let layout = cfg.build_layout()?;
    let w_e = cir::rate_for_layout(&layout, &p)?.w_e;
    let mf = cir::MfChannel::new(&p, w_e, &cfg.mf_tx(), cfg.n_max)?;
    let p1 = p;
    let p2 = p;
    Ok(vec![
        BerModel {
            tag: "PTFR",
            n_t: cfg.n_sigma as f64,
            h: Box::new(move |t| cir::h_fully_absorbing_cum(t, &p1)),
        },
        BerModel {
            tag: "PTAR",
            n_t: cfg.n_sigma as f64,
            h: Box::new(move |t| cir::h_uniform_cum(t, w_e, &p2)),
        },
        BerModel {
            tag: "MTAR",
            n_t: (cfg.n_v * cfg.eta) as f64,
            h: Box::new(move |t| mf.cumulative(t)),
        },
    ])
}

fn cmd_ber(cfg: &ExperimentConfig) -> Result<Outputs> {
    let spec = cfg.protocol();
    spec.validate()?;
    let models = ber_models(cfg)?;
    let mut vs_psi = String::from("# ber-vs-psi v1\nmodel,psi,average_ber\n");
    let mut psi_hi = 0u64;
    let mut incs = Vec::new();
    for m in &models {
        let inc = ChannelIncrements::from_cumulative(&m.h, spec.q, spec.t_b, m.n_t)?;
        let chi = inc.chi_max();
        psi_hi = psi_hi.max((chi + 10.0 * chi.sqrt()).ceil() as u64);
        incs.push(inc);
    }
    let step = (psi_hi / 200).max(1);
    for (m, inc) in models.iter().zip(&incs) {
        for psi in (0..=psi_hi).step_by(step as usize) {
            let ber = comms::average_ber(inc, psi, &spec)?;
            let _ = writeln!(vs_psi, "{},{psi},{:.17e}", m.tag, ber);
        }
    }
    let mut vs_tb = String::from("# ber-vs-tb v1\nmodel,t_b_s,psi_opt,average_ber\n");
    for m in &models {
        for &t_b in &cfg.t_b_list {
            let inc = ChannelIncrements::from_cumulative(&m.h, spec.q, t_b, m.n_t)?;
            let (psi, ber) = comms::average_optimal_threshold(&inc, &spec)?;
            let _ = writeln!(vs_tb, "{},{t_b},{psi},{:.17e}", m.tag, ber);
        }
    }
    Ok(vec![
        ("ber_vs_psi.csv".into(), vs_psi),
        ("ber_vs_tb.csv".into(), vs_tb),
        ("plot.gp".into(), plot_script(&["ber_vs_psi.csv", "ber_vs_tb.csv"])),
    ])
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outputs> {
    let p = cfg.channel();
    let sim_cfg = cfg.sim()?;
    let layout;
    let rx = match cfg.rx_model.as_str() {
        "absorbing" => RxSpec::FullyAbsorbing,
        "patches" => {
            layout = cfg.build_layout()?;
            RxSpec::Patches(&layout)
        }
        other => {
            return Err(McError::Config(format!(
                "rx_model must be patches or absorbing, got {other:?}"
            )))
        }
    };
    let grid: Vec<f64> = (1..=sim_cfg.bins)
        .map(|i| i as f64 * sim_cfg.horizon / sim_cfg.bins as f64)
        .collect();
    let m = meta(cfg);
    let (out, analytic) = match cfg.tx.as_str() {
        "point" => {
            let out = sim::simulate_point_tx(&p, rx, &sim_cfg)?;
            let analytic = match rx {
                RxSpec::FullyAbsorbing => cir::cir_ptfr(&grid, &p)?,
                RxSpec::Patches(l) => cir::cir_point_ap(&grid, l, &p)?,
            };
            (sim::SimOutput { series: out.series, records: out.records }, analytic)
        }
        "mf" => {
            let tx = cfg.mf_tx();
            let out = sim::simulate_mf_tx(&p, rx, &tx, &sim_cfg)?;
            let analytic = match rx {
                RxSpec::Patches(l) => cir::cir_mf_ap(&grid, l, &p, &tx, cfg.n_max)?,
                RxSpec::FullyAbsorbing => {
                    return Err(McError::Config(
                        "mf simulation needs rx_model = patches for the analytic overlay".into(),
                    ))
                }
            };
            (
                sim::SimOutput {
                    series: out.series,
                    records: out.records,
                },
                analytic,
            )
        }
        other => {
            return Err(McError::Config(format!(
                "tx must be point or mf, got {other:?}"
            )))
        }
    };
    Ok(vec![
        ("hits.csv".into(), sim::hits_to_csv(&out.records)),
        ("sim_cir.csv".into(), out.series.to_csv(&m)),
        ("analytic_cir.csv".into(), analytic.to_csv(&m)),
        ("plot.gp".into(), plot_script(&["sim_cir.csv", "analytic_cir.csv"])),
    ])
}

/// Minimal gnuplot script plotting every CSV it is given.
fn plot_script(files: &[&str]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnheader\nset term pngcairo\n",
    );
    for f in files {
        let stem = f.trim_end_matches(".csv");
        let _ = writeln!(
            s,
            "set output '{stem}.png'\nplot '{f}' skip 1 using 1:2 with lines"
        );
    }
    s
}

/// Run one command, write its outputs and the manifest, and return the list
/// of files written.
pub fn run_command(cmd: Cmd, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let outputs = match cmd {
        Cmd::Layout => cmd_layout(cfg)?,
        Cmd::Cir => cmd_cir(cfg)?,
        Cmd::Asymptotic => cmd_asymptotic(cfg)?,
        Cmd::CompareDistributions => cmd_compare_distributions(cfg)?,
        Cmd::Ber => cmd_ber(cfg)?,
        Cmd::Simulate => cmd_simulate(cfg)?,
    };
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut manifest = format!(
        "# run-manifest v1\ncommand = {}\nversion = {}\n\n[config]\n{}\n[outputs]\n",
        cmd_name(cmd),
        env!("CARGO_PKG_VERSION"),
        cfg.resolved_text()
    );
    for (name, contents) in &outputs {
        let path = out_dir.join(name);
        std::fs::write(&path, contents)?;
        let digest = Sha256::digest(contents.as_bytes());
        let _ = writeln!(manifest, "{name} sha256={digest:x}");
        written.push(path);
    }
    let _ = writeln!(manifest, "\nwall_time_s = {:.3}", start.elapsed().as_secs_f64());
    let mpath = out_dir.join("manifest.txt");
    std::fs::write(&mpath, manifest)?;
    written.push(mpath);
    Ok(written)
}

/// Process entry point; returns the exit code (0 ok, 2 config, 3 numerics).
pub fn run() -> i32 {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                McError::Config(_) | McError::Layout(_) | McError::Domain(_) | McError::Io(_) => 2,
                McError::Accuracy(_) | McError::Solver { .. } | McError::Homogenization(_) => 3,
            }
        }
    }
}

fn run_cli(cli: &Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| McError::Config(format!("--set needs KEY=VALUE, got {s:?}")))?;
        cfg.apply(k, v)?;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("MCCHAN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("mcchan-out"));
    let written = run_command(cli.cmd, &cfg, &out_dir)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
