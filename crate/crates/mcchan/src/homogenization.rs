//! Boundary homogenization: receiver capacitance G_p for patchy surfaces,
//! the effective uniform reaction rate w_e, and layout-comparison metrics.

use crate::error::{McError, Result};
use crate::geometry::ApLayout;
use std::f64::consts::PI;

/// Which asymptotic expression produced a [`Capacitance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacitanceFormula {
    /// Arbitrary patch sizes and positions.
    General,
    /// Equal-size patches at explicit positions.
    Identical,
    /// Equal-size evenly distributed patches, position-free.
    MeanField,
    /// Single patch, higher-order expansion.
    SingleAp,
}

/// Intermediate quantities of the general expansion, kept for run manifests.
#[derive(Debug, Clone)]
pub struct CapDiagnostics {
    pub m: Vec<f64>,
    pub m_bar: f64,
    pub s: Vec<f64>,
    pub vartheta: f64,
}

/// Receiver "capacitance" G_p in um: the diffusion analogue of electrostatic
/// capacitance. G_p = r_R for a fully absorbing sphere.
#[derive(Debug, Clone)]
pub struct Capacitance {
    pub g_p: f64,
    pub formula: CapacitanceFormula,
    /// kappa = a_1 / r_R.
    pub kappa: f64,
    pub rx_radius: f64,
    /// Set when the layout coverage exceeds the range where the asymptotic
    /// formulas stay close to simulation.
    pub coverage_warning: bool,
    pub diagnostics: CapDiagnostics,
}

/// Homogenized uniform reaction rate w_e in um/s.
#[derive(Debug, Clone)]
pub struct EffectiveRate {
    pub w_e: f64,
    pub source: Capacitance,
}

fn unit_chord(layout: &ApLayout, i: usize, j: usize) -> f64 {
    let r = layout.rx_radius();
    let a = layout.patches()[i].center(r);
    let b = layout.patches()[j].center(r);
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() / r
}

/// Pairwise interaction F(d) = 1/d + ln(d)/2 - ln(2 + d)/2 on the unit
/// sphere, with d the chord distance between scaled patch centres.
fn pair_interaction(d: f64) -> f64 {
    1.0 / d + 0.5 * d.ln() - 0.5 * (2.0 + d).ln()
}

fn finish(
    inv_g: f64,
    formula: CapacitanceFormula,
    kappa: f64,
    rx_radius: f64,
    coverage: f64,
    diagnostics: CapDiagnostics,
) -> Result<Capacitance> {
    if !(inv_g > 0.0) || !inv_g.is_finite() {
        return Err(McError::Homogenization(format!(
            "capacitance expansion produced non-positive 1/G_p = {inv_g}; \
             reduce the coverage ratio"
        )));
    }
    let g_p = 1.0 / inv_g;
    if g_p >= rx_radius {
        return Err(McError::Homogenization(format!(
            "G_p = {g_p:.6} um exceeds the fully absorbing limit r_R = {rx_radius} um; \
             the expansion is outside its validity range, reduce the coverage ratio"
        )));
    }
    Ok(Capacitance {
        g_p,
        formula,
        kappa,
        rx_radius,
        coverage_warning: coverage > crate::geometry::COVERAGE_VALIDITY_LIMIT,
        diagnostics,
    })
}

/// Capacitance for arbitrary patch sizes and positions; higher-order
/// remainder omitted.
pub fn capacitance_general(layout: &ApLayout) -> Result<Capacitance> {
    let r = layout.rx_radius();
    let n = layout.len() as f64;
    let kappa = layout.patches()[0].radius / r;
    let m: Vec<f64> = layout
        .patches()
        .iter()
        .map(|p| 2.0 * p.radius / (r * kappa * PI))
        .collect();
    let m_bar = m.iter().sum::<f64>() / n;
    let s: Vec<f64> = layout
        .patches()
        .iter()
        .zip(&m)
        .map(|(p, mi)| 0.5 * mi * ((4.0 * p.radius / (r * kappa)).ln() - 1.5))
        .collect();
    let sum_m2: f64 = m.iter().map(|x| x * x).sum();
    let sum_m3: f64 = m.iter().map(|x| x * x * x).sum();
    let vartheta = sum_m2 * sum_m2 / (n * m_bar) - sum_m3;
    let sum_ms: f64 = m.iter().zip(&s).map(|(mi, si)| mi * si).sum();
    let mut pair_sum = 0.0;
    for i in 0..layout.len() {
        for j in (i + 1)..layout.len() {
            pair_sum += m[i] * m[j] * pair_interaction(unit_chord(layout, i, j));
        }
    }
    let log_half_kappa = (kappa / 2.0).ln();
    let inv_g = 2.0 / (n * m_bar * kappa * r)
        * (1.0
            + kappa / (2.0 * n * m_bar) * log_half_kappa * sum_m2
            + kappa / (n * m_bar) * (sum_ms + 2.0 * pair_sum)
            + (kappa * log_half_kappa).powi(2) * vartheta / (4.0 * n * m_bar));
    finish(
        inv_g,
        CapacitanceFormula::General,
        kappa,
        r,
        layout.coverage(),
        CapDiagnostics {
            m,
            m_bar,
            s,
            vartheta,
        },
    )
}

/// Capacitance for equal-size patches at explicit positions.
pub fn capacitance_identical(layout: &ApLayout) -> Result<Capacitance> {
    if !layout.identical_sizes() {
        return Err(McError::Homogenization(
            "identical-size formula requires equal patch radii".into(),
        ));
    }
    let r = layout.rx_radius();
    let n = layout.len() as f64;
    let kappa = layout.patches()[0].radius / r;
    let mut pair_sum = 0.0;
    for i in 0..layout.len() {
        for j in (i + 1)..layout.len() {
            pair_sum += pair_interaction(unit_chord(layout, i, j));
        }
    }
    let inv_g = PI / (n * kappa * r)
        * (1.0 + kappa / PI * ((2.0 * kappa).ln() - 1.5 + 4.0 / n * pair_sum));
    let m = vec![2.0 / PI; layout.len()];
    let s: Vec<f64> = m
        .iter()
        .map(|mi| 0.5 * mi * (4.0f64.ln() - 1.5))
        .collect();
    finish(
        inv_g,
        CapacitanceFormula::Identical,
        kappa,
        r,
        layout.coverage(),
        CapDiagnostics {
            m_bar: 2.0 / PI,
            m,
            s,
            vartheta: 0.0,
        },
    )
}

/// Position-free capacitance for `n_p` equal evenly distributed patches.
pub fn capacitance_meanfield(rx_radius: f64, n_p: usize, kappa: f64) -> Result<Capacitance> {
    if rx_radius <= 0.0 || n_p == 0 || !(0.0 < kappa && kappa < 1.0) {
        return Err(McError::Domain(
            "mean-field capacitance needs r_R > 0, N_p >= 1, kappa in (0, 1)".into(),
        ));
    }
    let n = n_p as f64;
    let inv_g = 1.0 / rx_radius
        * (1.0
            + PI / (n * kappa)
            + (0.5 * (kappa * n.sqrt()).ln() + 2.0f64.ln() - 1.5) / n
            - 2.0 / n.sqrt()
            + n.powf(-1.5));
    let coverage = n * kappa * kappa / 4.0;
    finish(
        inv_g,
        CapacitanceFormula::MeanField,
        kappa,
        rx_radius,
        coverage,
        CapDiagnostics {
            m: vec![2.0 / PI; n_p],
            m_bar: 2.0 / PI,
            s: Vec::new(),
            vartheta: 0.0,
        },
    )
}

/// Single-patch capacitance with the higher-order kappa^2 correction.
pub fn capacitance_single(rx_radius: f64, a: f64) -> Result<Capacitance> {
    if rx_radius <= 0.0 || !(0.0 < a && a < rx_radius) {
        return Err(McError::Domain(
            "single-patch capacitance needs 0 < a < r_R".into(),
        ));
    }
    let kappa = a / rx_radius;
    let inv_g = PI / (kappa * rx_radius)
        * (1.0 + kappa / PI * ((2.0 * kappa).ln() - 1.5)
            - kappa * kappa / (PI * PI) * (PI * PI + 21.0) / 36.0);
    let coverage = kappa * kappa / 4.0;
    finish(
        inv_g,
        CapacitanceFormula::SingleAp,
        kappa,
        rx_radius,
        coverage,
        CapDiagnostics {
            m: vec![2.0 / PI],
            m_bar: 2.0 / PI,
            s: Vec::new(),
            vartheta: 0.0,
        },
    )
}

/// w_e = D_sigma G_p / (r_R (r_R - G_p)).
pub fn effective_rate(cap: &Capacitance, d_sigma: f64, rx_radius: f64) -> Result<EffectiveRate> {
    if d_sigma <= 0.0 {
        return Err(McError::Domain("D_sigma must be > 0".into()));
    }
    if !(cap.g_p > 0.0 && cap.g_p < rx_radius) {
        return Err(McError::Homogenization(format!(
            "G_p = {} um must lie in (0, r_R = {} um) for a finite effective rate",
            cap.g_p, rx_radius
        )));
    }
    Ok(EffectiveRate {
        w_e: d_sigma * cap.g_p / (rx_radius * (rx_radius - cap.g_p)),
        source: cap.clone(),
    })
}

/// Pairwise interaction sum S = sum_{i<j} m_i m_j F(l_i', l_j'); smaller S
/// means larger G_p and more absorption. Empty sum for a single patch.
pub fn layout_metric_s(layout: &ApLayout) -> f64 {
    let r = layout.rx_radius();
    let kappa = layout.patches()[0].radius / r;
    let m: Vec<f64> = layout
        .patches()
        .iter()
        .map(|p| 2.0 * p.radius / (r * kappa * PI))
        .collect();
    let mut s = 0.0;
    for i in 0..layout.len() {
        for j in (i + 1)..layout.len() {
            s += m[i] * m[j] * pair_interaction(unit_chord(layout, i, j));
        }
    }
    s
}

fn best_capacitance(layout: &ApLayout) -> Result<Capacitance> {
    if layout.len() == 1 {
        capacitance_single(layout.rx_radius(), layout.patches()[0].radius)
    } else if layout.identical_sizes() {
        capacitance_identical(layout)
    } else {
        capacitance_general(layout)
    }
}

/// Relative increase in asymptotically absorbed molecules when the fixed
/// total patch area is split over `layout` instead of `single`:
/// ratio of the two asymptotic fractions minus one.
pub fn delta_h(
    layout: &ApLayout,
    single: &ApLayout,
    d_sigma: f64,
    k_d: f64,
) -> Result<f64> {
    let r = layout.rx_radius();
    if (single.rx_radius() - r).abs() > 1e-12 * r {
        return Err(McError::Domain("layouts must share the RX radius".into()));
    }
    if (layout.coverage() - single.coverage()).abs() > 1e-9 {
        return Err(McError::Domain(
            "layouts must share the total coverage ratio".into(),
        ));
    }
    let w_n = effective_rate(&best_capacitance(layout)?, d_sigma, r)?.w_e;
    let w_1 = effective_rate(&best_capacitance(single)?, d_sigma, r)?.w_e;
    let gamma = |w: f64| (w * r + d_sigma) / (d_sigma * r);
    let zeta = |w: f64| gamma(w) * gamma(w) * d_sigma - k_d;
    if zeta(w_n).abs() < 1e-12 || zeta(w_1).abs() < 1e-12 {
        return Err(McError::Domain(
            "zeta(w_e) = 0: degenerate parameter coincidence".into(),
        ));
    }
    let root = (k_d / d_sigma).sqrt();
    Ok(w_n * zeta(w_1) * (gamma(w_n) - root) / (w_1 * zeta(w_n) * (gamma(w_1) - root)) - 1.0)
}
