//! Experiment drivers: distance sweeps, brightness/purity and repetition
//! rate/lifetime gain grids, and long-run stability emulation.
//!
//! Every driver is a pure function of its spec, so re-running one yields a
//! bit-identical CSV. Grid cells are independent and evaluated in parallel;
//! assembly preserves grid order.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ParamBundle;
use crate::finitekey::{expected_counts, secure_key_rate, KeyRateReport, KeyStatus};
use crate::montecarlo::{
    simulate_block, sift_and_qber, EncodingSequence, McConfig, QberEstimates,
};
use crate::config::SystemParams;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SweepError {
    #[error("QBER threshold must be in (0, 0.5), got {0}")]
    BadThreshold(f64),
    #[error("threshold {0} not reached within {1} km")]
    ThresholdUnreachable(f64, f64),
    #[error("count model failed: {0}")]
    Model(String),
    #[error("baseline cell yields no key, gains undefined")]
    DeadBaseline,
    #[error("need at least 2 blocks, got {0}")]
    TooFewBlocks(usize),
    #[error("monte carlo: {0}")]
    MonteCarlo(String),
}

/// Fixed baseline for a sweep: parameter bundle plus the received block size
/// convention (1e11 pulses unless overridden).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub bundle: ParamBundle,
    pub n_sum: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { bundle: ParamBundle::default(), n_sum: 1e11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceRow {
    pub l_km: f64,
    pub e_x: f64,
    pub e_z: f64,
    pub skb_per_pulse: f64,
    pub status: KeyStatus,
}

fn status_label(status: KeyStatus) -> &'static str {
    match status {
        KeyStatus::Positive => "positive",
        KeyStatus::ZeroClamped => "zero_clamped",
        KeyStatus::Invalid => "invalid",
    }
}

fn rate_at(spec: &SweepSpec, system: &SystemParams) -> Result<(f64, f64, KeyRateReport), SweepError> {
    let counts = expected_counts(system, &spec.bundle.security, &spec.bundle.split, spec.n_sum)
        .map_err(|e| SweepError::Model(e.to_string()))?;
    // Analytic QBERs over the received counts; independent of block size.
    let e_x = if counts.n_r_x > 0.0 { (counts.m_r_x / counts.n_r_x).min(0.5) } else { 0.5 };
    let e_z = if counts.n_r_z > 0.0 { (counts.m_r_z / counts.n_r_z).min(0.5) } else { 0.5 };
    let report = secure_key_rate(&counts, &spec.bundle.security, None, None, system.timing.f_rep);
    Ok((e_x, e_z, report))
}

/// Analytic QBERs and secure key fraction over a list of fiber lengths.
pub fn distance_sweep(spec: &SweepSpec, lengths_km: &[f64]) -> Result<Vec<DistanceRow>, SweepError> {
    lengths_km
        .par_iter()
        .map(|&l| {
            let system = spec.bundle.system.with_length_km(l);
            let (e_x, e_z, report) = rate_at(spec, &system)?;
            Ok(DistanceRow { l_km: l, e_x, e_z, skb_per_pulse: report.r_secure, status: report.status })
        })
        .collect()
}

/// CSV with the fixed schema `L_km,e_x,e_z,skb_per_pulse,status`.
pub fn distance_csv(rows: &[DistanceRow]) -> String {
    let mut out = String::from("L_km,e_x,e_z,skb_per_pulse,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{}\n",
            r.l_km,
            r.e_x,
            r.e_z,
            r.skb_per_pulse,
            status_label(r.status)
        ));
    }
    out
}

fn e_x_at(spec: &SweepSpec, l: f64) -> Result<f64, SweepError> {
    let system = spec.bundle.system.with_length_km(l);
    Ok(rate_at(spec, &system)?.0)
}

const MAX_SEARCH_KM: f64 = 500.0;

/// Fiber length at which the analytic X-basis QBER reaches `threshold`,
/// bisected to 0.1 km.
pub fn max_tolerable_distance(spec: &SweepSpec, threshold: f64) -> Result<f64, SweepError> {
    if !(threshold > 0.0 && threshold < 0.5) {
        return Err(SweepError::BadThreshold(threshold));
    }
    if e_x_at(spec, 0.0)? >= threshold {
        return Ok(0.0);
    }
    if e_x_at(spec, MAX_SEARCH_KM)? < threshold {
        return Err(SweepError::ThresholdUnreachable(threshold, MAX_SEARCH_KM));
    }
    let (mut lo, mut hi) = (0.0, MAX_SEARCH_KM);
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        if e_x_at(spec, mid)? >= threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub gain: f64,
    pub status: KeyStatus,
}

/// CSV with the fixed schema `x,y,gain,status`.
pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("x,y,gain,status\n");
    for r in rows {
        out.push_str(&format!("{},{},{:e},{}\n", r.x, r.y, r.gain, status_label(r.status)));
    }
    out
}

/// Secure-rate gain over the (mean photon number, g2) grid, normalized to
/// the baseline source in `spec`. Rows are in x-major order (x = mean photon
/// number, y = g2). Infeasible source cells are flagged, not fatal.
pub fn brightness_purity_sweep(
    spec: &SweepSpec,
    n_bar_grid: &[f64],
    g2_grid: &[f64],
) -> Result<Vec<GridRow>, SweepError> {
    let baseline = rate_at(spec, &spec.bundle.system)?.2;
    if baseline.r_secure <= 0.0 {
        return Err(SweepError::DeadBaseline);
    }
    let cells: Vec<(f64, f64)> = n_bar_grid
        .iter()
        .flat_map(|&n| g2_grid.iter().map(move |&g| (n, g)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(n_bar, g2)| {
            let mut system = spec.bundle.system;
            system.source.mean_photon_number = n_bar;
            system.source.g2 = g2;
            match rate_at(spec, &system) {
                Ok((_, _, report)) => GridRow {
                    x: n_bar,
                    y: g2,
                    gain: report.r_secure / baseline.r_secure,
                    status: report.status,
                },
                Err(_) => GridRow { x: n_bar, y: g2, gain: f64::NAN, status: KeyStatus::Invalid },
            }
        })
        .collect())
}

/// Temporal-overlap penalty model for the repetition-rate study.
///
/// The detection window shrinks with the repetition rate, W = 1/(3 f_rep),
/// and the exponential emission tail leaking past it raises both
/// misalignment probabilities by 0.5 exp(-W / tau). The modulation slot
/// Delta = 1/(2 f_rep) additionally lets the tail straddle the encoder
/// phase transition, adding 0.5 exp(-Delta / tau) to the X misalignment
/// only. This is a fitted-shape stand-in, isolated here so alternative leak
/// models can be swapped in.
pub fn overlap_penalized(mut system: SystemParams, f_rep: f64, tau: f64) -> SystemParams {
    let leak_window = if tau > 0.0 { (-(1.0 / (3.0 * f_rep)) / tau).exp() } else { 0.0 };
    let leak_slot = if tau > 0.0 { (-(1.0 / (2.0 * f_rep)) / tau).exp() } else { 0.0 };
    system.timing.f_rep = f_rep;
    system.timing.lifetime_tau = tau;
    system.channel.p_mis_z = (system.channel.p_mis_z + 0.5 * leak_window).min(1.0);
    system.channel.p_mis_x =
        (system.channel.p_mis_x + 0.5 * leak_window + 0.5 * leak_slot).min(1.0);
    system
}

/// Secure-key-rate (bits per second) gain over the (f_rep, lifetime) grid,
/// normalized to the baseline timing in `spec`, under `overlap_penalized`.
/// x = f_rep in Hz, y = lifetime in seconds.
pub fn reprate_lifetime_sweep(
    spec: &SweepSpec,
    f_rep_grid: &[f64],
    tau_grid: &[f64],
) -> Result<Vec<GridRow>, SweepError> {
    let base_sys = overlap_penalized(
        spec.bundle.system,
        spec.bundle.system.timing.f_rep,
        spec.bundle.system.timing.lifetime_tau,
    );
    let baseline = rate_at(spec, &base_sys)?.2;
    if baseline.skr_bps <= 0.0 {
        return Err(SweepError::DeadBaseline);
    }
    let cells: Vec<(f64, f64)> = f_rep_grid
        .iter()
        .flat_map(|&f| tau_grid.iter().map(move |&t| (f, t)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(f_rep, tau)| {
            let system = overlap_penalized(spec.bundle.system, f_rep, tau);
            match rate_at(spec, &system) {
                Ok((_, _, report)) => GridRow {
                    x: f_rep,
                    y: tau,
                    gain: report.skr_bps / baseline.skr_bps,
                    status: report.status,
                },
                Err(_) => GridRow { x: f_rep, y: tau, gain: f64::NAN, status: KeyStatus::Invalid },
            }
        })
        .collect())
}

/// One-minute block size at the baseline repetition rate.
pub const FULL_BLOCK_PULSES: f64 = 4.56e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub mean_e_z0: f64,
    pub mean_e_z1: f64,
    pub mean_e_x0: f64,
    pub mean_e_z: f64,
    /// Sample standard deviations over the block series (statistical only;
    /// no drift is modeled).
    pub sigma_z0: f64,
    pub sigma_z1: f64,
    pub sigma_x0: f64,
    /// Block size relative to the full one-minute block.
    pub scale: f64,
    /// Sigmas rescaled to full-block statistics (shot noise goes as
    /// 1/sqrt(N), so sigma_matched = sigma * sqrt(scale)).
    pub sigma_z0_matched: f64,
    pub sigma_z1_matched: f64,
    pub sigma_x0_matched: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityResult {
    pub series: Vec<QberEstimates>,
    pub summary: StabilitySummary,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Monte Carlo QBER series over `n_blocks` blocks of `block_pulses` pulses
/// each. Block b uses seed cfg.seed + b; blocks evaluate in parallel and the
/// series order is by block index.
pub fn stability_run(
    system: &SystemParams,
    cfg: &McConfig,
    n_blocks: usize,
    block_pulses: u64,
) -> Result<StabilityResult, SweepError> {
    if n_blocks < 2 {
        return Err(SweepError::TooFewBlocks(n_blocks));
    }
    let seq = EncodingSequence::default();
    let series: Vec<QberEstimates> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let block_cfg = McConfig {
                seed: cfg.seed.wrapping_add(b as u64),
                n_pulses: block_pulses,
                ..*cfg
            };
            simulate_block(system, &seq, &block_cfg)
                .map(|res| sift_and_qber(&res.histograms))
                .map_err(|e| SweepError::MonteCarlo(e.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let collect = |f: fn(&QberEstimates) -> f64| series.iter().map(f).collect::<Vec<_>>();
    let (mean_e_z0, sigma_z0) = mean_and_std(&collect(|q| q.e_z0));
    let (mean_e_z1, sigma_z1) = mean_and_std(&collect(|q| q.e_z1));
    let (mean_e_x0, sigma_x0) = mean_and_std(&collect(|q| q.e_x0));
    let scale = block_pulses as f64 / FULL_BLOCK_PULSES;
    Ok(StabilityResult {
        series,
        summary: StabilitySummary {
            mean_e_z0,
            mean_e_z1,
            mean_e_x0,
            mean_e_z: 0.5 * (mean_e_z0 + mean_e_z1),
            sigma_z0,
            sigma_z1,
            sigma_x0,
            scale,
            sigma_z0_matched: sigma_z0 * scale.sqrt(),
            sigma_z1_matched: sigma_z1 * scale.sqrt(),
            sigma_x0_matched: sigma_x0 * scale.sqrt(),
        },
    })
}

/// CSV with the fixed schema `block_index,e_z0,e_z1,e_x0`.
pub fn stability_csv(result: &StabilityResult) -> String {
    let mut out = String::from("block_index,e_z0,e_z1,e_x0\n");
    for (i, q) in result.series.iter().enumerate() {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", i, q.e_z0, q.e_z1, q.e_x0));
    }
    out
}

/// Measured operating points: (length km, block size, E_Z, E_X0).
pub const MEASURED_POINTS: [(f64, f64, f64, f64); 4] = [
    (0.0, 4.56e9, 0.0098, 0.0314),
    (40.0, 4.56e9, 0.0119, 0.0312),
    (80.0, 4.56e9, 0.0302, 0.0490),
    (120.0, 9.12e10, 0.0685, 0.0960),
];

/// Driver preset: secure key fraction at the four measured operating points,
/// with the measured QBERs injected as overrides.
pub fn table1_reproduction(bundle: &ParamBundle) -> Result<Vec<(f64, KeyRateReport)>, SweepError> {
    MEASURED_POINTS
        .iter()
        .map(|&(l, n_sum, e_z, e_x)| {
            let system = bundle.system.with_length_km(l);
            let counts = expected_counts(&system, &bundle.security, &bundle.split, n_sum)
                .map_err(|e| SweepError::Model(e.to_string()))?;
            let report =
                secure_key_rate(&counts, &bundle.security, Some(e_z), Some(e_x), system.timing.f_rep);
            Ok((l, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::McMode;
    use approx::assert_relative_eq;

    #[test]
    fn distance_rows_monotone() {
        let spec = SweepSpec::default();
        let lengths: Vec<f64> = (0..=15).map(|i| i as f64 * 10.0).collect();
        let rows = distance_sweep(&spec, &lengths).unwrap();
        assert_eq!(rows.len(), lengths.len());
        for pair in rows.windows(2) {
            assert!(pair[1].e_x >= pair[0].e_x);
            assert!(pair[1].skb_per_pulse <= pair[0].skb_per_pulse);
        }
        // Once the key dies it stays dead.
        let first_dead = rows.iter().position(|r| r.status == KeyStatus::ZeroClamped);
        if let Some(i) = first_dead {
            assert!(rows[i..].iter().all(|r| r.status == KeyStatus::ZeroClamped));
        }
        assert!((rows[0].e_z - 0.010).abs() < 0.002);
    }

    #[test]
    fn distance_csv_schema_and_determinism() {
        let spec = SweepSpec::default();
        let lengths = [0.0, 50.0, 100.0];
        let a = distance_csv(&distance_sweep(&spec, &lengths).unwrap());
        let b = distance_csv(&distance_sweep(&spec, &lengths).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("L_km,e_x,e_z,skb_per_pulse,status\n"));
        assert_eq!(a.lines().count(), 4);
    }

    #[test]
    fn tolerable_distance_regressions() {
        let spec = SweepSpec::default();
        // Regression locks from the analytic pipeline.
        let d11 = max_tolerable_distance(&spec, 0.11).unwrap();
        assert!((d11 - 93.6295).abs() < 0.2, "d11 = {d11}");
        let d05 = max_tolerable_distance(&spec, 0.05).unwrap();
        assert!((d05 - 67.7957).abs() < 0.2, "d05 = {d05}");
    }

    #[test]
    fn tolerable_distance_edges() {
        let spec = SweepSpec::default();
        let e0 = distance_sweep(&spec, &[0.0]).unwrap()[0].e_x;
        assert_eq!(max_tolerable_distance(&spec, e0).unwrap(), 0.0);
        assert_eq!(
            max_tolerable_distance(&spec, 0.0),
            Err(SweepError::BadThreshold(0.0))
        );
        // without dark counts E_X saturates at p_mis_x and never reaches 0.3
        let mut quiet = spec;
        quiet.bundle.system.channel.p_dc = 0.0;
        assert!(matches!(
            max_tolerable_distance(&quiet, 0.3),
            Err(SweepError::ThresholdUnreachable(_, _))
        ));
    }

    #[test]
    fn brightness_grid_baseline_and_monotonicity() {
        let spec = SweepSpec::default();
        let n_grid = [1e-3, 2.89e-3, 6e-3, 1.2e-2];
        let g2_grid = [0.0, 0.0085, 0.05, 0.2];
        let rows = brightness_purity_sweep(&spec, &n_grid, &g2_grid).unwrap();
        assert_eq!(rows.len(), 16);
        let cell = |n: f64, g: f64| {
            rows.iter().find(|r| r.x == n && r.y == g).copied().unwrap()
        };
        assert_relative_eq!(cell(2.89e-3, 0.0085).gain, 1.0, max_relative = 1e-12);
        // gain rises with brightness at perfect purity
        let pure: Vec<f64> = n_grid.iter().map(|&n| cell(n, 0.0).gain).collect();
        assert!(pure.windows(2).all(|p| p[1] > p[0]));
        // gain falls with g2 at the brightest point
        let bright: Vec<f64> = g2_grid.iter().map(|&g| cell(1.2e-2, g).gain).collect();
        assert!(bright.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn brightness_grid_flags_infeasible_cells() {
        let spec = SweepSpec::default();
        // g2 so large that p1 would go negative at high brightness
        let rows = brightness_purity_sweep(&spec, &[0.9], &[6.0]).unwrap();
        assert_eq!(rows[0].status, KeyStatus::Invalid);
        assert!(rows[0].gain.is_nan());
    }

    #[test]
    fn reprate_grid_baseline_and_tau_limit() {
        let spec = SweepSpec::default();
        let f0 = spec.bundle.system.timing.f_rep;
        let tau0 = spec.bundle.system.timing.lifetime_tau;
        let f_grid = [f0, 2.0 * f0];
        let tau_grid = [0.0, tau0, 4e-9];
        let rows = reprate_lifetime_sweep(&spec, &f_grid, &tau_grid).unwrap();
        let cell = |f: f64, t: f64| rows.iter().find(|r| r.x == f && r.y == t).copied().unwrap();
        assert_relative_eq!(cell(f0, tau0).gain, 1.0, max_relative = 1e-9);
        // tau -> 0: no overlap penalty, SKR gain is the f_rep ratio against
        // the (barely penalized) baseline
        let base = rate_at(
            &spec,
            &overlap_penalized(spec.bundle.system, f0, tau0),
        )
        .unwrap()
        .2;
        let free = rate_at(&spec, &overlap_penalized(spec.bundle.system, 2.0 * f0, 0.0))
            .unwrap()
            .2;
        assert_relative_eq!(cell(2.0 * f0, 0.0).gain, free.skr_bps / base.skr_bps, max_relative = 1e-12);
        // at fixed f_rep, gain non-increasing in tau
        for &f in &f_grid {
            let g: Vec<f64> = tau_grid.iter().map(|&t| cell(f, t).gain).collect();
            assert!(g.windows(2).all(|p| p[1] <= p[0] + 1e-15));
        }
    }

    #[test]
    fn overlap_model_tau_zero_is_penalty_free() {
        let base = SweepSpec::default().bundle.system;
        let s = overlap_penalized(base, 1e8, 0.0);
        assert_eq!(s.channel.p_mis_z, base.channel.p_mis_z);
        assert_eq!(s.channel.p_mis_x, base.channel.p_mis_x);
        assert_eq!(s.timing.f_rep, 1e8);
    }

    #[test]
    fn stability_series_deterministic() {
        let system = SweepSpec::default().bundle.system;
        let cfg = McConfig { mode: McMode::Phenomenological, seed: 3, ..Default::default() };
        let a = stability_run(&system, &cfg, 4, 200_000).unwrap();
        let b = stability_run(&system, &cfg, 4, 200_000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 4);
        assert!(stability_run(&system, &cfg, 1, 1000).is_err());
    }

    #[test]
    fn stability_sigma_rescaling() {
        let system = SweepSpec::default().bundle.system;
        let cfg = McConfig { mode: McMode::Phenomenological, seed: 8, ..Default::default() };
        let res = stability_run(&system, &cfg, 8, 4_560_000).unwrap();
        let s = res.summary;
        assert_relative_eq!(s.scale, 1e-3, max_relative = 1e-12);
        assert_relative_eq!(
            s.sigma_z0_matched,
            s.sigma_z0 * 1e-3f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn table1_preset_tracks_measured_rates() {
        let bundle = ParamBundle::default();
        let rows = table1_reproduction(&bundle).unwrap();
        let reference = [1.59e-4, 3.04e-5, 3.54e-6, 1.99e-7];
        let mut last = f64::INFINITY;
        for ((_, report), &want) in rows.iter().zip(&reference) {
            let r = report.r_secure;
            assert!(r / want < 3.0 && want / r < 3.0, "r = {r}, want {want}");
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn table1_preset_frozen_values() {
        // Regression locks from an independent evaluation of the pipeline.
        let rows = table1_reproduction(&ParamBundle::default()).unwrap();
        let frozen = [
            2.16892763157894737e-4,
            3.43822368421052632e-5,
            3.77587719298245614e-6,
            2.51940789473684211e-7,
        ];
        for ((_, report), &want) in rows.iter().zip(&frozen) {
            assert_relative_eq!(report.r_secure, want, max_relative = 1e-9);
        }
    }
}
