//! Photon-number statistics of the sub-Poissonian source and the analytic
//! click/error probability model for source + fiber + detector.
//!
//! The emission distribution is truncated at two photons: the two-photon
//! probability is fixed by the second-order autocorrelation,
//! p2 = nbar^2 g2 / 2, with p1 = nbar - 2 p2 and p0 the remainder. This family
//! is closed under loss (thinning keeps g2 invariant), which is what makes the
//! placement of the efficiency factors a matter of bookkeeping only.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PhotoStatsError {
    #[error("source too bright for two-photon truncation: {0}")]
    Truncation(&'static str),
    #[error("parameter out of range: {0}")]
    Domain(&'static str),
}

/// Source brightness and purity: mean photon number per pulse at the channel
/// input, and g2(0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStats {
    pub mean_photon_number: f64,
    pub g2: f64,
}

/// Truncated photon-number probabilities (0, 1, 2 photons per pulse).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonNumberDist {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PhotonNumberDist {
    pub fn mean(&self) -> f64 {
        self.p1 + 2.0 * self.p2
    }

    /// g2(0) of the truncated distribution: 2 p2 / (p1 + 2 p2)^2.
    pub fn g2(&self) -> f64 {
        let m = self.mean();
        if m == 0.0 {
            0.0
        } else {
            2.0 * self.p2 / (m * m)
        }
    }
}

/// Channel and detection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDetParams {
    /// Fiber attenuation in dB/km.
    pub alpha: f64,
    /// Fiber length in km.
    pub length_km: f64,
    /// Encoder transmission (informational; the quoted mean photon number is
    /// already measured at the channel input).
    pub eta_encoder: f64,
    /// Decoder transmission.
    pub eta_decoder: f64,
    /// Detector efficiency.
    pub eta_detector: f64,
    /// Dark count probability per detection window.
    pub p_dc: f64,
    /// Misalignment probability in the Z basis.
    pub p_mis_z: f64,
    /// Misalignment probability in the X basis.
    pub p_mis_x: f64,
    /// Detection window width in seconds.
    pub tau_w: f64,
    /// Detector dead time in seconds.
    pub tau_dt: f64,
}

/// Per-gated-pulse click and error probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickErrorProbs {
    pub p_click: f64,
    pub p_error: f64,
}

/// Selects how the misalignment factor multiplies the n >= 1 click terms in
/// the error probability.
///
/// `AsPrinted` multiplies the full click bracket (including its dark-count
/// share); `PhotonOnly` multiplies only the photon-induced share. The printed
/// form is the default; the alternative exists for sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeVariant {
    #[default]
    AsPrinted,
    PhotonOnly,
}

/// Builds the truncated photon-number distribution for mean `n_bar` and
/// autocorrelation `g2`.
pub fn photon_number_dist(n_bar: f64, g2: f64) -> Result<PhotonNumberDist, PhotoStatsError> {
    if !(n_bar > 0.0) {
        return Err(PhotoStatsError::Domain("n_bar must be positive"));
    }
    if !(g2 >= 0.0) {
        return Err(PhotoStatsError::Domain("g2 must be non-negative"));
    }
    let p2 = n_bar * n_bar * g2 / 2.0;
    let p1 = n_bar - 2.0 * p2;
    let p0 = 1.0 - p1 - p2;
    if p1 < 0.0 {
        return Err(PhotoStatsError::Truncation("p1 < 0 (n_bar * g2 > 1)"));
    }
    if p0 < 0.0 {
        return Err(PhotoStatsError::Truncation("p0 < 0 (mean too large)"));
    }
    Ok(PhotonNumberDist { p0, p1, p2 })
}

/// Applies binomial loss with transmission `eta` to a truncated distribution.
///
/// Identical to rebuilding the distribution from the thinned mean with the
/// same g2; used by the ordering-invariance checks.
pub fn thin(dist: PhotonNumberDist, eta: f64) -> PhotonNumberDist {
    let p2 = dist.p2 * eta * eta;
    let p1 = dist.p1 * eta + 2.0 * dist.p2 * eta * (1.0 - eta);
    PhotonNumberDist {
        p0: 1.0 - p1 - p2,
        p1,
        p2,
    }
}

/// Fiber transmittance 10^(-alpha L / 10).
pub fn fiber_transmittance(alpha: f64, length_km: f64) -> f64 {
    10f64.powf(-alpha * length_km / 10.0)
}

/// Click and error probabilities per gated pulse.
///
/// p_c = sum_n p_n [1 - (1 - p_dc)(1 - eta)^n],
/// p_e = p0 p_dc + sum_{n>=1} p_n [1 - (1 - p_dc)(1 - eta)^n] p_mis.
pub fn click_error_probs(
    dist: PhotonNumberDist,
    eta_total: f64,
    p_dc: f64,
    p_mis: f64,
) -> ClickErrorProbs {
    click_error_probs_variant(dist, eta_total, p_dc, p_mis, PeVariant::AsPrinted)
}

pub fn click_error_probs_variant(
    dist: PhotonNumberDist,
    eta_total: f64,
    p_dc: f64,
    p_mis: f64,
    variant: PeVariant,
) -> ClickErrorProbs {
    // capture(n) = 1 - (1 - eta)^n, expanded to avoid cancellation at tiny
    // eta; bracket(n) = 1 - (1 - p_dc)(1 - eta)^n rearranged the same way.
    let capture1 = eta_total;
    let capture2 = eta_total * (2.0 - eta_total);
    let b1 = p_dc + (1.0 - p_dc) * capture1;
    let b2 = p_dc + (1.0 - p_dc) * capture2;
    let p_click = dist.p0 * p_dc + dist.p1 * b1 + dist.p2 * b2;
    let detected = dist.p1 * capture1 + dist.p2 * capture2;
    let p_error = match variant {
        // Literal printed form: emission vacuum feeds the dark term, the
        // full bracket (including its dark cross term) feeds p_mis.
        PeVariant::AsPrinted => dist.p0 * p_dc + (dist.p1 * b1 + dist.p2 * b2) * p_mis,
        // Partitioned form: a click is either dark-only (an error outright)
        // or a detected photon (an error with probability p_mis). This is
        // the reading invariant under moving efficiency factors between the
        // distribution and eta_total; it differs from the printed form by
        // O(p_dc * n_bar) cross terms.
        PeVariant::PhotonOnly => (1.0 - detected) * p_dc + detected * p_mis,
    };
    ClickErrorProbs { p_click, p_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_source_has_no_two_photon_term() {
        let d = photon_number_dist(0.3, 0.0).unwrap();
        assert_eq!(d.p2, 0.0);
        assert_abs_diff_eq!(d.p1, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(d.p0, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn dist_direct_arithmetic() {
        let d = photon_number_dist(0.01, 0.0085).unwrap();
        assert_relative_eq!(d.p2, 4.25e-7, max_relative = 1e-12);
        assert_relative_eq!(d.p1, 9.99915e-3, max_relative = 1e-12);
        assert_abs_diff_eq!(d.p0 + d.p1 + d.p2, 1.0, epsilon = 1e-12);

        // nbar folded through decoder and detector efficiencies
        let d = photon_number_dist(8.918e-4, 0.0085).unwrap();
        assert_relative_eq!(d.p2, 8.918e-4 * 8.918e-4 * 0.0085 / 2.0, max_relative = 1e-12);
        assert_relative_eq!(d.p2, 3.38e-9, max_relative = 1e-2);
    }

    #[test]
    fn dist_rejects_overbright_source() {
        assert!(photon_number_dist(2.0, 1.0).is_err());
        assert!(photon_number_dist(0.0, 0.5).is_err());
        assert!(photon_number_dist(0.1, -0.1).is_err());
    }

    #[test]
    fn thin_identity_and_total_loss() {
        let d = photon_number_dist(0.05, 0.3).unwrap();
        let same = thin(d, 1.0);
        assert_abs_diff_eq!(same.p1, d.p1, epsilon = 1e-15);
        assert_abs_diff_eq!(same.p2, d.p2, epsilon = 1e-15);
        let none = thin(d, 0.0);
        assert_eq!(none.p1, 0.0);
        assert_eq!(none.p2, 0.0);
        assert_abs_diff_eq!(none.p0, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fiber_transmittance_values() {
        assert_eq!(fiber_transmittance(0.1956, 0.0), 1.0);
        assert_relative_eq!(fiber_transmittance(0.1956, 40.0), 0.16504409856522788, max_relative = 1e-12);
        assert_relative_eq!(fiber_transmittance(0.1956, 40.0), 0.1651, max_relative = 1e-3);
        assert_relative_eq!(fiber_transmittance(0.1956, 120.0), 4.4957277130190552e-3, max_relative = 1e-12);
        assert_relative_eq!(fiber_transmittance(0.1956, 120.0), 4.50e-3, max_relative = 1e-3);
    }

    #[test]
    fn click_probs_trivial_cases() {
        let d = photon_number_dist(0.01, 0.02).unwrap();
        let off = click_error_probs(d, 0.0, 0.0, 0.5);
        assert_eq!(off.p_click, 0.0);
        assert_eq!(off.p_error, 0.0);

        // Vacuum source clicks only on dark counts.
        let vacuum = PhotonNumberDist { p0: 1.0, p1: 0.0, p2: 0.0 };
        let v = click_error_probs(vacuum, 0.5, 1e-4, 0.3);
        assert_abs_diff_eq!(v.p_click, 1e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(v.p_error, 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn click_probs_regression_40km() {
        // Independent high-precision summation oracle, frozen.
        let d = photon_number_dist(2.89e-3 * 0.417 * 0.74, 0.0085).unwrap();
        let eta40 = fiber_transmittance(0.1956, 40.0);
        let probs = click_error_probs(d, eta40, 1.33e-6, 0.01);
        assert_relative_eq!(probs.p_click, 1.4851541210560859e-4, max_relative = 1e-12);
        assert_relative_eq!(probs.p_error, 2.8006798974500274e-6, max_relative = 1e-12);
        let partitioned = click_error_probs_variant(d, eta40, 1.33e-6, 0.01, PeVariant::PhotonOnly);
        assert_eq!(partitioned.p_click, probs.p_click);
        assert_relative_eq!(partitioned.p_error, 2.8016603217662134e-6, max_relative = 1e-12);
    }

    #[test]
    fn pe_variants_differ_only_in_dark_cross_term() {
        let d = photon_number_dist(1e-3, 0.01).unwrap();
        let a = click_error_probs_variant(d, 0.2, 1e-5, 0.02, PeVariant::AsPrinted);
        let b = click_error_probs_variant(d, 0.2, 1e-5, 0.02, PeVariant::PhotonOnly);
        assert_eq!(a.p_click, b.p_click);
        // Partitioned form counts lost-photon dark clicks as full errors;
        // the printed form weights them by p_mis instead.
        assert!(b.p_error > a.p_error);
        let lost = d.p1 * (1.0 - 0.2) + d.p2 * (1.0 - 0.2f64).powi(2);
        assert_relative_eq!(b.p_error - a.p_error, lost * 1e-5 * (1.0 - 0.02), max_relative = 1e-9);
    }

    #[test]
    fn qber_limit_is_p_mis() {
        let d = photon_number_dist(0.05, 0.01).unwrap();
        let probs = click_error_probs(d, 1.0, 0.0, 0.031);
        assert_relative_eq!(probs.p_error / probs.p_click, 0.031, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn thinning_commutes_with_dist_construction(
            n_bar in 1e-5f64..0.5,
            g2 in 0.0f64..1.0,
            eta in 0.0f64..1.0,
        ) {
            let thinned = thin(photon_number_dist(n_bar, g2).unwrap(), eta);
            let direct = photon_number_dist(n_bar * eta, g2);
            if eta > 0.0 {
                let direct = direct.unwrap();
                prop_assert!((thinned.p0 - direct.p0).abs() <= 1e-12 * direct.p0.max(1.0));
                prop_assert!((thinned.p1 - direct.p1).abs() <= 1e-12 * direct.p1.max(1e-30));
                prop_assert!((thinned.p2 - direct.p2).abs() <= 1e-12 * direct.p2.max(1e-30));
            }
        }

        #[test]
        fn g2_closed_under_thinning(
            n_bar in 1e-5f64..0.5,
            g2 in 1e-6f64..1.0,
            eta in 1e-3f64..1.0,
        ) {
            let d = photon_number_dist(n_bar, g2).unwrap();
            let t = thin(d, eta);
            prop_assert!((t.g2() - d.g2()).abs() <= 1e-9 * d.g2().max(1e-12));
        }

        #[test]
        fn loss_ordering_invariance(
            n_bar in 1e-5f64..0.1,
            g2 in 0.0f64..0.2,
            eta_bd in 1e-3f64..1.0,
            eta_fib in 1e-6f64..1.0,
            p_dc in 0.0f64..1e-4,
            p_mis in 0.0f64..0.1,
        ) {
            // Folding eta_bd into the distribution vs into eta_total; the
            // partitioned error form is the ordering-invariant one.
            let folded = click_error_probs_variant(
                photon_number_dist(n_bar * eta_bd, g2).unwrap(), eta_fib, p_dc, p_mis,
                PeVariant::PhotonOnly);
            let unfolded = click_error_probs_variant(
                photon_number_dist(n_bar, g2).unwrap(), eta_fib * eta_bd, p_dc, p_mis,
                PeVariant::PhotonOnly);
            prop_assert!((folded.p_click - unfolded.p_click).abs()
                <= 1e-12 * folded.p_click.max(1e-30));
            prop_assert!((folded.p_error - unfolded.p_error).abs()
                <= 1e-12 * folded.p_error.max(1e-30));
        }

        #[test]
        fn p_click_monotone_and_bounds(
            n_bar in 1e-5f64..0.1,
            g2 in 0.0f64..0.2,
            eta in 0.0f64..1.0,
            p_dc in 0.0f64..1e-3,
            p_mis in 0.0f64..1.0,
        ) {
            let d = photon_number_dist(n_bar, g2).unwrap();
            let probs = click_error_probs(d, eta, p_dc, p_mis);
            prop_assert!(probs.p_error <= probs.p_click + 1e-15);
            prop_assert!(probs.p_click <= 1.0);
            // monotone in eta and p_dc
            let more_eta = click_error_probs(d, (eta + 0.1).min(1.0), p_dc, p_mis);
            prop_assert!(more_eta.p_click >= probs.p_click - 1e-15);
            let more_dc = click_error_probs(d, eta, (p_dc + 1e-4).min(1.0), p_mis);
            prop_assert!(more_dc.p_click >= probs.p_click - 1e-15);
        }
    }
}
