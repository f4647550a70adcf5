//! Linear-algebraic model of the time-bin encoder and decoder.
//!
//! The encoder is a Sagnac loop (phase modulator at phase `theta1`) feeding an
//! asymmetric Mach-Zehnder stage, which maps each photon onto the early/late
//! time-bin basis. The decoder is a second asymmetric Mach-Zehnder with a phase
//! shifter at `theta2`; its output spreads a qubit over the joint
//! time x path basis {eS, eL, lS, lL}, observed in three detection windows
//! W1/W2/W3. Amplitudes keep their global phases so the closed-form state
//! expressions can be asserted verbatim; probability-level quantities are
//! phase-blind.

use num_complex::Complex64;

/// Phase pair driving one encode/decode round.
///
/// `theta1` is the encoder (Sagnac phase modulator) phase; the three nominal
/// settings {0, pi/2, pi} prepare Z0, X0 and Z1. `theta2` is the decoder
/// phase-shifter phase and is continuous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSetting {
    pub theta1: f64,
    pub theta2: f64,
}

/// Qubit amplitudes over the time-bin basis (|e>, |l>).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBinQubit {
    pub amp_e: Complex64,
    pub amp_l: Complex64,
}

impl TimeBinQubit {
    pub fn norm_sq(&self) -> f64 {
        self.amp_e.norm_sqr() + self.amp_l.norm_sqr()
    }
}

/// Amplitudes over the joint early/late x short/long basis after the decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub amp_es: Complex64,
    pub amp_el: Complex64,
    pub amp_ls: Complex64,
    pub amp_ll: Complex64,
}

impl JointState {
    pub fn norm_sq(&self) -> f64 {
        self.amp_es.norm_sqr()
            + self.amp_el.norm_sqr()
            + self.amp_ls.norm_sqr()
            + self.amp_ll.norm_sqr()
    }
}

/// Per-emitted-photon probabilities of landing in each detection window.
///
/// W2 collects the coherent sum of the |e,L> and |l,S> amplitudes. The unused
/// beam-splitter output ports are accounted for by `p_discard`, so the four
/// probabilities always sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowProbs {
    pub p_w1: f64,
    pub p_w2: f64,
    pub p_w3: f64,
    pub p_discard: f64,
}

impl WindowProbs {
    /// Total detected fraction over the three windows.
    pub fn p_detected(&self) -> f64 {
        self.p_w1 + self.p_w2 + self.p_w3
    }
}

/// Timing parameters of the interferometer chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams {
    /// Excitation repetition rate in Hz.
    pub f_rep: f64,
    /// Sagnac-loop arm delay in seconds (half the pulse period).
    pub delta: f64,
    /// Encoder/decoder Mach-Zehnder delay in seconds; equals the window width.
    pub delta1: f64,
    /// Emitter decay time in seconds.
    pub lifetime_tau: f64,
}

impl TimingParams {
    /// Checks the delay bookkeeping: `delta` within 5% of half a period,
    /// `delta1` at most a third of a period (within 5%), all positive.
    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.f_rep > 0.0 && self.delta > 0.0 && self.delta1 > 0.0 && self.lifetime_tau > 0.0)
        {
            return Err(OpticsError::InvalidTiming("all timing values must be positive"));
        }
        let half_period = 0.5 / self.f_rep;
        if (self.delta - half_period).abs() > 0.05 * half_period {
            return Err(OpticsError::InvalidTiming("delta must be ~1/(2 f_rep)"));
        }
        if self.delta1 > 1.05 / (3.0 * self.f_rep) {
            return Err(OpticsError::InvalidTiming("delta1 must be <= 1/(3 f_rep)"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OpticsError {
    #[error("v_pi must be positive, got {0}")]
    NonPositiveVpi(f64),
    #[error("invalid timing parameters: {0}")]
    InvalidTiming(&'static str),
}

/// The 2x2 beam-splitter matrix (1/sqrt(2)) [[i, 1], [1, i]].
pub fn beam_splitter_matrix() -> [[Complex64; 2]; 2] {
    let s = 1.0 / std::f64::consts::SQRT_2;
    let i = Complex64::i();
    [
        [i * s, Complex64::new(s, 0.0)],
        [Complex64::new(s, 0.0), i * s],
    ]
}

/// Converts a modulation voltage to a phase: pi * v / v_pi.
pub fn volts_to_phase(v: f64, v_pi: f64) -> Result<f64, OpticsError> {
    if v_pi <= 0.0 {
        return Err(OpticsError::NonPositiveVpi(v_pi));
    }
    Ok(std::f64::consts::PI * v / v_pi)
}

/// Path state inside the Sagnac loop for phase `theta1`:
/// i e^{i theta1/2} (-sin(theta1/2) |S> + cos(theta1/2) |L>).
///
/// Returned as (amp_s, amp_l). Exposed so the intermediate interference step
/// can be tested independently of the time-bin translation.
pub fn sni_path_state(theta1: f64) -> (Complex64, Complex64) {
    let half = theta1 / 2.0;
    let phase = Complex64::i() * Complex64::from_polar(1.0, half);
    (phase * -half.sin(), phase * half.cos())
}

/// Encodes phase `theta1` into a time-bin qubit:
/// (1/sqrt(2)) e^{i theta1/2} (sin(theta1/2) |e> + i cos(theta1/2) |l>).
///
/// The norm-squared is exactly 1/2: only one output port of the encoder's
/// final beam splitter is used.
pub fn encode(theta1: f64) -> TimeBinQubit {
    let half = theta1 / 2.0;
    let pre = Complex64::from_polar(1.0 / std::f64::consts::SQRT_2, half);
    TimeBinQubit {
        amp_e: pre * half.sin(),
        amp_l: pre * Complex64::i() * half.cos(),
    }
}

/// Decodes a time-bin qubit through the receiver Mach-Zehnder at phase
/// `theta2`, keeping only the used output port of the final beam splitter.
///
/// The short-path amplitudes pick up the phase-shifter factor e^{i theta2}
/// and the beam-splitter reflection phase i; the used-port projection halves
/// the norm-squared.
pub fn decode(qubit: TimeBinQubit, theta2: f64) -> JointState {
    decode_with_channel_phase(qubit, theta2, 0.0)
}

/// Like [`decode`], with an explicit global phase accumulated in the quantum
/// channel between encoder and decoder (default 0 in the nominal model; it is
/// global and therefore cancels in every probability).
pub fn decode_with_channel_phase(qubit: TimeBinQubit, theta2: f64, channel_phase: f64) -> JointState {
    let ch = Complex64::from_polar(1.0, channel_phase);
    let a_e = qubit.amp_e * ch;
    let a_l = qubit.amp_l * ch;
    // Path transform per arm: |S> gets (i e^{i theta2})/sqrt(2), |L> gets
    // 1/sqrt(2); used BS4 port adds another i on |S> and a 1/sqrt(2) overall.
    let ps = Complex64::from_polar(1.0, theta2);
    let s_factor = Complex64::i() * ps * Complex64::i() * 0.5; // = -e^{i theta2}/2
    let l_factor = Complex64::new(0.5, 0.0);
    JointState {
        amp_es: a_e * s_factor,
        amp_el: a_e * l_factor,
        amp_ls: a_l * s_factor,
        amp_ll: a_l * l_factor,
    }
}

/// Detection-window probabilities for one encode/decode round, per emitted
/// photon. Computed from the full matrix product; equal to the closed forms
/// p_w1 = sin^2(theta1/2)/8, p_w2 = (1 + sin theta1 sin theta2)/8,
/// p_w3 = cos^2(theta1/2)/8.
pub fn window_probabilities(theta1: f64, theta2: f64) -> WindowProbs {
    let joint = decode(encode(theta1), theta2);
    let p_w1 = joint.amp_es.norm_sqr();
    let p_w2 = (joint.amp_el + joint.amp_ls).norm_sqr();
    let p_w3 = joint.amp_ll.norm_sqr();
    WindowProbs {
        p_w1,
        p_w2,
        p_w3,
        p_discard: 1.0 - p_w1 - p_w2 - p_w3,
    }
}
