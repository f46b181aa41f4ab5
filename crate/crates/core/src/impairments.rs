//! Transmitter/receiver IQ imbalance and the scalar AWGN channel.
//!
//! A mixer with amplitude mismatch `g` and phase mismatch `theta` produces
//! `k1 * x + k2 * conj(x)`. Transmit side:
//! `k1 = (1 + g e^{j theta}) / 2`, `k2 = (1 - g e^{-j theta}) / 2`, so that
//! `k1 = 1 - conj(k2)`. Receive side:
//! `k1 = (1 + g e^{-j theta}) / 2`, `k2 = (1 - g e^{j theta}) / 2`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Tx,
    Rx,
}

/// IQ imbalance of one mixer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqiParams {
    pub g: f64,
    pub theta: f64,
    pub side: Side,
    pub k1: Complex64,
    pub k2: Complex64,
}

impl IqiParams {
    pub fn ideal(side: Side) -> Self {
        IqiParams {
            g: 1.0,
            theta: 0.0,
            side,
            k1: Complex64::new(1.0, 0.0),
            k2: Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.g == 1.0 && self.theta == 0.0
    }

    /// Image rejection ratio, linear.
    pub fn irr(&self) -> f64 {
        irr(self)
    }
}

/// Mixer coefficients for amplitude mismatch `g` and phase mismatch `theta` (radians).
pub fn iqi_coeffs(g: f64, theta: f64, side: Side) -> Result<IqiParams> {
    if !(g > 0.0) || !g.is_finite() || !theta.is_finite() {
        return Err(contract(format!("IQI needs finite g > 0 and finite theta, got g={g}, theta={theta}")));
    }
    let half = Complex64::new(0.5, 0.0);
    let (k1, k2) = match side {
        Side::Tx => (
            half * (1.0 + Complex64::from_polar(g, theta)),
            half * (1.0 - Complex64::from_polar(g, -theta)),
        ),
        Side::Rx => (
            half * (1.0 + Complex64::from_polar(g, -theta)),
            half * (1.0 - Complex64::from_polar(g, theta)),
        ),
    };
    Ok(IqiParams { g, theta, side, k1, k2 })
}

/// `|k1|^2 / |k2|^2`; `+inf` when the image coefficient vanishes.
pub fn irr(p: &IqiParams) -> f64 {
    let image = p.k2.norm_sqr();
    if image == 0.0 {
        f64::INFINITY
    } else {
        p.k1.norm_sqr() / image
    }
}

/// Largest IRR (linear) reachable with phase mismatch `theta`: `cot^2(theta / 2)`.
pub fn irr_supremum(theta: f64) -> f64 {
    let t = (theta / 2.0).tan();
    if t == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (t * t)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Amplitude mismatch `g >= 1` that yields the requested IRR at phase mismatch `theta`.
///
/// IRR as a function of `g` is `(1 + g^2 + 2 g cos(theta)) / (1 + g^2 - 2 g cos(theta))`
/// for both sides, peaking at `g = 1`. Writing `u = g + 1/g` gives
/// `u = 2 cos(theta) (I + 1) / (I - 1)`, solved here on the `g >= 1` branch.
pub fn g_from_irr(irr_db: f64, theta: f64, _side: Side) -> Result<f64> {
    let target = db_to_linear(irr_db);
    let sup = irr_supremum(theta);
    if target.is_infinite() && sup.is_infinite() {
        return Ok(1.0);
    }
    if !(target > 1.0) || target > sup * (1.0 + 1e-12) {
        return Err(Error::InfeasibleIrr {
            requested_db: irr_db,
            theta_deg: theta.to_degrees(),
            supremum_db: linear_to_db(sup),
        });
    }
    let u = (2.0 * theta.cos() * (target + 1.0) / (target - 1.0)).max(2.0);
    Ok((u + (u * u - 4.0).sqrt()) / 2.0)
}

/// Mixer with the requested IRR at phase mismatch `theta`.
///
/// Uses `g_from_irr` when the target is reachable. Above the supremum the
/// amplitude is held at `g = 1` and the phase shrinks to
/// `2 atan(10^(-irr_db / 20))`, which hits the target exactly. `None` is an
/// ideal mixer.
pub fn mixer_for_irr(irr_db: Option<f64>, theta: f64, side: Side) -> Result<IqiParams> {
    let Some(db) = irr_db else {
        return Ok(IqiParams::ideal(side));
    };
    if db.is_infinite() && db > 0.0 {
        return Ok(IqiParams::ideal(side));
    }
    match g_from_irr(db, theta, side) {
        Ok(g) => iqi_coeffs(g, theta, side),
        Err(Error::InfeasibleIrr { .. }) if db > 0.0 => {
            let phase = 2.0 * 10f64.powf(-db / 20.0).atan();
            iqi_coeffs(1.0, phase.copysign(theta), side)
        }
        Err(e) => Err(e),
    }
}

/// IQ imbalance setting of a link: per-side IRR in dB (`None` is ideal) and
/// the common phase mismatch in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqiScenario {
    pub tx_irr_db: Option<f64>,
    pub rx_irr_db: Option<f64>,
    pub theta_deg: f64,
}

impl IqiScenario {
    pub const DEFAULT_THETA_DEG: f64 = 5.0;

    pub fn ideal() -> Self {
        IqiScenario {
            tx_irr_db: None,
            rx_irr_db: None,
            theta_deg: Self::DEFAULT_THETA_DEG,
        }
    }

    /// Same IRR on both sides at the default phase mismatch.
    pub fn symmetric(irr_db: f64) -> Self {
        IqiScenario {
            tx_irr_db: Some(irr_db),
            rx_irr_db: Some(irr_db),
            theta_deg: Self::DEFAULT_THETA_DEG,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.tx_irr_db.is_none() && self.rx_irr_db.is_none()
    }

    /// `(tx, rx)` mixers.
    pub fn mixers(&self) -> Result<(IqiParams, IqiParams)> {
        let theta = self.theta_deg.to_radians();
        Ok((
            mixer_for_irr(self.tx_irr_db, theta, Side::Tx)?,
            mixer_for_irr(self.rx_irr_db, theta, Side::Rx)?,
        ))
    }
}

/// Applies `k1 * x + k2 * conj(x)` elementwise.
pub fn apply_iqi(x: &[Complex64], p: &IqiParams) -> Vec<Complex64> {
    x.iter().map(|&s| p.k1 * s + p.k2 * s.conj()).collect()
}

/// Scalar path gain and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Real path gain.
    pub h: f64,
    /// Complex noise variance `N0`.
    pub n0: f64,
}

impl ChannelConfig {
    /// Unit average symbol power assumed: `rho = h^2 / N0`.
    pub fn from_snr_db(snr_db: f64, h: f64) -> Self {
        ChannelConfig {
            h,
            n0: h * h / db_to_linear(snr_db),
        }
    }

    pub fn snr(&self) -> f64 {
        self.h * self.h / self.n0
    }

    pub fn snr_db(&self) -> f64 {
        linear_to_db(self.snr())
    }
}

/// Draws one circularly-symmetric complex Gaussian sample of variance `n0`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, n0: f64) -> Complex64 {
    let sigma = (n0 / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sigma * re, sigma * im)
}

/// `h * s + n` with `n ~ CN(0, N0)`.
pub fn awgn<R: Rng + ?Sized>(s: &[Complex64], ch: &ChannelConfig, rng: &mut R) -> Vec<Complex64> {
    s.iter().map(|&v| ch.h * v + complex_gaussian(rng, ch.n0)).collect()
}

/// TX mixer, channel, RX mixer, composed in that order.
pub fn transmit_chain<R: Rng + ?Sized>(
    x: &[Complex64],
    tx: &IqiParams,
    rx: &IqiParams,
    ch: &ChannelConfig,
    rng: &mut R,
) -> Vec<Complex64> {
    let s = apply_iqi(x, tx);
    let rb = awgn(&s, ch, rng);
    apply_iqi(&rb, rx)
}

/// Signal-to-distortion-plus-noise ratio, transcribed term by term from the
/// closed form with unconjugated TX coefficients in both numerator and image term.
pub fn sdnr_verbatim(tx: &IqiParams, rx: &IqiParams, rho: f64) -> f64 {
    let signal = (rx.k1 * tx.k1 + rx.k2 * tx.k2).norm_sqr();
    let image = (rx.k1 * tx.k2 + rx.k2 * tx.k1).norm_sqr();
    signal * rho / (image * rho + rx.k1.norm_sqr() + rx.k2.norm_sqr())
}

/// SDNR of the exact TX-channel-RX composition, where conjugating the TX
/// output conjugates its coefficients:
/// `r = h (k1r k1t + k2r conj(k2t)) x + h (k1r k2t + k2r conj(k1t)) conj(x) + k1r n + k2r conj(n)`.
pub fn sdnr(tx: &IqiParams, rx: &IqiParams, rho: f64) -> f64 {
    let (signal, image) = effective_coefficients(tx, rx);
    signal.norm_sqr() * rho / (image.norm_sqr() * rho + rx.k1.norm_sqr() + rx.k2.norm_sqr())
}

/// End-to-end `(direct, image)` coefficients of `x` and `conj(x)` (unit path gain).
pub fn effective_coefficients(tx: &IqiParams, rx: &IqiParams) -> (Complex64, Complex64) {
    (
        rx.k1 * tx.k1 + rx.k2 * tx.k2.conj(),
        rx.k1 * tx.k2 + rx.k2 * tx.k1.conj(),
    )
}
