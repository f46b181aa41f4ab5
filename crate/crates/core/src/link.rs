//! One coded transmission: message, encoder, pad, mapper, impaired channel,
//! IQI-agnostic demapper, pad removal.

use rand::Rng;

use crate::codec::{strip_pad_llrs, zero_pad, LinearCode};
use crate::error::Result;
use crate::impairments::{transmit_chain, ChannelConfig, IqiParams, IqiScenario};
use crate::modem::Qam;

#[derive(Debug, Clone)]
pub struct Link {
    pub code: LinearCode,
    pub qam: Qam,
    pub tx: IqiParams,
    pub rx: IqiParams,
    /// Real path gain; the receiver knows it and `N0`, but not the IQI.
    pub h: f64,
}

/// Result of [`Link::transmit`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub message: Vec<u8>,
    pub codeword: Vec<u8>,
    /// Channel LLRs of the `n` code bits.
    pub llrs: Vec<f64>,
}

impl Link {
    pub fn new(code: LinearCode, qam: Qam, scenario: &IqiScenario) -> Result<Self> {
        let (tx, rx) = scenario.mixers()?;
        Ok(Link {
            code,
            qam,
            tx,
            rx,
            h: 1.0,
        })
    }

    /// Sends a uniformly random message at `snr_db`.
    pub fn transmit<R: Rng + ?Sized>(&self, snr_db: f64, rng: &mut R) -> Result<Transmission> {
        let message: Vec<u8> = (0..self.code.k_info()).map(|_| rng.random_range(0..2u8)).collect();
        self.transmit_message(message, snr_db, rng)
    }

    pub fn transmit_message<R: Rng + ?Sized>(&self, message: Vec<u8>, snr_db: f64, rng: &mut R) -> Result<Transmission> {
        let codeword = self.code.encode(&message)?;
        let ch = ChannelConfig::from_snr_db(snr_db, self.h);
        let symbols = self.qam.map(&zero_pad(&codeword, self.qam.bits_per_symbol()))?;
        let received = transmit_chain(&symbols, &self.tx, &self.rx, &ch, rng);
        let llrs = self.qam.demap(&received, ch.h, ch.n0)?;
        Ok(Transmission {
            llrs: strip_pad_llrs(&llrs, self.code.n())?,
            message,
            codeword,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{default_parity_check, derive_generator};
    use crate::modem::hard_decision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn high_snr_round_trip_and_padding() {
        let code = derive_generator(&default_parity_check(1));
        for bps in [2, 4] {
            let link = Link::new(code.clone(), Qam::new(bps).unwrap(), &IqiScenario::ideal()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let t = link.transmit(60.0, &mut rng).unwrap();
            assert_eq!(t.llrs.len(), 63);
            assert_eq!(hard_decision(&t.llrs), t.codeword);
            assert_eq!(code.extract_message(&t.codeword), t.message);
        }
    }

    #[test]
    fn deterministic_per_rng() {
        let code = derive_generator(&default_parity_check(1));
        let link = Link::new(code, Qam::qpsk(), &IqiScenario::symmetric(20.0)).unwrap();
        let a = link.transmit(5.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = link.transmit(5.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
