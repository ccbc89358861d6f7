use num_complex::Complex64;

use super::qam::{qam_modulate, QamConstellation};
use crate::error::{invalid, Error, Result};
use crate::numerics::SimRng;

/// Dimensions and scheduling of one uplink frame.
///
/// Slots `0..P` form the sounding phase, where slot `k` belongs to user `k`
/// alone. Slots `P..P+D` form the detection phase, where every user transmits
/// on every subcarrier. Subcarrier 0 of each user's sounding symbol carries
/// that user's known reference symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    pub n_subcarriers: usize,
    pub n_users: usize,
    pub n_antennas: usize,
    pub cp_len: usize,
    pub n_detection_symbols: usize,
    pub reference_symbols: Vec<Complex64>,
}

impl FramePlan {
    /// Plan with a CP of N/8, `14 - P` detection symbols and corner references.
    pub fn with_defaults(
        n_subcarriers: usize,
        n_users: usize,
        n_antennas: usize,
        constellation: &QamConstellation,
    ) -> Result<Self> {
        Self::new(
            n_subcarriers,
            n_users,
            n_antennas,
            n_subcarriers / 8,
            default_detection_symbols(n_users),
            constellation,
        )
    }

    pub fn new(
        n_subcarriers: usize,
        n_users: usize,
        n_antennas: usize,
        cp_len: usize,
        n_detection_symbols: usize,
        constellation: &QamConstellation,
    ) -> Result<Self> {
        if !n_subcarriers.is_power_of_two() || n_subcarriers < 2 {
            return Err(invalid(format!(
                "subcarrier count {n_subcarriers} must be a power of two >= 2"
            )));
        }
        if n_users == 0 {
            return Err(invalid("at least one user is required"));
        }
        if n_antennas <= n_users {
            return Err(invalid(format!(
                "antenna count {n_antennas} must exceed user count {n_users}"
            )));
        }
        if cp_len >= n_subcarriers {
            return Err(invalid(format!(
                "cyclic prefix {cp_len} must be shorter than N"
            )));
        }
        let reference_symbols = (0..n_users).map(|p| constellation.corner(p)).collect();
        Ok(Self {
            n_subcarriers,
            n_users,
            n_antennas,
            cp_len,
            n_detection_symbols,
            reference_symbols,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.n_users + self.n_detection_symbols
    }

    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    /// Which users transmit in `slot`.
    pub fn active_users(&self, slot: usize) -> std::ops::Range<usize> {
        if slot < self.n_users {
            slot..slot + 1
        } else {
            0..self.n_users
        }
    }

    pub fn check_channel_len(&self, channel_len: usize) -> Result<()> {
        if channel_len > self.cp_len {
            return Err(Error::ChannelTooLong {
                channel_len,
                cp_len: self.cp_len,
            });
        }
        Ok(())
    }

    /// Draws random payload bits for every user and maps them to symbols.
    pub fn draw_frame(&self, rng: &mut SimRng, c: &QamConstellation) -> Result<TxFrame> {
        let n = self.n_subcarriers;
        let k = c.bits_per_symbol();
        let mut users = Vec::with_capacity(self.n_users);
        for p in 0..self.n_users {
            let sounding_bits: Vec<u8> = (0..(n - 1) * k).map(|_| rng.bit()).collect();
            let mut sounding = Vec::with_capacity(n);
            sounding.push(self.reference_symbols[p]);
            sounding.extend_from_slice(&qam_modulate(&sounding_bits, c)?);
            let mut data = Vec::with_capacity(self.n_detection_symbols);
            let mut data_bits = Vec::with_capacity(self.n_detection_symbols);
            for _ in 0..self.n_detection_symbols {
                let bits: Vec<u8> = (0..n * k).map(|_| rng.bit()).collect();
                data.push(qam_modulate(&bits, c)?.into_inner());
                data_bits.push(bits);
            }
            users.push(UserPayload {
                sounding,
                sounding_bits,
                data,
                data_bits,
            });
        }
        Ok(TxFrame { users })
    }
}

pub fn default_detection_symbols(n_users: usize) -> usize {
    14usize.saturating_sub(n_users).max(1)
}

/// What one user sends in a frame, in the frequency domain.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPayload {
    /// Sounding symbol; index 0 is the reference symbol.
    pub sounding: Vec<Complex64>,
    /// Bits on subcarriers `1..N` of the sounding symbol.
    pub sounding_bits: Vec<u8>,
    pub data: Vec<Vec<Complex64>>,
    pub data_bits: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub users: Vec<UserPayload>,
}

impl TxFrame {
    /// Frequency-domain symbol of `user` in `slot`, or `None` when silent.
    pub fn symbol(&self, plan: &FramePlan, user: usize, slot: usize) -> Option<&[Complex64]> {
        if slot < plan.n_users {
            (slot == user).then(|| self.users[user].sounding.as_slice())
        } else {
            Some(self.users[user].data[slot - plan.n_users].as_slice())
        }
    }
}
