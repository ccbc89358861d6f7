//! QAM mapping, cyclic-prefix OFDM and uplink frame scheduling.

mod frame;
mod qam;
mod symbol;

pub use frame::{default_detection_symbols, FramePlan, TxFrame, UserPayload};
pub use qam::{qam_demodulate_hard, qam_modulate, QamConstellation};
pub use symbol::{build_convolution_matrix, ofdm_demodulate, ofdm_modulate, OfdmSymbol};
