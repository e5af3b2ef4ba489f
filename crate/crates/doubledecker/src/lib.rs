//! Symbol-level simulator and codecs for pilot-referenced ambient
//! backscatter over WiFi, ZigBee and BLE carriers.

pub mod channel;
pub mod chipplan;
pub mod error;
pub mod harness;
pub mod ofdm;
pub mod protocols;
pub mod receiver;
pub mod scenario;
pub mod tag;

pub use error::{Error, Result};
