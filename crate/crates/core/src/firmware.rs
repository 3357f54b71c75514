//! The bundled firmware corpus.
//!
//! Each program ships with its assembly source, a campaign config and a
//! benign seed that drives it to `Exit(0)`. Prebuilt images and symbol
//! files live next to the sources in `firmware/`.

use crate::asm::{assemble, Assembly};
use crate::config::CampaignConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Firmware {
    pub name: &'static str,
    pub source: &'static str,
    pub config_json: &'static str,
    pub seed: &'static [u8],
}

macro_rules! firmware {
    ($name:literal) => {
        Firmware {
            name: $name,
            source: include_str!(concat!("../firmware/", $name, ".s")),
            config_json: include_str!(concat!("../firmware/", $name, ".json")),
            seed: include_bytes!(concat!("../firmware/", $name, ".seed")),
        }
    };
}

pub const FW_CAN_TIMER: Firmware = firmware!("fw_can_timer");
pub const FW_UART_ECHO: Firmware = firmware!("fw_uart_echo");
pub const FW_I2C_LEN: Firmware = firmware!("fw_i2c_len");
pub const FW_HANG_NOEI: Firmware = firmware!("fw_hang_noei");
pub const FW_TXE_POLL: Firmware = firmware!("fw_txe_poll");
pub const FW_CAN_FILTER: Firmware = firmware!("fw_can_filter");

pub const ALL: [Firmware; 6] = [FW_CAN_TIMER, FW_UART_ECHO, FW_I2C_LEN, FW_HANG_NOEI, FW_TXE_POLL, FW_CAN_FILTER];

pub fn by_name(name: &str) -> Option<Firmware> {
    ALL.into_iter().find(|f| f.name == name)
}

impl Firmware {
    pub fn assemble(&self) -> Assembly {
        assemble(self.source).unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }

    /// Config with the firmware's symbols applied.
    pub fn config(&self) -> CampaignConfig {
        let mut cfg = CampaignConfig::from_json(self.config_json).unwrap_or_else(|e| panic!("{}: {e}", self.name));
        cfg.apply_symbols(&self.assemble().symbols);
        cfg
    }

    /// Image, config and symbols in one go.
    pub fn build(&self) -> (Vec<u8>, CampaignConfig) {
        let asm = self.assemble();
        let mut cfg = CampaignConfig::from_json(self.config_json).unwrap_or_else(|e| panic!("{}: {e}", self.name));
        cfg.apply_symbols(&asm.symbols);
        (asm.image, cfg)
    }
}
