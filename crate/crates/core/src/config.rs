//! Campaign configuration file (JSON).
//!
//! ```json
//! {
//!   "mode": "stateful",
//!   "max_instructions": 200000,
//!   "exit_address": "0x0000004c",
//!   "error_addresses": [],
//!   "peripherals": ["intc", "uart0"],
//!   "injectors": [
//!     { "kind": "uart_byte", "peripheral": "uart0", "period": 200,
//!       "trigger": { "offset": "0x00", "access": "write" } }
//!   ],
//!   "constants": { "uart_tx_drain": 32, "i2c_byte_cycles": 8 },
//!   "prng_seed": 1
//! }
//! ```
//!
//! Numbers may be given as JSON integers or as `"0x..."` strings. Unknown
//! keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::asm::{assemble, AsmError, SymbolTable};
use crate::bus::{PeripheralId, PeripheralSet, PERIPHERAL_WINDOW, DEFAULT_RAM_SIZE};
use crate::inject::{AccessKind, InjectorKind, InjectorSpec, TriggerRule};
use crate::machine::{ExecMode, MachineConfig, DEFAULT_MAX_INSTRUCTIONS};
use crate::periph::Timing;

/// Symbol naming the exit point.
pub const EXIT_SYMBOL: &str = "exit";
/// Symbol naming the assertion-failure handler.
pub const ASSERT_SYMBOL: &str = "assert_fail";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("assembling {path}: {source}")]
    Asm { path: String, source: AsmError },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Integer or hex string.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Num {
    Int(u64),
    Text(HexText),
}

#[derive(Debug, Clone, Copy)]
struct HexText(u64);

impl<'de> Deserialize<'de> for HexText {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_u64(&s).map(HexText).ok_or_else(|| serde::de::Error::custom(format!("bad number {s:?}")))
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16).ok(),
        None => s.parse().ok(),
    }
}

impl Num {
    fn get(self) -> u64 {
        match self {
            Num::Int(v) | Num::Text(HexText(v)) => v,
        }
    }

    fn u32(self, what: &str) -> Result<u32, ConfigError> {
        u32::try_from(self.get()).or_else(|_| invalid(format!("{what} does not fit 32 bits")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    ram_size: Option<Num>,
    max_instructions: Option<Num>,
    mode: ExecMode,
    exit_address: Option<Num>,
    error_addresses: Vec<Num>,
    peripherals: Vec<String>,
    injectors: Vec<RawInjector>,
    constants: Option<RawConstants>,
    prng_seed: Num,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjector {
    kind: InjectorKind,
    peripheral: String,
    period: Option<Num>,
    trigger: RawTrigger,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrigger {
    /// Defaults to the injector's own peripheral.
    peripheral: Option<String>,
    offset: Num,
    access: AccessKind,
    value_mask: Option<Num>,
    value_match: Option<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    uart_tx_drain: Option<Num>,
    i2c_byte_cycles: Option<Num>,
}

/// A validated campaign configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignConfig {
    pub machine: MachineConfig,
    pub prng_seed: u64,
}

fn peripheral(name: &str) -> Result<PeripheralId, ConfigError> {
    PeripheralId::from_name(name).map_or_else(|| invalid(format!("unknown peripheral {name:?}")), Ok)
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<CampaignConfig, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)?;
        Self::validate(raw)
    }

    pub fn load(path: &Path) -> Result<CampaignConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    fn validate(raw: RawConfig) -> Result<CampaignConfig, ConfigError> {
        let ram_size = raw.ram_size.map_or(Ok(DEFAULT_RAM_SIZE), |n| n.u32("ram_size"))?;
        if ram_size == 0 || ram_size % 4 != 0 || ram_size > 0x2000_0000 {
            return invalid(format!("ram_size {ram_size:#x} must be a nonzero multiple of 4 up to 512 MiB"));
        }
        let max_instructions = raw.max_instructions.map_or(DEFAULT_MAX_INSTRUCTIONS, Num::get);
        if max_instructions == 0 {
            return invalid("max_instructions must be positive");
        }
        let exit_address = raw.exit_address.map(|n| n.u32("exit_address")).transpose()?;
        let error_addresses =
            raw.error_addresses.iter().map(|n| n.u32("error address")).collect::<Result<Vec<_>, _>>()?;

        let mut peripherals = PeripheralSet::default();
        for name in &raw.peripherals {
            let id = peripheral(name)?;
            if peripherals.contains(id) {
                return invalid(format!("peripheral {name:?} listed twice"));
            }
            peripherals.insert(id);
        }

        let mut timing = Timing::default();
        if let Some(c) = raw.constants {
            if let Some(v) = c.uart_tx_drain {
                timing.uart_tx_drain = v.get();
            }
            if let Some(v) = c.i2c_byte_cycles {
                timing.i2c_byte_cycles = v.get();
            }
        }

        let mut injectors: Vec<InjectorSpec> = Vec::new();
        for inj in raw.injectors {
            let id = peripheral(&inj.peripheral)?;
            if !peripherals.contains(id) {
                return invalid(format!("injector targets disabled peripheral {:?}", inj.peripheral));
            }
            if !inj.kind.accepts(id) {
                return invalid(format!("injector kind {:?} cannot drive {:?}", inj.kind, inj.peripheral));
            }
            if injectors.iter().any(|i| i.peripheral == id) {
                return invalid(format!("more than one injector for {:?}", inj.peripheral));
            }
            let period = inj.period.map_or(0, Num::get);
            if inj.kind.is_periodic() && period == 0 {
                return invalid(format!("injector for {:?} needs a positive period", inj.peripheral));
            }
            let t = inj.trigger;
            let trig_id = t.peripheral.as_deref().map_or(Ok(id), peripheral)?;
            if !peripherals.contains(trig_id) {
                return invalid(format!("trigger watches disabled peripheral {:?}", trig_id.name()));
            }
            let offset = t.offset.u32("trigger offset")?;
            if offset >= PERIPHERAL_WINDOW {
                return invalid(format!("trigger offset {offset:#x} outside the register window"));
            }
            let value_filter = match (t.value_mask, t.value_match) {
                (None, None) => None,
                (Some(m), Some(v)) => Some((m.u32("value_mask")?, v.u32("value_match")?)),
                _ => return invalid("value_mask and value_match must be given together"),
            };
            injectors.push(InjectorSpec {
                kind: inj.kind,
                peripheral: id,
                period,
                trigger: TriggerRule { peripheral: trig_id, offset, access: t.access, value_filter },
            });
        }

        Ok(CampaignConfig {
            machine: MachineConfig {
                ram_size,
                max_instructions,
                mode: raw.mode,
                exit_address,
                error_addresses,
                peripherals,
                injectors,
                timing,
            },
            prng_seed: raw.prng_seed.get(),
        })
    }

    /// Fills the exit address from the `exit` symbol (unless the config set
    /// one) and adds `assert_fail` to the error addresses.
    pub fn apply_symbols(&mut self, symbols: &SymbolTable) {
        if self.machine.exit_address.is_none() {
            self.machine.exit_address = symbols.get(EXIT_SYMBOL);
        }
        if let Some(addr) = symbols.get(ASSERT_SYMBOL) {
            if !self.machine.error_addresses.contains(&addr) {
                self.machine.error_addresses.push(addr);
            }
        }
    }
}

/// Firmware image, validated config and symbols, ready to run.
#[derive(Debug, Clone)]
pub struct LoadedTarget {
    pub image: Vec<u8>,
    pub config: CampaignConfig,
    pub symbols: SymbolTable,
}

/// Loads a config and a firmware. A `.s` firmware is assembled on the fly
/// and its labels serve as symbols; anything else is a raw image. An
/// explicit symbols file takes precedence. `mode` overrides the config.
pub fn load_target(
    config: &Path,
    firmware: &Path,
    symbols: Option<&Path>,
    mode: Option<ExecMode>,
) -> Result<LoadedTarget, ConfigError> {
    let read = |p: &Path| std::fs::read(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source });
    let mut cfg = CampaignConfig::load(config)?;
    let (image, mut syms) = if firmware.extension().is_some_and(|e| e == "s") {
        let text = String::from_utf8_lossy(&read(firmware)?).into_owned();
        let asm = assemble(&text).map_err(|source| ConfigError::Asm { path: firmware.display().to_string(), source })?;
        (asm.image, asm.symbols)
    } else {
        (read(firmware)?, SymbolTable::default())
    };
    if let Some(p) = symbols {
        let text = String::from_utf8_lossy(&read(p)?).into_owned();
        syms = SymbolTable::parse(&text).map_err(|source| ConfigError::Asm { path: p.display().to_string(), source })?;
    }
    if image.len() > crate::bus::ROM_SIZE as usize {
        return invalid(format!("firmware image is {} bytes, ROM holds {}", image.len(), crate::bus::ROM_SIZE));
    }
    cfg.apply_symbols(&syms);
    if let Some(mode) = mode {
        cfg.machine.mode = mode;
    }
    Ok(LoadedTarget { image, config: cfg, symbols: syms })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mode": "stateful",
        "error_addresses": [],
        "peripherals": ["intc", "uart0"],
        "injectors": [
            { "kind": "uart_byte", "peripheral": "uart0", "period": 100,
              "trigger": { "offset": 0, "access": "write" } }
        ],
        "prng_seed": 7
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = CampaignConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.machine.ram_size, 65536);
        assert_eq!(c.machine.max_instructions, 1_000_000);
        assert_eq!(c.machine.timing, Timing::default());
        assert_eq!(c.prng_seed, 7);
        let inj = c.machine.injectors[0];
        assert_eq!(inj.trigger, TriggerRule::new(PeripheralId::Uart0, 0, AccessKind::Write));
    }

    #[test]
    fn hex_strings_accepted() {
        let text = MINIMAL.replace(r#""error_addresses": []"#, r#""error_addresses": ["0x100", 516], "exit_address": "0x4C""#);
        let c = CampaignConfig::from_json(&text).unwrap();
        assert_eq!(c.machine.error_addresses, vec![0x100, 516]);
        assert_eq!(c.machine.exit_address, Some(0x4C));
    }

    #[test]
    fn missing_key_rejected() {
        let text = MINIMAL.replace(r#""prng_seed": 7"#, r#""ram_size": 4096"#);
        assert!(matches!(CampaignConfig::from_json(&text), Err(ConfigError::Json(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace(r#""prng_seed": 7"#, r#""prng_seed": 7, "speed": 3"#);
        assert!(CampaignConfig::from_json(&text).is_err());
        let text = MINIMAL.replace(r#""access": "write""#, r#""access": "write", "when": 1"#);
        assert!(CampaignConfig::from_json(&text).is_err());
    }

    #[test]
    fn semantic_errors() {
        let cases = [
            (r#""peripheral": "uart0", "period""#, r#""peripheral": "can0", "period""#),
            (r#""period": 100"#, r#""period": 0"#),
            (r#"["intc", "uart0"]"#, r#"["intc"]"#),
            (r#"["intc", "uart0"]"#, r#"["intc", "uart0", "uart0"]"#),
            (r#""offset": 0"#, r#""offset": "0x40""#),
            (r#""access": "write""#, r#""access": "write", "value_mask": 1"#),
        ];
        for (from, to) in cases {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(CampaignConfig::from_json(&text), Err(ConfigError::Invalid(_))), "{to}");
        }
    }

    #[test]
    fn symbols_applied() {
        let mut c = CampaignConfig::from_json(MINIMAL).unwrap();
        let mut syms = SymbolTable::default();
        syms.insert("exit", 0x80);
        syms.insert("assert_fail", 0x90);
        c.apply_symbols(&syms);
        c.apply_symbols(&syms);
        assert_eq!(c.machine.exit_address, Some(0x80));
        assert_eq!(c.machine.error_addresses, vec![0x90]);
    }
}
